//! Double-double arithmetic.
//!
//! A value is the unevaluated sum `hi + lo` with `|lo| <= ulp(hi)/2`, giving
//! roughly 32 significant digits. Used for frequencies, phase reduction and
//! the iterated-logarithm chain, where plain `f64` loses the digits that
//! matter.

use std::cmp::Ordering;
use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DoubleDouble {
    pub hi: f64,
    pub lo: f64,
}

#[inline(always)]
pub fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let e = (a - (s - bb)) + (b - bb);
    (s, e)
}

#[inline(always)]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let e = b - (s - a);
    (s, e)
}

#[inline(always)]
pub fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let e = a.mul_add(b, -p);
    (p, e)
}

impl DoubleDouble {
    pub const ZERO: Self = Self { hi: 0.0, lo: 0.0 };
    pub const ONE: Self = Self { hi: 1.0, lo: 0.0 };
    pub const PI: Self = Self {
        hi: std::f64::consts::PI,
        lo: 1.2246467991473532e-16,
    };
    pub const TWO_PI: Self = Self {
        hi: std::f64::consts::TAU,
        lo: 2.4492935982947064e-16,
    };
    pub const LN_2: Self = Self {
        hi: std::f64::consts::LN_2,
        lo: 2.3190468138462996e-17,
    };
    pub const E: Self = Self {
        hi: std::f64::consts::E,
        lo: 1.4456468917292502e-16,
    };

    #[inline]
    pub const fn from_f64(x: f64) -> Self {
        Self { hi: x, lo: 0.0 }
    }

    #[inline]
    pub fn new(hi: f64, lo: f64) -> Self {
        let (hi, lo) = two_sum(hi, lo);
        Self { hi, lo }
    }

    #[inline]
    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.hi.is_finite() && self.lo.is_finite()
    }

    #[inline]
    pub fn abs(self) -> Self {
        if self.hi < 0.0 {
            -self
        } else {
            self
        }
    }

    #[inline]
    pub fn add_f64(self, b: f64) -> Self {
        let (s, e) = two_sum(self.hi, b);
        let e = e + self.lo;
        let (hi, lo) = quick_two_sum(s, e);
        Self { hi, lo }
    }

    #[inline]
    pub fn mul_f64(self, b: f64) -> Self {
        let (p, e) = two_prod(self.hi, b);
        let e = self.lo.mul_add(b, e);
        let (hi, lo) = quick_two_sum(p, e);
        Self { hi, lo }
    }

    /// Exact product of two doubles.
    #[inline]
    pub fn prod(a: f64, b: f64) -> Self {
        let (hi, lo) = two_prod(a, b);
        Self { hi, lo }
    }

    pub fn recip(self) -> Self {
        Self::ONE / self
    }

    pub fn powi(self, n: i64) -> Self {
        if n < 0 {
            return self.powi(-n).recip();
        }
        let mut base = self;
        let mut e = n as u64;
        let mut acc = Self::ONE;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * base;
            }
            e >>= 1;
            if e > 0 {
                base = base * base;
            }
        }
        acc
    }

    /// `self * 2^k`, exact.
    #[inline]
    pub fn ldexp(self, k: i32) -> Self {
        let s = 2f64.powi(k);
        Self {
            hi: self.hi * s,
            lo: self.lo * s,
        }
    }

    /// `exp(x) - 1`, accurate for small `x`.
    fn expm1_reduced(r: Self) -> Self {
        // |r| <= ln2/2 / 1024, 11 terms reach far below the dd epsilon
        let mut term = r;
        let mut sum = r;
        for i in 2..=12u32 {
            term = (term * r) / Self::from_f64(i as f64);
            sum = sum + term;
            if term.hi.abs() < 1e-36 {
                break;
            }
        }
        sum
    }

    /// `exp(x) - 1` with relative accuracy for small `x`.
    pub fn exp_m1(self) -> Self {
        if self.hi.abs() >= 0.5 {
            return self.exp() - Self::ONE;
        }
        let mut s = Self::expm1_reduced(self.ldexp(-10));
        for _ in 0..10 {
            s = s.ldexp(1) + s * s;
        }
        s
    }

    pub fn exp(self) -> Self {
        if self.hi > 709.78 {
            return Self::from_f64(f64::INFINITY);
        }
        if self.hi < -745.2 {
            return Self::ZERO;
        }
        let k = (self.hi / std::f64::consts::LN_2).round();
        let r = (self - Self::LN_2.mul_f64(k)).ldexp(-10);
        let mut s = Self::expm1_reduced(r);
        for _ in 0..10 {
            // e^{2r} - 1 = 2s + s^2
            s = s.ldexp(1) + s * s;
        }
        (s + Self::ONE).ldexp(k as i32)
    }

    /// Natural logarithm: split off the binary exponent, then one Newton
    /// step on `exp` seeded by `f64::ln` (or `ln_1p` near 1, where `x - 1` is
    /// formed exactly). The seed error is at most ~1e-16, so the step lands
    /// below the double-double epsilon.
    pub fn ln(self) -> Self {
        if self.hi <= 0.0 || !self.is_finite() {
            return Self::from_f64(self.hi.ln());
        }
        let e = self.hi.log2().round() as i32;
        let m = self.ldexp(-e);
        let delta = m - Self::ONE;
        let y0 = if delta.hi.abs() < 0.5 {
            delta.to_f64().ln_1p()
        } else {
            m.hi.ln()
        };
        let y0 = Self::from_f64(y0);
        // m e^{-y0} - 1 = m (e^{-y0} - 1) + (m - 1), exact in relative terms
        let correction = m * (-y0).exp_m1() + delta;
        Self::LN_2.mul_f64(e as f64) + (y0 + correction)
    }

    /// Reduce to `[-pi, pi]` modulo 2π.
    pub fn rem_two_pi(self) -> Self {
        let k = (self.hi / std::f64::consts::TAU).round();
        if k == 0.0 {
            return self;
        }
        self - Self::TWO_PI.mul_f64(k)
    }

    /// `(cos x, sin x)` after reduction modulo 2π.
    pub fn cos_sin(self) -> (f64, f64) {
        let r = self.rem_two_pi();
        let (s, c) = r.hi.sin_cos();
        (c - s * r.lo, s + c * r.lo)
    }
}

impl From<f64> for DoubleDouble {
    fn from(x: f64) -> Self {
        Self::from_f64(x)
    }
}

impl Neg for DoubleDouble {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Add for DoubleDouble {
    type Output = Self;
    #[inline]
    fn add(self, b: Self) -> Self {
        let (s1, s2) = two_sum(self.hi, b.hi);
        let (t1, t2) = two_sum(self.lo, b.lo);
        let s2 = s2 + t1;
        let (s1, s2) = quick_two_sum(s1, s2);
        let s2 = s2 + t2;
        let (hi, lo) = quick_two_sum(s1, s2);
        Self { hi, lo }
    }
}

impl Sub for DoubleDouble {
    type Output = Self;
    #[inline]
    fn sub(self, b: Self) -> Self {
        self + (-b)
    }
}

impl Mul for DoubleDouble {
    type Output = Self;
    #[inline]
    fn mul(self, b: Self) -> Self {
        let (p, e) = two_prod(self.hi, b.hi);
        let e = e + (self.hi * b.lo + self.lo * b.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Self { hi, lo }
    }
}

impl Div for DoubleDouble {
    type Output = Self;
    fn div(self, b: Self) -> Self {
        let q1 = self.hi / b.hi;
        if !q1.is_finite() {
            return Self::from_f64(q1);
        }
        let r = self - b.mul_f64(q1);
        let q2 = r.hi / b.hi;
        let r = r - b.mul_f64(q2);
        let q3 = r.hi / b.hi;
        let (q1, q2) = quick_two_sum(q1, q2);
        Self { hi: q1, lo: q2 }.add_f64(q3)
    }
}

impl PartialOrd for DoubleDouble {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match self.hi.partial_cmp(&other.hi) {
            Some(Ordering::Equal) => self.lo.partial_cmp(&other.lo),
            ord => ord,
        }
    }
}
