//! Amplitude/frequency sequences and certified partial sums of
//! `f(t) = Σ a_j e^{i b_j t}`.
//!
//! Amplitudes are carried as `(log|a_j|, arg a_j)` so factorial and deep-tail
//! terms never overflow; frequencies are double-doubles (with `log b_j` kept
//! alongside for indices where `b_j` leaves the `f64` range).

use crate::dd::DoubleDouble as DD;
use crate::error::{Error, Result};
use crate::par;
use crate::sum::ComplexSum;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;
use std::fmt;
use std::sync::Arc;

/// Phases at or above this magnitude cannot be reduced reliably from an
/// `f64` argument.
pub const PHASE_LIMIT: f64 = 9007199254740992.0; // 2^53

/// Default sampling accuracy.
pub const DEFAULT_EPS: f64 = 1e-8;

/// Default cap on the number of terms a truncation search may use.
pub const DEFAULT_TERM_CAP: u64 = 10_000_000;

const CHUNK: usize = 4096;

/// e, e^e, e^{e^e} as double-doubles: the thresholds E_1, E_2, E_3.
const E_N: [DD; 3] = [
    DD::E,
    DD {
        hi: 15.154262241479264,
        lo: -7.179620621124426e-17,
    },
    DD {
        hi: 3814279.1047602207,
        lo: -1.477812531994809e-10,
    },
];

pub type AmpFn = dyn Fn(u64) -> (f64, f64) + Send + Sync;
pub type FreqFn = dyn Fn(u64) -> f64 + Send + Sync;
pub type TailFn = dyn Fn(u64) -> f64 + Send + Sync;

/// User-supplied term rule. `amp(j)` returns `(log|a_j|, arg a_j)`.
#[derive(Clone)]
pub struct CustomRule {
    pub name: String,
    pub start: u64,
    pub last: Option<u64>,
    amp: Arc<AmpFn>,
    freq: Arc<FreqFn>,
    tail: Option<Arc<TailFn>>,
}

impl CustomRule {
    pub fn new(
        start: u64,
        amp: impl Fn(u64) -> (f64, f64) + Send + Sync + 'static,
        freq: impl Fn(u64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: "custom".into(),
            start,
            last: None,
            amp: Arc::new(amp),
            freq: Arc::new(freq),
            tail: None,
        }
    }

    /// Attaches a rule `N ↦ ε` with `Σ_{j>N} |a_j| ≤ ε`.
    pub fn with_tail(mut self, tail: impl Fn(u64) -> f64 + Send + Sync + 'static) -> Self {
        self.tail = Some(Arc::new(tail));
        self
    }

    pub fn with_last(mut self, last: u64) -> Self {
        self.last = Some(last);
        self
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Finite series `Σ_{j<n} amps[j] e^{i freqs[j] t}` starting at j=0,
    /// with the exact remaining sum as its tail rule.
    pub fn finite(amps: &[Complex64], freqs: &[f64]) -> Result<Self> {
        if amps.is_empty() || amps.len() != freqs.len() {
            return Err(Error::InvalidParameter(format!(
                "need equally many amplitudes and frequencies (got {} and {})",
                amps.len(),
                freqs.len()
            )));
        }
        let amps: Arc<Vec<Complex64>> = Arc::new(amps.to_vec());
        let freqs: Arc<Vec<f64>> = Arc::new(freqs.to_vec());
        let mut suffix = vec![0.0; amps.len() + 1];
        for j in (0..amps.len()).rev() {
            suffix[j] = suffix[j + 1] + amps[j].norm();
        }
        let last = amps.len() as u64 - 1;
        let (a, f) = (amps.clone(), freqs.clone());
        Ok(Self::new(
            0,
            move |j| {
                let z = a[j as usize];
                (z.norm().ln(), z.arg())
            },
            move |j| f[j as usize],
        )
        .with_last(last)
        .with_tail(move |n| suffix[((n + 1) as usize).min(suffix.len() - 1)]))
    }
}

impl fmt::Debug for CustomRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomRule")
            .field("name", &self.name)
            .field("start", &self.start)
            .field("last", &self.last)
            .field("has_tail", &self.tail.is_some())
            .finish()
    }
}

#[derive(Clone, Debug)]
pub enum Family {
    FTheta {
        theta: f64,
    },
    WeierstrassCos {
        a: f64,
        b: f64,
    },
    WeierstrassSin {
        a: f64,
        b: f64,
    },
    Darboux,
    GapExample {
        a: f64,
        p: f64,
    },
    Power {
        p: f64,
        q: f64,
    },
    Riemann,
    IteratedLog {
        n: u32,
        a: f64,
    },
    /// `Σ_{j≥2} e^{i t j² log^b j} / (j log^a j)`.
    LogPower {
        a: f64,
        b: f64,
    },
    Custom(CustomRule),
}

impl Family {
    pub fn name(&self) -> &str {
        match self {
            Family::FTheta { .. } => "f_theta",
            Family::WeierstrassCos { .. } => "weierstrass_cos",
            Family::WeierstrassSin { .. } => "weierstrass_sin",
            Family::Darboux => "darboux",
            Family::GapExample { .. } => "gap_example",
            Family::Power { .. } => "power",
            Family::Riemann => "riemann",
            Family::IteratedLog { .. } => "iterated_log",
            Family::LogPower { .. } => "log_power",
            Family::Custom(rule) => &rule.name,
        }
    }

    pub fn is_builtin(&self) -> bool {
        !matches!(self, Family::Custom(_))
    }

    fn default_variant(&self) -> Variant {
        match self {
            Family::WeierstrassCos { .. } => Variant::RealPart,
            Family::WeierstrassSin { .. } | Family::Darboux | Family::Riemann => Variant::ImagPart,
            _ => Variant::Complex,
        }
    }

    fn start_index(&self) -> u64 {
        match self {
            Family::Power { .. } | Family::Riemann => 1,
            Family::LogPower { .. } => 2,
            Family::IteratedLog { n, .. } => iterated_log_start(*n),
            Family::Custom(rule) => rule.start,
            _ => 0,
        }
    }
}

/// First summed index of `iterated_log(n)`: `floor(E_{n-1}) + 1`.
pub fn iterated_log_start(n: u32) -> u64 {
    match n {
        2..=4 => E_N[n as usize - 2].hi.floor() as u64 + 1,
        _ => 0,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Complex,
    RealPart,
    ImagPart,
}

impl Variant {
    /// Restricts a complex value to the selected part: `(Re z, 0)` or
    /// `(0, Im z)`.
    pub fn project(self, z: Complex64) -> Complex64 {
        match self {
            Variant::Complex => z,
            Variant::RealPart => Complex64::new(z.re, 0.0),
            Variant::ImagPart => Complex64::new(0.0, z.im),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SumOrder {
    Forward,
    Reverse,
}

/// How many terms to sum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Truncation {
    /// Smallest N whose tail bound is at most eps.
    Eps(f64),
    /// Exactly this many terms from the start index.
    Terms(u64),
    /// As many terms as keep every phase `b_j |t|` below 2^53 over the
    /// evaluation range, at most `max_terms`.
    PhaseLimited { max_terms: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceSample {
    pub j: u64,
    pub log_amp: f64,
    pub phase: f64,
    pub b: f64,
    pub delta_b: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub value: Complex64,
    pub terms_used: u64,
    pub tail_bound: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub t: f64,
    pub re: f64,
    pub im: f64,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct RawTerm {
    pub log_amp: f64,
    pub phase: f64,
    pub b: DD,
    pub log_b: f64,
}

#[derive(Clone, Debug)]
pub struct SeriesSpec {
    family: Family,
    variant: Variant,
    start: u64,
    scale: Complex64,
    term_cap: u64,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

fn dd_pow(base: DD, q: f64) -> DD {
    if q.fract() == 0.0 && q.abs() <= 1024.0 {
        base.powi(q as i64)
    } else {
        (base.ln().mul_f64(q)).exp()
    }
}

fn dd_factorial(m: u64) -> DD {
    if m > 170 {
        return DD::from_f64(f64::INFINITY);
    }
    (2..=m).fold(DD::ONE, |acc, i| acc.mul_f64(i as f64))
}

impl SeriesSpec {
    /// Validates `family` and builds the spec. With `allow_out_of_range`
    /// the soft parameter ranges (θ ≤ 1, b ≥ a) are not enforced; the
    /// summability and monotonicity requirements always are.
    pub fn new(family: Family, allow_out_of_range: bool) -> Result<Self> {
        let soft = |ok: bool, msg: &str| -> Result<()> {
            if ok || allow_out_of_range {
                Ok(())
            } else {
                Err(invalid(format!(
                    "{msg} (pass the out-of-range override to explore)"
                )))
            }
        };
        let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        match &family {
            Family::FTheta { theta } => {
                if !(finite(&[*theta]) && *theta > 0.0) {
                    return Err(invalid("f_theta requires theta > 0"));
                }
                soft(*theta <= 1.0, "f_theta requires theta in ]0, 1]")?;
            }
            Family::WeierstrassCos { a, b } | Family::WeierstrassSin { a, b } => {
                if !(finite(&[*a, *b]) && *a > 1.0 && *b > 1.0) {
                    return Err(invalid("weierstrass requires a > 1 and b > 1"));
                }
                soft(b >= a, "weierstrass requires b >= a > 1")?;
            }
            Family::GapExample { a, p } => {
                if !(finite(&[*a, *p]) && *a > 1.0 && *p > 0.0) {
                    return Err(invalid("gap_example requires a > 1 and p > 0"));
                }
                if 1.0 + a.powf(-p) >= a * a {
                    return Err(invalid("gap_example requires 1 + a^-p < a^2"));
                }
            }
            Family::Power { p, q } => {
                if !(finite(&[*p, *q]) && *p > 1.0 && *q > 0.0) {
                    return Err(invalid("power requires p > 1 and q > 0"));
                }
            }
            Family::IteratedLog { n, a } => {
                if !(2..=4).contains(n) {
                    return Err(invalid("iterated_log supports n in {2, 3, 4}"));
                }
                if !(a.is_finite() && *a > 1.0) {
                    return Err(invalid("iterated_log requires a > 1"));
                }
            }
            Family::LogPower { a, b } => {
                if !(finite(&[*a, *b]) && *a > 1.0) {
                    return Err(invalid("log_power requires a > 1"));
                }
                soft(b >= a, "log_power requires b >= a > 1")?;
            }
            Family::Darboux | Family::Riemann | Family::Custom(_) => {}
        }
        let spec = Self {
            variant: family.default_variant(),
            start: family.start_index(),
            family,
            scale: Complex64::new(1.0, 0.0),
            term_cap: DEFAULT_TERM_CAP,
        };
        spec.spot_check()?;
        Ok(spec)
    }

    pub fn f_theta(theta: f64) -> Result<Self> {
        Self::new(Family::FTheta { theta }, false)
    }
    pub fn weierstrass_cos(a: f64, b: f64) -> Result<Self> {
        Self::new(Family::WeierstrassCos { a, b }, false)
    }
    pub fn weierstrass_sin(a: f64, b: f64) -> Result<Self> {
        Self::new(Family::WeierstrassSin { a, b }, false)
    }
    pub fn darboux() -> Self {
        Self::new(Family::Darboux, false).expect("darboux is parameter-free")
    }
    pub fn gap_example(a: f64, p: f64) -> Result<Self> {
        Self::new(Family::GapExample { a, p }, false)
    }
    pub fn power(p: f64, q: f64) -> Result<Self> {
        Self::new(Family::Power { p, q }, false)
    }
    pub fn riemann() -> Self {
        Self::new(Family::Riemann, false).expect("riemann is parameter-free")
    }
    pub fn iterated_log(n: u32, a: f64) -> Result<Self> {
        Self::new(Family::IteratedLog { n, a }, false)
    }
    pub fn log_power(a: f64, b: f64) -> Result<Self> {
        Self::new(Family::LogPower { a, b }, false)
    }
    pub fn custom(rule: CustomRule) -> Result<Self> {
        Self::new(Family::Custom(rule), false)
    }
    pub fn custom_finite(amps: &[Complex64], freqs: &[f64]) -> Result<Self> {
        Self::custom(CustomRule::finite(amps, freqs)?)
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    /// Multiplies every amplitude by `c`.
    pub fn scaled(mut self, c: Complex64) -> Result<Self> {
        if !(c.norm() > 0.0 && c.norm().is_finite()) {
            return Err(invalid("scale must be finite and nonzero"));
        }
        self.scale *= c;
        Ok(self)
    }

    pub fn with_term_cap(mut self, cap: u64) -> Self {
        self.term_cap = cap.max(1);
        self
    }

    pub fn family(&self) -> &Family {
        &self.family
    }
    pub fn variant(&self) -> Variant {
        self.variant
    }
    pub fn start_index(&self) -> u64 {
        self.start
    }
    pub fn scale(&self) -> Complex64 {
        self.scale
    }
    pub fn term_cap(&self) -> u64 {
        self.term_cap
    }

    /// Last index of a finite series.
    pub fn last_index(&self) -> Option<u64> {
        match &self.family {
            Family::Custom(rule) => rule.last,
            _ => None,
        }
    }

    fn spot_check(&self) -> Result<()> {
        let end = match self.last_index() {
            Some(last) => last.min(self.start + 64),
            None => self.start + 64,
        };
        let mut prev = self.raw(self.start);
        if !(prev.b.hi > 0.0) {
            return Err(Error::DomainError {
                j: self.start,
                what: "b_j must be positive".into(),
            });
        }
        for j in self.start + 1..=end {
            let cur = self.raw(j);
            let increasing = if cur.b.is_finite() && prev.b.is_finite() {
                cur.b > prev.b
            } else {
                cur.log_b > prev.log_b
            };
            if !increasing {
                return Err(Error::DomainError {
                    j,
                    what: "b_j must be strictly increasing".into(),
                });
            }
            prev = cur;
        }
        if self.family.is_builtin() {
            let eps = self.tail_bound(self.start)?;
            if !eps.is_finite() {
                return Err(invalid("amplitudes are not summable"));
            }
        }
        Ok(())
    }

    /// Unchecked term data at index `j` (scale included).
    pub(crate) fn raw(&self, j: u64) -> RawTerm {
        let jf = j as f64;
        let (log_amp, phase, b, log_b) = match &self.family {
            Family::FTheta { theta } => {
                let b = if j <= 1023 {
                    DD::ONE.ldexp(j as i32)
                } else {
                    DD::from_f64(f64::INFINITY)
                };
                (
                    -jf * theta * std::f64::consts::LN_2,
                    0.0,
                    b,
                    jf * std::f64::consts::LN_2,
                )
            }
            Family::WeierstrassCos { a, b } | Family::WeierstrassSin { a, b } => {
                let lb = jf * b.ln();
                let bd = if lb < 709.0 {
                    DD::from_f64(*b).powi(j as i64)
                } else {
                    DD::from_f64(f64::INFINITY)
                };
                (-jf * a.ln(), 0.0, bd, lb)
            }
            Family::Darboux => {
                // log b_j = log j! + log(j+1) keeps |a_j| b_j = j+1 exact
                let lf = ln_factorial(j);
                (-lf, 0.0, dd_factorial(j + 1), lf + ((j + 1) as f64).ln())
            }
            Family::GapExample { a, p } => {
                let m2 = (j / 2) * 2;
                let la = a.ln();
                let mut lb = m2 as f64 * la;
                let mut bd = if lb < 709.0 {
                    DD::from_f64(*a).powi(m2 as i64)
                } else {
                    DD::from_f64(f64::INFINITY)
                };
                if j % 2 == 1 {
                    let r = dd_pow(DD::from_f64(*a), -p);
                    bd = bd * (DD::ONE + r);
                    lb += r.to_f64().ln_1p();
                }
                (-jf * la, 0.0, bd, lb)
            }
            Family::Power { p, q } => {
                let lj = jf.ln();
                (-p * lj, 0.0, dd_pow(DD::from_f64(jf), *q), q * lj)
            }
            Family::Riemann => {
                let lj = jf.ln();
                (
                    -2.0 * lj,
                    0.0,
                    DD::PI.mul_f64(jf * jf),
                    std::f64::consts::PI.ln() + 2.0 * lj,
                )
            }
            Family::IteratedLog { n, a } => {
                // log b_j = 2 Log_1 j + Log_2 j + ... + Log_n j + a log Log_n j
                let mut l = DD::from_f64(jf).ln();
                let l1 = l;
                let mut acc = l1.ldexp(1);
                for _ in 1..*n {
                    l = l.ln();
                    acc = acc + l;
                }
                let log_b = acc + l.ln().mul_f64(*a);
                let log_amp = l1 - log_b;
                (log_amp.to_f64(), 0.0, log_b.exp(), log_b.to_f64())
            }
            Family::LogPower { a, b } => {
                let lj = DD::from_f64(jf).ln();
                let llj = lj.ln();
                let lb = DD::from_f64(jf * jf).ln() + llj.mul_f64(*b);
                let bd = DD::from_f64(jf * jf) * llj.mul_f64(*b).exp();
                let la = -(lj + llj.mul_f64(*a));
                (la.to_f64(), 0.0, bd, lb.to_f64())
            }
            Family::Custom(rule) => {
                let (la, ph) = (rule.amp)(j);
                let b = (rule.freq)(j);
                (la, ph, DD::from_f64(b), b.ln())
            }
        };
        RawTerm {
            log_amp: log_amp + self.scale.norm().ln(),
            phase: phase + self.scale.arg(),
            b,
            log_b,
        }
    }

    fn check_index(&self, j: u64) -> Result<()> {
        if j < self.start {
            return Err(Error::IndexBelowStart {
                j,
                start: self.start,
            });
        }
        if let Some(last) = self.last_index() {
            if j > last {
                return Err(Error::IndexPastEnd { j, last });
            }
        }
        Ok(())
    }

    /// `a_j` as a complex number.
    pub fn amplitude(&self, j: u64) -> Result<Complex64> {
        self.check_index(j)?;
        let r = self.raw(j);
        Ok(Complex64::from_polar(r.log_amp.exp(), r.phase))
    }

    /// `b_j` in double-double precision (infinite past the `f64` range).
    pub fn frequency_dd(&self, j: u64) -> Result<DD> {
        self.check_index(j)?;
        Ok(self.raw(j).b)
    }

    /// `log b_j`, finite even where `b_j` overflows.
    pub fn log_frequency(&self, j: u64) -> Result<f64> {
        self.check_index(j)?;
        Ok(self.raw(j).log_b)
    }

    /// `log |a_j|`.
    pub fn log_amplitude(&self, j: u64) -> Result<f64> {
        self.check_index(j)?;
        Ok(self.raw(j).log_amp)
    }

    /// `(log(b_j − b_{j−1}), log(b_{j+1} − b_j))`, the right side absent at
    /// the last term of a finite series.
    pub(crate) fn log_gaps(&self, j: u64) -> Result<(f64, Option<f64>)> {
        self.check_index(j)?;
        let cur = self.raw(j);
        let left = if j == self.start {
            cur.log_b
        } else {
            log_diff(&cur, &self.raw(j - 1))
        };
        let right = match self.last_index() {
            Some(last) if j == last => None,
            _ => Some(log_diff(&self.raw(j + 1), &cur)),
        };
        for (side, v) in [("left", Some(left)), ("right", right)] {
            if let Some(v) = v {
                if v.is_nan() || v == f64::NEG_INFINITY {
                    return Err(Error::DomainError {
                        j,
                        what: format!("{side} frequency gap is not positive"),
                    });
                }
            }
        }
        Ok((left, right))
    }

    /// `log Δb_j`.
    pub fn log_delta_b(&self, j: u64) -> Result<f64> {
        let (l, r) = self.log_gaps(j)?;
        Ok(r.map_or(l, |r| l.min(r)))
    }

    pub fn term(&self, j: u64) -> Result<SequenceSample> {
        self.check_index(j)?;
        let cur = self.raw(j);
        if !(cur.b.is_finite() && cur.b.hi > 0.0) {
            return Err(Error::DomainError {
                j,
                what: format!("b_j = {} is not finite and positive", cur.b.hi),
            });
        }
        let prev = if j == self.start {
            DD::ZERO
        } else {
            self.raw(j - 1).b
        };
        let left = (cur.b - prev).to_f64();
        let next = match self.last_index() {
            Some(last) if j == last => None,
            _ => Some(self.raw(j + 1).b),
        };
        let delta_b = match next {
            Some(nb) if nb.is_finite() => left.min((nb - cur.b).to_f64()),
            Some(_) => left,
            None => left,
        };
        if !(delta_b > 0.0) {
            return Err(Error::DomainError {
                j,
                what: "frequencies are not strictly increasing".into(),
            });
        }
        Ok(SequenceSample {
            j,
            log_amp: cur.log_amp,
            phase: cur.phase,
            b: cur.b.to_f64(),
            delta_b,
        })
    }

    /// ε with `Σ_{j>N} |a_j| ≤ ε`.
    pub fn tail_bound(&self, n: u64) -> Result<f64> {
        if n < self.start {
            return Err(Error::IndexBelowStart {
                j: n,
                start: self.start,
            });
        }
        let nf = n as f64;
        let eps = match &self.family {
            Family::FTheta { theta } => (-(nf + 1.0) * theta).exp2() / (1.0 - (-theta).exp2()),
            Family::WeierstrassCos { a, .. }
            | Family::WeierstrassSin { a, .. }
            | Family::GapExample { a, .. } => a.powf(-(nf + 1.0)) / (1.0 - 1.0 / a),
            // Σ_{j>N} 1/j! ≤ 2/(N+1)!
            Family::Darboux => (std::f64::consts::LN_2 - ln_factorial(n + 1)).exp(),
            Family::Power { p, .. } => nf.powf(1.0 - p) / (p - 1.0),
            Family::Riemann => 1.0 / nf,
            Family::IteratedLog { n: depth, a } => {
                let mut l = DD::from_f64(nf);
                for _ in 0..*depth {
                    l = l.ln();
                }
                l.to_f64().powf(1.0 - a) / (a - 1.0)
            }
            Family::LogPower { a, .. } => nf.ln().powf(1.0 - a) / (a - 1.0),
            Family::Custom(rule) => match (&rule.tail, rule.last) {
                (_, Some(last)) if n >= last => 0.0,
                (Some(tail), _) => tail(n),
                (None, _) => return Err(Error::NoBoundAvailable),
            },
        };
        Ok(eps * self.scale.norm())
    }

    fn last_allowed(&self) -> u64 {
        let capped = self.start.saturating_add(self.term_cap - 1);
        self.last_index().map_or(capped, |l| l.min(capped))
    }

    /// Smallest N with `tail_bound(N) ≤ eps`, within the term cap.
    pub fn truncation_index(&self, eps: f64) -> Result<u64> {
        if !(eps > 0.0) {
            return Err(invalid("eps must be positive"));
        }
        let ok = |n: u64| -> Result<bool> { Ok(self.tail_bound(n)? <= eps) };
        if ok(self.start)? {
            return Ok(self.start);
        }
        let cap = self.last_allowed();
        let mut lo = self.start;
        let mut step = 1u64;
        let hi = loop {
            let cand = self.start.saturating_add(step);
            if cand >= cap {
                if !ok(cap)? {
                    return Err(Error::CapExceeded {
                        eps,
                        cap: self.term_cap,
                    });
                }
                break cap;
            }
            if ok(cand)? {
                break cand;
            }
            lo = cand;
            step *= 2;
        };
        let (mut lo, mut hi) = (lo, hi);
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if ok(mid)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }

    /// Largest N ≤ start + max_terms − 1 with `b_N · t_abs < 2^53`.
    pub fn phase_limited_index(&self, t_abs: f64, max_terms: u64) -> Result<u64> {
        let within = |j: u64| self.raw(j).log_b + t_abs.ln() < PHASE_LIMIT.ln();
        if max_terms == 0 {
            return Err(invalid("max_terms must be at least 1"));
        }
        if !within(self.start) {
            return Err(Error::PhasePrecisionLoss {
                j: self.start,
                phase: self.raw(self.start).log_b.exp() * t_abs,
            });
        }
        let cap = self
            .last_allowed()
            .min(self.start.saturating_add(max_terms - 1));
        if within(cap) {
            return Ok(cap);
        }
        let (mut lo, mut hi) = (self.start, cap);
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if within(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(lo)
    }

    /// Resolves a truncation rule to the last summed index for evaluation
    /// at `|t| ≤ t_abs`.
    pub fn resolve(&self, trunc: Truncation, t_abs: f64) -> Result<u64> {
        match trunc {
            Truncation::Eps(eps) => self.truncation_index(eps),
            Truncation::Terms(0) => Err(invalid("need at least one term")),
            Truncation::Terms(n) => {
                let last = self.start + n - 1;
                match self.last_index() {
                    Some(l) if last > l => Ok(l),
                    _ => Ok(last),
                }
            }
            Truncation::PhaseLimited { max_terms } => self.phase_limited_index(t_abs, max_terms),
        }
    }

    /// Precomputes terms `start_index..=n` for repeated evaluation.
    pub fn partial_sum(&self, n: u64) -> Result<PartialSum> {
        self.partial_sum_from(self.start, n)
    }

    /// Precomputes terms `from..=n`.
    pub fn partial_sum_from(&self, from: u64, n: u64) -> Result<PartialSum> {
        self.check_index(from)?;
        if n < self.start {
            return Err(Error::IndexBelowStart {
                j: n,
                start: self.start,
            });
        }
        let n = self.last_index().map_or(n, |l| n.min(l));
        let count = if n >= from {
            (n - from + 1) as usize
        } else {
            0
        };
        let terms = par::map_indices(count, |i| {
            let r = self.raw(from + i as u64);
            (Complex64::from_polar(r.log_amp.exp(), r.phase), r.b)
        });
        for (i, (a, b)) in terms.iter().enumerate() {
            if !(b.is_finite() && b.hi > 0.0) || !a.is_finite() {
                return Err(Error::DomainError {
                    j: from + i as u64,
                    what: "term is not finite".into(),
                });
            }
        }
        Ok(PartialSum {
            from,
            terms,
            variant: self.variant,
            tail_bound: self.tail_bound(n)?,
        })
    }

    pub fn eval_partial(&self, t: f64, n: u64) -> Result<EvalResult> {
        self.eval_partial_ordered(t, n, SumOrder::Forward)
    }

    pub fn eval_partial_ordered(&self, t: f64, n: u64, order: SumOrder) -> Result<EvalResult> {
        let ps = self.partial_sum(n)?;
        Ok(EvalResult {
            value: ps.eval_par(t, order)?,
            terms_used: ps.len() as u64,
            tail_bound: ps.tail_bound,
        })
    }

    /// `points` equispaced rows on `[t0, t1]`, both ends included.
    pub fn sample(
        &self,
        t0: f64,
        t1: f64,
        points: usize,
        trunc: Truncation,
    ) -> Result<Vec<SampleRow>> {
        check_grid(t0, t1, points)?;
        let n = self.resolve(trunc, t0.abs().max(t1.abs()))?;
        self.partial_sum(n)?.sample(t0, t1, points)
    }
}

fn log_diff(upper: &RawTerm, lower: &RawTerm) -> f64 {
    if upper.b.is_finite() && lower.b.is_finite() {
        (upper.b - lower.b).to_f64().ln()
    } else {
        upper.log_b + (-(lower.log_b - upper.log_b).exp_m1()).ln()
    }
}

pub fn check_grid(t0: f64, t1: f64, points: usize) -> Result<()> {
    if !(t0.is_finite() && t1.is_finite() && t0 < t1) {
        return Err(invalid("need finite t0 < t1"));
    }
    if points < 2 {
        return Err(invalid("need at least 2 points"));
    }
    Ok(())
}

/// Node `i` of `points` equispaced nodes spanning `[t0, t1]`.
pub fn grid_node(t0: f64, t1: f64, points: usize, i: usize) -> f64 {
    if i + 1 == points {
        t1
    } else {
        t0 + (t1 - t0) * (i as f64 / (points - 1) as f64)
    }
}

/// Tabulated terms of a partial sum; evaluation costs one phase reduction
/// and one `sin_cos` per term.
#[derive(Clone, Debug)]
pub struct PartialSum {
    from: u64,
    terms: Vec<(Complex64, DD)>,
    variant: Variant,
    tail_bound: f64,
}

impl PartialSum {
    pub fn len(&self) -> usize {
        self.terms.len()
    }
    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
    pub fn first_index(&self) -> u64 {
        self.from
    }
    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }
    pub fn variant(&self) -> Variant {
        self.variant
    }

    fn check_phase(&self, t: f64) -> Result<()> {
        if let Some((_, b)) = self.terms.last() {
            let phase = b.hi * t.abs();
            if !(phase < PHASE_LIMIT) {
                return Err(Error::PhasePrecisionLoss {
                    j: self.from + self.terms.len() as u64 - 1,
                    phase,
                });
            }
        }
        Ok(())
    }

    fn chunk_sum(&self, range: std::ops::Range<usize>, t: f64, order: SumOrder) -> ComplexSum {
        let mut acc = ComplexSum::default();
        let mut add = |(a, b): &(Complex64, DD)| {
            let (c, s) = b.mul_f64(t).cos_sin();
            acc.add(a * Complex64::new(c, s));
        };
        match order {
            SumOrder::Forward => self.terms[range].iter().for_each(&mut add),
            SumOrder::Reverse => self.terms[range].iter().rev().for_each(&mut add),
        }
        acc
    }

    fn combine(parts: Vec<ComplexSum>, order: SumOrder) -> Complex64 {
        let mut total = ComplexSum::default();
        match order {
            SumOrder::Forward => parts.iter().for_each(|p| total.merge(p)),
            SumOrder::Reverse => parts.iter().rev().for_each(|p| total.merge(p)),
        }
        total.value()
    }

    /// Complex sum, before the variant projection.
    pub fn eval_raw(&self, t: f64, order: SumOrder) -> Result<Complex64> {
        self.check_phase(t)?;
        let n = self.terms.len();
        let parts = (0..n.div_ceil(CHUNK))
            .map(|c| self.chunk_sum(c * CHUNK..((c + 1) * CHUNK).min(n), t, order))
            .collect();
        Ok(Self::combine(parts, order))
    }

    /// Value at `t` on the calling thread.
    pub fn eval(&self, t: f64, order: SumOrder) -> Result<Complex64> {
        Ok(self.variant.project(self.eval_raw(t, order)?))
    }

    /// Value at `t`, chunks spread over the thread pool. Bitwise equal to
    /// [`PartialSum::eval`].
    pub fn eval_par(&self, t: f64, order: SumOrder) -> Result<Complex64> {
        self.check_phase(t)?;
        let parts = par::map_chunks(self.terms.len(), CHUNK, |r| self.chunk_sum(r, t, order));
        Ok(self.variant.project(Self::combine(parts, order)))
    }

    pub fn eval_many(&self, ts: &[f64]) -> Result<Vec<Complex64>> {
        par::map_indices(ts.len(), |i| self.eval(ts[i], SumOrder::Forward))
            .into_iter()
            .collect()
    }

    pub fn sample(&self, t0: f64, t1: f64, points: usize) -> Result<Vec<SampleRow>> {
        check_grid(t0, t1, points)?;
        let ts: Vec<f64> = (0..points).map(|i| grid_node(t0, t1, points, i)).collect();
        let values = self.eval_many(&ts)?;
        Ok(ts
            .iter()
            .zip(values)
            .map(|(&t, z)| SampleRow {
                t,
                re: z.re,
                im: z.im,
            })
            .collect())
    }
}
