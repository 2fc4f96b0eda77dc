//! Compensated summation.

use crate::dd::{two_sum, DoubleDouble};
use num_complex::Complex64;

/// Running sum kept as a double-double, so cancellation across millions of
/// terms costs nothing measurable.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    hi: f64,
    lo: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let (s, e) = two_sum(self.hi, x);
        self.hi = s;
        self.lo += e;
    }

    #[inline]
    pub fn add_dd(&mut self, x: DoubleDouble) {
        self.add(x.hi);
        self.lo += x.lo;
    }

    pub fn merge(&mut self, other: &Self) {
        self.add(other.hi);
        self.lo += other.lo;
    }

    pub fn value_dd(&self) -> DoubleDouble {
        DoubleDouble::new(self.hi, self.lo)
    }

    pub fn value(&self) -> f64 {
        self.hi + self.lo
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ComplexSum {
    pub re: CompensatedSum,
    pub im: CompensatedSum,
}

impl ComplexSum {
    #[inline]
    pub fn add(&mut self, z: Complex64) {
        self.re.add(z.re);
        self.im.add(z.im);
    }

    pub fn merge(&mut self, other: &Self) {
        self.re.merge(&other.re);
        self.im.merge(&other.im);
    }

    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re.value(), self.im.value())
    }
}

/// Sums `values` with compensation.
pub fn sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = CompensatedSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}
