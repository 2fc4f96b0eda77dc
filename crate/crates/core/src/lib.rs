//! Lacunary Fourier series `f(t) = Σ a_j e^{i b_j t}`: certified partial
//! sums, single-coefficient extraction with band-limited kernels,
//! differentiability conditions, and Hölder/difference-quotient probes.

// `!(x > 0.0)` guards are used on purpose so that NaN is rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod conditions;
pub mod dd;
pub mod error;
pub mod microlocal;
pub mod par;
pub mod probe;
pub mod series;
pub mod sum;

pub use error::{Error, Result};
pub use series::{
    CustomRule, EvalResult, Family, PartialSum, SampleRow, SequenceSample, SeriesSpec, SumOrder,
    Truncation, Variant,
};
