use thiserror::Error;

/// Every failure the library can report.
///
/// [`Error::is_numerical`] splits them into precondition violations (bad
/// input, the caller can fix it) and numerical failures (the requested
/// accuracy cannot be delivered).
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("index {j} is below the start index {start}")]
    IndexBelowStart { j: u64, start: u64 },
    #[error("index {j} is past the last term {last} of a finite series")]
    IndexPastEnd { j: u64, last: u64 },
    #[error("domain error at j={j}: {what}")]
    DomainError { j: u64, what: String },
    #[error("no tail bound available for custom series without a bound rule")]
    NoBoundAvailable,
    #[error("no truncation index up to {cap} terms reaches eps={eps:e}")]
    CapExceeded { eps: f64, cap: u64 },
    #[error("phase b_j*|t| = {phase:e} at j={j} exceeds 2^53")]
    PhasePrecisionLoss { j: u64, phase: f64 },
    #[error("lambda must exceed 1, got {0}")]
    BadLambda(f64),
    #[error("kernel moment check failed: |m0|={m0:e}, |m1|={m1:e} (limit 1e-10)")]
    MomentCheckFailed { m0: f64, m1: f64 },
    #[error("kernel decay check failed: tail/max={ratio:e} (limit 1e-8); increase Z")]
    DecayCheckFailed { ratio: f64 },
    #[error("LambdaTooWide: b_{j}/b_{k} = {ratio} lies inside ]1/lambda, lambda[ with lambda={lambda}; use the gap method (--method gap)")]
    LambdaTooWide {
        k: u64,
        j: u64,
        ratio: f64,
        lambda: f64,
    },
    #[error("quadrature error estimate {estimate:e} exceeds tolerance {tol:e}")]
    QuadratureBudgetExceeded { estimate: f64, tol: f64 },
    #[error("window [{j0}, {j1}] too small: need j1 > j0 + 16")]
    WindowTooSmall { j0: u64, j1: u64 },
    #[error("not applicable: {0}")]
    NotApplicable(String),
    #[error("degenerate regression: {0}")]
    DegenerateRegression(String),
    #[error("out of range: {0}")]
    OutOfRange(String),
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("truncation precondition failed: {0}")]
    PreconditionTruncation(String),
}

impl Error {
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DomainError { .. }
                | Error::CapExceeded { .. }
                | Error::PhasePrecisionLoss { .. }
                | Error::MomentCheckFailed { .. }
                | Error::DecayCheckFailed { .. }
                | Error::QuadratureBudgetExceeded { .. }
                | Error::DegenerateRegression(_)
                | Error::DegenerateFit(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
