use std::fmt;

/// Errors raised across the library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot} is {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("rank mismatch: expected {expected}, got {got}")]
    RankMismatch { expected: usize, got: usize },
    #[error("matrix is not symmetric (relative asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("malformed matrix: {0}")]
    Malformed(String),
    #[error("eigensolver failed to converge after {iterations} sweeps")]
    ConvergenceFailure { iterations: usize },
    #[error("gamma pole at index {index} (argument {argument})")]
    PoleError { index: usize, argument: f64 },
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("partition degree {degree} exceeds cap {cap}")]
    DegreeCapExceeded { degree: usize, cap: usize },
    #[error("zonal polynomial vanishes at the identity for {0}")]
    DegenerateNormalizer(String),
    #[error("argument outside convergence domain (spectral radius {spectral_radius})")]
    OutOfDomain { spectral_radius: f64 },
    #[error("series with {upper} upper and {lower} lower parameters diverges everywhere")]
    TooManyUpper { upper: usize, lower: usize },
    #[error(
        "series did not converge by degree {degree_used} (last layer relative {last_layer_rel:e})"
    )]
    NotConverged {
        degree_used: usize,
        last_layer_rel: f64,
    },
    #[error("series diverges at the identity (margins {})", Margins(.margins))]
    DivergentAtIdentity { margins: Vec<f64> },
    #[error("point is outside the support (0 < x < e)")]
    OutOfSupport,
    #[error("continued fraction chains not coupled after {iterations} iterations (gap {gap:e})")]
    NotCoupled { iterations: usize, gap: f64 },
    #[error("degenerate parameter-recovery system: {0}")]
    DegenerateSystem(String),
    #[error("parameter-recovery quadratic has complex roots (discriminant {discriminant:e})")]
    ComplexRoots { discriminant: f64 },
    #[error("invalid configuration: {0}")]
    ConfigError(String),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NotPositiveDefinite { .. } => "NotPositiveDefinite",
            Error::RankMismatch { .. } => "RankMismatch",
            Error::NotSymmetric { .. } => "NotSymmetric",
            Error::Malformed(_) => "Malformed",
            Error::ConvergenceFailure { .. } => "ConvergenceFailure",
            Error::PoleError { .. } => "PoleError",
            Error::DomainError(_) => "DomainError",
            Error::DegreeCapExceeded { .. } => "DegreeCapExceeded",
            Error::DegenerateNormalizer(_) => "DegenerateNormalizer",
            Error::OutOfDomain { .. } => "OutOfDomain",
            Error::TooManyUpper { .. } => "TooManyUpper",
            Error::NotConverged { .. } => "NotConverged",
            Error::DivergentAtIdentity { .. } => "DivergentAtIdentity",
            Error::OutOfSupport => "OutOfSupport",
            Error::NotCoupled { .. } => "NotCoupled",
            Error::DegenerateSystem(_) => "DegenerateSystem",
            Error::ComplexRoots { .. } => "ComplexRoots",
            Error::ConfigError(_) => "ConfigError",
        }
    }

    /// True for failures caused by numerical non-convergence rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::ConvergenceFailure { .. }
                | Error::NotConverged { .. }
                | Error::NotCoupled { .. }
        )
    }
}

struct Margins<'a>(&'a [f64]);

impl fmt::Display for Margins<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (k, m) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ", ")?;
            }
            write!(f, "k={}: {:.6}", k + 1, m)?;
        }
        write!(f, "]")
    }
}

pub type Result<T> = std::result::Result<T, Error>;
