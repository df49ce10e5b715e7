use thiserror::Error;

/// Everything that can go wrong inside the library.
///
/// Variants are grouped by how the CLI reports them: parameter and input
/// problems map to the validation exit code, numerical breakdowns to the
/// numerical one.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("alpha = {value} out of (1, 2]")]
    AlphaOutOfRange { value: f64 },

    #[error("hurst = {value} outside ({lower}, 1); violated bound: {bound}")]
    HurstOutOfRange {
        value: f64,
        lower: f64,
        bound: &'static str,
    },

    #[error("hurst = {value} exceeds conditioning limit {limit}: Gamma(1 - 2 theta) is too close to its pole")]
    IllConditioned { value: f64, limit: f64 },

    #[error("beta = {value} must be > 0")]
    BetaNonPositive { value: f64 },

    #[error("{what}: argument {value} outside domain {domain}")]
    Domain {
        what: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("quadrature did not converge: achieved abs error {achieved:e} against target {target:e}")]
    QuadratureNonConvergence { achieved: f64, target: f64 },

    #[error("covariance matrix not positive semidefinite: eigenvalue {eigenvalue:e} below floor {floor:e}")]
    NotPsd { eigenvalue: f64, floor: f64 },

    #[error("factorization failed after jitter escalation (pivot {pivot:e} at row {row}, condition estimate {condition:e})")]
    Factorization { row: usize, pivot: f64, condition: f64 },

    #[error("slab {slab}: {source}")]
    Slab { slab: u32, source: Box<Error> },

    #[error("non-finite sample drawn at path {path}")]
    NonFinite { path: usize },

    #[error("small-ball curve has no hits at any epsilon; increase epsilon or count")]
    EmptyCurve,

    #[error("rate fit needs at least {needed} usable curve points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
}

impl Error {
    /// True for errors caused by the caller's inputs rather than numerics.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::AlphaOutOfRange { .. }
            | Error::HurstOutOfRange { .. }
            | Error::IllConditioned { .. }
            | Error::BetaNonPositive { .. }
            | Error::Domain { .. }
            | Error::InvalidGrid(_)
            | Error::InvalidInput(_) => true,
            Error::Slab { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
