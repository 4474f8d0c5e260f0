use thiserror::Error;

/// Failures raised by the geometric operations.
///
/// Stage errors are captured verbatim in run reports, so every variant carries
/// enough context to locate the problem without re-running.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("gradient of the defining function vanishes (|grad rho| = {norm:.3e}) at {point:?}")]
    ZeroGradient { norm: f64, point: Vec<f64> },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("sampler starved: {obtained}/{requested} points after {attempts} attempts")]
    SamplerStarved {
        requested: usize,
        obtained: usize,
        attempts: usize,
    },

    #[error("chart query at radius {requested:.3e} exceeds chart radius {radius:.3e}")]
    ChartRadiusExceeded { radius: f64, requested: f64 },

    #[error("dual point lies at infinity of affine chart {chart}")]
    ChartInvalid { chart: usize },

    #[error("point lies on the base locus (distance {distance:.3e})")]
    OnBaseLocus { distance: f64 },

    #[error("pencil covectors are dependent (sine of angle {sine:.3e})")]
    DependentPencil { sine: f64 },

    #[error("no critical seeds found (best residual {best_residual:.3e})")]
    NoneFound { best_residual: f64 },

    #[error("critical-set Jacobian lost rank (margin {margin:.3e}) at arclength {arclength:.4} near {point:?}")]
    RankDrop {
        point: Vec<f64>,
        margin: f64,
        arclength: f64,
    },

    #[error("continuation budget of {steps} steps exhausted before closure")]
    BudgetExhausted { steps: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("image-curve region {region} is ambiguous: {reason}")]
    AmbiguousRegion { region: String, reason: String },

    #[error("fiber is empty (best residual {best_residual:.3e})")]
    EmptyFiber { best_residual: f64 },

    #[error("point cloud too small: {got} points, at least {needed} needed")]
    TooFewPoints { got: usize, needed: usize },

    #[error("component count unstable across neighbourhood scales: {counts:?}")]
    UnstableCount { counts: Vec<usize> },

    #[error("Morse Hessian is degenerate, eigenvalues {eigenvalues:?}")]
    DegenerateHessian { eigenvalues: Vec<f64> },

    #[error("a nonempty base locus needs N >= 3 (got N = 2)")]
    PreconditionN2,

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    /// Variant name, used as a stable tag in reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::ZeroGradient { .. } => "ZeroGradient",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::SamplerStarved { .. } => "SamplerStarved",
            Error::ChartRadiusExceeded { .. } => "ChartRadiusExceeded",
            Error::ChartInvalid { .. } => "ChartInvalid",
            Error::OnBaseLocus { .. } => "OnBaseLocus",
            Error::DependentPencil { .. } => "DependentPencil",
            Error::NoneFound { .. } => "NoneFound",
            Error::RankDrop { .. } => "RankDrop",
            Error::BudgetExhausted { .. } => "BudgetExhausted",
            Error::Precondition(_) => "Precondition",
            Error::AmbiguousRegion { .. } => "AmbiguousRegion",
            Error::EmptyFiber { .. } => "EmptyFiber",
            Error::TooFewPoints { .. } => "TooFewPoints",
            Error::UnstableCount { .. } => "UnstableCount",
            Error::DegenerateHessian { .. } => "DegenerateHessian",
            Error::PreconditionN2 => "PreconditionN2",
            Error::ConfigInvalid(_) => "ConfigInvalid",
            Error::Io(_) => "Io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
