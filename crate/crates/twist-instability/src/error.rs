use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("no sign change of the momentum residual within |x' - x| <= {radius}")]
    NoBracket { radius: f64 },
    #[error("index {index} outside configuration window [{lo}, {hi}]")]
    IndexOutOfWindow { index: i64, lo: i64, hi: i64 },
    #[error("x -> V(x,x) has distinct minima at {first} and {second} with equal values")]
    NonUniqueMinimum { first: f64, second: f64 },
    #[error("fixed point is not hyperbolic (trace {trace})")]
    NotHyperbolic { trace: f64 },
    #[error("relaxation stopped after {iterations} iterations with residual {residual:e}")]
    MaxIterations { iterations: usize, residual: f64 },
    #[error("pinned value {x} outside ({lo}, {hi})")]
    OutOfRange { x: f64, lo: f64, hi: f64 },
    #[error("window too small: {0}")]
    WindowTooSmall(String),
    #[error("homoclinic ordering violated: {0}")]
    OrderingViolated(String),
    #[error("window mismatch: {0}")]
    WindowMismatch(String),
    #[error("level set E = {level} not reached from any start")]
    Infeasible { level: f64 },
    #[error("step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64 },
    #[error("step class violated at t = {t}: max step {step} > {bound}")]
    StepClassViolation { t: f64, step: f64, bound: f64 },
    #[error("degenerate inputs: {0}")]
    DegenerateInputs(String),
    #[error("block {block} center {value} lies in neither symbol interval")]
    Unclassifiable { block: i64, value: f64 },
    #[error("relaxation stalled with residual {residual:e} at t = {t}")]
    RelaxationStalled { residual: f64, t: f64 },
    #[error("missing data: {0}")]
    MissingData(String),
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("io: {0}")]
    Io(String),
}

impl Error {
    /// Stable machine-readable name used in JSON error objects.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NoBracket { .. } => "NoBracket",
            Error::IndexOutOfWindow { .. } => "IndexOutOfWindow",
            Error::NonUniqueMinimum { .. } => "NonUniqueMinimum",
            Error::NotHyperbolic { .. } => "NotHyperbolic",
            Error::MaxIterations { .. } => "MaxIterations",
            Error::OutOfRange { .. } => "OutOfRange",
            Error::WindowTooSmall(_) => "WindowTooSmall",
            Error::OrderingViolated(_) => "OrderingViolated",
            Error::WindowMismatch(_) => "WindowMismatch",
            Error::Infeasible { .. } => "Infeasible",
            Error::StepSizeUnderflow { .. } => "StepSizeUnderflow",
            Error::StepClassViolation { .. } => "StepClassViolation",
            Error::DegenerateInputs(_) => "DegenerateInputs",
            Error::Unclassifiable { .. } => "Unclassifiable",
            Error::RelaxationStalled { .. } => "RelaxationStalled",
            Error::MissingData(_) => "MissingData",
            Error::Validation(_) => "Validation",
            Error::Io(_) => "Io",
        }
    }
}
