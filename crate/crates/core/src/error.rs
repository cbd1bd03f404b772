use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("point on a symmetry axis (r = {r}, u = {u})")]
    AxisPoint { r: f64, u: f64 },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("integrator overflow at s = {s}")]
    Overflow { s: f64 },

    #[error("integrator exhausted {0} steps")]
    StepLimit(usize),

    #[error("step size underflow at x = {x}")]
    StepUnderflow { x: f64 },

    #[error("slope not stabilized by r = {r}: best estimate {estimate} +/- {error_bar}")]
    NotStabilized { estimate: f64, error_bar: f64, r: f64 },

    #[error("bisection precision exhausted at width {width}")]
    PrecisionExhausted { width: f64 },

    #[error("invalid bracket: {0}")]
    InvalidBracket(String),

    #[error("ill-conditioned least squares: {0}")]
    IllConditioned(String),

    #[error("ambiguous intersection: {0}")]
    Ambiguous(String),

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("empty window: {0}")]
    EmptyWindow(String),

    #[error("singular stop at t = {t} (extinction estimate {t_extinct})")]
    SingularStop { t: f64, t_extinct: f64 },

    #[error("cusp detected at vertex {0}")]
    Cusp(usize),

    #[error("i/o: {0}")]
    Io(String),

    #[error("parse: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
