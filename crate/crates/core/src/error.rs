use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("unknown rheology preset `{0}`")]
    UnknownPreset(String),
    #[error("rheology preset `{preset}` requires parameter `{param}`")]
    MissingParameter { preset: String, param: &'static str },
    #[error("invalid rheology: {0}")]
    InvalidRheology(String),
    #[error("kernel evaluated at coincident points")]
    SingularEvaluation,
    #[error("normal vector is not unit length (|n| = {0})")]
    InvalidNormal(f64),
    #[error("degenerate rheology: step denominator vanishes")]
    DegenerateRheology,
    #[error("non-invertible transform: leading displacement coefficient is zero")]
    NonInvertibleTransform,
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("singular system matrix")]
    SingularSystem,
    #[error("ill-posed contact configuration: {0}")]
    IllPosedContact(String),
    #[error("active-set solver did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize, last: Vec<f64> },
    #[error("point ({0}, {1}) lies outside the region")]
    OutOfDomain(f64, f64),
    #[error("unsupported rheology for this operation: {0}")]
    UnsupportedRheology(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
