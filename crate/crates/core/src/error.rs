use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("under-resolved: {0}")]
    Resolution(String),
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("format error: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl LabError {
    /// Short machine-readable code used in CLI error lines.
    pub fn code(&self) -> &'static str {
        match self {
            LabError::Grid(_) => "GRID",
            LabError::Param(_) => "PARAM",
            LabError::Resolution(_) => "RESOLUTION",
            LabError::Quadrature(_) => "QUADRATURE",
            LabError::Hypothesis(_) => "HYPOTHESIS",
            LabError::Numerical(_) => "NUMERICAL",
            LabError::Config { .. } => "CONFIG",
            LabError::Parse { .. } => "PARSE",
            LabError::Format(_) => "FORMAT",
            LabError::Io(_) => "IO",
            LabError::Json(_) => "JSON",
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
