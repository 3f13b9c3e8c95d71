use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("infeasible baseline: {0}")]
    InfeasibleBaseline(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("instance too large: {0}")]
    TooLarge(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("all {0} drops were infeasible")]
    AllDropsInfeasible(usize),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
