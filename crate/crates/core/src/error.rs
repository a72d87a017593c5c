use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid direction: norm {norm} is not a usable unit vector")]
    InvalidDirection { norm: f64 },

    #[error("{what} = {value} is out of range ({expected})")]
    Domain {
        what: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("degenerate run for setting {setting}: {coincidences} coincidences out of {total} pairs")]
    DegenerateRun {
        setting: usize,
        coincidences: u64,
        total: u64,
    },

    #[error("estimate has zero standard error; z-score is undefined")]
    DegenerateEstimate,

    #[error("model `{0}` cannot be evaluated counterfactually on a shared sample")]
    CounterfactualUnsupported(String),

    #[error("model `{0}` does not support this operation")]
    UnsupportedModel(String),

    #[error("unsupported configuration: {0}")]
    UnsupportedConfiguration(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn domain(what: &'static str, value: f64, expected: &'static str) -> Self {
        Error::Domain {
            what,
            value,
            expected,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
