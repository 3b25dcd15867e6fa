use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed scenario document: {0}")]
    Parse(String),

    #[error("invalid scenario: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("generalization error is undefined for an empty coalition")]
    EmptyCoalition,

    #[error("type {type_index} is at capacity ({count} of {count} clients)")]
    Capacity { type_index: usize, count: u32 },

    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error(
        "enumeration of {profiles} profiles exceeds the cap of {cap}; use the structured solver instead"
    )]
    CapExceeded { profiles: u128, cap: u64 },

    #[error("least-squares fit is ill-posed: {0}")]
    IllPosed(String),

    #[error("budget residual {0} cannot be settled: no client obtained the model")]
    Unsettleable(f64),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
