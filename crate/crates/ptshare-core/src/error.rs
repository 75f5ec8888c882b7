use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation error: {entity} `{id}` field `{field}`: {reason}")]
    Validation {
        entity: &'static str,
        id: String,
        field: &'static str,
        reason: String,
    },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("solver error: {0}")]
    Solver(String),

    #[error("solver limit: {0}")]
    Limit(String),

    #[error("big-M error: {0}")]
    BigM(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(
        entity: &'static str,
        id: impl ToString,
        field: &'static str,
        reason: impl Into<String>,
    ) -> Self {
        Error::Validation {
            entity,
            id: id.to_string(),
            field,
            reason: reason.into(),
        }
    }
}
