use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid state: {0}")]
    State(&'static str),

    #[error("parse error in {source_name} at {location}: {message}")]
    Parse {
        source_name: String,
        location: String,
        message: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("pair balancing error: {0}")]
    Balancing(String),

    #[error("alignment error: sequence has {len} clips, target length is {target}")]
    Alignment { len: usize, target: usize },

    #[error("expert registry error: {0}")]
    Registry(String),

    #[error("pairing error: {0}")]
    Pairing(String),

    #[error("mode error: {0}")]
    Mode(String),

    #[error("clip index {index} out of range 1..={len}")]
    Index { index: usize, len: usize },

    #[error("non-finite gradient in block `{block}` at index {index}")]
    NonFiniteGradient { block: String, index: usize },

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Divergence {
        epoch: usize,
        /// Parameters at the end of the last completed epoch.
        last_good: Option<Box<crate::numeric::ParamSet>>,
    },

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(&'static str),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(context: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::Shape {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
