use alloc::string::String;

/// Errors raised by the engine, model and pipelines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Tensor extents disagree; `axis` names the offending axis.
    #[error("dimension mismatch in {op} on {axis}: expected {expected}, got {got}")]
    Dimension {
        op: &'static str,
        axis: String,
        expected: usize,
        got: usize,
    },
    /// Batch statistics requested over fewer than two elements per channel.
    #[error("batch normalization needs at least two elements per channel in train mode, got {count}")]
    DegenerateStatistics { count: usize },
    #[error("invalid input: {0}")]
    Input(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("non-finite gradient in parameter `{param}`")]
    NonFiniteGradient { param: String },
    #[error("non-finite loss at batch {batch}")]
    NonFiniteLoss { batch: usize },
    #[error("group `{group}` mixes writer labels {first} and {second}")]
    MixedLabels {
        group: String,
        first: usize,
        second: usize,
    },
    #[error("feature vector has zero norm")]
    DegenerateFeature,
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

impl Error {
    pub(crate) fn dim(op: &'static str, axis: impl Into<String>, expected: usize, got: usize) -> Self {
        Error::Dimension {
            op,
            axis: axis.into(),
            expected,
            got,
        }
    }
}
