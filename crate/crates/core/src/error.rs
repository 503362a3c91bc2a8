use thiserror::Error;

/// Errors surfaced by the simulator library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("accuracy is undefined for the {0} model")]
    UnsupportedMetric(&'static str),

    #[error("idx data: {0}")]
    Idx(#[from] IdxError),

    #[error("benign subgraph not connected after {attempts} attempts")]
    Generation { attempts: usize },

    #[error("no path between nodes {from} and {to}")]
    NoPath { from: usize, to: usize },

    #[error("rule {rule} inapplicable: {reason}")]
    RuleInapplicable { rule: &'static str, reason: String },

    #[error("attack inapplicable: {0}")]
    AttackInapplicable(String),

    #[error("node {node} produced a non-finite estimate at iteration {iteration}")]
    NonFiniteEstimate { node: usize, iteration: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Failures while parsing IDX-format image/label files.
#[derive(Debug, Error)]
pub enum IdxError {
    #[error("wrong magic: expected {expected:#010x}, got {got:#010x}")]
    WrongMagic { expected: u32, got: u32 },

    #[error("truncated file: needed {needed} bytes, got {got}")]
    Truncated { needed: usize, got: usize },

    #[error("image/label count mismatch: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
