use tbm_autodiff::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("utterance text is empty")]
    EmptyUtterance,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unknown role `{role}`")]
    UnknownRole { line: usize, role: String },
    #[error("unknown knowledge element `{0}`")]
    UnknownElement(String),
    #[error("fragment context has {0} utterances; at least 5 are required")]
    ShortContext(usize),
    #[error("fragment target must be a judge turn")]
    TargetNotJudge,
    #[error("need at least 10 fragments to split, got {0}")]
    TooFewFragments(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown configuration key `{0}`")]
    UnknownConfigKey(String),
    #[error("unsupported {what} format version {found} (expected {expected})")]
    Version {
        what: &'static str,
        found: u64,
        expected: u64,
    },
    #[error("non-finite gradient for parameter `{name}` at element {index}")]
    NonFiniteGradient { name: String, index: usize },
    #[error("training diverged at epoch {epoch}: {detail}")]
    Divergence { epoch: usize, detail: String },
    #[error("vocabulary hash mismatch: checkpoint {expected}, corpus {found}")]
    VocabMismatch { expected: String, found: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
