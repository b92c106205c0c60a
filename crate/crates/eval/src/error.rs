use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("utterance `{utterance_id}`: invalid entity span: {detail}")]
    InvalidSpan { utterance_id: String, detail: String },

    #[error("manifest parse error at line {line}: {detail}")]
    Parse { line: usize, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EvalError>;
