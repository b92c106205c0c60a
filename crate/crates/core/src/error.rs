use thiserror::Error;

/// Errors produced by the tensor engine, model, and trainer.
#[derive(Debug, Error)]
pub enum CoreError {
    /// Operand shapes are incompatible for the named operation.
    #[error("{op}: shape mismatch, lhs {lhs:?} vs rhs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// A forward or backward step produced a NaN or infinite value.
    #[error("{op}: non-finite value{}", detail.as_deref().map(|d| format!(" ({d})")).unwrap_or_default())]
    Numeric {
        op: &'static str,
        detail: Option<String>,
    },

    /// A caller violated an operation's stated precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A configuration value is invalid or inconsistent.
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl CoreError {
    pub fn numeric(op: &'static str) -> Self {
        CoreError::Numeric { op, detail: None }
    }

    pub fn numeric_detail(op: &'static str, detail: impl Into<String>) -> Self {
        CoreError::Numeric {
            op,
            detail: Some(detail.into()),
        }
    }

    pub fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        CoreError::ShapeMismatch {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        CoreError::Contract(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CoreError::Config(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
