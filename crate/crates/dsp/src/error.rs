use thiserror::Error;

#[derive(Debug, Error)]
pub enum DspError {
    #[error("empty audio input")]
    EmptyAudio,

    #[error("invalid audio: {0}")]
    InvalidAudio(String),

    #[error("audio too short: {samples} samples, need at least {min}")]
    ShortAudio { samples: usize, min: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed feature file: {0}")]
    Format(String),

    #[error("WAV error: {0}")]
    Wav(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DspError>;
