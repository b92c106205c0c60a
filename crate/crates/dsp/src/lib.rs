//! Audio frontend: turns raw 16-bit PCM audio into the fixed-shape,
//! per-bin-normalized log-Mel features the encoder consumes.
//!
//! Pipeline: resample to 16 kHz → centered STFT (25 ms window, 10 ms hop)
//! → triangular Mel filterbank (80 bins) → `ln(x + 1e-10)` → pad/truncate
//! to a fixed frame count → per-bin z-score.
//!
//! All functions are pure; concurrent calls on distinct inputs are safe.

pub mod audio;
pub mod error;
pub mod features;
pub mod mel;
pub mod stft;
pub mod wav;

pub use audio::{resample, AudioBuffer, TARGET_SAMPLE_RATE};
pub use error::{DspError, Result};
pub use features::{
    featurize, read_features, read_features_file, write_features, write_features_file,
    LogMelFeatures, NormalizationStats, FEATURE_FORMAT_VERSION, FEATURE_MAGIC, LOG_EPS,
};
pub use mel::{build_mel_filterbank, hz_to_mel, mel_to_hz, MelFilterbank};
pub use stft::{frame_stft, StftConfig, WindowFn};
pub use wav::{read_wav_mono, write_wav_mono16};
