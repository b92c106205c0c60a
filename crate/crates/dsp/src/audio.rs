//! Mono waveforms and band-limited resampling.

use crate::error::{DspError, Result};

/// Sample rate every downstream stage expects.
pub const TARGET_SAMPLE_RATE: u32 = 16_000;

/// A mono waveform. Amplitudes are nominally in `[-1, 1]` and must be finite.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f64>,
    pub sample_rate_hz: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if sample_rate_hz == 0 {
            return Err(DspError::InvalidConfig("sample_rate_hz must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(DspError::InvalidAudio(format!("non-finite sample at index {i}")));
        }
        Ok(Self { samples, sample_rate_hz })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }
}

/// Half-width of the sinc kernel in zero crossings.
const SINC_TAPS: usize = 32;

/// Band-limited resampling by windowed-sinc interpolation.
///
/// The kernel cutoff sits at the lower of the two Nyquist frequencies, so
/// downsampling cannot alias. Output length is `round(len · target/src)`,
/// preserving duration to within one sample period. A same-rate call returns
/// the input unchanged.
pub fn resample(audio: &AudioBuffer, target_hz: u32) -> Result<AudioBuffer> {
    if audio.is_empty() {
        return Err(DspError::EmptyAudio);
    }
    if target_hz == 0 {
        return Err(DspError::InvalidConfig("target_hz must be positive".into()));
    }
    if let Some(i) = audio.samples.iter().position(|s| !s.is_finite()) {
        return Err(DspError::InvalidAudio(format!("non-finite sample at index {i}")));
    }
    if target_hz == audio.sample_rate_hz {
        return Ok(audio.clone());
    }

    let ratio = target_hz as f64 / audio.sample_rate_hz as f64;
    let n_in = audio.samples.len();
    let n_out = ((n_in as f64) * ratio).round().max(1.0) as usize;

    // Cutoff in cycles per *input* sample; stretch the kernel when
    // downsampling so it still spans SINC_TAPS zero crossings.
    let fc = 0.5 * ratio.min(1.0);
    let half_width = SINC_TAPS as f64 / (2.0 * fc);
    let gain = 2.0 * fc;

    let x = &audio.samples;
    let mut out = Vec::with_capacity(n_out);
    for n in 0..n_out {
        let p = n as f64 / ratio;
        let k0 = (p - half_width).ceil() as isize;
        let k1 = (p + half_width).floor() as isize;
        let mut acc = 0.0;
        for k in k0..=k1 {
            if k < 0 || k as usize >= n_in {
                continue;
            }
            let tau = p - k as f64;
            acc += x[k as usize] * gain * sinc(2.0 * fc * tau) * hann_taper(tau / half_width);
        }
        out.push(acc);
    }

    AudioBuffer::new(out, target_hz)
}

fn sinc(t: f64) -> f64 {
    if t == 0.0 {
        1.0
    } else {
        let pt = std::f64::consts::PI * t;
        pt.sin() / pt
    }
}

fn hann_taper(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        0.5 * (1.0 + (std::f64::consts::PI * u).cos())
    }
}
