//! Short-time Fourier transform with centered frames and reflective padding.

use ndarray::Array2;
use rustfft::{num_complex::Complex, FftPlanner};

use crate::audio::AudioBuffer;
use crate::error::{DspError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowFn {
    /// Periodic Hann window, the default for Mel pipelines.
    HannPeriodic,
    Rectangular,
}

/// STFT framing parameters. Defaults: 25 ms window, 10 ms hop, 400-point
/// FFT (exactly the 25 ms window at 16 kHz, no extra zero padding).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StftConfig {
    pub window_ms: f64,
    pub hop_ms: f64,
    pub n_fft: usize,
    pub window_fn: WindowFn,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            window_ms: 25.0,
            hop_ms: 10.0,
            n_fft: 400,
            window_fn: WindowFn::HannPeriodic,
        }
    }
}

impl StftConfig {
    pub fn window_samples(&self, sample_rate_hz: u32) -> usize {
        (self.window_ms * sample_rate_hz as f64 / 1000.0).round() as usize
    }

    pub fn hop_samples(&self, sample_rate_hz: u32) -> usize {
        (self.hop_ms * sample_rate_hz as f64 / 1000.0).round() as usize
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn validate(&self, sample_rate_hz: u32) -> Result<()> {
        if self.hop_ms <= 0.0 || self.window_ms <= 0.0 {
            return Err(DspError::InvalidConfig("window and hop must be positive".into()));
        }
        if self.hop_ms > self.window_ms {
            return Err(DspError::InvalidConfig(format!(
                "hop {} ms exceeds window {} ms",
                self.hop_ms, self.window_ms
            )));
        }
        if self.n_fft < self.window_samples(sample_rate_hz) {
            return Err(DspError::InvalidConfig(format!(
                "n_fft {} smaller than window of {} samples",
                self.n_fft,
                self.window_samples(sample_rate_hz)
            )));
        }
        Ok(())
    }
}

/// Magnitude spectrogram of shape `(n_fft/2 + 1) × n_frames`.
///
/// Frames are centered at multiples of the hop with reflective padding at
/// the edges, so `n_frames = floor(len / hop)`: a 30 s input at 16 kHz with
/// a 10 ms hop yields exactly 3000 frames.
pub fn frame_stft(audio: &AudioBuffer, cfg: &StftConfig) -> Result<Array2<f64>> {
    cfg.validate(audio.sample_rate_hz)?;
    let hop = cfg.hop_samples(audio.sample_rate_hz);
    let win_len = cfg.window_samples(audio.sample_rate_hz);
    let n = audio.samples.len();
    if n < hop {
        return Err(DspError::ShortAudio { samples: n, min: hop });
    }

    let n_frames = n / hop;
    let n_bins = cfg.n_bins();
    let window = make_window(cfg.window_fn, win_len);
    // window is placed centered inside the n_fft buffer
    let pad_left = (cfg.n_fft - win_len) / 2;

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(cfg.n_fft);
    let mut out = Array2::<f64>::zeros((n_bins, n_frames));
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.n_fft];

    for t in 0..n_frames {
        let center = (t * hop) as isize;
        let start = center - (win_len / 2) as isize;
        for b in buf.iter_mut() {
            *b = Complex::new(0.0, 0.0);
        }
        for (i, &w) in window.iter().enumerate() {
            let s = audio.samples[reflect_index(start + i as isize, n)];
            buf[pad_left + i] = Complex::new(s * w, 0.0);
        }
        fft.process(&mut buf);
        for (k, item) in buf.iter().take(n_bins).enumerate() {
            out[[k, t]] = item.norm();
        }
    }
    Ok(out)
}

/// Reflect an out-of-range index back into `[0, len)`, bouncing repeatedly
/// so it also works when the overhang exceeds the signal length.
fn reflect_index(mut i: isize, len: usize) -> usize {
    let n = len as isize;
    if n == 1 {
        return 0;
    }
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * (n - 1) - i;
        } else {
            return i as usize;
        }
    }
}

fn make_window(kind: WindowFn, len: usize) -> Vec<f64> {
    match kind {
        WindowFn::HannPeriodic => (0..len)
            .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / len as f64).cos()))
            .collect(),
        WindowFn::Rectangular => vec![1.0; len],
    }
}
