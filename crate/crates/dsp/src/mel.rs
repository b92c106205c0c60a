//! Triangular Mel filterbanks.

use ndarray::Array2;

use crate::error::{DspError, Result};

/// `Mel(f) = 2595 · log10(1 + f/700)`.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filterbank mapping FFT bins to Mel bins.
///
/// Filter centers are spaced uniformly on the Mel scale across
/// `[f_min, f_max]` inclusive, each triangle spanning one spacing to either
/// side (clipped to the band edges, so the outermost filters are half
/// triangles). That placement guarantees every FFT bin inside the band has
/// positive total weight, including the bins exactly at `f_min` and `f_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    weights: Array2<f64>,
    pub n_mels: usize,
    pub f_min: f64,
    pub f_max: f64,
}

impl MelFilterbank {
    /// Weight matrix of shape `(n_mels × (n_fft/2 + 1))`.
    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn n_bins(&self) -> usize {
        self.weights.dim().1
    }

    /// Project a magnitude spectrogram `(n_bins × n_frames)` into Mel space,
    /// producing `(n_mels × n_frames)`.
    pub fn apply(&self, spectrum: &Array2<f64>) -> Result<Array2<f64>> {
        if spectrum.dim().0 != self.n_bins() {
            return Err(DspError::InvalidConfig(format!(
                "spectrum has {} bins, filterbank expects {}",
                spectrum.dim().0,
                self.n_bins()
            )));
        }
        Ok(self.weights.dot(spectrum))
    }
}

pub fn build_mel_filterbank(
    n_mels: usize,
    n_fft: usize,
    sample_rate_hz: u32,
    f_min: f64,
    f_max: f64,
) -> Result<MelFilterbank> {
    if n_mels == 0 {
        return Err(DspError::InvalidConfig("n_mels must be at least 1".into()));
    }
    let nyquist = sample_rate_hz as f64 / 2.0;
    if !(f_min >= 0.0 && f_min < f_max && f_max <= nyquist) {
        return Err(DspError::InvalidConfig(format!(
            "need 0 <= f_min < f_max <= {nyquist}, got f_min {f_min}, f_max {f_max}"
        )));
    }

    let n_bins = n_fft / 2 + 1;
    let mel_min = hz_to_mel(f_min);
    let mel_max = hz_to_mel(f_max);
    let spacing = if n_mels > 1 {
        (mel_max - mel_min) / (n_mels - 1) as f64
    } else {
        (mel_max - mel_min) / 2.0
    };
    let center = |m: usize| {
        if n_mels > 1 {
            mel_min + spacing * m as f64
        } else {
            (mel_min + mel_max) / 2.0
        }
    };

    let mut weights = Array2::<f64>::zeros((n_mels, n_bins));
    for k in 0..n_bins {
        let f = k as f64 * sample_rate_hz as f64 / n_fft as f64;
        if f < f_min || f > f_max {
            continue;
        }
        let q = hz_to_mel(f);
        for m in 0..n_mels {
            let w = 1.0 - (q - center(m)).abs() / spacing;
            if w > 0.0 {
                weights[[m, k]] = w;
            }
        }
    }

    for m in 0..n_mels {
        if weights.row(m).iter().all(|&w| w == 0.0) {
            return Err(DspError::InvalidConfig(format!(
                "mel filter {m} covers no FFT bin; increase n_fft or widen the band"
            )));
        }
    }

    Ok(MelFilterbank { weights, n_mels, f_min, f_max })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn standard_shape_is_80_by_201() {
        let fb = build_mel_filterbank(80, 400, 16_000, 0.0, 8_000.0).unwrap();
        assert_eq!(fb.weights().dim(), (80, 201));
    }

    #[test]
    fn mel_formula_at_700_hz() {
        let want = 2595.0 * 2f64.log10();
        assert!((hz_to_mel(700.0) - want).abs() < 1e-9);
        assert!((hz_to_mel(700.0) - 781.17).abs() < 0.01);
    }

    #[test]
    fn mel_hz_roundtrip() {
        for f in [0.0, 120.5, 700.0, 3_333.0, 8_000.0] {
            assert!((mel_to_hz(hz_to_mel(f)) - f).abs() < 1e-6);
        }
    }

    #[test]
    fn weights_nonnegative_and_rows_nonempty() {
        let fb = build_mel_filterbank(80, 400, 16_000, 0.0, 8_000.0).unwrap();
        assert!(fb.weights().iter().all(|&w| w >= 0.0));
        for row in fb.weights().rows() {
            assert!(row.iter().any(|&w| w > 0.0));
        }
    }

    #[test]
    fn every_bin_in_band_is_covered() {
        let fb = build_mel_filterbank(80, 400, 16_000, 0.0, 8_000.0).unwrap();
        for k in 0..fb.n_bins() {
            let f = k as f64 * 16_000.0 / 400.0;
            if (0.0..=8_000.0).contains(&f) {
                let total: f64 = fb.weights().column(k).sum();
                assert!(total > 0.0, "bin {k} at {f} Hz uncovered");
            }
        }
    }

    #[test]
    fn centers_ascend() {
        let fb = build_mel_filterbank(40, 512, 16_000, 100.0, 7_000.0).unwrap();
        let centers: Vec<usize> = fb
            .weights()
            .rows()
            .into_iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .map(|(i, _)| i)
                    .unwrap()
            })
            .collect();
        assert!(centers.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn unit_spectrum_yields_row_sums() {
        let fb = build_mel_filterbank(12, 256, 16_000, 0.0, 8_000.0).unwrap();
        let ones = Array2::<f64>::ones((fb.n_bins(), 1));
        let out = fb.apply(&ones).unwrap();
        for (m, row) in fb.weights().rows().into_iter().enumerate() {
            assert!((out[[m, 0]] - row.sum()).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_bounds_rejected() {
        assert!(build_mel_filterbank(80, 400, 16_000, 4_000.0, 1_000.0).is_err());
        assert!(build_mel_filterbank(80, 400, 16_000, 0.0, 9_000.0).is_err());
        assert!(build_mel_filterbank(0, 400, 16_000, 0.0, 8_000.0).is_err());
    }
}
