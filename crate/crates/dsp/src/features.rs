//! End-to-end featurization and the binary feature-dump format.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::audio::{AudioBuffer, TARGET_SAMPLE_RATE};
use crate::error::{DspError, Result};
use crate::mel::MelFilterbank;
use crate::stft::{frame_stft, StftConfig};

/// Floor added before the log so digital silence stays finite.
pub const LOG_EPS: f64 = 1e-10;

/// Magic bytes of the feature-dump file format.
pub const FEATURE_MAGIC: &[u8; 4] = b"AUML";
pub const FEATURE_FORMAT_VERSION: u32 = 1;

/// Per-bin statistics recorded by the z-score normalization. A constant bin
/// is stored with `std = 0` and maps to zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Normalized log-Mel features of shape `(n_mels × n_frames)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogMelFeatures {
    pub values: Array2<f64>,
    pub stats: NormalizationStats,
}

impl LogMelFeatures {
    pub fn n_mels(&self) -> usize {
        self.values.dim().0
    }

    pub fn n_frames(&self) -> usize {
        self.values.dim().1
    }
}

/// Full frontend pipeline: STFT → Mel projection → `ln(x + 1e-10)` →
/// pad (with the log floor) or truncate to `target_frames` → per-bin
/// z-score. Expects 16 kHz input; resample first.
pub fn featurize(
    audio: &AudioBuffer,
    cfg: &StftConfig,
    fb: &MelFilterbank,
    target_frames: usize,
) -> Result<LogMelFeatures> {
    if audio.is_empty() {
        return Err(DspError::EmptyAudio);
    }
    if audio.sample_rate_hz != TARGET_SAMPLE_RATE {
        return Err(DspError::InvalidConfig(format!(
            "featurize expects {TARGET_SAMPLE_RATE} Hz input, got {} Hz",
            audio.sample_rate_hz
        )));
    }
    if target_frames == 0 {
        return Err(DspError::InvalidConfig("target_frames must be positive".into()));
    }

    let spectrum = frame_stft(audio, cfg)?;
    let mel = fb.apply(&spectrum)?;
    let log_mel = mel.mapv(|v| (v + LOG_EPS).ln());

    // fixed-duration contract: pad with the silence value or truncate
    let n_mels = log_mel.dim().0;
    let n_frames = log_mel.dim().1;
    let pad_value = LOG_EPS.ln();
    let mut fixed = Array2::<f64>::from_elem((n_mels, target_frames), pad_value);
    let keep = n_frames.min(target_frames);
    fixed
        .slice_mut(ndarray::s![.., ..keep])
        .assign(&log_mel.slice(ndarray::s![.., ..keep]));

    let stats = zscore_rows(&mut fixed);
    Ok(LogMelFeatures { values: fixed, stats })
}

/// In-place per-row z-score; constant rows become zeros.
pub(crate) fn zscore_rows(m: &mut Array2<f64>) -> NormalizationStats {
    let n = m.dim().1 as f64;
    let mut means = Vec::with_capacity(m.dim().0);
    let mut stds = Vec::with_capacity(m.dim().0);
    for mut row in m.rows_mut() {
        let mean = row.sum() / n;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        if std == 0.0 {
            row.fill(0.0);
        } else {
            row.mapv_inplace(|v| (v - mean) / std);
        }
        means.push(mean);
        stds.push(std);
    }
    NormalizationStats { mean: means, std: stds }
}

/// Write the binary dump: header `{magic "AUML", version, n_mels, n_frames}`
/// (u32 little-endian) followed by row-major f32 little-endian values.
pub fn write_features<W: Write>(mut w: W, features: &LogMelFeatures) -> Result<()> {
    w.write_all(FEATURE_MAGIC)?;
    w.write_all(&FEATURE_FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(features.n_mels() as u32).to_le_bytes())?;
    w.write_all(&(features.n_frames() as u32).to_le_bytes())?;
    for &v in features.values.iter() {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn write_features_file(path: &Path, features: &LogMelFeatures) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_features(std::io::BufWriter::new(f), features)
}

/// Read a feature dump back as f64 values. Stats are not stored in the
/// format; the returned stats are zero-mean/unit-std placeholders.
pub fn read_features<R: Read>(mut r: R) -> Result<LogMelFeatures> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != FEATURE_MAGIC {
        return Err(DspError::Format(format!("bad magic {magic:?}")));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)?;
    let version = u32::from_le_bytes(u32buf);
    if version != FEATURE_FORMAT_VERSION {
        return Err(DspError::Format(format!("unsupported feature format version {version}")));
    }
    r.read_exact(&mut u32buf)?;
    let n_mels = u32::from_le_bytes(u32buf) as usize;
    r.read_exact(&mut u32buf)?;
    let n_frames = u32::from_le_bytes(u32buf) as usize;

    let mut data = Vec::with_capacity(n_mels * n_frames);
    let mut f32buf = [0u8; 4];
    for _ in 0..n_mels * n_frames {
        r.read_exact(&mut f32buf)?;
        data.push(f32::from_le_bytes(f32buf) as f64);
    }
    let values = Array2::from_shape_vec((n_mels, n_frames), data)
        .map_err(|e| DspError::Format(e.to_string()))?;
    Ok(LogMelFeatures {
        values,
        stats: NormalizationStats {
            mean: vec![0.0; n_mels],
            std: vec![1.0; n_mels],
        },
    })
}

pub fn read_features_file(path: &Path) -> Result<LogMelFeatures> {
    let f = std::fs::File::open(path)?;
    read_features(std::io::BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mel::build_mel_filterbank;

    fn standard_fb() -> MelFilterbank {
        build_mel_filterbank(80, 400, 16_000, 0.0, 8_000.0).unwrap()
    }

    fn tone(secs: f64) -> AudioBuffer {
        let n = (16_000.0 * secs) as usize;
        let samples = (0..n)
            .map(|i| {
                let t = i as f64 / 16_000.0;
                0.4 * (2.0 * std::f64::consts::PI * 440.0 * t).sin()
                    + 0.2 * (2.0 * std::f64::consts::PI * 1330.0 * t).sin()
            })
            .collect();
        AudioBuffer::new(samples, 16_000).unwrap()
    }

    #[test]
    fn thirty_second_input_yields_80_by_3000() {
        let f = featurize(&tone(30.0), &StftConfig::default(), &standard_fb(), 3000).unwrap();
        assert_eq!(f.values.dim(), (80, 3000));
    }

    #[test]
    fn short_input_is_padded_with_transformed_silence() {
        let f = featurize(&tone(10.0), &StftConfig::default(), &standard_fb(), 3000).unwrap();
        assert_eq!(f.values.dim(), (80, 3000));
        // frames 1000.. hold the padding value pushed through normalization:
        // constant per bin
        for m in 0..80 {
            let v = f.values[[m, 1000]];
            for t in 1001..3000 {
                assert_eq!(f.values[[m, t]].to_bits(), v.to_bits());
            }
            let expected = (LOG_EPS.ln() - f.stats.mean[m]) / f.stats.std[m];
            assert!((v - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn rows_are_zero_mean_unit_std() {
        let f = featurize(&tone(5.0), &StftConfig::default(), &standard_fb(), 500).unwrap();
        for row in f.values.rows() {
            let n = row.len() as f64;
            let mean = row.sum() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-6, "mean {mean}");
            assert!((var.sqrt() - 1.0).abs() < 1e-6, "std {}", var.sqrt());
        }
    }

    #[test]
    fn renormalizing_changes_nothing_materially() {
        let f = featurize(&tone(2.0), &StftConfig::default(), &standard_fb(), 200).unwrap();
        let mut again = f.values.clone();
        zscore_rows(&mut again);
        for (a, b) in f.values.iter().zip(again.iter()) {
            assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn constant_bins_map_to_zeros() {
        // all-zero audio: every bin is the constant log floor
        let silent = AudioBuffer::new(vec![0.0; 16_000], 16_000).unwrap();
        let f = featurize(&silent, &StftConfig::default(), &standard_fb(), 100).unwrap();
        assert!(f.values.iter().all(|&v| v == 0.0));
        assert!(f.stats.std.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn louder_never_decreases_pre_normalization_values() {
        let a = tone(1.0);
        let louder = AudioBuffer::new(a.samples.iter().map(|s| s * 2.5).collect(), 16_000).unwrap();
        let cfg = StftConfig::default();
        let fb = standard_fb();
        let quiet_log = fb.apply(&frame_stft(&a, &cfg).unwrap()).unwrap().mapv(|v| (v + LOG_EPS).ln());
        let loud_log = fb.apply(&frame_stft(&louder, &cfg).unwrap()).unwrap().mapv(|v| (v + LOG_EPS).ln());
        for (q, l) in quiet_log.iter().zip(loud_log.iter()) {
            assert!(l >= q);
        }
    }

    #[test]
    fn wrong_sample_rate_is_rejected() {
        let a = AudioBuffer::new(vec![0.1; 8_000], 8_000).unwrap();
        assert!(matches!(
            featurize(&a, &StftConfig::default(), &standard_fb(), 100),
            Err(DspError::InvalidConfig(_))
        ));
    }

    #[test]
    fn dump_roundtrip_preserves_header_and_f32_values() {
        let f = featurize(&tone(1.0), &StftConfig::default(), &standard_fb(), 100).unwrap();
        let mut buf = Vec::new();
        write_features(&mut buf, &f).unwrap();
        assert_eq!(&buf[..4], FEATURE_MAGIC);
        let back = read_features(buf.as_slice()).unwrap();
        assert_eq!(back.values.dim(), (80, 100));
        for (a, b) in f.values.iter().zip(back.values.iter()) {
            assert_eq!((*a as f32).to_bits(), (*b as f32).to_bits());
        }
    }

    #[test]
    fn truncated_dump_is_rejected() {
        let f = featurize(&tone(1.0), &StftConfig::default(), &standard_fb(), 50).unwrap();
        let mut buf = Vec::new();
        write_features(&mut buf, &f).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(read_features(buf.as_slice()).is_err());
    }
}
