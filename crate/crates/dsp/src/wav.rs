//! 16-bit PCM WAV ingestion and emission.

use std::path::Path;

use crate::audio::AudioBuffer;
use crate::error::{DspError, Result};

/// Load a 16-bit PCM WAV. Multi-channel files are downmixed to mono by
/// averaging channels.
pub fn read_wav_mono(path: &Path) -> Result<AudioBuffer> {
    let reader = hound::WavReader::open(path)
        .map_err(|e| DspError::Wav(format!("{}: {e}", path.display())))?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(DspError::Wav(format!(
            "{}: only 16-bit PCM supported, got {:?} {} bit",
            path.display(),
            spec.sample_format,
            spec.bits_per_sample
        )));
    }
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(DspError::Wav(format!("{}: zero channels", path.display())));
    }

    let mut samples = Vec::new();
    let mut frame = Vec::with_capacity(channels);
    for s in reader.into_samples::<i16>() {
        let s = s.map_err(|e| DspError::Wav(format!("{}: {e}", path.display())))?;
        frame.push(s as f64 / 32768.0);
        if frame.len() == channels {
            samples.push(frame.iter().sum::<f64>() / channels as f64);
            frame.clear();
        }
    }
    AudioBuffer::new(samples, spec.sample_rate)
}

/// Write a mono 16-bit PCM WAV, clamping amplitudes to `[-1, 1]`.
pub fn write_wav_mono16(path: &Path, audio: &AudioBuffer) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate_hz,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec)
        .map_err(|e| DspError::Wav(format!("{}: {e}", path.display())))?;
    for &s in &audio.samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        writer
            .write_sample(v)
            .map_err(|e| DspError::Wav(format!("{}: {e}", path.display())))?;
    }
    writer
        .finalize()
        .map_err(|e| DspError::Wav(format!("{}: {e}", path.display())))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_mono() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.wav");
        let audio = AudioBuffer::new(
            (0..1600).map(|i| (i as f64 * 0.013).sin() * 0.5).collect(),
            16_000,
        )
        .unwrap();
        write_wav_mono16(&path, &audio).unwrap();
        let back = read_wav_mono(&path).unwrap();
        assert_eq!(back.sample_rate_hz, 16_000);
        assert_eq!(back.len(), 1600);
        for (a, b) in audio.samples.iter().zip(back.samples.iter()) {
            assert!((a - b).abs() < 1.0 / 32000.0);
        }
    }

    #[test]
    fn stereo_is_downmixed_by_averaging() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stereo.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 8_000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        for _ in 0..100 {
            w.write_sample(16384i16).unwrap(); // left  = 0.5
            w.write_sample(-16384i16).unwrap(); // right = -0.5
        }
        w.finalize().unwrap();

        let audio = read_wav_mono(&path).unwrap();
        assert_eq!(audio.len(), 100);
        assert!(audio.samples.iter().all(|&s| s.abs() < 1e-9));
    }

    #[test]
    fn corrupt_file_is_reported_with_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.wav");
        std::fs::write(&path, b"definitely not a wav").unwrap();
        let err = read_wav_mono(&path).unwrap_err();
        assert!(err.to_string().contains("bad.wav"));
    }
}
