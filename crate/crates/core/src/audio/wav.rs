//! WAV file ingestion and emission (PCM 16-bit and IEEE float32).

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::audio::AudioSegment;
use crate::error::{Error, Result};

/// Reads a WAV file into a mono [`AudioSegment`]. Multi-channel input is
/// averaged down to one channel. PCM 16-bit samples are scaled by 1/32768.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioSegment> {
    let path = path.as_ref();
    let mut reader =
        WavReader::open(path).map_err(|e| Error::Wav(format!("{}: {e}", path.display())))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::Wav(format!(
            "{}: zero channels in header",
            path.display()
        )));
    }

    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f32 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Wav(format!("{}: {e}", path.display())))?,
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Wav(format!("{}: {e}", path.display())))?,
        (fmt, bits) => {
            return Err(Error::Wav(format!(
                "{}: unsupported sample format {fmt:?}/{bits}-bit (expect PCM16 or float32)",
                path.display()
            )))
        }
    };

    let samples = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks_exact(channels)
            .map(|frame| frame.iter().sum::<f32>() / channels as f32)
            .collect()
    };
    if samples.is_empty() {
        return Err(Error::EmptyAudio);
    }
    Ok(AudioSegment::new(samples, spec.sample_rate))
}

/// Writes a mono float32 WAV file. Float output keeps corpus generation
/// byte-deterministic across runs.
pub fn write_wav(path: impl AsRef<Path>, audio: &AudioSegment) -> Result<()> {
    let path = path.as_ref();
    if audio.is_empty() {
        return Err(Error::EmptyAudio);
    }
    let spec = WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut writer =
        WavWriter::create(path, spec).map_err(|e| Error::Wav(format!("{}: {e}", path.display())))?;
    for &s in &audio.samples {
        writer
            .write_sample(s)
            .map_err(|e| Error::Wav(format!("{}: {e}", path.display())))?;
    }
    writer
        .finalize()
        .map_err(|e| Error::Wav(format!("{}: {e}", path.display())))?;
    Ok(())
}
