//! Mono WAV reading and writing.
//!
//! Reading and 16-bit writing go through `hound`. Float files are written by
//! hand because `hound` emits WAVE_FORMAT_EXTENSIBLE for 32-bit samples and
//! the format tag here must be plain IEEE float (3).

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use eben_core::{AudioBuffer, AudioError};
use thiserror::Error;

const FORMAT_IEEE_FLOAT: u16 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    Pcm16,
    Float32,
}

#[derive(Debug, Error)]
pub enum WavError {
    #[error("expected a mono file, found {0} channels")]
    NotMono(u16),
    #[error("unsupported encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("cannot write an empty buffer")]
    EmptyBuffer,
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl From<hound::Error> for WavError {
    fn from(e: hound::Error) -> Self {
        match e {
            hound::Error::IoError(e) => WavError::Io(e),
            hound::Error::FormatError(m) => WavError::MalformedHeader(m.into()),
            hound::Error::Unsupported => WavError::UnsupportedEncoding("unsupported wav variant".into()),
            other => WavError::MalformedHeader(other.to_string()),
        }
    }
}

/// Reads a mono 16-bit PCM or 32-bit float WAV. Integer samples are scaled by
/// `1/32768`; float samples pass through unchanged.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer, WavError> {
    let reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(WavError::NotMono(spec.channels));
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<Result<_, _>>()?,
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<Result<_, _>>()?,
        (fmt, bits) => {
            return Err(WavError::UnsupportedEncoding(format!("{fmt:?} with {bits} bits")));
        }
    };
    Ok(AudioBuffer::new(samples, spec.sample_rate)?)
}

/// Writes `buf` and returns how many samples were clamped into `[-1, 1]`.
pub fn write_wav(path: impl AsRef<Path>, buf: &AudioBuffer, encoding: Encoding) -> Result<usize, WavError> {
    if buf.is_empty() {
        return Err(WavError::EmptyBuffer);
    }
    let clips = buf.samples().iter().filter(|v| v.abs() > 1.0).count();
    match encoding {
        Encoding::Pcm16 => write_pcm16(path.as_ref(), buf)?,
        Encoding::Float32 => write_float32(path.as_ref(), buf)?,
    }
    Ok(clips)
}

/// Round to nearest, then clamp to the `i16` range.
pub fn to_pcm16(v: f64) -> i16 {
    (v * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

fn write_pcm16(path: &Path, buf: &AudioBuffer) -> Result<(), WavError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: buf.sample_rate_hz(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec)?;
    {
        let mut w16 = w.get_i16_writer(buf.len() as u32);
        for &s in buf.samples() {
            w16.write_sample(to_pcm16(s));
        }
        w16.flush()?;
    }
    w.finalize()?;
    Ok(())
}

fn write_float32(path: &Path, buf: &AudioBuffer) -> Result<(), WavError> {
    let data_len = u32::try_from(buf.len() * 4)
        .ok()
        .filter(|n| *n <= u32::MAX - 36)
        .ok_or_else(|| WavError::UnsupportedEncoding("file exceeds 4 GiB".into()))?;
    let rate = buf.sample_rate_hz();
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(b"RIFF")?;
    w.write_all(&(36 + data_len).to_le_bytes())?;
    w.write_all(b"WAVEfmt ")?;
    w.write_all(&16u32.to_le_bytes())?;
    w.write_all(&FORMAT_IEEE_FLOAT.to_le_bytes())?;
    w.write_all(&1u16.to_le_bytes())?;
    w.write_all(&rate.to_le_bytes())?;
    w.write_all(&(rate * 4).to_le_bytes())?;
    w.write_all(&4u16.to_le_bytes())?;
    w.write_all(&32u16.to_le_bytes())?;
    w.write_all(b"data")?;
    w.write_all(&data_len.to_le_bytes())?;
    for &s in buf.samples() {
        w.write_all(&(s.clamp(-1.0, 1.0) as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}
