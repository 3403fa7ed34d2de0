//! Mono sample buffers.

use alloc::vec::Vec;

use thiserror::Error;

/// The rate every processing stage expects.
pub const SAMPLE_RATE_HZ: u32 = 16_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AudioError {
    #[error("sample rate must be positive")]
    ZeroSampleRate,
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("signal is all zeros")]
    AllZeroSignal,
    #[error("target peak {0} outside (0, 1]")]
    InvalidTarget(f64),
}

/// A mono signal with its sample rate.
///
/// Samples are nominally in `[-1, 1]`; intermediate results may exceed that
/// range and are clamped only when written to disk.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self, AudioError> {
        if sample_rate_hz == 0 {
            return Err(AudioError::ZeroSampleRate);
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(AudioError::NonFinite(i));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn zeros(len: usize, sample_rate_hz: u32) -> Result<Self, AudioError> {
        Self::new(alloc::vec![0.0; len], sample_rate_hz)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
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

    /// Same rate, new samples. Callers inside the crate guarantee finiteness.
    pub(crate) fn with_samples(&self, samples: Vec<f64>) -> Self {
        debug_assert!(samples.iter().all(|s| s.is_finite()));
        Self {
            samples,
            sample_rate_hz: self.sample_rate_hz,
        }
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |m, s| m.max(s.abs()))
    }

    /// Mean power.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        energy(&self.samples) / self.samples.len() as f64
    }

    /// Rescales so that `max |sample| == target_peak`.
    pub fn peak_normalize(&self, target_peak: f64) -> Result<Self, AudioError> {
        if !(target_peak > 0.0 && target_peak <= 1.0) {
            return Err(AudioError::InvalidTarget(target_peak));
        }
        let peak = self.peak();
        if peak == 0.0 {
            return Err(AudioError::AllZeroSignal);
        }
        if peak == target_peak {
            return Ok(self.clone());
        }
        let gain = target_peak / peak;
        let samples = self
            .samples
            .iter()
            .map(|&s| {
                // The peak sample lands on the target exactly.
                if s.abs() == peak {
                    target_peak.copysign(s)
                } else {
                    (s * gain).clamp(-target_peak, target_peak)
                }
            })
            .collect();
        Ok(self.with_samples(samples))
    }
}

pub(crate) fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}
