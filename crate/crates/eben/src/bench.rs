//! Generator latency and static memory accounting.

use std::time::Instant;

use eben_core::nn::{activation_floats, count_params, init_weights, validate_config, Generator};
use eben_core::{derive_seed, AudioBuffer, NetworkConfig, NnError, SeededRng, SAMPLE_RATE_HZ};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MIN_REPS: usize = 10;
pub const MIN_WARMUP: usize = 1;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid benchmark parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Network(#[from] NnError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyMs {
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub input_seconds: f64,
    pub input_samples: usize,
    pub latency_ms: LatencyMs,
    /// Median latency over the input duration.
    pub realtime_factor: f64,
    pub generator_params: usize,
    pub discriminator_params: usize,
    /// Generator weights as `f32`.
    pub weights_bytes: usize,
    /// Every generator activation map for this input as `f32`.
    pub activation_bytes: usize,
    pub memory_estimate_bytes: usize,
    pub repetitions: usize,
    pub warmup_reps: usize,
    pub timings_ms: Vec<f64>,
}

impl BenchReport {
    /// Field relations that must hold for any report this module produces.
    pub fn check_consistency(&self) -> Result<(), String> {
        let l = &self.latency_ms;
        if !(l.p95 >= l.median && l.median >= 0.0) {
            return Err(format!("latency order broken: {l:?}"));
        }
        if self.realtime_factor != l.median / (self.input_seconds * 1000.0) {
            return Err("realtime_factor != median / duration".into());
        }
        if self.timings_ms.len() != self.repetitions {
            return Err("timing count != repetitions".into());
        }
        if self.weights_bytes != 4 * self.generator_params {
            return Err("weights_bytes != 4 * generator_params".into());
        }
        if self.memory_estimate_bytes != self.weights_bytes + self.activation_bytes {
            return Err("memory estimate != weights + activations".into());
        }
        Ok(())
    }
}

/// Linear-interpolated percentile of ascending `v`.
fn percentile(v: &[f64], p: f64) -> f64 {
    let pos = p / 100.0 * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

fn summarize(timings: &[f64]) -> LatencyMs {
    let mut s = timings.to_vec();
    s.sort_by(f64::total_cmp);
    LatencyMs {
        mean: s.iter().sum::<f64>() / s.len() as f64,
        median: percentile(&s, 50.0),
        p95: percentile(&s, 95.0),
    }
}

/// Times the generator forward pass on `seconds` of seeded noise. Weight
/// initialization and graph construction happen before the clock starts.
pub fn bench_forward(
    cfg: &NetworkConfig,
    seconds: f64,
    reps: usize,
    warmup: usize,
    seed: u64,
) -> Result<BenchReport, BenchError> {
    if reps < MIN_REPS {
        return Err(BenchError::InvalidParams(format!("reps must be >= {MIN_REPS}, got {reps}")));
    }
    if warmup < MIN_WARMUP {
        return Err(BenchError::InvalidParams(format!("warmup must be >= {MIN_WARMUP}")));
    }
    if !(seconds.is_finite() && seconds > 0.0) {
        return Err(BenchError::InvalidParams(format!("seconds must be positive, got {seconds}")));
    }
    let len = (seconds * SAMPLE_RATE_HZ as f64).round() as usize;
    if len == 0 {
        return Err(BenchError::InvalidParams("input rounds to zero samples".into()));
    }
    validate_config(cfg)?;
    let weights = init_weights(cfg, derive_seed(seed, b"bench/weights"))?;
    let generator = Generator::new(cfg, &weights)?;
    let mut rng = SeededRng::new(derive_seed(seed, b"bench/input"));
    let input = AudioBuffer::new(
        (0..len).map(|_| rng.uniform_range(-0.5, 0.5)).collect(),
        SAMPLE_RATE_HZ,
    )
    .expect("finite noise");

    for _ in 0..warmup {
        std::hint::black_box(generator.forward(&input)?);
    }
    let mut timings = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t = Instant::now();
        let y = generator.forward(std::hint::black_box(&input))?;
        timings.push(t.elapsed().as_secs_f64() * 1000.0);
        std::hint::black_box(y);
    }

    let latency = summarize(&timings);
    let (gp, dp) = count_params(cfg);
    let weights_bytes = 4 * gp;
    let activation_bytes = 4 * activation_floats(cfg, len);
    Ok(BenchReport {
        input_seconds: seconds,
        input_samples: len,
        realtime_factor: latency.median / (seconds * 1000.0),
        latency_ms: latency,
        generator_params: gp,
        discriminator_params: dp,
        weights_bytes,
        activation_bytes,
        memory_estimate_bytes: weights_bytes + activation_bytes,
        repetitions: reps,
        warmup_reps: warmup,
        timings_ms: timings,
    })
}
