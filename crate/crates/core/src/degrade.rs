//! Simulated in-ear degradations.
//!
//! Two pipelines turn clean speech into in-ear-like speech:
//!
//! - **fixed**: a 600 Hz, Q = 1 biquad lowpass applied forward and backward
//!   (zero phase), followed by white Gaussian noise 23 dB below the filtered
//!   signal;
//! - **random**: a linear-phase FIR whose magnitude is drawn per frequency
//!   point between two dB envelopes, faded out above 3 kHz with a Hann taper,
//!   followed by the same noise.
//!
//! All randomness comes from [`SeededRng`], so outputs are pure functions of
//! `(input, seed)`.

use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{energy, AudioBuffer};
use crate::dsp;
use crate::rng::{derive_seed, SeededRng};

pub const PSI_FIXED_CUTOFF_HZ: f64 = 600.0;
pub const PSI_FIXED_Q: f64 = 1.0;
/// Noise level relative to the filtered signal power.
pub const NOISE_REL_DB: f64 = -23.0;
pub const APODIZE_START_HZ: f64 = 3000.0;
pub const DEFAULT_FIR_LENGTH: usize = 512;
/// Magnitude floor of the random response (-80 dB).
const RANDOM_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DegradeError {
    #[error("invalid filter parameters: {0}")]
    InvalidParams(&'static str),
    #[error("buffer of {len} samples is too short (need more than {min})")]
    BufferTooShort { len: usize, min: usize },
    #[error("signal is all zeros")]
    AllZeroSignal,
    #[error("invalid random response spec: {0}")]
    InvalidSpec(&'static str),
    #[error("expected {expected} Hz input, got {got} Hz")]
    UnsupportedSampleRate { expected: u32, got: u32 },
}

/// Second-order section with `a0` normalized to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiquadCoeffs {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
    pub fc_hz: f64,
    pub q_factor: f64,
    pub fs_hz: f64,
}

/// Bilinear-transform lowpass with the cutoff prewarped, so the digital
/// response at `fc_hz` equals the analog one (gain `q` there).
pub fn design_biquad_lowpass(fc_hz: f64, q: f64, fs_hz: f64) -> Result<BiquadCoeffs, DegradeError> {
    if !(fs_hz > 0.0) || !fs_hz.is_finite() {
        return Err(DegradeError::InvalidParams("fs_hz must be positive"));
    }
    if !(fc_hz > 0.0 && fc_hz < fs_hz / 2.0) {
        return Err(DegradeError::InvalidParams("fc_hz must lie in (0, fs/2)"));
    }
    if !(q > 0.0) || !q.is_finite() {
        return Err(DegradeError::InvalidParams("q must be positive"));
    }
    let w0 = 2.0 * PI * fc_hz / fs_hz;
    let (sin_w, cos_w) = libm::sincos(w0);
    let alpha = sin_w / (2.0 * q);
    let a0 = 1.0 + alpha;
    Ok(BiquadCoeffs {
        b0: (1.0 - cos_w) / 2.0 / a0,
        b1: (1.0 - cos_w) / a0,
        b2: (1.0 - cos_w) / 2.0 / a0,
        a1: -2.0 * cos_w / a0,
        a2: (1.0 - alpha) / a0,
        fc_hz,
        q_factor: q,
        fs_hz,
    })
}

impl BiquadCoeffs {
    /// Complex frequency response at `f_hz`.
    pub fn response(&self, f_hz: f64) -> Complex64 {
        let w = 2.0 * PI * f_hz / self.fs_hz;
        let z1 = Complex64::from_polar(1.0, -w);
        let z2 = z1 * z1;
        (self.b0 + z1 * self.b1 + z2 * self.b2) / (1.0 + z1 * self.a1 + z2 * self.a2)
    }

    pub fn dc_gain(&self) -> f64 {
        (self.b0 + self.b1 + self.b2) / (1.0 + self.a1 + self.a2)
    }

    /// Both poles strictly inside the unit circle (stability triangle).
    pub fn is_stable(&self) -> bool {
        self.a2.abs() < 1.0 && self.a1.abs() < 1.0 + self.a2
    }

    /// Single pass, transposed direct form II, starting from state `zi`.
    fn lfilter(&self, x: &[f64], zi: [f64; 2]) -> Vec<f64> {
        let [mut z0, mut z1] = zi;
        x.iter()
            .map(|&v| {
                let y = self.b0 * v + z0;
                z0 = self.b1 * v - self.a1 * y + z1;
                z1 = self.b2 * v - self.a2 * y;
                y
            })
            .collect()
    }

    /// Steady-state state for a unit step input.
    fn step_state(&self) -> [f64; 2] {
        let r0 = self.b1 - self.a1 * self.b0;
        let r1 = self.b2 - self.a2 * self.b0;
        let z0 = (r0 + r1) / (1.0 + self.a1 + self.a2);
        [z0, r1 - self.a2 * z0]
    }
}

/// Zero-phase forward-backward filtering.
///
/// Edges are extended by odd reflection over `3 * max(len(b), len(a)) = 9`
/// samples and both passes start from the step steady state scaled by the
/// first sample, so a constant input comes out unchanged.
pub fn filtfilt(coeffs: &BiquadCoeffs, buf: &AudioBuffer) -> Result<AudioBuffer, DegradeError> {
    const ORDER: usize = 2;
    const PADLEN: usize = 3 * (ORDER + 1);
    let x = buf.samples();
    if x.len() <= 6 * ORDER {
        return Err(DegradeError::BufferTooShort {
            len: x.len(),
            min: 6 * ORDER,
        });
    }
    let n = x.len();
    let mut ext = Vec::with_capacity(n + 2 * PADLEN);
    ext.extend((1..=PADLEN).rev().map(|k| 2.0 * x[0] - x[k]));
    ext.extend_from_slice(x);
    ext.extend((1..=PADLEN).map(|k| 2.0 * x[n - 1] - x[n - 1 - k]));

    let zi = coeffs.step_state();
    let scaled = |s: f64| [zi[0] * s, zi[1] * s];
    let mut fwd = coeffs.lfilter(&ext, scaled(ext[0]));
    fwd.reverse();
    let mut back = coeffs.lfilter(&fwd, scaled(fwd[0]));
    back.reverse();
    Ok(buf.with_samples(back[PADLEN..PADLEN + n].to_vec()))
}

/// Adds white Gaussian noise whose power is `rel_db` below (or above) the
/// power of `buf`. Returns the noisy buffer and the measured level in dB.
///
/// `rel_db = -inf` disables the noise and returns the input unchanged.
pub fn add_relative_noise(
    buf: &AudioBuffer,
    rel_db: f64,
    seed: u64,
) -> Result<(AudioBuffer, Option<f64>), DegradeError> {
    if rel_db == f64::NEG_INFINITY {
        return Ok((buf.clone(), None));
    }
    if rel_db.is_nan() || rel_db == f64::INFINITY {
        return Err(DegradeError::InvalidParams("rel_db must be finite or -inf"));
    }
    let p_signal = buf.power();
    if p_signal == 0.0 {
        return Err(DegradeError::AllZeroSignal);
    }
    let sigma = libm::sqrt(p_signal * libm::pow(10.0, rel_db / 10.0));
    let mut rng = SeededRng::new(seed);
    let noise: Vec<f64> = (0..buf.len()).map(|_| sigma * rng.normal()).collect();
    let measured = 10.0 * libm::log10(energy(&noise) / energy(buf.samples()));
    let out = buf
        .samples()
        .iter()
        .zip(&noise)
        .map(|(s, n)| s + n)
        .collect();
    Ok((buf.with_samples(out), Some(measured)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pipeline {
    Fixed,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradationReport {
    /// `None` when noise injection was disabled.
    pub measured_noise_rel_db: Option<f64>,
    /// Output samples outside `[-1, 1]`.
    pub clip_count: usize,
    pub pipeline: Pipeline,
    pub seed: u64,
}

fn require_16k(buf: &AudioBuffer) -> Result<(), DegradeError> {
    if buf.sample_rate_hz() != crate::SAMPLE_RATE_HZ {
        return Err(DegradeError::UnsupportedSampleRate {
            expected: crate::SAMPLE_RATE_HZ,
            got: buf.sample_rate_hz(),
        });
    }
    Ok(())
}

fn clip_count(x: &[f64]) -> usize {
    x.iter().filter(|v| v.abs() > 1.0).count()
}

/// Fixed degradation: zero-phase 600 Hz lowpass, then -23 dB noise.
pub fn apply_psi_fixed(
    buf: &AudioBuffer,
    seed: u64,
) -> Result<(AudioBuffer, DegradationReport), DegradeError> {
    require_16k(buf)?;
    if buf.peak() == 0.0 {
        return Err(DegradeError::AllZeroSignal);
    }
    let coeffs = design_biquad_lowpass(
        PSI_FIXED_CUTOFF_HZ,
        PSI_FIXED_Q,
        buf.sample_rate_hz() as f64,
    )?;
    let filtered = filtfilt(&coeffs, buf)?;
    let (out, measured) = add_relative_noise(&filtered, NOISE_REL_DB, seed)?;
    let report = DegradationReport {
        measured_noise_rel_db: measured,
        clip_count: clip_count(out.samples()),
        pipeline: Pipeline::Fixed,
        seed,
    };
    Ok((out, report))
}

/// Lower and upper dB envelopes over an ascending frequency grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseBounds {
    pub freq_grid_hz: Vec<f64>,
    pub lower_db: Vec<f64>,
    pub upper_db: Vec<f64>,
}

impl ResponseBounds {
    pub fn validate(&self, sample_rate_hz: f64) -> Result<(), DegradeError> {
        let n = self.freq_grid_hz.len();
        if n < 2 {
            return Err(DegradeError::InvalidSpec("grid needs at least two points"));
        }
        if self.lower_db.len() != n || self.upper_db.len() != n {
            return Err(DegradeError::InvalidSpec("bound lengths differ from grid"));
        }
        if self.freq_grid_hz.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(DegradeError::InvalidSpec("grid must be strictly ascending"));
        }
        if !(self.freq_grid_hz[0] >= 0.0) || self.freq_grid_hz[n - 1] < sample_rate_hz / 2.0 {
            return Err(DegradeError::InvalidSpec("grid must cover (0, fs/2]"));
        }
        let all = self.lower_db.iter().chain(&self.upper_db);
        if all.clone().any(|v| !v.is_finite()) {
            return Err(DegradeError::InvalidSpec("non-finite bound"));
        }
        if self.lower_db.iter().zip(&self.upper_db).any(|(l, u)| l > u) {
            return Err(DegradeError::InvalidSpec("lower bound above upper bound"));
        }
        Ok(())
    }

    /// Placeholder in-ear envelope for 16 kHz audio: a low-frequency boost,
    /// dips near 900 Hz and 1.7 kHz and a steep decline above 2 kHz, with the
    /// spread widening at high frequencies. Not a measured device; measure
    /// one with the `sysid` module for realistic bounds.
    pub fn placeholder() -> Self {
        // (Hz, center dB, half-spread dB)
        const KNOTS: [(f64, f64, f64); 11] = [
            (0.0, -4.0, 4.0),
            (150.0, 2.0, 3.0),
            (400.0, 4.0, 3.0),
            (700.0, 0.0, 3.0),
            (900.0, -5.0, 4.0),
            (1200.0, -4.0, 4.0),
            (1700.0, -12.0, 5.0),
            (2200.0, -18.0, 6.0),
            (3000.0, -28.0, 8.0),
            (5000.0, -40.0, 10.0),
            (8000.0, -50.0, 10.0),
        ];
        let step = 31.25;
        let mut grid = Vec::new();
        let mut lower = Vec::new();
        let mut upper = Vec::new();
        let mut f = 0.0;
        while f <= 8000.0 {
            let k = KNOTS.iter().rposition(|kn| kn.0 <= f).unwrap().min(KNOTS.len() - 2);
            let (f0, c0, s0) = KNOTS[k];
            let (f1, c1, s1) = KNOTS[k + 1];
            let t = (f - f0) / (f1 - f0);
            let c = c0 + (c1 - c0) * t;
            let s = s0 + (s1 - s0) * t;
            grid.push(f);
            lower.push(c - s);
            upper.push(c + s);
            f += step;
        }
        Self {
            freq_grid_hz: grid,
            lower_db: lower,
            upper_db: upper,
        }
    }

    /// Linear interpolation of `values` at `f`, clamped at the grid ends.
    fn interp(&self, values: &[f64], f: f64) -> f64 {
        let g = &self.freq_grid_hz;
        if f <= g[0] {
            return values[0];
        }
        if f >= g[g.len() - 1] {
            return values[values.len() - 1];
        }
        let k = g.partition_point(|&x| x <= f) - 1;
        let t = (f - g[k]) / (g[k + 1] - g[k]);
        values[k] + (values[k + 1] - values[k]) * t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomResponseSpec {
    pub bounds: ResponseBounds,
    pub apodize_start_hz: f64,
    pub fir_length: usize,
    pub sample_rate_hz: f64,
    pub seed: u64,
}

impl RandomResponseSpec {
    pub fn new(bounds: ResponseBounds, seed: u64) -> Self {
        Self {
            bounds,
            apodize_start_hz: APODIZE_START_HZ,
            fir_length: DEFAULT_FIR_LENGTH,
            sample_rate_hz: crate::SAMPLE_RATE_HZ as f64,
            seed,
        }
    }

    fn validate(&self) -> Result<(), DegradeError> {
        self.bounds.validate(self.sample_rate_hz)?;
        if self.fir_length < 16 {
            return Err(DegradeError::InvalidSpec("fir_length must be >= 16"));
        }
        if !(self.apodize_start_hz > 0.0 && self.apodize_start_hz < self.sample_rate_hz / 2.0) {
            return Err(DegradeError::InvalidSpec("apodize_start_hz must lie in (0, fs/2)"));
        }
        Ok(())
    }

    /// Hann fade: 1 up to the apodization start, 0 at Nyquist.
    pub fn apodization(&self, f_hz: f64) -> f64 {
        let nyq = self.sample_rate_hz / 2.0;
        if f_hz <= self.apodize_start_hz {
            1.0
        } else if f_hz >= nyq {
            0.0
        } else {
            let t = (f_hz - self.apodize_start_hz) / (nyq - self.apodize_start_hz);
            0.5 * (1.0 + libm::cos(PI * t))
        }
    }

    /// Draws the per-grid-point magnitudes (dB) for this spec's seed.
    pub fn draw_db(&self) -> Vec<f64> {
        let mut rng = SeededRng::new(self.seed);
        self.bounds
            .lower_db
            .iter()
            .zip(&self.bounds.upper_db)
            .map(|(&lo, &hi)| rng.uniform_range(lo, hi))
            .collect()
    }
}

/// Draws one random response and realizes it as a linear-phase FIR of
/// `spec.fir_length` taps by frequency sampling with a Blackman window.
pub fn sample_psi_random(spec: &RandomResponseSpec) -> Result<Vec<f64>, DegradeError> {
    spec.validate()?;
    let drawn = spec.draw_db();
    let taps = frequency_sampling_fir(spec, |f| {
        let mag = dsp::db_to_mag(spec.bounds.interp(&drawn, f)) * spec.apodization(f);
        mag.max(RANDOM_FLOOR)
    });
    Ok(taps)
}

fn frequency_sampling_fir(spec: &RandomResponseSpec, magnitude: impl Fn(f64) -> f64) -> Vec<f64> {
    let len = spec.fir_length;
    let nfft = (2 * len).next_power_of_two().max(1024);
    let delay = (len - 1) as f64 / 2.0;
    let mut spectrum = alloc::vec![Complex64::new(0.0, 0.0); nfft];
    for k in 0..=nfft / 2 {
        let f = k as f64 * spec.sample_rate_hz / nfft as f64;
        let w = 2.0 * PI * k as f64 / nfft as f64;
        let v = Complex64::from_polar(magnitude(f), -w * delay);
        spectrum[k] = v;
        if k > 0 && k < nfft / 2 {
            spectrum[nfft - k] = v.conj();
        }
    }
    // Nyquist bin must be real for a real impulse response.
    spectrum[nfft / 2] = Complex64::new(spectrum[nfft / 2].re, 0.0);
    dsp::fft_in_place(&mut spectrum, true);
    let window = dsp::blackman(len);
    spectrum[..len]
        .iter()
        .zip(&window)
        .map(|(c, w)| c.re * w)
        .collect()
}

/// Applies an FIR and compensates its (integer part of the) linear-phase
/// delay so the output stays aligned with the input.
pub fn apply_fir_aligned(taps: &[f64], buf: &AudioBuffer) -> AudioBuffer {
    let full = dsp::convolve(buf.samples(), taps);
    let shift = (taps.len() - 1) / 2;
    buf.with_samples(full[shift..shift + buf.len()].to_vec())
}

/// Random degradation: a freshly drawn FIR, then -23 dB noise. The FIR draw
/// and the noise use independent seeds derived from `seed`.
pub fn apply_psi_random(
    buf: &AudioBuffer,
    bounds: &ResponseBounds,
    fir_length: usize,
    seed: u64,
) -> Result<(AudioBuffer, DegradationReport), DegradeError> {
    require_16k(buf)?;
    if buf.peak() == 0.0 {
        return Err(DegradeError::AllZeroSignal);
    }
    let mut spec = RandomResponseSpec::new(bounds.clone(), derive_seed(seed, b"psi_random/fir"));
    spec.fir_length = fir_length;
    let taps = sample_psi_random(&spec)?;
    let filtered = apply_fir_aligned(&taps, buf);
    let (out, measured) =
        add_relative_noise(&filtered, NOISE_REL_DB, derive_seed(seed, b"psi_random/noise"))?;
    let report = DegradationReport {
        measured_noise_rel_db: measured,
        clip_count: clip_count(out.samples()),
        pipeline: Pipeline::Random,
        seed,
    };
    Ok((out, report))
}
