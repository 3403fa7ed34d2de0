//! Pseudo-QMF filter banks.
//!
//! A single Kaiser-windowed lowpass prototype `h[n]` of length
//! `N = taps_per_band * M` is cosine-modulated into `M` analysis kernels
//!
//! ```text
//! h_i[n] = 2 h[n] cos((2i+1) pi/(2M) (n - (N-1)/2) + (-1)^i pi/4)
//! g_i[n] = 2 h[n] cos((2i+1) pi/(2M) (n - (N-1)/2) - (-1)^i pi/4)
//! ```
//!
//! Analysis is a causal convolution with `h_i` sampled every `M` samples;
//! synthesis inserts `M - 1` zeros between frames, filters with `g_i` and sums
//! the bands. The cascade reproduces the input delayed by `N - 1` samples.
//!
//! The prototype has one free parameter, its cutoff. It is found by bisection
//! so that the squared magnitude at `pi/(2M)` is one half, which makes
//! adjacent bands cross at -3 dB and their aliasing terms cancel.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_4, PI};
use core::fmt::Write as _;

use thiserror::Error;

use crate::audio::AudioBuffer;
use crate::dsp;

/// Stopband attenuation used when none is requested.
pub const DEFAULT_ATTEN_DB: f64 = 72.0;
pub const DEFAULT_TAPS_PER_BAND: usize = 8;

const MAX_BISECTION_STEPS: usize = 200;
const CRITERION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PqmfError {
    #[error("invalid filter-bank parameters: {0}")]
    InvalidParams(&'static str),
    #[error("cutoff search did not converge (residual {residual:e})")]
    NoConvergence { residual: f64 },
    #[error("band count mismatch: bank has {bank} bands, input has {input}")]
    BankMismatch { bank: usize, input: usize },
    #[error("band count {count} outside 1..={bands}")]
    CountOutOfRange { count: usize, bands: usize },
    #[error("empty input")]
    EmptyInput,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeFilter {
    taps: Vec<f64>,
    bands: usize,
    taps_per_band: usize,
    /// Cutoff as a fraction of pi.
    cutoff_normalized: f64,
    atten_db: f64,
    beta: f64,
    criterion_residual: f64,
}

impl PrototypeFilter {
    pub fn taps(&self) -> &[f64] {
        &self.taps
    }
    pub fn len(&self) -> usize {
        self.taps.len()
    }
    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }
    pub fn bands(&self) -> usize {
        self.bands
    }
    pub fn taps_per_band(&self) -> usize {
        self.taps_per_band
    }
    pub fn cutoff_normalized(&self) -> f64 {
        self.cutoff_normalized
    }
    pub fn atten_db(&self) -> f64 {
        self.atten_db
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    /// `|H(pi/(2M))|^2 - 1/2` for the final taps.
    pub fn criterion_residual(&self) -> f64 {
        self.criterion_residual
    }

    /// Worst stopband attenuation in dB (relative to DC) beyond the Kaiser
    /// transition band.
    pub fn achieved_atten_db(&self) -> f64 {
        let n = self.taps.len() as f64;
        let wc = self.cutoff_normalized * PI;
        let transition = (self.atten_db - 7.95) / (2.285 * (n - 1.0));
        let ws = (wc + transition / 2.0).min(PI);
        let dc = dsp::dtft_mag(&self.taps, 0.0);
        let steps = 2048;
        let mut worst = 0.0f64;
        for k in 0..=steps {
            let w = ws + (PI - ws) * k as f64 / steps as f64;
            worst = worst.max(dsp::dtft_mag(&self.taps, w));
        }
        -dsp::mag_to_db(worst / dc)
    }
}

/// Windowed-sinc taps for cutoff `wc` (radians), mirrored so the result is
/// exactly symmetric.
fn windowed_sinc(n_taps: usize, wc: f64, window: &[f64]) -> Vec<f64> {
    let center = (n_taps - 1) as f64 / 2.0;
    let mut taps = alloc::vec![0.0; n_taps];
    for n in 0..n_taps.div_ceil(2) {
        let v = wc / PI * dsp::sinc(wc / PI * (n as f64 - center)) * window[n];
        taps[n] = v;
        taps[n_taps - 1 - n] = v;
    }
    taps
}

fn modulation_arg(i: usize, bands: usize, n: usize, n_taps: usize) -> f64 {
    (2 * i + 1) as f64 * PI / (2 * bands) as f64 * (n as f64 - (n_taps - 1) as f64 / 2.0)
}

fn phase_sign(i: usize) -> f64 {
    if i % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Scales taps so that the analysis kernels have unit total energy, i.e. the
/// analysis/synthesis cascade has unit gain at its zero lag.
fn normalize_cascade_gain(taps: &mut [f64], bands: usize) {
    let n_taps = taps.len();
    let mut total = 0.0;
    for i in 0..bands {
        for (n, &h) in taps.iter().enumerate() {
            let c = libm::cos(modulation_arg(i, bands, n, n_taps) + phase_sign(i) * FRAC_PI_4);
            total += 4.0 * h * h * c * c;
        }
    }
    let scale = 1.0 / libm::sqrt(total);
    for t in taps.iter_mut() {
        *t *= scale;
    }
}

pub fn design_prototype(
    bands: usize,
    taps_per_band: usize,
    atten_db: f64,
) -> Result<PrototypeFilter, PqmfError> {
    if bands < 2 {
        return Err(PqmfError::InvalidParams("bands must be >= 2"));
    }
    if taps_per_band < 4 {
        return Err(PqmfError::InvalidParams("taps_per_band must be >= 4"));
    }
    if !(atten_db >= 40.0) || !atten_db.is_finite() {
        return Err(PqmfError::InvalidParams("atten_db must be >= 40"));
    }
    let n_taps = bands
        .checked_mul(taps_per_band)
        .ok_or(PqmfError::InvalidParams("filter length overflows"))?;
    let beta = dsp::kaiser_beta(atten_db);
    let window = dsp::kaiser(n_taps, beta);
    let probe = PI / (2 * bands) as f64;

    let build = |wc: f64| {
        let mut taps = windowed_sinc(n_taps, wc, &window);
        normalize_cascade_gain(&mut taps, bands);
        taps
    };
    let criterion = |taps: &[f64]| dsp::dtft(taps, probe).norm_sqr() - 0.5;

    let mut lo = 1e-9 * PI / bands as f64;
    let mut hi = PI / bands as f64;
    let f_lo = criterion(&build(lo));
    let f_hi = criterion(&build(hi));
    if f_lo > 0.0 || f_hi < 0.0 {
        return Err(PqmfError::NoConvergence {
            residual: if f_lo > 0.0 { f_lo } else { f_hi },
        });
    }
    let mut steps = 0;
    let (wc, taps, residual) = loop {
        let mid = 0.5 * (lo + hi);
        let taps = build(mid);
        let r = criterion(&taps);
        if r.abs() < CRITERION_TOL {
            break (mid, taps, r);
        }
        steps += 1;
        if steps >= MAX_BISECTION_STEPS {
            return Err(PqmfError::NoConvergence { residual: r });
        }
        if r < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    };

    Ok(PrototypeFilter {
        taps,
        bands,
        taps_per_band,
        cutoff_normalized: wc / PI,
        atten_db,
        beta,
        criterion_residual: residual,
    })
}

/// Analysis and synthesis kernels of an `M`-band bank.
#[derive(Debug, Clone, PartialEq)]
pub struct PqmfBank {
    prototype: PrototypeFilter,
    analysis: Vec<Vec<f64>>,
    synthesis: Vec<Vec<f64>>,
}

pub fn modulate_bank(proto: &PrototypeFilter) -> PqmfBank {
    let bands = proto.bands;
    let n_taps = proto.taps.len();
    let kernel = |i: usize, sign: f64| -> Vec<f64> {
        proto
            .taps
            .iter()
            .enumerate()
            .map(|(n, &h)| {
                2.0 * h * libm::cos(modulation_arg(i, bands, n, n_taps) + sign * phase_sign(i) * FRAC_PI_4)
            })
            .collect()
    };
    PqmfBank {
        prototype: proto.clone(),
        analysis: (0..bands).map(|i| kernel(i, 1.0)).collect(),
        synthesis: (0..bands).map(|i| kernel(i, -1.0)).collect(),
    }
}

impl PqmfBank {
    /// Designs the prototype and modulates it in one step.
    pub fn new(bands: usize, taps_per_band: usize, atten_db: f64) -> Result<Self, PqmfError> {
        Ok(modulate_bank(&design_prototype(bands, taps_per_band, atten_db)?))
    }

    pub fn bands(&self) -> usize {
        self.prototype.bands
    }
    pub fn kernel_len(&self) -> usize {
        self.prototype.taps.len()
    }
    pub fn prototype(&self) -> &PrototypeFilter {
        &self.prototype
    }
    pub fn analysis_kernel(&self, band: usize) -> &[f64] {
        &self.analysis[band]
    }
    pub fn synthesis_kernel(&self, band: usize) -> &[f64] {
        &self.synthesis[band]
    }
    /// Latency of analysis followed by synthesis, in samples.
    pub fn delay(&self) -> usize {
        self.kernel_len() - 1
    }

    /// Splits `buf` into `M` decimated bands.
    pub fn analyze(&self, buf: &AudioBuffer) -> Result<SubbandTensor, PqmfError> {
        let mut sub = self.analyze_samples(buf.samples())?;
        sub.source_rate_hz = buf.sample_rate_hz();
        Ok(sub)
    }

    pub(crate) fn analyze_samples(&self, x: &[f64]) -> Result<SubbandTensor, PqmfError> {
        if x.is_empty() {
            return Err(PqmfError::EmptyInput);
        }
        let m = self.bands();
        let pad = (m - x.len() % m) % m;
        let frames = (x.len() + pad) / m;
        let mut data = alloc::vec![0.0; m * frames];
        for (i, kernel) in self.analysis.iter().enumerate() {
            let row = &mut data[i * frames..(i + 1) * frames];
            for (t, out) in row.iter_mut().enumerate() {
                let pos = t * m;
                // sum_n h_i[n] x[pos - n], x zero outside [0, len)
                let n_max = pos.min(kernel.len() - 1);
                let mut acc = 0.0;
                for n in 0..=n_max {
                    if let Some(&xv) = x.get(pos - n) {
                        acc += kernel[n] * xv;
                    }
                }
                *out = acc;
            }
        }
        Ok(SubbandTensor {
            bands: m,
            first_band: 0,
            frames,
            data,
            source_rate_hz: 0,
            pad,
        })
    }

    /// Recombines a full set of bands into a signal of the original length.
    pub fn synthesize(&self, sub: &SubbandTensor) -> Result<AudioBuffer, PqmfError> {
        let out = self.synthesize_samples(sub)?;
        let rate = if sub.source_rate_hz == 0 {
            crate::audio::SAMPLE_RATE_HZ
        } else {
            sub.source_rate_hz
        };
        Ok(AudioBuffer::new(out, rate).expect("finite synthesis of finite bands"))
    }

    pub(crate) fn synthesize_samples(&self, sub: &SubbandTensor) -> Result<Vec<f64>, PqmfError> {
        let m = self.bands();
        if sub.bands != m || sub.first_band != 0 {
            return Err(PqmfError::BankMismatch {
                bank: m,
                input: sub.bands,
            });
        }
        let total = m * sub.frames;
        let mut out = alloc::vec![0.0; total];
        let gain = m as f64;
        for (i, kernel) in self.synthesis.iter().enumerate() {
            for (t, &v) in sub.band(i).iter().enumerate() {
                if v == 0.0 {
                    continue;
                }
                let a = gain * v;
                let start = t * m;
                for (o, &g) in out[start..].iter_mut().zip(kernel) {
                    *o += a * g;
                }
            }
        }
        out.truncate(total - sub.pad);
        Ok(out)
    }

    /// Plain-text design report for diffing against other implementations.
    pub fn design_report(&self) -> String {
        let p = &self.prototype;
        let mut s = String::new();
        let _ = writeln!(s, "pqmf-design-report v1");
        let _ = writeln!(s, "bands {}", p.bands);
        let _ = writeln!(s, "taps_per_band {}", p.taps_per_band);
        let _ = writeln!(s, "length {}", p.taps.len());
        let _ = writeln!(s, "atten_db {}", fmt_f64(p.atten_db));
        let _ = writeln!(s, "kaiser_beta {}", fmt_f64(p.beta));
        let _ = writeln!(s, "cutoff_normalized {}", fmt_f64(p.cutoff_normalized));
        let _ = writeln!(s, "criterion_residual {}", fmt_f64(p.criterion_residual));
        let _ = writeln!(s, "achieved_atten_db {}", fmt_f64(p.achieved_atten_db()));
        let _ = writeln!(s, "delay {}", self.delay());
        let _ = writeln!(s, "taps");
        for (n, h) in p.taps.iter().enumerate() {
            let _ = writeln!(s, "{n} {}", fmt_f64(*h));
        }
        s
    }
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.17e}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandSelection {
    /// Bands `[0, count)`.
    LowestP,
    /// Bands `[M - count, M)`.
    UpperQ,
}

/// `M` decimated bands stored band-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SubbandTensor {
    bands: usize,
    first_band: usize,
    frames: usize,
    data: Vec<f64>,
    source_rate_hz: u32,
    pad: usize,
}

impl SubbandTensor {
    /// Builds a full-bank tensor from band-major data.
    pub fn from_bands(
        bands: usize,
        frames: usize,
        data: Vec<f64>,
        source_rate_hz: u32,
    ) -> Result<Self, PqmfError> {
        if data.len() != bands * frames {
            return Err(PqmfError::InvalidParams("data length != bands * frames"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(PqmfError::InvalidParams("non-finite band value"));
        }
        Ok(Self {
            bands,
            first_band: 0,
            frames,
            data,
            source_rate_hz,
            pad: 0,
        })
    }

    pub fn bands(&self) -> usize {
        self.bands
    }
    /// Index in the producing bank of the first band held here.
    pub fn first_band(&self) -> usize {
        self.first_band
    }
    pub fn frames(&self) -> usize {
        self.frames
    }
    /// Zeros appended to the input to reach a multiple of `M`.
    pub fn pad(&self) -> usize {
        self.pad
    }
    pub fn source_rate_hz(&self) -> u32 {
        self.source_rate_hz
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }
    pub fn band(&self, i: usize) -> &[f64] {
        &self.data[i * self.frames..(i + 1) * self.frames]
    }
    pub fn energy(&self) -> f64 {
        crate::audio::energy(&self.data)
    }

    /// Replaces band values keeping the shape, padding and provenance.
    pub fn with_data(&self, data: Vec<f64>) -> Result<Self, PqmfError> {
        if data.len() != self.data.len() {
            return Err(PqmfError::InvalidParams("data length != bands * frames"));
        }
        Ok(Self {
            data,
            ..self.clone()
        })
    }

    pub fn select_bands(&self, mode: BandSelection, count: usize) -> Result<Self, PqmfError> {
        if count == 0 || count > self.bands {
            return Err(PqmfError::CountOutOfRange {
                count,
                bands: self.bands,
            });
        }
        let start = match mode {
            BandSelection::LowestP => 0,
            BandSelection::UpperQ => self.bands - count,
        };
        Ok(Self {
            bands: count,
            first_band: self.first_band + start,
            frames: self.frames,
            data: self.data[start * self.frames..(start + count) * self.frames].to_vec(),
            source_rate_hz: self.source_rate_hz,
            pad: self.pad,
        })
    }
}
