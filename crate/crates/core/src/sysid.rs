//! Transfer-function and coherence estimation from paired recordings.
//!
//! `y` is the reference (airborne) signal and `x` the captured one. Per
//! analysis horizon the transfer estimate is the ratio of the cross density
//! to the reference auto density; horizons are then aggregated by pointwise
//! median and 10th/90th percentiles of the magnitude in dB.

use alloc::vec::Vec;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::AudioBuffer;
use crate::dsp;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SysidError {
    #[error("buffer is empty")]
    EmptyBuffer,
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("buffers differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("segment {index} out of range ({count} segments)")]
    SegmentOutOfRange { index: usize, count: usize },
    #[error("only {active} active segments, need at least {needed}")]
    TooFewSegments { active: usize, needed: usize },
    #[error("{frames} analysis frames available, need at least {needed}")]
    BufferTooShort { frames: usize, needed: usize },
}

pub const MIN_ACTIVE_SEGMENTS: usize = 3;
pub const MIN_COHERENCE_FRAMES: usize = 8;
pub const DEFAULT_VAD_THRESHOLD_DB: f64 = 30.0;
pub const SMOOTHING_BINS: usize = 5;
/// A horizon counts as active when at least this share of its VAD frames is.
const ACTIVE_SHARE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchConfig {
    pub fft_size: usize,
    /// Overlap between consecutive frames inside a horizon.
    pub segment_overlap: f64,
    pub horizon_samples: usize,
    /// Overlap between consecutive horizons.
    pub horizon_overlap: f64,
    pub sample_rate_hz: f64,
}

impl Default for WelchConfig {
    fn default() -> Self {
        Self {
            fft_size: 512,
            segment_overlap: 0.5,
            horizon_samples: 16384,
            horizon_overlap: 0.5,
            sample_rate_hz: crate::SAMPLE_RATE_HZ as f64,
        }
    }
}

impl WelchConfig {
    pub fn validate(&self) -> Result<(), SysidError> {
        if !self.fft_size.is_power_of_two() || self.fft_size < 4 {
            return Err(SysidError::InvalidConfig("fft_size must be a power of two >= 4"));
        }
        if !(0.0..1.0).contains(&self.segment_overlap) || !(0.0..1.0).contains(&self.horizon_overlap) {
            return Err(SysidError::InvalidConfig("overlap must lie in [0, 1)"));
        }
        if self.horizon_samples < 2 * self.fft_size {
            return Err(SysidError::InvalidConfig("horizon must span at least two frames"));
        }
        if !(self.sample_rate_hz > 0.0) {
            return Err(SysidError::InvalidConfig("sample rate must be positive"));
        }
        Ok(())
    }

    pub fn frame_hop(&self) -> usize {
        hop(self.fft_size, self.segment_overlap)
    }

    pub fn horizon_hop(&self) -> usize {
        hop(self.horizon_samples, self.horizon_overlap)
    }

    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn freq_grid_hz(&self) -> Vec<f64> {
        (0..self.bins())
            .map(|k| k as f64 * self.sample_rate_hz / self.fft_size as f64)
            .collect()
    }

    /// Number of whole horizons in a signal of `len` samples.
    pub fn segment_count(&self, len: usize) -> usize {
        count_frames(len, self.horizon_samples, self.horizon_hop())
    }
}

fn hop(len: usize, overlap: f64) -> usize {
    ((len as f64 * (1.0 - overlap)) as usize).max(1)
}

fn count_frames(len: usize, frame: usize, hop: usize) -> usize {
    if len < frame {
        0
    } else {
        (len - frame) / hop + 1
    }
}

/// Per-frame activity of a reference signal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VadMask {
    pub frame_len: usize,
    pub active: Vec<bool>,
}

impl VadMask {
    pub fn all_active(len: usize, frame_len: usize) -> Self {
        Self {
            frame_len,
            active: alloc::vec![true; len.div_ceil(frame_len)],
        }
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|a| **a).count()
    }

    /// Share of active frames among those overlapping `[start, end)`.
    fn active_share(&self, start: usize, end: usize) -> f64 {
        let first = start / self.frame_len;
        let last = end.div_ceil(self.frame_len).min(self.active.len());
        if last <= first {
            return 0.0;
        }
        let on = self.active[first..last].iter().filter(|a| **a).count();
        on as f64 / (last - first) as f64
    }
}

/// Marks frames whose RMS is within `threshold_db` of the loudest frame.
/// An infinite threshold marks every frame active.
pub fn vad_mask(reference: &AudioBuffer, threshold_db: f64, frame: usize) -> Result<VadMask, SysidError> {
    if frame == 0 {
        return Err(SysidError::InvalidConfig("frame must be positive"));
    }
    if reference.is_empty() {
        return Err(SysidError::EmptyBuffer);
    }
    if threshold_db.is_nan() || threshold_db < 0.0 {
        return Err(SysidError::InvalidConfig("threshold must be non-negative"));
    }
    if threshold_db == f64::INFINITY {
        return Ok(VadMask::all_active(reference.len(), frame));
    }
    let levels: Vec<f64> = reference
        .samples()
        .chunks(frame)
        .map(|c| {
            let ms = c.iter().map(|v| v * v).sum::<f64>() / c.len() as f64;
            10.0 * libm::log10(ms)
        })
        .collect();
    let peak = levels.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(VadMask {
        frame_len: frame,
        active: levels.iter().map(|&l| l >= peak - threshold_db).collect(),
    })
}

/// Welch densities on the half-spectrum grid, one-sided and normalized by
/// the window energy and sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDensities {
    /// Cross density `E[conj(Y) X]`.
    pub pyx: Vec<Complex64>,
    pub pyy: Vec<f64>,
    pub pxx: Vec<f64>,
    pub frames: usize,
}

fn check_pair(y: &AudioBuffer, x: &AudioBuffer) -> Result<(), SysidError> {
    if y.len() != x.len() {
        return Err(SysidError::LengthMismatch(y.len(), x.len()));
    }
    if y.is_empty() {
        return Err(SysidError::EmptyBuffer);
    }
    Ok(())
}

/// Averages frame periodograms over `y[start..end]`, `x[start..end]`.
fn welch_span(y: &[f64], x: &[f64], cfg: &WelchConfig) -> SpectralDensities {
    let n = cfg.fft_size;
    let window = dsp::hann_periodic(n);
    let win_energy: f64 = window.iter().map(|w| w * w).sum();
    let frames = count_frames(y.len(), n, cfg.frame_hop());
    let bins = cfg.bins();
    let mut pyx = alloc::vec![Complex64::new(0.0, 0.0); bins];
    let mut pyy = alloc::vec![0.0; bins];
    let mut pxx = alloc::vec![0.0; bins];
    let mut fy = alloc::vec![0.0; n];
    let mut fx = alloc::vec![0.0; n];
    for f in 0..frames {
        let s = f * cfg.frame_hop();
        for i in 0..n {
            fy[i] = y[s + i] * window[i];
            fx[i] = x[s + i] * window[i];
        }
        let sy = dsp::rfft(&fy);
        let sx = dsp::rfft(&fx);
        for k in 0..bins {
            pyx[k] += sy[k].conj() * sx[k];
            pyy[k] += sy[k].norm_sqr();
            pxx[k] += sx[k].norm_sqr();
        }
    }
    let base = 1.0 / (frames.max(1) as f64 * cfg.sample_rate_hz * win_energy);
    for k in 0..bins {
        let scale = if k == 0 || k == bins - 1 { base } else { 2.0 * base };
        pyx[k] *= scale;
        pyy[k] *= scale;
        pxx[k] *= scale;
    }
    SpectralDensities { pyx, pyy, pxx, frames }
}

/// Densities for analysis horizon `segment_index`.
pub fn welch_densities(
    x: &AudioBuffer,
    y: &AudioBuffer,
    cfg: &WelchConfig,
    segment_index: usize,
) -> Result<SpectralDensities, SysidError> {
    cfg.validate()?;
    check_pair(y, x)?;
    let count = cfg.segment_count(y.len());
    if segment_index >= count {
        return Err(SysidError::SegmentOutOfRange {
            index: segment_index,
            count,
        });
    }
    let start = segment_index * cfg.horizon_hop();
    let span = start..start + cfg.horizon_samples;
    Ok(welch_span(
        &y.samples()[span.clone()],
        &x.samples()[span],
        cfg,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferFunctionEstimate {
    pub freq_grid_hz: Vec<f64>,
    pub median_db: Vec<f64>,
    pub smoothed_db: Vec<f64>,
    pub p10_db: Vec<f64>,
    pub p90_db: Vec<f64>,
    pub n_segments: usize,
}

/// Median and percentile transfer magnitude over the VAD-active horizons.
pub fn estimate_transfer(
    y: &AudioBuffer,
    x: &AudioBuffer,
    cfg: &WelchConfig,
    vad: &VadMask,
) -> Result<TransferFunctionEstimate, SysidError> {
    cfg.validate()?;
    check_pair(y, x)?;
    let count = cfg.segment_count(y.len());
    let active: Vec<usize> = (0..count)
        .filter(|&i| {
            let s = i * cfg.horizon_hop();
            vad.active_share(s, s + cfg.horizon_samples) >= ACTIVE_SHARE
        })
        .collect();
    if active.len() < MIN_ACTIVE_SEGMENTS {
        return Err(SysidError::TooFewSegments {
            active: active.len(),
            needed: MIN_ACTIVE_SEGMENTS,
        });
    }
    let bins = cfg.bins();
    // per_bin[k][i]: dB magnitude at bin k for horizon i
    let mut per_bin = alloc::vec![Vec::with_capacity(active.len()); bins];
    for &i in &active {
        let d = welch_densities(x, y, cfg, i)?;
        for k in 0..bins {
            let ratio = if d.pyy[k] > 0.0 { d.pyx[k].norm() / d.pyy[k] } else { 0.0 };
            per_bin[k].push(dsp::mag_to_db(ratio));
        }
    }
    let mut median_db = Vec::with_capacity(bins);
    let mut p10_db = Vec::with_capacity(bins);
    let mut p90_db = Vec::with_capacity(bins);
    for v in per_bin.iter_mut() {
        v.sort_by(|a, b| a.total_cmp(b));
        median_db.push(dsp::percentile_sorted(v, 50.0));
        p10_db.push(dsp::percentile_sorted(v, 10.0));
        p90_db.push(dsp::percentile_sorted(v, 90.0));
    }
    Ok(TransferFunctionEstimate {
        freq_grid_hz: cfg.freq_grid_hz(),
        smoothed_db: moving_average(&median_db, SMOOTHING_BINS),
        median_db,
        p10_db,
        p90_db,
        n_segments: active.len(),
    })
}

/// Centered moving average; the window shrinks at the edges.
pub fn moving_average(v: &[f64], width: usize) -> Vec<f64> {
    let half = width / 2;
    (0..v.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(v.len());
            v[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceCurve {
    pub freq_grid_hz: Vec<f64>,
    pub coherence: Vec<f64>,
    pub frames: usize,
}

/// Magnitude-squared coherence over every frame of the recording. Bins
/// where either signal has no energy get zero.
pub fn coherence(y: &AudioBuffer, x: &AudioBuffer, cfg: &WelchConfig) -> Result<CoherenceCurve, SysidError> {
    cfg.validate()?;
    check_pair(y, x)?;
    let frames = count_frames(y.len(), cfg.fft_size, cfg.frame_hop());
    if frames < MIN_COHERENCE_FRAMES {
        return Err(SysidError::BufferTooShort {
            frames,
            needed: MIN_COHERENCE_FRAMES,
        });
    }
    let d = welch_span(y.samples(), x.samples(), cfg);
    let coherence = (0..cfg.bins())
        .map(|k| {
            let den = d.pxx[k] * d.pyy[k];
            if den > 0.0 {
                (d.pyx[k].norm_sqr() / den).clamp(0.0, 1.0)
            } else {
                0.0
            }
        })
        .collect();
    Ok(CoherenceCurve {
        freq_grid_hz: cfg.freq_grid_hz(),
        coherence,
        frames,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degrade::apply_fir_aligned;
    use crate::rng::SeededRng;
    use core::f64::consts::PI;

    fn noise(n: usize, seed: u64) -> AudioBuffer {
        let mut r = SeededRng::new(seed);
        AudioBuffer::new((0..n).map(|_| 0.1 * r.normal()).collect(), 16000).unwrap()
    }

    fn scaled(b: &AudioBuffer, g: f64) -> AudioBuffer {
        AudioBuffer::new(b.samples().iter().map(|v| v * g).collect(), 16000).unwrap()
    }

    /// Windowed-sinc lowpass used as the "device".
    fn device_fir(len: usize, cutoff_hz: f64) -> Vec<f64> {
        let w = dsp::blackman(len);
        let c = (len - 1) as f64 / 2.0;
        let fc = cutoff_hz / 16000.0;
        (0..len)
            .map(|n| 2.0 * fc * dsp::sinc(2.0 * fc * (n as f64 - c)) * w[n])
            .collect()
    }

    #[test]
    fn config_validation() {
        assert!(WelchConfig::default().validate().is_ok());
        let mut c = WelchConfig::default();
        c.fft_size = 500;
        assert!(c.validate().is_err());
        let mut c = WelchConfig::default();
        c.horizon_samples = 600;
        assert!(c.validate().is_err());
        let mut c = WelchConfig::default();
        c.segment_overlap = 1.0;
        assert!(c.validate().is_err());
        assert_eq!(WelchConfig::default().freq_grid_hz().len(), 257);
    }

    #[test]
    fn vad_constant_sine_all_active() {
        let s = AudioBuffer::new(
            (0..16000).map(|k| 0.5 * libm::sin(2.0 * PI * 440.0 * k as f64 / 16000.0)).collect(),
            16000,
        )
        .unwrap();
        let m = vad_mask(&s, 30.0, 320).unwrap();
        assert_eq!(m.active.len(), 50);
        assert!(m.active.iter().all(|a| *a));
    }

    #[test]
    fn vad_trailing_silence_inactive() {
        let mut v = noise(16000, 1).into_samples();
        v.extend(core::iter::repeat(0.0).take(8000));
        let b = AudioBuffer::new(v, 16000).unwrap();
        let m = vad_mask(&b, 30.0, 512).unwrap();
        assert_eq!(m.active.len(), 24000usize.div_ceil(512));
        // last frames fully silent
        assert!(m.active[m.active.len() - 15..].iter().all(|a| !a));
        assert!(m.active[..31].iter().all(|a| *a));
        let all = vad_mask(&b, f64::INFINITY, 512).unwrap();
        assert_eq!(all.active_count(), all.active.len());
    }

    #[test]
    fn vad_rejects_empty() {
        let b = AudioBuffer::new(vec![], 16000).unwrap();
        assert_eq!(vad_mask(&b, 30.0, 512), Err(SysidError::EmptyBuffer));
    }

    #[test]
    fn densities_identity_and_zero() {
        let y = noise(20000, 2);
        let cfg = WelchConfig::default();
        let d = welch_densities(&y, &y, &cfg, 0).unwrap();
        assert_eq!(d.frames, 63);
        for k in 0..cfg.bins() {
            assert!((d.pyx[k].re - d.pyy[k]).abs() <= 1e-12 * d.pyy[k]);
            assert!(d.pyx[k].im.abs() <= 1e-12 * d.pyy[k]);
            assert_eq!(d.pyy[k], d.pxx[k]);
        }
        let zero = AudioBuffer::zeros(20000, 16000).unwrap();
        let d = welch_densities(&zero, &y, &cfg, 0).unwrap();
        assert!(d.pyx.iter().all(|c| c.norm() == 0.0));
        assert!(d.pxx.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn densities_white_noise_level() {
        // one-sided density of variance-s2 white noise is 2 s2 / fs
        let y = noise(16384, 3);
        let cfg = WelchConfig::default();
        let d = welch_densities(&y, &y, &cfg, 0).unwrap();
        let mean: f64 = d.pyy[1..256].iter().sum::<f64>() / 255.0;
        let want = 2.0 * 0.01 / 16000.0;
        assert!((mean / want - 1.0).abs() < 0.05, "{}", mean / want);
    }

    #[test]
    fn densities_delayed_copy() {
        let y = noise(20000, 4);
        let mut xs = vec![0.0; 8];
        xs.extend_from_slice(&y.samples()[..20000 - 8]);
        let x = AudioBuffer::new(xs, 16000).unwrap();
        let d = welch_densities(&x, &y, &WelchConfig::default(), 0).unwrap();
        let num: f64 = d.pyx.iter().map(|c| c.norm()).sum();
        let den: f64 = d.pyy.iter().sum();
        assert!((num / den - 1.0).abs() < 0.05, "{}", num / den);
    }

    #[test]
    fn densities_errors() {
        let cfg = WelchConfig::default();
        let y = noise(20000, 1);
        let x = noise(20001, 1);
        assert_eq!(
            welch_densities(&x, &y, &cfg, 0),
            Err(SysidError::LengthMismatch(20000, 20001))
        );
        assert_eq!(
            welch_densities(&y, &y, &cfg, 1),
            Err(SysidError::SegmentOutOfRange { index: 1, count: 1 })
        );
    }

    #[test]
    fn transfer_identity_is_zero_db() {
        let y = noise(16000 * 5, 5);
        let cfg = WelchConfig::default();
        let vad = VadMask::all_active(y.len(), 512);
        let e = estimate_transfer(&y, &y, &cfg, &vad).unwrap();
        assert_eq!(e.n_segments, cfg.segment_count(y.len()));
        assert_eq!(e.median_db.len(), 257);
        for k in 0..257 {
            assert!(e.median_db[k].abs() < 1e-9);
            assert!(e.p10_db[k].abs() < 1e-9 && e.p90_db[k].abs() < 1e-9);
        }
    }

    #[test]
    fn transfer_recovers_known_fir() {
        let y = noise(16000 * 8, 6);
        let fir = device_fir(129, 1500.0);
        let x = apply_fir_aligned(&fir, &y);
        let cfg = WelchConfig::default();
        let vad = VadMask::all_active(y.len(), 512);
        let e = estimate_transfer(&y, &x, &cfg, &vad).unwrap();
        for (k, f) in e.freq_grid_hz.iter().enumerate() {
            let truth = dsp::mag_to_db(dsp::dtft_mag(&fir, 2.0 * PI * f / 16000.0));
            if truth > -40.0 {
                assert!((e.median_db[k] - truth).abs() < 1.0, "{f} Hz: {} vs {truth}", e.median_db[k]);
            }
        }
    }

    /// 512-tap linear-phase device with a smooth, in-ear-like response.
    fn smooth_device() -> Vec<f64> {
        use crate::degrade::{sample_psi_random, RandomResponseSpec, ResponseBounds};
        let p = ResponseBounds::placeholder();
        let mid: Vec<f64> = p.lower_db.iter().zip(&p.upper_db).map(|(l, u)| (l + u) / 2.0).collect();
        let bounds = ResponseBounds {
            freq_grid_hz: p.freq_grid_hz,
            lower_db: mid.clone(),
            upper_db: mid,
        };
        sample_psi_random(&RandomResponseSpec::new(bounds, 0)).unwrap()
    }

    #[test]
    fn transfer_recovers_long_smooth_fir() {
        let y = noise(16000 * 8, 13);
        let fir = smooth_device();
        assert_eq!(fir.len(), 512);
        let x = apply_fir_aligned(&fir, &y);
        let vad = VadMask::all_active(y.len(), 512);
        let e = estimate_transfer(&y, &x, &WelchConfig::default(), &vad).unwrap();
        for (k, f) in e.freq_grid_hz.iter().enumerate() {
            let truth = dsp::mag_to_db(dsp::dtft_mag(&fir, 2.0 * PI * f / 16000.0));
            if truth > -40.0 {
                assert!((e.median_db[k] - truth).abs() < 1.0, "{f} Hz: {} vs {truth}", e.median_db[k]);
            }
        }
    }

    #[test]
    fn transfer_spread_widens_with_noise() {
        let y = noise(16000 * 10, 7);
        let fir = device_fir(129, 2500.0);
        let clean = apply_fir_aligned(&fir, &y);
        // noise confined above 3 kHz
        let hp: Vec<f64> = {
            let lp = device_fir(129, 3000.0);
            (0..129).map(|n| if n == 64 { 1.0 - lp[n] } else { -lp[n] }).collect()
        };
        let nz = apply_fir_aligned(&hp, &scaled(&noise(y.len(), 99), 3.0));
        let x = AudioBuffer::new(
            clean.samples().iter().zip(nz.samples()).map(|(a, b)| a + b).collect(),
            16000,
        )
        .unwrap();
        let vad = VadMask::all_active(y.len(), 512);
        let e = estimate_transfer(&y, &x, &WelchConfig::default(), &vad).unwrap();
        let spread = |lo: f64, hi: f64| {
            let idx: Vec<usize> = (0..257).filter(|&k| e.freq_grid_hz[k] >= lo && e.freq_grid_hz[k] < hi).collect();
            idx.iter().map(|&k| e.p90_db[k] - e.p10_db[k]).sum::<f64>() / idx.len() as f64
        };
        assert!(spread(3500.0, 8000.0) > spread(100.0, 1000.0));
    }

    #[test]
    fn transfer_too_few_segments() {
        let y = noise(16384 * 2, 8);
        let vad = VadMask::all_active(y.len(), 512);
        assert_eq!(estimate_transfer(&y, &y, &WelchConfig::default(), &vad).unwrap().n_segments, 3);
        let short = noise(16384 + 8192, 8);
        let vad = VadMask::all_active(short.len(), 512);
        assert_eq!(
            estimate_transfer(&short, &short, &WelchConfig::default(), &vad),
            Err(SysidError::TooFewSegments { active: 2, needed: 3 })
        );
    }

    #[test]
    fn silent_horizons_are_skipped() {
        let mut v = noise(16000 * 4, 9).into_samples();
        v.extend(core::iter::repeat(0.0).take(16000 * 4));
        let y = AudioBuffer::new(v, 16000).unwrap();
        let cfg = WelchConfig::default();
        let vad = vad_mask(&y, 30.0, 512).unwrap();
        let e = estimate_transfer(&y, &y, &cfg, &vad).unwrap();
        assert!(e.n_segments < cfg.segment_count(y.len()));
        assert!(e.n_segments >= 3);
    }

    #[test]
    fn coherence_identity_and_independent() {
        let y = noise(16000 * 3, 10);
        let cfg = WelchConfig::default();
        let c = coherence(&y, &y, &cfg).unwrap();
        assert!(c.coherence.iter().all(|v| (v - 1.0).abs() < 1e-9));
        let x = noise(16000 * 3, 11);
        let c = coherence(&y, &x, &cfg).unwrap();
        assert!(c.frames >= 32);
        let mean = c.coherence.iter().sum::<f64>() / c.coherence.len() as f64;
        assert!(mean <= 0.2, "{mean}");
    }

    #[test]
    fn coherence_of_fir_passband() {
        let y = noise(16000 * 3, 12);
        let fir = device_fir(129, 1500.0);
        let x = apply_fir_aligned(&fir, &y);
        let c = coherence(&y, &x, &WelchConfig::default()).unwrap();
        for (k, f) in c.freq_grid_hz.iter().enumerate() {
            if *f < 1200.0 {
                assert!(c.coherence[k] >= 0.99, "{f}: {}", c.coherence[k]);
            }
        }
    }

    #[test]
    fn coherence_too_short() {
        let y = noise(512 * 4, 1);
        assert_eq!(
            coherence(&y, &y, &WelchConfig::default()),
            Err(SysidError::BufferTooShort { frames: 7, needed: 8 })
        );
    }

    #[test]
    fn moving_average_edges() {
        let v = [0.0, 5.0, 10.0, 15.0, 20.0, 25.0];
        let m = moving_average(&v, 5);
        assert_eq!(m[0], 5.0);
        assert_eq!(m[2], 10.0);
        assert_eq!(m[5], 20.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(12))]
            #[test]
            fn transfer_scale_law(a in 0.05f64..20.0, b in 0.05f64..20.0, seed in 0u64..1000) {
                let y = noise(16384 * 2, seed);
                let x = apply_fir_aligned(&device_fir(33, 3000.0), &noise(16384 * 2, seed + 1));
                let x = AudioBuffer::new(
                    x.samples().iter().zip(y.samples()).map(|(p, q)| p + 0.5 * q).collect(), 16000).unwrap();
                let cfg = WelchConfig::default();
                let vad = VadMask::all_active(y.len(), 512);
                let e0 = estimate_transfer(&y, &x, &cfg, &vad).unwrap();
                let e1 = estimate_transfer(&scaled(&y, a), &scaled(&x, b), &cfg, &vad).unwrap();
                let shift = 20.0 * libm::log10(b / a);
                for k in 0..257 {
                    prop_assert!((e1.median_db[k] - e0.median_db[k] - shift).abs() < 1e-8);
                    prop_assert!(e1.p10_db[k] <= e1.median_db[k] && e1.median_db[k] <= e1.p90_db[k]);
                }
                let c0 = coherence(&y, &x, &cfg).unwrap();
                let c1 = coherence(&scaled(&y, a), &scaled(&x, b), &cfg).unwrap();
                for k in 0..257 {
                    prop_assert!((c0.coherence[k] - c1.coherence[k]).abs() < 1e-9);
                    prop_assert!((0.0..=1.0).contains(&c1.coherence[k]));
                }
            }
        }
    }
}
