//! Adversarial and feature-matching losses over discriminator outputs, and
//! signal metrics (SI-SDR, SER).
//!
//! Scores are given per scale as time sequences; features per scale as a
//! list of `(features, frames)` maps. Batch variants average over items.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::audio::{energy, AudioBuffer};
use crate::nn::ScoreAndFeatures;

/// Weight of the reconstruction term in the generator objective.
pub const REC_WEIGHT: f64 = 100.0;
/// Residual-to-signal energy ratio under which a metric reports `+inf`.
pub const PERFECT_RATIO: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LossError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("no scales or empty score sequence")]
    Empty,
    #[error("length mismatch ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("reference signal is all zeros")]
    ZeroReference,
}

fn mismatch(what: &str) -> LossError {
    LossError::ShapeMismatch(String::from(what))
}

/// One feature map as `features x frames`, feature-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerMap {
    pub features: usize,
    pub frames: usize,
    pub data: Vec<f64>,
}

impl LayerMap {
    pub fn new(features: usize, frames: usize, data: Vec<f64>) -> Result<Self, LossError> {
        if data.len() != features * frames {
            return Err(mismatch("layer data length != features * frames"));
        }
        Ok(Self { features, frames, data })
    }
}

/// Per-scale logits and features of one discriminator pass.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscOutputs {
    pub scores: Vec<Vec<f64>>,
    pub features: Vec<Vec<LayerMap>>,
}

impl From<&[ScoreAndFeatures]> for DiscOutputs {
    fn from(outs: &[ScoreAndFeatures]) -> Self {
        let scores = outs
            .iter()
            .map(|s| s.logits.iter().map(|&v| v as f64).collect())
            .collect();
        let features = outs
            .iter()
            .map(|s| {
                s.features
                    .iter()
                    .map(|f| LayerMap {
                        features: f.channels,
                        frames: f.frames,
                        data: f.data.iter().map(|&v| v as f64).collect(),
                    })
                    .collect()
            })
            .collect();
        Self { scores, features }
    }
}

/// `(1/K) sum_k mean_t f(score)`.
fn mean_over_scales(scores: &[Vec<f64>], f: impl Fn(f64) -> f64) -> Result<f64, LossError> {
    if scores.is_empty() || scores.iter().any(|s| s.is_empty()) {
        return Err(LossError::Empty);
    }
    let sum: f64 = scores
        .iter()
        .map(|s| s.iter().map(|&v| f(v)).sum::<f64>() / s.len() as f64)
        .sum();
    Ok(sum / scores.len() as f64)
}

fn same_shape(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<(), LossError> {
    if a.len() != b.len() {
        return Err(mismatch("scale counts differ"));
    }
    if a.iter().zip(b).any(|(x, y)| x.len() != y.len()) {
        return Err(mismatch("time lengths differ"));
    }
    Ok(())
}

/// Discriminator hinge loss.
pub fn hinge_d_loss(real: &[Vec<f64>], fake: &[Vec<f64>]) -> Result<f64, LossError> {
    same_shape(real, fake)?;
    let r = mean_over_scales(real, |d| (1.0 - d).max(0.0))?;
    let f = mean_over_scales(fake, |d| (1.0 + d).max(0.0))?;
    Ok(r + f)
}

/// Generator adversarial hinge loss.
pub fn hinge_g_adv(fake: &[Vec<f64>]) -> Result<f64, LossError> {
    mean_over_scales(fake, |d| (1.0 - d).max(0.0))
}

/// Feature-matching loss: per layer, the L1 distance normalized by
/// `frames * features`, summed over layers and averaged over scales.
pub fn feature_match_loss(real: &[Vec<LayerMap>], fake: &[Vec<LayerMap>]) -> Result<f64, LossError> {
    if real.is_empty() {
        return Err(LossError::Empty);
    }
    if real.len() != fake.len() {
        return Err(mismatch("scale counts differ"));
    }
    let mut total = 0.0;
    for (rs, fs) in real.iter().zip(fake) {
        if rs.len() != fs.len() {
            return Err(mismatch("layer counts differ"));
        }
        for (r, f) in rs.iter().zip(fs) {
            if r.features != f.features || r.frames != f.frames || r.data.len() != f.data.len() {
                return Err(mismatch("feature map shapes differ"));
            }
            if r.data.is_empty() {
                continue;
            }
            let l1: f64 = r.data.iter().zip(&f.data).map(|(a, b)| (a - b).abs()).sum();
            total += l1 / (r.frames * r.features) as f64;
        }
    }
    Ok(total / real.len() as f64)
}

pub fn total_g_loss(adv: f64, rec: f64) -> f64 {
    adv + REC_WEIGHT * rec
}

fn batch_mean<T>(items: &[T], f: impl Fn(&T) -> Result<f64, LossError>) -> Result<f64, LossError> {
    if items.is_empty() {
        return Err(LossError::Empty);
    }
    let mut s = 0.0;
    for it in items {
        s += f(it)?;
    }
    Ok(s / items.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_d: f64,
    pub l_g_adv: f64,
    pub l_g_rec: f64,
    pub l_g_total: f64,
}

impl LossBreakdown {
    pub fn from_parts(l_d: f64, l_g_adv: f64, l_g_rec: f64) -> Self {
        Self {
            l_d,
            l_g_adv,
            l_g_rec,
            l_g_total: total_g_loss(l_g_adv, l_g_rec),
        }
    }
}

/// All three losses averaged over a batch of `(real, fake)` pairs.
pub fn loss_breakdown(pairs: &[(DiscOutputs, DiscOutputs)]) -> Result<LossBreakdown, LossError> {
    let l_d = batch_mean(pairs, |(r, f)| hinge_d_loss(&r.scores, &f.scores))?;
    let adv = batch_mean(pairs, |(_, f)| hinge_g_adv(&f.scores))?;
    let rec = batch_mean(pairs, |(r, f)| feature_match_loss(&r.features, &f.features))?;
    Ok(LossBreakdown::from_parts(l_d, adv, rec))
}

/// A level in dB with explicit infinities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Db {
    Finite(f64),
    PosInf,
    NegInf,
}

impl Db {
    pub fn value(self) -> f64 {
        match self {
            Db::Finite(v) => v,
            Db::PosInf => f64::INFINITY,
            Db::NegInf => f64::NEG_INFINITY,
        }
    }

    fn from_ratio(signal: f64, residual: f64) -> Self {
        if signal == 0.0 {
            if residual == 0.0 {
                Db::PosInf
            } else {
                Db::NegInf
            }
        } else if residual < PERFECT_RATIO * signal {
            Db::PosInf
        } else {
            Db::Finite(10.0 * libm::log10(signal / residual))
        }
    }
}

impl fmt::Display for Db {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Db::Finite(v) => write!(f, "{v}"),
            Db::PosInf => f.write_str("inf"),
            Db::NegInf => f.write_str("-inf"),
        }
    }
}

impl Serialize for Db {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Db::Finite(v) => s.serialize_f64(*v),
            Db::PosInf => s.serialize_str("inf"),
            Db::NegInf => s.serialize_str("-inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Db {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Db;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number, \"inf\" or \"-inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Db, E> {
                Ok(Db::Finite(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Db, E> {
                Ok(Db::Finite(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Db, E> {
                Ok(Db::Finite(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Db, E> {
                match v {
                    "inf" => Ok(Db::PosInf),
                    "-inf" => Ok(Db::NegInf),
                    _ => Err(E::invalid_value(de::Unexpected::Str(v), &self)),
                }
            }
        }
        d.deserialize_any(V)
    }
}

/// Scale-invariant signal-to-distortion ratio of `est` against `reference`.
pub fn si_sdr(est: &AudioBuffer, reference: &AudioBuffer) -> Result<Db, LossError> {
    let (e, r) = (est.samples(), reference.samples());
    if e.len() != r.len() {
        return Err(LossError::LengthMismatch(e.len(), r.len()));
    }
    let ref_energy = energy(r);
    if ref_energy == 0.0 {
        return Err(LossError::ZeroReference);
    }
    let alpha = e.iter().zip(r).map(|(a, b)| a * b).sum::<f64>() / ref_energy;
    if alpha == 0.0 {
        // nothing of the reference survives in the estimate
        return Ok(Db::NegInf);
    }
    let signal = alpha * alpha * ref_energy;
    let residual: f64 = e.iter().zip(r).map(|(a, b)| (a - alpha * b) * (a - alpha * b)).sum();
    Ok(Db::from_ratio(signal, residual))
}

/// Signal-to-error ratio with `est` advanced by `delay` samples: compares
/// `reference[..n - delay]` with `est[delay..]`.
pub fn ser(est: &AudioBuffer, reference: &AudioBuffer, delay: usize) -> Result<Db, LossError> {
    let (e, r) = (est.samples(), reference.samples());
    if e.len() != r.len() {
        return Err(LossError::LengthMismatch(e.len(), r.len()));
    }
    if delay >= r.len() {
        return Err(LossError::LengthMismatch(delay, r.len()));
    }
    let r = &r[..r.len() - delay];
    let e = &e[delay..];
    let err: f64 = r.iter().zip(e).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(Db::from_ratio(energy(r), err))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn buf(v: Vec<f64>) -> AudioBuffer {
        AudioBuffer::new(v, 16000).unwrap()
    }

    fn lm(f: usize, t: usize, d: &[f64]) -> LayerMap {
        LayerMap::new(f, t, d.to_vec()).unwrap()
    }

    #[test]
    fn hinge_d_examples() {
        assert_eq!(hinge_d_loss(&[vec![2.0]], &[vec![-2.0]]), Ok(0.0));
        assert_eq!(hinge_d_loss(&[vec![0.0]], &[vec![0.0]]), Ok(2.0));
        assert_eq!(
            hinge_d_loss(&[vec![0.5], vec![2.0]], &[vec![-0.3], vec![-2.0]]),
            Ok(0.6)
        );
        assert!(matches!(
            hinge_d_loss(&[vec![0.5, 1.0]], &[vec![0.5]]),
            Err(LossError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn hinge_g_examples() {
        assert_eq!(hinge_g_adv(&[vec![1.0, 1.0], vec![1.0]]), Ok(0.0));
        assert_eq!(hinge_g_adv(&[vec![-1.0]]), Ok(2.0));
        assert_eq!(hinge_g_adv(&[vec![0.0], vec![2.0]]), Ok(0.5));
        assert_eq!(hinge_g_adv(&[]), Err(LossError::Empty));
    }

    #[test]
    fn feature_match_examples() {
        let a = vec![vec![lm(1, 2, &[1.0, 3.0])]];
        let b = vec![vec![lm(1, 2, &[0.0, 1.0])]];
        assert_eq!(feature_match_loss(&a, &b), Ok(1.5));
        assert_eq!(feature_match_loss(&a, &a), Ok(0.0));
        let c = vec![vec![lm(2, 1, &[1.0, 3.0])]];
        assert!(matches!(feature_match_loss(&a, &c), Err(LossError::ShapeMismatch(_))));
    }

    #[test]
    fn total_examples() {
        assert_eq!(total_g_loss(0.0, 0.0), 0.0);
        assert_eq!(total_g_loss(0.5, 0.01), 1.5);
        assert_eq!(total_g_loss(2.0, 1.0), 102.0);
        let b = LossBreakdown::from_parts(0.3, 0.7, 0.013);
        assert_eq!(b.l_g_total, b.l_g_adv + 100.0 * b.l_g_rec);
    }

    #[test]
    fn si_sdr_examples() {
        let mut r = SeededRng::new(1);
        let reference: Vec<f64> = (0..4000).map(|_| r.normal()).collect();
        let rb = buf(reference.clone());
        assert_eq!(si_sdr(&rb, &rb), Ok(Db::PosInf));
        assert_eq!(si_sdr(&buf(reference.iter().map(|v| 2.0 * v).collect()), &rb), Ok(Db::PosInf));

        // orthogonalize a noise draw against the reference, scale to 10 %
        let mut n: Vec<f64> = (0..4000).map(|_| r.normal()).collect();
        let proj = n.iter().zip(&reference).map(|(a, b)| a * b).sum::<f64>() / energy(&reference);
        n.iter_mut().zip(&reference).for_each(|(a, b)| *a -= proj * b);
        let g = libm::sqrt(0.1 * energy(&reference) / energy(&n));
        let est: Vec<f64> = reference.iter().zip(&n).map(|(a, b)| a + g * b).collect();
        let Db::Finite(v) = si_sdr(&buf(est), &rb).unwrap() else { panic!() };
        assert!((v - 10.0).abs() < 1e-9, "{v}");
    }

    #[test]
    fn si_sdr_errors() {
        assert_eq!(
            si_sdr(&buf(vec![1.0; 3]), &buf(vec![1.0; 4])),
            Err(LossError::LengthMismatch(3, 4))
        );
        assert_eq!(si_sdr(&buf(vec![1.0; 3]), &buf(vec![0.0; 3])), Err(LossError::ZeroReference));
        assert_eq!(si_sdr(&buf(vec![0.0; 3]), &buf(vec![1.0, 0.0, 0.0])), Ok(Db::NegInf));
    }

    #[test]
    fn ser_examples() {
        let reference: Vec<f64> = (0..1000).map(|i| libm::sin(i as f64 * 0.1)).collect();
        let mut delayed = vec![0.0; 31];
        delayed.extend_from_slice(&reference[..1000 - 31]);
        assert_eq!(ser(&buf(delayed), &buf(reference.clone()), 31), Ok(Db::PosInf));
        let est: Vec<f64> = reference.iter().map(|v| 1.01 * v).collect();
        let Db::Finite(v) = ser(&buf(est), &buf(reference), 0).unwrap() else { panic!() };
        assert!((v - 40.0).abs() < 1e-9);
    }

    #[test]
    fn db_display() {
        assert_eq!(Db::PosInf.to_string(), "inf");
        assert_eq!(Db::NegInf.to_string(), "-inf");
        assert_eq!(Db::Finite(1.5).to_string(), "1.5");
        assert_eq!(Db::PosInf.value(), f64::INFINITY);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn scores() -> impl Strategy<Value = Vec<Vec<f64>>> {
            prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 1..6), 1..4)
        }

        fn feats(shape: Vec<(usize, usize)>) -> impl Strategy<Value = Vec<Vec<LayerMap>>> {
            let maps: Vec<_> = shape
                .into_iter()
                .map(|(f, t)| prop::collection::vec(-2.0f64..2.0, f * t).prop_map(move |d| LayerMap::new(f, t, d).unwrap()))
                .collect();
            maps.prop_map(|m| vec![m])
        }

        proptest! {
            #[test]
            fn hinge_nonnegative_and_zero_iff_margins(real in scores(), shift in 0.0f64..2.0) {
                let fake: Vec<Vec<f64>> = real.iter().map(|s| s.iter().map(|v| -v - shift).collect()).collect();
                let d = hinge_d_loss(&real, &fake).unwrap();
                prop_assert!(d >= 0.0);
                let all_ok = real.iter().flatten().all(|&v| v >= 1.0) && fake.iter().flatten().all(|&v| v <= -1.0);
                prop_assert_eq!(d == 0.0, all_ok);
                let g = hinge_g_adv(&real).unwrap();
                prop_assert!(g >= 0.0);
                prop_assert_eq!(g == 0.0, real.iter().flatten().all(|&v| v >= 1.0));
            }

            #[test]
            fn feature_match_metric_properties(
                (a, b, c) in prop::collection::vec((1usize..4, 1usize..5), 1..4)
                    .prop_flat_map(|s| (feats(s.clone()), feats(s.clone()), feats(s)))
            ) {
                let ab = feature_match_loss(&a, &b).unwrap();
                let bc = feature_match_loss(&b, &c).unwrap();
                let ac = feature_match_loss(&a, &c).unwrap();
                prop_assert_eq!(feature_match_loss(&a, &a).unwrap(), 0.0);
                prop_assert!(ac <= ab + bc + 1e-12);
                let dbl = |x: &Vec<Vec<LayerMap>>| -> Vec<Vec<LayerMap>> {
                    x.iter().map(|l| l.iter().map(|m| LayerMap::new(m.features, m.frames, m.data.iter().map(|v| 2.0 * v).collect()).unwrap()).collect()).collect()
                };
                let doubled = feature_match_loss(&dbl(&a), &dbl(&b)).unwrap();
                prop_assert!((doubled - 2.0 * ab).abs() <= 1e-12 * (1.0 + ab));
            }

            #[test]
            fn si_sdr_invariances(
                seed in 0u64..500,
                c in prop_oneof![-8.0f64..-0.01, 0.01f64..8.0],
                noise in 0.01f64..1.0,
            ) {
                let mut r = SeededRng::new(seed);
                let reference: Vec<f64> = (0..256).map(|_| r.normal()).collect();
                let est: Vec<f64> = reference.iter().map(|v| v + noise * r.normal()).collect();
                let base = si_sdr(&buf(est.clone()), &buf(reference.clone())).unwrap().value();
                let scaled = si_sdr(&buf(est.iter().map(|v| c * v).collect()), &buf(reference.clone())).unwrap().value();
                prop_assert!((base - scaled).abs() < 1e-9);
                let flipped = si_sdr(
                    &buf(est.iter().map(|v| -v).collect()),
                    &buf(reference.iter().map(|v| -v).collect()),
                ).unwrap().value();
                prop_assert_eq!(base, flipped);
            }

            #[test]
            fn total_is_linear(a in 0.0f64..10.0, b in 0.0f64..10.0, c in 0.0f64..10.0, d in 0.0f64..10.0) {
                let lhs = total_g_loss(a + c, b + d);
                let rhs = total_g_loss(a, b) + total_g_loss(c, d);
                prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
            }
        }
    }
}
