use alloc::vec::Vec;

use super::layers::{Conv, FeatureMap};
use super::weights::WeightStore;
use super::{discriminator_scale_layout, validate_config, NetworkConfig, NnError, MAX_INPUT_SAMPLES};
use crate::audio::AudioBuffer;
use crate::pqmf::{BandSelection, PqmfBank};

/// Output of one discriminator scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreAndFeatures {
    pub scale: usize,
    /// Logit sequence over time.
    pub logits: Vec<f32>,
    /// Activations of every layer except the logit layer, in order.
    pub features: Vec<FeatureMap>,
}

/// The multi-scale ensemble with resolved weights.
pub struct Discriminators {
    cfg: NetworkConfig,
    bank: PqmfBank,
    stacks: Vec<Vec<Conv>>,
}

impl Discriminators {
    pub fn new(cfg: &NetworkConfig, store: &WeightStore) -> Result<Self, NnError> {
        validate_config(cfg)?;
        let bank = PqmfBank::new(cfg.m_bands, cfg.taps_per_band, cfg.pqmf_atten_db)?;
        let stacks = (0..cfg.disc_scales)
            .map(|k| {
                discriminator_scale_layout(cfg, k)
                    .iter()
                    .map(|l| Conv::load(l, store))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            cfg: cfg.clone(),
            bank,
            stacks,
        })
    }

    fn run_stack(&self, scale: usize, mut h: FeatureMap) -> ScoreAndFeatures {
        let layers = &self.stacks[scale];
        let (logit, hidden) = layers.split_last().expect("non-empty stack");
        let mut features = Vec::with_capacity(hidden.len());
        for conv in hidden {
            h = conv.forward(&h).leaky_relu(self.cfg.leaky_slope_disc);
            features.push(h.clone());
        }
        ScoreAndFeatures {
            scale,
            logits: logit.forward(&h).data,
            features,
        }
    }

    /// Scores `signal` at every scale.
    pub fn forward(&self, signal: &AudioBuffer) -> Result<Vec<ScoreAndFeatures>, NnError> {
        if signal.sample_rate_hz() != crate::SAMPLE_RATE_HZ {
            return Err(NnError::UnsupportedSampleRate {
                expected: crate::SAMPLE_RATE_HZ,
                got: signal.sample_rate_hz(),
            });
        }
        if signal.len() > MAX_INPUT_SAMPLES {
            return Err(NnError::LengthOverflow(signal.len()));
        }
        let mut out = Vec::with_capacity(self.stacks.len());
        let wave = FeatureMap::from_data(1, signal.len(), signal.samples().iter().map(|&v| v as f32).collect());
        out.push(self.run_stack(0, wave));
        if self.stacks.len() > 1 {
            let upper = self
                .bank
                .analyze(signal)?
                .select_bands(BandSelection::UpperQ, self.cfg.q_bands)?;
            let bands = FeatureMap::from_data(
                upper.bands(),
                upper.frames(),
                upper.data().iter().map(|&v| v as f32).collect(),
            );
            for k in 1..self.stacks.len() {
                out.push(self.run_stack(k, bands.avg_pool(1 << (k - 1))));
            }
        }
        Ok(out)
    }
}

/// One-shot ensemble forward pass.
pub fn discriminator_forward(
    cfg: &NetworkConfig,
    weights: &WeightStore,
    signal: &AudioBuffer,
) -> Result<Vec<ScoreAndFeatures>, NnError> {
    Discriminators::new(cfg, weights)?.forward(signal)
}
