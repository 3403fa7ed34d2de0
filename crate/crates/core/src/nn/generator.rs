use alloc::vec::Vec;

use super::layers::{Conv, FeatureMap, ResidualUnit};
use super::weights::WeightStore;
use super::{generator_layout, validate_config, LayerSpec, NetworkConfig, NnError, MAX_INPUT_SAMPLES};
use crate::audio::AudioBuffer;
use crate::pqmf::{BandSelection, PqmfBank, SubbandTensor};

struct EncoderBlock {
    residuals: Vec<ResidualUnit>,
    down: Conv,
}

struct DecoderBlock {
    up: Conv,
    residuals: Vec<ResidualUnit>,
}

/// Generator with resolved effective weights; immutable and reusable.
pub struct Generator {
    cfg: NetworkConfig,
    bank: PqmfBank,
    first: Conv,
    encoders: Vec<EncoderBlock>,
    decoders: Vec<DecoderBlock>,
    last: Conv,
}

/// Padded working length: room for the bank delay, rounded up to a multiple
/// of `M * total_stride` so every strided layer divides evenly.
pub(crate) fn padded_len(cfg: &NetworkConfig, len: usize) -> usize {
    let delay = cfg.m_bands * cfg.taps_per_band - 1;
    let unit = cfg.m_bands * cfg.total_stride();
    (len + delay).div_ceil(unit).max(1) * unit
}

fn take_residuals<'a>(
    layers: &mut impl Iterator<Item = &'a LayerSpec>,
    n: usize,
    store: &WeightStore,
) -> Result<Vec<ResidualUnit>, NnError> {
    (0..n)
        .map(|_| {
            let dilated = Conv::load(layers.next().expect("layout"), store)?;
            let pointwise = Conv::load(layers.next().expect("layout"), store)?;
            Ok(ResidualUnit { dilated, pointwise })
        })
        .collect()
}

impl Generator {
    pub fn new(cfg: &NetworkConfig, store: &WeightStore) -> Result<Self, NnError> {
        validate_config(cfg)?;
        let bank = PqmfBank::new(cfg.m_bands, cfg.taps_per_band, cfg.pqmf_atten_db)?;
        let layout = generator_layout(cfg);
        let mut it = layout.iter();
        let n_res = cfg.residual_dilations.len();
        let first = Conv::load(it.next().expect("layout"), store)?;
        let mut encoders = Vec::new();
        for _ in 0..cfg.encoder_strides.len() {
            let residuals = take_residuals(&mut it, n_res, store)?;
            let down = Conv::load(it.next().expect("layout"), store)?;
            encoders.push(EncoderBlock { residuals, down });
        }
        let mut decoders = Vec::new();
        for _ in 0..cfg.decoder_strides.len() {
            let up = Conv::load(it.next().expect("layout"), store)?;
            let residuals = take_residuals(&mut it, n_res, store)?;
            decoders.push(DecoderBlock { up, residuals });
        }
        let last = Conv::load(it.next().expect("layout"), store)?;
        Ok(Self {
            cfg: cfg.clone(),
            bank,
            first,
            encoders,
            decoders,
            last,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.cfg
    }

    pub fn bank(&self) -> &PqmfBank {
        &self.bank
    }

    /// Enhances `x`; the output has the same length and rate.
    pub fn forward(&self, x: &AudioBuffer) -> Result<AudioBuffer, NnError> {
        self.forward_with_bands(x).map(|(y, _)| y)
    }

    /// Like [`forward`](Self::forward), also returning the `M` band values
    /// fed to synthesis (after `tanh`).
    pub fn forward_with_bands(&self, x: &AudioBuffer) -> Result<(AudioBuffer, FeatureMap), NnError> {
        if x.sample_rate_hz() != crate::SAMPLE_RATE_HZ {
            return Err(NnError::UnsupportedSampleRate {
                expected: crate::SAMPLE_RATE_HZ,
                got: x.sample_rate_hz(),
            });
        }
        let len = x.len();
        if len > MAX_INPUT_SAMPLES {
            return Err(NnError::LengthOverflow(len));
        }
        let cfg = &self.cfg;
        let total = padded_len(cfg, len);
        let mut padded = alloc::vec![0.0; total];
        padded[..len].copy_from_slice(x.samples());
        let sub = self
            .bank
            .analyze_samples(&padded)?
            .select_bands(BandSelection::LowestP, cfg.p_bands)?;
        let input = FeatureMap::from_data(
            sub.bands(),
            sub.frames(),
            sub.data().iter().map(|&v| v as f32).collect(),
        );

        let slope = cfg.leaky_slope_gen;
        let mut h = self.first.forward(&input);
        let mut skips = Vec::with_capacity(self.encoders.len());
        for block in &self.encoders {
            skips.push(h.clone());
            for r in &block.residuals {
                h = r.forward(&h, slope);
            }
            h = block.down.forward(&h.leaky_relu(slope));
        }
        for block in &self.decoders {
            h = block.up.forward(&h.leaky_relu(slope));
            for r in &block.residuals {
                h = r.forward(&h, slope);
            }
            h.add_assign(&skips.pop().expect("mirrored depth"));
        }
        // outermost skip: the input bands join the first channels
        for c in 0..cfg.p_bands {
            for (a, b) in h.channel_mut(c).iter_mut().zip(input.channel(c)) {
                *a += b;
            }
        }
        let bands = self.last.forward(&h.leaky_relu(slope)).tanh();

        let full = SubbandTensor::from_bands(
            bands.channels,
            bands.frames,
            bands.data.iter().map(|&v| v as f64).collect(),
            crate::SAMPLE_RATE_HZ,
        )?;
        let y = self.bank.synthesize_samples(&full)?;
        let delay = self.bank.delay();
        let out = AudioBuffer::new(y[delay..delay + len].to_vec(), x.sample_rate_hz())
            .expect("bounded synthesis output is finite");
        Ok((out, bands))
    }
}

/// One-shot forward pass.
pub fn generator_forward(cfg: &NetworkConfig, weights: &WeightStore, x: &AudioBuffer) -> Result<AudioBuffer, NnError> {
    Generator::new(cfg, weights)?.forward(x)
}
