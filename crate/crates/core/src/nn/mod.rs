//! Generator and discriminator forward passes.
//!
//! The generator is a small U-Net over PQMF subbands: the lowest `p_bands`
//! bands of the input go through a first convolution, strided encoder
//! blocks, mirrored transposed-convolution decoder blocks with additive
//! skips, a last convolution to `m_bands` channels and a `tanh`, and are then
//! recombined by PQMF synthesis.
//!
//! The discriminator ensemble has one waveform stack (scale 0) and
//! `disc_scales - 1` band stacks that look at the `q_bands` upper subbands,
//! average-pooled by `2^(k-1)` at scale `k`.
//!
//! All convolutions are weight-normalized: each layer stores a direction
//! tensor `v` of shape `(out, in / groups, kernel)`, a per-output magnitude
//! `g` and a bias.

mod discriminator;
mod generator;
mod layers;
mod weights;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pqmf::PqmfError;

pub use discriminator::{discriminator_forward, Discriminators, ScoreAndFeatures};
pub use generator::{generator_forward, Generator};
pub use layers::FeatureMap;
pub use weights::{init_weights, Tensor, WeightStore};

/// Longest accepted input, in samples.
pub const MAX_INPUT_SAMPLES: usize = 1 << 30;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NnError {
    #[error("q_bands = {0} is not a proper divisor of the discriminator base width")]
    InvalidQ(usize),
    #[error("decoder layer {layer}: kernel {kernel} is not a positive multiple of stride {stride}")]
    KernelStrideMismatch {
        layer: usize,
        kernel: usize,
        stride: usize,
    },
    #[error("band counts must satisfy 1 <= p, q <= m (m={m}, p={p}, q={q})")]
    BandCountOrder { m: usize, p: usize, q: usize },
    #[error("invalid network configuration: {0}")]
    InvalidConfig(String),
    #[error("weight {name}: expected shape {expected:?}, found {found:?}")]
    WeightShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Option<Vec<usize>>,
    },
    #[error("weight {0} holds a non-finite value")]
    NonFiniteWeight(String),
    #[error("input of {0} samples exceeds the supported length")]
    LengthOverflow(usize),
    #[error("expected {expected} Hz input, got {got} Hz")]
    UnsupportedSampleRate { expected: u32, got: u32 },
    #[error(transparent)]
    Pqmf(#[from] PqmfError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub m_bands: usize,
    pub p_bands: usize,
    pub q_bands: usize,
    pub taps_per_band: usize,
    pub pqmf_atten_db: f64,
    /// Width of the first convolution (and of the last decoder block).
    pub first_channels: usize,
    /// Kernel of the first and last convolutions.
    pub conv_kernel: usize,
    pub encoder_strides: Vec<usize>,
    pub encoder_channels: Vec<usize>,
    pub decoder_strides: Vec<usize>,
    pub decoder_kernels: Vec<usize>,
    pub residual_dilations: Vec<usize>,
    pub residual_kernel: usize,
    pub disc_base_channels: usize,
    /// Scale 0 is the waveform stack; scales `1..disc_scales` are band stacks.
    pub disc_scales: usize,
    pub leaky_slope_gen: f32,
    pub leaky_slope_disc: f32,
    /// Cutoff of the degradation the model targets, if known. Only used to
    /// warn about a `p_bands` choice that drops informative bands.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degradation_cutoff_hz: Option<f64>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self::reference()
    }
}

impl NetworkConfig {
    /// `{M=4, P=1, Q=3}` with the reference layer sizes.
    pub fn reference() -> Self {
        Self {
            m_bands: 4,
            p_bands: 1,
            q_bands: 3,
            taps_per_band: crate::pqmf::DEFAULT_TAPS_PER_BAND,
            pqmf_atten_db: crate::pqmf::DEFAULT_ATTEN_DB,
            first_channels: 32,
            conv_kernel: 3,
            encoder_strides: alloc::vec![2, 4, 4],
            encoder_channels: alloc::vec![64, 128, 256],
            decoder_strides: alloc::vec![4, 4, 2],
            decoder_kernels: alloc::vec![8, 8, 4],
            residual_dilations: alloc::vec![1, 3, 9],
            residual_kernel: 3,
            disc_base_channels: 30,
            disc_scales: 4,
            leaky_slope_gen: 0.01,
            leaky_slope_disc: 0.2,
            degradation_cutoff_hz: None,
        }
    }

    /// Product of the encoder strides: the time reduction at the bottleneck.
    pub fn total_stride(&self) -> usize {
        self.encoder_strides.iter().product()
    }

    /// Channel widths entering each encoder block.
    fn encoder_inputs(&self) -> Vec<usize> {
        let mut v = alloc::vec![self.first_channels];
        v.extend_from_slice(&self.encoder_channels[..self.encoder_channels.len() - 1]);
        v
    }

    /// Band-stack widths, `base * 2^l` for four layers.
    fn disc_widths(&self) -> [usize; 4] {
        let b = self.disc_base_channels;
        [b, 2 * b, 4 * b, 8 * b]
    }
}

/// Non-fatal configuration findings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigWarning {
    pub message: String,
}

/// Checks every structural constraint and returns advisory warnings.
pub fn validate_config(cfg: &NetworkConfig) -> Result<Vec<ConfigWarning>, NnError> {
    let bad = |s: &str| Err(NnError::InvalidConfig(String::from(s)));
    if cfg.m_bands < 2 {
        return bad("m_bands must be at least 2");
    }
    let in_range = |n: usize| (1..=cfg.m_bands).contains(&n);
    if !in_range(cfg.p_bands) || !in_range(cfg.q_bands) {
        return Err(NnError::BandCountOrder {
            m: cfg.m_bands,
            p: cfg.p_bands,
            q: cfg.q_bands,
        });
    }
    if cfg.disc_base_channels == 0 {
        return bad("disc_base_channels must be positive");
    }
    if cfg.disc_base_channels % cfg.q_bands != 0 || cfg.q_bands == cfg.disc_base_channels {
        return Err(NnError::InvalidQ(cfg.q_bands));
    }
    let depth = cfg.encoder_strides.len();
    if depth == 0 {
        return bad("at least one encoder block is required");
    }
    if cfg.encoder_channels.len() != depth {
        return bad("encoder_channels and encoder_strides differ in length");
    }
    if cfg.encoder_strides.contains(&0) || cfg.encoder_channels.contains(&0) {
        return bad("strides and channel widths must be positive");
    }
    if cfg.decoder_kernels.len() != cfg.decoder_strides.len() {
        return bad("decoder_kernels and decoder_strides differ in length");
    }
    for (layer, (&kernel, &stride)) in cfg.decoder_kernels.iter().zip(&cfg.decoder_strides).enumerate() {
        if stride == 0 || kernel < stride || kernel % stride != 0 {
            return Err(NnError::KernelStrideMismatch { layer, kernel, stride });
        }
    }
    if !cfg.decoder_strides.iter().eq(cfg.encoder_strides.iter().rev()) {
        return bad("decoder strides must mirror the encoder strides");
    }
    if cfg.first_channels < cfg.p_bands {
        return bad("first_channels must be at least p_bands");
    }
    if cfg.conv_kernel == 0 || cfg.residual_kernel == 0 {
        return bad("kernels must be positive");
    }
    if cfg.residual_dilations.contains(&0) {
        return bad("dilations must be positive");
    }
    if !(1..=8).contains(&cfg.disc_scales) {
        return bad("disc_scales must lie in 1..=8");
    }
    let slope_ok = |s: f32| (0.0..1.0).contains(&s);
    if !slope_ok(cfg.leaky_slope_gen) || !slope_ok(cfg.leaky_slope_disc) {
        return bad("leaky slopes must lie in [0, 1)");
    }
    if cfg.taps_per_band < 4 || !(cfg.pqmf_atten_db >= 40.0) {
        return bad("pqmf needs taps_per_band >= 4 and atten_db >= 40");
    }

    let mut warnings = Vec::new();
    if let Some(fc) = cfg.degradation_cutoff_hz {
        let reduced = 2.0 * fc / crate::SAMPLE_RATE_HZ as f64;
        let kept = cfg.p_bands as f64 / cfg.m_bands as f64;
        if kept < reduced {
            warnings.push(ConfigWarning {
                message: format!(
                    "p_bands/m_bands = {kept:.3} is below the reduced degradation cutoff {reduced:.3}; informative bands are dropped"
                ),
            });
        }
    }
    Ok(warnings)
}

/// One weight-normalized convolution in the graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub dilation: usize,
    pub groups: usize,
    pub transposed: bool,
}

impl LayerSpec {
    fn conv(name: String, cin: usize, cout: usize, kernel: usize) -> Self {
        Self {
            name,
            in_channels: cin,
            out_channels: cout,
            kernel,
            stride: 1,
            dilation: 1,
            groups: 1,
            transposed: false,
        }
    }

    fn strided(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    fn dilated(mut self, dilation: usize) -> Self {
        self.dilation = dilation;
        self
    }

    fn grouped(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    pub fn v_shape(&self) -> [usize; 3] {
        [self.out_channels, self.in_channels / self.groups, self.kernel]
    }

    pub fn fan_in(&self) -> usize {
        self.in_channels / self.groups * self.kernel
    }

    /// `v`, `g` and bias.
    pub fn param_count(&self) -> usize {
        self.v_shape().iter().product::<usize>() + 2 * self.out_channels
    }
}

fn residual_layers(out: &mut Vec<LayerSpec>, prefix: &str, ch: usize, cfg: &NetworkConfig) {
    for (j, &d) in cfg.residual_dilations.iter().enumerate() {
        out.push(LayerSpec::conv(format!("{prefix}.res{j}.dilated"), ch, ch, cfg.residual_kernel).dilated(d));
        out.push(LayerSpec::conv(format!("{prefix}.res{j}.pointwise"), ch, ch, 1));
    }
}

/// Generator layers in execution order.
pub fn generator_layout(cfg: &NetworkConfig) -> Vec<LayerSpec> {
    let mut v = Vec::new();
    v.push(LayerSpec::conv("gen.first".into(), cfg.p_bands, cfg.first_channels, cfg.conv_kernel));
    let inputs = cfg.encoder_inputs();
    for (i, (&s, &cout)) in cfg.encoder_strides.iter().zip(&cfg.encoder_channels).enumerate() {
        let prefix = format!("gen.enc{i}");
        residual_layers(&mut v, &prefix, inputs[i], cfg);
        v.push(LayerSpec::conv(format!("{prefix}.down"), inputs[i], cout, 2 * s).strided(s));
    }
    let depth = inputs.len();
    for (j, (&s, &k)) in cfg.decoder_strides.iter().zip(&cfg.decoder_kernels).enumerate() {
        let cin = cfg.encoder_channels[depth - 1 - j];
        let cout = inputs[depth - 1 - j];
        let prefix = format!("gen.dec{j}");
        let mut up = LayerSpec::conv(format!("{prefix}.up"), cin, cout, k).strided(s);
        up.transposed = true;
        v.push(up);
        residual_layers(&mut v, &prefix, cout, cfg);
    }
    v.push(LayerSpec::conv("gen.last".into(), cfg.first_channels, cfg.m_bands, cfg.conv_kernel));
    v
}

pub const WAVE_DISC_CHANNELS: [usize; 4] = [16, 64, 256, 1024];
pub const WAVE_DISC_FIRST_KERNEL: usize = 15;
pub const WAVE_DISC_KERNEL: usize = 41;
pub const WAVE_DISC_STRIDE: usize = 4;
pub const WAVE_DISC_GROUPS: usize = 4;
pub const BAND_DISC_KERNEL: usize = 21;
pub const BAND_DISC_STRIDE: usize = 2;
pub const LOGIT_KERNEL: usize = 3;

/// Layers of discriminator `scale` in execution order; the last is the logit.
pub fn discriminator_scale_layout(cfg: &NetworkConfig, scale: usize) -> Vec<LayerSpec> {
    let mut v = Vec::new();
    if scale == 0 {
        let c = WAVE_DISC_CHANNELS;
        v.push(LayerSpec::conv("disc0.conv0".into(), 1, c[0], WAVE_DISC_FIRST_KERNEL));
        for l in 1..c.len() {
            v.push(
                LayerSpec::conv(format!("disc0.conv{l}"), c[l - 1], c[l], WAVE_DISC_KERNEL)
                    .strided(WAVE_DISC_STRIDE)
                    .grouped(WAVE_DISC_GROUPS),
            );
        }
        v.push(LayerSpec::conv("disc0.logit".into(), c[c.len() - 1], 1, LOGIT_KERNEL));
    } else {
        let w = cfg.disc_widths();
        let mut cin = cfg.q_bands;
        for (l, &cout) in w.iter().enumerate() {
            v.push(
                LayerSpec::conv(format!("disc{scale}.conv{l}"), cin, cout, BAND_DISC_KERNEL)
                    .strided(BAND_DISC_STRIDE)
                    .grouped(cfg.q_bands),
            );
            cin = cout;
        }
        v.push(LayerSpec::conv(format!("disc{scale}.logit"), cin, 1, LOGIT_KERNEL));
    }
    v
}

pub fn discriminator_layout(cfg: &NetworkConfig) -> Vec<LayerSpec> {
    (0..cfg.disc_scales)
        .flat_map(|k| discriminator_scale_layout(cfg, k))
        .collect()
}

/// `(generator, discriminator)` parameter counts, `v`, `g` and biases included.
pub fn count_params(cfg: &NetworkConfig) -> (usize, usize) {
    let sum = |l: Vec<LayerSpec>| l.iter().map(LayerSpec::param_count).sum();
    (sum(generator_layout(cfg)), sum(discriminator_layout(cfg)))
}

/// Floats held by generator activations for an input of `len` samples,
/// counting every intermediate map (an upper bound on live memory).
pub fn activation_floats(cfg: &NetworkConfig, len: usize) -> usize {
    let frames = generator::padded_len(cfg, len) / cfg.m_bands;
    let layout = generator_layout(cfg);
    let mut t = frames;
    let mut total = cfg.p_bands * frames;
    for l in &layout {
        if l.transposed {
            t *= l.stride;
        } else {
            t = t.div_ceil(l.stride);
        }
        total += l.out_channels * t;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_config_is_valid() {
        assert_eq!(validate_config(&NetworkConfig::reference()), Ok(vec![]));
    }

    #[test]
    fn admissible_q_set() {
        let ok: Vec<usize> = (1..=30)
            .filter(|&q| {
                let cfg = NetworkConfig {
                    m_bands: 32,
                    q_bands: q,
                    ..NetworkConfig::reference()
                };
                validate_config(&cfg).is_ok()
            })
            .collect();
        assert_eq!(ok, vec![1, 2, 3, 5, 6, 10, 15]);
        let cfg = NetworkConfig {
            q_bands: 4,
            ..NetworkConfig::reference()
        };
        assert_eq!(validate_config(&cfg), Err(NnError::InvalidQ(4)));
    }

    #[test]
    fn band_order_rejected() {
        for (p, q) in [(0, 3), (5, 3), (1, 0), (1, 5)] {
            let cfg = NetworkConfig {
                p_bands: p,
                q_bands: q,
                ..NetworkConfig::reference()
            };
            assert!(matches!(validate_config(&cfg), Err(NnError::BandCountOrder { .. })), "{p} {q}");
        }
    }

    #[test]
    fn kernel_stride_rule() {
        let mut cfg = NetworkConfig::reference();
        cfg.decoder_kernels[2] = 7;
        assert_eq!(
            validate_config(&cfg),
            Err(NnError::KernelStrideMismatch { layer: 2, kernel: 7, stride: 2 })
        );
        let mut cfg = NetworkConfig::reference();
        cfg.decoder_kernels[0] = 2;
        assert!(matches!(validate_config(&cfg), Err(NnError::KernelStrideMismatch { layer: 0, .. })));
        let mut cfg = NetworkConfig::reference();
        cfg.decoder_kernels[1] = 12;
        assert!(validate_config(&cfg).is_ok());
    }

    #[test]
    fn mirror_rule() {
        let mut cfg = NetworkConfig::reference();
        cfg.decoder_strides = vec![2, 4, 4];
        cfg.decoder_kernels = vec![4, 8, 8];
        assert!(matches!(validate_config(&cfg), Err(NnError::InvalidConfig(_))));
    }

    #[test]
    fn cutoff_warning() {
        let mut cfg = NetworkConfig::reference();
        cfg.degradation_cutoff_hz = Some(600.0);
        assert!(validate_config(&cfg).unwrap().is_empty());
        cfg.degradation_cutoff_hz = Some(2500.0);
        assert_eq!(validate_config(&cfg).unwrap().len(), 1);
    }

    /// Independent closed form of the generator size.
    fn generator_closed_form(cfg: &NetworkConfig) -> usize {
        let conv = |cin: usize, cout: usize, k: usize| cout * cin * k + 2 * cout;
        let res = |c: usize| {
            cfg.residual_dilations.len() * (conv(c, c, cfg.residual_kernel) + conv(c, c, 1))
        };
        let mut widths = vec![cfg.first_channels];
        widths.extend(&cfg.encoder_channels);
        let mut n = conv(cfg.p_bands, cfg.first_channels, cfg.conv_kernel)
            + conv(cfg.first_channels, cfg.m_bands, cfg.conv_kernel);
        for i in 0..cfg.encoder_strides.len() {
            let (a, b) = (widths[i], widths[i + 1]);
            n += 2 * res(a) + conv(a, b, 2 * cfg.encoder_strides[i]);
            let j = cfg.encoder_strides.len() - 1 - i;
            n += conv(b, a, cfg.decoder_kernels[j]);
        }
        n
    }

    #[test]
    fn generator_count_matches_closed_form() {
        let cfg = NetworkConfig::reference();
        assert_eq!(count_params(&cfg).0, generator_closed_form(&cfg));
        assert_eq!(count_params(&cfg).0, 1_195_112);
    }

    #[test]
    fn doubling_encoder_widths_delta() {
        let base = NetworkConfig::reference();
        let mut wide = base.clone();
        for c in wide.encoder_channels.iter_mut() {
            *c *= 2;
        }
        let delta = count_params(&wide).0 - count_params(&base).0;
        // Terms that depend on the encoder widths c1, c2, c3 (first width f):
        //   residual stacks at c1 and c2, once in the encoder and once in the
        //   decoder: 2 * (12 c^2 + 12 c) each;
        //   each down/up pair (a, b, k): 2 a b k + 2 a + 2 b.
        let g = |c1: usize, c2: usize, c3: usize| {
            let f = 32;
            let res = |c: usize| 2 * (12 * c * c + 12 * c);
            let pair = |a: usize, b: usize, k: usize| 2 * a * b * k + 2 * a + 2 * b;
            res(c1) + res(c2) + pair(f, c1, 4) + pair(c1, c2, 8) + pair(c2, c3, 8)
        };
        assert_eq!(delta, g(128, 256, 512) - g(64, 128, 256));
        assert_eq!(delta, 3_462_912);
        assert_eq!(count_params(&wide).0, generator_closed_form(&wide));
    }

    #[test]
    fn discriminator_counts() {
        let cfg = NetworkConfig::reference();
        let wave: usize = discriminator_scale_layout(&cfg, 0).iter().map(LayerSpec::param_count).sum();
        assert_eq!(wave, 272 + 10_624 + 168_448 + 2_689_024 + 3_074);
        let band: usize = discriminator_scale_layout(&cfg, 1).iter().map(LayerSpec::param_count).sum();
        assert_eq!(band, 690 + 12_720 + 50_640 + 202_080 + 722);
        assert_eq!(count_params(&cfg).1, wave + 3 * band);
    }

    #[test]
    fn layer_counts_per_scale() {
        let cfg = NetworkConfig::reference();
        for k in 0..4 {
            assert_eq!(discriminator_scale_layout(&cfg, k).len(), 5);
        }
        let layout = generator_layout(&cfg);
        // first + 3 x (6 residual + down) + 3 x (up + 6 residual) + last
        assert_eq!(layout.len(), 2 + 3 * 7 * 2);
    }
}
