//! Convolution primitives over `(channels, frames)` maps in `f32`.

use alloc::vec::Vec;

use super::weights::WeightStore;
use super::{LayerSpec, NnError};

/// Channel-major activation map.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub frames: usize,
    pub data: Vec<f32>,
}

impl FeatureMap {
    pub fn zeros(channels: usize, frames: usize) -> Self {
        Self {
            channels,
            frames,
            data: alloc::vec![0.0; channels * frames],
        }
    }

    pub fn from_data(channels: usize, frames: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), channels * frames);
        Self { channels, frames, data }
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        &self.data[c * self.frames..(c + 1) * self.frames]
    }

    pub(crate) fn channel_mut(&mut self, c: usize) -> &mut [f32] {
        &mut self.data[c * self.frames..(c + 1) * self.frames]
    }

    pub(crate) fn leaky_relu(mut self, slope: f32) -> Self {
        for v in self.data.iter_mut() {
            if *v < 0.0 {
                *v *= slope;
            }
        }
        self
    }

    pub(crate) fn tanh(mut self) -> Self {
        for v in self.data.iter_mut() {
            *v = libm::tanhf(*v);
        }
        self
    }

    pub(crate) fn add_assign(&mut self, other: &FeatureMap) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Non-overlapping average pooling along time; a trailing partial window
    /// is dropped.
    pub(crate) fn avg_pool(&self, factor: usize) -> Self {
        if factor == 1 {
            return self.clone();
        }
        let frames = self.frames / factor;
        let mut out = FeatureMap::zeros(self.channels, frames);
        let inv = 1.0 / factor as f32;
        for c in 0..self.channels {
            let src = self.channel(c);
            for (t, o) in out.channel_mut(c).iter_mut().enumerate() {
                *o = src[t * factor..(t + 1) * factor].iter().sum::<f32>() * inv;
            }
        }
        out
    }
}

/// Effective weight `g * v / ||v||` per output channel, in `(out, in/groups, k)`
/// order. A zero direction row yields a zero weight.
fn effective_weight(v: &[f32], g: &[f32], row: usize) -> Vec<f32> {
    let mut w = Vec::with_capacity(v.len());
    for (o, chunk) in v.chunks(row).enumerate() {
        let norm = libm::sqrt(chunk.iter().map(|&x| x as f64 * x as f64).sum::<f64>());
        let scale = if norm > 0.0 { g[o] as f64 / norm } else { 0.0 };
        w.extend(chunk.iter().map(|&x| (x as f64 * scale) as f32));
    }
    w
}

/// A convolution with its effective weights resolved from a store.
#[derive(Debug, Clone)]
pub(crate) struct Conv {
    spec: LayerSpec,
    weight: Vec<f32>,
    bias: Vec<f32>,
}

impl Conv {
    pub fn load(spec: &LayerSpec, store: &WeightStore) -> Result<Self, NnError> {
        let shape = spec.v_shape();
        let v = store.expect(&alloc::format!("{}.v", spec.name), &shape)?;
        let g = store.expect(&alloc::format!("{}.g", spec.name), &[spec.out_channels])?;
        let b = store.expect(&alloc::format!("{}.bias", spec.name), &[spec.out_channels])?;
        Ok(Self {
            spec: spec.clone(),
            weight: effective_weight(&v.data, &g.data, shape[1] * shape[2]),
            bias: b.data.clone(),
        })
    }

    pub fn forward(&self, x: &FeatureMap) -> FeatureMap {
        if self.spec.transposed {
            self.forward_transposed(x)
        } else {
            self.forward_direct(x)
        }
    }

    /// "Same" zero padding (split evenly, extra sample on the right), then
    /// stride: `ceil(frames / stride)` outputs.
    fn forward_direct(&self, x: &FeatureMap) -> FeatureMap {
        let s = &self.spec;
        debug_assert_eq!(x.channels, s.in_channels);
        let k = s.kernel;
        let d = s.dilation;
        let total = d * (k - 1);
        let left = total / 2;
        let len = x.frames;
        let padded_len = len + total;
        let out_frames = len.div_ceil(s.stride);
        let cin_g = s.in_channels / s.groups;
        let cout_g = s.out_channels / s.groups;

        let mut padded = alloc::vec![0.0f32; x.channels * padded_len];
        for c in 0..x.channels {
            padded[c * padded_len + left..c * padded_len + left + len].copy_from_slice(x.channel(c));
        }

        let mut out = FeatureMap::zeros(s.out_channels, out_frames);
        let mut acc = alloc::vec![0.0f32; out_frames];
        for o in 0..s.out_channels {
            let group = o / cout_g;
            acc.iter_mut().for_each(|a| *a = self.bias[o]);
            for ci in 0..cin_g {
                let c = group * cin_g + ci;
                let src = &padded[c * padded_len..(c + 1) * padded_len];
                let wrow = &self.weight[(o * cin_g + ci) * k..(o * cin_g + ci + 1) * k];
                for (j, &w) in wrow.iter().enumerate() {
                    let off = j * d;
                    if s.stride == 1 {
                        for (a, &v) in acc.iter_mut().zip(&src[off..off + out_frames]) {
                            *a += w * v;
                        }
                    } else {
                        for (t, a) in acc.iter_mut().enumerate() {
                            *a += w * src[off + t * s.stride];
                        }
                    }
                }
            }
            out.channel_mut(o).copy_from_slice(&acc);
        }
        out
    }

    /// Transposed convolution producing exactly `frames * stride` outputs:
    /// the full result is cropped by `(kernel - stride) / 2` on the left.
    fn forward_transposed(&self, x: &FeatureMap) -> FeatureMap {
        let s = &self.spec;
        debug_assert_eq!(x.channels, s.in_channels);
        debug_assert_eq!(s.groups, 1);
        let k = s.kernel;
        let st = s.stride;
        let crop = (k - st) / 2;
        let out_frames = x.frames * st;
        let mut out = FeatureMap::zeros(s.out_channels, out_frames);
        for o in 0..s.out_channels {
            let dst = out.channel_mut(o);
            dst.iter_mut().for_each(|v| *v = self.bias[o]);
            for c in 0..s.in_channels {
                let src = x.channel(c);
                let wrow = &self.weight[(o * s.in_channels + c) * k..(o * s.in_channels + c + 1) * k];
                for (j, &w) in wrow.iter().enumerate() {
                    // full index t * st + j maps to output t * st + j - crop
                    let t_lo = if j >= crop { 0 } else { (crop - j).div_ceil(st) };
                    let t_hi = (out_frames + crop).saturating_sub(j).div_ceil(st).min(x.frames);
                    for t in t_lo..t_hi {
                        dst[t * st + j - crop] += w * src[t];
                    }
                }
            }
        }
        out
    }
}

/// Dilated residual unit: `x + pointwise(leaky(dilated(leaky(x))))`.
#[derive(Debug, Clone)]
pub(crate) struct ResidualUnit {
    pub dilated: Conv,
    pub pointwise: Conv,
}

impl ResidualUnit {
    pub fn forward(&self, x: &FeatureMap, slope: f32) -> FeatureMap {
        let h = self.dilated.forward(&x.clone().leaky_relu(slope));
        let mut h = self.pointwise.forward(&h.leaky_relu(slope));
        h.add_assign(x);
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::String;

    fn conv_with(spec: LayerSpec, weight: Vec<f32>, bias: Vec<f32>) -> Conv {
        Conv { spec, weight, bias }
    }

    fn spec(cin: usize, cout: usize, k: usize, stride: usize, dilation: usize, groups: usize, transposed: bool) -> LayerSpec {
        LayerSpec {
            name: String::from("t"),
            in_channels: cin,
            out_channels: cout,
            kernel: k,
            stride,
            dilation,
            groups,
            transposed,
        }
    }

    /// Direct-definition oracle for a "same"-padded strided dilated grouped conv.
    fn naive_conv(s: &LayerSpec, w: &[f32], b: &[f32], x: &FeatureMap) -> Vec<f32> {
        let left = (s.dilation * (s.kernel - 1) / 2) as isize;
        let cin_g = s.in_channels / s.groups;
        let cout_g = s.out_channels / s.groups;
        let out_frames = x.frames.div_ceil(s.stride);
        let mut y = vec![0.0f32; s.out_channels * out_frames];
        for o in 0..s.out_channels {
            for t in 0..out_frames {
                let mut acc = b[o];
                for ci in 0..cin_g {
                    let c = (o / cout_g) * cin_g + ci;
                    for j in 0..s.kernel {
                        let idx = (t * s.stride) as isize + (j * s.dilation) as isize - left;
                        if idx >= 0 && (idx as usize) < x.frames {
                            acc += w[(o * cin_g + ci) * s.kernel + j] * x.channel(c)[idx as usize];
                        }
                    }
                }
                y[o * out_frames + t] = acc;
            }
        }
        y
    }

    fn ramp(n: usize, a: f32) -> Vec<f32> {
        (0..n).map(|i| libm::sinf(i as f32 * a) + 0.1 * i as f32 / n as f32).collect()
    }

    #[test]
    fn direct_conv_matches_naive() {
        for &(cin, cout, k, st, d, g) in &[
            (2, 3, 3, 1, 1, 1),
            (4, 4, 3, 1, 9, 1),
            (4, 8, 8, 4, 1, 1),
            (4, 8, 5, 2, 1, 4),
            (6, 6, 21, 2, 1, 3),
        ] {
            let s = spec(cin, cout, k, st, d, g, false);
            let w = ramp(cout * (cin / g) * k, 0.37);
            let b = ramp(cout, 1.1);
            let x = FeatureMap::from_data(cin, 37, ramp(cin * 37, 0.21));
            let got = conv_with(s.clone(), w.clone(), b.clone()).forward(&x);
            let want = naive_conv(&s, &w, &b, &x);
            assert_eq!(got.frames, 37usize.div_ceil(st));
            for (a, e) in got.data.iter().zip(&want) {
                assert!((a - e).abs() < 1e-4, "{a} vs {e}");
            }
        }
    }

    #[test]
    fn transposed_conv_matches_scatter_definition() {
        let (cin, cout, k, st) = (3, 2, 8, 4);
        let s = spec(cin, cout, k, st, 1, 1, true);
        let w = ramp(cout * cin * k, 0.5);
        let b = vec![0.25, -0.5];
        let x = FeatureMap::from_data(cin, 10, ramp(cin * 10, 0.3));
        let got = conv_with(s, w.clone(), b.clone()).forward(&x);
        assert_eq!(got.frames, 40);
        let full_len = (10 - 1) * st + k;
        for o in 0..cout {
            let mut full = vec![0.0f32; full_len];
            for c in 0..cin {
                for t in 0..10 {
                    for j in 0..k {
                        full[t * st + j] += w[(o * cin + c) * k + j] * x.channel(c)[t];
                    }
                }
            }
            for t in 0..40 {
                assert!((got.channel(o)[t] - (full[t + 2] + b[o])).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn effective_weight_identity() {
        let v = [3.0f32, 4.0, 0.0, 0.0];
        let w = effective_weight(&v, &[5.0, 1.0], 2);
        assert_eq!(w, vec![3.0, 4.0, 0.0, 0.0]);
        let w2 = effective_weight(&[6.0, 8.0], &[5.0], 2);
        assert_eq!(w2, vec![3.0, 4.0]);
    }

    #[test]
    fn pooling() {
        let x = FeatureMap::from_data(1, 5, vec![1.0, 3.0, 5.0, 7.0, 9.0]);
        assert_eq!(x.avg_pool(2).data, vec![2.0, 6.0]);
        assert_eq!(x.avg_pool(1), x);
    }

    #[test]
    fn leaky() {
        let x = FeatureMap::from_data(1, 2, vec![-1.0, 2.0]);
        assert_eq!(x.leaky_relu(0.2).data, vec![-0.2, 2.0]);
    }
}
