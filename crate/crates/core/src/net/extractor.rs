use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::conv::{col2im, gemm, im2col, ConvGeom};
use crate::error::{Error, Result};
use crate::vectors::VectorSet;

/// Channel-major RGB image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub const CHANNELS: usize = 3;

    pub fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0.0; Self::CHANNELS * height * width],
        }
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.len() != Self::CHANNELS * self.height * self.width {
            return Err(Error::invalid("image buffer does not match its dimensions"));
        }
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("image contains non-finite values"));
        }
        Ok(())
    }

    /// Zero-pads on the bottom and right so both sides are multiples of `stride`.
    fn padded(&self, stride: usize) -> (usize, usize, Vec<f64>) {
        let h = self.height.div_ceil(stride) * stride;
        let w = self.width.div_ceil(stride) * stride;
        if h == self.height && w == self.width {
            return (h, w, self.data.clone());
        }
        let mut out = vec![0.0; Self::CHANNELS * h * w];
        for c in 0..Self::CHANNELS {
            for y in 0..self.height {
                let src = &self.data[(c * self.height + y) * self.width..][..self.width];
                out[(c * h + y) * w..][..self.width].copy_from_slice(src);
            }
        }
        (h, w, out)
    }
}

/// A grid of unit feature vectors, one per pixel (`y * width + x`).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub height: usize,
    pub width: usize,
    pub features: VectorSet,
}

impl FeatureMap {
    pub fn dim(&self) -> usize {
        self.features.dim()
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn at(&self, pixel: usize) -> &[f64] {
        self.features.row(pixel)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation output.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub bias: bool,
    pub activation: Activation,
}

impl ConvSpec {
    fn weight_count(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel * self.kernel
    }

    fn param_count(&self) -> usize {
        self.weight_count() + if self.bias { self.out_channels } else { 0 }
    }
}

/// Layer list of a feature extractor; the last layer's width is the feature dimension.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub layers: Vec<ConvSpec>,
}

impl Architecture {
    /// 5x5/2, 3x3/2 and 3x3/1 convolutions of widths 16, 32 and `dim`, each
    /// followed by tanh. Total stride 4.
    pub fn desk(dim: usize) -> Self {
        Self::three_layer([16, 32, dim], true)
    }

    pub fn three_layer(widths: [usize; 3], bias: bool) -> Self {
        let spec = |i, o, k, s| ConvSpec {
            in_channels: i,
            out_channels: o,
            kernel: k,
            stride: s,
            bias,
            activation: Activation::Tanh,
        };
        Self {
            layers: vec![
                spec(Image::CHANNELS, widths[0], 5, 2),
                spec(widths[0], widths[1], 3, 2),
                spec(widths[1], widths[2], 3, 1),
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.layers.first() else {
            return Err(Error::invalid("architecture has no layers"));
        };
        if first.in_channels != Image::CHANNELS {
            return Err(Error::invalid("first layer must take RGB input"));
        }
        for w in self.layers.windows(2) {
            if w[0].out_channels != w[1].in_channels {
                return Err(Error::invalid("layer widths do not chain"));
            }
        }
        for l in &self.layers {
            if l.kernel % 2 == 0 || l.stride == 0 || l.out_channels == 0 {
                return Err(Error::invalid(format!("unsupported layer {l:?}")));
            }
        }
        Ok(())
    }

    pub fn stride(&self) -> usize {
        self.layers.iter().map(|l| l.stride).product()
    }

    pub fn dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_channels)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(ConvSpec::param_count).sum()
    }
}

struct LayerCache {
    geom: ConvGeom,
    col: Vec<f64>,
    /// Activation output, channel-major.
    out: Vec<f64>,
}

/// Intermediate values of one forward pass, consumed by the backward pass.
pub struct ForwardCache {
    layers: Vec<LayerCache>,
    /// Norm of each pre-normalization feature; zero marks the guarded case.
    norms: Vec<f64>,
    map_h: usize,
    map_w: usize,
}

/// Trainable convolutional feature extractor with per-pixel L2 normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureExtractor {
    pub architecture: Architecture,
    pub params: Vec<f64>,
}

/// Norm below which a feature is replaced by the first basis vector.
const NORM_GUARD: f64 = 1e-12;

impl FeatureExtractor {
    /// He-scaled Gaussian weights (`std = sqrt(2 / fan_in)`) and zero biases.
    pub fn new(architecture: Architecture, seed: u64) -> Result<Self> {
        architecture.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(architecture.param_count());
        for l in &architecture.layers {
            let fan_in = (l.in_channels * l.kernel * l.kernel) as f64;
            let std = (2.0 / fan_in).sqrt();
            params.extend((0..l.weight_count()).map(|_| std * rng.sample::<f64, _>(StandardNormal)));
            if l.bias {
                params.extend(std::iter::repeat_n(0.0, l.out_channels));
            }
        }
        Ok(Self {
            architecture,
            params,
        })
    }

    pub fn from_parts(architecture: Architecture, params: Vec<f64>) -> Result<Self> {
        architecture.validate()?;
        if params.len() != architecture.param_count() {
            return Err(Error::invalid(format!(
                "expected {} parameters, got {}",
                architecture.param_count(),
                params.len()
            )));
        }
        Ok(Self {
            architecture,
            params,
        })
    }

    pub fn stride(&self) -> usize {
        self.architecture.stride()
    }

    pub fn dim(&self) -> usize {
        self.architecture.dim()
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Output map size for an input of the given size.
    pub fn output_size(&self, height: usize, width: usize) -> (usize, usize) {
        let s = self.stride();
        (height.div_ceil(s), width.div_ceil(s))
    }

    pub fn forward(&self, image: &Image) -> Result<FeatureMap> {
        self.forward_with_cache(image).map(|(m, _)| m)
    }

    pub fn forward_with_cache(&self, image: &Image) -> Result<(FeatureMap, ForwardCache)> {
        image.validate()?;
        let s = self.stride();
        if image.height < s || image.width < s {
            return Err(Error::invalid(format!(
                "image {}x{} is smaller than the stride {s}",
                image.height, image.width
            )));
        }
        let (mut h, mut w, mut act) = image.padded(s);
        let mut layers = Vec::with_capacity(self.architecture.layers.len());
        let mut offset = 0;
        for spec in &self.architecture.layers {
            let geom = ConvGeom::new(spec.in_channels, h, w, spec.kernel, spec.stride);
            let mut col = Vec::new();
            im2col(&geom, &act, &mut col);
            let k = geom.col_rows();
            let n = geom.out_pixels();
            let weights = &self.params[offset..offset + spec.weight_count()];
            let mut out = vec![0.0; spec.out_channels * n];
            if spec.bias {
                let bias = &self.params[offset + spec.weight_count()..offset + spec.param_count()];
                for (c, row) in out.chunks_exact_mut(n).enumerate() {
                    row.fill(bias[c]);
                }
            }
            gemm(spec.out_channels, k, n, weights, k, 1, &col, n, 1, 1.0, &mut out);
            out.iter_mut().for_each(|v| *v = spec.activation.apply(*v));
            offset += spec.param_count();
            h = geom.out_h;
            w = geom.out_w;
            act = out.clone();
            layers.push(LayerCache { geom, col, out });
        }

        let d = self.dim();
        let n = h * w;
        let mut feats = vec![0.0; n * d];
        let mut norms = vec![0.0; n];
        for p in 0..n {
            let f = &mut feats[p * d..(p + 1) * d];
            for (c, v) in f.iter_mut().enumerate() {
                *v = act[c * n + p];
            }
            let nrm = f.iter().map(|x| x * x).sum::<f64>().sqrt();
            if nrm < NORM_GUARD {
                f.fill(0.0);
                f[0] = 1.0;
            } else {
                f.iter_mut().for_each(|x| *x /= nrm);
                norms[p] = nrm;
            }
        }
        let map = FeatureMap {
            height: h,
            width: w,
            features: VectorSet::from_flat(d, feats),
        };
        Ok((
            map,
            ForwardCache {
                layers,
                norms,
                map_h: h,
                map_w: w,
            },
        ))
    }

    /// Gradient of `<forward(image), grad>` with respect to the parameters.
    pub fn backward(&self, image: &Image, grad: &VectorSet) -> Result<Vec<f64>> {
        let (map, cache) = self.forward_with_cache(image)?;
        self.backward_cached(&map, &cache, grad)
    }

    /// Backward pass reusing a forward cache. `grad` holds one row per output
    /// pixel with the upstream gradient for that pixel's unit feature.
    pub fn backward_cached(
        &self,
        map: &FeatureMap,
        cache: &ForwardCache,
        grad: &VectorSet,
    ) -> Result<Vec<f64>> {
        let d = self.dim();
        let n = cache.map_h * cache.map_w;
        if grad.dim() != d || grad.len() != n {
            return Err(Error::invalid(format!(
                "gradient shape {}x{} does not match feature map {}x{}",
                grad.len(),
                grad.dim(),
                n,
                d
            )));
        }

        // Through the sphere projection: dx = (g - y (y.g)) / |x|.
        let mut upstream = vec![0.0; d * n];
        for p in 0..n {
            let nrm = cache.norms[p];
            if nrm == 0.0 {
                continue;
            }
            let y = map.at(p);
            let g = grad.row(p);
            let yg: f64 = y.iter().zip(g).map(|(a, b)| a * b).sum();
            for c in 0..d {
                upstream[c * n + p] = (g[c] - y[c] * yg) / nrm;
            }
        }

        let mut param_grad = vec![0.0; self.params.len()];
        let offsets: Vec<usize> = self
            .architecture
            .layers
            .iter()
            .scan(0, |o, l| {
                let cur = *o;
                *o += l.param_count();
                Some(cur)
            })
            .collect();

        let mut dcol = Vec::new();
        for (li, spec) in self.architecture.layers.iter().enumerate().rev() {
            let lc = &cache.layers[li];
            let n_out = lc.geom.out_pixels();
            let k = lc.geom.col_rows();
            for (g, y) in upstream.iter_mut().zip(&lc.out) {
                *g *= spec.activation.derivative_from_output(*y);
            }
            let off = offsets[li];
            let wc = spec.weight_count();
            {
                let (dw, rest) = param_grad[off..off + spec.param_count()].split_at_mut(wc);
                // dW = dpre * col^T
                gemm(spec.out_channels, n_out, k, &upstream, n_out, 1, &lc.col, 1, n_out, 0.0, dw);
                if spec.bias {
                    for (c, db) in rest.iter_mut().enumerate() {
                        *db = upstream[c * n_out..(c + 1) * n_out].iter().sum();
                    }
                }
            }
            if li == 0 {
                break;
            }
            let weights = &self.params[off..off + wc];
            dcol.clear();
            dcol.resize(k * n_out, 0.0);
            // dcol = W^T * dpre
            gemm(k, spec.out_channels, n_out, weights, 1, k, &upstream, n_out, 1, 0.0, &mut dcol);
            let mut next = Vec::new();
            col2im(&lc.geom, &dcol, &mut next);
            upstream = next;
        }
        Ok(param_grad)
    }

    pub fn snapshot(&self) -> FrozenExtractor {
        FrozenExtractor(Arc::new(self.clone()))
    }
}

/// Immutable, forward-only copy of an extractor.
#[derive(Debug, Clone)]
pub struct FrozenExtractor(Arc<FeatureExtractor>);

impl FrozenExtractor {
    pub fn forward(&self, image: &Image) -> Result<FeatureMap> {
        self.0.forward(image)
    }

    pub fn stride(&self) -> usize {
        self.0.stride()
    }

    pub fn params(&self) -> &[f64] {
        &self.0.params
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vectors::dot;

    fn random_image(h: usize, w: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut img = Image::new(h, w);
        img.data.iter_mut().for_each(|v| *v = rng.random());
        img
    }

    fn tiny() -> FeatureExtractor {
        FeatureExtractor::new(Architecture::three_layer([4, 6, 8], true), 1).unwrap()
    }

    #[test]
    fn output_shape_and_norms() {
        let net = FeatureExtractor::new(Architecture::desk(16), 3).unwrap();
        let map = net.forward(&random_image(64, 64, 1)).unwrap();
        assert_eq!((map.height, map.width, map.dim()), (16, 16, 16));
        assert!(map.features.max_norm_error() < 1e-6);
    }

    #[test]
    fn non_multiple_inputs_are_padded() {
        let net = tiny();
        let map = net.forward(&random_image(10, 13, 1)).unwrap();
        assert_eq!((map.height, map.width), (3, 4));
        assert!(net.forward(&random_image(3, 8, 1)).is_err());
    }

    #[test]
    fn zero_parameters_hit_the_normalization_guard() {
        let arch = Architecture::three_layer([4, 6, 8], false);
        let net = FeatureExtractor::from_parts(arch.clone(), vec![0.0; arch.param_count()]).unwrap();
        let img = random_image(8, 8, 2);
        let map = net.forward(&img).unwrap();
        for f in map.features.rows() {
            assert_eq!(f[0], 1.0);
            assert!(f[1..].iter().all(|&x| x == 0.0));
        }
        let g = VectorSet::from_flat(8, vec![1.0; 8 * map.pixel_count()]);
        assert!(net.backward(&img, &g).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn forward_is_deterministic_and_snapshots_match() {
        let net = tiny();
        let img = random_image(16, 16, 4);
        let a = net.forward(&img).unwrap();
        assert_eq!(a, net.forward(&img).unwrap());
        let snap = net.snapshot();
        assert_eq!(a, snap.forward(&img).unwrap());
    }

    #[test]
    fn snapshot_is_isolated_from_training() {
        let mut net = tiny();
        let img = random_image(16, 16, 4);
        let snap = net.snapshot();
        let before = snap.forward(&img).unwrap();
        net.params.iter_mut().for_each(|p| *p += 0.1);
        assert_ne!(net.forward(&img).unwrap(), before);
        assert_eq!(snap.forward(&img).unwrap(), before);
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let net = tiny();
        let img = random_image(8, 8, 5);
        let g = VectorSet::from_flat(8, vec![0.0; 8 * 4]);
        assert!(net.backward(&img, &g).unwrap().iter().all(|&x| x == 0.0));
        let bad = VectorSet::from_flat(8, vec![0.0; 8 * 3]);
        assert!(net.backward(&img, &bad).is_err());
    }

    #[test]
    fn analytic_gradient_matches_central_differences() {
        let net = tiny();
        let img = random_image(8, 8, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = net.forward(&img).unwrap().pixel_count();
        let g = VectorSet::from_flat(8, (0..8 * n).map(|_| rng.random_range(-1.0..1.0)).collect());
        let analytic = net.backward(&img, &g).unwrap();
        let objective = |params: &[f64]| {
            let m = FeatureExtractor::from_parts(net.architecture.clone(), params.to_vec())
                .unwrap()
                .forward(&img)
                .unwrap();
            (0..n).map(|p| dot(m.at(p), g.row(p))).sum::<f64>()
        };
        let step = 1e-5;
        for i in 0..net.param_count() {
            let mut plus = net.params.clone();
            let mut minus = net.params.clone();
            plus[i] += step;
            minus[i] -= step;
            let fd = (objective(&plus) - objective(&minus)) / (2.0 * step);
            let err = (fd - analytic[i]).abs() / analytic[i].abs().max(fd.abs()).max(1e-6);
            assert!(err <= 1e-4, "param {i}: fd {fd} analytic {}", analytic[i]);
        }
    }

    #[test]
    fn normalization_gradient_is_tangent() {
        // For a single pixel the pre-normalization gradient must be orthogonal
        // to the feature direction.
        let d = 5;
        let y = {
            let mut v = vec![0.3, -0.2, 0.9, 0.1, 0.4];
            crate::vectors::normalize(&mut v);
            v
        };
        let g = [0.5, 1.0, -0.3, 0.2, 0.7];
        let yg = dot(&y, &g);
        let dx: Vec<f64> = (0..d).map(|c| g[c] - y[c] * yg).collect();
        assert!(dot(&dx, &y).abs() < 1e-12);
    }
}
