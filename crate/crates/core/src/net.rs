//! The fixed three-module network: two 3×3 conv/ReLU/normalize modules
//! producing `M` features per pixel, then a 1×1 conv (a per-pixel linear
//! classifier) onto `q_max` channels followed by normalization.

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::loss::Reduction;
use crate::math;
use crate::tensor::{
    channelnorm_backward, channelnorm_forward, conv2d_backward, conv2d_forward, relu_backward,
    relu_forward, ConvSpec, NormCache, Tensor, NORM_EPS,
};
use crate::{Error, Result};

/// Hyperparameters of one segmentation run.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub max_iterations: usize,
    /// Weight of the spatial-continuity term.
    pub alpha: f64,
    /// Feature channels of the two 3×3 modules.
    pub feature_channels: usize,
    /// Response channels, i.e. the most clusters a label map can hold.
    pub q_max: usize,
    /// Training stops once the label map has this many clusters or fewer.
    pub q_min: usize,
    pub seed: u64,
    pub eps: f64,
    pub reduction: Reduction,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            momentum: 0.9,
            max_iterations: 200,
            alpha: 5.0,
            feature_channels: 64,
            q_max: 18,
            q_min: 4,
            seed: 0,
            eps: NORM_EPS,
            reduction: Reduction::Mean,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: alloc::string::String| Err(Error::Config(msg));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(alloc::format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail(alloc::format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            ));
        }
        if self.max_iterations == 0 {
            return fail("iteration cap must be at least 1".into());
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return fail(alloc::format!("alpha must be >= 0, got {}", self.alpha));
        }
        if self.feature_channels == 0 {
            return fail("feature channel count must be at least 1".into());
        }
        if self.q_min == 0 || self.q_min > self.q_max {
            return fail(alloc::format!(
                "cluster bounds must satisfy 1 <= q_min <= q_max, got q_min={} q_max={}",
                self.q_min,
                self.q_max
            ));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return fail(alloc::format!("eps must be > 0, got {}", self.eps));
        }
        Ok(())
    }
}

/// One convolution's parameters and momentum buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub spec: ConvSpec,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub weight_velocity: Vec<f64>,
    pub bias_velocity: Vec<f64>,
}

impl ConvLayer {
    fn he_normal(spec: ConvSpec, rng: &mut ChaCha8Rng) -> Self {
        let std = math::sqrt(2.0 / spec.fan_in() as f64);
        let normal = Normal::new(0.0, std).expect("finite positive std");
        let weights = (0..spec.weights_len())
            .map(|_| normal.sample(rng))
            .collect();
        ConvLayer {
            spec,
            weights,
            bias: vec![0.0; spec.out_channels],
            weight_velocity: vec![0.0; spec.weights_len()],
            bias_velocity: vec![0.0; spec.out_channels],
        }
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub conv1: ConvLayer,
    pub conv2: ConvLayer,
    pub classifier: ConvLayer,
}

/// He-normal weights, zero biases, zero momentum; fully determined by
/// `config.seed`.
pub fn init_params(config: &TrainConfig) -> Result<NetworkParams> {
    config.validate()?;
    let m = config.feature_channels;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    Ok(NetworkParams {
        conv1: ConvLayer::he_normal(ConvSpec::new(1, m, 3)?, &mut rng),
        conv2: ConvLayer::he_normal(ConvSpec::new(m, m, 3)?, &mut rng),
        classifier: ConvLayer::he_normal(ConvSpec::new(m, config.q_max, 1)?, &mut rng),
    })
}

impl NetworkParams {
    fn layers(&self) -> [&ConvLayer; 3] {
        [&self.conv1, &self.conv2, &self.classifier]
    }

    fn layers_mut(&mut self) -> [&mut ConvLayer; 3] {
        [&mut self.conv1, &mut self.conv2, &mut self.classifier]
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(|l| l.param_count()).sum()
    }

    pub fn q_max(&self) -> usize {
        self.classifier.spec.out_channels
    }

    /// All weights and biases, layer by layer, weights before bias.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in self.layers() {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    /// Inverse of [`to_flat`](Self::to_flat). Momentum buffers are untouched.
    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::shape(
                "NetworkParams::set_flat",
                self.param_count(),
                flat.len(),
            ));
        }
        let mut rest = flat;
        for l in self.layers_mut() {
            let (w, r) = rest.split_at(l.weights.len());
            l.weights.copy_from_slice(w);
            let (b, r) = r.split_at(l.bias.len());
            l.bias.copy_from_slice(b);
            rest = r;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers().iter().all(|l| {
            l.weights
                .iter()
                .chain(&l.bias)
                .chain(&l.weight_velocity)
                .chain(&l.bias_velocity)
                .all(|v| v.is_finite())
        })
    }
}

/// Gradient of one layer's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGrads {
    pub conv1: LayerGrads,
    pub conv2: LayerGrads,
    pub classifier: LayerGrads,
}

impl NetworkGrads {
    fn layers(&self) -> [&LayerGrads; 3] {
        [&self.conv1, &self.conv2, &self.classifier]
    }

    /// Same ordering as [`NetworkParams::to_flat`].
    pub fn to_flat(&self) -> Vec<f64> {
        self.layers()
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.layers()
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }
}

/// Normalized `q_max × H × W` network output.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMap(Tensor);

impl ResponseMap {
    pub fn from_tensor(t: Tensor) -> Self {
        ResponseMap(t)
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }
}

/// Intermediate activations kept for [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    image: Tensor,
    act1: Tensor,
    norm1: NormCache,
    act2: Tensor,
    norm2: NormCache,
    norm3: NormCache,
}

fn check_image(image: &Tensor) -> Result<()> {
    let (c, h, w) = image.shape();
    if c != 1 {
        return Err(Error::shape("forward", "1 input channel", c));
    }
    if h == 0 || w == 0 {
        return Err(Error::EmptyImage);
    }
    if let Some(&v) = image.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::PixelRange(v));
    }
    Ok(())
}

/// Runs the network, keeping what [`backward`] needs.
pub fn forward_with_cache(
    params: &NetworkParams,
    image: &Tensor,
    eps: f64,
) -> Result<(ResponseMap, ForwardCache)> {
    check_image(image)?;
    let l1 = &params.conv1;
    let act1 = relu_forward(&conv2d_forward(image, &l1.weights, &l1.bias, &l1.spec)?);
    let (_, norm1) = channelnorm_forward(&act1, eps);

    let l2 = &params.conv2;
    let act2 = relu_forward(&conv2d_forward(
        norm1.output(),
        &l2.weights,
        &l2.bias,
        &l2.spec,
    )?);
    let (_, norm2) = channelnorm_forward(&act2, eps);

    let l3 = &params.classifier;
    let logits = conv2d_forward(norm2.output(), &l3.weights, &l3.bias, &l3.spec)?;
    let (response, norm3) = channelnorm_forward(&logits, eps);

    Ok((
        ResponseMap(response),
        ForwardCache {
            image: image.clone(),
            act1,
            norm1,
            act2,
            norm2,
            norm3,
        },
    ))
}

/// conv1(3×3) → ReLU → normalize → conv2(3×3) → ReLU → normalize →
/// classifier(1×1) → normalize.
pub fn forward(
    params: &NetworkParams,
    image: &Tensor,
    config: &TrainConfig,
) -> Result<ResponseMap> {
    forward_with_cache(params, image, config.eps).map(|(r, _)| r)
}

/// Backpropagates a gradient on the response map to every parameter.
pub fn backward(
    params: &NetworkParams,
    cache: &ForwardCache,
    grad_response: &Tensor,
) -> Result<NetworkGrads> {
    let g = channelnorm_backward(grad_response, &cache.norm3)?;
    let l3 = &params.classifier;
    let c3 = conv2d_backward(&g, cache.norm2.output(), &l3.weights, &l3.spec)?;

    let g = channelnorm_backward(&c3.input, &cache.norm2)?;
    // ReLU output is positive exactly where its input was.
    let g = relu_backward(&g, &cache.act2)?;
    let l2 = &params.conv2;
    let c2 = conv2d_backward(&g, cache.norm1.output(), &l2.weights, &l2.spec)?;

    let g = channelnorm_backward(&c2.input, &cache.norm1)?;
    let g = relu_backward(&g, &cache.act1)?;
    let l1 = &params.conv1;
    let c1 = conv2d_backward(&g, &cache.image, &l1.weights, &l1.spec)?;

    Ok(NetworkGrads {
        conv1: LayerGrads {
            weights: c1.weights,
            bias: c1.bias,
        },
        conv2: LayerGrads {
            weights: c2.weights,
            bias: c2.bias,
        },
        classifier: LayerGrads {
            weights: c3.weights,
            bias: c3.bias,
        },
    })
}

/// Per-pixel cluster ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    ids: Vec<u32>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, ids: Vec<u32>) -> Result<Self> {
        if ids.len() != height * width {
            return Err(Error::shape("LabelMap::new", height * width, ids.len()));
        }
        Ok(LabelMap { height, width, ids })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn get(&self, y: usize, x: usize) -> u32 {
        self.ids[y * self.width + x]
    }

    pub fn max_id(&self) -> Option<u32> {
        self.ids.iter().copied().max()
    }
}

/// Argmax over channels at each pixel; ties go to the lowest channel.
pub fn assign_labels(response: &Tensor) -> LabelMap {
    let (q, h, w) = response.shape();
    let n = h * w;
    let mut ids = vec![0u32; n];
    if q == 0 {
        return LabelMap {
            height: h,
            width: w,
            ids,
        };
    }
    let mut best = response.channel(0).to_vec();
    for c in 1..q {
        for ((b, id), &v) in best.iter_mut().zip(ids.iter_mut()).zip(response.channel(c)) {
            if v > *b {
                *b = v;
                *id = c as u32;
            }
        }
    }
    LabelMap {
        height: h,
        width: w,
        ids,
    }
}

/// Number of distinct ids present.
pub fn count_unique(labels: &LabelMap) -> usize {
    let Some(max) = labels.max_id() else {
        return 0;
    };
    let mut seen = vec![false; max as usize + 1];
    labels.ids.iter().for_each(|&l| seen[l as usize] = true);
    seen.into_iter().filter(|&s| s).count()
}

fn momentum_update(w: &mut [f64], v: &mut [f64], g: &[f64], lr: f64, momentum: f64) {
    for ((w, v), &g) in w.iter_mut().zip(v.iter_mut()).zip(g) {
        *v = momentum * *v + g;
        *w -= lr * *v;
    }
}

/// Classic momentum: `v ← μ·v + g`, `w ← w − lr·v`.
///
/// Rejects non-finite gradients before touching any parameter.
pub fn sgd_momentum_step(
    params: &mut NetworkParams,
    grads: &NetworkGrads,
    config: &TrainConfig,
) -> Result<()> {
    for (l, g) in params.layers().iter().zip(grads.layers()) {
        if l.weights.len() != g.weights.len() || l.bias.len() != g.bias.len() {
            return Err(Error::shape(
                "sgd_momentum_step",
                l.param_count(),
                g.weights.len() + g.bias.len(),
            ));
        }
    }
    if !grads.is_finite() {
        return Err(Error::NumericFailure("gradient"));
    }
    let (lr, mu) = (config.learning_rate, config.momentum);
    for (l, g) in params.layers_mut().into_iter().zip(grads.layers()) {
        momentum_update(&mut l.weights, &mut l.weight_velocity, &g.weights, lr, mu);
        momentum_update(&mut l.bias, &mut l.bias_velocity, &g.bias, lr, mu);
    }
    if !params.is_finite() {
        return Err(Error::NumericFailure("parameter update"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> TrainConfig {
        TrainConfig {
            feature_channels: 4,
            q_max: 6,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = [
            TrainConfig {
                q_min: 0,
                ..Default::default()
            },
            TrainConfig {
                q_min: 19,
                ..Default::default()
            },
            TrainConfig {
                max_iterations: 0,
                ..Default::default()
            },
            TrainConfig {
                learning_rate: 0.0,
                ..Default::default()
            },
            TrainConfig {
                momentum: 1.0,
                ..Default::default()
            },
            TrainConfig {
                alpha: -0.1,
                ..Default::default()
            },
            TrainConfig {
                eps: 0.0,
                ..Default::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn init_is_deterministic_with_zero_bias() {
        let c = small_config();
        let a = init_params(&c).unwrap();
        let b = init_params(&c).unwrap();
        assert_eq!(a, b);
        for l in a.layers() {
            assert!(l.bias.iter().all(|&v| v == 0.0));
            assert!(l.weight_velocity.iter().all(|&v| v == 0.0));
        }
        let other = init_params(&TrainConfig { seed: 1, ..c }).unwrap();
        assert_ne!(a.conv1.weights, other.conv1.weights);
    }

    #[test]
    fn he_normal_scale() {
        let p = init_params(&TrainConfig::default()).unwrap();
        let w = &p.conv1.weights;
        assert_eq!(w.len(), 64 * 9);
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / w.len() as f64;
        let target = (2.0f64 / 9.0).sqrt();
        assert!((var.sqrt() - target).abs() < 0.2 * target);
    }

    #[test]
    fn forward_shapes_and_determinism() {
        let c = small_config();
        let p = init_params(&c).unwrap();
        let img =
            Tensor::from_vec(1, 8, 8, (0..64).map(|i| (i % 7) as f64 / 7.0).collect()).unwrap();
        let r1 = forward(&p, &img, &c).unwrap();
        let r2 = forward(&p, &img, &c).unwrap();
        assert_eq!(r1.tensor().shape(), (6, 8, 8));
        assert_eq!(r1, r2);
        assert!(forward(&p, &Tensor::filled(1, 2, 2, 1.5), &c).is_err());
        assert!(forward(&p, &Tensor::zeros(2, 2, 2), &c).is_err());
    }

    #[test]
    fn constant_image_interior_is_uniform() {
        let c = small_config();
        let p = init_params(&c).unwrap();
        let r = forward(&p, &Tensor::filled(1, 12, 12, 0.4), &c).unwrap();
        let t = r.tensor();
        // Padding influence reaches two pixels in from the border.
        for ch in 0..6 {
            let v0 = t.get(ch, 2, 2);
            for y in 2..10 {
                for x in 2..10 {
                    assert!((t.get(ch, y, x) - v0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn argmax_labels() {
        let t = Tensor::from_vec(2, 1, 1, vec![0.3, 0.7]).unwrap();
        assert_eq!(assign_labels(&t).ids(), &[1]);
        let t = Tensor::from_vec(3, 1, 1, vec![0.5, 0.5, 0.5]).unwrap();
        assert_eq!(assign_labels(&t).ids(), &[0]);
    }

    #[test]
    fn unique_counts() {
        assert_eq!(count_unique(&LabelMap::new(2, 2, vec![0; 4]).unwrap()), 1);
        assert_eq!(
            count_unique(&LabelMap::new(2, 2, vec![0, 1, 2, 3]).unwrap()),
            4
        );
        assert_eq!(
            count_unique(&LabelMap::new(1, 3, vec![0, 0, 17]).unwrap()),
            2
        );
    }

    #[test]
    fn momentum_hand_iteration() {
        let (mut w, mut v) = ([1.0], [0.0]);
        momentum_update(&mut w, &mut v, &[2.0], 0.1, 0.0);
        assert!((w[0] - 0.8).abs() < 1e-15);

        let (mut w, mut v) = ([0.0], [0.0]);
        momentum_update(&mut w, &mut v, &[1.0], 0.1, 0.9);
        assert!((w[0] + 0.1).abs() < 1e-15);
        momentum_update(&mut w, &mut v, &[1.0], 0.1, 0.9);
        assert!((v[0] - 1.9).abs() < 1e-15);
        assert!((w[0] + 0.29).abs() < 1e-15);
    }

    #[test]
    fn sgd_step_on_network() {
        let c = small_config();
        let mut p = init_params(&c).unwrap();
        let before = p.clone();
        let zero = NetworkGrads {
            conv1: LayerGrads {
                weights: vec![0.0; 36],
                bias: vec![0.0; 4],
            },
            conv2: LayerGrads {
                weights: vec![0.0; 144],
                bias: vec![0.0; 4],
            },
            classifier: LayerGrads {
                weights: vec![0.0; 24],
                bias: vec![0.0; 6],
            },
        };
        sgd_momentum_step(&mut p, &zero, &c).unwrap();
        assert_eq!(p, before);

        let mut bad = zero.clone();
        bad.conv2.weights[3] = f64::NAN;
        assert!(matches!(
            sgd_momentum_step(&mut p, &bad, &c),
            Err(Error::NumericFailure(_))
        ));
        assert_eq!(p, before);

        let mut short = zero;
        short.classifier.bias.pop();
        assert!(matches!(
            sgd_momentum_step(&mut p, &short, &c),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn flat_round_trip() {
        let c = small_config();
        let p = init_params(&c).unwrap();
        let flat = p.to_flat();
        assert_eq!(flat.len(), 36 + 4 + 144 + 4 + 24 + 6);
        let mut q = init_params(&TrainConfig { seed: 9, ..c }).unwrap();
        q.set_flat(&flat).unwrap();
        assert_eq!(q.to_flat(), flat);
        assert!(q.set_flat(&flat[1..]).is_err());
    }
}
