//! Multi-scale feature modeling.
//!
//! A frozen convolutional prefix maps an image to four feature maps at
//! strides 1/2/4/8 with 64/128/256/512 channels; the collection is the
//! image's *feature model*. Channel statistics and normalization over
//! those maps are the primitives every downstream module builds on.

use ndarray::{Array2, Array4};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image_io::ImageTensor;
use crate::nn::act::{relu, relu_backward};
use crate::nn::conv::{Conv2d, ConvCtx};
use crate::nn::pool::{max_pool2, max_pool2_backward, MaxPoolCtx};
use crate::nn::{param_rng, Float, ParamSet, ParamView, ParamViewMut, STAT_EPSILON};

/// Identifies which encoder tap a feature map came from.
///
/// Tap ids follow the layer numbering of the `torchvision` `vgg19_bn`
/// feature stack, where indices 4/11/18/31 are the normalized outputs of
/// conv1_2, conv2_2, conv3_2 and conv4_2. This encoder is the plain
/// (norm-free) VGG-19 prefix, so the taps are the post-activation outputs
/// relu1_2, relu2_2, relu3_2 and relu4_2, giving the channel/stride ladder
/// (64, x1), (128, x2), (256, x4), (512, x8).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scale {
    S4,
    S11,
    S18,
    S31,
}

pub const SCALES: [Scale; 4] = [Scale::S4, Scale::S11, Scale::S18, Scale::S31];

impl Scale {
    pub fn tap_id(self) -> usize {
        match self {
            Scale::S4 => 4,
            Scale::S11 => 11,
            Scale::S18 => 18,
            Scale::S31 => 31,
        }
    }

    pub fn channels(self) -> usize {
        match self {
            Scale::S4 => 64,
            Scale::S11 => 128,
            Scale::S18 => 256,
            Scale::S31 => 512,
        }
    }

    /// Downsampling factor relative to the input image.
    pub fn stride(self) -> usize {
        match self {
            Scale::S4 => 1,
            Scale::S11 => 2,
            Scale::S18 => 4,
            Scale::S31 => 8,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Scale::S4 => 0,
            Scale::S11 => 1,
            Scale::S18 => 2,
            Scale::S31 => 3,
        }
    }
}

/// One tapped feature response: (batch, ch, h, w) plus its scale tag.
#[derive(Debug, Clone)]
pub struct FeatureMap<F: Float = f32> {
    pub data: Array4<F>,
    pub scale: Scale,
}

impl<F: Float> FeatureMap<F> {
    pub fn new(data: Array4<F>, scale: Scale) -> Self {
        Self { data, scale }
    }

    pub fn channels(&self) -> usize {
        self.data.dim().1
    }

    pub fn batch(&self) -> usize {
        self.data.dim().0
    }

    pub fn spatial(&self) -> (usize, usize) {
        let (_, _, h, w) = self.data.dim();
        (h, w)
    }
}

/// The four feature maps of one image, ordered S4, S11, S18, S31.
#[derive(Debug, Clone)]
pub struct FeatureModel<F: Float = f32> {
    maps: [FeatureMap<F>; 4],
}

impl<F: Float> FeatureModel<F> {
    /// Builds a model and verifies the channel/stride ladder.
    pub fn from_maps(maps: [FeatureMap<F>; 4]) -> Result<Self> {
        let model = Self { maps };
        model.check_ladder()?;
        Ok(model)
    }

    /// No ladder validation; for diagnostics and toy-sized tests.
    pub fn from_maps_unchecked(maps: [FeatureMap<F>; 4]) -> Self {
        Self { maps }
    }

    pub fn maps(&self) -> &[FeatureMap<F>; 4] {
        &self.maps
    }

    pub fn map(&self, scale: Scale) -> &FeatureMap<F> {
        &self.maps[scale.index()]
    }

    pub fn batch(&self) -> usize {
        self.maps[0].batch()
    }

    pub fn check_ladder(&self) -> Result<()> {
        for (i, (map, scale)) in self.maps.iter().zip(SCALES).enumerate() {
            if map.scale != scale {
                return Err(Error::BadFeatureModel {
                    scale: scale.tap_id(),
                    reason: format!("slot {i} holds scale {}", map.scale.tap_id()),
                });
            }
            if map.channels() != scale.channels() {
                return Err(Error::BadFeatureModel {
                    scale: scale.tap_id(),
                    reason: format!(
                        "expected {} channels, got {}",
                        scale.channels(),
                        map.channels()
                    ),
                });
            }
            if map.batch() != self.maps[0].batch() {
                return Err(Error::BadFeatureModel {
                    scale: scale.tap_id(),
                    reason: "batch size differs across scales".into(),
                });
            }
        }
        for w in self.maps.windows(2) {
            let (h0, w0) = w[0].spatial();
            let (h1, w1) = w[1].spatial();
            if h0 != 2 * h1 || w0 != 2 * w1 {
                return Err(Error::BadFeatureModel {
                    scale: w[1].scale.tap_id(),
                    reason: format!("spatial dims {h0}x{w0} -> {h1}x{w1} break the factor-2 ladder"),
                });
            }
        }
        Ok(())
    }
}

/// Per-(batch, channel) mean and epsilon-floored standard deviation.
#[derive(Debug, Clone)]
pub struct ChannelStats<F: Float = f32> {
    pub mu: Array2<F>,    // (batch, ch)
    pub sigma: Array2<F>, // (batch, ch), sqrt(population var + 1e-5)
}

impl<F: Float> ChannelStats<F> {
    pub fn channels(&self) -> usize {
        self.mu.dim().1
    }
}

/// Channel statistics over the spatial dims of each batch item.
/// Accumulation runs in f64 so that streamed (tiled) statistics can
/// reproduce the single-pass values.
pub fn channel_stats_arr<F: Float>(x: &Array4<F>) -> (Array2<F>, Array2<F>) {
    let (bs, c, h, w) = x.dim();
    let n = (h * w) as f64;
    let mut mu = Array2::zeros((bs, c));
    let mut sigma = Array2::zeros((bs, c));
    for bi in 0..bs {
        for ci in 0..c {
            let mut sum = 0.0f64;
            let mut sumsq = 0.0f64;
            for v in x.slice(ndarray::s![bi, ci, .., ..]).iter() {
                let v = v.to_f64();
                sum += v;
                sumsq += v * v;
            }
            let mean = sum / n;
            let var = (sumsq / n - mean * mean).max(0.0);
            mu[(bi, ci)] = F::from_f64(mean);
            sigma[(bi, ci)] = F::from_f64((var + STAT_EPSILON).sqrt());
        }
    }
    (mu, sigma)
}

pub fn channel_stats<F: Float>(f: &FeatureMap<F>) -> ChannelStats<F> {
    let (mu, sigma) = channel_stats_arr(&f.data);
    ChannelStats { mu, sigma }
}

/// Gradient of (mu, sigma) with respect to the map they were computed
/// from: dx = dmu/n + dsigma * (x - mu) / (n * sigma).
pub fn stats_backward<F: Float>(
    x: &Array4<F>,
    stats: &ChannelStats<F>,
    dmu: &Array2<F>,
    dsigma: &Array2<F>,
) -> Array4<F> {
    let (bs, c, h, w) = x.dim();
    let inv_n = F::from_f64(1.0 / (h * w) as f64);
    let mut gx = Array4::zeros((bs, c, h, w));
    for bi in 0..bs {
        for ci in 0..c {
            let mu = stats.mu[(bi, ci)];
            let sig = stats.sigma[(bi, ci)];
            let a = dmu[(bi, ci)] * inv_n;
            let b = dsigma[(bi, ci)] * inv_n / sig;
            let xs = x.slice(ndarray::s![bi, ci, .., ..]);
            let mut gs = gx.slice_mut(ndarray::s![bi, ci, .., ..]);
            ndarray::Zip::from(&mut gs).and(&xs).for_each(|g, &v| {
                *g = a + b * (v - mu);
            });
        }
    }
    gx
}

/// (x - mu) / sigma per (batch, channel).
pub fn normalize_arr<F: Float>(x: &Array4<F>) -> Array4<F> {
    let (mu, sigma) = channel_stats_arr(x);
    apply_norm(x, &mu, &sigma)
}

pub fn normalize<F: Float>(f: &FeatureMap<F>) -> FeatureMap<F> {
    FeatureMap::new(normalize_arr(&f.data), f.scale)
}

fn apply_norm<F: Float>(x: &Array4<F>, mu: &Array2<F>, sigma: &Array2<F>) -> Array4<F> {
    let (bs, c, _, _) = x.dim();
    let mut y = x.clone();
    for bi in 0..bs {
        for ci in 0..c {
            let m = mu[(bi, ci)];
            let inv = F::one() / sigma[(bi, ci)];
            y.slice_mut(ndarray::s![bi, ci, .., ..])
                .mapv_inplace(|v| (v - m) * inv);
        }
    }
    y
}

/// Backward through `normalize_arr`: for each (batch, channel),
/// dx = (g - mean(g) - xhat * mean(g * xhat)) / sigma.
pub fn normalize_backward<F: Float>(x: &Array4<F>, gy: &Array4<F>) -> Array4<F> {
    let (mu, sigma) = channel_stats_arr(x);
    let (bs, c, h, w) = x.dim();
    let n = F::from_f64((h * w) as f64);
    let mut gx = Array4::zeros((bs, c, h, w));
    for bi in 0..bs {
        for ci in 0..c {
            let m = mu[(bi, ci)];
            let sig = sigma[(bi, ci)];
            let inv = F::one() / sig;
            let xs = x.slice(ndarray::s![bi, ci, .., ..]);
            let gs = gy.slice(ndarray::s![bi, ci, .., ..]);
            let mut g_mean = F::zero();
            let mut gx_mean = F::zero();
            ndarray::Zip::from(&gs).and(&xs).for_each(|&g, &v| {
                let xhat = (v - m) * inv;
                g_mean = g_mean + g;
                gx_mean = gx_mean + g * xhat;
            });
            g_mean = g_mean / n;
            gx_mean = gx_mean / n;
            let mut out = gx.slice_mut(ndarray::s![bi, ci, .., ..]);
            ndarray::Zip::from(&mut out)
                .and(&gs)
                .and(&xs)
                .for_each(|o, &g, &v| {
                    let xhat = (v - m) * inv;
                    *o = (g - g_mean - xhat * gx_mean) * inv;
                });
        }
    }
    gx
}

// ---------------------------------------------------------------------------
// Frozen encoder
// ---------------------------------------------------------------------------

pub const ARCHITECTURE_ID: &str = "vgg19-prefix-4tap-v1";

/// ImageNet channel statistics used by the pretrained classifier.
const INPUT_MEAN: [f64; 3] = [0.485, 0.456, 0.406];
const INPUT_STD: [f64; 3] = [0.229, 0.224, 0.225];

struct LayerSpec {
    name: &'static str,
    in_ch: usize,
    out_ch: usize,
    pool_before: bool,
    tap_after: Option<Scale>,
}

const LAYERS: [LayerSpec; 10] = [
    LayerSpec { name: "conv1_1", in_ch: 3, out_ch: 64, pool_before: false, tap_after: None },
    LayerSpec { name: "conv1_2", in_ch: 64, out_ch: 64, pool_before: false, tap_after: Some(Scale::S4) },
    LayerSpec { name: "conv2_1", in_ch: 64, out_ch: 128, pool_before: true, tap_after: None },
    LayerSpec { name: "conv2_2", in_ch: 128, out_ch: 128, pool_before: false, tap_after: Some(Scale::S11) },
    LayerSpec { name: "conv3_1", in_ch: 128, out_ch: 256, pool_before: true, tap_after: None },
    LayerSpec { name: "conv3_2", in_ch: 256, out_ch: 256, pool_before: false, tap_after: Some(Scale::S18) },
    LayerSpec { name: "conv3_3", in_ch: 256, out_ch: 256, pool_before: false, tap_after: None },
    LayerSpec { name: "conv3_4", in_ch: 256, out_ch: 256, pool_before: false, tap_after: None },
    LayerSpec { name: "conv4_1", in_ch: 256, out_ch: 512, pool_before: true, tap_after: None },
    LayerSpec { name: "conv4_2", in_ch: 512, out_ch: 512, pool_before: false, tap_after: Some(Scale::S31) },
];

/// The frozen VGG-19 convolutional prefix through the S31 tap.
///
/// Parameters are never updated by training; they come either from an
/// imported classifier checkpoint (see `scripts/import_vgg19.py`) or from
/// a seeded random initialization for self-contained runs and tests.
#[derive(Debug, Clone)]
pub struct ModelingNetwork<F: Float = f32> {
    convs: Vec<Conv2d<F>>,
}

pub struct ModelingCtx<F: Float> {
    conv_ctxs: Vec<ConvCtx<F>>,
    pre_acts: Vec<Array4<F>>,
    pool_ctxs: Vec<Option<MaxPoolCtx>>,
    input_hw: (usize, usize),
}

impl<F: Float> ModelingNetwork<F> {
    pub fn random(seed: u64) -> Self {
        let convs = LAYERS
            .iter()
            .map(|l| {
                let mut rng: ChaCha8Rng = param_rng(seed, &format!("modeling.{}", l.name));
                Conv2d::new(l.in_ch, l.out_ch, 3, 1, 1, &mut rng)
            })
            .collect();
        Self { convs }
    }

    /// Maps [-1, 1] RGB into the classifier's expected input distribution.
    fn remap_input(&self, img: &Array4<F>) -> Array4<F> {
        let mut x = img.clone();
        let (bs, _, _, _) = x.dim();
        for bi in 0..bs {
            for ci in 0..3 {
                let mean = F::from_f64(INPUT_MEAN[ci]);
                let inv_std = F::from_f64(1.0 / INPUT_STD[ci]);
                let half = F::from_f64(0.5);
                x.slice_mut(ndarray::s![bi, ci, .., ..])
                    .mapv_inplace(|v| ((v + F::one()) * half - mean) * inv_std);
            }
        }
        x
    }

    pub fn forward(&self, img: &ImageTensor<F>) -> Result<FeatureModel<F>> {
        img.require_mod8()?;
        let (model, _) = self.run(img.data(), false);
        Ok(model)
    }

    /// Forward pass that keeps what the input-gradient pass needs.
    pub fn forward_ctx(&self, img: &ImageTensor<F>) -> Result<(FeatureModel<F>, ModelingCtx<F>)> {
        img.require_mod8()?;
        let (model, ctx) = self.run(img.data(), true);
        Ok((model, ctx.expect("ctx requested")))
    }

    fn run(&self, img: &Array4<F>, want_ctx: bool) -> (FeatureModel<F>, Option<ModelingCtx<F>>) {
        let (_, _, h, w) = img.dim();
        let mut x = self.remap_input(img);
        let mut taps: Vec<FeatureMap<F>> = Vec::with_capacity(4);
        let mut conv_ctxs = Vec::new();
        let mut pre_acts = Vec::new();
        let mut pool_ctxs = Vec::new();
        for (layer, conv) in LAYERS.iter().zip(&self.convs) {
            let mut pool_ctx = None;
            if layer.pool_before {
                let (pooled, pctx) = max_pool2(&x);
                x = pooled;
                pool_ctx = Some(pctx);
            }
            let pre = if want_ctx {
                let (pre, cctx) = conv.forward_t(&x);
                conv_ctxs.push(cctx);
                pre
            } else {
                conv.forward(&x)
            };
            x = relu(&pre);
            if want_ctx {
                pre_acts.push(pre);
                pool_ctxs.push(pool_ctx);
            }
            if let Some(scale) = layer.tap_after {
                taps.push(FeatureMap::new(x.clone(), scale));
            }
        }
        let maps: [FeatureMap<F>; 4] = taps.try_into().expect("four taps");
        let model = FeatureModel::from_maps(maps).expect("encoder output obeys the ladder");
        let ctx = want_ctx.then_some(ModelingCtx {
            conv_ctxs,
            pre_acts,
            pool_ctxs,
            input_hw: (h, w),
        });
        (model, ctx)
    }

    /// Gradient of a scalar loss with respect to the *input image*, given
    /// gradients flowing into each tap. Weights are frozen, so no
    /// parameter gradients exist here.
    pub fn backward_input(&self, ctx: &ModelingCtx<F>, tap_grads: &[Array4<F>; 4]) -> Array4<F> {
        let last = self.convs.len() - 1;
        let mut g: Option<Array4<F>> = None;
        let mut tap_idx = 3usize;
        for i in (0..=last).rev() {
            if LAYERS[i].tap_after.is_some() {
                let tg = &tap_grads[tap_idx];
                g = Some(match g {
                    Some(acc) => acc + tg,
                    None => tg.clone(),
                });
                tap_idx = tap_idx.wrapping_sub(1);
            }
            let mut grad = g.expect("S31 tap grad seeds the backward pass");
            grad = relu_backward(&ctx.pre_acts[i], &grad);
            grad = self.convs[i].backward_data(&ctx.conv_ctxs[i], &grad);
            if let Some(pctx) = &ctx.pool_ctxs[i] {
                grad = max_pool2_backward(pctx, &grad);
            }
            g = Some(grad);
        }
        let mut gin = g.expect("nonempty network");
        debug_assert_eq!(gin.dim().2, ctx.input_hw.0);
        // Undo the input remap: d/dimg of ((img+1)/2 - mean)/std.
        for ci in 0..3 {
            let scale = F::from_f64(0.5 / INPUT_STD[ci]);
            gin.slice_mut(ndarray::s![.., ci, .., ..])
                .mapv_inplace(|v| v * scale);
        }
        gin
    }
}

impl<F: Float> ParamSet<F> for ModelingNetwork<F> {
    fn visit(&self, f: &mut dyn FnMut(&str, ParamView<'_, F>)) {
        for (layer, conv) in LAYERS.iter().zip(&self.convs) {
            f(
                &format!("modeling.{}.weight", layer.name),
                ParamView::Ten4(&conv.w.value),
            );
            f(
                &format!("modeling.{}.bias", layer.name),
                ParamView::Vec1(&conv.b.value),
            );
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, ParamViewMut<'_, F>)) {
        for (layer, conv) in LAYERS.iter().zip(&mut self.convs) {
            f(
                &format!("modeling.{}.weight", layer.name),
                ParamViewMut::Ten4(&mut conv.w.value, &mut conv.w.grad),
            );
            f(
                &format!("modeling.{}.bias", layer.name),
                ParamViewMut::Vec1(&mut conv.b.value, &mut conv.b.grad),
            );
        }
    }
}

/// Build the feature model of an image (spec operation).
pub fn extract_feature_model<F: Float>(
    img: &ImageTensor<F>,
    net: &ModelingNetwork<F>,
) -> Result<FeatureModel<F>> {
    net.forward(img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn toy_map(values: Array4<f64>) -> FeatureMap<f64> {
        FeatureMap::new(values, Scale::S4)
    }

    #[test]
    fn stats_match_direct_summation_oracle() {
        // Oracle: mu = 4.0, sigma = sqrt(5 + 1e-5) for [[1,3],[5,7]].
        let f = toy_map(array![[[[1.0, 3.0], [5.0, 7.0]]]]);
        let stats = channel_stats(&f);
        assert!((stats.mu[(0, 0)] - 4.0).abs() < 1e-12);
        assert!((stats.sigma[(0, 0)] - (5.0f64 + 1e-5).sqrt()).abs() < 1e-12);
        assert!((stats.sigma[(0, 0)] - 2.2360703).abs() < 1e-6);
    }

    #[test]
    fn constant_map_hits_the_epsilon_floor() {
        let f = toy_map(Array4::from_elem((1, 1, 4, 4), 3.25));
        let stats = channel_stats(&f);
        assert!((stats.mu[(0, 0)] - 3.25).abs() < 1e-12);
        assert!((stats.sigma[(0, 0)] - 1e-5f64.sqrt()).abs() < 1e-9);
        assert!((stats.sigma[(0, 0)] - 3.1623e-3).abs() < 1e-6);
    }

    #[test]
    fn normalize_matches_derived_values() {
        let f = toy_map(array![[[[1.0, 3.0], [5.0, 7.0]]]]);
        let n = normalize(&f);
        let want = [-1.3416, -0.4472, 0.4472, 1.3416];
        for (got, want) in n.data.iter().zip(want) {
            assert!((got - want).abs() < 1e-3, "{got} vs {want}");
        }
    }

    #[test]
    fn normalize_is_idempotent_and_zeroes_constants() {
        let f = toy_map(array![[[[1.0, 3.0], [5.0, 7.0]], [[0.5, 0.6], [0.9, -2.0]]]]);
        let once = normalize(&f);
        let twice = normalize(&once);
        for (a, b) in once.data.iter().zip(twice.data.iter()) {
            assert!((a - b).abs() < 1e-4);
        }
        let stats = channel_stats(&once);
        for bi in 0..1 {
            for ci in 0..2 {
                assert!(stats.mu[(bi, ci)].abs() < 1e-4);
                assert!((stats.sigma[(bi, ci)] - 1.0).abs() < 1e-4);
            }
        }

        let flat = toy_map(Array4::from_elem((1, 1, 3, 3), 7.0));
        assert!(normalize(&flat).data.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn stats_are_per_batch_item() {
        let mut data = Array4::zeros((2, 1, 2, 2));
        data.slice_mut(ndarray::s![0, 0, .., ..])
            .assign(&array![[1.0, 3.0], [5.0, 7.0]]);
        data.slice_mut(ndarray::s![1, 0, .., ..])
            .assign(&array![[10.0, 10.0], [10.0, 10.0]]);
        let (mu, sigma) = channel_stats_arr(&data);
        assert!((mu[(0, 0)] - 4.0).abs() < 1e-12);
        assert!((mu[(1, 0)] - 10.0).abs() < 1e-12);
        assert!(sigma[(1, 0)] < 1e-2); // epsilon floor, not pooled with item 0
    }

    #[test]
    fn encoder_shapes_follow_the_ladder() {
        let net = ModelingNetwork::<f32>::random(0);
        let img = ImageTensor::new(Array4::from_elem((1, 3, 64, 48), 0.1f32)).unwrap();
        let model = net.forward(&img).unwrap();
        let dims: Vec<_> = model.maps().iter().map(|m| m.data.dim()).collect();
        assert_eq!(dims[0], (1, 64, 64, 48));
        assert_eq!(dims[1], (1, 128, 32, 24));
        assert_eq!(dims[2], (1, 256, 16, 12));
        assert_eq!(dims[3], (1, 512, 8, 6));
    }

    #[test]
    fn encoder_rejects_non_mod8_dims() {
        let net = ModelingNetwork::<f32>::random(0);
        let img = ImageTensor::new(Array4::from_elem((1, 3, 60, 64), 0.0f32)).unwrap();
        let err = net.forward(&img).unwrap_err();
        assert!(err.to_string().contains("height = 60"));
    }

    #[test]
    fn encoder_is_deterministic() {
        let net = ModelingNetwork::<f32>::random(1);
        let img = ImageTensor::new(Array4::from_elem((1, 3, 16, 16), 0.3f32)).unwrap();
        let a = net.forward(&img).unwrap();
        let b = net.forward(&img).unwrap();
        for (ma, mb) in a.maps().iter().zip(b.maps().iter()) {
            assert_eq!(ma.data, mb.data);
        }
    }

    #[test]
    fn tap_ids_and_ladder_constants() {
        assert_eq!(
            SCALES.map(|s| s.tap_id()),
            [4, 11, 18, 31],
            "tap layer set"
        );
        assert_eq!(SCALES.map(|s| s.channels()), [64, 128, 256, 512]);
        assert_eq!(SCALES.map(|s| s.stride()), [1, 2, 4, 8]);
    }

    #[test]
    fn normalize_backward_matches_finite_differences() {
        use crate::nn::gradcheck::{check_grads, GradCheckTarget};
        use crate::nn::param_rng;
        use rand::Rng;

        #[derive(Clone)]
        struct NormTarget {
            x: Array4<f64>,
            target: Array4<f64>,
        }
        impl GradCheckTarget for NormTarget {
            fn loss(&self) -> f64 {
                let n = normalize_arr(&self.x);
                (&n - &self.target).mapv(|v| v * v).sum() * 0.5
            }
            fn analytic(&self) -> Vec<(String, Vec<f64>)> {
                let n = normalize_arr(&self.x);
                let gy = &n - &self.target;
                let gx = normalize_backward(&self.x, &gy);
                vec![("x".into(), gx.iter().cloned().collect())]
            }
            fn perturb(&mut self, slot: &str, idx: usize, delta: f64) {
                assert_eq!(slot, "x");
                *self.x.iter_mut().nth(idx).unwrap() += delta;
            }
        }

        let mut rng = param_rng(13, "norm_grad");
        let x = Array4::from_shape_simple_fn((2, 2, 3, 3), || rng.random::<f64>() * 2.0);
        let target = Array4::from_shape_simple_fn((2, 2, 3, 3), || rng.random::<f64>());
        check_grads(&NormTarget { x, target }, 1e-6, 1e-5);
    }

    #[test]
    fn stats_backward_matches_finite_differences() {
        use crate::nn::gradcheck::{check_grads, GradCheckTarget};
        use crate::nn::param_rng;
        use rand::Rng;

        #[derive(Clone)]
        struct StatsTarget {
            x: Array4<f64>,
        }
        impl GradCheckTarget for StatsTarget {
            fn loss(&self) -> f64 {
                // Arbitrary smooth functional of (mu, sigma).
                let (mu, sigma) = channel_stats_arr(&self.x);
                mu.mapv(|v| v * v).sum() + sigma.mapv(|v| (v + 1.0).ln()).sum()
            }
            fn analytic(&self) -> Vec<(String, Vec<f64>)> {
                let (mu, sigma) = channel_stats_arr(&self.x);
                let dmu = mu.mapv(|v| 2.0 * v);
                let dsigma = sigma.mapv(|v| 1.0 / (v + 1.0));
                let stats = ChannelStats { mu, sigma };
                let gx = stats_backward(&self.x, &stats, &dmu, &dsigma);
                vec![("x".into(), gx.iter().cloned().collect())]
            }
            fn perturb(&mut self, slot: &str, idx: usize, delta: f64) {
                assert_eq!(slot, "x");
                *self.x.iter_mut().nth(idx).unwrap() += delta;
            }
        }

        let mut rng = param_rng(17, "stats_grad");
        let x = Array4::from_shape_simple_fn((1, 3, 4, 4), || rng.random::<f64>() * 3.0 - 1.0);
        check_grads(&StatsTarget { x }, 1e-6, 1e-5);
    }
}
