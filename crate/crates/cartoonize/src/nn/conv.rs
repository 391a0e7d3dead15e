//! 2-D convolution via im2col + GEMM, with explicit backward passes for
//! data and weights. Zero padding is built in; reflection padding is a
//! separate op (`nn::pad`) composed in front where a network calls for it.

use ndarray::{s, Array1, Array2, Array4, ArrayView2, ArrayView3};
use rand_chacha::ChaCha8Rng;

use super::{he_normal, Float, Param};

#[derive(Debug, Clone)]
pub struct Conv2d<F: Float> {
    pub w: Param<F, ndarray::Ix4>, // (out, in, k, k)
    pub b: Param<F, ndarray::Ix1>,
    pub stride: usize,
    pub zero_pad: usize,
}

/// Per-call forward state: the input is kept so the backward pass can
/// rebuild the im2col matrix instead of caching it (it is large).
#[derive(Debug)]
pub struct ConvCtx<F: Float> {
    pub x: Array4<F>,
    pub out_hw: (usize, usize),
}

impl<F: Float> Conv2d<F> {
    pub fn new(
        in_ch: usize,
        out_ch: usize,
        k: usize,
        stride: usize,
        zero_pad: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let fan_in = in_ch * k * k;
        let data = he_normal::<F>(rng, &[out_ch, in_ch, k, k], fan_in);
        let w = Array4::from_shape_vec((out_ch, in_ch, k, k), data).expect("conv weight shape");
        Self {
            w: Param::new(w),
            b: Param::new(Array1::zeros(out_ch)),
            stride,
            zero_pad,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.w.value.dim().1
    }

    pub fn out_channels(&self) -> usize {
        self.w.value.dim().0
    }

    pub fn kernel(&self) -> usize {
        self.w.value.dim().2
    }

    pub fn out_size(&self, h: usize, w: usize) -> (usize, usize) {
        let k = self.kernel();
        let p = self.zero_pad;
        let s = self.stride;
        ((h + 2 * p - k) / s + 1, (w + 2 * p - k) / s + 1)
    }

    pub fn forward(&self, x: &Array4<F>) -> Array4<F> {
        let (bs, ic, h, w) = x.dim();
        assert_eq!(ic, self.in_channels(), "conv input channels");
        let (oh, ow) = self.out_size(h, w);
        let oc = self.out_channels();
        let k = self.kernel();
        let w_mat = self
            .w
            .value
            .view()
            .into_shape_with_order((oc, ic * k * k))
            .expect("weight is contiguous");

        let mut y = Array4::zeros((bs, oc, oh, ow));
        let mut cols = Array2::zeros((ic * k * k, oh * ow));
        for bi in 0..bs {
            im2col(
                &x.slice(s![bi, .., .., ..]),
                k,
                self.stride,
                self.zero_pad,
                (oh, ow),
                &mut cols,
            );
            let mut out = w_mat.dot(&cols); // (oc, oh*ow)
            for (mut row, &bias) in out.outer_iter_mut().zip(self.b.value.iter()) {
                row.mapv_inplace(|v| v + bias);
            }
            y.slice_mut(s![bi, .., .., ..]).assign(
                &out.into_shape_with_order((oc, oh, ow))
                    .expect("conv output shape"),
            );
        }
        y
    }

    pub fn forward_t(&self, x: &Array4<F>) -> (Array4<F>, ConvCtx<F>) {
        let y = self.forward(x);
        let (_, _, oh, ow) = y.dim();
        (
            y,
            ConvCtx {
                x: x.clone(),
                out_hw: (oh, ow),
            },
        )
    }

    /// Accumulates weight/bias gradients; returns the input gradient when
    /// requested (skip it for leaf inputs, e.g. frozen encoder features).
    pub fn backward(&mut self, ctx: &ConvCtx<F>, gy: &Array4<F>, need_gx: bool) -> Option<Array4<F>> {
        let (bs, ic, h, w) = ctx.x.dim();
        let (oh, ow) = ctx.out_hw;
        let oc = self.out_channels();
        let k = self.kernel();
        let w_mat = self
            .w
            .value
            .view()
            .into_shape_with_order((oc, ic * k * k))
            .expect("weight is contiguous");

        let mut gx = need_gx.then(|| Array4::zeros((bs, ic, h, w)));
        let mut cols = Array2::zeros((ic * k * k, oh * ow));
        let mut gw_acc = Array2::<F>::zeros((oc, ic * k * k));
        for bi in 0..bs {
            let gy_mat = gy
                .slice(s![bi, .., .., ..])
                .into_shape_with_order((oc, oh * ow))
                .expect("grad is contiguous");
            im2col(
                &ctx.x.slice(s![bi, .., .., ..]),
                k,
                self.stride,
                self.zero_pad,
                (oh, ow),
                &mut cols,
            );
            gw_acc = gw_acc + gy_mat.dot(&cols.t());
            for (gb, row) in self.b.grad.iter_mut().zip(gy_mat.outer_iter()) {
                *gb = *gb + row.sum();
            }
            if let Some(gx) = gx.as_mut() {
                let gcols = w_mat.t().dot(&gy_mat); // (ic*k*k, oh*ow)
                col2im_add(
                    &gcols.view(),
                    k,
                    self.stride,
                    self.zero_pad,
                    (oh, ow),
                    &mut gx.slice_mut(s![bi, .., .., ..]),
                );
            }
        }
        let gw4 = gw_acc
            .into_shape_with_order((oc, ic, k, k))
            .expect("weight grad shape");
        self.w.grad = &self.w.grad + &gw4;
        gx
    }

    /// Input gradient only; weights are left untouched. Used where the
    /// parameters are frozen or belong to a different update phase.
    pub fn backward_data(&self, ctx: &ConvCtx<F>, gy: &Array4<F>) -> Array4<F> {
        let (bs, ic, h, w) = ctx.x.dim();
        let (oh, ow) = ctx.out_hw;
        let oc = self.out_channels();
        let k = self.kernel();
        let w_mat = self
            .w
            .value
            .view()
            .into_shape_with_order((oc, ic * k * k))
            .expect("weight is contiguous");
        let mut gx = Array4::zeros((bs, ic, h, w));
        for bi in 0..bs {
            let gy_mat = gy
                .slice(s![bi, .., .., ..])
                .into_shape_with_order((oc, oh * ow))
                .expect("grad is contiguous");
            let gcols = w_mat.t().dot(&gy_mat);
            col2im_add(
                &gcols.view(),
                k,
                self.stride,
                self.zero_pad,
                (oh, ow),
                &mut gx.slice_mut(s![bi, .., .., ..]),
            );
        }
        gx
    }
}

/// Unfold one item's patches into a (ic*k*k, oh*ow) matrix.
fn im2col<F: Float>(
    x: &ArrayView3<F>,
    k: usize,
    stride: usize,
    pad: usize,
    (oh, ow): (usize, usize),
    cols: &mut Array2<F>,
) {
    let (ic, h, w) = x.dim();
    cols.fill(F::zero());
    for c in 0..ic {
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let mut dst = cols.slice_mut(s![row, ..]);
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for ox in 0..ow {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        dst[oy * ow + ox] = x[(c, iy as usize, ix as usize)];
                    }
                }
            }
        }
    }
}

/// Fold a (ic*k*k, oh*ow) gradient matrix back onto the input, adding
/// overlapping contributions.
fn col2im_add<F: Float>(
    gcols: &ArrayView2<F>,
    k: usize,
    stride: usize,
    pad: usize,
    (oh, ow): (usize, usize),
    gx: &mut ndarray::ArrayViewMut3<F>,
) {
    let (ic, h, w) = gx.dim();
    for c in 0..ic {
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = gcols.slice(s![row, ..]);
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for ox in 0..ow {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        gx[(c, iy as usize, ix as usize)] =
                            gx[(c, iy as usize, ix as usize)] + src[oy * ow + ox];
                    }
                }
            }
        }
    }
}

/// Reference convolution by direct summation; used only to cross-check the
/// GEMM path in tests.
#[cfg(test)]
pub fn conv2d_naive<F: Float>(
    x: &Array4<F>,
    w: &Array4<F>,
    b: &Array1<F>,
    stride: usize,
    pad: usize,
) -> Array4<F> {
    let (bs, ic, h, wd) = x.dim();
    let (oc, _, k, _) = w.dim();
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (wd + 2 * pad - k) / stride + 1;
    let mut y = Array4::zeros((bs, oc, oh, ow));
    for bi in 0..bs {
        for o in 0..oc {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b[o];
                    for c in 0..ic {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                acc = acc
                                    + x[(bi, c, iy as usize, ix as usize)] * w[(o, c, ky, kx)];
                            }
                        }
                    }
                    y[(bi, o, oy, ox)] = acc;
                }
            }
        }
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{check_grads, GradCheckTarget};
    use crate::nn::param_rng;
    use ndarray::Array;
    use rand::Rng;

    fn rand4(rng: &mut ChaCha8Rng, dims: (usize, usize, usize, usize)) -> Array4<f64> {
        Array::from_shape_simple_fn(dims, || rng.random::<f64>() * 2.0 - 1.0)
    }

    #[test]
    fn gemm_path_matches_naive_convolution() {
        for &(stride, pad, k) in &[(1usize, 0usize, 3usize), (1, 1, 3), (2, 1, 4), (1, 0, 1)] {
            let mut rng = param_rng(7, "conv_test");
            let conv = Conv2d::<f64>::new(3, 5, k, stride, pad, &mut rng);
            let x = rand4(&mut rng, (2, 3, 9, 10));
            let got = conv.forward(&x);
            let want = conv2d_naive(&x, &conv.w.value, &conv.b.value, stride, pad);
            let diff = (&got - &want).mapv(f64::abs);
            assert!(
                diff.iter().cloned().fold(0.0, f64::max) < 1e-10,
                "stride={stride} pad={pad} k={k}"
            );
        }
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        for &(stride, pad, k) in &[(1usize, 1usize, 3usize), (2, 1, 4)] {
            let mut rng = param_rng(11, "conv_grad");
            let conv = Conv2d::<f64>::new(2, 3, k, stride, pad, &mut rng);
            let x = rand4(&mut rng, (1, 2, 6, 6));
            let target = ConvTarget { conv, x };
            check_grads(&target, 1e-5, 1e-6);
        }
    }

    #[derive(Clone)]
    struct ConvTarget {
        conv: Conv2d<f64>,
        x: Array4<f64>,
    }

    impl GradCheckTarget for ConvTarget {
        fn loss(&self) -> f64 {
            // Quadratic head so the input gradient is nontrivial.
            self.conv.forward(&self.x).mapv(|v| v * v).sum() * 0.5
        }

        fn analytic(&self) -> Vec<(String, Vec<f64>)> {
            let mut conv = self.conv.clone();
            let (y, ctx) = conv.forward_t(&self.x);
            let gx = conv.backward(&ctx, &y, true).unwrap();
            vec![
                ("w".into(), conv.w.grad.iter().cloned().collect()),
                ("b".into(), conv.b.grad.iter().cloned().collect()),
                ("x".into(), gx.iter().cloned().collect()),
            ]
        }

        fn perturb(&mut self, slot: &str, idx: usize, delta: f64) {
            match slot {
                "w" => *self.conv.w.value.iter_mut().nth(idx).unwrap() += delta,
                "b" => *self.conv.b.value.iter_mut().nth(idx).unwrap() += delta,
                "x" => *self.x.iter_mut().nth(idx).unwrap() += delta,
                _ => unreachable!(),
            }
        }
    }
}
