//! Pooling: 2x2 max (encoder), 2x2 average (discriminator pyramid) and
//! global average (gate pooling).

use ndarray::{Array2, Array4};

use super::Float;

pub struct MaxPoolCtx {
    pub argmax: Array4<u8>, // 0..3, index into the 2x2 window
    pub in_hw: (usize, usize),
}

/// 2x2 max pooling, stride 2. Requires even spatial dims.
pub fn max_pool2<F: Float>(x: &Array4<F>) -> (Array4<F>, MaxPoolCtx) {
    let (bs, c, h, w) = x.dim();
    assert!(h % 2 == 0 && w % 2 == 0, "max_pool2 needs even dims, got {h}x{w}");
    let (oh, ow) = (h / 2, w / 2);
    let mut y = Array4::zeros((bs, c, oh, ow));
    let mut argmax = Array4::zeros((bs, c, oh, ow));
    for bi in 0..bs {
        for ci in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = x[(bi, ci, 2 * oy, 2 * ox)];
                    let mut arg = 0u8;
                    for (k, (dy, dx)) in [(0, 0), (0, 1), (1, 0), (1, 1)].iter().enumerate() {
                        let v = x[(bi, ci, 2 * oy + dy, 2 * ox + dx)];
                        if v > best {
                            best = v;
                            arg = k as u8;
                        }
                    }
                    y[(bi, ci, oy, ox)] = best;
                    argmax[(bi, ci, oy, ox)] = arg;
                }
            }
        }
    }
    (
        y,
        MaxPoolCtx {
            argmax,
            in_hw: (h, w),
        },
    )
}

pub fn max_pool2_backward<F: Float>(ctx: &MaxPoolCtx, gy: &Array4<F>) -> Array4<F> {
    let (bs, c, oh, ow) = gy.dim();
    let mut gx = Array4::zeros((bs, c, ctx.in_hw.0, ctx.in_hw.1));
    for bi in 0..bs {
        for ci in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let arg = ctx.argmax[(bi, ci, oy, ox)] as usize;
                    let (dy, dx) = (arg / 2, arg % 2);
                    gx[(bi, ci, 2 * oy + dy, 2 * ox + dx)] = gy[(bi, ci, oy, ox)];
                }
            }
        }
    }
    gx
}

/// 2x2 average pooling, stride 2 (requires even dims).
pub fn avg_pool2<F: Float>(x: &Array4<F>) -> Array4<F> {
    let (bs, c, h, w) = x.dim();
    assert!(h % 2 == 0 && w % 2 == 0, "avg_pool2 needs even dims, got {h}x{w}");
    let quarter = F::from_f64(0.25);
    let mut y = Array4::zeros((bs, c, h / 2, w / 2));
    for bi in 0..bs {
        for ci in 0..c {
            for oy in 0..h / 2 {
                for ox in 0..w / 2 {
                    let s = x[(bi, ci, 2 * oy, 2 * ox)]
                        + x[(bi, ci, 2 * oy, 2 * ox + 1)]
                        + x[(bi, ci, 2 * oy + 1, 2 * ox)]
                        + x[(bi, ci, 2 * oy + 1, 2 * ox + 1)];
                    y[(bi, ci, oy, ox)] = s * quarter;
                }
            }
        }
    }
    y
}

pub fn avg_pool2_backward<F: Float>(gy: &Array4<F>, in_hw: (usize, usize)) -> Array4<F> {
    let (bs, c, oh, ow) = gy.dim();
    let quarter = F::from_f64(0.25);
    let mut gx = Array4::zeros((bs, c, in_hw.0, in_hw.1));
    for bi in 0..bs {
        for ci in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let g = gy[(bi, ci, oy, ox)] * quarter;
                    gx[(bi, ci, 2 * oy, 2 * ox)] = g;
                    gx[(bi, ci, 2 * oy, 2 * ox + 1)] = g;
                    gx[(bi, ci, 2 * oy + 1, 2 * ox)] = g;
                    gx[(bi, ci, 2 * oy + 1, 2 * ox + 1)] = g;
                }
            }
        }
    }
    gx
}

/// Global average pool over spatial dims: (b, c, h, w) -> (b, c).
pub fn global_avg_pool<F: Float>(x: &Array4<F>) -> Array2<F> {
    let (bs, c, h, w) = x.dim();
    let inv = F::from_f64(1.0 / (h * w) as f64);
    let mut y = Array2::zeros((bs, c));
    for bi in 0..bs {
        for ci in 0..c {
            let mut acc = 0.0f64;
            for v in x.slice(ndarray::s![bi, ci, .., ..]).iter() {
                acc += v.to_f64();
            }
            y[(bi, ci)] = F::from_f64(acc) * inv;
        }
    }
    y
}

pub fn global_avg_pool_backward<F: Float>(gy: &Array2<F>, in_hw: (usize, usize)) -> Array4<F> {
    let (bs, c) = gy.dim();
    let inv = F::from_f64(1.0 / (in_hw.0 * in_hw.1) as f64);
    let mut gx = Array4::zeros((bs, c, in_hw.0, in_hw.1));
    for bi in 0..bs {
        for ci in 0..c {
            gx.slice_mut(ndarray::s![bi, ci, .., ..])
                .fill(gy[(bi, ci)] * inv);
        }
    }
    gx
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn max_pool_selects_and_routes_gradient() {
        let x = array![[[[1.0f64, 5.0, 2.0, 2.0], [3.0, 4.0, 2.0, 8.0], [0.0, 0.0, 1.0, 1.0], [9.0, 0.0, 1.0, 1.0]]]];
        let (y, ctx) = max_pool2(&x);
        assert_eq!(y, array![[[[5.0, 8.0], [9.0, 1.0]]]]);
        let gy = array![[[[1.0f64, 2.0], [3.0, 4.0]]]];
        let gx = max_pool2_backward(&ctx, &gy);
        assert_eq!(gx[(0, 0, 0, 1)], 1.0); // the 5.0
        assert_eq!(gx[(0, 0, 1, 3)], 2.0); // the 8.0
        assert_eq!(gx[(0, 0, 3, 0)], 3.0); // the 9.0
        assert_eq!(gx.sum(), 10.0);
    }

    #[test]
    fn global_pool_means_and_spreads() {
        let x = array![[[[1.0f64, 3.0], [5.0, 7.0]]]];
        let y = global_avg_pool(&x);
        assert_eq!(y[(0, 0)], 4.0);
        let gx = global_avg_pool_backward(&y, (2, 2));
        assert_eq!(gx[(0, 0, 1, 1)], 1.0);
    }
}
