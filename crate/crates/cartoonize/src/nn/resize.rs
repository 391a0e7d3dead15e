//! Nearest-neighbor 2x upsampling (decoder expansion path) and bilinear
//! resampling (reference-image normalization; forward only).

use ndarray::Array4;

use super::Float;

pub fn upsample_nearest2<F: Float>(x: &Array4<F>) -> Array4<F> {
    let (bs, c, h, w) = x.dim();
    let mut y = Array4::zeros((bs, c, 2 * h, 2 * w));
    for bi in 0..bs {
        for ci in 0..c {
            for iy in 0..h {
                for ix in 0..w {
                    let v = x[(bi, ci, iy, ix)];
                    y[(bi, ci, 2 * iy, 2 * ix)] = v;
                    y[(bi, ci, 2 * iy, 2 * ix + 1)] = v;
                    y[(bi, ci, 2 * iy + 1, 2 * ix)] = v;
                    y[(bi, ci, 2 * iy + 1, 2 * ix + 1)] = v;
                }
            }
        }
    }
    y
}

/// Each source pixel collects the gradient of its four copies.
pub fn upsample_nearest2_backward<F: Float>(gy: &Array4<F>) -> Array4<F> {
    let (bs, c, h2, w2) = gy.dim();
    let (h, w) = (h2 / 2, w2 / 2);
    let mut gx = Array4::zeros((bs, c, h, w));
    for bi in 0..bs {
        for ci in 0..c {
            for iy in 0..h {
                for ix in 0..w {
                    gx[(bi, ci, iy, ix)] = gy[(bi, ci, 2 * iy, 2 * ix)]
                        + gy[(bi, ci, 2 * iy, 2 * ix + 1)]
                        + gy[(bi, ci, 2 * iy + 1, 2 * ix)]
                        + gy[(bi, ci, 2 * iy + 1, 2 * ix + 1)];
                }
            }
        }
    }
    gx
}

/// Bilinear resize with half-pixel centers. Inference-only utility.
pub fn resize_bilinear<F: Float>(x: &Array4<F>, oh: usize, ow: usize) -> Array4<F> {
    let (bs, c, h, w) = x.dim();
    if (oh, ow) == (h, w) {
        return x.clone();
    }
    let sy = h as f64 / oh as f64;
    let sx = w as f64 / ow as f64;
    let mut y = Array4::zeros((bs, c, oh, ow));
    for bi in 0..bs {
        for ci in 0..c {
            for oy in 0..oh {
                let fy = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
                let y0 = fy.floor() as usize;
                let y1 = (y0 + 1).min(h - 1);
                let wy = fy - y0 as f64;
                for ox in 0..ow {
                    let fx = ((ox as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
                    let x0 = fx.floor() as usize;
                    let x1 = (x0 + 1).min(w - 1);
                    let wx = fx - x0 as f64;
                    let v00 = x[(bi, ci, y0, x0)].to_f64();
                    let v01 = x[(bi, ci, y0, x1)].to_f64();
                    let v10 = x[(bi, ci, y1, x0)].to_f64();
                    let v11 = x[(bi, ci, y1, x1)].to_f64();
                    let top = v00 * (1.0 - wx) + v01 * wx;
                    let bot = v10 * (1.0 - wx) + v11 * wx;
                    y[(bi, ci, oy, ox)] = F::from_f64(top * (1.0 - wy) + bot * wy);
                }
            }
        }
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn upsample_round_trip_adjoint() {
        let x = array![[[[1.0f64, 2.0], [3.0, 4.0]]]];
        let y = upsample_nearest2(&x);
        assert_eq!(y[(0, 0, 0, 1)], 1.0);
        assert_eq!(y[(0, 0, 3, 3)], 4.0);
        let gx = upsample_nearest2_backward(&y);
        assert_eq!(gx, array![[[[4.0, 8.0], [12.0, 16.0]]]]);
    }

    #[test]
    fn bilinear_preserves_constants() {
        let x = Array4::<f64>::from_elem((1, 3, 5, 7), 0.75);
        let y = resize_bilinear(&x, 11, 4);
        assert!(y.iter().all(|&v| (v - 0.75).abs() < 1e-12));
    }
}
