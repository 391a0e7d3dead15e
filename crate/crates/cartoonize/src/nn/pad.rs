//! Reflection padding. Mirrors interior pixels across each border (the
//! border pixel itself is not repeated), so outputs never depend on
//! opposite-edge content the way circular padding would.

use ndarray::Array4;

use super::Float;

/// Map a (possibly out-of-range) coordinate into [0, n) by reflection.
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    debug_assert!(n > 1);
    let mut i = i;
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * (n - 1) - i;
        } else {
            return i as usize;
        }
    }
}

pub fn reflect_pad<F: Float>(x: &Array4<F>, p: usize) -> Array4<F> {
    if p == 0 {
        return x.clone();
    }
    let (bs, c, h, w) = x.dim();
    assert!(h > p && w > p, "input too small for reflection pad {p}");
    let mut y = Array4::zeros((bs, c, h + 2 * p, w + 2 * p));
    for bi in 0..bs {
        for ci in 0..c {
            for oy in 0..h + 2 * p {
                let iy = reflect(oy as isize - p as isize, h);
                for ox in 0..w + 2 * p {
                    let ix = reflect(ox as isize - p as isize, w);
                    y[(bi, ci, oy, ox)] = x[(bi, ci, iy, ix)];
                }
            }
        }
    }
    y
}

/// Scatter the padded gradient back; mirrored positions accumulate into
/// their source pixel.
pub fn reflect_pad_backward<F: Float>(
    gy: &Array4<F>,
    p: usize,
    in_hw: (usize, usize),
) -> Array4<F> {
    let (bs, c, ph, pw) = gy.dim();
    let (h, w) = in_hw;
    assert_eq!((ph, pw), (h + 2 * p, w + 2 * p));
    if p == 0 {
        return gy.clone();
    }
    let mut gx = Array4::zeros((bs, c, h, w));
    for bi in 0..bs {
        for ci in 0..c {
            for oy in 0..ph {
                let iy = reflect(oy as isize - p as isize, h);
                for ox in 0..pw {
                    let ix = reflect(ox as isize - p as isize, w);
                    gx[(bi, ci, iy, ix)] = gx[(bi, ci, iy, ix)] + gy[(bi, ci, oy, ox)];
                }
            }
        }
    }
    gx
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn reflects_without_repeating_border() {
        let x = array![[[[1.0f64, 2.0, 3.0], [4.0, 5.0, 6.0], [7.0, 8.0, 9.0]]]];
        let y = reflect_pad(&x, 1);
        // row -1 mirrors row 1, column -1 mirrors column 1
        assert_eq!(y[(0, 0, 0, 0)], 5.0);
        assert_eq!(y[(0, 0, 0, 1)], 4.0);
        assert_eq!(y[(0, 0, 1, 0)], 2.0);
        assert_eq!(y[(0, 0, 4, 4)], 5.0);
        assert_eq!(y.dim(), (1, 1, 5, 5));
    }

    #[test]
    fn backward_is_adjoint_of_forward() {
        // <pad(x), g> == <x, pad_backward(g)> for random x, g.
        use crate::nn::param_rng;
        use rand::Rng;
        let mut rng = param_rng(3, "pad_adjoint");
        let x = Array4::from_shape_simple_fn((1, 2, 4, 5), || rng.random::<f64>());
        let g = Array4::from_shape_simple_fn((1, 2, 8, 9), || rng.random::<f64>());
        let lhs = (&reflect_pad(&x, 2) * &g).sum();
        let rhs = (&x * &reflect_pad_backward(&g, 2, (4, 5))).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
