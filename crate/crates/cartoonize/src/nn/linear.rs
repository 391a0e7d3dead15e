//! Fully-connected layer on (batch, features) matrices.

use ndarray::{Array1, Array2};
use rand_chacha::ChaCha8Rng;

use super::{he_normal, scaled_normal, Float, Param};

#[derive(Debug, Clone)]
pub struct Linear<F: Float> {
    pub w: Param<F, ndarray::Ix2>, // (out, in)
    pub b: Param<F, ndarray::Ix1>,
}

pub struct LinearCtx<F: Float> {
    pub x: Array2<F>,
}

impl<F: Float> Linear<F> {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let data = he_normal::<F>(rng, &[out_dim, in_dim], in_dim);
        let w = Array2::from_shape_vec((out_dim, in_dim), data).expect("linear weight shape");
        Self {
            w: Param::new(w),
            b: Param::new(Array1::zeros(out_dim)),
        }
    }

    /// Near-zero weights so downstream sigmoids start at ~0.5 while still
    /// letting gradient flow through from the first step.
    pub fn new_near_zero(in_dim: usize, out_dim: usize, std: f64, rng: &mut ChaCha8Rng) -> Self {
        let data = scaled_normal::<F>(rng, out_dim * in_dim, std);
        let w = Array2::from_shape_vec((out_dim, in_dim), data).expect("linear weight shape");
        Self {
            w: Param::new(w),
            b: Param::new(Array1::zeros(out_dim)),
        }
    }

    pub fn forward(&self, x: &Array2<F>) -> Array2<F> {
        let mut y = x.dot(&self.w.value.t());
        for mut row in y.outer_iter_mut() {
            row += &self.b.value;
        }
        y
    }

    pub fn forward_t(&self, x: &Array2<F>) -> (Array2<F>, LinearCtx<F>) {
        (self.forward(x), LinearCtx { x: x.clone() })
    }

    pub fn backward(&mut self, ctx: &LinearCtx<F>, gy: &Array2<F>) -> Array2<F> {
        self.w.grad = &self.w.grad + &gy.t().dot(&ctx.x);
        for row in gy.outer_iter() {
            self.b.grad += &row;
        }
        gy.dot(&self.w.value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{check_grads, GradCheckTarget};
    use crate::nn::param_rng;
    use rand::Rng;

    #[derive(Clone)]
    struct LinTarget {
        lin: Linear<f64>,
        x: Array2<f64>,
    }

    impl GradCheckTarget for LinTarget {
        fn loss(&self) -> f64 {
            self.lin.forward(&self.x).mapv(|v| v * v).sum() * 0.5
        }
        fn analytic(&self) -> Vec<(String, Vec<f64>)> {
            let mut lin = self.lin.clone();
            let (y, ctx) = lin.forward_t(&self.x);
            let gx = lin.backward(&ctx, &y);
            vec![
                ("w".into(), lin.w.grad.iter().cloned().collect()),
                ("b".into(), lin.b.grad.iter().cloned().collect()),
                ("x".into(), gx.iter().cloned().collect()),
            ]
        }
        fn perturb(&mut self, slot: &str, idx: usize, delta: f64) {
            match slot {
                "w" => *self.lin.w.value.iter_mut().nth(idx).unwrap() += delta,
                "b" => *self.lin.b.value.iter_mut().nth(idx).unwrap() += delta,
                "x" => *self.x.iter_mut().nth(idx).unwrap() += delta,
                _ => unreachable!(),
            }
        }
    }

    #[test]
    fn linear_gradients_match_finite_differences() {
        let mut rng = param_rng(5, "linear_grad");
        let lin = Linear::<f64>::new(4, 3, &mut rng);
        let x = Array2::from_shape_simple_fn((2, 4), || rng.random::<f64>() - 0.5);
        check_grads(&LinTarget { lin, x }, 1e-5, 1e-6);
    }
}
