//! Elementwise activations with their backward passes.

use ndarray::{Array2, Array4};

use super::Float;

pub fn relu<F: Float>(x: &Array4<F>) -> Array4<F> {
    x.mapv(|v| if v > F::zero() { v } else { F::zero() })
}

/// Backward through ReLU given the forward *input*.
pub fn relu_backward<F: Float>(x: &Array4<F>, gy: &Array4<F>) -> Array4<F> {
    let mut gx = gy.clone();
    ndarray::Zip::from(&mut gx).and(x).for_each(|g, &v| {
        if v <= F::zero() {
            *g = F::zero();
        }
    });
    gx
}

pub fn relu2<F: Float>(x: &Array2<F>) -> Array2<F> {
    x.mapv(|v| if v > F::zero() { v } else { F::zero() })
}

pub fn relu2_backward<F: Float>(x: &Array2<F>, gy: &Array2<F>) -> Array2<F> {
    let mut gx = gy.clone();
    ndarray::Zip::from(&mut gx).and(x).for_each(|g, &v| {
        if v <= F::zero() {
            *g = F::zero();
        }
    });
    gx
}

pub fn leaky_relu<F: Float>(x: &Array4<F>, slope: f64) -> Array4<F> {
    let a = F::from_f64(slope);
    x.mapv(|v| if v > F::zero() { v } else { v * a })
}

pub fn leaky_relu_backward<F: Float>(x: &Array4<F>, gy: &Array4<F>, slope: f64) -> Array4<F> {
    let a = F::from_f64(slope);
    let mut gx = gy.clone();
    ndarray::Zip::from(&mut gx).and(x).for_each(|g, &v| {
        if v <= F::zero() {
            *g = *g * a;
        }
    });
    gx
}

pub fn tanh<F: Float>(x: &Array4<F>) -> Array4<F> {
    x.mapv(|v| v.tanh())
}

/// Backward through tanh given the forward *output*.
pub fn tanh_backward<F: Float>(y: &Array4<F>, gy: &Array4<F>) -> Array4<F> {
    let mut gx = gy.clone();
    ndarray::Zip::from(&mut gx).and(y).for_each(|g, &v| {
        *g = *g * (F::one() - v * v);
    });
    gx
}

pub fn sigmoid2<F: Float>(x: &Array2<F>) -> Array2<F> {
    x.mapv(|v| F::one() / (F::one() + (-v).exp()))
}

/// Backward through sigmoid given the forward *output*.
pub fn sigmoid2_backward<F: Float>(y: &Array2<F>, gy: &Array2<F>) -> Array2<F> {
    let mut gx = gy.clone();
    ndarray::Zip::from(&mut gx).and(y).for_each(|g, &v| {
        *g = *g * v * (F::one() - v);
    });
    gx
}

/// log(1 + e^x) computed without overflow for large |x|.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// d/dx softplus(x) = sigmoid(x), stable at extreme logits.
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_is_finite_and_accurate_at_extremes() {
        assert!(softplus(50.0).is_finite());
        assert!((softplus(50.0) - 50.0).abs() < 1e-12);
        assert!(softplus(-50.0) > 0.0);
        assert!(softplus(-50.0) < 1e-20);
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn sigmoid_matches_both_branches() {
        for &x in &[-30.0, -1.0, 0.0, 1.0, 30.0] {
            let direct = 1.0 / (1.0 + (-x as f64).exp());
            assert!((sigmoid_scalar(x) - direct).abs() < 1e-15);
        }
    }
}
