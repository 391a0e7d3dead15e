//! Minimal neural-network building blocks: tensors are plain `ndarray`
//! arrays in NCHW layout, every layer implements an explicit forward pass
//! that returns a call-local context plus a backward pass that consumes it.
//!
//! Keeping forward state out of the layer structs lets one set of weights
//! run several forward passes per step (the renderer is invoked three
//! times) and accumulate gradients across all of them.

pub mod act;
pub mod adam;
pub mod conv;
pub mod gradcheck;
pub mod linear;
pub mod pad;
pub mod pool;
pub mod resize;

use ndarray::{Array, Array1, Array2, Array4, Dimension};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Element type for all tensor math. Training runs in `f32`; the gradient
/// checks instantiate the same code at `f64`.
pub trait Float: ndarray::NdFloat + std::iter::Sum + 'static {
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Float for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Float for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
}

/// Additive floor inside every standard-deviation computation. Flat color
/// regions produce zero-variance channels; this keeps the division defined.
pub const STAT_EPSILON: f64 = 1e-5;

/// A learnable tensor together with its gradient accumulator.
#[derive(Debug, Clone)]
pub struct Param<F: Float, D: Dimension> {
    pub value: Array<F, D>,
    pub grad: Array<F, D>,
}

impl<F: Float, D: Dimension> Param<F, D> {
    pub fn new(value: Array<F, D>) -> Self {
        let grad = Array::zeros(value.raw_dim());
        Self { value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(F::zero());
    }
}

/// Read-only view of a named parameter, for serialization and hashing.
pub enum ParamView<'a, F: Float> {
    Vec1(&'a Array1<F>),
    Mat2(&'a Array2<F>),
    Ten4(&'a Array4<F>),
}

impl<F: Float> ParamView<'_, F> {
    pub fn shape(&self) -> Vec<usize> {
        match self {
            ParamView::Vec1(a) => a.shape().to_vec(),
            ParamView::Mat2(a) => a.shape().to_vec(),
            ParamView::Ten4(a) => a.shape().to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.shape().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Elements in logical (row-major) order.
    pub fn iter_values(&self) -> Box<dyn Iterator<Item = F> + '_> {
        match self {
            ParamView::Vec1(a) => Box::new(a.iter().copied()),
            ParamView::Mat2(a) => Box::new(a.iter().copied()),
            ParamView::Ten4(a) => Box::new(a.iter().copied()),
        }
    }
}

/// Mutable view of a named parameter value and its gradient.
pub enum ParamViewMut<'a, F: Float> {
    Vec1(&'a mut Array1<F>, &'a mut Array1<F>),
    Mat2(&'a mut Array2<F>, &'a mut Array2<F>),
    Ten4(&'a mut Array4<F>, &'a mut Array4<F>),
}

/// Anything holding named parameters: networks implement these two
/// visitors and get serialization, optimization and hashing for free.
pub trait ParamSet<F: Float> {
    fn visit(&self, f: &mut dyn FnMut(&str, ParamView<'_, F>));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, ParamViewMut<'_, F>));

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, p| n += p.len());
        n
    }

    fn zero_grads(&mut self) {
        self.visit_mut(&mut |_, p| match p {
            ParamViewMut::Vec1(_, g) => g.fill(F::zero()),
            ParamViewMut::Mat2(_, g) => g.fill(F::zero()),
            ParamViewMut::Ten4(_, g) => g.fill(F::zero()),
        });
    }

    /// Order-independent FNV-1a digest over names, shapes and value bits.
    /// Used to verify that frozen weights never move.
    fn content_hash(&self) -> u64 {
        let mut entries: Vec<(String, u64)> = Vec::new();
        self.visit(&mut |name, p| {
            let mut h = fnv1a(name.as_bytes());
            for d in p.shape() {
                h = fnv1a_u64(h, d as u64);
            }
            for v in p.iter_values() {
                h = fnv1a_u64(h, v.to_f64().to_bits());
            }
            entries.push((name.to_string(), h));
        });
        entries.sort();
        let mut acc = 0xcbf2_9ce4_8422_2325u64;
        for (_, h) in entries {
            acc = fnv1a_u64(acc, h);
        }
        acc
    }
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn fnv1a_u64(mut h: u64, v: u64) -> u64 {
    for b in v.to_le_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Deterministic per-parameter RNG: the stream depends only on the master
/// seed and the parameter name, never on construction order.
pub fn param_rng(master_seed: u64, name: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(master_seed ^ fnv1a(name.as_bytes()))
}

/// He-normal initialization, std = sqrt(2 / fan_in).
pub fn he_normal<F: Float>(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> Vec<F> {
    let std = (2.0 / fan_in as f64).sqrt();
    let dist = Normal::new(0.0, std).expect("valid normal");
    let n: usize = shape.iter().product();
    (0..n).map(|_| F::from_f64(dist.sample(rng))).collect()
}

/// Plain normal initialization with the given std.
pub fn scaled_normal<F: Float>(rng: &mut ChaCha8Rng, n: usize, std: f64) -> Vec<F> {
    let dist = Normal::new(0.0, std).expect("valid normal");
    (0..n).map(|_| F::from_f64(dist.sample(rng))).collect()
}
