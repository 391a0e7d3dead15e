//! Adam with bias correction. Moment buffers are keyed by parameter name
//! so they survive checkpointing and are independent of visit order.

use std::collections::BTreeMap;

use ndarray::{Array, Dimension};

use super::{Float, ParamSet, ParamViewMut};

#[derive(Debug, Clone)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MomentPair {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub cfg: AdamConfig,
    pub t: u64,
    pub moments: BTreeMap<String, MomentPair>,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Self {
        Self {
            cfg,
            t: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn step<F: Float, P: ParamSet<F>>(&mut self, params: &mut P) {
        self.t += 1;
        let t = self.t;
        let cfg = self.cfg.clone();
        let moments = &mut self.moments;
        params.visit_mut(&mut |name, p| match p {
            ParamViewMut::Vec1(v, g) => update(&cfg, t, moments, name, v, g),
            ParamViewMut::Mat2(v, g) => update(&cfg, t, moments, name, v, g),
            ParamViewMut::Ten4(v, g) => update(&cfg, t, moments, name, v, g),
        });
    }
}

fn update<F: Float, D: Dimension>(
    cfg: &AdamConfig,
    t: u64,
    moments: &mut BTreeMap<String, MomentPair>,
    name: &str,
    value: &mut Array<F, D>,
    grad: &Array<F, D>,
) {
    let n = value.len();
    let entry = moments.entry(name.to_string()).or_insert_with(|| MomentPair {
        m: vec![0.0; n],
        v: vec![0.0; n],
    });
    assert_eq!(entry.m.len(), n, "moment size mismatch for {name}");
    let bc1 = 1.0 - cfg.beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t as i32);
    for ((pv, &gv), (m, v)) in value
        .iter_mut()
        .zip(grad.iter())
        .zip(entry.m.iter_mut().zip(entry.v.iter_mut()))
    {
        let g = gv.to_f64();
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        let delta = cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        *pv = F::from_f64(pv.to_f64() - delta);
    }
}
