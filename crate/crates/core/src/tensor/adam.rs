use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam over a fixed list of parameter tensors.
pub struct AdamState {
    hyper: AdamHyper,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

impl AdamState {
    pub fn new(shapes: &[&[usize]], hyper: AdamHyper) -> Self {
        AdamState {
            hyper,
            m: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            v: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            t: 0,
        }
    }

    pub fn timestep(&self) -> u64 {
        self.t
    }

    /// One update step. A `None` gradient leaves the parameter untouched
    /// (frozen embeddings) without advancing its moments.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Option<&Tensor>]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape("adam: parameter count mismatch".into()));
        }
        self.t += 1;
        let h = self.hyper;
        let bc1 = 1.0 - h.beta1.powi(self.t as i32);
        let bc2 = 1.0 - h.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let Some(g) = grads[i] else { continue };
            if g.shape() != params[i].shape() {
                return Err(Error::Shape(format!(
                    "adam: grad shape {:?} vs param shape {:?}",
                    g.shape(),
                    params[i].shape()
                )));
            }
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let p = params[i].data_mut();
            for ((pj, gj), (mj, vj)) in
                p.iter_mut().zip(g.data()).zip(m.iter_mut().zip(v.iter_mut()))
            {
                *mj = h.beta1 * *mj + (1.0 - h.beta1) * gj;
                *vj = h.beta2 * *vj + (1.0 - h.beta2) * gj * gj;
                let mhat = *mj / bc1;
                let vhat = *vj / bc2;
                *pj -= h.lr * mhat / (vhat.sqrt() + h.eps);
            }
            params[i].check_finite("adam_step")?;
        }
        Ok(())
    }
}
