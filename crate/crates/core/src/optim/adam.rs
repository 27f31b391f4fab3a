use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lr >= 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid Adam settings {self:?}")))
        }
    }
}

/// Moment estimates for one named parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamBlock {
    pub name: String,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

/// Adam over a fixed list of parameter blocks sharing one step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub cfg: AdamConfig,
    pub t: u64,
    pub blocks: Vec<AdamBlock>,
}

impl AdamState {
    pub fn new(cfg: AdamConfig, blocks: &[(&str, usize)]) -> Self {
        AdamState {
            cfg,
            t: 0,
            blocks: blocks
                .iter()
                .map(|&(name, n)| AdamBlock { name: name.to_string(), m: vec![0.0; n], v: vec![0.0; n] })
                .collect(),
        }
    }

    /// One bias-corrected update of every block. Gradients are checked
    /// before anything is modified, so a non-finite value leaves both the
    /// parameters and the state untouched.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.blocks.len() || grads.len() != self.blocks.len() {
            return Err(Error::DimensionMismatch {
                what: "adam parameter blocks",
                expected: self.blocks.len().to_string(),
                got: format!("{} params, {} grads", params.len(), grads.len()),
            });
        }
        for ((b, p), g) in self.blocks.iter().zip(params.iter()).zip(grads) {
            if p.len() != b.m.len() || g.len() != b.m.len() {
                return Err(Error::DimensionMismatch {
                    what: "adam block size",
                    expected: format!("{} for `{}`", b.m.len(), b.name),
                    got: format!("{} params, {} grads", p.len(), g.len()),
                });
            }
            if let Some(index) = g.iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFiniteGradient { block: b.name.clone(), index });
            }
        }
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for ((b, p), g) in self.blocks.iter_mut().zip(params.iter_mut()).zip(grads) {
            for i in 0..g.len() {
                b.m[i] = beta1 * b.m[i] + (1.0 - beta1) * g[i];
                b.v[i] = beta2 * b.v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = b.m[i] / c1;
                let v_hat = b.v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Single-block convenience wrapper.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState) -> Result<()> {
    state.step(&mut [params], &[grads])
}
