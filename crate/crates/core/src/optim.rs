//! AdamW: Adam with weight decay applied directly to the parameters rather
//! than folded into the gradient.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Block, BlockGroup, ModelParams};
use crate::numkernel::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Blocks that never decay.
    pub decay_exempt: Vec<Block>,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-2,
            decay_exempt: vec![
                Block::LstmBias,
                Block::EmbBias,
                Block::TargetBranchBias,
                Block::GpsrBranchBias,
                Block::ResidualBias,
                Block::TargetBias,
                Block::GpsrBias,
            ],
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid("lr", format!("must be positive, got {}", self.lr)));
        }
        for (field, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::invalid(field, format!("must lie in [0, 1), got {b}")));
            }
        }
        if self.eps.is_nan() || self.eps <= 0.0 {
            return Err(Error::invalid("eps", format!("must be positive, got {}", self.eps)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::invalid(
                "weight_decay",
                format!("must be non-negative, got {}", self.weight_decay),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockMoments {
    pub block: Block,
    pub first: Matrix,
    pub second: Matrix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamWState {
    pub step: u64,
    pub moments: Vec<BlockMoments>,
}

impl AdamWState {
    pub fn new(params: &ModelParams) -> Self {
        AdamWState {
            step: 0,
            moments: params
                .blocks()
                .into_iter()
                .map(|(block, m)| BlockMoments {
                    block,
                    first: Matrix::zeros(m.rows(), m.cols()),
                    second: Matrix::zeros(m.rows(), m.cols()),
                })
                .collect(),
        }
    }
}

/// One AdamW update of a single block at step `t` (1-based).
pub fn adamw_step(
    param: &mut Matrix,
    grad: &Matrix,
    first: &mut Matrix,
    second: &mut Matrix,
    t: u64,
    config: &OptimConfig,
    decay: bool,
) -> Result<()> {
    if param.shape() != grad.shape() || param.shape() != first.shape() || param.shape() != second.shape() {
        return Err(Error::Shape {
            op: "adamw_step",
            left: param.shape(),
            right: grad.shape(),
        });
    }
    if let Some(i) = grad.as_slice().iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("gradient entry {i}")));
    }
    if t == 0 {
        return Err(Error::invalid("step", "AdamW steps are counted from 1"));
    }
    let OptimConfig { lr, beta1, beta2, eps, .. } = *config;
    let bc1 = 1.0 - beta1.powi(t as i32);
    let bc2 = 1.0 - beta2.powi(t as i32);
    let shrink = if decay { 1.0 - lr * config.weight_decay } else { 1.0 };
    let iter = param
        .as_mut_slice()
        .iter_mut()
        .zip(grad.as_slice())
        .zip(first.as_mut_slice().iter_mut().zip(second.as_mut_slice()));
    for ((theta, &g), (m, v)) in iter {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *theta = *theta * shrink - lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// Optimizer over a whole [`ModelParams`].
#[derive(Clone, Debug)]
pub struct AdamW {
    config: OptimConfig,
    state: AdamWState,
}

impl AdamW {
    pub fn new(config: OptimConfig, params: &ModelParams) -> Self {
        AdamW {
            config,
            state: AdamWState::new(params),
        }
    }

    pub fn resume(config: OptimConfig, state: AdamWState) -> Self {
        AdamW { config, state }
    }

    pub fn state(&self) -> &AdamWState {
        &self.state
    }

    pub fn config(&self) -> &OptimConfig {
        &self.config
    }

    /// Applies one step. With `trainable` set, only blocks in those groups are
    /// touched; the others keep their values and moments.
    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams, trainable: Option<&[BlockGroup]>) -> Result<()> {
        let grad_blocks = grads.blocks();
        if grad_blocks.len() != self.state.moments.len() {
            return Err(Error::Data("gradient blocks do not match the optimizer state".into()));
        }
        for ((block, g), mom) in grad_blocks.iter().zip(&self.state.moments) {
            if *block != mom.block || g.shape() != mom.first.shape() {
                return Err(Error::Shape {
                    op: "adamw",
                    left: mom.first.shape(),
                    right: g.shape(),
                });
            }
            if !g.is_finite() {
                return Err(Error::NonFinite(format!("gradient of block {block}")));
            }
        }
        let t = self.state.step + 1;
        let config = &self.config;
        let moments = &mut self.state.moments;
        let mut idx = 0;
        let mut result = Ok(());
        params.for_each_block_mut(|block, theta| {
            let mom = &mut moments[idx];
            let g = grad_blocks[idx].1;
            idx += 1;
            if result.is_err() || trainable.is_some_and(|groups| !groups.contains(&block.group())) {
                return;
            }
            let decay = !config.decay_exempt.contains(&block);
            result = adamw_step(theta, g, &mut mom.first, &mut mom.second, t, config, decay);
        });
        result?;
        self.state.step = t;
        Ok(())
    }
}
