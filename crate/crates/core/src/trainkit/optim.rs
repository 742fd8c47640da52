use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradnet::{GradientSet, Owner, ParameterStore};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamW {
    fn default() -> Self {
        AdamW {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// First and second moments for every parameter plus the update count.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(params: &ParameterStore) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|(_, p)| vec![0.0; p.value.len()]).collect();
        OptimizerState {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    pub fn matches(&self, params: &ParameterStore) -> bool {
        self.m.len() == params.len()
            && self.v.len() == params.len()
            && params
                .iter()
                .enumerate()
                .all(|(i, (_, p))| self.m[i].len() == p.value.len() && self.v[i].len() == p.value.len())
    }
}

/// One decoupled-weight-decay Adam update of the parameters whose owner
/// satisfies `active`; the others, and their moments, are left untouched.
pub fn adamw_step(
    params: &mut ParameterStore,
    grads: &GradientSet,
    state: &mut OptimizerState,
    lr: f64,
    cfg: &AdamW,
    active: impl Fn(Owner) -> bool,
) -> Result<()> {
    if !grads.is_finite() {
        return Err(Error::NumericOverflow("adamw gradient"));
    }
    if grads.len() != params.len() || !state.matches(params) {
        return Err(Error::Parameter("optimizer state does not match the parameters".into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..params.len() {
        if !active(params.by_index(i).1.owner) {
            continue;
        }
        let g = grads.by_index(i).data();
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        if g.len() != m.len() {
            return Err(Error::Parameter(format!("gradient {i} has the wrong size")));
        }
        let theta = params.value_mut(i).data_mut();
        for k in 0..theta.len() {
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            theta[k] -= lr * m_hat / (v_hat.sqrt() + cfg.epsilon) + lr * cfg.weight_decay * theta[k];
        }
    }
    Ok(())
}

/// Linear ramp from 0 to `base_lr` over the warmup, then linear decay to 0.
pub fn lr_at_step(step: usize, warmup_steps: usize, total_steps: usize, base_lr: f64) -> Result<f64> {
    if step > total_steps || warmup_steps >= total_steps {
        return Err(Error::Parameter(format!(
            "step {step} / warmup {warmup_steps} outside a schedule of {total_steps} steps"
        )));
    }
    if step < warmup_steps {
        Ok(base_lr * step as f64 / warmup_steps as f64)
    } else {
        Ok(base_lr * (total_steps - step) as f64 / (total_steps - warmup_steps) as f64)
    }
}
