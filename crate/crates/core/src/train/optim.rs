use crate::error::{Error, Result};
use crate::model::{OptimizerMoments, ParamStore};
use crate::tensor::{Tape, Tensor, Var};

use super::config::TrainConfig;

/// Pre-exponential clamp applied to predicted log-power.
pub const LOG_POWER_CLAMP: f64 = 40.0;

/// Mean over all bins of `(|Y| - exp(pred / 2))^2`, with the prediction
/// clamped to `[-40, 40]` before exponentiation.
pub fn loss_mse_magnitude(
    tape: &mut Tape,
    pred_log_power: &Var,
    target_magnitude: &Tensor,
) -> Result<Var> {
    let magnitude = tape.exp_half_clamped(pred_log_power, LOG_POWER_CLAMP)?;
    let loss = tape.mse_to_target(&magnitude, target_magnitude)?;
    if !loss.data()[0].is_finite() {
        return Err(Error::Training("loss is not finite".into()));
    }
    Ok(loss)
}

/// Adam with bias correction and a continuously decaying step size
/// `lr0 * rate^(step / decay_steps)`.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr0: f64,
    pub decay_steps: f64,
    pub decay_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    moments: OptimizerMoments,
    step: u64,
}

impl Adam {
    pub fn new(config: &TrainConfig, params: &ParamStore) -> Self {
        Self {
            lr0: config.lr0,
            decay_steps: config.decay_steps,
            decay_rate: config.decay_rate,
            beta1: config.beta1,
            beta2: config.beta2,
            epsilon: config.epsilon,
            moments: OptimizerMoments {
                first: params.zeros_like(),
                second: params.zeros_like(),
            },
            step: 0,
        }
    }

    /// Continues from saved moments at global step `step`.
    pub fn resume(config: &TrainConfig, moments: OptimizerMoments, step: u64) -> Self {
        Self {
            moments,
            step,
            ..Self::new(config, &ParamStore::new())
        }
    }

    pub fn learning_rate(&self, step: u64) -> f64 {
        self.lr0 * self.decay_rate.powf(step as f64 / self.decay_steps)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> &OptimizerMoments {
        &self.moments
    }

    /// One update. Returns the learning rate used. Non-finite gradients abort
    /// before anything changes.
    pub fn update(&mut self, params: &mut ParamStore, grads: &ParamStore) -> Result<f64> {
        for (name, g) in grads.iter() {
            if g.data().iter().any(|v| !v.is_finite()) {
                return Err(Error::Training(format!(
                    "non-finite gradient for parameter {name}"
                )));
            }
        }
        let lr = self.learning_rate(self.step);
        let t = (self.step + 1) as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (name, p) in params.iter_mut() {
            let g = grads
                .get(name)
                .ok_or_else(|| Error::Training(format!("no gradient for parameter {name}")))?;
            let m = self.moments.first.get_mut(name);
            let m = m.ok_or_else(|| Error::Training(format!("no moment for parameter {name}")))?;
            let v = self
                .moments
                .second
                .get_mut(name)
                .expect("moments share names");
            for (((pv, gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mv = self.beta1 * *mv + (1.0 - self.beta1) * gv;
                *vv = self.beta2 * *vv + (1.0 - self.beta2) * gv * gv;
                let m_hat = *mv / c1;
                let v_hat = *vv / c2;
                *pv -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        self.step += 1;
        Ok(lr)
    }
}
