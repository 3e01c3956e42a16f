use serde::{Deserialize, Serialize};

use super::params::ParamSet;
use crate::error::{invalid_input, Error, Result};

/// Adam state with bias correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptimizerState {
    pub fn new(len: usize, lr: f64) -> Self {
        Self {
            step: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn for_params(p: &ParamSet, lr: f64) -> Self {
        Self::new(p.len(), lr)
    }
}

pub fn optimizer_step(state: &mut OptimizerState, params: &mut ParamSet, grads: &ParamSet) -> Result<()> {
    if !params.same_layout(grads) || state.m.len() != params.len() {
        return Err(invalid_input("optimizer, parameter and gradient shapes differ"));
    }
    if !(state.lr >= 0.0) {
        return Err(invalid_input("learning rate must be nonnegative"));
    }
    if !grads.is_finite() {
        return Err(Error::TrainingDiverged("non-finite gradient".into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    let (b1, b2, lr, eps) = (state.beta1, state.beta2, state.lr, state.eps);
    for (((p, g), m), v) in params
        .values_mut()
        .iter_mut()
        .zip(grads.values())
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let mhat = *m / c1;
        let vhat = *v / c2;
        let delta = lr * mhat / (vhat.sqrt() + eps);
        if delta != 0.0 {
            *p -= delta;
        }
    }
    if !params.is_finite() {
        return Err(Error::TrainingDiverged("non-finite parameter after update".into()));
    }
    Ok(())
}

/// Rescales `grads` in place so its norm is at most `max_norm`.
pub fn clip_grad_norm(grads: &mut ParamSet, max_norm: f64) -> f64 {
    let norm = grads.norm();
    if max_norm > 0.0 && norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::params::BlockSpec;

    fn scalar(v: f64) -> ParamSet {
        ParamSet::from_values(vec![BlockSpec::new("w", &[1])], vec![v]).unwrap()
    }

    #[test]
    fn zero_gradient_keeps_params() {
        let mut p = scalar(0.3);
        let mut st = OptimizerState::for_params(&p, 1e-3);
        optimizer_step(&mut st, &mut p, &scalar(0.0)).unwrap();
        assert_eq!(p.values()[0], 0.3);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = scalar(1.0);
        let mut st = OptimizerState::for_params(&p, 0.01);
        optimizer_step(&mut st, &mut p, &scalar(1.0)).unwrap();
        // m_hat = 1, v_hat = 1: delta = lr / (1 + eps).
        let expect = 1.0 - 0.01 / (1.0 + 1e-8);
        assert!((p.values()[0] - expect).abs() < 1e-15);
        for _ in 0..5 {
            optimizer_step(&mut st, &mut p, &scalar(1.0)).unwrap();
        }
        assert!((p.values()[0] - (1.0 - 6.0 * 0.01)).abs() < 1e-6);
    }

    #[test]
    fn zero_lr_keeps_params() {
        let mut p = scalar(2.0);
        let mut st = OptimizerState::for_params(&p, 0.0);
        optimizer_step(&mut st, &mut p, &scalar(5.0)).unwrap();
        assert_eq!(p.values()[0], 2.0);
    }

    #[test]
    fn non_finite_gradient_diverges() {
        let mut p = scalar(2.0);
        let mut st = OptimizerState::for_params(&p, 0.1);
        assert!(matches!(
            optimizer_step(&mut st, &mut p, &scalar(f64::NAN)),
            Err(Error::TrainingDiverged(_))
        ));
    }

    #[test]
    fn clipping() {
        let mut g = ParamSet::from_values(vec![BlockSpec::new("w", &[2])], vec![3.0, 4.0]).unwrap();
        assert_eq!(clip_grad_norm(&mut g, 1.0), 5.0);
        assert!((g.norm() - 1.0).abs() < 1e-15);
    }
}
