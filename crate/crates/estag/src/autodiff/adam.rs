//! Adam with bias correction and coupled L2 weight decay.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::params::{GradMap, ParamStore};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 5e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-12,
        }
    }
}

/// Per-parameter first/second moments plus the shared step counter.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    first: BTreeMap<String, Tensor>,
    second: BTreeMap<String, Tensor>,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &ParamStore) -> Self {
        let zeros = |_: &Tensor| ();
        let _ = zeros;
        let first = params
            .iter()
            .map(|(n, t)| (n.clone(), Tensor::zeros(t.shape().to_vec())))
            .collect();
        let second = params
            .iter()
            .map(|(n, t)| (n.clone(), Tensor::zeros(t.shape().to_vec())))
            .collect();
        AdamState {
            config,
            step: 0,
            first,
            second,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update in place. Weight decay is coupled: `wd * θ` is added to
/// the gradient before the moment updates.
pub fn adam_step(params: &mut ParamStore, grads: &GradMap, state: &mut AdamState) -> Result<()> {
    params.check_grads(grads)?;
    for (name, g) in grads {
        if !g.all_finite() {
            return Err(Error::Numerical(format!(
                "non-finite gradient for parameter {name}"
            )));
        }
    }

    let cfg = state.config;
    state.step += 1;
    let t = state.step;
    let bc1 = 1.0 - cfg.beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t as i32);

    for (name, theta) in params.iter_mut() {
        let g = &grads[name];
        let m = state.first.get_mut(name).expect("moment missing");
        let v = state.second.get_mut(name).expect("moment missing");
        let (td, md, vd) = (theta.data_mut(), m.data_mut(), v.data_mut());
        for i in 0..td.len() {
            let grad = g.data()[i] + cfg.weight_decay * td[i];
            md[i] = cfg.beta1 * md[i] + (1.0 - cfg.beta1) * grad;
            vd[i] = cfg.beta2 * vd[i] + (1.0 - cfg.beta2) * grad * grad;
            let m_hat = md[i] / bc1;
            let v_hat = vd[i] / bc2;
            td[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(values: &[(&str, Vec<f64>)]) -> ParamStore {
        let mut ps = ParamStore::new();
        for (name, vals) in values {
            ps.insert(*name, Tensor::from_vec(vals.clone()));
        }
        ps
    }

    #[test]
    fn zero_gradients_leave_params_unchanged() {
        let mut ps = store(&[("w", vec![1.0, -2.0, 3.0])]);
        let before = ps.clone();
        let mut state = AdamState::new(
            AdamConfig {
                weight_decay: 0.0,
                ..AdamConfig::default()
            },
            &ps,
        );
        let grads: GradMap = [("w".to_string(), Tensor::zeros(vec![3]))].into();
        adam_step(&mut ps, &grads, &mut state).unwrap();
        assert_eq!(ps, before);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        // With bias correction, m̂ = g and v̂ = g², so the first update is
        // -lr · g / (|g| + ε) ≈ -lr · sign(g).
        let mut ps = store(&[("w", vec![0.5, -0.5])]);
        let cfg = AdamConfig {
            lr: 1e-2,
            weight_decay: 0.0,
            ..AdamConfig::default()
        };
        let mut state = AdamState::new(cfg, &ps);
        let grads: GradMap = [("w".to_string(), Tensor::from_vec(vec![3.0, -0.25]))].into();
        adam_step(&mut ps, &grads, &mut state).unwrap();
        let w = ps.get("w").unwrap();
        assert!((w.data()[0] - (0.5 - 1e-2)).abs() < 1e-6);
        assert!((w.data()[1] - (-0.5 + 1e-2)).abs() < 1e-6);
    }

    #[test]
    fn step_counter_increments_once_per_call() {
        let mut ps = store(&[("w", vec![1.0])]);
        let mut state = AdamState::new(AdamConfig::default(), &ps);
        assert_eq!(state.step_count(), 0);
        let grads: GradMap = [("w".to_string(), Tensor::from_vec(vec![1.0]))].into();
        adam_step(&mut ps, &grads, &mut state).unwrap();
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn non_finite_gradient_aborts_and_names_param() {
        let mut ps = store(&[("layer.bias", vec![1.0])]);
        let before = ps.clone();
        let mut state = AdamState::new(AdamConfig::default(), &ps);
        let grads: GradMap = [("layer.bias".to_string(), Tensor::from_vec(vec![f64::NAN]))].into();
        let err = adam_step(&mut ps, &grads, &mut state).unwrap_err();
        assert!(err.to_string().contains("layer.bias"));
        assert_eq!(ps, before);
        assert_eq!(state.step_count(), 0);
    }

    #[test]
    fn grads_must_cover_exactly_the_params() {
        let mut ps = store(&[("a", vec![1.0]), ("b", vec![2.0])]);
        let mut state = AdamState::new(AdamConfig::default(), &ps);
        let grads: GradMap = [("a".to_string(), Tensor::from_vec(vec![0.1]))].into();
        assert!(adam_step(&mut ps, &grads, &mut state).is_err());
    }
}
