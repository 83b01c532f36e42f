use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::nn::array::{DenseArray, GradientStore, ParameterStore};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate >= 0.0
            && self.learning_rate.is_finite()
            && self.beta1 > 0.0
            && self.beta1 < 1.0
            && self.beta2 > 0.0
            && self.beta2 < 1.0
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::usage(format!("invalid Adam hyperparameters {self:?}")))
        }
    }
}

/// Moment accumulators for bias-corrected Adam.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    first: BTreeMap<String, Vec<f64>>,
    second: BTreeMap<String, Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &ParameterStore) -> Result<Self> {
        config.validate()?;
        let zeros = |a: &DenseArray| vec![0.0; a.len()];
        Ok(AdamState {
            config,
            step: 0,
            first: params.iter().map(|(k, a)| (k.to_string(), zeros(a))).collect(),
            second: params.iter().map(|(k, a)| (k.to_string(), zeros(a))).collect(),
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One descent step on `params` along `grads`.
    pub fn update(&mut self, params: &mut ParameterStore, grads: &GradientStore) -> Result<()> {
        grads.matches(params)?;
        if self.first.len() != params.len() || params.names().any(|n| !self.first.contains_key(n)) {
            return Err(Error::usage("optimizer state keys differ from the parameter store"));
        }
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for (name, p) in params.iter_mut() {
            let g = grads.get(name).expect("checked by matches").values();
            let m = self.first.get_mut(name).expect("checked above");
            let v = self.second.get_mut(name).expect("checked above");
            for (((pv, &gv), mv), vv) in p.values_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mv = beta1 * *mv + (1.0 - beta1) * gv;
                *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
                let m_hat = *mv / bc1;
                let v_hat = *vv / bc2;
                *pv -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

/// Functional form: returns the updated parameters, mutating `state`.
pub fn adam_update(params: &ParameterStore, grads: &GradientStore, state: &mut AdamState) -> Result<ParameterStore> {
    let mut next = params.clone();
    state.update(&mut next, grads)?;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(v: &[f64]) -> ParameterStore {
        let mut s = ParameterStore::new();
        s.insert("w", DenseArray::row(v)).unwrap();
        s
    }

    fn grads(params: &ParameterStore, g: &[f64]) -> GradientStore {
        let mut gs = GradientStore::zeros_like(params);
        gs.get_mut("w").unwrap().values_mut().copy_from_slice(g);
        gs
    }

    #[test]
    fn zero_gradient_is_identity() {
        let p = store(&[1.0, -2.0]);
        let mut st = AdamState::new(AdamConfig::default(), &p).unwrap();
        let g = grads(&p, &[0.0, 0.0]);
        let mut cur = p.clone();
        for k in 1..=5 {
            cur = adam_update(&cur, &g, &mut st).unwrap();
            assert_eq!(cur, p);
            assert_eq!(st.step_count(), k);
        }
    }

    #[test]
    fn first_step_moves_by_learning_rate_times_sign() {
        let p = store(&[0.5, 0.5, 0.5]);
        let mut st = AdamState::new(AdamConfig::default(), &p).unwrap();
        let next = adam_update(&p, &grads(&p, &[3.0, -0.02, 1e3]), &mut st).unwrap();
        let d: Vec<f64> = next.get("w").unwrap().values().iter().map(|v| v - 0.5).collect();
        assert!((d[0] + 0.001).abs() < 1e-9);
        assert!((d[1] - 0.001).abs() < 1e-9);
        assert!((d[2] + 0.001).abs() < 1e-9);
    }

    #[test]
    fn constant_gradient_moves_monotonically() {
        let p = store(&[0.0]);
        let mut st = AdamState::new(AdamConfig::default(), &p).unwrap();
        let g = grads(&p, &[0.7]);
        let a = adam_update(&p, &g, &mut st).unwrap();
        let b = adam_update(&a, &g, &mut st).unwrap();
        let (x0, x1, x2) = (0.0, a.get("w").unwrap().values()[0], b.get("w").unwrap().values()[0]);
        assert!(x1 < x0 && x2 < x1);
    }

    #[test]
    fn mismatched_keys_are_rejected() {
        let p = store(&[0.0]);
        let mut st = AdamState::new(AdamConfig::default(), &p).unwrap();
        let mut other = ParameterStore::new();
        other.insert("v", DenseArray::row(&[0.0])).unwrap();
        let g = GradientStore::zeros_like(&other);
        assert!(matches!(adam_update(&p, &g, &mut st), Err(Error::Usage(_))));
    }

    #[test]
    fn invalid_hyperparameters_are_rejected() {
        let p = store(&[0.0]);
        let bad = AdamConfig {
            beta1: 1.0,
            ..AdamConfig::default()
        };
        assert!(AdamState::new(bad, &p).is_err());
    }
}
