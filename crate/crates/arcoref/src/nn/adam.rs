//! Adam with bias correction.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::nn::params::ParamStore;
use crate::nn::tensor::Tensor;

/// Optimizer state: first/second moment accumulators per parameter.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
}

impl AdamState {
    pub fn new(learning_rate: f64) -> Self {
        AdamState {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update over the given gradients. Gradients must be finite and
    /// shape-compatible with their parameters.
    pub fn apply(
        &mut self,
        params: &mut ParamStore,
        grads: &BTreeMap<String, Tensor>,
    ) -> Result<()> {
        for (name, grad) in grads {
            if !grad.all_finite() {
                return Err(Error::NonFinite {
                    what: format!("gradient of parameter {name}"),
                });
            }
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (name, grad) in grads {
            let param = params.get_mut(name).ok_or_else(|| Error::Checkpoint(
                format!("gradient for unknown parameter {name}"),
            ))?;
            assert_eq!(
                param.shape(),
                grad.shape(),
                "adam: gradient shape {:?} vs parameter shape {:?} for {name}",
                grad.shape(),
                param.shape()
            );
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(grad.shape()));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(grad.shape()));
            let (md, vd, pd) = (m.data_mut(), v.data_mut(), param.data_mut());
            for i in 0..pd.len() {
                let g = grad.data()[i];
                md[i] = self.beta1 * md[i] + (1.0 - self.beta1) * g;
                vd[i] = self.beta2 * vd[i] + (1.0 - self.beta2) * g * g;
                let m_hat = md[i] / bc1;
                let v_hat = vd[i] / bc2;
                pd[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_fresh_params_unchanged() {
        let mut params = ParamStore::new();
        params.insert("p", Tensor::vector(vec![1.0, -2.0]));
        let mut adam = AdamState::new(1e-3);
        let mut grads = BTreeMap::new();
        grads.insert("p".to_string(), Tensor::vector(vec![0.0, 0.0]));
        adam.apply(&mut params, &grads).unwrap();
        assert_eq!(params.get("p").unwrap().data(), &[1.0, -2.0]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // From scalar 0 with gradient 1: m_hat = v_hat = 1 after bias
        // correction, so the step is lr / (1 + eps).
        let mut params = ParamStore::new();
        params.insert("p", Tensor::scalar(0.0));
        let lr = 1e-3;
        let mut adam = AdamState::new(lr);
        let mut grads = BTreeMap::new();
        grads.insert("p".to_string(), Tensor::scalar(1.0));
        adam.apply(&mut params, &grads).unwrap();
        let expected = -lr / (1.0 + adam.eps);
        let got = params.get("p").unwrap().item();
        assert!((got - expected).abs() < 1e-15, "got {got}, expected {expected}");
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut params = ParamStore::new();
        params.insert("layer.weight", Tensor::scalar(0.0));
        let mut adam = AdamState::new(1e-3);
        let mut grads = BTreeMap::new();
        grads.insert("layer.weight".to_string(), Tensor::scalar(f64::NAN));
        let err = adam.apply(&mut params, &grads).unwrap_err();
        assert!(err.to_string().contains("layer.weight"));
    }

    #[test]
    fn deterministic_across_runs() {
        let run = || {
            let mut params = ParamStore::new();
            params.insert("p", Tensor::vector(vec![0.5, -0.25, 2.0]));
            let mut adam = AdamState::new(1e-2);
            for step in 0..50 {
                let mut grads = BTreeMap::new();
                let g: Vec<f64> = params
                    .get("p")
                    .unwrap()
                    .data()
                    .iter()
                    .map(|x| 2.0 * x + step as f64 * 0.001)
                    .collect();
                grads.insert("p".to_string(), Tensor::vector(g));
                adam.apply(&mut params, &grads).unwrap();
            }
            params.get("p").unwrap().data().to_vec()
        };
        let a = run();
        let b = run();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}
