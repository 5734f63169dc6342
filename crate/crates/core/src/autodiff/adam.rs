use serde::{Deserialize, Serialize};

use super::{AdError, ParamStore, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam moments for every trainable entry of a store.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl AdamState {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        let zeros: Vec<Tensor> = store.iter().map(|(_, t, _)| Tensor::zeros(t.rows(), t.cols())).collect();
        Self {
            config,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// First and second moment estimates, one per store entry.
    pub fn moments(&self) -> (&[Tensor], &[Tensor]) {
        (&self.first, &self.second)
    }

    /// Rebuilds a state saved with [`moments`](Self::moments).
    pub fn from_parts(config: AdamConfig, step: u64, first: Vec<Tensor>, second: Vec<Tensor>) -> Result<Self, AdError> {
        if first.len() != second.len() {
            return Err(AdError::Domain {
                op: "adam_restore",
                detail: format!("{} first moments but {} second moments", first.len(), second.len()),
            });
        }
        Ok(Self {
            config,
            step,
            first,
            second,
        })
    }

    /// Applies one update. `grads` holds one tensor per store entry, in
    /// store order; gradients for buffers are ignored.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Tensor]) -> Result<(), AdError> {
        assert_eq!(grads.len(), store.len(), "one gradient per store entry");
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        let ids: Vec<_> = store.ids().collect();
        for (k, id) in ids.into_iter().enumerate() {
            if !store.is_trainable(id) {
                continue;
            }
            let g = &grads[k];
            let param = store.get_mut(id);
            if g.shape() != param.shape() {
                return Err(AdError::ShapeMismatch {
                    op: "adam_step",
                    lhs: param.shape(),
                    rhs: g.shape(),
                });
            }
            let m = self.first[k].values_mut();
            let v = self.second[k].values_mut();
            for (((p, &gi), mi), vi) in param.values_mut().iter_mut().zip(g.values()).zip(m).zip(v) {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *p -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(value: f64) -> (ParamStore, super::super::ParamId) {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::scalar(value));
        (store, id)
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let (mut store, id) = single(0.75);
        let mut adam = AdamState::new(&store, AdamConfig::default());
        for _ in 0..5 {
            adam.step(&mut store, &[Tensor::scalar(0.0)]).unwrap();
        }
        assert_eq!(store.get(id).item(), 0.75);
        assert_eq!(adam.step_count(), 5);
    }

    #[test]
    fn first_step_matches_hand_recurrence() {
        // m1 = 0.1, v1 = 0.001; mhat = 1, vhat = 1; delta = lr / (1 + eps).
        let (mut store, id) = single(2.0);
        let config = AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        };
        let mut adam = AdamState::new(&store, config);
        adam.step(&mut store, &[Tensor::scalar(1.0)]).unwrap();
        let m1: f64 = (1.0 - 0.9) * 1.0;
        let v1: f64 = (1.0 - 0.999) * 1.0;
        let expected = 2.0 - 0.1 * (m1 / (1.0 - 0.9)) / ((v1 / (1.0 - 0.999)).sqrt() + 1e-8);
        assert_eq!(store.get(id).item(), expected);
        assert!((store.get(id).item() - (2.0 - 0.1 / (1.0 + 1e-8))).abs() < 1e-15);
    }

    #[test]
    fn identical_runs_are_bitwise_equal() {
        let run = || {
            let (mut store, id) = single(1.0);
            let mut adam = AdamState::new(&store, AdamConfig::default());
            for k in 0..50 {
                let w = store.get(id).item();
                let g = 2.0 * w + (k as f64).sin();
                adam.step(&mut store, &[Tensor::scalar(g)]).unwrap();
            }
            store.get(id).item().to_bits()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let (mut store, _) = single(1.0);
        let mut adam = AdamState::new(&store, AdamConfig::default());
        assert!(adam.step(&mut store, &[Tensor::zeros(2, 1)]).is_err());
    }
}
