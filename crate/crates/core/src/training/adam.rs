use serde::{Deserialize, Serialize};

use crate::autograd::{Gradients, ParamStore};
use crate::checkpoint::OptimizerState;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// Adam with bias correction and a constant learning rate.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    pub state: OptimizerState,
}

impl Adam {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        let zeros = || store.iter().map(|(_, _, t)| Tensor::zeros(t.shape())).collect();
        Adam {
            config,
            state: OptimizerState {
                t: 0,
                m: zeros(),
                v: zeros(),
            },
        }
    }

    pub fn with_state(config: AdamConfig, state: OptimizerState, store: &ParamStore) -> Result<Self> {
        let ok = state.m.len() == store.len()
            && state.v.len() == store.len()
            && store
                .iter()
                .zip(state.m.iter().zip(&state.v))
                .all(|((_, _, p), (m, v))| p.shape() == m.shape() && p.shape() == v.shape());
        if !ok {
            return Err(Error::Checkpoint("optimizer state does not match parameters".into()));
        }
        Ok(Adam { config, state })
    }

    /// Apply `grad * scale` for every parameter that received a gradient.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients, scale: f64) {
        let AdamConfig {
            learning_rate: lr,
            beta1: b1,
            beta2: b2,
            eps,
        } = self.config;
        self.state.t += 1;
        let t = self.state.t as i32;
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let Some(g) = grads.get(id) else { continue };
            let m = self.state.m[id.0].data_mut();
            let v = self.state.v[id.0].data_mut();
            let p = store.get_mut(id).data_mut();
            for i in 0..p.len() {
                let gi = g.data()[i] * scale;
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p[i] -= lr * mh / (vh.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::{Backend, Tape};

    fn quadratic_grads(store: &ParamStore) -> Gradients {
        let mut tape = Tape::new(store);
        let p = tape.param(crate::autograd::ParamId(0));
        let zero = tape.constant(Tensor::zeros([1, 1, 1, 2]));
        let l = tape.l1(&p, &zero).unwrap();
        tape.backward(l).unwrap()
    }

    #[test]
    fn first_step_moves_by_learning_rate_and_zero_rate_is_identity() {
        let mut store = ParamStore::new();
        store.add("p", Tensor::from_vec([1, 1, 1, 2], vec![0.5, -2.0]).unwrap());
        let cfg = AdamConfig {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-8,
        };
        let g = quadratic_grads(&store);
        let mut adam = Adam::new(cfg, &store);
        adam.step(&mut store, &g, 1.0);
        let p = store.get(crate::autograd::ParamId(0)).data().to_vec();
        // first bias-corrected step is lr * sign(g)
        assert!((p[0] - 0.49).abs() < 1e-9);
        assert!((p[1] + 1.99).abs() < 1e-9);

        let before = store.clone();
        let mut frozen = Adam::new(AdamConfig { learning_rate: 0.0, ..cfg }, &store);
        let g = quadratic_grads(&store);
        frozen.step(&mut store, &g, 1.0);
        assert_eq!(store, before);
    }
}
