//! Adam with optional decoupled weight decay.

use std::collections::BTreeMap;

use crate::params::ParamStore;
use crate::tensor::Arr;

#[derive(Clone, Copy, Debug)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

pub struct Adam {
    cfg: AdamConfig,
    t: u64,
    state: BTreeMap<String, (Arr, Arr)>,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Self {
        Adam {
            cfg,
            t: 0,
            state: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// Apply one update. Frozen parameters are never touched, even if a
    /// gradient is supplied for them.
    pub fn step(&mut self, store: &mut ParamStore, grads: &BTreeMap<String, Arr>) {
        self.t += 1;
        let c = self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        for (name, grad) in grads {
            let p = store.get_mut(name);
            if p.frozen {
                continue;
            }
            let (m, v) = self
                .state
                .entry(name.clone())
                .or_insert_with(|| (Arr::zeros(grad.raw_dim()), Arr::zeros(grad.raw_dim())));
            ndarray::Zip::from(&mut *m).and(grad).for_each(|m, &g| {
                *m = c.beta1 * *m + (1.0 - c.beta1) * g;
            });
            ndarray::Zip::from(&mut *v).and(grad).for_each(|v, &g| {
                *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
            });
            ndarray::Zip::from(&mut p.value)
                .and(&*m)
                .and(&*v)
                .for_each(|p, &m, &v| {
                    let mhat = m / bc1;
                    let vhat = v / bc2;
                    *p -= c.learning_rate * mhat / (vhat.sqrt() + c.eps);
                });
            if c.weight_decay != 0.0 {
                p.value.mapv_inplace(|x| x - c.learning_rate * c.weight_decay * x);
            }
        }
    }
}
