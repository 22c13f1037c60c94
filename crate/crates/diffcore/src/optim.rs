//! First-order optimizers over a [`ParamStore`].

use serde::{Deserialize, Serialize};

use crate::params::ParamStore;
use crate::tensor::Tensor;

pub trait Optimizer {
    /// Applies one update from the accumulated gradients, then zeroes them.
    fn step(&mut self, store: &mut ParamStore);
}

/// Plain stochastic gradient descent.
#[derive(Clone, Debug)]
pub struct Sgd {
    pub lr: f64,
}

impl Sgd {
    pub fn new(lr: f64) -> Self {
        Self { lr }
    }
}

impl Optimizer for Sgd {
    fn step(&mut self, store: &mut ParamStore) {
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            if !store.is_trainable(id) {
                continue;
            }
            let g = store.grad(id).clone();
            for (v, d) in store.value_mut(id).data_mut().iter_mut().zip(g.data()) {
                *v -= self.lr * d;
            }
        }
        store.zero_grads();
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }
}

impl Optimizer for Adam {
    fn step(&mut self, store: &mut ParamStore) {
        while self.m.len() < store.len() {
            let [r, c] = store.value(crate::params::ParamId(self.m.len())).shape();
            self.m.push(Tensor::zeros(r, c));
            self.v.push(Tensor::zeros(r, c));
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            if !store.is_trainable(id) {
                continue;
            }
            let i = id.index();
            let g = store.grad(id).clone();
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let value = store.value_mut(id).data_mut();
            for k in 0..g.len() {
                let gk = g.data()[k];
                let mk = &mut m.data_mut()[k];
                *mk = self.beta1 * *mk + (1.0 - self.beta1) * gk;
                let vk = &mut v.data_mut()[k];
                *vk = self.beta2 * *vk + (1.0 - self.beta2) * gk * gk;
                let mhat = m.data()[k] / c1;
                let vhat = v.data()[k] / c2;
                value[k] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        store.zero_grads();
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Sgd,
    Adam,
}

impl OptimizerKind {
    pub fn build(self, lr: f64) -> Box<dyn Optimizer> {
        match self {
            OptimizerKind::Sgd => Box::new(Sgd::new(lr)),
            OptimizerKind::Adam => Box::new(Adam::new(lr)),
        }
    }
}

impl std::str::FromStr for OptimizerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(Self::Sgd),
            "adam" => Ok(Self::Adam),
            other => Err(format!("unknown optimizer `{other}` (expected sgd or adam)")),
        }
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;

    #[test]
    fn sgd_step_moves_against_gradient() {
        let mut store = ParamStore::new(0);
        let id = store.add("w", Tensor::scalar(1.0)).unwrap();
        *store.grad_mut(id) = Tensor::scalar(2.0);
        Sgd::new(0.005).step(&mut store);
        assert!((store.value(id).item() - 0.99).abs() < 1e-15);
        assert_eq!(store.grad(id).item(), 0.0);
    }

    #[test]
    fn frozen_parameters_do_not_move() {
        let mut store = ParamStore::new(0);
        let id = store.add("w", Tensor::scalar(1.0)).unwrap();
        store.set_trainable(id, false);
        *store.grad_mut(id) = Tensor::scalar(2.0);
        Adam::new(0.1).step(&mut store);
        assert_eq!(store.value(id).item(), 1.0);
    }

    #[test]
    fn quadratic_loss_decreases_under_both_optimizers() {
        for kind in [OptimizerKind::Sgd, OptimizerKind::Adam] {
            let mut store = ParamStore::new(0);
            let id = store.add("w", Tensor::row(&[3.0, -2.0])).unwrap();
            let mut opt = kind.build(0.05);
            let mut last = f64::INFINITY;
            for _ in 0..20 {
                let mut g = Graph::inference();
                let w = g.param(&store, id);
                let sq = g.square(w);
                let loss = g.sum(sq);
                let l = g.scalar(loss);
                assert!(l < last, "{kind}: {l} >= {last}");
                last = l;
                g.backward(loss, &mut store).unwrap();
                opt.step(&mut store);
            }
        }
    }
}
