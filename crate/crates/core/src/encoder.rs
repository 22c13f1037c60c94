//! Mean-aggregator graph encoder over sampled relational neighborhoods.
//!
//! Layer `k` maps `h^{k-1}` to `sigmoid(mean(self ∪ neighbors) · W_k)`.
//! Dimensions chain `d_init -> d_h -> ... -> d_h -> d_init` so the last
//! hidden state can be added to the initial embedding. The final
//! representation is `[e_init ; LN(e_init + sigmoid(W_res · drop(e_init + h^K)))]`.

use diffcore::{Graph, ParamId, ParamStore, Tensor, Var};
use rand::seq::index::sample;
use rand::Rng;

use crate::config::HyperParams;
use crate::error::Result;
use crate::kgdata::{KnowledgeGraph, Value};

/// Undirected adjacency over relational facts with per-call sampling.
#[derive(Clone, Debug)]
pub struct NeighborSampler {
    adj: Vec<Vec<usize>>,
    cap: usize,
}

impl NeighborSampler {
    pub fn from_kg(kg: &KnowledgeGraph, cap: usize) -> Self {
        let mut adj = vec![Vec::new(); kg.num_entities()];
        for f in kg.facts() {
            if let Value::Entity(id) = &f.value {
                let v = kg.entity_index(id).expect("relational values are entities");
                if v != f.entity {
                    adj[f.entity].push(v);
                    adj[v].push(f.entity);
                }
            }
        }
        for n in &mut adj {
            n.sort_unstable();
            n.dedup();
        }
        Self { adj, cap }
    }

    pub fn from_adjacency(adj: Vec<Vec<usize>>, cap: usize) -> Self {
        Self { adj, cap }
    }

    pub fn neighbors(&self, e: usize) -> &[usize] {
        &self.adj[e]
    }

    pub fn num_entities(&self) -> usize {
        self.adj.len()
    }

    /// Up to `cap` distinct neighbors, uniformly without replacement.
    pub fn sample<R: Rng + ?Sized>(&self, e: usize, rng: &mut R) -> Vec<usize> {
        let n = &self.adj[e];
        if n.len() <= self.cap {
            return n.clone();
        }
        sample(rng, n.len(), self.cap).into_iter().map(|i| n[i]).collect()
    }

    pub fn sample_all<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Vec<usize>> {
        (0..self.adj.len()).map(|e| self.sample(e, rng)).collect()
    }
}

#[derive(Clone, Debug)]
pub struct Encoder {
    pub init: ParamId,
    pub layers: Vec<ParamId>,
    pub res: ParamId,
    pub dropout: f64,
    pub ln_eps: f64,
}

impl Encoder {
    /// Registers `enc.init`, `enc.w1..K` and `enc.res`.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        hp: &HyperParams,
        num_entities: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let d_init = hp.d_init();
        let init = store.add_uniform("enc.init", num_entities, d_init, d_init, rng)?;
        let mut layers = Vec::with_capacity(hp.layers);
        for k in 0..hp.layers {
            let d_in = if k == 0 { d_init } else { hp.d_h };
            let d_out = if k + 1 == hp.layers { d_init } else { hp.d_h };
            layers.push(store.add_uniform(format!("enc.w{}", k + 1), d_in, d_out, d_in, rng)?);
        }
        let res = store.add_uniform("enc.res", d_init, d_init, d_init, rng)?;
        Ok(Self {
            init,
            layers,
            res,
            dropout: hp.dropout,
            ln_eps: hp.layer_norm_eps,
        })
    }

    /// Final representations of every entity (`N_e x d_e`).
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, neighbors: &[Vec<usize>]) -> Result<Var> {
        let init = g.param(store, self.init);
        let segments: Vec<Vec<usize>> = neighbors
            .iter()
            .enumerate()
            .map(|(e, n)| std::iter::once(e).chain(n.iter().copied()).collect())
            .collect();
        let mut h = init;
        for &w in &self.layers {
            let m = g.segment_mean(h, segments.clone())?;
            let w = g.param(store, w);
            let z = g.matmul(m, w)?;
            h = g.sigmoid(z);
        }
        let res = g.param(store, self.res);
        let x = g.add(init, h)?;
        let x = g.dropout(x, self.dropout);
        let z = g.matmul(x, res)?;
        let s = g.sigmoid(z);
        let second = g.add(init, s)?;
        let second = g.layer_norm(second, self.ln_eps);
        Ok(g.concat_cols(&[init, second])?)
    }

    /// Evaluation-mode representations as a plain tensor.
    pub fn encode_all(&self, store: &ParamStore, neighbors: &[Vec<usize>]) -> Result<Tensor> {
        let mut g = Graph::inference();
        let v = self.forward(&mut g, store, neighbors)?;
        Ok(g.value(v).clone())
    }

    /// Hidden state of one layer for one entity, without a tape.
    pub fn aggregate(h_prev: &Tensor, w: &Tensor, e: usize, neighbors: &[usize]) -> Vec<f64> {
        let d = h_prev.cols();
        let mut mean = h_prev.row_slice(e).to_vec();
        for &n in neighbors {
            for (m, x) in mean.iter_mut().zip(h_prev.row_slice(n)) {
                *m += x;
            }
        }
        let k = (neighbors.len() + 1) as f64;
        mean.iter_mut().for_each(|m| *m /= k);
        (0..w.cols())
            .map(|j| diffcore::sigmoid((0..d).map(|i| mean[i] * w.get(i, j)).sum()))
            .collect()
    }
}
