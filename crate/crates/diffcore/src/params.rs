//! Named learnable tensors with gradient buffers and JSON checkpoints.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use indexmap::IndexMap;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DiffError, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
struct Entry {
    value: Tensor,
    grad: Tensor,
    trainable: bool,
}

/// Parameters keyed by unique name, in insertion order.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    index: IndexMap<String, usize>,
    entries: Vec<Entry>,
    seed: u64,
}

impl ParamStore {
    pub fn new(seed: u64) -> Self {
        Self {
            index: IndexMap::new(),
            entries: Vec::new(),
            seed,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(DiffError::DuplicateParam(name));
        }
        let id = self.entries.len();
        let [r, c] = value.shape();
        self.entries.push(Entry {
            value,
            grad: Tensor::zeros(r, c),
            trainable: true,
        });
        self.index.insert(name, id);
        Ok(ParamId(id))
    }

    /// Adds a `rows x cols` tensor drawn uniformly from `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn add_uniform<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        fan_in: usize,
        rng: &mut R,
    ) -> Result<ParamId> {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        self.add_uniform_bound(name, rows, cols, bound, rng)
    }

    pub fn add_uniform_bound<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        bound: f64,
        rng: &mut R,
    ) -> Result<ParamId> {
        let data = (0..rows * cols)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        self.add(name, Tensor::from_vec(rows, cols, data)?)
    }

    pub fn id(&self, name: &str) -> Result<ParamId> {
        self.index
            .get(name)
            .map(|&i| ParamId(i))
            .ok_or_else(|| DiffError::UnknownParam(name.to_string()))
    }

    pub fn get(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn name(&self, id: ParamId) -> &str {
        self.index
            .get_index(id.0)
            .map(|(k, _)| k.as_str())
            .unwrap_or("")
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].grad
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].grad
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.entries[id.0].trainable
    }

    /// Frozen parameters still take part in forward passes but are skipped
    /// by backward accumulation and by optimizers.
    pub fn set_trainable(&mut self, id: ParamId, trainable: bool) {
        self.entries[id.0].trainable = trainable;
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> + '_ {
        self.index.keys().map(String::as_str)
    }

    /// Total number of scalar parameters.
    pub fn total_count(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    /// Scalar count of every parameter whose name starts with `prefix`.
    pub fn count_with_prefix(&self, prefix: &str) -> usize {
        self.index
            .iter()
            .filter(|(k, _)| k.starts_with(prefix))
            .map(|(_, &i)| self.entries[i].value.len())
            .sum()
    }

    pub fn zero_grads(&mut self) {
        for e in &mut self.entries {
            e.grad.fill(0.0);
        }
    }

    pub fn grads_finite(&self) -> bool {
        self.entries.iter().all(|e| e.grad.is_finite())
    }

    /// Copies values (not gradients) from a store with identical layout.
    pub fn copy_values_from(&mut self, other: &ParamStore) {
        for (dst, src) in self.entries.iter_mut().zip(&other.entries) {
            dst.value = src.value.clone();
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            seed: self.seed,
            params: self
                .index
                .iter()
                .map(|(name, &i)| {
                    let v = &self.entries[i].value;
                    CheckpointEntry {
                        name: name.clone(),
                        shape: v.shape().to_vec(),
                        data: v.data().to_vec(),
                    }
                })
                .collect(),
        }
    }

    /// Rebuilds a store from a checkpoint; all entries become trainable.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let mut store = ParamStore::new(ckpt.seed);
        for e in &ckpt.params {
            let [r, c] = shape2(&e.shape)?;
            store.add(e.name.clone(), Tensor::from_vec(r, c, e.data.clone())?)?;
        }
        Ok(store)
    }

    /// Overwrites values from a checkpoint; every name must exist with the same shape.
    pub fn load_values(&mut self, ckpt: &Checkpoint) -> Result<()> {
        for e in &ckpt.params {
            let id = self.id(&e.name)?;
            let found = shape2(&e.shape)?;
            let expected = self.value(id).shape();
            if found != expected {
                return Err(DiffError::CheckpointShape {
                    name: e.name.clone(),
                    expected,
                    found,
                });
            }
            *self.value_mut(id) = Tensor::from_vec(found[0], found[1], e.data.clone())?;
        }
        Ok(())
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, &self.to_checkpoint())?;
        w.flush()?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Checkpoint> {
        let r = BufReader::new(File::open(path)?);
        Ok(serde_json::from_reader(r)?)
    }
}

fn shape2(shape: &[usize]) -> Result<[usize; 2]> {
    match *shape {
        [r, c] => Ok([r, c]),
        [n] => Ok([1, n]),
        _ => Err(DiffError::InvalidArgument {
            op: "checkpoint",
            shape: [0, 0],
            msg: format!("unsupported rank {}", shape.len()),
        }),
    }
}

/// Self-describing checkpoint: name, shape and row-major values per tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub seed: u64,
    pub params: Vec<CheckpointEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}
