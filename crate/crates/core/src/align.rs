//! Value alignment networks.
//!
//! `LlAnn` estimates whether string `v` infers string `v'` (asymmetric):
//! tokens of `v` attend over `v'`, difference and similarity signals each
//! run through a bidirectional LSTM, and an MLP combines the two final
//! states. `LeAnn` maps a surface string into entity-representation space so
//! values naming entities outside the KG can still be scored.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use diffcore::{Adam, Graph, Optimizer, ParamId, ParamStore, Tensor, Var};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::textenc::{cosine, TextEncoder};

/// `att_i = Σ_j cos(w_i, w'_j) w'_j`.
pub fn attend(w: &[Vec<f64>], w2: &[Vec<f64>]) -> Vec<Vec<f64>> {
    w.iter()
        .map(|wi| {
            let mut out = vec![0.0; wi.len()];
            for wj in w2 {
                let c = cosine(wi, wj);
                for (o, x) in out.iter_mut().zip(wj) {
                    *o += c * x;
                }
            }
            out
        })
        .collect()
}

/// Labeled direction: `label` is true when `v` infers `v2`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AlignmentPair {
    pub v: String,
    pub v2: String,
    pub label: bool,
}

/// Reads `v <TAB> v' <TAB> {0|1}`.
pub fn load_pairs(path: impl AsRef<Path>) -> Result<Vec<AlignmentPair>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let bad = |msg: &str| Error::Parse {
            path: path.into(),
            line: i + 1,
            msg: msg.to_string(),
        };
        if cols.len() != 3 {
            return Err(bad("expected `v<TAB>v'<TAB>label`"));
        }
        let label = match cols[2].trim() {
            "1" => true,
            "0" => false,
            _ => return Err(bad("label must be 0 or 1")),
        };
        out.push(AlignmentPair {
            v: cols[0].trim().to_string(),
            v2: cols[1].trim().to_string(),
            label,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug)]
struct Lstm {
    wx: ParamId,
    wh: ParamId,
    b: ParamId,
}

impl Lstm {
    fn new(store: &mut ParamStore, name: &str, d_in: usize, d_h: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(Self {
            wx: store.add_uniform(format!("{name}.wx"), d_in, 4 * d_h, d_h, rng)?,
            wh: store.add_uniform(format!("{name}.wh"), d_h, 4 * d_h, d_h, rng)?,
            b: store.add_uniform(format!("{name}.b"), 1, 4 * d_h, d_h, rng)?,
        })
    }

    /// Final hidden state after consuming `steps` in order.
    fn run(&self, g: &mut Graph, store: &ParamStore, steps: &[Var], d_h: usize) -> Result<Var> {
        let batch = g.shape(steps[0])[0];
        let (wx, wh, b) = (g.param(store, self.wx), g.param(store, self.wh), g.param(store, self.b));
        let mut h = g.constant(Tensor::zeros(batch, d_h));
        let mut c = g.constant(Tensor::zeros(batch, d_h));
        for &x in steps {
            (h, c) = g.lstm_cell(x, h, c, wx, wh, b)?;
        }
        Ok(h)
    }
}

#[derive(Clone, Debug)]
struct BiLstm {
    fw: Lstm,
    bw: Lstm,
}

impl BiLstm {
    fn run(&self, g: &mut Graph, store: &ParamStore, steps: &[Var], d_h: usize) -> Result<Var> {
        let f = self.fw.run(g, store, steps, d_h)?;
        let rev: Vec<Var> = steps.iter().rev().copied().collect();
        let b = self.bw.run(g, store, &rev, d_h)?;
        Ok(g.concat_cols(&[f, b])?)
    }
}

/// Token matrices of one `(v, v')` pair.
#[derive(Clone, Debug)]
pub struct PairInput {
    pub w: Tensor,
    pub w2: Tensor,
}

impl PairInput {
    pub fn encode(text: &TextEncoder, v: &str, v2: &str) -> Result<Self> {
        let a = text.encode_tokens(v)?;
        let b = text.encode_tokens(v2)?;
        Ok(Self {
            w: Tensor::from_rows(&a.vectors)?,
            w2: Tensor::from_rows(&b.vectors)?,
        })
    }
}

#[derive(Clone, Debug)]
pub struct LlAnn {
    pub store: ParamStore,
    pub d_ll: usize,
    diff: BiLstm,
    sim: BiLstm,
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

impl LlAnn {
    pub fn new(d_txt: usize, d_ll: usize, hidden: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new(seed);
        let mut bi = |store: &mut ParamStore, name: &str| -> Result<BiLstm> {
            Ok(BiLstm {
                fw: Lstm::new(store, &format!("ll.{name}.fw"), d_txt, d_ll, &mut rng)?,
                bw: Lstm::new(store, &format!("ll.{name}.bw"), d_txt, d_ll, &mut rng)?,
            })
        };
        let diff = bi(&mut store, "diff")?;
        let sim = bi(&mut store, "sim")?;
        let w1 = store.add_uniform("ll.mlp.w1", 4 * d_ll, hidden, 4 * d_ll, &mut rng)?;
        let b1 = store.add_uniform("ll.mlp.b1", 1, hidden, 4 * d_ll, &mut rng)?;
        let w2 = store.add_uniform("ll.mlp.w2", hidden, 1, hidden, &mut rng)?;
        let b2 = store.add_uniform("ll.mlp.b2", 1, 1, hidden, &mut rng)?;
        Ok(Self {
            store,
            d_ll,
            diff,
            sim,
            w1,
            b1,
            w2,
            b2,
        })
    }

    /// Logits (`B x 1`) for pairs whose first strings share one token count.
    pub fn logits(&self, g: &mut Graph, pairs: &[&PairInput]) -> Result<Var> {
        let l = pairs[0].w.rows();
        if pairs.iter().any(|p| p.w.rows() != l) {
            return Err(Error::Invalid("batched pairs must share the length of v".into()));
        }
        let store = &self.store;
        let mut diffs = Vec::with_capacity(pairs.len());
        let mut sims = Vec::with_capacity(pairs.len());
        for p in pairs {
            let w = g.constant(p.w.clone());
            let w2 = g.constant(p.w2.clone());
            let cos = g.cosine_similarity(w, w2)?;
            let att = g.matmul(cos, w2)?;
            diffs.push(g.sub(w, att)?);
            let s = g.add(w, att)?;
            sims.push(g.scale(s, 0.5));
        }
        let diff_all = g.concat_rows(&diffs)?;
        let sim_all = g.concat_rows(&sims)?;
        let mut diff_steps = Vec::with_capacity(l);
        let mut sim_steps = Vec::with_capacity(l);
        for t in 0..l {
            let idx: Vec<usize> = (0..pairs.len()).map(|b| b * l + t).collect();
            diff_steps.push(g.gather_rows(diff_all, &idx)?);
            sim_steps.push(g.gather_rows(sim_all, &idx)?);
        }
        let sim = self.sim.run(g, store, &sim_steps, self.d_ll)?;
        let diff = self.diff.run(g, store, &diff_steps, self.d_ll)?;
        let x = g.concat_cols(&[sim, diff])?;
        let w1 = g.param(store, self.w1);
        let b1 = g.param(store, self.b1);
        let h = g.matmul(x, w1)?;
        let h = g.add(h, b1)?;
        let h = g.tanh(h);
        let w2 = g.param(store, self.w2);
        let b2 = g.param(store, self.b2);
        let z = g.matmul(h, w2)?;
        Ok(g.add(z, b2)?)
    }

    /// Probabilities for arbitrary pairs, batched by the length of `v`.
    pub fn probs(&self, inputs: &[PairInput]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; inputs.len()];
        for idx in by_length(inputs).into_values() {
            for chunk in idx.chunks(256) {
                let mut g = Graph::inference();
                let batch: Vec<&PairInput> = chunk.iter().map(|&i| &inputs[i]).collect();
                let z = self.logits(&mut g, &batch)?;
                for (k, &i) in chunk.iter().enumerate() {
                    out[i] = diffcore::sigmoid(g.value(z).get(k, 0));
                }
            }
        }
        Ok(out)
    }

    /// `LL-ANN(v, v')`.
    pub fn prob(&self, text: &TextEncoder, v: &str, v2: &str) -> Result<f64> {
        Ok(self.probs(&[PairInput::encode(text, v, v2)?])?[0])
    }

    pub fn param_count(&self) -> usize {
        self.store.total_count()
    }
}

fn by_length(inputs: &[PairInput]) -> BTreeMap<usize, Vec<usize>> {
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, p) in inputs.iter().enumerate() {
        groups.entry(p.w.rows()).or_default().push(i);
    }
    groups
}

#[derive(Clone, Debug)]
pub struct LlTrainConfig {
    pub d_ll: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LlReport {
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
    pub best_epoch: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    /// Indices into the input pairs that formed the held-out test split.
    pub test_pairs: Vec<usize>,
}

pub fn accuracy(probs: &[f64], labels: &[bool]) -> f64 {
    if probs.is_empty() {
        return 0.0;
    }
    let hits = probs
        .iter()
        .zip(labels)
        .filter(|(p, &l)| (**p > 0.5) == l)
        .count();
    hits as f64 / probs.len() as f64
}

/// Splits 3:1:1 after a seeded shuffle, minimizes binary cross-entropy on
/// the first part, and keeps the weights with the best validation accuracy
/// (ties go to lower validation loss).
pub fn train_ll_ann(pairs: &[AlignmentPair], text: &TextEncoder, cfg: &LlTrainConfig) -> Result<(LlAnn, LlReport)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut rng);
    let n_train = (pairs.len() * 3).div_ceil(5);
    let n_val = pairs.len().saturating_sub(n_train) / 2;
    let train_idx = &order[..n_train];
    let val_idx = &order[n_train..n_train + n_val];
    let test_idx = &order[n_train + n_val..];
    let positives = train_idx.iter().filter(|&&i| pairs[i].label).count();
    if positives == 0 || positives == train_idx.len() {
        return Err(Error::Invalid(
            "alignment training split needs both positive and negative pairs".into(),
        ));
    }
    let inputs: Vec<PairInput> = pairs
        .iter()
        .map(|p| PairInput::encode(text, &p.v, &p.v2))
        .collect::<Result<_>>()?;
    let labels: Vec<bool> = pairs.iter().map(|p| p.label).collect();
    let subset = |idx: &[usize]| -> (Vec<PairInput>, Vec<bool>) {
        (
            idx.iter().map(|&i| inputs[i].clone()).collect(),
            idx.iter().map(|&i| labels[i]).collect(),
        )
    };
    let (train_x, train_y) = subset(train_idx);
    let (val_x, val_y) = subset(val_idx);
    let (test_x, test_y) = subset(test_idx);

    let mut net = LlAnn::new(text.dim(), cfg.d_ll, cfg.hidden, cfg.seed)?;
    let mut opt = Adam::new(cfg.lr);
    let eval = |net: &LlAnn, x: &[PairInput], y: &[bool]| -> Result<(f64, f64)> {
        if x.is_empty() {
            return Ok((0.0, 0.0));
        }
        let p = net.probs(x)?;
        let loss = p
            .iter()
            .zip(y)
            .map(|(p, &l)| -(if l { *p } else { 1.0 - p }).max(1e-12).ln())
            .sum::<f64>()
            / p.len() as f64;
        Ok((accuracy(&p, y), loss))
    };
    // Without a validation split the final epoch is kept.
    let mut best = (f64::NEG_INFINITY, f64::INFINITY);
    let mut best_store = net.store.clone();
    let mut best_epoch = 0;
    let groups = by_length(&train_x);
    for epoch in 1..=cfg.epochs {
        let mut batches: Vec<Vec<usize>> = Vec::new();
        for idx in groups.values() {
            let mut idx = idx.clone();
            idx.shuffle(&mut rng);
            batches.extend(idx.chunks(cfg.batch.max(1)).map(<[usize]>::to_vec));
        }
        batches.shuffle(&mut rng);
        for b in &batches {
            let mut g = Graph::new(true, rng.random());
            let batch: Vec<&PairInput> = b.iter().map(|&i| &train_x[i]).collect();
            let z = net.logits(&mut g, &batch)?;
            let y: Vec<f64> = b.iter().map(|&i| if train_y[i] { 1.0 } else { 0.0 }).collect();
            let loss = bce_with_logits(&mut g, z, &y)?;
            g.backward(loss, &mut net.store)?;
            opt.step(&mut net.store);
        }
        let score = if val_x.is_empty() {
            (epoch as f64, 0.0)
        } else {
            eval(&net, &val_x, &val_y)?
        };
        if score.0 > best.0 || (score.0 == best.0 && score.1 < best.1) {
            best = score;
            best_store = net.store.clone();
            best_epoch = epoch;
        }
        log::debug!("ll-ann epoch {epoch}: val acc {:.3} loss {:.4}", score.0, score.1);
    }
    net.store = best_store;
    let report = LlReport {
        train_accuracy: eval(&net, &train_x, &train_y)?.0,
        val_accuracy: eval(&net, &val_x, &val_y)?.0,
        test_accuracy: eval(&net, &test_x, &test_y)?.0,
        best_epoch,
        train: train_x.len(),
        val: val_x.len(),
        test: test_x.len(),
        test_pairs: test_idx.to_vec(),
    };
    Ok((net, report))
}

/// Mean of `y softplus(-z) + (1-y) softplus(z)`.
pub fn bce_with_logits(g: &mut Graph, z: Var, y: &[f64]) -> Result<Var> {
    let n = y.len() as f64;
    let yt = g.constant(Tensor::column(y));
    let ny = g.constant(Tensor::column(&y.iter().map(|v| 1.0 - v).collect::<Vec<_>>()));
    let neg = g.neg(z);
    let sp_neg = g.softplus(neg);
    let sp_pos = g.softplus(z);
    let a = g.mul(yt, sp_neg)?;
    let b = g.mul(ny, sp_pos)?;
    let s = g.add(a, b)?;
    let s = g.sum(s);
    Ok(g.scale(s, 1.0 / n))
}

/// Auto-labeled containment pairs from a string vocabulary: a multi-token
/// string infers each of its single tokens and every proper token prefix
/// or suffix; the reverse direction and unrelated pairs are negatives.
pub fn containment_pairs(values: &[String], seed: u64) -> Vec<AlignmentPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for v in values {
        let toks: Vec<&str> = v.split_whitespace().collect();
        if toks.len() < 2 {
            continue;
        }
        let mut parts: Vec<String> = Vec::new();
        for k in 1..toks.len() {
            parts.push(toks[..k].join(" "));
            parts.push(toks[k..].join(" "));
        }
        for p in parts {
            if seen.insert((v.clone(), p.clone())) {
                out.push(AlignmentPair {
                    v: v.clone(),
                    v2: p.clone(),
                    label: true,
                });
                out.push(AlignmentPair {
                    v: p,
                    v2: v.clone(),
                    label: false,
                });
            }
        }
    }
    let positives = out.len() / 2;
    if values.len() >= 2 {
        for _ in 0..positives / 2 {
            let a = values.choose(&mut rng).expect("non-empty");
            let b = values.choose(&mut rng).expect("non-empty");
            let shared = a.split_whitespace().any(|t| b.split_whitespace().any(|u| u == t));
            if !shared {
                out.push(AlignmentPair {
                    v: a.clone(),
                    v2: b.clone(),
                    label: false,
                });
            }
        }
    }
    out
}

/// Two-layer sigmoid perceptron `d_txt -> d_le -> d_e`.
#[derive(Clone, Debug)]
pub struct LeAnn {
    pub store: ParamStore,
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LeReport {
    pub train_loss: f64,
    pub heldout_loss: f64,
    pub best_epoch: usize,
    pub train: usize,
    pub heldout: usize,
}

impl LeAnn {
    pub fn new(d_txt: usize, d_le: usize, d_e: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new(seed);
        let w1 = store.add_uniform("le.w1", d_txt, d_le, d_txt, &mut rng)?;
        let b1 = store.add_uniform("le.b1", 1, d_le, d_txt, &mut rng)?;
        let w2 = store.add_uniform("le.w2", d_le, d_e, d_le, &mut rng)?;
        let b2 = store.add_uniform("le.b2", 1, d_e, d_le, &mut rng)?;
        Ok(Self { store, w1, b1, w2, b2 })
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let s = &self.store;
        let (w1, b1, w2, b2) = (g.param(s, self.w1), g.param(s, self.b1), g.param(s, self.w2), g.param(s, self.b2));
        let h = g.matmul(x, w1)?;
        let h = g.add(h, b1)?;
        let h = g.sigmoid(h);
        let o = g.matmul(h, w2)?;
        let o = g.add(o, b2)?;
        Ok(g.sigmoid(o))
    }

    /// Rows of `texts` (pooled vectors) mapped into entity space.
    pub fn embed(&self, texts: &Tensor) -> Result<Tensor> {
        if texts.rows() == 0 {
            let d_e = self.store.value(self.w2).cols();
            return Ok(Tensor::zeros(0, d_e));
        }
        let mut g = Graph::inference();
        let x = g.constant(texts.clone());
        let o = self.forward(&mut g, x)?;
        Ok(g.value(o).clone())
    }

    pub fn embed_text(&self, text: &TextEncoder, v: &str) -> Result<Vec<f64>> {
        let x = Tensor::row(&text.encode_pooled(v)?);
        Ok(self.embed(&x)?.row_slice(0).to_vec())
    }

    /// Regresses `texts -> targets` under mean L1 loss with Adam. A tenth of
    /// the rows (at least one when there are ten or more) is held out; the
    /// weights with the lowest held-out loss are kept.
    pub fn fit(&mut self, texts: &Tensor, targets: &Tensor, epochs: usize, lr: f64, seed: u64) -> Result<LeReport> {
        let n = texts.rows();
        if n == 0 {
            return Ok(LeReport {
                train_loss: 0.0,
                heldout_loss: 0.0,
                best_epoch: 0,
                train: 0,
                heldout: 0,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let n_hold = if n >= 10 { n / 10 } else { 0 };
        let (hold, train) = order.split_at(n_hold);
        let gather = |t: &Tensor, idx: &[usize]| -> Result<Tensor> {
            Ok(Tensor::from_rows(&idx.iter().map(|&i| t.row_slice(i).to_vec()).collect::<Vec<_>>())?)
        };
        let (hx, hy) = if hold.is_empty() {
            (None, None)
        } else {
            (Some(gather(texts, hold)?), Some(gather(targets, hold)?))
        };
        let mut opt = Adam::new(lr);
        let mut train = train.to_vec();
        let mut best = (f64::INFINITY, self.store.clone(), 0);
        for epoch in 1..=epochs {
            train.shuffle(&mut rng);
            for chunk in train.chunks(128) {
                let mut g = Graph::new(true, seed);
                let x = g.constant(gather(texts, chunk)?);
                let y = g.constant(gather(targets, chunk)?);
                let o = self.forward(&mut g, x)?;
                let loss = l1_loss(&mut g, o, y)?;
                g.backward(loss, &mut self.store)?;
                opt.step(&mut self.store);
            }
            let score = match (&hx, &hy) {
                (Some(x), Some(y)) => self.loss(x, y)?,
                _ => self.loss(&gather(texts, &train)?, &gather(targets, &train)?)?,
            };
            if score < best.0 {
                best = (score, self.store.clone(), epoch);
            }
        }
        if best.2 > 0 {
            self.store = best.1;
        }
        Ok(LeReport {
            train_loss: self.loss(&gather(texts, &train)?, &gather(targets, &train)?)?,
            heldout_loss: match (&hx, &hy) {
                (Some(x), Some(y)) => self.loss(x, y)?,
                _ => 0.0,
            },
            best_epoch: best.2,
            train: train.len(),
            heldout: hold.len(),
        })
    }

    /// Mean per-row L1 distance.
    pub fn loss(&self, texts: &Tensor, targets: &Tensor) -> Result<f64> {
        let o = self.embed(texts)?;
        Ok(o.data()
            .iter()
            .zip(targets.data())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / texts.rows().max(1) as f64)
    }

    pub fn param_count(&self) -> usize {
        self.store.total_count()
    }
}

fn l1_loss(g: &mut Graph, o: Var, y: Var) -> Result<Var> {
    let rows = g.shape(o)[0] as f64;
    let d = g.sub(o, y)?;
    let d = g.abs(d);
    let s = g.sum(d);
    Ok(g.scale(s, 1.0 / rows))
}

/// `exp(-||LE-ANN(v) - e||_1)`.
pub fn le_align_prob(le: &[f64], e: &[f64]) -> f64 {
    (-le.iter().zip(e).map(|(a, b)| (a - b).abs()).sum::<f64>()).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn attend_shapes_and_single_token() {
        let w = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]];
        let u = vec![vec![2.0, 0.0]];
        let att = attend(&w, &u);
        assert_eq!(att.len(), 3);
        assert_eq!(att[0], vec![2.0, 0.0]);
        assert_eq!(att[1], vec![0.0, 0.0]);
        let c = 1.0 / 2f64.sqrt();
        assert!((att[2][0] - 2.0 * c).abs() < 1e-15);
        let long: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, 1.0]).collect();
        assert_eq!(attend(&w, &long).len(), 3);
    }

    #[test]
    fn le_align_prob_examples() {
        assert_eq!(le_align_prob(&[0.2, 0.3], &[0.2, 0.3]), 1.0);
        assert!((le_align_prob(&[0.0, 1.0], &[0.5, 0.0]) - (-1.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn ll_ann_outputs_probabilities_and_is_not_symmetric() {
        let text = TextEncoder::hash(16);
        let net = LlAnn::new(16, 8, 8, 3).unwrap();
        let a = net.prob(&text, "pop rock", "pop").unwrap();
        let b = net.prob(&text, "pop", "pop rock").unwrap();
        assert!((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b));
        assert_ne!(a, b);
    }

    #[test]
    fn batched_and_single_probabilities_agree() {
        let text = TextEncoder::hash(16);
        let net = LlAnn::new(16, 8, 8, 5).unwrap();
        let pairs = [("a b", "a"), ("c d", "d e f"), ("x", "x y")];
        let inputs: Vec<PairInput> = pairs
            .iter()
            .map(|(a, b)| PairInput::encode(&text, a, b).unwrap())
            .collect();
        let batch = net.probs(&inputs).unwrap();
        for ((a, b), p) in pairs.iter().zip(batch) {
            assert!((net.prob(&text, a, b).unwrap() - p).abs() < 1e-12);
        }
    }

    #[test]
    fn single_class_training_is_rejected() {
        let pairs = vec![
            AlignmentPair {
                v: "a b".into(),
                v2: "a".into(),
                label: true,
            };
            5
        ];
        let cfg = LlTrainConfig {
            d_ll: 4,
            hidden: 4,
            epochs: 1,
            lr: 0.01,
            batch: 8,
            seed: 0,
        };
        assert!(train_ll_ann(&pairs, &TextEncoder::hash(8), &cfg).is_err());
    }

    #[test]
    fn containment_pairs_are_directional() {
        let pairs = containment_pairs(&["pop rock".into(), "folk".into()], 1);
        assert!(pairs.contains(&AlignmentPair {
            v: "pop rock".into(),
            v2: "pop".into(),
            label: true
        }));
        assert!(pairs.contains(&AlignmentPair {
            v: "pop".into(),
            v2: "pop rock".into(),
            label: false
        }));
    }

    #[test]
    fn le_ann_output_is_a_function_of_text() {
        let text = TextEncoder::hash(16);
        let le = LeAnn::new(16, 8, 6, 1).unwrap();
        let a = le.embed_text(&text, "the band").unwrap();
        assert_eq!(a.len(), 6);
        assert_eq!(a, le.embed_text(&text, "the band").unwrap());
        assert!(a.iter().all(|x| *x > 0.0 && *x < 1.0));
    }
}
