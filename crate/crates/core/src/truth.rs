//! Truth inference over multi-source claims and the two-phase trainer.
//!
//! A source corrupts a truth `v*` into an observation `v` with probability
//! given by a zero-mean Gaussian over a type-specific difference `d(v, v*)`
//! with scale `k_a * sigma_s`. The probability of an observed claim mixes
//! these confusion probabilities over the candidate truths `V*_{e,a}`,
//! weighted by the fact-scoring plausibility `exp(-F)`.
//!
//! Inside the mixture the Gaussian kernel is normalized over the observed
//! values in `V*`, which keeps every claim probability in `[0, 1]`.

use std::collections::HashMap;
use std::io::Write;
use std::time::{Duration, Instant};

use diffcore::{Graph, Optimizer, ParamId, ParamStore, Tensor, Var};
use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::align::{containment_pairs, train_ll_ann, AlignmentPair, LeAnn, LeReport, LlAnn, LlReport, LlTrainConfig, PairInput};
use crate::config::HyperParams;
use crate::encoder::{Encoder, NeighborSampler};
use crate::error::{Error, Result};
use crate::kgdata::{entity_label, ClaimSet, KnowledgeGraph, Value, ValueType};
use crate::scoring::{group_candidates, sample_candidates, ScoreQuery, Scorer, ValueTable};
use crate::textenc::TextEncoder;

const LOG_FLOOR: f64 = -27.631_021_115_928_547; // ln(1e-12)

/// L1 distance between `v W_e` and `v* W_e`.
pub fn entity_difference(we: &Tensor, v: &[f64], vstar: &[f64]) -> f64 {
    (0..we.cols())
        .map(|c| {
            (0..we.rows())
                .map(|r| (v[r] - vstar[r]) * we.get(r, c))
                .sum::<f64>()
                .abs()
        })
        .sum()
}

pub fn number_difference(v: f64, vstar: f64) -> f64 {
    (v - vstar).abs()
}

/// `1 - LL-ANN(v, v*)`.
pub fn string_difference(ll_prob: f64) -> f64 {
    1.0 - ll_prob
}

/// Density of `N(0, scale^2)` at `d`.
pub fn confusion_density(d: f64, scale: f64) -> f64 {
    (-d * d / (2.0 * scale * scale)).exp() / ((2.0 * std::f64::consts::PI).sqrt() * scale)
}

/// `Pr[v_u | v*_j, s]`: the Gaussian kernel at `diff[u][j]` normalized over
/// the observed values `u`.
pub fn confusion_prob(diff: &[Vec<f64>], u: usize, j: usize, scale: f64) -> f64 {
    let logs: Vec<f64> = diff.iter().map(|row| -row[j] * row[j] / (2.0 * scale * scale)).collect();
    (logs[u] - diffcore::logsumexp(&logs)).exp()
}

/// `Σ_j Pr[v|v*_j,s] Pr[v*_j|e,a] / Σ_j Pr[v*_j|e,a]` with `Pr[v*|e,a] = exp(-F)`.
/// `diff[u][j]` is `d(v_u, v*_j)` over `V*`; `observed` indexes the claim's value.
pub fn observed_value_prob(diff: &[Vec<f64>], observed: usize, scale: f64, scores: &[f64]) -> f64 {
    let prior: Vec<f64> = scores.iter().map(|f| (-f).exp()).collect();
    let total: f64 = prior.iter().sum();
    (0..scores.len())
        .map(|j| confusion_prob(diff, observed, j, scale) * prior[j])
        .sum::<f64>()
        / total
}

/// `-Σ ln max(p, 1e-12)`.
pub fn claim_loss(probs: &[f64]) -> f64 {
    -probs.iter().map(|p| p.max(1e-12).ln()).sum::<f64>()
}

/// One claim inside a group: its index in the claim set, the position of
/// its value in `V*`, and its source.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupClaim {
    pub claim: usize,
    pub observed: usize,
    pub source: usize,
}

/// Claims about one `(entity, attribute)` pair. `values` lists `V*_{e,a}`
/// (scorer value indices, first-seen order).
#[derive(Clone, Debug)]
pub struct Group {
    pub entity: usize,
    pub attribute: usize,
    pub values: Vec<usize>,
    pub claims: Vec<GroupClaim>,
    /// Normalized targets for numeric attributes.
    pub targets: Vec<f64>,
    /// Row-major `d(v_u, v*_j)` when it does not depend on trained weights.
    pub fixed_diff: Option<Tensor>,
}

/// `V*_{e,a}` for every pair with at least one claim, in first-seen order.
pub fn build_ledger(claims: &ClaimSet, scorer: &Scorer) -> Result<Vec<Group>> {
    let mut groups: IndexMap<(usize, usize), Group> = IndexMap::new();
    for (ci, c) in claims.claims.iter().enumerate() {
        let j = scorer
            .value_index(c.attribute, &c.value)
            .ok_or_else(|| Error::Invalid(format!("claim value `{}` missing from the vocabulary", c.value)))?;
        let g = groups.entry((c.entity, c.attribute)).or_insert_with(|| Group {
            entity: c.entity,
            attribute: c.attribute,
            values: Vec::new(),
            claims: Vec::new(),
            targets: Vec::new(),
            fixed_diff: None,
        });
        let pos = match g.values.iter().position(|&v| v == j) {
            Some(p) => p,
            None => {
                g.values.push(j);
                g.values.len() - 1
            }
        };
        g.claims.push(GroupClaim {
            claim: ci,
            observed: pos,
            source: c.source,
        });
    }
    Ok(groups.into_values().collect())
}

/// Truth-inference parameters: raw (pre-softplus) `sigma_s`, `k_a`, and `W_e`.
#[derive(Clone, Debug)]
pub struct TruthParams {
    pub sigma: ParamId,
    pub k: ParamId,
    pub we: ParamId,
}

impl TruthParams {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, hp: &HyperParams, sources: usize, attributes: usize, rng: &mut R) -> Result<Self> {
        // k_a * sigma_s starts at init_noise_scale for every pair.
        let raw = diffcore::softplus_inverse(hp.init_noise_scale.sqrt());
        let sigma = store.add("truth.sigma", Tensor::filled(sources.max(1), 1, raw))?;
        let k = store.add("truth.k", Tensor::filled(attributes.max(1), 1, raw))?;
        // Projected distances start near the numeric scale of [0, 1] residuals.
        let bound = 1.0 / ((hp.d_e as f64).sqrt() * hp.d_de as f64);
        let we = store.add_uniform_bound("truth.we", hp.d_e, hp.d_de, bound, rng)?;
        Ok(Self { sigma, k, we })
    }
}

/// Accepted fact in the output JSON-lines file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub entity: String,
    pub attribute: String,
    pub value_type: String,
    pub value: String,
    pub plausibility: f64,
    pub supporting_sources: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceRecord {
    pub source: String,
    pub sigma: f64,
}

/// Final plausibility of every candidate truth of one group.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupScores {
    pub entity: usize,
    pub attribute: usize,
    pub values: Vec<Value>,
    pub plausibility: Vec<f64>,
    pub sources: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TruthSet {
    pub records: Vec<TruthRecord>,
    /// `(entity, attribute, value)` of every record, by index.
    pub accepted: Vec<(usize, usize, Value)>,
    pub groups: Vec<GroupScores>,
}

impl TruthSet {
    pub fn write_jsonl(&self, mut out: impl Write) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n").map_err(|e| Error::io("<truths>", e))?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)?;
        Ok(String::from_utf8(buf).expect("json is utf-8"))
    }
}

/// Optional inputs of a training run.
#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    /// Labeled pairs for the string alignment network; derived from the
    /// string vocabulary when absent.
    pub align_pairs: Option<Vec<AlignmentPair>>,
}

#[derive(Clone, Debug, Default)]
pub struct TrainReport {
    /// Mean fact loss per phase-1 epoch.
    pub fact_losses: Vec<f64>,
    /// Mean fact and claim losses per phase-2 epoch.
    pub joint_losses: Vec<(f64, f64)>,
    /// String-alignment training before phase 1.
    pub alignment: Duration,
    pub phase1: Duration,
    pub phase2: Duration,
    /// Literal-entity fits after each phase.
    pub le_fit: Duration,
    pub ll: Option<LlReport>,
    pub le: Vec<LeReport>,
}

/// Upper bound on automatically derived alignment pairs; keeps string
/// alignment cheap on large vocabularies.
pub const AUTO_PAIR_CAP: usize = 256;

/// Every learned component plus the vocabularies they index.
#[derive(Clone, Debug)]
pub struct Model {
    pub hp: HyperParams,
    pub store: ParamStore,
    pub encoder: Encoder,
    pub scorer: Scorer,
    pub truth: TruthParams,
    pub le: LeAnn,
    pub ll: Option<LlAnn>,
    pub text: TextEncoder,
    pub sampler: NeighborSampler,
    pub groups: Vec<Group>,
    pub source_names: Vec<String>,
    label_text: Tensor,
}

impl Model {
    pub fn new(kg: &KnowledgeGraph, claims: &ClaimSet, hp: &HyperParams) -> Result<Self> {
        hp.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
        let mut corpus: Vec<String> = kg.entities().map(entity_label).collect();
        for a in 0..kg.num_attributes() {
            corpus.extend(kg.domain(a).iter().filter(|v| v.value_type() == ValueType::String).map(Value::surface));
        }
        corpus.extend(
            claims
                .claims
                .iter()
                .filter(|c| matches!(c.value, Value::String(_) | Value::Entity(_)))
                .map(|c| c.value.surface()),
        );
        let text = TextEncoder::build(&hp.text_encoder, hp.d_txt, hp.seed, corpus.iter().map(String::as_str))?;
        let mut store = ParamStore::new(hp.seed);
        let encoder = Encoder::new(&mut store, hp, kg.num_entities(), &mut rng)?;
        let scorer = Scorer::new(&mut store, hp, kg, claims, &text, &mut rng)?;
        let truth = TruthParams::new(&mut store, hp, claims.num_sources(), kg.num_attributes(), &mut rng)?;
        let le = LeAnn::new(text.dim(), hp.d_le, hp.d_e, hp.seed ^ 0x1e)?;
        let labels: Vec<Vec<f64>> = kg
            .entities()
            .map(|id| text.encode_pooled(&entity_label(id)))
            .collect::<Result<_>>()?;
        let label_text = if labels.is_empty() {
            Tensor::zeros(0, text.dim())
        } else {
            Tensor::from_rows(&labels)?
        };
        let mut groups = build_ledger(claims, &scorer)?;
        for g in &mut groups {
            if scorer.value_types[g.attribute].is_numeric() {
                g.targets = g
                    .values
                    .iter()
                    .map(|&j| scorer.normalize(g.attribute, &scorer.values[g.attribute][j]))
                    .collect::<Result<_>>()?;
                let m = g.values.len();
                let mut d = Tensor::zeros(m * m, 1);
                for u in 0..m {
                    for j in 0..m {
                        d.set(u * m + j, 0, number_difference(g.targets[u], g.targets[j]));
                    }
                }
                g.fixed_diff = Some(d);
            }
        }
        Ok(Self {
            hp: hp.clone(),
            store,
            encoder,
            scorer,
            truth,
            le,
            ll: None,
            text,
            sampler: NeighborSampler::from_kg(kg, hp.neighbors),
            groups,
            source_names: claims.sources().map(str::to_string).collect(),
            label_text,
        })
    }

    /// Total learned parameters across the main store and both alignment networks.
    pub fn param_count(&self) -> usize {
        self.store.total_count() + self.le.param_count() + self.ll.as_ref().map_or(0, LlAnn::param_count)
    }

    /// Learned `k_a * sigma_s` for one pair.
    pub fn noise_scale(&self, attribute: usize, source: usize) -> f64 {
        diffcore::softplus(self.store.value(self.truth.k).get(attribute, 0))
            * diffcore::softplus(self.store.value(self.truth.sigma).get(source, 0))
    }

    /// `sigma_s` after the softplus map.
    pub fn source_sigmas(&self) -> Vec<f64> {
        (0..self.source_names.len())
            .map(|s| diffcore::softplus(self.store.value(self.truth.sigma).get(s, 0)))
            .collect()
    }

    pub fn sources_report(&self) -> Vec<SourceRecord> {
        self.source_names
            .iter()
            .zip(self.source_sigmas())
            .map(|(s, sigma)| SourceRecord {
                source: s.clone(),
                sigma,
            })
            .collect()
    }

    /// Trains the string alignment network and fixes the string differences.
    pub fn prepare_alignment(&mut self, options: &TrainOptions) -> Result<Option<LlReport>> {
        let string_groups: Vec<usize> = (0..self.groups.len())
            .filter(|&i| self.scorer.value_types[self.groups[i].attribute] == ValueType::String)
            .collect();
        if string_groups.is_empty() {
            return Ok(None);
        }
        let pairs = match &options.align_pairs {
            Some(p) => p.clone(),
            None => {
                let mut vocab: Vec<String> = Vec::new();
                for (a, vals) in self.scorer.values.iter().enumerate() {
                    if self.scorer.value_types[a] == ValueType::String {
                        vocab.extend(vals.iter().map(Value::surface));
                    }
                }
                vocab.sort();
                vocab.dedup();
                let mut pairs = containment_pairs(&vocab, self.hp.seed);
                if pairs.len() > AUTO_PAIR_CAP {
                    let mut rng = ChaCha8Rng::seed_from_u64(self.hp.seed ^ 0xa11);
                    pairs.shuffle(&mut rng);
                    pairs.truncate(AUTO_PAIR_CAP);
                }
                pairs
            }
        };
        let has_both = pairs.iter().any(|p| p.label) && pairs.iter().any(|p| !p.label);
        let mut report = None;
        if has_both && pairs.len() >= 5 {
            let cfg = LlTrainConfig {
                d_ll: self.hp.d_ll,
                hidden: self.hp.ll_hidden,
                epochs: self.hp.ll_epochs,
                lr: self.hp.ll_lr,
                batch: self.hp.ll_batch,
                seed: self.hp.seed,
            };
            match train_ll_ann(&pairs, &self.text, &cfg) {
                Ok((net, r)) => {
                    self.ll = Some(net);
                    report = Some(r);
                }
                Err(Error::Invalid(msg)) => log::warn!("string alignment disabled: {msg}"),
                Err(e) => return Err(e),
            }
        } else {
            log::warn!("no labeled string pairs of both classes; distinct strings get difference 1");
        }
        // Distinct strings without a trained network are maximally different.
        let mut inputs = Vec::new();
        let mut slots = Vec::new();
        for &gi in &string_groups {
            let g = &self.groups[gi];
            let vals: Vec<String> = g
                .values
                .iter()
                .map(|&j| self.scorer.values[g.attribute][j].surface())
                .collect();
            let m = vals.len();
            for u in 0..m {
                for j in 0..m {
                    if u != j && self.ll.is_some() {
                        inputs.push(PairInput::encode(&self.text, &vals[u], &vals[j])?);
                        slots.push((gi, u * m + j));
                    }
                }
            }
            let mut d = Tensor::filled(m * m, 1, 1.0);
            for u in 0..m {
                d.set(u * m + u, 0, 0.0);
            }
            self.groups[gi].fixed_diff = Some(d);
        }
        if let Some(ll) = &self.ll {
            let probs = ll.probs(&inputs)?;
            for ((gi, k), p) in slots.into_iter().zip(probs) {
                self.groups[gi]
                    .fixed_diff
                    .as_mut()
                    .expect("set above")
                    .set(k, 0, string_difference(p));
            }
        }
        Ok(report)
    }

    /// Entity representations for one graph, with neighbors sampled from `rng`.
    pub fn encode(&self, g: &mut Graph, rng: &mut ChaCha8Rng) -> Result<Var> {
        let neighbors = self.sampler.sample_all(rng);
        self.encoder.forward(g, &self.store, &neighbors)
    }

    /// Evaluation-mode entity representations under the fixed inference seed.
    pub fn entity_embeddings(&self) -> Result<Tensor> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.hp.seed ^ 0x5eed);
        let neighbors = self.sampler.sample_all(&mut rng);
        self.encoder.encode_all(&self.store, &neighbors)
    }

    /// Fits the literal-entity network on current embeddings and refreshes
    /// the embeddings of unseen entities.
    pub fn refresh_unseen(&mut self) -> Result<LeReport> {
        let targets = self.entity_embeddings()?;
        let report = self
            .le
            .fit(&self.label_text, &targets, self.hp.le_epochs, self.hp.le_lr, self.hp.seed ^ 0x1e)?;
        self.scorer.unseen_rows = self.le.embed(&self.scorer.unseen_text)?;
        Ok(report)
    }

    fn fact_query(&self, kg: &KnowledgeGraph, fact: usize, rng: &mut ChaCha8Rng) -> Result<ScoreQuery> {
        let f = &kg.facts()[fact];
        let a = f.attribute;
        if self.scorer.value_types[a].is_numeric() {
            return Ok(ScoreQuery::Numeric {
                entity: f.entity,
                attribute: a,
                targets: vec![self.scorer.normalize(a, &f.value)?],
            });
        }
        let j = self
            .scorer
            .value_index(a, &f.value)
            .expect("KG values are in the vocabulary");
        Ok(ScoreQuery::Discrete {
            entity: f.entity,
            attribute: a,
            candidates: sample_candidates(self.scorer.values[a].len(), j, self.hp.n_v, rng),
            score: vec![0],
        })
    }

    fn group_query(&self, g: &Group, rng: &mut ChaCha8Rng) -> ScoreQuery {
        if self.scorer.value_types[g.attribute].is_numeric() {
            ScoreQuery::Numeric {
                entity: g.entity,
                attribute: g.attribute,
                targets: g.targets.clone(),
            }
        } else {
            ScoreQuery::Discrete {
                entity: g.entity,
                attribute: g.attribute,
                candidates: group_candidates(self.scorer.values[g.attribute].len(), &g.values, self.hp.n_v, rng),
                score: (0..g.values.len()).collect(),
            }
        }
    }

    fn table(&self, g: &mut Graph, entities: Var, queries: &[ScoreQuery], groups: &[&Group]) -> Result<ValueTable> {
        let mut needed: Vec<(usize, usize)> = queries.iter().flat_map(ScoreQuery::needed).collect();
        for gr in groups {
            needed.extend(gr.values.iter().map(|&j| (gr.attribute, j)));
        }
        self.scorer.table(g, &self.store, entities, &needed)
    }

    /// Summed fact loss of a batch of fact indices.
    pub fn fact_loss(&self, g: &mut Graph, kg: &KnowledgeGraph, facts: &[usize], rng: &mut ChaCha8Rng) -> Result<Var> {
        let entities = self.encode(g, rng)?;
        let queries: Vec<ScoreQuery> = facts.iter().map(|&f| self.fact_query(kg, f, rng)).collect::<Result<_>>()?;
        let table = self.table(g, entities, &queries, &[])?;
        let f = self.scorer.score(g, &self.store, &table, &queries)?;
        Ok(g.sum(f))
    }

    /// Negative log-likelihood of every claim in `groups`, plus each claim's
    /// probability as a column.
    pub fn claim_loss_graph(
        &self,
        g: &mut Graph,
        entities: Var,
        groups: &[&Group],
        rng: &mut ChaCha8Rng,
    ) -> Result<(Var, Var)> {
        let queries: Vec<ScoreQuery> = groups.iter().map(|gr| self.group_query(gr, rng)).collect();
        let table = &self.table(g, entities, &queries, groups)?;
        let f = self.scorer.score(g, &self.store, table, &queries)?;
        let neg_f = g.neg(f);

        let we = g.param(&self.store, self.truth.we);
        let mut diffs = Vec::with_capacity(groups.len());
        let mut d_off = Vec::with_capacity(groups.len());
        let mut q_off = Vec::with_capacity(groups.len());
        let mut q_segs = Vec::with_capacity(groups.len());
        let (mut d_len, mut q_len) = (0, 0);
        for gr in groups {
            let m = gr.values.len();
            let d = match &gr.fixed_diff {
                Some(t) => g.constant(t.clone()),
                None => {
                    let rows: Vec<usize> = gr.values.iter().map(|&j| self.scorer.row(table, gr.attribute, j)).collect();
                    let x = g.gather_rows(table.var, &rows)?;
                    let p = g.matmul(x, we)?;
                    let pw = g.pairwise_l1(p);
                    g.reshape(pw, m * m, 1)?
                }
            };
            diffs.push(d);
            d_off.push(d_len);
            q_off.push(q_len);
            q_segs.push((q_len, q_len + m));
            d_len += m * m;
            q_len += m;
        }
        let d_all = if diffs.len() == 1 { diffs[0] } else { g.concat_rows(&diffs)? };
        let d2 = g.square(d_all);
        let log_prior = g.segment_log_softmax(neg_f, q_segs)?;

        // Per-claim precision term -1 / (2 (k_a sigma_s)^2).
        let (mut a_idx, mut s_idx) = (Vec::new(), Vec::new());
        for gr in groups {
            for c in &gr.claims {
                a_idx.push(gr.attribute);
                s_idx.push(c.source);
            }
        }
        let n_claims = a_idx.len();
        let kp = g.param(&self.store, self.truth.k);
        let sp = g.param(&self.store, self.truth.sigma);
        let k = g.softplus(kp);
        let s = g.softplus(sp);
        let ka = g.gather_rows(k, &a_idx)?;
        let ss = g.gather_rows(s, &s_idx)?;
        let scale = g.mul(ka, ss)?;
        let var = g.square(scale);
        let half = g.constant(Tensor::filled(n_claims, 1, -0.5));
        let w = g.div(half, var)?;

        let (mut idx_d, mut idx_w, mut segs, mut picks, mut idx_q) = (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
        let (mut claim_segs, mut firsts) = (Vec::new(), Vec::new());
        let mut c_idx = 0;
        for (gi, gr) in groups.iter().enumerate() {
            let m = gr.values.len();
            for c in &gr.claims {
                claim_segs.push((picks.len(), picks.len() + m));
                firsts.push(picks.len());
                for j in 0..m {
                    let start = idx_d.len();
                    for u in 0..m {
                        idx_d.push(d_off[gi] + u * m + j);
                        idx_w.push(c_idx);
                    }
                    segs.push((start, start + m));
                    picks.push(start + c.observed);
                    idx_q.push(q_off[gi] + j);
                }
                c_idx += 1;
            }
        }
        let dd = g.gather_rows(d2, &idx_d)?;
        let ww = g.gather_rows(w, &idx_w)?;
        let y = g.mul(dd, ww)?;
        let log_kernel = g.segment_log_softmax(y, segs)?;
        let l = g.gather_rows(log_kernel, &picks)?;
        let q = g.gather_rows(log_prior, &idx_q)?;
        let z = g.add(l, q)?;
        let lz = g.segment_log_softmax(z, claim_segs)?;
        let z0 = g.gather_rows(z, &firsts)?;
        let l0 = g.gather_rows(lz, &firsts)?;
        let lse = g.sub(z0, l0)?;
        let logp = g.clamp_min(lse, LOG_FLOOR);
        let total = g.sum(logp);
        let loss = g.neg(total);
        let probs = g.exp(lse);
        Ok((loss, probs))
    }

    /// Algorithm 1: fact-only epochs, then joint fact and claim epochs.
    pub fn train(&mut self, kg: &KnowledgeGraph, options: &TrainOptions) -> Result<TrainReport> {
        let start = Instant::now();
        let mut report = TrainReport {
            ll: self.prepare_alignment(options)?,
            ..TrainReport::default()
        };
        report.alignment = start.elapsed();
        let mut rng = ChaCha8Rng::seed_from_u64(self.hp.seed ^ 0x7a11);
        let mut opt = self.hp.optimizer.build(self.hp.lr);
        let n_facts = kg.facts().len();
        let mut facts: Vec<usize> = (0..n_facts).collect();
        let batch = self.hp.batch;

        let start = Instant::now();
        for epoch in 1..=self.hp.fact_epochs {
            let snapshot = self.store.clone();
            facts.shuffle(&mut rng);
            let mut total = 0.0;
            for (bi, chunk) in facts.chunks(batch).enumerate() {
                let mut g = Graph::new(true, rng.random());
                let loss = self.fact_loss(&mut g, kg, chunk, &mut rng)?;
                total += g.scalar(loss);
                self.step(&g, loss, opt.as_mut(), &snapshot, "fact", epoch, bi)?;
            }
            let mean = total / n_facts.max(1) as f64;
            log::info!("phase 1 epoch {epoch}: mean fact loss {mean:.5}");
            report.fact_losses.push(mean);
        }
        report.phase1 = start.elapsed();
        let start = Instant::now();
        report.le.push(self.refresh_unseen()?);
        report.le_fit = start.elapsed();

        let start = Instant::now();
        let n_claims: usize = self.groups.iter().map(|g| g.claims.len()).sum();
        let mut order: Vec<usize> = (0..self.groups.len()).collect();
        for epoch in 1..=self.hp.inference_epochs {
            let snapshot = self.store.clone();
            facts.shuffle(&mut rng);
            order.shuffle(&mut rng);
            let mut steps: Vec<Step> = facts.chunks(batch).map(|c| Step::Facts(c.to_vec())).collect();
            let mut current: Vec<usize> = Vec::new();
            let mut size = 0;
            for &gi in &order {
                let n = self.groups[gi].claims.len();
                if size > 0 && size + n > batch {
                    steps.push(Step::Claims(std::mem::take(&mut current)));
                    size = 0;
                }
                current.push(gi);
                size += n;
            }
            if !current.is_empty() {
                steps.push(Step::Claims(current));
            }
            steps.shuffle(&mut rng);
            let (mut fact_total, mut claim_total) = (0.0, 0.0);
            for (bi, step) in steps.iter().enumerate() {
                let mut g = Graph::new(true, rng.random());
                let loss = match step {
                    Step::Facts(chunk) => {
                        let l = self.fact_loss(&mut g, kg, chunk, &mut rng)?;
                        fact_total += g.scalar(l);
                        l
                    }
                    Step::Claims(gis) => {
                        let groups: Vec<&Group> = gis.iter().map(|&i| &self.groups[i]).collect();
                        let entities = self.encode(&mut g, &mut rng)?;
                        let (l, _) = self.claim_loss_graph(&mut g, entities, &groups, &mut rng)?;
                        claim_total += g.scalar(l);
                        l
                    }
                };
                self.step(&g, loss, opt.as_mut(), &snapshot, "joint", epoch, bi)?;
            }
            let means = (fact_total / n_facts.max(1) as f64, claim_total / n_claims.max(1) as f64);
            log::info!("phase 2 epoch {epoch}: mean fact loss {:.5}, mean claim loss {:.5}", means.0, means.1);
            report.joint_losses.push(means);
        }
        report.phase2 = start.elapsed();
        let start = Instant::now();
        report.le.push(self.refresh_unseen()?);
        report.le_fit += start.elapsed();
        Ok(report)
    }

    #[allow(clippy::too_many_arguments)]
    fn step(
        &mut self,
        g: &Graph,
        loss: Var,
        opt: &mut dyn Optimizer,
        snapshot: &ParamStore,
        phase: &'static str,
        epoch: usize,
        batch: usize,
    ) -> Result<()> {
        let outcome = g.backward(loss, &mut self.store).and_then(|_| {
            if self.store.grads_finite() {
                Ok(())
            } else {
                Err(diffcore::DiffError::NonFiniteLoss(f64::NAN))
            }
        });
        if let Err(source) = outcome {
            // Roll back to the last finite state before surfacing the failure.
            self.store = snapshot.clone();
            return Err(Error::Diverged {
                phase,
                epoch,
                batch,
                source,
            });
        }
        opt.step(&mut self.store);
        Ok(())
    }

    /// Plausibility of every candidate truth, computed with frozen weights,
    /// evaluation-mode encoding, and candidate sets seeded per group.
    pub fn score_groups(&self) -> Result<Vec<GroupScores>> {
        let mut g = Graph::inference();
        let mut rng = ChaCha8Rng::seed_from_u64(self.hp.seed ^ 0x5eed);
        let entities = self.encode(&mut g, &mut rng)?;
        let mut queries = Vec::with_capacity(self.groups.len());
        for (i, gr) in self.groups.iter().enumerate() {
            let mut grng = ChaCha8Rng::seed_from_u64(self.hp.seed.wrapping_mul(0x9e37_79b9).wrapping_add(i as u64));
            queries.push(self.group_query(gr, &mut grng));
        }
        let groups: Vec<&Group> = self.groups.iter().collect();
        let table = self.table(&mut g, entities, &queries, &groups)?;
        let f = self.scorer.score(&mut g, &self.store, &table, &queries)?;
        let fv = g.value(f);
        let mut out = Vec::with_capacity(self.groups.len());
        let mut pos = 0;
        for gr in &self.groups {
            let m = gr.values.len();
            let mut sources: Vec<Vec<usize>> = vec![Vec::new(); m];
            for c in &gr.claims {
                if !sources[c.observed].contains(&c.source) {
                    sources[c.observed].push(c.source);
                }
            }
            sources.iter_mut().for_each(|s| s.sort_unstable());
            out.push(GroupScores {
                entity: gr.entity,
                attribute: gr.attribute,
                values: gr.values.iter().map(|&j| self.scorer.values[gr.attribute][j].clone()).collect(),
                plausibility: (0..m).map(|k| (-fv.get(pos + k, 0)).exp()).collect(),
                sources,
            });
            pos += m;
        }
        Ok(out)
    }

    /// Every claimed value whose plausibility clears the threshold.
    pub fn infer(&self, kg: &KnowledgeGraph) -> Result<TruthSet> {
        let groups = self.score_groups()?;
        let mut records = Vec::new();
        let mut accepted = Vec::new();
        for gs in &groups {
            let spec = kg.attribute(gs.attribute);
            for (k, v) in gs.values.iter().enumerate() {
                if gs.plausibility[k] > self.hp.threshold {
                    accepted.push((gs.entity, gs.attribute, v.clone()));
                    records.push(TruthRecord {
                        entity: kg.entity_name(gs.entity).to_string(),
                        attribute: spec.name.clone(),
                        value_type: spec.value_type.to_string(),
                        value: v.payload(),
                        plausibility: gs.plausibility[k],
                        supporting_sources: gs.sources[k].iter().map(|&s| self.source_names[s].clone()).collect(),
                    });
                }
            }
        }
        Ok(TruthSet {
            records,
            accepted,
            groups,
        })
    }

    /// Plausibility of one claimed value under the final model.
    pub fn rescore(&self, entity: usize, attribute: usize, value: &Value) -> Result<f64> {
        let scores = self.score_groups()?;
        scores
            .iter()
            .find(|g| g.entity == entity && g.attribute == attribute)
            .and_then(|g| g.values.iter().position(|v| v == value).map(|k| g.plausibility[k]))
            .ok_or_else(|| Error::Invalid(format!("({entity}, {attribute}, {value}) is not a claimed value")))
    }

    /// Per-claim probabilities from the graph path (frozen weights).
    pub fn claim_probabilities(&self) -> Result<HashMap<usize, f64>> {
        let mut g = Graph::inference();
        let mut rng = ChaCha8Rng::seed_from_u64(self.hp.seed ^ 0x5eed);
        let entities = self.encode(&mut g, &mut rng)?;
        let groups: Vec<&Group> = self.groups.iter().collect();
        let mut out = HashMap::new();
        if groups.is_empty() {
            return Ok(out);
        }
        let (_, probs) = self.claim_loss_graph(&mut g, entities, &groups, &mut rng)?;
        let pv = g.value(probs);
        let mut i = 0;
        for gr in &groups {
            for c in &gr.claims {
                out.insert(c.claim, pv.get(i, 0));
                i += 1;
            }
        }
        Ok(out)
    }
}

enum Step {
    Facts(Vec<usize>),
    Claims(Vec<usize>),
}

/// Builds, trains and applies a model in one call.
pub fn run_semi_supervised(
    kg: &KnowledgeGraph,
    claims: &ClaimSet,
    hp: &HyperParams,
    options: &TrainOptions,
) -> Result<(Model, TruthSet, TrainReport)> {
    let mut model = Model::new(kg, claims, hp)?;
    let report = model.train(kg, options)?;
    let truths = model.infer(kg)?;
    Ok((model, truths, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn difference_examples() {
        assert_eq!(number_difference(0.4, 0.4), 0.0);
        assert!((string_difference(0.8) - 0.2).abs() < 1e-15);
        let we = Tensor::from_rows(&[vec![1.0, 2.0], vec![0.5, -1.0]]).unwrap();
        assert_eq!(entity_difference(&we, &[0.3, 0.1], &[0.3, 0.1]), 0.0);
        // (v - v*) = [1, 1] -> [1.5, 1.0]
        assert_eq!(entity_difference(&we, &[1.0, 1.0], &[0.0, 0.0]), 2.5);
    }

    #[test]
    fn density_mode_and_scaling() {
        let s = 0.3;
        let mode = confusion_density(0.0, s);
        assert!((mode - 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * s)).abs() < 1e-15);
        assert!((confusion_density(0.0, 2.0 * s) - mode / 2.0).abs() < 1e-15);
        assert_eq!(confusion_density(0.2, s), confusion_density(-0.2, s));
    }

    #[test]
    fn single_candidate_probability_is_the_confusion_term() {
        let p = observed_value_prob(&[vec![0.0]], 0, 0.3, &[0.7]);
        assert_eq!(p, confusion_prob(&[vec![0.0]], 0, 0, 0.3));
        assert_eq!(p, 1.0);
    }

    #[test]
    fn uniform_prior_gives_the_mean_confusion() {
        let d = vec![vec![0.0, 0.4, 0.9], vec![0.4, 0.0, 0.2], vec![0.9, 0.2, 0.0]];
        let p = observed_value_prob(&d, 1, 0.5, &[0.3, 0.3, 0.3]);
        let mean = (0..3).map(|j| confusion_prob(&d, 1, j, 0.5)).sum::<f64>() / 3.0;
        assert!((p - mean).abs() < 1e-15);
    }

    #[test]
    fn claim_loss_examples() {
        assert_eq!(claim_loss(&[1.0]), 0.0);
        assert!((claim_loss(&[(-1.0f64).exp()]) - 1.0).abs() < 1e-15);
        assert!((claim_loss(&[0.0]) - 1e-12f64.ln().abs()).abs() < 1e-9);
        let (a, b) = ([0.3, 0.9], [0.5]);
        assert!((claim_loss(&[0.3, 0.9, 0.5]) - claim_loss(&a) - claim_loss(&b)).abs() < 1e-12);
    }
}
