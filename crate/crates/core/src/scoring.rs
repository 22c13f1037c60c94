//! Holistic fact scoring.
//!
//! Discrete values (entities, categories, strings) are scored with a
//! class-weighted softmax cross-entropy over a sampled candidate set;
//! numbers and datetimes with an L1 regression residual, taking the best of
//! `k` output branches for a `k`-valued attribute. Scores are losses:
//! `F >= 0` and plausibility is `exp(-F)`.

use std::collections::HashMap;

use diffcore::{Graph, ParamId, ParamStore, Tensor, Var};
use indexmap::IndexSet;
use rand::seq::index::sample;
use rand::Rng;

use crate::config::HyperParams;
use crate::error::{Error, Result};
use crate::kgdata::{norm_in_range, ClaimSet, KnowledgeGraph, Value, ValueType};
use crate::textenc::TextEncoder;

/// Normalized class weights `λ_j = λ'_j / Σ λ'` with `λ' = 1 / ln(1 + offset + count)`.
///
/// With `offset = 0` a zero count is singular; callers use `offset >= 1`
/// whenever unseen values may appear.
pub fn class_weights(counts: &[f64], offset: f64) -> Vec<f64> {
    let raw: Vec<f64> = counts
        .iter()
        .map(|&c| 1.0 / (1.0 + offset + c).ln())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|w| w / total).collect()
}

/// `-λ · log softmax(logits)[target]`.
pub fn relational_score(logits: &[f64], target: usize, lambda: f64) -> f64 {
    -lambda * (logits[target] - diffcore::logsumexp(logits))
}

/// `min_i |pred_i - target|`.
pub fn literal_score(preds: &[f64], target: f64) -> f64 {
    preds
        .iter()
        .map(|p| (p - target).abs())
        .fold(f64::INFINITY, f64::min)
}

pub fn plausibility(score: f64) -> f64 {
    (-score).exp()
}

/// `k` distinct indices from `0..n` avoiding the sorted `exclude` list.
pub fn sample_excluding<R: Rng + ?Sized>(n: usize, exclude: &[usize], k: usize, rng: &mut R) -> Vec<usize> {
    let excl: Vec<usize> = exclude.iter().copied().filter(|&x| x < n).collect();
    let pool = n - excl.len();
    let k = k.min(pool);
    let mut out: Vec<usize> = sample(rng, pool, k)
        .into_iter()
        .map(|mut i| {
            // Shift past excluded indices at or below the draw.
            for &x in &excl {
                if x <= i {
                    i += 1;
                } else {
                    break;
                }
            }
            i
        })
        .collect();
    out.shrink_to_fit();
    out
}

/// `V'_a`: the target value first, then other domain values up to `n_v`
/// in total. Domain values occupy indices `0..domain_len`; a target outside
/// that range is a claim-only value.
pub fn sample_candidates<R: Rng + ?Sized>(domain_len: usize, target: usize, n_v: usize, rng: &mut R) -> Vec<usize> {
    group_candidates(domain_len, &[target], n_v, rng)
}

/// Candidates for a set of observed values: all of `observed`, then domain
/// samples not already present, up to `n_v` in total.
pub fn group_candidates<R: Rng + ?Sized>(
    domain_len: usize,
    observed: &[usize],
    n_v: usize,
    rng: &mut R,
) -> Vec<usize> {
    let mut excl: Vec<usize> = observed.to_vec();
    excl.sort_unstable();
    excl.dedup();
    let extra = n_v.saturating_sub(observed.len());
    let mut out = observed.to_vec();
    out.extend(sample_excluding(domain_len, &excl, extra, rng));
    out
}

/// Where the embedding of an attribute value comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ValueSource {
    Entity(usize),
    Unseen(usize),
    Category(usize),
    String(usize),
}

#[derive(Clone, Debug)]
pub enum AttrParams {
    /// Softmax classifier `W_a`, plus a category table for category attributes.
    Discrete { w: ParamId, categories: Option<ParamId> },
    /// Regression branches `A_a: d_e x k`, `b_a: 1 x k`.
    Numeric { a: ParamId, b: ParamId },
}

/// Learnable scoring parameters plus the per-attribute value vocabulary.
#[derive(Clone, Debug)]
pub struct Scorer {
    pub value_types: Vec<ValueType>,
    pub params: Vec<AttrParams>,
    /// Values per attribute: the KG domain first, then claim-only values.
    pub values: Vec<IndexSet<Value>>,
    pub domain_len: Vec<usize>,
    /// Entities holding each value in the KG (0 for claim-only values).
    pub counts: Vec<Vec<usize>>,
    pub sources: Vec<Vec<ValueSource>>,
    /// Raw min/max per numeric attribute; falls back to claim values when the KG has none.
    pub ranges: Vec<Option<(f64, f64)>>,
    pub string_proj: Option<ParamId>,
    pub string_text: Tensor,
    pub unseen: IndexSet<String>,
    pub unseen_text: Tensor,
    /// Current embeddings of unseen entities (refreshed from the literal-entity network).
    pub unseen_rows: Tensor,
    pub offset: f64,
    pub d_e: usize,
}

impl Scorer {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        hp: &HyperParams,
        kg: &KnowledgeGraph,
        claims: &ClaimSet,
        text: &TextEncoder,
        rng: &mut R,
    ) -> Result<Self> {
        let d_e = hp.d_e;
        let n_attr = kg.num_attributes();
        let mut values: Vec<IndexSet<Value>> = (0..n_attr).map(|a| kg.domain(a).clone()).collect();
        let domain_len: Vec<usize> = values.iter().map(IndexSet::len).collect();
        for c in &claims.claims {
            values[c.attribute].insert(c.value.clone());
        }
        let mut counts = Vec::with_capacity(n_attr);
        for (a, vals) in values.iter().enumerate() {
            let kc = kg.value_counts(a);
            counts.push(vals.iter().map(|v| kc.get(v).copied().unwrap_or(0)).collect());
        }
        let mut ranges = Vec::with_capacity(n_attr);
        for (a, vals) in values.iter().enumerate() {
            let r = kg.range(a).or_else(|| {
                let xs: Vec<f64> = vals.iter().filter_map(Value::raw_number).collect();
                let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (hi > lo).then_some((lo, hi))
            });
            ranges.push(r);
        }

        let mut unseen = IndexSet::new();
        let mut strings: Vec<String> = Vec::new();
        let mut sources = Vec::with_capacity(n_attr);
        for vals in &values {
            let mut src = Vec::with_capacity(vals.len());
            for (j, v) in vals.iter().enumerate() {
                src.push(match v {
                    Value::Entity(id) => match kg.entity_index(id) {
                        Some(e) => ValueSource::Entity(e),
                        None => ValueSource::Unseen(unseen.insert_full(id.clone()).0),
                    },
                    Value::Category(_) => ValueSource::Category(j),
                    Value::String(s) => {
                        strings.push(s.clone());
                        ValueSource::String(strings.len() - 1)
                    }
                    Value::Number(_) | Value::Datetime(_) => ValueSource::Category(usize::MAX),
                });
            }
            sources.push(src);
        }

        let mut params = Vec::with_capacity(n_attr);
        let mut value_types = Vec::with_capacity(n_attr);
        let mut any_string = false;
        for a in 0..n_attr {
            let spec = kg.attribute(a);
            value_types.push(spec.value_type);
            let p = if spec.value_type.is_numeric() {
                let k = spec.arity;
                AttrParams::Numeric {
                    a: store.add_uniform(format!("lit.{}.a", spec.name), d_e, k, d_e, rng)?,
                    b: store.add_uniform(format!("lit.{}.b", spec.name), 1, k, d_e, rng)?,
                }
            } else {
                any_string |= spec.value_type == ValueType::String;
                let w = store.add_uniform(format!("rel.{}.w", spec.name), d_e, d_e, d_e, rng)?;
                let categories = if spec.value_type == ValueType::Category {
                    let rows = values[a].len().max(1);
                    Some(store.add_uniform(format!("cat.{}", spec.name), rows, d_e, d_e, rng)?)
                } else {
                    None
                };
                AttrParams::Discrete { w, categories }
            };
            params.push(p);
        }
        let string_proj = if any_string {
            Some(store.add_uniform("str.proj", text.dim(), d_e, text.dim(), rng)?)
        } else {
            None
        };
        let string_text = text_matrix(text, strings.iter().map(String::as_str))?;
        let unseen_text = text_matrix(
            text,
            unseen.iter().map(|id| crate::kgdata::entity_label(id)).collect::<Vec<_>>().iter().map(String::as_str),
        )?;
        let unseen_rows = Tensor::zeros(unseen.len(), d_e);
        Ok(Self {
            value_types,
            params,
            values,
            domain_len,
            counts,
            sources,
            ranges,
            string_proj,
            string_text,
            unseen,
            unseen_text,
            unseen_rows,
            offset: hp.class_weight_offset,
            d_e,
        })
    }

    pub fn value_index(&self, attribute: usize, value: &Value) -> Option<usize> {
        self.values[attribute].get_index_of(value)
    }

    /// `norm_a` over the scorer's effective range; a missing range maps to 0.5.
    pub fn normalize(&self, attribute: usize, value: &Value) -> Result<f64> {
        let x = value
            .raw_number()
            .ok_or_else(|| Error::TypeMismatch(format!("`{value}` is not numeric")))?;
        match self.ranges[attribute] {
            Some((lo, hi)) => norm_in_range(x, lo, hi),
            None => Ok(0.5),
        }
    }

    /// Class weights of a candidate list (value indices of one attribute).
    pub fn weights(&self, attribute: usize, candidates: &[usize]) -> Vec<f64> {
        let counts: Vec<f64> = candidates.iter().map(|&j| self.counts[attribute][j] as f64).collect();
        class_weights(&counts, self.offset)
    }

    /// Assembles the value-embedding table for one graph.
    pub fn table(&self, g: &mut Graph, store: &ParamStore, entities: Var, needed: &[(usize, usize)]) -> Result<ValueTable> {
        let n_e = g.shape(entities)[0];
        let mut parts = vec![entities];
        let mut offset = n_e;
        let mut cat_offsets = HashMap::new();
        for (a, p) in self.params.iter().enumerate() {
            if let AttrParams::Discrete {
                categories: Some(id), ..
            } = p
            {
                let v = g.param(store, *id);
                cat_offsets.insert(a, offset);
                offset += g.shape(v)[0];
                parts.push(v);
            }
        }
        let mut strings: IndexSet<usize> = IndexSet::new();
        let mut unseen: IndexSet<usize> = IndexSet::new();
        for &(a, j) in needed {
            match self.sources[a][j] {
                ValueSource::String(s) => {
                    strings.insert(s);
                }
                ValueSource::Unseen(u) => {
                    unseen.insert(u);
                }
                _ => {}
            }
        }
        let string_offset = offset;
        if !strings.is_empty() {
            let proj = self.string_proj.expect("string attribute has a projection");
            let rows: Vec<Vec<f64>> = strings
                .iter()
                .map(|&s| self.string_text.row_slice(s).to_vec())
                .collect();
            let t = g.constant(Tensor::from_rows(&rows)?);
            let p = g.param(store, proj);
            let v = g.matmul(t, p)?;
            offset += strings.len();
            parts.push(v);
        }
        let unseen_offset = offset;
        if !unseen.is_empty() {
            let rows: Vec<Vec<f64>> = unseen
                .iter()
                .map(|&u| self.unseen_rows.row_slice(u).to_vec())
                .collect();
            parts.push(g.constant(Tensor::from_rows(&rows)?));
        }
        let var = if parts.len() == 1 {
            entities
        } else {
            g.concat_rows(&parts)?
        };
        Ok(ValueTable {
            var,
            entities,
            cat_offsets,
            strings,
            string_offset,
            unseen,
            unseen_offset,
        })
    }

    /// Row of the table holding value `j` of attribute `a`.
    pub fn row(&self, table: &ValueTable, a: usize, j: usize) -> usize {
        match self.sources[a][j] {
            ValueSource::Entity(e) => e,
            ValueSource::Category(c) => table.cat_offsets[&a] + c,
            ValueSource::String(s) => table.string_offset + table.strings.get_index_of(&s).expect("requested"),
            ValueSource::Unseen(u) => table.unseen_offset + table.unseen.get_index_of(&u).expect("requested"),
        }
    }

    /// Scores for every requested item, as one column in query order.
    pub fn score(&self, g: &mut Graph, store: &ParamStore, table: &ValueTable, queries: &[ScoreQuery]) -> Result<Var> {
        let mut parts: Vec<Var> = Vec::new();
        // Position of each query's first item within the concatenated parts.
        let mut item_pos: Vec<usize> = vec![0; queries.len()];
        let mut produced = 0;

        let mut by_attr: Vec<Vec<usize>> = vec![Vec::new(); self.params.len()];
        for (qi, q) in queries.iter().enumerate() {
            by_attr[q.attribute()].push(qi);
        }
        for (a, qis) in by_attr.iter().enumerate() {
            if qis.is_empty() {
                continue;
            }
            match &self.params[a] {
                AttrParams::Discrete { w, .. } => {
                    let es: Vec<usize> = qis.iter().map(|&qi| queries[qi].entity()).collect();
                    let rows = g.gather_rows(table.entities, &es)?;
                    let w = g.param(store, *w);
                    let q = g.matmul(rows, w)?;
                    let mut pairs = Vec::new();
                    let mut segs = Vec::new();
                    let mut picks = Vec::new();
                    let mut lambdas = Vec::new();
                    for (r, &qi) in qis.iter().enumerate() {
                        let ScoreQuery::Discrete { candidates, score, .. } = &queries[qi] else {
                            return Err(Error::TypeMismatch(format!(
                                "numeric query on discrete attribute {a}"
                            )));
                        };
                        let start = pairs.len();
                        for &c in candidates {
                            pairs.push((r, self.row(table, a, c)));
                        }
                        segs.push((start, pairs.len()));
                        let lam = self.weights(a, candidates);
                        item_pos[qi] = produced + picks.len();
                        for &pos in score {
                            picks.push(start + pos);
                            lambdas.push(lam[pos]);
                        }
                    }
                    let logits = g.gather_dot(q, table.var, pairs)?;
                    let ls = g.segment_log_softmax(logits, segs)?;
                    let picked = g.gather_rows(ls, &picks)?;
                    let lam = g.constant(Tensor::column(&lambdas));
                    let f = g.mul(picked, lam)?;
                    let f = g.neg(f);
                    produced += picks.len();
                    parts.push(f);
                }
                AttrParams::Numeric { a: pa, b: pb } => {
                    let mut es = Vec::new();
                    let mut targets = Vec::new();
                    for &qi in qis {
                        let ScoreQuery::Numeric { entity, targets: t, .. } = &queries[qi] else {
                            return Err(Error::TypeMismatch(format!(
                                "discrete query on numeric attribute {a}"
                            )));
                        };
                        item_pos[qi] = produced + es.len();
                        for &x in t {
                            es.push(*entity);
                            targets.push(x);
                        }
                    }
                    if es.is_empty() {
                        continue;
                    }
                    let rows = g.gather_rows(table.entities, &es)?;
                    let am = g.param(store, *pa);
                    let bm = g.param(store, *pb);
                    let z = g.matmul(rows, am)?;
                    let z = g.add(z, bm)?;
                    let pred = g.sigmoid(z);
                    let t = g.constant(Tensor::column(&targets));
                    let r = g.sub(pred, t)?;
                    let r = g.abs(r);
                    let f = g.min_over(r)?;
                    produced += es.len();
                    parts.push(f);
                }
            }
        }
        if produced == 0 {
            return Ok(g.constant(Tensor::zeros(0, 1)));
        }
        let all = if parts.len() == 1 { parts[0] } else { g.concat_rows(&parts)? };
        let mut order = Vec::with_capacity(produced);
        for (qi, q) in queries.iter().enumerate() {
            order.extend(item_pos[qi]..item_pos[qi] + q.items());
        }
        if order.iter().enumerate().all(|(i, &o)| i == o) {
            return Ok(all);
        }
        Ok(g.gather_rows(all, &order)?)
    }

    /// Raw regression outputs `sigmoid(e·A_a + b_a)` for one entity.
    pub fn literal_predictions(&self, store: &ParamStore, entities: &Tensor, entity: usize, a: usize) -> Option<Vec<f64>> {
        let AttrParams::Numeric { a: pa, b: pb } = &self.params[a] else {
            return None;
        };
        let e = entities.row_slice(entity);
        let (am, bm) = (store.value(*pa), store.value(*pb));
        Some(
            (0..am.cols())
                .map(|i| {
                    let z: f64 = e.iter().enumerate().map(|(r, x)| x * am.get(r, i)).sum();
                    diffcore::sigmoid(z + bm.get(0, i))
                })
                .collect(),
        )
    }
}

fn text_matrix<'a>(text: &TextEncoder, items: impl Iterator<Item = &'a str>) -> Result<Tensor> {
    let rows: Vec<Vec<f64>> = items.map(|s| text.encode_pooled(s)).collect::<Result<_>>()?;
    if rows.is_empty() {
        return Ok(Tensor::zeros(0, text.dim()));
    }
    Ok(Tensor::from_rows(&rows)?)
}

/// Per-graph table of value embeddings (entities, categories, projected
/// strings, unseen entities).
#[derive(Clone, Debug)]
pub struct ValueTable {
    pub var: Var,
    pub entities: Var,
    cat_offsets: HashMap<usize, usize>,
    strings: IndexSet<usize>,
    string_offset: usize,
    unseen: IndexSet<usize>,
    unseen_offset: usize,
}

/// One scoring request.
#[derive(Clone, Debug)]
pub enum ScoreQuery {
    /// Softmax over `candidates` (value indices); scores the positions in `score`.
    Discrete {
        entity: usize,
        attribute: usize,
        candidates: Vec<usize>,
        score: Vec<usize>,
    },
    /// Regression residuals against normalized targets.
    Numeric {
        entity: usize,
        attribute: usize,
        targets: Vec<f64>,
    },
}

impl ScoreQuery {
    pub fn entity(&self) -> usize {
        match self {
            ScoreQuery::Discrete { entity, .. } | ScoreQuery::Numeric { entity, .. } => *entity,
        }
    }

    pub fn attribute(&self) -> usize {
        match self {
            ScoreQuery::Discrete { attribute, .. } | ScoreQuery::Numeric { attribute, .. } => *attribute,
        }
    }

    pub fn items(&self) -> usize {
        match self {
            ScoreQuery::Discrete { score, .. } => score.len(),
            ScoreQuery::Numeric { targets, .. } => targets.len(),
        }
    }

    /// Value indices referenced by the query.
    pub fn needed(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let (a, c): (usize, &[usize]) = match self {
            ScoreQuery::Discrete {
                attribute, candidates, ..
            } => (*attribute, candidates),
            ScoreQuery::Numeric { attribute, .. } => (*attribute, &[]),
        };
        c.iter().map(move |&j| (a, j))
    }
}
