//! Metrics, the majority-voting baseline, the synthetic multi-source
//! generator, and sensitivity sweeps.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;

use chrono::{Duration as ChronoDuration, NaiveDate};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::HyperParams;
use crate::error::{Error, Result};
use crate::kgdata::{ClaimSet, KgBuilder, KnowledgeGraph, Value, ValueType};
use crate::truth::{run_semi_supervised, TrainOptions, TrainReport, TruthSet};

pub type Triple = (usize, usize, Value);

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Set precision, recall and F1; an empty prediction has precision 0.
pub fn eval_relational(predicted: &[Triple], gold: &[Triple]) -> Prf {
    let pred: HashSet<&Triple> = predicted.iter().collect();
    let gold: HashSet<&Triple> = gold.iter().collect();
    let hit = pred.intersection(&gold).count() as f64;
    let precision = if pred.is_empty() { 0.0 } else { hit / pred.len() as f64 };
    let recall = if gold.is_empty() { 0.0 } else { hit / gold.len() as f64 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Prf { precision, recall, f1 }
}

/// Whether string `general` is implied by `specific`: every token of the
/// former appears in the latter ("pop" is implied by "pop rock").
pub fn string_implied(general: &str, specific: &str) -> bool {
    let tokens: HashSet<&str> = specific.split_whitespace().collect();
    let mut any = false;
    for t in general.split_whitespace() {
        any = true;
        if !tokens.contains(t) {
            return false;
        }
    }
    any
}

/// Like [`eval_relational`], but a predicted string is precise when some
/// gold string of the same pair implies it. Recall stays exact.
pub fn eval_with_implied_strings(predicted: &[Triple], gold: &[Triple]) -> Prf {
    let exact = eval_relational(predicted, gold);
    let pred: HashSet<&Triple> = predicted.iter().collect();
    if pred.is_empty() {
        return exact;
    }
    let gold_set: HashSet<&Triple> = gold.iter().collect();
    let mut by_pair: HashMap<(usize, usize), Vec<&str>> = HashMap::new();
    for (e, a, v) in gold {
        if let Value::String(s) = v {
            by_pair.entry((*e, *a)).or_default().push(s);
        }
    }
    let precise = pred
        .iter()
        .filter(|t| {
            gold_set.contains(*t)
                || match &t.2 {
                    Value::String(p) => by_pair
                        .get(&(t.0, t.1))
                        .is_some_and(|gs| gs.iter().any(|g| string_implied(p, g))),
                    _ => false,
                }
        })
        .count();
    let precision = precise as f64 / pred.len() as f64;
    let recall = exact.recall;
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Prf { precision, recall, f1 }
}

/// `(MAE, RMSE)` over pairs present in both maps. Each pair's gold may hold
/// several values; the closest one counts.
pub fn eval_literal(predicted: &HashMap<(usize, usize), f64>, gold: &HashMap<(usize, usize), Vec<f64>>) -> Result<(f64, f64)> {
    let mut errs = Vec::new();
    let mut keys: Vec<&(usize, usize)> = predicted.keys().collect();
    keys.sort_unstable();
    for k in keys {
        if let Some(g) = gold.get(k) {
            let p = predicted[k];
            let e = g.iter().map(|x| (p - x).abs()).fold(f64::INFINITY, f64::min);
            errs.push(e);
        }
    }
    if errs.is_empty() {
        return Err(Error::Invalid("no overlap between predicted and gold literals".into()));
    }
    let n = errs.len() as f64;
    let mae = errs.iter().sum::<f64>() / n;
    let rmse = (errs.iter().map(|e| e * e).sum::<f64>() / n).sqrt();
    Ok((mae, rmse))
}

/// Per `(e, a)`, the value backed by the most distinct sources, ties broken
/// by ascending payload. Numbers within `1e-9` after `norm` count as one
/// value (the smallest payload represents the bucket).
pub fn majority_vote(claims: &ClaimSet, norm: impl Fn(usize, &Value) -> Option<f64>) -> Vec<Triple> {
    let mut by_pair: BTreeMap<(usize, usize), Vec<(Value, usize)>> = BTreeMap::new();
    for c in &claims.claims {
        by_pair
            .entry((c.entity, c.attribute))
            .or_default()
            .push((c.value.clone(), c.source));
    }
    let mut out = Vec::new();
    for ((e, a), items) in by_pair {
        // Bucket key -> (representative, sources).
        let mut buckets: Vec<(Value, Option<f64>, HashSet<usize>)> = Vec::new();
        let mut sorted = items;
        sorted.sort_by(|x, y| x.0.payload().cmp(&y.0.payload()).then(x.1.cmp(&y.1)));
        for (v, s) in sorted {
            let x = norm(a, &v);
            let slot = buckets.iter_mut().find(|(bv, bx, _)| match (x, bx) {
                (Some(x), Some(bx)) => (x - bx).abs() <= 1e-9,
                _ => *bv == v,
            });
            match slot {
                Some((_, _, set)) => {
                    set.insert(s);
                }
                None => buckets.push((v, x, HashSet::from([s]))),
            }
        }
        let best = buckets
            .into_iter()
            .min_by(|x, y| y.2.len().cmp(&x.2.len()).then_with(|| x.0.payload().cmp(&y.0.payload())))
            .expect("every pair has a claim");
        out.push((e, a, best.0));
    }
    out
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let rx = ranks(x);
    let ry = ranks(y);
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}

fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

const CLUSTER_WORDS: &[&str] = &[
    "amber", "azure", "cedar", "coral", "ember", "frost", "garnet", "hazel", "indigo", "jade", "lilac", "maple", "onyx",
    "pearl", "quartz", "ruby", "sable", "topaz", "umber", "violet",
];
const STYLE_WORDS: &[&str] = &["rock", "jazz", "folk", "pop", "metal", "soul", "blues", "punk", "swing"];

/// Generator settings. Error rates are drawn uniformly from
/// `error_range` per source unless `error_rates` is given.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub entities: usize,
    pub clusters: usize,
    pub hubs_per_cluster: usize,
    pub sources: usize,
    pub error_range: (f64, f64),
    pub error_rates: Option<Vec<f64>>,
    /// Per-source probability of reporting on a pair, drawn uniformly.
    pub coverage_range: (f64, f64),
    /// Share of `(e, a)` pairs withheld from the KG and used as gold.
    pub holdout: f64,
    /// Share of pairs kept in the KG that sources also report on.
    pub known_claims: f64,
    /// Extra random substitution applied to every claim.
    pub noise: f64,
    /// Share of KG facts preserved.
    pub prior_keep: f64,
    /// Share of claims preserved.
    pub claim_keep: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            entities: 200,
            clusters: 10,
            hubs_per_cluster: 2,
            sources: 10,
            error_range: (0.05, 0.4),
            error_rates: None,
            coverage_range: (0.6, 1.0),
            holdout: 0.5,
            known_claims: 0.6,
            noise: 0.0,
            prior_keep: 1.0,
            claim_keep: 1.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let probs = [
            self.error_range.0,
            self.error_range.1,
            self.coverage_range.0,
            self.coverage_range.1,
            self.holdout,
            self.known_claims,
            self.noise,
            self.prior_keep,
            self.claim_keep,
        ];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config("synthetic probabilities must lie in [0, 1]".into()));
        }
        if self.clusters == 0 || self.sources == 0 || self.hubs_per_cluster == 0 || self.entities < self.clusters * (self.hubs_per_cluster + 2) {
            return Err(Error::Config("too few entities for the cluster layout".into()));
        }
        if let Some(r) = &self.error_rates {
            if r.len() != self.sources || r.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::Config("error_rates needs one probability per source".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SynthData {
    pub kg: KnowledgeGraph,
    pub claims: ClaimSet,
    /// Withheld true facts (KG indices).
    pub gold: Vec<Triple>,
    pub error_rates: Vec<f64>,
    /// Whether each claim differs from the value it was generated from.
    pub corrupted: Vec<bool>,
}

struct Truths {
    entities: Vec<String>,
    cluster: Vec<usize>,
    hubs: Vec<Vec<usize>>,
    /// (entity, attribute name, values)
    facts: Vec<(usize, &'static str, Vec<Value>)>,
    strings: Vec<Vec<String>>,
}

const ATTRIBUTES: &[(&str, ValueType)] = &[
    ("related_to", ValueType::Entity),
    ("member_of", ValueType::Entity),
    ("size", ValueType::Number),
    ("rating", ValueType::Number),
    ("founded", ValueType::Datetime),
    ("motto", ValueType::String),
];

fn plant(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Truths> {
    let nc = cfg.clusters;
    let mut entities = Vec::with_capacity(cfg.entities);
    let mut cluster = Vec::with_capacity(cfg.entities);
    let mut hubs = vec![Vec::new(); nc];
    let mut members = vec![Vec::new(); nc];
    let word = |c: usize| -> String {
        let w = CLUSTER_WORDS[c % CLUSTER_WORDS.len()];
        if c < CLUSTER_WORDS.len() {
            w.to_string()
        } else {
            format!("{w}{}", c / CLUSTER_WORDS.len())
        }
    };
    for c in 0..nc {
        for h in 0..cfg.hubs_per_cluster {
            hubs[c].push(entities.len());
            entities.push(format!("{}_hub_{h}", word(c)));
            cluster.push(c);
        }
    }
    let mut i = 0;
    while entities.len() < cfg.entities {
        let c = i % nc;
        members[c].push(entities.len());
        entities.push(format!("{}_item_{i}", word(c)));
        cluster.push(c);
        i += 1;
    }
    let strings: Vec<Vec<String>> = (0..nc)
        .map(|c| {
            let mut styles = STYLE_WORDS.to_vec();
            styles.shuffle(rng);
            let n = cfg.hubs_per_cluster.clamp(3, styles.len());
            styles[..n].iter().map(|s| format!("{} {s}", word(c))).collect()
        })
        .collect();
    let centers: Vec<f64> = (0..nc).map(|_| rng.random_range(100.0..1000.0)).collect();
    let normal = |sd: f64| Normal::new(0.0, sd).expect("positive sd");
    let origin = NaiveDate::from_ymd_opt(1950, 1, 1).expect("valid").and_hms_opt(0, 0, 0).expect("valid");
    let mut facts = Vec::new();
    for c in 0..nc {
        for &e in &members[c] {
            let others: Vec<usize> = members[c].iter().copied().filter(|&x| x != e).collect();
            let n_rel = if rng.random_bool(0.4) { 2 } else { 1 };
            let rel: Vec<Value> = others
                .choose_multiple(rng, n_rel.min(others.len()))
                .map(|&x| Value::Entity(entities[x].clone()))
                .collect();
            if !rel.is_empty() {
                facts.push((e, "related_to", rel));
            }
            let n_hub = if rng.random_bool(0.3) { 2 } else { 1 };
            let hub: Vec<Value> = hubs[c]
                .choose_multiple(rng, n_hub.min(hubs[c].len()))
                .map(|&x| Value::Entity(entities[x].clone()))
                .collect();
            if !hub.is_empty() {
                facts.push((e, "member_of", hub.clone()));
            }
            let size = (centers[c] + normal(30.0).sample(rng)).round();
            facts.push((e, "size", vec![Value::number(size)?]));
            let rating = ((1.0 + 0.4 * c as f64 + normal(0.2).sample(rng)) * 100.0).round() / 100.0;
            facts.push((e, "rating", vec![Value::number(rating)?]));
            let days = 1461.0 * c as f64 + normal(200.0).sample(rng);
            let dt = origin + ChronoDuration::days(days.round() as i64);
            facts.push((e, "founded", vec![Value::Datetime(dt)]));
            // A member shares the motto of its first hub.
            let h = hubs[c].iter().position(|&x| Value::Entity(entities[x].clone()) == hub[0]).unwrap_or(0);
            let s = strings[c][h % strings[c].len()].clone();
            facts.push((e, "motto", vec![Value::String(s)]));
        }
    }
    Ok(Truths {
        entities,
        cluster,
        hubs,
        facts,
        strings,
    })
}

fn corrupt(
    value: &Value,
    attribute: &str,
    domain: &[Value],
    range: (f64, f64),
    truths: &Truths,
    rng: &mut ChaCha8Rng,
) -> Result<Value> {
    match value {
        Value::Entity(_) | Value::Category(_) => {
            let others: Vec<&Value> = domain.iter().filter(|v| *v != value).collect();
            Ok(others.choose(rng).map(|v| (*v).clone()).unwrap_or_else(|| value.clone()))
        }
        Value::Number(x) => {
            let sd = 0.15 * (range.1 - range.0).max(1e-9);
            let mut y = x.into_inner() + Normal::new(0.0, sd).expect("positive").sample(rng);
            if attribute == "size" {
                y = y.round();
            } else {
                y = (y * 100.0).round() / 100.0;
            }
            if y == x.into_inner() {
                y += if attribute == "size" { 1.0 } else { 0.01 };
            }
            Value::number(y)
        }
        Value::Datetime(dt) => {
            let sd = 0.15 * (range.1 - range.0).max(1.0);
            let mut d = Normal::new(0.0, sd).expect("positive").sample(rng).round() as i64;
            if d == 0 {
                d = 1;
            }
            Ok(Value::Datetime(*dt + ChronoDuration::days(d)))
        }
        Value::String(s) => {
            let toks: Vec<&str> = s.split_whitespace().collect();
            if toks.len() >= 2 && rng.random_bool(0.5) {
                // Token dropout.
                let drop = rng.random_range(0..toks.len());
                let kept: Vec<&str> = toks.iter().enumerate().filter(|(i, _)| *i != drop).map(|(_, t)| *t).collect();
                Ok(Value::String(kept.join(" ")))
            } else {
                // Token swap with a word from another cluster's vocabulary.
                let pool: Vec<&String> = truths.strings.iter().flatten().filter(|x| *x != s).collect();
                let donor = pool.choose(rng).map(|x| x.as_str()).unwrap_or("x");
                let dt: Vec<&str> = donor.split_whitespace().collect();
                let mut out: Vec<&str> = toks.clone();
                let at = rng.random_range(0..out.len());
                let candidate = dt[rng.random_range(0..dt.len())];
                out[at] = candidate;
                let joined = out.join(" ");
                if joined == *s {
                    Ok(Value::String(format!("{joined} {}", STYLE_WORDS[rng.random_range(0..STYLE_WORDS.len())])))
                } else {
                    Ok(Value::String(joined))
                }
            }
        }
    }
}

/// Planted-structure KG plus noisy multi-source claims and withheld gold.
pub fn synth_generate(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let truths = plant(cfg, &mut rng)?;
    let error_rates: Vec<f64> = match &cfg.error_rates {
        Some(r) => r.clone(),
        None => (0..cfg.sources)
            .map(|_| {
                if cfg.error_range.1 > cfg.error_range.0 {
                    rng.random_range(cfg.error_range.0..cfg.error_range.1)
                } else {
                    cfg.error_range.0
                }
            })
            .collect(),
    };
    let coverage: Vec<f64> = (0..cfg.sources)
        .map(|_| {
            if cfg.coverage_range.1 > cfg.coverage_range.0 {
                rng.random_range(cfg.coverage_range.0..cfg.coverage_range.1)
            } else {
                cfg.coverage_range.0
            }
        })
        .collect();

    // Split pairs into KG-kept and withheld.
    let withheld: Vec<bool> = truths.facts.iter().map(|_| rng.random_bool(cfg.holdout)).collect();
    let mut builder = KgBuilder::new();
    for e in &truths.entities {
        builder.add_entity(e);
    }
    for (name, ty) in ATTRIBUTES {
        builder.declare_attribute(name, *ty)?;
    }
    for (fi, (e, a, vals)) in truths.facts.iter().enumerate() {
        if withheld[fi] {
            continue;
        }
        for v in vals {
            if rng.random_bool(cfg.prior_keep) {
                builder.add_fact(&truths.entities[*e], a, v.clone())?;
            }
        }
    }
    let (kg, _) = builder.build();

    // Domains and ranges of the full truth, for corruption.
    let mut domains: HashMap<&str, Vec<Value>> = HashMap::new();
    let mut ranges: HashMap<&str, (f64, f64)> = HashMap::new();
    for (_, a, vals) in &truths.facts {
        for v in vals {
            let d = domains.entry(a).or_default();
            if !d.contains(v) {
                d.push(v.clone());
            }
            if let Some(x) = v.raw_number() {
                let r = ranges.entry(a).or_insert((x, x));
                r.0 = r.0.min(x);
                r.1 = r.1.max(x);
            }
        }
    }
    let mut claims = ClaimSet::new();
    let source_names: Vec<String> = (0..cfg.sources).map(|s| format!("src{s:02}")).collect();
    for s in &source_names {
        claims.add_source(s);
    }
    let mut corrupted = Vec::new();
    let mut gold = Vec::new();
    for (fi, (e, a, vals)) in truths.facts.iter().enumerate() {
        // The builder drops numeric attributes whose kept values have no spread.
        let Some(ai) = kg.attribute_index(a) else {
            continue;
        };
        if withheld[fi] {
            gold.extend(vals.iter().map(|v| (*e, ai, v.clone())));
        } else if !rng.random_bool(cfg.known_claims) {
            continue;
        }
        for (s, name) in source_names.iter().enumerate() {
            if !rng.random_bool(coverage[s]) {
                continue;
            }
            for v in vals {
                let mut out = v.clone();
                let mut bad = false;
                if rng.random_bool(error_rates[s]) {
                    out = corrupt(v, a, &domains[a], ranges.get(a).copied().unwrap_or((0.0, 1.0)), &truths, &mut rng)?;
                    bad = true;
                }
                if cfg.noise > 0.0 && rng.random_bool(cfg.noise) {
                    out = corrupt(&out, a, &domains[a], ranges.get(a).copied().unwrap_or((0.0, 1.0)), &truths, &mut rng)?;
                    bad = true;
                }
                let keep = rng.random_bool(cfg.claim_keep);
                if keep && claims.push(&kg, &truths.entities[*e], a, out.clone(), name).is_ok() {
                    corrupted.push(bad && out != *v);
                }
            }
        }
    }
    let _ = (&truths.cluster, &truths.hubs);
    Ok(SynthData {
        kg,
        claims,
        gold,
        error_rates,
        corrupted,
    })
}

/// Discrete-attribute P/R/F1 plus numeric MAE/RMSE on the normalized scale.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MetricsReport {
    pub prf: Prf,
    pub mae: Option<f64>,
    pub rmse: Option<f64>,
    pub relational_present: bool,
}

/// Splits gold into discrete triples and normalized numeric values.
fn split_gold(kg: &KnowledgeGraph, gold: &[Triple], norm: &dyn Fn(usize, &Value) -> Option<f64>) -> (Vec<Triple>, HashMap<(usize, usize), Vec<f64>>) {
    let mut discrete = Vec::new();
    let mut numeric: HashMap<(usize, usize), Vec<f64>> = HashMap::new();
    for t in gold {
        if kg.attribute(t.1).value_type.is_numeric() {
            if let Some(x) = norm(t.1, &t.2) {
                numeric.entry((t.0, t.1)).or_default().push(x);
            }
        } else {
            discrete.push(t.clone());
        }
    }
    (discrete, numeric)
}

/// Scores predictions restricted to the `(e, a)` pairs of the gold set.
/// Discrete precision counts strings implied by a gold string as correct.
pub fn evaluate(
    kg: &KnowledgeGraph,
    gold: &[Triple],
    discrete_pred: &[Triple],
    numeric_pred: &HashMap<(usize, usize), f64>,
    norm: &dyn Fn(usize, &Value) -> Option<f64>,
) -> MetricsReport {
    let pairs: HashSet<(usize, usize)> = gold.iter().map(|t| (t.0, t.1)).collect();
    let (g_disc, g_num) = split_gold(kg, gold, norm);
    let pred: Vec<Triple> = discrete_pred
        .iter()
        .filter(|t| pairs.contains(&(t.0, t.1)) && !kg.attribute(t.1).value_type.is_numeric())
        .cloned()
        .collect();
    let lit = eval_literal(numeric_pred, &g_num).ok();
    MetricsReport {
        prf: eval_with_implied_strings(&pred, &g_disc),
        mae: lit.map(|l| l.0),
        rmse: lit.map(|l| l.1),
        relational_present: !g_disc.is_empty(),
    }
}

/// Results of one full pipeline run next to the voting baseline.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub tkgc: MetricsReport,
    pub majority: MetricsReport,
    pub sigmas: Vec<f64>,
    pub truths: TruthSet,
    pub report: TrainReport,
}

/// Trains on `data`, infers truths, and scores both TKGC and majority voting.
pub fn run_and_evaluate(data: &SynthData, hp: &HyperParams) -> Result<RunResult> {
    let (model, truths, report) = run_semi_supervised(&data.kg, &data.claims, hp, &TrainOptions::default())?;
    let scorer = &model.scorer;
    let norm = |a: usize, v: &Value| -> Option<f64> {
        if scorer.value_types[a].is_numeric() {
            scorer.normalize(a, v).ok()
        } else {
            None
        }
    };
    let mut numeric = HashMap::new();
    for g in &truths.groups {
        if scorer.value_types[g.attribute].is_numeric() {
            let best = (0..g.values.len())
                .max_by(|&x, &y| g.plausibility[x].total_cmp(&g.plausibility[y]).then(y.cmp(&x)))
                .expect("non-empty group");
            if let Some(x) = norm(g.attribute, &g.values[best]) {
                numeric.insert((g.entity, g.attribute), x);
            }
        }
    }
    let tkgc = evaluate(&data.kg, &data.gold, &truths.accepted, &numeric, &norm);

    let mv = majority_vote(&data.claims, norm);
    let mut mv_num = HashMap::new();
    for (e, a, v) in &mv {
        if let Some(x) = norm(*a, v) {
            mv_num.insert((*e, *a), x);
        }
    }
    let majority = evaluate(&data.kg, &data.gold, &mv, &mv_num, &norm);
    Ok(RunResult {
        tkgc,
        majority,
        sigmas: model.source_sigmas(),
        truths,
        report,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Noise,
    Claims,
    Prior,
}

impl Axis {
    pub fn as_str(self) -> &'static str {
        match self {
            Axis::Noise => "noise",
            Axis::Claims => "claims",
            Axis::Prior => "prior",
        }
    }

    /// Published sweep levels.
    pub fn default_levels(self) -> Vec<f64> {
        match self {
            Axis::Noise => vec![0.0, 0.05, 0.10, 0.15, 0.20, 0.25],
            Axis::Claims | Axis::Prior => vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
        }
    }

    pub fn apply(self, base: &SynthConfig, level: f64) -> SynthConfig {
        let mut cfg = base.clone();
        match self {
            Axis::Noise => cfg.noise = level,
            Axis::Claims => cfg.claim_keep = level,
            Axis::Prior => cfg.prior_keep = level,
        }
        cfg
    }
}

impl std::str::FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "noise" => Ok(Axis::Noise),
            "claims" => Ok(Axis::Claims),
            "prior" => Ok(Axis::Prior),
            other => Err(format!("unknown axis `{other}` (expected noise, claims or prior)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SensitivityRow {
    pub axis: Axis,
    pub level: f64,
    pub seed: u64,
    pub metrics: MetricsReport,
}

/// Runs the pipeline per level and seed; the generator and the model share the seed.
pub fn sensitivity_suite(axis: Axis, levels: &[f64], seeds: &[u64], base: &SynthConfig, hp: &HyperParams) -> Result<Vec<SensitivityRow>> {
    let mut rows = Vec::with_capacity(levels.len() * seeds.len());
    for &level in levels {
        for &seed in seeds {
            let mut cfg = axis.apply(base, level);
            cfg.seed = seed;
            let data = synth_generate(&cfg)?;
            let mut run_hp = hp.clone();
            run_hp.seed = seed;
            let r = run_and_evaluate(&data, &run_hp)?;
            log::info!("{} level {level} seed {seed}: f1 {:.4}", axis.as_str(), r.tkgc.prf.f1);
            rows.push(SensitivityRow {
                axis,
                level,
                seed,
                metrics: r.tkgc,
            });
        }
    }
    Ok(rows)
}

pub const CSV_HEADER: &str = "axis,level,seed,precision,recall,f1,mae,rmse";

pub fn write_csv(rows: &[SensitivityRow], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    let opt = |x: Option<f64>| x.map(|v| format!("{v:.6}")).unwrap_or_default();
    for r in rows {
        writeln!(
            out,
            "{},{},{},{:.6},{:.6},{:.6},{},{}",
            r.axis.as_str(),
            r.level,
            r.seed,
            r.metrics.prf.precision,
            r.metrics.prf.recall,
            r.metrics.prf.f1,
            opt(r.metrics.mae),
            opt(r.metrics.rmse)
        )?;
    }
    Ok(())
}

/// Mean metrics per level, in level order.
pub fn average_by_level(rows: &[SensitivityRow]) -> Vec<(f64, MetricsReport)> {
    let mut levels: Vec<f64> = Vec::new();
    for r in rows {
        if !levels.contains(&r.level) {
            levels.push(r.level);
        }
    }
    levels
        .into_iter()
        .map(|l| {
            let sel: Vec<&SensitivityRow> = rows.iter().filter(|r| r.level == l).collect();
            let n = sel.len() as f64;
            let mean = |f: &dyn Fn(&MetricsReport) -> f64| sel.iter().map(|r| f(&r.metrics)).sum::<f64>() / n;
            let opt_mean = |f: &dyn Fn(&MetricsReport) -> Option<f64>| {
                let xs: Vec<f64> = sel.iter().filter_map(|r| f(&r.metrics)).collect();
                (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
            };
            (
                l,
                MetricsReport {
                    prf: Prf {
                        precision: mean(&|m| m.prf.precision),
                        recall: mean(&|m| m.prf.recall),
                        f1: mean(&|m| m.prf.f1),
                    },
                    mae: opt_mean(&|m| m.mae),
                    rmse: opt_mean(&|m| m.rmse),
                    relational_present: sel.iter().any(|r| r.metrics.relational_present),
                },
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(e: usize, v: &str) -> Triple {
        (e, 0, Value::Category(v.into()))
    }

    #[test]
    fn prf_examples() {
        let gold = vec![t(0, "a"), t(1, "b"), t(2, "c"), t(3, "d"), t(4, "e")];
        assert_eq!(eval_relational(&gold, &gold), Prf { precision: 1.0, recall: 1.0, f1: 1.0 });
        assert_eq!(eval_relational(&[t(9, "z")], &gold), Prf::default());
        let pred = vec![t(0, "a"), t(1, "b"), t(2, "c"), t(9, "z")];
        let r = eval_relational(&pred, &gold);
        assert_eq!((r.precision, r.recall), (0.75, 0.6));
        assert!((r.f1 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(eval_relational(&[], &gold).precision, 0.0);
    }

    #[test]
    fn tiny_instances_generate() {
        // Few entities often leave a numeric attribute with one kept value.
        for seed in 0..30 {
            let cfg = SynthConfig {
                entities: 8,
                clusters: 2,
                hubs_per_cluster: 1,
                sources: 3,
                seed,
                ..SynthConfig::default()
            };
            let data = synth_generate(&cfg).unwrap();
            for &(_, a, _) in &data.gold {
                assert!(a < data.kg.num_attributes());
            }
        }
    }

    #[test]
    fn implied_strings_count_toward_precision_only() {
        let s = |e: usize, v: &str| (e, 0, Value::String(v.into()));
        assert!(string_implied("pop", "pop rock"));
        assert!(!string_implied("pop rock", "pop"));
        assert!(!string_implied("", "pop"));
        let gold = vec![s(0, "pop rock"), s(1, "folk")];
        let r = eval_with_implied_strings(&[s(0, "pop"), s(0, "pop rock"), s(1, "jazz")], &gold);
        assert!((r.precision - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.recall, 0.5);
        // Implication only holds within the same pair.
        assert_eq!(eval_with_implied_strings(&[s(1, "pop")], &gold).precision, 0.0);
    }

    #[test]
    fn literal_examples() {
        let gold: HashMap<_, _> = [((0, 0), vec![0.5]), ((1, 0), vec![0.5])].into();
        let exact: HashMap<_, _> = [((0, 0), 0.5), ((1, 0), 0.5)].into();
        assert_eq!(eval_literal(&exact, &gold).unwrap(), (0.0, 0.0));
        let off: HashMap<_, _> = [((0, 0), 0.6), ((1, 0), 0.2)].into();
        let (mae, rmse) = eval_literal(&off, &gold).unwrap();
        assert!((mae - 0.2).abs() < 1e-12);
        assert!((rmse - 0.05f64.sqrt()).abs() < 1e-12);
        assert!(eval_literal(&HashMap::new(), &gold).is_err());
    }

    #[test]
    fn spearman_of_monotone_data_is_one() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 35.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn generator_is_deterministic_and_clean_at_zero_error() {
        let cfg = SynthConfig {
            entities: 60,
            clusters: 4,
            error_rates: Some(vec![0.0; 10]),
            seed: 7,
            ..SynthConfig::default()
        };
        let a = synth_generate(&cfg).unwrap();
        let b = synth_generate(&cfg).unwrap();
        assert_eq!(a.kg, b.kg);
        assert_eq!(a.claims, b.claims);
        assert!(a.corrupted.iter().all(|c| !c));
        let gold: HashSet<&Triple> = a.gold.iter().collect();
        let known: HashSet<(usize, usize)> = a.kg.facts().iter().map(|f| (f.entity, f.attribute)).collect();
        for c in &a.claims.claims {
            if !known.contains(&(c.entity, c.attribute)) {
                assert!(gold.contains(&(c.entity, c.attribute, c.value.clone())));
            }
        }
    }
}
