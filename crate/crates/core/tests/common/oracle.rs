//! Straight-line reference implementations and random instances to compare
//! the library against. Nothing here calls the code under test for the
//! quantity being checked.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use diffcore::{Graph, ParamStore, Tensor};
use kgtruth::config::HyperParams;
use kgtruth::kgdata::{ClaimSet, KgBuilder, KnowledgeGraph, Value, ValueType};
use kgtruth::scoring::{ScoreQuery, Scorer, ValueSource};
use kgtruth::textenc::TextEncoder;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Absolute slack for float reassociation.
pub fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// `-lambda * log(exp(l_t) / Σ exp(l))`, summed naively after a max shift.
pub fn relational_oracle(logits: &[f64], target: usize, lambda: f64) -> f64 {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
    -lambda * ((logits[target] - m) - z.ln())
}

/// `λ'_j = 1 / ln(1 + offset + c_j)`, normalized.
pub fn class_weight_oracle(counts: &[f64], offset: f64) -> Vec<f64> {
    let mut raw = Vec::new();
    for c in counts {
        raw.push(1.0 / (1.0 + offset + c).ln());
    }
    let mut total = 0.0;
    for r in &raw {
        total += r;
    }
    raw.into_iter().map(|r| r / total).collect()
}

/// `min_i |sigmoid(e·A_i + b_i) - t|`.
pub fn literal_oracle(e: &[f64], a: &Tensor, b: &Tensor, target: f64) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..a.cols() {
        let mut z = b.get(0, i);
        for (r, x) in e.iter().enumerate() {
            z += x * a.get(r, i);
        }
        best = best.min((logistic(z) - target).abs());
    }
    best
}

/// `att_i = Σ_j cos(w_i, w'_j) w'_j`.
pub fn attend_oracle(w: &[Vec<f64>], w2: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let norm = |v: &[f64]| dot(v, v).sqrt();
    let mut out = Vec::new();
    for wi in w {
        let mut acc = vec![0.0; wi.len()];
        for wj in w2 {
            let c = dot(wi, wj) / (norm(wi) * norm(wj));
            for k in 0..acc.len() {
                acc[k] += c * wj[k];
            }
        }
        out.push(acc);
    }
    out
}

/// Gaussian kernel normalized over observed values `u`, mixed over
/// candidate truths `j` with weights `exp(-F_j)`, then normalized by the
/// total weight.
pub fn observed_value_oracle(diff: &[Vec<f64>], observed: usize, scale: f64, scores: &[f64]) -> f64 {
    let m = scores.len();
    let density = |d: f64| (-(d / scale).powi(2) / 2.0).exp() / (scale * (2.0 * std::f64::consts::PI).sqrt());
    let mut num = 0.0;
    let mut den = 0.0;
    for j in 0..m {
        let mut col = 0.0;
        for u in 0..m {
            col += density(diff[u][j]);
        }
        let prior = (-scores[j]).exp();
        num += density(diff[observed][j]) / col * prior;
        den += prior;
    }
    num / den
}

/// Per `(e, a)`: count distinct sources per value bucket, pick the largest
/// count and break ties by the smallest payload. Values whose normalized
/// magnitudes differ by at most `1e-9` share a bucket represented by its
/// smallest payload.
pub fn majority_oracle(claims: &ClaimSet, norm: &dyn Fn(usize, &Value) -> Option<f64>) -> Vec<(usize, usize, Value)> {
    let mut pairs: BTreeSet<(usize, usize)> = BTreeSet::new();
    for c in &claims.claims {
        pairs.insert((c.entity, c.attribute));
    }
    let mut out = Vec::new();
    for (e, a) in pairs {
        let here: Vec<_> = claims.claims.iter().filter(|c| c.entity == e && c.attribute == a).collect();
        let same = |x: &Value, y: &Value| match (norm(a, x), norm(a, y)) {
            (Some(p), Some(q)) => (p - q).abs() <= 1e-9,
            _ => x == y,
        };
        let mut best: Option<(usize, String, Value)> = None;
        for c in &here {
            let members: Vec<&Value> = here.iter().map(|d| &d.value).filter(|v| same(v, &c.value)).collect();
            let rep = members.iter().min_by_key(|v| v.payload()).unwrap();
            let support: BTreeSet<usize> = here.iter().filter(|d| same(&d.value, &c.value)).map(|d| d.source).collect();
            let cand = (support.len(), rep.payload(), (*rep).clone());
            best = match best {
                None => Some(cand),
                Some(b) if cand.0 > b.0 || (cand.0 == b.0 && cand.1 < b.1) => Some(cand),
                Some(b) => Some(b),
            };
        }
        out.push((e, a, best.unwrap().2));
    }
    out
}

/// A random scorer over four attributes: an entity relation, a category,
/// a string, and a number of arity 1 to 3, with claim-only and unseen
/// values mixed in.
pub struct ScorerInstance {
    pub kg: KnowledgeGraph,
    pub scorer: Scorer,
    pub store: ParamStore,
    pub text: TextEncoder,
    pub entities: Tensor,
    pub hp: HyperParams,
    pub rng: ChaCha8Rng,
}

pub fn tiny_hp(seed: u64) -> HyperParams {
    HyperParams {
        d_e: 4,
        d_h: 4,
        d_de: 3,
        d_txt: 6,
        d_ll: 3,
        ll_hidden: 3,
        d_le: 4,
        neighbors: 3,
        n_v: 4,
        ll_epochs: 1,
        le_epochs: 2,
        seed,
        ..HyperParams::default()
    }
}

pub fn scorer_instance(seed: u64) -> ScorerInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_e = rng.random_range(4..8);
    let ents: Vec<String> = (0..n_e).map(|i| format!("ent_{i}")).collect();
    let cats = ["red", "green", "blue", "teal"];
    let words = ["pop", "rock", "folk", "jazz", "indie"];
    let arity = rng.random_range(1..=3);
    let mut b = KgBuilder::new();
    for e in &ents {
        b.add_entity(e);
    }
    for e in &ents {
        b.add_fact(e, "rel", Value::Entity(ents.choose(&mut rng).unwrap().clone())).unwrap();
        b.add_fact(e, "cat", Value::Category(cats[rng.random_range(0..3)].into())).unwrap();
        let s = format!("{} {}", words.choose(&mut rng).unwrap(), words.choose(&mut rng).unwrap());
        b.add_fact(e, "txt", Value::String(s)).unwrap();
        for _ in 0..arity {
            b.add_fact(e, "num", Value::number(rng.random_range(0.0..100.0f64)).unwrap()).unwrap();
        }
    }
    b.add_fact(&ents[0], "num", Value::number(0.0).unwrap()).unwrap();
    b.add_fact(&ents[1], "num", Value::number(100.0).unwrap()).unwrap();
    let (mut kg, _) = b.build();
    kg.set_arity("num", arity).unwrap();
    let mut claims = ClaimSet::new();
    claims.push(&kg, &ents[0], "rel", Value::Entity("outsider_one".into()), "s").unwrap();
    claims.push(&kg, &ents[1], "rel", Value::Entity("outsider_two".into()), "s").unwrap();
    claims.push(&kg, &ents[0], "cat", Value::Category("teal".into()), "s").unwrap();
    claims.push(&kg, &ents[2], "txt", Value::String("swing".into()), "s").unwrap();

    let hp = tiny_hp(seed);
    let text = TextEncoder::hash(hp.d_txt);
    let mut store = ParamStore::new(seed);
    let mut scorer = Scorer::new(&mut store, &hp, &kg, &claims, &text, &mut rng).unwrap();
    let rand_rows = |rows: usize, rng: &mut ChaCha8Rng| {
        Tensor::from_vec(rows, hp.d_e, (0..rows * hp.d_e).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    };
    scorer.unseen_rows = rand_rows(scorer.unseen.len(), &mut rng);
    let entities = rand_rows(n_e, &mut rng);
    ScorerInstance {
        kg,
        scorer,
        store,
        text,
        entities,
        hp,
        rng,
    }
}

impl ScorerInstance {
    pub fn attr(&self, name: &str) -> usize {
        self.kg.attribute_index(name).unwrap()
    }

    /// Embedding of value `j` of attribute `a`, assembled from raw parameters.
    pub fn value_embedding(&self, a: usize, j: usize) -> Vec<f64> {
        let name = &self.kg.attribute(a).name;
        match &self.scorer.values[a][j] {
            Value::Entity(id) => match self.kg.entity_index(id) {
                Some(e) => self.entities.row_slice(e).to_vec(),
                None => {
                    let u = self.scorer.unseen.get_index_of(id.as_str()).unwrap();
                    self.scorer.unseen_rows.row_slice(u).to_vec()
                }
            },
            Value::Category(_) => {
                let t = self.store.value(self.store.get(&format!("cat.{name}")).unwrap());
                t.row_slice(j).to_vec()
            }
            Value::String(s) => {
                let x = self.text.encode_pooled(s).unwrap();
                let p = self.store.value(self.store.get("str.proj").unwrap());
                (0..p.cols()).map(|c| (0..p.rows()).map(|r| x[r] * p.get(r, c)).sum()).collect()
            }
            other => panic!("no embedding for {other:?}"),
        }
    }

    /// Distinct KG entities holding each value.
    pub fn kg_count(&self, a: usize, v: &Value) -> f64 {
        let holders: BTreeSet<usize> = self
            .kg
            .facts()
            .iter()
            .filter(|f| f.attribute == a && &f.value == v)
            .map(|f| f.entity)
            .collect();
        holders.len() as f64
    }

    pub fn relational_expected(&self, q: &ScoreQuery) -> Vec<f64> {
        let ScoreQuery::Discrete { entity, attribute: a, candidates, score } = q else {
            unreachable!()
        };
        let w = self.store.value(self.store.get(&format!("rel.{}.w", self.kg.attribute(*a).name)).unwrap());
        let e = self.entities.row_slice(*entity);
        let qv: Vec<f64> = (0..w.cols()).map(|c| (0..w.rows()).map(|r| e[r] * w.get(r, c)).sum()).collect();
        let logits: Vec<f64> = candidates.iter().map(|&c| dot(&qv, &self.value_embedding(*a, c))).collect();
        let counts: Vec<f64> = candidates.iter().map(|&c| self.kg_count(*a, &self.scorer.values[*a][c])).collect();
        let lam = class_weight_oracle(&counts, self.hp.class_weight_offset);
        score.iter().map(|&p| relational_oracle(&logits, p, lam[p])).collect()
    }

    pub fn literal_expected(&self, q: &ScoreQuery) -> Vec<f64> {
        let ScoreQuery::Numeric { entity, attribute: a, targets } = q else {
            unreachable!()
        };
        let name = &self.kg.attribute(*a).name;
        let am = self.store.value(self.store.get(&format!("lit.{name}.a")).unwrap());
        let bm = self.store.value(self.store.get(&format!("lit.{name}.b")).unwrap());
        targets
            .iter()
            .map(|&t| literal_oracle(self.entities.row_slice(*entity), am, bm, t))
            .collect()
    }

    /// A random mix of discrete and numeric queries.
    pub fn random_queries(&mut self, n: usize) -> Vec<ScoreQuery> {
        let discrete = ["rel", "cat", "txt"].map(|a| self.attr(a));
        let num = self.attr("num");
        let n_e = self.entities.rows();
        (0..n)
            .map(|_| {
                let entity = self.rng.random_range(0..n_e);
                if self.rng.random_bool(0.3) {
                    let k = self.rng.random_range(1..=3);
                    ScoreQuery::Numeric {
                        entity,
                        attribute: num,
                        targets: (0..k).map(|_| self.rng.random_range(0.0..1.0)).collect(),
                    }
                } else {
                    let a = discrete[self.rng.random_range(0..3)];
                    let mut all: Vec<usize> = (0..self.scorer.values[a].len()).collect();
                    all.shuffle(&mut self.rng);
                    let m = self.rng.random_range(1..=all.len().min(self.hp.n_v));
                    let candidates = all[..m].to_vec();
                    let mut score: Vec<usize> = (0..m).filter(|_| self.rng.random_bool(0.6)).collect();
                    if score.is_empty() {
                        score.push(0);
                    }
                    ScoreQuery::Discrete {
                        entity,
                        attribute: a,
                        candidates,
                        score,
                    }
                }
            })
            .collect()
    }

    /// Library scores for `queries`, flattened in query order.
    pub fn library_scores(&self, queries: &[ScoreQuery]) -> Vec<f64> {
        let mut g = Graph::inference();
        let ent = g.constant(self.entities.clone());
        let needed: Vec<(usize, usize)> = queries.iter().flat_map(ScoreQuery::needed).collect();
        let table = self.scorer.table(&mut g, &self.store, ent, &needed).unwrap();
        let f = self.scorer.score(&mut g, &self.store, &table, queries).unwrap();
        g.value(f).data().to_vec()
    }
}

/// Compares every score of a random query batch with the oracles.
pub fn check_scores(seed: u64, want_numeric: Option<bool>) -> Result<(), String> {
    let mut inst = scorer_instance(seed);
    let queries: Vec<ScoreQuery> = inst
        .random_queries(12)
        .into_iter()
        .filter(|q| want_numeric.is_none_or(|n| matches!(q, ScoreQuery::Numeric { .. }) == n))
        .collect();
    if queries.is_empty() {
        return Ok(());
    }
    let got = inst.library_scores(&queries);
    let mut want = Vec::new();
    for q in &queries {
        want.extend(match q {
            ScoreQuery::Discrete { .. } => inst.relational_expected(q),
            ScoreQuery::Numeric { .. } => inst.literal_expected(q),
        });
    }
    if got.len() != want.len() {
        return Err(format!("seed {seed}: {} scores, expected {}", got.len(), want.len()));
    }
    for (i, (g, w)) in got.iter().zip(&want).enumerate() {
        if !close(*g, *w) {
            return Err(format!("seed {seed}: score {i} is {g}, oracle {w}"));
        }
    }
    Ok(())
}

/// Random token matrices for the attention oracle.
pub fn random_tokens(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let mut v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            v[0] += 0.5; // keep norms away from zero
            v
        })
        .collect()
}

pub fn check_attend(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(1..6);
    let (n, n2) = (rng.random_range(1..5), rng.random_range(1..5));
    let w = random_tokens(&mut rng, n, d);
    let w2 = random_tokens(&mut rng, n2, d);
    let want = attend_oracle(&w, &w2);
    let got = kgtruth::align::attend(&w, &w2);
    // The graph path used inside the alignment network.
    let mut g = Graph::inference();
    let a = g.constant(Tensor::from_rows(&w).unwrap());
    let b = g.constant(Tensor::from_rows(&w2).unwrap());
    let cos = g.cosine_similarity(a, b).unwrap();
    let att = g.matmul(cos, b).unwrap();
    let graph = g.value(att).clone();
    for (i, row) in want.iter().enumerate() {
        for (k, x) in row.iter().enumerate() {
            if !close(got[i][k], *x) || !close(graph.get(i, k), *x) {
                return Err(format!("seed {seed}: att[{i}][{k}] = {} / {} vs {x}", got[i][k], graph.get(i, k)));
            }
        }
    }
    Ok(())
}

/// Random mixture configuration: differences in `[0, 2]` with a zero
/// diagonal, scale in `[0.2, 2]`, scores in `[0, 3]`.
pub fn random_mixture(rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, usize, f64, Vec<f64>) {
    let m = rng.random_range(1..6);
    let mut diff = vec![vec![0.0; m]; m];
    for u in 0..m {
        for j in 0..m {
            if u != j {
                diff[u][j] = rng.random_range(0.0..2.0);
            }
        }
    }
    let scores = (0..m).map(|_| rng.random_range(0.0..3.0)).collect();
    (diff, rng.random_range(0..m), rng.random_range(0.2..2.0), scores)
}

pub fn check_observed_value_prob(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (diff, u, scale, scores) = random_mixture(&mut rng);
    let got = kgtruth::truth::observed_value_prob(&diff, u, scale, &scores);
    let want = observed_value_oracle(&diff, u, scale, &scores);
    if close(got, want) {
        Ok(())
    } else {
        Err(format!("seed {seed}: {got} vs oracle {want}"))
    }
}

/// Random claims over three attributes (two discrete, one numeric with
/// near-duplicate values) for the voting oracle.
pub fn voting_instance(seed: u64) -> (KnowledgeGraph, ClaimSet, HashMap<usize, (f64, f64)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = KgBuilder::new();
    for e in 0..4 {
        b.add_entity(&format!("e{e}"));
    }
    b.declare_attribute("rel", ValueType::Entity).unwrap();
    b.declare_attribute("cat", ValueType::Category).unwrap();
    b.add_fact("e0", "size", Value::number(0.0).unwrap()).unwrap();
    b.add_fact("e1", "size", Value::number(10.0).unwrap()).unwrap();
    let (kg, _) = b.build();
    let mut claims = ClaimSet::new();
    let n = rng.random_range(1..30);
    let nums = [1.0, 2.0, 2.0 + 1e-12, 3.5, 7.0];
    for _ in 0..n {
        let e = format!("e{}", rng.random_range(0..4));
        let s = format!("s{}", rng.random_range(0..5));
        match rng.random_range(0..3) {
            0 => claims.push(&kg, &e, "rel", Value::Entity(format!("e{}", rng.random_range(0..4))), &s),
            1 => claims.push(&kg, &e, "cat", Value::Category(["a", "b", "c"][rng.random_range(0..3)].into()), &s),
            _ => claims.push(&kg, &e, "size", Value::number(nums[rng.random_range(0..5)]).unwrap(), &s),
        }
        .ok();
    }
    let mut ranges = HashMap::new();
    ranges.insert(kg.attribute_index("size").unwrap(), (0.0, 10.0));
    (kg, claims, ranges)
}

pub fn check_majority(seed: u64) -> Result<(), String> {
    let (_, claims, ranges) = voting_instance(seed);
    let norm = |a: usize, v: &Value| -> Option<f64> {
        let (lo, hi) = ranges.get(&a)?;
        v.raw_number().map(|x| (x - lo) / (hi - lo))
    };
    let mut got = kgtruth::evalharness::majority_vote(&claims, norm);
    let mut want = majority_oracle(&claims, &norm);
    let key = |t: &(usize, usize, Value)| (t.0, t.1);
    got.sort_by_key(key);
    want.sort_by_key(key);
    let got: BTreeMap<_, _> = got.into_iter().map(|t| ((t.0, t.1), t.2)).collect();
    let want: BTreeMap<_, _> = want.into_iter().map(|t| ((t.0, t.1), t.2)).collect();
    if got == want {
        Ok(())
    } else {
        Err(format!("seed {seed}: {got:?} vs oracle {want:?}"))
    }
}

/// Unseen rows come from the literal-entity network; the oracle reads them
/// back from the scorer, so they are not a circular input.
pub fn value_source_is_unseen(inst: &ScorerInstance, a: usize, j: usize) -> bool {
    matches!(inst.scorer.sources[a][j], ValueSource::Unseen(_))
}

/// A model on a tiny synthetic instance with string alignment prepared.
pub fn tiny_model(seed: u64, n_v: usize) -> (kgtruth::evalharness::SynthData, kgtruth::truth::Model) {
    let cfg = kgtruth::evalharness::SynthConfig {
        entities: 8,
        clusters: 2,
        hubs_per_cluster: 1,
        sources: 3,
        seed,
        ..Default::default()
    };
    let data = kgtruth::evalharness::synth_generate(&cfg).unwrap();
    let hp = HyperParams { n_v, ..tiny_hp(seed) };
    let mut model = kgtruth::truth::Model::new(&data.kg, &data.claims, &hp).unwrap();
    model.prepare_alignment(&Default::default()).unwrap();
    model.refresh_unseen().unwrap();
    (data, model)
}

/// Per-claim probabilities from the graph path against the scalar mixture
/// formula fed with the model's plausibilities, embeddings and scales. With
/// `n_v = 1` the candidate sets hold only the claimed values, so both paths
/// see the same scores.
pub fn check_claim_probabilities(seed: u64) -> Result<(), String> {
    let (data, model) = tiny_model(seed, 1);
    let got = model.claim_probabilities().map_err(|e| e.to_string())?;
    let scored = model.score_groups().map_err(|e| e.to_string())?;
    let emb = model.entity_embeddings().map_err(|e| e.to_string())?;
    let we = model.store.value(model.truth.we);
    let mut learned = 0;
    for (gr, gs) in model.groups.iter().zip(&scored) {
        let m = gr.values.len();
        let diff: Vec<Vec<f64>> = match &gr.fixed_diff {
            Some(t) => (0..m).map(|u| (0..m).map(|j| t.get(u * m + j, 0)).collect()).collect(),
            None => {
                learned += 1;
                let rows: Vec<Vec<f64>> = gr
                    .values
                    .iter()
                    .map(|&j| match model.scorer.sources[gr.attribute][j] {
                        ValueSource::Entity(e) => emb.row_slice(e).to_vec(),
                        ValueSource::Unseen(u) => model.scorer.unseen_rows.row_slice(u).to_vec(),
                        ValueSource::Category(c) => {
                            let name = format!("cat.{}", data.kg.attribute(gr.attribute).name);
                            model.store.value(model.store.get(&name).unwrap()).row_slice(c).to_vec()
                        }
                        ValueSource::String(_) => unreachable!("strings have fixed differences"),
                    })
                    .collect();
                (0..m)
                    .map(|u| (0..m).map(|j| kgtruth::truth::entity_difference(we, &rows[u], &rows[j])).collect())
                    .collect()
            }
        };
        let scores: Vec<f64> = gs.plausibility.iter().map(|p| -p.ln()).collect();
        for c in &gr.claims {
            let scale = model.noise_scale(gr.attribute, c.source);
            let want = observed_value_oracle(&diff, c.observed, scale, &scores);
            let have = got[&c.claim];
            if (have - want).abs() > 1e-9 {
                return Err(format!("seed {seed}: claim {} has {have}, oracle {want}", c.claim));
            }
        }
    }
    if learned == 0 || got.len() != model.groups.iter().map(|g| g.claims.len()).sum::<usize>() {
        return Err(format!("seed {seed}: {learned} learned-difference groups, {} claims", got.len()));
    }
    Ok(())
}

/// Scores every value of every discrete attribute for each entity and
/// checks `Σ_j exp(-F_j / λ_j) = 1`, which recovers the softmax.
pub fn check_softmax_sums(seed: u64) -> Result<(), String> {
    let inst = scorer_instance(seed);
    let mut queries = Vec::new();
    for a in ["rel", "cat", "txt"].map(|n| inst.attr(n)) {
        let n = inst.scorer.values[a].len();
        for entity in 0..inst.entities.rows() {
            queries.push(ScoreQuery::Discrete {
                entity,
                attribute: a,
                candidates: (0..n).collect(),
                score: (0..n).collect(),
            });
        }
    }
    let f = inst.library_scores(&queries);
    let mut pos = 0;
    for q in &queries {
        let ScoreQuery::Discrete { attribute, candidates, .. } = q else { unreachable!() };
        let lam = inst.scorer.weights(*attribute, candidates);
        let total: f64 = (0..candidates.len()).map(|k| (-f[pos + k] / lam[k]).exp()).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(format!("seed {seed}: softmax sums to {total}"));
        }
        pos += candidates.len();
    }
    Ok(())
}

pub fn check_class_weights(counts: &[f64], offset: f64) -> Result<(), String> {
    let w = kgtruth::scoring::class_weights(counts, offset);
    let total: f64 = w.iter().sum();
    if (total - 1.0).abs() > 1e-9 || w.iter().any(|x| !(*x > 0.0)) {
        return Err(format!("weights {w:?} for counts {counts:?}"));
    }
    Ok(())
}

pub fn check_probability_range(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (diff, u, scale, scores) = random_mixture(&mut rng);
    let p = kgtruth::truth::observed_value_prob(&diff, u, scale, &scores);
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(format!("seed {seed}: probability {p}"))
    }
}

/// With one candidate the mixture collapses to the confusion term.
pub fn check_single_candidate(scale: f64, score: f64) -> Result<(), String> {
    let diff = vec![vec![0.0]];
    let p = kgtruth::truth::observed_value_prob(&diff, 0, scale, &[score]);
    let c = kgtruth::truth::confusion_prob(&diff, 0, 0, scale);
    if p == c {
        Ok(())
    } else {
        Err(format!("scale {scale}, score {score}: {p} != {c}"))
    }
}
