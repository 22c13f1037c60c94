//! Finite-difference checks of every trainable path on tiny instances.

use diffcore::gradcheck::{check, GradMismatch};
use diffcore::{Graph, ParamId, Tensor};
use kgtruth::align::{bce_with_logits, LeAnn, LlAnn, PairInput};
use kgtruth::scoring::{AttrParams, ValueSource};
use kgtruth::textenc::TextEncoder;
use kgtruth::truth::Model;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::oracle::{tiny_hp, tiny_model};

pub const H: f64 = 1e-5;
pub const TOL: f64 = 1e-4;
pub const INSTANCES: u64 = 20;

pub type Check = Result<(), String>;

fn clean(what: &str, seed: u64, bad: Vec<GradMismatch>) -> Check {
    if bad.is_empty() {
        Ok(())
    } else {
        Err(format!("{what}, seed {seed}: {} mismatches, first {:#?}", bad.len(), &bad[..bad.len().min(3)]))
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

pub fn encoder(seed: u64) -> Check {
    let (_, model) = tiny_model(seed, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let neighbors = model.sampler.sample_all(&mut rng);
    // A random projection keeps layer-normalized outputs from summing to a constant.
    let probe = random_matrix(&mut rng, neighbors.len(), model.hp.d_e);
    let mut store = model.store.clone();
    let bad = check(&mut store, H, TOL, |g, s| {
        let out = model.encoder.forward(g, s, &neighbors).expect("forward");
        let p = g.constant(probe.clone());
        let y = g.mul(out, p)?;
        Ok(g.sum(y))
    })
    .unwrap();
    clean("encoder", seed, bad)
}

pub fn fact_loss(seed: u64, numeric: bool) -> Check {
    let (data, model) = tiny_model(seed, 4);
    let facts: Vec<usize> = (0..data.kg.facts().len())
        .filter(|&f| model.scorer.value_types[data.kg.facts()[f].attribute].is_numeric() == numeric)
        .collect();
    if facts.is_empty() {
        return Err(format!("seed {seed} has no facts of this kind"));
    }
    let mut store = model.store.clone();
    let bad = check(&mut store, H, TOL, |g, s| {
        let mut m = model.clone();
        m.store = s.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(m.fact_loss(g, &data.kg, &facts, &mut rng).expect("forward"))
    })
    .unwrap();
    clean(if numeric { "literal fact loss" } else { "relational fact loss" }, seed, bad)
}

/// Smallest `|(v_u - v_j) W_e|` entry over learned-difference groups. The
/// L1 distance has a corner there, and central differences straddling it
/// measure a one-sided slope.
pub fn nearest_corner(model: &Model) -> f64 {
    let emb = model.entity_embeddings().unwrap();
    let we = model.store.value(model.truth.we);
    let mut best = f64::INFINITY;
    for gr in model.groups.iter().filter(|g| g.fixed_diff.is_none()) {
        let rows: Vec<&[f64]> = gr
            .values
            .iter()
            .map(|&j| match model.scorer.sources[gr.attribute][j] {
                ValueSource::Entity(e) => emb.row_slice(e),
                ValueSource::Unseen(u) => model.scorer.unseen_rows.row_slice(u),
                ValueSource::Category(c) => model.store.value(category_table(model, gr.attribute)).row_slice(c),
                ValueSource::String(_) => unreachable!("strings have fixed differences"),
            })
            .collect();
        for u in 0..rows.len() {
            for j in u + 1..rows.len() {
                for c in 0..we.cols() {
                    let d: f64 = (0..we.rows()).map(|r| (rows[u][r] - rows[j][r]) * we.get(r, c)).sum();
                    best = best.min(d.abs());
                }
            }
        }
    }
    best
}

fn category_table(model: &Model, a: usize) -> ParamId {
    match &model.scorer.params[a] {
        AttrParams::Discrete { categories: Some(id), .. } => *id,
        _ => unreachable!("category values come from a table"),
    }
}

/// Checks `INSTANCES` claim-loss instances, skipping seeds whose projected
/// differences sit within `1e-3` of a corner. Returns the number skipped.
pub fn claim_loss_all() -> Result<usize, String> {
    let mut checked = 0;
    let mut redrawn = 0;
    for seed in 0.. {
        if checked == INSTANCES {
            break;
        }
        let (_, model) = tiny_model(seed, 4);
        if nearest_corner(&model) < 1e-3 {
            redrawn += 1;
            if redrawn > INSTANCES as usize {
                return Err(format!("{redrawn} instances sat on a corner"));
            }
            continue;
        }
        let mut store = model.store.clone();
        let bad = check(&mut store, H, TOL, |g, s| {
            let mut m = model.clone();
            m.store = s.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let entities = m.encode(g, &mut rng).expect("encode");
            let groups: Vec<_> = m.groups.iter().collect();
            Ok(m.claim_loss_graph(g, entities, &groups, &mut rng).expect("forward").0)
        })
        .unwrap();
        clean("claim loss", seed, bad)?;
        checked += 1;
    }
    Ok(redrawn)
}

const WORDS: [&str; 8] = ["pop", "rock", "indie", "folk", "jazz", "dream", "synth", "punk"];

fn phrase(rng: &mut ChaCha8Rng, len: usize) -> String {
    (0..len).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
}

pub fn string_alignment(seed: u64) -> Check {
    let hp = tiny_hp(seed);
    let text = TextEncoder::hash(hp.d_txt);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = rng.random_range(1..4);
    let inputs: Vec<PairInput> = (0..3)
        .map(|_| {
            let n2 = rng.random_range(1..4);
            PairInput::encode(&text, &phrase(&mut rng, len), &phrase(&mut rng, n2)).unwrap()
        })
        .collect();
    let labels: Vec<f64> = (0..3).map(|_| f64::from(rng.random_range(0..2u8))).collect();
    let net = LlAnn::new(hp.d_txt, hp.d_ll, hp.ll_hidden, seed).unwrap();
    let mut store = net.store.clone();
    let bad = check(&mut store, H, TOL, |g, s| {
        let mut n = net.clone();
        n.store = s.clone();
        let batch: Vec<&PairInput> = inputs.iter().collect();
        let z = n.logits(g, &batch).expect("forward");
        Ok(bce_with_logits(g, z, &labels).expect("loss"))
    })
    .unwrap();
    clean("string alignment", seed, bad)
}

pub fn literal_entity(seed: u64) -> Check {
    let hp = tiny_hp(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random_matrix(&mut rng, 5, hp.d_txt);
    let y = random_matrix(&mut rng, 5, hp.d_e).map(|v| 0.5 + 0.4 * v);
    let net = LeAnn::new(hp.d_txt, hp.d_le, hp.d_e, seed).unwrap();
    let mut store = net.store.clone();
    let bad = check(&mut store, H, TOL, |g, s| {
        let mut n = net.clone();
        n.store = s.clone();
        let xv = g.constant(x.clone());
        let out = n.forward(g, xv).expect("forward");
        let t = g.constant(y.clone());
        let r = g.sub(out, t)?;
        Ok(g.l1_norm(r))
    })
    .unwrap();
    clean("literal-entity network", seed, bad)
}

/// Guards the checks above against passing on all-zero gradients.
pub fn gradients_reach_truth_parameters() -> Check {
    let (data, model) = tiny_model(1, 4);
    let mut store = model.store.clone();
    store.zero_grads();
    let mut g = Graph::new(true, 17);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let facts: Vec<usize> = (0..data.kg.facts().len()).collect();
    let f = model.fact_loss(&mut g, &data.kg, &facts, &mut rng).unwrap();
    let entities = model.encode(&mut g, &mut rng).unwrap();
    let groups: Vec<_> = model.groups.iter().collect();
    let (c, _) = model.claim_loss_graph(&mut g, entities, &groups, &mut rng).unwrap();
    let total = g.add(f, c).unwrap();
    g.backward(total, &mut store).unwrap();
    for name in ["truth.sigma", "truth.k", "truth.we", "str.proj"] {
        let id = store.get(name).unwrap();
        if store.grad(id).data().iter().all(|v| *v == 0.0) {
            return Err(format!("{name} has no gradient"));
        }
    }
    Ok(())
}

/// Every path on `INSTANCES` instances, stopping at the first failure.
pub fn all_paths() -> Check {
    for seed in 0..INSTANCES {
        encoder(seed)?;
        fact_loss(seed, false)?;
        fact_loss(seed, true)?;
        string_alignment(seed)?;
        literal_entity(seed)?;
    }
    claim_loss_all()?;
    gradients_reach_truth_parameters()
}
