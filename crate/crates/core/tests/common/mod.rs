#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use kgtruth::config::{HyperParams, OptimizerKind};
use kgtruth::evalharness::{synth_generate, SynthConfig};
use kgtruth::kgdata::{ClaimSet, KgBuilder, KnowledgeGraph, Value};

pub mod grads;
pub mod oracle;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

/// Generator settings behind the bundled 10-entity toy.
pub fn toy_config() -> SynthConfig {
    SynthConfig {
        entities: 10,
        clusters: 2,
        hubs_per_cluster: 1,
        sources: 4,
        seed: 11,
        ..SynthConfig::default()
    }
}

pub const TOY_CLAIMS: usize = 40;

/// Writes `kg.tsv`, `claims.tsv` (first 40 claims) and `entities.txt`.
pub fn write_toy(dir: &Path) {
    let data = synth_generate(&toy_config()).unwrap();
    let claims = data.claims.filtered(|i, _| i < TOY_CLAIMS);
    assert_eq!(claims.len(), TOY_CLAIMS);
    fs::create_dir_all(dir).unwrap();
    let mut buf = Vec::new();
    data.kg.write_tsv(&mut buf).unwrap();
    fs::write(dir.join("kg.tsv"), &buf).unwrap();
    buf.clear();
    claims.write_tsv(&data.kg, &mut buf).unwrap();
    fs::write(dir.join("claims.tsv"), &buf).unwrap();
    let ids: String = data.kg.entities().map(|e| format!("{e}\n")).collect();
    fs::write(dir.join("entities.txt"), ids).unwrap();
}

/// Small, fast settings for mechanics tests.
pub fn quick_hp() -> HyperParams {
    HyperParams {
        d_e: 16,
        d_h: 16,
        d_de: 8,
        d_ll: 16,
        d_le: 16,
        d_txt: 32,
        ll_hidden: 16,
        ll_epochs: 10,
        le_epochs: 30,
        neighbors: 10,
        ..HyperParams::default()
    }
}

/// Settings used for the synthetic reproduction runs.
pub fn acceptance_hp(seed: u64) -> HyperParams {
    HyperParams {
        optimizer: OptimizerKind::Adam,
        lr: 0.001,
        seed,
        ..HyperParams::default()
    }
}

pub const UNSEEN_WORDS: [&str; 5] = ["amber", "cobalt", "fern", "ivory", "slate"];

/// One unseen-value case: the entity, the true unseen value, and its distractors.
pub struct UnseenCase {
    pub entity: String,
    pub truth: String,
    pub distractors: Vec<String>,
}

/// 50 entities in five named clusters. Every item belongs to its cluster
/// hub and relates to two cluster mates. For ten items the membership is
/// withheld and the true hub is a new entity absent from the KG, named
/// after its cluster. Each candidate is claimed by exactly one source, so
/// only the fact scores separate them.
pub fn unseen_toy() -> (KnowledgeGraph, ClaimSet, Vec<UnseenCase>) {
    let mut b = KgBuilder::new();
    let mut withheld = Vec::new();
    for (c, w) in UNSEEN_WORDS.iter().enumerate() {
        let hub = format!("{w}_hub");
        for i in 0..9 {
            let item = format!("{w}_item_{i}");
            for d in [1, 3] {
                let mate = format!("{w}_item_{}", (i + d) % 9);
                b.add_fact(&item, "related_to", Value::Entity(mate)).unwrap();
            }
            if i < 2 {
                withheld.push((c, item));
            } else {
                b.add_fact(&item, "member_of", Value::Entity(hub.clone())).unwrap();
            }
        }
    }
    let (kg, _) = b.build();
    assert_eq!(kg.num_entities(), 50);
    let mut claims = ClaimSet::new();
    let mut cases = Vec::new();
    for (case, (c, item)) in withheld.into_iter().enumerate() {
        let truth = format!("{}_hub_annex", UNSEEN_WORDS[c]);
        let others: Vec<usize> = (1..5).map(|k| (c + k) % 5).collect();
        let distractors = vec![
            format!("{}_hub", UNSEEN_WORDS[others[0]]),
            format!("{}_hub", UNSEEN_WORDS[others[1]]),
            format!("{}_hub_annex", UNSEEN_WORDS[others[2]]),
            format!("{}_hub_annex", UNSEEN_WORDS[others[3]]),
        ];
        for (s, v) in std::iter::once(&truth).chain(&distractors).enumerate() {
            claims
                .push(&kg, &item, "member_of", Value::Entity(v.clone()), &format!("s{}", (s + case) % 5))
                .unwrap();
        }
        cases.push(UnseenCase {
            entity: item,
            truth,
            distractors,
        });
    }
    (kg, claims, cases)
}
