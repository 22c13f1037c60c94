//! Hyperparameters, flat `key = value` config files, and parameter census.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

pub use diffcore::OptimizerKind;

use crate::error::{Error, Result};
use crate::textenc::TextEncoderKind;

/// Every tunable quantity of a run. Defaults are the published settings;
/// `d_txt` and the auxiliary-network budgets are desk-scale choices.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperParams {
    pub d_e: usize,
    pub d_h: usize,
    pub layers: usize,
    pub neighbors: usize,
    pub n_v: usize,
    pub lr: f64,
    pub batch: usize,
    pub fact_epochs: usize,
    pub inference_epochs: usize,
    pub d_de: usize,
    pub d_ll: usize,
    pub d_le: usize,
    pub d_txt: usize,
    pub dropout: f64,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub text_encoder: TextEncoderKind,
    /// Offset inside the class-weight logarithm: `1 / ln(1 + offset + count)`.
    pub class_weight_offset: f64,
    /// Initial `k_a * sigma_s`.
    pub init_noise_scale: f64,
    pub ll_epochs: usize,
    pub ll_hidden: usize,
    pub ll_lr: f64,
    pub ll_batch: usize,
    pub le_epochs: usize,
    pub le_lr: f64,
    pub threshold: f64,
    pub layer_norm_eps: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            d_e: 100,
            d_h: 100,
            layers: 2,
            neighbors: 50,
            n_v: 10,
            lr: 0.005,
            batch: 128,
            fact_epochs: 20,
            inference_epochs: 20,
            d_de: 25,
            d_ll: 100,
            d_le: 100,
            d_txt: 64,
            dropout: 0.1,
            seed: 42,
            optimizer: OptimizerKind::Sgd,
            text_encoder: TextEncoderKind::HashNgram,
            class_weight_offset: 1.0,
            init_noise_scale: 0.3,
            ll_epochs: 60,
            ll_hidden: 100,
            ll_lr: 0.0005,
            ll_batch: 4,
            le_epochs: 60,
            le_lr: 0.005,
            threshold: 0.5,
            layer_norm_eps: 1e-5,
        }
    }
}

/// Keys accepted by [`HyperParams::set`], in canonical order.
pub const KEYS: &[&str] = &[
    "d_e",
    "d_h",
    "layers",
    "neighbors",
    "n_v",
    "lr",
    "batch",
    "fact_epochs",
    "inference_epochs",
    "d_de",
    "d_ll",
    "d_le",
    "d_txt",
    "dropout",
    "seed",
    "optimizer",
    "text_encoder",
    "class_weight_offset",
    "init_noise_scale",
    "ll_epochs",
    "ll_hidden",
    "ll_lr",
    "ll_batch",
    "le_epochs",
    "le_lr",
    "threshold",
    "layer_norm_eps",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key} = {value}: {e}")))
}

impl HyperParams {
    pub fn d_init(&self) -> usize {
        self.d_e / 2
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "d_e" => self.d_e = parse(key, v)?,
            "d_h" => self.d_h = parse(key, v)?,
            "layers" => self.layers = parse(key, v)?,
            "neighbors" => self.neighbors = parse(key, v)?,
            "n_v" => self.n_v = parse(key, v)?,
            "lr" => self.lr = parse(key, v)?,
            "batch" => self.batch = parse(key, v)?,
            "fact_epochs" => self.fact_epochs = parse(key, v)?,
            "inference_epochs" => self.inference_epochs = parse(key, v)?,
            "d_de" => self.d_de = parse(key, v)?,
            "d_ll" => self.d_ll = parse(key, v)?,
            "d_le" => self.d_le = parse(key, v)?,
            "d_txt" => self.d_txt = parse(key, v)?,
            "dropout" => self.dropout = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "optimizer" => self.optimizer = parse(key, v)?,
            "text_encoder" => self.text_encoder = parse(key, v)?,
            "class_weight_offset" => self.class_weight_offset = parse(key, v)?,
            "init_noise_scale" => self.init_noise_scale = parse(key, v)?,
            "ll_epochs" => self.ll_epochs = parse(key, v)?,
            "ll_hidden" => self.ll_hidden = parse(key, v)?,
            "ll_lr" => self.ll_lr = parse(key, v)?,
            "ll_batch" => self.ll_batch = parse(key, v)?,
            "le_epochs" => self.le_epochs = parse(key, v)?,
            "le_lr" => self.le_lr = parse(key, v)?,
            "threshold" => self.threshold = parse(key, v)?,
            "layer_norm_eps" => self.layer_norm_eps = parse(key, v)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "d_e" => self.d_e.to_string(),
            "d_h" => self.d_h.to_string(),
            "layers" => self.layers.to_string(),
            "neighbors" => self.neighbors.to_string(),
            "n_v" => self.n_v.to_string(),
            "lr" => self.lr.to_string(),
            "batch" => self.batch.to_string(),
            "fact_epochs" => self.fact_epochs.to_string(),
            "inference_epochs" => self.inference_epochs.to_string(),
            "d_de" => self.d_de.to_string(),
            "d_ll" => self.d_ll.to_string(),
            "d_le" => self.d_le.to_string(),
            "d_txt" => self.d_txt.to_string(),
            "dropout" => self.dropout.to_string(),
            "seed" => self.seed.to_string(),
            "optimizer" => self.optimizer.to_string(),
            "text_encoder" => self.text_encoder.to_string(),
            "class_weight_offset" => self.class_weight_offset.to_string(),
            "init_noise_scale" => self.init_noise_scale.to_string(),
            "ll_epochs" => self.ll_epochs.to_string(),
            "ll_hidden" => self.ll_hidden.to_string(),
            "ll_lr" => self.ll_lr.to_string(),
            "ll_batch" => self.ll_batch.to_string(),
            "le_epochs" => self.le_epochs.to_string(),
            "le_lr" => self.le_lr.to_string(),
            "threshold" => self.threshold.to_string(),
            "layer_norm_eps" => self.layer_norm_eps.to_string(),
            _ => return None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.d_e < 2 || self.d_e % 2 != 0 {
            return bad("d_e must be an even number >= 2");
        }
        if self.layers == 0 {
            return bad("layers must be >= 1");
        }
        if self.n_v == 0 || self.batch == 0 || self.d_txt == 0 {
            return bad("n_v, batch and d_txt must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if !(self.lr > 0.0) || !(self.init_noise_scale > 0.0) {
            return bad("lr and init_noise_scale must be positive");
        }
        if !(self.class_weight_offset >= 0.0) {
            return bad("class_weight_offset must be >= 0");
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<BTreeMap<String, String>> {
        let mut extra = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if KEYS.contains(&k) {
                self.set(k, v)?;
            } else {
                extra.insert(k.to_string(), v.to_string());
            }
        }
        Ok(extra)
    }

    pub fn load_file(&mut self, path: impl AsRef<Path>) -> Result<BTreeMap<String, String>> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text)
    }

    /// Canonical `key = value` rendering, one line per key.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for k in KEYS {
            let _ = writeln!(out, "{k} = {}", self.get(k).expect("known key"));
        }
        out
    }
}

/// Sizes entering the closed-form parameter count.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CensusInput {
    pub entities: usize,
    pub relational_scored: usize,
    pub literal_scored: usize,
    pub sources: usize,
    pub d_txt: usize,
}

/// The published closed form:
/// `(K-1) d_h^2 + d_h d_e + d_e(d_e/4 + N_e/2 + N_rel + d_txt + N_lit) + N_lit
///  + d_ll (d_txt + 1) + 8 d_txt^2 + d_le (d_txt + d_e) + N_lit + N_rel + N_s + d_e d_de`.
pub fn published_parameter_count(hp: &HyperParams, c: CensusInput) -> usize {
    let k = hp.layers;
    let (d_h, d_e) = (hp.d_h, hp.d_e);
    (k - 1) * d_h * d_h
        + d_h * d_e
        + d_e * (d_e / 4 + c.entities / 2 + c.relational_scored + c.d_txt + c.literal_scored)
        + c.literal_scored
        + hp.d_ll * (c.d_txt + 1)
        + 8 * c.d_txt * c.d_txt
        + hp.d_le * (c.d_txt + d_e)
        + c.literal_scored
        + c.relational_scored
        + c.sources
        + d_e * hp.d_de
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_published_settings() {
        let hp = HyperParams::default();
        assert_eq!((hp.d_e, hp.d_h, hp.layers, hp.neighbors, hp.n_v), (100, 100, 2, 50, 10));
        assert_eq!((hp.lr, hp.batch), (0.005, 128));
        assert_eq!((hp.fact_epochs, hp.inference_epochs), (20, 20));
        assert_eq!((hp.d_de, hp.d_ll, hp.d_le), (25, 100, 100));
        assert_eq!(hp.d_init(), 50);
        hp.validate().unwrap();
    }

    #[test]
    fn text_round_trip_and_overrides() {
        let mut hp = HyperParams::default();
        hp.lr = 0.01;
        hp.optimizer = OptimizerKind::Adam;
        let mut back = HyperParams::default();
        let extra = back
            .apply_text(&(hp.to_text() + "kg = facts.tsv # comment\n"))
            .unwrap();
        assert_eq!(back, hp);
        assert_eq!(extra.get("kg").map(String::as_str), Some("facts.tsv"));
        assert!(back.set("nonsense", "1").is_err());
        assert!(back.set("lr", "fast").is_err());
    }
}
