//! Text-to-vector encoders: per-token sequences and pooled sentence vectors.
//!
//! The default backend hashes character trigrams of each `#token#` into
//! `d_txt` signed buckets. It is deterministic and needs no model files,
//! at the price of order-invariant pooling.

use std::collections::HashMap;
use std::fs;
use std::hash::Hasher;
use std::path::Path;
use std::str::FromStr;

use fnv::FnvHasher;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Case-folded whitespace tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct TokenSequence {
    pub tokens: Vec<String>,
    pub vectors: Vec<Vec<f64>>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TextEncoderKind {
    HashNgram,
    Trainable,
    External(String),
}

impl FromStr for TextEncoderKind {
    type Err = String;

    /// `hash_ngram`, `trainable`, or `external:<path>`.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "hash_ngram" => Ok(Self::HashNgram),
            "trainable" => Ok(Self::Trainable),
            _ => match s.strip_prefix("external:") {
                Some(p) if !p.is_empty() => Ok(Self::External(p.to_string())),
                _ => Err(format!(
                    "unknown text encoder `{s}` (expected hash_ngram, trainable or external:<path>)"
                )),
            },
        }
    }
}

impl std::fmt::Display for TextEncoderKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::HashNgram => f.write_str("hash_ngram"),
            Self::Trainable => f.write_str("trainable"),
            Self::External(p) => write!(f, "external:{p}"),
        }
    }
}

#[derive(Clone, Debug)]
pub enum TextEncoder {
    HashNgram { dim: usize },
    /// Seeded token table; rows may be fine-tuned through [`TextEncoder::token_ids`].
    Trainable(TokenTable),
    External { dim: usize, table: HashMap<String, Vec<f64>> },
}

/// Vocabulary with one vector per token; out-of-vocabulary tokens fall back
/// to the hash backend.
#[derive(Clone, Debug)]
pub struct TokenTable {
    pub dim: usize,
    pub vocab: HashMap<String, usize>,
    pub rows: Vec<Vec<f64>>,
}

impl TextEncoder {
    pub fn hash(dim: usize) -> Self {
        TextEncoder::HashNgram { dim }
    }

    /// Builds the backend named by `kind`. `corpus` seeds the trainable vocabulary.
    pub fn build<'a>(
        kind: &TextEncoderKind,
        dim: usize,
        seed: u64,
        corpus: impl IntoIterator<Item = &'a str>,
    ) -> Result<Self> {
        match kind {
            TextEncoderKind::HashNgram => Ok(Self::hash(dim)),
            TextEncoderKind::Trainable => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7e47);
                let mut vocab = HashMap::new();
                let mut rows = Vec::new();
                let bound = 1.0 / (dim as f64).sqrt();
                for text in corpus {
                    for tok in tokenize(text) {
                        if !vocab.contains_key(&tok) {
                            vocab.insert(tok, rows.len());
                            rows.push((0..dim).map(|_| rng.random_range(-bound..=bound)).collect());
                        }
                    }
                }
                Ok(TextEncoder::Trainable(TokenTable { dim, vocab, rows }))
            }
            TextEncoderKind::External(path) => Self::load_external(path),
        }
    }

    /// Reads a TSV sidecar `text <TAB> v1,...,vd`; keys are matched case-folded.
    pub fn load_external(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut table = HashMap::new();
        let mut dim = None;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |msg: String| Error::Parse {
                path: path.into(),
                line: i + 1,
                msg,
            };
            let (key, vec) = line
                .split_once('\t')
                .ok_or_else(|| parse_err("expected `text<TAB>v1,...,vd`".into()))?;
            let v: Vec<f64> = vec
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| parse_err(e.to_string()))?;
            if v.iter().any(|x| !x.is_finite()) {
                return Err(parse_err("non-finite component".into()));
            }
            match dim {
                None => dim = Some(v.len()),
                Some(d) if d != v.len() => {
                    return Err(parse_err(format!("dimension {} differs from {d}", v.len())))
                }
                _ => {}
            }
            table.insert(tokenize(key).join(" "), v);
        }
        Ok(TextEncoder::External {
            dim: dim.unwrap_or(0),
            table,
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            TextEncoder::HashNgram { dim } => *dim,
            TextEncoder::Trainable(t) => t.dim,
            TextEncoder::External { dim, .. } => *dim,
        }
    }

    pub fn is_trainable(&self) -> bool {
        matches!(self, TextEncoder::Trainable(_))
    }

    fn token_vector(&self, token: &str) -> Result<Vec<f64>> {
        match self {
            TextEncoder::HashNgram { dim } => Ok(hash_token(token, *dim)),
            TextEncoder::Trainable(t) => Ok(match t.vocab.get(token) {
                Some(&i) => t.rows[i].clone(),
                None => hash_token(token, t.dim),
            }),
            TextEncoder::External { table, .. } => table
                .get(token)
                .cloned()
                .ok_or_else(|| Error::MissingVector(token.to_string())),
        }
    }

    pub fn encode_tokens(&self, text: &str) -> Result<TokenSequence> {
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return Err(Error::EmptyText);
        }
        let vectors = tokens
            .iter()
            .map(|t| self.token_vector(t))
            .collect::<Result<_>>()?;
        Ok(TokenSequence { tokens, vectors })
    }

    /// Mean of the token vectors, l2-normalized. The external backend
    /// prefers a whole-text entry when one exists.
    pub fn encode_pooled(&self, text: &str) -> Result<Vec<f64>> {
        if let TextEncoder::External { table, .. } = self {
            if let Some(v) = table.get(&tokenize(text).join(" ")) {
                let mut v = v.clone();
                l2_normalize(&mut v);
                return Ok(v);
            }
        }
        let seq = self.encode_tokens(text)?;
        let mut mean = vec![0.0; self.dim()];
        for v in &seq.vectors {
            for (m, x) in mean.iter_mut().zip(v) {
                *m += x;
            }
        }
        let n = seq.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        l2_normalize(&mut mean);
        Ok(mean)
    }

    /// Row indices into the trainable table (`None` for out-of-vocabulary
    /// tokens or other backends).
    pub fn token_ids(&self, text: &str) -> Option<Vec<usize>> {
        match self {
            TextEncoder::Trainable(t) => tokenize(text).iter().map(|tok| t.vocab.get(tok).copied()).collect(),
            _ => None,
        }
    }
}

/// Signed trigram hashing of `#token#`, l2-normalized.
pub fn hash_token(token: &str, dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    for gram in char_trigrams(token) {
        let mut h = FnvHasher::default();
        h.write(gram.as_bytes());
        let x = h.finish();
        let bucket = (x % dim as u64) as usize;
        v[bucket] += if x >> 63 == 1 { -1.0 } else { 1.0 };
    }
    l2_normalize(&mut v);
    v
}

/// Character trigrams of `#token#`.
pub fn char_trigrams(token: &str) -> Vec<String> {
    let padded: Vec<char> = format!("#{token}#").chars().collect();
    padded.windows(3).map(|w| w.iter().collect()).collect()
}

pub fn l2_normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn token_count_and_determinism() {
        let enc = TextEncoder::hash(64);
        let seq = enc.encode_tokens("Pop rock").unwrap();
        assert_eq!(seq.tokens, ["pop", "rock"]);
        let again = enc.encode_tokens("pop pop").unwrap();
        assert_eq!(again.vectors[0], again.vectors[1]);
        assert_eq!(again.vectors[0], seq.vectors[0]);
    }

    #[test]
    fn empty_text_is_an_error() {
        let enc = TextEncoder::hash(64);
        assert!(matches!(enc.encode_tokens("   "), Err(Error::EmptyText)));
        assert!(enc.encode_pooled("").is_err());
    }

    #[test]
    fn pooled_single_token_is_the_token_vector() {
        let enc = TextEncoder::hash(64);
        let p = enc.encode_pooled("rock").unwrap();
        let t = enc.encode_tokens("rock").unwrap();
        for (a, b) in p.iter().zip(&t.vectors[0]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn external_backend_reads_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("vec.tsv");
        fs::write(&p, "pop\t1,0,0\nrock\t0,1,0\npop rock\t3,4,0\n").unwrap();
        let enc = TextEncoder::load_external(&p).unwrap();
        assert_eq!(enc.dim(), 3);
        assert_eq!(enc.encode_pooled("Pop Rock").unwrap(), vec![0.6, 0.8, 0.0]);
        assert!(matches!(enc.encode_tokens("jazz"), Err(Error::MissingVector(_))));
    }

    #[test]
    fn trainable_backend_exposes_token_ids() {
        let enc = TextEncoder::build(&TextEncoderKind::Trainable, 8, 1, ["pop rock", "rock"]).unwrap();
        assert_eq!(enc.token_ids("rock pop"), Some(vec![1, 0]));
        assert_eq!(enc.token_ids("jazz"), None);
        assert_eq!(enc.encode_pooled("jazz").unwrap().len(), 8);
    }

    #[test]
    fn kind_parses_from_config_strings() {
        assert_eq!("hash_ngram".parse(), Ok(TextEncoderKind::HashNgram));
        assert_eq!(
            "external:/tmp/v.tsv".parse(),
            Ok(TextEncoderKind::External("/tmp/v.tsv".into()))
        );
        assert!("bert".parse::<TextEncoderKind>().is_err());
    }
}
