//! Command-line driver.
//!
//! Hyperparameters resolve in order: built-in defaults, `--config FILE`,
//! repeated `--set KEY=VALUE`, then `--seed`. Exit codes: 0 on success,
//! 2 for usage, input and configuration errors, 1 for everything else.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use indexmap::{IndexMap, IndexSet};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::align::{load_pairs, train_ll_ann, LlTrainConfig};
use crate::config::{HyperParams, KEYS};
use crate::evalharness::{
    average_by_level, eval_literal, eval_with_implied_strings, sensitivity_suite, synth_generate, write_csv, Axis,
    Prf, SynthConfig, Triple,
};
use crate::kgdata::{
    load_claims, load_entity_list, load_kg_with, load_triples, norm_in_range, write_triples, Synonyms, Value,
    ValueType,
};
use crate::textenc::TextEncoder;
use crate::truth::{Model, TrainOptions, TruthRecord};
use crate::Error;

/// Environment variable holding the log filter (`info`, `debug`, ...).
pub const LOG_ENV: &str = "KGTRUTH_LOG";

#[derive(Debug, Parser)]
#[command(name = "kgtruth", version, about = "Knowledge-graph completion from noisy multi-source claims")]
pub struct Cli {
    /// Seed for every random choice; overrides `seed` from the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Flat `key = value` config file.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Hyperparameter override; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train on a KG and claims, then write truths, source scores and a checkpoint.
    Train(TrainArgs),
    /// Score a truths file against a gold facts file.
    Eval(EvalArgs),
    /// Write a synthetic KG, claims, and gold set.
    Synth(SynthArgs),
    /// Sweep one generator axis and write per-run metrics as CSV.
    Sensitivity(SensitivityArgs),
    /// Train the string alignment network on labeled pairs and report held-out metrics.
    AlignEval(AlignEvalArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Facts TSV: entity, attribute, type, value.
    #[arg(long)]
    pub kg: Option<PathBuf>,
    /// Claims TSV: entity, attribute, type, value, source.
    #[arg(long)]
    pub claims: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Category synonyms TSV: surface, canonical.
    #[arg(long)]
    pub synonyms: Option<PathBuf>,
    /// Extra entity ids, one per line, for entities that have no facts.
    #[arg(long)]
    pub entities: Option<PathBuf>,
    /// Labeled string pairs for the alignment network.
    #[arg(long)]
    pub align_pairs: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Truths JSON-lines file written by `train`.
    #[arg(long)]
    pub truths: Option<PathBuf>,
    /// Gold facts TSV.
    #[arg(long)]
    pub gold: Option<PathBuf>,
    /// KG whose numeric ranges normalize literal errors.
    #[arg(long)]
    pub kg: Option<PathBuf>,
    #[arg(long)]
    pub synonyms: Option<PathBuf>,
    /// Also write the metrics as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct GeneratorArgs {
    #[arg(long, default_value_t = 200)]
    pub num_entities: usize,
    #[arg(long, default_value_t = 10)]
    pub num_sources: usize,
    /// Extra corruption probability on every claim.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Share of claims kept.
    #[arg(long, default_value_t = 1.0)]
    pub claim_keep: f64,
    /// Share of KG facts kept as prior knowledge.
    #[arg(long, default_value_t = 1.0)]
    pub prior_keep: f64,
}

impl GeneratorArgs {
    fn config(&self, seed: u64) -> SynthConfig {
        SynthConfig {
            entities: self.num_entities,
            sources: self.num_sources,
            noise: self.noise,
            claim_keep: self.claim_keep,
            prior_keep: self.prior_keep,
            seed,
            ..SynthConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub generator: GeneratorArgs,
}

#[derive(Debug, Args)]
pub struct SensitivityArgs {
    /// noise, claims or prior.
    #[arg(long)]
    pub axis: Axis,
    /// Comma-separated levels; the published sweep when absent.
    #[arg(long, value_delimiter = ',')]
    pub levels: Vec<f64>,
    /// Comma-separated seeds; five consecutive seeds from `--seed` when absent.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    /// CSV output path.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub generator: GeneratorArgs,
}

#[derive(Debug, Args)]
pub struct AlignEvalArgs {
    /// Pairs TSV: v, v', label (1 when v infers v').
    #[arg(long)]
    pub pairs: PathBuf,
}

/// Usage-level failure (missing flag, bad value) reported with exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

fn hyperparameter_help() -> String {
    let d = HyperParams::default();
    let mut s = String::from("Hyperparameters (--set KEY=VALUE or a --config file; defaults shown):\n");
    for k in KEYS {
        s.push_str(&format!("  {k} = {}\n", d.get(k).expect("known key")));
    }
    s.push_str(&format!("\nLog level: {LOG_ENV}=info|debug|warn"));
    s
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn main_with(args: impl IntoIterator<Item = impl Into<OsString> + Clone>) -> i32 {
    let help = hyperparameter_help();
    let cmd = Cli::command()
        .after_help(help.clone())
        .mut_subcommands(|s| s.after_help(help.clone()));
    let cli = match cmd.try_get_matches_from(args).and_then(|m| Cli::from_arg_matches(&m)) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let mut out = std::io::stdout().lock();
    match run(cli, &mut out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", render(&e));
            exit_code(&e)
        }
    }
}

/// Joins the cause chain, skipping causes already quoted by their parent.
pub fn render(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if !out.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

/// 2 for usage, input and configuration problems; 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<UsageError>() || cause.is::<std::io::Error>() || cause.is::<serde_json::Error>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Parse { .. }
                | Error::Io { .. }
                | Error::TypeConflict { .. }
                | Error::UnknownAttribute(_)
                | Error::UnknownEntity(_)
                | Error::TypeMismatch(_)
                | Error::Config(_)
                | Error::Json(_)
                | Error::MissingVector(_) => 2,
                _ => 1,
            };
        }
    }
    1
}

/// Effective hyperparameters plus non-hyperparameter keys found in the config file.
pub fn resolve_config(cli: &Cli) -> anyhow::Result<(HyperParams, BTreeMap<String, String>)> {
    let mut hp = HyperParams::default();
    let mut extra = BTreeMap::new();
    if let Some(path) = &cli.config {
        extra = hp.load_file(path)?;
    }
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| UsageError(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        hp.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = cli.seed {
        hp.seed = seed;
    }
    hp.validate()?;
    let unknown: Vec<&String> = extra.keys().filter(|k| !PATH_KEYS.contains(&k.as_str())).collect();
    if !unknown.is_empty() {
        return Err(Error::Config(format!("unknown config keys {unknown:?}")).into());
    }
    Ok((hp, extra))
}

/// Path keys a config file may carry in addition to hyperparameters.
pub const PATH_KEYS: &[&str] = &["kg", "claims", "gold", "truths", "out", "synonyms", "entities", "align_pairs"];

fn path_arg(flag: &Option<PathBuf>, extra: &BTreeMap<String, String>, key: &str) -> Option<PathBuf> {
    flag.clone().or_else(|| extra.get(key).map(PathBuf::from))
}

fn required(flag: &Option<PathBuf>, extra: &BTreeMap<String, String>, key: &str) -> anyhow::Result<PathBuf> {
    path_arg(flag, extra, key).ok_or_else(|| UsageError(format!("missing --{}", key.replace('_', "-"))).into())
}

fn load_synonyms(path: Option<PathBuf>) -> anyhow::Result<Synonyms> {
    Ok(match path {
        Some(p) => Synonyms::load(p)?,
        None => Synonyms::new(),
    })
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

pub fn run(cli: Cli, out: &mut dyn Write) -> anyhow::Result<()> {
    let (hp, extra) = resolve_config(&cli)?;
    match &cli.command {
        Command::Train(a) => cmd_train(a, &hp, &extra, out),
        Command::Eval(a) => cmd_eval(a, &extra, out),
        Command::Synth(a) => cmd_synth(a, &hp, out),
        Command::Sensitivity(a) => cmd_sensitivity(a, &hp, cli.seed, out),
        Command::AlignEval(a) => cmd_align_eval(a, &hp, out),
    }
}

fn cmd_train(a: &TrainArgs, hp: &HyperParams, extra: &BTreeMap<String, String>, out: &mut dyn Write) -> anyhow::Result<()> {
    let kg_path = required(&a.kg, extra, "kg")?;
    let claims_path = required(&a.claims, extra, "claims")?;
    let out_dir = required(&a.out, extra, "out")?;
    let synonyms = load_synonyms(path_arg(&a.synonyms, extra, "synonyms"))?;
    let total = Instant::now();

    let (mut kg, kg_report) = load_kg_with(&kg_path, &synonyms)?;
    if let Some(p) = path_arg(&a.entities, extra, "entities") {
        let ids = load_entity_list(p)?;
        kg = kg.with_entities(ids.iter().map(String::as_str));
    }
    let (claims, claim_report) = load_claims(&claims_path, &kg, &synonyms)?;
    let options = TrainOptions {
        align_pairs: path_arg(&a.align_pairs, extra, "align_pairs").map(load_pairs).transpose()?,
    };

    fs::create_dir_all(&out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;
    let ckpt = out_dir.join("checkpoint");
    fs::create_dir_all(&ckpt)?;
    let config_text = hp.to_text();
    fs::write(out_dir.join("config.txt"), &config_text)?;

    let mut model = Model::new(&kg, &claims, hp)?;
    let report = match model.train(&kg, &options) {
        Ok(r) => r,
        Err(e @ Error::Diverged { .. }) => {
            // The store was rolled back to the last finite state.
            model.store.save_json(ckpt.join("model.json"))?;
            return Err(anyhow::Error::new(e).context(format!("last finite state saved under {}", ckpt.display())));
        }
        Err(e) => return Err(e.into()),
    };
    let start = Instant::now();
    let truths = model.infer(&kg)?;
    let inference = start.elapsed();

    truths.write_jsonl(create(&out_dir.join("truths.jsonl"))?)?;
    let mut w = create(&out_dir.join("sources.jsonl"))?;
    for r in model.sources_report() {
        serde_json::to_writer(&mut w, &r)?;
        writeln!(w)?;
    }
    w.flush()?;
    model.store.save_json(ckpt.join("model.json"))?;
    model.le.store.save_json(ckpt.join("le.json"))?;
    if let Some(ll) = &model.ll {
        ll.store.save_json(ckpt.join("ll.json"))?;
    }

    let manifest = json!({
        "seed": hp.seed,
        "config_sha256": hex::encode(Sha256::digest(config_text.as_bytes())),
        "inputs": {
            "kg": kg_path.display().to_string(),
            "claims": claims_path.display().to_string(),
        },
        "counts": {
            "entities": kg.num_entities(),
            "facts": kg.facts().len(),
            "facts_duplicate": kg_report.duplicates,
            "facts_dropped": kg_report.dropped_facts,
            "claims": claims.len(),
            "claims_dropped": claim_report.dropped(),
            "claims_duplicate": claim_report.duplicates,
            "truths": truths.records.len(),
            "parameters": model.param_count(),
        },
        "seconds": {
            "alignment": report.alignment.as_secs_f64(),
            "phase1": report.phase1.as_secs_f64(),
            "le_fit": report.le_fit.as_secs_f64(),
            "phase2": report.phase2.as_secs_f64(),
            "inference": inference.as_secs_f64(),
            "total": total.elapsed().as_secs_f64(),
        },
        "fact_losses": report.fact_losses,
    });
    fs::write(out_dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    writeln!(
        out,
        "accepted {} truths from {} claims ({} sources); wrote {}",
        truths.records.len(),
        claims.len(),
        claims.num_sources(),
        out_dir.display()
    )?;
    Ok(())
}

/// Reads the JSON-lines output of `train`.
pub fn load_truths(path: &Path) -> anyhow::Result<Vec<TruthRecord>> {
    let f = File::open(path).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TruthRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.into(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Discrete P/R/F1 and normalized numeric errors of a truths file.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalOutcome {
    pub prf: Option<Prf>,
    pub mae: Option<f64>,
    pub rmse: Option<f64>,
}

/// Matches truths to gold by entity and attribute name. Only gold `(e, a)`
/// pairs are scored; the numeric prediction of a pair is its most plausible
/// value. Numeric ranges come from `ranges` when given, otherwise from the
/// gold and predicted values of the attribute.
pub fn evaluate_records(
    truths: &[TruthRecord],
    gold: &[(String, String, Value)],
    synonyms: &Synonyms,
    ranges: &HashMap<String, (f64, f64)>,
) -> crate::Result<EvalOutcome> {
    let mut entities: IndexSet<String> = IndexSet::new();
    let mut attributes: IndexMap<String, ValueType> = IndexMap::new();
    let mut intern = |e: &str, a: &str, ty: ValueType| -> crate::Result<(usize, usize)> {
        let ei = entities.insert_full(e.to_string()).0;
        let ai = match attributes.get_full(a) {
            Some((_, _, &t)) if t != ty => {
                return Err(Error::TypeConflict {
                    attribute: a.to_string(),
                    first: t.to_string(),
                    second: ty.to_string(),
                });
            }
            Some((i, _, _)) => i,
            None => attributes.insert_full(a.to_string(), ty).0,
        };
        Ok((ei, ai))
    };
    let mut gold_t: Vec<Triple> = Vec::new();
    for (e, a, v) in gold {
        let (ei, ai) = intern(e, a, v.value_type())?;
        gold_t.push((ei, ai, v.clone()));
    }
    let mut pred: Vec<(Triple, f64)> = Vec::new();
    for r in truths {
        let ty: ValueType = r.value_type.parse().map_err(Error::TypeMismatch)?;
        let (ei, ai) = intern(&r.entity, &r.attribute, ty)?;
        let v = Value::parse(ty, &r.value, synonyms)?;
        pred.push(((ei, ai, v), r.plausibility));
    }

    let pairs: HashSet<(usize, usize)> = gold_t.iter().map(|t| (t.0, t.1)).collect();
    let numeric = |a: usize| attributes[a].is_numeric();
    let mut bounds: HashMap<usize, (f64, f64)> = HashMap::new();
    for (a, (name, ty)) in attributes.iter().enumerate() {
        if !ty.is_numeric() {
            continue;
        }
        let b = ranges.get(name).copied().unwrap_or_else(|| {
            let xs = gold_t
                .iter()
                .filter(|t| t.1 == a)
                .map(|t| &t.2)
                .chain(pred.iter().filter(|p| p.0 .1 == a).map(|p| &p.0 .2))
                .filter_map(Value::raw_number);
            xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
        });
        bounds.insert(a, b);
    }
    // A degenerate range leaves errors in raw units.
    let norm = |a: usize, v: &Value| -> Option<f64> {
        let x = v.raw_number()?;
        let (lo, hi) = bounds[&a];
        if hi > lo {
            norm_in_range(x, lo, hi).ok()
        } else {
            Some(x - lo)
        }
    };

    let gold_disc: Vec<Triple> = gold_t.iter().filter(|t| !numeric(t.1)).cloned().collect();
    let mut gold_num: HashMap<(usize, usize), Vec<f64>> = HashMap::new();
    for t in gold_t.iter().filter(|t| numeric(t.1)) {
        if let Some(x) = norm(t.1, &t.2) {
            gold_num.entry((t.0, t.1)).or_default().push(x);
        }
    }
    let pred_disc: Vec<Triple> = pred
        .iter()
        .map(|p| &p.0)
        .filter(|t| !numeric(t.1) && pairs.contains(&(t.0, t.1)))
        .cloned()
        .collect();
    let mut best: HashMap<(usize, usize), (f64, f64)> = HashMap::new();
    for ((e, a, v), p) in &pred {
        if !numeric(*a) || !pairs.contains(&(*e, *a)) {
            continue;
        }
        if let Some(x) = norm(*a, v) {
            let slot = best.entry((*e, *a)).or_insert((f64::NEG_INFINITY, x));
            if *p > slot.0 {
                *slot = (*p, x);
            }
        }
    }
    let pred_num: HashMap<(usize, usize), f64> = best.into_iter().map(|(k, (_, x))| (k, x)).collect();
    let lit = if gold_num.is_empty() {
        None
    } else {
        eval_literal(&pred_num, &gold_num).ok()
    };
    Ok(EvalOutcome {
        prf: (!gold_disc.is_empty()).then(|| eval_with_implied_strings(&pred_disc, &gold_disc)),
        mae: lit.map(|l| l.0),
        rmse: lit.map(|l| l.1),
    })
}

fn cmd_eval(a: &EvalArgs, extra: &BTreeMap<String, String>, out: &mut dyn Write) -> anyhow::Result<()> {
    let truths_path = required(&a.truths, extra, "truths")?;
    let gold_path = required(&a.gold, extra, "gold")?;
    let synonyms = load_synonyms(path_arg(&a.synonyms, extra, "synonyms"))?;
    let truths = load_truths(&truths_path)?;
    let gold = load_triples(&gold_path, &synonyms)?;
    let mut ranges = HashMap::new();
    if let Some(p) = path_arg(&a.kg, extra, "kg") {
        let (kg, _) = load_kg_with(p, &synonyms)?;
        for (i, spec) in kg.attributes().enumerate() {
            if let Some(r) = kg.range(i) {
                ranges.insert(spec.name.clone(), r);
            }
        }
    }
    let m = evaluate_records(&truths, &gold, &synonyms, &ranges)?;
    match m.prf {
        Some(p) => writeln!(
            out,
            "relational: precision {:.4} recall {:.4} f1 {:.4}",
            p.precision, p.recall, p.f1
        )?,
        None => writeln!(out, "relational: absent")?,
    }
    match (m.mae, m.rmse) {
        (Some(mae), Some(rmse)) => writeln!(out, "literal: mae {mae:.4} rmse {rmse:.4}")?,
        _ => writeln!(out, "literal: absent")?,
    }
    if let Some(path) = path_arg(&a.out, extra, "out") {
        let doc = json!({
            "relational": m.prf.map(|p| json!({"precision": p.precision, "recall": p.recall, "f1": p.f1})),
            "literal": m.mae.zip(m.rmse).map(|(mae, rmse)| json!({"mae": mae, "rmse": rmse})),
        });
        fs::write(&path, serde_json::to_string_pretty(&doc)? + "\n")
            .with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(())
}

fn cmd_synth(a: &SynthArgs, hp: &HyperParams, out: &mut dyn Write) -> anyhow::Result<()> {
    let cfg = a.generator.config(hp.seed);
    cfg.validate()?;
    let data = synth_generate(&cfg)?;
    fs::create_dir_all(&a.out).with_context(|| format!("cannot create {}", a.out.display()))?;
    let kg = &data.kg;
    let mut w = create(&a.out.join("kg.tsv"))?;
    kg.write_tsv(&mut w)?;
    w.flush()?;
    let mut w = create(&a.out.join("claims.tsv"))?;
    data.claims.write_tsv(kg, &mut w)?;
    w.flush()?;
    let mut w = create(&a.out.join("gold.tsv"))?;
    write_triples(
        data.gold
            .iter()
            .map(|(e, at, v)| (kg.entity_name(*e), kg.attribute(*at).name.as_str(), v)),
        &mut w,
    )?;
    w.flush()?;
    let mut w = create(&a.out.join("entities.txt"))?;
    for e in kg.entities() {
        writeln!(w, "{e}")?;
    }
    w.flush()?;
    let mut w = create(&a.out.join("sources.tsv"))?;
    for (s, rate) in data.error_rates.iter().enumerate() {
        writeln!(w, "{}\t{rate}", data.claims.source_name(s))?;
    }
    w.flush()?;
    writeln!(
        out,
        "wrote {} facts, {} claims, {} gold facts to {}",
        kg.facts().len(),
        data.claims.len(),
        data.gold.len(),
        a.out.display()
    )?;
    Ok(())
}

fn cmd_sensitivity(a: &SensitivityArgs, hp: &HyperParams, seed: Option<u64>, out: &mut dyn Write) -> anyhow::Result<()> {
    let levels = if a.levels.is_empty() {
        a.axis.default_levels()
    } else {
        a.levels.clone()
    };
    let seeds = if a.seeds.is_empty() {
        let first = seed.unwrap_or(0);
        (first..first + 5).collect()
    } else {
        a.seeds.clone()
    };
    let base = a.generator.config(0);
    base.validate()?;
    let rows = sensitivity_suite(a.axis, &levels, &seeds, &base, hp)?;
    let mut w = create(&a.out)?;
    write_csv(&rows, &mut w)?;
    w.flush()?;
    for (level, m) in average_by_level(&rows) {
        writeln!(
            out,
            "{} {level}: precision {:.4} recall {:.4} f1 {:.4}",
            a.axis.as_str(),
            m.prf.precision,
            m.prf.recall,
            m.prf.f1
        )?;
    }
    Ok(())
}

fn cmd_align_eval(a: &AlignEvalArgs, hp: &HyperParams, out: &mut dyn Write) -> anyhow::Result<()> {
    let pairs = load_pairs(&a.pairs)?;
    let corpus: Vec<&str> = pairs.iter().flat_map(|p| [p.v.as_str(), p.v2.as_str()]).collect();
    let text = TextEncoder::build(&hp.text_encoder, hp.d_txt, hp.seed, corpus)?;
    let cfg = LlTrainConfig {
        d_ll: hp.d_ll,
        hidden: hp.ll_hidden,
        epochs: hp.ll_epochs,
        lr: hp.ll_lr,
        batch: hp.ll_batch,
        seed: hp.seed,
    };
    let (net, report) = train_ll_ann(&pairs, &text, &cfg)?;
    let test: Vec<_> = report.test_pairs.iter().map(|&i| &pairs[i]).collect();
    let mut pred = Vec::new();
    let mut gold = Vec::new();
    for (i, p) in test.iter().enumerate() {
        if net.prob(&text, &p.v, &p.v2)? > 0.5 {
            pred.push((i, 0, Value::Category(String::new())));
        }
        if p.label {
            gold.push((i, 0, Value::Category(String::new())));
        }
    }
    let prf = crate::evalharness::eval_relational(&pred, &gold);
    writeln!(
        out,
        "pairs {} (train {}, val {}, test {}), best epoch {}",
        pairs.len(),
        report.train,
        report.val,
        report.test,
        report.best_epoch
    )?;
    writeln!(
        out,
        "accuracy: train {:.4} val {:.4} test {:.4}",
        report.train_accuracy, report.val_accuracy, report.test_accuracy
    )?;
    writeln!(
        out,
        "test at 0.5: precision {:.4} recall {:.4} f1 {:.4}",
        prf.precision, prf.recall, prf.f1
    )?;
    Ok(())
}
