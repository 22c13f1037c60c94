//! Knowledge-graph data model, TSV ingestion and value normalization.
//!
//! A knowledge graph holds entities, typed attributes and deduplicated
//! facts. Literal values are keyed by `(attribute, payload)`: the same
//! payload under two attributes is two distinct literals.
//!
//! Facts file, one fact per line:
//!
//! ```text
//! entity <TAB> attribute <TAB> value_type <TAB> value
//! ```
//!
//! Claims add a trailing `<TAB> source` column. Empty lines and lines
//! starting with `#` are skipped.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use indexmap::{IndexMap, IndexSet};
use ordered_float::NotNan;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueType {
    Entity,
    Category,
    Number,
    Datetime,
    String,
}

impl ValueType {
    pub fn as_str(self) -> &'static str {
        match self {
            ValueType::Entity => "entity",
            ValueType::Category => "category",
            ValueType::Number => "number",
            ValueType::Datetime => "datetime",
            ValueType::String => "string",
        }
    }

    /// Numbers and datetimes are scored by regression on normalized values.
    pub fn is_numeric(self) -> bool {
        matches!(self, ValueType::Number | ValueType::Datetime)
    }

    /// Entities, categories and strings are scored by the softmax classifier.
    pub fn is_discrete(self) -> bool {
        !self.is_numeric()
    }
}

impl fmt::Display for ValueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ValueType {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "entity" => Ok(ValueType::Entity),
            "category" => Ok(ValueType::Category),
            "number" => Ok(ValueType::Number),
            "datetime" => Ok(ValueType::Datetime),
            "string" => Ok(ValueType::String),
            other => Err(format!("unknown value type `{other}`")),
        }
    }
}

/// A fact or claim payload.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    /// Entity identifier; it may be absent from the KG (see [`KnowledgeGraph::resolve`]).
    Entity(String),
    Category(String),
    Number(NotNan<f64>),
    Datetime(NaiveDateTime),
    String(String),
}

impl Value {
    /// A finite number; NaN and infinities are rejected.
    pub fn number(x: f64) -> Result<Value> {
        if !x.is_finite() {
            return Err(Error::TypeMismatch(format!("non-finite number {x}")));
        }
        Ok(Value::Number(NotNan::new(x).expect("finite")))
    }

    pub fn value_type(&self) -> ValueType {
        match self {
            Value::Entity(_) => ValueType::Entity,
            Value::Category(_) => ValueType::Category,
            Value::Number(_) => ValueType::Number,
            Value::Datetime(_) => ValueType::Datetime,
            Value::String(_) => ValueType::String,
        }
    }

    /// Parses a raw TSV payload as the given type.
    pub fn parse(ty: ValueType, raw: &str, synonyms: &Synonyms) -> Result<Value> {
        let raw = raw.trim();
        if raw.is_empty() {
            return Err(Error::TypeMismatch("empty value".into()));
        }
        match ty {
            ValueType::Entity => Ok(Value::Entity(raw.to_string())),
            ValueType::Category => Ok(Value::Category(normalize_category(raw, synonyms))),
            ValueType::String => Ok(Value::String(raw.to_string())),
            ValueType::Number => {
                let x: f64 = raw
                    .parse()
                    .map_err(|_| Error::TypeMismatch(format!("`{raw}` is not a number")))?;
                Value::number(x)
            }
            ValueType::Datetime => parse_datetime(raw).map(Value::Datetime),
        }
    }

    /// The TSV payload; `parse(value_type, payload)` reproduces the value.
    pub fn payload(&self) -> String {
        match self {
            Value::Entity(s) | Value::Category(s) | Value::String(s) => s.clone(),
            Value::Number(x) => format!("{}", x.into_inner()),
            Value::Datetime(dt) => dt.format("%Y-%m-%dT%H:%M:%S%.f").to_string(),
        }
    }

    /// Raw numeric magnitude: the number itself, or days since the origin for datetimes.
    pub fn raw_number(&self) -> Option<f64> {
        match self {
            Value::Number(x) => Some(x.into_inner()),
            Value::Datetime(dt) => Some(normalize_datetime(dt)),
            _ => None,
        }
    }

    /// Text used by the text encoder.
    pub fn surface(&self) -> String {
        match self {
            Value::Entity(id) => entity_label(id),
            other => other.payload(),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.payload())
    }
}

/// Accepts `YYYY-MM-DD`, `YYYY-MM-DDTHH:MM:SS[.f]` and RFC 3339 with offset
/// (converted to UTC).
pub fn parse_datetime(raw: &str) -> Result<NaiveDateTime> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return Ok(dt.naive_utc());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(raw, fmt) {
            return Ok(dt);
        }
    }
    NaiveDate::parse_from_str(raw, "%Y-%m-%d")
        .map(|d| d.and_hms_opt(0, 0, 0).expect("midnight"))
        .map_err(|_| Error::TypeMismatch(format!("`{raw}` is not an RFC 3339 date or date-time")))
}

fn datetime_origin() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2000, 1, 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid origin")
}

/// Signed fractional days since 2000-01-01T00:00:00 UTC.
pub fn normalize_datetime(dt: &NaiveDateTime) -> f64 {
    let delta = dt.signed_duration_since(datetime_origin());
    (delta.num_seconds() as f64 + f64::from(delta.subsec_nanos()) * 1e-9) / 86_400.0
}

/// Min-max normalization into `[0, 1]`; out-of-range inputs are clamped.
pub fn norm_in_range(v: f64, min: f64, max: f64) -> Result<f64> {
    if !(max > min) {
        return Err(Error::DegenerateRange(format!("[{min}, {max}]")));
    }
    Ok(((v - min) / (max - min)).clamp(0.0, 1.0))
}

/// Human-readable surface form of an entity identifier.
pub fn entity_label(id: &str) -> String {
    id.chars()
        .map(|c| if c == '_' || c == '-' { ' ' } else { c })
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Case-folded, whitespace-collapsed canonical forms keyed by folded surface.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Synonyms {
    map: HashMap<String, String>,
}

fn fold(text: &str) -> String {
    text.to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

impl Synonyms {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, surface: &str, canonical: &str) {
        self.map.insert(fold(surface), fold(canonical));
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// TSV `surface <TAB> canonical`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut syn = Synonyms::new();
        for (i, line) in data_lines(&text) {
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 2 {
                return Err(Error::Parse {
                    path: path.into(),
                    line: i,
                    msg: format!("expected 2 columns, found {}", cols.len()),
                });
            }
            syn.insert(cols[0], cols[1]);
        }
        Ok(syn)
    }
}

/// Case-folds, collapses whitespace, then maps through `synonyms`.
pub fn normalize_category(c: &str, synonyms: &Synonyms) -> String {
    let folded = fold(c);
    synonyms.map.get(&folded).cloned().unwrap_or(folded)
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub name: String,
    pub value_type: ValueType,
    /// Maximum number of values per entity.
    pub arity: usize,
}

impl AttributeSpec {
    /// Entity-valued attributes; everything else is a literal attribute.
    pub fn is_relational(&self) -> bool {
        self.value_type == ValueType::Entity
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Fact {
    pub entity: usize,
    pub attribute: usize,
    pub value: Value,
}

/// Resolution of an entity-valued payload against the KG.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EntityRef {
    Known(usize),
    Unseen { surface: String },
}

/// Summary of what [`load_kg`] kept and discarded.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KgReport {
    pub facts: usize,
    pub duplicates: usize,
    pub dropped_attributes: Vec<String>,
    pub dropped_facts: usize,
}

#[derive(Clone, Debug)]
pub struct KnowledgeGraph {
    entities: IndexSet<String>,
    attributes: IndexMap<String, AttributeSpec>,
    facts: Vec<Fact>,
    domains: Vec<IndexSet<Value>>,
    ranges: Vec<Option<(f64, f64)>>,
}

impl PartialEq for KnowledgeGraph {
    fn eq(&self, other: &Self) -> bool {
        self.entities == other.entities
            && self.attributes == other.attributes
            && self.facts == other.facts
            && self.domains == other.domains
            && self.ranges == other.ranges
    }
}

impl KnowledgeGraph {
    pub fn empty() -> Self {
        KgBuilder::new().build().0
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_attributes(&self) -> usize {
        self.attributes.len()
    }

    pub fn entities(&self) -> impl Iterator<Item = &str> + '_ {
        self.entities.iter().map(String::as_str)
    }

    pub fn entity_index(&self, id: &str) -> Option<usize> {
        self.entities.get_index_of(id)
    }

    pub fn entity_name(&self, idx: usize) -> &str {
        &self.entities[idx]
    }

    pub fn resolve(&self, id: &str) -> EntityRef {
        match self.entity_index(id) {
            Some(i) => EntityRef::Known(i),
            None => EntityRef::Unseen {
                surface: entity_label(id),
            },
        }
    }

    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.attributes.get_index_of(name)
    }

    pub fn attribute(&self, idx: usize) -> &AttributeSpec {
        &self.attributes[idx]
    }

    pub fn attributes(&self) -> impl Iterator<Item = &AttributeSpec> + '_ {
        self.attributes.values()
    }

    /// Overrides the inferred arity of an attribute.
    pub fn set_arity(&mut self, name: &str, arity: usize) -> Result<()> {
        let spec = self
            .attributes
            .get_mut(name)
            .ok_or_else(|| Error::UnknownAttribute(name.into()))?;
        if arity == 0 {
            return Err(Error::Config(format!("arity of `{name}` must be at least 1")));
        }
        spec.arity = arity;
        Ok(())
    }

    pub fn facts(&self) -> &[Fact] {
        &self.facts
    }

    /// `V_a`: values observed for the attribute, in first-seen order.
    pub fn domain(&self, attribute: usize) -> &IndexSet<Value> {
        &self.domains[attribute]
    }

    /// `(min V_a, max V_a)` of raw magnitudes for numeric attributes with facts.
    pub fn range(&self, attribute: usize) -> Option<(f64, f64)> {
        self.ranges[attribute]
    }

    /// `norm_a`: min-max normalization with clamping.
    pub fn norm(&self, attribute: usize, raw: f64) -> Result<f64> {
        let (lo, hi) = self
            .range(attribute)
            .ok_or_else(|| Error::DegenerateRange(self.attribute(attribute).name.clone()))?;
        norm_in_range(raw, lo, hi)
    }

    /// Number of distinct entities holding each value of the attribute.
    pub fn value_counts(&self, attribute: usize) -> HashMap<Value, usize> {
        let mut seen: HashSet<(usize, &Value)> = HashSet::new();
        let mut counts = HashMap::new();
        for f in self.facts.iter().filter(|f| f.attribute == attribute) {
            if seen.insert((f.entity, &f.value)) {
                *counts.entry(f.value.clone()).or_insert(0) += 1;
            }
        }
        counts
    }

    pub fn contains(&self, entity: usize, attribute: usize, value: &Value) -> bool {
        self.facts
            .iter()
            .any(|f| f.entity == entity && f.attribute == attribute && &f.value == value)
    }

    /// Writes the facts in the TSV format read by [`load_kg`].
    pub fn write_tsv(&self, mut out: impl Write) -> std::io::Result<()> {
        for f in &self.facts {
            let a = self.attribute(f.attribute);
            writeln!(
                out,
                "{}\t{}\t{}\t{}",
                self.entities[f.entity],
                a.name,
                a.value_type,
                f.value.payload()
            )?;
        }
        Ok(())
    }

    /// A copy that also knows `extra` entities (ids already present are ignored).
    pub fn with_entities<'a>(&self, extra: impl IntoIterator<Item = &'a str>) -> KnowledgeGraph {
        let mut kg = self.clone();
        for e in extra {
            kg.entities.insert(e.to_string());
        }
        kg
    }

    /// A copy restricted to `keep` facts, with entity set and schema unchanged.
    pub fn with_facts(&self, keep: impl Fn(usize, &Fact) -> bool) -> KnowledgeGraph {
        let mut b = KgBuilder::new();
        for e in &self.entities {
            b.add_entity(e);
        }
        for a in self.attributes.values() {
            b.declare_attribute(&a.name, a.value_type).expect("consistent schema");
        }
        for (i, f) in self.facts.iter().enumerate() {
            if keep(i, f) {
                b.add_fact(
                    &self.entities[f.entity],
                    &self.attribute(f.attribute).name,
                    f.value.clone(),
                )
                .expect("consistent schema");
            }
        }
        let (mut kg, _) = b.build();
        for a in self.attributes.values() {
            if let Some(idx) = kg.attribute_index(&a.name) {
                let inferred = kg.attributes[idx].arity;
                kg.attributes[idx].arity = inferred.max(a.arity);
            }
        }
        kg
    }
}

/// Incremental KG construction; [`KgBuilder::build`] applies the
/// degenerate-range filter and computes domains, ranges and arities.
#[derive(Clone, Debug, Default)]
pub struct KgBuilder {
    entities: IndexSet<String>,
    attributes: IndexMap<String, ValueType>,
    facts: IndexSet<(String, String, Value)>,
    duplicates: usize,
}

impl KgBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_entity(&mut self, id: &str) {
        if !self.entities.contains(id) {
            self.entities.insert(id.to_string());
        }
    }

    pub fn declare_attribute(&mut self, name: &str, ty: ValueType) -> Result<()> {
        match self.attributes.get(name) {
            Some(&t) if t != ty => Err(Error::TypeConflict {
                attribute: name.into(),
                first: t.to_string(),
                second: ty.to_string(),
            }),
            Some(_) => Ok(()),
            None => {
                self.attributes.insert(name.to_string(), ty);
                Ok(())
            }
        }
    }

    /// Returns `false` for a duplicate fact.
    pub fn add_fact(&mut self, entity: &str, attribute: &str, value: Value) -> Result<bool> {
        self.declare_attribute(attribute, value.value_type())?;
        self.add_entity(entity);
        if let Value::Entity(id) = &value {
            self.add_entity(id);
        }
        let fresh = self
            .facts
            .insert((entity.to_string(), attribute.to_string(), value));
        if !fresh {
            self.duplicates += 1;
        }
        Ok(fresh)
    }

    pub fn build(self) -> (KnowledgeGraph, KgReport) {
        // Degenerate numeric attributes are discarded with their facts.
        let mut lo_hi: HashMap<String, (f64, f64)> = HashMap::new();
        for (_, a, v) in &self.facts {
            if let Some(x) = v.raw_number() {
                let r = lo_hi.entry(a.clone()).or_insert((x, x));
                r.0 = r.0.min(x);
                r.1 = r.1.max(x);
            }
        }
        let dropped: IndexSet<String> = self
            .attributes
            .iter()
            .filter(|(name, ty)| {
                ty.is_numeric() && lo_hi.get(name.as_str()).is_some_and(|&(lo, hi)| !(hi > lo))
            })
            .map(|(name, _)| name.clone())
            .collect();

        let mut attributes: IndexMap<String, AttributeSpec> = IndexMap::new();
        for (name, &ty) in &self.attributes {
            if !dropped.contains(name) {
                attributes.insert(
                    name.clone(),
                    AttributeSpec {
                        name: name.clone(),
                        value_type: ty,
                        arity: 1,
                    },
                );
            }
        }
        let mut facts = Vec::new();
        let mut dropped_facts = 0;
        let mut domains: Vec<IndexSet<Value>> = vec![IndexSet::new(); attributes.len()];
        let mut multiplicity: HashMap<(usize, usize), usize> = HashMap::new();
        for (e, a, v) in self.facts {
            let Some(ai) = attributes.get_index_of(&a) else {
                dropped_facts += 1;
                continue;
            };
            let ei = self.entities.get_index_of(&e).expect("registered");
            domains[ai].insert(v.clone());
            *multiplicity.entry((ei, ai)).or_insert(0) += 1;
            facts.push(Fact {
                entity: ei,
                attribute: ai,
                value: v,
            });
        }
        for (&(_, ai), &m) in &multiplicity {
            let spec = &mut attributes[ai];
            spec.arity = spec.arity.max(m);
        }
        let ranges = attributes
            .values()
            .map(|a| lo_hi.get(&a.name).copied().filter(|(lo, hi)| hi > lo))
            .collect();
        let report = KgReport {
            facts: facts.len(),
            duplicates: self.duplicates,
            dropped_attributes: dropped.into_iter().collect(),
            dropped_facts,
        };
        (
            KnowledgeGraph {
                entities: self.entities,
                attributes,
                facts,
                domains,
                ranges,
            },
            report,
        )
    }
}

fn parse_typed_columns<'a>(
    path: &Path,
    line_no: usize,
    cols: &[&'a str],
) -> Result<(&'a str, &'a str, ValueType, &'a str)> {
    let ty = cols[2].trim().parse::<ValueType>().map_err(|msg| Error::Parse {
        path: path.into(),
        line: line_no,
        msg,
    })?;
    let (e, a) = (cols[0].trim(), cols[1].trim());
    if e.is_empty() || a.is_empty() {
        return Err(Error::Parse {
            path: path.into(),
            line: line_no,
            msg: "empty entity or attribute".into(),
        });
    }
    Ok((e, a, ty, cols[3]))
}

/// Reads one entity id per line (blank lines and `#` comments skipped).
pub fn load_entity_list(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(data_lines(&text).map(|(_, l)| l.trim().to_string()).collect())
}

/// Reads a facts TSV as raw triples, without schema checks or range filtering.
/// Used for gold sets, which share the facts format.
pub fn load_triples(path: impl AsRef<Path>, synonyms: &Synonyms) -> Result<Vec<(String, String, Value)>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in data_lines(&text) {
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(Error::Parse {
                path: path.into(),
                line: i,
                msg: format!("expected 4 tab-separated columns, found {}", cols.len()),
            });
        }
        let (e, a, ty, raw) = parse_typed_columns(path, i, &cols)?;
        let value = Value::parse(ty, raw, synonyms).map_err(|err| Error::Parse {
            path: path.into(),
            line: i,
            msg: err.to_string(),
        })?;
        out.push((e.to_string(), a.to_string(), value));
    }
    Ok(out)
}

/// Writes `(entity, attribute, value)` triples in the facts format.
pub fn write_triples<'a>(triples: impl IntoIterator<Item = (&'a str, &'a str, &'a Value)>, mut out: impl Write) -> std::io::Result<()> {
    for (e, a, v) in triples {
        writeln!(out, "{e}\t{a}\t{}\t{}", v.value_type(), v.payload())?;
    }
    Ok(())
}

/// Reads a facts TSV. Duplicate facts are merged; numeric attributes whose
/// values are all equal are removed along with their facts.
pub fn load_kg(path: impl AsRef<Path>) -> Result<(KnowledgeGraph, KgReport)> {
    load_kg_with(path, &Synonyms::new())
}

pub fn load_kg_with(path: impl AsRef<Path>, synonyms: &Synonyms) -> Result<(KnowledgeGraph, KgReport)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut b = KgBuilder::new();
    for (i, line) in data_lines(&text) {
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(Error::Parse {
                path: path.into(),
                line: i,
                msg: format!("expected 4 tab-separated columns, found {}", cols.len()),
            });
        }
        let (e, a, ty, raw) = parse_typed_columns(path, i, &cols)?;
        let value = Value::parse(ty, raw, synonyms).map_err(|err| Error::Parse {
            path: path.into(),
            line: i,
            msg: err.to_string(),
        })?;
        b.add_fact(e, a, value).map_err(|err| Error::Parse {
            path: path.into(),
            line: i,
            msg: err.to_string(),
        })?;
    }
    let (kg, report) = b.build();
    if !report.dropped_attributes.is_empty() {
        log::warn!(
            "discarded {} facts of degenerate numeric attributes {:?}",
            report.dropped_facts,
            report.dropped_attributes
        );
    }
    Ok((kg, report))
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Claim {
    pub entity: usize,
    pub attribute: usize,
    pub value: Value,
    pub source: usize,
}

/// Claims with interned source names.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ClaimSet {
    pub claims: Vec<Claim>,
    sources: IndexSet<String>,
    seen: HashSet<Claim>,
}

/// Counts of claims kept and rejected at ingestion.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ClaimReport {
    pub accepted: usize,
    pub unseen_values: usize,
    pub unknown_entity: usize,
    pub unknown_attribute: usize,
    pub bad_value: usize,
    pub duplicates: usize,
}

impl ClaimReport {
    pub fn dropped(&self) -> usize {
        self.unknown_entity + self.unknown_attribute + self.bad_value
    }
}

/// Why a claim was not added.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Rejection {
    UnknownEntity,
    UnknownAttribute,
    BadValue(String),
    Duplicate,
}

impl ClaimSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.claims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.claims.is_empty()
    }

    pub fn num_sources(&self) -> usize {
        self.sources.len()
    }

    pub fn source_name(&self, idx: usize) -> &str {
        &self.sources[idx]
    }

    pub fn source_index(&self, name: &str) -> Option<usize> {
        self.sources.get_index_of(name)
    }

    pub fn sources(&self) -> impl Iterator<Item = &str> + '_ {
        self.sources.iter().map(String::as_str)
    }

    /// Registers a source without claims (keeps source indices stable).
    pub fn add_source(&mut self, name: &str) -> usize {
        self.sources.insert_full(name.to_string()).0
    }

    /// Adds a typed claim. The value's type must match the attribute's.
    pub fn push(
        &mut self,
        kg: &KnowledgeGraph,
        entity: &str,
        attribute: &str,
        value: Value,
        source: &str,
    ) -> std::result::Result<(), Rejection> {
        let e = kg.entity_index(entity).ok_or(Rejection::UnknownEntity)?;
        let a = kg.attribute_index(attribute).ok_or(Rejection::UnknownAttribute)?;
        let want = kg.attribute(a).value_type;
        if value.value_type() != want {
            return Err(Rejection::BadValue(format!(
                "`{}` is {}, attribute `{attribute}` expects {want}",
                value.payload(),
                value.value_type()
            )));
        }
        let s = self.add_source(source);
        let claim = Claim {
            entity: e,
            attribute: a,
            value,
            source: s,
        };
        if !self.seen.insert(claim.clone()) {
            return Err(Rejection::Duplicate);
        }
        self.claims.push(claim);
        Ok(())
    }

    /// Parses the payload with the attribute's declared type, then [`push`](Self::push)es.
    pub fn push_raw(
        &mut self,
        kg: &KnowledgeGraph,
        synonyms: &Synonyms,
        entity: &str,
        attribute: &str,
        raw: &str,
        source: &str,
    ) -> std::result::Result<(), Rejection> {
        kg.entity_index(entity).ok_or(Rejection::UnknownEntity)?;
        let a = kg.attribute_index(attribute).ok_or(Rejection::UnknownAttribute)?;
        let value = Value::parse(kg.attribute(a).value_type, raw, synonyms)
            .map_err(|e| Rejection::BadValue(e.to_string()))?;
        self.push(kg, entity, attribute, value, source)
    }

    /// Writes the claims TSV read by [`load_claims`].
    pub fn write_tsv(&self, kg: &KnowledgeGraph, mut out: impl Write) -> std::io::Result<()> {
        for c in &self.claims {
            let a = kg.attribute(c.attribute);
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                kg.entity_name(c.entity),
                a.name,
                a.value_type,
                c.value.payload(),
                self.sources[c.source]
            )?;
        }
        Ok(())
    }

    /// A copy holding only the claims selected by `keep`; source indices are preserved.
    pub fn filtered(&self, keep: impl Fn(usize, &Claim) -> bool) -> ClaimSet {
        let mut out = ClaimSet {
            sources: self.sources.clone(),
            ..ClaimSet::default()
        };
        for (i, c) in self.claims.iter().enumerate() {
            if keep(i, c) && out.seen.insert(c.clone()) {
                out.claims.push(c.clone());
            }
        }
        out
    }
}

/// Reads a claims TSV against a loaded KG.
///
/// Claims about unknown entities or attributes, and claims whose value does
/// not parse as the attribute's declared type, are dropped with a warning.
pub fn load_claims(
    path: impl AsRef<Path>,
    kg: &KnowledgeGraph,
    synonyms: &Synonyms,
) -> Result<(ClaimSet, ClaimReport)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut set = ClaimSet::new();
    let mut report = ClaimReport::default();
    for (i, line) in data_lines(&text) {
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 5 {
            return Err(Error::Parse {
                path: path.into(),
                line: i,
                msg: format!("expected 5 tab-separated columns, found {}", cols.len()),
            });
        }
        let (e, a, _declared, raw) = parse_typed_columns(path, i, &cols)?;
        let source = cols[4].trim();
        match set.push_raw(kg, synonyms, e, a, raw, source) {
            Ok(()) => {
                report.accepted += 1;
                if let Some(Value::Entity(id)) = set.claims.last().map(|c| &c.value) {
                    if kg.entity_index(id).is_none() {
                        report.unseen_values += 1;
                    }
                }
            }
            Err(Rejection::UnknownEntity) => {
                log::warn!("{}:{i}: dropped claim about unknown entity `{e}`", path.display());
                report.unknown_entity += 1;
            }
            Err(Rejection::UnknownAttribute) => {
                log::warn!("{}:{i}: dropped claim on unknown attribute `{a}`", path.display());
                report.unknown_attribute += 1;
            }
            Err(Rejection::BadValue(msg)) => {
                log::warn!("{}:{i}: dropped claim: {msg}", path.display());
                report.bad_value += 1;
            }
            Err(Rejection::Duplicate) => report.duplicates += 1,
        }
    }
    Ok((set, report))
}
