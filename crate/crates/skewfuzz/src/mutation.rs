//! Typed skew-inspired mutation catalog, symptom-driven weighting, weighted
//! sampling, and application to datasets.
//!
//! Chains compose record-level operators (pick a record, descend into a
//! tuple slot or collection element, replace a primitive) with dataset-level
//! operators that reshape key/value distributions. Every derived chain is
//! schema-valid: applying it to a conforming dataset yields a dataset of the
//! same schema, with the append-style ops adding records rather than editing
//! them.
//!
//! Identifiers M3, M8 and M9 are reserved with no behavior; configs that
//! reference them are rejected.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::value::{canonical_key, conforms, Dataset, Schema, Value};

/// The three performance-skew sources mutations are biased toward.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkewCategory {
    Data,
    Computation,
    Memory,
}

impl SkewCategory {
    pub fn parse(name: &str) -> Result<SkewCategory> {
        match name.to_ascii_lowercase().as_str() {
            "data" => Ok(SkewCategory::Data),
            "computation" => Ok(SkewCategory::Computation),
            "memory" => Ok(SkewCategory::Memory),
            other => Err(Error::Config(format!("unknown skew category {other:?}"))),
        }
    }
}

/// One mutation operator; chains nest through the boxed variants.
#[derive(Debug, Clone, PartialEq)]
pub enum Mutation {
    /// M1: replace an Int with a uniform random integer.
    RandomInteger,
    /// M2: replace a Float with a uniform random double.
    RandomDouble,
    /// M4: replace a random substring with random alphanumeric characters.
    ReplaceSubstring,
    /// M5: apply the inner mutation to a random collection element.
    CollectionElement(Box<Mutation>),
    /// M6: append duplicated elements to a collection.
    CollectionConcat,
    /// M7: apply the inner mutation to a fixed tuple slot.
    TupleElement(usize, Box<Mutation>),
    /// M10: apply the inner mutation to one random record.
    RandomRecord(Box<Mutation>),
    /// M11: redistribute keys over records from a fresh categorical
    /// distribution on the existing distinct keys.
    KeyEnumeration,
    /// M12: as M11, over values.
    ValueEnumeration,
    /// M13 (AppendSameKey): append records for a pre-existing key.
    DuplicateKeyGeneration,
    /// M14: append records copying an existing value under fresh keys.
    DuplicateValueGeneration,
    /// Program-input op: append one freshly generated record.
    AppendRecord,
    /// Program-input op: copy one existing record into a random partition.
    DuplicateRecord,
}

impl fmt::Display for Mutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mutation::RandomInteger => write!(f, "M1"),
            Mutation::RandomDouble => write!(f, "M2"),
            Mutation::ReplaceSubstring => write!(f, "M4"),
            Mutation::CollectionElement(inner) => write!(f, "M5+{inner}"),
            Mutation::CollectionConcat => write!(f, "M6"),
            Mutation::TupleElement(_, inner) => write!(f, "M7+{inner}"),
            Mutation::RandomRecord(inner) => write!(f, "M10+{inner}"),
            Mutation::KeyEnumeration => write!(f, "M11"),
            Mutation::ValueEnumeration => write!(f, "M12"),
            Mutation::DuplicateKeyGeneration => write!(f, "M13"),
            Mutation::DuplicateValueGeneration => write!(f, "M14"),
            Mutation::AppendRecord => write!(f, "AppendRecord"),
            Mutation::DuplicateRecord => write!(f, "DuplicateRecord"),
        }
    }
}

impl Mutation {
    /// Paper-style chain label, e.g. "M10+M7+M5+M1". Tuple slots are chosen
    /// by the chain structure, not the label.
    pub fn label(&self) -> String {
        self.to_string()
    }

    fn contains_collection_element(&self) -> bool {
        match self {
            Mutation::CollectionElement(_) => true,
            Mutation::TupleElement(_, inner) | Mutation::RandomRecord(inner) => {
                inner.contains_collection_element()
            }
            _ => false,
        }
    }

    fn contains_collection_concat(&self) -> bool {
        match self {
            Mutation::CollectionConcat => true,
            Mutation::TupleElement(_, inner) | Mutation::RandomRecord(inner) => {
                inner.contains_collection_concat()
            }
            _ => false,
        }
    }
}

/// A mutation chain with its sampling weight; the chain is selected with
/// probability weight / sum of weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedMutation {
    pub chain: Mutation,
    pub weight: f64,
}

impl WeightedMutation {
    pub fn label(&self) -> String {
        self.chain.label()
    }
}

/// Knobs shared by derivation and application.
#[derive(Debug, Clone)]
pub struct MutationConfig {
    /// Freeze the key slot: no chain may touch or redistribute keys.
    pub disable_keys: bool,
    /// Freeze the value slot: no chain may rewrite value contents.
    pub disable_values: bool,
    /// Scales how many records/elements the append-style ops add.
    pub duplication_factor: f64,
    /// Range for M1 and generated integer keys, half-open.
    pub int_range: (i64, i64),
    /// Range for M2 and generated float values, half-open.
    pub float_range: (f64, f64),
    /// Per-chain weight overrides, keyed by chain label (e.g. "M13").
    pub weight_overrides: BTreeMap<String, f64>,
}

impl Default for MutationConfig {
    fn default() -> MutationConfig {
        MutationConfig {
            disable_keys: false,
            disable_values: false,
            duplication_factor: 1.0,
            // Both integers the catalog is known to have found fit in here.
            int_range: (0, 1 << 31),
            float_range: (0.0, 1000.0),
            weight_overrides: BTreeMap::new(),
        }
    }
}

const RESERVED_IDS: [&str; 3] = ["M3", "M8", "M9"];

impl MutationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.duplication_factor > 0.0) {
            return Err(Error::Config(format!(
                "duplication_factor must be > 0, got {}",
                self.duplication_factor
            )));
        }
        if self.int_range.0 >= self.int_range.1 {
            return Err(Error::Config("empty integer range".into()));
        }
        if !(self.float_range.0 < self.float_range.1) {
            return Err(Error::Config("empty float range".into()));
        }
        for (key, weight) in &self.weight_overrides {
            if RESERVED_IDS.contains(&key.as_str()) {
                return Err(Error::Registry(format!(
                    "mutation id {key} is reserved and has no behavior"
                )));
            }
            if !(*weight > 0.0) {
                return Err(Error::Config(format!("weight for {key} must be > 0")));
            }
        }
        Ok(())
    }
}

/// Record-level mutations reaching every primitive inside `schema`.
fn record_mutations(schema: &Schema) -> Vec<Mutation> {
    match schema {
        Schema::Int => vec![Mutation::RandomInteger],
        Schema::Float => vec![Mutation::RandomDouble],
        Schema::Str => vec![Mutation::ReplaceSubstring],
        Schema::Collection(elem) => {
            let mut chains: Vec<Mutation> = record_mutations(elem)
                .into_iter()
                .map(|inner| Mutation::CollectionElement(Box::new(inner)))
                .collect();
            chains.push(Mutation::CollectionConcat);
            chains
        }
        Schema::Tuple(parts) => parts
            .iter()
            .enumerate()
            .flat_map(|(slot, part)| {
                record_mutations(part)
                    .into_iter()
                    .map(move |inner| Mutation::TupleElement(slot, Box::new(inner)))
            })
            .collect(),
    }
}

/// Weight of one chain under the campaign's skew category.
///
/// Calibrated against the case-study tables: collection-element rewrites are
/// the computation-aligned chains, collection growth the memory-aligned
/// chains, and the append ops M13/M14 the data-aligned ones. The enumeration
/// ops M11/M12 are demoted outside data-skew campaigns. Everything else
/// samples at the neutral weight, and custom-metric campaigns (no category)
/// keep defaults for every chain.
fn weight_for(chain: &Mutation, category: Option<SkewCategory>) -> f64 {
    let Some(category) = category else {
        return 1.0;
    };
    let is_enumeration = matches!(
        chain,
        Mutation::KeyEnumeration | Mutation::ValueEnumeration
    );
    match category {
        SkewCategory::Data => match chain {
            Mutation::DuplicateKeyGeneration | Mutation::DuplicateValueGeneration => 5.0,
            _ => 1.0,
        },
        SkewCategory::Computation => {
            if chain.contains_collection_element() {
                5.0
            } else if is_enumeration {
                0.5
            } else {
                1.0
            }
        }
        SkewCategory::Memory => {
            if chain.contains_collection_concat() {
                5.0
            } else if is_enumeration {
                0.5
            } else {
                1.0
            }
        }
    }
}

/// Derives the schema-valid weighted mutation set for a dataset schema.
///
/// Key-value schemas get the full catalog, gated by the frozen slots and by
/// `keys_unique` (taps that follow an aggregation exclude chains that append
/// duplicate keys). Other schemas get record rewrites plus record
/// append/duplicate, the string-level capability program-input fuzzing uses.
pub fn derive_mutations(
    schema: &Schema,
    category: Option<SkewCategory>,
    config: &MutationConfig,
    keys_unique: bool,
) -> Result<Vec<WeightedMutation>> {
    config.validate()?;
    let mut chains = Vec::new();

    if let Some((key_schema, value_schema)) = schema.as_key_value() {
        if !config.disable_keys {
            for inner in record_mutations(key_schema) {
                chains.push(Mutation::RandomRecord(Box::new(Mutation::TupleElement(
                    0,
                    Box::new(inner),
                ))));
            }
        }
        if !config.disable_values {
            for inner in record_mutations(value_schema) {
                chains.push(Mutation::RandomRecord(Box::new(Mutation::TupleElement(
                    1,
                    Box::new(inner),
                ))));
            }
        }
        if !config.disable_keys && !config.disable_values {
            chains.push(Mutation::KeyEnumeration);
        }
        if !config.disable_keys {
            chains.push(Mutation::ValueEnumeration);
        }
        if !config.disable_keys && !config.disable_values && !keys_unique {
            chains.push(Mutation::DuplicateKeyGeneration);
        }
        if !config.disable_keys {
            chains.push(Mutation::DuplicateValueGeneration);
        }
    } else {
        for inner in record_mutations(schema) {
            chains.push(Mutation::RandomRecord(Box::new(inner)));
        }
        chains.push(Mutation::AppendRecord);
        chains.push(Mutation::DuplicateRecord);
    }

    let mutations: Vec<WeightedMutation> = chains
        .into_iter()
        .map(|chain| {
            let weight = config
                .weight_overrides
                .get(&chain.label())
                .copied()
                .unwrap_or_else(|| weight_for(&chain, category));
            WeightedMutation { chain, weight }
        })
        .collect();

    if mutations.is_empty() {
        return Err(Error::Derivation(format!(
            "no applicable mutations for schema {schema} with the given config"
        )));
    }
    Ok(mutations)
}

/// Weighted categorical sample: chain i is chosen with probability
/// weight_i / sum of weights.
pub fn sample<'a>(mutations: &'a [WeightedMutation], rng: &mut ChaCha8Rng) -> &'a WeightedMutation {
    assert!(!mutations.is_empty(), "sample requires a non-empty set");
    let total: f64 = mutations.iter().map(|m| m.weight).sum();
    let mut draw = rng.random::<f64>() * total;
    for m in mutations {
        draw -= m.weight;
        if draw < 0.0 {
            return m;
        }
    }
    mutations.last().unwrap()
}

fn random_alnum(rng: &mut ChaCha8Rng, len: usize) -> String {
    const ALNUM: &[u8] = b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";
    (0..len)
        .map(|_| ALNUM[rng.random_range(0..ALNUM.len())] as char)
        .collect()
}

/// Fresh value for appended records.
fn generate_value(schema: &Schema, config: &MutationConfig, rng: &mut ChaCha8Rng) -> Value {
    match schema {
        Schema::Int => Value::Int(rng.random_range(config.int_range.0..config.int_range.1)),
        Schema::Float => {
            Value::Float(rng.random_range(config.float_range.0..config.float_range.1))
        }
        Schema::Str => {
            let len = rng.random_range(1..=12);
            Value::Str(random_alnum(rng, len))
        }
        Schema::Tuple(parts) => Value::Tuple(
            parts
                .iter()
                .map(|p| generate_value(p, config, rng))
                .collect(),
        ),
        Schema::Collection(elem) => {
            let len = rng.random_range(1..=3);
            Value::Collection((0..len).map(|_| generate_value(elem, config, rng)).collect())
        }
    }
}

/// Fresh keys for M14: eight alphanumeric characters for strings, the M1
/// range for integers.
fn generate_key(schema: &Schema, config: &MutationConfig, rng: &mut ChaCha8Rng) -> Value {
    match schema {
        Schema::Str => Value::Str(random_alnum(rng, 8)),
        other => generate_value(other, config, rng),
    }
}

fn apply_record_mutation(
    chain: &Mutation,
    value: &Value,
    config: &MutationConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Value> {
    match (chain, value) {
        (Mutation::RandomInteger, Value::Int(_)) => Ok(Value::Int(
            rng.random_range(config.int_range.0..config.int_range.1),
        )),
        (Mutation::RandomDouble, Value::Float(_)) => Ok(Value::Float(
            rng.random_range(config.float_range.0..config.float_range.1),
        )),
        (Mutation::ReplaceSubstring, Value::Str(s)) => {
            let chars: Vec<char> = s.chars().collect();
            let start = rng.random_range(0..=chars.len());
            let end = rng.random_range(start..=chars.len());
            let replacement_len = rng.random_range(1..=8);
            let mut out: String = chars[..start].iter().collect();
            out.push_str(&random_alnum(rng, replacement_len));
            out.extend(&chars[end..]);
            Ok(Value::Str(out))
        }
        (Mutation::CollectionElement(inner), Value::Collection(elems)) => {
            if elems.is_empty() {
                return Ok(value.clone());
            }
            let idx = rng.random_range(0..elems.len());
            let mut elems = elems.clone();
            elems[idx] = apply_record_mutation(inner, &elems[idx], config, rng)?;
            Ok(Value::Collection(elems))
        }
        (Mutation::CollectionConcat, Value::Collection(elems)) => {
            if elems.is_empty() {
                return Ok(value.clone());
            }
            let extra = (config.duplication_factor * elems.len() as f64).ceil() as usize;
            let mut out = elems.clone();
            for _ in 0..extra {
                let idx = rng.random_range(0..elems.len());
                out.push(elems[idx].clone());
            }
            Ok(Value::Collection(out))
        }
        (Mutation::TupleElement(slot, inner), Value::Tuple(parts)) => {
            let Some(part) = parts.get(*slot) else {
                return Err(Error::Schema(format!(
                    "tuple slot {slot} out of range for arity {}",
                    parts.len()
                )));
            };
            let mut parts = parts.clone();
            parts[*slot] = apply_record_mutation(inner, part, config, rng)?;
            Ok(Value::Tuple(parts))
        }
        (chain, value) => Err(Error::Schema(format!(
            "mutation {chain} does not apply to value {value}"
        ))),
    }
}

fn pick_flat_record(dataset: &Dataset, rng: &mut ChaCha8Rng) -> Option<(usize, usize)> {
    let total = dataset.total_records();
    if total == 0 {
        return None;
    }
    let mut idx = rng.random_range(0..total);
    for (p, part) in dataset.partitions().iter().enumerate() {
        if idx < part.len() {
            return Some((p, idx));
        }
        idx -= part.len();
    }
    unreachable!()
}

fn kv_slot(record: &Value, slot: usize) -> &Value {
    match record {
        Value::Tuple(parts) if parts.len() == 2 => &parts[slot],
        _ => unreachable!("kv schema validated by caller"),
    }
}

/// Distinct values by canonical encoding, in order of first appearance.
fn distinct_values<'a>(values: impl Iterator<Item = &'a Value>) -> Vec<Value> {
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    for v in values {
        if seen.insert(canonical_key(v)) {
            out.push(v.clone());
        }
    }
    out
}

/// Draws a fresh categorical distribution over `choices`, then samples
/// `count` assignments from it with replacement.
fn enumerate_assignments(choices: &[Value], count: usize, rng: &mut ChaCha8Rng) -> Vec<Value> {
    let weights: Vec<f64> = (0..choices.len()).map(|_| rng.random::<f64>()).collect();
    let total: f64 = weights.iter().sum();
    (0..count)
        .map(|_| {
            let mut draw = rng.random::<f64>() * total;
            for (choice, w) in choices.iter().zip(&weights) {
                draw -= w;
                if draw < 0.0 {
                    return choice.clone();
                }
            }
            choices.last().unwrap().clone()
        })
        .collect()
}

fn append_count(config: &MutationConfig, partition_len: usize) -> usize {
    ((config.duplication_factor * partition_len as f64).round() as usize).max(1)
}

fn require_key_value(chain: &Mutation, schema: &Schema) -> Result<()> {
    if schema.as_key_value().is_none() {
        return Err(Error::Schema(format!(
            "{chain} requires key-value records, got {schema}"
        )));
    }
    Ok(())
}

/// Applies one chain to a dataset, producing a new dataset of the same
/// schema. Chains over empty selections (empty collections, empty datasets)
/// are no-ops rather than errors.
pub fn apply_mutation(
    chain: &Mutation,
    dataset: &Dataset,
    config: &MutationConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Dataset> {
    let schema = dataset.schema().clone();
    let mut partitions = dataset.partitions().to_vec();
    match chain {
        Mutation::RandomRecord(inner) => {
            if let Some((p, r)) = pick_flat_record(dataset, rng) {
                partitions[p][r] =
                    apply_record_mutation(inner, &partitions[p][r], config, rng)?;
            }
        }
        Mutation::KeyEnumeration | Mutation::ValueEnumeration => {
            require_key_value(chain, &schema)?;
            let slot = if matches!(chain, Mutation::KeyEnumeration) { 0 } else { 1 };
            let choices = distinct_values(dataset.iter_records().map(|r| kv_slot(r, slot)));
            if !choices.is_empty() {
                let assignments =
                    enumerate_assignments(&choices, dataset.total_records(), rng);
                let mut next = assignments.into_iter();
                for part in &mut partitions {
                    for record in part {
                        let Value::Tuple(parts) = record else { unreachable!() };
                        parts[slot] = next.next().unwrap();
                    }
                }
            }
        }
        Mutation::DuplicateKeyGeneration => {
            require_key_value(chain, &schema)?;
            let non_empty: Vec<usize> = (0..partitions.len())
                .filter(|&p| !partitions[p].is_empty())
                .collect();
            if !non_empty.is_empty() {
                let p = non_empty[rng.random_range(0..non_empty.len())];
                let part_len = partitions[p].len();
                let key = kv_slot(&partitions[p][rng.random_range(0..part_len)], 0).clone();
                let n = append_count(config, part_len);
                for _ in 0..n {
                    let value =
                        kv_slot(&partitions[p][rng.random_range(0..part_len)], 1).clone();
                    partitions[p].push(Value::Tuple(vec![key.clone(), value]));
                }
            }
        }
        Mutation::DuplicateValueGeneration => {
            require_key_value(chain, &schema)?;
            let key_schema = schema.as_key_value().unwrap().0.clone();
            if let Some((p, r)) = pick_flat_record(dataset, rng) {
                let value = kv_slot(&partitions[p][r], 1).clone();
                let target = rng.random_range(0..partitions.len());
                let n = append_count(config, partitions[target].len());
                for _ in 0..n {
                    let key = generate_key(&key_schema, config, rng);
                    partitions[target].push(Value::Tuple(vec![key, value.clone()]));
                }
            }
        }
        Mutation::AppendRecord => {
            let target = rng.random_range(0..partitions.len());
            partitions[target].push(generate_value(&schema, config, rng));
        }
        Mutation::DuplicateRecord => {
            if let Some((p, r)) = pick_flat_record(dataset, rng) {
                let record = partitions[p][r].clone();
                let target = rng.random_range(0..partitions.len());
                partitions[target].push(record);
            }
        }
        record_level => {
            // Bare record-level chains are not produced by derive but are
            // accepted: they behave like M10 wrapping them.
            if let Some((p, r)) = pick_flat_record(dataset, rng) {
                partitions[p][r] =
                    apply_record_mutation(record_level, &partitions[p][r], config, rng)?;
            }
        }
    }
    let out = Dataset::new_unchecked(schema.clone(), partitions);
    debug_assert!(out.iter_records().all(|r| conforms(r, &schema)));
    Ok(out)
}
