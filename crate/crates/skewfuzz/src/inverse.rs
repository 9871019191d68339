//! Registry of pseudo-inverse functions mapping tap-point datasets back to
//! program-input datasets, plus a validation harness.
//!
//! A pseudo-inverse does not need to be exact: its output only has to be a
//! plausible program input that reproduces the tap dataset's shape well
//! enough to serve as an improved fuzzing seed. Each inverse emits one
//! output partition per input partition, preserving the locality of the
//! skew the UDF phase constructed.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::dataflow::{execute_prefix, Pipeline, TapPoint};
use crate::error::{Error, Result};
use crate::value::{canonical_key, Dataset, Schema, Value};

type InverseFn = Arc<dyn Fn(&Dataset) -> Result<Dataset> + Send + Sync>;

/// A registered mapping from a tap dataset to a program-input dataset.
#[derive(Clone)]
pub struct PseudoInverse {
    pub id: String,
    pub tap_schema: Schema,
    pub output_schema: Schema,
    function: InverseFn,
}

impl PseudoInverse {
    pub fn new<F>(id: &str, tap_schema: Schema, output_schema: Schema, function: F) -> PseudoInverse
    where
        F: Fn(&Dataset) -> Result<Dataset> + Send + Sync + 'static,
    {
        PseudoInverse {
            id: id.to_string(),
            tap_schema,
            output_schema,
            function: Arc::new(function),
        }
    }
}

impl std::fmt::Debug for PseudoInverse {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PseudoInverse")
            .field("id", &self.id)
            .field("tap_schema", &self.tap_schema)
            .field("output_schema", &self.output_schema)
            .finish()
    }
}

#[derive(Debug, Default)]
pub struct InverseRegistry {
    by_id: BTreeMap<String, PseudoInverse>,
}

impl InverseRegistry {
    pub fn new() -> InverseRegistry {
        InverseRegistry::default()
    }

    /// All four benchmark inverses pre-registered.
    pub fn with_builtins() -> InverseRegistry {
        let mut registry = InverseRegistry::new();
        for inverse in builtins() {
            registry.register(inverse).expect("builtin ids are distinct");
        }
        registry
    }

    pub fn register(&mut self, inverse: PseudoInverse) -> Result<()> {
        if self.by_id.contains_key(&inverse.id) {
            return Err(Error::Registry(format!(
                "inverse {:?} is already registered",
                inverse.id
            )));
        }
        self.by_id.insert(inverse.id.clone(), inverse);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Result<&PseudoInverse> {
        self.by_id
            .get(id)
            .ok_or_else(|| Error::Registry(format!("no inverse registered under {id:?}")))
    }

    /// Applies the inverse, checking schemas on the way in and out.
    pub fn apply(&self, id: &str, dataset: &Dataset) -> Result<Dataset> {
        let inverse = self.get(id)?;
        if dataset.schema() != &inverse.tap_schema {
            return Err(Error::Schema(format!(
                "inverse {id:?} expects tap schema {}, got {}",
                inverse.tap_schema,
                dataset.schema()
            )));
        }
        let out = (inverse.function)(dataset)
            .map_err(|e| Error::Inverse(format!("{id}: {e}")))?;
        if out.schema() != &inverse.output_schema {
            return Err(Error::Inverse(format!(
                "inverse {id:?} produced schema {}, expected {}",
                out.schema(),
                inverse.output_schema
            )));
        }
        Ok(out)
    }
}

/// Plausibility report for one inverse on one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationReport {
    /// The lifted dataset conforms to the program input schema and the
    /// re-derived tap dataset conforms to the tap schema.
    pub schema_ok: bool,
    /// Multiset Jaccard overlap between the sample's keys and the keys of
    /// the tap dataset re-derived by running the program prefix on the
    /// lifted input. 1.0 for an exact key-multiset round trip.
    pub round_trip_key_multiset_overlap: f64,
}

/// Runs the inverse, re-executes the program prefix on its output, and
/// compares key multisets. A low overlap is legal (pseudo-inverses may be
/// lossy) but a schema mismatch is not.
pub fn validate_inverse(
    registry: &InverseRegistry,
    id: &str,
    sample: &Dataset,
    pipeline: &Pipeline,
    tap: &TapPoint,
) -> Result<ValidationReport> {
    let lifted = registry.apply(id, sample)?;
    let rederived = execute_prefix(pipeline, &lifted, tap)?;
    let schema_ok = rederived.schema() == sample.schema();
    Ok(ValidationReport {
        schema_ok,
        round_trip_key_multiset_overlap: key_multiset_overlap(sample, &rederived),
    })
}

/// Multiset Jaccard: sum of per-key min counts over sum of max counts.
/// Two empty datasets overlap fully.
fn key_multiset_overlap(a: &Dataset, b: &Dataset) -> f64 {
    let count = |d: &Dataset| {
        let mut counts: BTreeMap<Vec<u8>, u64> = BTreeMap::new();
        for record in d.iter_records() {
            let key = match record {
                Value::Tuple(parts) if parts.len() == 2 => &parts[0],
                other => other,
            };
            *counts.entry(canonical_key(key)).or_insert(0) += 1;
        }
        counts
    };
    let ca = count(a);
    let cb = count(b);
    let mut intersection = 0u64;
    let mut union = 0u64;
    let keys: std::collections::BTreeSet<&Vec<u8>> = ca.keys().chain(cb.keys()).collect();
    for key in keys {
        let x = ca.get(key).copied().unwrap_or(0);
        let y = cb.get(key).copied().unwrap_or(0);
        intersection += x.min(y);
        union += x.max(y);
    }
    if union == 0 {
        1.0
    } else {
        intersection as f64 / union as f64
    }
}

// ---------------------------------------------------------------------------
// Shipped benchmark inverses.
// ---------------------------------------------------------------------------

fn str_record(s: String) -> Value {
    Value::Str(s)
}

fn expect_kv(record: &Value) -> (&Value, &Value) {
    match record {
        Value::Tuple(parts) if parts.len() == 2 => (&parts[0], &parts[1]),
        other => unreachable!("tap schema guarantees kv records, got {other}"),
    }
}

/// `collatz.flatten`: for each record (k, vs), emit one string record
/// str(k) per element of vs. Exact for positive integer keys.
fn collatz_flatten() -> PseudoInverse {
    PseudoInverse::new(
        "collatz.flatten",
        Schema::key_value(Schema::Int, Schema::Collection(Box::new(Schema::Int))),
        Schema::Str,
        |tap| {
            let partitions = tap
                .partitions()
                .iter()
                .map(|part| {
                    part.iter()
                        .flat_map(|record| {
                            let (key, values) = expect_kv(record);
                            let Value::Collection(vs) = values else { unreachable!() };
                            vs.iter().map(move |_| str_record(key.to_string()))
                        })
                        .collect()
                })
                .collect();
            Dataset::new(Schema::Str, partitions)
        },
    )
}

/// `wordcount.lines50`: join consecutive words into lines of up to 50.
fn wordcount_lines50() -> PseudoInverse {
    PseudoInverse::new(
        "wordcount.lines50",
        Schema::key_value(Schema::Str, Schema::Int),
        Schema::Str,
        |tap| {
            let partitions = tap
                .partitions()
                .iter()
                .map(|part| {
                    part.chunks(50)
                        .map(|chunk| {
                            let words: Vec<&str> = chunk
                                .iter()
                                .map(|record| match expect_kv(record).0 {
                                    Value::Str(w) => w.as_str(),
                                    _ => unreachable!(),
                                })
                                .collect();
                            str_record(words.join(" "))
                        })
                        .collect()
                })
                .collect();
            Dataset::new(Schema::Str, partitions)
        },
    )
}

/// `deptgpas.course_per_record`: record j with key dept d and average a
/// becomes one "42,<d><j>,<clamped rounded a>" input line, synthesizing a
/// unique course per record.
fn deptgpas_course_per_record() -> PseudoInverse {
    PseudoInverse::new(
        "deptgpas.course_per_record",
        Schema::key_value(Schema::Str, Schema::Float),
        Schema::Str,
        |tap| {
            let mut course = 0u64;
            let partitions = tap
                .partitions()
                .iter()
                .map(|part| {
                    part.iter()
                        .map(|record| {
                            let (dept, avg) = expect_kv(record);
                            let Value::Str(dept) = dept else { unreachable!() };
                            let Value::Float(avg) = avg else { unreachable!() };
                            let grade = avg.round().clamp(0.0, 4.0) as i64;
                            let line = format!("42,{dept}{course},{grade}");
                            course += 1;
                            str_record(line)
                        })
                        .collect()
                })
                .collect();
            Dataset::new(Schema::Str, partitions)
        },
    )
}

/// `stock.chrono_fill`: (symbol, prices) becomes one CSV line per price,
/// with chronological dates so the program's within-group sort preserves
/// price order, and zeros for the unused fields.
fn stock_chrono_fill() -> PseudoInverse {
    PseudoInverse::new(
        "stock.chrono_fill",
        Schema::key_value(Schema::Str, Schema::Collection(Box::new(Schema::Float))),
        Schema::Str,
        |tap| {
            let partitions = tap
                .partitions()
                .iter()
                .map(|part| {
                    part.iter()
                        .flat_map(|record| {
                            let (symbol, prices) = expect_kv(record);
                            let Value::Str(symbol) = symbol else { unreachable!() };
                            let Value::Collection(prices) = prices else { unreachable!() };
                            let symbol = symbol.clone();
                            prices.iter().enumerate().map(move |(i, price)| {
                                let Value::Float(close) = price else { unreachable!() };
                                let date = iso_date_from_epoch_days(i as i64);
                                str_record(format!("{symbol},{date},0,0,0,{close},0,0"))
                            })
                        })
                        .collect()
                })
                .collect();
            Dataset::new(Schema::Str, partitions)
        },
    )
}

fn builtins() -> Vec<PseudoInverse> {
    vec![
        collatz_flatten(),
        wordcount_lines50(),
        deptgpas_course_per_record(),
        stock_chrono_fill(),
    ]
}

/// Civil date for a day offset from 1970-01-01, formatted YYYY-MM-DD.
/// ISO dates compare chronologically as strings, which is all the Stock
/// pipeline's sort needs.
pub fn iso_date_from_epoch_days(days: i64) -> String {
    // Howard Hinnant's days-to-civil algorithm.
    let z = days + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z.rem_euclid(146_097);
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let year = yoe + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let day = doy - (153 * mp + 2) / 5 + 1;
    let month = if mp < 10 { mp + 3 } else { mp - 9 };
    let year = if month <= 2 { year + 1 } else { year };
    format!("{year:04}-{month:02}-{day:02}")
}
