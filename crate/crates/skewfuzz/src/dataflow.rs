//! In-process partitioned dataflow engine with stage tap points.
//!
//! The engine executes whole programs, program prefixes, and isolated stages
//! with injected inputs. Stage granularity is one operator; shuffle stages
//! (group/reduce by key) carry both the write-side and read-side shuffle
//! metrics, with row `p` holding the write metrics of input partition `p`
//! and the read metrics of output partition `p`.
//!
//! Everything that is not wall-clock time is deterministic: the shuffle
//! partitioner is FNV-1a over canonical value bytes, grouped values are
//! sorted by their canonical encoding, and output records of a shuffle stage
//! are emitted in canonical key order.
//!
//! Each partition task runs on its own thread, one task at a time, and the
//! recorded task runtime spans dispatch to completion. Launch overhead is
//! charged to the task the way distributed engines charge scheduling and
//! deserialization to task time, which gives every task a realistic floor
//! of tens of microseconds; tiny per-record cost differences stay below it
//! while genuinely expensive records stand out. Running tasks one at a time
//! keeps outputs, counters, and count/byte metrics bit-deterministic.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::metrics::{CustomCounters, MetricsReport};
use crate::value::{canonical_key, estimate_bytes, stable_hash, Dataset, Schema, Value};

/// Mutable per-task state handed to UDFs. The only side effect a UDF may
/// have is incrementing named counters through it.
#[derive(Debug, Default)]
pub struct TaskCtx {
    counts: BTreeMap<String, u64>,
}

impl TaskCtx {
    pub fn increment(&mut self, counter: &str) {
        *self.counts.entry(counter.to_string()).or_insert(0) += 1;
    }
}

pub type MapUdf = Arc<dyn Fn(&Value, &mut TaskCtx) -> Result<Value> + Send + Sync>;
pub type FlatMapUdf = Arc<dyn Fn(&Value, &mut TaskCtx) -> Result<Vec<Value>> + Send + Sync>;
pub type FilterUdf = Arc<dyn Fn(&Value, &mut TaskCtx) -> Result<bool> + Send + Sync>;
pub type ReduceUdf = Arc<dyn Fn(&Value, &Value, &mut TaskCtx) -> Result<Value> + Send + Sync>;

#[derive(Clone)]
pub enum Operator {
    Map(MapUdf),
    FlatMap(FlatMapUdf),
    Filter(FilterUdf),
    GroupByKey,
    ReduceByKey(ReduceUdf),
}

impl std::fmt::Debug for Operator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Operator::Map(_) => "Map",
            Operator::FlatMap(_) => "FlatMap",
            Operator::Filter(_) => "Filter",
            Operator::GroupByKey => "GroupByKey",
            Operator::ReduceByKey(_) => "ReduceByKey",
        };
        write!(f, "{name}")
    }
}

#[derive(Debug, Clone)]
pub struct Stage {
    pub id: usize,
    pub name: String,
    pub operator: Operator,
    pub input_schema: Schema,
    pub output_schema: Schema,
    pub shuffle_boundary: bool,
}

/// A staged dataflow program.
#[derive(Debug, Clone)]
pub struct Pipeline {
    stages: Vec<Stage>,
    input_schema: Schema,
    n_shuffle_partitions: usize,
    spill_threshold_bytes: Option<u64>,
    gc_ns_per_byte: f64,
}

impl Pipeline {
    pub fn builder(input_schema: Schema, n_shuffle_partitions: usize) -> PipelineBuilder {
        PipelineBuilder {
            input_schema,
            n_shuffle_partitions,
            stages: Vec::new(),
            error: None,
        }
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn input_schema(&self) -> &Schema {
        &self.input_schema
    }

    pub fn n_shuffle_partitions(&self) -> usize {
        self.n_shuffle_partitions
    }

    pub fn stage_by_name(&self, name: &str) -> Option<usize> {
        self.stages.iter().position(|s| s.name == name)
    }

    /// Simulated-spill threshold; tasks whose peak buffered bytes exceed it
    /// report the excess as spilled. Default: never spills.
    pub fn with_spill_threshold(mut self, bytes: u64) -> Pipeline {
        self.spill_threshold_bytes = Some(bytes);
        self
    }

    /// Simulated GC cost per allocated byte. Default 0, so the metric reads 0.
    pub fn with_gc_ns_per_byte(mut self, ns: f64) -> Pipeline {
        self.gc_ns_per_byte = ns;
        self
    }
}

pub struct PipelineBuilder {
    input_schema: Schema,
    n_shuffle_partitions: usize,
    stages: Vec<Stage>,
    error: Option<Error>,
}

impl PipelineBuilder {
    fn current_schema(&self) -> &Schema {
        self.stages
            .last()
            .map(|s| &s.output_schema)
            .unwrap_or(&self.input_schema)
    }

    fn push(&mut self, name: &str, operator: Operator, output_schema: Schema, shuffle: bool) {
        let input_schema = self.current_schema().clone();
        self.stages.push(Stage {
            id: self.stages.len(),
            name: name.to_string(),
            operator,
            input_schema,
            output_schema,
            shuffle_boundary: shuffle,
        });
    }

    pub fn map<F>(mut self, name: &str, output_schema: Schema, udf: F) -> Self
    where
        F: Fn(&Value, &mut TaskCtx) -> Result<Value> + Send + Sync + 'static,
    {
        self.push(name, Operator::Map(Arc::new(udf)), output_schema, false);
        self
    }

    pub fn flat_map<F>(mut self, name: &str, output_schema: Schema, udf: F) -> Self
    where
        F: Fn(&Value, &mut TaskCtx) -> Result<Vec<Value>> + Send + Sync + 'static,
    {
        self.push(name, Operator::FlatMap(Arc::new(udf)), output_schema, false);
        self
    }

    pub fn filter<F>(mut self, name: &str, udf: F) -> Self
    where
        F: Fn(&Value, &mut TaskCtx) -> Result<bool> + Send + Sync + 'static,
    {
        let schema = self.current_schema().clone();
        self.push(name, Operator::Filter(Arc::new(udf)), schema, false);
        self
    }

    pub fn group_by_key(mut self, name: &str) -> Self {
        match self.current_schema().as_key_value() {
            Some((k, v)) => {
                let out = Schema::key_value(k.clone(), Schema::Collection(Box::new(v.clone())));
                self.push(name, Operator::GroupByKey, out, true);
            }
            None => {
                self.error = Some(Error::Schema(format!(
                    "groupByKey stage {name:?} requires an arity-2 tuple input, got {}",
                    self.current_schema()
                )));
            }
        }
        self
    }

    pub fn reduce_by_key<F>(mut self, name: &str, udf: F) -> Self
    where
        F: Fn(&Value, &Value, &mut TaskCtx) -> Result<Value> + Send + Sync + 'static,
    {
        match self.current_schema().as_key_value() {
            Some(_) => {
                let out = self.current_schema().clone();
                self.push(name, Operator::ReduceByKey(Arc::new(udf)), out, true);
            }
            None => {
                self.error = Some(Error::Schema(format!(
                    "reduceByKey stage {name:?} requires an arity-2 tuple input, got {}",
                    self.current_schema()
                )));
            }
        }
        self
    }

    pub fn build(self) -> Result<Pipeline> {
        if let Some(err) = self.error {
            return Err(err);
        }
        if self.stages.is_empty() {
            return Err(Error::Schema("pipeline needs at least one stage".into()));
        }
        if self.n_shuffle_partitions == 0 {
            return Err(Error::Schema("n_shuffle_partitions must be positive".into()));
        }
        Ok(Pipeline {
            stages: self.stages,
            input_schema: self.input_schema,
            n_shuffle_partitions: self.n_shuffle_partitions,
            spill_threshold_bytes: None,
            gc_ns_per_byte: 0.0,
        })
    }
}

/// A stage boundary where the engine can extract or inject the stage input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TapPoint {
    pub stage_id: usize,
    /// Injected datasets must have globally unique keys (e.g. the tap stage
    /// follows an aggregation that guarantees it).
    pub keys_unique: bool,
}

impl TapPoint {
    pub fn new(stage_id: usize) -> TapPoint {
        TapPoint {
            stage_id,
            keys_unique: false,
        }
    }

    pub fn with_unique_keys(mut self) -> TapPoint {
        self.keys_unique = true;
        self
    }
}

/// Runs the whole program, recording metrics for every stage.
pub fn execute(
    pipeline: &Pipeline,
    input: &Dataset,
    report: &mut MetricsReport,
    counters: &CustomCounters,
) -> Result<Dataset> {
    if input.schema() != pipeline.input_schema() {
        return Err(Error::Schema(format!(
            "input schema {} does not match pipeline input {}",
            input.schema(),
            pipeline.input_schema()
        )));
    }
    report.declare_customs(counters);
    run_stages(pipeline, 0, input.partitions().to_vec(), Some(report))
}

/// Runs stages before the tap and returns the dataset that would be fed to
/// the tap stage (post-shuffle when the tap follows a shuffle boundary).
pub fn execute_prefix(pipeline: &Pipeline, input: &Dataset, tap: &TapPoint) -> Result<Dataset> {
    if tap.stage_id >= pipeline.stages.len() {
        return Err(Error::Schema(format!(
            "tap stage {} out of range ({} stages)",
            tap.stage_id,
            pipeline.stages.len()
        )));
    }
    if input.schema() != pipeline.input_schema() {
        return Err(Error::Schema(format!(
            "input schema {} does not match pipeline input {}",
            input.schema(),
            pipeline.input_schema()
        )));
    }
    if tap.stage_id == 0 {
        return Ok(input.clone());
    }
    let mut partitions = input.partitions().to_vec();
    for stage in &pipeline.stages[..tap.stage_id] {
        partitions = run_one_stage(pipeline, stage, partitions, None)?;
    }
    Ok(Dataset::new_unchecked(
        pipeline.stages[tap.stage_id].input_schema.clone(),
        partitions,
    ))
}

/// Executes from the tap stage through the final stage with an injected
/// input, recording metrics for the executed stages only.
pub fn execute_from(
    pipeline: &Pipeline,
    tap: &TapPoint,
    udf_input: &Dataset,
    report: &mut MetricsReport,
    counters: &CustomCounters,
) -> Result<Dataset> {
    let stage = pipeline
        .stages
        .get(tap.stage_id)
        .ok_or_else(|| Error::Schema(format!("tap stage {} out of range", tap.stage_id)))?;
    if udf_input.schema() != &stage.input_schema {
        return Err(Error::Schema(format!(
            "injected schema {} does not match stage {} input {}",
            udf_input.schema(),
            stage.name,
            stage.input_schema
        )));
    }
    if tap.keys_unique {
        check_unique_keys(udf_input)?;
    }
    report.declare_customs(counters);
    run_stages(pipeline, tap.stage_id, udf_input.partitions().to_vec(), Some(report))
}

fn check_unique_keys(dataset: &Dataset) -> Result<()> {
    if dataset.schema().as_key_value().is_none() {
        return Err(Error::Constraint(
            "keys_unique constraint requires key-value records".into(),
        ));
    }
    let mut seen = std::collections::BTreeSet::new();
    for record in dataset.iter_records() {
        let Value::Tuple(parts) = record else {
            unreachable!("schema checked")
        };
        if !seen.insert(canonical_key(&parts[0])) {
            return Err(Error::Constraint(format!(
                "duplicate key {} under keys_unique constraint",
                parts[0]
            )));
        }
    }
    Ok(())
}

fn run_stages(
    pipeline: &Pipeline,
    from_stage: usize,
    mut partitions: Vec<Vec<Value>>,
    mut report: Option<&mut MetricsReport>,
) -> Result<Dataset> {
    for stage in &pipeline.stages[from_stage..] {
        partitions = run_one_stage(pipeline, stage, partitions, report.as_deref_mut())?;
    }
    let schema = pipeline.stages.last().unwrap().output_schema.clone();
    Ok(Dataset::new_unchecked(schema, partitions))
}

fn run_one_stage(
    pipeline: &Pipeline,
    stage: &Stage,
    partitions: Vec<Vec<Value>>,
    report: Option<&mut MetricsReport>,
) -> Result<Vec<Vec<Value>>> {
    match &stage.operator {
        Operator::Map(_) | Operator::FlatMap(_) | Operator::Filter(_) => {
            run_narrow_stage(pipeline, stage, partitions, report)
        }
        Operator::GroupByKey | Operator::ReduceByKey(_) => {
            run_shuffle_stage(pipeline, stage, partitions, report)
        }
    }
}

struct TaskRow {
    runtime_ns: u64,
    in_records: u64,
    out_records: u64,
    sw_records: u64,
    sw_bytes: u64,
    sr_records: u64,
    sr_bytes: u64,
    peak_bytes: u64,
    alloc_bytes: u64,
    custom: BTreeMap<String, u64>,
}

fn record_row(pipeline: &Pipeline, report: &mut MetricsReport, stage: usize, partition: usize, row: TaskRow) {
    let spilled = match pipeline.spill_threshold_bytes {
        Some(limit) => row.peak_bytes.saturating_sub(limit),
        None => 0,
    };
    let gc_sim = (row.alloc_bytes as f64 * pipeline.gc_ns_per_byte) as u64;
    report.record_task(
        stage,
        partition,
        row.runtime_ns,
        row.in_records,
        row.out_records,
        row.sw_records,
        row.sw_bytes,
        row.sr_records,
        row.sr_bytes,
        row.peak_bytes,
        spilled,
        gc_sim,
    );
    report.record_custom(stage, partition, row.custom);
}

/// Runs one task body on a dedicated thread, timing dispatch to completion.
/// A panicking UDF surfaces as a UdfError instead of tearing the engine down.
fn timed_task<T: Send + 'static>(
    stage_id: usize,
    partition: usize,
    task: impl FnOnce() -> Result<T> + Send + 'static,
) -> Result<(T, u64)> {
    let start = Instant::now();
    let joined = std::thread::spawn(task).join();
    let runtime_ns = start.elapsed().as_nanos() as u64;
    match joined {
        Ok(result) => Ok((result?, runtime_ns)),
        Err(_) => Err(Error::Udf {
            stage: stage_id,
            partition,
            msg: "task panicked".into(),
        }),
    }
}

fn run_narrow_stage(
    pipeline: &Pipeline,
    stage: &Stage,
    partitions: Vec<Vec<Value>>,
    mut report: Option<&mut MetricsReport>,
) -> Result<Vec<Vec<Value>>> {
    let mut output = Vec::with_capacity(partitions.len());
    for (p, records) in partitions.into_iter().enumerate() {
        let operator = stage.operator.clone();
        let stage_id = stage.id;
        let in_records = records.len() as u64;
        type NarrowOut = (Vec<Value>, u64, u64, BTreeMap<String, u64>);
        let task = move || -> Result<NarrowOut> {
            let mut ctx = TaskCtx::default();
            let mut in_bytes = 0u64;
            let mut out = Vec::with_capacity(records.len());
            for record in &records {
                in_bytes += estimate_bytes(record);
                match &operator {
                    Operator::Map(udf) => out.push(udf(record, &mut ctx)?),
                    Operator::FlatMap(udf) => out.extend(udf(record, &mut ctx)?),
                    Operator::Filter(udf) => {
                        if udf(record, &mut ctx)? {
                            out.push(record.clone());
                        }
                    }
                    _ => unreachable!("narrow stage"),
                }
            }
            let out_bytes: u64 = out.iter().map(estimate_bytes).sum();
            Ok((out, in_bytes, out_bytes, ctx.counts))
        };
        let ((out, in_bytes, out_bytes, custom), runtime_ns) =
            timed_task(stage_id, p, task).map_err(|e| udf_err(e, stage_id, p))?;
        if let Some(report) = report.as_deref_mut() {
            record_row(
                pipeline,
                report,
                stage_id,
                p,
                TaskRow {
                    runtime_ns,
                    in_records,
                    out_records: out.len() as u64,
                    sw_records: 0,
                    sw_bytes: 0,
                    sr_records: 0,
                    sr_bytes: 0,
                    peak_bytes: in_bytes + out_bytes,
                    alloc_bytes: out_bytes,
                    custom,
                },
            );
        }
        output.push(out);
    }
    Ok(output)
}

fn udf_err(err: Error, stage: usize, partition: usize) -> Error {
    match err {
        already @ Error::Udf { .. } => already,
        other => Error::Udf {
            stage,
            partition,
            msg: other.to_string(),
        },
    }
}

/// Hash-partitions key-value records: a record with key `k` lands in
/// partition `stable_hash(k) mod n`.
pub fn shuffle(records: &[Value], n: usize) -> Result<Vec<Vec<Value>>> {
    if n == 0 {
        return Err(Error::Schema("shuffle needs at least one partition".into()));
    }
    let mut parts = vec![Vec::new(); n];
    for record in records {
        let Value::Tuple(tuple) = record else {
            return Err(Error::Schema(
                "shuffle requires arity-2 tuple records".into(),
            ));
        };
        if tuple.len() != 2 {
            return Err(Error::Schema(
                "shuffle requires arity-2 tuple records".into(),
            ));
        }
        let dest = (stable_hash(&tuple[0]) % n as u64) as usize;
        parts[dest].push(record.clone());
    }
    Ok(parts)
}

struct WriteSide {
    runtime_ns: u64,
    records: u64,
    bytes: u64,
    in_bytes: u64,
}

fn run_shuffle_stage(
    pipeline: &Pipeline,
    stage: &Stage,
    partitions: Vec<Vec<Value>>,
    mut report: Option<&mut MetricsReport>,
) -> Result<Vec<Vec<Value>>> {
    let n_in = partitions.len();
    let n_out = pipeline.n_shuffle_partitions();
    let stage_id = stage.id;
    let stage_name = stage.name.clone();

    // Write side: each input partition hashes its records to buckets.
    let mut buckets: Vec<Vec<Vec<Value>>> = Vec::with_capacity(n_in);
    let mut writes = Vec::with_capacity(n_in);
    for (p, records) in partitions.into_iter().enumerate() {
        let name = stage_name.clone();
        type WriteOut = (Vec<Vec<Value>>, u64, u64);
        let task = move || -> Result<WriteOut> {
            let mut dests = vec![Vec::new(); n_out];
            let mut bytes = 0u64;
            let count = records.len() as u64;
            for record in records {
                let Value::Tuple(tuple) = &record else {
                    return Err(Error::Schema(format!(
                        "stage {name} expects key-value records"
                    )));
                };
                bytes += estimate_bytes(&record);
                let dest = (stable_hash(&tuple[0]) % n_out as u64) as usize;
                dests[dest].push(record);
            }
            Ok((dests, bytes, count))
        };
        let ((dests, bytes, count), runtime_ns) = timed_task(stage_id, p, task)?;
        writes.push(WriteSide {
            runtime_ns,
            records: count,
            bytes,
            in_bytes: bytes,
        });
        buckets.push(dests);
    }

    // Read side: each output partition gathers, sorts and aggregates its
    // bucket. Group values are ordered by canonical bytes, output records by
    // canonical key, so results are independent of input arrival order.
    let mut output = Vec::with_capacity(n_out);
    let mut reads = Vec::with_capacity(n_out);
    for j in 0..n_out {
        let incoming: Vec<Value> = buckets
            .iter_mut()
            .flat_map(|bucket| bucket[j].drain(..))
            .collect();
        let operator = stage.operator.clone();
        type ReadOut = (Vec<Value>, u64, u64, u64, BTreeMap<String, u64>);
        let task = move || -> Result<ReadOut> {
            let mut ctx = TaskCtx::default();
            let mut sr_records = 0u64;
            let mut sr_bytes = 0u64;
            let mut groups: BTreeMap<Vec<u8>, (Value, Vec<Value>)> = BTreeMap::new();
            for record in incoming {
                sr_records += 1;
                sr_bytes += estimate_bytes(&record);
                let Value::Tuple(mut tuple) = record else {
                    unreachable!("checked on write side")
                };
                let value = tuple.pop().unwrap();
                let key = tuple.pop().unwrap();
                groups
                    .entry(canonical_key(&key))
                    .or_insert_with(|| (key, Vec::new()))
                    .1
                    .push(value);
            }
            let mut out = Vec::with_capacity(groups.len());
            for (_, (key, mut values)) in groups {
                values.sort_by_cached_key(canonical_key);
                let combined = match &operator {
                    Operator::GroupByKey => Value::Collection(values),
                    Operator::ReduceByKey(udf) => {
                        let mut iter = values.into_iter();
                        let mut acc = iter.next().unwrap();
                        for v in iter {
                            acc = udf(&acc, &v, &mut ctx)?;
                        }
                        acc
                    }
                    _ => unreachable!("shuffle stage"),
                };
                out.push(Value::Tuple(vec![key, combined]));
            }
            let sr_bytes_out: u64 = out.iter().map(estimate_bytes).sum();
            Ok((out, sr_records, sr_bytes, sr_bytes_out, ctx.counts))
        };
        let ((out, sr_records, sr_bytes, out_bytes, counts), runtime_ns) =
            timed_task(stage_id, j, task).map_err(|e| udf_err(e, stage_id, j))?;
        reads.push((runtime_ns, sr_records, sr_bytes, out.len() as u64, out_bytes, counts));
        output.push(out);
    }

    if let Some(report) = report.as_deref_mut() {
        for p in 0..n_in.max(n_out) {
            let w = writes.get(p);
            let r = reads.get(p);
            let (r_time, sr_records, sr_bytes, out_records, out_bytes, custom) = match r {
                Some((t, a, b, c, d, counts)) => (*t, *a, *b, *c, *d, counts.clone()),
                None => (0, 0, 0, 0, 0, BTreeMap::new()),
            };
            record_row(
                pipeline,
                report,
                stage.id,
                p,
                TaskRow {
                    runtime_ns: w.map(|w| w.runtime_ns).unwrap_or(0) + r_time,
                    in_records: w.map(|w| w.records).unwrap_or(0),
                    out_records,
                    sw_records: w.map(|w| w.records).unwrap_or(0),
                    sw_bytes: w.map(|w| w.bytes).unwrap_or(0),
                    sr_records,
                    sr_bytes,
                    peak_bytes: w.map(|w| w.in_bytes).unwrap_or(0).max(sr_bytes + out_bytes),
                    alloc_bytes: sr_bytes + out_bytes,
                    custom,
                },
            );
        }
    }
    Ok(output)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::MetricKind;

    fn str_of(v: &Value) -> &str {
        match v {
            Value::Str(s) => s,
            _ => panic!("expected Str"),
        }
    }

    /// Tiny word-count pipeline used across these tests.
    fn word_count(n_shuffle: usize) -> Pipeline {
        Pipeline::builder(Schema::Str, n_shuffle)
            .flat_map("split", Schema::Str, |v, _| {
                Ok(str_of(v)
                    .split_whitespace()
                    .map(|w| Value::Str(w.to_string()))
                    .collect())
            })
            .map(
                "pairs",
                Schema::key_value(Schema::Str, Schema::Int),
                |v, _| Ok(Value::Tuple(vec![v.clone(), Value::Int(1)])),
            )
            .reduce_by_key("counts", |a, b, _| match (a, b) {
                (Value::Int(x), Value::Int(y)) => Ok(Value::Int(x + y)),
                _ => unreachable!(),
            })
            .build()
            .unwrap()
    }

    fn records_sorted(dataset: &Dataset) -> Vec<Value> {
        let mut all: Vec<Value> = dataset.iter_records().cloned().collect();
        all.sort_by_cached_key(canonical_key);
        all
    }

    fn kv(word: &str, n: i64) -> Value {
        Value::Tuple(vec![Value::Str(word.into()), Value::Int(n)])
    }

    #[test]
    fn word_count_hand_counted() {
        let pipeline = word_count(1);
        let input = Dataset::from_lines(vec![vec!["a a b"]]).unwrap();
        let mut report = MetricsReport::new();
        let out = execute(&pipeline, &input, &mut report, &CustomCounters::none()).unwrap();
        assert_eq!(records_sorted(&out), vec![kv("a", 2), kv("b", 1)]);
    }

    #[test]
    fn filter_true_is_identity() {
        let pipeline = Pipeline::builder(Schema::Int, 1)
            .filter("keep", |_, _| Ok(true))
            .build()
            .unwrap();
        let input = Dataset::new(
            Schema::Int,
            vec![vec![Value::Int(1), Value::Int(2)], vec![Value::Int(3)]],
        )
        .unwrap();
        let out = execute(
            &pipeline,
            &input,
            &mut MetricsReport::new(),
            &CustomCounters::none(),
        )
        .unwrap();
        assert_eq!(out.partitions(), input.partitions());
    }

    #[test]
    fn schema_mismatch_is_rejected() {
        let pipeline = word_count(2);
        let ints = Dataset::new(Schema::Int, vec![vec![Value::Int(1)]]).unwrap();
        assert!(matches!(
            execute(
                &pipeline,
                &ints,
                &mut MetricsReport::new(),
                &CustomCounters::none()
            ),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn udf_error_carries_stage_and_partition() {
        let pipeline = Pipeline::builder(Schema::Int, 1)
            .map("boom", Schema::Int, |v, _| match v {
                Value::Int(7) => Err(Error::Domain("seven".into())),
                other => Ok(other.clone()),
            })
            .build()
            .unwrap();
        let input =
            Dataset::new(Schema::Int, vec![vec![Value::Int(1)], vec![Value::Int(7)]]).unwrap();
        match execute(
            &pipeline,
            &input,
            &mut MetricsReport::new(),
            &CustomCounters::none(),
        ) {
            Err(Error::Udf {
                stage: 0,
                partition: 1,
                ..
            }) => {}
            other => panic!("expected udf error, got {other:?}"),
        }
    }

    #[test]
    fn shuffle_modulo_one_and_conservation() {
        let records: Vec<Value> = (0..10).map(|i| kv(&format!("k{i}"), i)).collect();
        let parts = shuffle(&records, 1).unwrap();
        assert_eq!(parts[0].len(), 10);
        let parts = shuffle(&records, 4).unwrap();
        assert_eq!(parts.iter().map(Vec::len).sum::<usize>(), 10);
        // Same key, same partition, across repeated calls.
        let again = shuffle(&records, 4).unwrap();
        assert_eq!(parts, again);
    }

    #[test]
    fn group_by_key_unique_keys_and_sorted_groups() {
        let pipeline = Pipeline::builder(Schema::key_value(Schema::Str, Schema::Int), 3)
            .group_by_key("grouped")
            .build()
            .unwrap();
        let input = Dataset::new(
            pipeline.input_schema().clone(),
            vec![
                vec![kv("x", 3), kv("y", 1)],
                vec![kv("x", 1), kv("x", 2)],
            ],
        )
        .unwrap();
        let out = execute(
            &pipeline,
            &input,
            &mut MetricsReport::new(),
            &CustomCounters::none(),
        )
        .unwrap();
        let mut keys = Vec::new();
        for record in out.iter_records() {
            let Value::Tuple(parts) = record else { panic!() };
            keys.push(str_of(&parts[0]).to_string());
            if str_of(&parts[0]) == "x" {
                assert_eq!(
                    parts[1],
                    Value::Collection(vec![Value::Int(1), Value::Int(2), Value::Int(3)])
                );
            }
        }
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len(), 2);
    }

    #[test]
    fn shuffle_metrics_conserve_records_and_bytes() {
        let pipeline = word_count(3);
        let input = Dataset::from_lines(vec![
            vec!["a b c", "a a"],
            vec!["d e"],
            vec!["a d d d"],
        ])
        .unwrap();
        let mut report = MetricsReport::new();
        execute(&pipeline, &input, &mut report, &CustomCounters::none()).unwrap();
        let sw: f64 = report
            .extract(&MetricKind::ShuffleWriteRecords, 2)
            .unwrap()
            .iter()
            .sum();
        let sr: f64 = report
            .extract(&MetricKind::ShuffleReadRecords, 2)
            .unwrap()
            .iter()
            .sum();
        assert_eq!(sw, sr);
        assert_eq!(sw, 11.0);
        let swb: f64 = report
            .extract(&MetricKind::ShuffleWriteBytes, 2)
            .unwrap()
            .iter()
            .sum();
        let srb: f64 = report
            .extract(&MetricKind::ShuffleReadBytes, 2)
            .unwrap()
            .iter()
            .sum();
        assert_eq!(swb, srb);
    }

    #[test]
    fn prefix_then_from_matches_whole_execution() {
        let pipeline = word_count(2);
        let input = Dataset::from_lines(vec![vec!["a b", "b c c"], vec!["c a"]]).unwrap();
        let tap = TapPoint::new(2);

        let mut full_report = MetricsReport::new();
        let full = execute(&pipeline, &input, &mut full_report, &CustomCounters::none()).unwrap();

        let tapped = execute_prefix(&pipeline, &input, &tap).unwrap();
        assert_eq!(tapped.schema(), &Schema::key_value(Schema::Str, Schema::Int));
        let mut from_report = MetricsReport::new();
        let resumed = execute_from(
            &pipeline,
            &tap,
            &tapped,
            &mut from_report,
            &CustomCounters::none(),
        )
        .unwrap();
        assert_eq!(full.partitions(), resumed.partitions());
        // Prefix-only stages have no metrics in the resumed report.
        assert!(from_report
            .extract(&MetricKind::InputReadRecords, 0)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn tap_at_stage_zero_returns_input() {
        let pipeline = word_count(2);
        let input = Dataset::from_lines(vec![vec!["a b"]]).unwrap();
        let tapped = execute_prefix(&pipeline, &input, &TapPoint::new(0)).unwrap();
        assert_eq!(&tapped, &input);
    }

    #[test]
    fn wordcount_tap_yields_word_one_pairs() {
        let pipeline = word_count(1);
        let input = Dataset::from_lines(vec![vec!["a b"]]).unwrap();
        let tapped = execute_prefix(&pipeline, &input, &TapPoint::new(2)).unwrap();
        assert_eq!(records_sorted(&tapped), vec![kv("a", 1), kv("b", 1)]);
    }

    #[test]
    fn unique_keys_constraint_is_validated() {
        let pipeline = word_count(2);
        let tap = TapPoint::new(2).with_unique_keys();
        let dup = Dataset::new(
            Schema::key_value(Schema::Str, Schema::Int),
            vec![vec![kv("a", 1)], vec![kv("a", 1)]],
        )
        .unwrap();
        assert!(matches!(
            execute_from(
                &pipeline,
                &tap,
                &dup,
                &mut MetricsReport::new(),
                &CustomCounters::none()
            ),
            Err(Error::Constraint(_))
        ));
    }

    #[test]
    fn outputs_and_count_metrics_are_deterministic() {
        let pipeline = word_count(3);
        let input = Dataset::from_lines(vec![vec!["a b a", "c"], vec!["b a"]]).unwrap();
        let mut r1 = MetricsReport::new();
        let mut r2 = MetricsReport::new();
        let o1 = execute(&pipeline, &input, &mut r1, &CustomCounters::none()).unwrap();
        let o2 = execute(&pipeline, &input, &mut r2, &CustomCounters::none()).unwrap();
        assert_eq!(o1, o2);
        for kind in [
            MetricKind::InputReadRecords,
            MetricKind::OutputWriteRecords,
            MetricKind::ShuffleReadRecords,
            MetricKind::ShuffleReadBytes,
            MetricKind::ShuffleWriteRecords,
            MetricKind::ShuffleWriteBytes,
            MetricKind::PeakMemoryUsage,
        ] {
            for stage in 0..3 {
                assert_eq!(
                    r1.extract(&kind, stage).unwrap(),
                    r2.extract(&kind, stage).unwrap(),
                    "{kind} at stage {stage}"
                );
            }
        }
    }

    #[test]
    fn input_and_output_record_totals() {
        let pipeline = word_count(2);
        let input = Dataset::from_lines(vec![vec!["a b", "c"], vec!["d"]]).unwrap();
        let mut report = MetricsReport::new();
        let out = execute(&pipeline, &input, &mut report, &CustomCounters::none()).unwrap();
        let stage0_in: f64 = report
            .extract(&MetricKind::InputReadRecords, 0)
            .unwrap()
            .iter()
            .sum();
        assert_eq!(stage0_in as usize, input.total_records());
        let last_out: f64 = report
            .extract(&MetricKind::OutputWriteRecords, 2)
            .unwrap()
            .iter()
            .sum();
        assert_eq!(last_out as usize, out.total_records());
    }
}
