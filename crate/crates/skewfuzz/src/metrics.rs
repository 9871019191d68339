//! Per-stage, per-partition collection of the ten performance metrics plus
//! named custom counters.
//!
//! Times are nanoseconds internally; the JSON report prints milliseconds.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{Error, Result};

/// The ten captured metrics, plus user-defined counters.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum MetricKind {
    JobExecutionTime,
    GarbageCollectionTime,
    PeakMemoryUsage,
    MemoryBytesSpilled,
    InputReadRecords,
    OutputWriteRecords,
    ShuffleReadRecords,
    ShuffleReadBytes,
    ShuffleWriteRecords,
    ShuffleWriteBytes,
    Custom(String),
}

impl MetricKind {
    pub const NAMED: [MetricKind; 10] = [
        MetricKind::JobExecutionTime,
        MetricKind::GarbageCollectionTime,
        MetricKind::PeakMemoryUsage,
        MetricKind::MemoryBytesSpilled,
        MetricKind::InputReadRecords,
        MetricKind::OutputWriteRecords,
        MetricKind::ShuffleReadRecords,
        MetricKind::ShuffleReadBytes,
        MetricKind::ShuffleWriteRecords,
        MetricKind::ShuffleWriteBytes,
    ];

    /// Wall-clock metrics are noisy between runs; count and byte metrics are
    /// bit-identical. The fuzzer uses this to decide when a triggering input
    /// needs re-confirmation.
    pub fn is_runtime(&self) -> bool {
        matches!(self, MetricKind::JobExecutionTime)
    }

    pub fn parse(name: &str) -> Result<MetricKind> {
        let kind = match name {
            "JobExecutionTime" | "Runtime" => MetricKind::JobExecutionTime,
            "GarbageCollectionTime" => MetricKind::GarbageCollectionTime,
            "PeakMemoryUsage" => MetricKind::PeakMemoryUsage,
            "MemoryBytesSpilled" => MetricKind::MemoryBytesSpilled,
            "InputReadRecords" => MetricKind::InputReadRecords,
            "OutputWriteRecords" => MetricKind::OutputWriteRecords,
            "ShuffleReadRecords" => MetricKind::ShuffleReadRecords,
            "ShuffleReadBytes" => MetricKind::ShuffleReadBytes,
            "ShuffleWriteRecords" => MetricKind::ShuffleWriteRecords,
            "ShuffleWriteBytes" => MetricKind::ShuffleWriteBytes,
            other => MetricKind::Custom(other.to_string()),
        };
        Ok(kind)
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            MetricKind::JobExecutionTime => "JobExecutionTime",
            MetricKind::GarbageCollectionTime => "GarbageCollectionTime",
            MetricKind::PeakMemoryUsage => "PeakMemoryUsage",
            MetricKind::MemoryBytesSpilled => "MemoryBytesSpilled",
            MetricKind::InputReadRecords => "InputReadRecords",
            MetricKind::OutputWriteRecords => "OutputWriteRecords",
            MetricKind::ShuffleReadRecords => "ShuffleReadRecords",
            MetricKind::ShuffleReadBytes => "ShuffleReadBytes",
            MetricKind::ShuffleWriteRecords => "ShuffleWriteRecords",
            MetricKind::ShuffleWriteBytes => "ShuffleWriteBytes",
            MetricKind::Custom(name) => name.as_str(),
        };
        write!(f, "{name}")
    }
}

/// One task's worth of metric values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TaskMetrics {
    pub runtime_ns: u64,
    pub gc_sim_ns: u64,
    pub peak_memory_bytes: u64,
    pub spilled_bytes: u64,
    pub input_records: u64,
    pub output_records: u64,
    pub shuffle_read_records: u64,
    pub shuffle_read_bytes: u64,
    pub shuffle_write_records: u64,
    pub shuffle_write_bytes: u64,
    pub custom: BTreeMap<String, u64>,
}

impl TaskMetrics {
    fn get(&self, kind: &MetricKind) -> Option<u64> {
        match kind {
            MetricKind::JobExecutionTime => Some(self.runtime_ns),
            MetricKind::GarbageCollectionTime => Some(self.gc_sim_ns),
            MetricKind::PeakMemoryUsage => Some(self.peak_memory_bytes),
            MetricKind::MemoryBytesSpilled => Some(self.spilled_bytes),
            MetricKind::InputReadRecords => Some(self.input_records),
            MetricKind::OutputWriteRecords => Some(self.output_records),
            MetricKind::ShuffleReadRecords => Some(self.shuffle_read_records),
            MetricKind::ShuffleReadBytes => Some(self.shuffle_read_bytes),
            MetricKind::ShuffleWriteRecords => Some(self.shuffle_write_records),
            MetricKind::ShuffleWriteBytes => Some(self.shuffle_write_bytes),
            MetricKind::Custom(name) => self.custom.get(name).copied(),
        }
    }
}

/// Declared custom counter names for one execution.
///
/// UDFs may only increment counters that were declared up front, which keeps
/// `extract` able to tell a zero counter from a typo.
#[derive(Debug, Clone, Default)]
pub struct CustomCounters {
    names: BTreeSet<String>,
}

impl CustomCounters {
    pub fn none() -> CustomCounters {
        CustomCounters::default()
    }

    pub fn declare<S: Into<String>>(names: impl IntoIterator<Item = S>) -> CustomCounters {
        CustomCounters {
            names: names.into_iter().map(Into::into).collect(),
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }

    pub fn is_declared(&self, name: &str) -> bool {
        self.names.contains(name)
    }
}

/// Per (stage, partition) metric storage for one execution.
#[derive(Debug, Clone, Default)]
pub struct MetricsReport {
    rows: BTreeMap<(usize, usize), TaskMetrics>,
    declared_customs: BTreeSet<String>,
}

impl MetricsReport {
    pub fn new() -> MetricsReport {
        MetricsReport::default()
    }

    pub(crate) fn declare_customs(&mut self, counters: &CustomCounters) {
        self.declared_customs
            .extend(counters.names().map(str::to_string));
    }

    /// Records one task's metrics. Re-recording the same (stage, partition)
    /// replaces the previous entry.
    #[allow(clippy::too_many_arguments)]
    pub fn record_task(
        &mut self,
        stage_id: usize,
        partition: usize,
        runtime_ns: u64,
        in_records: u64,
        out_records: u64,
        sw_records: u64,
        sw_bytes: u64,
        sr_records: u64,
        sr_bytes: u64,
        peak_buffer_bytes: u64,
        spilled_bytes: u64,
        gc_sim_ns: u64,
    ) {
        let row = self.rows.entry((stage_id, partition)).or_default();
        row.runtime_ns = runtime_ns;
        row.gc_sim_ns = gc_sim_ns;
        row.peak_memory_bytes = peak_buffer_bytes;
        row.spilled_bytes = spilled_bytes;
        row.input_records = in_records;
        row.output_records = out_records;
        row.shuffle_read_records = sr_records;
        row.shuffle_read_bytes = sr_bytes;
        row.shuffle_write_records = sw_records;
        row.shuffle_write_bytes = sw_bytes;
    }

    pub(crate) fn record_custom(&mut self, stage_id: usize, partition: usize, counts: BTreeMap<String, u64>) {
        let row = self.rows.entry((stage_id, partition)).or_default();
        row.custom = counts;
    }

    pub fn row(&self, stage_id: usize, partition: usize) -> Option<&TaskMetrics> {
        self.rows.get(&(stage_id, partition))
    }

    /// Stage ids present in the report.
    pub fn stages(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.rows.keys().map(|(s, _)| *s).collect();
        ids.dedup();
        ids
    }

    /// Per-partition values of `metric` for `stage_id`, ordered by partition
    /// index. Unexecuted stages yield an empty vector.
    pub fn extract(&self, metric: &MetricKind, stage_id: usize) -> Result<Vec<f64>> {
        if let MetricKind::Custom(name) = metric {
            let known = self.declared_customs.contains(name)
                || self.rows.values().any(|r| r.custom.contains_key(name));
            if !known {
                return Err(Error::Metric(format!("unknown custom metric {name:?}")));
            }
        }
        let mut values = Vec::new();
        for ((stage, partition), row) in self.rows.range((stage_id, 0)..(stage_id + 1, 0)) {
            debug_assert_eq!(*stage, stage_id);
            debug_assert_eq!(*partition, values.len());
            values.push(row.get(metric).unwrap_or(0) as f64);
        }
        Ok(values)
    }

    /// JSON object: stage -> partition -> metric -> value. Time metrics are
    /// reported in milliseconds.
    pub fn to_json(&self) -> serde_json::Value {
        let mut stages = serde_json::Map::new();
        for ((stage, partition), row) in &self.rows {
            let stage_entry = stages
                .entry(stage.to_string())
                .or_insert_with(|| serde_json::Value::Object(Default::default()));
            let mut metrics = serde_json::Map::new();
            for kind in MetricKind::NAMED {
                let raw = row.get(&kind).unwrap_or(0);
                let value = if kind.is_runtime() || kind == MetricKind::GarbageCollectionTime {
                    serde_json::json!(raw as f64 / 1e6)
                } else {
                    serde_json::json!(raw)
                };
                metrics.insert(kind.to_string(), value);
            }
            for (name, count) in &row.custom {
                metrics.insert(name.clone(), serde_json::json!(count));
            }
            stage_entry
                .as_object_mut()
                .unwrap()
                .insert(partition.to_string(), serde_json::Value::Object(metrics));
        }
        serde_json::Value::Object(stages)
    }
}
