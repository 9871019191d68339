//! Campaign configuration: TOML file plus command-line overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use skewfuzz::benchmarks::{
    build_benchmark, build_collatz, gen_collatz_seed, gen_deptgpas, gen_stock_synthetic,
    gen_wordcount_synthetic, BenchmarkSpec, DeptGpasParams, COLLATZ_SHUFFLE_PARTITIONS,
    COLLATZ_WORK_SCALE,
};
use skewfuzz::error::{Error, Result};
use skewfuzz::fuzzer::{Budgets, FuzzCampaign, Mode};
use skewfuzz::metrics::MetricKind;
use skewfuzz::monitor::MonitorTemplate;
use skewfuzz::mutation::derive_mutations;
use skewfuzz::value::{decode_text, list_part_files, Dataset, Schema};

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub benchmark: String,
    /// Tap stage override; defaults to the benchmark's tap.
    pub tap_stage: Option<usize>,
    pub template: Option<String>,
    pub threshold: Option<f64>,
    /// Metric name; any name that is not one of the ten built-ins is a
    /// custom counter.
    pub metric: Option<String>,
    /// Monitor stage override; defaults to the benchmark's binding.
    pub stage: Option<usize>,
    pub inverse: Option<String>,
    pub rng_seed: Option<u64>,
    /// Collatz kernel scaling.
    pub work_scale: Option<u64>,
    pub n_shuffle_partitions: Option<usize>,
    #[serde(default)]
    pub budgets: BudgetSection,
    #[serde(default)]
    pub input: InputSection,
    #[serde(default)]
    pub mutations: MutationSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct BudgetSection {
    pub max_iterations: Option<u64>,
    pub max_wall_seconds: Option<f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct InputSection {
    /// "generator" (default) or "dir".
    pub source: Option<String>,
    pub dir: Option<PathBuf>,
    /// Seed for the dataset generator, independent of the campaign rng.
    pub data_seed: Option<u64>,
    // Generator sizing, interpreted per benchmark.
    pub partitions: Option<usize>,
    pub records_per_partition: Option<usize>,
    pub lines_per_partition: Option<usize>,
    pub symbols: Option<usize>,
    pub prices_per_symbol: Option<usize>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct MutationSection {
    /// Frozen slots: any of "key", "value".
    pub disable: Option<Vec<String>>,
    pub duplication_factor: Option<f64>,
    pub float_range: Option<[f64; 2]>,
    pub int_range: Option<[i64; 2]>,
    #[serde(default)]
    pub weight_overrides: BTreeMap<String, f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

/// Flag overrides; every field beats the config file when present.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub rng_seed: Option<u64>,
    pub max_iterations: Option<u64>,
    pub time_budget_secs: Option<f64>,
    pub output: Option<PathBuf>,
    pub input_dir: Option<PathBuf>,
}

/// A fully resolved campaign plus the bits the commands need around it.
pub struct ResolvedConfig {
    pub campaign: FuzzCampaign,
    pub benchmark: BenchmarkSpec,
    pub output_dir: PathBuf,
    pub threshold: f64,
}

pub fn load_config(path: &Path) -> Result<ConfigFile> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn benchmark_from(config: &ConfigFile) -> Result<BenchmarkSpec> {
    if config.benchmark == "collatz" {
        let work_scale = config.work_scale.unwrap_or(COLLATZ_WORK_SCALE);
        let n_shuffle = config
            .n_shuffle_partitions
            .unwrap_or(COLLATZ_SHUFFLE_PARTITIONS);
        return Ok(build_collatz(work_scale, n_shuffle));
    }
    build_benchmark(&config.benchmark)
}

/// The generator each benchmark uses when no input directory is given.
pub fn generator_seed_dataset(config: &ConfigFile) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.input.data_seed.unwrap_or(0));
    let input = &config.input;
    match config.benchmark.as_str() {
        "collatz" => Ok(gen_collatz_seed()),
        "wordcount" => Ok(gen_wordcount_synthetic(
            input.partitions.unwrap_or(20),
            input.lines_per_partition.unwrap_or(1200),
            &mut rng,
        )),
        "deptgpas" => {
            let defaults = DeptGpasParams::default();
            Ok(gen_deptgpas(
                DeptGpasParams {
                    partitions: input.partitions.unwrap_or(defaults.partitions),
                    records_per_partition: input
                        .records_per_partition
                        .unwrap_or(defaults.records_per_partition),
                    ..defaults
                },
                &mut rng,
            ))
        }
        "stock" => Ok(gen_stock_synthetic(
            input.symbols.unwrap_or(20),
            input.prices_per_symbol.unwrap_or(100),
            input.partitions.unwrap_or(20),
            &mut rng,
        )),
        other => Err(Error::Config(format!("unknown benchmark {other:?}"))),
    }
}

fn seed_dataset(config: &ConfigFile, overrides: &Overrides) -> Result<Dataset> {
    let dir = overrides.input_dir.clone().or_else(|| {
        match config.input.source.as_deref() {
            Some("dir") => config.input.dir.clone(),
            _ => None,
        }
    });
    match dir {
        Some(dir) => {
            let files = list_part_files(&dir)?;
            if files.is_empty() {
                return Err(Error::Config(format!(
                    "no part-* files under {}",
                    dir.display()
                )));
            }
            let n = config.input.partitions.unwrap_or(files.len());
            decode_text(&files, n)
        }
        None => generator_seed_dataset(config),
    }
}

pub fn resolve(config: &ConfigFile, overrides: &Overrides, mode: Mode) -> Result<ResolvedConfig> {
    let benchmark = benchmark_from(config)?;

    let monitor = match (&config.template, config.threshold) {
        (None, None) => benchmark.monitor,
        (Some(name), Some(threshold)) => MonitorTemplate::parse(name, threshold)?,
        (Some(name), None) => {
            MonitorTemplate::parse(name, benchmark.monitor.threshold())?
        }
        (None, Some(threshold)) => {
            MonitorTemplate::parse(benchmark.monitor.name(), threshold)?
        }
    };
    let metric = match &config.metric {
        Some(name) => MetricKind::parse(name)?,
        None => benchmark.metric.clone(),
    };
    let monitor_stage = config.stage.unwrap_or(benchmark.monitor_stage);
    let tap = match config.tap_stage {
        Some(stage_id) => skewfuzz::dataflow::TapPoint {
            stage_id,
            keys_unique: benchmark.tap.keys_unique && stage_id == benchmark.tap.stage_id,
        },
        None => benchmark.tap,
    };

    let mut mutation_config = benchmark.mutation_config.clone();
    if let Some(disable) = &config.mutations.disable {
        mutation_config.disable_keys = false;
        mutation_config.disable_values = false;
        for slot in disable {
            match slot.as_str() {
                "key" => mutation_config.disable_keys = true,
                "value" => mutation_config.disable_values = true,
                other => {
                    return Err(Error::Config(format!(
                        "mutations.disable entries must be \"key\" or \"value\", got {other:?}"
                    )))
                }
            }
        }
    }
    if let Some(factor) = config.mutations.duplication_factor {
        mutation_config.duplication_factor = factor;
    }
    if let Some([lo, hi]) = config.mutations.float_range {
        mutation_config.float_range = (lo, hi);
    }
    if let Some([lo, hi]) = config.mutations.int_range {
        mutation_config.int_range = (lo, hi);
    }
    mutation_config
        .weight_overrides
        .extend(config.mutations.weight_overrides.clone());
    mutation_config.validate()?;

    let tap_schema = benchmark
        .pipeline
        .stages()
        .get(tap.stage_id)
        .ok_or_else(|| Error::Config(format!("tap stage {} out of range", tap.stage_id)))?
        .input_schema
        .clone();
    let udf_mutations = derive_mutations(
        &tap_schema,
        benchmark.skew_category,
        &mutation_config,
        tap.keys_unique,
    )?;
    // Program-input fuzzing always works at the string level with default
    // knobs; symptom categories do not reweight it.
    let program_mutations = derive_mutations(
        &Schema::Str,
        benchmark.skew_category,
        &Default::default(),
        false,
    )?;

    let seed = seed_dataset(config, overrides)?;
    let budgets = Budgets {
        max_iterations: overrides
            .max_iterations
            .or(config.budgets.max_iterations)
            .unwrap_or(Budgets::default().max_iterations),
        max_wall: Duration::from_secs_f64(
            overrides
                .time_budget_secs
                .or(config.budgets.max_wall_seconds)
                .unwrap_or(600.0),
        ),
    };
    let inverse_id = config
        .inverse
        .clone()
        .unwrap_or_else(|| benchmark.inverse_id.to_string());
    let threshold = monitor.threshold();

    let campaign = FuzzCampaign {
        pipeline: benchmark.pipeline.clone(),
        tap,
        monitor,
        metric,
        monitor_stage,
        udf_mutations,
        program_mutations,
        mutation_config,
        seed,
        inverse_id: Some(inverse_id),
        counters: benchmark.counters.clone(),
        budgets,
        rng_seed: overrides.rng_seed.or(config.rng_seed).unwrap_or(0),
        mode,
    };
    campaign.validate()?;

    let output_dir = overrides
        .output
        .clone()
        .or_else(|| config.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    Ok(ResolvedConfig {
        campaign,
        benchmark,
        output_dir,
        threshold,
    })
}
