//! The five subcommands and their report emission.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

use skewfuzz::dataflow::execute;
use skewfuzz::error::{Error, Result};
use skewfuzz::fuzzer::{run_baseline, run_phased, FuzzResult, Mode, PhasedResult};
use skewfuzz::inverse::InverseRegistry;
use skewfuzz::metrics::MetricsReport;
use skewfuzz::value::{encode_structured, encode_text, Dataset, Schema};

use crate::config::{generator_seed_dataset, resolve, ConfigFile, Overrides, ResolvedConfig};

fn ms(ns: u64) -> f64 {
    ns as f64 / 1e6
}

fn json_score(score: f64) -> serde_json::Value {
    if score.is_finite() {
        json!(score)
    } else {
        // JSON has no infinities; degenerate monitor scores print as text.
        json!(score.to_string())
    }
}

/// Concatenates phase score series into `elapsed_ms,best_score` rows with a
/// campaign-global clock.
fn write_series(path: &Path, phases: &[(u64, &FuzzResult)]) -> Result<()> {
    let mut rows = String::from("elapsed_ms,best_score\n");
    let mut best = f64::NEG_INFINITY;
    for (offset_ns, result) in phases {
        for (elapsed_ns, score) in &result.score_series {
            best = best.max(*score);
            rows.push_str(&format!("{:.3},{}\n", ms(offset_ns + elapsed_ns), best));
        }
    }
    fs::write(path, rows)?;
    Ok(())
}

fn write_triggering_input(
    output_dir: &Path,
    dataset: &Dataset,
) -> Result<PathBuf> {
    if dataset.schema() == &Schema::Str {
        let dir = output_dir.join("triggering_input");
        encode_text(dataset, &dir)?;
        Ok(dir)
    } else {
        let path = output_dir.join("triggering_input.sfds");
        encode_structured(dataset, &path)?;
        Ok(path)
    }
}

struct ResultSummary {
    mode: &'static str,
    triggered: bool,
    udf_iterations: u64,
    program_iterations: u64,
    udf_elapsed_ms: f64,
    inverse_elapsed_ms: f64,
    program_elapsed_ms: f64,
    best_score: f64,
    threshold: f64,
    triggering_input_path: Option<PathBuf>,
}

fn write_result_json(output_dir: &Path, summary: &ResultSummary) -> Result<()> {
    let value = json!({
        "mode": summary.mode,
        "triggered": summary.triggered,
        "udf_iterations": summary.udf_iterations,
        "program_iterations": summary.program_iterations,
        "udf_elapsed_ms": summary.udf_elapsed_ms,
        "inverse_elapsed_ms": summary.inverse_elapsed_ms,
        "program_elapsed_ms": summary.program_elapsed_ms,
        "best_score": json_score(summary.best_score),
        "threshold": summary.threshold,
        "triggering_input_path": summary.triggering_input_path,
    });
    fs::write(
        output_dir.join("result.json"),
        serde_json::to_string_pretty(&value).expect("static shape"),
    )?;
    Ok(())
}

/// Exit code contract shared by fuzz and baseline: 0 when the symptom was
/// triggered, 2 when the budget ran out first.
fn exit_for(triggered: bool) -> i32 {
    if triggered {
        0
    } else {
        2
    }
}

pub fn cmd_fuzz(config: &ConfigFile, overrides: &Overrides) -> Result<i32> {
    let resolved = resolve(config, overrides, Mode::Phased)?;
    let registry = InverseRegistry::with_builtins();
    fs::create_dir_all(&resolved.output_dir)?;
    let phased = run_phased(&resolved.campaign, &registry)?;
    emit_phased(&resolved, &phased)?;
    Ok(exit_for(phased.triggered()))
}

fn emit_phased(resolved: &ResolvedConfig, phased: &PhasedResult) -> Result<()> {
    let output_dir = &resolved.output_dir;
    let mut phases: Vec<(u64, &FuzzResult)> = vec![(0, &phased.udf)];
    if let Some(program) = &phased.program {
        phases.push((phased.udf.elapsed_ns + phased.lift_elapsed_ns, program));
    }
    write_series(&output_dir.join("series.csv"), &phases)?;

    if let Some(udf_input) = &phased.udf.triggering_dataset {
        encode_structured(udf_input, &output_dir.join("triggering_udf_input.sfds"))?;
    }
    let triggering_input_path = match phased.program.as_ref().and_then(|p| {
        p.triggering_dataset.as_ref()
    }) {
        Some(dataset) if phased.triggered() => Some(write_triggering_input(output_dir, dataset)?),
        _ => None,
    };

    let program = phased.program.as_ref();
    let best = phased
        .udf
        .best_score
        .max(program.map(|p| p.best_score).unwrap_or(f64::NEG_INFINITY));
    write_result_json(
        output_dir,
        &ResultSummary {
            mode: "phased",
            triggered: phased.triggered(),
            udf_iterations: phased.udf.iterations,
            program_iterations: program.map(|p| p.iterations).unwrap_or(0),
            udf_elapsed_ms: ms(phased.udf.elapsed_ns),
            inverse_elapsed_ms: ms(phased.lift_elapsed_ns),
            program_elapsed_ms: ms(program.map(|p| p.elapsed_ns).unwrap_or(0)),
            best_score: best,
            threshold: resolved.threshold,
            triggering_input_path,
        },
    )
}

pub fn cmd_baseline(config: &ConfigFile, overrides: &Overrides) -> Result<i32> {
    let resolved = resolve(config, overrides, Mode::Baseline)?;
    fs::create_dir_all(&resolved.output_dir)?;
    let result = run_baseline(&resolved.campaign)?;
    write_series(&resolved.output_dir.join("series.csv"), &[(0, &result)])?;
    let triggering_input_path = match &result.triggering_dataset {
        Some(dataset) if result.triggered => {
            Some(write_triggering_input(&resolved.output_dir, dataset)?)
        }
        _ => None,
    };
    write_result_json(
        &resolved.output_dir,
        &ResultSummary {
            mode: "baseline",
            triggered: result.triggered,
            udf_iterations: 0,
            program_iterations: result.iterations,
            udf_elapsed_ms: 0.0,
            inverse_elapsed_ms: 0.0,
            program_elapsed_ms: ms(result.elapsed_ns),
            best_score: result.best_score,
            threshold: resolved.threshold,
            triggering_input_path,
        },
    )?;
    Ok(exit_for(result.triggered))
}

/// One whole-program execution with the full metrics report dumped as JSON.
pub fn cmd_run(config: &ConfigFile, overrides: &Overrides) -> Result<i32> {
    let resolved = resolve(config, overrides, Mode::Baseline)?;
    fs::create_dir_all(&resolved.output_dir)?;
    let mut report = MetricsReport::new();
    let output = execute(
        &resolved.campaign.pipeline,
        &resolved.campaign.seed,
        &mut report,
        &resolved.campaign.counters,
    )?;
    let values = report.extract(&resolved.campaign.metric, resolved.campaign.monitor_stage)?;
    let verdict = resolved.campaign.monitor.evaluate(&values)?;
    let summary = json!({
        "benchmark": resolved.benchmark.name,
        "output_records": output.total_records(),
        "monitored_metric": resolved.campaign.metric.to_string(),
        "monitor_stage": resolved.campaign.monitor_stage,
        "score": json_score(verdict.score),
        "triggered": verdict.triggered,
        "metrics": report.to_json(),
    });
    fs::write(
        resolved.output_dir.join("metrics.json"),
        serde_json::to_string_pretty(&summary).expect("static shape"),
    )?;
    println!(
        "{}: {} output records, {} = {}",
        resolved.benchmark.name,
        output.total_records(),
        resolved.campaign.metric,
        verdict.score
    );
    Ok(0)
}

/// Repeats the phased campaign across mutation weights for M13/M14,
/// `reps` seeded repetitions each.
pub fn cmd_sweep(
    config: &ConfigFile,
    overrides: &Overrides,
    weights: &[f64],
    reps: u64,
) -> Result<i32> {
    if weights.is_empty() {
        return Err(Error::Config("sweep needs at least one weight".into()));
    }
    let registry = InverseRegistry::with_builtins();
    let base = resolve(config, overrides, Mode::Phased)?;
    fs::create_dir_all(&base.output_dir)?;
    let mut rows = String::from("weight,repetition,iterations,elapsed_ms,triggered\n");
    for &weight in weights {
        for rep in 0..reps {
            let mut campaign = base.campaign.clone();
            campaign.mutation_config.weight_overrides.insert("M13".into(), weight);
            campaign.mutation_config.weight_overrides.insert("M14".into(), weight);
            let tap_schema = campaign.pipeline.stages()[campaign.tap.stage_id]
                .input_schema
                .clone();
            campaign.udf_mutations = skewfuzz::mutation::derive_mutations(
                &tap_schema,
                base.benchmark.skew_category,
                &campaign.mutation_config,
                campaign.tap.keys_unique,
            )?;
            campaign.rng_seed = campaign.rng_seed.wrapping_add(rep);
            let phased = run_phased(&campaign, &registry)?;
            rows.push_str(&format!(
                "{weight},{rep},{},{:.3},{}\n",
                phased.total_iterations(),
                ms(phased.total_elapsed_ns()),
                phased.triggered(),
            ));
        }
    }
    fs::write(base.output_dir.join("sweep.csv"), rows)?;
    Ok(0)
}

/// Materializes a benchmark's generator output as part files.
pub fn cmd_gen(config: &ConfigFile, overrides: &Overrides) -> Result<i32> {
    let dataset = generator_seed_dataset(config)?;
    let output_dir = overrides
        .output
        .clone()
        .or_else(|| config.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let paths = encode_text(&dataset, &output_dir)?;
    println!(
        "wrote {} partitions ({} records) to {}",
        paths.len(),
        dataset.total_records(),
        output_dir.display()
    );
    Ok(0)
}
