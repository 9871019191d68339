//! The phased fuzzing orchestrator and the naive baseline.
//!
//! Phase 1 fuzzes the tap stage in isolation: the seed's program prefix is
//! executed once to obtain the initial UDF input, then a feedback loop
//! mutates queue entries and keeps whatever improves the monitor score.
//! Phase 2 lifts the triggering UDF input back to a program input through
//! the registered pseudo-inverse. Phase 3 first tests the lifted input
//! unmutated, then falls back to fuzzing the whole program with
//! string-level mutations.
//!
//! The baseline runs the phase-3 loop directly from the original seed.

use std::time::{Duration, Instant};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

use crate::dataflow::{execute, execute_from, execute_prefix, Pipeline, TapPoint};
use crate::error::{Error, Result};
use crate::inverse::InverseRegistry;
use crate::metrics::{CustomCounters, MetricKind, MetricsReport};
use crate::monitor::MonitorTemplate;
use crate::mutation::{apply_mutation, sample, MutationConfig, WeightedMutation};
use crate::value::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Phased,
    Baseline,
}

#[derive(Debug, Clone, Copy)]
pub struct Budgets {
    pub max_iterations: u64,
    pub max_wall: Duration,
}

impl Default for Budgets {
    fn default() -> Budgets {
        Budgets {
            max_iterations: 20_000,
            max_wall: Duration::from_secs(600),
        }
    }
}

/// Everything one campaign needs. Budgets apply per phase.
#[derive(Debug, Clone)]
pub struct FuzzCampaign {
    pub pipeline: Pipeline,
    pub tap: TapPoint,
    pub monitor: MonitorTemplate,
    pub metric: MetricKind,
    pub monitor_stage: usize,
    pub udf_mutations: Vec<WeightedMutation>,
    pub program_mutations: Vec<WeightedMutation>,
    pub mutation_config: MutationConfig,
    pub seed: Dataset,
    pub inverse_id: Option<String>,
    pub counters: CustomCounters,
    pub budgets: Budgets,
    pub rng_seed: u64,
    pub mode: Mode,
}

impl FuzzCampaign {
    pub fn validate(&self) -> Result<()> {
        self.mutation_config.validate()?;
        let n_stages = self.pipeline.stages().len();
        if self.tap.stage_id >= n_stages {
            return Err(Error::Config(format!(
                "tap stage {} out of range ({n_stages} stages)",
                self.tap.stage_id
            )));
        }
        if self.monitor_stage >= n_stages {
            return Err(Error::Config(format!(
                "monitor stage {} out of range ({n_stages} stages)",
                self.monitor_stage
            )));
        }
        if self.monitor_stage < self.tap.stage_id {
            return Err(Error::Config(format!(
                "monitor stage {} precedes the tap stage {}; it never executes during UDF fuzzing",
                self.monitor_stage, self.tap.stage_id
            )));
        }
        if self.seed.schema() != self.pipeline.input_schema() {
            return Err(Error::Config(format!(
                "seed schema {} does not match pipeline input {}",
                self.seed.schema(),
                self.pipeline.input_schema()
            )));
        }
        if self.mode == Mode::Phased && self.inverse_id.is_none() {
            return Err(Error::Config(
                "phased mode requires a registered pseudo-inverse".into(),
            ));
        }
        if self.udf_mutations.is_empty() || self.program_mutations.is_empty() {
            return Err(Error::Config("mutation sets must be non-empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IterationOutcome {
    /// Symptom detected (and confirmed, for runtime metrics).
    Triggered,
    /// Feedback score improved; candidate queued.
    Improved,
    /// No improvement; candidate dropped.
    Rejected,
    /// Mutation or execution failed; candidate dropped.
    Error,
}

#[derive(Debug, Clone)]
pub struct MutationLogEntry {
    pub iteration: u64,
    pub chain: String,
    pub outcome: IterationOutcome,
}

/// Outcome of one fuzzing phase.
#[derive(Debug, Clone)]
pub struct FuzzResult {
    pub triggered: bool,
    pub triggering_dataset: Option<Dataset>,
    pub iterations: u64,
    pub elapsed_ns: u64,
    pub best_score: f64,
    /// (elapsed_ns, best_score) at start and on every improvement.
    pub score_series: Vec<(u64, f64)>,
    pub mutation_log: Vec<MutationLogEntry>,
}

/// Outcome of the three phased steps.
#[derive(Debug, Clone)]
pub struct PhasedResult {
    pub udf: FuzzResult,
    pub lift_elapsed_ns: u64,
    /// None when the UDF phase exhausted its budget untriggered.
    pub program: Option<FuzzResult>,
}

impl PhasedResult {
    pub fn triggered(&self) -> bool {
        self.program.as_ref().map(|p| p.triggered).unwrap_or(false)
    }

    pub fn total_iterations(&self) -> u64 {
        self.udf.iterations + self.program.as_ref().map(|p| p.iterations).unwrap_or(0)
    }

    pub fn total_elapsed_ns(&self) -> u64 {
        self.udf.elapsed_ns
            + self.lift_elapsed_ns
            + self.program.as_ref().map(|p| p.elapsed_ns).unwrap_or(0)
    }
}

/// Wall-clock metrics are noisy, so a runtime-symptom candidate only counts
/// as triggered when the monitor fires on at least 2 of 3 executions.
/// Count and byte metrics are deterministic and confirm on the first hit.
const CONFIRM_RUNS: usize = 2;

struct FuzzLoop<'a> {
    monitor: &'a MonitorTemplate,
    runtime_metric: bool,
    mutations: &'a [WeightedMutation],
    config: &'a MutationConfig,
    budgets: &'a Budgets,
}

impl FuzzLoop<'_> {
    /// The feedback loop shared by UDF fuzzing, program fuzzing, and the
    /// baseline. `run` executes a candidate and returns the monitored
    /// per-partition metric vector.
    fn run(
        &self,
        seed: Dataset,
        rng: &mut ChaCha8Rng,
        mut run: impl FnMut(&Dataset) -> Result<Vec<f64>>,
    ) -> Result<FuzzResult> {
        let start = Instant::now();
        let mut log = Vec::new();
        let mut series = Vec::new();

        // Iteration 0: the unmutated seed, so pre-triggered campaigns stop
        // immediately with zero mutations applied.
        let seed_values = run(&seed)?;
        let verdict = self.monitor.evaluate(&seed_values)?;
        let mut best = verdict.score;
        series.push((start.elapsed().as_nanos() as u64, best));
        if verdict.triggered && self.confirm(&seed, &mut run)? {
            return Ok(FuzzResult {
                triggered: true,
                triggering_dataset: Some(seed),
                iterations: 0,
                elapsed_ns: start.elapsed().as_nanos() as u64,
                best_score: best,
                score_series: series,
                mutation_log: log,
            });
        }

        let mut queue: Vec<Dataset> = vec![seed];
        let mut iterations = 0u64;
        while iterations < self.budgets.max_iterations
            && start.elapsed() < self.budgets.max_wall
        {
            iterations += 1;
            let parent = &queue[rng.random_range(0..queue.len())];
            let picked = sample(self.mutations, rng);
            let chain_label = picked.label();
            let candidate = match apply_mutation(&picked.chain, parent, self.config, rng) {
                Ok(candidate) => candidate,
                Err(_) => {
                    log.push(MutationLogEntry {
                        iteration: iterations,
                        chain: chain_label,
                        outcome: IterationOutcome::Error,
                    });
                    continue;
                }
            };
            let values = match run(&candidate) {
                Ok(values) => values,
                Err(_) => {
                    log.push(MutationLogEntry {
                        iteration: iterations,
                        chain: chain_label,
                        outcome: IterationOutcome::Error,
                    });
                    continue;
                }
            };
            let verdict = self.monitor.evaluate(&values)?;
            if verdict.triggered && self.confirm(&candidate, &mut run)? {
                best = best.max(verdict.score);
                series.push((start.elapsed().as_nanos() as u64, best));
                log.push(MutationLogEntry {
                    iteration: iterations,
                    chain: chain_label,
                    outcome: IterationOutcome::Triggered,
                });
                return Ok(FuzzResult {
                    triggered: true,
                    triggering_dataset: Some(candidate),
                    iterations,
                    elapsed_ns: start.elapsed().as_nanos() as u64,
                    best_score: best,
                    score_series: series,
                    mutation_log: log,
                });
            }
            if verdict.score > best {
                best = verdict.score;
                series.push((start.elapsed().as_nanos() as u64, best));
                queue.push(candidate);
                log.push(MutationLogEntry {
                    iteration: iterations,
                    chain: chain_label,
                    outcome: IterationOutcome::Improved,
                });
            } else {
                log.push(MutationLogEntry {
                    iteration: iterations,
                    chain: chain_label,
                    outcome: IterationOutcome::Rejected,
                });
            }
        }

        Ok(FuzzResult {
            triggered: false,
            triggering_dataset: None,
            iterations,
            elapsed_ns: start.elapsed().as_nanos() as u64,
            best_score: best,
            score_series: series,
            mutation_log: log,
        })
    }

    /// Majority-of-3 re-validation for runtime symptoms. The confirming
    /// executions are not counted as fuzzing iterations.
    fn confirm(
        &self,
        candidate: &Dataset,
        run: &mut impl FnMut(&Dataset) -> Result<Vec<f64>>,
    ) -> Result<bool> {
        if !self.runtime_metric {
            return Ok(true);
        }
        let mut hits = 1usize;
        for _ in 0..CONFIRM_RUNS {
            let values = run(candidate)?;
            if self.monitor.evaluate(&values)?.triggered {
                hits += 1;
            }
        }
        Ok(hits >= 2)
    }
}

fn udf_runner<'a>(
    pipeline: &'a Pipeline,
    tap: &'a TapPoint,
    metric: &'a MetricKind,
    monitor_stage: usize,
    counters: &'a CustomCounters,
) -> impl FnMut(&Dataset) -> Result<Vec<f64>> + 'a {
    move |dataset| {
        let mut report = MetricsReport::new();
        execute_from(pipeline, tap, dataset, &mut report, counters)?;
        report.extract(metric, monitor_stage)
    }
}

fn program_runner<'a>(
    pipeline: &'a Pipeline,
    metric: &'a MetricKind,
    monitor_stage: usize,
    counters: &'a CustomCounters,
) -> impl FnMut(&Dataset) -> Result<Vec<f64>> + 'a {
    move |dataset| {
        let mut report = MetricsReport::new();
        execute(pipeline, dataset, &mut report, counters)?;
        report.extract(metric, monitor_stage)
    }
}

/// Step 1: fuzz the isolated tap stage, starting from the seed's program
/// prefix.
pub fn fuzz_udf(campaign: &FuzzCampaign, rng: &mut ChaCha8Rng) -> Result<FuzzResult> {
    campaign.validate()?;
    let initial = execute_prefix(&campaign.pipeline, &campaign.seed, &campaign.tap)?;
    let fuzz_loop = FuzzLoop {
        monitor: &campaign.monitor,
        runtime_metric: campaign.metric.is_runtime(),
        mutations: &campaign.udf_mutations,
        config: &campaign.mutation_config,
        budgets: &campaign.budgets,
    };
    fuzz_loop.run(
        initial,
        rng,
        udf_runner(
            &campaign.pipeline,
            &campaign.tap,
            &campaign.metric,
            campaign.monitor_stage,
            &campaign.counters,
        ),
    )
}

/// Step 2: lift a tap dataset back to a program input.
pub fn lift(
    registry: &InverseRegistry,
    inverse_id: &str,
    udf_dataset: &Dataset,
) -> Result<Dataset> {
    registry.apply(inverse_id, udf_dataset)
}

/// Step 3: test the improved seed unmutated, then fuzz the whole program
/// from it with the program mutation set.
pub fn fuzz_program(
    campaign: &FuzzCampaign,
    improved_seed: Dataset,
    rng: &mut ChaCha8Rng,
) -> Result<FuzzResult> {
    if improved_seed.schema() != campaign.pipeline.input_schema() {
        return Err(Error::Schema(format!(
            "improved seed schema {} does not match pipeline input {}",
            improved_seed.schema(),
            campaign.pipeline.input_schema()
        )));
    }
    let fuzz_loop = FuzzLoop {
        monitor: &campaign.monitor,
        runtime_metric: campaign.metric.is_runtime(),
        mutations: &campaign.program_mutations,
        config: &campaign.mutation_config,
        budgets: &campaign.budgets,
    };
    fuzz_loop.run(
        improved_seed,
        rng,
        program_runner(
            &campaign.pipeline,
            &campaign.metric,
            campaign.monitor_stage,
            &campaign.counters,
        ),
    )
}

/// Steps 1-3 composed. Aborts after step 1 if no UDF input triggered
/// within budget.
pub fn run_phased(campaign: &FuzzCampaign, registry: &InverseRegistry) -> Result<PhasedResult> {
    campaign.validate()?;
    let inverse_id = campaign
        .inverse_id
        .as_deref()
        .ok_or_else(|| Error::Config("phased mode requires an inverse id".into()))?;
    // Fail fast on unregistered inverses, before spending the UDF budget.
    registry.get(inverse_id)?;

    let mut rng = ChaCha8Rng::seed_from_u64(campaign.rng_seed);
    let udf = fuzz_udf(campaign, &mut rng)?;
    let Some(udf_dataset) = udf.triggering_dataset.clone() else {
        return Ok(PhasedResult {
            udf,
            lift_elapsed_ns: 0,
            program: None,
        });
    };
    let lift_start = Instant::now();
    let improved_seed = lift(registry, inverse_id, &udf_dataset)?;
    let lift_elapsed_ns = lift_start.elapsed().as_nanos() as u64;
    let program = fuzz_program(campaign, improved_seed, &mut rng)?;
    Ok(PhasedResult {
        udf,
        lift_elapsed_ns,
        program: Some(program),
    })
}

/// The naive baseline: the program-fuzzing loop from the original seed,
/// with string-level program mutations only.
pub fn run_baseline(campaign: &FuzzCampaign) -> Result<FuzzResult> {
    campaign.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(campaign.rng_seed);
    fuzz_program(campaign, campaign.seed.clone(), &mut rng)
}
