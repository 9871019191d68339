//! Scratch harness for calibrating the campaign constants.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use skewfuzz::benchmarks::{
    build_benchmark, build_collatz, collatz_length, gen_collatz_seed, gen_deptgpas,
    gen_stock_synthetic, gen_wordcount_synthetic, DeptGpasParams,
};
use skewfuzz::dataflow::{execute_from, execute_prefix};
use skewfuzz::fuzzer::{
    fuzz_udf, run_baseline, run_phased, Budgets, FuzzCampaign, Mode,
};
use skewfuzz::inverse::InverseRegistry;
use skewfuzz::metrics::MetricsReport;
use skewfuzz::mutation::derive_mutations;
use skewfuzz::value::{Dataset, Schema, Value};
use std::time::Duration;

fn campaign(work_scale: u64, n_shuffle: usize, rng_seed: u64, max_iters: u64) -> FuzzCampaign {
    let spec = build_collatz(work_scale, n_shuffle);
    let udf_mutations = derive_mutations(
        &spec.pipeline.stages()[spec.tap.stage_id].input_schema,
        spec.skew_category,
        &spec.mutation_config,
        spec.tap.keys_unique,
    )
    .unwrap();
    let program_mutations = derive_mutations(
        &Schema::Str,
        spec.skew_category,
        &skewfuzz::mutation::MutationConfig::default(),
        false,
    )
    .unwrap();
    FuzzCampaign {
        pipeline: spec.pipeline,
        tap: spec.tap,
        monitor: spec.monitor,
        metric: spec.metric,
        monitor_stage: spec.monitor_stage,
        udf_mutations,
        program_mutations,
        mutation_config: spec.mutation_config,
        seed: gen_collatz_seed(),
        inverse_id: Some(spec.inverse_id.to_string()),
        counters: spec.counters,
        budgets: Budgets {
            max_iterations: max_iters,
            max_wall: Duration::from_secs(120),
        },
        rng_seed,
        mode: Mode::Phased,
    }
}

fn max_key_length(d: &Dataset) -> u32 {
    d.iter_records()
        .map(|r| match r {
            Value::Tuple(parts) => match &parts[0] {
                Value::Int(k) if *k >= 1 => collatz_length(*k).unwrap(),
                _ => 0,
            },
            _ => 0,
        })
        .max()
        .unwrap_or(0)
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let mode = args.get(1).map(|s| s.as_str()).unwrap_or("seed");

    match mode {
        // Seed score stability: how does the unmutated seed score under
        // IQROutlier across repeated runs?
        "seed" => {
            let runs: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(30);
            for &(ws, ns) in &[(4u64, 8usize), (8, 8), (8, 6), (16, 8), (32, 8)] {
                let c = campaign(ws, ns, 0, 0);
                let tapped = execute_prefix(&c.pipeline, &c.seed, &c.tap).unwrap();
                let mut scores = Vec::new();
                for _ in 0..runs {
                    let mut report = MetricsReport::new();
                    execute_from(&c.pipeline, &c.tap, &tapped, &mut report, &c.counters).unwrap();
                    let values = report.extract(&c.metric, c.monitor_stage).unwrap();
                    scores.push(c.monitor.evaluate(&values).unwrap().score);
                }
                scores.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let over50 = scores.iter().filter(|&&s| s >= 50.0).count();
                let over100 = scores.iter().filter(|&&s| s >= 100.0).count();
                println!(
                    "ws={ws:3} ns={ns:2} seed scores over {runs} runs: med={:8.2} p90={:8.2} max={:8.2} >=50: {over50} >=100: {over100}",
                    scores[runs / 2],
                    scores[runs * 9 / 10],
                    scores[runs - 1],
                );
            }
        }
        // Score for specific replaced keys, to find the trigger boundary.
        "keys" => {
            let ws: u64 = args[2].parse().unwrap();
            let ns: usize = args[3].parse().unwrap();
            let c = campaign(ws, ns, 0, 0);
            let tapped = execute_prefix(&c.pipeline, &c.seed, &c.tap).unwrap();
            for key in [7i64, 9, 25, 27, 97, 338, 703, 474680340] {
                // Replace key "1" group with the probe key.
                let parts: Vec<Vec<Value>> = tapped
                    .partitions()
                    .iter()
                    .map(|p| {
                        p.iter()
                            .map(|r| {
                                let Value::Tuple(kv) = r else { unreachable!() };
                                if kv[0] == Value::Int(1) {
                                    Value::Tuple(vec![Value::Int(key), kv[1].clone()])
                                } else {
                                    r.clone()
                                }
                            })
                            .collect()
                    })
                    .collect();
                let probe = Dataset::new(tapped.schema().clone(), parts).unwrap();
                let mut trig = 0;
                let mut scores = Vec::new();
                let mut max_rt = 0.0f64;
                for _ in 0..5 {
                    let mut report = MetricsReport::new();
                    execute_from(&c.pipeline, &c.tap, &probe, &mut report, &c.counters).unwrap();
                    let values = report.extract(&c.metric, c.monitor_stage).unwrap();
                    max_rt = values.iter().cloned().fold(max_rt, f64::max);
                    let v = c.monitor.evaluate(&values).unwrap();
                    scores.push(v.score);
                    if v.triggered {
                        trig += 1;
                    }
                }
                scores.sort_by(|a, b| a.partial_cmp(b).unwrap());
                println!(
                    "key={key:10} L={:4} -> scores med={:9.1} trig {}/5 max_task={:.2}ms",
                    collatz_length(key).unwrap(),
                    scores[2],
                    trig,
                    max_rt / 1e6,
                );
            }
        }
        // Phased trajectory for a range of rng seeds.
        "phased" => {
            let ws: u64 = args[2].parse().unwrap();
            let ns: usize = args[3].parse().unwrap();
            for rng_seed in 0..args.get(4).map(|s| s.parse().unwrap()).unwrap_or(12u64) {
                let c = campaign(ws, ns, rng_seed, 2000);
                let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
                let started = std::time::Instant::now();
                let r = fuzz_udf(&c, &mut rng).unwrap();
                let (max_l, max_task_ms) = match &r.triggering_dataset {
                    Some(d) => {
                        let mut report = MetricsReport::new();
                        execute_from(&c.pipeline, &c.tap, d, &mut report, &c.counters).unwrap();
                        let values = report.extract(&c.metric, c.monitor_stage).unwrap();
                        (
                            max_key_length(d),
                            values.iter().cloned().fold(0.0f64, f64::max) / 1e6,
                        )
                    }
                    None => (0, 0.0),
                };
                println!(
                    "rng={rng_seed:3} triggered={} iters={:4} maxL={max_l:4} max_task={max_task_ms:8.2}ms best={:9.1} wall={:?}",
                    r.triggered, r.iterations, r.best_score, started.elapsed()
                );
            }
        }
        // Baseline iterations-to-trigger for a range of rng seeds.
        "baseline" => {
            let ws: u64 = args[2].parse().unwrap();
            let ns: usize = args[3].parse().unwrap();
            let iters: u64 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(20_000);
            for rng_seed in 0..args.get(4).map(|s| s.parse().unwrap()).unwrap_or(6u64) {
                let mut c = campaign(ws, ns, rng_seed, iters);
                c.mode = Mode::Baseline;
                let started = std::time::Instant::now();
                let r = run_baseline(&c).unwrap();
                println!(
                    "rng={rng_seed:3} baseline triggered={} iters={:6} best={:9.1} wall={:?}",
                    r.triggered, r.iterations, r.best_score, started.elapsed()
                );
            }
        }
        // Phased + baseline for the count-metric benchmarks.
        "bench" => {
            let name = args[2].as_str();
            let iters: u64 = args[3].parse().unwrap();
            let seeds: u64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(4);
            let registry = InverseRegistry::with_builtins();
            for rng_seed in 0..seeds {
                let spec = build_benchmark(name).unwrap();
                let mut data_rng = ChaCha8Rng::seed_from_u64(1000 + rng_seed);
                let seed_data = match name {
                    "collatz" => gen_collatz_seed(),
                    "wordcount" => gen_wordcount_synthetic(20, 1200, &mut data_rng),
                    "deptgpas" => gen_deptgpas(
                        DeptGpasParams {
                            records_per_partition: 250,
                            ..DeptGpasParams::default()
                        },
                        &mut data_rng,
                    ),
                    "stock" => gen_stock_synthetic(8, 50, 20, &mut data_rng),
                    _ => panic!(),
                };
                let udf_mutations = derive_mutations(
                    &spec.pipeline.stages()[spec.tap.stage_id].input_schema,
                    spec.skew_category,
                    &spec.mutation_config,
                    spec.tap.keys_unique,
                )
                .unwrap();
                let program_mutations = derive_mutations(
                    &Schema::Str,
                    spec.skew_category,
                    &skewfuzz::mutation::MutationConfig::default(),
                    false,
                )
                .unwrap();
                let campaign = FuzzCampaign {
                    pipeline: spec.pipeline,
                    tap: spec.tap,
                    monitor: spec.monitor,
                    metric: spec.metric.clone(),
                    monitor_stage: spec.monitor_stage,
                    udf_mutations,
                    program_mutations,
                    mutation_config: spec.mutation_config,
                    seed: seed_data,
                    inverse_id: Some(spec.inverse_id.to_string()),
                    counters: spec.counters,
                    budgets: Budgets {
                        max_iterations: iters,
                        max_wall: Duration::from_secs(300),
                    },
                    rng_seed,
                    mode: Mode::Phased,
                };
                let t0 = std::time::Instant::now();
                let phased = run_phased(&campaign, &registry).unwrap();
                let phased_wall = t0.elapsed();
                let mut baseline_campaign = campaign.clone();
                baseline_campaign.mode = Mode::Baseline;
                let t0 = std::time::Instant::now();
                let base = run_baseline(&baseline_campaign).unwrap();
                println!(
                    "{name} rng={rng_seed}: phased trig={} udf_its={} prog_its={:?} best={:.2} wall={phased_wall:?} | baseline trig={} its={} best={:.3} wall={:?}",
                    phased.triggered(),
                    phased.udf.iterations,
                    phased.program.as_ref().map(|p| p.iterations),
                    phased.udf.best_score,
                    base.triggered,
                    base.iterations,
                    base.best_score,
                    t0.elapsed(),
                );
            }
        }
        // RQ3-style weight sweep: median iterations-to-trigger must fall as
        // the M13/M14 weights rise.
        "sweep" => {
            let base_seed: u64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(100);
            let registry = InverseRegistry::with_builtins();
            let mut medians = Vec::new();
            for weight in [0.5f64, 1.0, 5.0] {
                let mut iters = Vec::new();
                for rep in 0..5u64 {
                    let spec = build_benchmark("deptgpas").unwrap();
                    let mut data_rng = ChaCha8Rng::seed_from_u64(1000);
                    let seed_data = gen_deptgpas(
                        DeptGpasParams {
                            records_per_partition: 250,
                            ..DeptGpasParams::default()
                        },
                        &mut data_rng,
                    );
                    let mut config = spec.mutation_config.clone();
                    config.weight_overrides.insert("M13".into(), weight);
                    config.weight_overrides.insert("M14".into(), weight);
                    let spec = skewfuzz::benchmarks::BenchmarkSpec {
                        mutation_config: config,
                        ..spec
                    };
                    let campaign = spec
                        .campaign(
                            seed_data,
                            Budgets {
                                max_iterations: 20_000,
                                max_wall: Duration::from_secs(300),
                            },
                            base_seed + rep,
                            Mode::Phased,
                        )
                        .unwrap();
                    let phased = run_phased(&campaign, &registry).unwrap();
                    iters.push(phased.total_iterations());
                }
                iters.sort();
                println!("weight={weight}: iters={iters:?} median={}", iters[2]);
                medians.push(iters[2]);
            }
            println!(
                "ordering 5.0 < 1.0 < 0.5: {}",
                medians[2] < medians[1] && medians[1] < medians[0]
            );
        }
        other => panic!("unknown mode {other}"),
    }
}
