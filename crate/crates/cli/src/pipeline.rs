//! Command pipelines: dataset generation, single solves, training,
//! evaluation, and timing benchmarks.

use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use cfpf_core::channel::{drop_network, NetworkConfig, NetworkRealization};
use cfpf_core::dataset::{build_input, split, NormalizationStats, Sample};
use cfpf_core::metrics::{jain, net_se, summarize, EvaluationRecord, Method, Summary};
use cfpf_core::rdn::{self, TrainingSet};
use cfpf_core::seed::mix_seed;
use cfpf_core::solver::{solve_alternating, SolverOptions, SolverResult};

use crate::checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
use crate::config::{echo_config, RunConfig};
use crate::container::{read_dataset, write_dataset, DatasetHeader, ENCODING_DB, VERSION};

/// 17 significant digits: exact round-trip for 64-bit floats.
fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Solver-side aggregates collected during generation.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct GenerationStats {
    pub converged: u64,
    pub nonconverged: u64,
    pub mean_outer_iterations: f64,
    pub objective_min: f64,
    pub objective_max: f64,
    pub objective_mean: f64,
    pub mean_solve_time_s: f64,
}

struct GeneratedSample {
    sample: Sample,
    converged: bool,
    outer_iterations: usize,
    solve_time_s: f64,
}

/// Generates `count` labeled samples, sample `i` seeded with
/// `mix_seed(master_seed, i)`. The output is byte-identical for any worker
/// count because every sample is a pure function of its own seed and the
/// results are assembled in index order.
pub fn generate_samples(
    network: &NetworkConfig,
    solver: &SolverOptions,
    count: u64,
    master_seed: u64,
    jobs: usize,
) -> Result<(Vec<Sample>, GenerationStats)> {
    if count == 0 {
        bail!("sample count must be >= 1");
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .context("building worker pool")?;
    let per_sample: Vec<GeneratedSample> = pool.install(|| {
        (0..count)
            .into_par_iter()
            .map(|i| {
                let seed = mix_seed(master_seed, i);
                let real = drop_network(network, seed)?;
                let t = Instant::now();
                let solved = solve_alternating(&real, solver)?;
                let solve_time_s = t.elapsed().as_secs_f64();
                Ok(GeneratedSample {
                    sample: Sample {
                        input: build_input(&real),
                        label: solved.powers,
                        seed,
                        objective: solved.objective,
                    },
                    converged: solved.converged,
                    outer_iterations: solved.outer_iterations,
                    solve_time_s,
                })
            })
            .collect::<Result<_>>()
    })?;

    let n = per_sample.len() as f64;
    let mut stats = GenerationStats {
        objective_min: f64::INFINITY,
        objective_max: f64::NEG_INFINITY,
        ..GenerationStats::default()
    };
    let mut samples = Vec::with_capacity(per_sample.len());
    for g in per_sample {
        if g.converged {
            stats.converged += 1;
        } else {
            stats.nonconverged += 1;
        }
        stats.mean_outer_iterations += g.outer_iterations as f64 / n;
        stats.objective_min = stats.objective_min.min(g.sample.objective);
        stats.objective_max = stats.objective_max.max(g.sample.objective);
        stats.objective_mean += g.sample.objective / n;
        stats.mean_solve_time_s += g.solve_time_s / n;
        samples.push(g.sample);
    }
    Ok((samples, stats))
}

#[derive(Serialize)]
struct Manifest<'a> {
    dataset_file: &'a str,
    config_sha256: String,
    master_seed: u64,
    count: u64,
    jobs: usize,
    wall_time_s: f64,
    solver: GenerationStats,
}

pub fn cmd_generate(cfg: &RunConfig, count: u64, out_dir: &Path, jobs: usize) -> Result<()> {
    echo_config(cfg, out_dir)?;
    let t = Instant::now();
    let (samples, stats) =
        generate_samples(&cfg.network, &cfg.solver, count, cfg.master_seed, jobs)?;
    let wall = t.elapsed().as_secs_f64();

    let header = DatasetHeader {
        version: VERSION,
        aps: cfg.network.aps as u32,
        users: cfg.network.users as u32,
        pilot_len: cfg.network.pilot_len as u32,
        count,
        encoding: ENCODING_DB,
        master_seed: cfg.master_seed,
    };
    let data_path = out_dir.join("dataset.cfpf");
    write_dataset(&data_path, &header, &samples)?;
    // Validate the write before reporting success.
    let (reread, _) = read_dataset(&data_path)?;
    if reread != header {
        bail!("dataset verification failed after write");
    }

    let manifest = Manifest {
        dataset_file: "dataset.cfpf",
        config_sha256: cfg.hash(),
        master_seed: cfg.master_seed,
        count,
        jobs,
        wall_time_s: wall,
        solver: stats,
    };
    fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    println!(
        "generated {count} samples -> {} ({:.2} s, {}/{} converged, mean outer iters {:.2})",
        data_path.display(),
        wall,
        stats.converged,
        count,
        stats.mean_outer_iterations
    );
    Ok(())
}

#[derive(Serialize)]
struct SolveDump {
    seed: u64,
    converged: bool,
    outer_iterations: usize,
    objective: f64,
    trace: Vec<f64>,
    powers: Vec<f64>,
    rates: Vec<f64>,
    net_rates: Vec<f64>,
    sum_net_se: f64,
    jain: f64,
}

fn net_rates_of(result: &SolverResult, network: &NetworkConfig) -> Vec<f64> {
    result
        .rates
        .iter()
        .map(|&r| net_se(r, network.pilot_len, network.coherence_len))
        .collect()
}

pub fn cmd_solve(cfg: &RunConfig, seed: u64, out_dir: &Path) -> Result<()> {
    echo_config(cfg, out_dir)?;
    let real = drop_network(&cfg.network, seed)?;
    let t = Instant::now();
    let result = solve_alternating(&real, &cfg.solver)?;
    let wall = t.elapsed().as_secs_f64();

    let net_rates = net_rates_of(&result, &cfg.network);
    let dump = SolveDump {
        seed,
        converged: result.converged,
        outer_iterations: result.outer_iterations,
        objective: result.objective,
        trace: result.trace.clone(),
        powers: result.powers.clone(),
        rates: result.rates.clone(),
        sum_net_se: net_rates.iter().sum(),
        jain: jain(&net_rates)?,
        net_rates,
    };
    fs::write(
        out_dir.join("solve.json"),
        serde_json::to_string_pretty(&dump)?,
    )?;

    println!(
        "seed {seed}: {} outer iterations, converged = {}",
        dump.outer_iterations, dump.converged
    );
    println!("objective trace: {:?}", dump.trace);
    println!("powers:          {:?}", dump.powers);
    println!("net rates:       {:?}", dump.net_rates);
    println!(
        "sum net-SE = {:.4} bits/s/Hz, Jain = {:.5}",
        dump.sum_net_se, dump.jain
    );
    println!("wall time  = {:.1} µs", wall * 1e6);
    Ok(())
}

/// Reads a dataset and checks it against the run configuration.
fn load_dataset_checked(cfg: &RunConfig, data: &Path) -> Result<(DatasetHeader, Vec<Sample>)> {
    let (header, samples) = read_dataset(data)?;
    if header.aps as usize != cfg.network.aps
        || header.users as usize != cfg.network.users
        || header.pilot_len as usize != cfg.network.pilot_len
    {
        bail!(
            "dataset geometry ({} APs, {} users, {} pilots) does not match the config",
            header.aps,
            header.users,
            header.pilot_len
        );
    }
    Ok((header, samples))
}

/// Re-drops the realization behind a sample and confirms the stored inputs
/// came from this configuration.
fn realization_for(network: &NetworkConfig, sample: &Sample) -> Result<NetworkRealization> {
    let real = drop_network(network, sample.seed)?;
    let rebuilt = build_input(&real);
    if rebuilt != sample.input {
        bail!(
            "sample (seed {}) does not reproduce under this network config; \
             the dataset was generated with different parameters",
            sample.seed
        );
    }
    Ok(real)
}

pub fn cmd_train(cfg: &RunConfig, data: &Path, out_dir: &Path) -> Result<()> {
    echo_config(cfg, out_dir)?;
    let (header, samples) = load_dataset_checked(cfg, data)?;
    let (train_idx, val_idx, _) = split(
        header.count as usize,
        cfg.split.train,
        cfg.split.val,
        cfg.split.test,
    )?;

    let train_inputs: Vec<&cfpf_core::Mat> = train_idx.clone().map(|i| &samples[i].input).collect();
    let stats = NormalizationStats::fit(&train_inputs, cfg.network.pilot_len)?;

    let make_set = |range: std::ops::Range<usize>| TrainingSet {
        inputs: range
            .clone()
            .map(|i| stats.apply(&samples[i].input))
            .collect(),
        labels: range.map(|i| samples[i].label.clone()).collect(),
    };
    let train_set = make_set(train_idx);
    let val_set = make_set(val_idx);

    let rdn_cfg = cfg.rdn_config();
    let t = Instant::now();
    let outcome = rdn::train(&train_set, &val_set, &rdn_cfg, &cfg.train, cfg.master_seed)?;
    let wall = t.elapsed().as_secs_f64();

    let ckpt_path = out_dir.join("checkpoint.cfnn");
    write_checkpoint(
        &ckpt_path,
        &Checkpoint {
            params: outcome.params,
            stats,
        },
    )?;
    read_checkpoint(&ckpt_path)?;

    let mut csv = String::from("epoch,lr,train_rmse,val_rmse\n");
    for e in &outcome.curve {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            e.epoch,
            fmt_f64(e.lr),
            fmt_f64(e.train_rmse),
            fmt_f64(e.val_rmse)
        ));
    }
    fs::write(out_dir.join("curve.csv"), csv)?;

    let last = outcome.curve.last().expect("at least one epoch");
    let best = outcome
        .curve
        .iter()
        .map(|e| e.val_rmse)
        .fold(f64::INFINITY, f64::min);
    println!(
        "trained {} epochs in {:.1} s: final train RMSE {:.4}, best val RMSE {:.4}",
        outcome.curve.len(),
        wall,
        last.train_rmse,
        best
    );
    println!("checkpoint -> {}", ckpt_path.display());
    Ok(())
}

/// Evaluation of one test sample under both methods.
fn evaluate_sample(
    network: &NetworkConfig,
    solver: &SolverOptions,
    ckpt: &Checkpoint,
    sample: &Sample,
) -> Result<(EvaluationRecord, EvaluationRecord)> {
    let real = realization_for(network, sample)?;

    let t = Instant::now();
    let solved = solve_alternating(&real, solver)?;
    let solver_time = t.elapsed().as_secs_f64();
    let solver_net = net_rates_of(&solved, network);
    let solver_record = EvaluationRecord {
        method: Method::Solver,
        sum_net_se: solver_net.iter().sum(),
        jain: jain(&solver_net)?,
        net_rates: solver_net,
        wall_time_s: solver_time,
    };

    let t = Instant::now();
    let refined = rdn::predict_and_refine(&ckpt.params, &ckpt.stats, &real, network)?;
    let network_time = t.elapsed().as_secs_f64();
    let network_record = EvaluationRecord {
        method: Method::Network,
        sum_net_se: refined.net_rates.iter().sum(),
        jain: jain(&refined.net_rates)?,
        net_rates: refined.net_rates,
        wall_time_s: network_time,
    };
    Ok((solver_record, network_record))
}

/// Runs both methods over the test split and summarizes.
pub fn evaluate_test_split(
    cfg: &RunConfig,
    data: &Path,
    ckpt_path: &Path,
    bins: usize,
) -> Result<(Summary, usize)> {
    let (header, samples) = load_dataset_checked(cfg, data)?;
    let ckpt = read_checkpoint(ckpt_path)?;
    if ckpt.params.cfg != cfg.rdn_config() {
        bail!("checkpoint architecture/geometry does not match the config");
    }
    let (_, _, test_idx) = split(
        header.count as usize,
        cfg.split.train,
        cfg.split.val,
        cfg.split.test,
    )?;
    if test_idx.is_empty() {
        bail!("test split is empty");
    }
    let mut records = Vec::with_capacity(2 * test_idx.len());
    for i in test_idx.clone() {
        let (s, n) = evaluate_sample(&cfg.network, &cfg.solver, &ckpt, &samples[i])?;
        records.push(s);
        records.push(n);
    }
    Ok((summarize(&records, bins)?, test_idx.len()))
}

#[derive(Serialize)]
struct EvalDoc<'a> {
    config_sha256: String,
    test_samples: usize,
    solver: &'a cfpf_core::metrics::MethodStats,
    network: &'a cfpf_core::metrics::MethodStats,
    ratios: &'a cfpf_core::metrics::Ratios,
}

pub fn cmd_eval(cfg: &RunConfig, data: &Path, ckpt_path: &Path, out_dir: &Path) -> Result<()> {
    echo_config(cfg, out_dir)?;
    let (summary, test_samples) = evaluate_test_split(cfg, data, ckpt_path, 30)?;

    let doc = EvalDoc {
        config_sha256: cfg.hash(),
        test_samples,
        solver: &summary.solver,
        network: &summary.network,
        ratios: &summary.ratios,
    };
    fs::write(
        out_dir.join("summary.json"),
        serde_json::to_string_pretty(&doc)?,
    )?;

    let mut cdf = String::from("method,sum_net_se,quantile\n");
    for (tag, points) in [
        ("solver", &summary.cdf_solver),
        ("network", &summary.cdf_network),
    ] {
        for p in points {
            cdf.push_str(&format!(
                "{tag},{},{}\n",
                fmt_f64(p.value),
                fmt_f64(p.quantile)
            ));
        }
    }
    fs::write(out_dir.join("cdf.csv"), cdf)?;

    let mut hist = String::from("bin_left,bin_right,solver_count,network_count\n");
    let h = &summary.histogram;
    for b in 0..h.solver_counts.len() {
        hist.push_str(&format!(
            "{},{},{},{}\n",
            fmt_f64(h.edges[b]),
            fmt_f64(h.edges[b + 1]),
            h.solver_counts[b],
            h.network_counts[b]
        ));
    }
    fs::write(out_dir.join("histogram.csv"), hist)?;

    println!("evaluated {test_samples} test samples");
    println!("                      solver      network     ratio");
    println!(
        "mean sum net-SE   {:>10.4}  {:>10.4}  {:>7.2}%",
        summary.solver.mean_sum_net_se,
        summary.network.mean_sum_net_se,
        summary.ratios.sum_net_se * 100.0
    );
    println!(
        "mean Jain index   {:>10.5}  {:>10.5}  {:>7.2}%",
        summary.solver.mean_jain,
        summary.network.mean_jain,
        summary.ratios.jain * 100.0
    );
    println!(
        "mean time (s)     {:>10.6}  {:>10.6}  {:>7.2}%",
        summary.solver.mean_wall_time_s,
        summary.network.mean_wall_time_s,
        summary.ratios.wall_time * 100.0
    );
    Ok(())
}

#[derive(Serialize)]
struct BenchDoc {
    config_sha256: String,
    samples: usize,
    solver_mean_s: f64,
    solver_median_s: f64,
    network_mean_s: f64,
    network_median_s: f64,
    /// network/solver; below 1 means the network path is faster.
    ratio_mean: f64,
    ratio_median: f64,
    speedup_mean: f64,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

pub fn cmd_bench(
    cfg: &RunConfig,
    data: &Path,
    ckpt_path: &Path,
    out_dir: &Path,
    max_samples: Option<usize>,
) -> Result<()> {
    echo_config(cfg, out_dir)?;
    let (header, samples) = load_dataset_checked(cfg, data)?;
    let ckpt = read_checkpoint(ckpt_path)?;
    if ckpt.params.cfg != cfg.rdn_config() {
        bail!("checkpoint architecture/geometry does not match the config");
    }
    let (_, _, test_idx) = split(
        header.count as usize,
        cfg.split.train,
        cfg.split.val,
        cfg.split.test,
    )?;
    if test_idx.is_empty() {
        bail!("test split is empty");
    }
    let take = max_samples.unwrap_or(usize::MAX).min(test_idx.len());

    let mut solver_times = Vec::with_capacity(take);
    let mut network_times = Vec::with_capacity(take);
    for i in test_idx.clone().take(take) {
        let real = realization_for(&cfg.network, &samples[i])?;
        let t = Instant::now();
        let solved = solve_alternating(&real, &cfg.solver)?;
        solver_times.push(t.elapsed().as_secs_f64());
        std::hint::black_box(&solved);
        let t = Instant::now();
        let refined = rdn::predict_and_refine(&ckpt.params, &ckpt.stats, &real, &cfg.network)?;
        network_times.push(t.elapsed().as_secs_f64());
        std::hint::black_box(&refined);
    }
    solver_times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    network_times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let solver_mean = solver_times.iter().sum::<f64>() / take as f64;
    let network_mean = network_times.iter().sum::<f64>() / take as f64;
    let doc = BenchDoc {
        config_sha256: cfg.hash(),
        samples: take,
        solver_mean_s: solver_mean,
        solver_median_s: median(&solver_times),
        network_mean_s: network_mean,
        network_median_s: median(&network_times),
        ratio_mean: network_mean / solver_mean,
        ratio_median: median(&network_times) / median(&solver_times),
        speedup_mean: solver_mean / network_mean,
    };
    fs::write(
        out_dir.join("bench.json"),
        serde_json::to_string_pretty(&doc)?,
    )?;

    println!("benchmarked {take} instances");
    println!(
        "solver    mean {:>12.1} µs   median {:>12.1} µs",
        doc.solver_mean_s * 1e6,
        doc.solver_median_s * 1e6
    );
    println!(
        "network   mean {:>12.1} µs   median {:>12.1} µs",
        doc.network_mean_s * 1e6,
        doc.network_median_s * 1e6
    );
    println!(
        "ratio network/solver = {:.4} (speedup {:.1}x)",
        doc.ratio_mean, doc.speedup_mean
    );
    Ok(())
}
