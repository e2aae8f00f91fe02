//! Acceptance suite: one test per release criterion, each printing a
//! PASS line on success (run with `--nocapture` to see them).
//!
//! The desk-scale scenario used throughout is 20 APs, 8 users, 4 pilots on
//! a 1 km wrap-around square, with a growth-16 / depth-3 power predictor.

#![allow(clippy::needless_range_loop)]

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use cfpf_core::channel::{drop_network, path_loss_db, NetworkConfig};
use cfpf_core::dataset::NormalizationStats;
use cfpf_core::metrics::{jain, net_se};
use cfpf_core::rdn::{
    self, backward, count_parameters, forward, init_parameters, Activation, OutputActivation,
    ParameterTensors, RdnConfig, TrainConfig, TrainingSet,
};
use cfpf_core::seed::mix_seed;
use cfpf_core::solver::{
    build_quadratic_forms, compute_filters, pf_gradient, pf_objective, sinr_coefficients,
    sinr_of_filter, solve_alternating, SolverOptions,
};
use cfpf_tools::checkpoint::read_checkpoint;
use cfpf_tools::config::load_config;
use cfpf_tools::pipeline::{
    cmd_eval, cmd_generate, cmd_train, evaluate_test_split, generate_samples,
};

fn desk_network() -> NetworkConfig {
    NetworkConfig {
        aps: 20,
        users: 8,
        pilot_len: 4,
        ..NetworkConfig::default()
    }
}

fn desk_config_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.json")
}

#[test]
fn solver_monotonicity_over_100_instances() {
    let net = desk_network();
    let opts = SolverOptions::default();
    let start = Instant::now();
    for seed in 0..100u64 {
        let real = drop_network(&net, seed).unwrap();
        let result = solve_alternating(&real, &opts).unwrap();
        assert!(
            result.outer_iterations <= 100,
            "seed {seed}: {} outer iterations",
            result.outer_iterations
        );
        for w in result.trace.windows(2) {
            assert!(
                w[1] + 1e-9 >= w[0],
                "seed {seed}: trace decreased {} -> {}",
                w[0],
                w[1]
            );
        }
    }
    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs_f64() < 60.0,
        "runtime budget exceeded: {elapsed:?}"
    );
    println!("acceptance: solver monotonicity (100 instances, {elapsed:?}): PASS");
}

#[test]
fn full_scale_instances_converge() {
    let net = NetworkConfig::default();
    for seed in 0..10u64 {
        let real = drop_network(&net, seed).unwrap();
        let result = solve_alternating(&real, &SolverOptions::default()).unwrap();
        assert!(result.converged, "seed {seed} exhausted max_outer");
    }
    println!("acceptance: full-scale instances (80 APs, 20 users) converge: PASS");
}

#[test]
fn eigen_optimality_against_random_filters() {
    let net = desk_network();
    let mut rng = ChaCha8Rng::seed_from_u64(0xE16E);
    for seed in 0..50u64 {
        let real = drop_network(&net, 1000 + seed).unwrap();
        let forms = build_quadratic_forms(&real).unwrap();
        let powers: Vec<f64> = (0..net.users)
            .map(|_| 1e-6 + rng.random::<f64>() * (1.0 - 1e-6))
            .collect();
        let filters = compute_filters(&powers, &forms, real.rho).unwrap();
        for k in 0..net.users {
            let best = sinr_of_filter(filters.col(k), k, &powers, &forms, real.rho);
            for _ in 0..10_000 {
                let mut u: Vec<f64> = (0..net.aps)
                    .map(|_| rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
                u.iter_mut().for_each(|x| *x /= norm);
                let s = sinr_of_filter(&u, k, &powers, &forms, real.rho);
                assert!(
                    best + 1e-9 >= s,
                    "instance {seed} user {k}: random filter {s} beat closed form {best}"
                );
            }
        }
    }
    println!("acceptance: eigen-optimality oracle (50 instances x 10^4 vectors): PASS");
}

#[test]
fn gradient_oracle_power_objective() {
    let net = desk_network();
    let mut rng = ChaCha8Rng::seed_from_u64(0x6AD);
    let mut checked = 0;
    for seed in 0..10u64 {
        let real = drop_network(&net, 2000 + seed).unwrap();
        let forms = build_quadratic_forms(&real).unwrap();
        let p_full = vec![1.0; net.users];
        let filters = compute_filters(&p_full, &forms, real.rho).unwrap();
        let coeffs = sinr_coefficients(&filters, &forms, real.rho);
        for _ in 0..10 {
            let p: Vec<f64> = (0..net.users)
                .map(|_| 0.05 + 0.9 * rng.random::<f64>())
                .collect();
            let grad = pf_gradient(&p, &coeffs);
            let h = 1e-6;
            for j in 0..net.users {
                let mut hi = p.clone();
                hi[j] += h;
                let mut lo = p.clone();
                lo[j] -= h;
                let fd = (pf_objective(&hi, &coeffs) - pf_objective(&lo, &coeffs)) / (2.0 * h);
                let scale = grad[j].abs().max(fd.abs()).max(1e-12);
                assert!(
                    (grad[j] - fd).abs() / scale < 1e-5,
                    "seed {seed} component {j}: analytic {} vs fd {fd}",
                    grad[j]
                );
            }
            checked += 1;
        }
    }
    assert_eq!(checked, 100);
    println!("acceptance: power-objective gradient vs finite differences (100 points): PASS");
}

#[test]
fn gradient_oracle_network_backward() {
    let cfg = RdnConfig {
        growth: 4,
        dense_layers: 2,
        aps: 6,
        users: 4,
        pilot_len: 2,
        inner_activation: Activation::Tanh,
        output_activation: OutputActivation::Sigmoid,
    };
    let params = init_parameters(&cfg, 0xBACC);
    let mut rng = ChaCha8Rng::seed_from_u64(0xF00D);
    let input = cfpf_core::Mat::from_vec(
        4,
        7,
        (0..28).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect(),
    );
    let target: Vec<f64> = (0..4).map(|_| rng.random::<f64>()).collect();

    let (_, cache) = forward(&params, &input).unwrap();
    let analytic = backward(&params, &input, &cache, &target);
    let loss = |p: &ParameterTensors| {
        let (out, _) = forward(p, &input).unwrap();
        out.iter()
            .zip(&target)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
    };
    let h = 1e-5;
    for i in 0..params.len() {
        let mut hi = params.clone();
        hi.as_mut_slice()[i] += h;
        let mut lo = params.clone();
        lo.as_mut_slice()[i] -= h;
        let fd = (loss(&hi) - loss(&lo)) / (2.0 * h);
        let denom = analytic[i].abs().max(fd.abs());
        // Dead kernel columns have exactly zero analytic gradient and pure
        // round-off in the finite difference; compare absolutely there.
        let err = if denom < 1e-8 {
            (analytic[i] - fd).abs()
        } else {
            (analytic[i] - fd).abs() / denom
        };
        assert!(
            err < 1e-4,
            "parameter {i}: analytic {} vs fd {fd}",
            analytic[i]
        );
    }
    println!(
        "acceptance: network backward vs finite differences ({} parameters): PASS",
        params.len()
    );
}

#[test]
fn parameter_accounting_matches_hand_values() {
    let shape = |growth, dense_layers, aps| RdnConfig {
        growth,
        dense_layers,
        aps,
        users: 4,
        pilot_len: 2,
        inner_activation: Activation::Tanh,
        output_activation: OutputActivation::Sigmoid,
    };
    assert_eq!(count_parameters(&shape(16, 3, 20)).total, 15_409);
    assert_eq!(count_parameters(&shape(32, 4, 80)).total, 100_353);
    assert_eq!(count_parameters(&shape(1, 1, 1)).total, 26);
    for (g, l, m) in [
        (1, 1, 1),
        (2, 3, 4),
        (3, 1, 7),
        (4, 4, 9),
        (5, 2, 16),
        (7, 3, 24),
        (8, 5, 33),
        (16, 3, 20),
        (32, 4, 80),
        (6, 2, 50),
    ] {
        let cfg = shape(g, l, m);
        assert_eq!(
            count_parameters(&cfg).total,
            ParameterTensors::zeros(cfg).len(),
            "allocation mismatch at ({g},{l},{m})"
        );
    }
    println!("acceptance: parameter accounting (15409 / 100353 / 26 + allocations): PASS");
}

#[test]
fn metric_identities() {
    assert!((jain(&[3.7; 6]).unwrap() - 1.0).abs() < 1e-15);
    assert!((jain(&[0.0, 0.0, 5.1, 0.0]).unwrap() - 0.25).abs() < 1e-15);
    let prefactor = net_se(1.0, 10, 200);
    assert!((prefactor - 0.475).abs() < 1e-15);
    println!("acceptance: metric identities (Jain endpoints, net-SE prefactor 0.475): PASS");
}

#[test]
fn path_loss_continuity_and_estimation_bound() {
    let net = desk_network();
    let eps = 1e-9;
    for d in [net.d0_km, net.d1_km] {
        let below = path_loss_db(d - eps, &net);
        let above = path_loss_db(d + eps, &net);
        assert!(
            (below - above).abs() < 1e-6,
            "path loss jumps at {d} km: {below} vs {above}"
        );
    }
    let small = NetworkConfig {
        aps: 10,
        users: 5,
        pilot_len: 2,
        ..NetworkConfig::default()
    };
    for seed in 0..1000u64 {
        let real = drop_network(&small, seed).unwrap();
        for (x, b) in real.xi.as_slice().iter().zip(real.beta.as_slice()) {
            assert!(*x > 0.0 && x <= b, "xi {x} exceeds beta {b} at seed {seed}");
        }
    }
    println!("acceptance: path-loss continuity (1e-6 dB) and xi <= beta over 1000 drops: PASS");
}

fn run_cfpf(args: &[&str]) {
    let status = Command::new(env!("CARGO_BIN_EXE_cfpf"))
        .args(args)
        .env_remove("CFPF_SEED")
        .stdout(std::process::Stdio::null())
        .status()
        .expect("spawning cfpf");
    assert!(status.success(), "cfpf {args:?} failed");
}

#[test]
fn determinism_of_generate_solve_train() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("tiny.json");
    std::fs::write(
        &cfg_path,
        r#"{
            "network": {"aps": 6, "users": 3, "pilot_len": 2},
            "model": {"growth": 4, "dense_layers": 2},
            "train": {"epochs": 2, "batch_size": 4},
            "split": {"train": 6, "val": 2, "test": 2},
            "dataset": {"count": 10},
            "master_seed": 7
        }"#,
    )
    .unwrap();
    let cfg = cfg_path.to_str().unwrap();
    let path_of = |sub: &str, file: &str| dir.path().join(sub).join(file);
    let bytes = |sub: &str, file: &str| std::fs::read(path_of(sub, file)).unwrap();

    // Generation: reruns and worker counts may not change a byte.
    for (out, jobs) in [("g1", "1"), ("g2", "4"), ("g3", "1")] {
        run_cfpf(&[
            "generate",
            "--config",
            cfg,
            "--out",
            path_of(out, "").to_str().unwrap(),
            "--jobs",
            jobs,
        ]);
    }
    assert_eq!(bytes("g1", "dataset.cfpf"), bytes("g2", "dataset.cfpf"));
    assert_eq!(bytes("g1", "dataset.cfpf"), bytes("g3", "dataset.cfpf"));

    // Solving: identical JSON across reruns.
    for out in ["s1", "s2"] {
        run_cfpf(&[
            "solve",
            "--config",
            cfg,
            "--seed",
            "3",
            "--out",
            path_of(out, "").to_str().unwrap(),
        ]);
    }
    assert_eq!(bytes("s1", "solve.json"), bytes("s2", "solve.json"));

    // Training: identical checkpoint bytes and learning curves.
    let data = path_of("g1", "dataset.cfpf");
    for out in ["t1", "t2"] {
        run_cfpf(&[
            "train",
            "--config",
            cfg,
            "--data",
            data.to_str().unwrap(),
            "--out",
            path_of(out, "").to_str().unwrap(),
        ]);
    }
    assert_eq!(
        bytes("t1", "checkpoint.cfnn"),
        bytes("t2", "checkpoint.cfnn")
    );

    // CFPF_SEED overrides the config's master seed: solving without --seed
    // under CFPF_SEED=3 must reproduce the --seed 3 dump.
    let status = Command::new(env!("CARGO_BIN_EXE_cfpf"))
        .args([
            "solve",
            "--config",
            cfg,
            "--out",
            path_of("s3", "").to_str().unwrap(),
        ])
        .env("CFPF_SEED", "3")
        .stdout(std::process::Stdio::null())
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(bytes("s1", "solve.json"), bytes("s3", "solve.json"));

    // A zero sample count is a usage error.
    let status = Command::new(env!("CARGO_BIN_EXE_cfpf"))
        .args([
            "generate",
            "--config",
            cfg,
            "--count",
            "0",
            "--out",
            path_of("g0", "").to_str().unwrap(),
        ])
        .env_remove("CFPF_SEED")
        .stderr(std::process::Stdio::null())
        .status()
        .unwrap();
    assert!(!status.success(), "--count 0 must be rejected");
    assert_eq!(bytes("t1", "curve.csv"), bytes("t2", "curve.csv"));
    println!("acceptance: byte-determinism of generate (any parallelism), solve, train: PASS");
}

#[test]
fn overfit_probe_memorizes_ten_samples() {
    let net = desk_network();
    let (samples, _) = generate_samples(&net, &SolverOptions::default(), 10, 0xF17, 0).unwrap();
    let inputs: Vec<&cfpf_core::Mat> = samples.iter().map(|s| &s.input).collect();
    let stats = NormalizationStats::fit(&inputs, net.pilot_len).unwrap();
    let set = TrainingSet {
        inputs: samples.iter().map(|s| stats.apply(&s.input)).collect(),
        labels: samples.iter().map(|s| s.label.clone()).collect(),
    };
    let cfg = RdnConfig {
        growth: 16,
        dense_layers: 3,
        aps: net.aps,
        users: net.users,
        pilot_len: net.pilot_len,
        inner_activation: Activation::Tanh,
        output_activation: OutputActivation::Sigmoid,
    };
    let tcfg = TrainConfig {
        epochs: 2000,
        batch_size: 128,
        learning_rate: 1e-2,
        lr_drop_period: 0,
        ..TrainConfig::default()
    };
    let out = rdn::train(&set, &set, &cfg, &tcfg, 0xF17).unwrap();
    let final_rmse = out.curve.last().unwrap().train_rmse;
    assert!(
        final_rmse < 1e-2,
        "overfit probe stalled at train RMSE {final_rmse}"
    );
    println!("acceptance: overfit probe (10 samples -> RMSE {final_rmse:.2e} < 1e-2): PASS");
}

#[test]
fn desk_scale_quality_end_to_end() {
    let cfg = load_config(&desk_config_path()).unwrap();
    assert_eq!(
        (cfg.network.aps, cfg.network.users, cfg.network.pilot_len),
        (20, 8, 4)
    );
    assert_eq!((cfg.model.growth, cfg.model.dense_layers), (16, 3));
    assert_eq!(cfg.train.epochs, 40);

    let dir = tempfile::tempdir().unwrap();
    let gen_out = dir.path().join("gen");
    cmd_generate(&cfg, cfg.dataset.count, &gen_out, 0).unwrap();
    let data = gen_out.join("dataset.cfpf");

    let train_out = dir.path().join("train");
    cmd_train(&cfg, &data, &train_out).unwrap();
    let ckpt = train_out.join("checkpoint.cfnn");

    let (summary, test_samples) = evaluate_test_split(&cfg, &data, &ckpt, 30).unwrap();
    assert_eq!(test_samples, 200);
    println!(
        "desk-scale quality: sum net-SE ratio {:.4}, Jain ratio {:.4} \
         (solver {:.4} bits/s/Hz, Jain {:.5})",
        summary.ratios.sum_net_se,
        summary.ratios.jain,
        summary.solver.mean_sum_net_se,
        summary.solver.mean_jain
    );
    assert!(
        summary.ratios.sum_net_se >= 0.95,
        "sum net-SE ratio {} below 0.95",
        summary.ratios.sum_net_se
    );
    assert!(
        summary.ratios.jain >= 0.95,
        "Jain ratio {} below 0.95",
        summary.ratios.jain
    );

    // Full eval command for artifact coverage.
    let eval_out = dir.path().join("eval");
    cmd_eval(&cfg, &data, &ckpt, &eval_out).unwrap();
    assert!(eval_out.join("summary.json").exists());
    println!(
        "acceptance: desk-scale quality (net-SE ratio {:.2}%, Jain ratio {:.2}%, both >= 95%): PASS",
        summary.ratios.sum_net_se * 100.0,
        summary.ratios.jain * 100.0
    );
}

#[test]
fn desk_scale_speed_inference_vs_solver() {
    let cfg = load_config(&desk_config_path()).unwrap();
    let net = &cfg.network;
    let rdn_cfg = cfg.rdn_config();

    // Timing does not depend on the trained weights, so an initialized
    // model with statistics from a small sample keeps this test fast.
    let (samples, _) = generate_samples(net, &cfg.solver, 50, cfg.master_seed, 0).unwrap();
    let inputs: Vec<&cfpf_core::Mat> = samples.iter().map(|s| &s.input).collect();
    let stats = NormalizationStats::fit(&inputs, net.pilot_len).unwrap();
    let params = init_parameters(&rdn_cfg, cfg.master_seed);

    let reals: Vec<_> = (0..100u64)
        .map(|i| drop_network(net, mix_seed(0xBE7C, i)).unwrap())
        .collect();

    // Warm up, then measure each path over the same instances.
    for real in reals.iter().take(5) {
        std::hint::black_box(solve_alternating(real, &cfg.solver).unwrap());
        std::hint::black_box(rdn::predict_and_refine(&params, &stats, real, net).unwrap());
    }
    let t = Instant::now();
    for real in &reals {
        std::hint::black_box(solve_alternating(real, &cfg.solver).unwrap());
    }
    let solver_per_instance = t.elapsed().as_secs_f64() / reals.len() as f64;
    let t = Instant::now();
    for real in &reals {
        std::hint::black_box(rdn::predict_and_refine(&params, &stats, real, net).unwrap());
    }
    let network_per_instance = t.elapsed().as_secs_f64() / reals.len() as f64;

    let speedup = solver_per_instance / network_per_instance;
    println!(
        "desk-scale speed: solver {:.1} µs/instance, inference+refinement {:.1} µs/instance, \
         speedup {speedup:.1}x",
        solver_per_instance * 1e6,
        network_per_instance * 1e6
    );
    // The network path must beat the solver outright on every scale.
    assert!(
        network_per_instance < solver_per_instance,
        "network path is not faster than the solver"
    );
    assert!(
        speedup >= 20.0,
        "inference+refinement speedup {speedup:.1}x is below the required 20x \
         (solver {:.1} µs, network {:.1} µs per instance)",
        solver_per_instance * 1e6,
        network_per_instance * 1e6
    );
    println!("acceptance: desk-scale speedup >= 20x: PASS");
}

/// Full-scale reference run (80 APs, 20 users, 12k samples). Long-running;
/// enable with `cargo test -p cfpf --release --test acceptance -- --ignored`.
#[test]
#[ignore]
fn full_scale_reference_run() {
    let cfg = load_config(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/full.json"))
        .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let gen_out = dir.path().join("gen");
    let t = Instant::now();
    cmd_generate(&cfg, cfg.dataset.count, &gen_out, 0).unwrap();
    println!("full-scale generation: {:?}", t.elapsed());
    let data = gen_out.join("dataset.cfpf");

    let train_out = dir.path().join("train");
    let t = Instant::now();
    cmd_train(&cfg, &data, &train_out).unwrap();
    println!("full-scale training: {:?}", t.elapsed());
    let ckpt_path = train_out.join("checkpoint.cfnn");
    read_checkpoint(&ckpt_path).unwrap();

    let (summary, test_samples) = evaluate_test_split(&cfg, &data, &ckpt_path, 30).unwrap();
    assert_eq!(test_samples, 1000);
    println!(
        "full-scale reference: mean sum net-SE solver {:.4} / network {:.4} bits/s/Hz \
         (ratio {:.4}), Jain solver {:.5} / network {:.5} (ratio {:.4}), \
         time ratio {:.4}",
        summary.solver.mean_sum_net_se,
        summary.network.mean_sum_net_se,
        summary.ratios.sum_net_se,
        summary.solver.mean_jain,
        summary.network.mean_jain,
        summary.ratios.jain,
        summary.ratios.wall_time,
    );
    assert!(summary.ratios.sum_net_se >= 0.97);
    assert!(summary.ratios.jain >= 0.96);
    println!("acceptance (optional): full-scale ratios (>= 97% / >= 96%): PASS");
}
