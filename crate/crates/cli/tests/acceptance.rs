//! Acceptance gate. Runs as a plain binary (no libtest harness) so each
//! criterion prints one PASS/FAIL line in the ordinary `cargo test` output.
//! Exits nonzero if any criterion fails.

use std::fs;
use std::path::Path;
use std::time::Instant;

use ilora_cli::checkpoint::{Checkpoint, Role};
use ilora_cli::commands::{
    adapter_name, checkpoint_path, cmd_run, cmd_sweep_lambda, RunDir, CONFIG_ECHO, METRICS,
    RESULTS_MATRIX,
};
use ilora_cli::config::ExperimentConfig;
use ilora_core::bench::{make_stream, nearest_centroid_accuracy, StreamSpec};
use ilora_core::connectivity::{interpolate, linear_cka, uniform_grid};
use ilora_core::metrics::{acc_t, bwt_t, ResultMatrix};
use ilora_core::model::{AdaptedNet, Arch, BackboneParams, Batch, Distill, ParamVector};
use ilora_core::numerics::{dot, finite_diff_grad, matmul, relative_error, Matrix, Rng};
use ilora_core::optim::{agem_project, ema_update, GradRef};
use ilora_core::strategies::{run_sequence_observed, StrategyConfig, StrategyKind};

// Pinned tolerances.
const METRIC_TOL: f64 = 5e-4;
const GRAD_REL_TOL: f64 = 1e-5;
const GRAD_REL_FLOOR: f64 = 1e-6;
const FD_STEP: f64 = 1e-5;
const AGEM_TOL: f64 = 1e-12;
const CKA_SELF_TOL: f64 = 1e-10;
const CKA_INVARIANCE_TOL: f64 = 1e-8;
const CKA_INDEPENDENT_MAX: f64 = 0.1;
const FORGETTING_BWT_MAX: f64 = -0.05;
const SEPARABILITY_MIN: f64 = 0.9;
const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn scratch(name: &str) -> tempfile::TempDir {
    tempfile::Builder::new()
        .prefix(name)
        .tempdir()
        .expect("temp dir")
}

// Final-row averages and BWT of the sequential, replay, and fast/slow
// interpolation result matrices over eight domains.
fn reference_tables() -> Vec<(&'static str, Vec<Vec<f64>>, f64, f64)> {
    vec![
        (
            "sequential",
            vec![
                vec![0.418],
                vec![0.218, 0.603],
                vec![0.194, 0.494, 0.247],
                vec![0.32, 0.262, 0.148, 0.368],
                vec![0.256, 0.204, 0.057, 0.244, 0.333],
                vec![0.002, 0.012, 0.087, 0.158, 0.148, 0.414],
                vec![0.326, 0.246, 0.083, 0.292, 0.16, 0.396, 0.29],
                vec![0.164, 0.258, 0.093, 0.096, 0.123, 0.39, 0.26, 0.296],
            ],
            -0.184,
            0.210,
        ),
        (
            "replay",
            vec![
                vec![0.408],
                vec![0.268, 0.645],
                vec![0.294, 0.373, 0.252],
                vec![0.322, 0.25, 0.122, 0.48],
                vec![0.044, 0.135, 0.048, 0.34, 0.37],
                vec![0.112, 0.01, 0.121, 0.154, 0.185, 0.411],
                vec![0.092, 0.28, 0.111, 0.232, 0.185, 0.392, 0.306],
                vec![0.21, 0.292, 0.123, 0.238, 0.173, 0.389, 0.262, 0.268],
            ],
            -0.169,
            0.244,
        ),
        (
            "fast/slow",
            vec![
                vec![0.444],
                vec![0.432, 0.645],
                vec![0.184, 0.522, 0.213],
                vec![0.354, 0.51, 0.192, 0.542],
                vec![0.358, 0.438, 0.147, 0.448, 0.296],
                vec![0.336, 0.081, 0.144, 0.442, 0.222, 0.414],
                vec![0.43, 0.611, 0.213, 0.496, 0.235, 0.411, 0.27],
                vec![0.43, 0.601, 0.216, 0.486, 0.222, 0.402, 0.276, 0.272],
            ],
            -0.027,
            0.363,
        ),
    ]
}

fn c1_metric_oracle() -> Outcome {
    let mut parts = Vec::new();
    for (name, rows, bwt, acc) in reference_tables() {
        let r = ResultMatrix::from_rows(&rows).map_err(|e| e.to_string())?;
        let b = bwt_t(&r, 8).map_err(|e| e.to_string())?;
        let a = acc_t(&r, 8).map_err(|e| e.to_string())?;
        check(
            (b - bwt).abs() <= METRIC_TOL && (a - acc).abs() <= METRIC_TOL,
            format!("{name}: BWT {b:.5} vs {bwt}, Acc {a:.5} vs {acc}"),
        )?;
        parts.push(format!("{name} BWT {b:.5} Acc {a:.5}"));
    }
    Ok(parts.join("; "))
}

fn c2_gradient_suite() -> Outcome {
    let arch = Arch::default();
    let mut rng = Rng::new(2024);
    let net =
        AdaptedNet::new(arch, BackboneParams::init(&arch, &mut rng)).map_err(|e| e.to_string())?;
    let gammas = [0.0, 0.5, 2.0];
    let configs = 24;
    let mut worst: f64 = 0.0;
    for k in 0..configs {
        let gamma = gammas[k % 3];
        let theta = ParamVector::new(rng.gaussian_vec(arch.adapter_len(), 0.0, 0.1));
        let n = 3 + rng.below(6);
        let x = rng.gaussian_matrix(n, arch.input_dim, 0.0, 1.0);
        let y = (0..n).map(|_| rng.below(arch.classes)).collect();
        let batch = Batch::new(x, y).map_err(|e| e.to_string())?;
        let m = 2 + rng.below(5);
        let inputs = rng.gaussian_matrix(m, arch.input_dim, 0.0, 1.0);
        let targets = rng.gaussian_matrix(m, arch.embed, 0.0, 1.0);
        let distill = (gamma > 0.0).then_some(Distill {
            inputs: &inputs,
            targets: &targets,
        });
        let (_, grad) = net
            .loss_and_grad(&theta, &batch, gamma, distill)
            .map_err(|e| e.to_string())?;
        let fd = finite_diff_grad(
            |t| {
                net.loss_and_grad(&ParamVector::new(t.to_vec()), &batch, gamma, distill)
                    .map(|(l, _)| l.total)
                    .unwrap_or(f64::NAN)
            },
            theta.as_slice(),
            FD_STEP,
        )
        .map_err(|e| e.to_string())?;
        for (a, b) in grad.iter().zip(&fd) {
            worst = worst.max(relative_error(*a, *b, GRAD_REL_FLOOR));
        }
    }
    check(
        worst <= GRAD_REL_TOL,
        format!("max relative error {worst:.3e}"),
    )?;
    Ok(format!(
        "{configs} configurations, max relative error {worst:.3e} (floor {GRAD_REL_FLOOR:e})"
    ))
}

fn c3_identities() -> Outcome {
    let mut rng = Rng::new(3);
    let a = ParamVector::new(rng.gaussian_vec(200, 0.0, 1.0));
    let b = ParamVector::new(rng.gaussian_vec(200, 0.0, 1.0));
    let bits = |p: &ParamVector| p.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    let e = |r: ilora_core::Result<ParamVector>| r.map_err(|e| e.to_string());
    check(
        bits(&e(interpolate(&a, &b, 0.0))?) == bits(&a),
        "interpolate(λ=0) != θ_a",
    )?;
    check(
        bits(&e(interpolate(&a, &b, 1.0))?) == bits(&b),
        "interpolate(λ=1) != θ_b",
    )?;
    check(
        bits(&e(ema_update(&a, &b, 0.0))?) == bits(&b),
        "ema(λ=0) != θ_w",
    )?;
    check(
        bits(&e(ema_update(&a, &b, 1.0))?) == bits(&a),
        "ema(λ=1) != θ_l",
    )?;
    let one = e(ema_update(
        &ParamVector::new(vec![1.0]),
        &ParamVector::new(vec![2.0]),
        0.9,
    ))?;
    check(
        one.as_slice()[0] == 1.1,
        format!("ema scalar gave {:e}", one.as_slice()[0]),
    )?;
    Ok("interpolation endpoints and EMA degenerate cases bit-exact; EMA(1, 2, 0.9) = 1.1".into())
}

fn reduction_fixture() -> Result<(AdaptedNet, ilora_core::bench::TaskStream), String> {
    let spec = StreamSpec {
        tasks: 3,
        n_train: 256,
        n_eval: 128,
        ..StreamSpec::default()
    };
    let stream = make_stream(21, &spec).map_err(|e| e.to_string())?;
    let arch = Arch::default();
    let backbone = ilora_core::bench::pretrain_backbone(
        &stream.anchor.train,
        &arch,
        &ilora_core::bench::PretrainSpec::default(),
        21,
    )
    .map_err(|e| e.to_string())?;
    Ok((
        AdaptedNet::new(arch, backbone).map_err(|e| e.to_string())?,
        stream,
    ))
}

fn trajectory(
    net: &AdaptedNet,
    stream: &ilora_core::bench::TaskStream,
    config: &StrategyConfig,
) -> Result<Vec<Vec<u64>>, String> {
    let mut out = Vec::new();
    run_sequence_observed(net, config, &stream.pairs(), 21, &mut |e| {
        out.push(e.theta_w.iter().map(|v| v.to_bits()).collect());
    })
    .map_err(|e| e.to_string())?;
    Ok(out)
}

fn c4_reductions() -> Outcome {
    let (net, stream) = reduction_fixture()?;
    let base = |kind| StrategyConfig::for_kind(kind);
    let pairs = [
        (
            "ER(rho=0) = SEQ",
            base(StrategyKind::Seq),
            StrategyConfig {
                rho: 0.0,
                ..base(StrategyKind::Er)
            },
        ),
        (
            "EWC(lambda=0) = SEQ",
            base(StrategyKind::Seq),
            StrategyConfig {
                lambda_ewc: 0.0,
                ..base(StrategyKind::Ewc)
            },
        ),
        (
            "ILORA(gamma=0, lambda=0, a=1) = ER",
            base(StrategyKind::Er),
            StrategyConfig {
                gamma: 0.0,
                lambda_ema: 0.0,
                update_frequency: 1,
                ..base(StrategyKind::Ilora)
            },
        ),
    ];
    let mut steps = 0;
    for (name, lhs, rhs) in pairs {
        let a = trajectory(&net, &stream, &lhs)?;
        let b = trajectory(&net, &stream, &rhs)?;
        check(a.len() >= 200, format!("{name}: only {} steps", a.len()))?;
        check(a == b, format!("{name}: trajectories differ"))?;
        steps = a.len();
    }
    Ok(format!("3 reductions bit-exact over {steps} steps each"))
}

fn c5_agem() -> Outcome {
    let mut rng = Rng::new(5);
    let mut worst = f64::INFINITY;
    let mut passthrough = 0;
    for _ in 0..1000 {
        let n = 1 + rng.below(64);
        let g = ParamVector::new(rng.gaussian_vec(n, 0.0, 1.0));
        let r = ParamVector::new(rng.gaussian_vec(n, 0.0, 1.0));
        let p = agem_project(&g, &GradRef { g_ref: r.clone() }).map_err(|e| e.to_string())?;
        let ip = dot(p.as_slice(), r.as_slice());
        worst = worst.min(ip);
        if dot(g.as_slice(), r.as_slice()) >= 0.0 {
            check(p == g, "non-conflicting gradient was modified")?;
            passthrough += 1;
        }
    }
    check(
        worst >= -AGEM_TOL,
        format!("min post-projection inner product {worst:e}"),
    )?;
    Ok(format!(
        "1000 pairs, min inner product {worst:.3e}, {passthrough} pass-through unchanged"
    ))
}

fn c6_cka() -> Outcome {
    let mut rng = Rng::new(6);
    let e = |r: ilora_core::Result<f64>| r.map_err(|e| e.to_string());
    let x = rng.gaussian_matrix(200, 8, 0.0, 1.0);
    let self_sim = e(linear_cka(&x, &x))?;
    check(
        (self_sim - 1.0).abs() <= CKA_SELF_TOL,
        format!("self-similarity {self_sim}"),
    )?;

    // orthogonal Q from Gram-Schmidt on a Gaussian matrix
    let g = rng.gaussian_matrix(8, 8, 0.0, 1.0);
    let mut q = Matrix::zeros(8, 8);
    for j in 0..8 {
        let mut v: Vec<f64> = (0..8).map(|i| g.get(i, j)).collect();
        for k in 0..j {
            let d: f64 = (0..8).map(|i| v[i] * q.get(i, k)).sum();
            for (i, vi) in v.iter_mut().enumerate() {
                *vi -= d * q.get(i, k);
            }
        }
        let nrm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        for (i, vi) in v.iter().enumerate() {
            q.set(i, j, vi / nrm);
        }
    }
    let rotated = matmul(&x, &q).map_err(|e| e.to_string())?;
    let orth = e(linear_cka(&x, &rotated))?;
    let scaled = e(linear_cka(&x, &x.scale(-7.25)))?;
    check(
        (orth - 1.0).abs() <= CKA_INVARIANCE_TOL,
        format!("orthogonal invariance {orth}"),
    )?;
    check(
        (scaled - 1.0).abs() <= CKA_INVARIANCE_TOL,
        format!("scaling invariance {scaled}"),
    )?;

    let a = rng.gaussian_matrix(500, 16, 0.0, 1.0);
    let b = rng.gaussian_matrix(500, 16, 0.0, 1.0);
    let indep = e(linear_cka(&a, &b))?;
    check(
        indep < CKA_INDEPENDENT_MAX,
        format!("independent features {indep}"),
    )?;
    Ok(format!(
        "self {self_sim:.12}, orthogonal {orth:.12}, scaled {scaled:.12}, independent n=500 {indep:.4}"
    ))
}

fn run_config(kind: StrategyKind, seed: u64, lambda: Option<f64>) -> ExperimentConfig {
    let mut c = ExperimentConfig {
        seed,
        ..ExperimentConfig::default()
    };
    c.strategy.kind = kind;
    if let Some(l) = lambda {
        c.strategy.lambda_ema = l;
    }
    c
}

fn final_bwt(config: &ExperimentConfig, dir: &Path) -> Result<(f64, usize), String> {
    let out = cmd_run(config, dir).map_err(|e| e.to_string())?;
    Ok((
        *out.metrics.bwt.last().ok_or("no BWT")?,
        out.metrics.total_steps,
    ))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn c7_forgetting() -> Outcome {
    let tmp = scratch("c7");
    let mut bwts = Vec::new();
    let mut worst_sep: f64 = 1.0;
    for seed in SEEDS {
        let config = run_config(StrategyKind::Seq, seed, None);
        let stream = make_stream(seed, &config.stream).map_err(|e| e.to_string())?;
        for task in &stream.tasks {
            worst_sep = worst_sep.min(nearest_centroid_accuracy(
                &task.train,
                &task.eval,
                config.stream.classes,
            ));
        }
        bwts.push(final_bwt(&config, &tmp.path().join(seed.to_string()))?.0);
    }
    let med = median(bwts.clone());
    let listed: Vec<String> = bwts.iter().map(|b| format!("{b:.4}")).collect();
    check(
        worst_sep >= SEPARABILITY_MIN,
        format!("a task is not separable: nearest-centroid {worst_sep:.3}"),
    )?;
    check(
        med <= FORGETTING_BWT_MAX,
        format!("median SEQ BWT_5 {med:.4} [{}]", listed.join(", ")),
    )?;
    Ok(format!(
        "median SEQ BWT_5 {med:.4} [{}]; min nearest-centroid accuracy {worst_sep:.3}",
        listed.join(", ")
    ))
}

fn c8_directional() -> Outcome {
    let tmp = scratch("c8");
    let mut er = Vec::new();
    let mut er_steps = Vec::new();
    for seed in SEEDS {
        let (b, s) = final_bwt(
            &run_config(StrategyKind::Er, seed, None),
            &tmp.path().join(format!("er{seed}")),
        )?;
        er.push(b);
        er_steps.push(s);
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut means = Vec::new();
    for lambda in [0.5, 0.9, 0.99] {
        let mut bwts = Vec::new();
        for (i, seed) in SEEDS.into_iter().enumerate() {
            let dir = tmp.path().join(format!("il{lambda}_{seed}"));
            let (b, s) = final_bwt(&run_config(StrategyKind::Ilora, seed, Some(lambda)), &dir)?;
            check(
                s == er_steps[i],
                format!("step counts differ: ILORA {s} vs ER {}", er_steps[i]),
            )?;
            bwts.push(b);
        }
        let mean = bwts.iter().sum::<f64>() / bwts.len() as f64;
        means.push(format!("λ={lambda}: {mean:.4}"));
        if best
            .as_ref()
            .is_none_or(|(_, b)| mean > b.iter().sum::<f64>() / b.len() as f64)
        {
            best = Some((lambda, bwts));
        }
    }
    let (lambda, il) = best.expect("three lambdas swept");
    let wins = il.iter().zip(&er).filter(|(a, b)| a > b).count();
    let per_seed: Vec<String> = SEEDS
        .iter()
        .zip(il.iter().zip(&er))
        .map(|(s, (a, b))| format!("seed {s}: {a:.4} vs {b:.4}"))
        .collect();
    let detail = format!(
        "best λ={lambda} ({}); ILORA vs ER BWT_5 per seed [{}]; wins {wins}/5",
        means.join(", "),
        per_seed.join("; ")
    );
    check(wins >= 4, detail.clone())?;
    Ok(detail)
}

fn c9_mode_connectivity() -> Outcome {
    let tmp = scratch("c9");
    let grid = uniform_grid(21).map_err(|e| e.to_string())?;
    let mut peaks = 0;
    let mut transitions = 0;
    for seed in SEEDS {
        let dir = tmp.path().join(seed.to_string());
        let outcome =
            cmd_run(&run_config(StrategyKind::Seq, seed, None), &dir).map_err(|e| e.to_string())?;
        let run = RunDir::open(&dir).map_err(|e| e.to_string())?;
        let r = &outcome.record.result_matrix;
        for t in 1..run.tasks() {
            let sweep = cmd_sweep_lambda(&dir, t, &grid, None).map_err(|e| e.to_string())?;
            // independent evaluations of the stored checkpoints
            let theta_t = run.adapters(t, Role::Working).map_err(|e| e.to_string())?;
            let theta_t1 = run
                .adapters(t + 1, Role::Working)
                .map_err(|e| e.to_string())?;
            let eval = |theta: &ParamVector, j: usize| {
                run.net
                    .predict_accuracy(theta, &run.stream.tasks[j - 1].eval)
                    .unwrap()
            };
            let ap0 = (1..=t).map(|j| eval(&theta_t, j)).sum::<f64>() / t as f64;
            let ap1 = (1..=t).map(|j| eval(&theta_t1, j)).sum::<f64>() / t as f64;
            let (an0, an1) = (eval(&theta_t, t + 1), eval(&theta_t1, t + 1));
            let last = grid.len() - 1;
            check(
                sweep.ap[0] == ap0 && sweep.an[0] == an0 && sweep.ap[last] == ap1 && sweep.an[last] == an1,
                format!("seed {seed} transition {t}: sweep endpoints differ from checkpoint evaluations"),
            )?;
            check(
                sweep.ap[0] == acc_t(r, t).unwrap()
                    && sweep.an[last] == r.get(t + 1, t + 1).unwrap(),
                format!(
                    "seed {seed} transition {t}: sweep endpoints differ from the result matrix"
                ),
            )?;
            transitions += 1;
            if !sweep.interior_peaks().is_empty() {
                peaks += 1;
            }
        }
    }
    Ok(format!(
        "endpoints bit-exact on {transitions} transitions; interior λ beats both endpoints on Aall in {peaks}/{transitions} ({:.0}%)",
        100.0 * peaks as f64 / transitions as f64
    ))
}

fn c10_persistence() -> Outcome {
    let tmp = scratch("c10");
    let first = tmp.path().join("first");
    let config = run_config(StrategyKind::Ilora, 10, None);
    let outcome = cmd_run(&config, &first).map_err(|e| e.to_string())?;
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    let mut checked = 0;
    for (t, theta) in outcome.record.checkpoints.iter().enumerate() {
        let c = Checkpoint::load(&checkpoint_path(
            &first,
            &adapter_name(t + 1, Role::Working),
        ))
        .map_err(|e| e.to_string())?;
        check(
            bits(&c.params) == bits(theta.as_slice()),
            format!("working checkpoint {} differs", t + 1),
        )?;
        checked += 1;
    }
    for (t, theta) in outcome.record.slow_checkpoints.iter().enumerate() {
        let c = Checkpoint::load(&checkpoint_path(
            &first,
            &adapter_name(t + 1, Role::LongTerm),
        ))
        .map_err(|e| e.to_string())?;
        check(
            bits(&c.params) == bits(theta.as_slice()),
            format!("long-term checkpoint {} differs", t + 1),
        )?;
        checked += 1;
    }
    let ckpt = Checkpoint {
        task: 9,
        seed: u64::MAX,
        role: Role::Backbone,
        params: vec![f64::MIN_POSITIVE, -0.0, 1.0 / 3.0, f64::MAX],
    };
    let path = tmp.path().join("rt.ckpt");
    ckpt.save(&path).map_err(|e| e.to_string())?;
    check(
        Checkpoint::load(&path).map_err(|e| e.to_string())? == ckpt,
        "synthetic checkpoint round trip",
    )?;

    let echo = ExperimentConfig::load(&first.join(CONFIG_ECHO)).map_err(|e| e.to_string())?;
    let second = tmp.path().join("second");
    cmd_run(&echo, &second).map_err(|e| e.to_string())?;
    for file in [RESULTS_MATRIX, METRICS, CONFIG_ECHO] {
        let a = fs::read(first.join(file)).map_err(|e| e.to_string())?;
        let b = fs::read(second.join(file)).map_err(|e| e.to_string())?;
        check(
            a == b,
            format!("{file} differs after re-running from the echo"),
        )?;
    }
    Ok(format!(
        "{checked} checkpoints reload bit-exact; re-run from {CONFIG_ECHO} reproduces {RESULTS_MATRIX} byte-identically"
    ))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("C1 metric oracle", c1_metric_oracle),
        ("C2 gradient suite", c2_gradient_suite),
        ("C3 interpolation/EMA identities", c3_identities),
        ("C4 reduction equalities", c4_reductions),
        ("C5 A-GEM geometry", c5_agem),
        ("C6 CKA properties", c6_cka),
        ("C7 desk-scale forgetting", c7_forgetting),
        ("C8 directional I-LoRA vs ER", c8_directional),
        ("C9 mode-connectivity sweep", c9_mode_connectivity),
        ("C10 persistence", c10_persistence),
    ];
    println!("\nrunning {} acceptance criteria", criteria.len());
    let mut failed = 0;
    for (name, f) in criteria {
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("[PASS] {name} ({secs:.2}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {name} ({secs:.2}s): {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed\n", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
