use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use ilora_core::bench::{make_stream, pretrain_backbone, TaskStream};
use ilora_core::connectivity::{
    landscape_grid, linear_cka, sweep_lambda, weight_distance, LambdaSweep,
};
use ilora_core::metrics::{acc_t, bwt_t, general_retention};
use ilora_core::model::{AdaptedNet, BackboneParams, Batch, ParamVector};
use ilora_core::strategies::{run_sequence, Deploy, RunRecord, StrategyKind};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, Role};
use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

pub const CONFIG_ECHO: &str = "config_echo.json";
pub const RESULTS_MATRIX: &str = "results_matrix.csv";
pub const METRICS: &str = "metrics.json";
pub const CHECKPOINT_DIR: &str = "checkpoints";

/// Seventeen significant digits; parsing the text back gives the same bits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn checkpoint_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(CHECKPOINT_DIR).join(format!("{name}.ckpt"))
}

/// File stem of the adapter checkpoint after task `t` (`t = 0` is the
/// initialization, shared by both memories).
pub fn adapter_name(t: usize, role: Role) -> String {
    match (t, role) {
        (0, _) => "init".into(),
        (_, Role::LongTerm) => format!("task{t}_longterm"),
        _ => format!("task{t}_working"),
    }
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let io = |e: csv::Error| CliError::writing(path, e.into());
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(row).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::writing(path, e))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::writing(path, e))
}

fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| CliError::writing(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// `acc[t-1]` is the mean accuracy after task `t`.
    pub acc: Vec<f64>,
    /// `bwt[t-2]` is the backward transfer after task `t`, from `t = 2`.
    pub bwt: Vec<f64>,
    /// Anchor-task accuracy of the final deployed adapters minus that of the
    /// initial adapters.
    pub general_retention: f64,
    pub total_steps: usize,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub record: RunRecord,
    pub metrics: Metrics,
}

fn build_net(config: &ExperimentConfig, stream: &TaskStream) -> CliResult<AdaptedNet> {
    let arch = config.arch();
    let backbone = pretrain_backbone(&stream.anchor.train, &arch, &config.pretrain, config.seed)?;
    Ok(AdaptedNet::new(arch, backbone)?)
}

/// Pretrains the backbone, runs the configured strategy over the stream,
/// and writes every artifact into `out`.
pub fn cmd_run(config: &ExperimentConfig, out: &Path) -> CliResult<RunOutcome> {
    config.validate()?;
    let stream = make_stream(config.seed, &config.stream)?;
    let net = build_net(config, &stream)?;
    let strategy = config.strategy();
    let record = run_sequence(&net, &strategy, &stream.pairs(), config.seed)?;
    let finite = record
        .checkpoints
        .iter()
        .chain(&record.slow_checkpoints)
        .all(ParamVector::is_finite);
    if !finite {
        return Err(CliError::Numeric(
            "training produced non-finite parameters".into(),
        ));
    }

    let r = &record.result_matrix;
    let tasks = r.tasks();
    let metrics = Metrics {
        acc: (1..=tasks).map(|t| acc_t(r, t)).collect::<Result<_, _>>()?,
        bwt: (2..=tasks).map(|t| bwt_t(r, t)).collect::<Result<_, _>>()?,
        general_retention: general_retention(
            &net,
            &record.init,
            record.final_deployed(),
            &stream.anchor.eval,
        )?,
        total_steps: record.total_steps,
    };

    create_dir(&out.join(CHECKPOINT_DIR))?;
    write_text(&out.join(CONFIG_ECHO), &config.echo().to_pretty_json())?;
    let rows: Vec<Vec<String>> = r
        .entries()
        .into_iter()
        .map(|(t, j, a)| vec![t.to_string(), j.to_string(), fmt_f64(a)])
        .collect();
    write_csv(
        &out.join(RESULTS_MATRIX),
        &["after_task", "eval_task", "accuracy"],
        &rows,
    )?;
    let mut json = serde_json::to_string_pretty(&metrics).expect("metrics serialize");
    json.push('\n');
    write_text(&out.join(METRICS), &json)?;

    let seed = config.seed;
    let save = |name: String, task: usize, role: Role, params: Vec<f64>| {
        Checkpoint {
            task: task as u32,
            seed,
            role,
            params,
        }
        .save(&checkpoint_path(out, &name))
    };
    save(
        "backbone".into(),
        0,
        Role::Backbone,
        net.backbone().flatten(),
    )?;
    save(
        adapter_name(0, Role::Working),
        0,
        Role::Working,
        record.init.as_slice().to_vec(),
    )?;
    for (i, theta) in record.checkpoints.iter().enumerate() {
        save(
            adapter_name(i + 1, Role::Working),
            i + 1,
            Role::Working,
            theta.as_slice().to_vec(),
        )?;
    }
    for (i, theta) in record.slow_checkpoints.iter().enumerate() {
        save(
            adapter_name(i + 1, Role::LongTerm),
            i + 1,
            Role::LongTerm,
            theta.as_slice().to_vec(),
        )?;
    }

    Ok(RunOutcome {
        dir: out.to_path_buf(),
        record,
        metrics,
    })
}

/// Parses `a..b` (exclusive) or `a..=b` (inclusive).
pub fn parse_seed_range(spec: &str) -> CliResult<Range<u64>> {
    let bad = || {
        CliError::Config(format!(
            "seed range must look like a..b or a..=b, got {spec:?}"
        ))
    };
    let (lo, hi, inclusive) = if let Some((a, b)) = spec.split_once("..=") {
        (a, b, true)
    } else if let Some((a, b)) = spec.split_once("..") {
        (a, b, false)
    } else {
        return Err(bad());
    };
    let lo: u64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: u64 = hi.trim().parse().map_err(|_| bad())?;
    let end = if inclusive {
        hi.checked_add(1).ok_or_else(bad)?
    } else {
        hi
    };
    if end <= lo {
        return Err(CliError::Config(format!("seed range {spec:?} is empty")));
    }
    Ok(lo..end)
}

/// One run per seed, concurrently, each in `out/seed_{s}`.
pub fn cmd_run_seeds(
    config: &ExperimentConfig,
    out: &Path,
    seeds: Range<u64>,
) -> CliResult<Vec<RunOutcome>> {
    config.validate()?;
    let results: Vec<CliResult<RunOutcome>> = std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .map(|seed| {
                let cfg = ExperimentConfig {
                    seed,
                    ..config.clone()
                };
                let dir = out.join(format!("seed_{seed}"));
                scope.spawn(move || cmd_run(&cfg, &dir))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("run thread panicked"))
            .collect()
    });
    results.into_iter().collect()
}

/// A finished run directory, with the stream and network rebuilt from the
/// echoed config and the stored backbone.
pub struct RunDir {
    pub dir: PathBuf,
    pub config: ExperimentConfig,
    pub stream: TaskStream,
    pub net: AdaptedNet,
}

impl RunDir {
    pub fn open(dir: &Path) -> CliResult<Self> {
        let echo = dir.join(CONFIG_ECHO);
        let text = fs::read_to_string(&echo).map_err(|e| CliError::reading(&echo, e))?;
        let config = ExperimentConfig::from_json(&text).map_err(|e| CliError::InvalidArtifact {
            path: echo.clone(),
            reason: e.to_string(),
        })?;
        let stream = make_stream(config.seed, &config.stream)?;
        let arch = config.arch();
        let ckpt = Checkpoint::load_expecting(
            &checkpoint_path(dir, "backbone"),
            Role::Backbone,
            arch.backbone_len(),
        )?;
        let backbone = BackboneParams::unflatten(&arch, &ckpt.params)?;
        let net = AdaptedNet::new(arch, backbone)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            config,
            stream,
            net,
        })
    }

    pub fn tasks(&self) -> usize {
        self.stream.len()
    }

    pub fn deployed_role(&self) -> Role {
        match self.config.strategy().deploy() {
            Deploy::LongTerm => Role::LongTerm,
            Deploy::Working => Role::Working,
        }
    }

    pub fn adapters(&self, t: usize, role: Role) -> CliResult<ParamVector> {
        let path = checkpoint_path(&self.dir, &adapter_name(t, role));
        let role = if t == 0 { Role::Working } else { role };
        let ckpt = Checkpoint::load_expecting(&path, role, self.net.arch().adapter_len())?;
        Ok(ParamVector::new(ckpt.params))
    }

    fn eval(&self, t: usize) -> &Batch {
        &self.stream.tasks[t - 1].eval
    }

    fn check_transition(&self, t: usize) -> CliResult<()> {
        if t == 0 || t >= self.tasks() {
            return Err(CliError::Config(format!(
                "transition must lie in 1..{} for a {}-task run, got {t}",
                self.tasks(),
                self.tasks()
            )));
        }
        Ok(())
    }
}

pub fn sweep_file(dir: &Path, t: usize) -> PathBuf {
    dir.join(format!("sweep_t{t}.csv"))
}

/// Accuracy along the segment from the task-`t` checkpoint to the task-`t+1`
/// checkpoint of `role` (the deployed memory if `None`); writes
/// `sweep_t{t}.csv` into the run directory.
pub fn cmd_sweep_lambda(
    dir: &Path,
    t: usize,
    grid: &[f64],
    role: Option<Role>,
) -> CliResult<LambdaSweep> {
    let run = RunDir::open(dir)?;
    run.check_transition(t)?;
    let role = role.unwrap_or_else(|| run.deployed_role());
    let theta_t = run.adapters(t, role)?;
    let theta_t1 = run.adapters(t + 1, role)?;
    let past: Vec<&Batch> = (1..=t).map(|j| run.eval(j)).collect();
    let sweep = sweep_lambda(&run.net, &theta_t, &theta_t1, &past, run.eval(t + 1), grid)?;
    let rows: Vec<Vec<String>> = (0..grid.len())
        .map(|i| {
            vec![
                fmt_f64(sweep.lambda_grid[i]),
                fmt_f64(sweep.ap[i]),
                fmt_f64(sweep.an[i]),
                fmt_f64(sweep.aall[i]),
            ]
        })
        .collect();
    write_csv(&sweep_file(dir, t), &["lambda", "Ap", "An", "Aall"], &rows)?;
    Ok(sweep)
}

/// `points` values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, points: usize) -> CliResult<Vec<f64>> {
    if points < 2 || lo.partial_cmp(&hi) != Some(std::cmp::Ordering::Less) {
        return Err(CliError::Config(format!(
            "grid needs at least two points and lo < hi, got {points} points over [{lo}, {hi}]"
        )));
    }
    let last = (points - 1) as f64;
    Ok((0..points)
        .map(|i| match i {
            0 => lo,
            _ if i == points - 1 => hi,
            _ => lo + (hi - lo) * (i as f64 / last),
        })
        .collect())
}

/// Comma-separated list of reals.
pub fn parse_grid(spec: &str) -> CliResult<Vec<f64>> {
    spec.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Config(format!("bad grid value {s:?}")))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeKind {
    Wd,
    Cka,
    Landscape,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeOptions {
    /// Landscape transition; defaults to 2 (1 for single-task runs).
    pub transition: Option<usize>,
    /// Landscape coefficient grid, used for both directions.
    pub grid: Vec<f64>,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self {
            transition: None,
            grid: linspace(-0.5, 1.5, 21).expect("static grid"),
        }
    }
}

/// Writes `wd.csv`, `cka.csv`, or `landscape.csv` into the run directory
/// and returns its path.
///
/// * `wd`: per transition `t`, `‖θ_t − θ_{t+1}‖` for the working memory and,
///   when the run has one, the long-term memory.
/// * `cka`: per transition `t`, linear CKA between the embeddings of the
///   deployed checkpoints `t` and `t+1` on task `t`'s eval set.
/// * `landscape`: mean squared embedding deviation from `θ_{t−1}` (the
///   long-term checkpoint, or the initialization for `t = 1`) over
///   `θ_{t−1} + a·(θ^w_t − θ_{t−1}) + b·(θ^l_t − θ_{t−1})`, probed on task
///   `t`'s eval set.
pub fn cmd_probe(dir: &Path, kind: ProbeKind, opts: &ProbeOptions) -> CliResult<PathBuf> {
    let run = RunDir::open(dir)?;
    let tasks = run.tasks();
    let has_slow = run.config.strategy.kind == StrategyKind::Ilora;
    match kind {
        ProbeKind::Wd => {
            let mut header = vec!["transition", "WD_w"];
            if has_slow {
                header.push("WD_l");
            }
            let mut rows = Vec::new();
            for t in 1..tasks {
                let mut row = vec![t.to_string()];
                let mut roles = vec![Role::Working];
                if has_slow {
                    roles.push(Role::LongTerm);
                }
                for role in roles {
                    let d = weight_distance(&run.adapters(t, role)?, &run.adapters(t + 1, role)?)?;
                    row.push(fmt_f64(d));
                }
                rows.push(row);
            }
            let path = dir.join("wd.csv");
            write_csv(&path, &header, &rows)?;
            Ok(path)
        }
        ProbeKind::Cka => {
            let role = run.deployed_role();
            let mut rows = Vec::new();
            for t in 1..tasks {
                let probe = &run.eval(t).x;
                let x = run.net.embed(&run.adapters(t, role)?, probe)?;
                let y = run.net.embed(&run.adapters(t + 1, role)?, probe)?;
                rows.push(vec![t.to_string(), fmt_f64(linear_cka(&x, &y)?)]);
            }
            let path = dir.join("cka.csv");
            write_csv(&path, &["transition", "cka"], &rows)?;
            Ok(path)
        }
        ProbeKind::Landscape => {
            let t = opts.transition.unwrap_or(if tasks >= 2 { 2 } else { 1 });
            if t == 0 || t > tasks {
                return Err(CliError::Config(format!(
                    "landscape transition must lie in 1..={tasks}, got {t}"
                )));
            }
            let anchor = run.adapters(t - 1, Role::LongTerm)?;
            let d1 = run.adapters(t, Role::Working)?.sub(&anchor)?;
            let d2 = run.adapters(t, Role::LongTerm)?.sub(&anchor)?;
            let g = landscape_grid(
                &run.net,
                &anchor,
                &d1,
                &d2,
                &opts.grid,
                &opts.grid,
                run.eval(t),
            )?;
            let mut rows = Vec::new();
            for (i, &a) in g.a.iter().enumerate() {
                for (j, &b) in g.b.iter().enumerate() {
                    rows.push(vec![fmt_f64(a), fmt_f64(b), fmt_f64(g.values.get(i, j))]);
                }
            }
            let path = dir.join("landscape.csv");
            write_csv(&path, &["a", "b", "value"], &rows)?;
            Ok(path)
        }
    }
}

/// Dumps the generated stream, anchor task first as task 0:
/// `task_id,split,label,x0,…`.
pub fn cmd_dataset(config: &ExperimentConfig, out: &Path) -> CliResult<usize> {
    config.validate()?;
    let stream = make_stream(config.seed, &config.stream)?;
    let d = config.stream.input_dim;
    let mut header = vec!["task_id".to_string(), "split".into(), "label".into()];
    header.extend((0..d).map(|k| format!("x{k}")));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut rows = Vec::new();
    for task in std::iter::once(&stream.anchor).chain(&stream.tasks) {
        for (split, batch) in [("train", &task.train), ("eval", &task.eval)] {
            for (r, &label) in batch.y.iter().enumerate() {
                let mut row = vec![
                    task.spec.task_id.to_string(),
                    split.to_string(),
                    label.to_string(),
                ];
                row.extend(batch.x.row(r).iter().map(|&v| fmt_f64(v)));
                rows.push(row);
            }
        }
    }
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_csv(out, &header_refs, &rows)?;
    Ok(rows.len())
}
