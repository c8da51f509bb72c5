use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::ResultMatrix;
use crate::model::{AdaptedNet, AdapterParams, Batch, Distill, ParamVector};
use crate::numerics::Rng;
use crate::optim::{
    agem_project, ema_update, ewc_fisher, ewc_penalty_grad, AdamState, EwcState, GradRef,
};
use crate::replay::ReplayBuffer;

use super::config::{Deploy, StrategyConfig, StrategyKind};

// Independent generator streams derived from the run seed. Keeping these
// separate means a strategy that never touches memory consumes exactly the
// same batching draws as one whose memory happens to be empty.
const INIT_STREAM: u64 = 1;
const BATCH_STREAM: u64 = 2;
const INGEST_STREAM: u64 = 3;
const MEMORY_STREAM: u64 = 4;

/// One task of a stream as seen by the trainer.
#[derive(Debug, Clone, Copy)]
pub struct TaskPair<'a> {
    pub train: &'a Batch,
    pub eval: &'a Batch,
}

impl crate::bench::TaskStream {
    pub fn pairs(&self) -> Vec<TaskPair<'_>> {
        self.tasks
            .iter()
            .map(|t| TaskPair {
                train: &t.train,
                eval: &t.eval,
            })
            .collect()
    }
}

/// Fast learner, slow learner, and the optimizer driving the fast learner.
#[derive(Debug, Clone, PartialEq)]
pub struct DualMemoryState {
    /// Working memory, updated by gradient steps.
    pub theta_w: ParamVector,
    /// Long-term memory, an EMA of `theta_w`.
    pub theta_l: ParamVector,
    pub adam: AdamState,
    /// Fast-learner updates applied since the start of the run.
    pub steps: usize,
}

impl DualMemoryState {
    /// Both memories start from the same parameters.
    pub fn new(init: ParamVector, adam: AdamState) -> Self {
        Self {
            theta_l: init.clone(),
            theta_w: init,
            adam,
            steps: 0,
        }
    }

    pub fn deployed(&self, deploy: Deploy) -> &ParamVector {
        match deploy {
            Deploy::Working => &self.theta_w,
            Deploy::LongTerm => &self.theta_l,
        }
    }
}

/// Per-run state that is not part of the parameters themselves.
#[derive(Debug, Clone)]
pub struct Aux {
    pub buffer: ReplayBuffer,
    pub ewc: Vec<EwcState>,
    batch_rng: Rng,
    ingest_rng: Rng,
    memory_rng: Rng,
}

impl Aux {
    pub fn new(config: &StrategyConfig, seed: u64) -> Result<Self> {
        Ok(Self {
            buffer: ReplayBuffer::new(config.rho)?.with_mode(config.replay_sampling),
            ewc: Vec::new(),
            batch_rng: Rng::substream(seed, BATCH_STREAM),
            ingest_rng: Rng::substream(seed, INGEST_STREAM),
            memory_rng: Rng::substream(seed, MEMORY_STREAM),
        })
    }
}

/// Snapshot handed to a step observer after every fast-learner update.
#[derive(Debug, Clone, Copy)]
pub struct StepEvent<'a> {
    /// 1-based global step.
    pub step: usize,
    /// 1-based task index; 0 for joint (MTL) training.
    pub task: usize,
    pub theta_w: &'a ParamVector,
    pub theta_l: &'a ParamVector,
}

/// Everything a run produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub config: StrategyConfig,
    /// Adapter parameters before any training.
    pub init: ParamVector,
    /// Working parameters after each task.
    pub checkpoints: Vec<ParamVector>,
    /// Slow-learner parameters after each task (ILORA only).
    pub slow_checkpoints: Vec<ParamVector>,
    pub result_matrix: ResultMatrix,
    pub total_steps: usize,
}

impl RunRecord {
    /// Deployed parameters after task `t` (1-based).
    pub fn deployed(&self, t: usize) -> &ParamVector {
        match self.config.deploy() {
            Deploy::LongTerm => &self.slow_checkpoints[t - 1],
            Deploy::Working => &self.checkpoints[t - 1],
        }
    }

    pub fn final_deployed(&self) -> &ParamVector {
        self.deployed(self.checkpoints.len())
    }
}

/// Number of optimizer steps for `n` examples: `epochs · ceil(n / batch)`.
pub fn steps_for(config: &StrategyConfig, n: usize) -> usize {
    config.epochs * n.div_ceil(config.batch_size)
}

/// Yields minibatch index lists: each epoch shuffles the whole pool and
/// takes its first `per_epoch` positions in chunks of `batch_size`.
fn epoch_batches(
    pool: usize,
    per_epoch: usize,
    batch_size: usize,
    rng: &mut Rng,
) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..pool).collect();
    rng.shuffle(&mut order);
    order[..per_epoch.min(pool)]
        .chunks(batch_size)
        .map(<[usize]>::to_vec)
        .collect()
}

fn fresh_adam(config: &StrategyConfig, len: usize, total_steps: usize) -> AdamState {
    AdamState::new(len, config.lr, config.warmup_ratio, total_steps).with_kind(config.optimizer)
}

/// One I-LoRA update: cross-entropy on `batch`, embedding deviation of a
/// memory sample from the slow learner, an optimizer step on the fast
/// learner, then the EMA every `update_frequency` steps.
///
/// With `gamma == 0` or an empty buffer the memory sample is not drawn at
/// all, so the memory generator is left untouched.
pub fn ilora_step(
    net: &AdaptedNet,
    state: &mut DualMemoryState,
    config: &StrategyConfig,
    batch: &Batch,
    buffer: &ReplayBuffer,
    memory_rng: &mut Rng,
) -> Result<()> {
    let grad = if config.gamma > 0.0 && !buffer.is_empty() {
        let mem = buffer.sample(config.batch_size, memory_rng)?;
        let targets = net.embed(&state.theta_l, &mem.x)?;
        let distill = Distill {
            inputs: &mem.x,
            targets: &targets,
        };
        net.loss_and_grad(&state.theta_w, batch, config.gamma, Some(distill))?
            .1
    } else {
        net.loss_and_grad(&state.theta_w, batch, 0.0, None)?.1
    };
    state.adam.step(&mut state.theta_w, &grad)?;
    state.steps += 1;
    if state.steps.is_multiple_of(config.update_frequency) {
        state.theta_l = ema_update(&state.theta_l, &state.theta_w, config.lambda_ema)?;
    }
    Ok(())
}

/// Gradient for one step of the non-dual strategies.
fn baseline_grad(
    net: &AdaptedNet,
    config: &StrategyConfig,
    theta: &ParamVector,
    batch: &Batch,
    aux: &mut Aux,
) -> Result<ParamVector> {
    let (_, grad) = net.loss_and_grad(theta, batch, 0.0, None)?;
    match config.kind {
        StrategyKind::Ewc if config.lambda_ewc > 0.0 && !aux.ewc.is_empty() => {
            let (_, pg) = ewc_penalty_grad(theta, &aux.ewc)?;
            grad.axpy(1.0, &pg)
        }
        StrategyKind::Agem if !aux.buffer.is_empty() => {
            let mem = aux.buffer.sample(config.batch_size, &mut aux.memory_rng)?;
            let (_, g_ref) = net.loss_and_grad(theta, &mem, 0.0, None)?;
            agem_project(&grad, &GradRef { g_ref })
        }
        _ => Ok(grad),
    }
}

/// Trains on one task for `epochs · ceil(n / batch)` steps. The optimizer
/// schedule restarts at every task.
pub fn train_task<F>(
    net: &AdaptedNet,
    state: &mut DualMemoryState,
    config: &StrategyConfig,
    task_id: usize,
    train: &Batch,
    aux: &mut Aux,
    observer: &mut F,
) -> Result<()>
where
    F: FnMut(StepEvent<'_>),
{
    if config.kind == StrategyKind::Mtl {
        return Err(Error::contract("MTL trains jointly; use run_sequence"));
    }
    train.validate(net.arch().input_dim, net.arch().classes)?;
    let n = train.len();
    let steps = steps_for(config, n);
    state.adam = fresh_adam(config, state.theta_w.len(), steps);

    let mixes_memory = matches!(config.kind, StrategyKind::Er | StrategyKind::Ilora);
    let pool = if mixes_memory && !aux.buffer.is_empty() {
        train.concat(&aux.buffer.all(net.arch().input_dim))?
    } else {
        train.clone()
    };

    for _ in 0..config.epochs {
        for idx in epoch_batches(pool.len(), n, config.batch_size, &mut aux.batch_rng) {
            let batch = pool.select(&idx);
            if config.kind == StrategyKind::Ilora {
                ilora_step(net, state, config, &batch, &aux.buffer, &mut aux.memory_rng)?;
            } else {
                let grad = baseline_grad(net, config, &state.theta_w, &batch, aux)?;
                state.adam.step(&mut state.theta_w, &grad)?;
                state.steps += 1;
            }
            observer(StepEvent {
                step: state.steps,
                task: task_id,
                theta_w: &state.theta_w,
                theta_l: &state.theta_l,
            });
        }
    }

    if config.kind == StrategyKind::Ewc && config.lambda_ewc > 0.0 {
        let fisher = ewc_fisher(net, &state.theta_w, train)?;
        aux.ewc.push(EwcState {
            theta_star: state.theta_w.clone(),
            fisher,
            lambda_ewc: config.lambda_ewc,
        });
    }
    if config.kind.uses_memory() {
        aux.buffer
            .ingest_task(task_id, train, &mut aux.ingest_rng)?;
    }
    Ok(())
}

/// Adapter initialization for a run seed.
pub fn init_adapters(net: &AdaptedNet, seed: u64) -> ParamVector {
    AdapterParams::init(net.arch(), &mut Rng::substream(seed, INIT_STREAM)).flatten()
}

pub fn run_sequence(
    net: &AdaptedNet,
    config: &StrategyConfig,
    tasks: &[TaskPair<'_>],
    seed: u64,
) -> Result<RunRecord> {
    run_sequence_observed(net, config, tasks, seed, &mut |_| {})
}

/// Trains task by task, evaluating the deployed parameters on every task
/// seen so far after each one. `observer` sees every optimizer step.
pub fn run_sequence_observed<F>(
    net: &AdaptedNet,
    config: &StrategyConfig,
    tasks: &[TaskPair<'_>],
    seed: u64,
    observer: &mut F,
) -> Result<RunRecord>
where
    F: FnMut(StepEvent<'_>),
{
    config.validate()?;
    if tasks.is_empty() {
        return Err(Error::contract("stream must contain at least one task"));
    }
    for t in tasks {
        t.eval.validate(net.arch().input_dim, net.arch().classes)?;
    }
    let init = init_adapters(net, seed);
    if config.kind == StrategyKind::Mtl {
        return run_joint(net, config, tasks, seed, init, observer);
    }

    let deploy = config.deploy();
    let mut state = DualMemoryState::new(init.clone(), fresh_adam(config, init.len(), 1));
    let mut aux = Aux::new(config, seed)?;
    let mut result = ResultMatrix::new(tasks.len())?;
    let mut checkpoints = Vec::with_capacity(tasks.len());
    let mut slow = Vec::new();

    for (i, task) in tasks.iter().enumerate() {
        let t = i + 1;
        train_task(net, &mut state, config, t, task.train, &mut aux, observer)?;
        let deployed = state.deployed(deploy);
        for (j, past) in tasks[..t].iter().enumerate() {
            result.set(t, j + 1, net.predict_accuracy(deployed, past.eval)?)?;
        }
        checkpoints.push(state.theta_w.clone());
        if config.kind == StrategyKind::Ilora {
            slow.push(state.theta_l.clone());
        }
    }

    Ok(RunRecord {
        seed,
        config: config.materialized(),
        init,
        checkpoints,
        slow_checkpoints: slow,
        result_matrix: result,
        total_steps: state.steps,
    })
}

/// Multi-task upper bound: one model trained on the union of all tasks for
/// the same total number of steps the sequential strategies take.
fn run_joint<F>(
    net: &AdaptedNet,
    config: &StrategyConfig,
    tasks: &[TaskPair<'_>],
    seed: u64,
    init: ParamVector,
    observer: &mut F,
) -> Result<RunRecord>
where
    F: FnMut(StepEvent<'_>),
{
    let mut pool = tasks[0].train.clone();
    for t in &tasks[1..] {
        pool = pool.concat(t.train)?;
    }
    pool.validate(net.arch().input_dim, net.arch().classes)?;
    let total: usize = tasks.iter().map(|t| steps_for(config, t.train.len())).sum();

    let mut state = DualMemoryState::new(init.clone(), fresh_adam(config, init.len(), total));
    let mut batch_rng = Rng::substream(seed, BATCH_STREAM);
    'outer: loop {
        for idx in epoch_batches(pool.len(), pool.len(), config.batch_size, &mut batch_rng) {
            if state.steps == total {
                break 'outer;
            }
            let batch = pool.select(&idx);
            let (_, grad) = net.loss_and_grad(&state.theta_w, &batch, 0.0, None)?;
            state.adam.step(&mut state.theta_w, &grad)?;
            state.steps += 1;
            observer(StepEvent {
                step: state.steps,
                task: 0,
                theta_w: &state.theta_w,
                theta_l: &state.theta_l,
            });
        }
    }

    let mut result = ResultMatrix::new(tasks.len())?;
    let accs: Vec<f64> = tasks
        .iter()
        .map(|t| net.predict_accuracy(&state.theta_w, t.eval))
        .collect::<Result<_>>()?;
    for t in 1..=tasks.len() {
        for (j, &a) in accs[..t].iter().enumerate() {
            result.set(t, j + 1, a)?;
        }
    }
    Ok(RunRecord {
        seed,
        config: config.materialized(),
        init,
        checkpoints: vec![state.theta_w.clone(); tasks.len()],
        slow_checkpoints: Vec::new(),
        result_matrix: result,
        total_steps: state.steps,
    })
}
