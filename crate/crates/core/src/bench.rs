//! Synthetic domain-incremental task streams and backbone pretraining.
//!
//! Every task shares the label space. Class `k` is a Gaussian cluster around
//! `mean_scale · e_{axis(k)}`, where `axis` is a seeded injection of the
//! classes into the input coordinates. The class axes are paired, in seeded
//! order, into disjoint coordinate planes (an odd class out is paired with a
//! seeded unused axis). One task step `G` rotates every plane by
//! `rotation_deg`; task `t` applies `t` cumulative steps, then adds a fresh
//! seeded class-specific offset of norm `shift`:
//!
//! ```text
//! x = Q_t (μ_y + σ ε) + s_{t,y},   Q_t = G · Q_{t−1},   Q_0 = I
//! ```
//!
//! The anchor task (id 0) uses `Q = I` and no offset; it pretrains the
//! backbone and serves as the held-out general-knowledge probe.
//!
//! Draw order on the stream generator: class axes, plane pairing, anchor
//! train, anchor eval, then per task: offsets, train, eval.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{backbone_loss_and_grad, Arch, BackboneParams, Batch, ParamVector};
use crate::numerics::{matmul_nt, Matrix, Rng};
use crate::optim::AdamState;

const STREAM_SUBSTREAM: u64 = 0x5354_5245_414d;
const BACKBONE_SUBSTREAM: u64 = 0x4241_434b;

/// Shared generator settings for every task of a stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StreamSpec {
    pub tasks: usize,
    pub input_dim: usize,
    pub classes: usize,
    pub n_train: usize,
    pub n_eval: usize,
    /// Per-coordinate cluster standard deviation.
    pub sigma: f64,
    /// Distance of each class mean from the origin.
    pub mean_scale: f64,
    pub rotation_deg: f64,
    /// Norm of the per-task class-conditional offset.
    pub shift: f64,
}

impl Default for StreamSpec {
    fn default() -> Self {
        Self {
            tasks: 5,
            input_dim: 16,
            classes: 4,
            n_train: 512,
            n_eval: 256,
            sigma: 0.5,
            mean_scale: 2.0,
            rotation_deg: 25.0,
            shift: 0.5,
        }
    }
}

impl StreamSpec {
    pub fn validate(&self) -> Result<()> {
        if self.tasks == 0 {
            return Err(Error::contract("stream needs at least one task"));
        }
        if self.classes < 2 || self.classes > self.input_dim {
            return Err(Error::contract(format!(
                "classes must lie in 2..={} (one axis per class), got {}",
                self.input_dim, self.classes
            )));
        }
        if self.n_train < self.classes || self.n_eval < self.classes {
            return Err(Error::contract(
                "n_train and n_eval must be at least the class count",
            ));
        }
        for (name, v) in [
            ("sigma", self.sigma),
            ("mean_scale", self.mean_scale),
            ("shift", self.shift),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::contract(format!("{name} must be finite and >= 0")));
            }
        }
        if !self.rotation_deg.is_finite() {
            return Err(Error::contract("rotation_deg must be finite"));
        }
        Ok(())
    }
}

/// Recorded generator parameters of one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    /// 0 for the anchor, 1..=T for stream tasks.
    pub task_id: usize,
    pub n_train: usize,
    pub n_eval: usize,
    pub classes: usize,
    pub input_dim: usize,
    pub sigma: f64,
    /// Coordinate planes rotated by each task step (empty for the anchor).
    pub planes: Vec<(usize, usize)>,
    pub rotation_deg: f64,
    /// Cumulative rotation `Q_t` (d × d).
    pub rotation: Matrix,
    /// Class offsets `s_{t,k}`, one row per class.
    pub offsets: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub train: Batch,
    pub eval: Batch,
    pub spec: TaskSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskStream {
    pub seed: u64,
    pub base: StreamSpec,
    /// Class mean per row.
    pub means: Matrix,
    pub anchor: Task,
    pub tasks: Vec<Task>,
}

impl TaskStream {
    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn eval_sets(&self) -> Vec<&Batch> {
        self.tasks.iter().map(|t| &t.eval).collect()
    }
}

/// Givens rotation by `deg` degrees in the `(i, j)` coordinate plane.
pub fn plane_rotation(dim: usize, i: usize, j: usize, deg: f64) -> Matrix {
    let mut g = Matrix::identity(dim);
    let (s, c) = deg.to_radians().sin_cos();
    g.set(i, i, c);
    g.set(i, j, -s);
    g.set(j, i, s);
    g.set(j, j, c);
    g
}

fn balanced_labels(n: usize, classes: usize, rng: &mut Rng) -> Vec<usize> {
    let mut y: Vec<usize> = (0..n).map(|i| i % classes).collect();
    rng.shuffle(&mut y);
    y
}

fn draw_split(
    n: usize,
    spec: &StreamSpec,
    means: &Matrix,
    rotation: &Matrix,
    offsets: &Matrix,
    rng: &mut Rng,
) -> Batch {
    let d = spec.input_dim;
    let y = balanced_labels(n, spec.classes, rng);
    let noise = rng.gaussian_matrix(n, d, 0.0, spec.sigma);
    let mut base = noise;
    for (r, &label) in y.iter().enumerate() {
        for (v, m) in base.row_mut(r).iter_mut().zip(means.row(label)) {
            *v += m;
        }
    }
    let mut x = matmul_nt(&base, rotation).expect("square rotation");
    for (r, &label) in y.iter().enumerate() {
        for (v, s) in x.row_mut(r).iter_mut().zip(offsets.row(label)) {
            *v += s;
        }
    }
    Batch { x, y }
}

/// Generates the anchor and `spec.tasks` shifted tasks from `seed`.
pub fn make_stream(seed: u64, spec: &StreamSpec) -> Result<TaskStream> {
    spec.validate()?;
    let (d, c) = (spec.input_dim, spec.classes);
    let mut rng = Rng::substream(seed, STREAM_SUBSTREAM);

    let axes = rng.sample_without_replacement(d, c);
    let mut means = Matrix::zeros(c, d);
    for (k, &a) in axes.iter().enumerate() {
        means.set(k, a, spec.mean_scale);
    }

    let mut plane_axes: Vec<usize> = rng
        .sample_without_replacement(c, c)
        .into_iter()
        .map(|k| axes[k])
        .collect();
    if plane_axes.len() % 2 == 1 {
        let unused: Vec<usize> = (0..d).filter(|a| !axes.contains(a)).collect();
        if unused.is_empty() {
            plane_axes.pop();
        } else {
            plane_axes.push(unused[rng.below(unused.len())]);
        }
    }
    let planes: Vec<(usize, usize)> = plane_axes.chunks(2).map(|p| (p[0], p[1])).collect();
    let mut task_step = Matrix::identity(d);
    for &(i, j) in &planes {
        task_step =
            crate::numerics::matmul(&plane_rotation(d, i, j, spec.rotation_deg), &task_step)?;
    }

    let identity = Matrix::identity(d);
    let no_offset = Matrix::zeros(c, d);
    let anchor = Task {
        train: draw_split(spec.n_train, spec, &means, &identity, &no_offset, &mut rng),
        eval: draw_split(spec.n_eval, spec, &means, &identity, &no_offset, &mut rng),
        spec: TaskSpec {
            task_id: 0,
            n_train: spec.n_train,
            n_eval: spec.n_eval,
            classes: c,
            input_dim: d,
            sigma: spec.sigma,
            planes: Vec::new(),
            rotation_deg: 0.0,
            rotation: identity.clone(),
            offsets: no_offset,
        },
    };

    let mut rotation = identity;
    let mut tasks = Vec::with_capacity(spec.tasks);
    for t in 1..=spec.tasks {
        rotation = crate::numerics::matmul(&task_step, &rotation)?;

        let mut offsets = Matrix::zeros(c, d);
        for k in 0..c {
            let dir = rng.gaussian_vec(d, 0.0, 1.0);
            let norm = crate::numerics::norm(&dir);
            for (o, v) in offsets.row_mut(k).iter_mut().zip(&dir) {
                *o = if norm > 0.0 {
                    spec.shift * v / norm
                } else {
                    0.0
                };
            }
        }

        let train = draw_split(spec.n_train, spec, &means, &rotation, &offsets, &mut rng);
        let eval = draw_split(spec.n_eval, spec, &means, &rotation, &offsets, &mut rng);
        tasks.push(Task {
            train,
            eval,
            spec: TaskSpec {
                task_id: t,
                n_train: spec.n_train,
                n_eval: spec.n_eval,
                classes: c,
                input_dim: d,
                sigma: spec.sigma,
                planes: planes.clone(),
                rotation_deg: spec.rotation_deg,
                rotation: rotation.clone(),
                offsets,
            },
        });
    }

    Ok(TaskStream {
        seed,
        base: *spec,
        means,
        anchor,
        tasks,
    })
}

/// Accuracy on `eval` of classifying each row by the closest training-class
/// centroid (lowest class on ties). Independent of the network.
pub fn nearest_centroid_accuracy(train: &Batch, eval: &Batch, classes: usize) -> f64 {
    let d = train.x.cols();
    let mut centroids = vec![vec![0.0; d]; classes];
    let mut counts = vec![0usize; classes];
    for (r, &y) in train.y.iter().enumerate() {
        counts[y] += 1;
        for (c, v) in centroids[y].iter_mut().zip(train.x.row(r)) {
            *c += v;
        }
    }
    for (c, &n) in centroids.iter_mut().zip(&counts) {
        for v in c.iter_mut() {
            *v /= n.max(1) as f64;
        }
    }
    let correct = eval
        .y
        .iter()
        .enumerate()
        .filter(|(r, &y)| {
            let row = eval.x.row(*r);
            let mut best = (0, f64::INFINITY);
            for (k, c) in centroids.iter().enumerate() {
                let dist: f64 = row.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
                if dist < best.1 {
                    best = (k, dist);
                }
            }
            best.0 == y
        })
        .count();
    correct as f64 / eval.len() as f64
}

/// Full-parameter training budget for the backbone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainSpec {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub warmup_ratio: f64,
}

impl Default for PretrainSpec {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 16,
            lr: 5e-3,
            warmup_ratio: 0.2,
        }
    }
}

/// Trains every backbone weight on the anchor task with Adam over shuffled
/// minibatches. Deterministic in `seed`.
pub fn pretrain_backbone(
    anchor_train: &Batch,
    arch: &Arch,
    spec: &PretrainSpec,
    seed: u64,
) -> Result<BackboneParams> {
    arch.validate()?;
    anchor_train.validate(arch.input_dim, arch.classes)?;
    if spec.batch_size == 0 {
        return Err(Error::contract("batch_size must be positive"));
    }
    let mut rng = Rng::substream(seed, BACKBONE_SUBSTREAM);
    let init = BackboneParams::init(arch, &mut rng);
    let mut flat = ParamVector::new(init.flatten());

    let n = anchor_train.len();
    let steps_per_epoch = n.div_ceil(spec.batch_size);
    let mut adam = AdamState::new(
        flat.len(),
        spec.lr,
        spec.warmup_ratio,
        spec.epochs * steps_per_epoch,
    );
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..spec.epochs {
        rng.shuffle(&mut order);
        for chunk in order.chunks(spec.batch_size) {
            let batch = anchor_train.select(chunk);
            let current = BackboneParams::unflatten(arch, flat.as_slice())?;
            let (_, grad) = backbone_loss_and_grad(arch, &current, &batch)?;
            adam.step(&mut flat, &ParamVector::new(grad))?;
        }
    }
    BackboneParams::unflatten(arch, flat.as_slice())
}
