use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};

/// Network shape plus adapter hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Arch {
    pub input_dim: usize,
    pub hidden: usize,
    pub embed: usize,
    pub classes: usize,
    pub rank: usize,
    pub alpha: f64,
    /// Standard deviation of the Gaussian used for the `A` factors.
    pub adapter_init_std: f64,
}

impl Default for Arch {
    fn default() -> Self {
        Self {
            input_dim: 16,
            hidden: 32,
            embed: 16,
            classes: 4,
            rank: 8,
            alpha: 16.0,
            adapter_init_std: 0.02,
        }
    }
}

impl Arch {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden == 0 || self.embed == 0 || self.rank == 0 {
            return Err(Error::contract("architecture dimensions must be positive"));
        }
        if self.classes < 2 {
            return Err(Error::contract("need at least two classes"));
        }
        if !self.alpha.is_finite() || self.adapter_init_std.is_nan() || self.adapter_init_std < 0.0
        {
            return Err(Error::contract(
                "alpha must be finite and adapter_init_std >= 0",
            ));
        }
        Ok(())
    }

    /// Adapter scaling `alpha / rank`.
    pub fn scaling(&self) -> f64 {
        self.alpha / self.rank as f64
    }

    /// Length of the flattened adapter vector: `r·d + h·r + r·h + e·r`.
    pub fn adapter_len(&self) -> usize {
        let (r, d, h, e) = (self.rank, self.input_dim, self.hidden, self.embed);
        r * d + h * r + r * h + e * r
    }

    pub fn backbone_len(&self) -> usize {
        let (d, h, e, c) = (self.input_dim, self.hidden, self.embed, self.classes);
        h * d + h + e * h + e + c * e + c
    }
}

/// Flattened trainable adapter parameters.
///
/// Layout: `A₁` (r×d), `B₁` (h×r), `A₂` (r×h), `B₂` (e×r), each row-major,
/// concatenated in that order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub(crate) fn check_len(&self, expected: usize, op: &'static str) -> Result<()> {
        if self.0.len() != expected {
            return Err(Error::dims(op, expected, self.0.len()));
        }
        Ok(())
    }

    /// `self + s·other`, elementwise.
    pub fn axpy(&self, s: f64, other: &ParamVector) -> Result<ParamVector> {
        other.check_len(self.len(), "ParamVector::axpy")?;
        Ok(ParamVector(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a + s * b)
                .collect(),
        ))
    }

    pub fn sub(&self, other: &ParamVector) -> Result<ParamVector> {
        other.check_len(self.len(), "ParamVector::sub")?;
        Ok(ParamVector(
            self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect(),
        ))
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl AsRef<[f64]> for ParamVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Structured view of the adapter factors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterParams {
    pub a1: Matrix,
    pub b1: Matrix,
    pub a2: Matrix,
    pub b2: Matrix,
}

impl AdapterParams {
    /// `A ~ N(0, adapter_init_std²)`, `B = 0`, so the adapted network starts
    /// exactly at the backbone.
    pub fn init(arch: &Arch, rng: &mut Rng) -> Self {
        let (r, d, h, e) = (arch.rank, arch.input_dim, arch.hidden, arch.embed);
        let std = arch.adapter_init_std;
        let a1 = rng.gaussian_matrix(r, d, 0.0, std);
        let a2 = rng.gaussian_matrix(r, h, 0.0, std);
        Self {
            a1,
            b1: Matrix::zeros(h, r),
            a2,
            b2: Matrix::zeros(e, r),
        }
    }

    pub fn flatten(&self) -> ParamVector {
        let mut v = Vec::with_capacity(
            self.a1.as_slice().len()
                + self.b1.as_slice().len()
                + self.a2.as_slice().len()
                + self.b2.as_slice().len(),
        );
        for m in [&self.a1, &self.b1, &self.a2, &self.b2] {
            v.extend_from_slice(m.as_slice());
        }
        ParamVector(v)
    }

    pub fn unflatten(arch: &Arch, theta: &ParamVector) -> Result<Self> {
        theta.check_len(arch.adapter_len(), "AdapterParams::unflatten")?;
        let (r, d, h, e) = (arch.rank, arch.input_dim, arch.hidden, arch.embed);
        let mut rest = theta.as_slice();
        let mut take = |rows: usize, cols: usize| {
            let (head, tail) = rest.split_at(rows * cols);
            rest = tail;
            Matrix::from_vec(rows, cols, head.to_vec()).expect("sized split")
        };
        Ok(Self {
            a1: take(r, d),
            b1: take(h, r),
            a2: take(r, h),
            b2: take(e, r),
        })
    }
}

/// Frozen backbone weights.
#[derive(Debug, Clone, PartialEq)]
pub struct BackboneParams {
    /// h × d
    pub w1: Matrix,
    pub b1: Vec<f64>,
    /// e × h
    pub w2: Matrix,
    pub b2: Vec<f64>,
    /// c × e
    pub w_head: Matrix,
    pub b_head: Vec<f64>,
}

impl BackboneParams {
    /// He-scaled Gaussian weights (`std = sqrt(2 / fan_in)`), zero biases.
    /// Draw order: `W1`, `W2`, `Whead`.
    pub fn init(arch: &Arch, rng: &mut Rng) -> Self {
        let (d, h, e, c) = (arch.input_dim, arch.hidden, arch.embed, arch.classes);
        let w1 = rng.gaussian_matrix(h, d, 0.0, (2.0 / d as f64).sqrt());
        let w2 = rng.gaussian_matrix(e, h, 0.0, (2.0 / h as f64).sqrt());
        let w_head = rng.gaussian_matrix(c, e, 0.0, (1.0 / e as f64).sqrt());
        Self {
            w1,
            b1: vec![0.0; h],
            w2,
            b2: vec![0.0; e],
            w_head,
            b_head: vec![0.0; c],
        }
    }

    pub fn zeros(arch: &Arch) -> Self {
        let (d, h, e, c) = (arch.input_dim, arch.hidden, arch.embed, arch.classes);
        Self {
            w1: Matrix::zeros(h, d),
            b1: vec![0.0; h],
            w2: Matrix::zeros(e, h),
            b2: vec![0.0; e],
            w_head: Matrix::zeros(c, e),
            b_head: vec![0.0; c],
        }
    }

    /// Flat layout: `W1, b1, W2, b2, Whead, bhead`.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::new();
        v.extend_from_slice(self.w1.as_slice());
        v.extend_from_slice(&self.b1);
        v.extend_from_slice(self.w2.as_slice());
        v.extend_from_slice(&self.b2);
        v.extend_from_slice(self.w_head.as_slice());
        v.extend_from_slice(&self.b_head);
        v
    }

    pub fn unflatten(arch: &Arch, flat: &[f64]) -> Result<Self> {
        if flat.len() != arch.backbone_len() {
            return Err(Error::dims(
                "BackboneParams::unflatten",
                arch.backbone_len(),
                flat.len(),
            ));
        }
        let (d, h, e, c) = (arch.input_dim, arch.hidden, arch.embed, arch.classes);
        let mut rest = flat;
        let mut take = |n: usize| {
            let (head, tail) = rest.split_at(n);
            rest = tail;
            head.to_vec()
        };
        let w1 = Matrix::from_vec(h, d, take(h * d))?;
        let b1 = take(h);
        let w2 = Matrix::from_vec(e, h, take(e * h))?;
        let b2 = take(e);
        let w_head = Matrix::from_vec(c, e, take(c * e))?;
        let b_head = take(c);
        Ok(Self {
            w1,
            b1,
            w2,
            b2,
            w_head,
            b_head,
        })
    }

    pub fn arch_matches(&self, arch: &Arch) -> bool {
        self.w1.shape() == (arch.hidden, arch.input_dim)
            && self.w2.shape() == (arch.embed, arch.hidden)
            && self.w_head.shape() == (arch.classes, arch.embed)
            && self.b1.len() == arch.hidden
            && self.b2.len() == arch.embed
            && self.b_head.len() == arch.classes
    }
}

/// Labelled inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub x: Matrix,
    pub y: Vec<usize>,
}

impl Batch {
    pub fn new(x: Matrix, y: Vec<usize>) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::dims("Batch::new", x.rows(), y.len()));
        }
        Ok(Self { x, y })
    }

    pub fn empty(cols: usize) -> Self {
        Self {
            x: Matrix::zeros(0, cols),
            y: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn select(&self, indices: &[usize]) -> Batch {
        Batch {
            x: self.x.select_rows(indices),
            y: indices.iter().map(|&i| self.y[i]).collect(),
        }
    }

    pub fn concat(&self, other: &Batch) -> Result<Batch> {
        Ok(Batch {
            x: self.x.vstack(&other.x)?,
            y: self.y.iter().chain(&other.y).copied().collect(),
        })
    }

    pub fn validate(&self, input_dim: usize, classes: usize) -> Result<()> {
        if self.is_empty() {
            return Err(Error::contract("batch must contain at least one sample"));
        }
        if self.x.cols() != input_dim {
            return Err(Error::dims("Batch::validate", input_dim, self.x.cols()));
        }
        if let Some(&bad) = self.y.iter().find(|&&l| l >= classes) {
            return Err(Error::contract(format!(
                "label {bad} outside [0, {classes})"
            )));
        }
        Ok(())
    }
}
