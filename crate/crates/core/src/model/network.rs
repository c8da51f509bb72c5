use crate::error::{Error, Result};
use crate::numerics::{matmul, matmul_nt, matmul_tn, Matrix};

use super::params::{AdapterParams, Arch, BackboneParams, Batch, ParamVector};

/// Output of a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    /// n × c
    pub logits: Matrix,
    /// n × e, the pre-head representation `f_o(x; θ)`.
    pub embedding: Matrix,
}

/// Distillation targets for the embedding-deviation term.
#[derive(Debug, Clone, Copy)]
pub struct Distill<'a> {
    pub inputs: &'a Matrix,
    pub targets: &'a Matrix,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub cross_entropy: f64,
    pub mse: f64,
}

/// Activations retained for backpropagation.
struct Trace {
    pre1: Matrix,
    h1: Matrix,
    z: Matrix,
    logits: Matrix,
}

/// Frozen backbone with low-rank adapters on both hidden weight matrices.
///
/// ```text
/// h1     = relu((W1 + s·B1·A1) x + b1)
/// z      = (W2 + s·B2·A2) h1 + b2        (embedding)
/// logits = Whead z + bhead
/// ```
/// with `s = alpha / rank`. The backbone is never mutated here.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedNet {
    arch: Arch,
    backbone: BackboneParams,
}

impl AdaptedNet {
    pub fn new(arch: Arch, backbone: BackboneParams) -> Result<Self> {
        arch.validate()?;
        if !backbone.arch_matches(&arch) {
            return Err(Error::contract("backbone shapes do not match architecture"));
        }
        Ok(Self { arch, backbone })
    }

    pub fn arch(&self) -> &Arch {
        &self.arch
    }

    pub fn backbone(&self) -> &BackboneParams {
        &self.backbone
    }

    fn effective_weights(&self, theta: &ParamVector) -> Result<(AdapterParams, Matrix, Matrix)> {
        let adapter = AdapterParams::unflatten(&self.arch, theta)?;
        let s = self.arch.scaling();
        let w1 = self
            .backbone
            .w1
            .add(&matmul(&adapter.b1, &adapter.a1)?.scale(s))?;
        let w2 = self
            .backbone
            .w2
            .add(&matmul(&adapter.b2, &adapter.a2)?.scale(s))?;
        Ok((adapter, w1, w2))
    }

    fn trace(&self, w1: &Matrix, w2: &Matrix, x: &Matrix) -> Result<Trace> {
        if x.cols() != self.arch.input_dim {
            return Err(Error::dims("forward", self.arch.input_dim, x.cols()));
        }
        let mut pre1 = matmul_nt(x, w1)?;
        pre1.add_row_vector(&self.backbone.b1)?;
        let mut h1 = pre1.clone();
        for v in h1.as_mut_slice() {
            *v = v.max(0.0);
        }
        let mut z = matmul_nt(&h1, w2)?;
        z.add_row_vector(&self.backbone.b2)?;
        let mut logits = matmul_nt(&z, &self.backbone.w_head)?;
        logits.add_row_vector(&self.backbone.b_head)?;
        Ok(Trace {
            pre1,
            h1,
            z,
            logits,
        })
    }

    pub fn forward(&self, theta: &ParamVector, x: &Matrix) -> Result<Forward> {
        let (_, w1, w2) = self.effective_weights(theta)?;
        let t = self.trace(&w1, &w2, x)?;
        Ok(Forward {
            logits: t.logits,
            embedding: t.z,
        })
    }

    /// Forward through the backbone alone, with no adapter contribution.
    pub fn forward_backbone(&self, x: &Matrix) -> Result<Forward> {
        let t = self.trace(&self.backbone.w1, &self.backbone.w2, x)?;
        Ok(Forward {
            logits: t.logits,
            embedding: t.z,
        })
    }

    pub fn embed(&self, theta: &ParamVector, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward(theta, x)?.embedding)
    }

    /// Mean cross-entropy on `batch` plus `gamma` times the mean (over samples
    /// and coordinates) squared deviation of the embeddings of
    /// `distill.inputs` from `distill.targets`; returns the exact gradient
    /// with respect to the adapter parameters only.
    ///
    /// The distillation term is skipped entirely when `gamma == 0`.
    pub fn loss_and_grad(
        &self,
        theta: &ParamVector,
        batch: &Batch,
        gamma: f64,
        distill: Option<Distill<'_>>,
    ) -> Result<(LossParts, ParamVector)> {
        batch.validate(self.arch.input_dim, self.arch.classes)?;
        if gamma.is_nan() || gamma < 0.0 {
            return Err(Error::contract(format!("gamma must be >= 0, got {gamma}")));
        }
        let (adapter, w1, w2) = self.effective_weights(theta)?;

        let trace = self.trace(&w1, &w2, &batch.x)?;
        let (ce, dlogits) = cross_entropy_grad(&trace.logits, &batch.y);
        let dz = matmul(&dlogits, &self.backbone.w_head)?;
        let mut grad = self.adapter_backward(&adapter, &w2, &batch.x, &trace, &dz)?;

        let mut mse = 0.0;
        if gamma > 0.0 {
            let d = distill.ok_or_else(|| {
                Error::contract("gamma > 0 requires memory inputs and embedding targets")
            })?;
            if d.inputs.rows() == 0 {
                return Err(Error::contract("distillation batch is empty"));
            }
            let e = self.arch.embed;
            if d.targets.shape() != (d.inputs.rows(), e) {
                return Err(Error::dims(
                    "loss_and_grad targets",
                    format!("({}, {e})", d.inputs.rows()),
                    format!("{:?}", d.targets.shape()),
                ));
            }
            let mtrace = self.trace(&w1, &w2, d.inputs)?;
            let diff = mtrace.z.sub(d.targets)?;
            let count = diff.as_slice().len() as f64;
            mse = diff.frobenius_sq() / count;
            let dzm = diff.scale(2.0 * gamma / count);
            let gm = self.adapter_backward(&adapter, &w2, d.inputs, &mtrace, &dzm)?;
            for (g, v) in grad.iter_mut().zip(gm) {
                *g += v;
            }
        }

        let total = ce + gamma * mse;
        if !total.is_finite() {
            return Err(Error::NonFinite("loss".into()));
        }
        Ok((
            LossParts {
                total,
                cross_entropy: ce,
                mse,
            },
            ParamVector::new(grad),
        ))
    }

    /// Backpropagates `dz` (gradient w.r.t. the embedding) to the adapter
    /// factors, in flattened layout order.
    fn adapter_backward(
        &self,
        adapter: &AdapterParams,
        w2: &Matrix,
        x: &Matrix,
        trace: &Trace,
        dz: &Matrix,
    ) -> Result<Vec<f64>> {
        let s = self.arch.scaling();
        let dw2 = matmul_tn(dz, &trace.h1)?;
        let mut dpre1 = matmul(dz, w2)?;
        relu_mask(&mut dpre1, &trace.pre1);
        let dw1 = matmul_tn(&dpre1, x)?;

        let da1 = matmul_tn(&adapter.b1, &dw1)?.scale(s);
        let db1 = matmul_nt(&dw1, &adapter.a1)?.scale(s);
        let da2 = matmul_tn(&adapter.b2, &dw2)?.scale(s);
        let db2 = matmul_nt(&dw2, &adapter.a2)?.scale(s);

        let mut out = Vec::with_capacity(self.arch.adapter_len());
        for m in [&da1, &db1, &da2, &db2] {
            out.extend_from_slice(m.as_slice());
        }
        Ok(out)
    }

    /// Fraction of rows whose argmax logit (lowest index on ties) equals the
    /// label.
    pub fn predict_accuracy(&self, theta: &ParamVector, batch: &Batch) -> Result<f64> {
        batch.validate(self.arch.input_dim, self.arch.classes)?;
        let logits = self.forward(theta, &batch.x)?.logits;
        Ok(accuracy_from_logits(&logits, &batch.y))
    }
}

/// Gradient of mean cross-entropy for the full backbone (no adapters), in
/// the flat layout of [`BackboneParams::flatten`].
pub fn backbone_loss_and_grad(
    arch: &Arch,
    backbone: &BackboneParams,
    batch: &Batch,
) -> Result<(f64, Vec<f64>)> {
    batch.validate(arch.input_dim, arch.classes)?;
    let net = AdaptedNet {
        arch: *arch,
        backbone: backbone.clone(),
    };
    let trace = net.trace(&backbone.w1, &backbone.w2, &batch.x)?;
    let (ce, dlogits) = cross_entropy_grad(&trace.logits, &batch.y);
    if !ce.is_finite() {
        return Err(Error::NonFinite("backbone loss".into()));
    }
    let dw_head = matmul_tn(&dlogits, &trace.z)?;
    let db_head = dlogits.column_sums();
    let dz = matmul(&dlogits, &backbone.w_head)?;
    let dw2 = matmul_tn(&dz, &trace.h1)?;
    let db2 = dz.column_sums();
    let mut dpre1 = matmul(&dz, &backbone.w2)?;
    relu_mask(&mut dpre1, &trace.pre1);
    let dw1 = matmul_tn(&dpre1, &batch.x)?;
    let db1 = dpre1.column_sums();

    let grad = BackboneParams {
        w1: dw1,
        b1: db1,
        w2: dw2,
        b2: db2,
        w_head: dw_head,
        b_head: db_head,
    };
    Ok((ce, grad.flatten()))
}

fn relu_mask(grad: &mut Matrix, pre: &Matrix) {
    for (g, p) in grad.as_mut_slice().iter_mut().zip(pre.as_slice()) {
        if *p <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Mean cross-entropy and its gradient with respect to the logits.
fn cross_entropy_grad(logits: &Matrix, labels: &[usize]) -> (f64, Matrix) {
    let n = labels.len() as f64;
    let mut grad = softmax_rows(logits);
    let mut loss = 0.0;
    for (r, &y) in labels.iter().enumerate() {
        let row = logits.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[y];
        let g = grad.row_mut(r);
        g[y] -= 1.0;
        for v in g.iter_mut() {
            *v /= n;
        }
    }
    (loss / n, grad)
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn accuracy_from_logits(logits: &Matrix, labels: &[usize]) -> f64 {
    let correct = labels
        .iter()
        .enumerate()
        .filter(|(r, &y)| argmax(logits.row(*r)) == y)
        .count();
    correct as f64 / labels.len() as f64
}
