//! Additive angular margin softmax with the margin and the log-likelihood
//! split between two mixed speakers.
//!
//! For an embedding `e` and class centers `W` (one column per speaker) the
//! angle to class `j` is `θ_j = arccos(⟨e, W_j⟩ / (‖e‖‖W_j‖))`. Mixing
//! speakers `a` and `b` with weight `λ` shifts `θ_a` by `λm` and `θ_b` by
//! `(1−λ)m`, and the loss is
//!
//! ```text
//! L = −[ λ·log softmax_a(s·cos θ̂) + (1−λ)·log softmax_b(s·cos θ̂) ]
//! ```
//!
//! with one shared shifted-angle vector in both softmax denominators. At
//! `λ = 1` this is the usual single-target AAM-softmax loss.
//!
//! Gradients are analytic. The shifted cosine is evaluated as
//! `cos θ·cos δ − sin θ·sin δ`, so the chain rule only needs
//! `∂cos(θ+δ)/∂cos θ = cos δ + cos θ·sin δ / sin θ`.

use ndarray::{Array1, Array2, ArrayView1, Axis, Zip};

use crate::error::{Error, Result};
use crate::mixup::SoftLabel;

/// Cosines are clamped this far inside `[-1, 1]` before taking angles.
pub const COS_CLAMP: f64 = 1e-7;

/// `D x N` matrix of class centers, one column per training speaker.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassCenters {
    w: Array2<f64>,
}

impl ClassCenters {
    pub fn new(w: Array2<f64>) -> Result<Self> {
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite class center entry".into()));
        }
        for (j, col) in w.columns().into_iter().enumerate() {
            if col.iter().all(|v| *v == 0.0) {
                return Err(Error::Degenerate(format!("class center {j} is the zero vector")));
            }
        }
        Ok(Self { w })
    }

    pub fn dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn n_classes(&self) -> usize {
        self.w.ncols()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.w
    }

    /// Raw mutable access for the optimizer. The zero-column invariant is
    /// only re-checked by [`cosines_and_angles`].
    pub fn matrix_mut(&mut self) -> &mut Array2<f64> {
        &mut self.w
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginConfig {
    /// Angular margin in radians.
    pub margin: f64,
    pub scale: f64,
}

impl MarginConfig {
    pub fn new(margin: f64, scale: f64) -> Result<Self> {
        if !(margin >= 0.0 && scale > 0.0 && margin.is_finite() && scale.is_finite()) {
            return Err(Error::InvalidArgument(format!("margin {margin} / scale {scale}")));
        }
        Ok(Self { margin, scale })
    }
}

impl Default for MarginConfig {
    fn default() -> Self {
        Self { margin: 0.2, scale: 30.0 }
    }
}

/// Which parts of the loss see the mixing weight. Disabling a part pins its
/// λ to 1, i.e. everything goes to the first label entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Mixing {
    pub margin: bool,
    pub loss: bool,
}

impl Mixing {
    pub const FULL: Mixing = Mixing { margin: true, loss: true };
    pub const NONE: Mixing = Mixing { margin: false, loss: false };
}

impl Default for Mixing {
    fn default() -> Self {
        Self::FULL
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    pub grad_e: Array1<f64>,
    pub grad_w: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchLossOutput {
    pub value: f64,
    pub grad_embeddings: Vec<Array1<f64>>,
    pub grad_w: Array2<f64>,
}

fn check_shapes(e: ArrayView1<f64>, w: &ClassCenters) -> Result<()> {
    if e.len() != w.dim() {
        return Err(Error::Shape(format!("embedding of size {} vs centers of size {}", e.len(), w.dim())));
    }
    Ok(())
}

struct Geometry {
    e_norm: f64,
    col_norms: Array1<f64>,
    /// Unclamped cosines.
    cos: Array1<f64>,
}

fn geometry(e: ArrayView1<f64>, w: &ClassCenters) -> Result<Geometry> {
    check_shapes(e, w)?;
    let e_norm = e.dot(&e).sqrt();
    if e_norm == 0.0 || !e_norm.is_finite() {
        return Err(Error::Degenerate("embedding has zero or non-finite norm".into()));
    }
    let col_norms = w.matrix().map_axis(Axis(0), |c| c.dot(&c).sqrt());
    if let Some(j) = col_norms.iter().position(|n| *n == 0.0) {
        return Err(Error::Degenerate(format!("class center {j} is the zero vector")));
    }
    let cos = e.dot(w.matrix()) / &col_norms / e_norm;
    Ok(Geometry { e_norm, col_norms, cos })
}

fn clamp_cos(c: f64) -> f64 {
    c.clamp(-1.0 + COS_CLAMP, 1.0 - COS_CLAMP)
}

/// Clamped cosines and the corresponding angles to every class center.
pub fn cosines_and_angles(e: ArrayView1<f64>, w: &ClassCenters) -> Result<(Array1<f64>, Array1<f64>)> {
    let g = geometry(e, w)?;
    let cos = g.cos.mapv(clamp_cos);
    let theta = cos.mapv(f64::acos);
    Ok((cos, theta))
}

/// Per-class angular shift: `λm` on `a`, `(1−λ)m` on `b`, `m` when `a == b`.
fn margin_shifts(n: usize, a: usize, b: usize, lambda: f64, m: f64) -> Array1<f64> {
    let mut d = Array1::zeros(n);
    if a == b {
        d[a] = m;
    } else {
        d[a] = lambda * m;
        d[b] = (1.0 - lambda) * m;
    }
    d
}

pub fn apply_mixed_margin(theta: &Array1<f64>, a: usize, b: usize, lambda: f64, m: f64) -> Array1<f64> {
    theta + &margin_shifts(theta.len(), a, b, lambda, m)
}

fn check_target(n: usize, a: usize, b: usize, lambda: f64) -> Result<()> {
    if a >= n || b >= n {
        return Err(Error::InvalidArgument(format!("class index ({a}, {b}) out of range for {n} classes")));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!("lambda {lambda} outside [0, 1]")));
    }
    Ok(())
}

pub fn margin_mixup_loss(
    e: ArrayView1<f64>,
    w: &ClassCenters,
    a: usize,
    b: usize,
    lambda: f64,
    cfg: MarginConfig,
) -> Result<LossOutput> {
    mixed_loss_with(e, w, a, b, lambda, cfg, Mixing::FULL)
}

/// Loss with the mixing weight optionally pinned to 1 in the margin and/or
/// in the log-likelihood combination.
pub fn mixed_loss_with(
    e: ArrayView1<f64>,
    w: &ClassCenters,
    a: usize,
    b: usize,
    lambda: f64,
    cfg: MarginConfig,
    mixing: Mixing,
) -> Result<LossOutput> {
    let n = w.n_classes();
    check_target(n, a, b, lambda)?;
    let g = geometry(e, w)?;

    let margin_lambda = if mixing.margin { lambda } else { 1.0 };
    let loss_lambda = if mixing.loss { lambda } else { 1.0 };
    let shifts = margin_shifts(n, a, b, margin_lambda, cfg.margin);

    // Shifted cosines and d cos(θ+δ) / d cos(raw).
    let mut logits = Array1::zeros(n);
    let mut dcos = Array1::zeros(n);
    for j in 0..n {
        let raw = g.cos[j];
        let c = clamp_cos(raw);
        let inside = if c == raw { 1.0 } else { 0.0 };
        let d = shifts[j];
        let (shifted, slope) = if d == 0.0 {
            (c, 1.0)
        } else {
            let sin_t = (1.0 - c * c).sqrt();
            let (sd, cd) = d.sin_cos();
            (c * cd - sin_t * sd, cd + c * sd / sin_t)
        };
        logits[j] = cfg.scale * shifted;
        dcos[j] = cfg.scale * slope * inside;
    }

    let max = logits.fold(f64::NEG_INFINITY, |m, &z| m.max(z));
    let sum_exp: f64 = logits.iter().map(|z| (z - max).exp()).sum();
    let lse = max + sum_exp.ln();

    let mut target = Array1::zeros(n);
    if a == b {
        target[a] = 1.0;
    } else {
        target[a] = loss_lambda;
        target[b] = 1.0 - loss_lambda;
    }
    let value = -target
        .iter()
        .zip(&logits)
        .map(|(t, z)| if *t == 0.0 { 0.0 } else { t * (z - lse) })
        .sum::<f64>();

    // dL/dz = softmax − target, then through the shifted cosine.
    let dl_dcos: Array1<f64> = logits
        .iter()
        .zip(&target)
        .zip(&dcos)
        .map(|((z, t), s)| ((z - lse).exp() - t) * s)
        .collect();

    // ∂cos_j/∂e   = W_j/(‖e‖‖W_j‖) − cos_j·e/‖e‖²
    // ∂cos_j/∂W_j = e/(‖e‖‖W_j‖) − cos_j·W_j/‖W_j‖²
    let wm = w.matrix();
    let coef = &dl_dcos / &g.col_norms / g.e_norm;
    let grad_e = wm.dot(&coef) - &e * (dl_dcos.dot(&g.cos) / (g.e_norm * g.e_norm));

    let mut grad_w = Array2::zeros(wm.raw_dim());
    Zip::from(grad_w.columns_mut())
        .and(wm.columns())
        .and(&coef)
        .and(&dl_dcos)
        .and(&g.cos)
        .and(&g.col_norms)
        .for_each(|mut gcol, wcol, &k, &dl, &c, &nw| {
            let r = dl * c / (nw * nw);
            Zip::from(&mut gcol).and(&e).and(&wcol).for_each(|g, &ei, &wi| {
                *g = k * ei - r * wi;
            });
        });

    Ok(LossOutput { value, grad_e, grad_w })
}

/// Mean of per-element losses over a batch of embeddings and soft labels.
pub fn batch_loss(
    embeddings: &[Array1<f64>],
    w: &ClassCenters,
    labels: &[SoftLabel],
    cfg: MarginConfig,
) -> Result<BatchLossOutput> {
    batch_loss_with(embeddings, w, labels, cfg, Mixing::FULL)
}

pub fn batch_loss_with(
    embeddings: &[Array1<f64>],
    w: &ClassCenters,
    labels: &[SoftLabel],
    cfg: MarginConfig,
    mixing: Mixing,
) -> Result<BatchLossOutput> {
    if embeddings.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if embeddings.len() != labels.len() {
        return Err(Error::Shape(format!("{} embeddings vs {} labels", embeddings.len(), labels.len())));
    }
    let scale = 1.0 / embeddings.len() as f64;
    let mut value = 0.0;
    let mut grad_w = Array2::zeros(w.matrix().raw_dim());
    let mut grad_embeddings = Vec::with_capacity(embeddings.len());
    for (e, label) in embeddings.iter().zip(labels) {
        let (a, b, lambda) = label.as_pair();
        let out = mixed_loss_with(e.view(), w, a, b, lambda, cfg, mixing)?;
        value += out.value;
        grad_w.scaled_add(scale, &out.grad_w);
        grad_embeddings.push(out.grad_e * scale);
    }
    Ok(BatchLossOutput { value: value * scale, grad_embeddings, grad_w })
}
