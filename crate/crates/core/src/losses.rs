//! Baseline metric-learning losses with analytic gradients.
//!
//! Classification losses (softmax, normalized softmax and the margin family)
//! average over the batch. The hinge losses (triplet, center, triplet-center)
//! sum over samples. Hinges are treated as inactive exactly at the kink, so
//! the subgradient returned there is zero.

use serde::{Deserialize, Serialize};

use crate::batch::EmbeddingBatch;
use crate::error::{Error, Result};
use crate::numerics::{l2_norm, sq_dist, Matrix, DEGENERATE_NORM};

/// `u = cos θ` is clamped to this distance from ±1 before differentiating arccos.
pub const ARCCOS_CLAMP: f64 = 1e-7;

/// Final fully connected layer: column `j` of `weights` is the class-`j` vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierParams {
    /// `d × C`.
    pub weights: Matrix,
    pub biases: Vec<f64>,
}

impl ClassifierParams {
    pub fn new(weights: Matrix, biases: Vec<f64>) -> Result<Self> {
        if weights.cols() < 2 {
            return Err(Error::Config(format!(
                "classifier needs at least 2 classes, got {}",
                weights.cols()
            )));
        }
        if weights.rows() == 0 {
            return Err(Error::Config("classifier input dimension is 0".into()));
        }
        if biases.len() != weights.cols() {
            return Err(Error::Dimension {
                expected: weights.cols(),
                found: biases.len(),
            });
        }
        Ok(ClassifierParams { weights, biases })
    }

    pub fn zeros(dim: usize, classes: usize) -> Result<Self> {
        ClassifierParams::new(Matrix::zeros(dim, classes), vec![0.0; classes])
    }

    pub fn dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn num_classes(&self) -> usize {
        self.weights.cols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MarginFamily {
    /// `cos(mθ)` (SphereFace form).
    MultiplicativeAngular,
    /// `cos θ − m` (CosFace form).
    AdditiveCosine,
    /// `cos(θ + m)` (ArcFace form).
    AdditiveAngular,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginSpec {
    pub family: MarginFamily,
    pub m: f64,
    pub s: f64,
}

impl MarginSpec {
    pub fn new(family: MarginFamily, m: f64, s: f64) -> Result<Self> {
        let spec = MarginSpec { family, m, s };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s > 0.0) || !self.s.is_finite() {
            return Err(Error::Config(format!("scale s must be positive, got {}", self.s)));
        }
        if !self.m.is_finite() {
            return Err(Error::Config("margin must be finite".into()));
        }
        match self.family {
            MarginFamily::MultiplicativeAngular => {
                if self.m < 1.0 || self.m.fract() != 0.0 {
                    return Err(Error::Config(format!(
                        "multiplicative angular margin must be an integer >= 1, got {}",
                        self.m
                    )));
                }
            }
            MarginFamily::AdditiveCosine | MarginFamily::AdditiveAngular => {
                if self.m < 0.0 {
                    return Err(Error::Config(format!("margin must be >= 0, got {}", self.m)));
                }
            }
        }
        Ok(())
    }

    /// The margin value at which the loss reduces to normalized softmax.
    pub fn identity(family: MarginFamily, s: f64) -> Self {
        let m = match family {
            MarginFamily::MultiplicativeAngular => 1.0,
            _ => 0.0,
        };
        MarginSpec { family, m, s }
    }
}

/// Gradient with respect to the loss parameters, when it has any.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamGrad {
    Classifier { weights: Matrix, biases: Vec<f64> },
    Centers(Matrix),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossResult {
    pub value: f64,
    pub grad_embeddings: Matrix,
    pub grad_params: Option<ParamGrad>,
}

impl LossResult {
    pub(crate) fn zero(rows: usize, cols: usize) -> Self {
        LossResult {
            value: 0.0,
            grad_embeddings: Matrix::zeros(rows, cols),
            grad_params: None,
        }
    }
}

/// Mean cross-entropy over rows of `logits`; returns the value and `∂/∂logits`.
fn cross_entropy(logits: &Matrix, labels: &[usize]) -> (f64, Matrix) {
    let n = logits.rows();
    let inv_n = 1.0 / n as f64;
    let mut grad = Matrix::zeros(n, logits.cols());
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|z| (z - max).exp()).sum();
        let lse = max + sum.ln();
        total += lse - row[y];
        let g = grad.row_mut(i);
        for (gj, z) in g.iter_mut().zip(row) {
            *gj = (z - lse).exp() * inv_n;
        }
        g[y] -= inv_n;
    }
    (total * inv_n, grad)
}

/// Softmax cross-entropy on logits `x·W + b`.
pub fn softmax_loss(params: &ClassifierParams, batch: &EmbeddingBatch) -> Result<LossResult> {
    batch.check(params.dim(), params.num_classes())?;
    let mut logits = batch.embeddings.matmul(&params.weights)?;
    for i in 0..logits.rows() {
        for (z, b) in logits.row_mut(i).iter_mut().zip(&params.biases) {
            *z += b;
        }
    }
    let (value, dlogits) = cross_entropy(&logits, &batch.labels);
    let grad_embeddings = dlogits.matmul_t(&params.weights)?;
    let grad_w = batch.embeddings.t_matmul(&dlogits)?;
    let mut grad_b = vec![0.0; params.num_classes()];
    for row in dlogits.iter_rows() {
        for (gb, g) in grad_b.iter_mut().zip(row) {
            *gb += g;
        }
    }
    Ok(LossResult {
        value,
        grad_embeddings,
        grad_params: Some(ParamGrad::Classifier {
            weights: grad_w,
            biases: grad_b,
        }),
    })
}

/// Unit-normalized embeddings, normalized weight columns, their norms and the
/// cosine table `cos[i][j] = x̂_i · ŵ_j`.
struct CosineTable {
    x_hat: Matrix,
    x_norm: Vec<f64>,
    w_hat: Matrix, // C × d, one row per class
    w_norm: Vec<f64>,
    cos: Matrix,
}

impl CosineTable {
    fn build(params: &ClassifierParams, batch: &EmbeddingBatch) -> Result<Self> {
        batch.check(params.dim(), params.num_classes())?;
        let mut x_hat = batch.embeddings.clone();
        let mut x_norm = Vec::with_capacity(batch.len());
        for i in 0..x_hat.rows() {
            let n = l2_norm(x_hat.row(i));
            if !(n > DEGENERATE_NORM) {
                return Err(Error::DegenerateVector);
            }
            x_hat.row_mut(i).iter_mut().for_each(|v| *v /= n);
            x_norm.push(n);
        }
        let mut w_hat = params.weights.transpose();
        let mut w_norm = Vec::with_capacity(w_hat.rows());
        for j in 0..w_hat.rows() {
            let n = l2_norm(w_hat.row(j));
            if !(n > DEGENERATE_NORM) {
                return Err(Error::DegenerateVector);
            }
            w_hat.row_mut(j).iter_mut().for_each(|v| *v /= n);
            w_norm.push(n);
        }
        let cos = x_hat.matmul_t(&w_hat)?;
        Ok(CosineTable {
            x_hat,
            x_norm,
            w_hat,
            w_norm,
            cos,
        })
    }

    /// Chains `∂L/∂cos` through both normalizations.
    fn backprop(&self, dcos: &Matrix, biases: usize) -> LossResult {
        let (n, c) = dcos.shape();
        let d = self.x_hat.cols();
        let mut gx = Matrix::zeros(n, d);
        let mut gw_t = Matrix::zeros(c, d);
        for i in 0..n {
            let xh = self.x_hat.row(i);
            for j in 0..c {
                let g = dcos[(i, j)];
                if g == 0.0 {
                    continue;
                }
                let cos = self.cos[(i, j)];
                let wh = self.w_hat.row(j);
                let sx = g / self.x_norm[i];
                let sw = g / self.w_norm[j];
                let gxi = gx.row_mut(i);
                for k in 0..d {
                    gxi[k] += sx * (wh[k] - cos * xh[k]);
                }
                let gwj = gw_t.row_mut(j);
                for k in 0..d {
                    gwj[k] += sw * (xh[k] - cos * wh[k]);
                }
            }
        }
        LossResult {
            value: 0.0,
            grad_embeddings: gx,
            grad_params: Some(ParamGrad::Classifier {
                weights: gw_t.transpose(),
                biases: vec![0.0; biases],
            }),
        }
    }
}

/// Cross-entropy on `s · cos θ_j`; biases are ignored.
pub fn normalized_softmax_loss(
    params: &ClassifierParams,
    batch: &EmbeddingBatch,
    s: f64,
) -> Result<LossResult> {
    if !(s > 0.0) {
        return Err(Error::Config(format!("scale s must be positive, got {s}")));
    }
    let table = CosineTable::build(params, batch)?;
    let mut logits = table.cos.clone();
    logits.scale(s);
    let (value, mut dlogits) = cross_entropy(&logits, &batch.labels);
    dlogits.scale(s);
    let mut out = table.backprop(&dlogits, params.num_classes());
    out.value = value;
    Ok(out)
}

/// Target-logit margin `g(m, θ)` for `θ ∈ [0, π]`.
pub fn margin_function(spec: &MarginSpec, theta: f64) -> Result<f64> {
    if !(0.0..=std::f64::consts::PI).contains(&theta) {
        return Err(Error::Domain(format!("angle {theta} outside [0, pi]")));
    }
    Ok(match spec.family {
        MarginFamily::MultiplicativeAngular => (spec.m * theta).cos(),
        MarginFamily::AdditiveCosine => theta.cos() - spec.m,
        MarginFamily::AdditiveAngular => (theta + spec.m).cos(),
    })
}

/// `g` and `∂g/∂u` as functions of `u = cos θ`.
fn margin_of_cosine(spec: &MarginSpec, u: f64) -> (f64, f64) {
    match spec.family {
        MarginFamily::AdditiveCosine => (u - spec.m, 1.0),
        MarginFamily::MultiplicativeAngular | MarginFamily::AdditiveAngular => {
            let theta = u.clamp(-1.0, 1.0).acos();
            let uc = u.clamp(-1.0 + ARCCOS_CLAMP, 1.0 - ARCCOS_CLAMP);
            let theta_c = uc.acos();
            let sin_c = (1.0 - uc * uc).sqrt();
            if spec.family == MarginFamily::MultiplicativeAngular {
                let m = spec.m;
                ((m * theta).cos(), m * (m * theta_c).sin() / sin_c)
            } else {
                ((theta + spec.m).cos(), (theta_c + spec.m).sin() / sin_c)
            }
        }
    }
}

/// Margin-penalized normalized softmax, written as a positive cross-entropy.
pub fn margin_softmax_loss(
    params: &ClassifierParams,
    batch: &EmbeddingBatch,
    spec: &MarginSpec,
) -> Result<LossResult> {
    spec.validate()?;
    let table = CosineTable::build(params, batch)?;
    let mut logits = table.cos.clone();
    logits.scale(spec.s);
    let mut slopes = Vec::with_capacity(batch.len());
    for (i, &y) in batch.labels.iter().enumerate() {
        let (g, dg) = margin_of_cosine(spec, table.cos[(i, y)]);
        logits[(i, y)] = spec.s * g;
        slopes.push(dg);
    }
    let (value, mut dcos) = cross_entropy(&logits, &batch.labels);
    dcos.scale(spec.s);
    for (i, &y) in batch.labels.iter().enumerate() {
        dcos[(i, y)] *= slopes[i];
    }
    let mut out = table.backprop(&dcos, params.num_classes());
    out.value = value;
    Ok(out)
}

/// `max(0, m + ‖a−p‖² − ‖a−n‖²)`. Gradient rows are anchor, positive, negative.
pub fn triplet_loss(
    anchor: &[f64],
    positive: &[f64],
    negative: &[f64],
    margin: f64,
) -> Result<LossResult> {
    let d = anchor.len();
    for other in [positive, negative] {
        if other.len() != d {
            return Err(Error::Dimension {
                expected: d,
                found: other.len(),
            });
        }
    }
    if !(margin >= 0.0) {
        return Err(Error::Config(format!("triplet margin must be >= 0, got {margin}")));
    }
    let hinge = margin + sq_dist(anchor, positive) - sq_dist(anchor, negative);
    let mut out = LossResult::zero(3, d);
    if hinge > 0.0 {
        out.value = hinge;
        let g = &mut out.grad_embeddings;
        for k in 0..d {
            g[(0, k)] = 2.0 * (negative[k] - positive[k]);
            g[(1, k)] = -2.0 * (anchor[k] - positive[k]);
            g[(2, k)] = 2.0 * (anchor[k] - negative[k]);
        }
    }
    Ok(out)
}

/// Index triplet `(anchor, positive, negative)` into a batch.
pub type Triplet = (usize, usize, usize);

/// One triplet per anchor: the next same-class sample and the next
/// different-class sample, both searched cyclically from the anchor.
/// Anchors without a positive or a negative are skipped.
pub fn cyclic_triplets(labels: &[usize]) -> Vec<Triplet> {
    let n = labels.len();
    let mut out = Vec::new();
    for a in 0..n {
        let next = |same: bool| {
            (1..n)
                .map(|off| (a + off) % n)
                .find(|&j| (labels[j] == labels[a]) == same)
        };
        if let (Some(p), Some(q)) = (next(true), next(false)) {
            out.push((a, p, q));
        }
    }
    out
}

/// Sum of [`triplet_loss`] over index triplets into `batch`.
pub fn batch_triplet_loss(
    batch: &EmbeddingBatch,
    triplets: &[Triplet],
    margin: f64,
) -> Result<LossResult> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("embedding batch"));
    }
    let mut out = LossResult::zero(batch.len(), batch.dim());
    for &(a, p, n) in triplets {
        if a.max(p).max(n) >= batch.len() {
            return Err(Error::Config(format!("triplet ({a}, {p}, {n}) out of batch")));
        }
        let t = triplet_loss(batch.row(a), batch.row(p), batch.row(n), margin)?;
        out.value += t.value;
        for (row, idx) in [a, p, n].into_iter().enumerate() {
            let src = t.grad_embeddings.row(row);
            for (g, s) in out.grad_embeddings.row_mut(idx).iter_mut().zip(src) {
                *g += s;
            }
        }
    }
    Ok(out)
}

/// One learned center per class, moved by an exponential average of batch means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterSet {
    /// `C × d`.
    pub centers: Matrix,
    pub alpha: f64,
}

impl CenterSet {
    pub fn new(centers: Matrix, alpha: f64) -> Result<Self> {
        if !(alpha >= 0.0 && alpha <= 1.0) {
            return Err(Error::Config(format!("center rate must lie in [0, 1], got {alpha}")));
        }
        Ok(CenterSet { centers, alpha })
    }

    pub fn num_classes(&self) -> usize {
        self.centers.rows()
    }

    pub fn dim(&self) -> usize {
        self.centers.cols()
    }
}

/// `½ Σ ‖x_i − c_{y_i}‖²`.
pub fn center_loss(batch: &EmbeddingBatch, centers: &CenterSet) -> Result<LossResult> {
    batch.check(centers.dim(), centers.num_classes())?;
    let mut out = LossResult::zero(batch.len(), batch.dim());
    let mut grad_c = Matrix::zeros(centers.num_classes(), centers.dim());
    for (i, &y) in batch.labels.iter().enumerate() {
        let x = batch.row(i);
        let c = centers.centers.row(y);
        out.value += 0.5 * sq_dist(x, c);
        let gx = out.grad_embeddings.row_mut(i);
        for k in 0..x.len() {
            gx[k] = x[k] - c[k];
        }
        let gc = grad_c.row_mut(y);
        for k in 0..x.len() {
            gc[k] -= x[k] - c[k];
        }
    }
    out.grad_params = Some(ParamGrad::Centers(grad_c));
    Ok(out)
}

/// `c_k ← (1−α)·c_k + α·mean_k` for every class present in the batch.
pub fn update_centers(centers: &CenterSet, batch: &EmbeddingBatch) -> Result<CenterSet> {
    batch.check(centers.dim(), centers.num_classes())?;
    let (c, d) = centers.centers.shape();
    let mut sums = Matrix::zeros(c, d);
    let mut counts = vec![0usize; c];
    for (i, &y) in batch.labels.iter().enumerate() {
        counts[y] += 1;
        for (s, x) in sums.row_mut(y).iter_mut().zip(batch.row(i)) {
            *s += x;
        }
    }
    let mut next = centers.clone();
    let alpha = centers.alpha;
    for k in 0..c {
        if counts[k] == 0 {
            continue;
        }
        let inv = 1.0 / counts[k] as f64;
        let sum_row = sums.row(k).to_vec();
        for (ck, s) in next.centers.row_mut(k).iter_mut().zip(sum_row) {
            *ck = (1.0 - alpha) * *ck + alpha * s * inv;
        }
    }
    Ok(next)
}

/// `Σ max(0, D(f, c_y) + m − min_{j≠y} D(f, c_j))` with `D = ½‖·‖²`.
pub fn triplet_center_loss(
    batch: &EmbeddingBatch,
    centers: &CenterSet,
    margin: f64,
) -> Result<LossResult> {
    if centers.num_classes() < 2 {
        return Err(Error::Config("triplet-center loss needs at least 2 classes".into()));
    }
    batch.check(centers.dim(), centers.num_classes())?;
    let mut out = LossResult::zero(batch.len(), batch.dim());
    let mut grad_c = Matrix::zeros(centers.num_classes(), centers.dim());
    for (i, &y) in batch.labels.iter().enumerate() {
        let f = batch.row(i);
        let own = 0.5 * sq_dist(f, centers.centers.row(y));
        let mut nearest = (f64::INFINITY, usize::MAX);
        for j in (0..centers.num_classes()).filter(|&j| j != y) {
            let dj = 0.5 * sq_dist(f, centers.centers.row(j));
            if dj < nearest.0 {
                nearest = (dj, j);
            }
        }
        let hinge = own + margin - nearest.0;
        if hinge <= 0.0 {
            continue;
        }
        out.value += hinge;
        let j = nearest.1;
        let cy = centers.centers.row(y);
        let cj = centers.centers.row(j);
        let gf = out.grad_embeddings.row_mut(i);
        for k in 0..f.len() {
            gf[k] = cj[k] - cy[k];
        }
        for k in 0..f.len() {
            grad_c[(y, k)] -= f[k] - cy[k];
            grad_c[(j, k)] += f[k] - cj[k];
        }
    }
    out.grad_params = Some(ParamGrad::Centers(grad_c));
    Ok(out)
}
