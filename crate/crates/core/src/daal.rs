//! Density-aware adaptive line loss.
//!
//! Every class owns a line segment `A_k–B_k` in embedding space. Each
//! training step measures the batch centroid `c_k` and spread `σ_k` of each
//! class, places target vertices at `c_k ∓ η·σ_k·v̂_k`, and moves the stored
//! vertices toward them with an exponential moving average. The loss pulls
//! embeddings onto their own class segment and pushes them at least `δ` away
//! from every other class segment.
//!
//! Vertices are not trained by gradient: within a step they are constants
//! and only [`ema_update`] moves them.

use serde::{Deserialize, Serialize};

use crate::batch::EmbeddingBatch;
use crate::error::{Error, Result};
use crate::losses::{LossResult, ParamGrad};
use crate::numerics::{l2_norm, sample_standard_normal, sq_dist, Matrix, RngState};

/// Segments shorter than this are treated as a single point.
pub const DEGENERATE_LENGTH: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineSegment {
    pub class_id: usize,
    /// Inner vertex.
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    /// Outer vertex.
    #[serde(rename = "B")]
    pub b: Vec<f64>,
    /// Unit direction, kept for when `A = B`.
    pub v_hat: Vec<f64>,
}

impl LineSegment {
    pub fn length(&self) -> f64 {
        sq_dist(&self.a, &self.b).sqrt()
    }

    /// `normalize(B − A)`, or the stored direction for a degenerate segment.
    pub fn direction(&self) -> Vec<f64> {
        let diff: Vec<f64> = self.b.iter().zip(&self.a).map(|(b, a)| b - a).collect();
        let len = l2_norm(&diff);
        if len < DEGENERATE_LENGTH {
            self.v_hat.clone()
        } else {
            diff.into_iter().map(|v| v / len).collect()
        }
    }
}

/// Per-class segment prototypes; index `k` holds class `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineSegmentSet {
    pub segments: Vec<LineSegment>,
}

impl LineSegmentSet {
    pub fn num_classes(&self) -> usize {
        self.segments.len()
    }

    pub fn dim(&self) -> usize {
        self.segments.first().map_or(0, |s| s.a.len())
    }

    pub fn get(&self, class: usize) -> &LineSegment {
        &self.segments[class]
    }

    /// Checks ids, dimensions and unit directions, e.g. after loading a file.
    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if self.segments.is_empty() || d == 0 {
            return Err(Error::EmptyInput("segment set"));
        }
        for (k, s) in self.segments.iter().enumerate() {
            if s.class_id != k {
                return Err(Error::Config(format!("segment {k} has class_id {}", s.class_id)));
            }
            for v in [&s.a, &s.b, &s.v_hat] {
                if v.len() != d {
                    return Err(Error::Dimension { expected: d, found: v.len() });
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Config(format!("segment {k} has non-finite entries")));
                }
            }
            if (l2_norm(&s.v_hat) - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!("segment {k} direction is not unit length")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let set: LineSegmentSet = serde_json::from_str(text)?;
        set.validate()?;
        Ok(set)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntraMode {
    /// Squared distance to the nearer of the two vertices.
    NearestVertex,
    /// Squared distance to the closed segment.
    #[default]
    Segment,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DaalConfig {
    /// Inter-class margin δ.
    pub delta: f64,
    /// EMA factor τ.
    pub tau: f64,
    /// Variance factor η.
    pub eta: f64,
    /// Weight of the inter-class hinge.
    pub lambda_inter: f64,
    /// Initial segment length.
    pub init_length: f64,
    pub intra_mode: IntraMode,
}

impl Default for DaalConfig {
    fn default() -> Self {
        DaalConfig {
            delta: 1.5,
            tau: 0.001,
            eta: 5.0,
            lambda_inter: 1.0,
            init_length: 1.0,
            intra_mode: IntraMode::Segment,
        }
    }
}

impl DaalConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("delta", self.delta),
            ("eta", self.eta),
            ("lambda_inter", self.lambda_inter),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Config(format!("tau must lie in (0, 1], got {}", self.tau)));
        }
        if !(self.init_length > 0.0) || !self.init_length.is_finite() {
            return Err(Error::Config(format!(
                "init_length must be positive, got {}",
                self.init_length
            )));
        }
        Ok(())
    }
}

/// Weights of the classification and DAAL terms in the total objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TotalLossWeights {
    pub lambda_s: f64,
    pub lambda_daal: f64,
}

impl Default for TotalLossWeights {
    fn default() -> Self {
        TotalLossWeights {
            lambda_s: 1.0,
            lambda_daal: 0.01,
        }
    }
}

impl TotalLossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda_s", self.lambda_s), ("lambda_daal", self.lambda_daal)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// `A_k ~ N(0, I)`, `v̂_k = normalize(N(0, I))`, `B_k = A_k + L·v̂_k`.
pub fn init_segments(
    num_classes: usize,
    dim: usize,
    length: f64,
    rng: &mut RngState,
) -> Result<LineSegmentSet> {
    if num_classes == 0 || dim == 0 {
        return Err(Error::Config("segments need at least one class and dimension".into()));
    }
    if !(length > 0.0) {
        return Err(Error::Config(format!("segment length must be positive, got {length}")));
    }
    let mut segments = Vec::with_capacity(num_classes);
    for class_id in 0..num_classes {
        let a = sample_standard_normal(rng, dim)?;
        // Redraw on the (measure-zero) chance of a zero direction.
        let v_hat = loop {
            let v = sample_standard_normal(rng, dim)?;
            if let Ok(u) = crate::numerics::normalize(&v) {
                break u;
            }
        };
        let b = a.iter().zip(&v_hat).map(|(a, v)| a + length * v).collect();
        segments.push(LineSegment { class_id, a, b, v_hat });
    }
    Ok(LineSegmentSet { segments })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassStats {
    /// `None` when the class is absent from the batch.
    pub centroid: Option<Vec<f64>>,
    /// Population variance: mean squared distance to the centroid.
    pub sigma_sq: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchClassStats {
    pub classes: Vec<ClassStats>,
}

pub fn batch_class_stats(batch: &EmbeddingBatch, num_classes: usize) -> Result<BatchClassStats> {
    if let Some(&label) = batch.labels.iter().find(|&&l| l >= num_classes) {
        return Err(Error::LabelOutOfRange { label, classes: num_classes });
    }
    let d = batch.dim();
    let mut sums = Matrix::zeros(num_classes, d);
    let mut counts = vec![0usize; num_classes];
    for (i, &y) in batch.labels.iter().enumerate() {
        counts[y] += 1;
        for (s, x) in sums.row_mut(y).iter_mut().zip(batch.row(i)) {
            *s += x;
        }
    }
    let centroids: Vec<Option<Vec<f64>>> = (0..num_classes)
        .map(|k| {
            (counts[k] > 0).then(|| {
                let inv = 1.0 / counts[k] as f64;
                sums.row(k).iter().map(|s| s * inv).collect()
            })
        })
        .collect();
    let mut spread = vec![0.0; num_classes];
    for (i, &y) in batch.labels.iter().enumerate() {
        if let Some(c) = &centroids[y] {
            spread[y] += sq_dist(batch.row(i), c);
        }
    }
    let classes = centroids
        .into_iter()
        .enumerate()
        .map(|(k, centroid)| ClassStats {
            sigma_sq: if counts[k] > 1 { spread[k] / counts[k] as f64 } else { 0.0 },
            centroid,
            count: counts[k],
        })
        .collect();
    Ok(BatchClassStats { classes })
}

#[derive(Debug, Clone, PartialEq)]
pub struct VertexTarget {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

/// `A*_k = c_k − η·σ_k·v̂_k`, `B*_k = c_k + η·σ_k·v̂_k` for every class
/// present in the batch.
pub fn target_vertices(
    stats: &BatchClassStats,
    segments: &LineSegmentSet,
    eta: f64,
) -> Result<Vec<Option<VertexTarget>>> {
    if stats.classes.len() != segments.num_classes() {
        return Err(Error::Dimension {
            expected: segments.num_classes(),
            found: stats.classes.len(),
        });
    }
    Ok(stats
        .classes
        .iter()
        .zip(&segments.segments)
        .map(|(st, seg)| {
            let c = st.centroid.as_ref()?;
            let half = eta * st.sigma_sq.sqrt();
            let dir = seg.direction();
            Some(VertexTarget {
                a: c.iter().zip(&dir).map(|(c, v)| c - half * v).collect(),
                b: c.iter().zip(&dir).map(|(c, v)| c + half * v).collect(),
            })
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentDistance {
    pub distance: f64,
    /// Position of the closest point along `A → B`, in `[0, 1]`.
    pub t: f64,
}

/// Closest point on segment `ab` to `e` and its parameter `t`.
fn closest_point(e: &[f64], a: &[f64], b: &[f64]) -> (Vec<f64>, f64) {
    let len_sq = sq_dist(a, b);
    if len_sq < DEGENERATE_LENGTH * DEGENERATE_LENGTH {
        return (a.to_vec(), 0.0);
    }
    let mut proj = 0.0;
    for k in 0..e.len() {
        proj += (e[k] - a[k]) * (b[k] - a[k]);
    }
    let t = (proj / len_sq).clamp(0.0, 1.0);
    let p = a.iter().zip(b).map(|(a, b)| a + t * (b - a)).collect();
    (p, t)
}

pub fn point_segment_distance(e: &[f64], a: &[f64], b: &[f64]) -> Result<SegmentDistance> {
    for v in [a, b] {
        if v.len() != e.len() {
            return Err(Error::Dimension { expected: e.len(), found: v.len() });
        }
    }
    let (p, t) = closest_point(e, a, b);
    Ok(SegmentDistance {
        distance: sq_dist(e, &p).sqrt(),
        t,
    })
}

fn check_segments(batch: &EmbeddingBatch, segments: &LineSegmentSet) -> Result<()> {
    batch.check(segments.dim(), segments.num_classes())
}

/// Mean squared distance of each embedding to its own class prototype.
pub fn intra_loss(
    batch: &EmbeddingBatch,
    segments: &LineSegmentSet,
    mode: IntraMode,
) -> Result<LossResult> {
    check_segments(batch, segments)?;
    let n = batch.len();
    let inv_n = 1.0 / n as f64;
    let mut out = LossResult::zero(n, batch.dim());
    for (i, &y) in batch.labels.iter().enumerate() {
        let e = batch.row(i);
        let seg = segments.get(y);
        let target = match mode {
            IntraMode::Segment => closest_point(e, &seg.a, &seg.b).0,
            IntraMode::NearestVertex => {
                if sq_dist(e, &seg.a) <= sq_dist(e, &seg.b) {
                    seg.a.clone()
                } else {
                    seg.b.clone()
                }
            }
        };
        out.value += sq_dist(e, &target);
        for ((g, x), p) in out.grad_embeddings.row_mut(i).iter_mut().zip(e).zip(&target) {
            *g = 2.0 * (x - p) * inv_n;
        }
    }
    out.value *= inv_n;
    Ok(out)
}

/// Mean hinge `max(0, δ − min_{j≠y} d(e, AB_j))`.
pub fn inter_loss(batch: &EmbeddingBatch, segments: &LineSegmentSet, delta: f64) -> Result<LossResult> {
    if segments.num_classes() < 2 {
        return Err(Error::Config("inter-class loss needs at least 2 classes".into()));
    }
    check_segments(batch, segments)?;
    let n = batch.len();
    let inv_n = 1.0 / n as f64;
    let mut out = LossResult::zero(n, batch.dim());
    for (i, &y) in batch.labels.iter().enumerate() {
        let e = batch.row(i);
        let mut nearest: Option<(f64, Vec<f64>)> = None;
        for (j, seg) in segments.segments.iter().enumerate() {
            if j == y {
                continue;
            }
            let (p, _) = closest_point(e, &seg.a, &seg.b);
            let dist = sq_dist(e, &p).sqrt();
            if nearest.as_ref().map_or(true, |(best, _)| dist < *best) {
                nearest = Some((dist, p));
            }
        }
        let (dist, p) = nearest.expect("at least one other class");
        let hinge = delta - dist;
        if hinge <= 0.0 {
            continue;
        }
        out.value += hinge;
        // The distance is not differentiable when e sits on the segment.
        if dist > 0.0 {
            let scale = -inv_n / dist;
            for ((g, x), q) in out.grad_embeddings.row_mut(i).iter_mut().zip(e).zip(&p) {
                *g = scale * (x - q);
            }
        }
    }
    out.value *= inv_n;
    Ok(out)
}

/// `intra + λ_inter · inter`.
pub fn daal_loss(batch: &EmbeddingBatch, segments: &LineSegmentSet, cfg: &DaalConfig) -> Result<LossResult> {
    let mut out = intra_loss(batch, segments, cfg.intra_mode)?;
    let inter = inter_loss(batch, segments, cfg.delta)?;
    out.value += cfg.lambda_inter * inter.value;
    out.grad_embeddings.add_scaled(&inter.grad_embeddings, cfg.lambda_inter)?;
    Ok(out)
}

/// `A ← τ·A* + (1−τ)·A` (likewise `B`) for classes with a target.
pub fn ema_update(
    segments: &LineSegmentSet,
    targets: &[Option<VertexTarget>],
    tau: f64,
) -> Result<LineSegmentSet> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::Config(format!("tau must lie in (0, 1], got {tau}")));
    }
    if targets.len() != segments.num_classes() {
        return Err(Error::Dimension {
            expected: segments.num_classes(),
            found: targets.len(),
        });
    }
    let mut next = segments.clone();
    for (seg, target) in next.segments.iter_mut().zip(targets) {
        let Some(target) = target else { continue };
        for (v, t) in seg.a.iter_mut().zip(&target.a) {
            *v = tau * t + (1.0 - tau) * *v;
        }
        for (v, t) in seg.b.iter_mut().zip(&target.b) {
            *v = tau * t + (1.0 - tau) * *v;
        }
        if seg.length() >= DEGENERATE_LENGTH {
            seg.v_hat = seg.direction();
        }
    }
    Ok(next)
}

/// One full vertex refresh from a batch: statistics, targets, EMA.
pub fn refresh_segments(
    segments: &LineSegmentSet,
    batch: &EmbeddingBatch,
    cfg: &DaalConfig,
) -> Result<LineSegmentSet> {
    let stats = batch_class_stats(batch, segments.num_classes())?;
    let targets = target_vertices(&stats, segments, cfg.eta)?;
    ema_update(segments, &targets, cfg.tau)
}

/// `λ_s·ζ_s + λ_daal·ζ_daal`, gradients combined with the same weights.
pub fn total_loss(
    softmax_part: &LossResult,
    daal_part: &LossResult,
    weights: &TotalLossWeights,
) -> Result<LossResult> {
    let mut grad = softmax_part.grad_embeddings.clone();
    grad.scale(weights.lambda_s);
    grad.add_scaled(&daal_part.grad_embeddings, weights.lambda_daal)?;
    let scaled = |p: &ParamGrad, w: f64| match p {
        ParamGrad::Classifier { weights, biases } => {
            let mut weights = weights.clone();
            weights.scale(w);
            ParamGrad::Classifier {
                weights,
                biases: biases.iter().map(|b| b * w).collect(),
            }
        }
        ParamGrad::Centers(c) => {
            let mut c = c.clone();
            c.scale(w);
            ParamGrad::Centers(c)
        }
    };
    let grad_params = match (&softmax_part.grad_params, &daal_part.grad_params) {
        (Some(p), None) => Some(scaled(p, weights.lambda_s)),
        (None, Some(p)) => Some(scaled(p, weights.lambda_daal)),
        (None, None) => None,
        (Some(_), Some(_)) => {
            return Err(Error::Config("both loss parts carry parameter gradients".into()))
        }
    };
    Ok(LossResult {
        value: weights.lambda_s * softmax_part.value + weights.lambda_daal * daal_part.value,
        grad_embeddings: grad,
        grad_params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::check_gradient;
    use proptest::prelude::*;

    fn seg(class_id: usize, a: &[f64], b: &[f64]) -> LineSegment {
        let diff: Vec<f64> = b.iter().zip(a).map(|(b, a)| b - a).collect();
        let v_hat = crate::numerics::normalize(&diff).unwrap_or_else(|_| {
            let mut v = vec![0.0; a.len()];
            v[0] = 1.0;
            v
        });
        LineSegment { class_id, a: a.to_vec(), b: b.to_vec(), v_hat }
    }

    fn batch(rows: &[Vec<f64>], labels: &[usize]) -> EmbeddingBatch {
        EmbeddingBatch::new(Matrix::from_rows(rows).unwrap(), labels.to_vec()).unwrap()
    }

    #[test]
    fn init_segments_have_length_l() {
        let mut rng = RngState::new(5);
        let set = init_segments(6, 4, 2.5, &mut rng).unwrap();
        for s in &set.segments {
            assert!((s.length() - 2.5).abs() < 1e-9);
            assert!((l2_norm(&s.v_hat) - 1.0).abs() < 1e-12);
        }
        assert_eq!(set, init_segments(6, 4, 2.5, &mut RngState::new(5)).unwrap());
        let line = init_segments(5, 1, 1.0, &mut RngState::new(9)).unwrap();
        for s in &line.segments {
            assert_eq!(s.v_hat[0].abs(), 1.0);
        }
        assert!(init_segments(2, 2, 0.0, &mut rng).is_err());
    }

    #[test]
    fn class_stats_examples() {
        let b = batch(
            &[vec![3.0, 4.0], vec![0.0, 0.0], vec![2.0, 0.0], vec![0.0, 0.0], vec![0.0, 4.0]],
            &[0, 1, 1, 2, 2],
        );
        let st = batch_class_stats(&b, 4).unwrap();
        assert_eq!(st.classes[0].centroid.as_deref(), Some(&[3.0, 4.0][..]));
        assert_eq!(st.classes[0].sigma_sq, 0.0);
        assert_eq!(st.classes[1].centroid.as_deref(), Some(&[1.0, 0.0][..]));
        assert_eq!(st.classes[1].sigma_sq, 1.0);
        assert_eq!(st.classes[2].centroid.as_deref(), Some(&[0.0, 2.0][..]));
        assert_eq!(st.classes[2].sigma_sq, 4.0);
        assert_eq!(st.classes[3].count, 0);
        assert!(st.classes[3].centroid.is_none());
    }

    #[test]
    fn target_vertex_examples() {
        let set = LineSegmentSet { segments: vec![seg(0, &[0.0, 0.0], &[3.0, 0.0])] };
        let mk = |sigma_sq: f64| BatchClassStats {
            classes: vec![ClassStats { centroid: Some(vec![0.0, 0.0]), sigma_sq, count: 4 }],
        };
        let collapsed = target_vertices(&mk(0.0), &set, 5.0).unwrap()[0].clone().unwrap();
        assert_eq!(collapsed.a, vec![0.0, 0.0]);
        assert_eq!(collapsed.b, vec![0.0, 0.0]);

        let t = target_vertices(&mk(0.04), &set, 5.0).unwrap()[0].clone().unwrap();
        assert!((t.a[0] + 1.0).abs() < 1e-15 && t.a[1] == 0.0);
        assert!((t.b[0] - 1.0).abs() < 1e-15 && t.b[1] == 0.0);

        let t2 = target_vertices(&mk(0.04), &set, 10.0).unwrap()[0].clone().unwrap();
        let len = |t: &VertexTarget| sq_dist(&t.a, &t.b).sqrt();
        assert!((len(&t2) - 2.0 * len(&t)).abs() < 1e-12);

        let absent = BatchClassStats { classes: vec![ClassStats { centroid: None, sigma_sq: 0.0, count: 0 }] };
        assert!(target_vertices(&absent, &set, 5.0).unwrap()[0].is_none());
    }

    #[test]
    fn degenerate_segment_uses_stored_direction() {
        let mut s = seg(0, &[1.0, 1.0], &[1.0, 1.0]);
        s.v_hat = vec![0.0, 1.0];
        let set = LineSegmentSet { segments: vec![s] };
        let stats = BatchClassStats {
            classes: vec![ClassStats { centroid: Some(vec![0.0, 0.0]), sigma_sq: 1.0, count: 3 }],
        };
        let t = target_vertices(&stats, &set, 1.0).unwrap()[0].clone().unwrap();
        assert_eq!(t.a, vec![0.0, -1.0]);
        assert_eq!(t.b, vec![0.0, 1.0]);
    }

    #[test]
    fn point_segment_examples() {
        let (a, b) = ([0.0, 0.0], [1.0, 0.0]);
        let r = point_segment_distance(&[0.5, 1.0], &a, &b).unwrap();
        assert_eq!((r.distance, r.t), (1.0, 0.5));
        let r = point_segment_distance(&[2.0, 0.0], &a, &b).unwrap();
        assert_eq!((r.distance, r.t), (1.0, 1.0));
        let r = point_segment_distance(&[-1.0, 1.0], &a, &b).unwrap();
        assert_eq!((r.distance, r.t), (2f64.sqrt(), 0.0));
        let r = point_segment_distance(&[3.0, 4.0], &a, &a).unwrap();
        assert_eq!((r.distance, r.t), (5.0, 0.0));
        assert!(point_segment_distance(&[0.0], &a, &b).is_err());
    }

    #[test]
    fn intra_examples() {
        let set = LineSegmentSet {
            segments: vec![seg(0, &[0.0, 0.0], &[2.0, 0.0]), seg(1, &[5.0, 5.0], &[5.0, 7.0])],
        };
        let at_a = batch(&[vec![0.0, 0.0], vec![5.0, 5.0]], &[0, 1]);
        for mode in [IntraMode::NearestVertex, IntraMode::Segment] {
            assert_eq!(intra_loss(&at_a, &set, mode).unwrap().value, 0.0);
        }
        let mid = batch(&[vec![1.0, 0.0]], &[0]);
        assert_eq!(intra_loss(&mid, &set, IntraMode::NearestVertex).unwrap().value, 1.0);
        assert_eq!(intra_loss(&mid, &set, IntraMode::Segment).unwrap().value, 0.0);

        let bad = batch(&[vec![1.0, 0.0]], &[2]);
        assert!(matches!(
            intra_loss(&bad, &set, IntraMode::Segment),
            Err(Error::LabelOutOfRange { .. })
        ));
    }

    #[test]
    fn vertex_tie_goes_to_a() {
        let set = LineSegmentSet { segments: vec![seg(0, &[0.0, 0.0], &[2.0, 0.0])] };
        let r = intra_loss(&batch(&[vec![1.0, 1.0]], &[0]), &set, IntraMode::NearestVertex).unwrap();
        // Gradient 2(e − A) points away from A.
        assert_eq!(r.grad_embeddings.row(0), &[2.0, 2.0]);
    }

    #[test]
    fn inter_examples() {
        let set = LineSegmentSet {
            segments: vec![seg(0, &[0.0, 0.0], &[1.0, 0.0]), seg(1, &[0.0, 5.0], &[1.0, 5.0])],
        };
        let far = batch(&[vec![0.5, 0.0], vec![0.5, 5.0]], &[0, 1]);
        assert_eq!(inter_loss(&far, &set, 1.5).unwrap().value, 0.0);
        let on_wrong = batch(&[vec![0.5, 5.0]], &[0]);
        let r = inter_loss(&on_wrong, &set, 1.5).unwrap();
        assert_eq!(r.value, 1.5);
        assert!(r.grad_embeddings.as_slice().iter().all(|&g| g == 0.0));

        let single = LineSegmentSet { segments: vec![seg(0, &[0.0, 0.0], &[1.0, 0.0])] };
        assert!(matches!(
            inter_loss(&batch(&[vec![0.0, 0.0]], &[0]), &single, 1.5),
            Err(Error::Config(_))
        ));
    }

    fn random_set(rng: &mut RngState, c: usize, d: usize) -> LineSegmentSet {
        init_segments(c, d, 1.5, rng).unwrap()
    }

    fn random_batch(rng: &mut RngState, n: usize, d: usize, c: usize) -> EmbeddingBatch {
        let data = sample_standard_normal(rng, n * d).unwrap();
        EmbeddingBatch::new(Matrix::from_vec(n, d, data).unwrap(), (0..n).map(|i| i % c).collect()).unwrap()
    }

    #[test]
    fn inter_matches_exhaustive_min() {
        let mut rng = RngState::new(12);
        let set = random_set(&mut rng, 3, 3);
        let b = random_batch(&mut rng, 5, 3, 3);
        let delta = 2.5;
        let mut expect = 0.0;
        for i in 0..5 {
            // Dense sampling of t is coarse, so the minimum uses the exact
            // projection formula written out independently per segment.
            let mut best = f64::INFINITY;
            for (j, s) in set.segments.iter().enumerate() {
                if j == b.labels[i] {
                    continue;
                }
                let e = b.row(i);
                let ab: Vec<f64> = (0..3).map(|k| s.b[k] - s.a[k]).collect();
                let t = ((0..3).map(|k| (e[k] - s.a[k]) * ab[k]).sum::<f64>()
                    / ab.iter().map(|v| v * v).sum::<f64>())
                .clamp(0.0, 1.0);
                let dist = (0..3)
                    .map(|k| (e[k] - s.a[k] - t * ab[k]).powi(2))
                    .sum::<f64>()
                    .sqrt();
                best = best.min(dist);
            }
            expect += (delta - best).max(0.0);
        }
        expect /= 5.0;
        let got = inter_loss(&b, &set, delta).unwrap().value;
        assert!(expect > 0.0);
        assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
    }

    #[test]
    fn daal_combines_components() {
        let mut rng = RngState::new(3);
        let set = random_set(&mut rng, 3, 4);
        let b = random_batch(&mut rng, 9, 4, 3);
        let mut cfg = DaalConfig { delta: 3.0, lambda_inter: 0.7, ..Default::default() };
        let intra = intra_loss(&b, &set, cfg.intra_mode).unwrap();
        let inter = inter_loss(&b, &set, cfg.delta).unwrap();
        let all = daal_loss(&b, &set, &cfg).unwrap();
        assert!((all.value - (intra.value + 0.7 * inter.value)).abs() < 1e-12);

        cfg.lambda_inter = 0.0;
        assert_eq!(daal_loss(&b, &set, &cfg).unwrap(), intra);
    }

    #[test]
    fn daal_zero_on_own_segments() {
        let set = LineSegmentSet {
            segments: vec![seg(0, &[0.0, 0.0], &[1.0, 0.0]), seg(1, &[0.0, 5.0], &[1.0, 5.0])],
        };
        let b = batch(&[vec![0.25, 0.0], vec![0.75, 5.0]], &[0, 1]);
        assert_eq!(daal_loss(&b, &set, &DaalConfig::default()).unwrap().value, 0.0);
    }

    #[test]
    fn ema_examples() {
        let set = LineSegmentSet { segments: vec![seg(0, &[0.0], &[1.0])] };
        let target = vec![Some(VertexTarget { a: vec![1.0], b: vec![3.0] })];
        let jumped = ema_update(&set, &target, 1.0).unwrap();
        assert_eq!(jumped.segments[0].a, vec![1.0]);
        assert_eq!(jumped.segments[0].b, vec![3.0]);
        let slow = ema_update(&set, &target, 0.001).unwrap();
        assert!((slow.segments[0].a[0] - 0.001).abs() < 1e-18);
        assert_eq!(ema_update(&set, &[None], 0.5).unwrap(), set);
        assert!(ema_update(&set, &target, 0.0).is_err());
    }

    #[test]
    fn ema_contracts_geometrically() {
        let set = LineSegmentSet { segments: vec![seg(0, &[0.0, 0.0], &[1.0, 0.0])] };
        let target = vec![Some(VertexTarget { a: vec![2.0, 1.0], b: vec![4.0, 1.0] })];
        let init = sq_dist(&set.segments[0].a, &target[0].as_ref().unwrap().a).sqrt();
        for tau in [0.001, 0.1, 0.5] {
            let mut cur = set.clone();
            for step in 1..=50 {
                cur = ema_update(&cur, &target, tau).unwrap();
                let res = sq_dist(&cur.segments[0].a, &target[0].as_ref().unwrap().a).sqrt();
                let expect = (1.0 - tau).powi(step) * init;
                assert!((res - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn total_loss_weights() {
        let mut rng = RngState::new(1);
        let set = random_set(&mut rng, 3, 2);
        let b = random_batch(&mut rng, 6, 2, 3);
        let params = crate::losses::ClassifierParams::new(
            Matrix::from_vec(2, 3, sample_standard_normal(&mut rng, 6).unwrap()).unwrap(),
            vec![0.0; 3],
        )
        .unwrap();
        let s = crate::losses::softmax_loss(&params, &b).unwrap();
        let d = daal_loss(&b, &set, &DaalConfig::default()).unwrap();
        let only_s = total_loss(&s, &d, &TotalLossWeights { lambda_s: 1.0, lambda_daal: 0.0 }).unwrap();
        assert_eq!(only_s.value, s.value);
        assert_eq!(only_s.grad_embeddings, s.grad_embeddings);
        let only_d = total_loss(&s, &d, &TotalLossWeights { lambda_s: 0.0, lambda_daal: 1.0 }).unwrap();
        assert_eq!(only_d.value, d.value);
        let def = total_loss(&s, &d, &TotalLossWeights::default()).unwrap();
        assert!((def.value - (s.value + 0.01 * d.value)).abs() < 1e-15);
    }

    #[test]
    fn segment_json_roundtrip() {
        let set = random_set(&mut RngState::new(8), 3, 4);
        let text = set.to_json().unwrap();
        assert!(text.contains("\"class_id\"") && text.contains("\"v_hat\""));
        let back = LineSegmentSet::from_json(&text).unwrap();
        assert_eq!(back, set);
        assert_eq!(back.to_json().unwrap(), text);
    }

    #[test]
    fn daal_gradient_matches_finite_differences() {
        let mut rng = RngState::new(44);
        let set = random_set(&mut rng, 3, 3);
        let b = random_batch(&mut rng, 6, 3, 3);
        for mode in [IntraMode::Segment, IntraMode::NearestVertex] {
            let cfg = DaalConfig { delta: 2.0, intra_mode: mode, ..Default::default() };
            let r = daal_loss(&b, &set, &cfg).unwrap();
            let check = check_gradient(b.embeddings.as_slice(), r.grad_embeddings.as_slice(), |x| {
                let mut bb = b.clone();
                bb.embeddings.as_mut_slice().copy_from_slice(x);
                daal_loss(&bb, &set, &cfg).unwrap().value
            });
            assert!(check.max_rel_error < 1e-6, "{mode:?}: {check:?}");
        }
    }

    proptest! {
        #[test]
        fn distance_swap_symmetric(seed in any::<u64>(), d in 1usize..6) {
            let mut rng = RngState::new(seed);
            let e = sample_standard_normal(&mut rng, d).unwrap();
            let a = sample_standard_normal(&mut rng, d).unwrap();
            let b = sample_standard_normal(&mut rng, d).unwrap();
            let fwd = point_segment_distance(&e, &a, &b).unwrap();
            let rev = point_segment_distance(&e, &b, &a).unwrap();
            prop_assert!((fwd.distance - rev.distance).abs() <= 1e-12);
            prop_assert!((fwd.t - (1.0 - rev.t)).abs() <= 1e-12);
            let to_a = sq_dist(&e, &a).sqrt();
            let to_b = sq_dist(&e, &b).sqrt();
            prop_assert!(fwd.distance <= to_a.min(to_b) + 1e-12);
        }

        #[test]
        fn segment_intra_below_vertex_intra(seed in any::<u64>()) {
            let mut rng = RngState::new(seed);
            let set = random_set(&mut rng, 3, 3);
            let b = random_batch(&mut rng, 7, 3, 3);
            let s = intra_loss(&b, &set, IntraMode::Segment).unwrap().value;
            let v = intra_loss(&b, &set, IntraMode::NearestVertex).unwrap().value;
            prop_assert!(s <= v + 1e-12);
        }
    }
}
