//! Central finite-difference checks of every analytic loss gradient.
//!
//! The error of one check is `‖g − ĝ‖₂ / max(‖g‖₂, ‖ĝ‖₂, 1e-8)` over the
//! whole flattened gradient, where `g` is analytic and `ĝ` numeric.
//! Suites draw random instances and reject those within
//! [`KINK_CLEARANCE`] of a hinge, a clamp boundary or a min/argmin tie,
//! where the loss is not differentiable.

use serde::Serialize;

use crate::batch::EmbeddingBatch;
use crate::daal::{self, DaalConfig, IntraMode, LineSegmentSet, TotalLossWeights};
use crate::error::{Error, Result};
use crate::losses::{self, CenterSet, ClassifierParams, LossResult, MarginFamily, MarginSpec, ParamGrad};
use crate::numerics::{sample_standard_normal, sq_dist, Matrix, RngState};

pub const FD_STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
pub const KINK_CLEARANCE: f64 = 1e-3;
pub const DEFAULT_POINTS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

/// Compares `analytic` with central differences of `f` around `x`.
pub fn check_gradient(x: &[f64], analytic: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> GradCheck {
    assert_eq!(x.len(), analytic.len(), "gradient length");
    let mut probe = x.to_vec();
    let mut numeric = Vec::with_capacity(x.len());
    for k in 0..x.len() {
        probe[k] = x[k] + FD_STEP;
        let up = f(&probe);
        probe[k] = x[k] - FD_STEP;
        let down = f(&probe);
        probe[k] = x[k];
        numeric.push((up - down) / (2.0 * FD_STEP));
    }
    relative_error(analytic, &numeric)
}

pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> GradCheck {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, n)| a - n).collect();
    let max_abs_error = diff.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let denom = norm(analytic).max(norm(numeric)).max(1e-8);
    GradCheck {
        max_rel_error: norm(&diff) / denom,
        max_abs_error,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Suite {
    Softmax,
    NormalizedSoftmax,
    SphereFace,
    CosFace,
    ArcFace,
    Triplet,
    Center,
    TripletCenter,
    DaalIntra,
    DaalInter,
    Daal,
    Total,
}

impl Suite {
    pub const ALL: [Suite; 12] = [
        Suite::Softmax,
        Suite::NormalizedSoftmax,
        Suite::SphereFace,
        Suite::CosFace,
        Suite::ArcFace,
        Suite::Triplet,
        Suite::Center,
        Suite::TripletCenter,
        Suite::DaalIntra,
        Suite::DaalInter,
        Suite::Daal,
        Suite::Total,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Softmax => "softmax",
            Suite::NormalizedSoftmax => "normalized-softmax",
            Suite::SphereFace => "sphereface",
            Suite::CosFace => "cosface",
            Suite::ArcFace => "arcface",
            Suite::Triplet => "triplet",
            Suite::Center => "center",
            Suite::TripletCenter => "triplet-center",
            Suite::DaalIntra => "daal-intra",
            Suite::DaalInter => "daal-inter",
            Suite::Daal => "daal",
            Suite::Total => "total",
        }
    }

    pub fn from_name(name: &str) -> Result<Suite> {
        Suite::ALL
            .into_iter()
            .find(|s| s.name() == name)
            .ok_or_else(|| Error::Config(format!("unknown loss '{name}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub loss: String,
    pub points: usize,
    pub max_rel_error: f64,
    pub passed: bool,
}

const N: usize = 6;
const D: usize = 4;
const C: usize = 3;

fn normal_matrix(rng: &mut RngState, rows: usize, cols: usize, scale: f64) -> Matrix {
    let mut m = Matrix::from_vec(rows, cols, sample_standard_normal(rng, rows * cols).unwrap()).unwrap();
    m.scale(scale);
    m
}

fn normal_batch(rng: &mut RngState, scale: f64) -> EmbeddingBatch {
    EmbeddingBatch::new(normal_matrix(rng, N, D, scale), (0..N).map(|i| i % C).collect()).unwrap()
}

fn classifier(rng: &mut RngState) -> ClassifierParams {
    let w = normal_matrix(rng, D, C, 1.0);
    let b = sample_standard_normal(rng, C).unwrap();
    ClassifierParams::new(w, b).unwrap()
}

/// Error over the embedding gradient and, when present, the parameter gradient.
fn check_classifier(
    params: &ClassifierParams,
    batch: &EmbeddingBatch,
    loss: impl Fn(&ClassifierParams, &EmbeddingBatch) -> LossResult,
) -> f64 {
    let r = loss(params, batch);
    let mut worst = check_gradient(batch.embeddings.as_slice(), r.grad_embeddings.as_slice(), |x| {
        let mut b = batch.clone();
        b.embeddings.as_mut_slice().copy_from_slice(x);
        loss(params, &b).value
    })
    .max_rel_error;
    if let Some(ParamGrad::Classifier { weights, biases }) = &r.grad_params {
        let mut flat = weights.as_slice().to_vec();
        flat.extend_from_slice(biases);
        let mut x0 = params.weights.as_slice().to_vec();
        x0.extend_from_slice(&params.biases);
        let wlen = weights.as_slice().len();
        let e = check_gradient(&x0, &flat, |x| {
            let mut p = params.clone();
            p.weights.as_mut_slice().copy_from_slice(&x[..wlen]);
            p.biases.copy_from_slice(&x[wlen..]);
            loss(&p, batch).value
        });
        worst = worst.max(e.max_rel_error);
    }
    worst
}

fn check_centers(
    centers: &CenterSet,
    batch: &EmbeddingBatch,
    loss: impl Fn(&CenterSet, &EmbeddingBatch) -> LossResult,
) -> f64 {
    let r = loss(centers, batch);
    let ex = check_gradient(batch.embeddings.as_slice(), r.grad_embeddings.as_slice(), |x| {
        let mut b = batch.clone();
        b.embeddings.as_mut_slice().copy_from_slice(x);
        loss(centers, &b).value
    });
    let Some(ParamGrad::Centers(gc)) = &r.grad_params else {
        return ex.max_rel_error;
    };
    let ec = check_gradient(centers.centers.as_slice(), gc.as_slice(), |x| {
        let mut c = centers.clone();
        c.centers.as_mut_slice().copy_from_slice(x);
        loss(&c, batch).value
    });
    ex.max_rel_error.max(ec.max_rel_error)
}

fn check_embeddings(batch: &EmbeddingBatch, loss: impl Fn(&EmbeddingBatch) -> LossResult) -> f64 {
    let r = loss(batch);
    check_gradient(batch.embeddings.as_slice(), r.grad_embeddings.as_slice(), |x| {
        let mut b = batch.clone();
        b.embeddings.as_mut_slice().copy_from_slice(x);
        loss(&b).value
    })
    .max_rel_error
}

/// Raw projection parameter (before clamping) of `e` onto line `a → b`.
fn raw_t(e: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let mut num = 0.0;
    for k in 0..e.len() {
        num += (e[k] - a[k]) * (b[k] - a[k]);
    }
    num / sq_dist(a, b)
}

fn seg_dist(e: &[f64], a: &[f64], b: &[f64]) -> f64 {
    daal::point_segment_distance(e, a, b).unwrap().distance
}

fn clear_of_clamp(t: f64) -> bool {
    t.abs() > KINK_CLEARANCE && (t - 1.0).abs() > KINK_CLEARANCE
}

fn intra_ok(batch: &EmbeddingBatch, set: &LineSegmentSet, mode: IntraMode) -> bool {
    (0..batch.len()).all(|i| {
        let s = set.get(batch.labels[i]);
        let e = batch.row(i);
        match mode {
            IntraMode::Segment => clear_of_clamp(raw_t(e, &s.a, &s.b)),
            IntraMode::NearestVertex => {
                (sq_dist(e, &s.a).sqrt() - sq_dist(e, &s.b).sqrt()).abs() > KINK_CLEARANCE
            }
        }
    })
}

fn inter_ok(batch: &EmbeddingBatch, set: &LineSegmentSet, delta: f64) -> bool {
    (0..batch.len()).all(|i| {
        let e = batch.row(i);
        let mut dists: Vec<(f64, usize)> = (0..set.num_classes())
            .filter(|&j| j != batch.labels[i])
            .map(|j| (seg_dist(e, &set.get(j).a, &set.get(j).b), j))
            .collect();
        dists.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (d0, j0) = dists[0];
        let gap_ok = dists.get(1).map_or(true, |d1| d1.0 - d0 > KINK_CLEARANCE);
        let s = set.get(j0);
        gap_ok
            && (delta - d0).abs() > KINK_CLEARANCE
            && d0 > KINK_CLEARANCE
            && clear_of_clamp(raw_t(e, &s.a, &s.b))
    })
}

/// Draws instances until `accept` holds; suites keep the rejection rate low.
fn draw<T>(rng: &mut RngState, mut make: impl FnMut(&mut RngState) -> T, accept: impl Fn(&T) -> bool) -> T {
    loop {
        let v = make(rng);
        if accept(&v) {
            return v;
        }
    }
}

fn segments(rng: &mut RngState) -> LineSegmentSet {
    daal::init_segments(C, D, 1.5, rng).unwrap()
}

fn one_point(suite: Suite, rng: &mut RngState) -> f64 {
    match suite {
        Suite::Softmax => {
            let (p, b) = (classifier(rng), normal_batch(rng, 1.0));
            check_classifier(&p, &b, |p, b| losses::softmax_loss(p, b).unwrap())
        }
        Suite::NormalizedSoftmax => {
            let (p, b) = (classifier(rng), normal_batch(rng, 1.0));
            check_classifier(&p, &b, |p, b| losses::normalized_softmax_loss(p, b, 8.0).unwrap())
        }
        Suite::SphereFace | Suite::CosFace | Suite::ArcFace => {
            let spec = match suite {
                Suite::SphereFace => MarginSpec::new(MarginFamily::MultiplicativeAngular, 2.0, 8.0),
                Suite::CosFace => MarginSpec::new(MarginFamily::AdditiveCosine, 0.35, 8.0),
                _ => MarginSpec::new(MarginFamily::AdditiveAngular, 0.5, 8.0),
            }
            .unwrap();
            let (p, b) = (classifier(rng), normal_batch(rng, 1.0));
            check_classifier(&p, &b, |p, b| losses::margin_softmax_loss(p, b, &spec).unwrap())
        }
        Suite::Triplet => {
            let margin = 1.0;
            let rows = draw(
                rng,
                |r| sample_standard_normal(r, 3 * D).unwrap(),
                |v| {
                    let (a, rest) = v.split_at(D);
                    let (p, n) = rest.split_at(D);
                    (margin + sq_dist(a, p) - sq_dist(a, n)).abs() > KINK_CLEARANCE
                },
            );
            let loss = |x: &[f64]| {
                losses::triplet_loss(&x[..D], &x[D..2 * D], &x[2 * D..], margin).unwrap()
            };
            let r = loss(&rows);
            check_gradient(&rows, r.grad_embeddings.as_slice(), |x| loss(x).value).max_rel_error
        }
        Suite::Center => {
            let centers = CenterSet::new(normal_matrix(rng, C, D, 1.0), 0.5).unwrap();
            let b = normal_batch(rng, 1.0);
            check_centers(&centers, &b, |c, b| losses::center_loss(b, c).unwrap())
        }
        Suite::TripletCenter => {
            let margin = 1.0;
            let (centers, b) = draw(
                rng,
                |r| {
                    (
                        CenterSet::new(normal_matrix(r, C, D, 1.0), 0.5).unwrap(),
                        normal_batch(r, 1.0),
                    )
                },
                |(c, b)| {
                    (0..b.len()).all(|i| {
                        let y = b.labels[i];
                        let own = 0.5 * sq_dist(b.row(i), c.centers.row(y));
                        let mut others: Vec<f64> = (0..C)
                            .filter(|&j| j != y)
                            .map(|j| 0.5 * sq_dist(b.row(i), c.centers.row(j)))
                            .collect();
                        others.sort_by(f64::total_cmp);
                        (own + margin - others[0]).abs() > KINK_CLEARANCE
                            && others[1] - others[0] > KINK_CLEARANCE
                    })
                },
            );
            check_centers(&centers, &b, |c, b| losses::triplet_center_loss(b, c, margin).unwrap())
        }
        Suite::DaalIntra => {
            let mode = if rng.below(2) == 0 { IntraMode::Segment } else { IntraMode::NearestVertex };
            let (set, b) = draw(rng, |r| (segments(r), normal_batch(r, 1.0)), |(s, b)| intra_ok(b, s, mode));
            check_embeddings(&b, |b| daal::intra_loss(b, &set, mode).unwrap())
        }
        Suite::DaalInter => {
            let delta = 1.5;
            let (set, b) = draw(rng, |r| (segments(r), normal_batch(r, 1.0)), |(s, b)| inter_ok(b, s, delta));
            check_embeddings(&b, |b| daal::inter_loss(b, &set, delta).unwrap())
        }
        Suite::Daal => {
            let cfg = DaalConfig::default();
            let (set, b) = draw(
                rng,
                |r| (segments(r), normal_batch(r, 1.0)),
                |(s, b)| intra_ok(b, s, cfg.intra_mode) && inter_ok(b, s, cfg.delta),
            );
            check_embeddings(&b, |b| daal::daal_loss(b, &set, &cfg).unwrap())
        }
        Suite::Total => {
            let cfg = DaalConfig::default();
            let weights = TotalLossWeights { lambda_s: 1.0, lambda_daal: 0.5 };
            let p = classifier(rng);
            let (set, b) = draw(
                rng,
                |r| (segments(r), normal_batch(r, 1.0)),
                |(s, b)| intra_ok(b, s, cfg.intra_mode) && inter_ok(b, s, cfg.delta),
            );
            check_classifier(&p, &b, |p, b| {
                let s = losses::softmax_loss(p, b).unwrap();
                let d = daal::daal_loss(b, &set, &cfg).unwrap();
                daal::total_loss(&s, &d, &weights).unwrap()
            })
        }
    }
}

/// Runs `points` independent checks of one loss.
pub fn run_suite(suite: Suite, seed: u64, points: usize) -> SuiteReport {
    let mut rng = RngState::new(seed ^ (suite as u64).wrapping_mul(0x2545_F491_4F6C_DD1D));
    let max_rel_error = (0..points).map(|_| one_point(suite, &mut rng)).fold(0.0, f64::max);
    SuiteReport {
        loss: suite.name().to_string(),
        points,
        max_rel_error,
        passed: max_rel_error < TOLERANCE,
    }
}
