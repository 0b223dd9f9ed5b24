//! Browser bindings for the DAAL workbench: a point-to-segment distance
//! field, margin-function curves, and a small 2-D trainer to step by hand.

use daal_core::daal::point_segment_distance;
use daal_core::data::{generate_multimodal, LabeledDataset, SyntheticSpec};
use daal_core::losses::{margin_function, MarginFamily, MarginSpec};
use daal_core::metrics::{kmeans, nmi, Partition};
use daal_core::model::{LossKind, NetworkSpec, TrainConfig, Trainer};
use wasm_bindgen::prelude::*;

fn js(err: daal_core::Error) -> JsError {
    JsError::new(&err.to_string())
}

/// Distance from every pixel center of a `width × height` grid over
/// `[x_min, x_max] × [y_min, y_max]` to the segment A–B. Row-major, top row
/// at `y_max`.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn distance_field(
    ax: f64,
    ay: f64,
    bx: f64,
    by: f64,
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
    width: usize,
    height: usize,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(width * height);
    for r in 0..height {
        let y = y_max - (r as f64 + 0.5) / height as f64 * (y_max - y_min);
        for c in 0..width {
            let x = x_min + (c as f64 + 0.5) / width as f64 * (x_max - x_min);
            let d = point_segment_distance(&[x, y], &[ax, ay], &[bx, by]).expect("2-D inputs");
            out.push(d.distance);
        }
    }
    out
}

fn curves(sphere_m: f64, cos_m: f64, arc_m: f64, samples: usize) -> daal_core::Result<Vec<f64>> {
    let specs = [
        MarginSpec::new(MarginFamily::MultiplicativeAngular, sphere_m, 1.0)?,
        MarginSpec::new(MarginFamily::AdditiveCosine, cos_m, 1.0)?,
        MarginSpec::new(MarginFamily::AdditiveAngular, arc_m, 1.0)?,
    ];
    let n = samples.max(2);
    let thetas: Vec<f64> = (0..n).map(|i| std::f64::consts::PI * i as f64 / (n - 1) as f64).collect();
    let mut out = thetas.clone();
    out.extend(thetas.iter().map(|t| t.cos()));
    for spec in &specs {
        for &t in &thetas {
            out.push(margin_function(spec, t)?);
        }
    }
    Ok(out)
}

/// Five rows of `samples` values: θ over `[0, π]`, `cos θ`, then the target
/// logit under the multiplicative-angular, additive-cosine and
/// additive-angular margins.
#[wasm_bindgen]
pub fn margin_curves(sphere_m: f64, cos_m: f64, arc_m: f64, samples: usize) -> Result<Vec<f64>, JsError> {
    curves(sphere_m, cos_m, arc_m, samples).map_err(js)
}

/// A synthetic multi-modal dataset and a network with a 2-D embedding,
/// trained one epoch at a time.
#[wasm_bindgen]
pub struct Playground {
    data: LabeledDataset,
    trainer: Trainer,
    seed: u64,
}

impl Playground {
    fn build(seed: u64, classes: usize, modes: usize, daal: bool, lambda_daal: f64, tau: f64) -> daal_core::Result<Self> {
        let data = generate_multimodal(&SyntheticSpec {
            num_classes: classes,
            modes_per_class: modes,
            samples_per_class: 60,
            input_dim: 8,
            seed,
            ..SyntheticSpec::default()
        })?;
        let spec = NetworkSpec {
            hidden_dims: vec![32, 16],
            dropout_rates: vec![0.1, 0.1],
            ..NetworkSpec::desk(8, 2, classes)
        };
        let mut cfg = TrainConfig {
            seed,
            batch_size: 32,
            loss: if daal { LossKind::SoftmaxDaal } else { LossKind::Softmax },
            ..TrainConfig::default()
        };
        cfg.weights.lambda_daal = lambda_daal;
        cfg.daal.tau = tau;
        let trainer = Trainer::new(&spec, &data, &cfg)?;
        Ok(Playground { data, trainer, seed })
    }

    fn advance(&mut self, epochs: usize) -> daal_core::Result<f64> {
        let mut last = f64::NAN;
        for _ in 0..epochs {
            last = self.trainer.run_epoch(&self.data)?.total;
        }
        Ok(last)
    }

    fn embedded(&self) -> daal_core::Result<daal_core::Matrix> {
        self.trainer.network().embed(&self.data.features)
    }
}

#[wasm_bindgen]
impl Playground {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, classes: usize, modes: usize, daal: bool, lambda_daal: f64, tau: f64) -> Result<Playground, JsError> {
        Playground::build(seed as u64, classes, modes, daal, lambda_daal, tau).map_err(js)
    }

    /// Runs `epochs` epochs; returns the last epoch's mean total loss.
    pub fn step(&mut self, epochs: usize) -> Result<f64, JsError> {
        self.advance(epochs).map_err(js)
    }

    pub fn epoch(&self) -> usize {
        self.trainer.history().len()
    }

    /// Mean total loss per completed epoch.
    pub fn losses(&self) -> Vec<f64> {
        self.trainer.history().iter().map(|r| r.total).collect()
    }

    /// Eval-mode embeddings, `x0, y0, x1, y1, …`.
    pub fn embeddings(&self) -> Result<Vec<f64>, JsError> {
        Ok(self.embedded().map_err(js)?.into_vec())
    }

    pub fn labels(&self) -> Vec<u32> {
        self.data.labels.iter().map(|&l| l as u32).collect()
    }

    /// `ax, ay, bx, by` per class; empty when training without DAAL.
    pub fn segments(&self) -> Vec<f64> {
        self.trainer
            .segments()
            .map(|set| set.segments.iter().flat_map(|s| [s.a[0], s.a[1], s.b[0], s.b[1]]).collect())
            .unwrap_or_default()
    }

    /// NMI of a k-means clustering of the current embeddings.
    pub fn nmi(&self) -> Result<f64, JsError> {
        let e = self.embedded().map_err(js)?;
        let fit = kmeans(&e, self.data.num_classes, 4, 100, self.seed).map_err(js)?;
        nmi(&fit.partition, &Partition::from_labels(&self.data.labels)).map_err(js)
    }
}
