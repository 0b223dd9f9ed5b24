//! Dense embedding network: `[dense → swish → dropout]* → dense (embedding)
//! → dense (logits)`, with hand-written backpropagation and SGD with momentum.
//!
//! Dropout is inverted: kept activations are divided by the keep probability
//! during training so evaluation needs no rescaling.

use serde::{Deserialize, Serialize};

use crate::batch::EmbeddingBatch;
use crate::daal::{self, DaalConfig, LineSegmentSet, TotalLossWeights};
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::losses::{self, CenterSet, ClassifierParams, MarginFamily, MarginSpec, ParamGrad};
use crate::numerics::{Matrix, RngState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    #[default]
    Swish,
    /// Used by tests to make the network linear.
    Identity,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `x · sigmoid(x)`.
pub fn swish(x: f64) -> f64 {
    x * sigmoid(x)
}

pub fn swish_derivative(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Swish => swish(x),
            Activation::Identity => x,
        }
    }

    fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Swish => swish_derivative(x),
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub embedding_dim: usize,
    pub num_classes: usize,
    /// One rate per hidden layer.
    pub dropout_rates: Vec<f64>,
    #[serde(default)]
    pub activation: Activation,
}

impl NetworkSpec {
    /// Desk-scale defaults: two hidden layers of 64 and 32 units, dropout 0.2.
    pub fn desk(input_dim: usize, embedding_dim: usize, num_classes: usize) -> Self {
        NetworkSpec {
            input_dim,
            hidden_dims: vec![64, 32],
            embedding_dim,
            num_classes,
            dropout_rates: vec![0.2, 0.2],
            activation: Activation::Swish,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_dims.is_empty() {
            return Err(Error::Config("network needs at least one hidden layer".into()));
        }
        if self.input_dim == 0 || self.embedding_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::Config("all layer widths must be >= 1".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::Config(format!("need at least 2 classes, got {}", self.num_classes)));
        }
        if self.dropout_rates.len() != self.hidden_dims.len() {
            return Err(Error::Config(format!(
                "{} dropout rates for {} hidden layers",
                self.dropout_rates.len(),
                self.hidden_dims.len()
            )));
        }
        if let Some(r) = self.dropout_rates.iter().find(|r| !(0.0..1.0).contains(*r)) {
            return Err(Error::Config(format!("dropout rate {r} outside [0, 1)")));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every layer, hidden first, then embedding, then head.
    fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut widths = vec![self.input_dim];
        widths.extend(&self.hidden_dims);
        widths.push(self.embedding_dim);
        widths.push(self.num_classes);
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

/// `y = x·W + b` with `W` stored `fan_in × fan_out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weights: Matrix,
    pub biases: Vec<f64>,
}

impl Dense {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Dense {
            weights: Matrix::zeros(fan_in, fan_out),
            biases: vec![0.0; fan_out],
        }
    }

    /// He-style uniform init, `U(±√(6/fan_in))`, zero biases.
    fn init(fan_in: usize, fan_out: usize, rng: &mut RngState) -> Self {
        let bound = (6.0 / fan_in as f64).sqrt();
        let data = (0..fan_in * fan_out).map(|_| rng.uniform_range(-bound, bound)).collect();
        Dense {
            weights: Matrix::from_vec(fan_in, fan_out, data).expect("sized"),
            biases: vec![0.0; fan_out],
        }
    }

    fn forward(&self, x: &Matrix) -> Matrix {
        let mut z = x.matmul(&self.weights).expect("checked widths");
        for i in 0..z.rows() {
            for (v, b) in z.row_mut(i).iter_mut().zip(&self.biases) {
                *v += b;
            }
        }
        z
    }

    fn shape(&self) -> (usize, usize) {
        self.weights.shape()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Network parameters and optimizer momenta.
///
/// `layers` holds every hidden layer, then the embedding layer, then the
/// classification head.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub spec: NetworkSpec,
    pub layers: Vec<Dense>,
    momenta: Vec<Dense>,
    version: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkCheckpoint {
    spec: NetworkSpec,
    layers: Vec<Dense>,
}

impl NetworkState {
    pub fn init(spec: &NetworkSpec, rng: &mut RngState) -> Result<Self> {
        spec.validate()?;
        let shapes = spec.layer_shapes();
        let layers = shapes.iter().map(|&(i, o)| Dense::init(i, o, rng)).collect();
        let momenta = shapes.iter().map(|&(i, o)| Dense::zeros(i, o)).collect();
        Ok(NetworkState {
            spec: spec.clone(),
            layers,
            momenta,
            version: 0,
        })
    }

    /// Builds a state from explicit layers; momenta start at zero.
    pub fn from_layers(spec: &NetworkSpec, layers: Vec<Dense>) -> Result<Self> {
        spec.validate()?;
        let shapes = spec.layer_shapes();
        if layers.len() != shapes.len() {
            return Err(Error::Config(format!(
                "expected {} layers, found {}",
                shapes.len(),
                layers.len()
            )));
        }
        for (layer, &shape) in layers.iter().zip(&shapes) {
            if layer.shape() != shape || layer.biases.len() != shape.1 {
                return Err(Error::Shape { expected: shape, found: layer.shape() });
            }
            let finite = layer.weights.is_finite() && layer.biases.iter().all(|b| b.is_finite());
            if !finite {
                return Err(Error::Config("non-finite network parameter".into()));
            }
        }
        let momenta = shapes.iter().map(|&(i, o)| Dense::zeros(i, o)).collect();
        Ok(NetworkState {
            spec: spec.clone(),
            layers,
            momenta,
            version: 0,
        })
    }

    fn hidden_count(&self) -> usize {
        self.spec.hidden_dims.len()
    }

    /// The classification head as loss parameters.
    pub fn head(&self) -> ClassifierParams {
        let head = self.layers.last().expect("head layer");
        ClassifierParams {
            weights: head.weights.clone(),
            biases: head.biases.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let ckpt = NetworkCheckpoint {
            spec: self.spec.clone(),
            layers: self.layers.clone(),
        };
        Ok(serde_json::to_string_pretty(&ckpt)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: NetworkCheckpoint = serde_json::from_str(text)?;
        NetworkState::from_layers(&ckpt.spec, ckpt.layers)
    }

    /// Eval-mode embeddings of `x`.
    pub fn embed(&self, x: &Matrix) -> Result<Matrix> {
        let mut rng = RngState::new(0);
        Ok(forward(self, x, Mode::Eval, &mut rng)?.embeddings)
    }
}

/// Values saved by [`forward`] for [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    version: u64,
    /// Input of every layer (post-dropout for hidden outputs).
    inputs: Vec<Matrix>,
    /// Pre-activations of the hidden layers.
    pre_activations: Vec<Matrix>,
    /// Inverted-dropout multipliers per hidden layer (`None` when inactive).
    masks: Vec<Option<Matrix>>,
}

#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub embeddings: Matrix,
    pub logits: Matrix,
    pub cache: ForwardCache,
}

pub fn forward(state: &NetworkState, x: &Matrix, mode: Mode, rng: &mut RngState) -> Result<ForwardPass> {
    if x.cols() != state.spec.input_dim {
        return Err(Error::Dimension {
            expected: state.spec.input_dim,
            found: x.cols(),
        });
    }
    let act = state.spec.activation;
    let mut inputs = Vec::with_capacity(state.layers.len());
    let mut pre_activations = Vec::with_capacity(state.hidden_count());
    let mut masks = Vec::with_capacity(state.hidden_count());
    let mut h = x.clone();
    for (layer, &rate) in state.layers[..state.hidden_count()].iter().zip(&state.spec.dropout_rates) {
        let z = layer.forward(&h);
        let mut a = z.clone();
        a.as_mut_slice().iter_mut().for_each(|v| *v = act.apply(*v));
        let mask = (mode == Mode::Train && rate > 0.0).then(|| {
            let keep = 1.0 - rate;
            let mut m = Matrix::zeros(a.rows(), a.cols());
            for v in m.as_mut_slice() {
                *v = if rng.uniform() < keep { 1.0 / keep } else { 0.0 };
            }
            m
        });
        if let Some(m) = &mask {
            for (v, k) in a.as_mut_slice().iter_mut().zip(m.as_slice()) {
                *v *= k;
            }
        }
        inputs.push(std::mem::replace(&mut h, a));
        pre_activations.push(z);
        masks.push(mask);
    }
    let n = state.layers.len();
    let embeddings = state.layers[n - 2].forward(&h);
    inputs.push(h);
    let logits = state.layers[n - 1].forward(&embeddings);
    inputs.push(embeddings.clone());
    Ok(ForwardPass {
        embeddings,
        logits,
        cache: ForwardCache {
            version: state.version,
            inputs,
            pre_activations,
            masks,
        },
    })
}

/// Parameter gradients, aligned with [`NetworkState::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn zeros_like(state: &NetworkState) -> Self {
        Gradients {
            layers: state.layers.iter().map(|l| Dense::zeros(l.shape().0, l.shape().1)).collect(),
        }
    }

    /// Adds a loss's direct gradient on the classification head.
    pub fn add_head(&mut self, weights: &Matrix, biases: &[f64], scale: f64) -> Result<()> {
        let head = self.layers.last_mut().expect("head layer");
        head.weights.add_scaled(weights, scale)?;
        for (g, b) in head.biases.iter_mut().zip(biases) {
            *g += scale * b;
        }
        Ok(())
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(l.weights.as_slice());
            out.extend_from_slice(&l.biases);
        }
        out
    }
}

fn column_sums(m: &Matrix) -> Vec<f64> {
    let mut out = vec![0.0; m.cols()];
    for row in m.iter_rows() {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    out
}

/// Reverse pass combining gradients arriving at the embeddings and at the logits.
pub fn backward(
    state: &NetworkState,
    cache: &ForwardCache,
    grad_embeddings: &Matrix,
    grad_logits: &Matrix,
) -> Result<Gradients> {
    if cache.version != state.version || cache.inputs.len() != state.layers.len() {
        return Err(Error::Contract("forward cache does not match network state"));
    }
    let n = state.layers.len();
    let emb = &cache.inputs[n - 1];
    if grad_embeddings.shape() != emb.shape() {
        return Err(Error::Shape { expected: emb.shape(), found: grad_embeddings.shape() });
    }
    let logits_shape = (emb.rows(), state.spec.num_classes);
    if grad_logits.shape() != logits_shape {
        return Err(Error::Shape { expected: logits_shape, found: grad_logits.shape() });
    }
    let mut grads = Vec::with_capacity(n);
    let head = &state.layers[n - 1];
    grads.push(Dense {
        weights: emb.t_matmul(grad_logits)?,
        biases: column_sums(grad_logits),
    });
    let mut delta = grad_logits.matmul_t(&head.weights)?;
    delta.add_scaled(grad_embeddings, 1.0)?;

    // Embedding layer is linear.
    grads.push(Dense {
        weights: cache.inputs[n - 2].t_matmul(&delta)?,
        biases: column_sums(&delta),
    });
    let mut upstream = delta.matmul_t(&state.layers[n - 2].weights)?;

    let act = state.spec.activation;
    for l in (0..state.hidden_count()).rev() {
        let z = &cache.pre_activations[l];
        let mut dz = upstream;
        if let Some(m) = &cache.masks[l] {
            for (g, k) in dz.as_mut_slice().iter_mut().zip(m.as_slice()) {
                *g *= k;
            }
        }
        for (g, zv) in dz.as_mut_slice().iter_mut().zip(z.as_slice()) {
            *g *= act.derivative(*zv);
        }
        grads.push(Dense {
            weights: cache.inputs[l].t_matmul(&dz)?,
            biases: column_sums(&dz),
        });
        upstream = dz.matmul_t(&state.layers[l].weights)?;
    }
    grads.reverse();
    Ok(Gradients { layers: grads })
}

/// `v ← μ·v + g`, `θ ← θ − lr·v`.
pub fn sgd_step(state: &mut NetworkState, grads: &Gradients, lr: f64, momentum: f64) -> Result<()> {
    if grads.layers.len() != state.layers.len() {
        return Err(Error::Dimension {
            expected: state.layers.len(),
            found: grads.layers.len(),
        });
    }
    for ((layer, vel), g) in state.layers.iter_mut().zip(&mut state.momenta).zip(&grads.layers) {
        if g.shape() != layer.shape() {
            return Err(Error::Shape { expected: layer.shape(), found: g.shape() });
        }
        vel.weights.scale(momentum);
        vel.weights.add_scaled(&g.weights, 1.0)?;
        layer.weights.add_scaled(&vel.weights, -lr)?;
        for ((v, p), gb) in vel.biases.iter_mut().zip(&mut layer.biases).zip(&g.biases) {
            *v = momentum * *v + gb;
            *p -= lr * *v;
        }
    }
    state.version += 1;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    #[serde(rename = "softmax")]
    Softmax,
    #[serde(rename = "softmax+daal")]
    SoftmaxDaal,
    #[serde(rename = "normalized-softmax")]
    NormalizedSoftmax,
    #[serde(rename = "sphereface")]
    SphereFace,
    #[serde(rename = "cosface")]
    CosFace,
    #[serde(rename = "arcface")]
    ArcFace,
    /// Softmax plus weighted center loss.
    #[serde(rename = "center")]
    Center,
    /// Softmax plus weighted triplet-center loss.
    #[serde(rename = "triplet-center")]
    TripletCenter,
    /// Softmax plus weighted triplet loss on cyclic in-batch triplets.
    #[serde(rename = "triplet")]
    Triplet,
}

impl LossKind {
    pub const ALL: [LossKind; 9] = [
        LossKind::Softmax,
        LossKind::SoftmaxDaal,
        LossKind::NormalizedSoftmax,
        LossKind::SphereFace,
        LossKind::CosFace,
        LossKind::ArcFace,
        LossKind::Center,
        LossKind::TripletCenter,
        LossKind::Triplet,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Softmax => "softmax",
            LossKind::SoftmaxDaal => "softmax+daal",
            LossKind::NormalizedSoftmax => "normalized-softmax",
            LossKind::SphereFace => "sphereface",
            LossKind::CosFace => "cosface",
            LossKind::ArcFace => "arcface",
            LossKind::Center => "center",
            LossKind::TripletCenter => "triplet-center",
            LossKind::Triplet => "triplet",
        }
    }

    pub fn from_name(name: &str) -> Result<LossKind> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| Error::Config(format!("unknown loss '{name}'")))
    }

    pub fn uses_segments(self) -> bool {
        self == LossKind::SoftmaxDaal
    }

    pub fn uses_centers(self) -> bool {
        matches!(self, LossKind::Center | LossKind::TripletCenter)
    }
}

/// Settings of the non-DAAL losses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    /// Scale `s` of the normalized and margin softmax losses.
    pub scale: f64,
    pub sphereface_m: f64,
    pub cosface_m: f64,
    pub arcface_m: f64,
    pub triplet_margin: f64,
    pub triplet_center_margin: f64,
    pub center_alpha: f64,
    /// Weight of the center, triplet or triplet-center term next to softmax.
    pub aux_weight: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            scale: 16.0,
            sphereface_m: 2.0,
            cosface_m: 0.35,
            arcface_m: 0.5,
            triplet_margin: 1.0,
            triplet_center_margin: 1.0,
            center_alpha: 0.5,
            aux_weight: 0.01,
        }
    }
}

impl BaselineConfig {
    fn margin(&self, kind: LossKind) -> Option<MarginSpec> {
        let (family, m) = match kind {
            LossKind::SphereFace => (MarginFamily::MultiplicativeAngular, self.sphereface_m),
            LossKind::CosFace => (MarginFamily::AdditiveCosine, self.cosface_m),
            LossKind::ArcFace => (MarginFamily::AdditiveAngular, self.arcface_m),
            _ => return None,
        };
        Some(MarginSpec { family, m, s: self.scale })
    }

    pub fn validate(&self) -> Result<()> {
        for kind in [LossKind::SphereFace, LossKind::CosFace, LossKind::ArcFace] {
            self.margin(kind).expect("margin kind").validate()?;
        }
        let nonneg = [
            ("triplet_margin", self.triplet_margin),
            ("triplet_center_margin", self.triplet_center_margin),
            ("aux_weight", self.aux_weight),
        ];
        for (name, v) in nonneg {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.center_alpha) {
            return Err(Error::Config(format!("center_alpha {} outside [0, 1]", self.center_alpha)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub loss: LossKind,
    pub weights: TotalLossWeights,
    pub daal: DaalConfig,
    pub baseline: BaselineConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            momentum: 0.9,
            batch_size: 64,
            epochs: 30,
            seed: 1,
            loss: LossKind::SoftmaxDaal,
            weights: TotalLossWeights::default(),
            daal: DaalConfig::default(),
            baseline: BaselineConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        self.weights.validate()?;
        self.daal.validate()?;
        self.baseline.validate()
    }
}

/// Prototype state that evolves outside gradient descent.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AuxState {
    pub segments: Option<LineSegmentSet>,
    pub centers: Option<CenterSet>,
}

/// Loss terms and full parameter gradient for one batch.
#[derive(Debug, Clone)]
pub struct StepEval {
    pub total: f64,
    /// Classification term (softmax, normalized or margin softmax).
    pub softmax: f64,
    /// DAAL term, or the center / triplet / triplet-center term for baselines.
    pub daal: f64,
    pub embeddings: Matrix,
    pub grads: Gradients,
}

/// Forward, loss and backward for one batch against fixed prototypes.
///
/// Every classification loss returns its own head and embedding gradients,
/// so the logits inflow of [`backward`] stays zero here.
pub fn objective(
    state: &NetworkState,
    x: &Matrix,
    labels: &[usize],
    aux: &AuxState,
    cfg: &TrainConfig,
    mode: Mode,
    rng: &mut RngState,
) -> Result<StepEval> {
    let pass = forward(state, x, mode, rng)?;
    let batch = EmbeddingBatch::new(pass.embeddings, labels.to_vec())?;
    let head = state.head();

    let classification = match (cfg.loss, cfg.baseline.margin(cfg.loss)) {
        (_, Some(spec)) => losses::margin_softmax_loss(&head, &batch, &spec)?,
        (LossKind::NormalizedSoftmax, None) => {
            losses::normalized_softmax_loss(&head, &batch, cfg.baseline.scale)?
        }
        _ => losses::softmax_loss(&head, &batch)?,
    };
    let (aux_part, aux_weight) = match cfg.loss {
        LossKind::SoftmaxDaal => {
            let segs = aux.segments.as_ref().ok_or(Error::Contract("DAAL loss without segments"))?;
            (Some(daal::daal_loss(&batch, segs, &cfg.daal)?), cfg.weights.lambda_daal)
        }
        LossKind::Center | LossKind::TripletCenter => {
            let centers = aux.centers.as_ref().ok_or(Error::Contract("center loss without centers"))?;
            let part = if cfg.loss == LossKind::Center {
                losses::center_loss(&batch, centers)?
            } else {
                losses::triplet_center_loss(&batch, centers, cfg.baseline.triplet_center_margin)?
            };
            (Some(part), cfg.baseline.aux_weight)
        }
        LossKind::Triplet => {
            let triplets = losses::cyclic_triplets(labels);
            let part = losses::batch_triplet_loss(&batch, &triplets, cfg.baseline.triplet_margin)?;
            (Some(part), cfg.baseline.aux_weight)
        }
        _ => (None, 0.0),
    };

    let lambda_s = cfg.weights.lambda_s;
    let mut grad_embeddings = classification.grad_embeddings.clone();
    grad_embeddings.scale(lambda_s);
    let mut total = lambda_s * classification.value;
    let mut aux_value = 0.0;
    if let Some(part) = &aux_part {
        aux_value = part.value;
        total += aux_weight * part.value;
        grad_embeddings.add_scaled(&part.grad_embeddings, aux_weight)?;
    }

    let grad_logits = Matrix::zeros(batch.len(), state.spec.num_classes);
    let mut grads = backward(state, &pass.cache, &grad_embeddings, &grad_logits)?;
    if let Some(ParamGrad::Classifier { weights, biases }) = &classification.grad_params {
        grads.add_head(weights, biases, lambda_s)?;
    }
    Ok(StepEval {
        total,
        softmax: classification.value,
        daal: aux_value,
        embeddings: batch.embeddings,
        grads,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub total: f64,
    pub softmax: f64,
    pub daal: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: NetworkState,
    pub segments: Option<LineSegmentSet>,
    pub centers: Option<CenterSet>,
    pub history: Vec<EpochRecord>,
}

fn check_data(spec: &NetworkSpec, data: &LabeledDataset) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyInput("training set"));
    }
    if data.features.cols() != spec.input_dim {
        return Err(Error::Dimension { expected: spec.input_dim, found: data.features.cols() });
    }
    if let Some(&label) = data.labels.iter().find(|&&l| l >= spec.num_classes) {
        return Err(Error::LabelOutOfRange { label, classes: spec.num_classes });
    }
    Ok(())
}

/// Epoch-at-a-time training state.
///
/// Per step: forward and loss against the current prototypes, backward,
/// optimizer step, then prototype refresh from the embeddings of that same
/// forward pass.
#[derive(Debug, Clone)]
pub struct Trainer {
    cfg: TrainConfig,
    network: NetworkState,
    aux: AuxState,
    order_rng: RngState,
    dropout_rng: RngState,
    order: Vec<usize>,
    history: Vec<EpochRecord>,
}

impl Trainer {
    pub fn new(spec: &NetworkSpec, data: &LabeledDataset, cfg: &TrainConfig) -> Result<Self> {
        spec.validate()?;
        cfg.validate()?;
        check_data(spec, data)?;

        // Every stream is split off up front so all loss kinds share the same
        // initialization, shuffles and dropout masks for a given seed.
        let mut root = RngState::new(cfg.seed);
        let mut net_rng = root.split();
        let mut proto_rng = root.split();
        let order_rng = root.split();
        let dropout_rng = root.split();

        let network = NetworkState::init(spec, &mut net_rng)?;
        let segments = daal::init_segments(spec.num_classes, spec.embedding_dim, cfg.daal.init_length, &mut proto_rng)?;
        let mut aux = AuxState::default();
        if cfg.loss.uses_segments() {
            aux.segments = Some(segments);
        }
        if cfg.loss.uses_centers() {
            aux.centers = Some(CenterSet::new(
                Matrix::zeros(spec.num_classes, spec.embedding_dim),
                cfg.baseline.center_alpha,
            )?);
        }
        Ok(Trainer {
            cfg: cfg.clone(),
            network,
            aux,
            order_rng,
            dropout_rng,
            order: (0..data.len()).collect(),
            history: Vec::new(),
        })
    }

    /// One pass over `data`, which must be the set the trainer was built with.
    pub fn run_epoch(&mut self, data: &LabeledDataset) -> Result<EpochRecord> {
        if data.len() != self.order.len() {
            return Err(Error::Dimension { expected: self.order.len(), found: data.len() });
        }
        check_data(&self.network.spec, data)?;
        let epoch = self.history.len();
        let cfg = &self.cfg;
        self.order_rng.shuffle(&mut self.order);
        let mut sums = [0.0f64; 3];
        let mut batches = 0usize;
        for chunk in self.order.chunks(cfg.batch_size) {
            let x = data.features_of(chunk);
            let labels: Vec<usize> = chunk.iter().map(|&i| data.labels[i]).collect();
            let step = objective(&self.network, &x, &labels, &self.aux, cfg, Mode::Train, &mut self.dropout_rng)?;
            if !step.total.is_finite() {
                return Err(Error::NonFinite { epoch });
            }
            sgd_step(&mut self.network, &step.grads, cfg.learning_rate, cfg.momentum)?;
            let batch = EmbeddingBatch::new(step.embeddings, labels)?;
            if let Some(segs) = &self.aux.segments {
                self.aux.segments = Some(daal::refresh_segments(segs, &batch, &cfg.daal)?);
            }
            if let Some(centers) = &self.aux.centers {
                self.aux.centers = Some(losses::update_centers(centers, &batch)?);
            }
            sums[0] += step.total;
            sums[1] += step.softmax;
            sums[2] += step.daal;
            batches += 1;
        }
        let inv = 1.0 / batches as f64;
        let record = EpochRecord {
            epoch,
            total: sums[0] * inv,
            softmax: sums[1] * inv,
            daal: sums[2] * inv,
        };
        let finite = self.network.layers.iter().all(|l| l.weights.is_finite());
        if !record.total.is_finite() || !finite {
            return Err(Error::NonFinite { epoch });
        }
        self.history.push(record.clone());
        Ok(record)
    }

    pub fn network(&self) -> &NetworkState {
        &self.network
    }

    pub fn segments(&self) -> Option<&LineSegmentSet> {
        self.aux.segments.as_ref()
    }

    pub fn history(&self) -> &[EpochRecord] {
        &self.history
    }

    pub fn finish(self) -> TrainOutcome {
        TrainOutcome {
            network: self.network,
            segments: self.aux.segments,
            centers: self.aux.centers,
            history: self.history,
        }
    }
}

/// Mini-batch training for `cfg.epochs` epochs; see [`Trainer`].
pub fn train(spec: &NetworkSpec, data: &LabeledDataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(spec, data, cfg)?;
    for _ in 0..cfg.epochs {
        trainer.run_epoch(data)?;
    }
    Ok(trainer.finish())
}
