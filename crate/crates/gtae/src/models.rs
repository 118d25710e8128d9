//! Desk-scale differentiable models and the multitask training oracle.
//!
//! Two architectures are supported: a linear model and a one-hidden-layer
//! ReLU MLP. The linear model makes first-order linearization exact, the MLP
//! makes it approximate, so the two together let tests separate projection
//! error from Taylor error. Gradients are hand-derived reverse mode.
//!
//! The oracle [`oracle_scores`] trains one model per task subset and
//! evaluates every member task, producing the ground-truth score tables that
//! the gradient-based estimator is measured against.

use std::collections::BTreeMap;

use ndarray::Array1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flops::{self, FlopsLedger, Phase};
use crate::rng::{derive, Stream};
use crate::scalar::Real;

// ---------------------------------------------------------------------------
// Architectures and parameters
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArchKind {
    Linear,
    Mlp1 { hidden_dim: usize },
}

/// Architecture descriptor. `num_classes == 2` means a scalar-output binary
/// model; larger values give one output score per class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub kind: ArchKind,
    pub input_dim: usize,
    pub num_classes: usize,
}

impl ArchitectureSpec {
    pub fn linear(input_dim: usize) -> Self {
        ArchitectureSpec {
            kind: ArchKind::Linear,
            input_dim,
            num_classes: 2,
        }
    }

    pub fn mlp1(input_dim: usize, hidden_dim: usize) -> Self {
        ArchitectureSpec {
            kind: ArchKind::Mlp1 { hidden_dim },
            input_dim,
            num_classes: 2,
        }
    }

    pub fn with_classes(mut self, num_classes: usize) -> Self {
        self.num_classes = num_classes;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidArgument("input_dim must be >= 1".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidArgument("num_classes must be >= 2".into()));
        }
        if let ArchKind::Mlp1 { hidden_dim } = self.kind {
            if hidden_dim == 0 {
                return Err(Error::InvalidArgument("hidden_dim must be >= 1".into()));
            }
        }
        Ok(())
    }

    pub fn is_binary(&self) -> bool {
        self.num_classes == 2
    }

    /// Total number of parameters `p`, a deterministic function of the spec.
    pub fn param_count(&self) -> usize {
        let q = self.input_dim;
        let c = self.num_classes;
        match self.kind {
            ArchKind::Linear => {
                if c == 2 {
                    q + 1
                } else {
                    c * (q + 1)
                }
            }
            ArchKind::Mlp1 { hidden_dim: h } => {
                if c == 2 {
                    h * q + h + h + 1
                } else {
                    h * q + h + c * h + c
                }
            }
        }
    }
}

/// Flat parameter vector plus its architecture.
///
/// Binary layouts (`num_classes == 2`):
/// - linear: `[w (q), b]`
/// - mlp1:   `[W1 (h x q, row-major), c (h), v (h), b]`
///
/// Multiclass layouts append one output row per class:
/// - linear: `[W (C x q, row-major), b (C)]`
/// - mlp1:   `[W1 (h x q), c (h), V (C x h, row-major), b (C)]`
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<R: Real> {
    pub spec: ArchitectureSpec,
    pub theta: Array1<R>,
}

impl<R: Real> ModelParams<R> {
    pub fn new(spec: ArchitectureSpec, theta: Array1<R>) -> Result<Self> {
        spec.validate()?;
        if theta.len() != spec.param_count() {
            return Err(Error::DimensionMismatch {
                expected: spec.param_count(),
                got: theta.len(),
                context: "ModelParams::new",
            });
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite parameter".into()));
        }
        Ok(ModelParams { spec, theta })
    }

    pub fn zeros(spec: ArchitectureSpec) -> Result<Self> {
        spec.validate()?;
        Ok(ModelParams {
            spec,
            theta: Array1::zeros(spec.param_count()),
        })
    }

    pub fn param_count(&self) -> usize {
        self.theta.len()
    }

    fn check_input(&self, x: &[R]) -> Result<()> {
        if x.len() != self.spec.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.spec.input_dim,
                got: x.len(),
                context: "model input",
            });
        }
        Ok(())
    }
}

/// Deterministic pseudorandom initialization: each block uniform in
/// `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
pub fn init_model<R: Real>(spec: &ArchitectureSpec, seed: u64) -> Result<ModelParams<R>> {
    spec.validate()?;
    let mut stream = Stream::new(derive(seed, "model-init", 0));
    let q = spec.input_dim;
    let c = spec.num_classes;
    let mut theta = Vec::with_capacity(spec.param_count());
    let mut push_block = |stream: &mut Stream, count: usize, fan_in: usize| {
        let scale = 1.0 / (fan_in as f64).sqrt();
        for _ in 0..count {
            theta_push(&mut theta, (2.0 * stream.next_f64() - 1.0) * scale);
        }
    };
    match spec.kind {
        ArchKind::Linear => {
            let rows = if c == 2 { 1 } else { c };
            push_block(&mut stream, rows * q, q);
            push_block(&mut stream, rows, q);
        }
        ArchKind::Mlp1 { hidden_dim: h } => {
            let rows = if c == 2 { 1 } else { c };
            push_block(&mut stream, h * q, q);
            push_block(&mut stream, h, q);
            push_block(&mut stream, rows * h, h);
            push_block(&mut stream, rows, h);
        }
    }
    ModelParams::new(*spec, Array1::from_vec(theta))
}

fn theta_push<R: Real>(theta: &mut Vec<R>, v: f64) {
    theta.push(R::of(v));
}

// ---------------------------------------------------------------------------
// Forward and gradients
// ---------------------------------------------------------------------------

/// Scalar output of a binary model.
pub fn forward<R: Real>(model: &ModelParams<R>, x: &[R]) -> Result<R> {
    model.check_input(x)?;
    if !model.spec.is_binary() {
        return Err(Error::Unsupported(
            "forward is for binary models; use forward_scores".into(),
        ));
    }
    Ok(forward_class_unchecked(model, x, 0))
}

/// Per-class output scores. Binary models return a single-element vector.
pub fn forward_scores<R: Real>(model: &ModelParams<R>, x: &[R]) -> Result<Vec<R>> {
    model.check_input(x)?;
    let rows = if model.spec.is_binary() {
        1
    } else {
        model.spec.num_classes
    };
    Ok((0..rows)
        .map(|class| forward_class_unchecked(model, x, class))
        .collect())
}

fn forward_class_unchecked<R: Real>(model: &ModelParams<R>, x: &[R], class: usize) -> R {
    let q = model.spec.input_dim;
    let t = model.theta.as_slice().unwrap();
    let rows = if model.spec.is_binary() {
        1
    } else {
        model.spec.num_classes
    };
    match model.spec.kind {
        ArchKind::Linear => {
            let w = &t[class * q..(class + 1) * q];
            let b = t[rows * q + class];
            crate::linalg::dot(w, x) + b
        }
        ArchKind::Mlp1 { hidden_dim: h } => {
            let w1 = &t[..h * q];
            let c0 = &t[h * q..h * q + h];
            let v = &t[h * q + h + class * h..h * q + h + (class + 1) * h];
            let b = t[h * q + h + rows * h + class];
            let mut out = b;
            for j in 0..h {
                let z = crate::linalg::dot(&w1[j * q..(j + 1) * q], x) + c0[j];
                if z > R::zero() {
                    out += v[j] * z;
                }
            }
            out
        }
    }
}

/// Analytic gradient of the binary scalar output with respect to all `p`
/// parameters.
pub fn grad_output<R: Real>(model: &ModelParams<R>, x: &[R]) -> Result<Array1<R>> {
    model.check_input(x)?;
    if !model.spec.is_binary() {
        return Err(Error::Unsupported(
            "grad_output is for binary models; use grad_output_class".into(),
        ));
    }
    Ok(grad_class_unchecked(model, x, 0))
}

/// Gradient of one class score with respect to all parameters.
pub fn grad_output_class<R: Real>(
    model: &ModelParams<R>,
    x: &[R],
    class: usize,
) -> Result<Array1<R>> {
    model.check_input(x)?;
    let rows = if model.spec.is_binary() {
        1
    } else {
        model.spec.num_classes
    };
    if class >= rows {
        return Err(Error::InvalidArgument(format!(
            "class {class} out of range for {rows} output rows"
        )));
    }
    Ok(grad_class_unchecked(model, x, class))
}

fn grad_class_unchecked<R: Real>(model: &ModelParams<R>, x: &[R], class: usize) -> Array1<R> {
    let q = model.spec.input_dim;
    let p = model.param_count();
    let t = model.theta.as_slice().unwrap();
    let rows = if model.spec.is_binary() {
        1
    } else {
        model.spec.num_classes
    };
    let mut g = Array1::zeros(p);
    match model.spec.kind {
        ArchKind::Linear => {
            for i in 0..q {
                g[class * q + i] = x[i];
            }
            g[rows * q + class] = R::one();
        }
        ArchKind::Mlp1 { hidden_dim: h } => {
            let w1 = &t[..h * q];
            let c0 = &t[h * q..h * q + h];
            let v = &t[h * q + h + class * h..h * q + h + (class + 1) * h];
            for j in 0..h {
                let z = crate::linalg::dot(&w1[j * q..(j + 1) * q], x) + c0[j];
                // ReLU derivative: active iff z > 0 (zero at the kink).
                if z > R::zero() {
                    let a = z;
                    for i in 0..q {
                        g[j * q + i] = v[j] * x[i];
                    }
                    g[h * q + j] = v[j];
                    g[h * q + h + class * h + j] = a;
                }
                // dead unit: entire incoming block stays zero
            }
            g[h * q + h + rows * h + class] = R::one();
        }
    }
    g
}

// ---------------------------------------------------------------------------
// Data
// ---------------------------------------------------------------------------

/// One labelled example. `y` is `+1`/`-1` for binary classification and a
/// real target in regression mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample<R: Real> {
    pub x: Array1<R>,
    pub y: R,
}

impl<R: Real> Sample<R> {
    pub fn new(x: Vec<R>, y: R) -> Self {
        Sample {
            x: Array1::from_vec(x),
            y,
        }
    }
}

/// One example for a multiclass model.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassSample<R: Real> {
    pub x: Array1<R>,
    pub class: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone)]
pub struct Task<R: Real> {
    pub id: usize,
    pub train: Vec<Sample<R>>,
    pub val: Vec<Sample<R>>,
    pub test: Vec<Sample<R>>,
}

impl<R: Real> Task<R> {
    pub fn split(&self, split: Split) -> &[Sample<R>] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

/// The `n` tasks with their train/val/test splits.
#[derive(Debug, Clone)]
pub struct TaskCollection<R: Real> {
    pub input_dim: usize,
    pub tasks: Vec<Task<R>>,
}

impl<R: Real> TaskCollection<R> {
    pub fn new(input_dim: usize, tasks: Vec<Task<R>>) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for task in &tasks {
            if !seen.insert(task.id) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate task id {}",
                    task.id
                )));
            }
            for s in task.train.iter().chain(&task.val).chain(&task.test) {
                if s.x.len() != input_dim {
                    return Err(Error::DimensionMismatch {
                        expected: input_dim,
                        got: s.x.len(),
                        context: "task sample",
                    });
                }
            }
        }
        Ok(TaskCollection { input_dim, tasks })
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn ids(&self) -> Vec<usize> {
        self.tasks.iter().map(|t| t.id).collect()
    }

    pub fn task(&self, id: usize) -> Result<&Task<R>> {
        self.tasks
            .iter()
            .find(|t| t.id == id)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown task id {id}")))
    }

    /// Training samples of every task in `subset`, in subset order.
    pub fn gather_train(&self, subset: &[usize]) -> Result<Vec<Sample<R>>> {
        let mut out = Vec::new();
        for &id in subset {
            out.extend(self.task(id)?.train.iter().cloned());
        }
        Ok(out)
    }

    /// All training samples of all tasks, in task order.
    pub fn all_train(&self) -> Vec<Sample<R>> {
        self.tasks
            .iter()
            .flat_map(|t| t.train.iter().cloned())
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    /// `log(1 + exp(-y f(x)))` with labels in {+1, -1}.
    Logistic,
    /// `(f(x) - y)^2` for regression-mode targets.
    Squared,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Penalty `l2 * ||theta||^2`; its gradient `2 * l2 * theta` is added to
    /// every mini-batch gradient.
    pub l2_penalty: f64,
    pub seed: u64,
    pub loss: LossKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 32,
            learning_rate: 0.1,
            momentum: 0.9,
            l2_penalty: 0.0,
            seed: 0,
            loss: LossKind::Logistic,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        if self.learning_rate <= 0.0 || self.learning_rate.is_nan() {
            return Err(Error::InvalidArgument("learning_rate must be > 0".into()));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Numerically stable `log(1 + exp(t))`.
pub fn log1p_exp<R: Real>(t: R) -> R {
    if t > R::of(30.0) {
        t
    } else if t < R::of(-30.0) {
        t.exp()
    } else {
        (R::one() + t.exp()).ln()
    }
}

/// Mean loss of a binary/regression model over a sample set.
pub fn mean_loss<R: Real>(model: &ModelParams<R>, data: &[Sample<R>], loss: LossKind) -> Result<R> {
    if data.is_empty() {
        return Err(Error::EmptyInput("mean_loss"));
    }
    let mut acc = R::zero();
    for s in data {
        let f = forward(model, s.x.as_slice().unwrap())?;
        acc += match loss {
            LossKind::Logistic => log1p_exp(-s.y * f),
            LossKind::Squared => (f - s.y) * (f - s.y),
        };
    }
    Ok(acc / R::of(data.len() as f64))
}

/// Stepwise SGD-with-momentum state, for callers that need to observe or
/// stop training between batches (e.g. the Taylor-error sweep).
pub struct SgdTrainer<R: Real> {
    model: ModelParams<R>,
    velocity: Array1<R>,
    grad: Array1<R>,
    cfg: TrainConfig,
}

impl<R: Real> SgdTrainer<R> {
    pub fn new(init: &ModelParams<R>, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let p = init.param_count();
        Ok(SgdTrainer {
            model: init.clone(),
            velocity: Array1::zeros(p),
            grad: Array1::zeros(p),
            cfg: *cfg,
        })
    }

    pub fn model(&self) -> &ModelParams<R> {
        &self.model
    }

    pub fn into_model(self) -> ModelParams<R> {
        self.model
    }

    /// Shuffled sample order for one epoch, a pure function of (seed, epoch).
    pub fn epoch_order(&self, len: usize, epoch: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..len).collect();
        let mut stream = Stream::new(derive(self.cfg.seed, "epoch-perm", epoch as u64));
        stream.shuffle(&mut order);
        order
    }

    /// One momentum step on the mean gradient of `batch`.
    pub fn step_batch(&mut self, data: &[Sample<R>], batch: &[usize]) {
        let p = self.model.param_count();
        self.grad.fill(R::zero());
        for &i in batch {
            let s = &data[i];
            let x = s.x.as_slice().unwrap();
            let f = forward_class_unchecked(&self.model, x, 0);
            let dloss = match self.cfg.loss {
                // d/df log(1 + exp(-y f)) = -y * sigmoid(-y f)
                LossKind::Logistic => -s.y / (R::one() + (s.y * f).exp()),
                LossKind::Squared => R::of(2.0) * (f - s.y),
            };
            accumulate_grad(&self.model, x, dloss, &mut self.grad);
        }
        let inv = R::one() / R::of(batch.len() as f64);
        let lr = R::of(self.cfg.learning_rate);
        let mu = R::of(self.cfg.momentum);
        let two_l2 = R::of(2.0 * self.cfg.l2_penalty);
        for j in 0..p {
            let g = self.grad[j] * inv + two_l2 * self.model.theta[j];
            self.velocity[j] = mu * self.velocity[j] + g;
            self.model.theta[j] -= lr * self.velocity[j];
        }
    }

    fn check_finite(&self, epoch: usize) -> Result<()> {
        if self.model.theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged(format!(
                "non-finite parameters after epoch {epoch} (lr={}, batch={})",
                self.cfg.learning_rate, self.cfg.batch_size
            )));
        }
        Ok(())
    }
}

/// Mini-batch SGD with momentum (Polyak heavy-ball), deterministic given the
/// config seed. Shuffling uses one counter stream per epoch.
pub fn train<R: Real>(
    init: &ModelParams<R>,
    data: &[Sample<R>],
    cfg: &TrainConfig,
) -> Result<ModelParams<R>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyInput("train"));
    }
    for s in data {
        init.check_input(s.x.as_slice().unwrap())?;
    }
    let mut trainer = SgdTrainer::new(init, cfg)?;
    for epoch in 0..cfg.epochs {
        let order = trainer.epoch_order(data.len(), epoch);
        for batch in order.chunks(cfg.batch_size) {
            trainer.step_batch(data, batch);
        }
        trainer.check_finite(epoch)?;
    }
    let model = trainer.into_model();
    let final_loss = mean_loss(&model, data, cfg.loss)?;
    if !final_loss.is_finite() {
        return Err(Error::Diverged(format!(
            "non-finite training loss {final_loss:?}"
        )));
    }
    Ok(model)
}

/// Accumulate `dloss * grad_output(model, x)` into `grad` without allocating.
fn accumulate_grad<R: Real>(model: &ModelParams<R>, x: &[R], dloss: R, grad: &mut Array1<R>) {
    let q = model.spec.input_dim;
    let t = model.theta.as_slice().unwrap();
    match model.spec.kind {
        ArchKind::Linear => {
            for i in 0..q {
                grad[i] += dloss * x[i];
            }
            grad[q] += dloss;
        }
        ArchKind::Mlp1 { hidden_dim: h } => {
            let w1 = &t[..h * q];
            let c0 = &t[h * q..h * q + h];
            let v = &t[h * q + h..h * q + h + h];
            for j in 0..h {
                let z = crate::linalg::dot(&w1[j * q..(j + 1) * q], x) + c0[j];
                if z > R::zero() {
                    let dv = dloss * v[j];
                    for i in 0..q {
                        grad[j * q + i] += dv * x[i];
                    }
                    grad[h * q + j] += dv;
                    grad[h * q + h + j] += dloss * z;
                }
            }
            grad[h * q + h + h] += dloss;
        }
    }
}

/// Softmax cross-entropy SGD for multiclass models; same contract as
/// [`train`].
pub fn train_multiclass<R: Real>(
    init: &ModelParams<R>,
    data: &[ClassSample<R>],
    cfg: &TrainConfig,
) -> Result<ModelParams<R>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyInput("train_multiclass"));
    }
    let classes = init.spec.num_classes;
    if init.spec.is_binary() {
        return Err(Error::Unsupported(
            "train_multiclass requires num_classes > 2".into(),
        ));
    }
    let p = init.param_count();
    let mut model = init.clone();
    let mut velocity: Array1<R> = Array1::zeros(p);
    let mut grad: Array1<R> = Array1::zeros(p);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let lr = R::of(cfg.learning_rate);
    let mu = R::of(cfg.momentum);
    let l2 = R::of(cfg.l2_penalty);

    for epoch in 0..cfg.epochs {
        let mut stream = Stream::new(derive(cfg.seed, "epoch-perm", epoch as u64));
        stream.shuffle(&mut order);
        for batch in order.chunks(cfg.batch_size) {
            grad.fill(R::zero());
            for &i in batch {
                let s = &data[i];
                let x = s.x.as_slice().unwrap();
                let scores: Vec<R> = (0..classes)
                    .map(|c| forward_class_unchecked(&model, x, c))
                    .collect();
                let probs = softmax(&scores);
                for c in 0..classes {
                    let coeff = probs[c] - if c == s.class { R::one() } else { R::zero() };
                    let gc = grad_class_unchecked(&model, x, c);
                    for j in 0..p {
                        grad[j] += coeff * gc[j];
                    }
                }
            }
            let inv = R::one() / R::of(batch.len() as f64);
            let two_l2 = R::of(2.0) * l2;
            for j in 0..p {
                grad[j] = grad[j] * inv + two_l2 * model.theta[j];
                velocity[j] = mu * velocity[j] + grad[j];
                model.theta[j] -= lr * velocity[j];
            }
        }
        if model.theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged(format!(
                "non-finite parameters after epoch {epoch}"
            )));
        }
    }
    Ok(model)
}

pub fn softmax<R: Real>(scores: &[R]) -> Vec<R> {
    let max = scores
        .iter()
        .fold(R::neg_infinity(), |acc, &v| if v > acc { v } else { acc });
    let exps: Vec<R> = scores.iter().map(|&v| (v - max).exp()).collect();
    let z: R = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / z).collect()
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    Accuracy,
    MacroF1,
}

/// Predicted binary label for a logit; ties at exactly zero go to `-1`.
pub fn predict_label<R: Real>(logit: R) -> R {
    if logit > R::zero() {
        R::one()
    } else {
        -R::one()
    }
}

/// Score in `[0, 1]` of a binary model on a sample set.
pub fn evaluate<R: Real>(model: &ModelParams<R>, data: &[Sample<R>], metric: Metric) -> Result<R> {
    let logits: Vec<R> = data
        .iter()
        .map(|s| forward(model, s.x.as_slice().unwrap()))
        .collect::<Result<_>>()?;
    let labels: Vec<R> = data.iter().map(|s| s.y).collect();
    score_logits(&logits, &labels, metric)
}

/// Score predictions given precomputed logits (shared with the estimator so
/// oracle and estimated scores use the exact same metric code).
pub fn score_logits<R: Real>(logits: &[R], labels: &[R], metric: Metric) -> Result<R> {
    if labels.is_empty() {
        return Err(Error::EmptyInput("evaluate"));
    }
    debug_assert_eq!(logits.len(), labels.len());
    match metric {
        Metric::Accuracy => {
            let mut correct = 0usize;
            for (logit, y) in logits.iter().zip(labels) {
                if predict_label(*logit) == *y {
                    correct += 1;
                }
            }
            Ok(R::of(correct as f64 / labels.len() as f64))
        }
        Metric::MacroF1 => {
            let mut f1_sum = R::zero();
            for target in [R::one(), -R::one()] {
                let mut tp = 0usize;
                let mut fp = 0usize;
                let mut fn_ = 0usize;
                for (logit, y) in logits.iter().zip(labels) {
                    let pred = predict_label(*logit);
                    if pred == target && *y == target {
                        tp += 1;
                    } else if pred == target {
                        fp += 1;
                    } else if *y == target {
                        fn_ += 1;
                    }
                }
                let denom = 2 * tp + fp + fn_;
                // class absent from both truth and prediction counts as perfect
                let f1 = if denom == 0 {
                    R::one()
                } else {
                    R::of(2.0 * tp as f64 / denom as f64)
                };
                f1_sum += f1;
            }
            Ok(f1_sum / R::of(2.0))
        }
    }
}

/// Argmax accuracy of a multiclass model; ties go to the lowest class index.
pub fn evaluate_multiclass<R: Real>(model: &ModelParams<R>, data: &[ClassSample<R>]) -> Result<R> {
    if data.is_empty() {
        return Err(Error::EmptyInput("evaluate_multiclass"));
    }
    let mut correct = 0usize;
    for s in data {
        let scores = forward_scores(model, s.x.as_slice().unwrap())?;
        let mut best = 0usize;
        for (c, &v) in scores.iter().enumerate() {
            if v > scores[best] {
                best = c;
            }
        }
        if best == s.class {
            correct += 1;
        }
    }
    Ok(R::of(correct as f64 / data.len() as f64))
}

// ---------------------------------------------------------------------------
// Score tables and the training oracle
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Oracle,
    Estimated,
}

/// Map from `(subset, member task)` to a test score in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct ScoreTable<R: Real> {
    pub subsets: Vec<Vec<usize>>,
    /// Keyed by (subset index, task id); every task id is in its subset.
    pub entries: BTreeMap<(usize, usize), R>,
    pub provenance: Provenance,
}

impl<R: Real> ScoreTable<R> {
    pub fn new(subsets: Vec<Vec<usize>>, provenance: Provenance) -> Self {
        ScoreTable {
            subsets,
            entries: BTreeMap::new(),
            provenance,
        }
    }

    pub fn insert(&mut self, subset_idx: usize, task: usize, score: R) -> Result<()> {
        let subset = self
            .subsets
            .get(subset_idx)
            .ok_or_else(|| Error::InvalidArgument(format!("subset index {subset_idx}")))?;
        if !subset.contains(&task) {
            return Err(Error::InvalidArgument(format!(
                "task {task} not in subset {subset:?}"
            )));
        }
        self.entries.insert((subset_idx, task), score);
        Ok(())
    }

    pub fn get(&self, subset_idx: usize, task: usize) -> Option<R> {
        self.entries.get(&(subset_idx, task)).copied()
    }

    /// Entry for a subset given by value (order-insensitive).
    pub fn get_by_subset(&self, subset: &[usize], task: usize) -> Option<R> {
        let mut key: Vec<usize> = subset.to_vec();
        key.sort_unstable();
        self.subsets
            .iter()
            .position(|s| {
                let mut c = s.clone();
                c.sort_unstable();
                c == key
            })
            .and_then(|idx| self.get(idx, task))
    }
}

/// Where each oracle subset training starts from.
#[derive(Debug, Clone, Copy)]
pub enum OracleStart<'a, R: Real> {
    /// Fine-tune from a shared meta-initialization (the default protocol).
    FineTune(&'a ModelParams<R>),
    /// Train from a fresh seeded initialization per subset.
    FromScratch(&'a ArchitectureSpec),
}

/// Train one model per subset and evaluate every member task on its test
/// split. Per-subset seeds are derived from `cfg.seed` by a splittable
/// counter scheme, so results do not depend on scheduling.
pub fn oracle_scores<R: Real>(
    tasks: &TaskCollection<R>,
    subsets: &[Vec<usize>],
    start: OracleStart<'_, R>,
    cfg: &TrainConfig,
    metric: Metric,
    ledger: &mut FlopsLedger,
) -> Result<ScoreTable<R>> {
    for subset in subsets {
        if subset.is_empty() {
            return Err(Error::EmptyInput("oracle subset"));
        }
        for &id in subset {
            tasks.task(id)?;
        }
    }
    let spec = match start {
        OracleStart::FineTune(m) => m.spec,
        OracleStart::FromScratch(s) => *s,
    };

    let results: Vec<Result<Vec<(usize, R)>>> = subsets
        .par_iter()
        .enumerate()
        .map(|(k, subset)| {
            let data = tasks.gather_train(subset)?;
            let sub_cfg = cfg.with_seed(derive(cfg.seed, "oracle-subset", k as u64));
            let init = match start {
                OracleStart::FineTune(m) => m.clone(),
                OracleStart::FromScratch(s) => {
                    init_model(s, derive(cfg.seed, "oracle-init", k as u64))?
                }
            };
            let trained = train(&init, &data, &sub_cfg)?;
            subset
                .iter()
                .map(|&t| Ok((t, evaluate(&trained, &tasks.task(t)?.test, metric)?)))
                .collect()
        })
        .collect();

    let mut table = ScoreTable::new(subsets.to_vec(), Provenance::Oracle);
    for (k, res) in results.into_iter().enumerate() {
        for (t, score) in res? {
            table.insert(k, t, score)?;
        }
        let samples = subsets[k]
            .iter()
            .map(|&t| tasks.task(t).map(|task| task.train.len()))
            .sum::<Result<usize>>()?;
        ledger.add(
            Phase::OracleTraining,
            flops::training_flops(&spec, samples, cfg.epochs),
        );
    }
    Ok(table)
}
