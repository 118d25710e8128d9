//! Gradient-feature extraction around a trained anchor and measurement of
//! the first-order Taylor error it incurs.
//!
//! Fine-tuning a model from anchor weights behaves like a linear model in the
//! weight displacement when the displacement is small: the output at weights
//! `W` is approximately `f0 + g . (W - anchor)` where `g` is the output
//! gradient at the anchor. [`extract_features`] materializes `(g, f0, b)` per
//! sample; [`taylor_rss`] and [`rss_sweep`] quantify how fast the residual of
//! that approximation grows with fine-tune distance.

use ndarray::Array1;

use crate::error::{Error, Result};
use crate::linalg;
use crate::models::{
    forward, grad_output, mean_loss, ModelParams, Sample, SgdTrainer, Split, TaskCollection,
    TrainConfig,
};
use crate::rng::{derive, Stream};
use crate::scalar::Real;

/// Per-sample linearization features at the anchor: output gradient `g`,
/// base output `f0`, label `y` and offset `b = -y * f0`.
#[derive(Debug, Clone)]
pub struct RawFeatureRecord<R: Real> {
    pub task_id: usize,
    pub y: R,
    pub g: Array1<R>,
    pub f0: R,
    pub b: R,
}

/// Extract one feature record per sample of `split`, ordered by
/// (task id, sample index).
pub fn extract_features<R: Real>(
    theta_star: &ModelParams<R>,
    tasks: &TaskCollection<R>,
    split: Split,
) -> Result<Vec<RawFeatureRecord<R>>> {
    if theta_star.spec.input_dim != tasks.input_dim {
        return Err(Error::DimensionMismatch {
            expected: theta_star.spec.input_dim,
            got: tasks.input_dim,
            context: "extract_features",
        });
    }
    let mut order: Vec<&crate::models::Task<R>> = tasks.tasks.iter().collect();
    order.sort_by_key(|t| t.id);
    let mut out = Vec::new();
    for task in order {
        for s in task.split(split) {
            let x = s.x.as_slice().unwrap();
            let f0 = forward(theta_star, x)?;
            let g = grad_output(theta_star, x)?;
            out.push(RawFeatureRecord {
                task_id: task.id,
                y: s.y,
                g,
                f0,
                b: -s.y * f0,
            });
        }
    }
    Ok(out)
}

/// How the squared Taylor residual is normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RssAggregation {
    /// `sum(residual^2) / sum(f_W^2)` over the whole sample set (default).
    Pooled,
    /// Mean of per-sample `residual^2 / f_W^2`.
    PerSample,
}

/// Normalized residual sum of squares of the first-order expansion of `w`
/// around `theta_star`, over `samples`.
pub fn taylor_rss<R: Real>(
    theta_star: &ModelParams<R>,
    w: &ModelParams<R>,
    samples: &[Sample<R>],
    aggregation: RssAggregation,
) -> Result<R> {
    if theta_star.spec != w.spec {
        return Err(Error::InvalidArgument(
            "taylor_rss requires matching architectures".into(),
        ));
    }
    if samples.is_empty() {
        return Err(Error::EmptyInput("taylor_rss"));
    }
    let delta: Vec<R> = w
        .theta
        .iter()
        .zip(theta_star.theta.iter())
        .map(|(a, b)| *a - *b)
        .collect();
    let guard = R::of(1e-12);
    match aggregation {
        RssAggregation::Pooled => {
            let mut num = R::zero();
            let mut den = R::zero();
            for s in samples {
                let (r, fw) = residual(theta_star, w, &delta, s)?;
                num += r * r;
                den += fw * fw;
            }
            if den < guard {
                return Err(Error::DegenerateNormalization(
                    "sum of squared outputs below 1e-12",
                ));
            }
            Ok(num / den)
        }
        RssAggregation::PerSample => {
            let mut acc = R::zero();
            for s in samples {
                let (r, fw) = residual(theta_star, w, &delta, s)?;
                if fw * fw < guard {
                    return Err(Error::DegenerateNormalization(
                        "per-sample squared output below 1e-12",
                    ));
                }
                acc += (r * r) / (fw * fw);
            }
            Ok(acc / R::of(samples.len() as f64))
        }
    }
}

fn residual<R: Real>(
    theta_star: &ModelParams<R>,
    w: &ModelParams<R>,
    delta: &[R],
    s: &Sample<R>,
) -> Result<(R, R)> {
    let x = s.x.as_slice().unwrap();
    let fw = forward(w, x)?;
    let f0 = forward(theta_star, x)?;
    let g = grad_output(theta_star, x)?;
    let lin = f0 + linalg::dot(g.as_slice().unwrap(), delta);
    Ok((fw - lin, fw))
}

/// Mean absolute Taylor residual per task, maximized over tasks. This is the
/// measured counterpart of the error-bound assumption that the averaged
/// expansion error stays below some delta on every task's training set.
pub fn taylor_delta<R: Real>(
    theta_star: &ModelParams<R>,
    w: &ModelParams<R>,
    tasks: &TaskCollection<R>,
    subset: &[usize],
) -> Result<R> {
    let delta: Vec<R> = w
        .theta
        .iter()
        .zip(theta_star.theta.iter())
        .map(|(a, b)| *a - *b)
        .collect();
    let mut worst = R::zero();
    for &id in subset {
        let task = tasks.task(id)?;
        if task.train.is_empty() {
            return Err(Error::EmptyInput("taylor_delta task train split"));
        }
        let mut acc = R::zero();
        for s in &task.train {
            let (r, _) = residual(theta_star, w, &delta, s)?;
            acc += r.abs();
        }
        worst = worst.max(acc / R::of(task.train.len() as f64));
    }
    Ok(worst)
}

/// Relative fine-tune distance `||W - theta*|| / ||theta*||`.
pub fn finetune_distance<R: Real>(theta_star: &ModelParams<R>, w: &ModelParams<R>) -> Result<R> {
    if theta_star.theta.len() != w.theta.len() {
        return Err(Error::DimensionMismatch {
            expected: theta_star.theta.len(),
            got: w.theta.len(),
            context: "finetune_distance",
        });
    }
    let base = linalg::norm2(theta_star.theta.as_slice().unwrap());
    if base == R::zero() {
        return Err(Error::DegenerateNormalization("zero-norm anchor"));
    }
    let mut acc = R::zero();
    for (a, b) in w.theta.iter().zip(theta_star.theta.iter()) {
        let d = *a - *b;
        acc += d * d;
    }
    Ok(acc.sqrt() / base)
}

/// One aggregated (distance, rss) measurement.
#[derive(Debug, Clone, Copy)]
pub struct TaylorReport<R: Real> {
    pub finetune_distance: R,
    pub rss: R,
    pub sample_count: usize,
}

/// Fine-tune the anchor on random task subsets, checkpointing whenever the
/// relative distance crosses a target bin edge, and report the mean RSS per
/// bin sorted by distance.
///
/// Distance is controlled by early stopping: training halts a subset run as
/// soon as the largest target has been crossed. RSS is measured on the
/// subset's training samples. Bins never reached are omitted.
#[allow(clippy::too_many_arguments)]
pub fn rss_sweep<R: Real>(
    theta_star: &ModelParams<R>,
    tasks: &TaskCollection<R>,
    subset_count: usize,
    subset_size: usize,
    target_distances: &[f64],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Vec<TaylorReport<R>>> {
    if subset_count == 0 {
        return Err(Error::InvalidArgument("subset_count must be >= 1".into()));
    }
    if subset_size == 0 || subset_size > tasks.len() {
        return Err(Error::InvalidArgument(format!(
            "subset_size {subset_size} out of range for {} tasks",
            tasks.len()
        )));
    }
    let mut targets: Vec<f64> = target_distances.to_vec();
    targets.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if targets.is_empty() {
        return Err(Error::InvalidArgument("no target distances".into()));
    }

    let ids = tasks.ids();
    // (per-target accumulators) distance sum, rss sum, sample count, hits
    let mut acc = vec![(R::zero(), R::zero(), 0usize, 0usize); targets.len()];

    for k in 0..subset_count {
        let mut stream = Stream::new(derive(seed, "rss-subset", k as u64));
        let subset: Vec<usize> = stream
            .sample_distinct(ids.len(), subset_size)
            .into_iter()
            .map(|i| ids[i])
            .collect();
        let data = tasks.gather_train(&subset)?;
        if data.is_empty() {
            return Err(Error::EmptyInput("rss_sweep subset"));
        }
        let sub_cfg = cfg.with_seed(derive(seed, "rss-train", k as u64));
        let mut trainer = SgdTrainer::new(theta_star, &sub_cfg)?;
        let mut next_target = 0usize;
        'epochs: for epoch in 0..sub_cfg.epochs {
            let order = trainer.epoch_order(data.len(), epoch);
            for batch in order.chunks(sub_cfg.batch_size) {
                trainer.step_batch(&data, batch);
                let dist = finetune_distance(theta_star, trainer.model())?;
                if !dist.is_finite() {
                    return Err(Error::Diverged(format!(
                        "sweep subset {k} diverged at epoch {epoch}"
                    )));
                }
                while next_target < targets.len() && dist.as_f64() >= targets[next_target] {
                    let rss =
                        taylor_rss(theta_star, trainer.model(), &data, RssAggregation::Pooled)?;
                    let slot = &mut acc[next_target];
                    slot.0 += dist;
                    slot.1 += rss;
                    slot.2 += data.len();
                    slot.3 += 1;
                    next_target += 1;
                }
                if next_target == targets.len() {
                    break 'epochs;
                }
            }
        }
    }

    let mut reports = Vec::new();
    for (dist_sum, rss_sum, samples, hits) in acc {
        if hits == 0 {
            continue;
        }
        let h = R::of(hits as f64);
        reports.push(TaylorReport {
            finetune_distance: dist_sum / h,
            rss: rss_sum / h,
            sample_count: samples,
        });
    }
    reports.sort_by(|a, b| a.finetune_distance.partial_cmp(&b.finetune_distance).unwrap());
    Ok(reports)
}

/// Serialize sweep reports as `distance,rss` CSV rows.
pub fn reports_to_csv<R: Real>(reports: &[TaylorReport<R>]) -> String {
    let mut out = String::from("distance,rss\n");
    for r in reports {
        out.push_str(&format!(
            "{},{}\n",
            r.finetune_distance.as_f64(),
            r.rss.as_f64()
        ));
    }
    out
}

/// Training loss of the actual (non-linearized) model at `w`, shared helper
/// for bound certificates.
pub fn actual_training_loss<R: Real>(
    w: &ModelParams<R>,
    tasks: &TaskCollection<R>,
    subset: &[usize],
) -> Result<R> {
    let data = tasks.gather_train(subset)?;
    mean_loss(w, &data, crate::models::LossKind::Logistic)
}
