//! Planted-cluster synthetic multitask benchmark.
//!
//! `k_true` near-orthogonal teacher directions are planted; each task's
//! labeler is its cluster teacher plus a Gaussian perturbation, features are
//! standard Gaussian, and labels are the teacher sign with an optional flip
//! rate. The cross-cluster angle is a single difficulty knob: teachers are
//! Gram-Schmidt orthogonalized, then blended toward a shared direction so
//! every pair of cluster teachers meets at the configured angle.


use crate::cluster::ClusterAssignment;
use crate::error::{Error, Result};
use crate::linalg;
use crate::models::{Sample, Task, TaskCollection};
use crate::rng::{derive, Stream};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct SynthConfig {
    pub n_tasks: usize,
    pub k_true: usize,
    pub input_dim: usize,
    pub train_per_task: usize,
    pub val_per_task: usize,
    pub test_per_task: usize,
    /// Within-cluster perturbation magnitude of each task's labeler.
    pub teacher_noise: f64,
    /// Probability of flipping a label, in `[0, 0.5)`.
    pub flip_rate: f64,
    /// Pairwise angle between cluster teachers, degrees; 90 = orthogonal.
    pub cross_cluster_angle_deg: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_tasks: 12,
            k_true: 3,
            input_dim: 16,
            train_per_task: 30,
            val_per_task: 10,
            test_per_task: 20,
            teacher_noise: 0.0,
            flip_rate: 0.02,
            cross_cluster_angle_deg: 90.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_true == 0 || self.n_tasks < self.k_true {
            return Err(Error::InvalidArgument(
                "need n_tasks >= k_true >= 1".into(),
            ));
        }
        if !(0.0..0.5).contains(&self.flip_rate) {
            return Err(Error::InvalidArgument("flip_rate must be in [0, 0.5)".into()));
        }
        if self.input_dim < self.k_true {
            return Err(Error::InvalidArgument(format!(
                "input_dim {} too small to orthogonalize {} teachers",
                self.input_dim, self.k_true
            )));
        }
        if !(0.0 < self.cross_cluster_angle_deg && self.cross_cluster_angle_deg <= 90.0) {
            return Err(Error::InvalidArgument(
                "cross_cluster_angle_deg must be in (0, 90]".into(),
            ));
        }
        if self.cross_cluster_angle_deg < 90.0 && self.input_dim < self.k_true + 1 {
            return Err(Error::InvalidArgument(
                "non-orthogonal teachers need input_dim >= k_true + 1".into(),
            ));
        }
        if self.train_per_task == 0 || self.test_per_task == 0 {
            return Err(Error::InvalidArgument(
                "train and test splits must be nonempty".into(),
            ));
        }
        Ok(())
    }
}

/// Generate the benchmark tasks and the planted ground-truth partition.
/// Task `i` belongs to planted cluster `i % k_true`.
pub fn generate<R: Real>(cfg: &SynthConfig) -> Result<(TaskCollection<R>, ClusterAssignment)> {
    cfg.validate()?;
    let dim = cfg.input_dim;
    let teachers = cluster_teachers(cfg)?;

    let mut tasks = Vec::with_capacity(cfg.n_tasks);
    let mut truth_labels = Vec::with_capacity(cfg.n_tasks);
    for id in 0..cfg.n_tasks {
        let cluster = id % cfg.k_true;
        truth_labels.push(cluster);
        // task labeler: cluster teacher + per-task perturbation, normalized
        let mut labeler = teachers[cluster].clone();
        if cfg.teacher_noise > 0.0 {
            let mut s = Stream::new(derive(cfg.seed, "task-teacher", id as u64));
            for v in labeler.iter_mut() {
                *v += cfg.teacher_noise * s.next_gaussian();
            }
        }
        let norm = linalg::norm2(&labeler);
        for v in labeler.iter_mut() {
            *v /= norm;
        }

        let make_split = |label: &str, count: usize| -> Vec<Sample<R>> {
            let mut s = Stream::new(derive(cfg.seed, label, id as u64));
            (0..count)
                .map(|_| {
                    let x: Vec<f64> = (0..dim).map(|_| s.next_gaussian()).collect();
                    let mut y = if linalg::dot(&x, &labeler) > 0.0 { 1.0 } else { -1.0 };
                    if cfg.flip_rate > 0.0 && s.next_f64() < cfg.flip_rate {
                        y = -y;
                    }
                    Sample::new(x.into_iter().map(R::of).collect(), R::of(y))
                })
                .collect()
        };
        let train = make_split("synth-train", cfg.train_per_task);
        let val = make_split("synth-val", cfg.val_per_task);
        let test = make_split("synth-test", cfg.test_per_task);
        tasks.push(Task {
            id,
            train,
            val,
            test,
        });
    }
    let collection = TaskCollection::new(dim, tasks)?;
    let truth = ClusterAssignment::from_labels(&collection.ids(), &truth_labels)?;
    Ok((collection, truth))
}

/// Orthonormal teachers blended toward a shared direction so each pair meets
/// at the configured angle.
fn cluster_teachers(cfg: &SynthConfig) -> Result<Vec<Vec<f64>>> {
    let dim = cfg.input_dim;
    let angle = cfg.cross_cluster_angle_deg.to_radians();
    // draw k_true (+1 when blending) raw directions and Gram-Schmidt them
    let need = if cfg.cross_cluster_angle_deg < 90.0 {
        cfg.k_true + 1
    } else {
        cfg.k_true
    };
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(need);
    let mut s = Stream::new(derive(cfg.seed, "teachers", 0));
    let mut attempts = 0;
    while basis.len() < need {
        attempts += 1;
        if attempts > 64 * need {
            return Err(Error::InvalidArgument(
                "failed to orthogonalize teacher directions".into(),
            ));
        }
        let mut v: Vec<f64> = (0..dim).map(|_| s.next_gaussian()).collect();
        for b in &basis {
            let proj = linalg::dot(&v, b);
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi -= proj * bi;
            }
        }
        let norm = linalg::norm2(&v);
        if norm < 1e-8 {
            continue;
        }
        for vi in v.iter_mut() {
            *vi /= norm;
        }
        basis.push(v);
    }
    if cfg.cross_cluster_angle_deg >= 90.0 {
        return Ok(basis);
    }
    // t_j = cos(phi) * shared + sin(phi) * u_j gives pairwise inner product
    // cos^2(phi); solve cos^2(phi) = cos(angle).
    let shared = basis.pop().unwrap();
    let cos_phi = angle.cos().max(0.0).sqrt();
    let sin_phi = (1.0 - cos_phi * cos_phi).sqrt();
    Ok(basis
        .into_iter()
        .map(|u| {
            shared
                .iter()
                .zip(&u)
                .map(|(c, ui)| cos_phi * c + sin_phi * ui)
                .collect()
        })
        .collect())
}

/// Adjusted Rand index between two partitions of the same ids, by
/// pair-counting. 1 means identical, 0 is the chance level.
pub fn adjusted_rand_index(a: &ClusterAssignment, b: &ClusterAssignment) -> Result<f64> {
    let ids_a = a.ids();
    let ids_b = b.ids();
    if ids_a != ids_b {
        return Err(Error::InvalidArgument(
            "partitions cover different id sets".into(),
        ));
    }
    if a.clusters == b.clusters {
        return Ok(1.0);
    }
    let n = ids_a.len();
    // contingency table
    let mut table = vec![vec![0usize; b.k()]; a.k()];
    for &id in &ids_a {
        table[a.cluster_of(id).unwrap()][b.cluster_of(id).unwrap()] += 1;
    }
    let choose2 = |x: usize| -> f64 { (x * x.saturating_sub(1)) as f64 / 2.0 };
    let index: f64 = table
        .iter()
        .flat_map(|row| row.iter())
        .map(|&c| choose2(c))
        .sum();
    let sum_a: f64 = a.clusters.iter().map(|c| choose2(c.len())).sum();
    let sum_b: f64 = b.clusters.iter().map(|c| choose2(c.len())).sum();
    let total = choose2(n);
    let expected = sum_a * sum_b / total;
    let max = 0.5 * (sum_a + sum_b);
    let denom = max - expected;
    if denom.abs() < 1e-15 {
        return Ok(0.0);
    }
    Ok((index - expected) / denom)
}
