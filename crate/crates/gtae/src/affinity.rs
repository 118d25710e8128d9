//! Subset sampling, gradient-based score estimation, affinity matrices and
//! the metrics comparing estimates against fully-trained oracles.
//!
//! The estimator trades `m` full trainings for `M` (a handful) plus `m`
//! small regressions: train `M` base models on all tasks; per base model,
//! extract and project every sample's gradient once; then refit each sampled
//! subset as an offset logistic regression in the projected space and score
//! its member tasks on their test features. Final scores average the `M`
//! ensemble members' score tables entrywise.

use std::collections::BTreeMap;

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flops::{self, FlopsLedger, Phase};
use crate::linalg;
use crate::linearize::extract_features;
use crate::models::{
    init_model, train, ArchitectureSpec, Metric, ModelParams, Provenance, ScoreTable, Split,
    TaskCollection, TrainConfig,
};
use crate::regression::{estimated_score, fit, ProjectedSample};
use crate::rng::{derive, Stream};
use crate::scalar::Real;
use crate::sketch::{choose_dim, ProjectionHandle};

// ---------------------------------------------------------------------------
// Subset plans
// ---------------------------------------------------------------------------

/// The task subsets scores are computed for. Sampled plans hold `m` subsets
/// of size `alpha`, drawn independently (with replacement across draws,
/// without replacement inside a draw); assembled pairwise plans also carry
/// the singletons.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsetPlan {
    pub subsets: Vec<Vec<usize>>,
    pub alpha: usize,
    pub m: usize,
    pub seed: u64,
}

/// Sample a plan over task ids `0..n-1`.
pub fn sample_subsets(n: usize, m: usize, alpha: usize, seed: u64) -> Result<SubsetPlan> {
    sample_subsets_over(&(0..n).collect::<Vec<_>>(), m, alpha, seed)
}

/// Sample a plan over explicit task ids.
pub fn sample_subsets_over(
    ids: &[usize],
    m: usize,
    alpha: usize,
    seed: u64,
) -> Result<SubsetPlan> {
    if alpha == 0 || alpha > ids.len() {
        return Err(Error::InvalidArgument(format!(
            "alpha {alpha} out of range for {} tasks",
            ids.len()
        )));
    }
    if m == 0 {
        return Err(Error::InvalidArgument("m must be >= 1".into()));
    }
    let subsets = (0..m)
        .map(|k| {
            let mut stream = Stream::new(derive(seed, "subset", k as u64));
            stream
                .sample_distinct(ids.len(), alpha)
                .into_iter()
                .map(|i| ids[i])
                .collect()
        })
        .collect();
    Ok(SubsetPlan {
        subsets,
        alpha,
        m,
        seed,
    })
}

/// The plan needed for a pairwise matrix: every singleton, then every pair
/// in lexicographic order.
pub fn pairwise_plan(ids: &[usize]) -> Vec<Vec<usize>> {
    let mut sorted = ids.to_vec();
    sorted.sort_unstable();
    let mut plan: Vec<Vec<usize>> = sorted.iter().map(|&i| vec![i]).collect();
    for a in 0..sorted.len() {
        for b in (a + 1)..sorted.len() {
            plan.push(vec![sorted[a], sorted[b]]);
        }
    }
    plan
}

// ---------------------------------------------------------------------------
// Estimation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionKind {
    Gaussian,
    /// Exact-regime projection (`d == p`); used by oracle-equivalence checks.
    Identity,
}

#[derive(Debug, Clone)]
pub struct EstimationConfig {
    pub arch: ArchitectureSpec,
    /// One seed per ensemble member; the member count is this length.
    pub member_seeds: Vec<u64>,
    /// Projected dimension; `None` derives it from `eps` via the
    /// `15 ln(p) / eps^2` rule.
    pub d: Option<usize>,
    pub eps: f64,
    pub ridge: f64,
    pub metric: Metric,
    pub projection: ProjectionKind,
    /// Meta-initialization training hyperparameters.
    pub train: TrainConfig,
}

impl EstimationConfig {
    pub fn new(arch: ArchitectureSpec, train: TrainConfig, root_seed: u64, members: usize) -> Self {
        EstimationConfig {
            arch,
            member_seeds: (0..members as u64)
                .map(|k| derive(root_seed, "member", k))
                .collect(),
            d: None,
            eps: 1.0,
            ridge: 1e-6,
            metric: Metric::Accuracy,
            projection: ProjectionKind::Gaussian,
            train,
        }
    }

    pub fn members(&self) -> usize {
        self.member_seeds.len()
    }

    pub fn resolve_d(&self, p: usize) -> Result<usize> {
        match self.projection {
            ProjectionKind::Identity => Ok(p),
            ProjectionKind::Gaussian => match self.d {
                Some(d) => Ok(d),
                None => choose_dim(p, self.eps),
            },
        }
    }
}

/// Projected features of one ensemble member, grouped by task.
pub struct MemberFeatures<R: Real> {
    pub p: usize,
    pub d: usize,
    pub projection_seed: u64,
    pub train: Vec<ProjectedSample<R>>,
    pub test: Vec<ProjectedSample<R>>,
    train_ranges: BTreeMap<usize, (usize, usize)>,
    test_ranges: BTreeMap<usize, (usize, usize)>,
}

impl<R: Real> MemberFeatures<R> {
    /// Group already-projected records; they must be ordered by task id.
    pub fn from_records(
        p: usize,
        d: usize,
        projection_seed: u64,
        train: Vec<ProjectedSample<R>>,
        test: Vec<ProjectedSample<R>>,
    ) -> Self {
        let train_ranges = ranges_by_task(&train);
        let test_ranges = ranges_by_task(&test);
        MemberFeatures {
            p,
            d,
            projection_seed,
            train,
            test,
            train_ranges,
            test_ranges,
        }
    }

    pub fn train_of(&self, task: usize) -> &[ProjectedSample<R>] {
        match self.train_ranges.get(&task) {
            Some(&(a, b)) => &self.train[a..b],
            None => &[],
        }
    }

    pub fn test_of(&self, task: usize) -> &[ProjectedSample<R>] {
        match self.test_ranges.get(&task) {
            Some(&(a, b)) => &self.test[a..b],
            None => &[],
        }
    }

    fn gather_train(&self, subset: &[usize]) -> Vec<ProjectedSample<R>> {
        let mut out = Vec::new();
        for &id in subset {
            out.extend_from_slice(self.train_of(id));
        }
        out
    }
}

fn ranges_by_task<R: Real>(records: &[ProjectedSample<R>]) -> BTreeMap<usize, (usize, usize)> {
    let mut map = BTreeMap::new();
    let mut i = 0;
    while i < records.len() {
        let id = records[i].task_id;
        let start = i;
        while i < records.len() && records[i].task_id == id {
            i += 1;
        }
        map.insert(id, (start, i));
    }
    map
}

/// Extract and project one member's gradient features (train + test splits),
/// charging extraction and projection FLOPs to `ledger`.
pub fn member_features<R: Real>(
    theta_star: &ModelParams<R>,
    tasks: &TaskCollection<R>,
    handle: &ProjectionHandle<R>,
    ledger: &mut FlopsLedger,
) -> Result<MemberFeatures<R>> {
    let mut project_split = |split: Split| -> Result<Vec<ProjectedSample<R>>> {
        let records = extract_features(theta_star, tasks, split)?;
        let gs: Vec<&[R]> = records.iter().map(|r| r.g.as_slice().unwrap()).collect();
        let projected = handle.project_batch(&gs)?;
        ledger.add(
            Phase::GradientExtraction,
            flops::extraction_flops(&theta_star.spec, records.len()),
        );
        ledger.add(
            Phase::Projection,
            flops::projection_flops(handle.p, handle.d, records.len()),
        );
        Ok(records
            .iter()
            .zip(projected)
            .map(|(r, g_tilde)| ProjectedSample {
                g_tilde,
                y: r.y,
                b: r.b,
                f0: r.f0,
                task_id: r.task_id,
            })
            .collect())
    };
    let train = project_split(Split::Train)?;
    let test = project_split(Split::Test)?;
    Ok(MemberFeatures::from_records(
        handle.p,
        handle.d,
        handle.seed,
        train,
        test,
    ))
}

/// Train the `k`-th meta-initialization (all tasks combined).
pub fn meta_initialization<R: Real>(
    tasks: &TaskCollection<R>,
    cfg: &EstimationConfig,
    member: usize,
    ledger: &mut FlopsLedger,
) -> Result<ModelParams<R>> {
    let member_seed = cfg.member_seeds[member];
    let init = init_model(&cfg.arch, derive(member_seed, "meta-init", 0))?;
    let data = tasks.all_train();
    let train_cfg = cfg.train.with_seed(derive(member_seed, "meta-train", 0));
    let model = train(&init, &data, &train_cfg)?;
    ledger.add(
        Phase::MetaTraining,
        flops::training_flops(&cfg.arch, data.len(), train_cfg.epochs),
    );
    Ok(model)
}

#[derive(Debug, Clone, Default)]
pub struct EstimationReport {
    pub ledger: FlopsLedger,
    /// `(member, subset index)` of fits that hit the iteration cap.
    pub non_converged: Vec<(usize, usize)>,
}

/// Estimate `f(S, j)` for every planned subset and member task.
///
/// Trains the meta-initializations internally; use
/// [`estimate_scores_from_features`] when features are already cached.
pub fn estimate_scores<R: Real>(
    tasks: &TaskCollection<R>,
    plan: &SubsetPlan,
    cfg: &EstimationConfig,
) -> Result<(ScoreTable<R>, EstimationReport)> {
    let mut report = EstimationReport::default();
    let mut features = Vec::with_capacity(cfg.members());
    for member in 0..cfg.members() {
        let theta_star = meta_initialization(tasks, cfg, member, &mut report.ledger)?;
        let p = theta_star.param_count();
        let d = cfg.resolve_d(p)?;
        let handle = match cfg.projection {
            ProjectionKind::Identity => ProjectionHandle::identity(p)?,
            ProjectionKind::Gaussian => ProjectionHandle::gaussian(
                p,
                d,
                derive(cfg.member_seeds[member], "projection", 0),
            )?,
        };
        features.push(member_features(
            &theta_star,
            tasks,
            &handle,
            &mut report.ledger,
        )?);
    }
    let table = estimate_scores_from_features(&features, plan, cfg, &mut report)?;
    Ok((table, report))
}

/// Fit every planned subset against each member's cached features and
/// average the member score tables entrywise.
pub fn estimate_scores_from_features<R: Real>(
    features: &[MemberFeatures<R>],
    plan: &SubsetPlan,
    cfg: &EstimationConfig,
    report: &mut EstimationReport,
) -> Result<ScoreTable<R>> {
    if features.is_empty() {
        return Err(Error::EmptyInput("estimate_scores members"));
    }
    let mut sums: BTreeMap<(usize, usize), R> = BTreeMap::new();
    for (member, feats) in features.iter().enumerate() {
        let per_subset: Vec<Result<(Vec<(usize, R)>, usize, bool)>> = plan
            .subsets
            .par_iter()
            .map(|subset| {
                let samples = feats.gather_train(subset);
                if samples.is_empty() {
                    return Err(Error::EmptyInput("subset training features"));
                }
                let solution = fit(&samples, cfg.ridge)?;
                let mut scores = Vec::with_capacity(subset.len());
                for &task in subset {
                    let test = feats.test_of(task);
                    let score = estimated_score(&solution, test, task, cfg.metric)?;
                    scores.push((task, score));
                }
                Ok((scores, solution.iterations, solution.converged))
            })
            .collect();
        for (k, entry) in per_subset.into_iter().enumerate() {
            let (scores, iterations, converged) = entry?;
            let n_s: usize = plan.subsets[k]
                .iter()
                .map(|&t| feats.train_of(t).len())
                .sum();
            report.ledger.add(
                Phase::RegressionSolve,
                flops::newton_flops(n_s, feats.d, iterations.max(1)),
            );
            if !converged {
                report.non_converged.push((member, k));
            }
            for (task, score) in scores {
                *sums.entry((k, task)).or_insert_with(R::zero) += score;
            }
        }
    }
    let mut table = ScoreTable::new(plan.subsets.clone(), Provenance::Estimated);
    let inv_m = R::one() / R::of(features.len() as f64);
    for ((k, task), sum) in sums {
        table.insert(k, task, sum * inv_m)?;
    }
    Ok(table)
}

// ---------------------------------------------------------------------------
// Affinity matrices
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AffinityKind {
    Pairwise,
    HigherOrder,
}

/// An `n x n` affinity score matrix with per-pair subset counts.
#[derive(Debug, Clone)]
pub struct AffinityMatrix<R: Real> {
    pub ids: Vec<usize>,
    pub values: Array2<R>,
    pub counts: Array2<u64>,
    pub kind: AffinityKind,
    pub provenance: Provenance,
    /// Cells with zero subset coverage that were filled with the row's
    /// diagonal value.
    pub filled: Vec<(usize, usize)>,
}

impl<R: Real> AffinityMatrix<R> {
    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn index_of(&self, id: usize) -> Result<usize> {
        self.ids
            .iter()
            .position(|&i| i == id)
            .ok_or_else(|| Error::InvalidArgument(format!("task id {id} not in matrix")))
    }
}

/// Assemble the pairwise matrix `T[i][j] = f({i, j}, i)` with single-task
/// scores on the diagonal.
pub fn pairwise_matrix<R: Real>(scores: &ScoreTable<R>) -> Result<AffinityMatrix<R>> {
    let mut ids: Vec<usize> = scores
        .subsets
        .iter()
        .filter(|s| s.len() == 1)
        .map(|s| s[0])
        .collect();
    ids.sort_unstable();
    ids.dedup();
    if ids.is_empty() {
        return Err(Error::EmptyInput("pairwise_matrix singleton scores"));
    }
    let n = ids.len();
    let mut values = Array2::zeros((n, n));
    let mut counts = Array2::zeros((n, n));
    for (a, &i) in ids.iter().enumerate() {
        let diag = scores
            .get_by_subset(&[i], i)
            .ok_or_else(|| Error::MissingScore {
                subset: vec![i],
                task: i,
            })?;
        values[[a, a]] = diag;
        counts[[a, a]] = 1;
        for (b, &j) in ids.iter().enumerate() {
            if a == b {
                continue;
            }
            let v = scores
                .get_by_subset(&[i, j], i)
                .ok_or_else(|| Error::MissingScore {
                    subset: vec![i, j],
                    task: i,
                })?;
            values[[a, b]] = v;
            counts[[a, b]] = 1;
        }
    }
    Ok(AffinityMatrix {
        ids,
        values,
        counts,
        kind: AffinityKind::Pairwise,
        provenance: scores.provenance,
        filled: vec![],
    })
}

/// Assemble the higher-order matrix: `T[i][j]` averages `f(S_k, i)` over the
/// sampled subsets containing both `i` and `j` (the diagonal over subsets
/// containing `i`).
///
/// Cells never covered by the plan are filled with the row's diagonal value
/// and recorded in `filled`; an uncovered diagonal falls back to the mean of
/// the observed diagonals first.
pub fn higher_order_matrix<R: Real>(
    scores: &ScoreTable<R>,
    plan: &SubsetPlan,
    ids: &[usize],
) -> Result<AffinityMatrix<R>> {
    let n = ids.len();
    let index: BTreeMap<usize, usize> = ids.iter().enumerate().map(|(a, &i)| (i, a)).collect();
    let mut sums: Array2<R> = Array2::zeros((n, n));
    let mut counts: Array2<u64> = Array2::zeros((n, n));
    for (k, subset) in plan.subsets.iter().enumerate() {
        for &i in subset {
            let a = *index
                .get(&i)
                .ok_or_else(|| Error::InvalidArgument(format!("plan task {i} not in ids")))?;
            let f = scores.get(k, i).ok_or_else(|| Error::MissingScore {
                subset: subset.clone(),
                task: i,
            })?;
            for &j in subset {
                let b = index[&j];
                sums[[a, b]] += f;
                counts[[a, b]] += 1;
            }
        }
    }

    let mut values: Array2<R> = Array2::zeros((n, n));
    let mut filled = Vec::new();
    // diagonals first; uncovered ones take the mean of covered diagonals
    let mut covered_diag = Vec::new();
    for a in 0..n {
        if counts[[a, a]] > 0 {
            covered_diag.push(sums[[a, a]] / R::of(counts[[a, a]] as f64));
        }
    }
    if covered_diag.is_empty() {
        return Err(Error::EmptyInput("higher_order_matrix has no covered tasks"));
    }
    let diag_mean = linalg::mean(&covered_diag);
    for a in 0..n {
        values[[a, a]] = if counts[[a, a]] > 0 {
            sums[[a, a]] / R::of(counts[[a, a]] as f64)
        } else {
            filled.push((a, a));
            diag_mean
        };
    }
    for a in 0..n {
        for b in 0..n {
            if a == b {
                continue;
            }
            if counts[[a, b]] > 0 {
                values[[a, b]] = sums[[a, b]] / R::of(counts[[a, b]] as f64);
            } else {
                // neutral self-transfer prior keeps the matrix total
                values[[a, b]] = values[[a, a]];
                filled.push((a, b));
            }
        }
    }
    Ok(AffinityMatrix {
        ids: ids.to_vec(),
        values,
        counts,
        kind: AffinityKind::HigherOrder,
        provenance: scores.provenance,
        filled,
    })
}

/// Relative squared Frobenius distance `||T - T*||^2 / ||T*||^2`.
pub fn matrix_distance<R: Real>(t: &AffinityMatrix<R>, t_star: &AffinityMatrix<R>) -> Result<R> {
    if t.values.dim() != t_star.values.dim() {
        return Err(Error::DimensionMismatch {
            expected: t_star.n(),
            got: t.n(),
            context: "matrix_distance",
        });
    }
    let mut num = R::zero();
    let mut den = R::zero();
    for (a, b) in t.values.iter().zip(t_star.values.iter()) {
        let d = *a - *b;
        num += d * d;
        den += *b * *b;
    }
    if den == R::zero() {
        return Err(Error::DegenerateNormalization("zero-norm reference matrix"));
    }
    Ok(num / den)
}

/// Spearman rank correlation between matching columns of `T` and `T*`;
/// constant columns yield `None` and are excluded from the mean.
pub fn per_task_spearman<R: Real>(
    t: &AffinityMatrix<R>,
    t_star: &AffinityMatrix<R>,
) -> Result<(Vec<Option<R>>, R)> {
    let n = t.n();
    if n < 3 {
        return Err(Error::InvalidArgument(
            "per_task_spearman needs n >= 3".into(),
        ));
    }
    if t_star.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: t_star.n(),
            context: "per_task_spearman",
        });
    }
    let mut correlations = Vec::with_capacity(n);
    let mut defined = Vec::new();
    for col in 0..n {
        let a: Vec<R> = (0..n).map(|r| t.values[[r, col]]).collect();
        let b: Vec<R> = (0..n).map(|r| t_star.values[[r, col]]).collect();
        let rho = linalg::spearman(&a, &b);
        if let Some(v) = rho {
            defined.push(v);
        }
        correlations.push(rho);
    }
    if defined.is_empty() {
        return Err(Error::DegenerateNormalization(
            "all columns constant in spearman",
        ));
    }
    let mean = linalg::mean(&defined);
    Ok((correlations, mean))
}

// ---------------------------------------------------------------------------
// CSV (f64 pipeline formats)
// ---------------------------------------------------------------------------

/// Affinity CSV: first row is the task ids, then one row of values per task.
pub fn affinity_to_csv(matrix: &AffinityMatrix<f64>) -> String {
    let mut out = String::new();
    out.push_str(
        &matrix
            .ids
            .iter()
            .map(|i| i.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    out.push('\n');
    for r in 0..matrix.n() {
        let row: Vec<String> = (0..matrix.n())
            .map(|c| format!("{}", matrix.values[[r, c]]))
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Companion counts CSV, same shape as the affinity CSV.
pub fn counts_to_csv(matrix: &AffinityMatrix<f64>) -> String {
    let mut out = String::new();
    out.push_str(
        &matrix
            .ids
            .iter()
            .map(|i| i.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    out.push('\n');
    for r in 0..matrix.n() {
        let row: Vec<String> = (0..matrix.n())
            .map(|c| matrix.counts[[r, c]].to_string())
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Parse an affinity CSV produced by [`affinity_to_csv`].
pub fn affinity_from_csv(text: &str, kind: AffinityKind) -> Result<AffinityMatrix<f64>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty affinity csv".into()))?;
    let ids: Vec<usize> = header
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|e| Error::Format(format!("bad task id '{s}': {e}")))
        })
        .collect::<Result<_>>()?;
    let n = ids.len();
    let mut values = Array2::zeros((n, n));
    for (r, line) in lines.enumerate() {
        if r >= n {
            return Err(Error::Format("too many rows in affinity csv".into()));
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != n {
            return Err(Error::Format(format!(
                "row {r} has {} cells, expected {n}",
                cells.len()
            )));
        }
        for (c, cell) in cells.iter().enumerate() {
            values[[r, c]] = cell
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Format(format!("bad value '{cell}': {e}")))?;
        }
    }
    Ok(AffinityMatrix {
        ids,
        values,
        counts: Array2::ones((n, n)),
        kind,
        provenance: Provenance::Estimated,
        filled: vec![],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Sample;

    #[test]
    fn forced_subsets_when_alpha_equals_n() {
        let plan = sample_subsets(5, 7, 5, 3).unwrap();
        for s in &plan.subsets {
            assert_eq!(s, &vec![0, 1, 2, 3, 4]);
        }
    }

    #[test]
    fn alpha_larger_than_n_rejected() {
        assert!(sample_subsets(5, 3, 6, 0).is_err());
    }

    #[test]
    fn appearance_counts_near_binomial_expectation() {
        // n=100, m=2000, alpha=10: each task expected 200 appearances,
        // within 4 sigma of Binomial(2000, 0.1).
        let plan = sample_subsets(100, 2000, 10, 12345).unwrap();
        let mut counts = vec![0usize; 100];
        for s in &plan.subsets {
            assert_eq!(s.len(), 10);
            let mut sorted = s.clone();
            sorted.dedup();
            assert_eq!(sorted.len(), 10, "duplicate inside subset");
            for &t in s {
                counts[t] += 1;
            }
        }
        let sigma = (2000.0f64 * 0.1 * 0.9).sqrt();
        for (t, &c) in counts.iter().enumerate() {
            assert!(
                (c as f64 - 200.0).abs() <= 4.0 * sigma,
                "task {t} appeared {c} times"
            );
        }
    }

    #[test]
    fn plan_is_deterministic() {
        let a = sample_subsets(30, 50, 4, 9).unwrap();
        let b = sample_subsets(30, 50, 4, 9).unwrap();
        assert_eq!(a, b);
        let c = sample_subsets(30, 50, 4, 10).unwrap();
        assert_ne!(a, c);
    }

    fn table_from(entries: &[(&[usize], usize, f64)]) -> ScoreTable<f64> {
        let subsets: Vec<Vec<usize>> = {
            let mut seen: Vec<Vec<usize>> = Vec::new();
            for (s, _, _) in entries {
                let v = s.to_vec();
                if !seen.contains(&v) {
                    seen.push(v);
                }
            }
            seen
        };
        let mut table = ScoreTable::new(subsets.clone(), Provenance::Oracle);
        for (s, task, score) in entries {
            let idx = subsets.iter().position(|x| x == &s.to_vec()).unwrap();
            table.insert(idx, *task, *score).unwrap();
        }
        table
    }

    #[test]
    fn pairwise_matrix_placement() {
        let table = table_from(&[
            (&[1], 1, 0.8),
            (&[2], 2, 0.6),
            (&[1, 2], 1, 0.9),
            (&[1, 2], 2, 0.7),
        ]);
        let m = pairwise_matrix(&table).unwrap();
        assert_eq!(m.ids, vec![1, 2]);
        assert_eq!(m.values[[0, 0]], 0.8);
        assert_eq!(m.values[[0, 1]], 0.9);
        assert_eq!(m.values[[1, 0]], 0.7);
        assert_eq!(m.values[[1, 1]], 0.6);
    }

    #[test]
    fn pairwise_symmetric_inputs_give_symmetric_matrix() {
        let table = table_from(&[
            (&[0], 0, 0.5),
            (&[1], 1, 0.5),
            (&[0, 1], 0, 0.75),
            (&[0, 1], 1, 0.75),
        ]);
        let m = pairwise_matrix(&table).unwrap();
        assert_eq!(m.values[[0, 1]], m.values[[1, 0]]);
    }

    #[test]
    fn pairwise_missing_entry_errors_and_plan_counts() {
        let table = table_from(&[(&[0], 0, 0.5), (&[1], 1, 0.5)]);
        assert!(matches!(
            pairwise_matrix(&table),
            Err(Error::MissingScore { .. })
        ));
        // n tasks need C(n,2) + n plan entries
        let plan = pairwise_plan(&[0, 1, 2, 3, 4]);
        assert_eq!(plan.len(), 10 + 5);
    }

    #[test]
    fn higher_order_two_term_mean() {
        // plan {1,2}, {2,3}, {1,2} with f(S1,1)=0.8 and f(S3,1)=0.6
        let subsets = vec![vec![1, 2], vec![2, 3], vec![1, 2]];
        let plan = SubsetPlan {
            subsets: subsets.clone(),
            alpha: 2,
            m: 3,
            seed: 0,
        };
        let mut table = ScoreTable::new(subsets, Provenance::Oracle);
        table.insert(0, 1, 0.8).unwrap();
        table.insert(0, 2, 0.5).unwrap();
        table.insert(1, 2, 0.4).unwrap();
        table.insert(1, 3, 0.3).unwrap();
        table.insert(2, 1, 0.6).unwrap();
        table.insert(2, 2, 0.5).unwrap();
        let m: AffinityMatrix<f64> = higher_order_matrix(&table, &plan, &[1, 2, 3]).unwrap();
        assert!((m.values[[0, 1]] - 0.7).abs() < 1e-12);
        assert_eq!(m.counts[[0, 1]], 2);
        // task 1 and task 3 never co-occur: filled from the diagonal
        assert!(m.filled.contains(&(0, 2)));
        assert_eq!(m.values[[0, 2]], m.values[[0, 0]]);
    }

    #[test]
    fn higher_order_on_all_pairs_matches_pairwise_offdiagonal() {
        let ids = [0usize, 1, 2, 3];
        let mut entries: Vec<(Vec<usize>, usize, f64)> = Vec::new();
        for &i in &ids {
            entries.push((vec![i], i, 0.5 + i as f64 / 10.0));
        }
        for a in 0..4 {
            for b in (a + 1)..4 {
                entries.push((vec![a, b], a, 0.1 * (a + b) as f64));
                entries.push((vec![a, b], b, 0.05 * (a + b) as f64));
            }
        }
        let refs: Vec<(&[usize], usize, f64)> = entries
            .iter()
            .map(|(s, t, v)| (s.as_slice(), *t, *v))
            .collect();
        let table = table_from(&refs);
        let pw = pairwise_matrix(&table).unwrap();

        // higher-order over the pairs-only plan
        let pair_subsets: Vec<Vec<usize>> = table
            .subsets
            .iter()
            .filter(|s| s.len() == 2)
            .cloned()
            .collect();
        let plan = SubsetPlan {
            m: pair_subsets.len(),
            subsets: pair_subsets.clone(),
            alpha: 2,
            seed: 0,
        };
        let mut pair_table = ScoreTable::new(pair_subsets.clone(), Provenance::Oracle);
        for (k, s) in pair_subsets.iter().enumerate() {
            for &t in s {
                pair_table
                    .insert(k, t, table.get_by_subset(s, t).unwrap())
                    .unwrap();
            }
        }
        let ho = higher_order_matrix(&pair_table, &plan, &ids).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                if a != b {
                    assert!((ho.values[[a, b]] - pw.values[[a, b]]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn higher_order_matches_exhaustive_definition() {
        // all C(6,3) subsets once; brute-force the definition directly
        let n = 6;
        let mut subsets = Vec::new();
        for a in 0..n {
            for b in (a + 1)..n {
                for c in (b + 1)..n {
                    subsets.push(vec![a, b, c]);
                }
            }
        }
        let plan = SubsetPlan {
            m: subsets.len(),
            subsets: subsets.clone(),
            alpha: 3,
            seed: 0,
        };
        let mut table = ScoreTable::new(subsets.clone(), Provenance::Oracle);
        let mut s = Stream::new(77);
        for (k, subset) in subsets.iter().enumerate() {
            for &t in subset {
                table.insert(k, t, s.next_f64()).unwrap();
            }
        }
        let ids: Vec<usize> = (0..n).collect();
        let m = higher_order_matrix(&table, &plan, &ids).unwrap();
        for i in 0..n {
            for j in 0..n {
                let mut sum = 0.0;
                let mut cnt = 0u64;
                for (k, subset) in subsets.iter().enumerate() {
                    if subset.contains(&i) && subset.contains(&j) {
                        sum += table.get(k, i).unwrap();
                        cnt += 1;
                    }
                }
                assert_eq!(m.counts[[i, j]], cnt);
                assert!((m.values[[i, j]] - sum / cnt as f64).abs() < 1e-12);
            }
        }
    }

    fn matrix_of(vals: &[[f64; 2]; 2]) -> AffinityMatrix<f64> {
        let mut values = Array2::zeros((2, 2));
        for r in 0..2 {
            for c in 0..2 {
                values[[r, c]] = vals[r][c];
            }
        }
        AffinityMatrix {
            ids: vec![0, 1],
            values,
            counts: Array2::ones((2, 2)),
            kind: AffinityKind::Pairwise,
            provenance: Provenance::Oracle,
            filled: vec![],
        }
    }

    #[test]
    fn matrix_distance_cases() {
        let t_star = matrix_of(&[[1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(matrix_distance(&t_star, &t_star).unwrap(), 0.0);
        let doubled = matrix_of(&[[2.0, 0.0], [0.0, 2.0]]);
        assert!((matrix_distance(&doubled, &t_star).unwrap() - 1.0).abs() < 1e-12);
        let t = matrix_of(&[[1.0, 1.0], [0.0, 1.0]]);
        assert!((matrix_distance(&t, &t_star).unwrap() - 0.5).abs() < 1e-12);
        let zero = matrix_of(&[[0.0, 0.0], [0.0, 0.0]]);
        assert!(matrix_distance(&t, &zero).is_err());
    }

    fn matrix_n(vals: &[&[f64]]) -> AffinityMatrix<f64> {
        let n = vals.len();
        let mut values = Array2::zeros((n, n));
        for r in 0..n {
            for c in 0..n {
                values[[r, c]] = vals[r][c];
            }
        }
        AffinityMatrix {
            ids: (0..n).collect(),
            values,
            counts: Array2::ones((n, n)),
            kind: AffinityKind::HigherOrder,
            provenance: Provenance::Oracle,
            filled: vec![],
        }
    }

    #[test]
    fn spearman_identity_reversal_and_noise() {
        let t_star = matrix_n(&[
            &[0.9, 0.1, 0.2],
            &[0.4, 0.8, 0.3],
            &[0.2, 0.5, 0.7],
        ]);
        let (rho, mean) = per_task_spearman(&t_star, &t_star).unwrap();
        for r in rho {
            assert_eq!(r, Some(1.0));
        }
        assert_eq!(mean, 1.0);

        // reversing one column flips its correlation to -1
        let mut reversed = t_star.clone();
        for r in 0..3 {
            reversed.values[[r, 0]] = -t_star.values[[r, 0]];
        }
        let (rho, _) = per_task_spearman(&reversed, &t_star).unwrap();
        assert_eq!(rho[0], Some(-1.0));

        // monotone noise keeps correlation in (0, 1); cross-check against an
        // independent rank-then-pearson recomputation
        let noisy = matrix_n(&[
            &[0.85, 0.12, 0.25],
            &[0.45, 0.70, 0.28],
            &[0.30, 0.55, 0.75],
        ]);
        let (rho, mean) = per_task_spearman(&noisy, &t_star).unwrap();
        assert!(mean > 0.0 && mean <= 1.0);
        for col in 0..3 {
            let a: Vec<f64> = (0..3).map(|r| noisy.values[[r, col]]).collect();
            let b: Vec<f64> = (0..3).map(|r| t_star.values[[r, col]]).collect();
            let rank = |xs: &[f64]| -> Vec<f64> {
                xs.iter()
                    .map(|&x| xs.iter().filter(|&&y| y < x).count() as f64)
                    .collect()
            };
            let (ra, rb) = (rank(&a), rank(&b));
            let ma = ra.iter().sum::<f64>() / 3.0;
            let mb = rb.iter().sum::<f64>() / 3.0;
            let mut num = 0.0;
            let mut da = 0.0;
            let mut db = 0.0;
            for i in 0..3 {
                num += (ra[i] - ma) * (rb[i] - mb);
                da += (ra[i] - ma).powi(2);
                db += (rb[i] - mb).powi(2);
            }
            let independent = num / (da * db).sqrt();
            assert!((rho[col].unwrap() - independent).abs() < 1e-12);
        }

        // constant column is undefined
        let constant = matrix_n(&[
            &[0.5, 0.1, 0.2],
            &[0.5, 0.8, 0.3],
            &[0.5, 0.5, 0.7],
        ]);
        let (rho, _) = per_task_spearman(&constant, &t_star).unwrap();
        assert_eq!(rho[0], None);
    }

    fn small_tasks(n: usize, seed: u64) -> TaskCollection<f64> {
        let mut s = Stream::new(seed);
        let dim = 4;
        let tasks = (0..n)
            .map(|id| {
                let teacher: Vec<f64> = (0..dim).map(|_| s.next_gaussian()).collect();
                let mut gen = |count: usize| -> Vec<Sample<f64>> {
                    (0..count)
                        .map(|_| {
                            let x: Vec<f64> = (0..dim).map(|_| s.next_gaussian()).collect();
                            let y = if linalg::dot(&x, &teacher) > 0.0 { 1.0 } else { -1.0 };
                            Sample::new(x, y)
                        })
                        .collect()
                };
                crate::models::Task {
                    id,
                    train: gen(20),
                    val: vec![],
                    test: gen(12),
                }
            })
            .collect();
        TaskCollection::new(dim, tasks).unwrap()
    }

    #[test]
    fn duplicate_member_seeds_collapse_to_single_member() {
        let tasks = small_tasks(5, 3);
        let plan = sample_subsets(5, 8, 2, 11).unwrap();
        let train = TrainConfig {
            epochs: 10,
            ..Default::default()
        };
        let arch = ArchitectureSpec::linear(4);
        let mut cfg = EstimationConfig::new(arch, train, 42, 1);
        cfg.d = Some(6);
        let (single, _) = estimate_scores(&tasks, &plan, &cfg).unwrap();
        cfg.member_seeds = vec![cfg.member_seeds[0], cfg.member_seeds[0]];
        let (double, _) = estimate_scores(&tasks, &plan, &cfg).unwrap();
        for (k, v) in &single.entries {
            let w = double.entries[k];
            assert!((v - w).abs() < 1e-15, "entry {k:?}: {v} vs {w}");
        }
    }

    #[test]
    fn easy_regime_oracle_affinity_separates_clusters() {
        // noise 0, tiny flip rate, orthogonal teachers: the oracle
        // higher-order matrix has larger within-cluster than cross-cluster
        // entries on average
        let synth = crate::synth::SynthConfig {
            n_tasks: 6,
            k_true: 2,
            input_dim: 8,
            train_per_task: 30,
            val_per_task: 0,
            test_per_task: 20,
            teacher_noise: 0.0,
            flip_rate: 0.02,
            cross_cluster_angle_deg: 90.0,
            seed: 88,
        };
        let (tasks, truth) = crate::synth::generate::<f64>(&synth).unwrap();
        let plan = sample_subsets(6, 24, 2, 17).unwrap();
        let cfg = TrainConfig {
            epochs: 25,
            ..Default::default()
        };
        let arch = ArchitectureSpec::linear(8);
        let mut ledger = FlopsLedger::default();
        let scores = crate::models::oracle_scores(
            &tasks,
            &plan.subsets,
            crate::models::OracleStart::FromScratch(&arch),
            &cfg,
            Metric::Accuracy,
            &mut ledger,
        )
        .unwrap();
        let t = higher_order_matrix(&scores, &plan, &tasks.ids()).unwrap();
        let mut within = Vec::new();
        let mut cross = Vec::new();
        for i in 0..6 {
            for j in 0..6 {
                if i == j || t.counts[[i, j]] == 0 {
                    continue;
                }
                if truth.cluster_of(i) == truth.cluster_of(j) {
                    within.push(t.values[[i, j]]);
                } else {
                    cross.push(t.values[[i, j]]);
                }
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(
            mean(&within) > mean(&cross),
            "within {} vs cross {}",
            mean(&within),
            mean(&cross)
        );
    }

    #[test]
    fn higher_order_converges_to_all_subsets_average() {
        // deterministic synthetic score function, no training needed
        let n = 6;
        let score = |subset: &[usize], task: usize| -> f64 {
            let mut acc = 0.37 + 0.05 * task as f64;
            for &j in subset {
                acc += 0.013 * ((task * 7 + j * 3) % 11) as f64;
            }
            acc / (1.0 + subset.len() as f64 * 0.1)
        };
        let fill = |plan: &SubsetPlan| -> ScoreTable<f64> {
            let mut table = ScoreTable::new(plan.subsets.clone(), Provenance::Oracle);
            for (k, subset) in plan.subsets.iter().enumerate() {
                for &t in subset {
                    table.insert(k, t, score(subset, t)).unwrap();
                }
            }
            table
        };
        // exhaustive reference: every size-3 subset exactly once
        let mut all = Vec::new();
        for a in 0..n {
            for b in (a + 1)..n {
                for c in (b + 1)..n {
                    all.push(vec![a, b, c]);
                }
            }
        }
        let full_plan = SubsetPlan {
            m: all.len(),
            subsets: all,
            alpha: 3,
            seed: 0,
        };
        let ids: Vec<usize> = (0..n).collect();
        let reference =
            higher_order_matrix(&fill(&full_plan), &full_plan, &ids).unwrap();

        // growing sampled plans from one seed family approach the reference
        let mut dists = Vec::new();
        for &m in &[100usize, 800, 6400] {
            let plan = sample_subsets(n, m, 3, 42).unwrap();
            let t = higher_order_matrix(&fill(&plan), &plan, &ids).unwrap();
            dists.push(matrix_distance(&t, &reference).unwrap());
        }
        assert!(
            dists[0] > dists[1] && dists[1] > dists[2],
            "distances not shrinking: {dists:?}"
        );
        assert!(dists[2] < 1e-4, "limit not reached: {dists:?}");
    }

    #[test]
    fn estimation_deterministic_and_cheaper_than_oracle() {
        let tasks = small_tasks(6, 9);
        let plan = sample_subsets(6, 12, 3, 5).unwrap();
        let train = TrainConfig {
            epochs: 12,
            ..Default::default()
        };
        let arch = ArchitectureSpec::linear(4);
        let mut cfg = EstimationConfig::new(arch, train, 7, 1);
        cfg.d = Some(5);
        let (a, report_a) = estimate_scores(&tasks, &plan, &cfg).unwrap();
        let (b, _) = estimate_scores(&tasks, &plan, &cfg).unwrap();
        let bits = |t: &ScoreTable<f64>| -> Vec<(usize, usize, u64)> {
            t.entries
                .iter()
                .map(|(&(k, j), v)| (k, j, v.to_bits()))
                .collect()
        };
        assert_eq!(bits(&a), bits(&b));

        // oracle over the same plan costs more FLOPs when m >> M
        let mut oracle_ledger = FlopsLedger::default();
        let anchor: ModelParams<f64> = init_model(&arch, 1).unwrap();
        let _ = crate::models::oracle_scores(
            &tasks,
            &plan.subsets,
            crate::models::OracleStart::FineTune(&anchor),
            &train,
            Metric::Accuracy,
            &mut oracle_ledger,
        )
        .unwrap();
        assert!(
            report_a.ledger.total() < oracle_ledger.total(),
            "estimation {} vs oracle {}",
            report_a.ledger.total(),
            oracle_ledger.total()
        );
    }
}
