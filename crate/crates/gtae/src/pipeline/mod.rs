//! End-to-end task grouping: estimate affinities, cluster, train per group.
//!
//! # Seed derivation tree
//!
//! All randomness flows from `run.seed` through labeled derivations
//! ([`crate::rng::derive`]):
//!
//! ```text
//! seed
//! ├── ("member", k)            per-ensemble-member seed, then
//! │   ├── ("meta-init", 0)     initialization of the k-th base model
//! │   ├── ("meta-train", 0)    SGD shuffling of the k-th base training
//! │   └── ("projection", 0)    the k-th member's sketch matrix
//! ├── ("plan", 0)              subset sampling
//! ├── ("oracle", 0)            oracle per-subset training (splits again
//! │                            internally per subset index)
//! ├── ("group-train", c)       final per-cluster training
//! ├── ("baseline", 0)          spectral/Lloyd restarts
//! └── ("synth-*", i)           benchmark generation
//! ```
//!
//! # Resume
//!
//! With an output directory, base models (`meta_k.json`) and projected
//! gradient features (`member_k.{train,test}.grad`) are cached and reloaded
//! on rerun; all downstream numbers are deterministic functions of the
//! config, so a rerun writes byte-identical outputs. The FLOP ledger is an
//! analytic cost model of the configured computation and is charged whether
//! or not a stage was served from cache.

pub mod config;
pub mod io;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::affinity::{
    higher_order_matrix, pairwise_matrix, pairwise_plan, sample_subsets_over, AffinityMatrix,
    EstimationConfig, EstimationReport, MemberFeatures, ProjectionKind, SubsetPlan,
};
use crate::cluster::{
    lloyd_baseline, round_solution, solve_sdp, spectral_baseline, ClusterAssignment,
    RoundingConfig, SdpOptions, SdpResiduals,
};
use crate::error::{Error, Result};
use crate::flops::{self, FlopsLedger, Phase};
use crate::models::{
    evaluate, train, ModelParams, OracleStart, ScoreTable, TaskCollection,
};
use crate::rng::derive;
use crate::sketch::ProjectionHandle;
use crate::synth::adjusted_rand_index;

pub use config::{AffinityMode, RunConfig};

/// Honor `GTAE_THREADS` for the global worker pool; call once at startup.
/// Returns the worker count in effect.
pub fn init_thread_pool() -> usize {
    if let Ok(v) = std::env::var("GTAE_THREADS") {
        if let Ok(n) = v.trim().parse::<usize>() {
            if n >= 1 {
                // ignore failure: the pool may already be built, which is fine
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
    rayon::current_num_threads()
}

// ---------------------------------------------------------------------------
// Shared preparation: base models and projected features
// ---------------------------------------------------------------------------

pub struct PreparedMembers {
    pub metas: Vec<ModelParams<f64>>,
    pub features: Vec<MemberFeatures<f64>>,
    pub arch_p: usize,
    pub d: usize,
}

/// The estimation configuration implied by a run config.
pub fn estimation_config(
    cfg: &RunConfig,
    arch: crate::models::ArchitectureSpec,
) -> Result<EstimationConfig> {
    Ok(EstimationConfig {
        arch,
        member_seeds: (0..cfg.run.members as u64)
            .map(|k| derive(cfg.run.seed, "member", k))
            .collect(),
        d: cfg.run.d,
        eps: cfg.run.eps,
        ridge: cfg.run.ridge,
        metric: cfg.metric()?,
        projection: ProjectionKind::Gaussian,
        train: cfg.train_config()?,
    })
}

/// Train (or reload) the base models and their projected gradient features.
pub fn prepare_members(
    cfg: &RunConfig,
    tasks: &TaskCollection<f64>,
    out: Option<&Path>,
    ledger: &mut FlopsLedger,
) -> Result<PreparedMembers> {
    let arch = cfg.arch(tasks.input_dim)?;
    let est = estimation_config(cfg, arch)?;
    let p = arch.param_count();
    let d = est.resolve_d(p)?;
    let all_train = tasks.all_train().len();
    let sample_total: usize = tasks
        .tasks
        .iter()
        .map(|t| t.train.len() + t.test.len())
        .sum();

    let mut metas = Vec::with_capacity(est.members());
    let mut features = Vec::with_capacity(est.members());
    for member in 0..est.members() {
        // base model
        let meta_path = out.map(|dir| dir.join(format!("meta_{member}.json")));
        let meta = match meta_path.as_ref().filter(|p| p.exists()) {
            Some(path) => {
                let model = io::read_model(path)?;
                if model.spec != arch {
                    return Err(Error::Config(format!(
                        "cached base model {} does not match the configured architecture",
                        path.display()
                    )));
                }
                model
            }
            None => {
                let mut scratch = FlopsLedger::default();
                let model =
                    crate::affinity::meta_initialization(tasks, &est, member, &mut scratch)?;
                if let Some(path) = &meta_path {
                    io::write_model(path, &model)?;
                }
                model
            }
        };
        ledger.add(
            Phase::MetaTraining,
            flops::training_flops(&arch, all_train, est.train.epochs),
        );

        // projected features
        let proj_seed = derive(est.member_seeds[member], "projection", 0);
        let handle = ProjectionHandle::gaussian(p, d, proj_seed)?;
        let train_path = out.map(|dir| dir.join(format!("member_{member}.train.grad")));
        let test_path = out.map(|dir| dir.join(format!("member_{member}.test.grad")));
        let cached = match (&train_path, &test_path) {
            (Some(tr), Some(te)) if tr.exists() && te.exists() => {
                let a = io::read_gradient_cache(tr)?;
                let b = io::read_gradient_cache(te)?;
                let matches = |c: &io::GradientCache| {
                    c.p == p as u64 && c.d == d as u64 && c.seed == proj_seed
                };
                if matches(&a) && matches(&b) {
                    Some(MemberFeatures::from_records(
                        p,
                        d,
                        proj_seed,
                        a.records,
                        b.records,
                    ))
                } else {
                    None
                }
            }
            _ => None,
        };
        let feats = match cached {
            Some(f) => f,
            None => {
                let mut scratch = FlopsLedger::default();
                let f = crate::affinity::member_features(&meta, tasks, &handle, &mut scratch)?;
                if let (Some(tr), Some(te)) = (&train_path, &test_path) {
                    io::write_gradient_cache(tr, p as u64, d as u64, proj_seed, &f.train)?;
                    io::write_gradient_cache(te, p as u64, d as u64, proj_seed, &f.test)?;
                }
                f
            }
        };
        ledger.add(
            Phase::GradientExtraction,
            flops::extraction_flops(&arch, sample_total),
        );
        ledger.add(
            Phase::Projection,
            flops::projection_flops(p, d, sample_total),
        );
        metas.push(meta);
        features.push(feats);
    }
    Ok(PreparedMembers {
        metas,
        features,
        arch_p: p,
        d,
    })
}

/// The subset plan a config implies for a task id set.
pub fn plan_for(cfg: &RunConfig, ids: &[usize]) -> Result<SubsetPlan> {
    match cfg.run.mode {
        AffinityMode::HigherOrder => sample_subsets_over(
            ids,
            cfg.run.m,
            cfg.run.alpha.min(ids.len()),
            derive(cfg.run.seed, "plan", 0),
        ),
        AffinityMode::Pairwise => {
            let subsets = pairwise_plan(ids);
            Ok(SubsetPlan {
                m: subsets.len(),
                alpha: 2,
                subsets,
                seed: cfg.run.seed,
            })
        }
    }
}

/// Assemble the affinity matrix a config's mode dictates.
pub fn assemble_matrix(
    cfg: &RunConfig,
    scores: &ScoreTable<f64>,
    plan: &SubsetPlan,
    ids: &[usize],
) -> Result<AffinityMatrix<f64>> {
    match cfg.run.mode {
        AffinityMode::Pairwise => pairwise_matrix(scores),
        AffinityMode::HigherOrder => higher_order_matrix(scores, plan, ids),
    }
}

// ---------------------------------------------------------------------------
// Full pipeline
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SdpDiagnostics {
    pub objective: f64,
    pub residuals: SdpResiduals,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub config_hash: String,
    pub assignment: ClusterAssignment,
    /// Test score of each task under its cluster's model.
    pub per_task_scores: BTreeMap<String, f64>,
    pub mean_score: f64,
    /// Mean test score of the first base model (all tasks together).
    pub naive_mean_score: f64,
    pub sdp: SdpDiagnostics,
    pub non_converged_fits: usize,
    /// Versus the oracle, when `compare_oracle` is set.
    pub affinity_distance: Option<f64>,
    pub mean_spearman: Option<f64>,
    /// Versus a planted ground-truth partition, when given.
    pub ari: Option<f64>,
    pub flops: FlopsLedger,
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

/// Run the full grouping pipeline. When `out` is given, intermediate
/// artifacts are cached there and the report, assignment and affinity files
/// are written.
pub fn run_gtg(
    cfg: &RunConfig,
    tasks: &TaskCollection<f64>,
    truth: Option<&ClusterAssignment>,
    out: Option<&Path>,
) -> Result<RunReport> {
    cfg.validate()?;
    let started = std::time::Instant::now();
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
    }
    let mut ledger = FlopsLedger::default();
    let metric = cfg.metric()?;
    let ids = tasks.ids();

    // steps 1-3: base models, features, subset scores
    let prepared = prepare_members(cfg, tasks, out, &mut ledger)?;
    let plan = plan_for(cfg, &ids)?;
    let est = estimation_config(cfg, cfg.arch(tasks.input_dim)?)?;
    let mut est_report = EstimationReport::default();
    let scores = crate::affinity::estimate_scores_from_features(
        &prepared.features,
        &plan,
        &est,
        &mut est_report,
    )?;
    ledger.merge(&est_report.ledger);
    if let Some(dir) = out {
        io::write_scores(&dir.join("scores.json"), &scores)?;
    }

    // step 4: affinity matrix
    let matrix = assemble_matrix(cfg, &scores, &plan, &ids)?;
    if let Some(dir) = out {
        std::fs::write(
            dir.join("affinity.csv"),
            crate::affinity::affinity_to_csv(&matrix),
        )?;
        std::fs::write(
            dir.join("counts.csv"),
            crate::affinity::counts_to_csv(&matrix),
        )?;
    }

    // steps 5-6: SDP + rounding
    let cluster_input = if cfg.run.loss_mode {
        AffinityMatrix {
            values: matrix.values.mapv(|v| -v),
            ..matrix.clone()
        }
    } else {
        matrix.clone()
    };
    let k = cfg.run.k.min(ids.len());
    let sdp = solve_sdp(&cluster_input, k, &SdpOptions::default())?;
    ledger.add(Phase::Sdp, flops::sdp_flops(ids.len(), sdp.iterations));
    let rounding = RoundingConfig {
        target_k: k,
        c_grid: cfg.lambda_grid()?,
    };
    let assignment = round_solution(&sdp.x_hat, &matrix.ids, &rounding)?;
    if let Some(dir) = out {
        io::write_assignment(&dir.join("assignment.json"), &assignment)?;
    }

    // final per-group training (fine-tuned from the first base model with
    // the same training hyperparameters)
    let train_cfg = cfg.train_config()?;
    let mut per_task_scores = BTreeMap::new();
    for (c_idx, cluster) in assignment.clusters.iter().enumerate() {
        let data = tasks.gather_train(cluster)?;
        let sub_cfg = train_cfg.with_seed(derive(cfg.run.seed, "group-train", c_idx as u64));
        let model = train(&prepared.metas[0], &data, &sub_cfg)?;
        ledger.add(
            Phase::OracleTraining,
            flops::training_flops(&cfg.arch(tasks.input_dim)?, data.len(), sub_cfg.epochs),
        );
        for &task in cluster {
            let score = evaluate(&model, &tasks.task(task)?.test, metric)?;
            per_task_scores.insert(task.to_string(), score);
        }
    }
    let mean_score =
        per_task_scores.values().sum::<f64>() / per_task_scores.len().max(1) as f64;
    let naive_mean_score = {
        let mut acc = 0.0;
        for task in &tasks.tasks {
            acc += evaluate(&prepared.metas[0], &task.test, metric)?;
        }
        acc / tasks.len() as f64
    };

    // optional oracle comparison over the same plan
    let (affinity_distance, mean_spearman) = if cfg.run.compare_oracle {
        let oracle_cfg = train_cfg.with_seed(derive(cfg.run.seed, "oracle", 0));
        let oracle = crate::models::oracle_scores(
            tasks,
            &plan.subsets,
            OracleStart::FineTune(&prepared.metas[0]),
            &oracle_cfg,
            metric,
            &mut ledger,
        )?;
        let t_star = assemble_matrix(cfg, &oracle, &plan, &ids)?;
        if let Some(dir) = out {
            io::write_scores(&dir.join("oracle_scores.json"), &oracle)?;
            std::fs::write(
                dir.join("oracle_affinity.csv"),
                crate::affinity::affinity_to_csv(&t_star),
            )?;
        }
        let distance = crate::affinity::matrix_distance(&matrix, &t_star)?;
        let spearman = if ids.len() >= 3 {
            Some(crate::affinity::per_task_spearman(&matrix, &t_star)?.1)
        } else {
            None
        };
        (Some(distance), spearman)
    } else {
        (None, None)
    };

    let ari = match truth {
        Some(t) => Some(adjusted_rand_index(&assignment, t)?),
        None => None,
    };

    let report = RunReport {
        config_hash: cfg.hash()?,
        assignment,
        per_task_scores,
        mean_score,
        naive_mean_score,
        sdp: SdpDiagnostics {
            objective: sdp.objective,
            residuals: sdp.residuals,
            iterations: sdp.iterations,
            converged: sdp.converged,
        },
        non_converged_fits: est_report.non_converged.len(),
        affinity_distance,
        mean_spearman,
        ari,
        flops: ledger,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    if let Some(dir) = out {
        std::fs::write(
            dir.join("report.json"),
            serde_json::to_string_pretty(&report)?,
        )?;
    }
    Ok(report)
}

/// Run clustering baselines on an affinity matrix (CLI `cluster` command).
pub fn cluster_baselines(
    matrix: &AffinityMatrix<f64>,
    k: usize,
    seed: u64,
) -> Result<(ClusterAssignment, ClusterAssignment)> {
    let seed = derive(seed, "baseline", 0);
    Ok((
        spectral_baseline(matrix, k, seed)?,
        lloyd_baseline(matrix, k, seed)?,
    ))
}

// ---------------------------------------------------------------------------
// Forward / backward selection
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelectionDirection {
    Forward,
    Backward,
}

/// What a candidate subset is scored by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelectionObjective {
    /// Estimated score of one target task.
    SingleTarget(usize),
    /// Mean estimated score over all tasks.
    AverageAll,
}

/// Candidate lists per selection round: singletons first, then the selected
/// set joined with each remaining task.
pub fn forward_candidates(selected: &[usize], ids: &[usize]) -> Vec<Vec<usize>> {
    ids.iter()
        .filter(|t| !selected.contains(t))
        .map(|&t| {
            let mut subset = selected.to_vec();
            subset.push(t);
            subset.sort_unstable();
            subset
        })
        .collect()
}

/// Candidates for one backward round: the current set minus each member.
pub fn backward_candidates(current: &[usize]) -> Vec<Vec<usize>> {
    current
        .iter()
        .map(|&drop| current.iter().copied().filter(|&t| t != drop).collect())
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionReport {
    pub direction: SelectionDirection,
    pub objective: SelectionObjective,
    /// Tasks in the order they were added (forward) or removed (backward).
    pub order: Vec<usize>,
    /// Best candidate score per round.
    pub round_scores: Vec<f64>,
    /// The selected set after all rounds.
    pub selected: Vec<usize>,
    pub flops: FlopsLedger,
}

/// Greedy forward/backward task selection, scored by the estimator under one
/// shared feature cache. Ties break toward the smaller task id.
pub fn select_tasks(
    cfg: &RunConfig,
    tasks: &TaskCollection<f64>,
    direction: SelectionDirection,
    objective: SelectionObjective,
    rounds: usize,
    out: Option<&Path>,
) -> Result<SelectionReport> {
    cfg.validate()?;
    let ids = tasks.ids();
    let n = ids.len();
    let max_rounds = match direction {
        SelectionDirection::Forward => n,
        SelectionDirection::Backward => n - 1,
    };
    if rounds == 0 || rounds > max_rounds {
        return Err(Error::InvalidArgument(format!(
            "rounds {rounds} out of range (max {max_rounds})"
        )));
    }
    if let SelectionObjective::SingleTarget(t) = objective {
        tasks.task(t)?;
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
    }

    let mut ledger = FlopsLedger::default();
    let prepared = prepare_members(cfg, tasks, out, &mut ledger)?;
    let est = estimation_config(cfg, cfg.arch(tasks.input_dim)?)?;

    let score_subset = |subset: &[usize], ledger: &mut FlopsLedger| -> Result<f64> {
        let mut acc = 0.0;
        for feats in &prepared.features {
            let samples: Vec<_> = subset
                .iter()
                .flat_map(|&t| feats.train_of(t).iter().cloned())
                .collect();
            if samples.is_empty() {
                return Err(Error::EmptyInput("selection candidate features"));
            }
            let sol = crate::regression::fit(&samples, est.ridge)?;
            ledger.add(
                Phase::RegressionSolve,
                flops::newton_flops(samples.len(), feats.d, sol.iterations.max(1)),
            );
            let member_score = match objective {
                SelectionObjective::SingleTarget(target) => {
                    crate::regression::estimated_score(&sol, feats.test_of(target), target, est.metric)?
                }
                SelectionObjective::AverageAll => {
                    let mut sum = 0.0;
                    for &t in &ids {
                        sum += crate::regression::estimated_score(
                            &sol,
                            feats.test_of(t),
                            t,
                            est.metric,
                        )?;
                    }
                    sum / ids.len() as f64
                }
            };
            acc += member_score;
        }
        Ok(acc / prepared.features.len() as f64)
    };

    let mut order = Vec::with_capacity(rounds);
    let mut round_scores = Vec::with_capacity(rounds);
    let mut selected: Vec<usize> = match direction {
        SelectionDirection::Forward => Vec::new(),
        SelectionDirection::Backward => ids.clone(),
    };
    for _ in 0..rounds {
        let candidates = match direction {
            SelectionDirection::Forward => forward_candidates(&selected, &ids),
            SelectionDirection::Backward => backward_candidates(&selected),
        };
        let mut best: Option<(f64, usize, Vec<usize>)> = None; // (score, moved id, subset)
        for candidate in candidates {
            let moved = match direction {
                SelectionDirection::Forward => *candidate
                    .iter()
                    .find(|t| !selected.contains(t))
                    .expect("forward candidate adds a task"),
                SelectionDirection::Backward => *selected
                    .iter()
                    .find(|t| !candidate.contains(t))
                    .expect("backward candidate removes a task"),
            };
            let score = score_subset(&candidate, &mut ledger)?;
            let better = match &best {
                None => true,
                Some((bs, bm, _)) => score > *bs || (score == *bs && moved < *bm),
            };
            if better {
                best = Some((score, moved, candidate));
            }
        }
        let (score, moved, subset) = best.expect("at least one candidate per round");
        order.push(moved);
        round_scores.push(score);
        selected = subset;
    }

    let report = SelectionReport {
        direction,
        objective,
        order,
        round_scores,
        selected,
        flops: ledger,
    };
    if let Some(dir) = out {
        std::fs::write(
            dir.join("selection.json"),
            serde_json::to_string_pretty(&report)?,
        )?;
    }
    Ok(report)
}
