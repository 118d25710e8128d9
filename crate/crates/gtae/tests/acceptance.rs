//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line
//! (run with `--nocapture` to see them). Criterion 11 (CLI determinism)
//! lives in the CLI crate's `acceptance_cli` test.

use gtae::affinity::{
    higher_order_matrix, matrix_distance, pairwise_matrix, pairwise_plan, per_task_spearman,
    sample_subsets, AffinityKind, AffinityMatrix, EstimationConfig, EstimationReport,
    ProjectionKind, SubsetPlan,
};
use gtae::cluster::{
    exhaustive_best_partition, lloyd_baseline, round_solution, solve_sdp, spectral_baseline,
    ClusterAssignment, RoundingConfig, SdpOptions,
};
use gtae::flops::{extraction_flops, projection_flops, training_flops, FlopsLedger};
use gtae::linearize::{extract_features, rss_sweep};
use gtae::models::{
    forward, grad_output, init_model, oracle_scores, ArchKind, ArchitectureSpec, Metric,
    ModelParams, OracleStart, Provenance, ScoreTable, Split, TrainConfig,
};
use gtae::pipeline::RunConfig;
use gtae::regression::{check_bound, fit, ProjectedSample};
use gtae::rng::{derive, Stream};
use gtae::sketch::{choose_dim, ProjectionHandle};
use gtae::synth::{generate, SynthConfig};

use ndarray::Array2;

fn report(criterion: usize, name: &str, pass: bool, detail: &str) {
    println!(
        "[acceptance] criterion {criterion:02} ({name}): {} - {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion:02} ({name}) failed: {detail}");
}

/// The 6x6 three-planted-clusters matrix used by criteria 1 and 2.
fn toy6() -> AffinityMatrix<f64> {
    let rows: [[f64; 6]; 6] = [
        [7.0, 7.0, 6.0, 6.0, 5.0, 5.0],
        [7.0, 7.0, 6.0, 6.0, 5.0, 5.0],
        [6.0, 6.0, 20.0, 20.0, 19.0, 19.0],
        [6.0, 6.0, 20.0, 20.0, 19.0, 19.0],
        [5.0, 5.0, 19.0, 19.0, 20.0, 20.0],
        [5.0, 5.0, 19.0, 19.0, 20.0, 20.0],
    ];
    let mut values = Array2::zeros((6, 6));
    for r in 0..6 {
        for c in 0..6 {
            values[[r, c]] = rows[r][c];
        }
    }
    AffinityMatrix {
        ids: (0..6).collect(),
        values,
        counts: Array2::ones((6, 6)),
        kind: AffinityKind::HigherOrder,
        provenance: Provenance::Oracle,
        filled: vec![],
    }
}

#[test]
fn criterion_01_toy_clustering() {
    let t = toy6();
    let started = std::time::Instant::now();
    let sol = solve_sdp(&t, 3, &SdpOptions::default()).unwrap();
    let rounded = round_solution(&sol.x_hat, &t.ids, &RoundingConfig::for_k(3)).unwrap();
    let elapsed = started.elapsed().as_secs_f64();

    let planted = ClusterAssignment::new(vec![vec![0, 1], vec![2, 3], vec![4, 5]]).unwrap();
    let sdp_ok = rounded == planted;

    // the baselines must merge the two high-affinity clusters {2,3}, {4,5}
    let merged = |a: &ClusterAssignment| {
        let c = a.cluster_of(2);
        c.is_some() && c == a.cluster_of(3) && c == a.cluster_of(4) && c == a.cluster_of(5)
    };
    let spectral = spectral_baseline(&t, 3, 7).unwrap();
    let lloyd = lloyd_baseline(&t, 3, 7).unwrap();

    let pass = sdp_ok && merged(&spectral) && merged(&lloyd) && elapsed < 1.0;
    report(
        1,
        "toy 6x6: sdp separates, baselines merge",
        pass,
        &format!(
            "sdp -> {:?} in {elapsed:.3}s; spectral -> {:?}; lloyd -> {:?}",
            rounded.clusters, spectral.clusters, lloyd.clusters
        ),
    );
}

#[test]
fn criterion_02_exhaustive_density_oracle() {
    let t = toy6();
    let (best, value) = exhaustive_best_partition(&t, 3).unwrap();
    let planted = ClusterAssignment::new(vec![vec![0, 1], vec![2, 3], vec![4, 5]]).unwrap();
    let pass = best == planted && (value - 94.0 / 3.0).abs() <= 1e-12;
    report(
        2,
        "exhaustive density oracle",
        pass,
        &format!("best {:?} value {value} (want 94/3)", best.clusters),
    );
}

#[test]
fn criterion_03_oracle_equivalence_exact_regime() {
    let started = std::time::Instant::now();
    // linear model, identity projection at d = p, tiny ridge: the estimator
    // and the oracle optimize the same convex objective
    // enough samples per task that no subset is linearly separable: the
    // logistic optimum is then bounded and both solvers agree on it
    let synth = SynthConfig {
        n_tasks: 14,
        k_true: 4,
        input_dim: 10,
        train_per_task: 60,
        val_per_task: 0,
        test_per_task: 100,
        teacher_noise: 0.3,
        flip_rate: 0.10,
        cross_cluster_angle_deg: 90.0,
        seed: 404,
    };
    let (tasks, _) = generate::<f64>(&synth).unwrap();
    let arch = ArchitectureSpec::linear(10);

    // full-batch heavy-ball descent so the oracle converges tightly
    let oracle_train = TrainConfig {
        epochs: 2000,
        batch_size: 4096,
        learning_rate: 0.15,
        momentum: 0.9,
        l2_penalty: 0.0,
        seed: 0,
        loss: gtae::models::LossKind::Logistic,
    };
    let meta_train = TrainConfig {
        epochs: 60,
        seed: 0,
        ..Default::default()
    };
    let mut est = EstimationConfig::new(arch, meta_train, 11, 1);
    est.projection = ProjectionKind::Identity;
    est.ridge = 1e-6;

    let plan_subsets = pairwise_plan(&tasks.ids());
    let plan = SubsetPlan {
        m: plan_subsets.len(),
        subsets: plan_subsets.clone(),
        alpha: 2,
        seed: 0,
    };
    let (estimated, _) = gtae::affinity::estimate_scores(&tasks, &plan, &est).unwrap();

    // oracle fine-tunes from the same anchor the estimator linearizes at
    let mut ledger = FlopsLedger::default();
    let anchor = gtae::affinity::meta_initialization(&tasks, &est, 0, &mut ledger).unwrap();
    let oracle_cfg = oracle_train.with_seed(derive(11, "oracle", 0));
    let oracle = oracle_scores(
        &tasks,
        &plan_subsets,
        OracleStart::FineTune(&anchor),
        &oracle_cfg,
        Metric::Accuracy,
        &mut ledger,
    )
    .unwrap();

    let mut entries = 0usize;
    let mut max_gap = 0.0f64;
    for (&key, &est_score) in &estimated.entries {
        let oracle_score = oracle.entries[&key];
        max_gap = max_gap.max((est_score - oracle_score).abs());
        entries += 1;
    }
    let t_est = pairwise_matrix(&estimated).unwrap();
    let t_star = pairwise_matrix(&oracle).unwrap();
    let distance = matrix_distance(&t_est, &t_star).unwrap();
    let elapsed = started.elapsed().as_secs_f64();

    // scores are accuracies over 100 test samples, so a gap of exactly one
    // flipped prediction is 0.01 up to float representation
    let pass = entries >= 100 && max_gap <= 0.01 + 1e-12 && distance <= 1e-3 && elapsed < 60.0;
    report(
        3,
        "oracle equivalence in the exact regime",
        pass,
        &format!(
            "{entries} entries, max per-entry gap {max_gap:.4}, distance {distance:.2e}, {elapsed:.1}s"
        ),
    );
}

#[test]
fn criterion_04_gradient_correctness() {
    let mut stream = Stream::new(4040);
    let mut checked = 0usize;
    let mut worst = 0.0f64;
    let mut attempt = 0u64;
    while checked < 100 {
        attempt += 1;
        let spec = if checked % 2 == 0 {
            ArchitectureSpec::linear(2 + (checked % 5))
        } else {
            ArchitectureSpec::mlp1(2 + (checked % 4), 3 + (checked % 6))
        };
        let model: ModelParams<f64> = init_model(&spec, 9000 + attempt).unwrap();
        let q = spec.input_dim;
        let x: Vec<f64> = (0..q).map(|_| stream.next_gaussian()).collect();
        // skip draws at a ReLU kink, where the derivative is undefined
        if let ArchKind::Mlp1 { hidden_dim: h } = spec.kind {
            let t = model.theta.as_slice().unwrap();
            let kink = (0..h).any(|j| {
                let z: f64 =
                    (0..q).map(|i| t[j * q + i] * x[i]).sum::<f64>() + t[h * q + j];
                z.abs() < 1e-3
            });
            if kink {
                continue;
            }
        }
        let analytic = grad_output(&model, &x).unwrap();
        let h = 1e-5;
        let p = model.param_count();
        let mut rel = 0.0f64;
        let scale = analytic
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(1e-12);
        for j in 0..p {
            let mut plus = model.clone();
            plus.theta[j] += h;
            let mut minus = model.clone();
            minus.theta[j] -= h;
            let fd =
                (forward(&plus, &x).unwrap() - forward(&minus, &x).unwrap()) / (2.0 * h);
            rel = rel.max((analytic[j] - fd).abs() / scale);
        }
        worst = worst.max(rel);
        checked += 1;
    }
    let pass = worst <= 1e-5;
    report(
        4,
        "gradient correctness vs finite differences",
        pass,
        &format!("100 draws, max relative error {worst:.2e}"),
    );
}

#[test]
fn criterion_05_taylor_behavior() {
    let started = std::time::Instant::now();

    // linear models: the expansion is exact for any fine-tuned weights
    let synth = SynthConfig {
        n_tasks: 6,
        k_true: 2,
        input_dim: 8,
        train_per_task: 20,
        seed: 51,
        ..Default::default()
    };
    let (tasks, _) = generate::<f64>(&synth).unwrap();
    let lin_anchor: ModelParams<f64> = init_model(&ArchitectureSpec::linear(8), 5).unwrap();
    let cfg = TrainConfig {
        epochs: 60,
        learning_rate: 0.05,
        ..Default::default()
    };
    let lin_reports = rss_sweep(&lin_anchor, &tasks, 4, 3, &[0.02, 0.05, 0.1], &cfg, 5150).unwrap();
    let linear_ok = !lin_reports.is_empty() && lin_reports.iter().all(|r| r.rss < 1e-18);

    // mlp: over 5 seeds, pooled (distance, rss) measurements across the
    // 1%..10% bins correlate positively
    let mut dists = Vec::new();
    let mut rsses = Vec::new();
    let targets: Vec<f64> = (1..=10).map(|i| i as f64 / 100.0).collect();
    for seed in 0..5u64 {
        let synth = SynthConfig {
            n_tasks: 8,
            k_true: 2,
            input_dim: 6,
            train_per_task: 20,
            teacher_noise: 0.2,
            flip_rate: 0.02,
            seed: 900 + seed,
            ..Default::default()
        };
        let (tasks, _) = generate::<f64>(&synth).unwrap();
        let arch = ArchitectureSpec::mlp1(6, 8);
        let anchor: ModelParams<f64> = init_model(&arch, 70 + seed).unwrap();
        let cfg = TrainConfig {
            epochs: 500,
            learning_rate: 0.03,
            batch_size: 8,
            ..Default::default()
        };
        let reports = rss_sweep(&anchor, &tasks, 5, 3, &targets, &cfg, 7000 + seed).unwrap();
        for r in reports {
            dists.push(r.finetune_distance);
            rsses.push(r.rss);
        }
    }
    let rho = gtae::linalg::spearman(&dists, &rsses).unwrap_or(0.0);
    let elapsed = started.elapsed().as_secs_f64();
    let pass = linear_ok && rho > 0.0 && elapsed < 300.0;
    report(
        5,
        "taylor error: exact for linear, grows with distance for mlp",
        pass,
        &format!(
            "linear max rss {:.1e}; mlp spearman(dist, rss) = {rho:.3} over {} bins; {elapsed:.0}s",
            lin_reports.iter().fold(0.0f64, |m, r| m.max(r.rss)),
            dists.len()
        ),
    );
}

/// Shared benchmark runner for criterion 6: returns the (distance, spearman)
/// grid over d in {16, 64, 256} and M in {1, 3, 5}, averaged over seeds.
fn estimation_grid(
    seeds: &[u64],
) -> (
    std::collections::BTreeMap<(usize, usize), f64>,
    std::collections::BTreeMap<(usize, usize), f64>,
) {
    let d_values = [16usize, 64, 256];
    let m_values = [1usize, 3, 5];
    let mut dist_acc: std::collections::BTreeMap<(usize, usize), f64> = Default::default();
    let mut spear_acc: std::collections::BTreeMap<(usize, usize), f64> = Default::default();

    for &seed in seeds {
        // calibrated benchmark: tasks share structure (45 degree teachers),
        // the model is overparameterized (p = 1361 vs 325 subset samples) so
        // fine-tuning stays within ~10% of the anchor, subsets are not
        // separable at the largest d, and a moderate ridge keeps the
        // largest-d fits stable
        let synth = SynthConfig {
            n_tasks: 20,
            k_true: 4,
            input_dim: 32,
            train_per_task: 65,
            val_per_task: 0,
            test_per_task: 16,
            teacher_noise: 0.2,
            flip_rate: 0.05,
            cross_cluster_angle_deg: 45.0,
            seed,
        };
        let (tasks, _) = generate::<f64>(&synth).unwrap();
        let arch = ArchitectureSpec::mlp1(32, 40);
        let train = TrainConfig {
            epochs: 40,
            learning_rate: 0.05,
            ..Default::default()
        };
        let mut est = EstimationConfig::new(arch, train, seed, 5);
        est.ridge = 1e-3;
        let ids = tasks.ids();
        let plan = gtae::affinity::sample_subsets_over(&ids, 40, 5, derive(seed, "plan", 0)).unwrap();

        // anchors (shared across d); the oracle fine-tunes from its own
        // independently trained base model so every ensemble member is an
        // equally-biased estimate of it
        let mut ledger = FlopsLedger::default();
        let anchors: Vec<ModelParams<f64>> = (0..5)
            .map(|k| gtae::affinity::meta_initialization(&tasks, &est, k, &mut ledger).unwrap())
            .collect();
        let mut oracle_est = est.clone();
        oracle_est.member_seeds = vec![derive(seed, "oracle-anchor", 0)];
        let oracle_anchor =
            gtae::affinity::meta_initialization(&tasks, &oracle_est, 0, &mut ledger).unwrap();
        let oracle_cfg = train.with_seed(derive(seed, "oracle", 0));
        let oracle = oracle_scores(
            &tasks,
            &plan.subsets,
            OracleStart::FineTune(&oracle_anchor),
            &oracle_cfg,
            Metric::Accuracy,
            &mut ledger,
        )
        .unwrap();
        let t_star = higher_order_matrix(&oracle, &plan, &ids).unwrap();

        for &d in &d_values {
            // per-member score tables at this projection size
            let member_tables: Vec<ScoreTable<f64>> = (0..5)
                .map(|k| {
                    let p = arch.param_count();
                    let handle = ProjectionHandle::gaussian(
                        p,
                        d,
                        derive(est.member_seeds[k], "projection", 0),
                    )
                    .unwrap();
                    let feats = gtae::affinity::member_features(
                        &anchors[k],
                        &tasks,
                        &handle,
                        &mut ledger,
                    )
                    .unwrap();
                    let mut rep = EstimationReport::default();
                    gtae::affinity::estimate_scores_from_features(
                        std::slice::from_ref(&feats),
                        &plan,
                        &est,
                        &mut rep,
                    )
                    .unwrap()
                })
                .collect();
            for &m in &m_values {
                // ensemble average of the first m member tables
                let mut avg = ScoreTable::new(plan.subsets.clone(), Provenance::Estimated);
                for (&key, _) in &member_tables[0].entries {
                    let sum: f64 = member_tables[..m].iter().map(|t| t.entries[&key]).sum();
                    avg.insert(key.0, key.1, sum / m as f64).unwrap();
                }
                let t_est = higher_order_matrix(&avg, &plan, &ids).unwrap();
                *dist_acc.entry((d, m)).or_default() +=
                    matrix_distance(&t_est, &t_star).unwrap() / seeds.len() as f64;
                *spear_acc.entry((d, m)).or_default() +=
                    per_task_spearman(&t_est, &t_star).unwrap().1 / seeds.len() as f64;
            }
        }
    }
    (dist_acc, spear_acc)
}

#[test]
fn criterion_06_estimation_quality_trends() {
    let started = std::time::Instant::now();
    let (dist, spear) = estimation_grid(&[601, 602, 603, 604, 605]);
    let elapsed = started.elapsed().as_secs_f64();

    // distance non-increasing in d at M = 1 and in M at d = 256
    let d_trend = dist[&(16, 1)] >= dist[&(64, 1)] && dist[&(64, 1)] >= dist[&(256, 1)];
    let m_trend = dist[&(256, 1)] >= dist[&(256, 3)] && dist[&(256, 3)] >= dist[&(256, 5)];
    let spear_gap = spear[&(256, 5)] > spear[&(16, 1)];

    // golden values frozen from the oracle-calibrated benchmark run
    // (observed: distance 0.0151, spearman 0.679 over seeds 601..=605)
    const GOLDEN_MAX_DISTANCE_D256_M5: f64 = 0.030;
    const GOLDEN_MIN_SPEARMAN_D256_M5: f64 = 0.50;
    let golden = dist[&(256, 5)] <= GOLDEN_MAX_DISTANCE_D256_M5
        && spear[&(256, 5)] >= GOLDEN_MIN_SPEARMAN_D256_M5;

    let pass = d_trend && m_trend && spear_gap && golden && elapsed < 1800.0;
    report(
        6,
        "estimation quality trends over d and M",
        pass,
        &format!(
            "dist d@M=1 [{:.4}, {:.4}, {:.4}]; dist M@d=256 [{:.4}, {:.4}, {:.4}]; \
             spearman (16,1) {:.3} vs (256,5) {:.3}; {elapsed:.0}s",
            dist[&(16, 1)],
            dist[&(64, 1)],
            dist[&(256, 1)],
            dist[&(256, 1)],
            dist[&(256, 3)],
            dist[&(256, 5)],
            spear[&(16, 1)],
            spear[&(256, 5)]
        ),
    );
}

#[test]
fn criterion_07_bound_certificate() {
    let synth = SynthConfig {
        n_tasks: 12,
        k_true: 3,
        input_dim: 24,
        train_per_task: 20,
        val_per_task: 0,
        test_per_task: 10,
        teacher_noise: 0.3,
        flip_rate: 0.05,
        cross_cluster_angle_deg: 90.0,
        seed: 707,
    };
    let (tasks, _) = generate::<f64>(&synth).unwrap();
    let arch = ArchitectureSpec::mlp1(24, 20);
    let p = arch.param_count();
    assert!(p <= 2000, "p = {p}");
    let train = TrainConfig {
        epochs: 30,
        learning_rate: 0.05,
        ..Default::default()
    };
    let est = EstimationConfig::new(arch, train, 77, 1);
    let mut ledger = FlopsLedger::default();
    let anchor = gtae::affinity::meta_initialization(&tasks, &est, 0, &mut ledger).unwrap();
    let records = extract_features(&anchor, &tasks, Split::Train).unwrap();
    let d = choose_dim(p, 1.0).unwrap();
    let handle: ProjectionHandle<f64> = ProjectionHandle::gaussian(p, d, 7070).unwrap();
    // project everything once
    let gs: Vec<&[f64]> = records.iter().map(|r| r.g.as_slice().unwrap()).collect();
    let projected = handle.project_batch(&gs).unwrap();

    let plan = sample_subsets(12, 50, 3, 7878).unwrap();
    let mut satisfied = 0usize;
    let mut worst_margin = f64::INFINITY;
    for subset in &plan.subsets {
        let idx: Vec<usize> = records
            .iter()
            .enumerate()
            .filter(|(_, r)| subset.contains(&r.task_id))
            .map(|(i, _)| i)
            .collect();
        let sub_records: Vec<_> = idx.iter().map(|&i| records[i].clone()).collect();
        let proj_samples: Vec<ProjectedSample<f64>> = idx
            .iter()
            .map(|&i| ProjectedSample {
                g_tilde: projected[i].clone(),
                y: records[i].y,
                b: records[i].b,
                f0: records[i].f0,
                task_id: records[i].task_id,
            })
            .collect();
        let full_samples: Vec<ProjectedSample<f64>> = sub_records
            .iter()
            .map(|r| ProjectedSample {
                g_tilde: r.g.clone(),
                y: r.y,
                b: r.b,
                f0: r.f0,
                task_id: r.task_id,
            })
            .collect();
        let sol_d = fit(&proj_samples, 1e-6).unwrap();
        let sol_p = fit(&full_samples, 1e-6).unwrap();
        let cert = check_bound(
            &anchor,
            &tasks,
            subset,
            &handle,
            &sol_d,
            &sol_p,
            &sub_records,
            0.0,
        )
        .unwrap();
        if cert.satisfied {
            satisfied += 1;
        }
        worst_margin = worst_margin.min(cert.rhs - cert.lhs);
    }
    let pass = satisfied == plan.subsets.len();
    report(
        7,
        "projection error-bound certificate",
        pass,
        &format!(
            "{satisfied}/{} subsets satisfied at p = {p}, d = {d}; smallest rhs-lhs margin {worst_margin:.3e}",
            plan.subsets.len()
        ),
    );
}

#[test]
fn criterion_08_sdp_correctness_random_instances() {
    let mut stream = Stream::new(808);
    let mut checked = 0usize;
    let mut worst_gap = f64::INFINITY;
    let mut worst_residual = 0.0f64;
    for trial in 0..20 {
        let n = 6 + trial % 3;
        let k = 2 + trial % 2;
        let mut values = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            for j in 0..=i {
                let v = stream.next_gaussian();
                values[[i, j]] = v;
                values[[j, i]] = v;
            }
        }
        let t = AffinityMatrix {
            ids: (0..n).collect(),
            values,
            counts: Array2::ones((n, n)),
            kind: AffinityKind::HigherOrder,
            provenance: Provenance::Oracle,
            filled: vec![],
        };
        let sol = solve_sdp(&t, k, &SdpOptions::default()).unwrap();
        let (_, best_density) = exhaustive_best_partition(&t, k).unwrap();
        let best_inner = k as f64 * best_density;
        worst_gap = worst_gap.min(sol.objective - best_inner);
        let res = sol.residuals;
        worst_residual = worst_residual
            .max(res.row_sum)
            .max(res.trace)
            .max((-res.min_entry).max(0.0))
            .max((-res.min_eigenvalue).max(0.0));
        if sol.objective >= best_inner - 1e-4 && worst_residual <= 1e-6 {
            checked += 1;
        }
    }
    let pass = checked == 20;
    report(
        8,
        "sdp dominates every integer partition",
        pass,
        &format!(
            "{checked}/20 instances; worst objective gap {worst_gap:.2e}; worst residual {worst_residual:.2e}"
        ),
    );
}

#[test]
fn criterion_09_end_to_end_recovery() {
    let started = std::time::Instant::now();
    let mut cfg = RunConfig::default();
    cfg.run.seed = 909;
    cfg.run.mode = gtae::pipeline::AffinityMode::HigherOrder;
    cfg.run.m = 120;
    cfg.run.alpha = 3;
    cfg.run.k = 3;
    cfg.run.members = 1;
    cfg.run.d = Some(64);
    cfg.model.kind = "linear".into();
    cfg.train.epochs = 40;
    cfg.train.learning_rate = 0.05;
    cfg.synth.n_tasks = 12;
    cfg.synth.k_true = 3;
    cfg.synth.input_dim = 16;
    cfg.synth.train_per_task = 30;
    cfg.synth.test_per_task = 20;
    cfg.synth.teacher_noise = 0.0;
    cfg.synth.flip_rate = 0.02;

    let (tasks, truth) = generate::<f64>(&cfg.synth_config()).unwrap();
    let report_out = gtae::pipeline::run_gtg(&cfg, &tasks, Some(&truth), None).unwrap();
    let elapsed = started.elapsed().as_secs_f64();

    let ari = report_out.ari.unwrap();
    let pass = ari == 1.0
        && report_out.mean_score >= report_out.naive_mean_score
        && elapsed < 600.0;
    report(
        9,
        "end-to-end recovery on the easy benchmark",
        pass,
        &format!(
            "ari {ari}; grouped mean {:.4} vs all-tasks {:.4}; {elapsed:.0}s",
            report_out.mean_score, report_out.naive_mean_score
        ),
    );
}

#[test]
fn criterion_10_flops_accounting() {
    let synth = SynthConfig {
        n_tasks: 20,
        k_true: 4,
        input_dim: 64,
        train_per_task: 25,
        val_per_task: 0,
        test_per_task: 15,
        teacher_noise: 0.25,
        flip_rate: 0.05,
        cross_cluster_angle_deg: 90.0,
        seed: 1010,
    };
    let (tasks, _) = generate::<f64>(&synth).unwrap();
    let arch = ArchitectureSpec::mlp1(64, 32);
    let train = TrainConfig {
        epochs: 40,
        learning_rate: 0.03,
        ..Default::default()
    };
    let est = EstimationConfig::new(arch, train, 10_10, 1);
    let ids = tasks.ids();

    // fixed estimation costs: one base model, one extraction + projection
    let mut fixed = FlopsLedger::default();
    let anchor = gtae::affinity::meta_initialization(&tasks, &est, 0, &mut fixed).unwrap();
    let p = arch.param_count();
    let d = est.resolve_d(p).unwrap();
    let handle =
        ProjectionHandle::gaussian(p, d, derive(est.member_seeds[0], "projection", 0)).unwrap();
    let feats = gtae::affinity::member_features(&anchor, &tasks, &handle, &mut fixed).unwrap();

    let oracle_total_for = |plan: &SubsetPlan| -> u64 {
        plan.subsets
            .iter()
            .map(|s| {
                let samples: usize = s.iter().map(|&t| tasks.task(t).unwrap().train.len()).sum();
                training_flops(&arch, samples, train.epochs)
            })
            .sum()
    };

    let mut est_totals = Vec::new();
    let mut oracle_totals = Vec::new();
    let mut detail = String::new();
    for (i, m) in [200usize, 400, 800].into_iter().enumerate() {
        let plan = gtae::affinity::sample_subsets_over(&ids, m, 5, derive(1010, "plan", 0)).unwrap();
        let mut rep = EstimationReport::default();
        let _scores = gtae::affinity::estimate_scores_from_features(
            std::slice::from_ref(&feats),
            &plan,
            &est,
            &mut rep,
        )
        .unwrap();
        let mut ledger = fixed;
        ledger.merge(&rep.ledger);
        let est_total = ledger.total();
        let oracle_total = oracle_total_for(&plan);
        // at m = 200, run the oracle for real and confirm the recorded
        // ledger equals the closed-form account
        if i == 0 {
            let mut oracle_ledger = FlopsLedger::default();
            let _ = oracle_scores(
                &tasks,
                &plan.subsets,
                OracleStart::FineTune(&anchor),
                &train.with_seed(derive(1010, "oracle", 0)),
                Metric::Accuracy,
                &mut oracle_ledger,
            )
            .unwrap();
            assert_eq!(
                oracle_ledger.oracle_training, oracle_total,
                "recorded oracle ledger must match the closed-form account"
            );
        }
        detail.push_str(&format!(
            "m={m}: est {est_total} vs oracle {oracle_total} (x{:.2}); ",
            oracle_total as f64 / est_total as f64
        ));
        est_totals.push(est_total);
        oracle_totals.push(oracle_total);
    }
    let all_cheaper = est_totals
        .iter()
        .zip(&oracle_totals)
        .all(|(e, o)| e < o);
    let r: Vec<f64> = est_totals
        .iter()
        .zip(&oracle_totals)
        .map(|(&e, &o)| o as f64 / e as f64)
        .collect();
    let monotone = r[0] < r[1] && r[1] < r[2];
    // sanity: ledgers total to the sum of phases and extraction/projection
    // formulas match the workload
    let sample_total: usize = tasks.tasks.iter().map(|t| t.train.len() + t.test.len()).sum();
    let accounting_ok = fixed.gradient_extraction == extraction_flops(&arch, sample_total)
        && fixed.projection == projection_flops(p, d, sample_total);
    let pass = all_cheaper && monotone && accounting_ok;
    report(10, "flops: estimation beats the oracle, ratio grows with m", pass, &detail);
}
