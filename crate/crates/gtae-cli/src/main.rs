//! `gtae` - estimate task affinities from gradients and group tasks.
//!
//! Subcommands mirror the pipeline stages: `synth` generates a benchmark,
//! `meta-train`/`extract`/`estimate` produce scores step by step (with
//! cached intermediates), `oracle` computes the ground truth by full
//! training, `affinity` assembles score tables into a matrix, `cluster`
//! solves the grouping SDP, `group` runs everything end to end, `select`
//! does greedy task selection, and `compare` reports estimate-vs-oracle
//! metrics. Exit codes: 0 success, 1 usage or input error, 2 numerical
//! failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gtae::affinity::AffinityKind;
use gtae::cluster::{round_solution, solve_sdp, RoundingConfig, SdpOptions};
use gtae::error::Error;
use gtae::flops::FlopsLedger;
use gtae::models::{OracleStart, Provenance};
use gtae::pipeline::{
    self, config::AffinityMode, io, RunConfig, SelectionDirection, SelectionObjective,
};
use gtae::rng::derive;
use gtae::synth::adjusted_rand_index;

#[derive(Parser)]
#[command(name = "gtae", version, about = "Gradient-based task affinity estimation and grouping")]
struct Cli {
    /// TOML run configuration; flags below override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Projected dimension.
    #[arg(long, global = true)]
    d: Option<usize>,
    /// Ensemble size (number of base models).
    #[arg(long = "M", global = true)]
    members: Option<usize>,
    /// Number of sampled subsets.
    #[arg(long, global = true)]
    m: Option<usize>,
    /// Subset size.
    #[arg(long, global = true)]
    alpha: Option<usize>,
    /// Number of clusters.
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Affinity mode: pairwise | higher-order.
    #[arg(long, global = true)]
    mode: Option<String>,
    /// Score metric: accuracy | macro-f1.
    #[arg(long, global = true)]
    metric: Option<String>,
    /// Output directory (default "out").
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataArg {
    /// Task collection JSON.
    #[arg(long)]
    data: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the planted-cluster synthetic benchmark.
    Synth,
    /// Train the base models on all tasks and cache them.
    MetaTrain(DataArg),
    /// Extract and project gradient features into binary caches.
    Extract(DataArg),
    /// Estimate subset scores from cached features.
    Estimate(DataArg),
    /// Compute ground-truth scores by training one model per subset.
    Oracle {
        #[command(flatten)]
        data: DataArg,
        /// Train each subset from a fresh initialization instead of
        /// fine-tuning from the base model.
        #[arg(long)]
        from_scratch: bool,
    },
    /// Assemble an affinity matrix from a score table.
    Affinity {
        #[command(flatten)]
        data: DataArg,
        /// Score table JSON (defaults to <out>/scores.json).
        #[arg(long)]
        scores: Option<PathBuf>,
        /// Label the scores as oracle-provenance.
        #[arg(long)]
        oracle: bool,
    },
    /// Solve the grouping SDP on an affinity CSV and round to clusters.
    Cluster {
        /// Affinity CSV (defaults to <out>/affinity.csv).
        #[arg(long)]
        affinity: Option<PathBuf>,
        /// Also run the spectral and Lloyd baselines.
        #[arg(long)]
        baselines: bool,
    },
    /// Run the full pipeline: estimate, cluster, train per group, report.
    Group {
        #[command(flatten)]
        data: DataArg,
        /// Planted ground-truth assignment JSON for ARI reporting.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Greedy forward/backward task selection.
    Select {
        #[command(flatten)]
        data: DataArg,
        /// forward | backward
        #[arg(long, default_value = "forward")]
        direction: String,
        /// Target task id; omit with --average for the mean objective.
        #[arg(long)]
        target: Option<usize>,
        /// Score candidates by the mean over all tasks.
        #[arg(long)]
        average: bool,
        #[arg(long)]
        rounds: usize,
    },
    /// Distance / correlation / ARI between estimates and references.
    Compare {
        /// Estimated affinity CSV.
        #[arg(long)]
        estimated: PathBuf,
        /// Oracle affinity CSV.
        #[arg(long)]
        oracle: PathBuf,
        /// Assignment JSON to score against --truth.
        #[arg(long)]
        assignment: Option<PathBuf>,
        /// Ground-truth assignment JSON.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are successes; everything else is usage
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    pipeline::init_thread_pool();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    if let Some(d) = cli.d {
        cfg.run.d = Some(d);
    }
    if let Some(members) = cli.members {
        cfg.run.members = members;
    }
    if let Some(m) = cli.m {
        cfg.run.m = m;
    }
    if let Some(alpha) = cli.alpha {
        cfg.run.alpha = alpha;
    }
    if let Some(k) = cli.k {
        cfg.run.k = k;
    }
    if let Some(mode) = &cli.mode {
        cfg.run.mode = match mode.as_str() {
            "pairwise" => AffinityMode::Pairwise,
            "higher-order" => AffinityMode::HigherOrder,
            other => {
                return Err(Error::Config(format!(
                    "unknown mode '{other}' (pairwise | higher-order)"
                )))
            }
        };
    }
    if let Some(metric) = &cli.metric {
        cfg.run.metric = metric.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cli: &Cli) -> Result<PathBuf, Error> {
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn run(cli: Cli) -> Result<(), Error> {
    let cfg = load_config(&cli)?;
    let out = out_dir(&cli)?;
    match &cli.command {
        Command::Synth => cmd_synth(&cfg, &out),
        Command::MetaTrain(data) => cmd_meta_train(&cfg, &data.data, &out),
        Command::Extract(data) => cmd_extract(&cfg, &data.data, &out),
        Command::Estimate(data) => cmd_estimate(&cfg, &data.data, &out),
        Command::Oracle { data, from_scratch } => {
            cmd_oracle(&cfg, &data.data, *from_scratch, &out)
        }
        Command::Affinity {
            data,
            scores,
            oracle,
        } => cmd_affinity(&cfg, &data.data, scores.as_deref(), *oracle, &out),
        Command::Cluster {
            affinity,
            baselines,
        } => cmd_cluster(&cfg, affinity.as_deref(), *baselines, &out),
        Command::Group { data, truth } => cmd_group(&cfg, &data.data, truth.as_deref(), &out),
        Command::Select {
            data,
            direction,
            target,
            average,
            rounds,
        } => cmd_select(&cfg, &data.data, direction, *target, *average, *rounds, &out),
        Command::Compare {
            estimated,
            oracle,
            assignment,
            truth,
        } => cmd_compare(estimated, oracle, assignment.as_deref(), truth.as_deref(), &out),
    }
}

fn cmd_synth(cfg: &RunConfig, out: &Path) -> Result<(), Error> {
    let (tasks, truth) = gtae::synth::generate::<f64>(&cfg.synth_config())?;
    io::write_tasks(&out.join("tasks.json"), &tasks)?;
    io::write_assignment(&out.join("truth.json"), &truth)?;
    println!(
        "wrote {} tasks (input_dim {}) and ground truth to {}",
        tasks.len(),
        tasks.input_dim,
        out.display()
    );
    Ok(())
}

fn cmd_meta_train(cfg: &RunConfig, data: &Path, out: &Path) -> Result<(), Error> {
    let tasks = io::read_tasks(data)?;
    let mut ledger = FlopsLedger::default();
    let prepared = pipeline::prepare_members(cfg, &tasks, Some(out), &mut ledger)?;
    println!(
        "trained {} base model(s), p = {}, meta-training flops {}",
        prepared.metas.len(),
        prepared.arch_p,
        ledger.meta_training
    );
    Ok(())
}

fn cmd_extract(cfg: &RunConfig, data: &Path, out: &Path) -> Result<(), Error> {
    let tasks = io::read_tasks(data)?;
    let mut ledger = FlopsLedger::default();
    let prepared = pipeline::prepare_members(cfg, &tasks, Some(out), &mut ledger)?;
    for member in 0..prepared.features.len() {
        println!(
            "member {member}: {} train / {} test records at d = {}",
            prepared.features[member].train.len(),
            prepared.features[member].test.len(),
            prepared.d
        );
    }
    Ok(())
}

fn cmd_estimate(cfg: &RunConfig, data: &Path, out: &Path) -> Result<(), Error> {
    let tasks = io::read_tasks(data)?;
    let mut ledger = FlopsLedger::default();
    let prepared = pipeline::prepare_members(cfg, &tasks, Some(out), &mut ledger)?;
    let plan = pipeline::plan_for(cfg, &tasks.ids())?;
    let est = pipeline::estimation_config(cfg, cfg.arch(tasks.input_dim)?)?;
    let mut report = gtae::affinity::EstimationReport::default();
    let scores =
        gtae::affinity::estimate_scores_from_features(&prepared.features, &plan, &est, &mut report)?;
    ledger.merge(&report.ledger);
    io::write_scores(&out.join("scores.json"), &scores)?;
    std::fs::write(
        out.join("estimate_flops.json"),
        serde_json::to_string_pretty(&ledger)?,
    )?;
    println!(
        "estimated {} entries over {} subsets ({} non-converged fits), total flops {}",
        scores.entries.len(),
        plan.subsets.len(),
        report.non_converged.len(),
        ledger.total()
    );
    Ok(())
}

fn cmd_oracle(cfg: &RunConfig, data: &Path, from_scratch: bool, out: &Path) -> Result<(), Error> {
    let tasks = io::read_tasks(data)?;
    let arch = cfg.arch(tasks.input_dim)?;
    let plan = pipeline::plan_for(cfg, &tasks.ids())?;
    let train_cfg = cfg
        .train_config()?
        .with_seed(derive(cfg.run.seed, "oracle", 0));
    let mut ledger = FlopsLedger::default();
    let table = if from_scratch {
        gtae::models::oracle_scores(
            &tasks,
            &plan.subsets,
            OracleStart::FromScratch(&arch),
            &train_cfg,
            cfg.metric()?,
            &mut ledger,
        )?
    } else {
        let prepared = pipeline::prepare_members(cfg, &tasks, Some(out), &mut ledger)?;
        gtae::models::oracle_scores(
            &tasks,
            &plan.subsets,
            OracleStart::FineTune(&prepared.metas[0]),
            &train_cfg,
            cfg.metric()?,
            &mut ledger,
        )?
    };
    io::write_scores(&out.join("oracle_scores.json"), &table)?;
    std::fs::write(
        out.join("oracle_flops.json"),
        serde_json::to_string_pretty(&ledger)?,
    )?;
    println!(
        "oracle scored {} entries over {} subsets, total flops {}",
        table.entries.len(),
        plan.subsets.len(),
        ledger.total()
    );
    Ok(())
}

fn cmd_affinity(
    cfg: &RunConfig,
    data: &Path,
    scores: Option<&Path>,
    oracle: bool,
    out: &Path,
) -> Result<(), Error> {
    let tasks = io::read_tasks(data)?;
    let default = if oracle {
        out.join("oracle_scores.json")
    } else {
        out.join("scores.json")
    };
    let scores_path = scores.unwrap_or(&default);
    let provenance = if oracle {
        Provenance::Oracle
    } else {
        Provenance::Estimated
    };
    let raw = io::read_scores(scores_path, provenance)?;
    let plan = pipeline::plan_for(cfg, &tasks.ids())?;
    let aligned = io::align_scores_to_plan(&raw, &plan.subsets)?;
    let matrix = pipeline::assemble_matrix(cfg, &aligned, &plan, &tasks.ids())?;
    let (aff_name, cnt_name) = if oracle {
        ("oracle_affinity.csv", "oracle_counts.csv")
    } else {
        ("affinity.csv", "counts.csv")
    };
    std::fs::write(out.join(aff_name), gtae::affinity::affinity_to_csv(&matrix))?;
    std::fs::write(out.join(cnt_name), gtae::affinity::counts_to_csv(&matrix))?;
    println!(
        "wrote {} ({} x {}) from {}",
        out.join(aff_name).display(),
        matrix.n(),
        matrix.n(),
        scores_path.display()
    );
    Ok(())
}

fn cmd_cluster(
    cfg: &RunConfig,
    affinity: Option<&Path>,
    baselines: bool,
    out: &Path,
) -> Result<(), Error> {
    let default = out.join("affinity.csv");
    let path = affinity.unwrap_or(&default);
    let mut matrix = gtae::affinity::affinity_from_csv(
        &std::fs::read_to_string(path)?,
        AffinityKind::HigherOrder,
    )?;
    if cfg.run.loss_mode {
        matrix.values.mapv_inplace(|v| -v);
    }
    let k = cfg.run.k.min(matrix.n());
    let sol = solve_sdp(&matrix, k, &SdpOptions::default())?;
    let rounding = RoundingConfig {
        target_k: k,
        c_grid: cfg.lambda_grid()?,
    };
    let assignment = round_solution(&sol.x_hat, &matrix.ids, &rounding)?;
    io::write_assignment(&out.join("assignment.json"), &assignment)?;
    let diagnostics = pipeline::SdpDiagnostics {
        objective: sol.objective,
        residuals: sol.residuals,
        iterations: sol.iterations,
        converged: sol.converged,
    };
    std::fs::write(
        out.join("sdp_report.json"),
        serde_json::to_string_pretty(&diagnostics)?,
    )?;
    println!(
        "sdp objective {:.6}, {} iterations, rounded to {} clusters",
        sol.objective,
        sol.iterations,
        assignment.k()
    );
    if baselines {
        let (spectral, lloyd) = pipeline::cluster_baselines(&matrix, k, cfg.run.seed)?;
        io::write_assignment(&out.join("assignment_spectral.json"), &spectral)?;
        io::write_assignment(&out.join("assignment_lloyd.json"), &lloyd)?;
        println!("spectral baseline: {} clusters", spectral.k());
        println!("lloyd baseline: {} clusters", lloyd.k());
    }
    Ok(())
}

fn cmd_group(cfg: &RunConfig, data: &Path, truth: Option<&Path>, out: &Path) -> Result<(), Error> {
    let tasks = io::read_tasks(data)?;
    let truth = match truth {
        Some(path) => Some(io::read_assignment(path)?),
        None => None,
    };
    let report = pipeline::run_gtg(cfg, &tasks, truth.as_ref(), Some(out))?;
    println!(
        "grouped {} tasks into {} clusters; mean score {:.4} (all-tasks baseline {:.4})",
        tasks.len(),
        report.assignment.k(),
        report.mean_score,
        report.naive_mean_score
    );
    if let Some(ari) = report.ari {
        println!("ari vs truth: {ari:.4}");
    }
    if let Some(dist) = report.affinity_distance {
        println!("affinity distance vs oracle: {dist:.6}");
    }
    println!("report: {}", out.join("report.json").display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_select(
    cfg: &RunConfig,
    data: &Path,
    direction: &str,
    target: Option<usize>,
    average: bool,
    rounds: usize,
    out: &Path,
) -> Result<(), Error> {
    let tasks = io::read_tasks(data)?;
    let direction = match direction {
        "forward" => SelectionDirection::Forward,
        "backward" => SelectionDirection::Backward,
        other => {
            return Err(Error::Config(format!(
                "unknown direction '{other}' (forward | backward)"
            )))
        }
    };
    let objective = match (target, average) {
        (Some(t), false) => SelectionObjective::SingleTarget(t),
        (None, true) => SelectionObjective::AverageAll,
        (None, false) => {
            return Err(Error::Config(
                "select needs --target <id> or --average".into(),
            ))
        }
        (Some(_), true) => {
            return Err(Error::Config(
                "--target and --average are mutually exclusive".into(),
            ))
        }
    };
    let report = pipeline::select_tasks(cfg, &tasks, direction, objective, rounds, Some(out))?;
    println!(
        "selection order {:?}, final set {:?}",
        report.order, report.selected
    );
    Ok(())
}

fn cmd_compare(
    estimated: &Path,
    oracle: &Path,
    assignment: Option<&Path>,
    truth: Option<&Path>,
    out: &Path,
) -> Result<(), Error> {
    let est = gtae::affinity::affinity_from_csv(
        &std::fs::read_to_string(estimated)?,
        AffinityKind::HigherOrder,
    )?;
    let reference = gtae::affinity::affinity_from_csv(
        &std::fs::read_to_string(oracle)?,
        AffinityKind::HigherOrder,
    )?;
    let distance = gtae::affinity::matrix_distance(&est, &reference)?;
    let spearman = if est.n() >= 3 {
        Some(gtae::affinity::per_task_spearman(&est, &reference)?.1)
    } else {
        None
    };
    let ari = match (assignment, truth) {
        (Some(a), Some(t)) => Some(adjusted_rand_index(
            &io::read_assignment(a)?,
            &io::read_assignment(t)?,
        )?),
        _ => None,
    };
    println!("Distance: {distance:.6}");
    if let Some(s) = spearman {
        println!("Mean Spearman: {s:.6}");
    }
    if let Some(a) = ari {
        println!("ARI: {a:.6}");
    }
    let summary = serde_json::json!({
        "distance": distance,
        "mean_spearman": spearman,
        "ari": ari,
    });
    std::fs::write(
        out.join("compare.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(())
}
