//! `selabel` — batch frontend for classifier learning under selectively
//! labeled data with a decision-maker instrument.
//!
//! Subcommands: `generate` (simulate a world to CSV), `fit` (train one
//! learning method), `bounds` (per-row interval bounds and weights),
//! `evaluate` (score a saved model), `experiment` (replication grid).
//!
//! Every run logs the resolved configuration and its content hash to
//! standard error, so identical hashes imply identical outputs. Exit code 0
//! on success; failures print one `category: message` line (categories:
//! config, data, numeric, contract) and exit 1; command-line usage errors
//! exit 2.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use selabel::config::ToolConfig;
use selabel::dataset::{load_csv, make_folds, ColumnSchema, SelectiveDataset};
use selabel::error::{Error, Result};
use selabel::evaluate::{
    build_method, risk_bounds, run_experiment, summarize, write_report, zero_one_accuracy,
    ReportFormat, TrainContext,
};
use selabel::identify::{
    bounds_closed_form, bounds_lp, partial_bounds_uniform, partial_weight, point_weight,
    ObservableDistribution,
};
use selabel::learner::ScoreModel;
use selabel::nuisance::{crossfit_nuisances, NuisanceSet};
use selabel::seed::derive_seed;
use selabel::synthetic::{simulate, DecisionModel};

/// Seed-derivation tag for fold assignment on loaded datasets.
const TAG_FOLDS: u64 = 0xF07D;

#[derive(Parser)]
#[command(
    name = "selabel",
    version,
    about = "Identification and learning of outcome classifiers under selective labels"
)]
struct Cli {
    /// Configuration file (JSON). Every section has defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the configuration's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all logical cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Suppress the resolved-configuration log on standard error.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a world: dataset CSV, column-schema JSON, and a truth
    /// sidecar with per-row μ*, labeling probability, and unobservable.
    Generate {
        /// Decision model: mixture/1 or link/2 (overrides config).
        #[arg(long)]
        model: Option<String>,
        /// Confounding strength in (0,1) (overrides config).
        #[arg(long)]
        alpha: Option<f64>,
        /// Labeling-rate multiplier in (0,1] (overrides config).
        #[arg(long)]
        beta: Option<f64>,
        /// Judge count (overrides config).
        #[arg(long)]
        m: Option<u32>,
        /// Sample size (overrides config).
        #[arg(long)]
        n: Option<usize>,
        /// Output directory (overrides config `output.dir`).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Fit a classifier with one registered learning method.
    Fit {
        /// Learning method: point, partial, selected, or full.
        #[arg(long)]
        mode: String,
        /// Dataset CSV (overrides config `data.csv`).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Column-schema JSON (overrides config `data.schema`).
        #[arg(long)]
        schema: Option<PathBuf>,
        /// Model output path (default: `<output.dir>/model-<mode>.json`).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Estimate per-row interval bounds and both weight kinds; with exactly
    /// two judges, also print aggregate latent-outcome bounds from the
    /// closed form and the linear program.
    Bounds {
        /// Dataset CSV (overrides config `data.csv`).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Column-schema JSON (overrides config `data.schema`).
        #[arg(long)]
        schema: Option<PathBuf>,
        /// Per-row output CSV (default: `<output.dir>/bounds.csv`).
        #[arg(long)]
        output: Option<PathBuf>,
        /// Also write the cross-fitted nuisance predictions for audit.
        #[arg(long)]
        nuisance_audit: Option<PathBuf>,
    },
    /// Score a saved model on a dataset: accuracy against oracle outcomes
    /// when present, and interval bounds on its misclassification risk.
    Evaluate {
        /// Saved model JSON.
        #[arg(long)]
        model: PathBuf,
        /// Dataset CSV (overrides config `data.csv`).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Column-schema JSON (overrides config `data.schema`).
        #[arg(long)]
        schema: Option<PathBuf>,
        /// Optional JSON report path.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run the replication experiment grid and write the report.
    Experiment {
        /// Output directory (overrides config `output.dir`).
        #[arg(long)]
        output: Option<PathBuf>,
        /// Report format: csv, json, or both.
        #[arg(long, default_value = "both")]
        format: String,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => ToolConfig::from_path(path)?,
        None => {
            let cfg = ToolConfig::default();
            cfg.validate()?;
            cfg
        }
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Error::config("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Error::config(format!("cannot size worker pool: {e}")))?;
    }
    if !cli.quiet {
        let resolved = serde_json::to_string(&cfg)
            .map_err(|e| Error::contract(format!("config serialization failed: {e}")))?;
        eprintln!("resolved config: {resolved}");
        eprintln!("config hash: {}", cfg.content_hash());
    }

    match cli.command {
        Command::Generate {
            model,
            alpha,
            beta,
            m,
            n,
            output,
        } => cmd_generate(&cfg, model, alpha, beta, m, n, output),
        Command::Fit {
            mode,
            data,
            schema,
            output,
        } => cmd_fit(&cfg, &mode, data, schema, output),
        Command::Bounds {
            data,
            schema,
            output,
            nuisance_audit,
        } => cmd_bounds(&cfg, data, schema, output, nuisance_audit),
        Command::Evaluate {
            model,
            data,
            schema,
            output,
        } => cmd_evaluate(&cfg, &model, data, schema, output),
        Command::Experiment { output, format } => cmd_experiment(&cfg, output, &format),
    }
}

/// Resolves the output directory (flag over config) and creates it.
fn out_dir(cfg: &ToolConfig, flag: Option<PathBuf>) -> Result<PathBuf> {
    let dir = flag.unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    std::fs::create_dir_all(&dir)
        .map_err(|e| Error::data(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

/// Resolves the input dataset (flags over config `data` section) and loads it.
fn load_input(
    cfg: &ToolConfig,
    data: Option<PathBuf>,
    schema: Option<PathBuf>,
) -> Result<SelectiveDataset> {
    let csv_path = data
        .or_else(|| cfg.data.csv.as_ref().map(PathBuf::from))
        .ok_or_else(|| {
            Error::config("no dataset: pass --data or set `data.csv` in the config")
        })?;
    let schema_path = schema
        .or_else(|| cfg.data.schema.as_ref().map(PathBuf::from))
        .ok_or_else(|| {
            Error::config("no column schema: pass --schema or set `data.schema` in the config")
        })?;
    let schema = ColumnSchema::from_path(&schema_path)?;
    load_csv(&csv_path, &schema)
}

#[allow(clippy::too_many_arguments)]
fn cmd_generate(
    cfg: &ToolConfig,
    model: Option<String>,
    alpha: Option<f64>,
    beta: Option<f64>,
    m: Option<u32>,
    n: Option<usize>,
    output: Option<PathBuf>,
) -> Result<()> {
    let mut world = cfg.generate.clone();
    if let Some(s) = model {
        world.model = DecisionModel::parse(&s)?;
    }
    if let Some(v) = alpha {
        world.alpha = v;
    }
    if let Some(v) = beta {
        world.beta = v;
    }
    if let Some(v) = m {
        world.m = v;
    }
    if let Some(v) = n {
        world.n = v;
    }
    world.validate()?;

    let dir = out_dir(cfg, output)?;
    let sim = simulate(&world, cfg.seed)?;

    let data_path = dir.join("data.csv");
    sim.dataset.save_csv(&data_path)?;
    let schema_path = dir.join("schema.json");
    sim.dataset.emitted_schema().write(&schema_path)?;
    let truth_path = dir.join("truth.csv");
    write_truth(&truth_path, &sim.p_label, &sim.unobservable, sim.mu_star.as_deref())?;

    println!(
        "wrote {} rows ({} judges, labeled fraction {:.4})",
        sim.dataset.n(),
        sim.dataset.m,
        sim.dataset.labeled_fraction()
    );
    println!("dataset: {}", data_path.display());
    println!("schema:  {}", schema_path.display());
    println!("truth:   {}", truth_path.display());
    Ok(())
}

/// Writes the per-row truth sidecar of a simulated world.
fn write_truth(
    path: &Path,
    p_label: &[f64],
    unobservable: &[f64],
    mu_star: Option<&[f64]>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::data(format!("cannot create {}: {e}", path.display())))?;
    let mut header = vec!["p_label", "unobservable"];
    if mu_star.is_some() {
        header.push("mu_star");
    }
    w.write_record(&header)
        .map_err(|e| Error::data(format!("csv write failed: {e}")))?;
    for i in 0..p_label.len() {
        let mut rec = vec![format!("{}", p_label[i]), format!("{}", unobservable[i])];
        if let Some(mu) = mu_star {
            rec.push(format!("{}", mu[i]));
        }
        w.write_record(&rec)
            .map_err(|e| Error::data(format!("csv write failed: {e}")))?;
    }
    w.flush()
        .map_err(|e| Error::data(format!("csv flush failed: {e}")))
}

/// Cross-fits nuisances on a loaded dataset with a fresh fold plan.
fn folds_and_nuisances(
    cfg: &ToolConfig,
    ds: &SelectiveDataset,
) -> Result<(selabel::dataset::FoldPlan, NuisanceSet)> {
    let plan = make_folds(ds.n(), cfg.learner.folds, derive_seed(cfg.seed, &[TAG_FOLDS]))?;
    let nuis = crossfit_nuisances(ds, &plan, &cfg.nuisance)?;
    Ok((plan, nuis))
}

fn cmd_fit(
    cfg: &ToolConfig,
    mode: &str,
    data: Option<PathBuf>,
    schema: Option<PathBuf>,
    output: Option<PathBuf>,
) -> Result<()> {
    let ds = load_input(cfg, data, schema)?;
    let method = build_method(mode)?;

    let plan = make_folds(ds.n(), cfg.learner.folds, derive_seed(cfg.seed, &[TAG_FOLDS]))?;
    let nuisances = if method.needs_nuisances() {
        Some(crossfit_nuisances(&ds, &plan, &cfg.nuisance)?)
    } else {
        None
    };
    let nuisance_hash = cfg.nuisance.content_hash();
    let ctx = TrainContext {
        train: &ds,
        plan: &plan,
        nuisances: nuisances.as_ref(),
        learner: &cfg.learner,
        identification: &cfg.identification,
        nuisance_hash: &nuisance_hash,
    };
    let (model, diag) = method.fit(&ctx)?;

    let path = match output {
        Some(p) => p,
        None => out_dir(cfg, None)?.join(format!("model-{mode}.json")),
    };
    model.save_json(&path)?;

    println!(
        "fit {} on {} rows: converged {} in {} iterations (objective {:.6e})",
        mode,
        ds.n(),
        model.metadata.converged,
        model.metadata.iterations,
        model.metadata.objective,
    );
    if let Some(rate) = diag.weight_flag_rate {
        println!("weight repair rate: {rate:.4}");
    }
    if let Some(rate) = diag.crossed_rate {
        println!("crossed-interval rate: {rate:.4}");
    }
    println!("model: {}", path.display());
    Ok(())
}

fn cmd_bounds(
    cfg: &ToolConfig,
    data: Option<PathBuf>,
    schema: Option<PathBuf>,
    output: Option<PathBuf>,
    nuisance_audit: Option<PathBuf>,
) -> Result<()> {
    let ds = load_input(cfg, data, schema)?;
    let (_, nuis) = folds_and_nuisances(cfg, &ds)?;
    if let Some(audit) = nuisance_audit {
        nuis.write_csv(&audit)?;
        println!("nuisance audit: {}", audit.display());
    }

    let bounds = partial_bounds_uniform(&nuis, cfg.identification.bound_a, cfg.identification.bound_b)?;
    let w_partial = partial_weight(&bounds);
    let w_point = point_weight(&nuis, cfg.identification.eps_denom)?;

    let path = match output {
        Some(p) => p,
        None => out_dir(cfg, None)?.join("bounds.csv"),
    };
    let mut w = csv::Writer::from_path(&path)
        .map_err(|e| Error::data(format!("cannot create {}: {e}", path.display())))?;
    w.write_record([
        "row",
        "fold",
        "lower",
        "upper",
        "crossed",
        "w_partial",
        "w_point",
        "point_repaired",
    ])
    .map_err(|e| Error::data(format!("csv write failed: {e}")))?;
    for i in 0..bounds.n() {
        w.write_record([
            i.to_string(),
            bounds.fold[i].to_string(),
            format!("{}", bounds.lower[i]),
            format!("{}", bounds.upper[i]),
            bounds.crossed[i].to_string(),
            format!("{}", w_partial.w[i]),
            format!("{}", w_point.w[i]),
            w_point.flagged[i].to_string(),
        ])
        .map_err(|e| Error::data(format!("csv write failed: {e}")))?;
    }
    w.flush()
        .map_err(|e| Error::data(format!("csv flush failed: {e}")))?;

    let n = bounds.n() as f64;
    let mean_width: f64 = bounds
        .lower
        .iter()
        .zip(&bounds.upper)
        .map(|(l, u)| u - l)
        .sum::<f64>()
        / n;
    println!(
        "bounds for {} rows: mean width {:.4}, crossed rate {:.4}, point repair rate {:.4}",
        bounds.n(),
        mean_width,
        bounds.crossed_rate(),
        w_point.flag_rate()
    );
    println!("per-row bounds: {}", path.display());

    if ds.m == 2 {
        let p = ObservableDistribution::from_dataset(&ds)?;
        let (cf_l, cf_u) = bounds_closed_form(&p);
        let (lp_l, lp_u) = bounds_lp(&p)?;
        println!("aggregate latent-outcome bounds (closed form):    [{cf_l:.6}, {cf_u:.6}]");
        println!("aggregate latent-outcome bounds (linear program): [{lp_l:.6}, {lp_u:.6}]");
    }
    Ok(())
}

fn cmd_evaluate(
    cfg: &ToolConfig,
    model_path: &Path,
    data: Option<PathBuf>,
    schema: Option<PathBuf>,
    output: Option<PathBuf>,
) -> Result<()> {
    let model = ScoreModel::load_json(model_path)?;
    let ds = load_input(cfg, data, schema)?;
    let pred = model.predict_class(&ds)?;

    let accuracy = match ds.oracle_outcome.as_ref() {
        Some(truth) => Some(zero_one_accuracy(&pred, truth)?),
        None => None,
    };
    let (_, nuis) = folds_and_nuisances(cfg, &ds)?;
    let bounds =
        partial_bounds_uniform(&nuis, cfg.identification.bound_a, cfg.identification.bound_b)?;
    let (risk_lower, risk_upper) = risk_bounds(&bounds, &pred)?;

    let positive_rate = pred.iter().map(|&p| p as f64).sum::<f64>() / pred.len() as f64;
    let report = serde_json::json!({
        "model": model_path.display().to_string(),
        "rows": ds.n(),
        "positive_rate": positive_rate,
        "labeled_fraction": ds.labeled_fraction(),
        "accuracy_vs_oracle": accuracy,
        "risk_lower": risk_lower,
        "risk_upper": risk_upper,
    });
    let text = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::contract(format!("report serialization failed: {e}")))?;
    println!("{text}");
    if let Some(path) = output {
        std::fs::write(&path, text)
            .map_err(|e| Error::data(format!("cannot write {}: {e}", path.display())))?;
        println!("report: {}", path.display());
    }
    Ok(())
}

fn cmd_experiment(cfg: &ToolConfig, output: Option<PathBuf>, format: &str) -> Result<()> {
    let formats: Vec<ReportFormat> = match format {
        "both" => vec![ReportFormat::Csv, ReportFormat::Json],
        other => vec![ReportFormat::parse(other)?],
    };
    let dir = out_dir(cfg, output)?;
    let report = run_experiment(
        &cfg.experiment,
        &cfg.nuisance,
        &cfg.identification,
        &cfg.learner,
        cfg.seed,
    )?;

    for fmt in formats {
        let (name, fmt_label) = match fmt {
            ReportFormat::Csv => ("report.csv", "csv"),
            ReportFormat::Json => ("report.json", "json"),
        };
        let path = dir.join(name);
        write_report(&report, &path, fmt)?;
        println!("report ({fmt_label}): {}", path.display());
    }

    println!(
        "{:<8} {:>6} {:>5} {:<9} {:>9} {:>8} {:>4} {:>5}",
        "model", "alpha", "beta", "method", "mean_acc", "sd_acc", "ok", "fail"
    );
    for s in summarize(&report) {
        let model = match s.model {
            DecisionModel::Mixture => "mixture",
            DecisionModel::Link => "link",
        };
        let (mean, sd) = match (s.mean_accuracy, s.sd_accuracy) {
            (Some(m), Some(sd)) => (format!("{m:.4}"), format!("{sd:.4}")),
            _ => ("-".into(), "-".into()),
        };
        println!(
            "{:<8} {:>6} {:>5} {:<9} {:>9} {:>8} {:>4} {:>5}",
            model, s.alpha, s.beta, s.method, mean, sd, s.succeeded, s.failed
        );
    }
    eprintln!("experiment wall time: {:.1}s", report.wall_seconds);
    Ok(())
}
