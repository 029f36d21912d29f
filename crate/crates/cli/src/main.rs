use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use mvf_core::basis::{HigherOrderKernel, OrthoPolyBasis};
use mvf_core::experiment::{
    run_experiment, write_selection_summary, ExperimentConfig, ExperimentKind, ExperimentOutcome,
};
use mvf_core::global::{
    fit_global, fit_kernel_estimator, integrated_l2_risk, pointwise_risk, sup_grid, sup_opnorm_risk,
    GlobalFitConfig, KernelEstimateConfig,
};
use mvf_core::local::{fit_pointwise, LocalFitConfig};
use mvf_core::sampling::{evaluate_truth, generate_dataset, Dataset, MatrixFunctionSpec};
use mvf_core::selection::{run_selection_pipeline, SelectionConfig};

/// Low-rank matrix-valued function estimation: simulation, fitting, selection.
#[derive(Parser)]
#[command(name = "mvf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a dataset from the configured truth and save it as CSV.
    Simulate(Common),
    /// Local polynomial fit at `estimator.t0`.
    FitPoint(FitArgs),
    /// Tiled global fit over [0, 1].
    FitGlobal(FitArgs),
    /// Kernel estimate at `estimator.t0`.
    FitKernel(FitArgs),
    /// Bandwidth selection by train/test split.
    Select(FitArgs),
    /// Risk sweep over the configured sample sizes.
    Sweep(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (TOML). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sample sizes, replacing the config's list.
    #[arg(long, value_delimiter = ',')]
    n: Vec<usize>,
    /// Seeds, replacing the config's list.
    #[arg(long, value_delimiter = ',')]
    seed: Vec<u64>,
    /// Output directory. Defaults to `$MVF_OUTPUT_ROOT/<subcommand>`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output root used when `--out` is absent.
    #[arg(long, env = "MVF_OUTPUT_ROOT", default_value = "mvf-runs")]
    output_root: PathBuf,
    /// Also render heatmap images.
    #[arg(long)]
    plots: bool,
}

#[derive(Args, Clone)]
struct FitArgs {
    #[command(flatten)]
    common: Common,
    /// Fit a saved dataset instead of simulating one.
    #[arg(long)]
    data: Option<PathBuf>,
}

impl Common {
    fn load(&self, name: &str) -> anyhow::Result<(ExperimentConfig, PathBuf)> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
            None => ExperimentConfig::default(),
        };
        if !self.n.is_empty() {
            cfg.n.clone_from(&self.n);
        }
        if !self.seed.is_empty() {
            cfg.seeds.clone_from(&self.seed);
        }
        cfg.plots |= self.plots;
        let out = self
            .out
            .clone()
            .or_else(|| cfg.output_dir.clone())
            .unwrap_or_else(|| self.output_root.join(name));
        cfg.output_dir = Some(out.clone());
        Ok((cfg, out))
    }
}

/// The dataset to fit, with its truth when it was simulated here.
fn obtain_data(
    cfg: &ExperimentConfig,
    data: Option<&Path>,
) -> anyhow::Result<(Dataset<f64>, Option<MatrixFunctionSpec<f64>>)> {
    if let Some(path) = data {
        let d = Dataset::load(path).with_context(|| format!("loading {}", path.display()))?;
        return Ok((d, None));
    }
    cfg.validate()?;
    let truth = cfg.truth.build()?;
    let n = cfg.n[0];
    let d = generate_dataset(&truth, n, cfg.noise, ExperimentConfig::data_seed(cfg.seeds[0], n))?;
    Ok((d, Some(truth)))
}

fn simulate(args: &Common) -> anyhow::Result<()> {
    let (cfg, out) = args.load("simulate")?;
    let (data, truth) = obtain_data(&cfg, None)?;
    let truth = truth.expect("simulated data carries its truth");
    fs::create_dir_all(&out)?;
    let path = out.join("data.csv");
    data.save(&path)?;
    let t0 = cfg.estimator.t0;
    evaluate_truth(&truth, t0)?.write_text(fs::File::create(out.join("truth_t0.txt"))?)?;
    println!("wrote {} observations (m = {}) to {}", data.len(), data.m(), path.display());
    Ok(())
}

fn fit_point(args: &FitArgs) -> anyhow::Result<()> {
    let (cfg, out) = args.common.load("fit-point")?;
    let (data, truth) = obtain_data(&cfg, args.data.as_deref())?;
    let (h, eps) = cfg.local_tuning(&data, cfg.truth.rank, false)?;
    let e = &cfg.estimator;
    let local = LocalFitConfig::new(e.t0, h, eps, OrthoPolyBasis::new(e.family, e.degree)).with_admm(cfg.solver.clone());
    let est = fit_pointwise(&data, &local)?;
    est.save(&out, "pointwise")?;
    let point = est.point_estimate();
    point.write_text(fs::File::create(out.join("estimate_t0.txt"))?)?;
    let d = &est.diagnostics;
    println!(
        "t0 = {} h = {h:.6} epsilon = {eps:.6e} iterations = {} converged = {}",
        e.t0, d.iterations, d.converged
    );
    if let Some(truth) = truth {
        println!("pointwise risk {:.6e}", pointwise_risk(&point, &evaluate_truth(&truth, e.t0)?)?);
    }
    println!("results in {}", out.display());
    Ok(())
}

fn fit_global_cmd(args: &FitArgs) -> anyhow::Result<()> {
    let (cfg, out) = args.common.load("fit-global")?;
    let (data, truth) = obtain_data(&cfg, args.data.as_deref())?;
    let (h, eps) = cfg.local_tuning(&data, cfg.truth.rank, true)?;
    let e = &cfg.estimator;
    let gcfg = GlobalFitConfig::new(h, eps, OrthoPolyBasis::new(e.family, e.degree)).with_admm(cfg.solver.clone());
    let est = fit_global(&data, &gcfg)?;
    for (k, tile) in est.tiles.iter().enumerate() {
        tile.save(&out, &format!("tile{k}"))?;
    }
    println!(
        "h = {h:.6} tiles = {} epsilon = {eps:.6e} converged = {}",
        est.tiles.len(),
        est.converged()
    );
    if let Some(truth) = truth {
        println!("integrated risk {:.6e}", integrated_l2_risk(&est, &truth, e.risk_grid)?);
    }
    println!("results in {}", out.display());
    Ok(())
}

fn fit_kernel_cmd(args: &FitArgs) -> anyhow::Result<()> {
    let (cfg, out) = args.common.load("fit-kernel")?;
    let (data, truth) = obtain_data(&cfg, args.data.as_deref())?;
    let h = cfg.kernel_tuning(&data)?;
    let e = &cfg.estimator;
    let mut kcfg = KernelEstimateConfig::new(HigherOrderKernel::new(e.degree), h)?;
    kcfg.threshold = e.kernel_threshold;
    let est = fit_kernel_estimator(&data, e.t0, &kcfg)?;
    fs::create_dir_all(&out)?;
    est.write_text(fs::File::create(out.join("kernel_t0.txt"))?)?;
    println!("t0 = {} h = {h:.6}", e.t0);
    if let Some(truth) = truth {
        let fits = sup_grid(h, e.sup_points)?
            .into_iter()
            .map(|t| Ok((t, fit_kernel_estimator(&data, t, &kcfg)?)))
            .collect::<mvf_core::Result<Vec<_>>>()?;
        println!("sup-norm risk {:.6e}", sup_opnorm_risk(&fits, &truth)?);
    }
    println!("results in {}", out.display());
    Ok(())
}

fn select(args: &FitArgs) -> anyhow::Result<()> {
    let (mut cfg, out) = args.common.load("select")?;
    cfg.kind = ExperimentKind::ModelSelection;
    if let Some(path) = &args.data {
        let (data, _) = obtain_data(&cfg, Some(path))?;
        let sel = SelectionConfig {
            admm: cfg.solver.clone(),
            split_seed: cfg.seeds[0],
            ..cfg.selection.clone()
        };
        let report = run_selection_pipeline(&data, &sel, None)?;
        fs::create_dir_all(&out)?;
        report.write_csv(fs::File::create(out.join("selection.csv"))?)?;
        report.write_csv(std::io::stdout().lock())?;
        for ex in &report.excluded {
            println!("excluded h = {} ell = {}: {}", ex.spec.h, ex.spec.ell, ex.reason);
        }
        println!("results in {}", out.display());
        return Ok(());
    }
    match run_experiment(&cfg)? {
        ExperimentOutcome::Selection(runs) => write_selection_summary(&runs, std::io::stdout().lock())?,
        ExperimentOutcome::Sweep(_) => unreachable!("selection kind was forced above"),
    }
    println!("results in {}", out.display());
    Ok(())
}

fn sweep(args: &Common) -> anyhow::Result<()> {
    let (cfg, out) = args.load("sweep")?;
    if !matches!(
        cfg.kind,
        ExperimentKind::PointwiseSweep | ExperimentKind::IntegratedSweep | ExperimentKind::SupnormSweep
    ) {
        bail!(mvf_core::Error::Config(format!(
            "kind: `{}` is not a sweep; use pointwise_sweep, integrated_sweep or supnorm_sweep",
            cfg.kind.as_str()
        )));
    }
    let ExperimentOutcome::Sweep(report) = run_experiment(&cfg)? else {
        unreachable!("sweep kinds produce sweep reports")
    };
    report.write_csv(std::io::stdout().lock())?;
    for err in report.rows.iter().flat_map(|r| &r.errors) {
        println!("failed: {err}");
    }
    if let Some((slope, se)) = report.slope {
        println!("log-log slope {slope:.4} (stderr {se:.4})");
    }
    println!("results in {}", out.display());
    Ok(())
}

fn error_class(err: &anyhow::Error) -> &'static str {
    err.chain()
        .find_map(|e| {
            e.downcast_ref::<mvf_core::Error>()
                .map(|e| e.class())
                .or_else(|| e.downcast_ref::<std::io::Error>().map(|_| "Io"))
        })
        .unwrap_or("Other")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::FitPoint(a) => fit_point(a),
        Command::FitGlobal(a) => fit_global_cmd(a),
        Command::FitKernel(a) => fit_kernel_cmd(a),
        Command::Select(a) => select(a),
        Command::Sweep(a) => sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error [{}]: {err:#}", error_class(&err));
            ExitCode::FAILURE
        }
    }
}
