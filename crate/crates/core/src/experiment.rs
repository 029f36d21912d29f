//! Simulation driver: configuration, risk sweeps, selection runs, result files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{HigherOrderKernel, OrthoPolyBasis, PolyFamily};
use crate::error::{Error, Result};
use crate::global::{
    fit_global, fit_kernel_estimator, integrated_l2_risk, kernel_bandwidth, pointwise_risk, sup_grid,
    sup_opnorm_risk, theoretical_rate, tile_count, GlobalFitConfig, KernelBandwidthInputs, KernelEstimateConfig,
    RateKind,
};
use crate::linalg::HermitianMatrix;
use crate::local::{fit_pointwise, optimal_bandwidth, penalty_epsilon, AdmmSettings, BandwidthInputs, LocalFitConfig, PenaltyInputs};
use crate::sampling::{evaluate_truth, generate_dataset, Dataset, MatrixFunctionSpec, Noise, TruthParams};
use crate::selection::{run_selection_pipeline, SelectionConfig, SelectionReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    PointwiseSweep,
    IntegratedSweep,
    SupnormSweep,
    ModelSelection,
    SingleFit,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::PointwiseSweep => "pointwise_sweep",
            Self::IntegratedSweep => "integrated_sweep",
            Self::SupnormSweep => "supnorm_sweep",
            Self::ModelSelection => "model_selection",
            Self::SingleFit => "single_fit",
        }
    }

    fn rate_kinds(self) -> (RateKind, RateKind) {
        match self {
            Self::IntegratedSweep | Self::ModelSelection => (RateKind::L2Upper, RateKind::L2Lower),
            Self::SupnormSweep => (RateKind::SupUpper, RateKind::SupLower),
            Self::PointwiseSweep | Self::SingleFit => (RateKind::PointwiseUpper, RateKind::PointwiseLower),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthModel {
    Factor,
    Diffusion,
    Euclidean,
    Constant,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TruthConfig {
    pub model: TruthModel,
    pub m: usize,
    pub rank: usize,
    pub beta: f64,
    pub holder_l: f64,
    pub a1: f64,
    pub a2: f64,
    pub knots: usize,
    /// Oscillation frequency of the diffusion profile.
    pub freq: f64,
    /// Ambient dimension of the moving points in the Euclidean model.
    pub dim: usize,
    pub seed: u64,
}

impl Default for TruthConfig {
    fn default() -> Self {
        let p = TruthParams::default();
        Self {
            model: TruthModel::Factor,
            m: p.m,
            rank: p.rank,
            beta: p.beta,
            holder_l: p.holder_l,
            a1: p.a1,
            a2: p.a2,
            knots: p.knots,
            freq: 1.0,
            dim: 2,
            seed: 0,
        }
    }
}

impl TruthConfig {
    pub fn params(&self) -> TruthParams {
        TruthParams {
            m: self.m,
            rank: self.rank,
            beta: self.beta,
            holder_l: self.holder_l,
            a1: self.a1,
            a2: self.a2,
            knots: self.knots,
            seed: self.seed,
        }
    }

    pub fn build(&self) -> Result<MatrixFunctionSpec<f64>> {
        let p = self.params();
        match self.model {
            TruthModel::Factor => MatrixFunctionSpec::random_factor(&p),
            TruthModel::Diffusion => MatrixFunctionSpec::random_diffusion(&p, self.freq),
            TruthModel::Euclidean => MatrixFunctionSpec::random_euclidean(&p, self.dim),
            TruthModel::Constant => MatrixFunctionSpec::random_constant(&p),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub family: PolyFamily,
    /// Polynomial degree, or kernel order for the sup-norm sweep.
    pub degree: usize,
    /// Evaluation point of pointwise fits.
    pub t0: f64,
    /// Fixed bandwidth; derived from `n` when absent.
    pub h: Option<f64>,
    /// Fixed penalty; derived from `n` and `h` when absent.
    pub epsilon: Option<f64>,
    /// Singular-value threshold applied to the kernel estimator.
    pub kernel_threshold: Option<f64>,
    /// Trapezoid nodes of the integrated risk.
    pub risk_grid: usize,
    /// Evaluation points of the sup-norm risk.
    pub sup_points: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            family: PolyFamily::LegendreBox,
            degree: 1,
            t0: 0.5,
            h: None,
            epsilon: None,
            kernel_threshold: None,
            risk_grid: 512,
            sup_points: 64,
        }
    }
}

/// Multiplicative constants of the bandwidth, penalty and rate formulas.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Constants {
    pub c1: f64,
    pub d: f64,
    pub c_star: f64,
    pub upper: f64,
    pub lower: f64,
}

impl Default for Constants {
    fn default() -> Self {
        Self {
            c1: 1.0,
            d: 1.0,
            c_star: 1.0,
            upper: 1.0,
            lower: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Sample sizes (total, including the hold-out half for selection runs).
    pub n: Vec<usize>,
    pub seeds: Vec<u64>,
    pub truth: TruthConfig,
    pub noise: Noise,
    pub estimator: EstimatorConfig,
    pub constants: Constants,
    pub solver: AdmmSettings,
    pub selection: SelectionConfig,
    pub output_dir: Option<PathBuf>,
    pub plots: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::IntegratedSweep,
            n: vec![2000, 8000, 32000],
            seeds: vec![0],
            truth: TruthConfig::default(),
            noise: Noise::default(),
            estimator: EstimatorConfig::default(),
            constants: Constants::default(),
            solver: AdmmSettings::default(),
            selection: SelectionConfig::default(),
            output_dir: None,
            plots: false,
        }
    }
}

fn require(cond: bool, field: &'static str, msg: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Config(format!("{field}: {msg}")))
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        require(!self.n.is_empty(), "n", "list is empty")?;
        require(self.n.iter().all(|&n| n >= 2), "n", "every sample size must be at least 2")?;
        require(!self.seeds.is_empty(), "seeds", "list is empty")?;
        let sweep = matches!(
            self.kind,
            ExperimentKind::PointwiseSweep | ExperimentKind::IntegratedSweep | ExperimentKind::SupnormSweep
        );
        if sweep {
            require(self.n.windows(2).all(|w| w[0] < w[1]), "n", "must be strictly increasing")?;
        }
        let t = &self.truth;
        require(t.m > 0, "truth.m", "must be positive")?;
        require(t.rank > 0, "truth.rank", "must be positive")?;
        require(t.beta > 0.0, "truth.beta", "must be positive")?;
        require(t.holder_l > 0.0, "truth.holder_l", "must be positive")?;
        require(t.a1 > 0.0 && t.a2 > 0.0, "truth.a1/a2", "must be positive")?;
        match self.noise {
            Noise::Uniform { level } => require(level >= 0.0, "noise.level", "must be nonnegative")?,
            Noise::TwoPoint { bound } => require(bound > 0.0, "noise.bound", "must be positive")?,
        }
        let e = &self.estimator;
        require((0.0..=1.0).contains(&e.t0), "estimator.t0", "must lie in [0, 1]")?;
        require(e.h.is_none_or(|h| h > 0.0 && h <= 1.0), "estimator.h", "must lie in (0, 1]")?;
        require(e.epsilon.is_none_or(|v| v >= 0.0), "estimator.epsilon", "must be nonnegative")?;
        require(
            e.kernel_threshold.is_none_or(|v| v >= 0.0),
            "estimator.kernel_threshold",
            "must be nonnegative",
        )?;
        require(e.risk_grid >= 64, "estimator.risk_grid", "need at least 64 nodes")?;
        require(e.sup_points >= 1, "estimator.sup_points", "must be positive")?;
        let c = &self.constants;
        for (name, v) in [
            ("constants.c1", c.c1),
            ("constants.c_star", c.c_star),
            ("constants.upper", c.upper),
            ("constants.lower", c.lower),
        ] {
            require(v > 0.0, name, "must be positive")?;
        }
        require(c.d >= 0.0, "constants.d", "must be nonnegative")?;
        self.solver.validate()?;
        if self.kind == ExperimentKind::ModelSelection {
            require(self.n.iter().all(|n| n % 2 == 0), "n", "selection runs need even sample sizes")?;
        }
        Ok(())
    }

    /// Seed of the dataset drawn for `(seed, n)`.
    pub fn data_seed(seed: u64, n: usize) -> u64 {
        seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (n as u64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub risk_mean: f64,
    pub risk_std: f64,
    pub upper_rate: f64,
    pub lower_rate: f64,
    /// Per-seed risks, in seed order; failed fits are absent.
    pub risks: Vec<f64>,
    pub bandwidths: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub errors: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub kind: ExperimentKind,
    pub rows: Vec<SweepRow>,
    /// Least-squares slope of `log risk_mean` on `log n`, with its standard error.
    pub slope: Option<(f64, f64)>,
}

impl SweepReport {
    /// `n,risk_mean,risk_std,upper_rate,lower_rate`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "n,risk_mean,risk_std,upper_rate,lower_rate")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{},{}", r.n, r.risk_mean, r.risk_std, r.upper_rate, r.lower_rate)?;
        }
        Ok(())
    }

    /// One line per fit: `n,seed_index,h,epsilon,risk`.
    pub fn write_detail_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "n,seed_index,h,epsilon,risk")?;
        for r in &self.rows {
            for (i, ((risk, h), eps)) in r.risks.iter().zip(&r.bandwidths).zip(&r.epsilons).enumerate() {
                writeln!(w, "{},{},{},{},{}", r.n, i, h, eps, risk)?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionRun {
    pub n: usize,
    pub seed: u64,
    pub report: SelectionReport,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ExperimentOutcome {
    Sweep(SweepReport),
    Selection(Vec<SelectionRun>),
}

/// Ordinary least squares of `log risk` on `log n`; returns `(slope, stderr)`.
pub fn rate_slope(rows: &[(f64, f64)]) -> Result<(f64, f64)> {
    if rows.len() < 3 {
        return Err(Error::param("rows", "need at least three points"));
    }
    if rows.iter().any(|&(n, r)| !(n > 0.0 && r > 0.0)) {
        return Err(Error::param("rows", "sample sizes and risks must be positive"));
    }
    let k = rows.len() as f64;
    let xs: Vec<f64> = rows.iter().map(|r| r.0.ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::param("rows", "sample sizes must not all coincide"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let ssr: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - my - slope * (x - mx)).powi(2)).sum();
    Ok((slope, (ssr / (k - 2.0) / sxx).sqrt()))
}

struct FitOutcome {
    risk: f64,
    h: f64,
    epsilon: f64,
    estimate_at_t0: Option<HermitianMatrix<f64>>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, var.sqrt())
}

impl ExperimentConfig {
    /// Bandwidth and penalty of the local polynomial estimator for `data`:
    /// the configured values, or the formulas with this config's constants.
    /// With `tiled`, the penalty uses the tile half-width `1/M` in place of `h`.
    pub fn local_tuning(&self, data: &Dataset<f64>, rank: usize, tiled: bool) -> Result<(f64, f64)> {
        let e = &self.estimator;
        let c = &self.constants;
        let (n, m, a, ell) = (data.len(), data.m(), data.response_bound(), e.degree);
        let basis = OrthoPolyBasis::<f64>::new(e.family, ell);
        let phi = basis.phi();
        let r_t = basis.monomial_transform()?.r_t;
        let h = match e.h {
            Some(h) => h,
            None => optimal_bandwidth(&BandwidthInputs {
                m,
                r: rank,
                n,
                ell,
                beta: self.truth.beta,
                holder_l: self.truth.holder_l,
                a,
                phi,
                r_t,
                c1: c.c1,
            })?,
        };
        let h_eff = if tiled { 1.0 / tile_count(h)? as f64 } else { h };
        let eps = match e.epsilon {
            Some(v) => v,
            None => penalty_epsilon(&PenaltyInputs {
                m,
                n,
                h: h_eff,
                ell,
                a,
                phi,
                r_t,
                d: c.d,
            })?,
        };
        Ok((h, eps))
    }

    /// Bandwidth of the kernel estimator: the configured value or the formula
    /// with constant `c_star`.
    pub fn kernel_tuning(&self, data: &Dataset<f64>) -> Result<f64> {
        match self.estimator.h {
            Some(h) => Ok(h),
            None => kernel_bandwidth(&KernelBandwidthInputs {
                m: data.m(),
                n: data.len(),
                ell: self.estimator.degree,
                beta: self.truth.beta,
                holder_l: self.truth.holder_l,
                a: data.response_bound(),
                c_star: self.constants.c_star,
            }),
        }
    }
}

fn fit_one(cfg: &ExperimentConfig, truth: &MatrixFunctionSpec<f64>, data: &Dataset<f64>) -> Result<FitOutcome> {
    let e = &cfg.estimator;
    let basis = OrthoPolyBasis::<f64>::new(e.family, e.degree);
    let ell = e.degree;
    match cfg.kind {
        ExperimentKind::PointwiseSweep | ExperimentKind::SingleFit => {
            let (h, eps) = cfg.local_tuning(data, truth.rank_bound(), false)?;
            let local = LocalFitConfig::new(e.t0, h, eps, basis).with_admm(cfg.solver.clone());
            let est = fit_pointwise(data, &local)?.point_estimate();
            let risk = pointwise_risk(&est, &evaluate_truth(truth, e.t0)?)?;
            Ok(FitOutcome {
                risk,
                h,
                epsilon: eps,
                estimate_at_t0: Some(est),
            })
        }
        ExperimentKind::IntegratedSweep => {
            let (h, eps) = cfg.local_tuning(data, truth.rank_bound(), true)?;
            let global = GlobalFitConfig::new(h, eps, basis).with_admm(cfg.solver.clone());
            let est = fit_global(data, &global)?;
            let risk = integrated_l2_risk(&est, truth, e.risk_grid)?;
            Ok(FitOutcome {
                risk,
                h,
                epsilon: eps,
                estimate_at_t0: Some(est.evaluate(e.t0)?),
            })
        }
        ExperimentKind::SupnormSweep => {
            let h = cfg.kernel_tuning(data)?;
            let mut kcfg = KernelEstimateConfig::new(HigherOrderKernel::<f64>::new(ell), h)?;
            kcfg.threshold = e.kernel_threshold;
            let estimates = sup_grid(h, e.sup_points)?
                .into_iter()
                .map(|t| Ok((t, fit_kernel_estimator(data, t, &kcfg)?)))
                .collect::<Result<Vec<_>>>()?;
            let risk = sup_opnorm_risk(&estimates, truth)?;
            let at_t0 = fit_kernel_estimator(data, e.t0, &kcfg)?;
            Ok(FitOutcome {
                risk,
                h,
                epsilon: e.kernel_threshold.unwrap_or(0.0),
                estimate_at_t0: Some(at_t0),
            })
        }
        ExperimentKind::ModelSelection => Err(Error::Config("kind: selection runs are not sweeps".into())),
    }
}

/// Runs the configured experiment. Results are written to `output_dir` when set.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let truth = cfg.truth.build()?;
    let outcome = if cfg.kind == ExperimentKind::ModelSelection {
        ExperimentOutcome::Selection(run_selection_runs(cfg, &truth)?)
    } else {
        let (report, heatmaps) = run_sweep(cfg, &truth)?;
        if let (Some(dir), true) = (&cfg.output_dir, cfg.plots) {
            emit_heatmap_series(&truth, cfg.estimator.t0, &heatmaps, &dir.join("heatmaps"))?;
        }
        ExperimentOutcome::Sweep(report)
    };
    if let Some(dir) = &cfg.output_dir {
        write_outputs(cfg, &outcome, dir)?;
    }
    Ok(outcome)
}

type Heatmaps = Vec<(usize, HermitianMatrix<f64>)>;

fn run_sweep(cfg: &ExperimentConfig, truth: &MatrixFunctionSpec<f64>) -> Result<(SweepReport, Heatmaps)> {
    let jobs: Vec<(usize, usize)> = (0..cfg.n.len())
        .flat_map(|i| (0..cfg.seeds.len()).map(move |s| (i, s)))
        .collect();
    let results: Vec<Result<FitOutcome>> = jobs
        .par_iter()
        .map(|&(i, s)| {
            let n = cfg.n[i];
            let data = generate_dataset(truth, n, cfg.noise, ExperimentConfig::data_seed(cfg.seeds[s], n))?;
            fit_one(cfg, truth, &data)
        })
        .collect();
    let (upper_kind, lower_kind) = cfg.kind.rate_kinds();
    let mut rows = Vec::with_capacity(cfg.n.len());
    let mut heatmaps = Vec::new();
    let mut results = results.into_iter();
    for &n in &cfg.n {
        let mut row = SweepRow {
            n,
            risk_mean: f64::NAN,
            risk_std: f64::NAN,
            upper_rate: theoretical_rate(upper_kind, cfg.truth.m, cfg.truth.rank, n, cfg.truth.beta, cfg.constants.upper)?,
            lower_rate: theoretical_rate(lower_kind, cfg.truth.m, cfg.truth.rank, n, cfg.truth.beta, cfg.constants.lower)?,
            risks: Vec::new(),
            bandwidths: Vec::new(),
            epsilons: Vec::new(),
            errors: Vec::new(),
        };
        for s in 0..cfg.seeds.len() {
            match results.next().expect("one result per job") {
                Ok(fit) => {
                    row.risks.push(fit.risk);
                    row.bandwidths.push(fit.h);
                    row.epsilons.push(fit.epsilon);
                    if s == 0 {
                        if let Some(est) = fit.estimate_at_t0 {
                            heatmaps.push((n, est));
                        }
                    }
                }
                Err(e) => row.errors.push(format!("seed {}: {}: {e}", cfg.seeds[s], e.class())),
            }
        }
        (row.risk_mean, row.risk_std) = mean_std(&row.risks);
        rows.push(row);
    }
    let points: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.risk_mean > 0.0)
        .map(|r| (r.n as f64, r.risk_mean))
        .collect();
    let slope = rate_slope(&points).ok();
    Ok((
        SweepReport {
            kind: cfg.kind,
            rows,
            slope,
        },
        heatmaps,
    ))
}

fn run_selection_runs(cfg: &ExperimentConfig, truth: &MatrixFunctionSpec<f64>) -> Result<Vec<SelectionRun>> {
    let mut runs = Vec::new();
    for &n in &cfg.n {
        for &seed in &cfg.seeds {
            let data_seed = ExperimentConfig::data_seed(seed, n);
            let data = generate_dataset(truth, n, cfg.noise, data_seed)?;
            let sel = SelectionConfig {
                split_seed: data_seed.wrapping_add(1),
                admm: cfg.solver.clone(),
                ..cfg.selection.clone()
            };
            let report = run_selection_pipeline(&data, &sel, Some(truth))?;
            runs.push(SelectionRun { n, seed, report });
        }
    }
    Ok(runs)
}

/// Writes the reference-free summary of selection runs:
/// `n,seed,selected_h,selected_ell,selected_risk,best_h,best_risk,ratio`.
pub fn write_selection_summary<W: Write>(runs: &[SelectionRun], mut w: W) -> Result<()> {
    writeln!(w, "n,seed,selected_h,selected_ell,selected_risk,best_h,best_risk,ratio")?;
    for run in runs {
        let sel = run.report.selected_candidate();
        let sel_risk = sel.integrated_risk.unwrap_or(f64::NAN);
        let (best_h, best_risk) = match run.report.oracle() {
            Some(i) => {
                let c = &run.report.candidates[i];
                (c.spec.h, c.integrated_risk.unwrap_or(f64::NAN))
            }
            None => (f64::NAN, f64::NAN),
        };
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            run.n,
            run.seed,
            sel.spec.h,
            sel.spec.ell,
            sel_risk,
            best_h,
            best_risk,
            sel_risk / best_risk
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct Manifest<'a> {
    version: &'static str,
    kind: &'static str,
    seeds: &'a [u64],
    n: &'a [usize],
    config: &'a ExperimentConfig,
}

fn write_outputs(cfg: &ExperimentConfig, outcome: &ExperimentOutcome, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        kind: cfg.kind.as_str(),
        seeds: &cfg.seeds,
        n: &cfg.n,
        config: cfg,
    };
    fs::write(
        dir.join("manifest.toml"),
        toml::to_string(&manifest).map_err(|e| Error::Config(e.to_string()))?,
    )?;
    match outcome {
        ExperimentOutcome::Sweep(report) => {
            report.write_csv(fs::File::create(dir.join("sweep.csv"))?)?;
            report.write_detail_csv(fs::File::create(dir.join("sweep_detail.csv"))?)?;
            let errors: Vec<&String> = report.rows.iter().flat_map(|r| &r.errors).collect();
            if !errors.is_empty() {
                let mut f = fs::File::create(dir.join("errors.txt"))?;
                for e in errors {
                    writeln!(f, "{e}")?;
                }
            }
            if let Some((slope, se)) = report.slope {
                fs::write(dir.join("slope.txt"), format!("slope {slope}\nstderr {se}\n"))?;
            }
        }
        ExperimentOutcome::Selection(runs) => {
            for run in runs {
                let path = dir.join(format!("selection_n{}_seed{}.csv", run.n, run.seed));
                run.report.write_csv(fs::File::create(path)?)?;
            }
            write_selection_summary(runs, fs::File::create(dir.join("selection_summary.csv"))?)?;
        }
    }
    Ok(())
}

/// Writes `truth.txt`/`truth.png` for `A(t0)` and `estimate_n{n}.txt`/`.png`
/// for every estimate. Images share one color scale set by the truth.
pub fn emit_heatmap_series(
    truth: &MatrixFunctionSpec<f64>,
    t0: f64,
    estimates: &[(usize, HermitianMatrix<f64>)],
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    if estimates.is_empty() {
        return Err(Error::param("estimates", "nothing to draw"));
    }
    fs::create_dir_all(dir)?;
    let a0 = evaluate_truth(truth, t0)?;
    let scale = max_abs_entry(&a0).max(f64::MIN_POSITIVE);
    let mut written = Vec::new();
    let mut emit = |stem: String, mat: &HermitianMatrix<f64>| -> Result<()> {
        let txt = dir.join(format!("{stem}.txt"));
        mat.write_text(fs::File::create(&txt)?)?;
        let png = dir.join(format!("{stem}.png"));
        render_heatmap(mat, scale)
            .save(&png)
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        written.push(txt);
        written.push(png);
        Ok(())
    };
    emit("truth".into(), &a0)?;
    for (n, est) in estimates {
        emit(format!("estimate_n{n}"), est)?;
    }
    Ok(written)
}

fn max_abs_entry(a: &HermitianMatrix<f64>) -> f64 {
    let m = a.dim();
    (0..m)
        .flat_map(|r| (0..m).map(move |c| (r, c)))
        .map(|(r, c)| a.get(r, c).re.abs())
        .fold(0.0, f64::max)
}

const CELL: u32 = 12;

/// Real parts on a blue-white-red scale, clipped at `±scale`.
fn render_heatmap(a: &HermitianMatrix<f64>, scale: f64) -> image::RgbImage {
    let m = a.dim() as u32;
    image::RgbImage::from_fn(m * CELL, m * CELL, |x, y| {
        let v = (a.get((y / CELL) as usize, (x / CELL) as usize).re / scale).clamp(-1.0, 1.0);
        let fade = (255.0 * (1.0 - v.abs())) as u8;
        if v >= 0.0 {
            image::Rgb([255, fade, fade])
        } else {
            image::Rgb([fade, fade, 255])
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(kind: ExperimentKind) -> ExperimentConfig {
        ExperimentConfig {
            kind,
            n: vec![1000, 2000, 4000],
            seeds: vec![3],
            truth: TruthConfig {
                m: 4,
                seed: 5,
                ..TruthConfig::default()
            },
            ..ExperimentConfig::default()
        }
    }

    fn sweep(cfg: &ExperimentConfig) -> SweepReport {
        match run_experiment(cfg).unwrap() {
            ExperimentOutcome::Sweep(r) => r,
            other => panic!("expected a sweep, got {other:?}"),
        }
    }

    #[test]
    fn slope_of_power_laws() {
        let rows: Vec<(f64, f64)> = [1e3f64, 4e3, 1.6e4, 6.4e4].iter().map(|&n| (n, 2.5 * n.powf(-0.75))).collect();
        let (s, se) = rate_slope(&rows).unwrap();
        assert!((s + 0.75).abs() < 1e-10);
        assert!(se < 1e-10);
        let flat: Vec<(f64, f64)> = [10.0, 20.0, 40.0].iter().map(|&n| (n, 0.3)).collect();
        assert!(rate_slope(&flat).unwrap().0.abs() < 1e-12);
        assert!(rate_slope(&[(10.0, 1.0), (20.0, 0.5)]).is_err());
        assert!(rate_slope(&[(10.0, 1.0), (20.0, 0.0), (40.0, 0.1)]).is_err());
    }

    #[test]
    fn noiseless_constant_single_fit_is_exact() {
        let cfg = ExperimentConfig {
            kind: ExperimentKind::SingleFit,
            n: vec![4000],
            truth: TruthConfig {
                model: TruthModel::Constant,
                m: 4,
                rank: 1,
                seed: 1,
                ..TruthConfig::default()
            },
            noise: Noise::Uniform { level: 0.0 },
            estimator: EstimatorConfig {
                degree: 0,
                h: Some(0.5),
                epsilon: Some(0.0),
                ..EstimatorConfig::default()
            },
            solver: AdmmSettings {
                tolerance: 1e-26,
                max_iterations: 20_000,
                ..AdmmSettings::default()
            },
            ..ExperimentConfig::default()
        };
        let report = sweep(&cfg);
        assert_eq!(report.rows.len(), 1);
        assert!(report.rows[0].risk_mean < 1e-8, "{}", report.rows[0].risk_mean);
    }

    #[test]
    fn repeated_seed_gives_zero_spread() {
        let mut cfg = small(ExperimentKind::PointwiseSweep);
        let one = sweep(&cfg);
        cfg.seeds = vec![3, 3, 3];
        let three = sweep(&cfg);
        for (a, b) in one.rows.iter().zip(&three.rows) {
            assert_eq!(a.risk_mean, b.risk_mean);
            assert_eq!(b.risk_std, 0.0);
        }
        assert_eq!(one.rows.len(), cfg.n.len());
    }

    #[test]
    fn sweeps_run_for_every_kind() {
        for kind in [ExperimentKind::IntegratedSweep, ExperimentKind::SupnormSweep] {
            let r = sweep(&small(kind));
            assert_eq!(r.rows.len(), 3);
            assert!(r.rows.iter().all(|row| row.errors.is_empty() && row.risk_mean > 0.0));
            assert!(r.slope.is_some());
            assert!(r.rows.iter().all(|row| row.upper_rate > row.lower_rate));
        }
    }

    #[test]
    fn config_validation_names_fields() {
        let mut cfg = small(ExperimentKind::PointwiseSweep);
        cfg.n = vec![4000, 2000];
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("strictly increasing"), "{err}");
        cfg.n = vec![2000];
        cfg.constants.c1 = 0.0;
        assert!(cfg.validate().unwrap_err().to_string().contains("constants.c1"));
        assert!(ExperimentConfig::from_toml("kind = \"single_fit\"\nbogus = 1\n").is_err());
        let mut sel = small(ExperimentKind::ModelSelection);
        sel.n = vec![1001];
        assert!(sel.validate().is_err());
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = small(ExperimentKind::IntegratedSweep);
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn example_config_parses() {
        let text = include_str!("../../../configs/example.toml");
        ExperimentConfig::from_toml(text).unwrap();
    }

    #[test]
    fn sweep_csv_is_stable() {
        let report = SweepReport {
            kind: ExperimentKind::PointwiseSweep,
            rows: vec![SweepRow {
                n: 2000,
                risk_mean: 0.125,
                risk_std: 0.5,
                upper_rate: 0.25,
                lower_rate: 0.0625,
                risks: vec![0.125],
                bandwidths: vec![0.2],
                epsilons: vec![0.01],
                errors: vec![],
            }],
            slope: None,
        };
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "n,risk_mean,risk_std,upper_rate,lower_rate\n2000,0.125,0.5,0.25,0.0625\n"
        );
    }

    #[test]
    fn outputs_and_manifest_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(ExperimentKind::PointwiseSweep);
        cfg.output_dir = Some(dir.path().join("run"));
        cfg.plots = true;
        run_experiment(&cfg).unwrap();
        let run = dir.path().join("run");
        let sweep_csv = fs::read_to_string(run.join("sweep.csv")).unwrap();
        assert_eq!(sweep_csv.lines().count(), 4);
        let manifest: toml::Value = toml::from_str(&fs::read_to_string(run.join("manifest.toml")).unwrap()).unwrap();
        assert_eq!(manifest["kind"].as_str(), Some("pointwise_sweep"));
        let echoed: ExperimentConfig = manifest["config"].clone().try_into().unwrap();
        assert_eq!(echoed, cfg);
        let heat = run.join("heatmaps");
        let count = |ext: &str| {
            fs::read_dir(&heat)
                .unwrap()
                .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == ext))
                .count()
        };
        assert_eq!(count("txt"), cfg.n.len() + 1);
        assert_eq!(count("png"), cfg.n.len() + 1);
    }

    #[test]
    fn heatmap_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let truth = TruthConfig {
            m: 5,
            seed: 2,
            ..TruthConfig::default()
        }
        .build()
        .unwrap();
        let est = evaluate_truth(&truth, 0.3).unwrap().scale(0.7);
        let files = emit_heatmap_series(&truth, 0.5, &[(100, est.clone()), (400, est.clone())], dir.path()).unwrap();
        assert_eq!(files.len(), 6);
        let t = HermitianMatrix::<f64>::from_text(&fs::read_to_string(dir.path().join("truth.txt")).unwrap()).unwrap();
        assert_eq!(t, evaluate_truth(&truth, 0.5).unwrap());
        let back = HermitianMatrix::<f64>::from_text(&fs::read_to_string(dir.path().join("estimate_n400.txt")).unwrap()).unwrap();
        assert_eq!(back, est);
        assert!(emit_heatmap_series(&truth, 0.5, &[], dir.path()).is_err());
    }

    #[test]
    fn selection_runs_report_every_seed() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(ExperimentKind::ModelSelection);
        cfg.n = vec![2000];
        cfg.seeds = vec![1, 2];
        cfg.selection.h_min = 0.1;
        cfg.output_dir = Some(dir.path().to_path_buf());
        let runs = match run_experiment(&cfg).unwrap() {
            ExperimentOutcome::Selection(r) => r,
            other => panic!("expected selection runs, got {other:?}"),
        };
        assert_eq!(runs.len(), 2);
        for run in &runs {
            let crit: Vec<f64> = run.report.candidates.iter().map(|c| c.criterion).collect();
            let best = crit.iter().cloned().fold(f64::INFINITY, f64::min);
            assert_eq!(run.report.selected_candidate().criterion, best);
        }
        let summary = fs::read_to_string(dir.path().join("selection_summary.csv")).unwrap();
        assert_eq!(summary.lines().count(), 3);
        let csv = fs::read_to_string(dir.path().join("selection_n2000_seed1.csv")).unwrap();
        assert!(csv.starts_with("h,ell,epsilon,integrated_risk,criterion,selected\n"));
    }
}
