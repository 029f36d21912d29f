//! Data-driven choice of bandwidth and degree: a geometric bandwidth grid,
//! candidate enumeration, a random train/test split, and penalized hold-out
//! selection.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{OrthoPolyBasis, PolyFamily};
use crate::error::{Error, Result};
use crate::global::{fit_global, integrated_l2_risk, tile_count, GlobalEstimate, GlobalFitConfig, DEFAULT_GRID_POINTS};
use crate::local::{penalty_epsilon, AdmmSettings, PenaltyInputs};
use crate::sampling::{Dataset, MatrixFunctionSpec};
use crate::scalar::Real;

/// Decreasing bandwidths `h_0 = h_max > h_1 > ... >= h_min` with
/// `h_{k+1} = h_k / (1 + α(h_k))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LepskiiGrid {
    pub h_max: f64,
    pub h_min: f64,
    pub values: Vec<f64>,
}

impl LepskiiGrid {
    pub fn new(h_max: f64, h_min: f64) -> Result<Self> {
        if !(h_min > 0.0 && h_min <= h_max && h_max <= 1.0) {
            return Err(Error::param("h_min/h_max", "need 0 < h_min <= h_max <= 1"));
        }
        let mut values = vec![h_max];
        loop {
            let h = *values.last().expect("nonempty");
            let next = h / (1.0 + grid_alpha(h_max, h));
            if next < h_min || next >= h {
                break;
            }
            values.push(next);
        }
        Ok(Self { h_max, h_min, values })
    }

    /// `d(h) = √(max(1, 2 log(h_max / h)))`.
    pub fn d(&self, h: f64) -> f64 {
        grid_d(self.h_max, h)
    }

    /// `α(h) = 1 / √d(h)`.
    pub fn alpha(&self, h: f64) -> f64 {
        grid_alpha(self.h_max, h)
    }

    /// `d_n = √(2 log(h_max / h_min))`.
    pub fn d_n(&self) -> f64 {
        (2.0 * (self.h_max / self.h_min).ln()).sqrt()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn grid_d(h_max: f64, h: f64) -> f64 {
    (2.0 * (h_max / h).ln()).max(1.0).sqrt()
}

fn grid_alpha(h_max: f64, h: f64) -> f64 {
    1.0 / grid_d(h_max, h).sqrt()
}

pub fn lepskii_grid(h_max: f64, h_min: f64) -> Result<LepskiiGrid> {
    LepskiiGrid::new(h_max, h_min)
}

/// Inputs for the default bandwidth range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HRangeInputs {
    pub m: usize,
    pub r: usize,
    pub n: usize,
    /// `[β_*, β^*]`, if known.
    pub beta_range: Option<(f64, f64)>,
    /// `[L_*, L^*]`, if known.
    pub l_range: Option<(f64, f64)>,
    pub a: f64,
    pub phi: f64,
    pub r_t: f64,
    pub c1: f64,
}

/// `(h_min, h_max)` from the smoothness ranges, or `(n^{-1/2}, 1)` without them.
pub fn default_h_range(p: &HRangeInputs) -> Result<(f64, f64)> {
    if p.n < 2 {
        return Err(Error::param("n", "need at least two observations"));
    }
    let (Some((b_lo, b_hi)), Some((l_lo, l_hi))) = (p.beta_range, p.l_range) else {
        return Ok(((p.n as f64).powf(-0.5), 1.0));
    };
    if !(b_lo > 0.0 && b_lo <= b_hi) {
        return Err(Error::param("beta_range", "need 0 < beta_lo <= beta_hi"));
    }
    if !(l_lo > 0.0 && l_lo <= l_hi) {
        return Err(Error::param("l_range", "need 0 < L_lo <= L_hi"));
    }
    let n = p.n as f64;
    let term = |beta: f64, holder_l: f64| {
        let ell = beta.floor() as usize;
        let fact: f64 = (1..=ell).map(|v| v as f64).product();
        let l3 = (ell.max(1) as f64).powi(3);
        let core = l3 * (fact * p.phi * p.r_t * p.a).powi(2) * (p.m * p.r) as f64 * n.ln() / (holder_l.powi(2) * n);
        (p.c1 * core.powf(1.0 / (2.0 * beta + 1.0))).clamp(f64::MIN_POSITIVE, 1.0)
    };
    let h_max = term(b_hi, l_lo);
    let h_min = term(b_lo, l_hi);
    if h_min > h_max {
        return Err(Error::param("h range", format!("formula gives h_min {h_min} > h_max {h_max}")));
    }
    Ok((h_min, h_max))
}

/// `{⌊β_*⌋, ..., ⌊β^*⌋}`.
pub fn degree_candidates(beta_lo: f64, beta_hi: f64) -> Result<Vec<usize>> {
    if !(beta_lo > 0.0 && beta_lo <= beta_hi) {
        return Err(Error::param("beta range", "need 0 < beta_lo <= beta_hi"));
    }
    Ok((beta_lo.floor() as usize..=beta_hi.floor() as usize).collect())
}

/// `π_k = k m r`.
pub fn default_penalty(k: usize, m: usize, r: usize) -> f64 {
    (k * m * r) as f64
}

/// Splits a dataset of even size into two random halves of equal size.
///
/// Each half keeps the original relative order of its observations.
pub fn split_dataset<T: Real>(data: &Dataset<T>, seed: u64) -> Result<(Dataset<T>, Dataset<T>)> {
    let total = data.len();
    if total == 0 || total % 2 == 1 {
        return Err(Error::param("dataset", format!("need a positive even size, got {total}")));
    }
    let mut idx: Vec<usize> = (0..total).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (a, b) = idx.split_at_mut(total / 2);
    a.sort_unstable();
    b.sort_unstable();
    Ok((
        data.subset(a, format!("{} [train]", data.description()))?,
        data.subset(b, format!("{} [test]", data.description()))?,
    ))
}

/// One `(h, l, ε)` candidate with its index and penalty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateSpec {
    /// One-based rank in the preference order.
    pub index: usize,
    pub h: f64,
    pub ell: usize,
    pub epsilon: f64,
    /// `π_k`.
    pub penalty: f64,
}

/// Preference order: larger `h` first, then smaller `l`.
pub fn order_candidates(specs: &mut [CandidateSpec]) {
    specs.sort_by(|a, b| {
        b.h.partial_cmp(&a.h)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.ell.cmp(&b.ell))
    });
}

/// Outcome for one fitted candidate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateResult {
    pub spec: CandidateSpec,
    /// Mean squared hold-out error.
    pub test_loss: f64,
    /// `test_loss + π_k / n`.
    pub criterion: f64,
    pub integrated_risk: Option<f64>,
    pub tiles: usize,
    pub converged: bool,
    pub total_iterations: usize,
}

/// A candidate that could not be fitted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcludedCandidate {
    pub spec: CandidateSpec,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    /// Fitted candidates in preference order.
    pub candidates: Vec<CandidateResult>,
    pub excluded: Vec<ExcludedCandidate>,
    /// Position of the selected candidate in `candidates`.
    pub selected: usize,
    pub n_test: usize,
}

impl SelectionReport {
    pub fn selected_candidate(&self) -> &CandidateResult {
        &self.candidates[self.selected]
    }

    /// Position of the candidate with the smallest integrated risk, if known.
    pub fn oracle(&self) -> Option<usize> {
        argmin(
            &self
                .candidates
                .iter()
                .map(|c| c.integrated_risk)
                .collect::<Option<Vec<f64>>>()?,
        )
    }

    /// `h,ell,epsilon[,integrated_risk],criterion,selected`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let with_risk = self.candidates.iter().all(|c| c.integrated_risk.is_some());
        if with_risk {
            writeln!(w, "h,ell,epsilon,integrated_risk,criterion,selected")?;
        } else {
            writeln!(w, "h,ell,epsilon,criterion,selected")?;
        }
        for (i, c) in self.candidates.iter().enumerate() {
            let sel = u8::from(i == self.selected);
            match c.integrated_risk.filter(|_| with_risk) {
                Some(r) => writeln!(w, "{},{},{},{},{},{}", c.spec.h, c.spec.ell, c.spec.epsilon, r, c.criterion, sel)?,
                None => writeln!(w, "{},{},{},{},{}", c.spec.h, c.spec.ell, c.spec.epsilon, c.criterion, sel)?,
            }
        }
        Ok(())
    }
}

/// Index of the smallest value; ties go to the smaller index.
pub fn argmin(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some(b) if !(v < values[b]) => {}
            _ if v.is_nan() => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Mean squared hold-out error `n⁻¹ Σ (Y_j − ⟨Â(τ_j), X_j⟩)²`.
pub fn test_loss<T: Real>(est: &GlobalEstimate<T>, test: &Dataset<T>) -> f64 {
    let sum: f64 = test
        .observations()
        .iter()
        .map(|o| (o.y - est.coordinate(o.tau, o.x)).as_f64().powi(2))
        .sum();
    sum / test.len() as f64
}

/// Scores fitted candidates on `test` and picks the minimizer of
/// `loss + π_k / n`. Candidates are put in preference order first, so the
/// result does not depend on the order they are passed in.
pub fn select<T: Real>(
    candidates: Vec<(CandidateSpec, GlobalEstimate<T>)>,
    test: &Dataset<T>,
) -> Result<SelectionReport> {
    select_with_truth(candidates, test, None)
}

fn select_with_truth<T: Real>(
    mut candidates: Vec<(CandidateSpec, GlobalEstimate<T>)>,
    test: &Dataset<T>,
    truth: Option<&MatrixFunctionSpec<T>>,
) -> Result<SelectionReport> {
    if candidates.is_empty() {
        return Err(Error::param("candidates", "nothing to select from"));
    }
    if test.is_empty() {
        return Err(Error::param("test", "hold-out set is empty"));
    }
    candidates.sort_by(|(a, _), (b, _)| {
        b.h.partial_cmp(&a.h)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.ell.cmp(&b.ell))
    });
    let n = test.len() as f64;
    let results = candidates
        .par_iter()
        .map(|(spec, est)| {
            let loss = test_loss(est, test);
            let integrated_risk = truth
                .map(|t| integrated_l2_risk(est, t, DEFAULT_GRID_POINTS))
                .transpose()?;
            Ok(CandidateResult {
                spec: spec.clone(),
                test_loss: loss,
                criterion: loss + spec.penalty / n,
                integrated_risk,
                tiles: est.tiles.len(),
                converged: est.converged(),
                total_iterations: est.tiles.iter().map(|t| t.diagnostics.iterations).sum(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let criteria: Vec<f64> = results.iter().map(|r| r.criterion).collect();
    let selected = argmin(&criteria).ok_or_else(|| Error::param("criterion", "all criteria are NaN"))?;
    Ok(SelectionReport {
        candidates: results,
        excluded: Vec::new(),
        selected,
        n_test: test.len(),
    })
}

/// How each candidate's penalty level is set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PenaltyRule {
    /// The penalty formula with constant `d`, evaluated at the candidate's
    /// effective tile half-width and degree.
    Formula { d: f64 },
    Fixed { epsilon: f64 },
}

impl Default for PenaltyRule {
    fn default() -> Self {
        PenaltyRule::Formula { d: 1.0 }
    }
}

/// Settings of the full selection procedure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    pub h_max: f64,
    pub h_min: f64,
    pub degrees: Vec<usize>,
    pub family: PolyFamily,
    /// Rank bound used in `π_k = k m r`.
    pub rank: usize,
    pub penalty: PenaltyRule,
    pub admm: AdmmSettings,
    pub split_seed: u64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            h_max: 1.0,
            h_min: 0.01,
            degrees: vec![1],
            family: PolyFamily::LegendreBox,
            rank: 2,
            penalty: PenaltyRule::default(),
            admm: AdmmSettings::default(),
            split_seed: 0,
        }
    }
}

/// Builds the ordered candidate list for a training set of size `n_train`.
pub fn build_candidates(
    cfg: &SelectionConfig,
    m: usize,
    n_train: usize,
    a: f64,
) -> Result<Vec<CandidateSpec>> {
    if cfg.degrees.is_empty() {
        return Err(Error::param("degrees", "need at least one degree"));
    }
    let grid = LepskiiGrid::new(cfg.h_max, cfg.h_min)?;
    let mut specs = Vec::new();
    for &h in &grid.values {
        for &ell in &cfg.degrees {
            let epsilon = match cfg.penalty {
                PenaltyRule::Fixed { epsilon } => epsilon,
                PenaltyRule::Formula { d } => {
                    let basis = OrthoPolyBasis::<f64>::new(cfg.family, ell);
                    let r_t = basis.monomial_transform()?.r_t;
                    penalty_epsilon(&PenaltyInputs {
                        m,
                        n: n_train,
                        h: 1.0 / tile_count(h)? as f64,
                        ell,
                        a,
                        phi: basis.phi(),
                        r_t,
                        d,
                    })?
                }
            };
            specs.push(CandidateSpec {
                index: 0,
                h,
                ell,
                epsilon,
                penalty: 0.0,
            });
        }
    }
    order_candidates(&mut specs);
    for (k, s) in specs.iter_mut().enumerate() {
        s.index = k + 1;
        s.penalty = default_penalty(k + 1, m, cfg.rank);
    }
    Ok(specs)
}

/// Split, fit every candidate on the training half, select on the test half.
///
/// Candidates whose fit fails (for example a tile without observations) are
/// listed in `excluded` rather than aborting the run. When `truth` is given,
/// each candidate's integrated risk is reported as well.
pub fn run_selection_pipeline<T: Real>(
    data: &Dataset<T>,
    cfg: &SelectionConfig,
    truth: Option<&MatrixFunctionSpec<T>>,
) -> Result<SelectionReport> {
    let (train, test) = split_dataset(data, cfg.split_seed)?;
    let specs = build_candidates(cfg, data.m(), train.len(), train.response_bound().as_f64())?;
    let fits: Vec<(CandidateSpec, Result<GlobalEstimate<T>>)> = specs
        .into_par_iter()
        .map(|spec| {
            let basis = OrthoPolyBasis::<T>::new(cfg.family, spec.ell);
            let gcfg = GlobalFitConfig::new(T::lit(spec.h), T::lit(spec.epsilon), basis).with_admm(cfg.admm.clone());
            let est = fit_global(&train, &gcfg);
            (spec, est)
        })
        .collect();
    let mut ok = Vec::new();
    let mut excluded = Vec::new();
    for (spec, est) in fits {
        match est {
            Ok(e) => ok.push((spec, e)),
            Err(e) => excluded.push(ExcludedCandidate {
                spec,
                reason: format!("{}: {e}", e.class()),
            }),
        }
    }
    if ok.is_empty() {
        return Err(Error::param("candidates", "every candidate fit failed"));
    }
    let mut report = select_with_truth(ok, &test, truth)?;
    report.excluded = excluded;
    Ok(report)
}
