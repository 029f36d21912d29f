//! Nuclear-norm penalized local polynomial estimator at a single point `t0`,
//! solved by ADMM, plus the bandwidth and penalty formulas that accompany it.
//!
//! The objective over block-diagonal `S = Diag[S_0, ..., S_l]` is
//!
//! ```text
//! (1/nh) Σ_j K(u_j) (Y_j − ⟨Σ_i S_i p_i(u_j), X_j⟩)² + ε ||S||_1,   u_j = (τ_j − t0)/h
//! ```
//!
//! where `n` is the size of the whole dataset. Each `X_j` reads one coordinate of
//! the basis expansion, so the quadratic part splits into `m²` independent
//! `(l+1)`-dimensional problems; the solver works in those coordinates, which are
//! an isometric copy of the Frobenius geometry.

use std::io::Write as _;
use std::path::Path;

use nalgebra::{Cholesky, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basis::OrthoPolyBasis;
use crate::error::{Error, Result};
use crate::linalg::{BlockDiagMatrix, HermitianMatrix};
use crate::sampling::{coords_to_matrix, matrix_to_coords, BasisIndex, Dataset};
use crate::scalar::Real;

/// When the ADMM loop may stop.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopRule {
    /// Both `||ΔS̄||² <= tol` and `||ΔZ||² <= ρ² tol`; guarantees a small primal residual.
    #[default]
    Both,
    /// Either condition suffices.
    Either,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdmmSettings {
    /// Multiplier on the mean diagonal of the per-coordinate normal equations.
    pub rho: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub stop_rule: StopRule,
    /// Keep the objective value after every iteration.
    pub record_objective: bool,
}

impl Default for AdmmSettings {
    fn default() -> Self {
        Self {
            rho: 1.0,
            max_iterations: 2000,
            tolerance: 1e-8,
            stop_rule: StopRule::Both,
            record_objective: false,
        }
    }
}

impl AdmmSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::param("rho", "must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(Error::param("max_iterations", "must be positive"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::param("tolerance", "must be positive"));
        }
        Ok(())
    }
}

/// Everything needed to fit at one point.
#[derive(Clone, Debug)]
pub struct LocalFitConfig<T: Real> {
    pub t0: T,
    pub h: T,
    pub epsilon: T,
    pub basis: OrthoPolyBasis<T>,
    pub admm: AdmmSettings,
    /// `R(T) a`; reported against, not enforced.
    pub entry_bound: Option<T>,
}

impl<T: Real> LocalFitConfig<T> {
    pub fn new(t0: T, h: T, epsilon: T, basis: OrthoPolyBasis<T>) -> Self {
        Self {
            t0,
            h,
            epsilon,
            basis,
            admm: AdmmSettings::default(),
            entry_bound: None,
        }
    }

    pub fn with_admm(mut self, admm: AdmmSettings) -> Self {
        self.admm = admm;
        self
    }

    pub fn with_entry_bound(mut self, bound: T) -> Self {
        self.entry_bound = Some(bound);
        self
    }

    /// Polynomial degree `l`.
    pub fn degree(&self) -> usize {
        self.basis.degree()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t0 >= T::zero() && self.t0 <= T::one()) {
            return Err(Error::param("t0", "must lie in [0, 1]"));
        }
        if !(self.h > T::zero() && self.h <= T::one()) {
            return Err(Error::param("h", "bandwidth must lie in (0, 1]"));
        }
        if !(self.epsilon >= T::zero()) || !self.epsilon.is_finite() {
            return Err(Error::param("epsilon", "penalty must be finite and nonnegative"));
        }
        self.admm.validate()
    }
}

/// Solver report attached to every fit.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub iterations: usize,
    pub converged: bool,
    /// `||S − S̄||₂²` at the last iterate.
    pub primal_residual: f64,
    /// `||S̄^{k+1} − S̄^k||₂²` at the last iterate.
    pub dual_residual: f64,
    /// Objective at the returned `S̄`.
    pub objective: f64,
    /// Effective step size after rescaling.
    pub rho: f64,
    pub window_count: usize,
    /// Largest entry modulus over all returned blocks.
    pub max_abs_entry: f64,
    pub entry_bound_violated: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub objective_history: Vec<f64>,
}

/// Sufficient statistics of the windowed least-squares problem, per basis coordinate.
#[derive(Clone, Debug)]
pub struct LocalProblem<T: Real> {
    m: usize,
    len: usize,
    /// `1 / (n h)`.
    scale: T,
    /// `G_c = Σ w p pᵀ`, row-major `(l+1)²` per coordinate.
    gram: Vec<T>,
    /// `B_c = Σ w y p`.
    cross: Vec<T>,
    /// `Σ w y²` per coordinate.
    y2: Vec<T>,
    window_count: usize,
}

impl<T: Real> LocalProblem<T> {
    pub fn new(data: &Dataset<T>, t0: T, h: T, basis: &OrthoPolyBasis<T>) -> Result<Self> {
        let m = data.m();
        let len = basis.len();
        let coords = m * m;
        let mut gram = vec![T::zero(); coords * len * len];
        let mut cross = vec![T::zero(); coords * len];
        let mut y2 = vec![T::zero(); coords];
        let mut p = vec![T::zero(); len];
        let mut window_count = 0;
        for o in data.window(t0, h) {
            let u = (o.tau - t0) / h;
            let w = basis.weight(u);
            window_count += 1;
            if w == T::zero() {
                continue;
            }
            basis.eval_all(u, &mut p);
            let c = o.x.coord(m);
            let g = &mut gram[c * len * len..(c + 1) * len * len];
            for a in 0..len {
                let wpa = w * p[a];
                for b in 0..len {
                    g[a * len + b] += wpa * p[b];
                }
                cross[c * len + a] += wpa * o.y;
            }
            y2[c] += w * o.y * o.y;
        }
        if window_count == 0 {
            return Err(Error::EmptyWindow {
                t0: t0.as_f64(),
                h: h.as_f64(),
            });
        }
        Ok(Self {
            m,
            len,
            scale: T::one() / (T::from_count(data.len()) * h),
            gram,
            cross,
            y2,
            window_count,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn blocks(&self) -> usize {
        self.len
    }

    pub fn window_count(&self) -> usize {
        self.window_count
    }

    /// Weighted least-squares part of the objective at coordinates `s`.
    fn data_term(&self, s: &[T]) -> T {
        let len = self.len;
        let two = T::lit(2.0);
        let mut total = T::zero();
        for c in 0..self.m * self.m {
            let sc = &s[c * len..(c + 1) * len];
            let g = &self.gram[c * len * len..(c + 1) * len * len];
            let mut quad = T::zero();
            let mut lin = T::zero();
            for a in 0..len {
                let mut row = T::zero();
                for b in 0..len {
                    row += g[a * len + b] * sc[b];
                }
                quad += sc[a] * row;
                lin += self.cross[c * len + a] * sc[a];
            }
            total += quad - two * lin + self.y2[c];
        }
        total * self.scale
    }

    /// Full objective at a block-diagonal candidate.
    pub fn objective(&self, s: &BlockDiagMatrix<T>, epsilon: T) -> Result<T> {
        let coords = self.to_coords(s)?;
        let mut value = self.data_term(&coords);
        if epsilon > T::zero() {
            value += epsilon * s.nuclear_norm()?;
        }
        Ok(value)
    }

    /// Mean diagonal entry of `2 G_c / (nh)` across all coordinates and degrees.
    fn mean_curvature(&self) -> T {
        let len = self.len;
        let mut sum = T::zero();
        for c in 0..self.m * self.m {
            for a in 0..len {
                sum += self.gram[c * len * len + a * len + a];
            }
        }
        T::lit(2.0) * self.scale * sum / T::from_count(self.m * self.m * len)
    }

    /// `(2 G_c/(nh) + ρ I)⁻¹` for every coordinate, row-major.
    fn ridge_inverses(&self, rho: T) -> Vec<T> {
        let len = self.len;
        let two_scale = T::lit(2.0) * self.scale;
        let mut out = Vec::with_capacity(self.gram.len());
        for c in 0..self.m * self.m {
            let g = &self.gram[c * len * len..(c + 1) * len * len];
            let a = DMatrix::from_fn(len, len, |r, k| {
                two_scale * g[r * len + k] + if r == k { rho } else { T::zero() }
            });
            let inv = Cholesky::new(a)
                .expect("ridge system is positive definite when rho > 0")
                .inverse();
            for r in 0..len {
                for k in 0..len {
                    out.push(inv[(r, k)]);
                }
            }
        }
        out
    }

    fn to_coords(&self, s: &BlockDiagMatrix<T>) -> Result<Vec<T>> {
        if s.num_blocks() != self.len || s.block_dim() != self.m {
            return Err(Error::DimensionMismatch {
                expected: self.len * self.m,
                found: s.num_blocks() * s.block_dim(),
            });
        }
        let mut out = vec![T::zero(); self.m * self.m * self.len];
        for (i, b) in s.blocks().iter().enumerate() {
            for (c, v) in matrix_to_coords(b).into_iter().enumerate() {
                out[c * self.len + i] = v;
            }
        }
        Ok(out)
    }

    fn from_coords(&self, s: &[T]) -> BlockDiagMatrix<T> {
        let blocks = (0..self.len)
            .map(|i| self.block_from_coords(s, i))
            .collect();
        BlockDiagMatrix::new(blocks).expect("blocks share one dimension")
    }

    fn block_from_coords(&self, s: &[T], i: usize) -> HermitianMatrix<T> {
        let v: Vec<T> = (0..self.m * self.m).map(|c| s[c * self.len + i]).collect();
        coords_to_matrix(&v, self.m)
    }
}

/// Exact minimizer of the ADMM quadratic subproblem
/// `F(S) + (ρ/2)||S − S̄||₂² + ⟨Z, S − S̄⟩`.
pub fn admm_s_update<T: Real>(
    problem: &LocalProblem<T>,
    s_bar: &BlockDiagMatrix<T>,
    z: &BlockDiagMatrix<T>,
    rho: T,
) -> Result<BlockDiagMatrix<T>> {
    if !(rho > T::zero()) {
        return Err(Error::param("rho", "must be positive"));
    }
    let sb = problem.to_coords(s_bar)?;
    let zc = problem.to_coords(z)?;
    let inv = problem.ridge_inverses(rho);
    let mut out = vec![T::zero(); sb.len()];
    s_update_coords(problem, &inv, rho, &sb, &zc, &mut out);
    Ok(problem.from_coords(&out))
}

fn s_update_coords<T: Real>(
    problem: &LocalProblem<T>,
    inv: &[T],
    rho: T,
    s_bar: &[T],
    z: &[T],
    out: &mut [T],
) {
    let len = problem.len;
    let two_scale = T::lit(2.0) * problem.scale;
    let mut rhs = vec![T::zero(); len];
    for c in 0..problem.m * problem.m {
        for a in 0..len {
            let k = c * len + a;
            rhs[a] = two_scale * problem.cross[k] + rho * s_bar[k] - z[k];
        }
        let ic = &inv[c * len * len..(c + 1) * len * len];
        for a in 0..len {
            let mut v = T::zero();
            for b in 0..len {
                v += ic[a * len + b] * rhs[b];
            }
            out[c * len + a] = v;
        }
    }
}

/// Fitted blocks `Ŝ_0, ..., Ŝ_l` with the configuration that produced them.
#[derive(Clone, Debug)]
pub struct BlockDiagEstimate<T: Real> {
    pub blocks: BlockDiagMatrix<T>,
    pub config: LocalFitConfig<T>,
    pub diagnostics: FitDiagnostics,
}

impl<T: Real> BlockDiagEstimate<T> {
    pub fn m(&self) -> usize {
        self.blocks.block_dim()
    }

    fn local_u(&self, tau: T) -> Option<T> {
        let u = (tau - self.config.t0) / self.config.h;
        (u.abs() <= T::one()).then_some(u)
    }

    /// `Σ_i Ŝ_i p_i((τ − t0)/h)` inside the window, zero outside.
    pub fn evaluate(&self, tau: T) -> HermitianMatrix<T> {
        match self.local_u(tau) {
            Some(u) => self.combine(u),
            None => HermitianMatrix::zeros(self.m()),
        }
    }

    /// `⟨Ŝ(τ), X⟩` without forming the matrix.
    pub fn coordinate(&self, tau: T, idx: BasisIndex) -> T {
        let Some(u) = self.local_u(tau) else {
            return T::zero();
        };
        self.blocks
            .blocks()
            .iter()
            .enumerate()
            .fold(T::zero(), |acc, (i, b)| {
                acc + idx.inner_unchecked(b) * self.config.basis.eval(i, u).unwrap_or_else(|_| T::zero())
            })
    }

    /// `Σ_i Ŝ_i p_i(0)`.
    pub fn point_estimate(&self) -> HermitianMatrix<T> {
        self.combine(T::zero())
    }

    fn combine(&self, u: T) -> HermitianMatrix<T> {
        let mut p = vec![T::zero(); self.config.basis.len()];
        self.config.basis.eval_all(u, &mut p);
        let mut out = HermitianMatrix::zeros(self.m());
        for (b, &pi) in self.blocks.blocks().iter().zip(&p) {
            out.axpy(pi, b).expect("blocks share one dimension");
        }
        out
    }

    /// Writes `<stem>.block<i>.txt` per block and `<stem>.diagnostics.toml`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (i, b) in self.blocks.blocks().iter().enumerate() {
            let f = std::fs::File::create(dir.join(format!("{stem}.block{i}.txt")))?;
            b.write_text(std::io::BufWriter::new(f))?;
        }
        let record = SavedFit {
            t0: self.config.t0.as_f64(),
            h: self.config.h.as_f64(),
            degree: self.config.degree(),
            epsilon: self.config.epsilon.as_f64(),
            family: self.config.basis.family(),
            diagnostics: self.diagnostics.clone(),
        };
        let text = toml::to_string(&record).map_err(|e| Error::Config(e.to_string()))?;
        let mut f = std::fs::File::create(dir.join(format!("{stem}.diagnostics.toml")))?;
        f.write_all(text.as_bytes())?;
        Ok(())
    }
}

#[derive(Serialize)]
struct SavedFit {
    t0: f64,
    h: f64,
    degree: usize,
    epsilon: f64,
    family: crate::basis::PolyFamily,
    diagnostics: FitDiagnostics,
}

/// Runs ADMM for the penalized local polynomial problem at `config.t0`.
///
/// A fit that hits `max_iterations` is still returned, with
/// `diagnostics.converged == false`.
pub fn fit_pointwise<T: Real>(data: &Dataset<T>, config: &LocalFitConfig<T>) -> Result<BlockDiagEstimate<T>> {
    config.validate()?;
    let problem = LocalProblem::new(data, config.t0, config.h, &config.basis)?;
    fit_problem(&problem, config)
}

/// ADMM on precomputed statistics.
pub fn fit_problem<T: Real>(problem: &LocalProblem<T>, config: &LocalFitConfig<T>) -> Result<BlockDiagEstimate<T>> {
    let settings = &config.admm;
    let len = problem.len;
    let m = problem.m;
    let size = m * m * len;
    let base = T::lit(settings.rho);
    let curvature = problem.mean_curvature();
    let rho = if curvature > T::zero() { base * curvature } else { base };
    let inv = problem.ridge_inverses(rho);
    let tol = T::lit(settings.tolerance);
    let eps = config.epsilon;
    let threshold = eps / rho;

    let mut s = vec![T::zero(); size];
    let mut s_bar = vec![T::zero(); size];
    let mut z = vec![T::zero(); size];
    let mut next_bar = vec![T::zero(); size];
    let mut nuclear = vec![T::zero(); len];
    let mut history = Vec::new();
    let mut diag = FitDiagnostics {
        rho: rho.as_f64(),
        window_count: problem.window_count,
        ..FitDiagnostics::default()
    };

    for iter in 1..=settings.max_iterations {
        s_update_coords(problem, &inv, rho, &s_bar, &z, &mut s);

        // S̄ = prox_{ε/ρ}(S + Z/ρ), block by block.
        for k in 0..size {
            next_bar[k] = s[k] + z[k] / rho;
        }
        if eps > T::zero() {
            for (i, nuc) in nuclear.iter_mut().enumerate() {
                let v = problem.block_from_coords(&next_bar, i);
                let (shrunk, norm) = v.soft_threshold_with_nuclear(threshold)?;
                *nuc = norm;
                for (c, val) in matrix_to_coords(&shrunk).into_iter().enumerate() {
                    next_bar[c * len + i] = val;
                }
            }
        }

        let mut d_bar = T::zero();
        let mut primal = T::zero();
        for k in 0..size {
            let r = s[k] - next_bar[k];
            primal += r * r;
            let d = next_bar[k] - s_bar[k];
            d_bar += d * d;
            z[k] += rho * r;
        }
        std::mem::swap(&mut s_bar, &mut next_bar);

        diag.iterations = iter;
        diag.primal_residual = primal.as_f64();
        diag.dual_residual = d_bar.as_f64();
        if settings.record_objective {
            let penalty = nuclear.iter().fold(T::zero(), |a, &b| a + b);
            history.push((problem.data_term(&s_bar) + eps * penalty).as_f64());
        }

        let bar_small = d_bar <= tol;
        // ||Z^{k+1} − Z^k||² = ρ² ||S − S̄||².
        let z_small = primal <= tol;
        let stop = match settings.stop_rule {
            StopRule::Both => bar_small && z_small,
            StopRule::Either => bar_small || z_small,
        };
        if stop {
            diag.converged = true;
            break;
        }
    }

    let blocks = problem.from_coords(&s_bar);
    let penalty = if eps > T::zero() { blocks.nuclear_norm()? } else { T::zero() };
    diag.objective = (problem.data_term(&s_bar) + eps * penalty).as_f64();
    diag.objective_history = history;
    let max_abs = blocks
        .blocks()
        .iter()
        .flat_map(|b| b.as_dense().iter().map(|z| (z.re * z.re + z.im * z.im).sqrt().as_f64()).collect::<Vec<_>>())
        .fold(0.0, f64::max);
    diag.max_abs_entry = max_abs;
    diag.entry_bound_violated = config.entry_bound.is_some_and(|b| max_abs > b.as_f64());
    Ok(BlockDiagEstimate {
        blocks,
        config: config.clone(),
        diagnostics: diag,
    })
}

pub fn evaluate_local<T: Real>(est: &BlockDiagEstimate<T>, tau: T) -> HermitianMatrix<T> {
    est.evaluate(tau)
}

pub fn point_estimate<T: Real>(est: &BlockDiagEstimate<T>) -> HermitianMatrix<T> {
    est.point_estimate()
}

/// Inputs of the pointwise-optimal bandwidth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandwidthInputs {
    pub m: usize,
    pub r: usize,
    pub n: usize,
    pub ell: usize,
    pub beta: f64,
    pub holder_l: f64,
    pub a: f64,
    pub phi: f64,
    pub r_t: f64,
    pub c1: f64,
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be positive and finite, got {v}")))
    }
}

/// `C1 (max(l,1)³ (l!)² Φ² R(T)² a² m r log n / (L² n))^{1/(2β+1)}`, capped at 1/2.
pub fn optimal_bandwidth(p: &BandwidthInputs) -> Result<f64> {
    if p.n < 2 {
        return Err(Error::param("n", "need at least two observations"));
    }
    positive("m", p.m as f64)?;
    positive("r", p.r as f64)?;
    for (name, v) in [
        ("beta", p.beta),
        ("L", p.holder_l),
        ("a", p.a),
        ("phi", p.phi),
        ("r_t", p.r_t),
        ("c1", p.c1),
    ] {
        positive(name, v)?;
    }
    let l3 = (p.ell.max(1) as f64).powi(3);
    let n = p.n as f64;
    let core = l3 * factorial(p.ell).powi(2) * (p.phi * p.r_t * p.a).powi(2) * (p.m * p.r) as f64 * n.ln()
        / (p.holder_l.powi(2) * n);
    Ok((p.c1 * core.powf(1.0 / (2.0 * p.beta + 1.0))).min(0.5))
}

/// Inputs of the penalty level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltyInputs {
    pub m: usize,
    pub n: usize,
    pub h: f64,
    pub ell: usize,
    pub a: f64,
    pub phi: f64,
    pub r_t: f64,
    pub d: f64,
}

/// `D (l+1) R(T) Φ a max(√(log 2m / (n m h)), log(2m) Φ / (n h))`.
pub fn penalty_epsilon(p: &PenaltyInputs) -> Result<f64> {
    positive("h", p.h)?;
    positive("n", p.n as f64)?;
    positive("m", p.m as f64)?;
    for (name, v) in [("a", p.a), ("phi", p.phi), ("r_t", p.r_t)] {
        positive(name, v)?;
    }
    if !(p.d >= 0.0) {
        return Err(Error::param("d", "must be nonnegative"));
    }
    let (m, n) = (p.m as f64, p.n as f64);
    let log2m = (2.0 * m).ln();
    let branch = (log2m / (n * m * p.h)).sqrt().max(log2m * p.phi / (n * p.h));
    Ok(p.d * (p.ell as f64 + 1.0) * p.r_t * p.phi * p.a * branch)
}

/// Monte-Carlo penalty calibration result.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McPenalty {
    pub epsilon: f64,
    /// Estimate of `E||Ξ||`.
    pub mean_norm: f64,
    /// Standard error of `mean_norm`.
    pub std_error: f64,
    pub trials: usize,
}

/// Estimates `E||Ξ||` for `Ξ = n⁻¹ Σ_j ε_j X̃_j` with Rademacher `ε_j`, holding the
/// design fixed, and returns `ε = C (l+1) R(T) Φ a / √h · E||Ξ||`.
pub fn calibrate_epsilon_mc<T: Real>(
    data: &Dataset<T>,
    config: &LocalFitConfig<T>,
    trials: usize,
    constant: f64,
    seed: u64,
) -> Result<McPenalty> {
    if trials < 10 {
        return Err(Error::param("trials", "need at least 10 Monte-Carlo trials"));
    }
    config.validate()?;
    let m = data.m();
    let basis = &config.basis;
    let len = basis.len();
    let (t0, h) = (config.t0, config.h);
    // Per windowed observation: coordinate and √(K/h) p_i(u).
    let mut design: Vec<(usize, Vec<T>)> = Vec::new();
    let mut p = vec![T::zero(); len];
    for o in data.window(t0, h) {
        let u = (o.tau - t0) / h;
        let w = (basis.weight(u) / h).sqrt();
        basis.eval_all(u, &mut p);
        design.push((o.x.coord(m), p.iter().map(|&v| v * w).collect()));
    }
    if design.is_empty() {
        return Err(Error::EmptyWindow {
            t0: t0.as_f64(),
            h: h.as_f64(),
        });
    }
    let n = T::from_count(data.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords = vec![vec![T::zero(); m * m]; len];
    let mut norms = Vec::with_capacity(trials);
    for _ in 0..trials {
        coords.iter_mut().for_each(|c| c.iter_mut().for_each(|v| *v = T::zero()));
        for (c, w) in &design {
            let sign = if rng.random::<bool>() { T::one() } else { -T::one() };
            for (i, &wi) in w.iter().enumerate() {
                coords[i][*c] += sign * wi;
            }
        }
        let mut top = 0.0f64;
        for block in &coords {
            let mat = coords_to_matrix(block, m).scale(T::one() / n);
            top = top.max(mat.operator_norm()?.as_f64());
        }
        norms.push(top);
    }
    let k = trials as f64;
    let mean = norms.iter().sum::<f64>() / k;
    let var = norms.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    let r_t = basis.monomial_transform()?.r_t;
    let scale = constant * (config.degree() as f64 + 1.0) * r_t * basis.phi().as_f64()
        * data.response_bound().as_f64()
        / h.as_f64().sqrt();
    Ok(McPenalty {
        epsilon: scale * mean,
        mean_norm: mean,
        std_error: (var / k).sqrt(),
        trials,
    })
}
