//! Global estimators on `[0, 1]`: local fits stitched over a regular tiling,
//! the higher-order-kernel estimator, and the risk functionals used to compare
//! them with the truth.

use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{HigherOrderKernel, OrthoPolyBasis};
use crate::error::{Error, Result};
use crate::linalg::HermitianMatrix;
use crate::local::{fit_pointwise, AdmmSettings, BlockDiagEstimate, LocalFitConfig};
use crate::sampling::{coords_to_matrix, BasisIndex, Dataset, MatrixFunctionSpec};
use crate::scalar::Real;

/// Default number of evaluation points for risk functionals.
pub const DEFAULT_GRID_POINTS: usize = 512;

/// Settings shared by every tile of a global fit.
#[derive(Clone, Debug)]
pub struct GlobalFitConfig<T: Real> {
    /// Requested bandwidth; the tiling rounds it to `1/M`.
    pub h: T,
    pub epsilon: T,
    pub basis: OrthoPolyBasis<T>,
    pub admm: AdmmSettings,
    pub entry_bound: Option<T>,
}

impl<T: Real> GlobalFitConfig<T> {
    pub fn new(h: T, epsilon: T, basis: OrthoPolyBasis<T>) -> Self {
        Self {
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
}

/// Number of grid intervals `M`: `⌈1/h⌉` rounded up to an even number.
pub fn tile_count(h: f64) -> Result<usize> {
    if !(h > 0.0 && h <= 1.0) {
        return Err(Error::param("h", "bandwidth must lie in (0, 1]"));
    }
    // Absorb representation error so that, e.g., h = 1/8 gives exactly 8.
    let raw = (1.0 / h - 1e-9).ceil().max(1.0) as usize;
    Ok(raw + raw % 2)
}

/// Local fits at the odd grid points `(2k − 1)/M`, each responsible for
/// `((2k − 2)/M, 2k/M]`.
#[derive(Clone, Debug)]
pub struct GlobalEstimate<T: Real> {
    pub tiles: Vec<BlockDiagEstimate<T>>,
    /// Grid size `M` (even).
    pub grid: usize,
    /// Tile half-width `1/M`.
    pub half_width: T,
    /// Bandwidth that was requested before rounding.
    pub requested_h: T,
}

impl<T: Real> GlobalEstimate<T> {
    pub fn m(&self) -> usize {
        self.tiles[0].m()
    }

    pub fn centers(&self) -> Vec<T> {
        (1..=self.tiles.len())
            .map(|k| T::from_count(2 * k - 1) / T::from_count(self.grid))
            .collect()
    }

    /// Tile covering `t`, if `t ∈ (0, 1]`.
    pub fn tile_index(&self, t: T) -> Option<usize> {
        if !(t > T::zero() && t <= T::one()) {
            return None;
        }
        // Tile k (zero-based) covers (2k/M, (2k+2)/M]. Positions within rounding
        // error of a boundary are snapped onto it so the half-open rule holds for
        // boundaries that are not exactly representable.
        let raw = t * T::from_count(self.grid) / T::lit(2.0);
        let nearest = raw.round();
        let snap = T::lit(64.0) * T::default_epsilon() * nearest.max(T::one());
        let pos = if (raw - nearest).abs() <= snap { nearest } else { raw.ceil() };
        let k = pos.to_usize().unwrap_or(1).max(1) - 1;
        Some(k.min(self.grid / 2 - 1))
    }

    pub fn evaluate(&self, t: T) -> Result<HermitianMatrix<T>> {
        let k = self.tile_index(t).ok_or(Error::OutOfDomain(t.as_f64()))?;
        Ok(self.tiles[k].evaluate(t))
    }

    /// `⟨Â(t), X⟩`; zero outside `(0, 1]`.
    pub fn coordinate(&self, t: T, idx: BasisIndex) -> T {
        match self.tile_index(t) {
            Some(k) => self.tiles[k].coordinate(t, idx),
            None => T::zero(),
        }
    }

    /// Value of the first tile's polynomial at `t = 0`, used to close the
    /// integration interval.
    fn evaluate_closed(&self, t: T) -> Result<HermitianMatrix<T>> {
        if t == T::zero() {
            Ok(self.tiles[0].evaluate(t))
        } else {
            self.evaluate(t)
        }
    }

    pub fn converged(&self) -> bool {
        self.tiles.iter().all(|t| t.diagnostics.converged)
    }
}

/// Fits every tile (in parallel) and assembles the piecewise estimator.
pub fn fit_global<T: Real>(data: &Dataset<T>, config: &GlobalFitConfig<T>) -> Result<GlobalEstimate<T>> {
    let grid = tile_count(config.h.as_f64())?;
    let half_width = T::one() / T::from_count(grid);
    let tiles = (1..=grid / 2)
        .into_par_iter()
        .map(|k| {
            let center = T::from_count(2 * k - 1) / T::from_count(grid);
            let mut local = LocalFitConfig::new(center, half_width, config.epsilon, config.basis.clone())
                .with_admm(config.admm.clone());
            local.entry_bound = config.entry_bound;
            fit_pointwise(data, &local).map_err(|e| match e {
                Error::EmptyWindow { .. } => Error::EmptyTile {
                    tile: k,
                    center: center.as_f64(),
                },
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GlobalEstimate {
        tiles,
        grid,
        half_width,
        requested_h: config.h,
    })
}

pub fn evaluate_global<T: Real>(est: &GlobalEstimate<T>, t: T) -> Result<HermitianMatrix<T>> {
    est.evaluate(t)
}

/// Settings of the kernel estimator.
#[derive(Clone, Debug)]
pub struct KernelEstimateConfig<T: Real> {
    pub kernel: HigherOrderKernel<T>,
    pub h: T,
    /// Optional singular-value soft-threshold applied to the result.
    pub threshold: Option<T>,
}

impl<T: Real> KernelEstimateConfig<T> {
    pub fn new(kernel: HigherOrderKernel<T>, h: T) -> Result<Self> {
        if !(h > T::zero() && h <= T::lit(0.5)) {
            return Err(Error::param("h", "kernel bandwidth must lie in (0, 0.5]"));
        }
        Ok(Self {
            kernel,
            h,
            threshold: None,
        })
    }
}

/// `Ã(t) = (m² / nh) Σ_j K((τ_j − t)/h) Y_j X_j`.
///
/// An empty window gives the zero matrix. Near the ends of `[0, 1]` (outside
/// `[h, 1 − h]`) the estimate is biased toward zero.
pub fn fit_kernel_estimator<T: Real>(
    data: &Dataset<T>,
    t: T,
    config: &KernelEstimateConfig<T>,
) -> Result<HermitianMatrix<T>> {
    if !(t >= T::zero() && t <= T::one()) {
        return Err(Error::OutOfDomain(t.as_f64()));
    }
    let m = data.m();
    let h = config.h;
    let mut coords = vec![T::zero(); m * m];
    for o in data.window(t, h) {
        let w = config.kernel.eval((o.tau - t) / h);
        coords[o.x.coord(m)] += w * o.y;
    }
    let scale = T::from_count(m * m) / (T::from_count(data.len()) * h);
    coords.iter_mut().for_each(|v| *v *= scale);
    let est = coords_to_matrix(&coords, m);
    match config.threshold {
        Some(th) => est.soft_threshold(th),
        None => Ok(est),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelBandwidthInputs {
    pub m: usize,
    pub n: usize,
    pub ell: usize,
    pub beta: f64,
    pub holder_l: f64,
    pub a: f64,
    pub c_star: f64,
}

/// `c_* (a² (l!)² m log n / (2β L² n))^{1/(2β+1)}`, capped at 1/2.
pub fn kernel_bandwidth(p: &KernelBandwidthInputs) -> Result<f64> {
    if p.n < 2 {
        return Err(Error::param("n", "need at least two observations"));
    }
    if p.m == 0 {
        return Err(Error::param("m", "must be positive"));
    }
    for (name, v) in [
        ("beta", p.beta),
        ("L", p.holder_l),
        ("a", p.a),
        ("c_star", p.c_star),
    ] {
        if !(v > 0.0) {
            return Err(Error::param(name, "must be positive"));
        }
    }
    let fact: f64 = (1..=p.ell).map(|v| v as f64).product();
    let n = p.n as f64;
    let core = p.a.powi(2) * fact.powi(2) * p.m as f64 * n.ln() / (2.0 * p.beta * p.holder_l.powi(2) * n);
    Ok((p.c_star * core.powf(1.0 / (2.0 * p.beta + 1.0))).min(0.5))
}

/// `m⁻² ||Â − A||₂²`.
pub fn pointwise_risk<T: Real>(estimate: &HermitianMatrix<T>, truth: &HermitianMatrix<T>) -> Result<T> {
    let m = T::from_count(truth.dim());
    Ok(estimate.try_sub(truth)?.frobenius_norm_sq() / (m * m))
}

/// Trapezoid value together with the same rule on every other node and the
/// Richardson-extrapolated combination of the two.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskQuadrature {
    pub value: f64,
    pub coarse: f64,
    pub richardson: f64,
}

/// `m⁻² ∫₀¹ ||Â(t) − A(t)||₂² dt` by the trapezoid rule on `grid_points`
/// uniform nodes including both ends.
pub fn integrated_l2_risk<T: Real>(
    est: &GlobalEstimate<T>,
    truth: &MatrixFunctionSpec<T>,
    grid_points: usize,
) -> Result<f64> {
    Ok(integrated_l2_risk_with(|t| est.evaluate_closed(t), truth, grid_points)?.value)
}

/// [`integrated_l2_risk`] for an arbitrary estimator given as a closure.
pub fn integrated_l2_risk_with<T: Real>(
    estimate: impl Fn(T) -> Result<HermitianMatrix<T>>,
    truth: &MatrixFunctionSpec<T>,
    grid_points: usize,
) -> Result<RiskQuadrature> {
    if grid_points < 64 {
        return Err(Error::param("grid_points", "need at least 64 points"));
    }
    let g = grid_points;
    let values = (0..g)
        .map(|i| {
            let t = T::from_count(i) / T::from_count(g - 1);
            Ok(pointwise_risk(&estimate(t)?, &truth.evaluate(t)?)?.as_f64())
        })
        .collect::<Result<Vec<f64>>>()?;
    let trapezoid = |vals: &[f64], step: f64| {
        let inner: f64 = vals[1..vals.len() - 1].iter().sum();
        step * (inner + 0.5 * (vals[0] + vals[vals.len() - 1]))
    };
    let value = trapezoid(&values, 1.0 / (g - 1) as f64);
    let coarse_vals: Vec<f64> = values.iter().copied().step_by(2).collect();
    let coarse = if (g - 1) % 2 == 0 {
        trapezoid(&coarse_vals, 2.0 / (g - 1) as f64)
    } else {
        value
    };
    Ok(RiskQuadrature {
        value,
        coarse,
        richardson: (4.0 * value - coarse) / 3.0,
    })
}

/// `g` uniform points on `[h, 1 − h]`.
pub fn sup_grid(h: f64, g: usize) -> Result<Vec<f64>> {
    if !(h >= 0.0 && h <= 0.5) || g == 0 {
        return Err(Error::param("grid", "need h in [0, 1/2] and at least one point"));
    }
    if g == 1 {
        return Ok(vec![0.5]);
    }
    Ok((0..g)
        .map(|i| h + (1.0 - 2.0 * h) * i as f64 / (g - 1) as f64)
        .collect())
}

/// `max_t m⁻² ||Â(t) − A(t)||²` over the supplied `(t, Â(t))` pairs.
pub fn sup_opnorm_risk<T: Real>(
    estimates: &[(T, HermitianMatrix<T>)],
    truth: &MatrixFunctionSpec<T>,
) -> Result<f64> {
    if estimates.is_empty() {
        return Err(Error::param("estimates", "empty evaluation grid"));
    }
    let m2 = (truth.m * truth.m) as f64;
    estimates.iter().try_fold(0.0f64, |acc, (t, est)| {
        let d = est.try_sub(&truth.evaluate(*t)?)?.operator_norm()?.as_f64();
        Ok(acc.max(d * d / m2))
    })
}

/// Reference rate curves.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateKind {
    PointwiseUpper,
    L2Upper,
    SupUpper,
    PointwiseLower,
    L2Lower,
    SupLower,
}

impl FromStr for RateKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "pointwise_upper" => Self::PointwiseUpper,
            "l2_upper" => Self::L2Upper,
            "sup_upper" => Self::SupUpper,
            "pointwise_lower" => Self::PointwiseLower,
            "l2_lower" => Self::L2Lower,
            "sup_lower" => Self::SupLower,
            other => return Err(Error::param("kind", format!("unknown rate kind `{other}`"))),
        })
    }
}

/// `constant · (x/n)^{2β/(2β+1)}` with `x` depending on the kind:
/// `m r log n`, `m log n`, `m r`, or `max(m, log n)`.
pub fn theoretical_rate(kind: RateKind, m: usize, r: usize, n: usize, beta: f64, constant: f64) -> Result<f64> {
    if m == 0 || r == 0 || n < 2 || !(beta > 0.0) || !(constant > 0.0) {
        return Err(Error::param("rate", "inputs must be positive and n >= 2"));
    }
    let (m, r, nf) = (m as f64, r as f64, n as f64);
    let x = match kind {
        RateKind::PointwiseUpper | RateKind::L2Upper => m * r * nf.ln(),
        RateKind::SupUpper => m * nf.ln(),
        RateKind::PointwiseLower | RateKind::L2Lower => m * r,
        RateKind::SupLower => m.max(nf.ln()),
    };
    Ok(constant * (x / nf).powf(2.0 * beta / (2.0 * beta + 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::PolyFamily;
    use crate::sampling::{generate_dataset, Noise, Observation, TruthParams};
    use approx::assert_abs_diff_eq;
    use nalgebra::Complex;

    type H = HermitianMatrix<f64>;

    #[test]
    fn tiling_arithmetic() {
        assert_eq!(tile_count(0.25).unwrap(), 4);
        assert_eq!(tile_count(0.3).unwrap(), 4);
        assert_eq!(tile_count(1.0).unwrap(), 2);
        assert_eq!(tile_count(0.125).unwrap(), 8);
        assert_eq!(tile_count(0.2).unwrap(), 6);
        assert!(tile_count(0.0).is_err());
    }

    fn full_coverage_data(m: usize, per_cell: usize, value: &H) -> Dataset<f64> {
        let mut obs = Vec::new();
        let total = m * m * per_cell;
        for k in 0..total {
            let tau = (k as f64 + 0.5) / total as f64;
            let x = BasisIndex::from_coord(k % (m * m), m).unwrap();
            obs.push(Observation {
                tau,
                x,
                y: x.inner_unchecked(value),
            });
        }
        Dataset::new(obs, m, 10.0, 0, "grid").unwrap()
    }

    #[test]
    fn four_tiles_layout_and_boundary() {
        let a0 = H::from_real_diagonal(&[0.5, -0.25]);
        let data = full_coverage_data(2, 40, &a0);
        let est = fit_global(&data, &GlobalFitConfig::new(0.25, 0.0, OrthoPolyBasis::new(PolyFamily::LegendreBox, 1)))
            .unwrap();
        assert_eq!(est.grid, 4);
        assert_eq!(est.tiles.len(), 2);
        assert_eq!(est.centers(), vec![0.25, 0.75]);
        assert_eq!(est.tile_index(0.5), Some(0));
        assert_eq!(est.tile_index(0.5000001), Some(1));
        assert_eq!(est.tile_index(1.0), Some(1));
        assert_eq!(est.tile_index(0.0), None);
        assert!(est.evaluate(1.5).is_err());
        assert_eq!(est.evaluate(0.25).unwrap(), est.tiles[0].point_estimate());
    }

    #[test]
    fn tiles_partition_unit_interval() {
        for h in [1.0, 0.5, 0.3, 0.26, 0.1, 0.0853, 0.0121] {
            let grid = tile_count(h).unwrap();
            let tiles = grid / 2;
            let est = GlobalEstimate::<f64> {
                tiles: Vec::new(),
                grid,
                half_width: 1.0 / grid as f64,
                requested_h: h,
            };
            for i in 1..=10_000usize {
                let t = i as f64 / 10_000.0;
                // Exact rational test: 2k/M < i/10⁴ <= (2k+2)/M.
                let covering: Vec<usize> = (0..tiles)
                    .filter(|&k| 2 * k * 10_000 < i * grid && i * grid <= (2 * k + 2) * 10_000)
                    .collect();
                assert_eq!(covering.len(), 1, "h={h} t={t}");
                assert_eq!(est.tile_index(t), Some(covering[0]), "h={h} t={t}");
            }
        }
    }

    #[test]
    fn constant_noiseless_truth_is_recovered() {
        let a0 = H::from_upper_fn(3, |r, c| Complex::new(0.1 * (r + c) as f64, if r == c { 0.0 } else { 0.05 }));
        let data = full_coverage_data(3, 60, &a0);
        let cfg = GlobalFitConfig::new(0.25, 0.0, OrthoPolyBasis::new(PolyFamily::LegendreBox, 1)).with_admm(
            AdmmSettings {
                tolerance: 1e-24,
                max_iterations: 50_000,
                ..AdmmSettings::default()
            },
        );
        let est = fit_global(&data, &cfg).unwrap();
        let truth = MatrixFunctionSpec::constant(a0).unwrap();
        assert!(integrated_l2_risk(&est, &truth, DEFAULT_GRID_POINTS).unwrap() <= 1e-8);
    }

    #[test]
    fn empty_tile_is_reported() {
        let obs = vec![Observation {
            tau: 0.1,
            x: BasisIndex::diagonal(0),
            y: 0.2,
        }];
        let data = Dataset::new(obs, 1, 1.0, 0, "").unwrap();
        let err = fit_global(&data, &GlobalFitConfig::new(0.25, 0.0, OrthoPolyBasis::new(PolyFamily::LegendreBox, 0)))
            .unwrap_err();
        assert!(matches!(err, Error::EmptyTile { tile: 2, .. }), "{err:?}");
    }

    fn kernel0(h: f64) -> KernelEstimateConfig<f64> {
        KernelEstimateConfig::new(HigherOrderKernel::new(0), h).unwrap()
    }

    #[test]
    fn kernel_estimator_single_observation() {
        let (t, y, h, m) = (0.5, 0.8, 0.1, 3);
        let data = Dataset::new(
            vec![Observation {
                tau: t,
                x: BasisIndex::diagonal(0),
                y,
            }],
            m,
            1.0,
            0,
            "",
        )
        .unwrap();
        let est = fit_kernel_estimator(&data, t, &kernel0(h)).unwrap();
        let mut want = H::zeros(m);
        want.set(0, 0, Complex::new((m * m) as f64 / h * 0.5 * y, 0.0));
        assert!(est.try_sub(&want).unwrap().frobenius_norm() < 1e-12);
        assert_eq!(fit_kernel_estimator(&data, 0.2, &kernel0(h)).unwrap(), H::zeros(m));
    }

    #[test]
    fn kernel_estimator_scalar_case() {
        let spec = MatrixFunctionSpec::constant(H::from_real_diagonal(&[0.3])).unwrap();
        let data = generate_dataset(&spec, 100, Noise::Uniform { level: 0.5 }, 1).unwrap();
        let cfg = KernelEstimateConfig::new(HigherOrderKernel::new(2), 0.2).unwrap();
        let t = 0.45;
        let scalar: f64 = data
            .observations()
            .iter()
            .map(|o| cfg.kernel.eval((o.tau - t) / 0.2) * o.y)
            .sum::<f64>()
            / (100.0 * 0.2);
        let est = fit_kernel_estimator(&data, t, &cfg).unwrap();
        assert_abs_diff_eq!(est.get(0, 0).re, scalar, epsilon = 1e-10);
    }

    #[test]
    fn kernel_estimator_is_hermitian_and_linear() {
        let params = TruthParams {
            m: 4,
            seed: 3,
            ..TruthParams::default()
        };
        let spec = MatrixFunctionSpec::<f64>::random_factor(&params).unwrap();
        let data = generate_dataset(&spec, 2000, Noise::default(), 4).unwrap();
        let doubled: Vec<_> = data
            .observations()
            .iter()
            .map(|o| Observation { y: 2.0 * o.y, ..*o })
            .collect();
        let data2 = Dataset::new(doubled, 4, 2.0 * data.response_bound(), 0, "").unwrap();
        let cfg = KernelEstimateConfig::new(HigherOrderKernel::new(1), 0.15).unwrap();
        for t in [0.2, 0.5, 0.8] {
            let a = fit_kernel_estimator(&data, t, &cfg).unwrap();
            let b = fit_kernel_estimator(&data2, t, &cfg).unwrap();
            assert!(a.is_exactly_hermitian());
            assert!(b.try_sub(&a.scale(2.0)).unwrap().frobenius_norm() < 1e-12);
        }
        let mut svt = cfg.clone();
        svt.threshold = Some(0.5);
        let shrunk = fit_kernel_estimator(&data, 0.5, &svt).unwrap();
        assert!(shrunk.is_exactly_hermitian());
        assert!(shrunk.rank().unwrap() <= fit_kernel_estimator(&data, 0.5, &cfg).unwrap().rank().unwrap());
    }

    #[test]
    fn kernel_bandwidth_formula() {
        let p = KernelBandwidthInputs {
            m: 20,
            n: 100_000,
            ell: 1,
            beta: 1.5,
            holder_l: 24.0,
            a: 1.0,
            c_star: 1.0,
        };
        // Independently evaluated with a separate script.
        assert_abs_diff_eq!(kernel_bandwidth(&p).unwrap(), 0.0339756667037552, epsilon = 1e-12);
        let a = kernel_bandwidth(&KernelBandwidthInputs { n: 1_000_000, ..p }).unwrap();
        let b = kernel_bandwidth(&KernelBandwidthInputs { n: 2_000_000, ..p }).unwrap();
        let log_ratio = ((2e6f64).ln() / (1e6f64).ln()).powf(0.25);
        assert_abs_diff_eq!(b / a, 2f64.powf(-0.25) * log_ratio, epsilon = 1e-12);
        let flat = kernel_bandwidth(&KernelBandwidthInputs { beta: 1e9, ..p }).unwrap();
        assert_abs_diff_eq!(flat, 0.5, epsilon = 1e-12);
        assert!(kernel_bandwidth(&KernelBandwidthInputs { a: -1.0, ..p }).is_err());
    }

    #[test]
    fn risk_functionals() {
        let a = H::from_real_diagonal(&[1.0, 2.0]);
        assert_eq!(pointwise_risk(&a, &a).unwrap(), 0.0);
        let b = a.try_add(&H::identity(2)).unwrap();
        assert_abs_diff_eq!(pointwise_risk(&b, &a).unwrap(), 0.5, epsilon = 1e-15);
        let c = a.try_add(&H::identity(2).scale(3.0)).unwrap();
        assert_abs_diff_eq!(pointwise_risk(&c, &a).unwrap(), 9.0 * 0.5, epsilon = 1e-14);
        assert!(pointwise_risk(&H::zeros(3), &a).is_err());

        let params = TruthParams {
            m: 3,
            seed: 9,
            ..TruthParams::default()
        };
        let truth = MatrixFunctionSpec::<f64>::random_factor(&params).unwrap();
        let exact = integrated_l2_risk_with(|t| truth.evaluate(t), &truth, 512).unwrap();
        assert_eq!(exact.value, 0.0);
        let d = H::from_upper_fn(3, |r, c| Complex::new(0.1 * (r + 1) as f64, if r == c { 0.0 } else { 0.2 }));
        let shifted = integrated_l2_risk_with(|t| truth.evaluate(t)?.try_add(&d), &truth, 512).unwrap();
        assert_abs_diff_eq!(shifted.value, d.frobenius_norm_sq() / 9.0, epsilon = 1e-6);

        let wobble = |t: f64| -> Result<H> { Ok(truth.evaluate(t)?.try_add(&d.scale((3.0 * t).sin()))?) };
        let fine = integrated_l2_risk_with(wobble, &truth, 1023).unwrap().value;
        let coarse = integrated_l2_risk_with(wobble, &truth, 512).unwrap().value;
        assert!((fine - coarse).abs() < 1e-4);
        assert!(integrated_l2_risk_with(wobble, &truth, 10).is_err());
    }

    #[test]
    fn sup_risk() {
        let truth = MatrixFunctionSpec::constant(H::zeros(2)).unwrap();
        let e11 = BasisIndex::diagonal(0).element::<f64>(2).unwrap();
        let grid = sup_grid(0.1, 9).unwrap();
        let c = 0.3;
        let ests: Vec<_> = grid.iter().map(|&t| (t, e11.scale(c))).collect();
        assert_abs_diff_eq!(sup_opnorm_risk(&ests, &truth).unwrap(), c * c / 4.0, epsilon = 1e-15);
        let zeros: Vec<_> = grid.iter().map(|&t| (t, H::zeros(2))).collect();
        assert_eq!(sup_opnorm_risk(&zeros, &truth).unwrap(), 0.0);
        assert!(sup_opnorm_risk::<f64>(&[], &truth).is_err());
        let mut more = ests[..4].to_vec();
        let sub = sup_opnorm_risk(&more, &truth).unwrap();
        more.push((0.5, e11.scale(2.0)));
        assert!(sup_opnorm_risk(&more, &truth).unwrap() >= sub);
    }

    #[test]
    fn rate_curves() {
        let (m, r, n) = (20, 2, 100_000);
        let up = theoretical_rate(RateKind::PointwiseUpper, m, r, n, 1.5, 1.0).unwrap();
        let lo = theoretical_rate(RateKind::PointwiseLower, m, r, n, 1.5, 1.0).unwrap();
        assert_abs_diff_eq!(up / lo, (n as f64).ln().powf(0.75), epsilon = 1e-10);
        let up2 = theoretical_rate(RateKind::L2Upper, m, r, 2 * n, 1.5, 1.0).unwrap();
        let up1 = theoretical_rate(RateKind::L2Upper, m, r, n, 1.5, 1.0).unwrap();
        let ln_ratio = ((2 * n) as f64).ln() / (n as f64).ln();
        assert_abs_diff_eq!(up2 / up1, (ln_ratio / 2.0).powf(0.75), epsilon = 1e-12);
        let sup_lo = theoretical_rate(RateKind::SupLower, m, r, n, 1.5, 1.0).unwrap();
        assert_abs_diff_eq!(sup_lo, (20.0f64 / n as f64).powf(0.75), epsilon = 1e-15);
        let sup_up = theoretical_rate(RateKind::SupUpper, m, r, n, 1.5, 1.0).unwrap();
        assert_abs_diff_eq!(sup_up, (20.0 * (n as f64).ln() / n as f64).powf(0.75), epsilon = 1e-15);
        assert!("sideways".parse::<RateKind>().is_err());
        assert_eq!("l2_lower".parse::<RateKind>().unwrap(), RateKind::L2Lower);
    }
}
