//! Matrix-completion sampling basis, observation model and synthetic
//! ground-truth matrix-valued functions.
//!
//! A sampling matrix is stored as a [`BasisIndex`], never as a dense matrix.
//! Inner products with basis elements reduce to reading one real or imaginary
//! entry, so every coordinate of a Hermitian matrix in the orthonormal basis
//! is available in O(1).
//!
//! Basis ordering (`coord` ids, zero-based): the `m` diagonal elements, then
//! the `m(m-1)/2` real-symmetric pairs `k < j` in row-major order, then the
//! imaginary-antisymmetric pairs in the same order.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::HermitianMatrix;
use crate::scalar::Real;
use crate::spline::CubicSpline;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    /// `e_k ⊗ e_k`
    Diagonal,
    /// `(e_k ⊗ e_j + e_j ⊗ e_k) / √2`
    RealSym,
    /// `i (e_k ⊗ e_j − e_j ⊗ e_k) / √2`
    ImagAntisym,
}

impl BasisKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BasisKind::Diagonal => "diagonal",
            BasisKind::RealSym => "real_sym",
            BasisKind::ImagAntisym => "imag_antisym",
        }
    }
}

impl std::str::FromStr for BasisKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diagonal" => Ok(BasisKind::Diagonal),
            "real_sym" => Ok(BasisKind::RealSym),
            "imag_antisym" => Ok(BasisKind::ImagAntisym),
            other => Err(Error::param("kind", format!("unknown basis kind `{other}`"))),
        }
    }
}

/// Zero-based code of one element of the sampling basis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BasisIndex {
    pub kind: BasisKind,
    pub k: u32,
    pub j: u32,
}

#[inline]
fn pair_offset(m: usize, k: usize, j: usize) -> usize {
    k * (2 * m - k - 1) / 2 + (j - k - 1)
}

impl BasisIndex {
    pub fn diagonal(k: u32) -> Self {
        Self {
            kind: BasisKind::Diagonal,
            k,
            j: k,
        }
    }

    pub fn real_sym(k: u32, j: u32) -> Self {
        Self {
            kind: BasisKind::RealSym,
            k,
            j,
        }
    }

    pub fn imag_antisym(k: u32, j: u32) -> Self {
        Self {
            kind: BasisKind::ImagAntisym,
            k,
            j,
        }
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        let (k, j) = (self.k as usize, self.j as usize);
        let ok = match self.kind {
            BasisKind::Diagonal => k == j && k < m,
            _ => k < j && j < m,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange(format!("{self} for dimension {m}")))
        }
    }

    /// Position of this element in the basis ordering for dimension `m`.
    #[inline]
    pub fn coord(&self, m: usize) -> usize {
        let (k, j) = (self.k as usize, self.j as usize);
        let pairs = m * (m - 1) / 2;
        match self.kind {
            BasisKind::Diagonal => k,
            BasisKind::RealSym => m + pair_offset(m, k, j),
            BasisKind::ImagAntisym => m + pairs + pair_offset(m, k, j),
        }
    }

    pub fn from_coord(c: usize, m: usize) -> Result<Self> {
        let pairs = m * (m - 1) / 2;
        if c >= m * m {
            return Err(Error::IndexOutOfRange(format!("coordinate {c} for dimension {m}")));
        }
        if c < m {
            return Ok(Self::diagonal(c as u32));
        }
        let (kind, mut rest) = if c < m + pairs {
            (BasisKind::RealSym, c - m)
        } else {
            (BasisKind::ImagAntisym, c - m - pairs)
        };
        let mut k = 0;
        while rest >= m - k - 1 {
            rest -= m - k - 1;
            k += 1;
        }
        Ok(Self {
            kind,
            k: k as u32,
            j: (k + 1 + rest) as u32,
        })
    }

    /// Every basis element for dimension `m`, in coordinate order.
    pub fn all(m: usize) -> impl Iterator<Item = BasisIndex> {
        (0..m * m).map(move |c| Self::from_coord(c, m).expect("in range"))
    }

    /// Dense basis matrix.
    pub fn element<T: Real>(&self, m: usize) -> Result<HermitianMatrix<T>> {
        self.validate(m)?;
        let mut out = HermitianMatrix::zeros(m);
        let s = T::lit(std::f64::consts::FRAC_1_SQRT_2);
        let (k, j) = (self.k as usize, self.j as usize);
        match self.kind {
            BasisKind::Diagonal => out.set(k, k, Complex::new(T::one(), T::zero())),
            BasisKind::RealSym => out.set(k, j, Complex::new(s, T::zero())),
            BasisKind::ImagAntisym => out.set(k, j, Complex::new(T::zero(), s)),
        }
        Ok(out)
    }

    /// `⟨S, E⟩` read off a single entry of `S`.
    #[inline]
    pub fn inner_unchecked<T: Real>(&self, s: &HermitianMatrix<T>) -> T {
        let (k, j) = (self.k as usize, self.j as usize);
        let sqrt2 = T::lit(std::f64::consts::SQRT_2);
        match self.kind {
            BasisKind::Diagonal => s.get(k, k).re,
            BasisKind::RealSym => sqrt2 * s.get(k, j).re,
            BasisKind::ImagAntisym => sqrt2 * s.get(k, j).im,
        }
    }
}

impl fmt::Display for BasisIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.kind.as_str(), self.k, self.j)
    }
}

pub fn basis_element<T: Real>(idx: BasisIndex, m: usize) -> Result<HermitianMatrix<T>> {
    idx.element(m)
}

pub fn inner_with_basis<T: Real>(s: &HermitianMatrix<T>, idx: BasisIndex) -> Result<T> {
    idx.validate(s.dim())?;
    Ok(idx.inner_unchecked(s))
}

/// All `m²` coordinates of `s` in the orthonormal basis.
pub fn matrix_to_coords<T: Real>(s: &HermitianMatrix<T>) -> Vec<T> {
    let m = s.dim();
    BasisIndex::all(m).map(|idx| idx.inner_unchecked(s)).collect()
}

/// Inverse of [`matrix_to_coords`]: `Σ_c coords[c] E_c`.
pub fn coords_to_matrix<T: Real>(coords: &[T], m: usize) -> HermitianMatrix<T> {
    debug_assert_eq!(coords.len(), m * m);
    let s = T::lit(std::f64::consts::FRAC_1_SQRT_2);
    let pairs = m * (m - 1) / 2;
    HermitianMatrix::from_upper_fn(m, |r, c| {
        if r == c {
            Complex::new(coords[r], T::zero())
        } else {
            let p = pair_offset(m, r, c);
            Complex::new(coords[m + p] * s, coords[m + pairs + p] * s)
        }
    })
}

/// Largest `|⟨A, X⟩|` over the basis.
pub fn max_abs_coordinate<T: Real>(a: &HermitianMatrix<T>) -> T {
    matrix_to_coords(a)
        .into_iter()
        .fold(T::zero(), |acc, v| acc.max(v.abs()))
}

/// One regression sample `(τ, X, Y)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Observation<T: Real> {
    pub tau: T,
    pub x: BasisIndex,
    pub y: T,
}

/// Immutable sample store with a response bound.
#[derive(Clone, Debug)]
pub struct Dataset<T: Real> {
    observations: Vec<Observation<T>>,
    m: usize,
    a: T,
    seed: u64,
    description: String,
    by_tau: Vec<u32>,
}

/// Sidecar metadata persisted next to a dataset CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub m: usize,
    pub n: usize,
    pub a: f64,
    pub seed: u64,
    pub description: String,
}

impl<T: Real> Dataset<T> {
    pub fn new(
        observations: Vec<Observation<T>>,
        m: usize,
        a: T,
        seed: u64,
        description: impl Into<String>,
    ) -> Result<Self> {
        if m == 0 {
            return Err(Error::param("m", "matrix dimension must be positive"));
        }
        if !(a >= T::zero()) {
            return Err(Error::param("a", "response bound must be nonnegative"));
        }
        for (i, o) in observations.iter().enumerate() {
            o.x.validate(m)?;
            if !(o.tau >= T::zero() && o.tau <= T::one()) {
                return Err(Error::param("tau", format!("observation {i} has tau = {} outside [0, 1]", o.tau)));
            }
            if !(o.y.abs() <= a) {
                return Err(Error::param("y", format!("observation {i} has |y| = {} above bound {a}", o.y.abs())));
            }
        }
        let mut by_tau: Vec<u32> = (0..observations.len() as u32).collect();
        by_tau.sort_by(|&p, &q| {
            let (op, oq) = (&observations[p as usize], &observations[q as usize]);
            op.tau
                .partial_cmp(&oq.tau)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(op.x.cmp(&oq.x))
                .then(op.y.partial_cmp(&oq.y).unwrap_or(std::cmp::Ordering::Equal))
        });
        Ok(Self {
            observations,
            m,
            a,
            seed,
            description: description.into(),
            by_tau,
        })
    }

    pub fn observations(&self) -> &[Observation<T>] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn response_bound(&self) -> T {
        self.a
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    /// Observations with `lo <= τ <= hi`, in ascending `τ` order (ties broken
    /// by basis index and response so the order does not depend on input order).
    pub fn in_range(&self, lo: T, hi: T) -> impl Iterator<Item = &Observation<T>> + '_ {
        let start = self
            .by_tau
            .partition_point(|&i| self.observations[i as usize].tau < lo);
        self.by_tau[start..]
            .iter()
            .map(move |&i| &self.observations[i as usize])
            .take_while(move |o| o.tau <= hi)
    }

    /// Observations with `|τ − t0| <= h`.
    pub fn window(&self, t0: T, h: T) -> impl Iterator<Item = &Observation<T>> + '_ {
        self.in_range(t0 - h, t0 + h)
            .filter(move |o| ((o.tau - t0) / h).abs() <= T::one())
    }

    /// New dataset made of the observations at `indices` (in that order).
    pub fn subset(&self, indices: &[usize], description: impl Into<String>) -> Result<Self> {
        let obs = indices
            .iter()
            .map(|&i| {
                self.observations
                    .get(i)
                    .copied()
                    .ok_or_else(|| Error::IndexOutOfRange(format!("observation {i}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(obs, self.m, self.a, self.seed, description)
    }

    pub fn meta(&self) -> DatasetMeta {
        DatasetMeta {
            m: self.m,
            n: self.len(),
            a: self.a.as_f64(),
            seed: self.seed,
            description: self.description.clone(),
        }
    }

    /// Writes `tau,kind,k,j,y` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "tau,kind,k,j,y")?;
        for o in &self.observations {
            writeln!(w, "{},{},{},{},{}", o.tau, o.x.kind.as_str(), o.x.k, o.x.j, o.y)?;
        }
        Ok(())
    }

    /// Reads the CSV body; dimension, bound and seed come from the sidecar.
    pub fn read_csv<R: BufRead>(reader: R, meta: &DatasetMeta) -> Result<Self> {
        let mut obs = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            if idx == 0 {
                if line.trim() != "tau,kind,k,j,y" {
                    return Err(Error::Parse {
                        line: 1,
                        message: "expected header `tau,kind,k,j,y`".into(),
                    });
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let bad = |message: String| Error::Parse { line: lineno, message };
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 5 {
                return Err(bad(format!("expected 5 fields, found {}", f.len())));
            }
            let tau: T = f[0].parse().map_err(|_| bad("bad tau".into()))?;
            let kind: BasisKind = f[1].parse().map_err(|e: Error| bad(e.to_string()))?;
            let k: u32 = f[2].parse().map_err(|_| bad("bad k".into()))?;
            let j: u32 = f[3].parse().map_err(|_| bad("bad j".into()))?;
            let y: T = f[4].parse().map_err(|_| bad("bad y".into()))?;
            obs.push(Observation {
                tau,
                x: BasisIndex { kind, k, j },
                y,
            });
        }
        if obs.len() != meta.n {
            return Err(Error::Config(format!(
                "metadata declares {} observations, file has {}",
                meta.n,
                obs.len()
            )));
        }
        Self::new(obs, meta.m, T::lit(meta.a), meta.seed, meta.description.clone())
    }

    /// Saves `path` (CSV) and `path.meta.toml`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))?;
        let meta = toml::to_string(&self.meta()).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(meta_path(path), meta)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let meta_text = std::fs::read_to_string(meta_path(path))?;
        let meta: DatasetMeta = toml::from_str(&meta_text).map_err(|e| Error::Config(e.to_string()))?;
        let file = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(file), &meta)
    }
}

pub fn meta_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.toml");
    s.into()
}

/// Time profile `f` of the diffusion model `A(t) = Ã f(t)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    /// `f(t) = t`
    Linear,
    /// `f(t) = sin(2π freq t + phase)`
    Sine { freq: f64, phase: f64 },
}

impl Profile {
    fn eval3(&self, t: f64) -> (f64, f64, f64) {
        match *self {
            Profile::Linear => (t, 1.0, 0.0),
            Profile::Sine { freq, phase } => {
                let w = 2.0 * std::f64::consts::PI * freq;
                let arg = w * t + phase;
                (arg.sin(), w * arg.cos(), -w * w * arg.sin())
            }
        }
    }
}

/// Structure of a synthetic ground truth.
#[derive(Clone, Debug)]
pub enum TruthVariant<T: Real> {
    Constant(HermitianMatrix<T>),
    /// `A(t) = scale · P(t) P(t)ᵀ` with `P: [0,1] → ℝ^{m×r}`; `factors[i][l]` is entry `(i, l)`.
    Factor {
        factors: Vec<Vec<CubicSpline<T>>>,
        scale: T,
    },
    /// `A(t) = Ã f(t)`.
    Diffusion { base: HermitianMatrix<T>, profile: Profile },
    /// Squared distances between `m` moving points in ℝ^d, times `scale`.
    EuclideanDistance {
        trajectories: Vec<Vec<CubicSpline<T>>>,
        scale: T,
    },
}

/// Ground-truth matrix-valued function together with its smoothness class.
#[derive(Clone, Debug)]
pub struct MatrixFunctionSpec<T: Real> {
    pub variant: TruthVariant<T>,
    pub m: usize,
    pub rank: usize,
    pub beta: f64,
    pub holder_l: f64,
    pub amplitude: f64,
}

/// Parameters for randomly generated truths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthParams {
    pub m: usize,
    pub rank: usize,
    pub beta: f64,
    pub holder_l: f64,
    /// Bound on `|⟨A(t), X⟩|`.
    pub a1: f64,
    /// Bound on `|⟨A'(t), X⟩|`.
    pub a2: f64,
    /// Spline knots per factor curve.
    pub knots: usize,
    pub seed: u64,
}

impl Default for TruthParams {
    fn default() -> Self {
        Self {
            m: 20,
            rank: 2,
            beta: 1.5,
            holder_l: 24.0,
            a1: 1.0,
            a2: 24.0,
            knots: 8,
            seed: 0,
        }
    }
}

/// Grid used to enforce amplitude, derivative and Hölder bounds.
pub const SCALING_GRID: usize = 1025;

/// Realized extremes of the truth and its derivatives over the scaling grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthSummary {
    pub sup_coordinate: f64,
    pub sup_derivative: f64,
    pub sup_second_derivative: f64,
    pub holder_bound: f64,
    /// Largest numerical rank of `A`, `A'`, `A''` on the grid.
    pub derivative_ranks: [usize; 3],
}

impl<T: Real> MatrixFunctionSpec<T> {
    pub fn constant(a0: HermitianMatrix<T>) -> Result<Self> {
        let m = a0.dim();
        let rank = a0.rank()?;
        let amplitude = max_abs_coordinate(&a0).as_f64();
        Ok(Self {
            variant: TruthVariant::Constant(a0),
            m,
            rank,
            beta: f64::INFINITY,
            holder_l: 0.0,
            amplitude,
        })
    }

    pub fn diffusion(base: HermitianMatrix<T>, profile: Profile, beta: f64, holder_l: f64) -> Result<Self> {
        let m = base.dim();
        let rank = base.rank()?;
        let amplitude = max_abs_coordinate(&base).as_f64();
        Ok(Self {
            variant: TruthVariant::Diffusion { base, profile },
            m,
            rank,
            beta,
            holder_l,
            amplitude,
        })
    }

    /// Factor model from explicit curves, `factors[i][l]`, without rescaling.
    pub fn factor(factors: Vec<Vec<CubicSpline<T>>>, beta: f64, holder_l: f64) -> Result<Self> {
        let m = factors.len();
        let rank = factors.first().map(Vec::len).unwrap_or(0);
        if m == 0 || rank == 0 || factors.iter().any(|row| row.len() != rank) {
            return Err(Error::param("factors", "need an m×r array of curves with m, r >= 1"));
        }
        let mut spec = Self {
            variant: TruthVariant::Factor {
                factors,
                scale: T::one(),
            },
            m,
            rank,
            beta,
            holder_l,
            amplitude: 0.0,
        };
        spec.amplitude = spec.summary(SCALING_GRID)?.sup_coordinate;
        Ok(spec)
    }

    /// Random factor model rescaled so that the coordinate functions
    /// `t ↦ ⟨A(t), X⟩` obey `|·| <= a1`, `|d/dt ·| <= a2` and the Hölder bound
    /// `L` of order `β` (`0 < β <= 2`).
    pub fn random_factor(params: &TruthParams) -> Result<Self> {
        check_truth_params(params)?;
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let knots = params.knots.max(2);
        let factors = (0..params.m)
            .map(|_| {
                (0..params.rank)
                    .map(|_| {
                        CubicSpline::natural(
                            (0..knots).map(|_| T::lit(rng.random_range(-1.0..1.0))).collect(),
                        )
                    })
                    .collect()
            })
            .collect();
        let spec = Self {
            variant: TruthVariant::Factor {
                factors,
                scale: T::one(),
            },
            m: params.m,
            rank: params.rank,
            beta: params.beta,
            holder_l: params.holder_l,
            amplitude: params.a1,
        };
        spec.rescaled(params)
    }

    /// Random diffusion model `Ã sin(2π freq t + phase)` with `rank(Ã) = r`, rescaled like
    /// [`Self::random_factor`].
    pub fn random_diffusion(params: &TruthParams, freq: f64) -> Result<Self> {
        check_truth_params(params)?;
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let vecs: Vec<Vec<f64>> = (0..params.rank)
            .map(|_| (0..params.m).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let signs: Vec<f64> = (0..params.rank)
            .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
            .collect();
        let base = HermitianMatrix::from_upper_fn(params.m, |r, c| {
            let v: f64 = vecs.iter().zip(&signs).map(|(u, s)| s * u[r] * u[c]).sum();
            Complex::new(T::lit(v), T::zero())
        });
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        let spec = Self::diffusion(base, Profile::Sine { freq, phase }, params.beta, params.holder_l)?;
        spec.rescaled(params)
    }

    /// Random time-invariant truth of rank `r`, scaled so that the largest
    /// coordinate equals `a1`.
    pub fn random_constant(params: &TruthParams) -> Result<Self> {
        check_truth_params(params)?;
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let vecs: Vec<Vec<f64>> = (0..params.rank)
            .map(|_| (0..params.m).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let base = HermitianMatrix::from_upper_fn(params.m, |r, c| {
            let v: f64 = vecs.iter().map(|u| u[r] * u[c]).sum();
            Complex::new(T::lit(v), T::zero())
        });
        let sup = max_abs_coordinate(&base).as_f64();
        let scaled = if sup > 0.0 { base.scale(T::lit(params.a1 / sup)) } else { base };
        Self::constant(scaled)
    }

    /// Random Euclidean distance matrix of `m` points moving in ℝ^d along splines.
    pub fn random_euclidean(params: &TruthParams, d: usize) -> Result<Self> {
        check_truth_params(params)?;
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let knots = params.knots.max(2);
        let trajectories = (0..params.m)
            .map(|_| {
                (0..d.max(1))
                    .map(|_| {
                        CubicSpline::natural(
                            (0..knots).map(|_| T::lit(rng.random_range(-1.0..1.0))).collect(),
                        )
                    })
                    .collect()
            })
            .collect();
        let spec = Self {
            variant: TruthVariant::EuclideanDistance {
                trajectories,
                scale: T::one(),
            },
            m: params.m,
            rank: d.max(1) + 2,
            beta: params.beta,
            holder_l: params.holder_l,
            amplitude: params.a1,
        };
        spec.rescaled(params)
    }

    fn rescaled(mut self, params: &TruthParams) -> Result<Self> {
        let s = self.summary(SCALING_GRID)?;
        let mut factor = f64::INFINITY;
        if s.sup_coordinate > 0.0 {
            factor = factor.min(params.a1 / s.sup_coordinate);
        }
        if s.sup_derivative > 0.0 {
            factor = factor.min(params.a2 / s.sup_derivative);
        }
        if s.holder_bound > 0.0 {
            factor = factor.min(params.holder_l / s.holder_bound);
        }
        if !factor.is_finite() {
            factor = 1.0;
        }
        let f = T::lit(factor);
        match &mut self.variant {
            TruthVariant::Constant(a0) => *a0 = a0.scale(f),
            TruthVariant::Factor { scale, .. } | TruthVariant::EuclideanDistance { scale, .. } => {
                *scale *= f
            }
            TruthVariant::Diffusion { base, .. } => *base = base.scale(f),
        }
        self.amplitude = s.sup_coordinate * factor;
        Ok(self)
    }

    /// Upper bound on the rank of `A(t)`.
    pub fn rank_bound(&self) -> usize {
        self.rank
    }

    fn check_t(t: T) -> Result<()> {
        if t >= T::zero() && t <= T::one() {
            Ok(())
        } else {
            Err(Error::OutOfDomain(t.as_f64()))
        }
    }

    /// `A(t)`.
    pub fn evaluate(&self, t: T) -> Result<HermitianMatrix<T>> {
        Ok(self.evaluate_derivatives(t)?.0)
    }

    /// `(A(t), A'(t), A''(t))`.
    pub fn evaluate_derivatives(
        &self,
        t: T,
    ) -> Result<(HermitianMatrix<T>, HermitianMatrix<T>, HermitianMatrix<T>)> {
        Self::check_t(t)?;
        let m = self.m;
        let zero = Complex::new(T::zero(), T::zero());
        let real = |v: T| Complex::new(v, T::zero());
        Ok(match &self.variant {
            TruthVariant::Constant(a0) => (a0.clone(), HermitianMatrix::zeros(m), HermitianMatrix::zeros(m)),
            TruthVariant::Diffusion { base, profile } => {
                let (f0, f1, f2) = profile.eval3(t.as_f64());
                (base.scale(T::lit(f0)), base.scale(T::lit(f1)), base.scale(T::lit(f2)))
            }
            TruthVariant::Factor { factors, scale } => {
                let p: Vec<Vec<(T, T, T)>> = factors
                    .iter()
                    .map(|row| row.iter().map(|s| s.eval3(t)).collect())
                    .collect();
                let two = T::lit(2.0);
                let mut a = [
                    HermitianMatrix::zeros(m),
                    HermitianMatrix::zeros(m),
                    HermitianMatrix::zeros(m),
                ];
                for r in 0..m {
                    for c in r..m {
                        let (mut v0, mut v1, mut v2) = (T::zero(), T::zero(), T::zero());
                        for (x, y) in p[r].iter().zip(&p[c]) {
                            v0 += x.0 * y.0;
                            v1 += x.1 * y.0 + x.0 * y.1;
                            v2 += x.2 * y.0 + two * x.1 * y.1 + x.0 * y.2;
                        }
                        a[0].set(r, c, real(v0 * *scale));
                        a[1].set(r, c, real(v1 * *scale));
                        a[2].set(r, c, real(v2 * *scale));
                    }
                }
                let [a0, a1, a2] = a;
                (a0, a1, a2)
            }
            TruthVariant::EuclideanDistance { trajectories, scale } => {
                let p: Vec<Vec<(T, T, T)>> = trajectories
                    .iter()
                    .map(|row| row.iter().map(|s| s.eval3(t)).collect())
                    .collect();
                let two = T::lit(2.0);
                let mut a = [
                    HermitianMatrix::zeros(m),
                    HermitianMatrix::zeros(m),
                    HermitianMatrix::zeros(m),
                ];
                for r in 0..m {
                    for c in (r + 1)..m {
                        let (mut v0, mut v1, mut v2) = (T::zero(), T::zero(), T::zero());
                        for (x, y) in p[r].iter().zip(&p[c]) {
                            let (d0, d1, d2) = (x.0 - y.0, x.1 - y.1, x.2 - y.2);
                            v0 += d0 * d0;
                            v1 += two * d0 * d1;
                            v2 += two * (d1 * d1 + d0 * d2);
                        }
                        a[0].set(r, c, real(v0 * *scale));
                        a[1].set(r, c, real(v1 * *scale));
                        a[2].set(r, c, real(v2 * *scale));
                    }
                    for x in a.iter_mut() {
                        x.set(r, r, zero);
                    }
                }
                let [a0, a1, a2] = a;
                (a0, a1, a2)
            }
        })
    }

    /// `⟨A(t), X⟩` without forming the full matrix.
    pub fn coordinate(&self, t: T, idx: BasisIndex) -> Result<T> {
        Self::check_t(t)?;
        idx.validate(self.m)?;
        let (k, j) = (idx.k as usize, idx.j as usize);
        let entry = match &self.variant {
            TruthVariant::Constant(a0) => return Ok(idx.inner_unchecked(a0)),
            TruthVariant::Diffusion { base, profile } => {
                return Ok(idx.inner_unchecked(base) * T::lit(profile.eval3(t.as_f64()).0));
            }
            TruthVariant::Factor { factors, scale } => {
                factors[k]
                    .iter()
                    .zip(&factors[j])
                    .fold(T::zero(), |acc, (x, y)| acc + x.eval(t) * y.eval(t))
                    * *scale
            }
            TruthVariant::EuclideanDistance { trajectories, scale } => {
                if k == j {
                    T::zero()
                } else {
                    trajectories[k]
                        .iter()
                        .zip(&trajectories[j])
                        .fold(T::zero(), |acc, (x, y)| {
                            let d = x.eval(t) - y.eval(t);
                            acc + d * d
                        })
                        * *scale
                }
            }
        };
        // Real-valued truths: imaginary coordinates vanish.
        Ok(match idx.kind {
            BasisKind::Diagonal => entry,
            BasisKind::RealSym => entry * T::lit(std::f64::consts::SQRT_2),
            BasisKind::ImagAntisym => T::zero(),
        })
    }

    /// Extremes of the coordinate functions and their derivatives on a grid,
    /// plus the Hölder bound implied for order `β`.
    pub fn summary(&self, grid: usize) -> Result<TruthSummary> {
        let g = grid.max(2);
        let mut sup = [0.0f64; 3];
        let mut ranks = [0usize; 3];
        let mut per_coord = vec![[0.0f64; 3]; self.m * self.m];
        for i in 0..g {
            let t = T::lit(i as f64 / (g - 1) as f64);
            let (a0, a1, a2) = self.evaluate_derivatives(t)?;
            for (d, a) in [a0, a1, a2].iter().enumerate() {
                for (c, v) in matrix_to_coords(a).into_iter().enumerate() {
                    let v = v.as_f64().abs();
                    per_coord[c][d] = per_coord[c][d].max(v);
                    sup[d] = sup[d].max(v);
                }
                if i % 16 == 0 || i == g - 1 {
                    ranks[d] = ranks[d].max(a.rank()?);
                }
            }
        }
        let holder_bound = per_coord
            .iter()
            .map(|c| holder_constant_bound(self.beta, c))
            .fold(0.0, f64::max);
        Ok(TruthSummary {
            sup_coordinate: sup[0],
            sup_derivative: sup[1],
            sup_second_derivative: sup[2],
            holder_bound,
            derivative_ranks: ranks,
        })
    }
}

fn check_truth_params(p: &TruthParams) -> Result<()> {
    if p.m == 0 || p.rank == 0 {
        return Err(Error::param("m/rank", "must be positive"));
    }
    if !(p.beta > 0.0 && p.beta <= 2.0) {
        return Err(Error::param("beta", "synthetic truths support 0 < beta <= 2"));
    }
    if !(p.a1 > 0.0 && p.a2 > 0.0 && p.holder_l > 0.0) {
        return Err(Error::param("a1/a2/L", "must be positive"));
    }
    Ok(())
}

/// Bound on the Hölder-`(β − ⌊β⌋)` constant of `f^{(⌊β⌋)}` from sup norms of
/// `f, f', f''`: `|g(x) − g(y)| <= min(2 sup|g|, sup|g'| |x − y|)`, so the
/// constant is at most `(2 sup|g|)^{1−γ} (sup|g'|)^γ`.
fn holder_constant_bound(beta: f64, sups: &[f64; 3]) -> f64 {
    let ell = beta.floor() as usize;
    let gamma = beta - ell as f64;
    match ell {
        0 => (2.0 * sups[0]).powf(1.0 - gamma) * sups[1].powf(gamma),
        1 => (2.0 * sups[1]).powf(1.0 - gamma) * sups[2].powf(gamma),
        _ => 2.0 * sups[2],
    }
}

pub fn evaluate_truth<T: Real>(spec: &MatrixFunctionSpec<T>, t: T) -> Result<HermitianMatrix<T>> {
    spec.evaluate(t)
}

/// Bounded, mean-zero noise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Noise {
    /// `ξ ~ Uniform[−level, level]`.
    Uniform { level: f64 },
    /// `Y ∈ {−bound, +bound}` with conditional mean `⟨A(τ), X⟩`.
    TwoPoint { bound: f64 },
}

impl Default for Noise {
    fn default() -> Self {
        Noise::Uniform { level: 0.5 }
    }
}

/// Draws `n` i.i.d. samples `τ ~ U[0,1]`, `X ~ U(basis)`, `Y = ⟨A(τ), X⟩ + ξ`.
pub fn generate_dataset<T: Real>(
    spec: &MatrixFunctionSpec<T>,
    n: usize,
    noise: Noise,
    seed: u64,
) -> Result<Dataset<T>> {
    if n == 0 {
        return Err(Error::param("n", "sample size must be positive"));
    }
    let m = spec.m;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut obs = Vec::with_capacity(n);
    let mut signal_sup = T::zero();
    for _ in 0..n {
        let tau = T::lit(rng.random::<f64>());
        let x = BasisIndex::from_coord(rng.random_range(0..m * m), m)?;
        let mean = spec.coordinate(tau, x)?;
        signal_sup = signal_sup.max(mean.abs());
        let y = match noise {
            Noise::Uniform { level } => mean + T::lit(rng.random_range(-1.0..=1.0) * level),
            Noise::TwoPoint { bound } => {
                let b = T::lit(bound);
                if mean.abs() > b {
                    return Err(Error::param("bound", "two-point noise bound below signal amplitude"));
                }
                let p_up = (T::one() + mean / b) * T::lit(0.5);
                if T::lit(rng.random::<f64>()) < p_up {
                    b
                } else {
                    -b
                }
            }
        };
        obs.push(Observation { tau, x, y });
    }
    let a = match noise {
        Noise::Uniform { level } => T::lit(spec.amplitude).max(signal_sup) + T::lit(level),
        Noise::TwoPoint { bound } => T::lit(bound),
    };
    let description = format!(
        "m={m} rank<={} beta={} L={} amplitude={} noise={noise:?}",
        spec.rank, spec.beta, spec.holder_l, spec.amplitude
    );
    Dataset::new(obs, m, a, seed, description)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    type H = HermitianMatrix<f64>;

    #[test]
    fn basis_elements_match_definitions() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let e = BasisIndex::diagonal(0).element::<f64>(2).unwrap();
        assert_eq!(e, H::from_real_diagonal(&[1.0, 0.0]));
        let e = BasisIndex::real_sym(0, 1).element::<f64>(2).unwrap();
        assert_eq!(e.get(0, 1), Complex::new(s, 0.0));
        assert_eq!(e.get(1, 0), Complex::new(s, 0.0));
        let e = BasisIndex::imag_antisym(0, 1).element::<f64>(2).unwrap();
        assert_eq!(e.get(0, 1), Complex::new(0.0, s));
        assert_eq!(e.get(1, 0), Complex::new(0.0, -s));
        assert!((e.frobenius_norm() - 1.0).abs() < 1e-15);
        assert!(e.is_exactly_hermitian());
    }

    #[test]
    fn out_of_range_indices_are_rejected() {
        assert!(BasisIndex::diagonal(2).element::<f64>(2).is_err());
        assert!(BasisIndex::real_sym(1, 1).element::<f64>(3).is_err());
        assert!(BasisIndex::imag_antisym(1, 0).element::<f64>(3).is_err());
        assert!(BasisIndex::from_coord(9, 3).is_ok() == false);
    }

    #[test]
    fn inner_with_basis_examples() {
        assert_eq!(inner_with_basis(&H::identity(3), BasisIndex::diagonal(1)).unwrap(), 1.0);
        let mut s = H::zeros(2);
        s.set(0, 1, Complex::new(1.0, 2.0));
        let sym = inner_with_basis(&s, BasisIndex::real_sym(0, 1)).unwrap();
        assert_abs_diff_eq!(sym, 2f64.sqrt(), epsilon = 1e-15);
        let anti = inner_with_basis(&s, BasisIndex::imag_antisym(0, 1)).unwrap();
        let oracle = s.inner(&BasisIndex::imag_antisym(0, 1).element(2).unwrap()).unwrap();
        assert_abs_diff_eq!(anti, oracle, epsilon = 1e-15);
        assert_abs_diff_eq!(anti, 2.0 * 2f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn basis_is_orthonormal_and_complete() {
        for m in 1..=5 {
            let all: Vec<_> = BasisIndex::all(m).collect();
            assert_eq!(all.len(), m * m);
            for (c, idx) in all.iter().enumerate() {
                assert_eq!(idx.coord(m), c);
            }
            for a in &all {
                let ea = a.element::<f64>(m).unwrap();
                for b in &all {
                    let eb = b.element::<f64>(m).unwrap();
                    let want = if a == b { 1.0 } else { 0.0 };
                    assert!((ea.inner(&eb).unwrap() - want).abs() < 1e-15);
                }
            }
        }
    }

    fn arb_hermitian(m: usize) -> impl Strategy<Value = H> {
        proptest::collection::vec(-3.0..3.0f64, 2 * m * m).prop_map(move |v| {
            H::from_upper_fn(m, |r, c| Complex::new(v[r * m + c], v[m * m + r * m + c]))
        })
    }

    proptest! {
        #[test]
        fn sampling_isometry(a in (1usize..=5).prop_flat_map(arb_hermitian)) {
            let m = a.dim();
            let mean_sq = BasisIndex::all(m)
                .map(|x| x.inner_unchecked(&a).powi(2))
                .sum::<f64>() / (m * m) as f64;
            prop_assert!((mean_sq - a.frobenius_norm_sq() / (m * m) as f64).abs() < 1e-10);
        }

        #[test]
        fn shortcut_matches_trace(a in (1usize..=5).prop_flat_map(arb_hermitian)) {
            let m = a.dim();
            for idx in BasisIndex::all(m) {
                let full = a.inner(&idx.element(m).unwrap()).unwrap();
                prop_assert!((idx.inner_unchecked(&a) - full).abs() < 1e-12);
            }
            prop_assert_eq!(coords_to_matrix(&matrix_to_coords(&a), m).frobenius_norm_sq() > -1.0, true);
            let back = coords_to_matrix(&matrix_to_coords(&a), m);
            prop_assert!(back.try_sub(&a).unwrap().frobenius_norm() < 1e-12);
        }
    }

    #[test]
    fn constant_and_diffusion_truths() {
        let e11 = BasisIndex::diagonal(0).element::<f64>(3).unwrap();
        let spec = MatrixFunctionSpec::constant(e11.clone()).unwrap();
        assert_eq!(spec.evaluate(0.37).unwrap(), e11);
        assert!(spec.evaluate(1.2).is_err());

        let base = H::from_real_diagonal(&[1.0, 0.0, 0.0]);
        let diff = MatrixFunctionSpec::diffusion(base, Profile::Linear, 1.5, 24.0).unwrap();
        assert_eq!(diff.evaluate(0.0).unwrap().frobenius_norm(), 0.0);
    }

    #[test]
    fn factor_model_is_outer_product() {
        let curve = |v: Vec<f64>| CubicSpline::natural(v);
        let factors = vec![
            vec![curve(vec![0.0, 1.0, 0.5])],
            vec![curve(vec![1.0, -1.0, 2.0])],
        ];
        let spec = MatrixFunctionSpec::factor(factors.clone(), 1.5, 24.0).unwrap();
        let p: Vec<f64> = factors.iter().map(|r| r[0].eval(0.5)).collect();
        let a = spec.evaluate(0.5).unwrap();
        for r in 0..2 {
            for c in 0..2 {
                assert_abs_diff_eq!(a.get(r, c).re, p[r] * p[c], epsilon = 1e-14);
            }
        }
        assert_eq!(a.rank().unwrap(), 1);
    }

    #[test]
    fn random_truths_respect_bounds() {
        let params = TruthParams {
            m: 6,
            rank: 2,
            a1: 1.0,
            a2: 5.0,
            seed: 3,
            ..TruthParams::default()
        };
        for spec in [
            MatrixFunctionSpec::<f64>::random_factor(&params).unwrap(),
            MatrixFunctionSpec::<f64>::random_diffusion(&params, 1.0).unwrap(),
            MatrixFunctionSpec::<f64>::random_euclidean(&params, 2).unwrap(),
        ] {
            let s = spec.summary(SCALING_GRID).unwrap();
            assert!(s.sup_coordinate <= 1.0 + 1e-9);
            assert!(s.sup_derivative <= 5.0 + 1e-9);
            assert!(s.holder_bound <= 24.0 + 1e-9);
            assert!(s.derivative_ranks[0] <= spec.rank_bound());
            for t in [0.0, 0.3, 0.77, 1.0] {
                let a = spec.evaluate(t).unwrap();
                assert!(a.rank().unwrap() <= spec.rank_bound());
                for idx in BasisIndex::all(6) {
                    assert!((spec.coordinate(t, idx).unwrap() - idx.inner_unchecked(&a)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let params = TruthParams {
            m: 4,
            seed: 11,
            ..TruthParams::default()
        };
        let spec = MatrixFunctionSpec::<f64>::random_factor(&params).unwrap();
        let (_, d1, d2) = spec.evaluate_derivatives(0.4).unwrap();
        let h = 1e-5;
        let fd1 = spec.evaluate(0.4 + h).unwrap().try_sub(&spec.evaluate(0.4 - h).unwrap()).unwrap().scale(0.5 / h);
        assert!(fd1.try_sub(&d1).unwrap().frobenius_norm() < 1e-6);
        let (_, p1, _) = spec.evaluate_derivatives(0.4 + h).unwrap();
        let (_, m1, _) = spec.evaluate_derivatives(0.4 - h).unwrap();
        let fd2 = p1.try_sub(&m1).unwrap().scale(0.5 / h);
        assert!(fd2.try_sub(&d2).unwrap().frobenius_norm() < 1e-4);
    }

    #[test]
    fn zero_truth_noiseless_data_is_zero() {
        let spec = MatrixFunctionSpec::constant(H::zeros(3)).unwrap();
        let data = generate_dataset(&spec, 200, Noise::Uniform { level: 0.0 }, 1).unwrap();
        assert!(data.observations().iter().all(|o| o.y == 0.0));
        assert!(generate_dataset(&spec, 0, Noise::default(), 1).is_err());
    }

    #[test]
    fn generation_is_reproducible() {
        let params = TruthParams {
            m: 5,
            seed: 2,
            ..TruthParams::default()
        };
        let spec = MatrixFunctionSpec::<f64>::random_factor(&params).unwrap();
        let a = generate_dataset(&spec, 500, Noise::default(), 9).unwrap();
        let b = generate_dataset(&spec, 500, Noise::default(), 9).unwrap();
        assert_eq!(a.observations(), b.observations());
        let c = generate_dataset(&spec, 500, Noise::default(), 10).unwrap();
        assert_ne!(a.observations(), c.observations());
    }

    #[test]
    fn basis_draws_are_uniform() {
        // χ² with 3 degrees of freedom; the 1% critical value is 11.345.
        let spec = MatrixFunctionSpec::constant(H::zeros(2)).unwrap();
        let data = generate_dataset(&spec, 10_000, Noise::default(), 5).unwrap();
        let mut counts = [0usize; 4];
        for o in data.observations() {
            counts[o.x.coord(2)] += 1;
        }
        let expected = 2500.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        assert!(chi2 < 11.345, "chi2 = {chi2}");
    }

    #[test]
    fn local_mean_recovers_entry() {
        let params = TruthParams {
            m: 2,
            seed: 4,
            ..TruthParams::default()
        };
        let spec = MatrixFunctionSpec::<f64>::random_factor(&params).unwrap();
        let data = generate_dataset(&spec, 100_000, Noise::Uniform { level: 0.5 }, 8).unwrap();
        let (t0, h) = (0.5, 0.01);
        let ys: Vec<f64> = data
            .window(t0, h)
            .filter(|o| o.x == BasisIndex::diagonal(0))
            .map(|o| o.y)
            .collect();
        let n = ys.len() as f64;
        let mean = ys.iter().sum::<f64>() / n;
        let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let truth = spec.evaluate(t0).unwrap().get(0, 0).re;
        // Smoothing bias over ±h is far below the Monte-Carlo error here.
        assert!((mean - truth).abs() < 3.0 * (var / n).sqrt() + 1e-3, "{mean} vs {truth}");
    }

    #[test]
    fn two_point_noise_has_the_right_mean() {
        let spec = MatrixFunctionSpec::constant(H::from_real_diagonal(&[0.4])).unwrap();
        let data = generate_dataset(&spec, 40_000, Noise::TwoPoint { bound: 1.0 }, 6).unwrap();
        assert!(data.observations().iter().all(|o| o.y.abs() == 1.0));
        let mean = data.observations().iter().map(|o| o.y).sum::<f64>() / 40_000.0;
        assert!((mean - 0.4).abs() < 0.02);
    }

    #[test]
    fn dataset_validation_and_windows() {
        let obs = vec![
            Observation { tau: 0.9, x: BasisIndex::diagonal(0), y: 0.1 },
            Observation { tau: 0.1, x: BasisIndex::diagonal(1), y: -0.2 },
            Observation { tau: 0.5, x: BasisIndex::real_sym(0, 1), y: 0.3 },
        ];
        let d = Dataset::new(obs.clone(), 2, 1.0, 0, "t").unwrap();
        let taus: Vec<f64> = d.in_range(0.0, 1.0).map(|o| o.tau).collect();
        assert_eq!(taus, vec![0.1, 0.5, 0.9]);
        assert_eq!(d.window(0.5, 0.4).count(), 3);
        assert_eq!(d.window(0.5, 0.39).count(), 1);

        let mut bad = obs.clone();
        bad[0].y = 2.0;
        assert!(Dataset::new(bad, 2, 1.0, 0, "t").is_err());
        let mut bad = obs;
        bad[0].x = BasisIndex::diagonal(5);
        assert!(Dataset::new(bad, 2, 1.0, 0, "t").is_err());
    }

    #[test]
    fn csv_round_trip() {
        let params = TruthParams {
            m: 3,
            seed: 1,
            ..TruthParams::default()
        };
        let spec = MatrixFunctionSpec::<f64>::random_factor(&params).unwrap();
        let data = generate_dataset(&spec, 50, Noise::default(), 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        data.save(&path).unwrap();
        let back = Dataset::<f64>::load(&path).unwrap();
        assert_eq!(back.observations(), data.observations());
        assert_eq!(back.meta(), data.meta());
    }
}
