//! Hermitian matrix arithmetic, Schatten norms and the nuclear-norm proximal
//! operator.
//!
//! Every [`HermitianMatrix`] is conjugate-symmetric bit for bit: constructors
//! either fill the upper triangle and mirror it, or average a dense input with
//! its adjoint, which yields exact symmetry and a purely real diagonal.

use std::io::{BufRead, Write};
use std::ops::{Add, Mul, Sub};

use nalgebra::{Complex, DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Relative cut-off below which an eigenvalue counts as zero for rank reporting.
pub const RANK_TOLERANCE: f64 = 1e-12;

const EIGEN_MAX_SWEEPS: usize = 100_000;

/// Dense complex Hermitian matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianMatrix<T: Real> {
    data: DMatrix<Complex<T>>,
}

/// Frobenius, operator and nuclear norms of one matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Norms<T> {
    pub frobenius: T,
    pub operator: T,
    pub nuclear: T,
}

/// Eigenvalues (ascending) and unitary eigenvectors of a Hermitian matrix.
#[derive(Clone, Debug)]
pub struct Eigen<T: Real> {
    pub values: Vec<T>,
    pub vectors: DMatrix<Complex<T>>,
}

impl<T: Real> HermitianMatrix<T> {
    pub fn zeros(m: usize) -> Self {
        Self {
            data: DMatrix::from_element(m, m, Complex::new(T::zero(), T::zero())),
        }
    }

    pub fn identity(m: usize) -> Self {
        Self::from_real_diagonal(&vec![T::one(); m])
    }

    pub fn from_real_diagonal(diag: &[T]) -> Self {
        let mut out = Self::zeros(diag.len());
        for (k, &d) in diag.iter().enumerate() {
            out.data[(k, k)] = Complex::new(d, T::zero());
        }
        out
    }

    /// Builds a matrix from a generator evaluated on the upper triangle
    /// (`row <= col`); the lower triangle is the mirrored conjugate and the
    /// diagonal keeps only the real part.
    pub fn from_upper_fn(m: usize, mut f: impl FnMut(usize, usize) -> Complex<T>) -> Self {
        let mut data = DMatrix::from_element(m, m, Complex::new(T::zero(), T::zero()));
        for r in 0..m {
            data[(r, r)] = Complex::new(f(r, r).re, T::zero());
            for c in (r + 1)..m {
                let v = f(r, c);
                data[(r, c)] = v;
                data[(c, r)] = v.conj();
            }
        }
        Self { data }
    }

    /// Projects an arbitrary square matrix onto the Hermitian subspace,
    /// `(A + A^*) / 2`.
    pub fn from_dense(a: &DMatrix<Complex<T>>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::DimensionMismatch {
                expected: a.nrows(),
                found: a.ncols(),
            });
        }
        let half = T::lit(0.5);
        let m = a.nrows();
        Ok(Self::from_upper_fn(m, |r, c| {
            (a[(r, c)] + a[(c, r)].conj()) * half
        }))
    }

    /// Real symmetric input, row-major.
    pub fn from_real_rows(m: usize, rows: &[T]) -> Result<Self> {
        if rows.len() != m * m {
            return Err(Error::DimensionMismatch {
                expected: m * m,
                found: rows.len(),
            });
        }
        let dense = DMatrix::from_fn(m, m, |r, c| Complex::new(rows[r * m + c], T::zero()));
        Self::from_dense(&dense)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex<T> {
        self.data[(row, col)]
    }

    /// Sets entry `(row, col)` and its mirror.
    pub fn set(&mut self, row: usize, col: usize, value: Complex<T>) {
        if row == col {
            self.data[(row, row)] = Complex::new(value.re, T::zero());
        } else {
            self.data[(row, col)] = value;
            self.data[(col, row)] = value.conj();
        }
    }

    pub fn as_dense(&self) -> &DMatrix<Complex<T>> {
        &self.data
    }

    /// Exhaustive conjugate-symmetry check.
    pub fn is_exactly_hermitian(&self) -> bool {
        let m = self.dim();
        (0..m).all(|r| {
            self.data[(r, r)].im == T::zero()
                && ((r + 1)..m).all(|c| self.data[(r, c)] == self.data[(c, r)].conj())
        })
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            data: self.data.map(|z| z * s),
        }
    }

    fn check_dim(&self, other: &Self) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(())
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        Ok(Self {
            data: &self.data + &other.data,
        })
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        Ok(Self {
            data: &self.data - &other.data,
        })
    }

    /// Adds `s * other` in place.
    pub fn axpy(&mut self, s: T, other: &Self) -> Result<()> {
        self.check_dim(other)?;
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += *b * s;
        }
        Ok(())
    }

    /// Hilbert–Schmidt inner product `tr(AB)`, real for Hermitian arguments.
    pub fn inner(&self, other: &Self) -> Result<T> {
        self.check_dim(other)?;
        Ok(self
            .data
            .iter()
            .zip(other.data.iter())
            .fold(T::zero(), |acc, (a, b)| acc + a.re * b.re + a.im * b.im))
    }

    pub fn frobenius_norm_sq(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |acc, z| acc + z.re * z.re + z.im * z.im)
    }

    pub fn frobenius_norm(&self) -> T {
        self.frobenius_norm_sq().sqrt()
    }

    pub fn eigen(&self) -> Result<Eigen<T>> {
        if self.data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Decomposition("non-finite matrix entry".into()));
        }
        if self.dim() == 0 {
            return Ok(Eigen {
                values: Vec::new(),
                vectors: self.data.clone(),
            });
        }
        let eig = SymmetricEigen::try_new(self.data.clone(), T::default_epsilon(), EIGEN_MAX_SWEEPS)
            .ok_or_else(|| Error::Decomposition("QR iteration did not converge".into()))?;
        let mut order: Vec<usize> = (0..self.dim()).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[a]
                .partial_cmp(&eig.eigenvalues[b])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = DMatrix::from_fn(self.dim(), self.dim(), |r, c| eig.eigenvectors[(r, order[c])]);
        Ok(Eigen { values, vectors })
    }

    /// Singular values of a Hermitian matrix are the absolute eigenvalues.
    pub fn singular_values(&self) -> Result<Vec<T>> {
        let mut s: Vec<T> = self.eigen()?.values.into_iter().map(|v| v.abs()).collect();
        s.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
        Ok(s)
    }

    pub fn norms(&self) -> Result<Norms<T>> {
        let s = self.singular_values()?;
        Ok(Norms {
            frobenius: self.frobenius_norm(),
            operator: s.first().copied().unwrap_or_else(T::zero),
            nuclear: s.iter().fold(T::zero(), |acc, &v| acc + v),
        })
    }

    pub fn operator_norm(&self) -> Result<T> {
        Ok(self.norms()?.operator)
    }

    pub fn nuclear_norm(&self) -> Result<T> {
        Ok(self.norms()?.nuclear)
    }

    /// Numerical rank: eigenvalues with `|λ| <= 1e-12 * ||A||` count as zero.
    pub fn rank(&self) -> Result<usize> {
        let s = self.singular_values()?;
        let top = s.first().copied().unwrap_or_else(T::zero);
        if top == T::zero() {
            return Ok(0);
        }
        let cut = top * T::lit(RANK_TOLERANCE);
        Ok(s.iter().filter(|&&v| v > cut).count())
    }

    /// Proximal map of `threshold * ||.||_1`: each eigenvalue moves toward
    /// zero by `threshold`, keeping its sign and stopping at zero.
    pub fn soft_threshold(&self, threshold: T) -> Result<Self> {
        if threshold < T::zero() || !threshold.is_finite() {
            return Err(Error::param("threshold", "must be a finite nonnegative number"));
        }
        if threshold == T::zero() {
            return Ok(self.clone());
        }
        let eig = self.eigen()?;
        Ok(reconstruct(&eig, |v| shrink(v, threshold)))
    }

    /// [`Self::soft_threshold`] together with the nuclear norm of the result,
    /// sharing one eigendecomposition.
    pub fn soft_threshold_with_nuclear(&self, threshold: T) -> Result<(Self, T)> {
        if threshold < T::zero() || !threshold.is_finite() {
            return Err(Error::param("threshold", "must be a finite nonnegative number"));
        }
        let eig = self.eigen()?;
        let nuclear = eig
            .values
            .iter()
            .fold(T::zero(), |acc, &v| acc + shrink(v, threshold).abs());
        Ok((reconstruct(&eig, |v| shrink(v, threshold)), nuclear))
    }

    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        let m = self.dim();
        writeln!(w, "{m}")?;
        for r in 0..m {
            for c in r..m {
                let z = self.data[(r, c)];
                writeln!(w, "{r} {c} {} {}", z.re, z.im)?;
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_text(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("ascii output")
    }

    /// Parses the text format: a header line `m`, then `row col re im`
    /// lines (zero-based). Lower-triangle lines are mirrored into the upper
    /// triangle; absent entries are zero.
    pub fn read_text<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader
            .lines()
            .enumerate()
            .filter(|(_, l)| l.as_ref().map(|s| !s.trim().is_empty()).unwrap_or(true));
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "missing dimension header".into(),
        })?;
        let m: usize = header?.trim().parse().map_err(|_| Error::Parse {
            line: 1,
            message: "dimension header is not an integer".into(),
        })?;
        let mut out = Self::zeros(m);
        for (idx, line) in lines {
            let line = line?;
            let lineno = idx + 1;
            let bad = |message: &str| Error::Parse {
                line: lineno,
                message: message.into(),
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(bad("expected `row col re im`"));
            }
            let r: usize = fields[0].parse().map_err(|_| bad("bad row index"))?;
            let c: usize = fields[1].parse().map_err(|_| bad("bad column index"))?;
            let re: T = fields[2].parse().map_err(|_| bad("bad real part"))?;
            let im: T = fields[3].parse().map_err(|_| bad("bad imaginary part"))?;
            if r >= m || c >= m {
                return Err(bad("entry index outside the declared dimension"));
            }
            if r <= c {
                out.set(r, c, Complex::new(re, im));
            } else {
                out.set(c, r, Complex::new(re, -im));
            }
        }
        Ok(out)
    }

    pub fn from_text(s: &str) -> Result<Self> {
        Self::read_text(s.as_bytes())
    }
}

#[inline]
fn shrink<T: Real>(v: T, t: T) -> T {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        T::zero()
    }
}

/// `U diag(f(λ)) U^*`, skipping zero terms.
fn reconstruct<T: Real>(eig: &Eigen<T>, f: impl Fn(T) -> T) -> HermitianMatrix<T> {
    let m = eig.values.len();
    let mut out = DMatrix::from_element(m, m, Complex::new(T::zero(), T::zero()));
    for (k, &v) in eig.values.iter().enumerate() {
        let lam = f(v);
        if lam == T::zero() {
            continue;
        }
        let u = eig.vectors.column(k);
        for c in 0..m {
            let uc = u[c].conj() * lam;
            for r in 0..=c {
                out[(r, c)] += u[r] * uc;
            }
        }
    }
    HermitianMatrix::from_upper_fn(m, |r, c| out[(r, c)])
}

impl<T: Real> Add for &HermitianMatrix<T> {
    type Output = HermitianMatrix<T>;
    fn add(self, rhs: Self) -> HermitianMatrix<T> {
        self.try_add(rhs).expect("dimension mismatch in Hermitian addition")
    }
}

impl<T: Real> Sub for &HermitianMatrix<T> {
    type Output = HermitianMatrix<T>;
    fn sub(self, rhs: Self) -> HermitianMatrix<T> {
        self.try_sub(rhs).expect("dimension mismatch in Hermitian subtraction")
    }
}

impl<T: Real> Mul<T> for &HermitianMatrix<T> {
    type Output = HermitianMatrix<T>;
    fn mul(self, rhs: T) -> HermitianMatrix<T> {
        self.scale(rhs)
    }
}

/// Block-diagonal Hermitian matrix `Diag[S_0, ..., S_l]` with equal block sizes.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockDiagMatrix<T: Real> {
    blocks: Vec<HermitianMatrix<T>>,
}

impl<T: Real> BlockDiagMatrix<T> {
    pub fn new(blocks: Vec<HermitianMatrix<T>>) -> Result<Self> {
        let m = blocks
            .first()
            .map(HermitianMatrix::dim)
            .ok_or_else(|| Error::param("blocks", "at least one block is required"))?;
        if let Some(b) = blocks.iter().find(|b| b.dim() != m) {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: b.dim(),
            });
        }
        Ok(Self { blocks })
    }

    pub fn zeros(num_blocks: usize, m: usize) -> Self {
        Self {
            blocks: vec![HermitianMatrix::zeros(m); num_blocks.max(1)],
        }
    }

    pub fn blocks(&self) -> &[HermitianMatrix<T>] {
        &self.blocks
    }

    pub fn into_blocks(self) -> Vec<HermitianMatrix<T>> {
        self.blocks
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn block_dim(&self) -> usize {
        self.blocks[0].dim()
    }

    /// Sum of block nuclear norms, which is the nuclear norm of the full
    /// block-diagonal matrix.
    pub fn nuclear_norm(&self) -> Result<T> {
        self.blocks
            .iter()
            .try_fold(T::zero(), |acc, b| Ok(acc + b.nuclear_norm()?))
    }

    pub fn frobenius_norm_sq(&self) -> T {
        self.blocks
            .iter()
            .fold(T::zero(), |acc, b| acc + b.frobenius_norm_sq())
    }

    pub fn soft_threshold(&self, threshold: T) -> Result<Self> {
        let blocks = self
            .blocks
            .iter()
            .map(|b| b.soft_threshold(threshold))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { blocks })
    }
}

/// `⟨A, B⟩ = tr(AB)`.
pub fn frobenius_inner<T: Real>(a: &HermitianMatrix<T>, b: &HermitianMatrix<T>) -> Result<T> {
    a.inner(b)
}

pub fn norms<T: Real>(a: &HermitianMatrix<T>) -> Result<Norms<T>> {
    a.norms()
}

pub fn svd_soft_threshold<T: Real>(a: &HermitianMatrix<T>, threshold: T) -> Result<HermitianMatrix<T>> {
    a.soft_threshold(threshold)
}

pub fn block_soft_threshold<T: Real>(s: &BlockDiagMatrix<T>, threshold: T) -> Result<BlockDiagMatrix<T>> {
    s.soft_threshold(threshold)
}
