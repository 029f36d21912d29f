//! Orthonormal polynomial systems on `[-1, 1]`, the monomial-to-orthonormal
//! transform, and higher-order smoothing kernels.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{self, Rule};
use crate::scalar::Real;

/// Number of equal intervals of the grid on `[-1, 1]` used to evaluate
/// `Φ = max_i ||sqrt(K) p_i||_∞` (the grid contains both ends and the origin).
pub const PHI_GRID_POINTS: usize = 10_000;

/// Polynomial family together with its weight function.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolyFamily {
    /// Normalized Legendre polynomials, weight `1{|u| <= 1}`.
    LegendreBox,
    /// Normalized Chebyshev polynomials of the second kind, weight `sqrt(1 - u²)`.
    ChebyshevU,
}

impl std::str::FromStr for PolyFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "legendre_box" | "legendre" => Ok(Self::LegendreBox),
            "chebyshev_u" | "chebyshev" => Ok(Self::ChebyshevU),
            other => Err(Error::param("family", format!("unsupported polynomial family `{other}`"))),
        }
    }
}

/// Evaluates a polynomial given by monomial coefficients (constant first).
#[inline]
pub fn horner<T: Real>(coeffs: &[T], u: T) -> T {
    coeffs.iter().rev().fold(T::zero(), |acc, &c| acc * u + c)
}

/// Orthonormal polynomials `p_0, ..., p_l` with `∫ K p_i p_j = δ_ij`.
#[derive(Clone, Debug)]
pub struct OrthoPolyBasis<T: Real> {
    family: PolyFamily,
    degree: usize,
    coeffs: Vec<Vec<T>>,
    phi: T,
}

impl<T: Real> OrthoPolyBasis<T> {
    pub fn new(family: PolyFamily, degree: usize) -> Self {
        let coeffs64 = match family {
            PolyFamily::LegendreBox => legendre_coefficients(degree)
                .into_iter()
                .enumerate()
                .map(|(n, c)| scale(c, ((2 * n + 1) as f64 / 2.0).sqrt()))
                .collect::<Vec<_>>(),
            PolyFamily::ChebyshevU => chebyshev_u_coefficients(degree)
                .into_iter()
                .map(|c| scale(c, (2.0 / PI).sqrt()))
                .collect(),
        };
        let phi = sup_weighted(family, &coeffs64, PHI_GRID_POINTS + 1);
        Self {
            family,
            degree,
            coeffs: coeffs64
                .into_iter()
                .map(|c| c.into_iter().map(T::lit).collect())
                .collect(),
            phi: T::lit(phi),
        }
    }

    pub fn family(&self) -> PolyFamily {
        self.family
    }

    /// Highest polynomial degree `l`; the basis has `l + 1` members.
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.degree + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Monomial coefficients of `p_i`, constant term first.
    pub fn coefficients(&self, i: usize) -> &[T] {
        &self.coeffs[i]
    }

    pub fn phi(&self) -> T {
        self.phi
    }

    /// Weight function, zero outside `[-1, 1]`.
    pub fn weight(&self, u: T) -> T {
        if u.abs() > T::one() {
            return T::zero();
        }
        match self.family {
            PolyFamily::LegendreBox => T::one(),
            PolyFamily::ChebyshevU => (T::one() - u * u).max(T::zero()).sqrt(),
        }
    }

    pub fn eval(&self, i: usize, u: T) -> Result<T> {
        let c = self
            .coeffs
            .get(i)
            .ok_or_else(|| Error::IndexOutOfRange(format!("polynomial {i} > degree {}", self.degree)))?;
        Ok(horner(c, u))
    }

    /// Writes `p_0(u), ..., p_l(u)` into `out`.
    #[inline]
    pub fn eval_all(&self, u: T, out: &mut [T]) {
        for (o, c) in out.iter_mut().zip(&self.coeffs) {
            *o = horner(c, u);
        }
    }

    /// Rule integrating `K(u) f(u)` exactly for polynomial `f` of degree below `2n`.
    pub fn weighted_rule(&self, n: usize) -> Rule {
        match self.family {
            PolyFamily::LegendreBox => quadrature::gauss_legendre(n),
            PolyFamily::ChebyshevU => quadrature::gauss_chebyshev_second(n),
        }
    }

    /// `G_ij = ∫ K p_i p_j` by quadrature.
    pub fn gram_matrix(&self, nodes: usize) -> DMatrix<f64> {
        let rule = self.weighted_rule(nodes);
        let len = self.len();
        DMatrix::from_fn(len, len, |i, j| {
            rule.integrate(|u| {
                let u = T::lit(u);
                (horner(&self.coeffs[i], u) * horner(&self.coeffs[j], u)).as_f64()
            })
        })
    }

    /// Lower-triangular `T` with `(1, t, t²/2!, ..., t^l/l!) = T (p_0, ..., p_l)`.
    pub fn monomial_transform(&self) -> Result<MonomialTransform> {
        let rule = self.weighted_rule(quadrature::DEFAULT_NODES);
        let len = self.len();
        let mut t = DMatrix::zeros(len, len);
        let mut fact = 1.0;
        for i in 0..len {
            if i > 0 {
                fact *= i as f64;
            }
            for k in 0..=i {
                t[(i, k)] = rule.integrate(|u| {
                    u.powi(i as i32) / fact * horner(&self.coeffs[k], T::lit(u)).as_f64()
                });
            }
        }
        if (0..len).any(|i| t[(i, i)].abs() < 1e-14) {
            return Err(Error::Decomposition(
                "monomial transform is singular; basis coefficients are degenerate".into(),
            ));
        }
        let r_t = (0..len)
            .map(|j| (0..len).map(|i| f64::abs(t[(i, j)])).sum::<f64>())
            .fold(0.0, f64::max);
        Ok(MonomialTransform {
            degree: self.degree,
            matrix: t,
            r_t,
        })
    }
}

pub fn build_basis<T: Real>(family: PolyFamily, degree: usize) -> OrthoPolyBasis<T> {
    OrthoPolyBasis::new(family, degree)
}

pub fn eval_poly<T: Real>(basis: &OrthoPolyBasis<T>, i: usize, u: T) -> Result<T> {
    basis.eval(i, u)
}

/// Change of basis from scaled monomials to the orthonormal system.
#[derive(Clone, Debug)]
pub struct MonomialTransform {
    pub degree: usize,
    pub matrix: DMatrix<f64>,
    /// Largest column absolute sum of `matrix`.
    pub r_t: f64,
}

fn scale(mut c: Vec<f64>, s: f64) -> Vec<f64> {
    c.iter_mut().for_each(|v| *v *= s);
    c
}

fn legendre_coefficients(degree: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = vec![vec![1.0]];
    if degree >= 1 {
        out.push(vec![0.0, 1.0]);
    }
    for n in 1..degree {
        // (n+1) P_{n+1} = (2n+1) x P_n - n P_{n-1}
        let nf = n as f64;
        let mut next = vec![0.0; n + 2];
        for (k, &c) in out[n].iter().enumerate() {
            next[k + 1] += (2.0 * nf + 1.0) * c;
        }
        for (k, &c) in out[n - 1].iter().enumerate() {
            next[k] -= nf * c;
        }
        out.push(next.into_iter().map(|c| c / (nf + 1.0)).collect());
    }
    out
}

fn chebyshev_u_coefficients(degree: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = vec![vec![1.0]];
    if degree >= 1 {
        out.push(vec![0.0, 2.0]);
    }
    for n in 1..degree {
        // U_{n+1} = 2x U_n - U_{n-1}
        let mut next = vec![0.0; n + 2];
        for (k, &c) in out[n].iter().enumerate() {
            next[k + 1] += 2.0 * c;
        }
        for (k, &c) in out[n - 1].iter().enumerate() {
            next[k] -= c;
        }
        out.push(next);
    }
    out
}

fn family_weight(family: PolyFamily, u: f64) -> f64 {
    match family {
        PolyFamily::LegendreBox => 1.0,
        PolyFamily::ChebyshevU => (1.0 - u * u).max(0.0).sqrt(),
    }
}

/// `max_i sup_{|u|<=1} |sqrt(K(u)) p_i(u)|` on a uniform grid including both ends.
pub fn sup_weighted(family: PolyFamily, coeffs: &[Vec<f64>], grid_points: usize) -> f64 {
    let g = grid_points.max(2);
    (0..g)
        .map(|k| -1.0 + 2.0 * k as f64 / (g - 1) as f64)
        .flat_map(|u| {
            let w = family_weight(family, u).sqrt();
            coeffs.iter().map(move |c| (w * horner(c, u)).abs())
        })
        .fold(0.0, f64::max)
}

/// Kernel of order `l` built from orthonormal Legendre polynomials:
/// `K(u) = Σ_j φ_j(0) φ_j(u)` on `[-1, 1]`.
#[derive(Clone, Debug)]
pub struct HigherOrderKernel<T: Real> {
    order: usize,
    coeffs: Vec<T>,
    /// `∫ K²`.
    pub r_k: f64,
    /// Lipschitz constant of the polynomial part on `[-1, 1]`.
    pub lipschitz: f64,
}

impl<T: Real> HigherOrderKernel<T> {
    pub fn new(order: usize) -> Self {
        let phis: Vec<Vec<f64>> = legendre_coefficients(order)
            .into_iter()
            .enumerate()
            .map(|(n, c)| scale(c, ((2 * n + 1) as f64 / 2.0).sqrt()))
            .collect();
        let mut coeffs = vec![0.0; order + 1];
        for phi in &phis {
            let at_zero = phi[0];
            for (k, &c) in phi.iter().enumerate() {
                coeffs[k] += at_zero * c;
            }
        }
        let rule = quadrature::gauss_legendre(quadrature::DEFAULT_NODES);
        let r_k = rule.integrate(|u| horner(&coeffs, u).powi(2));
        let deriv: Vec<f64> = coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, &c)| k as f64 * c)
            .collect();
        let lipschitz = (0..=PHI_GRID_POINTS)
            .map(|k| -1.0 + 2.0 * k as f64 / PHI_GRID_POINTS as f64)
            .map(|u| horner(&deriv, u).abs())
            .fold(0.0, f64::max);
        Self {
            order,
            coeffs: coeffs.into_iter().map(T::lit).collect(),
            r_k,
            lipschitz,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn coefficients(&self) -> &[T] {
        &self.coeffs
    }

    /// Kernel value; zero for `|u| > 1`.
    #[inline]
    pub fn eval(&self, u: T) -> T {
        if u.abs() > T::one() {
            T::zero()
        } else {
            horner(&self.coeffs, u)
        }
    }

    /// `∫ u^k K(u) du`.
    pub fn moment(&self, k: usize) -> f64 {
        let rule = quadrature::gauss_legendre(quadrature::DEFAULT_NODES);
        let c: Vec<f64> = self.coeffs.iter().map(|v| v.as_f64()).collect();
        rule.integrate(|u| u.powi(k as i32) * horner(&c, u))
    }
}

pub fn build_order_kernel<T: Real>(order: usize) -> HigherOrderKernel<T> {
    HigherOrderKernel::new(order)
}

pub fn eval_kernel<T: Real>(kernel: &HigherOrderKernel<T>, u: T) -> T {
    kernel.eval(u)
}
