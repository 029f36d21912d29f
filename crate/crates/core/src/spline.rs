//! Natural cubic interpolating splines on uniform knots over `[0, 1]`.

use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct CubicSpline<T: Real> {
    values: Vec<T>,
    /// Second derivatives at the knots.
    curvature: Vec<T>,
}

impl<T: Real> CubicSpline<T> {
    /// Interpolates `values` at the knots `k / (values.len() - 1)`.
    ///
    /// Panics if fewer than two values are given.
    pub fn natural(values: Vec<T>) -> Self {
        let n = values.len();
        assert!(n >= 2, "a spline needs at least two knots");
        let h = T::one() / T::from_count(n - 1);
        let mut curvature = vec![T::zero(); n];
        if n > 2 {
            // Thomas algorithm for h/6 M_{i-1} + 2h/3 M_i + h/6 M_{i+1} = rhs_i.
            let inner = n - 2;
            let six = T::lit(6.0);
            let diag = T::lit(4.0);
            let mut c = vec![T::zero(); inner];
            let mut d = vec![T::zero(); inner];
            for i in 0..inner {
                let rhs = six * (values[i + 2] - values[i + 1] * T::lit(2.0) + values[i]) / (h * h);
                if i == 0 {
                    c[0] = T::one() / diag;
                    d[0] = rhs / diag;
                } else {
                    let denom = diag - c[i - 1];
                    c[i] = T::one() / denom;
                    d[i] = (rhs - d[i - 1]) / denom;
                }
            }
            for i in (0..inner).rev() {
                let next = if i + 1 < inner { curvature[i + 2] } else { T::zero() };
                curvature[i + 1] = d[i] - c[i] * next;
            }
        }
        Self { values, curvature }
    }

    pub fn knots(&self) -> usize {
        self.values.len()
    }

    /// Value, first and second derivative at `t` (clamped into `[0, 1]`).
    pub fn eval3(&self, t: T) -> (T, T, T) {
        let n = self.values.len();
        let segments = n - 1;
        let t = t.max(T::zero()).min(T::one());
        let h = T::one() / T::from_count(segments);
        let pos = t / h;
        let mut i = pos.floor().to_usize().unwrap_or(0);
        if i >= segments {
            i = segments - 1;
        }
        let x0 = T::from_count(i) * h;
        let a = (x0 + h - t) / h;
        let b = T::one() - a;
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.curvature[i], self.curvature[i + 1]);
        let six = T::lit(6.0);
        let value = a * y0 + b * y1 + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / six;
        let d1 = (y1 - y0) / h - (T::lit(3.0) * a * a - T::one()) * h / six * m0
            + (T::lit(3.0) * b * b - T::one()) * h / six * m1;
        let d2 = a * m0 + b * m1;
        (value, d1, d2)
    }

    pub fn eval(&self, t: T) -> T {
        self.eval3(t).0
    }
}
