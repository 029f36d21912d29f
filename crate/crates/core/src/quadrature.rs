//! Gauss rules on `[-1, 1]`.

use std::f64::consts::PI;

/// Nodes and weights of a quadrature rule.
#[derive(Clone, Debug)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Default node count; exact for polynomial integrands up to degree 127.
pub const DEFAULT_NODES: usize = 64;

/// Gauss–Legendre rule (weight 1), computed by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> Rule {
    assert!(n > 0, "quadrature needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = n.div_ceil(2);
    for i in 0..half {
        // Tricomi initial guess.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    Rule { nodes, weights }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss–Chebyshev rule of the second kind: integrates `sqrt(1-u²) f(u)`
/// exactly for polynomials `f` of degree up to `2n - 1`.
pub fn gauss_chebyshev_second(n: usize) -> Rule {
    assert!(n > 0, "quadrature needs at least one node");
    let np1 = n as f64 + 1.0;
    let (nodes, weights) = (1..=n)
        .map(|k| {
            let theta = k as f64 * PI / np1;
            (theta.cos(), PI / np1 * theta.sin().powi(2))
        })
        .unzip();
    Rule { nodes, weights }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_rule_integrates_polynomials_exactly() {
        let rule = gauss_legendre(DEFAULT_NODES);
        assert!((rule.integrate(|_| 1.0) - 2.0).abs() < 1e-13);
        assert!((rule.integrate(|x| x.powi(126)) - 2.0 / 127.0).abs() < 1e-13);
        assert!(rule.integrate(|x| x.powi(5)).abs() < 1e-14);
    }

    #[test]
    fn odd_node_count_includes_origin() {
        let rule = gauss_legendre(5);
        assert!(rule.nodes[2].abs() < 1e-15);
        assert!((rule.integrate(|x| x * x) - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn chebyshev_rule_weights_sum_to_half_pi() {
        let rule = gauss_chebyshev_second(DEFAULT_NODES);
        assert!((rule.integrate(|_| 1.0) - PI / 2.0).abs() < 1e-13);
        // ∫ sqrt(1-u²) u² du = π/8
        assert!((rule.integrate(|u| u * u) - PI / 8.0).abs() < 1e-13);
    }
}
