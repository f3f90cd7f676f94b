//! Gauss–Hermite quadrature for Gaussian expectations.

use std::sync::OnceLock;

use nalgebra::{DMatrix, SymmetricEigen};

pub const GH_NODES: usize = 20;

/// Nodes and weights for `∫ e^{−x²} g(x) dx`, by Golub–Welsch.
#[derive(Clone, Debug)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(n: usize) -> Self {
        let jacobi = DMatrix::from_fn(n, n, |i, j| {
            if i + 1 == j || j + 1 == i {
                (i.max(j) as f64 / 2.0).sqrt()
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(jacobi);
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|k| {
                let v0 = eig.eigenvectors[(0, k)];
                (eig.eigenvalues[k], std::f64::consts::PI.sqrt() * v0 * v0)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        }
    }

    /// The shared 20-node rule.
    pub fn standard() -> &'static Self {
        static RULE: OnceLock<GaussHermite> = OnceLock::new();
        RULE.get_or_init(|| Self::new(GH_NODES))
    }

    /// `E[g(f)]` for `f ~ N(μ, v)`.
    pub fn expectation(&self, mu: f64, v: f64, mut g: impl FnMut(f64) -> f64) -> f64 {
        let scale = (2.0 * v).sqrt();
        let total: f64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * g(mu + scale * x))
            .sum();
        total / std::f64::consts::PI.sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_gaussian_moments() {
        let gh = GaussHermite::standard();
        assert!((gh.weights.iter().sum::<f64>() - std::f64::consts::PI.sqrt()).abs() < 1e-13);
        let (mu, v) = (0.7, 1.9);
        assert!((gh.expectation(mu, v, |f| f) - mu).abs() < 1e-13);
        assert!((gh.expectation(mu, v, |f| f * f) - (mu * mu + v)).abs() < 1e-12);
        let fourth = mu.powi(4) + 6.0 * mu * mu * v + 3.0 * v * v;
        assert!((gh.expectation(mu, v, |f| f.powi(4)) - fourth).abs() < 1e-11);
        // lognormal mean
        let want = (mu + v / 2.0).exp();
        assert!((gh.expectation(mu, v, f64::exp) / want - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nodes_are_symmetric() {
        let gh = GaussHermite::new(7);
        for i in 0..7 {
            assert!((gh.nodes[i] + gh.nodes[6 - i]).abs() < 1e-13);
            assert!((gh.weights[i] - gh.weights[6 - i]).abs() < 1e-13);
        }
        assert!(gh.nodes[3].abs() < 1e-14);
    }

    #[test]
    fn zero_variance_is_point_evaluation() {
        let gh = GaussHermite::standard();
        let v = gh.expectation(0.3, 0.0, |f| f.sin());
        assert!((v - 0.3f64.sin()).abs() < 1e-14);
    }
}
