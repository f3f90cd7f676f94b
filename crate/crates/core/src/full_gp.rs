//! Dense GP baseline with per-observation noise.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::grid::Point;
use crate::regression::Prediction;
use crate::spectral::KernelSpec;

const LOG_2PI: f64 = 1.8378770664093453;
const JITTER_RETRIES: usize = 3;

#[derive(Clone, Debug)]
pub struct DenseGPModel {
    pub kernel: KernelSpec,
    /// Added to the diagonal of every training covariance.
    pub jitter: f64,
    pub exec: Execution,
}

impl DenseGPModel {
    /// Jitter defaults to `1e-8·σ_f²`.
    pub fn new(kernel: KernelSpec) -> Result<Self> {
        kernel.validate()?;
        Ok(Self {
            jitter: 1e-8 * kernel.variance,
            kernel,
            exec: Execution::default(),
        })
    }

    pub fn cross_covariance(&self, a: &[Point], b: &[Point]) -> DMatrix<f64> {
        let rows = exec::map_indices(self.exec, a.len(), |i| {
            b.iter()
                .map(|q| self.kernel.covariance(&[a[i][0] - q[0], a[i][1] - q[1]]))
                .collect::<Vec<_>>()
        });
        DMatrix::from_fn(a.len(), b.len(), |i, j| rows[i][j])
    }

    fn factor(&self, x: &[Point], noise: &[f64]) -> Result<Cholesky<f64, Dyn>> {
        if noise.len() != x.len() {
            return Err(Error::Dimension {
                expected: x.len(),
                actual: noise.len(),
            });
        }
        if let Some(v) = noise.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::arg(format!("observation noise must be non-negative, got {v}")));
        }
        let mut k = self.cross_covariance(x, x);
        for (i, s) in noise.iter().enumerate() {
            k[(i, i)] += s;
        }
        let mut jitter = self.jitter;
        for attempt in 0..=JITTER_RETRIES {
            let mut kj = k.clone();
            for i in 0..x.len() {
                kj[(i, i)] += jitter;
            }
            if let Some(c) = Cholesky::new(kj) {
                return Ok(c);
            }
            if attempt < JITTER_RETRIES {
                jitter *= 10.0;
            }
        }
        Err(Error::Factorization(format!(
            "dense {n}×{n} covariance is not positive definite with jitter {jitter:.1e}",
            n = x.len()
        )))
    }

    fn check(x: &[Point], y: &[f64]) -> Result<()> {
        if x.len() != y.len() {
            return Err(Error::Dimension {
                expected: x.len(),
                actual: y.len(),
            });
        }
        if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
            return Err(Error::arg("observations must be finite"));
        }
        Ok(())
    }

    /// Predictive mean and latent variance at `xs`.
    pub fn predict(&self, x: &[Point], y: &[f64], noise: &[f64], xs: &[Point]) -> Result<Prediction> {
        Self::check(x, y)?;
        if x.is_empty() {
            return Ok(Prediction {
                mean: vec![0.0; xs.len()],
                variance: vec![self.kernel.variance; xs.len()],
            });
        }
        let chol = self.factor(x, noise)?;
        let alpha = chol.solve(&DVector::from_column_slice(y));
        let ks = self.cross_covariance(xs, x);
        let mean = (&ks * alpha).iter().copied().collect();
        let mut v = ks.transpose();
        let solved = chol.l().solve_lower_triangular_mut(&mut v);
        debug_assert!(solved);
        let variance = v
            .column_iter()
            .map(|c| (self.kernel.variance - c.norm_squared()).max(0.0))
            .collect();
        Ok(Prediction { mean, variance })
    }

    /// Negative log marginal likelihood with per-point noise.
    pub fn nlml(&self, x: &[Point], y: &[f64], noise: &[f64]) -> Result<f64> {
        Self::check(x, y)?;
        if x.is_empty() {
            return Err(Error::arg("marginal likelihood needs at least one observation"));
        }
        let chol = self.factor(x, noise)?;
        let yv = DVector::from_column_slice(y);
        let alpha = chol.solve(&yv);
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Ok(0.5 * yv.dot(&alpha) + 0.5 * log_det + 0.5 * x.len() as f64 * LOG_2PI)
    }
}
