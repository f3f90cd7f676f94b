//! Reduced-rank GP regression on harmonic features.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::basis::HarmonicBasis;
use crate::error::{Error, Result};
use crate::grid::Point;
use crate::linalg::{cholesky_with_jitter, log_det, quad_diag, Chol};
use crate::optim::{minimize, LbfgsOptions};
use crate::spectral::KernelSpec;

const LOG_2PI: f64 = 1.8378770664093453;

/// Prior weight variances `Λ_j = s(λ̄_j)`.
pub fn feature_variances(kernel: &KernelSpec, frequencies: &[f64]) -> Vec<f64> {
    frequencies.iter().map(|&w| kernel.spectral_density(w)).collect()
}

fn check_lambda(lambda: &[f64]) -> Result<()> {
    match lambda.iter().position(|&l| !(l > 0.0 && l.is_finite())) {
        None => Ok(()),
        Some(j) => Err(Error::Numerical(format!(
            "prior variance of feature {j} is {} (spectral density under- or overflow)",
            lambda[j]
        ))),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

#[derive(Clone, Debug)]
struct Bound {
    phi: DMatrix<f64>,
    ptp: DMatrix<f64>,
    pty: DVector<f64>,
    yty: f64,
}

/// Factorized `Z = ΦᵀΦ + σ²Λ⁻¹` with `α = Z⁻¹Φᵀy`.
struct Solved {
    chol: Chol,
    alpha: DVector<f64>,
}

#[derive(Clone, Debug)]
pub struct ReducedRankModel<'a> {
    basis: &'a HarmonicBasis,
    kernel: KernelSpec,
    noise: f64,
    frequencies: Vec<f64>,
    data: Bound,
}

#[derive(Clone, Debug)]
pub struct FitReport {
    /// `(log σ_f², log ℓ, log σ_n²)`.
    pub theta: [f64; 3],
    pub nlml: f64,
    pub iterations: usize,
    pub converged: bool,
    pub history: Vec<f64>,
}

impl<'a> ReducedRankModel<'a> {
    /// A model with no data bound.
    pub fn new(basis: &'a HarmonicBasis, kernel: KernelSpec, noise: f64) -> Result<Self> {
        kernel.validate()?;
        if !(noise > 0.0 && noise.is_finite()) {
            return Err(Error::arg(format!("noise variance must be positive, got {noise}")));
        }
        let m = basis.m();
        Ok(Self {
            basis,
            kernel,
            noise,
            frequencies: basis.frequencies(),
            data: Bound {
                phi: DMatrix::zeros(0, m),
                ptp: DMatrix::zeros(m, m),
                pty: DVector::zeros(m),
                yty: 0.0,
            },
        })
    }

    /// Binds training data, caching Φ, ΦᵀΦ, Φᵀy and yᵀy.
    pub fn bind(&mut self, x: &[Point], y: &[f64]) -> Result<()> {
        if x.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::arg("training inputs must be finite"));
        }
        if x.len() != y.len() {
            return Err(Error::Dimension {
                expected: x.len(),
                actual: y.len(),
            });
        }
        self.bind_features(self.basis.evaluate(x), y)
    }

    /// Binds a precomputed training feature matrix.
    pub fn bind_features(&mut self, phi: DMatrix<f64>, y: &[f64]) -> Result<()> {
        if phi.ncols() != self.basis.m() {
            return Err(Error::Dimension {
                expected: self.basis.m(),
                actual: phi.ncols(),
            });
        }
        if phi.nrows() != y.len() {
            return Err(Error::Dimension {
                expected: phi.nrows(),
                actual: y.len(),
            });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("training targets must be finite"));
        }
        let yv = DVector::from_column_slice(y);
        self.data = Bound {
            ptp: phi.tr_mul(&phi),
            pty: phi.tr_mul(&yv),
            yty: yv.norm_squared(),
            phi,
        };
        Ok(())
    }

    pub fn basis(&self) -> &HarmonicBasis {
        self.basis
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    pub fn n(&self) -> usize {
        self.data.phi.nrows()
    }

    pub fn training_features(&self) -> &DMatrix<f64> {
        &self.data.phi
    }

    /// `(log σ_f², log ℓ, log σ_n²)`.
    pub fn theta(&self) -> [f64; 3] {
        let [a, b] = self.kernel.log_params();
        [a, b, self.noise.ln()]
    }

    pub fn set_theta(&mut self, theta: [f64; 3]) {
        self.kernel = self.kernel.with_log_params([theta[0], theta[1]]);
        self.noise = theta[2].exp();
    }

    pub fn lambda(&self) -> Vec<f64> {
        feature_variances(&self.kernel, &self.frequencies)
    }

    /// `Σ_j Λ_j φ_j(x) φ_j(x')`.
    pub fn approx_covariance(&self, x: Point, x2: Point) -> f64 {
        let m = self.basis.m();
        let (mut a, mut b) = (vec![0.0; m], vec![0.0; m]);
        self.basis.feature_row(x, &mut a);
        self.basis.feature_row(x2, &mut b);
        self.lambda()
            .iter()
            .zip(a.iter().zip(&b))
            .map(|(l, (p, q))| l * p * q)
            .sum()
    }

    fn solve(&self, lambda: &[f64]) -> Result<Solved> {
        check_lambda(lambda)?;
        let mut z = self.data.ptp.clone();
        for (j, l) in lambda.iter().enumerate() {
            z[(j, j)] += self.noise / l;
        }
        let chol = cholesky_with_jitter(z)?;
        let alpha = chol.solve(&self.data.pty);
        Ok(Solved { chol, alpha })
    }

    /// Predictive mean and variance of the latent function at `xs`.
    pub fn predict(&self, xs: &[Point]) -> Result<Prediction> {
        if xs.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::arg("test inputs must be finite"));
        }
        self.predict_features(&self.basis.evaluate(xs))
    }

    pub fn predict_features(&self, phi_star: &DMatrix<f64>) -> Result<Prediction> {
        let s = self.solve(&self.lambda())?;
        let mean = (phi_star * &s.alpha).iter().copied().collect();
        let variance = quad_diag(&s.chol, phi_star)
            .into_iter()
            .map(|q| self.noise * q)
            .collect();
        Ok(Prediction { mean, variance })
    }

    /// Negative log marginal likelihood of the bound data.
    pub fn nlml(&self) -> Result<f64> {
        Ok(self.nlml_with_gradient()?.0)
    }

    /// NLML and its gradient with respect to [`Self::theta`].
    pub fn nlml_with_gradient(&self) -> Result<(f64, [f64; 3])> {
        let n = self.n();
        if n == 0 {
            return Err(Error::arg("marginal likelihood needs at least one observation"));
        }
        let m = self.basis.m();
        let lambda = self.lambda();
        let s = self.solve(&lambda)?;
        let sigma2 = self.noise;
        let b_alpha = self.data.pty.dot(&s.alpha);
        let fit = self.data.yty - b_alpha;
        let value = 0.5 * (n as f64 - m as f64) * sigma2.ln()
            + 0.5 * lambda.iter().map(|l| l.ln()).sum::<f64>()
            + 0.5 * log_det(&s.chol)
            + 0.5 * fit / sigma2
            + 0.5 * n as f64 * LOG_2PI;

        let zinv = s.chol.inverse();
        let mut g = [0.0; 3];
        let mut d_sigma2 = 0.5 * (n as f64 - m as f64) / sigma2 - 0.5 * fit / (sigma2 * sigma2);
        for j in 0..m {
            let (l, a) = (lambda[j], s.alpha[j]);
            let d_lambda = 0.5 / l - 0.5 * sigma2 * zinv[(j, j)] / (l * l) - 0.5 * a * a / (l * l);
            let [dv, dl] = self.kernel.spectral_density_grad(self.frequencies[j]);
            g[0] += d_lambda * dv;
            g[1] += d_lambda * dl;
            d_sigma2 += 0.5 * zinv[(j, j)] / l + 0.5 * a * a / (l * sigma2);
        }
        g[2] = d_sigma2 * sigma2;
        Ok((value, g))
    }

    /// Minimizes the NLML over `(log σ_f², log ℓ, log σ_n²)` starting from the
    /// current hyperparameters, which are replaced by the optimum.
    pub fn fit_hyperparameters(&mut self, opts: &LbfgsOptions) -> Result<FitReport> {
        if self.n() < 2 {
            return Err(Error::arg("hyperparameter fitting needs at least two observations"));
        }
        let mut probe = self.clone();
        let res = minimize(
            |t| {
                probe.set_theta([t[0], t[1], t[2]]);
                let (v, g) = probe.nlml_with_gradient()?;
                Ok((v, g.to_vec()))
            },
            self.theta().to_vec(),
            opts,
        )?;
        let theta = [res.x[0], res.x[1], res.x[2]];
        self.set_theta(theta);
        Ok(FitReport {
            theta,
            nlml: res.value,
            iterations: res.iterations,
            converged: res.converged,
            history: res.history,
        })
    }
}

/// A seeded prior sample `f = Φ Λ^{1/2} ε`.
#[derive(Clone, Debug)]
pub struct PriorDraw {
    /// Feature coefficients `Λ^{1/2} ε`.
    pub coefficients: Vec<f64>,
    /// Sample at the interior nodes, in interior order.
    pub values: Vec<f64>,
}

impl PriorDraw {
    /// The sampled function at arbitrary points.
    pub fn evaluate(&self, basis: &HarmonicBasis, points: &[Point]) -> Vec<f64> {
        let c = DVector::from_column_slice(&self.coefficients);
        (basis.evaluate(points) * c).iter().copied().collect()
    }
}

pub fn prior_draw(basis: &HarmonicBasis, kernel: &KernelSpec, seed: u64) -> PriorDraw {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lambda = feature_variances(kernel, &basis.frequencies());
    let coefficients: Vec<f64> = lambda
        .iter()
        .map(|l| {
            let e: f64 = StandardNormal.sample(&mut rng);
            l.sqrt() * e
        })
        .collect();
    let values = (basis.evaluate_interior() * DVector::from_column_slice(&coefficients))
        .iter()
        .copied()
        .collect();
    PriorDraw { coefficients, values }
}
