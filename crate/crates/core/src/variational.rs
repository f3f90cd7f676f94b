//! Gaussian variational posteriors over harmonic-feature coefficients.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use statrs::function::erf::erfc;
use statrs::function::factorial::ln_factorial;

use crate::basis::HarmonicBasis;
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::grid::Point;
use crate::linalg::cholesky_with_jitter;
use crate::optim::{minimize, LbfgsOptions};
use crate::quadrature::GaussHermite;
use crate::regression::{feature_variances, Prediction};
use crate::spectral::KernelSpec;

const LOG_2PI: f64 = 1.8378770664093453;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Link {
    #[default]
    Logit,
    Probit,
}

impl FromStr for Link {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "logit" => Ok(Self::Logit),
            "probit" => Ok(Self::Probit),
            other => Err(Error::arg(format!("unknown link '{other}' (expected logit or probit)"))),
        }
    }
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Logit => "logit",
            Self::Probit => "probit",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Likelihood {
    Gaussian {
        noise: f64,
    },
    Bernoulli {
        link: Link,
    },
    /// Log link; the rate of point `i` is `exposure[i]·exp(f_i)`.
    Poisson {
        exposure: Vec<f64>,
    },
}

impl Likelihood {
    /// Checks parameters and targets against this likelihood.
    pub fn validate(&self, y: &[f64]) -> Result<()> {
        if let Some(v) = y.iter().find(|v| !v.is_finite()) {
            return Err(Error::arg(format!("targets must be finite, got {v}")));
        }
        match self {
            Self::Gaussian { noise } => {
                if !(*noise > 0.0 && noise.is_finite()) {
                    return Err(Error::arg(format!("noise variance must be positive, got {noise}")));
                }
            }
            Self::Bernoulli { .. } => {
                if let Some(v) = y.iter().find(|&&v| v != 0.0 && v != 1.0) {
                    return Err(Error::arg(format!("class labels must be 0 or 1, got {v}")));
                }
            }
            Self::Poisson { exposure } => {
                if exposure.len() != y.len() {
                    return Err(Error::Dimension {
                        expected: y.len(),
                        actual: exposure.len(),
                    });
                }
                if let Some(a) = exposure.iter().find(|&&a| !(a > 0.0 && a.is_finite())) {
                    return Err(Error::arg(format!("exposure must be positive, got {a}")));
                }
                if let Some(v) = y.iter().find(|&&v| v < 0.0 || v.fract() != 0.0) {
                    return Err(Error::arg(format!("counts must be non-negative integers, got {v}")));
                }
            }
        }
        Ok(())
    }
}

/// `q(u) = N(mean, factor·factorᵀ)` with a lower-triangular factor.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianVariational {
    pub mean: DVector<f64>,
    pub factor: DMatrix<f64>,
}

impl GaussianVariational {
    pub fn new(mean: DVector<f64>, factor: DMatrix<f64>) -> Result<Self> {
        let m = mean.len();
        if factor.shape() != (m, m) {
            return Err(Error::Dimension {
                expected: m,
                actual: factor.nrows(),
            });
        }
        for j in 0..m {
            if !(factor[(j, j)] > 0.0) {
                return Err(Error::arg("covariance factor needs a positive diagonal"));
            }
            if (j + 1..m).any(|k| factor[(j, k)] != 0.0) {
                return Err(Error::arg("covariance factor must be lower triangular"));
            }
        }
        Ok(Self { mean, factor })
    }

    /// The prior `N(0, Λ)`.
    pub fn prior(lambda: &[f64]) -> Self {
        Self {
            mean: DVector::zeros(lambda.len()),
            factor: DMatrix::from_diagonal(&DVector::from_iterator(lambda.len(), lambda.iter().map(|l| l.sqrt()))),
        }
    }

    pub fn m(&self) -> usize {
        self.mean.len()
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        &self.factor * self.factor.transpose()
    }
}

/// Per-point marginals `(μ, v)` of `f = Φu` under `q`.
pub fn latent_marginals(q: &GaussianVariational, phi: &DMatrix<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
    if phi.ncols() != q.m() {
        return Err(Error::Dimension {
            expected: q.m(),
            actual: phi.ncols(),
        });
    }
    let mu = (phi * &q.mean).iter().copied().collect();
    let pl = phi * &q.factor;
    let v = pl.row_iter().map(|r| r.norm_squared()).collect();
    Ok((mu, v))
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `1 − 1/z² + 3/z⁴ − 15/z⁶`, the asymptotic Mills-ratio series for z → −∞.
fn mills_series(z: f64) -> f64 {
    let u = 1.0 / (z * z);
    1.0 - u + 3.0 * u * u - 15.0 * u * u * u
}

/// Standard normal CDF.
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// log Φ(z), accurate far into the lower tail.
pub fn log_norm_cdf(z: f64) -> f64 {
    if z > -30.0 {
        norm_cdf(z).ln()
    } else {
        -0.5 * z * z - 0.5 * LOG_2PI - (-z).ln() + mills_series(z).ln()
    }
}

/// φ(z)/Φ(z).
fn inverse_mills(z: f64) -> f64 {
    if z > -30.0 {
        (-0.5 * z * z - 0.5 * LOG_2PI).exp() / norm_cdf(z)
    } else {
        -z / mills_series(z)
    }
}

/// log p(y | f) and its derivative in f, for binary y.
fn bernoulli_terms(link: Link, y: f64, f: f64) -> [f64; 2] {
    let s = if y > 0.5 { 1.0 } else { -1.0 };
    match link {
        Link::Logit => [-softplus(-s * f), s * sigmoid(-s * f)],
        Link::Probit => {
            let z = s * f;
            [log_norm_cdf(z), s * inverse_mills(z)]
        }
    }
}

/// Second derivative of log p(y | f) in f.
fn bernoulli_curvature(link: Link, y: f64, f: f64) -> f64 {
    match link {
        Link::Logit => {
            let p = sigmoid(f);
            -p * (1.0 - p)
        }
        Link::Probit => {
            let z = if y > 0.5 { f } else { -f };
            let r = inverse_mills(z);
            -r * (z + r)
        }
    }
}

/// Summed expected log-likelihood and its per-point partials in `μ` and `v`.
#[derive(Clone, Debug)]
pub struct ExpectedLogLik {
    pub value: f64,
    pub d_mean: Vec<f64>,
    pub d_var: Vec<f64>,
}

fn point_terms(lik: &Likelihood, i: usize, y: f64, mu: f64, v: f64) -> [f64; 3] {
    match lik {
        Likelihood::Gaussian { noise } => {
            let r = y - mu;
            [
                -0.5 * (LOG_2PI + noise.ln()) - (r * r + v) / (2.0 * noise),
                r / noise,
                -0.5 / noise,
            ]
        }
        Likelihood::Poisson { exposure } => {
            let a = exposure[i];
            let rate = a * (mu + 0.5 * v).exp();
            [y * (mu + a.ln()) - rate - ln_factorial(y as u64), y - rate, -0.5 * rate]
        }
        Likelihood::Bernoulli { link } => {
            // the variance partial differentiates the quadrature sum itself
            let gh = GaussHermite::standard();
            let scale = (2.0 * v).sqrt();
            let mut acc = [0.0; 3];
            for (x, w) in gh.nodes.iter().zip(&gh.weights) {
                let [l, dl] = bernoulli_terms(*link, y, mu + scale * x);
                acc[0] += w * l;
                acc[1] += w * dl;
                acc[2] += w * dl * x;
            }
            let norm = std::f64::consts::PI.sqrt();
            let d_var = if v > 0.0 {
                acc[2] / (scale * norm)
            } else {
                0.5 * bernoulli_curvature(*link, y, mu)
            };
            [acc[0] / norm, acc[1] / norm, d_var]
        }
    }
}

pub fn expected_loglik_terms(
    lik: &Likelihood,
    y: &[f64],
    mu: &[f64],
    v: &[f64],
    exec: Execution,
) -> Result<ExpectedLogLik> {
    if mu.len() != y.len() || v.len() != y.len() {
        return Err(Error::Dimension {
            expected: y.len(),
            actual: mu.len().min(v.len()),
        });
    }
    lik.validate(y)?;
    if let Some(x) = v.iter().find(|&&x| !(x >= 0.0)) {
        return Err(Error::arg(format!("latent variance must be non-negative, got {x}")));
    }
    let terms = exec::map_indices(exec, y.len(), |i| point_terms(lik, i, y[i], mu[i], v[i]));
    Ok(ExpectedLogLik {
        value: terms.iter().map(|t| t[0]).sum(),
        d_mean: terms.iter().map(|t| t[1]).collect(),
        d_var: terms.iter().map(|t| t[2]).collect(),
    })
}

/// `Σ_i E_{N(f; μ_i, v_i)}[log p(y_i | f)]`.
pub fn expected_loglik(lik: &Likelihood, y: &[f64], mu: &[f64], v: &[f64]) -> Result<f64> {
    Ok(expected_loglik_terms(lik, y, mu, v, Execution::default())?.value)
}

/// Poisson expected log-likelihood of one count, by Gauss–Hermite quadrature.
pub fn poisson_expected_loglik_quadrature(y: f64, mu: f64, v: f64, exposure: f64) -> f64 {
    let a = exposure;
    GaussHermite::standard().expectation(mu, v, |f| y * (f + a.ln()) - a * f.exp()) - ln_factorial(y as u64)
}

/// `KL(q ‖ N(0, Λ))`.
pub fn kl_to_prior(q: &GaussianVariational, lambda: &[f64]) -> f64 {
    let m = q.m();
    let mut total = -(m as f64);
    for j in 0..m {
        let l = lambda[j];
        let row: f64 = (0..=j).map(|k| q.factor[(j, k)].powi(2)).sum();
        total += row / l + q.mean[j] * q.mean[j] / l + l.ln() - 2.0 * q.factor[(j, j)].abs().ln();
    }
    0.5 * total
}

/// Partials of the ELBO at fixed `Λ`; `factor` is lower triangular.
#[derive(Clone, Debug)]
pub struct ElboGradient {
    pub mean: DVector<f64>,
    pub factor: DMatrix<f64>,
    /// Partials with respect to each prior variance `Λ_j`.
    pub lambda: Vec<f64>,
}

pub fn elbo(q: &GaussianVariational, phi: &DMatrix<f64>, y: &[f64], lik: &Likelihood, lambda: &[f64]) -> Result<f64> {
    Ok(elbo_with_gradient(q, phi, y, lik, lambda, Execution::default())?.0)
}

pub fn elbo_with_gradient(
    q: &GaussianVariational,
    phi: &DMatrix<f64>,
    y: &[f64],
    lik: &Likelihood,
    lambda: &[f64],
    exec: Execution,
) -> Result<(f64, ElboGradient)> {
    let m = q.m();
    if lambda.len() != m {
        return Err(Error::Dimension {
            expected: m,
            actual: lambda.len(),
        });
    }
    if phi.nrows() != y.len() {
        return Err(Error::Dimension {
            expected: y.len(),
            actual: phi.nrows(),
        });
    }
    let (mu, v) = latent_marginals(q, phi)?;
    let ell = expected_loglik_terms(lik, y, &mu, &v, exec)?;
    let kl = kl_to_prior(q, lambda);

    let gm = DVector::from_column_slice(&ell.d_mean);
    let mut d_mean = phi.tr_mul(&gm);
    let mut weighted = phi.clone();
    for (i, mut row) in weighted.row_iter_mut().enumerate() {
        row *= ell.d_var[i];
    }
    let mut d_factor = (phi.tr_mul(&weighted) * &q.factor) * 2.0;
    for j in 0..m {
        let l = lambda[j];
        d_mean[j] -= q.mean[j] / l;
        for k in 0..m {
            if k > j {
                d_factor[(j, k)] = 0.0;
            } else {
                d_factor[(j, k)] -= q.factor[(j, k)] / l;
            }
        }
        d_factor[(j, j)] += 1.0 / q.factor[(j, j)];
    }
    let d_lambda = (0..m)
        .map(|j| {
            let l = lambda[j];
            let sjj: f64 = (0..=j).map(|k| q.factor[(j, k)].powi(2)).sum();
            0.5 * (sjj / (l * l) + q.mean[j] * q.mean[j] / (l * l) - 1.0 / l)
        })
        .collect();
    Ok((
        ell.value - kl,
        ElboGradient {
            mean: d_mean,
            factor: d_factor,
            lambda: d_lambda,
        },
    ))
}

/// The exact posterior under a Gaussian likelihood:
/// `Σ̂ = (Λ⁻¹ + σ⁻²ΦᵀΦ)⁻¹`, `m̂ = σ⁻² Σ̂ Φᵀy`.
pub fn optimal_gaussian_q(phi: &DMatrix<f64>, y: &[f64], noise: f64, lambda: &[f64]) -> Result<GaussianVariational> {
    if !(noise > 0.0) {
        return Err(Error::arg(format!("noise variance must be positive, got {noise}")));
    }
    if phi.nrows() != y.len() {
        return Err(Error::Dimension {
            expected: y.len(),
            actual: phi.nrows(),
        });
    }
    let m = lambda.len();
    let mut precision = phi.tr_mul(phi) / noise;
    for j in 0..m {
        precision[(j, j)] += 1.0 / lambda[j];
    }
    let pchol = cholesky_with_jitter(precision)?;
    let mut sigma = pchol.inverse();
    sigma = (&sigma + sigma.transpose()) * 0.5;
    let mean = &sigma * phi.tr_mul(&DVector::from_column_slice(y)) / noise;
    let factor = cholesky_with_jitter(sigma)?.unpack();
    Ok(GaussianVariational { mean, factor })
}

/// Predictive marginals of the latent function at `xs`.
pub fn predict_latent(q: &GaussianVariational, basis: &HarmonicBasis, xs: &[Point]) -> Result<Prediction> {
    let (mean, variance) = latent_marginals(q, &basis.evaluate(xs))?;
    Ok(Prediction { mean, variance })
}

/// `p(y = 1)` under a Gaussian latent marginal.
pub fn predictive_probability(link: Link, mu: f64, v: f64) -> f64 {
    match link {
        Link::Probit => norm_cdf(mu / (1.0 + v).sqrt()),
        Link::Logit if v == 0.0 => sigmoid(mu),
        Link::Logit => GaussHermite::standard().expectation(mu, v, sigmoid),
    }
}

#[derive(Clone, Debug)]
pub struct VariationalOptions {
    pub max_iters: usize,
    pub grad_tol: f64,
    /// Also optimize `(log σ_f², log ℓ)`.
    pub learn_kernel: bool,
    pub exec: Execution,
}

impl Default for VariationalOptions {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            grad_tol: 1e-5,
            learn_kernel: false,
            exec: Execution::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct VariationalFit {
    pub q: GaussianVariational,
    pub kernel: KernelSpec,
    pub elbo: f64,
    pub iterations: usize,
    pub converged: bool,
    /// ELBO after every accepted step.
    pub history: Vec<f64>,
}

fn softplus_inv(x: f64) -> f64 {
    x + (-(-x).exp_m1()).ln()
}

/// Whitened coordinates: `m_u = Λ^{1/2} m_w`, `L = diag(Λ^{1/2}) L_w`, with
/// the diagonal of `L_w` stored through a softplus.
struct Whitened<'a> {
    m: usize,
    frequencies: &'a [f64],
    kernel: KernelSpec,
    learn: bool,
}

impl Whitened<'_> {
    fn len(&self) -> usize {
        self.m + self.m * (self.m + 1) / 2 + if self.learn { 2 } else { 0 }
    }

    fn kernel_at(&self, p: &[f64]) -> KernelSpec {
        if self.learn {
            let k = self.len();
            self.kernel.with_log_params([p[k - 2], p[k - 1]])
        } else {
            self.kernel
        }
    }

    fn initial(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.len()];
        let mut idx = self.m;
        for j in 0..self.m {
            idx += j;
            p[idx] = softplus_inv(1.0);
            idx += 1;
        }
        if self.learn {
            let k = p.len();
            let [a, b] = self.kernel.log_params();
            p[k - 2] = a;
            p[k - 1] = b;
        }
        p
    }

    fn unpack(&self, p: &[f64], lambda: &[f64]) -> GaussianVariational {
        let m = self.m;
        let mean = DVector::from_iterator(m, (0..m).map(|j| lambda[j].sqrt() * p[j]));
        let mut factor = DMatrix::zeros(m, m);
        let mut idx = m;
        for j in 0..m {
            let s = lambda[j].sqrt();
            for k in 0..=j {
                let w = if k == j { softplus(p[idx]) } else { p[idx] };
                factor[(j, k)] = s * w;
                idx += 1;
            }
        }
        GaussianVariational { mean, factor }
    }

    /// Negative ELBO and its gradient in whitened coordinates.
    fn objective(
        &self,
        p: &[f64],
        phi: &DMatrix<f64>,
        y: &[f64],
        lik: &Likelihood,
        exec: Execution,
    ) -> Result<(f64, Vec<f64>)> {
        let m = self.m;
        let kernel = self.kernel_at(p);
        let lambda = feature_variances(&kernel, self.frequencies);
        if let Some(l) = lambda.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(Error::Numerical(format!("prior variance {l} out of range")));
        }
        let q = self.unpack(p, &lambda);
        let (value, g) = elbo_with_gradient(&q, phi, y, lik, &lambda, exec)?;
        let mut grad = vec![0.0; p.len()];
        for j in 0..m {
            grad[j] = -lambda[j].sqrt() * g.mean[j];
        }
        let mut idx = m;
        for j in 0..m {
            let s = lambda[j].sqrt();
            for k in 0..=j {
                let mut d = s * g.factor[(j, k)];
                if k == j {
                    d *= sigmoid(p[idx]);
                }
                grad[idx] = -d;
                idx += 1;
            }
        }
        if self.learn {
            let mut dk = [0.0; 2];
            for j in 0..m {
                let lj = lambda[j];
                let through_q: f64 =
                    g.mean[j] * q.mean[j] + (0..=j).map(|k| g.factor[(j, k)] * q.factor[(j, k)]).sum::<f64>();
                let d_lambda = g.lambda[j] + through_q / (2.0 * lj);
                let sg = kernel.spectral_density_grad(self.frequencies[j]);
                dk[0] += d_lambda * sg[0];
                dk[1] += d_lambda * sg[1];
            }
            let k = p.len();
            grad[k - 2] = -dk[0];
            grad[k - 1] = -dk[1];
        }
        Ok((-value, grad))
    }
}

/// Maximizes the ELBO from `q = prior`, optionally learning the kernel
/// magnitude and lengthscale jointly.
pub fn fit_variational(
    phi: &DMatrix<f64>,
    y: &[f64],
    lik: &Likelihood,
    kernel: &KernelSpec,
    frequencies: &[f64],
    opts: &VariationalOptions,
) -> Result<VariationalFit> {
    if y.is_empty() {
        return Err(Error::arg("variational fitting needs at least one observation"));
    }
    if phi.ncols() != frequencies.len() {
        return Err(Error::Dimension {
            expected: frequencies.len(),
            actual: phi.ncols(),
        });
    }
    lik.validate(y)?;
    let w = Whitened {
        m: frequencies.len(),
        frequencies,
        kernel: *kernel,
        learn: opts.learn_kernel,
    };
    let lbfgs = LbfgsOptions {
        max_iters: opts.max_iters,
        grad_tol: opts.grad_tol,
        ..Default::default()
    };
    let res = minimize(|p| w.objective(p, phi, y, lik, opts.exec), w.initial(), &lbfgs)?;
    let kernel = w.kernel_at(&res.x);
    let q = w.unpack(&res.x, &feature_variances(&kernel, frequencies));
    Ok(VariationalFit {
        q,
        kernel,
        elbo: -res.value,
        iterations: res.iterations,
        converged: res.converged,
        history: res.history.iter().map(|v| -v).collect(),
    })
}
