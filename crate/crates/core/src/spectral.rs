//! Stationary covariance functions and their spectral densities.
//!
//! Only half-integer Matérn orders are supported; their covariances have
//! closed forms and the Gamma-function ratios in the spectral density are
//! exact constants.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelFamily {
    SquaredExponential,
    Matern12,
    Matern32,
    Matern52,
}

impl KernelFamily {
    /// Smoothness ν, or `None` for the squared exponential.
    pub fn nu(self) -> Option<f64> {
        match self {
            KernelFamily::SquaredExponential => None,
            KernelFamily::Matern12 => Some(0.5),
            KernelFamily::Matern32 => Some(1.5),
            KernelFamily::Matern52 => Some(2.5),
        }
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "se" | "rbf" | "sexp" => Ok(KernelFamily::SquaredExponential),
            "matern12" => Ok(KernelFamily::Matern12),
            "matern32" => Ok(KernelFamily::Matern32),
            "matern52" => Ok(KernelFamily::Matern52),
            _ => Err(Error::arg(format!(
                "unknown kernel {s:?} (expected se|matern12|matern32|matern52)"
            ))),
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelFamily::SquaredExponential => "se",
            KernelFamily::Matern12 => "matern12",
            KernelFamily::Matern32 => "matern32",
            KernelFamily::Matern52 => "matern52",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelSpec {
    pub family: KernelFamily,
    /// Magnitude σ_f².
    pub variance: f64,
    pub lengthscale: f64,
    /// Input dimension, 1 or 2.
    pub dim: usize,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, variance: f64, lengthscale: f64, dim: usize) -> Result<Self> {
        let spec = Self {
            family,
            variance,
            lengthscale,
            dim,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Two-dimensional kernel, the usual case for domains.
    pub fn planar(family: KernelFamily, variance: f64, lengthscale: f64) -> Result<Self> {
        Self::new(family, variance, lengthscale, 2)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.variance > 0.0 && self.variance.is_finite()) {
            return Err(Error::arg(format!(
                "kernel variance must be positive, got {}",
                self.variance
            )));
        }
        if !(self.lengthscale > 0.0 && self.lengthscale.is_finite()) {
            return Err(Error::arg(format!(
                "kernel lengthscale must be positive, got {}",
                self.lengthscale
            )));
        }
        if !(self.dim == 1 || self.dim == 2) {
            return Err(Error::arg(format!("input dimension must be 1 or 2, got {}", self.dim)));
        }
        Ok(())
    }

    /// `(log σ_f², log ℓ)`.
    pub fn log_params(&self) -> [f64; 2] {
        [self.variance.ln(), self.lengthscale.ln()]
    }

    pub fn with_log_params(&self, p: [f64; 2]) -> Self {
        Self {
            variance: p[0].exp(),
            lengthscale: p[1].exp(),
            ..*self
        }
    }

    /// κ(r) for a displacement vector.
    pub fn covariance(&self, r: &[f64]) -> f64 {
        let d = r.iter().map(|x| x * x).sum::<f64>().sqrt();
        self.covariance_at_distance(d)
    }

    pub fn covariance_at_distance(&self, dist: f64) -> f64 {
        let s = dist / self.lengthscale;
        let v = self.variance;
        match self.family {
            KernelFamily::SquaredExponential => v * (-0.5 * s * s).exp(),
            KernelFamily::Matern12 => v * (-s).exp(),
            KernelFamily::Matern32 => {
                let a = 3f64.sqrt() * s;
                v * (1.0 + a) * (-a).exp()
            }
            KernelFamily::Matern52 => {
                let a = 5f64.sqrt() * s;
                v * (1.0 + a + a * a / 3.0) * (-a).exp()
            }
        }
    }

    /// s(ω) for a radial frequency ω ≥ 0.
    pub fn spectral_density(&self, omega: f64) -> f64 {
        self.log_spectral_density(omega).exp()
    }

    /// log s(ω); stays finite where s(ω) underflows.
    pub fn log_spectral_density(&self, omega: f64) -> f64 {
        let d = self.dim as f64;
        let l = self.lengthscale;
        match self.family.nu() {
            None => self.variance.ln() + 0.5 * d * (2.0 * PI * l * l).ln() - 0.5 * omega * omega * l * l,
            Some(nu) => {
                self.variance.ln()
                    + gamma_ratio(nu, self.dim).ln()
                    + d * 2f64.ln()
                    + 0.5 * d * PI.ln()
                    + nu * (2.0 * nu).ln()
                    - 2.0 * nu * l.ln()
                    - 0.5 * (2.0 * nu + d) * (2.0 * nu / (l * l) + omega * omega).ln()
            }
        }
    }

    /// `(∂s/∂log σ_f², ∂s/∂log ℓ)` at ω.
    pub fn spectral_density_grad(&self, omega: f64) -> [f64; 2] {
        let s = self.spectral_density(omega);
        [s, s * self.dlog_density_dlog_lengthscale(omega)]
    }

    /// `∂ log s / ∂ log ℓ`.
    pub fn dlog_density_dlog_lengthscale(&self, omega: f64) -> f64 {
        let d = self.dim as f64;
        let wl2 = (omega * self.lengthscale).powi(2);
        match self.family.nu() {
            None => d - wl2,
            Some(nu) => -2.0 * nu + (2.0 * nu + d) * 2.0 * nu / (2.0 * nu + wl2),
        }
    }
}

/// Γ(ν + d/2) / Γ(ν) for half-integer ν and d ∈ {1, 2}.
fn gamma_ratio(nu: f64, dim: usize) -> f64 {
    // Γ(x + 1/2)/Γ(x) has no short closed form; tabulate the six cases exactly.
    let sqrt_pi = PI.sqrt();
    match ((2.0 * nu).round() as u32, dim) {
        (1, 1) => 1.0 / sqrt_pi,          // Γ(1)/Γ(1/2)
        (1, 2) => 0.5,                    // Γ(3/2)/Γ(1/2)
        (3, 1) => 2.0 / sqrt_pi,          // Γ(2)/Γ(3/2)
        (3, 2) => 1.5,                    // Γ(5/2)/Γ(3/2)
        (5, 1) => 2.0 / (0.75 * sqrt_pi), // Γ(3)/Γ(5/2)
        (5, 2) => 2.5,                    // Γ(7/2)/Γ(5/2)
        _ => unreachable!("only half-integer orders up to 5/2 are supported"),
    }
}
