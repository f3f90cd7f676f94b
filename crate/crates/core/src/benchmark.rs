//! Harmonic features against a dense GP with noise-free boundary observations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::basis::HarmonicBasis;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::full_gp::DenseGPModel;
use crate::grid::{DomainGrid, Point};
use crate::regression::{prior_draw, ReducedRankModel};
use crate::spectral::{KernelFamily, KernelSpec};

/// Contour level of the mask indicator used for boundary observations. Small
/// levels follow the exterior nodes adjacent to Ω, where the harmonic
/// features vanish.
pub const BOUNDARY_LEVEL: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct BenchmarkConfig {
    pub trials: usize,
    pub n: usize,
    /// Standard deviation of the noise added to simulated observations.
    pub data_noise_sd: f64,
    /// Features in the basis the true functions are drawn from.
    pub truth_m: usize,
    pub m_values: Vec<usize>,
    pub boundary_points: usize,
    pub kernel: KernelSpec,
    /// Noise variance assumed by both models.
    pub noise: f64,
    pub seed: u64,
    pub exec: Execution,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            trials: 10,
            n: 100,
            data_noise_sd: 0.1,
            truth_m: 256,
            m_values: vec![4, 8, 16, 32, 64, 100],
            boundary_points: 73,
            kernel: KernelSpec::planar(KernelFamily::Matern32, 1.0, 0.1).unwrap(),
            noise: 0.01,
            seed: 0,
            exec: Execution::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BenchmarkRow {
    pub trial: usize,
    pub m: usize,
    pub mae: f64,
}

#[derive(Clone, Debug)]
pub struct BenchmarkReport {
    pub rows: Vec<BenchmarkRow>,
    /// Standard deviation of each trial's true function over the interior nodes.
    pub truth_sd: Vec<f64>,
}

impl BenchmarkReport {
    pub fn mean_mae(&self, m: usize) -> Option<f64> {
        let v: Vec<f64> = self.rows.iter().filter(|r| r.m == m).map(|r| r.mae).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// `n` points drawn uniformly from the domain by rejection on the bounding box.
pub fn uniform_interior_points(grid: &DomainGrid, n: usize, rng: &mut impl Rng) -> Vec<Point> {
    let [x0, x1, y0, y1] = grid.extent();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let p = [rng.random_range(x0..x1), rng.random_range(y0..y1)];
        if grid.contains(p) {
            out.push(p);
        }
    }
    out
}

/// Runs the protocol: per trial, draw a true function from the prior on the
/// first `truth_m` features, observe it with noise at `n` uniform interior
/// points, fit the dense baseline with noise-free zero observations along the
/// boundary, and record the mean absolute difference of predictive means
/// over the interior nodes for each harmonic model size.
pub fn run_benchmark(basis: &HarmonicBasis, cfg: &BenchmarkConfig) -> Result<BenchmarkReport> {
    let needed = cfg.m_values.iter().copied().chain([cfg.truth_m]).max().unwrap_or(0);
    if needed > basis.m() {
        return Err(Error::arg(format!(
            "benchmark needs {needed} features, basis has {}",
            basis.m()
        )));
    }
    if cfg.m_values.contains(&0) || cfg.truth_m == 0 {
        return Err(Error::arg("feature counts must be positive"));
    }
    let grid = basis.grid();
    let truth_basis = basis.truncated(cfg.truth_m)?;
    let models = cfg
        .m_values
        .iter()
        .map(|&m| basis.truncated(m))
        .collect::<Result<Vec<_>>>()?;
    let nodes = grid.interior_positions();
    let boundary = grid.boundary_points(cfg.boundary_points, BOUNDARY_LEVEL);
    let mut dense = DenseGPModel::new(cfg.kernel)?;
    dense.exec = cfg.exec;
    let noise = Normal::new(0.0, cfg.data_noise_sd).map_err(|e| Error::arg(e.to_string()))?;

    let mut rows = Vec::new();
    let mut truth_sd = Vec::new();
    for trial in 0..cfg.trials {
        let seed = cfg.seed.wrapping_add(trial as u64);
        let truth = prior_draw(&truth_basis, &cfg.kernel, seed);
        let mean = truth.values.iter().sum::<f64>() / truth.values.len() as f64;
        let var = truth.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / truth.values.len() as f64;
        truth_sd.push(var.sqrt());

        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let x = uniform_interior_points(grid, cfg.n, &mut rng);
        let y: Vec<f64> = truth
            .evaluate(&truth_basis, &x)
            .iter()
            .map(|f| f + noise.sample(&mut rng))
            .collect();

        let xa: Vec<Point> = x.iter().chain(&boundary).copied().collect();
        let ya: Vec<f64> = y.iter().copied().chain(boundary.iter().map(|_| 0.0)).collect();
        let na: Vec<f64> = x
            .iter()
            .map(|_| cfg.noise)
            .chain(boundary.iter().map(|_| 0.0))
            .collect();
        let full = dense.predict(&xa, &ya, &na, &nodes)?;

        for (b, &m) in models.iter().zip(&cfg.m_values) {
            let mut model = ReducedRankModel::new(b, cfg.kernel, cfg.noise)?;
            model.bind(&x, &y)?;
            let pred = model.predict_features(&b.evaluate_interior())?;
            let mae = pred
                .mean
                .iter()
                .zip(&full.mean)
                .map(|(a, c)| (a - c).abs())
                .sum::<f64>()
                / nodes.len() as f64;
            rows.push(BenchmarkRow { trial, m, mae });
        }
    }
    Ok(BenchmarkReport { rows, truth_sd })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::EigenOptions;
    use crate::grid::shapes;

    #[test]
    fn small_run_is_deterministic_and_finite() {
        let g = DomainGrid::new(40, 40, 1.0 / 40.0, [0.0, 0.0], shapes::star(40)).unwrap();
        let basis = HarmonicBasis::compute(g, 40, &EigenOptions::default()).unwrap();
        let cfg = BenchmarkConfig {
            trials: 2,
            n: 30,
            truth_m: 40,
            m_values: vec![8, 40],
            boundary_points: 30,
            ..Default::default()
        };
        let a = run_benchmark(&basis, &cfg).unwrap();
        assert_eq!(a.rows.len(), 4);
        assert!(a.rows.iter().all(|r| r.mae.is_finite() && r.mae >= 0.0));
        assert_eq!(a.rows, run_benchmark(&basis, &cfg).unwrap().rows);
        let too_many = BenchmarkConfig { truth_m: 41, ..cfg };
        assert!(run_benchmark(&basis, &too_many).is_err());
    }

    #[test]
    fn rejection_sampling_stays_inside() {
        let g = DomainGrid::new(30, 30, 1.0 / 30.0, [0.0, 0.0], shapes::star(30)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pts = uniform_interior_points(&g, 200, &mut rng);
        assert!(pts.iter().all(|&p| g.contains(p)));
    }
}
