//! Command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::basis::HarmonicBasis;
use crate::benchmark::{run_benchmark, BenchmarkConfig};
use crate::cache::{read_basis, write_basis};
use crate::data::{fmt_f64, read_dataset, read_points, write_columns, Dataset};
use crate::eigen::EigenOptions;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::grid::{load_mask, Point};
use crate::optim::LbfgsOptions;
use crate::regression::{prior_draw, ReducedRankModel};
use crate::spectral::{KernelFamily, KernelSpec};
use crate::variational::{
    fit_variational, latent_marginals, predictive_probability, Likelihood, Link, VariationalOptions,
};

#[derive(Debug, Parser)]
#[command(name = "harmonic-gp", version, about = "Gaussian processes on masked 2D domains")]
pub struct Cli {
    /// Run every loop on the calling thread.
    #[arg(long, global = true)]
    pub sequential: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute the Dirichlet eigenbasis of a mask and cache it.
    Basis(BasisArgs),
    /// Draw a prior sample at the interior nodes.
    Sample(SampleArgs),
    /// Reduced-rank regression with a Gaussian likelihood.
    Regress(RegressArgs),
    /// Variational binary classification.
    Classify(ClassifyArgs),
    /// Log-Gaussian Cox process on binned counts.
    Cox(CoxArgs),
    /// Harmonic features against a dense GP with boundary observations.
    Benchmark(BenchmarkArgs),
}

#[derive(Debug, Args)]
pub struct BasisArgs {
    /// PGM (P2/P5) or ASCII 0/1 grid.
    #[arg(long)]
    pub mask: PathBuf,
    /// Physical width of the raster.
    #[arg(long, default_value_t = 1.0)]
    pub width: f64,
    #[arg(long)]
    pub m: usize,
    /// Relative eigen-residual tolerance.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Clone)]
pub struct KernelArgs {
    /// se, matern12, matern32 or matern52.
    #[arg(long, default_value = "matern32")]
    pub kernel: KernelFamily,
    #[arg(long, default_value_t = 1.0)]
    pub variance: f64,
    #[arg(long, default_value_t = 0.1)]
    pub lengthscale: f64,
}

impl KernelArgs {
    fn spec(&self) -> Result<KernelSpec> {
        KernelSpec::planar(self.kernel, self.variance, self.lengthscale)
    }
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Basis cache written by `basis`.
    #[arg(long)]
    pub basis: PathBuf,
    /// Use only the first `m` features of the cache.
    #[arg(long)]
    pub m: Option<usize>,
    #[command(flatten)]
    pub kernel: KernelArgs,
}

impl ModelArgs {
    fn load(&self) -> Result<HarmonicBasis> {
        let basis = read_basis(&self.basis)?;
        match self.m {
            Some(m) => basis.truncated(m),
            None => Ok(basis),
        }
    }
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TargetArgs {
    /// Predict at every raster node (the default).
    #[arg(long, conflicts_with = "predict")]
    pub predict_grid: bool,
    /// Predict at the `x,y` rows of this CSV instead.
    #[arg(long)]
    pub predict: Option<PathBuf>,
}

impl TargetArgs {
    fn points(&self, basis: &HarmonicBasis) -> Result<Vec<Point>> {
        match &self.predict {
            Some(path) => read_points(path),
            None => Ok(basis.grid().raster_positions()),
        }
    }
}

#[derive(Debug, Args)]
pub struct RegressArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// CSV with columns x,y,value.
    #[arg(long)]
    pub data: PathBuf,
    /// Observation noise variance.
    #[arg(long, default_value_t = 0.01)]
    pub noise: f64,
    /// Fit the kernel and noise hyperparameters by maximum marginal likelihood.
    #[arg(long)]
    pub optimize: bool,
    #[arg(long, default_value_t = 1000)]
    pub max_iters: usize,
    #[command(flatten)]
    pub target: TargetArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum LikelihoodArg {
    Bernoulli,
}

#[derive(Debug, Args)]
pub struct VariationalArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// CSV with columns x,y,target.
    #[arg(long)]
    pub data: PathBuf,
    /// Learn the kernel variance and lengthscale jointly with q(u).
    #[arg(long)]
    pub optimize: bool,
    #[arg(long, default_value_t = 2000)]
    pub max_iters: usize,
    #[command(flatten)]
    pub target: TargetArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// Labels in the data CSV must be 0 or 1.
    #[command(flatten)]
    pub common: VariationalArgs,
    #[arg(long, value_enum, default_value = "bernoulli")]
    pub likelihood: LikelihoodArg,
    /// logit or probit.
    #[arg(long, default_value = "logit")]
    pub link: Link,
}

#[derive(Debug, Args)]
pub struct CoxArgs {
    /// Counts in the data CSV sit at bin centres.
    #[command(flatten)]
    pub common: VariationalArgs,
    /// Side length of the square count bins; exposure is its square.
    #[arg(long)]
    pub bin_width: f64,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[arg(long)]
    pub mask: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub width: f64,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    /// Comma-separated harmonic model sizes.
    #[arg(long, value_delimiter = ',', default_value = "4,8,16,32,64,100")]
    pub m_list: Vec<usize>,
    /// Features used to draw the true functions.
    #[arg(long, default_value_t = 256)]
    pub truth_m: usize,
    /// Noisy observations per trial.
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 73)]
    pub boundary_points: usize,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[arg(long, default_value_t = 0.01)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code: 0 on success, 1 for argument, parse and I/O errors,
/// 2 for numerical failures. Reports go to `out`, errors to stderr.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                2
            } else {
                1
            }
        }
    }
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    match &cli.command {
        Command::Basis(a) => cmd_basis(a, exec, out),
        Command::Sample(a) => cmd_sample(a, exec),
        Command::Regress(a) => cmd_regress(a, exec, out),
        Command::Classify(a) => cmd_classify(a, exec, out),
        Command::Cox(a) => cmd_cox(a, exec, out),
        Command::Benchmark(a) => cmd_benchmark(a, exec, out),
    }
}

fn cmd_basis(a: &BasisArgs, exec: Execution, out: &mut dyn Write) -> Result<()> {
    let start = Instant::now();
    let grid = load_mask(&a.mask, a.width)?;
    let n = grid.n_interior();
    if a.m == 0 || a.m > n {
        return Err(Error::arg(format!("--m must be in 1..={n} for this mask, got {}", a.m)));
    }
    let opts = EigenOptions {
        tol: a.tol,
        exec,
        ..Default::default()
    };
    let basis = HarmonicBasis::compute(grid, a.m, &opts)?;
    let elapsed = start.elapsed().as_secs_f64();
    write_basis(&a.out, &basis)?;
    let lam = basis.lambda_sq();
    writeln!(out, "m = {}", basis.m())?;
    writeln!(out, "n_int = {n}")?;
    writeln!(out, "lambda_min = {}", fmt_f64(lam[0]))?;
    writeln!(out, "lambda_max = {}", fmt_f64(lam[lam.len() - 1]))?;
    writeln!(out, "setup_seconds = {elapsed:.3}")?;
    Ok(())
}

fn cmd_sample(a: &SampleArgs, _exec: Execution) -> Result<()> {
    let basis = a.model.load()?;
    let draw = prior_draw(&basis, &a.model.kernel.spec()?, a.seed);
    let pts = basis.grid().interior_positions();
    let (xs, ys) = split(&pts);
    write_columns(&a.out, &["x", "y", "f"], &[&xs, &ys, &draw.values])
}

fn split(points: &[Point]) -> (Vec<f64>, Vec<f64>) {
    points.iter().map(|p| (p[0], p[1])).unzip()
}

fn cmd_regress(a: &RegressArgs, exec: Execution, out: &mut dyn Write) -> Result<()> {
    let basis = a.model.load()?;
    let data = read_dataset(&a.data)?;
    let targets = a.target.points(&basis)?;
    let mut model = ReducedRankModel::new(&basis, a.model.kernel.spec()?, a.noise)?;
    model.bind_features(basis.evaluate_with(&data.points, exec), &data.values)?;
    if a.optimize {
        let opts = LbfgsOptions {
            max_iters: a.max_iters,
            ..Default::default()
        };
        let fit = model.fit_hyperparameters(&opts)?;
        let [lv, ll, ln] = fit.theta;
        writeln!(out, "variance = {}", fmt_f64(lv.exp()))?;
        writeln!(out, "lengthscale = {}", fmt_f64(ll.exp()))?;
        writeln!(out, "noise = {}", fmt_f64(ln.exp()))?;
        writeln!(out, "iterations = {}", fit.iterations)?;
        writeln!(out, "converged = {}", fit.converged)?;
    }
    if model.n() > 0 {
        writeln!(out, "nlml = {}", fmt_f64(model.nlml()?))?;
    }
    let pred = model.predict_features(&basis.evaluate_with(&targets, exec))?;
    let (xs, ys) = split(&targets);
    write_columns(
        &a.out,
        &["x", "y", "mean", "variance"],
        &[&xs, &ys, &pred.mean, &pred.variance],
    )
}

fn variational(
    a: &VariationalArgs,
    basis: &HarmonicBasis,
    data: &Dataset,
    lik: &Likelihood,
    exec: Execution,
    out: &mut dyn Write,
) -> Result<(Vec<Point>, Vec<f64>, Vec<f64>)> {
    let kernel = a.model.kernel.spec()?;
    let opts = VariationalOptions {
        max_iters: a.max_iters,
        learn_kernel: a.optimize,
        exec,
        ..Default::default()
    };
    let phi = basis.evaluate_with(&data.points, exec);
    let fit = fit_variational(&phi, &data.values, lik, &kernel, &basis.frequencies(), &opts)?;
    if a.optimize {
        writeln!(out, "variance = {}", fmt_f64(fit.kernel.variance))?;
        writeln!(out, "lengthscale = {}", fmt_f64(fit.kernel.lengthscale))?;
    }
    writeln!(out, "iterations = {}", fit.iterations)?;
    writeln!(out, "converged = {}", fit.converged)?;
    writeln!(out, "elbo = {}", fmt_f64(fit.elbo))?;
    let targets = a.target.points(basis)?;
    let (mean, var) = latent_marginals(&fit.q, &basis.evaluate_with(&targets, exec))?;
    Ok((targets, mean, var))
}

fn cmd_classify(a: &ClassifyArgs, exec: Execution, out: &mut dyn Write) -> Result<()> {
    let c = &a.common;
    let basis = c.model.load()?;
    let data = read_dataset(&c.data)?;
    let LikelihoodArg::Bernoulli = a.likelihood;
    let lik = Likelihood::Bernoulli { link: a.link };
    lik.validate(&data.values)?;
    let (targets, mean, var) = variational(c, &basis, &data, &lik, exec, out)?;
    let prob: Vec<f64> = mean
        .iter()
        .zip(&var)
        .map(|(&m, &v)| predictive_probability(a.link, m, v))
        .collect();
    let (xs, ys) = split(&targets);
    write_columns(
        &c.out,
        &["x", "y", "probability", "mean", "variance"],
        &[&xs, &ys, &prob, &mean, &var],
    )
}

/// Checks that count points sit on bin centres `origin + (k + ½)·bin`.
fn check_bin_alignment(points: &[Point], origin: Point, bin: f64) -> Result<()> {
    for (row, p) in points.iter().enumerate() {
        for d in 0..2 {
            let k = (p[d] - origin[d]) / bin - 0.5;
            if (k - k.round()).abs() > 1e-6 {
                return Err(Error::Data(format!(
                    "line {}: point ({}, {}) is not a centre of bins of width {bin}",
                    row + 2,
                    p[0],
                    p[1]
                )));
            }
        }
    }
    Ok(())
}

fn cmd_cox(a: &CoxArgs, exec: Execution, out: &mut dyn Write) -> Result<()> {
    if !(a.bin_width > 0.0 && a.bin_width.is_finite()) {
        return Err(Error::arg(format!("--bin-width must be positive, got {}", a.bin_width)));
    }
    let c = &a.common;
    let basis = c.model.load()?;
    let data = read_dataset(&c.data)?;
    let lik = Likelihood::Poisson {
        exposure: vec![a.bin_width * a.bin_width; data.len()],
    };
    lik.validate(&data.values)?;
    check_bin_alignment(&data.points, basis.grid().origin(), a.bin_width)?;
    let (targets, mean, var) = variational(c, &basis, &data, &lik, exec, out)?;
    let intensity: Vec<f64> = mean.iter().zip(&var).map(|(m, v)| (m + v / 2.0).exp()).collect();
    let (xs, ys) = split(&targets);
    write_columns(
        &c.out,
        &["x", "y", "intensity", "mean", "variance"],
        &[&xs, &ys, &intensity, &mean, &var],
    )
}

fn cmd_benchmark(a: &BenchmarkArgs, exec: Execution, out: &mut dyn Write) -> Result<()> {
    let start = Instant::now();
    let grid = load_mask(&a.mask, a.width)?;
    let needed = a.m_list.iter().copied().chain([a.truth_m]).max().unwrap_or(0);
    if needed > grid.n_interior() {
        return Err(Error::arg(format!(
            "benchmark needs {needed} features, mask has {} interior nodes",
            grid.n_interior()
        )));
    }
    let basis = HarmonicBasis::compute(
        grid,
        needed,
        &EigenOptions {
            exec,
            ..Default::default()
        },
    )?;
    let cfg = BenchmarkConfig {
        trials: a.trials,
        n: a.n,
        truth_m: a.truth_m,
        m_values: a.m_list.clone(),
        boundary_points: a.boundary_points,
        kernel: a.kernel.spec()?,
        noise: a.noise,
        seed: a.seed,
        exec,
        ..Default::default()
    };
    let report = run_benchmark(&basis, &cfg)?;
    let col = |f: fn(&crate::benchmark::BenchmarkRow) -> f64| report.rows.iter().map(f).collect::<Vec<_>>();
    write_columns(
        &a.out,
        &["trial", "m", "mae"],
        &[&col(|r| r.trial as f64), &col(|r| r.m as f64), &col(|r| r.mae)],
    )?;
    let sd = report.truth_sd.iter().sum::<f64>() / report.truth_sd.len().max(1) as f64;
    writeln!(out, "truth_sd = {}", fmt_f64(sd))?;
    for &m in &a.m_list {
        if let Some(mae) = report.mean_mae(m) {
            writeln!(out, "m = {m}: mean_mae = {} ({:.4} sd)", fmt_f64(mae), mae / sd)?;
        }
    }
    writeln!(out, "seconds = {:.3}", start.elapsed().as_secs_f64())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clap_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn usage_errors_exit_with_one() {
        let mut sink = Vec::new();
        assert_eq!(run(["harmonic-gp", "basis"], &mut sink), 1);
        assert_eq!(run(["harmonic-gp", "nonsense"], &mut sink), 1);
        assert_eq!(run(["harmonic-gp", "--help"], &mut sink), 0);
    }

    #[test]
    fn bins_must_be_aligned() {
        assert!(check_bin_alignment(&[[0.5, 1.5], [2.5, 0.5]], [0.0, 0.0], 1.0).is_ok());
        let err = check_bin_alignment(&[[0.5, 1.5], [2.2, 0.5]], [0.0, 0.0], 1.0).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }
}
