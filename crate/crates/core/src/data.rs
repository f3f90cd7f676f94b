//! CSV datasets and seeded synthetic generators.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::error::{Error, Result};
use crate::grid::Point;

/// Points with one value each: a regression target, a 0/1 label or a count.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub points: Vec<Point>,
    pub values: Vec<f64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Full-precision formatting used for every emitted float (17 significant digits).
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Reads `x,y,value` rows (header required; extra columns ignored).
pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut data = Dataset::default();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let line = record.position().map_or(row + 2, |p| p.line() as usize);
        if record.len() < 3 {
            return Err(Error::Data(format!(
                "line {line}: expected x,y,value, got {} fields",
                record.len()
            )));
        }
        let field = |k: usize| -> Result<f64> {
            let v: f64 = record[k]
                .parse()
                .map_err(|_| Error::Data(format!("line {line}: '{}' is not a number", &record[k])))?;
            if !v.is_finite() {
                return Err(Error::Data(format!("line {line}: non-finite value")));
            }
            Ok(v)
        };
        data.points.push([field(0)?, field(1)?]);
        data.values.push(field(2)?);
    }
    Ok(data)
}

/// Reads bare `x,y` rows (header required).
pub fn read_points(path: impl AsRef<Path>) -> Result<Vec<Point>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut points = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let line = row + 2;
        if record.len() < 2 {
            return Err(Error::Data(format!("line {line}: expected x,y")));
        }
        let parse = |k: usize| -> Result<f64> {
            record[k]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Data(format!("line {line}: '{}' is not a finite number", &record[k])))
        };
        points.push([parse(0)?, parse(1)?]);
    }
    Ok(points)
}

/// Writes a header and numeric columns of equal length.
pub fn write_columns(path: impl AsRef<Path>, header: &[&str], columns: &[&[f64]]) -> Result<()> {
    let n = columns.first().map_or(0, |c| c.len());
    if let Some(c) = columns.iter().find(|c| c.len() != n) {
        return Err(Error::Dimension {
            expected: n,
            actual: c.len(),
        });
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for i in 0..n {
        w.write_record(columns.iter().map(|c| fmt_f64(c[i])))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_dataset(path: impl AsRef<Path>, data: &Dataset, value_name: &str) -> Result<()> {
    let xs: Vec<f64> = data.points.iter().map(|p| p[0]).collect();
    let ys: Vec<f64> = data.points.iter().map(|p| p[1]).collect();
    write_columns(path, &["x", "y", value_name], &[&xs, &ys, &data.values])
}

/// Two interleaved half-moons with Gaussian jitter, mapped into the unit
/// square (inside `[0.1, 0.9] × [0.3, 0.7]` before jitter). Labels are 0 and 1.
pub fn two_moons(n: usize, noise: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Normal::new(0.0, noise.max(0.0)).unwrap();
    let mut data = Dataset::default();
    for i in 0..n {
        let label = i % 2;
        let t = std::f64::consts::PI * rng.random::<f64>();
        let (x, y) = if label == 0 {
            (t.cos(), t.sin())
        } else {
            (1.0 - t.cos(), 0.5 - t.sin())
        };
        // raw moons span [-1, 2] × [-0.5, 1]
        let u = 0.1 + 0.8 * (x + 1.0) / 3.0 + jitter.sample(&mut rng);
        let v = 0.5 + 0.8 * (y - 0.25) / 3.0 + jitter.sample(&mut rng);
        data.points.push([u, v]);
        data.values.push(label as f64);
    }
    data
}

/// Poisson counts on `nx × ny` square bins of side `bin`, with the given log
/// intensity (per unit area) evaluated at bin centres.
#[derive(Clone, Debug)]
pub struct BinnedCounts {
    pub data: Dataset,
    pub log_intensity: Vec<f64>,
    pub bin_area: f64,
}

pub fn synthetic_counts(
    nx: usize,
    ny: usize,
    bin: f64,
    log_intensity: impl Fn(Point) -> f64,
    seed: u64,
) -> BinnedCounts {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let area = bin * bin;
    let mut data = Dataset::default();
    let mut truth = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let p = [(i as f64 + 0.5) * bin, (j as f64 + 0.5) * bin];
            let l = log_intensity(p);
            let rate = area * l.exp();
            let count = if rate > 0.0 {
                Poisson::new(rate).map(|d| d.sample(&mut rng)).unwrap_or(0.0)
            } else {
                0.0
            };
            data.points.push(p);
            data.values.push(count);
            truth.push(l);
        }
    }
    BinnedCounts {
        data,
        log_intensity: truth,
        bin_area: area,
    }
}
