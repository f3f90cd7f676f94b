//! Harmonic features: Dirichlet-Laplacian eigenfunctions of the domain.

use nalgebra::DMatrix;

use crate::eigen::{solve_eigen, EigenOptions, EigenPairs};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::grid::{DomainGrid, Point};
use crate::stencil::assemble_stencil;

/// The bias-correction map exactly as it applies to eigenvalues of the
/// nine-point stencil of `+∇²` (all non-positive):
/// `2 ev / (sqrt(1 + ev h² / 3) + 1)`.
///
/// The stencil reproduces `∇² + (h²/12) ∇⁴` to leading order, so an exact
/// continuum eigenvalue `−μ` appears as `ev = −μ + μ² h²/12`, and this map
/// sends it back to `−μ` up to `O(h⁴)`.
pub fn correct_signed_eigenvalue(ev: f64, h: f64) -> f64 {
    2.0 * ev / ((1.0 + ev * h * h / 3.0).sqrt() + 1.0)
}

/// Corrects eigenvalues of the positive-definite `−∇²` stencil:
/// `λ̄² = −correct_signed_eigenvalue(−λ², h) = 2λ² / (sqrt(1 − λ²h²/3) + 1)`.
///
/// Order preserving; fails for negative input or for `λ²h² > 3`, where the
/// leading-order error model no longer has a real inverse.
pub fn correct_eigenvalues(raw: &[f64], h: f64) -> Result<Vec<f64>> {
    raw.iter()
        .map(|&l| {
            if !(l >= 0.0) {
                return Err(Error::arg(format!("eigenvalue {l} is negative")));
            }
            if l * h * h > 3.0 {
                return Err(Error::arg(format!(
                    "eigenvalue {l} is beyond the correctable range for h = {h} (λ²h² > 3)"
                )));
            }
            Ok(-correct_signed_eigenvalue(-l, h))
        })
        .collect()
}

/// `m` Laplacian eigenfunctions of a masked domain, orthonormal in L²(Ω).
#[derive(Clone, Debug)]
pub struct HarmonicBasis {
    grid: DomainGrid,
    lambda_sq: Vec<f64>,
    /// Node-major values: `values[k * m + j]` is φ_j at interior node `k`.
    values: Vec<f64>,
    residual: f64,
}

impl HarmonicBasis {
    /// Assembles the stencil, solves for the `m` smallest eigenpairs, corrects
    /// the eigenvalues and normalizes the eigenfunctions.
    pub fn compute(grid: DomainGrid, m: usize, opts: &EigenOptions) -> Result<Self> {
        let a = assemble_stencil(&grid);
        let pairs = solve_eigen(&a, m, opts)?;
        Self::from_eigenpairs(grid, pairs)
    }

    /// Builds a basis from unit-norm eigenvectors: `φ = v / h`, so that
    /// `h² Σ φ² = 1`. Pairs are sorted by corrected eigenvalue.
    pub fn from_eigenpairs(grid: DomainGrid, pairs: EigenPairs) -> Result<Self> {
        let n = grid.n_interior();
        let m = pairs.values.len();
        if pairs.vectors.nrows() != n {
            return Err(Error::Dimension {
                expected: n,
                actual: pairs.vectors.nrows(),
            });
        }
        let corrected = correct_eigenvalues(&pairs.values, grid.h())?;
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&x, &y| corrected[x].total_cmp(&corrected[y]));
        let inv_h = 1.0 / grid.h();
        let mut values = vec![0.0; n * m];
        for (j, &src) in order.iter().enumerate() {
            for (k, v) in pairs.vectors.column(src).iter().enumerate() {
                values[k * m + j] = v * inv_h;
            }
        }
        Ok(Self {
            lambda_sq: order.iter().map(|&k| corrected[k]).collect(),
            values,
            residual: pairs.max_residual,
            grid,
        })
    }

    /// Reassembles a basis from stored parts (mode-major `phi[j][k]`).
    pub fn from_parts(grid: DomainGrid, lambda_sq: Vec<f64>, phi: &[Vec<f64>]) -> Result<Self> {
        let n = grid.n_interior();
        let m = lambda_sq.len();
        if phi.len() != m {
            return Err(Error::Dimension {
                expected: m,
                actual: phi.len(),
            });
        }
        let mut values = vec![0.0; n * m];
        for (j, col) in phi.iter().enumerate() {
            if col.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    actual: col.len(),
                });
            }
            for (k, &v) in col.iter().enumerate() {
                values[k * m + j] = v;
            }
        }
        if lambda_sq.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::arg("basis eigenvalues must be positive"));
        }
        Ok(Self {
            grid,
            lambda_sq,
            values,
            residual: f64::NAN,
        })
    }

    pub fn grid(&self) -> &DomainGrid {
        &self.grid
    }

    pub fn m(&self) -> usize {
        self.lambda_sq.len()
    }

    /// Corrected eigenvalues λ̄², ascending.
    pub fn lambda_sq(&self) -> &[f64] {
        &self.lambda_sq
    }

    /// Square roots λ̄ of the eigenvalues, the frequencies at which the
    /// spectral density is evaluated.
    pub fn frequencies(&self) -> Vec<f64> {
        self.lambda_sq.iter().map(|l| l.sqrt()).collect()
    }

    /// Eigensolver residual bound achieved (NaN for bases loaded from disk).
    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// Values of φ_j at the interior nodes, in interior order.
    pub fn eigenfunction(&self, j: usize) -> Vec<f64> {
        let m = self.m();
        (0..self.grid.n_interior()).map(|k| self.values[k * m + j]).collect()
    }

    /// The first `m` features. Eigenpairs are sorted, so truncations nest.
    pub fn truncated(&self, m: usize) -> Result<Self> {
        if m == 0 || m > self.m() {
            return Err(Error::arg(format!("cannot truncate {} features to {m}", self.m())));
        }
        let old = self.m();
        let n = self.grid.n_interior();
        let mut values = Vec::with_capacity(n * m);
        for k in 0..n {
            values.extend_from_slice(&self.values[k * old..k * old + m]);
        }
        Ok(Self {
            grid: self.grid.clone(),
            lambda_sq: self.lambda_sq[..m].to_vec(),
            values,
            residual: self.residual,
        })
    }

    /// Feature row Φ(p) into `out` (length `m`): bilinear interpolation of
    /// each eigenfunction with exterior nodes held at zero.
    pub fn feature_row(&self, p: Point, out: &mut [f64]) {
        let m = self.m();
        out.iter_mut().for_each(|v| *v = 0.0);
        let Some(corners) = self.grid.corners(p) else {
            return;
        };
        let nx = self.grid.nx();
        for (raster, w) in corners {
            if w == 0.0 {
                continue;
            }
            let (i, j) = (raster % nx, raster / nx);
            if let Some(k) = self.grid.interior_index(i, j) {
                let row = &self.values[k * m..(k + 1) * m];
                for (o, v) in out.iter_mut().zip(row) {
                    *o += w * v;
                }
            }
        }
    }

    /// Feature matrix Φ (`points × m`).
    pub fn evaluate(&self, points: &[Point]) -> DMatrix<f64> {
        self.evaluate_with(points, Execution::default())
    }

    pub fn evaluate_with(&self, points: &[Point], exec: Execution) -> DMatrix<f64> {
        let m = self.m();
        // row-major scratch, one chunk per point
        let mut rows = vec![0.0; points.len() * m];
        exec::for_each_chunk_mut(exec, &mut rows, m.max(1), |k, out| self.feature_row(points[k], out));
        DMatrix::from_row_slice(points.len(), m, &rows)
    }

    /// Φ at every interior node (exact node values, no interpolation).
    pub fn evaluate_interior(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.grid.n_interior(), self.m(), &self.values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::EigenMethod;
    use crate::grid::shapes;
    use nalgebra::DMatrix;
    use std::f64::consts::PI;

    #[test]
    fn correction_formula_values() {
        // printed form at λ² = 100, h = 0.1: 200 / (sqrt(4/3) + 1)
        let printed = correct_signed_eigenvalue(100.0, 0.1);
        assert!((printed - 92.82032302755092).abs() < 1e-9);
        // positive-definite form at the same input: 200 / (sqrt(2/3) + 1)
        let c = correct_eigenvalues(&[100.0], 0.1).unwrap();
        assert!((c[0] - 110.10205144336438).abs() < 1e-9);
        assert_eq!(correct_eigenvalues(&[0.0], 0.1).unwrap(), vec![0.0]);
        assert_eq!(correct_eigenvalues(&[37.5], 0.0).unwrap(), vec![37.5]);
        assert!(correct_eigenvalues(&[-1.0], 0.1).is_err());
        let raw = [1.0, 5.0, 80.0, 250.0];
        let out = correct_eigenvalues(&raw, 0.05).unwrap();
        assert!(out.windows(2).all(|w| w[0] < w[1]));
    }

    /// The corrected value inverts the leading-order error model μ − μ²h²/12.
    #[test]
    fn correction_inverts_error_model() {
        let h = 0.02;
        for mu in [10.0, 200.0, 1500.0] {
            let raw = mu - mu * mu * h * h / 12.0;
            let c = correct_eigenvalues(&[raw], h).unwrap()[0];
            assert!((c - mu).abs() < 1e-10 * mu);
        }
    }

    #[test]
    fn normalization_scales_by_inverse_spacing() {
        let g = DomainGrid::full_rectangle(1.0, 9, 9).unwrap();
        let b = HarmonicBasis::compute(g.clone(), 5, &EigenOptions::default()).unwrap();
        let h = g.h();
        for j in 0..5 {
            let phi = b.eigenfunction(j);
            let norm: f64 = h * h * phi.iter().map(|x| x * x).sum::<f64>();
            assert!((norm - 1.0).abs() < 1e-10);
        }
        let gram = b.evaluate_interior().tr_mul(&b.evaluate_interior()) * (h * h);
        assert!((gram - DMatrix::identity(5, 5)).amax() < 1e-6);
        assert!(b.lambda_sq().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn unit_square_low_modes() {
        let g = DomainGrid::full_rectangle(1.0, 60, 60).unwrap();
        let opts = EigenOptions {
            method: EigenMethod::Krylov,
            ..Default::default()
        };
        let b = HarmonicBasis::compute(g, 6, &opts).unwrap();
        let want = [2.0, 5.0, 5.0, 8.0, 10.0, 10.0].map(|s| s * PI * PI);
        for (got, want) in b.lambda_sq().iter().zip(want) {
            assert!((got / want - 1.0).abs() < 1e-5, "{got} vs {want}");
        }
    }

    #[test]
    fn evaluation_at_nodes_and_outside() {
        let g = DomainGrid::new(20, 20, 0.05, [0.0, 0.0], shapes::star(20)).unwrap();
        let b = HarmonicBasis::compute(g.clone(), 4, &EigenOptions::default()).unwrap();
        let phi = b.evaluate(&g.interior_positions());
        assert_eq!(phi, b.evaluate_interior());
        let ext = b.evaluate(&g.exterior_positions());
        assert!(ext.iter().all(|&v| v == 0.0));
        let far = b.evaluate(&[[5.0, 5.0], [-0.1, 0.3]]);
        assert!(far.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn midpoint_next_to_exterior_cell() {
        // two interior nodes on the top row, the row below exterior
        let mut mask = vec![false; 16];
        mask[1] = true;
        mask[2] = true;
        let g = DomainGrid::new(4, 4, 1.0, [0.0, 0.0], mask).unwrap();
        let b = HarmonicBasis::compute(g, 1, &EigenOptions::default()).unwrap();
        let phi = b.eigenfunction(0);
        let (a, c) = (phi[0], phi[1]);
        let v = b.evaluate(&[[1.5, 0.5]])[(0, 0)];
        assert!((v - (a + c) / 4.0).abs() < 1e-14);
    }

    #[test]
    fn truncation_nests() {
        let g = DomainGrid::new(20, 20, 0.05, [0.0, 0.0], shapes::star(20)).unwrap();
        let b = HarmonicBasis::compute(g, 8, &EigenOptions::default()).unwrap();
        let t = b.truncated(3).unwrap();
        assert_eq!(t.lambda_sq(), &b.lambda_sq()[..3]);
        assert_eq!(t.eigenfunction(2), b.eigenfunction(2));
        assert!(b.truncated(9).is_err());
    }
}
