//! Nine-point finite-difference stencil of `-∇²` on the interior nodes.
//!
//! Entries are stored as small integer weights times one common scale
//! `1 / (6 h²)`: centre `20`, edge neighbours `-4`, diagonal neighbours `-1`.
//! That is `10/3`, `-2/3` and `-1/6` over `h²`. Keeping the integers exact
//! means a row whose neighbours are all interior sums to exactly zero.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::grid::DomainGrid;

pub const CENTRE_WEIGHT: f64 = 20.0;
pub const EDGE_WEIGHT: f64 = -4.0;
pub const DIAGONAL_WEIGHT: f64 = -1.0;

/// Symmetric sparse matrix in compressed-row layout, both triangles stored.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseSymmetric {
    n: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    weights: Vec<f64>,
    row_sums: Vec<f64>,
    scale: f64,
}

fn row_sums(row_offsets: &[usize], weights: &[f64]) -> Vec<f64> {
    row_offsets
        .windows(2)
        .map(|w| weights[w[0]..w[1]].iter().sum())
        .collect()
}

impl SparseSymmetric {
    /// Builds a matrix from per-row `(column, weight)` lists; entry values are
    /// `scale * weight`. Columns within a row must be strictly increasing and
    /// the pattern must be symmetric.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>, scale: f64) -> Result<Self> {
        let n = rows.len();
        let mut row_offsets = Vec::with_capacity(n + 1);
        let mut col_indices = Vec::new();
        let mut weights = Vec::new();
        row_offsets.push(0);
        for (r, row) in rows.iter().enumerate() {
            for w in row.windows(2) {
                if w[0].0 >= w[1].0 {
                    return Err(Error::arg(format!("row {r}: columns not increasing")));
                }
            }
            for &(c, v) in row {
                if c >= n {
                    return Err(Error::arg(format!("row {r}: column {c} out of range")));
                }
                col_indices.push(c);
                weights.push(v);
            }
            row_offsets.push(col_indices.len());
        }
        let m = Self {
            n,
            row_sums: row_sums(&row_offsets, &weights),
            row_offsets,
            col_indices,
            weights,
            scale,
        };
        for r in 0..n {
            for (c, v) in m.row(r) {
                if m.weight(c, r) != Some(v) {
                    return Err(Error::arg(format!("entry ({r},{c}) has no symmetric partner")));
                }
            }
        }
        Ok(m)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.col_indices.len()
    }

    /// Common factor applied to every stored weight.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    /// Unscaled weights, aligned with [`SparseSymmetric::col_indices`].
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `(column, weight)` pairs of row `r`, unscaled.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_offsets[r]..self.row_offsets[r + 1];
        self.col_indices[span.clone()]
            .iter()
            .copied()
            .zip(self.weights[span].iter().copied())
    }

    fn weight(&self, r: usize, c: usize) -> Option<f64> {
        let span = self.row_offsets[r]..self.row_offsets[r + 1];
        let cols = &self.col_indices[span.clone()];
        cols.binary_search(&c).ok().map(|k| self.weights[span.start + k])
    }

    /// Matrix entry `(r, c)`, zero when not stored.
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.weight(r, c).map_or(0.0, |w| w * self.scale)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|r| self.get(r, r)).collect()
    }

    /// `A v`.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.apply_with(v, Execution::default())
    }

    /// `A v` under an explicit execution policy. Each row is summed in
    /// column order, so the result is bitwise independent of the policy.
    ///
    /// Rows are evaluated in difference form, `Σ w_c (v_c − v_r) + (Σ w_c) v_r`,
    /// which is algebraically `Σ w_c v_c` but returns exact zeros wherever the
    /// operator annihilates a locally constant `v`.
    pub fn apply_with(&self, v: &[f64], exec: Execution) -> Result<Vec<f64>> {
        if v.len() != self.n {
            return Err(Error::Dimension {
                expected: self.n,
                actual: v.len(),
            });
        }
        let mut out = vec![0.0; self.n];
        self.apply_into(v, &mut out, exec);
        Ok(out)
    }

    pub(crate) fn apply_into(&self, v: &[f64], out: &mut [f64], exec: Execution) {
        const ROWS: usize = 512;
        exec::for_each_chunk_mut(exec, out, ROWS, |k, chunk| {
            for (o, r) in chunk.iter_mut().zip(k * ROWS..) {
                let span = self.row_offsets[r]..self.row_offsets[r + 1];
                let vr = v[r];
                let s: f64 = self.col_indices[span.clone()]
                    .iter()
                    .zip(&self.weights[span])
                    .map(|(&c, &w)| w * (v[c] - vr))
                    .sum();
                *o = (s + self.row_sums[r] * vr) * self.scale;
            }
        });
    }

    /// `vᵀ A v`.
    pub fn quadratic_form(&self, v: &[f64]) -> Result<f64> {
        let av = self.apply(v)?;
        Ok(av.iter().zip(v).map(|(a, b)| a * b).sum())
    }

    /// Writes the matrix in Matrix Market coordinate format (lower triangle).
    pub fn write_matrix_market(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        let lower: usize = (0..self.n).map(|r| self.row(r).filter(|&(c, _)| c <= r).count()).sum();
        writeln!(f, "%%MatrixMarket matrix coordinate real symmetric")?;
        writeln!(f, "{} {} {}", self.n, self.n, lower)?;
        for r in 0..self.n {
            for (c, w) in self.row(r).filter(|&(c, _)| c <= r) {
                writeln!(f, "{} {} {:.17e}", r + 1, c + 1, w * self.scale)?;
            }
        }
        f.flush()?;
        Ok(())
    }
}

/// Assembles `-∇²` with homogeneous Dirichlet conditions: neighbours outside
/// Ω are dropped, which is the same as pinning them to zero.
pub fn assemble_stencil(grid: &DomainGrid) -> SparseSymmetric {
    const OFFSETS: [(isize, isize, f64); 9] = [
        (-1, -1, DIAGONAL_WEIGHT),
        (0, -1, EDGE_WEIGHT),
        (1, -1, DIAGONAL_WEIGHT),
        (-1, 0, EDGE_WEIGHT),
        (0, 0, CENTRE_WEIGHT),
        (1, 0, EDGE_WEIGHT),
        (-1, 1, DIAGONAL_WEIGHT),
        (0, 1, EDGE_WEIGHT),
        (1, 1, DIAGONAL_WEIGHT),
    ];
    let h = grid.h();
    let scale = 1.0 / (6.0 * h * h);
    let n = grid.n_interior();
    let mut row_offsets = Vec::with_capacity(n + 1);
    let mut col_indices = Vec::with_capacity(9 * n);
    let mut weights = Vec::with_capacity(9 * n);
    row_offsets.push(0);
    for &(i, j) in grid.interior_nodes() {
        // row-major enumeration means these offsets already come out sorted
        for &(di, dj, w) in &OFFSETS {
            let (ni, nj) = (i as isize + di, j as isize + dj);
            if ni < 0 || nj < 0 {
                continue;
            }
            if let Some(c) = grid.interior_index(ni as usize, nj as usize) {
                col_indices.push(c);
                weights.push(w);
            }
        }
        row_offsets.push(col_indices.len());
    }
    SparseSymmetric {
        n,
        row_sums: row_sums(&row_offsets, &weights),
        row_offsets,
        col_indices,
        weights,
        scale,
    }
}
