//! Envelope (skyline) Cholesky factorization of a sparse SPD matrix.
//!
//! Row `i` of the factor is stored densely from its first structural nonzero
//! column up to the diagonal. Fill-in never leaves that envelope, and with the
//! row-major node numbering the envelope width is about one grid row, so a
//! factorization costs `O(n w²)` and a solve `O(n w)`.

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::stencil::SparseSymmetric;

#[derive(Clone, Debug)]
pub struct SkylineCholesky {
    n: usize,
    first: Vec<usize>,
    starts: Vec<usize>,
    values: Vec<f64>,
    /// Factor is of the unscaled weights; solves divide by this.
    scale: f64,
}

impl SkylineCholesky {
    pub fn factor(a: &SparseSymmetric) -> Result<Self> {
        let n = a.n();
        let mut first = vec![0usize; n];
        let mut starts = Vec::with_capacity(n + 1);
        starts.push(0);
        for (r, f) in first.iter_mut().enumerate() {
            *f = a.row(r).map(|(c, _)| c).min().unwrap_or(r).min(r);
            let len = r - *f + 1;
            starts.push(starts[r] + len);
        }
        let mut values = vec![0.0; starts[n]];
        for r in 0..n {
            for (c, w) in a.row(r).filter(|&(c, _)| c <= r) {
                values[starts[r] + c - first[r]] = w;
            }
        }

        for i in 0..n {
            let (fi, si) = (first[i], starts[i]);
            for j in fi..i {
                let (fj, sj) = (first[j], starts[j]);
                let k0 = fi.max(fj);
                let dot: f64 = values[si + k0 - fi..si + j - fi]
                    .iter()
                    .zip(&values[sj + k0 - fj..sj + j - fj])
                    .map(|(a, b)| a * b)
                    .sum();
                let diag = values[sj + j - fj];
                values[si + j - fi] = (values[si + j - fi] - dot) / diag;
            }
            let sq: f64 = values[si..si + i - fi].iter().map(|x| x * x).sum();
            let d = values[si + i - fi] - sq;
            if !(d > 0.0) {
                return Err(Error::Factorization(format!(
                    "matrix is not positive definite (pivot {i} = {d:.3e})"
                )));
            }
            values[si + i - fi] = d.sqrt();
        }
        Ok(Self {
            n,
            first,
            starts,
            values,
            scale: a.scale(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Stored entries of the factor.
    pub fn envelope_size(&self) -> usize {
        self.values.len()
    }

    /// Overwrites `x` with `A⁻¹ x`.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let (fi, si) = (self.first[i], self.starts[i]);
            let row = &self.values[si..si + i - fi];
            let dot: f64 = row.iter().zip(&x[fi..i]).map(|(a, b)| a * b).sum();
            x[i] = (x[i] - dot) / self.values[si + i - fi];
        }
        for i in (0..n).rev() {
            let (fi, si) = (self.first[i], self.starts[i]);
            let xi = x[i] / self.values[si + i - fi];
            x[i] = xi;
            let row = &self.values[si..si + i - fi];
            for (xk, l) in x[fi..i].iter_mut().zip(row) {
                *xk -= l * xi;
            }
        }
        let inv = 1.0 / self.scale;
        x.iter_mut().for_each(|v| *v *= inv);
    }

    /// Solves for each length-`n` column packed consecutively in `block`.
    pub fn solve_columns(&self, block: &mut [f64], exec: Execution) {
        exec::for_each_chunk_mut(exec, block, self.n, |_, col| self.solve_in_place(col));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{shapes, DomainGrid};
    use crate::stencil::assemble_stencil;

    #[test]
    fn solve_inverts_stencil() {
        let g = DomainGrid::new(30, 30, 1.0 / 30.0, [0.0, 0.0], shapes::star(30)).unwrap();
        let a = assemble_stencil(&g);
        let chol = SkylineCholesky::factor(&a).unwrap();
        let x: Vec<f64> = (0..a.n()).map(|k| ((k * 7) % 11) as f64 - 5.0).collect();
        let mut b = a.apply(&x).unwrap();
        chol.solve_in_place(&mut b);
        let err = x.iter().zip(&b).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn columns_solve_like_single() {
        let a = assemble_stencil(&DomainGrid::full_rectangle(1.0, 10, 8).unwrap());
        let chol = SkylineCholesky::factor(&a).unwrap();
        let n = a.n();
        let mut block: Vec<f64> = (0..3 * n).map(|k| (k as f64).sin()).collect();
        let mut single = block[n..2 * n].to_vec();
        chol.solve_columns(&mut block, Execution::Parallel);
        chol.solve_in_place(&mut single);
        assert_eq!(&block[n..2 * n], &single[..]);
    }

    #[test]
    fn rejects_indefinite() {
        let m = SparseSymmetric::from_rows(vec![vec![(0, 1.0), (1, 2.0)], vec![(0, 2.0), (1, 1.0)]], 1.0).unwrap();
        assert!(matches!(SkylineCholesky::factor(&m), Err(Error::Factorization(_))));
    }
}
