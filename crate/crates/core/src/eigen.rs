//! Smallest eigenpairs of a sparse symmetric positive-definite matrix.
//!
//! The iterative path is a thick-restart block Krylov method (the symmetric
//! counterpart of Krylov–Schur) run on the shift-inverted operator `A⁻¹`,
//! applied through a skyline Cholesky factor. The wanted eigenvalues of `A`
//! are the largest of `A⁻¹` and come out well separated. Every cycle:
//!
//! 1. extend the orthonormal basis `V` block by block with `A⁻¹` images,
//!    reorthogonalizing against everything kept;
//! 2. Rayleigh–Ritz on `Vᵀ A⁻¹ V`;
//! 3. check true residuals `‖A y − ρ y‖` with `ρ = yᵀ A y`;
//! 4. keep the leading Ritz vectors and restart from the residual directions
//!    of the unconverged ones.
//!
//! A block (rather than a single start vector) is needed to resolve repeated
//! eigenvalues, which symmetric domains produce exactly.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::skyline::SkylineCholesky;
use crate::stencil::SparseSymmetric;

/// Matrices up to this size go to the dense solver under [`EigenMethod::Auto`].
pub const DENSE_LIMIT: usize = 400;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EigenMethod {
    Auto,
    Krylov,
    Dense,
}

#[derive(Clone, Debug)]
pub struct EigenOptions {
    /// Relative residual bound `‖Av − λv‖ ≤ tol · λ`.
    pub tol: f64,
    /// Basis size; defaults to `max(2m + 20, 40)`.
    pub krylov_dim: Option<usize>,
    pub max_restarts: usize,
    pub block_size: usize,
    pub method: EigenMethod,
    pub exec: Execution,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            krylov_dim: None,
            max_restarts: 300,
            block_size: 6,
            method: EigenMethod::Auto,
            exec: Execution::default(),
        }
    }
}

/// Eigenpairs in ascending order; `vectors` has unit 2-norm columns.
#[derive(Clone, Debug)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
    /// Largest `‖Av − λv‖ / λ` over the returned pairs.
    pub max_residual: f64,
    pub restarts: usize,
}

/// The `m` algebraically smallest eigenpairs of `a`.
pub fn solve_eigen(a: &SparseSymmetric, m: usize, opts: &EigenOptions) -> Result<EigenPairs> {
    let n = a.n();
    if m == 0 {
        return Err(Error::arg("need at least one eigenpair"));
    }
    if m > n {
        return Err(Error::arg(format!(
            "requested {m} eigenpairs but the domain has only {n} interior nodes"
        )));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::arg("eigensolver tolerance must be positive"));
    }
    let dim = opts.krylov_dim.unwrap_or((2 * m + 20).max(40)).max(m + 1).min(n);
    let dense = match opts.method {
        EigenMethod::Dense => true,
        EigenMethod::Krylov => dim >= n,
        EigenMethod::Auto => n <= DENSE_LIMIT || dim >= n,
    };
    let mut pairs = if dense {
        dense_smallest(a, m)?
    } else {
        krylov_smallest(a, m, dim, opts)?
    };
    normalize_signs(&mut pairs.vectors);
    Ok(pairs)
}

/// Flips each column so that its entry of largest magnitude is positive.
fn normalize_signs(v: &mut DMatrix<f64>) {
    for mut col in v.column_iter_mut() {
        let mut best = 0.0f64;
        let mut sign = 1.0;
        for &x in col.iter() {
            if x.abs() > best {
                best = x.abs();
                sign = x.signum();
            }
        }
        if sign < 0.0 {
            col.neg_mut();
        }
    }
}

fn residuals(a: &SparseSymmetric, vectors: &DMatrix<f64>, exec: Execution) -> Vec<(f64, f64)> {
    let n = a.n();
    exec::map_indices(exec, vectors.ncols(), |j| {
        let y = vectors.column(j);
        let mut ay = vec![0.0; n];
        a.apply_into(y.as_slice(), &mut ay, Execution::Sequential);
        let rho: f64 = ay.iter().zip(y.iter()).map(|(p, q)| p * q).sum();
        let res = ay
            .iter()
            .zip(y.iter())
            .map(|(p, q)| (p - rho * q).powi(2))
            .sum::<f64>()
            .sqrt();
        (rho, res)
    })
}

fn dense_smallest(a: &SparseSymmetric, m: usize) -> Result<EigenPairs> {
    let n = a.n();
    let dense = DMatrix::from_fn(n, n, |r, c| a.get(r, c));
    let eig = SymmetricEigen::new(dense);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let vectors = DMatrix::from_fn(n, m, |r, c| eig.eigenvectors[(r, order[c])]);
    let res = residuals(a, &vectors, Execution::Sequential);
    let values: Vec<f64> = res.iter().map(|r| r.0).collect();
    let max_residual = res.iter().map(|(l, r)| r / l.abs()).fold(0.0, f64::max);
    Ok(EigenPairs {
        values,
        vectors,
        max_residual,
        restarts: 0,
    })
}

/// Orthogonalizes columns of `block` against the first `cols` columns of `basis`
/// (two classical Gram–Schmidt passes), then among themselves. Columns that
/// collapse are replaced by fresh random directions.
fn orthonormalize_block(basis: &DMatrix<f64>, cols: usize, block: &mut DMatrix<f64>, rng: &mut ChaCha8Rng) {
    let n = block.nrows();
    for j in 0..block.ncols() {
        for attempt in 0..4 {
            let before = block.column(j).norm();
            for _ in 0..2 {
                if cols > 0 {
                    let v = basis.columns(0, cols);
                    let coef = v.tr_mul(&block.column(j));
                    let mut col = block.column_mut(j);
                    col.gemv(-1.0, &v, &coef, 1.0);
                }
                for k in 0..j {
                    let d = block.column(k).dot(&block.column(j));
                    let ck = block.column(k).clone_owned();
                    block.column_mut(j).axpy(-d, &ck, 1.0);
                }
            }
            let after = block.column(j).norm();
            if after > 1e-10 * before && after > 0.0 {
                block.column_mut(j).scale_mut(1.0 / after);
                break;
            }
            // breakdown: the Krylov space is (numerically) invariant in this direction
            let fresh = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
            block.set_column(j, &fresh);
            if attempt == 3 {
                block.column_mut(j).fill(0.0);
            }
        }
    }
}

fn krylov_smallest(a: &SparseSymmetric, m: usize, dim: usize, opts: &EigenOptions) -> Result<EigenPairs> {
    let n = a.n();
    let exec = opts.exec;
    let chol = SkylineCholesky::factor(a)?;
    let apply_inverse = |block: &DMatrix<f64>| -> DMatrix<f64> {
        let mut out = block.clone();
        chol.solve_columns(out.as_mut_slice(), exec);
        out
    };

    let bsize = opts.block_size.clamp(1, dim.saturating_sub(m).max(1));
    let keep = ((m + dim) / 2).clamp(m, dim - bsize.min(dim - m).max(1));
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);

    let mut basis = DMatrix::<f64>::zeros(n, dim);
    let mut images = DMatrix::<f64>::zeros(n, dim);
    let mut cols = 0usize;

    // deterministic start: the normalized all-ones vector plus seeded random columns
    let mut block = DMatrix::from_fn(
        n,
        bsize,
        |_, c| {
            if c == 0 {
                1.0
            } else {
                StandardNormal.sample(&mut rng)
            }
        },
    );

    let mut worst = f64::INFINITY;
    for restart in 0..=opts.max_restarts {
        // expansion
        while cols < dim {
            let take = block.ncols().min(dim - cols);
            let mut b = block.columns(0, take).clone_owned();
            orthonormalize_block(&basis, cols, &mut b, &mut rng);
            let w = apply_inverse(&b);
            basis.columns_mut(cols, take).copy_from(&b);
            images.columns_mut(cols, take).copy_from(&w);
            cols += take;
            block = w;
        }

        // Rayleigh–Ritz
        let h = basis.tr_mul(&images);
        let h = (&h + h.transpose()) * 0.5;
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
        let s = DMatrix::from_fn(dim, keep, |r, c| eig.eigenvectors[(r, order[c])]);
        let theta: Vec<f64> = order[..keep].iter().map(|&k| eig.eigenvalues[k]).collect();
        let ritz = &basis * &s;
        let ritz_images = &images * &s;

        let wanted = ritz.columns(0, m).clone_owned();
        let res = residuals(a, &wanted, exec);
        let rel: Vec<f64> = res.iter().map(|(l, r)| r / l.abs()).collect();
        worst = rel.iter().copied().fold(0.0, f64::max);
        if rel.iter().all(|&r| r <= opts.tol) {
            let mut idx: Vec<usize> = (0..m).collect();
            idx.sort_by(|&x, &y| res[x].0.total_cmp(&res[y].0));
            let values = idx.iter().map(|&k| res[k].0).collect();
            let vectors = DMatrix::from_fn(n, m, |r, c| wanted[(r, idx[c])]);
            return Ok(EigenPairs {
                values,
                vectors,
                max_residual: worst,
                restarts: restart,
            });
        }
        if restart == opts.max_restarts {
            break;
        }

        // thick restart: keep the leading Ritz vectors, continue from residual
        // directions of the least converged ones
        let mut pending: Vec<usize> = (0..m).filter(|&j| rel[j] > opts.tol).collect();
        pending.sort_by(|&x, &y| rel[y].total_cmp(&rel[x]));
        pending.extend(m..keep);
        pending.truncate(bsize);
        let mut next = DMatrix::zeros(n, pending.len());
        for (c, &j) in pending.iter().enumerate() {
            let r = ritz_images.column(j) - ritz.column(j) * theta[j];
            next.set_column(c, &r);
        }
        basis.fill(0.0);
        images.fill(0.0);
        basis.columns_mut(0, keep).copy_from(&ritz);
        images.columns_mut(0, keep).copy_from(&ritz_images);
        cols = keep;
        block = next;
    }
    Err(Error::NoConvergence {
        restarts: opts.max_restarts,
        worst_residual: worst,
    })
}
