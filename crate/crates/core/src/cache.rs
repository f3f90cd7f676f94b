//! Binary basis cache.
//!
//! Little-endian layout: `"BGP1" | u32 nx, ny, m | f64 h, x0, y0 |
//! mask bits (row-major, LSB first, padded to a byte) | f64 lambda_sq[m] |
//! f64 phi[m][n_int]` with each eigenfunction in interior order.

use std::fs;
use std::path::Path;

use crate::basis::HarmonicBasis;
use crate::error::{Error, Result};
use crate::grid::DomainGrid;

pub const MAGIC: &[u8; 4] = b"BGP1";

pub fn encode(basis: &HarmonicBasis) -> Vec<u8> {
    let g = basis.grid();
    let (nx, ny, m) = (g.nx(), g.ny(), basis.m());
    let n = g.n_interior();
    let mut out = Vec::with_capacity(40 + (nx * ny).div_ceil(8) + 8 * m * (n + 1));
    out.extend_from_slice(MAGIC);
    for v in [nx, ny, m] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for v in [g.h(), g.origin()[0], g.origin()[1]] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let mut bits = vec![0u8; (nx * ny).div_ceil(8)];
    for (i, &inside) in g.mask().iter().enumerate() {
        if inside {
            bits[i / 8] |= 1 << (i % 8);
        }
    }
    out.extend_from_slice(&bits);
    for v in basis.lambda_sq() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for j in 0..m {
        for v in basis.eigenfunction(j) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::parse(self.pos, format!("truncated cache while reading {what}")));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()) as usize)
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let b = self.take(8, what)?;
        Ok(f64::from_le_bytes(b.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<HarmonicBasis> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::parse(0, "not a basis cache (bad magic)"));
    }
    let (nx, ny, m) = (r.u32("nx")?, r.u32("ny")?, r.u32("m")?);
    let (h, x0, y0) = (r.f64("h")?, r.f64("x0")?, r.f64("y0")?);
    let cells = nx
        .checked_mul(ny)
        .ok_or_else(|| Error::parse(4, "grid dimensions overflow"))?;
    let bits_at = r.pos;
    let bits = r.take(cells.div_ceil(8), "mask")?;
    let mask: Vec<bool> = (0..cells).map(|i| bits[i / 8] >> (i % 8) & 1 == 1).collect();
    let grid = DomainGrid::new(nx, ny, h, [x0, y0], mask).map_err(|e| Error::parse(bits_at, e.to_string()))?;
    let n = grid.n_interior();
    if m == 0 || m > n {
        return Err(Error::parse(
            12,
            format!("feature count {m} is invalid for {n} interior nodes"),
        ));
    }
    let lambda = (0..m).map(|_| r.f64("eigenvalues")).collect::<Result<Vec<_>>>()?;
    let phi = (0..m)
        .map(|_| (0..n).map(|_| r.f64("eigenfunctions")).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    if r.pos != bytes.len() {
        return Err(Error::parse(r.pos, "trailing bytes after basis cache"));
    }
    HarmonicBasis::from_parts(grid, lambda, &phi)
}

pub fn write_basis(path: impl AsRef<Path>, basis: &HarmonicBasis) -> Result<()> {
    fs::write(path, encode(basis))?;
    Ok(())
}

pub fn read_basis(path: impl AsRef<Path>) -> Result<HarmonicBasis> {
    decode(&fs::read(path)?)
}
