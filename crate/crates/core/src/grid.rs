//! Masked raster grids describing the domain Ω.
//!
//! Nodes (not cell centres) carry the mask. Node `(i, j)` sits at
//! `origin + h * (i, j)`, with `i` the column and `j` the row in file order.
//! Interior nodes are numbered row-major (`j` outer, `i` inner); everything
//! else (`u = 0`) is the Dirichlet part of the raster.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

const EXTERIOR: u32 = u32::MAX;

#[derive(Clone, Debug, PartialEq)]
pub struct DomainGrid {
    nx: usize,
    ny: usize,
    h: f64,
    origin: Point,
    mask: Vec<bool>,
    index: Vec<u32>,
    nodes: Vec<(usize, usize)>,
}

/// Raster node indices and bilinear weights for one point.
pub(crate) type Corners = [(usize, f64); 4];

impl DomainGrid {
    /// Builds a grid from a row-major mask (`mask[j * nx + i]`).
    pub fn new(nx: usize, ny: usize, h: f64, origin: Point, mask: Vec<bool>) -> Result<Self> {
        if nx < 3 || ny < 3 {
            return Err(Error::arg(format!("grid must be at least 3x3, got {nx}x{ny}")));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::arg(format!("grid spacing must be positive, got {h}")));
        }
        if mask.len() != nx * ny {
            return Err(Error::Dimension {
                expected: nx * ny,
                actual: mask.len(),
            });
        }
        let mut index = vec![EXTERIOR; nx * ny];
        let mut nodes = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                if mask[j * nx + i] {
                    index[j * nx + i] = nodes.len() as u32;
                    nodes.push((i, j));
                }
            }
        }
        if nodes.is_empty() {
            return Err(Error::EmptyDomain);
        }
        Ok(Self {
            nx,
            ny,
            h,
            origin,
            mask,
            index,
            nodes,
        })
    }

    /// The open rectangle `(0, width) x (0, (ny + 1) h)` resolved by `nx x ny`
    /// interior nodes, with `h = width / (nx + 1)`.
    ///
    /// Every raster node is interior; the Dirichlet boundary is the ring of
    /// nodes one step outside the raster, so the rectangle's edges sit exactly
    /// at `x = 0`, `x = width`, `y = 0` and `y = (ny + 1) h`.
    pub fn full_rectangle(width: f64, nx: usize, ny: usize) -> Result<Self> {
        if !(width > 0.0) {
            return Err(Error::arg("width must be positive"));
        }
        let h = width / (nx + 1) as f64;
        Self::new(nx, ny, h, [h, h], vec![true; nx * ny])
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn origin(&self) -> Point {
        self.origin
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Number of interior nodes.
    pub fn n_interior(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_interior(&self, i: usize, j: usize) -> bool {
        i < self.nx && j < self.ny && self.mask[j * self.nx + i]
    }

    /// Dense index of an interior node.
    pub fn interior_index(&self, i: usize, j: usize) -> Option<usize> {
        if i >= self.nx || j >= self.ny {
            return None;
        }
        match self.index[j * self.nx + i] {
            EXTERIOR => None,
            k => Some(k as usize),
        }
    }

    /// Inverse of [`DomainGrid::interior_index`].
    pub fn interior_node(&self, k: usize) -> (usize, usize) {
        self.nodes[k]
    }

    pub fn interior_nodes(&self) -> &[(usize, usize)] {
        &self.nodes
    }

    pub fn node_position(&self, i: usize, j: usize) -> Point {
        [self.origin[0] + self.h * i as f64, self.origin[1] + self.h * j as f64]
    }

    /// Physical coordinates of every interior node, in interior order.
    pub fn interior_positions(&self) -> Vec<Point> {
        self.nodes.iter().map(|&(i, j)| self.node_position(i, j)).collect()
    }

    /// Physical coordinates of every raster node, row-major.
    pub fn raster_positions(&self) -> Vec<Point> {
        (0..self.ny)
            .flat_map(|j| (0..self.nx).map(move |i| (i, j)))
            .map(|(i, j)| self.node_position(i, j))
            .collect()
    }

    /// Positions of raster nodes outside Ω.
    pub fn exterior_positions(&self) -> Vec<Point> {
        (0..self.ny)
            .flat_map(|j| (0..self.nx).map(move |i| (i, j)))
            .filter(|&(i, j)| !self.mask[j * self.nx + i])
            .map(|(i, j)| self.node_position(i, j))
            .collect()
    }

    /// Spreads interior values onto the full raster, with zeros outside Ω.
    pub fn scatter(&self, interior: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nx * self.ny];
        for (k, &(i, j)) in self.nodes.iter().enumerate() {
            out[j * self.nx + i] = interior[k];
        }
        out
    }

    /// Bilinear corner weights of the cell containing `p`, or `None` outside
    /// the raster extent.
    pub(crate) fn corners(&self, p: Point) -> Option<Corners> {
        let snap = |f: f64| {
            let r = f.round();
            if (f - r).abs() < 1e-9 {
                r
            } else {
                f
            }
        };
        let fx = snap((p[0] - self.origin[0]) / self.h);
        let fy = snap((p[1] - self.origin[1]) / self.h);
        let (xmax, ymax) = ((self.nx - 1) as f64, (self.ny - 1) as f64);
        if !(fx >= 0.0 && fx <= xmax && fy >= 0.0 && fy <= ymax) {
            return None;
        }
        let i0 = (fx.floor() as usize).min(self.nx - 2);
        let j0 = (fy.floor() as usize).min(self.ny - 2);
        let tx = fx - i0 as f64;
        let ty = fy - j0 as f64;
        let r = j0 * self.nx + i0;
        Some([
            (r, (1.0 - tx) * (1.0 - ty)),
            (r + 1, tx * (1.0 - ty)),
            (r + self.nx, (1.0 - tx) * ty),
            (r + self.nx + 1, tx * ty),
        ])
    }

    /// True iff `p` is inside the raster and the bilinear mask indicator at `p`
    /// exceeds one half.
    pub fn contains(&self, p: Point) -> bool {
        match self.corners(p) {
            None => false,
            Some(c) => {
                let v: f64 = c.iter().filter(|(r, _)| self.mask[*r]).map(|(_, w)| w).sum();
                v > 0.5
            }
        }
    }

    /// Physical extent `[xmin, xmax, ymin, ymax]` of the raster nodes.
    pub fn extent(&self) -> [f64; 4] {
        let [x0, y0] = self.origin;
        [
            x0,
            x0 + self.h * (self.nx - 1) as f64,
            y0,
            y0 + self.h * (self.ny - 1) as f64,
        ]
    }

    /// Polylines tracing the `level` isocontour of the bilinear mask indicator.
    ///
    /// The raster is padded with one ring of exterior nodes, so every
    /// polyline is closed. Small levels trace the ring of exterior nodes that
    /// touch Ω, i.e. where the Dirichlet condition is imposed.
    pub fn boundary_polylines(&self, level: f64) -> Vec<Vec<Point>> {
        let (nx, ny) = (self.nx as isize, self.ny as isize);
        let val = |i: isize, j: isize| -> f64 {
            if i < 0 || j < 0 || i >= nx || j >= ny {
                0.0
            } else if self.mask[(j * nx + i) as usize] {
                1.0
            } else {
                0.0
            }
        };
        let pos = |i: f64, j: f64| -> Point { [self.origin[0] + self.h * i, self.origin[1] + self.h * j] };
        // Edge keys: (i, j, 0) horizontal edge (i,j)-(i+1,j); (i, j, 1) vertical (i,j)-(i,j+1).
        type Key = (isize, isize, u8);
        let crossing = |key: Key| -> Point {
            let (i, j, dir) = key;
            let (a, b) = if dir == 0 {
                (val(i, j), val(i + 1, j))
            } else {
                (val(i, j), val(i, j + 1))
            };
            let t = (level - a) / (b - a);
            if dir == 0 {
                pos(i as f64 + t, j as f64)
            } else {
                pos(i as f64, j as f64 + t)
            }
        };

        let mut segments: Vec<(Key, Key)> = Vec::new();
        for j in -1..ny {
            for i in -1..nx {
                let v = [val(i, j), val(i + 1, j), val(i + 1, j + 1), val(i, j + 1)];
                let case = v
                    .iter()
                    .enumerate()
                    .fold(0u8, |acc, (k, &x)| acc | (((x > level) as u8) << k));
                let bottom = (i, j, 0);
                let right = (i + 1, j, 1);
                let top = (i, j + 1, 0);
                let left = (i, j, 1);
                let centre = v.iter().sum::<f64>() / 4.0;
                match case {
                    0 | 15 => {}
                    1 | 14 => segments.push((left, bottom)),
                    2 | 13 => segments.push((bottom, right)),
                    3 | 12 => segments.push((left, right)),
                    4 | 11 => segments.push((right, top)),
                    6 | 9 => segments.push((bottom, top)),
                    7 | 8 => segments.push((left, top)),
                    5 => {
                        if centre > level {
                            segments.push((left, top));
                            segments.push((bottom, right));
                        } else {
                            segments.push((left, bottom));
                            segments.push((right, top));
                        }
                    }
                    10 => {
                        if centre > level {
                            segments.push((left, bottom));
                            segments.push((right, top));
                        } else {
                            segments.push((left, top));
                            segments.push((bottom, right));
                        }
                    }
                    _ => unreachable!(),
                }
            }
        }

        let mut by_key: HashMap<Key, Vec<usize>> = HashMap::new();
        for (s, (a, b)) in segments.iter().enumerate() {
            by_key.entry(*a).or_default().push(s);
            by_key.entry(*b).or_default().push(s);
        }
        let mut used = vec![false; segments.len()];
        let mut lines = Vec::new();
        for start in 0..segments.len() {
            if used[start] {
                continue;
            }
            used[start] = true;
            let (first, mut cur) = segments[start];
            let mut line = vec![crossing(first), crossing(cur)];
            loop {
                let next = by_key[&cur].iter().copied().find(|&s| !used[s]);
                let Some(s) = next else { break };
                used[s] = true;
                let (a, b) = segments[s];
                cur = if a == cur { b } else { a };
                line.push(crossing(cur));
            }
            lines.push(line);
        }
        lines
    }

    /// `count` points spread uniformly by arc length along the `level` contour.
    pub fn boundary_points(&self, count: usize, level: f64) -> Vec<Point> {
        let lines = self.boundary_polylines(level);
        let seg_len = |a: Point, b: Point| ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        let total: f64 = lines
            .iter()
            .flat_map(|l| l.windows(2).map(|w| seg_len(w[0], w[1])))
            .sum();
        if count == 0 || total == 0.0 {
            return Vec::new();
        }
        let step = total / count as f64;
        let mut out = Vec::with_capacity(count);
        let mut target = 0.5 * step;
        let mut walked = 0.0;
        for l in &lines {
            for w in l.windows(2) {
                let len = seg_len(w[0], w[1]);
                while out.len() < count && target <= walked + len {
                    let t = if len > 0.0 { (target - walked) / len } else { 0.0 };
                    out.push([w[0][0] + t * (w[1][0] - w[0][0]), w[0][1] + t * (w[1][1] - w[0][1])]);
                    target += step;
                }
                walked += len;
            }
        }
        out
    }
}

/// Loads a PGM (P2/P5) or ASCII-grid mask; `width` is the physical width of
/// the raster, so `h = width / nx` and the origin is `(0, 0)`.
pub fn load_mask(path: impl AsRef<Path>, width: f64) -> Result<DomainGrid> {
    let bytes = std::fs::read(path)?;
    parse_mask(&bytes, width)
}

pub fn parse_mask(bytes: &[u8], width: f64) -> Result<DomainGrid> {
    if !(width > 0.0 && width.is_finite()) {
        return Err(Error::arg(format!("width must be positive, got {width}")));
    }
    let (nx, ny, mask) = if bytes.starts_with(b"P2") || bytes.starts_with(b"P5") {
        parse_pgm(bytes)?
    } else {
        parse_ascii_grid(bytes)?
    };
    let h = width / nx as f64;
    DomainGrid::new(nx, ny, h, [0.0, 0.0], mask)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let c = self.bytes[self.pos];
            if c == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if c.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Result<(usize, &'a str)> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::parse(start, "unexpected end of file"));
        }
        let s =
            std::str::from_utf8(&self.bytes[start..self.pos]).map_err(|_| Error::parse(start, "non-ASCII token"))?;
        Ok((start, s))
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        let (at, tok) = self.token()?;
        tok.parse()
            .map_err(|_| Error::parse(at, format!("expected {what}, found {tok:?}")))
    }
}

fn parse_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<bool>)> {
    let mut cur = Cursor { bytes, pos: 2 };
    let binary = bytes[1] == b'5';
    let nx = cur.number("width")?;
    let ny = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::parse(cur.pos, format!("maxval {maxval} out of range")));
    }
    let n = nx
        .checked_mul(ny)
        .ok_or_else(|| Error::parse(cur.pos, "raster too large"))?;
    let half = maxval as f64 / 2.0;
    let mut mask = Vec::with_capacity(n);
    if binary {
        // exactly one whitespace byte separates the header from the raster
        if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
            return Err(Error::parse(cur.pos, "missing whitespace after header"));
        }
        let start = cur.pos + 1;
        let width = if maxval < 256 { 1 } else { 2 };
        let need = n * width;
        if bytes.len() < start + need {
            return Err(Error::parse(
                bytes.len(),
                format!("raster truncated: need {need} bytes after offset {start}"),
            ));
        }
        for k in 0..n {
            let v = if width == 1 {
                bytes[start + k] as usize
            } else {
                ((bytes[start + 2 * k] as usize) << 8) | bytes[start + 2 * k + 1] as usize
            };
            mask.push(v as f64 > half);
        }
    } else {
        for _ in 0..n {
            let (at, tok) = cur.token()?;
            let v: usize = tok
                .parse()
                .map_err(|_| Error::parse(at, format!("expected pixel value, found {tok:?}")))?;
            if v > maxval {
                return Err(Error::parse(at, format!("pixel {v} exceeds maxval {maxval}")));
            }
            mask.push(v as f64 > half);
        }
    }
    Ok((nx, ny, mask))
}

fn parse_ascii_grid(bytes: &[u8]) -> Result<(usize, usize, Vec<bool>)> {
    let mut cur = Cursor { bytes, pos: 0 };
    let nx = cur.number("column count")?;
    let ny = cur.number("row count")?;
    let mut mask = Vec::with_capacity(nx * ny);
    for row in 0..ny {
        let (at, tok) = cur.token()?;
        if tok.len() != nx {
            return Err(Error::parse(
                at,
                format!("row {row} has {} cells, expected {nx}", tok.len()),
            ));
        }
        for (k, c) in tok.bytes().enumerate() {
            match c {
                b'0' => mask.push(false),
                b'1' => mask.push(true),
                _ => return Err(Error::parse(at + k, format!("invalid cell {:?}", c as char))),
            }
        }
    }
    Ok((nx, ny, mask))
}

/// Writes a binary mask as an ASCII PGM (P2, maxval 1).
pub fn write_pgm(path: impl AsRef<Path>, nx: usize, ny: usize, mask: &[bool]) -> Result<()> {
    use std::fmt::Write as _;
    let mut s = format!("P2\n{nx} {ny}\n1\n");
    for j in 0..ny {
        let row: Vec<&str> = (0..nx).map(|i| if mask[j * nx + i] { "1" } else { "0" }).collect();
        let _ = writeln!(s, "{}", row.join(" "));
    }
    std::fs::write(path, s)?;
    Ok(())
}

/// Procedural masks used by the examples and the benchmark.
pub mod shapes {
    use std::f64::consts::PI;

    /// A five-armed star filling a `size x size` raster (row-major mask).
    ///
    /// Outer vertices reach 0.46 of the raster width from the centre, inner
    /// vertices 0.2, with one arm pointing up.
    pub fn star(size: usize) -> Vec<bool> {
        let (outer, inner, arms) = (0.46, 0.2, 5);
        let poly: Vec<[f64; 2]> = (0..2 * arms)
            .map(|k| {
                let r = if k % 2 == 0 { outer } else { inner };
                let a = PI / 2.0 + PI * k as f64 / arms as f64;
                [0.5 + r * a.cos(), 0.5 - r * a.sin()]
            })
            .collect();
        let mut mask = vec![false; size * size];
        for j in 0..size {
            for i in 0..size {
                let p = [(i as f64 + 0.5) / size as f64, (j as f64 + 0.5) / size as f64];
                mask[j * size + i] = point_in_polygon(p, &poly);
            }
        }
        mask
    }

    pub fn point_in_polygon(p: [f64; 2], poly: &[[f64; 2]]) -> bool {
        let mut inside = false;
        let n = poly.len();
        for k in 0..n {
            let a = poly[k];
            let b = poly[(k + n - 1) % n];
            if (a[1] > p[1]) != (b[1] > p[1]) && p[0] < (b[0] - a[0]) * (p[1] - a[1]) / (b[1] - a[1]) + a[0] {
                inside = !inside;
            }
        }
        inside
    }
}
