//! Regenerates the shipped domain masks under `data/`.

use harmonic_gp::grid::{shapes, write_pgm};

fn main() -> harmonic_gp::Result<()> {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    std::fs::create_dir_all(&dir)?;
    let size = 100;
    write_pgm(dir.join("star.pgm"), size, size, &shapes::star(size))?;
    // Raster nodes sit at multiples of h = width / 41 and the node just past
    // the last column and row is exterior, so a zero first row and column
    // make the domain exactly (0, width)².
    let n = 41;
    let square: Vec<bool> = (0..n * n).map(|k| k % n != 0 && k / n != 0).collect();
    write_pgm(dir.join("square.pgm"), n, n, &square)?;
    Ok(())
}
