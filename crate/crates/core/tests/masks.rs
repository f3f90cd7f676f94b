use std::path::Path;

use harmonic_gp::grid::{load_mask, shapes};

#[test]
fn shipped_star_matches_generator() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/star.pgm");
    let grid = load_mask(path, 1.0).unwrap();
    assert_eq!((grid.nx(), grid.ny()), (100, 100));
    assert_eq!(grid.mask(), shapes::star(100).as_slice());
    assert_eq!(grid.h(), 0.01);
}

#[test]
fn shipped_square_spans_the_unit_square() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/square.pgm");
    let grid = load_mask(path, 1.0).unwrap();
    assert_eq!(grid.n_interior(), 40 * 40);
    let h = grid.h();
    assert_eq!(h, 1.0 / 41.0);
    assert!(!grid.is_interior(0, 7) && !grid.is_interior(7, 0));
    assert_eq!(grid.node_position(1, 1), [h, h]);
    // the first node past the raster, which is exterior, sits at x = 1
    assert!((grid.nx() as f64 * h - 1.0).abs() < 1e-15);
}
