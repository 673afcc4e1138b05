//! Fixtures shared by the benchmarks.

use driftspec::mesh::{generate, Shape};
use driftspec::{FieldSpec, ScalarField, TriMesh};

/// Unit square at mean edge `h` with the canonical gaussian well.
pub fn square_with_well(h: f64) -> (TriMesh, ScalarField) {
    let mesh = generate(&Shape::Rectangle { width: 1.0, height: 1.0 }, h).expect("valid square");
    let phi = FieldSpec::expr("-2*exp(-((x-0.5)^2 + (y-0.5)^2)/0.25)").build(2).expect("valid expression");
    (mesh, phi)
}
