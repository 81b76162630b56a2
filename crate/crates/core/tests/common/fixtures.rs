//! Hand-built configurations with known neighborhoods and weights.

use ebsrd_core::geometry::ImplicitFn;
use ebsrd_core::mesh::{Boundary, GridSpec};

use super::Mesh;

pub fn unit_grid(nx: usize, ny: usize) -> GridSpec {
    GridSpec::new(2, [nx, ny, 1], [1.0; 3], [0.0; 3], Boundary::Outflow)
}

/// Full lower-left 2x2 block, strips of volume fraction 0.3 along the
/// right and top, and a quarter disc in the top-right corner cell.
pub fn three_by_three() -> Mesh {
    let far = -100.0;
    let fluid = ImplicitFn::union(
        ImplicitFn::union(ImplicitFn::rectangle([far, far], [2.3, 2.0]), ImplicitFn::rectangle([far, far], [2.0, 2.3])),
        ImplicitFn::cylinder(2, [2.0, 2.0, 0.0], 0.3),
    );
    let body = ImplicitFn::difference(ImplicitFn::Constant(1.0), fluid);
    Mesh::new(&body, unit_grid(3, 3), 1).unwrap()
}

/// Cells of the 3x3 configuration are numbered 1..=9 with i fastest.
pub fn n(cell: usize) -> usize {
    cell - 1
}

/// Original weights of the 3x3 configuration: `a[i][j]` is the weight of
/// cell `j` in neighborhood `i`.
pub fn original_matrix() -> Vec<Vec<f64>> {
    let mut a = vec![vec![0.0; 9]; 9];
    for (i, j, x) in [
        (1, 1, 1.0),
        (2, 2, 0.5),
        (3, 2, 0.5),
        (3, 3, 1.0),
        (4, 4, 0.5),
        (5, 5, 0.25),
        (6, 5, 0.25),
        (6, 6, 0.5),
        (7, 4, 0.5),
        (7, 7, 1.0),
        (8, 5, 0.25),
        (8, 8, 0.5),
        (9, 5, 0.25),
        (9, 6, 0.5),
        (9, 8, 0.5),
        (9, 9, 1.0),
    ] {
        a[n(i)][n(j)] = x;
    }
    a
}

/// Weighted counterpart built from the cell volumes `v`, with the borrowed
/// fractions of cells 3, 6, 7, 8 and 9.
pub fn weighted_matrix(v: &[f64]) -> (Vec<Vec<f64>>, [f64; 5]) {
    let beta3 = (0.5 - v[n(3)]) / v[n(2)];
    let beta6 = (0.5 - v[n(6)]) / v[n(5)];
    let beta7 = (0.5 - v[n(7)]) / v[n(4)];
    let beta8 = (0.5 - v[n(8)]) / v[n(5)];
    let beta9 = (0.5 - v[n(9)]) / (v[n(5)] + v[n(6)] + v[n(8)]);
    let mut a = vec![vec![0.0; 9]; 9];
    for (i, j, x) in [
        (1, 1, 1.0),
        (2, 2, 1.0 - beta3 / 2.0),
        (3, 2, beta3 / 2.0),
        (3, 3, 1.0),
        (4, 4, 1.0 - beta7 / 2.0),
        (5, 5, 1.0 - (beta6 + beta8 + beta9) / 4.0),
        (6, 5, beta6 / 4.0),
        (6, 6, 1.0 - beta9 / 2.0),
        (7, 4, beta7 / 2.0),
        (7, 7, 1.0),
        (8, 5, beta8 / 4.0),
        (8, 8, 1.0 - beta9 / 2.0),
        (9, 5, beta9 / 4.0),
        (9, 6, beta9 / 2.0),
        (9, 8, beta9 / 2.0),
        (9, 9, 1.0),
    ] {
        a[n(i)][n(j)] = x;
    }
    (a, [beta3, beta6, beta7, beta8, beta9])
}

/// Body to the right of x = 2.45 and below y = 1.7 on a 4x4 unit grid;
/// the fluid corner sits at cells (1, 2), (2, 2), (1, 1) and (2, 1).
pub fn corner() -> Mesh {
    let body = ImplicitFn::union(ImplicitFn::half_space([1.0, 0.0, 0.0], 2.45), ImplicitFn::half_space([0.0, -1.0, 0.0], -1.7));
    Mesh::new(&body, unit_grid(4, 4), 1).unwrap()
}
