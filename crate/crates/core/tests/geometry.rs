mod common;

use common::{spec2, spec3};
use ebsrd_core::geometry::{compute_cut_geometry, face, CellKind, CutCell, GeometryOptions, ImplicitFn};
use ebsrd_core::mesh::{build_ebgrid, Boundary, GridSpec};
use proptest::prelude::*;

fn unit_grid(nx: usize, ny: usize) -> GridSpec {
    GridSpec::new(2, [nx, ny, 1], [1.0; 3], [0.0; 3], Boundary::Outflow)
}

/// Body below the line `y = x tan(deg) + b`.
fn below_line(deg: f64, b: f64) -> ImplicitFn {
    let (s, c) = deg.to_radians().sin_cos();
    ImplicitFn::half_space([s, -c, 0.0], -c * b)
}

/// Fluid fraction and centroid (cell-relative) of the unit cell at the
/// origin, by classifying the centers of an `n` x `n` lattice.
fn sampled(f: &ImplicitFn, n: usize) -> (f64, [f64; 2]) {
    let mut count = 0usize;
    let mut sum = [0.0; 2];
    for j in 0..n {
        for i in 0..n {
            let x = [(i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64, 0.0];
            if f.eval(x) < 0.0 {
                count += 1;
                sum[0] += x[0] - 0.5;
                sum[1] += x[1] - 0.5;
            }
        }
    }
    (count as f64 / (n * n) as f64, [sum[0] / count as f64, sum[1] / count as f64])
}

#[test]
fn trapezoid_cell_matches_the_area_formula_and_sampling() {
    let (deg, b) = (40.0f64, 0.1);
    let f = below_line(deg, b);
    let g = compute_cut_geometry(&f, [0, 0, 0], &unit_grid(1, 1), &GeometryOptions::default()).unwrap();
    let (h0, h1) = (b, b + deg.to_radians().tan());
    assert_eq!(g.kind, CellKind::Cut);
    assert!((g.volume_fraction - (1.0 - 0.5 * (h0 + h1))).abs() < 1e-14);
    assert!((g.apertures[face(0, 0)] - (1.0 - h0)).abs() < 1e-14);
    assert!((g.apertures[face(0, 1)] - (1.0 - h1)).abs() < 1e-14);
    assert_eq!(g.apertures[face(1, 0)], 0.0);
    assert_eq!(g.apertures[face(1, 1)], 1.0);

    let (kappa, centroid) = sampled(&f, 2000);
    assert!((g.volume_fraction - kappa).abs() < 1e-5, "{} vs {kappa}", g.volume_fraction);
    for d in 0..2 {
        assert!((g.centroid[d] - centroid[d]).abs() < 1e-5, "{:?} vs {centroid:?}", g.centroid);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn trapezoids_follow_the_area_formula(deg in 1.0f64..44.0, t in 0.01f64..0.99) {
        // keep both edge crossings inside the cell
        let rise = deg.to_radians().tan();
        let b = t * (1.0 - rise);
        let g = compute_cut_geometry(&below_line(deg, b), [0, 0, 0], &unit_grid(1, 1), &GeometryOptions::default()).unwrap();
        let (h0, h1) = (b, b + rise);
        prop_assert!((g.volume_fraction - (1.0 - 0.5 * (h0 + h1))).abs() < 1e-13);
        prop_assert!((g.apertures[face(0, 0)] - (1.0 - h0)).abs() < 1e-13);
        prop_assert!((g.apertures[face(0, 1)] - (1.0 - h1)).abs() < 1e-13);
    }
}

fn assert_closed(grid: &ebsrd_core::mesh::EBGrid, tol: f64) {
    let spec = grid.spec();
    for c in spec.domain().iter() {
        let g = grid.cell(c).unwrap();
        if g.is_cut() {
            let r = g.closure_residual(spec);
            let scale = spec.face_area(0);
            assert!(r.iter().all(|x| x.abs() < tol * scale), "{c:?}: {r:?}");
        }
    }
}

#[test]
fn cut_cells_close() {
    let opts = GeometryOptions::default();
    for deg in [10.0, 27.0, 40.0, 45.0, 50.0, 73.0] {
        let grid = build_ebgrid(&ImplicitFn::ramp(deg, [0.3, 0.05]), &spec2(48, 24, Boundary::Outflow), 2, &opts).unwrap();
        assert_closed(&grid, 1e-12);
    }
    let disc = build_ebgrid(&ImplicitFn::sphere([0.9, 0.5, 0.0], 0.3), &spec2(48, 24, Boundary::Outflow), 2, &opts).unwrap();
    assert_closed(&disc, 1e-6);
    let coarse = GeometryOptions { subdivision_depth: 4, ..opts };
    let ball = build_ebgrid(&ImplicitFn::sphere([0.5, 0.45, 0.52], 0.3), &spec3(16, Boundary::Outflow), 1, &coarse).unwrap();
    assert_closed(&ball, 1e-6);
}

fn assert_same(a: &CutCell, b: &CutCell, tol: f64) {
    assert_eq!(a.kind, b.kind);
    assert!((a.volume_fraction - b.volume_fraction).abs() < tol, "{a:?} vs {b:?}");
    for d in 0..3 {
        assert!((a.centroid[d] - b.centroid[d]).abs() < tol, "{a:?} vs {b:?}");
    }
    for f in 0..6 {
        assert!((a.apertures[f] - b.apertures[f]).abs() < tol, "{a:?} vs {b:?}");
    }
}

#[test]
fn whole_cell_translation_shifts_the_geometry() {
    let spec = spec2(32, 16, Boundary::Outflow);
    let h = spec.spacing[0];
    let opts = GeometryOptions::default();
    let shift = [3, 2, 0];
    let cases = [
        ImplicitFn::sphere([0.7, 0.31, 0.0], 0.17),
        ImplicitFn::ramp(33.0, [0.2, 0.0]),
        ImplicitFn::difference(ImplicitFn::rectangle([0.3, 0.1], [1.2, 0.6]), ImplicitFn::sphere([0.8, 0.35, 0.0], 0.15)),
    ];
    for body in cases {
        let moved = body.clone().translate([shift[0] as f64 * h, shift[1] as f64 * h, 0.0]);
        let a = build_ebgrid(&body, &spec, 0, &opts).unwrap();
        let b = build_ebgrid(&moved, &spec, 0, &opts).unwrap();
        for c in spec.domain().iter() {
            let s = [c[0] + shift[0], c[1] + shift[1], 0];
            if spec.domain().contains(s) {
                assert_same(a.cell(c).unwrap(), b.cell(s).unwrap(), 1e-10);
            }
        }
    }
}

#[test]
fn ramp_columns_with_equal_offsets_agree() {
    // slope 1/2: moving two columns right and one row up lands on the same cut
    let spec = unit_grid(40, 20);
    let body = ImplicitFn::half_space([0.5, -1.0, 0.0], -0.37);
    let grid = build_ebgrid(&body, &spec, 0, &GeometryOptions::default()).unwrap();
    let mut compared = 0;
    for c in spec.domain().iter() {
        let s = [c[0] + 2, c[1] + 1, 0];
        if grid.cell(c).unwrap().is_cut() && spec.domain().contains(s) {
            assert_same(grid.cell(c).unwrap(), grid.cell(s).unwrap(), 1e-12);
            compared += 1;
        }
    }
    assert!(compared > 20);
}

#[test]
fn mirrored_body_gives_mirrored_cells() {
    // reflect across the grid plane x = 8
    let spec = unit_grid(16, 8);
    let body = ImplicitFn::half_space([0.75, -1.0, 0.0], -0.3125);
    let mirror = ImplicitFn::half_space([-0.75, -1.0, 0.0], -0.3125 - 12.0);
    let opts = GeometryOptions::default();
    let a = build_ebgrid(&body, &spec, 0, &opts).unwrap();
    let b = build_ebgrid(&mirror, &spec, 0, &opts).unwrap();
    let mut cut = 0;
    for c in spec.domain().iter() {
        let (p, q) = (a.cell(c).unwrap(), b.cell([15 - c[0], c[1], 0]).unwrap());
        // an oblique unit normal is never dyadic, so corner values agree
        // only to rounding
        let close = |x: f64, y: f64| (x - y).abs() < 1e-14;
        assert_eq!(p.kind, q.kind);
        assert!(close(p.volume_fraction, q.volume_fraction), "{c:?}");
        assert!(close(p.centroid[0], -q.centroid[0]), "{c:?}");
        assert!(close(p.centroid[1], q.centroid[1]), "{c:?}");
        assert!(close(p.apertures[face(0, 0)], q.apertures[face(0, 1)]), "{c:?}");
        assert!(close(p.apertures[face(0, 1)], q.apertures[face(0, 0)]), "{c:?}");
        assert!(close(p.apertures[face(1, 0)], q.apertures[face(1, 0)]), "{c:?}");
        assert!(close(p.apertures[face(1, 1)], q.apertures[face(1, 1)]), "{c:?}");
        cut += p.is_cut() as usize;
    }
    assert!(cut > 10);
}

/// Body fraction of the cell `[x0, x0 + h] x [y0, y0 + h]` under the line
/// `y = a + m x`, integrating the clipped height piece by piece.
fn body_fraction(a: f64, m: f64, x0: f64, y0: f64, h: f64) -> f64 {
    let height = |x: f64| (a + m * x - y0).clamp(0.0, h);
    let mut knots = vec![x0, x0 + h];
    for level in [y0, y0 + h] {
        let x = (level - a) / m;
        if x > x0 && x < x0 + h {
            knots.push(x);
        }
    }
    knots.sort_by(f64::total_cmp);
    let area: f64 = knots.windows(2).map(|w| 0.5 * (height(w[0]) + height(w[1])) * (w[1] - w[0])).sum();
    area / (h * h)
}

#[test]
fn forty_degree_ramp_cuts_the_expected_cells() {
    let spec = spec2(64, 32, Boundary::Outflow);
    let h = spec.spacing[0];
    let opts = GeometryOptions::default();
    let (anchor, deg) = ([0.25, 0.0], 40.0f64);
    let grid = build_ebgrid(&ImplicitFn::ramp(deg, anchor), &spec, 0, &opts).unwrap();
    let m = deg.to_radians().tan();
    let a = anchor[1] - m * anchor[0];
    let mut expected = 0;
    for i in 0..64 {
        let x0 = i as f64 * h;
        // the body starts at the anchor; left of it everything is fluid
        let (lo, hi) = (a + m * x0, a + m * (x0 + h));
        for j in 0..32 {
            let y0 = j as f64 * h;
            let kappa = if x0 + h <= anchor[0] { 1.0 } else { 1.0 - body_fraction(a, m, x0, y0, h) };
            let crossed = hi > y0 && lo < y0 + h && x0 + h > anchor[0];
            let cut = kappa >= opts.kappa_min && kappa < 1.0;
            assert_eq!(crossed && cut, cut, "cell {i},{j}");
            let g = grid.cell([i, j, 0]).unwrap();
            assert_eq!(g.is_cut(), cut, "cell {i},{j}: {kappa}");
            if cut {
                assert!((g.volume_fraction - kappa).abs() < 1e-12, "cell {i},{j}");
                expected += 1;
            }
        }
    }
    assert_eq!(grid.count(CellKind::Cut), expected);
    assert!(expected > 60);
}

#[test]
fn cell_inside_a_sphere_is_covered() {
    let spec = spec3(8, Boundary::Outflow);
    let g = compute_cut_geometry(&ImplicitFn::sphere([0.5, 0.5, 0.5], 0.4), [3, 4, 3], &spec, &GeometryOptions::default())
        .unwrap();
    assert_eq!(g.kind, CellKind::Covered);
    assert_eq!(g.volume_fraction, 0.0);
}

fn fluid_volume(grid: &ebsrd_core::mesh::EBGrid) -> f64 {
    let spec = grid.spec();
    spec.domain().iter().map(|c| grid.cell(c).unwrap().volume_fraction).sum::<f64>() * spec.cell_volume()
}

#[test]
fn disc_and_ball_volumes_converge() {
    let r: f64 = 0.3;
    let disc = build_ebgrid(&ImplicitFn::sphere([0.5, 0.5, 0.0], r), &spec2(32, 32, Boundary::Outflow), 0, &GeometryOptions::default())
        .unwrap();
    let area = 1.0 - std::f64::consts::PI * r * r;
    assert!((fluid_volume(&disc) - area).abs() < 1e-5, "{}", fluid_volume(&disc));

    let opts = GeometryOptions { subdivision_depth: 4, ..GeometryOptions::default() };
    let ball = build_ebgrid(&ImplicitFn::sphere([0.5, 0.5, 0.5], r), &spec3(20, Boundary::Outflow), 0, &opts).unwrap();
    let vol = 1.0 - 4.0 / 3.0 * std::f64::consts::PI * r.powi(3);
    assert!((fluid_volume(&ball) - vol).abs() < 1e-4, "{}", fluid_volume(&ball));
}

#[test]
fn csg_combinators() {
    let below = ImplicitFn::half_space([0.0, 1.0, 0.0], 0.0);
    assert_eq!(below.eval([0.3, -0.2, 0.0]), -0.2);

    let pair = ImplicitFn::union(ImplicitFn::sphere([0.0; 3], 1.0), ImplicitFn::sphere([3.0, 0.0, 0.0], 1.0));
    assert_eq!(pair.eval([0.0; 3]), 1.0);

    let hollow = ImplicitFn::difference(ImplicitFn::cuboid([-1.0; 3], [1.0; 3]), ImplicitFn::sphere([0.0; 3], 0.5));
    assert!(hollow.eval([0.1, 0.0, 0.0]) < 0.0);
    assert!(hollow.eval([0.8, 0.8, 0.0]) > 0.0);

    let both = ImplicitFn::intersection(ImplicitFn::sphere([0.0; 3], 1.0), ImplicitFn::sphere([1.5, 0.0, 0.0], 1.0));
    assert!(both.eval([0.75, 0.0, 0.0]) > 0.0);
    assert!(both.eval([-0.5, 0.0, 0.0]) < 0.0);

    let moved = ImplicitFn::sphere([0.0; 3], 1.0).translate([2.0, 0.0, 0.0]);
    assert_eq!(moved.eval([2.0, 0.0, 0.0]), 1.0);
    let turned = ImplicitFn::half_space([1.0, 0.0, 0.0], 0.0).rotate(2, std::f64::consts::FRAC_PI_2);
    assert!(turned.eval([0.0, 1.0, 0.0]) > 0.9);
}

#[test]
fn doubly_cut_edges_are_rejected() {
    // a thin slab crossing a cell edge twice
    let slab = ImplicitFn::intersection(
        ImplicitFn::half_space([1.0, 0.0, 0.0], 0.4),
        ImplicitFn::half_space([-1.0, 0.0, 0.0], -0.6),
    );
    let err = build_ebgrid(&slab, &unit_grid(2, 2), 0, &GeometryOptions::default()).unwrap_err();
    assert!(err.is_geometry(), "{err:?}");
}
