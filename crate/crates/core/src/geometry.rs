//! Implicit bodies and per-cell cut geometry.
//!
//! Sign convention: the implicit function is positive inside the body and
//! negative in the fluid. Every primitive is a signed distance (or a lower
//! bound of one), so `|phi(x) - phi(y)| <= |x - y|` holds for all shapes
//! built here; the subdivision path relies on that bound to skip boxes that
//! lie wholly on one side.

use alloc::boxed::Box;
use alloc::vec::Vec;
use arrayvec::ArrayVec;

use crate::error::{Error, Result};
use crate::index::{add, Index};
use crate::mesh::GridSpec;

pub type Vec3 = [f64; 3];

pub(crate) fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm(a: Vec3) -> f64 {
    libm::sqrt(dot(a, a))
}

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn vsub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

/// Shape tag of an implicit function node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShapeKind {
    Constant,
    HalfSpace,
    Sphere,
    Cylinder,
    Box,
    Union,
    Intersection,
    Difference,
    Translate,
    Rotate,
}

/// A body described by an implicit function, positive inside.
#[derive(Clone, Debug, PartialEq)]
pub enum ImplicitFn {
    Constant(f64),
    /// `normal . x - offset`, with a unit normal pointing into the body.
    HalfSpace { normal: Vec3, offset: f64 },
    Sphere { center: Vec3, radius: f64 },
    /// Infinite cylinder along coordinate `axis`.
    Cylinder { axis: usize, center: Vec3, radius: f64 },
    Cuboid { lo: Vec3, hi: Vec3 },
    Union(Box<ImplicitFn>, Box<ImplicitFn>),
    Intersection(Box<ImplicitFn>, Box<ImplicitFn>),
    /// First body with the second carved out.
    Difference(Box<ImplicitFn>, Box<ImplicitFn>),
    Translate { shift: Vec3, inner: Box<ImplicitFn> },
    /// Body rotated by `matrix` (row-major, orthonormal).
    Rotate { matrix: [[f64; 3]; 3], inner: Box<ImplicitFn> },
}

/// `grad . x + value`
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Affine {
    pub grad: Vec3,
    pub value: f64,
}

impl Affine {
    pub fn eval(&self, x: Vec3) -> f64 {
        dot(self.grad, x) + self.value
    }

    fn neg(self) -> Affine {
        Affine { grad: scale(self.grad, -1.0), value: -self.value }
    }
}

fn corners(lo: Vec3, hi: Vec3, ndim: usize) -> ArrayVec<Vec3, 8> {
    let mut out = ArrayVec::new();
    for n in 0..(1usize << ndim) {
        let mut x = lo;
        for (d, xd) in x.iter_mut().enumerate().take(ndim) {
            if n >> d & 1 == 1 {
                *xd = hi[d];
            }
        }
        out.push(x);
    }
    out
}

/// Pick the candidate that dominates all others on the box, if any.
fn dominant(cands: &[Affine], lo: Vec3, hi: Vec3, ndim: usize, take_max: bool) -> Option<Affine> {
    let cs = corners(lo, hi, ndim);
    'outer: for a in cands {
        for b in cands {
            for &x in &cs {
                let (va, vb) = (a.eval(x), b.eval(x));
                if (take_max && va < vb) || (!take_max && va > vb) {
                    continue 'outer;
                }
            }
        }
        return Some(*a);
    }
    None
}

impl ImplicitFn {
    pub fn half_space(normal: Vec3, offset: f64) -> Self {
        let n = norm(normal);
        ImplicitFn::HalfSpace { normal: scale(normal, 1.0 / n), offset: offset / n }
    }

    /// Plane wall rising at `degrees` from the x axis through `anchor`,
    /// body below and to the right of it.
    pub fn ramp(degrees: f64, anchor: [f64; 2]) -> Self {
        // keep the diagonal exactly symmetric so it passes through nodes
        let (s, c) = if degrees == 45.0 {
            (core::f64::consts::FRAC_1_SQRT_2, core::f64::consts::FRAC_1_SQRT_2)
        } else {
            let a = degrees.to_radians();
            (libm::sin(a), libm::cos(a))
        };
        ImplicitFn::HalfSpace { normal: [s, -c, 0.0], offset: s * anchor[0] - c * anchor[1] }
    }

    pub fn sphere(center: Vec3, radius: f64) -> Self {
        ImplicitFn::Sphere { center, radius }
    }

    pub fn cylinder(axis: usize, center: Vec3, radius: f64) -> Self {
        ImplicitFn::Cylinder { axis, center, radius }
    }

    pub fn cuboid(lo: Vec3, hi: Vec3) -> Self {
        ImplicitFn::Cuboid { lo, hi }
    }

    /// Rectangle in the xy plane, unbounded in z.
    pub fn rectangle(lo: [f64; 2], hi: [f64; 2]) -> Self {
        ImplicitFn::Cuboid { lo: [lo[0], lo[1], f64::NEG_INFINITY], hi: [hi[0], hi[1], f64::INFINITY] }
    }

    pub fn union(a: ImplicitFn, b: ImplicitFn) -> Self {
        ImplicitFn::Union(Box::new(a), Box::new(b))
    }

    pub fn intersection(a: ImplicitFn, b: ImplicitFn) -> Self {
        ImplicitFn::Intersection(Box::new(a), Box::new(b))
    }

    pub fn difference(a: ImplicitFn, b: ImplicitFn) -> Self {
        ImplicitFn::Difference(Box::new(a), Box::new(b))
    }

    pub fn translate(self, shift: Vec3) -> Self {
        ImplicitFn::Translate { shift, inner: Box::new(self) }
    }

    /// Rotate by `angle` radians about coordinate axis `axis`.
    pub fn rotate(self, axis: usize, angle: f64) -> Self {
        let (s, c) = (libm::sin(angle), libm::cos(angle));
        let (a, b) = match axis {
            0 => (1, 2),
            1 => (2, 0),
            _ => (0, 1),
        };
        let mut m = [[0.0; 3]; 3];
        m[axis][axis] = 1.0;
        m[a][a] = c;
        m[a][b] = -s;
        m[b][a] = s;
        m[b][b] = c;
        ImplicitFn::Rotate { matrix: m, inner: Box::new(self) }
    }

    pub fn kind(&self) -> ShapeKind {
        match self {
            ImplicitFn::Constant(_) => ShapeKind::Constant,
            ImplicitFn::HalfSpace { .. } => ShapeKind::HalfSpace,
            ImplicitFn::Sphere { .. } => ShapeKind::Sphere,
            ImplicitFn::Cylinder { .. } => ShapeKind::Cylinder,
            ImplicitFn::Cuboid { .. } => ShapeKind::Box,
            ImplicitFn::Union(..) => ShapeKind::Union,
            ImplicitFn::Intersection(..) => ShapeKind::Intersection,
            ImplicitFn::Difference(..) => ShapeKind::Difference,
            ImplicitFn::Translate { .. } => ShapeKind::Translate,
            ImplicitFn::Rotate { .. } => ShapeKind::Rotate,
        }
    }

    pub fn eval(&self, x: Vec3) -> f64 {
        match self {
            ImplicitFn::Constant(v) => *v,
            ImplicitFn::HalfSpace { normal, offset } => dot(*normal, x) - offset,
            ImplicitFn::Sphere { center, radius } => radius - norm(vsub(x, *center)),
            ImplicitFn::Cylinder { axis, center, radius } => {
                let mut r = vsub(x, *center);
                r[*axis] = 0.0;
                radius - norm(r)
            }
            ImplicitFn::Cuboid { lo, hi } => {
                let mut v = f64::INFINITY;
                for d in 0..3 {
                    v = v.min(x[d] - lo[d]).min(hi[d] - x[d]);
                }
                v
            }
            ImplicitFn::Union(a, b) => a.eval(x).max(b.eval(x)),
            ImplicitFn::Intersection(a, b) => a.eval(x).min(b.eval(x)),
            ImplicitFn::Difference(a, b) => a.eval(x).min(-b.eval(x)),
            ImplicitFn::Translate { shift, inner } => inner.eval(vsub(x, *shift)),
            ImplicitFn::Rotate { matrix, inner } => inner.eval(rotate_back(matrix, x)),
        }
    }

    /// The function restricted to the box `[lo, hi]` when it is affine
    /// there, `None` when that cannot be established cheaply.
    pub fn local_affine(&self, lo: Vec3, hi: Vec3, ndim: usize) -> Option<Affine> {
        match self {
            ImplicitFn::Constant(v) => Some(Affine { grad: [0.0; 3], value: *v }),
            ImplicitFn::HalfSpace { normal, offset } => Some(Affine { grad: *normal, value: -offset }),
            ImplicitFn::Sphere { .. } | ImplicitFn::Cylinder { .. } => None,
            ImplicitFn::Cuboid { lo: blo, hi: bhi } => {
                let mut cands: ArrayVec<Affine, 6> = ArrayVec::new();
                for d in 0..3 {
                    if blo[d].is_finite() {
                        cands.push(Affine { grad: unit_vec(d, 1.0), value: -blo[d] });
                    }
                    if bhi[d].is_finite() {
                        cands.push(Affine { grad: unit_vec(d, -1.0), value: bhi[d] });
                    }
                }
                if cands.is_empty() {
                    return Some(Affine { grad: [0.0; 3], value: f64::INFINITY });
                }
                dominant(&cands, lo, hi, ndim, false)
            }
            ImplicitFn::Union(a, b) => {
                dominant(&[a.local_affine(lo, hi, ndim)?, b.local_affine(lo, hi, ndim)?], lo, hi, ndim, true)
            }
            ImplicitFn::Intersection(a, b) => {
                dominant(&[a.local_affine(lo, hi, ndim)?, b.local_affine(lo, hi, ndim)?], lo, hi, ndim, false)
            }
            ImplicitFn::Difference(a, b) => dominant(
                &[a.local_affine(lo, hi, ndim)?, b.local_affine(lo, hi, ndim)?.neg()],
                lo,
                hi,
                ndim,
                false,
            ),
            ImplicitFn::Translate { shift, inner } => {
                let a = inner.local_affine(vsub(lo, *shift), vsub(hi, *shift), ndim)?;
                Some(Affine { grad: a.grad, value: a.value - dot(a.grad, *shift) })
            }
            ImplicitFn::Rotate { matrix, inner } => {
                let mut blo = [f64::INFINITY; 3];
                let mut bhi = [f64::NEG_INFINITY; 3];
                for x in corners(lo, hi, 3) {
                    let y = rotate_back(matrix, x);
                    for d in 0..3 {
                        blo[d] = blo[d].min(y[d]);
                        bhi[d] = bhi[d].max(y[d]);
                    }
                }
                let a = inner.local_affine(blo, bhi, 3)?;
                // grad_x of g . (R^T x) is R g
                let mut g = [0.0; 3];
                for (r, gr) in g.iter_mut().enumerate() {
                    *gr = dot(matrix[r], a.grad);
                }
                Some(Affine { grad: g, value: a.value })
            }
        }
    }
}

fn unit_vec(d: usize, s: f64) -> Vec3 {
    let mut v = [0.0; 3];
    v[d] = s;
    v
}

fn rotate_back(m: &[[f64; 3]; 3], x: Vec3) -> Vec3 {
    [
        m[0][0] * x[0] + m[1][0] * x[1] + m[2][0] * x[2],
        m[0][1] * x[0] + m[1][1] * x[1] + m[2][1] * x[2],
        m[0][2] * x[0] + m[1][2] * x[1] + m[2][2] * x[2],
    ]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellKind {
    Regular,
    Cut,
    Covered,
}

/// Index into [`CutCell::apertures`] for axis `d`, `side` 0 (low) or 1 (high).
pub const fn face(d: usize, side: usize) -> usize {
    2 * d + side
}

/// Geometry of one cell.
///
/// Positions are relative to the cell center in units of the cell width,
/// so each component lies in `[-1/2, 1/2]`. `eb_area` is a physical area
/// (a length in 2D) and `eb_normal` is the unit normal pointing out of the
/// fluid into the body.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CutCell {
    pub kind: CellKind,
    pub volume_fraction: f64,
    pub centroid: Vec3,
    /// Open fraction of each face: lo_x, hi_x, lo_y, hi_y, lo_z, hi_z.
    pub apertures: [f64; 6],
    pub face_centroids: [Vec3; 6],
    pub eb_area: f64,
    pub eb_normal: Vec3,
    pub eb_centroid: Vec3,
}

fn face_centers() -> [Vec3; 6] {
    let mut fc = [[0.0; 3]; 6];
    for d in 0..3 {
        fc[face(d, 0)][d] = -0.5;
        fc[face(d, 1)][d] = 0.5;
    }
    fc
}

impl CutCell {
    pub fn regular(ndim: usize) -> Self {
        let mut apertures = [0.0; 6];
        for a in apertures.iter_mut().take(2 * ndim) {
            *a = 1.0;
        }
        CutCell {
            kind: CellKind::Regular,
            volume_fraction: 1.0,
            centroid: [0.0; 3],
            apertures,
            face_centroids: face_centers(),
            eb_area: 0.0,
            eb_normal: [0.0; 3],
            eb_centroid: [0.0; 3],
        }
    }

    pub fn covered() -> Self {
        CutCell {
            kind: CellKind::Covered,
            volume_fraction: 0.0,
            centroid: [0.0; 3],
            apertures: [0.0; 6],
            face_centroids: face_centers(),
            eb_area: 0.0,
            eb_normal: [0.0; 3],
            eb_centroid: [0.0; 3],
        }
    }

    pub fn is_covered(&self) -> bool {
        self.kind == CellKind::Covered
    }

    pub fn is_cut(&self) -> bool {
        self.kind == CellKind::Cut
    }

    /// Sum of outward face vectors `n_f a_f A_f` plus the boundary vector.
    /// Zero up to rounding for a closed cell.
    pub fn closure_residual(&self, spec: &GridSpec) -> Vec3 {
        let mut r = scale(self.eb_normal, self.eb_area);
        for d in 0..spec.ndim {
            let area = spec.face_area(d);
            r[d] += (self.apertures[face(d, 1)] - self.apertures[face(d, 0)]) * area;
        }
        r
    }
}

/// Knobs for cut-cell construction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeometryOptions {
    /// Levels of dyadic refinement for curved boundaries.
    pub subdivision_depth: u32,
    /// Cells with a smaller volume fraction are treated as covered.
    pub kappa_min: f64,
}

impl Default for GeometryOptions {
    fn default() -> Self {
        GeometryOptions { subdivision_depth: 6, kappa_min: 1e-6 }
    }
}

const SUBDIVISION_KAPPA_TOL: f64 = 1e-12;

fn fluid(v: f64) -> bool {
    v < 0.0
}

/// Fluid part of an edge from value `a` to value `b`: (fraction, midpoint).
fn clip_edge(a: f64, b: f64) -> (f64, f64) {
    match (fluid(a), fluid(b)) {
        (true, true) => (1.0, 0.5),
        (false, false) => (0.0, 0.5),
        (true, false) => {
            let t = a / (a - b);
            (t, 0.5 * t)
        }
        (false, true) => {
            let t = a / (a - b);
            (1.0 - t, 0.5 * (1.0 + t))
        }
    }
}

struct SquareClip {
    area: f64,
    centroid: [f64; 2],
    crossings: ArrayVec<[f64; 2], 4>,
}

/// Fluid polygon of the unit square with bilinear corner data taken
/// edge-by-edge. Corners ordered (0,0), (1,0), (0,1), (1,1).
fn clip_square(v: [f64; 4]) -> SquareClip {
    const P: [[f64; 2]; 4] = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
    let vals = [v[0], v[1], v[3], v[2]];
    let mut poly: ArrayVec<[f64; 2], 8> = ArrayVec::new();
    let mut crossings = ArrayVec::new();
    for e in 0..4 {
        let (a, b) = (vals[e], vals[(e + 1) % 4]);
        let (pa, pb) = (P[e], P[(e + 1) % 4]);
        if fluid(a) {
            poly.push(pa);
        }
        if fluid(a) != fluid(b) {
            let t = a / (a - b);
            let x = [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])];
            poly.push(x);
            crossings.push(x);
        }
    }
    let (mut a2, mut cx, mut cy) = (0.0, 0.0, 0.0);
    for k in 0..poly.len() {
        let p = poly[k];
        let q = poly[(k + 1) % poly.len()];
        let w = p[0] * q[1] - q[0] * p[1];
        a2 += w;
        cx += (p[0] + q[0]) * w;
        cy += (p[1] + q[1]) * w;
    }
    let centroid = if a2 > 0.0 { [cx / (3.0 * a2), cy / (3.0 * a2)] } else { [0.5, 0.5] };
    SquareClip { area: 0.5 * a2, centroid, crossings }
}

/// Axes spanning the face normal to `d`, ascending.
fn face_axes(d: usize) -> (usize, usize) {
    match d {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    }
}

fn cube_corner(x: usize, y: usize, z: usize) -> usize {
    x + 2 * y + 4 * z
}

struct CubeClip {
    volume: f64,
    centroid: Vec3,
    faces: [(f64, Vec3); 6],
    crossings: ArrayVec<Vec3, 12>,
}

/// Fluid part of the unit cube when the data are affine. Corner `n` sits
/// at `(n & 1, n >> 1 & 1, n >> 2 & 1)`.
fn clip_cube(v: [f64; 8]) -> CubeClip {
    let mut faces = [(0.0, [0.0; 3]); 6];
    for d in 0..3 {
        let (u, w) = face_axes(d);
        for side in 0..2 {
            let mut fv = [0.0; 4];
            for (n, val) in fv.iter_mut().enumerate() {
                let mut c = [0usize; 3];
                c[d] = side;
                c[u] = n & 1;
                c[w] = n >> 1;
                *val = v[cube_corner(c[0], c[1], c[2])];
            }
            let sq = clip_square(fv);
            let mut x = [0.0; 3];
            x[d] = side as f64;
            x[u] = sq.centroid[0];
            x[w] = sq.centroid[1];
            faces[face(d, side)] = (sq.area, x);
        }
    }
    let mut crossings = ArrayVec::new();
    for d in 0..3 {
        let (u, w) = face_axes(d);
        for n in 0..4 {
            let mut c0 = [0usize; 3];
            c0[u] = n & 1;
            c0[w] = n >> 1;
            let mut c1 = c0;
            c1[d] = 1;
            let (a, b) = (v[cube_corner(c0[0], c0[1], c0[2])], v[cube_corner(c1[0], c1[1], c1[2])]);
            if fluid(a) != fluid(b) {
                let t = a / (a - b);
                let mut x = [c0[0] as f64, c0[1] as f64, c0[2] as f64];
                x[d] = t;
                crossings.push(x);
            }
        }
    }
    if crossings.is_empty() {
        let full = if fluid(v[0]) { 1.0 } else { 0.0 };
        return CubeClip { volume: full, centroid: [0.5; 3], faces, crossings };
    }
    // Pyramids from a point on the cutting plane to every cube face.
    let mut apex = [0.0; 3];
    for x in &crossings {
        apex = [apex[0] + x[0], apex[1] + x[1], apex[2] + x[2]];
    }
    apex = scale(apex, 1.0 / crossings.len() as f64);
    let mut vol = 0.0;
    let mut m = [0.0; 3];
    for d in 0..3 {
        for side in 0..2 {
            let (area, c) = faces[face(d, side)];
            if area <= 0.0 {
                continue;
            }
            let h = libm::fabs(apex[d] - side as f64);
            let pv = h * area / 3.0;
            for k in 0..3 {
                m[k] += pv * (apex[k] + 0.75 * (c[k] - apex[k]));
            }
            vol += pv;
        }
    }
    let centroid = if vol > 0.0 { scale(m, 1.0 / vol) } else { [0.5; 3] };
    CubeClip { volume: vol, centroid, faces, crossings }
}

/// Area (after scaling by `dx`) and centroid of the planar polygon through
/// `pts`, ordered by angle about their mean in the plane normal to `n`.
fn plane_polygon(pts: &[Vec3], n: Vec3, dx: Vec3) -> (f64, Vec3) {
    let k = pts.len();
    let mut mean = [0.0; 3];
    for p in pts {
        mean = [mean[0] + p[0], mean[1] + p[1], mean[2] + p[2]];
    }
    mean = scale(mean, 1.0 / k as f64);
    if k < 3 {
        return (0.0, mean);
    }
    let seed = if libm::fabs(n[0]) < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let e1 = cross(n, seed);
    let e2 = cross(n, e1);
    let mut order: ArrayVec<(f64, Vec3), 12> = pts
        .iter()
        .map(|p| {
            let r = vsub(*p, mean);
            (libm::atan2(dot(r, e2), dot(r, e1)), *p)
        })
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    let phys = |p: Vec3| [p[0] * dx[0], p[1] * dx[1], p[2] * dx[2]];
    let mut area = 0.0;
    let mut m = [0.0; 3];
    let p0 = order[0].1;
    for t in 1..k - 1 {
        let (p1, p2) = (order[t].1, order[t + 1].1);
        let a = 0.5 * norm(cross(vsub(phys(p1), phys(p0)), vsub(phys(p2), phys(p0))));
        for c in 0..3 {
            m[c] += a * (p0[c] + p1[c] + p2[c]) / 3.0;
        }
        area += a;
    }
    let centroid = if area > 0.0 { scale(m, 1.0 / area) } else { mean };
    (area, centroid)
}

fn finish(mut cell: CutCell, ndim: usize) -> CutCell {
    if cell.volume_fraction <= 0.0 {
        return CutCell::covered();
    }
    if cell.volume_fraction >= 1.0 && cell.eb_area == 0.0 {
        return CutCell::regular(ndim);
    }
    cell.kind = CellKind::Cut;
    cell
}

fn unit_normal(g: Vec3, ndim: usize) -> Vec3 {
    let mut n = [0.0; 3];
    n[..ndim].copy_from_slice(&g[..ndim]);
    let len = norm(n);
    if len > 0.0 {
        scale(n, 1.0 / len)
    } else {
        n
    }
}

/// Geometry of `cell` cut by the body `f`.
///
/// Cells on which `f` is affine are clipped exactly; elsewhere the cell is
/// refined `opts.subdivision_depth` times and each leaf is clipped against
/// a plane fitted to its corner values. Curved cells close exactly because
/// the boundary vector is taken from the face apertures.
pub fn compute_cut_geometry(
    f: &ImplicitFn,
    cell: Index,
    spec: &GridSpec,
    opts: &GeometryOptions,
) -> Result<CutCell> {
    let ndim = spec.ndim;
    let lo = spec.node_position(cell);
    let mut hi_node = cell;
    for n in hi_node.iter_mut().take(ndim) {
        *n += 1;
    }
    let hi = spec.node_position(hi_node);
    let mut center = lo;
    let mut half_diag = 0.0;
    for d in 0..ndim {
        center[d] = 0.5 * (lo[d] + hi[d]);
        half_diag += 0.25 * spec.spacing[d] * spec.spacing[d];
    }
    let half_diag = libm::sqrt(half_diag) * (1.0 + 1e-12);
    let phi_c = f.eval(center);
    if phi_c > half_diag {
        return Ok(CutCell::covered());
    }
    if phi_c < -half_diag {
        return Ok(CutCell::regular(ndim));
    }
    let mut vals = [0.0; 8];
    for (n, v) in vals.iter_mut().enumerate().take(1 << ndim) {
        let node = add(cell, [(n & 1) as i64, (n >> 1 & 1) as i64, if ndim == 3 { (n >> 2) as i64 } else { 0 }]);
        *v = f.eval(spec.node_position(node));
    }
    if let Some(aff) = f.local_affine(lo, hi, ndim) {
        return Ok(if ndim == 2 { exact_2d(&vals, aff, spec) } else { exact_3d(&vals, aff, spec) });
    }
    subdivide(f, cell, spec, opts.subdivision_depth, lo)
}

fn exact_2d(v: &[f64; 8], aff: Affine, spec: &GridSpec) -> CutCell {
    let sq = clip_square([v[0], v[1], v[2], v[3]]);
    let mut cell = CutCell::regular(2);
    cell.volume_fraction = sq.area;
    cell.centroid = [sq.centroid[0] - 0.5, sq.centroid[1] - 0.5, 0.0];
    let edges = [(v[0], v[2]), (v[1], v[3]), (v[0], v[1]), (v[2], v[3])];
    for (fi, (a, b)) in edges.iter().enumerate() {
        let (frac, mid) = clip_edge(*a, *b);
        cell.apertures[fi] = frac;
        let d = fi / 2;
        let mut c = [0.0; 3];
        c[d] = if fi % 2 == 0 { -0.5 } else { 0.5 };
        c[1 - d] = mid - 0.5;
        cell.face_centroids[fi] = c;
    }
    if sq.crossings.len() == 2 {
        let (p, q) = (sq.crossings[0], sq.crossings[1]);
        let dx = (q[0] - p[0]) * spec.spacing[0];
        let dy = (q[1] - p[1]) * spec.spacing[1];
        cell.eb_area = libm::sqrt(dx * dx + dy * dy);
        cell.eb_centroid = [0.5 * (p[0] + q[0]) - 0.5, 0.5 * (p[1] + q[1]) - 0.5, 0.0];
        cell.eb_normal = if cell.eb_area > 0.0 { unit_normal(aff.grad, 2) } else { [0.0; 3] };
    }
    finish(cell, 2)
}

fn exact_3d(v: &[f64; 8], aff: Affine, spec: &GridSpec) -> CutCell {
    let cc = clip_cube(*v);
    let mut cell = CutCell::regular(3);
    cell.volume_fraction = cc.volume;
    cell.centroid = vsub(cc.centroid, [0.5; 3]);
    for (fi, (a, c)) in cc.faces.iter().enumerate() {
        cell.apertures[fi] = *a;
        cell.face_centroids[fi] = vsub(*c, [0.5; 3]);
    }
    if cc.crossings.len() >= 3 {
        let g = aff.grad;
        let gn = [g[0] * spec.spacing[0], g[1] * spec.spacing[1], g[2] * spec.spacing[2]];
        let (area, c) = plane_polygon(&cc.crossings, unit_normal(gn, 3), spec.spacing);
        cell.eb_area = area;
        cell.eb_centroid = vsub(c, [0.5; 3]);
        cell.eb_normal = if area > 0.0 { unit_normal(g, 3) } else { [0.0; 3] };
    }
    finish(cell, 3)
}

/// Fluid fraction and first moment of a segment, refined adaptively.
fn edge_fraction(f: &ImplicitFn, a: Vec3, b: Vec3, va: f64, vb: f64, level: u32, depth: u32) -> (f64, f64) {
    let mid = scale([a[0] + b[0], a[1] + b[1], a[2] + b[2]], 0.5);
    let vm = f.eval(mid);
    let half = 0.5 * norm(vsub(b, a)) * (1.0 + 1e-12);
    if vm > half {
        return (0.0, 0.0);
    }
    if vm < -half {
        return (1.0, 0.5);
    }
    if level >= depth {
        let (fr, m) = clip_edge(va, vb);
        return (fr, fr * m);
    }
    let (f0, m0) = edge_fraction(f, a, mid, va, vm, level + 1, depth);
    let (f1, m1) = edge_fraction(f, mid, b, vm, vb, level + 1, depth);
    (0.5 * (f0 + f1), 0.5 * (0.5 * m0 + 0.5 * f1 + 0.5 * m1))
}

/// Fluid fraction and first moments of a face square, refined adaptively.
/// `origin + s*eu + t*ev` spans the face for `s, t` in `[0, 1]`.
#[allow(clippy::too_many_arguments)]
fn face_fraction(
    f: &ImplicitFn,
    origin: Vec3,
    eu: Vec3,
    ev: Vec3,
    vals: [f64; 4],
    level: u32,
    depth: u32,
) -> (f64, [f64; 2]) {
    let at = |s: f64, t: f64| {
        [
            origin[0] + s * eu[0] + t * ev[0],
            origin[1] + s * eu[1] + t * ev[1],
            origin[2] + s * eu[2] + t * ev[2],
        ]
    };
    let vm = f.eval(at(0.5, 0.5));
    let half = 0.5 * norm([eu[0] + ev[0], eu[1] + ev[1], eu[2] + ev[2]]) * (1.0 + 1e-12);
    if vm > half {
        return (0.0, [0.0; 2]);
    }
    if vm < -half {
        return (1.0, [0.5; 2]);
    }
    if level >= depth {
        let sq = clip_square(vals);
        return (sq.area, [sq.area * sq.centroid[0], sq.area * sq.centroid[1]]);
    }
    let e = [
        f.eval(at(0.5, 0.0)),
        f.eval(at(0.0, 0.5)),
        f.eval(at(1.0, 0.5)),
        f.eval(at(0.5, 1.0)),
    ];
    let hu = scale(eu, 0.5);
    let hv = scale(ev, 0.5);
    let subs = [
        (at(0.0, 0.0), [vals[0], e[0], e[1], vm], 0.0, 0.0),
        (at(0.5, 0.0), [e[0], vals[1], vm, e[2]], 0.5, 0.0),
        (at(0.0, 0.5), [e[1], vm, vals[2], e[3]], 0.0, 0.5),
        (at(0.5, 0.5), [vm, e[2], e[3], vals[3]], 0.5, 0.5),
    ];
    let mut frac = 0.0;
    let mut m = [0.0; 2];
    for (o, sv, s0, t0) in subs {
        let (fr, sm) = face_fraction(f, o, hu, hv, sv, level + 1, depth);
        frac += 0.25 * fr;
        m[0] += 0.25 * (0.5 * sm[0] + s0 * fr);
        m[1] += 0.25 * (0.5 * sm[1] + t0 * fr);
    }
    (frac, m)
}

#[derive(Default)]
struct VolumeAcc {
    volume: f64,
    moment: Vec3,
    eb_area: f64,
    eb_moment: Vec3,
}

/// Accumulate the fluid part of the box `[lo, lo + size]` (physical), with
/// positions recorded relative to `cell_lo` in units of `dx`.
fn volume_rec(
    f: &ImplicitFn,
    spec: &GridSpec,
    cell_lo: Vec3,
    lo: Vec3,
    size: Vec3,
    level: u32,
    depth: u32,
    acc: &mut VolumeAcc,
) {
    let ndim = spec.ndim;
    let dx = spec.spacing;
    let mut center = lo;
    let mut hd = 0.0;
    for d in 0..ndim {
        center[d] = lo[d] + 0.5 * size[d];
        hd += 0.25 * size[d] * size[d];
    }
    let hd = libm::sqrt(hd) * (1.0 + 1e-12);
    let vm = f.eval(center);
    let mut rel_lo = [0.0; 3];
    let mut rel_size = [0.0; 3];
    for d in 0..ndim {
        rel_lo[d] = (lo[d] - cell_lo[d]) / dx[d];
        rel_size[d] = size[d] / dx[d];
    }
    let leaf_vol: f64 = (0..ndim).map(|d| rel_size[d]).product();
    if vm > hd {
        return;
    }
    if vm < -hd {
        acc.volume += leaf_vol;
        for d in 0..ndim {
            acc.moment[d] += leaf_vol * (rel_lo[d] + 0.5 * rel_size[d]);
        }
        return;
    }
    if level < depth {
        let half = scale(size, 0.5);
        for n in 0..(1usize << ndim) {
            let mut sub = lo;
            for d in 0..ndim {
                if n >> d & 1 == 1 {
                    sub[d] += half[d];
                }
            }
            volume_rec(f, spec, cell_lo, sub, half, level + 1, depth, acc);
        }
        return;
    }
    // Leaf: fit a plane to the corner values and clip exactly.
    let mut vals = [0.0; 8];
    for (n, v) in vals.iter_mut().enumerate().take(1 << ndim) {
        let mut x = lo;
        for d in 0..ndim {
            if n >> d & 1 == 1 {
                x[d] += size[d];
            }
        }
        *v = f.eval(x);
    }
    let to_rel = |p: &[f64], d: usize| rel_lo[d] + p[d] * rel_size[d];
    if ndim == 2 {
        let mean = 0.25 * (vals[0] + vals[1] + vals[2] + vals[3]);
        let gx = 0.5 * ((vals[1] - vals[0]) + (vals[3] - vals[2]));
        let gy = 0.5 * ((vals[2] - vals[0]) + (vals[3] - vals[1]));
        let fit = |s: f64, t: f64| mean + gx * (s - 0.5) + gy * (t - 0.5);
        let sq = clip_square([fit(0.0, 0.0), fit(1.0, 0.0), fit(0.0, 1.0), fit(1.0, 1.0)]);
        let v = sq.area * leaf_vol;
        acc.volume += v;
        for d in 0..2 {
            acc.moment[d] += v * to_rel(&sq.centroid, d);
        }
        if sq.crossings.len() == 2 {
            let (p, q) = (sq.crossings[0], sq.crossings[1]);
            let lx = (q[0] - p[0]) * size[0];
            let ly = (q[1] - p[1]) * size[1];
            let len = libm::sqrt(lx * lx + ly * ly);
            acc.eb_area += len;
            for d in 0..2 {
                acc.eb_moment[d] += len * to_rel(&[0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])], d);
            }
        }
    } else {
        let mean = vals.iter().sum::<f64>() / 8.0;
        let mut g = [0.0; 3];
        for (n, v) in vals.iter().enumerate() {
            for (d, gd) in g.iter_mut().enumerate() {
                let s = if n >> d & 1 == 1 { 0.25 } else { -0.25 };
                *gd += s * v;
            }
        }
        let mut fitted = [0.0; 8];
        for (n, fv) in fitted.iter_mut().enumerate() {
            *fv = mean;
            for (d, gd) in g.iter().enumerate() {
                *fv += gd * ((n >> d & 1) as f64 - 0.5);
            }
        }
        let cc = clip_cube(fitted);
        let v = cc.volume * leaf_vol;
        acc.volume += v;
        for d in 0..3 {
            acc.moment[d] += v * to_rel(&cc.centroid, d);
        }
        if !cc.crossings.is_empty() {
            // Closure of the leaf gives its boundary area.
            let mut s = [0.0; 3];
            for d in 0..3 {
                let (u, w) = face_axes(d);
                let area = size[u] * size[w];
                s[d] = (cc.faces[face(d, 1)].0 - cc.faces[face(d, 0)].0) * area;
            }
            let a = norm(s);
            let k = cc.crossings.len() as f64;
            let mut mean_x = [0.0; 3];
            for x in &cc.crossings {
                for d in 0..3 {
                    mean_x[d] += x[d] / k;
                }
            }
            acc.eb_area += a;
            for d in 0..3 {
                acc.eb_moment[d] += a * to_rel(&mean_x, d);
            }
        }
    }
}

fn corner_point(lo: Vec3, dx: Vec3, ndim: usize, n: usize) -> Vec3 {
    let mut x = lo;
    for d in 0..ndim {
        if n >> d & 1 == 1 {
            x[d] += dx[d];
        }
    }
    x
}

/// Fluid/body changes along a sampled segment.
fn edge_sign_changes(f: &ImplicitFn, a: Vec3, b: Vec3, samples: usize) -> usize {
    let mut prev = fluid(f.eval(a));
    let mut changes = 0;
    for s in 1..=samples {
        let t = s as f64 / samples as f64;
        let cur = fluid(f.eval([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), a[2] + t * (b[2] - a[2])]));
        if cur != prev {
            changes += 1;
        }
        prev = cur;
    }
    changes
}

/// Connected fluid and body regions among the nodes of an `m`-per-axis
/// sample lattice over the cell, face-adjacent nodes being neighbors.
fn region_counts(f: &ImplicitFn, lo: Vec3, dx: Vec3, ndim: usize, m: usize) -> (usize, usize) {
    let n = m + 1;
    let mut dims = [1usize; 3];
    for d in dims.iter_mut().take(ndim) {
        *d = n;
    }
    let total = dims[0] * dims[1] * dims[2];
    let node = |k: usize| [k % dims[0], k / dims[0] % dims[1], k / (dims[0] * dims[1])];
    let side: Vec<bool> = (0..total)
        .map(|k| {
            let p = node(k);
            let mut x = lo;
            for d in 0..ndim {
                x[d] += dx[d] * p[d] as f64 / m as f64;
            }
            fluid(f.eval(x))
        })
        .collect();
    let mut seen = alloc::vec![false; total];
    let mut stack = Vec::new();
    let (mut fluid_regions, mut body_regions) = (0, 0);
    for start in 0..total {
        if seen[start] {
            continue;
        }
        if side[start] {
            fluid_regions += 1;
        } else {
            body_regions += 1;
        }
        seen[start] = true;
        stack.push(start);
        while let Some(k) = stack.pop() {
            let p = node(k);
            let mut stride = 1;
            for d in 0..3 {
                if p[d] > 0 && !seen[k - stride] && side[k - stride] == side[k] {
                    seen[k - stride] = true;
                    stack.push(k - stride);
                }
                if p[d] + 1 < dims[d] && !seen[k + stride] && side[k + stride] == side[k] {
                    seen[k + stride] = true;
                    stack.push(k + stride);
                }
                stride *= dims[d];
            }
        }
    }
    (fluid_regions, body_regions)
}

fn subdivide(f: &ImplicitFn, cell: Index, spec: &GridSpec, depth: u32, lo: Vec3) -> Result<CutCell> {
    let ndim = spec.ndim;
    let dx = spec.spacing;
    let samples = 1usize << depth.min(12);
    // Edges may change sign at most once, and the cell must not split into
    // several fluid or body pieces, which would need more than one
    // boundary face.
    let corners = 1usize << ndim;
    for a in 0..corners {
        for d in 0..ndim {
            if a >> d & 1 == 1 {
                continue;
            }
            let start = corner_point(lo, dx, ndim, a);
            let mut end = start;
            end[d] += dx[d];
            if edge_sign_changes(f, start, end, samples) > 1 {
                return Err(Error::MultiCutCell { cell });
            }
        }
    }
    let m = if ndim == 2 { samples.min(64) } else { samples.min(16) };
    let (fluid_regions, body_regions) = region_counts(f, lo, dx, ndim, m);
    if fluid_regions > 1 || body_regions > 1 {
        return Err(Error::MultiCutCell { cell });
    }

    let mut cell_geo = CutCell::regular(ndim);
    for d in 0..ndim {
        for side in 0..2 {
            let fi = face(d, side);
            let mut origin = lo;
            origin[d] += side as f64 * dx[d];
            if ndim == 2 {
                let t = 1 - d;
                let mut end = origin;
                end[t] += dx[t];
                let (fr, m) = edge_fraction(f, origin, end, f.eval(origin), f.eval(end), 0, depth);
                cell_geo.apertures[fi] = fr;
                cell_geo.face_centroids[fi][t] = if fr > 0.0 { m / fr - 0.5 } else { 0.0 };
            } else {
                let (u, w) = face_axes(d);
                let eu = unit_vec(u, dx[u]);
                let ev = unit_vec(w, dx[w]);
                let at = |s: f64, t: f64| {
                    let mut x = origin;
                    x[u] += s * dx[u];
                    x[w] += t * dx[w];
                    x
                };
                let vals = [f.eval(at(0.0, 0.0)), f.eval(at(1.0, 0.0)), f.eval(at(0.0, 1.0)), f.eval(at(1.0, 1.0))];
                let (fr, m) = face_fraction(f, origin, eu, ev, vals, 0, depth);
                cell_geo.apertures[fi] = fr;
                if fr > 0.0 {
                    cell_geo.face_centroids[fi][u] = m[0] / fr - 0.5;
                    cell_geo.face_centroids[fi][w] = m[1] / fr - 0.5;
                }
            }
        }
    }

    let mut acc = VolumeAcc::default();
    volume_rec(f, spec, lo, lo, dx, 0, depth, &mut acc);
    let kappa = acc.volume;
    if kappa < SUBDIVISION_KAPPA_TOL {
        return Ok(CutCell::covered());
    }
    if kappa > 1.0 - SUBDIVISION_KAPPA_TOL {
        return Ok(CutCell::regular(ndim));
    }
    cell_geo.kind = CellKind::Cut;
    cell_geo.volume_fraction = kappa;
    for d in 0..ndim {
        cell_geo.centroid[d] = acc.moment[d] / kappa - 0.5;
    }
    let mut eb = [0.0; 3];
    for (d, e) in eb.iter_mut().enumerate().take(ndim) {
        *e = -(cell_geo.apertures[face(d, 1)] - cell_geo.apertures[face(d, 0)]) * spec.face_area(d);
    }
    cell_geo.eb_area = norm(eb);
    cell_geo.eb_normal = if cell_geo.eb_area > 0.0 { scale(eb, 1.0 / cell_geo.eb_area) } else { [0.0; 3] };
    if acc.eb_area > 0.0 {
        for d in 0..ndim {
            cell_geo.eb_centroid[d] = acc.eb_moment[d] / acc.eb_area - 0.5;
        }
    }
    Ok(cell_geo)
}
