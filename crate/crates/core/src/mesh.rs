//! Grids, cut-cell databases, patch decomposition and ghost exchange.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::{compute_cut_geometry, face, CellKind, CutCell, GeometryOptions, ImplicitFn, Vec3};
use crate::index::{add, unit, Index, IndexBox, PatchArray};

/// Condition on one side of the domain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Boundary {
    Periodic,
    /// Ghost cells hold a fixed value.
    Inflow(f64),
    /// Ghost cells copy the nearest interior cell.
    Outflow,
}

/// Uniform Cartesian grid. Two-dimensional grids keep a single cell of
/// unit depth along z.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub ndim: usize,
    pub cells: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
    /// `[axis][side]`, side 0 low and 1 high.
    pub boundary: [[Boundary; 2]; 3],
}

impl GridSpec {
    pub fn new(ndim: usize, cells: [usize; 3], spacing: [f64; 3], origin: [f64; 3], bc: Boundary) -> Self {
        let mut g = GridSpec { ndim, cells, spacing, origin, boundary: [[bc; 2]; 3] };
        if ndim == 2 {
            g.cells[2] = 1;
            g.spacing[2] = 1.0;
            g.origin[2] = 0.0;
            g.boundary[2] = [Boundary::Outflow; 2];
        }
        g
    }

    pub fn with_boundary(mut self, d: usize, lo: Boundary, hi: Boundary) -> Self {
        self.boundary[d] = [lo, hi];
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.ndim != 2 && self.ndim != 3 {
            return Err(Error::InvalidInput("grid must be two- or three-dimensional"));
        }
        for d in 0..self.ndim {
            if self.cells[d] == 0 {
                return Err(Error::InvalidInput("grid needs at least one cell per axis"));
            }
            if !(self.spacing[d] > 0.0 && self.spacing[d].is_finite()) {
                return Err(Error::InvalidInput("grid spacing must be positive and finite"));
            }
            let [lo, hi] = self.boundary[d];
            if (lo == Boundary::Periodic) != (hi == Boundary::Periodic) {
                return Err(Error::InvalidInput("periodic boundaries must come in pairs"));
            }
        }
        Ok(())
    }

    pub fn domain(&self) -> IndexBox {
        IndexBox::new([0; 3], [self.cells[0] as i64, self.cells[1] as i64, self.cells[2] as i64])
    }

    pub fn num_cells(&self) -> usize {
        self.cells[..self.ndim].iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing[..self.ndim].iter().product()
    }

    /// Area of a full face normal to axis `d`.
    pub fn face_area(&self, d: usize) -> f64 {
        (0..self.ndim).filter(|&e| e != d).map(|e| self.spacing[e]).product()
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing[..self.ndim].iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_periodic(&self, d: usize) -> bool {
        self.boundary[d][0] == Boundary::Periodic
    }

    pub fn node_position(&self, node: Index) -> Vec3 {
        let mut x = [0.0; 3];
        for d in 0..self.ndim {
            x[d] = self.origin[d] + node[d] as f64 * self.spacing[d];
        }
        x
    }

    /// Physical position of a point given relative to cell `c` in cell widths.
    pub fn position(&self, c: Index, rel: Vec3) -> Vec3 {
        let mut x = [0.0; 3];
        for d in 0..self.ndim {
            x[d] = self.origin[d] + (c[d] as f64 + 0.5 + rel[d]) * self.spacing[d];
        }
        x
    }

    /// The in-domain cell that `c` stands for: periodic axes wrap, cells
    /// beyond a non-periodic side have none.
    pub fn canonical(&self, c: Index) -> Option<Index> {
        let mut out = c;
        for d in 0..self.ndim {
            let n = self.cells[d] as i64;
            if c[d] < 0 || c[d] >= n {
                if !self.is_periodic(d) {
                    return None;
                }
                out[d] = c[d].rem_euclid(n);
            }
        }
        if c[2] != out[2] || (self.ndim == 2 && c[2] != 0) {
            return None;
        }
        Some(out)
    }

    /// Position of an in-domain cell in k-major order.
    pub fn linear_index(&self, c: Index) -> usize {
        self.domain().linear(c)
    }
}

/// Cut-cell geometry over the domain plus a ghost ring.
///
/// Periodic ghosts copy their in-domain image. Ghosts beyond other sides
/// carry the geometry of the extended body so face fluxes there stay
/// consistent, but they never take part in redistribution.
#[derive(Debug, Clone)]
pub struct EBGrid {
    spec: GridSpec,
    cells: PatchArray<CutCell>,
}

impl EBGrid {
    /// Wrap a prepared cell array whose valid box is the domain.
    pub fn from_cells(spec: GridSpec, cells: PatchArray<CutCell>) -> Result<Self> {
        spec.validate()?;
        if cells.valid() != spec.domain() || cells.ndim() != spec.ndim {
            return Err(Error::GridMismatch);
        }
        Ok(EBGrid { spec, cells })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn ghost(&self) -> usize {
        self.cells.ghost()
    }

    pub fn cells(&self) -> &PatchArray<CutCell> {
        &self.cells
    }

    pub fn cell(&self, c: Index) -> Result<&CutCell> {
        self.cells.get(c)
    }

    /// Geometry of one patch with `ghost` rings.
    pub fn patch(&self, valid: IndexBox, ghost: usize) -> Result<PatchGeometry> {
        let cells = PatchArray::try_from_fn(self.spec.ndim, valid, ghost, |c| self.cells.get(c).copied())?;
        Ok(PatchGeometry { spec: self.spec, cells })
    }

    /// Smallest volume fraction among cut cells in the domain.
    pub fn min_cut_fraction(&self) -> Option<(Index, f64)> {
        let mut best: Option<(Index, f64)> = None;
        for c in self.spec.domain().iter() {
            let g = self.cells.get(c).ok()?;
            if g.is_cut() && best.is_none_or(|(_, k)| g.volume_fraction < k) {
                best = Some((c, g.volume_fraction));
            }
        }
        best
    }

    pub fn count(&self, kind: CellKind) -> usize {
        self.spec.domain().iter().filter(|&c| self.cells.get(c).map(|g| g.kind == kind).unwrap_or(false)).count()
    }
}

/// Build the cut-cell database for body `f` with `ghost` rings.
///
/// Cells with volume fraction below `opts.kappa_min` become covered; any
/// face they shared with a fluid cell is closed and its area vector is
/// folded into that cell's boundary face so every cell still closes.
pub fn build_ebgrid(f: &ImplicitFn, spec: &GridSpec, ghost: usize, opts: &GeometryOptions) -> Result<EBGrid> {
    spec.validate()?;
    let ndim = spec.ndim;
    let domain = spec.domain();
    let mut interior = Vec::with_capacity(domain.len());
    for c in domain.iter() {
        interior.push(compute_cut_geometry(f, c, spec, opts)?);
    }
    let raw = PatchArray::try_from_fn(ndim, domain, ghost + 1, |c| match spec.canonical(c) {
        Some(cc) => Ok(interior[domain.linear(cc)]),
        None => compute_cut_geometry(f, c, spec, opts),
    })?;
    let gone = |g: &CutCell| g.is_covered() || g.volume_fraction < opts.kappa_min;
    let fixed_domain = PatchArray::try_from_fn(ndim, domain, 0, |c| fix_small(spec, &raw, c, &gone))?;
    let cells = PatchArray::try_from_fn(ndim, domain, ghost, |c| match spec.canonical(c) {
        Some(cc) => fixed_domain.get(cc).copied(),
        None => fix_small(spec, &raw, c, &gone),
    })?;
    Ok(EBGrid { spec: *spec, cells })
}

fn fix_small(
    spec: &GridSpec,
    raw: &PatchArray<CutCell>,
    c: Index,
    gone: &impl Fn(&CutCell) -> bool,
) -> Result<CutCell> {
    let mut g = *raw.get(c)?;
    if gone(&g) {
        return Ok(CutCell::covered());
    }
    let mut eb = [g.eb_normal[0] * g.eb_area, g.eb_normal[1] * g.eb_area, g.eb_normal[2] * g.eb_area];
    let mut moment = [g.eb_centroid[0] * g.eb_area, g.eb_centroid[1] * g.eb_area, g.eb_centroid[2] * g.eb_area];
    let mut weight = g.eb_area;
    let mut changed = false;
    for d in 0..spec.ndim {
        for side in 0..2 {
            let fi = face(d, side);
            if g.apertures[fi] == 0.0 || !gone(raw.get(add(c, unit(d, 2 * side as i64 - 1)))?) {
                continue;
            }
            let a = g.apertures[fi] * spec.face_area(d);
            eb[d] += if side == 1 { a } else { -a };
            for k in 0..3 {
                moment[k] += a * g.face_centroids[fi][k];
            }
            weight += a;
            g.apertures[fi] = 0.0;
            changed = true;
        }
    }
    if changed {
        g.kind = CellKind::Cut;
        g.eb_area = libm::sqrt(eb[0] * eb[0] + eb[1] * eb[1] + eb[2] * eb[2]);
        g.eb_normal = if g.eb_area > 0.0 { [eb[0] / g.eb_area, eb[1] / g.eb_area, eb[2] / g.eb_area] } else { [0.0; 3] };
        g.eb_centroid = [moment[0] / weight, moment[1] / weight, moment[2] / weight];
    }
    Ok(g)
}

/// Cut-cell geometry of one patch.
#[derive(Debug, Clone)]
pub struct PatchGeometry {
    pub spec: GridSpec,
    pub cells: PatchArray<CutCell>,
}

impl PatchGeometry {
    pub fn valid(&self) -> IndexBox {
        self.cells.valid()
    }

    pub fn cell(&self, c: Index) -> Result<&CutCell> {
        self.cells.get(c)
    }

    /// In the domain (after periodic wrapping) and not covered.
    pub fn eligible(&self, c: Index) -> Result<bool> {
        if self.spec.canonical(c).is_none() {
            return Ok(false);
        }
        Ok(!self.cells.get(c)?.is_covered())
    }

    pub fn volume(&self, c: Index) -> Result<f64> {
        Ok(self.cells.get(c)?.volume_fraction * self.spec.cell_volume())
    }

    /// Cell centroid in index space, where cell `c` spans `[c, c + 1)`.
    pub fn position(&self, c: Index) -> Result<Vec3> {
        let g = self.cells.get(c)?;
        let mut x = [0.0; 3];
        for d in 0..self.spec.ndim {
            x[d] = c[d] as f64 + 0.5 + g.centroid[d];
        }
        Ok(x)
    }
}

/// A rectangular piece of the domain owned by one (simulated) rank.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub id: usize,
    pub owner: usize,
    pub valid: IndexBox,
    pub ghost: usize,
    /// Patches that supply at least one of this patch's ghost cells.
    pub neighbors: Vec<usize>,
}

fn smallest_prime_factor(n: usize) -> usize {
    (2..=n).find(|p| n.is_multiple_of(*p)).unwrap_or(n)
}

fn split(b: IndexBox, n: usize, ndim: usize, out: &mut Vec<IndexBox>) -> Result<()> {
    if n == 1 {
        out.push(b);
        return Ok(());
    }
    let p = smallest_prime_factor(n);
    let d = (0..ndim).fold(0, |best, d| if b.extent(d) > b.extent(best) { d } else { best });
    let ext = b.extent(d);
    if ext < p as i64 {
        return Err(Error::Decompose { reason: "more patches than cells along the longest axis" });
    }
    let (base, rem) = (ext / p as i64, ext % p as i64);
    let mut lo = b.lo[d];
    for part in 0..p as i64 {
        let w = base + if part < rem { 1 } else { 0 };
        let mut sub = b;
        sub.lo[d] = lo;
        sub.hi[d] = lo + w;
        lo += w;
        split(sub, n / p, ndim, out)?;
    }
    Ok(())
}

/// Split the domain into `n` patches by repeatedly cutting the longest
/// axis into near-equal parts, one prime factor of `n` at a time.
pub fn decompose(spec: &GridSpec, n: usize, ghost: usize) -> Result<Vec<Patch>> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::Decompose { reason: "need at least one patch" });
    }
    let mut boxes = Vec::new();
    split(spec.domain(), n, spec.ndim, &mut boxes)?;
    if n > 1 {
        for b in &boxes {
            if (0..spec.ndim).any(|d| b.extent(d) < ghost as i64) {
                return Err(Error::Decompose { reason: "a patch is thinner than the ghost width" });
            }
        }
    }
    let mut patches: Vec<Patch> = boxes
        .into_iter()
        .enumerate()
        .map(|(id, valid)| Patch { id, owner: id, valid, ghost, neighbors: Vec::new() })
        .collect();
    let owners = owner_map(spec, &patches);
    for p in patches.iter_mut() {
        let mut nb = Vec::new();
        for c in p.valid.grow(spec.ndim, ghost).iter() {
            if p.valid.contains(c) {
                continue;
            }
            if let Source::Copy(q, _) = ghost_source(spec, &owners, c) {
                if q != p.id && !nb.contains(&q) {
                    nb.push(q);
                }
            }
        }
        nb.sort_unstable();
        p.neighbors = nb;
    }
    Ok(patches)
}

fn owner_map(spec: &GridSpec, patches: &[Patch]) -> Vec<usize> {
    let domain = spec.domain();
    let mut owners = alloc::vec![usize::MAX; domain.len()];
    for p in patches {
        for c in p.valid.iter() {
            owners[domain.linear(c)] = p.id;
        }
    }
    owners
}

enum Source {
    Copy(usize, Index),
    Value(f64),
}

fn ghost_source(spec: &GridSpec, owners: &[usize], g: Index) -> Source {
    let mut src = g;
    let mut inflow = None;
    for d in 0..spec.ndim {
        let n = spec.cells[d] as i64;
        if g[d] >= 0 && g[d] < n {
            continue;
        }
        if spec.is_periodic(d) {
            src[d] = g[d].rem_euclid(n);
            continue;
        }
        let side = if g[d] < 0 { 0 } else { 1 };
        src[d] = g[d].clamp(0, n - 1);
        if let (None, Boundary::Inflow(v)) = (inflow, spec.boundary[d][side]) {
            inflow = Some(v);
        }
    }
    match inflow {
        Some(v) => Source::Value(v),
        None => Source::Copy(owners[spec.domain().linear(src)], src),
    }
}

#[derive(Debug, Clone, Default)]
struct ExchangePlan {
    /// `(source patch, destination patch)` to `(source cell, ghost cell)` pairs.
    copies: BTreeMap<(usize, usize), Vec<(Index, Index)>>,
    /// Ghost cells with fixed boundary values.
    fills: Vec<(usize, Index, f64)>,
}

/// Patches of a decomposed domain with precomputed ghost exchanges.
#[derive(Debug, Clone)]
pub struct Layout {
    spec: GridSpec,
    patches: Vec<Patch>,
    owners: Vec<usize>,
    plans: Vec<ExchangePlan>,
}

impl Layout {
    /// Decompose into `n` patches supporting ghost widths up to `ghost`.
    pub fn new(spec: &GridSpec, n: usize, ghost: usize) -> Result<Self> {
        let patches = decompose(spec, n, ghost)?;
        let owners = owner_map(spec, &patches);
        let plans = (0..=ghost)
            .map(|w| {
                let mut plan = ExchangePlan::default();
                for p in &patches {
                    for g in p.valid.grow(spec.ndim, w).iter() {
                        if p.valid.contains(g) {
                            continue;
                        }
                        match ghost_source(spec, &owners, g) {
                            Source::Copy(q, c) => plan.copies.entry((q, p.id)).or_default().push((c, g)),
                            Source::Value(v) => plan.fills.push((p.id, g, v)),
                        }
                    }
                }
                plan
            })
            .collect();
        Ok(Layout { spec: *spec, patches, owners, plans })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn patches(&self) -> &[Patch] {
        &self.patches
    }

    pub fn max_ghost(&self) -> usize {
        self.plans.len() - 1
    }

    /// Patch owning an in-domain cell.
    pub fn owner(&self, c: Index) -> Option<usize> {
        self.spec.domain().contains(c).then(|| self.owners[self.spec.domain().linear(c)])
    }

    /// Refresh every ghost cell of `field` from its owner or boundary.
    ///
    /// Runs as two phases over an in-process message table: all sends are
    /// packed first, then every receive is unpacked.
    pub fn fill_ghost(&self, field: &mut Field) -> Result<()> {
        if field.data.len() != self.patches.len() {
            return Err(Error::GridMismatch);
        }
        let plan = self.plans.get(field.ghost).ok_or(Error::InvalidInput("field ghost width exceeds layout"))?;
        let mut messages: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
        for (&(src, dst), pairs) in &plan.copies {
            let mut buf = Vec::with_capacity(pairs.len() * field.ncomp);
            for comp in &field.data[src] {
                for (c, _) in pairs {
                    buf.push(*comp.get(*c)?);
                }
            }
            messages.insert((src, dst), buf);
        }
        for ((src, dst), buf) in messages {
            let pairs = &plan.copies[&(src, dst)];
            let mut vals = buf.into_iter();
            for comp in field.data[dst].iter_mut() {
                for (_, g) in pairs {
                    comp.set(*g, vals.next().ok_or(Error::GridMismatch)?)?;
                }
            }
        }
        for &(p, g, v) in &plan.fills {
            for comp in field.data[p].iter_mut() {
                comp.set(g, v)?;
            }
        }
        Ok(())
    }
}

/// Free-function form of [`Layout::fill_ghost`].
pub fn fill_ghost(field: &mut Field, layout: &Layout) -> Result<()> {
    layout.fill_ghost(field)
}

/// Cell data on every patch of a layout, `ncomp` components each.
#[derive(Debug, Clone)]
pub struct Field {
    ncomp: usize,
    ghost: usize,
    data: Vec<Vec<PatchArray<f64>>>,
}

impl Field {
    pub fn new(layout: &Layout, ncomp: usize, ghost: usize, fill: f64) -> Self {
        let ndim = layout.spec.ndim;
        let data = layout
            .patches
            .iter()
            .map(|p| (0..ncomp).map(|_| PatchArray::new(ndim, p.valid, ghost, fill)).collect())
            .collect();
        Field { ncomp, ghost, data }
    }

    pub fn ncomp(&self) -> usize {
        self.ncomp
    }

    pub fn ghost(&self) -> usize {
        self.ghost
    }

    pub fn num_patches(&self) -> usize {
        self.data.len()
    }

    pub fn patch(&self, p: usize, comp: usize) -> &PatchArray<f64> {
        &self.data[p][comp]
    }

    pub fn patch_mut(&mut self, p: usize, comp: usize) -> &mut PatchArray<f64> {
        &mut self.data[p][comp]
    }

    /// Set valid cells from a function of (cell, component).
    pub fn set_valid(&mut self, mut f: impl FnMut(Index, usize) -> f64) {
        for patch in self.data.iter_mut() {
            for (comp, arr) in patch.iter_mut().enumerate() {
                let valid = arr.valid();
                for c in valid.iter() {
                    // valid cells are always allocated
                    let _ = arr.set(c, f(c, comp));
                }
            }
        }
    }

    /// Valid values of one component in domain (k-major) order.
    pub fn gather(&self, layout: &Layout, comp: usize) -> Vec<f64> {
        let domain = layout.spec.domain();
        let mut out = alloc::vec![0.0; domain.len()];
        for (p, patch) in layout.patches.iter().zip(&self.data) {
            for c in p.valid.iter() {
                out[domain.linear(c)] = *patch[comp].get(c).expect("valid cell");
            }
        }
        out
    }

    /// Inverse of [`Field::gather`].
    pub fn scatter(&mut self, layout: &Layout, comp: usize, values: &[f64]) -> Result<()> {
        let domain = layout.spec.domain();
        if values.len() != domain.len() {
            return Err(Error::GridMismatch);
        }
        for (p, patch) in layout.patches.iter().zip(self.data.iter_mut()) {
            for c in p.valid.iter() {
                patch[comp].set(c, values[domain.linear(c)])?;
            }
        }
        Ok(())
    }
}
