//! Method-of-lines advection-diffusion on cut-cell grids.
//!
//! Each stage fills ghosts, computes face fluxes at face centroids, forms
//! the provisional update by dividing by the true cut volume, and then
//! hands the result to the chosen stabilizer.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::frd::{build_frd_plan, frd_apply, FrdPlan};
use crate::geometry::{face, Vec3};
use crate::index::{add, unit, Index, PatchArray};
use crate::mesh::{EBGrid, Field, Layout, PatchGeometry};
use crate::srd::{preprocess, srd_apply, HaloWidths, NeighborhoodPlan, SrdDiagnostics, SrdOptions, Variant};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stabilizer {
    None,
    Frd,
    SrdOriginal,
    SrdWeighted,
}

impl Stabilizer {
    fn variant(self) -> Option<Variant> {
        match self {
            Stabilizer::SrdOriginal => Some(Variant::Original),
            Stabilizer::SrdWeighted => Some(Variant::Weighted),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TimeIntegrator {
    ForwardEuler,
    /// Two-stage strong-stability-preserving Runge-Kutta, stabilized per stage.
    Heun,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SchemeConfig {
    pub velocity: Vec3,
    pub diffusivity: f64,
    /// Courant number on full cell widths.
    pub cfl: f64,
    pub stabilizer: Stabilizer,
    pub limiter: Limiter,
    /// Extrapolate face states to the half time level along the velocity,
    /// making each stage a single-step Godunov-type update.
    pub time_centered: bool,
    pub integrator: TimeIntegrator,
    pub srd: SrdOptions,
    pub halo: HaloWidths,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        SchemeConfig {
            velocity: [1.0, 0.0, 0.0],
            diffusivity: 0.0,
            cfl: 0.5,
            stabilizer: Stabilizer::SrdWeighted,
            limiter: Limiter::MonotonizedCentral,
            time_centered: false,
            integrator: TimeIntegrator::Heun,
            srd: SrdOptions::default(),
            halo: HaloWidths::default(),
        }
    }
}

impl SchemeConfig {
    /// Largest stable step on the background grid.
    pub fn time_step(&self, spec: &crate::mesh::GridSpec) -> Result<f64> {
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::InvalidInput("cfl must lie in (0, 1]"));
        }
        if !(self.diffusivity >= 0.0) {
            return Err(Error::InvalidInput("diffusivity must be non-negative"));
        }
        let h = spec.min_spacing();
        let speed = libm::sqrt(self.velocity.iter().take(spec.ndim).map(|v| v * v).sum());
        let mut dt = f64::INFINITY;
        if speed > 0.0 {
            dt = self.cfl * h / speed;
        }
        if self.diffusivity > 0.0 {
            dt = dt.min(self.cfl * h * h / (2.0 * spec.ndim as f64 * self.diffusivity));
        }
        if !dt.is_finite() {
            return Err(Error::InvalidInput("need a nonzero velocity or diffusivity to set the time step"));
        }
        Ok(dt)
    }
}

/// Slope limiter of the MUSCL reconstruction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Limiter {
    /// Plain central differences.
    Off,
    /// Zero slopes: donor-cell upwinding.
    FirstOrder,
    MinMod,
    /// Harmonic mean of the one-sided differences.
    VanLeer,
    /// Central difference clipped to twice either one-sided difference.
    MonotonizedCentral,
}

fn limited(dl: f64, dr: f64, limiter: Limiter) -> f64 {
    let c = 0.5 * (dl + dr);
    if limiter == Limiter::Off {
        return c;
    }
    if limiter == Limiter::FirstOrder || dl * dr <= 0.0 {
        return 0.0;
    }
    let (al, ar) = (libm::fabs(dl), libm::fabs(dr));
    let mag = match limiter {
        Limiter::MinMod => al.min(ar),
        Limiter::VanLeer => 2.0 * al * ar / (al + ar),
        _ => libm::fabs(c).min(2.0 * al.min(ar)),
    };
    if c > 0.0 {
        mag
    } else {
        -mag
    }
}

/// Per-index-unit slopes of `u` in cells within `ring` of the valid box.
/// A difference toward a covered neighbor is taken as zero.
pub fn cell_slopes(geom: &PatchGeometry, u: &PatchArray<f64>, limiter: Limiter, ring: usize) -> Result<PatchArray<Vec3>> {
    let ndim = geom.spec.ndim;
    PatchArray::try_from_fn(ndim, geom.valid(), ring, |c| {
        let mut s = [0.0; 3];
        if geom.cell(c)?.is_covered() {
            return Ok(s);
        }
        let uc = *u.get(c)?;
        for (d, sd) in s.iter_mut().enumerate().take(ndim) {
            let lo = add(c, unit(d, -1));
            let hi = add(c, unit(d, 1));
            let dl = if geom.cell(lo)?.is_covered() { 0.0 } else { uc - u.get(lo)? };
            let dr = if geom.cell(hi)?.is_covered() { 0.0 } else { u.get(hi)? - uc };
            *sd = limited(dl, dr, limiter);
        }
        Ok(s)
    })
}

/// Upwinded advective flux through the face between `c` and `c + e_d`,
/// positive along `+d`, including aperture and face area.
pub fn advective_face_flux(
    geom: &PatchGeometry,
    u: &PatchArray<f64>,
    slopes: &PatchArray<Vec3>,
    c: Index,
    d: usize,
    velocity: Vec3,
    half_dt: f64,
) -> Result<f64> {
    let r = add(c, unit(d, 1));
    let gr = geom.cell(r)?;
    let a = gr.apertures[face(d, 0)];
    let vel = velocity[d];
    if a == 0.0 || vel == 0.0 || geom.cell(c)?.is_covered() || gr.is_covered() {
        return Ok(0.0);
    }
    let fc = gr.face_centroids[face(d, 0)];
    let ndim = geom.spec.ndim;
    let mut xf = [0.0; 3];
    for e in 0..ndim {
        xf[e] = r[e] as f64 + 0.5 + fc[e];
    }
    let up = if vel > 0.0 { c } else { r };
    let x = geom.position(up)?;
    let s = slopes.get(up)?;
    let mut val = *u.get(up)?;
    for e in 0..ndim {
        val += s[e] * (xf[e] - x[e] - half_dt * velocity[e] / geom.spec.spacing[e]);
    }
    Ok(vel * val * a * geom.spec.face_area(d))
}

/// Centered diffusive flux `-nu dU/dx_d` through the face between `c` and
/// `c + e_d`, shifted toward the face centroid by interpolating with the
/// parallel faces when the face is partly blocked.
pub fn diffusive_face_flux(geom: &PatchGeometry, u: &PatchArray<f64>, c: Index, d: usize, nu: f64) -> Result<f64> {
    let r = add(c, unit(d, 1));
    let gr = geom.cell(r)?;
    let a = gr.apertures[face(d, 0)];
    if nu == 0.0 || a == 0.0 || geom.cell(c)?.is_covered() || gr.is_covered() {
        return Ok(0.0);
    }
    let ndim = geom.spec.ndim;
    let fc = gr.face_centroids[face(d, 0)];
    let jump = |shift: Index| -> Result<Option<f64>> {
        let l = add(c, shift);
        let h = add(r, shift);
        let (gl, gh) = (geom.cell(l)?, geom.cell(h)?);
        if gl.is_covered() || gh.is_covered() || gh.apertures[face(d, 0)] == 0.0 {
            return Ok(None);
        }
        Ok(Some(u.get(h)? - u.get(l)?))
    };
    let g0 = u.get(r)? - u.get(c)?;
    let trans: alloc::vec::Vec<usize> = (0..ndim).filter(|&e| e != d && fc[e] != 0.0).collect();
    let mut g = g0;
    match trans.as_slice() {
        [t] => {
            let w = libm::fabs(fc[*t]);
            let s = if fc[*t] > 0.0 { 1 } else { -1 };
            if let Some(g1) = jump(unit(*t, s))? {
                g = (1.0 - w) * g0 + w * g1;
            }
        }
        [t1, t2] => {
            let (w1, w2) = (libm::fabs(fc[*t1]), libm::fabs(fc[*t2]));
            let s1 = unit(*t1, if fc[*t1] > 0.0 { 1 } else { -1 });
            let s2 = unit(*t2, if fc[*t2] > 0.0 { 1 } else { -1 });
            if let (Some(g10), Some(g01), Some(g11)) = (jump(s1)?, jump(s2)?, jump(add(s1, s2))?) {
                g = (1.0 - w1) * (1.0 - w2) * g0 + w1 * (1.0 - w2) * g10 + (1.0 - w1) * w2 * g01 + w1 * w2 * g11;
            }
        }
        _ => {}
    }
    Ok(-nu * g / geom.spec.spacing[d] * a * geom.spec.face_area(d))
}

/// Net outward flux `sum F . n A` of every valid cell.
///
/// `dt` only matters for time-centered face states.
pub fn flux_sums(geom: &PatchGeometry, u: &PatchArray<f64>, cfg: &SchemeConfig, dt: f64) -> Result<PatchArray<f64>> {
    let ndim = geom.spec.ndim;
    let slopes = cell_slopes(geom, u, cfg.limiter, 1)?;
    let half_dt = if cfg.time_centered { 0.5 * dt } else { 0.0 };
    let face_flux = |c: Index, d: usize| -> Result<f64> {
        Ok(advective_face_flux(geom, u, &slopes, c, d, cfg.velocity, half_dt)?
            + diffusive_face_flux(geom, u, c, d, cfg.diffusivity)?)
    };
    PatchArray::try_from_fn(ndim, geom.valid(), 0, |c| {
        let mut s = 0.0;
        for d in 0..ndim {
            s += face_flux(c, d)? - face_flux(add(c, unit(d, -1)), d)?;
        }
        Ok(s)
    })
}

/// `uhat = u - dt * sums / V` on eligible valid cells, `u` elsewhere.
pub fn provisional_update(
    geom: &PatchGeometry,
    u: &PatchArray<f64>,
    sums: &PatchArray<f64>,
    dt: f64,
    out: &mut PatchArray<f64>,
) -> Result<()> {
    for c in geom.valid().iter() {
        let uc = *u.get(c)?;
        let v = if geom.eligible(c)? { uc - dt * sums.get(c)? / geom.volume(c)? } else { uc };
        out.set(c, v)?;
    }
    Ok(())
}

/// Advances a field on a decomposed cut-cell grid.
#[derive(Debug)]
pub struct Solver {
    layout: Layout,
    config: SchemeConfig,
    geoms: Vec<PatchGeometry>,
    plans: Vec<NeighborhoodPlan>,
    frd: Vec<FrdPlan>,
    dt: f64,
    steps: usize,
    diagnostics: SrdDiagnostics,
    post_reads: usize,
}

impl Solver {
    /// Build per-patch geometry and stabilizer plans.
    pub fn new(eb: &EBGrid, layout: Layout, config: SchemeConfig) -> Result<Self> {
        if eb.spec() != layout.spec() {
            return Err(Error::GridMismatch);
        }
        let dt = config.time_step(eb.spec())?;
        let pre = config.halo.pre.max(2);
        let geoms = layout
            .patches()
            .iter()
            .map(|p| eb.patch(p.valid, pre))
            .collect::<Result<Vec<_>>>()?;
        let mut plans = Vec::new();
        if let Some(variant) = config.stabilizer.variant() {
            let opts = SrdOptions { variant, ..config.srd };
            for g in &geoms {
                plans.push(preprocess(g, &opts, config.halo)?);
            }
        }
        let mut frd = Vec::new();
        if config.stabilizer == Stabilizer::Frd {
            for g in &geoms {
                frd.push(build_frd_plan(g)?);
            }
        }
        Ok(Solver { layout, config, geoms, plans, frd, dt, steps: 0, diagnostics: SrdDiagnostics::default(), post_reads: 0 })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn config(&self) -> &SchemeConfig {
        &self.config
    }

    pub fn geometries(&self) -> &[PatchGeometry] {
        &self.geoms
    }

    pub fn plans(&self) -> &[NeighborhoodPlan] {
        &self.plans
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn set_dt(&mut self, dt: f64) {
        self.dt = dt;
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    pub fn diagnostics(&self) -> &SrdDiagnostics {
        &self.diagnostics
    }

    /// Ghost width state fields need.
    pub fn field_ghost(&self) -> usize {
        self.config.halo.post.max(2)
    }

    pub fn new_field(&self, ncomp: usize) -> Field {
        Field::new(&self.layout, ncomp, self.field_ghost(), 0.0)
    }

    /// Deepest geometry ring and deepest redistribution ring read so far.
    pub fn halo_usage(&self) -> (usize, usize) {
        let pre = self.geoms.iter().map(|g| g.cells.deepest_read()).max().unwrap_or(0);
        let mut post = self.post_reads;
        for p in &self.plans {
            post = post
                .max(p.rows.deepest_read())
                .max(p.volume.deepest_read())
                .max(p.position.deepest_read())
                .max(p.eligible.deepest_read())
                .max(p.overlap.sets.deepest_read());
        }
        (pre, post)
    }

    fn redistribute(&mut self, uhat: &mut Field) -> Result<()> {
        if self.plans.is_empty() {
            return Ok(());
        }
        self.layout.fill_ghost(uhat)?;
        let opts = SrdOptions { variant: self.plans[0].variant, ..self.config.srd };
        let mut out = uhat.clone();
        for (p, plan) in self.plans.iter().enumerate() {
            for comp in 0..uhat.ncomp() {
                let src = uhat.patch(p, comp);
                let d = srd_apply(plan, src, out.patch_mut(p, comp), &opts)?;
                self.diagnostics.merge(&d);
                self.post_reads = self.post_reads.max(src.deepest_read());
            }
        }
        *uhat = out;
        Ok(())
    }

    /// Apply the stabilizer to initial data (state redistribution only).
    pub fn initialize(&mut self, u: &mut Field) -> Result<()> {
        self.redistribute(u)
    }

    fn stage(&mut self, u: &Field) -> Result<Field> {
        let mut u = u.clone();
        self.layout.fill_ghost(&mut u)?;
        let mut next = u.clone();
        let full = self.layout.spec().cell_volume();
        let frd = self.config.stabilizer == Stabilizer::Frd;
        let (mut dc, mut dnc) = if frd {
            (Field::new(&self.layout, u.ncomp(), 1, 0.0), Field::new(&self.layout, u.ncomp(), 1, 0.0))
        } else {
            (Field::new(&self.layout, 0, 0, 0.0), Field::new(&self.layout, 0, 0, 0.0))
        };
        for (p, g) in self.geoms.iter().enumerate() {
            for comp in 0..u.ncomp() {
                let sums = flux_sums(g, u.patch(p, comp), &self.config, self.dt)?;
                if frd {
                    for c in g.valid().iter() {
                        let s = *sums.get(c)?;
                        let v = g.volume(c)?;
                        dc.patch_mut(p, comp).set(c, if v > 0.0 { s / v } else { 0.0 })?;
                        dnc.patch_mut(p, comp).set(c, s / full)?;
                    }
                } else {
                    provisional_update(g, u.patch(p, comp), &sums, self.dt, next.patch_mut(p, comp))?;
                }
            }
        }
        if frd {
            self.layout.fill_ghost(&mut dc)?;
            self.layout.fill_ghost(&mut dnc)?;
            for (p, plan) in self.frd.iter().enumerate() {
                for comp in 0..u.ncomp() {
                    frd_apply(plan, u.patch(p, comp), dc.patch(p, comp), dnc.patch(p, comp), self.dt, next.patch_mut(p, comp))?;
                }
            }
        } else {
            self.redistribute(&mut next)?;
        }
        Ok(next)
    }

    /// Advance one time step.
    pub fn step(&mut self, u: &mut Field) -> Result<()> {
        let next = match self.config.integrator {
            TimeIntegrator::ForwardEuler => self.stage(u)?,
            TimeIntegrator::Heun => {
                let u1 = self.stage(u)?;
                let mut u2 = self.stage(&u1)?;
                for (p, patch) in self.layout.patches().iter().enumerate() {
                    for comp in 0..u.ncomp() {
                        for c in patch.valid.iter() {
                            let v = 0.5 * (u.patch(p, comp).get(c)? + u2.patch(p, comp).get(c)?);
                            u2.patch_mut(p, comp).set(c, v)?;
                        }
                    }
                }
                u2
            }
        };
        self.steps += 1;
        for (p, patch) in self.layout.patches().iter().enumerate() {
            for comp in 0..next.ncomp() {
                for c in patch.valid.iter() {
                    if !next.patch(p, comp).get(c)?.is_finite() {
                        return Err(Error::NonFiniteState { cell: c, step: self.steps });
                    }
                }
            }
        }
        *u = next;
        Ok(())
    }

    /// Total `sum V U` of one component over the domain.
    pub fn total(&self, u: &Field, comp: usize) -> Result<f64> {
        let mut s = 0.0;
        for (p, patch) in self.layout.patches().iter().enumerate() {
            for c in patch.valid.iter() {
                if self.geoms[p].eligible(c)? {
                    s += self.geoms[p].volume(c)? * u.patch(p, comp).get(c)?;
                }
            }
        }
        Ok(s)
    }
}
