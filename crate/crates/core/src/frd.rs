//! Flux redistribution, the classical baseline stabilizer.
//!
//! A cut cell advances with a blend of its conservative divergence
//! (fluxes over the true cut volume) and a non-conservative one (fluxes
//! over the full cell volume), weighted by its volume fraction. The mass
//! this blend fails to account for is handed to the fluid cells of the
//! surrounding 3^d block in proportion to their volumes.

use arrayvec::ArrayVec;

use crate::error::Result;
use crate::index::{Index, PatchArray};
use crate::mesh::PatchGeometry;
use crate::srd::{offset_index, Offset};

pub type Partners = ArrayVec<(Offset, f64), 26>;

/// Redistribution partners of every cut cell within one ring of a patch.
#[derive(Debug, Clone)]
pub struct FrdPlan {
    /// Fluid neighbors and their normalized weights; empty for full cells.
    pub partners: PatchArray<Partners>,
    pub kappa: PatchArray<f64>,
    pub volume: PatchArray<f64>,
}

fn neighbors(ndim: usize) -> impl Iterator<Item = Offset> {
    let kr = if ndim == 3 { 1 } else { 0 };
    (-kr..=kr).flat_map(move |k| (-1..=1).flat_map(move |j| (-1..=1).map(move |i| [i, j, k])))
}

pub fn build_frd_plan(geom: &PatchGeometry) -> Result<FrdPlan> {
    let ndim = geom.spec.ndim;
    let valid = geom.valid();
    let kappa = PatchArray::try_from_fn(ndim, valid, 1, |c| {
        Ok(if geom.eligible(c)? { geom.cell(c)?.volume_fraction } else { 0.0 })
    })?;
    let volume = PatchArray::try_from_fn(ndim, valid, 1, |c| geom.volume(c))?;
    let partners = PatchArray::try_from_fn(ndim, valid, 1, |c| {
        let mut p = Partners::new();
        if !geom.eligible(c)? || geom.cell(c)?.volume_fraction >= 1.0 {
            return Ok(p);
        }
        let mut total = 0.0;
        for o in neighbors(ndim).filter(|o| *o != [0; 3]) {
            let n = offset_index(c, o);
            if geom.eligible(n)? {
                let v = geom.volume(n)?;
                total += v;
                p.push((o, v));
            }
        }
        for e in p.iter_mut() {
            e.1 /= total;
        }
        Ok(p)
    })?;
    Ok(FrdPlan { partners, kappa, volume })
}

/// Update the valid cells of one patch.
///
/// `dc` and `dnc` are the flux sums divided by the cut volume and by the
/// full cell volume; both need one filled ghost ring.
pub fn frd_apply(
    plan: &FrdPlan,
    u: &PatchArray<f64>,
    dc: &PatchArray<f64>,
    dnc: &PatchArray<f64>,
    dt: f64,
    out: &mut PatchArray<f64>,
) -> Result<()> {
    let ndim = u.ndim();
    let defect = |i: Index| -> Result<f64> {
        let k = *plan.kappa.get(i)?;
        Ok(dt * plan.volume.get(i)? * (1.0 - k) * (dc.get(i)? - dnc.get(i)?))
    };
    for j in plan.partners.valid().iter() {
        let k = *plan.kappa.get(j)?;
        let uj = *u.get(j)?;
        if k == 0.0 {
            out.set(j, uj)?;
            continue;
        }
        let mut v = if plan.partners.get(j)?.is_empty() {
            uj - dt * dc.get(j)?
        } else {
            uj - dt * (k * dc.get(j)? + (1.0 - k) * dnc.get(j)?)
        };
        let vj = *plan.volume.get(j)?;
        for o in neighbors(ndim).filter(|o| *o != [0; 3]) {
            let i = offset_index(j, o);
            let back = [-o[0], -o[1], -o[2]];
            if let Some((_, w)) = plan.partners.get(i)?.iter().find(|(p, _)| *p == back) {
                v -= defect(i)? * w / vj;
            }
        }
        out.set(j, v)?;
    }
    Ok(())
}
