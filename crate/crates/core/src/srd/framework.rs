use arrayvec::ArrayVec;

use super::plan::assemble_rows;
use super::{block, canonical_order, offset_index, Members, NeighborhoodPlan, Offset, Overlaps, SrdDiagnostics};
use super::{srd_apply, SrdOptions, Variant};
use crate::error::{Error, Result};
use crate::index::{Index, PatchArray};
use crate::mesh::PatchGeometry;

/// Weights a cell hands to the neighborhoods it belongs to, keyed by the
/// offset of each neighborhood's anchor.
pub type WeightList = ArrayVec<(Offset, f64), 27>;

/// Per-cell weight lists over the whole domain.
pub type Weights = PatchArray<WeightList>;

/// Tolerance on the sum of a cell's weights.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// The weights implied by a plan, for the plan's valid cells.
pub fn canonical_weights(plan: &NeighborhoodPlan) -> Result<Weights> {
    PatchArray::try_from_fn(plan.spec.ndim, plan.valid(), 0, |i| {
        let mut list = WeightList::new();
        for o in plan.overlap.sets.get(i)? {
            let r = offset_index(i, *o);
            let back = [-o[0], -o[1], -o[2]];
            let k = plan.members.get(r)?.iter().position(|m| *m == back).ok_or(Error::GridMismatch)?;
            let row = plan.rows.get(r)?.as_ref().ok_or(Error::GhostWidthTooSmall {
                cell: r,
                depth: plan.valid().distance(r),
                ghost: plan.ghost(),
            })?;
            list.push((*o, row.coef[k]));
        }
        Ok(list)
    })
}

fn weights_of<'a>(weights: &'a Weights, geom: &PatchGeometry, c: Index) -> Result<Option<&'a WeightList>> {
    match geom.spec.canonical(c) {
        Some(cc) => weights.get(cc).map(Some),
        None => Ok(None),
    }
}

/// Redistribute `uhat` with arbitrary conservative weights.
///
/// `geom` and `weights` must span the whole domain as a single patch; the
/// weights of every fluid cell must sum to one. `uhat` needs `ghost` filled
/// rings and `geom` two more. With the weights of a plan this reproduces
/// [`srd_apply`] exactly.
pub fn framework_apply(
    geom: &PatchGeometry,
    weights: &Weights,
    uhat: &PatchArray<f64>,
    opts: &SrdOptions,
    ghost: usize,
) -> Result<(PatchArray<f64>, SrdDiagnostics)> {
    let spec = geom.spec;
    let ndim = spec.ndim;
    let domain = spec.domain();
    if geom.valid() != domain || weights.valid() != domain || uhat.valid() != domain {
        return Err(Error::GridMismatch);
    }
    for c in domain.iter() {
        let list = weights.get(c)?;
        let eligible = geom.eligible(c)?;
        if !eligible && list.is_empty() {
            continue;
        }
        let sum: f64 = list.iter().map(|(_, w)| w).sum();
        if !eligible || libm::fabs(sum - 1.0) > WEIGHT_SUM_TOL {
            return Err(Error::WeightSumViolation { cell: c, sum });
        }
    }

    // Transpose into neighborhoods.
    let blk = block(ndim, 1);
    let mut coefs: PatchArray<ArrayVec<f64, 27>> = PatchArray::new(ndim, domain, ghost + 1, ArrayVec::new());
    let members = PatchArray::try_from_fn(ndim, domain, ghost + 1, |c| {
        let mut m = Members::new();
        let mut w = ArrayVec::new();
        if geom.spec.canonical(c).is_some() {
            for o in &blk {
                let i = offset_index(c, *o);
                if let Some(list) = weights_of(weights, geom, i)? {
                    for (oi, wi) in list {
                        if offset_index(i, *oi) == c {
                            m.push(*o);
                            w.push(*wi);
                        }
                    }
                }
            }
        }
        coefs.set(c, w)?;
        Ok(m)
    })?;
    let sets = PatchArray::try_from_fn(ndim, domain, ghost, |c| {
        let mut s: Members = weights_of(weights, geom, c)?.map(|l| l.iter().map(|(o, _)| *o).collect()).unwrap_or_default();
        s.sort_by(canonical_order);
        Ok(s)
    })?;
    let count = sets.map(|s| s.len() as u32);
    let eligible = PatchArray::try_from_fn(ndim, domain, ghost, |c| geom.eligible(c))?;
    let volume = PatchArray::try_from_fn(ndim, domain, ghost, |c| geom.volume(c))?;
    let position = PatchArray::try_from_fn(ndim, domain, ghost, |c| geom.position(c))?;
    let rows = assemble_rows(&members, &volume, &position, ghost, |c, k| Ok(coefs.get(c)?[k]))?;
    let alpha = PatchArray::try_from_fn(ndim, domain, ghost, |c| {
        Ok(members.get(c)?.iter().position(|o| *o == [0; 3]).map(|k| coefs.get(c).map(|w| w[k])).transpose()?.unwrap_or(0.0))
    })?;
    let plan = NeighborhoodPlan {
        variant: Variant::Original,
        spec,
        target_volume: 0.0,
        members,
        overlap: Overlaps { count, sets },
        alpha,
        beta: PatchArray::new(ndim, domain, ghost + 1, 0.0),
        rows,
        volume,
        position,
        eligible,
    };
    let mut out = uhat.clone();
    let diag = srd_apply(&plan, uhat, &mut out, opts)?;
    Ok((out, diag))
}
