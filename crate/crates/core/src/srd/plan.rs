use arrayvec::ArrayVec;

use super::{
    build_neighborhoods, compute_overlaps, offset_index, HaloWidths, Members, Overlaps, SrdOptions, Variant,
};
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::index::{IndexBox, PatchArray};
use crate::mesh::{GridSpec, PatchGeometry};

/// One neighborhood's weights and merged quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    /// Weighted neighborhood volume.
    pub vhat: f64,
    /// Weighted neighborhood centroid, index space.
    pub xhat: Vec3,
    /// Weight of each member, aligned with the member offsets.
    pub coef: ArrayVec<f64, 27>,
}

/// Everything the redistribution pass needs for one patch.
///
/// Arrays other than `members` and `beta` cover `ghost` rings; those two
/// reach one ring further. A row is present only when all of its members
/// lie within `ghost` rings.
#[derive(Debug, Clone)]
pub struct NeighborhoodPlan {
    pub variant: Variant,
    pub spec: GridSpec,
    pub target_volume: f64,
    pub members: PatchArray<Members>,
    pub overlap: Overlaps,
    pub alpha: PatchArray<f64>,
    pub beta: PatchArray<f64>,
    pub rows: PatchArray<Option<Row>>,
    pub volume: PatchArray<f64>,
    pub position: PatchArray<Vec3>,
    pub eligible: PatchArray<bool>,
}

impl NeighborhoodPlan {
    pub fn valid(&self) -> IndexBox {
        self.rows.valid()
    }

    pub fn ghost(&self) -> usize {
        self.rows.ghost()
    }
}

/// Merge rows for every cell within `ring`, given each member's weight.
pub(crate) fn assemble_rows(
    members: &PatchArray<Members>,
    volume: &PatchArray<f64>,
    position: &PatchArray<Vec3>,
    ring: usize,
    mut weight: impl FnMut(crate::index::Index, usize) -> Result<f64>,
) -> Result<PatchArray<Option<Row>>> {
    let ndim = members.ndim();
    let reach = members.valid().grow(ndim, ring);
    PatchArray::try_from_fn(ndim, members.valid(), ring, |c| {
        let m = members.get(c)?;
        if m.is_empty() || m.iter().any(|o| !reach.contains(offset_index(c, *o))) {
            return Ok(None);
        }
        let mut coef = ArrayVec::new();
        let mut vhat = 0.0;
        let mut moment = [0.0; 3];
        for (k, o) in m.iter().enumerate() {
            let r = offset_index(c, *o);
            let a = weight(c, k)?;
            let wv = a * volume.get(r)?;
            let x = position.get(r)?;
            vhat += wv;
            for d in 0..3 {
                moment[d] += wv * x[d];
            }
            coef.push(a);
        }
        let xhat = [moment[0] / vhat, moment[1] / vhat, moment[2] / vhat];
        Ok(Some(Row { vhat, xhat, coef }))
    })
}

/// Weights of the chosen variant for cells within `ring`.
///
/// `members` must cover `ring + 1` and `overlap` must cover `ring`.
pub fn compute_weights(
    geom: &PatchGeometry,
    members: PatchArray<Members>,
    overlap: Overlaps,
    ring: usize,
    variant: Variant,
    target_fraction: f64,
) -> Result<NeighborhoodPlan> {
    let ndim = geom.spec.ndim;
    let valid = geom.valid();
    let target = target_fraction * geom.spec.cell_volume();
    let eligible = PatchArray::try_from_fn(ndim, valid, ring, |c| geom.eligible(c))?;
    let volume = PatchArray::try_from_fn(ndim, valid, ring, |c| geom.volume(c))?;
    let position = PatchArray::try_from_fn(ndim, valid, ring, |c| geom.position(c))?;

    let beta = PatchArray::try_from_fn(ndim, valid, ring + 1, |c| {
        let m = members.get(c)?;
        match variant {
            Variant::Original => Ok(if m.len() >= 2 { 1.0 } else { 0.0 }),
            Variant::Weighted => {
                if m.is_empty() {
                    return Ok(0.0);
                }
                let v = geom.volume(c)?;
                if v >= target {
                    return Ok(0.0);
                }
                let mut others = 0.0;
                for o in m.iter().filter(|o| **o != [0; 3]) {
                    others += geom.volume(offset_index(c, *o))?;
                }
                if others <= 0.0 {
                    return Err(Error::DegenerateBeta { cell: c });
                }
                Ok((target - v) / others)
            }
        }
    })?;
    let alpha = PatchArray::try_from_fn(ndim, valid, ring, |c| {
        let n = *overlap.count.get(c)?;
        if n == 0 {
            return Ok(0.0);
        }
        let inv_n = 1.0 / n as f64;
        match variant {
            Variant::Original => Ok(inv_n),
            Variant::Weighted => {
                let mut s = 0.0;
                for o in overlap.sets.get(c)?.iter().filter(|o| **o != [0; 3]) {
                    s += beta.get(offset_index(c, *o))?;
                }
                Ok(1.0 - inv_n * s)
            }
        }
    })?;
    let rows = assemble_rows(&members, &volume, &position, ring, |c, k| {
        let o = members.get(c)?[k];
        if o == [0; 3] {
            return alpha.get(c).copied();
        }
        let r = offset_index(c, o);
        let inv_n = 1.0 / *overlap.count.get(r)? as f64;
        Ok(match variant {
            Variant::Original => inv_n,
            Variant::Weighted => beta.get(c)? * inv_n,
        })
    })?;
    Ok(NeighborhoodPlan {
        variant,
        spec: geom.spec,
        target_volume: target,
        members,
        overlap,
        alpha,
        beta,
        rows,
        volume,
        position,
        eligible,
    })
}

/// Neighborhoods and weights for one patch.
///
/// Small cells `halo.post + 1` rings out look at their own neighbors, so
/// geometry is read up to `halo.post + 2` rings; `geom` is expected to
/// carry `halo.pre` rings and any deeper read fails.
pub fn preprocess(geom: &PatchGeometry, opts: &SrdOptions, halo: HaloWidths) -> Result<NeighborhoodPlan> {
    let members = build_neighborhoods(geom, halo.post + 1, opts)?;
    let overlap = compute_overlaps(&members, halo.post)?;
    compute_weights(geom, members, overlap, halo.post, opts.variant, opts.target_fraction)
}
