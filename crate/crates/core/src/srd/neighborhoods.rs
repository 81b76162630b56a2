use arrayvec::ArrayVec;

use super::{block, canonical_order, offset_index, Members, MergeStrategy, Offset, SrdOptions};
use crate::error::{Error, Result};
use crate::index::PatchArray;
use crate::mesh::PatchGeometry;

/// Neighborhoods of every cell within `ring` of the patch's valid box.
///
/// Cells at or above the target volume form singleton neighborhoods and
/// covered or out-of-domain cells get none. Smaller cells grow along the
/// boundary normal toward the fluid, one axis at a time, until the merged
/// volume reaches the target; the full 3^d block is the last resort.
pub fn build_neighborhoods(geom: &PatchGeometry, ring: usize, opts: &SrdOptions) -> Result<PatchArray<Members>> {
    let ndim = geom.spec.ndim;
    let target = opts.target_fraction * geom.spec.cell_volume();
    PatchArray::try_from_fn(ndim, geom.valid(), ring, |c| {
        let mut m = Members::new();
        if !geom.eligible(c)? {
            return Ok(m);
        }
        let v = geom.volume(c)?;
        if v >= target {
            m.push([0; 3]);
            return Ok(m);
        }
        let total = |m: &Members| -> Result<f64> {
            let mut s = 0.0;
            for o in m {
                s += geom.volume(offset_index(c, *o))?;
            }
            Ok(s)
        };
        let collect = |offsets: &[Offset]| -> Result<Members> {
            let mut m = Members::new();
            for o in offsets {
                if *o == [0; 3] || geom.eligible(offset_index(c, *o))? {
                    m.push(*o);
                }
            }
            m.sort_by(canonical_order);
            Ok(m)
        };

        if opts.merge != MergeStrategy::Central {
            let normal = geom.cell(c)?.eb_normal;
            let mut axes: ArrayVec<usize, 3> = (0..ndim).collect();
            axes.sort_by(|&a, &b| libm::fabs(normal[b]).total_cmp(&libm::fabs(normal[a])));
            let mut start = 1;
            if let MergeStrategy::Axis(d) = opts.merge {
                let d = d.min(ndim - 1);
                axes.retain(|a| *a != d);
                axes.insert(0, d);
            } else {
                let lead = libm::fabs(normal[axes[0]]);
                for &a in &axes[1..] {
                    if libm::fabs(normal[a]) >= lead * (1.0 - opts.symmetry_tol) {
                        start += 1;
                    } else {
                        break;
                    }
                }
            }
            let mut signs = [0i8; 3];
            for &a in &axes {
                signs[a] = if normal[a] > 0.0 {
                    -1
                } else if normal[a] < 0.0 {
                    1
                } else {
                    let side_volume = |s: i64| -> Result<f64> {
                        let mut n = c;
                        n[a] += s;
                        if geom.eligible(n)? {
                            geom.volume(n)
                        } else {
                            Ok(0.0)
                        }
                    };
                    if side_volume(-1)? > side_volume(1)? {
                        -1
                    } else {
                        1
                    }
                };
            }
            for stage in start..=ndim {
                let mut offsets: ArrayVec<Offset, 8> = ArrayVec::new();
                for bits in 0..(1usize << stage) {
                    let mut o = [0i8; 3];
                    for (s, &a) in axes.iter().take(stage).enumerate() {
                        if bits >> s & 1 == 1 {
                            o[a] = signs[a];
                        }
                    }
                    offsets.push(o);
                }
                let m = collect(&offsets)?;
                if total(&m)? >= target {
                    return Ok(m);
                }
            }
        }
        let m = collect(&block(ndim, 1))?;
        let vol = total(&m)?;
        if vol >= target {
            Ok(m)
        } else {
            Err(Error::NeighborhoodTooSmall { cell: c, volume: vol, target })
        }
    })
}

/// Overlap counts and the neighborhoods each cell belongs to.
#[derive(Debug, Clone)]
pub struct Overlaps {
    /// Number of neighborhoods containing the cell.
    pub count: PatchArray<u32>,
    /// Offsets of those neighborhoods' anchors from the cell, canonical order.
    pub sets: PatchArray<Members>,
}

/// Overlap data for cells within `ring`; `members` must cover `ring + 1`.
pub fn compute_overlaps(members: &PatchArray<Members>, ring: usize) -> Result<Overlaps> {
    let ndim = members.ndim();
    let blk = block(ndim, 1);
    let sets = PatchArray::try_from_fn(ndim, members.valid(), ring, |c| {
        let mut w = Members::new();
        for o in &blk {
            let back = [-o[0], -o[1], -o[2]];
            if members.get(offset_index(c, *o))?.contains(&back) {
                w.push(*o);
            }
        }
        Ok(w)
    })?;
    let count = sets.map(|w| w.len() as u32);
    Ok(Overlaps { count, sets })
}
