//! State redistribution.
//!
//! Small cut cells are merged with neighbors into neighborhoods whose
//! (weighted) volume reaches a target. After a provisional update every
//! neighborhood forms a volume-weighted average and a limited linear
//! reconstruction, and each cell takes a weighted sum of the
//! reconstructions of the neighborhoods it belongs to. Column sums of the
//! weight matrix are one, so the total of `V * U` is preserved.
//!
//! Work is split into a preprocessing pass ([`preprocess`]) that depends on
//! geometry only and a postprocessing pass ([`srd_apply`]) run every stage.
//! Both operate on a single patch; ghost rings must be filled beforehand.

use arrayvec::ArrayVec;

use crate::index::Index;

mod framework;
mod matrix;
mod neighborhoods;
mod plan;
mod reconstruct;

pub use framework::{canonical_weights, framework_apply, WeightList, Weights};
pub use matrix::{assemble_weight_matrix, WeightMatrix};
pub use neighborhoods::{build_neighborhoods, compute_overlaps, Overlaps};
pub use plan::{compute_weights, preprocess, NeighborhoodPlan, Row};
pub use reconstruct::{neighborhood_average, neighborhood_slope, srd_apply, srd_init};

/// Offset of a member cell from its neighborhood's anchor cell.
pub type Offset = [i8; 3];

/// Offsets in canonical order: by k, then j, then i.
pub type Members = ArrayVec<Offset, 27>;

pub(crate) fn offset_index(c: Index, o: Offset) -> Index {
    [c[0] + o[0] as i64, c[1] + o[1] as i64, c[2] + o[2] as i64]
}

pub(crate) fn canonical_order(a: &Offset, b: &Offset) -> core::cmp::Ordering {
    (a[2], a[1], a[0]).cmp(&(b[2], b[1], b[0]))
}

/// All offsets of the 3^d block, canonical order.
pub(crate) fn block(ndim: usize, reach: i8) -> ArrayVec<Offset, 125> {
    let kr = if ndim == 3 { reach } else { 0 };
    let mut out = ArrayVec::new();
    for k in -kr..=kr {
        for j in -reach..=reach {
            for i in -reach..=reach {
                out.push([i, j, k]);
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    /// Weights `1/N` throughout.
    Original,
    /// Small cells keep a share of their own state that grows with volume.
    Weighted,
}

/// How small cells choose their merge partners.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MergeStrategy {
    /// Toward the fluid, following the boundary normal.
    Normal,
    /// Along the given axis first, then by normal.
    Axis(usize),
    /// Every fluid cell of the surrounding 3^d block.
    Central,
}

/// How far the slope stencil is allowed to widen.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StencilGrowth {
    /// Widen an axis when no stencil centroid lies more than half a cell
    /// from the neighborhood centroid along it.
    Distance,
    /// Widen an axis when the centroids span at most half a cell along it.
    Spread,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SrdOptions {
    pub variant: Variant,
    /// Target neighborhood volume as a fraction of a full cell.
    pub target_fraction: f64,
    pub merge: MergeStrategy,
    /// Relative tolerance under which normal components count as equal.
    pub symmetry_tol: f64,
    /// Linear reconstruction inside neighborhoods; off gives piecewise
    /// constant averages.
    pub slopes: bool,
    /// Barth-Jespersen limiting of neighborhood slopes.
    pub limit: bool,
    pub growth: StencilGrowth,
}

impl Default for SrdOptions {
    fn default() -> Self {
        SrdOptions {
            variant: Variant::Weighted,
            target_fraction: 0.5,
            merge: MergeStrategy::Normal,
            symmetry_tol: 1e-8,
            slopes: true,
            limit: true,
            growth: StencilGrowth::Distance,
        }
    }
}

/// Ghost rings needed by the two passes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HaloWidths {
    /// Geometry rings read while building neighborhoods.
    pub pre: usize,
    /// Rings of state and neighborhood data read while redistributing.
    pub post: usize,
}

impl Default for HaloWidths {
    fn default() -> Self {
        HaloWidths { pre: 5, post: 3 }
    }
}

/// Stencil cells whose own neighborhoods reach further than this from any
/// receiving cell are left out, which keeps results independent of the
/// patch layout.
pub const STENCIL_REACH: i64 = 3;

/// Counters gathered while redistributing.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SrdDiagnostics {
    /// Neighborhoods whose slope stencil could not determine a gradient.
    pub rank_deficient: usize,
    pub first_rank_deficient: Option<Index>,
}

impl SrdDiagnostics {
    pub fn merge(&mut self, other: &SrdDiagnostics) {
        self.rank_deficient += other.rank_deficient;
        if self.first_rank_deficient.is_none() {
            self.first_rank_deficient = other.first_rank_deficient;
        }
    }
}
