use alloc::vec::Vec;

use super::{offset_index, NeighborhoodPlan};
use crate::error::{Error, Result};
use crate::mesh::GridSpec;

/// Sparse weight matrix over the domain: entry `(i, j)` is the weight of
/// cell `j` in the neighborhood anchored at cell `i`, both in k-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    pub size: usize,
    /// `(row, column, value)`, sorted by row then column.
    pub entries: Vec<(usize, usize, f64)>,
}

impl WeightMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries.iter().filter(|e| e.0 == i && e.1 == j).map(|e| e.2).sum()
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut s = alloc::vec![0.0; self.size];
        for &(_, j, v) in &self.entries {
            s[j] += v;
        }
        s
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut m = alloc::vec![alloc::vec![0.0; self.size]; self.size];
        for &(i, j, v) in &self.entries {
            m[i][j] += v;
        }
        m
    }
}

/// Gather the rows of every patch's valid cells into one matrix.
pub fn assemble_weight_matrix(spec: &GridSpec, plans: &[NeighborhoodPlan]) -> Result<WeightMatrix> {
    let size = spec.num_cells();
    let mut entries = Vec::new();
    for plan in plans {
        for i in plan.valid().iter() {
            let m = plan.members.get(i)?;
            if m.is_empty() {
                continue;
            }
            let row = plan.rows.get(i)?.as_ref().ok_or(Error::GhostWidthTooSmall {
                cell: i,
                depth: 0,
                ghost: plan.ghost(),
            })?;
            let ri = spec.linear_index(i);
            for (o, a) in m.iter().zip(&row.coef) {
                let j = spec.canonical(offset_index(i, *o)).ok_or(Error::GridMismatch)?;
                entries.push((ri, spec.linear_index(j), *a));
            }
        }
    }
    entries.sort_by_key(|e| (e.0, e.1));
    Ok(WeightMatrix { size, entries })
}
