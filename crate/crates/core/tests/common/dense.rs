//! Dense reimplementation of state redistribution on small meshes.

use ebsrd_core::geometry::ImplicitFn;
use ebsrd_core::mesh::Boundary;
use ebsrd_core::srd::{canonical_weights, framework_apply, NeighborhoodPlan, SrdOptions, Variant, Weights};
use ebsrd_core::Index;

use super::{spec2, Mesh};

const REACH: i64 = 3;

/// Everything the oracle needs, flattened to domain order.
pub struct Dense {
    ndim: usize,
    cells: Vec<Index>,
    volume: Vec<f64>,
    position: Vec<[f64; 3]>,
    /// Member cells of each neighborhood, as domain positions.
    members: Vec<Vec<usize>>,
    target: f64,
}

impl Dense {
    pub fn new(mesh: &Mesh, plan: &NeighborhoodPlan) -> Dense {
        let spec = mesh.spec();
        let cells: Vec<Index> = spec.domain().iter().collect();
        let members = cells
            .iter()
            .map(|c| {
                plan.members
                    .get(*c)
                    .unwrap()
                    .iter()
                    .map(|o| spec.linear_index([c[0] + o[0] as i64, c[1] + o[1] as i64, c[2] + o[2] as i64]))
                    .collect()
            })
            .collect();
        Dense {
            ndim: spec.ndim,
            cells,
            volume: mesh.volumes(),
            position: mesh.positions(),
            members,
            target: plan.target_volume,
        }
    }

    fn at(&self, c: Index) -> Option<usize> {
        self.cells.iter().position(|x| *x == c)
    }

    fn fluid(&self, c: Index) -> bool {
        self.at(c).is_some_and(|k| self.volume[k] > 0.0)
    }

    /// `a[i][j]`: weight of cell `j` in neighborhood `i`.
    pub fn matrix(&self, variant: Variant) -> Vec<Vec<f64>> {
        let n = self.cells.len();
        let mut count = vec![0usize; n];
        for m in &self.members {
            for &j in m {
                count[j] += 1;
            }
        }
        let mut a = vec![vec![0.0; n]; n];
        match variant {
            Variant::Original => {
                for (i, m) in self.members.iter().enumerate() {
                    for &j in m {
                        a[i][j] = 1.0 / count[j] as f64;
                    }
                }
            }
            Variant::Weighted => {
                let beta: Vec<f64> = (0..n)
                    .map(|i| {
                        let others: f64 = self.members[i].iter().filter(|&&j| j != i).map(|&j| self.volume[j]).sum();
                        if self.members[i].is_empty() || self.volume[i] >= self.target {
                            0.0
                        } else {
                            (self.target - self.volume[i]) / others
                        }
                    })
                    .collect();
                for (i, m) in self.members.iter().enumerate() {
                    for &j in m {
                        if j != i {
                            a[i][j] = beta[i] * (1.0 / count[j] as f64);
                        }
                    }
                }
                for j in 0..n {
                    if count[j] > 0 {
                        let given: f64 = (0..n).filter(|&i| i != j && self.members[i].contains(&j)).map(|i| beta[i]).sum();
                        a[j][j] = 1.0 - (1.0 / count[j] as f64) * given;
                    }
                }
            }
        }
        a
    }

    /// Redistribute `uhat` with weights `a`, slopes optional.
    pub fn apply(&self, a: &[Vec<f64>], uhat: &[f64], slopes: bool, limit: bool) -> Vec<f64> {
        let n = self.cells.len();
        let av = |f: &dyn Fn(usize) -> f64| -> Vec<f64> { (0..n).map(|i| (0..n).map(|j| a[i][j] * self.volume[j] * f(j)).sum()).collect() };
        let vhat = av(&|_| 1.0);
        let q: Vec<f64> = av(&|j| uhat[j]).iter().zip(&vhat).map(|(s, v)| if *v > 0.0 { s / v } else { 0.0 }).collect();
        let xhat: Vec<[f64; 3]> = {
            let cols: Vec<Vec<f64>> = (0..3).map(|d| av(&|j| self.position[j][d])).collect();
            (0..n).map(|i| [0, 1, 2].map(|d| if vhat[i] > 0.0 { cols[d][i] / vhat[i] } else { 0.0 })).collect()
        };
        let sigma: Vec<[f64; 3]> =
            (0..n).map(|i| if slopes { self.slope(i, &q, &xhat, limit) } else { [0.0; 3] }).collect();

        // U = A^T Q + sum_d (Diag(x_d) A^T - A^T Diag(xhat_d)) sigma_d
        (0..n)
            .map(|j| {
                if self.volume[j] == 0.0 {
                    return uhat[j];
                }
                let mut u = 0.0;
                for i in 0..n {
                    let mut lin = 0.0;
                    for d in 0..self.ndim {
                        lin += (self.position[j][d] - xhat[i][d]) * sigma[i][d];
                    }
                    u += a[i][j] * (q[i] + lin);
                }
                u
            })
            .collect()
    }

    fn slope(&self, i: usize, q: &[f64], xhat: &[[f64; 3]], limit: bool) -> [f64; 3] {
        let ndim = self.ndim;
        if self.members[i].len() < 2 {
            return [0.0; 3];
        }
        let ci = self.cells[i];
        let in_box = |o: Index, r: [i64; 3]| (0..3).all(|e| o[e].abs() <= r[e]);
        let mut reach = [1, 1, if ndim == 3 { 1 } else { 0 }];
        let block = |r: [i64; 3]| -> Vec<Index> {
            let mut v = Vec::new();
            for k in -r[2]..=r[2] {
                for j in -r[1]..=r[1] {
                    for ii in -r[0]..=r[0] {
                        v.push([ii, j, k]);
                    }
                }
            }
            v
        };
        let cell = |o: Index| [ci[0] + o[0], ci[1] + o[1], ci[2] + o[2]];
        let mut stencil: Vec<usize> =
            block(reach).into_iter().filter(|o| *o != [0; 3] && self.fluid(cell(*o))).map(|o| self.at(cell(o)).unwrap()).collect();
        let close = |p: usize, r: usize| (0..3).all(|e| (self.cells[p][e] - self.cells[r][e]).abs() <= REACH);
        let grow = |d: usize, reach: &mut [i64; 3], stencil: &mut Vec<usize>| {
            let mut wider = *reach;
            wider[d] = 2;
            let added: Vec<usize> = block(wider)
                .into_iter()
                .filter(|o| !in_box(*o, *reach) && self.fluid(cell(*o)))
                .map(|o| self.at(cell(o)).unwrap())
                .collect();
            if added.iter().all(|&m| self.members[m].iter().all(|&p| self.members[i].iter().all(|&r| close(p, r)))) {
                *reach = wider;
                stencil.extend(added);
            }
        };
        for d in 0..ndim {
            if stencil.iter().all(|&m| (xhat[m][d] - xhat[i][d]).abs() <= 0.5) {
                grow(d, &mut reach, &mut stencil);
            }
        }
        // some direction resolved only by a near-coincident neighborhood
        let moments = |stencil: &[usize]| {
            let mut a = [[0.0; 3]; 3];
            for &m in stencil {
                for p in 0..ndim {
                    for s in 0..ndim {
                        a[p][s] += (xhat[m][p] - xhat[i][p]) * (xhat[m][s] - xhat[i][s]);
                    }
                }
            }
            a
        };
        let a = moments(&stencil);
        let mean = (0..ndim).map(|d| a[d][d]).sum::<f64>() / ndim as f64;
        let det = if ndim == 2 {
            a[0][0] * a[1][1] - a[0][1] * a[1][0]
        } else {
            a[0][0] * a[1][1] * a[2][2] + a[0][1] * a[1][2] * a[2][0] + a[0][2] * a[1][0] * a[2][1]
                - a[0][2] * a[1][1] * a[2][0]
                - a[0][0] * a[1][2] * a[2][1]
                - a[0][1] * a[1][0] * a[2][2]
        };
        if mean <= 0.0 || det < 1e-6 * mean.powi(ndim as i32) {
            for d in 0..ndim {
                if reach[d] == 1 {
                    grow(d, &mut reach, &mut stencil);
                }
            }
        }

        let mut a = vec![vec![0.0; ndim]; ndim];
        let mut b = vec![0.0; ndim];
        for &m in &stencil {
            let dx: Vec<f64> = (0..ndim).map(|d| xhat[m][d] - xhat[i][d]).collect();
            for p in 0..ndim {
                for s in 0..ndim {
                    a[p][s] += dx[p] * dx[s];
                }
                b[p] += dx[p] * (q[m] - q[i]);
            }
        }
        let Some(mut sol) = eliminate(a.clone(), b) else { return [0.0; 3] };
        // one refinement pass on the fit residual
        let mut br = vec![0.0; ndim];
        for &m in &stencil {
            let dx: Vec<f64> = (0..ndim).map(|d| xhat[m][d] - xhat[i][d]).collect();
            let mut res = q[m] - q[i];
            for p in 0..ndim {
                res -= sol[p] * dx[p];
            }
            for p in 0..ndim {
                br[p] += dx[p] * res;
            }
        }
        if let Some(c) = eliminate(a, br) {
            for p in 0..ndim {
                sol[p] += c[p];
            }
        }
        let mut sigma = [0.0; 3];
        sigma[..ndim].copy_from_slice(&sol);
        if !limit {
            return sigma;
        }
        let dq: Vec<f64> = stencil.iter().map(|&m| q[m] - q[i]).collect();
        let qmax = dq.iter().copied().fold(0.0, f64::max);
        let qmin = dq.iter().copied().fold(0.0, f64::min);
        let mut theta = 1.0f64;
        for &r in &self.members[i] {
            let delta: f64 = (0..ndim).map(|d| sigma[d] * (self.position[r][d] - xhat[i][d])).sum();
            if delta > 0.0 {
                theta = theta.min(qmax / delta);
            } else if delta < 0.0 {
                theta = theta.min(qmin / delta);
            }
        }
        sigma.map(|s| s * theta.max(0.0))
    }
}

/// Partial-pivot elimination; `None` when a pivot falls below 1e-12 of
/// the largest diagonal entry. Nearly collinear stencils make the normal
/// equations ill-conditioned, so the oracle solves them the same way the
/// library does rather than by an algebraically equal formula.
fn eliminate(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = (0..n).map(|i| a[i][i].abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        return None;
    }
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() <= 1e-12 * scale {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = b[row];
        for k in row + 1..n {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    Some(x)
}

/// Every supported ramp and disc on grids up to 6x6.
pub fn small_meshes() -> Vec<Mesh> {
    let mut out = Vec::new();
    for nx in 3..=6 {
        for ny in 3..=6 {
            let spec = spec2(nx, ny, Boundary::Outflow);
            let w = nx as f64 / ny as f64;
            let mut bodies = Vec::new();
            for angle in [15.0, 30.0, 40.0, 45.0, 50.0, 60.0, 75.0] {
                for (ax, ay) in [(0.3, 0.0), (0.45, -0.1), (0.21, 0.13)] {
                    bodies.push(ImplicitFn::ramp(angle, [ax * w, ay]));
                }
            }
            for (cx, cy, r) in [(0.5, 0.5, 0.27), (0.43, 0.61, 0.31), (0.7, 0.3, 0.22)] {
                bodies.push(ImplicitFn::cylinder(2, [cx * w, cy, 0.0], r));
            }
            for body in bodies {
                if let Ok(mesh) = Mesh::new(&body, spec, 1) {
                    if mesh.plans(&SrdOptions::default()).is_ok() && mesh.plans(&SrdOptions { variant: Variant::Original, ..SrdOptions::default() }).is_ok() {
                        out.push(mesh);
                    }
                }
            }
        }
    }
    out
}

pub fn framework(mesh: &Mesh, weights: &Weights, u: &[f64], opts: &SrdOptions) -> ebsrd_core::Result<Vec<f64>> {
    let field = mesh.field(u, 3)?;
    let (out, _) = framework_apply(&mesh.geoms[0], weights, field.patch(0, 0), opts, 3)?;
    Ok(mesh.spec().domain().iter().map(|c| *out.get(c).unwrap()).collect())
}


/// Largest difference between the framework with canonical weights and the
/// dense oracle over both variants and every slope setting; infinite when
/// the framework fails.
pub fn oracle_difference(mesh: &Mesh, u: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for variant in [Variant::Original, Variant::Weighted] {
        for (slopes, limit) in [(false, false), (true, false), (true, true)] {
            let opts = SrdOptions { variant, slopes, limit, ..SrdOptions::default() };
            let Ok(plans) = mesh.plans(&opts) else { return f64::INFINITY };
            let dense = Dense::new(mesh, &plans[0]);
            let expected = dense.apply(&dense.matrix(variant), u, slopes, limit);
            let got = canonical_weights(&plans[0]).and_then(|w| framework(mesh, &w, u, &opts));
            match got {
                Ok(got) => worst = worst.max(super::max_abs_diff(&got, &expected)),
                Err(_) => return f64::INFINITY,
            }
        }
    }
    worst
}
