use arrayvec::ArrayVec;

use super::{block, offset_index, Members, NeighborhoodPlan, SrdDiagnostics, SrdOptions, StencilGrowth, STENCIL_REACH};
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::index::{Index, PatchArray};

fn missing_row(plan: &NeighborhoodPlan, c: Index) -> Error {
    // report the member that fell outside the plan's rings
    let valid = plan.valid();
    let far = plan
        .members
        .get(c)
        .ok()
        .and_then(|m| m.iter().map(|o| offset_index(c, *o)).max_by_key(|r| valid.distance(*r)))
        .unwrap_or(c);
    Error::GhostWidthTooSmall { cell: far, depth: valid.distance(far), ghost: plan.ghost() }
}

/// Volume-weighted average of the provisional state over `c`'s neighborhood.
pub fn neighborhood_average(plan: &NeighborhoodPlan, uhat: &PatchArray<f64>, c: Index) -> Result<f64> {
    let row = plan.rows.get(c)?.as_ref().ok_or_else(|| missing_row(plan, c))?;
    let m = plan.members.get(c)?;
    let mut acc = 0.0;
    for (o, a) in m.iter().zip(&row.coef) {
        let r = offset_index(c, *o);
        acc += (a * plan.volume.get(r)?) * uhat.get(r)?;
    }
    Ok(acc / row.vhat)
}

/// Neighborhood data as seen by the slope reconstruction.
pub(crate) struct PlanView<'a> {
    plan: &'a NeighborhoodPlan,
    uhat: &'a PatchArray<f64>,
    qhat: PatchArray<Option<f64>>,
    slope: PatchArray<Option<Vec3>>,
}

impl<'a> PlanView<'a> {
    pub(crate) fn new(plan: &'a NeighborhoodPlan, uhat: &'a PatchArray<f64>) -> Self {
        let ndim = plan.spec.ndim;
        PlanView {
            plan,
            uhat,
            qhat: PatchArray::new(ndim, plan.valid(), plan.ghost(), None),
            slope: PatchArray::new(ndim, plan.valid(), plan.ghost(), None),
        }
    }

    fn eligible(&self, c: Index) -> Result<bool> {
        if self.plan.spec.canonical(c).is_none() {
            return Ok(false);
        }
        self.plan.eligible.get(c).copied()
    }

    fn members(&self, c: Index) -> Result<&Members> {
        self.plan.members.get(c)
    }

    fn xhat(&self, c: Index) -> Result<Vec3> {
        match self.plan.rows.get(c)? {
            Some(row) => Ok(row.xhat),
            None => Err(missing_row(self.plan, c)),
        }
    }

    fn qhat(&mut self, c: Index) -> Result<f64> {
        if let Some(q) = *self.qhat.get(c)? {
            return Ok(q);
        }
        let q = neighborhood_average(self.plan, self.uhat, c)?;
        self.qhat.set(c, Some(q))?;
        Ok(q)
    }

    fn slope(&mut self, r: Index, opts: &SrdOptions, diag: &mut SrdDiagnostics) -> Result<Vec3> {
        if let Some(s) = *self.slope.get(r)? {
            return Ok(s);
        }
        let s = if opts.slopes { neighborhood_slope_in(self, r, opts, diag)? } else { [0.0; 3] };
        self.slope.set(r, Some(s))?;
        Ok(s)
    }
}

/// Least-squares slope of the neighborhood averages around `r`, limited.
pub fn neighborhood_slope(
    plan: &NeighborhoodPlan,
    uhat: &PatchArray<f64>,
    r: Index,
    opts: &SrdOptions,
    diag: &mut SrdDiagnostics,
) -> Result<Vec3> {
    let mut view = PlanView::new(plan, uhat);
    neighborhood_slope_in(&mut view, r, opts, diag)
}

fn neighborhood_slope_in(
    view: &mut PlanView<'_>,
    r: Index,
    opts: &SrdOptions,
    diag: &mut SrdDiagnostics,
) -> Result<Vec3> {
    let ndim = view.plan.spec.ndim;
    let receivers = view.members(r)?.clone();
    if receivers.len() < 2 {
        return Ok([0.0; 3]);
    }
    let xr = view.xhat(r)?;
    let qr = view.qhat(r)?;

    // Base 3^d stencil of fluid cells.
    let mut cells: ArrayVec<Index, 125> = ArrayVec::new();
    for o in block(ndim, 1) {
        let m = offset_index(r, o);
        if o != [0; 3] && view.eligible(m)? {
            cells.push(m);
        }
    }
    let mut xs: ArrayVec<Vec3, 125> = ArrayVec::new();
    for m in &cells {
        xs.push(view.xhat(*m)?);
    }

    // Widen axes along which the stencil is too narrow.
    let mut reach = [1i64, 1, if ndim == 3 { 1 } else { 0 }];
    for d in 0..ndim {
        let grow = match opts.growth {
            StencilGrowth::Distance => xs.iter().all(|x| libm::fabs(x[d] - xr[d]) <= 0.5),
            StencilGrowth::Spread => {
                let (lo, hi) = xs.iter().fold((xr[d], xr[d]), |(lo, hi), x| (lo.min(x[d]), hi.max(x[d])));
                hi - lo <= 0.5
            }
        };
        if grow {
            widen(view, r, &receivers, &mut reach, d, &mut cells, &mut xs)?;
        }
    }
    // A stencil can span every axis yet resolve some direction only through
    // a neighborhood centered almost on top of this one; the fit then loses
    // most of its digits, so take in the remaining axes as well.
    if poorly_resolved(&normal_matrix(&xs, xr, ndim), ndim) {
        for d in 0..ndim {
            if reach[d] == 1 {
                widen(view, r, &receivers, &mut reach, d, &mut cells, &mut xs)?;
            }
        }
    }

    let mut dq: ArrayVec<f64, 125> = ArrayVec::new();
    for m in &cells {
        dq.push(view.qhat(*m)? - qr);
    }

    // Normal equations of the unweighted fit.
    let a = normal_matrix(&xs, xr, ndim);
    let mut b = [0.0; 3];
    for (x, q) in xs.iter().zip(&dq) {
        for p in 0..ndim {
            b[p] += (x[p] - xr[p]) * q;
        }
    }
    let mut sigma = match solve(a, b, ndim) {
        Some(s) => s,
        None => {
            diag.rank_deficient += 1;
            diag.first_rank_deficient.get_or_insert(r);
            return Ok([0.0; 3]);
        }
    };
    // One refinement pass on the fit residual; nearly collinear stencils
    // square the conditioning in the normal equations.
    let mut br = [0.0; 3];
    for (x, q) in xs.iter().zip(&dq) {
        let dx = [x[0] - xr[0], x[1] - xr[1], x[2] - xr[2]];
        let mut res = *q;
        for p in 0..ndim {
            res -= sigma[p] * dx[p];
        }
        for p in 0..ndim {
            br[p] += dx[p] * res;
        }
    }
    if let Some(c) = solve(a, br, ndim) {
        for p in 0..ndim {
            sigma[p] += c[p];
        }
    }
    if !opts.limit {
        return Ok(sigma);
    }

    let (qmin, qmax) = dq.iter().fold((0.0f64, 0.0f64), |(lo, hi), q| (lo.min(*q), hi.max(*q)));
    let mut theta = 1.0f64;
    for o in &receivers {
        let x = view.plan.position.get(offset_index(r, *o))?;
        let mut delta = 0.0;
        for d in 0..ndim {
            delta += sigma[d] * (x[d] - xr[d]);
        }
        let t = if delta > 0.0 {
            qmax / delta
        } else if delta < 0.0 {
            qmin / delta
        } else {
            1.0
        };
        theta = theta.min(t);
    }
    let theta = theta.max(0.0);
    Ok([sigma[0] * theta, sigma[1] * theta, sigma[2] * theta])
}

/// Add the ring of cells one further out along axis `d` when every one of
/// them keeps its neighborhood within reach of the receivers.
fn widen(
    view: &mut PlanView<'_>,
    r: Index,
    receivers: &Members,
    reach: &mut [i64; 3],
    d: usize,
    cells: &mut ArrayVec<Index, 125>,
    xs: &mut ArrayVec<Vec3, 125>,
) -> Result<bool> {
    let mut wider = *reach;
    wider[d] = 2;
    let mut added: ArrayVec<Index, 125> = ArrayVec::new();
    for k in -wider[2]..=wider[2] {
        for j in -wider[1]..=wider[1] {
            for i in -wider[0]..=wider[0] {
                let o = [i, j, k];
                if (0..3).all(|e| o[e].abs() <= reach[e]) {
                    continue;
                }
                let m = [r[0] + i, r[1] + j, r[2] + k];
                if !view.eligible(m)? {
                    continue;
                }
                for mo in view.members(m)? {
                    let p = offset_index(m, *mo);
                    for ro in receivers {
                        let q = offset_index(r, *ro);
                        if (0..3).any(|e| (p[e] - q[e]).abs() > STENCIL_REACH) {
                            return Ok(false);
                        }
                    }
                }
                added.push(m);
            }
        }
    }
    *reach = wider;
    for m in added {
        xs.push(view.xhat(m)?);
        cells.push(m);
    }
    Ok(true)
}

fn normal_matrix(xs: &[Vec3], xr: Vec3, ndim: usize) -> [[f64; 3]; 3] {
    let mut a = [[0.0; 3]; 3];
    for x in xs {
        for p in 0..ndim {
            for s in 0..ndim {
                a[p][s] += (x[p] - xr[p]) * (x[s] - xr[s]);
            }
        }
    }
    a
}

/// Ratio of the determinant to the cube (or square) of the mean eigenvalue
/// below which some direction is treated as unresolved.
const RESOLUTION_TOL: f64 = 1e-6;

fn poorly_resolved(a: &[[f64; 3]; 3], ndim: usize) -> bool {
    let mean = (0..ndim).map(|i| a[i][i]).sum::<f64>() / ndim as f64;
    if mean <= 0.0 {
        return true;
    }
    let det = if ndim == 2 {
        a[0][0] * a[1][1] - a[0][1] * a[1][0]
    } else {
        a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
    };
    det < RESOLUTION_TOL * libm::pow(mean, ndim as f64)
}

/// Gaussian elimination with partial pivoting on the leading `n` x `n`
/// block; `None` when the system is numerically singular.
fn solve(mut a: [[f64; 3]; 3], mut b: [f64; 3], n: usize) -> Option<[f64; 3]> {
    let scale = (0..n).map(|i| libm::fabs(a[i][i])).fold(0.0, f64::max);
    if scale == 0.0 {
        return None;
    }
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| libm::fabs(a[i][col]).total_cmp(&libm::fabs(a[j][col])))?;
        if libm::fabs(a[piv][col]) <= 1e-12 * scale {
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
    let mut x = [0.0; 3];
    for row in (0..n).rev() {
        let mut s = b[row];
        for k in row + 1..n {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    Some(x)
}

/// Redistribute the provisional state `uhat` over the valid cells of one
/// patch, writing into `out`.
///
/// `uhat` must have its ghost rings filled out to the plan's ghost width.
/// Cells outside every merged neighborhood keep their provisional value.
pub fn srd_apply(
    plan: &NeighborhoodPlan,
    uhat: &PatchArray<f64>,
    out: &mut PatchArray<f64>,
    opts: &SrdOptions,
) -> Result<SrdDiagnostics> {
    let mut diag = SrdDiagnostics::default();
    let ndim = plan.spec.ndim;
    let mut view = PlanView::new(plan, uhat);
    for i in plan.valid().iter() {
        let u = *uhat.get(i)?;
        if !view.eligible(i)? {
            out.set(i, u)?;
            continue;
        }
        let w = plan.overlap.sets.get(i)?;
        if w.len() == 1 && w[0] == [0; 3] && plan.members.get(i)?.len() == 1 {
            out.set(i, u)?;
            continue;
        }
        let xi = *plan.position.get(i)?;
        let mut acc = 0.0;
        for o in w.iter() {
            let r = offset_index(i, *o);
            let back = [-o[0], -o[1], -o[2]];
            let k = plan.members.get(r)?.iter().position(|m| *m == back).ok_or(Error::GridMismatch)?;
            let row = plan.rows.get(r)?.as_ref().ok_or_else(|| missing_row(plan, r))?;
            let a = row.coef[k];
            let xhat = row.xhat;
            let q = view.qhat(r)?;
            let s = view.slope(r, opts, &mut diag)?;
            let mut lin = 0.0;
            for d in 0..ndim {
                lin += s[d] * (xi[d] - xhat[d]);
            }
            acc += a * (q + lin);
        }
        out.set(i, acc)?;
    }
    Ok(diag)
}

/// Redistribution of an initial condition; identical to [`srd_apply`].
pub fn srd_init(
    plan: &NeighborhoodPlan,
    u0: &PatchArray<f64>,
    out: &mut PatchArray<f64>,
    opts: &SrdOptions,
) -> Result<SrdDiagnostics> {
    srd_apply(plan, u0, out, opts)
}
