//! Text artifacts. Floats are written with Rust's shortest round-trip
//! formatting so a dump read back reproduces the in-memory values exactly.

use std::fmt::Write as _;
use std::path::Path;

use ebsrd_core::geometry::{CellKind, CutCell};
use ebsrd_core::mesh::EBGrid;
use ebsrd_core::srd::{NeighborhoodPlan, WeightMatrix};

use crate::CliError;

pub const FIELD_HEADER: &str = "NDIM,NX,NY,NZ,NCOMP,TIME";

pub fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path.display().to_string(), e))
}

/// Field dump: header names, header values, then one row per cell in
/// k-major order: `i,j,k,x,y,z,kappa,u_0..`.
pub fn field_dump(ebgrid: &EBGrid, comps: &[Vec<f64>], time: f64) -> Result<String, CliError> {
    let spec = ebgrid.spec();
    let mut s = String::new();
    let _ = writeln!(s, "{FIELD_HEADER}");
    let [nx, ny, nz] = spec.cells;
    let _ = writeln!(s, "{},{nx},{ny},{nz},{},{time}", spec.ndim, comps.len());
    for (n, c) in spec.domain().iter().enumerate() {
        let g = ebgrid.cell(c)?;
        let x = spec.position(c, g.centroid);
        let _ = write!(s, "{},{},{},{},{},{},{}", c[0], c[1], c[2], x[0], x[1], x[2], g.volume_fraction);
        for u in comps {
            let _ = write!(s, ",{}", u[n]);
        }
        s.push('\n');
    }
    Ok(s)
}

/// A field dump read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldData {
    pub ndim: usize,
    pub cells: [usize; 3],
    pub time: f64,
    /// Volume fraction per row.
    pub kappa: Vec<f64>,
    /// Positions per row.
    pub position: Vec<[f64; 3]>,
    /// `values[comp][row]`.
    pub values: Vec<Vec<f64>>,
}

pub fn parse_field(text: &str, path: &str) -> Result<FieldData, CliError> {
    let bad = |reason: String| CliError::Artifact { path: path.to_string(), reason };
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(FIELD_HEADER) {
        return Err(bad(format!("missing `{FIELD_HEADER}` header")));
    }
    let head: Vec<&str> = lines.next().ok_or_else(|| bad("missing header values".into()))?.split(',').collect();
    if head.len() != 6 {
        return Err(bad("header needs six values".into()));
    }
    let num = |s: &str| s.trim().parse::<usize>().map_err(|e| bad(format!("header value `{s}`: {e}")));
    let ndim = num(head[0])?;
    let cells = [num(head[1])?, num(head[2])?, num(head[3])?];
    let ncomp = num(head[4])?;
    let time = head[5].trim().parse::<f64>().map_err(|e| bad(format!("time: {e}")))?;
    let rows = cells.iter().product::<usize>();
    let mut data = FieldData {
        ndim,
        cells,
        time,
        kappa: Vec::with_capacity(rows),
        position: Vec::with_capacity(rows),
        values: vec![Vec::with_capacity(rows); ncomp],
    };
    for (n, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 7 + ncomp {
            return Err(bad(format!("row {} has {} columns, expected {}", n + 3, parts.len(), 7 + ncomp)));
        }
        let f = |s: &str| s.trim().parse::<f64>().map_err(|e| bad(format!("row {}: `{s}`: {e}", n + 3)));
        data.position.push([f(parts[3])?, f(parts[4])?, f(parts[5])?]);
        data.kappa.push(f(parts[6])?);
        for (comp, v) in data.values.iter_mut().enumerate() {
            v.push(f(parts[7 + comp])?);
        }
    }
    if data.kappa.len() != rows {
        return Err(bad(format!("found {} rows, expected {rows}", data.kappa.len())));
    }
    Ok(data)
}

pub fn read_field(path: &Path) -> Result<FieldData, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path.display().to_string(), e))?;
    parse_field(&text, &path.display().to_string())
}

/// Index of the lowest partially filled cell in each column of the
/// `k = 0` slice, left to right.
pub fn cut_row(ebgrid: &EBGrid) -> Result<Vec<[i64; 3]>, CliError> {
    let spec = ebgrid.spec();
    let mut out = Vec::new();
    for i in 0..spec.cells[0] as i64 {
        for j in 0..spec.cells[1] as i64 {
            let g = ebgrid.cell([i, j, 0])?;
            if g.is_cut() {
                out.push([i, j, 0]);
                break;
            }
        }
    }
    Ok(out)
}

/// Values along the first row of cut cells: `i,j,x,y,kappa,u`.
pub fn profile_dump(ebgrid: &EBGrid, values: &[f64]) -> Result<String, CliError> {
    let spec = ebgrid.spec();
    let mut s = String::from("i,j,x,y,kappa,u\n");
    for c in cut_row(ebgrid)? {
        let g = ebgrid.cell(c)?;
        let x = spec.position(c, g.centroid);
        let u = values[spec.linear_index(c)];
        let _ = writeln!(s, "{},{},{},{},{},{u}", c[0], c[1], x[0], x[1], g.volume_fraction);
    }
    Ok(s)
}

fn kind_name(g: &CutCell) -> &'static str {
    match g.kind {
        CellKind::Regular => "regular",
        CellKind::Cut => "cut",
        CellKind::Covered => "covered",
    }
}

/// Cut-cell database, one record per domain cell.
pub fn ebgrid_dump(ebgrid: &EBGrid) -> Result<String, CliError> {
    let spec = ebgrid.spec();
    let mut s = String::from("i,j,k,type,kappa,cx,cy,cz");
    for f in 0..6 {
        let _ = write!(s, ",a{f}");
    }
    for f in 0..6 {
        let _ = write!(s, ",f{f}x,f{f}y,f{f}z");
    }
    s.push_str(",eb_area,nx,ny,nz,bx,by,bz\n");
    for c in spec.domain().iter() {
        let g = ebgrid.cell(c)?;
        let _ = write!(s, "{},{},{},{},{}", c[0], c[1], c[2], kind_name(g), g.volume_fraction);
        for v in g.centroid {
            let _ = write!(s, ",{v}");
        }
        for a in g.apertures {
            let _ = write!(s, ",{a}");
        }
        for fc in g.face_centroids {
            for v in fc {
                let _ = write!(s, ",{v}");
            }
        }
        let _ = write!(s, ",{}", g.eb_area);
        for v in g.eb_normal.iter().chain(&g.eb_centroid) {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    Ok(s)
}

/// Neighborhood plans of the valid cells that take part in merging.
pub fn plan_dump(plans: &[NeighborhoodPlan]) -> Result<String, CliError> {
    let mut s = String::new();
    for plan in plans {
        let spec = plan.spec;
        for c in plan.valid().iter() {
            let members = plan.members.get(c)?;
            if members.is_empty() {
                continue;
            }
            let kappa = *plan.volume.get(c)? / spec.cell_volume();
            let n = plan.overlap.count.get(c)?;
            let _ = write!(s, "cell=({},{},{}) kappa={kappa} N={n} members=[", c[0], c[1], c[2]);
            for (k, o) in members.iter().enumerate() {
                let sep = if k == 0 { "" } else { " " };
                let _ = write!(s, "{sep}({},{},{})", c[0] + o[0] as i64, c[1] + o[1] as i64, c[2] + o[2] as i64);
            }
            s.push(']');
            if let Some(row) = plan.rows.get(c)? {
                let x = row.xhat;
                let _ = write!(s, " vhat={} xhat=({},{},{})", row.vhat, x[0], x[1], x[2]);
                s.push_str(" weights=[");
                for (k, a) in row.coef.iter().enumerate() {
                    let sep = if k == 0 { "" } else { " " };
                    let _ = write!(s, "{sep}{a}");
                }
                s.push(']');
            }
            let _ = writeln!(s, " alpha={} beta={}", plan.alpha.get(c)?, plan.beta.get(c)?);
        }
    }
    Ok(s)
}

/// Sparse weight matrix as `row,col,value` triples in domain order.
pub fn matrix_dump(m: &WeightMatrix) -> String {
    let mut s = format!("SIZE={}\nrow,col,value\n", m.size);
    for (i, j, v) in &m.entries {
        let _ = writeln!(s, "{i},{j},{v}");
    }
    s
}
