//! File formats: summary.json, log.csv, frames.csv (centered fields at
//! time midpoints), staggered.csv (lossless path exchange) and phi.csv.
//! Reals print with 17 significant digits so every value round-trips
//! bit-exactly through the text form.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use wfr::config::RunConfig;
use wfr::grid::{DomainKind, SpatialGrid, StaggeredFields, TimeGrid};
use wfr::paths::PathTriple;
use wfr::solver::{Problem, Solution};

/// 17 significant digits: enough to reconstruct any f64 exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_solve_outputs(
    dir: &Path,
    config: &RunConfig,
    problem: &Problem,
    solution: &Solution,
    wall_time_s: f64,
    seed: u64,
) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    write_summary(dir, solution, wall_time_s, seed)?;
    write_log(dir, solution)?;
    let stride = config.outputs.frame_stride.unwrap_or(1).max(1);
    write_frames(dir, &solution.path, stride)?;
    write_staggered(dir, &solution.path)?;
    write_phi_midpoints(dir, &solution.phi, &problem.tgrid, &problem.grid)?;
    Ok(())
}

pub fn write_path_outputs(
    dir: &Path,
    config: &RunConfig,
    path: &PathTriple,
    constructor: &str,
    energy: f64,
) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut f = fs::File::create(dir.join("summary.json"))?;
    writeln!(
        f,
        "{{\n  \"command\": \"path\",\n  \"constructor\": \"{constructor}\",\n  \"energy\": {},\n  \"distance\": {}\n}}",
        fmt_f64(energy),
        fmt_f64(energy.max(0.0).sqrt())
    )?;
    let stride = config.outputs.frame_stride.unwrap_or(1).max(1);
    write_frames(dir, path, stride)?;
    write_staggered(dir, path)?;
    Ok(())
}

fn write_summary(dir: &Path, s: &Solution, wall_time_s: f64, seed: u64) -> std::io::Result<()> {
    let mut f = fs::File::create(dir.join("summary.json"))?;
    writeln!(f, "{{")?;
    writeln!(f, "  \"command\": \"solve\",")?;
    writeln!(f, "  \"energy\": {},", fmt_f64(s.energy))?;
    writeln!(f, "  \"distance\": {},", fmt_f64(s.distance))?;
    writeln!(f, "  \"iterations\": {},", s.iterations)?;
    writeln!(f, "  \"converged\": {},", s.converged)?;
    writeln!(f, "  \"dr_residual\": {},", fmt_f64(s.dr_residual))?;
    writeln!(f, "  \"ce_residual\": {},", fmt_f64(s.ce_residual))?;
    writeln!(f, "  \"constraint_residual\": {},", fmt_f64(s.constraint_residual))?;
    writeln!(f, "  \"clamp_magnitude\": {},", fmt_f64(s.clamp_magnitude))?;
    writeln!(f, "  \"seed\": {seed},")?;
    writeln!(f, "  \"wall_time_s\": {}", fmt_f64(wall_time_s))?;
    writeln!(f, "}}")?;
    Ok(())
}

fn write_log(dir: &Path, s: &Solution) -> std::io::Result<()> {
    let mut f = fs::File::create(dir.join("log.csv"))?;
    writeln!(f, "iteration,dr_residual,energy,ce_residual,constraint_residual")?;
    for row in &s.log {
        writeln!(
            f,
            "{},{},{},{},{}",
            row.iteration,
            fmt_f64(row.dr_residual),
            fmt_f64(row.energy),
            fmt_f64(row.ce_residual),
            fmt_f64(row.constraint_residual)
        )?;
    }
    Ok(())
}

/// Centered fields every `stride` midpoints, row-major with time outer.
/// Densities clamp at zero for plotting; the clamp magnitude is in the
/// summary.
fn write_frames(dir: &Path, path: &PathTriple, stride: usize) -> std::io::Result<()> {
    let mut f = fs::File::create(dir.join("frames.csv"))?;
    writeln!(f, "t,x,rho,omega,zeta")?;
    for k in (0..path.tgrid.n_steps).step_by(stride) {
        let t = path.tgrid.midpoints[k];
        for j in 0..path.grid.n_cells {
            writeln!(
                f,
                "{},{},{},{},{}",
                fmt_f64(t),
                fmt_f64(path.grid.cell_centers[j]),
                fmt_f64(path.centered.rho[[k, j]].max(0.0)),
                fmt_f64(path.centered.omega[[k, j]]),
                fmt_f64(path.centered.zeta[[k, j]])
            )?;
        }
    }
    Ok(())
}

/// Lossless staggered dump: `field,t,x,value` with rho at nodes × centers,
/// omega at midpoints × faces, zeta at midpoints × centers, in row-major
/// order. This is the file `certify --path` expects.
fn write_staggered(dir: &Path, path: &PathTriple) -> std::io::Result<()> {
    let mut f = fs::File::create(dir.join("staggered.csv"))?;
    writeln!(f, "field,t,x,value")?;
    let g = &path.grid;
    let t = &path.tgrid;
    for k in 0..=t.n_steps {
        for j in 0..g.n_cells {
            writeln!(
                f,
                "rho,{},{},{}",
                fmt_f64(t.nodes[k]),
                fmt_f64(g.cell_centers[j]),
                fmt_f64(path.staggered.rho[[k, j]])
            )?;
        }
    }
    for k in 0..t.n_steps {
        for face in 0..g.n_faces() {
            writeln!(
                f,
                "omega,{},{},{}",
                fmt_f64(t.midpoints[k]),
                fmt_f64(face as f64 * g.cell_width),
                fmt_f64(path.staggered.omega[[k, face]])
            )?;
        }
    }
    for k in 0..t.n_steps {
        for j in 0..g.n_cells {
            writeln!(
                f,
                "zeta,{},{},{}",
                fmt_f64(t.midpoints[k]),
                fmt_f64(g.cell_centers[j]),
                fmt_f64(path.staggered.zeta[[k, j]])
            )?;
        }
    }
    Ok(())
}

fn write_phi_midpoints(
    dir: &Path,
    phi: &Array2<f64>,
    tgrid: &TimeGrid,
    grid: &SpatialGrid,
) -> std::io::Result<()> {
    let mut f = fs::File::create(dir.join("phi.csv"))?;
    writeln!(f, "t,x,phi")?;
    for k in 0..tgrid.n_steps {
        for j in 0..grid.n_cells {
            writeln!(
                f,
                "{},{},{}",
                fmt_f64(tgrid.midpoints[k]),
                fmt_f64(grid.cell_centers[j]),
                fmt_f64(phi[[k, j]])
            )?;
        }
    }
    Ok(())
}

/// Reads a staggered.csv dump back, checking the counts against the grids.
pub fn read_staggered(
    file: &Path,
    grid: &SpatialGrid,
    tgrid: &TimeGrid,
) -> Result<StaggeredFields, String> {
    let text = fs::read_to_string(file).map_err(|e| e.to_string())?;
    let mut rho = Vec::new();
    let mut omega = Vec::new();
    let mut zeta = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 {
            if line.trim() != "field,t,x,value" {
                return Err(format!("unexpected header {line:?}"));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            return Err(format!("line {}: expected 4 columns", lineno + 1));
        }
        let value: f64 = parts[3]
            .trim()
            .parse()
            .map_err(|e| format!("line {}: bad value: {e}", lineno + 1))?;
        match parts[0] {
            "rho" => rho.push(value),
            "omega" => omega.push(value),
            "zeta" => zeta.push(value),
            other => return Err(format!("line {}: unknown field {other:?}", lineno + 1)),
        }
    }
    let (s, n, nf) = (tgrid.n_steps, grid.n_cells, grid.n_faces());
    if rho.len() != (s + 1) * n || omega.len() != s * nf || zeta.len() != s * n {
        return Err(format!(
            "shape mismatch: got {} rho, {} omega, {} zeta values; expected {}, {}, {} for a {} × {} grid",
            rho.len(),
            omega.len(),
            zeta.len(),
            (s + 1) * n,
            s * nf,
            s * n,
            n,
            s
        ));
    }
    let mut u = StaggeredFields::zeros(grid, tgrid);
    for k in 0..=s {
        for j in 0..n {
            u.rho[[k, j]] = rho[k * n + j];
        }
    }
    for k in 0..s {
        for f in 0..nf {
            u.omega[[k, f]] = omega[k * nf + f];
        }
    }
    if grid.kind == DomainKind::Interval {
        for k in 0..s {
            u.omega[[k, 0]] = 0.0;
            u.omega[[k, n]] = 0.0;
        }
    }
    for k in 0..s {
        for j in 0..n {
            u.zeta[[k, j]] = zeta[k * n + j];
        }
    }
    Ok(u)
}

/// Reads a `t,x,phi` file at time nodes × cells.
pub fn read_phi(file: &Path, grid: &SpatialGrid, tgrid: &TimeGrid) -> Result<Array2<f64>, String> {
    let text = fs::read_to_string(file).map_err(|e| e.to_string())?;
    let mut values = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 {
            if line.trim() != "t,x,phi" {
                return Err(format!("unexpected header {line:?}"));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(format!("line {}: expected 3 columns", lineno + 1));
        }
        values.push(
            parts[2]
                .trim()
                .parse::<f64>()
                .map_err(|e| format!("line {}: bad value: {e}", lineno + 1))?,
        );
    }
    let (s, n) = (tgrid.n_steps, grid.n_cells);
    if values.len() != (s + 1) * n {
        return Err(format!(
            "shape mismatch: got {} phi values, expected {} for {} nodes × {} cells",
            values.len(),
            (s + 1) * n,
            s + 1,
            n
        ));
    }
    Ok(Array2::from_shape_fn((s + 1, n), |(k, j)| values[k * n + j]))
}
