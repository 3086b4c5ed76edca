//! CSV tables, gnuplot scripts and legacy VTK files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use oldroyd_core::stepping::StepDiagnostics;
use oldroyd_core::FeSpace;
use serde::Serialize;

use crate::CliError;

#[derive(Serialize)]
struct DiagnosticsRow {
    step: usize,
    t: f64,
    energy: f64,
    l2_norm: f64,
    div_residual: f64,
    picard_iterations: usize,
    picard_converged: bool,
    kernel_norm: f64,
}

pub fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `step,t,energy,l2_norm,div_residual,picard_iterations,picard_converged,kernel_norm`.
pub fn write_diagnostics(path: &Path, diags: &[StepDiagnostics]) -> Result<(), CliError> {
    write_csv(
        path,
        diags.iter().map(|d| DiagnosticsRow {
            step: d.step,
            t: d.t,
            energy: d.energy,
            l2_norm: d.l2_norm,
            div_residual: d.div_residual,
            picard_iterations: d.picard_iterations,
            picard_converged: d.picard_converged,
            kernel_norm: d.kernel_norm,
        }),
    )
}

/// Legacy ASCII unstructured grid with vertex velocities and pressures.
pub fn write_vtk(path: &Path, space: &FeSpace, u: &[f64], p: &[f64], title: &str) -> Result<(), CliError> {
    let mesh = space.mesh();
    let nv = mesh.n_vertices();
    let nt = mesh.n_triangles();
    let mut vel = vec![[0.0; 2]; nv];
    let mut pre = vec![0.0; nv];
    for t in 0..nt {
        for (k, &v) in mesh.triangles()[t].iter().enumerate() {
            let mut l = [0.0; 3];
            l[k] = 1.0;
            vel[v] = space.eval_velocity(u, t, l).0;
            pre[v] = space.eval_pressure(p, t, l);
        }
    }
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID");
    let _ = writeln!(s, "POINTS {nv} double");
    for x in mesh.vertices() {
        let _ = writeln!(s, "{} {} 0", x[0], x[1]);
    }
    let _ = writeln!(s, "CELLS {nt} {}", 4 * nt);
    for tri in mesh.triangles() {
        let _ = writeln!(s, "3 {} {} {}", tri[0], tri[1], tri[2]);
    }
    let _ = writeln!(s, "CELL_TYPES {nt}");
    for _ in 0..nt {
        let _ = writeln!(s, "5");
    }
    let _ = writeln!(s, "POINT_DATA {nv}\nVECTORS velocity double");
    for v in &vel {
        let _ = writeln!(s, "{} {} 0", v[0], v[1]);
    }
    let _ = writeln!(s, "SCALARS pressure double 1\nLOOKUP_TABLE default");
    for q in &pre {
        let _ = writeln!(s, "{q}");
    }
    fs::write(path, s)?;
    Ok(())
}

/// Log-log plots of the convergence table, one panel per study mode.
pub fn gnuplot_script(csv_name: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# usage: gnuplot convergence.gp  (writes convergence.png)");
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set terminal pngcairo size 1500,450");
    let _ = writeln!(s, "set output 'convergence.png'");
    let _ = writeln!(s, "set logscale xy\nset key bottom right\nset grid");
    let _ = writeln!(s, "set multiplot layout 1,3");
    let panels = [
        ("galerkin", "h", 2, "errL2_u:errH1_u:errL2_p", "Galerkin errors"),
        ("two_level", "H", 3, "gapH1:gapP", "two-level gap (fixed h)"),
        ("coupled", "h", 2, "errH1_u", "coupled H = sqrt(h)"),
    ];
    for (mode, xlabel, xcol, cols, title) in panels {
        let _ = writeln!(s, "set title '{title}'\nset xlabel '{xlabel}'");
        let plots: Vec<String> = cols
            .split(':')
            .map(|c| {
                let col = column_index(c);
                format!(
                    "'{csv_name}' using (strcol(1) eq '{mode}' ? ${xcol} : NaN):{col} with linespoints title '{c}'"
                )
            })
            .collect();
        let _ = writeln!(s, "plot {}", plots.join(", \\\n     "));
    }
    let _ = writeln!(s, "unset multiplot");
    s
}

/// 1-based column of the convergence table.
fn column_index(name: &str) -> usize {
    crate::commands::STUDY_COLUMNS
        .iter()
        .position(|c| *c == name)
        .map(|i| i + 1)
        .expect("known column")
}
