//! Result files: scalar-flux CSV and legacy VTK, 1D profiles, residual and
//! k_eff histories, run manifests and diffusivity dumps.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::Command;

use crate::error::{invalid, Result};
use crate::grid::{AngularFluxField, GridSpec, ScalarFlux};
use crate::quadrature::AngularQuadrature;

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn check(phi: &ScalarFlux, grid: &GridSpec) -> Result<()> {
    if phi.nx != grid.nx || phi.ny != grid.ny {
        return Err(invalid("scalar flux does not match the grid"));
    }
    Ok(())
}

/// One group as CSV with header `i,j,x,y,group,value`.
pub fn write_flux_csv<W: Write>(
    mut out: W,
    phi: &ScalarFlux,
    grid: &GridSpec,
    g: usize,
) -> Result<()> {
    check(phi, grid)?;
    if g >= phi.n_groups() {
        return Err(invalid(format!("group {g} out of range")));
    }
    writeln!(out, "i,j,x,y,group,value")?;
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            writeln!(
                out,
                "{i},{j},{},{},{g},{:e}",
                grid.x(i),
                grid.y(j),
                phi.get(i, j, g)
            )?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Legacy ASCII VTK structured points with one scalar array per group,
/// sampled at cell centres.
pub fn write_vtk<W: Write>(
    mut out: W,
    phi: &ScalarFlux,
    grid: &GridSpec,
    title: &str,
) -> Result<()> {
    check(phi, grid)?;
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "{}", title.lines().next().unwrap_or("scalar flux"))?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET STRUCTURED_POINTS")?;
    writeln!(out, "DIMENSIONS {} {} 1", grid.nx, grid.ny)?;
    writeln!(out, "ORIGIN {} {} 0", grid.x(0), grid.y(0))?;
    writeln!(out, "SPACING {} {} 1", grid.dx, grid.dy)?;
    writeln!(out, "POINT_DATA {}", grid.cells())?;
    for g in 0..phi.n_groups() {
        writeln!(out, "SCALARS phi_g{g} double 1")?;
        writeln!(out, "LOOKUP_TABLE default")?;
        for v in phi.group(g) {
            writeln!(out, "{v:e}")?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Column index whose cell centre is nearest to `x`.
pub fn column_at(grid: &GridSpec, x: f64) -> Result<usize> {
    if !(0.0..=grid.nx as f64 * grid.dx).contains(&x) {
        return Err(invalid(format!("x = {x} lies outside the domain")));
    }
    Ok(((x / grid.dx - 0.5).round().max(0.0) as usize).min(grid.nx - 1))
}

/// Row index whose cell centre is nearest to `y`.
pub fn row_at(grid: &GridSpec, y: f64) -> Result<usize> {
    if !(0.0..=grid.ny as f64 * grid.dy).contains(&y) {
        return Err(invalid(format!("y = {y} lies outside the domain")));
    }
    Ok(((y / grid.dy - 0.5).round().max(0.0) as usize).min(grid.ny - 1))
}

/// Scalar flux of group `g` along the column nearest to `x`: `(y, φ)` per row.
pub fn profile_at_x(
    phi: &ScalarFlux,
    grid: &GridSpec,
    x: f64,
    g: usize,
) -> Result<Vec<(f64, f64)>> {
    check(phi, grid)?;
    let i = column_at(grid, x)?;
    Ok((0..grid.ny)
        .map(|j| (grid.y(j), phi.get(i, j, g)))
        .collect())
}

/// Scalar flux of group `g` along the row nearest to `y`: `(x, φ)` per column.
pub fn profile_at_y(
    phi: &ScalarFlux,
    grid: &GridSpec,
    y: f64,
    g: usize,
) -> Result<Vec<(f64, f64)>> {
    check(phi, grid)?;
    let j = row_at(grid, y)?;
    Ok((0..grid.nx)
        .map(|i| (grid.x(i), phi.get(i, j, g)))
        .collect())
}

/// Column cut at `x` for all groups, header `j,y,phi_g0,...`.
pub fn write_profile_x<W: Write>(
    mut out: W,
    phi: &ScalarFlux,
    grid: &GridSpec,
    x: f64,
) -> Result<()> {
    check(phi, grid)?;
    let i = column_at(grid, x)?;
    let groups: Vec<String> = (0..phi.n_groups()).map(|g| format!("phi_g{g}")).collect();
    writeln!(out, "# x = {}", grid.x(i))?;
    writeln!(out, "j,y,{}", groups.join(","))?;
    for j in 0..grid.ny {
        let vals: Vec<String> = (0..phi.n_groups())
            .map(|g| format!("{:e}", phi.get(i, j, g)))
            .collect();
        writeln!(out, "{j},{},{}", grid.y(j), vals.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Row cut at `y` for all groups, header `i,x,phi_g0,...`.
pub fn write_profile_y<W: Write>(
    mut out: W,
    phi: &ScalarFlux,
    grid: &GridSpec,
    y: f64,
) -> Result<()> {
    check(phi, grid)?;
    let j = row_at(grid, y)?;
    let groups: Vec<String> = (0..phi.n_groups()).map(|g| format!("phi_g{g}")).collect();
    writeln!(out, "# y = {}", grid.y(j))?;
    writeln!(out, "i,x,{}", groups.join(","))?;
    for i in 0..grid.nx {
        let vals: Vec<String> = (0..phi.n_groups())
            .map(|g| format!("{:e}", phi.get(i, j, g)))
            .collect();
        writeln!(out, "{i},{},{}", grid.x(i), vals.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// `cycle,level0_residual_l1`.
pub fn write_metrics<W: Write>(mut out: W, residuals: &[f64]) -> Result<()> {
    writeln!(out, "cycle,level0_residual_l1")?;
    for (c, r) in residuals.iter().enumerate() {
        writeln!(out, "{c},{r:e}")?;
    }
    out.flush()?;
    Ok(())
}

/// `iteration,k_eff`, iterations counted from 1.
pub fn write_keff_history<W: Write>(mut out: W, history: &[f64]) -> Result<()> {
    writeln!(out, "iteration,k_eff")?;
    for (m, k) in history.iter().enumerate() {
        writeln!(out, "{},{k:.12}", m + 1)?;
    }
    out.flush()?;
    Ok(())
}

/// Diffusivities of every direction and group, header `i,j,n,g,mu,nu,k_x,k_y`.
pub fn write_diffusivities<W: Write>(
    mut out: W,
    kx: &AngularFluxField,
    ky: &AngularFluxField,
    quad: &AngularQuadrature,
) -> Result<()> {
    kx.check_shape(ky)?;
    let grid = kx.grid();
    writeln!(out, "i,j,n,g,mu,nu,k_x,k_y")?;
    for g in 0..kx.n_groups() {
        for n in 0..kx.n_dirs() {
            let d = quad.direction(n);
            for j in 0..grid.ny {
                for i in 0..grid.nx {
                    writeln!(
                        out,
                        "{i},{j},{n},{g},{},{},{:e},{:e}",
                        d.mu,
                        d.nu,
                        kx.get(i, j, n, g),
                        ky.get(i, j, n, g)
                    )?;
                }
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// `git describe` of the working tree, or `unknown` outside a repository.
pub fn git_describe() -> String {
    Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".into())
}

/// `key = value` lines, in the given order, followed by the git description.
pub fn write_manifest<W: Write>(mut out: W, entries: &[(String, String)]) -> Result<()> {
    for (k, v) in entries {
        writeln!(out, "{k} = {v}")?;
    }
    writeln!(out, "git_describe = {}", git_describe())?;
    out.flush()?;
    Ok(())
}

/// Writes `flux_g<g>.csv` for every group and `flux.vtk` into `dir`.
/// Returns the paths written.
pub fn write_fields(
    dir: &Path,
    phi: &ScalarFlux,
    grid: &GridSpec,
    title: &str,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for g in 0..phi.n_groups() {
        let p = dir.join(format!("flux_g{g}.csv"));
        write_flux_csv(create(&p)?, phi, grid, g)?;
        written.push(p);
    }
    let p = dir.join("flux.vtk");
    write_vtk(create(&p)?, phi, grid, title)?;
    written.push(p);
    Ok(written)
}

/// File name of a column cut, e.g. `profile_x14.csv`.
pub fn profile_x_name(x: f64) -> String {
    format!("profile_x{x}.csv")
}

pub fn write_profile_x_file(
    dir: &Path,
    phi: &ScalarFlux,
    grid: &GridSpec,
    x: f64,
) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let p = dir.join(profile_x_name(x));
    write_profile_x(create(&p)?, phi, grid, x)?;
    Ok(p)
}

pub fn write_profile_y_file(
    dir: &Path,
    phi: &ScalarFlux,
    grid: &GridSpec,
    y: f64,
) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let p = dir.join(format!("profile_y{y}.csv"));
    write_profile_y(create(&p)?, phi, grid, y)?;
    Ok(p)
}

pub fn write_metrics_file(dir: &Path, residuals: &[f64]) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let p = dir.join("metrics.csv");
    write_metrics(create(&p)?, residuals)?;
    Ok(p)
}

pub fn write_keff_file(dir: &Path, history: &[f64]) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let p = dir.join("keff_history.csv");
    write_keff_history(create(&p)?, history)?;
    Ok(p)
}

pub fn write_manifest_file(dir: &Path, entries: &[(String, String)]) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let p = dir.join("manifest.txt");
    write_manifest(create(&p)?, entries)?;
    Ok(p)
}
