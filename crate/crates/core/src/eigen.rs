//! Group-coupling sources, fixed-source solves and power iteration for k_eff.
//!
//! Sources are isotropic: the emission density `Q` of a cell is spread evenly
//! over the sphere, `q_n = Q / 4π`, so that `φ = Σ_n p_n ψ_n` is the physical
//! scalar flux (an infinite absorber with source `s` has `φ = s / Σ_a`).

use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::grid::{apply_boundary, scalar_flux, AngularFluxField, ScalarFlux};
use crate::multigrid::{build_hierarchy, max_levels, MultigridHierarchy, SolverSettings};
use crate::problems::ProblemSpec;
use crate::quadrature::build_quadrature;
use crate::transport::MaterialField;

const INV_4PI: f64 = 1.0 / (4.0 * PI);

#[derive(Debug, Clone)]
pub struct EigenState {
    pub psi: AngularFluxField,
    pub phi: ScalarFlux,
    pub k_eff: f64,
    pub lambda: f64,
    /// Outer iterations performed.
    pub iteration: usize,
    /// `k_eff` after each outer iteration.
    pub history: Vec<f64>,
    /// Final finest-level residual of each outer iteration's inner solve.
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct FixedSourceSolution {
    pub psi: AngularFluxField,
    pub phi: ScalarFlux,
    /// Finest-level residual 1-norm before each cycle, followed by the final value.
    pub residual_history: Vec<f64>,
    pub converged: bool,
}

impl FixedSourceSolution {
    pub fn initial_residual(&self) -> f64 {
        self.residual_history.first().copied().unwrap_or(0.0)
    }

    pub fn final_residual(&self) -> f64 {
        self.residual_history.last().copied().unwrap_or(0.0)
    }

    /// Final over initial residual (0 for a zero problem).
    pub fn reduction(&self) -> f64 {
        let first = self.initial_residual();
        if first == 0.0 {
            0.0
        } else {
            self.final_residual() / first
        }
    }
}

/// Iteration controls of a solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Multigrid cycles per (inner) solve.
    pub mg_iters: usize,
    /// Outer power iterations.
    pub outer_iters: usize,
    /// Relative residual reduction counted as converged.
    pub tolerance: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            mg_iters: 100,
            outer_iters: 100,
            tolerance: 1e-4,
        }
    }
}

/// Fission production density `Σ_g νΣ_f,g φ_g` per cell.
pub fn fission_density(phi: &ScalarFlux, mat: &MaterialField) -> Vec<f64> {
    let mut f = vec![0.0; mat.cells()];
    for g in 0..mat.n_groups {
        for (fk, (ns, p)) in f.iter_mut().zip(mat.nu_sigma_f[g].iter().zip(phi.group(g))) {
            *fk += ns * p;
        }
    }
    f
}

/// Total fission production `Σ_cells Σ_g νΣ_f φ ΔxΔy`.
pub fn fission_production(phi: &ScalarFlux, mat: &MaterialField, cell_area: f64) -> f64 {
    fission_density(phi, mat).iter().sum::<f64>() * cell_area
}

/// Per-direction isotropic source of group `g` with an explicit fission
/// density: `(Σ_{g'≠g} Σ_s(g'→g) φ_{g'} + λ χ_g f + s_g) / 4π`. Without a
/// fission density the problem is a fixed-source one and `s_g` is included;
/// with one it is an eigenvalue problem and `s_g` is left out.
fn group_source_with(
    phi: &ScalarFlux,
    mat: &MaterialField,
    lambda: f64,
    fission: Option<&[f64]>,
    g: usize,
) -> Vec<f64> {
    let mut q = match fission {
        None => mat.source[g].clone(),
        Some(_) => vec![0.0; mat.cells()],
    };
    for gp in (0..mat.n_groups).filter(|&gp| gp != g) {
        for (qk, (s, p)) in q
            .iter_mut()
            .zip(mat.sigma_s[gp][g].iter().zip(phi.group(gp)))
        {
            *qk += s * p;
        }
    }
    if let Some(f) = fission {
        for (qk, (c, fk)) in q.iter_mut().zip(mat.chi[g].iter().zip(f)) {
            *qk += lambda * c * fk;
        }
    }
    q.iter_mut().for_each(|v| *v *= INV_4PI);
    q
}

/// Isotropic eigenvalue-problem source `q[i,j,g]` (the same for every
/// direction) of group `g`, with scatter and fission both evaluated from
/// `phi`. The fixed source `s_g` is added only for non-multiplying media.
pub fn assemble_group_source(
    phi: &ScalarFlux,
    mat: &MaterialField,
    lambda: f64,
    g: usize,
) -> Result<Vec<f64>> {
    check_flux(phi, mat)?;
    if g >= mat.n_groups {
        return Err(invalid(format!("group {g} out of range")));
    }
    let f = mat.has_fission().then(|| fission_density(phi, mat));
    Ok(group_source_with(phi, mat, lambda, f.as_deref(), g))
}

/// All-group source field on the grid and directions of `like`.
pub fn assemble_source(
    phi: &ScalarFlux,
    mat: &MaterialField,
    lambda: f64,
    like: &AngularFluxField,
) -> Result<AngularFluxField> {
    check_flux(phi, mat)?;
    let f = mat.has_fission().then(|| fission_density(phi, mat));
    source_field(phi, mat, lambda, f.as_deref(), like)
}

fn source_field(
    phi: &ScalarFlux,
    mat: &MaterialField,
    lambda: f64,
    fission: Option<&[f64]>,
    like: &AngularFluxField,
) -> Result<AngularFluxField> {
    if like.n_groups() != mat.n_groups {
        return Err(Error::DimensionMismatch(
            "field and material group counts differ".into(),
        ));
    }
    let nx = mat.nx;
    let mut q = AngularFluxField::zeros(*like.grid(), like.n_dirs(), like.n_groups());
    let dims = q.dims();
    for g in 0..mat.n_groups {
        let s = group_source_with(phi, mat, lambda, fission, g);
        for n in 0..like.n_dirs() {
            let plane = q.plane_mut(n, g);
            for j in 0..mat.ny {
                let o = dims.idx(0, j as isize);
                plane[o..o + nx].copy_from_slice(&s[j * nx..(j + 1) * nx]);
            }
        }
    }
    Ok(q)
}

fn check_flux(phi: &ScalarFlux, mat: &MaterialField) -> Result<()> {
    if phi.nx != mat.nx || phi.ny != mat.ny || phi.n_groups() != mat.n_groups {
        return Err(Error::DimensionMismatch(
            "scalar flux does not match the material field".into(),
        ));
    }
    Ok(())
}

/// Solver settings and hierarchy depth implied by a problem's run settings.
pub fn solver_settings(problem: &ProblemSpec) -> SolverSettings {
    let s = &problem.settings;
    let mut out = SolverSettings::new(s.scheme, s.order);
    out.n_sweeps = s.jacobi_sweeps;
    out.n_levels = s
        .levels
        .unwrap_or_else(|| max_levels(problem.grid.nx, problem.grid.ny));
    out
}

pub fn build_problem_hierarchy(problem: &ProblemSpec) -> Result<MultigridHierarchy> {
    let mat = problem.material_field()?;
    let quad = build_quadrature(problem.settings.n_a)?;
    build_hierarchy(problem.grid, quad, mat, &solver_settings(problem))
}

pub fn solve_options(problem: &ProblemSpec) -> SolveOptions {
    SolveOptions {
        mg_iters: problem.settings.mg_iters,
        outer_iters: problem.settings.outer_iters,
        ..SolveOptions::default()
    }
}

/// `cycles` sawtooth cycles with the scatter source lagged by one cycle
/// (all groups together). Returns the pre-cycle residuals and the final one.
fn inner_solve(
    h: &MultigridHierarchy,
    psi: &mut AngularFluxField,
    lambda: f64,
    fission: Option<&[f64]>,
    cycles: usize,
    mut on_cycle: impl FnMut(usize, f64),
) -> Result<Vec<f64>> {
    let l0 = h.finest();
    let source = |psi: &AngularFluxField| -> Result<AngularFluxField> {
        let phi = scalar_flux(psi, &l0.quad)?;
        source_field(&phi, &l0.mat, lambda, fission, psi)
    };
    let mut history = Vec::with_capacity(cycles + 1);
    for c in 0..cycles {
        let q = source(psi)?;
        let r = h.sawtooth_cycle(psi, &q)?;
        on_cycle(c, r);
        history.push(r);
    }
    apply_boundary(psi, &l0.quad)?;
    history.push(h.residual_norm(psi, &source(psi)?)?);
    Ok(history)
}

/// Fixed-source solve of a non-multiplying problem on a prepared hierarchy.
pub fn solve_fixed_source_with(
    h: &MultigridHierarchy,
    opts: &SolveOptions,
    on_cycle: impl FnMut(usize, f64),
) -> Result<FixedSourceSolution> {
    let l0 = h.finest();
    if l0.mat.has_fission() {
        return Err(Error::InvalidProblem(
            "fixed-source solves need a non-multiplying problem; use power iteration".into(),
        ));
    }
    let mut psi = h.finest_zeros();
    let residual_history = inner_solve(h, &mut psi, 0.0, None, opts.mg_iters, on_cycle)?;
    let phi = scalar_flux(&psi, &l0.quad)?;
    let first = residual_history[0];
    let last = *residual_history.last().expect("final residual");
    let converged = last.is_finite() && last <= opts.tolerance * first;
    Ok(FixedSourceSolution {
        psi,
        phi,
        residual_history,
        converged,
    })
}

pub fn solve_fixed_source(problem: &ProblemSpec) -> Result<FixedSourceSolution> {
    let h = build_problem_hierarchy(problem)?;
    solve_fixed_source_with(&h, &solve_options(problem), |_, _| {})
}

/// Generic power method. `solve(x, k)` returns the new iterate produced by the
/// fission source of `x` scaled by `1/k`; `production` is the fission
/// production of an iterate and `scale` multiplies an iterate in place.
/// Each iteration sets `k ← k · P(x_new) / P(x_old)` and normalises
/// `P(x_new) = 1`. Returns the final iterate, `k` and the history.
pub fn power_method<T>(
    mut x: T,
    k0: f64,
    iterations: usize,
    mut solve: impl FnMut(&T, f64) -> Result<T>,
    production: impl Fn(&T) -> f64,
    scale: impl Fn(&mut T, f64),
) -> Result<(T, f64, Vec<f64>)> {
    let p0 = production(&x);
    if !(p0.is_finite() && p0 > 0.0) {
        return Err(Error::InvalidProblem(format!(
            "fission production of the initial guess is {p0}"
        )));
    }
    scale(&mut x, 1.0 / p0);
    let mut k = k0;
    let mut history = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let mut next = solve(&x, k)?;
        let p = production(&next);
        if !(p.is_finite() && p > 0.0) {
            return Err(Error::InvalidProblem(format!(
                "fission production collapsed to {p}"
            )));
        }
        k *= p;
        scale(&mut next, 1.0 / p);
        x = next;
        history.push(k);
    }
    Ok((x, k, history))
}

/// k-eigenvalue power iteration on a prepared hierarchy, starting from
/// `φ = 1`, `k = 1`. Each outer iteration runs `opts.mg_iters` cycles with
/// the fission source of the previous iterate and lagged scatter.
pub fn power_iteration_with(
    h: &MultigridHierarchy,
    opts: &SolveOptions,
    mut on_outer: impl FnMut(usize, f64, f64),
) -> Result<EigenState> {
    let l0 = h.finest();
    let mat = &l0.mat;
    if !mat.has_fission() {
        return Err(Error::InvalidProblem(
            "power iteration needs fissile material".into(),
        ));
    }
    let area = l0.grid.cell_area();
    let mut psi = h.finest_zeros();
    psi.fill(INV_4PI);
    apply_boundary(&mut psi, &l0.quad)?;
    let production = |p: &AngularFluxField| {
        scalar_flux(p, &l0.quad).map_or(f64::NAN, |phi| fission_production(&phi, mat, area))
    };
    let mut residuals = Vec::with_capacity(opts.outer_iters);
    let mut outer = 0;
    let (psi, k, history) = power_method(
        psi,
        1.0,
        opts.outer_iters,
        |x, k| {
            let phi = scalar_flux(x, &l0.quad)?;
            let f = fission_density(&phi, mat);
            let mut next = x.clone();
            let hist = inner_solve(h, &mut next, 1.0 / k, Some(&f), opts.mg_iters, |_, _| {})?;
            let r = *hist.last().expect("final residual");
            residuals.push(r);
            outer += 1;
            let k_new = k * production(&next) / production(x);
            on_outer(outer, k_new, r);
            Ok(next)
        },
        production,
        |x, s| x.scale(s),
    )?;
    if !(k.is_finite() && k > 0.0) {
        return Err(Error::InvalidProblem(format!(
            "power iteration produced k_eff = {k}"
        )));
    }
    let phi = scalar_flux(&psi, &l0.quad)?;
    Ok(EigenState {
        psi,
        phi,
        k_eff: k,
        lambda: 1.0 / k,
        iteration: history.len(),
        history,
        residuals,
    })
}

pub fn power_iteration(problem: &ProblemSpec) -> Result<EigenState> {
    let h = build_problem_hierarchy(problem)?;
    power_iteration_with(&h, &solve_options(problem), |_, _, _| {})
}
