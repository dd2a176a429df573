//! Space-angle multigrid: hierarchy construction, restriction, prolongation,
//! Jacobi smoothing and the sawtooth cycle.
//!
//! Each level halves `nx`, `ny` and the patches per face edge `n_a`. Angle
//! coarsening stops at `n_a = 1`; later levels coarsen space only. Coarse
//! levels use the upwind discretisation with `β = 1`. The finest level uses
//! the selected scheme.

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::filters::{build_upwind_filters, Filter2D, Order};
use crate::grid::{apply_boundary, apply_vacuum_plane, AngularFluxField, GridSpec, PlaneDims};
use crate::quadrature::{coarsen_quadrature, AngularQuadrature};
use crate::transport::{
    diagonal_value, upwind_filter, upwind_plane_residual, upwind_residual, MaterialField, PGConfig,
    PgOperator, PgWorkspace, Scheme,
};

/// Guard for reciprocals of zero cross sections in harmonic averages.
pub const HARMONIC_EPS: f64 = 1e-30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub scheme: Scheme,
    pub order: Order,
    pub pg: PGConfig,
    pub n_levels: usize,
    /// Jacobi sweeps per level visit.
    pub n_sweeps: usize,
}

impl SolverSettings {
    pub fn new(scheme: Scheme, order: Order) -> Self {
        Self {
            scheme,
            order,
            pg: PGConfig::for_order(order),
            n_levels: 1,
            n_sweeps: 3,
        }
    }
}

/// One level of the hierarchy.
#[derive(Debug, Clone)]
pub struct Level {
    pub grid: GridSpec,
    pub quad: AngularQuadrature,
    pub mat: MaterialField,
    /// Upwind stencil `μ w_x + ν w_y` per direction.
    pub stencils: Vec<Filter2D>,
}

impl Level {
    fn new(grid: GridSpec, quad: AngularQuadrature, mat: MaterialField) -> Result<Self> {
        let uf = build_upwind_filters(grid.dx, grid.dy)?;
        let stencils = quad
            .directions()
            .iter()
            .map(|d| upwind_filter(&uf, d.mu, d.nu))
            .collect();
        Ok(Self {
            grid,
            quad,
            mat,
            stencils,
        })
    }

    pub fn n_groups(&self) -> usize {
        self.mat.n_groups
    }

    pub fn zeros(&self) -> AngularFluxField {
        AngularFluxField::zeros(self.grid, self.quad.len(), self.n_groups())
    }

    /// Diagonal `β (|μ|/Δx + |ν|/Δy + σ_T)` at cell `k` for direction `n`.
    fn diagonal(&self, n: usize, g: usize, k: usize, beta: f64) -> f64 {
        let d = self.quad.direction(n);
        diagonal_value(
            d.mu,
            d.nu,
            self.grid.dx,
            self.grid.dy,
            self.mat.sigma_t[g][k],
            beta,
        )
    }
}

#[derive(Debug, Clone)]
pub struct MultigridHierarchy {
    pub levels: Vec<Level>,
    /// Whether the transfer from level `ℓ` to `ℓ + 1` also coarsens angle.
    pub angle_coarsened: Vec<bool>,
    pub settings: SolverSettings,
    pub pg: Option<PgOperator>,
}

/// Deepest hierarchy allowed by the spatial dimensions.
pub fn max_levels(nx: usize, ny: usize) -> usize {
    let mut levels = 1;
    let (mut x, mut y) = (nx, ny);
    while x % 2 == 0 && y % 2 == 0 && x >= 2 && y >= 2 {
        x /= 2;
        y /= 2;
        levels += 1;
    }
    levels
}

/// Harmonic mean of a 2×2 block; any zero child gives zero.
pub fn harmonic_block(children: [f64; 4]) -> f64 {
    if children.contains(&0.0) {
        return 0.0;
    }
    4.0 / children
        .iter()
        .map(|c| 1.0 / c.max(HARMONIC_EPS))
        .sum::<f64>()
}

/// Coarsens a material field over 2×2 blocks: cross sections harmonically,
/// fission spectrum and source arithmetically.
pub fn coarsen_material(mat: &MaterialField) -> Result<MaterialField> {
    if !mat.nx.is_multiple_of(2) || !mat.ny.is_multiple_of(2) {
        return Err(invalid(format!(
            "cannot halve a {}×{} material map",
            mat.nx, mat.ny
        )));
    }
    let (cx, cy) = (mat.nx / 2, mat.ny / 2);
    let block = |f: &[f64], i: usize, j: usize| {
        let k = 2 * j * mat.nx + 2 * i;
        [f[k], f[k + 1], f[k + mat.nx], f[k + mat.nx + 1]]
    };
    let harmonic = |f: &Vec<f64>| -> Vec<f64> {
        (0..cx * cy)
            .map(|c| harmonic_block(block(f, c % cx, c / cx)))
            .collect()
    };
    let mean = |f: &Vec<f64>| -> Vec<f64> {
        (0..cx * cy)
            .map(|c| block(f, c % cx, c / cx).iter().sum::<f64>() / 4.0)
            .collect()
    };
    Ok(MaterialField {
        nx: cx,
        ny: cy,
        n_groups: mat.n_groups,
        sigma_t: mat.sigma_t.iter().map(harmonic).collect(),
        sigma_a: mat.sigma_a.iter().map(harmonic).collect(),
        sigma_s: mat
            .sigma_s
            .iter()
            .map(|row| row.iter().map(harmonic).collect())
            .collect(),
        nu_sigma_f: mat.nu_sigma_f.iter().map(harmonic).collect(),
        chi: mat.chi.iter().map(mean).collect(),
        source: mat.source.iter().map(mean).collect(),
    })
}

/// Builds `settings.n_levels` levels. The finest grid's halo is widened to fit
/// the Petrov-Galerkin stencils when that scheme is selected.
pub fn build_hierarchy(
    grid: GridSpec,
    quad: AngularQuadrature,
    mat: MaterialField,
    settings: &SolverSettings,
) -> Result<MultigridHierarchy> {
    let n_levels = settings.n_levels;
    if n_levels == 0 {
        return Err(invalid("a hierarchy needs at least one level"));
    }
    if settings.n_sweeps == 0 {
        return Err(invalid("at least one Jacobi sweep per level is required"));
    }
    let factor = 1usize << (n_levels - 1);
    if !grid.nx.is_multiple_of(factor) || !grid.ny.is_multiple_of(factor) {
        return Err(invalid(format!(
            "{}×{} grid cannot be halved {} times (deepest legal hierarchy has {} levels)",
            grid.nx,
            grid.ny,
            n_levels - 1,
            max_levels(grid.nx, grid.ny)
        )));
    }
    mat.check_grid(&grid, mat.n_groups)?;
    let pg = match settings.scheme {
        Scheme::PetrovGalerkin => Some(PgOperator::new(
            crate::filters::build_convfem_filters(settings.order, grid.dx, grid.dy)?,
            settings.pg,
        )?),
        Scheme::Upwind => None,
    };
    let halo = pg.as_ref().map_or(1, |p| p.required_halo()).max(grid.halo);
    let mut levels = vec![Level::new(grid.with_halo(halo), quad, mat)?];
    let mut angle_coarsened = Vec::new();
    for _ in 1..n_levels {
        let prev = levels.last().expect("at least one level");
        let g = GridSpec::new(
            prev.grid.nx / 2,
            prev.grid.ny / 2,
            prev.grid.dx * 2.0,
            prev.grid.dy * 2.0,
            1,
        )?;
        let (q, coarsened) = match coarsen_quadrature(&prev.quad) {
            Ok(q) => (q, true),
            Err(Error::CannotCoarsen) => (prev.quad.clone(), false),
            Err(e) => return Err(e),
        };
        let m = coarsen_material(&prev.mat)?;
        angle_coarsened.push(coarsened);
        levels.push(Level::new(g, q, m)?);
    }
    Ok(MultigridHierarchy {
        levels,
        angle_coarsened,
        settings: *settings,
        pg,
    })
}

fn check_level_field(field: &AngularFluxField, level: &Level) -> Result<()> {
    let g = field.grid();
    if g.nx != level.grid.nx
        || g.ny != level.grid.ny
        || field.n_dirs() != level.quad.len()
        || field.n_groups() != level.n_groups()
    {
        return Err(Error::DimensionMismatch(format!(
            "field {}×{}×{}×{} does not match level {}×{}×{}×{}",
            g.nx,
            g.ny,
            field.n_dirs(),
            field.n_groups(),
            level.grid.nx,
            level.grid.ny,
            level.quad.len(),
            level.n_groups()
        )));
    }
    Ok(())
}

/// Two-stage restriction: `p_n r Δx Δy`, then a stride-2 sum over each 2×2
/// spatial block (and each 2×2 angular patch block when `coarsen_angle`).
/// The result lives on a halo-1 grid of twice the spacing.
pub fn restrict(
    residual: &AngularFluxField,
    fine_quad: &AngularQuadrature,
    coarsen_angle: bool,
) -> Result<AngularFluxField> {
    let fine = *residual.grid();
    if fine_quad.len() != residual.n_dirs() {
        return Err(Error::DimensionMismatch(
            "quadrature does not match residual".into(),
        ));
    }
    if !fine.nx.is_multiple_of(2) || !fine.ny.is_multiple_of(2) {
        return Err(invalid(format!(
            "cannot restrict a {}×{} grid",
            fine.nx, fine.ny
        )));
    }
    if coarsen_angle && fine_quad.n_a() < 2 {
        return Err(Error::CannotCoarsen);
    }
    let coarse_grid = GridSpec::new(fine.nx / 2, fine.ny / 2, fine.dx * 2.0, fine.dy * 2.0, 1)?;
    let nd_c = if coarsen_angle {
        fine_quad.len() / 4
    } else {
        fine_quad.len()
    };
    let parent = |n: usize| {
        if coarsen_angle {
            fine_quad.parent_index(n)
        } else {
            n
        }
    };
    let mut out = AngularFluxField::zeros(coarse_grid, nd_c, residual.n_groups());
    let area = fine.dx * fine.dy;
    let (fd, cd) = (fine.dims(), coarse_grid.dims());
    let pl = cd.len();
    out.data_mut()
        .par_chunks_mut(pl)
        .enumerate()
        .for_each(|(c, dst)| {
            let (nc, g) = (c % nd_c, c / nd_c);
            for n in (0..residual.n_dirs()).filter(|&n| parent(n) == nc) {
                let w = fine_quad.weight(n) * area;
                let src = residual.plane(n, g);
                for jc in 0..coarse_grid.ny as isize {
                    for ic in 0..coarse_grid.nx as isize {
                        let s = src[fd.idx(2 * ic, 2 * jc)]
                            + src[fd.idx(2 * ic + 1, 2 * jc)]
                            + src[fd.idx(2 * ic, 2 * jc + 1)]
                            + src[fd.idx(2 * ic + 1, 2 * jc + 1)];
                        dst[cd.idx(ic, jc)] += w * s;
                    }
                }
            }
        });
    Ok(out)
}

/// Piecewise-constant injection onto the fine grid `fine` with quadrature
/// `fine_quad`.
pub fn prolong(
    delta: &AngularFluxField,
    fine: GridSpec,
    fine_quad: &AngularQuadrature,
    coarsened_angle: bool,
) -> Result<AngularFluxField> {
    let coarse = *delta.grid();
    if fine.nx != 2 * coarse.nx || fine.ny != 2 * coarse.ny {
        return Err(Error::DimensionMismatch(format!(
            "coarse {}×{} is not half of fine {}×{}",
            coarse.nx, coarse.ny, fine.nx, fine.ny
        )));
    }
    let expect_dirs = if coarsened_angle {
        fine_quad.len() / 4
    } else {
        fine_quad.len()
    };
    if delta.n_dirs() != expect_dirs {
        return Err(Error::DimensionMismatch(
            "coarse direction count does not match".into(),
        ));
    }
    let nd = fine_quad.len();
    let mut out = AngularFluxField::zeros(fine, nd, delta.n_groups());
    let (fd, cd) = (fine.dims(), coarse.dims());
    out.data_mut()
        .par_chunks_mut(fd.len())
        .enumerate()
        .for_each(|(c, dst)| {
            let (n, g) = (c % nd, c / nd);
            let p = if coarsened_angle {
                fine_quad.parent_index(n)
            } else {
                n
            };
            let src = delta.plane(p, g);
            for j in 0..fine.ny as isize {
                for i in 0..fine.nx as isize {
                    dst[fd.idx(i, j)] = src[cd.idx(i / 2, j / 2)];
                }
            }
        });
    Ok(out)
}

/// Damped Jacobi on one channel: `ψ ← ψ - r(ψ)/d`, boundary reapplied before
/// every residual evaluation and after the last update.
#[allow(clippy::too_many_arguments)]
fn jacobi_plane(
    dims: PlaneDims,
    psi: &mut [f64],
    q: &[f64],
    level: &Level,
    n: usize,
    g: usize,
    n_sweeps: usize,
    pg: Option<&PgOperator>,
    ws: &mut PgWorkspace,
    r: &mut Vec<f64>,
    scratch: &mut Vec<f64>,
) {
    let dir = level.quad.direction(n);
    let beta = pg.map_or(1.0, |p| p.cfg.beta_diag);
    let nx = dims.nx;
    let inv_d: Vec<f64> = (0..dims.nx * dims.ny)
        .map(|k| 1.0 / level.diagonal(n, g, k, beta))
        .collect();
    r.resize(dims.len(), 0.0);
    for _ in 0..n_sweeps {
        apply_vacuum_plane(dims, psi, dir.mu, dir.nu);
        match pg {
            Some(op) => {
                op.plane_residual(dims, psi, dir.mu, dir.nu, &level.mat.sigma_t[g], q, r, ws)
            }
            None => upwind_plane_residual(
                dims,
                psi,
                &level.stencils[n],
                &level.mat.sigma_t[g],
                q,
                r,
                scratch,
            ),
        }
        for j in 0..dims.ny {
            let o = dims.idx(0, j as isize);
            let inv = &inv_d[j * nx..(j + 1) * nx];
            for i in 0..nx {
                psi[o + i] -= r[o + i] * inv[i];
            }
        }
    }
    apply_vacuum_plane(dims, psi, dir.mu, dir.nu);
}

/// `n_sweeps` Jacobi sweeps on `A ψ = q` at level `level_index`. The finest
/// level uses the configured scheme when `scheme` is `PetrovGalerkin`;
/// everything else uses upwind with `β = 1`.
pub fn jacobi_sweep(
    psi: &mut AngularFluxField,
    q: &AngularFluxField,
    hierarchy: &MultigridHierarchy,
    level_index: usize,
    n_sweeps: usize,
    scheme: Scheme,
) -> Result<()> {
    let level = hierarchy
        .levels
        .get(level_index)
        .ok_or_else(|| invalid(format!("level {level_index} does not exist")))?;
    check_level_field(psi, level)?;
    psi.check_shape(q)?;
    let pg =
        match scheme {
            Scheme::PetrovGalerkin => {
                if level_index != 0 {
                    return Err(invalid(
                        "the Petrov-Galerkin scheme is only used on the finest level",
                    ));
                }
                Some(hierarchy.pg.as_ref().ok_or_else(|| {
                    invalid("hierarchy was built without Petrov-Galerkin filters")
                })?)
            }
            Scheme::Upwind => None,
        };
    if let Some(op) = pg {
        if psi.grid().halo < op.required_halo() {
            return Err(invalid(
                "field halo is narrower than the Petrov-Galerkin stencil",
            ));
        }
    }
    let dims = psi.dims();
    let nd = psi.n_dirs();
    psi.data_mut()
        .par_chunks_mut(dims.len())
        .enumerate()
        .for_each_init(
            || (PgWorkspace::default(), Vec::new(), Vec::new()),
            |(ws, r, scratch), (c, plane)| {
                let (n, g) = (c % nd, c / nd);
                jacobi_plane(
                    dims,
                    plane,
                    q.plane(n, g),
                    level,
                    n,
                    g,
                    n_sweeps,
                    pg,
                    ws,
                    r,
                    scratch,
                );
            },
        );
    Ok(())
}

impl MultigridHierarchy {
    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn finest(&self) -> &Level {
        &self.levels[0]
    }

    /// Zero field on the finest grid (with the halo the finest scheme needs).
    pub fn finest_zeros(&self) -> AngularFluxField {
        self.finest().zeros()
    }

    /// Residual `A ψ - q` of the finest-level scheme. `psi` must have its
    /// boundary applied.
    pub fn finest_residual(
        &self,
        psi: &AngularFluxField,
        q: &AngularFluxField,
    ) -> Result<AngularFluxField> {
        let l0 = self.finest();
        match &self.pg {
            Some(op) => op.residual(psi, &l0.mat, q, &l0.quad),
            None => upwind_residual(
                psi,
                &l0.mat,
                q,
                &l0.quad,
                &build_upwind_filters(l0.grid.dx, l0.grid.dy)?,
            ),
        }
    }

    /// Restriction from level `level_index` to the next coarser level.
    pub fn restrict(
        &self,
        level_index: usize,
        residual: &AngularFluxField,
    ) -> Result<AngularFluxField> {
        if level_index + 1 >= self.levels.len() {
            return Err(invalid(format!(
                "level {level_index} is the coarsest level"
            )));
        }
        let level = &self.levels[level_index];
        check_level_field(residual, level)?;
        restrict(residual, &level.quad, self.angle_coarsened[level_index])
    }

    /// Prolongation from level `level_index` to the next finer level.
    pub fn prolong(
        &self,
        level_index: usize,
        delta: &AngularFluxField,
    ) -> Result<AngularFluxField> {
        if level_index == 0 || level_index >= self.levels.len() {
            return Err(invalid(format!("cannot prolong from level {level_index}")));
        }
        check_level_field(delta, &self.levels[level_index])?;
        let fine = &self.levels[level_index - 1];
        prolong(
            delta,
            fine.grid,
            &fine.quad,
            self.angle_coarsened[level_index - 1],
        )
    }

    /// One sawtooth cycle on `A ψ = q`. Returns the interior 1-norm of the
    /// finest residual evaluated at the start of the cycle.
    pub fn sawtooth_cycle(&self, psi: &mut AngularFluxField, q: &AngularFluxField) -> Result<f64> {
        let l0 = self.finest();
        check_level_field(psi, l0)?;
        psi.check_shape(q)?;
        apply_boundary(psi, &l0.quad)?;
        let sweeps = self.settings.n_sweeps;
        let scheme = self.settings.scheme;
        let r0 = self.finest_residual(psi, q)?;
        let norm = r0.interior_l1();
        // Right-hand sides: -r on the finest level, then restricted and turned
        // back into a density by the coarse weight and cell area.
        let mut rhs = Vec::with_capacity(self.levels.len());
        let mut neg = r0;
        neg.scale(-1.0);
        rhs.push(neg);
        for l in 1..self.levels.len() {
            let mut r = self.restrict(l - 1, &rhs[l - 1])?;
            let lv = &self.levels[l];
            let area = lv.grid.dx * lv.grid.dy;
            let weights = lv.quad.weights().to_vec();
            r.for_each_channel_mut(|n, _, plane| {
                let s = 1.0 / (weights[n] * area);
                plane.iter_mut().for_each(|v| *v *= s);
            });
            rhs.push(r);
        }
        let coarsest = self.levels.len() - 1;
        let mut delta = self.levels[coarsest].zeros();
        for l in (0..=coarsest).rev() {
            if l < coarsest {
                delta = self.prolong(l + 1, &delta)?;
            }
            if l == 0 {
                // finest correction lives on the finest halo
                delta = delta.with_halo(l0.grid.halo);
            }
            jacobi_sweep(&mut delta, &rhs[l], self, l, sweeps, Scheme::Upwind)?;
        }
        psi.axpy(1.0, &delta)?;
        apply_boundary(psi, &l0.quad)?;
        jacobi_sweep(psi, q, self, 0, sweeps, scheme)?;
        Ok(norm)
    }

    /// Interior 1-norm of the finest residual of `psi`.
    pub fn residual_norm(&self, psi: &AngularFluxField, q: &AngularFluxField) -> Result<f64> {
        let mut p = psi.clone();
        apply_boundary(&mut p, &self.finest().quad)?;
        Ok(self.finest_residual(&p, q)?.interior_l1())
    }
}

/// Convenience wrapper for [`MultigridHierarchy::sawtooth_cycle`].
pub fn sawtooth_cycle(
    psi: &mut AngularFluxField,
    q: &AngularFluxField,
    hierarchy: &MultigridHierarchy,
) -> Result<f64> {
    hierarchy.sawtooth_cycle(psi, q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::build_quadrature;
    use crate::transport::MaterialData;
    use rand::{Rng, SeedableRng};

    fn uniform(nx: usize, ny: usize, s: f64) -> MaterialField {
        MaterialField::uniform(nx, ny, &MaterialData::absorber(s, 0.0)).unwrap()
    }

    fn settings(levels: usize, scheme: Scheme) -> SolverSettings {
        SolverSettings {
            n_levels: levels,
            ..SolverSettings::new(scheme, Order::Quadratic)
        }
    }

    #[test]
    fn harmonic_rules() {
        assert_eq!(harmonic_block([1.0; 4]), 1.0);
        assert_eq!(harmonic_block([1.0, 1.0, 0.0, 1.0]), 0.0);
        assert!(
            (harmonic_block([1.0, 2.0, 4.0, 4.0]) - 4.0 / (1.0 + 0.5 + 0.25 + 0.25)).abs() < 1e-15
        );
        let m = uniform(4, 4, 0.5);
        let c = coarsen_material(&m).unwrap();
        assert!(c.sigma_t[0].iter().all(|v| (*v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn level_shapes_follow_halving() {
        let grid = GridSpec::new(360, 280, 0.1, 0.1, 1).unwrap();
        let quad = build_quadrature(4).unwrap();
        assert_eq!(max_levels(360, 280), 4);
        let h = build_hierarchy(
            grid,
            quad,
            uniform(360, 280, 0.5),
            &settings(4, Scheme::Upwind),
        )
        .unwrap();
        let shapes: Vec<_> = h
            .levels
            .iter()
            .map(|l| (l.grid.nx, l.grid.ny, l.quad.n_a()))
            .collect();
        assert_eq!(
            shapes,
            vec![(360, 280, 4), (180, 140, 2), (90, 70, 1), (45, 35, 1)]
        );
        assert_eq!(h.angle_coarsened, vec![true, true, false]);
        for l in &h.levels {
            assert!((l.quad.total_weight() - 4.0 * std::f64::consts::PI).abs() < 1e-12);
        }
        assert!((h.levels[3].grid.dx - 0.8).abs() < 1e-15);
    }

    #[test]
    fn indivisible_hierarchy_rejected() {
        let grid = GridSpec::new(45, 35, 0.8, 0.8, 1).unwrap();
        let quad = build_quadrature(1).unwrap();
        let err = build_hierarchy(
            grid,
            quad,
            uniform(45, 35, 0.5),
            &settings(2, Scheme::Upwind),
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
        assert_eq!(max_levels(136, 136), 4);
        assert_eq!(max_levels(45, 35), 1);
    }

    #[test]
    fn restriction_of_ones() {
        let quad = build_quadrature(2).unwrap();
        let grid = GridSpec::new(4, 4, 1.0, 1.0, 1).unwrap();
        let r = AngularFluxField::from_fn(grid, quad.len(), 1, |_, _, _, _| 1.0);
        let c = restrict(&r, &quad, true).unwrap();
        let cq = coarsen_quadrature(&quad).unwrap();
        for n in 0..8 {
            // four spatial children, weights of four angular children
            let expect = 4.0 * cq.weight(n);
            for j in 0..2 {
                for i in 0..2 {
                    assert!((c.get(i, j, n, 0) - expect).abs() < 1e-13);
                }
            }
        }
        // n_a = 1 weights are π/2: 4 cells × 4 × π/2 = 8π for a uniform n_a = 2 set
        let total: f64 = (0..8).map(|n| c.get(0, 0, n, 0)).sum();
        assert!((total - 16.0 * std::f64::consts::PI).abs() < 1e-12);
        let z = restrict(&AngularFluxField::zeros(grid, quad.len(), 1), &quad, true).unwrap();
        assert!(z.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn restriction_conserves_weighted_sum() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(1);
        let quad = build_quadrature(4).unwrap();
        let grid = GridSpec::new(8, 6, 0.3, 0.2, 2).unwrap();
        let mut r = AngularFluxField::zeros(grid, quad.len(), 2);
        for v in r.data_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        for angle in [true, false] {
            let c = restrict(&r, &quad, angle).unwrap();
            for g in 0..2 {
                let fine: f64 = (0..quad.len())
                    .map(|n| {
                        (0..6)
                            .flat_map(|j| (0..8).map(move |i| (i, j)))
                            .map(|(i, j)| r.get(i, j, n, g))
                            .sum::<f64>()
                            * quad.weight(n)
                            * 0.06
                    })
                    .sum();
                let coarse: f64 = (0..c.n_dirs())
                    .map(|n| {
                        (0..3)
                            .flat_map(|j| (0..4).map(move |i| (i, j)))
                            .map(|(i, j)| c.get(i, j, n, g))
                            .sum::<f64>()
                    })
                    .sum();
                assert!((fine - coarse).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn prolongation_injects() {
        let fq = build_quadrature(2).unwrap();
        let fine = GridSpec::new(4, 4, 1.0, 1.0, 1).unwrap();
        let coarse = GridSpec::new(2, 2, 2.0, 2.0, 1).unwrap();
        let c = AngularFluxField::from_fn(coarse, 8, 1, |_, _, _, _| 2.5);
        let f = prolong(&c, fine, &fq, true).unwrap();
        assert!(f.interior().iter().all(|v| *v == 2.5));
        let single =
            AngularFluxField::from_fn(
                coarse,
                8,
                1,
                |i, j, n, _| if (i, j, n) == (1, 0, 3) { 1.0 } else { 0.0 },
            );
        let f = prolong(&single, fine, &fq, true).unwrap();
        let mut count = 0;
        for n in 0..fq.len() {
            for j in 0..4 {
                for i in 0..4 {
                    if f.get(i, j, n, 0) != 0.0 {
                        count += 1;
                        assert_eq!(fq.parent_index(n), 3);
                        assert!(i >= 2 && j < 2);
                    }
                }
            }
        }
        assert_eq!(count, 16);
    }

    #[test]
    fn restrict_after_prolong_scales_by_child_weight_and_area() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(2);
        let fq = build_quadrature(2).unwrap();
        let cq = coarsen_quadrature(&fq).unwrap();
        let fine = GridSpec::new(4, 4, 0.5, 0.5, 1).unwrap();
        let coarse = GridSpec::new(2, 2, 1.0, 1.0, 1).unwrap();
        let mut x = AngularFluxField::zeros(coarse, 8, 1);
        for v in x.data_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let back = restrict(&prolong(&x, fine, &fq, true).unwrap(), &fq, true).unwrap();
        for n in 0..8 {
            for j in 0..2 {
                for i in 0..2 {
                    let expect = 4.0 * 0.25 * cq.weight(n) * x.get(i, j, n, 0);
                    assert!((back.get(i, j, n, 0) - expect).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn coarsest_restriction_rejected() {
        let grid = GridSpec::new(4, 4, 1.0, 1.0, 1).unwrap();
        let h = build_hierarchy(
            grid,
            build_quadrature(1).unwrap(),
            uniform(4, 4, 1.0),
            &settings(2, Scheme::Upwind),
        )
        .unwrap();
        let r = h.levels[1].zeros();
        assert!(h.restrict(1, &r).is_err());
        assert!(h.prolong(0, &h.levels[0].zeros()).is_err());
    }

    #[test]
    fn jacobi_fixed_point_and_absorber_limit() {
        let quad = build_quadrature(1).unwrap();
        let grid = GridSpec::new(1, 1, 1.0, 1.0, 1).unwrap();
        let h =
            build_hierarchy(grid, quad, uniform(1, 1, 1.0), &settings(1, Scheme::Upwind)).unwrap();
        let q = AngularFluxField::from_fn(grid, 8, 1, |_, _, _, _| 1.0);
        let mut psi = h.finest_zeros();
        jacobi_sweep(&mut psi, &q, &h, 0, 200, Scheme::Upwind).unwrap();
        // single cell with vacuum inflow: (|μ| + |ν| + σ) ψ = q
        for n in 0..8 {
            let d = h.finest().quad.direction(n);
            let expect = 1.0 / (d.mu.abs() + d.nu.abs() + 1.0);
            assert!((psi.get(0, 0, n, 0) - expect).abs() < 1e-14);
        }
        let before = psi.clone();
        jacobi_sweep(&mut psi, &q, &h, 0, 3, Scheme::Upwind).unwrap();
        assert_eq!(before.interior(), psi.interior());
    }

    #[test]
    fn zero_residual_cycle_is_identity() {
        let quad = build_quadrature(2).unwrap();
        let grid = GridSpec::new(8, 8, 0.5, 0.5, 1).unwrap();
        let h = build_hierarchy(
            grid,
            quad,
            uniform(8, 8, 1.0),
            &settings(3, Scheme::PetrovGalerkin),
        )
        .unwrap();
        let q = h.finest_zeros();
        let mut psi = h.finest_zeros();
        let n = h.sawtooth_cycle(&mut psi, &q).unwrap();
        assert_eq!(n, 0.0);
        assert!(psi.data().iter().all(|v| *v == 0.0));
    }

    fn source_problem(levels: usize, scheme: Scheme) -> (MultigridHierarchy, AngularFluxField) {
        let quad = build_quadrature(2).unwrap();
        let grid = GridSpec::new(16, 16, 0.5, 0.5, 1).unwrap();
        let h = build_hierarchy(
            grid,
            quad.clone(),
            uniform(16, 16, 0.5),
            &settings(levels, scheme),
        )
        .unwrap();
        let q = AngularFluxField::from_fn(h.finest().grid, quad.len(), 1, |i, j, _, _| {
            if (6..10).contains(&i) && (6..10).contains(&j) {
                1.0
            } else {
                0.0
            }
        });
        (h, q)
    }

    #[test]
    fn upwind_cycles_converge() {
        for levels in [1, 3] {
            let (h, q) = source_problem(levels, Scheme::Upwind);
            let mut psi = h.finest_zeros();
            let first = h.sawtooth_cycle(&mut psi, &q).unwrap();
            for _ in 0..60 {
                h.sawtooth_cycle(&mut psi, &q).unwrap();
            }
            let last = h.residual_norm(&psi, &q).unwrap();
            assert!(last < 1e-6 * first, "levels={levels}: {first} -> {last}");
        }
    }

    #[test]
    fn pg_cycles_reduce_residual() {
        for levels in [1, 3] {
            let (h, q) = source_problem(levels, Scheme::PetrovGalerkin);
            let mut psi = h.finest_zeros();
            let first = h.sawtooth_cycle(&mut psi, &q).unwrap();
            for _ in 0..10 {
                h.sawtooth_cycle(&mut psi, &q).unwrap();
            }
            let last = h.residual_norm(&psi, &q).unwrap();
            assert!(last < 0.1 * first, "levels={levels}: {first} -> {last}");
        }
    }
}
