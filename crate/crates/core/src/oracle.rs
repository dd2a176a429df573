//! Dense reference operators for small problems.
//!
//! The upwind system is assembled entry by entry from the first-order
//! upwind difference (no stencil engine involved), so it can check the
//! convolution-based kernels. Unknowns are ordered group, direction, row,
//! column: `((g·N_d + n)·ny + j)·nx + i`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};

use crate::eigen::{power_iteration_with, SolveOptions};
use crate::error::{invalid, Error, Result};
use crate::filters::build_upwind_filters;
use crate::filters::Order;
use crate::grid::{AngularFluxField, GridSpec};
use crate::multigrid::{build_hierarchy, jacobi_sweep, SolverSettings};
use crate::quadrature::{build_quadrature, AngularQuadrature};
use crate::transport::{upwind_residual, MaterialData, MaterialField, Scheme};

/// Dense operators of one small problem.
#[derive(Debug, Clone)]
pub struct DenseSystem {
    pub nx: usize,
    pub ny: usize,
    pub n_dirs: usize,
    pub n_groups: usize,
    /// Streaming plus total removal, block diagonal in groups.
    pub a: DMatrix<f64>,
    /// Out-of-group scatter into each group.
    pub s: DMatrix<f64>,
    /// Fission emission `χ_g Σ_g' νΣ_f φ_g' / 4π`.
    pub f: DMatrix<f64>,
    /// Fission production functional `Σ νΣ_f φ ΔxΔy`.
    pub production: DVector<f64>,
}

pub fn unknown_index(
    nx: usize,
    ny: usize,
    n_dirs: usize,
    i: usize,
    j: usize,
    n: usize,
    g: usize,
) -> usize {
    ((g * n_dirs + n) * ny + j) * nx + i
}

pub fn assemble(
    grid: &GridSpec,
    quad: &AngularQuadrature,
    mat: &MaterialField,
) -> Result<DenseSystem> {
    mat.check_grid(grid, mat.n_groups)?;
    let (nx, ny, nd, ng) = (grid.nx, grid.ny, quad.len(), mat.n_groups);
    let size = nx * ny * nd * ng;
    if size > 20_000 {
        return Err(invalid(format!(
            "dense oracle limited to 20000 unknowns, got {size}"
        )));
    }
    let idx = |i: usize, j: usize, n: usize, g: usize| unknown_index(nx, ny, nd, i, j, n, g);
    let mut a = DMatrix::zeros(size, size);
    let mut s = DMatrix::zeros(size, size);
    let mut f = DMatrix::zeros(size, size);
    let mut production = DVector::zeros(size);
    let area = grid.dx * grid.dy;
    for g in 0..ng {
        for n in 0..nd {
            let d = quad.direction(n);
            let (cx, cy) = (d.mu.abs() / grid.dx, d.nu.abs() / grid.dy);
            for j in 0..ny {
                for i in 0..nx {
                    let row = idx(i, j, n, g);
                    let c = j * nx + i;
                    a[(row, row)] = cx + cy + mat.sigma_t[g][c];
                    // upstream neighbours; outside the domain the incoming flux is zero
                    let up_i = if d.mu > 0.0 {
                        i.checked_sub(1)
                    } else {
                        Some(i + 1).filter(|&v| v < nx)
                    };
                    let up_j = if d.nu > 0.0 {
                        j.checked_sub(1)
                    } else {
                        Some(j + 1).filter(|&v| v < ny)
                    };
                    if let Some(ii) = up_i {
                        a[(row, idx(ii, j, n, g))] -= cx;
                    }
                    if let Some(jj) = up_j {
                        a[(row, idx(i, jj, n, g))] -= cy;
                    }
                    for gp in 0..ng {
                        for m in 0..nd {
                            let col = idx(i, j, m, gp);
                            let p = quad.weight(m) / (4.0 * PI);
                            if gp != g {
                                s[(row, col)] += mat.sigma_s[gp][g][c] * p;
                            }
                            f[(row, col)] += mat.chi[g][c] * mat.nu_sigma_f[gp][c] * p;
                        }
                    }
                    production[row] = mat.nu_sigma_f[g][c] * quad.weight(n) * area;
                }
            }
        }
    }
    Ok(DenseSystem {
        nx,
        ny,
        n_dirs: nd,
        n_groups: ng,
        a,
        s,
        f,
        production,
    })
}

/// Interior values of a field in oracle order.
pub fn pack(field: &AngularFluxField) -> DVector<f64> {
    let g = field.grid();
    let mut v = DVector::zeros(g.nx * g.ny * field.n_channels());
    let mut k = 0;
    for grp in 0..field.n_groups() {
        for n in 0..field.n_dirs() {
            for j in 0..g.ny {
                for i in 0..g.nx {
                    v[k] = field.get(i, j, n, grp);
                    k += 1;
                }
            }
        }
    }
    v
}

/// Field with the interior taken from `v` (oracle order) and a zero halo.
pub fn unpack(v: &DVector<f64>, like: &AngularFluxField) -> Result<AngularFluxField> {
    let g = *like.grid();
    if v.len() != g.nx * g.ny * like.n_channels() {
        return Err(Error::DimensionMismatch(
            "vector length does not match the field".into(),
        ));
    }
    let nd = like.n_dirs();
    Ok(AngularFluxField::from_fn(
        g,
        nd,
        like.n_groups(),
        |i, j, n, grp| v[unknown_index(g.nx, g.ny, nd, i, j, n, grp)],
    ))
}

impl DenseSystem {
    /// `β`-scaled diagonal Jacobi step `ψ - (β D)^{-1} (A ψ - q)`.
    pub fn jacobi_step(&self, psi: &DVector<f64>, q: &DVector<f64>, beta: f64) -> DVector<f64> {
        let r = &self.a * psi - q;
        DVector::from_fn(psi.len(), |k, _| psi[k] - r[k] / (beta * self.a[(k, k)]))
    }

    /// Solution of `(A - S) ψ = q`.
    pub fn fixed_source(&self, q: &DVector<f64>) -> Result<DVector<f64>> {
        (&self.a - &self.s)
            .lu()
            .solve(q)
            .ok_or_else(|| Error::InvalidProblem("singular transport matrix".into()))
    }

    /// Power iteration on `(A - S)^{-1} F` with the production-ratio update,
    /// run until successive k differ by less than `tol`. Returns k and the
    /// normalised eigenvector.
    pub fn power_iteration(
        &self,
        max_iters: usize,
        tol: f64,
    ) -> Result<(f64, DVector<f64>, Vec<f64>)> {
        let lu = (&self.a - &self.s).lu();
        let mut x = DVector::from_element(self.a.nrows(), 1.0 / (4.0 * PI));
        let p0 = self.production.dot(&x);
        if p0 <= 0.0 {
            return Err(Error::InvalidProblem("no fission production".into()));
        }
        x /= p0;
        let mut k = 1.0;
        let mut history = Vec::new();
        for _ in 0..max_iters {
            let rhs = &self.f * &x / k;
            let next = lu
                .solve(&rhs)
                .ok_or_else(|| Error::InvalidProblem("singular transport matrix".into()))?;
            let p = self.production.dot(&next);
            let k_new = k * p;
            x = next / p;
            history.push(k_new);
            let done = (k_new - k).abs() < tol;
            k = k_new;
            if done {
                break;
            }
        }
        Ok((k, x, history))
    }
}

/// Random small multi-group instance: per-cell materials drawn from `rng`.
pub fn random_material<R: Rng>(
    rng: &mut R,
    nx: usize,
    ny: usize,
    n_groups: usize,
    fissile: bool,
) -> Result<MaterialField> {
    let mats: Vec<MaterialData> = (0..3)
        .map(|_| {
            let scatter = (0..n_groups)
                .map(|from| {
                    (0..n_groups)
                        .map(|to| {
                            if to >= from {
                                rng.gen_range(0.0..0.4)
                            } else {
                                0.0
                            }
                        })
                        .collect()
                })
                .collect();
            let nu_sigma_f: Vec<f64> = (0..n_groups)
                .map(|_| {
                    if fissile {
                        rng.gen_range(0.05..0.3)
                    } else {
                        0.0
                    }
                })
                .collect();
            let mut chi = vec![0.0; n_groups];
            chi[0] = 1.0;
            MaterialData {
                sigma_a: (0..n_groups).map(|_| rng.gen_range(0.1..1.0)).collect(),
                sigma_f: nu_sigma_f.iter().map(|v| v / 2.4).collect(),
                nu_sigma_f,
                chi,
                scatter,
                source: (0..n_groups).map(|_| rng.gen_range(0.0..1.0)).collect(),
            }
        })
        .collect();
    let regions: Vec<usize> = (0..nx * ny).map(|_| rng.gen_range(0..mats.len())).collect();
    MaterialField::from_regions(nx, ny, &regions, &mats)
}

/// Discrepancies between the solver kernels and the dense oracle on one
/// random instance.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub unknowns: usize,
    /// Max abs difference of the upwind residual `Aψ - q`.
    pub residual_error: f64,
    /// Max abs difference after one Jacobi sweep.
    pub jacobi_error: f64,
    pub k_dense: f64,
    pub k_solver: f64,
}

impl OracleReport {
    pub fn k_error(&self) -> f64 {
        (self.k_dense - self.k_solver).abs()
    }
}

/// Compares residual, Jacobi sweep and k_eff against the dense oracle on a
/// random `nx × ny` instance with `8 n_a²` directions.
pub fn compare_random(
    nx: usize,
    ny: usize,
    n_a: usize,
    n_groups: usize,
    seed: u64,
) -> Result<OracleReport> {
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let grid = GridSpec::new(nx, ny, rng.gen_range(0.5..1.5), rng.gen_range(0.5..1.5), 1)?;
    let quad = build_quadrature(n_a)?;
    let mat = random_material(&mut rng, nx, ny, n_groups, true)?;
    let dense = assemble(&grid, &quad, &mat)?;
    let nd = quad.len();

    let size = nx * ny * nd * n_groups;
    let pv = DVector::from_fn(size, |_, _| rng.gen_range(-1.0..1.0));
    let qv = DVector::from_fn(size, |_, _| rng.gen_range(-1.0..1.0));
    let like = AngularFluxField::zeros(grid, nd, n_groups);
    let mut psi = unpack(&pv, &like)?;
    let q = unpack(&qv, &like)?;
    crate::grid::apply_boundary(&mut psi, &quad)?;
    let r = upwind_residual(
        &psi,
        &mat,
        &q,
        &quad,
        &build_upwind_filters(grid.dx, grid.dy)?,
    )?;
    let residual_error = (pack(&r) - (&dense.a * &pv - &qv)).amax();

    let levels = crate::multigrid::max_levels(nx, ny).min(3);
    let settings = SolverSettings {
        n_levels: levels,
        ..SolverSettings::new(Scheme::Upwind, Order::Linear)
    };
    let h = build_hierarchy(grid, quad, mat, &settings)?;
    let mut swept = psi.clone();
    jacobi_sweep(&mut swept, &q, &h, 0, 1, Scheme::Upwind)?;
    let jacobi_error = (pack(&swept) - dense.jacobi_step(&pv, &qv, 1.0)).amax();

    let (k_dense, _, _) = dense.power_iteration(1000, 1e-13)?;
    let opts = SolveOptions {
        mg_iters: 20,
        outer_iters: 200,
        ..SolveOptions::default()
    };
    let k_solver = power_iteration_with(&h, &opts, |_, _, _| {})?.k_eff;
    Ok(OracleReport {
        unknowns: dense.a.nrows(),
        residual_error,
        jacobi_error,
        k_dense,
        k_solver,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pack_round_trip() {
        let grid = GridSpec::new(3, 2, 1.0, 1.0, 2).unwrap();
        let f = AngularFluxField::from_fn(grid, 8, 2, |i, j, n, g| {
            (i + 10 * j + 100 * n + 1000 * g) as f64
        });
        let v = pack(&f);
        assert_eq!(v[unknown_index(3, 2, 8, 2, 1, 5, 1)], f.get(2, 1, 5, 1));
        let back = unpack(&v, &f).unwrap();
        assert_eq!(back.interior(), f.interior());
    }

    #[test]
    fn one_cell_absorber_by_hand() {
        let grid = GridSpec::new(1, 1, 2.0, 1.0, 1).unwrap();
        let quad = build_quadrature(1).unwrap();
        let mat = MaterialField::uniform(1, 1, &MaterialData::absorber(0.5, 1.0)).unwrap();
        let d = assemble(&grid, &quad, &mat).unwrap();
        for n in 0..8 {
            let dir = quad.direction(n);
            let expect = dir.mu.abs() / 2.0 + dir.nu.abs() + 0.5;
            assert!((d.a[(n, n)] - expect).abs() < 1e-15);
        }
        assert_eq!(d.s.amax(), 0.0);
        assert_eq!(d.f.amax(), 0.0);
    }

    #[test]
    fn dense_power_iteration_proportional() {
        // A = I, S = 0, F = c·I restricted to a rank-one production: k = c
        let c = 1.25;
        let n = 4;
        let d = DenseSystem {
            nx: n,
            ny: 1,
            n_dirs: 1,
            n_groups: 1,
            a: DMatrix::identity(n, n),
            s: DMatrix::zeros(n, n),
            f: DMatrix::identity(n, n) * c,
            production: DVector::from_element(n, 1.0),
        };
        let (k, _, hist) = d.power_iteration(10, 1e-14).unwrap();
        assert!((k - c).abs() < 1e-14);
        assert!((hist[0] - c).abs() < 1e-14);
    }

    #[test]
    fn random_instances_agree_with_dense() {
        for (seed, groups) in [(1, 1), (2, 2)] {
            let r = compare_random(6, 6, 1, groups, seed).unwrap();
            assert!(r.residual_error < 1e-12, "{r:?}");
            assert!(r.jacobi_error < 1e-12, "{r:?}");
            assert!(r.k_error() < 1e-6, "{r:?}");
        }
    }

    fn random_hierarchy(
        seed: u64,
        groups: usize,
        fissile: bool,
    ) -> crate::multigrid::MultigridHierarchy {
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let grid = GridSpec::new(6, 6, 0.8, 0.8, 1).unwrap();
        let mat = random_material(&mut rng, 6, 6, groups, fissile).unwrap();
        let settings = SolverSettings {
            n_levels: 2,
            ..SolverSettings::new(Scheme::Upwind, Order::Linear)
        };
        build_hierarchy(grid, build_quadrature(1).unwrap(), mat, &settings).unwrap()
    }

    #[test]
    fn power_history_converges_after_burn_in() {
        let h = random_hierarchy(5, 2, true);
        let opts = SolveOptions {
            mg_iters: 30,
            outer_iters: 60,
            ..SolveOptions::default()
        };
        let st = power_iteration_with(&h, &opts, |_, _, _| {}).unwrap();
        let steps: Vec<f64> = st.history.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        for m in 10..steps.len() {
            if steps[m - 1] < 1e-12 {
                break;
            }
            assert!(
                steps[m] <= steps[m - 1],
                "outer {m}: {} after {}",
                steps[m],
                steps[m - 1]
            );
        }
    }

    #[test]
    fn fixed_source_independent_of_group_order() {
        let h = random_hierarchy(9, 2, false);
        let mut mat = h.finest().mat.clone();
        for v in [
            &mut mat.sigma_t,
            &mut mat.sigma_a,
            &mut mat.nu_sigma_f,
            &mut mat.chi,
            &mut mat.source,
        ] {
            v.reverse();
        }
        mat.sigma_s.reverse();
        mat.sigma_s.iter_mut().for_each(|to| to.reverse());
        let settings = h.settings;
        let flipped =
            build_hierarchy(h.finest().grid, h.finest().quad.clone(), mat, &settings).unwrap();
        let opts = SolveOptions {
            mg_iters: 200,
            ..SolveOptions::default()
        };
        let a = crate::eigen::solve_fixed_source_with(&h, &opts, |_, _| {}).unwrap();
        let b = crate::eigen::solve_fixed_source_with(&flipped, &opts, |_, _| {}).unwrap();
        for g in 0..2 {
            for (x, y) in a.phi.group(g).iter().zip(b.phi.group(1 - g)) {
                assert!((x - y).abs() < 1e-10 * (1.0 + x.abs()), "{x} vs {y}");
            }
        }
    }
}
