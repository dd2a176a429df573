//! Discrete residuals: first-order upwind, Petrov-Galerkin with non-linear
//! residual-based diffusion, and the Jacobi diagonal.
//!
//! All residuals are per unit area: the ConvFEM filters are normalised by the
//! lumped mass, so the removal and source terms enter with unit weight. The
//! residual is then on the same scale as the upwind system and its diagonal.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::filters::{
    build_convfem_filters, mixed_mass_filter, Filter2D, FilterSet, Order, UpwindFilterSet,
};
use crate::grid::{conv_plane, fill_halo_copy, AngularFluxField, GridSpec, PlaneDims};
use crate::quadrature::AngularQuadrature;

/// Cell-wise cross sections and sources, each stored `[g][j * nx + i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialField {
    pub nx: usize,
    pub ny: usize,
    pub n_groups: usize,
    /// Total removal `Σ_a + Σ_{g'≠g} Σ_s(g→g')`.
    pub sigma_t: Vec<Vec<f64>>,
    pub sigma_a: Vec<Vec<f64>>,
    /// `sigma_s[from][to][cell]`.
    pub sigma_s: Vec<Vec<Vec<f64>>>,
    pub nu_sigma_f: Vec<Vec<f64>>,
    pub chi: Vec<Vec<f64>>,
    pub source: Vec<Vec<f64>>,
}

/// Cross sections of one material for all groups.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialData {
    pub sigma_a: Vec<f64>,
    pub nu_sigma_f: Vec<f64>,
    pub sigma_f: Vec<f64>,
    pub chi: Vec<f64>,
    /// `scatter[from][to]`.
    pub scatter: Vec<Vec<f64>>,
    pub source: Vec<f64>,
}

impl MaterialData {
    pub fn n_groups(&self) -> usize {
        self.sigma_a.len()
    }

    /// One-group material without scattering or fission.
    pub fn absorber(sigma_a: f64, source: f64) -> Self {
        Self {
            sigma_a: vec![sigma_a],
            nu_sigma_f: vec![0.0],
            sigma_f: vec![0.0],
            chi: vec![0.0],
            scatter: vec![vec![0.0]],
            source: vec![source],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.n_groups();
        if g == 0 {
            return Err(Error::InvalidProblem("material has no groups".into()));
        }
        if self.nu_sigma_f.len() != g
            || self.sigma_f.len() != g
            || self.chi.len() != g
            || self.source.len() != g
            || self.scatter.len() != g
        {
            return Err(Error::DimensionMismatch(
                "material arrays disagree on the group count".into(),
            ));
        }
        if self.scatter.iter().any(|r| r.len() != g) {
            return Err(Error::DimensionMismatch(
                "scatter matrix is not square".into(),
            ));
        }
        let all = self
            .sigma_a
            .iter()
            .chain(&self.nu_sigma_f)
            .chain(&self.sigma_f)
            .chain(&self.chi)
            .chain(self.scatter.iter().flatten());
        for v in all {
            if !(v.is_finite() && *v >= 0.0) {
                return Err(Error::InvalidProblem(format!(
                    "cross sections must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

impl MaterialField {
    /// Builds the cell-wise field from a region map (`[j * nx + i]` material
    /// index) and a material table.
    pub fn from_regions(
        nx: usize,
        ny: usize,
        regions: &[usize],
        table: &[MaterialData],
    ) -> Result<Self> {
        if regions.len() != nx * ny {
            return Err(Error::DimensionMismatch(format!(
                "region map has {} cells, grid has {}",
                regions.len(),
                nx * ny
            )));
        }
        let first = table
            .first()
            .ok_or_else(|| Error::InvalidProblem("empty material table".into()))?;
        let ng = first.n_groups();
        for m in table {
            m.validate()?;
            if m.n_groups() != ng {
                return Err(Error::DimensionMismatch(
                    "materials disagree on the group count".into(),
                ));
            }
        }
        if let Some(&bad) = regions.iter().find(|&&r| r >= table.len()) {
            return Err(Error::InvalidProblem(format!(
                "region map refers to material {bad}, table has {}",
                table.len()
            )));
        }
        let per_group = |f: &dyn Fn(&MaterialData, usize) -> f64| -> Vec<Vec<f64>> {
            (0..ng)
                .map(|g| regions.iter().map(|&r| f(&table[r], g)).collect())
                .collect()
        };
        let sigma_a = per_group(&|m, g| m.sigma_a[g]);
        let sigma_t = per_group(&|m, g| {
            m.sigma_a[g]
                + (0..ng)
                    .filter(|&h| h != g)
                    .map(|h| m.scatter[g][h])
                    .sum::<f64>()
        });
        let sigma_s = (0..ng)
            .map(|from| {
                (0..ng)
                    .map(|to| {
                        regions
                            .iter()
                            .map(|&r| table[r].scatter[from][to])
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            nx,
            ny,
            n_groups: ng,
            sigma_t,
            sigma_a,
            sigma_s,
            nu_sigma_f: per_group(&|m, g| m.nu_sigma_f[g]),
            chi: per_group(&|m, g| m.chi[g]),
            source: per_group(&|m, g| m.source[g]),
        })
    }

    pub fn uniform(nx: usize, ny: usize, material: &MaterialData) -> Result<Self> {
        Self::from_regions(nx, ny, &vec![0; nx * ny], std::slice::from_ref(material))
    }

    pub fn cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn has_fission(&self) -> bool {
        self.nu_sigma_f.iter().flatten().any(|v| *v > 0.0)
    }

    pub fn check_grid(&self, grid: &GridSpec, n_groups: usize) -> Result<()> {
        if self.nx != grid.nx || self.ny != grid.ny || self.n_groups != n_groups {
            return Err(Error::DimensionMismatch(format!(
                "materials are {}×{}×{} groups, field is {}×{}×{} groups",
                self.nx, self.ny, self.n_groups, grid.nx, grid.ny, n_groups
            )));
        }
        Ok(())
    }
}

/// Spatial discretisation used on the finest level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Upwind,
    PetrovGalerkin,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Upwind => "upwind",
            Scheme::PetrovGalerkin => "pg",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "upwind" => Ok(Scheme::Upwind),
            "pg" | "petrov-galerkin" => Ok(Scheme::PetrovGalerkin),
            other => Err(invalid(format!(
                "unknown scheme '{other}' (expected upwind or pg)"
            ))),
        }
    }
}

/// How the residual driving the isotropic diffusivity is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResidualMode {
    /// Current order minus one order lower.
    LowOrder,
    /// One order higher minus current order.
    HighOrder,
    /// `β_r (m_L⁻¹ m - I)` applied to the advection term.
    MixedMass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiffusionMode {
    /// Separate `k_x`, `k_y` from per-axis residuals (the default).
    Anisotropic,
    /// One `k` shared by both axes.
    Isotropic(ResidualMode),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PGConfig {
    pub epsilon_k: f64,
    pub alpha_kabs: f64,
    pub alpha_ksquare: f64,
    pub alpha_r: f64,
    pub beta_r: f64,
    pub beta_diag: f64,
    pub diffusion: DiffusionMode,
}

impl PGConfig {
    pub fn for_order(order: Order) -> Self {
        let two_p = 2f64.powi(order.p() as i32);
        Self {
            epsilon_k: 1e-3,
            alpha_kabs: two_p / 16.0,
            alpha_ksquare: two_p / 2.0,
            alpha_r: 3.0,
            beta_r: 3.0,
            beta_diag: 3.0,
            diffusion: DiffusionMode::Anisotropic,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [
            self.epsilon_k,
            self.alpha_kabs,
            self.alpha_ksquare,
            self.alpha_r,
            self.beta_r,
            self.beta_diag,
        ];
        if vals.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(invalid("Petrov-Galerkin parameters must be positive"))
        }
    }
}

fn check_field(
    field: &AngularFluxField,
    quad: &AngularQuadrature,
    mat: &MaterialField,
) -> Result<()> {
    if quad.len() != field.n_dirs() {
        return Err(Error::DimensionMismatch(format!(
            "quadrature has {} directions, field has {}",
            quad.len(),
            field.n_dirs()
        )));
    }
    mat.check_grid(field.grid(), field.n_groups())
}

/// Upwind advection stencil `μ w_x(μ) + ν w_y(ν)` of one direction.
pub fn upwind_filter(uf: &UpwindFilterSet, mu: f64, nu: f64) -> Filter2D {
    uf.w_x(mu).scaled(mu).add(&uf.w_y(nu).scaled(nu))
}

/// Interior `out = adv + σ_T ψ - q` where `adv` is already in `out`.
fn add_reaction(dims: PlaneDims, out: &mut [f64], psi: &[f64], sigma_t: &[f64], q: &[f64]) {
    for j in 0..dims.ny {
        let o = dims.idx(0, j as isize);
        let sig = &sigma_t[j * dims.nx..(j + 1) * dims.nx];
        for i in 0..dims.nx {
            out[o + i] += sig[i] * psi[o + i] - q[o + i];
        }
    }
}

/// Upwind residual of one channel plane.
#[allow(clippy::too_many_arguments)]
pub fn upwind_plane_residual(
    dims: PlaneDims,
    psi: &[f64],
    stencil: &Filter2D,
    sigma_t: &[f64],
    q: &[f64],
    out: &mut [f64],
    scratch: &mut Vec<f64>,
) {
    conv_plane(dims, psi, stencil, 1.0, out, scratch);
    add_reaction(dims, out, psi, sigma_t, q);
}

/// `r = μ D_x ψ + ν D_y ψ + σ_T ψ - q` with first-order upwind differences.
pub fn upwind_residual(
    psi: &AngularFluxField,
    mat: &MaterialField,
    q: &AngularFluxField,
    quad: &AngularQuadrature,
    uf: &UpwindFilterSet,
) -> Result<AngularFluxField> {
    check_field(psi, quad, mat)?;
    psi.check_shape(q)?;
    let dims = psi.dims();
    let stencils: Vec<Filter2D> = quad
        .directions()
        .iter()
        .map(|d| upwind_filter(uf, d.mu, d.nu))
        .collect();
    let mut out = AngularFluxField::zeros(*psi.grid(), psi.n_dirs(), psi.n_groups());
    let nd = psi.n_dirs();
    let pl = dims.len();
    out.data_mut()
        .par_chunks_mut(pl)
        .enumerate()
        .for_each_init(Vec::new, |scratch, (c, dst)| {
            let (n, g) = (c % nd, c / nd);
            upwind_plane_residual(
                dims,
                psi.plane(n, g),
                &stencils[n],
                &mat.sigma_t[g],
                q.plane(n, g),
                dst,
                scratch,
            );
        });
    Ok(out)
}

/// Per-thread scratch planes for the Petrov-Galerkin kernels.
#[derive(Debug, Default, Clone)]
pub struct PgWorkspace {
    pub psi_x: Vec<f64>,
    pub psi_y: Vec<f64>,
    pub k_x: Vec<f64>,
    pub k_y: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    conv: Vec<f64>,
}

impl PgWorkspace {
    fn resize(&mut self, len: usize) {
        for v in [
            &mut self.psi_x,
            &mut self.psi_y,
            &mut self.k_x,
            &mut self.k_y,
            &mut self.a,
            &mut self.b,
        ] {
            v.clear();
            v.resize(len, 0.0);
        }
    }
}

/// Adds `f^{k-Diff}(ψ; k, w) = ½[w⋆(k ψ) + k (w⋆ψ) - ψ (w⋆k)]` to the interior
/// of `out`. `k` and `psi` must have valid halos. `prod` and `tmp` are scratch.
#[allow(clippy::too_many_arguments)]
pub fn add_k_diffusion(
    dims: PlaneDims,
    psi: &[f64],
    k: &[f64],
    w: &Filter2D,
    out: &mut [f64],
    prod: &mut Vec<f64>,
    tmp: &mut Vec<f64>,
    scratch: &mut Vec<f64>,
) {
    prod.clear();
    prod.extend(k.iter().zip(psi).map(|(a, b)| a * b));
    tmp.resize(dims.len(), 0.0);
    conv_plane(dims, prod, w, 0.5, tmp, scratch);
    for_interior(dims, |o| out[o] += tmp[o]);
    conv_plane(dims, psi, w, 0.5, tmp, scratch);
    for_interior(dims, |o| out[o] += k[o] * tmp[o]);
    conv_plane(dims, k, w, 0.5, tmp, scratch);
    for_interior(dims, |o| out[o] -= psi[o] * tmp[o]);
}

#[inline]
fn for_interior(dims: PlaneDims, mut f: impl FnMut(usize)) {
    for j in 0..dims.ny {
        let o = dims.idx(0, j as isize);
        for k in o..o + dims.nx {
            f(k);
        }
    }
}

/// Filters and parameters of the Petrov-Galerkin discretisation on one grid.
#[derive(Debug, Clone)]
pub struct PgOperator {
    pub fs: FilterSet,
    pub cfg: PGConfig,
    mixed_mass: Filter2D,
    alt: Option<FilterSet>,
}

impl PgOperator {
    pub fn new(fs: FilterSet, cfg: PGConfig) -> Result<Self> {
        cfg.validate()?;
        let alt = match cfg.diffusion {
            DiffusionMode::Isotropic(ResidualMode::LowOrder) => {
                let low = fs
                    .order
                    .lower()
                    .ok_or_else(|| invalid("low-order residual needs an order above linear"))?;
                Some(build_convfem_filters(low, fs.dx, fs.dy)?)
            }
            DiffusionMode::Isotropic(ResidualMode::HighOrder) => {
                let high = fs
                    .order
                    .higher()
                    .ok_or_else(|| invalid(format!("no filter order above {}", fs.order)))?;
                Some(build_convfem_filters(high, fs.dx, fs.dy)?)
            }
            _ => None,
        };
        Ok(Self {
            mixed_mass: mixed_mass_filter(&fs),
            fs,
            cfg,
            alt,
        })
    }

    pub fn for_order(order: Order, dx: f64, dy: f64) -> Result<Self> {
        Self::new(
            build_convfem_filters(order, dx, dy)?,
            PGConfig::for_order(order),
        )
    }

    /// Smallest halo width the kernels can run with.
    pub fn required_halo(&self) -> usize {
        self.fs
            .half_width
            .max(self.alt.as_ref().map_or(0, |a| a.half_width))
    }

    fn check_halo(&self, dims: PlaneDims) -> Result<()> {
        if dims.halo < self.required_halo() {
            return Err(invalid(format!(
                "field halo {} is narrower than the stencil half-width {}",
                dims.halo,
                self.required_halo()
            )));
        }
        Ok(())
    }

    /// Fills `ws.psi_x`, `ws.psi_y` and the diffusivities `ws.k_x`, `ws.k_y`
    /// for one channel. Halos of all four are filled by constant extrapolation.
    pub fn diffusivities_plane(
        &self,
        dims: PlaneDims,
        psi: &[f64],
        mu: f64,
        nu: f64,
        ws: &mut PgWorkspace,
    ) {
        ws.resize(dims.len());
        let fs = &self.fs;
        let cfg = &self.cfg;
        let eps = cfg.epsilon_k;
        conv_plane(dims, psi, &fs.w_x, 1.0, &mut ws.psi_x, &mut ws.conv);
        conv_plane(dims, psi, &fs.w_y, 1.0, &mut ws.psi_y, &mut ws.conv);
        fill_halo_copy(dims, &mut ws.psi_x);
        fill_halo_copy(dims, &mut ws.psi_y);
        match cfg.diffusion {
            DiffusionMode::Anisotropic => {
                conv_plane(
                    dims,
                    &ws.psi_x,
                    &self.mixed_mass,
                    cfg.alpha_r * mu,
                    &mut ws.a,
                    &mut ws.conv,
                );
                conv_plane(
                    dims,
                    &ws.psi_y,
                    &self.mixed_mass,
                    cfg.alpha_r * nu,
                    &mut ws.b,
                    &mut ws.conv,
                );
                let axis = |r: f64, grad: f64, c: f64, h: f64| {
                    let k_max = h * c.abs();
                    let k_abs = cfg.alpha_kabs * r.abs() * h / (eps + grad.abs());
                    let k_sq = cfg.alpha_ksquare * r * r * h / (eps + c.abs() * grad * grad);
                    k_max.min(k_abs).min(k_sq)
                };
                for_interior(dims, |o| {
                    ws.k_x[o] = axis(ws.a[o], ws.psi_x[o], mu, fs.dx);
                    ws.k_y[o] = axis(ws.b[o], ws.psi_y[o], nu, fs.dy);
                });
            }
            DiffusionMode::Isotropic(mode) => {
                self.isotropic_residual_plane(dims, psi, mu, nu, mode, ws);
                let h = 0.5 * (fs.dx + fs.dy);
                let k_max = ((fs.dx * mu).powi(2) + (fs.dy * nu).powi(2)).sqrt();
                for_interior(dims, |o| {
                    let (px, py, r) = (ws.psi_x[o], ws.psi_y[o], ws.a[o]);
                    let g2 = px * px + py * py;
                    let ratio = (mu * px + nu * py) / (eps + g2);
                    let k_abs = cfg.alpha_kabs * r.abs() * h / (eps + 0.5 * (px.abs() + py.abs()));
                    let k_sq = cfg.alpha_ksquare * r * r * h
                        / (eps + 0.5 * ((ratio * px).abs() + (ratio * py).abs()) * g2);
                    let k = k_max.min(k_abs).min(k_sq);
                    ws.k_x[o] = k;
                    ws.k_y[o] = k;
                });
            }
        }
        fill_halo_copy(dims, &mut ws.k_x);
        fill_halo_copy(dims, &mut ws.k_y);
    }

    /// Writes the isotropic residual estimate to the interior of `ws.a`.
    /// Expects `ws.psi_x`, `ws.psi_y` filled.
    fn isotropic_residual_plane(
        &self,
        dims: PlaneDims,
        psi: &[f64],
        mu: f64,
        nu: f64,
        mode: ResidualMode,
        ws: &mut PgWorkspace,
    ) {
        ws.b.clear();
        ws.b.extend(
            ws.psi_x
                .iter()
                .zip(&ws.psi_y)
                .map(|(px, py)| mu * px + nu * py),
        );
        match mode {
            ResidualMode::MixedMass => {
                fill_halo_copy(dims, &mut ws.b);
                conv_plane(
                    dims,
                    &ws.b,
                    &self.mixed_mass,
                    self.cfg.beta_r,
                    &mut ws.a,
                    &mut ws.conv,
                );
            }
            ResidualMode::LowOrder | ResidualMode::HighOrder => {
                let alt = self
                    .alt
                    .as_ref()
                    .expect("alternative filters built with the operator");
                let stencil = alt.w_x.scaled(mu).add(&alt.w_y.scaled(nu));
                conv_plane(dims, psi, &stencil, 1.0, &mut ws.a, &mut ws.conv);
                let sign = if mode == ResidualMode::HighOrder {
                    1.0
                } else {
                    -1.0
                };
                let b = &ws.b;
                let a = &mut ws.a;
                for_interior(dims, |o| a[o] = sign * (a[o] - b[o]));
            }
        }
    }

    /// Petrov-Galerkin residual of one channel; `psi` must have its halo set.
    #[allow(clippy::too_many_arguments)]
    pub fn plane_residual(
        &self,
        dims: PlaneDims,
        psi: &[f64],
        mu: f64,
        nu: f64,
        sigma_t: &[f64],
        q: &[f64],
        out: &mut [f64],
        ws: &mut PgWorkspace,
    ) {
        self.diffusivities_plane(dims, psi, mu, nu, ws);
        let PgWorkspace {
            psi_x,
            psi_y,
            k_x,
            k_y,
            a,
            b,
            conv,
        } = ws;
        for_interior(dims, |o| out[o] = mu * psi_x[o] + nu * psi_y[o]);
        add_k_diffusion(dims, psi, k_x, &self.fs.w_diffxx, out, a, b, conv);
        add_k_diffusion(dims, psi, k_y, &self.fs.w_diffyy, out, a, b, conv);
        add_reaction(dims, out, psi, sigma_t, q);
    }

    pub fn residual(
        &self,
        psi: &AngularFluxField,
        mat: &MaterialField,
        q: &AngularFluxField,
        quad: &AngularQuadrature,
    ) -> Result<AngularFluxField> {
        check_field(psi, quad, mat)?;
        psi.check_shape(q)?;
        self.check_halo(psi.dims())?;
        let dims = psi.dims();
        let nd = psi.n_dirs();
        let dirs = quad.directions();
        let mut out = AngularFluxField::zeros(*psi.grid(), nd, psi.n_groups());
        out.data_mut()
            .par_chunks_mut(dims.len())
            .enumerate()
            .for_each_init(PgWorkspace::default, |ws, (c, dst)| {
                let (n, g) = (c % nd, c / nd);
                self.plane_residual(
                    dims,
                    psi.plane(n, g),
                    dirs[n].mu,
                    dirs[n].nu,
                    &mat.sigma_t[g],
                    q.plane(n, g),
                    dst,
                    ws,
                );
            });
        Ok(out)
    }

    /// Diffusivity fields `(k_x, k_y)` for the current iterate.
    pub fn diffusivities(
        &self,
        psi: &AngularFluxField,
        quad: &AngularQuadrature,
    ) -> Result<(AngularFluxField, AngularFluxField)> {
        if quad.len() != psi.n_dirs() {
            return Err(Error::DimensionMismatch(
                "quadrature does not match field".into(),
            ));
        }
        self.check_halo(psi.dims())?;
        let dims = psi.dims();
        let nd = psi.n_dirs();
        let dirs = quad.directions();
        let mut kx = AngularFluxField::zeros(*psi.grid(), nd, psi.n_groups());
        let mut ky = kx.clone();
        kx.data_mut()
            .par_chunks_mut(dims.len())
            .zip(ky.data_mut().par_chunks_mut(dims.len()))
            .enumerate()
            .for_each_init(PgWorkspace::default, |ws, (c, (ox, oy))| {
                let (n, g) = (c % nd, c / nd);
                self.diffusivities_plane(dims, psi.plane(n, g), dirs[n].mu, dirs[n].nu, ws);
                ox.copy_from_slice(&ws.k_x);
                oy.copy_from_slice(&ws.k_y);
            });
        Ok((kx, ky))
    }

    /// Residual estimate of the selected isotropic mode.
    pub fn residual_estimate(
        &self,
        psi: &AngularFluxField,
        quad: &AngularQuadrature,
        mode: ResidualMode,
    ) -> Result<AngularFluxField> {
        if quad.len() != psi.n_dirs() {
            return Err(Error::DimensionMismatch(
                "quadrature does not match field".into(),
            ));
        }
        self.check_halo(psi.dims())?;
        let needs_alt = mode != ResidualMode::MixedMass;
        if needs_alt && self.cfg.diffusion != DiffusionMode::Isotropic(mode) {
            let cfg = PGConfig {
                diffusion: DiffusionMode::Isotropic(mode),
                ..self.cfg
            };
            return PgOperator::new(self.fs.clone(), cfg)?.residual_estimate(psi, quad, mode);
        }
        let dims = psi.dims();
        let nd = psi.n_dirs();
        let dirs = quad.directions();
        let mut out = AngularFluxField::zeros(*psi.grid(), nd, psi.n_groups());
        out.data_mut()
            .par_chunks_mut(dims.len())
            .enumerate()
            .for_each_init(PgWorkspace::default, |ws, (c, dst)| {
                let (n, g) = (c % nd, c / nd);
                let (mu, nu) = (dirs[n].mu, dirs[n].nu);
                ws.resize(dims.len());
                conv_plane(
                    dims,
                    psi.plane(n, g),
                    &self.fs.w_x,
                    1.0,
                    &mut ws.psi_x,
                    &mut ws.conv,
                );
                conv_plane(
                    dims,
                    psi.plane(n, g),
                    &self.fs.w_y,
                    1.0,
                    &mut ws.psi_y,
                    &mut ws.conv,
                );
                self.isotropic_residual_plane(dims, psi.plane(n, g), mu, nu, mode, ws);
                for_interior(dims, |o| dst[o] = ws.a[o]);
            });
        Ok(out)
    }
}

/// Petrov-Galerkin residual with the filters `fs` and parameters `cfg`.
pub fn pg_residual(
    psi: &AngularFluxField,
    mat: &MaterialField,
    q: &AngularFluxField,
    quad: &AngularQuadrature,
    fs: &FilterSet,
    cfg: &PGConfig,
) -> Result<AngularFluxField> {
    PgOperator::new(fs.clone(), *cfg)?.residual(psi, mat, q, quad)
}

/// Anisotropic diffusivities `(k_x, k_y)`.
pub fn pg_anisotropic_diffusivities(
    psi: &AngularFluxField,
    fs: &FilterSet,
    quad: &AngularQuadrature,
    cfg: &PGConfig,
) -> Result<(AngularFluxField, AngularFluxField)> {
    let cfg = PGConfig {
        diffusion: DiffusionMode::Anisotropic,
        ..*cfg
    };
    PgOperator::new(fs.clone(), cfg)?.diffusivities(psi, quad)
}

/// Residual estimate `R` by lower order, higher order or mixed mass.
pub fn residual_alternatives(
    psi: &AngularFluxField,
    fs: &FilterSet,
    quad: &AngularQuadrature,
    cfg: &PGConfig,
    mode: ResidualMode,
) -> Result<AngularFluxField> {
    let cfg = PGConfig {
        diffusion: DiffusionMode::Isotropic(mode),
        ..*cfg
    };
    PgOperator::new(fs.clone(), cfg)?.residual_estimate(psi, quad, mode)
}

/// Upwind diagonal `|μ|/Δx + |ν|/Δy + σ_T`, scaled by `beta`.
#[inline]
pub fn diagonal_value(mu: f64, nu: f64, dx: f64, dy: f64, sigma_t: f64, beta: f64) -> f64 {
    beta * (mu.abs() / dx + nu.abs() / dy + sigma_t)
}

/// Jacobi diagonal field; `β = cfg.beta_diag` for the PG scheme, 1 for upwind.
pub fn jacobi_diagonal(
    mat: &MaterialField,
    quad: &AngularQuadrature,
    grid: &GridSpec,
    scheme: Scheme,
    cfg: &PGConfig,
) -> Result<AngularFluxField> {
    mat.check_grid(grid, mat.n_groups)?;
    let beta = match scheme {
        Scheme::Upwind => 1.0,
        Scheme::PetrovGalerkin => cfg.beta_diag,
    };
    let dirs = quad.directions();
    let nx = grid.nx;
    Ok(AngularFluxField::from_fn(
        *grid,
        quad.len(),
        mat.n_groups,
        |i, j, n, g| {
            diagonal_value(
                dirs[n].mu,
                dirs[n].nu,
                grid.dx,
                grid.dy,
                mat.sigma_t[g][j * nx + i],
                beta,
            )
        },
    ))
}
