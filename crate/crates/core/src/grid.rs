//! Padded space × direction × group storage and the stencil engine.
//!
//! Each `(direction, group)` channel is a contiguous plane of
//! `(nx + 2h) × (ny + 2h)` values, `x` fastest, where `h` is the halo width.
//! Interior node `(i, j)` sits at `x = (i + ½) Δx`, `y = (j + ½) Δy`.
//! Channels are ordered group-major: `c = g * n_dirs + n`.

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::filters::Filter2D;
use crate::quadrature::AngularQuadrature;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    pub halo: usize,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, dx: f64, dy: f64, halo: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(invalid(format!(
                "grid needs at least one node per axis, got {nx}×{ny}"
            )));
        }
        if halo == 0 {
            return Err(invalid("halo width must be at least 1"));
        }
        if !(dx > 0.0 && dy > 0.0) {
            return Err(invalid(format!(
                "grid spacing must be positive, got dx={dx}, dy={dy}"
            )));
        }
        Ok(Self {
            nx,
            ny,
            dx,
            dy,
            halo,
        })
    }

    pub fn with_halo(self, halo: usize) -> Self {
        Self { halo, ..self }
    }

    pub fn dims(&self) -> PlaneDims {
        PlaneDims {
            nx: self.nx,
            ny: self.ny,
            halo: self.halo,
        }
    }

    pub fn cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn x(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dx
    }

    pub fn y(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.dy
    }

    pub fn cell_area(&self) -> f64 {
        self.dx * self.dy
    }
}

/// Shape of one padded channel plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlaneDims {
    pub nx: usize,
    pub ny: usize,
    pub halo: usize,
}

impl PlaneDims {
    pub fn stride(&self) -> usize {
        self.nx + 2 * self.halo
    }

    pub fn rows(&self) -> usize {
        self.ny + 2 * self.halo
    }

    pub fn len(&self) -> usize {
        self.stride() * self.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Index of node `(i, j)`; negative or `>= n` values address the halo.
    #[inline]
    pub fn idx(&self, i: isize, j: isize) -> usize {
        let h = self.halo as isize;
        ((j + h) as usize) * self.stride() + (i + h) as usize
    }
}

/// Applies `filter` to the interior of `src`, writing `scale * (w ⋆ src)` to
/// the interior of `dst`. `scratch` is resized as needed. Halo of `dst` is
/// left untouched.
pub fn conv_plane(
    dims: PlaneDims,
    src: &[f64],
    filter: &Filter2D,
    scale: f64,
    dst: &mut [f64],
    scratch: &mut Vec<f64>,
) {
    let l = filter.half_width() as isize;
    debug_assert!(filter.half_width() <= dims.halo);
    let (nx, ny) = (dims.nx, dims.ny as isize);
    for j in 0..ny {
        let o = dims.idx(0, j);
        dst[o..o + nx].fill(0.0);
    }
    match filter.factored() {
        Some(f) => {
            scratch.resize(dims.len(), 0.0);
            // x pass over every row the y pass will read
            for j in -l..ny + l {
                let o = dims.idx(0, j);
                scratch[o..o + nx].fill(0.0);
                for (k, &w) in f.fx.iter().enumerate() {
                    if w == 0.0 {
                        continue;
                    }
                    let s = dims.idx(k as isize - l, j);
                    axpy(w, &src[s..s + nx], &mut scratch[o..o + nx]);
                }
            }
            for j in 0..ny {
                let o = dims.idx(0, j);
                for (k, &w) in f.fy.iter().enumerate() {
                    if w == 0.0 {
                        continue;
                    }
                    let s = dims.idx(0, j + k as isize - l);
                    axpy(w * scale, &scratch[s..s + nx], &mut dst[o..o + nx]);
                }
                if f.shift != 0.0 {
                    axpy(f.shift * scale, &src[o..o + nx], &mut dst[o..o + nx]);
                }
            }
        }
        None => {
            for (u, v, w) in filter.taps() {
                for j in 0..ny {
                    let o = dims.idx(0, j);
                    let s = dims.idx(u, j + v);
                    axpy(w * scale, &src[s..s + nx], &mut dst[o..o + nx]);
                }
            }
        }
    }
}

#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Vacuum halo rule for one direction: halo layers on a side the direction
/// enters through are zero, layers on an outgoing side copy the nearest
/// interior value. The x sides are filled over interior rows first; the y sides
/// are then filled across the full padded width, so corners follow the y rule.
pub fn apply_vacuum_plane(dims: PlaneDims, plane: &mut [f64], mu: f64, nu: f64) {
    let h = dims.halo as isize;
    let (nx, ny) = (dims.nx as isize, dims.ny as isize);
    for j in 0..ny {
        let west = plane[dims.idx(0, j)];
        let east = plane[dims.idx(nx - 1, j)];
        for k in 1..=h {
            plane[dims.idx(-k, j)] = if mu > 0.0 { 0.0 } else { west };
            plane[dims.idx(nx - 1 + k, j)] = if mu < 0.0 { 0.0 } else { east };
        }
    }
    let stride = dims.stride();
    for k in 1..=h {
        let south = dims.idx(-h, -k);
        let north = dims.idx(-h, ny - 1 + k);
        if nu > 0.0 {
            plane[south..south + stride].fill(0.0);
        } else {
            plane.copy_within(dims.idx(-h, 0)..dims.idx(-h, 0) + stride, south);
        }
        if nu < 0.0 {
            plane[north..north + stride].fill(0.0);
        } else {
            plane.copy_within(dims.idx(-h, ny - 1)..dims.idx(-h, ny - 1) + stride, north);
        }
    }
}

/// Constant extrapolation into the halo on every side.
pub fn fill_halo_copy(dims: PlaneDims, plane: &mut [f64]) {
    apply_vacuum_plane(dims, plane, 0.0, 0.0);
}

/// Zeroes every halo value.
pub fn zero_halo(dims: PlaneDims, plane: &mut [f64]) {
    let h = dims.halo as isize;
    let (nx, ny) = (dims.nx as isize, dims.ny as isize);
    let stride = dims.stride();
    for j in -h..ny + h {
        if j < 0 || j >= ny {
            let o = dims.idx(-h, j);
            plane[o..o + stride].fill(0.0);
        } else {
            for k in 1..=h {
                plane[dims.idx(-k, j)] = 0.0;
                plane[dims.idx(nx - 1 + k, j)] = 0.0;
            }
        }
    }
}

/// Angular flux `ψ[i, j, n, g]` with halo.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularFluxField {
    grid: GridSpec,
    n_dirs: usize,
    n_groups: usize,
    data: Vec<f64>,
}

impl AngularFluxField {
    pub fn zeros(grid: GridSpec, n_dirs: usize, n_groups: usize) -> Self {
        let len = grid.dims().len() * n_dirs * n_groups;
        Self {
            grid,
            n_dirs,
            n_groups,
            data: vec![0.0; len],
        }
    }

    /// Field with interior values `f(i, j, n, g)` and a zero halo.
    pub fn from_fn(
        grid: GridSpec,
        n_dirs: usize,
        n_groups: usize,
        f: impl Fn(usize, usize, usize, usize) -> f64,
    ) -> Self {
        let mut out = Self::zeros(grid, n_dirs, n_groups);
        let dims = grid.dims();
        for g in 0..n_groups {
            for n in 0..n_dirs {
                let plane = out.plane_mut(n, g);
                for j in 0..grid.ny {
                    for i in 0..grid.nx {
                        plane[dims.idx(i as isize, j as isize)] = f(i, j, n, g);
                    }
                }
            }
        }
        out
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn dims(&self) -> PlaneDims {
        self.grid.dims()
    }

    pub fn n_dirs(&self) -> usize {
        self.n_dirs
    }

    pub fn n_groups(&self) -> usize {
        self.n_groups
    }

    pub fn n_channels(&self) -> usize {
        self.n_dirs * self.n_groups
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn plane(&self, n: usize, g: usize) -> &[f64] {
        let pl = self.dims().len();
        let c = g * self.n_dirs + n;
        &self.data[c * pl..(c + 1) * pl]
    }

    pub fn plane_mut(&mut self, n: usize, g: usize) -> &mut [f64] {
        let pl = self.dims().len();
        let c = g * self.n_dirs + n;
        &mut self.data[c * pl..(c + 1) * pl]
    }

    /// Value at node `(i, j)`, which may lie in the halo.
    pub fn at(&self, i: isize, j: isize, n: usize, g: usize) -> f64 {
        self.plane(n, g)[self.dims().idx(i, j)]
    }

    pub fn get(&self, i: usize, j: usize, n: usize, g: usize) -> f64 {
        self.at(i as isize, j as isize, n, g)
    }

    pub fn set(&mut self, i: usize, j: usize, n: usize, g: usize, value: f64) {
        let k = self.dims().idx(i as isize, j as isize);
        self.plane_mut(n, g)[k] = value;
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.grid.nx == other.grid.nx
            && self.grid.ny == other.grid.ny
            && self.grid.halo == other.grid.halo
            && self.n_dirs == other.n_dirs
            && self.n_groups == other.n_groups
    }

    pub fn check_shape(&self, other: &Self) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "fields differ: {}×{}×{}×{} (halo {}) vs {}×{}×{}×{} (halo {})",
                self.grid.nx,
                self.grid.ny,
                self.n_dirs,
                self.n_groups,
                self.grid.halo,
                other.grid.nx,
                other.grid.ny,
                other.n_dirs,
                other.n_groups,
                other.grid.halo
            )))
        }
    }

    /// Interior values in `(g, n, j, i)` order.
    pub fn interior(&self) -> Vec<f64> {
        let dims = self.dims();
        let mut out = Vec::with_capacity(self.grid.cells() * self.n_channels());
        for c in self.data.chunks(dims.len()) {
            for j in 0..self.grid.ny {
                let o = dims.idx(0, j as isize);
                out.extend_from_slice(&c[o..o + self.grid.nx]);
            }
        }
        out
    }

    /// Σ |ψ| over interior nodes.
    pub fn interior_l1(&self) -> f64 {
        let dims = self.dims();
        self.data
            .par_chunks(dims.len())
            .map(|c| {
                (0..self.grid.ny)
                    .map(|j| {
                        let o = dims.idx(0, j as isize);
                        c[o..o + self.grid.nx].iter().map(|v| v.abs()).sum::<f64>()
                    })
                    .sum::<f64>()
            })
            .sum()
    }

    pub fn interior_max_abs(&self) -> f64 {
        self.interior().iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn fill(&mut self, value: f64) {
        self.data.fill(value);
    }

    pub fn scale(&mut self, s: f64) {
        self.data.par_iter_mut().for_each(|v| *v *= s);
    }

    /// `self += a * other` over the whole padded storage.
    pub fn axpy(&mut self, a: f64, other: &Self) -> Result<()> {
        self.check_shape(other)?;
        self.data
            .par_iter_mut()
            .zip(other.data.par_iter())
            .for_each(|(y, x)| *y += a * x);
        Ok(())
    }

    /// Calls `f(n, g, plane)` for every channel in parallel.
    pub fn for_each_channel_mut<F>(&mut self, f: F)
    where
        F: Fn(usize, usize, &mut [f64]) + Sync + Send,
    {
        let pl = self.dims().len();
        let nd = self.n_dirs;
        self.data
            .par_chunks_mut(pl)
            .enumerate()
            .for_each(|(c, plane)| f(c % nd, c / nd, plane));
    }

    /// Copies this field onto a grid with a different halo width.
    pub fn with_halo(&self, halo: usize) -> Self {
        let grid = self.grid.with_halo(halo);
        let mut out = Self::zeros(grid, self.n_dirs, self.n_groups);
        let (src, dst) = (self.dims(), grid.dims());
        for c in 0..self.n_channels() {
            let sp = &self.data[c * src.len()..(c + 1) * src.len()];
            let dp = &mut out.data[c * dst.len()..(c + 1) * dst.len()];
            for j in 0..self.grid.ny as isize {
                let (so, dof) = (src.idx(0, j), dst.idx(0, j));
                dp[dof..dof + self.grid.nx].copy_from_slice(&sp[so..so + self.grid.nx]);
            }
        }
        out
    }
}

/// `out[i,j,n,g] = scale_n Σ_{u,v} w[u,v] ψ[i+u, j+v, n, g]` on the interior.
pub fn convolve(
    field: &AngularFluxField,
    filter: &Filter2D,
    direction_scale: &[f64],
) -> Result<AngularFluxField> {
    if filter.half_width() > field.grid.halo {
        return Err(invalid(format!(
            "filter half-width {} exceeds field halo {}",
            filter.half_width(),
            field.grid.halo
        )));
    }
    if direction_scale.len() != field.n_dirs {
        return Err(Error::DimensionMismatch(format!(
            "{} direction scales for {} directions",
            direction_scale.len(),
            field.n_dirs
        )));
    }
    let dims = field.dims();
    let pl = dims.len();
    let nd = field.n_dirs;
    let mut out = AngularFluxField::zeros(field.grid, field.n_dirs, field.n_groups);
    out.data
        .par_chunks_mut(pl)
        .zip(field.data.par_chunks(pl))
        .enumerate()
        .for_each_init(Vec::new, |scratch, (c, (dst, src))| {
            conv_plane(dims, src, filter, direction_scale[c % nd], dst, scratch);
        });
    Ok(out)
}

/// Fills the halo of every channel with the vacuum rule of its direction.
pub fn apply_boundary(field: &mut AngularFluxField, quad: &AngularQuadrature) -> Result<()> {
    if quad.len() != field.n_dirs {
        return Err(Error::DimensionMismatch(format!(
            "quadrature has {} directions, field has {}",
            quad.len(),
            field.n_dirs
        )));
    }
    let dims = field.dims();
    let dirs = quad.directions();
    field.for_each_channel_mut(|n, _, plane| {
        apply_vacuum_plane(dims, plane, dirs[n].mu, dirs[n].nu)
    });
    Ok(())
}

/// Per-group scalar flux `φ[g][j * nx + i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarFlux {
    pub nx: usize,
    pub ny: usize,
    pub groups: Vec<Vec<f64>>,
}

impl ScalarFlux {
    pub fn zeros(nx: usize, ny: usize, n_groups: usize) -> Self {
        Self {
            nx,
            ny,
            groups: vec![vec![0.0; nx * ny]; n_groups],
        }
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn get(&self, i: usize, j: usize, g: usize) -> f64 {
        self.groups[g][j * self.nx + i]
    }

    pub fn group(&self, g: usize) -> &[f64] {
        &self.groups[g]
    }
}

/// `φ[i,j,g] = Σ_n p_n ψ[i,j,n,g]`.
pub fn scalar_flux(field: &AngularFluxField, quad: &AngularQuadrature) -> Result<ScalarFlux> {
    if quad.len() != field.n_dirs {
        return Err(Error::DimensionMismatch(format!(
            "quadrature has {} directions, field has {}",
            quad.len(),
            field.n_dirs
        )));
    }
    let grid = field.grid;
    let dims = grid.dims();
    let groups = (0..field.n_groups)
        .into_par_iter()
        .map(|g| {
            let mut phi = vec![0.0; grid.cells()];
            for n in 0..field.n_dirs {
                let w = quad.weight(n);
                let plane = field.plane(n, g);
                for j in 0..grid.ny {
                    let o = dims.idx(0, j as isize);
                    axpy(
                        w,
                        &plane[o..o + grid.nx],
                        &mut phi[j * grid.nx..(j + 1) * grid.nx],
                    );
                }
            }
            phi
        })
        .collect();
    Ok(ScalarFlux {
        nx: grid.nx,
        ny: grid.ny,
        groups,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::{build_convfem_filters, Order};
    use crate::quadrature::build_quadrature;
    use rand::{Rng, SeedableRng};

    fn naive(field: &AngularFluxField, w: &Filter2D, scale: &[f64]) -> Vec<f64> {
        let g = field.grid();
        let l = w.half_width() as isize;
        let mut out = Vec::new();
        for gg in 0..field.n_groups() {
            for (n, sc) in scale.iter().enumerate() {
                for j in 0..g.ny as isize {
                    for i in 0..g.nx as isize {
                        let mut acc = 0.0;
                        for v in -l..=l {
                            for u in -l..=l {
                                acc += w.get(u, v) * field.at(i + u, j + v, n, gg);
                            }
                        }
                        out.push(sc * acc);
                    }
                }
            }
        }
        out
    }

    fn random_field(rng: &mut impl Rng, grid: GridSpec, nd: usize, ng: usize) -> AngularFluxField {
        let mut f = AngularFluxField::zeros(grid, nd, ng);
        for v in f.data_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        f
    }

    #[test]
    fn identity_filter_copies_interior() {
        let grid = GridSpec::new(5, 4, 1.0, 1.0, 1).unwrap();
        let f = AngularFluxField::from_fn(grid, 2, 1, |i, j, n, _| (i * 10 + j + 100 * n) as f64);
        let out = convolve(&f, &Filter2D::identity(), &[1.0, 1.0]).unwrap();
        assert_eq!(out.interior(), f.interior());
    }

    #[test]
    fn matches_naive_on_random_filters() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        for l in 1..=4usize {
            let grid = GridSpec::new(8, 8, 1.0, 1.0, 4).unwrap();
            let f = random_field(&mut rng, grid, 3, 2);
            let w = 2 * l + 1;
            let filt =
                Filter2D::new(l, (0..w * w).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            let scale = [0.3, -1.2, 2.0];
            let out = convolve(&f, &filt, &scale).unwrap();
            let expect = naive(&f, &filt, &scale);
            for (a, b) in out.interior().iter().zip(&expect) {
                assert!((a - b).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn separable_path_matches_naive() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        for order in Order::ALL {
            let fs = build_convfem_filters(order, 0.8, 0.8).unwrap();
            let grid = GridSpec::new(9, 7, 0.8, 0.8, order.half_width()).unwrap();
            let f = random_field(&mut rng, grid, 2, 1);
            for filt in [
                &fs.w_x,
                &fs.w_diffyy,
                &crate::filters::mixed_mass_filter(&fs),
            ] {
                let out = convolve(&f, filt, &[1.0, 0.5]).unwrap();
                let expect = naive(&f, filt, &[1.0, 0.5]);
                for (a, b) in out.interior().iter().zip(&expect) {
                    assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()));
                }
            }
        }
    }

    #[test]
    fn five_point_laplacian_block() {
        // 3×3 block, five-point diffusion stencil: output = 4c - (n + s + e + w)
        let grid = GridSpec::new(1, 1, 1.0, 1.0, 1).unwrap();
        let mut f = AngularFluxField::zeros(grid, 1, 1);
        let vals = [[1.0, 2.0, 3.0], [4.0, 5.0, 6.0], [7.0, 8.0, 9.0]];
        for (r, row) in vals.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                let k = grid.dims().idx(c as isize - 1, 1 - r as isize);
                f.plane_mut(0, 0)[k] = *v;
            }
        }
        let lap = Filter2D::from_rows(&[
            vec![0.0, -1.0, 0.0],
            vec![-1.0, 4.0, -1.0],
            vec![0.0, -1.0, 0.0],
        ])
        .unwrap();
        let out = convolve(&f, &lap, &[1.0]).unwrap();
        assert_eq!(out.get(0, 0, 0, 0), 4.0 * 5.0 - (2.0 + 4.0 + 6.0 + 8.0));
    }

    #[test]
    fn filter_wider_than_halo_rejected() {
        let grid = GridSpec::new(4, 4, 1.0, 1.0, 1).unwrap();
        let f = AngularFluxField::zeros(grid, 1, 1);
        let fs = build_convfem_filters(Order::Quadratic, 1.0, 1.0).unwrap();
        assert!(matches!(
            convolve(&f, &fs.w_x, &[1.0]),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn vacuum_halo_rule() {
        let q = build_quadrature(1).unwrap();
        let grid = GridSpec::new(4, 3, 1.0, 1.0, 2).unwrap();
        let mut f = AngularFluxField::from_fn(grid, 8, 1, |_, _, _, _| 3.0);
        apply_boundary(&mut f, &q).unwrap();
        for n in 0..8 {
            let d = q.direction(n);
            for j in 0..3isize {
                for k in 1..=2 {
                    let west = f.at(-k, j, n, 0);
                    let east = f.at(3 + k, j, n, 0);
                    assert_eq!(west, if d.mu > 0.0 { 0.0 } else { 3.0 });
                    assert_eq!(east, if d.mu < 0.0 { 0.0 } else { 3.0 });
                }
            }
            for i in -2..6isize {
                assert_eq!(
                    f.at(i, -1, n, 0),
                    if d.nu > 0.0 { 0.0 } else { f.at(i, 0, n, 0) }
                );
                assert_eq!(
                    f.at(i, 4, n, 0),
                    if d.nu < 0.0 { 0.0 } else { f.at(i, 2, n, 0) }
                );
            }
        }
    }

    #[test]
    fn east_halo_copies_last_column() {
        let q = build_quadrature(1).unwrap();
        let grid = GridSpec::new(4, 3, 1.0, 1.0, 1).unwrap();
        let mut f =
            AngularFluxField::from_fn(grid, 8, 1, |i, j, _, _| 1.0 + i as f64 + 10.0 * j as f64);
        apply_boundary(&mut f, &q).unwrap();
        let n = (0..8).find(|&n| q.direction(n).mu > 0.0).unwrap();
        for j in 0..3 {
            assert_eq!(f.at(-1, j, n, 0), 0.0);
            assert_eq!(f.at(4, j, n, 0), f.at(3, j, n, 0));
        }
    }

    #[test]
    fn zero_interior_gives_zero_halo() {
        let q = build_quadrature(2).unwrap();
        let grid = GridSpec::new(3, 3, 1.0, 1.0, 3).unwrap();
        let mut f = AngularFluxField::zeros(grid, q.len(), 2);
        f.fill(0.0);
        apply_boundary(&mut f, &q).unwrap();
        assert!(f.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn scalar_flux_of_unit_field() {
        let q = build_quadrature(2).unwrap();
        let grid = GridSpec::new(3, 2, 1.0, 1.0, 1).unwrap();
        let f = AngularFluxField::from_fn(grid, q.len(), 2, |_, _, _, _| 1.0);
        let phi = scalar_flux(&f, &q).unwrap();
        for g in 0..2 {
            for v in phi.group(g) {
                assert!((v - 4.0 * std::f64::consts::PI).abs() < 1e-12);
            }
        }
        let single = AngularFluxField::from_fn(
            grid,
            q.len(),
            1,
            |_, _, n, _| if n == 5 { 2.0 } else { 0.0 },
        );
        let phi = scalar_flux(&single, &q).unwrap();
        assert_eq!(phi.get(1, 1, 0), q.weight(5) * 2.0);
        let wrong = build_quadrature(1).unwrap();
        assert!(scalar_flux(&f, &wrong).is_err());
    }

    #[test]
    fn scalar_flux_matches_naive_sum() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        let q = build_quadrature(2).unwrap();
        let grid = GridSpec::new(5, 4, 1.0, 1.0, 1).unwrap();
        let f = random_field(&mut rng, grid, q.len(), 2);
        let phi = scalar_flux(&f, &q).unwrap();
        for g in 0..2 {
            for j in 0..4 {
                for i in 0..5 {
                    let s: f64 = (0..q.len()).map(|n| q.weight(n) * f.get(i, j, n, g)).sum();
                    assert!((phi.get(i, j, g) - s).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn with_halo_preserves_interior() {
        let grid = GridSpec::new(3, 2, 1.0, 1.0, 1).unwrap();
        let f = AngularFluxField::from_fn(grid, 2, 1, |i, j, n, _| (i + 3 * j + 7 * n) as f64);
        let g = f.with_halo(3);
        assert_eq!(g.interior(), f.interior());
        assert_eq!(g.grid().halo, 3);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::{Rng, SeedableRng};

        proptest! {
            #[test]
            fn convolve_is_linear(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
                let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
                let grid = GridSpec::new(6, 5, 1.0, 1.0, 2).unwrap();
                let f = random_field(&mut rng, grid, 2, 1);
                let g = random_field(&mut rng, grid, 2, 1);
                let filt = Filter2D::new(2, (0..25).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
                let mut comb = f.clone();
                comb.scale(a);
                comb.axpy(b, &g).unwrap();
                let lhs = convolve(&comb, &filt, &[1.0, 2.0]).unwrap().interior();
                let cf = convolve(&f, &filt, &[1.0, 2.0]).unwrap().interior();
                let cg = convolve(&g, &filt, &[1.0, 2.0]).unwrap().interior();
                for k in 0..lhs.len() {
                    let rhs = a * cf[k] + b * cg[k];
                    prop_assert!((lhs[k] - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
                }
            }

            #[test]
            fn zero_sum_filter_kills_constants(seed in 0u64..1000, c in -10.0f64..10.0) {
                let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
                let mut w: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let s: f64 = w.iter().sum();
                w[4] -= s;
                let filt = Filter2D::new(1, w).unwrap();
                let grid = GridSpec::new(4, 4, 1.0, 1.0, 1).unwrap();
                let mut f = AngularFluxField::zeros(grid, 1, 1);
                f.fill(c);
                let out = convolve(&f, &filt, &[1.0]).unwrap();
                prop_assert!(out.interior().iter().all(|v| v.abs() < 1e-12 * (1.0 + c.abs())));
            }
        }
    }
}
