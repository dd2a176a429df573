//! Stencil filters: ConvFEM advection/stiffness/mass, upwind advection,
//! restriction and the mixed-mass residual operator.
//!
//! ConvFEM stencils come from a 1D finite element assembly on a uniform mesh
//! of Lagrange elements with equispaced nodes. A node of an order-`p` mesh
//! belongs to one of `p` classes (the element vertex and the `p - 1` interior
//! nodes), and each class has a different assembled row. Averaging those `p`
//! rows gives one stencil valid at every node. The 2D filters are tensor
//! products of the averaged 1D mass, gradient and stiffness stencils,
//! normalised by the lumped mass so that, on a uniform grid,
//!
//! - `w_x` applied to `f` approximates `∂f/∂x`,
//! - `w_diffxx` applied to `f` approximates `-∂²f/∂x²`,
//! - `w_m` sums to one (the consistent mass divided by `Δx Δy`).
//!
//! Filters are indexed by offsets `(u, v)` in `[-l, l]²`, with `u` along `x`
//! and `v` along `y`. When written out as rows, the first row is `v = +l`.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::gauss::gauss_legendre;

/// ConvFEM element order.
///
/// `Quintic` is the 9×9 filter family: five nodes per element edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Order {
    Linear,
    Quadratic,
    Cubic,
    Quintic,
}

impl Order {
    pub const ALL: [Order; 4] = [
        Order::Linear,
        Order::Quadratic,
        Order::Cubic,
        Order::Quintic,
    ];

    /// Nominal polynomial order `p` used to scale the diffusion coefficients.
    pub fn p(self) -> u32 {
        match self {
            Order::Linear => 1,
            Order::Quadratic => 2,
            Order::Cubic => 3,
            Order::Quintic => 5,
        }
    }

    pub fn from_p(p: u32) -> Result<Self> {
        match p {
            1 => Ok(Order::Linear),
            2 => Ok(Order::Quadratic),
            3 => Ok(Order::Cubic),
            5 => Ok(Order::Quintic),
            _ => Err(invalid(format!(
                "unsupported ConvFEM order p = {p}; expected 1, 2, 3 or 5"
            ))),
        }
    }

    /// Filter half-width `l`; the filter is `(2l+1) × (2l+1)`.
    pub fn half_width(self) -> usize {
        self.element_intervals()
    }

    /// Number of node intervals per element (element nodes minus one).
    fn element_intervals(self) -> usize {
        match self {
            Order::Linear => 1,
            Order::Quadratic => 2,
            Order::Cubic => 3,
            Order::Quintic => 4,
        }
    }

    pub fn lower(self) -> Option<Order> {
        match self {
            Order::Linear => None,
            Order::Quadratic => Some(Order::Linear),
            Order::Cubic => Some(Order::Quadratic),
            Order::Quintic => Some(Order::Cubic),
        }
    }

    pub fn higher(self) -> Option<Order> {
        match self {
            Order::Linear => Some(Order::Quadratic),
            Order::Quadratic => Some(Order::Cubic),
            Order::Cubic => Some(Order::Quintic),
            Order::Quintic => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Order::Linear => "linear",
            Order::Quadratic => "quadratic",
            Order::Cubic => "cubic",
            Order::Quintic => "quintic",
        }
    }
}

impl fmt::Display for Order {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Order {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" | "1" => Ok(Order::Linear),
            "quadratic" | "2" => Ok(Order::Quadratic),
            "cubic" | "3" => Ok(Order::Cubic),
            "quintic" | "5" => Ok(Order::Quintic),
            other => Err(invalid(format!("unknown order '{other}'"))),
        }
    }
}

/// Rank-one-plus-identity factorisation `w = fx ⊗ fy + shift·δ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Factored {
    pub fx: Vec<f64>,
    pub fy: Vec<f64>,
    pub shift: f64,
}

/// A square `(2l+1)²` stencil.
#[derive(Debug, Clone, PartialEq)]
pub struct Filter2D {
    half_width: usize,
    weights: Vec<f64>,
    factored: Option<Factored>,
}

impl Filter2D {
    /// Builds a filter from weights indexed `[(v + l) * (2l + 1) + (u + l)]`.
    pub fn new(half_width: usize, weights: Vec<f64>) -> Result<Self> {
        let w = 2 * half_width + 1;
        if weights.len() != w * w {
            return Err(Error::DimensionMismatch(format!(
                "filter with half-width {half_width} needs {} weights, got {}",
                w * w,
                weights.len()
            )));
        }
        Ok(Self {
            half_width,
            weights,
            factored: None,
        })
    }

    /// Builds `fx ⊗ fy + shift·δ` and remembers the factorisation so the stencil
    /// engine can apply it as two 1D passes.
    pub fn from_factors(fx: Vec<f64>, fy: Vec<f64>, shift: f64) -> Self {
        assert_eq!(fx.len(), fy.len());
        assert!(fx.len() % 2 == 1);
        let l = fx.len() / 2;
        let w = fx.len();
        let mut weights = vec![0.0; w * w];
        for (iv, y) in fy.iter().enumerate() {
            for (iu, x) in fx.iter().enumerate() {
                weights[iv * w + iu] = x * y;
            }
        }
        weights[l * w + l] += shift;
        Self {
            half_width: l,
            weights,
            factored: Some(Factored { fx, fy, shift }),
        }
    }

    /// Builds a filter from display rows, first row `v = +l`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let w = rows.len();
        if w.is_multiple_of(2) || rows.iter().any(|r| r.len() != w) {
            return Err(Error::DimensionMismatch(
                "filter rows must form an odd square".into(),
            ));
        }
        let mut weights = Vec::with_capacity(w * w);
        for r in rows.iter().rev() {
            weights.extend_from_slice(r);
        }
        Self::new(w / 2, weights)
    }

    pub fn identity() -> Self {
        Self::from_factors(vec![1.0], vec![1.0], 0.0)
    }

    pub fn half_width(&self) -> usize {
        self.half_width
    }

    pub fn width(&self) -> usize {
        2 * self.half_width + 1
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn factored(&self) -> Option<&Factored> {
        self.factored.as_ref()
    }

    /// Weight at offset `(u, v)`; zero outside the stencil.
    pub fn get(&self, u: isize, v: isize) -> f64 {
        let l = self.half_width as isize;
        if u.abs() > l || v.abs() > l {
            return 0.0;
        }
        self.weights[((v + l) as usize) * self.width() + (u + l) as usize]
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Rows for display, first row `v = +l`.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        let w = self.width();
        (0..w)
            .rev()
            .map(|iv| self.weights[iv * w..(iv + 1) * w].to_vec())
            .collect()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            half_width: self.half_width,
            weights: self.weights.iter().map(|w| w * s).collect(),
            factored: self.factored.as_ref().map(|f| Factored {
                fx: f.fx.iter().map(|x| x * s).collect(),
                fy: f.fy.clone(),
                shift: f.shift * s,
            }),
        }
    }

    /// Entrywise sum, padding the smaller filter with zeros.
    pub fn add(&self, other: &Filter2D) -> Self {
        let l = self.half_width.max(other.half_width);
        let w = 2 * l + 1;
        let li = l as isize;
        let mut weights = vec![0.0; w * w];
        for v in -li..=li {
            for u in -li..=li {
                weights[((v + li) as usize) * w + (u + li) as usize] =
                    self.get(u, v) + other.get(u, v);
            }
        }
        Self {
            half_width: l,
            weights,
            factored: None,
        }
    }

    /// Non-zero taps as `(u, v, w)`.
    pub fn taps(&self) -> Vec<(isize, isize, f64)> {
        let l = self.half_width as isize;
        let mut out = Vec::new();
        for v in -l..=l {
            for u in -l..=l {
                let w = self.get(u, v);
                if w != 0.0 {
                    out.push((u, v, w));
                }
            }
        }
        out
    }
}

/// Averaged 1D ConvFEM stencils for unit node spacing, normalised so the mass
/// stencil sums to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Stencils1D {
    pub mass: Vec<f64>,
    pub gradient: Vec<f64>,
    pub stiffness: Vec<f64>,
}

fn lagrange(nodes: &[f64], i: usize, x: f64) -> (f64, f64) {
    // value and derivative of the i-th Lagrange polynomial
    let mut val = 1.0;
    for (j, xj) in nodes.iter().enumerate() {
        if j != i {
            val *= (x - xj) / (nodes[i] - xj);
        }
    }
    let mut der = 0.0;
    for (k, xk) in nodes.iter().enumerate() {
        if k == i {
            continue;
        }
        let mut term = 1.0 / (nodes[i] - xk);
        for (j, xj) in nodes.iter().enumerate() {
            if j != i && j != k {
                term *= (x - xj) / (nodes[i] - xj);
            }
        }
        der += term;
    }
    (val, der)
}

/// Element mass, gradient (`∫ N_i N_j'`) and stiffness matrices for an
/// element with `d + 1` equispaced nodes at `0, 1, .., d`.
fn element_matrices(d: usize) -> [Vec<Vec<f64>>; 3] {
    let nodes: Vec<f64> = (0..=d).map(|i| i as f64).collect();
    let (gx, gw) = gauss_legendre(d + 2);
    let half = 0.5 * d as f64;
    let mut m = vec![vec![0.0; d + 1]; d + 1];
    let mut g = vec![vec![0.0; d + 1]; d + 1];
    let mut k = vec![vec![0.0; d + 1]; d + 1];
    for (xq, wq) in gx.iter().zip(&gw) {
        let x = half * (xq + 1.0);
        let w = wq * half;
        let basis: Vec<(f64, f64)> = (0..=d).map(|i| lagrange(&nodes, i, x)).collect();
        for i in 0..=d {
            for j in 0..=d {
                m[i][j] += w * basis[i].0 * basis[j].0;
                g[i][j] += w * basis[i].0 * basis[j].1;
                k[i][j] += w * basis[i].1 * basis[j].1;
            }
        }
    }
    [m, g, k]
}

/// Averages the assembled rows of the `d` node classes of a uniform mesh of
/// `d`-interval elements. Node class `a = 0` is the element vertex, shared by
/// the elements starting at `0` and `-d`; classes `1..d` are interior.
fn average_rows(d: usize, e: &[Vec<f64>]) -> Vec<f64> {
    let mut st = vec![0.0; 2 * d + 1];
    for a in 0..d {
        let starts: &[isize] = if a == 0 { &[0, -(d as isize)] } else { &[0] };
        for &start in starts {
            let local = (a as isize - start) as usize;
            for (j, ej) in e[local].iter().enumerate() {
                let offset = start + j as isize - a as isize;
                st[(offset + d as isize) as usize] += ej;
            }
        }
    }
    st.iter().map(|v| v / d as f64).collect()
}

/// Averaged 1D stencils of the given order at unit spacing.
pub fn convfem_stencils_1d(order: Order) -> Stencils1D {
    let d = order.element_intervals();
    let [m, g, k] = element_matrices(d);
    let mass = average_rows(d, &m);
    let lumped: f64 = mass.iter().sum();
    let norm = |v: Vec<f64>| v.into_iter().map(|x| x / lumped).collect::<Vec<_>>();
    Stencils1D {
        mass: norm(mass),
        gradient: norm(average_rows(d, &g)),
        stiffness: norm(average_rows(d, &k)),
    }
}

/// 2×2 restriction filter of ones.
pub const W_RESTRICT: [[f64; 2]; 2] = [[1.0, 1.0], [1.0, 1.0]];

/// The ConvFEM filters of one order on a uniform `dx × dy` grid.
#[derive(Debug, Clone)]
pub struct FilterSet {
    pub order: Order,
    pub dx: f64,
    pub dy: f64,
    pub half_width: usize,
    pub w_x: Filter2D,
    pub w_y: Filter2D,
    pub w_diffxx: Filter2D,
    pub w_diffyy: Filter2D,
    /// Consistent mass divided by the lumped mass (sums to one).
    pub w_m: Filter2D,
    /// Lumped mass `Δx Δy`.
    pub w_ml: f64,
    pub w_r: [[f64; 2]; 2],
    pub stencils: Stencils1D,
}

pub fn build_convfem_filters(order: Order, dx: f64, dy: f64) -> Result<FilterSet> {
    check_spacing(dx, dy)?;
    let s = convfem_stencils_1d(order);
    let scale = |v: &[f64], f: f64| v.iter().map(|x| x * f).collect::<Vec<_>>();
    let m = s.mass.clone();
    Ok(FilterSet {
        order,
        dx,
        dy,
        half_width: order.half_width(),
        w_x: Filter2D::from_factors(scale(&s.gradient, 1.0 / dx), m.clone(), 0.0),
        w_y: Filter2D::from_factors(m.clone(), scale(&s.gradient, 1.0 / dy), 0.0),
        w_diffxx: Filter2D::from_factors(scale(&s.stiffness, 1.0 / (dx * dx)), m.clone(), 0.0),
        w_diffyy: Filter2D::from_factors(m.clone(), scale(&s.stiffness, 1.0 / (dy * dy)), 0.0),
        w_m: Filter2D::from_factors(m.clone(), m, 0.0),
        w_ml: dx * dy,
        w_r: W_RESTRICT,
        stencils: s,
    })
}

/// The dimensionless operator `m_L⁻¹ m - I`.
pub fn mixed_mass_filter(fs: &FilterSet) -> Filter2D {
    let m = &fs.stencils.mass;
    Filter2D::from_factors(m.clone(), m.clone(), -1.0)
}

fn check_spacing(dx: f64, dy: f64) -> Result<()> {
    if !(dx > 0.0 && dy > 0.0 && dx.is_finite() && dy.is_finite()) {
        return Err(invalid(format!(
            "grid spacing must be positive, got dx={dx}, dy={dy}"
        )));
    }
    Ok(())
}

/// First-order upwind advection stencils, one pair per sign combination.
#[derive(Debug, Clone)]
pub struct UpwindFilterSet {
    pub dx: f64,
    pub dy: f64,
    // [mu > 0, mu < 0]
    w_x: [Filter2D; 2],
    // [nu > 0, nu < 0]
    w_y: [Filter2D; 2],
}

impl UpwindFilterSet {
    pub fn w_x(&self, mu: f64) -> &Filter2D {
        &self.w_x[usize::from(mu < 0.0)]
    }

    pub fn w_y(&self, nu: f64) -> &Filter2D {
        &self.w_y[usize::from(nu < 0.0)]
    }
}

pub fn build_upwind_filters(dx: f64, dy: f64) -> Result<UpwindFilterSet> {
    check_spacing(dx, dy)?;
    let x = |left: f64, centre: f64, right: f64| {
        Filter2D::from_factors(vec![left, centre, right], vec![0.0, 1.0, 0.0], 0.0)
    };
    let y = |down: f64, centre: f64, up: f64| {
        Filter2D::from_factors(vec![0.0, 1.0, 0.0], vec![down, centre, up], 0.0)
    };
    Ok(UpwindFilterSet {
        dx,
        dy,
        w_x: [x(-1.0 / dx, 1.0 / dx, 0.0), x(0.0, -1.0 / dx, 1.0 / dx)],
        w_y: [y(-1.0 / dy, 1.0 / dy, 0.0), y(0.0, -1.0 / dy, 1.0 / dy)],
    })
}

/// Writes every filter of `fs` as CSV blocks: a header line
/// `order,name,l,dx,dy`, one metadata line, then the rows (first row `v = +l`),
/// separated by blank lines.
pub fn write_filters_csv<W: Write>(fs: &FilterSet, mut out: W) -> Result<()> {
    let mixed = mixed_mass_filter(fs);
    let blocks: Vec<(&str, Vec<Vec<f64>>, usize)> = vec![
        ("w_x", fs.w_x.rows(), fs.half_width),
        ("w_y", fs.w_y.rows(), fs.half_width),
        ("w_diffxx", fs.w_diffxx.rows(), fs.half_width),
        ("w_diffyy", fs.w_diffyy.rows(), fs.half_width),
        ("w_m", fs.w_m.rows(), fs.half_width),
        ("w_mixed", mixed.rows(), fs.half_width),
        ("w_ml", vec![vec![fs.w_ml]], 0),
        ("w_r", fs.w_r.iter().map(|r| r.to_vec()).collect(), 0),
    ];
    for (i, (name, rows, l)) in blocks.iter().enumerate() {
        if i > 0 {
            writeln!(out)?;
        }
        writeln!(out, "order,name,l,dx,dy")?;
        writeln!(out, "{},{},{},{},{}", fs.order, name, l, fs.dx, fs.dy)?;
        for r in rows {
            let cells: Vec<String> = r.iter().map(|v| format!("{v:.17e}")).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
    }
    Ok(())
}

/// One block read back from [`write_filters_csv`] output.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBlock {
    pub order: String,
    pub name: String,
    pub half_width: usize,
    pub dx: f64,
    pub dy: f64,
    pub rows: Vec<Vec<f64>>,
}

pub fn read_filters_csv<R: BufRead>(input: R) -> Result<Vec<FilterBlock>> {
    let mut blocks = Vec::new();
    let mut current: Option<FilterBlock> = None;
    let mut expect_meta = false;
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if t == "order,name,l,dx,dy" {
            if let Some(b) = current.take() {
                blocks.push(b);
            }
            expect_meta = true;
            continue;
        }
        let fields: Vec<&str> = t.split(',').map(str::trim).collect();
        if expect_meta {
            if fields.len() != 5 {
                return Err(Error::Parse {
                    line: lineno,
                    message: "expected 5 metadata fields".into(),
                });
            }
            let num = |s: &str| {
                s.parse::<f64>().map_err(|e| Error::Parse {
                    line: lineno,
                    message: e.to_string(),
                })
            };
            current = Some(FilterBlock {
                order: fields[0].to_string(),
                name: fields[1].to_string(),
                half_width: fields[2].parse().map_err(|e: std::num::ParseIntError| {
                    Error::Parse {
                        line: lineno,
                        message: e.to_string(),
                    }
                })?,
                dx: num(fields[3])?,
                dy: num(fields[4])?,
                rows: Vec::new(),
            });
            expect_meta = false;
            continue;
        }
        let block = current.as_mut().ok_or_else(|| Error::Parse {
            line: lineno,
            message: "row before header".into(),
        })?;
        let row = fields
            .iter()
            .map(|s| {
                s.parse::<f64>().map_err(|e| Error::Parse {
                    line: lineno,
                    message: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        block.rows.push(row);
    }
    if let Some(b) = current {
        blocks.push(b);
    }
    Ok(blocks)
}
