//! Octahedral discrete-ordinates quadrature.
//!
//! Each octant of the unit sphere is the radial projection of one face of the
//! inscribed octahedron. A face with vertices `A = (sx, 0, 0)`, `B = (0, sy, 0)`
//! and `C = (0, 0, sz)` is parametrised from the unit square by
//!
//! ```text
//! P(s, t) = (1 - t) [(1 - s) A + s B] + t C,      (s, t) in [0, 1]^2
//! ```
//!
//! so the edge `t = 1` collapses onto the vertex `C`. An `n_a × n_a` grid on the
//! square gives `n_a²` patches per face; the top row of patches are spherical
//! triangles, all others spherical quadrilaterals. Because straight lines on
//! the face project to great circles, every patch is a geodesic polygon.
//!
//! Patch areas and mean directions are integrated over the square with the
//! surface element of the projected sphere, `dS = (1 - t) / |P|^3 ds dt`.

use std::f64::consts::PI;
use std::io::Write;

use crate::error::{invalid, Error, Result};
use crate::gauss::gauss_legendre;

/// Number of octahedron faces.
pub const N_FACES: usize = 8;

const PATCH_TOL: f64 = 1e-13;
const PATCH_RULE: usize = 12;
const MAX_DEPTH: usize = 10;

/// A discrete direction: the patch-mean of the unit vector over its patch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction {
    pub mu: f64,
    pub nu: f64,
    pub xi: f64,
}

/// Signs of `(mu, nu, xi)` on octahedron face `face`.
pub fn face_signs(face: usize) -> [f64; 3] {
    let s = |bit: usize| if face & bit == 0 { 1.0 } else { -1.0 };
    [s(1), s(2), s(4)]
}

/// Discrete ordinates built on the octahedron, stored face-major and then
/// row-major within a face: `n = face * n_a² + row * n_a + col`.
#[derive(Debug, Clone)]
pub struct AngularQuadrature {
    n_a: usize,
    directions: Vec<Direction>,
    weights: Vec<f64>,
    face_index: Vec<usize>,
}

impl AngularQuadrature {
    pub fn n_a(&self) -> usize {
        self.n_a
    }

    pub fn n_faces(&self) -> usize {
        N_FACES
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn directions(&self) -> &[Direction] {
        &self.directions
    }

    pub fn direction(&self, n: usize) -> Direction {
        self.directions[n]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, n: usize) -> f64 {
        self.weights[n]
    }

    pub fn face_of(&self, n: usize) -> usize {
        self.face_index[n]
    }

    pub fn mu(&self) -> Vec<f64> {
        self.directions.iter().map(|d| d.mu).collect()
    }

    pub fn nu(&self) -> Vec<f64> {
        self.directions.iter().map(|d| d.nu).collect()
    }

    /// Index of the direction on face `face` at patch `(row, col)`.
    pub fn index(&self, face: usize, row: usize, col: usize) -> usize {
        (face * self.n_a + row) * self.n_a + col
    }

    /// Index of the coarse direction containing fine direction `n` after one
    /// call to [`coarsen_quadrature`].
    pub fn parent_index(&self, n: usize) -> usize {
        let na2 = self.n_a * self.n_a;
        let face = n / na2;
        let row = (n % na2) / self.n_a;
        let col = n % self.n_a;
        let nc = (self.n_a / 2).max(1);
        (face * nc + row / 2) * nc + col / 2
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Writes `face,index,mu,nu,xi,weight` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "face,index,mu,nu,xi,weight")?;
        for (n, d) in self.directions.iter().enumerate() {
            writeln!(
                out,
                "{},{},{:.17e},{:.17e},{:.17e},{:.17e}",
                self.face_index[n], n, d.mu, d.nu, d.xi, self.weights[n]
            )?;
        }
        Ok(())
    }
}

/// Point on the first-octant face for square coordinates `(s, t)`.
fn face_point(s: f64, t: f64) -> [f64; 3] {
    [(1.0 - t) * (1.0 - s), (1.0 - t) * s, t]
}

/// Integrates `[1, x, y, z]` over the projected patch `[s0,s1]×[t0,t1]` on the
/// first-octant face with a fixed tensor Gauss-Legendre rule.
fn patch_rule(nodes: &[f64], weights: &[f64], s0: f64, s1: f64, t0: f64, t1: f64) -> [f64; 4] {
    let hs = 0.5 * (s1 - s0);
    let ht = 0.5 * (t1 - t0);
    let mut acc = [0.0; 4];
    for (xt, wt) in nodes.iter().zip(weights) {
        let t = t0 + ht * (xt + 1.0);
        for (xs, ws) in nodes.iter().zip(weights) {
            let s = s0 + hs * (xs + 1.0);
            let p = face_point(s, t);
            let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            let jac = (1.0 - t) / (r * r * r);
            let w = ws * wt * hs * ht * jac;
            acc[0] += w;
            acc[1] += w * p[0] / r;
            acc[2] += w * p[1] / r;
            acc[3] += w * p[2] / r;
        }
    }
    acc
}

fn integrate_patch(
    nodes: &[f64],
    weights: &[f64],
    (s0, s1): (f64, f64),
    (t0, t1): (f64, f64),
    whole: [f64; 4],
    depth: usize,
) -> [f64; 4] {
    let sm = 0.5 * (s0 + s1);
    let tm = 0.5 * (t0 + t1);
    let quads = [
        ((s0, sm), (t0, tm)),
        ((sm, s1), (t0, tm)),
        ((s0, sm), (tm, t1)),
        ((sm, s1), (tm, t1)),
    ];
    let parts: Vec<[f64; 4]> = quads
        .iter()
        .map(|&((a, b), (c, d))| patch_rule(nodes, weights, a, b, c, d))
        .collect();
    let mut split = [0.0; 4];
    for p in &parts {
        for k in 0..4 {
            split[k] += p[k];
        }
    }
    let err = (0..4)
        .map(|k| (split[k] - whole[k]).abs())
        .fold(0.0, f64::max);
    if err <= PATCH_TOL * split[0].abs().max(1e-300) || depth >= MAX_DEPTH {
        return split;
    }
    let mut acc = [0.0; 4];
    for (q, p) in quads.iter().zip(parts) {
        let sub = integrate_patch(nodes, weights, q.0, q.1, p, depth + 1);
        for k in 0..4 {
            acc[k] += sub[k];
        }
    }
    acc
}

/// Builds the octahedral quadrature with `n_a × n_a` patches per face.
///
/// Weights are the patch areas, rescaled so that they sum to `4π`; directions
/// are the area-weighted mean unit vectors of each patch.
pub fn build_quadrature(n_a: usize) -> Result<AngularQuadrature> {
    if n_a == 0 || !n_a.is_power_of_two() {
        return Err(invalid(format!(
            "n_a must be a positive power of two, got {n_a}"
        )));
    }
    let (nodes, gw) = gauss_legendre(PATCH_RULE);
    let h = 1.0 / n_a as f64;
    // First-octant patches; the other faces are exact sign reflections.
    let mut base = Vec::with_capacity(n_a * n_a);
    for row in 0..n_a {
        for col in 0..n_a {
            let s = (col as f64 * h, (col + 1) as f64 * h);
            let t = (row as f64 * h, (row + 1) as f64 * h);
            let whole = patch_rule(&nodes, &gw, s.0, s.1, t.0, t.1);
            base.push(integrate_patch(&nodes, &gw, s, t, whole, 0));
        }
    }
    let raw_total: f64 = N_FACES as f64 * base.iter().map(|b| b[0]).sum::<f64>();
    let scale = 4.0 * PI / raw_total;

    let mut directions = Vec::with_capacity(N_FACES * n_a * n_a);
    let mut weights = Vec::with_capacity(N_FACES * n_a * n_a);
    let mut face_index = Vec::with_capacity(N_FACES * n_a * n_a);
    for face in 0..N_FACES {
        let [sx, sy, sz] = face_signs(face);
        for b in &base {
            directions.push(Direction {
                mu: sx * b[1] / b[0],
                nu: sy * b[2] / b[0],
                xi: sz * b[3] / b[0],
            });
            weights.push(b[0] * scale);
            face_index.push(face);
        }
    }
    Ok(AngularQuadrature {
        n_a,
        directions,
        weights,
        face_index,
    })
}

/// Merges each 2×2 block of patches on every face into one patch.
///
/// Coarse weights are sums of the child weights; coarse directions are the
/// weight-averaged child directions.
pub fn coarsen_quadrature(q: &AngularQuadrature) -> Result<AngularQuadrature> {
    if q.n_a < 2 {
        return Err(Error::CannotCoarsen);
    }
    let nc = q.n_a / 2;
    let count = N_FACES * nc * nc;
    let mut weights = vec![0.0; count];
    let mut acc = vec![[0.0; 3]; count];
    let mut face_index = vec![0; count];
    for n in 0..q.len() {
        let p = q.parent_index(n);
        let w = q.weights[n];
        let d = q.directions[n];
        weights[p] += w;
        acc[p][0] += w * d.mu;
        acc[p][1] += w * d.nu;
        acc[p][2] += w * d.xi;
        face_index[p] = q.face_index[n];
    }
    let directions = acc
        .iter()
        .zip(&weights)
        .map(|(a, w)| Direction {
            mu: a[0] / w,
            nu: a[1] / w,
            xi: a[2] / w,
        })
        .collect();
    Ok(AngularQuadrature {
        n_a: nc,
        directions,
        weights,
        face_index,
    })
}
