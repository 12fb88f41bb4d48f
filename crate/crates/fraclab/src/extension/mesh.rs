//! Half-space box meshes and the discrete weighted Dirichlet form.
//!
//! Levels are uniform in τ = z^{2s}/(2s), the variable in which
//! ∫ z^a (∂_z V)² dz = ∫ (∂_τ V)² dτ. Horizontal edges carry the weight
//! ∫ z^a dz over their dual z-cell, a trapezoid in t = z^{1+a}/(1+a).
//!
//! Nodes are stored level by level: flat = level · nx + xflat, level 0 being
//! the trace z = 0.

use crate::error::{Error, Result};
use crate::fracop::grid::{strides, unflatten};

#[derive(Debug, Clone, PartialEq)]
pub struct ExtMesh {
    pub dim: usize,
    pub xshape: Vec<usize>,
    pub h: f64,
    pub xorigin: Vec<f64>,
    pub periodic: bool,
    pub s: f64,
    /// z levels including z_0 = 0.
    pub z: Vec<f64>,
}

/// Sub-box of a mesh: x ∈ [lo, hi], z ∈ (0, ztop].
#[derive(Debug, Clone, PartialEq)]
pub struct ExtRegion {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub ztop: f64,
}

/// An edge of the mesh graph with its weight in the Dirichlet form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub w: f64,
}

/// z_j = R (j/M)^{1/(2s)}, j = 0..=M.
pub fn graded_levels(r: f64, levels: usize, s: f64) -> Vec<f64> {
    (0..=levels)
        .map(|j| r * (j as f64 / levels as f64).powf(1.0 / (2.0 * s)))
        .collect()
}

fn overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

impl ExtMesh {
    pub fn nx(&self) -> usize {
        self.xshape.iter().product()
    }

    pub fn levels(&self) -> usize {
        self.z.len() - 1
    }

    pub fn len(&self) -> usize {
        self.nx() * self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x_node(&self, xflat: usize) -> Vec<f64> {
        let mut idx = vec![0; self.dim];
        unflatten(&self.xshape, xflat, &mut idx);
        (0..self.dim)
            .map(|d| self.xorigin[d] + self.h * idx[d] as f64)
            .collect()
    }

    pub fn tau(&self, j: usize) -> f64 {
        self.z[j].powf(2.0 * self.s) / (2.0 * self.s)
    }

    pub fn t(&self, z: f64) -> f64 {
        z.powf(2.0 - 2.0 * self.s) / (2.0 - 2.0 * self.s)
    }

    /// The whole mesh as a region.
    pub fn full_region(&self) -> ExtRegion {
        if self.periodic {
            return ExtRegion {
                lo: vec![f64::NEG_INFINITY; self.dim],
                hi: vec![f64::INFINITY; self.dim],
                ztop: *self.z.last().unwrap(),
            };
        }
        ExtRegion {
            lo: self.xorigin.clone(),
            hi: (0..self.dim)
                .map(|d| self.xorigin[d] + self.h * (self.xshape[d] - 1) as f64)
                .collect(),
            ztop: *self.z.last().unwrap(),
        }
    }

    pub fn check_region(&self, region: &ExtRegion) -> Result<()> {
        let full = self.full_region();
        let tol = 1e-9 * self.h;
        for d in 0..self.dim {
            if region.lo[d] < full.lo[d] - tol || region.hi[d] > full.hi[d] + tol {
                return Err(Error::Domain(format!("region exceeds the mesh along axis {d}")));
            }
        }
        if region.ztop > full.ztop * (1.0 + 1e-12) || region.ztop <= 0.0 {
            return Err(Error::Domain(format!("region height {} outside (0, {}]", region.ztop, full.ztop)));
        }
        Ok(())
    }

    /// Fraction of the node cell [x - h/2, x + h/2] inside [lo, hi].
    fn cell_fraction(&self, x: f64, lo: f64, hi: f64) -> f64 {
        overlap(x - 0.5 * self.h, x + 0.5 * self.h, lo, hi) / self.h
    }

    /// Quadrature weight hⁿ·(cell fraction) of each x node inside the region.
    pub fn node_weights(&self, region: &ExtRegion) -> Vec<f64> {
        let hn = self.h.powi(self.dim as i32);
        (0..self.nx())
            .map(|i| {
                let x = self.x_node(i);
                hn * (0..self.dim)
                    .map(|d| self.cell_fraction(x[d], region.lo[d], region.hi[d]))
                    .product::<f64>()
            })
            .collect()
    }

    /// Horizontal-edge z weights ω_j = ∫ z^a over the dual cell, truncated at ztop.
    fn omega(&self, ztop: f64) -> Vec<f64> {
        let m = self.levels();
        let tt = self.t(ztop);
        let clip = |j: usize| self.t(self.z[j]).min(tt);
        (0..=m)
            .map(|j| {
                let up = if j < m { clip(j + 1) } else { clip(m) };
                let dn = if j > 0 { clip(j - 1) } else { clip(0) };
                let mid = clip(j);
                0.5 * (up - mid) + 0.5 * (mid - dn)
            })
            .collect()
    }

    /// Edges with weights restricted to a region.
    pub fn edges(&self, region: &ExtRegion) -> Vec<Edge> {
        let n = self.dim;
        let nx = self.nx();
        let m = self.levels();
        let h = self.h;
        let st = strides(&self.xshape);
        let taup = self.tau(m).min(region.ztop.powf(2.0 * self.s) / (2.0 * self.s));
        let omega = self.omega(region.ztop);
        let node_w = self.node_weights(region);
        let mut out = Vec::with_capacity(nx * (m + 1) * (n + 1));
        let mut idx = vec![0usize; n];
        for i in 0..nx {
            unflatten(&self.xshape, i, &mut idx);
            let x = self.x_node(i);
            // vertical edges
            if node_w[i] > 0.0 {
                for j in 0..m {
                    let (t0, t1) = (self.tau(j), self.tau(j + 1));
                    let frac = overlap(t0, t1, 0.0, taup) / (t1 - t0);
                    if frac > 0.0 {
                        out.push(Edge {
                            a: j * nx + i,
                            b: (j + 1) * nx + i,
                            w: node_w[i] * frac / (t1 - t0),
                        });
                    }
                }
            }
            // horizontal edges to the + neighbor along each axis
            for d in 0..n {
                let last = idx[d] + 1 == self.xshape[d];
                if last && !self.periodic {
                    continue;
                }
                if self.xshape[d] == 1 {
                    continue;
                }
                let nb = if last { i + st[d] - self.xshape[d] * st[d] } else { i + st[d] };
                let along = overlap(x[d], x[d] + h, region.lo[d], region.hi[d]) / h;
                let mut cross = 1.0;
                for e in 0..n {
                    if e != d {
                        cross *= self.cell_fraction(x[e], region.lo[e], region.hi[e]);
                    }
                }
                let base = along * cross * h.powi(n as i32 - 2);
                if base <= 0.0 {
                    continue;
                }
                for (j, om) in omega.iter().enumerate() {
                    if *om > 0.0 {
                        out.push(Edge {
                            a: j * nx + i,
                            b: j * nx + nb,
                            w: base * om,
                        });
                    }
                }
            }
        }
        out
    }

    /// True for nodes where boundary data is prescribed: the trace, the top
    /// level and (for non-periodic meshes) the lateral faces.
    pub fn is_fixed(&self, flat: usize) -> bool {
        let nx = self.nx();
        let j = flat / nx;
        if j == 0 || j == self.levels() {
            return true;
        }
        self.is_lateral(flat % nx)
    }

    pub fn is_lateral(&self, xflat: usize) -> bool {
        if self.periodic {
            return false;
        }
        let mut idx = vec![0usize; self.dim];
        unflatten(&self.xshape, xflat, &mut idx);
        (0..self.dim).any(|d| idx[d] == 0 || idx[d] + 1 == self.xshape[d])
    }
}

/// Σ w (U_a - U_b)².
pub fn dirichlet(edges: &[Edge], u: &[f64]) -> f64 {
    edges.iter().map(|e| e.w * (u[e.a] - u[e.b]).powi(2)).sum()
}

/// Σ w (U_a - U_b)(V_a - V_b).
pub fn dirichlet_bilinear(edges: &[Edge], u: &[f64], v: &[f64]) -> f64 {
    edges
        .iter()
        .map(|e| e.w * (u[e.a] - u[e.b]) * (v[e.a] - v[e.b]))
        .sum()
}

/// Gradient of the Dirichlet form: (A U)_a = Σ 2w (U_a - U_b).
pub fn dirichlet_gradient(edges: &[Edge], u: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; u.len()];
    for e in edges {
        let d = 2.0 * e.w * (u[e.a] - u[e.b]);
        g[e.a] += d;
        g[e.b] -= d;
    }
    g
}

pub fn dirichlet_diagonal(edges: &[Edge], len: usize) -> Vec<f64> {
    let mut g = vec![0.0; len];
    for e in edges {
        g[e.a] += 2.0 * e.w;
        g[e.b] += 2.0 * e.w;
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mesh_1d(r: f64, nxh: usize, levels: usize, s: f64) -> ExtMesh {
        let h = r / nxh as f64;
        ExtMesh {
            dim: 1,
            xshape: vec![2 * nxh + 1],
            h,
            xorigin: vec![-r],
            periodic: false,
            s,
            z: graded_levels(r, levels, s),
        }
    }

    #[test]
    fn power_profile_energy_is_exact() {
        // U = z^{2s} is linear in τ, so ∫_{B_1^+} z^a |∂_z U|² = 2s |B_1|
        for &s in &[0.25, 0.5, 0.7] {
            let m = mesh_1d(1.0, 10, 16, s);
            let nx = m.nx();
            let u: Vec<f64> = (0..m.len()).map(|f| m.z[f / nx].powf(2.0 * s)).collect();
            let e = dirichlet(&m.edges(&m.full_region()), &u);
            assert!((e - 2.0 * s * 2.0).abs() < 1e-12, "s={s}: {e}");
        }
    }

    #[test]
    fn horizontal_energy_of_linear_function() {
        // U = x: ∫_{-1}^{1} ∫_0^1 z^a dz dx = 2 t(1)
        let s = 0.3;
        let m = mesh_1d(1.0, 8, 12, s);
        let nx = m.nx();
        let u: Vec<f64> = (0..m.len()).map(|f| m.x_node(f % nx)[0]).collect();
        let e = dirichlet(&m.edges(&m.full_region()), &u);
        assert!((e - 2.0 * m.t(1.0)).abs() < 1e-12);
    }

    #[test]
    fn region_split_is_additive() {
        let s = 0.35;
        let m = mesh_1d(2.0, 10, 12, s);
        let u: Vec<f64> = (0..m.len()).map(|f| ((f * 37 % 101) as f64).sin()).collect();
        let full = dirichlet(&m.edges(&m.full_region()), &u);
        let left = ExtRegion { lo: vec![-2.0], hi: vec![0.13], ztop: 2.0 };
        let right = ExtRegion { lo: vec![0.13], hi: vec![2.0], ztop: 2.0 };
        let parts = dirichlet(&m.edges(&left), &u) + dirichlet(&m.edges(&right), &u);
        assert!((full - parts).abs() < 1e-12 * full);
    }

    #[test]
    fn gradient_matches_bilinear_form() {
        let m = mesh_1d(1.0, 4, 5, 0.4);
        let edges = m.edges(&m.full_region());
        let u: Vec<f64> = (0..m.len()).map(|f| (f as f64 * 0.37).cos()).collect();
        let v: Vec<f64> = (0..m.len()).map(|f| (f as f64 * 0.11).sin()).collect();
        let g = dirichlet_gradient(&edges, &u);
        let lhs: f64 = g.iter().zip(&v).map(|(a, b)| a * b).sum();
        assert!((lhs - 2.0 * dirichlet_bilinear(&edges, &u, &v)).abs() < 1e-12);
    }
}
