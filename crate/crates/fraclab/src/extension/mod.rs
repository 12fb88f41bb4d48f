//! The a-harmonic extension and weighted Dirichlet energies on half-space
//! boxes B_R × (0, R), a = 1 - 2s.
//!
//! `extend` evaluates the Poisson convolution on the lateral and top faces
//! of the box and fills the interior with the discrete minimizer of the
//! weighted Dirichlet form for that boundary data. The resulting field is a
//! discrete a-harmonic function, so Dirichlet minimality and the maximum
//! principle hold exactly on the mesh rather than up to quadrature error.

pub mod kernel;
pub mod mesh;
pub mod snapshot;

pub use kernel::{extension_symbol, PoissonKernel};
pub use mesh::{
    dirichlet, dirichlet_bilinear, dirichlet_diagonal, dirichlet_gradient, graded_levels, Edge,
    ExtMesh, ExtRegion,
};

use crate::conv::fft_nd;
use crate::error::{Error, Result};
use crate::fracop::exterior::over_faces;
use crate::fracop::grid::{unflatten, GridFunction, TailModel};
use crate::linalg::pcg;
use crate::quad::GaussRule;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use std::f64::consts::PI;

/// Offsets (in cells) within which convolution weights use hat quadrature.
const NEAR_HAT: i64 = 4;
const RELAX_TOL: f64 = 1e-12;
const RELAX_MAX_ITER: usize = 50_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ExtensionField {
    /// Trace on the x-grid of the box (carries the tail of the source).
    pub base: GridFunction,
    pub s: f64,
    pub r: f64,
    /// Positive z levels, strictly increasing, last = R.
    pub zmesh: Vec<f64>,
    /// (levels + 1) × nx values, level 0 being the trace.
    pub values: Vec<f64>,
    pub mesh: ExtMesh,
}

impl ExtensionField {
    pub fn from_parts(base: GridFunction, s: f64, r: f64, zmesh: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if zmesh.is_empty() || zmesh.windows(2).any(|w| w[1] <= w[0]) || zmesh[0] <= 0.0 {
            return Err(Error::Format("zmesh must be positive and strictly increasing".into()));
        }
        let mut z = vec![0.0];
        z.extend_from_slice(&zmesh);
        let mesh = ExtMesh {
            dim: base.dim,
            xshape: base.shape.clone(),
            h: base.spacing,
            xorigin: base.origin.clone(),
            periodic: base.tail.is_periodic(),
            s,
            z,
        };
        if values.len() != mesh.len() {
            return Err(Error::Format(format!(
                "{} values for a mesh of {} nodes",
                values.len(),
                mesh.len()
            )));
        }
        Ok(ExtensionField { base, s, r, zmesh, values, mesh })
    }

    pub fn nx(&self) -> usize {
        self.mesh.nx()
    }

    pub fn level(&self, j: usize) -> &[f64] {
        let nx = self.nx();
        &self.values[j * nx..(j + 1) * nx]
    }

    pub fn trace(&self) -> &[f64] {
        self.level(0)
    }

    pub fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.values.len());
        ExtensionField { values, ..self.clone() }
    }

    pub fn full_edges(&self) -> Vec<Edge> {
        self.mesh.edges(&self.mesh.full_region())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// U_ε(x, z) = U(εx, εz): the same values on a mesh scaled by 1/ε.
    pub fn rescaled(&self, eps: f64) -> Result<Self> {
        if eps <= 0.0 {
            return Err(Error::Domain("rescaling factor must be positive".into()));
        }
        let mut base = self.base.clone();
        base.spacing /= eps;
        base.origin.iter_mut().for_each(|o| *o /= eps);
        let zmesh = self.zmesh.iter().map(|z| z / eps).collect();
        ExtensionField::from_parts(base, self.s, self.r / eps, zmesh, self.values.clone())
    }

    /// True when the field vanishes on the lateral and top faces.
    pub fn vanishes_on_faces(&self) -> bool {
        let nx = self.nx();
        (nx..self.values.len()).all(|f| !self.mesh.is_fixed(f) || self.values[f] == 0.0)
            && (0..nx).all(|i| !self.mesh.is_lateral(i) || self.values[i] == 0.0)
    }
}

/// Nodes of `v` inside [-R, R]^n; the grid must have nodes on ±R.
fn box_subgrid(v: &GridFunction, r: f64) -> Result<(GridFunction, Vec<usize>)> {
    let h = v.spacing;
    let mut start = vec![0usize; v.dim];
    let mut shape = vec![0usize; v.dim];
    for d in 0..v.dim {
        let q0 = (-r - v.origin[d]) / h;
        let q1 = (r - v.origin[d]) / h;
        let (k0, k1) = (q0.round(), q1.round());
        if (q0 - k0).abs() > 1e-6 || (q1 - k1).abs() > 1e-6 || k0 < 0.0 || k1 as usize >= v.shape[d] {
            return Err(Error::Domain(format!(
                "grid has no nodes at ±{r} along axis {d} (box radius must be a node)"
            )));
        }
        start[d] = k0 as usize;
        shape[d] = (k1 - k0) as usize + 1;
    }
    let len: usize = shape.iter().product();
    let mut vals = Vec::with_capacity(len);
    let mut idx = vec![0usize; v.dim];
    let mut src = vec![0usize; v.dim];
    for f in 0..len {
        unflatten(&shape, f, &mut idx);
        for d in 0..v.dim {
            src[d] = start[d] + idx[d];
        }
        vals.push(v.values[v.flat(&src)]);
    }
    let origin = (0..v.dim).map(|d| v.origin[d] + h * start[d] as f64).collect();
    Ok((GridFunction::new(shape, h, origin, vals, v.tail.clone())?, start))
}

/// ∫_{r0}^∞ P(rθ, z) g(x + rθ) r^{n-1} dr for piecewise-constant tails.
fn tail_ray_poisson(k: &PoissonKernel, u: &GridFunction, x: &[f64], dir: &[f64], r0: f64, z: f64) -> f64 {
    match &u.tail {
        TailModel::Constant(c) => c * k.ray(r0, f64::INFINITY, z),
        TailModel::ConstantPm1 { axis } => {
            let a = *axis;
            let mid = u.box_mid(a);
            let start = if x[a] + r0 * dir[a] < mid { -1.0 } else { 1.0 };
            if dir[a] != 0.0 {
                let rc = (mid - x[a]) / dir[a];
                if rc > r0 {
                    return start * (k.ray(r0, rc, z) - k.ray(rc, f64::INFINITY, z));
                }
            }
            start * k.ray(r0, f64::INFINITY, z)
        }
        _ => unreachable!("checked by the caller"),
    }
}

/// Hat-quadrature weights for grid offsets |d|_∞ ≤ NEAR_HAT at height z.
fn near_table(k: &PoissonKernel, h: f64, z: f64) -> Vec<f64> {
    let n = k.n;
    let side = (2 * NEAR_HAT + 1) as usize;
    let zero = vec![0.0; n];
    (0..side.pow(n as u32))
        .map(|f| {
            let mut c = vec![0.0; n];
            let mut rem = f;
            for cd in c.iter_mut() {
                *cd = ((rem % side) as i64 - NEAR_HAT) as f64 * h;
                rem /= side;
            }
            k.hat_weight(&zero, &c, h, z)
        })
        .collect()
}

/// Normalized Poisson convolution of `v` (samples plus tail) at (x, z).
///
/// Samples enter through hat functions: exact hat quadrature within four
/// cells, midpoint beyond. Dividing by the total weight makes constants
/// reproduce exactly and keeps the result a convex combination of the data.
fn convolve_at(
    k: &PoissonKernel,
    v: &GridFunction,
    x: &[f64],
    z: f64,
    center: Option<&[i64]>,
    table: Option<&[f64]>,
) -> f64 {
    let n = v.dim;
    let h = v.spacing;
    let hn = h.powi(n as i32);
    let side = (2 * NEAR_HAT + 1) as usize;
    let mut num = 0.0;
    let mut den = 0.0;
    let mut idx = vec![0usize; n];
    let mut y = vec![0.0; n];
    for f in 0..v.len() {
        unflatten(&v.shape, f, &mut idx);
        let mut r2 = 0.0;
        let mut near = true;
        let mut tf = 0usize;
        let mut mul = 1usize;
        for d in 0..n {
            y[d] = v.origin[d] + h * idx[d] as f64;
            r2 += (x[d] - y[d]).powi(2);
            match center {
                Some(c) => {
                    let off = idx[d] as i64 - c[d];
                    if off.abs() > NEAR_HAT {
                        near = false;
                    } else {
                        tf += (off + NEAR_HAT) as usize * mul;
                        mul *= side;
                    }
                }
                None => {
                    if (y[d] - x[d]).abs() > (NEAR_HAT as f64 + 0.5) * h {
                        near = false;
                    }
                }
            }
        }
        let w = if near {
            match (center, table) {
                (Some(_), Some(t)) => t[tf],
                _ => k.hat_weight(x, &y, h, z),
            }
        } else {
            hn * k.profile(r2, z)
        };
        num += w * v.values[f];
        den += w;
    }
    let (lo, hi) = v.box_bounds();
    let rule = GaussRule::new(6);
    let breaks = crate::fracop::exterior::tail_breaks(v);
    let ext1 = over_faces(x, &lo, &hi, &rule, &breaks, |_, r0| k.ray(r0, f64::INFINITY, z));
    let extg = over_faces(x, &lo, &hi, &rule, &breaks, |dir, r0| {
        tail_ray_poisson(k, v, x, dir, r0, z)
    });
    (num + extg) / (den + ext1)
}

fn check_tail(v: &GridFunction) -> Result<()> {
    match v.tail {
        TailModel::Periodic => Err(Error::Contract(
            "periodic traces are extended in Fourier space (extend_periodic)".into(),
        )),
        TailModel::Constant(_) | TailModel::ConstantPm1 { .. } => Ok(()),
        _ => Err(Error::Contract(
            "extension supports constant and constant_pm1 tails".into(),
        )),
    }
}

/// E_v(x, z) by direct quadrature of the Poisson convolution.
pub fn extension_value(v: &GridFunction, s: f64, x: &[f64], z: f64) -> Result<f64> {
    check_tail(v)?;
    let k = PoissonKernel::new(v.dim, s)?;
    if z <= 0.0 {
        return Err(Error::Domain("z must be positive".into()));
    }
    Ok(convolve_at(&k, v, x, z, None, None))
}

/// Minimize the Dirichlet form over nodes with `fixed[i] == false`,
/// keeping the other entries of `u`.
pub fn minimize_dirichlet(edges: &[Edge], u: &mut [f64], fixed: &[bool]) -> Result<usize> {
    let free: Vec<usize> = (0..u.len()).filter(|&i| !fixed[i]).collect();
    if free.is_empty() {
        return Ok(0);
    }
    let mut boundary = u.to_vec();
    for &i in &free {
        boundary[i] = 0.0;
    }
    let g = dirichlet_gradient(edges, &boundary);
    let b: Vec<f64> = free.iter().map(|&i| -g[i]).collect();
    let diag_full = dirichlet_diagonal(edges, u.len());
    let diag: Vec<f64> = free.iter().map(|&i| diag_full[i].max(1e-300)).collect();
    let len = u.len();
    let apply = |x: &[f64]| {
        let mut full = vec![0.0; len];
        for (k, &i) in free.iter().enumerate() {
            full[i] = x[k];
        }
        let g = dirichlet_gradient(edges, &full);
        free.iter().map(|&i| g[i]).collect::<Vec<_>>()
    };
    let x0: Vec<f64> = free.iter().map(|&i| u[i]).collect();
    let out = pcg(apply, &b, &diag, x0, RELAX_TOL, RELAX_MAX_ITER)?;
    for (k, &i) in free.iter().enumerate() {
        u[i] = out.x[k];
    }
    Ok(out.iterations)
}

/// The extension of v on B_R × (0, R) with `levels` graded z levels.
pub fn extend(v: &GridFunction, s: f64, r: f64, levels: usize) -> Result<ExtensionField> {
    check_tail(v)?;
    if r <= 0.0 || levels < 2 {
        return Err(Error::Domain("need R > 0 and at least two levels".into()));
    }
    let k = PoissonKernel::new(v.dim, s)?;
    let (base, start) = box_subgrid(v, r)?;
    let z = graded_levels(r, levels, s);
    let nx = base.len();
    let mut values = Vec::with_capacity(nx * (levels + 1));
    for _ in 0..=levels {
        values.extend_from_slice(&base.values);
    }
    let mut field = ExtensionField::from_parts(base, s, r, z[1..].to_vec(), values)?;
    let mesh = field.mesh.clone();
    let tables: Vec<Vec<f64>> = (1..=levels)
        .into_par_iter()
        .map(|j| near_table(&k, v.spacing, z[j]))
        .collect();
    let faces: Vec<usize> = (nx..mesh.len()).filter(|&f| mesh.is_fixed(f)).collect();
    let computed: Vec<f64> = faces
        .par_iter()
        .map(|&f| {
            let (j, i) = (f / nx, f % nx);
            let x = mesh.x_node(i);
            let mut idx = vec![0usize; v.dim];
            unflatten(&mesh.xshape, i, &mut idx);
            let center: Vec<i64> = (0..v.dim).map(|d| (idx[d] + start[d]) as i64).collect();
            convolve_at(&k, v, &x, z[j], Some(&center), Some(&tables[j - 1]))
        })
        .collect();
    for (&f, val) in faces.iter().zip(computed) {
        field.values[f] = val;
    }
    let fixed: Vec<bool> = (0..mesh.len()).map(|f| mesh.is_fixed(f)).collect();
    minimize_dirichlet(&field.full_edges(), &mut field.values, &fixed)?;
    Ok(field)
}

/// Discrete minimizer of the Dirichlet form with the trace of `v` on the
/// box of radius R and zero lateral and top data. Compactly supported in
/// the mesh, so it serves as a test field for second variations.
pub fn extend_zero_faces(v: &GridFunction, s: f64, r: f64, levels: usize) -> Result<ExtensionField> {
    if r <= 0.0 || levels < 2 {
        return Err(Error::Domain("need R > 0 and at least two levels".into()));
    }
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::Domain(format!("s = {s} outside (0, 1)")));
    }
    let (base, _) = box_subgrid(v, r)?;
    let z = graded_levels(r, levels, s);
    let nx = base.len();
    let mut values = vec![0.0; nx * (levels + 1)];
    values[..nx].copy_from_slice(&base.values);
    let mut field = ExtensionField::from_parts(base, s, r, z[1..].to_vec(), values)?;
    let mesh = field.mesh.clone();
    let fixed: Vec<bool> = (0..mesh.len()).map(|f| mesh.is_fixed(f)).collect();
    minimize_dirichlet(&field.full_edges(), &mut field.values, &fixed)?;
    Ok(field)
}

/// Extension of a periodic trace by the Fourier symbol φ(|k| z), sampled on
/// the graded levels. No lateral faces; the top level is part of the data.
pub fn extend_periodic(v: &GridFunction, s: f64, r: f64, levels: usize) -> Result<ExtensionField> {
    if !v.tail.is_periodic() {
        return Err(Error::Contract("extend_periodic needs a periodic trace".into()));
    }
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::Domain(format!("s = {s} outside (0, 1)")));
    }
    if r <= 0.0 || levels < 2 {
        return Err(Error::Domain("need R > 0 and at least two levels".into()));
    }
    let z = graded_levels(r, levels, s);
    let mut hat: Vec<Complex64> = v.values.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fft_nd(&mut hat, &v.shape, false);
    let mut freq = vec![0.0; v.len()];
    let mut idx = vec![0usize; v.dim];
    for (f, fr) in freq.iter_mut().enumerate() {
        unflatten(&v.shape, f, &mut idx);
        let mut k2 = 0.0;
        for d in 0..v.dim {
            let n = v.shape[d] as i64;
            let mut m = idx[d] as i64;
            if m > n / 2 {
                m -= n;
            }
            let kk = 2.0 * PI * m as f64 / (n as f64 * v.spacing);
            k2 += kk * kk;
        }
        *fr = k2.sqrt();
    }
    let mut values = Vec::with_capacity(v.len() * (levels + 1));
    values.extend_from_slice(&v.values);
    for &zj in &z[1..] {
        let mut buf: Vec<Complex64> = hat
            .iter()
            .zip(&freq)
            .map(|(c, &k)| c * extension_symbol(s, k * zj))
            .collect();
        fft_nd(&mut buf, &v.shape, true);
        values.extend(buf.iter().map(|c| c.re));
    }
    ExtensionField::from_parts(v.clone(), s, r, z[1..].to_vec(), values)
}

/// ∫_region z^a |∇U|², in the discrete form of the mesh.
pub fn weighted_dirichlet(u: &ExtensionField, region: &ExtRegion) -> Result<f64> {
    u.mesh.check_region(region)?;
    Ok(dirichlet(&u.mesh.edges(region), &u.values))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bump(x: &[f64], c: f64, w: f64) -> f64 {
        let r2: f64 = x.iter().map(|v| (v - c) * (v - c)).sum::<f64>() / (w * w);
        if r2 < 1.0 {
            (1.0 - r2).powi(3)
        } else {
            0.0
        }
    }

    #[test]
    fn constant_trace_extends_to_constant() {
        let v = GridFunction::centered(1, 81, 4.0, TailModel::Constant(0.3), |_| 0.3).unwrap();
        let e = extend(&v, 0.4, 2.0, 12).unwrap();
        for val in &e.values {
            assert!((val - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn odd_step_vanishes_on_axis() {
        let v = GridFunction::centered(1, 41, 4.0, TailModel::ConstantPm1 { axis: 0 }, |x| {
            if x[0].abs() < 1e-9 { 0.0 } else { x[0].signum() }
        })
        .unwrap();
        for &z in &[0.1, 1.0, 5.0] {
            let e0 = extension_value(&v, 0.5, &[0.0], z).unwrap();
            assert!(e0.abs() < 1e-12, "z={z}: {e0}");
        }
        let e = extend(&v, 0.5, 2.0, 10).unwrap();
        let mid = e.nx() / 2;
        for j in 0..=10 {
            assert!(e.level(j)[mid].abs() < 1e-10);
        }
    }

    #[test]
    fn maximum_principle_and_linearity() {
        let f = |x: &[f64]| bump(x, 0.3, 1.5);
        let g = |x: &[f64]| -0.5 * bump(x, -0.8, 1.0);
        let mk = |h: &dyn Fn(&[f64]) -> f64| {
            GridFunction::centered(1, 61, 3.0, TailModel::Constant(0.0), h).unwrap()
        };
        let (u, w) = (mk(&f), mk(&g));
        let eu = extend(&u, 0.3, 3.0, 16).unwrap();
        let ew = extend(&w, 0.3, 3.0, 16).unwrap();
        let sum = u.with_values(u.values.iter().zip(&w.values).map(|(a, b)| 2.0 * a - 3.0 * b).collect());
        let es = extend(&sum, 0.3, 3.0, 16).unwrap();
        for i in 0..es.values.len() {
            let lin = 2.0 * eu.values[i] - 3.0 * ew.values[i];
            assert!((es.values[i] - lin).abs() < 1e-8);
        }
        let (lo, hi) = (0.0, 1.0);
        for val in &eu.values {
            assert!(*val >= lo - 1e-8 && *val <= hi + 1e-8);
        }
    }

    #[test]
    fn extension_is_dirichlet_minimal() {
        let u = GridFunction::centered(1, 41, 2.0, TailModel::Constant(0.0), |x| bump(x, 0.0, 1.0)).unwrap();
        let e = extend(&u, 0.4, 2.0, 12).unwrap();
        let base = weighted_dirichlet(&e, &e.mesh.full_region()).unwrap();
        for trial in 0..20 {
            let mut vals = e.values.clone();
            for (f, v) in vals.iter_mut().enumerate() {
                if !e.mesh.is_fixed(f) {
                    *v += 1e-3 * (((f * 7919 + trial * 104729) % 1000) as f64 / 500.0 - 1.0);
                }
            }
            let comp = weighted_dirichlet(&e.with_values(vals), &e.mesh.full_region()).unwrap();
            assert!(comp >= base - 1e-8);
        }
    }

    #[test]
    fn periodic_extension_of_cosine() {
        let n = 64;
        let h = 2.0 * PI / n as f64;
        let v = GridFunction::from_fn(vec![n], h, vec![0.0], TailModel::Periodic, |x| (2.0 * x[0]).cos()).unwrap();
        let e = extend_periodic(&v, 0.5, 1.0, 8).unwrap();
        // s = 1/2: E = e^{-2z} cos(2x)
        for j in 0..=8 {
            let z = e.mesh.z[j];
            for i in [0usize, 5, 17] {
                let x = e.mesh.x_node(i)[0];
                assert!((e.level(j)[i] - (-2.0 * z).exp() * (2.0 * x).cos()).abs() < 1e-9);
            }
        }
        assert!(extend(&v, 0.5, 1.0, 8).is_err());
    }

    #[test]
    fn interior_fill_tracks_poisson_convolution() {
        let u = GridFunction::centered(1, 161, 8.0, TailModel::ConstantPm1 { axis: 0 }, |x| (1.5 * x[0]).tanh()).unwrap();
        let e = extend(&u, 0.4, 4.0, 40).unwrap();
        let nx = e.nx();
        let mut worst: f64 = 0.0;
        for j in [5usize, 15, 25] {
            for i in [nx / 4, nx / 2 + 7, 3 * nx / 4] {
                let x = e.mesh.x_node(i);
                let direct = extension_value(&u, 0.4, &x, e.mesh.z[j]).unwrap();
                worst = worst.max((e.level(j)[i] - direct).abs());
            }
        }
        assert!(worst < 2e-2, "{worst}");
    }

    #[test]
    fn region_outside_mesh_is_rejected() {
        let v = GridFunction::centered(1, 21, 2.0, TailModel::Constant(0.0), |_| 0.0).unwrap();
        let e = extend(&v, 0.5, 1.0, 4).unwrap();
        let r = ExtRegion { lo: vec![-1.5], hi: vec![1.0], ztop: 1.0 };
        assert!(matches!(weighted_dirichlet(&e, &r), Err(Error::Domain(_))));
    }
}
