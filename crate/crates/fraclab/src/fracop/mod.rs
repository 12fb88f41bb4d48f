//! The fractional Laplacian on grid functions.
//!
//! Convention: (-Δ)^s u(x) = c_{n,s} ∫ (2u(x) - u(x+y) - u(x-y)) |y|^{-n-2s} dy,
//! with c_{n,s} = 2^{2s-1} s Γ(n/2+s) / (π^{n/2} Γ(1-s)). This is half the
//! constant of the one-sided principal-value form.
//!
//! At a node x_i the integral is split into three parts:
//! - near cube C = [-ρ, ρ]^n, ρ = 4h, where the second difference is
//!   replaced by its quadratic model -yᵀHy, giving -Δu·ρ^{2-2s}J_n/n;
//! - the rest of the sampled box, a midpoint sum over node cells weighted by
//!   the fraction of each cell outside C;
//! - the exterior of the box, integrated against the tail model.
//!
//! Written as L u = c[-αΔ_h u + 2Σ_j W_ij(u_i - u_j) + 2(A_i u_i - B_i)]
//! the operator is affine with a symmetric linear part, which the energy
//! module relies on.

pub mod exterior;
pub mod grid;
pub mod snapshot;
pub mod spectral;

pub use grid::{GridFunction, Profile1d, TailModel};
pub use spectral::frac_laplacian_spectral;

use crate::conv::Convolver;
use crate::error::{Error, Result};
use crate::quad::{radial_power, GaussRule};
use exterior::{cube_minus_box, over_faces, over_rect, tail_breaks, tail_ray, ExteriorRules};
use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

/// Near-field half width in cells.
pub const NEAR_CELLS: f64 = 4.0;
/// Second differences above this fraction of max|u| are rejected.
pub const HESSIAN_RATIO: f64 = 0.5;
/// Budget for the estimated truncation error near a non-constant tail.
pub const TRUNCATION_BUDGET: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FracConstant {
    pub n: usize,
    pub s: f64,
    pub value: f64,
}

pub fn frac_constant(n: usize, s: f64) -> Result<FracConstant> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::Domain(format!("s = {s} outside (0, 1)")));
    }
    if n == 0 {
        return Err(Error::Domain("dimension must be positive".into()));
    }
    let nf = n as f64;
    let ln = (2.0 * s - 1.0) * std::f64::consts::LN_2 + s.ln() + ln_gamma(0.5 * nf + s)
        - 0.5 * nf * std::f64::consts::PI.ln()
        - ln_gamma(1.0 - s);
    Ok(FracConstant { n, s, value: ln.exp() })
}

/// J_n = ∫_{[-1,1]^n} |y|^{2-n-2s} dy.
///
/// In polar form the cube is r ≤ r*(θ), so J_n = ∫ r*^{2-2s}/(2-2s) dθ, and
/// parametrizing the sphere through the 2n faces gives
/// J_n = 2n/(2-2s) ∫_{[-1,1]^{n-1}} (1+|q|²)^{(2-2s-n)/2} dq.
pub fn near_moment(n: usize, s: f64) -> f64 {
    let p = 2.0 - 2.0 * s;
    if n == 1 {
        return 2.0 / p;
    }
    let rule = GaussRule::new(24);
    let e = (p - n as f64) / 2.0;
    let inner = match n {
        2 => rule.integrate(-1.0, 1.0, |q| (1.0 + q * q).powf(e)),
        3 => rule.integrate(-1.0, 1.0, |a| {
            rule.integrate(-1.0, 1.0, |b| (1.0 + a * a + b * b).powf(e))
        }),
        _ => panic!("dimension {n} unsupported"),
    };
    2.0 * n as f64 / p * inner
}

/// Coefficient α with near-field integral = -α Δu.
pub fn near_coefficient(n: usize, s: f64, h: f64) -> f64 {
    let rho = NEAR_CELLS * h;
    rho.powf(2.0 - 2.0 * s) * near_moment(n, s) / n as f64
}

/// Fraction of the unit cell centered at `c` (in cells) inside [-ρ, ρ].
fn cell_overlap(c: f64) -> f64 {
    ((c + 0.5).min(NEAR_CELLS) - (c - 0.5).max(-NEAR_CELLS)).clamp(0.0, 1.0)
}

/// hⁿ|d h|^{-n-2s} times the fraction of the cell at offset d outside C.
pub fn mid_weight(off: &[f64], h: f64, s: f64) -> f64 {
    let n = off.len();
    let inside: f64 = off.iter().map(|&c| cell_overlap(c)).product();
    let frac = 1.0 - inside;
    if frac <= 0.0 {
        return 0.0;
    }
    let r2: f64 = off.iter().map(|c| c * c).sum();
    frac * r2.powf(-(n as f64 + 2.0 * s) / 2.0) * h.powf(-2.0 * s)
}

fn mid_weight_int(off: &[i64], h: f64, s: f64) -> f64 {
    let f: Vec<f64> = off.iter().map(|&v| v as f64).collect();
    mid_weight(&f, h, s)
}

/// Exterior integrals A = ∫_{out \ C} K and B = ∫_{out \ C} g K seen from x.
pub fn tail_integrals(u: &GridFunction, x: &[f64], s: f64, rules: &ExteriorRules) -> (f64, f64) {
    let (lo, hi) = u.box_bounds();
    let rho = NEAR_CELLS * u.spacing;
    let pieces = cube_minus_box(x, rho, &lo, &hi);
    if u.dim == 1 && u.tail.is_piecewise_constant() {
        let (dl, dr) = (x[0] - lo[0], hi[0] - x[0]);
        let gl = u.tail_value(&[lo[0] - 1.0]);
        let gr = u.tail_value(&[hi[0] + 1.0]);
        let near_l = rho.max(dl);
        let near_r = rho.max(dr);
        // exterior of box ∪ C, closed form
        let al = radial_power(near_l, f64::INFINITY, s);
        let ar = radial_power(near_r, f64::INFINITY, s);
        return (al + ar, gl * al + gr * ar);
    }
    let breaks = tail_breaks(u);
    let ext1 = over_faces(x, &lo, &hi, &rules.face, &breaks, |_, r0| {
        radial_power(r0, f64::INFINITY, s)
    });
    let extg = over_faces(x, &lo, &hi, &rules.face, &breaks, |dir, r0| {
        tail_ray(u, x, dir, r0, s, &rules.radial)
    });
    let mut a = ext1;
    let mut b = extg;
    for (plo, phi) in &pieces {
        a -= over_rect(x, plo, phi, s, &rules.rect, |_| 1.0);
        b -= over_rect(x, plo, phi, s, &rules.rect, |y| u.tail_value(y));
    }
    (a, b)
}

fn check_hessian(u: &GridFunction, center: &[i64]) -> Result<()> {
    let bound = HESSIAN_RATIO * u.max_abs();
    let r = NEAR_CELLS as i64;
    let n = u.dim;
    let count = (2 * r as usize + 1).pow(n as u32);
    let mut idx = vec![0i64; n];
    let mut worst: f64 = 0.0;
    for flat in 0..count {
        let mut rem = flat;
        for d in 0..n {
            idx[d] = center[d] + (rem % (2 * r as usize + 1)) as i64 - r;
            rem /= 2 * r as usize + 1;
        }
        // only stencils with all three points sampled
        let inside = u.tail.is_periodic()
            || (0..n).all(|d| idx[d] >= 1 && idx[d] + 1 < u.shape[d] as i64);
        if !inside {
            continue;
        }
        let c = u.value_at_offset_index(&idx);
        for d in 0..n {
            let mut p = idx.clone();
            p[d] += 1;
            let mut m = idx.clone();
            m[d] -= 1;
            let dd = u.value_at_offset_index(&p) + u.value_at_offset_index(&m) - 2.0 * c;
            worst = worst.max(dd.abs());
        }
    }
    if worst > bound {
        return Err(Error::Contract(format!(
            "second difference {worst:e} exceeds Hessian bound {bound:e} near the evaluation point"
        )));
    }
    Ok(())
}

/// Pointwise (-Δ)^s u(x) for x strictly inside the sampled box.
///
/// Off-node points use tensor quadratic interpolation for u(x) and its
/// second derivatives. Periodic grids require x at a node.
pub fn frac_laplacian(u: &GridFunction, s: f64, x: &[f64]) -> Result<f64> {
    let c = frac_constant(u.dim, s)?.value;
    let n = u.dim;
    let h = u.spacing;
    if x.len() != n {
        return Err(Error::Domain("point has wrong dimension".into()));
    }
    let q: Vec<f64> = (0..n).map(|d| (x[d] - u.origin[d]) / h).collect();
    let near: Vec<i64> = q.iter().map(|v| v.round() as i64).collect();
    if u.tail.is_periodic() {
        if (0..n).any(|d| (q[d] - near[d] as f64).abs() > 1e-9) {
            return Err(Error::Domain("periodic evaluation requires a node".into()));
        }
        check_hessian(u, &near)?;
        let op = FracLaplacian::new(u, s)?;
        let idx: Vec<usize> = (0..n)
            .map(|d| near[d].rem_euclid(u.shape[d] as i64) as usize)
            .collect();
        return Ok(op.row(&u.values, u.flat(&idx)));
    }
    let (lo, hi) = u.box_bounds();
    if (0..n).any(|d| x[d] <= lo[d] || x[d] >= hi[d]) {
        return Err(Error::Domain(format!("point {x:?} not strictly inside the box")));
    }
    let near: Vec<i64> = (0..n)
        .map(|d| near[d].clamp(0, u.shape[d] as i64 - 1))
        .collect();
    check_hessian(u, &near)?;

    // quadratic model at x
    let t: Vec<f64> = (0..n).map(|d| q[d] - near[d] as f64).collect();
    let basis = |t: f64, k: i64| match k {
        -1 => 0.5 * t * (t - 1.0),
        0 => 1.0 - t * t,
        _ => 0.5 * t * (t + 1.0),
    };
    let second = |k: i64| if k == 0 { -2.0 } else { 1.0 };
    let mut ux = 0.0;
    let mut lap = 0.0;
    let mut idx = vec![0i64; n];
    for flat in 0..3usize.pow(n as u32) {
        let mut rem = flat;
        let mut ks = vec![0i64; n];
        for d in 0..n {
            ks[d] = (rem % 3) as i64 - 1;
            rem /= 3;
            idx[d] = near[d] + ks[d];
        }
        let v = u.value_at_offset_index(&idx);
        let w: f64 = (0..n).map(|d| basis(t[d], ks[d])).product();
        ux += w * v;
        for k in 0..n {
            let mut wk = second(ks[k]);
            for d in 0..n {
                if d != k {
                    wk *= basis(t[d], ks[d]);
                }
            }
            lap += wk * v / (h * h);
        }
    }
    let alpha = near_coefficient(n, s, h);

    let mut mid = 0.0;
    let mut off = vec![0.0; n];
    for j in 0..u.len() {
        let jx = u.index(j);
        for d in 0..n {
            off[d] = jx[d] as f64 - q[d];
        }
        let w = mid_weight(&off, h, s);
        if w != 0.0 {
            mid += w * (ux - u.values[j]);
        }
    }

    let rules = ExteriorRules::default();
    let (a, b) = tail_integrals(u, x, s, &rules);

    if !u.tail.is_piecewise_constant() {
        let rho = NEAR_CELLS * h;
        let mut mismatch: f64 = 0.0;
        for d in 0..n {
            for (face, step) in [(lo[d], -1i64), (hi[d], 1i64)] {
                if (x[d] - face).abs() < rho {
                    let mut bidx = near.clone();
                    bidx[d] = if step < 0 { 0 } else { u.shape[d] as i64 - 1 };
                    let inside = u.value_at_offset_index(&bidx);
                    bidx[d] += step;
                    mismatch = mismatch.max((inside - u.value_at_offset_index(&bidx)).abs());
                }
            }
        }
        let bound = 2.0 * c * a * mismatch;
        if bound > TRUNCATION_BUDGET {
            return Err(Error::Truncation {
                bound,
                budget: TRUNCATION_BUDGET,
                what: format!("point {x:?} within the near-field radius of a non-constant tail"),
            });
        }
    }

    Ok(c * (-alpha * lap + 2.0 * mid + 2.0 * (a * ux - b)))
}

enum OpKind {
    Box {
        conv: Convolver,
        row_sum: Vec<f64>,
        a: Vec<f64>,
        b: Vec<f64>,
        ghost: Vec<f64>,
    },
    Periodic {
        /// residue weights, flat over the grid shape
        weights: Vec<f64>,
        a: f64,
    },
}

/// Whole-grid operator for a fixed grid geometry and tail model.
pub struct FracLaplacian {
    pub dim: usize,
    pub shape: Vec<usize>,
    pub h: f64,
    pub s: f64,
    pub c: f64,
    pub alpha: f64,
    kind: OpKind,
}

/// Number of periods summed on each side for periodic grids.
fn periodic_images(dim: usize) -> i64 {
    match dim {
        1 => 8,
        2 => 2,
        _ => 1,
    }
}

impl FracLaplacian {
    /// Precompute weights and tail data; values of `u` are not used except
    /// through its geometry and tail model.
    pub fn new(u: &GridFunction, s: f64) -> Result<Self> {
        let c = frac_constant(u.dim, s)?.value;
        let n = u.dim;
        let h = u.spacing;
        let alpha = near_coefficient(n, s, h);
        let kind = if u.tail.is_periodic() {
            let m = periodic_images(n);
            let win: Vec<i64> = u
                .shape
                .iter()
                .map(|&k| m * k as i64 + k as i64 / 2)
                .collect();
            let mut weights = vec![0.0; u.len()];
            let total: usize = win.iter().map(|&k| (2 * k + 1) as usize).product();
            let mut off = vec![0i64; n];
            let mut res = vec![0usize; n];
            for flat in 0..total {
                let mut rem = flat;
                for d in 0..n {
                    let span = (2 * win[d] + 1) as usize;
                    off[d] = (rem % span) as i64 - win[d];
                    rem /= span;
                    res[d] = off[d].rem_euclid(u.shape[d] as i64) as usize;
                }
                let w = mid_weight_int(&off, h, s);
                if w != 0.0 {
                    let mut f = 0;
                    for d in 0..n {
                        f = f * u.shape[d] + res[d];
                    }
                    weights[f] += w;
                }
            }
            let half: Vec<f64> = win.iter().map(|&k| (k as f64 + 0.5) * h).collect();
            let lo: Vec<f64> = half.iter().map(|v| -v).collect();
            let zero = vec![0.0; n];
            let a = if n == 1 {
                2.0 * radial_power(half[0], f64::INFINITY, s)
            } else {
                let rule = GaussRule::new(8);
                let br = vec![vec![]; n];
                over_faces(&zero, &lo, &half, &rule, &br, |_, r0| {
                    radial_power(r0, f64::INFINITY, s)
                })
            };
            OpKind::Periodic { weights, a }
        } else {
            let conv = Convolver::new(&u.shape, |o| mid_weight_int(o, h, s));
            let row_sum = conv.apply(&vec![1.0; u.len()]);
            let rules = ExteriorRules::default();
            let ab: Vec<(f64, f64)> = (0..u.len())
                .into_par_iter()
                .map(|i| tail_integrals(u, &u.node(i), s, &rules))
                .collect();
            let mut ghost = vec![0.0; u.len()];
            for (i, g) in ghost.iter_mut().enumerate() {
                let idx = u.index(i);
                for d in 0..n {
                    for step in [-1i64, 1] {
                        let j = idx[d] as i64 + step;
                        if j < 0 || j >= u.shape[d] as i64 {
                            let mut o: Vec<i64> = idx.iter().map(|&v| v as i64).collect();
                            o[d] = j;
                            *g += u.value_at_offset_index(&o);
                        }
                    }
                }
            }
            OpKind::Box {
                conv,
                row_sum,
                a: ab.iter().map(|p| p.0).collect(),
                b: ab.iter().map(|p| p.1).collect(),
                ghost,
            }
        };
        Ok(FracLaplacian {
            dim: n,
            shape: u.shape.clone(),
            h,
            s,
            c,
            alpha,
            kind,
        })
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self.kind, OpKind::Periodic { .. })
    }

    /// Σ_k (u_{i+e_k} + u_{i-e_k} - 2u_i): zero ghosts for boxes, wrapped
    /// neighbors for periodic grids.
    fn lap0(&self, u: &[f64]) -> Vec<f64> {
        let st = grid::strides(&self.shape);
        let periodic = self.is_periodic();
        let mut out = vec![0.0; u.len()];
        let mut idx = vec![0usize; self.dim];
        for (i, o) in out.iter_mut().enumerate() {
            grid::unflatten(&self.shape, i, &mut idx);
            let mut acc = 0.0;
            for d in 0..self.dim {
                let nd = self.shape[d];
                let k = idx[d];
                let up = if k + 1 < nd {
                    u[i + st[d]]
                } else if periodic {
                    u[i + st[d] - nd * st[d]]
                } else {
                    0.0
                };
                let dn = if k > 0 {
                    u[i - st[d]]
                } else if periodic {
                    u[i + (nd - 1) * st[d]]
                } else {
                    0.0
                };
                acc += up + dn - 2.0 * u[i];
            }
            *o = acc;
        }
        out
    }

    /// Σ_r w_r (u_i - u_{i+r}) over residues in fixed order.
    fn circulant(&self, weights: &[f64], u: &[f64], i: usize) -> f64 {
        let n = self.dim;
        let mut ii = vec![0usize; n];
        grid::unflatten(&self.shape, i, &mut ii);
        let mut rr = vec![0usize; n];
        let mut acc = 0.0;
        for (r, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            grid::unflatten(&self.shape, r, &mut rr);
            let mut j = 0;
            for d in 0..n {
                j = j * self.shape[d] + (ii[d] + rr[d]) % self.shape[d];
            }
            acc += w * (u[i] - u[j]);
        }
        acc
    }

    /// Permutation-invariant mean: sort, then sum.
    fn mean(u: &[f64]) -> f64 {
        let mut v = u.to_vec();
        v.sort_by(|a, b| a.total_cmp(b));
        v.iter().sum::<f64>() / v.len() as f64
    }

    /// Single row of the periodic operator.
    fn row(&self, u: &[f64], i: usize) -> f64 {
        match &self.kind {
            OpKind::Periodic { weights, a } => {
                let lap = self.lap0(u)[i];
                let mean = Self::mean(u);
                self.c
                    * (-self.alpha * lap / (self.h * self.h)
                        + 2.0 * self.circulant(weights, u, i)
                        + 2.0 * a * (u[i] - mean))
            }
            OpKind::Box { .. } => self.apply(u)[i],
        }
    }

    /// L u, including the tail data.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        self.apply_impl(u, true)
    }

    /// Linear part M u, where L u = M u - b.
    pub fn apply_linear(&self, u: &[f64]) -> Vec<f64> {
        self.apply_impl(u, false)
    }

    fn apply_impl(&self, u: &[f64], affine: bool) -> Vec<f64> {
        assert_eq!(u.len(), self.len());
        let lap = self.lap0(u);
        let h2 = self.h * self.h;
        match &self.kind {
            OpKind::Periodic { weights, a } => {
                let mean = Self::mean(u);
                (0..u.len())
                    .into_par_iter()
                    .map(|i| {
                        self.c
                            * (-self.alpha * lap[i] / h2
                                + 2.0 * self.circulant(weights, u, i)
                                + 2.0 * a * (u[i] - mean))
                    })
                    .collect()
            }
            OpKind::Box {
                conv,
                row_sum,
                a,
                b,
                ghost,
            } => {
                let wu = conv.apply(u);
                (0..u.len())
                    .map(|i| {
                        let (g, bi) = if affine { (ghost[i], b[i]) } else { (0.0, 0.0) };
                        self.c
                            * (-self.alpha * (lap[i] + g) / h2
                                + 2.0 * (row_sum[i] * u[i] - wu[i])
                                + 2.0 * (a[i] * u[i] - bi))
                    })
                    .collect()
            }
        }
    }

    /// Constant part b of L u = M u - b.
    pub fn affine_shift(&self) -> Vec<f64> {
        let z = vec![0.0; self.len()];
        self.apply(&z).into_iter().map(|v| -v).collect()
    }

    /// Diagonal of M.
    pub fn diagonal(&self) -> Vec<f64> {
        let nn = self.dim as f64;
        let h2 = self.h * self.h;
        match &self.kind {
            OpKind::Periodic { weights, a } => {
                let wsum: f64 = weights.iter().skip(1).sum();
                let d = self.c
                    * (2.0 * nn * self.alpha / h2
                        + 2.0 * wsum
                        + 2.0 * a * (1.0 - 1.0 / self.len() as f64));
                vec![d; self.len()]
            }
            OpKind::Box { row_sum, a, .. } => row_sum
                .iter()
                .zip(a)
                .map(|(r, ai)| self.c * (2.0 * nn * self.alpha / h2 + 2.0 * r + 2.0 * ai))
                .collect(),
        }
    }

    /// Exterior integrals (A_i, B_i) of a box operator.
    pub fn tail_data(&self) -> Option<(&[f64], &[f64])> {
        match &self.kind {
            OpKind::Box { a, b, .. } => Some((a, b)),
            OpKind::Periodic { .. } => None,
        }
    }

    /// Largest eigenvalue of M (plus a diagonal shift) by power iteration.
    pub fn max_eigenvalue(&self, shift: &[f64], iters: usize) -> f64 {
        let n = self.len();
        let mut v: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 7919) % 13) as f64 / 13.0).collect();
        let mut lam = 0.0;
        for _ in 0..iters {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            for x in v.iter_mut() {
                *x /= norm;
            }
            let mut w = self.apply_linear(&v);
            for i in 0..n {
                w[i] += shift[i] * v[i];
            }
            lam = v.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
            v = w;
        }
        lam
    }
}

/// Whole-grid (-Δ)^s u at every node.
pub fn frac_laplacian_grid(u: &GridFunction, s: f64) -> Result<GridFunction> {
    if u.dim == 3 && !u.tail.is_periodic() {
        return Err(Error::Contract(
            "three-dimensional grids support pointwise evaluation only".into(),
        ));
    }
    let op = FracLaplacian::new(u, s)?;
    Ok(u.with_values(op.apply(&u.values)))
}
