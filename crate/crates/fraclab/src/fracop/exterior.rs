//! Integrals over the complement of a box, seen from an interior point.
//!
//! Each face of the box is the base of a cone with apex x. Over the cone,
//! dy = r^{n-1} dr dθ and the solid angle element is dθ = d·dA/|p-x|^n,
//! where d is the distance from x to the face plane. The caller supplies
//! the radial integral along the ray through each face point.

use super::grid::GridFunction;
use super::grid::TailModel;
use crate::quad::{graded_breaks, radial_power, radial_tail, with_extra_breaks, GaussRule};

pub struct ExteriorRules {
    pub face: GaussRule,
    pub radial: GaussRule,
    pub rect: GaussRule,
}

impl Default for ExteriorRules {
    fn default() -> Self {
        ExteriorRules {
            face: GaussRule::new(6),
            radial: GaussRule::new(12),
            rect: GaussRule::new(6),
        }
    }
}

/// Σ over faces of ∫_face (d/|p-x|^n) ray(θ, |p-x|) dA.
///
/// `breaks[j]` lists extra panel breaks along axis j (discontinuity lines).
pub fn over_faces<R>(
    x: &[f64],
    lo: &[f64],
    hi: &[f64],
    rule: &GaussRule,
    breaks: &[Vec<f64>],
    mut ray: R,
) -> f64
where
    R: FnMut(&[f64], f64) -> f64,
{
    let n = x.len();
    let mut acc = 0.0;
    let mut dir = vec![0.0; n];
    for k in 0..n {
        for plane in [lo[k], hi[k]] {
            let d = (plane - x[k]).abs();
            let tang: Vec<usize> = (0..n).filter(|&j| j != k).collect();
            // quadrature points on the face
            let mut pts: Vec<Vec<f64>> = vec![];
            let mut wts: Vec<Vec<f64>> = vec![];
            for &j in &tang {
                let br = with_extra_breaks(graded_breaks(lo[j], hi[j], x[j], d), &breaks[j]);
                let (mut xs, mut ws) = (vec![], vec![]);
                for w in br.windows(2) {
                    rule.push_scaled(w[0], w[1], &mut xs, &mut ws);
                }
                pts.push(xs);
                wts.push(ws);
            }
            let counts: Vec<usize> = pts.iter().map(|p| p.len()).collect();
            let total: usize = counts.iter().product();
            let mut p = vec![0.0; n];
            p[k] = plane;
            for flat in 0..total {
                let mut rem = flat;
                let mut w = 1.0;
                for (t, &j) in tang.iter().enumerate() {
                    let i = rem % counts[t];
                    rem /= counts[t];
                    p[j] = pts[t][i];
                    w *= wts[t][i];
                }
                let mut r2 = 0.0;
                for m in 0..n {
                    dir[m] = p[m] - x[m];
                    r2 += dir[m] * dir[m];
                }
                let r0 = r2.sqrt();
                for m in 0..n {
                    dir[m] /= r0;
                }
                acc += w * d / r0.powi(n as i32) * ray(&dir, r0);
            }
        }
    }
    acc
}

/// ∫ over the rectangle [rlo, rhi] of g(y)|y-x|^{-n-2s}, x outside it.
pub fn over_rect<G>(x: &[f64], rlo: &[f64], rhi: &[f64], s: f64, rule: &GaussRule, mut g: G) -> f64
where
    G: FnMut(&[f64]) -> f64,
{
    let n = x.len();
    if (0..n).any(|d| rhi[d] <= rlo[d]) {
        return 0.0;
    }
    // distance from x to the rectangle sets the grading scale
    let mut dist2 = 0.0;
    for d in 0..n {
        let c = x[d].clamp(rlo[d], rhi[d]);
        dist2 += (x[d] - c) * (x[d] - c);
    }
    let dist = dist2.sqrt().max(1e-300);
    let mut pts = vec![];
    let mut wts = vec![];
    for d in 0..n {
        let br = graded_breaks(rlo[d], rhi[d], x[d].clamp(rlo[d], rhi[d]), dist);
        let (mut xs, mut ws) = (vec![], vec![]);
        for w in br.windows(2) {
            rule.push_scaled(w[0], w[1], &mut xs, &mut ws);
        }
        pts.push(xs);
        wts.push(ws);
    }
    let counts: Vec<usize> = pts.iter().map(|p| p.len()).collect();
    let total: usize = counts.iter().product();
    let expo = -(n as f64 + 2.0 * s) / 2.0;
    let mut y = vec![0.0; n];
    let mut acc = 0.0;
    for flat in 0..total {
        let mut rem = flat;
        let mut w = 1.0;
        let mut r2 = 0.0;
        for d in 0..n {
            let i = rem % counts[d];
            rem /= counts[d];
            y[d] = pts[d][i];
            w *= wts[d][i];
            r2 += (y[d] - x[d]) * (y[d] - x[d]);
        }
        acc += w * g(&y) * r2.powf(expo);
    }
    acc
}

/// Pieces of the cube [x-ρ, x+ρ] lying outside the box [lo, hi].
pub fn cube_minus_box(x: &[f64], rho: f64, lo: &[f64], hi: &[f64]) -> Vec<(Vec<f64>, Vec<f64>)> {
    let n = x.len();
    let clo: Vec<f64> = x.iter().map(|v| v - rho).collect();
    let chi: Vec<f64> = x.iter().map(|v| v + rho).collect();
    let mut pieces = vec![];
    for k in 0..n {
        let mut base_lo = vec![0.0; n];
        let mut base_hi = vec![0.0; n];
        for j in 0..n {
            if j < k {
                base_lo[j] = clo[j].max(lo[j]);
                base_hi[j] = chi[j].min(hi[j]);
            } else {
                base_lo[j] = clo[j];
                base_hi[j] = chi[j];
            }
        }
        if clo[k] < lo[k] {
            let mut a = base_lo.clone();
            let mut b = base_hi.clone();
            a[k] = clo[k];
            b[k] = lo[k];
            pieces.push((a, b));
        }
        if chi[k] > hi[k] {
            let mut a = base_lo.clone();
            let mut b = base_hi.clone();
            a[k] = hi[k];
            b[k] = chi[k];
            pieces.push((a, b));
        }
    }
    pieces
        .into_iter()
        .filter(|(a, b)| (0..n).all(|d| b[d] > a[d]))
        .collect()
}

/// ∫_{r0}^∞ g(x + rθ) r^{-1-2s} dr for the grid's tail model.
pub fn tail_ray(u: &GridFunction, x: &[f64], dir: &[f64], r0: f64, s: f64, rule: &GaussRule) -> f64 {
    match &u.tail {
        TailModel::Constant(c) => c * radial_power(r0, f64::INFINITY, s),
        TailModel::ConstantPm1 { axis } => {
            let a = *axis;
            let mid = u.box_mid(a);
            let side = |r: f64| if x[a] + r * dir[a] < mid { -1.0 } else { 1.0 };
            let start = side(r0);
            if dir[a] != 0.0 {
                let rc = (mid - x[a]) / dir[a];
                if rc > r0 {
                    return start * radial_power(r0, rc, s) - start * radial_power(rc, f64::INFINITY, s);
                }
            }
            start * radial_power(r0, f64::INFINITY, s)
        }
        TailModel::Periodic => unreachable!("periodic grids have no exterior"),
        _ => {
            let mut y = vec![0.0; x.len()];
            radial_tail(r0, s, rule, |r| {
                let r = if r.is_finite() { r } else { 1e15 };
                for d in 0..x.len() {
                    y[d] = x[d] + r * dir[d];
                }
                u.tail_value(&y)
            })
        }
    }
}

/// Panel breaks along each axis where the tail model has discontinuities
/// or sharp features.
pub fn tail_breaks(u: &GridFunction) -> Vec<Vec<f64>> {
    let mut br = vec![vec![]; u.dim];
    match &u.tail {
        TailModel::ConstantPm1 { axis } => br[*axis].push(u.box_mid(*axis)),
        TailModel::Blend { axis, transition, .. } => {
            br[*axis].push(0.5 * (transition.origin + transition.end()));
        }
        _ => {}
    }
    br
}
