//! Quadrature building blocks: Gauss-Legendre rules, adaptive Simpson,
//! graded panel breaks and radial tail integrals for |y|^{-n-2s} kernels.

use crate::error::{Error, Result};

/// Gauss-Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = (n + 1) / 2;
        for i in 0..m {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussRule { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integrate `f` over [a, b].
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let c = 0.5 * (a + b);
        let r = 0.5 * (b - a);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(c + r * x);
        }
        acc * r
    }

    /// Composite rule over consecutive break points.
    pub fn integrate_panels<F: FnMut(f64) -> f64>(&self, breaks: &[f64], mut f: F) -> f64 {
        let mut acc = 0.0;
        for w in breaks.windows(2) {
            if w[1] > w[0] {
                acc += self.integrate(w[0], w[1], &mut f);
            }
        }
        acc
    }

    /// Append scaled nodes and weights for [a, b] to the output buffers.
    pub fn push_scaled(&self, a: f64, b: f64, xs: &mut Vec<f64>, ws: &mut Vec<f64>) {
        let c = 0.5 * (a + b);
        let r = 0.5 * (b - a);
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            xs.push(c + r * x);
            ws.push(w * r);
        }
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

const SIMPSON_DEPTH: u32 = 50;
const SIMPSON_MIN_SPLITS: u32 = 4;

/// Adaptive Simpson with absolute tolerance.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let mut evals = 3usize;
    let v = simpson_rec(&f, a, b, fa, fm, fb, whole, tol, SIMPSON_DEPTH, &mut evals)?;
    Ok(v)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    evals: &mut usize,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    *evals += 2;
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    // the first few levels always split, so symmetric samples cannot
    // fake convergence
    let floor = 1e-15 * (left + right).abs();
    if depth <= SIMPSON_DEPTH - SIMPSON_MIN_SPLITS && delta.abs() <= (15.0 * tol).max(floor) {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 || *evals > 2_000_000 {
        return Err(Error::Quadrature(format!(
            "adaptive Simpson did not converge on [{a}, {b}], last correction {delta:e}"
        )));
    }
    let l = simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, evals)?;
    let r = simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, evals)?;
    Ok(l + r)
}

/// Break points on [a, b] graded geometrically around `foot` with scale `d`.
///
/// Panel widths double away from the foot point, so an integrand with a
/// peak of width `d` at `foot` is resolved by a fixed rule per panel.
pub fn graded_breaks(a: f64, b: f64, foot: f64, d: f64) -> Vec<f64> {
    let mut pts = vec![a, b];
    let d = d.max(1e-12);
    if foot > a && foot < b {
        pts.push(foot);
    }
    let mut w = 0.5 * d;
    let span = (b - a).max(0.0);
    while w < 2.0 * span + d {
        for p in [foot - w, foot + w] {
            if p > a && p < b {
                pts.push(p);
            }
        }
        w *= 2.0;
    }
    pts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    pts.dedup_by(|x, y| (*x - *y).abs() <= 1e-14 * (1.0 + y.abs()));
    pts
}

/// Insert extra break points (discontinuity lines) into a sorted break list.
pub fn with_extra_breaks(mut breaks: Vec<f64>, extra: &[f64]) -> Vec<f64> {
    let (a, b) = (breaks[0], *breaks.last().unwrap());
    for &e in extra {
        if e > a && e < b {
            breaks.push(e);
        }
    }
    breaks.sort_by(|x, y| x.partial_cmp(y).unwrap());
    breaks.dedup_by(|x, y| (*x - *y).abs() <= 1e-14 * (1.0 + y.abs()));
    breaks
}

/// Radial integral ∫_{r0}^∞ g(r) r^{-1-2s} dr for a bounded g that settles
/// to a limit algebraically. The near part [r0, 64 r0] uses log-spaced
/// panels; the far part uses t = (r/r_far)^{-2s}, which maps the
/// algebraic approach of g onto a smooth function of t.
pub fn radial_tail<G: FnMut(f64) -> f64>(r0: f64, s: f64, rule: &GaussRule, mut g: G) -> f64 {
    let two_s = 2.0 * s;
    let r_far = 64.0 * r0;
    let mut acc = 0.0;
    // near part in u = ln r: dr r^{-1-2s} = e^{-2s u} du
    let (u0, u1) = (r0.ln(), r_far.ln());
    let panels = 6;
    let du = (u1 - u0) / panels as f64;
    for k in 0..panels {
        let a = u0 + du * k as f64;
        acc += rule.integrate(a, a + du, |u| g(u.exp()) * (-two_s * u).exp());
    }
    // far part
    let scale = r_far.powf(-two_s) / two_s;
    acc += scale * rule.integrate(0.0, 1.0, |t| {
        if t <= 0.0 {
            g(f64::INFINITY)
        } else {
            g(r_far * t.powf(-1.0 / two_s))
        }
    });
    acc
}

/// ∫_{a}^{b} r^{-1-2s} dr in closed form (b may be infinite).
pub fn radial_power(a: f64, b: f64, s: f64) -> f64 {
    let two_s = 2.0 * s;
    let fb = if b.is_infinite() { 0.0 } else { b.powf(-two_s) };
    (a.powf(-two_s) - fb) / two_s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_rule_integrates_polynomials_exactly() {
        let rule = GaussRule::new(8);
        // degree 15 is exact
        let v = rule.integrate(-1.0, 2.0, |x| x.powi(15) + 3.0 * x.powi(4));
        let exact = (2f64.powi(16) - 1.0) / 16.0 + 3.0 * (32.0 + 1.0) / 5.0;
        assert!((v - exact).abs() < 1e-10 * exact.abs());
        let wsum: f64 = rule.weights.iter().sum();
        assert!((wsum - 2.0).abs() < 1e-14);
    }

    #[test]
    fn simpson_matches_closed_form() {
        let v = adaptive_simpson(|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-12).unwrap();
        assert!((v - 2.0).abs() < 1e-10);
    }

    #[test]
    fn radial_tail_of_constant_is_closed_form() {
        let rule = GaussRule::new(16);
        for &s in &[0.1, 0.25, 0.5, 0.9] {
            let v = radial_tail(0.3, s, &rule, |_| 1.0);
            let exact = radial_power(0.3, f64::INFINITY, s);
            assert!((v - exact).abs() < 1e-12 * exact, "s={s}: {v} vs {exact}");
        }
    }

    #[test]
    fn radial_tail_resolves_algebraic_approach() {
        // g = 1 - 1/(1+r)^{2s}; exact value from the closed-form pieces
        // checked against adaptive Simpson on a mapped variable.
        let s = 0.25;
        let rule = GaussRule::new(16);
        let v = radial_tail(0.5, s, &rule, |r| {
            if r.is_infinite() {
                1.0
            } else {
                1.0 - (1.0 + r).powf(-0.5)
            }
        });
        // reference: r = 0.5 / w², so r^{-1.5} |dr| = 0.5^{-1.5} dw
        let refv = adaptive_simpson(
            |w: f64| {
                if w <= 0.0 {
                    return 0.5f64.powf(-1.5);
                }
                let r = 0.5 / (w * w);
                let g = 1.0 - (1.0 + r).powf(-0.5);
                g * 0.5f64.powf(-1.5)
            },
            0.0,
            1.0,
            1e-12,
        )
        .unwrap();
        assert!((v - refv).abs() < 1e-8, "{v} vs {refv}");
    }

    #[test]
    fn graded_breaks_cover_interval() {
        let b = graded_breaks(-3.0, 5.0, 0.2, 0.01);
        assert_eq!(b[0], -3.0);
        assert_eq!(*b.last().unwrap(), 5.0);
        assert!(b.windows(2).all(|w| w[1] > w[0]));
        assert!(b.contains(&0.2));
    }
}
