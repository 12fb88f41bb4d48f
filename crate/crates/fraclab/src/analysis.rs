//! Verification battery: stability form, instability of the zero state,
//! G-balance, sliding, constrained minimality, competitor gluing,
//! blow-down and 1D fitting.

use crate::energy::{bump, DifferenceEvaluator};
use crate::error::{Error, Result};
use crate::extension::{dirichlet, extend_zero_faces, dirichlet_bilinear, dirichlet_diagonal, dirichlet_gradient, Edge, ExtensionField};
use crate::fracop::{GridFunction, Profile1d, TailModel};
use crate::linalg::dot;
use crate::model::Nonlinearity;
use crate::quad::adaptive_simpson;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Least-squares line y = a x + b through the points; returns (a, b).
pub fn fit_line(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let a = sxy / sxx;
    (a, my - a * mx)
}

/// Minimizer of a unimodal function on [a, b] by golden-section search.
pub fn golden_min<F: FnMut(f64) -> f64>(mut a: f64, mut b: f64, iters: usize, mut f: F) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

// ---------------------------------------------------------------------------
// Stability form

/// Second variation of λD(U) + Σ hⁿ F(U(·, 0)) at the extension of u.
#[derive(Debug, Clone)]
pub struct StabilityForm {
    pub u: GridFunction,
    pub s: f64,
    pub nl: Nonlinearity,
    /// Weight of the Dirichlet part: the reciprocal of the calibrated ratio
    /// D(E_φ)/K(φ), so that λD matches the Gagliardo energy.
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FormValue {
    pub value: f64,
    /// 2λD(ζ).
    pub kinetic: f64,
    /// Σ hⁿ F″(u) ζ(·, 0)².
    pub potential: f64,
    /// 2λD(ζ) + Σ hⁿ |F″(u)| ζ(·, 0)².
    pub norm: f64,
}

impl FormValue {
    pub fn normalized(&self) -> f64 {
        if self.norm == 0.0 {
            0.0
        } else {
            self.value / self.norm
        }
    }
}

impl StabilityForm {
    pub fn new(u: GridFunction, s: f64, nl: Nonlinearity, calibration_ratio: f64) -> Self {
        StabilityForm { u, s, nl, lambda: 1.0 / calibration_ratio }
    }

    fn check(&self, zeta: &ExtensionField) -> Result<Vec<f64>> {
        if zeta.base.dim != self.u.dim {
            return Err(Error::Domain("test field and solution differ in dimension".into()));
        }
        if !zeta.vanishes_on_faces() {
            return Err(Error::Contract("test field must vanish on the lateral and top faces".into()));
        }
        Ok((0..zeta.nx())
            .map(|i| self.nl.potential_second(self.u.sample(&zeta.mesh.x_node(i))))
            .collect())
    }

    /// Symmetric bilinear form B(ζ, η) with B(ζ, ζ) the form value.
    pub fn bilinear(&self, zeta: &ExtensionField, eta: &ExtensionField) -> Result<f64> {
        let w = self.check(zeta)?;
        self.check(eta)?;
        if zeta.values.len() != eta.values.len() {
            return Err(Error::Domain("test fields live on different meshes".into()));
        }
        let hn = zeta.base.spacing.powi(zeta.base.dim as i32);
        let d = dirichlet_bilinear(&zeta.full_edges(), &zeta.values, &eta.values);
        let p: f64 = (0..zeta.nx()).map(|i| hn * w[i] * zeta.values[i] * eta.values[i]).sum();
        Ok(2.0 * self.lambda * d + p)
    }
}

pub fn stability_form_eval(sf: &StabilityForm, zeta: &ExtensionField) -> Result<FormValue> {
    let w = sf.check(zeta)?;
    let hn = zeta.base.spacing.powi(zeta.base.dim as i32);
    let kinetic = 2.0 * sf.lambda * dirichlet(&zeta.full_edges(), &zeta.values);
    let mut potential = 0.0;
    let mut abs = 0.0;
    for i in 0..zeta.nx() {
        let z2 = zeta.values[i] * zeta.values[i];
        potential += hn * w[i] * z2;
        abs += hn * w[i].abs() * z2;
    }
    Ok(FormValue { value: kinetic + potential, kinetic, potential, norm: kinetic + abs })
}

/// Smooth cutoff: 1 on |x|_∞ ≤ a, 0 beyond b, C² in between.
pub fn cutoff(x: &[f64], a: f64, b: f64) -> f64 {
    x.iter()
        .map(|&t| {
            let q = ((t.abs() - a) / (b - a)).clamp(0.0, 1.0);
            1.0 - q * q * q * (10.0 - 15.0 * q + 6.0 * q * q)
        })
        .product()
}

/// Central difference of u along `axis`, one-sided at the box edges.
pub fn discrete_derivative(u: &GridFunction, axis: usize) -> GridFunction {
    let st = u.strides()[axis];
    let n = u.shape[axis];
    let h = u.spacing;
    let vals = (0..u.len())
        .map(|f| {
            let k = u.index(f)[axis];
            if k == 0 {
                (u.values[f + st] - u.values[f]) / h
            } else if k + 1 == n {
                (u.values[f] - u.values[f - st]) / h
            } else {
                (u.values[f + st] - u.values[f - st]) / (2.0 * h)
            }
        })
        .collect();
    u.with_values(vals).with_tail(TailModel::Constant(0.0))
}

/// Test field from the translation mode: χ ∂_axis u on the trace, cut off
/// between |x|_∞ = a and b, filled in with zero lateral and top data.
pub fn null_mode(u: &GridFunction, axis: usize, a: f64, b: f64, s: f64, r: f64, levels: usize) -> Result<ExtensionField> {
    if !(0.0 < a && a < b && b <= r) {
        return Err(Error::Domain("need 0 < a < b ≤ R for the cutoff".into()));
    }
    let du = discrete_derivative(u, axis);
    let vals = (0..u.len()).map(|i| du.values[i] * cutoff(&u.node(i), a, b)).collect();
    extend_zero_faces(&du.with_values(vals), s, r, levels)
}

// ---------------------------------------------------------------------------
// Instability of the zero state

#[derive(Debug, Clone, PartialEq)]
pub struct RescalingRow {
    pub eps: f64,
    pub value: f64,
    pub kinetic: f64,
    pub potential: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RescalingTable {
    pub rows: Vec<RescalingRow>,
    /// Fitted log-log slope of the kinetic term (expected 2s - 1 in 1D).
    pub kinetic_exponent: f64,
    /// Fitted log-log slope of |potential term| (expected -1 in 1D).
    pub potential_exponent: f64,
}

/// The form at u ≡ 0 on ψ_ε(x, z) = ψ(εx, εz), for each ε.
pub fn rescaling_instability_test(
    s: f64,
    psi: &ExtensionField,
    eps_list: &[f64],
    nl: &Nonlinearity,
    lambda: f64,
) -> Result<RescalingTable> {
    if (psi.s - s).abs() > 1e-15 {
        return Err(Error::Domain("test field was built for another s".into()));
    }
    if !psi.vanishes_on_faces() {
        return Err(Error::Contract("test field must vanish on the lateral and top faces".into()));
    }
    let f2 = nl.potential_second(0.0);
    let rows: Vec<RescalingRow> = eps_list
        .iter()
        .map(|&eps| {
            let pe = psi.rescaled(eps)?;
            let hn = pe.base.spacing.powi(pe.base.dim as i32);
            let kinetic = 2.0 * lambda * dirichlet(&pe.full_edges(), &pe.values);
            let potential = hn * f2 * pe.trace().iter().map(|v| v * v).sum::<f64>();
            Ok(RescalingRow { eps, value: kinetic + potential, kinetic, potential })
        })
        .collect::<Result<_>>()?;
    let kp: Vec<(f64, f64)> = rows.iter().map(|r| (r.eps.ln(), r.kinetic.ln())).collect();
    let pp: Vec<(f64, f64)> = rows.iter().map(|r| (r.eps.ln(), r.potential.abs().ln())).collect();
    let (kinetic_exponent, potential_exponent) = if rows.len() >= 2 {
        (fit_line(&kp).0, fit_line(&pp).0)
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(RescalingTable { rows, kinetic_exponent, potential_exponent })
}

// ---------------------------------------------------------------------------
// G-balance

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// Connections from -1 to 0.
    Minus,
    /// Connections from 0 to 1.
    Plus,
}

/// ∫ f over the branch interval. A nonzero value rules out a monotone
/// connection on that branch.
pub fn g_balance(nl: &Nonlinearity, branch: Branch) -> Result<f64> {
    let (a, b) = match branch {
        Branch::Minus => (-1.0, 0.0),
        Branch::Plus => (0.0, 1.0),
    };
    adaptive_simpson(|t| nl.f(t), a, b, 1e-12)
}

// ---------------------------------------------------------------------------
// Sliding

/// u(x + k e_axis) at the nodes of u, with the mask of nodes whose shifted
/// point stays on the sampled node hull.
pub fn shift_with_tail(u: &GridFunction, k: f64, axis: usize) -> (Vec<f64>, Vec<bool>) {
    if k == 0.0 {
        return (u.values.clone(), vec![true; u.len()]);
    }
    let top = u.origin[axis] + u.spacing * (u.shape[axis] - 1) as f64;
    let mut vals = Vec::with_capacity(u.len());
    let mut inside = Vec::with_capacity(u.len());
    for f in 0..u.len() {
        let mut x = u.node(f);
        x[axis] += k;
        inside.push(x[axis] <= top + 1e-12 * u.spacing);
        vals.push(u.sample(&x));
    }
    (vals, inside)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlidingStep {
    pub k: f64,
    pub dominated: bool,
    /// min (w_k - w_o) over compared nodes.
    pub min_gap: f64,
    pub argmin: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlidingReport {
    /// Largest k on the grid with w_k > w_o; None when no k dominates.
    pub k_bar: Option<f64>,
    /// Infimum of the dominated k reached by decreasing from k_bar.
    pub k_star: Option<f64>,
    /// (k, point) where domination first fails below k_star.
    pub touching: Option<(f64, Vec<f64>)>,
    pub steps: Vec<SlidingStep>,
}

/// Slide u along its last axis against w_o.
///
/// Nodes are compared only where x + k e_n stays on the node hull, where
/// w_k is sampled rather than taken from the tail model.
pub fn sliding_verify(u: &GridFunction, w_o: &GridFunction, k_grid: &[f64]) -> Result<SlidingReport> {
    if u.shape != w_o.shape || u.spacing != w_o.spacing || u.origin != w_o.origin {
        return Err(Error::Domain("u and w_o must share one grid".into()));
    }
    if k_grid.iter().any(|&k| k < 0.0) {
        return Err(Error::Domain("slide amounts must be nonnegative".into()));
    }
    let axis = u.dim - 1;
    let mut ks = k_grid.to_vec();
    ks.sort_by(|a, b| a.total_cmp(b));
    ks.dedup();
    let steps: Vec<SlidingStep> = ks
        .par_iter()
        .map(|&k| {
            let (w, inside) = shift_with_tail(u, k, axis);
            let mut min_gap = f64::INFINITY;
            let mut arg = 0;
            for f in 0..u.len() {
                if inside[f] {
                    let g = w[f] - w_o.values[f];
                    if g < min_gap {
                        min_gap = g;
                        arg = f;
                    }
                }
            }
            SlidingStep { k, dominated: min_gap > 0.0, min_gap, argmin: u.node(arg) }
        })
        .collect();
    let Some(bar) = steps.iter().rposition(|s| s.dominated) else {
        return Ok(SlidingReport { k_bar: None, k_star: None, touching: None, steps });
    };
    let mut low = bar;
    while low > 0 && steps[low - 1].dominated {
        low -= 1;
    }
    let (k_star, touching) = if low == 0 {
        (Some(steps[0].k), None)
    } else {
        let below = &steps[low - 1];
        // sliding down to k = 0 with w_0 ≥ w_o is the touching-free case
        if below.k == 0.0 && low == 1 && below.min_gap >= 0.0 {
            (Some(0.0), None)
        } else {
            (Some(steps[low].k), Some((below.k, below.argmin.clone())))
        }
    };
    Ok(SlidingReport { k_bar: Some(steps[bar].k), k_star, touching, steps })
}

// ---------------------------------------------------------------------------
// Constrained minimality

/// True when under ≤ u + φ ≤ over at every node (profiles in x_1).
pub fn admissible(u: &GridFunction, under: &GridFunction, over: &GridFunction, phi: &GridFunction) -> bool {
    (0..u.len()).all(|f| {
        let x = u.node(f);
        let v = u.values[f] + phi.values[f];
        let x1 = [x[0]];
        v >= under.sample(&x1) && v <= over.sample(&x1)
    })
}

/// Largest t ≤ 1 with u + tφ in [under, over].
fn admissible_scale(u: &GridFunction, under: &GridFunction, over: &GridFunction, phi: &[f64]) -> f64 {
    let mut t: f64 = 1.0;
    for f in 0..u.len() {
        let x1 = [u.node(f)[0]];
        let (lo, hi) = (under.sample(&x1), over.sample(&x1));
        let p = phi[f];
        if p > 0.0 {
            t = t.min(((hi - u.values[f]) / p).max(0.0));
        } else if p < 0.0 {
            t = t.min(((lo - u.values[f]) / p).max(0.0));
        }
    }
    t
}

/// Random smooth φ supported in B_R: a sum of tensor bumps.
pub fn random_perturbation(u: &GridFunction, r: f64, rng: &mut ChaCha8Rng) -> GridFunction {
    let terms = rng.gen_range(1..=4);
    let mut vals = vec![0.0; u.len()];
    for _ in 0..terms {
        let c: Vec<f64> = (0..u.dim).map(|_| rng.gen_range(-0.6 * r..0.6 * r)).collect();
        let room = c.iter().fold(r, |m, x| m.min(r - x.abs()));
        let w = rng.gen_range(0.3 * room..0.95 * room);
        let a = rng.gen_range(-1.0..1.0);
        for (f, v) in vals.iter_mut().enumerate() {
            let x = u.node(f);
            let y: Vec<f64> = x.iter().zip(&c).map(|(a, b)| a - b).collect();
            *v += a * bump(&y, w);
        }
    }
    u.with_values(vals).with_tail(TailModel::Constant(0.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimalityReport {
    pub trials: usize,
    /// Draws that could not be scaled into the admissible range.
    pub rejected: usize,
    pub min_difference: f64,
    pub values: Vec<f64>,
}

/// Draws until a usable perturbation appears (at most 20 attempts).
fn draw_admissible(
    u: &GridFunction,
    under: &GridFunction,
    over: &GridFunction,
    r: f64,
    rng: &mut ChaCha8Rng,
) -> (Option<GridFunction>, usize) {
    let mut rejected = 0;
    for _ in 0..20 {
        let phi = random_perturbation(u, r, rng);
        let t = admissible_scale(u, under, over, &phi.values);
        if t < 1e-6 {
            rejected += 1;
            continue;
        }
        let scale = t * rng.gen_range(0.25..1.0);
        let phi = phi.with_values(phi.values.iter().map(|v| v * scale).collect());
        if !admissible(u, under, over, &phi) {
            rejected += 1;
            continue;
        }
        return (Some(phi), rejected);
    }
    (None, rejected)
}

/// Full functional differences at u for random admissible φ in B_R.
///
/// Trial i draws from ChaCha8 seeded with seed + i, so the report does not
/// depend on scheduling.
#[allow(clippy::too_many_arguments)]
pub fn constrained_minimality_test(
    u: &GridFunction,
    under: &GridFunction,
    over: &GridFunction,
    s: f64,
    r: f64,
    trials: usize,
    nl: &Nonlinearity,
    seed: u64,
) -> Result<MinimalityReport> {
    let eval = DifferenceEvaluator::new(u, s)?;
    let draws: Vec<(Option<GridFunction>, usize)> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            draw_admissible(u, under, over, r, &mut rng)
        })
        .collect();
    let rejected = draws.iter().map(|d| d.1).sum();
    let values: Vec<f64> = draws
        .iter()
        .filter_map(|d| d.0.as_ref())
        .map(|phi| eval.full(phi, r, nl).map(|rep| rep.value))
        .collect::<Result<_>>()?;
    let min_difference = values.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(MinimalityReport { trials: values.len(), rejected, min_difference, values })
}

// ---------------------------------------------------------------------------
// Competitor gluing

/// λD(U) + Σ hⁿ F(U(·, 0)): the local energy on the mesh.
#[derive(Debug, Clone)]
pub struct LocalFunctional {
    pub lambda: f64,
    pub nl: Nonlinearity,
}

impl LocalFunctional {
    pub fn energy(&self, u: &ExtensionField) -> f64 {
        let hn = u.base.spacing.powi(u.base.dim as i32);
        self.lambda * dirichlet(&u.full_edges(), &u.values)
            + u.trace().iter().map(|&v| hn * self.nl.potential(v)).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimizerOutcome {
    pub field: ExtensionField,
    pub iterations: usize,
    pub gradient_norm: f64,
}

/// Jacobi-preconditioned nonlinear CG (Polak–Ribière+) on the local energy,
/// with lateral and top values fixed and the trace free. Line searches are
/// exact: the energy along a line is a polynomial in the step.
pub fn local_minimizer(init: &ExtensionField, lf: &LocalFunctional, tol: f64, max_iter: usize) -> Result<MinimizerOutcome> {
    let mesh = &init.mesh;
    let nx = mesh.nx();
    let hn = init.base.spacing.powi(init.base.dim as i32);
    let edges = init.full_edges();
    let free: Vec<bool> = (0..mesh.len())
        .map(|f| if f < nx { !mesh.is_lateral(f) } else { !mesh.is_fixed(f) })
        .collect();
    let ddiag = dirichlet_diagonal(&edges, mesh.len());
    let mut u = init.values.clone();
    let grad = |u: &[f64]| -> Vec<f64> {
        let mut g = dirichlet_gradient(&edges, u);
        for (k, gk) in g.iter_mut().enumerate() {
            *gk *= lf.lambda;
            if k < nx {
                *gk -= hn * lf.nl.f(u[k]);
            }
            if !free[k] {
                *gk = 0.0;
            }
        }
        g
    };
    let precond = |u: &[f64], g: &[f64]| -> Vec<f64> {
        (0..g.len())
            .map(|k| {
                let mut d = lf.lambda * ddiag[k];
                if k < nx {
                    d += hn * lf.nl.f_prime(u[k]).abs();
                }
                if free[k] && d > 0.0 {
                    g[k] / d
                } else {
                    0.0
                }
            })
            .collect()
    };
    let mut g = grad(&u);
    let mut z = precond(&u, &g);
    let mut p: Vec<f64> = z.iter().map(|v| -v).collect();
    let mut gz = dot(&g, &z);
    for it in 0..max_iter {
        let gn = z.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gn <= tol {
            return Ok(MinimizerOutcome { field: init.with_values(u), iterations: it, gradient_norm: gn });
        }
        let mut slope = dot(&g, &p);
        if slope >= 0.0 {
            p = z.iter().map(|v| -v).collect();
            slope = dot(&g, &p);
        }
        let t = line_search(&edges, lf, &u, &p, nx, hn, slope);
        for k in 0..u.len() {
            u[k] += t * p[k];
        }
        let g_new = grad(&u);
        let z_new = precond(&u, &g_new);
        let gz_new = dot(&g_new, &z_new);
        let beta = ((gz_new - dot(&g, &z_new)) / gz).max(0.0);
        let beta = if (it + 1) % 200 == 0 { 0.0 } else { beta };
        for k in 0..u.len() {
            p[k] = -z_new[k] + beta * p[k];
        }
        g = g_new;
        z = z_new;
        gz = gz_new;
    }
    let gn = z.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Err(Error::NonConvergence { iterations: max_iter, residual: gn, history: vec![] })
}

/// First critical point of t ↦ E(u + t p) on t > 0.
fn line_search(edges: &[Edge], lf: &LocalFunctional, u: &[f64], p: &[f64], nx: usize, hn: f64, slope: f64) -> f64 {
    let dup = dirichlet_bilinear(edges, u, p);
    let dpp = dirichlet(edges, p);
    let deriv = |t: f64| {
        let mut d = lf.lambda * (2.0 * dup + 2.0 * t * dpp);
        for k in 0..nx {
            if p[k] != 0.0 {
                d -= hn * lf.nl.f(u[k] + t * p[k]) * p[k];
            }
        }
        d
    };
    if slope >= 0.0 {
        return 0.0;
    }
    let mut hi = 1.0;
    let mut grow = 0;
    while deriv(hi) < 0.0 && grow < 60 {
        hi *= 2.0;
        grow += 1;
    }
    let mut lo = 0.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if deriv(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    /// E_u + Ψ above the over-profile extension.
    Above,
    /// E_u + Ψ below the under-profile extension.
    Below,
    Middle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LedgerRow {
    pub region: &'static str,
    pub field: &'static str,
    pub energy: f64,
    pub bound: f64,
    /// energy - bound; the chain holds when every slack is ≥ -1e-8.
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GluedCompetitor {
    pub alpha: ExtensionField,
    pub beta: ExtensionField,
    pub gamma: ExtensionField,
    /// Nodal classification of E_u + Ψ.
    pub regions: Vec<Region>,
    /// |E(E_u + Ψ) - E_above(α) - E_below(γ) - E_middle(β)|.
    pub additivity_error: f64,
    pub ledger: Vec<LedgerRow>,
}

impl GluedCompetitor {
    pub fn min_slack(&self) -> f64 {
        self.ledger.iter().skip(1).map(|r| r.slack).fold(f64::INFINITY, f64::min)
    }

    pub fn ledger_csv(&self) -> String {
        let mut out = String::from("region,field,energy,bound,slack\n");
        for r in &self.ledger {
            out.push_str(&format!("{},{},{:.15e},{:.15e},{:.6e}\n", r.region, r.field, r.energy, r.bound, r.slack));
        }
        out
    }
}

/// Energies of the piecewise linear fields α, β, γ, W, O, U split by region.
///
/// Along each edge, W - O and W - U are linear, so the regions cut the
/// edge at their zeros and each field is linear on every piece.
#[derive(Debug, Default, Clone, Copy)]
struct RegionalKinetic {
    // [field][region] with fields W, O, U, α, β, γ and regions above, below, middle
    e: [[f64; 3]; 6],
}

fn regional_kinetic(edges: &[Edge], w: &[f64], o: &[f64], un: &[f64]) -> RegionalKinetic {
    let mut acc = RegionalKinetic::default();
    for e in edges {
        let (a, b) = (e.a, e.b);
        let (dw, dox, dux) = (w[b] - w[a], o[b] - o[a], un[b] - un[a]);
        let (oa, ob) = (w[a] - o[a], w[b] - o[b]);
        let (ua, ub) = (w[a] - un[a], w[b] - un[b]);
        let mut cuts = vec![0.0, 1.0];
        for (p, q) in [(oa, ob), (ua, ub)] {
            if (p > 0.0) != (q > 0.0) && p != q {
                let t = p / (p - q);
                if t > 0.0 && t < 1.0 {
                    cuts.push(t);
                }
            }
        }
        cuts.sort_by(|x, y| x.total_cmp(y));
        for seg in cuts.windows(2) {
            let len = seg[1] - seg[0];
            if len <= 0.0 {
                continue;
            }
            let m = 0.5 * (seg[0] + seg[1]);
            let above = oa + m * (ob - oa) > 0.0;
            let below = ua + m * (ub - ua) < 0.0;
            let r = if above { 0 } else if below { 1 } else { 2 };
            let slopes = [
                dw,
                dox,
                dux,
                if above { dw } else { dox },
                match r {
                    0 => dox,
                    1 => dux,
                    _ => dw,
                },
                if below { dw } else { dux },
            ];
            for (fi, sl) in slopes.iter().enumerate() {
                acc.e[fi][r] += e.w * len * sl * sl;
            }
        }
    }
    acc
}

/// Clamp E_u + Ψ against the profile extensions and account for the chain
/// E(W) = E(α) + E(β) + E(γ) - E(O) - E(U) ≥ E(β) ≥ E(E_u).
///
/// `e_u` should be a local minimizer of `lf` (see `local_minimizer`), and
/// `e_under`/`e_over` minimizers above and below which α and γ live.
pub fn glue_competitors(
    e_u: &ExtensionField,
    psi: &ExtensionField,
    e_under: &ExtensionField,
    e_over: &ExtensionField,
    lf: &LocalFunctional,
) -> Result<GluedCompetitor> {
    let len = e_u.values.len();
    if [psi, e_under, e_over].iter().any(|f| f.values.len() != len || f.mesh != e_u.mesh) {
        return Err(Error::Domain("fields must share one mesh".into()));
    }
    if e_under.values.iter().zip(&e_over.values).any(|(a, b)| a > b) {
        return Err(Error::Data("under-profile extension exceeds the over-profile extension".into()));
    }
    if !psi.vanishes_on_faces() {
        return Err(Error::Contract("Psi must vanish on the lateral and top faces".into()));
    }
    let w: Vec<f64> = e_u.values.iter().zip(&psi.values).map(|(a, b)| a + b).collect();
    let (o, un) = (&e_over.values, &e_under.values);
    let regions: Vec<Region> = (0..len)
        .map(|k| {
            if w[k] > o[k] {
                Region::Above
            } else if w[k] < un[k] {
                Region::Below
            } else {
                Region::Middle
            }
        })
        .collect();
    let alpha: Vec<f64> = (0..len).map(|k| w[k].max(o[k])).collect();
    let gamma: Vec<f64> = (0..len).map(|k| w[k].min(un[k])).collect();
    let beta: Vec<f64> = (0..len).map(|k| w[k].clamp(un[k], o[k])).collect();

    let edges = e_u.full_edges();
    let rk = regional_kinetic(&edges, &w, o, un);
    let hn = e_u.base.spacing.powi(e_u.base.dim as i32);
    let nx = e_u.nx();
    let fpot = |v: &[f64], r: Option<Region>| -> f64 {
        (0..nx)
            .filter(|&k| r.is_none_or(|rr| regions[k] == rr))
            .map(|k| hn * lf.nl.potential(v[k]))
            .sum()
    };
    let lam = lf.lambda;
    let total = |fi: usize, v: &[f64]| lam * rk.e[fi].iter().sum::<f64>() + fpot(v, None);
    let e_w = total(0, &w);
    let e_o = total(1, o);
    let e_un = total(2, un);
    let e_alpha = total(3, &alpha);
    let e_beta = total(4, &beta);
    let e_gamma = total(5, &gamma);
    let e_eu = lf.energy(e_u);
    let regional = lam * (rk.e[3][0] + rk.e[5][1] + rk.e[4][2])
        + fpot(&alpha, Some(Region::Above))
        + fpot(&gamma, Some(Region::Below))
        + fpot(&beta, Some(Region::Middle));
    let additivity_error = (e_w - regional).abs();
    let identity = e_alpha + e_beta + e_gamma - e_o - e_un;
    let ledger = vec![
        LedgerRow { region: "all", field: "E_u+Psi", energy: e_w, bound: identity, slack: -(e_w - identity).abs() },
        LedgerRow { region: "region1", field: "alpha", energy: e_alpha, bound: e_o, slack: e_alpha - e_o },
        LedgerRow { region: "region2", field: "gamma", energy: e_gamma, bound: e_un, slack: e_gamma - e_un },
        LedgerRow { region: "middle", field: "beta", energy: e_beta, bound: e_eu, slack: e_beta - e_eu },
        LedgerRow { region: "all", field: "final", energy: e_w, bound: e_eu, slack: e_w - e_eu },
    ];
    Ok(GluedCompetitor {
        alpha: e_u.with_values(alpha),
        beta: e_u.with_values(beta),
        gamma: e_u.with_values(gamma),
        regions,
        additivity_error,
        ledger,
    })
}

/// 2D field U(x_1, x_2, z) = U_1(x_2, z) from a 1D field on [-R, R].
pub fn tensorize(e: &ExtensionField) -> Result<ExtensionField> {
    if e.base.dim != 1 {
        return Err(Error::Domain("tensorize needs a 1D field".into()));
    }
    let m = e.nx();
    let trace = Profile1d {
        origin: e.base.origin[0],
        spacing: e.base.spacing,
        values: e.trace().to_vec(),
        left: e.trace()[0],
        right: e.trace()[m - 1],
    };
    let tail = TailModel::Blend {
        axis: 1,
        under: Profile1d::constant(trace.left),
        over: Profile1d::constant(trace.right),
        transition: trace,
    };
    let o = e.base.origin[0];
    let base = GridFunction::new(
        vec![m, m],
        e.base.spacing,
        vec![o, o],
        (0..m * m).map(|f| e.trace()[f % m]).collect(),
        tail,
    )?;
    let values = (0..e.values.len() / m)
        .flat_map(|j| (0..m * m).map(move |f| (j, f % m)))
        .map(|(j, k)| e.values[j * m + k])
        .collect();
    ExtensionField::from_parts(base, e.s, e.r, e.zmesh.clone(), values)
}

/// Random smooth Ψ in (x, z) vanishing on the lateral and top faces.
pub fn random_psi(template: &ExtensionField, amplitude: f64, rng: &mut ChaCha8Rng) -> ExtensionField {
    let mesh = &template.mesh;
    let nx = mesh.nx();
    let r = template.r;
    let full = mesh.full_region();
    let terms = rng.gen_range(1..=3);
    let mut vals = vec![0.0; mesh.len()];
    for _ in 0..terms {
        let c: Vec<f64> = (0..mesh.dim)
            .map(|d| {
                let mid = 0.5 * (full.lo[d] + full.hi[d]);
                let half = 0.5 * (full.hi[d] - full.lo[d]);
                mid + rng.gen_range(-0.4 * half..0.4 * half)
            })
            .collect();
        let room = (0..mesh.dim).fold(f64::INFINITY, |m, d| m.min(c[d] - full.lo[d]).min(full.hi[d] - c[d]));
        let w = rng.gen_range(0.3 * room..0.9 * room);
        let zw = rng.gen_range(0.2 * r..0.9 * r);
        let a = rng.gen_range(-amplitude..amplitude);
        for (f, v) in vals.iter_mut().enumerate() {
            let x = mesh.x_node(f % nx);
            let y: Vec<f64> = x.iter().zip(&c).map(|(p, q)| p - q).collect();
            *v += a * bump(&y, w) * bump(&[mesh.z[f / nx]], zw);
        }
    }
    for (f, v) in vals.iter_mut().enumerate() {
        if (f >= nx && mesh.is_fixed(f)) || (f < nx && mesh.is_lateral(f)) {
            *v = 0.0;
        }
    }
    template.with_values(vals)
}

// ---------------------------------------------------------------------------
// Blow-down and 1D fitting

/// Unit vector at angle θ (degrees) in 2D.
fn unit2(deg: f64) -> Vec<f64> {
    let t = deg.to_radians();
    vec![t.cos(), t.sin()]
}

/// Unit vector from polar and azimuthal angles (degrees) in 3D.
fn unit3(theta: f64, phi: f64) -> Vec<f64> {
    let (t, p) = (theta.to_radians(), phi.to_radians());
    vec![t.sin() * p.cos(), t.sin() * p.sin(), t.cos()]
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepFit {
    pub omega: Vec<f64>,
    pub c: f64,
    pub l1: f64,
    /// Index of the best direction on the coarse grid.
    pub coarse_index: usize,
}

/// CDF at z of a sum of independent uniforms on [-a_i, a_i].
fn uniform_sum_cdf(z: f64, half_widths: &[f64]) -> f64 {
    let amax = half_widths.iter().cloned().fold(0.0, f64::max);
    let a: Vec<f64> = half_widths.iter().cloned().filter(|&w| w > 1e-9 * amax).collect();
    let total: f64 = a.iter().sum();
    if z <= -total {
        return if a.is_empty() && z == 0.0 { 0.5 } else { 0.0 };
    }
    if z >= total {
        return 1.0;
    }
    let n = a.len();
    let mut acc = 0.0;
    for mask in 0..(1usize << n) {
        let mut shift = 0.0;
        let mut sign = 1.0;
        for (i, ai) in a.iter().enumerate() {
            if mask & (1 << i) == 0 {
                shift += ai;
            } else {
                shift -= ai;
                sign = -sign;
            }
        }
        acc += sign * (z + shift).max(0.0).powi(n as i32);
    }
    let fact: f64 = (1..=n).map(|k| k as f64).product();
    let vol: f64 = a.iter().map(|ai| 2.0 * ai).product();
    (acc / (fact * vol)).clamp(0.0, 1.0)
}

/// ∫ |ū - sign(ω·x - c)| with ū the cellwise-constant reconstruction of u.
/// Exact per cell, so the distance is continuous in (ω, c).
pub fn l1_to_step(u: &GridFunction, omega: &[f64], c: f64) -> f64 {
    let hn = u.spacing.powi(u.dim as i32);
    let half: Vec<f64> = omega.iter().map(|w| 0.5 * u.spacing * w.abs()).collect();
    (0..u.len())
        .map(|f| {
            let x = u.node(f);
            let t: f64 = x.iter().zip(omega).map(|(a, b)| a * b).sum::<f64>() - c;
            let below = uniform_sum_cdf(-t, &half);
            let v = u.values[f];
            hn * ((1.0 - below) * (v - 1.0).abs() + below * (v + 1.0).abs())
        })
        .sum()
}

pub fn best_offset(u: &GridFunction, omega: &[f64]) -> (f64, f64) {
    let (lo, hi) = u.box_bounds();
    let reach: f64 = (0..u.dim).map(|d| lo[d].abs().max(hi[d].abs())).map(|v| v * v).sum::<f64>().sqrt() + u.spacing;
    golden_min(-reach, reach, 45, |c| l1_to_step(u, omega, c))
}

/// Best step function sign(ω·x - c) in L¹ on the sampled window.
pub fn best_step(u: &GridFunction) -> StepFit {
    let eval = |omega: &Vec<f64>| {
        let (c, l1) = best_offset(u, omega);
        (c, l1)
    };
    match u.dim {
        1 => {
            let cands = [vec![1.0], vec![-1.0]];
            let fits: Vec<(f64, f64)> = cands.iter().map(eval).collect();
            let k = if fits[0].1 <= fits[1].1 { 0 } else { 1 };
            StepFit { omega: cands[k].clone(), c: fits[k].0, l1: fits[k].1, coarse_index: k }
        }
        2 => {
            let coarse: Vec<f64> = (0..360)
                .into_par_iter()
                .map(|k| eval(&unit2(k as f64)).1)
                .collect();
            let k = argmin(&coarse);
            let f = |t: f64| eval(&unit2(t)).1;
            let (theta, fmin) = golden_min(k as f64 - 1.0, k as f64 + 1.0, 40, f);
            let omega = unit2(plateau_center(f, theta, fmin, 2.0));
            let (c, l1) = eval(&omega);
            StepFit { omega, c, l1, coarse_index: k }
        }
        _ => {
            let dirs = sphere_grid(1.0, false);
            let coarse: Vec<f64> = dirs.par_iter().map(|&(t, p)| eval(&unit3(t, p)).1).collect();
            let k = argmin(&coarse);
            let (t, p) = refine_sphere(dirs[k], |t, p| eval(&unit3(t, p)).1);
            let omega = unit3(t, p);
            let (c, l1) = eval(&omega);
            StepFit { omega, c, l1, coarse_index: k }
        }
    }
}

/// Midpoint of the set {|t - t0| ≤ reach : f(t) ≤ f0 (1 + 1e-12)} around a
/// minimizer t0. The sampled L¹ distance is flat in the angle while the
/// step's edge stays inside one row of cells.
fn plateau_center<F: Fn(f64) -> f64>(f: F, t0: f64, f0: f64, reach: f64) -> f64 {
    let flat = |t: f64| f(t) <= f0 + 1e-12 * f0.abs();
    let edge = |dir: f64| {
        if flat(t0 + dir * reach) {
            return reach;
        }
        let (mut lo, mut hi) = (0.0, reach);
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if flat(t0 + dir * mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    t0 + 0.5 * (edge(1.0) - edge(-1.0))
}

fn argmin(v: &[f64]) -> usize {
    let mut k = 0;
    for (i, x) in v.iter().enumerate() {
        if *x < v[k] {
            k = i;
        }
    }
    k
}

/// (θ, φ) pairs in degrees spaced about `step` apart; the upper hemisphere
/// only when `half` is set.
fn sphere_grid(step: f64, half: bool) -> Vec<(f64, f64)> {
    let tmax = if half { 90.0 } else { 180.0 };
    let mut out = vec![(0.0, 0.0)];
    let rows = (tmax / step).round() as usize;
    for i in 1..=rows {
        let t = i as f64 * step;
        if t >= 180.0 {
            out.push((180.0, 0.0));
            break;
        }
        let m = ((360.0 * t.to_radians().sin() / step).round() as usize).max(1);
        // on the equator of a hemisphere grid, half the circle suffices
        let m_eff = if half && (t - 90.0).abs() < 1e-9 { m.div_ceil(2) } else { m };
        for j in 0..m_eff {
            out.push((t, 360.0 * j as f64 / m as f64));
        }
    }
    out
}

/// Alternating golden-section refinement in θ and φ within ±1° cells.
fn refine_sphere<F: Fn(f64, f64) -> f64>(start: (f64, f64), f: F) -> (f64, f64) {
    let (mut t, mut p) = start;
    let mut width = 1.0;
    for _ in 0..4 {
        t = golden_min(t - width, t + width, 30, |tt| f(tt, p)).0;
        let pw = if t.to_radians().sin().abs() > 1e-3 { width / t.to_radians().sin().abs() } else { 180.0 };
        p = golden_min(p - pw.min(180.0), p + pw.min(180.0), 30, |pp| f(t, pp)).0;
        width *= 0.5;
    }
    (t, p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlowdownRow {
    pub eps: f64,
    pub l1: f64,
    pub omega: Vec<f64>,
    pub c: f64,
    /// Largest distance from a sampled zero of u_ε to the fitted hyperplane.
    pub level_deviation: f64,
    pub coarse_index: usize,
}

/// u_ε(x) = u(x/ε) sampled on [-W, W]ⁿ with `nodes` nodes per axis.
pub fn rescaled_window(u: &GridFunction, eps: f64, window: f64, nodes: usize) -> Result<GridFunction> {
    GridFunction::centered(u.dim, nodes, window, TailModel::Constant(0.0), |x| {
        let y: Vec<f64> = x.iter().map(|v| v / eps).collect();
        u.sample(&y)
    })
}

fn zero_crossings(u: &GridFunction) -> Vec<Vec<f64>> {
    let st = u.strides();
    let mut out = vec![];
    for f in 0..u.len() {
        let idx = u.index(f);
        for d in 0..u.dim {
            if idx[d] + 1 >= u.shape[d] {
                continue;
            }
            let (a, b) = (u.values[f], u.values[f + st[d]]);
            if (a < 0.0 && b >= 0.0) || (a >= 0.0 && b < 0.0) {
                let t = a / (a - b);
                let mut x = u.node(f);
                x[d] += t * u.spacing;
                out.push(x);
            }
        }
    }
    out
}

pub fn blowdown(u: &GridFunction, eps_list: &[f64], window: f64, nodes: usize) -> Result<Vec<BlowdownRow>> {
    if !u.tail.is_piecewise_constant() && !matches!(u.tail, TailModel::Ridge { .. } | TailModel::Blend { .. }) {
        return Err(Error::Contract("blowdown needs a non-periodic tail".into()));
    }
    eps_list
        .iter()
        .map(|&eps| {
            let ue = rescaled_window(u, eps, window, nodes)?;
            let fit = best_step(&ue);
            let level_deviation = zero_crossings(&ue)
                .iter()
                .map(|x| (x.iter().zip(&fit.omega).map(|(a, b)| a * b).sum::<f64>() - fit.c).abs())
                .fold(0.0, f64::max);
            Ok(BlowdownRow {
                eps,
                l1: fit.l1,
                omega: fit.omega,
                c: fit.c,
                level_deviation,
                coarse_index: fit.coarse_index,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fit1d {
    pub omega: Vec<f64>,
    pub profile: GridFunction,
    /// sup |u - profile(ω·x)|.
    pub residual: f64,
    /// Within-level variance sum at ω.
    pub variance: f64,
}

/// Bin means of u over ω·x in bins of width h/2, empty bins interpolated.
fn level_profile(u: &GridFunction, omega: &[f64]) -> (f64, f64, Vec<f64>, f64) {
    let bw = 0.5 * u.spacing;
    let ts: Vec<f64> = (0..u.len()).map(|f| u.node(f).iter().zip(omega).map(|(a, b)| a * b).sum()).collect();
    let tmin = ts.iter().cloned().fold(f64::INFINITY, f64::min);
    let tmax = ts.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let nb = ((tmax - tmin) / bw).floor() as usize + 1;
    let mut sum = vec![0.0; nb];
    let mut cnt = vec![0usize; nb];
    let mut sq = 0.0;
    for (f, &t) in ts.iter().enumerate() {
        let b = (((t - tmin) / bw) as usize).min(nb - 1);
        sum[b] += u.values[f];
        cnt[b] += 1;
        sq += u.values[f] * u.values[f];
    }
    let mut var = sq;
    let mut mean = vec![f64::NAN; nb];
    for b in 0..nb {
        if cnt[b] > 0 {
            mean[b] = sum[b] / cnt[b] as f64;
            var -= cnt[b] as f64 * mean[b] * mean[b];
        }
    }
    // fill empty bins linearly from their neighbors
    let known: Vec<usize> = (0..nb).filter(|&b| cnt[b] > 0).collect();
    for b in 0..nb {
        if cnt[b] == 0 {
            let right = known.iter().position(|&k| k > b);
            mean[b] = match right {
                Some(0) => mean[known[0]],
                Some(r) => {
                    let (l, rr) = (known[r - 1], known[r]);
                    let w = (b - l) as f64 / (rr - l) as f64;
                    mean[l] * (1.0 - w) + mean[rr] * w
                }
                None => mean[*known.last().unwrap()],
            };
        }
    }
    (tmin + 0.5 * bw, bw, mean, var.max(0.0))
}

/// Best direction ω for u ≈ u_o(ω·x), its profile and the sup residual.
pub fn fit_1d(u: &GridFunction) -> Result<Fit1d> {
    if !(2..=3).contains(&u.dim) {
        return Err(Error::Domain("fit_1d needs n = 2 or 3".into()));
    }
    let var = |omega: &Vec<f64>| level_profile(u, omega).3;
    let mut omega = if u.dim == 2 {
        let coarse: Vec<f64> = (0..180).into_par_iter().map(|k| var(&unit2(k as f64))).collect();
        let k = argmin(&coarse);
        let (theta, _) = golden_min(k as f64 - 1.0, k as f64 + 1.0, 40, |t| var(&unit2(t)));
        unit2(theta)
    } else {
        let dirs = sphere_grid(1.0, true);
        let coarse: Vec<f64> = dirs.par_iter().map(|&(t, p)| var(&unit3(t, p))).collect();
        let k = argmin(&coarse);
        let (t, p) = refine_sphere(dirs[k], |t, p| var(&unit3(t, p)));
        unit3(t, p)
    };
    let (mut t0, mut bw, mut mean, mut variance) = level_profile(u, &omega);
    if mean.last().unwrap() < &mean[0] {
        omega.iter_mut().for_each(|v| *v = -*v);
        (t0, bw, mean, variance) = level_profile(u, &omega);
    }
    let left = mean[0];
    let right = *mean.last().unwrap();
    let profile = GridFunction::new(vec![mean.len()], bw, vec![t0], mean, TailModel::Constant(0.5 * (left + right)))?;
    let residual = (0..u.len())
        .map(|f| {
            let t: f64 = u.node(f).iter().zip(&omega).map(|(a, b)| a * b).sum();
            let tc = t.clamp(t0, t0 + bw * (profile.len() - 1) as f64);
            (u.values[f] - profile.sample(&[tc])).abs()
        })
        .fold(0.0, f64::max);
    Ok(Fit1d { omega, profile, residual, variance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::make_cubic_nonlinearity;

    #[test]
    fn golden_section_finds_parabola_minimum() {
        let (x, _) = golden_min(-3.0, 5.0, 80, |x| (x - 1.3).powi(2));
        assert!((x - 1.3).abs() < 1e-8);
    }

    #[test]
    fn g_balance_of_the_cubic() {
        let nl = make_cubic_nonlinearity();
        assert!((g_balance(&nl, Branch::Plus).unwrap() - 0.25).abs() < 1e-12);
        assert!((g_balance(&nl, Branch::Minus).unwrap() + 0.25).abs() < 1e-12);
        // ∫_0^1 (4t³ - 1) dt = 0
        let tilted = Nonlinearity::from_coeffs(vec![-1.0, 0.0, 0.0, 4.0], 0.3);
        assert!(g_balance(&tilted, Branch::Plus).unwrap().abs() < 1e-12);
    }

    #[test]
    fn zero_test_field_has_zero_form() {
        let nl = make_cubic_nonlinearity();
        let u = GridFunction::centered(1, 41, 4.0, TailModel::ConstantPm1 { axis: 0 }, |x| x[0].tanh()).unwrap();
        let z = u.with_values(vec![0.0; 41]).with_tail(TailModel::Constant(0.0));
        let zeta = extend_zero_faces(&z, 0.4, 2.0, 8).unwrap();
        let sf = StabilityForm::new(u, 0.4, nl, 2.0);
        assert_eq!(stability_form_eval(&sf, &zeta).unwrap().value, 0.0);
    }

    #[test]
    fn form_is_symmetric_and_polarizes() {
        let nl = make_cubic_nonlinearity();
        let u = GridFunction::centered(1, 41, 4.0, TailModel::ConstantPm1 { axis: 0 }, |x| x[0].tanh()).unwrap();
        let mk = |c: f64, w: f64| {
            let t = u.with_values((0..41).map(|i| bump(&[u.node(i)[0] - c], w)).collect()).with_tail(TailModel::Constant(0.0));
            extend_zero_faces(&t, 0.4, 3.0, 10).unwrap()
        };
        let (a, b) = (mk(0.3, 1.0), mk(-0.5, 1.5));
        let sf = StabilityForm::new(u, 0.4, nl, 2.0);
        let ab = sf.bilinear(&a, &b).unwrap();
        let ba = sf.bilinear(&b, &a).unwrap();
        assert!((ab - ba).abs() < 1e-10 * ab.abs().max(1.0));
        let sum = a.with_values(a.values.iter().zip(&b.values).map(|(x, y)| x + y).collect());
        let dif = a.with_values(a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect());
        let pol = 0.25 * (stability_form_eval(&sf, &sum).unwrap().value - stability_form_eval(&sf, &dif).unwrap().value);
        assert!((pol - ab).abs() < 1e-10 * ab.abs().max(1.0));
    }

    #[test]
    fn form_rejects_fields_with_face_data() {
        let nl = make_cubic_nonlinearity();
        let u = GridFunction::centered(1, 21, 2.0, TailModel::Constant(0.0), |_| 0.0).unwrap();
        let e = crate::extension::extend(&u.with_values(vec![1.0; 21]).with_tail(TailModel::Constant(1.0)), 0.5, 2.0, 6).unwrap();
        let sf = StabilityForm::new(u, 0.5, nl, 2.0);
        assert!(matches!(stability_form_eval(&sf, &e), Err(Error::Contract(_))));
    }

    #[test]
    fn sliding_a_monotone_function_against_itself() {
        let u = GridFunction::centered(1, 81, 8.0, TailModel::ConstantPm1 { axis: 0 }, |x| x[0].tanh()).unwrap();
        let ks: Vec<f64> = (0..=10).map(|k| 0.2 * k as f64).collect();
        let rep = sliding_verify(&u, &u, &ks).unwrap();
        assert_eq!(rep.k_star, Some(0.0));
        assert!(rep.steps.iter().skip(1).all(|s| s.dominated));
        // a bump on top needs a positive slide
        let bumped = u.with_values((0..81).map(|i| u.values[i] + 0.2 * bump(&u.node(i), 1.0)).collect());
        let rep = sliding_verify(&u, &bumped, &ks).unwrap();
        assert!(rep.k_star.unwrap() > 0.0);
        assert!(rep.touching.is_some());
        // w_o ≡ 1 inside B_2 is never dominated
        let top = u.with_values((0..81).map(|i| if u.node(i)[0].abs() < 2.0 { 1.0 } else { u.values[i] }).collect());
        let rep = sliding_verify(&u, &top, &ks).unwrap();
        assert_eq!(rep.k_bar, None);
    }

    #[test]
    fn admissibility_filter() {
        let u = GridFunction::centered(1, 41, 4.0, TailModel::ConstantPm1 { axis: 0 }, |x| x[0].tanh()).unwrap();
        let under = u.with_values(vec![-1.0; 41]).with_tail(TailModel::Constant(-1.0));
        let over = u.with_values(vec![1.0; 41]).with_tail(TailModel::Constant(1.0));
        let big = u.with_values((0..41).map(|i| 0.9 * bump(&u.node(i), 2.0) + 0.5).collect());
        assert!(!admissible(&u, &under, &over, &big));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (phi, _) = draw_admissible(&u, &under, &over, 3.0, &mut rng);
        assert!(admissible(&u, &under, &over, &phi.unwrap()));
    }

    #[test]
    fn uniform_sum_cdf_matches_closed_forms() {
        // one uniform: linear ramp
        assert!((uniform_sum_cdf(0.25, &[0.5]) - 0.75).abs() < 1e-15);
        // two equal uniforms: triangular density on [-1, 1]
        for &z in &[-0.7, -0.2, 0.0, 0.4, 0.9] {
            let want = if z < 0.0 { 0.5 * (1.0 + z) * (1.0 + z) } else { 1.0 - 0.5 * (1.0 - z) * (1.0 - z) };
            assert!((uniform_sum_cdf(z, &[0.5, 0.5]) - want).abs() < 1e-14, "{z}");
        }
        // symmetric, and a zero width degenerates to the other factor
        assert!((uniform_sum_cdf(0.1, &[0.3, 0.2, 0.4]) + uniform_sum_cdf(-0.1, &[0.3, 0.2, 0.4]) - 1.0).abs() < 1e-14);
        assert!((uniform_sum_cdf(0.1, &[0.0, 0.5]) - 0.6).abs() < 1e-15);
        assert_eq!(uniform_sum_cdf(0.0, &[0.0]), 0.5);
    }

    #[test]
    fn blowdown_of_constant_is_exact() {
        let u = GridFunction::centered(2, 11, 2.0, TailModel::Constant(1.0), |_| 1.0).unwrap();
        let rows = blowdown(&u, &[1.0, 0.5], 2.0, 21).unwrap();
        for r in rows {
            assert!(r.l1 < 1e-12, "{}", r.l1);
        }
    }

    #[test]
    fn fit_recovers_a_direction_and_rejects_products() {
        let th = 25f64.to_radians();
        let u = GridFunction::centered(2, 41, 4.0, TailModel::Constant(0.0), |x| (1.5 * (th.cos() * x[0] + th.sin() * x[1])).tanh()).unwrap();
        let fit = fit_1d(&u).unwrap();
        let ang = fit.omega[1].atan2(fit.omega[0]).to_degrees();
        assert!((ang - 25.0).abs() < 0.5, "{ang}");
        assert!(fit.residual < 0.1, "{}", fit.residual);
        let p = GridFunction::centered(2, 41, 4.0, TailModel::Constant(0.0), |x| x[0].tanh() * x[1].tanh()).unwrap();
        assert!(fit_1d(&p).unwrap().residual > 0.1);
    }

    #[test]
    fn minimizer_of_the_zero_trace_problem_is_zero() {
        let nl = make_cubic_nonlinearity();
        let u = GridFunction::centered(1, 21, 2.0, TailModel::ConstantPm1 { axis: 0 }, |x| 0.1 * x[0]).unwrap();
        let e = crate::extension::extend(&u, 0.5, 2.0, 8).unwrap();
        let lf = LocalFunctional { lambda: 0.5, nl };
        let out = local_minimizer(&e, &lf, 1e-10, 20_000).unwrap();
        assert!(lf.energy(&out.field) <= lf.energy(&e) + 1e-14);
        // odd data keeps the center at zero
        let mid = out.field.nx() / 2;
        assert!(out.field.values[mid].abs() < 1e-8);
    }

    #[test]
    fn glue_with_zero_psi_is_all_equalities() {
        let nl = make_cubic_nonlinearity();
        let lay = Profile1d { origin: -3.0, spacing: 0.2, values: (0..31).map(|k| (-3.0 + 0.2 * k as f64).tanh()).collect(), left: -1.0, right: 1.0 };
        let u = GridFunction::centered(1, 31, 3.0, TailModel::ConstantPm1 { axis: 0 }, |x| lay.eval(x[0])).unwrap();
        let e = crate::extension::extend(&u, 0.5, 3.0, 10).unwrap();
        let lf = LocalFunctional { lambda: 0.5, nl };
        let eu = local_minimizer(&e, &lf, 1e-11, 50_000).unwrap().field;
        let zero = eu.with_values(vec![0.0; eu.values.len()]);
        let o = eu.with_values(vec![1.0; eu.values.len()]);
        let un = eu.with_values(vec![-1.0; eu.values.len()]);
        let g = glue_competitors(&eu, &zero, &un, &o, &lf).unwrap();
        assert!(g.ledger.iter().all(|r| r.slack.abs() < 1e-9), "{:?}", g.ledger);
        assert!(g.regions.iter().all(|&r| r == Region::Middle));
        assert!(matches!(glue_competitors(&eu, &zero, &o, &un, &lf), Err(Error::Data(_))));
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let psi = random_psi(&eu, 2.5, &mut rng);
            let g = glue_competitors(&eu, &psi, &un, &o, &lf).unwrap();
            assert!(g.additivity_error < 1e-10, "{}", g.additivity_error);
            assert!(g.min_slack() >= -1e-8, "{}", g.ledger_csv());
        }
    }
}
