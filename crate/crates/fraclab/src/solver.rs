//! Layer solutions in 1D, monotone solutions in 2D, and their limits.
//!
//! Both solvers run the explicit flow u ← u + τ(f(u) - L u) with tails frozen
//! by the grid's tail model and τ = 0.5/λ_max, λ_max being a power-iteration
//! estimate for the linearization M - f′(u₀).

use crate::error::{Error, Result};
use crate::fracop::{FracLaplacian, GridFunction, Profile1d, TailModel};
use crate::linalg::norm_inf;
use crate::model::Nonlinearity;

/// Step cap shared by both flows.
pub const MAX_FLOW_STEPS: usize = 400_000;
const POWER_ITERS: usize = 60;
/// Residual history is sampled every this many steps.
const HISTORY_EVERY: usize = 100;
/// Largest admissible distance from a limit to a root of f.
pub const SNAP_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSolution {
    pub grid: GridFunction,
    pub residual_norm: f64,
    pub monotone: bool,
    pub min_slope: f64,
    /// |u(±X_max) ∓ 1|, the largest of the two.
    pub tail_mismatch: f64,
    pub history: Vec<f64>,
    pub steps: usize,
    pub tau: f64,
}

/// f(u) - L u at every node.
pub fn residual(op: &FracLaplacian, nl: &Nonlinearity, u: &[f64]) -> Vec<f64> {
    let lu = op.apply(u);
    u.iter().zip(lu).map(|(&x, l)| nl.f(x) - l).collect()
}

fn flow_step_size(op: &FracLaplacian, nl: &Nonlinearity, u: &[f64]) -> f64 {
    let shift: Vec<f64> = u.iter().map(|&x| -nl.f_prime(x)).collect();
    0.5 / op.max_eigenvalue(&shift, POWER_ITERS)
}

fn antisymmetrize(u: &mut [f64]) {
    let n = u.len();
    for i in 0..n / 2 {
        let a = 0.5 * (u[i] - u[n - 1 - i]);
        u[i] = a;
        u[n - 1 - i] = -a;
    }
    if n % 2 == 1 {
        u[n / 2] = 0.0;
    }
}

struct FlowResult {
    values: Vec<f64>,
    residual: f64,
    history: Vec<f64>,
    steps: usize,
}

fn flow(
    op: &FracLaplacian,
    nl: &Nonlinearity,
    mut u: Vec<f64>,
    tau: f64,
    tol: f64,
    max_steps: usize,
    odd: bool,
) -> Result<FlowResult> {
    let mut history = Vec::new();
    for step in 0..=max_steps {
        let r = residual(op, nl, &u);
        let rn = norm_inf(&r);
        if !rn.is_finite() {
            return Err(Error::NonConvergence { iterations: step, residual: rn, history });
        }
        if step % HISTORY_EVERY == 0 {
            history.push(rn);
        }
        if rn <= tol {
            return Ok(FlowResult { values: u, residual: rn, history, steps: step });
        }
        if step == max_steps {
            return Err(Error::NonConvergence { iterations: step, residual: rn, history });
        }
        for (x, ri) in u.iter_mut().zip(&r) {
            *x += tau * ri;
        }
        if odd {
            antisymmetrize(&mut u);
        }
    }
    unreachable!()
}

/// Smallest forward difference along `axis`, divided by h.
pub fn min_slope(u: &GridFunction, axis: usize) -> f64 {
    let st = u.strides()[axis];
    let mut m = f64::INFINITY;
    for f in 0..u.len() {
        if u.index(f)[axis] + 1 < u.shape[axis] {
            m = m.min((u.values[f + st] - u.values[f]) / u.spacing);
        }
    }
    m
}

/// Layer solution on [-X_max, X_max] with N nodes (N odd), starting from tanh.
pub fn solve_layer(nl: &Nonlinearity, s: f64, x_max: f64, n: usize, tol: f64) -> Result<LayerSolution> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::Domain(format!("s = {s} outside (0, 1)")));
    }
    if n % 2 == 0 || n < 3 {
        return Err(Error::Domain(format!("N = {n} must be odd and at least 3")));
    }
    if tol <= 0.0 {
        return Err(Error::Domain("tolerance must be positive".into()));
    }
    let mut grid = GridFunction::centered(1, n, x_max, TailModel::ConstantPm1 { axis: 0 }, |x| x[0].tanh())?;
    antisymmetrize(&mut grid.values);
    let op = FracLaplacian::new(&grid, s)?;
    let tau = flow_step_size(&op, nl, &grid.values);
    let out = flow(&op, nl, grid.values.clone(), tau, tol, MAX_FLOW_STEPS, true)?;
    grid.values = out.values;
    let slope = min_slope(&grid, 0);
    if slope <= 0.0 {
        return Err(Error::Monotonicity(format!(
            "minimal slope {slope:e} after convergence (step {tau:e} too large?)"
        )));
    }
    let tail_mismatch = grid.tail_mismatch().unwrap_or(0.0);
    Ok(LayerSolution {
        grid,
        residual_norm: out.residual,
        monotone: true,
        min_slope: slope,
        tail_mismatch,
        history: out.history,
        steps: out.steps,
        tau,
    })
}

/// Continue the flow for exactly `steps` steps, optionally without symmetry.
pub fn relax(sol: &LayerSolution, nl: &Nonlinearity, s: f64, steps: usize, odd: bool) -> Result<GridFunction> {
    let op = FracLaplacian::new(&sol.grid, s)?;
    let mut u = sol.grid.values.clone();
    for _ in 0..steps {
        let r = residual(&op, nl, &u);
        for (x, ri) in u.iter_mut().zip(&r) {
            *x += sol.tau * ri;
        }
        if odd {
            antisymmetrize(&mut u);
        }
    }
    Ok(sol.grid.with_values(u))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Limits {
    pub minus: f64,
    pub plus: f64,
    /// Distances from the end values to the snapped roots.
    pub snap_minus: f64,
    pub snap_plus: f64,
}

/// Limits at ∓∞ of a monotone 1D grid, snapped to the roots of f.
pub fn limit_trichotomy(u: &GridFunction, nl: &Nonlinearity) -> Result<Limits> {
    if u.dim != 1 {
        return Err(Error::Domain("limit_trichotomy needs a 1D grid".into()));
    }
    if u.values.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Contract("limit_trichotomy needs a nondecreasing grid".into()));
    }
    let roots = nl.roots_in_unit_interval();
    let snap = |v: f64| -> Result<(f64, f64)> {
        let best = roots
            .iter()
            .map(|&r| (r, (v - r).abs()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .ok_or_else(|| Error::Inconclusive("f has no roots in [-1, 1]".into()))?;
        if best.1 > SNAP_TOLERANCE {
            return Err(Error::Inconclusive(format!("end value {v} is {} from the nearest root", best.1)));
        }
        let root = if (best.0 - best.0.round()).abs() < 1e-9 { best.0.round() } else { best.0 };
        Ok((root, best.1))
    };
    let (minus, sm) = snap(u.values[0])?;
    let (plus, sp) = snap(*u.values.last().unwrap())?;
    Ok(Limits { minus, plus, snap_minus: sm, snap_plus: sp })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneSolution {
    pub grid: GridFunction,
    pub residual_norm: f64,
    /// Smallest discrete ∂_{x_n} u.
    pub min_slope: f64,
    pub history: Vec<f64>,
    pub steps: usize,
}

/// Monotone solution on the centered box `shape`·h with frozen tails.
///
/// `tail` is a Blend or Ridge model whose values also serve as the initial
/// guess inside the box; the monotone direction is the last axis.
pub fn solve_monotone_2d(
    nl: &Nonlinearity,
    s: f64,
    shape: [usize; 2],
    spacing: f64,
    tail: TailModel,
    tol: f64,
) -> Result<MonotoneSolution> {
    if !matches!(tail, TailModel::Blend { axis: 1, .. } | TailModel::Ridge { .. }) {
        return Err(Error::Contract("boundary data must be a blend along x_2 or a ridge".into()));
    }
    let origin = vec![
        -0.5 * spacing * (shape[0] - 1) as f64,
        -0.5 * spacing * (shape[1] - 1) as f64,
    ];
    let len = shape[0] * shape[1];
    let mut grid = GridFunction::new(shape.to_vec(), spacing, origin, vec![0.0; len], tail)?;
    grid.values = (0..len).map(|f| grid.tail_value(&grid.node(f))).collect();
    let op = FracLaplacian::new(&grid, s)?;
    let tau = flow_step_size(&op, nl, &grid.values);
    let out = flow(&op, nl, grid.values.clone(), tau, tol, MAX_FLOW_STEPS, false)?;
    grid.values = out.values;
    let slope = min_slope(&grid, 1);
    if slope <= 0.0 {
        return Err(Error::Monotonicity(format!("minimal ∂_2 u = {slope:e} after convergence")));
    }
    Ok(MonotoneSolution {
        grid,
        residual_norm: out.residual,
        min_slope: slope,
        history: out.history,
        steps: out.steps,
    })
}

/// Tail model of a 1D profile grid with the given end values.
fn profile_tail(left: f64, right: f64) -> TailModel {
    if left == -1.0 && right == 1.0 {
        TailModel::ConstantPm1 { axis: 0 }
    } else {
        TailModel::Constant(0.5 * (left + right))
    }
}

/// Bottom and top profiles of a 2D grid monotone in x_2.
///
/// The outermost row and the row a quarter of the box inward are
/// extrapolated linearly in 1/|x_2| to 1/|x_2| = 0 and compared with the
/// limits of the declared tail.
pub fn profiles_at_infinity(u: &GridFunction) -> Result<(GridFunction, GridFunction)> {
    if u.dim != 2 {
        return Err(Error::Domain("profiles_at_infinity needs a 2D grid".into()));
    }
    let (n0, n1) = (u.shape[0], u.shape[1]);
    if n1 < 8 {
        return Err(Error::Domain("too few rows along x_2".into()));
    }
    let inner = n1 / 4;
    let at = |i: usize, j: usize| u.values[i * n1 + j];
    let x2 = |j: usize| u.origin[1] + u.spacing * j as f64;
    let mut under = Vec::with_capacity(n0);
    let mut over = Vec::with_capacity(n0);
    let far = 1e9;
    for i in 0..n0 {
        let x1 = u.origin[0] + u.spacing * i as f64;
        for (out, j_out, j_in, sign) in [(&mut under, 0, inner, -1.0), (&mut over, n1 - 1, n1 - 1 - inner, 1.0)] {
            let (t1, t2) = (1.0 / x2(j_out).abs(), 1.0 / x2(j_in).abs());
            let (v1, v2) = (at(i, j_out), at(i, j_in));
            let c = (v1 - v2) / (t1 - t2);
            let p = v1 - c * t1;
            let declared = u.tail_value(&[x1, sign * far]);
            if (p - declared).abs() > SNAP_TOLERANCE {
                return Err(Error::Inconclusive(format!(
                    "extrapolated profile {p} at x_1 = {x1} disagrees with the tail value {declared}"
                )));
            }
            out.push(p);
        }
    }
    if under.iter().zip(&over).any(|(a, b)| a > b) {
        return Err(Error::Data("extrapolated profiles are not ordered".into()));
    }
    let ends = |side: f64| {
        let lo = u.tail_value(&[-far, side * far]);
        let hi = u.tail_value(&[far, side * far]);
        profile_tail(lo, hi)
    };
    let mk = |vals: Vec<f64>, tail| GridFunction::new(vec![n0], u.spacing, vec![u.origin[0]], vals, tail);
    Ok((mk(under, ends(-1.0))?, mk(over, ends(1.0))?))
}

/// The 1D layer as a Profile1d (for blend and ridge tails).
pub fn layer_profile(sol: &LayerSolution) -> Profile1d {
    Profile1d {
        origin: sol.grid.origin[0],
        spacing: sol.grid.spacing,
        values: sol.grid.values.clone(),
        left: -1.0,
        right: 1.0,
    }
}

/// Blend tail for the tensorized layer in x_2: under ≡ -1, over ≡ +1.
pub fn tensorized_tail(layer: &Profile1d) -> TailModel {
    TailModel::Blend {
        axis: 1,
        under: Profile1d::constant(-1.0),
        over: Profile1d::constant(1.0),
        transition: layer.clone(),
    }
}
