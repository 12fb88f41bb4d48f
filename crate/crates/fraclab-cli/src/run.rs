//! Experiment pipelines. Each experiment fills a `Report` with CSV tables,
//! snapshots, calibrated constants and pass/fail checks.

use crate::config::{Experiment, ExperimentConfig};
use fraclab::analysis::{
    best_step, blowdown, constrained_minimality_test, fit_1d, g_balance, glue_competitors, local_minimizer,
    null_mode, random_psi, rescaling_instability_test, sliding_verify, stability_form_eval, tensorize, Branch,
    LocalFunctional, StabilityForm,
};
use fraclab::energy::{bump, calibration, default_levels, verify_renormalization};
use fraclab::extension::{extend, extend_zero_faces, ExtensionField};
use fraclab::fracop::{snapshot, GridFunction, Profile1d, TailModel};
use fraclab::model::{make_cubic_nonlinearity, Nonlinearity};
use fraclab::solver::{
    layer_profile, limit_trichotomy, profiles_at_infinity, solve_layer, solve_monotone_2d, tensorized_tail,
    LayerSolution, MonotoneSolution,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: String,
    pub pass: bool,
}

/// Everything an experiment produces, in a deterministic order.
#[derive(Debug, Default)]
pub struct Report {
    pub tables: Vec<(String, String)>,
    pub snapshots: Vec<(String, Vec<u8>)>,
    pub constants: Vec<(String, f64)>,
    pub checks: Vec<Check>,
}

impl Report {
    fn table(&mut self, name: &str, header: &[&str], rows: Vec<Vec<String>>) {
        let mut w = csv::Writer::from_writer(vec![]);
        w.write_record(header).expect("in-memory csv");
        for r in rows {
            w.write_record(&r).expect("in-memory csv");
        }
        let bytes = w.into_inner().expect("in-memory csv");
        self.tables.push((format!("{name}.csv"), String::from_utf8(bytes).expect("utf-8")));
    }

    fn raw_table(&mut self, name: &str, text: String) {
        self.tables.push((format!("{name}.csv"), text));
    }

    fn constant(&mut self, name: &str, v: f64) {
        self.constants.push((name.to_string(), v));
    }

    fn check(&mut self, name: &str, value: f64, bound: &str, pass: bool) {
        self.checks.push(Check { name: name.to_string(), value, bound: bound.to_string(), pass });
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn checks_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(vec![]);
        w.write_record(["check", "value", "bound", "pass"]).expect("in-memory csv");
        for c in &self.checks {
            w.write_record([c.name.clone(), e(c.value), c.bound.clone(), c.pass.to_string()]).expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8")
    }
}

fn e(v: f64) -> String {
    format!("{v:.12e}")
}

type Res<T> = fraclab::Result<T>;

fn nodes(x_max: f64, h: f64) -> usize {
    2 * (x_max / h).round() as usize + 1
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    nl: Nonlinearity,
}

impl Ctx<'_> {
    fn layer(&self) -> Res<LayerSolution> {
        let g = &self.cfg.grid;
        solve_layer(&self.nl, self.cfg.s, g.x_max, nodes(g.x_max, g.h), self.cfg.tolerances.residual)
    }

    fn monotone_2d(&self, layer: &LayerSolution) -> Res<MonotoneSolution> {
        let g = &self.cfg.grid;
        let n = nodes(g.x_max2, g.h2);
        let tail = tensorized_tail(&layer_profile(layer));
        solve_monotone_2d(&self.nl, self.cfg.s, [n, n], g.h2, tail, self.cfg.tolerances.residual)
    }

    /// Reciprocal of the Dirichlet/Gagliardo ratio on a width-2 bump.
    fn lambda(&self, n: usize, h: f64, r: f64, rep: &mut Report) -> Res<f64> {
        let r = (r / h).round() * h;
        let cal = calibration(n, self.cfg.s, h, r, default_levels(r, self.cfg.s, self.cfg.grid.dz_top(self.cfg.s)), 2.0)?;
        rep.constant(&format!("calibration_ratio_n{n}"), cal.ratio);
        rep.constant("calibration_closed_form", cal.closed_form);
        Ok(1.0 / cal.ratio)
    }
}

pub fn run(cfg: &ExperimentConfig) -> Res<Report> {
    let ctx = Ctx { cfg, nl: make_cubic_nonlinearity() };
    let mut rep = Report::default();
    rep.constant("s", cfg.s);
    match cfg.experiment {
        Experiment::Layer => layer(&ctx, &mut rep)?,
        Experiment::Renormalization => renormalization(&ctx, &mut rep)?,
        Experiment::Stability => stability(&ctx, &mut rep)?,
        Experiment::Sliding => sliding(&ctx, &mut rep)?,
        Experiment::ConstrainedMin => {
            let lay = ctx.layer()?;
            let m = ctx.monotone_2d(&lay)?;
            constrained_min(&ctx, &m.grid, &mut rep)?;
        }
        Experiment::Glue => glue(&ctx, &mut rep)?,
        Experiment::Blowdown => {
            let lay = ctx.layer()?;
            let u = rotated_layer(&ctx, &lay)?;
            blowdown_table(&ctx, &u, Some(cfg.blowdown.angle), "blowdown", &mut rep)?;
        }
        Experiment::Fit1d => fit(&ctx, &mut rep)?,
        Experiment::FullPipeline => full_pipeline(&ctx, &mut rep)?,
    }
    Ok(rep)
}

fn grid_rows(u: &GridFunction) -> Vec<Vec<String>> {
    (0..u.len())
        .map(|f| {
            let mut row: Vec<String> = u.node(f).into_iter().map(e).collect();
            row.push(e(u.values[f]));
            row
        })
        .collect()
}

fn snapshot_bytes(u: &GridFunction) -> Res<Vec<u8>> {
    let mut buf = vec![];
    snapshot::write_binary(u, &mut buf)?;
    Ok(buf)
}

fn layer(ctx: &Ctx, rep: &mut Report) -> Res<()> {
    let sol = ctx.layer()?;
    rep.table("layer", &["x", "u"], grid_rows(&sol.grid));
    let hist = sol.history.iter().enumerate().map(|(k, r)| vec![k.to_string(), e(*r)]).collect();
    rep.table("history", &["sample", "residual"], hist);
    rep.snapshots.push(("layer.bin".into(), snapshot_bytes(&sol.grid)?));
    rep.constant("flow_step", sol.tau);
    rep.constant("steps", sol.steps as f64);
    rep.check("residual", sol.residual_norm, "<= 1e-4", sol.residual_norm <= 1e-4);
    rep.check("min_slope", sol.min_slope, "> 0", sol.min_slope > 0.0);
    let lim = limit_trichotomy(&sol.grid, &ctx.nl)?;
    rep.check("limit_minus", lim.minus, "= -1", lim.minus == -1.0);
    rep.check("limit_plus", lim.plus, "= 1", lim.plus == 1.0);
    let gm = g_balance(&ctx.nl, Branch::Minus)?;
    let gp = g_balance(&ctx.nl, Branch::Plus)?;
    rep.check("g_balance_minus", gm, "!= 0", gm.abs() > 1e-8);
    rep.check("g_balance_plus", gp, "!= 0", gp.abs() > 1e-8);
    Ok(())
}

fn renormalization(ctx: &Ctx, rep: &mut Report) -> Res<()> {
    let s = ctx.cfg.s;
    let p = &ctx.cfg.renormalization;
    let lay = ctx.layer()?;
    let v = &lay.grid;
    let phi = v
        .with_values((0..v.len()).map(|i| bump(&[v.node(i)[0] - p.bump_center], p.bump_width)).collect())
        .with_tail(TailModel::Constant(0.0));
    let tab = verify_renormalization(v, &phi, s, &p.r_list, ctx.cfg.grid.dz_top(s), p.iterations)?;
    rep.raw_table("renormalization", tab.to_csv());
    rep.constant("calibration_ratio", tab.calibration.ratio);
    rep.constant("calibration_closed_form", tab.calibration.closed_form);
    rep.constant("raw_gagliardo", tab.raw_gagliardo);
    let last = tab.rows.last().expect("nonempty r_list");
    let g23 = (last.extension - last.extension_inf).abs() / last.extension_inf.abs();
    let worst = last.gap12.max(last.gap13).max(g23);
    rep.check("pairwise_agreement_at_max_r", worst, "<= 0.05", worst <= 0.05);
    let expo = tab.gap_exponent().unwrap_or(f64::NAN);
    rep.constant("gap_exponent", expo);
    let ok = (expo + 2.0 * s).abs() <= 0.15;
    rep.check("gap_exponent", expo, &format!("in [{:.2}, {:.2}]", -2.0 * s - 0.15, -2.0 * s + 0.15), ok);
    Ok(())
}

fn stability(ctx: &Ctx, rep: &mut Report) -> Res<()> {
    let s = ctx.cfg.s;
    let st = &ctx.cfg.stability;
    let g = &ctx.cfg.grid;
    let tol = ctx.cfg.tolerances.form;
    let lay = ctx.layer()?;
    let lambda = ctx.lambda(1, g.h, 40f64.min(g.x_max), rep)?;
    let levels = default_levels(st.r, s, g.dz_top(s));
    let zeta = null_mode(&lay.grid, 0, st.cutoff_inner, st.cutoff_outer, s, st.r, levels)?;
    let sf = StabilityForm { u: lay.grid.clone(), s, nl: ctx.nl.clone(), lambda };
    let mut rows = vec![];
    let mut push = |trial: String, kind: &str, v: &fraclab::analysis::FormValue| {
        rows.push(vec![trial, kind.into(), e(v.value), e(v.kinetic), e(v.potential), e(v.norm), e(v.normalized())]);
    };
    let nv = stability_form_eval(&sf, &zeta)?;
    push("0".into(), "null_mode", &nv);
    rep.check("null_mode_normalized", nv.normalized(), &format!("|.| <= {tol:e}"), nv.normalized().abs() <= tol);
    let mut worst = f64::INFINITY;
    for k in 0..st.trials {
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.cfg.seed.wrapping_add(k as u64));
        let psi = near_null(&zeta, k, &mut rng);
        let v = stability_form_eval(&sf, &psi)?;
        worst = worst.min(v.normalized());
        push((k + 1).to_string(), if k % 2 == 0 { "random" } else { "near_null" }, &v);
    }
    rep.table("stability", &["trial", "kind", "value", "kinetic", "potential", "norm", "normalized"], rows);
    rep.check("random_min_normalized", worst, &format!(">= -{tol:e}"), worst >= -tol);

    // instability of u ≡ 0 under rescaling
    let tr = GridFunction::centered(1, nodes(2.0, g.h), 2.0, TailModel::Constant(0.0), |x| bump(x, 1.5))?;
    let psi = extend_zero_faces(&tr, s, 2.0, default_levels(2.0, s, g.dz_top(s)))?;
    let tab = rescaling_instability_test(s, &psi, &st.eps_list, &ctx.nl, lambda)?;
    let rows = tab.rows.iter().map(|r| vec![e(r.eps), e(r.value), e(r.kinetic), e(r.potential)]).collect();
    rep.table("rescaling", &["eps", "value", "kinetic", "potential"], rows);
    let neg = tab.rows.iter().filter(|r| r.eps <= 0.05).map(|r| r.value).fold(f64::NEG_INFINITY, f64::max);
    rep.check("rescaled_form_max_for_eps_le_0.05", neg, "< 0", neg < 0.0);
    let ke = 2.0 * s - 1.0;
    rep.check("kinetic_exponent", tab.kinetic_exponent, &format!("within 10% of {ke}"), (tab.kinetic_exponent - ke).abs() <= 0.1 * ke.abs());
    rep.check("potential_exponent", tab.potential_exponent, "within 10% of -1", (tab.potential_exponent + 1.0).abs() <= 0.1);
    Ok(())
}

/// Even trials: a random field. Odd trials: the null mode plus a random
/// field of a tenth of its size, probing the form near its kernel.
fn near_null(zeta: &ExtensionField, k: usize, rng: &mut ChaCha8Rng) -> ExtensionField {
    if k % 2 == 0 {
        return random_psi(zeta, 1.0, rng);
    }
    let p = random_psi(zeta, 1.0, rng);
    let scale = 0.1 * zeta.max_abs() / p.max_abs().max(1e-300);
    zeta.with_values(zeta.values.iter().zip(&p.values).map(|(a, b)| a + scale * b).collect())
}

fn slide_check(u: &GridFunction, name: &str, rep: &mut Report) -> Res<()> {
    let ks: Vec<f64> = (0..=40).map(|k| 0.25 * k as f64).collect();
    let sl = sliding_verify(u, u, &ks)?;
    let rows = sl.steps.iter().map(|st| vec![e(st.k), st.dominated.to_string(), e(st.min_gap)]).collect();
    rep.table(name, &["k", "dominated", "min_gap"], rows);
    let k = sl.k_star.unwrap_or(f64::NAN);
    rep.check(&format!("{name}_k_star"), k, "= 0", k == 0.0);
    Ok(())
}

fn sliding(ctx: &Ctx, rep: &mut Report) -> Res<()> {
    let lay = ctx.layer()?;
    slide_check(&lay.grid, "sliding_layer", rep)?;
    if ctx.cfg.n == 2 {
        let m = ctx.monotone_2d(&lay)?;
        slide_check(&m.grid, "sliding_2d", rep)?;
    }
    Ok(())
}

fn constrained_min(ctx: &Ctx, u: &GridFunction, rep: &mut Report) -> Res<()> {
    let m = &ctx.cfg.minimality;
    let (under, over) = profiles_at_infinity(u)?;
    let profiles = (0..under.len())
        .map(|i| vec![e(under.node(i)[0]), e(under.values[i]), e(over.values[i])])
        .collect();
    rep.table("profiles", &["x1", "under", "over"], profiles);
    let r = constrained_minimality_test(u, &under, &over, ctx.cfg.s, m.r, m.trials, &ctx.nl, ctx.cfg.seed)?;
    let rows = r.values.iter().enumerate().map(|(k, v)| vec![k.to_string(), e(*v)]).collect();
    rep.table("minimality", &["trial", "difference"], rows);
    rep.constant("minimality_rejected", r.rejected as f64);
    let slack = ctx.cfg.tolerances.slack;
    rep.check("minimality_trials", r.trials as f64, "> 0", r.trials > 0);
    rep.check("minimality_min_difference", r.min_difference, &format!(">= -{slack:e}"), r.min_difference >= -slack);
    Ok(())
}

fn glue(ctx: &Ctx, rep: &mut Report) -> Res<()> {
    let s = ctx.cfg.s;
    let g = &ctx.cfg.grid;
    let m = &ctx.cfg.minimality;
    let lay = ctx.layer()?;
    let lambda = ctx.lambda(1, m.glue_h, 20f64.min(g.x_max), rep)?;
    let lf = LocalFunctional { lambda, nl: ctx.nl.clone() };
    let v = GridFunction::centered(1, nodes(g.x_max, m.glue_h), g.x_max, TailModel::ConstantPm1 { axis: 0 }, |x| {
        lay.grid.sample(x)
    })?;
    let levels = default_levels(m.glue_r, s, m.glue_h);
    let e1 = extend(&v, s, m.glue_r, levels)?;
    let m1 = local_minimizer(&e1, &lf, ctx.cfg.tolerances.minimizer, 200_000)?;
    let eu = local_minimizer(&tensorize(&m1.field)?, &lf, ctx.cfg.tolerances.minimizer, 200_000)?.field;
    let over = eu.with_values(vec![1.0; eu.values.len()]);
    let under = eu.with_values(vec![-1.0; eu.values.len()]);
    let mut rows = vec![];
    let mut worst = f64::INFINITY;
    let mut additivity: f64 = 0.0;
    for k in 0..m.glue_trials {
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.cfg.seed.wrapping_add(k as u64));
        let psi = random_psi(&eu, m.psi_amplitude, &mut rng);
        let gc = glue_competitors(&eu, &psi, &under, &over, &lf)?;
        worst = worst.min(gc.min_slack());
        additivity = additivity.max(gc.additivity_error);
        for r in &gc.ledger {
            rows.push(vec![k.to_string(), r.region.into(), r.field.into(), e(r.energy), e(r.bound), e(r.slack)]);
        }
    }
    rep.table("glue_ledger", &["trial", "region", "field", "energy", "bound", "slack"], rows);
    let slack = ctx.cfg.tolerances.slack;
    rep.check("glue_min_slack", worst, &format!(">= -{slack:e}"), worst >= -slack);
    rep.check("glue_additivity", additivity, "<= 1e-10", additivity <= 1e-10);
    Ok(())
}

fn rotated_layer(ctx: &Ctx, lay: &LayerSolution) -> Res<GridFunction> {
    let g = &ctx.cfg.grid;
    let th = ctx.cfg.blowdown.angle.to_radians();
    let dir = vec![th.cos(), th.sin()];
    let profile: Profile1d = layer_profile(lay);
    let tail = TailModel::Ridge { direction: dir.clone(), offset: 0.0, profile: profile.clone() };
    GridFunction::centered(2, nodes(g.x_max2, g.h2), g.x_max2, tail, |x| profile.eval(dir[0] * x[0] + dir[1] * x[1]))
}

fn angle_deg(omega: &[f64]) -> f64 {
    omega[1].atan2(omega[0]).to_degrees()
}

fn angle_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

fn blowdown_table(ctx: &Ctx, u: &GridFunction, expect: Option<f64>, name: &str, rep: &mut Report) -> Res<()> {
    let b = &ctx.cfg.blowdown;
    let rows = blowdown(u, &b.eps_list, b.window, b.nodes)?;
    let table = rows
        .iter()
        .map(|r| {
            let mut row = vec![e(r.eps), e(r.l1)];
            row.extend(r.omega.iter().map(|w| e(*w)));
            row.extend([e(r.c), e(r.level_deviation)]);
            row
        })
        .collect();
    let header: &[&str] = if u.dim == 2 {
        &["eps", "l1", "omega_1", "omega_2", "c", "level_deviation"]
    } else {
        &["eps", "l1", "omega_1", "c", "level_deviation"]
    };
    rep.table(name, header, table);
    let mut by_eps = rows.clone();
    by_eps.sort_by(|a, b| b.eps.total_cmp(&a.eps));
    let monotone = by_eps.windows(2).all(|w| w[1].l1 < w[0].l1);
    rep.check(&format!("{name}_l1_decreasing"), by_eps.last().map_or(f64::NAN, |r| r.l1), "strictly decreasing as eps falls", monotone);
    if let (Some(a), 2) = (expect, u.dim) {
        let worst = rows.iter().map(|r| angle_gap(angle_deg(&r.omega), a)).fold(0.0, f64::max);
        rep.check(&format!("{name}_angle_error_deg"), worst, "<= 1", worst <= 1.0);
    }
    Ok(())
}

fn fit_table(fit: &fraclab::analysis::Fit1d, name: &str, rep: &mut Report) {
    let rows = (0..fit.profile.len()).map(|i| vec![e(fit.profile.node(i)[0]), e(fit.profile.values[i])]).collect();
    rep.table(name, &["t", "u"], rows);
    for (k, w) in fit.omega.iter().enumerate() {
        rep.constant(&format!("{name}_omega_{}", k + 1), *w);
    }
    rep.constant(&format!("{name}_residual"), fit.residual);
}

fn fit(ctx: &Ctx, rep: &mut Report) -> Res<()> {
    let lay = ctx.layer()?;
    let u = rotated_layer(ctx, &lay)?;
    let f = fit_1d(&u)?;
    fit_table(&f, "fit1d", rep);
    let err = angle_gap(angle_deg(&f.omega), ctx.cfg.blowdown.angle);
    rep.check("fit1d_angle_error_deg", err, "<= 0.5", err <= 0.5);
    rep.check("fit1d_residual", f.residual, &format!("<= {:e}", ctx.cfg.tolerances.fit), f.residual <= ctx.cfg.tolerances.fit);
    let g = &ctx.cfg.grid;
    let control = GridFunction::centered(2, nodes(g.x_max2, g.h2), g.x_max2, TailModel::Constant(0.0), |x| {
        x[0].tanh() * x[1].tanh()
    })?;
    let c = fit_1d(&control)?;
    rep.check("fit1d_negative_control_residual", c.residual, "> 0.1", c.residual > 0.1);
    Ok(())
}

fn full_pipeline(ctx: &Ctx, rep: &mut Report) -> Res<()> {
    let s = ctx.cfg.s;
    let g = &ctx.cfg.grid;
    let lay = ctx.layer()?;
    let m = ctx.monotone_2d(&lay)?;
    let u = &m.grid;
    rep.table("solution", &["x1", "x2", "u"], grid_rows(u));
    rep.snapshots.push(("solution.bin".into(), snapshot_bytes(u)?));
    rep.check("residual_2d", m.residual_norm, &format!("<= {:e}", ctx.cfg.tolerances.residual), m.residual_norm <= ctx.cfg.tolerances.residual);
    rep.check("min_slope_2d", m.min_slope, "> 0", m.min_slope > 0.0);
    slide_check(u, "sliding", rep)?;

    // stability of the 2D solution on a small box around the origin
    let r = (0.5 * g.x_max2 / g.h2).round() * g.h2;
    let lambda = ctx.lambda(2, g.h2, r, rep)?;
    let levels = default_levels(r, s, g.dz_top(s));
    let zeta = null_mode(u, 1, 0.25 * r, 0.9 * r, s, r, levels)?;
    let sf = StabilityForm { u: u.clone(), s, nl: ctx.nl.clone(), lambda };
    let nv = stability_form_eval(&sf, &zeta)?;
    let mut worst = f64::INFINITY;
    for k in 0..ctx.cfg.stability.trials {
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.cfg.seed.wrapping_add(k as u64));
        worst = worst.min(stability_form_eval(&sf, &near_null(&zeta, k, &mut rng))?.normalized());
    }
    rep.table(
        "stability",
        &["kind", "normalized"],
        vec![vec!["null_mode".into(), e(nv.normalized())], vec!["random_min".into(), e(worst)]],
    );
    let tol = ctx.cfg.tolerances.form;
    rep.check("random_min_normalized", worst, &format!(">= -{tol:e}"), worst >= -tol);

    constrained_min(ctx, u, rep)?;
    blowdown_table(ctx, u, Some(90.0), "blowdown", rep)?;
    let f = fit_1d(u)?;
    fit_table(&f, "fit1d", rep);
    let step = best_step(u);
    rep.constant("step_omega_angle_deg", angle_deg(&step.omega));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angle_gap_wraps() {
        assert!((angle_gap(359.5, 0.2) - 0.7).abs() < 1e-12);
        assert_eq!(angle_gap(30.0, 30.0), 0.0);
    }

    #[test]
    fn layer_experiment_passes_its_checks() {
        let cfg = ExperimentConfig::parse("experiment = \"layer\"\ns = 0.5\n[grid]\nh = 0.2\nx_max = 20.0\n").unwrap();
        let rep = run(&cfg).unwrap();
        assert!(rep.all_pass(), "{}", rep.checks_csv());
        assert_eq!(rep.tables[0].0, "layer.csv");
        assert!(rep.tables[0].1.starts_with("x,u\n"));
    }
}
