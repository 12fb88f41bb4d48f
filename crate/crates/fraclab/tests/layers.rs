//! Qualitative properties of computed layers and monotone solutions.

use fraclab::analysis::{blowdown, fit_line, sliding_verify, stability_form_eval, null_mode, StabilityForm};
use fraclab::energy::{default_levels, gagliardo_functional, Omega};
use fraclab::fracop::{FracLaplacian, GridFunction, TailModel};
use fraclab::model::make_cubic_nonlinearity;
use fraclab::solver::{layer_profile, relax, solve_layer, solve_monotone_2d, tensorized_tail, LayerSolution};

fn layer(s: f64, n: usize) -> LayerSolution {
    solve_layer(&make_cubic_nonlinearity(), s, 40.0, n, 1e-10).unwrap()
}

/// Slope of log(1 - u) against log x over [a, b].
fn tail_slope(u: &GridFunction, a: f64, b: f64) -> f64 {
    let pts: Vec<(f64, f64)> = (0..u.len())
        .map(|i| (u.node(i)[0], u.values[i]))
        .filter(|&(x, _)| x >= a && x <= b)
        .map(|(x, v)| (x.ln(), (1.0 - v).ln()))
        .collect();
    fit_line(&pts).0
}

#[test]
fn layer_tails_decay_algebraically_with_exponent_2s() {
    for &s in &[0.25, 0.5] {
        let sol = layer(s, 801);
        let slope = tail_slope(&sol.grid, 4.0, 16.0);
        eprintln!("s={s}: tail slope {slope}");
        assert!((slope + 2.0 * s).abs() < 0.2 * 2.0 * s + 0.05, "s={s}: slope {slope}");
    }
}

#[test]
fn smaller_s_gives_a_flatter_layer() {
    let a = layer(0.25, 801);
    let b = layer(0.5, 801);
    for x in [2.0, 5.0, 10.0, 20.0] {
        assert!(a.grid.sample(&[x]) < b.grid.sample(&[x]), "x = {x}");
    }
}

#[test]
fn odd_symmetry_survives_unsymmetrized_relaxation() {
    let nl = make_cubic_nonlinearity();
    let sol = layer(0.5, 401);
    let u = relax(&sol, &nl, 0.5, 100, false).unwrap();
    let n = u.len();
    let drift = (0..n).map(|i| (u.values[i] + u.values[n - 1 - i]).abs()).fold(0.0, f64::max);
    assert!(drift <= 1e-8, "drift {drift:e}");
}

#[test]
fn periodic_operator_commutes_with_shifts() {
    let n = 128;
    let h = 0.1;
    let u = GridFunction::from_fn(vec![n], h, vec![0.0], TailModel::Periodic, |x| {
        let t = x[0] * std::f64::consts::TAU / (n as f64 * h);
        t.sin() + 0.3 * (3.0 * t).cos()
    })
    .unwrap();
    let op = FracLaplacian::new(&u, 0.4).unwrap();
    let lu = op.apply(&u.values);
    let k = 17;
    let shifted: Vec<f64> = (0..n).map(|i| u.values[(i + k) % n]).collect();
    let ls = op.apply(&shifted);
    let err = (0..n).map(|i| (ls[i] - lu[(i + k) % n]).abs()).fold(0.0, f64::max);
    assert!(err < 1e-12, "{err:e}");
}

#[test]
fn gagliardo_energy_of_the_layer_grows_like_r_to_1_minus_2s() {
    let s = 0.25;
    let nl = make_cubic_nonlinearity();
    let sol = layer(s, 801);
    let rs = [4.0, 8.0, 16.0, 32.0];
    let e: Vec<f64> = rs
        .iter()
        .map(|&r| gagliardo_functional(&sol.grid, &Omega::ball_inf(1, r), s, &nl).unwrap().value)
        .collect();
    assert!(e.windows(2).all(|w| w[1] > w[0]));
    // E(R) = c R^{1-2s} + O(1): differences over doubling R cancel the constant
    let d: Vec<f64> = e.windows(2).map(|w| w[1] - w[0]).collect();
    let expo: Vec<f64> = d.windows(2).map(|w| (w[1] / w[0]).log2()).collect();
    eprintln!("energies {e:?}, exponents {expo:?}");
    let last = *expo.last().unwrap();
    assert!((last - (1.0 - 2.0 * s)).abs() < 0.1, "exponent {last}");
}

#[test]
fn tensorized_solution_matches_the_layer_at_equal_spacing() {
    let s = 0.5;
    let nl = make_cubic_nonlinearity();
    let lay = solve_layer(&nl, s, 40.0, 161, 1e-10).unwrap();
    let m = solve_monotone_2d(&nl, s, [33, 33], 0.5, tensorized_tail(&layer_profile(&lay)), 1e-10).unwrap();
    let u = &m.grid;
    let mut worst: f64 = 0.0;
    for f in 0..u.len() {
        let x = u.node(f);
        worst = worst.max((u.values[f] - lay.grid.sample(&[x[1]])).abs());
    }
    eprintln!("tensorized deviation {worst:e}");
    assert!(worst < 2e-2, "{worst:e}");
}

#[test]
fn sliding_and_blowdown_see_a_rotated_layer_consistently() {
    let lay = layer(0.5, 801);
    let profile = layer_profile(&lay);
    let th = 120f64.to_radians();
    let dir = vec![th.cos(), th.sin()];
    let tail = TailModel::Ridge { direction: dir.clone(), offset: 0.0, profile: profile.clone() };
    let u = GridFunction::centered(2, 41, 10.0, tail, |x| profile.eval(dir[0] * x[0] + dir[1] * x[1])).unwrap();
    let rows = blowdown(&u, &[1.0, 0.5, 0.25], 3.0, 41).unwrap();
    for r in &rows {
        let deg = r.omega[1].atan2(r.omega[0]).to_degrees();
        assert!((deg - 120.0).abs() < 1.0, "eps {}: {deg}", r.eps);
        assert_eq!(r.coarse_index, rows[0].coarse_index);
    }
    // the rotated layer is still increasing in x_2, so it slides onto itself
    let ks: Vec<f64> = (0..=8).map(|k| 0.5 * k as f64).collect();
    assert_eq!(sliding_verify(&u, &u, &ks).unwrap().k_star, Some(0.0));
}

#[test]
fn stability_form_is_invariant_under_moving_the_cutoff_window() {
    let s = 0.5;
    let nl = make_cubic_nonlinearity();
    let sol = layer(s, 401);
    let sf = StabilityForm { u: sol.grid.clone(), s, nl, lambda: 0.5 };
    let levels = default_levels(40.0, s, 0.4);
    let a = null_mode(&sol.grid, 0, 6.0, 14.0, s, 40.0, levels).unwrap();
    let b = null_mode(&sol.grid, 0, 8.0, 16.0, s, 40.0, levels).unwrap();
    let va = stability_form_eval(&sf, &a).unwrap().normalized();
    let vb = stability_form_eval(&sf, &b).unwrap().normalized();
    eprintln!("null mode forms {va:e} {vb:e}");
    assert!(va.abs() < 2e-2 && vb.abs() < 2e-2);
}
