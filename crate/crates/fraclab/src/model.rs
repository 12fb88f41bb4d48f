//! Bistable reaction terms f and their double-well potentials F.

use crate::error::Result;
use crate::quad::adaptive_simpson;

/// Polynomial reaction term f(t) = Σ coeffs[k] t^k.
///
/// Only polynomials are supported, which keeps F, f′ and f″ exact.
#[derive(Debug, Clone, PartialEq)]
pub struct Nonlinearity {
    pub coeffs: Vec<f64>,
    /// Width of the end zones [-1, -1+kappa] and [1-kappa, 1].
    pub kappa: f64,
    /// Lower bound for -f′ in the end zones.
    pub c_kappa: f64,
    /// Hölder exponent of f′ (1 for polynomials).
    pub holder_alpha: f64,
}

const END_ZONE_SAMPLES: usize = 2001;

impl Nonlinearity {
    /// Build from polynomial coefficients, computing c_kappa from the data.
    ///
    /// c_kappa is 0.99 of the sampled minimum of -f′ on the end zones, so the
    /// strict inequality f′ < -c_kappa holds at every sample. A nonpositive
    /// minimum is kept as is and shows up as a failed end-zone check.
    pub fn from_coeffs(coeffs: Vec<f64>, kappa: f64) -> Self {
        let mut nl = Nonlinearity {
            coeffs,
            kappa,
            c_kappa: 0.0,
            holder_alpha: 1.0,
        };
        let m = nl.end_zone_min_neg_slope();
        nl.c_kappa = if m > 0.0 { 0.99 * m } else { m };
        nl
    }

    pub fn f(&self, t: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }

    pub fn f_prime(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        for (k, c) in self.coeffs.iter().enumerate().skip(1).rev() {
            acc = acc * t + k as f64 * c;
        }
        acc
    }

    /// k-th derivative of f.
    pub fn f_derivative(&self, k: usize, t: f64) -> f64 {
        let mut acc = 0.0;
        for (j, c) in self.coeffs.iter().enumerate().skip(k).rev() {
            let falling: f64 = ((j - k + 1)..=j).map(|m| m as f64).product();
            acc = acc * t + falling * c;
        }
        acc
    }

    /// Degree of f.
    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    /// F″ = -f′.
    pub fn potential_second(&self, t: f64) -> f64 {
        -self.f_prime(t)
    }

    /// F(t) = -∫_{-1}^t f, exact for polynomials.
    pub fn potential(&self, t: f64) -> f64 {
        -(self.antiderivative(t) - self.antiderivative(-1.0))
    }

    fn antiderivative(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        for (k, c) in self.coeffs.iter().enumerate().rev() {
            acc = acc * t + c / (k as f64 + 1.0);
        }
        acc * t
    }

    fn end_zone_min_neg_slope(&self) -> f64 {
        let mut m = f64::INFINITY;
        for i in 0..END_ZONE_SAMPLES {
            let d = self.kappa * i as f64 / (END_ZONE_SAMPLES - 1) as f64;
            m = m.min(-self.f_prime(-1.0 + d)).min(-self.f_prime(1.0 - d));
        }
        m
    }

    /// Roots of f in [-1, 1], located by sign changes and bisection.
    pub fn roots_in_unit_interval(&self) -> Vec<f64> {
        let n = 4000;
        let mut roots = Vec::new();
        let mut prev_t = -1.0;
        let mut prev = self.f(prev_t);
        if prev == 0.0 {
            roots.push(-1.0);
        }
        for i in 1..=n {
            let t = -1.0 + 2.0 * i as f64 / n as f64;
            let v = self.f(t);
            if v == 0.0 {
                roots.push(t);
            } else if prev != 0.0 && prev.signum() != v.signum() {
                let (mut a, mut b) = (prev_t, t);
                for _ in 0..80 {
                    let m = 0.5 * (a + b);
                    if self.f(m).signum() == self.f(a).signum() {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                roots.push(0.5 * (a + b));
            }
            prev = v;
            prev_t = t;
        }
        roots
    }
}

/// The cubic model f(t) = t - t³ with kappa = 0.3.
pub fn make_cubic_nonlinearity() -> Nonlinearity {
    Nonlinearity::from_coeffs(vec![0.0, 1.0, 0.0, -1.0], 0.3)
}

/// F(t) = -∫_{-1}^t f(τ)dτ by adaptive quadrature.
///
/// Kept independent of the closed-form `Nonlinearity::potential` so each can
/// check the other.
pub fn potential(nl: &Nonlinearity, t: f64) -> Result<f64> {
    if t == -1.0 {
        return Ok(0.0);
    }
    let v = adaptive_simpson(|x| nl.f(x), -1.0, t, 1e-10)?;
    Ok(-v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub s: f64,
    pub kappa: f64,
    pub c_kappa: f64,
    pub integral_minus: f64,
    pub integral_plus: f64,
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Check the structural assumptions on f for a given s.
pub fn validate_bistable(nl: &Nonlinearity, s: f64) -> Result<ValidationReport> {
    let mut checks = Vec::new();
    let (fm, fp) = (nl.f(-1.0), nl.f(1.0));
    checks.push(Check {
        name: "roots",
        pass: fm.abs() <= 1e-12 && fp.abs() <= 1e-12,
        detail: format!("f(-1)={fm:e}, f(1)={fp:e}"),
    });

    let mut worst = f64::NEG_INFINITY;
    for i in 0..END_ZONE_SAMPLES {
        let d = nl.kappa * i as f64 / (END_ZONE_SAMPLES - 1) as f64;
        worst = worst.max(nl.f_prime(-1.0 + d)).max(nl.f_prime(1.0 - d));
    }
    checks.push(Check {
        name: "end_zone",
        pass: nl.kappa > 0.0 && nl.c_kappa > 0.0 && worst < -nl.c_kappa,
        detail: format!(
            "kappa={}, c_kappa={}, max f' on end zones={worst}",
            nl.kappa, nl.c_kappa
        ),
    });

    let integral_minus = adaptive_simpson(|x| nl.f(x), -1.0, 0.0, 1e-10)?;
    let integral_plus = adaptive_simpson(|x| nl.f(x), 0.0, 1.0, 1e-10)?;
    checks.push(Check {
        name: "sign",
        pass: integral_plus > 0.0 && integral_minus < 0.0,
        detail: format!("int_-1^0 f={integral_minus}, int_0^1 f={integral_plus}"),
    });

    checks.push(Check {
        name: "holder",
        pass: s > 0.0 && s < 1.0 && nl.holder_alpha > 1.0 - 2.0 * s,
        detail: format!("alpha={} vs 1-2s={}", nl.holder_alpha, 1.0 - 2.0 * s),
    });

    Ok(ValidationReport {
        s,
        kappa: nl.kappa,
        c_kappa: nl.c_kappa,
        integral_minus,
        integral_plus,
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn derivatives_of_the_cubic() {
        let nl = make_cubic_nonlinearity();
        for &t in &[-0.7, 0.0, 0.4] {
            assert!((nl.f_derivative(0, t) - nl.f(t)).abs() < 1e-15);
            assert!((nl.f_derivative(1, t) - nl.f_prime(t)).abs() < 1e-15);
            assert!((nl.f_derivative(2, t) + 6.0 * t).abs() < 1e-15);
            assert_eq!(nl.f_derivative(3, t), -6.0);
            assert_eq!(nl.f_derivative(4, t), 0.0);
        }
    }

    #[test]
    fn cubic_values() {
        let nl = make_cubic_nonlinearity();
        assert_eq!(nl.f(1.0), 0.0);
        assert_eq!(nl.f(-1.0), 0.0);
        assert!((nl.f(0.5) - 0.375).abs() < 1e-15);
        assert!((nl.f_prime(0.0) - 1.0).abs() < 1e-15);
        assert_eq!(nl.holder_alpha, 1.0);
        // -f' = 3t^2 - 1 is smallest at |t| = 0.7 inside the end zones.
        assert!((nl.c_kappa - 0.99 * 0.47).abs() < 1e-12);
    }

    #[test]
    fn cubic_potential_closed_form() {
        let nl = make_cubic_nonlinearity();
        for &t in &[-1.0, -0.3, 0.0, 0.4, 1.0] {
            let exact = (1.0 - t * t) * (1.0f64 - t * t) / 4.0;
            assert!((nl.potential(t) - exact).abs() < 1e-14);
            assert!((potential(&nl, t).unwrap() - exact).abs() < 1e-10);
        }
        assert_eq!(potential(&nl, -1.0).unwrap(), 0.0);
        assert!((potential(&nl, 0.0).unwrap() - 0.25).abs() < 1e-10);
    }

    #[test]
    fn cubic_validates() {
        let nl = make_cubic_nonlinearity();
        let r = validate_bistable(&nl, 0.25).unwrap();
        assert!(r.all_pass(), "{:?}", r.checks);
        assert!((r.integral_plus - 0.25).abs() < 1e-10);
        assert!((r.integral_minus + 0.25).abs() < 1e-10);
    }

    #[test]
    fn sign_flipped_fails_end_zone() {
        let nl = Nonlinearity::from_coeffs(vec![0.0, -1.0, 0.0, 1.0], 0.3);
        for &s in &[0.1, 0.5, 0.9] {
            let r = validate_bistable(&nl, s).unwrap();
            assert!(!r.check("end_zone").unwrap().pass);
        }
    }

    #[test]
    fn balanced_fails_sign_condition() {
        // (1 - t^2)(t - 3/8) has zero integral over [0, 1]
        let nl = Nonlinearity::from_coeffs(vec![-0.375, 1.0, 0.375, -1.0], 0.3);
        let r = validate_bistable(&nl, 0.5).unwrap();
        assert!(r.integral_plus.abs() < 1e-10);
        assert!(!r.check("sign").unwrap().pass);
    }

    #[test]
    fn holder_condition_depends_on_s() {
        let mut nl = make_cubic_nonlinearity();
        nl.holder_alpha = 0.4;
        assert!(!validate_bistable(&nl, 0.25).unwrap().check("holder").unwrap().pass);
        assert!(validate_bistable(&nl, 0.4).unwrap().check("holder").unwrap().pass);
    }

    #[test]
    fn roots_of_cubic() {
        let r = make_cubic_nonlinearity().roots_in_unit_interval();
        assert_eq!(r.len(), 3);
        assert!((r[1]).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn potential_derivative_is_minus_f(t in -1.0f64..1.0) {
            let nl = make_cubic_nonlinearity();
            let h = 1e-5;
            let d = (nl.potential(t + h) - nl.potential(t - h)) / (2.0 * h);
            prop_assert!((d + nl.f(t)).abs() < 1e-6);
        }

        #[test]
        fn potential_nonnegative_on_unit_interval(t in -1.0f64..=1.0) {
            let nl = make_cubic_nonlinearity();
            prop_assert!(nl.potential(t) >= 0.0);
        }
    }
}
