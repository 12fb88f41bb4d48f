//! The Poisson kernel P(x, z) = c̄ z^{2s} / (|x|² + z²)^{(n+2s)/2}.

use crate::error::{Error, Result};
use crate::fracop::exterior::over_faces;
use crate::quad::{graded_breaks, radial_tail, with_extra_breaks, GaussRule};
use statrs::function::beta::{beta_reg, ln_beta};
use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq)]
pub struct PoissonKernel {
    pub n: usize,
    pub s: f64,
    pub a: f64,
    pub cbar: f64,
}

/// Surface area of the unit sphere in ℝⁿ.
pub fn sphere_area(n: usize) -> f64 {
    2.0 * (0.5 * n as f64 * PI.ln() - ln_gamma(0.5 * n as f64)).exp()
}

impl PoissonKernel {
    /// c̄ is fixed by normalizing ∫P(x, 1)dx = 1 numerically: the radial
    /// integral ∫ r^{n-1}(1+r²)^{-(n+2s)/2} dr is split at r = 1, with the
    /// far part handled in the decay variable of `radial_tail`.
    pub fn new(n: usize, s: f64) -> Result<Self> {
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::Domain(format!("s = {s} outside (0, 1)")));
        }
        if !(1..=3).contains(&n) {
            return Err(Error::Domain(format!("dimension {n} not in 1..=3")));
        }
        let e = -(n as f64 + 2.0 * s) / 2.0;
        let rule = GaussRule::new(24);
        let near = rule.integrate_panels(&[0.0, 0.25, 0.5, 1.0], |r| {
            r.powi(n as i32 - 1) * (1.0 + r * r).powf(e)
        });
        let far = radial_tail(1.0, s, &rule, |r| {
            if r.is_infinite() {
                1.0
            } else {
                (r * r / (1.0 + r * r)).powf(-e)
            }
        });
        let mass = sphere_area(n) * (near + far);
        Ok(PoissonKernel {
            n,
            s,
            a: 1.0 - 2.0 * s,
            cbar: 1.0 / mass,
        })
    }

    pub fn eval(&self, x: &[f64], z: f64) -> Result<f64> {
        if z <= 0.0 {
            return Err(Error::Domain(format!("z = {z} must be positive")));
        }
        let r2: f64 = x.iter().map(|v| v * v).sum();
        Ok(self.profile(r2, z))
    }

    /// P as a function of |x|² (z > 0 assumed).
    pub fn profile(&self, r2: f64, z: f64) -> f64 {
        self.cbar * z.powf(2.0 * self.s) * (r2 + z * z).powf(-(self.n as f64 + 2.0 * self.s) / 2.0)
    }

    fn ray_scale(&self) -> f64 {
        0.5 * self.cbar * ln_beta(self.s, 0.5 * self.n as f64).exp()
    }

    fn ray_cdf(&self, r: f64, z: f64) -> f64 {
        if r.is_infinite() {
            return 0.0;
        }
        let c2 = z * z / (r * r + z * z);
        beta_reg(self.s, 0.5 * self.n as f64, c2)
    }

    /// ∫_{r0}^{r1} P(rθ, z) r^{n-1} dr, via the regularized incomplete beta
    /// function in the variable cos²θ = z²/(r²+z²).
    pub fn ray(&self, r0: f64, r1: f64, z: f64) -> f64 {
        self.ray_scale() * (self.ray_cdf(r0, z) - self.ray_cdf(r1, z))
    }

    /// ∫ P(x, z) dx over ℝⁿ by Cartesian quadrature on [-L, L]ⁿ plus the
    /// exterior ray integrals. Independent of the radial route used for c̄.
    pub fn mass(&self, z: f64) -> f64 {
        let l = 50.0 * z;
        let rule = GaussRule::new(10);
        let br = graded_breaks(-l, l, 0.0, z / 64.0);
        let inner = match self.n {
            1 => rule.integrate_panels(&br, |x| self.profile(x * x, z)),
            2 => rule.integrate_panels(&br, |x| {
                rule.integrate_panels(&br, |y| self.profile(x * x + y * y, z))
            }),
            _ => rule.integrate_panels(&br, |x| {
                rule.integrate_panels(&br, |y| {
                    rule.integrate_panels(&br, |w| self.profile(x * x + y * y + w * w, z))
                })
            }),
        };
        let lo = vec![-l; self.n];
        let hi = vec![l; self.n];
        let zero = vec![0.0; self.n];
        let faces = vec![vec![]; self.n];
        let outer = over_faces(&zero, &lo, &hi, &GaussRule::new(12), &faces, |_, r0| {
            self.ray(r0, f64::INFINITY, z)
        });
        inner + outer
    }

    /// ∫ P(x - y, z) ψ(y) dy for the tensor hat ψ of width h centered at c.
    pub fn hat_weight(&self, x: &[f64], c: &[f64], h: f64, z: f64) -> f64 {
        let rule = GaussRule::new(8);
        let n = self.n;
        let mut pts = vec![];
        let mut wts = vec![];
        for d in 0..n {
            let foot = (x[d] - c[d]).clamp(-h, h);
            let br = with_extra_breaks(graded_breaks(-h, h, foot, z.max(1e-3 * h)), &[0.0]);
            let (mut xs, mut ws) = (vec![], vec![]);
            for w in br.windows(2) {
                rule.push_scaled(w[0], w[1], &mut xs, &mut ws);
            }
            // fold in the hat profile
            for (e, wt) in xs.iter().zip(ws.iter_mut()) {
                *wt *= 1.0 - e.abs() / h;
            }
            pts.push(xs);
            wts.push(ws);
        }
        let counts: Vec<usize> = pts.iter().map(|p| p.len()).collect();
        let total: usize = counts.iter().product();
        let mut acc = 0.0;
        for flat in 0..total {
            let mut rem = flat;
            let mut w = 1.0;
            let mut r2 = 0.0;
            for d in 0..n {
                let i = rem % counts[d];
                rem /= counts[d];
                let dy = x[d] - c[d] - pts[d][i];
                r2 += dy * dy;
                w *= wts[d][i];
            }
            if w != 0.0 {
                acc += w * self.profile(r2, z);
            }
        }
        acc
    }
}

/// t^s K_s(t) from K_ν(t) = ∫_0^∞ exp(-t cosh u) cosh(νu) du.
pub fn scaled_bessel_k(s: f64, t: f64) -> f64 {
    if t == 0.0 {
        return 2f64.powf(s - 1.0) * ln_gamma(s).exp();
    }
    if t > 700.0 {
        return 0.0;
    }
    // integrand below e^{-40} relative to its peak beyond u_max
    let u_max = (1.0 + 40.0 / t).acosh() + 1.0;
    let rule = GaussRule::new(16);
    let panels = 32;
    let mut breaks = Vec::with_capacity(panels + 1);
    for k in 0..=panels {
        breaks.push(u_max * k as f64 / panels as f64);
    }
    let k = rule.integrate_panels(&breaks, |u| (-t * u.cosh()).exp() * (s * u).cosh());
    t.powf(s) * k
}

/// Fourier symbol of the extension: φ(t) = 2^{1-s}/Γ(s) t^s K_s(t), φ(0) = 1.
pub fn extension_symbol(s: f64, t: f64) -> f64 {
    2f64.powf(1.0 - s) / ln_gamma(s).exp() * scaled_bessel_k(s, t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cbar_oracle(n: usize, s: f64) -> f64 {
        // Γ(n/2+s) / (π^{n/2} Γ(s)), i.e. 1/(|S^{n-1}| B(s, n/2)/2)
        (ln_gamma(0.5 * n as f64 + s) - 0.5 * n as f64 * PI.ln() - ln_gamma(s)).exp()
    }

    #[test]
    fn cbar_matches_beta_function_closed_form() {
        for n in 1..=3 {
            for &s in &[0.1, 0.25, 0.5, 0.8] {
                let k = PoissonKernel::new(n, s).unwrap();
                let o = cbar_oracle(n, s);
                assert!((k.cbar - o).abs() < 1e-9 * o, "n={n} s={s}: {} vs {o}", k.cbar);
            }
        }
    }

    #[test]
    fn half_space_case_is_cauchy_kernel() {
        // s = 1/2, n = 1: P = z / (π (x² + z²))
        let k = PoissonKernel::new(1, 0.5).unwrap();
        let v = k.eval(&[0.7], 1.3).unwrap();
        assert!((v - 1.3 / (PI * (0.49 + 1.69))).abs() < 1e-10);
    }

    #[test]
    fn ray_integrals_add_up() {
        let k = PoissonKernel::new(2, 0.3).unwrap();
        let whole = k.ray(0.0, f64::INFINITY, 0.4);
        assert!((whole * sphere_area(2) - 1.0).abs() < 1e-9);
        let split = k.ray(0.0, 1.0, 0.4) + k.ray(1.0, f64::INFINITY, 0.4);
        assert!((split - whole).abs() < 1e-14);
    }

    #[test]
    fn domain_errors() {
        assert!(PoissonKernel::new(1, 1.0).is_err());
        let k = PoissonKernel::new(1, 0.5).unwrap();
        assert!(k.eval(&[0.0], 0.0).is_err());
    }

    #[test]
    fn bessel_symbol_limits() {
        for &s in &[0.25, 0.5, 0.75] {
            assert!((extension_symbol(s, 1e-9) - 1.0).abs() < 1e-3);
            assert!((extension_symbol(s, 0.0) - 1.0).abs() < 1e-12);
        }
        // s = 1/2: φ(t) = e^{-t}
        for &t in &[0.1, 1.0, 5.0] {
            assert!((extension_symbol(0.5, t) - (-t).exp()).abs() < 1e-10);
        }
    }

    #[test]
    fn hat_weights_sum_to_kernel_mass() {
        // hats at all integer nodes form a partition of unity
        let k = PoissonKernel::new(1, 0.35).unwrap();
        let h = 0.2;
        let z = 0.05;
        let mut total = 0.0;
        for j in -200i32..=200 {
            total += k.hat_weight(&[0.0], &[j as f64 * h], h, z);
        }
        let outside = 2.0 * k.ray(200.0 * h + h, f64::INFINITY, z);
        assert!((total + outside - 1.0).abs() < 1e-4, "{}", total + outside);
    }
}
