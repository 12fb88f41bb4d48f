//! Fourier-multiplier reference for periodic grids.

use super::grid::GridFunction;
use crate::conv::fft_nd;
use crate::error::{Error, Result};
use rustfft::num_complex::Complex64;
use std::f64::consts::PI;

/// (-Δ)^s by the symbol |k|^{2s} on a periodic, power-of-two grid.
pub fn frac_laplacian_spectral(u: &GridFunction, s: f64) -> Result<GridFunction> {
    if !u.tail.is_periodic() {
        return Err(Error::Contract("spectral evaluation needs a periodic tail".into()));
    }
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::Domain(format!("s = {s} outside (0, 1)")));
    }
    if let Some(n) = u.shape.iter().find(|n| !n.is_power_of_two()) {
        return Err(Error::Contract(format!("grid size {n} is not a power of two")));
    }
    let mut buf: Vec<Complex64> = u.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_nd(&mut buf, &u.shape, false);
    let mut idx = vec![0usize; u.dim];
    for (flat, b) in buf.iter_mut().enumerate() {
        super::grid::unflatten(&u.shape, flat, &mut idx);
        let mut k2 = 0.0;
        for d in 0..u.dim {
            let n = u.shape[d] as i64;
            let mut m = idx[d] as i64;
            if m > n / 2 {
                m -= n;
            }
            let k = 2.0 * PI * m as f64 / (n as f64 * u.spacing);
            k2 += k * k;
        }
        *b *= k2.powf(s);
    }
    fft_nd(&mut buf, &u.shape, true);
    Ok(u.with_values(buf.iter().map(|c| c.re).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fracop::TailModel;

    #[test]
    fn plane_wave_eigenfunction() {
        let n = 32;
        let h = 2.0 * PI / n as f64;
        let u = GridFunction::from_fn(vec![n, n], h, vec![0.0, 0.0], TailModel::Periodic, |x| {
            (3.0 * x[0] - 2.0 * x[1]).sin()
        })
        .unwrap();
        let v = frac_laplacian_spectral(&u, 0.3).unwrap();
        let lam = 13f64.powf(0.3);
        for (a, b) in v.values.iter().zip(&u.values) {
            assert!((a - lam * b).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_non_power_of_two() {
        let u = GridFunction::from_fn(vec![12], 0.5, vec![0.0], TailModel::Periodic, |_| 0.0).unwrap();
        assert!(frac_laplacian_spectral(&u, 0.5).is_err());
    }
}
