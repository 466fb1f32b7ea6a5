//! Delay-dependent two-photon overlap under the detuning drift model.
//!
//! Two exponential wavepackets with lifetime `tau` and relative detuning `x`
//! overlap with `1 / (1 + tau^2 x^2)`. For photons emitted `dt` apart the
//! relative detuning of the Ornstein-Uhlenbeck drift is Gaussian with
//! variance `2 sigma^2 (1 - exp(-dt / tau_d))`, so with `u = tau^2 var`
//!
//! ```text
//! M(dt) = E[1 / (1 + u Z^2)] = integral_0^inf exp(-t - u t^2 / 2) dt
//!       = sqrt(pi) z exp(z^2) erfc(z),   z = 1 / sqrt(2u).
//! ```

use crate::error::require_positive;
use crate::{Error, Result};

/// `E[1 / (1 + u Z^2)]` for standard normal `Z`.
pub fn lorentzian_gauss_mean(u: f64) -> f64 {
    if u <= 0.0 {
        return 1.0;
    }
    let z = 1.0 / (2.0 * u).sqrt();
    if z >= 10.0 {
        // asymptotic series, sum (-1)^n (2n-1)!! u^n
        let mut term = 1.0;
        let mut sum = 1.0;
        for n in 1..8 {
            term *= -((2 * n - 1) as f64) * u;
            sum += term;
        }
        return sum;
    }
    std::f64::consts::PI.sqrt() * z * (z * z).exp() * libm::erfc(z)
}

/// Inverse of [`lorentzian_gauss_mean`] on `(0, 1)`.
pub fn lorentzian_gauss_mean_inv(m: f64) -> Result<f64> {
    if !(m > 0.0 && m < 1.0) {
        return Err(Error::domain(format!("overlap must lie in (0, 1), got {m}")));
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while lorentzian_gauss_mean(hi) > m {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::NonConvergence("overlap inversion did not bracket".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if lorentzian_gauss_mean(mid) > m {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Expected overlap of photons emitted `dt` seconds apart.
pub fn overlap(dt: f64, lifetime: f64, sigma: f64, tau_d: f64) -> Result<f64> {
    if !(dt >= 0.0) {
        return Err(Error::domain(format!("dt must be >= 0, got {dt}")));
    }
    if sigma == 0.0 {
        return Ok(1.0);
    }
    require_positive("detuning_tau", tau_d)?;
    let var = 2.0 * sigma * sigma * (-(-dt / tau_d).exp_m1());
    Ok(lorentzian_gauss_mean(lifetime * lifetime * var))
}

/// Detuning parameters of a calibration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlapCalibration {
    pub detuning_sigma: f64,
    pub detuning_tau: f64,
}

/// Solves `(sigma, tau_d)` so that the overlap passes through `(dt1, m1)` and
/// `(dt2, m2)` with `dt1 < dt2` and `m1 > m2`.
pub fn calibrate_overlap(lifetime: f64, (dt1, m1): (f64, f64), (dt2, m2): (f64, f64)) -> Result<OverlapCalibration> {
    require_positive("lifetime", lifetime)?;
    require_positive("dt1", dt1)?;
    if !(dt2 > dt1) {
        return Err(Error::domain("calibration delays must satisfy dt1 < dt2"));
    }
    if !(m1 > m2) {
        return Err(Error::domain("overlap must decrease between the calibration points"));
    }
    let u1 = lorentzian_gauss_mean_inv(m1)?;
    let u2 = lorentzian_gauss_mean_inv(m2)?;
    let target = u2 / u1;
    // the ratio rises from 1 (tau_d -> 0) to dt2/dt1 (tau_d -> inf)
    if target >= dt2 / dt1 {
        return Err(Error::domain("calibration points require a faster-than-linear overlap decay"));
    }
    let ratio = |td: f64| (-(-dt2 / td).exp_m1()) / (-(-dt1 / td).exp_m1());
    let (mut lo, mut hi) = (dt1 * 1e-3, dt1);
    while ratio(hi) < target {
        hi *= 2.0;
        if hi > dt2 * 1e12 {
            return Err(Error::NonConvergence("detuning_tau did not bracket".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ratio(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    let tau_d = 0.5 * (lo + hi);
    let var1 = -(-dt1 / tau_d).exp_m1();
    let sigma = (u1 / (2.0 * lifetime * lifetime * var1)).sqrt();
    Ok(OverlapCalibration { detuning_sigma: sigma, detuning_tau: tau_d })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_against_quadrature() {
        for &u in &[1e-4, 1e-3, 4.9e-3, 5.1e-3, 0.01, 0.086, 0.5, 3.0, 50.0] {
            // trapezoid on exp(-t - u t^2 / 2) over [0, 60]
            let n = 600_000;
            let h = 60.0 / n as f64;
            let g = |t: f64| (-t - u * t * t / 2.0).exp();
            let quad = h * ((1..n).map(|i| g(i as f64 * h)).sum::<f64>() + 0.5 * (g(0.0) + g(60.0)));
            let got = lorentzian_gauss_mean(u);
            assert!((got - quad).abs() < 1e-9, "u={u}: {got} vs {quad}");
        }
        assert!((lorentzian_gauss_mean(0.01) - 0.990_285_964_717_319_2).abs() < 1e-13);
    }

    #[test]
    fn inverse_round_trip() {
        for &m in &[0.5, 0.91, 0.93, 0.999] {
            let u = lorentzian_gauss_mean_inv(m).unwrap();
            assert!((lorentzian_gauss_mean(u) - m).abs() < 1e-13);
        }
        assert!((lorentzian_gauss_mean_inv(0.93).unwrap() - 0.086_019_074_155_138_17).abs() < 1e-12);
        assert!(lorentzian_gauss_mean_inv(1.0).is_err());
    }

    #[test]
    fn calibration_matches_reference() {
        let c = calibrate_overlap(184e-12, (12.1e-9, 0.93), (242e-9, 0.91)).unwrap();
        assert!((c.detuning_tau / 9.147_766_170_146_28e-9 - 1.0).abs() < 1e-9);
        assert!((c.detuning_sigma / 1.315_943_339_132_862e9 - 1.0).abs() < 1e-9);
        let m1 = overlap(12.1e-9, 184e-12, c.detuning_sigma, c.detuning_tau).unwrap();
        let m2 = overlap(242e-9, 184e-12, c.detuning_sigma, c.detuning_tau).unwrap();
        assert!((m1 - 0.93).abs() < 1e-12 && (m2 - 0.91).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_points() {
        assert!(calibrate_overlap(184e-12, (12.1e-9, 0.91), (242e-9, 0.93)).is_err());
        assert!(calibrate_overlap(184e-12, (12.1e-9, 0.93), (12.1e-9, 0.91)).is_err());
        assert!(overlap(-1.0, 184e-12, 1e9, 1e-8).is_err());
    }
}
