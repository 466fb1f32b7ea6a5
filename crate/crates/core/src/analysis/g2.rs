use serde::{Deserialize, Serialize};

use super::histogram::Histogram;
use crate::units::seconds_to_ps;
use crate::{Error, Result};

/// Central-to-side peak area ratio of a pulsed correlation histogram.
///
/// The side reference is the mean over peaks `k = ±1..=±n_side_peaks`. When
/// the source blinks, side peaks sit on the bunching envelope; keeping
/// `n_side_peaks * pulse_period` well below its correlation time keeps that
/// bias small.
pub fn g2_zero(hist: &Histogram, pulse_period: f64, peak_halfwidth: f64, n_side_peaks: usize) -> Result<f64> {
    let (t, hw) = peak_geometry(pulse_period, peak_halfwidth)?;
    if n_side_peaks == 0 {
        return Err(Error::domain("n_side_peaks must be >= 1"));
    }
    let n = n_side_peaks as i64;
    if !hist.covers(n * t, hw) {
        return Err(Error::InsufficientData(format!("histogram does not reach side peak {n_side_peaks}")));
    }
    let center = hist.area(0, hw) as f64;
    let side: u64 = (1..=n).map(|k| hist.area(k * t, hw) + hist.area(-k * t, hw)).sum();
    if side == 0 {
        return Err(Error::InsufficientData("side peaks are empty".into()));
    }
    Ok(center / (side as f64 / (2 * n) as f64))
}

pub(crate) fn peak_geometry(pulse_period: f64, peak_halfwidth: f64) -> Result<(i64, i64)> {
    if !(pulse_period > 0.0) {
        return Err(Error::domain("pulse_period must be > 0"));
    }
    if !(peak_halfwidth > 0.0 && 2.0 * peak_halfwidth < pulse_period) {
        return Err(Error::domain("peak_halfwidth must lie in (0, pulse_period / 2)"));
    }
    Ok((seconds_to_ps(pulse_period), seconds_to_ps(peak_halfwidth)))
}

/// Normalised peak-area envelope of a long correlation histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    /// Delay of each point (s).
    pub tau: Vec<f64>,
    pub value: Vec<f64>,
    /// Estimated correlation time of the bunching (s), when measurable.
    pub correlation_time_estimate: Option<f64>,
    pub warnings: Vec<String>,
}

/// Per-peak areas of `hist` averaged over `±smooth_halfwidth` and scaled so
/// the far tail (the outer quarter of the span) averages to one. The central
/// peak is neither reported nor used in the averages.
pub fn bunching_envelope(hist: &Histogram, pulse_period: f64, smooth_halfwidth: f64) -> Result<Envelope> {
    if !(pulse_period > 0.0) {
        return Err(Error::domain("pulse_period must be > 0"));
    }
    if !(smooth_halfwidth >= pulse_period) {
        return Err(Error::domain("smooth_halfwidth must be at least one pulse period"));
    }
    let t = seconds_to_ps(pulse_period);
    // a peak owns the bins with centres in [kT - T/2, kT + T/2)
    let hw = (t - 1) / 2;
    let k_max = (0..)
        .take_while(|&k: &i64| hist.covers((k + 1) * t, hw))
        .count() as i64;
    if k_max < 4 {
        return Err(Error::InsufficientData("histogram spans fewer than 4 pulse periods".into()));
    }
    let ks: Vec<i64> = (-k_max..=k_max).filter(|&k| k != 0).collect();
    let areas: Vec<f64> = ks.iter().map(|&k| hist.area(k * t, hw) as f64).collect();

    let tail_from = (0.75 * k_max as f64).ceil() as i64;
    let tail: Vec<f64> = ks.iter().zip(&areas).filter(|(k, _)| k.abs() >= tail_from).map(|(_, &a)| a).collect();
    let tail_mean = tail.iter().sum::<f64>() / tail.len() as f64;
    if !(tail_mean > 0.0) {
        return Err(Error::InsufficientData("envelope tail is empty".into()));
    }

    let m = (smooth_halfwidth / pulse_period).floor() as i64;
    let idx = |k: i64| -> Option<usize> {
        if k == 0 || k.abs() > k_max {
            None
        } else if k < 0 {
            Some((k + k_max) as usize)
        } else {
            Some((k + k_max - 1) as usize)
        }
    };
    let mut tau = Vec::with_capacity(ks.len());
    let mut value = Vec::with_capacity(ks.len());
    for &k in &ks {
        let (sum, n) = (k - m..=k + m)
            .filter_map(idx)
            .fold((0.0, 0usize), |(s, n), i| (s + areas[i], n + 1));
        tau.push(k as f64 * pulse_period);
        value.push(sum / n as f64 / tail_mean);
    }

    let tc = estimate_correlation_time(&tau, &value);
    let span = k_max as f64 * pulse_period;
    let mut warnings = Vec::new();
    if let Some(tc) = tc {
        if span < 10.0 * tc {
            warnings.push(format!(
                "histogram span {span:.3e} s is shorter than 10 correlation times ({tc:.3e} s); the asymptote may be biased"
            ));
        }
    }
    Ok(Envelope { tau, value, correlation_time_estimate: tc, warnings })
}

/// `integral (g - 1) dtau / (g(0+) - 1)` on the positive side, which equals
/// the decay time for an exponential excess.
fn estimate_correlation_time(tau: &[f64], value: &[f64]) -> Option<f64> {
    let pos: Vec<(f64, f64)> = tau.iter().zip(value).filter(|(t, _)| **t > 0.0).map(|(&t, &v)| (t, v)).collect();
    let first = pos.first()?;
    let peak = first.1 - 1.0;
    if !(peak > 1e-6) {
        return None;
    }
    let dt = pos.get(1).map(|p| p.0 - first.0)?;
    let area: f64 = pos.iter().map(|(_, v)| (v - 1.0) * dt).sum();
    let tc = area / peak;
    (tc > 0.0).then_some(tc)
}

/// Telegraph bunching model `g(tau) = 1 + ((1 - q) / q) exp(-|tau| / tau_c)`
/// with `tau_c = t_on (1 - q)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlinkingFit {
    pub q: f64,
    /// Mean bright residence time (s); `None` for a flat envelope.
    pub t_on: Option<f64>,
    pub t_off: Option<f64>,
    pub correlation_time: Option<f64>,
    /// Sum of squared residuals.
    pub residual: f64,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

pub fn blinking_model(tau: f64, q: f64, t_on: f64) -> f64 {
    if q >= 1.0 {
        return 1.0;
    }
    1.0 + (1.0 - q) / q * (-tau.abs() / (t_on * (1.0 - q))).exp()
}

fn ssr(tau: &[f64], y: &[f64], q: f64, t_on: f64) -> f64 {
    tau.iter().zip(y).map(|(&t, &v)| (blinking_model(t, q, t_on) - v).powi(2)).sum()
}

const Q_MIN: f64 = 1e-6;
const Q_MAX: f64 = 1.0 - 1e-12;

/// Least-squares fit of the telegraph bunching model.
///
/// A coarse grid (q = 0.1..0.9, t_on log-spaced over 0.1..100 µs) seeds a
/// Levenberg-Marquardt refinement in `(q, ln t_on)`.
pub fn fit_blinking(envelope: &Envelope) -> Result<BlinkingFit> {
    fit_blinking_points(&envelope.tau, &envelope.value)
}

pub fn fit_blinking_points(tau: &[f64], y: &[f64]) -> Result<BlinkingFit> {
    if tau.len() != y.len() {
        return Err(Error::domain("tau and value lengths differ"));
    }
    if tau.len() < 20 {
        return Err(Error::InsufficientData(format!("{} envelope points, need >= 20", tau.len())));
    }
    if y.iter().all(|v| (v - 1.0).abs() <= 1e-9) {
        return Ok(BlinkingFit {
            q: 1.0,
            t_on: None,
            t_off: None,
            correlation_time: None,
            residual: ssr(tau, y, 1.0, 1.0),
            iterations: 0,
            warnings: vec!["flat envelope: no blinking, t_on undefined".into()],
        });
    }

    let mut best = (f64::INFINITY, 0.5, 1e-6);
    for qi in 1..=9 {
        let q = qi as f64 / 10.0;
        for ti in 0..31 {
            let t_on = 1e-7 * 10f64.powf(3.0 * ti as f64 / 30.0);
            let r = ssr(tau, y, q, t_on);
            if r < best.0 {
                best = (r, q, t_on);
            }
        }
    }

    let (mut q, mut l) = (best.1, best.2.ln());
    let mut r = best.0;
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = false;
    for it in 0..500 {
        iterations = it + 1;
        let t_on = l.exp();
        let a = (1.0 - q) / q;
        let tc = t_on * (1.0 - q);
        let (mut jtj, mut jtr) = ([[0.0f64; 2]; 2], [0.0f64; 2]);
        for (&t, &v) in tau.iter().zip(y) {
            let x = t.abs();
            let e = (-x / tc).exp();
            let res = 1.0 + a * e - v;
            let dq = e * (-1.0 / (q * q) - a * x * t_on / (tc * tc));
            let dl = a * e * x / tc;
            let j = [dq, dl];
            for i in 0..2 {
                jtr[i] += j[i] * res;
                for k in 0..2 {
                    jtj[i][k] += j[i] * j[k];
                }
            }
        }
        let grad = jtr[0].abs().max(jtr[1].abs());
        if grad <= 1e-30 || r <= 1e-30 {
            converged = true;
            break;
        }
        let mut accepted = false;
        for _ in 0..60 {
            let m = [[jtj[0][0] * (1.0 + lambda), jtj[0][1]], [jtj[1][0], jtj[1][1] * (1.0 + lambda)]];
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            if det.abs() < 1e-300 {
                lambda *= 10.0;
                continue;
            }
            let sq = -(m[1][1] * jtr[0] - m[0][1] * jtr[1]) / det;
            let sl = -(m[0][0] * jtr[1] - m[1][0] * jtr[0]) / det;
            let q_new = (q + sq).clamp(Q_MIN, Q_MAX);
            let l_new = l + sl;
            let r_new = ssr(tau, y, q_new, l_new.exp());
            if r_new.is_finite() && r_new <= r {
                let small = (q_new - q).abs() <= 1e-14 * q && (l_new - l).abs() <= 1e-14 * l.abs().max(1.0);
                let flat = r - r_new <= 1e-15 * r;
                q = q_new;
                l = l_new;
                r = r_new;
                lambda = (lambda / 10.0).max(1e-15);
                accepted = true;
                if small || flat {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted || converged {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence("blinking fit did not settle within 500 iterations".into()));
    }

    let t_on = l.exp();
    let tc = t_on * (1.0 - q);
    let mut warnings = Vec::new();
    let span = tau.iter().fold(0.0f64, |m, t| m.max(t.abs()));
    if span < 3.0 * tc {
        warnings.push(format!("envelope spans {span:.3e} s, less than 3 correlation times ({tc:.3e} s)"));
    }
    Ok(BlinkingFit {
        q,
        t_on: Some(t_on),
        t_off: Some(t_on * (1.0 - q) / q),
        correlation_time: Some(tc),
        residual: r,
        iterations,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Vec<f64> {
        (-300..=300).filter(|&k| k != 0).map(|k| k as f64 * 121e-9).collect()
    }

    #[test]
    fn model_limits() {
        assert_eq!(blinking_model(1e9, 0.59, 5.2e-6), 1.0);
        assert!((blinking_model(0.0, 0.59, 5.2e-6) - 1.0 / 0.59).abs() < 1e-15);
    }

    #[test]
    fn exact_envelope_round_trip() {
        let tau = grid();
        let y: Vec<f64> = tau.iter().map(|&t| blinking_model(t, 0.59, 5.2e-6)).collect();
        let fit = fit_blinking_points(&tau, &y).unwrap();
        assert!((fit.q / 0.59 - 1.0).abs() < 1e-6, "{fit:?}");
        assert!((fit.t_on.unwrap() / 5.2e-6 - 1.0).abs() < 1e-6, "{fit:?}");
    }

    #[test]
    fn flat_envelope() {
        let tau = grid();
        let y = vec![1.0; tau.len()];
        let fit = fit_blinking_points(&tau, &y).unwrap();
        assert_eq!(fit.q, 1.0);
        assert!(fit.t_on.is_none());
    }

    #[test]
    fn too_few_points() {
        let tau: Vec<f64> = (1..10).map(|k| k as f64 * 1e-8).collect();
        let y = vec![1.2; tau.len()];
        assert!(matches!(fit_blinking_points(&tau, &y), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn g2_zero_of_synthetic_histogram() {
        let mut h = Histogram::empty(1000, 100_000);
        let t = 12_000i64;
        for k in -7..=7i64 {
            let i = h.bin_of(k * t).unwrap();
            h.counts[i] = if k == 0 { 18 } else { 1000 };
        }
        let g = g2_zero(&h, 12e-9, 3e-9, 6).unwrap();
        assert!((g - 0.018).abs() < 1e-15);
        for c in h.counts.iter_mut() {
            *c *= 7;
        }
        assert!((g2_zero(&h, 12e-9, 3e-9, 6).unwrap() - 0.018).abs() < 1e-15);
        assert!(g2_zero(&h, 12e-9, 3e-9, 9).is_err());
    }
}
