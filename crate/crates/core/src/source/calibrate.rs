use serde::{Deserialize, Serialize};

use super::{simulate_source, SourceConfig};
use crate::analysis::{g2_histogram, g2_zero, split_hbt, timestamps};
use crate::{Error, Result};

/// Settings of the two-photon probability search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct G2Calibration {
    pub pulses_per_probe: u64,
    /// Stop once a probe is this close to the target (relative).
    pub tolerance: f64,
    /// Largest accepted relative error when iterations run out.
    pub acceptance: f64,
    pub max_iterations: usize,
    pub bin_width: f64,
    pub peak_halfwidth: f64,
    pub n_side_peaks: usize,
}

impl Default for G2Calibration {
    fn default() -> Self {
        Self {
            pulses_per_probe: 20_000_000,
            tolerance: 0.02,
            acceptance: 0.10,
            max_iterations: 40,
            bin_width: 100e-12,
            peak_halfwidth: 3e-9,
            n_side_peaks: 6,
        }
    }
}

impl G2Calibration {
    /// Measured g2(0) of an HBT experiment on `config`.
    pub fn measure(&self, config: &SourceConfig) -> Result<f64> {
        let events = simulate_source(config, self.pulses_per_probe)?;
        let (a, b) = split_hbt(&events, config.pulse_period, config.rng_seed);
        let max_tau = (self.n_side_peaks as f64 + 0.5) * config.pulse_period;
        let hist = g2_histogram(&timestamps(&a), &timestamps(&b), self.bin_width, max_tau)?;
        g2_zero(&hist, config.pulse_period, self.peak_halfwidth, self.n_side_peaks)
    }
}

/// Two-photon probability that reproduces `g2_target` in simulation.
pub fn calibrate_two_photon_prob(g2_target: f64, config: &SourceConfig) -> Result<f64> {
    calibrate_two_photon_prob_with(g2_target, config, &G2Calibration::default())
}

/// Bisection on the two-photon probability. Every probe reuses the seed of
/// `config`, so probes differ only through the impurity threshold.
pub fn calibrate_two_photon_prob_with(g2_target: f64, config: &SourceConfig, opts: &G2Calibration) -> Result<f64> {
    if !(0.0..1.0).contains(&g2_target) {
        return Err(Error::domain(format!("g2_target must lie in [0, 1), got {g2_target}")));
    }
    if opts.pulses_per_probe < 10_000_000 {
        return Err(Error::config("pulses_per_probe must be >= 1e7"));
    }
    config.validate()?;
    if g2_target == 0.0 {
        return Ok(0.0);
    }
    let probe = |eps: f64| opts.measure(&SourceConfig { two_photon_prob: eps, ..config.clone() });
    let rel = |g: f64| (g / g2_target - 1.0).abs();

    // two photons split across the detectors half of the time, so to first
    // order g2 = 2 eps / s
    let guess = (g2_target * config.in_fiber_prob / 2.0).min(0.5);
    let mut best = (f64::INFINITY, guess);
    let (mut lo, mut hi) = (0.0, guess);
    let mut iterations = 0;
    loop {
        let g = probe(hi)?;
        iterations += 1;
        if rel(g) < best.0 {
            best = (rel(g), hi);
        }
        if rel(g) <= opts.tolerance {
            return Ok(hi);
        }
        if g > g2_target {
            break;
        }
        lo = hi;
        hi = (2.0 * hi).min(0.999_999);
        if lo >= 0.999_999 || iterations >= opts.max_iterations {
            return Err(Error::NonConvergence(format!("g2 {g2_target} not reached with two_photon_prob < 1")));
        }
    }
    while iterations < opts.max_iterations {
        let mid = 0.5 * (lo + hi);
        let g = probe(mid)?;
        iterations += 1;
        if rel(g) < best.0 {
            best = (rel(g), mid);
        }
        if rel(g) <= opts.tolerance {
            return Ok(mid);
        }
        if g > g2_target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    if best.0 <= opts.acceptance {
        Ok(best.1)
    } else {
        Err(Error::NonConvergence(format!(
            "g2 calibration ended {:.1}% from the target after {iterations} probes",
            100.0 * best.0
        )))
    }
}
