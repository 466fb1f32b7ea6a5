//! Seeded emission model of a pulsed, resonantly driven quantum dot.
//!
//! A pulse yields a photon only when the blinking telegraph is bright at the
//! pulse instant and a Bernoulli(`in_fiber_prob`) delivery succeeds. Photons
//! are delayed from the pulse by an exponential jitter; with conditional
//! probability `two_photon_prob` a second photon follows the first. The
//! emitter detuning drifts as an Ornstein-Uhlenbeck process.

mod calibrate;
mod detuning;
mod generator;
mod overlap;
mod telegraph;

use serde::{Deserialize, Serialize};

use crate::error::{require_positive, require_unit_interval};
use crate::{Error, Result};

pub use calibrate::{calibrate_two_photon_prob, calibrate_two_photon_prob_with, G2Calibration};
pub use detuning::DetuningProcess;
pub use generator::{PulseMask, SourceGenerator};
pub use overlap::{calibrate_overlap, lorentzian_gauss_mean, lorentzian_gauss_mean_inv, overlap, OverlapCalibration};
pub use telegraph::{Interval, TelegraphState, TelegraphTrace};

/// Detuning spread that, with [`DEFAULT_DETUNING_TAU`] and a 184 ps lifetime,
/// puts the overlap at 0.93 for a 12.1 ns delay and 0.91 for 242 ns.
pub const DEFAULT_DETUNING_SIGMA: f64 = 1.315_943_339_132_862e9;
pub const DEFAULT_DETUNING_TAU: f64 = 9.147_766_170_146_28e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceConfig {
    /// Laser pulse period (s).
    pub pulse_period: f64,
    /// Radiative lifetime in the cavity (s).
    pub lifetime: f64,
    /// Stationary bright-state occupancy.
    pub q_on: f64,
    /// Mean bright-state residence time (s).
    pub t_on: f64,
    /// Probability of a second photon given a first one.
    pub two_photon_prob: f64,
    /// Probability that a bright pulse delivers a photon into the fiber.
    pub in_fiber_prob: f64,
    /// Standard deviation of the detuning drift (rad/s).
    pub detuning_sigma: f64,
    /// Correlation time of the detuning drift (s).
    pub detuning_tau: f64,
    pub rng_seed: u64,
    /// Largest event list [`simulate_source`] will build.
    pub max_events: u64,
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self {
            pulse_period: 12.1e-9,
            lifetime: 184e-12,
            q_on: 0.59,
            t_on: 5.2e-6,
            two_photon_prob: 0.0,
            in_fiber_prob: 0.10,
            detuning_sigma: DEFAULT_DETUNING_SIGMA,
            detuning_tau: DEFAULT_DETUNING_TAU,
            rng_seed: 0x5eed,
            max_events: 50_000_000,
        }
    }
}

impl SourceConfig {
    /// Charged-exciton dominated emitter with a low bright fraction.
    pub fn trion() -> Self {
        Self { q_on: 0.1, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        require_positive("pulse_period", self.pulse_period)?;
        require_positive("lifetime", self.lifetime)?;
        if self.pulse_period <= self.lifetime {
            return Err(Error::config("pulse_period must exceed lifetime"));
        }
        if !(self.q_on > 0.0 && self.q_on <= 1.0) {
            return Err(Error::config(format!("q_on must lie in (0, 1], got {}", self.q_on)));
        }
        require_positive("t_on", self.t_on)?;
        if !(0.0..1.0).contains(&self.two_photon_prob) {
            return Err(Error::config(format!("two_photon_prob must lie in [0, 1), got {}", self.two_photon_prob)));
        }
        require_unit_interval("in_fiber_prob", self.in_fiber_prob)?;
        if !(self.detuning_sigma.is_finite() && self.detuning_sigma >= 0.0) {
            return Err(Error::config("detuning_sigma must be >= 0"));
        }
        require_positive("detuning_tau", self.detuning_tau)?;
        Ok(())
    }

    /// Mean dark-state residence time; zero for an emitter that never blinks.
    pub fn t_off(&self) -> f64 {
        self.t_on * (1.0 - self.q_on) / self.q_on
    }

    /// Correlation time of the telegraph, `(1/t_on + 1/t_off)^-1`.
    pub fn correlation_time(&self) -> f64 {
        self.t_on * (1.0 - self.q_on)
    }
}

/// A photon leaving the source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotonEvent {
    pub pulse_index: u64,
    /// `pulse_index * pulse_period + jitter` (s).
    pub emission_time: f64,
    /// Delay from the excitation pulse (s).
    pub jitter: f64,
    /// Emitter detuning at emission (rad/s).
    pub detuning: f64,
    pub is_impurity: bool,
}

/// Mean dark residence time that makes `q_on` the stationary bright fraction.
pub fn t_off_from(q_on: f64, t_on: f64) -> Result<f64> {
    if !(q_on > 0.0 && q_on < 1.0) {
        return Err(Error::domain(format!("q_on must lie in (0, 1), got {q_on}")));
    }
    require_positive("t_on", t_on)?;
    Ok(t_on * (1.0 - q_on) / q_on)
}

/// Simulates `n_pulses` pulses and returns the photons in emission order.
pub fn simulate_source(config: &SourceConfig, n_pulses: u64) -> Result<Vec<PhotonEvent>> {
    config.validate()?;
    if n_pulses == 0 {
        return Err(Error::domain("n_pulses must be >= 1"));
    }
    let mut events = Vec::new();
    for ev in SourceGenerator::new(config, n_pulses) {
        if events.len() as u64 >= config.max_events {
            return Err(Error::Capacity(format!(
                "more than {} events; raise max_events or shorten the run",
                config.max_events
            )));
        }
        events.push(ev);
    }
    // an impurity photon can only overtake the next pulse's photon for
    // jitters of many pulse periods, but the order is a contract
    if !events.windows(2).all(|w| w[0].emission_time < w[1].emission_time) {
        events.sort_by(|a, b| a.emission_time.total_cmp(&b.emission_time));
    }
    Ok(events)
}

/// Expected squared wavepacket overlap of two photons emitted `dt` apart.
pub fn pairwise_overlap(dt: f64, config: &SourceConfig) -> Result<f64> {
    overlap(dt, config.lifetime, config.detuning_sigma, config.detuning_tau)
}
