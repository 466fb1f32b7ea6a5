//! Temporal-to-spatial demultiplexer.
//!
//! Each cycle of the switch network routes consecutive packs of `pack_size`
//! pulses into channels `0..n_channels`; the remaining pulses of the cycle
//! are discarded. Fibre delays of `(n_channels - 1 - c) * delay_step` line
//! the packs up so that slot `j` of every channel leaves at the same instant.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::SlotGrid;
use crate::rng::{stream, KeyedRng};
use crate::source::PhotonEvent;
use crate::timetag::{merge_streams, TagStream, TimeTag, FLAG_IMPURITY};
use crate::units::{exact_period_ps, round_ps};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DemuxConfig {
    pub n_channels: usize,
    pub pack_size: usize,
    /// Switching cycle rate (Hz).
    pub cycle_rate: f64,
    /// Delay difference between neighbouring channels (s).
    pub delay_step: f64,
    /// Per-channel transmission of demultiplexer optics and fibre coupling.
    pub channel_efficiency: Vec<f64>,
    pub pockels_transmission: f64,
    pub detector_efficiency: Vec<f64>,
    /// Gaussian timing jitter of the detectors (s).
    pub detector_jitter_sigma: f64,
    /// Half-width of the coincidence window around each slot (s).
    pub coincidence_slot_tolerance: f64,
    /// Poisson dark-count rate of each detector (Hz).
    pub dark_count_rate: f64,
    /// Common transmission between fibre and detectors.
    pub global_transmission: f64,
}

impl Default for DemuxConfig {
    fn default() -> Self {
        Self {
            n_channels: 6,
            pack_size: 4,
            cycle_rate: 1.6e6,
            delay_step: 48.4e-9,
            channel_efficiency: vec![0.51; 6],
            pockels_transmission: 0.999,
            detector_efficiency: vec![0.86, 0.86, 0.87, 0.86, 0.85, 0.85],
            detector_jitter_sigma: 0.0,
            coincidence_slot_tolerance: 1e-9,
            dark_count_rate: 0.0,
            global_transmission: 1.0,
        }
    }
}

/// Where a pulse is sent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Route {
    Channel(usize),
    Discarded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutingDecision {
    pub pulse_index: u64,
    pub route: Route,
}

/// Integer-picosecond schedule derived from a validated config.
#[derive(Debug, Clone, PartialEq)]
pub struct DemuxPlan {
    pub n_channels: usize,
    pub pack_size: u64,
    pub pulses_per_cycle: u64,
    pub pulse_period_ps: u64,
    pub delay_step_ps: u64,
    /// Probability that a routed photon is detected, per channel.
    pub survival: Vec<f64>,
    /// Efficiency from fibre output to detection, per channel.
    pub downstream: Vec<f64>,
    pub jitter_sigma: f64,
    pub tolerance_ps: u64,
    pub dark_count_rate: f64,
}

impl DemuxConfig {
    pub fn validate(&self, pulse_period: f64) -> Result<()> {
        self.plan(pulse_period).map(|_| ())
    }

    /// Pulses per switching cycle, rounded down.
    pub fn pulses_per_cycle(&self, pulse_period: f64) -> u64 {
        (1.0 / (self.cycle_rate * pulse_period) + 1e-9).floor() as u64
    }

    pub fn plan(&self, pulse_period: f64) -> Result<DemuxPlan> {
        let n = self.n_channels;
        if n == 0 || n > 255 {
            return Err(Error::config(format!("n_channels must lie in 1..=255, got {n}")));
        }
        if self.pack_size == 0 {
            return Err(Error::config("pack_size must be >= 1"));
        }
        if !(self.cycle_rate > 0.0 && self.cycle_rate.is_finite()) {
            return Err(Error::config("cycle_rate must be > 0"));
        }
        for (name, list) in [("channel_efficiency", &self.channel_efficiency), ("detector_efficiency", &self.detector_efficiency)] {
            if list.len() != n {
                return Err(Error::config(format!("{name} has {} entries, expected {n}", list.len())));
            }
            if list.iter().any(|e| !(0.0..=1.0).contains(e)) {
                return Err(Error::config(format!("{name} entries must lie in [0, 1]")));
            }
        }
        for (name, v) in [("pockels_transmission", self.pockels_transmission), ("global_transmission", self.global_transmission)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if !(self.detector_jitter_sigma >= 0.0 && self.detector_jitter_sigma.is_finite()) {
            return Err(Error::config("detector_jitter_sigma must be >= 0"));
        }
        if !(self.dark_count_rate >= 0.0 && self.dark_count_rate.is_finite()) {
            return Err(Error::config("dark_count_rate must be >= 0"));
        }
        let t_ps = exact_period_ps("pulse_period", pulse_period)?;
        let d_ps = exact_period_ps("delay_step", self.delay_step)?;
        let ppc = self.pulses_per_cycle(pulse_period);
        if (n * self.pack_size) as u64 > ppc {
            return Err(Error::config(format!(
                "{n} packs of {} pulses do not fit in a cycle of {ppc} pulses",
                self.pack_size
            )));
        }
        let tol = self.coincidence_slot_tolerance;
        if !(tol >= 0.0 && 2.0 * tol < pulse_period) {
            return Err(Error::config("coincidence_slot_tolerance must lie in [0, pulse_period / 2)"));
        }
        let downstream: Vec<f64> = self.detector_efficiency.iter().map(|d| d * self.global_transmission).collect();
        let survival = (0..n)
            .map(|c| self.pockels_transmission * self.channel_efficiency[c] * downstream[c])
            .collect();
        Ok(DemuxPlan {
            n_channels: n,
            pack_size: self.pack_size as u64,
            pulses_per_cycle: ppc,
            pulse_period_ps: t_ps,
            delay_step_ps: d_ps,
            survival,
            downstream,
            jitter_sigma: self.detector_jitter_sigma,
            tolerance_ps: round_ps(tol * 1e12) as u64,
            dark_count_rate: self.dark_count_rate,
        })
    }
}

impl DemuxPlan {
    #[inline]
    pub fn route(&self, pulse_index: u64) -> Route {
        let c = (pulse_index % self.pulses_per_cycle) / self.pack_size;
        if c < self.n_channels as u64 {
            Route::Channel(c as usize)
        } else {
            Route::Discarded
        }
    }

    pub fn delay_ps(&self, channel: usize) -> u64 {
        (self.n_channels - 1 - channel) as u64 * self.delay_step_ps
    }

    pub fn slot_grid(&self) -> SlotGrid {
        SlotGrid {
            origin_ps: self.delay_ps(0),
            slot_spacing_ps: self.pulse_period_ps,
            slots_per_cycle: self.pack_size,
            cycle_period_ps: self.pulses_per_cycle * self.pulse_period_ps,
        }
    }

    /// Synchronised slot instants per second.
    pub fn slots_per_second(&self) -> f64 {
        self.pack_size as f64 * 1e12 / (self.pulses_per_cycle * self.pulse_period_ps) as f64
    }

    /// Detection time of a photon with the given total delay after its pulse.
    #[inline]
    pub fn detection_ps(&self, pulse_index: u64, channel: usize, delay_after_pulse: f64) -> i64 {
        (pulse_index * self.pulse_period_ps + self.delay_ps(channel)) as i64 + round_ps(delay_after_pulse * 1e12)
    }
}

pub fn route(pulse_index: u64, config: &DemuxConfig, pulse_period: f64) -> Result<RoutingDecision> {
    let plan = config.plan(pulse_period)?;
    Ok(RoutingDecision { pulse_index, route: plan.route(pulse_index) })
}

/// Fibre delay (s) that synchronises `channel` with the last channel.
pub fn synchronizing_delay(channel: usize, config: &DemuxConfig) -> Result<f64> {
    if channel >= config.n_channels {
        return Err(Error::domain(format!("channel {channel} out of range 0..{}", config.n_channels)));
    }
    Ok((config.n_channels - 1 - channel) as f64 * config.delay_step)
}

/// Per-channel detections of a demultiplexer run.
#[derive(Debug, Clone, PartialEq)]
pub struct DemuxOutput {
    pub channels: Vec<TagStream>,
    pub routed: u64,
    pub discarded: u64,
    pub dark_counts: u64,
}

impl DemuxOutput {
    pub fn merged(&self) -> Result<TagStream> {
        let refs: Vec<&[TimeTag]> = self.channels.iter().map(|c| c.as_slice()).collect();
        merge_streams(&refs)
    }

    pub fn channel_timestamps(&self) -> Vec<Vec<u64>> {
        self.channels.iter().map(|c| c.iter().map(|t| t.timestamp).collect()).collect()
    }
}

/// Routes, attenuates and detects photons from a run of `n_pulses` pulses.
///
/// Every random decision is keyed by `(rng_seed, photon ordinal)`, so the
/// output does not depend on the number of worker threads.
pub fn simulate_demux(
    events: &[PhotonEvent],
    config: &DemuxConfig,
    pulse_period: f64,
    n_pulses: u64,
    rng_seed: u64,
) -> Result<DemuxOutput> {
    let plan = config.plan(pulse_period)?;
    let n = plan.n_channels;
    let per_photon: Vec<(Option<(usize, TimeTag)>, bool)> = events
        .par_iter()
        .enumerate()
        .map(|(i, ev)| {
            let c = match plan.route(ev.pulse_index) {
                Route::Channel(c) => c,
                Route::Discarded => return (None, false),
            };
            let mut rng = KeyedRng::new(rng_seed, stream::DEMUX, i as u64);
            if rng.uniform() >= plan.survival[c] {
                return (None, true);
            }
            let jitter = if plan.jitter_sigma > 0.0 {
                let z: f64 = StandardNormal.sample(&mut rng);
                plan.jitter_sigma * z
            } else {
                0.0
            };
            let t = plan.detection_ps(ev.pulse_index, c, ev.jitter + jitter).max(0) as u64;
            let flags = if ev.is_impurity { FLAG_IMPURITY } else { 0 };
            (Some((c, TimeTag { timestamp: t, channel: c as u8, flags })), true)
        })
        .collect();

    let mut channels: Vec<TagStream> = vec![Vec::new(); n];
    let (mut routed, mut discarded) = (0, 0);
    for (hit, was_routed) in per_photon {
        if was_routed {
            routed += 1;
        } else {
            discarded += 1;
        }
        if let Some((c, tag)) = hit {
            channels[c].push(tag);
        }
    }

    let mut dark_counts = 0;
    if plan.dark_count_rate > 0.0 {
        let span_ps = n_pulses * plan.pulse_period_ps + plan.delay_ps(0);
        for (c, ch) in channels.iter_mut().enumerate() {
            let darks = dark_count_times(plan.dark_count_rate, span_ps, rng_seed, c);
            dark_counts += darks.len() as u64;
            ch.extend(darks.into_iter().map(|t| TimeTag::new(t, c as u8)));
        }
    }
    channels.par_iter_mut().for_each(|ch| ch.sort_unstable_by_key(|t| (t.timestamp, t.flags)));
    Ok(DemuxOutput { channels, routed, discarded, dark_counts })
}

/// Poisson arrival times on `[0, span_ps)` for one detector.
fn dark_count_times(rate: f64, span_ps: u64, seed: u64, channel: usize) -> Vec<u64> {
    let mut rng = KeyedRng::new(seed, stream::DARK, channel as u64);
    let mean_gap_ps = 1e12 / rate;
    let mut out = Vec::new();
    let mut t = 0.0;
    loop {
        t += -mean_gap_ps * (1.0 - rng.uniform()).ln();
        if t >= span_ps as f64 {
            return out;
        }
        out.push(t as u64);
    }
}
