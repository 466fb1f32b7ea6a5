//! Configured-versus-recovered experiments.
//!
//! Each experiment simulates a stream from the configuration, runs the
//! matching estimator and reports what it recovered. [`roundtrip`] runs them
//! all and scores them against the published figures of the device.

use serde::{Deserialize, Serialize};

use crate::analysis::{
    bunching_envelope, fit_blinking, fit_pn, g2_histogram, hom_visibility, simulate_hom, split_hbt, timestamps,
    BlinkingFit, Envelope, HomResult, NfoldTable, PnFit,
};
use crate::config::{AnalysisConfig, RunConfig};
use crate::demux::DemuxConfig;
use crate::pipeline::{expected_nfold, lazy_nfold, LazyResult, LazyRun};
use crate::rng::derive_seed;
use crate::source::{calibrate_two_photon_prob_with, pairwise_overlap, simulate_source, G2Calibration, SourceConfig};
use crate::{Error, Result};

/// Published n-fold figures used as round-trip targets.
pub mod reference {
    pub const SIXFOLD_GENERATION_HZ: f64 = 0.1;
    pub const SIXFOLD_DETECTION_HZ: f64 = 0.02;
    pub const THREEFOLD_DETECTION_HZ: f64 = 701.0;
    /// Generation rates for n = 3..=6 (Hz).
    pub const GENERATION_RATES: [(usize, f64); 4] = [(3, 1494.4), (4, 54.2), (5, 2.1), (6, 0.1)];
    pub const SLOTS_PER_SECOND: f64 = 6.4e6;
    pub const SOURCE_PROB: f64 = 0.1;
}

/// One scored quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub target: f64,
    pub lower: f64,
    pub upper: f64,
    pub tolerance: String,
    pub pass: bool,
}

impl Check {
    pub fn within(name: &str, measured: f64, target: f64, lower: f64, upper: f64, tolerance: String) -> Self {
        Self {
            name: name.into(),
            measured,
            target,
            lower,
            upper,
            tolerance,
            pass: measured >= lower && measured <= upper,
        }
    }

    pub fn absolute(name: &str, measured: f64, target: f64, tol: f64) -> Self {
        Self::within(name, measured, target, target - tol, target + tol, format!("±{}", num(tol)))
    }

    pub fn relative(name: &str, measured: f64, target: f64, rel: f64) -> Self {
        Self::within(name, measured, target, target * (1.0 - rel), target * (1.0 + rel), format!("±{}%", rel * 100.0))
    }

    pub fn factor(name: &str, measured: f64, target: f64, factor: f64) -> Self {
        Self::within(name, measured, target, target / factor, target * factor, format!("factor {factor}"))
    }

    pub fn line(&self) -> String {
        format!(
            "[{}] {}: measured {} target {} ({}, accepted [{}, {}])",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            num(self.measured),
            num(self.target),
            self.tolerance,
            num(self.lower),
            num(self.upper)
        )
    }
}

fn num(x: f64) -> String {
    if x != 0.0 && (x.abs() < 1e-3 || x.abs() >= 1e6) {
        format!("{x:.4e}")
    } else {
        format!("{x:.6}").trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct G2Outcome {
    pub two_photon_prob: f64,
    /// g2(0) of an independent run at the calibrated probability.
    pub g2_zero: f64,
}

fn g2_options(a: &AnalysisConfig) -> G2Calibration {
    G2Calibration {
        pulses_per_probe: a.g2_pulses,
        bin_width: a.g2_bin_width,
        peak_halfwidth: a.g2_peak_halfwidth,
        n_side_peaks: a.n_side_peaks,
        ..Default::default()
    }
}

/// Calibrates the two-photon probability to `analysis.g2_target`, then
/// measures g2(0) on a freshly seeded run.
pub fn g2_experiment(source: &SourceConfig, analysis: &AnalysisConfig) -> Result<G2Outcome> {
    let opts = g2_options(analysis);
    let eps = calibrate_two_photon_prob_with(analysis.g2_target, source, &opts)?;
    let check = SourceConfig { two_photon_prob: eps, rng_seed: derive_seed(source.rng_seed, 0x6732, 1), ..source.clone() };
    Ok(G2Outcome { two_photon_prob: eps, g2_zero: opts.measure(&check)? })
}

/// Long-delay HBT histogram, its bunching envelope and the telegraph fit.
pub fn blinking_experiment(source: &SourceConfig, analysis: &AnalysisConfig) -> Result<(Envelope, BlinkingFit)> {
    let n_pulses = (analysis.blinking_duration / source.pulse_period).ceil() as u64;
    let events = simulate_source(source, n_pulses)?;
    let (a, b) = split_hbt(&events, source.pulse_period, source.rng_seed);
    let bin = analysis.envelope_bin_width.unwrap_or(source.pulse_period);
    let hist = crate::analysis::g2_histogram_par(
        &timestamps(&a),
        &timestamps(&b),
        bin,
        analysis.envelope_max_tau,
        rayon::current_num_threads(),
    )?;
    let env = bunching_envelope(&hist, source.pulse_period, analysis.smooth_halfwidth)?;
    let fit = fit_blinking(&env)?;
    Ok((env, fit))
}

/// Unbalanced Mach-Zehnder HOM experiment at `delay` with the source's own
/// overlap model.
pub fn hom_experiment(source: &SourceConfig, analysis: &AnalysisConfig, delay: f64) -> Result<HomResult> {
    let events = simulate_source(source, analysis.hom_pulses)?;
    let overlap = |dt: f64| pairwise_overlap(dt, source).unwrap_or(0.0);
    let seed = derive_seed(source.rng_seed, 0x4803, delay.to_bits());
    let (a, b) = simulate_hom(&events, source.pulse_period, delay, overlap, seed)?;
    let d = (delay / source.pulse_period).round();
    let max_tau = (d + 16.0).max(30.0) * source.pulse_period;
    let hist = g2_histogram(&timestamps(&a), &timestamps(&b), analysis.hom_bin_width, max_tau)?;
    hom_visibility(&hist, source.pulse_period, analysis.hom_peak_halfwidth, delay)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NfoldOutcome {
    pub simulated: LazyResult,
    /// Closed-form rates for the same configuration, when available.
    pub expected: Option<NfoldTable>,
    pub pn: Option<PnFit>,
}

/// Lazily simulated coincidence rates over `analysis.nfold_duration` and the
/// p^n fit of the generation rates for n >= 3.
pub fn nfold_experiment(source: &SourceConfig, demux: &DemuxConfig, analysis: &AnalysisConfig) -> Result<NfoldOutcome> {
    let plan = demux.plan(source.pulse_period)?;
    let n_pulses = (analysis.nfold_duration / source.pulse_period).round() as u64;
    let run = LazyRun { n_pulses, segments: analysis.nfold_segments, seed: source.rng_seed };
    let simulated = lazy_nfold(source, demux, &run)?;
    let expected = expected_nfold(source, demux).ok();
    let points: Vec<(usize, f64)> = simulated
        .table
        .rows
        .iter()
        .filter(|r| r.n >= 3 && r.event_count > 0)
        .map(|r| (r.n, r.generation_rate_hz))
        .collect();
    let slots = analysis.slots_per_second.unwrap_or(plan.slots_per_second());
    let pn = if points.is_empty() { None } else { Some(fit_pn(&points, slots, source.in_fiber_prob)?) };
    Ok(NfoldOutcome { simulated, expected, pn })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundtripReport {
    pub config: RunConfig,
    pub checks: Vec<Check>,
    pub g2: G2Outcome,
    pub blinking: BlinkingFit,
    pub hom: Vec<HomResult>,
    pub nfold: NfoldOutcome,
    pub pn_reference: PnFit,
}

impl RoundtripReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Runs every experiment of `cfg` and scores the results.
pub fn roundtrip(cfg: &RunConfig) -> Result<RoundtripReport> {
    let (src, a) = (&cfg.source, &cfg.analysis);
    let mut checks = Vec::new();

    let g2 = g2_experiment(src, a)?;
    checks.push(Check::absolute("g2(0)", g2.g2_zero, a.g2_target, 0.006));

    let (_, blinking) = blinking_experiment(src, a)?;
    checks.push(Check::absolute("blinking q", blinking.q, src.q_on, 0.05));
    let t_on = blinking.t_on.ok_or_else(|| Error::NonConvergence("blinking fit found no bunching".into()))?;
    checks.push(Check::relative("blinking t_on (s)", t_on, src.t_on, 0.20));

    let mut hom = Vec::new();
    for (&d, &target) in a.hom_delays.iter().zip(&a.hom_targets) {
        let r = hom_experiment(src, a, d)?;
        checks.push(Check::absolute(&format!("HOM visibility at {:.1} ns", d * 1e9), r.visibility, target, 0.02));
        hom.push(r);
    }

    let nfold = nfold_experiment(src, &cfg.demux, a)?;
    let rate = |n: usize, gen: bool| {
        nfold.simulated.table.row(n).map_or(0.0, |r| if gen { r.generation_rate_hz } else { r.detection_rate_hz })
    };
    if cfg.demux.n_channels >= 6 {
        checks.push(Check::factor("6-fold generation rate (Hz)", rate(6, true), reference::SIXFOLD_GENERATION_HZ, 1.5));
        checks.push(Check::factor("6-fold detection rate (Hz)", rate(6, false), reference::SIXFOLD_DETECTION_HZ, 3.0));
    }
    if cfg.demux.n_channels >= 3 {
        checks.push(Check::factor("3-fold detection rate (Hz)", rate(3, false), reference::THREEFOLD_DETECTION_HZ, 2.0));
    }

    let pn_reference = fit_pn(&reference::GENERATION_RATES, reference::SLOTS_PER_SECOND, reference::SOURCE_PROB)?;
    checks.push(Check::within("p from published rates", pn_reference.p, 0.51, 0.40, 0.55, "[0.40, 0.55]".into()));

    Ok(RoundtripReport { config: cfg.clone(), checks, g2, blinking, hom, nfold, pn_reference })
}
