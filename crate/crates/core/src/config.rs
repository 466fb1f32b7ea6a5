//! Run configuration shared by the command-line tool and the round-trip
//! report.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::analysis::CoincidenceMode;
use crate::demux::DemuxConfig;
use crate::source::SourceConfig;
use crate::{Error, Result};

/// Environment variable that overrides the configured seed.
pub const SEED_ENV: &str = "SPS_SIM_SEED";

/// Estimator parameters and the sizes of the round-trip experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub g2_bin_width: f64,
    pub g2_peak_halfwidth: f64,
    pub n_side_peaks: usize,
    pub g2_target: f64,
    pub g2_pulses: u64,

    /// Bin width of the long-delay histogram; the pulse period when absent.
    pub envelope_bin_width: Option<f64>,
    pub envelope_max_tau: f64,
    pub smooth_halfwidth: f64,
    /// Simulated stream time for the blinking fit (s).
    pub blinking_duration: f64,

    pub hom_delays: Vec<f64>,
    pub hom_targets: Vec<f64>,
    pub hom_peak_halfwidth: f64,
    pub hom_bin_width: f64,
    pub hom_pulses: u64,

    pub coincidence_mode: CoincidenceMode,
    /// Simulated stream time for the coincidence rates (s).
    pub nfold_duration: f64,
    pub nfold_segments: u64,
    /// Slot rate used by the p^n fit; the simulated slot rate when absent.
    pub slots_per_second: Option<f64>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            g2_bin_width: 100e-12,
            g2_peak_halfwidth: 3e-9,
            n_side_peaks: 6,
            g2_target: 0.018,
            g2_pulses: 20_000_000,
            envelope_bin_width: None,
            envelope_max_tau: 40e-6,
            smooth_halfwidth: 100e-9,
            blinking_duration: 0.5,
            hom_delays: vec![12.1e-9, 242e-9],
            hom_targets: vec![0.93, 0.91],
            hom_peak_halfwidth: 3e-9,
            hom_bin_width: 1e-9,
            hom_pulses: 50_000_000,
            coincidence_mode: CoincidenceMode::FirstN,
            nfold_duration: 2048.0,
            nfold_segments: 64,
            slots_per_second: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub n_pulses: u64,
    /// Seed for every random stream of the run; replaces `source.rng_seed`.
    pub seed: Option<u64>,
    pub output_dir: PathBuf,
    /// Name of the run directory under `output_dir`.
    pub run_id: String,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { n_pulses: 10_000_000, seed: None, output_dir: PathBuf::from("out"), run_id: "run".into() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub source: SourceConfig,
    pub demux: DemuxConfig,
    pub analysis: AnalysisConfig,
    pub run: RunSection,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    /// Applies the seed override (environment first, then `run.seed`),
    /// validates, and returns the fully resolved configuration.
    pub fn resolve(mut self, env_seed: Option<&str>) -> Result<Self> {
        if let Some(s) = env_seed {
            let seed = s
                .trim()
                .parse::<u64>()
                .map_err(|_| Error::config(format!("{SEED_ENV} must be an unsigned integer, got {s:?}")))?;
            self.run.seed = Some(seed);
        }
        if let Some(seed) = self.run.seed {
            self.source.rng_seed = seed;
        }
        self.run.seed = Some(self.source.rng_seed);
        self.validate()?;
        Ok(self)
    }

    pub fn seed(&self) -> u64 {
        self.run.seed.unwrap_or(self.source.rng_seed)
    }

    pub fn validate(&self) -> Result<()> {
        self.source.validate().map_err(as_config)?;
        self.demux.validate(self.source.pulse_period)?;
        if self.run.n_pulses == 0 {
            return Err(Error::config("run.n_pulses must be >= 1"));
        }
        if self.run.run_id.is_empty() || self.run.run_id.contains(['/', '\\']) || self.run.run_id.starts_with('.') {
            return Err(Error::config("run.run_id must be a plain directory name"));
        }
        let a = &self.analysis;
        if a.hom_delays.len() != a.hom_targets.len() {
            return Err(Error::config("analysis.hom_delays and analysis.hom_targets differ in length"));
        }
        for (name, v) in [
            ("g2_bin_width", a.g2_bin_width),
            ("g2_peak_halfwidth", a.g2_peak_halfwidth),
            ("envelope_max_tau", a.envelope_max_tau),
            ("smooth_halfwidth", a.smooth_halfwidth),
            ("blinking_duration", a.blinking_duration),
            ("hom_peak_halfwidth", a.hom_peak_halfwidth),
            ("hom_bin_width", a.hom_bin_width),
            ("nfold_duration", a.nfold_duration),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("analysis.{name} must be > 0")));
            }
        }
        Ok(())
    }

    /// Directory `output_dir/run_id`.
    pub fn run_dir(&self) -> PathBuf {
        self.run.output_dir.join(&self.run.run_id)
    }
}

fn as_config(e: Error) -> Error {
    match e {
        Error::Domain(m) => Error::Config(m),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_in() {
        let cfg = RunConfig::from_json(r#"{"source": {"q_on": 0.5}, "run": {"n_pulses": 100}}"#).unwrap();
        assert_eq!(cfg.source.q_on, 0.5);
        assert_eq!(cfg.demux.n_channels, 6);
        assert_eq!(cfg.run.n_pulses, 100);
        assert_eq!(cfg.analysis.n_side_peaks, 6);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_json(r#"{"sauce": {}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"run": {"pulses": 3}}"#).is_err());
    }

    #[test]
    fn seed_precedence() {
        let cfg = RunConfig::from_json(r#"{"run": {"seed": 5}}"#).unwrap();
        assert_eq!(cfg.clone().resolve(None).unwrap().source.rng_seed, 5);
        assert_eq!(cfg.clone().resolve(Some("77")).unwrap().source.rng_seed, 77);
        assert!(cfg.resolve(Some("x")).is_err());
        let plain = RunConfig::default().resolve(None).unwrap();
        assert_eq!(plain.run.seed, Some(plain.source.rng_seed));
    }

    #[test]
    fn resolved_config_round_trips() {
        let cfg = RunConfig::default().resolve(None).unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), cfg);
    }
}
