//! Long-duration n-fold coincidence runs.
//!
//! At the default settings a 2048 s run spans 1.7e11 pulses, far too many to
//! materialise. [`lazy_nfold`] generates only the photons of channel 0 (via
//! the event-skipping source generator restricted to channel-0 pulses) and,
//! for every slot in which channel 0 fires, draws the other channels of the
//! same slot on demand from the shared telegraph realization. Channels are
//! visited in order and the walk stops at the first silent one, which is all
//! the first-n-channels convention needs.
//!
//! The run is split into segments of whole demultiplexer cycles. Each
//! segment restarts the source in its stationary state from its own seed,
//! so the result depends on the segment count but not on the thread count.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{count_nfold, CoincidenceMode, NfoldRow, NfoldTable};
use crate::demux::{simulate_demux, DemuxConfig, DemuxPlan};
use crate::rng::{stream, KeyedRng};
use crate::source::{simulate_source, PulseMask, SourceConfig, SourceGenerator};
use crate::units::round_ps;
use crate::{Error, Result};

/// Length, segmentation and seed of a lazy run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LazyRun {
    pub n_pulses: u64,
    pub segments: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LazyStats {
    pub cycles: u64,
    pub segments: u64,
    /// Channel-0 photons produced by the source.
    pub channel0_photons: u64,
    /// Slots in which channel 0 registered a detection.
    pub channel0_hits: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LazyResult {
    pub table: NfoldTable,
    pub stats: LazyStats,
}

struct Engine<'a> {
    source: &'a SourceConfig,
    plan: &'a DemuxPlan,
    mask: PulseMask,
    dark_slot_prob: f64,
    /// Offset of channel `c`'s undelayed arrival from its slot instant.
    misalign_ps: Vec<i64>,
}

impl<'a> Engine<'a> {
    fn new(source: &'a SourceConfig, plan: &'a DemuxPlan) -> Self {
        let pack_ps = (plan.pack_size * plan.pulse_period_ps) as i64;
        let misalign_ps = (0..plan.n_channels as i64).map(|c| c * (pack_ps - plan.delay_step_ps as i64)).collect();
        let window = (2 * plan.tolerance_ps + 1) as f64 * 1e-12;
        Self {
            source,
            plan,
            mask: PulseMask::new(plan.pulses_per_cycle, plan.pack_size),
            dark_slot_prob: -(-plan.dark_count_rate * window).exp_m1(),
            misalign_ps,
        }
    }

    /// Loss and timing window of one photon in channel `c`.
    #[inline]
    fn detected(&self, c: usize, delay_after_pulse: f64, rng: &mut KeyedRng) -> bool {
        if rng.uniform() >= self.plan.survival[c] {
            return false;
        }
        let gauss = if self.plan.jitter_sigma > 0.0 {
            let z: f64 = StandardNormal.sample(rng);
            self.plan.jitter_sigma * z
        } else {
            0.0
        };
        let off = self.misalign_ps[c] + round_ps((delay_after_pulse + gauss) * 1e12);
        off.unsigned_abs() <= self.plan.tolerance_ps
    }

    fn exp(&self, rng: &mut KeyedRng) -> f64 {
        -self.source.lifetime * (1.0 - rng.uniform()).ln()
    }

    /// Whether channel `c >= 1` fires in the slot fed by `pulse`.
    fn channel_fires(&self, c: usize, pulse: u64, bright: bool, seed: u64) -> bool {
        let mut rng = KeyedRng::new(seed, stream::COINCIDENCE, pulse);
        if bright && rng.uniform() < self.source.in_fiber_prob {
            let j1 = self.exp(&mut rng);
            if self.detected(c, j1, &mut rng) {
                return true;
            }
            if rng.uniform() < self.source.two_photon_prob {
                let j2 = j1 + self.exp(&mut rng);
                if self.detected(c, j2, &mut rng) {
                    return true;
                }
            }
        }
        self.dark_slot_prob > 0.0 && rng.uniform() < self.dark_slot_prob
    }

    fn run_segment(&self, first_cycle: u64, cycles: u64, seed: u64) -> (Vec<u64>, LazyStats) {
        let plan = self.plan;
        let n = plan.n_channels;
        let period = self.source.pulse_period;
        let first = first_cycle * plan.pulses_per_cycle;
        let len = cycles * plan.pulses_per_cycle;
        let mut gen = SourceGenerator::segment(self.source, self.mask, first, len, seed)
            .without_detuning()
            .manual_prune();
        let mut dark = DarkSlots::new(self.dark_slot_prob, self.mask, first, first + len, seed);
        let mut counts = vec![0u64; n + 1];
        let mut stats = LazyStats { cycles, segments: 1, ..Default::default() };

        let candidate = |gen: &mut SourceGenerator, k0: u64, counts: &mut Vec<u64>| {
            let mut fired = 1;
            for c in 1..n {
                let kc = k0 + (c as u64) * plan.pack_size;
                let bright = gen.telegraph().is_bright(kc as f64 * period);
                if !self.channel_fires(c, kc, bright, seed) {
                    break;
                }
                fired += 1;
            }
            for c in counts.iter_mut().take(fired + 1).skip(2) {
                *c += 1;
            }
        };

        loop {
            let next = gen.next_pulse();
            let k = next.as_ref().map_or(u64::MAX, |(p, _)| p.pulse_index);
            while let Some(d) = dark.peek().filter(|&d| d < k) {
                stats.channel0_hits += 1;
                candidate(&mut gen, d, &mut counts);
                dark.advance();
            }
            let Some((primary, companion)) = next else { break };
            stats.channel0_photons += 1 + companion.is_some() as u64;
            let mut rng = KeyedRng::new(seed, stream::DEMUX, k);
            let mut hit = self.detected(0, primary.jitter, &mut rng);
            if let Some(imp) = companion {
                hit |= self.detected(0, imp.jitter, &mut rng);
            }
            if dark.peek() == Some(k) {
                hit = true;
                dark.advance();
            }
            if hit {
                stats.channel0_hits += 1;
                candidate(&mut gen, k, &mut counts);
            }
            let horizon = dark.peek().unwrap_or(u64::MAX).min(k);
            gen.telegraph().prune_before(horizon as f64 * period);
        }
        (counts, stats)
    }
}

/// Channel-0 slots fired by dark counts, as a Bernoulli sequence over the
/// active pulses of a segment.
struct DarkSlots {
    rng: KeyedRng,
    log_miss: f64,
    mask: PulseMask,
    rank: u64,
    rank_end: u64,
}

impl DarkSlots {
    fn new(p: f64, mask: PulseMask, first: u64, end: u64, seed: u64) -> Self {
        let mut s = Self {
            rng: KeyedRng::new(seed, stream::DARK, u64::MAX),
            log_miss: (-p).ln_1p(),
            mask,
            rank: mask.rank(first),
            rank_end: if p > 0.0 { mask.rank(end) } else { 0 },
        };
        s.rank = s.rank.saturating_add(s.gap());
        s
    }

    fn gap(&mut self) -> u64 {
        if self.log_miss == 0.0 {
            return u64::MAX;
        }
        let g = ((1.0 - self.rng.uniform()).ln() / self.log_miss).floor();
        if g >= u64::MAX as f64 {
            u64::MAX
        } else {
            g as u64
        }
    }

    fn peek(&self) -> Option<u64> {
        (self.rank < self.rank_end).then(|| self.mask.select(self.rank))
    }

    fn advance(&mut self) {
        self.rank = self.rank.saturating_add(1).saturating_add(self.gap());
    }
}

/// First-n-channels coincidence table of a long run, generated lazily.
pub fn lazy_nfold(source: &SourceConfig, demux: &DemuxConfig, run: &LazyRun) -> Result<LazyResult> {
    source.validate()?;
    let plan = demux.plan(source.pulse_period)?;
    if plan.n_channels < 2 {
        return Err(Error::config("coincidences need at least two channels"));
    }
    let cycles = run.n_pulses / plan.pulses_per_cycle;
    if cycles == 0 {
        return Err(Error::domain("run is shorter than one demultiplexer cycle"));
    }
    let segments = run.segments.clamp(1, cycles);
    let engine = Engine::new(source, &plan);
    let parts: Vec<(Vec<u64>, LazyStats)> = (0..segments)
        .into_par_iter()
        .map(|s| {
            let c0 = cycles * s / segments;
            let c1 = cycles * (s + 1) / segments;
            engine.run_segment(c0, c1 - c0, SourceGenerator::segment_seed(run.seed, s))
        })
        .collect();

    let mut counts = vec![0u64; plan.n_channels + 1];
    let mut stats = LazyStats::default();
    for (c, st) in parts {
        for (a, b) in counts.iter_mut().zip(c) {
            *a += b;
        }
        stats.cycles += st.cycles;
        stats.segments += st.segments;
        stats.channel0_photons += st.channel0_photons;
        stats.channel0_hits += st.channel0_hits;
    }
    let integration_time = (cycles * plan.pulses_per_cycle * plan.pulse_period_ps) as f64 * 1e-12;
    let rows: Vec<(usize, u64)> = (2..=plan.n_channels).map(|n| (n, counts[n])).collect();
    let table = NfoldTable::from_counts(&rows, &plan.downstream, integration_time, CoincidenceMode::FirstN);
    Ok(LazyResult { table, stats })
}

/// Coincidence table from a fully materialised run: source events, the
/// demultiplexer, then slot counting on the detected tags.
pub fn explicit_nfold(source: &SourceConfig, demux: &DemuxConfig, n_pulses: u64, mode: CoincidenceMode) -> Result<NfoldTable> {
    let plan = demux.plan(source.pulse_period)?;
    let events = simulate_source(source, n_pulses)?;
    let out = simulate_demux(&events, demux, source.pulse_period, n_pulses, source.rng_seed)?;
    let ts = out.channel_timestamps();
    let refs: Vec<&[u64]> = ts.iter().map(|v| v.as_slice()).collect();
    count_nfold(
        &refs,
        &plan.slot_grid(),
        demux.coincidence_slot_tolerance,
        &plan.downstream,
        n_pulses as f64 * source.pulse_period,
        mode,
    )
}

/// Closed-form first-n-channels rates of the source and demultiplexer model.
///
/// A slot fires in channels `0..n` when the emitter is bright at all `n`
/// pack instants, which for the two-state telegraph has probability
/// `q * prod(q + (1 - q) exp(-dt / tau_c))`, and each channel independently
/// delivers, transmits and detects a photon inside the slot window. Requires
/// no two-photon emission, no detector jitter and no dark counts.
pub fn expected_nfold(source: &SourceConfig, demux: &DemuxConfig) -> Result<NfoldTable> {
    source.validate()?;
    let plan = demux.plan(source.pulse_period)?;
    if source.two_photon_prob != 0.0 || plan.jitter_sigma != 0.0 || plan.dark_count_rate != 0.0 {
        return Err(Error::domain(
            "closed form needs two_photon_prob = 0, detector_jitter_sigma = 0 and dark_count_rate = 0",
        ));
    }
    let q = source.q_on;
    let dt = (plan.pack_size * plan.pulse_period_ps) as f64 * 1e-12;
    let p_bb = if q >= 1.0 { 1.0 } else { q + (1.0 - q) * (-dt / source.correlation_time()).exp() };
    let tau_ps = source.lifetime * 1e12;
    let tol = plan.tolerance_ps as f64;
    let engine = Engine::new(source, &plan);
    let window = |c: usize| {
        // rounding to the nearest picosecond widens the window by half a ps
        let m = engine.misalign_ps[c] as f64;
        let lo = (-tol - m - 0.5).max(0.0);
        let hi = tol - m + 0.5;
        if hi <= lo {
            0.0
        } else {
            (-lo / tau_ps).exp() - (-hi / tau_ps).exp()
        }
    };
    let slots = plan.slots_per_second();
    let mut rows = Vec::new();
    let mut prob = q * source.in_fiber_prob * plan.survival[0] * window(0);
    for n in 2..=plan.n_channels {
        let c = n - 1;
        prob *= p_bb * source.in_fiber_prob * plan.survival[c] * window(c);
        let rate = prob * slots;
        let eff: f64 = plan.downstream[..n].iter().product();
        rows.push(NfoldRow { n, event_count: 0, detection_rate_hz: rate, generation_rate_hz: rate / eff });
    }
    Ok(NfoldTable { mode: CoincidenceMode::FirstN, integration_time: 0.0, rows })
}
