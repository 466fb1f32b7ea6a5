use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::detuning::DetuningProcess;
use super::telegraph::TelegraphTrace;
use super::{PhotonEvent, SourceConfig};
use crate::rng::{chacha_stream, derive_seed, stream};

/// Selects which pulses of the train are excited: pulse `k` is active when
/// `k % period < active`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PulseMask {
    pub period: u64,
    pub active: u64,
}

impl PulseMask {
    pub const ALL: PulseMask = PulseMask { period: 1, active: 1 };

    pub fn new(period: u64, active: u64) -> Self {
        assert!(period >= 1 && (1..=period).contains(&active), "invalid pulse mask {active}/{period}");
        Self { period, active }
    }

    /// Number of active pulses with index below `k`.
    #[inline]
    pub fn rank(&self, k: u64) -> u64 {
        (k / self.period) * self.active + (k % self.period).min(self.active)
    }

    /// Index of the active pulse with rank `j`.
    #[inline]
    pub fn select(&self, j: u64) -> u64 {
        (j / self.active) * self.period + j % self.active
    }

    pub fn contains(&self, k: u64) -> bool {
        k % self.period < self.active
    }
}

/// Smallest pulse index `k` with `k * period >= t`, evaluated with the same
/// floating-point expression used for pulse instants.
pub(crate) fn first_pulse_at_or_after(t: f64, period: f64) -> u64 {
    if t <= 0.0 {
        return 0;
    }
    if !t.is_finite() {
        return u64::MAX;
    }
    let mut k = (t / period).ceil() as u64;
    while (k as f64) * period < t {
        k += 1;
    }
    while k > 0 && ((k - 1) as f64) * period >= t {
        k -= 1;
    }
    k
}

/// Streaming photon generator over a range of pulses.
///
/// Only bright pulses are visited: within each bright telegraph interval the
/// gaps between successful pulses are drawn from a geometric law, so dark
/// intervals and unsuccessful pulses cost nothing.
#[derive(Debug, Clone)]
pub struct SourceGenerator {
    period: f64,
    lifetime: f64,
    epsilon: f64,
    log_miss: f64,
    mask: PulseMask,
    end: u64,
    end_time: f64,
    trace: TelegraphTrace,
    emission: ChaCha8Rng,
    detuning_rng: ChaCha8Rng,
    detuning: Option<DetuningProcess>,
    cursor: f64,
    auto_prune: bool,
    next_rank: u64,
    rank_end: u64,
    pending: Option<PhotonEvent>,
}

impl SourceGenerator {
    /// Generator for pulses `0..n_pulses` seeded from the config.
    pub fn new(config: &SourceConfig, n_pulses: u64) -> Self {
        Self::segment(config, PulseMask::ALL, 0, n_pulses, config.rng_seed)
    }

    /// Generator for active pulses in `first..first + n_pulses`, started in
    /// the stationary state at `first` and seeded with `seed`.
    pub fn segment(config: &SourceConfig, mask: PulseMask, first: u64, n_pulses: u64, seed: u64) -> Self {
        let t0 = first as f64 * config.pulse_period;
        let end = first + n_pulses;
        let s = config.in_fiber_prob;
        Self {
            period: config.pulse_period,
            lifetime: config.lifetime,
            epsilon: config.two_photon_prob,
            log_miss: if s >= 1.0 { f64::NEG_INFINITY } else { (1.0 - s).ln() },
            mask,
            end,
            end_time: end as f64 * config.pulse_period,
            trace: TelegraphTrace::new(config.q_on, config.t_on, t0, chacha_stream(seed, stream::TELEGRAPH)),
            emission: chacha_stream(seed, stream::EMISSION),
            detuning_rng: chacha_stream(seed, stream::DETUNING),
            detuning: Some(DetuningProcess::new(config.detuning_sigma, config.detuning_tau)),
            cursor: if s > 0.0 { t0 } else { f64::INFINITY },
            auto_prune: true,
            next_rank: 0,
            rank_end: 0,
            pending: None,
        }
    }

    /// Skips the drift process; events then carry zero detuning.
    pub fn without_detuning(mut self) -> Self {
        self.detuning = None;
        self
    }

    /// Leaves pruning of past telegraph intervals to the caller, who may
    /// then query any time after its last [`TelegraphTrace::prune_before`].
    pub fn manual_prune(mut self) -> Self {
        self.auto_prune = false;
        self
    }

    /// The telegraph realization driving this generator. Queries must not
    /// precede the pulse of the most recently returned event.
    pub fn telegraph(&mut self) -> &mut TelegraphTrace {
        &mut self.trace
    }

    /// Per-source seed of a segment, for segmented runs.
    pub fn segment_seed(seed: u64, segment: u64) -> u64 {
        derive_seed(seed, 0x5e67, segment)
    }

    /// Next primary photon together with its two-photon companion, if any.
    ///
    /// Unlike [`Iterator::next`] this never advances past the pulse of the
    /// returned photon, so the telegraph can still be queried from there.
    pub fn next_pulse(&mut self) -> Option<(PhotonEvent, Option<PhotonEvent>)> {
        debug_assert!(self.pending.is_none(), "next_pulse mixed with next");
        let primary = self.next()?;
        Some((primary, self.pending.take()))
    }

    #[inline]
    fn gap(&mut self) -> u64 {
        if self.log_miss == f64::NEG_INFINITY {
            return 0;
        }
        let u = 1.0 - self.emission.random::<f64>();
        let g = (u.ln() / self.log_miss).floor();
        if g >= u64::MAX as f64 {
            u64::MAX
        } else {
            g as u64
        }
    }

    fn exp_jitter(&mut self) -> f64 {
        let u = 1.0 - self.emission.random::<f64>();
        -self.lifetime * u.ln()
    }

    fn detuning_at(&mut self, t: f64) -> f64 {
        match &mut self.detuning {
            Some(p) => p.sample(t, &mut self.detuning_rng),
            None => 0.0,
        }
    }

    fn emit(&mut self, pulse: u64) -> PhotonEvent {
        let base = pulse as f64 * self.period;
        let jitter = self.exp_jitter();
        let u_imp: f64 = self.emission.random();
        let extra = self.exp_jitter();
        let z_imp: f64 = self.emission.sample(StandardNormal);
        let detuning = self.detuning_at(base + jitter);
        if u_imp < self.epsilon {
            let j2 = jitter + extra;
            let d2 = self.detuning.as_ref().map_or(0.0, |p| p.branch(extra, z_imp));
            self.pending = Some(PhotonEvent {
                pulse_index: pulse,
                emission_time: base + j2,
                jitter: j2,
                detuning: d2,
                is_impurity: true,
            });
        }
        PhotonEvent { pulse_index: pulse, emission_time: base + jitter, jitter, detuning, is_impurity: false }
    }
}

impl Iterator for SourceGenerator {
    type Item = PhotonEvent;

    fn next(&mut self) -> Option<PhotonEvent> {
        loop {
            if let Some(ev) = self.pending.take() {
                return Some(ev);
            }
            if self.next_rank < self.rank_end {
                let pulse = self.mask.select(self.next_rank);
                let ev = self.emit(pulse);
                self.next_rank = self.next_rank.saturating_add(1).saturating_add(self.gap());
                return Some(ev);
            }
            if self.cursor >= self.end_time {
                return None;
            }
            let iv = self.trace.interval_at(self.cursor);
            if self.auto_prune {
                self.trace.prune_before(self.cursor);
            }
            self.cursor = iv.end;
            if !iv.bright {
                continue;
            }
            let lo = first_pulse_at_or_after(iv.start, self.period);
            let hi = first_pulse_at_or_after(iv.end, self.period).min(self.end);
            let (r_lo, r_hi) = (self.mask.rank(lo), self.mask.rank(hi));
            if r_lo >= r_hi {
                continue;
            }
            self.rank_end = r_hi;
            self.next_rank = r_lo.saturating_add(self.gap());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_rank_select_inverse() {
        let m = PulseMask::new(51, 4);
        for j in 0..1000 {
            let k = m.select(j);
            assert!(m.contains(k));
            assert_eq!(m.rank(k), j);
            assert_eq!(m.rank(k + 1), j + 1);
        }
        assert_eq!(m.rank(51), 4);
        assert_eq!(m.rank(10), 4);
    }

    #[test]
    fn first_pulse_boundaries() {
        let t = 12.1e-9;
        assert_eq!(first_pulse_at_or_after(0.0, t), 0);
        for k in [1u64, 7, 1_000_003, 160_000_000_000] {
            let at = k as f64 * t;
            assert_eq!(first_pulse_at_or_after(at, t), k);
            assert_eq!(first_pulse_at_or_after(at * (1.0 + 1e-15), t), k + 1);
        }
    }
}
