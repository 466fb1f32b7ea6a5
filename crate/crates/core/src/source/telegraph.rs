//! Two-state telegraph process for charge-state blinking.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

/// Bright-state telegraph interval `[start, end)` in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
    pub bright: bool,
}

/// Current state of the process and the time it next flips.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TelegraphState {
    pub bright: bool,
    pub next_flip_time: f64,
}

/// A lazily extended realization of the telegraph process.
///
/// Intervals are generated on demand as later times are queried and dropped
/// with [`TelegraphTrace::prune_before`]. Queries must not go back past the
/// pruned horizon.
#[derive(Debug, Clone)]
pub struct TelegraphTrace {
    rng: ChaCha8Rng,
    on: Option<Exp<f64>>,
    off: Option<Exp<f64>>,
    intervals: VecDeque<Interval>,
    state: TelegraphState,
}

impl TelegraphTrace {
    /// Starts the process at `t0` in its stationary distribution. With
    /// `q_on = 1` the trace is a single endless bright interval.
    pub fn new(q_on: f64, t_on: f64, t0: f64, mut rng: ChaCha8Rng) -> Self {
        let always_on = q_on >= 1.0;
        let on = (!always_on).then(|| Exp::new(1.0 / t_on).expect("t_on > 0"));
        let off = (!always_on).then(|| {
            let t_off = t_on * (1.0 - q_on) / q_on;
            Exp::new(1.0 / t_off).expect("t_off > 0")
        });
        let bright = always_on || rng.random::<f64>() < q_on;
        // exponential residence is memoryless, so the residual time of the
        // initial state has the same law as a full residence
        let mut trace = Self {
            rng,
            on,
            off,
            intervals: VecDeque::new(),
            state: TelegraphState { bright, next_flip_time: t0 },
        };
        trace.push_interval();
        trace
    }

    fn push_interval(&mut self) {
        let start = self.state.next_flip_time;
        let bright = self.state.bright;
        let dist = if bright { self.on } else { self.off };
        let end = match dist {
            Some(d) => start + d.sample(&mut self.rng),
            None => f64::INFINITY,
        };
        self.intervals.push_back(Interval { start, end, bright });
        self.state = TelegraphState { bright: !bright, next_flip_time: end };
    }

    /// Generates intervals until one ends after `t`.
    fn ensure(&mut self, t: f64) {
        while self.intervals.back().is_none_or(|iv| iv.end <= t) {
            self.push_interval();
        }
    }

    /// The interval containing `t`.
    pub fn interval_at(&mut self, t: f64) -> Interval {
        self.ensure(t);
        let idx = self.intervals.partition_point(|iv| iv.end <= t);
        let iv = self.intervals[idx];
        debug_assert!(iv.start <= t, "query at {t} before pruned horizon {}", iv.start);
        iv
    }

    pub fn is_bright(&mut self, t: f64) -> bool {
        self.interval_at(t).bright
    }

    /// Drops intervals that end at or before `t`.
    pub fn prune_before(&mut self, t: f64) {
        while self.intervals.len() > 1 && self.intervals[0].end <= t {
            self.intervals.pop_front();
        }
    }

    /// Removes and returns the earliest retained interval.
    pub fn next_interval(&mut self) -> Interval {
        self.ensure(f64::NEG_INFINITY);
        let iv = self.intervals.pop_front().expect("ensured non-empty");
        if self.intervals.is_empty() {
            self.push_interval();
        }
        iv
    }

    /// State after the last generated interval.
    pub fn frontier(&self) -> TelegraphState {
        self.state
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::chacha_stream;

    #[test]
    fn intervals_are_contiguous_and_alternate() {
        let mut tr = TelegraphTrace::new(0.59, 5.2e-6, 0.0, chacha_stream(1, 1));
        let mut prev = tr.next_interval();
        assert_eq!(prev.start, 0.0);
        for _ in 0..1000 {
            let iv = tr.next_interval();
            assert_eq!(iv.start, prev.end);
            assert_ne!(iv.bright, prev.bright);
            assert!(iv.end > iv.start);
            prev = iv;
        }
    }

    #[test]
    fn lookahead_does_not_change_realization() {
        let mut a = TelegraphTrace::new(0.59, 5.2e-6, 0.0, chacha_stream(2, 1));
        let mut b = a.clone();
        let probe: Vec<bool> = (0..200).map(|i| a.is_bright(i as f64 * 1e-6)).collect();
        let seq_a: Vec<_> = (0..50).map(|_| a.next_interval()).collect();
        let seq_b: Vec<_> = (0..50).map(|_| b.next_interval()).collect();
        assert_eq!(seq_a, seq_b);
        for (i, &s) in probe.iter().enumerate() {
            let t = i as f64 * 1e-6;
            let iv = seq_b.iter().find(|iv| iv.start <= t && t < iv.end).unwrap();
            assert_eq!(iv.bright, s);
        }
    }

    #[test]
    fn always_bright() {
        let mut tr = TelegraphTrace::new(1.0, 5.2e-6, 0.0, chacha_stream(3, 1));
        assert!(tr.is_bright(1e3));
        let iv = tr.next_interval();
        assert!(iv.bright && iv.end.is_infinite());
    }
}
