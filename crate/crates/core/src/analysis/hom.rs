use serde::{Deserialize, Serialize};

use super::g2::peak_geometry;
use super::histogram::Histogram;
use crate::rng::{stream, KeyedRng};
use crate::source::PhotonEvent;
use crate::timetag::{TagStream, TimeTag, FLAG_IMPURITY};
use crate::units::{round_ps, seconds_to_ps};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomResult {
    pub visibility: f64,
    /// Interferometer delay (s).
    pub delay: f64,
    pub central_area: u64,
    /// Mean area of the uncorrelated reference peaks.
    pub side_mean: f64,
    /// Peak indices used as the reference.
    pub reference_peaks: Vec<i64>,
}

/// Number of reference peaks taken on each side.
const REFERENCE_PEAKS: usize = 6;

/// HOM visibility `V = 1 - 2 A0 / A_ref` from a cross-port histogram.
///
/// `A0` is the central peak area. `A_ref` is the mean area of far peaks
/// (`|k| >= 5`) whose photon pairs never meet at the beamsplitter; peaks
/// within one period of `±delay` are skipped. Distinguishable photons split
/// independently, so `A0 = A_ref / 2` gives `V = 0`, and perfect coalescence
/// gives `V = 1`.
pub fn hom_visibility(hist: &Histogram, pulse_period: f64, peak_halfwidth: f64, delay: f64) -> Result<HomResult> {
    let (t, hw) = peak_geometry(pulse_period, peak_halfwidth)?;
    if !(delay >= 0.0) {
        return Err(Error::domain("delay must be >= 0"));
    }
    let d = (delay / pulse_period).round() as i64;
    let mut peaks = Vec::new();
    let mut k = 5i64;
    while peaks.len() < 2 * REFERENCE_PEAKS && k < 5 + 4 * REFERENCE_PEAKS as i64 {
        if (k - d).abs() > 1 {
            if !hist.covers(k * t, hw) {
                break;
            }
            peaks.push(-k);
            peaks.push(k);
        }
        k += 1;
    }
    if peaks.len() < 2 * REFERENCE_PEAKS {
        return Err(Error::InsufficientData(format!(
            "histogram must reach {REFERENCE_PEAKS} far peaks on each side clear of the delay"
        )));
    }
    peaks.sort_unstable();
    let central = hist.area(0, hw);
    let total: u64 = peaks.iter().map(|&k| hist.area(k * t, hw)).sum();
    let side_mean = total as f64 / peaks.len() as f64;
    if side_mean == 0.0 {
        return Err(Error::InsufficientData("reference peaks are empty".into()));
    }
    let v = (1.0 - 2.0 * central as f64 / side_mean).clamp(-1.0, 1.0);
    Ok(HomResult { visibility: v, delay, central_area: central, side_mean, reference_peaks: peaks })
}

#[inline]
fn photon_key(ev: &PhotonEvent) -> u64 {
    ev.pulse_index.wrapping_mul(2) | ev.is_impurity as u64
}

fn to_tag(t_ps: i64, channel: u8, ev: &PhotonEvent) -> TimeTag {
    TimeTag {
        timestamp: t_ps.max(0) as u64,
        channel,
        flags: if ev.is_impurity { FLAG_IMPURITY } else { 0 },
    }
}

fn sort_tags(tags: &mut TagStream) {
    tags.sort_unstable_by_key(|t| (t.timestamp, t.channel, t.flags));
}

/// Splits photons 50:50 onto two detectors (channels 0 and 1).
pub fn split_hbt(events: &[PhotonEvent], pulse_period: f64, rng_seed: u64) -> (TagStream, TagStream) {
    let t_ps = seconds_to_ps(pulse_period);
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for ev in events {
        let t = ev.pulse_index as i64 * t_ps + round_ps(ev.jitter * 1e12);
        if KeyedRng::new(rng_seed, stream::HBT, photon_key(ev)).uniform() < 0.5 {
            a.push(to_tag(t, 0, ev));
        } else {
            b.push(to_tag(t, 1, ev));
        }
    }
    sort_tags(&mut a);
    sort_tags(&mut b);
    (a, b)
}

/// Unbalanced Mach-Zehnder HOM experiment.
///
/// Each photon takes the short or the long (`delay`) arm with equal
/// probability. A short-arm and a long-arm photon reaching the final
/// beamsplitter in the same slot coalesce with probability
/// `overlap_fn(|dt_emission|)` and then leave through one random port;
/// otherwise every photon picks a port independently. Returns the two
/// detector streams (channels 0 and 1).
pub fn simulate_hom<F>(
    events: &[PhotonEvent],
    pulse_period: f64,
    delay: f64,
    overlap_fn: F,
    rng_seed: u64,
) -> Result<(TagStream, TagStream)>
where
    F: Fn(f64) -> f64,
{
    if !(pulse_period > 0.0) {
        return Err(Error::domain("pulse_period must be > 0"));
    }
    let ratio = delay / pulse_period;
    let d = ratio.round();
    if !(delay >= 0.0) || (ratio - d).abs() > 1e-6 {
        return Err(Error::domain("delay must be a non-negative multiple of pulse_period"));
    }
    let d = d as u64;
    let t_ps = seconds_to_ps(pulse_period);
    let delay_ps = d as i64 * t_ps;

    // (arrival slot, long arm, event index)
    let mut arrivals: Vec<(u64, bool, usize)> = events
        .iter()
        .enumerate()
        .map(|(i, ev)| {
            let long = KeyedRng::new(rng_seed, stream::HOM, photon_key(ev)).uniform() < 0.5;
            (ev.pulse_index + if long { d } else { 0 }, long, i)
        })
        .collect();
    arrivals.sort_unstable();

    let port = |ev: &PhotonEvent, salt: u64| {
        let mut r = KeyedRng::new(rng_seed, stream::HOM, photon_key(ev) ^ (salt << 62));
        r.uniform() < 0.5
    };
    let (mut a, mut b) = (Vec::new(), Vec::new());
    let mut emit = |idx: usize, long: bool, to_a: bool| {
        let ev = &events[idx];
        let t = ev.pulse_index as i64 * t_ps + if long { delay_ps } else { 0 } + round_ps(ev.jitter * 1e12);
        if to_a {
            a.push(to_tag(t, 0, ev));
        } else {
            b.push(to_tag(t, 1, ev));
        }
    };

    let mut i = 0;
    while i < arrivals.len() {
        let slot = arrivals[i].0;
        let j = i + arrivals[i..].partition_point(|x| x.0 == slot);
        let group = &arrivals[i..j];
        let pair = group.len() == 2 && group[0].1 != group[1].1;
        let coalesce = pair && {
            let (e0, e1) = (&events[group[0].2], &events[group[1].2]);
            let m = overlap_fn((e0.emission_time - e1.emission_time).abs());
            KeyedRng::new(rng_seed, stream::COINCIDENCE, slot).uniform() < m
        };
        if coalesce {
            let to_a = port(&events[group[0].2], 1);
            for &(_, long, idx) in group {
                emit(idx, long, to_a);
            }
        } else {
            for &(_, long, idx) in group {
                emit(idx, long, port(&events[idx], 2));
            }
        }
        i = j;
    }
    sort_tags(&mut a);
    sort_tags(&mut b);
    Ok((a, b))
}
