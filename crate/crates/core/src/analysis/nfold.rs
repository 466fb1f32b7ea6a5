use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Synchronised slot instants at the demultiplexer output, in picoseconds.
///
/// Slot `j` of cycle `m` is at `origin + m * cycle_period + j * slot_spacing`
/// for `j < slots_per_cycle`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotGrid {
    pub origin_ps: u64,
    pub slot_spacing_ps: u64,
    pub slots_per_cycle: u64,
    pub cycle_period_ps: u64,
}

impl SlotGrid {
    pub fn validate(&self) -> Result<()> {
        if self.slot_spacing_ps == 0 || self.slots_per_cycle == 0 {
            return Err(Error::config("slot grid needs a positive spacing and slot count"));
        }
        if self.slots_per_cycle * self.slot_spacing_ps > self.cycle_period_ps {
            return Err(Error::config("slots overflow the cycle period"));
        }
        Ok(())
    }

    pub fn slot_time(&self, id: u64) -> u64 {
        let (m, j) = (id / self.slots_per_cycle, id % self.slots_per_cycle);
        self.origin_ps + m * self.cycle_period_ps + j * self.slot_spacing_ps
    }

    /// Global slot id of a timestamp within `tolerance_ps` of a slot instant.
    #[inline]
    pub fn slot_of(&self, t: u64, tolerance_ps: u64) -> Option<u64> {
        let rel = t as i128 - self.origin_ps as i128;
        let cp = self.cycle_period_ps as i128;
        let (m, r) = (rel.div_euclid(cp), rel.rem_euclid(cp));
        let sp = self.slot_spacing_ps as i128;
        let tol = tolerance_ps as i128;
        if cp - r <= tol {
            // early tag for slot 0 of the next cycle
            return u64::try_from(m + 1).ok().map(|m| m * self.slots_per_cycle);
        }
        let j = (r + sp / 2) / sp;
        if j >= self.slots_per_cycle as i128 || (r - j * sp).abs() > tol || m < 0 {
            return None;
        }
        Some(m as u64 * self.slots_per_cycle + j as u64)
    }

    /// Sorted, de-duplicated slot ids hit by a sorted timestamp list.
    pub fn slot_ids(&self, timestamps: &[u64], tolerance_ps: u64) -> Vec<u64> {
        let mut ids: Vec<u64> = timestamps.iter().filter_map(|&t| self.slot_of(t, tolerance_ps)).collect();
        ids.dedup();
        ids
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoincidenceMode {
    /// Channels `0..n` all fire.
    #[default]
    FirstN,
    /// At least `n` channels fire.
    AnyN,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NfoldRow {
    pub n: usize,
    pub event_count: u64,
    pub detection_rate_hz: f64,
    pub generation_rate_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NfoldTable {
    pub mode: CoincidenceMode,
    pub integration_time: f64,
    pub rows: Vec<NfoldRow>,
}

impl NfoldTable {
    pub fn row(&self, n: usize) -> Option<&NfoldRow> {
        self.rows.iter().find(|r| r.n == n)
    }

    /// Builds a table from raw counts `counts[n]` for `n = 2..`.
    pub fn from_counts(
        counts: &[(usize, u64)],
        efficiencies: &[f64],
        integration_time: f64,
        mode: CoincidenceMode,
    ) -> Self {
        let mean_eff = efficiencies.iter().sum::<f64>() / efficiencies.len().max(1) as f64;
        let rows = counts
            .iter()
            .map(|&(n, count)| {
                let rate = count as f64 / integration_time;
                let eff: f64 = match mode {
                    CoincidenceMode::FirstN => efficiencies[..n].iter().product(),
                    CoincidenceMode::AnyN => mean_eff.powi(n as i32),
                };
                NfoldRow { n, event_count: count, detection_rate_hz: rate, generation_rate_hz: rate / eff }
            })
            .collect();
        Self { mode, integration_time, rows }
    }
}

fn intersect(a: &[u64], b: &[u64]) -> Vec<u64> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::with_capacity(a.len().min(b.len()));
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}

/// Counts synchronised-slot coincidences for `n = 2..=channels`.
///
/// `streams[c]` holds the sorted timestamps (ps) of channel `c`, and
/// `efficiencies[c]` the downstream efficiency divided out to turn detected
/// rates into generation rates.
pub fn count_nfold(
    streams: &[&[u64]],
    grid: &SlotGrid,
    tolerance: f64,
    efficiencies: &[f64],
    integration_time: f64,
    mode: CoincidenceMode,
) -> Result<NfoldTable> {
    grid.validate()?;
    if streams.len() != efficiencies.len() {
        return Err(Error::domain(format!(
            "{} streams but {} efficiencies",
            streams.len(),
            efficiencies.len()
        )));
    }
    if streams.len() < 2 {
        return Err(Error::domain("coincidences need at least two channels"));
    }
    let tol_ps = crate::units::seconds_to_ps(tolerance);
    if tol_ps < 0 || 2 * tol_ps as u64 >= grid.slot_spacing_ps {
        return Err(Error::domain("tolerance must lie in [0, slot spacing / 2)"));
    }
    if !(integration_time > 0.0) {
        return Err(Error::domain("integration_time must be > 0"));
    }
    if efficiencies.iter().any(|e| !(*e > 0.0 && *e <= 1.0)) {
        return Err(Error::domain("efficiencies must lie in (0, 1]"));
    }
    let ids: Vec<Vec<u64>> = streams.iter().map(|s| grid.slot_ids(s, tol_ps as u64)).collect();
    let n_ch = streams.len();
    let mut counts = Vec::with_capacity(n_ch - 1);
    match mode {
        CoincidenceMode::FirstN => {
            let mut cur = ids[0].clone();
            for (c, other) in ids.iter().enumerate().skip(1) {
                cur = intersect(&cur, other);
                counts.push((c + 1, cur.len() as u64));
            }
        }
        CoincidenceMode::AnyN => {
            let mut all: Vec<u64> = ids.concat();
            all.sort_unstable();
            let mut at_least = vec![0u64; n_ch + 1];
            for run in all.chunk_by(|a, b| a == b) {
                for slot in &mut at_least[1..=run.len()] {
                    *slot += 1;
                }
            }
            counts.extend((2..=n_ch).map(|n| (n, at_least[n])));
        }
    }
    Ok(NfoldTable::from_counts(&counts, efficiencies, integration_time, mode))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PnFit {
    /// Average per-channel demultiplexing efficiency.
    pub p: f64,
    /// Fitted per-channel slot probability `s * p`.
    pub q: f64,
    /// Sum of squared log residuals.
    pub residual: f64,
}

/// Fits `ln P(n) = n ln q` through the origin, with `P(n) = rate / slots`,
/// and returns `p = q / source_prob`.
pub fn fit_pn(generation_rates: &[(usize, f64)], slots_per_second: f64, source_prob: f64) -> Result<PnFit> {
    if generation_rates.is_empty() {
        return Err(Error::domain("no rate points"));
    }
    if !(slots_per_second > 0.0) {
        return Err(Error::domain("slots_per_second must be > 0"));
    }
    if !(source_prob > 0.0 && source_prob <= 1.0) {
        return Err(Error::domain("source_prob must lie in (0, 1]"));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for &(n, rate) in generation_rates {
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(Error::domain(format!("rate for n={n} must be positive, got {rate}")));
        }
        if n == 0 {
            return Err(Error::domain("photon number must be >= 1"));
        }
        let n = n as f64;
        num += n * (rate / slots_per_second).ln();
        den += n * n;
    }
    let ln_q = num / den;
    let residual = generation_rates
        .iter()
        .map(|&(n, rate)| ((rate / slots_per_second).ln() - n as f64 * ln_q).powi(2))
        .sum();
    let q = ln_q.exp();
    Ok(PnFit { p: q / source_prob, q, residual })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> SlotGrid {
        SlotGrid { origin_ps: 242_000, slot_spacing_ps: 12_100, slots_per_cycle: 4, cycle_period_ps: 51 * 12_100 }
    }

    #[test]
    fn slot_lookup() {
        let g = grid();
        assert_eq!(g.slot_of(242_000, 1000), Some(0));
        assert_eq!(g.slot_of(242_000 + 12_100 * 3 + 999, 1000), Some(3));
        assert_eq!(g.slot_of(242_000 + 12_100 * 4, 1000), None);
        assert_eq!(g.slot_of(242_000 + 51 * 12_100 - 500, 1000), Some(4));
        assert_eq!(g.slot_of(241_500, 1000), Some(0));
        assert_eq!(g.slot_of(242_000 + 6_000, 1000), None);
        assert_eq!(g.slot_of(0, 1000), None);
        assert_eq!(g.slot_time(5), 242_000 + 51 * 12_100 + 12_100);
    }

    #[test]
    fn single_full_slot() {
        let t = [grid().slot_time(9)];
        let streams: Vec<&[u64]> = vec![&t; 6];
        let tab = count_nfold(&streams, &grid(), 1e-9, &[0.5; 6], 1.0, CoincidenceMode::FirstN).unwrap();
        for n in 2..=6 {
            assert_eq!(tab.row(n).unwrap().event_count, 1);
        }
        assert!((tab.row(6).unwrap().generation_rate_hz - 64.0).abs() < 1e-9);
    }

    #[test]
    fn any_n_counts_multiplicity() {
        let g = grid();
        let (a, b) = ([g.slot_time(0)], [g.slot_time(1)]);
        let streams: Vec<&[u64]> = vec![&a, &b, &a];
        let first = count_nfold(&streams, &g, 1e-9, &[1.0; 3], 1.0, CoincidenceMode::FirstN).unwrap();
        assert_eq!(first.row(2).unwrap().event_count, 0);
        let any = count_nfold(&streams, &g, 1e-9, &[1.0; 3], 1.0, CoincidenceMode::AnyN).unwrap();
        assert_eq!(any.row(2).unwrap().event_count, 1);
        assert_eq!(any.row(3).unwrap().event_count, 0);
    }

    #[test]
    fn table_rate_example() {
        let tab = NfoldTable::from_counts(&[(3, 1_435_630)], &[0.86, 0.86, 0.87], 2048.0, CoincidenceMode::FirstN);
        assert!((tab.rows[0].detection_rate_hz - 701.0).abs() < 0.05);
    }

    #[test]
    fn pn_examples() {
        let (q, s, slots) = (0.051_f64, 0.1, 6.4e6);
        let rates: Vec<(usize, f64)> = (3..=6).map(|n| (n, q.powi(n as i32) * slots)).collect();
        assert!((fit_pn(&rates, slots, s).unwrap().p - 0.51).abs() < 1e-9);
        let single = fit_pn(&[(3, 0.125 * slots)], slots, 1.0).unwrap();
        assert!((single.q - 0.5).abs() < 1e-12);
        assert!(fit_pn(&[(3, 0.0)], slots, s).is_err());
        let published = fit_pn(&[(3, 1494.4), (4, 54.2), (5, 2.1), (6, 0.1)], 6.4e6, 0.1).unwrap();
        assert!((0.40..=0.55).contains(&published.p), "{}", published.p);
    }

    #[test]
    fn rejects_mismatched_streams() {
        let t: [u64; 0] = [];
        let streams: Vec<&[u64]> = vec![&t; 3];
        assert!(count_nfold(&streams, &grid(), 1e-9, &[1.0; 2], 1.0, CoincidenceMode::FirstN).is_err());
    }
}
