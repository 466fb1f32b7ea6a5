use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::units::{ps_to_seconds, seconds_to_ps};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    #[default]
    Raw,
    PerSidePeak,
}

/// Counts of pairwise delays `t_b - t_a`.
///
/// Bins are centred on multiples of the bin width, so bin `j` collects
/// delays that round (half away from zero) to `j * bin_width`. The delay
/// axis is symmetric: bin `half_bins + j` holds delay `j * bin_width` for
/// `j` in `-half_bins..=half_bins`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width_ps: u64,
    /// Largest included `|t_b - t_a|` in picoseconds.
    pub max_tau_ps: u64,
    pub counts: Vec<u64>,
    #[serde(default)]
    pub normalization: Normalization,
}

impl Histogram {
    pub fn empty(bin_width_ps: u64, max_tau_ps: u64) -> Self {
        let half = half_bins(bin_width_ps, max_tau_ps);
        Self { bin_width_ps, max_tau_ps, counts: vec![0; 2 * half + 1], normalization: Normalization::Raw }
    }

    pub fn half_bins(&self) -> usize {
        self.counts.len() / 2
    }

    /// Bin width in seconds.
    pub fn bin_width(&self) -> f64 {
        ps_to_seconds(self.bin_width_ps as i64)
    }

    /// Lower edge of the first bin in seconds.
    pub fn t_min(&self) -> f64 {
        -(self.half_bins() as f64 + 0.5) * self.bin_width()
    }

    /// Delay at the centre of bin `i`, in picoseconds.
    pub fn center_ps(&self, i: usize) -> i64 {
        (i as i64 - self.half_bins() as i64) * self.bin_width_ps as i64
    }

    /// Bin index of a delay, or `None` outside `[-max_tau, max_tau]`.
    #[inline]
    pub fn bin_of(&self, tau_ps: i64) -> Option<usize> {
        if tau_ps.unsigned_abs() > self.max_tau_ps {
            return None;
        }
        let j = signed_bin(tau_ps, self.bin_width_ps);
        Some((j + self.half_bins() as i64) as usize)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Sum of counts in bins whose centre lies within `[center - hw, center + hw]`.
    pub fn area(&self, center_ps: i64, halfwidth_ps: i64) -> u64 {
        let w = self.bin_width_ps as i64;
        let h = self.half_bins() as i64;
        let lo = ceil_div(center_ps - halfwidth_ps, w).max(-h);
        let hi = floor_div(center_ps + halfwidth_ps, w).min(h);
        if lo > hi {
            return 0;
        }
        self.counts[(lo + h) as usize..=(hi + h) as usize].iter().sum()
    }

    /// Whether bins with centres in `[center - hw, center + hw]` all exist.
    pub fn covers(&self, center_ps: i64, halfwidth_ps: i64) -> bool {
        let edge = self.half_bins() as i64 * self.bin_width_ps as i64;
        (center_ps - halfwidth_ps) >= -edge && (center_ps + halfwidth_ps) <= edge
    }

    /// Writes `tau_ps,count` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "tau_ps,count")?;
        for (i, c) in self.counts.iter().enumerate() {
            writeln!(w, "{},{}", self.center_ps(i), c)?;
        }
        Ok(())
    }
}

fn half_bins(w: u64, max_tau: u64) -> usize {
    ((2 * max_tau + w) / (2 * w)) as usize
}

#[inline]
fn signed_bin(tau: i64, w: u64) -> i64 {
    let m = (2 * tau.unsigned_abs() + w) / (2 * w);
    if tau < 0 {
        -(m as i64)
    } else {
        m as i64
    }
}

fn floor_div(a: i64, b: i64) -> i64 {
    a.div_euclid(b)
}

fn ceil_div(a: i64, b: i64) -> i64 {
    -((-a).div_euclid(b))
}

fn check_args(bin_width: f64, max_tau: f64) -> Result<(u64, u64)> {
    if !(bin_width > 0.0) || !bin_width.is_finite() {
        return Err(Error::domain(format!("bin_width must be > 0, got {bin_width}")));
    }
    if !(max_tau >= 0.0) || !max_tau.is_finite() {
        return Err(Error::domain(format!("max_tau must be >= 0, got {max_tau}")));
    }
    let w = seconds_to_ps(bin_width);
    if w < 1 {
        return Err(Error::domain("bin_width is below 1 ps"));
    }
    Ok((w as u64, seconds_to_ps(max_tau) as u64))
}

fn accumulate(hist: &mut Histogram, tags_a: &[u64], tags_b: &[u64]) {
    let max = hist.max_tau_ps;
    let w = hist.bin_width_ps;
    let h = hist.half_bins() as i64;
    let Some(&first) = tags_a.first() else { return };
    let mut lo = tags_b.partition_point(|&t| t < first.saturating_sub(max));
    for &ta in tags_a {
        let start = ta.saturating_sub(max);
        while lo < tags_b.len() && tags_b[lo] < start {
            lo += 1;
        }
        let stop = ta.saturating_add(max);
        for &tb in &tags_b[lo..] {
            if tb > stop {
                break;
            }
            let tau = tb as i64 - ta as i64;
            hist.counts[(signed_bin(tau, w) + h) as usize] += 1;
        }
    }
}

/// All-pairs delay histogram of `t_b - t_a` over `[-max_tau, max_tau]`.
///
/// Both inputs are sorted timestamps in picoseconds; times are in seconds.
pub fn g2_histogram(tags_a: &[u64], tags_b: &[u64], bin_width: f64, max_tau: f64) -> Result<Histogram> {
    let (w, max) = check_args(bin_width, max_tau)?;
    let mut hist = Histogram::empty(w, max);
    accumulate(&mut hist, tags_a, tags_b);
    Ok(hist)
}

/// Same as [`g2_histogram`], splitting `tags_a` into chunks histogrammed on
/// up to `threads` workers. The result is identical for every thread count.
pub fn g2_histogram_par(tags_a: &[u64], tags_b: &[u64], bin_width: f64, max_tau: f64, threads: usize) -> Result<Histogram> {
    let (w, max) = check_args(bin_width, max_tau)?;
    let threads = threads.max(1);
    let template = Histogram::empty(w, max);
    if threads == 1 || tags_a.len() < 2 {
        let mut hist = template;
        accumulate(&mut hist, tags_a, tags_b);
        return Ok(hist);
    }
    let chunk = tags_a.len().div_ceil(threads * 4).max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    let parts: Vec<Vec<u64>> = pool.install(|| {
        tags_a
            .par_chunks(chunk)
            .map(|part| {
                let mut h = template.clone();
                accumulate(&mut h, part, tags_b);
                h.counts
            })
            .collect()
    });
    let mut hist = template;
    for p in parts {
        for (c, x) in hist.counts.iter_mut().zip(p) {
            *c += x;
        }
    }
    Ok(hist)
}

/// Quadratic reference implementation of [`g2_histogram`].
pub fn g2_histogram_brute(tags_a: &[u64], tags_b: &[u64], bin_width: f64, max_tau: f64) -> Result<Histogram> {
    let (w, max) = check_args(bin_width, max_tau)?;
    let mut hist = Histogram::empty(w, max);
    for &ta in tags_a {
        for &tb in tags_b {
            if let Some(i) = hist.bin_of(tb as i64 - ta as i64) {
                hist.counts[i] += 1;
            }
        }
    }
    Ok(hist)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pair_lands_in_zero_bin() {
        let h = g2_histogram(&[1000], &[1000], 100e-12, 1e-9).unwrap();
        assert_eq!(h.total(), 1);
        assert_eq!(h.counts[h.half_bins()], 1);
        assert_eq!(h.counts.len(), 21);
        assert!((h.t_min() + 1.05e-9).abs() < 1e-21);
    }

    #[test]
    fn symmetric_rounding() {
        let h = Histogram::empty(10, 100);
        for tau in 0..=100i64 {
            let (p, n) = (h.bin_of(tau).unwrap() as i64, h.bin_of(-tau).unwrap() as i64);
            assert_eq!(p - 10, 10 - n);
        }
        assert_eq!(h.bin_of(5), Some(11));
        assert_eq!(h.bin_of(4), Some(10));
        assert_eq!(h.bin_of(-5), Some(9));
        assert_eq!(h.bin_of(101), None);
    }

    #[test]
    fn empty_streams() {
        let h = g2_histogram(&[], &[5, 6], 1e-9, 1e-8).unwrap();
        assert_eq!(h.total(), 0);
        assert!(g2_histogram(&[1], &[1], 0.0, 1e-8).is_err());
    }

    #[test]
    fn areas() {
        let mut h = Histogram::empty(100, 1000);
        for c in h.counts.iter_mut() {
            *c = 1;
        }
        assert_eq!(h.area(0, 250), 5);
        assert_eq!(h.area(0, 200), 5);
        assert_eq!(h.area(900, 250), 4);
        assert!(h.covers(800, 200) && !h.covers(900, 200));
    }

    #[test]
    fn csv_columns() {
        let h = g2_histogram(&[0], &[100], 100e-12, 100e-12).unwrap();
        let mut out = Vec::new();
        h.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "tau_ps,count\n-100,0\n0,0\n100,1\n");
    }
}
