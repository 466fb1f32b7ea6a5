//! Estimators over time-tag streams.

mod g2;
mod histogram;
mod hom;
mod nfold;

pub use g2::{
    blinking_model, bunching_envelope, fit_blinking, fit_blinking_points, g2_zero, BlinkingFit, Envelope,
};
pub use histogram::{g2_histogram, g2_histogram_brute, g2_histogram_par, Histogram, Normalization};
pub use hom::{hom_visibility, simulate_hom, split_hbt, HomResult};
pub use nfold::{count_nfold, fit_pn, CoincidenceMode, NfoldRow, NfoldTable, PnFit, SlotGrid};

use crate::timetag::TimeTag;

/// Timestamps of a tag stream.
pub fn timestamps(tags: &[TimeTag]) -> Vec<u64> {
    tags.iter().map(|t| t.timestamp).collect()
}
