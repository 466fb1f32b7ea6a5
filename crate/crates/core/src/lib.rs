//! Discrete-event Monte Carlo simulation of a pulsed quantum-dot single-photon
//! source feeding an active temporal-to-spatial demultiplexer, together with
//! the time-tag analysis that recovers the figures of merit of such a source:
//! brightness budget, g2(0), blinking yield, HOM visibility and n-fold
//! coincidence rates.
//!
//! Module map:
//!
//! - [`cavity`]: closed-form photon-budget calculators (Q, extraction,
//!   Purcell factor, beta, brightness).
//! - [`source`]: seeded emission model (telegraph blinking, emission jitter,
//!   two-photon impurity, drifting detuning) and its calibrators.
//! - [`demux`]: pack routing, synchronizing delays, losses and detection.
//! - [`timetag`]: the `.spstag` binary format, merge and windowing.
//! - [`analysis`]: correlation histograms and estimators, HOM and HBT
//!   experiment models, n-fold counting and the p^n fit.
//! - [`pipeline`]: long-duration coincidence runs that skip over slots which
//!   cannot contribute to an n-fold event.
//! - [`config`] / [`roundtrip`]: run configuration and the configured vs.
//!   recovered report used by the command-line tool.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cavity;
pub mod config;
pub mod demux;
mod error;
pub mod pipeline;
pub mod rng;
pub mod roundtrip;
pub mod source;
pub mod timetag;
pub mod units;

pub use error::{Error, Result};
