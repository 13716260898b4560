//! Batch anomaly labeling for satellite element-set archives.
//!
//! The pipeline turns raw TLE archives into labeled sequences through a
//! cascade of increasingly expensive tiers:
//!
//! 1. [`rules`]: fixed-priority physical rules over consecutive element sets.
//! 2. [`filter`]: a three-mode IMM bank of unscented Kalman filters
//!    (station-keeping, maneuver, decay) over ECI states.
//! 3. supGP calibration: the same filter with a tighter observation
//!    covariance whenever a record is tagged [`tle::Source::Supgp`].
//!
//! Around the cascade sit the feature and windowing stages that produce
//! fixed-shape training tensors, a frozen element-space propagator for
//! innovation scoring, and a synthetic trajectory generator ([`synth`])
//! that provides ground truth for validating the labelers.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// index loops mirror the matrix algebra
#![allow(clippy::needless_range_loop)]

pub mod cascade;
pub mod cli;
pub mod config;
pub mod dynamics;
pub mod features;
pub mod filter;
pub mod label;
pub mod rules;
pub mod synth;
pub mod tle;
pub mod windowing;

pub use label::Label;
pub use tle::{Source, TleRecord};
