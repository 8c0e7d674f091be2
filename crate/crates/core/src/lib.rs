//! Simulation and analysis toolkit for an offset-free femtosecond-comb
//! molecular clock.
//!
//! A CW infrared laser is summed with a femtosecond comb in a nonlinear
//! crystal. Beating the sum-frequency comb against the original comb gives
//! `f_laser - m f_rep`, independent of the carrier-envelope offset, and
//! locking that beat ties the repetition rate to the laser. The laser
//! itself is locked to a molecular two-photon line by third-harmonic
//! detection, and the repetition rate is counted against a reference.
//!
//! Modules:
//! * [`frequency`] / [`comb`]: exact µHz bookkeeping for the combs and beats
//! * [`noise`]: seeded power-law noise and reference presets
//! * [`spectroscopy`]: line model and harmonic demodulation
//! * [`servo`]: PI loops, tracking filter, closed-loop clock simulation
//! * [`stats`]: Allan deviation, drift fitting, campaign statistics
//! * [`scenario`] / [`csvio`]: TOML scenarios and CSV persistence

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod comb;
pub mod csvio;
pub mod frequency;
pub mod noise;
pub mod scenario;
pub mod servo;
pub mod spectroscopy;
pub mod stats;

pub use comb::{CombState, SfgConfig};
pub use frequency::ExactFrequency;
pub use noise::{FracSeries, NoiseSpec};
pub use servo::{ClockRun, ClockScenario, LockReport, PiConfig};
pub use spectroscopy::{LineModel, ModulationConfig};
pub use stats::{AllanCurve, AllanEstimator, Campaign, GateSeries};
