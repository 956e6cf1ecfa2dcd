//! Occupancy-detection attacks on 1 Hz smart-meter traces, and a defense
//! that hides occupancy from the attack model without changing the bill.
//!
//! The crate is organised along the data flow:
//!
//! * [`data`]: canonical CSV traces, cleaning, normalization, windows,
//!   and a deterministic synthetic household.
//! * [`nn`]: a from-scratch stacked LSTM classifier with backpropagation
//!   through time, training and gradient checking.
//! * [`perturb`]: sign-of-gradient noise applied as subtract/add pairs
//!   that conserve every pair's total consumption.
//! * [`gaussian`]: the additive Gaussian baseline.
//! * [`billing`]: TOU and PLP tariffs and bill-invariance checks.
//! * [`metrics`]: accuracy family, MCC and ROC-AUC.
//! * [`experiment`]: end-to-end train / sweep / compare / bill runs that
//!   write plain CSV and JSON artifacts.

pub mod billing;
pub mod data;
pub mod error;
pub mod experiment;
pub mod gaussian;
pub mod metrics;
pub mod nn;
pub mod perturb;

pub use error::{Error, Result};
