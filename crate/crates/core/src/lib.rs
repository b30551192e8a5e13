//! Measurement selection for forecasting dynamical systems.
//!
//! A scalar linear functional `y = <u, x + noise>` is chosen at every sampling
//! instant so that the Cramér–Rao bound on a *future* state stays small. Two
//! strategies are provided:
//!
//! * the collapse policy ([`policies`]), which measures along the dominant
//!   right singular direction of the long-horizon flow Jacobian, corrected for
//!   the current bound and the noise covariance;
//! * an approximate dynamic-programming baseline ([`dp`]) over sampled
//!   (state, bound) pairs.
//!
//! [`systems`] supplies the dynamics and flow Jacobians, [`information`] the
//! Fisher/bound arithmetic, [`estimation`] an extended Kalman filter that shares
//! the bound update, and [`harness`] the experiment runner and CLI plumbing.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dp;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod information;
pub mod policies;
pub mod rng;
pub mod systems;

pub use error::{Error, Result};
pub use information::{Crlb, MeasurementVector, NoiseModel};
pub use systems::{DynamicalSystem, IntegratorConfig, State};
