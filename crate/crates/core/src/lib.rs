//! Private AUC estimation for horizontally federated binary classifiers.
//!
//! Clients hold `(score, label)` pairs whose labels must stay private. The
//! crate simulates a server and `K` clients running three families of
//! protocols:
//!
//! * per-threshold noisy confusion counts ([`federation::Protocol::Threshold`]),
//! * rank sums over labels flipped once by randomized response, followed by
//!   a debiasing step ([`federation::Protocol::RankRr`], [`debias`]),
//! * rank sums with Laplace noise on the local statistics
//!   ([`federation::Protocol::RankLaplace`]).
//!
//! [`analysis`] holds the closed-form variance predictors, the seeded Monte
//! Carlo harness that checks them, and the top-k label inference attack.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod data;
pub mod debias;
pub mod error;
pub mod federation;
pub mod mechanisms;
pub mod metrics;
pub mod rng;

pub use error::{Error, Result};
pub use metrics::{Dataset, Sample};
pub use rng::SeededRng;
