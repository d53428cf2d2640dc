//! Group-aware training-data allocation and tail-group active learning.
//!
//! The crate is organised bottom-up:
//!
//! - [`scaling`]: per-group risk scaling laws and the population / worst-case /
//!   frontier risks of an allocation.
//! - [`alloc`]: closed-form and algorithmic optimal allocations, plus an
//!   independent projected-gradient oracle.
//! - [`ridge`]: exact noise/bias/variance decomposition for one-hot ridge
//!   regression with a Monte Carlo cross-check.
//! - [`detect`]: rank-based tail-group detection bounds and their Monte Carlo
//!   verification.
//! - [`learner`]: a small two-head MLP (label head + underrepresentation head on a
//!   shared embedding) and a kernel posterior-variance estimator on embeddings.
//! - [`selfplay`]: cross-validated ensembles and the self-play
//!   generalization-gap estimator.
//! - [`alsim`]: synthetic 2-D biased data, acquisition signals, the active
//!   learning loop and reweighted frontier tracing.
//! - [`cli`]: the `grouprisk` command-line front end.
//!
//! The analytic modules are generic over the scalar type; the aliases below
//! fix the common `f64` (and `f32`) instantiations.

pub mod alloc;
pub mod alsim;
pub mod cli;
pub mod detect;
pub mod error;
pub mod learner;
pub mod metrics;
pub mod ridge;
pub mod rng;
pub mod scalar;
pub mod scaling;
pub mod selfplay;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type ScalingLaw = scaling::GroupScalingLaw<f64>;
pub type ScalingLaw32 = scaling::GroupScalingLaw<f32>;
pub type Prevalence = scaling::GroupDistribution<f64>;
pub type Prevalence32 = scaling::GroupDistribution<f32>;
pub type GroupAllocation = scaling::Allocation<f64>;
pub type GroupAllocation32 = scaling::Allocation<f32>;
pub type Tradeoff = scaling::TradeoffWeight<f64>;
pub type Tradeoff32 = scaling::TradeoffWeight<f32>;
pub type WorstCase = alloc::WorstCaseSolution<f64>;
pub type Frontier = alloc::FrontierSolution<f64>;
pub type RidgeProblem = ridge::RidgeOrthogonalProblem<f64>;
pub type RidgeProblem32 = ridge::RidgeOrthogonalProblem<f32>;
pub type NoiseBiasVariance = ridge::Decomposition<f64>;
