//! Tuning the parameters of black-box static analyzers.
//!
//! Analyzer flags live in complete lattices ([`lattice`]). A distribution over
//! settings is a one-point base plus a random delta ([`distributions`]); each
//! round samples settings, analyzes them under a time budget, raises the base
//! to what the completed runs prove safe and rescales the delta
//! ([`refinement`], [`engine`]). Real analyzers are driven through
//! [`adapter`], and [`sim`] provides a monotone analyzer on a virtual clock.
//!
//! Distribution arithmetic is generic over [`Scalar`] (`f32` or `f64`); times
//! and budgets are always `f64` seconds.

pub mod adapter;
pub mod analysis;
pub mod config;
pub mod distributions;
pub mod engine;
pub mod harness;
pub mod lattice;
pub mod refinement;
pub mod report;
pub mod scalar;
pub mod sim;

pub use analysis::{AlarmId, AlarmSet, AnalysisOutcome, Analyzer, FailureReason, OutcomeStatus};
pub use distributions::{DeltaDist, JointDistribution, ParamDistribution, RngSeed};
pub use engine::{tune, HyperParams, RoundReport, Termination, TuneRequest, TuneResult};
pub use lattice::{Extended, ParamSpec, ParamType, ParamValue, Profile, Setting};
pub use scalar::Scalar;

pub type Delta = DeltaDist<f64>;
pub type Delta32 = DeltaDist<f32>;
pub type Joint = JointDistribution<f64>;
pub type Joint32 = JointDistribution<f32>;
pub type ParamDist = ParamDistribution<f64>;
pub type ParamDist32 = ParamDistribution<f32>;
pub type Round = RoundReport<f64>;
pub type Round32 = RoundReport<f32>;
pub type Tuned = TuneResult<f64>;
pub type Tuned32 = TuneResult<f32>;
pub type Request<'a> = TuneRequest<'a, f64>;
pub type Request32<'a> = TuneRequest<'a, f32>;
