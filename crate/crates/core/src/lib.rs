//! Dimensioning of the out-queue of a probe-train reflector.
//!
//! Concurrent measurement sessions send probe trains to one reflector,
//! which re-sends each train whole, in arrival order. The out-queue is an
//! M/G/1 system with a bounded `1/t²` service-time density. This crate
//! computes its queue-length distribution (embedded Markov chain), its
//! waiting-time distribution (Monte Carlo convolutions) and quantiles of
//! both, and ships a discrete-event simulator to cross-check them.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the
//! aliases below fix the scalar to `f64`.

pub mod analysis;
pub mod error;
pub mod numerics;
pub mod occupancy;
pub mod scalar;
pub mod scenario;
pub mod simulator;
pub mod waittime;

pub use analysis::{analyze, Analysis, AnalysisConfig};
pub use error::{Error, Result};
pub use numerics::{Grid, GriddedFunction, RandomStream};
pub use occupancy::{OccupancyConfig, OccupancyDistribution};
pub use scalar::Real;
pub use scenario::{Scenario, ServiceTimeModel, SessionSpec};
pub use simulator::{ComparisonReport, SimConfig, SimulationResult, Thresholds};
pub use waittime::{MonteCarloConfig, WaitingTimeDistribution};

pub type SessionSpecF64 = SessionSpec<f64>;
pub type ScenarioF64 = Scenario<f64>;
pub type ServiceTimeModelF64 = ServiceTimeModel<f64>;
pub type OccupancyF64 = OccupancyDistribution<f64>;
pub type WaitingTimeF64 = WaitingTimeDistribution<f64>;
pub type AnalysisF64 = Analysis<f64>;

pub type SessionSpecF32 = SessionSpec<f32>;
pub type ScenarioF32 = Scenario<f32>;
pub type ServiceTimeModelF32 = ServiceTimeModel<f32>;
pub type OccupancyF32 = OccupancyDistribution<f32>;
pub type WaitingTimeF32 = WaitingTimeDistribution<f32>;
pub type AnalysisF32 = Analysis<f32>;
