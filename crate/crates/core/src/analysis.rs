//! The full analytic pipeline for one scenario.

use crate::error::Result;
use crate::occupancy::{pk_mean_wait, steady_state, OccupancyConfig, OccupancyDistribution};
use crate::scalar::Real;
use crate::scenario::{Scenario, ServiceTimeModel};
use crate::waittime::{waiting_time, MonteCarloConfig, WaitingTimeDistribution};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AnalysisConfig {
    pub occupancy: OccupancyConfig,
    pub monte_carlo: MonteCarloConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Analysis<T> {
    pub model: ServiceTimeModel<T>,
    pub occupancy: OccupancyDistribution<T>,
    pub waiting: WaitingTimeDistribution<T>,
    /// Pollaczek–Khintchine mean of the true waiting time.
    pub pk_mean_wait: T,
}

/// Service-time model, queue-length distribution, then waiting-time distribution.
pub fn analyze<T: Real>(scenario: &Scenario<T>, cfg: &AnalysisConfig) -> Result<Analysis<T>> {
    cfg.monte_carlo.validate()?;
    let model = ServiceTimeModel::aggregate(scenario)?;
    let occupancy = steady_state(&model, &cfg.occupancy)?;
    let waiting = waiting_time(&model, &occupancy, &cfg.monte_carlo, cfg.seed)?;
    let pk_mean_wait = pk_mean_wait(&model);
    Ok(Analysis { model, occupancy, waiting, pk_mean_wait })
}
