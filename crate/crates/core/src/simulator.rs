//! Event-driven oracle for the out-queue.
//!
//! Trains arrive as a Poisson process, pick a session with probability
//! `λ⁽ⁿ⁾/λ`, draw a send rate uniformly between the session's rate bounds
//! and then hold the single server for the whole train (no interleaving),
//! first come first served. With one server the only events are the next
//! arrival and the departures of trains already in the system, so the
//! state is a FIFO of departure times.

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};
use crate::numerics::RandomStream;
use crate::occupancy::{pk_mean_wait, OccupancyDistribution};
use crate::scalar::Real;
use crate::scenario::{Scenario, ServiceTimeModel};
use crate::waittime::WaitingTimeDistribution;

/// Stream id used by every simulation run.
pub const SIMULATION_STREAM: u64 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimConfig {
    /// Arrivals simulated in total, warmup included.
    pub arrivals: usize,
    /// Leading arrivals that are simulated but not recorded.
    pub warmup: usize,
    pub seed: u64,
    /// Keep a full [`ArrivalRecord`] per recorded arrival.
    pub record_samples: bool,
    /// Batches used for batch-means standard errors.
    pub batches: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { arrivals: 1_000_000, warmup: 10_000, seed: 1, record_samples: false, batches: 100 }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.arrivals <= self.warmup {
            return Err(Error::InvalidParameter {
                name: "arrivals",
                reason: format!("must exceed warmup ({} <= {})", self.arrivals, self.warmup),
            });
        }
        if self.batches < 2 || self.batches > self.arrivals - self.warmup {
            return Err(Error::InvalidParameter {
                name: "batches",
                reason: format!("need 2 <= batches <= recorded arrivals, got {}", self.batches),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrivalRecord {
    pub arrival_time_s: f64,
    pub session_index: usize,
    pub service_time_s: f64,
    pub true_wait_s: f64,
    pub surrogate_wait_s: f64,
    pub n_at_arrival: u32,
}

/// Point estimate with a batch-means standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

impl Estimate {
    /// `|mean − target|` in units of the standard error.
    pub fn z_score(&self, target: f64) -> f64 {
        if self.std_error > 0.0 {
            (self.mean - target).abs() / self.std_error
        } else if self.mean == target {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSummary {
    pub recorded: usize,
    pub lambda: f64,
    pub rho: f64,
    /// `ρ ≥ 1`: the run has no steady state.
    pub unstable: bool,
    pub true_wait: Estimate,
    pub true_wait_variance: f64,
    pub surrogate_wait: Estimate,
    pub n_at_arrival: Estimate,
    /// Busy time over elapsed time between the first and last recorded arrival.
    pub utilization: Estimate,
    pub observed_time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub true_wait: Vec<f64>,
    pub surrogate_wait: Vec<f64>,
    pub n_at_arrival: Vec<u32>,
    /// Empty unless [`SimConfig::record_samples`] is set.
    pub records: Vec<ArrivalRecord>,
    pub summary: SimSummary,
}

struct SessionSampler {
    cumulative: Vec<f64>,
    sessions: Vec<(f64, f64, f64)>,
}

impl SessionSampler {
    fn new<T: Real>(scenario: &Scenario<T>) -> Self {
        let total = scenario.total_intensity().to_f64_lossy();
        let mut acc = 0.0;
        let mut cumulative = Vec::new();
        let mut sessions = Vec::new();
        for s in scenario.sessions() {
            acc += s.intensity().to_f64_lossy() / total;
            cumulative.push(acc);
            sessions.push((s.train_bits().to_f64_lossy(), s.rate_min().to_f64_lossy(), s.rate_max().to_f64_lossy()));
        }
        Self { cumulative, sessions }
    }

    /// Session index and service time of the next train.
    fn draw<R: Rng>(&self, rng: &mut R) -> (usize, f64) {
        let x: f64 = rng.random();
        let n = self.cumulative.partition_point(|&c| c <= x).min(self.sessions.len() - 1);
        let (bits, lo, hi) = self.sessions[n];
        let rate = lo + (hi - lo) * rng.random::<f64>();
        (n, bits / rate)
    }
}

/// Simulates the queue. Scenarios with `ρ ≥ 1` run but are flagged unstable.
pub fn run<T: Real>(scenario: &Scenario<T>, cfg: &SimConfig) -> Result<SimulationResult> {
    cfg.validate()?;
    let lambda = scenario.total_intensity().to_f64_lossy();
    let rho = scenario.traffic_intensity().to_f64_lossy();
    let sampler = SessionSampler::new(scenario);
    let gaps = Exp::new(lambda).map_err(|e| Error::InvalidParameter { name: "lambda", reason: e.to_string() })?;
    let mut rng = RandomStream::new(cfg.seed, SIMULATION_STREAM).rng();

    let recorded = cfg.arrivals - cfg.warmup;
    let mut true_wait = Vec::with_capacity(recorded);
    let mut surrogate_wait = Vec::with_capacity(recorded);
    let mut n_at_arrival = Vec::with_capacity(recorded);
    let mut records = Vec::with_capacity(if cfg.record_samples { recorded } else { 0 });
    let mut arrival_times = Vec::with_capacity(recorded);
    // Idle time immediately preceding each recorded arrival.
    let mut idle_before = Vec::with_capacity(recorded);

    // (departure time, full service time) of every train in the system.
    let mut in_system: VecDeque<(f64, f64)> = VecDeque::new();
    let mut now = 0.0f64;
    let mut last_departure = 0.0f64;
    for k in 0..cfg.arrivals {
        now += gaps.sample(&mut rng);
        let (session, service) = sampler.draw(&mut rng);
        while in_system.front().is_some_and(|&(d, _)| d <= now) {
            in_system.pop_front();
        }
        let n = in_system.len();
        let surrogate: f64 = in_system.iter().map(|&(_, s)| s).sum();
        let start = now.max(last_departure);
        let idle = (now - last_departure).max(0.0);
        let wait = start - now;
        last_departure = start + service;
        in_system.push_back((last_departure, service));

        if k >= cfg.warmup {
            true_wait.push(wait);
            surrogate_wait.push(surrogate);
            n_at_arrival.push(n as u32);
            arrival_times.push(now);
            idle_before.push(idle);
            if cfg.record_samples {
                records.push(ArrivalRecord {
                    arrival_time_s: now,
                    session_index: session,
                    service_time_s: service,
                    true_wait_s: wait,
                    surrogate_wait_s: surrogate,
                    n_at_arrival: n as u32,
                });
            }
        }
    }

    let batch = recorded / cfg.batches;
    let batch_ranges: Vec<(usize, usize)> = (0..cfg.batches)
        .map(|b| (b * batch, if b + 1 == cfg.batches { recorded } else { (b + 1) * batch }))
        .collect();
    let n_f64: Vec<f64> = n_at_arrival.iter().map(|&n| f64::from(n)).collect();
    let utilization_of = |a: usize, b: usize| {
        // Idle gaps before arrivals a+1..b all lie inside [t_a, t_{b-1}].
        let span = arrival_times[b - 1] - arrival_times[a];
        let idle: f64 = idle_before[a + 1..b].iter().sum();
        if span > 0.0 {
            1.0 - idle / span
        } else {
            0.0
        }
    };
    let batch_utilization: Vec<f64> = batch_ranges.iter().map(|&(a, b)| utilization_of(a, b)).collect();
    let overall_utilization = utilization_of(0, recorded);
    let var_mean = true_wait.iter().sum::<f64>() / recorded as f64;
    let true_wait_variance = true_wait.iter().map(|w| (w - var_mean).powi(2)).sum::<f64>() / (recorded - 1) as f64;

    let summary = SimSummary {
        recorded,
        lambda,
        rho,
        unstable: !(rho < 1.0),
        true_wait: batch_means(&true_wait, &batch_ranges),
        true_wait_variance,
        surrogate_wait: batch_means(&surrogate_wait, &batch_ranges),
        n_at_arrival: batch_means(&n_f64, &batch_ranges),
        utilization: Estimate {
            mean: overall_utilization,
            std_error: std_error_of_batches(&batch_utilization),
        },
        observed_time_s: arrival_times[recorded - 1] - arrival_times[0],
    };
    Ok(SimulationResult { true_wait, surrogate_wait, n_at_arrival, records, summary })
}

fn batch_means(values: &[f64], ranges: &[(usize, usize)]) -> Estimate {
    let means: Vec<f64> = ranges
        .iter()
        .map(|&(a, b)| values[a..b].iter().sum::<f64>() / (b - a) as f64)
        .collect();
    Estimate {
        mean: values.iter().sum::<f64>() / values.len() as f64,
        std_error: std_error_of_batches(&means),
    }
}

fn std_error_of_batches(means: &[f64]) -> f64 {
    let b = means.len() as f64;
    let m = means.iter().sum::<f64>() / b;
    let var = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (b - 1.0);
    (var / b).sqrt()
}

/// Total-variation distance between a pmf and the normalized histogram of `counts`.
pub fn total_variation<T: Real>(pmf: &[T], counts: &[u32]) -> f64 {
    let top = counts.iter().copied().max().unwrap_or(0) as usize;
    let mut hist = vec![0.0f64; top.max(pmf.len().saturating_sub(1)) + 1];
    for &c in counts {
        hist[c as usize] += 1.0;
    }
    let n = counts.len() as f64;
    let mut tv = 0.0;
    for (i, h) in hist.iter().enumerate() {
        let p = pmf.get(i).map_or(0.0, |v| v.to_f64_lossy());
        tv += (p - h / n).abs();
    }
    0.5 * tv
}

/// Kolmogorov–Smirnov distance between `cdf` and the empirical cdf of `samples`.
///
/// `cdf` may jump only at zero; `left_of_zero` is its value just below zero.
pub fn ks_distance<F: Fn(f64) -> f64>(samples: &[f64], cdf: F, left_of_zero: f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_unstable_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    let mut a = 0;
    while a < xs.len() {
        let v = xs[a];
        let mut b = a;
        while b + 1 < xs.len() && xs[b + 1] == v {
            b += 1;
        }
        let below = if v == 0.0 { left_of_zero } else { cdf(v) };
        d = d.max((below - a as f64 / n).abs());
        d = d.max((cdf(v) - (b + 1) as f64 / n).abs());
        a = b + 1;
    }
    d
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub tv: f64,
    pub ks: f64,
    /// Allowed deviation of simulated means, in standard errors.
    pub std_errors: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { tv: 0.02, ks: 0.02, std_errors: 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
    /// Reported only; does not affect [`ComparisonReport::passed`].
    pub informative: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub rho: f64,
    pub tv_occupancy: f64,
    pub ks_surrogate: f64,
    pub ks_true_wait: f64,
    pub pk_mean_wait: f64,
    /// Closed-form mean number in system, `ρ + λ·E(W)`.
    pub mean_length: f64,
    /// `Σ i·π_i` over the computed (truncated) states.
    pub truncated_mean_length: f64,
    /// `Σ i·π_i·E(T)`, the mean implied by the truncated mixture.
    pub truncated_surrogate_mean: f64,
    pub sim: SimSummary,
    pub checks: Vec<Check>,
}

impl ComparisonReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.informative || c.passed)
    }
}

/// Cross-checks an analytic solution against a simulation of the same scenario.
pub fn compare<T: Real>(
    result: &SimulationResult,
    model: &ServiceTimeModel<T>,
    occ: &OccupancyDistribution<T>,
    w: &WaitingTimeDistribution<T>,
    thresholds: &Thresholds,
) -> Result<ComparisonReport> {
    let lambda = model.lambda().to_f64_lossy();
    let rho = model.rho().to_f64_lossy();
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-6 * a.abs().max(b.abs());
    if !close(result.summary.lambda, lambda) || !close(result.summary.rho, rho) {
        return Err(Error::Mismatch(format!(
            "simulation has lambda={}, rho={}; model has lambda={lambda}, rho={rho}",
            result.summary.lambda, result.summary.rho
        )));
    }
    if !close(occ.lambda.to_f64_lossy(), lambda) || !close(occ.rho.to_f64_lossy(), rho) {
        return Err(Error::Mismatch("occupancy was solved for a different model".into()));
    }
    if w.atom_at_zero != occ.pi[0] || w.i_max != occ.i_max {
        return Err(Error::Mismatch("waiting time was assembled from a different occupancy".into()));
    }

    let pk = pk_mean_wait(model).to_f64_lossy();
    let mean_service = model.mean_service.to_f64_lossy();
    let mean_length = rho + lambda * pk;
    let truncated_mean_length = occ.mean_length().to_f64_lossy();
    let tv = total_variation(&occ.pi, &result.n_at_arrival);
    let cdf = |t: f64| w.cdf_at(T::lit(t)).to_f64_lossy();
    let ks_surrogate = ks_distance(&result.surrogate_wait, cdf, 0.0);
    let ks_true = ks_distance(&result.true_wait, cdf, 0.0);

    let s = &result.summary;
    let z = thresholds.std_errors;
    let checks = vec![
        Check { name: "tv_occupancy", value: tv, threshold: thresholds.tv, passed: tv < thresholds.tv, informative: false },
        Check {
            name: "ks_surrogate_wait",
            value: ks_surrogate,
            threshold: thresholds.ks,
            passed: ks_surrogate < thresholds.ks,
            informative: false,
        },
        Check {
            name: "ks_true_wait",
            value: ks_true,
            threshold: thresholds.ks,
            passed: ks_true < thresholds.ks,
            informative: true,
        },
        Check {
            name: "mean_true_wait_vs_pk_se",
            value: s.true_wait.z_score(pk),
            threshold: z,
            passed: s.true_wait.z_score(pk) <= z,
            informative: false,
        },
        Check {
            name: "utilization_vs_rho_se",
            value: s.utilization.z_score(rho),
            threshold: z,
            passed: s.utilization.z_score(rho) <= z,
            informative: false,
        },
        Check {
            name: "mean_length_se",
            value: s.n_at_arrival.z_score(mean_length),
            threshold: z,
            passed: s.n_at_arrival.z_score(mean_length) <= z,
            informative: false,
        },
        Check {
            name: "mean_surrogate_vs_truncated_mixture_se",
            value: s.surrogate_wait.z_score(truncated_mean_length * mean_service),
            threshold: z,
            passed: s.surrogate_wait.z_score(truncated_mean_length * mean_service) <= z,
            informative: true,
        },
    ];
    Ok(ComparisonReport {
        rho,
        tv_occupancy: tv,
        ks_surrogate,
        ks_true_wait: ks_true,
        pk_mean_wait: pk,
        mean_length,
        truncated_mean_length,
        truncated_surrogate_mean: truncated_mean_length * mean_service,
        sim: result.summary.clone(),
        checks,
    })
}
