//! Steady-state queue length of the M/G/1 out-queue from its embedded
//! Markov chain at departure epochs.

use crate::error::{Error, Result};
use crate::numerics::Grid;
use crate::scalar::Real;
use crate::scenario::ServiceTimeModel;

/// Values of `π_i` below this are numerical failures rather than rounding noise.
pub const NEGATIVE_PROBABILITY_SLACK: f64 = 1e-12;

/// Smallest usable `k_0`; below it the recursion divides by noise.
pub const MIN_K0: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OccupancyConfig {
    /// Probability mass `Π_{i_max}` must reach.
    pub mass_threshold: f64,
    /// Trapezoid intervals per session support when integrating `k_i`.
    pub k_steps: usize,
    /// Hard limit on the number of states.
    pub state_cap: usize,
}

impl Default for OccupancyConfig {
    fn default() -> Self {
        Self { mass_threshold: 0.99, k_steps: 10_000, state_cap: 10_000 }
    }
}

impl OccupancyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mass_threshold > 0.0 && self.mass_threshold < 1.0) {
            return Err(Error::InvalidParameter {
                name: "mass_threshold",
                reason: format!("{} not in (0, 1)", self.mass_threshold),
            });
        }
        if self.k_steps == 0 || self.state_cap == 0 {
            return Err(Error::InvalidParameter { name: "k_steps/state_cap", reason: "must be positive".into() });
        }
        Ok(())
    }
}

/// Steady-state queue-length distribution (number of trains in the system).
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyDistribution<T> {
    /// `π_0 ..= π_{i_max}`.
    pub pi: Vec<T>,
    /// Running sums `Π_i`.
    pub cdf: Vec<T>,
    /// Arrival probabilities `k_0, k_1, ...` computed along the way.
    pub k: Vec<T>,
    pub i_max: usize,
    pub mass_threshold: T,
    pub rho: T,
    pub lambda: T,
    pub mu: T,
}

impl<T: Real> OccupancyDistribution<T> {
    /// Mass actually captured, `Π_{i_max}`.
    pub fn attained_mass(&self) -> T {
        self.cdf[self.cdf.len() - 1]
    }

    /// Smallest `i` with `Π_i ≥ p`.
    pub fn queue_length_quantile(&self, p: T) -> Result<usize> {
        if !(p > T::zero() && p < T::one()) {
            return Err(Error::InvalidParameter { name: "p", reason: format!("{p} not in (0, 1)") });
        }
        self.cdf.iter().position(|&c| c >= p).ok_or(Error::InsufficientMass {
            requested: p.to_f64_lossy(),
            attained: self.attained_mass().to_f64_lossy(),
        })
    }

    /// `Σ i·π_i` over the computed states.
    pub fn mean_length(&self) -> T {
        self.pi.iter().enumerate().map(|(i, &p)| T::from_usize_lossy(i) * p).sum()
    }
}

/// Lazily extended sequence of `k_i = ∫ Poisson(i; λt) f_T(t) dt`.
///
/// The Poisson weights along each quadrature grid advance by the recurrence
/// `p_{i+1}(t) = p_i(t)·λt/(i+1)` from `p_0(t) = e^{−λt}`.
#[derive(Debug, Clone)]
pub struct ArrivalProbabilities<T> {
    lambda: T,
    /// `(λt, quadrature weight × density, current Poisson weight)` per node.
    nodes: Vec<(T, T, T)>,
    lambda_t_max: T,
    values: Vec<T>,
    exhausted: bool,
}

impl<T: Real> ArrivalProbabilities<T> {
    pub fn new(model: &ServiceTimeModel<T>, k_steps: usize) -> Result<Self> {
        if k_steps == 0 {
            return Err(Error::InvalidParameter { name: "k_steps", reason: "must be positive".into() });
        }
        let lambda = model.lambda();
        let mut nodes = Vec::with_capacity(model.pieces().len() * (k_steps + 1));
        for piece in model.pieces() {
            let grid = Grid::new(piece.lo, piece.hi, k_steps)?;
            let h = grid.spacing();
            for (j, t) in grid.points().enumerate() {
                let end = j == 0 || j == k_steps;
                let w = if end { h * T::lit(0.5) } else { h };
                let lt = lambda * t;
                nodes.push((lt, w * piece.eval(t), (-lt).exp()));
            }
        }
        Ok(Self { lambda, nodes, lambda_t_max: lambda * model.t_max, values: Vec::new(), exhausted: false })
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    /// `true` once all further terms underflow to zero.
    pub fn is_exhausted(&self) -> bool {
        self.exhausted
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    fn advance(&mut self) -> T {
        let i = self.values.len();
        let k: T = self.nodes.iter().map(|&(_, w, p)| w * p).sum();
        let denom = T::from_usize_lossy(i + 1);
        for node in &mut self.nodes {
            node.2 = node.2 * node.0 / denom;
        }
        self.values.push(k);
        if k == T::zero() && T::from_usize_lossy(i) > self.lambda_t_max {
            self.exhausted = true;
        }
        k
    }

    /// `k_i`, extending the sequence as needed. Zero past exhaustion.
    pub fn get(&mut self, i: usize) -> T {
        while self.values.len() <= i && !self.exhausted {
            self.advance();
        }
        self.values.get(i).copied().unwrap_or_else(T::zero)
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }
}

/// The first `count` arrival probabilities on a `k_steps` grid. The result
/// is shorter than `count` when the tail underflows; its length is the
/// effective count.
pub fn arrival_probs<T: Real>(model: &ServiceTimeModel<T>, count: usize, k_steps: usize) -> Result<Vec<T>> {
    if count == 0 {
        return Err(Error::InvalidParameter { name: "count", reason: "must be at least 1".into() });
    }
    let mut k = ArrivalProbabilities::new(model, k_steps)?;
    while k.values().len() < count && !k.is_exhausted() {
        k.advance();
    }
    Ok(k.into_values())
}

/// Solves `π_{i+1} k_0 = π_i − π_0 k_i − Σ_{j=1..i} π_j k_{i−j+1}` from `π_0`
/// until the running sum reaches `threshold`.
pub(crate) fn solve_recursion<T: Real>(
    pi0: T,
    mut k_at: impl FnMut(usize) -> T,
    threshold: T,
    cap: usize,
) -> Result<(Vec<T>, Vec<T>)> {
    let k0 = k_at(0);
    let floor = T::lit(MIN_K0).max(T::min_positive_value());
    if !(k0 >= floor) {
        return Err(Error::DegenerateRecursion { k0: k0.to_f64_lossy() });
    }
    let slack = T::lit(NEGATIVE_PROBABILITY_SLACK);
    let mut pi = vec![pi0];
    let mut cdf = vec![pi0];
    while cdf[cdf.len() - 1] < threshold {
        if pi.len() >= cap {
            return Err(Error::StateCapReached {
                cap,
                attained: cdf[cdf.len() - 1].to_f64_lossy(),
                threshold: threshold.to_f64_lossy(),
            });
        }
        let i = pi.len() - 1;
        let mut acc = pi[i] - pi0 * k_at(i);
        for j in 1..=i {
            acc -= pi[j] * k_at(i - j + 1);
        }
        let mut next = acc / k0;
        if next < T::zero() {
            if next < -slack {
                return Err(Error::NegativeProbability { index: i + 1, value: next.to_f64_lossy() });
            }
            next = T::zero();
        }
        pi.push(next);
        cdf.push(cdf[i] + next);
    }
    Ok((pi, cdf))
}

/// Queue-length pmf and cdf up to the smallest `i_max` with `Π_{i_max} ≥ mass_threshold`.
pub fn steady_state<T: Real>(model: &ServiceTimeModel<T>, cfg: &OccupancyConfig) -> Result<OccupancyDistribution<T>> {
    cfg.validate()?;
    let rho = model.rho();
    if !(rho < T::one()) {
        return Err(Error::Unstable { rho: rho.to_f64_lossy() });
    }
    let mut k = ArrivalProbabilities::new(model, cfg.k_steps)?;
    let threshold = T::lit(cfg.mass_threshold);
    let (pi, cdf) = solve_recursion(T::one() - rho, |i| k.get(i), threshold, cfg.state_cap)?;
    let i_max = pi.len() - 1;
    k.get(i_max + 2);
    Ok(OccupancyDistribution {
        pi,
        cdf,
        k: k.into_values(),
        i_max,
        mass_threshold: threshold,
        rho,
        lambda: model.lambda(),
        mu: model.mu(),
    })
}

/// Pollaczek–Khintchine mean waiting time `λ E(T²) / (2(1 − ρ))`.
pub fn pollaczek_khinchine<T: Real>(lambda: T, second_moment: T, rho: T) -> T {
    lambda * second_moment / (T::lit(2.0) * (T::one() - rho))
}

pub fn pk_mean_wait<T: Real>(model: &ServiceTimeModel<T>) -> T {
    pollaczek_khinchine(model.lambda(), model.second_moment, model.rho())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{Scenario, SessionSpec};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn pure(rho: f64) -> ServiceTimeModel<f64> {
        let s = SessionSpec::new(1.0, 17, 12_000, 0.5e9, 1.5e9).unwrap();
        let sc = Scenario::single(s).with_traffic_intensity(rho).unwrap();
        ServiceTimeModel::aggregate(&sc).unwrap()
    }

    fn pure_lambda(lambda: f64, scale: f64) -> ServiceTimeModel<f64> {
        let s = SessionSpec::new(lambda, 17, 12_000, 0.5e9 * scale, 1.5e9 * scale).unwrap();
        ServiceTimeModel::aggregate(&Scenario::single(s)).unwrap()
    }

    #[test]
    fn k0_lies_between_exponential_bounds() {
        let m = pure(0.66);
        let k = arrival_probs(&m, 1, 10_000).unwrap();
        let lo = (-m.lambda() * m.t_max).exp();
        let hi = (-m.lambda() * m.t_min).exp();
        assert_relative_eq!(lo, 0.3007, max_relative = 1e-3);
        assert_relative_eq!(hi, 0.6700, max_relative = 1e-3);
        assert!(k[0] > lo && k[0] < hi, "k0 = {}", k[0]);
    }

    #[test]
    fn arrival_probs_sum_to_one_with_mean_rho() {
        for rho in [0.33, 0.5, 0.66, 0.9] {
            let m = pure(rho);
            let k = arrival_probs(&m, 200, 10_000).unwrap();
            assert!(k.iter().all(|&v| (0.0..=1.0).contains(&v)));
            let total: f64 = k.iter().sum();
            assert!(total >= 0.999 && total <= 1.0 + 1e-6, "sum {total}");
            let mean: f64 = k.iter().enumerate().map(|(i, v)| i as f64 * v).sum();
            assert!((mean - rho).abs() < 1e-4, "rho {rho}: mean {mean}");
        }
    }

    #[test]
    fn arrival_probs_stop_on_underflow() {
        let k = arrival_probs(&pure(0.3), 100_000, 100).unwrap();
        assert!(k.len() < 100_000);
        assert_eq!(*k.last().unwrap(), 0.0);
        assert!(arrival_probs(&pure(0.3), 0, 100).is_err());
    }

    #[test]
    fn empty_queue_probability_is_one_minus_rho() {
        let m = pure(0.66);
        let occ = steady_state(&m, &OccupancyConfig::default()).unwrap();
        assert_eq!(occ.pi[0], 1.0 - m.rho());
        assert_relative_eq!(occ.pi[0], 0.34, epsilon = 1e-12);
    }

    #[test]
    fn truncation_index_for_pure_scenarios() {
        let cfg = OccupancyConfig::default();
        assert_eq!(steady_state(&pure(0.33), &cfg).unwrap().i_max, 3);
        assert_eq!(steady_state(&pure(0.66), &cfg).unwrap().i_max, 7);
    }

    #[test]
    fn occupancy_invariants_hold() {
        for rho in [0.1, 0.33, 0.5, 0.66, 0.8, 0.95] {
            let occ = steady_state(&pure(rho), &OccupancyConfig::default()).unwrap();
            assert!(occ.pi.iter().all(|&p| p >= 0.0));
            assert!(occ.cdf.windows(2).all(|w| w[1] >= w[0]));
            assert!(occ.attained_mass() >= 0.99);
            assert!(occ.cdf[occ.i_max - 1] < 0.99);
            assert!(occ.k.len() >= occ.i_max + 2);
            let mut partial = 0.0;
            for &k in &occ.k {
                partial += k;
                assert!(partial <= 1.0 + 1e-6);
            }
        }
    }

    #[test]
    fn dimensioning_queue_length_percentiles() {
        let occ = steady_state(&pure_lambda(4000.0, 1.0), &OccupancyConfig::default()).unwrap();
        let q95 = occ.queue_length_quantile(0.95).unwrap();
        let q99 = occ.queue_length_quantile(0.99).unwrap();
        assert!(q95.abs_diff(16) <= 1, "q95 = {q95}");
        assert_eq!(q99, 24);
        assert_eq!(occ.queue_length_quantile(occ.pi[0] * 0.5).unwrap(), 0);
        assert!(matches!(occ.queue_length_quantile(0.999), Err(Error::InsufficientMass { .. })));
    }

    #[test]
    fn pk_mean_wait_values() {
        assert_eq!(pollaczek_khinchine(0.0, 5.5488e-8, 0.0), 0.0);
        let m = pure_lambda(4000.0, 1.0);
        assert_relative_eq!(pk_mean_wait(&m), 1.072e-3, max_relative = 1e-3);
    }

    #[test]
    fn degenerate_and_capped_recursions_error() {
        let err = solve_recursion(0.5, |_| 0.0, 0.99, 100).unwrap_err();
        assert!(matches!(err, Error::DegenerateRecursion { .. }));
        // Geometric arrivals with mean close to one: mass accumulates slowly.
        let err = solve_recursion(0.001, |i| 0.5f64.powi(i as i32 + 1), 0.99, 50).unwrap_err();
        assert!(matches!(err, Error::StateCapReached { cap: 50, .. }));
        // A k sequence that is not a distribution drives pi negative.
        let err = solve_recursion(0.1, |i| [0.5, 0.1, 0.9][i.min(2)], 0.99, 50).unwrap_err();
        assert!(matches!(err, Error::NegativeProbability { .. }));
    }

    #[test]
    fn single_precision_matches_double() {
        let s = SessionSpec::<f32>::new(1.0, 17, 12_000, 0.5e9, 1.5e9).unwrap();
        let sc = Scenario::single(s).with_traffic_intensity(0.33).unwrap();
        let m = ServiceTimeModel::aggregate(&sc).unwrap();
        let occ = steady_state(&m, &OccupancyConfig::default()).unwrap();
        assert_eq!(occ.i_max, 3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn rate_scaling_leaves_occupancy_unchanged(rho in 0.1f64..0.85, log_c in -2.0f64..2.0) {
            let c = 10f64.powf(log_c);
            let base = pure(rho);
            let scaled = pure_lambda(base.lambda() * c, c);
            let cfg = OccupancyConfig { k_steps: 2000, ..Default::default() };
            let a = steady_state(&base, &cfg).unwrap();
            let b = steady_state(&scaled, &cfg).unwrap();
            prop_assert_eq!(a.i_max, b.i_max);
            for (x, y) in a.pi.iter().zip(&b.pi) {
                prop_assert!((x - y).abs() < 1e-9);
            }
            for p in [0.5, 0.9, 0.95, 0.99] {
                prop_assert_eq!(a.queue_length_quantile(p).unwrap(), b.queue_length_quantile(p).unwrap());
            }
        }
    }
}
