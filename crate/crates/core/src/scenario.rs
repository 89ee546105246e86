//! Measurement sessions and the aggregated service-time model of the
//! reflector out-queue.
//!
//! All quantities are SI: seconds, bits and bits per second. A probe train
//! of `r` packets of `s` bits sent at rate `U` occupies the queue for
//! `r·s/U` seconds. With `U` uniform on `[u_min, u_max]` that time has the
//! density `c/t²` on `[r·s/u_max, r·s/u_min]`, `c = r·s/(u_max − u_min)`.

use crate::error::{Error, Result};
use crate::numerics::Grid;
use crate::scalar::Real;

/// One measurement session feeding the reflector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SessionSpec<T> {
    intensity: T,
    train_size: u32,
    packet_size_bits: u64,
    rate_min: T,
    rate_max: T,
}

impl<T: Real> SessionSpec<T> {
    /// `intensity` in trains/s, `packet_size_bits` in bits, rates in bits/s.
    pub fn new(intensity: T, train_size: u32, packet_size_bits: u64, rate_min: T, rate_max: T) -> Result<Self> {
        let spec = Self { intensity, train_size, packet_size_bits, rate_min, rate_max };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field, reason: String| Err(Error::InvalidSession { field, reason });
        if !(self.intensity.is_finite() && self.intensity > T::zero()) {
            return bad("intensity_lambda", format!("must be positive, got {}", self.intensity));
        }
        if self.train_size < 1 {
            return bad("train_size", "must be at least 1".into());
        }
        if self.packet_size_bits < 1 {
            return bad("packet_size", "must be at least 1 bit".into());
        }
        if !(self.rate_min.is_finite() && self.rate_min > T::zero()) {
            return bad("rate_min", format!("must be positive, got {}", self.rate_min));
        }
        if !(self.rate_max.is_finite() && self.rate_max > self.rate_min) {
            return bad("rate_max", format!("must exceed rate_min = {}, got {}", self.rate_min, self.rate_max));
        }
        Ok(())
    }

    pub fn intensity(&self) -> T {
        self.intensity
    }

    pub fn train_size(&self) -> u32 {
        self.train_size
    }

    pub fn packet_size_bits(&self) -> u64 {
        self.packet_size_bits
    }

    pub fn rate_min(&self) -> T {
        self.rate_min
    }

    pub fn rate_max(&self) -> T {
        self.rate_max
    }

    /// Bits per train, `r·s`.
    pub fn train_bits(&self) -> T {
        T::from_u64(u64::from(self.train_size) * self.packet_size_bits).expect("train bits representable")
    }

    /// `(t_min, t_max)`: the send time of a train at the maximum and minimum rate.
    pub fn service_bounds(&self) -> (T, T) {
        let bits = self.train_bits();
        (bits / self.rate_max, bits / self.rate_min)
    }

    /// Normalizing constant of the `1/t²` service-time density.
    pub fn density_constant(&self) -> T {
        self.train_bits() / (self.rate_max - self.rate_min)
    }

    /// Service-time density of this session.
    pub fn pdf(&self, t: T) -> T {
        let (lo, hi) = self.service_bounds();
        if t < lo || t > hi {
            T::zero()
        } else {
            self.density_constant() / (t * t)
        }
    }

    /// `E(T) = c·ln(t_max/t_min)`.
    pub fn mean_service(&self) -> T {
        self.density_constant() * (self.rate_max / self.rate_min).ln()
    }

    /// `E(T²) = t_min·t_max`.
    pub fn second_moment(&self) -> T {
        let (lo, hi) = self.service_bounds();
        lo * hi
    }

    /// Same session with intensity and both rate bounds multiplied by `factor`.
    pub fn scaled(&self, factor: T) -> Result<Self> {
        Self::new(
            self.intensity * factor,
            self.train_size,
            self.packet_size_bits,
            self.rate_min * factor,
            self.rate_max * factor,
        )
    }

    pub fn with_intensity(&self, intensity: T) -> Result<Self> {
        Self::new(intensity, self.train_size, self.packet_size_bits, self.rate_min, self.rate_max)
    }

    pub fn cast<U: Real>(&self) -> Result<SessionSpec<U>> {
        SessionSpec::new(
            U::lit(self.intensity.to_f64_lossy()),
            self.train_size,
            self.packet_size_bits,
            U::lit(self.rate_min.to_f64_lossy()),
            U::lit(self.rate_max.to_f64_lossy()),
        )
    }
}

/// The set of sessions sharing one reflector out-queue.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario<T> {
    sessions: Vec<SessionSpec<T>>,
}

impl<T: Real> Scenario<T> {
    pub fn new(sessions: Vec<SessionSpec<T>>) -> Result<Self> {
        if sessions.is_empty() {
            return Err(Error::EmptyScenario);
        }
        for s in &sessions {
            s.validate()?;
        }
        Ok(Self { sessions })
    }

    pub fn single(spec: SessionSpec<T>) -> Self {
        Self { sessions: vec![spec] }
    }

    pub fn sessions(&self) -> &[SessionSpec<T>] {
        &self.sessions
    }

    /// Combined arrival intensity `λ = Σ λ⁽ⁿ⁾`.
    pub fn total_intensity(&self) -> T {
        self.sessions.iter().map(|s| s.intensity).sum()
    }

    /// `ρ = Σ λ⁽ⁿ⁾ E(T⁽ⁿ⁾)`; defined for unstable scenarios too.
    pub fn traffic_intensity(&self) -> T {
        self.sessions.iter().map(|s| s.intensity * s.mean_service()).sum()
    }

    /// Rescales every session intensity by the same factor so the total is `lambda`.
    pub fn with_total_intensity(&self, lambda: T) -> Result<Self> {
        let factor = lambda / self.total_intensity();
        let sessions = self
            .sessions
            .iter()
            .map(|s| s.with_intensity(s.intensity * factor))
            .collect::<Result<Vec<_>>>()?;
        Self::new(sessions)
    }

    /// Rescales every intensity so the traffic intensity equals `rho`.
    pub fn with_traffic_intensity(&self, rho: T) -> Result<Self> {
        self.with_total_intensity(self.total_intensity() * rho / self.traffic_intensity())
    }

    /// Multiplies all rates and intensities by `factor`; times shrink by `1/factor`.
    pub fn scaled(&self, factor: T) -> Result<Self> {
        Self::new(self.sessions.iter().map(|s| s.scaled(factor)).collect::<Result<Vec<_>>>()?)
    }

    pub fn cast<U: Real>(&self) -> Result<Scenario<U>> {
        Scenario::new(self.sessions.iter().map(SessionSpec::cast).collect::<Result<Vec<_>>>()?)
    }
}

/// A piece `coef/t²` of the aggregated density on `[lo, hi]`. Sessions with
/// identical service-time bounds share one piece.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityPiece<T> {
    pub lo: T,
    pub hi: T,
    pub coef: T,
}

impl<T: Real> DensityPiece<T> {
    #[inline]
    pub fn eval(&self, t: T) -> T {
        if t < self.lo || t > self.hi {
            T::zero()
        } else {
            self.coef / (t * t)
        }
    }
}

/// Aggregated service time `T` of the out-queue: a `λ⁽ⁿ⁾/λ`-weighted
/// mixture of the session densities.
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceTimeModel<T> {
    pub t_min: T,
    pub t_max: T,
    pub per_session_bounds: Vec<(T, T)>,
    pub weights: Vec<T>,
    pub total_lambda: T,
    pub mean_service: T,
    pub second_moment: T,
    pub departure_rate: T,
    pub traffic_intensity: T,
    pieces: Vec<DensityPiece<T>>,
}

impl<T: Real> ServiceTimeModel<T> {
    /// Aggregates a scenario; fails with [`Error::Unstable`] when `ρ ≥ 1`.
    pub fn aggregate(scenario: &Scenario<T>) -> Result<Self> {
        let sessions = scenario.sessions();
        let total_lambda = scenario.total_intensity();
        let weights: Vec<T> = sessions.iter().map(|s| s.intensity / total_lambda).collect();
        let per_session_bounds: Vec<(T, T)> = sessions.iter().map(SessionSpec::service_bounds).collect();

        let t_min = per_session_bounds.iter().map(|b| b.0).fold(T::infinity(), T::min);
        let t_max = per_session_bounds.iter().map(|b| b.1).fold(T::neg_infinity(), T::max);

        let mut mean_service = T::zero();
        let mut second_moment = T::zero();
        let mut pieces: Vec<DensityPiece<T>> = Vec::new();
        for ((s, &w), &(lo, hi)) in sessions.iter().zip(&weights).zip(&per_session_bounds) {
            mean_service += w * s.mean_service();
            second_moment += w * s.second_moment();
            let coef = w * s.density_constant();
            match pieces.iter_mut().find(|p| p.lo == lo && p.hi == hi) {
                Some(p) => p.coef += coef,
                None => pieces.push(DensityPiece { lo, hi, coef }),
            }
        }

        let departure_rate = mean_service.recip();
        let traffic_intensity = total_lambda / departure_rate;
        if !(traffic_intensity < T::one()) {
            return Err(Error::Unstable { rho: traffic_intensity.to_f64_lossy() });
        }
        Ok(Self {
            t_min,
            t_max,
            per_session_bounds,
            weights,
            total_lambda,
            mean_service,
            second_moment,
            departure_rate,
            traffic_intensity,
            pieces,
        })
    }

    pub fn lambda(&self) -> T {
        self.total_lambda
    }

    pub fn mu(&self) -> T {
        self.departure_rate
    }

    pub fn rho(&self) -> T {
        self.traffic_intensity
    }

    pub fn pieces(&self) -> &[DensityPiece<T>] {
        &self.pieces
    }

    /// `f_T(t)`; zero outside `[t_min, t_max]` and in gaps between session supports.
    #[inline]
    pub fn pdf(&self, t: T) -> T {
        self.pieces.iter().fold(T::zero(), |acc, p| acc + p.eval(t))
    }

    /// Trapezoid approximation of `∫ g(t) f_T(t) dt`, applied piecewise over
    /// each session support with `steps` intervals so that the jumps of
    /// `f_T` at support ends never fall inside a quadrature interval.
    pub fn integrate<F: Fn(T) -> T>(&self, steps: usize, g: F) -> T {
        self.pieces
            .iter()
            .map(|p| {
                let grid = Grid::new(p.lo, p.hi, steps).expect("session support is a valid interval");
                let h = grid.spacing();
                let mut acc = T::zero();
                for j in 0..=steps {
                    let t = grid.point(j);
                    let v = g(t) * p.coef / (t * t);
                    acc += if j == 0 || j == steps { v * T::lit(0.5) } else { v };
                }
                acc * h
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const GBPS: f64 = 1e9;

    fn gbps_session(lambda: f64) -> SessionSpec<f64> {
        SessionSpec::new(lambda, 17, 12_000, 0.5 * GBPS, 1.5 * GBPS).unwrap()
    }

    #[test]
    fn service_bounds_of_gigabit_session() {
        let (lo, hi) = gbps_session(1.0).service_bounds();
        assert_relative_eq!(lo, 1.36e-4, max_relative = 1e-12);
        assert_relative_eq!(hi, 4.08e-4, max_relative = 1e-12);
        let slow = SessionSpec::new(1.0, 17, 12_000, 0.05 * GBPS, 0.15 * GBPS).unwrap();
        let (lo, hi) = slow.service_bounds();
        assert_relative_eq!(lo, 1.36e-3, max_relative = 1e-12);
        assert_relative_eq!(hi, 4.08e-3, max_relative = 1e-12);
    }

    #[test]
    fn invalid_sessions_name_the_field() {
        let err = SessionSpec::new(1.0, 1, 1, 1.0, 1.0).unwrap_err();
        assert!(matches!(err, Error::InvalidSession { field: "rate_max", .. }));
        let err = SessionSpec::new(0.0, 1, 1, 1.0, 2.0).unwrap_err();
        assert!(matches!(err, Error::InvalidSession { field: "intensity_lambda", .. }));
        let err = SessionSpec::new(1.0, 0, 1, 1.0, 2.0).unwrap_err();
        assert!(matches!(err, Error::InvalidSession { field: "train_size", .. }));
        let err = SessionSpec::new(1.0, 1, 0, 1.0, 2.0).unwrap_err();
        assert!(matches!(err, Error::InvalidSession { field: "packet_size", .. }));
        let err = SessionSpec::new(1.0, 1, 1, -1.0, 2.0).unwrap_err();
        assert!(matches!(err, Error::InvalidSession { field: "rate_min", .. }));
        assert_eq!(Scenario::<f64>::new(vec![]).unwrap_err(), Error::EmptyScenario);
    }

    #[test]
    fn session_pdf_values() {
        let s = gbps_session(1.0);
        assert_relative_eq!(s.density_constant(), 2.04e-4, max_relative = 1e-12);
        assert_relative_eq!(s.pdf(1.36e-4), 2.04e-4 / (1.36e-4f64 * 1.36e-4), max_relative = 1e-12);
        assert_relative_eq!(s.pdf(1.36e-4), 1.1029e4, max_relative = 1e-4);
        assert_eq!(s.pdf(1.0e-4), 0.0);
        assert_eq!(s.pdf(4.1e-4), 0.0);
        let g = Grid::new(1.36e-4, 4.08e-4, 5000).unwrap();
        assert!((crate::numerics::trapezoid(&g.map(|t| s.pdf(t))) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn closed_form_moments_for_rho_066() {
        let lambda = 0.66 / (2.04e-4 * 3f64.ln());
        let m = ServiceTimeModel::aggregate(&Scenario::single(gbps_session(lambda))).unwrap();
        assert_relative_eq!(m.mean_service, 2.2412e-4, max_relative = 1e-4);
        assert_relative_eq!(m.mu(), 4461.9, max_relative = 1e-4);
        assert_relative_eq!(m.lambda(), 2944.9, max_relative = 1e-4);
        assert_relative_eq!(m.rho(), 0.66, max_relative = 1e-12);
    }

    #[test]
    fn dimensioning_row_intensity() {
        let m = ServiceTimeModel::aggregate(&Scenario::single(gbps_session(4000.0))).unwrap();
        assert_relative_eq!(m.rho(), 0.8965, max_relative = 1e-4);
        assert_relative_eq!(m.second_moment, 5.5488e-8, max_relative = 1e-12);
        assert_relative_eq!(m.rho(), m.lambda() * m.mean_service, max_relative = 1e-14);
    }

    #[test]
    fn unstable_scenario_reports_rho() {
        match ServiceTimeModel::aggregate(&Scenario::single(gbps_session(5000.0))) {
            Err(Error::Unstable { rho }) => assert_relative_eq!(rho, 5000.0 * 2.04e-4 * 3f64.ln(), max_relative = 1e-12),
            other => panic!("expected unstable error, got {other:?}"),
        }
    }

    #[test]
    fn identical_sessions_merge_into_single_piece() {
        let one = ServiceTimeModel::aggregate(&Scenario::single(gbps_session(3000.0))).unwrap();
        let many = ServiceTimeModel::aggregate(&Scenario::new(vec![gbps_session(750.0); 4]).unwrap()).unwrap();
        assert_eq!(many.pieces().len(), 1);
        for t in [1.36e-4, 2e-4, 3.3e-4, 4.08e-4, 5e-4] {
            assert_relative_eq!(one.pdf(t), many.pdf(t), max_relative = 1e-12);
        }
        assert_relative_eq!(one.rho(), many.rho(), max_relative = 1e-12);
    }

    #[test]
    fn mixed_scenario_has_gap() {
        let slow = SessionSpec::new(100.0, 17, 12_000, 0.05 * GBPS, 0.15 * GBPS).unwrap();
        let m = ServiceTimeModel::aggregate(&Scenario::new(vec![gbps_session(100.0), slow]).unwrap()).unwrap();
        assert_relative_eq!(m.t_min, 1.36e-4, max_relative = 1e-12);
        assert_relative_eq!(m.t_max, 4.08e-3, max_relative = 1e-12);
        for t in [4.1e-4, 8e-4, 1.3e-3] {
            assert_eq!(m.pdf(t), 0.0);
        }
        assert!((m.integrate(5000, |_| 1.0) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn with_traffic_intensity_hits_target() {
        let s = Scenario::single(gbps_session(1.0)).with_traffic_intensity(0.5).unwrap();
        assert_relative_eq!(s.traffic_intensity(), 0.5, max_relative = 1e-12);
    }
}
