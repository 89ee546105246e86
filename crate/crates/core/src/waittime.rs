//! Waiting-time distribution as the occupancy-weighted mixture of i-fold
//! service-time convolutions.
//!
//! `f_W(t) = Σ_i π_i f_{W_i}(t)` with `W_0 = 0` (the atom at zero) and
//! `W_i` the sum of `i` independent service times. Each `f_{W_i}`, `i ≥ 2`,
//! is an `(i−1)`-dimensional integral over the hypercube
//! `[t_min, t_max]^{i−1}`, estimated by plain Monte Carlo with points drawn
//! uniformly from the hypercube. Every grid point gets its own independent
//! sample set, addressed by `(component, attempt, grid index)`, so the
//! estimate does not depend on evaluation order or thread count.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::{cdf_from_pdf, quantile, trapezoid, Grid, GriddedFunction, RandomStream};
use crate::occupancy::OccupancyDistribution;
use crate::scalar::Real;
use crate::scenario::ServiceTimeModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloConfig {
    /// Accepted deviation of a component's integral from one.
    pub tolerance: f64,
    pub initial_points: usize,
    pub grow_factor: usize,
    pub shrink_factor: usize,
    /// Floor for the carried-over point count after a shrink.
    pub min_points: usize,
    pub max_points: usize,
    pub wait_grid_steps: usize,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            tolerance: 0.01,
            initial_points: 1000,
            grow_factor: 4,
            shrink_factor: 2,
            min_points: 1000,
            max_points: 1 << 28,
            wait_grid_steps: 5000,
        }
    }
}

impl MonteCarloConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: String| Err(Error::InvalidParameter { name, reason });
        if !(self.tolerance > 0.0 && self.tolerance <= 0.1) {
            return bad("mc_tolerance", format!("{} not in (0, 0.1]", self.tolerance));
        }
        if self.initial_points < 100 {
            return bad("mc_initial", format!("{} < 100", self.initial_points));
        }
        if self.min_points > self.initial_points {
            return bad("min_points", "must not exceed initial_points".into());
        }
        if self.grow_factor < 2 || self.shrink_factor < 1 {
            return bad("grow_factor/shrink_factor", "need grow >= 2 and shrink >= 1".into());
        }
        if self.max_points < self.initial_points {
            return bad("max_points", "must be at least initial_points".into());
        }
        if self.wait_grid_steps == 0 {
            return bad("wait_grid_steps", "must be positive".into());
        }
        Ok(())
    }
}

/// Bookkeeping for one convolution component `f_{W_i}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComponentDiagnostics {
    pub index: usize,
    /// Sample points per grid point in the accepted attempt (0 when exact).
    pub points_used: usize,
    pub attempts: usize,
    /// Trapezoid integral of the accepted estimate.
    pub integral: f64,
    /// Estimated standard deviation of `integral`.
    pub est_stddev: f64,
    pub exact: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Component<T> {
    pub pdf: GriddedFunction<T>,
    pub diagnostics: ComponentDiagnostics,
}

/// `[i·t_min, i·t_max]` with `steps` intervals: the support of `f_{W_i}`.
pub fn component_grid<T: Real>(model: &ServiceTimeModel<T>, i: usize, steps: usize) -> Result<Grid<T>> {
    let n = T::from_usize_lossy(i);
    Grid::new(n * model.t_min, n * model.t_max, steps)
}

/// One Monte Carlo estimate of `f_{W_i}` on `grid` with `points` samples per
/// grid point. `attempt` selects a fresh set of substreams.
///
/// For `i = 1` the density itself is returned and `points` is ignored.
pub fn convolution_component<T: Real>(
    model: &ServiceTimeModel<T>,
    i: usize,
    grid: &Grid<T>,
    points: usize,
    rng: &RandomStream,
    attempt: u64,
) -> Result<Component<T>> {
    if i == 0 {
        return Err(Error::InvalidParameter { name: "i", reason: "components start at 1".into() });
    }
    if i == 1 {
        let pdf = grid.map(|t| model.pdf(t));
        let integral = trapezoid(&pdf).to_f64_lossy();
        return Ok(Component {
            pdf,
            diagnostics: ComponentDiagnostics {
                index: 1,
                points_used: 0,
                attempts: 0,
                integral,
                est_stddev: 0.0,
                exact: true,
            },
        });
    }
    if points < 2 {
        return Err(Error::InvalidParameter { name: "points", reason: "need at least 2 samples".into() });
    }

    let kernel = Kernel::new(model, i - 1);
    let m = points as f64;
    let estimates: Vec<(f64, f64)> = (0..grid.len())
        .into_par_iter()
        .map(|j| {
            let t = grid.point(j).to_f64_lossy();
            let mut r = rng.substream(&[attempt, j as u64]);
            let (mut sum, mut sum_sq) = (0.0f64, 0.0f64);
            for _ in 0..points {
                let x = kernel.sample(t, &mut r);
                sum += x;
                sum_sq += x * x;
            }
            let mean = sum / m;
            let var_of_mean = ((sum_sq / m - mean * mean).max(0.0)) / (m - 1.0);
            (mean, var_of_mean)
        })
        .collect();

    let h = grid.spacing().to_f64_lossy();
    let last = estimates.len() - 1;
    let variance: f64 = estimates
        .iter()
        .enumerate()
        .map(|(j, &(_, v))| {
            let w = if j == 0 || j == last { 0.5 * h } else { h };
            w * w * v
        })
        .sum();
    let pdf = GriddedFunction::new(*grid, estimates.iter().map(|&(mean, _)| T::lit(mean)).collect())?;
    let integral = trapezoid(&pdf).to_f64_lossy();
    Ok(Component {
        pdf,
        diagnostics: ComponentDiagnostics {
            index: i,
            points_used: points,
            attempts: 1,
            integral,
            est_stddev: variance.sqrt(),
            exact: false,
        },
    })
}

/// The integrand of one component, evaluated in `f64` whatever the scalar.
struct Kernel {
    lo: f64,
    width: f64,
    t_min: f64,
    t_max: f64,
    pieces: Vec<(f64, f64, f64)>,
    /// `(Σ_{later} t_min, Σ_{later} t_max)` for each coordinate: how far the
    /// coordinates still to be drawn can move `Σu`.
    reach: Vec<(f64, f64)>,
    /// `(width·coef/t_min²)^dims` when `f_T` is one `coef/t²` piece on
    /// `[t_min, t_max]`; the weight is then this over `Π (u/t_min)²`.
    single: Option<f64>,
}

impl Kernel {
    fn new<T: Real>(model: &ServiceTimeModel<T>, dims: usize) -> Self {
        let t_min = model.t_min.to_f64_lossy();
        let t_max = model.t_max.to_f64_lossy();
        let pieces: Vec<(f64, f64, f64)> = model
            .pieces()
            .iter()
            .map(|p| (p.lo.to_f64_lossy(), p.hi.to_f64_lossy(), p.coef.to_f64_lossy()))
            .collect();
        let width = t_max - t_min;
        // Keep Π (u/t_min)² well inside the exponent range.
        let single = match pieces.as_slice() {
            [(_, _, coef)] if 2.0 * dims as f64 * (t_max / t_min).log2() < 900.0 => {
                Some((width * coef / (t_min * t_min)).powi(dims as i32))
            }
            _ => None,
        };
        let reach = (0..dims).map(|d| ((dims - d - 1) as f64 * t_min, (dims - d - 1) as f64 * t_max)).collect();
        Self { lo: t_min, width, t_min, t_max, pieces, reach, single }
    }

    #[inline]
    fn pdf(&self, t: f64) -> f64 {
        self.pieces.iter().map(|&(lo, hi, c)| if t < lo || t > hi { 0.0 } else { c / (t * t) }).sum()
    }

    /// Volume times the integrand at one uniform point of the hypercube.
    /// Stops drawing once the remaining coordinates cannot bring
    /// `t − Σu` back into `[t_min, t_max]`; the integrand is then zero.
    #[inline]
    fn sample<R: Rng>(&self, t: f64, r: &mut R) -> f64 {
        let (need_lo, need_hi) = (t - self.t_max, t - self.t_min);
        let mut partial = 0.0;
        let weight = match self.single {
            Some(k) => {
                let inv = 1.0 / self.t_min;
                let mut ratio = 1.0;
                for &(lo_left, hi_left) in &self.reach {
                    let u = self.lo + self.width * r.random::<f64>();
                    partial += u;
                    ratio *= u * inv;
                    if partial + lo_left > need_hi || partial + hi_left < need_lo {
                        return 0.0;
                    }
                }
                k / (ratio * ratio)
            }
            None => {
                let mut weight = 1.0;
                for &(lo_left, hi_left) in &self.reach {
                    let u = self.lo + self.width * r.random::<f64>();
                    partial += u;
                    weight *= self.width * self.pdf(u);
                    if partial + lo_left > need_hi || partial + hi_left < need_lo {
                        return 0.0;
                    }
                }
                weight
            }
        };
        weight * self.pdf(t - partial)
    }
}

/// Repeats [`convolution_component`] with `grow_factor` times more points
/// until the integral is within `1 ± tolerance`. Returns the accepted
/// component and the point count to start the next component with.
pub fn adaptive_component<T: Real>(
    model: &ServiceTimeModel<T>,
    i: usize,
    grid: &Grid<T>,
    cfg: &MonteCarloConfig,
    rng: &RandomStream,
    start_points: usize,
) -> Result<(Component<T>, usize)> {
    if i == 1 {
        return Ok((convolution_component(model, 1, grid, 0, rng, 0)?, start_points));
    }
    let mut points = start_points.clamp(cfg.min_points, cfg.max_points);
    let mut attempt = 0u64;
    loop {
        let mut comp = convolution_component(model, i, grid, points, rng, attempt)?;
        attempt += 1;
        comp.diagnostics.attempts = attempt as usize;
        let d = comp.diagnostics;
        if (d.integral - 1.0).abs() <= cfg.tolerance {
            let next = (points / cfg.shrink_factor).max(cfg.min_points);
            return Ok((comp, next));
        }
        match points.checked_mul(cfg.grow_factor) {
            Some(p) if p <= cfg.max_points => points = p,
            _ => {
                return Err(Error::MonteCarloBudget {
                    component: i,
                    max_points: cfg.max_points,
                    integral: d.integral,
                    stddev: d.est_stddev,
                })
            }
        }
    }
}

/// Components `1..=i_max`, each on its own support grid. Component `i` draws
/// from stream `i` of `seed`.
pub fn compute_components<T: Real>(
    model: &ServiceTimeModel<T>,
    i_max: usize,
    cfg: &MonteCarloConfig,
    seed: u64,
) -> Result<Vec<Component<T>>> {
    cfg.validate()?;
    let mut points = cfg.initial_points;
    let mut out = Vec::with_capacity(i_max);
    for i in 1..=i_max {
        let grid = component_grid(model, i, cfg.wait_grid_steps)?;
        let (comp, next) = adaptive_component(model, i, &grid, cfg, &RandomStream::new(seed, i as u64), points)?;
        points = next;
        out.push(comp);
    }
    Ok(out)
}

/// Waiting time: an atom at zero plus a gridded continuous part.
#[derive(Debug, Clone, PartialEq)]
pub struct WaitingTimeDistribution<T> {
    pub atom_at_zero: T,
    pub grid: Grid<T>,
    /// Continuous part `Σ_{i=1..i_max} π_i f_{W_i}`.
    pub pdf: GriddedFunction<T>,
    /// `F_W`, including the atom.
    pub cdf: GriddedFunction<T>,
    pub components: Vec<ComponentDiagnostics>,
    pub i_max: usize,
}

/// Sums the weighted components on the global grid `[t_min, i_max·t_max]`.
pub fn assemble<T: Real>(
    model: &ServiceTimeModel<T>,
    occ: &OccupancyDistribution<T>,
    components: &[Component<T>],
    steps: usize,
) -> Result<WaitingTimeDistribution<T>> {
    let covered = components.len() == occ.i_max
        && components.iter().enumerate().all(|(n, c)| c.diagnostics.index == n + 1);
    if !covered {
        return Err(Error::InvalidParameter {
            name: "components",
            reason: format!("need components 1..={} in order, got {}", occ.i_max, components.len()),
        });
    }
    let upper = T::from_usize_lossy(occ.i_max.max(1)) * model.t_max;
    let grid = Grid::new(model.t_min, upper, steps)?;
    let mut acc = vec![T::zero(); grid.len()];
    for (comp, &weight) in components.iter().zip(&occ.pi[1..]) {
        let resampled = comp.pdf.resample_zero_extended(&grid);
        for (a, &v) in acc.iter_mut().zip(resampled.samples()) {
            *a += weight * v;
        }
    }
    let pdf = GriddedFunction::new(grid, acc)?;
    let atom = occ.pi[0];
    let cdf = cdf_from_pdf(&pdf, atom)?;
    Ok(WaitingTimeDistribution {
        atom_at_zero: atom,
        grid,
        pdf,
        cdf,
        components: components.iter().map(|c| c.diagnostics).collect(),
        i_max: occ.i_max,
    })
}

/// Full waiting-time computation for an already solved occupancy.
pub fn waiting_time<T: Real>(
    model: &ServiceTimeModel<T>,
    occ: &OccupancyDistribution<T>,
    cfg: &MonteCarloConfig,
    seed: u64,
) -> Result<WaitingTimeDistribution<T>> {
    let components = compute_components(model, occ.i_max, cfg, seed)?;
    assemble(model, occ, &components, cfg.wait_grid_steps)
}

impl<T: Real> WaitingTimeDistribution<T> {
    /// Total captured probability, atom included.
    pub fn total_mass(&self) -> T {
        self.cdf.last()
    }

    /// `F_W(t)`: zero for negative `t`, the atom below `t_min`, flat past the grid.
    pub fn cdf_at(&self, t: T) -> T {
        if t < T::zero() {
            T::zero()
        } else if t < self.grid.lo() {
            self.atom_at_zero
        } else {
            self.cdf.interpolate(t).unwrap_or_else(|| self.cdf.last())
        }
    }

    pub fn quantile(&self, p: T) -> Result<T> {
        quantile(&self.cdf, self.atom_at_zero, p)
    }

    /// Quantiles for every `p`; fails listing all unattainable probabilities.
    pub fn quantiles(&self, probs: &[T]) -> Result<Vec<T>> {
        let mut out = Vec::with_capacity(probs.len());
        let mut failed = Vec::new();
        for &p in probs {
            match self.quantile(p) {
                Ok(q) => out.push(q),
                Err(Error::InsufficientMass { .. }) => failed.push(p.to_f64_lossy()),
                Err(e) => return Err(e),
            }
        }
        if failed.is_empty() {
            Ok(out)
        } else {
            Err(Error::QuantilesUnavailable { failed, attained: self.total_mass().to_f64_lossy() })
        }
    }

    /// Mean of the continuous part, `∫ t f_W(t) dt`.
    pub fn mean(&self) -> T {
        trapezoid(&self.grid.map(|t| t * self.pdf.interpolate(t).unwrap_or_else(T::zero)))
    }
}
