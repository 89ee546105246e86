//! Uniform grids, trapezoid quadrature, cdf/quantile extraction and
//! reproducible random streams.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Negative cdf increments smaller than this are treated as rounding noise.
pub const CDF_ROUNDING_SLACK: f64 = 1e-12;

/// Generator behind every [`RandomStream`]; recorded in run metadata.
pub const RNG_ALGORITHM: &str =
    "xoshiro256++ (rand_xoshiro 0.7); substream seeds = splitmix64 chain over (seed, stream_id, substream indices)";

/// `steps + 1` equally spaced points on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid<T> {
    lo: T,
    hi: T,
    steps: usize,
}

impl<T: Real> Grid<T> {
    pub fn new(lo: T, hi: T, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidParameter { name: "steps", reason: "must be positive".into() });
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidParameter {
                name: "grid",
                reason: format!("need finite lo < hi, got [{lo}, {hi}]"),
            });
        }
        Ok(Self { lo, hi, steps })
    }

    pub fn lo(&self) -> T {
        self.lo
    }

    pub fn hi(&self) -> T {
        self.hi
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Number of grid points (`steps + 1`).
    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> T {
        (self.hi - self.lo) / T::from_usize_lossy(self.steps)
    }

    /// The `j`-th abscissa. The last point is exactly `hi`.
    pub fn point(&self, j: usize) -> T {
        debug_assert!(j <= self.steps);
        if j == self.steps {
            self.hi
        } else {
            self.lo + (self.hi - self.lo) * T::from_usize_lossy(j) / T::from_usize_lossy(self.steps)
        }
    }

    pub fn points(&self) -> impl Iterator<Item = T> + '_ {
        (0..=self.steps).map(move |j| self.point(j))
    }

    /// Samples `f` at every grid point.
    pub fn map<F: FnMut(T) -> T>(&self, f: F) -> GriddedFunction<T> {
        GriddedFunction { grid: *self, samples: self.points().map(f).collect() }
    }
}

/// A function sampled on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GriddedFunction<T> {
    grid: Grid<T>,
    samples: Vec<T>,
}

impl<T: Real> GriddedFunction<T> {
    pub fn new(grid: Grid<T>, samples: Vec<T>) -> Result<Self> {
        if samples.len() != grid.len() {
            return Err(Error::InvalidParameter {
                name: "samples",
                reason: format!("expected {} samples, got {}", grid.len(), samples.len()),
            });
        }
        if let Some(j) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "samples",
                reason: format!("non-finite value at index {j}"),
            });
        }
        Ok(Self { grid, samples })
    }

    pub fn zeros(grid: Grid<T>) -> Self {
        Self { grid, samples: vec![T::zero(); grid.len()] }
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn last(&self) -> T {
        self.samples[self.samples.len() - 1]
    }

    /// Linear interpolation; `None` outside the grid.
    pub fn interpolate(&self, t: T) -> Option<T> {
        let (lo, hi) = (self.grid.lo, self.grid.hi);
        if t < lo || t > hi {
            return None;
        }
        let pos = (t - lo) / self.grid.spacing();
        let j = pos.floor().to_usize().unwrap_or(0).min(self.grid.steps - 1);
        let frac = (pos - T::from_usize_lossy(j)).max(T::zero()).min(T::one());
        Some(self.samples[j] + (self.samples[j + 1] - self.samples[j]) * frac)
    }

    /// Resamples onto `target`, zero outside this function's grid.
    pub fn resample_zero_extended(&self, target: &Grid<T>) -> GriddedFunction<T> {
        target.map(|t| self.interpolate(t).unwrap_or_else(T::zero))
    }
}

/// Composite trapezoid rule over the sampled function.
pub fn trapezoid<T: Real>(f: &GriddedFunction<T>) -> T {
    let s = &f.samples;
    let n = s.len();
    let interior: T = s[1..n - 1].iter().copied().sum();
    f.grid.spacing() * (interior + (s[0] + s[n - 1]) * T::lit(0.5))
}

/// Cumulative trapezoid integral of `pdf`, offset by a point mass at the
/// origin (which must lie at or below the grid start).
pub fn cdf_from_pdf<T: Real>(pdf: &GriddedFunction<T>, atom_at_zero: T) -> Result<GriddedFunction<T>> {
    if !(atom_at_zero >= T::zero() && atom_at_zero <= T::one()) {
        return Err(Error::InvalidParameter {
            name: "atom_at_zero",
            reason: format!("{atom_at_zero} not in [0, 1]"),
        });
    }
    let half_h = pdf.grid.spacing() * T::lit(0.5);
    let slack = T::lit(CDF_ROUNDING_SLACK);
    let mut out = Vec::with_capacity(pdf.samples.len());
    let mut acc = atom_at_zero;
    out.push(acc);
    for (j, w) in pdf.samples.windows(2).enumerate() {
        let mut inc = half_h * (w[0] + w[1]);
        if inc < T::zero() {
            if inc < -slack {
                return Err(Error::NonMonotoneCdf { index: j + 1, decrease: -inc.to_f64_lossy() });
            }
            inc = T::zero();
        }
        acc += inc;
        out.push(acc);
    }
    Ok(GriddedFunction { grid: pdf.grid, samples: out })
}

/// Smallest `t` with `cdf(t) >= p`, linearly interpolated between the
/// bracketing grid points. Returns zero when `p` falls inside the atom.
pub fn quantile<T: Real>(cdf: &GriddedFunction<T>, atom_at_zero: T, p: T) -> Result<T> {
    if !(p > T::zero() && p < T::one()) {
        return Err(Error::InvalidParameter { name: "p", reason: format!("{p} not in (0, 1)") });
    }
    if p <= atom_at_zero {
        return Ok(T::zero());
    }
    let s = &cdf.samples;
    let j = s.iter().position(|&c| c >= p).ok_or(Error::InsufficientMass {
        requested: p.to_f64_lossy(),
        attained: cdf.last().to_f64_lossy(),
    })?;
    if j == 0 {
        return Ok(cdf.grid.lo);
    }
    let (c0, c1) = (s[j - 1], s[j]);
    let (t0, t1) = (cdf.grid.point(j - 1), cdf.grid.point(j));
    if c1 <= c0 {
        return Ok(t1);
    }
    Ok(t0 + (t1 - t0) * (p - c0) / (c1 - c0))
}

/// A seedable, splittable source of reproducible random sequences.
///
/// Identical `(seed, stream_id)` pairs give identical sequences; every
/// substream is an independently seeded generator, so work can be split
/// across threads without changing results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RandomStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RandomStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Generator for the whole stream.
    pub fn rng(&self) -> Xoshiro256PlusPlus {
        self.substream(&[])
    }

    /// Generator for the substream addressed by `path`.
    pub fn substream(&self, path: &[u64]) -> Xoshiro256PlusPlus {
        let mut h = splitmix64(self.seed ^ 0x5851_f42d_4c95_7f2d);
        h = splitmix64(h ^ self.stream_id);
        for &p in path {
            h = splitmix64(h ^ p);
        }
        Xoshiro256PlusPlus::seed_from_u64(h)
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn unit_grid(steps: usize) -> Grid<f64> {
        Grid::new(0.0, 1.0, steps).unwrap()
    }

    #[test]
    fn grid_endpoints_are_exact() {
        let g = Grid::new(1.36e-4, 4.08e-4, 5000).unwrap();
        assert_eq!(g.point(0), 1.36e-4);
        assert_eq!(g.point(5000), 4.08e-4);
        assert_eq!(g.points().count(), 5001);
        assert!(Grid::new(1.0, 1.0, 10).is_err());
        assert!(Grid::new(0.0, 1.0, 0).is_err());
    }

    #[test]
    fn gridded_function_rejects_bad_samples() {
        let g = unit_grid(2);
        assert!(GriddedFunction::new(g, vec![0.0, 1.0]).is_err());
        assert!(GriddedFunction::new(g, vec![0.0, f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn trapezoid_constant_and_linear() {
        assert_relative_eq!(trapezoid(&unit_grid(10).map(|_| 1.0)), 1.0, epsilon = 1e-15);
        for steps in [1, 3, 17, 1000] {
            assert_relative_eq!(trapezoid(&unit_grid(steps).map(|t| t)), 0.5, epsilon = 1e-14);
        }
    }

    #[test]
    fn trapezoid_inverse_square_density() {
        // Antiderivative of c/t^2 is -c/t, so the exact integral is 1.
        let (a, b, c) = (1.36e-4, 4.08e-4, 2.04e-4);
        let exact = c / a - c / b;
        assert_relative_eq!(exact, 1.0, epsilon = 1e-12);
        let g = Grid::new(a, b, 5000).unwrap();
        let v: f64 = trapezoid(&g.map(|t| c / (t * t)));
        assert!((v - 1.0).abs() < 1e-6, "trapezoid gave {v}");
    }

    #[test]
    fn cdf_of_zero_pdf_is_the_atom() {
        let cdf = cdf_from_pdf(&unit_grid(10).map(|_| 0.0), 0.34).unwrap();
        assert!(cdf.samples().iter().all(|&c| c == 0.34));
    }

    #[test]
    fn cdf_of_uniform_pdf() {
        let cdf = cdf_from_pdf(&unit_grid(10).map(|_| 1.0), 0.0).unwrap();
        assert_relative_eq!(cdf.interpolate(0.5).unwrap(), 0.5, epsilon = 1e-12);
        assert_relative_eq!(cdf.last(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn cdf_rejects_negative_density() {
        let pdf = GriddedFunction::new(unit_grid(2), vec![0.0, -1.0, 0.0]).unwrap();
        assert!(matches!(cdf_from_pdf(&pdf, 0.0), Err(Error::NonMonotoneCdf { .. })));
        let tiny = GriddedFunction::new(unit_grid(2), vec![0.0, -1e-15, 0.0]).unwrap();
        let cdf = cdf_from_pdf(&tiny, 0.1).unwrap();
        assert!(cdf.samples().iter().all(|&c| c == 0.1));
        assert!(cdf_from_pdf(&tiny, 1.5).is_err());
    }

    #[test]
    fn quantile_inside_atom_is_zero() {
        let cdf = cdf_from_pdf(&unit_grid(10).map(|_| 0.66), 0.34).unwrap();
        assert_eq!(quantile(&cdf, 0.34, 0.2).unwrap(), 0.0);
        assert_eq!(quantile(&cdf, 0.34, 0.34).unwrap(), 0.0);
    }

    #[test]
    fn quantile_of_linear_cdf() {
        let cdf = unit_grid(10).map(|t| t);
        assert_relative_eq!(quantile(&cdf, 0.0, 0.9).unwrap(), 0.9, epsilon = 1e-12);
        assert_relative_eq!(quantile(&cdf, 0.0, 0.95).unwrap(), 0.95, epsilon = 1e-12);
    }

    #[test]
    fn quantile_beyond_attained_mass_errors() {
        let cdf = unit_grid(10).map(|t| 0.9 * t);
        let err = quantile(&cdf, 0.0, 0.95).unwrap_err();
        assert!(matches!(err, Error::InsufficientMass { .. }));
        assert!(err.to_string().contains("increase i_max mass threshold"));
        assert!(quantile(&cdf, 0.0, 1.0).is_err());
    }

    #[test]
    fn interpolation_and_resampling() {
        let f = Grid::new(1.0, 2.0, 4).unwrap().map(|t| 2.0 * t);
        assert_relative_eq!(f.interpolate(1.3).unwrap(), 2.6, epsilon = 1e-12);
        assert_eq!(f.interpolate(0.5), None);
        let r = f.resample_zero_extended(&Grid::new(0.0, 3.0, 6).unwrap());
        assert_eq!(r.samples()[0], 0.0);
        assert_relative_eq!(r.samples()[3], 3.0, epsilon = 1e-12);
        assert_eq!(r.samples()[6], 0.0);
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = RandomStream::new(7, 1).rng().random_iter().take(8).collect();
        let b: Vec<u64> = RandomStream::new(7, 1).rng().random_iter().take(8).collect();
        let c: Vec<u64> = RandomStream::new(7, 2).rng().random_iter().take(8).collect();
        let d: Vec<u64> = RandomStream::new(7, 1).substream(&[0]).random_iter().take(8).collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn distinct_streams_are_uncorrelated() {
        let n = 100_000;
        let mut r1 = RandomStream::new(11, 1).rng();
        let mut r2 = RandomStream::new(11, 2).rng();
        let (x, y): (Vec<f64>, Vec<f64>) = (0..n).map(|_| (r1.random::<f64>(), r2.random::<f64>())).unzip();
        let mx = x.iter().sum::<f64>() / n as f64;
        let my = y.iter().sum::<f64>() / n as f64;
        let cov: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / n as f64;
        // Correlation of independent uniforms has sd 1/sqrt(n).
        assert!((cov * 12.0).abs() < 5.0 / (n as f64).sqrt());
    }

    #[test]
    fn works_in_single_precision() {
        let g = Grid::<f32>::new(0.0, 1.0, 100).unwrap();
        let cdf = cdf_from_pdf(&g.map(|_| 1.0), 0.0).unwrap();
        assert!((quantile(&cdf, 0.0, 0.25).unwrap() - 0.25).abs() < 1e-5);
    }

    proptest! {
        #[test]
        fn quantile_is_monotone_in_p(
            density in proptest::collection::vec(0.0f64..5.0, 11),
            atom in 0.0f64..0.5,
            p1 in 0.01f64..0.99,
            p2 in 0.01f64..0.99,
        ) {
            let g = unit_grid(10);
            let raw = GriddedFunction::new(g, density).unwrap();
            let mass = trapezoid(&raw);
            prop_assume!(mass > 1e-6);
            let scale = (1.0 - atom) / mass;
            let pdf = g.map(|t| raw.interpolate(t).unwrap() * scale);
            let cdf = cdf_from_pdf(&pdf, atom).unwrap();
            prop_assert!(cdf.samples().windows(2).all(|w| w[1] >= w[0]));
            let (lo, hi) = if p1 <= p2 { (p1, p2) } else { (p2, p1) };
            let qlo = quantile(&cdf, atom, lo).unwrap();
            let qhi = quantile(&cdf, atom, hi).unwrap();
            prop_assert!(qlo <= qhi + 1e-12);
        }
    }
}
