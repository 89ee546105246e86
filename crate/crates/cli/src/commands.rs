//! The four subcommands.

use std::path::{Path, PathBuf};

use refqueue::numerics::RNG_ALGORITHM;
use refqueue::occupancy::steady_state;
use refqueue::simulator::{self, SimulationResult};
use refqueue::waittime::waiting_time;
use refqueue::{
    analyze as run_analysis, AnalysisConfig, AnalysisF64, ComparisonReport, Error, MonteCarloConfig,
    OccupancyConfig, OccupancyF64, ScenarioF64, ServiceTimeModelF64, SimConfig, Thresholds, WaitingTimeF64,
};
use serde::Serialize;

use crate::output::{ms, num, percent_label, rate, table, write_csv, write_text};
use crate::scenario_file::ScenarioFile;
use crate::CliError;

pub const DEFAULT_PERCENTILES: [f64; 3] = [0.90, 0.95, 0.99];

/// Command-line values that override the scenario file's `[config]`.
#[derive(Debug, Clone, Default, PartialEq, clap::Args)]
pub struct Overrides {
    /// Master seed for every random stream.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Intervals of the waiting-time and service-time grids.
    #[arg(long)]
    pub grid_steps: Option<usize>,
    /// Quadrature intervals per support piece for the arrival probabilities.
    #[arg(long)]
    pub k_steps: Option<usize>,
    /// Queue-length probability mass that fixes the truncation point.
    #[arg(long = "mass")]
    pub mass_threshold: Option<f64>,
    /// Accepted deviation of each convolution integral from one.
    #[arg(long = "mc-tol")]
    pub mc_tolerance: Option<f64>,
    /// Monte Carlo points per grid point for the first attempt.
    #[arg(long = "mc-init")]
    pub mc_initial: Option<usize>,
    /// Comma-separated probabilities in (0, 1).
    #[arg(long, value_delimiter = ',')]
    pub percentiles: Option<Vec<f64>>,
}

/// Fully resolved run settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub analysis: AnalysisConfig,
    pub percentiles: Vec<f64>,
}

impl Settings {
    /// Flags win over the file, the file wins over defaults.
    pub fn resolve(file: &ScenarioFile, flags: &Overrides) -> Result<Self, CliError> {
        let c = &file.config;
        let mut occupancy = OccupancyConfig::default();
        let mut monte_carlo = MonteCarloConfig::default();
        if let Some(v) = flags.k_steps.or(c.k_steps) {
            occupancy.k_steps = v;
        }
        if let Some(v) = flags.mass_threshold.or(c.mass_threshold) {
            occupancy.mass_threshold = v;
        }
        if let Some(v) = flags.grid_steps.or(c.grid_steps) {
            monte_carlo.wait_grid_steps = v;
        }
        if let Some(v) = flags.mc_tolerance.or(c.mc_tolerance) {
            monte_carlo.tolerance = v;
        }
        if let Some(v) = flags.mc_initial.or(c.mc_initial) {
            monte_carlo.initial_points = v;
            monte_carlo.min_points = monte_carlo.min_points.min(v);
        }
        let seed = flags.seed.or(c.seed).unwrap_or(1);
        let percentiles = flags.percentiles.clone().unwrap_or_else(|| DEFAULT_PERCENTILES.to_vec());
        if percentiles.is_empty() || percentiles.iter().any(|p| !(*p > 0.0 && *p < 1.0)) {
            return Err(CliError::Parse(format!("percentiles must lie in (0, 1), got {percentiles:?}")));
        }
        occupancy.validate()?;
        monte_carlo.validate()?;
        Ok(Self { analysis: AnalysisConfig { occupancy, monte_carlo, seed }, percentiles })
    }
}

/// One line of the dimensioning report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub lambda: f64,
    pub rho: f64,
    pub mean_service: f64,
    /// Pollaczek–Khintchine mean waiting time.
    pub mean_wait: f64,
    pub wait_quantiles: Vec<(f64, f64)>,
    pub queue_quantiles: Vec<(f64, usize)>,
    pub i_max: usize,
    pub occupancy_mass: f64,
    pub wait_mass: f64,
    pub mc_max_points: usize,
    pub mc_attempts: usize,
}

impl ReportRow {
    pub fn new(a: &AnalysisF64, percentiles: &[f64]) -> Result<Self, CliError> {
        let mut failed = Vec::new();
        let mut queue_quantiles = Vec::new();
        let mut wait_quantiles = Vec::new();
        for &p in percentiles {
            match (a.occupancy.queue_length_quantile(p), a.waiting.quantile(p)) {
                (Ok(n), Ok(w)) => {
                    queue_quantiles.push((p, n));
                    wait_quantiles.push((p, w));
                }
                (Err(Error::InsufficientMass { .. }), _) | (_, Err(Error::InsufficientMass { .. })) => failed.push(p),
                (Err(e), _) | (_, Err(e)) => return Err(e.into()),
            }
        }
        if !failed.is_empty() {
            let attained = a.occupancy.attained_mass().min(a.waiting.total_mass());
            return Err(Error::QuantilesUnavailable { failed, attained }.into());
        }
        let diag = &a.waiting.components;
        Ok(Self {
            lambda: a.model.lambda(),
            rho: a.model.rho(),
            mean_service: a.model.mean_service,
            mean_wait: a.pk_mean_wait,
            wait_quantiles,
            queue_quantiles,
            i_max: a.occupancy.i_max,
            occupancy_mass: a.occupancy.attained_mass(),
            wait_mass: a.waiting.total_mass(),
            mc_max_points: diag.iter().map(|d| d.points_used).max().unwrap_or(0),
            mc_attempts: diag.iter().map(|d| d.attempts).sum(),
        })
    }

    pub fn wait_quantile(&self, p: f64) -> Option<f64> {
        self.wait_quantiles.iter().find(|(q, _)| *q == p).map(|&(_, w)| w)
    }

    pub fn queue_quantile(&self, p: f64) -> Option<usize> {
        self.queue_quantiles.iter().find(|(q, _)| *q == p).map(|&(_, n)| n)
    }

    fn csv_header(&self) -> Vec<String> {
        let mut h = vec!["lambda_per_s".into(), "rho".into(), "mean_service_s".into(), "mean_wait_s".into()];
        h.extend(self.wait_quantiles.iter().map(|(p, _)| format!("wait_p{}_s", percent_label(*p))));
        h.extend(self.queue_quantiles.iter().map(|(p, _)| format!("queue_p{}", percent_label(*p))));
        h.extend(["i_max", "occupancy_mass", "wait_mass", "mc_max_points", "mc_attempts"].map(String::from));
        h
    }

    fn csv_cells(&self) -> Vec<String> {
        let mut r = vec![num(self.lambda), num(self.rho), num(self.mean_service), num(self.mean_wait)];
        r.extend(self.wait_quantiles.iter().map(|(_, w)| num(*w)));
        r.extend(self.queue_quantiles.iter().map(|(_, n)| n.to_string()));
        r.extend([
            self.i_max.to_string(),
            num(self.occupancy_mass),
            num(self.wait_mass),
            self.mc_max_points.to_string(),
            self.mc_attempts.to_string(),
        ]);
        r
    }

    fn text(&self) -> String {
        let mut header = vec!["lambda [1/s]".to_string(), "rho".into(), "E(W)".into()];
        header.extend(self.wait_quantiles.iter().map(|(p, _)| format!("W p{}", percent_label(*p))));
        header.extend(self.queue_quantiles.iter().map(|(p, _)| format!("N p{}", percent_label(*p))));
        header.extend(["i_max", "MC max points"].map(String::from));
        let mut row = vec![format!("{:.4}", self.lambda), format!("{:.4}", self.rho), ms(self.mean_wait)];
        row.extend(self.wait_quantiles.iter().map(|(_, w)| ms(*w)));
        row.extend(self.queue_quantiles.iter().map(|(_, n)| n.to_string()));
        row.extend([self.i_max.to_string(), self.mc_max_points.to_string()]);
        table(&header, &[row])
    }
}

#[derive(Debug, Serialize)]
struct Metadata<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    scalar: &'static str,
    seed: u64,
    rng_algorithm: &'static str,
    stream_policy: &'static str,
    k_steps: usize,
    wait_grid_steps: usize,
    mass_threshold: f64,
    state_cap: usize,
    mc_tolerance: f64,
    mc_initial_points: usize,
    mc_grow_factor: usize,
    mc_shrink_factor: usize,
    mc_min_points: usize,
    mc_max_points: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    simulation: Option<SimMetadata>,
}

#[derive(Debug, Serialize)]
struct SimMetadata {
    arrivals: usize,
    warmup: usize,
    batches: usize,
}

fn write_metadata(out: &Path, command: &str, s: &Settings, sim: Option<&SimConfig>) -> Result<(), CliError> {
    let a = &s.analysis;
    let meta = Metadata {
        tool: "refqueue",
        version: env!("CARGO_PKG_VERSION"),
        command,
        scalar: "f64",
        seed: a.seed,
        rng_algorithm: RNG_ALGORITHM,
        stream_policy: "convolution component i uses stream i; simulation uses stream 0",
        k_steps: a.occupancy.k_steps,
        wait_grid_steps: a.monte_carlo.wait_grid_steps,
        mass_threshold: a.occupancy.mass_threshold,
        state_cap: a.occupancy.state_cap,
        mc_tolerance: a.monte_carlo.tolerance,
        mc_initial_points: a.monte_carlo.initial_points,
        mc_grow_factor: a.monte_carlo.grow_factor,
        mc_shrink_factor: a.monte_carlo.shrink_factor,
        mc_min_points: a.monte_carlo.min_points,
        mc_max_points: a.monte_carlo.max_points,
        simulation: sim.map(|c| SimMetadata { arrivals: c.arrivals, warmup: c.warmup, batches: c.batches }),
    };
    let text = serde_json::to_string_pretty(&meta).map_err(|e| CliError::Io(std::io::Error::other(e)))?;
    write_text(&out.join("metadata.json"), &(text + "\n"))
}

fn prepare(out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out)?;
    Ok(())
}

/// Human-readable scenario header.
pub fn describe(scenario: &ScenarioF64, model: &ServiceTimeModelF64) -> String {
    let mut s = String::new();
    for (n, spec) in scenario.sessions().iter().enumerate() {
        s.push_str(&format!(
            "session {n}: lambda {} /s, {} x {} B trains, {} to {}\n",
            spec.intensity(),
            spec.train_size(),
            spec.packet_size_bits() / 8,
            rate(spec.rate_min()),
            rate(spec.rate_max()),
        ));
    }
    s.push_str(&format!(
        "service time {} to {}, E(T) {}, mu {:.2} /s, rho {:.4}\n",
        ms(model.t_min),
        ms(model.t_max),
        ms(model.mean_service),
        model.mu(),
        model.rho()
    ));
    s
}

/// Everything `analyze` computed and wrote.
#[derive(Debug, Clone)]
pub struct AnalyzeOutput {
    pub analysis: AnalysisF64,
    pub row: ReportRow,
    pub text: String,
}

/// Runs the analytic pipeline and writes the distribution files and the
/// report. Quantiles that need more mass than was captured fail after the
/// distribution files have been written.
pub fn analyze(file: &ScenarioFile, settings: &Settings, out: &Path) -> Result<AnalyzeOutput, CliError> {
    let analysis = run_analysis(&file.scenario, &settings.analysis)?;
    prepare(out)?;
    write_distributions(out, &analysis, settings)?;
    write_metadata(out, "analyze", settings, None)?;
    let row = ReportRow::new(&analysis, &settings.percentiles)?;
    write_csv(&out.join("report.csv"), &row.csv_header().iter().map(String::as_str).collect::<Vec<_>>(), [
        row.csv_cells(),
    ])?;
    let text = format!(
        "{}occupancy mass {:.6} (i_max {}), waiting-time mass {:.6}, mean of truncated waiting time {}\n\n{}",
        describe(&file.scenario, &analysis.model),
        row.occupancy_mass,
        row.i_max,
        row.wait_mass,
        ms(analysis.waiting.mean()),
        row.text()
    );
    write_text(&out.join("report.txt"), &text)?;
    Ok(AnalyzeOutput { analysis, row, text })
}

fn write_distributions(out: &Path, a: &AnalysisF64, s: &Settings) -> Result<(), CliError> {
    let steps = s.analysis.monte_carlo.wait_grid_steps;
    let g = refqueue::Grid::new(a.model.t_min, a.model.t_max, steps)?;
    write_csv(
        &out.join("service_pdf.csv"),
        &["service_s", "pdf_per_s"],
        g.points().map(|t| vec![num(t), num(a.model.pdf(t))]),
    )?;
    let occ = &a.occupancy;
    write_csv(
        &out.join("occupancy.csv"),
        &["n", "pi", "cdf", "k"],
        (0..=occ.i_max).map(|i| vec![i.to_string(), num(occ.pi[i]), num(occ.cdf[i]), num(occ.k[i])]),
    )?;
    let w = &a.waiting;
    write_csv(
        &out.join("wait_pdf.csv"),
        &["wait_s", "pdf_per_s"],
        w.grid.points().zip(w.pdf.samples()).map(|(t, v)| vec![num(t), num(*v)]),
    )?;
    let first = std::iter::once(vec![num(0.0), num(w.atom_at_zero)]);
    write_csv(
        &out.join("wait_cdf.csv"),
        &["wait_s", "cdf"],
        first.chain(w.grid.points().zip(w.cdf.samples()).map(|(t, v)| vec![num(t), num(*v)])),
    )?;
    write_csv(
        &out.join("mc_components.csv"),
        &["component", "points_used", "attempts", "integral", "est_stddev", "exact"],
        w.components.iter().map(|d| {
            vec![
                d.index.to_string(),
                d.points_used.to_string(),
                d.attempts.to_string(),
                num(d.integral),
                num(d.est_stddev),
                d.exact.to_string(),
            ]
        }),
    )
}

/// Simulation length and recording options.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    /// Arrivals simulated in total, warmup included.
    pub arrivals: usize,
    /// Defaults to the smaller of 10 000 and a tenth of `arrivals`.
    pub warmup: Option<usize>,
    pub samples: bool,
}

impl SimOptions {
    pub fn config(&self, seed: u64) -> Result<SimConfig, CliError> {
        let warmup = self.warmup.unwrap_or((self.arrivals / 10).min(10_000));
        let recorded = self.arrivals.saturating_sub(warmup);
        let cfg = SimConfig {
            arrivals: self.arrivals,
            warmup,
            seed,
            record_samples: self.samples,
            batches: SimConfig::default().batches.min(recorded.max(2)),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

pub const UNSTABLE_BANNER: &str = "WARNING: rho >= 1, the queue has no steady state; \
simulating anyway, statistics describe a growing transient";

/// Runs the simulator, writing `sim_summary.csv` and optionally `samples.csv`.
pub fn simulate(
    file: &ScenarioFile,
    settings: &Settings,
    sim: &SimOptions,
    out: &Path,
) -> Result<(SimulationResult, String), CliError> {
    let cfg = sim.config(settings.analysis.seed)?;
    let result = simulator::run(&file.scenario, &cfg)?;
    prepare(out)?;
    write_metadata(out, "simulate", settings, Some(&cfg))?;
    write_sim_summary(&out.join("sim_summary.csv"), &result)?;
    if sim.samples {
        write_csv(
            &out.join("samples.csv"),
            &["arrival_time_s", "session_index", "service_time_s", "true_wait_s", "surrogate_wait_s", "n_at_arrival"],
            result.records.iter().map(|r| {
                vec![
                    num(r.arrival_time_s),
                    r.session_index.to_string(),
                    num(r.service_time_s),
                    num(r.true_wait_s),
                    num(r.surrogate_wait_s),
                    r.n_at_arrival.to_string(),
                ]
            }),
        )?;
    }
    let s = &result.summary;
    let mut text = String::new();
    if s.unstable {
        text.push_str(UNSTABLE_BANNER);
        text.push('\n');
    }
    let rows = vec![
        vec!["recorded arrivals".into(), s.recorded.to_string(), String::new()],
        vec!["rho".into(), format!("{:.4}", s.rho), String::new()],
        vec!["utilization".into(), format!("{:.4}", s.utilization.mean), format!("{:.4}", s.utilization.std_error)],
        vec!["mean true wait".into(), ms(s.true_wait.mean), ms(s.true_wait.std_error)],
        vec!["mean surrogate wait".into(), ms(s.surrogate_wait.mean), ms(s.surrogate_wait.std_error)],
        vec!["mean trains seen".into(), format!("{:.4}", s.n_at_arrival.mean), format!("{:.4}", s.n_at_arrival.std_error)],
    ];
    text.push_str(&table(&["quantity".into(), "estimate".into(), "std. error".into()], &rows));
    Ok((result, text))
}

fn write_sim_summary(path: &Path, r: &SimulationResult) -> Result<(), CliError> {
    let s = &r.summary;
    let est = |name: &str, e: refqueue::simulator::Estimate| vec![name.to_string(), num(e.mean), num(e.std_error)];
    let plain = |name: &str, v: f64| vec![name.to_string(), num(v), String::new()];
    write_csv(path, &["quantity", "value", "std_error"], [
        plain("recorded_arrivals", s.recorded as f64),
        plain("lambda_per_s", s.lambda),
        plain("rho", s.rho),
        plain("unstable", if s.unstable { 1.0 } else { 0.0 }),
        est("utilization", s.utilization),
        est("mean_true_wait_s", s.true_wait),
        plain("true_wait_variance_s2", s.true_wait_variance),
        est("mean_surrogate_wait_s", s.surrogate_wait),
        est("mean_n_at_arrival", s.n_at_arrival),
        plain("observed_time_s", s.observed_time_s),
    ])
}

/// Test hook for the comparison's negative control: moves probability
/// `shift` from the empty state to state one before the waiting time is built.
pub fn corrupt_occupancy(occ: &mut OccupancyF64, shift: f64) {
    let shift = shift.min(occ.pi[0]);
    occ.pi[0] -= shift;
    if occ.pi.len() > 1 {
        occ.pi[1] += shift;
    } else {
        occ.pi.push(shift);
    }
    let mut acc = 0.0;
    occ.cdf = occ.pi.iter().map(|p| {
        acc += p;
        acc
    }).collect();
}

/// Analysis and simulation of the same scenario and seed, checked against
/// each other. Writes `comparison.txt`, `comparison.csv` and `sim_summary.csv`.
pub fn compare(
    file: &ScenarioFile,
    settings: &Settings,
    sim: &SimOptions,
    thresholds: &Thresholds,
    corrupt: Option<f64>,
    out: &Path,
) -> Result<(ComparisonReport, String), CliError> {
    let model = ServiceTimeModelF64::aggregate(&file.scenario)?;
    let mut occ = steady_state(&model, &settings.analysis.occupancy)?;
    if let Some(shift) = corrupt {
        corrupt_occupancy(&mut occ, shift);
    }
    let w: WaitingTimeF64 = waiting_time(&model, &occ, &settings.analysis.monte_carlo, settings.analysis.seed)?;
    let cfg = sim.config(settings.analysis.seed)?;
    let result = simulator::run(&file.scenario, &cfg)?;
    let report = simulator::compare(&result, &model, &occ, &w, thresholds)?;
    prepare(out)?;
    write_metadata(out, "compare", settings, Some(&cfg))?;
    write_sim_summary(&out.join("sim_summary.csv"), &result)?;
    write_csv(
        &out.join("comparison.csv"),
        &["check", "value", "threshold", "passed", "informative"],
        report.checks.iter().map(|c| {
            vec![c.name.to_string(), num(c.value), num(c.threshold), c.passed.to_string(), c.informative.to_string()]
        }),
    )?;
    let rows: Vec<Vec<String>> = report
        .checks
        .iter()
        .map(|c| {
            let verdict = match (c.passed, c.informative) {
                (true, false) => "PASS",
                (false, false) => "FAIL",
                (true, true) => "pass (info)",
                (false, true) => "fail (info)",
            };
            vec![c.name.to_string(), format!("{:.5}", c.value), format!("{}", c.threshold), verdict.to_string()]
        })
        .collect();
    let text = format!(
        "{}E(W) {}, mean trains in system {:.4} (truncated sum {:.4})\n\n{}\noverall: {}\n",
        describe(&file.scenario, &model),
        ms(report.pk_mean_wait),
        report.mean_length,
        report.truncated_mean_length,
        table(&["check".into(), "value".into(), "threshold".into(), "result".into()], &rows),
        if report.passed() { "PASS" } else { "FAIL" }
    );
    write_text(&out.join("comparison.txt"), &text)?;
    Ok((report, text))
}

/// Upper limit on a waiting-time or queue-length quantile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Limit {
    pub p: f64,
    pub max: f64,
}

impl Limit {
    /// `P:VALUE`; a wait value may end in `ms` or `s`.
    pub fn parse_wait(text: &str) -> Result<Self, String> {
        let (p, v) = split_limit(text)?;
        let v = v.trim();
        let seconds = if let Some(x) = v.strip_suffix("ms") {
            x.trim().parse::<f64>().map(|x| x * 1e-3)
        } else {
            v.strip_suffix('s').unwrap_or(v).trim().parse::<f64>()
        }
        .map_err(|_| format!("bad time `{v}`"))?;
        if !(seconds >= 0.0 && seconds.is_finite()) {
            return Err(format!("time limit must be finite and non-negative, got `{v}`"));
        }
        Ok(Self { p, max: seconds })
    }

    pub fn parse_queue(text: &str) -> Result<Self, String> {
        let (p, v) = split_limit(text)?;
        let n: usize = v.trim().parse().map_err(|_| format!("bad queue length `{v}`"))?;
        Ok(Self { p, max: n as f64 })
    }
}

fn split_limit(text: &str) -> Result<(f64, &str), String> {
    let (p, v) = text.split_once(':').ok_or_else(|| format!("expected P:VALUE, got `{text}`"))?;
    let p: f64 = p.trim().parse().map_err(|_| format!("bad probability `{p}`"))?;
    if !(p > 0.0 && p < 1.0) {
        return Err(format!("probability {p} not in (0, 1)"));
    }
    Ok((p, v))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DimensionOptions {
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Sweep points including both ends.
    pub lambda_points: usize,
    pub wait_limits: Vec<Limit>,
    pub queue_limits: Vec<Limit>,
    /// Bisection steps between the last feasible and first infeasible sweep point.
    pub refine: usize,
}

/// How a sweep point was decided.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    /// A queue-length limit failed; no waiting time needed.
    QueueLength,
    /// `t_min` times a queue-length quantile already exceeds a wait limit.
    LowerBound,
    /// `t_max` times the queue-length quantiles meets every wait limit.
    UpperBound,
    /// Full waiting-time distribution computed.
    MonteCarlo,
}

impl Decision {
    fn label(self) -> &'static str {
        match self {
            Decision::QueueLength => "queue_length",
            Decision::LowerBound => "lower_bound",
            Decision::UpperBound => "upper_bound",
            Decision::MonteCarlo => "monte_carlo",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub lambda: f64,
    pub rho: f64,
    pub i_max: usize,
    pub queue_quantiles: Vec<usize>,
    /// Empty unless the waiting time was computed.
    pub wait_quantiles: Vec<f64>,
    pub mc_max_points: usize,
    pub feasible: bool,
    pub decision: Decision,
    pub refinement: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DimensionOutcome {
    pub rows: Vec<SweepRow>,
    pub max_lambda: f64,
    /// The largest rate in the sweep met the limits, so the true maximum may be higher.
    pub hit_range_end: bool,
    pub text: String,
}

impl DimensionOptions {
    fn validate(&self) -> Result<(), CliError> {
        if !(self.lambda_min > 0.0 && self.lambda_max >= self.lambda_min && self.lambda_max.is_finite()) {
            return Err(CliError::Parse("need 0 < lambda-min <= lambda-max".into()));
        }
        if self.lambda_points < 1 || (self.lambda_points == 1 && self.lambda_max != self.lambda_min) {
            return Err(CliError::Parse("need at least two sweep points for a range".into()));
        }
        if self.wait_limits.is_empty() && self.queue_limits.is_empty() {
            return Err(CliError::Parse("give at least one --wait-limit or --queue-limit".into()));
        }
        Ok(())
    }

    fn lambda_at(&self, j: usize) -> f64 {
        if self.lambda_points == 1 {
            self.lambda_min
        } else {
            self.lambda_min + (self.lambda_max - self.lambda_min) * j as f64 / (self.lambda_points - 1) as f64
        }
    }
}

/// Evaluates the limits at one arrival rate, the scenario's session mix kept.
pub fn evaluate_point(
    scenario: &ScenarioF64,
    lambda: f64,
    opts: &DimensionOptions,
    settings: &Settings,
) -> Result<SweepRow, CliError> {
    let scaled = scenario.with_total_intensity(lambda)?;
    let model = ServiceTimeModelF64::aggregate(&scaled)?;
    let occ = steady_state(&model, &settings.analysis.occupancy)?;
    let queue_quantiles =
        opts.queue_limits.iter().map(|l| occ.queue_length_quantile(l.p)).collect::<Result<Vec<_>, _>>()?;
    let wait_n =
        opts.wait_limits.iter().map(|l| occ.queue_length_quantile(l.p)).collect::<Result<Vec<_>, _>>()?;
    let mut row = SweepRow {
        lambda,
        rho: model.rho(),
        i_max: occ.i_max,
        queue_quantiles: queue_quantiles.clone(),
        wait_quantiles: Vec::new(),
        mc_max_points: 0,
        feasible: false,
        decision: Decision::QueueLength,
        refinement: false,
    };
    if queue_quantiles.iter().zip(&opts.queue_limits).any(|(&n, l)| n as f64 > l.max) {
        return Ok(row);
    }
    // W lies between t_min and t_max times the number of trains found waiting.
    let lower = |n: usize| n as f64 * model.t_min;
    let upper = |n: usize| n as f64 * model.t_max;
    if wait_n.iter().zip(&opts.wait_limits).any(|(&n, l)| lower(n) > l.max) {
        row.decision = Decision::LowerBound;
        return Ok(row);
    }
    if wait_n.iter().zip(&opts.wait_limits).all(|(&n, l)| upper(n) <= l.max) {
        row.decision = Decision::UpperBound;
        row.feasible = true;
        return Ok(row);
    }
    let w = waiting_time(&model, &occ, &settings.analysis.monte_carlo, settings.analysis.seed)?;
    let probs: Vec<f64> = opts.wait_limits.iter().map(|l| l.p).collect();
    row.wait_quantiles = w.quantiles(&probs)?;
    row.mc_max_points = w.components.iter().map(|d| d.points_used).max().unwrap_or(0);
    row.decision = Decision::MonteCarlo;
    row.feasible = row.wait_quantiles.iter().zip(&opts.wait_limits).all(|(&q, l)| q <= l.max);
    Ok(row)
}

/// Sweeps the total arrival rate upwards and reports the largest rate whose
/// quantiles meet every limit. Quantiles grow with the rate, so the sweep
/// stops at the first infeasible point and optionally bisects towards it.
pub fn dimension(
    file: &ScenarioFile,
    settings: &Settings,
    opts: &DimensionOptions,
    out: Option<&Path>,
) -> Result<DimensionOutcome, CliError> {
    opts.validate()?;
    let rho_max = file.scenario.with_total_intensity(opts.lambda_max)?.traffic_intensity();
    if !(rho_max < 1.0) {
        return Err(Error::Unstable { rho: rho_max }.into());
    }
    let mut rows: Vec<SweepRow> = Vec::new();
    let mut first_bad: Option<f64> = None;
    for j in 0..opts.lambda_points {
        let row = evaluate_point(&file.scenario, opts.lambda_at(j), opts, settings)?;
        let feasible = row.feasible;
        rows.push(row);
        if !feasible {
            first_bad = Some(opts.lambda_at(j));
            break;
        }
    }
    let mut best = rows.iter().filter(|r| r.feasible).map(|r| r.lambda).last();
    if let (Some(mut good), Some(mut bad)) = (best, first_bad) {
        for _ in 0..opts.refine {
            let mid = 0.5 * (good + bad);
            let mut row = evaluate_point(&file.scenario, mid, opts, settings)?;
            row.refinement = true;
            if row.feasible {
                good = mid;
            } else {
                bad = mid;
            }
            rows.push(row);
        }
        best = Some(good);
    }
    let text = dimension_text(&file.scenario, opts, &rows, best);
    if let Some(out) = out {
        prepare(out)?;
        write_metadata(out, "dimension", settings, None)?;
        write_dimension_csv(&out.join("dimension.csv"), opts, &rows)?;
        write_text(&out.join("dimension.txt"), &text)?;
    }
    match best {
        Some(max_lambda) => Ok(DimensionOutcome { rows, max_lambda, hit_range_end: first_bad.is_none(), text }),
        None => Err(CliError::Unsatisfiable { nearest_miss: row_summary(&rows[0], opts) }),
    }
}

fn row_summary(r: &SweepRow, opts: &DimensionOptions) -> String {
    let mut parts = vec![format!("lambda {} /s (rho {:.4})", r.lambda, r.rho)];
    for (l, n) in opts.queue_limits.iter().zip(&r.queue_quantiles) {
        parts.push(format!("N p{} = {n} (limit {})", percent_label(l.p), l.max));
    }
    if r.wait_quantiles.is_empty() {
        parts.push(format!("waiting time decided by {}", r.decision.label()));
    }
    for (l, q) in opts.wait_limits.iter().zip(&r.wait_quantiles) {
        parts.push(format!("W p{} = {} (limit {})", percent_label(l.p), ms(*q), ms(l.max)));
    }
    parts.join(", ")
}

fn dimension_text(scenario: &ScenarioF64, opts: &DimensionOptions, rows: &[SweepRow], best: Option<f64>) -> String {
    let mut header = vec!["lambda [1/s]".to_string(), "rho".into(), "i_max".into()];
    header.extend(opts.queue_limits.iter().map(|l| format!("N p{} <= {}", percent_label(l.p), l.max)));
    header.extend(opts.wait_limits.iter().map(|l| format!("W p{} <= {}", percent_label(l.p), ms(l.max))));
    header.extend(["decided by", "ok"].map(String::from));
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut cells = vec![
                format!("{:.3}{}", r.lambda, if r.refinement { "*" } else { "" }),
                format!("{:.4}", r.rho),
                r.i_max.to_string(),
            ];
            cells.extend(r.queue_quantiles.iter().map(|n| n.to_string()));
            if r.wait_quantiles.is_empty() {
                cells.extend(opts.wait_limits.iter().map(|_| "-".to_string()));
            } else {
                cells.extend(r.wait_quantiles.iter().map(|&q| ms(q)));
            }
            cells.extend([r.decision.label().to_string(), if r.feasible { "yes" } else { "no" }.to_string()]);
            cells
        })
        .collect();
    let total = scenario.total_intensity();
    let verdict = match best {
        Some(b) => format!(
            "maximum arrival rate {b:.3} /s ({:.1}% of the scenario's {total} /s)\n",
            100.0 * b / total
        ),
        None => "no arrival rate in the sweep meets the limits\n".to_string(),
    };
    format!("{}\n{}", table(&header, &body), verdict)
}

fn write_dimension_csv(path: &Path, opts: &DimensionOptions, rows: &[SweepRow]) -> Result<(), CliError> {
    let mut header: Vec<String> = vec!["lambda_per_s".into(), "rho".into(), "i_max".into()];
    header.extend(opts.queue_limits.iter().map(|l| format!("queue_p{}", percent_label(l.p))));
    header.extend(opts.wait_limits.iter().map(|l| format!("wait_p{}_s", percent_label(l.p))));
    header.extend(["mc_max_points", "decided_by", "feasible", "refinement"].map(String::from));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(
        path,
        &header,
        rows.iter().map(|r| {
            let mut cells = vec![num(r.lambda), num(r.rho), r.i_max.to_string()];
            cells.extend(r.queue_quantiles.iter().map(|n| n.to_string()));
            if r.wait_quantiles.is_empty() {
                cells.extend(opts.wait_limits.iter().map(|_| String::new()));
            } else {
                cells.extend(r.wait_quantiles.iter().map(|&q| num(q)));
            }
            cells.extend([
                r.mc_max_points.to_string(),
                r.decision.label().to_string(),
                r.feasible.to_string(),
                r.refinement.to_string(),
            ]);
            cells
        }),
    )
}

/// Default output directory.
pub fn default_out() -> PathBuf {
    PathBuf::from("refqueue-out")
}
