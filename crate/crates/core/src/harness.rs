//! Configuration-driven sweeps: model, trajectory, timing table, evolution at
//! every requested duration, CSV output and power-law summary.

use std::f64::consts::PI;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::ops::RangeInclusive;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    check_vanishing_derivatives, fit_power_law, predict_from_boundary, standard_bound, FitWindow,
    PredictionTime, ScalingFit,
};
use crate::error::{AdiaError, Result};
use crate::models::{reduce_search_to_2level, search_hamiltonian, tabulated_model, HamiltonianModel};
use crate::propagator::{evolve_with, EvolveOptions, InitialState, Integrator, DEFAULT_TOL};
use crate::schedule::Schedule;
use crate::spectral::{build_trajectory, gap_integral, SpectralTrajectory};
use crate::timing::{
    boundary_quantity, estimate_theta, gap_defect, optimal_times, symmetry_defect, timing_defect,
    BoundaryQuantity, Parity, TimingTable,
};

/// Column order of the sweep CSV.
pub const SWEEP_COLUMNS: [&str; 15] = [
    "model",
    "schedule",
    "m",
    "nu",
    "n",
    "parity",
    "T",
    "err_norm",
    "amp_abs",
    "amp_pred",
    "bound_eq1",
    "delta_S",
    "delta_G",
    "delta_T",
    "integrator_steps",
];

/// Environment variable consulted for the worker count when none is given.
pub const JOBS_ENV: &str = "ADIA_JOBS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ModelSpec {
    /// `search:n=<qubits>`
    Search { n_qubits: u32 },
    /// `tabulated:<path>`
    Tabulated { path: PathBuf },
}

impl FromStr for ModelSpec {
    type Err = AdiaError;

    fn from_str(text: &str) -> Result<Self> {
        let text = text.trim();
        let bad = || {
            AdiaError::Validation(format!(
                "unrecognized model '{text}' (expected search:n=<qubits> or tabulated:<path>)"
            ))
        };
        let (kind, rest) = text.split_once(':').ok_or_else(bad)?;
        match kind.trim().to_ascii_lowercase().as_str() {
            "search" => {
                let (key, value) = rest.split_once('=').ok_or_else(bad)?;
                if key.trim() != "n" {
                    return Err(bad());
                }
                Ok(ModelSpec::Search {
                    n_qubits: value.trim().parse().map_err(|_| bad())?,
                })
            }
            "tabulated" if !rest.trim().is_empty() => Ok(ModelSpec::Tabulated {
                path: PathBuf::from(rest.trim()),
            }),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelSpec::Search { n_qubits } => write!(f, "search:n={n_qubits}"),
            ModelSpec::Tabulated { path } => write!(f, "tabulated:{}", path.display()),
        }
    }
}

impl TryFrom<String> for ModelSpec {
    type Error = AdiaError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ModelSpec> for String {
    fn from(m: ModelSpec) -> String {
        m.to_string()
    }
}

/// Inclusive range of interference indices written `a..b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct NRange {
    pub start: i64,
    pub end: i64,
}

impl NRange {
    pub fn to_range(self) -> RangeInclusive<i64> {
        self.start..=self.end
    }
}

impl FromStr for NRange {
    type Err = AdiaError;

    fn from_str(text: &str) -> Result<Self> {
        let bad = || AdiaError::Validation(format!("expected a range a..b, got '{text}'"));
        let (a, b) = text.trim().split_once("..").ok_or_else(bad)?;
        let b = b.strip_prefix('=').unwrap_or(b);
        let (start, end) = (
            a.trim().parse().map_err(|_| bad())?,
            b.trim().parse().map_err(|_| bad())?,
        );
        if start > end {
            return Err(AdiaError::Validation(format!("empty range {start}..{end}")));
        }
        Ok(NRange { start, end })
    }
}

impl fmt::Display for NRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

impl TryFrom<String> for NRange {
    type Error = AdiaError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<NRange> for String {
    fn from(r: NRange) -> String {
        r.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParityFilter {
    #[default]
    All,
    Even,
    Odd,
}

impl ParityFilter {
    pub fn admits(self, n: i64) -> bool {
        match self {
            ParityFilter::All => true,
            ParityFilter::Even => Parity::of(n) == Parity::Even,
            ParityFilter::Odd => Parity::of(n) == Parity::Odd,
        }
    }
}

impl FromStr for ParityFilter {
    type Err = AdiaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "all" | "both" => Ok(ParityFilter::All),
            "even" => Ok(ParityFilter::Even),
            "odd" => Ok(ParityFilter::Odd),
            _ => Err(AdiaError::Validation(format!("unknown parity filter '{s}'"))),
        }
    }
}

fn yes() -> bool {
    true
}
fn one() -> usize {
    1
}
fn default_tol() -> f64 {
    DEFAULT_TOL
}
fn default_intervals() -> usize {
    1024
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub model: ModelSpec,
    /// Required for search models.
    #[serde(default)]
    pub schedule: Option<Schedule>,
    /// Simulate the search model in its two-dimensional coupled subspace.
    #[serde(default = "yes")]
    pub reduced: bool,
    /// Boundary order; defaults to the schedule's vanishing-derivative order.
    #[serde(default)]
    pub m: Option<u32>,
    #[serde(default = "one")]
    pub nu: usize,
    #[serde(default)]
    pub n_range: Option<NRange>,
    #[serde(default = "one")]
    pub n_step: usize,
    #[serde(default)]
    pub parity: ParityFilter,
    #[serde(default)]
    pub times: Option<Vec<f64>>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_intervals")]
    pub intervals: usize,
    #[serde(default)]
    pub integrator: Integrator,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub jobs: Option<usize>,
}

impl SweepSpec {
    pub fn new(model: ModelSpec) -> Self {
        SweepSpec {
            model,
            schedule: None,
            reduced: true,
            m: None,
            nu: 1,
            n_range: None,
            n_step: 1,
            parity: ParityFilter::All,
            times: None,
            tol: DEFAULT_TOL,
            intervals: default_intervals(),
            integrator: Integrator::default(),
            output: None,
            seed: 0,
            jobs: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| AdiaError::Validation(format!("sweep config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_range.is_some() == self.times.is_some() {
            return Err(AdiaError::Validation(
                "exactly one of n_range and times must be given".into(),
            ));
        }
        if !(self.tol > 0.0) {
            return Err(AdiaError::Validation(format!("tolerance must be positive, got {}", self.tol)));
        }
        if self.n_step == 0 {
            return Err(AdiaError::Validation("n_step must be at least 1".into()));
        }
        if self.jobs == Some(0) {
            return Err(AdiaError::Validation("jobs must be at least 1".into()));
        }
        if let Some(times) = &self.times {
            if let Some(t) = times.iter().find(|t| !(**t > 0.0) || !t.is_finite()) {
                return Err(AdiaError::Validation(format!("durations must be positive, got {t}")));
            }
        }
        if matches!(self.model, ModelSpec::Search { .. }) && self.schedule.is_none() {
            return Err(AdiaError::Validation("search models need a schedule".into()));
        }
        Ok(())
    }

    pub fn boundary_order(&self) -> u32 {
        self.m
            .unwrap_or_else(|| self.schedule.as_ref().map_or(0, |s| s.boundary_order()))
    }

    pub fn build_model(&self) -> Result<HamiltonianModel> {
        match &self.model {
            ModelSpec::Search { n_qubits } => {
                let schedule = self
                    .schedule
                    .clone()
                    .ok_or_else(|| AdiaError::Validation("search models need a schedule".into()))?;
                let full = search_hamiltonian(*n_qubits, schedule)?;
                if self.reduced {
                    reduce_search_to_2level(&full)
                } else {
                    Ok(full)
                }
            }
            ModelSpec::Tabulated { path } => tabulated_model(path),
        }
    }

    pub fn schedule_label(&self) -> String {
        match (&self.model, &self.schedule) {
            (ModelSpec::Search { .. }, Some(s)) => s.to_string(),
            _ => "tabulated".into(),
        }
    }
}

/// Everything the timing and prediction steps derive from a model once.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub model: HamiltonianModel,
    pub trajectory: SpectralTrajectory,
    pub nu: usize,
    pub m: u32,
    pub g: f64,
    pub theta: f64,
    pub boundary: BoundaryQuantity,
}

impl Prepared {
    pub fn new(model: HamiltonianModel, nu: usize, m: u32, intervals: usize) -> Result<Self> {
        let trajectory = build_trajectory(&model, intervals)?;
        let gi = gap_integral(&trajectory, nu, 1e-10)?;
        if let Some(w) = &gi.warning {
            log::warn!("{w}");
        }
        let boundary = boundary_quantity(&model, &trajectory, nu, m)?;
        let theta = estimate_theta(&boundary)?;
        Ok(Prepared {
            model,
            trajectory,
            nu,
            m,
            g: gi.value,
            theta,
            boundary,
        })
    }

    pub fn from_spec(spec: &SweepSpec) -> Result<Self> {
        Self::new(spec.build_model()?, spec.nu, spec.boundary_order(), spec.intervals)
    }

    pub fn timing_table(&self, n_range: RangeInclusive<i64>) -> Result<TimingTable> {
        Ok(optimal_times(self.g, self.theta, n_range)?.for_track(self.nu))
    }

    /// `T_n = (n pi - theta) / g`.
    pub fn time(&self, n: i64) -> f64 {
        (n as f64 * PI - self.theta) / self.g
    }

    /// Index whose optimal time lies closest to `t`.
    pub fn nearest_n(&self, t: f64) -> i64 {
        ((t * self.g + self.theta) / PI).round() as i64
    }

    pub fn delta_s(&self) -> f64 {
        symmetry_defect(&self.boundary, self.theta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub model: String,
    pub schedule: String,
    pub m: u32,
    pub nu: usize,
    /// The requested index, or the nearest one for explicit durations.
    pub n: i64,
    pub parity: Parity,
    #[serde(rename = "T")]
    pub t: f64,
    pub err_norm: f64,
    pub amp_abs: f64,
    pub amp_pred: f64,
    pub bound_eq1: f64,
    #[serde(rename = "delta_S")]
    pub delta_s: f64,
    #[serde(rename = "delta_G")]
    pub delta_g: f64,
    #[serde(rename = "delta_T")]
    pub delta_t: f64,
    pub integrator_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub model: String,
    pub schedule: String,
    pub m: u32,
    pub nu: usize,
    pub gap_integral: f64,
    pub theta: f64,
    pub min_gap: f64,
    /// The standard bound at duration `T` is this over `T`.
    pub bound_coefficient: f64,
    pub window: FitWindow,
    pub even_fit: Option<ScalingFit>,
    pub odd_fit: Option<ScalingFit>,
    pub rows: usize,
    pub elapsed_seconds: f64,
    pub output: Option<PathBuf>,
}

impl fmt::Display for SweepSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "model {} schedule {} m={} nu={}", self.model, self.schedule, self.m, self.nu)?;
        writeln!(
            f,
            "g = {:.10} theta = {:.6} min gap = {:.6} bound = {:.4}/T",
            self.gap_integral, self.theta, self.min_gap, self.bound_coefficient
        )?;
        writeln!(
            f,
            "{} rows in {:.2}s, fit window T >= {:.3}, |E| >= {:.1e}",
            self.rows, self.elapsed_seconds, self.window.t_min, self.window.floor
        )?;
        for (label, fit) in [("even", &self.even_fit), ("odd", &self.odd_fit)] {
            match fit {
                Some(fit) => writeln!(
                    f,
                    "{label}-n exponent {:.4} (rms {:.2e}, {} points)",
                    fit.exponent,
                    fit.residual_rms,
                    fit.points.len()
                )?,
                None => writeln!(f, "{label}-n exponent: not enough points")?,
            }
        }
        if let Some(path) = &self.output {
            write!(f, "wrote {}", path.display())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub summary: SweepSummary,
}

/// Worker count: explicit value, then `ADIA_JOBS`, then all cores.
pub fn resolve_jobs(jobs: Option<usize>) -> Option<usize> {
    jobs.or_else(|| {
        std::env::var(JOBS_ENV)
            .ok()
            .and_then(|v| v.trim().parse().ok())
            .filter(|&j: &usize| j > 0)
    })
}

/// Runs `f` on a pool of the requested size, or the global pool.
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match resolve_jobs(jobs) {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| AdiaError::Validation(format!("cannot start {n} workers: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

struct Point {
    n: i64,
    t: f64,
    exact_n: bool,
}

pub fn run_sweep(spec: &SweepSpec) -> Result<SweepOutcome> {
    spec.validate()?;
    let started = Instant::now();
    let prep = Prepared::from_spec(spec)?;
    let m = prep.m;
    if m > 0 {
        check_vanishing_derivatives(&prep.model, m)?;
    }

    let points: Vec<Point> = match (&spec.n_range, &spec.times) {
        (Some(range), _) => prep
            .timing_table(range.to_range())?
            .rows
            .into_iter()
            .filter(|r| (r.n - range.start) as usize % spec.n_step == 0 && spec.parity.admits(r.n))
            .map(|r| Point {
                n: r.n,
                t: r.t,
                exact_n: true,
            })
            .collect(),
        (None, Some(times)) => times
            .iter()
            .map(|&t| Point {
                n: prep.nearest_n(t),
                t,
                exact_n: false,
            })
            .filter(|p| spec.parity.admits(p.n))
            .collect(),
        (None, None) => unreachable!("validated"),
    };
    if points.is_empty() {
        return Err(AdiaError::Validation("no durations left after filtering".into()));
    }

    let bound = standard_bound(&prep.model, &prep.trajectory)?;
    let delta_s = prep.delta_s();
    let model_label = spec.model.to_string();
    let schedule_label = spec.schedule_label();
    let options = EvolveOptions {
        tol: spec.tol,
        integrator: spec.integrator,
        ..Default::default()
    };

    let rows: Vec<SweepRow> = with_jobs(spec.jobs, || {
        points
            .par_iter()
            .map(|p| -> Result<SweepRow> {
                let r = evolve_with(&prep.model, &prep.trajectory, p.t, &InitialState::Track(0), &options)
                    .map_err(|e| e.context(format!("sweep row n = {}, T = {}", p.n, p.t)))?;
                let time = if p.exact_n {
                    PredictionTime::optimal(p.n, prep.theta, prep.g)
                } else {
                    PredictionTime::at(p.t, prep.theta, prep.g)
                };
                let pred = predict_from_boundary(&prep.boundary, &time);
                Ok(SweepRow {
                    model: model_label.clone(),
                    schedule: schedule_label.clone(),
                    m,
                    nu: prep.nu,
                    n: p.n,
                    parity: Parity::of(p.n),
                    t: p.t,
                    err_norm: r.error_norm,
                    amp_abs: r.amplitude(prep.nu),
                    amp_pred: pred.two_term,
                    bound_eq1: bound / p.t,
                    delta_s,
                    delta_g: gap_defect(prep.g, prep.theta, p.n, p.t),
                    delta_t: timing_defect(prep.time(p.n), p.t),
                    integrator_steps: r.steps,
                })
            })
            .collect::<Result<Vec<_>>>()
    })??;

    let window = FitWindow::asymptotic(prep.g, spec.tol);
    let fit_parity = |parity: Parity| -> Option<ScalingFit> {
        let series: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.parity == parity)
            .map(|r| (r.t, r.amp_abs))
            .collect();
        if series.is_empty() {
            return None;
        }
        fit_power_law(&series, &window)
            .map_err(|e| log::warn!("{parity}-n fit skipped: {e}"))
            .ok()
    };
    let summary = SweepSummary {
        model: model_label,
        schedule: schedule_label,
        m,
        nu: prep.nu,
        gap_integral: prep.g,
        theta: prep.theta,
        min_gap: prep.trajectory.min_gap(prep.nu).1.abs(),
        bound_coefficient: bound,
        window,
        even_fit: fit_parity(Parity::Even),
        odd_fit: fit_parity(Parity::Odd),
        rows: rows.len(),
        elapsed_seconds: started.elapsed().as_secs_f64(),
        output: spec.output.clone(),
    };

    if let Some(path) = &spec.output {
        let file = File::create(path).map_err(|e| {
            AdiaError::Io(e).context(format!("cannot create {}", path.display()))
        })?;
        write_sweep_csv(BufWriter::new(file), &rows, &summary)?;
    }
    Ok(SweepOutcome { rows, summary })
}

/// Writes one `#` metadata line followed by the header and rows.
pub fn write_sweep_csv<W: Write>(mut out: W, rows: &[SweepRow], summary: &SweepSummary) -> Result<()> {
    let stamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    writeln!(
        out,
        "# generated_unix={stamp} g={} theta={} fit_t_min={} fit_floor={:e}",
        summary.gap_integral, summary.theta, summary.window.t_min, summary.window.floor
    )?;
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    if rows.is_empty() {
        w.write_record(SWEEP_COLUMNS)?;
    }
    w.flush()?;
    Ok(())
}
