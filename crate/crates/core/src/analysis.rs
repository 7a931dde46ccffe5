//! Analytic amplitude predictors, the standard adiabatic bound, power-law
//! fits and defect sweeps.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AdiaError, Result};
use crate::linalg::{max_abs, spectral_norm_hermitian, CMatrix};
use crate::models::{hamiltonian_derivative, HamiltonianModel};
use crate::propagator::{evolve, EvolutionResult, InitialState};
use crate::spectral::{build_trajectory, gap_integral, SpectralTrajectory, DEFAULT_DEGENERACY_TOL};
use crate::timing::{boundary_quantity, estimate_theta, BoundaryQuantity, Parity};

/// Predictor checks and fits start at `ASYMPTOTIC_FACTOR / g`.
pub const ASYMPTOTIC_FACTOR: f64 = 10.0;
/// Fits ignore amplitudes below this multiple of the integrator tolerance.
pub const FLOOR_FACTOR: f64 = 100.0;
/// Boundary derivatives below this max-norm count as vanishing.
pub const VANISHING_TOL: f64 = 1e-8;

pub fn asymptotic_start(g: f64) -> f64 {
    ASYMPTOTIC_FACTOR / g
}

/// `max_k ||H'(s_k)||_2 / min_nu (E_nu - E_0)^2`; the bound at duration `T`
/// is this coefficient over `T`.
pub fn standard_bound(model: &HamiltonianModel, traj: &SpectralTrajectory) -> Result<f64> {
    let dim = traj.dim();
    if dim < 2 {
        return Ok(0.0);
    }
    let mut best = 0.0_f64;
    for (k, &s) in traj.grid().iter().enumerate() {
        let d = hamiltonian_derivative(model, s, 1)?;
        let norm = spectral_norm_hermitian(&d.matrix)?;
        if norm == 0.0 {
            continue;
        }
        let e = traj.energies_at(k);
        let gap = (1..dim).map(|nu| (e[nu] - e[0]).abs()).fold(f64::INFINITY, f64::min);
        if gap <= DEFAULT_DEGENERACY_TOL {
            return Err(AdiaError::Degeneracy(format!(
                "transferred state is degenerate at s = {s}"
            )));
        }
        best = best.max(norm / (gap * gap));
    }
    Ok(best)
}

/// Duration at which a prediction is made. With `n` set, the interference
/// phase `theta + T g` is taken to be exactly `n pi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionTime {
    pub t: f64,
    pub theta: f64,
    pub g: f64,
    pub n: Option<i64>,
}

impl PredictionTime {
    pub fn at(t: f64, theta: f64, g: f64) -> Self {
        PredictionTime { t, theta, g, n: None }
    }

    /// `T_n = (n pi - theta) / g`.
    pub fn optimal(n: i64, theta: f64, g: f64) -> Self {
        PredictionTime {
            t: (n as f64 * PI - theta) / g,
            theta,
            g,
            n: Some(n),
        }
    }

    /// `e^{i (theta + T g)}`
    fn phase(&self) -> Complex64 {
        match self.n {
            Some(n) if Parity::of(n) == Parity::Even => Complex64::new(1.0, 0.0),
            Some(_) => Complex64::new(-1.0, 0.0),
            None => Complex64::from_polar(1.0, self.theta + self.t * self.g),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub nu: usize,
    pub m: u32,
    pub t: f64,
    /// Predicted `|E_nu|`.
    pub amplitude: f64,
    pub boundary0: f64,
    pub boundary1: f64,
    /// `|e^{-i(theta + T g)} - 1|`, in `[0, 2]`.
    pub interference_factor: f64,
    /// `|B(1) e^{i T g} - B(0)| / T^{m+1}`, valid without the boundary
    /// symmetry.
    pub two_term: f64,
}

/// Leading-order prediction from boundary quantities alone.
pub fn predict_from_boundary(bq: &BoundaryQuantity, time: &PredictionTime) -> Prediction {
    let phase = time.phase();
    let factor = (phase - 1.0).norm();
    let scale = time.t.powi(bq.m as i32 + 1);
    let rotation = Complex64::from_polar(1.0, time.theta);
    // B(1) e^{iTg} - B(0) = (B(1) - B(0) e^{i theta}) e^{iTg} + B(0) (e^{i(theta+Tg)} - 1)
    let skew = bq.value1 - bq.value0 * rotation;
    let two_term = if skew.norm() == 0.0 {
        bq.value0.norm() * factor
    } else {
        (skew * Complex64::from_polar(1.0, time.t * time.g) + bq.value0 * (phase - 1.0)).norm()
    };
    Prediction {
        nu: bq.nu,
        m: bq.m,
        t: time.t,
        amplitude: bq.value0.norm() * factor / scale,
        boundary0: bq.value0.norm(),
        boundary1: bq.value1.norm(),
        interference_factor: factor,
        two_term: two_term / scale,
    }
}

/// First-order prediction `|B(0)| |e^{-i(theta + T g)} - 1| / T`, assuming
/// the boundary symmetry; `two_term` holds the form without that assumption.
pub fn predict_amplitude_m0(
    model: &HamiltonianModel,
    traj: &SpectralTrajectory,
    nu: usize,
    time: &PredictionTime,
) -> Result<Prediction> {
    let bq = boundary_quantity(model, traj, nu, 0)?;
    Ok(predict_from_boundary(&bq, time))
}

/// `|B(1) e^{i T g} - B(0)| / T^{m+1}` for a Hamiltonian whose first `m`
/// derivatives vanish at both ends.
pub fn predict_amplitude_general(
    model: &HamiltonianModel,
    traj: &SpectralTrajectory,
    nu: usize,
    m: u32,
    time: &PredictionTime,
) -> Result<Prediction> {
    check_vanishing_derivatives(model, m)?;
    let bq = boundary_quantity(model, traj, nu, m)?;
    let mut p = predict_from_boundary(&bq, time);
    p.amplitude = p.two_term;
    Ok(p)
}

pub fn check_vanishing_derivatives(model: &HamiltonianModel, m: u32) -> Result<()> {
    for p in 1..=m {
        for s in [0.0, 1.0] {
            let d = hamiltonian_derivative(model, s, p)?;
            let size = max_abs(&d.matrix);
            if size > VANISHING_TOL {
                return Err(AdiaError::Precondition(format!(
                    "derivative of order {p} does not vanish at s = {s} (max entry {size:.3e})"
                )));
            }
        }
    }
    Ok(())
}

/// `(nu, E_nu)` for every excited track.
pub fn transition_amplitudes(
    result: &EvolutionResult,
    traj: &SpectralTrajectory,
) -> Result<Vec<(usize, Complex64)>> {
    if result.overlaps.len() != traj.dim() {
        return Err(AdiaError::Validation(format!(
            "result has {} overlaps but the trajectory has {} tracks",
            result.overlaps.len(),
            traj.dim()
        )));
    }
    Ok(result.error_components())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitWindow {
    pub t_min: f64,
    pub t_max: f64,
    /// Amplitudes below this are integrator noise.
    pub floor: f64,
}

impl Default for FitWindow {
    fn default() -> Self {
        FitWindow {
            t_min: 0.0,
            t_max: f64::INFINITY,
            floor: 0.0,
        }
    }
}

impl FitWindow {
    /// `T >= 10 / g` and `|E| >= 100 tol`.
    pub fn asymptotic(g: f64, tol: f64) -> Self {
        FitWindow {
            t_min: asymptotic_start(g),
            t_max: f64::INFINITY,
            floor: FLOOR_FACTOR * tol,
        }
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t_min && t <= self.t_max
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    /// Slope of `log |E|` against `log T`.
    pub exponent: f64,
    pub intercept: f64,
    pub residual_rms: f64,
    pub window: FitWindow,
    /// The `(T, |E|)` pairs that entered the fit.
    pub points: Vec<(f64, f64)>,
    /// Exact zeros inside the window that were skipped.
    pub dropped_zeros: usize,
}

impl ScalingFit {
    pub fn eval(&self, t: f64) -> f64 {
        (self.intercept + self.exponent * t.ln()).exp()
    }
}

/// Least-squares line through `(log T, log |E|)` for the points inside the
/// window and above its floor.
pub fn fit_power_law(series: &[(f64, f64)], window: &FitWindow) -> Result<ScalingFit> {
    let mut points = Vec::new();
    let mut dropped_zeros = 0;
    for &(t, e) in series {
        if !window.contains(t) {
            continue;
        }
        if e == 0.0 {
            dropped_zeros += 1;
            continue;
        }
        if !(t > 0.0) || !(e > 0.0) || !e.is_finite() {
            return Err(AdiaError::Validation(format!("cannot fit point ({t}, {e})")));
        }
        if e >= window.floor {
            points.push((t, e));
        }
    }
    if dropped_zeros > 0 {
        log::warn!("dropped {dropped_zeros} exact zeros from the power-law fit");
    }
    if points.len() < 5 {
        return Err(AdiaError::InsufficientData(format!(
            "power-law fit needs at least 5 points in the window, have {}",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let (sx, sy) = points
        .iter()
        .fold((0.0, 0.0), |(a, b), &(t, e)| (a + t.ln(), b + e.ln()));
    let (mx, my) = (sx / n, sy / n);
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(t, e) in &points {
        let dx = t.ln() - mx;
        sxy += dx * (e.ln() - my);
        sxx += dx * dx;
    }
    if sxx == 0.0 {
        return Err(AdiaError::InsufficientData("all fit points share one duration".into()));
    }
    let exponent = sxy / sxx;
    let intercept = my - exponent * mx;
    let residual_rms = (points
        .iter()
        .map(|&(t, e)| (e.ln() - intercept - exponent * t.ln()).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(ScalingFit {
        exponent,
        intercept,
        residual_rms,
        window: *window,
        points,
        dropped_zeros,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum DefectKind {
    /// Breaks `B(1) = B(0) e^{i theta}` by perturbing `H^{(m+1)}(1)`.
    Symmetry,
    /// Times computed from a mis-stated gap integral.
    Gap,
    /// Evolution runs for `T_n + delta`.
    Timing,
    /// Adds `delta D` to `H^{(order)}` at both ends.
    Derivative { order: u32 },
}

impl fmt::Display for DefectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DefectKind::Symmetry => f.write_str("symmetry"),
            DefectKind::Gap => f.write_str("gap"),
            DefectKind::Timing => f.write_str("timing"),
            DefectKind::Derivative { order } => write!(f, "derivative({order})"),
        }
    }
}

impl FromStr for DefectKind {
    type Err = AdiaError;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        match t.as_str() {
            "symmetry" => return Ok(DefectKind::Symmetry),
            "gap" => return Ok(DefectKind::Gap),
            "timing" => return Ok(DefectKind::Timing),
            _ => {}
        }
        let order = t
            .strip_prefix("derivative")
            .map(|rest| rest.trim_start_matches([':', '=', '(', ' ']).trim_end_matches(')'))
            .and_then(|o| o.trim_start_matches("p=").parse::<u32>().ok());
        match order {
            Some(order) if order >= 1 => Ok(DefectKind::Derivative { order }),
            _ => Err(AdiaError::Validation(format!(
                "unknown defect type '{s}', expected symmetry, gap, timing or derivative(p)"
            ))),
        }
    }
}

impl TryFrom<String> for DefectKind {
    type Error = AdiaError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<DefectKind> for String {
    fn from(d: DefectKind) -> String {
        d.to_string()
    }
}

fn default_nu() -> usize {
    1
}
fn default_tol() -> f64 {
    crate::propagator::DEFAULT_TOL
}
fn default_intervals() -> usize {
    1024
}

/// A defect of size `scale * T^{-alpha}` injected at each `T_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToleranceSpec {
    pub defect: DefectKind,
    pub scale: f64,
    pub alpha: f64,
    #[serde(default = "default_nu")]
    pub nu: usize,
    pub n_values: Vec<i64>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_intervals")]
    pub intervals: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToleranceRow {
    pub n: i64,
    /// Nominal `T_n`.
    pub t: f64,
    /// Duration actually evolved.
    pub t_actual: f64,
    pub defect_size: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToleranceReport {
    pub defect: DefectKind,
    pub m: u32,
    pub alpha: f64,
    pub rows: Vec<ToleranceRow>,
    /// Even-n fit.
    pub fit: ScalingFit,
    /// Whether the even-n exponent stays at `-(m + 2)` within 0.2.
    pub survives: bool,
}

/// Random Hermitian direction with unit spectral norm.
pub fn random_hermitian(dim: usize, seed: u64) -> Result<CMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d = CMatrix::zeros(dim, dim);
    for i in 0..dim {
        d[(i, i)] = Complex64::from(rng.gen_range(-1.0..1.0));
        for j in i + 1..dim {
            let z = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            d[(i, j)] = z;
            d[(j, i)] = z.conj();
        }
    }
    let norm = spectral_norm_hermitian(&d)?;
    Ok(d.unscale(norm))
}

/// Evolves the model at `T_n` with the requested defect and fits the even-n
/// amplitudes. Eigenbases, `g` and `theta` always come from the unperturbed
/// model.
pub fn tolerance_sweep(model: &HamiltonianModel, m: u32, spec: &ToleranceSpec) -> Result<ToleranceReport> {
    if spec.n_values.is_empty() {
        return Err(AdiaError::Validation("tolerance sweep needs at least one n".into()));
    }
    if !(spec.scale.is_finite() && spec.alpha.is_finite()) {
        return Err(AdiaError::Validation("defect scale and exponent must be finite".into()));
    }
    if let DefectKind::Derivative { order } = spec.defect {
        if order == 0 || order > m.max(1) {
            return Err(AdiaError::Validation(format!(
                "derivative defect order must lie in 1..={}, got {order}",
                m.max(1)
            )));
        }
    }
    let traj = build_trajectory(model, spec.intervals)?;
    let g = gap_integral(&traj, spec.nu, 1e-10)?.value;
    let theta = estimate_theta(&boundary_quantity(model, &traj, spec.nu, m)?)?;
    let direction = Arc::new(random_hermitian(model.dim(), spec.seed)?);

    let rows: Vec<ToleranceRow> = spec
        .n_values
        .par_iter()
        .map(|&n| -> Result<ToleranceRow> {
            let t = (n as f64 * PI - theta) / g;
            if !(t > 0.0) {
                return Err(AdiaError::Validation(format!("T_{n} = {t} is not positive")));
            }
            let delta = spec.scale * t.powf(-spec.alpha);
            let (t_actual, perturbed) = match spec.defect {
                DefectKind::Timing => (t + delta, None),
                DefectKind::Gap => ((n as f64 * PI - theta) / (g + delta), None),
                DefectKind::Derivative { order } => {
                    (t, Some(boundary_perturbation(model, &direction, delta, order, order)))
                }
                DefectKind::Symmetry => (
                    t,
                    Some(boundary_perturbation(model, &direction, delta, m + 2, m + 1)),
                ),
            };
            let used = perturbed.as_ref().unwrap_or(model);
            let r = evolve(used, &traj, t_actual, &InitialState::Track(0), spec.tol)
                .map_err(|e| e.context(format!("defect sweep at n = {n}")))?;
            Ok(ToleranceRow {
                n,
                t,
                t_actual,
                defect_size: delta,
                amplitude: r.amplitude(spec.nu),
            })
        })
        .collect::<Result<_>>()?;

    let even: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| Parity::of(r.n) == Parity::Even)
        .map(|r| (r.t, r.amplitude))
        .collect();
    let fit = fit_power_law(&even, &FitWindow::asymptotic(g, spec.tol))?;
    let survives = fit.exponent <= -(f64::from(m) + 2.0) + 0.2;
    Ok(ToleranceReport {
        defect: spec.defect,
        m,
        alpha: spec.alpha,
        rows,
        fit,
        survives,
    })
}

/// `H(s) + delta w(s) D` with `w = s^a (1 - s)^b / max(a, b)!`.
fn boundary_perturbation(
    model: &HamiltonianModel,
    direction: &Arc<CMatrix>,
    delta: f64,
    a: u32,
    b: u32,
) -> HamiltonianModel {
    let base = model.clone();
    let d = Arc::clone(direction);
    let norm = (1..=a.max(b)).map(f64::from).product::<f64>();
    HamiltonianModel::new(
        model.dim(),
        format!("{} + defect", model.label()),
        Arc::new(move |s, out: &mut CMatrix| {
            base.h_into(s, out)?;
            let w = delta * s.powi(a as i32) * (1.0 - s).powi(b as i32) / norm;
            *out += &*d * Complex64::from(w);
            Ok(())
        }),
    )
    .with_transferred_index(model.transferred_index())
}
