//! When to stop the evolution: boundary quantities, the boundary phase
//! `theta`, the interference-optimal durations `T_n = (n pi - theta) / g`,
//! the defect metrics and beat-frequency refinement of `g`.
//!
//! Phase convention: with `B(s) = <nu|H^{(m+1)}|0> / (E_nu - E_0)^{m+2}` in
//! the parallel-transport gauge, the leading transition amplitude is
//! proportional to `B(1) e^{i T g} - B(0)`. Writing `B(1) = B(0) e^{i theta}`
//! makes it vanish exactly when `theta + T g` is an even multiple of `pi`,
//! which is what `T_n` encodes.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::ops::RangeInclusive;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{AdiaError, Result};
use crate::models::HamiltonianModel;
use crate::spectral::{transition_element, SpectralTrajectory, DEFAULT_DEGENERACY_TOL};

/// Boundary values below this magnitude carry no phase.
pub const PHASE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryQuantity {
    pub nu: usize,
    pub m: u32,
    pub value0: Complex64,
    pub value1: Complex64,
}

/// `<nu|H^{(m+1)}|0> / (E_nu - E_0)^{m+2}` at `s = 0` and `s = 1`.
pub fn boundary_quantity(
    model: &HamiltonianModel,
    traj: &SpectralTrajectory,
    nu: usize,
    m: u32,
) -> Result<BoundaryQuantity> {
    if nu == 0 || nu >= traj.dim() {
        return Err(AdiaError::Validation(format!(
            "boundary quantity needs an excited track in 1..{}, got {nu}",
            traj.dim()
        )));
    }
    let at = |k: usize| -> Result<Complex64> {
        let gap = traj.energy(k, nu) - traj.energy(k, 0);
        if gap.abs() <= DEFAULT_DEGENERACY_TOL {
            return Err(AdiaError::Degeneracy(format!(
                "track {nu} is degenerate with the transferred state at s = {}",
                traj.grid()[k]
            )));
        }
        Ok(transition_element(model, traj, nu, k, m + 1)? / gap.powi(m as i32 + 2))
    };
    Ok(BoundaryQuantity {
        nu,
        m,
        value0: at(0)?,
        value1: at(traj.intervals())?,
    })
}

/// `theta = arg(B(1) / B(0))` in `(-pi, pi]`.
pub fn estimate_theta(bq: &BoundaryQuantity) -> Result<f64> {
    if bq.value0.norm() <= PHASE_TOL || bq.value1.norm() <= PHASE_TOL {
        return Err(AdiaError::UndefinedPhase(format!(
            "boundary quantity of order {} for track {} vanishes (|B(0)| = {:.3e}, |B(1)| = {:.3e})",
            bq.m,
            bq.nu,
            bq.value0.norm(),
            bq.value1.norm()
        )));
    }
    let theta = (bq.value1 / bq.value0).arg();
    Ok(if theta <= -PI { PI } else { theta })
}

/// `|B(1) - B(0) e^{i theta}|`
pub fn symmetry_defect(bq: &BoundaryQuantity, theta: f64) -> f64 {
    (bq.value1 - bq.value0 * Complex64::from_polar(1.0, theta)).norm()
}

/// `|g_true - (n pi - theta) / T|`
pub fn gap_defect(g_true: f64, theta: f64, n: i64, t: f64) -> f64 {
    (g_true - (n as f64 * PI - theta) / t).abs()
}

/// `|T_ideal - T_actual|`
pub fn timing_defect(t_ideal: f64, t_actual: f64) -> f64 {
    (t_ideal - t_actual).abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn of(n: i64) -> Self {
        if n.rem_euclid(2) == 0 {
            Parity::Even
        } else {
            Parity::Odd
        }
    }
}

impl fmt::Display for Parity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Parity::Even => "even",
            Parity::Odd => "odd",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingRow {
    pub n: i64,
    pub t: f64,
    pub parity: Parity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingTable {
    pub nu: usize,
    pub theta: f64,
    pub gap_integral: f64,
    pub rows: Vec<TimingRow>,
}

/// `T_n = (n pi - theta) / g` for every `n` in range; rows with `T <= 0`
/// are skipped.
pub fn optimal_times(g: f64, theta: f64, n_range: RangeInclusive<i64>) -> Result<TimingTable> {
    if !(g > 0.0) || !g.is_finite() {
        return Err(AdiaError::Validation(format!("gap integral must be positive, got {g}")));
    }
    let mut rows = Vec::new();
    for n in n_range {
        let t = (n as f64 * PI - theta) / g;
        if t > 0.0 {
            rows.push(TimingRow {
                n,
                t,
                parity: Parity::of(n),
            });
        } else {
            log::warn!("skipping n = {n}: T = {t} is not positive");
        }
    }
    Ok(TimingTable {
        nu: 1,
        theta,
        gap_integral: g,
        rows,
    })
}

impl TimingTable {
    pub fn for_track(mut self, nu: usize) -> Self {
        self.nu = nu;
        self
    }

    pub fn time(&self, n: i64) -> f64 {
        (n as f64 * PI - self.theta) / self.gap_integral
    }

    /// CSV with columns `nu,n,parity,T,theta,gap_integral,delta_S`.
    pub fn write_csv<W: Write>(&self, out: W, delta_s: f64) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["nu", "n", "parity", "T", "theta", "gap_integral", "delta_S"])?;
        for row in &self.rows {
            w.write_record([
                self.nu.to_string(),
                row.n.to_string(),
                row.parity.to_string(),
                row.t.to_string(),
                self.theta.to_string(),
                self.gap_integral.to_string(),
                delta_s.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeatRefinement {
    pub gap_integral: f64,
    /// `T_n` for the requested `n` with the corrected gap integral.
    pub time: f64,
    /// `g_corrected / g_input`.
    pub factor: f64,
    /// Cusp spacing in units of `n`.
    pub beat_period: Option<f64>,
    pub cusps: Vec<f64>,
    /// Even-n amplitudes are already suppressed; nothing to correct.
    pub converged: bool,
}

/// Corrects a mis-stated gap integral from the beat pattern of the even-n
/// amplitudes.
///
/// `series` maps `n` to `|E_nu|` measured at `T_n` computed with the trial
/// gap integral `g`. A relative error `delta` in `g` makes the even-n
/// interference factor `2 |sin(delta (n pi - theta) / 2)|`, whose zeros (the
/// cusps) are `2 / delta` apart in `n`. The sign of the correction is chosen
/// by `probe`, which returns `|E_nu|` at a given duration: both candidates are
/// evaluated at the even `n` of largest amplitude and the smaller one wins.
pub fn refine_time_by_beats<F>(
    series: &BTreeMap<i64, f64>,
    g: f64,
    theta: f64,
    n_target: i64,
    mut probe: F,
) -> Result<BeatRefinement>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(g > 0.0) {
        return Err(AdiaError::Validation(format!("gap integral must be positive, got {g}")));
    }
    let time_for = |g: f64, n: i64| (n as f64 * PI - theta) / g;
    let even: Vec<(i64, f64)> = series
        .iter()
        .filter(|(n, _)| Parity::of(**n) == Parity::Even)
        .map(|(&n, &a)| (n, a))
        .collect();
    let max_odd = series
        .iter()
        .filter(|(n, _)| Parity::of(**n) == Parity::Odd)
        .map(|(_, &a)| a)
        .fold(None, |acc: Option<f64>, a| Some(acc.map_or(a, |x| x.max(a))));
    let max_even = even.iter().map(|&(_, a)| a).fold(0.0_f64, f64::max);

    let cusps = find_cusps(&even);
    if cusps.is_empty() {
        let suppressed = match max_odd {
            Some(odd) => max_even <= 1e-3 * odd,
            None => max_even <= 1e-12,
        };
        if suppressed {
            return Ok(BeatRefinement {
                gap_integral: g,
                time: time_for(g, n_target),
                factor: 1.0,
                beat_period: None,
                cusps,
                converged: true,
            });
        }
        return Err(AdiaError::InsufficientData(
            "no beat cusps found in the even-n amplitudes".into(),
        ));
    }
    if cusps.len() < 2 {
        return Err(AdiaError::InsufficientData(format!(
            "need at least two beat cusps, found one at n = {:.1}",
            cusps[0]
        )));
    }
    let period = (cusps[cusps.len() - 1] - cusps[0]) / (cusps.len() - 1) as f64;
    let eps = 2.0 / period;

    let (n_probe, _) = even
        .iter()
        .copied()
        .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
        .expect("cusps imply data");
    let up = g * (1.0 + eps);
    let down = g * (1.0 - eps);
    let a_up = probe(time_for(up, n_probe))?;
    let a_down = probe(time_for(down, n_probe))?;
    let corrected = if a_up <= a_down { up } else { down };
    Ok(BeatRefinement {
        gap_integral: corrected,
        time: time_for(corrected, n_target),
        factor: corrected / g,
        beat_period: Some(period),
        cusps,
        converged: false,
    })
}

/// Strict local minima at least three times below the median, located to
/// sub-sample precision from the V shape of `|sin|` near its zero.
fn find_cusps(series: &[(i64, f64)]) -> Vec<f64> {
    if series.len() < 3 {
        return Vec::new();
    }
    let mut sorted: Vec<f64> = series.iter().map(|p| p.1).collect();
    sorted.sort_by(f64::total_cmp);
    let median = if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
    };
    let mut out = Vec::new();
    for i in 1..series.len() - 1 {
        let (lo, mid, hi) = (series[i - 1], series[i], series[i + 1]);
        if mid.1 < lo.1 && mid.1 < hi.1 && mid.1 < median / 3.0 {
            let step = 0.5 * ((hi.0 - lo.0) as f64);
            let shift = step * (lo.1 - hi.1) / (lo.1 + hi.1);
            out.push(mid.0 as f64 + shift);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bq(v0: Complex64, v1: Complex64) -> BoundaryQuantity {
        BoundaryQuantity {
            nu: 1,
            m: 0,
            value0: v0,
            value1: v1,
        }
    }

    #[test]
    fn theta_examples() {
        let one = Complex64::from(1.0);
        let v1 = Complex64::new(0.3, 0.4);
        let v0 = v1 * Complex64::from_polar(1.0, -PI / 2.0);
        assert!((estimate_theta(&bq(v0, v1)).unwrap() - PI / 2.0).abs() < 1e-15);
        assert_eq!(estimate_theta(&bq(one, one)).unwrap(), 0.0);
        assert_eq!(estimate_theta(&bq(one, -one)).unwrap(), PI);
        assert!(matches!(
            estimate_theta(&bq(Complex64::from(0.0), one)),
            Err(AdiaError::UndefinedPhase(_))
        ));
    }

    #[test]
    fn symmetry_defect_examples() {
        let one = Complex64::from(1.0);
        assert!((symmetry_defect(&bq(one, one), PI) - 2.0).abs() < 1e-15);
        assert_eq!(symmetry_defect(&bq(one, one), 0.0), 0.0);
        let v1 = Complex64::new(0.3, 0.4);
        let v0 = v1 * Complex64::from_polar(1.0, -0.7);
        let theta = estimate_theta(&bq(v0, v1)).unwrap();
        assert!(symmetry_defect(&bq(v0, v1), theta) < 1e-15);
    }

    #[test]
    fn optimal_time_arithmetic() {
        let table = optimal_times(0.5, 0.0, 0..=3).unwrap();
        assert_eq!(table.rows.len(), 3);
        assert!((table.rows[1].t - 4.0 * PI).abs() < 1e-12);
        assert_eq!(table.rows[1].parity, Parity::Even);
        assert!((table.rows[2].t - 6.0 * PI).abs() < 1e-12);
        assert_eq!(table.rows[2].parity, Parity::Odd);
        assert!(optimal_times(0.0, 0.0, 1..=2).is_err());
    }

    #[test]
    fn defects() {
        assert_eq!(gap_defect(0.5, 0.0, 2, 4.0 * PI), 0.0);
        assert!((gap_defect(0.5, 0.0, 2, 2.0 * PI / 0.501) - 0.001).abs() < 1e-12);
        assert_eq!(timing_defect(3.0, 3.0), 0.0);
    }

    #[test]
    fn single_cusp_is_insufficient() {
        let series: BTreeMap<i64, f64> = (1..=20)
            .map(|k| (2 * k, ((2 * k) as f64 - 20.3).abs() + 0.01))
            .collect();
        let r = refine_time_by_beats(&series, 1.0, 0.0, 10, |_| Ok(0.0));
        assert!(matches!(r, Err(AdiaError::InsufficientData(_))));
    }

    #[test]
    fn cusp_location_is_subsample() {
        let series: Vec<(i64, f64)> = (0..50).map(|k| (2 * k, ((2 * k) as f64 - 37.3).abs())).collect();
        let cusps = find_cusps(&series);
        assert_eq!(cusps.len(), 1);
        assert!((cusps[0] - 37.3).abs() < 1e-12);
    }
}
