//! Gauge-fixed instantaneous eigensystems along `s`, gap integrals and the
//! nonadiabatic couplings `<nu|H'|mu> / (E_nu - E_mu)`.
//!
//! Tracks are followed by overlap, not by energy order. Eigenvalues that
//! agree to round-off are grouped into clusters and each cluster's basis is
//! rebuilt from the projections of the previous vectors, so a state that
//! enters or leaves a degenerate manifold keeps its identity. The basis on
//! degenerate manifolds at `s = 0` is resolved by a backward sweep from
//! `s = 1` before the forward sweep that builds the stored tracks.

use std::io::Write;
use std::ops::Range;

use num_complex::Complex64;

use crate::error::{AdiaError, PrecisionWarning, Result};
use crate::linalg::{diagonalize, inner, CMatrix, CVector, Eigensystem, ZERO};
use crate::models::{hamiltonian_derivative, HamiltonianModel};

pub const MIN_INTERVALS: usize = 16;
pub const DEFAULT_DEGENERACY_TOL: f64 = 1e-12;

/// Couplings below this count as forbidden transitions.
const COUPLING_TOL: f64 = 1e-10;
/// Relative width of an eigenvalue cluster.
const CLUSTER_TOL: f64 = 1e-11;
/// Adjacent-point overlap below which the grid is too coarse to follow a
/// nondegenerate state.
const MIN_OVERLAP: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryOptions {
    pub degeneracy_tol: f64,
}

impl Default for TrajectoryOptions {
    fn default() -> Self {
        TrajectoryOptions {
            degeneracy_tol: DEFAULT_DEGENERACY_TOL,
        }
    }
}

/// Instantaneous eigensystem on a uniform grid, one column per track.
/// Track 0 is the transferred state.
#[derive(Debug, Clone)]
pub struct SpectralTrajectory {
    grid: Vec<f64>,
    energies: Vec<Vec<f64>>,
    vectors: Vec<CMatrix>,
}

impl SpectralTrajectory {
    /// Builds tracks from raw eigensystems (any phases, any basis within
    /// degenerate eigenspaces) at the points of a uniform grid on `[0, 1]`.
    /// `transferred` indexes the ascending spectrum at `s = 0`.
    pub fn from_raw(grid: Vec<f64>, raw: Vec<Eigensystem>, transferred: usize) -> Result<Self> {
        if grid.len() != raw.len() || grid.len() < 2 {
            return Err(AdiaError::Validation(format!(
                "need matching grid and eigensystems with at least two points (got {} and {})",
                grid.len(),
                raw.len()
            )));
        }
        let dim = raw[0].dim();
        if raw.iter().any(|e| e.dim() != dim) {
            return Err(AdiaError::Validation("eigensystems differ in dimension".into()));
        }
        if transferred >= dim {
            return Err(AdiaError::Validation(format!(
                "transferred index {transferred} out of range for dimension {dim}"
            )));
        }
        let last = raw.len() - 1;
        let clusters: Vec<Vec<Range<usize>>> = raw.iter().map(|e| clusters_of(&e.values)).collect();

        // Backward sweep only fixes the basis inside degenerate manifolds at s = 0.
        let mut basis = raw[last].vectors.clone();
        for k in (0..last).rev() {
            basis = advance(&basis, &raw[k], &clusters[k])?.vectors;
        }
        fix_initial_phases(&mut basis);

        let start = assign(&basis, &raw[0], &clusters[0]);
        let cluster_of_transferred = clusters[0]
            .iter()
            .position(|c| c.contains(&transferred))
            .expect("clusters cover the spectrum");
        if clusters[0][cluster_of_transferred].len() != 1 {
            return Err(AdiaError::Degeneracy(format!(
                "transferred state {transferred} is degenerate at s = 0"
            )));
        }

        let mut tracks = vec![basis];
        let mut weights = vec![start.weights];
        let mut label_cluster = vec![start.cluster];
        for k in 1..=last {
            let step = advance(&tracks[k - 1], &raw[k], &clusters[k])?;
            for label in 0..dim {
                let was_single = clusters[k - 1][label_cluster[k - 1][label]].len() == 1;
                let is_single = clusters[k][step.cluster[label]].len() == 1;
                if was_single && is_single && step.overlap[label] < MIN_OVERLAP {
                    return Err(AdiaError::Numeric(format!(
                        "eigenvector overlap {:.3} between s = {} and s = {} is too small to \
                         follow the state; refine the grid",
                        step.overlap[label],
                        grid[k - 1],
                        grid[k]
                    )));
                }
            }
            tracks.push(step.vectors);
            weights.push(step.weights);
            label_cluster.push(step.cluster);
        }

        // Track energies as Rayleigh quotients in the local eigenbasis.
        let energy = |k: usize, label: usize| -> f64 {
            weights[k][label]
                .iter()
                .map(|&(j, w)| w * raw[k].values[j])
                .sum::<f64>()
        };

        // Transferred first, then by cluster at s = 0, then by mean energy.
        let transferred_label = (0..dim)
            .find(|&l| label_cluster[0][l] == cluster_of_transferred)
            .expect("one label per cluster slot");
        let mean: Vec<f64> = (0..dim)
            .map(|l| (0..=last).map(|k| energy(k, l)).sum::<f64>() / (last + 1) as f64)
            .collect();
        let mut order: Vec<usize> = (0..dim).filter(|&l| l != transferred_label).collect();
        order.sort_by(|&a, &b| {
            label_cluster[0][a]
                .cmp(&label_cluster[0][b])
                .then(mean[a].total_cmp(&mean[b]))
                .then(a.cmp(&b))
        });
        order.insert(0, transferred_label);

        let energies = (0..=last)
            .map(|k| order.iter().map(|&l| energy(k, l)).collect())
            .collect();
        let vectors = tracks
            .iter()
            .map(|m| CMatrix::from_fn(dim, dim, |row, col| m[(row, order[col])]))
            .collect();
        Ok(SpectralTrajectory {
            grid,
            energies,
            vectors,
        })
    }

    pub fn dim(&self) -> usize {
        self.energies[0].len()
    }

    /// Number of grid intervals `K`.
    pub fn intervals(&self) -> usize {
        self.grid.len() - 1
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn energy(&self, k: usize, nu: usize) -> f64 {
        self.energies[k][nu]
    }

    pub fn energies_at(&self, k: usize) -> &[f64] {
        &self.energies[k]
    }

    pub fn vectors_at(&self, k: usize) -> &CMatrix {
        &self.vectors[k]
    }

    pub fn vector(&self, k: usize, nu: usize) -> CVector {
        self.vectors[k].column(nu).into_owned()
    }

    /// `E_nu - E_0` along the grid.
    pub fn gap_series(&self, nu: usize) -> Vec<f64> {
        self.energies.iter().map(|e| e[nu] - e[0]).collect()
    }

    /// `(s, gap)` at the grid point where `|E_nu - E_0|` is smallest.
    pub fn min_gap(&self, nu: usize) -> (f64, f64) {
        self.gap_series(nu)
            .into_iter()
            .enumerate()
            .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(k, g)| (self.grid[k], g))
            .expect("non-empty grid")
    }

    /// Index of the grid point equal to `s`.
    pub fn grid_index(&self, s: f64) -> Result<usize> {
        let k = (s * self.intervals() as f64).round();
        if (0.0..=self.intervals() as f64).contains(&k) && (self.grid[k as usize] - s).abs() <= 1e-12 {
            Ok(k as usize)
        } else {
            Err(AdiaError::Domain(format!("s = {s} is not a grid point")))
        }
    }

    /// Cumulative `int_0^{s_k} (E_nu - E_0) ds`, exact for quadratics on each
    /// interval.
    pub fn partial_gap_integral(&self, nu: usize) -> Vec<f64> {
        let f = self.gap_series(nu);
        let h = self.grid[1] - self.grid[0];
        let n = f.len() - 1;
        let mut acc = vec![0.0; n + 1];
        for k in 0..n {
            let piece = if n == 1 {
                0.5 * h * (f[0] + f[1])
            } else if k + 2 <= n {
                h * (5.0 * f[k] + 8.0 * f[k + 1] - f[k + 2]) / 12.0
            } else {
                h * (-f[k - 1] + 8.0 * f[k] + 5.0 * f[k + 1]) / 12.0
            };
            acc[k + 1] = acc[k] + piece;
        }
        acc
    }

    /// CSV with columns `s,E_0,...,E_{N-1},gap_integral_partial`, the last
    /// one for track `nu`.
    pub fn write_csv<W: Write>(&self, out: W, nu: usize) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["s".to_string()];
        header.extend((0..self.dim()).map(|i| format!("E_{i}")));
        header.push("gap_integral_partial".into());
        w.write_record(&header)?;
        let partial = self.partial_gap_integral(nu);
        for (k, &s) in self.grid.iter().enumerate() {
            let mut row = vec![s.to_string()];
            row.extend(self.energies[k].iter().map(|e| e.to_string()));
            row.push(partial[k].to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

struct Step {
    vectors: CMatrix,
    /// `|<prev_l|new_l>|` per label.
    overlap: Vec<f64>,
    /// Cluster index per label.
    cluster: Vec<usize>,
    /// Per label, `(eigen index, weight)` of the new vector in the eigenbasis.
    weights: Vec<Vec<(usize, f64)>>,
}

struct Assignment {
    cluster: Vec<usize>,
    weights: Vec<Vec<(usize, f64)>>,
}

fn clusters_of(values: &[f64]) -> Vec<Range<usize>> {
    let scale = values.iter().fold(1.0_f64, |a, e| a.max(e.abs()));
    let tol = CLUSTER_TOL * scale;
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=values.len() {
        if i == values.len() || values[i] - values[i - 1] > tol {
            out.push(start..i);
            start = i;
        }
    }
    out
}

/// Greedy assignment of labels to clusters by projection weight, filling each
/// cluster up to its dimension.
fn assign_labels(coeff: &CMatrix, clusters: &[Range<usize>]) -> Vec<usize> {
    let dim = coeff.ncols();
    let mut pairs = Vec::with_capacity(dim * clusters.len());
    for label in 0..dim {
        for (c, range) in clusters.iter().enumerate() {
            let w: f64 = range.clone().map(|j| coeff[(j, label)].norm_sqr()).sum();
            pairs.push((w, label, c));
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut cluster_of = vec![usize::MAX; dim];
    let mut free: Vec<usize> = clusters.iter().map(|r| r.len()).collect();
    for (_, label, c) in pairs {
        if cluster_of[label] == usize::MAX && free[c] > 0 {
            cluster_of[label] = c;
            free[c] -= 1;
        }
    }
    cluster_of
}

fn assign(prev: &CMatrix, eig: &Eigensystem, clusters: &[Range<usize>]) -> Assignment {
    let coeff = eig.vectors.adjoint() * prev;
    let cluster = assign_labels(&coeff, clusters);
    let weights = (0..prev.ncols())
        .map(|l| {
            clusters[cluster[l]]
                .clone()
                .map(|j| (j, coeff[(j, l)].norm_sqr()))
                .collect()
        })
        .collect();
    Assignment { cluster, weights }
}

/// Carries the vectors `prev` onto the eigenspaces of `eig`.
fn advance(prev: &CMatrix, eig: &Eigensystem, clusters: &[Range<usize>]) -> Result<Step> {
    let dim = prev.ncols();
    // coeff[(j, l)] = <e_j | prev_l>
    let coeff = eig.vectors.adjoint() * prev;
    let cluster = assign_labels(&coeff, clusters);

    let mut new_coeff = CMatrix::from_element(dim, dim, ZERO);
    for (c, range) in clusters.iter().enumerate() {
        let mut labels: Vec<usize> = (0..dim).filter(|&l| cluster[l] == c).collect();
        let weight = |l: usize| -> f64 { range.clone().map(|j| coeff[(j, l)].norm_sqr()).sum() };
        labels.sort_by(|&a, &b| weight(b).total_cmp(&weight(a)).then(a.cmp(&b)));

        // Gram-Schmidt on the projected coefficients within the cluster.
        let d = range.len();
        let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(d);
        for &l in &labels {
            let mut v: Vec<Complex64> = range.clone().map(|j| coeff[(j, l)]).collect();
            if !orthonormalize(&mut v, &basis) {
                // Projection lies in the span already built: complete the
                // basis deterministically.
                for unit in 0..d {
                    let mut e = vec![ZERO; d];
                    e[unit] = Complex64::from(1.0);
                    if orthonormalize(&mut e, &basis) {
                        v = e;
                        break;
                    }
                }
            }
            for (i, j) in range.clone().enumerate() {
                new_coeff[(j, l)] = v[i];
            }
            basis.push(v);
        }
    }

    let mut vectors = &eig.vectors * &new_coeff;
    let mut overlap = vec![0.0; dim];
    for l in 0..dim {
        let ov: Complex64 = (0..dim).map(|j| coeff[(j, l)].conj() * new_coeff[(j, l)]).sum();
        overlap[l] = ov.norm();
        if overlap[l] > 0.0 {
            let phase = ov.conj() / overlap[l];
            for row in 0..dim {
                vectors[(row, l)] *= phase;
            }
        }
    }
    let weights = (0..dim)
        .map(|l| {
            clusters[cluster[l]]
                .clone()
                .map(|j| (j, new_coeff[(j, l)].norm_sqr()))
                .collect()
        })
        .collect();
    Ok(Step {
        vectors,
        overlap,
        cluster,
        weights,
    })
}

/// Orthogonalizes `v` against `basis` (twice, for stability) and normalizes.
/// Returns false when nothing independent remains.
fn orthonormalize(v: &mut [Complex64], basis: &[Vec<Complex64>]) -> bool {
    let initial: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if initial == 0.0 {
        return false;
    }
    for _ in 0..2 {
        for b in basis {
            let proj: Complex64 = b.iter().zip(v.iter()).map(|(x, y)| x.conj() * y).sum();
            for (x, y) in v.iter_mut().zip(b) {
                *x -= proj * y;
            }
        }
    }
    let norm: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm <= 1e-8 * initial.max(1e-300) || norm < 1e-12 {
        return false;
    }
    for x in v.iter_mut() {
        *x /= norm;
    }
    true
}

/// Makes the first (near-)largest component of every column real positive.
fn fix_initial_phases(vectors: &mut CMatrix) {
    for mut col in vectors.column_iter_mut() {
        let max = col.iter().fold(0.0_f64, |a, z| a.max(z.norm()));
        if max == 0.0 {
            continue;
        }
        let pivot = col
            .iter()
            .copied()
            .find(|z| z.norm() >= max * (1.0 - 1e-6))
            .expect("maximum exists");
        let phase = pivot.conj() / pivot.norm();
        for z in col.iter_mut() {
            *z *= phase;
        }
    }
}

/// Diagonalizes `H(s_k)` on `K + 1` uniform points and builds the
/// gauge-fixed tracks.
pub fn build_trajectory(model: &HamiltonianModel, intervals: usize) -> Result<SpectralTrajectory> {
    build_trajectory_with(model, intervals, &TrajectoryOptions::default())
}

pub fn build_trajectory_with(
    model: &HamiltonianModel,
    intervals: usize,
    options: &TrajectoryOptions,
) -> Result<SpectralTrajectory> {
    if intervals < MIN_INTERVALS {
        return Err(AdiaError::Validation(format!(
            "trajectory grid needs at least {MIN_INTERVALS} intervals, got {intervals}"
        )));
    }
    let grid: Vec<f64> = (0..=intervals).map(|k| k as f64 / intervals as f64).collect();
    let mut h = CMatrix::zeros(model.dim(), model.dim());
    let mut raw = Vec::with_capacity(grid.len());
    for &s in &grid {
        model.h_into(s, &mut h)?;
        raw.push(diagonalize(&h).map_err(|e| e.context(format!("diagonalizing H({s})")))?);
    }
    let traj = SpectralTrajectory::from_raw(grid, raw, model.transferred_index())?;
    check_degeneracies(model, &traj, options.degeneracy_tol)?;
    Ok(traj)
}

fn check_degeneracies(model: &HamiltonianModel, traj: &SpectralTrajectory, tol: f64) -> Result<()> {
    for k in 0..=traj.intervals() {
        for nu in 1..traj.dim() {
            if (traj.energy(k, nu) - traj.energy(k, 0)).abs() > tol {
                continue;
            }
            let s = traj.grid[k];
            let c = transition_element(model, traj, nu, k, 1)?;
            if c.norm() > COUPLING_TOL {
                return Err(AdiaError::Degeneracy(format!(
                    "track {nu} crosses the transferred state at s = {s} with coupling {:.3e}",
                    c.norm()
                )));
            }
        }
    }
    Ok(())
}

/// `<nu(s_k)| H^{(p)}(s_k) |0(s_k)>` in the trajectory's gauge.
pub fn transition_element(
    model: &HamiltonianModel,
    traj: &SpectralTrajectory,
    nu: usize,
    k: usize,
    p: u32,
) -> Result<Complex64> {
    let d = hamiltonian_derivative(model, traj.grid[k], p)?;
    if let Some(w) = d.warning {
        log::warn!("{w}");
    }
    Ok(inner(&traj.vector(k, nu), &(&d.matrix * traj.vector(k, 0))))
}

/// `<nu|H'|mu> / (E_nu - E_mu)` at grid point `s`, zero when the two
/// energies coincide within the degeneracy tolerance.
pub fn coupling_beta(
    model: &HamiltonianModel,
    traj: &SpectralTrajectory,
    nu: usize,
    mu: usize,
    s: f64,
) -> Result<Complex64> {
    let k = traj.grid_index(s)?;
    let gap = traj.energy(k, nu) - traj.energy(k, mu);
    if gap.abs() <= DEFAULT_DEGENERACY_TOL {
        return Ok(ZERO);
    }
    let d = hamiltonian_derivative(model, s, 1)?;
    Ok(inner(&traj.vector(k, nu), &(&d.matrix * traj.vector(k, mu))) / gap)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapIntegral {
    pub value: f64,
    /// Richardson estimate `|S_h - S_{2h}| / 15`.
    pub error_estimate: f64,
    pub warning: Option<PrecisionWarning>,
}

/// `int_0^1 (E_nu - E_0) ds` by composite Simpson on the trajectory grid.
pub fn gap_integral(traj: &SpectralTrajectory, nu: usize, tolerance: f64) -> Result<GapIntegral> {
    if nu == 0 || nu >= traj.dim() {
        return Err(AdiaError::Validation(format!(
            "gap integral needs an excited track in 1..{}, got {nu}",
            traj.dim()
        )));
    }
    let f = traj.gap_series(nu);
    let h = 1.0 / traj.intervals() as f64;
    let (value, error_estimate) = simpson_with_estimate(&f, h);
    let warning = (error_estimate > tolerance).then_some(PrecisionWarning::QuadratureTolerance {
        estimate: error_estimate,
        tolerance,
    });
    Ok(GapIntegral {
        value,
        error_estimate,
        warning,
    })
}

/// Composite Simpson over any number of uniform intervals; an odd count
/// closes with the 3/8 rule on the last three.
pub fn composite_simpson(f: &[f64], h: f64) -> f64 {
    let n = f.len() - 1;
    match n {
        0 => 0.0,
        1 => 0.5 * h * (f[0] + f[1]),
        _ => {
            let even = if n % 2 == 0 { n } else { n - 3 };
            let mut sum = 0.0;
            for i in (0..even).step_by(2) {
                sum += f[i] + 4.0 * f[i + 1] + f[i + 2];
            }
            let mut total = sum * h / 3.0;
            if even != n {
                total += 3.0 * h / 8.0 * (f[n - 3] + 3.0 * f[n - 2] + 3.0 * f[n - 1] + f[n]);
            }
            total
        }
    }
}

/// Simpson value and the halving estimate against the stride-2 subgrid.
pub fn simpson_with_estimate(f: &[f64], h: f64) -> (f64, f64) {
    let n = f.len() - 1;
    let fine = composite_simpson(f, h);
    if n < 4 {
        return (fine, f64::NAN);
    }
    let coarse_len = if n % 2 == 0 { n } else { n - 1 };
    let coarse_pts: Vec<f64> = (0..=coarse_len).step_by(2).map(|i| f[i]).collect();
    let mut coarse = composite_simpson(&coarse_pts, 2.0 * h);
    if n % 2 == 1 {
        // last fine interval from the quadratic through its three points
        coarse += h * (-f[n - 2] + 8.0 * f[n - 1] + 5.0 * f[n]) / 12.0;
    }
    (fine, (fine - coarse).abs() / 15.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;
    use crate::models::search_hamiltonian;
    use crate::schedule::Schedule;

    #[test]
    fn clusters_split_on_gaps() {
        let c = clusters_of(&[0.0, 1.0, 1.0 + 1e-13, 2.0]);
        assert_eq!(c, vec![0..1, 1..3, 3..4]);
    }

    #[test]
    fn simpson_exact_on_cubics_any_parity() {
        let f = |x: f64| 1.0 + x - 2.0 * x * x + 4.0 * x * x * x;
        let exact = 1.0 + 0.5 - 2.0 / 3.0 + 1.0;
        for n in [2, 3, 5, 8, 17] {
            let h = 1.0 / n as f64;
            let pts: Vec<f64> = (0..=n).map(|k| f(k as f64 * h)).collect();
            assert!((composite_simpson(&pts, h) - exact).abs() < 1e-14, "n = {n}");
        }
    }

    #[test]
    fn constant_hamiltonian_is_static() {
        let h = CMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::from(0.0),
                Complex64::new(0.0, 0.5),
                Complex64::new(0.0, -0.5),
                Complex64::from(1.0),
            ],
        );
        let model = HamiltonianModel::from_fn(2, "const", move |_| h.clone());
        let traj = build_trajectory(&model, 32).unwrap();
        for k in 1..=32 {
            assert!(max_abs(&(traj.vectors_at(k) - traj.vectors_at(0))) == 0.0);
            for nu in 0..2 {
                let ov = inner(&traj.vector(k - 1, nu), &traj.vector(k, nu));
                assert!((ov - Complex64::from(1.0)).norm() < 1e-15);
            }
        }
        let g = gap_integral(&traj, 1, 1e-10).unwrap();
        assert!((g.value - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn full_search_model_tracks_the_coupled_state() {
        let model = search_hamiltonian(3, Schedule::Linear).unwrap();
        let traj = build_trajectory(&model, 64).unwrap();
        // track 1 is (1 + gamma)/2 above the ground (1 - gamma)/2
        for k in 0..=64 {
            let s = k as f64 / 64.0;
            let gamma = (1.0 - 4.0 * (1.0 - 1.0 / 8.0) * s * (1.0 - s)).sqrt();
            assert!((traj.energy(k, 1) - traj.energy(k, 0) - gamma).abs() < 1e-12);
            for nu in 2..8 {
                assert!((traj.energy(k, nu) - 1.0).abs() < 1e-12);
            }
        }
        for nu in 2..8 {
            for &s in &[0.0, 0.5, 1.0] {
                assert!(coupling_beta(&model, &traj, nu, 0, s).unwrap().norm() < 1e-10);
            }
        }
    }
}
