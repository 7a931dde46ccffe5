//! Hamiltonians sampled on a uniform `s` grid and read from JSON.
//!
//! ```json
//! { "s_grid": [0.0, 0.5, 1.0],
//!   "mode": "dense",
//!   "data": [ [[[1,0],[0,0]], [[0,0],[0,0]]], ... ] }
//! ```
//!
//! In `dense` mode `data[k]` is the matrix `H(s_k)` as rows of `[re, im]`
//! entries. In `spectral` mode `data[k]` is
//! `{"energies": [E_0, ..., E_{N-1}], "couplings": [[re, im], ...]}` where
//! `couplings[nu] = <nu|dH/ds|0>` (the `nu = 0` entry, if present, is
//! ignored). A Hamiltonian with exactly this spectrum and these couplings is
//! rebuilt by parallel transport of the eigenbasis, starting from the
//! standard basis at `s = 0`. Optional fields: `transferred` (default 0) and
//! `label`.

use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::spline::MatrixSpline;
use super::{HamiltonianModel, ModelKind};
use crate::error::{AdiaError, Result};
use crate::linalg::{hermiticity_defect, symmetrize, unitary_exp, CMatrix, ZERO};

/// Entries above this anti-Hermitian magnitude are rejected; smaller
/// defects are treated as round-off and symmetrized away.
pub const TABULATED_HERMITIAN_TOL: f64 = 1e-8;

const GRID_TOL: f64 = 1e-9;
const TRANSPORT_SUBSTEPS: usize = 32;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TabulatedFile {
    pub s_grid: Vec<f64>,
    #[serde(flatten)]
    pub data: TabulatedData,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transferred: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "mode", content = "data", rename_all = "lowercase")]
pub enum TabulatedData {
    Dense(Vec<Vec<Vec<[f64; 2]>>>),
    Spectral(Vec<SpectralSample>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralSample {
    pub energies: Vec<f64>,
    pub couplings: Vec<[f64; 2]>,
}

impl TabulatedFile {
    /// Samples `model` at `intervals + 1` uniform points in dense mode.
    pub fn sample_dense(model: &HamiltonianModel, intervals: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(intervals + 1);
        let mut s_grid = Vec::with_capacity(intervals + 1);
        for k in 0..=intervals {
            let s = k as f64 / intervals as f64;
            let h = model.h(s)?;
            data.push(
                (0..h.nrows())
                    .map(|i| (0..h.ncols()).map(|j| [h[(i, j)].re, h[(i, j)].im]).collect())
                    .collect(),
            );
            s_grid.push(s);
        }
        Ok(TabulatedFile {
            s_grid,
            data: TabulatedData::Dense(data),
            transferred: Some(model.transferred_index()),
            label: Some(model.label().to_string()),
        })
    }

    pub fn into_model(self, source: impl Into<String>) -> Result<HamiltonianModel> {
        check_grid(&self.s_grid)?;
        let points = self.s_grid.len();
        let nodes = match self.data {
            TabulatedData::Dense(data) => dense_nodes(data, points)?,
            TabulatedData::Spectral(data) => spectral_nodes(data, points)?,
        };
        let dim = nodes[0].nrows();
        let transferred = self.transferred.unwrap_or(0);
        if transferred >= dim {
            return Err(AdiaError::Format(format!(
                "transferred index {transferred} out of range for dimension {dim}"
            )));
        }
        let source = source.into();
        let label = self.label.unwrap_or_else(|| format!("tabulated:{source}"));

        let spline = Arc::new(MatrixSpline::new(nodes)?);
        let values = Arc::clone(&spline);
        let eval = Arc::new(move |s: f64, out: &mut CMatrix| -> Result<()> {
            check_s(s)?;
            values.eval(s, 0, out);
            Ok(())
        });
        let derivative = Arc::new(move |s: f64, p: u32| -> Option<Result<CMatrix>> {
            if let Err(e) = check_s(s) {
                return Some(Err(e));
            }
            let mut out = CMatrix::zeros(dim, dim);
            spline.eval(s, p, &mut out);
            Some(Ok(out))
        });
        Ok(HamiltonianModel::new(dim, label, eval)
            .with_derivative(derivative)
            .with_transferred_index(transferred)
            .with_kind(ModelKind::Tabulated { source }))
    }
}

/// Loads a tabulated model from a JSON file.
pub fn tabulated_model(path: impl AsRef<Path>) -> Result<HamiltonianModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| AdiaError::from(e).context(format!("reading {}", path.display())))?;
    let file: TabulatedFile = serde_json::from_str(&text)
        .map_err(|e| AdiaError::Format(format!("{}: {e}", path.display())))?;
    file.into_model(path.display().to_string())
}

fn check_s(s: f64) -> Result<()> {
    if (0.0..=1.0).contains(&s) {
        Ok(())
    } else {
        Err(AdiaError::Domain(format!("reduced time s = {s} lies outside [0, 1]")))
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(AdiaError::Format(format!(
            "s_grid needs at least two points, got {}",
            grid.len()
        )));
    }
    let intervals = grid.len() - 1;
    let h = 1.0 / intervals as f64;
    for (k, &s) in grid.iter().enumerate() {
        if k > 0 && !(s > grid[k - 1]) {
            return Err(AdiaError::Format(format!("s_grid is not strictly increasing at index {k}")));
        }
        if (s - k as f64 * h).abs() > GRID_TOL * h {
            return Err(AdiaError::Format(format!(
                "s_grid must be uniform on [0, 1]; index {k} holds {s}, expected {}",
                k as f64 * h
            )));
        }
    }
    Ok(())
}

fn dense_nodes(data: Vec<Vec<Vec<[f64; 2]>>>, points: usize) -> Result<Vec<CMatrix>> {
    if data.len() != points {
        return Err(AdiaError::Format(format!(
            "{} matrices supplied for {points} grid points",
            data.len()
        )));
    }
    let dim = data[0].len();
    if dim == 0 {
        return Err(AdiaError::Format("empty matrix in data".into()));
    }
    data.into_iter()
        .enumerate()
        .map(|(k, rows)| {
            if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                return Err(AdiaError::Format(format!("data[{k}] is not a {dim}x{dim} matrix")));
            }
            let h = CMatrix::from_fn(dim, dim, |i, j| Complex64::new(rows[i][j][0], rows[i][j][1]));
            let defect = hermiticity_defect(&h);
            if !(defect <= TABULATED_HERMITIAN_TOL) {
                return Err(AdiaError::Validation(format!(
                    "data[{k}] is not Hermitian (max |H - H^dagger| = {defect:.3e})"
                )));
            }
            Ok(symmetrize(&h))
        })
        .collect()
}

fn spectral_nodes(data: Vec<SpectralSample>, points: usize) -> Result<Vec<CMatrix>> {
    if data.len() != points {
        return Err(AdiaError::Format(format!(
            "{} spectral samples supplied for {points} grid points",
            data.len()
        )));
    }
    let dim = data[0].energies.len();
    if dim == 0 {
        return Err(AdiaError::Format("spectral sample without energies".into()));
    }
    // Node series as dim x 1 columns: energies and couplings (entry 0 zeroed).
    let mut energies = Vec::with_capacity(points);
    let mut couplings = Vec::with_capacity(points);
    for (k, sample) in data.into_iter().enumerate() {
        if sample.energies.len() != dim {
            return Err(AdiaError::Format(format!("data[{k}] has {} energies, expected {dim}", sample.energies.len())));
        }
        let offset = match sample.couplings.len() {
            n if n == dim => 0,
            n if n + 1 == dim => 1,
            n => {
                return Err(AdiaError::Format(format!(
                    "data[{k}] has {n} couplings, expected {dim} or {}",
                    dim - 1
                )))
            }
        };
        energies.push(CMatrix::from_fn(dim, 1, |i, _| Complex64::from(sample.energies[i])));
        couplings.push(CMatrix::from_fn(dim, 1, |i, _| {
            if i == 0 {
                ZERO
            } else {
                let c = sample.couplings[i - offset];
                Complex64::new(c[0], c[1])
            }
        }));
    }
    let e_spline = MatrixSpline::new(energies.clone())?;
    let c_spline = MatrixSpline::new(couplings)?;

    // U' = U A with A_{nu 0} = c_nu / (E_0 - E_nu), A_{0 nu} = -conj(A_{nu 0}).
    let generator = |s: f64| -> Result<CMatrix> {
        let mut e = CMatrix::zeros(dim, 1);
        let mut c = CMatrix::zeros(dim, 1);
        e_spline.eval(s, 0, &mut e);
        c_spline.eval(s, 0, &mut c);
        let mut a = CMatrix::zeros(dim, dim);
        for nu in 1..dim {
            let gap = e[(0, 0)].re - e[(nu, 0)].re;
            if gap.abs() <= 1e-12 {
                if c[(nu, 0)].norm() > 1e-12 {
                    return Err(AdiaError::Degeneracy(format!(
                        "coupled level {nu} is degenerate with level 0 at s = {s}"
                    )));
                }
                continue;
            }
            a[(nu, 0)] = c[(nu, 0)] / gap;
            a[(0, nu)] = -a[(nu, 0)].conj();
        }
        Ok(a)
    };

    let intervals = points - 1;
    let h = 1.0 / intervals as f64;
    let dt = h / TRANSPORT_SUBSTEPS as f64;
    let i_unit = Complex64::new(0.0, 1.0);
    let mut u = CMatrix::identity(dim, dim);
    let mut nodes = Vec::with_capacity(points);
    for k in 0..points {
        let diag = CMatrix::from_diagonal(&energies[k].column(0).into_owned());
        nodes.push(symmetrize(&(&u * diag * u.adjoint())));
        if k == intervals {
            break;
        }
        for j in 0..TRANSPORT_SUBSTEPS {
            let s_mid = k as f64 * h + (j as f64 + 0.5) * dt;
            // exp(A dt) = exp(-i (iA) dt) with iA Hermitian.
            let a = generator(s_mid)?;
            u *= unitary_exp(&(a * i_unit), dt)?;
        }
    }
    Ok(nodes)
}
