use std::sync::Arc;

use num_complex::Complex64;

use super::{HamiltonianModel, ModelKind};
use crate::error::{AdiaError, Result};
use crate::linalg::CMatrix;
use crate::schedule::Schedule;

/// Dense storage limit: `N = 2^12 = 4096`.
pub const MAX_SEARCH_QUBITS: u32 = 12;

/// `H(s) = I - (1 - phi) |+..+><+..+| - phi |0..0><0..0|` on `n_qubits`
/// qubits, with the all-zeros basis state marked.
pub fn search_hamiltonian(n_qubits: u32, schedule: Schedule) -> Result<HamiltonianModel> {
    if n_qubits == 0 {
        return Err(AdiaError::Validation("search model needs at least one qubit".into()));
    }
    if n_qubits > MAX_SEARCH_QUBITS {
        return Err(AdiaError::Capacity(format!(
            "{n_qubits} qubits exceeds the dense limit of {MAX_SEARCH_QUBITS}"
        )));
    }
    let dim = 1usize << n_qubits;
    let inv_dim = 1.0 / dim as f64;

    // P_plus - P_marked, the direction every derivative points along.
    let mut direction = CMatrix::from_element(dim, dim, Complex64::from(inv_dim));
    direction[(0, 0)] -= Complex64::from(1.0);
    let direction = Arc::new(direction);

    let sched = schedule.clone();
    let eval = Arc::new(move |s: f64, out: &mut CMatrix| -> Result<()> {
        let phi = sched.eval(s)?;
        out.fill(Complex64::from(-(1.0 - phi) * inv_dim));
        for i in 0..dim {
            out[(i, i)] += Complex64::from(1.0);
        }
        out[(0, 0)] -= Complex64::from(phi);
        Ok(())
    });

    let sched = schedule.clone();
    let derivative = Arc::new(move |s: f64, p: u32| -> Option<Result<CMatrix>> {
        match sched.derivative(s, p) {
            Ok(dphi) => Some(Ok(direction.as_ref() * Complex64::from(dphi))),
            Err(AdiaError::Capability(_)) => None,
            Err(e) => Some(Err(e)),
        }
    });

    Ok(HamiltonianModel::new(dim, format!("search:n={n_qubits}"), eval)
        .with_derivative(derivative)
        .with_kind(ModelKind::Search {
            n_qubits,
            schedule,
            reduced: false,
        }))
}

/// Restriction of the search Hamiltonian to the invariant plane spanned by
/// the marked state `|0..0>` and the normalized remainder of the uniform
/// superposition orthogonal to it. The transferred ground state and the only
/// excited state coupled to it live in this plane for every `s`.
pub fn reduce_search_to_2level(model: &HamiltonianModel) -> Result<HamiltonianModel> {
    let (n_qubits, schedule) = match model.kind() {
        ModelKind::Search {
            n_qubits,
            schedule,
            reduced: false,
        } => (*n_qubits, schedule.clone()),
        _ => {
            return Err(AdiaError::Validation(format!(
                "model '{}' was not built by search_hamiltonian",
                model.label()
            )))
        }
    };
    let dim = (1u64 << n_qubits) as f64;
    // |+..+> = c |marked> + d |rest>
    let c = 1.0 / dim.sqrt();
    let d = (1.0 - 1.0 / dim).sqrt();
    let plus = [[c * c, c * d], [c * d, d * d]];

    let sched = schedule.clone();
    let eval = Arc::new(move |s: f64, out: &mut CMatrix| -> Result<()> {
        let phi = sched.eval(s)?;
        let w = 1.0 - phi;
        out[(0, 0)] = Complex64::from(1.0 - w * plus[0][0] - phi);
        out[(0, 1)] = Complex64::from(-w * plus[0][1]);
        out[(1, 0)] = Complex64::from(-w * plus[1][0]);
        out[(1, 1)] = Complex64::from(1.0 - w * plus[1][1]);
        Ok(())
    });

    let direction = CMatrix::from_row_slice(
        2,
        2,
        &[
            Complex64::from(plus[0][0] - 1.0),
            Complex64::from(plus[0][1]),
            Complex64::from(plus[1][0]),
            Complex64::from(plus[1][1]),
        ],
    );
    let sched = schedule.clone();
    let derivative = Arc::new(move |s: f64, p: u32| -> Option<Result<CMatrix>> {
        match sched.derivative(s, p) {
            Ok(dphi) => Some(Ok(&direction * Complex64::from(dphi))),
            Err(AdiaError::Capability(_)) => None,
            Err(e) => Some(Err(e)),
        }
    });

    Ok(
        HamiltonianModel::new(2, format!("search:n={n_qubits}/2level"), eval)
            .with_derivative(derivative)
            .with_kind(ModelKind::Search {
                n_qubits,
                schedule,
                reduced: true,
            }),
    )
}
