//! Time-dependent Hamiltonians `H(s)` on the reduced-time interval `[0, 1]`.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{AdiaError, PrecisionWarning, Result};
use crate::linalg::{CMatrix, ZERO};
use crate::schedule::Schedule;

mod search;
pub mod spline;
pub mod tabulated;

pub use search::{reduce_search_to_2level, search_hamiltonian, MAX_SEARCH_QUBITS};
pub use tabulated::{tabulated_model, TabulatedData, TabulatedFile};

/// Writes `H(s)` into a preallocated buffer of the model's dimension.
pub type Evaluator = Arc<dyn Fn(f64, &mut CMatrix) -> Result<()> + Send + Sync>;

/// Closed-form `H^{(p)}(s)`; returns `None` when no closed form exists for
/// the requested order, in which case callers fall back to finite differences.
pub type DerivativeEvaluator = Arc<dyn Fn(f64, u32) -> Option<Result<CMatrix>> + Send + Sync>;

#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    Search {
        n_qubits: u32,
        schedule: Schedule,
        reduced: bool,
    },
    Tabulated {
        source: String,
    },
    Custom,
}

/// A Hermitian `H(s)` with optional closed-form derivatives. Immutable after
/// construction and cheap to clone.
#[derive(Clone)]
pub struct HamiltonianModel {
    dim: usize,
    eval: Evaluator,
    derivative: Option<DerivativeEvaluator>,
    transferred: usize,
    label: String,
    kind: ModelKind,
}

impl fmt::Debug for HamiltonianModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HamiltonianModel")
            .field("dim", &self.dim)
            .field("label", &self.label)
            .field("transferred", &self.transferred)
            .field("analytic_derivative", &self.derivative.is_some())
            .field("kind", &self.kind)
            .finish()
    }
}

impl HamiltonianModel {
    pub fn new(dim: usize, label: impl Into<String>, eval: Evaluator) -> Self {
        HamiltonianModel {
            dim,
            eval,
            derivative: None,
            transferred: 0,
            label: label.into(),
            kind: ModelKind::Custom,
        }
    }

    /// Convenience constructor from a closure returning a fresh matrix.
    pub fn from_fn<F>(dim: usize, label: impl Into<String>, f: F) -> Self
    where
        F: Fn(f64) -> CMatrix + Send + Sync + 'static,
    {
        Self::new(
            dim,
            label,
            Arc::new(move |s, out: &mut CMatrix| {
                out.copy_from(&f(s));
                Ok(())
            }),
        )
    }

    pub fn with_derivative(mut self, derivative: DerivativeEvaluator) -> Self {
        self.derivative = Some(derivative);
        self
    }

    pub fn with_transferred_index(mut self, index: usize) -> Self {
        self.transferred = index;
        self
    }

    pub fn with_kind(mut self, kind: ModelKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Index (in ascending energy order at `s = 0`) of the eigenstate the
    /// protocol transfers.
    pub fn transferred_index(&self) -> usize {
        self.transferred
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn schedule(&self) -> Option<&Schedule> {
        match &self.kind {
            ModelKind::Search { schedule, .. } => Some(schedule),
            _ => None,
        }
    }

    pub fn has_analytic_derivative(&self) -> bool {
        self.derivative.is_some()
    }

    pub fn evaluator(&self) -> &Evaluator {
        &self.eval
    }

    pub fn derivative_evaluator(&self) -> Option<&DerivativeEvaluator> {
        self.derivative.as_ref()
    }

    pub fn h_into(&self, s: f64, out: &mut CMatrix) -> Result<()> {
        (self.eval)(s, out)
    }

    pub fn h(&self, s: f64) -> Result<CMatrix> {
        let mut out = CMatrix::zeros(self.dim, self.dim);
        self.h_into(s, &mut out)?;
        Ok(out)
    }

    fn analytic(&self, s: f64, p: u32) -> Option<Result<CMatrix>> {
        self.derivative.as_ref().and_then(|d| d(s, p))
    }
}

/// How a derivative was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeMethod {
    Analytic,
    Numeric,
}

#[derive(Debug, Clone)]
pub struct Derivative {
    pub matrix: CMatrix,
    pub method: DerivativeMethod,
    pub warning: Option<PrecisionWarning>,
}

/// Orders above this lose most digits to round-off when differenced.
pub const MAX_RELIABLE_NUMERIC_ORDER: u32 = 6;

/// `H^{(p)}(s)`: the closed form when the model provides one, otherwise
/// Richardson-extrapolated finite differences with base step
/// `1e-3 * max(1, p)` and two extrapolation levels. Central stencils are used
/// where they fit inside `[0, 1]`, one-sided stencils otherwise.
pub fn hamiltonian_derivative(model: &HamiltonianModel, s: f64, p: u32) -> Result<Derivative> {
    if p == 0 {
        return Err(AdiaError::Domain("derivative order must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&s) {
        return Err(AdiaError::Domain(format!(
            "reduced time s = {s} lies outside [0, 1]"
        )));
    }
    if let Some(result) = model.analytic(s, p) {
        return Ok(Derivative {
            matrix: result?,
            method: DerivativeMethod::Analytic,
            warning: None,
        });
    }
    numeric_derivative(model, s, p)
}

/// Finite-difference path of [`hamiltonian_derivative`], always numeric.
pub fn numeric_derivative(model: &HamiltonianModel, s: f64, p: u32) -> Result<Derivative> {
    let h = 1e-3 * f64::from(p.max(1));
    let half_width = 0.5 * f64::from(p) * h;
    let stencil = if s - half_width >= 0.0 && s + half_width <= 1.0 {
        Stencil::Central
    } else if s + f64::from(p) * h <= 1.0 {
        Stencil::Forward
    } else {
        Stencil::Backward
    };

    let d0 = difference(model, s, p, h, stencil)?;
    let d1 = difference(model, s, p, h / 2.0, stencil)?;
    let d2 = difference(model, s, p, h / 4.0, stencil)?;
    // Central differences expand in h^2, one-sided ones in h.
    let (r1, r2) = match stencil {
        Stencil::Central => (4.0, 16.0),
        _ => (2.0, 4.0),
    };
    let e0 = (&d1 * Complex64::from(r1) - &d0) / Complex64::from(r1 - 1.0);
    let e1 = (&d2 * Complex64::from(r1) - &d1) / Complex64::from(r1 - 1.0);
    let matrix = (&e1 * Complex64::from(r2) - &e0) / Complex64::from(r2 - 1.0);

    let warning = (p > MAX_RELIABLE_NUMERIC_ORDER)
        .then_some(PrecisionWarning::HighOrderNumericDerivative { order: p });
    Ok(Derivative {
        matrix,
        method: DerivativeMethod::Numeric,
        warning,
    })
}

#[derive(Debug, Clone, Copy)]
enum Stencil {
    Central,
    Forward,
    Backward,
}

fn difference(model: &HamiltonianModel, s: f64, p: u32, h: f64, stencil: Stencil) -> Result<CMatrix> {
    let n = model.dim();
    let mut acc = CMatrix::from_element(n, n, ZERO);
    let mut buf = CMatrix::zeros(n, n);
    let mut binom = 1.0_f64;
    for k in 0..=p {
        let kf = f64::from(k);
        let (offset, sign) = match stencil {
            Stencil::Central => (0.5 * f64::from(p) - kf, if k % 2 == 0 { 1.0 } else { -1.0 }),
            Stencil::Forward => (kf, if (p - k) % 2 == 0 { 1.0 } else { -1.0 }),
            Stencil::Backward => (-kf, if k % 2 == 0 { 1.0 } else { -1.0 }),
        };
        let x = (s + offset * h).clamp(0.0, 1.0);
        model.h_into(x, &mut buf)?;
        acc += &buf * Complex64::from(sign * binom);
        binom = binom * f64::from(p - k) / (kf + 1.0);
    }
    Ok(acc / Complex64::from(h.powi(p as i32)))
}
