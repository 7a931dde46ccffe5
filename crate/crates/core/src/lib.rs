//! Adiabatic state transfer with phase-interference-optimal evolution times.
//!
//! Pipeline: a [`Schedule`] and a [`HamiltonianModel`] define `H(s)`;
//! [`build_trajectory`] produces the gauge-fixed instantaneous eigensystem;
//! [`optimal_times`] turns its gap integral and boundary phase into the
//! destructive-interference durations `T_n`; [`evolve`] propagates the
//! Schrodinger equation; the [`analysis`] module compares measured
//! transition amplitudes to the boundary-term predictors.

pub mod analysis;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod models;
pub mod propagator;
pub mod schedule;
pub mod spectral;
pub mod timing;

pub use analysis::{
    fit_power_law, predict_amplitude_general, predict_amplitude_m0, standard_bound,
    tolerance_sweep, transition_amplitudes, DefectKind, FitWindow, Prediction, PredictionTime,
    ScalingFit, ToleranceReport, ToleranceSpec,
};
pub use error::{AdiaError, PrecisionWarning, Result};
pub use harness::{run_sweep, ModelSpec, Prepared, SweepOutcome, SweepRow, SweepSpec, SweepSummary};
pub use linalg::{diagonalize, CMatrix, CVector, Eigensystem};
pub use models::{
    hamiltonian_derivative, reduce_search_to_2level, search_hamiltonian, tabulated_model,
    HamiltonianModel,
};
pub use propagator::{evolve, evolve_with, EvolutionResult, EvolveOptions, InitialState, Integrator};
pub use schedule::Schedule;
pub use spectral::{build_trajectory, coupling_beta, gap_integral, GapIntegral, SpectralTrajectory};
pub use timing::{
    boundary_quantity, estimate_theta, gap_defect, optimal_times, refine_time_by_beats,
    symmetry_defect, timing_defect, BeatRefinement, BoundaryQuantity, Parity, TimingTable,
};
