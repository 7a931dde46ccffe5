use adia_core::harness::{NRange, ParityFilter};
use adia_core::models::TabulatedFile;
use adia_core::{run_sweep, search_hamiltonian, ModelSpec, Schedule, SweepSpec};

fn small_spec() -> SweepSpec {
    let mut spec = SweepSpec::new(ModelSpec::Search { n_qubits: 3 });
    spec.schedule = Some(Schedule::Linear);
    spec.n_range = Some(NRange { start: 4, end: 24 });
    spec.intervals = 256;
    spec
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let mut one = small_spec();
    one.jobs = Some(1);
    let mut four = small_spec();
    four.jobs = Some(4);
    let a = run_sweep(&one).unwrap();
    let b = run_sweep(&four).unwrap();
    assert_eq!(a.rows.len(), 21);
    for (x, y) in a.rows.iter().zip(&b.rows) {
        assert_eq!(x.n, y.n);
        assert_eq!(x.err_norm.to_bits(), y.err_norm.to_bits());
        assert_eq!(x.amp_abs.to_bits(), y.amp_abs.to_bits());
    }
}

#[test]
fn tabulated_sweep_tracks_the_analytic_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("search3.json");
    let analytic = search_hamiltonian(3, Schedule::Linear).unwrap();
    let file = TabulatedFile::sample_dense(&analytic, 200).unwrap();
    std::fs::write(&path, serde_json::to_string(&file).unwrap()).unwrap();

    let mut table = small_spec();
    table.model = ModelSpec::Tabulated { path };
    table.schedule = None;
    table.parity = ParityFilter::Odd;
    let mut reference = small_spec();
    reference.reduced = false;
    reference.parity = ParityFilter::Odd;

    let a = run_sweep(&table).unwrap();
    let b = run_sweep(&reference).unwrap();
    assert_eq!(a.rows.len(), b.rows.len());
    assert!((a.summary.gap_integral - b.summary.gap_integral).abs() < 1e-6);
    for (x, y) in a.rows.iter().zip(&b.rows) {
        assert!((x.err_norm - y.err_norm).abs() < 1e-5, "n={}: {} vs {}", x.n, x.err_norm, y.err_norm);
    }
}

#[test]
fn parity_filter_keeps_requested_rows() {
    let mut spec = small_spec();
    spec.parity = ParityFilter::Even;
    spec.n_step = 2;
    let out = run_sweep(&spec).unwrap();
    assert!(out.rows.iter().all(|r| r.n % 2 == 0));
    assert_eq!(out.rows.len(), 11);
}
