use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adia_core::analysis::{fit_power_law, predict_from_boundary, tolerance_sweep, FitWindow, PredictionTime};
use adia_core::harness::{run_sweep, NRange, ParityFilter, Prepared, SweepRow, SweepSpec};
use adia_core::{
    evolve_with, AdiaError, DefectKind, EvolveOptions, InitialState, Integrator, ModelSpec, Parity,
    Result, Schedule, ToleranceSpec,
};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

const EXIT_VALIDATION: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const EXIT_USAGE: u8 = 64;

/// Phase-interference timing and error-scaling experiments for adiabatic
/// state transfer.
#[derive(Parser)]
#[command(name = "adia", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the interference-optimal durations T_n.
    Timings(TimingsArgs),
    /// Propagate once and report the final transition amplitudes.
    Evolve(EvolveArgs),
    /// Boundary-term amplitude predictions at T_n or explicit durations.
    Predict(PredictArgs),
    /// Evolve at every duration of a sweep and fit the scaling.
    Sweep(SweepArgs),
    /// Inject a defect of size scale * T^-alpha and fit the even-n scaling.
    Tolerance(ToleranceArgs),
    /// Fit a power law to a sweep CSV.
    Fit(FitArgs),
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// JSON sweep configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `search:n=<qubits>` or `tabulated:<path>`.
    #[arg(long)]
    model: Option<ModelSpec>,
    /// `linear`, `local:N=<int>` or `beta:m=<int>`.
    #[arg(long)]
    schedule: Option<Schedule>,
    /// Simulate the full search Hamiltonian instead of its coupled 2x2 block.
    #[arg(long)]
    full: bool,
    #[arg(long)]
    nu: Option<usize>,
    /// Boundary order; defaults to the schedule's.
    #[arg(long)]
    m: Option<u32>,
    /// Grid intervals of the spectral trajectory.
    #[arg(long)]
    intervals: Option<usize>,
    /// Worker threads (default: ADIA_JOBS or all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

impl ModelArgs {
    fn spec(&self) -> Result<SweepSpec> {
        let mut spec = match &self.config {
            Some(path) => SweepSpec::from_json(&read(path)?)?,
            None => SweepSpec::new(
                self.model
                    .clone()
                    .ok_or_else(|| AdiaError::Validation("--model or --config is required".into()))?,
            ),
        };
        if let Some(model) = &self.model {
            spec.model = model.clone();
        }
        if let Some(schedule) = &self.schedule {
            spec.schedule = Some(schedule.clone());
        }
        if self.full {
            spec.reduced = false;
        }
        if let Some(nu) = self.nu {
            spec.nu = nu;
        }
        if self.m.is_some() {
            spec.m = self.m;
        }
        if let Some(k) = self.intervals {
            spec.intervals = k;
        }
        if self.jobs.is_some() {
            spec.jobs = self.jobs;
        }
        Ok(spec)
    }
}

#[derive(Args)]
struct TimingsArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Index range `a..b`.
    #[arg(long)]
    n: Option<NRange>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct EvolveArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Duration.
    #[arg(long, short = 't', conflicts_with = "n")]
    t: Option<f64>,
    /// Evolve for T_n instead of an explicit duration.
    #[arg(long)]
    n: Option<i64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, value_parser = parse_integrator)]
    integrator: Option<Integrator>,
    /// Track whose s = 0 eigenvector is the initial state.
    #[arg(long, default_value_t = 0)]
    initial: usize,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, conflicts_with = "t")]
    n: Option<NRange>,
    /// Comma-separated durations.
    #[arg(long, short = 't', value_delimiter = ',')]
    t: Vec<f64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, conflicts_with = "t")]
    n: Option<NRange>,
    #[arg(long)]
    n_step: Option<usize>,
    /// Comma-separated durations.
    #[arg(long, short = 't', value_delimiter = ',')]
    t: Vec<f64>,
    #[arg(long, value_parser = parse_parity)]
    parity: Option<ParityFilter>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, value_parser = parse_integrator)]
    integrator: Option<Integrator>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Print the summary as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ToleranceArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// symmetry, gap, timing or derivative(p).
    #[arg(long)]
    defect: DefectKind,
    #[arg(long)]
    scale: f64,
    /// Defect size falls as T^-alpha.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    alpha: f64,
    #[arg(long)]
    n: NRange,
    #[arg(long, default_value_t = 1)]
    n_step: usize,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("source").required(true))]
struct FitArgs {
    /// Sweep CSV written by `adia sweep`.
    #[arg(group = "source")]
    path: Option<PathBuf>,
    /// Same as the positional path.
    #[arg(long, group = "source")]
    input: Option<PathBuf>,
    #[arg(long, value_parser = parse_parity, default_value = "even")]
    parity: ParityFilter,
    /// Column holding |E|: amp_abs, err_norm or amp_pred.
    #[arg(long, default_value = "amp_abs")]
    column: String,
    #[arg(long, default_value_t = 0.0)]
    t_min: f64,
    #[arg(long, default_value_t = f64::INFINITY)]
    t_max: f64,
    /// Duration window `a..b`; overrides --t-min and --t-max.
    #[arg(long, value_parser = parse_window)]
    window: Option<(f64, f64)>,
    /// Amplitudes below this are left out.
    #[arg(long, default_value_t = 0.0)]
    floor: f64,
}

fn parse_window(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| format!("window '{s}' is not of the form a..b"))?;
    let a: f64 = a.trim().parse().map_err(|_| format!("bad window start '{a}'"))?;
    let b: f64 = b.trim_start_matches('=').trim().parse().map_err(|_| format!("bad window end '{b}'"))?;
    if !(a < b) {
        return Err(format!("empty window {a}..{b}"));
    }
    Ok((a, b))
}

fn parse_integrator(s: &str) -> std::result::Result<Integrator, String> {
    match s.to_ascii_lowercase().as_str() {
        "midpoint" => Ok(Integrator::Midpoint),
        "magnus4" => Ok(Integrator::Magnus4),
        _ => Err(format!("unknown integrator '{s}' (midpoint or magnus4)")),
    }
}

fn parse_parity(s: &str) -> std::result::Result<ParityFilter, String> {
    s.parse().map_err(|e: AdiaError| e.to_string())
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| AdiaError::Io(e).context(format!("cannot read {}", path.display())))
}

fn sink(output: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match output {
        Some(path) => Box::new(BufWriter::new(File::create(path).map_err(|e| {
            AdiaError::Io(e).context(format!("cannot create {}", path.display()))
        })?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn timings(args: TimingsArgs) -> Result<()> {
    let mut spec = args.model.spec()?;
    if args.n.is_some() {
        spec.n_range = args.n;
    }
    let range = spec
        .n_range
        .ok_or_else(|| AdiaError::Validation("--n a..b is required".into()))?;
    let prep = Prepared::from_spec(&spec)?;
    prep.timing_table(range.to_range())?
        .write_csv(sink(&args.output)?, prep.delta_s())
}

fn evolve_cmd(args: EvolveArgs) -> Result<()> {
    let spec = args.model.spec()?;
    let prep = Prepared::from_spec(&spec)?;
    let t = match (args.t, args.n) {
        (Some(t), _) => t,
        (None, Some(n)) => prep.time(n),
        (None, None) => return Err(AdiaError::Validation("give --t or --n".into())),
    };
    let options = EvolveOptions {
        tol: args.tol.unwrap_or(spec.tol),
        integrator: args.integrator.unwrap_or(spec.integrator),
        ..Default::default()
    };
    let r = evolve_with(&prep.model, &prep.trajectory, t, &InitialState::Track(args.initial), &options)?;
    let mut w = csv::Writer::from_writer(sink(&args.output)?);
    w.write_record(["nu", "T", "re", "im", "abs", "steps"])?;
    for (nu, a) in r.overlaps.iter().enumerate() {
        w.write_record([
            nu.to_string(),
            t.to_string(),
            a.re.to_string(),
            a.im.to_string(),
            a.norm().to_string(),
            r.steps.to_string(),
        ])?;
    }
    w.flush()?;
    eprintln!("err_norm = {:.6e}, steps = {}", r.error_norm, r.steps);
    Ok(())
}

fn predict(args: PredictArgs) -> Result<()> {
    let mut spec = args.model.spec()?;
    if args.n.is_some() {
        spec.n_range = args.n;
    }
    let prep = Prepared::from_spec(&spec)?;
    if prep.m > 0 {
        adia_core::analysis::check_vanishing_derivatives(&prep.model, prep.m)?;
    }
    let times: Vec<(Option<i64>, PredictionTime)> = if !args.t.is_empty() {
        args.t
            .iter()
            .map(|&t| (None, PredictionTime::at(t, prep.theta, prep.g)))
            .collect()
    } else {
        let range = spec
            .n_range
            .ok_or_else(|| AdiaError::Validation("give --n a..b or --t".into()))?;
        range
            .to_range()
            .map(|n| (Some(n), PredictionTime::optimal(n, prep.theta, prep.g)))
            .filter(|(_, p)| p.t > 0.0)
            .collect()
    };
    let mut w = csv::Writer::from_writer(sink(&args.output)?);
    w.write_record([
        "nu",
        "m",
        "n",
        "T",
        "amplitude",
        "two_term",
        "interference_factor",
        "boundary0",
        "boundary1",
    ])?;
    for (n, time) in times {
        let p = predict_from_boundary(&prep.boundary, &time);
        w.write_record([
            p.nu.to_string(),
            p.m.to_string(),
            n.map(|n| n.to_string()).unwrap_or_default(),
            p.t.to_string(),
            p.amplitude.to_string(),
            p.two_term.to_string(),
            p.interference_factor.to_string(),
            p.boundary0.to_string(),
            p.boundary1.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let mut spec = args.model.spec()?;
    if args.n.is_some() {
        spec.n_range = args.n;
        spec.times = None;
    }
    if !args.t.is_empty() {
        spec.times = Some(args.t);
        spec.n_range = None;
    }
    if let Some(step) = args.n_step {
        spec.n_step = step;
    }
    if let Some(p) = args.parity {
        spec.parity = p;
    }
    if let Some(tol) = args.tol {
        spec.tol = tol;
    }
    if let Some(i) = args.integrator {
        spec.integrator = i;
    }
    if args.output.is_some() {
        spec.output = args.output;
    }
    let outcome = run_sweep(&spec)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&outcome.summary)?);
    } else {
        println!("{}", outcome.summary);
    }
    if spec.output.is_none() {
        adia_core::harness::write_sweep_csv(io::stdout().lock(), &outcome.rows, &outcome.summary)?;
    }
    Ok(())
}

fn tolerance(args: ToleranceArgs) -> Result<()> {
    let spec = args.model.spec()?;
    let model = spec.build_model()?;
    let m = spec.boundary_order();
    let tol_spec = ToleranceSpec {
        defect: args.defect,
        scale: args.scale,
        alpha: args.alpha,
        nu: spec.nu,
        n_values: args.n.to_range().step_by(args.n_step.max(1)).collect(),
        tol: args.tol.unwrap_or(spec.tol),
        intervals: spec.intervals,
        seed: args.seed,
    };
    let report = adia_core::harness::with_jobs(spec.jobs, || tolerance_sweep(&model, m, &tol_spec))??;
    let mut w = csv::Writer::from_writer(sink(&args.output)?);
    for row in &report.rows {
        w.serialize(row)?;
    }
    w.flush()?;
    drop(w);
    eprintln!(
        "{} defect, m = {}: even-n exponent {:.4} over {} points; order {} {}",
        report.defect,
        report.m,
        report.fit.exponent,
        report.fit.points.len(),
        report.m + 2,
        if report.survives { "survives" } else { "is lost" }
    );
    Ok(())
}

fn fit(args: FitArgs) -> Result<()> {
    let input = args.input.or(args.path).expect("clap requires one source");
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(File::open(&input).map_err(|e| {
            AdiaError::Io(e).context(format!("cannot open {}", input.display()))
        })?);
    let mut series = Vec::new();
    for row in reader.deserialize::<SweepRow>() {
        let row = row.map_err(|e| AdiaError::Format(format!("{}: {e}", input.display())))?;
        if !args.parity.admits(row.n) {
            continue;
        }
        let value = match args.column.as_str() {
            "amp_abs" => row.amp_abs,
            "err_norm" => row.err_norm,
            "amp_pred" => row.amp_pred,
            other => return Err(AdiaError::Validation(format!("cannot fit column '{other}'"))),
        };
        series.push((row.t, value));
    }
    let (t_min, t_max) = args.window.unwrap_or((args.t_min, args.t_max));
    let window = FitWindow {
        t_min,
        t_max,
        floor: args.floor,
    };
    let fit = fit_power_law(&series, &window)?;
    let parity = match args.parity {
        ParityFilter::Even => Parity::Even.to_string(),
        ParityFilter::Odd => Parity::Odd.to_string(),
        ParityFilter::All => "all".into(),
    };
    println!(
        "{parity}: exponent {:.6} intercept {:.6} rms {:.3e} points {}",
        fit.exponent,
        fit.intercept,
        fit.residual_rms,
        fit.points.len()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                _ if !e.use_stderr() => ExitCode::SUCCESS,
                ErrorKind::ValueValidation | ErrorKind::InvalidValue => ExitCode::from(EXIT_VALIDATION),
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    let result = match cli.command {
        Command::Timings(a) => timings(a),
        Command::Evolve(a) => evolve_cmd(a),
        Command::Predict(a) => predict(a),
        Command::Sweep(a) => sweep(a),
        Command::Tolerance(a) => tolerance(a),
        Command::Fit(a) => fit(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { EXIT_NUMERIC } else { EXIT_VALIDATION })
        }
    }
}
