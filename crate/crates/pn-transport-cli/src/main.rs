//! Command-line runner: stationary and transient solves of the
//! manufactured benchmark problem, the three convergence studies, the
//! self-check suite, and debug matrix dumps.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 solver failure,
//! 3 verification failure.

mod config;

use clap::{Args, Parser, Subcommand, ValueEnum};
use config::RunConfig;
use pn_transport::angular_basis::{halfrange_matrix, streaming_matrices, AngularBasis};
use pn_transport::benchmark_harness::{
    ErrorAccumulator, ErrorTriple, ManufacturedSolution, SourceAssembler, StudyKind,
};
use pn_transport::linear_solvers::solve_stationary;
use pn_transport::output::{
    write_mode_matrix_csv, write_mode_triplets_csv, write_scalar_flux, write_spatial_matrix_csv,
};
use pn_transport::simulation::{run_transient, TransientConfig};
use pn_transport::spatial_mesh::{assemble_spatial, dof_count};
use pn_transport::transport_operators::TransportSystem;
use pn_transport::TransportError;
use std::io::Write as _;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "pn-transport",
    version,
    about = "Mixed even/odd-parity PN finite-element solver for time-dependent radiative transfer",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Overrides {
    /// JSON config file; flags below override its values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Angular truncation order (odd).
    #[arg(long = "N", global = true, value_name = "ODD_INT")]
    n: Option<usize>,
    /// Mesh divisions: a comma-separated list; spatial studies sweep it,
    /// single-mesh commands use the last entry.
    #[arg(long, global = true, value_name = "CSV_LIST")]
    divisions: Option<String>,
    /// Implicit Euler step size.
    #[arg(long, global = true, value_name = "FLOAT")]
    tau: Option<f64>,
    /// Final time.
    #[arg(long = "t-end", global = true, value_name = "FLOAT")]
    t_end: Option<f64>,
    /// Relative solver tolerance.
    #[arg(long, global = true, value_name = "FLOAT")]
    tol: Option<f64>,
    /// Worker threads for study sweep points.
    #[arg(long, global = true, value_name = "INT")]
    jobs: Option<usize>,
    /// Print the resolved configuration and extra run details.
    #[arg(long, global = true)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the stationary benchmark problem and write a summary.
    Stationary,
    /// Run the transient benchmark problem and write the energy trace.
    Transient,
    /// Run a convergence study and write its error table.
    Study {
        #[arg(long, value_enum)]
        kind: StudyKindArg,
    },
    /// Run every built-in oracle and property check.
    Verify,
    /// Write the angular and spatial matrices as CSV files.
    DumpMatrices,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum StudyKindArg {
    Angular,
    Spatial,
    Temporal,
}

impl From<StudyKindArg> for StudyKind {
    fn from(k: StudyKindArg) -> Self {
        match k {
            StudyKindArg::Angular => StudyKind::Angular,
            StudyKindArg::Spatial => StudyKind::Spatial,
            StudyKindArg::Temporal => StudyKind::Temporal,
        }
    }
}

fn main() {
    // Rust starts with SIGPIPE ignored, which turns a closed stdout pipe
    // (e.g. `pn-transport study ... | head`) into a println! panic. Restore
    // the default disposition so the process ends quietly like any filter.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    std::process::exit(real_main());
}

fn real_main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders its own usage/help text; help requests are not
            // errors.
            let help = e.use_stderr();
            let _ = e.print();
            return if help { 1 } else { 0 };
        }
    };

    let cfg = match resolve_config(&cli.overrides) {
        Ok(cfg) => cfg,
        Err(msg) => {
            eprintln!("error: {msg}");
            return 1;
        }
    };

    if cfg.verbose {
        match serde_json::to_string_pretty(&cfg) {
            Ok(text) => eprintln!("resolved configuration:\n{text}"),
            Err(e) => eprintln!("error: cannot render configuration: {e}"),
        }
    }

    match run_command(&cli.command, &cfg) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Config file first, then flag overrides, then validation.
fn resolve_config(overrides: &Overrides) -> Result<RunConfig, String> {
    let mut cfg = match &overrides.config {
        Some(path) => config::load_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &overrides.out {
        cfg.out_dir = out.clone();
    }
    if let Some(n) = overrides.n {
        cfg.n = Some(n);
    }
    if let Some(list) = &overrides.divisions {
        let parsed: Result<Vec<usize>, _> =
            list.split(',').map(|p| p.trim().parse::<usize>()).collect();
        cfg.divisions =
            Some(parsed.map_err(|e| format!("invalid --divisions list '{list}': {e}"))?);
    }
    if let Some(tau) = overrides.tau {
        cfg.tau = Some(tau);
    }
    if let Some(t_end) = overrides.t_end {
        cfg.t_end = Some(t_end);
    }
    if let Some(tol) = overrides.tol {
        cfg.tolerance = tol;
    }
    if let Some(jobs) = overrides.jobs {
        cfg.jobs = jobs;
    }
    if overrides.verbose {
        cfg.verbose = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn exit_code(e: &TransportError) -> i32 {
    match e {
        TransportError::SolverDiverged { .. } => 2,
        TransportError::StepFailed { source, .. } | TransportError::StudyPoint { source, .. } => {
            exit_code(source)
        }
        _ => 1,
    }
}

fn run_command(command: &Command, cfg: &RunConfig) -> Result<i32, TransportError> {
    match command {
        Command::Stationary => run_stationary(cfg),
        Command::Transient => run_transient_cmd(cfg),
        Command::Study { kind } => run_study_cmd(cfg, (*kind).into()),
        Command::Verify => Ok(run_verify()),
        Command::DumpMatrices => run_dump(cfg),
    }
}

fn build_system(cfg: &RunConfig) -> Result<TransportSystem, TransportError> {
    let n = cfg.n();
    let basis = AngularBasis::new(n)?;
    let mesh = cfg.mesh()?;
    let collision = cfg.collision(n)?;
    TransportSystem::new(basis, mesh, collision)
}

fn ensure_out_dir(cfg: &RunConfig) -> Result<(), TransportError> {
    std::fs::create_dir_all(&cfg.out_dir)?;
    Ok(())
}

/// Builds the file content in memory, then writes it in one call so write
/// errors surface instead of vanishing in a drop-time flush.
fn write_file(
    path: &Path,
    build: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
) -> Result<(), TransportError> {
    let mut buf = Vec::new();
    build(&mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

fn error_lines(errors: &ErrorTriple) -> String {
    format!(
        "e_plus  = {:.5e}\nE_plus  = {:.5e}\ne_minus = {:.5e}\n",
        errors.e_plus, errors.e_big, errors.e_minus
    )
}

fn run_stationary(cfg: &RunConfig) -> Result<i32, TransportError> {
    ensure_out_dir(cfg)?;
    let sys = build_system(cfg)?;
    let sol = ManufacturedSolution::new(cfg.n_max());
    let asm = SourceAssembler::new(&sys, sol, false)?;
    let (state, stats) = solve_stationary(&sys, &asm.stationary_load(), &cfg.solver())?;

    // The stationary benchmark solution is the g = 1 limit of the
    // manufactured solution; measure the error at that limit.
    let mut acc = ErrorAccumulator::new(&asm);
    acc.observe(0, f64::INFINITY, &state);
    let errors = acc.finish();

    let summary = format!(
        "stationary solve\n\
         dofs            = {}\n\
         cg_iterations   = {}\n\
         residual_bound  = {:.3e}\n{}",
        dof_count(sys.basis(), sys.mesh()),
        stats.iterations,
        stats.residual,
        error_lines(&errors)
    );
    print!("{summary}");
    let path = cfg.out_dir.join("stationary_summary.txt");
    write_file(&path, |buf| write!(buf, "{summary}"))?;
    let flux = cfg.out_dir.join("scalar_flux.vtk");
    write_scalar_flux(&state, sys.mesh(), &flux)?;
    println!("wrote {} and {}", path.display(), flux.display());
    Ok(0)
}

fn run_transient_cmd(cfg: &RunConfig) -> Result<i32, TransportError> {
    ensure_out_dir(cfg)?;
    let sys = build_system(cfg)?;
    let sol = ManufacturedSolution::new(cfg.n_max());
    let asm = SourceAssembler::new(&sys, sol, false)?;
    let solver = cfg.solver();

    // The stationary solution is the t -> infinity limit; use it as the
    // steady reference of the energy trace.
    let (steady, _) = solve_stationary(&sys, &asm.stationary_load(), &solver)?;

    let transient =
        TransientConfig { tau: cfg.tau(), t_end: cfg.t_end(), record_every: cfg.record_every };
    let mut acc = ErrorAccumulator::new(&asm);
    let result = run_transient(
        &sys,
        &transient,
        &solver,
        |t| asm.load_at(t),
        sys.zero_field(),
        Some(&steady),
        |step, t, state| acc.observe(step, t, state),
    )?;
    let errors = acc.finish();

    for w in &result.warnings {
        eprintln!("warning: {w}");
    }

    let trace_path = cfg.out_dir.join("energy_trace.csv");
    write_file(&trace_path, |buf| result.trace.write_csv(buf))?;
    let errors_path = cfg.out_dir.join("transient_errors.txt");
    write_file(&errors_path, |buf| write!(buf, "{}", error_lines(&errors)))?;
    let flux = cfg.out_dir.join("scalar_flux.vtk");
    write_scalar_flux(&result.final_state, sys.mesh(), &flux)?;

    print!(
        "transient run\n\
         steps           = {}\n\
         cg_iterations   = {}\n{}",
        transient.n_steps(),
        result.total_cg_iterations,
        error_lines(&errors)
    );
    println!(
        "wrote {}, {} and {}",
        trace_path.display(),
        errors_path.display(),
        flux.display()
    );
    Ok(0)
}

fn run_study_cmd(cfg: &RunConfig, kind: StudyKind) -> Result<i32, TransportError> {
    ensure_out_dir(cfg)?;
    let study = cfg.study(kind);
    if cfg.verbose {
        eprintln!(
            "study {kind}: sweep {:?}, n_max {}, held N {}, divisions {}, tau {}, t_end {}",
            study.sweep, study.n_max, study.n, study.divisions, study.tau, study.t_end
        );
    }
    let report = pn_transport::benchmark_harness::run_study(&study)?;
    let path = cfg.out_dir.join(format!("study_{kind}.csv"));
    let mut table = Vec::new();
    report.write_csv(&mut table)?;
    std::fs::write(&path, &table)?;
    print!("{}", String::from_utf8_lossy(&table));
    println!("wrote {}", path.display());
    Ok(0)
}

fn run_verify() -> i32 {
    let results = pn_transport::verify::run_all();
    let mut failures = 0usize;
    for r in &results {
        let tag = if r.passed { "PASS" } else { "FAIL" };
        println!("{tag}  {}: {}", r.name, r.detail);
        if !r.passed {
            failures += 1;
        }
    }
    println!("{} of {} checks passed", results.len() - failures, results.len());
    if failures == 0 {
        0
    } else {
        3
    }
}

fn run_dump(cfg: &RunConfig) -> Result<i32, TransportError> {
    ensure_out_dir(cfg)?;
    let n = cfg.n();
    let basis = AngularBasis::new(n)?;
    let streaming = streaming_matrices(&basis);
    for (d, name) in [(0usize, "streaming_a1.csv"), (1, "streaming_a2.csv"), (2, "streaming_a3.csv")]
    {
        let path = cfg.out_dir.join(name);
        write_file(&path, |buf| {
            write_mode_triplets_csv(buf, basis.odd_modes(), basis.even_modes(), streaming.triplets(d))
        })?;
    }
    for (normal, name) in [
        ([1.0, 0.0, 0.0], "halfrange_px.csv"),
        ([-1.0, 0.0, 0.0], "halfrange_mx.csv"),
        ([0.0, 0.0, 1.0], "halfrange_pz.csv"),
        ([0.0, 0.0, -1.0], "halfrange_mz.csv"),
    ] {
        let hr = halfrange_matrix(&basis, normal)?;
        let path = cfg.out_dir.join(name);
        write_file(&path, |buf| {
            write_mode_matrix_csv(buf, basis.even_modes(), basis.even_modes(), hr.matrix.view())
        })?;
    }
    let collision = cfg.collision(n)?;
    for (modes, name) in
        [(basis.even_modes(), "collision_even.csv"), (basis.odd_modes(), "collision_odd.csv")]
    {
        let mut diag = ndarray::Array2::zeros((modes.len(), modes.len()));
        for (i, mode) in modes.iter().enumerate() {
            diag[[i, i]] = collision.eigenvalue(mode.l);
        }
        let path = cfg.out_dir.join(name);
        write_file(&path, |buf| write_mode_matrix_csv(buf, modes, modes, diag.view()))?;
    }
    let mesh = cfg.mesh()?;
    let spatial = assemble_spatial(&mesh);
    let path = cfg.out_dir.join("mass_p1.csv");
    write_file(&path, |buf| write_spatial_matrix_csv(buf, &spatial.m_plus))?;
    println!("wrote matrix dumps to {}", cfg.out_dir.display());
    Ok(0)
}
