//! `sgflow` command-line driver.
//!
//! Exit codes: 0 success, 1 verification failures, 2 validation errors,
//! 3 state blow-up, 4 optimizer line-search failure.

use clap::{Args, Parser, Subcommand};
use sgflow_core::config::{parse_config, ProblemConfig};
use sgflow_core::error::{OptimError, SolveError};
use sgflow_core::optimizer::{optimize, OptimStatus};
use sgflow_core::randfield::{random_control, rng_from_seed};
use sgflow_core::report::{
    self, DualityReport, OptimReportFile, RunManifest,
};
use sgflow_core::sensitivity::{
    adjoint_energy_residuals, gateaux_check, greens_gap, linearized_energy_residuals,
    solve_adjoint, solve_linearized, ForcingSeries,
};
use sgflow_core::state::{curl_transport_residual, energy_ledger, simulate};
use sgflow_core::verify::{run_suite, Suite};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "sgflow", version, about = "Spectral-Galerkin flow control toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the state equation and write the trajectory summary.
    Simulate(RunArgs),
    /// Solve the linearized equation around the configured state.
    Linearize(RunArgs),
    /// Solve the adjoint equation backward in time.
    Adjoint(RunArgs),
    /// Directional-derivative and finite-difference gradient checks.
    Gradcheck(RunArgs),
    /// Projected-gradient minimization of the tracking functional.
    Optimize(RunArgs),
    /// Run a seeded verification battery.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON problem configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Seed for any randomized auxiliary data.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Dump full field snapshots every S steps (0 = off).
    #[arg(long, default_value_t = 0, value_name = "S")]
    dump_every: usize,
}

#[derive(Args)]
struct VerifyArgs {
    /// Which battery to run.
    #[arg(long, default_value = "all", value_name = "NAME")]
    suite: String,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Optional directory for the JSON report (also printed to stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Simulate(args) => run(&args, cmd_simulate),
        Command::Linearize(args) => run(&args, cmd_linearize),
        Command::Adjoint(args) => run(&args, cmd_adjoint),
        Command::Gradcheck(args) => run(&args, cmd_gradcheck),
        Command::Optimize(args) => run(&args, cmd_optimize),
        Command::Verify(args) => cmd_verify(&args),
    };
    ExitCode::from(code)
}

#[derive(Debug)]
enum CmdError {
    Validation(String),
    BlowUp(usize),
    LineSearch(String),
    Io(std::io::Error),
}

impl From<SolveError> for CmdError {
    fn from(e: SolveError) -> Self {
        match e {
            SolveError::BlowUp { step } => CmdError::BlowUp(step),
            SolveError::Config(msg) => CmdError::Validation(msg),
        }
    }
}

impl From<OptimError> for CmdError {
    fn from(e: OptimError) -> Self {
        match e {
            OptimError::Solve(s) => s.into(),
            OptimError::LineSearchFail { iter, shrinks } => CmdError::LineSearch(format!(
                "line search failed after {shrinks} shrinks at iteration {iter}"
            )),
            OptimError::Setup(msg) => CmdError::Validation(msg),
        }
    }
}

impl From<std::io::Error> for CmdError {
    fn from(e: std::io::Error) -> Self {
        CmdError::Io(e)
    }
}

struct RunContext<'a> {
    cfg: ProblemConfig,
    args: &'a RunArgs,
    manifest: RunManifest,
    manifest_path: PathBuf,
}

impl RunContext<'_> {
    fn record(&mut self, path: &Path) -> Result<(), CmdError> {
        self.manifest.record(&self.args.out, path)?;
        Ok(())
    }

    fn record_with_sidecar(&mut self, path: &Path) -> Result<(), CmdError> {
        self.record(path)?;
        self.record(&path.with_extension("json"))
    }
}

fn run(args: &RunArgs, body: fn(&mut RunContext) -> Result<(), CmdError>) -> u8 {
    let cfg = match parse_config(&args.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("sgflow: {e}");
            return 2;
        }
    };
    if let Err(e) = std::fs::create_dir_all(&args.out) {
        eprintln!("sgflow: cannot create output directory: {e}");
        return 2;
    }
    let echo = serde_json::to_value(&cfg).expect("config echoes");
    let (manifest, manifest_path) = match RunManifest::begin(&args.out, echo, args.seed) {
        Ok(pair) => pair,
        Err(e) => {
            eprintln!("sgflow: cannot write manifest: {e}");
            return 2;
        }
    };
    let mut ctx = RunContext {
        cfg,
        args,
        manifest,
        manifest_path,
    };
    match body(&mut ctx) {
        Ok(()) => {
            if let Err(e) = ctx.manifest.finish(&ctx.manifest_path) {
                eprintln!("sgflow: cannot finalize manifest: {e}");
                return 2;
            }
            0
        }
        Err(CmdError::Validation(msg)) => {
            eprintln!("sgflow: {msg}");
            2
        }
        Err(CmdError::BlowUp(step)) => {
            eprintln!("sgflow: state blew up at step {step}");
            3
        }
        Err(CmdError::LineSearch(msg)) => {
            eprintln!("sgflow: {msg}");
            4
        }
        Err(CmdError::Io(e)) => {
            eprintln!("sgflow: io error: {e}");
            2
        }
    }
}

fn cmd_simulate(ctx: &mut RunContext) -> Result<(), CmdError> {
    let cfg = ctx.cfg.clone();
    let tables = cfg.tables()?;
    let scfg = cfg.solver_config();
    let y0 = cfg.initial_field();
    let u = cfg.control();
    let traj = simulate(&tables, &scfg, &y0, &u)?;
    let ledger = energy_ledger(&tables, &traj, &u, &scfg);

    let summary_path = ctx.args.out.join("summary.csv");
    report::write_summary_csv(&summary_path, &tables, &traj, &ledger.residuals)?;
    ctx.record(&summary_path)?;

    let final_path = ctx.args.out.join("y_final.csv");
    report::write_field_csv(&final_path, tables.basis(), traj.last())?;
    ctx.record_with_sidecar(&final_path)?;

    #[derive(serde::Serialize)]
    struct Monitors {
        summary: report::SimulationSummary,
        #[serde(skip_serializing_if = "Option::is_none")]
        apriori: Option<sgflow_core::state::AprioriReport>,
        #[serde(skip_serializing_if = "Option::is_none")]
        max_curl_transport_residual: Option<f64>,
    }
    let (apriori, transport) = if scfg.alpha > 0.0 {
        let ap = sgflow_core::state::apriori_monitor(&tables, &traj, &u, &scfg)
            .map_err(|v| CmdError::Validation(v.to_string()))?;
        let tr = curl_transport_residual(&tables, &traj, &u, &scfg)?
            .into_iter()
            .fold(0.0, f64::max);
        (Some(ap), Some(tr))
    } else {
        (None, None)
    };
    let monitors = Monitors {
        summary: report::summarize(&scfg, &traj, &ledger),
        apriori,
        max_curl_transport_residual: transport,
    };
    let mon_path = ctx.args.out.join("monitors.json");
    std::fs::write(
        &mon_path,
        serde_json::to_string_pretty(&monitors).expect("monitors serialize"),
    )?;
    ctx.record(&mon_path)?;

    if ctx.args.dump_every > 0 {
        for p in report::dump_snapshots(&ctx.args.out, &tables, &traj, ctx.args.dump_every, "y")? {
            ctx.record(&p)?;
        }
    }
    println!(
        "simulate: {} steps, E(0) = {}, E(T) = {}",
        traj.n_steps(),
        ledger.energy[0],
        ledger.energy.last().unwrap()
    );
    Ok(())
}

fn cmd_linearize(ctx: &mut RunContext) -> Result<(), CmdError> {
    let cfg = ctx.cfg.clone();
    let spec = cfg
        .linearize
        .as_ref()
        .ok_or_else(|| CmdError::Validation("`linearize.w` section is required".into()))?;
    let tables = cfg.tables()?;
    let scfg = cfg.solver_config();
    let y0 = cfg.initial_field();
    let u = cfg.control();
    let w = cfg.control_from_spec(&spec.w);
    let y = simulate(&tables, &scfg, &y0, &u)?;
    let run = solve_linearized(&tables, &scfg, &y, &y, &w)?;
    let residuals = linearized_energy_residuals(&tables, &scfg, &run, &y, &w);

    let summary_path = ctx.args.out.join("z_summary.csv");
    report::write_summary_csv(&summary_path, &tables, &run.z, &residuals)?;
    ctx.record(&summary_path)?;

    let final_path = ctx.args.out.join("z_final.csv");
    report::write_field_csv(&final_path, tables.basis(), run.z.last())?;
    ctx.record_with_sidecar(&final_path)?;

    if ctx.args.dump_every > 0 {
        for p in report::dump_snapshots(&ctx.args.out, &tables, &run.z, ctx.args.dump_every, "z")? {
            ctx.record(&p)?;
        }
    }
    println!(
        "linearize: {} steps, max energy-identity residual {}",
        run.z.n_steps(),
        residuals.iter().fold(0.0_f64, |a, r| a.max(r.abs()))
    );
    Ok(())
}

fn cmd_adjoint(ctx: &mut RunContext) -> Result<(), CmdError> {
    let cfg = ctx.cfg.clone();
    let tables = cfg.tables()?;
    let scfg = cfg.solver_config();
    let y0 = cfg.initial_field();
    let u = cfg.control();
    let y = simulate(&tables, &scfg, &y0, &u)?;
    let f = cfg.adjoint_forcing(&tables)?;
    let run = solve_adjoint(&tables, &scfg, &y, &f)?;
    let residuals = adjoint_energy_residuals(&tables, &scfg, &run, &y, &f);

    let summary_path = ctx.args.out.join("p_summary.csv");
    report::write_summary_csv(&summary_path, &tables, &run.p, &residuals)?;
    ctx.record(&summary_path)?;

    let p0_path = ctx.args.out.join("p_initial.csv");
    report::write_field_csv(&p0_path, tables.basis(), run.p.snapshot(0))?;
    ctx.record_with_sidecar(&p0_path)?;

    if ctx.args.dump_every > 0 {
        for p in report::dump_snapshots(&ctx.args.out, &tables, &run.p, ctx.args.dump_every, "p")? {
            ctx.record(&p)?;
        }
    }
    println!(
        "adjoint: {} steps, ||p(0)|| = {}",
        run.p.n_steps(),
        run.p.snapshot(0).norm_l2()
    );
    Ok(())
}

fn cmd_gradcheck(ctx: &mut RunContext) -> Result<(), CmdError> {
    let cfg = ctx.cfg.clone();
    let tables = cfg.tables()?;
    let scfg = cfg.solver_config();
    let y0 = cfg.initial_field();
    let u = cfg.control();
    let y_d = cfg.target(&tables)?;
    let gspec = cfg.gradcheck.clone().unwrap_or_default();
    let mut rng = rng_from_seed(ctx.args.seed);
    let w = random_control(tables.basis(), &mut rng, u.n_intervals(), cfg.t_final, 1.0);

    let table = gateaux_check(&tables, &scfg, &y0, &u, &w, &gspec.rhos, &y_d, cfg.lambda)?;
    let slope_path = ctx.args.out.join("gateaux_slopes.csv");
    report::write_slope_csv(&slope_path, &table)?;
    ctx.record(&slope_path)?;

    // duality gap at dt and dt/2 with the same data
    let y = simulate(&tables, &scfg, &y0, &u)?;
    let f = ForcingSeries::tracking_deviation(&y, &y_d);
    let gap = greens_gap(&tables, &scfg, &w, &f, &y)?;
    let mut half = scfg;
    half.dt *= 0.5;
    let y_half = simulate(&tables, &half, &y0, &u)?;
    let f_half = ForcingSeries::tracking_deviation(&y_half, &y_d);
    let gap_half = greens_gap(&tables, &half, &w, &f_half, &y_half)?;
    let duality = DualityReport {
        gap: gap.gap,
        gap_half_dt: gap_half.gap,
        ratio: gap.gap / gap_half.gap.max(1e-300),
    };
    let dual_path = ctx.args.out.join("duality.json");
    std::fs::write(
        &dual_path,
        serde_json::to_string_pretty(&duality).expect("duality serializes"),
    )?;
    ctx.record(&dual_path)?;

    // central differences along seeded directions
    let (g, _) = sgflow_core::optimizer::gradient(&tables, &scfg, &y0, &u, &y_d, cfg.lambda)?;
    let mut fd_rows = Vec::new();
    let mut worst = 0.0_f64;
    for k in 0..gspec.directions as u64 {
        let mut drr = rng_from_seed(ctx.args.seed.wrapping_add(1 + k));
        let dir = random_control(tables.basis(), &mut drr, u.n_intervals(), cfg.t_final, 1.0);
        let mut up = u.clone();
        up.axpy(gspec.fd_rho, &dir);
        let mut um = u.clone();
        um.axpy(-gspec.fd_rho, &dir);
        let (jp, _) =
            sgflow_core::sensitivity::evaluate_j(&tables, &scfg, &y0, &up, &y_d, cfg.lambda)?;
        let (jm, _) =
            sgflow_core::sensitivity::evaluate_j(&tables, &scfg, &y0, &um, &y_d, cfg.lambda)?;
        let fd = (jp - jm) / (2.0 * gspec.fd_rho);
        let an = g.inner(&dir);
        let rel = (fd - an).abs() / an.abs().max(1e-300);
        worst = worst.max(rel);
        fd_rows.push(serde_json::json!({
            "direction": k,
            "finite_difference": fd,
            "adjoint": an,
            "relative_error": rel,
        }));
    }
    let check_path = ctx.args.out.join("gradcheck.json");
    std::fs::write(
        &check_path,
        serde_json::to_string_pretty(&serde_json::json!({
            "dj_linearized": table.dj_linearized,
            "dj_adjoint": table.dj_adjoint,
            "fd_directions": fd_rows,
            "max_relative_error": worst,
        }))
        .expect("gradcheck serializes"),
    )?;
    ctx.record(&check_path)?;
    println!(
        "gradcheck: max FD relative error {worst}, duality gap {} (ratio {})",
        duality.gap, duality.ratio
    );
    Ok(())
}

fn cmd_optimize(ctx: &mut RunContext) -> Result<(), CmdError> {
    let cfg = ctx.cfg.clone();
    let tables = cfg.tables()?;
    let scfg = cfg.solver_config();
    let y0 = cfg.initial_field();
    let y_d = cfg.target(&tables)?;
    let n_intervals = cfg.control.as_ref().map(|c| c.n_intervals).unwrap_or(8);
    if scfg.n_steps() % n_intervals != 0 {
        return Err(CmdError::Validation(format!(
            "control.n_intervals {n_intervals} must divide the {} steps",
            scfg.n_steps()
        )));
    }
    let set = cfg.admissible_set(n_intervals)?;
    let opts = cfg.optim_options();
    let report = optimize(
        &tables, &scfg, &y0, &y_d, &set, cfg.lambda, n_intervals, &opts,
    )?;

    let control_path = ctx.args.out.join("final_control.csv");
    report::write_control_csv(&control_path, tables.basis(), &report.final_u)?;
    ctx.record_with_sidecar(&control_path)?;

    let file = OptimReportFile {
        status: report.status,
        iters: report.iterates.clone(),
        final_control_file: "final_control.csv".to_string(),
    };
    let report_path = ctx.args.out.join("optim_report.json");
    std::fs::write(
        &report_path,
        serde_json::to_string_pretty(&file).expect("report serializes"),
    )?;
    ctx.record(&report_path)?;

    let last = report.iterates.last().unwrap();
    println!(
        "optimize: {:?} after {} iterations, J = {}, vi residual = {}",
        report.status,
        report.iterates.len() - 1,
        last.j,
        last.vi_residual
    );
    if report.status == OptimStatus::IterLimit {
        eprintln!("sgflow: iteration limit reached before the tolerance");
    }
    Ok(())
}

fn cmd_verify(args: &VerifyArgs) -> u8 {
    let Some(suite) = Suite::parse(&args.suite) else {
        eprintln!(
            "sgflow: unknown suite `{}` (expected all|forms|state|sensitivity|optimizer)",
            args.suite
        );
        return 2;
    };
    let report = run_suite(suite, args.seed);
    let json = report.to_json();
    print!("{json}");
    if let Some(dir) = &args.out {
        if let Err(e) = std::fs::create_dir_all(dir) {
            eprintln!("sgflow: cannot create output directory: {e}");
            return 2;
        }
        let path = dir.join("verify_report.json");
        if let Err(e) = std::fs::write(&path, &json) {
            eprintln!("sgflow: cannot write report: {e}");
            return 2;
        }
    }
    if report.all_passed {
        0
    } else {
        eprintln!("sgflow: failed checks: {:?}", report.failed_checks());
        1
    }
}
