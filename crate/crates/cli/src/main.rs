use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use serde_json::{json, Value};

use team_align::alignment::{certify, deviation_bound, CheckOptions};
use team_align::equilibrium::{
    solve_ne, solve_team_optimum, tau_in_window, EquilibriumResult, SolverConfig, DEFAULT_MAX_ITER, DEFAULT_TOL,
};
use team_align::mediator::{estimate_nu_psi, run_mediation, MediationConfig, Scenario, StepSchedule};
use team_align::model::{self, estimate_constants, Params, ProblemSpec};
use team_align::netio::{self, export_trace, load_problem, save_problem, TraceFormat};
use team_align::sweep::{run_sweep, write_sweep_csv, ExperimentGrid, SweepContext};
use team_align::Error;

#[derive(Parser)]
#[command(name = "team-align", version, about = "Team/member alignment in parameterized games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Nash equilibrium of the members' game.
    SolveNe(SolveArgs),
    /// Team-optimal profile.
    SolveTeam(SolveArgs),
    /// Consistency verdict and deviation certificate at an adjustment.
    Check(CheckArgs),
    /// Bilevel mediation of the members' parameters.
    Mediate(MediateArgs),
    /// Member-parameter grid sweep, one CSV row per cell.
    Sweep(SweepArgs),
    /// Writes the bundled traffic instance as a problem file.
    ExportBundled(ExportArgs),
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    problem: PathBuf,
    /// Adjustment θ as a JSON array (NE only; defaults to zero).
    #[arg(long)]
    theta: Option<PathBuf>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    max_iter: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long)]
    problem: PathBuf,
    #[arg(long)]
    theta: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MediateArgs {
    #[arg(long)]
    problem: PathBuf,
    /// `dimin:c`, `fixed:eta`, or `fixed:auto` (η = 1.8/ν̂_ψ).
    #[arg(long, default_value = "fixed:auto")]
    schedule: String,
    /// `alpha`, `gamma`, `alpha-beta` or `all`.
    #[arg(long, default_value = "all")]
    scenario: String,
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-iteration trace; the format follows the extension (`.csv` or `.json`).
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    problem: PathBuf,
    /// JSON grid `{alpha_values, beta_values, gamma_values, unison}`; defaults
    /// to the 4 × 4 × 4 grid.
    #[arg(long)]
    grid: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    out: PathBuf,
    /// Member parameters `alpha,beta,gamma` shared by every member.
    #[arg(long, default_value = "2,0.3,10")]
    member: String,
}

/// Failure with its exit code: 1 for input errors, 2 for numerical ones.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self {
            code: if e.is_numerical() { 2 } else { 1 },
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Error::from(e).into()
    }
}

fn input_error(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::SolveNe(a) => cmd_solve(a, true),
        Command::SolveTeam(a) => cmd_solve(a, false),
        Command::Check(a) => cmd_check(a),
        Command::Mediate(a) => cmd_mediate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::ExportBundled(a) => cmd_export(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load_spec(path: &Path) -> Result<ProblemSpec, Failure> {
    load_problem(path)
        .map(|p| p.spec)
        .map_err(|e| input_error(format!("{}: {e}", path.display())))
}

fn load_theta(spec: &ProblemSpec, path: Option<&Path>) -> Result<DVector<f64>, Failure> {
    let Some(path) = path else {
        return Ok(spec.zero_theta());
    };
    let text = std::fs::read_to_string(path).map_err(|e| input_error(format!("{}: {e}", path.display())))?;
    let v: Vec<f64> =
        serde_json::from_str(&text).map_err(|e| input_error(format!("{}: {e}", path.display())))?;
    if v.len() != spec.theta_dim() {
        return Err(input_error(format!(
            "{}: expected {} entries, got {}",
            path.display(),
            spec.theta_dim(),
            v.len()
        )));
    }
    Ok(DVector::from_vec(v))
}

fn write_json(out: Option<&Path>, value: &Value) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)? + "\n";
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn vec_json(v: &DVector<f64>) -> Value {
    json!(v.as_slice())
}

fn equilibrium_json(r: &EquilibriumResult) -> Value {
    json!({
        "kind": r.kind,
        "point": vec_json(&r.point),
        "residual": r.residual,
        "iterations": r.iterations,
        "tau": r.tau,
        "tau_certified": r.tau_certified,
        "residual_trace": r.residual_trace,
    })
}

fn start_point(spec: &ProblemSpec) -> Result<DVector<f64>, Failure> {
    Ok(spec.project_profile(&DVector::zeros(spec.profile_dim()))?)
}

fn cmd_solve(a: SolveArgs, ne: bool) -> Result<u8, Failure> {
    let spec = load_spec(&a.problem)?;
    let theta = load_theta(&spec, a.theta.as_deref())?;
    if let Some(tau) = a.tau {
        let field = if ne { spec.game_field(&theta)? } else { spec.team_field() };
        let (kappa, nu, certified) = model::field_constants(&spec, &field, model::DEFAULT_CONSTANT_SAMPLES, 17)?;
        if certified && !tau_in_window(tau, kappa, nu) {
            eprintln!(
                "warning: tau = {tau} is outside the contraction window (0, {:.6e}); running anyway",
                2.0 * kappa / (nu * nu)
            );
        }
    }
    let cfg = SolverConfig {
        tau: a.tau,
        tol: a.tol,
        max_iter: a.max_iter,
        record_trace: false,
    };
    let u0 = start_point(&spec)?;
    let result = if ne {
        solve_ne(&spec, &theta, &cfg, &u0)?
    } else {
        solve_team_optimum(&spec, &cfg, &u0)?
    };
    write_json(a.out.as_deref(), &equilibrium_json(&result))?;
    Ok(if result.residual <= a.tol { 0 } else { 2 })
}

fn cmd_check(a: CheckArgs) -> Result<u8, Failure> {
    let spec = load_spec(&a.problem)?;
    let theta = load_theta(&spec, a.theta.as_deref())?;
    let cfg = SolverConfig::default();
    let u0 = start_point(&spec)?;
    let ne = solve_ne(&spec, &theta, &cfg, &u0)?;
    let opt = solve_team_optimum(&spec, &cfg, &u0)?;
    let verdict = certify(&spec, &theta, &ne.point, &CheckOptions::default())?;
    let certificate = match estimate_constants(&spec, &theta)
        .and_then(|c| deviation_bound(&spec, &theta, &ne.point, &c, Some(&opt.point)))
    {
        Ok(c) => serde_json::to_value(c).map_err(Error::from)?,
        Err(e @ Error::VacuousBound(_)) => json!({ "error": e.to_string() }),
        Err(e) => return Err(e.into()),
    };
    let value = json!({
        "verdict": verdict.verdict,
        "cr": verdict.verdict.cr(),
        "consistency": verdict,
        "deviation": certificate,
        "ne": vec_json(&ne.point),
        "team_optimum": vec_json(&opt.point),
    });
    write_json(a.out.as_deref(), &value)?;
    Ok(0)
}

fn parse_schedule(
    s: &str,
    spec: &ProblemSpec,
    u_star: &DVector<f64>,
    mask: &[bool],
) -> Result<StepSchedule, Failure> {
    let bad = || input_error(format!("bad schedule '{s}', expected dimin:c, fixed:eta or fixed:auto"));
    let (kind, value) = s.split_once(':').ok_or_else(bad)?;
    match (kind, value) {
        ("fixed", "auto") => {
            let nu = estimate_nu_psi(&spec, &spec.zero_theta(), &SolverConfig::default(), u_star, Some(mask))?;
            if !(nu > 0.0) {
                return Err(input_error("ψ is flat at θ = 0; pass an explicit fixed:eta"));
            }
            Ok(StepSchedule::Fixed(1.8 / nu))
        }
        ("fixed", v) => v.parse().map(StepSchedule::Fixed).map_err(|_| bad()),
        ("dimin", v) => v.parse().map(StepSchedule::Diminishing).map_err(|_| bad()),
        _ => Err(bad()),
    }
}

fn cmd_mediate(a: MediateArgs) -> Result<u8, Failure> {
    let spec = load_spec(&a.problem)?;
    let scenario = Scenario::parse(&a.scenario).ok_or_else(|| {
        input_error(format!("unknown scenario '{}', expected alpha, gamma, alpha-beta or all", a.scenario))
    })?;
    let mask = scenario.mask(spec.dims(), spec.num_members());
    let u0 = start_point(&spec)?;
    let u_star = solve_team_optimum(&spec, &SolverConfig::default(), &u0)?.point;
    let schedule = parse_schedule(&a.schedule, &spec, &u_star, &mask)?;
    let cfg = MediationConfig {
        schedule,
        tol: a.tol,
        max_outer_iter: a.max_iter,
        mask: Some(mask),
        ..Default::default()
    };
    let report = run_mediation(&spec, &u_star, &cfg)?;
    if let Some(path) = &a.trace {
        let format = match path.extension().and_then(|e| e.to_str()) {
            Some(ext) => TraceFormat::parse(ext)?,
            None => TraceFormat::Csv,
        };
        export_trace(&report, format, BufWriter::new(File::create(path)?))?;
    }
    let mut value = serde_json::to_value(&report).map_err(Error::from)?;
    value["schedule"] = json!(format!("{schedule:?}"));
    value["scenario"] = json!(a.scenario);
    write_json(a.out.as_deref(), &value)?;
    Ok(if report.converged { 0 } else { 2 })
}

fn cmd_sweep(a: SweepArgs) -> Result<u8, Failure> {
    let spec = load_spec(&a.problem)?;
    let grid = match &a.grid {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| input_error(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| input_error(format!("{}: {e}", p.display())))?
        }
        None => ExperimentGrid::default(),
    };
    let ctx = SweepContext::new(spec, SolverConfig::default())?;
    let rows = run_sweep(&ctx, &grid)?;
    let failed = rows.iter().filter(|r| r.status != "ok").count();
    if failed > 0 {
        eprintln!("warning: {failed} of {} cells failed; see the status column", rows.len());
    }
    match &a.out {
        Some(p) => write_sweep_csv(&rows, BufWriter::new(File::create(p)?))?,
        None => write_sweep_csv(&rows, io::stdout().lock())?,
    }
    Ok(0)
}

fn cmd_export(a: ExportArgs) -> Result<u8, Failure> {
    let v: Vec<f64> = a
        .member
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| input_error(format!("--member: {e}")))?;
    let [alpha, beta, gamma] = v[..] else {
        return Err(input_error("--member expects alpha,beta,gamma"));
    };
    let file = netio::bundled_problem_file(&Params::new(&[alpha], &[beta], &[gamma]));
    save_problem(&a.out, &file)?;
    Ok(0)
}
