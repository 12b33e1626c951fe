use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use plug_core::bump::{bump_calabi, BumpSpec};
use plug_core::collar::{
    budget_ledger, build_gamma, collar_volume_bounds, contact_positivity, gamma_csv, return_time_profile, verify_gamma,
};
use plug_core::packing::{pack_sector, replicate_orbit, verify_packing};
use plug_core::plug::{
    build_plug, min_period_bound, samples_csv, torus_volume, verification_points, verify_b1_to_b4, PlugParams,
};
use plug_core::radial::{action_oracle, calabi_oracle, calabi_radial, radial_action_t, RadialHamiltonian};
use plug_core::sampling::{chunk_rng, uniform_in_ball};
use plug_core::sphere::{default_plug_shape, sphere_certificate, SphereOverrides};
use plug_core::{Certificate, Check, Error, Evidence, Point};

/// Output directory override for relative `--out`/`--csv` paths.
const OUT_DIR_ENV: &str = "PLUG_OUT_DIR";

#[derive(Parser)]
#[command(
    name = "plugcert",
    version,
    about = "Build contact plugs and emit numeric certificates"
)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Certified systolic lower bound on S^{2m+1}.
    CertifySphere(SphereArgs),
    /// Pack one sector of the unit ball with disjoint balls.
    Pack(PackArgs),
    /// Build a plug and verify its return-map conditions.
    Plug(PlugArgs),
    /// Monte-Carlo and line-integral oracles.
    #[command(subcommand)]
    Oracle(OracleCommand),
    /// Build and verify a collar profile curve.
    Gamma(GammaArgs),
    /// Volume and systolic budget arithmetic.
    Budget(BudgetArgs),
    /// Re-check the pass/fail bits of a stored certificate.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct Output {
    /// Certificate JSON path (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SphereArgs {
    #[arg(long, default_value_t = 1)]
    m: usize,
    /// Target systolic ratio.
    #[arg(long = "C")]
    c: f64,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    epsilon_chi: Option<f64>,
    /// Keep the requested density even if the volume budget needs more.
    #[arg(long)]
    no_auto_density: bool,
    #[arg(long)]
    seed: u64,
    #[arg(long, value_parser = parse_count, default_value = "1e6")]
    mc_samples: usize,
    #[arg(long, default_value_t = 100)]
    t_grid: usize,
    #[arg(long, value_parser = parse_count, default_value = "1e4")]
    z_grid: usize,
    #[arg(long, value_parser = parse_count)]
    max_balls: Option<usize>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct PackArgs {
    #[arg(long)]
    m: usize,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    rho: f64,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    #[arg(long, value_parser = parse_count, default_value = "2e6")]
    max_balls: usize,
    #[arg(long)]
    seed: u64,
    /// Ball family JSON (sector balls only).
    #[arg(long)]
    family_out: Option<PathBuf>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct PlugArgs {
    #[arg(long)]
    m: usize,
    #[arg(long = "L", default_value_t = PI)]
    l: f64,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    delta: f64,
    /// Bump cutoff parameter (defaults to delta).
    #[arg(long)]
    epsilon_chi: Option<f64>,
    #[arg(long)]
    rho: f64,
    /// Torus volume target.
    #[arg(long, default_value_t = 100.0)]
    eps_volume: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long, value_parser = parse_count, default_value = "2e6")]
    max_balls: usize,
    #[arg(long, default_value_t = 100)]
    t_grid: usize,
    #[arg(long, value_parser = parse_count, default_value = "1e4")]
    z_grid: usize,
    #[arg(long, value_parser = parse_count, default_value = "1e6")]
    samples: usize,
    /// CSV of (z, sigma, tau) samples.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long, value_parser = parse_count, default_value = "2000")]
    csv_points: usize,
    #[command(flatten)]
    output: Output,
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    /// The radial rotation Hamiltonian built from the cutoff chi.
    Chi,
    /// A single bump at the origin.
    Bump,
}

impl Profile {
    fn name(self) -> &'static str {
        match self {
            Profile::Chi => "chi",
            Profile::Bump => "bump",
        }
    }
}

#[derive(Subcommand)]
enum OracleCommand {
    /// Calabi invariant: closed form vs Monte-Carlo.
    Calabi(CalabiArgs),
    /// Action: closed form vs line integral along the flow.
    Action(ActionArgs),
}

#[derive(Args)]
struct CalabiArgs {
    #[arg(long)]
    m: usize,
    #[arg(long, value_enum, default_value = "chi")]
    profile: Profile,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, default_value_t = 8)]
    n: usize,
    #[arg(long, default_value_t = 0.5)]
    radius: f64,
    #[arg(long, default_value_t = 1.0)]
    strength: f64,
    #[arg(long, value_parser = parse_count, default_value = "1e6")]
    samples: usize,
    #[arg(long)]
    seed: u64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct ActionArgs {
    #[arg(long)]
    m: usize,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, default_value_t = 8)]
    n: usize,
    #[arg(long, value_parser = parse_count, default_value = "200")]
    points: usize,
    #[arg(long, value_parser = parse_count, default_value = "1e4")]
    steps: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long)]
    seed: u64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct GammaArgs {
    #[arg(long)]
    s: f64,
    #[arg(long)]
    delta: f64,
    #[arg(long)]
    rho: f64,
    /// Binding dimension parameter used by the positivity test.
    #[arg(long, default_value_t = 2)]
    n: usize,
    /// Contact volume of the binding.
    #[arg(long, default_value_t = 1.0)]
    binding_volume: f64,
    #[arg(long, value_parser = parse_count, default_value = "1e4")]
    grid: usize,
    /// CSV of (r, f, g, tau, positivity).
    #[arg(long)]
    csv: Option<PathBuf>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct BudgetArgs {
    #[arg(long)]
    eps: f64,
    #[arg(long)]
    epsp: f64,
    #[arg(long)]
    a: f64,
    /// Page volume (defaults to a).
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    m: usize,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct VerifyArgs {
    path: PathBuf,
}

/// Accepts integers and float notation such as `1e6`.
fn parse_count(s: &str) -> Result<usize, String> {
    if let Ok(v) = s.parse::<usize>() {
        return Ok(v);
    }
    let v: f64 = s.parse().map_err(|_| format!("not a number: {s}"))?;
    if v >= 0.0 && v.fract() == 0.0 && v <= usize::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(format!("expected a non-negative integer, got {s}"))
    }
}

enum Failure {
    Invalid(String),
    Internal(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(_)
            | Error::DimensionMismatch { .. }
            | Error::OutOfDomain(_)
            | Error::InfeasibleJoin(_)
            | Error::NoAdmissibleCurve { .. } => Failure::Invalid(e.to_string()),
            _ => Failure::Internal(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Internal(e.to_string())
    }
}

#[derive(Clone, Copy, PartialEq, Debug)]
enum Status {
    Pass,
    Shortfall,
}

type Outcome = Result<Status, Failure>;

fn resolve(path: &Path) -> PathBuf {
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if path.is_relative() => Path::new(&dir).join(path),
        _ => path.to_path_buf(),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    let path = resolve(path);
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(&path, contents).map_err(|e| Failure::Internal(format!("{}: {e}", path.display())))
}

fn emit(mut cert: Certificate, output: &Output) -> Outcome {
    cert.stamp();
    match &output.out {
        Some(p) => write_file(p, &cert.to_json())?,
        None => println!("{}", cert.to_json()),
    }
    for c in cert.failed_checks() {
        eprintln!("failed: {} measured {} vs bound {}", c.name, c.measured, c.bound);
    }
    Ok(if cert.verdict { Status::Pass } else { Status::Shortfall })
}

fn certify_sphere(a: &SphereArgs) -> Outcome {
    let (n0, _, _) = default_plug_shape(a.m);
    let overrides = SphereOverrides {
        n: Some(a.n.unwrap_or(n0)),
        delta: a.delta,
        epsilon_chi: a.epsilon_chi,
        rho: a.rho,
        auto_density: !a.no_auto_density,
        seed: a.seed,
        max_balls: a.max_balls,
        t_grid: a.t_grid,
        z_grid: a.z_grid,
        mc_samples: a.mc_samples,
        ..SphereOverrides::default()
    };
    let cert = sphere_certificate(a.m, a.c, &overrides)?;
    let achieved = cert.results.get("C_achieved").copied().unwrap_or(f64::NAN);
    eprintln!("certified systolic ratio >= {achieved} (target {})", a.c);
    let reached = achieved >= a.c;
    if !reached {
        eprintln!("shortfall: the certified bound does not reach the target");
    }
    let status = emit(cert, &a.output)?;
    Ok(if reached { status } else { Status::Shortfall })
}

fn pack(a: &PackArgs) -> Outcome {
    let family = pack_sector(a.m, a.n, a.rho, a.delta, a.max_balls, a.seed)?;
    let full = replicate_orbit(&family, a.n)?;
    let mut cert = verify_packing(&full).with_params(&serde_json::json!({
        "m": a.m, "n": a.n, "rho": a.rho, "delta": a.delta, "max_balls": a.max_balls, "seed": a.seed,
    }));
    cert.push(Check::at_least(
        "density_target",
        family.achieved_density,
        a.rho,
        0.0,
        Evidence::default(),
    ));
    cert.result("sector_balls", family.balls.len() as f64);
    cert.result("achieved_density", family.achieved_density);
    if let Some(p) = &a.family_out {
        write_file(p, &family.to_json())?;
    }
    eprintln!(
        "{} balls per sector, density {}",
        family.balls.len(),
        family.achieved_density
    );
    emit(cert, &a.output)
}

fn plug(a: &PlugArgs) -> Outcome {
    let mut params = PlugParams::new(
        a.m,
        a.l,
        a.n,
        a.delta,
        a.epsilon_chi.unwrap_or(a.delta),
        a.rho,
        a.eps_volume,
        a.seed,
    );
    params.max_balls = a.max_balls;
    params.validate()?;
    let plug = build_plug(&params)?;
    let conditions = verify_b1_to_b4(&plug, a.t_grid, a.z_grid)?;
    let mut cert = Certificate::new("plug").with_params(&params);
    let volume = torus_volume(&plug, a.samples, a.seed)?;
    cert.push(Check::at_most(
        "volume_two_routes",
        (volume.monte_carlo.value - volume.closed_form).abs(),
        3.0 * volume.monte_carlo.std_error,
        0.0,
        Evidence::samples(a.samples, a.seed),
    ));
    cert.push(Check::at_most(
        "volume_target",
        volume.closed_form,
        a.eps_volume,
        0.0,
        Evidence::default(),
    ));
    cert.result("torus_volume", volume.closed_form);
    cert.result("torus_volume_mc", volume.monte_carlo.value);
    cert.result("torus_volume_mc_se", volume.monte_carlo.std_error);
    cert.result("calabi", plug.calabi()?);
    cert.result("balls_total", plug.total_balls() as f64);
    match min_period_bound(&plug, &conditions) {
        Ok(p) => cert.result("t_min", p.t_min),
        Err(e) => cert.push(Check::at_least(
            "period_prerequisites",
            0.0,
            1.0,
            0.0,
            Evidence::note(e.to_string()),
        )),
    }
    cert.attach(conditions);
    if let Some(p) = &a.csv {
        write_file(p, &samples_csv(&plug, &verification_points(&plug, a.csv_points)))?;
    }
    emit(cert, &a.output)
}

fn oracle_calabi(a: &CalabiArgs) -> Outcome {
    let (closed, est) = match a.profile {
        Profile::Chi => {
            let h = RadialHamiltonian::plus(a.m, a.n, a.delta)?;
            (calabi_radial(&h)?, calabi_oracle(|z| h.eval(z), a.m, a.samples, a.seed))
        }
        Profile::Bump => {
            let spec = BumpSpec::new(Point::new(vec![0.0; 2 * a.m])?, a.radius, a.strength, a.delta)?;
            (
                bump_calabi(&spec)?,
                calabi_oracle(|z| spec.hamiltonian(z), a.m, a.samples, a.seed),
            )
        }
    };
    let mut cert = Certificate::new("oracle_calabi").with_params(&serde_json::json!({
        "m": a.m, "profile": a.profile.name(), "delta": a.delta, "n": a.n,
        "radius": a.radius, "strength": a.strength, "samples": a.samples, "seed": a.seed,
    }));
    let z = (est.value - closed).abs() / est.std_error;
    cert.push(Check::at_most(
        "agreement_in_se",
        z,
        3.0,
        0.0,
        Evidence::samples(a.samples, a.seed),
    ));
    cert.result("closed_form", closed);
    cert.result("estimate", est.value);
    cert.result("std_error", est.std_error);
    eprintln!("closed form {closed}, estimate {} +- {}", est.value, est.std_error);
    emit(cert, &a.output)
}

fn oracle_action(a: &ActionArgs) -> Outcome {
    let h = Arc::new(RadialHamiltonian::plus(a.m, a.n, a.delta)?);
    let mut rng = chunk_rng(a.seed, 0);
    let zero = vec![0.0; 2 * a.m];
    let mut worst = 0.0f64;
    for _ in 0..a.points {
        let z = uniform_in_ball(&mut rng, &zero, 1.0);
        let oracle = action_oracle(h.as_ref(), 1.0, &z, a.steps)?;
        worst = worst.max((oracle - radial_action_t(&h, 1.0, &z)?).abs());
    }
    let mut cert = Certificate::new("oracle_action").with_params(&serde_json::json!({
        "m": a.m, "delta": a.delta, "n": a.n, "points": a.points, "steps": a.steps, "seed": a.seed,
    }));
    cert.push(Check::at_most(
        "max_abs_error",
        worst,
        a.tol,
        0.0,
        Evidence::samples(a.points, a.seed),
    ));
    eprintln!("max |oracle - closed form| = {worst}");
    emit(cert, &a.output)
}

fn gamma(a: &GammaArgs) -> Outcome {
    let params = serde_json::json!({
        "s": a.s, "delta": a.delta, "rho": a.rho, "n": a.n, "binding_volume": a.binding_volume, "grid": a.grid,
    });
    let mut cert = Certificate::new("gamma").with_params(&params);
    let curve = match build_gamma(a.s, a.delta, a.rho) {
        Ok(c) => c,
        Err(Error::NoAdmissibleCurve {
            check,
            violation,
            detail,
        }) => {
            eprintln!("no admissible curve: {check} ({detail})");
            cert.push(Check::at_most(
                format!("{check}_admissible"),
                violation,
                0.0,
                0.0,
                Evidence::note(detail),
            ));
            return emit(cert, &a.output);
        }
        Err(e) => return Err(e.into()),
    };
    let (pos, at) = contact_positivity(&curve, a.n, a.delta, a.grid);
    cert.push(Check::above(
        "contact_positivity",
        pos,
        0.0,
        Evidence::grid(a.grid).with_argmin(vec![at]),
    ));
    cert.attach(verify_gamma(&curve, a.grid));
    cert.attach(return_time_profile(&curve, a.grid));
    cert.attach(collar_volume_bounds(&curve, a.n, a.binding_volume)?);
    cert.result("r0", curve.r0);
    cert.result("r1", curve.r1);
    if let Some(p) = &a.csv {
        write_file(p, &gamma_csv(&curve, a.n, a.grid))?;
    }
    eprintln!("curve: {}", curve.to_json());
    emit(cert, &a.output)
}

fn budget(a: &BudgetArgs) -> Outcome {
    let cert = budget_ledger(a.eps, a.epsp, a.a, a.c.unwrap_or(a.a), a.m)?;
    eprintln!(
        "volume bound {}, systolic bound {}",
        cert.results["volume_bound"], cert.results["systolic_bound"]
    );
    emit(cert, &a.output)
}

fn verify(a: &VerifyArgs) -> Outcome {
    let text = fs::read_to_string(&a.path).map_err(|e| Failure::Invalid(format!("{}: {e}", a.path.display())))?;
    let cert = Certificate::from_json(&text).map_err(|e| Failure::Invalid(e.to_string()))?;
    if !cert.reverify() {
        return Err(Failure::Internal(
            "stored pass/fail bits do not match the stored numbers".into(),
        ));
    }
    println!(
        "{}: consistent, verdict {}",
        cert.name,
        if cert.verdict { "pass" } else { "fail" }
    );
    Ok(if cert.verdict { Status::Pass } else { Status::Shortfall })
}

fn run(cli: &Cli) -> Outcome {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Failure::Invalid("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Failure::Internal(e.to_string()))?;
    }
    match &cli.command {
        Command::CertifySphere(a) => certify_sphere(a),
        Command::Pack(a) => pack(a),
        Command::Plug(a) => plug(a),
        Command::Oracle(OracleCommand::Calabi(a)) => oracle_calabi(a),
        Command::Oracle(OracleCommand::Action(a)) => oracle_action(a),
        Command::Gamma(a) => gamma(a),
        Command::Budget(a) => budget(a),
        Command::Verify(a) => verify(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Status::Pass) => ExitCode::SUCCESS,
        Ok(Status::Shortfall) => ExitCode::from(1),
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(3)
        }
    }
}
