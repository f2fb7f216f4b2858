use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use almostgraph::chart::FixedPointTrace;
use almostgraph::config::{bundled, Config};
use almostgraph::fnspace::GridFnN;
use almostgraph::integrator::integrate;
use almostgraph::io::{function_to_json, read_function};
use almostgraph::kernel_basis::KernelBasis;
use almostgraph::system::max_norm;
use almostgraph::verify::{report_json, run};
use almostgraph::{Error, Result};
use clap::{Parser, Subcommand, ValueEnum};

/// Almost-graph charts for solution manifolds of state-dependent delay
/// equations.
///
/// Exit codes: 0 success, 1 failed check or runtime error, 2 usage,
/// configuration or I/O error, 3 L(phi) outside W, 4 delayed values outside V,
/// 5 input outside the chart domain, 6 grid too coarse.
#[derive(Debug, Parser)]
#[command(name = "almostgraph", version)]
struct Cli {
    /// System configuration (TOML), or the name of a bundled system:
    /// zero_rhs, scalar_tanh, planar_two_delay.
    #[arg(long, global = true)]
    config: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the invariant suite and emit a JSON report.
    Verify {
        /// Overrides `verify.seed` from the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Apply the chart A or its inverse B to a function file.
    Chart {
        #[arg(long, value_enum)]
        direction: Direction,
        #[arg(long)]
        input: PathBuf,
        /// Output function file; for B the fixed-point trace goes to
        /// `<out>.trace.json` (stderr without --out).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Lift a function in X0 onto the solution manifold.
    Lift {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Integrate forward from a history function (the witness by default)
    /// and write the trajectory as CSV.
    Integrate {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long = "T")]
        t_end: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build psi for one component and report lambda psi, psi'(0) and |psi|.
    Psi {
        /// Component, 1-based.
        #[arg(long, default_value_t = 1)]
        nu: usize,
        #[arg(long)]
        eps: f64,
        /// Also write psi as a function file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Direction {
    #[value(name = "A", alias = "a")]
    A,
    #[value(name = "B", alias = "b")]
    B,
}

/// A run that completed but whose outcome is a failure (exit 1).
struct Failed;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::OutsideW { .. } | Error::DelayRange { .. } => 3,
        Error::OutsideV { .. } => 4,
        Error::Diverged { .. } | Error::NoConvergence { .. } | Error::NotInX0 { .. } => 5,
        Error::GridTooCoarse { .. } | Error::LevelCap { .. } => 6,
        Error::Config(_)
        | Error::Io(_)
        | Error::Parse(_)
        | Error::Component { .. }
        | Error::GridMismatch(..)
        | Error::Domain { .. } => 2,
        Error::Eval { .. } | Error::Singular { .. } | Error::LeftU { .. } | Error::Unstable { .. } => 1,
    }
}

fn load_config(arg: Option<&str>) -> Result<Config> {
    let arg = arg.ok_or_else(|| Error::Config("--config is required".into()))?;
    let path = Path::new(arg);
    if path.exists() {
        Config::from_path(path)
    } else {
        bundled(arg).map_err(|_| Error::Io(format!("{arg}: no such file or bundled system")))
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display()))),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(Error::from),
    }
}

fn emit_function(out: Option<&Path>, phi: &GridFnN) -> Result<()> {
    emit(out, &(function_to_json(phi) + "\n"))
}

fn emit_trace(out: Option<&Path>, trace: &FixedPointTrace) -> Result<()> {
    let json = serde_json::to_string_pretty(trace)? + "\n";
    match out {
        Some(path) => {
            let mut name = path.as_os_str().to_owned();
            name.push(".trace.json");
            let path = PathBuf::from(name);
            fs::write(&path, json).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
        }
        None => {
            eprint!("{json}");
            Ok(())
        }
    }
}

fn execute(cli: Cli) -> Result<std::result::Result<(), Failed>> {
    let config = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Verify { seed, out } => {
            let report = run(&config, seed.unwrap_or(config.verify.seed));
            emit(out.as_deref(), &(report_json(&report) + "\n"))?;
            for check in report.failed_checks() {
                eprintln!(
                    "FAIL {}: worst {:?} vs tolerance {:e} (sample {:?}){}",
                    check.name,
                    check.worst,
                    check.tolerance,
                    check.worst_sample,
                    check.note.as_deref().map(|n| format!(": {n}")).unwrap_or_default()
                );
            }
            eprintln!(
                "{}: {}/{} checks passed",
                report.system,
                report.checks.iter().filter(|c| c.passed).count(),
                report.checks.len()
            );
            Ok(if report.passed { Ok(()) } else { Err(Failed) })
        }
        Command::Chart { direction, input, out } => {
            let ctx = config.context()?;
            let phi = read_function(&input)?;
            match direction {
                Direction::A => emit_function(out.as_deref(), &ctx.a_map(&phi)?)?,
                Direction::B => {
                    let b = ctx.b_map_traced(&phi)?;
                    emit_function(out.as_deref(), &b.phi)?;
                    emit_trace(out.as_deref(), &b.trace)?;
                    eprintln!(
                        "fixed point after {} steps, largest ratio {:.3e}",
                        b.trace.steps(),
                        b.trace.max_ratio()
                    );
                }
            }
            Ok(Ok(()))
        }
        Command::Lift { input, out } => {
            let ctx = config.context()?;
            let zeta = read_function(&input)?;
            let lift = ctx.lift(&zeta)?;
            emit_function(out.as_deref(), &lift.phi)?;
            let residual = max_norm(&ctx.system().manifold_residual(&lift.phi)?);
            eprintln!("residual |phi'(0) - f(phi)| = {residual:e}");
            eprintln!("|alpha|_C1 = {:e}", lift.alpha.c1_norm());
            Ok(Ok(()))
        }
        Command::Integrate { input, t_end, dt, out } => {
            let sys = config.build_system()?;
            let phi = match input {
                Some(path) => read_function(&path)?,
                None => sys.witness().clone(),
            };
            let mut options = config.integrate_options();
            options.t_end = t_end.unwrap_or(options.t_end);
            options.step = dt.unwrap_or(options.step);
            let traj = integrate(&sys, &phi, options)?;
            let mut csv = Vec::new();
            traj.write_csv(&mut csv)?;
            emit(out.as_deref(), &String::from_utf8(csv).expect("CSV is ASCII"))?;
            eprintln!(
                "{} steps of {:e}, {} with extrapolated history",
                traj.times().len() - 1,
                traj.step(),
                traj.extrapolated()
            );
            Ok(Ok(()))
        }
        Command::Psi { nu, eps, out } => {
            let sys = config.build_system()?;
            if nu == 0 || nu > sys.n() {
                return Err(Error::Component { index: nu, n: sys.n() });
            }
            let basis = KernelBasis::build(&sys, nu - 1, config.h_options()?.kernel)?;
            let psi = basis.make_psi(eps)?;
            let lambda = basis.apply(&psi);
            emit(
                None,
                &format!(
                    "lambda psi = {lambda:?}\npsi'(0) = {}\n|psi|_C = {:e}\neps = {eps:e}\n",
                    psi.slope_at_zero(),
                    psi.sup_norm()
                ),
            )?;
            if let Some(path) = out {
                let mut components = GridFnN::zeros(sys.grid(), sys.n()).into_components();
                components[nu - 1] = psi;
                emit_function(Some(&path), &GridFnN::new(components)?)?;
            }
            Ok(Ok(()))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(Failed)) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
