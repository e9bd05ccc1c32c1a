use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use rclab::dynamics::{integrate, ChartSystem, Monitors, Trajectory};
use rclab::geometry::TangentPoint;
use rclab::reduction::ReduceOptions;
use rclab::report::Report;
use rclab::sysdef::{
    exit_code, load, load_pair, reduce_to_file, run_equivalence, run_suite, theorem_report_passes, EquivalenceKind,
    Loaded, ReductionKind, Suite, SuiteOptions,
};
use rclab::symmetry::check_invariance;
use rclab::Error;

#[derive(Parser)]
#[command(name = "rclab", version, about = "Certify regular controlled Lagrangian systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a system file and certify hyperregularity (and invariance).
    Validate { path: String },
    /// Integrate the controlled field with RK4 and write a CSV trajectory.
    Simulate {
        path: String,
        /// Initial state `q..., q_dot...`; defaults to the box centre.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        state: Option<Vec<f64>>,
        #[arg(long, default_value_t = 10.0)]
        t1: f64,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a verification suite and emit a JSON report.
    Check {
        path: String,
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, env = "RCLAB_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        mu: Option<Vec<f64>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check an equivalence notion or theorem on a pair file.
    Equivalence {
        path: String,
        /// rcl, rpcl, rocl, thm43, thm44, thm53 or thm54.
        #[arg(long, default_value = "rcl")]
        kind: String,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, env = "RCLAB_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reduce by the declared cyclic symmetry and emit the reduced file.
    Reduce {
        path: String,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        mu: Option<Vec<f64>>,
        /// Orbit instead of point reduction.
        #[arg(long)]
        orbit: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(exit_code(e))
}

/// Write to `out`, or stdout; files go through a temporary sibling.
fn emit(text: &str, out: Option<&PathBuf>) -> Result<(), Error> {
    let Some(path) = out else {
        print!("{text}");
        return Ok(());
    };
    let io = |e: std::io::Error| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, text).map_err(io)?;
    std::fs::rename(&tmp, path).map_err(io)
}

fn emit_report(mut report: Report, started: Instant, out: Option<&PathBuf>, pass: bool) -> ExitCode {
    report.wallclock = started.elapsed().as_secs_f64();
    let mut text = report.to_json();
    text.push('\n');
    if let Err(e) = emit(&text, out) {
        return fail(&e);
    }
    if pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn validate(path: &str) -> ExitCode {
    let loaded = match load(path) {
        Ok(l) => l,
        Err(e) => return fail(&e),
    };
    if let Loaded::Full(sys) = &loaded {
        if let Some(spec) = sys.symmetry.as_ref().filter(|s| s.is_abelian_translation()) {
            match check_invariance(spec, &sys.rcl, 200, 0, 1e-9) {
                Ok(c) if c.failed() => {
                    eprintln!(
                        "error: invariance certificate failed: residual {:e} at {:?}",
                        c.max_residual.unwrap_or(f64::NAN),
                        c.witness.unwrap_or_default()
                    );
                    return ExitCode::from(2);
                }
                Ok(_) => {}
                Err(e) => return fail(&e),
            }
        }
    }
    println!("{}: ok", loaded.name());
    ExitCode::SUCCESS
}

fn simulate(path: &str, state: Option<Vec<f64>>, t1: f64, dt: f64, out: Option<&PathBuf>) -> ExitCode {
    let loaded = match load(path) {
        Ok(l) => l,
        Err(e) => return fail(&e),
    };
    let run = |space: &rclab::geometry::ConfigSpace| -> Result<TangentPoint, Error> {
        match &state {
            Some(s) if s.len() == 2 * space.dim() => Ok(TangentPoint::from_state(s)),
            Some(s) => Err(Error::Dimension(format!(
                "--state has {} values, expected {}",
                s.len(),
                2 * space.dim()
            ))),
            None => Ok(space.center()),
        }
    };
    let (result, names, momentum_names) = match &loaded {
        Loaded::Full(sys) => {
            let l = &sys.rcl.sys;
            let v0 = match run(l.space()) {
                Ok(v) => v,
                Err(e) => return fail(&e),
            };
            let energy = |v: &TangentPoint| l.energy(v);
            let spec = sys.symmetry.as_ref().filter(|s| s.is_abelian_translation());
            let momentum = |v: &TangentPoint| match spec {
                Some(s) => s.momentum_lagrangian(l, v),
                None => Ok(Vec::new()),
            };
            let monitors = Monitors {
                energy: Some(&energy),
                momentum: Some(&momentum),
                space: Some(l.space()),
            };
            (
                integrate(&sys.rcl.field(), &v0, t1, dt, monitors),
                l.space().names().to_vec(),
                sys.momentum_names(),
            )
        }
        Loaded::Reduced(r) => {
            let red = &r.red;
            let v0 = match run(red.space()) {
                Ok(v) => v,
                Err(e) => return fail(&e),
            };
            let energy = |v: &TangentPoint| red.energy(v);
            let monitors = Monitors {
                energy: Some(&energy),
                momentum: None,
                space: Some(red.space()),
            };
            (
                integrate(&red.field(), &v0, t1, dt, monitors),
                red.space().names().to_vec(),
                Vec::new(),
            )
        }
    };
    let write = |traj: &Trajectory| emit(&traj.to_csv(&names, &momentum_names), out);
    match result {
        Ok(traj) => match write(&traj) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => fail(&e),
        },
        Err(failure) => {
            if let Err(e) = write(&failure.partial) {
                return fail(&e);
            }
            eprintln!("error: {failure}");
            match failure.cause {
                Error::BlowUp(_) => ExitCode::from(3),
                ref e => ExitCode::from(exit_code(e)),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let started = Instant::now();
    match cli.command {
        Command::Validate { path } => validate(&path),
        Command::Simulate {
            path,
            state,
            t1,
            dt,
            out,
        } => simulate(&path, state, t1, dt, out.as_ref()),
        Command::Check {
            path,
            suite,
            samples,
            seed,
            tol,
            mu,
            out,
        } => {
            let suite = match Suite::parse(&suite) {
                Ok(s) => s,
                Err(e) => return fail(&e),
            };
            let opts = SuiteOptions { samples, seed, tol, mu };
            let report = load(&path).and_then(|l| run_suite(&l, suite, &opts));
            match report {
                Ok(r) => {
                    let pass = r.all_pass();
                    emit_report(r, started, out.as_ref(), pass)
                }
                Err(e) => fail(&e),
            }
        }
        Command::Equivalence {
            path,
            kind,
            samples,
            seed,
            tol,
            out,
        } => {
            let k = match EquivalenceKind::parse(&kind) {
                Ok(k) => k,
                Err(e) => return fail(&e),
            };
            let opts = SuiteOptions {
                samples,
                seed,
                tol,
                mu: None,
            };
            let command = format!("equivalence --kind {kind}");
            let report = load_pair(&path).and_then(|p| run_equivalence(&p, k, &opts, &command, &path));
            match report {
                Ok(r) => {
                    let pass = match k {
                        EquivalenceKind::Theorem(_) => theorem_report_passes(&r),
                        _ => r.all_pass(),
                    };
                    emit_report(r, started, out.as_ref(), pass)
                }
                Err(e) => fail(&e),
            }
        }
        Command::Reduce { path, mu, orbit, out } => {
            let sys = match load(&path) {
                Ok(Loaded::Full(s)) => s,
                Ok(Loaded::Reduced(_)) => {
                    return fail(&Error::Unsupported("file is already reduced".into()));
                }
                Err(e) => return fail(&e),
            };
            let Some(mu) = mu.or_else(|| sys.mu.clone()) else {
                return fail(&Error::Invalid("no momentum value (use --mu)".into()));
            };
            let kind = if orbit { ReductionKind::Orbit } else { ReductionKind::Point };
            match reduce_to_file(&sys, &mu, kind, ReduceOptions::default()) {
                Ok((file, red)) => {
                    for w in red.warnings() {
                        eprintln!("warning: {w}");
                    }
                    let mut text = serde_json::to_string_pretty(&file).expect("reduced file serializes");
                    text.push('\n');
                    match emit(&text, out.as_ref()) {
                        Ok(()) => ExitCode::SUCCESS,
                        Err(e) => fail(&e),
                    }
                }
                Err(e) => fail(&e),
            }
        }
    }
}
