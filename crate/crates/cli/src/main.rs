use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use stelab_cli::{execute, Command, ExperimentSpec, Format};
use stelab_core::SteKind;

#[derive(Parser)]
#[command(name = "stelab", version, about = "Straight-through-estimator experiments")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Closed-form expectations against Monte Carlo means.
    Verify(Flags),
    /// Critical points of the loss and coarse-gradient residuals there.
    Landscape(Flags),
    /// One descent run from a seeded start.
    Descend(Flags),
    /// Empirical loss after one coarse-gradient step versus the step size.
    Figure1(Flags),
    /// Descent started at the spurious stationary point.
    Instability(Flags),
    /// Ensembles of seeded runs on random teachers.
    Sweep(Flags),
}

#[derive(Args)]
struct Flags {
    /// Hidden width; inferred from --v-star when omitted (upper bound for sweep).
    #[arg(long)]
    m: Option<usize>,
    /// Input dimension; inferred from --w-star when omitted (upper bound for sweep).
    #[arg(long)]
    n: Option<usize>,
    /// Comma-separated teacher second-layer weights.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    v_star: Option<Vec<f64>>,
    /// Comma-separated teacher filter; normalized to unit length.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    w_star: Option<Vec<f64>>,
    /// identity | relu | crelu
    #[arg(long)]
    ste: Option<SteKind>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv | json
    #[arg(long)]
    format: Option<Format>,
    #[arg(long)]
    tol: Option<f64>,
    /// Runs per STE (sweep).
    #[arg(long)]
    runs: Option<usize>,
    /// Starting ‖w‖ for landscape and instability.
    #[arg(long)]
    w_norm: Option<f64>,
    /// Perturbation radius of the instability start.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Comma-separated batch sizes (figure1).
    #[arg(long, value_delimiter = ',')]
    sample_sizes: Option<Vec<usize>>,
    /// Restrict sweep starts to the global-convergence region.
    #[arg(long)]
    in_region: bool,
    /// Halve η until the whole run is monotone.
    #[arg(long, overrides_with = "no_halve")]
    halve: bool,
    /// Use η as given.
    #[arg(long)]
    no_halve: bool,
}

fn build_spec(command: Command, f: Flags) -> ExperimentSpec {
    let mut s = ExperimentSpec::defaults(command);
    let explicit_v = f.v_star.is_some();
    s.v_star = f.v_star.or(s.v_star);
    match f.m {
        Some(m) => {
            s.m = m;
            // a built-in teacher of another width gives way to an explicit --m
            if !explicit_v && s.v_star.as_ref().is_some_and(|v| v.len() != m) {
                s.v_star = None;
            }
        }
        None => {
            if let Some(v) = &s.v_star {
                s.m = v.len();
            }
        }
    }
    s.w_star = f.w_star;
    s.n = match (f.n, &s.w_star) {
        (Some(n), _) => n,
        (None, Some(w)) => w.len(),
        (None, None) => s.n,
    };
    s.ste = f.ste.or(s.ste);
    s.eta = f.eta.unwrap_or(s.eta);
    s.samples = f.samples.unwrap_or(s.samples);
    s.iters = f.iters.unwrap_or(s.iters);
    s.seed = f.seed.unwrap_or(s.seed);
    s.output_path = f.out;
    s.format = f.format.unwrap_or(s.format);
    s.tol = f.tol.unwrap_or(s.tol);
    s.runs = f.runs.unwrap_or(s.runs);
    s.w_norm = f.w_norm.unwrap_or(s.w_norm);
    s.epsilon = f.epsilon.unwrap_or(s.epsilon);
    s.sample_sizes = f.sample_sizes.unwrap_or(s.sample_sizes);
    s.in_region = f.in_region;
    if f.halve {
        s.halve = true;
    }
    if f.no_halve {
        s.halve = false;
    }
    s
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, flags) = match cli.command {
        Sub::Verify(f) => (Command::Verify, f),
        Sub::Landscape(f) => (Command::Landscape, f),
        Sub::Descend(f) => (Command::Descend, f),
        Sub::Figure1(f) => (Command::Figure1, f),
        Sub::Instability(f) => (Command::Instability, f),
        Sub::Sweep(f) => (Command::Sweep, f),
    };
    let spec = build_spec(command, flags);
    let report = match execute(&spec).and_then(|r| r.emit().map(|_| r)) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    for c in report.checks.iter().filter(|c| !c.passed) {
        eprintln!("FAIL {}", c.name);
    }
    let s = report.summary;
    eprintln!("{command}: {}/{} checks passed", s.passed, s.total);
    if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
