use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use jetflow_cli::config::{CommandKind, ConfigLayer};
use jetflow_cli::driver::{self, DriverError, Table1Config};

#[derive(Parser)]
#[command(
    name = "jetflow",
    version,
    about = "SDE integrators that follow vector-field flows, with baselines and convergence studies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scheme on one Brownian path and write the trajectory.
    Simulate(ExperimentArgs),
    /// Measure strong, weak, or invariant-drift convergence on a grid ladder.
    Convergence(ExperimentArgs),
    /// Angular momentum at t = 10 on the orbital problem, per step length,
    /// for the chord scheme and the flow scheme.
    Table1(Table1Args),
    /// List the built-in problems.
    ListProblems,
}

#[derive(Args, Default)]
struct ExperimentArgs {
    /// JSON config file; flags given here override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Problem name from the registry (see list-problems).
    #[arg(long)]
    problem: Option<String>,
    /// em | jet-dt | jet-dw2 | expand2 | expand3
    #[arg(long)]
    scheme: Option<String>,
    /// Flow solver for jet schemes: exact | euler | rk4 | adams8.
    #[arg(long)]
    ode: Option<String>,
    /// Solver substeps per unit flow time (default 4 for adams8, else 1).
    #[arg(long)]
    substeps: Option<usize>,
    /// Drift weighting for expansion schemes: dt | dw2.
    #[arg(long = "expansion-base")]
    expansion_base: Option<String>,
    /// Final time.
    #[arg(long = "T", visible_alias = "horizon")]
    horizon: Option<f64>,
    /// Step count (simulate) or comma-separated ladder (convergence).
    #[arg(long)]
    steps: Option<String>,
    /// Monte Carlo path count (convergence).
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// strong | weak | drift (convergence).
    #[arg(long)]
    study: Option<String>,
    /// Observable for weak studies: identity | component:<i>.
    #[arg(long)]
    observable: Option<String>,
    /// Exact expectation of the observable at T (weak studies).
    #[arg(long)]
    expectation: Option<f64>,
    /// Reference source: auto | analytic | numeric.
    #[arg(long)]
    reference: Option<String>,
    /// Grid refinement for numeric references (default 8).
    #[arg(long = "refine-factor")]
    refine_factor: Option<usize>,
    /// Output directory (default current directory).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Trajectory format: csv | json.
    #[arg(long)]
    format: Option<String>,
}

impl ExperimentArgs {
    fn into_layer(self) -> Result<ConfigLayer, DriverError> {
        let steps = match self.steps.as_deref() {
            Some(s) => Some(jetflow_cli::config::parse_steps(s)?),
            None => None,
        };
        let flags = ConfigLayer {
            problem: self.problem,
            scheme: self.scheme,
            ode: self.ode,
            substeps: self.substeps,
            expansion_base: self.expansion_base,
            horizon: self.horizon,
            steps,
            n_paths: self.paths,
            seed: self.seed,
            study: self.study,
            observable: self.observable,
            expectation: self.expectation,
            reference: self.reference,
            refine_factor: self.refine_factor,
            out: self.out,
            format: self.format,
        };
        let base = match &self.config {
            Some(path) => ConfigLayer::from_json_file(path)?,
            None => ConfigLayer::default(),
        };
        Ok(flags.over(base))
    }
}

#[derive(Args)]
struct Table1Args {
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Number of independent paths to average over.
    #[arg(long = "seeds", default_value_t = 10)]
    n_seeds: usize,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn init_thread_pool() -> Result<(), DriverError> {
    let Ok(raw) = std::env::var("JETFLOW_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.parse().map_err(|_| {
        DriverError::Config(format!("JETFLOW_THREADS must be a positive integer, got '{}'", raw))
    })?;
    if n == 0 {
        return Err(DriverError::Config(String::from(
            "JETFLOW_THREADS must be at least 1",
        )));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| DriverError::Config(format!("cannot size thread pool: {}", e)))
}

fn run(cli: Cli) -> Result<(), DriverError> {
    init_thread_pool()?;
    match cli.command {
        Command::Simulate(args) => {
            let text = driver::run_experiment(args.into_layer()?, CommandKind::Simulate)?;
            print!("{}", text);
        }
        Command::Convergence(args) => {
            let text = driver::run_experiment(args.into_layer()?, CommandKind::Convergence)?;
            print!("{}", text);
        }
        Command::Table1(args) => {
            let outcome = driver::cmd_table1(&Table1Config {
                seed: args.seed,
                n_seeds: args.n_seeds,
                out: args.out,
            })?;
            print!("{}", outcome.rendered);
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
        }
        Command::ListProblems => {
            print!("{}", driver::render_problem_list());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(DriverError::Config(msg)) => {
            eprintln!("error: {}", msg);
            ExitCode::from(2)
        }
        Err(DriverError::Divergence(msg)) => {
            eprintln!("error: {}", msg);
            ExitCode::from(3)
        }
        Err(DriverError::Io(msg)) => {
            eprintln!("error: {}", msg);
            ExitCode::from(1)
        }
    }
}
