use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use wonham_prox::ctmc::{detailed_balance_residual, stationary_distribution};
use wonham_prox::harness::csv::{emit_csv, simulation_csv};
use wonham_prox::harness::{builtin_example, lambda_sweep, parse_list, run_experiment, simulate, ExperimentConfig};
use wonham_prox::proximal::REVERSIBILITY_TOL;
use wonham_prox::{Error, ErrorKind, MetricMode, PriorMethod, RateMatrix};

#[derive(Parser)]
#[command(name = "wonham-prox", version, about = "Wonham filter vs. proximal recursion for finite-state chains")]
struct Cli {
    /// Override the seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the prior step.
    #[arg(long, global = true, value_enum)]
    prior: Option<Prior>,
    /// Override the metric weighting.
    #[arg(long, global = true, value_enum)]
    metric: Option<Metric>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the stationary distribution and the reversibility verdict.
    Stationary {
        #[arg(long)]
        config: PathBuf,
    },
    /// Write the state and observation paths as `t,x,z` CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run both filters and write the full comparison CSV.
    Filter {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to `output_path` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run both filters and print error metrics and phase timings.
    Compare {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the sup-error for each step size on one shared realization.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated, strictly decreasing, each dividing the previous.
        #[arg(long)]
        lambdas: String,
    },
    /// Print a builtin example config.
    Example {
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..=2))]
        id: u32,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Prior {
    Euler,
    Resolvent,
    Expm,
}

#[derive(Clone, Copy, ValueEnum)]
enum Metric {
    Inverse,
    Direct,
}

impl Cli {
    fn load(&self, path: &Path) -> Result<ExperimentConfig, Error> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
        let mut cfg = ExperimentConfig::parse(&text)?;
        self.apply_overrides(&mut cfg);
        Ok(cfg)
    }

    fn apply_overrides(&self, cfg: &mut ExperimentConfig) {
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(prior) = self.prior {
            cfg.prior_method = match prior {
                Prior::Euler => PriorMethod::Euler,
                Prior::Resolvent => PriorMethod::Resolvent,
                Prior::Expm => PriorMethod::Expm,
            };
        }
        if let Some(metric) = self.metric {
            cfg.metric_mode = match metric {
                Metric::Inverse => MetricMode::Inverse,
                Metric::Direct => MetricMode::Direct,
            };
        }
    }
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(", ")
}

fn run(cli: &Cli) -> Result<(), Error> {
    match &cli.command {
        Command::Stationary { config } => {
            let cfg = cli.load(config)?;
            let m = cfg.states.len();
            let q = RateMatrix::from_row_major(m, &cfg.q)?;
            let pi = stationary_distribution(&q)?;
            let residual = detailed_balance_residual(&q, &pi)?;
            let tol = REVERSIBILITY_TOL * q.max_exit_rate().max(1.0);
            println!("pi_inf = ({})", fmt_vec(pi.as_slice()));
            println!("detailed_balance_residual = {residual:.3e}");
            println!("reversible = {}", residual <= tol);
        }
        Command::Simulate { config, out } => {
            let sim = simulate(&cli.load(config)?)?;
            std::fs::write(out, simulation_csv(&sim)?)?;
        }
        Command::Filter { config, out } => {
            let cfg = cli.load(config)?;
            let out = match (out, &cfg.output_path) {
                (Some(p), _) => p.clone(),
                (None, Some(p)) => PathBuf::from(p),
                (None, None) => return Err(Error::Config("no --out given and no output_path in config".into())),
            };
            emit_csv(&run_experiment(&cfg)?, &out)?;
        }
        Command::Compare { config } => {
            let run = run_experiment(&cli.load(config)?)?;
            let m = &run.metrics;
            println!("sup_error = {:.6e}", m.sup_error);
            println!("component_max_error = ({})", fmt_vec(&m.component_max_error));
            println!("final_error = {:.6e}", m.final_error);
            println!("reference_clamped_steps = {}", run.reference.diagnostics.clamped_steps);
            println!("reference_max_clamp_deficit = {:.3e}", run.reference.diagnostics.max_clamp_deficit);
            println!("# timings are informational");
            println!("time_simulate = {:?}", run.timings.simulate);
            println!("time_reference = {:?}", run.timings.reference);
            println!("time_proximal = {:?}", run.timings.proximal);
        }
        Command::Sweep { config, lambdas } => {
            let cfg = cli.load(config)?;
            let lambdas = parse_list(lambdas, "lambdas")?;
            println!("lambda,sup_error");
            for row in lambda_sweep(&cfg, &lambdas)? {
                println!("{:.16e},{:.16e}", row.lambda, row.sup_error);
            }
        }
        Command::Example { id } => {
            let mut cfg = builtin_example(*id)?;
            cli.apply_overrides(&mut cfg);
            print!("{}", cfg.to_text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Validation => 2,
                ErrorKind::Numerical => 3,
                ErrorKind::Io => 4,
            })
        }
    }
}
