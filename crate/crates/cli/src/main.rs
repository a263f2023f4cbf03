use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use salm::solvers::Algorithm;
use salm::LkConvention;
use salm_cli::commands::{self, ParamsRequest};
use salm_cli::config::{self, ScheduleKind, OUTPUT_DIR_ENV};
use salm_cli::CliError;

/// Stochastic smoothed augmented Lagrangian solvers: runs, sweeps, audits.
///
/// Exit codes: 0 success, 1 configuration error, 2 numerical failure,
/// 3 audit violation.
#[derive(Parser)]
#[command(name = "salm", version)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set solver.rho=10`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Output directory; wins over `output_dir` in the configuration.
    #[arg(long, short, global = true, env = OUTPUT_DIR_ENV)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration; writes trace.csv, report.json, convergence.svg.
    Solve,
    /// Run every (T, seed) pair; writes sweep.csv and slope.json.
    Sweep {
        /// Iteration counts; defaults to `sweep.iterations`, then `iterations`.
        #[arg(long, value_delimiter = ',')]
        iterations: Vec<usize>,
        /// Seeds; defaults to `sweep.seeds`, then `seed`.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        /// Worker threads.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Numerically check one inequality; writes audit.json.
    Audit {
        /// error-bounds, hoffman, potential-lower-bound, storm-recursion or descent.
        lemma: String,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Emit a serialized instance.
    Gen {
        /// nonconvex_qp, consensus, network_slicing or fair_classification.
        name: String,
        /// Generator parameter, e.g. `-p n=20`. Repeatable.
        #[arg(short = 'p', long = "param", value_name = "KEY=VALUE")]
        params: Vec<String>,
        /// Oracle block, e.g. `--oracle kind=additive_noise --oracle sigma=0.1`.
        #[arg(long, value_name = "KEY=VALUE")]
        oracle: Vec<String>,
        /// Destination file; stdout when absent.
        #[arg(long = "file", short = 'f')]
        file: Option<PathBuf>,
    },
    /// Print the step sizes for given constants as JSON.
    Params {
        #[arg(long, default_value = "alg1")]
        algorithm: Algorithm,
        /// theory or scaled.
        #[arg(long, default_value = "theory")]
        schedule: String,
        #[arg(long)]
        lf: f64,
        /// Expected-smoothness constant; defaults to L_f.
        #[arg(long)]
        l0: Option<f64>,
        #[arg(long)]
        norm_a: f64,
        #[arg(long, default_value_t = 5.0)]
        rho: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma_bar: f64,
        #[arg(long, short = 't')]
        iterations: usize,
        /// squared or linear.
        #[arg(long, default_value = "squared")]
        lk_convention: String,
    },
}

fn parse_enum<T: serde::de::DeserializeOwned>(what: &str, s: &str) -> Result<T, CliError> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| CliError::Config(format!("unknown {what} `{s}`")))
}

/// `println!` that ignores a closed stdout.
macro_rules! outln {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

fn first_nonempty<T: Clone>(flag: Vec<T>, file: &[T], single: T) -> Vec<T> {
    if !flag.is_empty() {
        flag
    } else if !file.is_empty() {
        file.to_vec()
    } else {
        vec![single]
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let load = || config::load(cli.config.as_deref(), &cli.overrides);
    match cli.command {
        Command::Solve => {
            let cfg = load()?;
            let out = cfg.output_dir(cli.output.as_deref());
            let r = commands::solve(&cfg, &out)?;
            let m = &r.final_metrics;
            outln!(
                "{} T={} seed={}: feas {:e}, stationarity {:e} -> {}",
                r.algorithm,
                r.iterations,
                r.seed,
                m.feasibility,
                m.stationarity,
                out.display()
            );
        }
        Command::Sweep { iterations, seeds, jobs } => {
            let cfg = load()?;
            let out = cfg.output_dir(cli.output.as_deref());
            let ts = first_nonempty(iterations, &cfg.sweep.iterations, cfg.iterations);
            let seeds = first_nonempty(seeds, &cfg.sweep.seeds, cfg.seed);
            let s = commands::sweep(&cfg, &ts, &seeds, jobs.or(cfg.sweep.jobs), &out)?;
            let show = |v: Option<f64>| v.map_or("null".to_string(), |k| format!("{k:.3}"));
            outln!(
                "{}: slope {} (feasibility {}) over T = {:?} -> {}",
                s.algorithm,
                show(s.slope),
                show(s.slope_feasibility),
                s.iterations,
                out.display()
            );
        }
        Command::Audit { lemma, trials, seed } => {
            let cfg = load()?;
            let out = cfg.output_dir(cli.output.as_deref());
            let res = commands::audit(&cfg, &lemma, trials, seed, &out)?;
            outln!(
                "{}: {} checks, 0 violations, worst slack {:e}",
                res.lemma, res.report.trials, res.report.worst_slack
            );
        }
        Command::Gen {
            name,
            params,
            oracle,
            file,
        } => commands::gen(&name, &params, &oracle, file.as_ref())?,
        Command::Params {
            algorithm,
            schedule,
            lf,
            l0,
            norm_a,
            rho,
            sigma_bar,
            iterations,
            lk_convention,
        } => {
            let req = ParamsRequest {
                algorithm,
                schedule: parse_enum::<ScheduleKind>("schedule", &schedule)?,
                lf,
                l0,
                norm_a,
                rho,
                sigma_bar,
                iterations,
                lk_convention: parse_enum::<LkConvention>("L_K convention", &lk_convention)?,
            };
            let p = commands::params(&req)?;
            outln!("{}", serde_json::to_string_pretty(&p).map_err(|e| CliError::Io(e.to_string()))?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    // Usage errors share exit code 1 with other configuration errors.
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("salm: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
