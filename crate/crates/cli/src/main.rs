//! `brenier-verify`: check good functions, compute conjugates, solve
//! transport problems, run verification suites, and probe far-field decay.
//!
//! Exit codes: 0 success, 1 verification failure (violated bound or failed
//! goodness property), 2 configuration or input errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use brenier_bounds::config::{load_potential, load_problem};
use brenier_bounds::conjugate::legendre_transform;
use brenier_bounds::error::Error;
use brenier_bounds::grid::GridSpec;
use brenier_bounds::increments::far_field_decay_probe;
use brenier_bounds::symcalc::{check_goodness, GoodFunctionSpec};
use brenier_bounds::transport::solve;
use brenier_bounds::verify::{parse_suite_config, run_suite};

/// Environment variable selecting the rayon thread count.
const THREADS_ENV: &str = "BRENIER_VERIFY_THREADS";

#[derive(Parser)]
#[command(
    name = "brenier-verify",
    about = "Verify spectral Hessian bounds for Brenier maps between log-concave measures",
    version
)]
struct Cli {
    /// Seed for randomized paths (goodness probes, sliced metrics).
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Probe convexity, monotonicity, positivity, and homogeneity of a
    /// good-function spec (JSON).
    CheckGood {
        spec: PathBuf,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
    },
    /// Compute the discrete Legendre transform of a potential (JSON) onto a
    /// dual grid, writing the binary field and a CSV dump.
    Conjugate {
        potential: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Primal samples per axis for analytic potentials.
        #[arg(long, default_value_t = 2001)]
        primal_n: usize,
        /// Dual box lower corner (comma separated per axis).
        #[arg(long, value_delimiter = ',', required = true)]
        dual_low: Vec<f64>,
        /// Dual box upper corner.
        #[arg(long, value_delimiter = ',', required = true)]
        dual_high: Vec<f64>,
        /// Dual nodes per axis.
        #[arg(long, value_delimiter = ',', required = true)]
        dual_n: Vec<usize>,
    },
    /// Solve a transport problem (JSON spec or registry reference) and write
    /// the solution fields plus diagnostics.
    Solve {
        problem: PathBuf,
        #[arg(long, default_value = "solution")]
        out: PathBuf,
    },
    /// Run a verification suite (TOML) and write bound reports.
    Verify {
        suite: PathBuf,
        #[arg(long, default_value = "reports")]
        report_dir: PathBuf,
    },
    /// Probe |T(x)| → j on a radius ladder for a compact-support target.
    DecayProbe {
        problem: PathBuf,
        /// Support radius j of the target density.
        #[arg(long)]
        j: f64,
        #[arg(long, value_delimiter = ',', default_value = "1.5,2.0,2.5,3.0")]
        radii: Vec<f64>,
        /// Sample points per radius (2D and up).
        #[arg(long, default_value_t = 64)]
        samples: usize,
        /// CSV output path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn init_threads() {
    if let Ok(threads) = std::env::var(THREADS_ENV) {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        } else {
            eprintln!("warning: ignoring non-numeric {THREADS_ENV}={threads}");
        }
    }
}

fn main() -> ExitCode {
    init_threads();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.cmd {
        Cmd::CheckGood { spec, trials } => {
            let text = std::fs::read_to_string(&spec)?;
            let f: GoodFunctionSpec = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", spec.display())))?;
            let report = check_goodness(&f, trials, cli.seed)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&report).map_err(|e| Error::Config(e.to_string()))?
            );
            for (name, outcome) in [
                ("convexity", &report.convexity),
                ("monotonicity", &report.monotonicity),
                ("positivity", &report.positivity),
                ("homogeneity", &report.homogeneity),
            ] {
                println!(
                    "{name}: {} ({} / {} trials)",
                    if outcome.passed() { "PASS" } else { "FAIL" },
                    outcome.passes,
                    outcome.passes + outcome.failures
                );
            }
            Ok(if report.all_passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Cmd::Conjugate {
            potential,
            out,
            primal_n,
            dual_low,
            dual_high,
            dual_n,
        } => {
            let w = load_potential(&potential)?;
            let dual = GridSpec::new(dual_low, dual_high, dual_n)?;
            let conj = legendre_transform(&w, primal_n, &dual)?;
            std::fs::create_dir_all(&out)?;
            conj.save(out.join("conjugate.bin"))?;
            if conj.spec.dim <= 2 {
                let file = std::fs::File::create(out.join("conjugate.csv"))?;
                conj.write_csv(std::io::BufWriter::new(file))?;
            }
            println!("conjugate written to {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Solve { problem, out } => {
            let spec = load_problem(&problem)?;
            let sol = solve(&spec)?;
            sol.save(&out)?;
            println!(
                "solved: {} iterations, marginal error {:.3e}, push W1 {:.3e}; fields in {}",
                sol.meta.iterations,
                sol.meta.marginal_error,
                sol.meta.push_tol,
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Verify { suite, report_dir } => {
            let text = std::fs::read_to_string(&suite)?;
            let config = parse_suite_config(&text)?;
            let outcome = run_suite(&config, &report_dir)?;
            for report in &outcome.reports {
                println!(
                    "{:<24} {:<12} ratio {:.4} (±{:.1e})  {:?}",
                    report.problem_id,
                    report.f.label(),
                    report.ratio,
                    report.total_margin,
                    report.verdict
                );
            }
            println!("summary: {}", outcome.summary_csv.display());
            Ok(if outcome.any_violated {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            })
        }
        Cmd::DecayProbe {
            problem,
            j,
            radii,
            samples,
            out,
        } => {
            let spec = load_problem(&problem)?;
            let sol = solve(&spec)?;
            let report = far_field_decay_probe(&sol, j, &radii, samples)?;
            match out {
                Some(path) => {
                    let file = std::fs::File::create(&path)?;
                    report.write_csv(std::io::BufWriter::new(file))?;
                    println!("decay report written to {}", path.display());
                }
                None => report.write_csv(std::io::stdout().lock())?,
            }
            for stats in &report.per_radius {
                println!(
                    "r = {:.3}: | |T|-j | ≤ {:.4e}, angle ≤ {:.4e} rad",
                    stats.radius, stats.max_radial_deviation, stats.max_angle
                );
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
