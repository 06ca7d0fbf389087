//! `fracmc` — configuration-driven experiment runner.
//!
//! Subcommands:
//! * `run <config>` — execute a TOML experiment (training or estimator
//!   sweep) and write its artifact directory.
//! * `compare <dirs...>` — combine run summaries into one CSV table.
//! * `estimate <function> <alpha> <side> <N> <K> <stream>` — standalone
//!   estimator sweep printed to stdout.
//!
//! Exit codes: 0 success, 1 runtime error, 2 invalid configuration,
//! 3 NaN abort (checkpoint written).

use clap::Parser;
use fracmc::config::{
    parse_side, parse_stream, EstimateFunction, EstimatePlan, ExperimentConfig, RunPlan,
};
use fracmc::estimator::{gl_deterministic_oracle, EstimatorConfig, Side};
use fracmc::problems::l2_relative_error;
use fracmc::qmc::{StreamKind, UniformStream};
use fracmc::report::{self, NodeDiagnostics, RunSummary, ValidationRow};
use fracmc::sampler::FracOrder;
use fracmc::solver::{self, median_window_ms, SolverError};
use std::path::PathBuf;
use std::process::ExitCode;

const EXIT_RUNTIME: u8 = 1;
const EXIT_INVALID_CONFIG: u8 = 2;
const EXIT_NAN_ABORT: u8 = 3;

#[derive(Parser)]
#[command(name = "fracmc", about = "Monte Carlo fractional-derivative estimators and collocation solver")]
enum Cli {
    /// Run an experiment described by a TOML config file.
    Run { config: PathBuf },
    /// Combine run directories into an accuracy/timing table (CSV on stdout).
    Compare { dirs: Vec<PathBuf> },
    /// Standalone estimator sweep; prints a JSON summary.
    Estimate {
        /// x_sq or one_minus_x_sq
        function: String,
        alpha: f64,
        /// left or right
        side: String,
        n: usize,
        k: usize,
        /// pseudo, sobol, or halton
        stream: String,
    },
}

fn main() -> ExitCode {
    match Cli::parse() {
        Cli::Run { config } => cmd_run(&config),
        Cli::Compare { dirs } => cmd_compare(&dirs),
        Cli::Estimate { function, alpha, side, n, k, stream } => {
            cmd_estimate(&function, alpha, &side, n, k, &stream)
        }
    }
}

fn cmd_run(path: &PathBuf) -> ExitCode {
    let mut cfg = match ExperimentConfig::from_path(path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("invalid config: {e}");
            return ExitCode::from(EXIT_INVALID_CONFIG);
        }
    };
    if let Err(e) = cfg.apply_env_overrides() {
        eprintln!("invalid config: {e}");
        return ExitCode::from(EXIT_INVALID_CONFIG);
    }
    let plan = match cfg.plan() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("invalid config: {e}");
            return ExitCode::from(EXIT_INVALID_CONFIG);
        }
    };
    let out_dir = PathBuf::from(&cfg.output_dir);
    if let Err(e) = std::fs::create_dir_all(&out_dir) {
        eprintln!("cannot create output dir {}: {e}", out_dir.display());
        return ExitCode::from(EXIT_RUNTIME);
    }
    if let Err(e) = std::fs::write(out_dir.join(report::CONFIG_ECHO_FILE), cfg.to_toml()) {
        eprintln!("cannot write config echo: {e}");
        return ExitCode::from(EXIT_RUNTIME);
    }
    match plan {
        RunPlan::Train { problem, train } => {
            match solver::train(&problem, &train) {
                Ok(out) => {
                    let summary = RunSummary {
                        mode: "train".into(),
                        problem: problem.id.name().into(),
                        n_points: train.n_points,
                        repeats: train.repeats,
                        seed: train.seed,
                        iterations: train.iterations,
                        l2_relative_error: out.validation_l2,
                        median_wall_ms_per_10_iter: median_window_ms(&out.history),
                        unique_evals: out.unique_evals,
                        raw_draws: out.raw_draws,
                    };
                    let grid = validation_rows(&problem, &train, &out.net);
                    let diag = NodeDiagnostics {
                        n_points: train.n_points,
                        repeats: train.repeats,
                        unique_evals: out.unique_evals,
                        raw_draws: out.raw_draws,
                        unique_to_raw_ratio: out.unique_evals as f64 / out.raw_draws.max(1) as f64,
                    };
                    let io = report::write_history(&out_dir, &out.history)
                        .and_then(|()| report::write_validation_grid(&out_dir, &grid))
                        .and_then(|()| report::write_nodes(&out_dir, &diag))
                        .and_then(|()| report::write_error_report(&out_dir, out.validation_l2))
                        .and_then(|()| report::write_summary(&out_dir, &summary));
                    if let Err(e) = io {
                        eprintln!("cannot write artifacts: {e}");
                        return ExitCode::from(EXIT_RUNTIME);
                    }
                    println!(
                        "run complete: L2 relative error {:.6e} ({} unique evals / {} raw draws)",
                        out.validation_l2, out.unique_evals, out.raw_draws
                    );
                    ExitCode::SUCCESS
                }
                Err(SolverError::NanAbort { iteration, checkpoint }) => {
                    let ckpt = out_dir.join("checkpoint.json");
                    match serde_json::to_string_pretty(&*checkpoint) {
                        Ok(json) => {
                            if let Err(e) = std::fs::write(&ckpt, json) {
                                eprintln!("cannot write checkpoint: {e}");
                            }
                        }
                        Err(e) => eprintln!("cannot serialize checkpoint: {e}"),
                    }
                    eprintln!(
                        "non-finite loss at iteration {iteration}; checkpoint written to {}",
                        ckpt.display()
                    );
                    ExitCode::from(EXIT_NAN_ABORT)
                }
                Err(e) => {
                    eprintln!("training failed: {e}");
                    ExitCode::from(EXIT_RUNTIME)
                }
            }
        }
        RunPlan::Estimate(plan) => {
            let (l2, grid) = run_estimate(&plan);
            let summary = RunSummary {
                mode: "estimate".into(),
                problem: format!("{}({})", plan.function.name(), plan.alpha),
                n_points: plan.n_points,
                repeats: plan.repeats,
                seed: plan.seed,
                iterations: 0,
                l2_relative_error: l2,
                median_wall_ms_per_10_iter: None,
                unique_evals: 0,
                raw_draws: (plan.n_points * plan.repeats) as u64 * 99,
            };
            let io = report::write_validation_grid(&out_dir, &grid)
                .and_then(|()| report::write_error_report(&out_dir, l2))
                .and_then(|()| report::write_summary(&out_dir, &summary));
            if let Err(e) = io {
                eprintln!("cannot write artifacts: {e}");
                return ExitCode::from(EXIT_RUNTIME);
            }
            println!("estimate complete: median L2 relative error {l2:.6e}");
            ExitCode::SUCCESS
        }
    }
}

fn validation_rows(
    problem: &fracmc::problems::ProblemSpec,
    train: &solver::TrainConfig,
    net: &fracmc::nn::Mlp,
) -> Vec<ValidationRow> {
    // regenerate the validation grid exactly as training sampled it
    let mut stream = UniformStream::pseudo(train.seed);
    match solver::sample_datasets(problem, train, &mut stream) {
        Ok(data) => data
            .validation_inputs
            .iter()
            .zip(&data.validation_exact)
            .map(|(x, &e)| ValidationRow {
                coords: x.clone(),
                exact: e,
                predicted: net.eval_scalar(x),
            })
            .collect(),
        Err(_) => Vec::new(),
    }
}

/// One estimator sweep: the 99-point grid of (0,1), median L² relative
/// error over the plan's seeds. Returns the grid rows of the last seed.
fn run_estimate(plan: &EstimatePlan) -> (f64, Vec<ValidationRow>) {
    let grid: Vec<f64> = (1..100).map(|i| i as f64 / 100.0).collect();
    let order = FracOrder::new(plan.alpha).expect("validated order");
    let cfg = EstimatorConfig::new(plan.n_points, plan.repeats, order).expect("validated sizes");
    let natural = matches!(
        (plan.function, plan.side),
        (EstimateFunction::XSq, Side::Left) | (EstimateFunction::OneMinusXSq, Side::Right)
    );
    let exact: Vec<f64> = grid
        .iter()
        .map(|&x| {
            if natural {
                plan.function.exact_derivative(plan.alpha, x)
            } else {
                let (bound, n_big) = match plan.side {
                    Side::Left => (0.0, 100_000),
                    Side::Right => (1.0, 100_000),
                };
                gl_deterministic_oracle(
                    |v| plan.function.eval(v),
                    x,
                    bound,
                    plan.side,
                    order,
                    n_big,
                )
            }
        })
        .collect();
    let mut errors = Vec::with_capacity(plan.n_seeds);
    let mut last_rows = Vec::new();
    for s in 0..plan.n_seeds {
        let kind = match plan.stream {
            StreamKind::PseudoRandom { seed } => StreamKind::PseudoRandom { seed: seed + s as u64 },
            other => other,
        };
        let mut stream = UniformStream::new(kind);
        let mut predicted = Vec::with_capacity(grid.len());
        for &x in &grid {
            let est = match plan.side {
                Side::Left => fracmc::estimator::gl_left(
                    |v| plan.function.eval(v),
                    x,
                    0.0,
                    &cfg,
                    &mut stream,
                ),
                Side::Right => fracmc::estimator::gl_right(
                    |v| plan.function.eval(v),
                    x,
                    1.0,
                    &cfg,
                    &mut stream,
                ),
            };
            predicted.push(est.expect("interior grid point"));
        }
        errors.push(l2_relative_error(&exact, &predicted).expect("nonzero exact"));
        last_rows = grid
            .iter()
            .zip(&exact)
            .zip(&predicted)
            .map(|((&x, &e), &p)| ValidationRow { coords: vec![x], exact: e, predicted: p })
            .collect();
    }
    errors.sort_by(|a, b| a.partial_cmp(b).unwrap());
    (errors[errors.len() / 2], last_rows)
}

fn cmd_compare(dirs: &[PathBuf]) -> ExitCode {
    match report::compare(dirs) {
        Ok(rows) => {
            let mut out = std::io::stdout();
            if let Err(e) = report::write_compare_csv(&mut out, &rows) {
                eprintln!("cannot write table: {e}");
                return ExitCode::from(EXIT_RUNTIME);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("compare failed: {e}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn cmd_estimate(function: &str, alpha: f64, side: &str, n: usize, k: usize, stream: &str) -> ExitCode {
    let seed = std::env::var("FRACMC_SEED")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(7u64);
    let plan = (|| -> Result<EstimatePlan, fracmc::config::ConfigError> {
        Ok(EstimatePlan {
            function: EstimateFunction::parse(function)?,
            alpha: if 1.0 < alpha && alpha < 2.0 {
                alpha
            } else {
                return Err(fracmc::config::ConfigError::RieszPole(alpha));
            },
            side: parse_side(side)?,
            n_points: n,
            repeats: k,
            stream: parse_stream(stream, seed)?,
            seed,
            n_seeds: 10,
        })
    })();
    let plan = match plan {
        Ok(p) => p,
        Err(e) => {
            eprintln!("invalid arguments: {e}");
            return ExitCode::from(EXIT_INVALID_CONFIG);
        }
    };
    if n == 0 || k == 0 {
        eprintln!("invalid arguments: N and K must be positive");
        return ExitCode::from(EXIT_INVALID_CONFIG);
    }
    let (l2, _) = run_estimate(&plan);
    println!(
        "{{\"function\":\"{}\",\"alpha\":{},\"side\":\"{}\",\"n\":{},\"k\":{},\"stream\":\"{}\",\"l2_relative_error\":{}}}",
        plan.function.name(),
        plan.alpha,
        side,
        n,
        k,
        stream,
        l2
    );
    ExitCode::SUCCESS
}
