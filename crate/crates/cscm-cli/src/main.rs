//! `cscm`: simulate current-status-with-mark data, fit the maximum smoothed
//! likelihood estimator, evaluate plug-in competitors, compute diagnostics,
//! and run the Monte Carlo MSE study.
//!
//! Exit codes: 0 on success, 1 on domain errors (reported as one JSON
//! object on stderr), 2 on usage errors. All floats print with 17
//! significant digits so outputs round-trip exactly.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cscm::{
    asymptotic_msle, asymptotic_plugin, compare_reference, diagnostics, fit_msle,
    kernel_plugin_cdf, plugin_grid_cdf, run_mse_study, BenchConfig, CscmError, EmptyCellPolicy,
    FitOptions, FitResult, Grid, Histogram, ModelKind, ModelSpec, Sample,
};

#[derive(Parser)]
#[command(name = "cscm", version, about = "Joint distribution estimation under current-status censoring with a continuous mark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a seeded sample from a built-in model and write it as CSV.
    Simulate(SimulateArgs),
    /// Fit the maximum smoothed likelihood estimator to a sample file.
    Fit(FitArgs),
    /// Evaluate a fitted CDF at a point or on a lattice.
    Eval(EvalArgs),
    /// Evaluate a plug-in estimator at a point.
    Plugin(PluginArgs),
    /// Distances to a built-in model and asymptotic calculators.
    Diag(DiagArgs),
    /// Monte Carlo MSE study with reference comparison.
    Bench(BenchArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    model: ModelArg,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    /// Time cells; defaults to the sample-size rule.
    #[arg(long)]
    k: Option<usize>,
    /// Mark cells; defaults to 5.
    #[arg(long)]
    l: Option<usize>,
    /// Upper support bound for t; defaults to the sample maximum.
    #[arg(long)]
    m1: Option<f64>,
    /// Upper support bound for z; defaults to the sample maximum.
    #[arg(long)]
    m2: Option<f64>,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 1_000_000)]
    max_iter: usize,
    /// Fit even when some histogram cells are empty (the maximizer may not
    /// be unique then).
    #[arg(long)]
    allow_empty_cells: bool,
    /// Write the binned histogram as JSON before fitting.
    #[arg(long)]
    dump_hist: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    fit: PathBuf,
    #[arg(long, requires = "z")]
    t: Option<f64>,
    #[arg(long, requires = "t")]
    z: Option<f64>,
    /// Write an evaluation lattice as CSV (t,z,F) instead of one value.
    #[arg(long, conflicts_with_all = ["t", "z"])]
    grid_out: Option<PathBuf>,
    /// Lattice steps per axis for --grid-out.
    #[arg(long, default_value_t = 100)]
    steps: usize,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    Uniform,
    Polynomial,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> ModelKind {
        match m {
            ModelArg::Uniform => ModelKind::Uniform,
            ModelArg::Polynomial => ModelKind::Polynomial,
        }
    }
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum PluginMethod {
    Grid,
    Kernel,
}

#[derive(Args)]
struct PluginArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    method: PluginMethod,
    /// Time cells (grid method).
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Mark cells (grid method).
    #[arg(long, default_value_t = 5)]
    l: usize,
    /// Kernel bandwidth (kernel method).
    #[arg(long, default_value_t = 0.25)]
    bandwidth: f64,
    #[arg(long)]
    m1: Option<f64>,
    #[arg(long)]
    m2: Option<f64>,
    #[arg(long)]
    t: f64,
    #[arg(long)]
    z: f64,
}

#[derive(Args)]
struct DiagArgs {
    #[arg(long)]
    fit: PathBuf,
    #[arg(long, value_enum)]
    model: ModelArg,
    #[arg(long)]
    report: PathBuf,
    #[arg(long, default_value_t = 0.6)]
    t0: f64,
    #[arg(long, default_value_t = 0.6)]
    z0: f64,
    /// Binwidth constant in the asymptotic formulas.
    #[arg(long, default_value_t = 1.0)]
    c1: f64,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let payload = serde_json::json!({
                "error": err.kind(),
                "message": err.to_string(),
            });
            eprintln!("{payload}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<(), CscmError> {
    match cli.command {
        Command::Simulate(args) => {
            let model = ModelSpec::new(args.model.into());
            let sample = cscm::draw_sample(&model, args.n, args.seed)?;
            sample.to_csv_path(&args.out)?;
            println!("wrote {} observations to {}", sample.n(), args.out.display());
            Ok(())
        }
        Command::Fit(args) => {
            let sample = Sample::from_csv_path(&args.data)?;
            let grid = grid_for(&sample, args.k, args.l, args.m1, args.m2)?;
            let hist = Histogram::build(&sample, &grid)?;
            if let Some(path) = &args.dump_hist {
                std::fs::write(path, serde_json::to_string_pretty(&hist)?)?;
            }
            let opts = FitOptions {
                tol: args.tol,
                max_iter: args.max_iter,
                init: None,
                empty_cells: if args.allow_empty_cells {
                    EmptyCellPolicy::Proceed
                } else {
                    EmptyCellPolicy::Reject
                },
            };
            let fit = fit_msle(&hist, &opts)?;
            std::fs::write(&args.out, fit.to_json()?)?;
            println!(
                "converged={} iterations={} fenchel_gap={} objective={}",
                fit.converged,
                fit.iterations,
                fmt(fit.fenchel_gap),
                fmt(fit.objective)
            );
            Ok(())
        }
        Command::Eval(args) => {
            let fit = FitResult::from_json(&std::fs::read_to_string(&args.fit)?)?;
            if !fit.converged {
                return Err(CscmError::InvalidArgument(
                    "fit did not converge; refusing to evaluate".into(),
                ));
            }
            match (args.t, args.z, args.grid_out) {
                (Some(t), Some(z), None) => {
                    println!("{}", fmt(fit.cdf(t, z)));
                    Ok(())
                }
                (None, None, Some(path)) => {
                    if args.steps == 0 {
                        return Err(CscmError::InvalidArgument("steps must be positive".into()));
                    }
                    let grid = fit.masses.grid();
                    let (m1, m2) = (grid.m1(), grid.m2());
                    let mut out = std::io::BufWriter::new(std::fs::File::create(&path)?);
                    writeln!(out, "t,z,F")?;
                    for i in 0..=args.steps {
                        let t = m1 * i as f64 / args.steps as f64;
                        for j in 0..=args.steps {
                            let z = m2 * j as f64 / args.steps as f64;
                            writeln!(out, "{},{},{}", fmt(t), fmt(z), fmt(fit.cdf(t, z)))?;
                        }
                    }
                    Ok(())
                }
                _ => Err(CscmError::InvalidArgument(
                    "give either --t and --z, or --grid-out".into(),
                )),
            }
        }
        Command::Plugin(args) => {
            let sample = Sample::from_csv_path(&args.data)?;
            let value = match args.method {
                PluginMethod::Grid => {
                    let grid = grid_for(&sample, Some(args.k), Some(args.l), args.m1, args.m2)?;
                    plugin_grid_cdf(&sample, &grid)?.eval(args.t, args.z)?
                }
                PluginMethod::Kernel => {
                    kernel_plugin_cdf(&sample, args.t, args.z, args.bandwidth)?
                }
            };
            println!("{}", fmt(value));
            Ok(())
        }
        Command::Diag(args) => {
            let fit = FitResult::from_json(&std::fs::read_to_string(&args.fit)?)?;
            let model = ModelSpec::new(args.model.into());
            let fitted = diagnostics::LambdaDensity::from_fit(&fit, &model);
            let truth = diagnostics::LambdaDensity::from_model(&model);
            let hellinger = diagnostics::hellinger(&fitted, &truth)?;
            let kl = diagnostics::kl(&fitted, &truth)?;
            let l1 = diagnostics::l1_distance(&fitted, &truth)?;
            let (msle_beta, msle_sigma2) = asymptotic_msle(&model, args.t0, args.z0, args.c1)?;
            let (plug_beta, plug_sigma2) = asymptotic_plugin(&model, args.t0, args.z0, args.c1)?;
            // JSON has no infinity; an infinite divergence becomes null
            let finite = |v: f64| v.is_finite().then_some(v);
            let report = serde_json::json!({
                "fit": {
                    "converged": fit.converged,
                    "iterations": fit.iterations,
                    "fenchel_gap": fit.fenchel_gap,
                    "objective": fit.objective,
                    "degenerate_steps": fit.degenerate_steps,
                },
                "distances_to_model": {
                    "hellinger": hellinger,
                    "kl": finite(kl),
                    "l1": l1,
                },
                "asymptotics": {
                    "t0": args.t0,
                    "z0": args.z0,
                    "c1": args.c1,
                    "msle": { "beta": msle_beta, "sigma2": msle_sigma2 },
                    "plugin": { "beta": plug_beta, "sigma2": plug_sigma2 },
                    "variance_ratio": msle_sigma2 / plug_sigma2,
                },
            });
            std::fs::write(&args.report, serde_json::to_string_pretty(&report)?)?;
            println!("hellinger={} kl={} l1={}", fmt(hellinger), fmt(kl), fmt(l1));
            Ok(())
        }
        Command::Bench(args) => {
            let config: BenchConfig =
                serde_json::from_str(&std::fs::read_to_string(&args.config)?)?;
            let table = run_mse_study(&config)?;
            table.to_csv_path(&args.out)?;
            let report = compare_reference(&table);
            for entry in &report.entries {
                match (entry.mse, entry.ratio) {
                    (Some(mse), Some(ratio)) => println!(
                        "t0={} n={} {}: mse={} reference={} ratio={}{}",
                        entry.t0,
                        entry.n,
                        entry.estimator,
                        fmt(mse),
                        fmt(entry.reference),
                        fmt(ratio),
                        if entry.flagged { " FLAGGED" } else { "" },
                    ),
                    _ => println!(
                        "t0={} n={} {}: reference={}",
                        entry.t0,
                        entry.n,
                        entry.estimator,
                        fmt(entry.reference),
                    ),
                }
            }
            println!("wrote {} rows to {}", table.rows.len(), args.out.display());
            Ok(())
        }
    }
}

fn grid_for(
    sample: &Sample,
    k: Option<usize>,
    l: Option<usize>,
    m1: Option<f64>,
    m2: Option<f64>,
) -> Result<Grid, CscmError> {
    let bounds = sample.support_bounds();
    let m1 = m1.unwrap_or(bounds.0);
    let m2 = m2.unwrap_or(bounds.1);
    let defaults = Grid::default_cells(sample.n());
    let k = k.unwrap_or(defaults.0);
    let l = l.unwrap_or(defaults.1);
    Grid::new(m1, m2, k, l)
}
