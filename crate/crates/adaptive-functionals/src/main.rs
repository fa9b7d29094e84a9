//! Thin command-line front end over the library: estimation from CSV data,
//! Monte Carlo simulation, constant calibration, the lower-bound sweep, and
//! the wavelet residual check.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use adaptive_functionals::error::{Error, Result};
use adaptive_functionals::functionals::{run_pipeline, PipelineConfig, Problem};
use adaptive_functionals::lowerbound::{
    build_priors_scaled, chi2_bound, chi2_mixture_bruteforce, compute_ingredients,
    constrained_risk_rhs, BumpFunction, RiskBoundInputs,
};
use adaptive_functionals::sim::{
    calibrate_constants, emit_csv, emit_json, fit_rate, run_experiment, ExperimentConfig,
};
use adaptive_functionals::ustat::Observation;
use adaptive_functionals::wavelet::{diagnostics, WaveletFamily};

#[derive(Parser)]
#[command(name = "afe", about = "adaptive estimation of nonparametric functionals", version)]
struct Cli {
    /// Cap the worker-thread count (also via ADAPTIVE_FUNC_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one functional-estimation pipeline on a CSV dataset.
    Estimate {
        #[arg(long, value_enum)]
        problem: ProblemArg,
        /// CSV with columns y[,a],x1..xd (for missing data the y column
        /// holds YA, zero whenever a = 0).
        #[arg(long)]
        input: PathBuf,
        /// Pipeline configuration JSON (defaults used when omitted).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Include the full selection trace in the output.
        #[arg(long)]
        trace: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a Monte Carlo experiment from an experiment configuration.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Calibrate the selection constants on the configured null model.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0.95)]
        target: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep the two-hypothesis constructions over k and n.
    Lowerbound {
        #[arg(long, value_enum)]
        problem: ProblemArg,
        #[arg(long, default_value_t = 1.75)]
        a_exp: f64,
        #[arg(long, default_value_t = 1.75)]
        b_exp: f64,
        #[arg(long, default_value_t = 1)]
        dimension: usize,
        /// comma-separated cube counts
        #[arg(long, value_delimiter = ',', default_value = "1,4")]
        k: Vec<usize>,
        /// comma-separated sample sizes
        #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
        n: Vec<usize>,
        /// constant C of the divergence bound
        #[arg(long, default_value_t = 1.0)]
        bound_c: f64,
        #[arg(long, default_value_t = 1.0)]
        amp_scale: f64,
        #[arg(long, default_value_t = 8.0)]
        radius: f64,
        #[arg(long, value_enum, default_value_t = BumpArg::Step)]
        bump: BumpArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print orthonormality and reproduction residuals for a family.
    WaveletCheck {
        #[arg(long, value_enum, default_value_t = FamilyArg::Db4)]
        family: FamilyArg,
        #[arg(long, default_value_t = 1)]
        dimension: usize,
        #[arg(long, default_value_t = 5)]
        max_level: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ProblemArg {
    Treatment,
    Missing,
    Quadratic,
    Variance,
}

impl From<ProblemArg> for Problem {
    fn from(p: ProblemArg) -> Self {
        match p {
            ProblemArg::Treatment => Problem::Treatment,
            ProblemArg::Missing => Problem::Missing,
            ProblemArg::Quadratic => Problem::Quadratic,
            ProblemArg::Variance => Problem::Variance,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BumpArg {
    Step,
    Smooth,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Haar,
    Db2,
    Db3,
    Db4,
}

fn main() {
    let cli = Cli::parse();
    let threads = cli
        .threads
        .or_else(|| std::env::var("ADAPTIVE_FUNC_THREADS").ok().and_then(|v| v.parse().ok()));
    if let Some(t) = threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global();
    }
    match dispatch(cli.command) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}

fn write_output(body: &str, out: Option<&Path>, file_name: &str) -> Result<()> {
    println!("{body}");
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        let path = dir.join(file_name);
        let mut f =
            std::fs::File::create(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
        f.write_all(body.as_bytes())
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        f.write_all(b"\n").map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    Ok(())
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Estimate { problem, input, config, trace, seed, out } => {
            let problem: Problem = problem.into();
            let mut cfg = match config {
                Some(path) => {
                    let body = std::fs::read_to_string(&path)
                        .map_err(|e| Error::io(path.display().to_string(), e))?;
                    serde_json::from_str::<PipelineConfig>(&body)?
                }
                None => PipelineConfig::defaults(1),
            };
            if let Some(s) = seed {
                cfg.shuffle_seed = Some(s);
            }
            let data = read_csv_dataset(&input, problem, cfg.d)?;
            let output = run_pipeline(problem, &data, &cfg)?;

            #[derive(Serialize)]
            struct EstimateReport<'a> {
                problem: Problem,
                estimate: f64,
                selected_entry: usize,
                nuisances: &'a adaptive_functionals::functionals::NuisanceDiagnostics,
                config: &'a PipelineConfig,
                #[serde(skip_serializing_if = "Option::is_none")]
                trace: Option<&'a adaptive_functionals::lepski::SelectionTrace>,
            }
            let report = EstimateReport {
                problem,
                estimate: output.estimate,
                selected_entry: output.trace.selected,
                nuisances: &output.nuisances,
                config: &cfg,
                trace: if trace { Some(&output.trace) } else { None },
            };
            write_output(&serde_json::to_string_pretty(&report)?, out.as_deref(), "estimate.json")
        }
        Command::Simulate { config, seed, out } => {
            let body = std::fs::read_to_string(&config)
                .map_err(|e| Error::io(config.display().to_string(), e))?;
            let mut cfg: ExperimentConfig = serde_json::from_str(&body)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let results = run_experiment(&cfg)?;
            if let Some(dir) = &out {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
                emit_csv(&results, &dir.join("results.csv"))?;
                emit_json(&cfg, &results, &dir.join("summary.json"))?;
            }
            #[derive(Serialize)]
            struct Brief<'a> {
                per_n: &'a [adaptive_functionals::sim::NSummary],
                rate_fit: Option<adaptive_functionals::sim::RateFit>,
                failures: usize,
            }
            let brief = Brief {
                per_n: &results.per_n,
                rate_fit: fit_rate(&results.per_n).ok(),
                failures: results.failures.len(),
            };
            println!("{}", serde_json::to_string_pretty(&brief)?);
            Ok(())
        }
        Command::Calibrate { config, target, seed, out } => {
            let body = std::fs::read_to_string(&config)
                .map_err(|e| Error::io(config.display().to_string(), e))?;
            let mut cfg: ExperimentConfig = serde_json::from_str(&body)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let report = calibrate_constants(&cfg, target)?;
            write_output(
                &serde_json::to_string_pretty(&report)?,
                out.as_deref(),
                "calibration.json",
            )
        }
        Command::Lowerbound {
            problem,
            a_exp,
            b_exp,
            dimension,
            k,
            n,
            bound_c,
            amp_scale,
            radius,
            bump,
            out,
        } => {
            let problem: Problem = problem.into();
            #[derive(Serialize)]
            struct KEntry {
                k: usize,
                theta0_value: f64,
                theta1_value: f64,
                ingredients: adaptive_functionals::lowerbound::DivergenceIngredients,
                rows: Vec<NEntry>,
            }
            #[derive(Serialize)]
            struct NEntry {
                n: usize,
                chi2_bound: f64,
                chi2_exact: Option<f64>,
                constrained_risk_rhs: f64,
            }
            let mut entries = Vec::new();
            for &kk in &k {
                let bump = match bump {
                    BumpArg::Step => BumpFunction::step(dimension),
                    BumpArg::Smooth => BumpFunction::smooth(dimension),
                };
                let (t0, t1) = build_priors_scaled(
                    problem, a_exp, b_exp, dimension, kk, radius, bump, amp_scale,
                )?;
                let ing = compute_ingredients(&t0, &t1)?;
                let mut rows = Vec::new();
                for &nn in &n {
                    let bound = chi2_bound(&ing, nn, bound_c);
                    let exact = chi2_mixture_bruteforce(&t0, &t1, nn).ok();
                    let chi = exact.unwrap_or(bound).max(0.0).sqrt();
                    let rhs = constrained_risk_rhs(&RiskBoundInputs {
                        mu0: t0.functional_value(),
                        mu1: t1.functional_value(),
                        sigma0: 0.0,
                        epsilon: 0.0,
                        chi,
                    });
                    rows.push(NEntry {
                        n: nn,
                        chi2_bound: bound,
                        chi2_exact: exact,
                        constrained_risk_rhs: rhs,
                    });
                }
                entries.push(KEntry {
                    k: kk,
                    theta0_value: t0.functional_value(),
                    theta1_value: t1.functional_value(),
                    ingredients: ing,
                    rows,
                });
            }
            write_output(&serde_json::to_string_pretty(&entries)?, out.as_deref(), "lowerbound.json")
        }
        Command::WaveletCheck { family, dimension, max_level, seed, out } => {
            let fam = match family {
                FamilyArg::Haar => WaveletFamily::haar(dimension)?,
                FamilyArg::Db2 => WaveletFamily::daubechies(2, dimension)?,
                FamilyArg::Db3 => WaveletFamily::daubechies(3, dimension)?,
                FamilyArg::Db4 => WaveletFamily::daubechies(4, dimension)?,
            };
            let diag = diagnostics(&fam, max_level, seed)?;
            write_output(
                &serde_json::to_string_pretty(&diag)?,
                out.as_deref(),
                "wavelet_check.json",
            )
        }
    }
}

/// Parse the documented CSV schema: columns `y`, optional `a`, then `x1..xd`.
fn read_csv_dataset(path: &Path, problem: Problem, d: usize) -> Result<Vec<Observation>> {
    let mut reader = csv::Reader::from_path(path).map_err(Error::Csv)?;
    let headers = reader.headers().map_err(Error::Csv)?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let y_col = col("y").ok_or_else(|| Error::Contract("CSV needs a 'y' column".into()))?;
    let a_col = col("a");
    let x_cols: Vec<usize> = (1..=d)
        .map(|m| col(&format!("x{m}")).ok_or_else(|| Error::Contract(format!("CSV needs column x{m}"))))
        .collect::<Result<_>>()?;
    let needs_a = matches!(problem, Problem::Treatment | Problem::Missing);
    if needs_a && a_col.is_none() {
        return Err(Error::Contract(format!("problem {problem} needs an 'a' column")));
    }
    let parse = |field: &str, row: usize| -> Result<f64> {
        field
            .trim()
            .parse::<f64>()
            .map_err(|_| Error::Contract(format!("row {row}: bad numeric field '{field}'")))
    };
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(Error::Csv)?;
        let y = parse(&record[y_col], i)?;
        let w = if needs_a { vec![y, parse(&record[a_col.unwrap()], i)?] } else { vec![y] };
        let x: Vec<f64> = x_cols.iter().map(|&c| parse(&record[c], i)).collect::<Result<_>>()?;
        out.push(Observation::new(w, x)?);
    }
    Ok(out)
}
