//! Command-line surface: reproducible factoring runs, distribution dumps,
//! bound-suite verification, and small grid experiments, all with
//! machine-readable outputs (JSON / RFC-4180 CSV, floats at 17 significant
//! digits). Exit codes: 0 success, 1 validation error, 2 verify failure.

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use cvfactor::peaksim::{build_stage, trace_distance, CircuitParams};
use cvfactor::pipeline::{default_attempts, factor, ParamSpec, RunConfig, SamplerKind};
use cvfactor::report::{
    ctrlm_experiment, lsb_displacement_experiment, run_suite, uanm_cross_check,
    valpha_experiment,
};
use cvfactor::spectral::{build_model, gamma_mass, pdf};
use std::io::Write;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "cvfactor", version, about = "oscillator factoring simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ParamsChoice {
    Table,
    DeskStrict,
    DeskLoose,
}

#[derive(Subcommand)]
enum Command {
    /// Run the end-to-end factoring pipeline.
    Factor {
        #[arg(long = "N")]
        n: u64,
        /// table | desk-strict | desk-loose, or a JSON file with parameter
        /// fields by name (kappa_A, delta_A, m, R, ...).
        #[arg(long, default_value = "desk-strict")]
        params: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        attempts: Option<u32>,
        #[arg(long)]
        grid_sampler: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump the analytic output density on a w-grid as CSV (columns: w,p).
    Distribution {
        #[arg(long = "N")]
        n: u64,
        #[arg(long)]
        a: u64,
        #[arg(long, default_value = "desk-strict")]
        params: String,
        #[arg(long)]
        grid_from: f64,
        #[arg(long)]
        grid_to: f64,
        #[arg(long)]
        grid_step: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Interval masses of the output density as JSON.
    Gamma {
        #[arg(long = "N")]
        n: u64,
        #[arg(long)]
        a: u64,
        #[arg(long, default_value = "desk-strict")]
        params: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the bound-check suites; nonzero exit if any check fails.
    Verify {
        #[arg(long)]
        suite: String,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Small grid-simulator experiments.
    Gridsim {
        #[arg(long)]
        circuit: String,
        #[arg(long, default_value_t = 256)]
        grid: usize,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pairwise stage trace distances against their budgets.
    Stages {
        #[arg(long = "N")]
        n: u64,
        #[arg(long)]
        a: u64,
        #[arg(long, default_value = "desk-strict")]
        params: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_params(raw: &str, n: u64) -> Result<(ParamSpec, CircuitParams)> {
    let spec = match raw {
        "table" => ParamSpec::Table,
        "desk-strict" => ParamSpec::DeskStrict,
        "desk-loose" => ParamSpec::DeskLoose,
        path => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading parameter file {path}"))?;
            let params: CircuitParams =
                serde_json::from_str(&text).context("parsing parameter file")?;
            ParamSpec::Custom { params }
        }
    };
    let params = spec.resolve(n)?;
    Ok((spec, params))
}

fn write_json(path: &PathBuf, value: &serde_json::Value) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut file, value)?;
    file.write_all(b"\n")?;
    Ok(())
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(1);
        }
    }
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Factor {
            n,
            params,
            seed,
            attempts,
            grid_sampler,
            out,
        } => {
            if n < 2 {
                bail!("N must be at least 2");
            }
            let (spec, _) = parse_params(&params, n)?;
            let config = RunConfig {
                n_value: n,
                params: spec,
                max_attempts: attempts.unwrap_or_else(|| default_attempts(n)),
                seed,
                sampler: if grid_sampler {
                    SamplerKind::Grid
                } else {
                    SamplerKind::Analytic
                },
            };
            let transcript = factor(&config)?;
            if let Some(path) = out {
                write_json(&path, &serde_json::to_value(&transcript)?)?;
            }
            match transcript.factor {
                Some(f) => {
                    println!(
                        "{f} divides {n} ({} attempt(s), seed {seed})",
                        transcript.attempts_used
                    );
                    Ok(0)
                }
                None => {
                    println!(
                        "no factor found for {n} in {} attempts",
                        transcript.attempts_used
                    );
                    Ok(2)
                }
            }
        }
        Command::Distribution {
            n,
            a,
            params,
            grid_from,
            grid_to,
            grid_step,
            out,
        } => {
            if grid_step <= 0.0 || grid_to <= grid_from {
                bail!("need grid_step > 0 and grid_to > grid_from");
            }
            let (_, params) = parse_params(&params, n)?;
            let model = build_model(&params, a, n)?;
            let mut file = std::fs::File::create(&out)?;
            writeln!(file, "w,p")?;
            let steps = ((grid_to - grid_from) / grid_step).round() as u64;
            for i in 0..=steps {
                let w = grid_from + i as f64 * grid_step;
                writeln!(file, "{},{}", fmt17(w), fmt17(pdf(&model, w)))?;
            }
            println!("wrote {} rows to {}", steps + 1, out.display());
            Ok(0)
        }
        Command::Gamma { n, a, params, out } => {
            let (_, params) = parse_params(&params, n)?;
            let model = build_model(&params, a, n)?;
            let bound = (-std::f64::consts::PI.powi(2)).exp() / 64.0 / model.r as f64;
            let mut masses = serde_json::Map::new();
            let mut min_slack = f64::INFINITY;
            for d in 0..model.r {
                let mass = gamma_mass(&model, d);
                min_slack = min_slack.min(mass - bound);
                masses.insert(d.to_string(), serde_json::json!(mass));
            }
            let doc = serde_json::json!({
                "N": n,
                "a": a,
                "r": model.r,
                "c_phi": model.c_phi,
                "masses": masses,
                "proof_bound": bound,
                "min_slack": min_slack,
                "precondition_failures": model.precondition_failures,
            });
            write_json(&out, &doc)?;
            println!("wrote {}", out.display());
            Ok(0)
        }
        Command::Verify { suite, report } => {
            let Some(reports) = run_suite(&suite) else {
                bail!("unknown suite {suite}; use gkp|bounds|approxcalc|lsb|spectral|all");
            };
            let mut all_ok = true;
            for r in &reports {
                let failed: Vec<_> = r.checks.iter().filter(|c| !c.passed).collect();
                let min_slack = r
                    .checks
                    .iter()
                    .map(|c| c.slack)
                    .fold(f64::INFINITY, f64::min);
                println!(
                    "suite {:<10} {} ({} checks, {} skipped, min slack {:.3e})",
                    r.suite,
                    if r.passed { "PASS" } else { "FAIL" },
                    r.checks.len(),
                    r.skipped.len(),
                    min_slack
                );
                for c in failed {
                    println!("  FAIL {} value {:.6e} bound {:.6e}", c.name, c.value, c.bound);
                    all_ok = false;
                }
            }
            if let Some(path) = report {
                write_json(&path, &serde_json::to_value(&reports)?)?;
            }
            Ok(if all_ok { 0 } else { 2 })
        }
        Command::Gridsim {
            circuit,
            grid,
            eps,
            out,
        } => {
            let doc = match circuit.as_str() {
                "lsb" => {
                    let eps = eps.unwrap_or(0.1);
                    let exp = lsb_displacement_experiment(grid, eps)?;
                    serde_json::to_value(&exp)?
                }
                "ctrlm" => {
                    let (identity_dev, fid) = ctrlm_experiment(grid)?;
                    serde_json::json!({
                        "identity_deviation": identity_dev,
                        "scaled_peak_fidelity": fid,
                    })
                }
                "valpha" => {
                    let (x, z) = valpha_experiment(grid.min(64))?;
                    serde_json::json!({ "mean_a": x, "mean_c": z })
                }
                "uanm" => {
                    let check = uanm_cross_check(grid)?;
                    serde_json::to_value(&check)?
                }
                other => bail!("unknown circuit {other}; use lsb|ctrlm|valpha|uanm"),
            };
            println!("{}", serde_json::to_string_pretty(&doc)?);
            if let Some(path) = out {
                write_json(&path, &doc)?;
            }
            Ok(0)
        }
        Command::Stages { n, a, params, out } => {
            let (_, params) = parse_params(&params, n)?;
            let bits = 64 - n.leading_zeros();
            let budget = cvfactor::approxcalc::stage_errors(&params, bits);
            let stages: Vec<_> = (1..=5u8)
                .map(|j| build_stage(&params, a, n, j))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| anyhow::anyhow!("building stages: {e}"))?;
            let mut pairs = Vec::new();
            for j in [3usize, 4, 5] {
                let d = trace_distance(&stages[j - 2], &stages[j - 1])
                    .map_err(|e| anyhow::anyhow!("stage distance: {e}"))?;
                let bound = budget.formula[j - 1];
                pairs.push(serde_json::json!({
                    "pair": format!("psi{}-psi{}", j - 1, j),
                    "trace_distance": d,
                    "budget": bound,
                    "within": d <= bound,
                }));
            }
            let doc = serde_json::json!({
                "N": n,
                "a": a,
                "params": serde_json::to_value(&params)?,
                "stage_norm_tolerances": stages.iter().map(|s| s.norm_tolerance).collect::<Vec<_>>(),
                "pairs": pairs,
                "budget_total": budget.total,
                "precondition_failures": budget.precondition_failures,
            });
            println!("{}", serde_json::to_string_pretty(&doc)?);
            if let Some(path) = out {
                write_json(&path, &doc)?;
            }
            Ok(0)
        }
    }
}
