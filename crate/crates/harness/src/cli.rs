//! Command-line front end. Exit codes: 0 success, 1 infeasible verdict or
//! failed self-test, 2 error.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use fdswipt_core::conic::{self, SolverOptions};
use fdswipt_core::model::sample_channels;
use fdswipt_core::search::{self, SearchError, SearchOptions};
use fdswipt_core::srm::{Feasibility, SrmContext};

use crate::config::ExperimentConfig;
use crate::experiments::{self, fmt_num, RunOptions};
use crate::selftest;

#[derive(Debug, Parser)]
#[command(name = "fdswipt", version, about = "Secure beamforming for full-duplex SWIPT links")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON experiment configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed (overrides `base.seed`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    #[arg(long, global = true)]
    pub theta_points: Option<usize>,
    #[arg(long, global = true)]
    pub t_points: Option<usize>,
    #[arg(long, global = true)]
    pub emit_plots: bool,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Record wall-clock solve times in the CSV output.
    #[arg(long, global = true)]
    pub timing: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decide feasibility of one channel draw.
    Feasibility,
    /// Optimise one channel draw and print the design summary.
    Solve {
        /// Write the solver iterate trace at the selected point to this CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Export the (theta, t) objective surface of one draw.
    Surface,
    /// Average secrecy rate over the p_req sweep.
    Sweep,
    /// Cross-check the solver against the brute-force oracle.
    Selftest,
}

fn effective_config(cli: &Cli) -> Result<ExperimentConfig, String> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path).map_err(|e| e.to_string())?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.base.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    if let Some(trials) = cli.trials {
        config.trials = trials;
    }
    if let Some(n) = cli.theta_points {
        config.grid.theta_points = n;
    }
    if let Some(n) = cli.t_points {
        config.grid.t_points = n;
    }
    config.emit_plots |= cli.emit_plots;
    config
        .validate()
        .map_err(|(key, msg)| format!("invalid {key}: {msg}"))?;
    Ok(config)
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let config = match effective_config(&cli) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("error: {msg}");
            return 2;
        }
    };
    match run(&cli, &config) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            2
        }
    }
}

fn run(cli: &Cli, config: &ExperimentConfig) -> Result<i32, String> {
    let err = |e: &dyn std::fmt::Display| e.to_string();
    match &cli.command {
        Command::Feasibility => {
            let ctx = SrmContext::new(sample_channels(&config.base, 0), config.base.clone()).map_err(|e| err(&e))?;
            match ctx.check_feasibility().map_err(|e| err(&e))? {
                Feasibility::Feasible { .. } => {
                    println!("feasible");
                    Ok(0)
                }
                Feasibility::Infeasible(cert) => {
                    println!("infeasible: {cert}");
                    Ok(1)
                }
            }
        }
        Command::Solve { trace } => {
            let ctx = SrmContext::new(sample_channels(&config.base, 0), config.base.clone()).map_err(|e| err(&e))?;
            let result = match search::optimize_with(&ctx, &config.grid, &SearchOptions::default()) {
                Ok(r) => r,
                Err(SearchError::Infeasible(cert)) => {
                    println!("infeasible: {cert}");
                    return Ok(1);
                }
                Err(e) => return Err(err(&e)),
            };
            let check = ctx.evaluate(&result.best).map_err(|e| err(&e))?;
            println!("secrecy_rate_nats {}", fmt_num(result.secrecy_rate));
            println!("theta_star {}", fmt_num(result.best_point.theta));
            println!("t_star {}", fmt_num(result.best_point.t));
            println!("objective {}", fmt_num(result.best_objective));
            println!("recovery {:?}", result.recovery.method);
            println!("ranks {} {}", result.best.ranks[0], result.best.ranks[1]);
            println!("solves {}", result.solves);
            println!();
            println!("{:<16} {:>20}", "constraint", "residual");
            let r = &check.residuals;
            let mut rows = vec![
                ("power_a".to_string(), r.power_a),
                ("power_b".to_string(), r.power_b),
                ("an_at_a".to_string(), r.an_at_a),
                ("an_at_b".to_string(), r.an_at_b),
                ("lsi_a".to_string(), r.lsi_a),
                ("lsi_b".to_string(), r.lsi_b),
            ];
            rows.extend(r.energy.iter().enumerate().map(|(k, e)| (format!("energy[{k}]"), *e)));
            rows.extend(
                ["leak_total", "leak_a", "leak_b"]
                    .iter()
                    .zip(check.envelope_excess)
                    .map(|(n, v)| (n.to_string(), v)),
            );
            for (name, value) in rows {
                println!("{name:<16} {:>20}", fmt_num(value));
            }
            if let Some(path) = trace {
                let problem = ctx.build(result.best_point);
                let opts = SolverOptions {
                    record_trace: true,
                    ..SolverOptions::default()
                };
                let sol = conic::solve(&problem, &opts).map_err(|e| err(&e))?;
                let mut w = csv::Writer::from_path(path).map_err(|e| err(&e))?;
                w.write_record(["iteration", "barrier_weight", "newton_decrement", "objective"])
                    .map_err(|e| err(&e))?;
                for row in &sol.trace {
                    w.write_record([
                        row.iteration.to_string(),
                        fmt_num(row.barrier_weight),
                        fmt_num(row.newton_decrement),
                        fmt_num(row.objective),
                    ])
                    .map_err(|e| err(&e))?;
                }
                w.flush().map_err(|e| err(&e))?;
            }
            Ok(0)
        }
        Command::Surface => {
            let path = config.output_dir.join("surface.csv");
            let report = experiments::run_surface(config, &path, cli.workers).map_err(|e| err(&e))?;
            println!(
                "wrote {} ({} points, best objective {} at theta {} t {})",
                report.csv.display(),
                report.result.surface.len(),
                fmt_num(report.result.best_objective),
                fmt_num(report.result.best_point.theta),
                fmt_num(report.result.best_point.t)
            );
            Ok(0)
        }
        Command::Sweep => {
            let opts = RunOptions {
                workers: cli.workers,
                timing: cli.timing,
            };
            let report = experiments::run_sweep(config, opts).map_err(|e| err(&e))?;
            for r in &report.rows {
                println!(
                    "p_req {:>5} dBm  ({}, {})  mean {}  se {}  n {}  infeasible_rate {:.3}",
                    r.p_req_dbm,
                    r.n_a,
                    r.n_b,
                    r.mean_secrecy_nats.map(fmt_num).unwrap_or_else(|| "-".into()),
                    r.std_err.map(fmt_num).unwrap_or_else(|| "-".into()),
                    r.n_trials,
                    r.infeasible_rate
                );
            }
            println!("wrote {}", report.sweep_csv.display());
            Ok(0)
        }
        Command::Selftest => {
            let checks = selftest::run(config.base.seed, 3).map_err(|e| err(&e))?;
            let mut ok = true;
            for c in &checks {
                ok &= c.passed;
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            Ok(if ok { 0 } else { 1 })
        }
    }
}
