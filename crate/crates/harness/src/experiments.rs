//! Monte-Carlo drivers: single-draw surface export and the secrecy-versus-
//! energy sweep.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use fdswipt_core::model::{dbm_to_watts, sample_channels, ChannelSet, SystemConfig};
use fdswipt_core::oracle::OracleError;
use fdswipt_core::search::{self, GridSpec, PointValue, SearchError, SearchOptions, SearchResult};
use fdswipt_core::srm::{SrmContext, SrmError};
use rayon::prelude::*;
use thiserror::Error;

use crate::config::ExperimentConfig;
use crate::plot;

/// Channel draws tried per trial before the trial is declared infeasible.
pub const RESAMPLE_CAP: u32 = 50;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("no feasible channel draw within {attempts} attempts")]
    ExperimentAborted { attempts: u32 },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Srm(#[from] SrmError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("cannot build worker pool: {0}")]
    Pool(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Random stream of attempt `attempt` of trial `trial`.
pub fn draw_stream(trial: u64, attempt: u32) -> u64 {
    (trial << 8) | u64::from(attempt)
}

/// Twelve significant digits.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.11e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

/// First feasible draw of `trial`, with the number of rejected attempts.
pub fn feasible_draw(config: &SystemConfig, trial: u64) -> Result<Option<(SrmContext, u32)>, ExperimentError> {
    for attempt in 0..RESAMPLE_CAP {
        let channels = sample_channels(config, draw_stream(trial, attempt));
        let ctx = SrmContext::new(channels, config.clone())?;
        if ctx.check_feasibility()?.is_feasible() {
            return Ok(Some((ctx, attempt)));
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial_index: u64,
    pub feasible: bool,
    /// Reported secrecy rate, nats; present iff `feasible`.
    pub secrecy_nats: Option<f64>,
    pub theta_star: Option<f64>,
    pub t_star: Option<f64>,
    pub solve_ms: Option<f64>,
    /// Numerical ranks of the recovered `W_ab`, `W_ba`.
    pub rank_flags: Option<[usize; 2]>,
    pub recovery: Option<String>,
    pub resample_count: u32,
    /// Why a feasible draw produced no design, if it did not.
    pub failure: Option<String>,
}

impl TrialRecord {
    fn rejected(trial_index: u64, resample_count: u32, failure: Option<String>) -> Self {
        Self {
            trial_index,
            feasible: false,
            secrecy_nats: None,
            theta_star: None,
            t_star: None,
            solve_ms: None,
            rank_flags: None,
            recovery: None,
            resample_count,
            failure,
        }
    }
}

/// One trial: resample until a feasible draw, then run the full search.
/// Draws on which the search finds no feasible grid point are resampled too.
pub fn run_trial(config: &SystemConfig, grid: &GridSpec, trial: u64, timing: bool) -> TrialRecord {
    let mut rejected = 0;
    for attempt in 0..RESAMPLE_CAP {
        let channels = sample_channels(config, draw_stream(trial, attempt));
        let ctx = match SrmContext::new(channels, config.clone()) {
            Ok(ctx) => ctx,
            Err(e) => return TrialRecord::rejected(trial, rejected, Some(e.to_string())),
        };
        let start = Instant::now();
        match search::optimize_with(&ctx, grid, &SearchOptions::default()) {
            Ok(result) => {
                let elapsed = start.elapsed().as_secs_f64() * 1e3;
                return TrialRecord {
                    trial_index: trial,
                    feasible: true,
                    secrecy_nats: Some(result.secrecy_rate),
                    theta_star: Some(result.best_point.theta),
                    t_star: Some(result.best_point.t),
                    solve_ms: timing.then_some(elapsed),
                    rank_flags: Some(result.best.ranks),
                    recovery: Some(format!("{:?}", result.recovery.method)),
                    resample_count: rejected,
                    failure: None,
                };
            }
            Err(SearchError::Infeasible(_)) | Err(SearchError::AllPointsInfeasible) => rejected += 1,
            Err(e) => return TrialRecord::rejected(trial, rejected, Some(e.to_string())),
        }
    }
    TrialRecord::rejected(trial, rejected, None)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub p_req_dbm: f64,
    pub n_a: usize,
    pub n_b: usize,
    pub mean_secrecy_nats: Option<f64>,
    pub std_err: Option<f64>,
    pub n_trials: usize,
    pub infeasible_rate: f64,
    pub mean_solve_ms: Option<f64>,
    pub trials: Vec<TrialRecord>,
}

impl SweepRow {
    fn aggregate(p_req_dbm: f64, n_a: usize, n_b: usize, trials: Vec<TrialRecord>) -> Self {
        let values: Vec<f64> = trials.iter().filter_map(|t| t.secrecy_nats).collect();
        let n = values.len();
        let mean = (n > 0).then(|| values.iter().sum::<f64>() / n as f64);
        let std_err = mean.filter(|_| n > 1).map(|m| {
            let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        });
        let resamples: u32 = trials.iter().map(|t| t.resample_count).sum();
        let denom = f64::from(resamples) + n as f64;
        let times: Vec<f64> = trials.iter().filter_map(|t| t.solve_ms).collect();
        Self {
            p_req_dbm,
            n_a,
            n_b,
            mean_secrecy_nats: mean,
            std_err,
            n_trials: n,
            infeasible_rate: if denom > 0.0 { f64::from(resamples) / denom } else { 0.0 },
            mean_solve_ms: (!times.is_empty()).then(|| times.iter().sum::<f64>() / times.len() as f64),
            trials,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub sweep_csv: PathBuf,
    pub trials_csv: PathBuf,
    pub plot: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses every available core.
    pub workers: Option<usize>,
    /// Record wall-clock solve times (makes the CSV non-reproducible).
    pub timing: bool,
}

fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool, ExperimentError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n.max(1));
    }
    builder.build().map_err(|e| ExperimentError::Pool(e.to_string()))
}

fn cell_config(base: &SystemConfig, n_a: usize, n_b: usize, p_req_dbm: f64) -> SystemConfig {
    SystemConfig {
        n_a,
        n_b,
        p_req: dbm_to_watts(p_req_dbm),
        ..base.clone()
    }
}

/// Runs every `(antenna config, p_req)` cell. Trial `i` of every cell uses
/// the same random streams, so cells at equal antenna counts see common
/// channel draws.
pub fn sweep(config: &ExperimentConfig, opts: RunOptions) -> Result<Vec<SweepRow>, ExperimentError> {
    let cells: Vec<(usize, usize, f64)> = config
        .antenna_configs
        .iter()
        .flat_map(|&(a, b)| config.p_req_sweep_dbm.iter().map(move |&p| (a, b, p)))
        .collect();
    let tasks: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|c| (0..config.trials as u64).map(move |t| (c, t)))
        .collect();
    let records: Vec<TrialRecord> = pool(opts.workers)?.install(|| {
        tasks
            .par_iter()
            .map(|&(c, t)| {
                let (a, b, p) = cells[c];
                run_trial(&cell_config(&config.base, a, b, p), &config.grid, t, opts.timing)
            })
            .collect()
    });
    let mut records = records.into_iter();
    Ok(cells
        .iter()
        .map(|&(a, b, p)| SweepRow::aggregate(p, a, b, records.by_ref().take(config.trials).collect()))
        .collect())
}

pub const SWEEP_HEADER: [&str; 8] = [
    "p_req_dbm",
    "n_a",
    "n_b",
    "mean_secrecy_nats",
    "std_err",
    "n_trials",
    "infeasible_rate",
    "mean_solve_ms",
];

pub const TRIALS_HEADER: [&str; 13] = [
    "p_req_dbm",
    "n_a",
    "n_b",
    "trial_index",
    "feasible",
    "secrecy_nats",
    "theta_star",
    "t_star",
    "solve_ms",
    "rank_w_ab",
    "rank_w_ba",
    "recovery",
    "resample_count",
];

pub fn write_sweep_csv(rows: &[SweepRow], path: &Path) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        w.write_record([
            fmt_num(r.p_req_dbm),
            r.n_a.to_string(),
            r.n_b.to_string(),
            fmt_opt(r.mean_secrecy_nats),
            fmt_opt(r.std_err),
            r.n_trials.to_string(),
            fmt_num(r.infeasible_rate),
            fmt_opt(r.mean_solve_ms),
        ])?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn write_trials_csv(rows: &[SweepRow], path: &Path) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(TRIALS_HEADER)?;
    for r in rows {
        for t in &r.trials {
            let rank = |i: usize| t.rank_flags.map(|f| f[i].to_string()).unwrap_or_default();
            let recovery = match (&t.recovery, &t.failure) {
                (Some(m), _) => m.clone(),
                (None, Some(f)) => format!("failed: {f}"),
                (None, None) => String::new(),
            };
            w.write_record([
                fmt_num(r.p_req_dbm),
                r.n_a.to_string(),
                r.n_b.to_string(),
                t.trial_index.to_string(),
                t.feasible.to_string(),
                fmt_opt(t.secrecy_nats),
                fmt_opt(t.theta_star),
                fmt_opt(t.t_star),
                fmt_opt(t.solve_ms),
                rank(0),
                rank(1),
                recovery,
                t.resample_count.to_string(),
            ])?;
        }
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// Sweep plus `sweep.csv`, `trials.csv` and (optionally) `sweep.svg` in
/// `config.output_dir`.
pub fn run_sweep(config: &ExperimentConfig, opts: RunOptions) -> Result<SweepReport, ExperimentError> {
    let rows = sweep(config, opts)?;
    let dir = &config.output_dir;
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let sweep_csv = dir.join("sweep.csv");
    let trials_csv = dir.join("trials.csv");
    write_sweep_csv(&rows, &sweep_csv)?;
    write_trials_csv(&rows, &trials_csv)?;
    let plot = if config.emit_plots {
        let path = dir.join("sweep.svg");
        std::fs::write(&path, plot::sweep_svg(&rows)).map_err(io_err(&path))?;
        Some(path)
    } else {
        None
    };
    Ok(SweepReport {
        rows,
        sweep_csv,
        trials_csv,
        plot,
    })
}

#[derive(Debug, Clone)]
pub struct SurfaceReport {
    pub result: SearchResult,
    pub channels: ChannelSet,
    pub resamples: u32,
    pub csv: PathBuf,
    pub plot: Option<PathBuf>,
}

/// Grid used for the surface export: the main grid only, every point
/// evaluated, so the column maximum is the selected objective.
pub fn surface_grid(grid: &GridSpec) -> GridSpec {
    GridSpec {
        refinement_rounds: 0,
        ..grid.clone()
    }
}

/// Full `(theta, t)` surface of the first feasible draw of trial 0.
pub fn surface(
    config: &SystemConfig,
    grid: &GridSpec,
    workers: Option<usize>,
) -> Result<(SearchResult, SrmContext, u32), ExperimentError> {
    let Some((ctx, resamples)) = feasible_draw(config, 0)? else {
        return Err(ExperimentError::ExperimentAborted { attempts: RESAMPLE_CAP });
    };
    let opts = SearchOptions {
        prune: false,
        ..SearchOptions::default()
    };
    let result = pool(workers)?.install(|| search::optimize_with(&ctx, &surface_grid(grid), &opts))?;
    Ok((result, ctx, resamples))
}

pub fn write_surface_csv(result: &SearchResult, seed: u64, resamples: u32, path: &Path) -> Result<(), ExperimentError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    writeln!(
        out,
        "# seed={seed} resamples={resamples} t_max={} best_theta={} best_t={} best_objective={} secrecy_nats={}",
        fmt_num(result.t_max),
        fmt_num(result.best_point.theta),
        fmt_num(result.best_point.t),
        fmt_num(result.best_objective),
        fmt_num(result.secrecy_rate),
    )
    .map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["theta", "t", "objective"])?;
    for p in &result.surface {
        let objective = match p.value {
            PointValue::Objective(v) => fmt_num(v),
            PointValue::Infeasible | PointValue::Pruned => String::new(),
        };
        w.write_record([fmt_num(p.theta), fmt_num(p.t), objective])?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// Surface of one draw written to `out_path` (plus an SVG sibling when asked).
pub fn run_surface(
    config: &ExperimentConfig,
    out_path: &Path,
    workers: Option<usize>,
) -> Result<SurfaceReport, ExperimentError> {
    let (result, ctx, resamples) = surface(&config.base, &config.grid, workers)?;
    if let Some(dir) = out_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    write_surface_csv(&result, config.base.seed, resamples, out_path)?;
    let plot = if config.emit_plots {
        let path = out_path.with_extension("svg");
        std::fs::write(&path, plot::surface_svg(&result, config.grid.theta_points)).map_err(io_err(&path))?;
        Some(path)
    } else {
        None
    };
    Ok(SurfaceReport {
        result,
        channels: ctx.channels,
        resamples,
        csv: out_path.to_path_buf(),
        plot,
    })
}
