//! Two-dimensional grid search over the leakage split `(theta, t)`.
//!
//! Every grid point is an SP-SRM solve. With pruning enabled, each `t`-row is
//! first bounded by the relaxation that keeps only the total-leakage rows
//! (independent of `theta`); rows whose bound cannot beat the incumbent are
//! skipped. The bound is valid for every point of the row, so pruning never
//! changes the selected point.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conic::{self, ConicError, InfeasibleCertificate, SolverOptions};
use crate::linalg::{self, CMat};
use crate::model::{ChannelSet, SystemConfig};
use crate::srm::{BeamformingSolution, Feasibility, PointOutcome, RecoveryInfo, SearchPoint, SrmContext, SrmError};

/// Safety margin on top of the duality gap when discarding a row.
pub const PRUNE_MARGIN: f64 = 1e-5;
/// Smallest positive `t` on the grid, relative to `t_max`.
pub const T_MIN_RATIO: f64 = 1e-4;
/// Points per axis in each refinement round.
pub const REFINEMENT_POINTS: usize = 11;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error(transparent)]
    Srm(#[from] SrmError),
    #[error("problem is infeasible: {0}")]
    Infeasible(InfeasibleCertificate),
    #[error("no grid point is feasible although the problem is")]
    AllPointsInfeasible,
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    /// Uniform points on `[0, 1]`.
    pub theta_points: usize,
    /// Log-spaced points on `[1e-4 t_max, t_max]`; `t = 0` is added on top.
    pub t_points: usize,
    /// Upper end of the `t` axis; derived from the channels when absent.
    pub t_max: Option<f64>,
    pub refinement_rounds: usize,
    /// Window size of each refinement round relative to the previous one.
    pub refinement_shrink: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            theta_points: 41,
            t_points: 60,
            t_max: None,
            refinement_rounds: 1,
            refinement_shrink: 0.2,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |m: &str| Err(SearchError::InvalidGrid(m.into()));
        if self.theta_points < 2 || self.t_points < 2 {
            return bad("theta_points and t_points must be at least 2");
        }
        if let Some(t) = self.t_max {
            if !(t > 0.0 && t.is_finite()) {
                return bad("t_max must be positive and finite");
            }
        }
        if !(self.refinement_shrink > 0.0 && self.refinement_shrink < 1.0) {
            return bad("refinement_shrink must lie in (0, 1)");
        }
        Ok(())
    }

    pub fn theta_values(&self) -> Vec<f64> {
        linspace(0.0, 1.0, self.theta_points)
    }

    /// `0` followed by `t_points` log-spaced values ending at `t_max`.
    pub fn t_values(&self, t_max: f64) -> Vec<f64> {
        let mut out = vec![0.0];
        out.extend(logspace(T_MIN_RATIO * t_max, t_max, self.t_points));
        out
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| {
            if i + 1 == n {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}

fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    linspace(a, b, n)
        .into_iter()
        .enumerate()
        .map(|(i, x)| {
            if i + 1 == n {
                hi
            } else if i == 0 {
                lo
            } else {
                x.exp()
            }
        })
        .collect()
}

/// Upper bound on any ER's total leakage rate:
/// `max_k ln(1 + (P_a |h_a_ek|^2 + P_b |h_b_ek|^2) / sigma_e^2)`.
pub fn t_upper_bound(channels: &ChannelSet, config: &SystemConfig) -> f64 {
    channels
        .er
        .iter()
        .map(|er| {
            let gain =
                config.p_max_a * linalg::vec_norm(&er.h_a).powi(2) + config.p_max_b * linalg::vec_norm(&er.h_b).powi(2);
            (gain / config.sigma2_e).ln_1p()
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PointValue {
    Objective(f64),
    Infeasible,
    /// Skipped because a relaxation bound ruled it out.
    Pruned,
}

impl PointValue {
    pub fn objective(&self) -> Option<f64> {
        match self {
            PointValue::Objective(v) => Some(*v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub theta: f64,
    pub t: f64,
    pub value: PointValue,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    /// Incumbent after rank-one recovery.
    pub best: BeamformingSolution,
    pub best_point: SearchPoint,
    /// SP-SRM objective at `best_point` as evaluated on the grid.
    pub best_objective: f64,
    /// Reported secrecy rate of `best` in the original coordinates, nats.
    pub secrecy_rate: f64,
    /// Main grid, `theta` fastest.
    pub surface: Vec<SurfacePoint>,
    pub refined: Vec<SurfacePoint>,
    /// Infeasible share of the evaluated main-grid points.
    pub infeasible_fraction: f64,
    pub t_max: f64,
    /// Number of SP-SRM and relaxation solves performed.
    pub solves: usize,
    pub recovery: RecoveryInfo,
}

/// Largest objective difference between the selected point and the main-grid
/// points around it: the nearest grid node in `theta` and `t` and its
/// neighbours on each axis. Neighbours that were pruned are solved on
/// demand; infeasible ones are ignored.
pub fn adjacent_spread(
    ctx: &SrmContext,
    result: &SearchResult,
    grid: &GridSpec,
    solver: &SolverOptions,
) -> Result<f64, SearchError> {
    let around = |axis: &[f64], x: f64, dist: &dyn Fn(f64, f64) -> f64| -> Vec<f64> {
        let nearest = (0..axis.len())
            .min_by(|&i, &j| dist(axis[i], x).total_cmp(&dist(axis[j], x)))
            .unwrap_or(0);
        (nearest.saturating_sub(1)..(nearest + 2).min(axis.len()))
            .map(|i| axis[i])
            .collect()
    };
    let best = result.best_point;
    let thetas = around(&grid.theta_values(), best.theta, &|a, b| (a - b).abs());
    let log_dist = |a: f64, b: f64| {
        if a > 0.0 && b > 0.0 {
            (a.ln() - b.ln()).abs()
        } else {
            (a - b).abs()
        }
    };
    let ts = around(&grid.t_values(result.t_max), best.t, &log_dist);
    let mut spread: f64 = 0.0;
    for &t in &ts {
        for &theta in &thetas {
            if theta == best.theta && t == best.t {
                continue;
            }
            let known = result
                .surface
                .iter()
                .find(|p| p.theta == theta && p.t == t)
                .and_then(|p| p.value.objective());
            let value = match known {
                Some(v) => Some(v),
                None => match ctx.solve_point(SearchPoint { theta, t }, None, solver)? {
                    PointOutcome::Solved(sol) => Some(sol.objective),
                    PointOutcome::Infeasible(_) => None,
                },
            };
            if let Some(v) = value {
                spread = spread.max((result.best_objective - v).abs());
            }
        }
    }
    Ok(spread)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOptions {
    pub prune: bool,
    pub solver: SolverOptions,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            prune: true,
            solver: SolverOptions::default(),
        }
    }
}

struct Incumbent {
    value: f64,
    point: SearchPoint,
    solution: Box<BeamformingSolution>,
}

impl Incumbent {
    /// Larger objective wins; ties go to smaller `t`, then smaller `theta`.
    fn beats(value: f64, point: SearchPoint, other: &Option<Incumbent>) -> bool {
        match other {
            None => true,
            Some(inc) => {
                value > inc.value
                    || (value == inc.value
                        && (point.t < inc.point.t || (point.t == inc.point.t && point.theta < inc.point.theta)))
            }
        }
    }
}

/// Relaxation upper bound on every SP-SRM objective in the row `t`, or
/// `None` when even the relaxation is infeasible (hence the whole row).
fn row_bound(ctx: &SrmContext, t: f64, hint: &CMat, opts: &SolverOptions) -> Result<Option<f64>, SrmError> {
    let point = SearchPoint { theta: 0.5, t };
    let mut problem = ctx.build(point);
    let k = ctx.reduced.k_er();
    // Keep the total-leakage rows and drop the split rows.
    problem.inequalities.drain(k..3 * k);
    let result = match crate::srm::interior_start(&problem, hint) {
        Some(start) => conic::solve_from(&problem, &start, opts),
        None => conic::solve(&problem, opts),
    };
    match result {
        Ok(sol) => Ok(Some(sol.objective + sol.certificate.gap)),
        Err(ConicError::Infeasible(_)) => Ok(None),
        Err(e) => Err(SrmError::Solver(e)),
    }
}

struct Evaluator<'a> {
    ctx: &'a SrmContext,
    hint: &'a CMat,
    opts: &'a SearchOptions,
    incumbent: Option<Incumbent>,
    solves: usize,
}

impl Evaluator<'_> {
    /// Evaluates a set of points sharing the same `t`, in parallel, and folds
    /// them into the incumbent in grid order.
    fn row(&mut self, t: f64, thetas: &[f64], bound: Option<Option<f64>>) -> Result<Vec<SurfacePoint>, SearchError> {
        match bound {
            Some(None) => {
                return Ok(thetas
                    .iter()
                    .map(|&theta| SurfacePoint {
                        theta,
                        t,
                        value: PointValue::Infeasible,
                    })
                    .collect())
            }
            Some(Some(ub)) => {
                if let Some(inc) = &self.incumbent {
                    if ub + PRUNE_MARGIN < inc.value {
                        return Ok(thetas
                            .iter()
                            .map(|&theta| SurfacePoint {
                                theta,
                                t,
                                value: PointValue::Pruned,
                            })
                            .collect());
                    }
                }
            }
            None => {}
        }
        let outcomes: Vec<Result<PointOutcome, SrmError>> = thetas
            .par_iter()
            .map(|&theta| {
                self.ctx
                    .solve_point(SearchPoint { theta, t }, Some(self.hint), &self.opts.solver)
            })
            .collect();
        self.solves += thetas.len();
        let mut out = Vec::with_capacity(thetas.len());
        for (&theta, outcome) in thetas.iter().zip(outcomes) {
            let point = SearchPoint { theta, t };
            let value = match outcome? {
                PointOutcome::Infeasible(_) => PointValue::Infeasible,
                PointOutcome::Solved(sol) => {
                    let v = sol.objective;
                    if Incumbent::beats(v, point, &self.incumbent) {
                        self.incumbent = Some(Incumbent {
                            value: v,
                            point,
                            solution: sol,
                        });
                    }
                    PointValue::Objective(v)
                }
            };
            out.push(SurfacePoint { theta, t, value });
        }
        Ok(out)
    }

    /// Row bounds for a list of `t` values (all `None` when pruning is off).
    fn bounds(&mut self, ts: &[f64]) -> Result<Vec<Option<Option<f64>>>, SearchError> {
        if !self.opts.prune {
            return Ok(vec![None; ts.len()]);
        }
        let (ctx, hint, solver) = (self.ctx, self.hint, &self.opts.solver);
        let bounds: Vec<Result<Option<f64>, SrmError>> =
            ts.par_iter().map(|&t| row_bound(ctx, t, hint, solver)).collect();
        self.solves += ts.len();
        bounds
            .into_iter()
            .map(|b| b.map(Some).map_err(SearchError::from))
            .collect()
    }

    /// Evaluates the grid `thetas x ts`, visiting rows with the best bound first.
    fn grid(&mut self, thetas: &[f64], ts: &[f64]) -> Result<Vec<SurfacePoint>, SearchError> {
        let bounds = self.bounds(ts)?;
        let mut order: Vec<usize> = (0..ts.len()).collect();
        let key = |b: &Option<Option<f64>>| match b {
            Some(Some(v)) => *v,
            Some(None) => f64::NEG_INFINITY,
            None => 0.0,
        };
        order.sort_by(|&i, &j| key(&bounds[j]).total_cmp(&key(&bounds[i])).then(i.cmp(&j)));
        let mut rows: Vec<Option<Vec<SurfacePoint>>> = vec![None; ts.len()];
        for i in order {
            rows[i] = Some(self.row(ts[i], thetas, bounds[i])?);
        }
        Ok(rows.into_iter().flatten().flatten().collect())
    }
}

/// Full search on one channel draw: feasibility check, grid, refinement and
/// rank-one recovery of the incumbent.
pub fn optimize(channels: &ChannelSet, config: &SystemConfig, grid: &GridSpec) -> Result<SearchResult, SearchError> {
    let ctx = SrmContext::new(channels.clone(), config.clone())?;
    optimize_with(&ctx, grid, &SearchOptions::default())
}

pub fn optimize_with(ctx: &SrmContext, grid: &GridSpec, opts: &SearchOptions) -> Result<SearchResult, SearchError> {
    grid.validate()?;
    let hint = match ctx.check_feasibility()? {
        Feasibility::Feasible { v_bar } => v_bar,
        Feasibility::Infeasible(cert) => return Err(SearchError::Infeasible(cert)),
    };
    let t_max = grid.t_max.unwrap_or_else(|| {
        let b = t_upper_bound(&ctx.channels, &ctx.config);
        if b > 0.0 {
            b
        } else {
            1.0
        }
    });
    let thetas = grid.theta_values();
    let ts = grid.t_values(t_max);
    let mut ev = Evaluator {
        ctx,
        hint: &hint,
        opts,
        incumbent: None,
        solves: 0,
    };
    let surface = ev.grid(&thetas, &ts)?;
    if ev.incumbent.is_none() {
        return Err(SearchError::AllPointsInfeasible);
    }

    let mut refined = Vec::new();
    let log_extent = (1.0 / T_MIN_RATIO).ln();
    let (mut theta_width, mut log_width) = (1.0, log_extent);
    let t_second = ts[1];
    for _ in 0..grid.refinement_rounds {
        theta_width *= grid.refinement_shrink;
        log_width *= grid.refinement_shrink;
        let centre = ev.incumbent.as_ref().expect("incumbent exists").point;
        let lo = (centre.theta - theta_width / 2.0).max(0.0);
        let hi = (centre.theta + theta_width / 2.0).min(1.0);
        let r_thetas = linspace(lo, hi, REFINEMENT_POINTS);
        let r_ts = if centre.t == 0.0 {
            linspace(0.0, t_second, REFINEMENT_POINTS)
        } else {
            let lo = (centre.t.ln() - log_width / 2.0).exp().max(T_MIN_RATIO * t_max);
            let hi = (centre.t.ln() + log_width / 2.0).exp().min(t_max);
            logspace(lo, hi, REFINEMENT_POINTS)
        };
        refined.extend(ev.grid(&r_thetas, &r_ts)?);
    }

    let inc = ev.incumbent.take().expect("incumbent exists");
    let best = ctx.recover_rank_one(&inc.solution)?;
    let check = ctx.evaluate(&best)?;
    let evaluated: Vec<&SurfacePoint> = surface.iter().filter(|p| p.value != PointValue::Pruned).collect();
    let infeasible = evaluated.iter().filter(|p| p.value == PointValue::Infeasible).count();
    Ok(SearchResult {
        recovery: best.recovery.clone().expect("recovery info is set"),
        best,
        best_point: inc.point,
        best_objective: inc.value,
        secrecy_rate: check.rates.c_sec_reported,
        infeasible_fraction: infeasible as f64 / evaluated.len().max(1) as f64,
        surface,
        refined,
        t_max,
        solves: ev.solves,
    })
}
