//! Secrecy-rate maximisation at a fixed leakage split, the power-only
//! feasibility check, and rank-one recovery of the information covariances.
//!
//! Decision blocks are ordered `[W̄_ab, W̄_ba, V̄]` in the reduced coordinates
//! of [`crate::reduction`]. Leakage constraints are multiplied through by
//! `e^x - 1` so that `x = 0` degenerates to "leakage trace <= 0" instead of a
//! division by zero.

use thiserror::Error;

use crate::conic::{self, BlockSpec, ConicError, ConicProblem, DualCertificate, InfeasibleCertificate, SolverOptions};
use crate::linalg::{self, c, CMat};
use crate::model::{self, ChannelSet, ModelError, RateReport, SystemConfig};
use crate::reduction::{self, ReducedChannels, ReducedSpace, ReductionError};

/// Relative eigenvalue threshold for numerical rank.
pub const RANK_TOL: f64 = 1e-6;
/// Relative constraint violation accepted after rank-one recovery.
pub const RECOVERY_TOL: f64 = 1e-8;
/// Absolute objective drift accepted after rank-one recovery.
pub const OBJECTIVE_DRIFT_TOL: f64 = 1e-6;

pub const W_AB: usize = 0;
pub const W_BA: usize = 1;
pub const V: usize = 2;

#[derive(Debug, Error)]
pub enum SrmError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Reduction(#[from] ReductionError),
    #[error("conic solver: {0}")]
    Solver(ConicError),
    #[error("invalid search point (theta {theta}, t {t})")]
    InvalidPoint { theta: f64, t: f64 },
    #[error("rank-one recovery failed: {0}")]
    RecoveryFailed(String),
}

/// Leakage split: `t` bounds the total leakage rate, `theta * t` the leakage
/// of the signal towards node a and `(1 - theta) * t` the one towards node b.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchPoint {
    pub theta: f64,
    pub t: f64,
}

impl SearchPoint {
    pub fn new(theta: f64, t: f64) -> Result<Self, SrmError> {
        let p = Self { theta, t };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), SrmError> {
        if (0.0..=1.0).contains(&self.theta) && self.t >= 0.0 && self.t.is_finite() {
            Ok(())
        } else {
            Err(SrmError::InvalidPoint {
                theta: self.theta,
                t: self.t,
            })
        }
    }
}

/// Row indices of the SP-SRM constraints for `k` energy receivers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowLayout {
    pub k: usize,
}

impl RowLayout {
    /// Total leakage at ER `j` bounded by `t`.
    pub fn leak_total(&self, j: usize) -> usize {
        j
    }
    /// Leakage of the signal towards node a bounded by `theta t`.
    pub fn leak_a(&self, j: usize) -> usize {
        self.k + j
    }
    /// Leakage of the signal towards node b bounded by `(1 - theta) t`.
    pub fn leak_b(&self, j: usize) -> usize {
        2 * self.k + j
    }
    pub fn power_a(&self) -> usize {
        3 * self.k
    }
    pub fn power_b(&self) -> usize {
        3 * self.k + 1
    }
    pub fn energy(&self, j: usize) -> usize {
        3 * self.k + 2 + j
    }
    pub fn len(&self) -> usize {
        4 * self.k + 2
    }
    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Multipliers in the convention of the stationarity conditions: the
/// leakage multipliers are rescaled by the `e^x - 1` factors that the
/// multiplied-through rows absorbed.
#[derive(Debug, Clone, PartialEq)]
pub struct SrmDuals {
    pub lambda: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub varpi: Vec<f64>,
    /// Power budget of node a.
    pub mu: f64,
    /// Power budget of node b.
    pub nu: f64,
    pub sigma_ab: CMat,
    pub sigma_ba: CMat,
    /// PSD dual of the AN covariance.
    pub upsilon: CMat,
}

impl SrmDuals {
    pub fn from_certificate(cert: &DualCertificate, point: SearchPoint, k: usize) -> Self {
        let rows = RowLayout { k };
        let e_t = point.t.exp_m1();
        let e_a = (point.theta * point.t).exp_m1();
        let e_b = ((1.0 - point.theta) * point.t).exp_m1();
        Self {
            lambda: (0..k).map(|j| cert.mult[rows.leak_total(j)] * e_t).collect(),
            beta: (0..k).map(|j| cert.mult[rows.leak_a(j)] * e_a).collect(),
            gamma: (0..k).map(|j| cert.mult[rows.leak_b(j)] * e_b).collect(),
            varpi: (0..k).map(|j| cert.mult[rows.energy(j)]).collect(),
            mu: cert.mult[rows.power_a()],
            nu: cert.mult[rows.power_b()],
            sigma_ab: cert.psd_duals[W_AB].clone(),
            sigma_ba: cert.psd_duals[W_BA].clone(),
            upsilon: cert.psd_duals[V].clone(),
        }
    }
}

fn block_specs(reduced: &ReducedChannels) -> Vec<BlockSpec> {
    vec![
        BlockSpec {
            name: "w_ab".into(),
            dim: reduced.hb_ab.nrows(),
        },
        BlockSpec {
            name: "w_ba".into(),
            dim: reduced.hb_ba.nrows(),
        },
        BlockSpec {
            name: "v".into(),
            dim: reduced.bb_a.nrows(),
        },
    ]
}

fn scaled(m: &CMat, s: f64) -> CMat {
    m * c(s)
}

/// Convex SP-SRM program at a fixed point, in maximisation form.
pub fn build_sp_srm(reduced: &ReducedChannels, config: &SystemConfig, point: SearchPoint) -> ConicProblem {
    let k = reduced.k_er();
    let mut p = ConicProblem::new(block_specs(reduced));
    p.add_log_term(1.0, 1.0, &[(W_BA, scaled(&reduced.hb_ba, 1.0 / config.sigma2_a))]);
    p.add_log_term(1.0, 1.0, &[(W_AB, scaled(&reduced.hb_ab, 1.0 / config.sigma2_b))]);
    p.with_constant(-point.t);

    let e_t = point.t.exp_m1();
    let e_a = (point.theta * point.t).exp_m1();
    let e_b = ((1.0 - point.theta) * point.t).exp_m1();
    let s2 = config.sigma2_e;
    for j in 0..k {
        p.add_inequality(
            format!("leak_total[{j}]"),
            &[
                (W_AB, reduced.hb_a_ek[j].clone()),
                (W_BA, reduced.hb_b_ek[j].clone()),
                (V, scaled(&reduced.hb_ek[j], -e_t)),
            ],
            e_t * s2,
        );
    }
    for j in 0..k {
        p.add_inequality(
            format!("leak_a[{j}]"),
            &[
                (W_BA, reduced.hb_b_ek[j].clone()),
                (W_AB, scaled(&reduced.hb_a_ek[j], -e_a)),
                (V, scaled(&reduced.hb_ek[j], -e_a)),
            ],
            e_a * s2,
        );
    }
    for j in 0..k {
        p.add_inequality(
            format!("leak_b[{j}]"),
            &[
                (W_AB, reduced.hb_a_ek[j].clone()),
                (W_BA, scaled(&reduced.hb_b_ek[j], -e_b)),
                (V, scaled(&reduced.hb_ek[j], -e_b)),
            ],
            e_b * s2,
        );
    }
    let n_ab = reduced.hb_ab.nrows();
    let n_ba = reduced.hb_ba.nrows();
    p.add_inequality(
        "power_a",
        &[(W_AB, linalg::identity(n_ab)), (V, reduced.bb_a.clone())],
        config.p_max_a,
    );
    p.add_inequality(
        "power_b",
        &[(W_BA, linalg::identity(n_ba)), (V, reduced.bb_b.clone())],
        config.p_max_b,
    );
    let need = config.required_received_power();
    for j in 0..k {
        p.add_inequality(
            format!("energy[{j}]"),
            &[
                (W_AB, scaled(&reduced.hb_a_ek[j], -1.0)),
                (W_BA, scaled(&reduced.hb_b_ek[j], -1.0)),
                (V, scaled(&reduced.hb_ek[j], -1.0)),
            ],
            s2 - need,
        );
    }
    p
}

/// Power-only feasibility program: AN covariance alone meeting every energy
/// requirement under both power budgets.
pub fn build_feasibility(reduced: &ReducedChannels, config: &SystemConfig) -> ConicProblem {
    let mut p = ConicProblem::new(vec![BlockSpec {
        name: "v".into(),
        dim: reduced.bb_a.nrows(),
    }]);
    p.add_inequality("power_a", &[(0, reduced.bb_a.clone())], config.p_max_a);
    p.add_inequality("power_b", &[(0, reduced.bb_b.clone())], config.p_max_b);
    let need = config.required_received_power();
    for (j, h) in reduced.hb_ek.iter().enumerate() {
        p.add_inequality(format!("energy[{j}]"), &[(0, scaled(h, -1.0))], config.sigma2_e - need);
    }
    p
}

#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility {
    /// Strictly feasible AN covariance (the analytic centre of the feasible set).
    Feasible {
        v_bar: CMat,
    },
    Infeasible(InfeasibleCertificate),
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible { .. })
    }
}

fn infinite_requirement(config: &SystemConfig) -> Option<InfeasibleCertificate> {
    let need = config.required_received_power();
    (!need.is_finite()).then(|| InfeasibleCertificate {
        reason: "energy requirement is unreachable with zero harvesting efficiency".into(),
        min_violation_lower_bound: f64::INFINITY,
        constraint: None,
    })
}

/// Decides whether the AN covariance alone can satisfy every energy
/// requirement within the power budgets.
pub fn check_feasibility(reduced: &ReducedChannels, config: &SystemConfig) -> Result<Feasibility, SrmError> {
    if let Some(cert) = infinite_requirement(config) {
        return Ok(Feasibility::Infeasible(cert));
    }
    let problem = build_feasibility(reduced, config);
    match conic::phase1(&problem) {
        Ok(start) => {
            let centre = conic::analytic_center(&problem, &start).map_err(SrmError::Solver)?;
            Ok(Feasibility::Feasible {
                v_bar: centre.into_iter().next().expect("one block"),
            })
        }
        Err(ConicError::Infeasible(cert)) => Ok(Feasibility::Infeasible(cert)),
        Err(e) => Err(SrmError::Solver(e)),
    }
}

/// Per-constraint violations of the original problem; positive means violated.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    /// `Tr(B_a V) + Tr(W_ab) - p_max_a`.
    pub power_a: f64,
    pub power_b: f64,
    /// `p_req - e_k` per ER.
    pub energy: Vec<f64>,
    /// `Tr(H_a V)` and `Tr(H_b V)`.
    pub an_at_a: f64,
    pub an_at_b: f64,
    /// `Tr(H_aa W_ab)` and `Tr(H_bb W_ba)`.
    pub lsi_a: f64,
    pub lsi_b: f64,
    /// Smallest eigenvalue of `W_ab`, `W_ba`, `V`.
    pub min_eigenvalues: [f64; 3],
    pub ranks: [usize; 2],
}

impl ResidualReport {
    pub fn compute(channels: &ChannelSet, w_ab: &CMat, w_ba: &CMat, v: &CMat, config: &SystemConfig) -> Self {
        let n_a = channels.n_a();
        let v_a = v.view((0, 0), (n_a, n_a));
        let v_b = v.view((n_a, n_a), (channels.n_b(), channels.n_b()));
        let tr_va: f64 = (0..n_a).map(|i| v_a[(i, i)].re).sum();
        let tr_vb: f64 = (0..channels.n_b()).map(|i| v_b[(i, i)].re).sum();
        let energy = channels
            .er
            .iter()
            .enumerate()
            .map(|(k, er)| {
                let received = linalg::quad(&er.h_a, w_ab)
                    + linalg::quad(&er.h_b, w_ba)
                    + linalg::quad(&channels.h_e(k), v)
                    + config.sigma2_e;
                config.p_req - config.eta * received
            })
            .collect();
        Self {
            power_a: tr_va + linalg::trace_re(w_ab) - config.p_max_a,
            power_b: tr_vb + linalg::trace_re(w_ba) - config.p_max_b,
            energy,
            an_at_a: linalg::quad(&channels.h_a(), v),
            an_at_b: linalg::quad(&channels.h_b(), v),
            lsi_a: linalg::quad(&channels.h_aa, w_ab),
            lsi_b: linalg::quad(&channels.h_bb, w_ba),
            min_eigenvalues: [
                linalg::min_eigenvalue(w_ab),
                linalg::min_eigenvalue(w_ba),
                linalg::min_eigenvalue(v),
            ],
            ranks: [
                linalg::numerical_rank(w_ab, RANK_TOL),
                linalg::numerical_rank(w_ba, RANK_TOL),
            ],
        }
    }

    /// Whether the budgets and energy targets hold to relative `tol`.
    pub fn satisfied(&self, config: &SystemConfig, tol: f64) -> bool {
        self.power_a <= tol * config.p_max_a
            && self.power_b <= tol * config.p_max_b
            && self.energy.iter().all(|&r| r <= tol * config.p_req)
            && self.ranks.iter().all(|&r| r <= 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecoveryMethod {
    /// Both information blocks already had rank at most one.
    Unchanged,
    /// Null-space subtraction with AN compensation.
    NullSpace,
    /// Dominant-eigenvector truncation.
    Truncation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryInfo {
    pub method: RecoveryMethod,
    /// Ranks of the information blocks returned by the solver.
    pub input_ranks: [usize; 2],
    /// Numerical ranks of the dual matrices `C*_ab`, `C*_ba`.
    pub c_star_ranks: [usize; 2],
    /// Largest relative constraint violation after recovery.
    pub max_violation: f64,
    pub objective_drift: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamformingSolution {
    pub point: SearchPoint,
    pub w_ab_bar: CMat,
    pub w_ba_bar: CMat,
    pub v_bar: CMat,
    pub w_ab: CMat,
    pub w_ba: CMat,
    pub v: CMat,
    /// SP-SRM objective `ln(1 + ..) + ln(1 + ..) - t`, nats.
    pub objective: f64,
    pub certificate: DualCertificate,
    /// Numerical ranks of `W̄_ab`, `W̄_ba`.
    pub ranks: [usize; 2],
    pub residuals: ResidualReport,
    pub recovery: Option<RecoveryInfo>,
    pub newton_steps: usize,
}

impl BeamformingSolution {
    pub fn reduced_blocks(&self) -> Vec<CMat> {
        vec![self.w_ab_bar.clone(), self.w_ba_bar.clone(), self.v_bar.clone()]
    }

    pub fn duals(&self) -> SrmDuals {
        let k = (self.certificate.mult.len() - 2) / 4;
        SrmDuals::from_certificate(&self.certificate, self.point, k)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PointOutcome {
    Solved(Box<BeamformingSolution>),
    Infeasible(InfeasibleCertificate),
}

/// Everything derived once per channel draw.
#[derive(Debug, Clone)]
pub struct SrmContext {
    pub config: SystemConfig,
    pub channels: ChannelSet,
    pub space: ReducedSpace,
    pub reduced: ReducedChannels,
}

impl SrmContext {
    pub fn new(channels: ChannelSet, config: SystemConfig) -> Result<Self, SrmError> {
        config.validate()?;
        if channels.n_a() != config.n_a || channels.n_b() != config.n_b || channels.k_er() != config.k_er {
            return Err(SrmError::Model(ModelError::DimensionMismatch {
                what: "channel set",
                expected: config.n_a + config.n_b,
                got: channels.n_a() + channels.n_b(),
            }));
        }
        let (space, reduced) = reduction::build_reduced(&channels)?;
        Ok(Self {
            config,
            channels,
            space,
            reduced,
        })
    }

    pub fn check_feasibility(&self) -> Result<Feasibility, SrmError> {
        check_feasibility(&self.reduced, &self.config)
    }

    pub fn build(&self, point: SearchPoint) -> ConicProblem {
        build_sp_srm(&self.reduced, &self.config, point)
    }

    /// Solves SP-SRM at `point`. `interior_v` (usually the witness from
    /// [`Self::check_feasibility`]) seeds a strictly feasible start so that
    /// phase one can be skipped.
    pub fn solve_point(
        &self,
        point: SearchPoint,
        interior_v: Option<&CMat>,
        opts: &SolverOptions,
    ) -> Result<PointOutcome, SrmError> {
        point.validate()?;
        if let Some(cert) = infinite_requirement(&self.config) {
            return Ok(PointOutcome::Infeasible(cert));
        }
        let problem = self.build(point);
        let start = interior_v.and_then(|v| interior_start(&problem, v));
        let result = match start {
            Some(s) => conic::solve_from(&problem, &s, opts),
            None => conic::solve(&problem, opts),
        };
        let sol = match result {
            Ok(sol) => sol,
            Err(ConicError::Infeasible(cert)) => return Ok(PointOutcome::Infeasible(cert)),
            Err(e) => return Err(SrmError::Solver(e)),
        };
        let mut blocks = sol.blocks;
        let v_bar = blocks.pop().expect("three blocks");
        let w_ba_bar = blocks.pop().expect("three blocks");
        let w_ab_bar = blocks.pop().expect("three blocks");
        Ok(PointOutcome::Solved(Box::new(self.assemble(
            point,
            w_ab_bar,
            w_ba_bar,
            v_bar,
            sol.objective,
            sol.certificate,
            None,
            sol.newton_steps,
        ))))
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        &self,
        point: SearchPoint,
        w_ab_bar: CMat,
        w_ba_bar: CMat,
        v_bar: CMat,
        objective: f64,
        certificate: DualCertificate,
        recovery: Option<RecoveryInfo>,
        newton_steps: usize,
    ) -> BeamformingSolution {
        let (w_ab, w_ba, v) = reduction::lift(&w_ab_bar, &w_ba_bar, &v_bar, &self.space)
            .expect("reduced blocks come from this reduction");
        let (w_ab, w_ba, v) = (clamp_dust(&w_ab), clamp_dust(&w_ba), clamp_dust(&v));
        let residuals = ResidualReport::compute(&self.channels, &w_ab, &w_ba, &v, &self.config);
        BeamformingSolution {
            point,
            ranks: [
                linalg::numerical_rank(&w_ab_bar, RANK_TOL),
                linalg::numerical_rank(&w_ba_bar, RANK_TOL),
            ],
            w_ab_bar,
            w_ba_bar,
            v_bar,
            w_ab,
            w_ba,
            v,
            objective,
            certificate,
            residuals,
            recovery,
            newton_steps,
        }
    }

    /// Dual matrix `sum_i mult_i F_ib` of an information block.
    pub fn c_star(&self, solution: &BeamformingSolution, block: usize) -> CMat {
        let problem = self.build(solution.point);
        c_star(&problem, &solution.certificate, block)
    }

    /// Turns the information blocks of `solution` into rank-one matrices
    /// while keeping the objective and every SP-SRM constraint.
    pub fn recover_rank_one(&self, solution: &BeamformingSolution) -> Result<BeamformingSolution, SrmError> {
        let problem = self.build(solution.point);
        let blocks = solution.reduced_blocks();
        let objective0 = problem.objective(&blocks);
        let input_ranks = [
            linalg::numerical_rank(&blocks[W_AB], RANK_TOL),
            linalg::numerical_rank(&blocks[W_BA], RANK_TOL),
        ];
        let c_star_ranks = [
            linalg::numerical_rank(&c_star(&problem, &solution.certificate, W_AB), RANK_TOL),
            linalg::numerical_rank(&c_star(&problem, &solution.certificate, W_BA), RANK_TOL),
        ];
        let finish = |blocks: Vec<CMat>, method: RecoveryMethod, max_violation: f64| {
            let mut it = blocks.into_iter();
            let (w_ab_bar, w_ba_bar, v_bar) = (it.next().unwrap(), it.next().unwrap(), it.next().unwrap());
            let objective = problem.objective(&[w_ab_bar.clone(), w_ba_bar.clone(), v_bar.clone()]);
            let info = RecoveryInfo {
                method,
                input_ranks,
                c_star_ranks,
                max_violation,
                objective_drift: (objective - objective0).abs(),
            };
            self.assemble(
                solution.point,
                w_ab_bar,
                w_ba_bar,
                v_bar,
                objective,
                solution.certificate.clone(),
                Some(info),
                solution.newton_steps,
            )
        };
        if input_ranks.iter().all(|&r| r <= 1) {
            let viol = max_relative_violation(&problem, &blocks);
            return Ok(finish(blocks, RecoveryMethod::Unchanged, viol));
        }

        let gains = [&self.reduced.hb_ab, &self.reduced.hb_ba];
        let attempts: [(RecoveryMethod, fn(&CMat, &CMat) -> CMat, bool); 3] = [
            (RecoveryMethod::NullSpace, rank_one_along_channel, true),
            (RecoveryMethod::Truncation, truncate, true),
            (RecoveryMethod::Truncation, truncate, false),
        ];
        let mut last = String::new();
        for (method, shrink, compensate) in attempts {
            let mut new_blocks = blocks.clone();
            let mut deltas = [linalg::zeros(blocks[W_AB].nrows()), linalg::zeros(blocks[W_BA].nrows())];
            for b in [W_AB, W_BA] {
                if input_ranks[b] > 1 {
                    let reduced = shrink(&blocks[b], gains[b]);
                    deltas[b] = linalg::hermitize(&(&blocks[b] - &reduced));
                    new_blocks[b] = reduced;
                }
            }
            if compensate {
                new_blocks[V] = linalg::hermitize(&(&blocks[V] + an_compensation(&self.space, &deltas[0], &deltas[1])));
            }
            let viol = max_relative_violation(&problem, &new_blocks);
            let drift = (problem.objective(&new_blocks) - objective0).abs();
            let ranks_ok = [W_AB, W_BA]
                .iter()
                .all(|&b| linalg::numerical_rank(&new_blocks[b], RANK_TOL) <= 1);
            if viol <= RECOVERY_TOL && drift <= OBJECTIVE_DRIFT_TOL && ranks_ok {
                return Ok(finish(new_blocks, method, viol));
            }
            last = format!("{method:?}: violation {viol:e}, objective drift {drift:e}, ranks ok {ranks_ok}");
        }
        Err(SrmError::RecoveryFailed(format!(
            "input ranks {input_ranks:?}, dual ranks {c_star_ranks:?}; last attempt {last}"
        )))
    }

    /// Re-evaluates the lifted solution in the original coordinates.
    pub fn evaluate(&self, solution: &BeamformingSolution) -> Result<SolutionCheck, SrmError> {
        evaluate_solution(&self.channels, solution, &self.config)
    }
}

fn clamp_dust(a: &CMat) -> CMat {
    let h = linalg::hermitize(a);
    if linalg::min_eigenvalue(&h) < 0.0 {
        linalg::clamp_psd(&h)
    } else {
        h
    }
}

/// `sum_i mult_i F_ib` for block `b`.
pub fn c_star(problem: &ConicProblem, cert: &DualCertificate, block: usize) -> CMat {
    let n = problem.blocks[block].dim;
    let mut out = linalg::zeros(n);
    for (q, &m) in problem.inequalities.iter().zip(&cert.mult) {
        if let Some(f) = &q.coeffs[block] {
            out += f * c(m);
        }
    }
    linalg::hermitize(&out)
}

/// Largest `max(0, lhs - rhs) / max(|lhs|, |rhs|)` over the rows, and the
/// relative negative part of each block's spectrum.
pub fn max_relative_violation(problem: &ConicProblem, blocks: &[CMat]) -> f64 {
    let mut worst: f64 = 0.0;
    for (q, slack) in problem.inequalities.iter().zip(problem.slacks(blocks)) {
        let rhs = q.bound;
        let lhs = rhs - slack;
        let scale = lhs.abs().max(rhs.abs());
        if slack < 0.0 && scale > 0.0 {
            worst = worst.max(-slack / scale);
        }
    }
    for b in blocks {
        let (vals, _) = linalg::eigh(b);
        let top = vals.first().copied().unwrap_or(0.0).abs();
        let low = vals.last().copied().unwrap_or(0.0);
        if low < 0.0 && top > 0.0 {
            worst = worst.max(-low / top);
        }
    }
    worst
}

/// `W g g^H W / (g^H W g)` with `g` the channel direction of `gain`: removes
/// exactly the part of `W` that the intended receiver cannot see.
fn rank_one_along_channel(w: &CMat, gain: &CMat) -> CMat {
    let (vals, vecs) = linalg::eigh(gain);
    let g = vecs.column(0).into_owned();
    let wg = w * &g;
    let denom = (g.adjoint() * &wg)[(0, 0)].re;
    if vals.first().copied().unwrap_or(0.0) <= 0.0 || denom <= 1e-14 * linalg::trace_re(w) {
        return truncate(w, gain);
    }
    linalg::hermitize(&(&wg * wg.adjoint() * c(1.0 / denom)))
}

fn truncate(w: &CMat, _gain: &CMat) -> CMat {
    linalg::dominant_rank_one(w)
}

/// Reduced AN covariance that replaces the removed information power:
/// `Ȳ^H blkdiag(X̄_ab Δ_ab X̄_ab^H, X̄_ba Δ_ba X̄_ba^H) Ȳ`.
pub fn an_compensation(space: &ReducedSpace, delta_ab: &CMat, delta_ba: &CMat) -> CMat {
    let a = &space.x_ab * delta_ab * space.x_ab.adjoint();
    let b = &space.x_ba * delta_ba * space.x_ba.adjoint();
    space.y_bar.adjoint() * linalg::block_diag(&a, &b) * &space.y_bar
}

/// Finds a strictly feasible start: `W̄ = eps I` on top of the given AN covariance.
pub fn interior_start(problem: &ConicProblem, v_bar: &CMat) -> Option<Vec<CMat>> {
    let dims: Vec<usize> = problem.blocks.iter().map(|b| b.dim).collect();
    if v_bar.nrows() != dims[V] {
        return None;
    }
    let base = vec![linalg::zeros(dims[W_AB]), linalg::zeros(dims[W_BA]), v_bar.clone()];
    let unit = vec![
        linalg::identity(dims[W_AB]),
        linalg::identity(dims[W_BA]),
        linalg::zeros(dims[V]),
    ];
    let s0 = problem.slacks(&base);
    let s1 = problem.slacks(&unit);
    let mut eps = f64::INFINITY;
    for (q, (a, b)) in problem.inequalities.iter().zip(s0.iter().zip(&s1)) {
        // slack(eps) = a + eps * (b - bound)
        let slope = b - q.bound;
        if !(*a > 0.0) {
            let vacuous = q.coeffs.iter().flatten().all(|m| linalg::frobenius(m) == 0.0) && q.bound >= 0.0;
            if !vacuous {
                return None;
            }
            continue;
        }
        if slope < 0.0 {
            eps = eps.min(a / -slope);
        }
    }
    let eps = if eps.is_finite() { 0.5 * eps } else { 1.0 };
    if !(eps > 0.0) {
        return None;
    }
    let start = vec![
        linalg::identity(dims[W_AB]) * c(eps),
        linalg::identity(dims[W_BA]) * c(eps),
        v_bar.clone(),
    ];
    conic::is_strictly_feasible(problem, &start).then_some(start)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolutionCheck {
    pub rates: RateReport,
    pub residuals: ResidualReport,
    /// `|objective - (c_a + c_b - t)|`.
    pub objective_mismatch: f64,
    /// `c_sec_raw - objective`; non-negative when the leakage envelope holds.
    pub secrecy_margin: f64,
    /// `max_k c_ek - t`, `max_k c_a_ek - theta t`, `max_k c_b_ek - (1 - theta) t`.
    pub envelope_excess: [f64; 3],
}

/// Recomputes every rate and constraint of the original problem from the
/// lifted covariances.
pub fn evaluate_solution(
    channels: &ChannelSet,
    solution: &BeamformingSolution,
    config: &SystemConfig,
) -> Result<SolutionCheck, SrmError> {
    let rates = model::evaluate_rates(channels, &solution.w_ab, &solution.w_ba, &solution.v, config)?;
    let residuals = ResidualReport::compute(channels, &solution.w_ab, &solution.w_ba, &solution.v, config);
    let p = solution.point;
    let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(SolutionCheck {
        objective_mismatch: (solution.objective - (rates.c_a + rates.c_b - p.t)).abs(),
        secrecy_margin: rates.c_sec_raw - solution.objective,
        envelope_excess: [
            max(&rates.c_ek) - p.t,
            max(&rates.c_a_ek) - p.theta * p.t,
            max(&rates.c_b_ek) - (1.0 - p.theta) * p.t,
        ],
        rates,
        residuals,
    })
}
