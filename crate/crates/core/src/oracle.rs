//! Brute-force reference solvers for two-antenna nodes.
//!
//! With `n_a = n_b = 2` the reduced information blocks are scalars and the
//! reduced AN covariance is 2x2. The AN covariance is enumerated on a grid
//! `U diag(d1, d2) U^H` (two angles for `U`, a power grid for `d`); for each
//! candidate the remaining two scalar powers are optimised exactly over the
//! polygon cut out by the linear constraints. Results are lower bounds on the
//! true optimum, up to the resolution of the AN grid.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, c, CMat, C64};
use crate::model::{self, ChannelSet, SystemConfig};
use crate::reduction::{self, ReducedChannels, ReductionError};
use crate::srm::SearchPoint;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error(
        "oracle supports two antennas per node and at most {max_k} energy receivers (got n_a {n_a}, n_b {n_b}, K {k})"
    )]
    DimensionTooLarge {
        n_a: usize,
        n_b: usize,
        k: usize,
        max_k: usize,
    },
    #[error("invalid oracle grid: {0}")]
    InvalidGrid(String),
    #[error(transparent)]
    Reduction(#[from] ReductionError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleGrid {
    /// Grid points per eigenvalue of the AN covariance.
    pub power_steps: usize,
    /// Grid points per angle of the AN eigenbasis.
    pub angle_steps: usize,
    /// Grid points per angle for the rank-one directions of the feasibility check.
    pub feasibility_angle_steps: usize,
}

impl Default for OracleGrid {
    fn default() -> Self {
        Self {
            power_steps: 40,
            angle_steps: 24,
            feasibility_angle_steps: 720,
        }
    }
}

impl OracleGrid {
    pub fn validate(&self) -> Result<(), OracleError> {
        if self.power_steps < 2 || self.angle_steps < 2 || self.feasibility_angle_steps < 2 {
            return Err(OracleError::InvalidGrid("every step count must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    /// SP-SRM objective (rates minus `t`), nats.
    pub objective: f64,
    pub w_ab_bar: CMat,
    pub w_ba_bar: CMat,
    pub v_bar: CMat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSecrecy {
    /// Secrecy rate recomputed from the lifted design, before clamping, nats.
    pub secrecy: f64,
    pub w_ab: CMat,
    pub w_ba: CMat,
    pub v: CMat,
}

fn check_dims(reduced: &ReducedChannels, max_k: usize) -> Result<(), OracleError> {
    let (da, db) = (reduced.hb_ab.nrows(), reduced.hb_ba.nrows());
    let k = reduced.k_er();
    if da != 1 || db != 1 || k > max_k || k == 0 {
        return Err(OracleError::DimensionTooLarge {
            n_a: da + 1,
            n_b: db + 1,
            k,
            max_k,
        });
    }
    Ok(())
}

/// Unit vector `(cos phi, e^{i psi} sin phi)` and its orthogonal complement.
fn basis(phi: f64, psi: f64) -> (CMat, CMat) {
    let e = C64::from_polar(1.0, psi);
    let u1 = CMat::from_column_slice(2, 1, &[c(phi.cos()), e * phi.sin()]);
    let u2 = CMat::from_column_slice(2, 1, &[-e.conj() * phi.sin(), c(phi.cos())]);
    (&u1 * u1.adjoint(), &u2 * u2.adjoint())
}

fn angles(steps: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(steps * steps);
    for i in 0..steps {
        let phi = 0.5 * PI * i as f64 / (steps - 1) as f64;
        for j in 0..steps {
            out.push((phi, 2.0 * PI * j as f64 / steps as f64));
        }
    }
    out
}

/// `p x + q y <= r`.
#[derive(Debug, Clone, Copy)]
struct HalfPlane {
    p: f64,
    q: f64,
    r: f64,
}

impl HalfPlane {
    fn holds(&self, x: f64, y: f64) -> bool {
        let lhs = self.p * x + self.q * y;
        let scale = (self.p * x).abs() + (self.q * y).abs() + self.r.abs();
        lhs - self.r <= 1e-12 * scale.max(1e-300)
    }
}

/// Maximises `ln(1 + beta x) + ln(1 + alpha y)` over a polygon by checking
/// every vertex and the stationary point along every edge.
fn maximise_on_polygon(planes: &[HalfPlane], beta: f64, alpha: f64) -> Option<(f64, f64, f64)> {
    let f = |x: f64, y: f64| (beta * x).ln_1p() + (alpha * y).ln_1p();
    let feasible = |x: f64, y: f64| x.is_finite() && y.is_finite() && planes.iter().all(|h| h.holds(x, y));
    let mut best: Option<(f64, f64, f64)> = None;
    let mut consider = |x: f64, y: f64| {
        if feasible(x, y) {
            let (x, y) = (x.max(0.0), y.max(0.0));
            let v = f(x, y);
            if best.is_none_or(|b| v > b.0) {
                best = Some((v, x, y));
            }
        }
    };
    for (i, a) in planes.iter().enumerate() {
        for b in &planes[i + 1..] {
            let det = a.p * b.q - a.q * b.p;
            if det.abs() > 1e-300 {
                let x = (a.r * b.q - a.q * b.r) / det;
                let y = (a.p * b.r - a.r * b.p) / det;
                consider(x, y);
            }
        }
        // Stationary point of the objective along the boundary line of `a`.
        let norm2 = a.p * a.p + a.q * a.q;
        if norm2 == 0.0 {
            continue;
        }
        let (x0, y0) = (a.p * a.r / norm2, a.q * a.r / norm2);
        let (dx, dy) = (a.q, -a.p);
        let coef = 2.0 * alpha * beta * dx * dy;
        if coef != 0.0 {
            let s = -(beta * dx * (1.0 + alpha * y0) + alpha * dy * (1.0 + beta * x0)) / coef;
            consider(x0 + s * dx, y0 + s * dy);
        }
    }
    best
}

/// Exhaustive SP-SRM solve at a fixed point for two-antenna nodes and up
/// to two energy receivers. Returns `None` when no grid design is feasible.
pub fn brute_force(
    reduced: &ReducedChannels,
    config: &SystemConfig,
    point: SearchPoint,
    grid: &OracleGrid,
) -> Result<Option<OracleSolution>, OracleError> {
    grid.validate()?;
    check_dims(reduced, 2)?;
    let k = reduced.k_er();
    let beta = reduced.hb_ab[(0, 0)].re / config.sigma2_b;
    let alpha = reduced.hb_ba[(0, 0)].re / config.sigma2_a;
    let a: Vec<f64> = reduced.hb_a_ek.iter().map(|m| m[(0, 0)].re).collect();
    let b: Vec<f64> = reduced.hb_b_ek.iter().map(|m| m[(0, 0)].re).collect();
    let e_t = point.t.exp_m1();
    let e_a = (point.theta * point.t).exp_m1();
    let e_b = ((1.0 - point.theta) * point.t).exp_m1();
    let need = config.required_received_power();
    let s2 = config.sigma2_e;
    let d_max = config.p_max_a + config.p_max_b;
    let powers = (0..grid.power_steps)
        .map(|i| d_max * i as f64 / (grid.power_steps - 1) as f64)
        .collect::<Vec<_>>();

    let mut best: Option<(f64, f64, f64, CMat)> = None;
    let mut planes = Vec::with_capacity(4 * k + 4);
    for (phi, psi) in angles(grid.angle_steps) {
        let (p1, p2) = basis(phi, psi);
        // Share of each direction's power spent at node a.
        let (a1, a2) = (
            linalg::trace_product(&reduced.bb_a, &p1),
            linalg::trace_product(&reduced.bb_a, &p2),
        );
        let c1: Vec<f64> = reduced.hb_ek.iter().map(|h| linalg::trace_product(h, &p1)).collect();
        let c2: Vec<f64> = reduced.hb_ek.iter().map(|h| linalg::trace_product(h, &p2)).collect();
        for &d1 in &powers {
            for &d2 in &powers {
                let pa = d1 * a1 + d2 * a2;
                let pb = d1 + d2 - pa;
                if pa > config.p_max_a || pb > config.p_max_b {
                    continue;
                }
                planes.clear();
                let mut hopeless = false;
                for j in 0..k {
                    let floor = d1 * c1[j] + d2 * c2[j] + s2;
                    planes.push(HalfPlane {
                        p: a[j],
                        q: b[j],
                        r: e_t * floor,
                    });
                    planes.push(HalfPlane {
                        p: -e_a * a[j],
                        q: b[j],
                        r: e_a * floor,
                    });
                    planes.push(HalfPlane {
                        p: a[j],
                        q: -e_b * b[j],
                        r: e_b * floor,
                    });
                    let energy = HalfPlane {
                        p: -a[j],
                        q: -b[j],
                        r: floor - need,
                    };
                    if energy.p == 0.0 && energy.q == 0.0 && energy.r < 0.0 {
                        hopeless = true;
                    }
                    planes.push(energy);
                }
                if hopeless {
                    continue;
                }
                planes.push(HalfPlane {
                    p: 1.0,
                    q: 0.0,
                    r: config.p_max_a - pa,
                });
                planes.push(HalfPlane {
                    p: 0.0,
                    q: 1.0,
                    r: config.p_max_b - pb,
                });
                planes.push(HalfPlane {
                    p: -1.0,
                    q: 0.0,
                    r: 0.0,
                });
                planes.push(HalfPlane {
                    p: 0.0,
                    q: -1.0,
                    r: 0.0,
                });
                if let Some((v, x, y)) = maximise_on_polygon(&planes, beta, alpha) {
                    if best.as_ref().is_none_or(|b| v > b.0) {
                        let vbar = &p1 * c(d1) + &p2 * c(d2);
                        best = Some((v, x, y, vbar));
                    }
                }
            }
        }
    }
    Ok(best.map(|(v, x, y, vbar)| OracleSolution {
        objective: v - point.t,
        w_ab_bar: CMat::from_element(1, 1, c(x)),
        w_ba_bar: CMat::from_element(1, 1, c(y)),
        v_bar: vbar,
    }))
}

/// Largest value of `ln((1 + beta x)(1 + alpha y) c / (c + a x + b y))` over
/// `0 <= x <= xm`, `0 <= y <= ym`, `a x + b y >= e`.
///
/// The objective is monotone in each coordinate when the other is fixed and
/// concave along the energy line, so the optimum is a vertex of the region or
/// the stationary point on the energy edge.
fn best_secrecy_box(
    beta: f64,
    alpha: f64,
    a: f64,
    b: f64,
    cc: f64,
    xm: f64,
    ym: f64,
    e: f64,
) -> Option<(f64, f64, f64)> {
    let f = |x: f64, y: f64| (beta * x).ln_1p() + (alpha * y).ln_1p() - (a * x + b * y).ln_1p_ratio(cc);
    let ok = |x: f64, y: f64| {
        x >= -1e-15 * xm.max(1e-300)
            && y >= -1e-15 * ym.max(1e-300)
            && x <= xm * (1.0 + 1e-15)
            && y <= ym * (1.0 + 1e-15)
            && a * x + b * y - e >= -1e-12 * (e.abs() + (a * x).abs() + (b * y).abs()).max(1e-300)
    };
    let mut cand: Vec<(f64, f64)> = vec![(0.0, 0.0), (xm, 0.0), (0.0, ym), (xm, ym)];
    if a > 0.0 {
        cand.push((e / a, 0.0));
        cand.push(((e - b * ym) / a, ym));
    }
    if b > 0.0 {
        cand.push((0.0, e / b));
        cand.push((xm, (e - a * xm) / b));
    }
    if a > 0.0 && b > 0.0 && alpha > 0.0 && beta > 0.0 {
        // Along a x + b y = e: beta/(1+beta x) = (a/b) alpha/(1+alpha y).
        // With y = (e - a x)/b this is linear in x.
        let x = (beta * b + alpha * beta * e - alpha * a) / (2.0 * alpha * beta * a);
        cand.push((x, (e - a * x) / b));
    }
    let mut best: Option<(f64, f64, f64)> = None;
    for (x, y) in cand {
        if x.is_finite() && y.is_finite() && ok(x, y) {
            let (x, y) = (x.clamp(0.0, xm), y.clamp(0.0, ym));
            let v = f(x, y);
            if best.is_none_or(|b| v > b.0) {
                best = Some((v, x, y));
            }
        }
    }
    best
}

trait LnRatio {
    fn ln_1p_ratio(self, c: f64) -> f64;
}

impl LnRatio for f64 {
    /// `ln(1 + self / c)`.
    fn ln_1p_ratio(self, c: f64) -> f64 {
        (self / c).ln_1p()
    }
}

/// Exhaustive secrecy-rate maximisation for two-antenna nodes and a single
/// energy receiver, in the continuous limit of the `(theta, t)` grid: for a
/// fixed design the best split gives exactly the secrecy rate, so the
/// maximum over designs of the secrecy rate bounds every grid value.
pub fn brute_force_search(
    channels: &ChannelSet,
    config: &SystemConfig,
    grid: &OracleGrid,
) -> Result<Option<OracleSecrecy>, OracleError> {
    grid.validate()?;
    let (space, reduced) = reduction::build_reduced(channels)?;
    check_dims(&reduced, 1)?;
    let beta = reduced.hb_ab[(0, 0)].re / config.sigma2_b;
    let alpha = reduced.hb_ba[(0, 0)].re / config.sigma2_a;
    let a = reduced.hb_a_ek[0][(0, 0)].re;
    let b = reduced.hb_b_ek[0][(0, 0)].re;
    let need = config.required_received_power();
    let d_max = config.p_max_a + config.p_max_b;
    let powers: Vec<f64> = (0..grid.power_steps)
        .map(|i| d_max * i as f64 / (grid.power_steps - 1) as f64)
        .collect();
    let mut best: Option<(f64, f64, f64, CMat)> = None;
    for (phi, psi) in angles(grid.angle_steps) {
        let (p1, p2) = basis(phi, psi);
        let (ba1, ba2) = (
            linalg::trace_product(&reduced.bb_a, &p1),
            linalg::trace_product(&reduced.bb_a, &p2),
        );
        let (h1, h2) = (
            linalg::trace_product(&reduced.hb_ek[0], &p1),
            linalg::trace_product(&reduced.hb_ek[0], &p2),
        );
        for &d1 in &powers {
            for &d2 in &powers {
                let pa = d1 * ba1 + d2 * ba2;
                let pb = d1 + d2 - pa;
                if pa > config.p_max_a || pb > config.p_max_b {
                    continue;
                }
                let cc = d1 * h1 + d2 * h2 + config.sigma2_e;
                let e = need - cc;
                if e > 0.0 && a == 0.0 && b == 0.0 {
                    continue;
                }
                let found = best_secrecy_box(beta, alpha, a, b, cc, config.p_max_a - pa, config.p_max_b - pb, e);
                if let Some((v, x, y)) = found {
                    if best.as_ref().is_none_or(|bst| v > bst.0) {
                        best = Some((v, x, y, &p1 * c(d1) + &p2 * c(d2)));
                    }
                }
            }
        }
    }
    let Some((_, x, y, vbar)) = best else { return Ok(None) };
    let w_ab_bar = CMat::from_element(1, 1, c(x));
    let w_ba_bar = CMat::from_element(1, 1, c(y));
    let (w_ab, w_ba, v) = reduction::lift(&w_ab_bar, &w_ba_bar, &vbar, &space)?;
    let (w_ab, w_ba, v) = (
        linalg::clamp_psd(&w_ab),
        linalg::clamp_psd(&w_ba),
        linalg::clamp_psd(&v),
    );
    let report = model::evaluate_rates(channels, &w_ab, &w_ba, &v, config)
        .expect("lifted oracle design has matching dimensions");
    Ok(Some(OracleSecrecy {
        secrecy: report.c_sec_raw,
        w_ab,
        w_ba,
        v,
    }))
}

/// Whether an AN-only design meets every energy requirement within the
/// power budgets. Rank-one directions are scaled up to the power boundary;
/// rank-two designs cover the case of several receivers.
pub fn feasibility(reduced: &ReducedChannels, config: &SystemConfig, grid: &OracleGrid) -> Result<bool, OracleError> {
    grid.validate()?;
    check_dims(reduced, 2)?;
    let need = config.required_received_power();
    if !need.is_finite() {
        return Ok(false);
    }
    let margin = |v: &CMat| {
        reduced
            .hb_ek
            .iter()
            .map(|h| linalg::trace_product(h, v) + config.sigma2_e - need)
            .fold(f64::INFINITY, f64::min)
    };
    if margin(&linalg::zeros(2)) >= 0.0 {
        return Ok(true);
    }
    // Largest multiple of `v` inside both budgets.
    let scale = |v: &CMat| {
        let pa = linalg::trace_product(&reduced.bb_a, v);
        let pb = linalg::trace_product(&reduced.bb_b, v);
        let sa = if pa > 0.0 { config.p_max_a / pa } else { f64::INFINITY };
        let sb = if pb > 0.0 { config.p_max_b / pb } else { f64::INFINITY };
        sa.min(sb)
    };
    for (phi, psi) in angles(grid.feasibility_angle_steps) {
        let (p1, _) = basis(phi, psi);
        let s = scale(&p1);
        if s.is_finite() && margin(&(&p1 * c(s))) >= 0.0 {
            return Ok(true);
        }
    }
    if reduced.k_er() > 1 {
        for (phi, psi) in angles(grid.angle_steps) {
            let (p1, p2) = basis(phi, psi);
            for i in 1..grid.power_steps - 1 {
                let r = i as f64 / (grid.power_steps - 1) as f64;
                let v = &p1 * c(r) + &p2 * c(1.0 - r);
                let s = scale(&v);
                if s.is_finite() && margin(&(&v * c(s))) >= 0.0 {
                    return Ok(true);
                }
            }
        }
    }
    Ok(false)
}
