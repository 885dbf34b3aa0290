//! Dense barrier-method solver for small convex programs over Hermitian PSD
//! blocks.
//!
//! A [`ConicProblem`] maximises
//!
//! ```text
//!   sum_j k_j ln(a_j + sum_b Tr(A_jb S_b)) + sum_b Tr(C_b S_b) + const
//!   s.t. sum_b Tr(F_ib S_b) <= g_i,   S_b >= 0 (Hermitian PSD)
//! ```
//!
//! Each complex block `S = R + iM` is parametrised by the real coordinates of
//! its embedding `[[R, -M], [M, R]]`; trace functionals are halved so that
//! `Tr(A S) = Tr(embed(A) embed(S)) / 2`. The log-det barrier of a block,
//! `-ln det embed(S) / 2 = -ln det S`, and its derivatives are evaluated on
//! the complex block directly. The Newton system is real. There are no
//! equality constraints.

use nalgebra::{Cholesky, DMatrix, DVector};
use thiserror::Error;

use crate::linalg::{self, CMat, C64};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConicError {
    #[error("malformed problem: {0}")]
    Malformed(String),
    #[error("problem has no strictly feasible point: {0}")]
    Infeasible(InfeasibleCertificate),
    #[error("solver stalled after {iterations} Newton steps (decrement^2 {decrement:e})")]
    SolverStalled { iterations: usize, decrement: f64 },
}

/// Evidence that the interior of the feasible set is empty.
#[derive(Debug, Clone, PartialEq)]
pub struct InfeasibleCertificate {
    pub reason: String,
    /// Certified lower bound on the optimum of the max-min-slack program,
    /// expressed as a minimised violation (positive means infeasible).
    pub min_violation_lower_bound: f64,
    /// Index of a constraint that alone rules out strict feasibility, when one exists.
    pub constraint: Option<usize>,
}

impl std::fmt::Display for InfeasibleCertificate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} (violation bound {:e})",
            self.reason, self.min_violation_lower_bound
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockSpec {
    pub name: String,
    pub dim: usize,
}

/// `weight * ln(offset + sum_b Tr(coeffs[b] S_b))`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogTerm {
    pub weight: f64,
    pub offset: f64,
    pub coeffs: Vec<Option<CMat>>,
}

/// `sum_b Tr(coeffs[b] S_b) <= bound`.
#[derive(Debug, Clone, PartialEq)]
pub struct Inequality {
    pub label: String,
    pub coeffs: Vec<Option<CMat>>,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicProblem {
    pub blocks: Vec<BlockSpec>,
    pub log_terms: Vec<LogTerm>,
    pub linear_objective: Vec<Option<CMat>>,
    pub inequalities: Vec<Inequality>,
    pub constant_offset: f64,
}

fn sparse_coeffs(n_blocks: usize, terms: &[(usize, CMat)]) -> Vec<Option<CMat>> {
    let mut coeffs = vec![None; n_blocks];
    for (b, m) in terms {
        coeffs[*b] = Some(match coeffs[*b].take() {
            Some(acc) => acc + m,
            None => m.clone(),
        });
    }
    coeffs
}

fn functional_value(coeffs: &[Option<CMat>], blocks: &[CMat]) -> f64 {
    coeffs
        .iter()
        .zip(blocks)
        .filter_map(|(a, s)| a.as_ref().map(|a| linalg::trace_product(a, s)))
        .sum()
}

impl ConicProblem {
    pub fn new(blocks: Vec<BlockSpec>) -> Self {
        let n = blocks.len();
        Self {
            blocks,
            log_terms: Vec::new(),
            linear_objective: vec![None; n],
            inequalities: Vec::new(),
            constant_offset: 0.0,
        }
    }

    pub fn add_log_term(&mut self, weight: f64, offset: f64, terms: &[(usize, CMat)]) -> &mut Self {
        let coeffs = sparse_coeffs(self.blocks.len(), terms);
        self.log_terms.push(LogTerm { weight, offset, coeffs });
        self
    }

    pub fn add_inequality(&mut self, label: impl Into<String>, terms: &[(usize, CMat)], bound: f64) -> &mut Self {
        let coeffs = sparse_coeffs(self.blocks.len(), terms);
        self.inequalities.push(Inequality {
            label: label.into(),
            coeffs,
            bound,
        });
        self
    }

    pub fn set_linear(&mut self, block: usize, c: CMat) -> &mut Self {
        self.linear_objective[block] = Some(c);
        self
    }

    pub fn with_constant(&mut self, c: f64) -> &mut Self {
        self.constant_offset = c;
        self
    }

    pub fn validate(&self) -> Result<(), ConicError> {
        let bad = |m: String| Err(ConicError::Malformed(m));
        if self.blocks.is_empty() {
            return bad("no decision blocks".into());
        }
        if self.blocks.iter().any(|b| b.dim == 0) {
            return bad("zero-dimensional block".into());
        }
        let check = |what: &str, coeffs: &[Option<CMat>]| -> Result<(), ConicError> {
            if coeffs.len() != self.blocks.len() {
                return Err(ConicError::Malformed(format!(
                    "{what}: wrong number of block coefficients"
                )));
            }
            for (b, m) in coeffs.iter().enumerate() {
                if let Some(m) = m {
                    let n = self.blocks[b].dim;
                    if m.shape() != (n, n) {
                        return Err(ConicError::Malformed(format!(
                            "{what}: coefficient for block {} is {}x{}, expected {n}x{n}",
                            self.blocks[b].name,
                            m.nrows(),
                            m.ncols()
                        )));
                    }
                    let scale = linalg::frobenius(m).max(1.0);
                    if linalg::hermitian_defect(m) > 1e-9 * scale {
                        return Err(ConicError::Malformed(format!("{what}: coefficient is not Hermitian")));
                    }
                    if m.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
                        return Err(ConicError::Malformed(format!("{what}: non-finite coefficient")));
                    }
                }
            }
            Ok(())
        };
        check("linear objective", &self.linear_objective)?;
        for (j, term) in self.log_terms.iter().enumerate() {
            if !(term.weight >= 0.0) || !(term.offset > 0.0) || !term.offset.is_finite() {
                return bad(format!("log term {j}: need weight >= 0 and finite offset > 0"));
            }
            check(&format!("log term {j}"), &term.coeffs)?;
        }
        for ineq in &self.inequalities {
            if ineq.bound.is_nan() {
                return bad(format!("inequality {}: NaN bound", ineq.label));
            }
            check(&format!("inequality {}", ineq.label), &ineq.coeffs)?;
        }
        if !self.constant_offset.is_finite() {
            return bad("non-finite constant offset".into());
        }
        Ok(())
    }

    /// Value of the (maximised) objective; `-inf` outside the log domain.
    pub fn objective(&self, blocks: &[CMat]) -> f64 {
        let mut value = self.constant_offset + functional_value(&self.linear_objective, blocks);
        for term in &self.log_terms {
            let arg = term.offset + functional_value(&term.coeffs, blocks);
            if arg <= 0.0 {
                return f64::NEG_INFINITY;
            }
            value += term.weight * arg.ln();
        }
        value
    }

    /// `g_i - sum_b Tr(F_ib S_b)` per inequality.
    pub fn slacks(&self, blocks: &[CMat]) -> Vec<f64> {
        self.inequalities
            .iter()
            .map(|q| q.bound - functional_value(&q.coeffs, blocks))
            .collect()
    }

    /// Objective gradient with respect to each block (a Hermitian matrix).
    pub fn objective_gradient(&self, blocks: &[CMat]) -> Vec<CMat> {
        let mut grads: Vec<CMat> = self
            .blocks
            .iter()
            .enumerate()
            .map(|(b, spec)| {
                self.linear_objective[b]
                    .clone()
                    .unwrap_or_else(|| linalg::zeros(spec.dim))
            })
            .collect();
        for term in &self.log_terms {
            let arg = term.offset + functional_value(&term.coeffs, blocks);
            for (b, a) in term.coeffs.iter().enumerate() {
                if let Some(a) = a {
                    grads[b] += a * C64::new(term.weight / arg, 0.0);
                }
            }
        }
        grads
    }

    /// Barrier parameter of the constraint set.
    pub fn barrier_degree(&self) -> f64 {
        (self.inequalities.len() + self.blocks.iter().map(|b| b.dim).sum::<usize>()) as f64
    }
}

/// Barrier-method settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Target bound on the duality gap.
    pub gap_tol: f64,
    /// Multiplicative barrier-weight update.
    pub mu: f64,
    /// Armijo acceptance parameter.
    pub alpha: f64,
    /// Backtracking shrink factor.
    pub beta: f64,
    /// Centering stops once `decrement^2 / 2` falls below this.
    pub centering_tol: f64,
    pub max_newton_steps: usize,
    pub record_trace: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            gap_tol: 1e-6,
            mu: 10.0,
            alpha: 0.01,
            beta: 0.5,
            centering_tol: 1e-10,
            max_newton_steps: 600,
            record_trace: false,
        }
    }
}

impl SolverOptions {
    pub fn with_gap(gap_tol: f64) -> Self {
        Self {
            gap_tol,
            ..Self::default()
        }
    }
}

/// Lagrange multipliers recovered from the final central point.
#[derive(Debug, Clone, PartialEq)]
pub struct DualCertificate {
    /// One per inequality, `1 / (t * slack)`; zero for constraints that were
    /// dropped as vacuous.
    pub mult: Vec<f64>,
    /// One per block, `S_b^{-1} / t`.
    pub psd_duals: Vec<CMat>,
    /// Duality-gap bound `degree / t`.
    pub gap: f64,
    /// Largest Frobenius norm of the per-block Lagrangian gradient.
    pub stationarity_residual: f64,
    pub barrier_weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub barrier_weight: f64,
    pub newton_decrement: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicSolution {
    pub blocks: Vec<CMat>,
    /// Maximised objective value at `blocks`.
    pub objective: f64,
    pub certificate: DualCertificate,
    pub newton_steps: usize,
    /// Newton steps spent in the first centering.
    pub first_centering_steps: usize,
    pub trace: Vec<TraceRow>,
}

// ---------------------------------------------------------------------------
// Real coordinates for Hermitian blocks
// ---------------------------------------------------------------------------

/// Coordinates of an `n x n` Hermitian block: `n` diagonal entries followed by
/// `(Re S_ij, Im S_ij)` pairs for `i < j`.
#[derive(Debug, Clone)]
struct BlockCoords {
    n: usize,
    offset: usize,
    /// Non-zeros of the embedded basis matrix for each coordinate.
    embedded: Vec<Vec<(usize, usize, f64)>>,
    /// Non-zeros of the complex basis matrix for each coordinate.
    basis: Vec<Vec<(usize, usize, C64)>>,
}

impl BlockCoords {
    fn new(n: usize, offset: usize) -> Self {
        let mut embedded = Vec::with_capacity(n * n);
        let mut basis = Vec::with_capacity(n * n);
        let (one, i1) = (C64::new(1.0, 0.0), C64::new(0.0, 1.0));
        for k in 0..n {
            embedded.push(vec![(k, k, 1.0), (n + k, n + k, 1.0)]);
            basis.push(vec![(k, k, one)]);
        }
        for i in 0..n {
            for j in (i + 1)..n {
                embedded.push(vec![(i, j, 1.0), (j, i, 1.0), (n + i, n + j, 1.0), (n + j, n + i, 1.0)]);
                embedded.push(vec![
                    (n + i, j, 1.0),
                    (n + j, i, -1.0),
                    (i, n + j, -1.0),
                    (j, n + i, 1.0),
                ]);
                basis.push(vec![(i, j, one), (j, i, one)]);
                basis.push(vec![(i, j, i1), (j, i, -i1)]);
            }
        }
        Self {
            n,
            offset,
            embedded,
            basis,
        }
    }

    fn len(&self) -> usize {
        self.n * self.n
    }

    fn embed(a: &CMat) -> DMatrix<f64> {
        let n = a.nrows();
        let mut x = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                let v = a[(i, j)];
                x[(i, j)] = v.re;
                x[(n + i, n + j)] = v.re;
                x[(n + i, j)] = v.im;
                x[(i, n + j)] = -v.im;
            }
        }
        x
    }

    /// `Tr(A S)` as a coefficient vector, via `Tr(embed(A) E_p) / 2`.
    fn functional(&self, a: &CMat) -> Vec<f64> {
        let ea = Self::embed(a);
        self.embedded
            .iter()
            .map(|nz| 0.5 * nz.iter().map(|&(r, c, v)| ea[(c, r)] * v).sum::<f64>())
            .collect()
    }

    fn coords_of(&self, s: &CMat) -> Vec<f64> {
        let n = self.n;
        let mut out = Vec::with_capacity(n * n);
        for k in 0..n {
            out.push(s[(k, k)].re);
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = (s[(i, j)] + s[(j, i)].conj()) * 0.5;
                out.push(avg.re);
                out.push(avg.im);
            }
        }
        out
    }

    fn matrix_of(&self, z: &[f64]) -> CMat {
        let n = self.n;
        let x = &z[self.offset..self.offset + self.len()];
        let mut s = CMat::zeros(n, n);
        for k in 0..n {
            s[(k, k)] = C64::new(x[k], 0.0);
        }
        let mut p = n;
        for i in 0..n {
            for j in (i + 1)..n {
                let v = C64::new(x[p], x[p + 1]);
                s[(i, j)] = v;
                s[(j, i)] = v.conj();
                p += 2;
            }
        }
        s
    }
}

// ---------------------------------------------------------------------------
// Real barrier core
// ---------------------------------------------------------------------------

/// Affine PSD constraint `sum_p z_p E_p >= 0` on a complex `n x n` block;
/// its barrier is `-ln det`, which equals half the log-determinant barrier of
/// the real embedding.
#[derive(Debug, Clone)]
struct PsdTerm {
    n: usize,
    terms: Vec<(usize, Vec<(usize, usize, C64)>)>,
}

impl PsdTerm {
    fn matrix(&self, z: &[f64]) -> CMat {
        let mut x = CMat::zeros(self.n, self.n);
        for (p, nz) in &self.terms {
            let zp = z[*p];
            if zp != 0.0 {
                for &(r, c, v) in nz {
                    x[(r, c)] += v * zp;
                }
            }
        }
        x
    }
}

#[derive(Debug, Clone)]
struct Core {
    nvar: usize,
    lin: Vec<f64>,
    /// `-weight * ln(offset + a . z)`
    logs: Vec<(f64, f64, Vec<f64>)>,
    /// `f . z <= g`
    rows: Vec<(Vec<f64>, f64)>,
    psd: Vec<PsdTerm>,
    /// `rows` stacked as a dense matrix, one row per constraint.
    row_mat: DMatrix<f64>,
    log_mat: DMatrix<f64>,
}

struct Point {
    slacks: Vec<f64>,
    log_args: Vec<f64>,
    /// Factor of each block.
    chols: Vec<Cholesky<C64, nalgebra::Dyn>>,
    log_dets: Vec<f64>,
}

impl Point {
    fn inverses(&self) -> Vec<CMat> {
        self.chols.iter().map(|c| c.inverse()).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Core {
    fn new(
        nvar: usize,
        lin: Vec<f64>,
        logs: Vec<(f64, f64, Vec<f64>)>,
        rows: Vec<(Vec<f64>, f64)>,
        psd: Vec<PsdTerm>,
    ) -> Self {
        let row_mat = DMatrix::from_fn(rows.len(), nvar, |i, j| rows[i].0[j]);
        let log_mat = DMatrix::from_fn(logs.len(), nvar, |i, j| logs[i].2[j]);
        Self {
            nvar,
            lin,
            logs,
            rows,
            psd,
            row_mat,
            log_mat,
        }
    }

    fn degree(&self) -> f64 {
        self.rows.len() as f64 + self.psd.iter().map(|p| p.n as f64).sum::<f64>()
    }

    /// Evaluates everything needed at `z`; `None` outside the barrier domain.
    fn point(&self, z: &[f64]) -> Option<Point> {
        let mut slacks = Vec::with_capacity(self.rows.len());
        for (f, g) in &self.rows {
            let s = g - dot(f, z);
            if !(s > 0.0) {
                return None;
            }
            slacks.push(s);
        }
        let mut log_args = Vec::with_capacity(self.logs.len());
        for (_, off, a) in &self.logs {
            let u = off + dot(a, z);
            if !(u > 0.0) {
                return None;
            }
            log_args.push(u);
        }
        let mut chols = Vec::with_capacity(self.psd.len());
        let mut log_dets = Vec::with_capacity(self.psd.len());
        for p in &self.psd {
            let chol = Cholesky::new(p.matrix(z))?;
            let l = chol.l_dirty();
            let mut ld = 0.0;
            for i in 0..p.n {
                // The complex factorisation takes square roots of negative
                // pivots without failing; those show up as imaginary parts.
                let d = l[(i, i)].re;
                if !(d > 0.0) || !d.is_finite() || l[(i, i)].im.abs() > 1e-8 * d {
                    return None;
                }
                ld += 2.0 * d.ln();
            }
            log_dets.push(ld);
            chols.push(chol);
        }
        Some(Point {
            slacks,
            log_args,
            chols,
            log_dets,
        })
    }

    /// Minimised objective `lin . z - sum w ln(u)`.
    fn f0(&self, z: &[f64], pt: &Point) -> f64 {
        let mut v = dot(&self.lin, z);
        for ((w, _, _), u) in self.logs.iter().zip(&pt.log_args) {
            v -= w * u.ln();
        }
        v
    }

    fn barrier(&self, pt: &Point) -> f64 {
        -pt.slacks.iter().map(|s| s.ln()).sum::<f64>() - pt.log_dets.iter().sum::<f64>()
    }

    fn phi(&self, t: f64, z: &[f64], pt: &Point) -> f64 {
        let f0 = if t == 0.0 { 0.0 } else { t * self.f0(z, pt) };
        f0 + self.barrier(pt)
    }

    /// Gradient and Hessian of `t f0 + barrier`.
    fn derivatives(&self, t: f64, pt: &Point) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.nvar;
        let mut g = DVector::zeros(n);
        let mut h = DMatrix::zeros(n, n);
        if t != 0.0 {
            for i in 0..n {
                g[i] += t * self.lin[i];
            }
            if !self.logs.is_empty() {
                let coef = DVector::from_iterator(
                    self.logs.len(),
                    self.logs.iter().zip(&pt.log_args).map(|((w, _, _), u)| -t * w / u),
                );
                g.gemv_tr(1.0, &self.log_mat, &coef, 1.0);
                let mut scaled = self.log_mat.clone();
                for (i, ((w, _, _), u)) in self.logs.iter().zip(&pt.log_args).enumerate() {
                    scaled.row_mut(i).scale_mut((t * w).sqrt() / u);
                }
                h.gemm(1.0, &scaled.transpose(), &scaled, 1.0);
            }
        }
        if !self.rows.is_empty() {
            let inv = DVector::from_iterator(pt.slacks.len(), pt.slacks.iter().map(|s| 1.0 / s));
            g.gemv_tr(1.0, &self.row_mat, &inv, 1.0);
            let mut scaled = self.row_mat.clone();
            for (i, w) in inv.iter().enumerate() {
                scaled.row_mut(i).scale_mut(*w);
            }
            h.gemm(1.0, &scaled.transpose(), &scaled, 1.0);
        }
        let inverses = pt.inverses();
        for (p, y) in self.psd.iter().zip(&inverses) {
            for (ia, (pa, nza)) in p.terms.iter().enumerate() {
                let mut tr = C64::new(0.0, 0.0);
                for &(r, c, v) in nza {
                    tr += v * y[(c, r)];
                }
                g[*pa] -= tr.re;
                for (pb, nzb) in p.terms.iter().skip(ia) {
                    // Re Tr(Y E_a Y E_b)
                    let mut acc = C64::new(0.0, 0.0);
                    for &(a0, b0, va) in nza {
                        for &(c0, d0, vb) in nzb {
                            acc += va * vb * y[(b0, c0)] * y[(d0, a0)];
                        }
                    }
                    let val = acc.re;
                    h[(*pa, *pb)] += val;
                    if pa != pb {
                        h[(*pb, *pa)] += val;
                    }
                }
            }
        }
        (g, h)
    }
}

fn newton_direction(g: &DVector<f64>, h: DMatrix<f64>) -> Option<DVector<f64>> {
    let n = g.len();
    let rhs = -g;
    if let Some(ch) = Cholesky::new(h.clone()) {
        let d = ch.solve(&rhs);
        if d.iter().all(|x| x.is_finite()) {
            return Some(d);
        }
    }
    let scale = (0..n).map(|i| h[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut ridged = h.clone();
    for i in 0..n {
        ridged[(i, i)] += 1e-13 * scale;
    }
    if let Some(ch) = Cholesky::new(ridged) {
        let d = ch.solve(&rhs);
        if d.iter().all(|x| x.is_finite()) {
            return Some(d);
        }
    }
    h.lu().solve(&rhs).filter(|d| d.iter().all(|x| x.is_finite()))
}

/// Centering tolerance for every barrier weight except the last.
const INTERMEDIATE_CENTERING_TOL: f64 = 1e-4;

struct Centering {
    steps: usize,
}

/// Damped Newton minimisation of `t f0 + barrier` from a strictly feasible `z`.
#[allow(clippy::too_many_arguments)]
fn center(
    core: &Core,
    z: &mut Vec<f64>,
    t: f64,
    tol: f64,
    opts: &SolverOptions,
    budget: &mut usize,
    trace: &mut Option<Vec<TraceRow>>,
    stop_early: &dyn Fn(&[f64]) -> bool,
) -> Result<Centering, ConicError> {
    let mut steps = 0;
    let mut pt = core
        .point(z)
        .ok_or_else(|| ConicError::Malformed("centering started outside the domain".into()))?;
    let mut last_dec2 = f64::INFINITY;
    loop {
        let (g, h) = core.derivatives(t, &pt);
        let Some(dir) = newton_direction(&g, h) else {
            return Err(ConicError::SolverStalled {
                iterations: steps,
                decrement: last_dec2,
            });
        };
        let slope = g.dot(&dir);
        let dec2 = (-slope).max(0.0);
        last_dec2 = dec2;
        if let Some(tr) = trace.as_mut() {
            tr.push(TraceRow {
                iteration: tr.len(),
                barrier_weight: t,
                newton_decrement: dec2.sqrt(),
                objective: -core.f0(z, &pt),
            });
        }
        if dec2 / 2.0 <= tol || stop_early(z) {
            return Ok(Centering { steps });
        }
        if *budget == 0 {
            return Err(ConicError::SolverStalled {
                iterations: steps,
                decrement: dec2,
            });
        }
        *budget -= 1;
        steps += 1;

        let phi0 = core.phi(t, z, &pt);
        let mut step = 1.0;
        let mut accepted = None;
        // Inside the quadratic-convergence region the full step always
        // satisfies the Armijo test in exact arithmetic; skipping the test
        // avoids rejecting steps on round-off in phi.
        let quadratic_region = dec2.sqrt() < 0.2;
        while step > 1e-14 {
            let trial: Vec<f64> = z.iter().zip(dir.iter()).map(|(a, d)| a + step * d).collect();
            if let Some(tp) = core.point(&trial) {
                if quadratic_region || core.phi(t, &trial, &tp) <= phi0 + opts.alpha * step * slope {
                    accepted = Some((trial, tp));
                    break;
                }
            }
            step *= opts.beta;
        }
        match accepted {
            Some((trial, tp)) => {
                *z = trial;
                pt = tp;
            }
            None => {
                // Round-off floor: the decrement is already tiny.
                if dec2 < 1e-6 {
                    return Ok(Centering { steps });
                }
                return Err(ConicError::SolverStalled {
                    iterations: steps,
                    decrement: dec2,
                });
            }
        }
    }
}

/// Barrier weight that best balances objective and barrier gradients at `z`.
fn initial_weight(core: &Core, z: &[f64]) -> f64 {
    let fallback = 1.0;
    let Some(pt) = core.point(z) else { return fallback };
    let (gb, hb) = core.derivatives(0.0, &pt);
    let mut g0 = DVector::from_vec(core.lin.clone());
    for ((w, _, a), u) in core.logs.iter().zip(&pt.log_args) {
        for i in 0..core.nvar {
            g0[i] -= w * a[i] / u;
        }
    }
    let Some(ch) = Cholesky::new(hb) else { return fallback };
    let hg0 = ch.solve(&g0);
    let num = -hg0.dot(&gb);
    let den = hg0.dot(&g0);
    if den > 0.0 && num > 0.0 && (num / den).is_finite() {
        (num / den).clamp(1e-8, 1e8)
    } else {
        fallback
    }
}

// ---------------------------------------------------------------------------
// Compilation of a ConicProblem onto the core
// ---------------------------------------------------------------------------

struct Compiled {
    layout: Vec<BlockCoords>,
    core: Core,
    /// Core row for each inequality, `None` when dropped as vacuous.
    row_of: Vec<Option<usize>>,
}

fn compile(problem: &ConicProblem) -> Result<Compiled, ConicError> {
    problem.validate()?;
    let mut layout = Vec::with_capacity(problem.blocks.len());
    let mut offset = 0;
    for b in &problem.blocks {
        let coords = BlockCoords::new(b.dim, offset);
        offset += coords.len();
        layout.push(coords);
    }
    let nvar = offset;
    let dense = |coeffs: &[Option<CMat>]| -> Vec<f64> {
        let mut v = vec![0.0; nvar];
        for (b, m) in coeffs.iter().enumerate() {
            if let Some(m) = m {
                let f = layout[b].functional(m);
                v[layout[b].offset..layout[b].offset + f.len()].copy_from_slice(&f);
            }
        }
        v
    };
    let lin: Vec<f64> = dense(&problem.linear_objective).into_iter().map(|x| -x).collect();
    let logs = problem
        .log_terms
        .iter()
        .filter(|t| t.weight > 0.0)
        .map(|t| (t.weight, t.offset, dense(&t.coeffs)))
        .collect();
    let mut rows = Vec::new();
    let mut row_of = Vec::with_capacity(problem.inequalities.len());
    for (i, ineq) in problem.inequalities.iter().enumerate() {
        let f = dense(&ineq.coeffs);
        if f.iter().all(|&x| x == 0.0) {
            if ineq.bound < 0.0 {
                return Err(ConicError::Infeasible(InfeasibleCertificate {
                    reason: format!("constraint {} reads 0 <= {}", ineq.label, ineq.bound),
                    min_violation_lower_bound: -ineq.bound,
                    constraint: Some(i),
                }));
            }
            row_of.push(None);
            continue;
        }
        row_of.push(Some(rows.len()));
        rows.push((f, ineq.bound));
    }
    let psd = layout
        .iter()
        .map(|bc| PsdTerm {
            n: bc.n,
            terms: bc
                .basis
                .iter()
                .enumerate()
                .map(|(p, nz)| (bc.offset + p, nz.clone()))
                .collect(),
        })
        .collect();
    Ok(Compiled {
        layout,
        core: Core::new(nvar, lin, logs, rows, psd),
        row_of,
    })
}

impl Compiled {
    fn coords(&self, blocks: &[CMat]) -> Vec<f64> {
        let mut z = vec![0.0; self.core.nvar];
        for (bc, s) in self.layout.iter().zip(blocks) {
            let c = bc.coords_of(s);
            z[bc.offset..bc.offset + c.len()].copy_from_slice(&c);
        }
        z
    }

    fn blocks(&self, z: &[f64]) -> Vec<CMat> {
        self.layout.iter().map(|bc| bc.matrix_of(z)).collect()
    }
}

/// A row whose coefficient matrices are all PSD (and not all zero) with a
/// non-positive bound has no strictly feasible point.
fn obviously_empty(problem: &ConicProblem) -> Option<InfeasibleCertificate> {
    for (i, q) in problem.inequalities.iter().enumerate() {
        if q.bound > 0.0 {
            continue;
        }
        let mut any = false;
        let mut all_psd = true;
        for m in q.coeffs.iter().flatten() {
            if linalg::frobenius(m) == 0.0 {
                continue;
            }
            any = true;
            let (vals, _) = linalg::eigh(m);
            let top = vals.first().copied().unwrap_or(0.0).abs();
            if vals.iter().any(|&v| v < -1e-14 * top) {
                all_psd = false;
                break;
            }
        }
        if any && all_psd {
            return Some(InfeasibleCertificate {
                reason: format!("constraint {} has PSD coefficients and bound {} <= 0", q.label, q.bound),
                min_violation_lower_bound: 0.0,
                constraint: Some(i),
            });
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Phase one
// ---------------------------------------------------------------------------

/// Largest trace any block may take while phase one searches for an interior point.
pub const PHASE1_TRACE_CAP: f64 = 1e6;
/// A min-slack optimum above `-PHASE1_TOL` certifies infeasibility.
pub const PHASE1_TOL: f64 = 1e-8;

/// Finds a strictly feasible assignment of the blocks.
///
/// Minimises `s` subject to normalised constraint violations `<= s`,
/// `S_b + s I >= 0`, `s >= -1` and `Tr(S_b) <= PHASE1_TRACE_CAP`; a negative
/// optimum yields an interior point.
pub fn phase1(problem: &ConicProblem) -> Result<Vec<CMat>, ConicError> {
    let compiled = compile(problem)?;
    if let Some(cert) = obviously_empty(problem) {
        return Err(ConicError::Infeasible(cert));
    }
    let base = &compiled.core;
    let s_idx = base.nvar;
    let nvar = base.nvar + 1;
    let mut rows = Vec::with_capacity(base.rows.len() + compiled.layout.len() + 1);
    for (f, g) in &base.rows {
        let norm = f.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut r: Vec<f64> = f.iter().map(|x| x / norm).collect();
        r.push(-1.0);
        rows.push((r, g / norm));
    }
    let mut lower = vec![0.0; nvar];
    lower[s_idx] = -1.0;
    rows.push((lower, 1.0));
    for bc in &compiled.layout {
        let mut r = vec![0.0; nvar];
        for k in 0..bc.n {
            r[bc.offset + k] = 1.0;
        }
        rows.push((r, PHASE1_TRACE_CAP));
    }
    let psd = base
        .psd
        .iter()
        .map(|p| {
            let mut terms = p.terms.clone();
            terms.push((s_idx, (0..p.n).map(|k| (k, k, C64::new(1.0, 0.0))).collect()));
            PsdTerm { n: p.n, terms }
        })
        .collect();
    let mut lin = vec![0.0; nvar];
    lin[s_idx] = 1.0;
    let core = Core::new(nvar, lin, Vec::new(), rows, psd);

    let ident: Vec<CMat> = compiled.layout.iter().map(|bc| linalg::identity(bc.n)).collect();
    let mut z = compiled.coords(&ident);
    let worst = base
        .rows
        .iter()
        .map(|(f, g)| {
            let norm = f.iter().map(|x| x * x).sum::<f64>().sqrt();
            (dot(f, &z) - g) / norm
        })
        .fold(-1.0, f64::max);
    z.push(worst.max(0.0) + 1.0);

    let opts = SolverOptions::default();
    let mut budget = opts.max_newton_steps;
    let mut t = initial_weight(&core, &z);
    let mut trace = None;
    let feasible_now = |z: &[f64]| z[s_idx] < -PHASE1_TOL;
    loop {
        center(
            &core,
            &mut z,
            t,
            opts.centering_tol,
            &opts,
            &mut budget,
            &mut trace,
            &feasible_now,
        )?;
        let s = z[s_idx];
        if feasible_now(&z) {
            z.truncate(base.nvar);
            return Ok(compiled.blocks(&z));
        }
        let gap = core.degree() / t;
        if s - gap >= -PHASE1_TOL || gap < 1e-13 {
            return Err(ConicError::Infeasible(InfeasibleCertificate {
                reason: "max-min-slack program has non-positive optimum".into(),
                min_violation_lower_bound: s - gap,
                constraint: None,
            }));
        }
        t *= opts.mu;
    }
}

/// Whether `blocks` are strictly inside every constraint and PSD cone.
pub fn is_strictly_feasible(problem: &ConicProblem, blocks: &[CMat]) -> bool {
    match compile(problem) {
        Ok(c) => blocks.len() == c.layout.len() && c.core.point(&c.coords(blocks)).is_some(),
        Err(_) => false,
    }
}

/// Point maximising the barrier (no objective) starting from an interior point.
///
/// The constraint set must be bounded.
pub fn analytic_center(problem: &ConicProblem, start: &[CMat]) -> Result<Vec<CMat>, ConicError> {
    let compiled = compile(problem)?;
    let mut z = compiled.coords(start);
    if compiled.core.point(&z).is_none() {
        return Err(ConicError::Malformed(
            "analytic centre needs a strictly feasible start".into(),
        ));
    }
    let opts = SolverOptions::default();
    let mut budget = opts.max_newton_steps;
    center(
        &compiled.core,
        &mut z,
        0.0,
        opts.centering_tol,
        &opts,
        &mut budget,
        &mut None,
        &|_| false,
    )?;
    Ok(compiled.blocks(&z))
}

/// Phase one followed by the barrier method.
pub fn solve(problem: &ConicProblem, opts: &SolverOptions) -> Result<ConicSolution, ConicError> {
    let start = phase1(problem)?;
    solve_from(problem, &start, opts)
}

/// Barrier method from a caller-supplied strictly feasible point; falls back
/// to phase one when `start` is not interior.
pub fn solve_from(problem: &ConicProblem, start: &[CMat], opts: &SolverOptions) -> Result<ConicSolution, ConicError> {
    let compiled = compile(problem)?;
    let mut z = compiled.coords(start);
    if start.len() != compiled.layout.len() || compiled.core.point(&z).is_none() {
        let start = phase1(problem)?;
        z = compiled.coords(&start);
    }
    let core = &compiled.core;
    let mut budget = opts.max_newton_steps;
    let mut trace = opts.record_trace.then(Vec::new);
    let mut t = initial_weight(core, &z);
    let degree = core.degree();
    let mut first = None;
    let mut total = 0;
    loop {
        let last = degree / t < opts.gap_tol;
        // Only the final centering needs to be tight: the certificate is read there.
        let tol = if last {
            opts.centering_tol
        } else {
            opts.centering_tol.max(INTERMEDIATE_CENTERING_TOL)
        };
        let c = center(core, &mut z, t, tol, opts, &mut budget, &mut trace, &|_| false)?;
        total += c.steps;
        first.get_or_insert(c.steps);
        if last {
            break;
        }
        t *= opts.mu;
    }

    let pt = core.point(&z).expect("centering keeps iterates interior");
    let blocks = compiled.blocks(&z);
    let mut mult = vec![0.0; problem.inequalities.len()];
    for (i, row) in compiled.row_of.iter().enumerate() {
        if let Some(r) = row {
            mult[i] = 1.0 / (t * pt.slacks[*r]);
        }
    }
    let psd_duals: Vec<CMat> = pt
        .inverses()
        .iter()
        .map(|y| linalg::hermitize(y) * C64::new(1.0 / t, 0.0))
        .collect();
    let mut certificate = DualCertificate {
        mult,
        psd_duals,
        gap: degree / t,
        stationarity_residual: 0.0,
        barrier_weight: t,
    };
    certificate.stationarity_residual = stationarity(problem, &blocks, &certificate)
        .iter()
        .map(linalg::frobenius)
        .fold(0.0, f64::max);
    Ok(ConicSolution {
        objective: problem.objective(&blocks),
        blocks,
        certificate,
        newton_steps: total,
        first_centering_steps: first.unwrap_or(0),
        trace: trace.unwrap_or_default(),
    })
}

/// Per-block Lagrangian gradient `sum_i mult_i F_ib - grad_b(objective) - Z_b`.
pub fn stationarity(problem: &ConicProblem, blocks: &[CMat], cert: &DualCertificate) -> Vec<CMat> {
    let grads = problem.objective_gradient(blocks);
    grads
        .into_iter()
        .enumerate()
        .map(|(b, g)| {
            let mut r = -g - &cert.psd_duals[b];
            for (q, &m) in problem.inequalities.iter().zip(&cert.mult) {
                if let Some(f) = &q.coeffs[b] {
                    r += f * C64::new(m, 0.0);
                }
            }
            linalg::hermitize(&r)
        })
        .collect()
}

/// Diagnostic view of the optimality conditions at a candidate solution.
#[derive(Debug, Clone, PartialEq)]
pub struct KktReport {
    /// Frobenius norm of the Lagrangian gradient per block.
    pub stationarity: Vec<f64>,
    /// `mult_i * slack_i` per inequality.
    pub complementarity: Vec<f64>,
    /// `Tr(Z_b S_b)` per block.
    pub psd_complementarity: Vec<f64>,
    /// `max(0, -slack_i)` per inequality.
    pub violations: Vec<f64>,
    /// `max(0, -lambda_min(S_b))` per block.
    pub cone_violations: Vec<f64>,
    pub gap: f64,
}

impl KktReport {
    pub fn max_stationarity(&self) -> f64 {
        self.stationarity.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_violation(&self) -> f64 {
        self.violations
            .iter()
            .chain(&self.cone_violations)
            .copied()
            .fold(0.0, f64::max)
    }

    pub fn max_complementarity(&self) -> f64 {
        self.complementarity.iter().copied().fold(0.0, f64::max)
    }
}

pub fn check_kkt(problem: &ConicProblem, blocks: &[CMat], cert: &DualCertificate) -> KktReport {
    let slacks = problem.slacks(blocks);
    KktReport {
        stationarity: stationarity(problem, blocks, cert)
            .iter()
            .map(linalg::frobenius)
            .collect(),
        complementarity: cert.mult.iter().zip(&slacks).map(|(m, s)| m * s).collect(),
        psd_complementarity: cert
            .psd_duals
            .iter()
            .zip(blocks)
            .map(|(z, s)| linalg::trace_product(z, s))
            .collect(),
        violations: slacks.iter().map(|s| (-s).max(0.0)).collect(),
        cone_violations: blocks.iter().map(|s| (-linalg::min_eigenvalue(s)).max(0.0)).collect(),
        gap: cert.gap,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;

    fn scalar(x: f64) -> CMat {
        CMat::from_element(1, 1, c(x))
    }

    fn one_block(n: usize) -> ConicProblem {
        ConicProblem::new(vec![BlockSpec {
            name: "x".into(),
            dim: n,
        }])
    }

    #[test]
    fn embedding_functional_matches_trace() {
        let bc = BlockCoords::new(3, 0);
        let a = CMat::from_fn(3, 3, |i, j| C64::new((i + 2 * j) as f64, i as f64 - j as f64));
        let a = linalg::hermitize(&a);
        let s = CMat::from_fn(3, 3, |i, j| {
            C64::new(1.0 / (1 + i + j) as f64, (i as f64 - j as f64) * 0.3)
        });
        let s = linalg::hermitize(&s);
        let z = bc.coords_of(&s);
        let f = bc.functional(&a);
        assert!((dot(&f, &z) - linalg::trace_product(&a, &s)).abs() < 1e-12);
        assert!(linalg::frobenius(&(bc.matrix_of(&z) - &s)) < 1e-15);
    }

    #[test]
    fn interval_interior_from_phase1() {
        let mut p = one_block(1);
        p.add_inequality("x<=3", &[(0, scalar(1.0))], 3.0);
        let x = phase1(&p).unwrap()[0][(0, 0)].re;
        assert!(x > 0.0 && x < 3.0, "{x}");
    }

    #[test]
    fn negative_bound_is_infeasible() {
        let mut p = one_block(1);
        p.add_inequality("x<=-1", &[(0, scalar(1.0))], -1.0);
        assert!(matches!(phase1(&p), Err(ConicError::Infeasible(_))));
    }

    #[test]
    fn infeasible_without_shortcut() {
        // x <= 1 and -x <= -2 on a 1x1 block; no single row certifies emptiness.
        let mut p = one_block(1);
        p.add_inequality("x<=1", &[(0, scalar(1.0))], 1.0);
        p.add_inequality("x>=2", &[(0, scalar(-1.0))], -2.0);
        match phase1(&p) {
            Err(ConicError::Infeasible(cert)) => assert!(cert.constraint.is_none()),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn log_objective_hits_bound() {
        let mut p = one_block(1);
        p.add_log_term(1.0, 1.0, &[(0, scalar(1.0))]);
        p.add_inequality("x<=3", &[(0, scalar(1.0))], 3.0);
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        assert!((sol.blocks[0][(0, 0)].re - 3.0).abs() < 1e-5);
        assert!((sol.objective - 4f64.ln()).abs() < 1e-6);
        assert!(sol.certificate.gap <= 1e-6);
        let kkt = check_kkt(&p, &sol.blocks, &sol.certificate);
        assert!(kkt.max_stationarity() <= 1e-5, "{kkt:?}");
        assert!(sol.first_centering_steps <= 30);
    }

    #[test]
    fn trace_normalised_top_eigenvector() {
        let u = CMat::from_column_slice(2, 1, &[C64::new(0.6, 0.0), C64::new(0.0, 0.8)]);
        let w = CMat::from_column_slice(2, 1, &[C64::new(0.0, 0.8), C64::new(0.6, 0.0)]);
        let cm = &u * u.adjoint() * c(2.0) + &w * w.adjoint() * c(0.5);
        let mut p = one_block(2);
        p.set_linear(0, cm);
        p.add_inequality("tr<=1", &[(0, linalg::identity(2))], 1.0);
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        assert!((sol.objective - 2.0).abs() < 1e-5);
        let proj = &u * u.adjoint();
        assert!(linalg::frobenius(&(&sol.blocks[0] - proj)) < 1e-5);
    }

    #[test]
    fn perturbation_breaks_kkt() {
        let mut p = one_block(1);
        p.add_log_term(1.0, 1.0, &[(0, scalar(1.0))]);
        p.add_inequality("x<=3", &[(0, scalar(1.0))], 3.0);
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        let mut bumped = sol.blocks.clone();
        bumped[0][(0, 0)] += c(0.1);
        let kkt = check_kkt(&p, &bumped, &sol.certificate);
        assert!(kkt.max_violation() > 1e-3 || kkt.max_stationarity() > 1e-3);
    }

    #[test]
    fn vacuous_rows_are_dropped() {
        let mut p = one_block(1);
        p.add_log_term(1.0, 1.0, &[(0, scalar(1.0))]);
        p.add_inequality("0<=0", &[(0, scalar(0.0))], 0.0);
        p.add_inequality("x<=1", &[(0, scalar(1.0))], 1.0);
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(sol.certificate.mult[0], 0.0);
        assert!((sol.objective - 2f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn determinism_bitwise() {
        let mut p = one_block(2);
        p.add_log_term(1.0, 0.5, &[(0, linalg::identity(2))]);
        p.add_inequality("tr<=2", &[(0, linalg::identity(2))], 2.0);
        let opts = SolverOptions {
            record_trace: true,
            ..SolverOptions::default()
        };
        let a = solve(&p, &opts).unwrap();
        let b = solve(&p, &opts).unwrap();
        assert_eq!(a, b);
        assert!(!a.trace.is_empty());
    }

    #[test]
    fn malformed_problems_rejected() {
        let mut p = one_block(2);
        p.add_inequality("bad", &[(0, scalar(1.0))], 1.0);
        assert!(matches!(
            solve(&p, &SolverOptions::default()),
            Err(ConicError::Malformed(_))
        ));
        let mut p = one_block(1);
        p.add_log_term(1.0, 0.0, &[(0, scalar(1.0))]);
        assert!(matches!(p.validate(), Err(ConicError::Malformed(_))));
    }
}
