//! Null-space reduction that makes loopback self-interference cancellation
//! structural.
//!
//! The artificial noise is confined to the null space of `[h_a, h_b]^H` and
//! each information beam to the null space of its own loopback channel, so
//! every design lifted from the reduced space satisfies the cancellation
//! equalities exactly, and the solver never sees an equality constraint.

use nalgebra::SVD;
use thiserror::Error;

use crate::linalg::{self, c, CMat, CVec};
use crate::model::ChannelSet;

/// Singular values below this fraction of the largest count as zero.
pub const NULLSPACE_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReductionError {
    #[error("matrix has full column rank {rank}; null space is empty")]
    EmptyNullspace { rank: usize },
    #[error("degenerate channel: {0}")]
    DegenerateChannel(String),
    #[error("dimension mismatch for {what}: expected {expected}x{expected}, got {got_rows}x{got_cols}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got_rows: usize,
        got_cols: usize,
    },
}

/// Orthonormal basis of `ker(a)` from the right singular vectors of `a`.
///
/// Wide inputs are padded with zero rows so the decomposition returns a full
/// set of right singular vectors.
pub fn orthonormal_nullspace(a: &CMat, tol: f64) -> Result<CMat, ReductionError> {
    let (m, n) = a.shape();
    assert!(n >= 1, "null space of a matrix with no columns");
    let square = if m < n {
        let mut padded = CMat::zeros(n, n);
        padded.view_mut((0, 0), (m, n)).copy_from(a);
        padded
    } else {
        a.clone()
    };
    let svd = SVD::new(square, false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let sigma_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let null_rows: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] <= tol * sigma_max)
        .collect();
    let rank = svd.singular_values.len() - null_rows.len();
    if null_rows.is_empty() || rank == n {
        return Err(ReductionError::EmptyNullspace { rank });
    }
    let mut basis = CMat::zeros(n, null_rows.len());
    for (col, &row) in null_rows.iter().enumerate() {
        basis.set_column(col, &v_t.row(row).adjoint());
    }
    Ok(basis)
}

/// Orthonormal null-space basis built by Gram-Schmidt completion of the row
/// space of `a` against the standard basis. Spans the same subspace as
/// [`orthonormal_nullspace`] with a different (unitarily rotated) basis.
pub fn nullspace_gram_schmidt(a: &CMat, tol: f64) -> Result<CMat, ReductionError> {
    let n = a.ncols();
    let scale = linalg::frobenius(a).max(f64::MIN_POSITIVE);
    let mut kept: Vec<CVec> = Vec::new();
    let mut row_space = 0;
    let orthogonalise = |v: &mut CVec, basis: &[CVec]| {
        // two passes keep the basis orthonormal to machine precision
        for _ in 0..2 {
            for q in basis {
                let proj = q.dotc(v);
                *v -= q * proj;
            }
        }
    };
    for r in 0..a.nrows() {
        let mut v: CVec = a.row(r).adjoint();
        orthogonalise(&mut v, &kept);
        let norm = linalg::vec_norm(&v);
        if norm > tol * scale {
            kept.push(v / c(norm));
            row_space += 1;
        }
    }
    let mut null = Vec::new();
    for i in 0..n {
        let mut v = CVec::zeros(n);
        v[i] = c(1.0);
        orthogonalise(&mut v, &kept);
        let norm = linalg::vec_norm(&v);
        if norm > 1e-6 {
            let q = v / c(norm);
            kept.push(q.clone());
            null.push(q);
        }
        if kept.len() == n {
            break;
        }
    }
    if null.is_empty() {
        return Err(ReductionError::EmptyNullspace { rank: row_space });
    }
    Ok(CMat::from_columns(&null))
}

/// Orthonormal bases of the three cancellation null spaces.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedSpace {
    /// `(n_a + n_b) x (n_a + n_b - 2)`, annihilates `[h_a, h_b]^H`.
    pub y_bar: CMat,
    /// `n_a x (n_a - 1)`, annihilates `h_aa^H`.
    pub x_ab: CMat,
    /// `n_b x (n_b - 1)`, annihilates `h_bb^H`.
    pub x_ba: CMat,
}

impl ReducedSpace {
    pub fn n_a(&self) -> usize {
        self.x_ab.nrows()
    }

    pub fn n_b(&self) -> usize {
        self.x_ba.nrows()
    }

    pub fn dim_w_ab(&self) -> usize {
        self.x_ab.ncols()
    }

    pub fn dim_w_ba(&self) -> usize {
        self.x_ba.ncols()
    }

    pub fn dim_v(&self) -> usize {
        self.y_bar.ncols()
    }
}

/// Problem data expressed in the reduced coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedChannels {
    pub hb_ab: CMat,
    pub hb_ba: CMat,
    pub hb_a_ek: Vec<CMat>,
    pub hb_b_ek: Vec<CMat>,
    pub hb_ek: Vec<CMat>,
    pub bb_a: CMat,
    pub bb_b: CMat,
}

impl ReducedChannels {
    pub fn k_er(&self) -> usize {
        self.hb_ek.len()
    }
}

/// `basis^H h`, snapped to zero when the projection is numerically nil.
fn project(basis: &CMat, h: &CVec) -> CVec {
    let g = basis.adjoint() * h;
    if linalg::vec_norm(&g) <= NULLSPACE_TOL * linalg::vec_norm(h) {
        CVec::zeros(basis.ncols())
    } else {
        g
    }
}

/// Builds the bases and the projected channel matrices.
pub fn build_reduced(channels: &ChannelSet) -> Result<(ReducedSpace, ReducedChannels), ReductionError> {
    build_reduced_with(channels, orthonormal_nullspace)
}

/// Same as [`build_reduced`] with a caller-chosen null-space routine.
pub fn build_reduced_with(
    channels: &ChannelSet,
    nullspace: impl Fn(&CMat, f64) -> Result<CMat, ReductionError>,
) -> Result<(ReducedSpace, ReducedChannels), ReductionError> {
    let (n_a, n_b) = (channels.n_a(), channels.n_b());
    if n_a < 2 || n_b < 2 {
        return Err(ReductionError::DegenerateChannel(format!(
            "need at least two transmit antennas per node (got {n_a}, {n_b})"
        )));
    }
    if linalg::vec_norm(&channels.h_aa) == 0.0 {
        return Err(ReductionError::DegenerateChannel("h_aa is zero".into()));
    }
    if linalg::vec_norm(&channels.h_bb) == 0.0 {
        return Err(ReductionError::DegenerateChannel("h_bb is zero".into()));
    }
    let (h_a, h_b) = (channels.h_a(), channels.h_b());
    let legit = CMat::from_columns(&[h_a.clone(), h_b.clone()]).adjoint();
    let y_bar = nullspace(&legit, NULLSPACE_TOL)?;
    if y_bar.ncols() != n_a + n_b - 2 {
        return Err(ReductionError::DegenerateChannel(format!(
            "[h_a, h_b] has rank {} instead of 2",
            n_a + n_b - y_bar.ncols()
        )));
    }
    let x_ab = nullspace(
        &CMat::from_row_slice(1, n_a, channels.h_aa.adjoint().as_slice()),
        NULLSPACE_TOL,
    )?;
    let x_ba = nullspace(
        &CMat::from_row_slice(1, n_b, channels.h_bb.adjoint().as_slice()),
        NULLSPACE_TOL,
    )?;
    if x_ab.ncols() != n_a - 1 || x_ba.ncols() != n_b - 1 {
        return Err(ReductionError::DegenerateChannel(
            "loopback channel null space has unexpected dimension".into(),
        ));
    }

    let hb_ab = linalg::outer(&project(&x_ab, &channels.h_ab));
    let hb_ba = linalg::outer(&project(&x_ba, &channels.h_ba));
    let mut hb_a_ek = Vec::with_capacity(channels.k_er());
    let mut hb_b_ek = Vec::with_capacity(channels.k_er());
    let mut hb_ek = Vec::with_capacity(channels.k_er());
    for (k, er) in channels.er.iter().enumerate() {
        hb_a_ek.push(linalg::outer(&project(&x_ab, &er.h_a)));
        hb_b_ek.push(linalg::outer(&project(&x_ba, &er.h_b)));
        hb_ek.push(linalg::outer(&project(&y_bar, &channels.h_e(k))));
    }
    let top = y_bar.rows(0, n_a).into_owned();
    let bottom = y_bar.rows(n_a, n_b).into_owned();
    let bb_a = top.adjoint() * &top;
    let bb_b = bottom.adjoint() * &bottom;

    Ok((
        ReducedSpace { y_bar, x_ab, x_ba },
        ReducedChannels {
            hb_ab,
            hb_ba,
            hb_a_ek,
            hb_b_ek,
            hb_ek,
            bb_a,
            bb_b,
        },
    ))
}

fn check_square(what: &'static str, m: &CMat, n: usize) -> Result<(), ReductionError> {
    if m.nrows() != n || m.ncols() != n {
        return Err(ReductionError::DimensionMismatch {
            what,
            expected: n,
            got_rows: m.nrows(),
            got_cols: m.ncols(),
        });
    }
    Ok(())
}

/// Full-dimension covariances `X W X^H` and `Y V Y^H`.
pub fn lift(
    reduced_w_ab: &CMat,
    reduced_w_ba: &CMat,
    reduced_v: &CMat,
    space: &ReducedSpace,
) -> Result<(CMat, CMat, CMat), ReductionError> {
    check_square("reduced w_ab", reduced_w_ab, space.dim_w_ab())?;
    check_square("reduced w_ba", reduced_w_ba, space.dim_w_ba())?;
    check_square("reduced v", reduced_v, space.dim_v())?;
    let w_ab = &space.x_ab * reduced_w_ab * space.x_ab.adjoint();
    let w_ba = &space.x_ba * reduced_w_ba * space.x_ba.adjoint();
    let v = &space.y_bar * reduced_v * space.y_bar.adjoint();
    Ok((
        linalg::hermitize(&w_ab),
        linalg::hermitize(&w_ba),
        linalg::hermitize(&v),
    ))
}

/// Inverse of [`lift`] on its range: `(X^H W X, X^H W X, Y^H V Y)`.
pub fn project_down(w_ab: &CMat, w_ba: &CMat, v: &CMat, space: &ReducedSpace) -> (CMat, CMat, CMat) {
    (
        space.x_ab.adjoint() * w_ab * &space.x_ab,
        space.x_ba.adjoint() * w_ba * &space.x_ba,
        space.y_bar.adjoint() * v * &space.y_bar,
    )
}
