//! Physical system description, Rayleigh channel sampling and the closed-form
//! rate and harvested-energy expressions of the FD-SWIPT link.
//!
//! All rates are in nats (natural logarithm). A node's transmit covariance
//! matrices are `w_ab` (FD-BST information beam towards the FD-UE), `w_ba`
//! (FD-UE information beam towards the FD-BST) and the joint artificial-noise
//! covariance `v` over all `n_a + n_b` transmit antennas.

use nalgebra::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, CMat, CVec};

/// Eigenvalues down to this value are treated as numerical dust and clamped.
pub const PSD_CLAMP_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid system configuration: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{what} is not positive semidefinite (min eigenvalue {min_eig:e})")]
    NotPositiveSemidefinite { what: &'static str, min_eig: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DbScale {
    /// Plain power ratio, `10^(x/10)`.
    PowerRatio,
    /// dBm, converted to watts.
    Milliwatt,
}

pub fn db_to_linear(x: f64, scale: DbScale) -> f64 {
    match scale {
        DbScale::PowerRatio => 10f64.powf(x / 10.0),
        DbScale::Milliwatt => 10f64.powf(x / 10.0) / 1000.0,
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm, DbScale::Milliwatt)
}

/// Physical parameters of one FD-SWIPT deployment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    /// FD-BST transmit antennas.
    pub n_a: usize,
    /// FD-UE transmit antennas.
    pub n_b: usize,
    /// Number of energy receivers (each a potential eavesdropper).
    pub k_er: usize,
    /// FD-BST power budget (W).
    pub p_max_a: f64,
    /// FD-UE power budget (W).
    pub p_max_b: f64,
    /// Harvested power required at every ER (W).
    pub p_req: f64,
    /// Harvester efficiency.
    pub eta: f64,
    pub sigma2_a: f64,
    pub sigma2_b: f64,
    pub sigma2_e: f64,
    pub pl_direct_db: f64,
    pub pl_er_db: f64,
    pub pl_lsi_db: f64,
    pub seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            n_a: 3,
            n_b: 3,
            k_er: 3,
            p_max_a: dbm_to_watts(23.0),
            p_max_b: dbm_to_watts(20.0),
            p_req: dbm_to_watts(2.0),
            eta: 0.5,
            sigma2_a: 1e-9,
            sigma2_b: 1e-9,
            sigma2_e: 1e-9,
            pl_direct_db: -35.0,
            pl_er_db: -20.0,
            pl_lsi_db: -20.0,
            seed: 1,
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidConfig(msg));
        if self.n_a < 2 || self.n_b < 2 {
            return bad(format!(
                "n_a and n_b must be at least 2 (got {} and {})",
                self.n_a, self.n_b
            ));
        }
        if self.k_er < 1 {
            return bad("k_er must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return bad(format!("eta must lie in [0, 1] (got {})", self.eta));
        }
        let nonneg = [
            ("p_max_a", self.p_max_a),
            ("p_max_b", self.p_max_b),
            ("p_req", self.p_req),
            ("sigma2_a", self.sigma2_a),
            ("sigma2_b", self.sigma2_b),
            ("sigma2_e", self.sigma2_e),
        ];
        for (name, value) in nonneg {
            if !(value >= 0.0) || !value.is_finite() {
                return bad(format!("{name} must be finite and non-negative (got {value})"));
            }
        }
        for (name, value) in [
            ("pl_direct_db", self.pl_direct_db),
            ("pl_er_db", self.pl_er_db),
            ("pl_lsi_db", self.pl_lsi_db),
        ] {
            if value.is_nan() || value == f64::INFINITY {
                return bad(format!("{name} must be a finite dB value or -inf (got {value})"));
            }
        }
        Ok(())
    }

    /// `P_req / eta`, the received power each ER must collect.
    pub fn required_received_power(&self) -> f64 {
        if self.p_req == 0.0 {
            0.0
        } else if self.eta == 0.0 {
            f64::INFINITY
        } else {
            self.p_req / self.eta
        }
    }
}

/// Channels from the FD-BST (`a`) and FD-UE (`b`) transmit arrays to one ER.
#[derive(Debug, Clone, PartialEq)]
pub struct ErChannel {
    pub h_a: CVec,
    pub h_b: CVec,
}

impl ErChannel {
    /// Stacked `[h_a; h_b]` of length `n_a + n_b`.
    pub fn stacked(&self) -> CVec {
        linalg::stack(&self.h_a, &self.h_b)
    }
}

/// One realisation of every channel vector in the system.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// Loopback channel of the FD-BST (its transmit array to its receive antenna).
    pub h_aa: CVec,
    /// FD-UE transmit array to the FD-BST receive antenna.
    pub h_ba: CVec,
    /// FD-BST transmit array to the FD-UE receive antenna.
    pub h_ab: CVec,
    /// Loopback channel of the FD-UE.
    pub h_bb: CVec,
    pub er: Vec<ErChannel>,
}

impl ChannelSet {
    pub fn n_a(&self) -> usize {
        self.h_aa.len()
    }

    pub fn n_b(&self) -> usize {
        self.h_bb.len()
    }

    pub fn k_er(&self) -> usize {
        self.er.len()
    }

    /// Everything the FD-BST receive antenna hears: `[h_aa; h_ba]`.
    pub fn h_a(&self) -> CVec {
        linalg::stack(&self.h_aa, &self.h_ba)
    }

    /// Everything the FD-UE receive antenna hears: `[h_ab; h_bb]`.
    pub fn h_b(&self) -> CVec {
        linalg::stack(&self.h_ab, &self.h_bb)
    }

    pub fn h_e(&self, k: usize) -> CVec {
        self.er[k].stacked()
    }

    /// Applies `f` to every channel vector (used by invariance tests).
    pub fn map_vectors(&self, mut f: impl FnMut(&CVec) -> CVec) -> ChannelSet {
        ChannelSet {
            h_aa: f(&self.h_aa),
            h_ba: f(&self.h_ba),
            h_ab: f(&self.h_ab),
            h_bb: f(&self.h_bb),
            er: self
                .er
                .iter()
                .map(|e| ErChannel {
                    h_a: f(&e.h_a),
                    h_b: f(&e.h_b),
                })
                .collect(),
        }
    }
}

/// Draws an i.i.d. circularly-symmetric complex Gaussian channel set.
///
/// The random stream is keyed by `(config.seed, trial_index)`, so draws are
/// independent of the order in which trials are evaluated.
pub fn sample_channels(config: &SystemConfig, trial_index: u64) -> ChannelSet {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(trial_index);
    let direct = db_to_linear(config.pl_direct_db, DbScale::PowerRatio);
    let er = db_to_linear(config.pl_er_db, DbScale::PowerRatio);
    let lsi = db_to_linear(config.pl_lsi_db, DbScale::PowerRatio);
    let mut draw = |len: usize, variance: f64| -> CVec {
        let scale = (variance / 2.0).sqrt();
        CVec::from_fn(len, |_, _| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex::new(scale * re, scale * im)
        })
    };
    let h_aa = draw(config.n_a, lsi);
    let h_ba = draw(config.n_b, direct);
    let h_ab = draw(config.n_a, direct);
    let h_bb = draw(config.n_b, lsi);
    let er = (0..config.k_er)
        .map(|_| ErChannel {
            h_a: draw(config.n_a, er),
            h_b: draw(config.n_b, er),
        })
        .collect();
    ChannelSet {
        h_aa,
        h_ba,
        h_ab,
        h_bb,
        er,
    }
}

/// Every rate and harvested-energy figure for one transmit design.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    /// Rate decoded at the FD-BST (from the FD-UE).
    pub c_a: f64,
    /// Rate decoded at the FD-UE (from the FD-BST).
    pub c_b: f64,
    /// Sum rate an ER can decode jointly.
    pub c_ek: Vec<f64>,
    /// Rate of the FD-UE stream at the ER, FD-BST stream treated as noise.
    pub c_a_ek: Vec<f64>,
    /// Rate of the FD-BST stream at the ER, FD-UE stream treated as noise.
    pub c_b_ek: Vec<f64>,
    /// Harvested power (W).
    pub e_k: Vec<f64>,
    pub c_sec_raw: f64,
    pub c_sec_reported: f64,
}

impl RateReport {
    pub fn in_bits(nats: f64) -> f64 {
        nats / std::f64::consts::LN_2
    }
}

/// `ln(1 + num/den)` with the zero-signal case pinned to 0.
fn log_ratio(num: f64, den: f64) -> f64 {
    if num <= 0.0 {
        0.0
    } else {
        (num / den).ln_1p()
    }
}

/// Eq. (8) style secrecy: legitimate sum rate minus the worst leakage envelope.
pub fn secrecy_from_parts(c_a: f64, c_b: f64, c_a_ek: &[f64], c_b_ek: &[f64], c_ek: &[f64]) -> f64 {
    let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let split = max(c_a_ek) + max(c_b_ek);
    let joint = max(c_ek);
    c_a + c_b - split.max(joint)
}

/// Recomputes the raw secrecy rate of a report.
pub fn secrecy_rate(report: &RateReport) -> f64 {
    secrecy_from_parts(report.c_a, report.c_b, &report.c_a_ek, &report.c_b_ek, &report.c_ek)
}

fn checked_psd(what: &'static str, m: &CMat, dim: usize) -> Result<CMat, ModelError> {
    if m.nrows() != dim || m.ncols() != dim {
        return Err(ModelError::DimensionMismatch {
            what,
            expected: dim,
            got: m.nrows().max(m.ncols()),
        });
    }
    let min_eig = linalg::min_eigenvalue(m);
    if min_eig < -PSD_CLAMP_TOL {
        return Err(ModelError::NotPositiveSemidefinite { what, min_eig });
    }
    Ok(if min_eig < 0.0 {
        linalg::clamp_psd(m)
    } else {
        linalg::hermitize(m)
    })
}

/// `h^H W h`, or zero when it is below the rounding error of the product, so
/// that interference cancelled to machine precision contributes nothing.
fn resolved_quad(h: &CVec, w: &CMat) -> f64 {
    let q = linalg::quad(h, w);
    let floor = 4.0 * h.len() as f64 * f64::EPSILON * linalg::vec_norm(h).powi(2) * linalg::frobenius(w);
    if q.abs() <= floor {
        0.0
    } else {
        q
    }
}

/// Evaluates every rate and harvested-energy expression for a design.
pub fn evaluate_rates(
    channels: &ChannelSet,
    w_ab: &CMat,
    w_ba: &CMat,
    v: &CMat,
    config: &SystemConfig,
) -> Result<RateReport, ModelError> {
    let (n_a, n_b) = (channels.n_a(), channels.n_b());
    let w_ab = checked_psd("w_ab", w_ab, n_a)?;
    let w_ba = checked_psd("w_ba", w_ba, n_b)?;
    let v = checked_psd("v", v, n_a + n_b)?;

    let sig_at_a = resolved_quad(&channels.h_ba, &w_ba);
    let lsi_at_a = resolved_quad(&channels.h_aa, &w_ab);
    let an_at_a = resolved_quad(&channels.h_a(), &v);
    let c_a = log_ratio(sig_at_a, lsi_at_a + an_at_a + config.sigma2_a);

    let sig_at_b = resolved_quad(&channels.h_ab, &w_ab);
    let lsi_at_b = resolved_quad(&channels.h_bb, &w_ba);
    let an_at_b = resolved_quad(&channels.h_b(), &v);
    let c_b = log_ratio(sig_at_b, lsi_at_b + an_at_b + config.sigma2_b);

    let k = channels.k_er();
    let (mut c_ek, mut c_a_ek, mut c_b_ek, mut e_k) = (
        Vec::with_capacity(k),
        Vec::with_capacity(k),
        Vec::with_capacity(k),
        Vec::with_capacity(k),
    );
    for (idx, er) in channels.er.iter().enumerate() {
        let from_a = resolved_quad(&er.h_a, &w_ab);
        let from_b = resolved_quad(&er.h_b, &w_ba);
        let an = resolved_quad(&channels.h_e(idx), &v);
        let floor = an + config.sigma2_e;
        c_ek.push(log_ratio(from_a + from_b, floor));
        c_a_ek.push(log_ratio(from_b, from_a + floor));
        c_b_ek.push(log_ratio(from_a, from_b + floor));
        e_k.push(config.eta * (an + from_a + from_b + config.sigma2_e));
    }
    let c_sec_raw = secrecy_from_parts(c_a, c_b, &c_a_ek, &c_b_ek, &c_ek);
    Ok(RateReport {
        c_a,
        c_b,
        c_ek,
        c_a_ek,
        c_b_ek,
        e_k,
        c_sec_raw,
        c_sec_reported: c_sec_raw.max(0.0),
    })
}
