//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails. Numeric arguments select a subset, e.g.
//! `cargo test --test acceptance -- 3 4`.

use std::process::Command;
use std::time::{Duration, Instant};

use fdswipt_core::conic::{self, SolverOptions};
use fdswipt_core::linalg::{self, CMat, CVec, C64};
use fdswipt_core::model::{dbm_to_watts, evaluate_rates, sample_channels, SystemConfig};
use fdswipt_core::oracle::{self, OracleGrid};
use fdswipt_core::reduction::{build_reduced, lift, project_down};
use fdswipt_core::search::{self, t_upper_bound, GridSpec};
use fdswipt_core::srm::{
    self, BeamformingSolution, PointOutcome, ResidualReport, SearchPoint, SrmContext, SrmError, OBJECTIVE_DRIFT_TOL,
    RECOVERY_TOL,
};
use fdswipt_harness::config::ExperimentConfig;
use fdswipt_harness::experiments::{self, RunOptions, SweepRow};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    passed: bool,
    detail: String,
}

impl Verdict {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self {
            passed,
            detail: detail.into(),
        }
    }
}

/// Certificate statistics over every subproblem solve checked.
#[derive(Default)]
struct CertificateLog {
    solves: usize,
    failures: Vec<String>,
}

impl CertificateLog {
    fn check(&mut self, ctx: &SrmContext, sol: &BeamformingSolution, opts: &SolverOptions) {
        self.solves += 1;
        let problem = ctx.build(sol.point);
        let blocks = sol.reduced_blocks();
        let kkt = conic::check_kkt(&problem, &blocks, &sol.certificate);
        let violation = srm::max_relative_violation(&problem, &blocks);
        let mut bad = Vec::new();
        if sol.certificate.gap > opts.gap_tol {
            bad.push(format!("gap {:e}", sol.certificate.gap));
        }
        if violation > 1e-9 {
            bad.push(format!("violation {violation:e}"));
        }
        for b in 0..blocks.len() {
            let c_star = srm::c_star(&problem, &sol.certificate, b);
            let bound = 1e-5 * linalg::frobenius(&c_star);
            if kkt.stationarity[b] > bound {
                bad.push(format!("stationarity[{b}] {:e} > {bound:e}", kkt.stationarity[b]));
            }
        }
        let comp = kkt
            .max_complementarity()
            .max(kkt.psd_complementarity.iter().copied().fold(0.0, f64::max));
        if comp > sol.certificate.gap {
            bad.push(format!("complementarity {comp:e} > gap {:e}", sol.certificate.gap));
        }
        if !bad.is_empty() {
            self.failures
                .push(format!("({}, {}): {}", sol.point.theta, sol.point.t, bad.join(", ")));
        }
    }
}

fn system(n: usize, k: usize, seed: u64, p_req_dbm: f64) -> SystemConfig {
    SystemConfig {
        n_a: n,
        n_b: n,
        k_er: k,
        seed,
        p_req: dbm_to_watts(p_req_dbm),
        ..SystemConfig::default()
    }
}

fn fmt_minutes(d: Duration) -> String {
    format!("{:.1} min", d.as_secs_f64() / 60.0)
}

fn workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn mean_and_se(row: &SweepRow) -> (f64, f64) {
    (
        row.mean_secrecy_nats.unwrap_or(f64::NAN),
        row.std_err.unwrap_or(f64::NAN),
    )
}

fn trend(rows: &[SweepRow], configs: &[(usize, usize)], elapsed: Duration) -> Verdict {
    let mut problems = Vec::new();
    let line = |c: (usize, usize)| -> Vec<&SweepRow> { rows.iter().filter(|r| (r.n_a, r.n_b) == c).collect() };
    for &c in configs {
        let pts = line(c);
        for w in pts.windows(2) {
            let ((m0, s0), (m1, s1)) = (mean_and_se(w[0]), mean_and_se(w[1]));
            let se = s0.hypot(s1);
            if !(m1 <= m0 + se) {
                problems.push(format!(
                    "{c:?} rises {:.4} > se {se:.4} at {} dBm",
                    m1 - m0,
                    w[1].p_req_dbm
                ));
            }
        }
    }
    for pair in configs.windows(2) {
        let (lo, hi) = (line(pair[0]), line(pair[1]));
        for (a, b) in lo.iter().zip(&hi) {
            let ((ma, sa), (mb, sb)) = (mean_and_se(a), mean_and_se(b));
            let se = sa.hypot(sb);
            if !(mb >= ma - se) {
                problems.push(format!(
                    "{:?} below {:?} by {:.4} > se {se:.4} at {} dBm",
                    pair[1],
                    pair[0],
                    ma - mb,
                    a.p_req_dbm
                ));
            }
        }
    }
    // The runtime target assumes 8 workers; scale the measured time linearly.
    let projected = elapsed.mul_f64(workers().min(8) as f64 / 8.0);
    if projected > Duration::from_secs(30 * 60) {
        problems.push(format!("projected 8-worker runtime {}", fmt_minutes(projected)));
    }
    let detail = format!(
        "{} rows, {} on {} worker(s), projected {} on 8",
        rows.len(),
        fmt_minutes(elapsed),
        workers(),
        fmt_minutes(projected)
    );
    Verdict::new(
        problems.is_empty(),
        if problems.is_empty() {
            detail
        } else {
            format!("{detail}; {}", problems.join("; "))
        },
    )
}

/// Average per-dBm drop over the sweep and its standard error.
fn average_drop(rows: &[SweepRow], c: (usize, usize)) -> (f64, f64) {
    let pts: Vec<&SweepRow> = rows.iter().filter(|r| (r.n_a, r.n_b) == c).collect();
    let (first, last) = (pts[0], pts[pts.len() - 1]);
    let span = last.p_req_dbm - first.p_req_dbm;
    let ((m0, s0), (m1, s1)) = (mean_and_se(first), mean_and_se(last));
    ((m0 - m1) / span, s0.hypot(s1) / span)
}

fn diminishing_slope(rows: &[SweepRow], configs: &[(usize, usize)]) -> Verdict {
    let drops: Vec<(f64, f64)> = configs.iter().map(|&c| average_drop(rows, c)).collect();
    let mut ok = true;
    for w in drops.windows(2) {
        let ((da, sa), (db, sb)) = (w[0], w[1]);
        ok &= db + sa.hypot(sb) < da;
    }
    let detail = configs
        .iter()
        .zip(&drops)
        .map(|(c, (d, s))| format!("{c:?} {d:.4} +- {s:.4}"))
        .collect::<Vec<_>>()
        .join(", ");
    Verdict::new(ok, format!("drop per dBm: {detail}"))
}

fn rank_one_recovery(certs: &mut CertificateLog) -> Verdict {
    let base = SystemConfig::default();
    let opts = SolverOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut solved, mut good, mut certified_failures, mut bad) = (0usize, 0usize, 0usize, Vec::new());
    let mut trial = 0;
    while solved < 500 {
        let Some((ctx, _)) = experiments::feasible_draw(&base, trial).expect("draw") else {
            trial += 1;
            continue;
        };
        trial += 1;
        let t_max = t_upper_bound(&ctx.channels, &ctx.config);
        for _ in 0..5 {
            let point = SearchPoint {
                theta: rng.gen_range(0.02..0.98),
                t: t_max * rng.gen_range(0.05..1.0),
            };
            let PointOutcome::Solved(sol) = ctx.solve_point(point, None, &opts).expect("solve") else {
                continue;
            };
            solved += 1;
            certs.check(&ctx, &sol, &opts);
            match ctx.recover_rank_one(&sol) {
                Ok(rec) => {
                    let info = rec.recovery.as_ref().expect("recovery info");
                    let check = ctx.evaluate(&rec).expect("evaluate");
                    if rec.ranks.iter().all(|&r| r <= 1)
                        && info.max_violation <= RECOVERY_TOL
                        && info.objective_drift <= OBJECTIVE_DRIFT_TOL
                        && check.residuals.satisfied(&ctx.config, RECOVERY_TOL)
                    {
                        good += 1;
                    } else {
                        bad.push(format!(
                            "trial {} ({:.3}, {:.3}): {info:?}",
                            trial - 1,
                            point.theta,
                            point.t
                        ));
                    }
                }
                Err(SrmError::RecoveryFailed(_)) => certified_failures += 1,
                Err(e) => bad.push(format!("trial {}: {e}", trial - 1)),
            }
        }
    }
    let share = good as f64 / solved as f64;
    let mut detail = format!(
        "{good}/{solved} rank-one ({:.2}%), {certified_failures} RecoveryFailed",
        100.0 * share
    );
    if !bad.is_empty() {
        detail += &format!("; {} silent bad: {}", bad.len(), bad[0]);
    }
    Verdict::new(share >= 0.99 && bad.is_empty(), detail)
}

fn oracle_equivalence(certs: &mut CertificateLog) -> Verdict {
    let start = Instant::now();
    let opts = SolverOptions::default();
    let grid = OracleGrid::default();
    let search_grid = GridSpec::default();
    let (mut compared, mut problems) = (0usize, Vec::new());
    let mut worst_search: f64 = 0.0;
    for seed in 0..20 {
        let ctx = SrmContext::new(
            sample_channels(&system(2, 1, seed, -10.0), 0),
            system(2, 1, seed, -10.0),
        )
        .expect("context");
        let t_max = t_upper_bound(&ctx.channels, &ctx.config);
        for theta in [0.2, 0.5, 0.8] {
            for frac in [0.1, 0.4, 0.9] {
                let point = SearchPoint { theta, t: frac * t_max };
                let reference = oracle::brute_force(&ctx.reduced, &ctx.config, point, &grid).expect("oracle");
                match (ctx.solve_point(point, None, &opts).expect("solve"), reference) {
                    (PointOutcome::Solved(sol), Some(o)) => {
                        compared += 1;
                        certs.check(&ctx, &sol, &opts);
                        let upper = o.objective + 0.02 * (o.objective + point.t);
                        if !(sol.objective >= o.objective - 1e-6 && sol.objective <= upper) {
                            problems.push(format!(
                                "seed {seed} ({theta}, {:.3}): {} vs {}",
                                point.t, sol.objective, o.objective
                            ));
                        }
                    }
                    (PointOutcome::Infeasible(_), None) => {}
                    (PointOutcome::Solved(sol), None) => problems.push(format!(
                        "seed {seed} ({theta}, {:.3}): oracle infeasible, solver {}",
                        point.t, sol.objective
                    )),
                    (PointOutcome::Infeasible(_), Some(o)) => problems.push(format!(
                        "seed {seed} ({theta}, {:.3}): solver infeasible, oracle {}",
                        point.t, o.objective
                    )),
                }
            }
        }
        let result = search::optimize(&ctx.channels, &ctx.config, &search_grid).expect("search");
        let reference = oracle::brute_force_search(&ctx.channels, &ctx.config, &grid)
            .expect("oracle")
            .expect("oracle design");
        let spread = search::adjacent_spread(&ctx, &result, &search_grid, &opts).expect("spread");
        let diff = (result.secrecy_rate - reference.secrecy).abs();
        worst_search = worst_search.max(diff / spread.max(f64::MIN_POSITIVE));
        if diff > spread {
            problems.push(format!(
                "seed {seed}: search {} vs oracle {} (spread {spread:e})",
                result.secrecy_rate, reference.secrecy
            ));
        }
    }
    let elapsed = start.elapsed();
    if elapsed > Duration::from_secs(600) {
        problems.push(format!("runtime {}", fmt_minutes(elapsed)));
    }
    let detail = format!(
        "{compared}/180 points compared, worst search diff/spread {worst_search:.3}, {}",
        fmt_minutes(elapsed)
    );
    Verdict::new(
        problems.is_empty() && compared > 0,
        if problems.is_empty() {
            detail
        } else {
            format!("{detail}; {}", problems.join("; "))
        },
    )
}

fn random_psd(n: usize, scale: f64, rng: &mut ChaCha8Rng) -> CMat {
    let g = CMat::from_fn(n, n, |_, _| {
        C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    });
    let m = &g * g.adjoint();
    let tr = linalg::trace_re(&m);
    linalg::hermitize(&(m * C64::new(scale / tr, 0.0)))
}

fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

/// Worst normalised error of each invariant on one draw (each must be <= 1).
fn invariant_errors(n_a: usize, n_b: usize, k: usize, seed: u64, rng: &mut ChaCha8Rng) -> [f64; 5] {
    let cfg = SystemConfig {
        n_a,
        n_b,
        k_er: k,
        seed,
        ..SystemConfig::default()
    };
    let ch = sample_channels(&cfg, 0);
    let (space, reduced) = build_reduced(&ch).expect("reduction");

    let mut nullspace: f64 = 0.0;
    for (basis, rows) in [
        (&space.x_ab, vec![ch.h_aa.clone()]),
        (&space.x_ba, vec![ch.h_bb.clone()]),
        (&space.y_bar, vec![ch.h_a(), ch.h_b()]),
    ] {
        let gram = basis.adjoint() * basis;
        nullspace = nullspace.max(max_abs(&(gram - linalg::identity(basis.ncols()))) / 1e-10);
        for h in rows {
            let hit = h.adjoint() * basis;
            let worst = hit.iter().map(|x| x.norm()).fold(0.0, f64::max);
            nullspace = nullspace.max(worst / (1e-10 * linalg::vec_norm(&h)));
        }
    }

    let split = max_abs(&(&reduced.bb_a + &reduced.bb_b - linalg::identity(space.dim_v()))) / 1e-12;

    let w_ab = random_psd(space.dim_w_ab(), cfg.p_max_a / 2.0, rng);
    let w_ba = random_psd(space.dim_w_ba(), cfg.p_max_b / 2.0, rng);
    let v = random_psd(space.dim_v(), cfg.p_max_b / 2.0, rng);
    let (lw_ab, lw_ba, lv) = lift(&w_ab, &w_ba, &v, &space).expect("lift");
    let mut trace: f64 = 0.0;
    for (small, big) in [(&w_ab, &lw_ab), (&w_ba, &lw_ba), (&v, &lv)] {
        let (a, b) = (linalg::trace_re(small), linalg::trace_re(big));
        trace = trace.max((a - b).abs() / (1e-12 * a.abs()));
    }
    let (rw_ab, rw_ba, rv) = project_down(&lw_ab, &lw_ba, &lv, &space);
    for (back, orig) in [(rw_ab, &w_ab), (rw_ba, &w_ba), (rv, &v)] {
        trace = trace.max(max_abs(&(back - orig)) / (1e-12 * max_abs(orig)));
    }

    let r = ResidualReport::compute(&ch, &lw_ab, &lw_ba, &lv, &cfg);
    let scale = |h: &CVec, m: &CMat| 1e-9 * linalg::vec_norm(h).powi(2) * linalg::trace_re(m);
    let cancel = [
        r.an_at_a.abs() / scale(&ch.h_a(), &lv),
        r.an_at_b.abs() / scale(&ch.h_b(), &lv),
        r.lsi_a.abs() / scale(&ch.h_aa, &lw_ab),
        r.lsi_b.abs() / scale(&ch.h_bb, &lw_ba),
    ]
    .into_iter()
    .fold(0.0, f64::max);

    let mut phase = || C64::from_polar(1.0, rng.gen_range(0.0..std::f64::consts::TAU));
    let mut rotated = ch.clone();
    let (pa, pb) = (phase(), phase());
    rotated.h_aa *= pa;
    rotated.h_ba *= pa;
    rotated.h_ab *= pb;
    rotated.h_bb *= pb;
    for er in &mut rotated.er {
        let p = phase();
        er.h_a *= p;
        er.h_b *= p;
    }
    let a = evaluate_rates(&ch, &lw_ab, &lw_ba, &lv, &cfg).expect("rates");
    let b = evaluate_rates(&rotated, &lw_ab, &lw_ba, &lv, &cfg).expect("rates");
    let rel = |x: f64, y: f64| (x - y).abs() / (1e-12 * x.abs().max(1.0));
    let mut phase_err = rel(a.c_a, b.c_a)
        .max(rel(a.c_b, b.c_b))
        .max(rel(a.c_sec_raw, b.c_sec_raw));
    for j in 0..k {
        phase_err = phase_err
            .max(rel(a.c_ek[j], b.c_ek[j]))
            .max(rel(a.c_a_ek[j], b.c_a_ek[j]))
            .max(rel(a.c_b_ek[j], b.c_b_ek[j]));
    }
    [nullspace, cancel, split, phase_err, trace]
}

fn structural_invariants() -> Verdict {
    let names = ["nullspace", "cancellation", "power split", "phase invariance", "trace"];
    let mut worst = [0.0f64; 5];
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut draws = 0;
    for seed in 0..40u64 {
        for (n_a, n_b) in [(2, 3), (3, 3), (4, 4)] {
            let k = 1 + (seed as usize % 3);
            let errs = invariant_errors(n_a, n_b, k, seed, &mut rng);
            for (w, e) in worst.iter_mut().zip(errs) {
                *w = w.max(e);
            }
            draws += 1;
        }
    }
    let detail = names
        .iter()
        .zip(&worst)
        .map(|(n, w)| format!("{n} {w:.2e}"))
        .collect::<Vec<_>>()
        .join(", ");
    Verdict::new(
        worst.iter().all(|&w| w <= 1.0),
        format!("{draws} draws, worst error / tolerance: {detail}"),
    )
}

fn feasibility_boundary() -> Verdict {
    let grid = OracleGrid::default();
    let (mut checked, mut feasible, mut disagreements) = (0, 0, Vec::new());
    for seed in 0..20 {
        for p_req in [0.0, 1e-5, 1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1, 1.0, 1e6] {
            let config = SystemConfig {
                p_req,
                ..system(2, 1, seed, 0.0)
            };
            let ctx = SrmContext::new(sample_channels(&config, 0), config).expect("context");
            let solver = ctx.check_feasibility().expect("feasibility").is_feasible();
            let reference = oracle::feasibility(&ctx.reduced, &ctx.config, &grid).expect("oracle");
            checked += 1;
            feasible += usize::from(reference);
            if solver != reference {
                disagreements.push(format!(
                    "seed {seed} p_req {p_req}: solver {solver}, oracle {reference}"
                ));
            }
        }
    }
    let detail = format!(
        "{checked} verdicts ({feasible} feasible), {} disagreements",
        disagreements.len()
    );
    Verdict::new(
        disagreements.is_empty(),
        if disagreements.is_empty() {
            detail
        } else {
            format!("{detail}: {}", disagreements.join("; "))
        },
    )
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().expect("tempdir");
    let run = |name: &str, workers: &str| {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_fdswipt"))
            .args(["sweep", "--trials", "5", "--seed", "3", "--workers", workers, "--out"])
            .arg(&out)
            .output()
            .expect("binary runs");
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        ["sweep.csv", "trials.csv"].map(|f| std::fs::read(out.join(f)).expect("csv"))
    };
    let first = run("first", "1");
    let second = run("second", "1");
    let wide = run("wide", "8");
    let ok = first == second && first == wide;
    Verdict::new(
        ok,
        format!(
            "repeat run identical: {}, 1 vs 8 workers identical: {}",
            first == second,
            first == wide
        ),
    )
}

fn main() {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wants = |id: u32| selected.is_empty() || selected.contains(&id);
    let mut results: Vec<(u32, &str, Verdict)> = Vec::new();
    let mut report = |id: u32, name: &'static str, v: Verdict| {
        println!(
            "{} criterion {id} ({name}): {}",
            if v.passed { "PASS" } else { "FAIL" },
            v.detail
        );
        results.push((id, name, v));
    };

    if wants(6) {
        report(6, "structural invariants", structural_invariants());
    }
    if wants(7) {
        report(7, "feasibility boundary", feasibility_boundary());
    }
    let mut certs = CertificateLog::default();
    if wants(4) || wants(5) {
        report(4, "oracle equivalence", oracle_equivalence(&mut certs));
    }
    if wants(3) || wants(5) {
        report(3, "rank-one recovery", rank_one_recovery(&mut certs));
    }
    if wants(5) {
        certificates(&mut report, &certs);
    }
    if wants(8) {
        report(8, "determinism", determinism());
    }
    if wants(1) || wants(2) {
        sweep_criteria(&mut report);
    }

    let failed: Vec<u32> = results.iter().filter(|r| !r.2.passed).map(|r| r.0).collect();
    if failed.is_empty() {
        println!("all {} criteria passed", results.len());
    } else {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}

fn certificates(report: &mut impl FnMut(u32, &'static str, Verdict), certs: &CertificateLog) {
    let detail = format!(
        "{} subproblem solves, {} with defects",
        certs.solves,
        certs.failures.len()
    );
    report(
        5,
        "solver certificates",
        Verdict::new(
            certs.failures.is_empty() && certs.solves > 0,
            match certs.failures.first() {
                Some(f) => format!("{detail}; first: {f}"),
                None => detail,
            },
        ),
    );
}

fn sweep_criteria(report: &mut impl FnMut(u32, &'static str, Verdict)) {
    let dir = tempfile::tempdir().expect("tempdir");
    let config = ExperimentConfig {
        output_dir: dir.path().to_path_buf(),
        ..ExperimentConfig::default()
    };
    let start = Instant::now();
    let sweep = experiments::run_sweep(&config, RunOptions::default()).expect("sweep");
    let elapsed = start.elapsed();
    for r in &sweep.rows {
        println!(
            "  sweep {:>2} dBm ({}, {}): mean {:.4} se {:.4} n {} infeasible_rate {:.3}",
            r.p_req_dbm,
            r.n_a,
            r.n_b,
            r.mean_secrecy_nats.unwrap_or(f64::NAN),
            r.std_err.unwrap_or(f64::NAN),
            r.n_trials,
            r.infeasible_rate
        );
    }
    report(1, "secrecy trend", trend(&sweep.rows, &config.antenna_configs, elapsed));
    report(
        2,
        "diminishing slope",
        diminishing_slope(&sweep.rows, &config.antenna_configs),
    );
}
