use std::path::Path;
use std::process::{Command, Output};

use fdswipt_core::model::SystemConfig;
use fdswipt_core::search::{self, GridSpec, SearchOptions};
use fdswipt_harness::config::ExperimentConfig;
use fdswipt_harness::experiments::{self, fmt_num, RunOptions};

fn fdswipt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fdswipt"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn small_grid() -> GridSpec {
    GridSpec {
        theta_points: 9,
        t_points: 12,
        ..GridSpec::default()
    }
}

#[test]
fn missing_config_exits_with_two() {
    let out = fdswipt(&["--config", "/definitely/not/here.json", "feasibility"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_config_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(
        &path,
        "{\n  \"trials\": 2,\n  \"base\": {\n    \"n_a\": 3,\n    \"bogus\": 1\n  }\n}\n",
    )
    .unwrap();
    let out = fdswipt(&["--config", path.to_str().unwrap(), "sweep"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("bad.json:5:"), "{stderr}");
    assert!(stderr.contains("bogus"), "{stderr}");
}

#[test]
fn unknown_flag_exits_with_two() {
    assert_eq!(fdswipt(&["sweep", "--bogus"]).status.code(), Some(2));
    assert_eq!(fdswipt(&["--help"]).status.code(), Some(0));
}

#[test]
fn solve_prints_the_design_summary() {
    let out = fdswipt(&["solve", "--seed", "7", "--theta-points", "11", "--t-points", "20"]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    for key in [
        "secrecy_rate_nats",
        "theta_star",
        "t_star",
        "power_a",
        "energy[2]",
        "lsi_b",
    ] {
        assert!(stdout.contains(key), "missing {key} in\n{stdout}");
    }
}

#[test]
fn infeasible_verdict_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    std::fs::write(&path, "{\"base\": {\"p_req\": 1000000.0}}").unwrap();
    let cfg = path.to_str().unwrap();
    assert_eq!(fdswipt(&["--config", cfg, "feasibility"]).status.code(), Some(1));
    assert_eq!(fdswipt(&["--config", cfg, "solve"]).status.code(), Some(1));
    assert_eq!(fdswipt(&["feasibility", "--seed", "1"]).status.code(), Some(0));
}

#[test]
fn solve_writes_the_iterate_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let out = fdswipt(&[
        "solve",
        "--seed",
        "7",
        "--theta-points",
        "5",
        "--t-points",
        "8",
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&trace).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("iteration,barrier_weight,newton_decrement,objective")
    );
    assert!(lines.count() > 5);
}

#[test]
fn selftest_passes() {
    let out = fdswipt(&["selftest"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap()
}

#[test]
fn sweep_is_reproducible_and_well_formed() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig {
        p_req_sweep_dbm: vec![0.0, 6.0],
        antenna_configs: vec![(3, 3)],
        trials: 2,
        grid: small_grid(),
        output_dir: dir.path().join("a"),
        emit_plots: true,
        ..ExperimentConfig::default()
    };
    let a = experiments::run_sweep(&config, RunOptions::default()).unwrap();
    let b = experiments::run_sweep(
        &ExperimentConfig {
            output_dir: dir.path().join("b"),
            ..config.clone()
        },
        RunOptions {
            workers: Some(3),
            timing: false,
        },
    )
    .unwrap();
    assert_eq!(read(&a.sweep_csv), read(&b.sweep_csv));
    assert_eq!(read(&a.trials_csv), read(&b.trials_csv));
    assert!(a.plot.as_ref().unwrap().exists());

    let text = String::from_utf8(read(&a.sweep_csv)).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("p_req_dbm,n_a,n_b,mean_secrecy_nats,std_err,n_trials,infeasible_rate,mean_solve_ms")
    );
    assert_eq!(lines.count(), 2);
    for row in &a.rows {
        assert!(row.mean_solve_ms.is_none());
        let resamples: u32 = row.trials.iter().map(|t| t.resample_count).sum();
        let successes = row.trials.iter().filter(|t| t.feasible).count();
        assert_eq!(row.n_trials, successes);
        assert_eq!(
            row.infeasible_rate,
            f64::from(resamples) / (f64::from(resamples) + successes as f64)
        );
        for t in &row.trials {
            assert_eq!(t.feasible, t.secrecy_nats.is_some());
        }
    }
}

#[test]
fn timing_fills_the_solve_time_column() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig {
        p_req_sweep_dbm: vec![0.0],
        antenna_configs: vec![(3, 3)],
        trials: 1,
        grid: small_grid(),
        output_dir: dir.path().to_path_buf(),
        ..ExperimentConfig::default()
    };
    let report = experiments::run_sweep(
        &config,
        RunOptions {
            workers: None,
            timing: true,
        },
    )
    .unwrap();
    assert!(report.rows[0].mean_solve_ms.unwrap() > 0.0);
}

#[test]
fn surface_matches_the_search() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig {
        base: SystemConfig {
            seed: 1,
            ..SystemConfig::default()
        },
        grid: GridSpec {
            theta_points: 11,
            t_points: 20,
            ..GridSpec::default()
        },
        emit_plots: true,
        ..ExperimentConfig::default()
    };
    let path = dir.path().join("surface.csv");
    let report = experiments::run_surface(&config, &path, None).unwrap();
    assert!(path.with_extension("svg").exists());

    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# seed=1"));
    assert_eq!(lines.next(), Some("theta,t,objective"));
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    assert_eq!(rows.len(), 11 * 21);

    // Same draw through the pruned search with the same grid.
    let ctx = fdswipt_core::srm::SrmContext::new(report.channels.clone(), config.base.clone()).unwrap();
    let pruned = search::optimize_with(
        &ctx,
        &experiments::surface_grid(&config.grid),
        &SearchOptions::default(),
    )
    .unwrap();
    let max = report
        .result
        .surface
        .iter()
        .filter_map(|p| p.value.objective())
        .fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(max.to_bits(), pruned.best_objective.to_bits());
    assert!(rows.iter().any(|r| r[2] == fmt_num(pruned.best_objective)));

    // Feasible entries of every theta column form a suffix in t.
    for col in 0..11 {
        let feasible: Vec<bool> = (0..21).map(|r| !rows[r * 11 + col][2].is_empty()).collect();
        let first = feasible.iter().position(|&f| f).unwrap_or(feasible.len());
        assert!(feasible[first..].iter().all(|&f| f), "column {col}: {feasible:?}");
    }
}
