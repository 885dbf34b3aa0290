//! Quick cross-checks of the solver against the brute-force oracle on
//! two-antenna draws.

use fdswipt_core::conic::SolverOptions;
use fdswipt_core::model::{dbm_to_watts, sample_channels, SystemConfig};
use fdswipt_core::oracle::{self, OracleGrid};
use fdswipt_core::srm::{PointOutcome, SearchPoint, SrmContext};

use crate::experiments::ExperimentError;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn oracle_grid() -> OracleGrid {
    OracleGrid {
        power_steps: 20,
        angle_steps: 12,
        feasibility_angle_steps: 360,
    }
}

/// Runs the checks for `seeds` draws derived from `seed`.
pub fn run(seed: u64, seeds: u64) -> Result<Vec<Check>, ExperimentError> {
    let grid = oracle_grid();
    let opts = SolverOptions::default();
    let mut checks = Vec::new();
    for s in 0..seeds {
        let config = SystemConfig {
            n_a: 2,
            n_b: 2,
            k_er: 1,
            seed: seed.wrapping_add(s),
            p_req: dbm_to_watts(-10.0),
            ..SystemConfig::default()
        };
        let ctx = SrmContext::new(sample_channels(&config, 0), config)?;
        for (theta, t) in [(0.25, 0.5), (0.5, 1.0), (0.75, 2.0)] {
            let point = SearchPoint { theta, t };
            let reference = oracle::brute_force(&ctx.reduced, &ctx.config, point, &grid)?;
            let (passed, detail) = match (ctx.solve_point(point, None, &opts)?, reference) {
                (PointOutcome::Solved(sol), Some(o)) => (
                    sol.objective >= o.objective - 1e-6 && sol.objective <= o.objective + 0.02 * (o.objective + t),
                    format!("solver {:.6} oracle {:.6}", sol.objective, o.objective),
                ),
                (PointOutcome::Infeasible(_), None) => (true, "both infeasible".into()),
                (PointOutcome::Solved(sol), None) => (false, format!("solver {:.6}, oracle infeasible", sol.objective)),
                (PointOutcome::Infeasible(_), Some(o)) => {
                    (false, format!("solver infeasible, oracle {:.6}", o.objective))
                }
            };
            checks.push(Check {
                name: format!("draw {s} point ({theta}, {t})"),
                passed,
                detail,
            });
        }
        for p_req in [0.0, 1e-3, 1e-2, 1e6] {
            let mut c = ctx.clone();
            c.config.p_req = p_req;
            let solver = c.check_feasibility()?.is_feasible();
            let reference = oracle::feasibility(&c.reduced, &c.config, &grid)?;
            checks.push(Check {
                name: format!("draw {s} feasibility at p_req {p_req} W"),
                passed: solver == reference,
                detail: format!("solver {solver} oracle {reference}"),
            });
        }
    }
    Ok(checks)
}
