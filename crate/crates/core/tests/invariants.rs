use fdswipt_core::linalg::{self, CMat, CVec, C64};
use fdswipt_core::model::{evaluate_rates, sample_channels, SystemConfig};
use fdswipt_core::reduction::{
    build_reduced, lift, nullspace_gram_schmidt, orthonormal_nullspace, project_down, NULLSPACE_TOL,
};
use fdswipt_core::srm::ResidualReport;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn config(n_a: usize, n_b: usize, k_er: usize, seed: u64) -> SystemConfig {
    SystemConfig {
        n_a,
        n_b,
        k_er,
        seed,
        ..SystemConfig::default()
    }
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

fn dims() -> impl Strategy<Value = (usize, usize, usize, u64, u64)> {
    (2usize..=4, 2usize..=4, 1usize..=3, any::<u64>(), 0u64..1000)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, ..ProptestConfig::default() })]

    #[test]
    fn nullspaces_are_orthonormal_and_annihilate((n_a, n_b, k, seed, trial) in dims()) {
        let ch = sample_channels(&config(n_a, n_b, k, seed), trial);
        let (space, _) = build_reduced(&ch).unwrap();
        for (basis, rows) in [
            (&space.x_ab, vec![ch.h_aa.clone()]),
            (&space.x_ba, vec![ch.h_bb.clone()]),
            (&space.y_bar, vec![ch.h_a(), ch.h_b()]),
        ] {
            let gram = basis.adjoint() * basis;
            prop_assert!(max_abs(&(gram - linalg::identity(basis.ncols()))) <= 1e-10);
            for h in rows {
                let hit = h.adjoint() * basis;
                prop_assert!(hit.iter().all(|x| x.norm() <= 1e-10 * linalg::vec_norm(&h)));
            }
        }
    }

    #[test]
    fn gram_schmidt_and_svd_span_the_same_space((n_a, n_b, k, seed, trial) in dims()) {
        let ch = sample_channels(&config(n_a, n_b, k, seed), trial);
        let legit = CMat::from_columns(&[ch.h_a(), ch.h_b()]).adjoint();
        let a = orthonormal_nullspace(&legit, NULLSPACE_TOL).unwrap();
        let b = nullspace_gram_schmidt(&legit, NULLSPACE_TOL).unwrap();
        let pa = &a * a.adjoint();
        let pb = &b * b.adjoint();
        prop_assert!(max_abs(&(pa - pb)) <= 1e-10);
    }

    #[test]
    fn power_split_matrices_sum_to_identity((n_a, n_b, k, seed, trial) in dims()) {
        let ch = sample_channels(&config(n_a, n_b, k, seed), trial);
        let (space, reduced) = build_reduced(&ch).unwrap();
        let sum = &reduced.bb_a + &reduced.bb_b;
        prop_assert!(max_abs(&(sum - linalg::identity(space.dim_v()))) <= 1e-12);
    }

    #[test]
    fn lifting_preserves_trace_and_round_trips((n_a, n_b, k, seed, trial) in dims(), draw in any::<u64>()) {
        let ch = sample_channels(&config(n_a, n_b, k, seed), trial);
        let (space, _) = build_reduced(&ch).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(draw);
        let w_ab = random_psd(space.dim_w_ab(), 0.2, &mut rng);
        let w_ba = random_psd(space.dim_w_ba(), 0.1, &mut rng);
        let v = random_psd(space.dim_v(), 0.05, &mut rng);
        let (lw_ab, lw_ba, lv) = lift(&w_ab, &w_ba, &v, &space).unwrap();
        for (small, big) in [(&w_ab, &lw_ab), (&w_ba, &lw_ba), (&v, &lv)] {
            let (a, b) = (linalg::trace_re(small), linalg::trace_re(big));
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300));
        }
        let (rw_ab, rw_ba, rv) = project_down(&lw_ab, &lw_ba, &lv, &space);
        prop_assert!(max_abs(&(rw_ab - &w_ab)) <= 1e-12 * max_abs(&w_ab));
        prop_assert!(max_abs(&(rw_ba - &w_ba)) <= 1e-12 * max_abs(&w_ba));
        prop_assert!(max_abs(&(rv - &v)) <= 1e-12 * max_abs(&v));
    }

    #[test]
    fn lifted_designs_cancel_self_interference((n_a, n_b, k, seed, trial) in dims(), draw in any::<u64>()) {
        let cfg = config(n_a, n_b, k, seed);
        let ch = sample_channels(&cfg, trial);
        let (space, _) = build_reduced(&ch).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(draw);
        let w_ab = random_psd(space.dim_w_ab(), cfg.p_max_a / 2.0, &mut rng);
        let w_ba = random_psd(space.dim_w_ba(), cfg.p_max_b / 2.0, &mut rng);
        let v = random_psd(space.dim_v(), cfg.p_max_b / 2.0, &mut rng);
        let (lw_ab, lw_ba, lv) = lift(&w_ab, &w_ba, &v, &space).unwrap();
        let r = ResidualReport::compute(&ch, &lw_ab, &lw_ba, &lv, &cfg);
        let scale = |h: &CVec, m: &CMat| linalg::vec_norm(h).powi(2) * linalg::trace_re(m);
        prop_assert!(r.an_at_a.abs() <= 1e-9 * scale(&ch.h_a(), &lv));
        prop_assert!(r.an_at_b.abs() <= 1e-9 * scale(&ch.h_b(), &lv));
        prop_assert!(r.lsi_a.abs() <= 1e-9 * scale(&ch.h_aa, &lw_ab));
        prop_assert!(r.lsi_b.abs() <= 1e-9 * scale(&ch.h_bb, &lw_ba));
    }

    #[test]
    fn rates_are_phase_invariant((n_a, n_b, k, seed, trial) in dims(), draw in any::<u64>()) {
        let cfg = config(n_a, n_b, k, seed);
        let ch = sample_channels(&cfg, trial);
        let mut rng = ChaCha8Rng::seed_from_u64(draw);
        let w_ab = random_psd(n_a, cfg.p_max_a / 2.0, &mut rng);
        let w_ba = random_psd(n_b, cfg.p_max_b / 2.0, &mut rng);
        let v = random_psd(n_a + n_b, 1e-3, &mut rng);
        // One common phase per receive antenna.
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
        let a = evaluate_rates(&ch, &w_ab, &w_ba, &v, &cfg).unwrap();
        let b = evaluate_rates(&rotated, &w_ab, &w_ba, &v, &cfg).unwrap();
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * x.abs().max(1.0);
        prop_assert!(close(a.c_a, b.c_a) && close(a.c_b, b.c_b) && close(a.c_sec_raw, b.c_sec_raw));
        for j in 0..k {
            prop_assert!(close(a.c_ek[j], b.c_ek[j]));
            prop_assert!(close(a.c_a_ek[j], b.c_a_ek[j]));
            prop_assert!(close(a.c_b_ek[j], b.c_b_ek[j]));
        }
    }

    #[test]
    fn rates_of_lifted_designs_are_phase_invariant((n_a, n_b, k, seed, trial) in dims(), draw in any::<u64>()) {
        let cfg = config(n_a, n_b, k, seed);
        let ch = sample_channels(&cfg, trial);
        let (space, _) = build_reduced(&ch).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(draw);
        let w_ab = random_psd(space.dim_w_ab(), cfg.p_max_a / 2.0, &mut rng);
        let w_ba = random_psd(space.dim_w_ba(), cfg.p_max_b / 2.0, &mut rng);
        let v = random_psd(space.dim_v(), cfg.p_max_b / 2.0, &mut rng);
        let (w_ab, w_ba, v) = lift(&w_ab, &w_ba, &v, &space).unwrap();
        let mut rotated = ch.clone();
        let p = C64::from_polar(1.0, rng.gen_range(0.0..std::f64::consts::TAU));
        rotated.h_aa *= p;
        rotated.h_ba *= p;
        let a = evaluate_rates(&ch, &w_ab, &w_ba, &v, &cfg).unwrap();
        let b = evaluate_rates(&rotated, &w_ab, &w_ba, &v, &cfg).unwrap();
        prop_assert!((a.c_a - b.c_a).abs() <= 1e-12 * a.c_a.abs().max(1.0));
        prop_assert!((a.c_sec_raw - b.c_sec_raw).abs() <= 1e-12 * a.c_sec_raw.abs().max(1.0));
    }

    #[test]
    fn harvested_energy_matches_received_power((n_a, n_b, k, seed, trial) in dims(), draw in any::<u64>()) {
        let cfg = config(n_a, n_b, k, seed);
        let ch = sample_channels(&cfg, trial);
        let mut rng = ChaCha8Rng::seed_from_u64(draw);
        let w_ab = random_psd(n_a, cfg.p_max_a, &mut rng);
        let w_ba = random_psd(n_b, cfg.p_max_b, &mut rng);
        let v = random_psd(n_a + n_b, 1e-2, &mut rng);
        let r = evaluate_rates(&ch, &w_ab, &w_ba, &v, &cfg).unwrap();
        let mut w = CMat::zeros(n_a + n_b, n_a + n_b);
        w.view_mut((0, 0), (n_a, n_a)).copy_from(&w_ab);
        w.view_mut((n_a, n_a), (n_b, n_b)).copy_from(&w_ba);
        let total = w + &v;
        for j in 0..k {
            let expect = cfg.eta * (linalg::quad(&ch.h_e(j), &total) + cfg.sigma2_e);
            prop_assert!((r.e_k[j] - expect).abs() <= 1e-12 * expect);
        }
    }
}
