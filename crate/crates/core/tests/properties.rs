//! Property tests for the invariants that hold on every valid model.

#![allow(clippy::needless_range_loop)]

use fv_core::ctmc;
use fv_core::fv::simulate_fv;
use fv_core::genealogy::Genealogy;
use fv_core::model::{Distribution, FiniteChainModel};
use fv_core::pairchain;
use fv_core::stats;
use proptest::prelude::*;

/// Random valid chain: a communicating ring over `F` with extra random
/// interior rates and at least one positive kill rate.
fn arb_model() -> impl Strategy<Value = FiniteChainModel> {
    (2usize..=4)
        .prop_flat_map(|n| {
            let rates = proptest::collection::vec(0.0..4.0f64, n * n);
            let ring = proptest::collection::vec(0.2..3.0f64, n);
            let kills = proptest::collection::vec(0.0..2.0f64, n);
            (Just(n), rates, ring, kills, 0.2..3.0f64)
        })
        .prop_map(|(n, rates, ring, kills, kill0)| {
            let mut q = vec![vec![0.0; n + 1]; n + 1];
            for x in 1..=n {
                for y in 1..=n {
                    if x != y {
                        q[x][y] = rates[(x - 1) * n + (y - 1)];
                    }
                }
                // Ring edge keeps F communicating.
                let next = if x == n { 1 } else { x + 1 };
                q[x][next] += ring[x - 1];
                q[x][0] = kills[x - 1];
            }
            q[1][0] += kill0; // the cemetery is always reachable
            for x in 1..=n {
                q[x][x] = -(0..=n).filter(|&y| y != x).map(|y| q[x][y]).sum::<f64>();
            }
            FiniteChainModel::validate(q).expect("constructed model is valid")
        })
}

fn arb_simplex(len: usize) -> impl Strategy<Value = Distribution> {
    proptest::collection::vec(0.01..1.0f64, len)
        .prop_map(|w| Distribution::normalized(w).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transition_semigroup(model in arb_model(), s in 0.05..2.0f64, t in 0.05..2.0f64) {
        let ps = ctmc::transition_matrix(&model, s).unwrap();
        let pt = ctmc::transition_matrix(&model, t).unwrap();
        let pst = ctmc::transition_matrix(&model, s + t).unwrap();
        prop_assert!(ps.matmul(&pt).max_abs_diff(&pst) < 1e-9);
        for i in 0..model.n_states() {
            let sum: f64 = pst.row(i).iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn qsd_eigen_relations_and_positivity(model in arb_model()) {
        let r = ctmc::qsd(&model).unwrap();
        let qf = model.sub_generator();
        let left = qf.vecmul_left(r.nu.weights());
        for (i, &v) in left.iter().enumerate() {
            prop_assert!((v + r.lambda_inf * r.nu.get(i)).abs() < 1e-10);
        }
        let right = qf.vecmul_right(&r.phi);
        for (i, &v) in right.iter().enumerate() {
            prop_assert!((v + r.lambda_inf * r.phi[i]).abs() < 1e-10);
        }
        prop_assert!(r.lambda_inf > 0.0);
        prop_assert!(r.nu.weights().iter().all(|&w| w > 0.0));
        prop_assert!(r.phi.iter().all(|&w| w > 0.0));
    }

    #[test]
    fn lambda_is_flat_at_the_qsd(model in arb_model(), t in 0.0..10.0f64) {
        let r = ctmc::qsd(&model).unwrap();
        let l = ctmc::lambda_t(&model, &r.nu, t).unwrap();
        prop_assert!((l - r.lambda_inf).abs() < 1e-8);
    }

    #[test]
    fn qprocess_generator_is_conservative(model in arb_model()) {
        let qp = ctmc::qprocess_generator(&model).unwrap();
        let n = qp.generator.rows();
        for x in 0..n {
            let sum: f64 = qp.generator.row(x).iter().sum();
            prop_assert!(sum.abs() < 1e-10);
            for y in 0..n {
                if x != y {
                    prop_assert!(qp.generator[(x, y)] >= 0.0);
                }
            }
        }
    }

    #[test]
    fn pair_generator_invariants(model in arb_model()) {
        let pair = pairchain::product_generator(&model);
        let n = model.n_interior();
        for r in 0..n * n {
            let sum: f64 = pair.generator.row(r).iter().sum();
            prop_assert!(sum.abs() < 1e-12);
        }
        for x in 1..=n {
            for y in 1..=n {
                for u in 1..=n {
                    for v in 1..=n {
                        let a = pair.generator[(pair.flat_index(x, y), pair.flat_index(u, v))];
                        let b = pair.generator[(pair.flat_index(y, x), pair.flat_index(v, u))];
                        prop_assert!((a - b).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn race_symmetry_and_maximum_principle(model in arb_model()) {
        let race = pairchain::race_harmonic(&model).unwrap();
        let n = model.n_interior();
        for x in 1..=n {
            prop_assert!((race.prob_second_dies_first(x, x) - 0.5).abs() < 1e-9);
            for y in 1..=n {
                let f = race.prob_second_dies_first(x, y);
                prop_assert!((f + race.prob_second_dies_first(y, x) - 1.0).abs() < 1e-9);
                prop_assert!((-1e-12..=1.0 + 1e-12).contains(&f));
            }
        }
    }

    #[test]
    fn spine_marginal_is_a_distribution(model in arb_model()) {
        let spine = pairchain::spine_marginal(&model).unwrap();
        let sum: f64 = spine.weights().iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-10);
        prop_assert!(spine.weights().iter().all(|&w| w >= 0.0));
    }

    #[test]
    fn tv_is_a_metric_on_the_simplex(
        p in arb_simplex(4),
        q in arb_simplex(4),
        r in arb_simplex(4),
    ) {
        let d_pq = stats::tv_distance(&p, &q).unwrap();
        let d_qp = stats::tv_distance(&q, &p).unwrap();
        let d_pr = stats::tv_distance(&p, &r).unwrap();
        let d_rq = stats::tv_distance(&r, &q).unwrap();
        prop_assert!((d_pq - d_qp).abs() < 1e-15);
        prop_assert!(d_pq <= d_pr + d_rq + 1e-12);
        prop_assert!((0.0..=1.0).contains(&d_pq));
        prop_assert!(stats::tv_distance(&p, &p).unwrap() == 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn genealogy_invariants_on_random_runs(
        seed in 0u64..5000,
        n in 2usize..=5,
        horizon in 2.0..12.0f64,
    ) {
        let model = FiniteChainModel::validate(vec![
            vec![0.0, 0.0, 0.0],
            vec![4.0, -6.0, 2.0],
            vec![1.0, 6.0, -7.0],
        ])
        .unwrap();
        let init: Vec<usize> = (0..n).map(|i| 1 + i % 2).collect();
        let run = simulate_fv(&model, &init, horizon, seed).unwrap();
        let g = Genealogy::new(&run);

        for i in 0..n {
            let early = g.label_of(i, horizon / 3.0).unwrap();
            prop_assert!(early.events_strictly_increase());
            let late = g.label_of(i, horizon).unwrap();
            prop_assert!(late.events_strictly_increase());
        }
        // DHP closes at the particle's own state; chi(n,t,t) = n.
        for i in 0..n {
            let d = g.dhp(i, horizon).unwrap();
            prop_assert_eq!(d.chi_at(horizon), i);
            prop_assert_eq!(d.path.state_at(horizon), Some(run.state_of(i, horizon)));
        }
        // Spine prefixes nest in time.
        let s1 = g.extract_spine(horizon / 2.0).unwrap();
        let s2 = g.extract_spine(horizon).unwrap();
        prop_assert!(s1.label.is_prefix_of(&s2.label));
        prop_assert!(s1.mrca_time <= s2.mrca_time);
        // Branch times are event times inside the window.
        let event_times: Vec<f64> = run.events.iter().map(|e| e.tau).collect();
        for &b in &s2.branch_times {
            prop_assert!(event_times.contains(&b));
            prop_assert!(b <= s2.mrca_time);
        }
    }
}
