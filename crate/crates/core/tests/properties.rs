use ndarray::{Array2, Array3};
use proptest::prelude::*;
use ugcem::data::{collect_random, filter_region};
use ugcem::env::{EnvId, RegionSpec};
use ugcem::planner::{
    mean_return, particle_variance, penalized_return, select_elites, uncertainty, VarianceNormalizer,
};

/// Straight double loop over the particle axis.
fn naive_omega(states: &Array3<f64>, norm: &Array2<f64>) -> f64 {
    let (p, h1, sd) = states.dim();
    let mut acc = 0.0;
    for s in 0..sd {
        for t in 1..h1 {
            let mut mu = 0.0;
            for q in 0..p {
                mu += states[[q, t, s]];
            }
            mu /= p as f64;
            let mut var = 0.0;
            for q in 0..p {
                var += (states[[q, t, s]] - mu) * (states[[q, t, s]] - mu);
            }
            var /= p as f64;
            acc += var / norm[[s, t - 1]];
        }
    }
    acc / ((h1 - 1) * sd) as f64
}

fn tensor_and_norm() -> impl Strategy<Value = (Array3<f64>, Array2<f64>)> {
    (1usize..=16, 1usize..=10, 1usize..=6).prop_flat_map(|(p, h, sd)| {
        (
            prop::collection::vec(-10.0f64..10.0, p * (h + 1) * sd),
            prop::collection::vec(0.01f64..5.0, sd * h),
        )
            .prop_map(move |(v, n)| {
                (
                    Array3::from_shape_vec((p, h + 1, sd), v).unwrap(),
                    Array2::from_shape_vec((sd, h), n).unwrap(),
                )
            })
    })
}

fn normalizer(table: Array2<f64>) -> VarianceNormalizer {
    let (sd, h) = table.dim();
    VarianceNormalizer { mean_var: table, ..VarianceNormalizer::identity(sd, h) }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn omega_matches_naive_reference((states, table) in tensor_and_norm()) {
        let expected = naive_omega(&states, &table);
        let got = uncertainty(particle_variance(states.view()).view(), &normalizer(table)).unwrap();
        prop_assert!((got - expected).abs() <= 1e-12 * expected.abs().max(1.0), "{got} vs {expected}");
    }
}

proptest! {
    #[test]
    fn power_of_two_rescaling_divides_omega_exactly(
        (states, table) in tensor_and_norm(),
        k in -10i32..=10,
    ) {
        let c = 2f64.powi(k);
        let s2 = particle_variance(states.view());
        let base = uncertainty(s2.view(), &normalizer(table.clone())).unwrap();
        let scaled = uncertainty(s2.view(), &normalizer(table * c)).unwrap();
        prop_assert_eq!(scaled, base / c);
    }

    #[test]
    fn rescaling_preserves_candidate_ranking(
        seeds in prop::collection::vec(any::<u64>(), 2..12),
        c in 0.01f64..100.0,
    ) {
        let table = Array2::from_elem((2, 3), 0.7);
        let omegas = |t: &Array2<f64>| -> Vec<f64> {
            seeds.iter().map(|&s| {
                let states = Array3::from_shape_fn((4, 4, 2), |(q, t, d)| {
                    ugcem::seed::derive(s, &[q as u64, t as u64, d as u64]) as f64 / u64::MAX as f64
                });
                uncertainty(particle_variance(states.view()).view(), &normalizer(t.clone())).unwrap()
            }).collect()
        };
        let a = omegas(&table);
        let b = omegas(&(&table * c));
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((y * c - x).abs() <= 1e-12 * x.abs().max(1e-300));
        }
        let rank = |v: &[f64]| select_elites(&v.iter().map(|x| -x).collect::<Vec<_>>(), v.len());
        prop_assert_eq!(rank(&a), rank(&b));
    }

    #[test]
    fn beta_zero_elites_match_return_only_selection(
        rewards in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 6), 10..40),
        omegas in prop::collection::vec(0.0f64..10.0, 40),
        k in 1usize..10,
    ) {
        let n = rewards.len();
        let tensors: Vec<Array2<f64>> = rewards
            .iter()
            .map(|r| Array2::from_shape_vec((2, 3), r.clone()).unwrap())
            .collect();
        let penalized: Vec<f64> = (0..n).map(|i| penalized_return(tensors[i].view(), omegas[i], 0.0)).collect();
        let plain: Vec<f64> = tensors.iter().map(|t| mean_return(t.view())).collect();
        prop_assert_eq!(select_elites(&penalized, k), select_elites(&plain, k));
    }

    #[test]
    fn penalty_is_monotone_in_beta(
        r in prop::collection::vec(-5.0f64..5.0, 8),
        omega in 1e-6f64..10.0,
        b1 in 0.0f64..10.0,
        db in 0.0f64..10.0,
    ) {
        let t = Array2::from_shape_vec((4, 2), r).unwrap();
        prop_assert!(penalized_return(t.view(), omega, b1 + db) <= penalized_return(t.view(), omega, b1));
    }

    #[test]
    fn elites_dominate_non_elites(
        scores in prop::collection::vec(prop::sample::select(vec![-1.0, 0.0, 0.5, 1.0, 2.0, 3.0]), 1..60),
        k in 1usize..60,
    ) {
        let elites = select_elites(&scores, k);
        prop_assert_eq!(elites.len(), k.min(scores.len()));
        let min_elite = elites.iter().map(|&i| scores[i]).fold(f64::INFINITY, f64::min);
        for (i, &s) in scores.iter().enumerate() {
            if !elites.contains(&i) {
                prop_assert!(min_elite >= s);
                // Equal scores: lower index wins.
                if s == min_elite {
                    prop_assert!(elites.iter().all(|&e| scores[e] > s || e < i));
                }
            }
        }
    }

    #[test]
    fn filtering_is_idempotent_and_complete(seed in 0u64..500, threshold in -0.2f64..0.2) {
        let raw = collect_random(EnvId::Cartpole, 400, seed).unwrap();
        let region = RegionSpec::Cartpole { threshold };
        if let Ok(once) = filter_region(&raw, &region) {
            for t in once.iter() {
                prop_assert!(!region.contains(&t.obs) && !region.contains(&t.next_obs));
            }
            if !once.is_empty() {
                let twice = filter_region(&once, &region).unwrap();
                prop_assert_eq!(twice.to_text(), once.to_text());
            }
        }
    }
}
