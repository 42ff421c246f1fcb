use fucb_core::functionals::{eval, sup_distance, ucb_bonus, EmpiricalCdf, FunctionalKind, FunctionalSpec};
use fucb_core::partition::{CubicPartition, Partition};
use fucb_core::policies::{default_beta, FUcbConfig, FUcbPolicy, Policy};
use fucb_core::rng::stream;
use proptest::prelude::*;

fn samples() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![0.0..=1.0f64, (0..=4u8).prop_map(|k| k as f64 / 4.0)], 1..60)
}

fn cdf(s: &[f64]) -> EmpiricalCdf {
    EmpiricalCdf::from_samples(0.0, 1.0, s).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn mean_is_lipschitz_in_sup_norm(f in samples(), g in samples()) {
        let spec = FunctionalSpec::mean(0.0, 1.0).unwrap();
        let (f, g) = (cdf(&f), cdf(&g));
        let diff = (spec.eval(&f).unwrap() - spec.eval(&g).unwrap()).abs();
        prop_assert!(diff <= sup_distance(&f, &g).unwrap() + 1e-12);
    }

    #[test]
    fn quantile_is_monotone_in_tau(s in samples(), t1 in 0.001..1.0f64, t2 in 0.001..1.0f64) {
        let f = cdf(&s);
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let q = |tau| eval(&FunctionalKind::Quantile { tau }, &f).unwrap();
        prop_assert!(q(lo) <= q(hi));
    }

    #[test]
    fn duplicating_samples_preserves_functionals(s in samples(), tau in 0.01..1.0f64) {
        let doubled: Vec<f64> = s.iter().chain(s.iter()).copied().collect();
        let (f, g) = (cdf(&s), cdf(&doubled));
        prop_assert_eq!(sup_distance(&f, &g).unwrap(), 0.0);
        let mean = |c: &EmpiricalCdf| eval(&FunctionalKind::Mean, c).unwrap();
        prop_assert!((mean(&f) - mean(&g)).abs() < 1e-12);
        let q = |c: &EmpiricalCdf| eval(&FunctionalKind::Quantile { tau }, c).unwrap();
        prop_assert_eq!(q(&f), q(&g));
    }

    #[test]
    fn sup_distance_is_a_metric(f in samples(), g in samples(), h in samples()) {
        let (f, g, h) = (cdf(&f), cdf(&g), cdf(&h));
        let d = |a: &EmpiricalCdf, b: &EmpiricalCdf| sup_distance(a, b).unwrap();
        prop_assert_eq!(d(&f, &f), 0.0);
        prop_assert_eq!(d(&f, &g), d(&g, &f));
        prop_assert!(d(&f, &h) <= d(&f, &g) + d(&g, &h) + 1e-12);
        prop_assert!((0.0..=1.0).contains(&d(&f, &g)));
    }

    #[test]
    fn bonus_grows_with_arrivals_and_shrinks_with_pulls(n in 1u64..100_000, s in 1u64..1000) {
        let b = |n, s| ucb_bonus(1.0, n, s, default_beta()).unwrap();
        prop_assert!(b(n + 1, s) >= b(n, s));
        prop_assert!(b(n, s + 1) <= b(n, s));
    }

    #[test]
    fn bin_index_is_consistent_with_cell_coords(p in 1usize..9, x in prop::collection::vec(0.0..=1.0f64, 1..4)) {
        let part = CubicPartition::new(p, x.len()).unwrap();
        let j = part.bin_index(&x).unwrap();
        prop_assert!(j < part.bin_count());
        prop_assert_eq!(part.cell_coords(j).unwrap(), part.cell_of(&x).unwrap());
    }

    #[test]
    fn single_bin_matches_covariate_ignoring(
        seq in prop::collection::vec((0.0..=1.0f64, prop::collection::vec(0.0..=1.0f64, 3)), 1..300)
    ) {
        let config = FUcbConfig::new(3, default_beta(), FunctionalSpec::mean(0.0, 1.0).unwrap(), (0.0, 1.0)).unwrap();
        let mut a = FUcbPolicy::new(config, CubicPartition::new(1, 1).unwrap());
        let mut b = FUcbPolicy::covariate_ignoring(config, 1).unwrap();
        let mut rng = stream(1, 1);
        for (x, y) in &seq {
            let x = [*x];
            let (ia, ib) = (a.assign(&x, &mut rng).unwrap(), b.assign(&x, &mut rng).unwrap());
            prop_assert_eq!(ia, ib);
            a.update(&x, ia, y[ia]).unwrap();
            b.update(&x, ib, y[ib]).unwrap();
        }
    }

    #[test]
    fn first_k_arrivals_per_bin_are_round_robin(
        k in 2usize..5,
        seq in prop::collection::vec((0.0..=1.0f64, 0.0..=1.0f64), 1..400)
    ) {
        let config = FUcbConfig::new(k, default_beta(), FunctionalSpec::mean(0.0, 1.0).unwrap(), (0.0, 1.0)).unwrap();
        let part = CubicPartition::new(4, 1).unwrap();
        let mut pol = FUcbPolicy::new(config, part);
        let mut rng = stream(2, 1);
        let mut seen = [0usize; 4];
        for (x, y) in &seq {
            let x = [*x];
            let bin = part.bin_index(&x).unwrap();
            let arm = pol.assign(&x, &mut rng).unwrap();
            if seen[bin] < k {
                prop_assert_eq!(arm, seen[bin]);
            }
            seen[bin] += 1;
            pol.update(&x, arm, *y).unwrap();
        }
        prop_assert_eq!(pol.total_observations(), seq.len() as u64);
    }
}
