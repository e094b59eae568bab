use nalgebra::DMatrix;
use proptest::prelude::*;

use srbkit::cocycle::kato_gap;
use srbkit::dynsys::{wrap_unit, DynamicalSystem, FatCat, Solenoid};
use srbkit::symbolic::{spectral_decomposition, TransitionMatrix};
use srbkit::thermo::{pressure_gibbs, Potential, Sft};

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-1.0..1.0f64, rows * cols).prop_map(move |v| DMatrix::from_vec(rows, cols, v))
}

fn zero_one(n: usize) -> impl Strategy<Value = Vec<Vec<u8>>> {
    prop::collection::vec(prop::collection::vec(0u8..2, n), n)
}

fn pair_potential(values: &[f64]) -> Potential {
    let sft = Sft::full(2);
    Potential::from_fn(&sft, 2, |w| values[2 * w[0] + w[1]]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kato_gap_is_a_symmetric_bounded_metric(e in matrix(4, 2), f in matrix(4, 2)) {
        prop_assume!(e.rank(1e-6) == 2 && f.rank(1e-6) == 2);
        let ef = kato_gap(&e, &f).unwrap();
        let fe = kato_gap(&f, &e).unwrap();
        prop_assert!((ef - fe).abs() < 1e-12);
        prop_assert!((0.0..=2f64.sqrt() + 1e-12).contains(&ef));
    }

    #[test]
    fn kato_gap_ignores_the_basis(e in matrix(3, 2), m in matrix(2, 2)) {
        prop_assume!(e.rank(1e-6) == 2 && m.determinant().abs() > 1e-3);
        prop_assert!(kato_gap(&e, &(&e * &m)).unwrap() < 1e-7);
    }

    #[test]
    fn wrap_unit_lands_in_the_unit_interval(v in -1e6..1e6f64) {
        let w = wrap_unit(v);
        prop_assert!((0.0..1.0).contains(&w));
        prop_assert!(((v - w) - (v - w).round()).abs() < 1e-6);
    }

    #[test]
    fn pressure_shifts_with_constants(values in prop::collection::vec(-1.0..1.0f64, 4), c in -2.0..2.0f64) {
        let sft = Sft::full(2);
        let phi = pair_potential(&values);
        let p = pressure_gibbs(&sft, &phi).unwrap().pressure;
        let q = pressure_gibbs(&sft, &phi.shifted(c)).unwrap().pressure;
        prop_assert!((q - p - c).abs() < 1e-10);
    }

    #[test]
    fn pressure_is_monotone(values in prop::collection::vec(-1.0..1.0f64, 4), bump in prop::collection::vec(0.0..0.5f64, 4)) {
        let sft = Sft::full(2);
        let larger: Vec<f64> = values.iter().zip(&bump).map(|(v, b)| v + b).collect();
        let p = pressure_gibbs(&sft, &pair_potential(&values)).unwrap().pressure;
        let q = pressure_gibbs(&sft, &pair_potential(&larger)).unwrap().pressure;
        prop_assert!(q >= p - 1e-12);
        // Bounded by the extreme potential values plus the entropy log 2.
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(p >= lo + 2f64.ln() - 1e-12 && p <= hi + 2f64.ln() + 1e-12);
    }

    #[test]
    fn spectral_decomposition_partitions_the_states(a in zero_one(6)) {
        let d = spectral_decomposition(&a);
        let mut seen: Vec<usize> = d.wandering.clone();
        for c in &d.components {
            seen.extend(&c.states);
            prop_assert_eq!(c.cyclic_classes.len(), c.period);
            // Each edge inside a component advances the cyclic class by one.
            let class_of = |s: usize| c.cyclic_classes.iter().position(|cl| cl.contains(&s)).unwrap();
            for &i in &c.states {
                for &j in &c.states {
                    if a[i][j] == 1 {
                        prop_assert_eq!(class_of(j), (class_of(i) + 1) % c.period);
                    }
                }
            }
        }
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn entropy_is_at_most_log_alphabet(a in zero_one(5)) {
        prop_assume!(a.iter().all(|r| r.contains(&1)));
        if let Ok(t) = TransitionMatrix::from_rows(a) {
            prop_assert!(t.entropy() <= 5f64.ln() + 1e-9);
        }
    }

    #[test]
    fn solenoid_maps_histories_to_histories(theta in 0.01..0.99f64, word in prop::collection::vec(0usize..2, 0..6), warped in any::<bool>()) {
        let sys = if warped { Solenoid::warped() } else { Solenoid::classic() };
        let x = sys.point_with_history(theta, &word);
        let b = usize::from(theta >= sys.circle_preimages(0.0)[1]);
        let mut longer = vec![b];
        longer.extend(&word);
        let y = sys.point_with_history(sys.circle_map(theta), &longer);
        prop_assert!(sys.distance(sys.map(&x).as_slice(), y.as_slice()) < 1e-9);
    }

    #[test]
    fn fat_cat_periodic_counts_are_traces(n in 1u32..20) {
        let l = FatCat::lambda_max();
        let exact = l.powi(n as i32) + l.powi(-(n as i32)) - 2.0;
        prop_assert!((FatCat::periodic_count(n) as f64 - exact).abs() < 1e-6 * exact.max(1.0));
    }
}
