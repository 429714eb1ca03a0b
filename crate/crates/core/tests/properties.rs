use afsearch::activation::softmax_rows;
use afsearch::data::{synthetic, train_size, train_test_split, Scaler};
use afsearch::samplers::decode_continuous;
use afsearch::seed::{derive_seed, rng_from_seed};
use afsearch::stats::{af_frequency_table, format_score, median, permutation_test_medians, Position};
use afsearch::{registry, Architecture};
use ndarray::Array2;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_partitions_rows(n_per_class in 2usize..20, n_classes in 2usize..5, seed in any::<u64>()) {
        let ds = synthetic::gaussian_clusters(n_per_class, 3, n_classes, 0.5, 1);
        let split = train_test_split(&ds, &mut rng_from_seed(seed)).unwrap();
        let n = ds.n_samples();
        prop_assert_eq!(split.train.len(), train_size(n));
        prop_assert_eq!(split.train.len() + split.test.len(), n);
        prop_assert!(!split.test.is_empty());
        let mut all: Vec<usize> = split.train.iter().chain(&split.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn scaler_standardizes_fitted_rows(rows in proptest::collection::vec(proptest::collection::vec(-50.0f64..50.0, 3), 4..30)) {
        let n = rows.len();
        let x = Array2::from_shape_fn((n, 3), |(i, j)| rows[i][j]);
        let idx: Vec<usize> = (0..n).collect();
        let scaled = Scaler::fit(x.view(), &idx).unwrap().transform(x.view());
        for col in scaled.columns() {
            let mean = col.sum() / n as f64;
            prop_assert!(mean.abs() < 1e-9);
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            prop_assert!(var < 1.0 + 1e-9);
        }
    }

    #[test]
    fn softmax_rows_are_distributions(vals in proptest::collection::vec(-700.0f64..700.0, 1..40)) {
        let x = Array2::from_shape_vec((1, vals.len()), vals).unwrap();
        let s = softmax_rows(x.view());
        prop_assert!(s.iter().all(|v| v.is_finite() && *v >= 0.0));
        prop_assert!((s.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn decode_is_total(xs in proptest::collection::vec(prop_oneof![any::<f64>(), -1e3f64..1e3], 1..12), k in 1usize..60) {
        let d = decode_continuous(&xs, k);
        prop_assert_eq!(d.len(), xs.len());
        prop_assert!(d.iter().all(|&c| c < k));
    }

    #[test]
    fn frequencies_sum_to_one(archs in proptest::collection::vec(proptest::collection::vec(0usize..48, 5), 1..12)) {
        let archs: Vec<Architecture> = archs.iter().map(|a| Architecture::from_indices(a).unwrap()).collect();
        let table = af_frequency_table(&archs).unwrap();
        for pos in Position::ALL {
            let total: f64 = registry().iter().map(|&k| table.frequency(pos, k)).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn permutation_p_is_a_valid_probability(
        a in proptest::collection::vec(0.0f64..1.0, 2..8),
        b in proptest::collection::vec(0.0f64..1.0, 2..8),
        seed in any::<u64>(),
    ) {
        let r = permutation_test_medians(&a, &b, 200, &mut rng_from_seed(seed)).unwrap();
        prop_assert!(r.p_value > 0.0 && r.p_value <= 1.0);
        prop_assert!((r.observed - (median(&a).unwrap() - median(&b).unwrap()).abs()).abs() < 1e-15);
    }

    #[test]
    fn formatted_scores_round_trip(x in 0.0f64..=1.0) {
        let s = format_score(x);
        let back: f64 = s.parse().unwrap();
        prop_assert!((back - x).abs() <= 0.0005 + 1e-12);
        prop_assert!(!s.ends_with('.') && (!s.contains('.') || !s.ends_with('0')));
    }

    #[test]
    fn derived_seeds_separate_streams(base in any::<u64>(), i in 0u64..1000) {
        prop_assert_ne!(derive_seed(base, 1, i), derive_seed(base, 2, i));
        prop_assert_ne!(derive_seed(base, 1, i), derive_seed(base, 1, i + 1));
    }
}
