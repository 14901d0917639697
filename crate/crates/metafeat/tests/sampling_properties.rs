//! Property tests for batch sampling invariants and normalization.

use metafeat::dataset::{normalize_columns, TabularDataset};
use metafeat::sampling::{sample_batch, INSTANCE_LEVELS};
use ndnet::Tensor;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn arbitrary_dataset(n: usize, m: usize, t: usize, seed: u64) -> TabularDataset {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Tensor::from_vec(n, m, (0..n * m).map(|_| rng.gen_range(0.0..=1.0)).collect());
    let mut y = Tensor::zeros(n, t);
    for r in 0..n {
        // Ensure every class appears at least once for small n as well.
        let c = if r < t { r } else { rng.gen_range(0..t) };
        y.set(r, c, 1.0);
    }
    TabularDataset::new(format!("p{seed}"), x, y, None).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn sampled_batches_satisfy_invariants(
        n in 16usize..512,
        m in 1usize..10,
        t in 2usize..9,
        seed in 0u64..1_000_000,
    ) {
        let ds = arbitrary_dataset(n, m, t, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xD00D);
        let batch = sample_batch(&ds, &mut rng);

        // Instance count is an admissible level (clamped to N).
        let n_sub = batch.n_instances();
        prop_assert!(
            INSTANCE_LEVELS.contains(&n_sub)
                || (n_sub == n && n < *INSTANCE_LEVELS.last().unwrap())
        );
        prop_assert!(n_sub >= 1 && n_sub <= n);
        prop_assert!(batch.n_predictors() >= 1 && batch.n_predictors() <= m);
        prop_assert!(batch.n_targets() >= 1 && batch.n_targets() <= t);

        // Index subsets: strictly increasing (hence without replacement).
        for idx in [batch.row_indices(), batch.predictor_indices(), batch.target_indices()] {
            for w in idx.windows(2) {
                prop_assert!(w[0] < w[1]);
            }
        }

        // Extracted sub-matrices match the index subsets.
        for (r, &sr) in batch.row_indices().iter().enumerate() {
            for (c, &sc) in batch.predictor_indices().iter().enumerate() {
                prop_assert_eq!(batch.predictors().get(r, c), ds.predictors().get(sr, sc));
            }
            for (c, &sc) in batch.target_indices().iter().enumerate() {
                prop_assert_eq!(batch.targets().get(r, c), ds.targets().get(sr, sc));
            }
        }
    }
}

proptest! {
    #[test]
    fn normalization_is_invariant_to_positive_affine_maps(
        rows in prop::collection::vec(prop::collection::vec(-100.0f64..100.0, 3), 2..40),
        scale in 0.001f64..50.0,
        shift in -100.0f64..100.0,
    ) {
        let base = Tensor::from_rows(&rows);
        let mapped = Tensor::from_vec(
            base.rows(),
            base.cols(),
            base.data().iter().map(|v| v * scale + shift).collect(),
        );
        let a = normalize_columns(&base);
        let b = normalize_columns(&mapped);
        for (x, y) in a.data().iter().zip(b.data()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }
}
