//! Set-encoder properties: architecture parameter budgets, permutation
//! invariance, hand-computable oracles, extraction semantics, checkpointing.

use metafeat::dataset::TabularDataset;
use metafeat::encoder::{
    read_metafeatures_csv, write_metafeatures_csv, Architecture, MetaFeatures, SetEncoder,
};
use metafeat::sampling::{sample_batch, Batch};
use metafeat::toygen::{generate_toy, ToyGenSpec, ToyKind};
use ndnet::{Activation, Block, DenseLayer, Parameterized, Stack, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn toy_dataset(kind: ToyKind, classes: usize, seed: u32) -> TabularDataset {
    let spec = ToyGenSpec {
        kind,
        instances: 2048,
        classes,
        seed,
        noise: seed % 2 == 0,
    };
    generate_toy(&spec, format!("{kind:?}-{seed}")).unwrap()
}

#[test]
fn architecture_parameter_budgets_are_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let toy = SetEncoder::new(Architecture::Toy, Activation::Relu, &mut rng);
    assert_eq!(toy.param_count(), 50_112);
    assert_eq!(toy.k_dim(), 64);

    let tabular = SetEncoder::new(Architecture::Tabular, Activation::Relu, &mut rng);
    assert_eq!(tabular.param_count(), 45_424);
    assert_eq!(tabular.k_dim(), 32);
}

fn permute_batch<R: Rng>(batch: &Batch, rng: &mut R) -> Batch {
    use rand::seq::SliceRandom;
    let n = batch.n_instances();
    let m = batch.n_predictors();
    let t = batch.n_targets();
    let mut rows: Vec<usize> = (0..n).collect();
    let mut mcols: Vec<usize> = (0..m).collect();
    let mut tcols: Vec<usize> = (0..t).collect();
    rows.shuffle(rng);
    mcols.shuffle(rng);
    tcols.shuffle(rng);
    let mut x = Tensor::zeros(n, m);
    let mut y = Tensor::zeros(n, t);
    for (r, &sr) in rows.iter().enumerate() {
        for (c, &sc) in mcols.iter().enumerate() {
            x.set(r, c, batch.predictors().get(sr, sc));
        }
        for (c, &sc) in tcols.iter().enumerate() {
            y.set(r, c, batch.targets().get(sr, sc));
        }
    }
    Batch::from_parts(batch.source().to_string(), x, y)
}

#[test]
fn encode_batch_is_permutation_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let enc = SetEncoder::new(Architecture::Toy, Activation::Relu, &mut rng);
    let datasets = [
        toy_dataset(ToyKind::Circles, 2, 1),
        toy_dataset(ToyKind::Moons, 2, 2),
        toy_dataset(ToyKind::Blobs, 6, 3),
    ];
    for trial in 0..200 {
        let ds = &datasets[trial % datasets.len()];
        let batch = sample_batch(ds, &mut rng);
        let base = enc.encode_batch(&batch).unwrap();
        let permuted = permute_batch(&batch, &mut rng);
        let other = enc.encode_batch(&permuted).unwrap();
        let max_diff = base
            .iter()
            .zip(&other)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max_diff < 1e-9, "trial {trial}: max diff {max_diff}");
    }
}

#[test]
fn row_duplication_leaves_encoding_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let enc = SetEncoder::new(Architecture::Toy, Activation::Relu, &mut rng);
    let ds = toy_dataset(ToyKind::Moons, 2, 5);
    let batch = sample_batch(&ds, &mut rng);

    let n = batch.n_instances();
    let mut x2 = Tensor::zeros(2 * n, batch.n_predictors());
    let mut y2 = Tensor::zeros(2 * n, batch.n_targets());
    for r in 0..n {
        for copy in 0..2 {
            x2.row_mut(2 * r + copy)
                .copy_from_slice(batch.predictors().row(r));
            y2.row_mut(2 * r + copy)
                .copy_from_slice(batch.targets().row(r));
        }
    }
    let doubled = Batch::from_parts(batch.source().to_string(), x2, y2);

    let a = enc.encode_batch(&batch).unwrap();
    let b = enc.encode_batch(&doubled).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-9);
    }
}

#[test]
fn identity_weight_encoder_matches_hand_computed_chain() {
    // f, g, h all identity-weight 2x2 linear maps on a 1-instance,
    // 1-predictor, 1-target batch: the output is h(g(f(x, y))) = (x, y).
    let identity_stack = || {
        Stack::new(vec![Block::Dense(
            DenseLayer::from_parts(Tensor::eye(2), Tensor::zeros(1, 2), Activation::Identity)
                .unwrap(),
        )])
    };
    let enc = SetEncoder::from_stacks(
        identity_stack(),
        identity_stack(),
        identity_stack(),
        Activation::Identity,
    );
    let (x, y) = (0.37, 1.0);
    let batch = Batch::from_parts(
        "one",
        Tensor::from_vec(1, 1, vec![x]),
        Tensor::from_vec(1, 1, vec![y]),
    );
    let phi = enc.encode_batch(&batch).unwrap();

    // Independent oracle: explicit 1x2 row through three identity matrices.
    let mut row = [x, y];
    for _ in 0..3 {
        let prev = row;
        for (c, item) in row.iter_mut().enumerate() {
            *item = prev[0] * Tensor::eye(2).get(0, c) + prev[1] * Tensor::eye(2).get(1, c);
        }
    }
    assert_eq!(phi, vec![row[0], row[1]]);
}

#[test]
fn extract_with_one_batch_equals_single_encode() {
    let mut rng = ChaCha8Rng::seed_from_u64(47);
    let enc = SetEncoder::new(Architecture::Toy, Activation::Relu, &mut rng);
    let ds = toy_dataset(ToyKind::Circles, 2, 7);

    let mut rng_a = ChaCha8Rng::seed_from_u64(1234);
    let mf = enc.extract(&ds, 1, &mut rng_a).unwrap();

    let mut rng_b = ChaCha8Rng::seed_from_u64(1234);
    let batch = sample_batch(&ds, &mut rng_b);
    let phi = enc.encode_batch(&batch).unwrap();
    assert_eq!(mf.values, phi);
    assert_eq!(mf.batches, 1);
}

#[test]
fn extract_is_deterministic_per_seed() {
    let mut rng = ChaCha8Rng::seed_from_u64(49);
    let enc = SetEncoder::new(Architecture::Toy, Activation::Relu, &mut rng);
    let ds = toy_dataset(ToyKind::Blobs, 4, 9);
    let a = enc.extract(&ds, 10, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let b = enc.extract(&ds, 10, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn extract_averages_converge_with_more_batches() {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let enc = SetEncoder::new(Architecture::Toy, Activation::Relu, &mut rng);
    let ds = toy_dataset(ToyKind::Moons, 2, 11);

    // Empirical per-component spread of single-batch encodings.
    let mut sample_rng = ChaCha8Rng::seed_from_u64(60);
    let singles: Vec<Vec<f64>> = (0..256)
        .map(|_| {
            let b = sample_batch(&ds, &mut sample_rng);
            enc.encode_batch(&b).unwrap()
        })
        .collect();
    let k = enc.k_dim();
    let mut std = vec![0.0; k];
    for j in 0..k {
        let mean: f64 = singles.iter().map(|v| v[j]).sum::<f64>() / singles.len() as f64;
        let var: f64 = singles.iter().map(|v| (v[j] - mean).powi(2)).sum::<f64>()
            / singles.len() as f64;
        std[j] = var.sqrt();
    }

    let small = enc.extract(&ds, 64, &mut ChaCha8Rng::seed_from_u64(70)).unwrap();
    let large = enc.extract(&ds, 512, &mut ChaCha8Rng::seed_from_u64(71)).unwrap();
    // Independent means differ by at most ~6 sigma of the combined MC error.
    let tol_scale = (1.0 / 64.0f64 + 1.0 / 512.0).sqrt();
    for j in 0..k {
        let tol = 6.0 * std[j] * tol_scale + 1e-12;
        let diff = (small.values[j] - large.values[j]).abs();
        assert!(diff < tol, "component {j}: diff {diff} tol {tol}");
    }
}

#[test]
fn extract_requires_at_least_one_batch() {
    let mut rng = ChaCha8Rng::seed_from_u64(53);
    let enc = SetEncoder::new(Architecture::Toy, Activation::Relu, &mut rng);
    let ds = toy_dataset(ToyKind::Circles, 2, 13);
    assert!(enc.extract(&ds, 0, &mut rng).is_err());
}

#[test]
fn checkpoint_roundtrip_preserves_outputs_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("encoder.json");
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let enc = SetEncoder::new(Architecture::Tabular, Activation::Relu, &mut rng);
    enc.save_checkpoint(&path).unwrap();
    let back = SetEncoder::load_checkpoint(&path).unwrap();
    assert_eq!(back.param_count(), enc.param_count());

    let ds = toy_dataset(ToyKind::Blobs, 3, 17);
    let batch = sample_batch(&ds, &mut rng);
    let a = enc.encode_batch(&batch).unwrap();
    let b = back.encode_batch(&batch).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.to_bits(), y.to_bits());
    }
}

#[test]
fn metafeature_csv_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mf.csv");
    let rows = vec![
        MetaFeatures {
            name: "a".into(),
            values: vec![0.1, -2.5, 1.0 / 3.0],
            batches: 10,
        },
        MetaFeatures {
            name: "b".into(),
            values: vec![7.25, 0.0, -0.0],
            batches: 10,
        },
    ];
    write_metafeatures_csv(&path, &rows).unwrap();
    let back = read_metafeatures_csv(&path).unwrap();
    assert_eq!(back.len(), 2);
    for (orig, read) in rows.iter().zip(&back) {
        assert_eq!(orig.name, read.name);
        for (a, b) in orig.values.iter().zip(&read.values) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
