//! Multi-fidelity batch sampling, labeled batch pairs, stratified pair
//! streams, and k-fold dataset splits.

use ndnet::Tensor;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::TabularDataset;
use crate::{MfError, Result};

/// Admissible instance-subset sizes: {2^q | q in [4, 8]}.
pub const INSTANCE_LEVELS: [usize; 5] = [16, 32, 64, 128, 256];

/// A multi-fidelity sub-matrix pair drawn from one dataset.
#[derive(Clone, Debug)]
pub struct Batch {
    predictors: Tensor,
    targets: Tensor,
    source: String,
    rows: Vec<usize>,
    predictor_cols: Vec<usize>,
    target_cols: Vec<usize>,
}

impl Batch {
    /// |N'| x |M'| predictor sub-matrix.
    pub fn predictors(&self) -> &Tensor {
        &self.predictors
    }

    /// |N'| x |T'| target sub-matrix.
    pub fn targets(&self) -> &Tensor {
        &self.targets
    }

    /// Name of the source dataset.
    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn n_instances(&self) -> usize {
        self.rows.len()
    }

    pub fn n_predictors(&self) -> usize {
        self.predictor_cols.len()
    }

    pub fn n_targets(&self) -> usize {
        self.target_cols.len()
    }

    /// Instance indices, strictly increasing.
    pub fn row_indices(&self) -> &[usize] {
        &self.rows
    }

    pub fn predictor_indices(&self) -> &[usize] {
        &self.predictor_cols
    }

    pub fn target_indices(&self) -> &[usize] {
        &self.target_cols
    }

    /// Assembles a batch directly from matrices (tests and oracles).
    pub fn from_parts(source: impl Into<String>, predictors: Tensor, targets: Tensor) -> Self {
        assert_eq!(predictors.rows(), targets.rows(), "row count mismatch");
        Batch {
            rows: (0..predictors.rows()).collect(),
            predictor_cols: (0..predictors.cols()).collect(),
            target_cols: (0..targets.cols()).collect(),
            source: source.into(),
            predictors,
            targets,
        }
    }
}

/// Two batches plus the same-dataset indicator.
#[derive(Clone, Debug)]
pub struct LabeledPair {
    pub left: Batch,
    pub right: Batch,
    /// 1 iff both batches were drawn from the same dataset.
    pub same_source: bool,
}

impl LabeledPair {
    fn new(left: Batch, right: Batch) -> Self {
        let same_source = left.source() == right.source();
        LabeledPair {
            left,
            right,
            same_source,
        }
    }
}

/// `k` distinct indices from `0..n`, strictly increasing.
fn sorted_index_subset<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Vec<usize> {
    debug_assert!(k <= n);
    let mut all: Vec<usize> = (0..n).collect();
    let (picked, _) = all.partial_shuffle(rng, k);
    let mut picked = picked.to_vec();
    picked.sort_unstable();
    picked
}

/// Draws one multi-fidelity batch: |N'| uniform over {16, 32, 64, 128, 256}
/// clamped to N, |M'| uniform in [1, M], |T'| uniform in [1, T], all index
/// subsets without replacement.
pub fn sample_batch<R: Rng + ?Sized>(ds: &TabularDataset, rng: &mut R) -> Batch {
    let n = ds.n_instances();
    let level = INSTANCE_LEVELS[rng.gen_range(0..INSTANCE_LEVELS.len())];
    if n < INSTANCE_LEVELS[0] {
        log::warn!(
            "dataset '{}' has only {} instances; batch fidelity degenerates to the full set",
            ds.name(),
            n
        );
    }
    let n_sub = level.min(n);
    let m_sub = rng.gen_range(1..=ds.n_predictors());
    let t_sub = rng.gen_range(1..=ds.n_targets());

    let rows = sorted_index_subset(n, n_sub, rng);
    let predictor_cols = sorted_index_subset(ds.n_predictors(), m_sub, rng);
    let target_cols = sorted_index_subset(ds.n_targets(), t_sub, rng);

    let mut x = Tensor::zeros(n_sub, m_sub);
    let mut y = Tensor::zeros(n_sub, t_sub);
    for (r, &src) in rows.iter().enumerate() {
        for (c, &pc) in predictor_cols.iter().enumerate() {
            x.set(r, c, ds.predictors().get(src, pc));
        }
        for (c, &tc) in target_cols.iter().enumerate() {
            y.set(r, c, ds.targets().get(src, tc));
        }
    }
    Batch {
        predictors: x,
        targets: y,
        source: ds.name().to_string(),
        rows,
        predictor_cols,
        target_cols,
    }
}

/// Draws one labeled batch pair: with probability 1/2 both batches come from
/// one dataset (indicator 1), otherwise from two distinct datasets drawn
/// without replacement (indicator 0).
pub fn sample_pair<R: Rng + ?Sized>(
    meta: &[TabularDataset],
    rng: &mut R,
) -> Result<LabeledPair> {
    if meta.len() < 2 {
        return Err(MfError::NotEnoughDatasets {
            needed: 2,
            got: meta.len(),
        });
    }
    let first = rng.gen_range(0..meta.len());
    if rng.gen_range(0.0..1.0) < 0.5 {
        // Dissimilar: the second dataset is drawn from the pool minus the first.
        let mut second = rng.gen_range(0..meta.len() - 1);
        if second >= first {
            second += 1;
        }
        let left = sample_batch(&meta[first], rng);
        let right = sample_batch(&meta[second], rng);
        Ok(LabeledPair::new(left, right))
    } else {
        let left = sample_batch(&meta[first], rng);
        let right = sample_batch(&meta[first], rng);
        Ok(LabeledPair::new(left, right))
    }
}

/// Alternating positive/negative pair stream. Any window of 2B consecutive
/// pairs contains positives and negatives differing by at most one.
pub struct StratifiedPairs<'a, R: Rng> {
    meta: &'a [TabularDataset],
    rng: R,
    next_positive: bool,
}

impl<'a, R: Rng> StratifiedPairs<'a, R> {
    pub fn new(meta: &'a [TabularDataset], rng: R) -> Result<Self> {
        if meta.len() < 2 {
            return Err(MfError::NotEnoughDatasets {
                needed: 2,
                got: meta.len(),
            });
        }
        Ok(StratifiedPairs {
            meta,
            rng,
            next_positive: true,
        })
    }

    pub fn next_pair(&mut self) -> LabeledPair {
        let rng = &mut self.rng;
        let first = rng.gen_range(0..self.meta.len());
        let pair = if self.next_positive {
            let left = sample_batch(&self.meta[first], rng);
            let right = sample_batch(&self.meta[first], rng);
            LabeledPair::new(left, right)
        } else {
            let mut second = rng.gen_range(0..self.meta.len() - 1);
            if second >= first {
                second += 1;
            }
            let left = sample_batch(&self.meta[first], rng);
            let right = sample_batch(&self.meta[second], rng);
            LabeledPair::new(left, right)
        };
        self.next_positive = !self.next_positive;
        pair
    }

    pub fn take_pairs(&mut self, count: usize) -> Vec<LabeledPair> {
        (0..count).map(|_| self.next_pair()).collect()
    }
}

/// Splits dataset names into `k` disjoint test folds covering every dataset
/// exactly once. Returns `(train, test)` name lists per fold.
pub fn kfold_split<R: Rng + ?Sized>(
    names: &[String],
    k: usize,
    rng: &mut R,
) -> Result<Vec<(Vec<String>, Vec<String>)>> {
    if k == 0 || k > names.len() {
        return Err(MfError::SplitError {
            count: names.len(),
            k,
        });
    }
    let mut shuffled: Vec<String> = names.to_vec();
    shuffled.shuffle(rng);
    let mut folds: Vec<Vec<String>> = vec![Vec::new(); k];
    for (i, name) in shuffled.into_iter().enumerate() {
        folds[i % k].push(name);
    }
    let splits = (0..k)
        .map(|fi| {
            let test = folds[fi].clone();
            let train = folds
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != fi)
                .flat_map(|(_, f)| f.iter().cloned())
                .collect();
            (train, test)
        })
        .collect();
    Ok(splits)
}

/// One line of the pair-stream debug dump (JSON lines).
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct PairDumpRecord {
    pub left_source: String,
    pub right_source: String,
    pub i: u8,
    pub n_size: usize,
    pub m_size: usize,
    pub t_size: usize,
    pub seed: u64,
}

impl PairDumpRecord {
    pub fn from_pair(pair: &LabeledPair, seed: u64) -> Self {
        PairDumpRecord {
            left_source: pair.left.source().to_string(),
            right_source: pair.right.source().to_string(),
            i: pair.same_source as u8,
            n_size: pair.left.n_instances(),
            m_size: pair.left.n_predictors(),
            t_size: pair.left.n_targets(),
            seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toygen::{generate_toy, ToyGenSpec, ToyKind};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy(kind: ToyKind, classes: usize, seed: u32) -> TabularDataset {
        let spec = ToyGenSpec {
            kind,
            instances: 2048,
            classes,
            seed,
            noise: false,
        };
        generate_toy(&spec, format!("{kind:?}-{seed}")).unwrap()
    }

    #[test]
    fn singleton_column_ranges_are_forced() {
        // M = 1 would need a 1-column toy; build a dataset directly instead.
        let x = Tensor::from_vec(32, 1, (0..32).map(|i| i as f64 / 31.0).collect());
        let mut y = Tensor::zeros(32, 2);
        for r in 0..32 {
            y.set(r, r % 2, 1.0);
        }
        let ds = TabularDataset::new("tiny", x, y, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..50 {
            let b = sample_batch(&ds, &mut rng);
            assert_eq!(b.predictor_indices(), &[0]);
            assert!(b.n_targets() >= 1 && b.n_targets() <= 2);
        }
    }

    #[test]
    fn batch_sizes_stay_in_range() {
        let ds = toy(ToyKind::Blobs, 3, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let b = sample_batch(&ds, &mut rng);
            assert!(INSTANCE_LEVELS.contains(&b.n_instances()));
            assert!((1..=2).contains(&b.n_predictors()));
            assert!((1..=3).contains(&b.n_targets()));
        }
    }

    #[test]
    fn batch_indices_are_strictly_increasing_and_unique() {
        let ds = toy(ToyKind::Moons, 2, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let b = sample_batch(&ds, &mut rng);
            for w in b.row_indices().windows(2) {
                assert!(w[0] < w[1]);
            }
            for w in b.predictor_indices().windows(2) {
                assert!(w[0] < w[1]);
            }
            for w in b.target_indices().windows(2) {
                assert!(w[0] < w[1]);
            }
        }
    }

    #[test]
    fn instance_level_frequencies_are_uniform() {
        // Chi-square-style check: each level within 3 sigma of 1/5.
        let ds = toy(ToyKind::Circles, 2, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draws = 10_000;
        let mut counts = [0usize; 5];
        for _ in 0..draws {
            let b = sample_batch(&ds, &mut rng);
            let idx = INSTANCE_LEVELS
                .iter()
                .position(|&l| l == b.n_instances())
                .unwrap();
            counts[idx] += 1;
        }
        let expected = draws as f64 / 5.0;
        let sigma = (draws as f64 * 0.2 * 0.8).sqrt();
        for &c in &counts {
            assert!(
                (c as f64 - expected).abs() < 3.0 * sigma,
                "counts {counts:?}"
            );
        }
    }

    #[test]
    fn pair_labels_match_sources() {
        let meta = vec![toy(ToyKind::Circles, 2, 1), toy(ToyKind::Moons, 2, 2)];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let p = sample_pair(&meta, &mut rng).unwrap();
            assert_eq!(p.same_source, p.left.source() == p.right.source());
            if !p.same_source {
                assert_ne!(p.left.source(), p.right.source());
            }
        }
    }

    #[test]
    fn positive_fraction_is_half() {
        let meta = vec![toy(ToyKind::Circles, 2, 1), toy(ToyKind::Moons, 2, 2)];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let draws = 100_000;
        let mut positives = 0;
        for _ in 0..draws {
            let p = sample_pair(&meta, &mut rng).unwrap();
            positives += p.same_source as usize;
        }
        let frac = positives as f64 / draws as f64;
        assert!((frac - 0.5).abs() < 0.01, "positive fraction {frac}");
    }

    #[test]
    fn pair_sampling_needs_two_datasets() {
        let meta = vec![toy(ToyKind::Circles, 2, 1)];
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        assert!(matches!(
            sample_pair(&meta, &mut rng),
            Err(MfError::NotEnoughDatasets { .. })
        ));
    }

    #[test]
    fn stratified_stream_alternates_labels() {
        let meta = vec![
            toy(ToyKind::Circles, 2, 1),
            toy(ToyKind::Moons, 2, 2),
            toy(ToyKind::Blobs, 4, 3),
        ];
        let rng = ChaCha8Rng::seed_from_u64(7);
        let mut stream = StratifiedPairs::new(&meta, rng).unwrap();
        let pairs = stream.take_pairs(64);
        // Any window of even length is perfectly balanced.
        for window in pairs.windows(16) {
            let pos = window.iter().filter(|p| p.same_source).count();
            assert_eq!(pos, 8);
        }
    }

    #[test]
    fn kfold_partitions_cover_everything_once() {
        let names: Vec<String> = (0..10).map(|i| format!("d{i}")).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let folds = kfold_split(&names, 5, &mut rng).unwrap();
        assert_eq!(folds.len(), 5);
        let mut all_test: Vec<String> = Vec::new();
        for (train, test) in &folds {
            assert_eq!(test.len(), 2);
            assert_eq!(train.len(), 8);
            for t in test {
                assert!(!train.contains(t));
            }
            all_test.extend(test.iter().cloned());
        }
        all_test.sort();
        let mut expect = names.clone();
        expect.sort();
        assert_eq!(all_test, expect);
    }

    #[test]
    fn kfold_is_deterministic_per_seed() {
        let names: Vec<String> = (0..13).map(|i| format!("d{i}")).collect();
        let a = kfold_split(&names, 5, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = kfold_split(&names, 5, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn kfold_rejects_oversized_k() {
        let names: Vec<String> = (0..3).map(|i| format!("d{i}")).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        assert!(matches!(
            kfold_split(&names, 4, &mut rng),
            Err(MfError::SplitError { .. })
        ));
    }

    #[test]
    fn pair_dump_record_roundtrips_as_json() {
        let meta = vec![toy(ToyKind::Circles, 2, 1), toy(ToyKind::Moons, 2, 2)];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pair = sample_pair(&meta, &mut rng).unwrap();
        let rec = PairDumpRecord::from_pair(&pair, 11);
        let line = serde_json::to_string(&rec).unwrap();
        let back: PairDumpRecord = serde_json::from_str(&line).unwrap();
        assert_eq!(rec, back);
    }
}
