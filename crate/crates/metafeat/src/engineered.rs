//! Engineered meta-feature baseline: a fixed-order vector of 22 dataset
//! statistics computed from the predictor and target matrices.

use ndnet::Tensor;

use crate::dataset::TabularDataset;
use crate::sampling::Batch;

/// Length of the engineered meta-feature vector.
pub const ENGINEERED_DIM: usize = 22;

/// Feature order (all statistics over the normalized matrices):
///  0 log N                     11 kurtosis min
///  1 log M                     12 kurtosis max
///  2 T                         13 kurtosis mean
///  3 class-probability min     14 kurtosis std
///  4 class-probability max     15 fraction of predictors with |skew| > 1
///  5 class-probability mean    16 mean of column means
///  6 class-probability std     17 std of column means
///  7 skewness min              18 mean of column variances
///  8 skewness max              19 std of column variances
///  9 skewness mean             20 normalized class entropy
/// 10 skewness std              21 default accuracy (majority-class rate)
///
/// Skewness is the third standardized population moment; kurtosis is excess
/// (normal = 0). Zero-variance columns contribute 0 to both by convention.
pub fn engineered_stats(predictors: &Tensor, targets: &Tensor) -> Vec<f64> {
    let n = predictors.rows() as f64;
    let m = predictors.cols() as f64;
    let t = targets.cols() as f64;

    // Per-column predictor moments.
    let mut skews = Vec::with_capacity(predictors.cols());
    let mut kurts = Vec::with_capacity(predictors.cols());
    let mut means = Vec::with_capacity(predictors.cols());
    let mut vars = Vec::with_capacity(predictors.cols());
    for c in 0..predictors.cols() {
        let mut mean = 0.0;
        for r in 0..predictors.rows() {
            mean += predictors.get(r, c);
        }
        mean /= n;
        let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
        for r in 0..predictors.rows() {
            let d = predictors.get(r, c) - mean;
            let d2 = d * d;
            m2 += d2;
            m3 += d2 * d;
            m4 += d2 * d2;
        }
        m2 /= n;
        m3 /= n;
        m4 /= n;
        let (skew, kurt) = if m2 > 1e-12 {
            (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
        } else {
            (0.0, 0.0)
        };
        skews.push(skew);
        kurts.push(kurt);
        means.push(mean);
        vars.push(m2);
    }

    // Class probabilities: column means of the one-hot target matrix.
    let mut class_p = Vec::with_capacity(targets.cols());
    for c in 0..targets.cols() {
        let mut s = 0.0;
        for r in 0..targets.rows() {
            s += targets.get(r, c);
        }
        class_p.push(s / n);
    }

    let entropy: f64 = class_p
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum();
    let norm_entropy = if targets.cols() > 1 {
        entropy / (t.ln())
    } else {
        0.0
    };

    let frac_heavy_skew =
        skews.iter().filter(|s| s.abs() > 1.0).count() as f64 / skews.len() as f64;

    let mut out = Vec::with_capacity(ENGINEERED_DIM);
    out.push(n.ln());
    out.push(m.ln());
    out.push(t);
    out.extend(min_max_mean_std(&class_p));
    out.extend(min_max_mean_std(&skews));
    out.extend(min_max_mean_std(&kurts));
    out.push(frac_heavy_skew);
    let (_, _, mean_of_means, std_of_means) = stats4(&means);
    out.push(mean_of_means);
    out.push(std_of_means);
    let (_, _, mean_of_vars, std_of_vars) = stats4(&vars);
    out.push(mean_of_vars);
    out.push(std_of_vars);
    out.push(norm_entropy);
    out.push(class_p.iter().cloned().fold(0.0, f64::max));
    debug_assert_eq!(out.len(), ENGINEERED_DIM);
    out
}

fn stats4(xs: &[f64]) -> (f64, f64, f64, f64) {
    let n = xs.len() as f64;
    let min = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (min, max, mean, var.sqrt())
}

fn min_max_mean_std(xs: &[f64]) -> [f64; 4] {
    let (min, max, mean, std) = stats4(xs);
    [min, max, mean, std]
}

/// Engineered meta-features of a whole dataset.
pub fn engineered_mf(ds: &TabularDataset) -> Vec<f64> {
    engineered_stats(ds.predictors(), ds.targets())
}

/// Engineered meta-features of a single batch (treated as a small dataset).
pub fn engineered_mf_batch(batch: &Batch) -> Vec<f64> {
    engineered_stats(batch.predictors(), batch.targets())
}

/// Per-dimension z-scoring fitted on a collection of vectors. Dimensions with
/// zero spread pass through unscaled.
#[derive(Clone, Debug)]
pub struct ZScoreScaler {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl ZScoreScaler {
    pub fn fit(vectors: &[Vec<f64>]) -> Self {
        assert!(!vectors.is_empty(), "cannot fit a scaler on no vectors");
        let dim = vectors[0].len();
        let n = vectors.len() as f64;
        let mut mean = vec![0.0; dim];
        for v in vectors {
            for (m, x) in mean.iter_mut().zip(v) {
                *m += x;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; dim];
        for v in vectors {
            for ((s, x), m) in var.iter_mut().zip(v).zip(&mean) {
                *s += (x - m) * (x - m);
            }
        }
        let std = var
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        ZScoreScaler { mean, std }
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((x, m), s)| (x - m) / s)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_binary_targets() {
        let x = Tensor::from_vec(4, 1, vec![0.0, 0.3, 0.7, 1.0]);
        let mut y = Tensor::zeros(4, 2);
        for r in 0..4 {
            y.set(r, r % 2, 1.0);
        }
        let v = engineered_stats(&x, &y);
        assert_eq!(v[3], 0.5); // class-prob min
        assert_eq!(v[4], 0.5); // class-prob max
        assert!((v[20] - 1.0).abs() < 1e-12); // normalized entropy
        assert_eq!(v[21], 0.5); // default accuracy
    }

    #[test]
    fn constant_predictor_contributes_zero_moments() {
        let x = Tensor::from_vec(3, 1, vec![0.0, 0.0, 0.0]);
        let mut y = Tensor::zeros(3, 2);
        y.set(0, 0, 1.0);
        y.set(1, 1, 1.0);
        y.set(2, 0, 1.0);
        let v = engineered_stats(&x, &y);
        // With a single constant column, all four skew and kurt summaries are 0.
        for idx in 7..15 {
            assert_eq!(v[idx], 0.0, "index {idx}");
        }
    }

    #[test]
    fn standard_normal_sample_has_small_moments() {
        use rand::SeedableRng;
        use rand_distr::Distribution;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let normal = rand_distr::Normal::new(0.0, 1.0).unwrap();
        let raw: Vec<f64> = (0..1000).map(|_| normal.sample(&mut rng)).collect();

        // Independent textbook-formula oracle on the same sample.
        let n = raw.len() as f64;
        let mean = raw.iter().sum::<f64>() / n;
        let m2 = raw.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let m3 = raw.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n;
        let m4 = raw.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
        let oracle_skew = m3 / m2.powf(1.5);
        let oracle_kurt = m4 / (m2 * m2) - 3.0;

        // Normalizing is an affine map per column, so standardized moments of
        // the normalized column equal those of the raw sample.
        let lo = raw.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let x = Tensor::from_vec(1000, 1, raw.iter().map(|v| (v - lo) / (hi - lo)).collect());
        let mut y = Tensor::zeros(1000, 2);
        for r in 0..1000 {
            y.set(r, r % 2, 1.0);
        }
        let v = engineered_stats(&x, &y);
        assert!((v[9] - oracle_skew).abs() < 1e-9, "skew {} vs {}", v[9], oracle_skew);
        assert!((v[13] - oracle_kurt).abs() < 1e-9, "kurt {} vs {}", v[13], oracle_kurt);
        assert!(oracle_skew.abs() < 0.3);
        assert!(oracle_kurt.abs() < 0.5);
    }

    #[test]
    fn invariant_to_row_and_column_order() {
        let x = Tensor::from_vec(4, 2, vec![0.0, 1.0, 0.5, 0.2, 1.0, 0.0, 0.25, 0.8]);
        let mut y = Tensor::zeros(4, 2);
        for r in 0..4 {
            y.set(r, r % 2, 1.0);
        }
        let base = engineered_stats(&x, &y);

        // Reverse rows.
        let mut xr = Tensor::zeros(4, 2);
        let mut yr = Tensor::zeros(4, 2);
        for r in 0..4 {
            xr.row_mut(r).copy_from_slice(x.row(3 - r));
            yr.row_mut(r).copy_from_slice(y.row(3 - r));
        }
        let rows_swapped = engineered_stats(&xr, &yr);

        // Swap predictor columns.
        let mut xc = Tensor::zeros(4, 2);
        for r in 0..4 {
            xc.set(r, 0, x.get(r, 1));
            xc.set(r, 1, x.get(r, 0));
        }
        let cols_swapped = engineered_stats(&xc, &y);

        for i in 0..ENGINEERED_DIM {
            assert!((base[i] - rows_swapped[i]).abs() < 1e-12);
            assert!((base[i] - cols_swapped[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn zscore_scaler_standardizes_fit_set() {
        let vecs = vec![vec![1.0, 10.0], vec![3.0, 10.0], vec![5.0, 10.0]];
        let scaler = ZScoreScaler::fit(&vecs);
        let scaled: Vec<Vec<f64>> = vecs.iter().map(|v| scaler.apply(v)).collect();
        let mean0: f64 = scaled.iter().map(|v| v[0]).sum::<f64>() / 3.0;
        assert!(mean0.abs() < 1e-12);
        // Constant dimension passes through unscaled (shifted to zero).
        assert!(scaled.iter().all(|v| v[1] == 0.0));
    }
}
