//! Probabilistic batch similarity, the contrastive training objective, the
//! training loop, and pairwise-classification evaluation.
//!
//! Two batches are compared through their meta-features: the similarity is
//! `exp(-gamma * ||phi(left) - phi(right)||)`, in (0, 1], equal to 1 exactly
//! when the meta-features coincide. Training minimizes
//!
//! ```text
//! -(1/|P|) sum_P log(i_hat)  -  (1/|W|) sum_W log(1 - i_hat)
//! ```
//!
//! over stratified streams of same-dataset (P) and cross-dataset (W) pairs.

use ndnet::{Activation, AdamConfig, AdamState, Parameterized, Tape, Tensor, Value};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::TabularDataset;
use crate::encoder::{Architecture, BoundSetEncoder, SetEncoder};
use crate::engineered::{engineered_mf_batch, ZScoreScaler};
use crate::sampling::{Batch, LabeledPair, StratifiedPairs};
use crate::{MfError, Result};

/// Probabilities are clamped to `[EPS, 1 - EPS]` before logarithms.
pub const PROB_CLAMP_EPS: f64 = 1e-7;

/// Exponential similarity from a meta-feature distance.
pub fn similarity_from_distance(gamma: f64, distance: f64) -> f64 {
    (-gamma * distance).exp()
}

/// Anything that maps a batch to a fixed-length vector.
pub trait BatchEmbedder: Sync {
    fn embed(&self, batch: &Batch) -> Result<Vec<f64>>;
}

impl BatchEmbedder for SetEncoder {
    fn embed(&self, batch: &Batch) -> Result<Vec<f64>> {
        self.encode_batch(batch)
    }
}

/// Engineered-statistics embedder, optionally z-scored with statistics fitted
/// on training-fold batches (raw engineered features have wildly different
/// scales, which would dominate the exponential distance).
pub struct EngineeredEmbedder {
    scaler: Option<ZScoreScaler>,
}

impl EngineeredEmbedder {
    pub fn raw() -> Self {
        EngineeredEmbedder { scaler: None }
    }

    /// Fits the z-scaler on engineered vectors of `n_samples` batches drawn
    /// from the given (training-fold) datasets.
    pub fn fit<R: Rng + ?Sized>(
        train: &[TabularDataset],
        n_samples: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if train.is_empty() {
            return Err(MfError::NotEnoughDatasets { needed: 1, got: 0 });
        }
        let mut vectors = Vec::with_capacity(n_samples);
        for _ in 0..n_samples {
            let ds = &train[rng.gen_range(0..train.len())];
            let b = crate::sampling::sample_batch(ds, rng);
            vectors.push(engineered_mf_batch(&b));
        }
        Ok(EngineeredEmbedder {
            scaler: Some(ZScoreScaler::fit(&vectors)),
        })
    }
}

impl BatchEmbedder for EngineeredEmbedder {
    fn embed(&self, batch: &Batch) -> Result<Vec<f64>> {
        let v = engineered_mf_batch(batch);
        Ok(match &self.scaler {
            Some(s) => s.apply(&v),
            None => v,
        })
    }
}

/// A trained (or untrained) encoder plus the similarity bandwidth gamma.
#[derive(Clone, Debug)]
pub struct SimilarityModel {
    encoder: SetEncoder,
    gamma: f64,
}

impl SimilarityModel {
    pub fn new(encoder: SetEncoder, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(MfError::InvalidGamma(gamma));
        }
        Ok(SimilarityModel { encoder, gamma })
    }

    pub fn encoder(&self) -> &SetEncoder {
        &self.encoder
    }

    pub fn into_encoder(self) -> SetEncoder {
        self.encoder
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `exp(-gamma * ||phi(left) - phi(right)||)`, in (0, 1].
    pub fn similarity(&self, left: &Batch, right: &Batch) -> Result<f64> {
        let a = self.encoder.encode_batch(left)?;
        let b = self.encoder.encode_batch(right)?;
        let dist = euclidean(&a, &b);
        Ok(similarity_from_distance(self.gamma, dist))
    }
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Builds the contrastive loss for a slice of labeled pairs on a tape.
/// Positive and negative terms are averaged separately, then summed.
pub fn pair_loss_on_tape(
    tape: &mut Tape,
    bound: &BoundSetEncoder,
    pairs: &[LabeledPair],
    gamma: f64,
) -> Result<Value> {
    let n_pos = pairs.iter().filter(|p| p.same_source).count();
    let n_neg = pairs.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MfError::Contract(format!(
            "pair loss needs at least one positive and one negative pair (got {n_pos}/{n_neg})"
        )));
    }
    let mut pos_sum: Option<Value> = None;
    let mut neg_sum: Option<Value> = None;
    for pair in pairs {
        let left = bound.encode_batch(tape, &pair.left)?;
        let right = bound.encode_batch(tape, &pair.right)?;
        let dist = tape.euclidean_dist(left, right);
        let neg_gamma_d = tape.scale(dist, -gamma);
        let i_hat = tape.exp(neg_gamma_d);
        let i_hat = tape.clamp(i_hat, PROB_CLAMP_EPS, 1.0 - PROB_CLAMP_EPS);
        let term = if pair.same_source {
            tape.ln(i_hat)
        } else {
            let one_minus = tape.affine(i_hat, -1.0, 1.0);
            tape.ln(one_minus)
        };
        let acc = if pair.same_source {
            &mut pos_sum
        } else {
            &mut neg_sum
        };
        *acc = Some(match *acc {
            Some(prev) => tape.add(prev, term),
            None => term,
        });
    }
    let pos = tape.scale(pos_sum.expect("positive term"), -1.0 / n_pos as f64);
    let neg = tape.scale(neg_sum.expect("negative term"), -1.0 / n_neg as f64);
    Ok(tape.add(pos, neg))
}

/// Training configuration. The paper-silent knobs (step count, pairs per
/// step, learning rate schedule) live here as explicit defaults.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: u64,
    pub pairs_per_step: usize,
    pub adam: AdamConfig,
    pub gamma: f64,
    pub seed: u64,
    /// Fold label recorded in logs.
    pub fold: Option<usize>,
    pub architecture: Architecture,
    #[serde(default)]
    pub identity_output: bool,
    /// Fraction of training datasets held out for validation-based
    /// checkpoint selection.
    pub val_fraction: f64,
    pub val_every: u64,
    pub val_pairs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 10_000,
            pairs_per_step: 16,
            adam: AdamConfig::default(),
            gamma: 1.0,
            seed: 0,
            fold: None,
            architecture: Architecture::Toy,
            identity_output: false,
            val_fraction: 0.15,
            val_every: 250,
            val_pairs: 200,
        }
    }
}

/// One row of the training log (`step,loss,val_accuracy`).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub step: u64,
    pub loss: f64,
    pub val_accuracy: Option<f64>,
}

/// Training result: the best-validation model, the full log, and a
/// divergence diagnostic when training aborted early.
pub struct TrainOutcome {
    pub model: SimilarityModel,
    pub log: Vec<TrainLogRow>,
    pub best_val_accuracy: f64,
    pub diverged: Option<String>,
}

/// Trains a similarity model on the given datasets with stratified pair
/// batches, keeping the checkpoint with the best validation pairwise
/// accuracy. On divergence (non-finite loss or gradient) training aborts and
/// the last good checkpoint is returned with a diagnostic.
pub fn train(meta: &[TabularDataset], cfg: &TrainConfig) -> Result<TrainOutcome> {
    if cfg.steps == 0 {
        return Err(MfError::Contract("steps must be >= 1".into()));
    }
    if meta.len() < 2 {
        return Err(MfError::NotEnoughDatasets {
            needed: 2,
            got: meta.len(),
        });
    }

    // Validation split: carve datasets off the train fold when there are
    // enough; with fewer than four datasets validation reuses the train set.
    let n_val = ((meta.len() as f64 * cfg.val_fraction).round() as usize).max(2);
    let (train_set, val_set): (Vec<TabularDataset>, Vec<TabularDataset>) =
        if meta.len() >= n_val + 2 {
            let split = meta.len() - n_val;
            (meta[..split].to_vec(), meta[split..].to_vec())
        } else {
            (meta.to_vec(), meta.to_vec())
        };

    let out_act = if cfg.identity_output {
        Activation::Identity
    } else {
        Activation::Relu
    };
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut encoder = SetEncoder::new(cfg.architecture, out_act, &mut init_rng);
    let mut adam = AdamState::new(cfg.adam, encoder.param_count());
    let pair_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut stream = StratifiedPairs::new(&train_set, pair_rng)?;

    let mut log = Vec::new();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut diverged = None;

    for step in 1..=cfg.steps {
        let pairs = stream.take_pairs(cfg.pairs_per_step);
        let mut tape = Tape::new();
        let bound = encoder.bind(&mut tape);
        let loss = pair_loss_on_tape(&mut tape, &bound, &pairs, cfg.gamma)?;
        let loss_value = tape.data(loss).item();
        if !loss_value.is_finite() {
            diverged = Some(format!("non-finite loss at step {step}"));
            break;
        }
        tape.backward(loss)?;
        let grads: Vec<Tensor> = bound
            .param_values()
            .iter()
            .map(|&v| tape.grad(v).clone())
            .collect();
        if let Err(e) = adam.step(&mut encoder, &grads) {
            diverged = Some(format!("step {step}: {e}"));
            break;
        }

        let val_due = step % cfg.val_every == 0 || step == cfg.steps;
        let val_accuracy = if val_due {
            let val_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(2));
            let report = evaluate_pairs(
                &encoder,
                &val_set,
                cfg.val_pairs,
                0.5,
                cfg.gamma,
                val_rng,
            )?;
            if best.as_ref().map_or(true, |(acc, _)| report.accuracy > *acc) {
                best = Some((report.accuracy, encoder.flatten_params()));
            }
            Some(report.accuracy)
        } else {
            None
        };
        log.push(TrainLogRow {
            step,
            loss: loss_value,
            val_accuracy,
        });
    }

    let best_val_accuracy = match &best {
        Some((acc, params)) => {
            encoder.set_flat_params(params);
            *acc
        }
        None => f64::NAN,
    };
    if let Some(reason) = &diverged {
        log::warn!("training aborted: {reason}; returning last good checkpoint");
    }
    Ok(TrainOutcome {
        model: SimilarityModel::new(encoder, cfg.gamma)?,
        log,
        best_val_accuracy,
        diverged,
    })
}

/// Pairwise-classification report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub n_pairs: usize,
    pub threshold: f64,
    pub gamma: f64,
    pub positives: usize,
    pub negatives: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fold: Option<usize>,
}

/// Evaluates balanced pairwise classification: `n_pairs` batch pairs with
/// forced label balance (counts differ by at most one); a pair is predicted
/// "same dataset" when the similarity is at least `threshold`. Scoring runs
/// in parallel against the frozen embedder.
pub fn evaluate_pairs<E: BatchEmbedder>(
    embedder: &E,
    datasets: &[TabularDataset],
    n_pairs: usize,
    threshold: f64,
    gamma: f64,
    rng: ChaCha8Rng,
) -> Result<EvalReport> {
    if datasets.len() < 2 {
        return Err(MfError::NotEnoughDatasets {
            needed: 2,
            got: datasets.len(),
        });
    }
    if n_pairs == 0 {
        return Err(MfError::Contract("n_pairs must be >= 1".into()));
    }
    let mut stream = StratifiedPairs::new(datasets, rng)?;
    let pairs = stream.take_pairs(n_pairs);
    let positives = pairs.iter().filter(|p| p.same_source).count();
    let negatives = n_pairs - positives;

    let correct: usize = pairs
        .par_iter()
        .map(|pair| {
            let a = embedder.embed(&pair.left)?;
            let b = embedder.embed(&pair.right)?;
            let i_hat = similarity_from_distance(gamma, euclidean(&a, &b));
            let predicted_same = i_hat >= threshold;
            Ok(usize::from(predicted_same == pair.same_source))
        })
        .sum::<Result<usize>>()?;

    Ok(EvalReport {
        accuracy: correct as f64 / n_pairs as f64,
        n_pairs,
        threshold,
        gamma,
        positives,
        negatives,
        fold: None,
    })
}

/// Writes the training log as CSV `step,loss,val_accuracy`.
pub fn write_train_log_csv(path: &std::path::Path, log: &[TrainLogRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["step", "loss", "val_accuracy"])?;
    for row in log {
        w.write_record(&[
            row.step.to_string(),
            format!("{:?}", row.loss),
            row.val_accuracy.map(|a| format!("{a:?}")).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
