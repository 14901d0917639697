//! Surrogate evaluation tables: per-dataset maps from configuration index to
//! validation error, plus a synthetic corpus generator whose construction
//! guarantees that similar datasets share good configurations.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::TabularDataset;
use crate::hpo::grid::ConfigGrid;
use crate::toygen::{generate_toy, subsample_fixed, ToyGenSpec, ToyKind};
use crate::{MfError, Result};

/// Validation error of every grid configuration on one dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct SurrogateTable {
    dataset: String,
    errors: Vec<f64>,
    y_min: f64,
    y_max: f64,
}

impl SurrogateTable {
    pub fn new(dataset: impl Into<String>, errors: Vec<f64>) -> Result<Self> {
        if errors.is_empty() {
            return Err(MfError::Hpo("empty surrogate table".into()));
        }
        if errors.iter().any(|e| !e.is_finite()) {
            return Err(MfError::Hpo("non-finite surrogate error".into()));
        }
        let y_min = errors.iter().cloned().fold(f64::INFINITY, f64::min);
        let y_max = errors.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Ok(SurrogateTable {
            dataset: dataset.into(),
            errors,
            y_min,
            y_max,
        })
    }

    pub fn dataset(&self) -> &str {
        &self.dataset
    }

    pub fn len(&self) -> usize {
        self.errors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn error(&self, config: usize) -> f64 {
        self.errors[config]
    }

    pub fn errors(&self) -> &[f64] {
        &self.errors
    }

    pub fn y_min(&self) -> f64 {
        self.y_min
    }

    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    /// A constant table has zero loss range and cannot be normalized.
    pub fn is_constant(&self) -> bool {
        self.y_max <= self.y_min
    }

    /// Index of the best (lowest-error) configuration.
    pub fn best_config(&self) -> usize {
        self.errors
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap()
    }

    /// Configuration indices sorted by ascending error (ties by index).
    pub fn configs_by_error(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.errors.len()).collect();
        order.sort_by(|&a, &b| {
            self.errors[a]
                .partial_cmp(&self.errors[b])
                .unwrap()
                .then(a.cmp(&b))
        });
        order
    }

    /// Normalized regret of an error value on this table.
    pub fn normalized(&self, error: f64) -> f64 {
        (error - self.y_min) / (self.y_max - self.y_min)
    }

    /// Writes `config_index,<axis columns>,val_error` rows.
    pub fn save_csv(&self, path: &Path, grid: &ConfigGrid) -> Result<()> {
        if grid.len() != self.errors.len() {
            return Err(MfError::Hpo(format!(
                "table has {} rows, grid has {}",
                self.errors.len(),
                grid.len()
            )));
        }
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["config_index".to_string()];
        header.extend(grid.axes().iter().map(|a| a.name.clone()));
        header.push("val_error".to_string());
        w.write_record(&header)?;
        for i in 0..grid.len() {
            let mut rec = vec![i.to_string()];
            for ai in 0..grid.axes().len() {
                rec.push(grid.describe(i, ai));
            }
            rec.push(format!("{:?}", self.errors[i]));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a table written by [`SurrogateTable::save_csv`]; only the
    /// `config_index` and `val_error` columns are consulted, so externally
    /// produced tables need just those two.
    pub fn load_csv(path: &Path, dataset: impl Into<String>, grid_size: usize) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let headers: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let idx_col = headers
            .iter()
            .position(|h| h == "config_index")
            .ok_or_else(|| MfError::Hpo("missing config_index column".into()))?;
        let err_col = headers
            .iter()
            .position(|h| h == "val_error")
            .ok_or_else(|| MfError::Hpo("missing val_error column".into()))?;
        let mut errors = vec![f64::NAN; grid_size];
        for rec in r.records() {
            let rec = rec?;
            let idx: usize = rec
                .get(idx_col)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| MfError::Hpo("bad config_index".into()))?;
            let err: f64 = rec
                .get(err_col)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| MfError::Hpo("bad val_error".into()))?;
            if idx >= grid_size {
                return Err(MfError::ConfigIndex {
                    index: idx,
                    size: grid_size,
                });
            }
            errors[idx] = err;
        }
        if errors.iter().any(|e| e.is_nan()) {
            return Err(MfError::Hpo("surrogate table does not cover the grid".into()));
        }
        SurrogateTable::new(dataset, errors)
    }
}

/// One synthetic corpus member.
#[derive(Clone, Debug)]
pub struct SynthEntry {
    pub dataset: TabularDataset,
    pub table: SurrogateTable,
    pub spec: ToyGenSpec,
}

/// Synthetic corpus: toy datasets paired with surrogate tables, keyed by name.
pub type SynthCorpus = BTreeMap<String, SynthEntry>;

/// SplitMix64-style hash mapped to [-1, 1].
fn hash_noise(a: u64, b: u64, c: u64) -> f64 {
    let mut z = a
        .wrapping_mul(0x9e3779b97f4a7c15)
        .wrapping_add(b.wrapping_mul(0xbf58476d1ce4e5b9))
        .wrapping_add(c.wrapping_mul(0x94d049bb133111eb));
    z ^= z >> 30;
    z = z.wrapping_mul(0xbf58476d1ce4e5b9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94d049bb133111eb);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

const SURROGATE_BASE_ERROR: f64 = 0.05;
const SURROGATE_CURVATURE: f64 = 0.08;
const SURROGATE_NOISE: f64 = 0.02;
/// Instance count of the working copy of each synthetic dataset.
const SURROGATE_SUBSAMPLE: usize = 200;

/// Generates `n_datasets` toy datasets, each with a surrogate table whose
/// latent optimum in encoded-configuration space is a deterministic function
/// of the dataset's generator kind and class count. Datasets with identical
/// (kind, class count) therefore share an identical table; datasets that are
/// close in meta-feature space get close optima, which is the structure
/// warm-starting exploits.
pub fn synth_surrogate(n_datasets: usize, grid: &ConfigGrid, seed: u64) -> Result<SynthCorpus> {
    if n_datasets < 2 {
        return Err(MfError::NotEnoughDatasets {
            needed: 2,
            got: n_datasets,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut corpus = BTreeMap::new();
    for i in 0..n_datasets {
        let spec = ToyGenSpec::sample(&mut rng);
        let name = format!("surro-{i:03}");
        let full = generate_toy(&spec, name.clone())?;
        let ds = subsample_fixed(&full, SURROGATE_SUBSAMPLE.min(full.n_instances()), &mut rng)?;

        // Latent optimum: the encoded vector of a grid configuration chosen
        // deterministically from (kind, class count).
        let kind_idx = match spec.kind {
            ToyKind::Circles => 0u64,
            ToyKind::Moons => 1,
            ToyKind::Blobs => 2,
        };
        let opt_key = kind_idx * 16 + spec.classes as u64;
        let mut opt_rng = ChaCha8Rng::seed_from_u64(seed ^ (0xA5A5_0000 + opt_key));
        let opt_config = opt_rng.gen_range(0..grid.len());
        let optimum = grid.encoded(opt_config).to_vec();

        let errors: Vec<f64> = (0..grid.len())
            .map(|ci| {
                let e = grid.encoded(ci);
                let d2: f64 = e
                    .iter()
                    .zip(&optimum)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                let noise = SURROGATE_NOISE * hash_noise(seed, opt_key, ci as u64);
                (SURROGATE_BASE_ERROR + SURROGATE_CURVATURE * d2 + noise).clamp(0.0, 1.0)
            })
            .collect();
        let table = SurrogateTable::new(name.clone(), errors)?;
        corpus.insert(
            name,
            SynthEntry {
                dataset: ds,
                table,
                spec,
            },
        );
    }
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_grid() -> ConfigGrid {
        ConfigGrid::reference()
    }

    #[test]
    fn synthetic_errors_stay_in_declared_range() {
        let grid = small_grid();
        let corpus = synth_surrogate(4, &grid, 7).unwrap();
        for entry in corpus.values() {
            let table = &entry.table;
            for &e in table.errors() {
                assert!(e >= table.y_min() && e <= table.y_max());
                assert!((0.0..=1.0).contains(&e));
            }
            assert!(!table.is_constant());
        }
    }

    #[test]
    fn identical_latent_optima_share_the_best_config() {
        let grid = small_grid();
        // Enough datasets that some (kind, classes) combination repeats.
        let corpus = synth_surrogate(30, &grid, 3).unwrap();
        let mut by_key: BTreeMap<(String, usize), Vec<usize>> = BTreeMap::new();
        for entry in corpus.values() {
            let key = (
                format!("{:?}", entry.dataset.kind()),
                entry.dataset.n_targets(),
            );
            by_key.entry(key).or_default().push(entry.table.best_config());
        }
        let mut repeated = 0;
        for (_, bests) in by_key {
            if bests.len() > 1 {
                repeated += 1;
                assert!(bests.windows(2).all(|w| w[0] == w[1]), "{bests:?}");
            }
        }
        assert!(repeated > 0, "corpus had no repeated (kind, classes) pair");
    }

    #[test]
    fn table_csv_roundtrip() {
        let grid = small_grid();
        let corpus = synth_surrogate(2, &grid, 11).unwrap();
        let table = corpus.values().next().unwrap().table.clone();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("table.csv");
        table.save_csv(&path, &grid).unwrap();
        let back = SurrogateTable::load_csv(&path, table.dataset(), grid.len()).unwrap();
        assert_eq!(back.errors().len(), table.errors().len());
        for (a, b) in back.errors().iter().zip(table.errors()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn constant_table_is_flagged() {
        let t = SurrogateTable::new("c", vec![0.4, 0.4, 0.4]).unwrap();
        assert!(t.is_constant());
    }
}
