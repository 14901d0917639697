//! Hyperparameter search over surrogate tables: random search, GP-based
//! sequential model-based optimization with expected improvement, nearest-
//! dataset warm starting, and the average-distance-to-minimum score.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::hpo::gp::{expected_improvement, GpModel};
use crate::hpo::grid::ConfigGrid;
use crate::hpo::surrogate::SurrogateTable;
use crate::{MfError, Result};

/// One optimization run: the trialed configuration indices (never repeating)
/// and the incumbent error after each trial.
#[derive(Clone, Debug)]
pub struct HpoRun {
    pub method: String,
    pub seed: u64,
    pub trials: Vec<usize>,
    pub incumbent: Vec<f64>,
}

impl HpoRun {
    fn from_trials(method: &str, seed: u64, trials: Vec<usize>, table: &SurrogateTable) -> Self {
        let mut incumbent = Vec::with_capacity(trials.len());
        let mut best = f64::INFINITY;
        for &c in &trials {
            best = best.min(table.error(c));
            incumbent.push(best);
        }
        HpoRun {
            method: method.to_string(),
            seed,
            trials,
            incumbent,
        }
    }
}

/// Uniform draws without replacement.
pub fn random_search(table: &SurrogateTable, budget: usize, seed: u64) -> Result<HpoRun> {
    if budget > table.len() {
        return Err(MfError::Hpo(format!(
            "budget {budget} exceeds grid size {}",
            table.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut all: Vec<usize> = (0..table.len()).collect();
    all.shuffle(&mut rng);
    all.truncate(budget);
    Ok(HpoRun::from_trials("random", seed, all, table))
}

/// A library dataset available for warm starting.
pub struct LibraryEntry<'a> {
    pub name: &'a str,
    pub meta: &'a [f64],
    pub table: &'a SurrogateTable,
}

/// Ranks library datasets by Euclidean meta-feature distance to the target,
/// then collects configurations round-robin from the nearest `n_neighbors`
/// datasets' best-first lists (skipping duplicates) until `n_init` distinct
/// configurations are gathered.
pub fn warm_start(
    target: &[f64],
    library: &[LibraryEntry<'_>],
    n_init: usize,
    n_neighbors: usize,
    grid_size: usize,
) -> Result<Vec<usize>> {
    if library.is_empty() {
        return Err(MfError::NotEnoughDatasets { needed: 1, got: 0 });
    }
    if n_init > grid_size {
        return Err(MfError::Hpo(format!(
            "n_init {n_init} exceeds grid size {grid_size}"
        )));
    }
    let mut order: Vec<usize> = (0..library.len()).collect();
    let dist = |entry: &LibraryEntry<'_>| -> f64 {
        entry
            .meta
            .iter()
            .zip(target)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
    };
    // Stable rank: ties broken by name so the result is deterministic.
    order.sort_by(|&a, &b| {
        dist(&library[a])
            .partial_cmp(&dist(&library[b]))
            .unwrap()
            .then_with(|| library[a].name.cmp(library[b].name))
    });
    let neighbors: Vec<&LibraryEntry<'_>> = order
        .iter()
        .take(n_neighbors.max(1).min(library.len()))
        .map(|&i| &library[i])
        .collect();
    let ranked: Vec<Vec<usize>> = neighbors
        .iter()
        .map(|e| e.table.configs_by_error())
        .collect();

    let mut picked = Vec::with_capacity(n_init);
    let mut rank = 0;
    while picked.len() < n_init {
        let mut advanced = false;
        for list in &ranked {
            if rank < list.len() {
                advanced = true;
                let c = list[rank];
                if !picked.contains(&c) {
                    picked.push(c);
                    if picked.len() == n_init {
                        break;
                    }
                }
            }
        }
        if !advanced {
            return Err(MfError::Hpo(
                "warm start exhausted neighbor tables before n_init".into(),
            ));
        }
        rank += 1;
    }
    Ok(picked)
}

/// GP-based sequential optimization: evaluates `init` first, then repeatedly
/// fits a zero-mean Matérn-3/2 GP on the standardized observed errors and
/// trials the unobserved configuration with the highest expected improvement.
pub fn gp_smbo(
    table: &SurrogateTable,
    grid: &ConfigGrid,
    init: &[usize],
    budget: usize,
    seed: u64,
) -> Result<HpoRun> {
    if grid.len() != table.len() {
        return Err(MfError::Hpo(format!(
            "grid size {} != table size {}",
            grid.len(),
            table.len()
        )));
    }
    if budget < init.len() {
        return Err(MfError::Hpo(format!(
            "budget {budget} below initialization size {}",
            init.len()
        )));
    }
    if budget > table.len() {
        return Err(MfError::Hpo(format!(
            "budget {budget} exceeds grid size {}",
            table.len()
        )));
    }
    let mut trials: Vec<usize> = Vec::with_capacity(budget);
    let mut observed = vec![false; table.len()];
    for &c in init {
        if c >= table.len() {
            return Err(MfError::ConfigIndex {
                index: c,
                size: table.len(),
            });
        }
        if !observed[c] {
            observed[c] = true;
            trials.push(c);
        }
    }
    // An empty initialization starts from one random configuration.
    if trials.is_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = rand::Rng::gen_range(&mut rng, 0..table.len());
        observed[c] = true;
        trials.push(c);
    }

    while trials.len() < budget {
        let xs: Vec<Vec<f64>> = trials.iter().map(|&c| grid.encoded(c).to_vec()).collect();
        let raw: Vec<f64> = trials.iter().map(|&c| table.error(c)).collect();
        let mean = raw.iter().sum::<f64>() / raw.len() as f64;
        let var = raw.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / raw.len() as f64;
        let std = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        let ys: Vec<f64> = raw.iter().map(|y| (y - mean) / std).collect();
        let best = ys.iter().cloned().fold(f64::INFINITY, f64::min);

        let gp = GpModel::fit_ml(&xs, &ys)?;
        let mut next = None;
        let mut best_ei = f64::NEG_INFINITY;
        for c in 0..table.len() {
            if observed[c] {
                continue;
            }
            let (mu, v) = gp.posterior(grid.encoded(c));
            let ei = expected_improvement(mu, v, best);
            if ei > best_ei {
                best_ei = ei;
                next = Some(c);
            }
        }
        let c = next.expect("grid not exhausted");
        observed[c] = true;
        trials.push(c);
    }
    Ok(HpoRun::from_trials("gp", seed, trials, table))
}

/// Average distance to the minimum after `t` trials: the mean over datasets
/// of the best normalized regret within each run's first `t` trials.
/// Constant-loss datasets are excluded with a warning.
pub fn adtm(
    runs: &BTreeMap<String, HpoRun>,
    tables: &BTreeMap<String, SurrogateTable>,
    t: usize,
) -> Result<f64> {
    if t == 0 {
        return Err(MfError::Contract("adtm needs t >= 1".into()));
    }
    let mut total = 0.0;
    let mut counted = 0usize;
    for (name, run) in runs {
        let table = tables
            .get(name)
            .ok_or_else(|| MfError::Hpo(format!("no surrogate table for '{name}'")))?;
        if run.trials.len() < t {
            return Err(MfError::Hpo(format!(
                "run for '{name}' has {} trials, adtm needs {t}",
                run.trials.len()
            )));
        }
        if table.is_constant() {
            log::warn!("dataset '{name}' has a constant loss range; excluded from ADTM");
            continue;
        }
        total += table.normalized(run.incumbent[t - 1]);
        counted += 1;
    }
    if counted == 0 {
        return Err(MfError::Hpo(
            "every dataset was excluded from ADTM (constant loss ranges)".into(),
        ));
    }
    Ok(total / counted as f64)
}

/// One row of the results file
/// (`dataset,method,seed,trial,incumbent_error,adtm_numerator`).
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct ResultRow {
    pub dataset: String,
    pub method: String,
    pub seed: u64,
    pub trial: usize,
    pub incumbent_error: f64,
    pub adtm_numerator: f64,
}

pub fn write_results_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "dataset",
        "method",
        "seed",
        "trial",
        "incumbent_error",
        "adtm_numerator",
    ])?;
    for r in rows {
        w.write_record(&[
            r.dataset.clone(),
            r.method.clone(),
            r.seed.to_string(),
            r.trial.to_string(),
            format!("{:?}", r.incumbent_error),
            format!("{:?}", r.adtm_numerator),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Expands a run into result rows against its table.
pub fn result_rows(dataset: &str, run: &HpoRun, table: &SurrogateTable) -> Vec<ResultRow> {
    run.trials
        .iter()
        .enumerate()
        .map(|(i, _)| ResultRow {
            dataset: dataset.to_string(),
            method: run.method.clone(),
            seed: run.seed,
            trial: i + 1,
            incumbent_error: run.incumbent[i],
            adtm_numerator: if table.is_constant() {
                f64::NAN
            } else {
                table.normalized(run.incumbent[i])
            },
        })
        .collect()
}
