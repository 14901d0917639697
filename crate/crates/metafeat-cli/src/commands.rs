//! Subcommand implementations. Each command resolves its configuration from
//! (JSON config file) <- (explicit flags), validates it, runs, and writes a
//! `resolved_config.json` next to its outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::anyhow;
use clap::Args;
use metafeat::dataset::TabularDataset;
use metafeat::encoder::{
    read_metafeatures_csv, write_metafeatures_csv, Architecture, SetEncoder,
};
use metafeat::engineered::{engineered_mf, ZScoreScaler};
use metafeat::hpo::{
    adtm, gp_smbo, random_search, result_rows, synth_surrogate as build_synth_corpus, warm_start,
    write_results_csv, ConfigGrid, HpoRun, LibraryEntry, SurrogateTable,
};
use metafeat::mds::classical_mds;
use metafeat::sampling::kfold_split;
use metafeat::similarity::{
    evaluate_pairs, train as train_model, write_train_log_csv, EngineeredEmbedder,
    TrainConfig,
};
use metafeat::toygen::{generate_toy, subsample_fixed, ManifestRecord, ToyGenSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dataio;
use crate::{CliError, CliResult};

/// Global flags shared by every command.
pub struct Common {
    pub seed: Option<u64>,
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

fn load_file_config<T: DeserializeOwned + Default>(path: &Option<PathBuf>) -> CliResult<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
        }
    }
}

fn resolve_out(common: &Common, from_config: Option<PathBuf>) -> CliResult<PathBuf> {
    common
        .out
        .clone()
        .or(from_config)
        .ok_or_else(|| CliError::Config("missing --out directory".into()))
}

fn write_resolved<T: Serialize>(out: &Path, resolved: &T) -> CliResult<()> {
    fs::create_dir_all(out).map_err(anyhow::Error::from)?;
    let json = serde_json::to_string_pretty(resolved).map_err(anyhow::Error::from)?;
    fs::write(out.join("resolved_config.json"), json).map_err(anyhow::Error::from)?;
    Ok(())
}

/// Deterministic per-run seed from a master seed and run coordinates.
fn mix_seed(master: u64, a: u64, b: u64) -> u64 {
    let mut z = master
        .wrapping_mul(0x9e3779b97f4a7c15)
        .wrapping_add(a.wrapping_mul(0xbf58476d1ce4e5b9))
        .wrapping_add(b.wrapping_mul(0x94d049bb133111eb));
    z ^= z >> 30;
    z = z.wrapping_mul(0xbf58476d1ce4e5b9);
    z ^= z >> 27;
    z
}

// ---------------------------------------------------------------------------
// gen-toy

#[derive(Args)]
pub struct GenToyArgs {
    /// Number of datasets to generate.
    #[arg(long)]
    count: Option<usize>,
    /// If > 0, store a fixed-size uniform row subsample of each dataset.
    #[arg(long)]
    subsample: Option<usize>,
}

#[derive(Serialize, Deserialize, Default)]
#[serde(default)]
struct GenToyConfig {
    count: Option<usize>,
    subsample: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct GenToyResolved {
    command: &'static str,
    count: usize,
    subsample: usize,
    seed: u64,
    out: PathBuf,
}

pub fn gen_toy(args: GenToyArgs, common: &Common) -> CliResult<()> {
    let file: GenToyConfig = load_file_config(&common.config)?;
    let resolved = GenToyResolved {
        command: "gen-toy",
        count: args.count.or(file.count).unwrap_or(100),
        subsample: args.subsample.or(file.subsample).unwrap_or(0),
        seed: common.seed.or(file.seed).unwrap_or(0),
        out: resolve_out(common, file.out)?,
    };
    if resolved.count == 0 {
        return Err(CliError::Config("count must be >= 1".into()));
    }
    let out = &resolved.out;
    write_resolved(out, &resolved)?;
    let ds_dir = dataio::datasets_dir(out);
    fs::create_dir_all(&ds_dir).map_err(anyhow::Error::from)?;

    let mut rng = ChaCha8Rng::seed_from_u64(resolved.seed);
    let mut records = Vec::with_capacity(resolved.count);
    for i in 0..resolved.count {
        let spec = ToyGenSpec::sample(&mut rng);
        let name = format!("toy-{i:04}");
        let mut ds = generate_toy(&spec, name.clone()).map_err(anyhow::Error::from)?;
        if resolved.subsample > 0 {
            let n = resolved.subsample.min(ds.n_instances());
            ds = subsample_fixed(&ds, n, &mut rng).map_err(anyhow::Error::from)?;
        }
        dataio::write_dataset_csv(&ds_dir.join(format!("{name}.csv")), &ds)?;
        let mut rec = ManifestRecord::for_spec(name, &spec);
        rec.n = ds.n_instances();
        records.push(rec);
    }
    dataio::write_manifest(&dataio::manifest_path(out), &records)?;
    println!("wrote {} datasets to {}", records.len(), out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// train

#[derive(Args)]
pub struct TrainArgs {
    /// Dataset directory (manifest.jsonl + datasets/).
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    pairs_per_step: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Architecture tag: toy | tabular.
    #[arg(long)]
    arch: Option<String>,
    /// Number of cross-validation folds (0 trains on everything).
    #[arg(long)]
    folds: Option<usize>,
    /// Which fold is the held-out test fold.
    #[arg(long)]
    fold: Option<usize>,
}

#[derive(Serialize, Deserialize, Default)]
#[serde(default)]
struct TrainFileConfig {
    data: Option<PathBuf>,
    steps: Option<u64>,
    pairs_per_step: Option<usize>,
    gamma: Option<f64>,
    learning_rate: Option<f64>,
    arch: Option<String>,
    folds: Option<usize>,
    fold: Option<usize>,
    val_every: Option<u64>,
    val_pairs: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct TrainResolved {
    command: &'static str,
    data: PathBuf,
    steps: u64,
    pairs_per_step: usize,
    gamma: f64,
    learning_rate: f64,
    arch: String,
    folds: usize,
    fold: usize,
    val_every: u64,
    val_pairs: usize,
    seed: u64,
    out: PathBuf,
    train_datasets: Vec<String>,
    test_datasets: Vec<String>,
}

/// Splits a corpus into (train, test) name sets for one fold; `folds == 0`
/// trains on everything.
fn fold_names(
    names: &[String],
    folds: usize,
    fold: usize,
    seed: u64,
) -> CliResult<(Vec<String>, Vec<String>)> {
    if folds == 0 {
        return Ok((names.to_vec(), Vec::new()));
    }
    if fold >= folds {
        return Err(CliError::Config(format!(
            "fold {fold} out of range for {folds} folds"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0xF01D, 0));
    let splits = kfold_split(names, folds, &mut rng)
        .map_err(|e| CliError::Config(e.to_string()))?;
    Ok(splits[fold].clone())
}

pub fn train(args: TrainArgs, common: &Common) -> CliResult<()> {
    let file: TrainFileConfig = load_file_config(&common.config)?;
    let data = args
        .data
        .or(file.data)
        .ok_or_else(|| CliError::Config("missing --data directory".into()))?;
    let arch_str = args.arch.or(file.arch).unwrap_or_else(|| "toy".into());
    let arch = Architecture::parse(&arch_str).map_err(|e| CliError::Config(e.to_string()))?;
    let defaults = TrainConfig::default();
    let mut resolved = TrainResolved {
        command: "train",
        data,
        steps: args.steps.or(file.steps).unwrap_or(defaults.steps),
        pairs_per_step: args
            .pairs_per_step
            .or(file.pairs_per_step)
            .unwrap_or(defaults.pairs_per_step),
        gamma: args.gamma.or(file.gamma).unwrap_or(defaults.gamma),
        learning_rate: args
            .learning_rate
            .or(file.learning_rate)
            .unwrap_or(defaults.adam.learning_rate),
        arch: arch_str,
        folds: args.folds.or(file.folds).unwrap_or(0),
        fold: args.fold.or(file.fold).unwrap_or(0),
        val_every: file.val_every.unwrap_or(defaults.val_every),
        val_pairs: file.val_pairs.unwrap_or(defaults.val_pairs),
        seed: common.seed.or(file.seed).unwrap_or(0),
        out: resolve_out(common, file.out)?,
        train_datasets: Vec::new(),
        test_datasets: Vec::new(),
    };
    if resolved.steps == 0 {
        return Err(CliError::Config("steps must be >= 1".into()));
    }

    let corpus = dataio::load_corpus(&resolved.data)?;
    let names: Vec<String> = corpus.iter().map(|d| d.name().to_string()).collect();
    let (train_names, test_names) =
        fold_names(&names, resolved.folds, resolved.fold, resolved.seed)?;
    resolved.train_datasets = train_names.clone();
    resolved.test_datasets = test_names;
    let out = resolved.out.clone();
    write_resolved(&out, &resolved)?;

    let train_set: Vec<TabularDataset> = corpus
        .into_iter()
        .filter(|d| train_names.contains(&d.name().to_string()))
        .collect();
    let cfg = TrainConfig {
        steps: resolved.steps,
        pairs_per_step: resolved.pairs_per_step,
        adam: ndnet::AdamConfig {
            learning_rate: resolved.learning_rate,
            ..ndnet::AdamConfig::default()
        },
        gamma: resolved.gamma,
        seed: resolved.seed,
        fold: if resolved.folds > 0 {
            Some(resolved.fold)
        } else {
            None
        },
        architecture: arch,
        identity_output: false,
        val_fraction: defaults.val_fraction,
        val_every: resolved.val_every,
        val_pairs: resolved.val_pairs,
    };
    let outcome = train_model(&train_set, &cfg).map_err(anyhow::Error::from)?;
    outcome
        .model
        .encoder()
        .save_checkpoint(&out.join("checkpoint.json"))
        .map_err(anyhow::Error::from)?;
    write_train_log_csv(&out.join("train_log.csv"), &outcome.log)
        .map_err(anyhow::Error::from)?;
    println!(
        "trained {} steps; best validation accuracy {:.4}",
        resolved.steps, outcome.best_val_accuracy
    );
    if let Some(reason) = outcome.diverged {
        return Err(CliError::Run(anyhow!(
            "training diverged ({reason}); last good checkpoint written to {}",
            out.display()
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// eval-pairs

#[derive(Args)]
pub struct EvalPairsArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    /// Encoder checkpoint; omit when evaluating the engineered baseline.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Evaluate the engineered baseline instead of an encoder: `mf1`.
    #[arg(long)]
    baseline: Option<String>,
    #[arg(long)]
    n_pairs: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    fold: Option<usize>,
}

#[derive(Serialize, Deserialize, Default)]
#[serde(default)]
struct EvalFileConfig {
    data: Option<PathBuf>,
    checkpoint: Option<PathBuf>,
    baseline: Option<String>,
    n_pairs: Option<usize>,
    gamma: Option<f64>,
    threshold: Option<f64>,
    folds: Option<usize>,
    fold: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct EvalResolved {
    command: &'static str,
    data: PathBuf,
    checkpoint: Option<PathBuf>,
    baseline: Option<String>,
    n_pairs: usize,
    gamma: f64,
    threshold: f64,
    folds: usize,
    fold: usize,
    seed: u64,
    out: PathBuf,
}

pub fn eval_pairs(args: EvalPairsArgs, common: &Common) -> CliResult<()> {
    let file: EvalFileConfig = load_file_config(&common.config)?;
    let resolved = EvalResolved {
        command: "eval-pairs",
        data: args
            .data
            .or(file.data)
            .ok_or_else(|| CliError::Config("missing --data directory".into()))?,
        checkpoint: args.checkpoint.or(file.checkpoint),
        baseline: args.baseline.or(file.baseline),
        n_pairs: args.n_pairs.or(file.n_pairs).unwrap_or(2000),
        gamma: args.gamma.or(file.gamma).unwrap_or(1.0),
        threshold: args.threshold.or(file.threshold).unwrap_or(0.5),
        folds: args.folds.or(file.folds).unwrap_or(0),
        fold: args.fold.or(file.fold).unwrap_or(0),
        seed: common.seed.or(file.seed).unwrap_or(0),
        out: resolve_out(common, file.out)?,
    };
    match (&resolved.checkpoint, &resolved.baseline) {
        (None, None) => {
            return Err(CliError::Config(
                "need either --checkpoint or --baseline mf1".into(),
            ))
        }
        (Some(_), Some(_)) => {
            return Err(CliError::Config(
                "--checkpoint and --baseline are mutually exclusive".into(),
            ))
        }
        (None, Some(b)) if b != "mf1" => {
            return Err(CliError::Config(format!("unknown baseline '{b}'")))
        }
        _ => {}
    }
    let out = resolved.out.clone();
    write_resolved(&out, &resolved)?;

    let corpus = dataio::load_corpus(&resolved.data)?;
    let names: Vec<String> = corpus.iter().map(|d| d.name().to_string()).collect();
    let (train_names, test_names) =
        fold_names(&names, resolved.folds, resolved.fold, resolved.seed)?;
    let test_set: Vec<TabularDataset> = if resolved.folds == 0 {
        corpus.clone()
    } else {
        corpus
            .iter()
            .filter(|d| test_names.contains(&d.name().to_string()))
            .cloned()
            .collect()
    };
    let eval_rng = ChaCha8Rng::seed_from_u64(mix_seed(resolved.seed, 0xE7A1, 0));

    let mut report = match (&resolved.checkpoint, &resolved.baseline) {
        (Some(path), None) => {
            let encoder = SetEncoder::load_checkpoint(path).map_err(anyhow::Error::from)?;
            evaluate_pairs(
                &encoder,
                &test_set,
                resolved.n_pairs,
                resolved.threshold,
                resolved.gamma,
                eval_rng,
            )
            .map_err(anyhow::Error::from)?
        }
        (None, Some(_)) => {
            let train_set: Vec<TabularDataset> = corpus
                .iter()
                .filter(|d| train_names.contains(&d.name().to_string()))
                .cloned()
                .collect();
            let fit_on = if train_set.is_empty() { &test_set } else { &train_set };
            let mut fit_rng = ChaCha8Rng::seed_from_u64(mix_seed(resolved.seed, 0xF17, 0));
            let embedder = EngineeredEmbedder::fit(fit_on, 512, &mut fit_rng)
                .map_err(anyhow::Error::from)?;
            evaluate_pairs(
                &embedder,
                &test_set,
                resolved.n_pairs,
                resolved.threshold,
                resolved.gamma,
                eval_rng,
            )
            .map_err(anyhow::Error::from)?
        }
        _ => unreachable!(),
    };
    if resolved.folds > 0 {
        report.fold = Some(resolved.fold);
    }
    let json = serde_json::to_string_pretty(&report).map_err(anyhow::Error::from)?;
    fs::write(out.join("report.json"), &json).map_err(anyhow::Error::from)?;
    println!("accuracy {:.4} over {} pairs", report.accuracy, report.n_pairs);
    Ok(())
}

// ---------------------------------------------------------------------------
// extract

#[derive(Args)]
pub struct ExtractArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Batches averaged per dataset (B).
    #[arg(long)]
    batches: Option<usize>,
}

#[derive(Serialize, Deserialize, Default)]
#[serde(default)]
struct ExtractFileConfig {
    data: Option<PathBuf>,
    checkpoint: Option<PathBuf>,
    batches: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct ExtractResolved {
    command: &'static str,
    data: PathBuf,
    checkpoint: PathBuf,
    batches: usize,
    seed: u64,
    out: PathBuf,
}

pub fn extract(args: ExtractArgs, common: &Common) -> CliResult<()> {
    let file: ExtractFileConfig = load_file_config(&common.config)?;
    let resolved = ExtractResolved {
        command: "extract",
        data: args
            .data
            .or(file.data)
            .ok_or_else(|| CliError::Config("missing --data directory".into()))?,
        checkpoint: args
            .checkpoint
            .or(file.checkpoint)
            .ok_or_else(|| CliError::Config("missing --checkpoint".into()))?,
        batches: args.batches.or(file.batches).unwrap_or(10),
        seed: common.seed.or(file.seed).unwrap_or(0),
        out: resolve_out(common, file.out)?,
    };
    if resolved.batches == 0 {
        return Err(CliError::Config("batches must be >= 1".into()));
    }
    let out = resolved.out.clone();
    write_resolved(&out, &resolved)?;

    let encoder = SetEncoder::load_checkpoint(&resolved.checkpoint).map_err(anyhow::Error::from)?;
    let corpus = dataio::load_corpus(&resolved.data)?;
    let mut rows = Vec::with_capacity(corpus.len());
    for (i, ds) in corpus.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(resolved.seed, 0xE872, i as u64));
        rows.push(
            encoder
                .extract(ds, resolved.batches, &mut rng)
                .map_err(anyhow::Error::from)?,
        );
    }
    write_metafeatures_csv(&out.join("metafeatures.csv"), &rows).map_err(anyhow::Error::from)?;
    println!("extracted meta-features for {} datasets", rows.len());
    Ok(())
}

// ---------------------------------------------------------------------------
// embed-mds

#[derive(Args)]
pub struct EmbedMdsArgs {
    /// Meta-feature CSV (name,k0..k{K-1}).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Optional manifest for kind labels in the output.
    #[arg(long)]
    labels: Option<PathBuf>,
}

#[derive(Serialize, Deserialize, Default)]
#[serde(default)]
struct EmbedFileConfig {
    input: Option<PathBuf>,
    labels: Option<PathBuf>,
    seed: Option<u64>,
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct EmbedResolved {
    command: &'static str,
    input: PathBuf,
    labels: Option<PathBuf>,
    out: PathBuf,
}

pub fn embed_mds(args: EmbedMdsArgs, common: &Common) -> CliResult<()> {
    let file: EmbedFileConfig = load_file_config(&common.config)?;
    let resolved = EmbedResolved {
        command: "embed-mds",
        input: args
            .input
            .or(file.input)
            .ok_or_else(|| CliError::Config("missing --input meta-feature CSV".into()))?,
        labels: args.labels.or(file.labels),
        out: resolve_out(common, file.out)?,
    };
    let out = resolved.out.clone();
    write_resolved(&out, &resolved)?;

    let rows = read_metafeatures_csv(&resolved.input).map_err(anyhow::Error::from)?;
    if rows.len() < 3 {
        return Err(CliError::Config(format!(
            "MDS needs at least 3 meta-feature rows, got {}",
            rows.len()
        )));
    }
    let labels: BTreeMap<String, String> = match &resolved.labels {
        Some(path) => dataio::read_manifest(path)?
            .into_iter()
            .map(|r| {
                let kind = serde_json::to_string(&r.kind)
                    .unwrap_or_default()
                    .trim_matches('"')
                    .to_string();
                (r.name, kind)
            })
            .collect(),
        None => BTreeMap::new(),
    };
    let points: Vec<Vec<f64>> = rows.iter().map(|r| r.values.clone()).collect();
    let embedding = classical_mds(&points).map_err(anyhow::Error::from)?;

    let path = out.join("embedding.csv");
    let mut w = csv::Writer::from_path(&path).map_err(anyhow::Error::from)?;
    w.write_record(["name", "x", "y", "label"])
        .map_err(anyhow::Error::from)?;
    for (row, coord) in rows.iter().zip(&embedding.coords) {
        w.write_record(&[
            row.name.clone(),
            format!("{:?}", coord[0]),
            format!("{:?}", coord[1]),
            labels.get(&row.name).cloned().unwrap_or_default(),
        ])
        .map_err(anyhow::Error::from)?;
    }
    w.flush().map_err(anyhow::Error::from)?;
    println!("wrote {}", path.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// synth-surrogate

#[derive(Args)]
pub struct SynthSurrogateArgs {
    /// Number of datasets in the corpus.
    #[arg(long)]
    count: Option<usize>,
}

#[derive(Serialize, Deserialize, Default)]
#[serde(default)]
struct SynthFileConfig {
    count: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct SynthResolved {
    command: &'static str,
    count: usize,
    seed: u64,
    out: PathBuf,
}

pub fn synth_surrogate(args: SynthSurrogateArgs, common: &Common) -> CliResult<()> {
    let file: SynthFileConfig = load_file_config(&common.config)?;
    let resolved = SynthResolved {
        command: "synth-surrogate",
        count: args.count.or(file.count).unwrap_or(50),
        seed: common.seed.or(file.seed).unwrap_or(0),
        out: resolve_out(common, file.out)?,
    };
    if resolved.count < 2 {
        return Err(CliError::Config("count must be >= 2".into()));
    }
    let out = resolved.out.clone();
    write_resolved(&out, &resolved)?;

    let grid = ConfigGrid::reference();
    let corpus =
        build_synth_corpus(resolved.count, &grid, resolved.seed).map_err(anyhow::Error::from)?;
    grid.save_manifest(&out.join("grid.json")).map_err(anyhow::Error::from)?;

    let ds_dir = dataio::datasets_dir(&out);
    let table_dir = out.join("tables");
    fs::create_dir_all(&ds_dir).map_err(anyhow::Error::from)?;
    fs::create_dir_all(&table_dir).map_err(anyhow::Error::from)?;
    let mut records = Vec::new();
    for (name, entry) in &corpus {
        dataio::write_dataset_csv(&ds_dir.join(format!("{name}.csv")), &entry.dataset)?;
        entry
            .table
            .save_csv(&table_dir.join(format!("{name}.csv")), &grid)
            .map_err(anyhow::Error::from)?;
        let mut rec = ManifestRecord::for_spec(name.clone(), &entry.spec);
        rec.n = entry.dataset.n_instances();
        records.push(rec);
    }
    dataio::write_manifest(&dataio::manifest_path(&out), &records)?;
    println!(
        "wrote {} datasets and tables ({} grid configurations)",
        records.len(),
        grid.len()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// hpo

#[derive(Args)]
pub struct HpoArgs {
    /// Surrogate corpus directory (from synth-surrogate or compatible).
    #[arg(long)]
    surrogate: Option<PathBuf>,
    /// Meta-feature CSV for the learned warm start (from extract).
    #[arg(long)]
    metafeatures: Option<PathBuf>,
    /// Comma-separated methods: random,gp,gp-warm-d2v,gp-warm-mf1.
    #[arg(long)]
    methods: Option<String>,
    /// Trials per run.
    #[arg(long)]
    budget: Option<usize>,
    /// Independent seeds per (dataset, method).
    #[arg(long)]
    n_seeds: Option<u64>,
    #[arg(long)]
    n_init: Option<usize>,
    #[arg(long)]
    n_neighbors: Option<usize>,
}

#[derive(Serialize, Deserialize, Default)]
#[serde(default)]
struct HpoFileConfig {
    surrogate: Option<PathBuf>,
    metafeatures: Option<PathBuf>,
    methods: Option<String>,
    budget: Option<usize>,
    n_seeds: Option<u64>,
    n_init: Option<usize>,
    n_neighbors: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct HpoResolved {
    command: &'static str,
    surrogate: PathBuf,
    metafeatures: Option<PathBuf>,
    methods: Vec<String>,
    budget: usize,
    n_seeds: u64,
    n_init: usize,
    n_neighbors: usize,
    seed: u64,
    out: PathBuf,
}

pub fn hpo(args: HpoArgs, common: &Common) -> CliResult<()> {
    let file: HpoFileConfig = load_file_config(&common.config)?;
    let methods: Vec<String> = args
        .methods
        .or(file.methods)
        .unwrap_or_else(|| "random,gp,gp-warm-d2v,gp-warm-mf1".into())
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    for m in &methods {
        if !["random", "gp", "gp-warm-d2v", "gp-warm-mf1"].contains(&m.as_str()) {
            return Err(CliError::Config(format!("unknown method '{m}'")));
        }
    }
    let resolved = HpoResolved {
        command: "hpo",
        surrogate: args
            .surrogate
            .or(file.surrogate)
            .ok_or_else(|| CliError::Config("missing --surrogate directory".into()))?,
        metafeatures: args.metafeatures.or(file.metafeatures),
        methods,
        budget: args.budget.or(file.budget).unwrap_or(20),
        n_seeds: args.n_seeds.or(file.n_seeds).unwrap_or(10),
        n_init: args.n_init.or(file.n_init).unwrap_or(5),
        n_neighbors: args.n_neighbors.or(file.n_neighbors).unwrap_or(3),
        seed: common.seed.or(file.seed).unwrap_or(0),
        out: resolve_out(common, file.out)?,
    };
    if resolved.methods.contains(&"gp-warm-d2v".to_string()) && resolved.metafeatures.is_none() {
        return Err(CliError::Config(
            "gp-warm-d2v needs --metafeatures (run `metafeat extract` first)".into(),
        ));
    }
    if resolved.budget < resolved.n_init {
        return Err(CliError::Config(
            "budget must be at least n_init".into(),
        ));
    }
    let out = resolved.out.clone();
    write_resolved(&out, &resolved)?;

    // Load corpus: grid, tables, datasets.
    let grid =
        ConfigGrid::load_manifest(&resolved.surrogate.join("grid.json")).map_err(anyhow::Error::from)?;
    let records = dataio::read_manifest(&dataio::manifest_path(&resolved.surrogate))?;
    let datasets = dataio::load_corpus(&resolved.surrogate)?;
    let mut tables: BTreeMap<String, SurrogateTable> = BTreeMap::new();
    for rec in &records {
        let path = resolved.surrogate.join("tables").join(format!("{}.csv", rec.name));
        tables.insert(
            rec.name.clone(),
            SurrogateTable::load_csv(&path, rec.name.clone(), grid.len())
                .map_err(anyhow::Error::from)?,
        );
    }
    let names: Vec<String> = records.iter().map(|r| r.name.clone()).collect();

    // Meta-feature libraries.
    let d2v_mf: BTreeMap<String, Vec<f64>> = match &resolved.metafeatures {
        Some(path) => read_metafeatures_csv(path)
            .map_err(anyhow::Error::from)?
            .into_iter()
            .map(|m| (m.name, m.values))
            .collect(),
        None => BTreeMap::new(),
    };
    if resolved.methods.contains(&"gp-warm-d2v".to_string()) {
        for n in &names {
            if !d2v_mf.contains_key(n) {
                return Err(CliError::Run(anyhow!(
                    "meta-feature CSV lacks dataset '{n}'"
                )));
            }
        }
    }
    let mf1_raw: BTreeMap<String, Vec<f64>> = datasets
        .iter()
        .map(|d| (d.name().to_string(), engineered_mf(d)))
        .collect();

    // All (dataset, method, seed) runs, leave-one-dataset-out.
    let mut jobs = Vec::new();
    for (di, name) in names.iter().enumerate() {
        for method in &resolved.methods {
            for s in 0..resolved.n_seeds {
                jobs.push((di, name.clone(), method.clone(), s));
            }
        }
    }
    let runs: Vec<anyhow::Result<(String, String, u64, HpoRun)>> = jobs
        .par_iter()
        .map(|(di, name, method, s)| {
            let table = &tables[name];
            let run_seed = mix_seed(resolved.seed, *di as u64, *s);
            let run = match method.as_str() {
                "random" => random_search(table, resolved.budget, run_seed)?,
                "gp" => {
                    let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
                    let mut pool: Vec<usize> = (0..grid.len()).collect();
                    let init: Vec<usize> = (0..resolved.n_init)
                        .map(|_| pool.swap_remove(rng.gen_range(0..pool.len())))
                        .collect();
                    gp_smbo(table, &grid, &init, resolved.budget, run_seed)?
                }
                "gp-warm-d2v" | "gp-warm-mf1" => {
                    let source = if method == "gp-warm-d2v" { &d2v_mf } else { &mf1_raw };
                    // Library excludes the target (leave-one-dataset-out).
                    let lib_names: Vec<&String> =
                        names.iter().filter(|n| *n != name).collect();
                    let (target_vec, lib_vecs) = if method == "gp-warm-mf1" {
                        // Engineered features are z-scored across the library.
                        let fit: Vec<Vec<f64>> =
                            lib_names.iter().map(|n| source[*n].clone()).collect();
                        let scaler = ZScoreScaler::fit(&fit);
                        (
                            scaler.apply(&source[name]),
                            lib_names
                                .iter()
                                .map(|n| scaler.apply(&source[*n]))
                                .collect::<Vec<_>>(),
                        )
                    } else {
                        (
                            source[name].clone(),
                            lib_names
                                .iter()
                                .map(|n| source[*n].clone())
                                .collect::<Vec<_>>(),
                        )
                    };
                    let entries: Vec<LibraryEntry<'_>> = lib_names
                        .iter()
                        .zip(&lib_vecs)
                        .map(|(n, v)| LibraryEntry {
                            name: n.as_str(),
                            meta: v,
                            table: &tables[*n],
                        })
                        .collect();
                    let init = warm_start(
                        &target_vec,
                        &entries,
                        resolved.n_init,
                        resolved.n_neighbors,
                        grid.len(),
                    )?;
                    gp_smbo(table, &grid, &init, resolved.budget, run_seed)?
                }
                _ => unreachable!(),
            };
            let mut run = run;
            run.method = method.clone();
            run.seed = *s;
            Ok((name.clone(), method.clone(), *s, run))
        })
        .collect();

    let mut rows = Vec::new();
    let mut by_method_seed: BTreeMap<(String, u64), BTreeMap<String, HpoRun>> = BTreeMap::new();
    for r in runs {
        let (name, method, s, run) = r?;
        rows.extend(result_rows(&name, &run, &tables[&name]));
        by_method_seed
            .entry((method, s))
            .or_default()
            .insert(name, run);
    }
    rows.sort_by(|a, b| {
        (&a.method, &a.dataset, a.seed, a.trial).cmp(&(&b.method, &b.dataset, b.seed, b.trial))
    });
    write_results_csv(&out.join("results.csv"), &rows).map_err(anyhow::Error::from)?;

    // ADTM summary: per method, averaged over seeds, at a few checkpoints.
    let checkpoints: Vec<usize> = [1, 5, 10, resolved.budget]
        .into_iter()
        .filter(|&t| t <= resolved.budget)
        .collect();
    let mut summary: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for method in &resolved.methods {
        let mut per_t: BTreeMap<String, f64> = BTreeMap::new();
        for &t in &checkpoints {
            let mut acc = 0.0;
            let mut count = 0;
            for ((m, _), runs) in &by_method_seed {
                if m == method {
                    acc += adtm(runs, &tables, t).map_err(anyhow::Error::from)?;
                    count += 1;
                }
            }
            per_t.insert(format!("t{t}"), acc / count as f64);
        }
        summary.insert(method.clone(), per_t);
    }
    let json = serde_json::to_string_pretty(&summary).map_err(anyhow::Error::from)?;
    fs::write(out.join("adtm.json"), &json).map_err(anyhow::Error::from)?;
    println!("{json}");
    Ok(())
}
