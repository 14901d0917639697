//! Dataset directory layout shared by the commands: a `manifest.jsonl` file
//! next to `datasets/<name>.csv` files (header `x0,..,label`).

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use metafeat::dataset::{ingest_csv, TabularDataset, TargetColumn};
use metafeat::toygen::ManifestRecord;

pub fn datasets_dir(root: &Path) -> PathBuf {
    root.join("datasets")
}

pub fn manifest_path(root: &Path) -> PathBuf {
    root.join("manifest.jsonl")
}

/// Writes one dataset as CSV (`x0..x{M-1},label`), values in full precision.
pub fn write_dataset_csv(path: &Path, ds: &TabularDataset) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("writing {}", path.display()))?;
    let m = ds.n_predictors();
    let mut header: Vec<String> = (0..m).map(|i| format!("x{i}")).collect();
    header.push("label".into());
    w.write_record(&header)?;
    for r in 0..ds.n_instances() {
        let mut rec: Vec<String> = ds
            .predictors()
            .row(r)
            .iter()
            .map(|v| format!("{v:?}"))
            .collect();
        rec.push(format!("c{}", ds.class_of(r)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_manifest(path: &Path, records: &[ManifestRecord]) -> anyhow::Result<()> {
    let mut f = fs::File::create(path)?;
    for rec in records {
        writeln!(f, "{}", serde_json::to_string(rec)?)?;
    }
    Ok(())
}

pub fn read_manifest(path: &Path) -> anyhow::Result<Vec<ManifestRecord>> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

/// Loads every dataset listed in a directory's manifest, in manifest order.
pub fn load_corpus(root: &Path) -> anyhow::Result<Vec<TabularDataset>> {
    let records = read_manifest(&manifest_path(root))?;
    if records.is_empty() {
        bail!("manifest at {} lists no datasets", root.display());
    }
    let dir = datasets_dir(root);
    let mut out = Vec::with_capacity(records.len());
    for rec in &records {
        let path = dir.join(format!("{}.csv", rec.name));
        let ds = ingest_csv(&path, &TargetColumn::Name("label".into()))
            .with_context(|| format!("ingesting {}", path.display()))?;
        // Keep the generator kind from the manifest (ingestion tags files as
        // plain ingested data).
        let ds = TabularDataset::new(
            rec.name.clone(),
            ds.predictors().clone(),
            ds.targets().clone(),
            Some(rec.kind.into()),
        )?;
        out.push(ds);
    }
    Ok(out)
}
