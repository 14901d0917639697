//! Synthetic 2-D classification dataset generators (circles, moons, blobs)
//! and fixed-size subsampling.

use ndnet::Tensor;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{GeneratorKind, TabularDataset};
use crate::{MfError, Result};

/// Standard deviation of the optional predictor jitter. The magnitude of the
/// perturbation is a free constant of this corpus; it is fixed here so every
/// generated dataset is reproducible.
pub const NOISE_SIGMA: f64 = 0.1;

/// Ratio between the inner and outer circle radius.
pub const CIRCLE_FACTOR: f64 = 0.5;

/// Isotropic standard deviation of each blob cluster.
pub const BLOB_SIGMA: f64 = 1.0;

/// Half-width of the square from which blob centers are drawn.
pub const BLOB_CENTER_RANGE: f64 = 10.0;

/// Toy dataset family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToyKind {
    Circles,
    Moons,
    Blobs,
}

impl From<ToyKind> for GeneratorKind {
    fn from(k: ToyKind) -> Self {
        match k {
            ToyKind::Circles => GeneratorKind::Circles,
            ToyKind::Moons => GeneratorKind::Moons,
            ToyKind::Blobs => GeneratorKind::Blobs,
        }
    }
}

/// Recipe for one toy dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToyGenSpec {
    pub kind: ToyKind,
    /// Instance count, one of {2048, 4096, 8192, 16384}.
    pub instances: usize,
    /// 2 for circles/moons; 2..=8 for blobs.
    pub classes: usize,
    /// Generator seed in [0, 100].
    pub seed: u32,
    /// Apply Gaussian jitter to the predictors.
    pub noise: bool,
}

impl ToyGenSpec {
    /// Draws a random spec: kind uniform over the three families, instance
    /// count uniform over {2^q | q in [11, 14]}, blob class count uniform in
    /// [2, 8], seed uniform in [0, 100], noise with probability 1/2.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let seed = rng.gen_range(0..=100u32);
        let q = rng.gen_range(11..=14u32);
        let kind = *[ToyKind::Circles, ToyKind::Blobs, ToyKind::Moons]
            .choose(rng)
            .expect("non-empty");
        let classes = match kind {
            ToyKind::Blobs => rng.gen_range(2..=8usize),
            _ => 2,
        };
        let noise = rng.gen_bool(0.5);
        ToyGenSpec {
            kind,
            instances: 1 << q,
            classes,
            seed,
            noise,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if ![2048, 4096, 8192, 16384].contains(&self.instances) {
            return Err(MfError::Invariant(format!(
                "instance count {} not in {{2048, 4096, 8192, 16384}}",
                self.instances
            )));
        }
        let class_ok = match self.kind {
            ToyKind::Blobs => (2..=8).contains(&self.classes),
            _ => self.classes == 2,
        };
        if !class_ok {
            return Err(MfError::Invariant(format!(
                "class count {} invalid for {:?}",
                self.classes, self.kind
            )));
        }
        if self.seed > 100 {
            return Err(MfError::Invariant(format!(
                "seed {} outside [0, 100]",
                self.seed
            )));
        }
        Ok(())
    }
}

/// Raw (pre-normalization) points and integer labels for a spec. Split out so
/// geometric properties can be checked before min-max scaling.
pub(crate) fn raw_points(spec: &ToyGenSpec) -> (Vec<[f64; 2]>, Vec<usize>) {
    use rand::SeedableRng;
    // The RNG is derived from the whole spec, not just the seed field, so two
    // specs sharing a seed but differing elsewhere stay decorrelated.
    let mix = spec.seed as u64
        ^ ((spec.instances as u64) << 20)
        ^ ((spec.classes as u64) << 40)
        ^ (match spec.kind {
            ToyKind::Circles => 1u64,
            ToyKind::Moons => 2,
            ToyKind::Blobs => 3,
        } << 50);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(mix);

    let n = spec.instances;
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    match spec.kind {
        ToyKind::Circles => {
            // Outer ring is class 0 at radius 1, inner ring class 1 at
            // radius CIRCLE_FACTOR.
            for i in 0..n {
                let class = if i < n / 2 { 0 } else { 1 };
                let radius = if class == 0 { 1.0 } else { CIRCLE_FACTOR };
                let theta = rng.gen_range(0.0..std::f64::consts::TAU);
                points.push([radius * theta.cos(), radius * theta.sin()]);
                labels.push(class);
            }
        }
        ToyKind::Moons => {
            for i in 0..n {
                let class = if i < n / 2 { 0 } else { 1 };
                let t = rng.gen_range(0.0..std::f64::consts::PI);
                let p = if class == 0 {
                    [t.cos(), t.sin()]
                } else {
                    [1.0 - t.cos(), 0.5 - t.sin()]
                };
                points.push(p);
                labels.push(class);
            }
        }
        ToyKind::Blobs => {
            let centers: Vec<[f64; 2]> = (0..spec.classes)
                .map(|_| {
                    [
                        rng.gen_range(-BLOB_CENTER_RANGE..BLOB_CENTER_RANGE),
                        rng.gen_range(-BLOB_CENTER_RANGE..BLOB_CENTER_RANGE),
                    ]
                })
                .collect();
            for i in 0..n {
                let class = i % spec.classes;
                let gx: f64 = rng.sample(StandardNormal);
                let gy: f64 = rng.sample(StandardNormal);
                points.push([
                    centers[class][0] + BLOB_SIGMA * gx,
                    centers[class][1] + BLOB_SIGMA * gy,
                ]);
                labels.push(class);
            }
        }
    }
    if spec.noise {
        for p in &mut points {
            let jx: f64 = rng.sample(StandardNormal);
            let jy: f64 = rng.sample(StandardNormal);
            p[0] += NOISE_SIGMA * jx;
            p[1] += NOISE_SIGMA * jy;
        }
    }
    (points, labels)
}

/// Generates one toy dataset. Deterministic: the same spec always yields a
/// bit-identical dataset.
pub fn generate_toy(spec: &ToyGenSpec, name: impl Into<String>) -> Result<TabularDataset> {
    spec.validate()?;
    let (points, labels) = raw_points(spec);
    let mut raw = Tensor::zeros(points.len(), 2);
    for (r, p) in points.iter().enumerate() {
        raw.set(r, 0, p[0]);
        raw.set(r, 1, p[1]);
    }
    let label_strings: Vec<String> = labels.iter().map(|c| format!("c{c}")).collect();
    TabularDataset::from_raw(name, raw, &label_strings, Some(spec.kind.into()))
}

/// Draws `n` rows uniformly without replacement. Normalization is inherited,
/// not recomputed, so subsample values match the parent dataset exactly.
pub fn subsample_fixed<R: Rng + ?Sized>(
    ds: &TabularDataset,
    n: usize,
    rng: &mut R,
) -> Result<TabularDataset> {
    let total = ds.n_instances();
    if n > total {
        return Err(MfError::SubsampleBounds {
            requested: n,
            available: total,
        });
    }
    let mut indices: Vec<usize> = (0..total).collect();
    indices.shuffle(rng);
    indices.truncate(n);

    let mut x = Tensor::zeros(n, ds.n_predictors());
    let mut y = Tensor::zeros(n, ds.n_targets());
    for (r, &src) in indices.iter().enumerate() {
        x.row_mut(r).copy_from_slice(ds.predictors().row(src));
        y.row_mut(r).copy_from_slice(ds.targets().row(src));
    }
    TabularDataset::new(ds.name().to_string(), x, y, ds.kind())
}

/// One line of the toy meta-dataset manifest (JSON lines).
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ManifestRecord {
    pub name: String,
    pub kind: ToyKind,
    pub n: usize,
    pub t: usize,
    pub seed: u32,
    pub noise: bool,
}

impl ManifestRecord {
    pub fn for_spec(name: impl Into<String>, spec: &ToyGenSpec) -> Self {
        ManifestRecord {
            name: name.into(),
            kind: spec.kind,
            n: spec.instances,
            t: spec.classes,
            seed: spec.seed,
            noise: spec.noise,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn blobs_cover_every_class() {
        let spec = ToyGenSpec {
            kind: ToyKind::Blobs,
            instances: 2048,
            classes: 3,
            seed: 7,
            noise: false,
        };
        let ds = generate_toy(&spec, "b3").unwrap();
        assert_eq!(ds.n_targets(), 3);
        let mut seen = [false; 3];
        for r in 0..ds.n_instances() {
            seen[ds.class_of(r)] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn noiseless_circles_have_exact_radius_ratio() {
        let spec = ToyGenSpec {
            kind: ToyKind::Circles,
            instances: 2048,
            classes: 2,
            seed: 11,
            noise: false,
        };
        let (points, labels) = raw_points(&spec);
        for (p, &c) in points.iter().zip(&labels) {
            let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
            let expect = if c == 0 { 1.0 } else { CIRCLE_FACTOR };
            assert!((r - expect).abs() < 1e-12, "class {c} radius {r}");
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = ToyGenSpec {
            kind: ToyKind::Moons,
            instances: 4096,
            classes: 2,
            seed: 42,
            noise: true,
        };
        let a = generate_toy(&spec, "m").unwrap();
        let b = generate_toy(&spec, "m").unwrap();
        assert_eq!(a.predictors().data(), b.predictors().data());
        assert_eq!(a.targets().data(), b.targets().data());
    }

    #[test]
    fn sampled_specs_respect_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..10_000 {
            let spec = ToyGenSpec::sample(&mut rng);
            spec.validate().unwrap();
        }
    }

    #[test]
    fn generated_datasets_respect_spec_invariants() {
        // Full generation for a sample of specs; shape and class checks.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for i in 0..200 {
            let spec = ToyGenSpec::sample(&mut rng);
            let ds = generate_toy(&spec, format!("d{i}")).unwrap();
            assert_eq!(ds.n_instances(), spec.instances);
            assert_eq!(ds.n_predictors(), 2);
            assert_eq!(ds.n_targets(), spec.classes);
        }
    }

    #[test]
    fn full_subsample_is_a_row_permutation() {
        let spec = ToyGenSpec {
            kind: ToyKind::Circles,
            instances: 2048,
            classes: 2,
            seed: 3,
            noise: false,
        };
        let ds = generate_toy(&spec, "c").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sub = subsample_fixed(&ds, ds.n_instances(), &mut rng).unwrap();
        let mut orig: Vec<(u64, u64)> = ds
            .predictors()
            .data()
            .chunks(2)
            .map(|c| (c[0].to_bits(), c[1].to_bits()))
            .collect();
        let mut perm: Vec<(u64, u64)> = sub
            .predictors()
            .data()
            .chunks(2)
            .map(|c| (c[0].to_bits(), c[1].to_bits()))
            .collect();
        orig.sort();
        perm.sort();
        assert_eq!(orig, perm);
    }

    #[test]
    fn subsample_of_200_keeps_schema() {
        let spec = ToyGenSpec {
            kind: ToyKind::Blobs,
            instances: 2048,
            classes: 5,
            seed: 9,
            noise: true,
        };
        let ds = generate_toy(&spec, "b").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sub = subsample_fixed(&ds, 200, &mut rng).unwrap();
        assert_eq!(sub.n_instances(), 200);
        assert_eq!(sub.n_predictors(), ds.n_predictors());
        assert_eq!(sub.n_targets(), ds.n_targets());
    }

    #[test]
    fn different_seeds_pick_different_rows() {
        let spec = ToyGenSpec {
            kind: ToyKind::Circles,
            instances: 2048,
            classes: 2,
            seed: 3,
            noise: true,
        };
        let ds = generate_toy(&spec, "c").unwrap();
        let mut collisions = 0;
        for trial in 0..100 {
            let mut r1 = ChaCha8Rng::seed_from_u64(1000 + trial);
            let mut r2 = ChaCha8Rng::seed_from_u64(2000 + trial);
            let a = subsample_fixed(&ds, 200, &mut r1).unwrap();
            let b = subsample_fixed(&ds, 200, &mut r2).unwrap();
            if a.predictors().data() == b.predictors().data() {
                collisions += 1;
            }
        }
        assert_eq!(collisions, 0);
    }

    #[test]
    fn oversized_subsample_is_rejected() {
        let spec = ToyGenSpec {
            kind: ToyKind::Moons,
            instances: 2048,
            classes: 2,
            seed: 1,
            noise: false,
        };
        let ds = generate_toy(&spec, "m").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = subsample_fixed(&ds, 4096, &mut rng).unwrap_err();
        assert!(matches!(err, MfError::SubsampleBounds { .. }));
    }
}
