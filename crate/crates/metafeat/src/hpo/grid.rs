//! The hyperparameter configuration grid and its vector encoding.
//!
//! Categorical axes encode as one-hot blocks; numeric axes min-max scale to
//! [0, 1]. Distances between encoded vectors are the metric both for the GP
//! surrogate and for the synthetic-corpus construction.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{MfError, Result};

/// Levels of one grid axis.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AxisLevels {
    Categorical { levels: Vec<String> },
    Numeric { levels: Vec<f64> },
}

impl AxisLevels {
    pub fn len(&self) -> usize {
        match self {
            AxisLevels::Categorical { levels } => levels.len(),
            AxisLevels::Numeric { levels } => levels.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Width of this axis in the encoded vector.
    fn encoded_width(&self) -> usize {
        match self {
            AxisLevels::Categorical { levels } => levels.len(),
            AxisLevels::Numeric { .. } => 1,
        }
    }
}

/// One named grid axis.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Axis {
    pub name: String,
    #[serde(flatten)]
    pub levels: AxisLevels,
}

impl Axis {
    pub fn categorical(name: &str, levels: &[&str]) -> Self {
        Axis {
            name: name.to_string(),
            levels: AxisLevels::Categorical {
                levels: levels.iter().map(|s| s.to_string()).collect(),
            },
        }
    }

    pub fn numeric(name: &str, levels: &[f64]) -> Self {
        Axis {
            name: name.to_string(),
            levels: AxisLevels::Numeric {
                levels: levels.to_vec(),
            },
        }
    }
}

/// JSON manifest describing a grid: the axes plus the explicit configuration
/// list (level index per axis, one row per configuration).
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct GridManifest {
    pub axes: Vec<Axis>,
    pub configs: Vec<Vec<usize>>,
}

/// An enumerated configuration grid with precomputed encodings.
#[derive(Clone, Debug)]
pub struct ConfigGrid {
    axes: Vec<Axis>,
    configs: Vec<Vec<usize>>,
    encoded: Vec<Vec<f64>>,
}

impl ConfigGrid {
    /// The reference feed-forward grid: activation {relu, leakyrelu, selu},
    /// neurons {2^n | n in [2, 5]}, layers {1, 3, 5}, layout {square, expand,
    /// contract, diamond}, optimizer {adam, sgd, rmsprop, adagrad}, dropout
    /// {0, 0.1, 0.2, 0.5}, batch normalization {false, true}. All layouts are
    /// equivalent with a single layer, so 1-layer configurations collapse to
    /// the square layout; the enumeration therefore yields exactly 3456
    /// distinct configurations.
    pub fn reference() -> Self {
        let axes = vec![
            Axis::categorical("activation", &["relu", "leakyrelu", "selu"]),
            Axis::numeric("neurons", &[4.0, 8.0, 16.0, 32.0]),
            Axis::numeric("layers", &[1.0, 3.0, 5.0]),
            Axis::categorical("layout", &["square", "expand", "contract", "diamond"]),
            Axis::categorical("optimizer", &["adam", "sgd", "rmsprop", "adagrad"]),
            Axis::numeric("dropout", &[0.0, 0.1, 0.2, 0.5]),
            Axis::categorical("batchnorm", &["false", "true"]),
        ];
        let layers_axis = 2;
        let layout_axis = 3;
        let one_layer_level = 0; // layers == 1
        let square_level = 0;

        let sizes: Vec<usize> = axes.iter().map(|a| a.levels.len()).collect();
        let mut configs = Vec::new();
        let mut levels = vec![0usize; axes.len()];
        loop {
            let redundant = levels[layers_axis] == one_layer_level
                && levels[layout_axis] != square_level;
            if !redundant {
                configs.push(levels.clone());
            }
            // Odometer increment.
            let mut i = axes.len();
            loop {
                if i == 0 {
                    return Self::from_parts(axes, configs).expect("reference grid is valid");
                }
                i -= 1;
                levels[i] += 1;
                if levels[i] < sizes[i] {
                    break;
                }
                levels[i] = 0;
            }
        }
    }

    pub fn from_parts(axes: Vec<Axis>, configs: Vec<Vec<usize>>) -> Result<Self> {
        for (ci, c) in configs.iter().enumerate() {
            if c.len() != axes.len() {
                return Err(MfError::Hpo(format!(
                    "config {ci} has {} entries for {} axes",
                    c.len(),
                    axes.len()
                )));
            }
            for (a, &l) in axes.iter().zip(c) {
                if l >= a.levels.len() {
                    return Err(MfError::Hpo(format!(
                        "config {ci}: level {l} out of range for axis '{}'",
                        a.name
                    )));
                }
            }
        }
        let encoded = configs.iter().map(|c| encode(&axes, c)).collect();
        Ok(ConfigGrid {
            axes,
            configs,
            encoded,
        })
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    /// Level indices of configuration `index`.
    pub fn levels(&self, index: usize) -> Result<&[usize]> {
        self.configs
            .get(index)
            .map(Vec::as_slice)
            .ok_or(MfError::ConfigIndex {
                index,
                size: self.configs.len(),
            })
    }

    /// Encoded vector of configuration `index`.
    pub fn encoded(&self, index: usize) -> &[f64] {
        &self.encoded[index]
    }

    pub fn encoded_dim(&self) -> usize {
        self.axes.iter().map(|a| a.levels.encoded_width()).sum()
    }

    pub fn manifest(&self) -> GridManifest {
        GridManifest {
            axes: self.axes.clone(),
            configs: self.configs.clone(),
        }
    }

    pub fn save_manifest(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(&self.manifest())?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load_manifest(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let manifest: GridManifest = serde_json::from_str(&text)?;
        Self::from_parts(manifest.axes, manifest.configs)
    }

    /// Human-readable value of axis `ai` in configuration `index`.
    pub fn describe(&self, index: usize, ai: usize) -> String {
        let level = self.configs[index][ai];
        match &self.axes[ai].levels {
            AxisLevels::Categorical { levels } => levels[level].clone(),
            AxisLevels::Numeric { levels } => format!("{}", levels[level]),
        }
    }
}

fn encode(axes: &[Axis], levels: &[usize]) -> Vec<f64> {
    let mut out = Vec::new();
    for (axis, &l) in axes.iter().zip(levels) {
        match &axis.levels {
            AxisLevels::Categorical { levels } => {
                for i in 0..levels.len() {
                    out.push(if i == l { 1.0 } else { 0.0 });
                }
            }
            AxisLevels::Numeric { levels } => {
                let lo = levels.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = levels.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let v = levels[l];
                out.push(if hi > lo { (v - lo) / (hi - lo) } else { 0.0 });
            }
        }
    }
    out
}
