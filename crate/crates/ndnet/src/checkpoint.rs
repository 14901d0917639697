use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::NdError;
use crate::tensor::Tensor;
use crate::Result;

pub const CHECKPOINT_VERSION: u32 = 1;

/// One named parameter tensor, row-major.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TensorEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl TensorEntry {
    pub fn from_tensor(name: impl Into<String>, t: &Tensor) -> Self {
        TensorEntry {
            name: name.into(),
            rows: t.rows(),
            cols: t.cols(),
            data: t.data().to_vec(),
        }
    }

    pub fn to_tensor(&self) -> Result<Tensor> {
        if self.data.len() != self.rows * self.cols {
            return Err(NdError::Checkpoint(format!(
                "tensor '{}' has {} values for shape {}x{}",
                self.name,
                self.data.len(),
                self.rows,
                self.cols
            )));
        }
        Ok(Tensor::from_vec(self.rows, self.cols, self.data.clone()))
    }
}

/// Versioned JSON parameter document. `f64` values survive the JSON round
/// trip bit-exactly (shortest-representation encoding).
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Checkpoint {
    pub version: u32,
    /// Free-form string metadata (architecture tag, seeds, ...). Ordered map
    /// so serialization is byte-stable.
    pub metadata: BTreeMap<String, String>,
    pub tensors: Vec<TensorEntry>,
}

impl Checkpoint {
    pub fn new(metadata: BTreeMap<String, String>, tensors: Vec<TensorEntry>) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            metadata,
            tensors,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)?;
        fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let ckpt: Checkpoint = serde_json::from_str(&text)?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(NdError::Checkpoint(format!(
                "unsupported checkpoint version {} (expected {})",
                ckpt.version, CHECKPOINT_VERSION
            )));
        }
        Ok(ckpt)
    }

    pub fn tensor(&self, name: &str) -> Result<Tensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| NdError::Checkpoint(format!("missing tensor '{name}'")))?
            .to_tensor()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_roundtrip_is_bit_exact() {
        let mut meta = BTreeMap::new();
        meta.insert("arch".to_string(), "toy".to_string());
        // Values chosen to stress decimal encoding (subnormal-adjacent,
        // non-terminating binary fractions, negative zero).
        let t = Tensor::from_vec(
            2,
            2,
            vec![0.1, 1.0 / 3.0, -0.0, 6.02214076e23],
        );
        let ckpt = Checkpoint::new(meta, vec![TensorEntry::from_tensor("w", &t)]);
        let json = serde_json::to_string(&ckpt).unwrap();
        let back: Checkpoint = serde_json::from_str(&json).unwrap();
        let restored = back.tensor("w").unwrap();
        for (a, b) in t.data().iter().zip(restored.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        // Re-serialization is byte-identical.
        assert_eq!(json, serde_json::to_string(&back).unwrap());
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let entry = TensorEntry {
            name: "w".into(),
            rows: 2,
            cols: 3,
            data: vec![0.0; 5],
        };
        assert!(entry.to_tensor().is_err());
    }
}
