//! Checkpointing: every named parameter array with its shape, in a JSON
//! container with a version field. `f64` values round-trip exactly through
//! the shortest-representation encoder.

use super::params::Parameterized;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub params: Vec<ParamRecord>,
}

impl Checkpoint {
    pub fn capture(model: &mut dyn Parameterized) -> Self {
        let mut params = Vec::new();
        model.visit_params("", &mut |p| {
            params.push(ParamRecord {
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
                data: p.value.iter().cloned().collect(),
            });
        });
        Self {
            version: CHECKPOINT_VERSION,
            params,
        }
    }

    /// Writes captured values back into a structurally identical model.
    pub fn restore(&self, model: &mut dyn Parameterized) -> Result<()> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {}",
                self.version
            )));
        }
        let mut missing: Vec<String> = Vec::new();
        let by_name: std::collections::HashMap<&str, &ParamRecord> =
            self.params.iter().map(|p| (p.name.as_str(), p)).collect();
        let mut err: Option<Error> = None;
        model.visit_params("", &mut |mut p| match by_name.get(p.name.as_str()) {
            Some(rec) => {
                if rec.shape != p.value.shape() {
                    err = Some(Error::Checkpoint(format!(
                        "shape mismatch for {}: checkpoint {:?}, model {:?}",
                        p.name,
                        rec.shape,
                        p.value.shape()
                    )));
                    return;
                }
                for (dst, src) in p.value.iter_mut().zip(rec.data.iter()) {
                    *dst = *src;
                }
            }
            None => missing.push(p.name.clone()),
        });
        if let Some(e) = err {
            return Err(e);
        }
        if !missing.is_empty() {
            return Err(Error::Checkpoint(format!(
                "checkpoint missing parameters: {}",
                missing.join(", ")
            )));
        }
        Ok(())
    }
}

pub fn save_checkpoint(model: &mut dyn Parameterized, path: &Path) -> Result<()> {
    let ckpt = Checkpoint::capture(model);
    let json =
        serde_json::to_string(&ckpt).map_err(|e| Error::Checkpoint(format!("serialize: {e}")))?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_checkpoint(model: &mut dyn Parameterized, path: &Path) -> Result<()> {
    let text = std::fs::read_to_string(path)?;
    let ckpt: Checkpoint = serde_json::from_str(&text)
        .map_err(|e| Error::Checkpoint(format!("parse {}: {e}", path.display())))?;
    ckpt.restore(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::params::{param_entry, param_layout, set_param_entry};
    use crate::neural::{ActorCritic, EncoderSettings};

    fn settings() -> EncoderSettings {
        EncoderSettings {
            input_dim: 5,
            hidden_dim: 8,
            window: 3,
            depth: 1,
            attention_heads: 2,
            use_recurrent: true,
            use_attention: true,
        }
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        let mut a = ActorCritic::new(&settings(), 4, 7);
        save_checkpoint(&mut a, &path).unwrap();
        let mut b = ActorCritic::new(&settings(), 4, 8);
        load_checkpoint(&mut b, &path).unwrap();
        for (name, len) in param_layout(&mut a) {
            for idx in [0, len / 2, len - 1] {
                let va = param_entry(&mut a, &name, idx);
                let vb = param_entry(&mut b, &name, idx);
                assert!(va.to_bits() == vb.to_bits(), "{name}[{idx}]");
            }
        }
    }

    #[test]
    fn restore_rejects_shape_mismatch() {
        let mut a = ActorCritic::new(&settings(), 4, 7);
        let ckpt = Checkpoint::capture(&mut a);
        let mut small = ActorCritic::new(&settings(), 3, 7);
        assert!(ckpt.restore(&mut small).is_err());
    }

    #[test]
    fn version_gate() {
        let mut a = ActorCritic::new(&settings(), 4, 7);
        let mut ckpt = Checkpoint::capture(&mut a);
        ckpt.version = 99;
        assert!(ckpt.restore(&mut a).is_err());
    }

    #[test]
    fn updates_do_not_change_shapes() {
        let mut a = ActorCritic::new(&settings(), 4, 7);
        let before = param_layout(&mut a);
        // Nudge every parameter, then compare layouts.
        for (name, len) in &before {
            let v = param_entry(&mut a, name, len - 1);
            set_param_entry(&mut a, name, len - 1, v + 0.5);
        }
        assert_eq!(before, param_layout(&mut a));
    }
}
