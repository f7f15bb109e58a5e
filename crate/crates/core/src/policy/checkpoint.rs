//! Parameter snapshots and the on-disk checkpoint container.
//!
//! File format (JSON, version 1):
//!
//! ```json
//! {
//!   "format": "planfolio-policy",
//!   "version": 1,
//!   "config": { ...PolicyConfig... },
//!   "param_count": 1234,
//!   "params_le_f64": "<base64 of param_count little-endian f64 values>"
//! }
//! ```

use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{PolicyConfig, PolicyError, PolicyParams, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const FORMAT: &str = "planfolio-policy";

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub config: PolicyConfig,
    pub data: Vec<f64>,
}

pub fn checkpoint(params: &PolicyParams) -> Snapshot {
    Snapshot {
        config: params.config().clone(),
        data: params.flat().to_vec(),
    }
}

/// Restores `params` bitwise from `snapshot`; architectures must match.
pub fn restore(params: &mut PolicyParams, snapshot: &Snapshot) -> Result<()> {
    let (a, b) = (params.config(), &snapshot.config);
    if a.input_dim != b.input_dim || a.n_actions != b.n_actions || a.hidden != b.hidden || a.shared_trunk != b.shared_trunk {
        return Err(PolicyError::Shape(format!(
            "snapshot architecture {}x{:?}x{} (shared={}) does not match {}x{:?}x{} (shared={})",
            b.input_dim, b.hidden, b.n_actions, b.shared_trunk, a.input_dim, a.hidden, a.n_actions, a.shared_trunk
        )));
    }
    params.set_flat(&snapshot.data)
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    config: PolicyConfig,
    param_count: usize,
    params_le_f64: String,
}

impl Snapshot {
    pub fn to_json(&self) -> String {
        let bytes: Vec<u8> = self.data.iter().flat_map(|v| v.to_le_bytes()).collect();
        let file = CheckpointFile {
            format: FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            param_count: self.data.len(),
            params_le_f64: STANDARD.encode(bytes),
        };
        serde_json::to_string_pretty(&file).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CheckpointFile = serde_json::from_str(text).map_err(|e| PolicyError::Format(e.to_string()))?;
        if file.format != FORMAT || file.version != CHECKPOINT_VERSION {
            return Err(PolicyError::Format(format!(
                "unsupported checkpoint {} v{}",
                file.format, file.version
            )));
        }
        let bytes = STANDARD
            .decode(file.params_le_f64)
            .map_err(|e| PolicyError::Format(e.to_string()))?;
        if bytes.len() != file.param_count * 8 {
            return Err(PolicyError::Format(format!(
                "{} bytes for {} parameters",
                bytes.len(),
                file.param_count
            )));
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Ok(Self {
            config: file.config,
            data,
        })
    }

    /// Rebuilds parameters with the snapshot's own architecture.
    pub fn into_params(self) -> Result<PolicyParams> {
        let mut p = PolicyParams::zeros(self.config.clone())?;
        restore(&mut p, &self)?;
        Ok(p)
    }
}

pub fn save_checkpoint(params: &PolicyParams, path: &Path) -> Result<()> {
    std::fs::write(path, checkpoint(params).to_json())?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<PolicyParams> {
    Snapshot::from_json(&std::fs::read_to_string(path)?)?.into_params()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::PolicyMode;

    fn cfg(hidden: Vec<usize>) -> PolicyConfig {
        PolicyConfig {
            input_dim: 4,
            n_actions: 2,
            hidden,
            mode: PolicyMode::Stochastic,
            init_seed: 5,
            ..PolicyConfig::default()
        }
    }

    #[test]
    fn save_mutate_restore() {
        let mut p = PolicyParams::new(cfg(vec![3])).unwrap();
        let snap = checkpoint(&p);
        p.flat_mut().iter_mut().for_each(|x| *x += 0.5);
        restore(&mut p, &snap).unwrap();
        assert_eq!(p.flat(), snap.data.as_slice());
    }

    #[test]
    fn restore_into_other_architecture_fails() {
        let p = PolicyParams::new(cfg(vec![3])).unwrap();
        let mut q = PolicyParams::new(cfg(vec![4])).unwrap();
        assert!(matches!(restore(&mut q, &checkpoint(&p)), Err(PolicyError::Shape(_))));
    }

    #[test]
    fn file_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        let mut p = PolicyParams::new(cfg(vec![3, 2])).unwrap();
        p.flat_mut()[0] = 0.1 + 0.2;
        p.flat_mut()[1] = -0.0;
        p.flat_mut()[2] = f64::MIN_POSITIVE / 3.0;
        save_checkpoint(&p, &path).unwrap();
        let q = load_checkpoint(&path).unwrap();
        let bits = |x: &PolicyParams| x.flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&p), bits(&q));
        assert_eq!(p.config(), q.config());
    }
}
