//! Versioned, human-readable parameter files.
//!
//! A checkpoint is a TOML document holding a format tag, a version, and two
//! flat tables: `scalars` (structural constants such as thresholds) and
//! `arrays` (every trainable array, keyed `<pathway>.<role>`, e.g.
//! `d.tau_syn`).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::params::{PathwayKind, PathwayParams, Role};
use super::PidNetwork;

pub const CHECKPOINT_FORMAT: &str = "snn-pid-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed checkpoint: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("could not serialize checkpoint: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("unsupported checkpoint format {format:?} version {version}")]
    Version { format: String, version: u32 },
    #[error("missing entry {0}")]
    Missing(String),
    #[error("array {name} has {found} entries, expected {expected}")]
    Length {
        name: String,
        found: usize,
        expected: usize,
    },
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    seed: u64,
    scalars: BTreeMap<String, f64>,
    arrays: BTreeMap<String, Vec<f64>>,
}

fn key(kind: PathwayKind, name: &str) -> String {
    format!("{}.{}", kind.prefix(), name)
}

impl PidNetwork {
    /// Serialize the parameters to the checkpoint text format.
    pub fn to_checkpoint_string(&self) -> Result<String, CheckpointError> {
        let mut scalars = BTreeMap::new();
        let mut arrays = BTreeMap::new();
        for kind in PathwayKind::ALL {
            let p = self.params(kind);
            scalars.insert(key(kind, "groups"), p.groups as f64);
            scalars.insert(key(kind, "threshold"), p.threshold);
            scalars.insert(key(kind, "refractory_steps"), f64::from(p.refractory_steps));
            scalars.insert(key(kind, "theta_decay"), p.theta_decay);
            for (role, values) in p.arrays() {
                if p.expected_len(role) > 0 {
                    arrays.insert(key(kind, role.name()), values.clone());
                }
            }
        }
        let file = CheckpointFile {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            seed: self.seed(),
            scalars,
            arrays,
        };
        Ok(toml::to_string(&file)?)
    }

    pub fn from_checkpoint_str(text: &str) -> Result<Self, CheckpointError> {
        let file: CheckpointFile = toml::from_str(text)?;
        if file.format != CHECKPOINT_FORMAT || file.version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version {
                format: file.format,
                version: file.version,
            });
        }
        let scalar = |kind: PathwayKind, name: &str| -> Result<f64, CheckpointError> {
            let k = key(kind, name);
            file.scalars.get(&k).copied().ok_or(CheckpointError::Missing(k))
        };
        let mut pathways = Vec::new();
        for kind in PathwayKind::ALL {
            let groups = scalar(kind, "groups")? as usize;
            let mut p = PathwayParams::uniform(kind, groups);
            p.threshold = scalar(kind, "threshold")?;
            p.refractory_steps = scalar(kind, "refractory_steps")? as u32;
            p.theta_decay = scalar(kind, "theta_decay")?;
            for role in Role::ALL {
                let expected = p.expected_len(role);
                if expected == 0 {
                    continue;
                }
                let name = key(kind, role.name());
                let values = file
                    .arrays
                    .get(&name)
                    .ok_or_else(|| CheckpointError::Missing(name.clone()))?;
                if values.len() != expected {
                    return Err(CheckpointError::Length {
                        name,
                        found: values.len(),
                        expected,
                    });
                }
                *p.array_mut(role) = values.clone();
            }
            pathways.push(p);
        }
        let d = pathways.pop().expect("three pathways");
        let i = pathways.pop().expect("three pathways");
        let p = pathways.pop().expect("three pathways");
        Ok(PidNetwork::from_params(p, i, d, file.seed))
    }
}

pub fn save_checkpoint(network: &PidNetwork, path: &Path) -> Result<(), CheckpointError> {
    let text = network.to_checkpoint_string()?;
    fs::write(path, text).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<PidNetwork, CheckpointError> {
    let text = fs::read_to_string(path).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })?;
    PidNetwork::from_checkpoint_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::NetworkSize;

    #[test]
    fn round_trip_preserves_every_bit() {
        let mut net = PidNetwork::new(NetworkSize { p: 3, i: 2, d: 4 }, 77);
        net.params_mut(PathwayKind::Derivative).tau_syn[5] = 0.123_456_789_012_345_67;
        net.params_mut(PathwayKind::Integral).theta_add[1] = 1.0 / 3.0;
        net.params_mut(PathwayKind::Proportional).gain[0] = 12.5e-7;
        let text = net.to_checkpoint_string().unwrap();
        let back = PidNetwork::from_checkpoint_str(&text).unwrap();
        for kind in PathwayKind::ALL {
            assert_eq!(net.params(kind), back.params(kind));
        }
        assert_eq!(back.seed(), 77);
    }

    #[test]
    fn rejects_wrong_version_and_lengths() {
        let net = PidNetwork::new(NetworkSize::uniform(2), 0);
        let text = net.to_checkpoint_string().unwrap();
        let bumped = text.replace("version = 1", "version = 99");
        assert!(matches!(
            PidNetwork::from_checkpoint_str(&bumped),
            Err(CheckpointError::Version { .. })
        ));
        let mut file: CheckpointFile = toml::from_str(&text).unwrap();
        file.arrays.get_mut("p.tau_syn").unwrap().pop();
        let short = toml::to_string(&file).unwrap();
        assert!(matches!(
            PidNetwork::from_checkpoint_str(&short),
            Err(CheckpointError::Length { .. })
        ));
    }
}
