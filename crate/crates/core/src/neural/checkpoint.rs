//! Checkpoint container.
//!
//! Layout: 8-byte magic, little-endian `u32` header length, JSON header, then little-endian
//! `f32` blocks in declaration order: primary parameters, target parameters, Adam first
//! moments, Adam second moments.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::adam::{AdamConfig, AdamState};
use super::network::{Architecture, Params, QNetwork};
use super::tensor::Tensor;
use super::{NetworkPair, NeuralError};
use crate::scalar::Scalar;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"PUSHDQN\0";
pub const CHECKPOINT_VERSION: u32 = 1;

const BLOCKS: [&str; 4] = ["primary", "target", "adam_m", "adam_v"];

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("checkpoint format version {found}, this build reads {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CheckpointWarning {
    ConfigHashMismatch { stored: String, expected: String },
}

impl std::fmt::Display for CheckpointWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CheckpointWarning::ConfigHashMismatch { stored, expected } => write!(
                f,
                "checkpoint was trained with geometry config {stored}, current config is {expected}"
            ),
        }
    }
}

/// Training bookkeeping stored alongside the parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub episode: u64,
    pub config_hash: String,
    /// Serialized training RNG, if any.
    #[serde(default)]
    pub rng_state: Option<serde_json::Value>,
    #[serde(default)]
    pub extra: serde_json::Value,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    arch_id: String,
    arch: Architecture,
    shapes: Vec<Vec<usize>>,
    blocks: Vec<String>,
    adam_config: AdamConfig,
    adam_step_count: u64,
    meta: CheckpointMeta,
}

#[derive(Debug, Clone)]
pub struct LoadedCheckpoint {
    pub pair: NetworkPair<f32>,
    pub adam: AdamState<f32>,
    pub meta: CheckpointMeta,
    pub warnings: Vec<CheckpointWarning>,
}

pub fn save_checkpoint<T: Scalar>(pair: &NetworkPair<T>, adam: &AdamState<T>, meta: &CheckpointMeta) -> Vec<u8> {
    let arch = &pair.primary.arch;
    let header = Header {
        format_version: CHECKPOINT_VERSION,
        arch_id: arch.arch_id(),
        arch: arch.clone(),
        shapes: pair.primary.params.tensors.iter().map(|t| t.shape().to_vec()).collect(),
        blocks: BLOCKS.iter().map(|s| s.to_string()).collect(),
        adam_config: adam.config,
        adam_step_count: adam.step_count,
        meta: meta.clone(),
    };
    let json = serde_json::to_vec(&header).expect("checkpoint header serializes");
    let n = pair.primary.params.len();
    let mut out = Vec::with_capacity(12 + json.len() + 16 * n);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for params in [&pair.primary.params, &pair.target.params, &adam.m, &adam.v] {
        for v in params.iter() {
            out.extend_from_slice(&v.as_f32().to_le_bytes());
        }
    }
    out
}

/// Parse a checkpoint. A config hash different from `expected_config_hash` loads with a warning.
pub fn load_checkpoint(bytes: &[u8], expected_config_hash: Option<&str>) -> Result<LoadedCheckpoint, CheckpointError> {
    if bytes.len() < 12 {
        return Err(if bytes.starts_with(&CHECKPOINT_MAGIC[..bytes.len().min(8)]) {
            CheckpointError::Corrupt("truncated header".into())
        } else {
            CheckpointError::BadMagic
        });
    }
    if &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let body = &bytes[12..];
    if body.len() < header_len {
        return Err(CheckpointError::Corrupt(format!("header needs {header_len} bytes, {} present", body.len())));
    }
    let raw: serde_json::Value = serde_json::from_slice(&body[..header_len])
        .map_err(|e| CheckpointError::Corrupt(format!("header: {e}")))?;
    let found = raw.get("format_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if found != CHECKPOINT_VERSION {
        return Err(CheckpointError::VersionMismatch { found, expected: CHECKPOINT_VERSION });
    }
    let header: Header = serde_json::from_value(raw).map_err(|e| CheckpointError::Corrupt(format!("header: {e}")))?;
    if header.arch.arch_id() != header.arch_id {
        return Err(CheckpointError::Corrupt("arch_id does not match layer list".into()));
    }
    let expected_shapes = header.arch.param_shapes()?;
    if expected_shapes != header.shapes {
        return Err(CheckpointError::Corrupt("parameter shapes do not match architecture".into()));
    }
    if header.blocks != BLOCKS {
        return Err(CheckpointError::Corrupt(format!("unexpected block list {:?}", header.blocks)));
    }

    let mut data = &body[header_len..];
    let per_block: usize = header.shapes.iter().map(|s| s.iter().product::<usize>()).sum();
    if data.len() != 4 * per_block * BLOCKS.len() {
        return Err(CheckpointError::Corrupt(format!(
            "expected {} parameter bytes, found {}",
            4 * per_block * BLOCKS.len(),
            data.len()
        )));
    }
    let mut read_block = || -> Params<f32> {
        let tensors = header
            .shapes
            .iter()
            .map(|shape| {
                let n: usize = shape.iter().product();
                let (chunk, rest) = data.split_at(4 * n);
                data = rest;
                let values = chunk
                    .chunks_exact(4)
                    .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
                    .collect();
                Tensor::from_vec(shape.clone(), values)
            })
            .collect();
        Params { tensors }
    };
    let primary = read_block();
    let target = read_block();
    let m = read_block();
    let v = read_block();
    let all_finite = [&primary, &target, &m, &v].iter().all(|p| p.iter().all(|x| x.is_finite()));
    if !all_finite {
        return Err(CheckpointError::Corrupt("non-finite parameter values".into()));
    }

    let pair = NetworkPair {
        primary: QNetwork::from_params(header.arch.clone(), primary)?,
        target: QNetwork::from_params(header.arch, target)?,
    };
    let adam = AdamState { config: header.adam_config, step_count: header.adam_step_count, m, v };
    let mut warnings = Vec::new();
    if let Some(expected) = expected_config_hash {
        if expected != header.meta.config_hash {
            let w = CheckpointWarning::ConfigHashMismatch {
                stored: header.meta.config_hash.clone(),
                expected: expected.to_string(),
            };
            log::warn!("{w}");
            warnings.push(w);
        }
    }
    Ok(LoadedCheckpoint { pair, adam, meta: header.meta, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{adam_step, LayerSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn arch() -> Architecture {
        Architecture {
            input: [3, 8, 8],
            layers: vec![
                LayerSpec::Conv { out_channels: 4 },
                LayerSpec::Relu,
                LayerSpec::MaxPool,
                LayerSpec::Flatten,
                LayerSpec::Dense { out_features: 5 },
            ],
        }
    }

    fn sample() -> (NetworkPair<f32>, AdamState<f32>, CheckpointMeta) {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut pair = NetworkPair::new(arch(), &mut rng).unwrap();
        let mut adam = AdamState::new(&pair.primary.params, AdamConfig::default());
        let mut g = pair.primary.params.zeros_like();
        g.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        adam_step(&mut pair.primary.params, &g, &mut adam).unwrap();
        pair.soft_update(0.001).unwrap();
        let meta = CheckpointMeta {
            episode: 500,
            config_hash: "abc".into(),
            rng_state: Some(serde_json::to_value(&rng).unwrap()),
            extra: serde_json::json!({"note": "test"}),
        };
        (pair, adam, meta)
    }

    #[test]
    fn round_trip_is_bitwise() {
        let (pair, adam, meta) = sample();
        let bytes = save_checkpoint(&pair, &adam, &meta);
        let loaded = load_checkpoint(&bytes, Some("abc")).unwrap();
        assert!(loaded.warnings.is_empty());
        assert_eq!(loaded.pair, pair);
        assert_eq!(loaded.adam, adam);
        assert_eq!(loaded.meta, meta);
        assert_eq!(save_checkpoint(&loaded.pair, &loaded.adam, &loaded.meta), bytes);
    }

    #[test]
    fn truncated_payload_is_corrupt() {
        let (pair, adam, meta) = sample();
        let bytes = save_checkpoint(&pair, &adam, &meta);
        for cut in [10, 40, bytes.len() - 3] {
            assert!(matches!(load_checkpoint(&bytes[..cut], None), Err(CheckpointError::Corrupt(_))), "cut {cut}");
        }
        assert!(matches!(load_checkpoint(b"garbage!garbage", None), Err(CheckpointError::BadMagic)));
    }

    #[test]
    fn version_mismatch_detected() {
        let (pair, adam, meta) = sample();
        let bytes = save_checkpoint(&pair, &adam, &meta);
        let len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let header = String::from_utf8(bytes[12..12 + len].to_vec()).unwrap();
        let patched = header.replace("\"format_version\":1", "\"format_version\":7");
        let mut out = bytes[..8].to_vec();
        out.extend_from_slice(&(patched.len() as u32).to_le_bytes());
        out.extend_from_slice(patched.as_bytes());
        out.extend_from_slice(&bytes[12 + len..]);
        assert!(matches!(
            load_checkpoint(&out, None),
            Err(CheckpointError::VersionMismatch { found: 7, expected: 1 })
        ));
    }

    #[test]
    fn foreign_config_loads_with_warning() {
        let (pair, adam, meta) = sample();
        let bytes = save_checkpoint(&pair, &adam, &meta);
        let loaded = load_checkpoint(&bytes, Some("def")).unwrap();
        assert_eq!(
            loaded.warnings,
            vec![CheckpointWarning::ConfigHashMismatch { stored: "abc".into(), expected: "def".into() }]
        );
        assert_eq!(loaded.pair, pair);
    }
}
