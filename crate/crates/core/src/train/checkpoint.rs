//! Binary checkpoint format.
//!
//! ```text
//! "LFSA" | u32 version | u32 metadata length | metadata (UTF-8 JSON)
//!        | payload (little-endian f32, tensors in declared order)
//!        | 8-byte payload digest (leading bytes of SHA-256)
//! ```
//! All integers are little-endian.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adapt::{AdaptConfig, AdaptationParams};
use crate::backbone::{BackboneConfig, BackboneParams};
use crate::error::{Error, Result};
use crate::nn::{ParamSet, Tensor};

pub const MAGIC: &[u8; 4] = b"LFSA";
pub const VERSION: u32 = 1;
const DIGEST_LEN: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckpointKind {
    Backbone,
    Adaptation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub kind: CheckpointKind,
    pub scale: usize,
    pub backbone: Option<BackboneConfig>,
    pub adapt: Option<AdaptConfig>,
    pub frozen: bool,
    pub tensors: Vec<TensorEntry>,
    /// Digest of the training configuration that produced the weights.
    pub config_digest: Option<String>,
    /// Weight checksum of the backbone an adaptation module was trained on.
    pub backbone_checksum: Option<String>,
}

pub fn payload_digest(payload: &[u8]) -> [u8; DIGEST_LEN] {
    let full = Sha256::digest(payload);
    let mut out = [0u8; DIGEST_LEN];
    out.copy_from_slice(&full[..DIGEST_LEN]);
    out
}

fn entries<P: ParamSet + ?Sized>(params: &P) -> Vec<TensorEntry> {
    params
        .named_tensors()
        .into_iter()
        .map(|(name, t)| TensorEntry {
            name,
            shape: t.shape().to_vec(),
        })
        .collect()
}

pub fn encode<P: ParamSet + ?Sized>(meta: &Metadata, params: &P) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(meta)?;
    let mut payload = Vec::with_capacity(params.num_values() * 4);
    for (_, t) in params.named_tensors() {
        for v in t.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut out = Vec::with_capacity(12 + json.len() + payload.len() + DIGEST_LEN);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&payload);
    out.extend_from_slice(&payload_digest(&payload));
    Ok(out)
}

/// Parses and verifies a checkpoint image; `path` is only used in messages.
pub fn decode(bytes: &[u8], path: &Path) -> Result<(Metadata, Vec<Tensor>)> {
    let fail = |reason: String| Error::checkpoint(path, reason);
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(fail("not an LFSA checkpoint (bad magic)".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(fail(format!("unsupported version {version}, expected {VERSION}")));
    }
    let meta_len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let meta_end = 12usize
        .checked_add(meta_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| fail(format!("metadata length {meta_len} runs past the end of the file")))?;
    let meta: Metadata =
        serde_json::from_slice(&bytes[12..meta_end]).map_err(|e| fail(format!("malformed metadata: {e}")))?;
    let values: usize = meta.tensors.iter().map(|t| t.shape.iter().product::<usize>()).sum();
    let expected = meta_end + values * 4 + DIGEST_LEN;
    if bytes.len() != expected {
        return Err(fail(format!(
            "file is {} bytes but metadata declares {expected} ({values} values)",
            bytes.len()
        )));
    }
    let payload = &bytes[meta_end..expected - DIGEST_LEN];
    if payload_digest(payload) != bytes[expected - DIGEST_LEN..] {
        return Err(fail("payload digest mismatch (file is corrupt)".into()));
    }
    let mut tensors = Vec::with_capacity(meta.tensors.len());
    let mut off = 0;
    for entry in &meta.tensors {
        let len: usize = entry.shape.iter().product();
        let data = payload[off..off + len * 4]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        off += len * 4;
        tensors.push(Tensor::new(entry.shape.clone(), data)?);
    }
    Ok((meta, tensors))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<(Metadata, Vec<Tensor>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

fn check_layout<P: ParamSet>(path: &Path, declared: &[TensorEntry], params: &P) -> Result<()> {
    let actual = entries(params);
    if declared != actual.as_slice() {
        let first = declared
            .iter()
            .zip(&actual)
            .find(|(d, a)| d != a)
            .map(|(d, a)| format!("{} {:?} where the architecture has {} {:?}", d.name, d.shape, a.name, a.shape))
            .unwrap_or_else(|| format!("{} tensors where the architecture has {}", declared.len(), actual.len()));
        return Err(Error::checkpoint(path, format!("tensor layout mismatch: {first}")));
    }
    Ok(())
}

pub fn save_backbone(params: &BackboneParams, path: &Path, config_digest: Option<String>) -> Result<()> {
    let meta = Metadata {
        kind: CheckpointKind::Backbone,
        scale: params.config.scale,
        backbone: Some(params.config),
        adapt: None,
        frozen: params.frozen(),
        tensors: entries(params),
        config_digest,
        backbone_checksum: None,
    };
    write(path, &encode(&meta, params)?)
}

pub fn load_backbone(path: &Path) -> Result<(BackboneParams, Metadata)> {
    let (meta, tensors) = read(path)?;
    let config = match (meta.kind, meta.backbone) {
        (CheckpointKind::Backbone, Some(c)) => c,
        _ => return Err(Error::checkpoint(path, "not a backbone checkpoint")),
    };
    let zeros = BackboneParams::<f32>::zeros(config).map_err(|e| Error::checkpoint(path, e.to_string()))?;
    check_layout(path, &meta.tensors, &zeros)?;
    let params = BackboneParams::from_tensors(config, tensors, meta.frozen)?;
    Ok((params, meta))
}

pub fn save_adaptation(
    params: &AdaptationParams,
    scale: usize,
    path: &Path,
    config_digest: Option<String>,
    backbone_checksum: Option<String>,
) -> Result<()> {
    let meta = Metadata {
        kind: CheckpointKind::Adaptation,
        scale,
        backbone: None,
        adapt: Some(params.config),
        frozen: false,
        tensors: entries(params),
        config_digest,
        backbone_checksum,
    };
    write(path, &encode(&meta, params)?)
}

/// Loads an adaptation module, optionally insisting on an angular resolution.
pub fn load_adaptation(path: &Path, expect_angular: Option<usize>) -> Result<(AdaptationParams, Metadata)> {
    let (meta, tensors) = read(path)?;
    let config = match (meta.kind, meta.adapt) {
        (CheckpointKind::Adaptation, Some(c)) => c,
        _ => return Err(Error::checkpoint(path, "not an adaptation checkpoint")),
    };
    if let Some(a) = expect_angular {
        if config.angular != a {
            return Err(Error::invalid(format!(
                "{} was trained for {1}x{1} views, this run uses {2}x{2}",
                path.display(),
                config.angular,
                a
            )));
        }
    }
    let zeros = AdaptationParams::<f32>::zeros(config).map_err(|e| Error::checkpoint(path, e.to_string()))?;
    check_layout(path, &meta.tensors, &zeros)?;
    let params = AdaptationParams::from_tensors(config, tensors)?;
    Ok((params, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapt::AdaptFlags;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn backbone() -> BackboneParams {
        let cfg = BackboneConfig {
            image_channels: 1,
            width: 4,
            blocks: 1,
            scale: 2,
        };
        BackboneParams::init(cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap()
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.lfsa"), dir.path().join("b.lfsa"));
        let p = backbone().set_frozen(true);
        save_backbone(&p, &a, Some("abc".into())).unwrap();
        let (q, meta) = load_backbone(&a).unwrap();
        assert_eq!(q, p);
        assert!(q.frozen());
        assert_eq!(meta.config_digest.as_deref(), Some("abc"));
        save_backbone(&q, &b, meta.config_digest).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    }

    #[test]
    fn corrupt_payload_fails_digest() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.lfsa");
        save_backbone(&backbone(), &path, None).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        let n = bytes.len();
        bytes[n - 20] ^= 0x40;
        let err = decode(&bytes, &path).unwrap_err();
        assert!(err.to_string().contains("digest"), "{err}");
    }

    #[test]
    fn truncated_and_foreign_files_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.lfsa");
        save_backbone(&backbone(), &path, None).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert!(decode(&bytes[..bytes.len() - 3], &path).is_err());
        assert!(decode(b"PNG\x00xxxxxxxxxx", &path).unwrap_err().to_string().contains("magic"));
        let mut wrong_version = bytes.clone();
        wrong_version[4] = 9;
        assert!(decode(&wrong_version, &path).unwrap_err().to_string().contains("version"));
    }

    #[test]
    fn angular_guard() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ad.lfsa");
        let cfg = AdaptConfig::new(3, 4, 2, AdaptFlags::default());
        let p = AdaptationParams::init(cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        save_adaptation(&p, 2, &path, None, None).unwrap();
        assert_eq!(load_adaptation(&path, Some(3)).unwrap().0, p);
        let err = load_adaptation(&path, Some(5)).unwrap_err();
        assert!(err.to_string().contains("3x3"), "{err}");
        assert!(load_backbone(&path).is_err());
    }
}
