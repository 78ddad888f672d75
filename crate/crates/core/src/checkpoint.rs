//! Network checkpoints: a JSON manifest plus one raw parameter blob per
//! network.
//!
//! Layout of a checkpoint directory:
//!
//! ```text
//! manifest.json    format, version, stage, code_length, epoch, beta,
//!                  and one entry per network: name, architecture config,
//!                  blob file name, parameter count
//! attention.f32    little-endian f32 parameters, in network layout order
//! hash1.f32
//! hash2.f32        only present after the second stage
//! ```
//!
//! Parameters are trained in f64 and narrowed to f32 on save.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attention::{AttentionConfig, AttentionNet};
use crate::error::{Error, Result};
use crate::hashnet::{HashNet, HashNetConfig};

pub const CHECKPOINT_MANIFEST: &str = "manifest.json";
const FORMAT: &str = "dagh-checkpoint";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Stage1,
    Stage2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum NetSpec {
    Attention { config: AttentionConfig },
    Hash { config: HashNetConfig },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BlobEntry {
    name: String,
    file: String,
    params: usize,
    #[serde(flatten)]
    spec: NetSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format: String,
    version: u32,
    stage: Stage,
    code_length: usize,
    epoch: usize,
    beta: f64,
    blobs: Vec<BlobEntry>,
}

/// Trained networks plus the schedule position they were saved at.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub stage: Stage,
    /// Completed epochs of `stage`.
    pub epoch: usize,
    pub beta: f64,
    pub attention: AttentionNet,
    pub hash1: HashNet,
    pub hash2: Option<HashNet>,
}

fn write_blob(path: &Path, params: &[f64]) -> Result<()> {
    let bytes: Vec<u8> = params.iter().flat_map(|&p| (p as f32).to_le_bytes()).collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_blob(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != expected * 4 {
        return Err(Error::Format(format!(
            "{}: expected {} parameters ({} bytes), found {} bytes",
            path.display(),
            expected,
            expected * 4,
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

impl Checkpoint {
    pub fn code_length(&self) -> usize {
        self.hash1.code_length()
    }

    /// Network used for final codes: the second hashing network when
    /// present, else the first.
    pub fn encoder(&self) -> &HashNet {
        self.hash2.as_ref().unwrap_or(&self.hash1)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut blobs = vec![BlobEntry {
            name: "attention".into(),
            file: "attention.f32".into(),
            params: self.attention.params().len(),
            spec: NetSpec::Attention {
                config: self.attention.config().clone(),
            },
        }];
        let mut hashes = vec![("hash1", &self.hash1)];
        if let Some(h) = &self.hash2 {
            hashes.push(("hash2", h));
        }
        for (name, net) in &hashes {
            blobs.push(BlobEntry {
                name: (*name).into(),
                file: format!("{name}.f32"),
                params: net.params().len(),
                spec: NetSpec::Hash {
                    config: net.config().clone(),
                },
            });
        }
        write_blob(&dir.join("attention.f32"), self.attention.params())?;
        for (name, net) in &hashes {
            write_blob(&dir.join(format!("{name}.f32")), net.params())?;
        }
        let manifest = Manifest {
            format: FORMAT.into(),
            version: VERSION,
            stage: self.stage,
            code_length: self.code_length(),
            epoch: self.epoch,
            beta: self.beta,
            blobs,
        };
        let path = dir.join(CHECKPOINT_MANIFEST);
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, json).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(CHECKPOINT_MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let m: Manifest =
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        if m.format != FORMAT || m.version != VERSION {
            return Err(Error::Format(format!(
                "{}: not a version {VERSION} checkpoint ({} v{})",
                path.display(),
                m.format,
                m.version
            )));
        }
        let mut attention = None;
        let mut hash1 = None;
        let mut hash2 = None;
        for b in &m.blobs {
            let params = read_blob(&dir.join(&b.file), b.params)?;
            match (&b.spec, b.name.as_str()) {
                (NetSpec::Attention { config }, "attention") => {
                    let mut net = AttentionNet::zeroed(config.clone())?;
                    net.set_params(params)?;
                    attention = Some(net);
                }
                (NetSpec::Hash { config }, name @ ("hash1" | "hash2")) => {
                    let mut net = HashNet::zeroed(config.clone())?;
                    net.set_params(params)?;
                    if name == "hash1" {
                        hash1 = Some(net);
                    } else {
                        hash2 = Some(net);
                    }
                }
                _ => return Err(Error::Format(format!("{}: unexpected blob {}", path.display(), b.name))),
            }
        }
        let missing = |what: &str| Error::Format(format!("{}: missing {what} network", path.display()));
        let hash1 = hash1.ok_or_else(|| missing("hash1"))?;
        if hash1.code_length() != m.code_length || hash2.as_ref().is_some_and(|h| h.code_length() != m.code_length) {
            return Err(Error::Format(format!(
                "{}: network code length disagrees with manifest K = {}",
                path.display(),
                m.code_length
            )));
        }
        if (m.stage == Stage::Stage2) != hash2.is_some() {
            return Err(Error::Format(format!("{}: stage does not match stored networks", path.display())));
        }
        Ok(Self {
            stage: m.stage,
            epoch: m.epoch,
            beta: m.beta,
            attention: attention.ok_or_else(|| missing("attention"))?,
            hash1,
            hash2,
        })
    }
}
