//! Flat parameter archive: a JSON manifest (names, shapes, frozen flags,
//! RNG seed) followed by the row-major f64 payloads in manifest order.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::optim::Parameter;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"CPK1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub seed: u64,
    pub entries: Vec<ManifestEntry>,
}

#[derive(Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub frozen: bool,
}

pub struct Checkpoint {
    pub seed: u64,
    pub entries: Vec<(ManifestEntry, Vec<f64>)>,
}

pub fn save(path: &Path, params: &[Parameter], seed: u64) -> Result<()> {
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        seed,
        entries: params
            .iter()
            .map(|p| ManifestEntry {
                name: p.name.clone(),
                shape: p.tensor.shape(),
                frozen: p.frozen,
            })
            .collect(),
    };
    let manifest_json = serde_json::to_vec(&manifest)?;
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut f = File::create(path)?;
    f.write_all(MAGIC)?;
    f.write_all(&(manifest_json.len() as u64).to_le_bytes())?;
    f.write_all(&manifest_json)?;
    for p in params {
        for v in p.tensor.data() {
            f.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(Error::Format(format!("{}: not a checkpoint file", path.display())));
    }
    let mlen = u64::from_le_bytes(bytes[4..12].try_into().unwrap()) as usize;
    if bytes.len() < 12 + mlen {
        return Err(Error::Format(format!("{}: truncated manifest", path.display())));
    }
    let manifest: Manifest = serde_json::from_slice(&bytes[12..12 + mlen])?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported format version {}",
            path.display(),
            manifest.format_version
        )));
    }
    let seed = manifest.seed;
    let mut offset = 12 + mlen;
    let mut entries = Vec::with_capacity(manifest.entries.len());
    for e in manifest.entries {
        let numel: usize = e.shape.iter().product();
        let end = offset + numel * 8;
        if bytes.len() < end {
            return Err(Error::Format(format!(
                "{}: truncated payload for '{}'",
                path.display(),
                e.name
            )));
        }
        let data: Vec<f64> = bytes[offset..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        offset = end;
        entries.push((e, data));
    }
    Ok(Checkpoint { seed, entries })
}

impl Checkpoint {
    pub fn get(&self, name: &str) -> Option<&(ManifestEntry, Vec<f64>)> {
        self.entries.iter().find(|(e, _)| e.name == name)
    }

    /// Copy stored values into matching live parameters, checking shapes.
    pub fn load_into(&self, params: &[Parameter]) -> Result<()> {
        for p in params {
            let (entry, data) = self.get(&p.name).ok_or_else(|| {
                Error::Config(format!("checkpoint is missing parameter '{}'", p.name))
            })?;
            if entry.shape != p.tensor.shape() {
                return Err(Error::Config(format!(
                    "checkpoint/model shape mismatch for '{}': stored {:?}, expected {:?}",
                    p.name,
                    entry.shape,
                    p.tensor.shape()
                )));
            }
            p.tensor.set_data(data.clone());
        }
        Ok(())
    }
}
