//! Checkpoints: a JSON manifest plus a raw little-endian `f32` parameter blob.
//!
//! A checkpoint is a directory containing `manifest.json` and `params.bin`.
//! `f64` networks are narrowed to `f32` on save.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::nn::{NetSpec, ParamSlot, QNetwork};
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PARAMS_FILE: &str = "params.bin";
pub const FORMAT: &str = "mzi-qnet/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub config_hash: String,
    pub network: NetSpec,
    pub layers: Vec<ParamSlot>,
    pub param_count: usize,
    pub step_count: u64,
    pub dtype: String,
}

pub fn save_checkpoint<T: Real>(net: &QNetwork<T>, dir: &Path, step_count: u64) -> Result<()> {
    fs::create_dir_all(dir)?;
    let manifest = Manifest {
        format: FORMAT.into(),
        config_hash: net.spec().config_hash(),
        network: net.spec().clone(),
        layers: net.layout().to_vec(),
        param_count: net.param_count(),
        step_count,
        dtype: "<f4".into(),
    };
    let mut blob = Vec::with_capacity(net.param_count() * 4);
    for &p in net.params() {
        blob.extend_from_slice(&(p.as_f64() as f32).to_le_bytes());
    }
    // Parameters first so a manifest never points at a missing blob.
    write_atomic(&dir.join(PARAMS_FILE), &blob)?;
    write_atomic(&dir.join(MANIFEST_FILE), &serde_json::to_vec_pretty(&manifest)?)?;
    Ok(())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp: PathBuf = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let bytes = fs::read(&path).map_err(|e| Error::checkpoint(&path, e.to_string()))?;
    let manifest: Manifest =
        serde_json::from_slice(&bytes).map_err(|e| Error::checkpoint(&path, format!("corrupt manifest: {e}")))?;
    if manifest.format != FORMAT {
        return Err(Error::checkpoint(&path, format!("unknown format {:?}", manifest.format)));
    }
    Ok(manifest)
}

/// Loads a checkpoint, verifying it is self-consistent.
pub fn load_checkpoint<T: Real>(dir: &Path) -> Result<(QNetwork<T>, Manifest)> {
    let manifest = read_manifest(dir)?;
    let mpath = dir.join(MANIFEST_FILE);
    let own_hash = manifest.network.config_hash();
    if own_hash != manifest.config_hash {
        return Err(Error::IncompatibleCheckpoint {
            path: mpath,
            found: manifest.config_hash,
            expected: own_hash,
        });
    }
    let probe = QNetwork::<T>::from_params(
        manifest.network.clone(),
        vec![T::zero(); manifest.param_count],
    )
    .map_err(|e| Error::checkpoint(&mpath, format!("shape mismatch: {e}")))?;
    if probe.layout() != &manifest.layers[..] {
        return Err(Error::checkpoint(&mpath, "layer table does not match the architecture"));
    }

    let ppath = dir.join(PARAMS_FILE);
    let blob = fs::read(&ppath).map_err(|e| Error::checkpoint(&ppath, e.to_string()))?;
    if blob.len() != manifest.param_count * 4 {
        return Err(Error::checkpoint(
            &ppath,
            format!("expected {} bytes, found {}", manifest.param_count * 4, blob.len()),
        ));
    }
    let params = blob
        .chunks_exact(4)
        .map(|c| T::lit(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
        .collect();
    let net = QNetwork::from_params(manifest.network.clone(), params)?;
    Ok((net, manifest))
}

/// Like [`load_checkpoint`], additionally requiring the architecture `expected`.
pub fn load_checkpoint_for<T: Real>(dir: &Path, expected: &NetSpec) -> Result<(QNetwork<T>, Manifest)> {
    let manifest = read_manifest(dir)?;
    let want = expected.config_hash();
    if manifest.config_hash != want {
        return Err(Error::IncompatibleCheckpoint {
            path: dir.join(MANIFEST_FILE),
            found: manifest.config_hash,
            expected: want,
        });
    }
    load_checkpoint(dir)
}
