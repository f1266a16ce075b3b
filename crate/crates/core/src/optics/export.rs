//! Debug exports: 8-bit PGM frames and raw float observation dumps.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::geometry::BeamState;
use super::render::{Camera, Observation};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// `round(255·v)` for `v` clipped to `[0, 1]`.
pub fn quantize<T: Real>(v: T) -> u8 {
    let v = v.as_f64().clamp(0.0, 1.0);
    (v * 255.0).round() as u8
}

pub fn dequantize<T: Real>(b: u8) -> T {
    T::lit(b as f64 / 255.0)
}

/// Binary (P5) PGM of one square frame.
pub fn encode_pgm<T: Real>(pixels: &[T], n_pixels: usize) -> Vec<u8> {
    assert_eq!(pixels.len(), n_pixels * n_pixels, "frame is not square");
    let mut out = format!("P5\n{n_pixels} {n_pixels}\n255\n").into_bytes();
    out.extend(pixels.iter().map(|&v| quantize(v)));
    out
}

pub fn write_pgm<T: Real>(path: &Path, pixels: &[T], n_pixels: usize) -> Result<()> {
    fs::write(path, encode_pgm(pixels, n_pixels))?;
    Ok(())
}

/// Parses a P5 PGM with maxval 255, returning `(width, height, bytes)`.
pub fn decode_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let bad = |m: &str| Error::contract(format!("malformed PGM: {m}"));
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header"))?);
    }
    if fields[0] != "P5" || fields[3] != "255" {
        return Err(bad("only 8-bit P5 is supported"));
    }
    let w: usize = fields[1].parse().map_err(|_| bad("width"))?;
    let h: usize = fields[2].parse().map_err(|_| bad("height"))?;
    let data = bytes.get(pos + 1..).ok_or_else(|| bad("missing data"))?;
    if data.len() != w * h {
        return Err(bad("pixel count"));
    }
    Ok((w, h, data.to_vec()))
}

/// JSON sidecar describing a raw observation dump.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObservationSidecar {
    pub state: BeamState<f64>,
    pub phases: Vec<f64>,
    pub camera: Camera<f64>,
    pub shape: [usize; 3],
    pub dtype: String,
}

/// Writes `<stem>.f32` (little-endian, frame-major) and `<stem>.json`.
/// Returns the two paths.
pub fn write_observation_dump<T: Real>(
    stem: &Path,
    obs: &Observation<T>,
    state: &BeamState<T>,
    phases: &[T],
    camera: &Camera<T>,
) -> Result<(PathBuf, PathBuf)> {
    let raw_path = stem.with_extension("f32");
    let json_path = stem.with_extension("json");
    let mut raw = Vec::with_capacity(obs.data.len() * 4);
    for &v in &obs.data {
        raw.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
    fs::File::create(&raw_path)?.write_all(&raw)?;
    let sidecar = ObservationSidecar {
        state: state.cast(),
        phases: phases.iter().map(|p| p.as_f64()).collect(),
        camera: camera.cast(),
        shape: [obs.n_frames, obs.n_pixels, obs.n_pixels],
        dtype: "<f4".into(),
    };
    fs::write(&json_path, serde_json::to_vec_pretty(&sidecar)?)?;
    Ok((raw_path, json_path))
}

pub fn read_observation_dump(stem: &Path) -> Result<(Observation<f32>, ObservationSidecar)> {
    let sidecar: ObservationSidecar =
        serde_json::from_slice(&fs::read(stem.with_extension("json"))?)?;
    let raw = fs::read(stem.with_extension("f32"))?;
    let [f, h, w] = sidecar.shape;
    if h != w || raw.len() != f * h * w * 4 {
        return Err(Error::contract("raw dump size does not match sidecar shape"));
    }
    let data = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((
        Observation {
            n_frames: f,
            n_pixels: h,
            data,
        },
        sidecar,
    ))
}
