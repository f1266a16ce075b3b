//! JSON messages exchanged over `/play`.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use mzi_core::optics::export::quantize;
use mzi_core::optics::Observation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ClientMessage {
    Reset {
        #[serde(default)]
        seed: Option<u64>,
    },
    Action {
        action_id: i64,
    },
    Close,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ServerMessage {
    Observation {
        step: usize,
        visibility: f64,
        /// Absent for the reset observation.
        reward: Option<f64>,
        done: bool,
        /// Base64 of `frames × pixels × pixels` bytes, frame-major.
        frames: String,
        seed: u64,
    },
    Summary {
        best_visibility: f64,
        #[serde(rename = "return")]
        episode_return: f64,
    },
    Error {
        code: String,
        detail: String,
    },
}

impl ServerMessage {
    pub fn error(code: &str, detail: impl Into<String>) -> Self {
        Self::Error {
            code: code.into(),
            detail: detail.into(),
        }
    }
}

/// 8-bit quantization of every pixel, `round(255·v)`.
pub fn encode_frames(obs: &Observation<f32>) -> Vec<u8> {
    obs.data.iter().map(|&v| quantize(v)).collect()
}

pub fn frames_to_base64(obs: &Observation<f32>) -> String {
    STANDARD.encode(encode_frames(obs))
}

pub fn decode_frames(b64: &str) -> Option<Vec<u8>> {
    STANDARD.decode(b64).ok()
}
