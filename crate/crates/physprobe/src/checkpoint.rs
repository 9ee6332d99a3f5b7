//! Parameter checkpoints: one line of JSON header, then the flat parameter
//! vector as little-endian `f64`.

use std::path::Path;

use physprobe_core::nnet::{AgentParams, NetworkShape};
use serde::{Deserialize, Serialize};

use crate::output::write_atomic;
use crate::Error;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub obs_dim: usize,
    pub n_actions: usize,
    /// Embedding width; 0 means observations feed the LSTM directly.
    pub d_e: usize,
    pub hidden: usize,
    pub version: u32,
}

impl CheckpointHeader {
    pub fn shape(&self) -> NetworkShape {
        NetworkShape { obs_dim: self.obs_dim, n_actions: self.n_actions, embed_dim: self.d_e, hidden: self.hidden }
    }
}

pub fn encode(params: &AgentParams) -> Vec<u8> {
    let s = params.shape();
    let header = CheckpointHeader { obs_dim: s.obs_dim, n_actions: s.n_actions, d_e: s.embed_dim, hidden: s.hidden, version: CHECKPOINT_VERSION };
    let mut out = serde_json::to_vec(&header).expect("header serializes");
    out.push(b'\n');
    out.reserve(8 * params.as_slice().len());
    for x in params.as_slice() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<AgentParams, Error> {
    let bad = |m: String| Error::Checkpoint(m);
    let nl = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| bad("missing header line".into()))?;
    let header: CheckpointHeader = serde_json::from_slice(&bytes[..nl]).map_err(|e| bad(format!("header: {e}")))?;
    if header.version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported version {}", header.version)));
    }
    let body = &bytes[nl + 1..];
    let shape = header.shape();
    if body.len() != 8 * shape.param_count() {
        return Err(bad(format!("expected {} parameters, found {} bytes", shape.param_count(), body.len())));
    }
    let data = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    AgentParams::from_flat(shape, data).map_err(|e| bad(e.to_string()))
}

pub fn save(path: &Path, params: &AgentParams) -> Result<(), Error> {
    write_atomic(path, &encode(params))
}

pub fn load(path: &Path) -> Result<AgentParams, Error> {
    let bytes = std::fs::read(path).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    decode(&bytes)
}
