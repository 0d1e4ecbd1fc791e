//! Provenance stamps for output files.

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::inference::hex;
use crate::TOOL_VERSION;

/// Embedded in every result file so runs can be reproduced.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Meta {
    pub seed: u64,
    pub config_hash: String,
    pub tool_version: String,
}

impl Meta {
    /// `parts` are hashed in order, each length-prefixed.
    pub fn new(seed: u64, parts: &[&[u8]]) -> Self {
        Self {
            seed,
            config_hash: config_hash(parts),
            tool_version: TOOL_VERSION.to_string(),
        }
    }

    /// Leading comment line for CSV outputs.
    pub fn csv_comment(&self) -> String {
        format!(
            "# seed={} config_hash={} tool_version={}",
            self.seed, self.config_hash, self.tool_version
        )
    }
}

pub fn config_hash(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex(&h.finalize())
}
