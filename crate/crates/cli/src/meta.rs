use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use walsh_net::io::FORMAT_VERSION;
use walsh_net::test_functions::CLAMP;

#[derive(Clone, Debug, Serialize)]
pub struct InputDigest {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Clamp {
    pub lower: f64,
    pub upper: f64,
}

/// Everything needed to rerun a command bit for bit.
#[derive(Clone, Debug, Serialize)]
pub struct Metadata {
    pub tool: &'static str,
    pub version: &'static str,
    pub format_version: u32,
    pub command: String,
    pub config: Value,
    pub config_hash: String,
    pub inputs: Vec<InputDigest>,
    pub direction_numbers: String,
    pub clamp: Clamp,
    pub threads: usize,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Metadata {
    pub fn new<C: Serialize>(command: &str, config: &C, threads: usize) -> Result<Self> {
        let config = serde_json::to_value(config)?;
        let config_hash = sha256_hex(serde_json::to_string(&config)?.as_bytes());
        Ok(Metadata {
            tool: "walsh-net",
            version: env!("CARGO_PKG_VERSION"),
            format_version: FORMAT_VERSION,
            command: command.to_string(),
            config,
            config_hash,
            inputs: Vec::new(),
            direction_numbers: "bundled new-joe-kuo-6.1024".into(),
            clamp: Clamp { lower: CLAMP, upper: 1.0 - CLAMP },
            threads,
        })
    }

    /// Reads `path`, records its digest under `role` and returns the bytes.
    pub fn read_input(&mut self, role: &str, path: &Path) -> Result<Vec<u8>> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs.push(InputDigest { role: role.into(), path: path.display().to_string(), sha256: sha256_hex(&bytes) });
        Ok(bytes)
    }

    /// `doc` (a JSON object) with this block under `"metadata"`.
    pub fn attach(&self, doc: &str, pretty: bool) -> Result<String> {
        let mut value: Value = serde_json::from_str(doc)?;
        if let Value::Object(map) = &mut value {
            map.insert("metadata".into(), serde_json::to_value(self)?);
        }
        Ok(if pretty { serde_json::to_string_pretty(&value)? } else { serde_json::to_string(&value)? })
    }
}
