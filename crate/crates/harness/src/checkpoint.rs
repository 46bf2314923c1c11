//! Checkpoint files: `u64` little-endian header length, a JSON header with the
//! segment table, then the parameters as little-endian `f64`.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use gnp_core::{Layout, ModelSpec, ParamVector, Segment};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

pub const FORMAT: &str = "gnp-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format: String,
    pub version: u32,
    pub model: ModelSpec,
    pub segments: Vec<Segment>,
    pub len: usize,
    /// Run configuration that produced the parameters, when known.
    #[serde(default)]
    pub config: Option<BTreeMap<String, String>>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub header: Header,
    pub params: ParamVector,
}

impl Checkpoint {
    pub fn run_config(&self) -> Result<Option<RunConfig>> {
        self.header.config.as_ref().map(RunConfig::from_map).transpose()
    }
}

pub fn encode(model: &ModelSpec, params: &ParamVector, cfg: Option<&RunConfig>) -> Result<Vec<u8>> {
    let header = Header {
        format: FORMAT.into(),
        version: VERSION,
        model: model.clone(),
        segments: params.layout().segments().to_vec(),
        len: params.len(),
        config: cfg.map(RunConfig::to_map),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(8 + json.len() + 8 * params.len());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for v in params.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    ensure!(bytes.len() >= 8, "checkpoint truncated: no header length");
    let header_len = u64::from_le_bytes(bytes[..8].try_into().unwrap());
    let header_end = 8usize
        .checked_add(usize::try_from(header_len).context("header length overflows")?)
        .filter(|&e| e <= bytes.len())
        .context("checkpoint truncated: header runs past end of file")?;
    let header: Header = serde_json::from_slice(&bytes[8..header_end]).context("malformed checkpoint header")?;
    if header.format != FORMAT || header.version != VERSION {
        bail!("unsupported checkpoint format {} v{}", header.format, header.version);
    }
    let payload = &bytes[header_end..];
    ensure!(
        payload.len() == header.len * 8,
        "checkpoint payload has {} bytes, header declares {} values",
        payload.len(),
        header.len
    );
    let layout = Layout::from_segments(header.segments.clone())?;
    ensure!(
        layout.total_len() == header.len,
        "segment table does not cover {} values",
        header.len
    );
    ensure!(
        header.model.layout()? == layout,
        "segment table does not match the model architecture"
    );
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let params = ParamVector::new(layout, values)?;
    Ok(Checkpoint { header, params })
}

pub fn save(path: &Path, model: &ModelSpec, params: &ParamVector, cfg: Option<&RunConfig>) -> Result<()> {
    std::fs::write(path, encode(model, params, cfg)?).with_context(|| format!("writing {}", path.display()))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    decode(&bytes).with_context(|| format!("loading checkpoint {}", path.display()))
}
