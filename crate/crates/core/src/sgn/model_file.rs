//! Binary model format.
//!
//! ```text
//! magic    8 bytes  "DIASGN01"
//! length   u64 LE   byte length of the JSON header
//! header   JSON     {version, config, tensors: [{name, rows, cols}], note}
//! blocks   f64 LE   every tensor in header order, row-major
//! ```

use serde::{Deserialize, Serialize};

use super::params::{SgnConfig, SgnParams};
use crate::error::ModelError;
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 8] = b"DIASGN01";
pub const FORMAT_VERSION: u32 = 1;

const SCORE_NOTE: &str = "insertion probability is 1 / (1 + exp(score)): larger scores mean less likely candidates";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    version: u32,
    config: SgnConfig,
    tensors: Vec<TensorEntry>,
    note: String,
}

pub fn encode_model<T: Scalar>(params: &SgnParams<T>) -> Vec<u8> {
    let header = Header {
        version: FORMAT_VERSION,
        config: params.config.clone(),
        tensors: params.tensors.iter().map(|t| TensorEntry { name: t.name.clone(), rows: t.rows, cols: t.cols }).collect(),
        note: SCORE_NOTE.into(),
    };
    let json = serde_json::to_vec_pretty(&header).expect("header serializes");
    let mut out = Vec::with_capacity(16 + json.len() + 8 * params.data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for v in &params.data {
        out.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
    }
    out
}

pub fn decode_model<T: Scalar>(bytes: &[u8]) -> Result<SgnParams<T>, ModelError> {
    let err = |m: &str| ModelError::Format(m.to_string());
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(err("not a model file (bad magic)"));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = bytes.get(16..16usize.saturating_add(hlen)).ok_or_else(|| err("truncated header"))?;
    let header: Header = serde_json::from_slice(body).map_err(|e| ModelError::Format(format!("header: {e}")))?;
    if header.version != FORMAT_VERSION {
        return Err(ModelError::Format(format!("unsupported version {}", header.version)));
    }
    let blocks = &bytes[16 + hlen..];
    if blocks.len() % 8 != 0 {
        return Err(err("parameter blocks are not a whole number of f64 values"));
    }
    let data: Vec<T> = blocks.chunks_exact(8).map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8 bytes")))).collect();
    let params = SgnParams::from_data(header.config, data)?;
    let expected: Vec<(&str, usize, usize)> = params.tensors.iter().map(|t| (t.name.as_str(), t.rows, t.cols)).collect();
    let found: Vec<(&str, usize, usize)> = header.tensors.iter().map(|t| (t.name.as_str(), t.rows, t.cols)).collect();
    if expected != found {
        return Err(err("tensor table does not match the configuration"));
    }
    Ok(params)
}

pub fn save_model<T: Scalar>(params: &SgnParams<T>, path: &std::path::Path) -> std::io::Result<()> {
    std::fs::write(path, encode_model(params))
}

pub fn load_model<T: Scalar>(path: &std::path::Path) -> Result<SgnParams<T>, ModelError> {
    let bytes = std::fs::read(path).map_err(|e| ModelError::Format(format!("{}: {e}", path.display())))?;
    decode_model(&bytes)
}
