//! Binary container shared by posterior and policy files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      4 bytes
//! version    u32
//! header_len u64
//! header     header_len bytes of UTF-8 JSON
//! payload    f64 values, little-endian, until end of file
//! ```

use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

pub fn encode(magic: &[u8; 4], header: &serde_json::Value, payload: &[f64]) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(header)?;
    let mut out = Vec::with_capacity(16 + header.len() + 8 * payload.len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for v in payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(magic: &[u8; 4], bytes: &[u8]) -> Result<(serde_json::Value, Vec<f64>)> {
    if bytes.len() < 16 || &bytes[..4] != magic {
        return Err(Error::Format(format!("expected magic {:?}", String::from_utf8_lossy(magic))));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported format version {version}")));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = &bytes[16..];
    if header_len > body.len() {
        return Err(Error::Format("truncated header".into()));
    }
    let header = serde_json::from_slice(&body[..header_len])?;
    let payload = &body[header_len..];
    if !payload.len().is_multiple_of(8) {
        return Err(Error::Format("payload is not a whole number of f64 values".into()));
    }
    let values = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok((header, values))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(bytes)?;
    Ok(())
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    let mut f = std::fs::File::open(path)?;
    let mut buf = Vec::new();
    f.read_to_end(&mut buf)?;
    Ok(buf)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
