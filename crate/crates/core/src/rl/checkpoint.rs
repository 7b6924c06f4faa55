//! Binary checkpoints: magic, JSON header, little-endian `f64` parameters and
//! a trailing SHA-256 over everything before it.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::obs::ObsNorm;
use super::policy::{Architecture, PolicyParams};
use super::RlError;

pub const MAGIC: &[u8; 8] = b"LOBRLCKP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub arch: Architecture,
    pub layers: Vec<(usize, usize)>,
    pub norm: ObsNorm,
    pub rho_aware: bool,
    pub param_count: usize,
}

impl CheckpointHeader {
    pub fn of(p: &PolicyParams) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            arch: p.arch.clone(),
            layers: p.arch.layer_shapes(),
            norm: p.norm,
            rho_aware: p.rho_aware,
            param_count: p.len(),
        }
    }
}

pub fn to_bytes(p: &PolicyParams) -> Vec<u8> {
    let header = serde_json::to_vec(&CheckpointHeader::of(p)).expect("header serialises");
    let mut out = Vec::with_capacity(8 + 4 + header.len() + 8 + 8 * p.len() + 32);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&(p.len() as u64).to_le_bytes());
    for v in &p.params {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

fn take<'a>(buf: &mut &'a [u8], n: usize) -> Result<&'a [u8], RlError> {
    if buf.len() < n {
        return Err(RlError::Checkpoint("file is truncated".into()));
    }
    let (head, rest) = buf.split_at(n);
    *buf = rest;
    Ok(head)
}

pub fn from_bytes(bytes: &[u8]) -> Result<PolicyParams, RlError> {
    let mut buf = bytes;
    if take(&mut buf, 8)? != MAGIC {
        return Err(RlError::Checkpoint("not a policy checkpoint".into()));
    }
    let hlen = u32::from_le_bytes(take(&mut buf, 4)?.try_into().expect("4 bytes")) as usize;
    let header: CheckpointHeader =
        serde_json::from_slice(take(&mut buf, hlen)?).map_err(|e| RlError::Checkpoint(format!("bad header: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(RlError::Checkpoint(format!("unsupported format version {}", header.format_version)));
    }
    if header.layers != header.arch.layer_shapes() {
        return Err(RlError::Checkpoint("layer shapes disagree with the architecture".into()));
    }
    let n = u64::from_le_bytes(take(&mut buf, 8)?.try_into().expect("8 bytes")) as usize;
    if n != header.param_count {
        return Err(RlError::Checkpoint(format!("header declares {} parameters, body {n}", header.param_count)));
    }
    let body = take(&mut buf, n.checked_mul(8).ok_or_else(|| RlError::Checkpoint("parameter count overflows".into()))?)?;
    let params: Vec<f64> = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    let digest = take(&mut buf, 32)?;
    if !buf.is_empty() {
        return Err(RlError::Checkpoint("trailing bytes".into()));
    }
    if Sha256::digest(&bytes[..bytes.len() - 32]).as_slice() != digest {
        return Err(RlError::Checkpoint("checksum mismatch".into()));
    }
    PolicyParams::from_flat(header.arch, header.norm, header.rho_aware, params)
        .map_err(|e| RlError::Checkpoint(format!("shape mismatch: {e}")))
}

pub fn save(p: &PolicyParams, path: &Path) -> Result<(), RlError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(path, to_bytes(p))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<PolicyParams, RlError> {
    from_bytes(&fs::read(path)?)
}

/// Loads and checks the architecture and rho mode against expectations.
pub fn load_expecting(path: &Path, arch: &Architecture, rho_aware: bool) -> Result<PolicyParams, RlError> {
    let p = load(path)?;
    if &p.arch != arch {
        return Err(RlError::Checkpoint(format!("architecture {:?} does not match expected {:?}", p.arch, arch)));
    }
    if p.rho_aware != rho_aware {
        return Err(RlError::Checkpoint(format!(
            "checkpoint rho_aware={} but configuration requires rho_aware={rho_aware}",
            p.rho_aware
        )));
    }
    Ok(p)
}

/// Hex SHA-256 of the serialised checkpoint.
pub fn hash(p: &PolicyParams) -> String {
    hex::encode(Sha256::digest(to_bytes(p)))
}
