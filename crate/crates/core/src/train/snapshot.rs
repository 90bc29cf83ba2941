use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::field::{FieldError, HashGridConfig, MlpConfig, NeuralField};
use crate::math::{Aabb, MathError, Vec3};
use crate::scalar::Real;

pub const SNAPSHOT_MAGIC: [u8; 4] = *b"NGPF";
pub const SNAPSHOT_VERSION: u32 = 1;

const PREAMBLE: usize = 12;

#[derive(Debug, thiserror::Error)]
pub enum SnapshotError {
    #[error("not a snapshot (bad magic {0:02x?})")]
    BadMagic([u8; 4]),
    #[error("unsupported snapshot version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("snapshot truncated: need {needed} bytes, have {have}")]
    Truncated { needed: usize, have: usize },
    #[error("snapshot checksum mismatch (stored {stored:08x}, computed {computed:08x})")]
    Checksum { stored: u32, computed: u32 },
    #[error("snapshot has {0} trailing bytes")]
    TrailingBytes(usize),
    #[error("snapshot header: {0}")]
    Header(String),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Math(#[from] MathError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub steps: usize,
    pub final_loss: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BlockEntry {
    name: String,
    len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    grid: HashGridConfig,
    mlp: MlpConfig,
    aabb_min: [f32; 3],
    aabb_max: [f32; 3],
    meta: SnapshotMeta,
    blocks: Vec<BlockEntry>,
}

/// Serializes a field as `NGPF | version | header length | JSON header |
/// f32 LE blocks | CRC32`. The checksum covers the header and blocks.
pub fn write_snapshot<T: Real>(field: &NeuralField<T>, meta: &SnapshotMeta) -> Vec<u8> {
    let aabb = field.aabb();
    let header = Header {
        grid: field.grid_config().clone(),
        mlp: field.mlp_config().clone(),
        aabb_min: aabb.min.to_array().map(|v| v.as_f32()),
        aabb_max: aabb.max.to_array().map(|v| v.as_f32()),
        meta: meta.clone(),
        blocks: field
            .blocks()
            .into_iter()
            .map(|b| BlockEntry {
                name: b.name,
                len: b.range.len(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(PREAMBLE + json.len() + 4 * field.param_count() + 4);
    out.extend_from_slice(&SNAPSHOT_MAGIC);
    out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for p in field.params() {
        out.extend_from_slice(&p.as_f32().to_le_bytes());
    }
    let crc = crc32fast::hash(&out[PREAMBLE..]);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

pub fn read_snapshot(bytes: &[u8]) -> Result<(NeuralField<f32>, SnapshotMeta), SnapshotError> {
    let truncated = |needed: usize| SnapshotError::Truncated {
        needed,
        have: bytes.len(),
    };
    if bytes.len() < 4 {
        return Err(truncated(PREAMBLE));
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
    if magic != SNAPSHOT_MAGIC {
        return Err(SnapshotError::BadMagic(magic));
    }
    if bytes.len() < PREAMBLE {
        return Err(truncated(PREAMBLE));
    }
    let version = u32_at(bytes, 4);
    if version != SNAPSHOT_VERSION {
        return Err(SnapshotError::Version {
            found: version,
            expected: SNAPSHOT_VERSION,
        });
    }
    let header_len = u32_at(bytes, 8) as usize;
    let header_end = PREAMBLE + header_len;
    if bytes.len() < header_end + 4 {
        return Err(truncated(header_end + 4));
    }
    let header: Header = serde_json::from_slice(&bytes[PREAMBLE..header_end])
        .map_err(|e| SnapshotError::Header(e.to_string()))?;
    let param_count: usize = header.blocks.iter().map(|b| b.len).sum();
    let body_end = header_end + 4 * param_count;
    if bytes.len() < body_end + 4 {
        return Err(truncated(body_end + 4));
    }
    if bytes.len() > body_end + 4 {
        return Err(SnapshotError::TrailingBytes(bytes.len() - body_end - 4));
    }
    let stored = u32_at(bytes, body_end);
    let computed = crc32fast::hash(&bytes[PREAMBLE..body_end]);
    if stored != computed {
        return Err(SnapshotError::Checksum { stored, computed });
    }
    let params: Vec<f32> = bytes[header_end..body_end]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    let aabb = Aabb::new(
        Vec3::from_array(header.aabb_min),
        Vec3::from_array(header.aabb_max),
    )?;
    let field = NeuralField::from_params(header.grid, header.mlp, aabb, params)?;
    let layout: Vec<(String, usize)> = field
        .blocks()
        .into_iter()
        .map(|b| (b.name, b.range.len()))
        .collect();
    let declared: Vec<(String, usize)> = header.blocks.into_iter().map(|b| (b.name, b.len)).collect();
    if layout != declared {
        return Err(SnapshotError::Header(
            "declared blocks do not match the configured layout".into(),
        ));
    }
    Ok((field, header.meta))
}

pub fn save_snapshot<T: Real>(
    field: &NeuralField<T>,
    meta: &SnapshotMeta,
    path: &Path,
) -> Result<(), SnapshotError> {
    fs::write(path, write_snapshot(field, meta)).map_err(|source| SnapshotError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_snapshot(path: &Path) -> Result<(NeuralField<f32>, SnapshotMeta), SnapshotError> {
    let bytes = fs::read(path).map_err(|source| SnapshotError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_snapshot(&bytes)
}
