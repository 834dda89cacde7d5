//! Binary shard format, directory sink and JSON manifest.
//!
//! A shard holds exactly one [`SampleRecord`]. All integers and floats are
//! little-endian. The layout is documented byte by byte in `FORMAT.md`.

use std::collections::BTreeMap;
use std::fs;
use std::hash::Hasher;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::Category;
use crate::walk::{
    DatasetSummary, FeatureKind, GenerationConfig, SampleRecord, SampleSink, SkippedWork,
    StickingMode, VectorConvention,
};

pub const SHARD_MAGIC: &[u8; 8] = b"GEOWALK1";
pub const FORMAT_VERSION: u16 = 1;
/// Stored stuck step for a particle that never stuck.
pub const NEVER_STUCK: u16 = 0xFFFF;
pub const SHARD_EXTENSION: &str = "gwk";
pub const MANIFEST_FILE: &str = "manifest.json";

pub const VELOCITY_MAGIC: &[u8; 8] = b"GEOWVEL1";

#[derive(Debug, Error)]
pub enum ShardError {
    #[error("bad magic {found:02x?}")]
    BadMagic { found: Vec<u8> },
    #[error("format version {found}, expected {expected}")]
    VersionMismatch { found: u16, expected: u16 },
    #[error("checksum mismatch: header says {stored:016x}, payload hashes to {computed:016x}")]
    ChecksumMismatch { stored: u64, computed: u64 },
    #[error("truncated at byte {offset}: need {needed} bytes, have {available}")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("{extra} unexpected bytes after payload")]
    TrailingData { extra: usize },
    #[error("invalid {field}: {detail}")]
    InvalidField { field: &'static str, detail: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("manifest references missing shard {0}")]
    DanglingReference(String),
    #[error("manifest total {total} disagrees with {listed} listed shards")]
    CountMismatch { total: usize, listed: usize },
    #[error("malformed manifest: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// FNV-1a 64 over `bytes`.
pub fn checksum(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

pub fn checksum_hex(bytes: &[u8]) -> String {
    format!("{:016x}", checksum(bytes))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShardHeader {
    pub format_version: u16,
    pub geometry_id: String,
    pub dynamics_index: u32,
    pub n_points: u32,
    pub tau: u16,
    pub feature_kind: FeatureKind,
    pub sticking_mode: StickingMode,
    pub vector_convention: VectorConvention,
    pub v_max: f64,
    pub checksum: u64,
}

impl ShardHeader {
    pub fn encoded_len(&self) -> usize {
        8 + 2 + 4 + self.geometry_id.len() + 4 + 4 + 2 + 3 + 8 + 8
    }

    pub fn payload_len(&self) -> usize {
        payload_len(
            self.n_points as usize,
            self.tau as usize,
            self.feature_kind.channels(),
        )
    }
}

/// Payload bytes for `n` particles, `tau + 1` steps and `channels` feature channels.
pub fn payload_len(n: usize, tau: usize, channels: usize) -> usize {
    n * (3 + 3) * 4 + n * (tau + 1) * channels * 4 + n * 2
}

fn invalid(field: &'static str, detail: impl Into<String>) -> ShardError {
    ShardError::InvalidField {
        field,
        detail: detail.into(),
    }
}

fn encode_payload(record: &SampleRecord) -> Result<Vec<u8>, ShardError> {
    let n = record.n_points();
    let mut out = Vec::with_capacity(payload_len(n, record.tau as usize, record.channels()));
    for p in record.positions.iter().chain(&record.velocities) {
        for c in p {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    for f in &record.features {
        out.extend_from_slice(&f.to_le_bytes());
    }
    for s in &record.stuck_steps {
        let code = match *s {
            None => NEVER_STUCK,
            Some(s) if s <= record.tau => s,
            Some(s) => return Err(invalid("stuck_steps", format!("step {s} beyond tau {}", record.tau))),
        };
        out.extend_from_slice(&code.to_le_bytes());
    }
    Ok(out)
}

/// Serializes a record into shard bytes.
pub fn encode_shard(record: &SampleRecord) -> Result<Vec<u8>, ShardError> {
    if !record.is_consistent() {
        return Err(invalid("record", "array lengths disagree"));
    }
    let n_points = u32::try_from(record.n_points()).map_err(|_| invalid("n_points", "exceeds u32"))?;
    let id_len = u32::try_from(record.geometry_id.len()).map_err(|_| invalid("geometry_id", "too long"))?;
    if record.tau == NEVER_STUCK {
        return Err(invalid("tau", "65535 is reserved"));
    }
    let payload = encode_payload(record)?;

    let mut out = Vec::with_capacity(64 + record.geometry_id.len() + payload.len());
    out.extend_from_slice(SHARD_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&id_len.to_le_bytes());
    out.extend_from_slice(record.geometry_id.as_bytes());
    out.extend_from_slice(&record.dynamics_index.to_le_bytes());
    out.extend_from_slice(&n_points.to_le_bytes());
    out.extend_from_slice(&record.tau.to_le_bytes());
    out.push(record.feature_kind.code());
    out.push(record.sticking_mode.code());
    out.push(record.vector_convention.code());
    out.extend_from_slice(&record.v_max.to_le_bytes());
    out.extend_from_slice(&checksum(&payload).to_le_bytes());
    out.extend_from_slice(&payload);
    Ok(out)
}

/// Writes a shard to `sink`, returning the byte count.
pub fn write_shard<W: Write>(record: &SampleRecord, sink: &mut W) -> Result<usize, ShardError> {
    let bytes = encode_shard(record)?;
    sink.write_all(&bytes)?;
    Ok(bytes.len())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ShardError> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            return Err(ShardError::Truncated {
                offset: self.pos,
                needed: n,
                available,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const K: usize>(&mut self) -> Result<[u8; K], ShardError> {
        Ok(self.take(K)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8, ShardError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, ShardError> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32, ShardError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64, ShardError> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64, ShardError> {
        Ok(f64::from_le_bytes(self.array()?))
    }
}

fn parse_header(r: &mut Reader) -> Result<ShardHeader, ShardError> {
    let magic = r.take(8)?;
    if magic != SHARD_MAGIC {
        return Err(ShardError::BadMagic {
            found: magic.to_vec(),
        });
    }
    let format_version = r.u16()?;
    if format_version != FORMAT_VERSION {
        return Err(ShardError::VersionMismatch {
            found: format_version,
            expected: FORMAT_VERSION,
        });
    }
    let id_len = r.u32()? as usize;
    let geometry_id = std::str::from_utf8(r.take(id_len)?)
        .map_err(|e| invalid("geometry_id", e.to_string()))?
        .to_string();
    let dynamics_index = r.u32()?;
    let n_points = r.u32()?;
    let tau = r.u16()?;
    if tau == NEVER_STUCK {
        return Err(invalid("tau", "65535 is reserved"));
    }
    let code = r.u8()?;
    let feature_kind = FeatureKind::from_code(code).ok_or_else(|| invalid("feature_kind", format!("code {code}")))?;
    let code = r.u8()?;
    let sticking_mode = StickingMode::from_code(code).ok_or_else(|| invalid("sticking_mode", format!("code {code}")))?;
    let code = r.u8()?;
    let vector_convention =
        VectorConvention::from_code(code).ok_or_else(|| invalid("vector_convention", format!("code {code}")))?;
    let v_max = r.f64()?;
    let checksum = r.u64()?;
    Ok(ShardHeader {
        format_version,
        geometry_id,
        dynamics_index,
        n_points,
        tau,
        feature_kind,
        sticking_mode,
        vector_convention,
        v_max,
        checksum,
    })
}

/// Parses only the header.
pub fn read_shard_header(bytes: &[u8]) -> Result<ShardHeader, ShardError> {
    parse_header(&mut Reader { bytes, pos: 0 })
}

/// Exact inverse of [`encode_shard`].
pub fn read_shard(bytes: &[u8]) -> Result<SampleRecord, ShardError> {
    let mut r = Reader { bytes, pos: 0 };
    let header = parse_header(&mut r)?;
    let payload_start = r.pos;
    let expected = header.payload_len();
    let available = bytes.len() - payload_start;
    if available < expected {
        return Err(ShardError::Truncated {
            offset: payload_start,
            needed: expected,
            available,
        });
    }
    if available > expected {
        return Err(ShardError::TrailingData {
            extra: available - expected,
        });
    }
    let computed = checksum(&bytes[payload_start..]);
    if computed != header.checksum {
        return Err(ShardError::ChecksumMismatch {
            stored: header.checksum,
            computed,
        });
    }

    let n = header.n_points as usize;
    let f32s = |chunk: &[u8]| -> Vec<f32> {
        chunk
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect()
    };
    let triples = |v: Vec<f32>| -> Vec<[f32; 3]> { v.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect() };

    let positions = triples(f32s(r.take(n * 12)?));
    let velocities = triples(f32s(r.take(n * 12)?));
    let features = f32s(r.take(n * (header.tau as usize + 1) * header.feature_kind.channels() * 4)?);
    let mut stuck_steps = Vec::with_capacity(n);
    for _ in 0..n {
        stuck_steps.push(match r.u16()? {
            NEVER_STUCK => None,
            s if s <= header.tau => Some(s),
            s => return Err(invalid("stuck_steps", format!("step {s} beyond tau {}", header.tau))),
        });
    }

    Ok(SampleRecord {
        geometry_id: header.geometry_id,
        dynamics_index: header.dynamics_index,
        tau: header.tau,
        feature_kind: header.feature_kind,
        sticking_mode: header.sticking_mode,
        vector_convention: header.vector_convention,
        v_max: header.v_max,
        positions,
        velocities,
        features,
        stuck_steps,
    })
}

pub fn read_shard_file(path: &Path) -> Result<SampleRecord, ShardError> {
    read_shard(&fs::read(path)?)
}

/// Velocity block: a condition field at query points.
///
/// Layout: magic `GEOWVEL1`, version u16, n_points u32, checksum u64 (FNV-1a
/// of the payload), then positions (N x 3 f32) and velocities (N x 3 f32).
pub fn encode_velocity_block(positions: &[[f32; 3]], velocities: &[[f32; 3]]) -> Result<Vec<u8>, ShardError> {
    if positions.len() != velocities.len() {
        return Err(invalid("velocities", "length differs from positions"));
    }
    let n = u32::try_from(positions.len()).map_err(|_| invalid("n_points", "exceeds u32"))?;
    let mut payload = Vec::with_capacity(positions.len() * 24);
    for p in positions.iter().chain(velocities) {
        for c in p {
            payload.extend_from_slice(&c.to_le_bytes());
        }
    }
    let mut out = Vec::with_capacity(22 + payload.len());
    out.extend_from_slice(VELOCITY_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&n.to_le_bytes());
    out.extend_from_slice(&checksum(&payload).to_le_bytes());
    out.extend_from_slice(&payload);
    Ok(out)
}

/// Positions and velocities of a velocity block.
pub type VelocityBlock = (Vec<[f32; 3]>, Vec<[f32; 3]>);

pub fn decode_velocity_block(bytes: &[u8]) -> Result<VelocityBlock, ShardError> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(8)?;
    if magic != VELOCITY_MAGIC {
        return Err(ShardError::BadMagic {
            found: magic.to_vec(),
        });
    }
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(ShardError::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let n = r.u32()? as usize;
    let stored = r.u64()?;
    let start = r.pos;
    let expected = n * 24;
    let available = bytes.len() - start;
    if available < expected {
        return Err(ShardError::Truncated {
            offset: start,
            needed: expected,
            available,
        });
    }
    if available > expected {
        return Err(ShardError::TrailingData {
            extra: available - expected,
        });
    }
    let computed = checksum(&bytes[start..]);
    if computed != stored {
        return Err(ShardError::ChecksumMismatch { stored, computed });
    }
    let mut read = |count: usize| -> Result<Vec<[f32; 3]>, ShardError> {
        let raw = r.take(count * 12)?;
        Ok(raw
            .chunks_exact(12)
            .map(|c| {
                let f = |k: usize| f32::from_le_bytes(c[4 * k..4 * k + 4].try_into().unwrap());
                [f(0), f(1), f(2)]
            })
            .collect())
    };
    let positions = read(n)?;
    let velocities = read(n)?;
    Ok((positions, velocities))
}

/// One shard as listed in the manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardEntry {
    /// Relative to the dataset root, `/`-separated.
    pub path: String,
    pub geometry_id: String,
    pub dynamics_index: u32,
    pub category: Category,
    pub bytes: u64,
    /// FNV-1a 64 of the whole file, as 16 hex digits.
    pub checksum: String,
}

/// File-system-safe stem for a geometry id. Ids that needed escaping get a
/// hash suffix so distinct ids never share a stem.
pub fn shard_stem(geometry_id: &str) -> String {
    let clean: String = geometry_id
        .chars()
        .enumerate()
        .map(|(i, c)| {
            let keep = c.is_ascii_alphanumeric() || c == '-' || c == '_' || (c == '.' && i > 0);
            if keep { c } else { '_' }
        })
        .collect();
    if clean == geometry_id && !clean.is_empty() {
        clean
    } else {
        format!("{clean}-{:08x}", checksum(geometry_id.as_bytes()) as u32)
    }
}

/// `shards/<prefix>/<stem>__d<index>.gwk`, where `prefix` is the first two
/// characters of the stem.
pub fn shard_relpath(geometry_id: &str, dynamics_index: u32) -> String {
    let stem = shard_stem(geometry_id);
    let prefix: String = stem.chars().chain("__".chars()).take(2).collect::<String>().to_ascii_lowercase();
    format!("shards/{prefix}/{stem}__d{dynamics_index:05}.{SHARD_EXTENSION}")
}

/// Writes one shard file per record beneath `root`.
#[derive(Debug, Clone)]
pub struct DirectorySink {
    root: PathBuf,
}

impl DirectorySink {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&self, category: Category, record: &SampleRecord) -> Result<ShardEntry, ShardError> {
        let rel = shard_relpath(&record.geometry_id, record.dynamics_index);
        let path = self.root.join(&rel);
        fs::create_dir_all(path.parent().expect("shard path has a parent"))?;
        let bytes = encode_shard(record)?;
        // Land the file under its final name only once complete.
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, &bytes)?;
        fs::rename(&tmp, &path)?;
        Ok(ShardEntry {
            path: rel,
            geometry_id: record.geometry_id.clone(),
            dynamics_index: record.dynamics_index,
            category,
            bytes: bytes.len() as u64,
            checksum: checksum_hex(&bytes),
        })
    }
}

impl SampleSink for DirectorySink {
    fn accept(&self, category: Category, record: &SampleRecord) -> Result<ShardEntry, String> {
        self.write(category, record).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u16,
    pub dataset_name: String,
    pub master_seed: u64,
    pub config: GenerationConfig,
    pub geometries_per_category: BTreeMap<Category, usize>,
    pub samples_per_category: BTreeMap<Category, usize>,
    pub total_samples: usize,
    pub point_steps: u64,
    pub shards: Vec<ShardEntry>,
    #[serde(default)]
    pub skipped: Vec<SkippedWork>,
}

impl Manifest {
    pub fn from_summary(
        dataset_name: impl Into<String>,
        master_seed: u64,
        config: &GenerationConfig,
        summary: &DatasetSummary,
    ) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            dataset_name: dataset_name.into(),
            master_seed,
            config: config.clone(),
            geometries_per_category: summary.geometries_per_category.clone(),
            samples_per_category: summary.samples_per_category.clone(),
            total_samples: summary.total_samples,
            point_steps: summary.point_steps,
            shards: summary.shards.clone(),
            skipped: summary.skipped.clone(),
        }
    }

    /// Totals agree with the shard list and every shard exists under `root`.
    pub fn verify_references(&self, root: &Path) -> Result<(), ManifestError> {
        if self.total_samples != self.shards.len() {
            return Err(ManifestError::CountMismatch {
                total: self.total_samples,
                listed: self.shards.len(),
            });
        }
        for s in &self.shards {
            if !root.join(&s.path).is_file() {
                return Err(ManifestError::DanglingReference(s.path.clone()));
            }
        }
        Ok(())
    }
}

pub fn write_manifest(manifest: &Manifest, path: &Path) -> Result<(), ManifestError> {
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Manifest, ManifestError> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}
