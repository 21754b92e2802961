//! On-disk dataset format.
//!
//! `records.bin` is a concatenation of records; one record is the four
//! clouds of a sample, each serialized as a little-endian u32 point count
//! followed by count*3 little-endian f32 coordinates. `manifest.json`
//! carries the layout plus a CRC32 per record.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geometry::PointCloud;

use super::{DatasetError, InContextSample, Result, Task};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const RECORDS_FILE: &str = "records.bin";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecordMeta {
    pub offset: u64,
    pub len: u64,
    pub crc32: u32,
    pub task: Task,
    pub level: u8,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Counts {
    pub per_cell: u64,
    pub total: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub n_points: usize,
    pub tasks: Vec<Task>,
    pub levels: Vec<u8>,
    pub counts: Counts,
    pub seed: u64,
    pub patch_m: usize,
    pub patch_k: usize,
    pub records: Vec<RecordMeta>,
}

impl DatasetManifest {
    /// Stable content hash used as the dataset fingerprint in reports.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(self).expect("manifest serializes"));
        let out = h.finalize();
        hex_string(&out[..8])
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn push_cloud(buf: &mut Vec<u8>, c: &PointCloud) {
    buf.extend_from_slice(&(c.len() as u32).to_le_bytes());
    for p in c.points() {
        for &v in p {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
}

pub fn encode_record(s: &InContextSample) -> Vec<u8> {
    let mut buf = Vec::new();
    push_cloud(&mut buf, &s.prompt_input);
    push_cloud(&mut buf, &s.prompt_target);
    push_cloud(&mut buf, &s.query_input);
    push_cloud(&mut buf, &s.query_target);
    buf
}

fn read_cloud(buf: &[u8], pos: &mut usize, record: usize) -> Result<PointCloud> {
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        let s = buf.get(*pos..*pos + n).ok_or(DatasetError::Truncated { record })?;
        *pos += n;
        Ok(s)
    };
    let count = u32::from_le_bytes(take(pos, 4)?.try_into().unwrap()) as usize;
    let mut points = Vec::with_capacity(count);
    for _ in 0..count {
        let mut p = [0.0f32; 3];
        for v in p.iter_mut() {
            *v = f32::from_le_bytes(take(pos, 4)?.try_into().unwrap());
        }
        points.push(p);
    }
    PointCloud::new(points).map_err(|_| DatasetError::Truncated { record })
}

pub fn decode_record(bytes: &[u8], meta: &RecordMeta, record: usize) -> Result<InContextSample> {
    let mut pos = 0usize;
    let prompt_input = read_cloud(bytes, &mut pos, record)?;
    let prompt_target = read_cloud(bytes, &mut pos, record)?;
    let query_input = read_cloud(bytes, &mut pos, record)?;
    let query_target = read_cloud(bytes, &mut pos, record)?;
    if pos != bytes.len() {
        return Err(DatasetError::Truncated { record });
    }
    Ok(InContextSample {
        task: meta.task,
        level: meta.level,
        record_index: record as u64,
        prompt_input,
        prompt_target,
        query_input,
        query_target,
    })
}

/// A loaded dataset: the manifest plus raw record bytes. Records are
/// decoded (and CRC-checked) on access.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    data: Vec<u8>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.manifest.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.records.is_empty()
    }

    pub fn get(&self, index: usize) -> Result<InContextSample> {
        let meta = self
            .manifest
            .records
            .get(index)
            .ok_or_else(|| DatasetError::InvalidConfig(format!("record {index} out of range")))?;
        let bytes = self
            .data
            .get(meta.offset as usize..(meta.offset + meta.len) as usize)
            .ok_or(DatasetError::Truncated { record: index })?;
        if crc32fast::hash(bytes) != meta.crc32 {
            return Err(DatasetError::Checksum { record: index });
        }
        decode_record(bytes, meta, index)
    }

    pub fn iter(&self) -> impl Iterator<Item = Result<InContextSample>> + '_ {
        (0..self.len()).map(|i| self.get(i))
    }
}

pub fn write_dataset(dir: &Path, manifest: &DatasetManifest, data: &[u8]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut f = std::fs::File::create(dir.join(RECORDS_FILE))?;
    f.write_all(data)?;
    let mut m = std::fs::File::create(dir.join(MANIFEST_FILE))?;
    m.write_all(serde_json::to_string_pretty(manifest)?.as_bytes())?;
    m.write_all(b"\n")?;
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest: DatasetManifest =
        serde_json::from_slice(&std::fs::read(dir.join(MANIFEST_FILE))?)?;
    if manifest.version != FORMAT_VERSION {
        return Err(DatasetError::UnsupportedVersion { found: manifest.version });
    }
    let data = std::fs::read(dir.join(RECORDS_FILE))?;
    Ok(Dataset { manifest, data })
}
