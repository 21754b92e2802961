//! Procedural in-context task datasets: reconstruction, denoising, and
//! registration pairs at five difficulty levels, built deterministically
//! from a single seed.
//!
//! Every record derives its randomness from (dataset seed, record index),
//! so a record can always be regenerated bit-exactly from the manifest
//! alone; that replay is also the provenance check used by the validation
//! tests.

mod io;
pub mod shapes;

pub use io::{
    load_dataset, write_dataset, Counts, Dataset, DatasetManifest, RecordMeta, FORMAT_VERSION,
    MANIFEST_FILE, RECORDS_FILE,
};
pub use shapes::{generate_shape, random_shape_spec, ShapeKind, ShapeSpec, MIN_SHAPE_POINTS};

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{random_rotation, Correspondence, GeometryError, PointCloud, RotationRecord};
use crate::rng::{derive, stream};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("manifest error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid dataset config: {0}")]
    InvalidConfig(String),
    #[error("unsupported dataset version {found} (expected {})", FORMAT_VERSION)]
    UnsupportedVersion { found: u32 },
    #[error("checksum mismatch in record {record}")]
    Checksum { record: usize },
    #[error("truncated or malformed record {record}")]
    Truncated { record: usize },
    #[error("level must be 1..=5, got {0}")]
    InvalidLevel(u8),
}

pub type Result<T> = std::result::Result<T, DatasetError>;

/// The three in-context tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Reconstruction,
    Denoising,
    Registration,
}

pub const ALL_TASKS: [Task; 3] = [Task::Reconstruction, Task::Denoising, Task::Registration];
pub const ALL_LEVELS: [u8; 5] = [1, 2, 3, 4, 5];

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Reconstruction => "reconstruction",
            Task::Denoising => "denoising",
            Task::Registration => "registration",
        }
    }

    pub fn parse(s: &str) -> Option<Task> {
        match s {
            "reconstruction" => Some(Task::Reconstruction),
            "denoising" => Some(Task::Denoising),
            "registration" => Some(Task::Registration),
            _ => None,
        }
    }

    /// How input centers align with target centers for this task.
    pub fn correspondence(self) -> Correspondence {
        match self {
            Task::Reconstruction => Correspondence::NearestTarget,
            Task::Denoising | Task::Registration => Correspondence::Pointwise,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Task::Reconstruction => 0,
            Task::Denoising => 1,
            Task::Registration => 2,
        }
    }
}

/// One unit of training/inference: prompt pair, query pair, task metadata.
#[derive(Debug, Clone)]
pub struct InContextSample {
    pub task: Task,
    pub level: u8,
    pub record_index: u64,
    pub prompt_input: PointCloud,
    pub prompt_target: PointCloud,
    pub query_input: PointCloud,
    pub query_target: PointCloud,
}

/// Generation details of one pair, sufficient to rebuild its input from
/// the target.
#[derive(Debug, Clone)]
pub enum PairProvenance {
    Reconstruction { kept: Vec<u32> },
    Denoising { replaced: Vec<u32> },
    Registration { rotation: RotationRecord },
}

/// Full provenance of a record: the two shape specs plus both pairs.
#[derive(Debug, Clone)]
pub struct Provenance {
    pub record_index: u64,
    pub prompt_shape: ShapeSpec,
    pub query_shape: ShapeSpec,
    pub prompt_pair: PairProvenance,
    pub query_pair: PairProvenance,
}

fn check_level(level: u8) -> Result<()> {
    if (1..=5).contains(&level) {
        Ok(())
    } else {
        Err(DatasetError::InvalidLevel(level))
    }
}

/// Input size for a reconstruction level: n/2, n/4, ... n/32 (ceiling), the
/// {512,...,32} ladder at n = 1024.
pub fn reconstruction_input_size(n_points: usize, level: u8) -> usize {
    n_points.div_ceil(1usize << level).max(1)
}

/// Number of replaced points for a denoising level: ceil(n * level * 100/1024),
/// the {100,...,500} ladder at n = 1024.
pub fn denoising_replaced_count(n_points: usize, level: u8) -> usize {
    (n_points * level as usize * 100).div_ceil(1024).min(n_points)
}

/// Per-axis rotation bound in degrees for a registration level.
pub fn registration_max_angle(level: u8) -> f64 {
    20.0 * level as f64
}

/// Downsample to the level's size; the input is a subset of the target,
/// kept in ascending index order.
pub fn make_reconstruction_pair(
    c: &PointCloud,
    level: u8,
    rng: &mut impl Rng,
) -> Result<(PointCloud, Vec<u32>)> {
    check_level(level)?;
    let size = reconstruction_input_size(c.len(), level);
    let mut idx: Vec<u32> = (0..c.len() as u32).collect();
    idx.shuffle(rng);
    let mut kept: Vec<u32> = idx[..size].to_vec();
    kept.sort_unstable();
    let input = PointCloud::new(kept.iter().map(|&i| c.points()[i as usize]).collect())?;
    Ok((input, kept))
}

/// Replace the level's number of points (at random distinct indices) with
/// standard-normal noise in normalized coordinates; cardinality unchanged.
pub fn make_denoising_pair(
    c: &PointCloud,
    level: u8,
    rng: &mut impl Rng,
) -> Result<(PointCloud, Vec<u32>)> {
    check_level(level)?;
    let count = denoising_replaced_count(c.len(), level);
    let mut idx: Vec<u32> = (0..c.len() as u32).collect();
    idx.shuffle(rng);
    let mut replaced: Vec<u32> = idx[..count].to_vec();
    replaced.sort_unstable();
    let mut points = c.points().to_vec();
    for &i in &replaced {
        let p = &mut points[i as usize];
        for v in p.iter_mut() {
            *v = rng.sample::<f32, _>(StandardNormal);
        }
    }
    Ok((PointCloud::new(points)?, replaced))
}

/// Rotate the cloud by the level's angle bound; input point i corresponds
/// to target point i.
pub fn make_registration_pair(
    c: &PointCloud,
    level: u8,
    rng: &mut impl Rng,
) -> Result<(PointCloud, RotationRecord)> {
    check_level(level)?;
    let (input, record) = random_rotation(c, registration_max_angle(level), rng)?;
    Ok((input, record))
}

/// Dataset build configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub samples_per_cell: u64,
    pub n_points: usize,
    pub seed: u64,
    pub patch_m: usize,
    pub patch_k: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig { samples_per_cell: 8, n_points: 512, seed: 0, patch_m: 16, patch_k: 8 }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_points < MIN_SHAPE_POINTS {
            return Err(DatasetError::InvalidConfig(format!(
                "n_points {} below minimum {MIN_SHAPE_POINTS}",
                self.n_points
            )));
        }
        if self.patch_m == 0 || self.patch_k == 0 {
            return Err(DatasetError::InvalidConfig("patch_m and patch_k must be positive".into()));
        }
        Ok(())
    }
}

fn make_pair(
    clean: &PointCloud,
    task: Task,
    level: u8,
    pair_seed: u64,
) -> Result<(PointCloud, PairProvenance)> {
    let mut rng = stream(pair_seed, &[]);
    Ok(match task {
        Task::Reconstruction => {
            let (input, kept) = make_reconstruction_pair(clean, level, &mut rng)?;
            (input, PairProvenance::Reconstruction { kept })
        }
        Task::Denoising => {
            let (input, replaced) = make_denoising_pair(clean, level, &mut rng)?;
            (input, PairProvenance::Denoising { replaced })
        }
        Task::Registration => {
            let (input, rotation) = make_registration_pair(clean, level, &mut rng)?;
            (input, PairProvenance::Registration { rotation })
        }
    })
}

/// Regenerate record `index` of a dataset from nothing but the seed; the
/// prompt and query derive from two independent shape instances of the
/// same task and level.
pub fn generate_record(
    seed: u64,
    index: u64,
    task: Task,
    level: u8,
    n_points: usize,
) -> Result<(InContextSample, Provenance)> {
    let key = derive(seed, &[index]);
    let mut shape_rng = stream(key, &[0]);
    let prompt_shape = random_shape_spec(&mut shape_rng, n_points, derive(key, &[10]));
    let query_shape = random_shape_spec(&mut shape_rng, n_points, derive(key, &[11]));
    let prompt_clean = generate_shape(&prompt_shape)?;
    let query_clean = generate_shape(&query_shape)?;
    let (prompt_input, prompt_pair) = make_pair(&prompt_clean, task, level, derive(key, &[20]))?;
    let (query_input, query_pair) = make_pair(&query_clean, task, level, derive(key, &[21]))?;
    Ok((
        InContextSample {
            task,
            level,
            record_index: index,
            prompt_input,
            prompt_target: prompt_clean,
            query_input,
            query_target: query_clean,
        },
        Provenance { record_index: index, prompt_shape, query_shape, prompt_pair, query_pair },
    ))
}

/// Deterministic record layout: task-major, then level, then sample.
pub fn record_plan(cfg: &DatasetConfig) -> Vec<(Task, u8)> {
    let mut plan = Vec::new();
    for task in ALL_TASKS {
        for level in ALL_LEVELS {
            for _ in 0..cfg.samples_per_cell {
                plan.push((task, level));
            }
        }
    }
    plan
}

/// Build and write a dataset; byte-identical for identical configs.
pub fn build_dataset(cfg: &DatasetConfig, dir: &Path) -> Result<DatasetManifest> {
    cfg.validate()?;
    let plan = record_plan(cfg);
    let mut data = Vec::new();
    let mut records = Vec::with_capacity(plan.len());
    for (index, &(task, level)) in plan.iter().enumerate() {
        let (sample, _) = generate_record(cfg.seed, index as u64, task, level, cfg.n_points)?;
        let bytes = io::encode_record(&sample);
        records.push(RecordMeta {
            offset: data.len() as u64,
            len: bytes.len() as u64,
            crc32: crc32fast::hash(&bytes),
            task,
            level,
        });
        data.extend_from_slice(&bytes);
    }
    let manifest = DatasetManifest {
        version: FORMAT_VERSION,
        n_points: cfg.n_points,
        tasks: ALL_TASKS.to_vec(),
        levels: ALL_LEVELS.to_vec(),
        counts: Counts { per_cell: cfg.samples_per_cell, total: plan.len() as u64 },
        seed: cfg.seed,
        patch_m: cfg.patch_m,
        patch_k: cfg.patch_k,
        records,
    };
    io::write_dataset(dir, &manifest, &data)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests;
