//! Deformation-based point-cloud in-context learning at desk scale.
//!
//! A query point cloud is deformed toward a target shape under the guidance
//! of a prompt input/target pair: a Deformation Extraction Network (DEN)
//! distills the prompt pair into a task token, and a Deformation Transfer
//! Network (DTN) with AdaLN-Zero conditioning applies the extracted
//! transformation to the query. Everything runs on a small self-contained
//! reverse-mode tensor engine; no external ML framework.
//!
//! Crate layout mirrors the pipeline:
//! - [`tensor`]: dense tensors with reverse-mode autodiff
//! - [`geometry`]: FPS, KNN grouping, Chamfer-L2, exact EMD, F-score
//! - [`dataset`]: procedural shapes and in-context task construction
//! - [`model`]: DEN/DTN networks, MPM baseline, ablation variants
//! - [`train`]: AdamW, warmup+cosine schedule, deterministic training loop
//! - [`eval`]: benchmark reports, comparisons, task-feature analysis

pub mod cli;
pub mod dataset;
pub mod eval;
pub mod geometry;
pub mod model;
pub mod rng;
pub mod tensor;
pub mod train;
