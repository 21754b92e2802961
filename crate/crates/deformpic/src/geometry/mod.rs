//! Deterministic geometric kernels: unit-sphere normalization, farthest
//! point sampling, KNN patch grouping, joint sampling, rigid rotations, and
//! the point-set metrics (Chamfer-L2, exact EMD, F-score).
//!
//! Everything is a pure function of its inputs plus an explicit RNG, so
//! calls may run concurrently. Distances are accumulated in f64 regardless
//! of the f32 storage type.

pub mod assignment;

use rand::Rng;
use thiserror::Error;

use crate::tensor::kernels::chamfer_l2_raw;

pub type Point = [f32; 3];

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("point cloud must contain at least one finite point")]
    EmptyCloud,
    #[error("non-finite coordinates in point cloud")]
    NonFinite,
    #[error("sample count {m} exceeds cloud size {n}")]
    SampleTooLarge { m: usize, n: usize },
    #[error("k = {k} exceeds cloud size {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("emd requires equal sizes, got {a} vs {b}")]
    EmdSizeMismatch { a: usize, b: usize },
    #[error("emd exact solver bound exceeded: {n} > {bound}")]
    EmdTooLarge { n: usize, bound: usize },
    #[error("pointwise correspondence needs equal cardinalities, got {input} vs {target}")]
    CorrespondenceMismatch { input: usize, target: usize },
    #[error("invalid argument: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, GeometryError>;

/// An ordered set of 3D points.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(GeometryError::EmptyCloud);
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        Ok(PointCloud { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn as_f64(&self) -> Vec<[f64; 3]> {
        self.points.iter().map(|p| [p[0] as f64, p[1] as f64, p[2] as f64]).collect()
    }
}

/// Fixed-size local patches around sampled centers.
///
/// `patches` stores `m * k` absolute coordinates; row `j` of a patch holds
/// the j-th nearest source point of its center. Center indices point into
/// the source cloud and are distinct for FPS-derived centers.
#[derive(Debug, Clone)]
pub struct PatchedCloud {
    pub centers: Vec<Point>,
    pub center_indices: Vec<u32>,
    pub patches: Vec<Point>,
    pub k: usize,
}

impl PatchedCloud {
    pub fn num_patches(&self) -> usize {
        self.centers.len()
    }

    pub fn patch(&self, i: usize) -> &[Point] {
        &self.patches[i * self.k..(i + 1) * self.k]
    }
}

/// Translate the centroid to the origin and scale the furthest point to
/// distance 1. A degenerate all-equal cloud maps to all zeros.
pub fn normalize_unit_sphere(c: &PointCloud) -> PointCloud {
    let n = c.len() as f64;
    let mut centroid = [0.0f64; 3];
    for p in c.points() {
        for a in 0..3 {
            centroid[a] += p[a] as f64;
        }
    }
    for a in centroid.iter_mut() {
        *a /= n;
    }
    let mut max_norm = 0.0f64;
    let shifted: Vec<[f64; 3]> = c
        .points()
        .iter()
        .map(|p| {
            let q = [p[0] as f64 - centroid[0], p[1] as f64 - centroid[1], p[2] as f64 - centroid[2]];
            let norm = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2]).sqrt();
            if norm > max_norm {
                max_norm = norm;
            }
            q
        })
        .collect();
    if max_norm == 0.0 {
        return PointCloud { points: vec![[0.0; 3]; c.len()] };
    }
    let inv = 1.0 / max_norm;
    PointCloud {
        points: shifted
            .iter()
            .map(|q| [(q[0] * inv) as f32, (q[1] * inv) as f32, (q[2] * inv) as f32])
            .collect(),
    }
}

#[inline]
fn dist2(a: &Point, b: &Point) -> f64 {
    let dx = a[0] as f64 - b[0] as f64;
    let dy = a[1] as f64 - b[1] as f64;
    let dz = a[2] as f64 - b[2] as f64;
    dx * dx + dy * dy + dz * dz
}

/// Greedy max-min farthest point sampling. The first pick is `seed_index`;
/// each later pick maximizes the distance to the nearest selected point,
/// ties resolved to the lowest index.
pub fn farthest_point_sampling(c: &PointCloud, m: usize, seed_index: usize) -> Result<Vec<u32>> {
    let n = c.len();
    if m == 0 || m > n {
        return Err(GeometryError::SampleTooLarge { m, n });
    }
    if seed_index >= n {
        return Err(GeometryError::Invalid(format!("seed index {seed_index} out of range {n}")));
    }
    let pts = c.points();
    let mut picked = Vec::with_capacity(m);
    picked.push(seed_index as u32);
    let mut min_d: Vec<f64> = pts.iter().map(|p| dist2(p, &pts[seed_index])).collect();
    for _ in 1..m {
        let mut best = f64::NEG_INFINITY;
        let mut arg = 0usize;
        for (i, &d) in min_d.iter().enumerate() {
            if d > best {
                best = d;
                arg = i;
            }
        }
        picked.push(arg as u32);
        for (i, d) in min_d.iter_mut().enumerate() {
            let nd = dist2(&pts[i], &pts[arg]);
            if nd < *d {
                *d = nd;
            }
        }
    }
    Ok(picked)
}

/// Group the k nearest source points around each given center index.
/// Patch rows are sorted ascending by distance, ties to the lowest index.
pub fn knn_group(c: &PointCloud, center_indices: &[u32], k: usize) -> Result<PatchedCloud> {
    let n = c.len();
    if k == 0 || k > n {
        return Err(GeometryError::KTooLarge { k, n });
    }
    let pts = c.points();
    let mut centers = Vec::with_capacity(center_indices.len());
    let mut patches = Vec::with_capacity(center_indices.len() * k);
    let mut order: Vec<(f64, u32)> = Vec::with_capacity(n);
    for &ci in center_indices {
        let center = pts
            .get(ci as usize)
            .copied()
            .ok_or_else(|| GeometryError::Invalid(format!("center index {ci} out of range {n}")))?;
        order.clear();
        order.extend(pts.iter().enumerate().map(|(i, p)| (dist2(p, &center), i as u32)));
        order.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        centers.push(center);
        patches.extend(order[..k].iter().map(|&(_, i)| pts[i as usize]));
    }
    Ok(PatchedCloud { centers, center_indices: center_indices.to_vec(), patches, k })
}

/// How input centers map onto target centers within a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Correspondence {
    /// Input point i corresponds to target point i (denoising, registration).
    Pointwise,
    /// Each input center maps to its nearest target point (reconstruction).
    NearestTarget,
}

/// The four patched clouds of one in-context sample.
#[derive(Debug, Clone)]
pub struct JointPatches {
    pub prompt_input: PatchedCloud,
    pub prompt_target: PatchedCloud,
    pub query_input: PatchedCloud,
    pub query_target: PatchedCloud,
}

fn target_centers(
    input: &PointCloud,
    target: &PointCloud,
    input_centers: &[u32],
    corr: Correspondence,
) -> Result<Vec<u32>> {
    match corr {
        Correspondence::Pointwise => {
            if input.len() != target.len() {
                return Err(GeometryError::CorrespondenceMismatch {
                    input: input.len(),
                    target: target.len(),
                });
            }
            Ok(input_centers.to_vec())
        }
        Correspondence::NearestTarget => {
            let tp = target.points();
            Ok(input_centers
                .iter()
                .map(|&ci| {
                    let c = &input.points()[ci as usize];
                    let mut best = f64::INFINITY;
                    let mut arg = 0u32;
                    for (j, t) in tp.iter().enumerate() {
                        let d = dist2(c, t);
                        if d < best {
                            best = d;
                            arg = j as u32;
                        }
                    }
                    arg
                })
                .collect())
        }
    }
}

/// Joint sampling: FPS runs once on the prompt input and once on the query
/// input; each target reuses its input's centers through the pair's
/// correspondence so that input and target patches line up.
#[allow(clippy::too_many_arguments)]
pub fn joint_sample(
    prompt_input: &PointCloud,
    prompt_target: &PointCloud,
    query_input: &PointCloud,
    query_target: &PointCloud,
    corr: Correspondence,
    m: usize,
    k: usize,
    seed_index: usize,
) -> Result<JointPatches> {
    let ci_prompt = farthest_point_sampling(prompt_input, m, seed_index)?;
    let ci_query = farthest_point_sampling(query_input, m, seed_index)?;
    let ct_prompt = target_centers(prompt_input, prompt_target, &ci_prompt, corr)?;
    let ct_query = target_centers(query_input, query_target, &ci_query, corr)?;
    Ok(JointPatches {
        prompt_input: knn_group(prompt_input, &ci_prompt, k)?,
        prompt_target: knn_group(prompt_target, &ct_prompt, k)?,
        query_input: knn_group(query_input, &ci_query, k)?,
        query_target: knn_group(query_target, &ct_query, k)?,
    })
}

/// Chamfer-L2: mean squared nearest-neighbor distance in both directions.
/// Symmetric in its arguments, zero iff the point sets coincide.
pub fn chamfer_l2(a: &PointCloud, b: &PointCloud) -> f64 {
    let (d, _, _) = chamfer_l2_raw(&a.as_f64(), &b.as_f64());
    d
}

/// Exact solver bound for [`emd`].
pub const EMD_MAX_POINTS: usize = 512;

/// Earth mover's distance: minimum over bijections of the mean Euclidean
/// transport cost, solved exactly by the Hungarian algorithm.
pub fn emd(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.len() != b.len() {
        return Err(GeometryError::EmdSizeMismatch { a: a.len(), b: b.len() });
    }
    let n = a.len();
    if n > EMD_MAX_POINTS {
        return Err(GeometryError::EmdTooLarge { n, bound: EMD_MAX_POINTS });
    }
    let af = a.as_f64();
    let bf = b.as_f64();
    let mut cost = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..n {
            let dx = af[i][0] - bf[j][0];
            let dy = af[i][1] - bf[j][1];
            let dz = af[i][2] - bf[j][2];
            cost[i * n + j] = (dx * dx + dy * dy + dz * dz).sqrt();
        }
    }
    Ok(assignment::solve(&cost, n).cost / n as f64)
}

/// Precision / recall / F-score at threshold `tau` (strict Euclidean
/// comparison). F is 0 when both precision and recall are 0.
pub fn fscore(pred: &PointCloud, gt: &PointCloud, tau: f64) -> (f64, f64, f64) {
    let pf = pred.as_f64();
    let gf = gt.as_f64();
    let tau2 = tau * tau;
    let frac_within = |from: &[[f64; 3]], to: &[[f64; 3]]| -> f64 {
        let hits = from
            .iter()
            .filter(|p| {
                to.iter().any(|g| {
                    let dx = p[0] - g[0];
                    let dy = p[1] - g[1];
                    let dz = p[2] - g[2];
                    dx * dx + dy * dy + dz * dz < tau2
                })
            })
            .count();
        hits as f64 / from.len() as f64
    };
    let p = frac_within(&pf, &gf);
    let r = frac_within(&gf, &pf);
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

/// Provenance of a random rigid rotation.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RotationRecord {
    /// Per-axis angles in degrees, applied in X then Y then Z order.
    pub angles_deg: [f64; 3],
}

impl RotationRecord {
    /// The combined rotation matrix R = Rz * Ry * Rx.
    pub fn matrix(&self) -> [[f64; 3]; 3] {
        let [ax, ay, az] = self.angles_deg.map(f64::to_radians);
        let (sx, cx) = ax.sin_cos();
        let (sy, cy) = ay.sin_cos();
        let (sz, cz) = az.sin_cos();
        let rx = [[1.0, 0.0, 0.0], [0.0, cx, -sx], [0.0, sx, cx]];
        let ry = [[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]];
        let rz = [[cz, -sz, 0.0], [sz, cz, 0.0], [0.0, 0.0, 1.0]];
        mat3_mul(&rz, &mat3_mul(&ry, &rx))
    }

    pub fn apply(&self, c: &PointCloud) -> PointCloud {
        let r = self.matrix();
        let points = c
            .points()
            .iter()
            .map(|p| {
                let q = [p[0] as f64, p[1] as f64, p[2] as f64];
                [
                    (r[0][0] * q[0] + r[0][1] * q[1] + r[0][2] * q[2]) as f32,
                    (r[1][0] * q[0] + r[1][1] * q[1] + r[1][2] * q[2]) as f32,
                    (r[2][0] * q[0] + r[2][1] * q[1] + r[2][2] * q[2]) as f32,
                ]
            })
            .collect();
        PointCloud { points }
    }
}

fn mat3_mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for (bk, bv) in b.iter().enumerate() {
                out[i][j] += a[i][bk] * bv[j];
            }
        }
    }
    out
}

/// Rotate about the origin with independent per-axis angles drawn uniformly
/// from [-max_angle_deg, +max_angle_deg], composed in fixed X -> Y -> Z order.
pub fn random_rotation(
    c: &PointCloud,
    max_angle_deg: f64,
    rng: &mut impl Rng,
) -> Result<(PointCloud, RotationRecord)> {
    if !(max_angle_deg > 0.0 && max_angle_deg <= 180.0) {
        return Err(GeometryError::Invalid(format!("max angle {max_angle_deg} outside (0, 180]")));
    }
    let record = RotationRecord {
        angles_deg: [
            rng.random_range(-max_angle_deg..=max_angle_deg),
            rng.random_range(-max_angle_deg..=max_angle_deg),
            rng.random_range(-max_angle_deg..=max_angle_deg),
        ],
    };
    Ok((record.apply(c), record))
}

#[cfg(test)]
mod tests;
