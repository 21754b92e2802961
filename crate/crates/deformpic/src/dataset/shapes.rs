//! Procedural shape families sampled uniformly by surface area.
//!
//! Origin-symmetric families (sphere, cube, torus, cylinder) are sampled in
//! antithetic pairs so the raw centroid is exactly zero; unit-sphere
//! normalization then leaves points like sphere samples at radius exactly 1
//! instead of smearing them by the empirical centroid.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{normalize_unit_sphere, PointCloud};

use super::{DatasetError, Result};

pub const MIN_SHAPE_POINTS: usize = 32;

/// Shape family with its dimensionless parameters.
///
/// Documented ranges: every length parameter lies in (0, 10]; a torus
/// additionally requires `minor < major`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShapeKind {
    Sphere { radius: f64 },
    Cube { half_extents: [f64; 3] },
    Torus { major: f64, minor: f64 },
    Cylinder { radius: f64, height: f64 },
    Cone { radius: f64, height: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub kind: ShapeKind,
    pub n_points: usize,
    pub seed: u64,
}

fn in_range(v: f64) -> bool {
    v > 0.0 && v <= 10.0
}

impl ShapeSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_points < MIN_SHAPE_POINTS {
            return Err(DatasetError::InvalidConfig(format!(
                "n_points {} below minimum {MIN_SHAPE_POINTS}",
                self.n_points
            )));
        }
        let ok = match self.kind {
            ShapeKind::Sphere { radius } => in_range(radius),
            ShapeKind::Cube { half_extents } => half_extents.iter().all(|&h| in_range(h)),
            ShapeKind::Torus { major, minor } => in_range(major) && in_range(minor) && minor < major,
            ShapeKind::Cylinder { radius, height } | ShapeKind::Cone { radius, height } => {
                in_range(radius) && in_range(height)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(DatasetError::InvalidConfig(format!("shape parameters out of range: {:?}", self.kind)))
        }
    }
}

/// Draw a random shape spec from the documented parameter ranges.
pub fn random_shape_spec(rng: &mut impl Rng, n_points: usize, seed: u64) -> ShapeSpec {
    let kind = match rng.random_range(0..5u32) {
        0 => ShapeKind::Sphere { radius: rng.random_range(0.5..=1.0) },
        1 => ShapeKind::Cube {
            half_extents: [
                rng.random_range(0.3..=1.0),
                rng.random_range(0.3..=1.0),
                rng.random_range(0.3..=1.0),
            ],
        },
        2 => {
            let major = rng.random_range(0.6..=1.0);
            ShapeKind::Torus { major, minor: rng.random_range(0.15..=0.45) * major }
        }
        3 => ShapeKind::Cylinder {
            radius: rng.random_range(0.3..=1.0),
            height: rng.random_range(0.6..=2.0),
        },
        _ => ShapeKind::Cone {
            radius: rng.random_range(0.3..=1.0),
            height: rng.random_range(0.6..=2.0),
        },
    };
    ShapeSpec { kind, n_points, seed }
}

/// Sample `n_points` from the spec's surface, uniform by area, then
/// normalize to the unit sphere. Deterministic given the spec.
pub fn generate_shape(spec: &ShapeSpec) -> Result<PointCloud> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n_points;
    let pts: Vec<[f32; 3]> = match spec.kind {
        ShapeKind::Sphere { radius } => sample_antithetic(n, || sphere_point(&mut rng, radius)),
        ShapeKind::Cube { half_extents } => sample_antithetic(n, || cube_point(&mut rng, half_extents)),
        ShapeKind::Torus { major, minor } => sample_antithetic(n, || torus_point(&mut rng, major, minor)),
        ShapeKind::Cylinder { radius, height } => {
            sample_antithetic(n, || cylinder_point(&mut rng, radius, height))
        }
        ShapeKind::Cone { radius, height } => (0..n).map(|_| cone_point(&mut rng, radius, height)).collect(),
    };
    let cloud = PointCloud::new(pts)?;
    Ok(normalize_unit_sphere(&cloud))
}

/// Pairs (p, -p), plus a zero-sum triple when the count is odd, so the sum
/// is exactly zero for origin-symmetric surfaces.
fn sample_antithetic(n: usize, mut draw: impl FnMut() -> [f64; 3]) -> Vec<[f32; 3]> {
    let mut out = Vec::with_capacity(n + 1);
    if n % 2 == 1 {
        // three copies of one draw rotated by 120/240 degrees about z sum to
        // zero analytically; residual is ~1 ulp and vanishes under the
        // later f64 centroid subtraction
        let p = draw();
        let (s, c) = (3.0f64.sqrt() / 2.0, -0.5f64);
        out.push(to32(p));
        out.push(to32([c * p[0] - s * p[1], s * p[0] + c * p[1], p[2]]));
        out.push(to32([c * p[0] + s * p[1], -s * p[0] + c * p[1], p[2]]));
    }
    while out.len() < n {
        let p = draw();
        out.push(to32(p));
        out.push(to32([-p[0], -p[1], -p[2]]));
    }
    out.truncate(n);
    out
}

fn to32(p: [f64; 3]) -> [f32; 3] {
    [p[0] as f32, p[1] as f32, p[2] as f32]
}

fn sphere_point(rng: &mut impl Rng, radius: f64) -> [f64; 3] {
    let z = rng.random_range(-1.0f64..=1.0);
    let phi = rng.random_range(0.0..std::f64::consts::TAU);
    let s = (1.0 - z * z).max(0.0).sqrt();
    [radius * s * phi.cos(), radius * s * phi.sin(), radius * z]
}

fn cube_point(rng: &mut impl Rng, h: [f64; 3]) -> [f64; 3] {
    // face-pair areas; antithetic mirroring covers the opposite face
    let areas = [h[1] * h[2], h[0] * h[2], h[0] * h[1]];
    let total: f64 = areas.iter().sum();
    let mut pick = rng.random_range(0.0..total);
    let mut axis = 2;
    for (i, &a) in areas.iter().enumerate() {
        if pick < a {
            axis = i;
            break;
        }
        pick -= a;
    }
    let u = rng.random_range(-1.0f64..=1.0);
    let v = rng.random_range(-1.0f64..=1.0);
    let mut p = [0.0f64; 3];
    p[axis] = h[axis];
    p[(axis + 1) % 3] = u * h[(axis + 1) % 3];
    p[(axis + 2) % 3] = v * h[(axis + 2) % 3];
    p
}

fn torus_point(rng: &mut impl Rng, major: f64, minor: f64) -> [f64; 3] {
    let theta = rng.random_range(0.0..std::f64::consts::TAU);
    // density over the tube angle is proportional to (R + r cos phi)
    let phi = loop {
        let cand = rng.random_range(0.0..std::f64::consts::TAU);
        let accept = (major + minor * cand.cos()) / (major + minor);
        if rng.random_range(0.0..1.0f64) < accept {
            break cand;
        }
    };
    let ring = major + minor * phi.cos();
    [ring * theta.cos(), ring * theta.sin(), minor * phi.sin()]
}

fn cylinder_point(rng: &mut impl Rng, radius: f64, height: f64) -> [f64; 3] {
    let side = std::f64::consts::TAU * radius * height;
    let caps = 2.0 * std::f64::consts::PI * radius * radius;
    let theta = rng.random_range(0.0..std::f64::consts::TAU);
    if rng.random_range(0.0..side + caps) < side {
        let z = rng.random_range(-height / 2.0..=height / 2.0);
        [radius * theta.cos(), radius * theta.sin(), z]
    } else {
        let rho = radius * rng.random_range(0.0f64..=1.0).sqrt();
        let z = if rng.random_range(0.0..1.0f64) < 0.5 { height / 2.0 } else { -height / 2.0 };
        [rho * theta.cos(), rho * theta.sin(), z]
    }
}

fn cone_point(rng: &mut impl Rng, radius: f64, height: f64) -> [f32; 3] {
    let slant = (radius * radius + height * height).sqrt();
    let lateral = std::f64::consts::PI * radius * slant;
    let base = std::f64::consts::PI * radius * radius;
    let theta = rng.random_range(0.0..std::f64::consts::TAU);
    let p = if rng.random_range(0.0..lateral + base) < lateral {
        let t = rng.random_range(0.0f64..=1.0).sqrt();
        let rho = radius * t;
        let z = height * (1.0 - t);
        [rho * theta.cos(), rho * theta.sin(), z]
    } else {
        let rho = radius * rng.random_range(0.0f64..=1.0).sqrt();
        [rho * theta.cos(), rho * theta.sin(), 0.0]
    };
    to32(p)
}
