use proptest::prelude::*;
use rand::Rng;

use super::*;
use crate::rng::stream;

fn cloud(points: &[[f32; 3]]) -> PointCloud {
    PointCloud::new(points.to_vec()).unwrap()
}

pub(crate) fn random_cloud(n: usize, seed: u64) -> PointCloud {
    let mut rng = stream(seed, &[0xc10d]);
    PointCloud::new(
        (0..n)
            .map(|_| {
                [
                    rng.random_range(-1.0f32..1.0),
                    rng.random_range(-1.0f32..1.0),
                    rng.random_range(-1.0f32..1.0),
                ]
            })
            .collect(),
    )
    .unwrap()
}

#[test]
fn normalize_degenerate_cloud_is_zeros() {
    let c = cloud(&[[1.0, 1.0, 1.0]; 5]);
    let n = normalize_unit_sphere(&c);
    assert!(n.points().iter().flatten().all(|&v| v == 0.0));
}

#[test]
fn normalize_hand_case() {
    let c = cloud(&[[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]]);
    let n = normalize_unit_sphere(&c);
    assert_eq!(n.points(), &[[-1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
}

#[test]
fn normalize_statistics_on_random_cloud() {
    let c = random_cloud(257, 3);
    let n = normalize_unit_sphere(&c);
    let mut centroid = [0.0f64; 3];
    let mut max_norm = 0.0f64;
    for p in n.points() {
        let mut norm = 0.0;
        for a in 0..3 {
            centroid[a] += p[a] as f64;
            norm += (p[a] as f64).powi(2);
        }
        max_norm = max_norm.max(norm.sqrt());
    }
    for a in centroid {
        assert!((a / 257.0).abs() < 1e-6);
    }
    assert!((max_norm - 1.0).abs() < 1e-6);
}

fn collinear() -> PointCloud {
    cloud(&[[0.0; 3], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0], [3.0, 0.0, 0.0]])
}

#[test]
fn fps_collinear_endpoints() {
    assert_eq!(farthest_point_sampling(&collinear(), 2, 0).unwrap(), vec![0, 3]);
}

#[test]
fn fps_collinear_three() {
    // oracle-derived: after {0,3} both 1 and 2 sit at min-distance 1; lowest index wins
    assert_eq!(farthest_point_sampling(&collinear(), 3, 0).unwrap(), vec![0, 3, 1]);
}

#[test]
fn fps_full_is_permutation() {
    let c = random_cloud(33, 7);
    let mut idx = farthest_point_sampling(&c, 33, 0).unwrap();
    idx.sort_unstable();
    assert_eq!(idx, (0..33u32).collect::<Vec<_>>());
}

#[test]
fn fps_rejects_oversample() {
    assert!(matches!(
        farthest_point_sampling(&collinear(), 5, 0),
        Err(GeometryError::SampleTooLarge { .. })
    ));
}

/// Literal restatement of the greedy max-min rule, used as the oracle.
pub(crate) fn fps_oracle(c: &PointCloud, m: usize, seed_index: usize) -> Vec<u32> {
    let pts = c.points();
    let d2 = |a: usize, b: usize| -> f64 {
        (0..3).map(|i| (pts[a][i] as f64 - pts[b][i] as f64).powi(2)).sum()
    };
    let mut picked = vec![seed_index as u32];
    while picked.len() < m {
        let mut best = f64::NEG_INFINITY;
        let mut arg = 0usize;
        for i in 0..pts.len() {
            let d = picked.iter().map(|&p| d2(i, p as usize)).fold(f64::INFINITY, f64::min);
            if d > best {
                best = d;
                arg = i;
            }
        }
        picked.push(arg as u32);
    }
    picked
}

#[test]
fn fps_matches_oracle_on_random_instances() {
    for s in 0..25u64 {
        let c = random_cloud(40, 100 + s);
        let m = 1 + (s as usize % 13);
        assert_eq!(
            farthest_point_sampling(&c, m, (s as usize) % 40).unwrap(),
            fps_oracle(&c, m, (s as usize) % 40),
            "seed {s}"
        );
    }
}

#[test]
fn knn_coincident_center() {
    let c = random_cloud(16, 9);
    let g = knn_group(&c, &[5], 1).unwrap();
    assert_eq!(g.patch(0), &[c.points()[5]]);
}

#[test]
fn knn_hand_case() {
    let c = cloud(&[[0.0; 3], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0], [10.0, 0.0, 0.0]]);
    let g = knn_group(&c, &[0], 2).unwrap();
    assert_eq!(g.patch(0), &[[0.0; 3], [1.0, 0.0, 0.0]]);
}

/// Exhaustive nearest-neighbor oracle with the same distance/tie ordering.
pub(crate) fn knn_oracle(c: &PointCloud, center: u32, k: usize) -> Vec<Point> {
    let pts = c.points();
    let cp = pts[center as usize];
    let mut all: Vec<(f64, u32)> = pts
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let d: f64 = (0..3).map(|a| (p[a] as f64 - cp[a] as f64).powi(2)).sum();
            (d, i as u32)
        })
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    all[..k].iter().map(|&(_, i)| pts[i as usize]).collect()
}

#[test]
fn knn_matches_oracle() {
    let c = random_cloud(64, 11);
    let centers: Vec<u32> = vec![0, 7, 13, 21, 30, 44, 55, 63];
    let g = knn_group(&c, &centers, 4).unwrap();
    for (i, &ci) in centers.iter().enumerate() {
        assert_eq!(g.patch(i), knn_oracle(&c, ci, 4).as_slice());
    }
}

#[test]
fn knn_rejects_large_k() {
    let c = random_cloud(4, 12);
    assert!(matches!(knn_group(&c, &[0], 5), Err(GeometryError::KTooLarge { .. })));
}

#[test]
fn joint_sample_registration_centers_correspond() {
    let target = random_cloud(64, 13);
    let rec = RotationRecord { angles_deg: [15.0, -30.0, 45.0] };
    let input = rec.apply(&target);
    let js = joint_sample(&input, &target, &input, &target, Correspondence::Pointwise, 8, 4, 0).unwrap();
    // target centers are the un-rotated counterparts of the input centers
    assert_eq!(js.prompt_input.center_indices, js.prompt_target.center_indices);
    let r = rec.matrix();
    for (ci, ct) in js.prompt_input.centers.iter().zip(js.prompt_target.centers.iter()) {
        for a in 0..3 {
            let rotated: f64 = (0..3).map(|b| r[a][b] * ct[b] as f64).sum();
            assert!((rotated - ci[a] as f64).abs() < 1e-5);
        }
    }
}

#[test]
fn joint_sample_zero_noise_denoising_is_identity() {
    let c = random_cloud(48, 14);
    let js = joint_sample(&c, &c, &c, &c, Correspondence::Pointwise, 6, 4, 0).unwrap();
    assert_eq!(js.prompt_input.patches, js.prompt_target.patches);
    assert_eq!(js.query_input.patches, js.query_target.patches);
}

#[test]
fn joint_sample_reconstruction_targets_are_nearest() {
    let target = random_cloud(64, 15);
    // input = subset (every other point), as in the reconstruction task
    let input = PointCloud::new(target.points().iter().step_by(2).copied().collect()).unwrap();
    let js = joint_sample(&input, &target, &input, &target, Correspondence::NearestTarget, 8, 4, 0).unwrap();
    let tp = target.points();
    for (ci, &ti) in js.prompt_input.centers.iter().zip(js.prompt_target.center_indices.iter()) {
        // chosen target center must be within the target cloud and be the
        // nearest target point to its input center
        let chosen = tp[ti as usize];
        let d_chosen: f64 = (0..3).map(|a| (chosen[a] as f64 - ci[a] as f64).powi(2)).sum();
        for t in tp {
            let d: f64 = (0..3).map(|a| (t[a] as f64 - ci[a] as f64).powi(2)).sum();
            assert!(d_chosen <= d + 1e-12);
        }
        assert_eq!(d_chosen, 0.0, "input is a subset, so the nearest target point coincides");
    }
}

#[test]
fn joint_sample_pointwise_rejects_size_mismatch() {
    let a = random_cloud(32, 16);
    let b = random_cloud(16, 17);
    assert!(matches!(
        joint_sample(&a, &b, &a, &b, Correspondence::Pointwise, 4, 4, 0),
        Err(GeometryError::CorrespondenceMismatch { .. })
    ));
}

#[test]
fn chamfer_identical_clouds_is_zero() {
    let c = random_cloud(40, 18);
    assert_eq!(chamfer_l2(&c, &c), 0.0);
}

#[test]
fn chamfer_hand_cases() {
    let a = cloud(&[[0.0; 3]]);
    let b = cloud(&[[1.0, 0.0, 0.0]]);
    assert!((chamfer_l2(&a, &b) - 2.0).abs() < 1e-9);
    let a2 = cloud(&[[0.0; 3], [2.0, 0.0, 0.0]]);
    assert!((chamfer_l2(&a2, &b) - 2.0).abs() < 1e-9);
}

#[test]
fn chamfer_symmetric_exactly() {
    let a = random_cloud(33, 19);
    let b = random_cloud(21, 20);
    assert_eq!(chamfer_l2(&a, &b).to_bits(), chamfer_l2(&b, &a).to_bits());
}

#[test]
fn emd_identical_is_zero_and_duplicates() {
    let c = random_cloud(12, 21);
    assert_eq!(emd(&c, &c).unwrap(), 0.0);
    let a = cloud(&[[0.0; 3], [0.0; 3]]);
    let b = cloud(&[[1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
    assert!((emd(&a, &b).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn emd_rejects_mismatch_and_oversize() {
    let a = random_cloud(4, 22);
    let b = random_cloud(5, 23);
    assert!(matches!(emd(&a, &b), Err(GeometryError::EmdSizeMismatch { .. })));
    let big = random_cloud(EMD_MAX_POINTS + 1, 24);
    assert!(matches!(emd(&big, &big), Err(GeometryError::EmdTooLarge { .. })));
}

/// Brute-force EMD by enumerating every bijection (sizes <= ~8).
pub(crate) fn emd_bruteforce(a: &PointCloud, b: &PointCloud) -> f64 {
    let af = a.as_f64();
    let bf = b.as_f64();
    let n = af.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    // Heap's algorithm
    fn heaps(k: usize, perm: &mut Vec<usize>, visit: &mut impl FnMut(&[usize])) {
        if k <= 1 {
            visit(perm);
            return;
        }
        for i in 0..k {
            heaps(k - 1, perm, visit);
            if k % 2 == 0 {
                perm.swap(i, k - 1);
            } else {
                perm.swap(0, k - 1);
            }
        }
    }
    heaps(n, &mut perm, &mut |p: &[usize]| {
        let cost: f64 = p
            .iter()
            .enumerate()
            .map(|(i, &j)| {
                ((af[i][0] - bf[j][0]).powi(2) + (af[i][1] - bf[j][1]).powi(2) + (af[i][2] - bf[j][2]).powi(2))
                    .sqrt()
            })
            .sum();
        if cost < best {
            best = cost;
        }
    });
    best / n as f64
}

#[test]
fn emd_matches_factorial_oracle_size6() {
    for s in 0..10u64 {
        let a = random_cloud(6, 300 + s);
        let b = random_cloud(6, 400 + s);
        let exact = emd(&a, &b).unwrap();
        let brute = emd_bruteforce(&a, &b);
        assert!((exact - brute).abs() < 1e-9, "seed {s}: {exact} vs {brute}");
    }
}

#[test]
fn fscore_cases() {
    let c = random_cloud(30, 25);
    assert_eq!(fscore(&c, &c, 0.01), (1.0, 1.0, 1.0));

    let far_a = cloud(&[[0.0; 3]]);
    let far_b = cloud(&[[10.0, 0.0, 0.0]]);
    assert_eq!(fscore(&far_a, &far_b, 0.1), (0.0, 0.0, 0.0));

    let pred = cloud(&[[0.0; 3], [5.0, 0.0, 0.0]]);
    let gt = cloud(&[[0.0; 3]]);
    let (p, r, f) = fscore(&pred, &gt, 0.1);
    assert_eq!(p, 0.5);
    assert_eq!(r, 1.0);
    assert!((f - 2.0 / 3.0).abs() < 1e-12);
}

#[test]
fn rotation_zero_angles_is_identity() {
    let c = random_cloud(10, 26);
    let rec = RotationRecord { angles_deg: [0.0; 3] };
    assert_eq!(rec.apply(&c).points(), c.points());
}

#[test]
fn rotation_preserves_pairwise_distances_and_det() {
    let c = random_cloud(20, 27);
    let mut rng = stream(28, &[1]);
    let (rotated, rec) = random_rotation(&c, 100.0, &mut rng).unwrap();
    for i in 0..c.len() {
        for j in (i + 1)..c.len() {
            let d0 = dist2(&c.points()[i], &c.points()[j]).sqrt();
            let d1 = dist2(&rotated.points()[i], &rotated.points()[j]).sqrt();
            assert!((d0 - d1).abs() < 1e-5);
        }
    }
    let m = rec.matrix();
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    assert!((det - 1.0).abs() < 1e-6);
}

#[test]
fn rotation_rejects_bad_angle() {
    let c = random_cloud(4, 29);
    let mut rng = stream(30, &[1]);
    assert!(random_rotation(&c, 0.0, &mut rng).is_err());
    assert!(random_rotation(&c, 181.0, &mut rng).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn chamfer_is_symmetric_and_permutation_invariant(
        a in prop::collection::vec((-1.0f32..1.0, -1.0f32..1.0, -1.0f32..1.0), 1..24),
        b in prop::collection::vec((-1.0f32..1.0, -1.0f32..1.0, -1.0f32..1.0), 1..24),
        shuffle_seed in 0u64..1000,
    ) {
        let mk = |v: &[(f32, f32, f32)]| PointCloud::new(v.iter().map(|&(x, y, z)| [x, y, z]).collect()).unwrap();
        let ca = mk(&a);
        let cb = mk(&b);
        let d = chamfer_l2(&ca, &cb);
        prop_assert!(d >= 0.0);
        prop_assert_eq!(d.to_bits(), chamfer_l2(&cb, &ca).to_bits());
        // permuting points within each cloud leaves the value unchanged
        let mut pa = a.clone();
        let mut rng = stream(shuffle_seed, &[7]);
        for i in (1..pa.len()).rev() {
            pa.swap(i, rng.random_range(0..=i));
        }
        prop_assert!((chamfer_l2(&mk(&pa), &cb) - d).abs() < 1e-12);
    }

    #[test]
    fn emd_nonnegative_and_dominated_by_bruteforce(
        pts in prop::collection::vec((-1.0f32..1.0, -1.0f32..1.0, -1.0f32..1.0), 2..14),
        split in 1usize..6,
    ) {
        let n = (pts.len() / 2).max(1).min(split + 1);
        let a = PointCloud::new(pts[..n].iter().map(|&(x, y, z)| [x, y, z]).collect()).unwrap();
        let b = PointCloud::new(pts[pts.len() - n..].iter().map(|&(x, y, z)| [x, y, z]).collect()).unwrap();
        let d = emd(&a, &b).unwrap();
        prop_assert!(d >= 0.0);
        prop_assert!(d <= emd_bruteforce(&a, &b) + 1e-9);
    }
}
