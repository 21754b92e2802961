use tempfile::tempdir;

use super::*;
use crate::geometry::chamfer_l2;
use crate::rng::stream;

fn unit_cloud(n: usize, seed: u64) -> PointCloud {
    let spec = ShapeSpec { kind: ShapeKind::Sphere { radius: 1.0 }, n_points: n, seed };
    generate_shape(&spec).unwrap()
}

#[test]
fn reconstruction_sizes_follow_the_paper_ladder() {
    assert_eq!(reconstruction_input_size(1024, 1), 512);
    assert_eq!(reconstruction_input_size(1024, 2), 256);
    assert_eq!(reconstruction_input_size(1024, 3), 128);
    assert_eq!(reconstruction_input_size(1024, 4), 64);
    assert_eq!(reconstruction_input_size(1024, 5), 32);
    assert_eq!(reconstruction_input_size(128, 5), 4);
}

#[test]
fn reconstruction_input_is_subset_of_target() {
    let c = unit_cloud(128, 1);
    let mut rng = stream(2, &[]);
    let (input, kept) = make_reconstruction_pair(&c, 3, &mut rng).unwrap();
    assert_eq!(input.len(), 16);
    assert_eq!(kept.len(), 16);
    for p in input.points() {
        assert!(c.points().contains(p));
    }
}

#[test]
fn denoising_counts_follow_the_paper_ladder() {
    for level in 1..=5u8 {
        assert_eq!(denoising_replaced_count(1024, level), 100 * level as usize);
    }
    assert_eq!(denoising_replaced_count(128, 1), 13); // ceil(12.5)
}

#[test]
fn denoising_keeps_unreplaced_points() {
    let c = unit_cloud(128, 3);
    let mut rng = stream(4, &[]);
    let (input, replaced) = make_denoising_pair(&c, 3, &mut rng).unwrap();
    assert_eq!(input.len(), c.len());
    assert_eq!(replaced.len(), denoising_replaced_count(128, 3));
    let replaced_set: std::collections::HashSet<u32> = replaced.iter().copied().collect();
    for (i, (a, b)) in input.points().iter().zip(c.points().iter()).enumerate() {
        if !replaced_set.contains(&(i as u32)) {
            assert_eq!(a, b);
        }
    }
}

#[test]
fn registration_angles_within_level_bound() {
    let c = unit_cloud(64, 5);
    for s in 0..20u64 {
        let mut rng = stream(s, &[6]);
        let (_, rec) = make_registration_pair(&c, 1, &mut rng).unwrap();
        for a in rec.angles_deg {
            assert!(a.abs() <= 20.0);
        }
    }
}

#[test]
fn registration_preserves_distances_and_moves_cloud() {
    let c = unit_cloud(64, 7);
    let mut rng = stream(8, &[]);
    let (input, _) = make_registration_pair(&c, 3, &mut rng).unwrap();
    // isometry: pairwise distance multiset is preserved pointwise
    for i in 0..8 {
        for j in (i + 1)..8 {
            let d0: f64 = (0..3)
                .map(|a| (c.points()[i][a] as f64 - c.points()[j][a] as f64).powi(2))
                .sum::<f64>()
                .sqrt();
            let d1: f64 = (0..3)
                .map(|a| (input.points()[i][a] as f64 - input.points()[j][a] as f64).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!((d0 - d1).abs() < 1e-5);
        }
    }
    assert!(chamfer_l2(&input, &c) > 0.0);
}

#[test]
fn invalid_level_is_rejected() {
    let c = unit_cloud(64, 9);
    let mut rng = stream(10, &[]);
    assert!(matches!(make_denoising_pair(&c, 0, &mut rng), Err(DatasetError::InvalidLevel(0))));
    assert!(matches!(make_denoising_pair(&c, 6, &mut rng), Err(DatasetError::InvalidLevel(6))));
}

#[test]
fn build_writes_expected_record_count() {
    let dir = tempdir().unwrap();
    let cfg = DatasetConfig { samples_per_cell: 2, n_points: 64, seed: 7, ..Default::default() };
    let manifest = build_dataset(&cfg, dir.path()).unwrap();
    assert_eq!(manifest.records.len(), 30);
    assert_eq!(manifest.counts.total, 30);
    // offsets strictly increasing
    for w in manifest.records.windows(2) {
        assert!(w[1].offset > w[0].offset);
    }
}

#[test]
fn rebuild_is_byte_identical() {
    let d1 = tempdir().unwrap();
    let d2 = tempdir().unwrap();
    let cfg = DatasetConfig { samples_per_cell: 1, n_points: 64, seed: 42, ..Default::default() };
    build_dataset(&cfg, d1.path()).unwrap();
    build_dataset(&cfg, d2.path()).unwrap();
    for f in [MANIFEST_FILE, RECORDS_FILE] {
        let a = std::fs::read(d1.path().join(f)).unwrap();
        let b = std::fs::read(d2.path().join(f)).unwrap();
        assert_eq!(a, b, "{f} differs");
    }
}

#[test]
fn roundtrip_and_regeneration_agree() {
    let dir = tempdir().unwrap();
    let cfg = DatasetConfig { samples_per_cell: 1, n_points: 64, seed: 11, ..Default::default() };
    let manifest = build_dataset(&cfg, dir.path()).unwrap();
    let ds = load_dataset(dir.path()).unwrap();
    assert_eq!(ds.len(), manifest.records.len());
    for (i, rec) in manifest.records.iter().enumerate() {
        let loaded = ds.get(i).unwrap();
        let (regen, prov) = generate_record(cfg.seed, i as u64, rec.task, rec.level, cfg.n_points).unwrap();
        assert_eq!(loaded.prompt_input.points(), regen.prompt_input.points());
        assert_eq!(loaded.query_target.points(), regen.query_target.points());
        // prompt and query never share a shape seed
        assert_ne!(prov.prompt_shape.seed, prov.query_shape.seed);
    }
}

#[test]
fn provenance_rebuilds_input_from_target() {
    let (sample, prov) = generate_record(99, 5, Task::Denoising, 4, 96).unwrap();
    let PairProvenance::Denoising { replaced } = &prov.query_pair else {
        panic!("wrong provenance kind")
    };
    // all unreplaced coordinates must match the target; replaced are noise
    let set: std::collections::HashSet<u32> = replaced.iter().copied().collect();
    for (i, (a, b)) in sample.query_input.points().iter().zip(sample.query_target.points()).enumerate() {
        if set.contains(&(i as u32)) {
            continue;
        }
        assert_eq!(a, b);
    }

    let (sample, prov) = generate_record(99, 6, Task::Registration, 2, 96).unwrap();
    let PairProvenance::Registration { rotation } = &prov.query_pair else {
        panic!("wrong provenance kind")
    };
    assert_eq!(rotation.apply(&sample.query_target).points(), sample.query_input.points());

    let (sample, prov) = generate_record(99, 7, Task::Reconstruction, 2, 96).unwrap();
    let PairProvenance::Reconstruction { kept } = &prov.query_pair else {
        panic!("wrong provenance kind")
    };
    let rebuilt: Vec<[f32; 3]> = kept.iter().map(|&i| sample.query_target.points()[i as usize]).collect();
    assert_eq!(rebuilt.as_slice(), sample.query_input.points());
}

#[test]
fn corrupting_a_byte_names_the_record() {
    let dir = tempdir().unwrap();
    let cfg = DatasetConfig { samples_per_cell: 1, n_points: 64, seed: 1, ..Default::default() };
    let manifest = build_dataset(&cfg, dir.path()).unwrap();
    let path = dir.path().join(RECORDS_FILE);
    let mut bytes = std::fs::read(&path).unwrap();
    let target_record = 3usize;
    let off = manifest.records[target_record].offset as usize + 5;
    bytes[off] ^= 0xff;
    std::fs::write(&path, &bytes).unwrap();
    let ds = load_dataset(dir.path()).unwrap();
    match ds.get(target_record) {
        Err(DatasetError::Checksum { record }) => assert_eq!(record, target_record),
        other => panic!("expected checksum error, got {other:?}"),
    }
    // other records still load
    assert!(ds.get(0).is_ok());
}

#[test]
fn empty_dataset_loads_as_zero_records() {
    let dir = tempdir().unwrap();
    let cfg = DatasetConfig { samples_per_cell: 0, n_points: 64, seed: 1, ..Default::default() };
    build_dataset(&cfg, dir.path()).unwrap();
    let ds = load_dataset(dir.path()).unwrap();
    assert!(ds.is_empty());
    assert_eq!(ds.iter().count(), 0);
}

#[test]
fn version_mismatch_is_rejected() {
    let dir = tempdir().unwrap();
    let cfg = DatasetConfig { samples_per_cell: 0, n_points: 64, seed: 1, ..Default::default() };
    build_dataset(&cfg, dir.path()).unwrap();
    let path = dir.path().join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).unwrap().replace("\"version\": 1", "\"version\": 9");
    std::fs::write(&path, text).unwrap();
    assert!(matches!(load_dataset(dir.path()), Err(DatasetError::UnsupportedVersion { found: 9 })));
}

#[test]
fn stored_targets_satisfy_unit_sphere_invariant() {
    let dir = tempdir().unwrap();
    let cfg = DatasetConfig { samples_per_cell: 1, n_points: 96, seed: 13, ..Default::default() };
    build_dataset(&cfg, dir.path()).unwrap();
    let ds = load_dataset(dir.path()).unwrap();
    for s in ds.iter() {
        let s = s.unwrap();
        for cloud in [&s.prompt_target, &s.query_target] {
            assert_eq!(cloud.len(), 96);
            let mut centroid = [0.0f64; 3];
            let mut max_norm = 0.0f64;
            for p in cloud.points() {
                let mut n = 0.0;
                for a in 0..3 {
                    centroid[a] += p[a] as f64;
                    n += (p[a] as f64).powi(2);
                }
                max_norm = max_norm.max(n.sqrt());
            }
            for c in centroid {
                assert!((c / 96.0).abs() < 1e-6);
            }
            assert!((max_norm - 1.0).abs() < 1e-6);
        }
    }
}

#[test]
fn mean_cd_increases_with_level_smoke() {
    // small-sample version of the level-monotonicity property; the
    // acceptance suite runs the 300-sample variant
    for task in [Task::Denoising, Task::Registration] {
        let mut means = Vec::new();
        for level in ALL_LEVELS {
            let mut total = 0.0;
            let n = 24;
            for i in 0..n {
                let (s, _) = generate_record(555, i, task, level, 96).unwrap();
                total += chamfer_l2(&s.query_input, &s.query_target);
            }
            means.push(total / n as f64);
        }
        for w in means.windows(2) {
            assert!(w[1] > w[0], "task {task:?}: means {means:?} not increasing");
        }
    }
}
