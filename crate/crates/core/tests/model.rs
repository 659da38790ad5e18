use std::time::Instant;

use ndarray::Array2;
use pcm_core::io::{generate_shape, load_weights, save_weights, ShapeKind};
use pcm_core::model::{build_model, Head, ModelConfig, StageConfig, Task};
use pcm_core::nn::Params;
use pcm_core::pointset::{PointCloud, Point3};
use pcm_core::{Error, OrderKind};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_config(task: Task) -> ModelConfig {
    let orders = |names: &[&str]| names.iter().map(|n| n.parse::<OrderKind>().unwrap()).collect::<Vec<_>>();
    let stage = |channels, points, names: &[&str]| StageConfig {
        channels,
        num_layers: names.len(),
        serializations: orders(names),
        points,
        k_neighbors: 4,
    };
    ModelConfig {
        name: "small".into(),
        stages: vec![stage(16, 64, &["xyz"]), stage(16, 32, &["hilbert", "z"]), stage(24, 16, &["z-trans"])],
        n_p: 2,
        prompt_width: 8,
        head_hidden: 16,
        ..ModelConfig::pcm_tiny()
    }
    .for_task(task)
}

fn uniform_cloud(n: usize, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PointCloud::new((0..n).map(|_| std::array::from_fn(|_| rng.gen::<f64>())).collect()).unwrap()
}

fn shuffled(cloud: &PointCloud, seed: u64) -> (PointCloud, Vec<usize>) {
    let mut perm: Vec<usize> = (0..cloud.len()).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    (cloud.select(&perm).unwrap(), perm)
}

fn bits(a: &[f32]) -> Vec<u32> {
    a.iter().map(|v| v.to_bits()).collect()
}

#[test]
fn same_seed_same_parameters() {
    let cfg = small_config(Task::Classification);
    let a = build_model(&cfg, 3).unwrap();
    let b = build_model(&cfg, 3).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, build_model(&cfg, 4).unwrap());
}

#[test]
fn classification_is_permutation_invariant() {
    let model = build_model(&small_config(Task::Classification), 0).unwrap();
    let cloud = uniform_cloud(100, 1);
    let base = model.forward_classification(&cloud).unwrap();
    assert_eq!(base.len(), 15);
    for seed in 0..3 {
        let (p, _) = shuffled(&cloud, seed);
        let l = model.forward_classification(&p).unwrap();
        assert_eq!(bits(l.as_slice().unwrap()), bits(base.as_slice().unwrap()));
    }
}

#[test]
fn segmentation_is_permutation_equivariant() {
    let model = build_model(&small_config(Task::PartSegmentation), 0).unwrap();
    let cloud = uniform_cloud(90, 2);
    let base = model.forward_segmentation(&cloud).unwrap();
    assert_eq!(base.dim(), (90, 50));
    let (p, perm) = shuffled(&cloud, 5);
    let out = model.forward_segmentation(&p).unwrap();
    for (row, &src) in perm.iter().enumerate() {
        assert_eq!(bits(&out.row(row).to_vec()), bits(&base.row(src).to_vec()));
    }
}

#[test]
fn segmentation_rows_match_input_when_resampled() {
    let model = build_model(&small_config(Task::PartSegmentation), 0).unwrap();
    let out = model.forward_segmentation(&uniform_cloud(300, 3)).unwrap();
    assert_eq!(out.nrows(), 300);
    assert!(out.iter().all(|v| v.is_finite()));
}

#[test]
fn zero_classifier_gives_uniform_logits() {
    let mut model = build_model(&small_config(Task::PartSegmentation), 0).unwrap();
    if let Head::Segmentation(d) = &mut model.head {
        d.classifier.weight.fill(0.0);
        d.classifier.bias.as_mut().unwrap().fill(0.0);
    }
    let out = model.forward_segmentation(&uniform_cloud(70, 4)).unwrap();
    for row in out.rows() {
        assert!(row.iter().all(|&v| v == row[0]));
    }
}

#[test]
fn token_counts_follow_schedule() {
    let model = build_model(&small_config(Task::Classification), 0).unwrap();
    let enc = model.encode(&uniform_cloud(200, 5)).unwrap();
    let counts: Vec<usize> = enc.stage_features.iter().map(|f| f.nrows()).collect();
    assert_eq!(counts, [64, 32, 16]);
    let enc = model.encode(&uniform_cloud(40, 5)).unwrap();
    assert_eq!(enc.stage_features.iter().map(|f| f.nrows()).collect::<Vec<_>>(), [40, 32, 16]);
    match model.forward_classification(&uniform_cloud(15, 6)) {
        Err(Error::InvalidInput(msg)) => assert!(msg.contains("16")),
        other => panic!("expected invalid input, got {other:?}"),
    }
}

#[test]
fn distinct_seeds_and_constant_features() {
    let mut cfg = small_config(Task::Classification);
    let cloud = uniform_cloud(64, 7);
    let a = build_model(&cfg, 0).unwrap().forward_classification(&cloud).unwrap();
    let b = build_model(&cfg, 1).unwrap().forward_classification(&cloud).unwrap();
    assert_ne!(a, b);
    cfg.input_features = 2;
    let feats = Array2::from_elem((64, 2), 0.5);
    let with = PointCloud::with_attributes(cloud.coords().to_vec(), Some(feats), None).unwrap();
    let l = build_model(&cfg, 0).unwrap().forward_classification(&with).unwrap();
    assert!(l.iter().all(|v| v.is_finite()));
    assert!(matches!(
        build_model(&cfg, 0).unwrap().forward_classification(&cloud),
        Err(Error::InvalidInput(_))
    ));
}

#[test]
fn degenerate_geometry_stays_finite() {
    let model = build_model(&small_config(Task::Classification), 0).unwrap();
    let plane = generate_shape(ShapeKind::Plane, 80, 0.0, 1).unwrap();
    assert!(model.forward_classification(&plane).unwrap().iter().all(|v| v.is_finite()));
    let line: Vec<Point3> = (0..50).map(|i| [i as f64, 0.0, 0.0]).collect();
    let l = model.forward_classification(&PointCloud::new(line).unwrap()).unwrap();
    assert!(l.iter().all(|v| v.is_finite()));
}

#[test]
fn activations_finite_over_many_clouds() {
    let model = build_model(&small_config(Task::Classification), 11).unwrap();
    for seed in 0..100 {
        let enc = model.encode(&uniform_cloud(64, 1000 + seed)).unwrap();
        for f in &enc.stage_features {
            assert!(f.iter().all(|v| v.is_finite()), "seed {seed}");
        }
    }
}

#[test]
fn parameter_count_difference_is_one_layer() {
    let cfg = small_config(Task::Classification);
    let base = build_model(&cfg, 0).unwrap();
    let mut deeper_cfg = cfg.clone();
    deeper_cfg.stages[1].num_layers += 1;
    deeper_cfg.stages[1].serializations.push("hilbert".parse().unwrap());
    let deeper = build_model(&deeper_cfg, 0).unwrap();
    let per_layer = base.stages[1].layers[0].num_params();
    assert_eq!(deeper.count_parameters() - base.count_parameters(), per_layer);
    let total: usize = base.parameter_breakdown().iter().map(|(_, n)| n).sum();
    assert_eq!(total, base.count_parameters());
}

#[test]
fn preset_parameter_counts() {
    for (cfg, reference) in [(ModelConfig::pcm_tiny(), 6.9e6), (ModelConfig::pcm(), 34.2e6)] {
        let n = build_model(&cfg, 0).unwrap().count_parameters() as f64;
        assert!((n / reference - 1.0).abs() <= 0.15, "{}: {n}", cfg.name);
    }
}

#[test]
fn weights_round_trip() {
    let cfg = small_config(Task::Classification);
    let model = build_model(&cfg, 9).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (p1, p2) = (dir.path().join("a.pcmw"), dir.path().join("b.pcmw"));
    save_weights(&model, &p1).unwrap();
    let loaded = load_weights(&p1, &cfg).unwrap();
    assert_eq!(loaded, model);
    save_weights(&loaded, &p2).unwrap();
    assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());

    let bytes = std::fs::read(&p1).unwrap();
    std::fs::write(&p2, &bytes[..bytes.len() / 2]).unwrap();
    assert!(matches!(load_weights(&p2, &cfg), Err(Error::Format(_))));

    let mut other = cfg.clone();
    other.stages[2].channels = 32;
    match load_weights(&p1, &other) {
        Err(Error::TensorMismatch { first, offenders }) => {
            assert_eq!(first, "stages.2.local.transfer.weight");
            assert!(offenders.len() > 1);
        }
        other => panic!("expected mismatch, got {other:?}"),
    }
}

#[test]
fn pcm_tiny_forward_timing() {
    let model = build_model(&ModelConfig::pcm_tiny(), 0).unwrap();
    let cloud = generate_shape(ShapeKind::Sphere, 1024, 0.01, 0).unwrap();
    let t = Instant::now();
    let logits = model.forward_classification(&cloud).unwrap();
    eprintln!("pcm-tiny forward on 1024 points: {:.3} s", t.elapsed().as_secs_f64());
    assert!(logits.iter().all(|v| v.is_finite()));
}
