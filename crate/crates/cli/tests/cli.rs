use std::path::Path;
use std::process::{Command, Output};

use pcm_cli::report::Report;
use pcm_core::io::{format_xyz, save_weights};
use pcm_core::model::{build_model, ModelConfig, Task};
use pcm_core::PointCloud;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn pcm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcm")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn ok(args: &[&str]) -> String {
    let o = pcm(args);
    assert_eq!(o.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    stdout(&o)
}

fn write_cloud(path: &Path, cloud: &PointCloud) {
    std::fs::write(path, format_xyz(cloud)).unwrap();
}

#[test]
fn serialize_report_fields() {
    let r = Report::parse(&ok(&["serialize", "--gen", "sphere", "--n", "512", "--order", "xyz"]));
    let s = r.section("serialize").unwrap();
    assert_eq!(s.get("n"), Some("512"));
    assert!(s.get("mean_gap").unwrap().parse::<f64>().unwrap() > 0.0);
    let rate: f64 = s.get("adjacency_rate").unwrap().parse().unwrap();
    assert!((0.0..=1.0).contains(&rate));
}

#[test]
fn literal_mode_flags_collisions_on_full_grid() {
    let r = Report::parse(&ok(&["serialize", "--gen", "grid", "--n", "64", "--grid", "4", "--mode", "paper"]));
    let s = r.section("serialize").unwrap();
    assert_eq!(s.get("occupied_cells"), Some("64"));
    assert!(s.get("collisions").unwrap().parse::<usize>().unwrap() > 0);
    let r = Report::parse(&ok(&["serialize", "--gen", "grid", "--n", "64", "--grid", "4"]));
    assert_eq!(r.section("serialize").unwrap().get("collisions"), Some("0"));
}

#[test]
fn compare_all_covers_nine_orders_and_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("perm.csv");
    let text = ok(&["serialize", "--gen", "uniform", "--n", "300", "--compare-all", "--out", csv.to_str().unwrap()]);
    let r = Report::parse(&text);
    let orders: Vec<&str> = r.sections.iter().filter(|s| s.get("section") == Some("compare")).map(|s| s.get("order").unwrap()).collect();
    assert_eq!(orders, ["xyz", "xzy", "yxz", "yzx", "zxy", "zyx", "hilbert", "z", "z-trans"]);
    let body = std::fs::read_to_string(&csv).unwrap();
    let mut lines = body.lines();
    assert_eq!(lines.next(), Some("position,index"));
    let mut idx: Vec<usize> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    idx.sort_unstable();
    assert_eq!(idx, (0..300).collect::<Vec<_>>());
}

#[test]
fn unknown_order_is_usage_error_listing_names() {
    let o = pcm(&["serialize", "--gen", "sphere", "--order", "spiral"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    for name in ["xyz", "zyx", "hilbert", "z-trans"] {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn usage_and_input_errors() {
    assert_eq!(pcm(&["serialize"]).status.code(), Some(2));
    assert_eq!(pcm(&["serialize", "--gen", "sphere", "--input", "x.xyz"]).status.code(), Some(2));
    assert_eq!(pcm(&["serialize", "--input", "/nonexistent/cloud.xyz"]).status.code(), Some(3));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.xyz");
    std::fs::write(&bad, "0 0 0\n1 one 1\n").unwrap();
    let o = pcm(&["serialize", "--input", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains(":2:"));
}

#[test]
fn forward_cls_is_deterministic() {
    let args = ["forward", "--task", "cls", "--gen", "sphere", "--n", "256", "--seed", "4"];
    let a = ok(&args);
    assert_eq!(a, ok(&args));
    assert!(a.starts_with("class,logit\n"));
    assert_eq!(a.lines().count(), 16);
}

#[test]
fn forward_cls_ignores_input_order() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = pcm_core::io::generate_shape(pcm_core::io::ShapeKind::Torus, 300, 0.01, 2).unwrap();
    let mut perm: Vec<usize> = (0..300).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(9));
    let (a, b) = (dir.path().join("a.xyz"), dir.path().join("b.xyz"));
    write_cloud(&a, &cloud);
    write_cloud(&b, &cloud.select(&perm).unwrap());
    let run = |p: &Path| ok(&["forward", "--input", p.to_str().unwrap(), "--seed", "1"]);
    assert_eq!(run(&a), run(&b));
}

#[test]
fn forward_seg_rows_match_points() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("seg.csv");
    let text = ok(&["forward", "--task", "seg", "--gen", "cube", "--n", "200", "--out", out.to_str().unwrap()]);
    assert_eq!(Report::parse(&text).section("forward").unwrap().get("rows"), Some("200"));
    let body = std::fs::read_to_string(&out).unwrap();
    assert_eq!(body.lines().next(), Some("index,label"));
    assert_eq!(body.lines().count(), 201);
    assert!(body.lines().skip(1).all(|l| l.split(',').nth(1).unwrap().parse::<usize>().unwrap() < 50));
}

#[test]
fn forward_point_budget_violation() {
    let o = pcm(&["forward", "--gen", "sphere", "--n", "100"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("128"));
}

#[test]
fn forward_weights_override_seed_and_bad_archives_fail() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("w.pcmw");
    let cfg = ModelConfig::pcm_tiny().for_task(Task::Classification);
    save_weights(&build_model(&cfg, 5).unwrap(), &w).unwrap();
    let from_file = ok(&["forward", "--gen", "plane", "--n", "200", "--seed", "3", "--weights", w.to_str().unwrap()]);
    // Seed-5 weights replace the seed-3 init.
    let seeded = ok(&["forward", "--gen", "plane", "--n", "200", "--seed", "3"]);
    assert_ne!(from_file, seeded);
    std::fs::write(&w, b"PCMW\x01\x00").unwrap();
    assert_eq!(pcm(&["forward", "--gen", "plane", "--n", "200", "--weights", w.to_str().unwrap()]).status.code(), Some(3));
    let o = pcm(&["forward", "--config", "pcm", "--gen", "plane", "--n", "200", "--weights", dir.path().join("missing").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn forward_with_weights_reproduces_saved_model() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("w.pcmw");
    let cfg = ModelConfig::pcm_tiny().for_task(Task::Classification);
    save_weights(&build_model(&cfg, 3).unwrap(), &w).unwrap();
    let from_file = ok(&["forward", "--gen", "plane", "--n", "200", "--seed", "3", "--weights", w.to_str().unwrap()]);
    assert_eq!(from_file, ok(&["forward", "--gen", "plane", "--n", "200", "--seed", "3"]));
}

#[test]
fn verify_suites_report_contract() {
    let ssm = Report::parse(&ok(&["verify", "--suite", "ssm"]));
    let names: Vec<&str> = ssm.sections.iter().filter_map(|s| s.get("check")).collect();
    assert!(names.contains(&"scan_conv_max_abs_diff"));
    assert!(names.contains(&"scan_backward_fd_relative_error"));
    for s in ssm.sections.iter().filter(|s| s.get("check").is_some()) {
        assert!(s.get("measured").is_some() && s.get("tolerance").is_some());
    }
    let ser = ok(&["verify", "--suite", "serialization"]);
    for g in [2, 4, 8, 16] {
        assert!(ser.contains(&format!("check=snake_bijective_zyx_grid{g}\n")));
    }
    assert!(!ser.contains("status=fail"));
}

#[test]
fn verify_all_is_reproducible() {
    let a = pcm(&["verify", "--suite", "all", "--seed", "7"]);
    let b = pcm(&["verify", "--suite", "all", "--seed", "7"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(Report::parse(&stdout(&a)).section("summary").unwrap().get("failed"), Some("0"));
}

#[test]
fn bench_report_contract() {
    let r = Report::parse(&ok(&["bench", "--lengths", "64,128,256", "--channels", "8", "--repeat", "3"]));
    let rows: Vec<_> = r.sections.iter().filter(|s| s.get("section") == Some("timing")).collect();
    assert_eq!(rows.len(), 6);
    let ns: Vec<usize> = rows.iter().map(|s| s.get("n_points").unwrap().parse().unwrap()).collect();
    assert!(ns.windows(2).all(|w| w[0] <= w[1]));
    for s in rows {
        let min: f64 = s.get("min_seconds").unwrap().parse().unwrap();
        let med: f64 = s.get("median_seconds").unwrap().parse().unwrap();
        assert!(min <= med);
    }
    let fit = r.section("scaling").unwrap();
    assert!(fit.get("ssm_exponent").is_some() && fit.get("attention_baseline_exponent").is_some());
    let none = Report::parse(&ok(&["bench", "--lengths", "64,128", "--channels", "8", "--repeat", "1", "--baseline", "none"]));
    assert!(none.section("scaling").unwrap().get("attention_baseline_exponent").is_none());
    assert_eq!(pcm(&["bench", "--lengths", "128,64"]).status.code(), Some(2));
}

#[test]
fn inspect_parameter_totals() {
    for (name, reference) in [("pcm-tiny", 6.9e6), ("pcm", 34.2e6)] {
        let r = Report::parse(&ok(&["inspect", "--config", name]));
        let p = r.section("parameters").unwrap();
        let total: f64 = p.get("total").unwrap().parse().unwrap();
        assert!((total / reference - 1.0).abs() <= 0.15, "{name}: {total}");
        assert_eq!(r.section("reference").unwrap().get("within_tolerance"), Some("true"));
        assert!(r.section("flops").unwrap().get("macs").unwrap().parse::<u64>().unwrap() > 0);
    }
}

#[test]
fn inspect_reads_toml_config() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tiny.toml");
    let mut cfg = ModelConfig::pcm_tiny();
    cfg.name = "custom".into();
    std::fs::write(&path, cfg.to_toml_string().unwrap()).unwrap();
    let r = Report::parse(&ok(&["inspect", "--config", path.to_str().unwrap()]));
    assert_eq!(r.section("parameters").unwrap().get("config"), Some("custom"));
    assert!(r.section("reference").is_none());
    std::fs::write(&path, "stages = 3\n").unwrap();
    assert_eq!(pcm(&["inspect", "--config", path.to_str().unwrap()]).status.code(), Some(3));
}

#[test]
fn probe_small_corpus() {
    let args = ["probe", "--classes", "3", "--per-class", "5", "--n", "128", "--seed", "1"];
    let text = ok(&args);
    let r = Report::parse(&text);
    let p = r.section("probe").unwrap();
    assert_eq!(p.get("n_train"), Some("12"));
    assert_eq!(p.get("n_test"), Some("3"));
    let acc: f64 = p.get("test_accuracy").unwrap().parse().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    assert_eq!(text, ok(&args));
}
