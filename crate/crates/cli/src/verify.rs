//! Invariant and gradient suites behind `pcm verify`.

use std::collections::HashSet;

use ndarray::{Array2, Array3};
use pcm_core::io::{decode_archive, encode_archive, model_tensors, assign_tensors};
use pcm_core::local::{gam_normalize, gam_sigma, GamParams, LocalAggregator, SigmaMode};
use pcm_core::model::{build_model, ModelConfig, Task};
use pcm_core::serialize::cts_code;
use pcm_core::ssm::lti::discretize_scalar;
use pcm_core::ssm::{conv_form, discretize, scan, scan_backward, DiscretizeMode, LtiSystem, StepParams};
use pcm_core::{AxisPerm, CodeMode, OrderKind, PointCloud, SerializationOrder};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::args::{Suite, VerifyArgs};
use crate::input::uniform_cloud;
use crate::report::{Report, Section};
use crate::Output;

pub const GRID_SIZES: [u64; 4] = [2, 4, 8, 16];
pub const DUALITY_TOL: f64 = 1e-6;
pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-4;
pub const DISCRETIZE_TOL: f64 = 1e-15;
pub const TAYLOR_TOL: f64 = 1e-12;
pub const RMS_TOL: f64 = 1e-6;
pub const SIGMA_TOL: f64 = 1e-7;
pub const PARAM_TOL: f64 = 0.15;
pub const PCM_TINY_PARAMS: f64 = 6.9e6;
pub const PCM_PARAMS: f64 = 34.2e6;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub suite: &'static str,
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub tolerance: String,
}

impl Check {
    fn at_most(suite: &'static str, name: impl Into<String>, measured: f64, tol: f64) -> Self {
        Self { suite, name: name.into(), passed: measured <= tol, measured, tolerance: format!("<={tol:e}") }
    }

    fn at_least(suite: &'static str, name: impl Into<String>, measured: f64, tol: f64) -> Self {
        Self { suite, name: name.into(), passed: measured >= tol, measured, tolerance: format!(">={tol:e}") }
    }

    fn failed(suite: &'static str, name: impl Into<String>, err: impl std::fmt::Display) -> Self {
        Self { suite, name: name.into(), passed: false, measured: f64::NAN, tolerance: format!("error: {err}") }
    }

    pub fn section(&self) -> Section {
        Section::new("check")
            .kv("suite", self.suite)
            .kv("check", &self.name)
            .kv("status", if self.passed { "pass" } else { "fail" })
            .kv("measured", format!("{:e}", self.measured))
            .kv("tolerance", &self.tolerance)
    }
}

/// Every cell of the lattice, x fastest.
fn all_cells(g: u64) -> Vec<[u32; 3]> {
    let g = g as u32;
    (0..g * g * g).map(|i| [i % g, (i / g) % g, i / (g * g)]).collect()
}

/// Duplicate codes, codes outside `[0, g^3)` and (when `snake`) sorted
/// neighbours that are not lattice-adjacent.
fn order_violations(order: SerializationOrder, g: u64, snake: bool) -> pcm_core::Result<usize> {
    let mut coded = all_cells(g)
        .into_iter()
        .map(|c| order.code(c, g).map(|code| (code, c)))
        .collect::<pcm_core::Result<Vec<_>>>()?;
    coded.sort_unstable();
    let out_of_range = coded.iter().filter(|(code, _)| *code >= g * g * g).count();
    let mut bad = out_of_range;
    for w in coded.windows(2) {
        let ((ca, a), (cb, b)) = (w[0], w[1]);
        if ca == cb {
            bad += 1;
        } else if snake {
            let l1: u32 = (0..3).map(|i| a[i].abs_diff(b[i])).sum();
            bad += usize::from(l1 != 1);
        }
    }
    Ok(bad)
}

pub fn serialization_checks() -> Vec<Check> {
    const S: &str = "serialization";
    let mut out = Vec::new();
    for g in GRID_SIZES {
        for perm in AxisPerm::ALL {
            let order = SerializationOrder::with_mode(OrderKind::Cts(perm), CodeMode::Bijective);
            out.push(match order_violations(order, g, true) {
                Ok(v) => Check::at_most(S, format!("snake_bijective_{}_grid{g}", perm.name()), v as f64, 0.0),
                Err(e) => Check::failed(S, format!("snake_bijective_{}_grid{g}", perm.name()), e),
            });
        }
        for (kind, snake) in [(OrderKind::Hilbert, true), (OrderKind::Z, false), (OrderKind::ZTrans, false)] {
            let name = format!("{}_{}_grid{g}", kind.name(), if snake { "adjacent" } else { "bijective" });
            out.push(match order_violations(SerializationOrder::new(kind), g, snake) {
                Ok(v) => Check::at_most(S, name, v as f64, 0.0),
                Err(e) => Check::failed(S, name, e),
            });
        }
        let literal = SerializationOrder::with_mode(OrderKind::Cts(AxisPerm::XYZ), CodeMode::PaperLiteral);
        let codes: pcm_core::Result<HashSet<u64>> = all_cells(g).into_iter().map(|c| literal.code(c, g)).collect();
        let name = format!("literal_row_code_collisions_grid{g}");
        out.push(match codes {
            Ok(c) => Check::at_least(S, name, (g * g * g) as f64 - c.len() as f64, 1.0),
            Err(e) => Check::failed(S, name, e),
        });
    }
    let g = 8;
    let mismatches = all_cells(g)
        .into_iter()
        .filter(|&[a, b, c]| {
            cts_code([a, b, c], g, AxisPerm::YXZ, CodeMode::Bijective).ok()
                != cts_code([b, a, c], g, AxisPerm::XYZ, CodeMode::Bijective).ok()
        })
        .count();
    out.push(Check::at_most(S, "axis_variant_identity_yxz_grid8", mismatches as f64, 0.0));
    out
}

fn random_lti(rng: &mut ChaCha8Rng) -> (LtiSystem, usize) {
    let s = rng.gen_range(1..=16);
    let m = rng.gen_range(1..=256);
    let a = (0..s).map(|_| -rng.gen_range(0.05..2.0)).collect();
    let b = (0..s).map(|_| rng.sample(StandardNormal)).collect();
    let c = (0..s).map(|_| rng.sample(StandardNormal)).collect();
    let dt = rng.gen_range(-3.0f64..0.0).exp();
    (LtiSystem::new(a, b, c, dt).expect("valid system"), m)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn entry(p: &mut StepParams, which: usize, t: usize, j: usize) -> &mut f64 {
    match which {
        0 => &mut p.a_bar[[t, j]],
        1 => &mut p.b_bar[[t, j]],
        _ => &mut p.c[[t, j]],
    }
}

/// Max-abs error over max-abs gradient, the worst of all four inputs.
fn fd_relative_error(rng: &mut ChaCha8Rng, m: usize, s: usize) -> f64 {
    let mut params = StepParams::new(
        Array2::from_shape_simple_fn((m, s), || rng.gen_range(0.5..0.99)),
        Array2::from_shape_simple_fn((m, s), || rng.sample(StandardNormal)),
        Array2::from_shape_simple_fn((m, s), || rng.sample(StandardNormal)),
    )
    .expect("matching shapes");
    let mut x: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
    let g: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
    let loss = |x: &[f64], p: &StepParams| -> f64 {
        scan(x, p).expect("lengths match").iter().zip(&g).map(|(y, g)| y * g).sum()
    };
    let grads = scan_backward(&x, &params, &g).expect("lengths match");
    let rel = |analytic: &[f64], numeric: &[f64]| {
        let scale = analytic.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        max_abs_diff(analytic, numeric) / scale
    };
    let mut fd_x = vec![0.0; m];
    for i in 0..m {
        let v = x[i];
        x[i] = v + FD_STEP;
        let up = loss(&x, &params);
        x[i] = v - FD_STEP;
        let down = loss(&x, &params);
        x[i] = v;
        fd_x[i] = (up - down) / (2.0 * FD_STEP);
    }
    let mut worst = rel(&grads.dx, &fd_x);
    for (which, analytic) in [(0, &grads.da_bar), (1, &grads.db_bar), (2, &grads.dc)] {
        let mut fd = Array2::zeros((m, s));
        for t in 0..m {
            for j in 0..s {
                let v = *entry(&mut params, which, t, j);
                *entry(&mut params, which, t, j) = v + FD_STEP;
                let up = loss(&x, &params);
                *entry(&mut params, which, t, j) = v - FD_STEP;
                let down = loss(&x, &params);
                *entry(&mut params, which, t, j) = v;
                fd[[t, j]] = (up - down) / (2.0 * FD_STEP);
            }
        }
        worst = worst.max(rel(analytic.as_slice().unwrap(), fd.as_slice().unwrap()));
    }
    worst
}

pub fn ssm_checks(seed: u64) -> Vec<Check> {
    const S: &str = "ssm";
    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut error = None;
    for _ in 0..100 {
        let (sys, m) = random_lti(&mut rng);
        let x: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        let res = sys
            .steps(m, DiscretizeMode::ExactZoh)
            .and_then(|p| Ok((scan(&x, &p)?, conv_form(&x, &p)?)));
        match res {
            Ok((a, b)) => worst = worst.max(max_abs_diff(&a, &b)),
            Err(e) => error = Some(e),
        }
    }
    out.push(match error {
        None => Check::at_most(S, "scan_conv_max_abs_diff", worst, DUALITY_TOL),
        Some(e) => Check::failed(S, "scan_conv_max_abs_diff", e),
    });

    let b = [1.0, -2.5, 0.3];
    out.push(match discretize(std::f64::consts::LN_2, &[-1.0; 3], &b, DiscretizeMode::ExactZoh) {
        Ok((a_bar, b_bar)) => {
            let err = a_bar
                .iter()
                .map(|v| (v - 0.5).abs() / 0.5)
                .chain(b_bar.iter().zip(&b).map(|(v, b)| (v - 0.5 * b).abs() / (0.5 * b).abs()))
                .fold(0.0, f64::max);
            Check::at_most(S, "zoh_exact_a-1_dt_ln2_relative_error", err, DISCRETIZE_TOL)
        }
        Err(e) => Check::failed(S, "zoh_exact_a-1_dt_ln2_relative_error", e),
    });

    let taylor = [(-1.0, 1e-7), (-2.5, 4e-8), (-0.5, 2e-7)]
        .iter()
        .map(|&(a, dt): &(f64, f64)| {
            let (_, series) = discretize_scalar(dt, a, 1.0, DiscretizeMode::ExactZoh);
            let closed = (dt * a).exp_m1() / a;
            ((series - closed) / closed).abs()
        })
        .fold(0.0, f64::max);
    out.push(Check::at_most(S, "zoh_taylor_vs_closed_form_relative_error", taylor, TAYLOR_TOL));

    let fd = (0..20).map(|_| fd_relative_error(&mut rng, 32, 8)).fold(0.0, f64::max);
    out.push(Check::at_most(S, "scan_backward_fd_relative_error", fd, FD_TOL));
    out
}

fn random_tensor(rng: &mut ChaCha8Rng, m: usize, k: usize, d: usize) -> (Array3<f64>, Array2<f64>) {
    let scale = rng.gen_range(0.1..10.0);
    let nbr = Array3::from_shape_simple_fn((m, k, d), || scale * rng.sample::<f64, _>(StandardNormal));
    let center = Array2::from_shape_simple_fn((m, d), || scale * rng.sample::<f64, _>(StandardNormal));
    (nbr, center)
}

pub fn gam_checks(seed: u64) -> Vec<Check> {
    const S: &str = "gam";
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut rms_err, mut sigma_err, mut perm_err) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..10 {
        let (m, k, d) = (rng.gen_range(1..40), rng.gen_range(1..16), rng.gen_range(1..24));
        let (nbr, center) = random_tensor(&mut rng, m, k, d);
        let params = GamParams { alpha: ndarray::Array1::ones(d), beta: None, delta: 0.0 };
        let out = gam_normalize(nbr.view(), center.view(), &params, SigmaMode::Global);
        let rms = (out.iter().map(|v| v * v).sum::<f64>() / out.len() as f64).sqrt();
        rms_err = rms_err.max((rms - 1.0).abs());

        let mut acc = 0.0;
        for i in 0..m {
            for j in 0..k {
                for c in 0..d {
                    acc += (nbr[[i, j, c]] - center[[i, c]]).powi(2);
                }
            }
        }
        let oracle = (acc / (m * k * d) as f64).sqrt();
        sigma_err = sigma_err.max((gam_sigma(nbr.view(), center.view()) - oracle).abs());

        let agg = LocalAggregator::<f64>::new(&mut rng, d, 8, SigmaMode::Global);
        let base = agg.forward_grouped(nbr.view(), center.view()).expect("shapes match");
        let mut shuffled = nbr.clone();
        for i in 0..m {
            let mut order: Vec<usize> = (0..k).collect();
            order.shuffle(&mut rng);
            for (j, &src) in order.iter().enumerate() {
                shuffled.slice_mut(ndarray::s![i, j, ..]).assign(&nbr.slice(ndarray::s![i, src, ..]));
            }
        }
        let again = agg.forward_grouped(shuffled.view(), center.view()).expect("shapes match");
        let scale = base.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let diff = base.iter().zip(&again).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        perm_err = perm_err.max(diff / scale);
    }
    vec![
        Check::at_most(S, "unit_rms_abs_error", rms_err, RMS_TOL),
        Check::at_most(S, "sigma_vs_triple_loop_abs_error", sigma_err, SIGMA_TOL),
        Check::at_most(S, "neighbour_permutation_relative_error", perm_err, 1e-9),
    ]
}

fn differing_bits(a: &[f32], b: &[f32]) -> usize {
    a.len().abs_diff(b.len()) + a.iter().zip(b).filter(|(x, y)| x.to_bits() != y.to_bits()).count()
}

fn shuffled(cloud: &PointCloud, rng: &mut ChaCha8Rng) -> (PointCloud, Vec<usize>) {
    let mut perm: Vec<usize> = (0..cloud.len()).collect();
    perm.shuffle(rng);
    (cloud.select(&perm).expect("valid permutation"), perm)
}

fn model_checks_inner(seed: u64, out: &mut Vec<Check>) -> pcm_core::Result<()> {
    const S: &str = "model";
    for (cfg, reference) in [(ModelConfig::pcm_tiny(), PCM_TINY_PARAMS), (ModelConfig::pcm(), PCM_PARAMS)] {
        let n = build_model(&cfg, seed)?.count_parameters() as f64;
        out.push(Check::at_most(S, format!("{}_params_relative_deviation", cfg.name), (n / reference - 1.0).abs(), PARAM_TOL));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cloud = uniform_cloud(1024, seed).expect("positive size");
    let cls_cfg = ModelConfig::pcm_tiny().for_task(Task::Classification);
    let model = build_model(&cls_cfg, seed)?;
    let base = model.forward_classification(&cloud)?;
    let mut diff = 0;
    for _ in 0..2 {
        let (p, _) = shuffled(&cloud, &mut rng);
        diff += differing_bits(base.as_slice().unwrap(), model.forward_classification(&p)?.as_slice().unwrap());
    }
    out.push(Check::at_most(S, "cls_permutation_invariance_differing_logits", diff as f64, 0.0));

    let again = build_model(&cls_cfg, seed)?.forward_classification(&cloud)?;
    out.push(Check::at_most(S, "same_seed_differing_logits", differing_bits(base.as_slice().unwrap(), again.as_slice().unwrap()) as f64, 0.0));

    let seg = build_model(&ModelConfig::pcm_tiny().for_task(Task::PartSegmentation), seed)?;
    let seg_base = seg.forward_segmentation(&cloud)?;
    let (p, perm) = shuffled(&cloud, &mut rng);
    let seg_perm = seg.forward_segmentation(&p)?;
    let moved = seg_base.select(ndarray::Axis(0), &perm);
    let diff = differing_bits(moved.as_slice().unwrap(), seg_perm.as_slice().unwrap());
    out.push(Check::at_most(S, "seg_permutation_equivariance_differing_values", diff as f64, 0.0));

    let bytes = encode_archive(&model_tensors(&model))?;
    let mut other = build_model(&cls_cfg, seed.wrapping_add(1))?;
    assign_tensors(&mut other, decode_archive(&bytes)?)?;
    let again = encode_archive(&model_tensors(&other))?;
    let diff = bytes.len().abs_diff(again.len()) + bytes.iter().zip(&again).filter(|(a, b)| a != b).count();
    out.push(Check::at_most(S, "weights_save_load_save_differing_bytes", diff as f64, 0.0));
    Ok(())
}

pub fn model_checks(seed: u64) -> Vec<Check> {
    let mut out = Vec::new();
    if let Err(e) = model_checks_inner(seed, &mut out) {
        out.push(Check::failed("model", "model_suite", e));
    }
    out
}

pub fn checks(suite: Suite, seed: u64) -> Vec<Check> {
    let mut out = Vec::new();
    if matches!(suite, Suite::Serialization | Suite::All) {
        out.extend(serialization_checks());
    }
    if matches!(suite, Suite::Ssm | Suite::All) {
        out.extend(ssm_checks(seed));
    }
    if matches!(suite, Suite::Gam | Suite::All) {
        out.extend(gam_checks(seed));
    }
    if matches!(suite, Suite::Model | Suite::All) {
        out.extend(model_checks(seed));
    }
    out
}

pub fn run(args: &VerifyArgs) -> Output {
    let checks = checks(args.suite, args.seed);
    let mut report = Report::default();
    for c in &checks {
        report.push(c.section());
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    report.push(
        Section::new("summary")
            .kv("seed", args.seed)
            .kv("checks", checks.len())
            .kv("failed", failed)
            .kv("status", if failed == 0 { "pass" } else { "fail" }),
    );
    Output { stdout: report.to_string(), failed: failed > 0 }
}
