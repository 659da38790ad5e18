//! Handlers for the non-verification subcommands.

use std::fs;

use pcm_core::io::load_weights;
use pcm_core::model::{build_model, ModelConfig, Task};
use pcm_core::pointset::normalize_unit_cube;
use pcm_core::serialize::{code_collisions, locality_metrics, quantize_coords, serialize_coords};
use pcm_core::{CodeMode, OrderKind, SerializationOrder};

use crate::args::{Baseline, BenchArgs, ForwardArgs, InspectArgs, ModeArg, ProbeArgs, SerializeArgs, TaskArg};
use crate::bench::run_bench;
use crate::input;
use crate::probe::run_probe;
use crate::report::{Csv, Report, Section};
use crate::verify::{PARAM_TOL, PCM_PARAMS, PCM_TINY_PARAMS};
use crate::{CliError, CliResult, Output};

/// Reference FLOPs (in G) at 1024 points.
pub const PCM_TINY_GFLOPS: f64 = 11.0;
pub const PCM_GFLOPS: f64 = 45.0;

fn parse_order(name: &str) -> CliResult<OrderKind> {
    name.parse()
        .map_err(|_| CliError::Usage(format!("unknown order '{name}'; valid names: {}", OrderKind::valid_names())))
}

fn locality_section(
    name: &str,
    coords: &[pcm_core::pointset::Point3],
    order: SerializationOrder,
    grid: u64,
    window: usize,
) -> CliResult<(Section, pcm_core::PermutationIndex)> {
    let perm = serialize_coords(coords, order, grid)?;
    let m = locality_metrics(coords, &perm, window)?;
    let section = Section::new(name)
        .kv("order", order.kind)
        .kv("mean_gap", format!("{:.6e}", m.mean_gap))
        .kv("adjacency_rate", format!("{:.6}", m.adjacency_rate))
        .kv("collisions", code_collisions(coords, order, grid)?);
    Ok((section, perm))
}

pub fn serialize(a: &SerializeArgs) -> CliResult<Output> {
    let kind = parse_order(&a.order)?;
    let mode = match a.mode {
        ModeArg::Paper => CodeMode::PaperLiteral,
        ModeArg::Bijective => CodeMode::Bijective,
    };
    let cloud = normalize_unit_cube(input::load(&a.cloud)?)?;
    let coords = cloud.coords();
    let mut occupied: Vec<[u32; 3]> = quantize_coords(coords, a.grid)?.cells;
    occupied.sort_unstable();
    occupied.dedup();

    let mut report = Report::default();
    let (section, perm) = locality_section("serialize", coords, SerializationOrder::with_mode(kind, mode), a.grid, a.window)?;
    report.push(
        section
            .kv("n", coords.len())
            .kv("grid", a.grid)
            .kv("mode", if mode == CodeMode::PaperLiteral { "paper" } else { "bijective" })
            .kv("window", a.window)
            .kv("occupied_cells", occupied.len()),
    );
    if a.compare_all {
        for k in OrderKind::ALL {
            let (s, _) = locality_section("compare", coords, SerializationOrder::with_mode(k, mode), a.grid, a.window)?;
            report.push(s);
        }
    }
    if let Some(path) = &a.out {
        let mut csv = Csv::new(&["position", "index"]);
        for (t, &i) in perm.as_slice().iter().enumerate() {
            csv.row(vec![t.to_string(), i.to_string()]);
        }
        fs::write(path, csv.to_string())?;
        report.push(Section::new("output").kv("permutation_csv", path.display()));
    }
    Ok(Output::ok(report.to_string()))
}

fn task_of(t: TaskArg) -> Task {
    match t {
        TaskArg::Cls => Task::Classification,
        TaskArg::Seg => Task::PartSegmentation,
    }
}

pub fn forward(a: &ForwardArgs) -> CliResult<Output> {
    let task = task_of(a.task);
    let config = ModelConfig::resolve(&a.config)?.for_task(task);
    let model = match &a.weights {
        Some(path) => load_weights(path, &config)?,
        None => build_model(&config, a.cloud.seed)?,
    };
    let cloud = input::load(&a.cloud)?;
    let csv = match task {
        Task::Classification => {
            let logits = model.forward_classification(&cloud)?;
            let mut csv = Csv::new(&["class", "logit"]);
            for (c, v) in logits.iter().enumerate() {
                csv.row(vec![c.to_string(), format!("{v:e}")]);
            }
            csv
        }
        Task::PartSegmentation => {
            let logits = model.forward_segmentation(&cloud)?;
            let mut csv = Csv::new(&["index", "label"]);
            for (i, row) in logits.outer_iter().enumerate() {
                let best = row
                    .iter()
                    .enumerate()
                    .fold((0, f32::NEG_INFINITY), |b, (j, &v)| if v > b.1 { (j, v) } else { b })
                    .0;
                csv.row(vec![i.to_string(), best.to_string()]);
            }
            csv
        }
    };
    match &a.out {
        Some(path) => {
            fs::write(path, csv.to_string())?;
            let mut report = Report::default();
            report.push(
                Section::new("forward")
                    .kv("config", &config.name)
                    .kv("task", task)
                    .kv("n", cloud.len())
                    .kv("rows", csv.rows.len())
                    .kv("output", path.display()),
            );
            Ok(Output::ok(report.to_string()))
        }
        None => Ok(Output::ok(csv.to_string())),
    }
}

pub fn bench(a: &BenchArgs) -> CliResult<Output> {
    let r = run_bench(&a.lengths, a.channels, a.repeat, a.baseline == Baseline::Attention, a.seed)?;
    Ok(Output::ok(r.to_report().to_string()))
}

pub fn reference_for(name: &str) -> Option<(f64, f64)> {
    match name {
        "pcm-tiny" => Some((PCM_TINY_PARAMS, PCM_TINY_GFLOPS)),
        "pcm" => Some((PCM_PARAMS, PCM_GFLOPS)),
        _ => None,
    }
}

pub fn inspect(a: &InspectArgs) -> CliResult<Output> {
    let config = ModelConfig::resolve(&a.config)?;
    let model = build_model(&config, config.seed)?;
    let mut report = Report::default();
    let mut params = Section::new("parameters").kv("config", &config.name).kv("task", config.task);
    for (group, count) in model.parameter_breakdown() {
        params.push(&group, count);
    }
    let total = model.count_parameters();
    params.push("total", total);
    report.push(params);
    let macs = model.estimate_flops(1024);
    let mut flops = Section::new("flops").kv("n_points", 1024).kv("macs", macs).kv("gmacs", format!("{:.3}", macs as f64 / 1e9));
    if let Some((ref_params, ref_gflops)) = reference_for(&config.name) {
        let dev = total as f64 / ref_params - 1.0;
        report.push(
            Section::new("reference")
                .kv("params", format!("{:.1}M", ref_params / 1e6))
                .kv("relative_deviation", format!("{dev:+.4}"))
                .kv("tolerance", PARAM_TOL)
                .kv("within_tolerance", dev.abs() <= PARAM_TOL),
        );
        flops.push("reference_gflops", format!("{ref_gflops:.1}"));
    }
    report.push(flops);
    Ok(Output::ok(report.to_string()))
}

pub fn probe(a: &ProbeArgs) -> CliResult<Output> {
    let r = run_probe(a.classes, a.per_class, a.n, a.seed)?;
    let mut report = r.to_report();
    report.sections[0].push("seed", a.seed);
    Ok(Output::ok(report.to_string()))
}
