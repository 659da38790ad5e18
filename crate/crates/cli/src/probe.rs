//! Linear probe on frozen random-init PCM-Tiny features.

use ndarray::Array2;
use pcm_core::io::{synthetic_corpus, ShapeKind};
use pcm_core::model::{build_model, train_linear_probe, ModelConfig, Standardizer, Task};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::report::{Report, Section};
use crate::{CliError, CliResult};

pub const PROBE_EPOCHS: usize = 500;
pub const PROBE_LR: f64 = 0.1;
pub const PROBE_NOISE: f64 = 0.01;
pub const TRAIN_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub classes: Vec<ShapeKind>,
    pub n_train: usize,
    pub n_test: usize,
    pub feature_dim: usize,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub final_loss: f64,
}

impl ProbeReport {
    pub fn to_report(&self) -> Report {
        let names: Vec<&str> = self.classes.iter().map(|k| k.name()).collect();
        let mut r = Report::default();
        r.push(
            Section::new("probe")
                .kv("classes", names.join(","))
                .kv("n_train", self.n_train)
                .kv("n_test", self.n_test)
                .kv("feature_dim", self.feature_dim)
                .kv("epochs", PROBE_EPOCHS)
                .kv("train_accuracy", format!("{:.4}", self.train_accuracy))
                .kv("test_accuracy", format!("{:.4}", self.test_accuracy))
                .kv("chance", format!("{:.4}", 1.0 / self.classes.len() as f64))
                .kv("final_loss", format!("{:.6}", self.final_loss)),
        );
        r
    }
}

/// Per-class shuffle, first `TRAIN_FRACTION` of each class to training.
pub fn stratified_split(labels: &[usize], seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes = labels.iter().max().map_or(0, |&m| m + 1);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for c in 0..classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        idx.shuffle(&mut rng);
        let cut = (idx.len() as f64 * TRAIN_FRACTION).round() as usize;
        train.extend_from_slice(&idx[..cut]);
        test.extend_from_slice(&idx[cut..]);
    }
    (train, test)
}

pub fn run_probe(classes: usize, per_class: usize, n: usize, seed: u64) -> CliResult<ProbeReport> {
    if !(2..=ShapeKind::ALL.len()).contains(&classes) {
        return Err(CliError::Usage(format!("--classes must be in 2..={}", ShapeKind::ALL.len())));
    }
    if per_class < 2 {
        return Err(CliError::Usage("--per-class must be at least 2".into()));
    }
    let kinds = &ShapeKind::ALL[..classes];
    let corpus = synthetic_corpus(kinds, per_class, n, PROBE_NOISE, seed)?;
    let model = build_model(&ModelConfig::pcm_tiny().for_task(Task::Classification), seed)?;
    let pooled = corpus
        .par_iter()
        .map(|(cloud, _)| model.pooled_features(cloud))
        .collect::<pcm_core::Result<Vec<_>>>()?;
    let dim = pooled[0].len();
    let features = Array2::from_shape_fn((pooled.len(), dim), |(i, j)| f64::from(pooled[i][j]));
    let labels: Vec<usize> = corpus.iter().map(|(_, l)| *l).collect();

    let (train, test) = stratified_split(&labels, seed);
    let pick = |idx: &[usize]| features.select(ndarray::Axis(0), idx);
    let labels_of = |idx: &[usize]| idx.iter().map(|&i| labels[i]).collect::<Vec<_>>();
    let standardizer = Standardizer::fit(pick(&train).view());
    let x_train = standardizer.apply(pick(&train).view());
    let x_test = standardizer.apply(pick(&test).view());
    let (y_train, y_test) = (labels_of(&train), labels_of(&test));
    let fit = train_linear_probe(x_train.view(), &y_train, PROBE_EPOCHS, PROBE_LR, seed)?;
    Ok(ProbeReport {
        classes: kinds.to_vec(),
        n_train: train.len(),
        n_test: test.len(),
        feature_dim: dim,
        train_accuracy: fit.train_accuracy,
        test_accuracy: fit.probe.accuracy(x_test.view(), &y_test),
        final_loss: fit.final_loss,
    })
}
