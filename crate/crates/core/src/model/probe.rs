//! Softmax-regression probe on frozen features.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

pub const PROBE_INIT_STD: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProbe {
    /// `features x classes`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl LinearProbe {
    pub fn zeros(d: usize, classes: usize) -> Self {
        Self {
            weights: Array2::zeros((d, classes)),
            bias: Array1::zeros(classes),
        }
    }

    pub fn classes(&self) -> usize {
        self.bias.len()
    }

    pub fn logits(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        x.dot(&self.weights) + &self.bias
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<usize> {
        self.logits(x)
            .outer_iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                    .0
            })
            .collect()
    }

    pub fn accuracy(&self, x: ArrayView2<'_, f64>, labels: &[usize]) -> f64 {
        if labels.is_empty() {
            return 0.0;
        }
        let hits = self.predict(x).iter().zip(labels).filter(|(p, l)| p == l).count();
        hits as f64 / labels.len() as f64
    }

    /// Mean cross-entropy and its gradient with respect to weights and bias.
    pub fn loss_and_grad(&self, x: ArrayView2<'_, f64>, labels: &[usize]) -> (f64, Array2<f64>, Array1<f64>) {
        let n = x.nrows() as f64;
        let mut p = self.logits(x);
        let mut loss = 0.0;
        for (mut row, &y) in p.outer_iter_mut().zip(labels) {
            let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            row.mapv_inplace(|v| (v - max).exp());
            let z = row.sum();
            row /= z;
            loss -= row[y].ln();
            row[y] -= 1.0;
        }
        p /= n;
        let dw = x.t().dot(&p);
        let db = p.sum_axis(Axis(0));
        (loss / n, dw, db)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeFit {
    pub probe: LinearProbe,
    pub train_accuracy: f64,
    pub final_loss: f64,
}

/// Full-batch gradient descent on the mean cross-entropy.
pub fn train_linear_probe(
    features: ArrayView2<'_, f64>,
    labels: &[usize],
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<ProbeFit> {
    if features.nrows() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} feature rows for {} labels",
            features.nrows(),
            labels.len()
        )));
    }
    let classes = labels.iter().max().map_or(0, |&m| m + 1);
    let mut seen = vec![false; classes];
    labels.iter().for_each(|&l| seen[l] = true);
    if seen.iter().filter(|&&s| s).count() < 2 {
        return Err(Error::DegenerateLabels("the probe needs at least two classes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = rand_distr::Normal::new(0.0, PROBE_INIT_STD).expect("valid normal");
    let mut probe = LinearProbe {
        weights: Array2::from_shape_simple_fn((features.ncols(), classes), || rng.sample(normal)),
        bias: Array1::zeros(classes),
    };
    let mut loss = f64::NAN;
    for _ in 0..epochs {
        let (l, dw, db) = probe.loss_and_grad(features, labels);
        loss = l;
        probe.weights.scaled_add(-lr, &dw);
        probe.bias.scaled_add(-lr, &db);
    }
    let train_accuracy = probe.accuracy(features, labels);
    Ok(ProbeFit { probe, train_accuracy, final_loss: loss })
}

/// Per-column standardization fitted on training features.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Array1<f64>,
    pub scale: Array1<f64>,
}

impl Standardizer {
    pub fn fit(x: ArrayView2<'_, f64>) -> Self {
        let mean = x.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(x.ncols()));
        let scale = x
            .std_axis(Axis(0), 0.0)
            .mapv(|s| if s > 1e-12 { 1.0 / s } else { 1.0 });
        Self { mean, scale }
    }

    pub fn apply(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        (&x - &self.mean) * &self.scale
    }
}
