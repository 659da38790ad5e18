//! Wall-clock scaling of the bidirectional Mamba stack against full attention.

use std::hint::black_box;
use std::time::Instant;

use ndarray::{Array2, ArrayView2, Axis};
use pcm_core::nn::Linear;
use pcm_core::ssm::{BiMamba, BlockConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::report::{Report, Section};
use crate::{CliError, CliResult};

/// Bidirectional layers in the timed stack.
pub const BENCH_LAYERS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    Ssm,
    AttentionBaseline,
}

impl Kernel {
    pub fn name(self) -> &'static str {
        match self {
            Self::Ssm => "ssm",
            Self::AttentionBaseline => "attention_baseline",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub n_points: usize,
    pub kernel: Kernel,
    pub min_seconds: f64,
    pub median_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub channels: usize,
    pub repeat: usize,
    /// Sorted by `n_points`; the SSM row comes first at each length.
    pub rows: Vec<BenchRow>,
    pub ssm_exponent: f64,
    pub attention_exponent: Option<f64>,
}

impl BenchReport {
    pub fn to_report(&self) -> Report {
        let mut r = Report::default();
        r.push(Section::new("bench").kv("channels", self.channels).kv("repeat", self.repeat).kv("layers", BENCH_LAYERS));
        for row in &self.rows {
            r.push(
                Section::new("timing")
                    .kv("kernel", row.kernel.name())
                    .kv("n_points", row.n_points)
                    .kv("min_seconds", format!("{:.6}", row.min_seconds))
                    .kv("median_seconds", format!("{:.6}", row.median_seconds)),
            );
        }
        let mut fit = Section::new("scaling").kv("ssm_exponent", format!("{:.4}", self.ssm_exponent));
        if let Some(e) = self.attention_exponent {
            fit.push("attention_baseline_exponent", format!("{e:.4}"));
        }
        r.push(fit);
        r
    }
}

/// Slope of the least-squares line through `(ln n, ln t)`.
pub fn fit_exponent(ns: &[usize], times: &[f64]) -> f64 {
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let k = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Single-head softmax attention with an explicit `M x M` score matrix.
#[derive(Debug, Clone)]
pub struct NaiveAttention {
    q: Linear<f32>,
    k: Linear<f32>,
    v: Linear<f32>,
}

impl NaiveAttention {
    pub fn new<R: Rng>(rng: &mut R, d: usize) -> Self {
        Self { q: Linear::new(rng, d, d, false), k: Linear::new(rng, d, d, false), v: Linear::new(rng, d, d, false) }
    }

    pub fn forward(&self, x: ArrayView2<'_, f32>) -> Array2<f32> {
        let (q, k, v) = (self.q.forward(x), self.k.forward(x), self.v.forward(x));
        let scale = 1.0 / (x.ncols() as f32).sqrt();
        let mut scores = q.dot(&k.t()) * scale;
        for mut row in scores.axis_iter_mut(Axis(0)) {
            let max = row.fold(f32::NEG_INFINITY, |m, &v| m.max(v));
            row.mapv_inplace(|v| (v - max).exp());
            let z = row.sum();
            row /= z;
        }
        scores.dot(&v)
    }
}

fn time_runs(repeat: usize, mut f: impl FnMut()) -> (f64, f64) {
    f();
    let mut t: Vec<f64> = (0..repeat)
        .map(|_| {
            let start = Instant::now();
            f();
            start.elapsed().as_secs_f64()
        })
        .collect();
    t.sort_by(f64::total_cmp);
    (t[0], t[t.len() / 2])
}

pub fn run_bench(lengths: &[usize], channels: usize, repeat: usize, attention: bool, seed: u64) -> CliResult<BenchReport> {
    if lengths.len() < 2 {
        return Err(CliError::Usage("--lengths needs at least two values to fit an exponent".into()));
    }
    if lengths[0] == 0 || lengths.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CliError::Usage(format!("--lengths must be positive and strictly increasing, got {lengths:?}")));
    }
    if channels == 0 || repeat == 0 {
        return Err(CliError::Usage("--channels and --repeat must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = BlockConfig::new(channels);
    let stack: Vec<BiMamba<f32>> = (0..BENCH_LAYERS).map(|_| BiMamba::new(&mut rng, &cfg)).collect();
    let attn = NaiveAttention::new(&mut rng, channels);
    let max_len = *lengths.last().expect("checked non-empty");
    let tokens = Array2::from_shape_simple_fn((max_len, channels), || rng.gen_range(-1.0f32..1.0));

    let mut rows = Vec::new();
    let mut kernels = vec![Kernel::Ssm];
    if attention {
        kernels.push(Kernel::AttentionBaseline);
    }
    for &n in lengths {
        for &kernel in &kernels {
            let x = tokens.slice(ndarray::s![..n, ..]);
            let (min, median) = time_runs(repeat, || match kernel {
                Kernel::Ssm => {
                    let mut h = x.to_owned();
                    for layer in &stack {
                        h = layer.forward(h.view());
                    }
                    black_box(h);
                }
                Kernel::AttentionBaseline => {
                    black_box(attn.forward(x));
                }
            });
            rows.push(BenchRow { n_points: n, kernel, min_seconds: min, median_seconds: median });
        }
    }
    let exponent = |k: Kernel| {
        let sel: Vec<&BenchRow> = rows.iter().filter(|r| r.kernel == k).collect();
        let ns: Vec<usize> = sel.iter().map(|r| r.n_points).collect();
        let ts: Vec<f64> = sel.iter().map(|r| r.median_seconds).collect();
        fit_exponent(&ns, &ts)
    };
    Ok(BenchReport {
        channels,
        repeat,
        ssm_exponent: exponent(Kernel::Ssm),
        attention_exponent: attention.then(|| exponent(Kernel::AttentionBaseline)),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponent_of_power_laws() {
        let ns = [100, 200, 400, 800];
        for p in [1.0, 2.0, 1.5] {
            let ts: Vec<f64> = ns.iter().map(|&n| 3e-6 * (n as f64).powf(p)).collect();
            assert!((fit_exponent(&ns, &ts) - p).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut v = Linear::zeros(4, 4, false);
        v.weight.row_mut(0).fill(1.0);
        let a = NaiveAttention { q: Linear::new(&mut rng, 4, 4, false), k: Linear::new(&mut rng, 4, 4, false), v };
        let x = Array2::from_shape_fn((5, 4), |(i, j)| if j == 0 { 1.0 } else { (i * j) as f32 * 0.1 });
        let y = a.forward(x.view());
        assert!(y.iter().all(|v| (v - 1.0).abs() < 1e-6));
    }

    #[test]
    fn rejects_bad_lengths() {
        assert!(matches!(run_bench(&[64, 32], 8, 1, false, 0), Err(CliError::Usage(_))));
        assert!(matches!(run_bench(&[64], 8, 1, false, 0), Err(CliError::Usage(_))));
        let r = run_bench(&[16, 32], 8, 3, true, 0).unwrap();
        assert_eq!(r.rows.len(), 4);
        assert!(r.rows.iter().all(|row| row.min_seconds <= row.median_seconds));
    }
}
