//! Geometric affine normalization and max-pooled local aggregation.

use ndarray::{s, Array1, Array2, Array3, ArrayView2, ArrayView3, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{join, relu, visit_array1, visit_array1_mut, Linear, Params, Real, ResidualBlock, RmsNorm, Visit, VisitMut};
use crate::sample::NeighborhoodIndex;
use crate::{Error, Result};

pub const DEFAULT_GAM_DELTA: f64 = 1e-5;
pub const DEFAULT_K_NEIGHBORS: usize = 12;

/// Scope of the deviation RMS used by the affine normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaMode {
    /// One scalar over every center, neighbour and channel.
    #[default]
    Global,
    /// One scalar per center.
    PerCenter,
}

/// Learnable scale and shift of the affine normalization.
///
/// `delta` is positive in every built model; zero is accepted so the bare
/// RMS normalization can be inspected.
#[derive(Debug, Clone, PartialEq)]
pub struct GamParams<T> {
    pub alpha: Array1<T>,
    pub beta: Option<Array1<T>>,
    pub delta: T,
}

impl<T: Real> GamParams<T> {
    pub fn new(d: usize) -> Self {
        Self {
            alpha: Array1::ones(d),
            beta: Some(Array1::zeros(d)),
            delta: T::of(DEFAULT_GAM_DELTA),
        }
    }

    pub fn channels(&self) -> usize {
        self.alpha.len()
    }
}

impl<T: Real> Params<T> for GamParams<T> {
    fn visit(&self, prefix: &str, f: &mut Visit<'_, T>) {
        visit_array1(&self.alpha, &join(prefix, "alpha"), f);
        if let Some(b) = &self.beta {
            visit_array1(b, &join(prefix, "beta"), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut VisitMut<'_, T>) {
        visit_array1_mut(&mut self.alpha, &join(prefix, "alpha"), f);
        if let Some(b) = &mut self.beta {
            visit_array1_mut(b, &join(prefix, "beta"), f);
        }
    }
}

fn check_shapes<T>(nbr: &ArrayView3<'_, T>, center: &ArrayView2<'_, T>) {
    let (m, _, d) = nbr.dim();
    assert_eq!(
        center.dim(),
        (m, d),
        "center features must be M x D for an M x K x D neighbourhood"
    );
}

fn squared_deviation<T: Real>(nbr: ArrayView2<'_, T>, center: ndarray::ArrayView1<'_, T>) -> f64 {
    let mut acc = 0.0;
    for row in nbr.rows() {
        for (&f, &c) in row.iter().zip(center) {
            let d = f.to_f64() - c.to_f64();
            acc += d * d;
        }
    }
    acc
}

/// Root mean square of all neighbour-minus-center deviations.
pub fn gam_sigma<T: Real>(nbr: ArrayView3<'_, T>, center: ArrayView2<'_, T>) -> f64 {
    check_shapes(&nbr, &center);
    let count = nbr.len();
    if count == 0 {
        return 0.0;
    }
    let total: f64 = nbr
        .outer_iter()
        .zip(center.outer_iter())
        .map(|(n, c)| squared_deviation(n, c))
        .sum();
    (total / count as f64).sqrt()
}

/// Deviation RMS of each center's neighbourhood.
pub fn gam_sigma_per_center<T: Real>(nbr: ArrayView3<'_, T>, center: ArrayView2<'_, T>) -> Vec<f64> {
    check_shapes(&nbr, &center);
    let per = (nbr.dim().1 * nbr.dim().2).max(1) as f64;
    nbr.outer_iter()
        .zip(center.outer_iter())
        .map(|(n, c)| (squared_deviation(n, c) / per).sqrt())
        .collect()
}

/// `alpha * (f_ij - f_i) / (sigma + delta) + beta`.
pub fn gam_normalize<T: Real>(
    nbr: ArrayView3<'_, T>,
    center: ArrayView2<'_, T>,
    params: &GamParams<T>,
    mode: SigmaMode,
) -> Array3<T> {
    let (m, k, d) = nbr.dim();
    assert_eq!(params.channels(), d, "affine parameters must match the channel count");
    let sigmas = match mode {
        SigmaMode::Global => vec![gam_sigma(nbr, center); m],
        SigmaMode::PerCenter => gam_sigma_per_center(nbr, center),
    };
    let mut out = Array3::zeros((m, k, d));
    for i in 0..m {
        let denom = T::of(sigmas[i]) + params.delta;
        let inv = if denom > T::zero() { T::one() / denom } else { T::zero() };
        for j in 0..k {
            for c in 0..d {
                let mut v = params.alpha[c] * ((nbr[[i, j, c]] - center[[i, c]]) * inv);
                if let Some(b) = &params.beta {
                    v += b[c];
                }
                out[[i, j, c]] = v;
            }
        }
    }
    out
}

/// Per-stage local feature extractor.
///
/// The normalized neighbour deviations are concatenated with the center
/// feature, mapped to the stage width, refined by `phi1` per neighbour,
/// max-pooled over the neighbourhood and refined by `phi2` per center.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalAggregator<T> {
    pub gam: GamParams<T>,
    pub transfer: Linear<T>,
    pub transfer_norm: RmsNorm<T>,
    pub phi1: ResidualBlock<T>,
    pub phi2: ResidualBlock<T>,
    pub sigma_mode: SigmaMode,
}

impl<T: Real> LocalAggregator<T> {
    pub fn new<R: Rng>(rng: &mut R, d_in: usize, d_out: usize, sigma_mode: SigmaMode) -> Self {
        Self {
            gam: GamParams::new(d_in),
            transfer: Linear::new(rng, 2 * d_in, d_out, true),
            transfer_norm: RmsNorm::new(d_out),
            phi1: ResidualBlock::new(rng, d_out),
            phi2: ResidualBlock::new(rng, d_out),
            sigma_mode,
        }
    }

    pub fn d_in(&self) -> usize {
        self.gam.channels()
    }

    pub fn d_out(&self) -> usize {
        self.transfer.d_out()
    }

    /// Aggregates `features[neighbors]` around `features[centers]`.
    pub fn forward(&self, features: ArrayView2<'_, T>, nbhd: &NeighborhoodIndex) -> Result<Array2<T>> {
        if features.ncols() != self.d_in() {
            return Err(Error::Config(format!(
                "local aggregation expects {} channels, got {}",
                self.d_in(),
                features.ncols()
            )));
        }
        let rows = features.nrows();
        if let Some(&bad) = nbhd.centers.iter().chain(&nbhd.neighbors).find(|&&i| i >= rows) {
            return Err(Error::InvalidArgument(format!(
                "neighbourhood index {bad} out of range for {rows} points"
            )));
        }
        let (m, k, d) = (nbhd.len(), nbhd.k, self.d_in());
        let mut nbr = Array3::zeros((m, k, d));
        for (i, row) in nbhd.rows().enumerate() {
            for (j, &n) in row.iter().enumerate() {
                nbr.slice_mut(s![i, j, ..]).assign(&features.row(n));
            }
        }
        let center = features.select(Axis(0), &nbhd.centers);
        self.forward_grouped(nbr.view(), center.view())
    }

    /// Aggregation over an explicit `M x K x D` neighbourhood tensor.
    pub fn forward_grouped(&self, nbr: ArrayView3<'_, T>, center: ArrayView2<'_, T>) -> Result<Array2<T>> {
        let (m, k, d) = nbr.dim();
        if d != self.d_in() || center.dim() != (m, d) {
            return Err(Error::Config(format!(
                "local aggregation expects {} channels for {m} centers, got {:?} and {:?}",
                self.d_in(),
                nbr.dim(),
                center.dim()
            )));
        }
        if k == 0 {
            return Err(Error::InvalidArgument("neighbourhood size must be at least 1".into()));
        }
        let g = gam_normalize(nbr, center, &self.gam, self.sigma_mode);
        let mut cat = Array2::zeros((m * k, 2 * d));
        for i in 0..m {
            for j in 0..k {
                let r = i * k + j;
                cat.slice_mut(s![r, ..d]).assign(&g.slice(s![i, j, ..]));
                cat.slice_mut(s![r, d..]).assign(&center.row(i));
            }
        }
        let mut h = self.transfer.forward(cat.view());
        self.transfer_norm.forward_inplace(&mut h);
        h.mapv_inplace(relu);
        let h = self.phi1.forward(h.view());
        let width = self.d_out();
        let mut pooled = Array2::from_elem((m, width), T::neg_infinity());
        for (r, row) in h.outer_iter().enumerate() {
            let mut p = pooled.row_mut(r / k);
            for (o, &v) in p.iter_mut().zip(row) {
                if v > *o {
                    *o = v;
                }
            }
        }
        Ok(self.phi2.forward(pooled.view()))
    }

    pub fn macs(&self, centers: usize, k: usize) -> u64 {
        let rows = centers * k;
        self.transfer.macs(rows) + self.phi1.macs(rows) + self.phi2.macs(centers)
    }
}

impl<T: Real> Params<T> for LocalAggregator<T> {
    fn visit(&self, prefix: &str, f: &mut Visit<'_, T>) {
        self.gam.visit(&join(prefix, "gam"), f);
        self.transfer.visit(&join(prefix, "transfer"), f);
        self.transfer_norm.visit(&join(prefix, "transfer_norm"), f);
        self.phi1.visit(&join(prefix, "phi1"), f);
        self.phi2.visit(&join(prefix, "phi2"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut VisitMut<'_, T>) {
        self.gam.visit_mut(&join(prefix, "gam"), f);
        self.transfer.visit_mut(&join(prefix, "transfer"), f);
        self.transfer_norm.visit_mut(&join(prefix, "transfer_norm"), f);
        self.phi1.visit_mut(&join(prefix, "phi1"), f);
        self.phi2.visit_mut(&join(prefix, "phi2"), f);
    }
}

/// Free-function form of [`LocalAggregator::forward`].
pub fn local_aggregate<T: Real>(
    features: ArrayView2<'_, T>,
    nbhd: &NeighborhoodIndex,
    agg: &LocalAggregator<T>,
) -> Result<Array2<T>> {
    agg.forward(features, nbhd)
}
