//! Input-dependent (selective) diagonal state-space layer.

use ndarray::{s, Array1, Array2, ArrayView2};
use rand::Rng;
use rayon::prelude::*;

use super::lti::{discretize_scalar, DiscretizeMode};
use crate::nn::{join, softplus, visit_array1, visit_array1_mut, visit_array2, visit_array2_mut, Linear, Params, Real, Visit, VisitMut};

pub const DEFAULT_D_STATE: usize = 16;
pub const DT_MIN: f64 = 1e-3;
pub const DT_MAX: f64 = 1e-1;

/// Low-rank width of the step-size projection for model width `d_model`.
pub fn default_dt_rank(d_model: usize) -> usize {
    d_model.div_ceil(16).max(1)
}

/// Per token: `dt = softplus(dt_proj(x_proj_dt(x)))`, `B`, `C` from
/// `x_proj`, a diagonal scan per channel with `A = -exp(a_log)`, plus
/// `d_skip * x`.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectiveSsm<T> {
    /// `channels x d_state`.
    pub a_log: Array2<T>,
    /// `channels -> dt_rank + 2 d_state`, no bias.
    pub x_proj: Linear<T>,
    /// `dt_rank -> channels`.
    pub dt_proj: Linear<T>,
    pub d_skip: Array1<T>,
    pub mode: DiscretizeMode,
}

impl<T: Real> SelectiveSsm<T> {
    pub fn new<R: Rng>(rng: &mut R, channels: usize, d_state: usize, dt_rank: usize) -> Self {
        let a_log = Array2::from_shape_fn((channels, d_state), |(_, s)| T::of(((s + 1) as f64).ln()));
        let x_proj = Linear::new(rng, channels, dt_rank + 2 * d_state, false);
        let mut dt_proj = Linear::new(rng, dt_rank, channels, true);
        let (lo, hi) = (DT_MIN.ln(), DT_MAX.ln());
        dt_proj.bias = Some(Array1::from_shape_simple_fn(channels, || {
            let dt = rng.gen_range(lo..hi).exp();
            // Inverse softplus.
            T::of(dt + (-(-dt).exp_m1()).ln())
        }));
        Self {
            a_log,
            x_proj,
            dt_proj,
            d_skip: Array1::ones(channels),
            mode: DiscretizeMode::Euler,
        }
    }

    pub fn channels(&self) -> usize {
        self.a_log.nrows()
    }

    pub fn d_state(&self) -> usize {
        self.a_log.ncols()
    }

    pub fn dt_rank(&self) -> usize {
        self.dt_proj.d_in()
    }

    /// Continuous-time state matrix diagonal, `channels x d_state`.
    pub fn a(&self) -> Array2<T> {
        self.a_log.mapv(|v| -v.exp())
    }

    pub fn forward(&self, x: ArrayView2<'_, T>) -> Array2<T> {
        self.forward_with(x, rayon::current_num_threads() > 1)
    }

    /// Channels are independent, so the parallel path returns the same bits.
    pub fn forward_with(&self, x: ArrayView2<'_, T>, parallel: bool) -> Array2<T> {
        let (m, d) = x.dim();
        assert_eq!(d, self.channels(), "selective scan expects {} channels", self.channels());
        let (r, n) = (self.dt_rank(), self.d_state());
        let proj = self.x_proj.forward(x);
        let mut dt = self.dt_proj.forward(proj.slice(s![.., ..r]));
        dt.mapv_inplace(softplus);
        // Channel-major copies keep the per-channel scan on contiguous memory.
        let dt_t = dt.t().as_standard_layout().into_owned();
        let x_t = x.t().as_standard_layout().into_owned();
        let b = proj.slice(s![.., r..r + n]).as_standard_layout().into_owned();
        let c = proj.slice(s![.., r + n..]).as_standard_layout().into_owned();
        let (b, c) = (b.as_slice().expect("standard layout"), c.as_slice().expect("standard layout"));
        let a = self.a();
        let channel = |ch: usize| -> Vec<T> {
            let a_row = a.row(ch);
            let a_row = a_row.as_slice().expect("standard layout");
            let skip = self.d_skip[ch];
            let dt_row = dt_t.row(ch);
            let x_row = x_t.row(ch);
            let mut h = vec![T::zero(); n];
            dt_row
                .iter()
                .zip(x_row.iter())
                .enumerate()
                .map(|(t, (&dt_t, &x_t))| {
                    let (b_t, c_t) = (&b[t * n..(t + 1) * n], &c[t * n..(t + 1) * n]);
                    let mut y = T::zero();
                    for s in 0..n {
                        let (a_bar, b_bar) = discretize_scalar(dt_t, a_row[s], b_t[s], self.mode);
                        h[s] = a_bar * h[s] + b_bar * x_t;
                        y += c_t[s] * h[s];
                    }
                    y + skip * x_t
                })
                .collect()
        };
        let cols: Vec<Vec<T>> = if parallel {
            (0..d).into_par_iter().map(channel).collect()
        } else {
            (0..d).map(channel).collect()
        };
        Array2::from_shape_fn((m, d), |(t, ch)| cols[ch][t])
    }

    pub fn macs(&self, tokens: usize) -> u64 {
        let scan = (tokens * self.channels() * self.d_state() * 2) as u64;
        self.x_proj.macs(tokens) + self.dt_proj.macs(tokens) + scan
    }
}

impl<T: Real> Params<T> for SelectiveSsm<T> {
    fn visit(&self, prefix: &str, f: &mut Visit<'_, T>) {
        visit_array2(&self.a_log, &join(prefix, "a_log"), f);
        self.x_proj.visit(&join(prefix, "x_proj"), f);
        self.dt_proj.visit(&join(prefix, "dt_proj"), f);
        visit_array1(&self.d_skip, &join(prefix, "d_skip"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut VisitMut<'_, T>) {
        visit_array2_mut(&mut self.a_log, &join(prefix, "a_log"), f);
        self.x_proj.visit_mut(&join(prefix, "x_proj"), f);
        self.dt_proj.visit_mut(&join(prefix, "dt_proj"), f);
        visit_array1_mut(&mut self.d_skip, &join(prefix, "d_skip"), f);
    }
}

/// Free-function form of [`SelectiveSsm::forward`].
pub fn selective_ssm<T: Real>(x: ArrayView2<'_, T>, layer: &SelectiveSsm<T>) -> Array2<T> {
    layer.forward(x)
}
