//! Gated Mamba-style blocks built around [`SelectiveSsm`].

use ndarray::{s, Array1, Array2, ArrayView2, Zip};
use rand::Rng;

use super::selective::{default_dt_rank, SelectiveSsm, DEFAULT_D_STATE};
use crate::nn::{
    fan_in_uniform, join, silu, visit_array1, visit_array1_mut, visit_array2, visit_array2_mut, Linear,
    Params, Real, RmsNorm, Visit, VisitMut,
};

pub const DEFAULT_EXPAND: usize = 2;
pub const DEFAULT_CONV_WIDTH: usize = 4;

/// Shape of one Mamba block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockConfig {
    pub d_model: usize,
    pub expand: usize,
    pub d_state: usize,
    pub conv_width: usize,
    pub dt_rank: usize,
}

impl BlockConfig {
    pub fn new(d_model: usize) -> Self {
        Self {
            d_model,
            expand: DEFAULT_EXPAND,
            d_state: DEFAULT_D_STATE,
            conv_width: DEFAULT_CONV_WIDTH,
            dt_rank: default_dt_rank(d_model),
        }
    }

    pub fn d_inner(&self) -> usize {
        self.expand * self.d_model
    }
}

/// Depthwise causal convolution along the token axis, left-padded with zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalConv<T> {
    /// `width x channels`; row `width - 1` multiplies the current token.
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Real> CausalConv<T> {
    pub fn new<R: Rng>(rng: &mut R, channels: usize, width: usize) -> Self {
        Self {
            weight: fan_in_uniform(rng, (width, channels), width),
            bias: Array1::zeros(channels),
        }
    }

    pub fn forward(&self, x: ArrayView2<'_, T>) -> Array2<T> {
        let (m, c) = x.dim();
        let w = self.weight.nrows();
        let mut out = Array2::from_shape_fn((m, c), |(_, ch)| self.bias[ch]);
        for t in 0..m {
            for j in 0..w {
                let Some(src) = (t + j).checked_sub(w - 1) else { continue };
                Zip::from(out.row_mut(t))
                    .and(x.row(src))
                    .and(self.weight.row(j))
                    .for_each(|o, &v, &k| *o += k * v);
            }
        }
        out
    }
}

impl<T: Real> Params<T> for CausalConv<T> {
    fn visit(&self, prefix: &str, f: &mut Visit<'_, T>) {
        visit_array2(&self.weight, &join(prefix, "weight"), f);
        visit_array1(&self.bias, &join(prefix, "bias"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut VisitMut<'_, T>) {
        visit_array2_mut(&mut self.weight, &join(prefix, "weight"), f);
        visit_array1_mut(&mut self.bias, &join(prefix, "bias"), f);
    }
}

/// `ssm(silu(conv(xs))) * silu(z)` on the expanded channels.
#[derive(Debug, Clone, PartialEq)]
pub struct MambaBranch<T> {
    pub conv: CausalConv<T>,
    pub ssm: SelectiveSsm<T>,
}

impl<T: Real> MambaBranch<T> {
    pub fn new<R: Rng>(rng: &mut R, cfg: &BlockConfig) -> Self {
        Self {
            conv: CausalConv::new(rng, cfg.d_inner(), cfg.conv_width),
            ssm: SelectiveSsm::new(rng, cfg.d_inner(), cfg.d_state, cfg.dt_rank),
        }
    }

    pub fn forward(&self, xs: ArrayView2<'_, T>, z: ArrayView2<'_, T>) -> Array2<T> {
        let mut u = self.conv.forward(xs);
        u.mapv_inplace(silu);
        let mut y = self.ssm.forward(u.view());
        Zip::from(&mut y).and(&z).for_each(|y, &g| *y *= silu(g));
        y
    }

    pub fn macs(&self, tokens: usize) -> u64 {
        (tokens * self.conv.weight.len()) as u64 + self.ssm.macs(tokens)
    }
}

impl<T: Real> Params<T> for MambaBranch<T> {
    fn visit(&self, prefix: &str, f: &mut Visit<'_, T>) {
        self.conv.visit(&join(prefix, "conv"), f);
        self.ssm.visit(&join(prefix, "ssm"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut VisitMut<'_, T>) {
        self.conv.visit_mut(&join(prefix, "conv"), f);
        self.ssm.visit_mut(&join(prefix, "ssm"), f);
    }
}

fn split_in<T: Real>(in_proj: &Linear<T>, norm: &RmsNorm<T>, x: ArrayView2<'_, T>) -> (Array2<T>, Array2<T>) {
    let u = norm.forward(x);
    let xz = in_proj.forward(u.view());
    let e = xz.ncols() / 2;
    (xz.slice(s![.., ..e]).to_owned(), xz.slice(s![.., e..]).to_owned())
}

/// Unidirectional block: `x + out_proj(branch(in_proj(norm(x))))`.
#[derive(Debug, Clone, PartialEq)]
pub struct MambaBlock<T> {
    pub norm: RmsNorm<T>,
    pub in_proj: Linear<T>,
    pub branch: MambaBranch<T>,
    pub out_proj: Linear<T>,
}

impl<T: Real> MambaBlock<T> {
    pub fn new<R: Rng>(rng: &mut R, cfg: &BlockConfig) -> Self {
        Self {
            norm: RmsNorm::new(cfg.d_model),
            in_proj: Linear::new(rng, cfg.d_model, 2 * cfg.d_inner(), false),
            branch: MambaBranch::new(rng, cfg),
            out_proj: Linear::new(rng, cfg.d_inner(), cfg.d_model, false),
        }
    }

    pub fn forward(&self, x: ArrayView2<'_, T>) -> Array2<T> {
        let (xs, z) = split_in(&self.in_proj, &self.norm, x);
        let y = self.branch.forward(xs.view(), z.view());
        self.out_proj.forward(y.view()) + x
    }
}

impl<T: Real> Params<T> for MambaBlock<T> {
    fn visit(&self, prefix: &str, f: &mut Visit<'_, T>) {
        self.norm.visit(&join(prefix, "norm"), f);
        self.in_proj.visit(&join(prefix, "in_proj"), f);
        self.branch.visit(&join(prefix, "branch"), f);
        self.out_proj.visit(&join(prefix, "out_proj"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut VisitMut<'_, T>) {
        self.norm.visit_mut(&join(prefix, "norm"), f);
        self.in_proj.visit_mut(&join(prefix, "in_proj"), f);
        self.branch.visit_mut(&join(prefix, "branch"), f);
        self.out_proj.visit_mut(&join(prefix, "out_proj"), f);
    }
}

/// Free-function form of [`MambaBlock::forward`].
pub fn mamba_block<T: Real>(x: ArrayView2<'_, T>, layer: &MambaBlock<T>) -> Array2<T> {
    layer.forward(x)
}

/// Bidirectional block with one residual:
/// `x + out_proj(fwd(u) + reverse(bwd(reverse(u))))`, `u = in_proj(norm(x))`.
///
/// The normalization and the in/out projections are shared; each direction
/// has its own convolution and selective scan.
#[derive(Debug, Clone, PartialEq)]
pub struct BiMamba<T> {
    pub norm: RmsNorm<T>,
    pub in_proj: Linear<T>,
    pub fwd: MambaBranch<T>,
    pub bwd: MambaBranch<T>,
    pub out_proj: Linear<T>,
}

impl<T: Real> BiMamba<T> {
    pub fn new<R: Rng>(rng: &mut R, cfg: &BlockConfig) -> Self {
        Self {
            norm: RmsNorm::new(cfg.d_model),
            in_proj: Linear::new(rng, cfg.d_model, 2 * cfg.d_inner(), false),
            fwd: MambaBranch::new(rng, cfg),
            bwd: MambaBranch::new(rng, cfg),
            out_proj: Linear::new(rng, cfg.d_inner(), cfg.d_model, false),
        }
    }

    pub fn d_model(&self) -> usize {
        self.norm.scale.len()
    }

    pub fn forward(&self, x: ArrayView2<'_, T>) -> Array2<T> {
        let (xs, z) = split_in(&self.in_proj, &self.norm, x);
        let mut y = self.fwd.forward(xs.view(), z.view());
        let rev = self.bwd.forward(xs.slice(s![..;-1, ..]), z.slice(s![..;-1, ..]));
        y += &rev.slice(s![..;-1, ..]);
        self.out_proj.forward(y.view()) + x
    }

    /// Exchanges the per-direction parameter sets.
    pub fn swap_directions(&mut self) {
        std::mem::swap(&mut self.fwd, &mut self.bwd);
    }

    pub fn macs(&self, tokens: usize) -> u64 {
        self.in_proj.macs(tokens)
            + self.fwd.macs(tokens)
            + self.bwd.macs(tokens)
            + self.out_proj.macs(tokens)
    }
}

impl<T: Real> Params<T> for BiMamba<T> {
    fn visit(&self, prefix: &str, f: &mut Visit<'_, T>) {
        self.norm.visit(&join(prefix, "norm"), f);
        self.in_proj.visit(&join(prefix, "in_proj"), f);
        self.fwd.visit(&join(prefix, "fwd"), f);
        self.bwd.visit(&join(prefix, "bwd"), f);
        self.out_proj.visit(&join(prefix, "out_proj"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut VisitMut<'_, T>) {
        self.norm.visit_mut(&join(prefix, "norm"), f);
        self.in_proj.visit_mut(&join(prefix, "in_proj"), f);
        self.fwd.visit_mut(&join(prefix, "fwd"), f);
        self.bwd.visit_mut(&join(prefix, "bwd"), f);
        self.out_proj.visit_mut(&join(prefix, "out_proj"), f);
    }
}

/// Free-function form of [`BiMamba::forward`].
pub fn bidirectional_mamba<T: Real>(x: ArrayView2<'_, T>, layer: &BiMamba<T>) -> Array2<T> {
    layer.forward(x)
}
