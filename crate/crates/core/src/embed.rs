//! Coordinate positional maps and learnable order prompts.

use std::collections::BTreeMap;

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::Normal;

use crate::nn::{join, visit_array2, visit_array2_mut, Linear, Params, Real, Visit, VisitMut};
use crate::pointset::Point3;
use crate::serialize::OrderKind;
use crate::{Error, Result};

pub const DEFAULT_N_PROMPTS: usize = 6;
pub const DEFAULT_PROMPT_WIDTH: usize = 64;
pub const PROMPT_INIT_STD: f64 = 0.02;

pub(crate) fn coords_matrix<T: Real>(coords: &[Point3]) -> Array2<T> {
    Array2::from_shape_fn((coords.len(), 3), |(i, a)| T::of(coords[i][a]))
}

/// Affine map from coordinates to a stage's channel width.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionalMap<T> {
    pub map: Linear<T>,
}

impl<T: Real> PositionalMap<T> {
    pub fn new<R: Rng>(rng: &mut R, d: usize) -> Self {
        Self { map: Linear::new(rng, 3, d, true) }
    }

    pub fn width(&self) -> usize {
        self.map.d_out()
    }

    pub fn forward(&self, coords: &[Point3]) -> Array2<T> {
        self.map.forward(coords_matrix::<T>(coords).view())
    }
}

impl<T: Real> Params<T> for PositionalMap<T> {
    fn visit(&self, prefix: &str, f: &mut Visit<'_, T>) {
        self.map.visit(prefix, f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut VisitMut<'_, T>) {
        self.map.visit_mut(prefix, f);
    }
}

/// Free-function form of [`PositionalMap::forward`].
pub fn positional_embed<T: Real>(coords: &[Point3], map: &PositionalMap<T>) -> Array2<T> {
    map.forward(coords)
}

/// `N_p x P` prompts per serialization order and one shared `P -> D`
/// projection per stage.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderPromptBank<T> {
    pub n_p: usize,
    pub prompts: BTreeMap<OrderKind, Array2<T>>,
    pub projections: Vec<Linear<T>>,
}

impl<T: Real> OrderPromptBank<T> {
    /// `stage_orders[s]` lists the orders used in stage `s`, whose width is
    /// `stage_widths[s]`.
    pub fn new<R: Rng>(
        rng: &mut R,
        n_p: usize,
        width: usize,
        stage_orders: &[Vec<OrderKind>],
        stage_widths: &[usize],
    ) -> Self {
        let normal = Normal::new(0.0, PROMPT_INIT_STD).expect("valid normal");
        let mut prompts = BTreeMap::new();
        for &order in stage_orders.iter().flatten() {
            prompts
                .entry(order)
                .or_insert_with(|| Array2::from_shape_simple_fn((n_p, width), || T::of(rng.sample(normal))));
        }
        let projections = stage_widths.iter().map(|&d| Linear::new(rng, width, d, true)).collect();
        Self { n_p, prompts, projections }
    }

    pub fn width(&self) -> usize {
        self.projections.first().map_or(0, Linear::d_in)
    }

    /// The order's prompts in the stage's channel width.
    pub fn projected(&self, order: OrderKind, stage: usize) -> Result<Array2<T>> {
        let p = self
            .prompts
            .get(&order)
            .ok_or_else(|| Error::Config(format!("no prompts for order {order}")))?;
        let proj = self
            .projections
            .get(stage)
            .ok_or_else(|| Error::Config(format!("no prompt projection for stage {stage}")))?;
        Ok(proj.forward(p.view()))
    }
}

impl<T: Real> Params<T> for OrderPromptBank<T> {
    fn visit(&self, prefix: &str, f: &mut Visit<'_, T>) {
        for (order, p) in &self.prompts {
            visit_array2(p, &join(prefix, &format!("prompts.{order}")), f);
        }
        for (s, proj) in self.projections.iter().enumerate() {
            proj.visit(&join(prefix, &format!("proj.{s}")), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut VisitMut<'_, T>) {
        for (order, p) in self.prompts.iter_mut() {
            visit_array2_mut(p, &join(prefix, &format!("prompts.{order}")), f);
        }
        for (s, proj) in self.projections.iter_mut().enumerate() {
            proj.visit_mut(&join(prefix, &format!("proj.{s}")), f);
        }
    }
}

/// Prepends and appends the order's projected prompts.
pub fn attach_prompts<T: Real>(
    seq: ArrayView2<'_, T>,
    order: OrderKind,
    bank: &OrderPromptBank<T>,
    stage: usize,
) -> Result<Array2<T>> {
    let p = bank.projected(order, stage)?;
    if p.ncols() != seq.ncols() {
        return Err(Error::Config(format!(
            "prompt width {} does not match sequence width {}",
            p.ncols(),
            seq.ncols()
        )));
    }
    Ok(concatenate![Axis(0), p.view(), seq, p.view()])
}

/// Drops `n_p` tokens from each end.
pub fn strip_prompts<T: Real>(seq: ArrayView2<'_, T>, n_p: usize) -> Result<Array2<T>> {
    let m = seq.nrows();
    if m < 2 * n_p {
        return Err(Error::InvalidArgument(format!(
            "sequence of {m} tokens is shorter than {} prompt tokens",
            2 * n_p
        )));
    }
    Ok(seq.slice(s![n_p..m - n_p, ..]).to_owned())
}
