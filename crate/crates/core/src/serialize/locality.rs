use std::collections::HashSet;

use super::{quantize_coords, SerializationOrder};
use crate::pointset::{PermutationIndex, Point3};
use crate::sample::neighbors_excluding_self;
use crate::{Error, Result};

/// How well a serialization keeps sequence neighbours close in space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalityMetrics {
    /// Mean Euclidean distance between consecutive points in sequence order.
    pub mean_gap: f64,
    /// Fraction of consecutive pairs where one point is among the other's
    /// `window` nearest neighbours.
    pub adjacency_rate: f64,
}

pub fn locality_metrics(
    coords: &[Point3],
    perm: &PermutationIndex,
    window: usize,
) -> Result<LocalityMetrics> {
    let n = coords.len();
    if n < 2 {
        return Err(Error::UndefinedMetric(
            "locality needs at least two points".into(),
        ));
    }
    if perm.len() != n {
        return Err(Error::InvalidArgument(format!(
            "permutation length {} does not match {n} points",
            perm.len()
        )));
    }
    if window == 0 {
        return Err(Error::InvalidArgument("window must be at least 1".into()));
    }
    let order = perm.as_slice();
    let mut gap_sum = 0.0;
    for w in order.windows(2) {
        gap_sum += dist(&coords[w[0]], &coords[w[1]]);
    }
    let neighbors = neighbors_excluding_self(coords, window.min(n - 1));
    let adjacent = order
        .windows(2)
        .filter(|w| neighbors[w[0]].contains(&w[1]) || neighbors[w[1]].contains(&w[0]))
        .count();
    let pairs = (n - 1) as f64;
    Ok(LocalityMetrics {
        mean_gap: gap_sum / pairs,
        adjacency_rate: adjacent as f64 / pairs,
    })
}

fn dist(a: &Point3, b: &Point3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Number of occupied cells whose code is shared with another occupied cell
/// (distinct occupied cells minus distinct codes).
pub fn code_collisions(coords: &[Point3], order: SerializationOrder, grid_n: u64) -> Result<usize> {
    let cells: HashSet<[u32; 3]> = quantize_coords(coords, grid_n)?.cells.into_iter().collect();
    let mut codes = HashSet::with_capacity(cells.len());
    for &c in &cells {
        codes.insert(order.code(c, grid_n)?);
    }
    Ok(cells.len() - codes.len())
}
