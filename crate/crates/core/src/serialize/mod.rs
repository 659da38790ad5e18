//! 3-D to 1-D point orderings.
//!
//! A point's unit-cube coordinates are quantized onto a `grid_n^3` lattice
//! and each cell receives an integer code; sorting by code serializes the
//! cloud. Four code families are available: the snake traversal in six axis
//! orders (`xyz` ... `zyx`), Morton (`z`), Morton with rotated axis roles
//! (`z-trans`), and Hilbert.

mod curve;
mod locality;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use curve::{
    code_func, cts_code, curve_bits, hilbert_code, morton_code, MAX_CTS_GRID, MAX_CURVE_BITS,
};
pub use locality::{code_collisions, locality_metrics, LocalityMetrics};

pub use crate::pointset::PermutationIndex;
use crate::pointset::{canonical_ranks, NormalizedCloud, Point3};
use crate::{Error, Result};

/// Default lattice resolution used inside the model.
pub const DEFAULT_GRID_N: u64 = 64;

/// Row-code convention for the snake traversal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodeMode {
    /// The row formula exactly as originally written; collides at row ends.
    PaperLiteral,
    /// Odd rows shifted by one so codes are a bijection onto `[0, n^3)`.
    #[default]
    Bijective,
}

impl FromStr for CodeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" | "paper_literal" => Ok(Self::PaperLiteral),
            "bijective" => Ok(Self::Bijective),
            other => Err(Error::InvalidArgument(format!(
                "unknown code mode '{other}' (expected paper|bijective)"
            ))),
        }
    }
}

/// Assignment of the three cell axes to traversal roles.
///
/// `p[i] = cell[perm[i]]`: `p[0]` varies fastest, `p[2]` slowest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AxisPerm([u8; 3]);

impl AxisPerm {
    pub const XYZ: Self = Self([0, 1, 2]);
    pub const XZY: Self = Self([0, 2, 1]);
    pub const YXZ: Self = Self([1, 0, 2]);
    pub const YZX: Self = Self([1, 2, 0]);
    pub const ZXY: Self = Self([2, 0, 1]);
    pub const ZYX: Self = Self([2, 1, 0]);
    pub const ALL: [Self; 6] = [
        Self::XYZ,
        Self::XZY,
        Self::YXZ,
        Self::YZX,
        Self::ZXY,
        Self::ZYX,
    ];

    pub fn new(perm: [u8; 3]) -> Result<Self> {
        let mut sorted = perm;
        sorted.sort_unstable();
        if sorted != [0, 1, 2] {
            return Err(Error::InvalidArgument(format!(
                "{perm:?} is not a permutation of (0, 1, 2)"
            )));
        }
        Ok(Self(perm))
    }

    pub fn axes(self) -> [u8; 3] {
        self.0
    }

    #[inline]
    pub fn apply(self, cell: [u32; 3]) -> [u32; 3] {
        self.0.map(|a| cell[a as usize])
    }

    pub fn name(self) -> String {
        self.0.iter().map(|&a| ['x', 'y', 'z'][a as usize]).collect()
    }
}

/// Which code family orders the points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum OrderKind {
    Cts(AxisPerm),
    Z,
    ZTrans,
    Hilbert,
}

impl OrderKind {
    /// All nine accepted order names, snake variants first.
    pub const ALL: [Self; 9] = [
        Self::Cts(AxisPerm::XYZ),
        Self::Cts(AxisPerm::XZY),
        Self::Cts(AxisPerm::YXZ),
        Self::Cts(AxisPerm::YZX),
        Self::Cts(AxisPerm::ZXY),
        Self::Cts(AxisPerm::ZYX),
        Self::Hilbert,
        Self::Z,
        Self::ZTrans,
    ];

    pub fn name(self) -> String {
        match self {
            Self::Cts(p) => p.name(),
            Self::Z => "z".into(),
            Self::ZTrans => "z-trans".into(),
            Self::Hilbert => "hilbert".into(),
        }
    }

    pub fn valid_names() -> String {
        Self::ALL.map(|k| k.name()).join(", ")
    }
}

impl fmt::Display for OrderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for OrderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown serialization order '{s}' (valid: {})",
                    Self::valid_names()
                ))
            })
    }
}

impl TryFrom<String> for OrderKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<OrderKind> for String {
    fn from(k: OrderKind) -> Self {
        k.name()
    }
}

/// A named ordering rule. `mode` only affects snake orders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SerializationOrder {
    pub kind: OrderKind,
    pub mode: CodeMode,
}

impl SerializationOrder {
    pub fn new(kind: OrderKind) -> Self {
        Self {
            kind,
            mode: CodeMode::Bijective,
        }
    }

    pub fn with_mode(kind: OrderKind, mode: CodeMode) -> Self {
        Self { kind, mode }
    }

    /// Code of one cell. Callers must have validated `grid_n` and the cell range.
    fn code_unchecked(&self, cell: [u32; 3], grid_n: u64, bits: u32) -> u64 {
        match self.kind {
            OrderKind::Cts(perm) => curve::cts_code_unchecked(cell, grid_n, perm, self.mode),
            OrderKind::Z => curve::morton_unchecked(cell),
            OrderKind::ZTrans => curve::morton_unchecked([cell[1], cell[2], cell[0]]),
            OrderKind::Hilbert => curve::hilbert_unchecked(cell, bits),
        }
    }

    /// Code of a cell, with range checks.
    pub fn code(&self, cell: [u32; 3], grid_n: u64) -> Result<u64> {
        match self.kind {
            OrderKind::Cts(perm) => cts_code(cell, grid_n, perm, self.mode),
            OrderKind::Z => morton_code(cell, grid_n),
            OrderKind::ZTrans => morton_code([cell[1], cell[2], cell[0]], grid_n),
            OrderKind::Hilbert => hilbert_code(cell, grid_n),
        }
    }

    fn check_grid(&self, grid_n: u64) -> Result<u32> {
        match self.kind {
            OrderKind::Cts(_) => curve::check_cts_grid(grid_n).map(|_| 0),
            _ => curve_bits(grid_n),
        }
    }
}

impl From<OrderKind> for SerializationOrder {
    fn from(kind: OrderKind) -> Self {
        Self::new(kind)
    }
}

/// Quantized lattice coordinates, every index in `[0, grid_n)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridCoords {
    pub cells: Vec<[u32; 3]>,
    pub grid_n: u64,
}

/// `cell = floor(coord * grid_n)`, with `coord == 1` clamped into the last cell.
pub fn grid_quantize(cloud: &NormalizedCloud, grid_n: u64) -> Result<GridCoords> {
    quantize_coords(cloud.coords(), grid_n)
}

/// As [`grid_quantize`] on raw unit-cube coordinates.
pub fn quantize_coords(coords: &[Point3], grid_n: u64) -> Result<GridCoords> {
    if grid_n == 0 {
        return Err(Error::InvalidArgument("grid_n must be positive".into()));
    }
    if grid_n > u64::from(u32::MAX) {
        return Err(Error::InvalidArgument(format!("grid_n = {grid_n} is too large")));
    }
    let n = grid_n as f64;
    let last = (grid_n - 1) as u32;
    let cells = coords
        .iter()
        .map(|p| p.map(|c| ((c * n).floor().max(0.0) as u64).min(u64::from(last)) as u32))
        .collect();
    Ok(GridCoords { cells, grid_n })
}

/// Codes of every point under `order`.
pub fn point_codes(coords: &[Point3], order: SerializationOrder, grid_n: u64) -> Result<Vec<u64>> {
    let bits = order.check_grid(grid_n)?;
    let grid = quantize_coords(coords, grid_n)?;
    Ok(grid
        .cells
        .iter()
        .map(|&c| order.code_unchecked(c, grid_n, bits))
        .collect())
}

/// Serializes a normalized cloud.
pub fn serialize(
    cloud: &NormalizedCloud,
    order: SerializationOrder,
    grid_n: u64,
) -> Result<PermutationIndex> {
    serialize_coords(cloud.coords(), order, grid_n)
}

/// Stable sort of points by code; equal codes fall back to the canonical
/// lexicographic coordinate order, then to input index.
pub fn serialize_coords(
    coords: &[Point3],
    order: SerializationOrder,
    grid_n: u64,
) -> Result<PermutationIndex> {
    let codes = point_codes(coords, order, grid_n)?;
    let ranks = canonical_ranks(coords);
    let mut perm: Vec<usize> = (0..coords.len()).collect();
    perm.sort_unstable_by_key(|&i| (codes[i], ranks[i]));
    Ok(PermutationIndex::new_unchecked(perm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointset::PointCloud;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit(coords: Vec<Point3>) -> NormalizedCloud {
        NormalizedCloud::from_unit_cube(PointCloud::new(coords).unwrap()).unwrap()
    }

    #[test]
    fn quantize_examples() {
        let g = grid_quantize(&unit(vec![[0.5; 3], [1.0, 0.0, 1.0]]), 16).unwrap();
        assert_eq!(g.cells, vec![[8, 8, 8], [15, 0, 15]]);
        assert!(grid_quantize(&unit(vec![[0.5; 3]]), 0).is_err());
    }

    #[test]
    fn quantize_random_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let coords: Vec<Point3> = (0..1000)
            .map(|_| std::array::from_fn(|_| rng.gen::<f64>()))
            .collect();
        let g = grid_quantize(&unit(coords), 32).unwrap();
        assert!(g.cells.iter().flatten().all(|&c| c < 32));
    }

    #[test]
    fn order_names_round_trip() {
        for k in OrderKind::ALL {
            assert_eq!(k.name().parse::<OrderKind>().unwrap(), k);
        }
        let names: Vec<String> = OrderKind::ALL.iter().map(|k| k.name()).collect();
        assert_eq!(
            names,
            ["xyz", "xzy", "yxz", "yzx", "zxy", "zyx", "hilbert", "z", "z-trans"]
        );
        assert!("xxy".parse::<OrderKind>().is_err());
        assert!(AxisPerm::new([0, 0, 1]).is_err());
    }

    #[test]
    fn singleton() {
        for k in OrderKind::ALL {
            let p = serialize(&unit(vec![[0.3; 3]]), k.into(), 16).unwrap();
            assert_eq!(p.as_slice(), &[0]);
        }
    }

    #[test]
    fn grid2_cell_centers_follow_snake() {
        // Cell centers listed in the expected traversal order, then scrambled.
        let snake: Vec<Point3> = [
            [0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0],
            [0, 1, 1], [1, 1, 1], [1, 0, 1], [0, 0, 1],
        ]
        .iter()
        .map(|c: &[u32; 3]| c.map(|v| 0.25 + 0.5 * v as f64))
        .collect();
        let scramble = [5, 2, 7, 0, 3, 6, 1, 4];
        let input: Vec<Point3> = scramble.iter().map(|&i| snake[i]).collect();
        let perm = serialize(&unit(input.clone()), OrderKind::Cts(AxisPerm::XYZ).into(), 2).unwrap();
        assert_eq!(perm.apply(&input), snake);
    }

    #[test]
    fn shuffled_cloud_serializes_identically() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let coords: Vec<Point3> = (0..500)
            .map(|_| std::array::from_fn(|_| rng.gen::<f64>()))
            .collect();
        let mut shuffled = coords.clone();
        shuffled.shuffle(&mut rng);
        for k in OrderKind::ALL {
            // Coarse grid forces many shared cells so the tie-break matters.
            for grid in [4, 64] {
                let a = serialize_coords(&coords, k.into(), grid).unwrap().apply(&coords);
                let b = serialize_coords(&shuffled, k.into(), grid).unwrap().apply(&shuffled);
                assert_eq!(a, b, "order {k} grid {grid}");
            }
        }
    }

    #[test]
    fn grid_limits() {
        let c = vec![[0.5; 3]];
        let cts = SerializationOrder::new(OrderKind::Cts(AxisPerm::XYZ));
        assert!(serialize_coords(&c, cts, MAX_CTS_GRID).is_ok());
        assert!(serialize_coords(&c, cts, MAX_CTS_GRID + 1).is_err());
        let h = SerializationOrder::new(OrderKind::Hilbert);
        assert!(serialize_coords(&c, h, 1 << 21).is_ok());
        assert!(serialize_coords(&c, h, (1 << 21) + 1).is_err());
        // Non-power-of-two grids round up for curve codes.
        assert!(serialize_coords(&c, h, 48).is_ok());
    }

    #[test]
    fn refinement_never_merges_distinct_cells() {
        // Every pair of distinct grid-2 cells stays distinct at grid 4, and the
        // hierarchical curves keep the coarse order between coarse cells.
        let cells4: Vec<[u32; 3]> = (0..64u32).map(|i| [i % 4, (i / 4) % 4, i / 16]).collect();
        for kind in OrderKind::ALL {
            let order = SerializationOrder::new(kind);
            for a in &cells4 {
                for b in &cells4 {
                    let (pa, pb) = (a.map(|v| v / 2), b.map(|v| v / 2));
                    if pa == pb {
                        continue;
                    }
                    let (ca, cb) = (order.code(pa, 2).unwrap(), order.code(pb, 2).unwrap());
                    let (fa, fb) = (order.code(*a, 4).unwrap(), order.code(*b, 4).unwrap());
                    assert_ne!(ca, cb);
                    assert_ne!(fa, fb);
                    if !matches!(kind, OrderKind::Cts(_)) {
                        assert_eq!(ca < cb, fa < fb, "{kind}: {a:?} {b:?}");
                    }
                }
            }
        }
    }
}
