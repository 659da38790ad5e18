//! Point containers, unit-cube normalization and the canonical point order.

use std::cmp::Ordering;

use ndarray::{Array2, Axis};

use crate::{Error, Result};

pub type Point3 = [f64; 3];

/// A cloud of `N >= 1` points with optional per-point features and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    coords: Vec<Point3>,
    features: Option<Array2<f64>>,
    labels: Option<Vec<usize>>,
}

impl PointCloud {
    pub fn new(coords: Vec<Point3>) -> Result<Self> {
        Self::with_attributes(coords, None, None)
    }

    pub fn with_attributes(
        coords: Vec<Point3>,
        features: Option<Array2<f64>>,
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidInput("point cloud is empty".into()));
        }
        if let Some(i) = coords.iter().position(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidInput(format!(
                "point {i} has a non-finite coordinate"
            )));
        }
        if let Some(f) = &features {
            if f.nrows() != coords.len() {
                return Err(Error::InvalidInput(format!(
                    "feature rows ({}) do not match point count ({})",
                    f.nrows(),
                    coords.len()
                )));
            }
            if f.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput("non-finite feature value".into()));
            }
        }
        if let Some(l) = &labels {
            if l.len() != coords.len() {
                return Err(Error::InvalidInput(format!(
                    "label count ({}) does not match point count ({})",
                    l.len(),
                    coords.len()
                )));
            }
        }
        Ok(Self {
            coords,
            features,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    /// Always false: a cloud holds at least one point.
    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[Point3] {
        &self.coords
    }

    pub fn features(&self) -> Option<&Array2<f64>> {
        self.features.as_ref()
    }

    pub fn feature_channels(&self) -> usize {
        self.features.as_ref().map_or(0, |f| f.ncols())
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// Sub-cloud made of the given rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::InvalidArgument(format!(
                "index {bad} out of range for {} points",
                self.len()
            )));
        }
        let coords = indices.iter().map(|&i| self.coords[i]).collect();
        let features = self.features.as_ref().map(|f| f.select(Axis(0), indices));
        let labels = self
            .labels
            .as_ref()
            .map(|l| indices.iter().map(|&i| l[i]).collect());
        Self::with_attributes(coords, features, labels)
    }
}

/// A cloud rescaled into `[0, 1]^3` together with the inverse map.
///
/// `original = normalized * original_scale + origin`. The origin is the
/// per-axis minimum, except on zero-extent axes where it is shifted so that
/// the axis lands on 0.5.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedCloud {
    pub cloud: PointCloud,
    pub origin: Point3,
    pub original_scale: f64,
}

impl NormalizedCloud {
    /// Wraps coordinates that are already in the unit cube.
    pub fn from_unit_cube(cloud: PointCloud) -> Result<Self> {
        if cloud
            .coords()
            .iter()
            .flatten()
            .any(|v| !(0.0..=1.0).contains(v))
        {
            return Err(Error::InvalidInput(
                "coordinates are not inside the unit cube".into(),
            ));
        }
        Ok(Self {
            cloud,
            origin: [0.0; 3],
            original_scale: 1.0,
        })
    }

    pub fn coords(&self) -> &[Point3] {
        self.cloud.coords()
    }

    pub fn len(&self) -> usize {
        self.cloud.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn denormalize(&self) -> Vec<Point3> {
        self.cloud
            .coords()
            .iter()
            .map(|p| std::array::from_fn(|a| p[a] * self.original_scale + self.origin[a]))
            .collect()
    }

    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        Ok(Self {
            cloud: self.cloud.select(indices)?,
            origin: self.origin,
            original_scale: self.original_scale,
        })
    }
}

/// Isotropic min-max scaling into `[0, 1]^3`.
///
/// A single scale (the largest axis extent) is used for all three axes.
/// Zero-extent axes map to 0.5; a cloud with no extent at all gets scale 1.
pub fn normalize_unit_cube(cloud: PointCloud) -> Result<NormalizedCloud> {
    if cloud.coords().iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite coordinate".into()));
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in cloud.coords() {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let extent: [f64; 3] = std::array::from_fn(|a| hi[a] - lo[a]);
    let max_extent = extent.iter().cloned().fold(0.0, f64::max);
    let scale = if max_extent > 0.0 { max_extent } else { 1.0 };
    let origin: Point3 = std::array::from_fn(|a| {
        if extent[a] > 0.0 {
            lo[a]
        } else {
            lo[a] - 0.5 * scale
        }
    });
    let coords = cloud
        .coords()
        .iter()
        .map(|p| std::array::from_fn(|a| ((p[a] - origin[a]) / scale).clamp(0.0, 1.0)))
        .collect();
    let normalized = PointCloud {
        coords,
        features: cloud.features,
        labels: cloud.labels,
    };
    Ok(NormalizedCloud {
        cloud: normalized,
        origin,
        original_scale: scale,
    })
}

/// A permutation of `0..N`, read as "position `t` holds point `order[t]`".
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermutationIndex {
    order: Vec<usize>,
}

impl PermutationIndex {
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let n = order.len();
        let mut seen = vec![false; n];
        for &i in &order {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidArgument(format!(
                    "not a permutation of 0..{n}: index {i}"
                )));
            }
        }
        Ok(Self { order })
    }

    pub(crate) fn new_unchecked(order: Vec<usize>) -> Self {
        debug_assert!(Self::new(order.clone()).is_ok());
        Self { order }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            order: (0..n).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.order
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.order
    }

    /// `inverse[order[t]] == t`.
    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.order.len()];
        for (t, &i) in self.order.iter().enumerate() {
            inv[i] = t;
        }
        Self { order: inv }
    }

    /// Reorders `items` into sequence order.
    pub fn apply<T: Clone>(&self, items: &[T]) -> Vec<T> {
        self.order.iter().map(|&i| items[i].clone()).collect()
    }
}

pub(crate) fn lex_cmp(a: &Point3, b: &Point3) -> Ordering {
    a[0].total_cmp(&b[0])
        .then(a[1].total_cmp(&b[1]))
        .then(a[2].total_cmp(&b[2]))
}

/// Stable lexicographic order by (x, y, z); equal points keep input order.
pub fn canonical_tiebreak_order(coords: &[Point3]) -> PermutationIndex {
    let mut order: Vec<usize> = (0..coords.len()).collect();
    order.sort_by(|&i, &j| lex_cmp(&coords[i], &coords[j]));
    PermutationIndex { order }
}

/// `rank[i]` is the position of point `i` in [`canonical_tiebreak_order`].
pub fn canonical_ranks(coords: &[Point3]) -> Vec<usize> {
    canonical_tiebreak_order(coords).inverse().into_vec()
}
