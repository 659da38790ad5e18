//! Downsampling and neighbourhood construction.
//!
//! Every routine breaks distance ties by the canonical lexicographic order of
//! the candidate points, so results depend only on geometry.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::pointset::{canonical_ranks, PointCloud, Point3};
use crate::{Error, Result};

/// Neighbours of the decoder's inverse-distance interpolation.
pub const DEFAULT_INTERPOLATION_K: usize = 3;

#[inline]
pub(crate) fn dist2(a: &Point3, b: &Point3) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// Where farthest point sampling starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FpsStart {
    Index(usize),
    /// The lexicographically smallest point.
    #[default]
    DeterministicMin,
}

/// Greedy max-min selection of `m` points; returns indices in selection order.
pub fn farthest_point_sample(coords: &[Point3], m: usize, start: FpsStart) -> Result<Vec<usize>> {
    let n = coords.len();
    if m == 0 || m > n {
        return Err(Error::InvalidArgument(format!(
            "cannot sample {m} of {n} points"
        )));
    }
    let ranks = canonical_ranks(coords);
    let first = match start {
        FpsStart::Index(i) if i < n => i,
        FpsStart::Index(i) => {
            return Err(Error::InvalidArgument(format!(
                "start index {i} out of range for {n} points"
            )))
        }
        FpsStart::DeterministicMin => (0..n).min_by_key(|&i| ranks[i]).unwrap_or(0),
    };
    let mut selected = Vec::with_capacity(m);
    let mut min_d = vec![f64::INFINITY; n];
    let mut current = first;
    for _ in 0..m {
        selected.push(current);
        min_d[current] = f64::NEG_INFINITY;
        let c = coords[current];
        let mut best = usize::MAX;
        for i in 0..n {
            if min_d[i] == f64::NEG_INFINITY {
                continue;
            }
            let d = dist2(&coords[i], &c);
            if d < min_d[i] {
                min_d[i] = d;
            }
            if best == usize::MAX
                || min_d[i] > min_d[best]
                || (min_d[i] == min_d[best] && ranks[i] < ranks[best])
            {
                best = i;
            }
        }
        current = best;
    }
    Ok(selected)
}

/// Uniform sample of `m` distinct indices out of `n`, reproducible per seed.
pub fn random_sample(n: usize, m: usize, seed: u64) -> Result<Vec<usize>> {
    if m > n {
        return Err(Error::InvalidArgument(format!(
            "cannot sample {m} of {n} points"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(rand::seq::index::sample(&mut rng, n, m).into_vec())
}

/// `k` neighbours for each of `M` centers, rows sorted by ascending distance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborhoodIndex {
    /// Center index for each row (into whatever set the caller centers on).
    pub centers: Vec<usize>,
    /// Row-major `M x k` indices into the base set.
    pub neighbors: Vec<usize>,
    pub k: usize,
}

impl NeighborhoodIndex {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.neighbors[i * self.k..(i + 1) * self.k]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, usize> {
        self.neighbors.chunks_exact(self.k.max(1))
    }
}

#[derive(Clone, Copy)]
struct Candidate {
    d2: f64,
    rank: usize,
    index: usize,
}

fn k_smallest(cands: &mut Vec<Candidate>, k: usize) -> &[Candidate] {
    let cmp = |a: &Candidate, b: &Candidate| a.d2.total_cmp(&b.d2).then(a.rank.cmp(&b.rank));
    if k < cands.len() {
        cands.select_nth_unstable_by(k - 1, cmp);
        cands.truncate(k);
    }
    cands.sort_unstable_by(cmp);
    &cands[..k]
}

/// Exact k nearest base points of every query point.
pub fn knn(query: &[Point3], base: &[Point3], k: usize) -> Result<NeighborhoodIndex> {
    if k == 0 || k > base.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} must be in [1, {}]",
            base.len()
        )));
    }
    let ranks = canonical_ranks(base);
    let mut neighbors = Vec::with_capacity(query.len() * k);
    let mut cands = Vec::with_capacity(base.len());
    for q in query {
        cands.clear();
        cands.extend(base.iter().enumerate().map(|(index, b)| Candidate {
            d2: dist2(q, b),
            rank: ranks[index],
            index,
        }));
        neighbors.extend(k_smallest(&mut cands, k).iter().map(|c| c.index));
    }
    Ok(NeighborhoodIndex {
        centers: (0..query.len()).collect(),
        neighbors,
        k,
    })
}

/// The `k` nearest other points of every point.
pub fn neighbors_excluding_self(coords: &[Point3], k: usize) -> Vec<Vec<usize>> {
    let ranks = canonical_ranks(coords);
    let mut cands = Vec::with_capacity(coords.len());
    coords
        .iter()
        .enumerate()
        .map(|(i, q)| {
            cands.clear();
            cands.extend(
                coords
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(index, b)| Candidate {
                        d2: dist2(q, b),
                        rank: ranks[index],
                        index,
                    }),
            );
            let k = k.min(cands.len());
            if k == 0 {
                return Vec::new();
            }
            k_smallest(&mut cands, k).iter().map(|c| c.index).collect()
        })
        .collect()
}

/// One representative per occupied voxel: the point closest to the voxel's
/// centroid. Voxels are anchored at the cloud minimum; the result is ordered
/// by voxel key.
pub fn voxel_grid_indices(coords: &[Point3], cell_size: f64) -> Result<Vec<usize>> {
    if !(cell_size > 0.0 && cell_size.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "cell size must be positive and finite, got {cell_size}"
        )));
    }
    let mut lo = [f64::INFINITY; 3];
    for p in coords {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
        }
    }
    let mut voxels: BTreeMap<[i64; 3], Vec<usize>> = BTreeMap::new();
    for (i, p) in coords.iter().enumerate() {
        let key = std::array::from_fn(|a| ((p[a] - lo[a]) / cell_size).floor() as i64);
        voxels.entry(key).or_default().push(i);
    }
    let ranks = canonical_ranks(coords);
    Ok(voxels
        .values()
        .map(|members| {
            let inv = 1.0 / members.len() as f64;
            let mut centroid = [0.0; 3];
            for &i in members {
                for a in 0..3 {
                    centroid[a] += coords[i][a] * inv;
                }
            }
            *members
                .iter()
                .min_by(|&&i, &&j| {
                    dist2(&coords[i], &centroid)
                        .total_cmp(&dist2(&coords[j], &centroid))
                        .then(ranks[i].cmp(&ranks[j]))
                })
                .expect("voxels are never empty")
        })
        .collect())
}

pub fn voxel_grid_sample(cloud: &PointCloud, cell_size: f64) -> Result<PointCloud> {
    cloud.select(&voxel_grid_indices(cloud.coords(), cell_size)?)
}

/// Inverse-distance weighted average of the `k` nearest source features.
///
/// A target that coincides with a source point copies that source's row.
pub fn interpolate_features(
    target: &[Point3],
    source: &[Point3],
    source_features: ArrayView2<'_, f32>,
    k: usize,
) -> Result<Array2<f32>> {
    if source.is_empty() {
        return Err(Error::InvalidArgument("interpolation source is empty".into()));
    }
    if source_features.nrows() != source.len() {
        return Err(Error::InvalidArgument(format!(
            "{} feature rows for {} source points",
            source_features.nrows(),
            source.len()
        )));
    }
    let k = k.clamp(1, source.len());
    let nn = knn(target, source, k)?;
    let channels = source_features.ncols();
    let mut out = Array2::zeros((target.len(), channels));
    let mut acc = vec![0.0f64; channels];
    for (t, row) in nn.rows().enumerate() {
        let d: Vec<f64> = row.iter().map(|&s| dist2(&target[t], &source[s]).sqrt()).collect();
        if d[0] == 0.0 {
            out.row_mut(t).assign(&source_features.row(row[0]));
            continue;
        }
        acc.iter_mut().for_each(|a| *a = 0.0);
        let mut total = 0.0;
        for (&s, &dj) in row.iter().zip(&d) {
            let w = 1.0 / dj;
            total += w;
            for (a, &f) in acc.iter_mut().zip(source_features.row(s)) {
                *a += w * f64::from(f);
            }
        }
        for (o, a) in out.row_mut(t).iter_mut().zip(&acc) {
            *o = (a / total) as f32;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;

    fn uniform(n: usize, seed: u64) -> Vec<Point3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| std::array::from_fn(|_| rng.gen::<f64>()))
            .collect()
    }

    fn min_pairwise(coords: &[Point3], idx: &[usize]) -> f64 {
        let mut best = f64::INFINITY;
        for (a, &i) in idx.iter().enumerate() {
            for &j in &idx[a + 1..] {
                best = best.min(dist2(&coords[i], &coords[j]));
            }
        }
        best.sqrt()
    }

    #[test]
    fn fps_two_points() {
        let c = [[1.0, 0.0, 0.0], [0.0, 0.0, 0.0]];
        assert_eq!(farthest_point_sample(&c, 2, FpsStart::DeterministicMin).unwrap(), vec![1, 0]);
        assert!(farthest_point_sample(&c, 3, FpsStart::DeterministicMin).is_err());
    }

    #[test]
    fn fps_all_points() {
        let c = uniform(40, 2);
        let mut s = farthest_point_sample(&c, 40, FpsStart::DeterministicMin).unwrap();
        s.sort_unstable();
        assert_eq!(s, (0..40).collect::<Vec<_>>());
    }

    #[test]
    fn fps_matches_brute_force_greedy() {
        let c = uniform(100, 3);
        let got = farthest_point_sample(&c, 10, FpsStart::DeterministicMin).unwrap();
        // Oracle: recompute the distance to the selected set from scratch.
        let start = (0..c.len())
            .min_by(|&i, &j| crate::pointset::lex_cmp(&c[i], &c[j]))
            .unwrap();
        let mut sel = vec![start];
        while sel.len() < 10 {
            let next = (0..c.len())
                .filter(|i| !sel.contains(i))
                .max_by(|&i, &j| {
                    let di = sel.iter().map(|&s| dist2(&c[i], &c[s])).fold(f64::INFINITY, f64::min);
                    let dj = sel.iter().map(|&s| dist2(&c[j], &c[s])).fold(f64::INFINITY, f64::min);
                    di.total_cmp(&dj)
                })
                .unwrap();
            sel.push(next);
        }
        assert_eq!(got, sel);
    }

    #[test]
    fn fps_spreads_more_than_random() {
        let c = uniform(300, 4);
        let fps = min_pairwise(&c, &farthest_point_sample(&c, 20, FpsStart::DeterministicMin).unwrap());
        for seed in 0..100 {
            let r = min_pairwise(&c, &random_sample(c.len(), 20, seed).unwrap());
            assert!(fps >= r, "seed {seed}: {fps} < {r}");
        }
    }

    #[test]
    fn random_sample_is_reproducible() {
        assert_eq!(random_sample(100, 10, 42).unwrap(), random_sample(100, 10, 42).unwrap());
        let mut all = random_sample(30, 30, 1).unwrap();
        all.sort_unstable();
        assert_eq!(all, (0..30).collect::<Vec<_>>());
        assert!(random_sample(3, 4, 0).is_err());
    }

    #[test]
    fn random_sample_inclusion_frequency() {
        let (n, m, trials) = (10usize, 3usize, 10_000u64);
        let mut hits = vec![0u32; n];
        for seed in 0..trials {
            for i in random_sample(n, m, seed).unwrap() {
                hits[i] += 1;
            }
        }
        let p = m as f64 / n as f64;
        let sigma = (p * (1.0 - p) / trials as f64).sqrt();
        for (i, &h) in hits.iter().enumerate() {
            let f = h as f64 / trials as f64;
            assert!((f - p).abs() <= 3.0 * sigma, "index {i}: {f} vs {p} ± {}", 3.0 * sigma);
        }
    }

    #[test]
    fn knn_self_and_oracle() {
        let c = uniform(50, 5);
        let nn = knn(&c, &c, 1).unwrap();
        for (i, row) in nn.rows().enumerate() {
            assert_eq!(row, &[i]);
        }
        let nn = knn(&c, &c, 8).unwrap();
        for (i, row) in nn.rows().enumerate() {
            assert_eq!(row[0], i);
            let mut all: Vec<usize> = (0..c.len()).collect();
            all.sort_by(|&a, &b| dist2(&c[i], &c[a]).total_cmp(&dist2(&c[i], &c[b])));
            assert_eq!(row, &all[..8]);
        }
        assert!(knn(&c, &c, 51).is_err());
    }

    #[test]
    fn knn_tie_prefers_lexicographically_smaller() {
        let base = [[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let nn = knn(&[[0.0; 3]], &base, 1).unwrap();
        assert_eq!(nn.row(0), &[1]);
    }

    #[test]
    fn voxel_examples() {
        let c = uniform(50, 6);
        assert_eq!(voxel_grid_indices(&c, 10.0).unwrap().len(), 1);
        let corners: Vec<Point3> = (0..8)
            .map(|i| [i & 1, (i >> 1) & 1, (i >> 2) & 1].map(|v| v as f64))
            .collect();
        assert_eq!(voxel_grid_indices(&corners, 0.4).unwrap().len(), 8);
        assert!(voxel_grid_indices(&c, 0.0).is_err());
    }

    #[test]
    fn voxel_matches_bucketing_oracle() {
        let c = uniform(400, 7);
        let cell = 0.25;
        let got = voxel_grid_indices(&c, cell).unwrap();
        let lo = [0, 1, 2].map(|a| c.iter().map(|p| p[a]).fold(f64::INFINITY, f64::min));
        let key = |p: &Point3| -> [i64; 3] { [0, 1, 2].map(|a| ((p[a] - lo[a]) / cell).floor() as i64) };
        let mut keys: Vec<[i64; 3]> = c.iter().map(key).collect();
        keys.sort_unstable();
        keys.dedup();
        assert_eq!(got.len(), keys.len());
        for (&rep, k) in got.iter().zip(&keys) {
            assert_eq!(key(&c[rep]), *k);
            let members: Vec<&Point3> = c.iter().filter(|p| key(p) == *k).collect();
            let centroid = [0, 1, 2].map(|a| members.iter().map(|p| p[a]).sum::<f64>() / members.len() as f64);
            let best = members.iter().map(|p| dist2(p, &centroid)).fold(f64::INFINITY, f64::min);
            assert_eq!(dist2(&c[rep], &centroid), best);
        }
    }

    #[test]
    fn interpolation_examples() {
        let src = [[0.0; 3], [1.0, 0.0, 0.0]];
        let feats = array![[0.0f32], [2.0]];
        let out = interpolate_features(&src, &src, feats.view(), 2).unwrap();
        assert_eq!(out, feats);
        let mid = interpolate_features(&[[0.5, 0.0, 0.0]], &src, feats.view(), 2).unwrap();
        assert_eq!(mid[[0, 0]], 1.0);
        assert!(interpolate_features(&src, &[], feats.view(), 3).is_err());
    }

    #[test]
    fn interpolation_matches_direct_formula() {
        let src = uniform(30, 8);
        let tgt = uniform(20, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let feats = Array2::from_shape_fn((30, 4), |_| rng.gen_range(-1.0f32..1.0));
        let out = interpolate_features(&tgt, &src, feats.view(), 3).unwrap();
        for (t, q) in tgt.iter().enumerate() {
            let mut order: Vec<usize> = (0..src.len()).collect();
            order.sort_by(|&a, &b| dist2(q, &src[a]).total_cmp(&dist2(q, &src[b])));
            let w: Vec<f64> = order[..3].iter().map(|&s| 1.0 / dist2(q, &src[s]).sqrt()).collect();
            let total: f64 = w.iter().sum();
            for ch in 0..4 {
                let expect: f64 = order[..3]
                    .iter()
                    .zip(&w)
                    .map(|(&s, wj)| wj * f64::from(feats[[s, ch]]))
                    .sum::<f64>()
                    / total;
                assert!((f64::from(out[[t, ch]]) - expect).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn interpolation_idempotent_k1() {
        let src = uniform(25, 11);
        let feats = Array2::from_shape_fn((25, 3), |(i, j)| (i * 3 + j) as f32);
        let out = interpolate_features(&src, &src, feats.view(), 1).unwrap();
        assert_eq!(out, feats);
    }
}
