//! Exact k-NN radii and radius-bounded neighbor enumeration.
//!
//! Two interchangeable paths: a brute-force reference and a uniform-grid
//! index over the leading coordinates. Both evaluate the same distance
//! expression, so neighbor sets and radii agree exactly, ties included.

use crate::error::{Error, Result};
use crate::points::{squared_dist, PointCloud};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IndexMode {
    BruteForce,
    /// Uniform grid with the given cell edge over min(dim, 3) leading axes.
    Grid { cell: f64 },
}

#[derive(Debug)]
pub struct DistanceIndex<'a> {
    points: &'a PointCloud,
    mode: IndexMode,
    grid: Option<Grid>,
}

#[derive(Debug)]
struct Grid {
    cell: f64,
    axes: usize,
    origin: Vec<f64>,
    extent: Vec<i64>,
    buckets: std::collections::HashMap<Vec<i64>, Vec<usize>>,
}

impl Grid {
    fn build(points: &PointCloud, cell: f64) -> Grid {
        let axes = points.dim().min(3);
        let mut origin = vec![f64::INFINITY; axes];
        let mut maxc = vec![f64::NEG_INFINITY; axes];
        for p in points.iter() {
            for a in 0..axes {
                origin[a] = origin[a].min(p[a]);
                maxc[a] = maxc[a].max(p[a]);
            }
        }
        if points.is_empty() {
            origin = vec![0.0; axes];
            maxc = vec![0.0; axes];
        }
        let extent: Vec<i64> = (0..axes)
            .map(|a| (((maxc[a] - origin[a]) / cell).floor() as i64).max(0))
            .collect();
        let mut buckets: std::collections::HashMap<Vec<i64>, Vec<usize>> = std::collections::HashMap::new();
        for (i, p) in points.iter().enumerate() {
            let key: Vec<i64> = (0..axes).map(|a| ((p[a] - origin[a]) / cell).floor() as i64).collect();
            buckets.entry(key).or_default().push(i);
        }
        Grid { cell, axes, origin, extent, buckets }
    }

    /// Indices of all points whose cell is within `reach` cells of the cell
    /// containing `p` along every gridded axis.
    fn candidates(&self, p: &[f64], radius: f64, out: &mut Vec<usize>) {
        out.clear();
        let reach = (radius / self.cell).ceil() as i64 + 1;
        let centre: Vec<i64> = (0..self.axes).map(|a| ((p[a] - self.origin[a]) / self.cell).floor() as i64).collect();
        let mut cursor = vec![0i64; self.axes];
        self.walk(0, &centre, reach, &mut cursor, out);
    }

    fn walk(&self, axis: usize, centre: &[i64], reach: i64, cursor: &mut Vec<i64>, out: &mut Vec<usize>) {
        if axis == self.axes {
            if let Some(bucket) = self.buckets.get(cursor.as_slice()) {
                out.extend_from_slice(bucket);
            }
            return;
        }
        let lo = (centre[axis] - reach).max(0);
        let hi = (centre[axis] + reach).min(self.extent[axis]);
        for c in lo..=hi {
            cursor[axis] = c;
            self.walk(axis + 1, centre, reach, cursor, out);
        }
    }
}

impl<'a> DistanceIndex<'a> {
    pub fn new(points: &'a PointCloud, mode: IndexMode) -> Self {
        let grid = match mode {
            IndexMode::Grid { cell } if cell > 0.0 => Some(Grid::build(points, cell)),
            _ => None,
        };
        DistanceIndex { points, mode, grid }
    }

    pub fn brute(points: &'a PointCloud) -> Self {
        DistanceIndex::new(points, IndexMode::BruteForce)
    }

    pub fn points(&self) -> &PointCloud {
        self.points
    }

    pub fn mode(&self) -> IndexMode {
        self.mode
    }

    /// `r_k(X_i)`: distance from each point to its k-th nearest sample point,
    /// the point itself counting as the first.
    pub fn knn_radius(&self, k: usize) -> Result<Vec<f64>> {
        let n = self.points.len();
        if k == 0 || k > n {
            return Err(Error::invalid(format!("k = {} must satisfy 1 <= k <= n = {}", k, n)));
        }
        let mut out = vec![0.0; n];
        let mut scratch: Vec<f64> = Vec::with_capacity(n);
        let mut cand: Vec<usize> = Vec::new();
        #[allow(clippy::needless_range_loop)]
        for i in 0..n {
            scratch.clear();
            let p = self.points.point(i);
            match (&self.grid, k) {
                (_, 1) => {
                    out[i] = 0.0;
                    continue;
                }
                (Some(grid), _) => {
                    // Expand the search radius until k candidates are certain:
                    // a ring guarantee holds once the k-th smallest candidate
                    // distance is below the scanned radius.
                    let mut radius = grid.cell.max(1e-300);
                    loop {
                        grid.candidates(p, radius, &mut cand);
                        if cand.len() >= k {
                            scratch.clear();
                            for &j in &cand {
                                scratch.push(squared_dist(p, self.points.point(j)));
                            }
                            let kth = kth_smallest(&mut scratch, k - 1).sqrt();
                            if kth <= radius || cand.len() == n {
                                out[i] = kth;
                                break;
                            }
                        }
                        radius *= 2.0;
                        if !radius.is_finite() {
                            return Err(Error::invalid("grid search failed to expand"));
                        }
                    }
                }
                (None, _) => {
                    for j in 0..n {
                        scratch.push(squared_dist(p, self.points.point(j)));
                    }
                    out[i] = kth_smallest(&mut scratch, k - 1).sqrt();
                }
            }
        }
        Ok(out)
    }

    /// Symmetric adjacency under `||X_i - X_j|| <= R` (closed ball: ties at
    /// exactly `R` produce edges). Self-loops are not listed.
    pub fn radius_neighbors(&self, radius: f64) -> Result<Vec<Vec<usize>>> {
        if radius < 0.0 {
            return Err(Error::invalid("radius must be nonnegative"));
        }
        let n = self.points.len();
        let r2 = radius * radius;
        let mut adj = vec![Vec::new(); n];
        match &self.grid {
            Some(grid) => {
                let mut cand = Vec::new();
                for i in 0..n {
                    grid.candidates(self.points.point(i), radius, &mut cand);
                    for &j in &cand {
                        if j > i && squared_dist(self.points.point(i), self.points.point(j)) <= r2 {
                            adj[i].push(j);
                            adj[j].push(i);
                        }
                    }
                }
            }
            None => {
                for i in 0..n {
                    for j in (i + 1)..n {
                        if squared_dist(self.points.point(i), self.points.point(j)) <= r2 {
                            adj[i].push(j);
                            adj[j].push(i);
                        }
                    }
                }
            }
        }
        for row in adj.iter_mut() {
            row.sort_unstable();
        }
        Ok(adj)
    }
}

/// k-th smallest (0-based) by quickselect.
fn kth_smallest(values: &mut [f64], k: usize) -> f64 {
    let (_, kth, _) = values.select_nth_unstable_by(k, |a, b| a.partial_cmp(b).unwrap());
    *kth
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cloud_1d(xs: &[f64]) -> PointCloud {
        PointCloud::from_rows(&xs.iter().map(|&x| vec![x]).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn knn_radius_worked_examples() {
        let pts = cloud_1d(&[0.0, 1.0, 3.0]);
        let idx = DistanceIndex::brute(&pts);
        assert_eq!(idx.knn_radius(2).unwrap(), vec![1.0, 1.0, 2.0]);
        assert_eq!(idx.knn_radius(1).unwrap(), vec![0.0, 0.0, 0.0]);
        assert_eq!(idx.knn_radius(3).unwrap(), vec![3.0, 2.0, 3.0]);
        assert!(idx.knn_radius(4).is_err());
        assert!(idx.knn_radius(0).is_err());
    }

    #[test]
    fn radius_neighbors_worked_examples() {
        let pts = cloud_1d(&[0.0, 0.1, 5.0, 5.1]);
        let idx = DistanceIndex::brute(&pts);
        let adj = idx.radius_neighbors(1.0).unwrap();
        assert_eq!(adj, vec![vec![1], vec![0], vec![3], vec![2]]);
        let adj0 = idx.radius_neighbors(0.0).unwrap();
        assert!(adj0.iter().all(|row| row.is_empty()));
        let dup = cloud_1d(&[2.0, 2.0, 3.0]);
        let idx_dup = DistanceIndex::brute(&dup);
        let adj_dup = idx_dup.radius_neighbors(0.0).unwrap();
        assert_eq!(adj_dup[0], vec![1]);
        assert_eq!(adj_dup[1], vec![0]);
        assert!(adj_dup[2].is_empty());
        // R >= diameter: complete graph.
        let all = idx.radius_neighbors(10.0).unwrap();
        assert!(all.iter().all(|row| row.len() == 3));
    }

    #[test]
    fn ties_at_exactly_r_are_edges() {
        let pts = cloud_1d(&[0.0, 1.0]);
        let idx = DistanceIndex::brute(&pts);
        let adj = idx.radius_neighbors(1.0).unwrap();
        assert_eq!(adj[0], vec![1]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn grid_matches_brute_force(
            n in 1usize..120,
            dim in 1usize..6,
            cell in 0.05f64..2.0,
            k_frac in 0.0f64..1.0,
            radius in 0.0f64..2.5,
            seed in any::<u64>(),
        ) {
            let mut rng = crate::seed::rng(seed, "grid-prop");
            use rand::Rng;
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect();
            let pts = PointCloud::from_rows(&rows).unwrap();
            let brute = DistanceIndex::brute(&pts);
            let grid = DistanceIndex::new(&pts, IndexMode::Grid { cell });
            let k = 1 + ((n - 1) as f64 * k_frac) as usize;
            let rb = brute.knn_radius(k).unwrap();
            let rg = grid.knn_radius(k).unwrap();
            prop_assert_eq!(rb, rg);
            let ab = brute.radius_neighbors(radius).unwrap();
            let ag = grid.radius_neighbors(radius).unwrap();
            prop_assert_eq!(ab, ag);
        }

        #[test]
        fn monotone_in_k_and_radius(
            n in 2usize..60,
            seed in any::<u64>(),
        ) {
            let mut rng = crate::seed::rng(seed, "mono-prop");
            use rand::Rng;
            let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
            let pts = PointCloud::from_rows(&rows).unwrap();
            let idx = DistanceIndex::brute(&pts);
            let mut prev = vec![0.0; n];
            for k in 1..=n {
                let r = idx.knn_radius(k).unwrap();
                for i in 0..n {
                    prop_assert!(r[i] >= prev[i]);
                }
                prev = r;
            }
            let a1 = idx.radius_neighbors(0.5).unwrap();
            let a2 = idx.radius_neighbors(1.0).unwrap();
            for i in 0..n {
                for j in &a1[i] {
                    prop_assert!(a2[i].contains(j));
                }
            }
        }
    }

    #[test]
    fn grid_equals_brute_force_at_stated_scale() {
        // 200 random instances, n <= 500, D <= 10: exact set equality on
        // neighbor lists and bitwise equality on k-NN radii.
        use rand::Rng;
        for inst in 0..200u64 {
            let mut rng = crate::seed::rng(inst, "grid-scale");
            let n = rng.random_range(1..=500);
            let dim = rng.random_range(1..=10);
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect();
            let pts = PointCloud::from_rows(&rows).unwrap();
            let brute = DistanceIndex::brute(&pts);
            let grid = DistanceIndex::new(&pts, IndexMode::Grid { cell: rng.random_range(0.1..1.5) });
            let k = rng.random_range(1..=n);
            assert_eq!(brute.knn_radius(k).unwrap(), grid.knn_radius(k).unwrap(), "instance {}", inst);
            let radius = rng.random_range(0.0..2.0);
            assert_eq!(
                brute.radius_neighbors(radius).unwrap(),
                grid.radius_neighbors(radius).unwrap(),
                "instance {}",
                inst
            );
        }
    }

    #[test]
    fn knn_equals_distance_matrix_order_statistic() {
        let mut rng = crate::seed::rng(5, "order-stat");
        use rand::Rng;
        let rows: Vec<Vec<f64>> = (0..40).map(|_| vec![rng.random_range(0.0..1.0); 3]).collect();
        let pts = PointCloud::from_rows(&rows).unwrap();
        let idx = DistanceIndex::brute(&pts);
        for k in [1, 3, 40] {
            let radii = idx.knn_radius(k).unwrap();
            for (i, &ri) in radii.iter().enumerate() {
                let mut row: Vec<f64> = (0..pts.len()).map(|j| pts.dist(i, j)).collect();
                row.sort_by(|a, b| a.partial_cmp(b).unwrap());
                assert_eq!(ri, row[k - 1]);
            }
        }
    }
}
