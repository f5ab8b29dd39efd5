//! The robust single linkage sweep and its spatially adaptive variant.
//!
//! A point activates once its k-NN radius falls below the sweep value (or
//! below its volume-corrected threshold in adaptive mode); active points are
//! linked within the connection radius. Sweeping the cleaning radius from 0
//! to infinity yields a dendrogram: per-point activation radii plus an
//! ordered list of component merges, from which the partition at any sweep
//! value can be reconstructed.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{cap_volume_exact, unit_ball_volume, SphereSpec};
use crate::neighbors::DistanceIndex;
use crate::points::{fmt_f64, PointCloud};

/// How edges activate during the sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConnectionRule {
    /// Edges between points within a fixed radius `R`; an edge goes live
    /// when both endpoints are active.
    FixedR(f64),
    /// `R = c * r`: an edge (i, j) goes live at
    /// `max(r_k(i), r_k(j), ||X_i - X_j|| / c)`.
    Proportional(f64),
}

#[derive(Debug, Clone, Copy)]
pub struct RSLConfig {
    pub k: usize,
    pub rule: ConnectionRule,
}

impl RSLConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.k == 0 || self.k > n {
            return Err(Error::invalid(format!("k = {} must satisfy 1 <= k <= n = {}", self.k, n)));
        }
        match self.rule {
            ConnectionRule::FixedR(r) if !(r > 0.0) => Err(Error::invalid("connection radius R must be positive")),
            ConnectionRule::Proportional(c) if !(c > 0.0) => Err(Error::invalid("connection multiplier c must be positive")),
            _ => Ok(()),
        }
    }
}

/// One merge of two live components, labeled by their minimum member index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeEvent {
    pub radius: f64,
    pub comp_a: usize,
    pub comp_b: usize,
}

/// Activation radii plus ordered merges; answers `components_at` queries by
/// union-find replay from the nearest cached checkpoint.
#[derive(Debug, Clone)]
pub struct Dendrogram {
    n: usize,
    activation: Vec<f64>,
    merges: Vec<MergeEvent>,
    checkpoint_stride: usize,
    /// Parent arrays captured after every `checkpoint_stride` merges.
    checkpoints: Vec<Vec<usize>>,
}

/// Union-find with roots canonicalized to the minimum member index.
#[derive(Debug, Clone)]
struct MinUnionFind {
    parent: Vec<usize>,
}

impl MinUnionFind {
    fn new(n: usize) -> Self {
        MinUnionFind { parent: (0..n).collect() }
    }

    fn from_parents(parent: Vec<usize>) -> Self {
        MinUnionFind { parent }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns the (min-labeled) roots that merged, or None if already joined.
    fn union(&mut self, a: usize, b: usize) -> Option<(usize, usize)> {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra == rb {
            return None;
        }
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi] = lo;
        Some((lo, hi))
    }
}

impl Dendrogram {
    fn build(n: usize, activation: Vec<f64>, mut events: Vec<(f64, usize, usize)>) -> Dendrogram {
        // Ties processed in ascending (index-pair) lexicographic order.
        events.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .unwrap()
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });
        let mut dsu = MinUnionFind::new(n);
        let mut merges = Vec::new();
        for (radius, i, j) in events {
            if let Some((a, b)) = dsu.union(i, j) {
                merges.push(MergeEvent { radius, comp_a: a, comp_b: b });
            }
        }
        Self::from_parts(n, activation, merges)
    }

    /// Assembles a dendrogram from stored parts, rebuilding checkpoints.
    pub fn from_parts(n: usize, activation: Vec<f64>, merges: Vec<MergeEvent>) -> Dendrogram {
        assert_eq!(activation.len(), n);
        let m = merges.len();
        let stride = (m as f64).sqrt().ceil().max(1.0) as usize;
        let mut dsu = MinUnionFind::new(n);
        let mut checkpoints = Vec::with_capacity(m / stride + 1);
        for (idx, ev) in merges.iter().enumerate() {
            if idx.is_multiple_of(stride) {
                checkpoints.push(dsu.parent.clone());
            }
            dsu.union(ev.comp_a, ev.comp_b);
        }
        Dendrogram { n, activation, merges, checkpoint_stride: stride, checkpoints }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn activation(&self) -> &[f64] {
        &self.activation
    }

    pub fn merges(&self) -> &[MergeEvent] {
        &self.merges
    }

    /// Sweep radii at which anything changes: activations and merges.
    pub fn event_radii(&self) -> Vec<f64> {
        let mut r: Vec<f64> = self
            .activation
            .iter()
            .copied()
            .chain(self.merges.iter().map(|m| m.radius))
            .filter(|x| x.is_finite())
            .collect();
        r.sort_by(|a, b| a.partial_cmp(b).unwrap());
        r.dedup();
        r
    }

    fn dsu_at(&self, r: f64) -> MinUnionFind {
        // Merges are sorted; count those with radius <= r.
        let upto = self.merges.partition_point(|m| m.radius <= r);
        let cp_idx = (upto / self.checkpoint_stride).min(self.checkpoints.len().saturating_sub(1));
        let mut dsu = if self.checkpoints.is_empty() {
            MinUnionFind::new(self.n)
        } else {
            MinUnionFind::from_parents(self.checkpoints[cp_idx].clone())
        };
        for ev in &self.merges[cp_idx * self.checkpoint_stride..upto] {
            dsu.union(ev.comp_a, ev.comp_b);
        }
        dsu
    }

    /// Partition of the active points (`r_k <= r`) into connected components
    /// at sweep value `r`. Components are sorted by minimum member; members
    /// are sorted ascending.
    pub fn components_at(&self, r: f64) -> Vec<Vec<usize>> {
        let mut dsu = self.dsu_at(r);
        let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = std::collections::BTreeMap::new();
        for i in 0..self.n {
            if self.activation[i] <= r {
                groups.entry(dsu.find(i)).or_default().push(i);
            }
        }
        groups.into_values().collect()
    }

    /// Component label (min active-component index) per point; `None` for
    /// inactive points.
    pub fn labels_at(&self, r: f64) -> Vec<Option<usize>> {
        let mut dsu = self.dsu_at(r);
        (0..self.n)
            .map(|i| if self.activation[i] <= r { Some(dsu.find(i)) } else { None })
            .collect()
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        let _ = writeln!(out, "n {}", self.n);
        let mut order: Vec<usize> = (0..self.n).collect();
        order.sort_by(|&a, &b| {
            self.activation[a]
                .partial_cmp(&self.activation[b])
                .unwrap()
                .then(a.cmp(&b))
        });
        for i in order {
            let _ = writeln!(out, "A {} {}", i, fmt_f64(self.activation[i]));
        }
        for m in &self.merges {
            let _ = writeln!(out, "M {} {} {}", fmt_f64(m.radius), m.comp_a, m.comp_b);
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn read_from(path: &Path) -> Result<Dendrogram> {
        let text = std::fs::read_to_string(path)?;
        let bad = |what: &str| Error::Format { path: path.display().to_string(), what: what.into() };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty file"))?;
        let n: usize = header
            .strip_prefix("n ")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("bad n header"))?;
        let mut activation = vec![f64::INFINITY; n];
        let mut merges = Vec::new();
        for line in lines {
            let mut it = line.split_whitespace();
            match it.next() {
                Some("A") => {
                    let i: usize = it.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad A index"))?;
                    let r: f64 = it.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad A radius"))?;
                    activation[i] = r;
                }
                Some("M") => {
                    let r: f64 = it.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad M radius"))?;
                    let a: usize = it.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad M comp"))?;
                    let b: usize = it.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad M comp"))?;
                    merges.push(MergeEvent { radius: r, comp_a: a, comp_b: b });
                }
                None => {}
                _ => return Err(bad("unknown record")),
            }
        }
        Ok(Dendrogram::from_parts(n, activation, merges))
    }
}

/// Runs the sweep with plain k-NN activation.
pub fn rsl_sweep(points: &PointCloud, config: &RSLConfig) -> Result<Dendrogram> {
    config.validate(points.len())?;
    let index = DistanceIndex::brute(points);
    let activation = index.knn_radius(config.k)?;
    sweep_with_activation(points, config, activation)
}

fn sweep_with_activation(points: &PointCloud, config: &RSLConfig, activation: Vec<f64>) -> Result<Dendrogram> {
    let n = points.len();
    match config.rule {
        ConnectionRule::FixedR(radius) => {
            let index = DistanceIndex::brute(points);
            let adj = index.radius_neighbors(radius)?;
            let mut events = Vec::new();
            for (i, nbrs) in adj.iter().enumerate() {
                for &j in nbrs {
                    if j > i {
                        let w = activation[i].max(activation[j]);
                        if w.is_finite() {
                            events.push((w, i, j));
                        }
                    }
                }
            }
            Ok(Dendrogram::build(n, activation, events))
        }
        ConnectionRule::Proportional(c) => {
            let tree = minimax_spanning_tree(points, &activation, c);
            Ok(Dendrogram::build(n, activation, tree))
        }
    }
}

/// Smallest representable radius `x` with `c * x >= dist` under f64
/// rounding, so that sweep events and the literal `dist <= c * r` edge
/// predicate agree bit for bit at event boundaries.
fn min_radius_reaching(dist: f64, c: f64) -> f64 {
    let mut q = dist / c;
    while c * q < dist {
        q = q.next_up();
    }
    loop {
        let down = q.next_down();
        if down >= 0.0 && c * down >= dist {
            q = down;
        } else {
            break;
        }
    }
    q
}

/// Dense Prim over the implicit weights `max(act_i, act_j, d_ij / c)`.
///
/// The threshold graph at any sweep value has the same connected components
/// as this spanning tree thresholded at the same value, so the tree edges
/// carry the full merge structure.
fn minimax_spanning_tree(points: &PointCloud, activation: &[f64], c: f64) -> Vec<(f64, usize, usize)> {
    let n = points.len();
    if n <= 1 {
        return Vec::new();
    }
    let weight = |i: usize, j: usize| -> f64 {
        let base = min_radius_reaching(points.dist(i, j), c);
        base.max(activation[i]).max(activation[j])
    };
    let mut in_tree = vec![false; n];
    let mut key = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    key[0] = 0.0;
    let mut edges = Vec::with_capacity(n - 1);
    for _ in 0..n {
        let mut u = usize::MAX;
        let mut best = f64::INFINITY;
        for v in 0..n {
            if !in_tree[v] && key[v] < best {
                best = key[v];
                u = v;
            }
        }
        if u == usize::MAX {
            break; // unreachable points (infinite activation)
        }
        in_tree[u] = true;
        if parent[u] != usize::MAX {
            let (a, b) = if parent[u] < u { (parent[u], u) } else { (u, parent[u]) };
            edges.push((weight(a, b), a, b));
        }
        for v in 0..n {
            if !in_tree[v] {
                let w = weight(u, v);
                if w < key[v] {
                    key[v] = w;
                    parent[v] = u;
                }
            }
        }
    }
    edges
}

/// Oracle access to manifold ball volumes, used by the adaptive sweep.
pub trait VolumeOracle {
    fn intrinsic_dim(&self) -> usize;
    fn total_volume(&self) -> f64;
    /// Largest chord radius worth considering (volume saturates beyond it).
    fn max_radius(&self) -> f64;
    /// `vol_d(B(x, r) ∩ M)` for `x` on the manifold.
    fn ball_volume(&self, x: &[f64], r: f64) -> Result<f64>;
    fn contains(&self, x: &[f64]) -> bool;

    /// Monotone bisection inverse of `ball_volume` in the volume argument,
    /// to 1e-10 relative in `V`.
    fn vball_radius(&self, x: &[f64], v: f64) -> Result<f64> {
        let total = self.total_volume();
        if !(0.0..=total * (1.0 + 1e-9)).contains(&v) {
            return Err(Error::invalid(format!("volume {} outside [0, total = {}]", v, total)));
        }
        if v == 0.0 {
            return Ok(0.0);
        }
        let mut lo = 0.0f64;
        let mut hi = self.max_radius();
        if self.ball_volume(x, hi)? < v {
            return Ok(hi);
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let vol = self.ball_volume(x, mid)?;
            if (vol - v).abs() <= 1e-10 * v.max(1e-300) {
                return Ok(mid);
            }
            if vol < v {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= f64::EPSILON * self.max_radius() {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

impl VolumeOracle for SphereSpec {
    fn intrinsic_dim(&self) -> usize {
        self.d()
    }

    fn total_volume(&self) -> f64 {
        self.surface_volume()
    }

    fn max_radius(&self) -> f64 {
        2.0 * self.tau()
    }

    fn ball_volume(&self, x: &[f64], r: f64) -> Result<f64> {
        let _ = x; // caps on a round sphere are location independent
        cap_volume_exact(self.d(), self.tau(), r.min(2.0 * self.tau()))
    }

    fn contains(&self, x: &[f64]) -> bool {
        self.on_surface(x)
    }
}

/// Radius of the ball around `x` on the sphere holding exactly volume `v`.
pub fn vball_radius(sphere: &SphereSpec, x: &[f64], v: f64) -> Result<f64> {
    if !sphere.on_surface(x) {
        return Err(Error::invalid("vball_radius requires an on-sphere point"));
    }
    VolumeOracle::vball_radius(sphere, x, v)
}

/// The spatially adaptive sweep: point `i` activates at the smallest sweep
/// value `r` such that `r_k(X_i) <= vball_radius(X_i, v_d r^d)`, located by
/// monotone bisection on `r`. Edges follow `config.rule` unchanged.
pub fn adaptive_rsl<O: VolumeOracle + ?Sized>(
    points: &PointCloud,
    config: &RSLConfig,
    oracle: &O,
) -> Result<Dendrogram> {
    config.validate(points.len())?;
    for i in 0..points.len() {
        if !oracle.contains(points.point(i)) {
            return Err(Error::invalid(format!(
                "point {} is off the known manifold; adaptive mode requires on-manifold data",
                i
            )));
        }
    }
    let index = DistanceIndex::brute(points);
    let knn = index.knn_radius(config.k)?;
    let d = oracle.intrinsic_dim();
    let vd = unit_ball_volume(d)?;
    let mut activation = Vec::with_capacity(points.len());
    for (i, &rk) in knn.iter().enumerate() {
        activation.push(adaptive_activation(oracle, points.point(i), rk, d, vd)?);
    }
    sweep_with_activation(points, config, activation)
}

/// Smallest `r` with `rk <= vball_radius(x, v_d r^d)`, by bisection on the
/// monotone predicate. Since the volume inverse is monotone, the predicate
/// is equivalent to `v_d r^d >= vol(B(x, rk))`, which needs the oracle only
/// once per point.
fn adaptive_activation<O: VolumeOracle + ?Sized>(
    oracle: &O,
    x: &[f64],
    rk: f64,
    d: usize,
    vd: f64,
) -> Result<f64> {
    if rk == 0.0 {
        return Ok(0.0);
    }
    let needed = oracle.ball_volume(x, rk)?;
    let holds = |r: f64| vd * r.powi(d as i32) >= needed;
    // Bracket around the d-th root, then bisect.
    let mut hi = (needed / vd).powf(1.0 / d as f64).max(f64::MIN_POSITIVE);
    let mut guard = 0;
    while !holds(hi) {
        hi *= 2.0;
        guard += 1;
        if guard > 128 {
            return Ok(f64::INFINITY);
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if holds(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Literal recomputation of the sweep graph at a single radius: nodes with
/// `r_k <= r`, edges by the connection rule, components by breadth-first
/// search. Used as the correctness oracle for the event-driven sweep.
pub fn brute_force_components(points: &PointCloud, config: &RSLConfig, r: f64) -> Result<Vec<Vec<usize>>> {
    config.validate(points.len())?;
    let index = DistanceIndex::brute(points);
    let knn = index.knn_radius(config.k)?;
    brute_force_components_from_activation(points, &knn, config.rule, r)
}

/// Same as [`brute_force_components`] but with caller-supplied activation
/// radii (used to cross-check the adaptive sweep too).
pub fn brute_force_components_from_activation(
    points: &PointCloud,
    activation: &[f64],
    rule: ConnectionRule,
    r: f64,
) -> Result<Vec<Vec<usize>>> {
    let n = points.len();
    let active: Vec<usize> = (0..n).filter(|&i| activation[i] <= r).collect();
    let connect_radius = match rule {
        ConnectionRule::FixedR(radius) => radius,
        ConnectionRule::Proportional(c) => c * r,
    };
    let mut comp_of = vec![usize::MAX; n];
    let mut comps: Vec<Vec<usize>> = Vec::new();
    for &start in &active {
        if comp_of[start] != usize::MAX {
            continue;
        }
        let id = comps.len();
        let mut queue = std::collections::VecDeque::from([start]);
        comp_of[start] = id;
        let mut members = vec![start];
        while let Some(u) = queue.pop_front() {
            for &v in &active {
                if comp_of[v] == usize::MAX && points.dist(u, v) <= connect_radius {
                    comp_of[v] = id;
                    members.push(v);
                    queue.push_back(v);
                }
            }
        }
        members.sort_unstable();
        comps.push(members);
    }
    comps.sort_by_key(|c| c[0]);
    Ok(comps)
}
