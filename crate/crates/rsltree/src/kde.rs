//! Ball-kernel density estimation, its population smoothing, sup-deviation
//! measurement, and a heuristic level-set clustering for exploratory use.
//!
//! The kernel is the indicator ball kernel, so the estimator is a pure
//! neighbor count: `f̂_h(x) = #{i : ||x - X_i|| <= h} / (n v_m h^m)` with
//! `m` the intrinsic dimension `d` (manifold mode) or the ambient dimension
//! (full-dimensional mode). The manifold estimator deliberately does not
//! integrate to 1.

use crate::error::{Error, Result};
use crate::geometry::unit_ball_volume;
use crate::points::{dist, PointCloud};
use crate::samplers::{ball_mass_oracle, Geometry, ManifoldDensitySpec, MassEstimate, NoiseSpec, OracleOptions};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExponentMode {
    /// Normalize by `v_d h^d` with the manifold dimension `d`.
    Intrinsic(usize),
    /// Normalize by `v_D h^D` with the ambient dimension.
    Ambient,
}

#[derive(Debug, Clone, Copy)]
pub struct KDEConfig {
    pub h: f64,
    pub mode: ExponentMode,
}

impl KDEConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0) {
            return Err(Error::invalid("bandwidth h must be positive"));
        }
        if let ExponentMode::Intrinsic(d) = self.mode {
            if d == 0 {
                return Err(Error::invalid("intrinsic dimension must be >= 1"));
            }
        }
        Ok(())
    }

    fn exponent(&self, ambient: usize) -> usize {
        match self.mode {
            ExponentMode::Intrinsic(d) => d,
            ExponentMode::Ambient => ambient,
        }
    }

    /// `v_m h^m` for the configured mode.
    pub fn norm(&self, ambient: usize) -> Result<f64> {
        let m = self.exponent(ambient);
        Ok(unit_ball_volume(m)? * self.h.powi(m as i32))
    }
}

/// `f̂_h(x)`: neighbor count over `n v_m h^m`.
pub fn kde_at(points: &PointCloud, x: &[f64], cfg: &KDEConfig) -> Result<f64> {
    cfg.validate()?;
    if points.is_empty() {
        return Err(Error::invalid("kde needs at least one sample point"));
    }
    let count = points.iter().filter(|p| dist(p, x) <= cfg.h).count();
    Ok(count as f64 / (points.len() as f64 * cfg.norm(points.dim())?))
}

/// Population smoothing `f_h(x) = P(B(x, h)) / (v_m h^m)`; the Monte Carlo
/// flag of the mass oracle propagates.
pub fn population_fh(
    spec: &ManifoldDensitySpec,
    x: &[f64],
    cfg: &KDEConfig,
    opts: &OracleOptions,
) -> Result<MassEstimate> {
    cfg.validate()?;
    let mass = ball_mass_oracle(spec, x, cfg.h, &NoiseSpec::None, opts)?;
    let norm = cfg.norm(spec.ambient_dim())?;
    Ok(MassEstimate { value: mass.value / norm, method: scale_method(mass, norm) })
}

fn scale_method(mass: MassEstimate, norm: f64) -> crate::samplers::MassMethod {
    match mass.method {
        crate::samplers::MassMethod::Exact => crate::samplers::MassMethod::Exact,
        crate::samplers::MassMethod::MonteCarlo { se } => {
            crate::samplers::MassMethod::MonteCarlo { se: se / norm }
        }
    }
}

#[derive(Debug, Clone)]
pub struct SupDeviation {
    pub max_abs: f64,
    pub argmax: Vec<f64>,
    /// `max_abs / sqrt(log(1/h) / (n h^d))`, the rate-normalized size.
    pub rate_ratio: f64,
    /// Set when intrinsic mode is used with `h > tau / 8`.
    pub regime_warning: bool,
    /// True if any probe needed the Monte Carlo mass fallback.
    pub used_monte_carlo: bool,
}

/// Max absolute deviation `|f̂_h - f_h|` over the probe set.
pub fn sup_deviation(
    points: &PointCloud,
    spec: &ManifoldDensitySpec,
    cfg: &KDEConfig,
    probes: &[Vec<f64>],
) -> Result<SupDeviation> {
    let opts = OracleOptions::default();
    sup_deviation_against(points, cfg, probes, spec_tau_floor(spec), |x| {
        population_fh(spec, x, cfg, &opts)
    })
}

/// Deviation against an arbitrary population functional (used with the
/// empirical measure itself for self-consistency checks).
pub fn sup_deviation_against<F>(
    points: &PointCloud,
    cfg: &KDEConfig,
    probes: &[Vec<f64>],
    tau_floor: Option<f64>,
    mut population: F,
) -> Result<SupDeviation>
where
    F: FnMut(&[f64]) -> Result<MassEstimate>,
{
    cfg.validate()?;
    if probes.is_empty() {
        return Err(Error::invalid("sup_deviation needs a nonempty probe set"));
    }
    let mut max_abs = -1.0;
    let mut argmax = probes[0].clone();
    let mut used_mc = false;
    for probe in probes {
        let est = kde_at(points, probe, cfg)?;
        let pop = population(probe)?;
        used_mc |= !pop.is_exact();
        let dev = (est - pop.value).abs();
        if dev > max_abs {
            max_abs = dev;
            argmax = probe.clone();
        }
    }
    let (d, warn) = match cfg.mode {
        ExponentMode::Intrinsic(d) => {
            let warn = tau_floor.map(|tau| cfg.h > tau / 8.0).unwrap_or(false);
            (d, warn)
        }
        ExponentMode::Ambient => (points.dim(), false),
    };
    let rate = ((1.0 / cfg.h).ln().max(f64::MIN_POSITIVE)
        / (points.len() as f64 * cfg.h.powi(d as i32)))
    .sqrt();
    Ok(SupDeviation {
        max_abs,
        argmax,
        rate_ratio: max_abs / rate,
        regime_warning: warn,
        used_monte_carlo: used_mc,
    })
}

fn spec_tau_floor(spec: &ManifoldDensitySpec) -> Option<f64> {
    match spec.geometry() {
        Geometry::Slabs(slabs) => {
            slabs.iter().map(|s| s.sphere.tau()).min_by(|a, b| a.partial_cmp(b).unwrap())
        }
        Geometry::Mixture { sphere, .. } => Some(sphere.tau()),
    }
}

/// Heuristic level-set surrogate: threshold `f̂_h` at the sample points and
/// link survivors within `link_r`. Exploratory output only; exact level-set
/// extraction of the estimator is out of scope.
pub fn kde_level_clusters(
    points: &PointCloud,
    cfg: &KDEConfig,
    lambda: f64,
    link_r: f64,
) -> Result<Vec<Vec<usize>>> {
    cfg.validate()?;
    if lambda < 0.0 || !(link_r > 0.0) {
        return Err(Error::invalid("need lambda >= 0 and link_r > 0"));
    }
    let n = points.len();
    let norm = points.len() as f64 * cfg.norm(points.dim())?;
    // Neighbor counts at h give the estimator at every sample point.
    let index = crate::neighbors::DistanceIndex::brute(points);
    let adj_h = index.radius_neighbors(cfg.h)?;
    let survivors: Vec<usize> = (0..n)
        .filter(|&i| (adj_h[i].len() + 1) as f64 / norm >= lambda)
        .collect();
    let keep = {
        let mut keep = vec![false; n];
        for &i in &survivors {
            keep[i] = true;
        }
        keep
    };
    let adj_link = index.radius_neighbors(link_r)?;
    let mut comp_of = vec![usize::MAX; n];
    let mut comps: Vec<Vec<usize>> = Vec::new();
    for &start in &survivors {
        if comp_of[start] != usize::MAX {
            continue;
        }
        let id = comps.len();
        comp_of[start] = id;
        let mut queue = std::collections::VecDeque::from([start]);
        let mut members = vec![start];
        while let Some(u) = queue.pop_front() {
            for &v in &adj_link[u] {
                if keep[v] && comp_of[v] == usize::MAX {
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

/// Report on the four bandwidth-regularity conditions for a finite schedule
/// of `(n, h_n)` pairs (checked numerically, trend-wise).
#[derive(Debug, Clone)]
pub struct ScheduleReport {
    pub decreasing: bool,
    /// `n h^m / |log h|` nondecreasing along the schedule.
    pub volume_growth: bool,
    /// `|log h| / log log n` nondecreasing along the schedule.
    pub log_growth: bool,
    /// `h_n^m <= c h_{2n}^m` for every (n, 2n) pair present.
    pub doubling: bool,
    pub notes: Vec<String>,
}

impl ScheduleReport {
    pub fn all_hold(&self) -> bool {
        self.decreasing && self.volume_growth && self.log_growth && self.doubling
    }
}

pub fn check_bandwidth_schedule(schedule: &[(u64, f64)], m: usize, c: f64) -> Result<ScheduleReport> {
    if schedule.len() < 2 {
        return Err(Error::invalid("schedule needs at least two (n, h) entries"));
    }
    let mut sorted = schedule.to_vec();
    sorted.sort_by_key(|&(n, _)| n);
    for &(n, h) in &sorted {
        if n < 3 || !(h > 0.0) {
            return Err(Error::invalid("schedule entries need n >= 3 and h > 0"));
        }
    }
    let mut notes = Vec::new();
    let mut decreasing = true;
    let mut volume_growth = true;
    let mut log_growth = true;
    let mut doubling = true;
    let stat = |n: u64, h: f64| {
        let vol = n as f64 * h.powi(m as i32) / (1.0 / h).ln().abs().max(f64::MIN_POSITIVE);
        let lg = (1.0 / h).ln() / (n as f64).ln().ln();
        (vol, lg)
    };
    for w in sorted.windows(2) {
        let (n0, h0) = w[0];
        let (n1, h1) = w[1];
        if h1 >= h0 {
            decreasing = false;
            notes.push(format!("h not decreasing between n={} and n={}", n0, n1));
        }
        let (v0, l0) = stat(n0, h0);
        let (v1, l1) = stat(n1, h1);
        if v1 < v0 {
            volume_growth = false;
            notes.push(format!("n h^m / |log h| shrinks between n={} and n={}", n0, n1));
        }
        if l1 < l0 {
            log_growth = false;
            notes.push(format!("|log h| / log log n shrinks between n={} and n={}", n0, n1));
        }
    }
    for &(n, h) in &sorted {
        if let Some(&(_, h2)) = sorted.iter().find(|&&(n2, _)| n2 == 2 * n) {
            if h.powi(m as i32) > c * h2.powi(m as i32) {
                doubling = false;
                notes.push(format!("h_n^m > c h_2n^m at n={}", n));
            }
        }
    }
    Ok(ScheduleReport { decreasing, volume_growth, log_growth, doubling, notes })
}
