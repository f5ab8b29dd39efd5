//! Consistency verdicts and experiments: checking dendrograms against
//! ground-truth cluster pairs (latent membership under noise), empirical
//! verification of the uniform-convergence implications, and the
//! success-probability sweep harness.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::SphereSpec;
use crate::params::{choose_k, choose_r, mu, rho, Constants, Regime, SalienceParams};
use crate::points::fmt_f64;
use crate::rsl::{adaptive_rsl, rsl_sweep, ConnectionRule, Dendrogram, RSLConfig};
use crate::samplers::{
    ball_mass_oracle, sample, Geometry, LabeledSample, ManifoldDensitySpec, NoiseSpec, OracleOptions,
    PointOrigin, SupportVolumeOracle,
};

/// Index sets of a separated cluster pair inside one sample, with the
/// separation certificate they were built from.
#[derive(Debug, Clone)]
pub struct ClusterPair {
    pub a: Vec<usize>,
    pub a_prime: Vec<usize>,
    pub sigma: f64,
    pub epsilon: f64,
    pub separator: String,
}

impl ClusterPair {
    pub fn is_vacuous(&self) -> bool {
        self.a.is_empty() || self.a_prime.is_empty()
    }
}

/// The two hemisphere caps of the glued instance, by latent membership
/// (clutter-origin points never join a cluster side).
pub fn lower_bound_pair(spec: &ManifoldDensitySpec, s: &LabeledSample, sigma: f64, epsilon: f64) -> ClusterPair {
    let mut a = Vec::new();
    let mut a_prime = Vec::new();
    for i in 0..s.len() {
        if s.origin[i] == PointOrigin::Clutter {
            continue;
        }
        match spec.component_of(s.latent_point(i)) {
            Some(0) => a.push(i),
            Some(2) => a_prime.push(i),
            _ => {}
        }
    }
    ClusterPair { a, a_prime, sigma, epsilon, separator: "equator x1 = 0".into() }
}

/// Sample indices whose latent point lies within geodesic `width` of the
/// equator on the band of the glued instance (the expanded separator set).
pub fn lower_bound_separator_band(spec: &ManifoldDensitySpec, s: &LabeledSample, width: f64) -> Vec<usize> {
    let x1_max = width.min(std::f64::consts::FRAC_PI_2).sin();
    (0..s.len())
        .filter(|&i| {
            s.origin[i] != PointOrigin::Clutter
                && spec.component_of(s.latent_point(i)) == Some(1)
                && s.latent_point(i)[0].abs() <= x1_max
        })
        .collect()
}

/// Geometric membership of each mixture cap within one sample: index lists
/// per bump; background and clutter points that fall outside every cap are
/// excluded, points landing inside a cap belong to it regardless of which
/// mixture component generated them (clutter never counts).
pub fn mixture_clusters(spec: &ManifoldDensitySpec, s: &LabeledSample) -> Result<Vec<Vec<usize>>> {
    let bumps = match spec.geometry() {
        Geometry::Mixture { bumps, .. } => bumps,
        _ => return Err(Error::invalid("mixture_clusters needs a mixture spec")),
    };
    let mut clusters = vec![Vec::new(); bumps.len()];
    for i in 0..s.len() {
        if s.origin[i] == PointOrigin::Clutter {
            continue;
        }
        let x = s.latent_point(i);
        for (j, b) in bumps.iter().enumerate() {
            if crate::points::dist(x, &b.center) <= b.chord {
                clusters[j].push(i);
                break;
            }
        }
    }
    Ok(clusters)
}

/// One verdict of a pairwise consistency check.
#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub seed: u64,
    pub n: usize,
    pub d: usize,
    pub ambient_dim: usize,
    pub epsilon: f64,
    pub regime: String,
    pub r_used: f64,
    pub connected_a: bool,
    pub connected_a_prime: bool,
    pub separated: bool,
    pub success: bool,
    pub vacuous: bool,
}

/// Reads the dendrogram at `r`: both cluster restrictions internally
/// connected (all their sample points active and in one component each) and
/// no component containing points of both.
pub fn check_consistency(dendro: &Dendrogram, s: &LabeledSample, pair: &ClusterPair, r: f64) -> TrialRecord {
    let labels = dendro.labels_at(r);
    let connected = |set: &[usize]| -> bool {
        if set.is_empty() {
            return false;
        }
        let first = labels[set[0]];
        first.is_some() && set.iter().all(|&i| labels[i] == first)
    };
    let vacuous = pair.is_vacuous();
    let connected_a = !vacuous && connected(&pair.a);
    let connected_a_prime = !vacuous && connected(&pair.a_prime);
    let separated = !vacuous && {
        let a_labels: std::collections::HashSet<usize> =
            pair.a.iter().filter_map(|&i| labels[i]).collect();
        !pair.a_prime.iter().filter_map(|&i| labels[i]).any(|l| a_labels.contains(&l))
    };
    TrialRecord {
        seed: 0,
        n: s.len(),
        d: 0,
        ambient_dim: s.observed.dim(),
        epsilon: pair.epsilon,
        regime: String::new(),
        r_used: r,
        connected_a,
        connected_a_prime,
        separated,
        success: connected_a && connected_a_prime && separated,
        vacuous,
    }
}

/// All sweep radii at which every cluster is internally connected and no
/// two clusters share a component, reported as a half-open window.
#[derive(Debug, Clone)]
pub struct MultiwayOutcome {
    pub success: bool,
    /// Radius at which the last cluster became internally connected.
    pub all_connected_at: Option<f64>,
    /// First radius at which two clusters shared a component.
    pub first_mix_at: Option<f64>,
    /// Labels of the verdict components at the witnessing radius.
    pub witness_labels: Vec<usize>,
}

/// One replay over the merge list decides simultaneous recovery of all
/// clusters at a common sweep radius: recovery succeeds iff every cluster
/// unifies strictly before any two clusters meet.
pub fn multiway_success(dendro: &Dendrogram, clusters: &[Vec<usize>]) -> MultiwayOutcome {
    let n = dendro.len();
    let k = clusters.len();
    let mut cluster_of: Vec<Option<usize>> = vec![None; n];
    let mut target = vec![0usize; k];
    for (j, members) in clusters.iter().enumerate() {
        target[j] = members.len();
        for &i in members {
            cluster_of[i] = Some(j);
        }
    }
    // Events: activations then merges at equal radii.
    #[derive(Clone, Copy)]
    enum Ev {
        Activate(usize),
        Merge(usize),
    }
    let mut events: Vec<(f64, u8, Ev)> = Vec::with_capacity(n + dendro.merges().len());
    for i in 0..n {
        let a = dendro.activation()[i];
        if a.is_finite() {
            events.push((a, 0, Ev::Activate(i)));
        }
    }
    for (idx, m) in dendro.merges().iter().enumerate() {
        events.push((m.radius, 1, Ev::Merge(idx)));
    }
    events.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));

    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    // counts[root][j]: active members of cluster j under this root.
    let mut counts: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut connected_at: Vec<Option<f64>> = vec![None; k];
    let mut first_mix: Option<f64> = None;
    let mut active_total = vec![0usize; k];
    for (radius, _, ev) in events {
        match ev {
            Ev::Activate(i) => {
                if let Some(j) = cluster_of[i] {
                    active_total[j] += 1;
                    let root = find(&mut parent, i);
                    let entry = counts.entry(root).or_insert_with(|| vec![0; k]);
                    entry[j] += 1;
                    if entry[j] == target[j] && connected_at[j].is_none() {
                        connected_at[j] = Some(radius);
                    }
                    if first_mix.is_none() && entry.iter().filter(|&&c| c > 0).count() >= 2 {
                        first_mix = Some(radius);
                    }
                }
            }
            Ev::Merge(idx) => {
                let m = dendro.merges()[idx];
                let ra = find(&mut parent, m.comp_a);
                let rb = find(&mut parent, m.comp_b);
                if ra == rb {
                    continue;
                }
                let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
                parent[hi] = lo;
                let hi_counts = counts.remove(&hi);
                let merged = counts.entry(lo).or_insert_with(|| vec![0; k]);
                if let Some(hc) = hi_counts {
                    for j in 0..k {
                        merged[j] += hc[j];
                    }
                }
                for j in 0..k {
                    if merged[j] == target[j] && target[j] > 0 && connected_at[j].is_none() {
                        connected_at[j] = Some(radius);
                    }
                }
                if first_mix.is_none() && merged.iter().filter(|&&c| c > 0).count() >= 2 {
                    first_mix = Some(radius);
                }
            }
        }
    }
    let all_connected_at = if connected_at.iter().all(|c| c.is_some()) && k > 0 {
        Some(connected_at.iter().map(|c| c.unwrap()).fold(f64::NEG_INFINITY, f64::max))
    } else {
        None
    };
    let success = match (all_connected_at, first_mix) {
        (Some(conn), Some(mix)) => conn < mix,
        (Some(_), None) => true,
        _ => false,
    };
    let witness_labels = match all_connected_at {
        Some(rw) if success => {
            let labels = dendro.labels_at(rw);
            clusters
                .iter()
                .filter_map(|members| members.first().and_then(|&i| labels[i]))
                .collect()
        }
        _ => Vec::new(),
    };
    MultiwayOutcome { success, all_connected_at, first_mix_at: first_mix, witness_labels }
}

/// A single uniform-convergence violation.
#[derive(Debug, Clone)]
pub struct UcViolation {
    pub center: usize,
    pub radius: f64,
    pub implication: u8,
    pub mass: f64,
    pub empirical: f64,
}

#[derive(Debug, Clone)]
pub struct UcReport {
    pub balls_checked: usize,
    pub violations: Vec<UcViolation>,
    pub mu: f64,
    pub c_delta: f64,
    pub k: u64,
    pub used_monte_carlo: bool,
}

impl UcReport {
    pub fn clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the three mass-to-count implications over balls centered at
/// sample and net points, across a radius grid:
///
/// 1. `P(B) >= C_delta mu / n`                 implies `P_n(B) > 0`
/// 2. `P(B) >= k/n + (C_delta/n) sqrt(k mu)`   implies `P_n(B) >= k/n`
/// 3. `P(B) <= k/n - (C_delta/n) sqrt(k mu)`   implies `P_n(B) < k/n`
///
/// using `mu = 1 + log n + log |net|`.
pub fn verify_uniform_convergence(
    s: &LabeledSample,
    spec: &ManifoldDensitySpec,
    net: &[Vec<f64>],
    k: u64,
    delta: f64,
    c0: f64,
    radii: &[f64],
) -> Result<UcReport> {
    let n = s.len();
    if n == 0 || net.is_empty() || radii.is_empty() {
        return Err(Error::invalid("verify_uniform_convergence needs sample, net and radii"));
    }
    let mu_net = 1.0 + (n as f64).ln() + (net.len() as f64).ln();
    if (k as f64) < mu_net {
        return Err(Error::regime(format!("uniform convergence requires k >= mu; k = {}, mu = {:.3}", k, mu_net)));
    }
    let c_delta = Constants { c0, ..Constants::default() }.c_delta(delta);
    let kf = k as f64;
    let nf = n as f64;
    let thresh1 = c_delta * mu_net / nf;
    let gap = c_delta / nf * (kf * mu_net).sqrt();
    let thresh2 = kf / nf + gap;
    let thresh3 = kf / nf - gap;
    let opts = OracleOptions::default();
    let mut violations = Vec::new();
    let mut used_mc = false;
    let mut balls = 0usize;
    let centers: Vec<(usize, Vec<f64>)> = (0..n)
        .map(|i| (i, s.observed.point(i).to_vec()))
        .chain(net.iter().enumerate().map(|(j, p)| (n + j, p.clone())))
        .collect();
    for (cid, center) in &centers {
        // One distance pass per center serves the whole radius grid.
        let mut dists: Vec<f64> = (0..n).map(|i| crate::points::dist(s.observed.point(i), center)).collect();
        dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for &r in radii {
            balls += 1;
            let mass = ball_mass_oracle(spec, center, r, &NoiseSpec::None, &opts)?;
            used_mc |= !mass.is_exact();
            let count = dists.partition_point(|&d| d <= r);
            let pn = count as f64 / nf;
            let p = mass.value;
            if p >= thresh1 && !(pn > 0.0) {
                violations.push(UcViolation { center: *cid, radius: r, implication: 1, mass: p, empirical: pn });
            }
            if p >= thresh2 && !(pn >= kf / nf) {
                violations.push(UcViolation { center: *cid, radius: r, implication: 2, mass: p, empirical: pn });
            }
            if p <= thresh3 && !(pn < kf / nf) {
                violations.push(UcViolation { center: *cid, radius: r, implication: 3, mass: p, empirical: pn });
            }
        }
    }
    Ok(UcReport { balls_checked: balls, violations, mu: mu_net, c_delta, k, used_monte_carlo: used_mc })
}

/// Which synthetic instance a cell runs on.
#[derive(Debug, Clone)]
pub enum InstanceSpec {
    UniformSphere { d: usize, tau: f64, ambient_dim: usize },
    Mixture { d: usize, tau: f64, ambient_dim: usize, bump_chord: f64, centers_seed: u64 },
    LowerBound { d: usize, tau: f64, lambda: Option<f64>, epsilon: f64, ambient_dim: usize },
}

impl InstanceSpec {
    pub fn build(&self) -> Result<ManifoldDensitySpec> {
        match self {
            InstanceSpec::UniformSphere { d, tau, ambient_dim } => {
                ManifoldDensitySpec::uniform_sphere(SphereSpec::axis_aligned(*d, *tau, *ambient_dim, None)?)
            }
            InstanceSpec::Mixture { d, tau, ambient_dim, bump_chord, centers_seed } => {
                let sphere = SphereSpec::axis_aligned(*d, *tau, *ambient_dim, None)?;
                ManifoldDensitySpec::default_mixture(sphere, *bump_chord, *centers_seed)
            }
            InstanceSpec::LowerBound { d, tau, lambda, epsilon, ambient_dim } => {
                ManifoldDensitySpec::lower_bound(*d, *tau, *lambda, *epsilon, *ambient_dim)
            }
        }
    }

    pub fn d(&self) -> usize {
        match self {
            InstanceSpec::UniformSphere { d, .. }
            | InstanceSpec::Mixture { d, .. }
            | InstanceSpec::LowerBound { d, .. } => *d,
        }
    }

    pub fn ambient_dim(&self) -> usize {
        match self {
            InstanceSpec::UniformSphere { ambient_dim, .. }
            | InstanceSpec::Mixture { ambient_dim, .. }
            | InstanceSpec::LowerBound { ambient_dim, .. } => *ambient_dim,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Algorithm {
    Plain,
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VerdictKind {
    /// Two-cluster verdict at the prescribed radius.
    Pair,
    /// Simultaneous recovery of every cluster at some common radius, with
    /// clutter-origin points banned from the verdict components.
    Multiway,
}

/// One experiment cell: instance x sample size x algorithm x parameters.
#[derive(Debug, Clone)]
pub struct CellSpec {
    pub name: String,
    pub instance: InstanceSpec,
    pub noise: NoiseSpec,
    pub n: usize,
    pub sigma: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub c0: f64,
    /// Density level for the read-out equation; None derives it from the
    /// instance (cluster-level density).
    pub lambda: Option<f64>,
    pub k_override: Option<usize>,
    pub r_override: Option<f64>,
    pub rule: ConnectionRule,
    pub algorithm: Algorithm,
    pub verdict: VerdictKind,
    /// Acceptance threshold on the success probability, if any.
    pub min_success: Option<f64>,
    /// Skip the cell when the theorem gate fails instead of proceeding.
    pub require_feasible: bool,
}

#[derive(Debug, Clone)]
pub struct CellTrial {
    pub cell: String,
    pub trial: usize,
    pub seed: u64,
    pub record: TrialRecord,
    /// Multiway cells: no clutter point shares a verdict component.
    pub clutter_free: Option<bool>,
}

#[derive(Debug, Clone)]
pub struct CellAggregate {
    pub cell: String,
    pub n: usize,
    pub d: usize,
    pub ambient_dim: usize,
    pub epsilon: f64,
    pub regime: String,
    pub successes: usize,
    pub trials: usize,
    pub vacuous: usize,
    pub p_hat: f64,
    pub se: f64,
    pub min_success: Option<f64>,
    pub skipped: Option<String>,
    pub k_used: u64,
    pub r_used: f64,
    pub feasible: bool,
    pub gate_holds: bool,
}

impl CellAggregate {
    pub fn meets_threshold(&self) -> bool {
        match self.min_success {
            Some(t) => self.skipped.is_none() && self.p_hat >= t,
            None => true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvaluationReport {
    pub trials: Vec<CellTrial>,
    pub aggregates: Vec<CellAggregate>,
}

impl EvaluationReport {
    pub fn all_thresholds_met(&self) -> bool {
        self.aggregates.iter().all(|a| a.meets_threshold())
    }

    pub fn trials_csv(&self) -> String {
        let mut out = String::from(
            "cell,trial,seed,n,d,D,epsilon,regime,r_used,connected_a,connected_a_prime,separated,success,vacuous,clutter_free\n",
        );
        for t in &self.trials {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                t.cell,
                t.trial,
                t.seed,
                t.record.n,
                t.record.d,
                t.record.ambient_dim,
                fmt_f64(t.record.epsilon),
                t.record.regime,
                fmt_f64(t.record.r_used),
                t.record.connected_a,
                t.record.connected_a_prime,
                t.record.separated,
                t.record.success,
                t.record.vacuous,
                t.clutter_free.map(|b| b.to_string()).unwrap_or_default(),
            ));
        }
        out
    }

    pub fn aggregate_csv(&self) -> String {
        let mut out = String::from(
            "cell,n,d,D,epsilon,regime,successes,trials,vacuous,p_hat,se,k_used,r_used,feasible,gate_holds,min_success,skipped\n",
        );
        for a in &self.aggregates {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                a.cell,
                a.n,
                a.d,
                a.ambient_dim,
                fmt_f64(a.epsilon),
                a.regime,
                a.successes,
                a.trials,
                a.vacuous,
                fmt_f64(a.p_hat),
                fmt_f64(a.se),
                a.k_used,
                fmt_f64(a.r_used),
                a.feasible,
                a.gate_holds,
                a.min_success.map(fmt_f64).unwrap_or_default(),
                a.skipped.clone().unwrap_or_default(),
            ));
        }
        out
    }
}

/// Resolved per-cell parameters (fixed across trials).
#[derive(Debug, Clone)]
pub struct CellPlan {
    pub spec: ManifoldDensitySpec,
    pub k: usize,
    pub r: f64,
    pub rho: f64,
    pub feasible: bool,
    pub gate_holds: bool,
    pub lambda: f64,
    pub regime: Regime,
}

/// Derives k and r for a cell through the parameter calculators.
pub fn plan_cell(cell: &CellSpec) -> Result<CellPlan> {
    let spec = cell.instance.build()?;
    let regime = match &cell.noise {
        NoiseSpec::None => Regime::Noiseless,
        NoiseSpec::Clutter { pi, .. } => Regime::Clutter { pi: *pi },
        NoiseSpec::Additive { .. } => Regime::Additive,
    };
    // Cluster-level density: max constant density of the instance.
    let lambda = cell.lambda.unwrap_or_else(|| match spec.geometry() {
        Geometry::Slabs(slabs) => slabs.iter().map(|s| s.density).fold(0.0, f64::max),
        Geometry::Mixture { background_density, bumps, .. } => {
            background_density + bumps.iter().map(|b| b.excess).fold(0.0, f64::max)
        }
    });
    let tau = match spec.geometry() {
        Geometry::Slabs(slabs) => slabs
            .iter()
            .map(|s| s.sphere.tau())
            .min_by(|a, b| a.partial_cmp(b).unwrap())
            .unwrap(),
        Geometry::Mixture { sphere, .. } => sphere.tau(),
    };
    let p = SalienceParams {
        sigma: cell.sigma,
        epsilon: cell.epsilon,
        lambda,
        tau,
        d: cell.instance.d(),
        delta: cell.delta,
        constants: Constants::from_c0(cell.c0),
    };
    let rho_res = rho(&p, regime);
    let mu_res = mu(cell.n as u64, rho_res.value, p.d)?;
    let k = match cell.k_override {
        Some(k) => k,
        None => choose_k(&p, mu_res.value, regime).k.min(cell.n as u64) as usize,
    };
    let pick = choose_r(&p, k as u64, cell.n as u64, mu_res.value, regime)?;
    let r = cell.r_override.unwrap_or(pick.r);
    Ok(CellPlan {
        spec,
        k,
        r,
        rho: pick.rho,
        feasible: pick.feasible,
        gate_holds: pick.gate_holds,
        lambda,
        regime,
    })
}

fn run_trial(cell: &CellSpec, plan: &CellPlan, trial: usize, base_seed: u64) -> Result<CellTrial> {
    let seed = crate::seed::derive(base_seed, &format!("cell/{}/trial/{}", cell.name, trial));
    let s = sample(&plan.spec, &cell.noise, cell.n, seed)?;
    let cfg = RSLConfig { k: plan.k, rule: cell.rule };
    let dendro = match cell.algorithm {
        Algorithm::Plain => rsl_sweep(&s.observed, &cfg)?,
        Algorithm::Adaptive => {
            let oracle = SupportVolumeOracle::new(&plan.spec)?;
            // The adaptive sweep requires on-manifold data.
            adaptive_rsl(&s.observed, &cfg, &oracle)?
        }
    };
    let (mut record, clutter_free) = match cell.verdict {
        VerdictKind::Pair => {
            let pair = lower_bound_pair(&plan.spec, &s, cell.sigma, cell.epsilon);
            (check_consistency(&dendro, &s, &pair, plan.r), None)
        }
        VerdictKind::Multiway => {
            let clusters = mixture_clusters(&plan.spec, &s)?;
            let outcome = multiway_success(&dendro, &clusters);
            let clutter_free = match outcome.all_connected_at {
                Some(rw) => {
                    let labels = dendro.labels_at(rw);
                    let verdict: std::collections::HashSet<usize> =
                        outcome.witness_labels.iter().copied().collect();
                    let clean = (0..s.len()).all(|i| {
                        s.origin[i] != PointOrigin::Clutter
                            || labels[i].map(|l| !verdict.contains(&l)).unwrap_or(true)
                    });
                    Some(clean)
                }
                None => Some(false),
            };
            let vacuous = clusters.iter().any(|c| c.is_empty());
            let success = outcome.success && clutter_free.unwrap_or(false) && !vacuous;
            let record = TrialRecord {
                seed,
                n: s.len(),
                d: 0,
                ambient_dim: s.observed.dim(),
                epsilon: cell.epsilon,
                regime: String::new(),
                r_used: outcome.all_connected_at.unwrap_or(f64::NAN),
                connected_a: outcome.all_connected_at.is_some(),
                connected_a_prime: outcome.all_connected_at.is_some(),
                separated: outcome.first_mix_at.map(|m| outcome.all_connected_at.map(|c| c < m).unwrap_or(false)).unwrap_or(true),
                success,
                vacuous,
            };
            (record, clutter_free)
        }
    };
    record.seed = seed;
    record.d = cell.instance.d();
    record.regime = match &cell.noise {
        NoiseSpec::None => "noiseless".into(),
        NoiseSpec::Clutter { .. } => "clutter".into(),
        NoiseSpec::Additive { .. } => "additive".into(),
    };
    Ok(CellTrial { cell: cell.name.clone(), trial, seed, record, clutter_free })
}

/// Runs every cell for `trials` trials with derived seeds; cells and trials
/// execute in parallel, results are reduced in deterministic (cell, trial)
/// order.
pub fn experiment_sweep(grid: &[CellSpec], trials: usize, base_seed: u64) -> Result<EvaluationReport> {
    if grid.is_empty() || trials == 0 {
        return Err(Error::invalid("experiment needs a nonempty grid and trials >= 1"));
    }
    let mut all_trials: Vec<CellTrial> = Vec::new();
    let mut aggregates = Vec::new();
    for cell in grid {
        let plan = match plan_cell(cell) {
            Ok(p) => p,
            Err(e) => {
                aggregates.push(CellAggregate {
                    cell: cell.name.clone(),
                    n: cell.n,
                    d: cell.instance.d(),
                    ambient_dim: cell.instance.ambient_dim(),
                    epsilon: cell.epsilon,
                    regime: "invalid".into(),
                    successes: 0,
                    trials: 0,
                    vacuous: 0,
                    p_hat: f64::NAN,
                    se: f64::NAN,
                    min_success: cell.min_success,
                    skipped: Some(format!("invalid cell: {}", e)),
                    k_used: 0,
                    r_used: f64::NAN,
                    feasible: false,
                    gate_holds: false,
                });
                continue;
            }
        };
        if cell.require_feasible && !plan.feasible {
            aggregates.push(CellAggregate {
                cell: cell.name.clone(),
                n: cell.n,
                d: cell.instance.d(),
                ambient_dim: cell.instance.ambient_dim(),
                epsilon: cell.epsilon,
                regime: plan.regime.name().into(),
                successes: 0,
                trials: 0,
                vacuous: 0,
                p_hat: f64::NAN,
                se: f64::NAN,
                min_success: cell.min_success,
                skipped: Some(format!("infeasible: r = {} > rho = {}", plan.r, plan.rho)),
                k_used: plan.k as u64,
                r_used: plan.r,
                feasible: false,
                gate_holds: plan.gate_holds,
            });
            continue;
        }
        let mut results: Vec<Result<CellTrial>> = (0..trials)
            .into_par_iter()
            .map(|t| run_trial(cell, &plan, t, base_seed))
            .collect();
        let mut cell_trials = Vec::with_capacity(trials);
        for r in results.drain(..) {
            cell_trials.push(r?);
        }
        cell_trials.sort_by_key(|t| t.trial);
        let vacuous = cell_trials.iter().filter(|t| t.record.vacuous).count();
        let counted: Vec<&CellTrial> = cell_trials.iter().filter(|t| !t.record.vacuous).collect();
        let successes = counted.iter().filter(|t| t.record.success).count();
        let m = counted.len().max(1);
        let p_hat = successes as f64 / m as f64;
        let se = (p_hat * (1.0 - p_hat) / m as f64).sqrt();
        aggregates.push(CellAggregate {
            cell: cell.name.clone(),
            n: cell.n,
            d: cell.instance.d(),
            ambient_dim: cell.instance.ambient_dim(),
            epsilon: cell.epsilon,
            regime: plan.regime.name().into(),
            successes,
            trials: counted.len(),
            vacuous,
            p_hat,
            se,
            min_success: cell.min_success,
            skipped: None,
            k_used: plan.k as u64,
            r_used: plan.r,
            feasible: plan.feasible,
            gate_holds: plan.gate_holds,
        });
        all_trials.extend(cell_trials);
    }
    Ok(EvaluationReport { trials: all_trials, aggregates })
}
