//! Synthetic ground-truth densities on sphere-based manifolds, with exact
//! density and ball-mass oracles, plus clutter and bounded additive noise.
//!
//! Three generators:
//!
//! - a uniform density on an embedded sphere;
//! - a sphere mixture: uniform background plus equal-weight uniform bumps on
//!   well-separated caps;
//! - the hard two-component instance: a unit-sphere band glued to two
//!   hemispherical caps of radius `2 tau` (density `lambda` where
//!   `|x1| > 1/2`, `lambda (1 - eps)` on the middle band), with an optional
//!   far sphere absorbing any residual mass.
//!
//! Every piece is a constant-density slab of a round sphere, so ball masses
//! reduce to spherical-cap volumes wherever a query ball stays clear of
//! density boundaries; elsewhere the oracle falls back to Monte Carlo and
//! says so.

use rand::Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{cap_volume_polar, sample_unit_sphere, unit_ball_volume, SphereSpec};
use crate::points::{dist, fmt_f64, PointCloud};
use crate::quadrature;
use crate::rsl::VolumeOracle;

/// Slab-membership tolerance on the intrinsic first coordinate.
const SLAB_TOL: f64 = 1e-9;

/// One constant-density slab `{u : u1 in [u1_lo, u1_hi]}` of a round sphere.
#[derive(Debug, Clone)]
pub struct SlabPiece {
    pub sphere: SphereSpec,
    pub u1_lo: f64,
    pub u1_hi: f64,
    pub volume: f64,
    pub density: f64,
    /// Origin tag recorded for points sampled from this slab.
    pub component: u32,
}

impl SlabPiece {
    fn mass(&self) -> f64 {
        self.volume * self.density
    }

    fn contains_unit(&self, u1: f64) -> bool {
        u1 >= self.u1_lo - SLAB_TOL && u1 <= self.u1_hi + SLAB_TOL
    }
}

/// `vol_d` of the zone `{u1 in [lo, hi]}` on a d-sphere of radius `rho`.
pub fn zone_volume(d: usize, rho: f64, u1_lo: f64, u1_hi: f64) -> Result<f64> {
    if u1_hi <= u1_lo {
        return Ok(0.0);
    }
    let theta_lo = u1_hi.clamp(-1.0, 1.0).acos();
    let theta_hi = u1_lo.clamp(-1.0, 1.0).acos();
    let vd = unit_ball_volume(d)?;
    let exp = d as i32 - 1;
    let rough = quadrature::adaptive(&|t: f64| t.sin().powi(exp), theta_lo, theta_hi, 1e-6);
    let tol = (rough.value.abs() * 1e-13).max(1e-300);
    let q = quadrature::adaptive(&|t: f64| t.sin().powi(exp), theta_lo, theta_hi, tol);
    Ok(d as f64 * vd * rho.powi(d as i32) * q.value)
}

/// A bump of the sphere mixture: a uniform extra weight on one cap.
#[derive(Debug, Clone)]
pub struct Bump {
    pub center: Vec<f64>,
    pub chord: f64,
    pub weight: f64,
    pub area: f64,
    /// Density excess over the background inside the cap.
    pub excess: f64,
}

#[derive(Debug, Clone)]
pub enum Geometry {
    Slabs(Vec<SlabPiece>),
    Mixture {
        sphere: SphereSpec,
        background_weight: f64,
        background_density: f64,
        bumps: Vec<Bump>,
    },
}

/// Analytic description of a synthetic ground-truth density.
#[derive(Debug, Clone)]
pub struct ManifoldDensitySpec {
    geometry: Geometry,
    describe: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityValue {
    pub value: f64,
    pub off_support: bool,
}

impl ManifoldDensitySpec {
    pub fn uniform_sphere(sphere: SphereSpec) -> Result<Self> {
        let volume = sphere.surface_volume();
        let describe = format!(
            "uniform-sphere d={} tau={} D={} center={}",
            sphere.d(),
            fmt_f64(sphere.tau()),
            sphere.ambient_dim(),
            sphere.center().iter().map(|&c| fmt_f64(c)).collect::<Vec<_>>().join(";")
        );
        let piece = SlabPiece {
            sphere,
            u1_lo: -1.0,
            u1_hi: 1.0,
            volume,
            density: 1.0 / volume,
            component: 0,
        };
        Ok(ManifoldDensitySpec { geometry: Geometry::Slabs(vec![piece]), describe })
    }

    /// Uniform background plus `centers.len()` equal-weight uniform caps.
    /// Weights must satisfy `background_weight + bump_weight_total = 1`.
    pub fn sphere_mixture(
        sphere: SphereSpec,
        centers: Vec<Vec<f64>>,
        bump_chord: f64,
        bump_weight_total: f64,
        background_weight: f64,
    ) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::InvalidSpec("mixture needs at least one bump center".into()));
        }
        if !(0.0..=1.0).contains(&bump_weight_total)
            || !(0.0..=1.0).contains(&background_weight)
            || (bump_weight_total + background_weight - 1.0).abs() > 1e-12
        {
            return Err(Error::InvalidSpec("mixture weights must be in [0,1] and sum to 1".into()));
        }
        if !(bump_chord > 0.0 && bump_chord <= 2.0 * sphere.tau()) {
            return Err(Error::InvalidSpec("bump chord radius outside (0, 2 tau]".into()));
        }
        for c in &centers {
            if !sphere.on_surface(c) {
                return Err(Error::InvalidSpec("bump center off the sphere surface".into()));
            }
        }
        let phi = 2.0 * (bump_chord / (2.0 * sphere.tau())).asin();
        let area = cap_volume_polar(sphere.d(), sphere.tau(), phi)?;
        let per_bump = bump_weight_total / centers.len() as f64;
        let total = sphere.surface_volume();
        let describe = format!(
            "sphere-mixture d={} tau={} D={} bumps={} chord={} bump_w={} bg_w={} centers={}",
            sphere.d(),
            fmt_f64(sphere.tau()),
            sphere.ambient_dim(),
            centers.len(),
            fmt_f64(bump_chord),
            fmt_f64(bump_weight_total),
            fmt_f64(background_weight),
            centers
                .iter()
                .map(|c| c.iter().map(|&x| fmt_f64(x)).collect::<Vec<_>>().join(";"))
                .collect::<Vec<_>>()
                .join("|")
        );
        let bumps = centers
            .into_iter()
            .map(|center| Bump { center, chord: bump_chord, weight: per_bump, area, excess: per_bump / area })
            .collect();
        Ok(ManifoldDensitySpec {
            geometry: Geometry::Mixture {
                sphere,
                background_weight,
                background_density: background_weight / total,
                bumps,
            },
            describe,
        })
    }

    /// The standard mixture of the simulations: 10 equal caps holding 0.7 of
    /// the mass over a 0.3 uniform background, centers maximally separated.
    pub fn default_mixture(sphere: SphereSpec, bump_chord: f64, seed: u64) -> Result<Self> {
        let centers = crate::geometry::farthest_points(&sphere, 10, seed);
        ManifoldDensitySpec::sphere_mixture(sphere, centers, bump_chord, 0.7, 0.3)
    }

    /// The glued two-component instance. `lambda = None` normalizes the
    /// density so the glued component carries all the mass (no far sphere).
    pub fn lower_bound(d: usize, tau: f64, lambda: Option<f64>, epsilon: f64, ambient_dim: usize) -> Result<Self> {
        if !(tau > 0.0 && tau < 0.5) {
            return Err(Error::InvalidSpec("lower-bound instance requires 0 < tau < 1/2".into()));
        }
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::InvalidSpec("epsilon must lie in (0, 1)".into()));
        }
        if ambient_dim < d + 1 {
            return Err(Error::InvalidSpec("ambient dimension must be at least d+1".into()));
        }
        let x_band = (1.0 - 4.0 * tau * tau).sqrt();
        let band_sphere = SphereSpec::axis_aligned(d, 1.0, ambient_dim, None)?;
        let mut top_center = vec![0.0; ambient_dim];
        top_center[0] = x_band;
        let mut bottom_center = vec![0.0; ambient_dim];
        bottom_center[0] = -x_band;
        let cap_sphere_top = SphereSpec::axis_aligned(d, 2.0 * tau, ambient_dim, Some(top_center))?;
        let cap_sphere_bottom = SphereSpec::axis_aligned(d, 2.0 * tau, ambient_dim, Some(bottom_center))?;

        // Split every geometric piece at the density boundary |x1| = 1/2.
        // Hemisphere caps: x1 = x_band + 2 tau u1 with u1 >= 0 (top), mirrored
        // at the bottom.
        let u_split = (0.5 - x_band) / (2.0 * tau); // only relevant when x_band < 1/2
        let mut raw: Vec<(SphereSpec, f64, f64, bool, u32)> = Vec::new();
        if u_split <= 0.0 {
            raw.push((cap_sphere_top.clone(), 0.0, 1.0, true, 0));
            raw.push((cap_sphere_bottom.clone(), -1.0, 0.0, true, 2));
        } else {
            let us = u_split.min(1.0);
            raw.push((cap_sphere_top.clone(), us, 1.0, true, 0));
            raw.push((cap_sphere_top.clone(), 0.0, us, false, 0));
            raw.push((cap_sphere_bottom.clone(), -1.0, -us, true, 2));
            raw.push((cap_sphere_bottom.clone(), -us, 0.0, false, 2));
        }
        if x_band > 0.5 {
            raw.push((band_sphere.clone(), 0.5, x_band, true, 1));
            raw.push((band_sphere.clone(), -0.5, 0.5, false, 1));
            raw.push((band_sphere.clone(), -x_band, -0.5, true, 1));
        } else {
            raw.push((band_sphere.clone(), -x_band, x_band, false, 1));
        }

        let mut vol_high = 0.0;
        let mut vol_low = 0.0;
        let mut pieces = Vec::new();
        for (sphere, lo, hi, high, component) in raw {
            let volume = zone_volume(d, sphere.tau(), lo, hi)?;
            if volume <= 0.0 {
                continue;
            }
            if high {
                vol_high += volume;
            } else {
                vol_low += volume;
            }
            pieces.push((sphere, lo, hi, high, component, volume));
        }
        let lam = match lambda {
            Some(l) => {
                if !(l > 0.0) {
                    return Err(Error::InvalidSpec("lambda must be positive".into()));
                }
                l
            }
            None => 1.0 / (vol_high + (1.0 - epsilon) * vol_low),
        };
        let mass_c = lam * vol_high + lam * (1.0 - epsilon) * vol_low;
        if mass_c > 1.0 + 1e-9 {
            return Err(Error::InvalidSpec(format!(
                "lambda too large: glued component carries mass {} > 1",
                mass_c
            )));
        }
        let residual = (1.0 - mass_c).max(0.0);
        let mut slabs: Vec<SlabPiece> = pieces
            .into_iter()
            .map(|(sphere, lo, hi, high, component, volume)| SlabPiece {
                sphere,
                u1_lo: lo,
                u1_hi: hi,
                volume,
                density: if high { lam } else { lam * (1.0 - epsilon) },
                component,
            })
            .collect();
        if residual > 1e-12 {
            // Far sphere with the same uniform density lambda, radius set so
            // it absorbs exactly the residual mass, ambient gap 10 tau.
            let vol_cprime = residual / lam;
            let tau_prime = (vol_cprime / ((d as f64 + 1.0) * unit_ball_volume(d + 1)?)).powf(1.0 / d as f64);
            let mut c_center = vec![0.0; ambient_dim];
            c_center[0] = x_band + 2.0 * tau + 10.0 * tau + tau_prime;
            let c_sphere = SphereSpec::axis_aligned(d, tau_prime, ambient_dim, Some(c_center))?;
            slabs.push(SlabPiece {
                sphere: c_sphere,
                u1_lo: -1.0,
                u1_hi: 1.0,
                volume: vol_cprime,
                density: lam,
                component: 3,
            });
        }
        let describe = format!(
            "lower-bound d={} tau={} lambda={} eps={} D={} normalized={}",
            d,
            fmt_f64(tau),
            fmt_f64(lam),
            fmt_f64(epsilon),
            ambient_dim,
            lambda.is_none()
        );
        Ok(ManifoldDensitySpec { geometry: Geometry::Slabs(slabs), describe })
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn describe(&self) -> &str {
        &self.describe
    }

    pub fn ambient_dim(&self) -> usize {
        match &self.geometry {
            Geometry::Slabs(s) => s[0].sphere.ambient_dim(),
            Geometry::Mixture { sphere, .. } => sphere.ambient_dim(),
        }
    }

    pub fn intrinsic_dim(&self) -> usize {
        match &self.geometry {
            Geometry::Slabs(s) => s[0].sphere.d(),
            Geometry::Mixture { sphere, .. } => sphere.d(),
        }
    }

    /// Total mass (1 for valid specs; exposed for tests).
    pub fn total_mass(&self) -> f64 {
        match &self.geometry {
            Geometry::Slabs(slabs) => slabs.iter().map(|s| s.mass()).sum(),
            Geometry::Mixture { background_weight, bumps, .. } => {
                background_weight + bumps.iter().map(|b| b.weight).sum::<f64>()
            }
        }
    }

    /// Manifold volume (support only, densities ignored).
    pub fn support_volume(&self) -> f64 {
        match &self.geometry {
            Geometry::Slabs(slabs) => slabs.iter().map(|s| s.volume).sum(),
            Geometry::Mixture { sphere, .. } => sphere.surface_volume(),
        }
    }

    /// Density with respect to the uniform d-dimensional measure on the
    /// support; 0 with a flag off the support.
    pub fn density_at(&self, x: &[f64]) -> DensityValue {
        match &self.geometry {
            Geometry::Slabs(slabs) => {
                for s in slabs {
                    if s.sphere.on_surface(x) {
                        let u1 = s.sphere.intrinsic_unit(x)[0];
                        if s.contains_unit(u1) {
                            return DensityValue { value: s.density, off_support: false };
                        }
                    }
                }
                DensityValue { value: 0.0, off_support: true }
            }
            Geometry::Mixture { sphere, background_density, bumps, .. } => {
                if !sphere.on_surface(x) {
                    return DensityValue { value: 0.0, off_support: true };
                }
                let mut v = *background_density;
                for b in bumps {
                    if dist(x, &b.center) <= b.chord {
                        v += b.excess;
                    }
                }
                DensityValue { value: v, off_support: false }
            }
        }
    }

    /// Latent component tag of an on-support point; None off support.
    /// Mixture tags: 0 = background, j+1 = bump j. Glued-instance tags:
    /// 0 = top cap, 1 = band, 2 = bottom cap, 3 = far sphere.
    pub fn component_of(&self, x: &[f64]) -> Option<u32> {
        match &self.geometry {
            Geometry::Slabs(slabs) => {
                for s in slabs {
                    if s.sphere.on_surface(x) {
                        let u1 = s.sphere.intrinsic_unit(x)[0];
                        if s.contains_unit(u1) {
                            return Some(s.component);
                        }
                    }
                }
                None
            }
            Geometry::Mixture { sphere, bumps, .. } => {
                if !sphere.on_surface(x) {
                    return None;
                }
                for (j, b) in bumps.iter().enumerate() {
                    if dist(x, &b.center) <= b.chord {
                        return Some(j as u32 + 1);
                    }
                }
                Some(0)
            }
        }
    }

    /// One latent draw; returns (point, component tag).
    fn draw<R: Rng>(&self, rng: &mut R) -> (Vec<f64>, u32) {
        match &self.geometry {
            Geometry::Slabs(slabs) => {
                let total: f64 = slabs.iter().map(|s| s.mass()).sum();
                let mut pick = rng.random::<f64>() * total;
                let mut idx = slabs.len() - 1;
                for (i, s) in slabs.iter().enumerate() {
                    if pick < s.mass() {
                        idx = i;
                        break;
                    }
                    pick -= s.mass();
                }
                let s = &slabs[idx];
                // Rejection inside the slab.
                loop {
                    let u = sample_unit_sphere(s.sphere.d(), rng);
                    if u[0] >= s.u1_lo && u[0] <= s.u1_hi {
                        return (s.sphere.embed_unit(&u), s.component);
                    }
                }
            }
            Geometry::Mixture { sphere, background_weight, bumps, .. } => {
                let mut pick = rng.random::<f64>();
                if pick < *background_weight {
                    return (sphere.sample_uniform(rng), 0);
                }
                pick -= background_weight;
                let mut idx = bumps.len() - 1;
                for (j, b) in bumps.iter().enumerate() {
                    if pick < b.weight {
                        idx = j;
                        break;
                    }
                    pick -= b.weight;
                }
                let b = &bumps[idx];
                loop {
                    let p = sphere.sample_uniform(rng);
                    if dist(&p, &b.center) <= b.chord {
                        return (p, idx as u32 + 1);
                    }
                }
            }
        }
    }
}

/// Shape of the additive perturbation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseProfile {
    /// Uniform on the solid ball B(0, theta).
    UniformBall,
    /// Uniform on the sphere of radius exactly theta (worst case).
    Shell,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseSpec {
    None,
    Clutter { pi: f64, box_halfwidth: f64 },
    Additive { theta: f64, profile: NoiseProfile },
}

impl NoiseSpec {
    pub fn describe(&self) -> String {
        match self {
            NoiseSpec::None => "noise=none".into(),
            NoiseSpec::Clutter { pi, box_halfwidth } => {
                format!("noise=clutter pi={} hw={}", fmt_f64(*pi), fmt_f64(*box_halfwidth))
            }
            NoiseSpec::Additive { theta, profile } => format!(
                "noise=additive theta={} profile={}",
                fmt_f64(*theta),
                match profile {
                    NoiseProfile::UniformBall => "ball",
                    NoiseProfile::Shell => "shell",
                }
            ),
        }
    }

    pub fn validate(&self, spec: &ManifoldDensitySpec) -> Result<()> {
        match self {
            NoiseSpec::None => Ok(()),
            NoiseSpec::Clutter { pi, box_halfwidth } => {
                if !(*pi > 0.0 && *pi <= 1.0) {
                    return Err(Error::InvalidSpec("clutter pi must lie in (0, 1]".into()));
                }
                // The compact region must contain the support.
                let reach = match spec.geometry() {
                    Geometry::Slabs(slabs) => slabs
                        .iter()
                        .map(|s| {
                            s.sphere.center().iter().map(|c| c.abs()).fold(0.0, f64::max) + s.sphere.tau()
                        })
                        .fold(0.0, f64::max),
                    Geometry::Mixture { sphere, .. } => {
                        sphere.center().iter().map(|c| c.abs()).fold(0.0, f64::max) + sphere.tau()
                    }
                };
                if reach > *box_halfwidth {
                    return Err(Error::InvalidSpec(format!(
                        "clutter box halfwidth {} does not contain the support (reach {})",
                        box_halfwidth, reach
                    )));
                }
                Ok(())
            }
            NoiseSpec::Additive { theta, .. } => {
                if *theta < 0.0 {
                    return Err(Error::InvalidSpec("theta must be nonnegative".into()));
                }
                Ok(())
            }
        }
    }
}

/// Per-point provenance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointOrigin {
    Component(u32),
    Clutter,
}

impl PointOrigin {
    pub fn tag(&self) -> String {
        match self {
            PointOrigin::Component(c) => c.to_string(),
            PointOrigin::Clutter => "clutter".into(),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        if s == "clutter" {
            Ok(PointOrigin::Clutter)
        } else {
            s.parse::<u32>()
                .map(PointOrigin::Component)
                .map_err(|_| Error::invalid(format!("bad origin tag {:?}", s)))
        }
    }
}

#[derive(Debug, Clone)]
pub struct LabeledSample {
    pub observed: PointCloud,
    pub latent: Option<PointCloud>,
    pub origin: Vec<PointOrigin>,
    pub fingerprint: String,
}

impl LabeledSample {
    pub fn len(&self) -> usize {
        self.observed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observed.is_empty()
    }

    /// The latent position of point `i` (observed when no latent stored).
    pub fn latent_point(&self, i: usize) -> &[f64] {
        match &self.latent {
            Some(l) => l.point(i),
            None => self.observed.point(i),
        }
    }
}

pub fn fingerprint(spec: &ManifoldDensitySpec, noise: &NoiseSpec, n: usize, seed: u64) -> String {
    let mut h = Sha256::new();
    h.update(spec.describe().as_bytes());
    h.update(noise.describe().as_bytes());
    h.update(format!(" n={} seed={}", n, seed).as_bytes());
    let digest = h.finalize();
    digest[..8].iter().map(|b| format!("{:02x}", b)).collect()
}

/// Uniform draw from the solid unit ball in `R^dim`.
fn sample_unit_ball<R: Rng>(dim: usize, rng: &mut R) -> Vec<f64> {
    let mut u = sample_unit_sphere(dim - 1, rng);
    let scale = rng.random::<f64>().powf(1.0 / dim as f64);
    for x in u.iter_mut() {
        *x *= scale;
    }
    u
}

/// i.i.d. draws from the noisy distribution; deterministic in
/// `(spec, noise, n, seed)`, with per-point provenance.
pub fn sample(spec: &ManifoldDensitySpec, noise: &NoiseSpec, n: usize, seed: u64) -> Result<LabeledSample> {
    if n == 0 {
        return Err(Error::invalid("sample size must be >= 1"));
    }
    noise.validate(spec)?;
    let dim = spec.ambient_dim();
    let mut rng = crate::seed::rng(seed, "samplers/sample");
    let mut observed = PointCloud::empty(dim);
    let mut origin = Vec::with_capacity(n);
    let fp = fingerprint(spec, noise, n, seed);
    match noise {
        NoiseSpec::None => {
            for _ in 0..n {
                let (p, tag) = spec.draw(&mut rng);
                observed.push(&p);
                origin.push(PointOrigin::Component(tag));
            }
            Ok(LabeledSample { observed, latent: None, origin, fingerprint: fp })
        }
        NoiseSpec::Clutter { pi, box_halfwidth } => {
            for _ in 0..n {
                if rng.random::<f64>() < *pi {
                    let (p, tag) = spec.draw(&mut rng);
                    observed.push(&p);
                    origin.push(PointOrigin::Component(tag));
                } else {
                    let p: Vec<f64> =
                        (0..dim).map(|_| rng.random_range(-box_halfwidth..*box_halfwidth)).collect();
                    observed.push(&p);
                    origin.push(PointOrigin::Clutter);
                }
            }
            let latent = observed.clone();
            Ok(LabeledSample { observed, latent: Some(latent), origin, fingerprint: fp })
        }
        NoiseSpec::Additive { theta, profile } => {
            let mut latent = PointCloud::empty(dim);
            for _ in 0..n {
                let (p, tag) = spec.draw(&mut rng);
                let eta: Vec<f64> = match profile {
                    NoiseProfile::UniformBall => {
                        sample_unit_ball(dim, &mut rng).into_iter().map(|x| x * theta).collect()
                    }
                    NoiseProfile::Shell => {
                        sample_unit_sphere(dim - 1, &mut rng).into_iter().map(|x| x * theta).collect()
                    }
                };
                let y: Vec<f64> = p.iter().zip(&eta).map(|(a, b)| a + b).collect();
                latent.push(&p);
                observed.push(&y);
                origin.push(PointOrigin::Component(tag));
            }
            Ok(LabeledSample { observed, latent: Some(latent), origin, fingerprint: fp })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MassMethod {
    Exact,
    MonteCarlo { se: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct MassEstimate {
    pub value: f64,
    pub method: MassMethod,
}

impl MassEstimate {
    pub fn is_exact(&self) -> bool {
        matches!(self.method, MassMethod::Exact)
    }

    pub fn standard_error(&self) -> f64 {
        match self.method {
            MassMethod::Exact => 0.0,
            MassMethod::MonteCarlo { se } => se,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct OracleOptions {
    pub mc_samples: usize,
    pub mc_seed: u64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions { mc_samples: 200_000, mc_seed: 0xB0A7_10C5 }
    }
}

/// The chord cap `B(x, r) ∩ S` expressed on the sphere `S`.
#[derive(Debug, Clone, Copy)]
enum SphereCap {
    Empty,
    Full,
    /// Polar angle `phi` around the direction at polar angle `psi` from the
    /// +e1 axis; carries the reachable intrinsic-u1 interval.
    Partial { phi: f64, psi: f64, u1_lo: f64, u1_hi: f64 },
}

/// Computes the cap cut out of `sphere` by the Euclidean ball `B(x, r)`,
/// valid for arbitrary ambient centers (including off-span ones).
fn ball_cap_on_sphere(sphere: &SphereSpec, x: &[f64], r: f64) -> SphereCap {
    let rho = sphere.tau();
    let t: Vec<f64> = (0..=sphere.d()).map(|j| sphere.intrinsic_component(x, j)).collect();
    let s_norm = t.iter().map(|v| v * v).sum::<f64>().sqrt();
    let off_sq = sphere.off_span_sq(x);
    let r_eff_sq = r * r - off_sq;
    if r_eff_sq <= 0.0 {
        return SphereCap::Empty;
    }
    if s_norm <= 1e-14 * rho {
        // Ball centered on the sphere's center: all or nothing.
        return if r_eff_sq >= rho * rho { SphereCap::Full } else { SphereCap::Empty };
    }
    let q = (rho * rho + s_norm * s_norm - r_eff_sq) / (2.0 * rho * s_norm);
    if q > 1.0 {
        return SphereCap::Empty;
    }
    if q < -1.0 {
        return SphereCap::Full;
    }
    let phi = q.acos();
    let u1_center = (t[0] / s_norm).clamp(-1.0, 1.0);
    let psi = u1_center.acos();
    let u1_hi = ((psi - phi).max(0.0)).cos();
    let u1_lo = ((psi + phi).min(std::f64::consts::PI)).cos();
    SphereCap::Partial { phi, psi, u1_lo, u1_hi }
}

/// Volume of `cap ∩ {u1 in [lo, hi]}` on a sphere of radius `rho`: the cap
/// has polar angle `phi` around a direction at polar angle `psi` from +e1.
/// Evaluated by slicing along the polar angle; each slice is a cap of the
/// (d-1)-sphere cross section.
fn cap_slab_volume(d: usize, rho: f64, phi: f64, psi: f64, u1_lo: f64, u1_hi: f64) -> Result<f64> {
    let theta_lo = (u1_hi.clamp(-1.0, 1.0)).acos().max(psi - phi).max(0.0);
    let theta_hi = (u1_lo.clamp(-1.0, 1.0)).acos().min(psi + phi).min(std::f64::consts::PI);
    if theta_hi <= theta_lo {
        return Ok(0.0);
    }
    let sin_psi = psi.sin();
    if sin_psi <= 1e-12 {
        // Cap centered on a pole is itself a slab.
        let (z_lo, z_hi) = if psi < 1.0 {
            (phi.cos(), 1.0)
        } else {
            (-1.0, (std::f64::consts::PI - phi).cos())
        };
        return zone_volume(d, rho, z_lo.max(u1_lo), z_hi.min(u1_hi));
    }
    let cos_phi = phi.cos();
    let cos_psi = psi.cos();
    let integrand = |theta: f64| -> f64 {
        let st = theta.sin();
        if st <= 1e-300 {
            return 0.0;
        }
        let c = ((cos_phi - theta.cos() * cos_psi) / (st * sin_psi)).clamp(-1.0, 1.0);
        let delta = c.acos();
        // (d-1)-volume of the cross-section cap of radius rho*sin(theta).
        cap_volume_polar(d - 1, rho * st, delta).unwrap_or(f64::NAN)
    };
    let rough = quadrature::adaptive(&integrand, theta_lo, theta_hi, 1e-5);
    let tol = (rough.value.abs() * 1e-10).max(1e-300);
    let q = quadrature::adaptive(&integrand, theta_lo, theta_hi, tol);
    if !q.value.is_finite() {
        return Err(Error::NumericFailure { what: "cap-slab quadrature".into(), residual: f64::NAN });
    }
    Ok(q.value * rho)
}

fn same_sphere(a: &SphereSpec, b: &SphereSpec) -> bool {
    a.tau() == b.tau() && a.center() == b.center()
}

/// Exact manifold-part ball mass if every contribution resolves to clean
/// caps; None when some cap straddles a density or piece boundary.
fn manifold_ball_mass_exact(spec: &ManifoldDensitySpec, center: &[f64], r: f64) -> Option<f64> {
    match spec.geometry() {
        Geometry::Slabs(slabs) => {
            let mut total = 0.0;
            let mut done = vec![false; slabs.len()];
            for i in 0..slabs.len() {
                if done[i] {
                    continue;
                }
                let sphere = &slabs[i].sphere;
                let group: Vec<usize> =
                    (0..slabs.len()).filter(|&j| same_sphere(&slabs[j].sphere, sphere)).collect();
                for &j in &group {
                    done[j] = true;
                }
                match ball_cap_on_sphere(sphere, center, r) {
                    SphereCap::Empty => {}
                    SphereCap::Full => {
                        for &j in &group {
                            total += slabs[j].mass();
                        }
                    }
                    SphereCap::Partial { phi, u1_lo, u1_hi, .. } => {
                        // Exact only if the cap nests inside one slab of this
                        // sphere; slab ranges partition the sphere's u1 axis
                        // (up to uncovered stretches at piece boundaries).
                        let host = group.iter().copied().find(|&j| {
                            u1_lo >= slabs[j].u1_lo - SLAB_TOL && u1_hi <= slabs[j].u1_hi + SLAB_TOL
                        });
                        match host {
                            Some(j) => {
                                let v = cap_volume_polar(sphere.d(), sphere.tau(), phi).ok()?;
                                total += slabs[j].density * v;
                            }
                            None => {
                                let disjoint_all = group.iter().all(|&j| {
                                    u1_hi <= slabs[j].u1_lo + SLAB_TOL || u1_lo >= slabs[j].u1_hi - SLAB_TOL
                                });
                                if !disjoint_all {
                                    return None;
                                }
                            }
                        }
                    }
                }
            }
            Some(total)
        }
        Geometry::Mixture { sphere, background_density, bumps, .. } => {
            let cap = ball_cap_on_sphere(sphere, center, r);
            let ball_phi = match cap {
                SphereCap::Empty => return Some(0.0),
                SphereCap::Full => {
                    let mut total = background_density * sphere.surface_volume();
                    for b in bumps {
                        total += b.excess * b.area;
                    }
                    return Some(total);
                }
                SphereCap::Partial { phi, .. } => phi,
            };
            let ball_cap_vol = cap_volume_polar(sphere.d(), sphere.tau(), ball_phi).ok()?;
            let mut total = background_density * ball_cap_vol;
            // Angle between the ball-cap center direction and each bump center.
            let t: Vec<f64> = (0..=sphere.d()).map(|j| sphere.intrinsic_component(center, j)).collect();
            let t_norm = t.iter().map(|v| v * v).sum::<f64>().sqrt();
            if t_norm <= 0.0 {
                return None;
            }
            for b in bumps {
                let bu = sphere.intrinsic_unit(&b.center);
                let dot = bu.iter().zip(&t).map(|(a, c)| a * c / t_norm).sum::<f64>();
                let gamma = dot.clamp(-1.0, 1.0).acos();
                let bump_phi = 2.0 * (b.chord / (2.0 * sphere.tau())).asin();
                if gamma >= ball_phi + bump_phi {
                    // disjoint
                } else if gamma + ball_phi <= bump_phi {
                    total += b.excess * ball_cap_vol; // ball cap inside bump
                } else if gamma + bump_phi <= ball_phi {
                    total += b.excess * b.area; // bump inside ball cap
                } else {
                    return None; // partial overlap
                }
            }
            Some(total)
        }
    }
}

/// Exact Lebesgue volume of `B(x, r) ∩ [-hw, hw]^dim` when clean, else None.
fn ball_box_volume_exact(x: &[f64], r: f64, hw: f64) -> Option<f64> {
    let dim = x.len();
    if x.iter().all(|&c| c.abs() + r <= hw) {
        return Some(unit_ball_volume(dim).ok()? * r.powi(dim as i32));
    }
    let gap_sq: f64 = x.iter().map(|&c| (c.abs() - hw).max(0.0).powi(2)).sum();
    if gap_sq > r * r {
        return Some(0.0);
    }
    None
}

/// Probability mass of the closed ball `B(center, r)` under the noisy
/// distribution: exact via cap volumes wherever the ball meets only
/// constant-density slabs cleanly, Monte Carlo (flagged, with standard
/// error) otherwise.
pub fn ball_mass_oracle(
    spec: &ManifoldDensitySpec,
    center: &[f64],
    r: f64,
    noise: &NoiseSpec,
    opts: &OracleOptions,
) -> Result<MassEstimate> {
    if r < 0.0 {
        return Err(Error::invalid("ball radius must be nonnegative"));
    }
    if r == 0.0 {
        return Ok(MassEstimate { value: 0.0, method: MassMethod::Exact });
    }
    match noise {
        NoiseSpec::None => match manifold_ball_mass_exact(spec, center, r) {
            Some(v) => Ok(MassEstimate { value: v, method: MassMethod::Exact }),
            None => monte_carlo_mass(spec, noise, center, r, opts),
        },
        NoiseSpec::Clutter { pi, box_halfwidth } => {
            let manifold = manifold_ball_mass_exact(spec, center, r);
            let boxpart = ball_box_volume_exact(center, r, *box_halfwidth);
            match (manifold, boxpart) {
                (Some(m), Some(b)) => {
                    let dim = spec.ambient_dim();
                    let box_vol = (2.0 * box_halfwidth).powi(dim as i32);
                    Ok(MassEstimate {
                        value: pi * m + (1.0 - pi) * b / box_vol,
                        method: MassMethod::Exact,
                    })
                }
                _ => monte_carlo_mass(spec, noise, center, r, opts),
            }
        }
        NoiseSpec::Additive { theta, .. } => {
            // Exact only when the theta-shrunk and theta-grown balls see the
            // same clean mass (the convolution cannot move anything then).
            let inner = manifold_ball_mass_exact(spec, center, (r - theta).max(0.0));
            let outer = manifold_ball_mass_exact(spec, center, r + theta);
            match (inner, outer) {
                (Some(a), Some(b)) if (b - a).abs() <= 1e-15 => {
                    Ok(MassEstimate { value: a, method: MassMethod::Exact })
                }
                _ => monte_carlo_mass(spec, noise, center, r, opts),
            }
        }
    }
}

fn monte_carlo_mass(
    spec: &ManifoldDensitySpec,
    noise: &NoiseSpec,
    center: &[f64],
    r: f64,
    opts: &OracleOptions,
) -> Result<MassEstimate> {
    let n = opts.mc_samples.max(1000);
    let draw = sample(spec, noise, n, opts.mc_seed)?;
    let mut hits = 0usize;
    for i in 0..n {
        if dist(draw.observed.point(i), center) <= r {
            hits += 1;
        }
    }
    let p = hits as f64 / n as f64;
    let se = (p * (1.0 - p) / n as f64).sqrt();
    Ok(MassEstimate { value: p, method: MassMethod::MonteCarlo { se } })
}

/// Volume oracle over the support of a spec (densities ignored): drives the
/// adaptive sweep when the manifold is known, including the glued instance.
#[derive(Debug, Clone)]
pub struct SupportVolumeOracle {
    slabs: Vec<SlabPiece>,
    d: usize,
    total: f64,
    max_radius: f64,
}

impl SupportVolumeOracle {
    pub fn new(spec: &ManifoldDensitySpec) -> Result<Self> {
        let slabs: Vec<SlabPiece> = match spec.geometry() {
            Geometry::Slabs(slabs) => slabs.clone(),
            Geometry::Mixture { sphere, .. } => vec![SlabPiece {
                sphere: sphere.clone(),
                u1_lo: -1.0,
                u1_hi: 1.0,
                volume: sphere.surface_volume(),
                density: 1.0,
                component: 0,
            }],
        };
        let d = slabs[0].sphere.d();
        let total = slabs.iter().map(|s| s.volume).sum();
        let max_radius = slabs
            .iter()
            .map(|s| s.sphere.center().iter().map(|c| c.abs()).fold(0.0, f64::max) + s.sphere.tau())
            .fold(0.0, f64::max)
            * 2.0
            + 1.0;
        Ok(SupportVolumeOracle { slabs, d, total, max_radius })
    }
}

impl VolumeOracle for SupportVolumeOracle {
    fn intrinsic_dim(&self) -> usize {
        self.d
    }

    fn total_volume(&self) -> f64 {
        self.total
    }

    fn max_radius(&self) -> f64 {
        self.max_radius
    }

    fn ball_volume(&self, x: &[f64], r: f64) -> Result<f64> {
        let mut total = 0.0;
        for s in &self.slabs {
            match ball_cap_on_sphere(&s.sphere, x, r) {
                SphereCap::Empty => {}
                SphereCap::Full => total += s.volume,
                SphereCap::Partial { phi, psi, u1_lo, u1_hi } => {
                    if u1_lo >= s.u1_lo - SLAB_TOL && u1_hi <= s.u1_hi + SLAB_TOL {
                        total += cap_volume_polar(s.sphere.d(), s.sphere.tau(), phi)?;
                    } else if u1_hi <= s.u1_lo + SLAB_TOL || u1_lo >= s.u1_hi - SLAB_TOL {
                        // disjoint
                    } else {
                        total += cap_slab_volume(s.sphere.d(), s.sphere.tau(), phi, psi, s.u1_lo, s.u1_hi)?;
                    }
                }
            }
        }
        Ok(total)
    }

    fn contains(&self, x: &[f64]) -> bool {
        self.slabs.iter().any(|s| {
            s.sphere.on_surface(x) && {
                let u1 = s.sphere.intrinsic_unit(x)[0];
                s.contains_unit(u1)
            }
        })
    }
}
