//! Volume computations on embedded spheres: unit-ball volumes, spherical-cap
//! volumes (exact and series), ball-volume sandwich bounds, great-circle
//! distances, covering-number bounds and greedy covering nets.
//!
//! The sphere is the one manifold with exact oracles here; every synthetic
//! instance in [`crate::samplers`] is assembled from sphere pieces so that
//! all mass computations reduce to cap volumes.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::points::dist;
use crate::quadrature;

/// Orthonormality tolerance for embedding frames.
pub const BASIS_TOL: f64 = 1e-12;
/// How far a point may sit off the sphere surface, relative to tau.
pub const SURFACE_TOL: f64 = 1e-9;

/// A round `d`-sphere of radius `tau` embedded in `R^D` through an
/// orthonormal `(d+1)`-frame. For a sphere the reciprocal condition number
/// is exactly the radius.
#[derive(Debug, Clone)]
pub struct SphereSpec {
    d: usize,
    tau: f64,
    center: Vec<f64>,
    /// Column-major `D x (d+1)` orthonormal frame.
    basis: Vec<f64>,
    ambient_dim: usize,
}

impl SphereSpec {
    /// Sphere spanned by the first `d+1` ambient axes, centered at `center`
    /// (the origin if `None`).
    pub fn axis_aligned(d: usize, tau: f64, ambient_dim: usize, center: Option<Vec<f64>>) -> Result<Self> {
        let mut basis = vec![0.0; ambient_dim * (d + 1)];
        for j in 0..=d {
            basis[j * ambient_dim + j] = 1.0;
        }
        let center = center.unwrap_or_else(|| vec![0.0; ambient_dim]);
        SphereSpec::new(d, tau, center, basis, ambient_dim)
    }

    pub fn new(d: usize, tau: f64, center: Vec<f64>, basis: Vec<f64>, ambient_dim: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("intrinsic dimension d must be >= 1"));
        }
        if !(tau > 0.0) {
            return Err(Error::invalid("sphere radius tau must be positive"));
        }
        if ambient_dim < d + 1 {
            return Err(Error::invalid(format!(
                "ambient dimension {} must be at least d+1 = {}",
                ambient_dim,
                d + 1
            )));
        }
        if center.len() != ambient_dim || basis.len() != ambient_dim * (d + 1) {
            return Err(Error::invalid("center/basis shapes do not match ambient dimension"));
        }
        let spec = SphereSpec { d, tau, center, basis, ambient_dim };
        for i in 0..=d {
            for j in i..=d {
                let dot = spec.basis_col(i).iter().zip(spec.basis_col(j)).map(|(a, b)| a * b).sum::<f64>();
                let want = if i == j { 1.0 } else { 0.0 };
                if (dot - want).abs() > BASIS_TOL {
                    return Err(Error::invalid(format!(
                        "basis columns {} and {} not orthonormal (dot {})",
                        i, j, dot
                    )));
                }
            }
        }
        Ok(spec)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    fn basis_col(&self, j: usize) -> &[f64] {
        &self.basis[j * self.ambient_dim..(j + 1) * self.ambient_dim]
    }

    /// Embeds an intrinsic unit vector `u` in `R^{d+1}` as an ambient surface
    /// point `center + tau * B u`.
    pub fn embed_unit(&self, u: &[f64]) -> Vec<f64> {
        debug_assert_eq!(u.len(), self.d + 1);
        let mut p = self.center.clone();
        for (j, &uj) in u.iter().enumerate() {
            let col = self.basis_col(j);
            for (pi, &bij) in p.iter_mut().zip(col) {
                *pi += self.tau * uj * bij;
            }
        }
        p
    }

    /// Intrinsic coordinates `B^T (p - center) / tau` of an ambient point.
    pub fn intrinsic_unit(&self, p: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; self.d + 1];
        for (j, uj) in u.iter_mut().enumerate() {
            *uj = self.intrinsic_component(p, j) / self.tau;
        }
        u
    }

    /// j-th unnormalized intrinsic coordinate of `p - center`.
    pub fn intrinsic_component(&self, p: &[f64], j: usize) -> f64 {
        self.basis_col(j)
            .iter()
            .zip(p.iter().zip(self.center.iter()))
            .map(|(b, (x, c))| b * (x - c))
            .sum()
    }

    /// Squared norm of the out-of-span component of `p - center`, formed by
    /// explicit vector subtraction.
    pub fn off_span_sq(&self, p: &[f64]) -> f64 {
        let t: Vec<f64> = (0..=self.d).map(|j| self.intrinsic_component(p, j)).collect();
        let mut res_sq = 0.0;
        for (i, (&pi, &ci)) in p.iter().zip(self.center.iter()).enumerate() {
            let mut ri = pi - ci;
            for (j, &tj) in t.iter().enumerate() {
                ri -= self.basis[j * self.ambient_dim + i] * tj;
            }
            res_sq += ri * ri;
        }
        res_sq
    }

    /// Distance of `p` from the surface, measured in the ambient space.
    ///
    /// For points inside the span of the frame this is `| |p-c| - tau |`;
    /// any out-of-span component adds to it. The residual is formed by
    /// explicit vector subtraction, not by differencing squared norms.
    pub fn surface_gap(&self, p: &[f64]) -> f64 {
        let in_span_sq: f64 = (0..=self.d).map(|j| self.intrinsic_component(p, j).powi(2)).sum();
        let in_span = in_span_sq.sqrt();
        ((in_span - self.tau).powi(2) + self.off_span_sq(p)).sqrt()
    }

    pub fn on_surface(&self, p: &[f64]) -> bool {
        self.surface_gap(p) <= SURFACE_TOL * self.tau
    }

    /// Full surface volume `(d+1) v_{d+1} tau^d`.
    pub fn surface_volume(&self) -> f64 {
        sphere_surface_volume(self.d, self.tau)
    }

    /// Draws a uniform surface point (ambient coordinates).
    pub fn sample_uniform<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let u = sample_unit_sphere(self.d, rng);
        self.embed_unit(&u)
    }
}

/// Uniform draw from the unit `d`-sphere in `R^{d+1}` via normalized
/// Gaussians.
pub fn sample_unit_sphere<R: Rng>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let mut u: Vec<f64> = (0..=d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            for x in u.iter_mut() {
                *x /= norm;
            }
            return u;
        }
    }
}

/// Volume of the unit ball in `R^d`, by the two-step recurrence
/// `v_d = 2 pi v_{d-2} / d`.
pub fn unit_ball_volume(d: usize) -> Result<f64> {
    if d == 0 {
        return Err(Error::invalid("unit_ball_volume requires d >= 1"));
    }
    let mut v = if d.is_multiple_of(2) { 1.0 } else { 2.0 };
    let mut k = if d.is_multiple_of(2) { 0 } else { 1 };
    while k < d {
        k += 2;
        v *= 2.0 * std::f64::consts::PI / k as f64;
    }
    Ok(v)
}

/// Surface volume of the `d`-sphere of radius `tau`: `(d+1) v_{d+1} tau^d`.
pub fn sphere_surface_volume(d: usize, tau: f64) -> f64 {
    (d as f64 + 1.0) * unit_ball_volume(d + 1).expect("d+1 >= 2") * tau.powi(d as i32)
}

/// Relative residual tolerance for the cap-volume quadrature.
const CAP_QUAD_TOL: f64 = 1e-13;

/// Cap volume by polar angle: `d v_d tau^d \int_0^phi sin^{d-1} t dt`.
///
/// This is the incomplete-beta cap formula after substituting
/// `u = sin^2 t`, which removes both endpoint singularities and extends
/// continuously past the hemisphere (`phi > pi/2`).
pub fn cap_volume_polar(d: usize, tau: f64, phi: f64) -> Result<f64> {
    if d == 0 {
        return Err(Error::invalid("cap volume requires d >= 1"));
    }
    if !(0.0..=std::f64::consts::PI).contains(&phi) {
        return Err(Error::invalid(format!("polar angle {} outside [0, pi]", phi)));
    }
    let vd = unit_ball_volume(d)?;
    let exp = d as i32 - 1;
    let integrand = |t: f64| t.sin().powi(exp);
    // Rough pass pins the scale so the tolerance is relative.
    let rough = quadrature::adaptive(&integrand, 0.0, phi, 1e-6);
    let tol = (rough.value.abs() * CAP_QUAD_TOL).max(1e-300);
    let q = quadrature::adaptive(&integrand, 0.0, phi, tol);
    if !q.converged {
        return Err(Error::NumericFailure { what: "cap volume quadrature".into(), residual: q.residual });
    }
    Ok(d as f64 * vd * tau.powi(d as i32) * q.value)
}

/// Exact `d`-dimensional surface volume of `B(x, r) ∩ S^d(tau)` for a point
/// `x` on the sphere, where `r` is the chord (Euclidean) radius.
///
/// `r = 2 tau` closes the formula at the full sphere surface volume.
pub fn cap_volume_exact(d: usize, tau: f64, r: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::invalid("tau must be positive"));
    }
    if !(0.0..=2.0 * tau + 1e-12 * tau).contains(&r) {
        return Err(Error::invalid(format!("chord radius {} outside [0, 2 tau = {}]", r, 2.0 * tau)));
    }
    let ratio = (r / (2.0 * tau)).min(1.0);
    let phi = 2.0 * ratio.asin();
    cap_volume_polar(d, tau, phi)
}

/// `c_d = d (d - 2) / (8 (d + 2))`; zero at `d = 2`, negative at `d = 1`.
pub fn cap_series_coefficient(d: usize) -> f64 {
    let df = d as f64;
    df * (df - 2.0) / (8.0 * (df + 2.0))
}

/// Second-order small-cap expansion `v_d r^d (1 - c_d r^2/tau^2)`.
///
/// The truncated remainder is `O(r^4 / tau^4)`; callers needing more digits
/// in the curved regime should use [`cap_volume_exact`].
pub fn cap_volume_series(d: usize, tau: f64, r: f64) -> Result<f64> {
    if d == 0 {
        return Err(Error::invalid("cap volume requires d >= 1"));
    }
    if r < 0.0 || !(tau > 0.0) {
        return Err(Error::invalid("need r >= 0 and tau > 0"));
    }
    if r / tau > 0.25 {
        return Err(Error::regime(format!("series regime requires r/tau <= 0.25, got {}", r / tau)));
    }
    let vd = unit_ball_volume(d)?;
    let cd = cap_series_coefficient(d);
    Ok(vd * r.powi(d as i32) * (1.0 - cd * r * r / (tau * tau)))
}

/// Sandwich bounds for the volume of a radius-`r` ball on a manifold with
/// reciprocal condition number `tau`.
#[derive(Debug, Clone, Copy)]
pub struct VolumeBounds {
    pub lower: f64,
    pub upper: f64,
    pub r1: f64,
    d: usize,
    tau: f64,
    r: f64,
}

impl VolumeBounds {
    /// True iff `r <= eps * tau / (72 d)`, the regime in which the sandwich
    /// tightens to `v_d r^d (1 ± eps/6)`.
    pub fn epsilon_regime(&self, eps: f64) -> bool {
        self.r <= eps * self.tau / (72.0 * self.d as f64)
    }
}

/// Two-sided bounds on `vol_d(B(x, r) ∩ M)`, valid for `0 < r < tau/2`.
///
/// For `r >= 3 tau / 8` the upper-bound expression degenerates
/// (`tau - 2 r1 <= 0`) and the bound is reported as infinite.
pub fn ball_volume_bounds(d: usize, tau: f64, r: f64) -> Result<VolumeBounds> {
    if d == 0 || !(tau > 0.0) {
        return Err(Error::invalid("need d >= 1 and tau > 0"));
    }
    if !(r > 0.0 && r < tau / 2.0) {
        return Err(Error::regime(format!("ball volume bounds require 0 < r < tau/2, got r={} tau={}", r, tau)));
    }
    let vd = unit_ball_volume(d)?;
    let lower = (1.0 - r * r / (4.0 * tau * tau)).powf(d as f64 / 2.0) * vd * r.powi(d as i32);
    let r1 = tau - tau * (1.0 - 2.0 * r / tau).sqrt();
    let upper = if r1 < tau / 2.0 {
        vd * (tau / (tau - 2.0 * r1)).powi(d as i32) * r1.powi(d as i32)
    } else {
        f64::INFINITY
    };
    Ok(VolumeBounds { lower, upper, r1, d, tau, r })
}

/// Exact great-circle distance `2 tau asin(chord / 2 tau)` between two
/// points on the sphere.
pub fn geodesic_distance(sphere: &SphereSpec, p: &[f64], q: &[f64]) -> Result<f64> {
    for (name, pt) in [("p", p), ("q", q)] {
        if !sphere.on_surface(pt) {
            return Err(Error::invalid(format!(
                "point {} is off the sphere by {:e} (tolerance {:e})",
                name,
                sphere.surface_gap(pt),
                SURFACE_TOL * sphere.tau()
            )));
        }
    }
    let chord = dist(p, q);
    let ratio = (chord / (2.0 * sphere.tau())).min(1.0);
    Ok(2.0 * sphere.tau() * ratio.asin())
}

/// Upper bound on the `s`-covering number of a manifold of volume `vol_m`:
/// `ceil( vol_m / (cos^d(asin(s/4tau)) v_d (s/2)^d) )`.
pub fn covering_number_bound(vol_m: f64, d: usize, tau: f64, s: f64) -> Result<u64> {
    if d == 0 || !(tau > 0.0) || !(vol_m > 0.0) {
        return Err(Error::invalid("need d >= 1, tau > 0, vol_m > 0"));
    }
    if !(s > 0.0 && s <= 2.0 * tau) {
        return Err(Error::regime(format!("covering bound requires 0 < s <= 2 tau, got s={}", s)));
    }
    let vd = unit_ball_volume(d)?;
    let cosine = (s / (4.0 * tau)).asin().cos();
    let denom = cosine.powi(d as i32) * vd * (s / 2.0).powi(d as i32);
    Ok((vol_m / denom).ceil() as u64)
}

/// Greedy farthest-point `s`-net over a dense random surface sample.
///
/// Every sample point ends within chord distance `s` of some net point; the
/// net is deterministic in `seed`.
pub fn build_net(sphere: &SphereSpec, s: f64, seed: u64) -> Result<Vec<Vec<f64>>> {
    if !(s > 0.0) {
        return Err(Error::invalid("net radius must be positive"));
    }
    let bound = covering_number_bound(sphere.surface_volume(), sphere.d(), sphere.tau(), s.min(2.0 * sphere.tau()))?;
    let dense_n = (bound.saturating_mul(40)).clamp(512, 40_000) as usize;
    let mut rng = crate::seed::rng(seed, "geometry/net");
    let sample: Vec<Vec<f64>> = (0..dense_n).map(|_| sphere.sample_uniform(&mut rng)).collect();
    Ok(greedy_net(&sample, s))
}

/// Farthest-point traversal until all candidates are covered within `s`.
pub fn greedy_net(sample: &[Vec<f64>], s: f64) -> Vec<Vec<f64>> {
    if sample.is_empty() {
        return Vec::new();
    }
    let n = sample.len();
    let mut nearest = vec![f64::INFINITY; n];
    let mut net: Vec<Vec<f64>> = Vec::new();
    let mut next = 0usize; // deterministic start
    loop {
        net.push(sample[next].clone());
        let centre = &sample[next];
        let mut far_idx = 0usize;
        let mut far_dist = -1.0;
        for i in 0..n {
            let d = dist(&sample[i], centre);
            if d < nearest[i] {
                nearest[i] = d;
            }
            if nearest[i] > far_dist {
                far_dist = nearest[i];
                far_idx = i;
            }
        }
        if far_dist <= s {
            return net;
        }
        next = far_idx;
    }
}

/// Greedy farthest-point selection of exactly `count` well-spread surface
/// points (used for mixture bump centers).
pub fn farthest_points(sphere: &SphereSpec, count: usize, seed: u64) -> Vec<Vec<f64>> {
    if count == 0 {
        return Vec::new();
    }
    let dense_n = (count * 400).clamp(512, 20_000);
    let mut rng = crate::seed::rng(seed, "geometry/fps");
    let sample: Vec<Vec<f64>> = (0..dense_n).map(|_| sphere.sample_uniform(&mut rng)).collect();
    let n = sample.len();
    let mut nearest = vec![f64::INFINITY; n];
    let mut picked = vec![0usize];
    while picked.len() < count {
        let centre = &sample[*picked.last().unwrap()];
        let mut far_idx = 0usize;
        let mut far_dist = -1.0;
        for i in 0..n {
            let d = dist(&sample[i], centre);
            if d < nearest[i] {
                nearest[i] = d;
            }
            if nearest[i] > far_dist {
                far_dist = nearest[i];
                far_idx = i;
            }
        }
        picked.push(far_idx);
    }
    picked.into_iter().map(|i| sample[i].clone()).collect()
}
