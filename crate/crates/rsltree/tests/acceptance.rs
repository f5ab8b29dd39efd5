//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line
//! (run with `cargo test --test acceptance -- --nocapture` to see them all).
//!
//! Every tolerance and threshold is pinned here. Randomized criteria use
//! fixed seeds, so the whole suite is deterministic.

use rsltree::eval::{
    self, experiment_sweep, plan_cell, Algorithm, CellSpec, InstanceSpec, VerdictKind,
};
use rsltree::geometry::{
    ball_volume_bounds, build_net, cap_volume_exact, cap_volume_series, sphere_surface_volume,
    unit_ball_volume, SphereSpec,
};
use rsltree::kde::{kde_at, ExponentMode, KDEConfig};
use rsltree::params::{
    choose_k, choose_r, mu, mu_poly, readout_equation_lhs, rho, theta_gate, Constants, Regime,
    RhoBranch, SalienceParams,
};
use rsltree::points::{dist, PointCloud};
use rsltree::rsl::{brute_force_components, rsl_sweep, ConnectionRule, RSLConfig};
use rsltree::samplers::{
    sample, ManifoldDensitySpec, NoiseProfile, NoiseSpec, PointOrigin,
};

use rand::Rng;
use rayon::prelude::*;

/// The criteria carry wall-clock budgets, so they run one at a time and
/// each gets the whole machine for its parallel trials.
static GATE: std::sync::Mutex<()> = std::sync::Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    GATE.lock().unwrap_or_else(|poison| poison.into_inner())
}

fn pass(idx: u32, name: &str, detail: &str) {
    println!("ACCEPTANCE {} ({}): PASS — {}", idx, name, detail);
}

// ---------------------------------------------------------------------------
// 1. Dendrogram oracle equivalence
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_dendrogram_oracle_equivalence() {
    let _serial = serial();
    let start = std::time::Instant::now();
    let mut mismatches = 0usize;
    let mut checks = 0usize;
    for inst in 0..200u64 {
        let mut rng = rsltree::seed::rng(inst, "acceptance/oracle");
        let n = rng.random_range(2..=60);
        let dim = rng.random_range(1..=5);
        let rows: Vec<Vec<f64>> =
            (0..n).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let pts = PointCloud::from_rows(&rows).unwrap();
        let k = rng.random_range(1..=n.min(8));
        for rule in [
            ConnectionRule::FixedR(rng.random_range(0.1..1.5)),
            ConnectionRule::Proportional(rng.random_range(1.0..5.0)),
        ] {
            let cfg = RSLConfig { k, rule };
            let dendro = rsl_sweep(&pts, &cfg).unwrap();
            let mut radii = dendro.event_radii();
            let mids: Vec<f64> = radii.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
            radii.extend(mids);
            for r in radii {
                checks += 1;
                let swept = dendro.components_at(r);
                let brute = brute_force_components(&pts, &cfg, r).unwrap();
                if swept != brute {
                    mismatches += 1;
                }
            }
        }
    }
    assert_eq!(mismatches, 0, "{} mismatches out of {} partition checks", mismatches, checks);
    assert!(start.elapsed().as_secs() < 60, "criterion 1 overran: {:?}", start.elapsed());
    pass(1, "dendrogram oracle equivalence", &format!("{} partition checks, 0 mismatches, {:?}", checks, start.elapsed()));
}

// ---------------------------------------------------------------------------
// 2. Cap-volume identities
// ---------------------------------------------------------------------------

#[test]
fn criterion_2_cap_volume_identities() {
    let _serial = serial();
    let start = std::time::Instant::now();
    // (a) d = 2 exactness: cap area = pi r^2 to 1e-12 relative, 1000 pairs.
    let mut rng = rsltree::seed::rng(2, "acceptance/caps");
    for _ in 0..1000 {
        let tau = rng.random_range(0.05..3.0);
        let r = rng.random_range(0.0..=2.0 * tau);
        let exact = cap_volume_exact(2, tau, r).unwrap();
        let closed = std::f64::consts::PI * r * r;
        let err = if closed == 0.0 { exact.abs() } else { (exact - closed).abs() / closed };
        assert!(err <= 1e-12, "d=2 cap error {} at tau={} r={}", err, tau, r);
    }
    // (b) Monte Carlo agreement at 1e7 samples for d in {3, 4}.
    for d in [3usize, 4] {
        let tau = 1.0;
        let r = 0.6;
        let sphere = SphereSpec::axis_aligned(d, tau, d + 1, None).unwrap();
        let x = {
            let mut u = vec![0.0; d + 1];
            u[0] = 1.0;
            sphere.embed_unit(&u)
        };
        let n = 10_000_000usize;
        let chunks = 64usize;
        let hits: u64 = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut rng = rsltree::seed::rng(c as u64, "acceptance/caps-mc");
                let mut h = 0u64;
                for _ in 0..n / chunks {
                    let p = sphere.sample_uniform(&mut rng);
                    if dist(&p, &x) <= r {
                        h += 1;
                    }
                }
                h
            })
            .sum();
        let drawn = (n / chunks) * chunks;
        let p_hat = hits as f64 / drawn as f64;
        let total = sphere_surface_volume(d, tau);
        let mc = p_hat * total;
        let se = total * (p_hat * (1.0 - p_hat) / drawn as f64).sqrt();
        let exact = cap_volume_exact(d, tau, r).unwrap();
        assert!(
            (mc - exact).abs() <= 3.0 * se,
            "d={} cap MC {} vs exact {} (3se = {})",
            d,
            mc,
            exact,
            3.0 * se
        );
    }
    // (c) Volume-bound sandwich on 1000 random triples, zero violations.
    let mut violations = 0usize;
    for _ in 0..1000 {
        let d = rng.random_range(1..=5);
        let tau = rng.random_range(0.1..2.0);
        let r = rng.random_range(1e-6..tau / 2.0 * 0.999999);
        let b = ball_volume_bounds(d, tau, r).unwrap();
        let exact = cap_volume_exact(d, tau, r).unwrap();
        if !(b.lower <= exact * (1.0 + 1e-12) && exact <= b.upper * (1.0 + 1e-12)) {
            violations += 1;
        }
    }
    assert_eq!(violations, 0, "sandwich violations: {}", violations);
    assert!(start.elapsed().as_secs() < 120, "criterion 2 overran: {:?}", start.elapsed());
    pass(2, "cap-volume identities", &format!("d=2 exactness, MC agreement (1e7), sandwich x1000; {:?}", start.elapsed()));
}

// ---------------------------------------------------------------------------
// 3. Parameter transcription
// ---------------------------------------------------------------------------

#[test]
fn criterion_3_parameter_transcription() {
    let _serial = serial();
    let start = std::time::Instant::now();
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
    let base = |sigma: f64, eps: f64, lam: f64, tau: f64, d: usize| SalienceParams {
        sigma,
        epsilon: eps,
        lambda: lam,
        tau,
        d,
        delta: 0.05,
        constants: Constants::default(),
    };
    // rho worked examples.
    let r1 = rho(&base(16.0, 0.72, 1.0, 100.0, 1), Regime::Noiseless);
    assert!(rel(r1.value, 1.0) <= 1e-12 && r1.branch == RhoBranch::EpsilonTau);
    let r2 = rho(&base(7.0, 0.144, 1.0, 24.0, 1), Regime::Additive);
    assert!(rel(r2.value, 0.024) <= 1e-12);
    // mu worked examples.
    assert!(rel(mu(1000, 0.1, 2).unwrap().value, 1000f64.ln() + 2.0 * 10f64.ln()) <= 1e-12);
    assert!(rel(mu_poly(2.0, 1000).unwrap(), 4.0 * 1000f64.ln()) <= 1e-12);
    // choose_k worked examples (C_delta = 2 at delta = 2/e, C0 = 1).
    let mut pk = base(1.0, 1.0, 1.0, 1.0, 1);
    pk.delta = 2.0 / std::f64::consts::E;
    assert_eq!(choose_k(&pk, 1.0, Regime::Noiseless).k, 64);
    assert_eq!(choose_k(&pk, 1.0, Regime::Clutter { pi: 0.5 }).k, 576);
    // choose_r closed form at C_delta = 0.
    let mut pr = base(1.0, 0.0, 1.0 / std::f64::consts::PI, 1.0, 2);
    pr.constants = Constants::from_c0(0.0);
    let out = choose_r(&pr, 40, 1000, 5.0, Regime::Noiseless).unwrap();
    assert!(rel(out.r, 0.2) <= 1e-12, "r = {}", out.r);
    // Round-trip residual of the defining equation across regimes.
    let mut prt = base(1.0, 0.3, 0.2, 1.0, 3);
    prt.constants = Constants::from_c0(0.7);
    for regime in [Regime::Noiseless, Regime::Clutter { pi: 0.8 }, Regime::Additive] {
        let o = choose_r(&prt, 25, 5000, 9.0, regime).unwrap();
        let lhs = readout_equation_lhs(&prt, regime, o.r).unwrap();
        assert!(rel(lhs, o.rhs) <= 1e-12, "round trip residual {}", rel(lhs, o.rhs));
    }
    // theta gate worked example.
    let pt = base(1.0, 0.5, 1.0, 1.0, 1);
    assert!(rel(theta_gate(&pt, 0.24), 0.005) <= 1e-12);
    // Gate coherence over a 10^4 random grid: gate holding implies r <= rho.
    let mut rng = rsltree::seed::rng(3, "acceptance/gate");
    let mut gate_cases = 0u32;
    for _ in 0..10_000 {
        let p = SalienceParams {
            sigma: rng.random_range(0.01..10.0),
            epsilon: rng.random_range(0.01..0.499),
            lambda: 10f64.powf(rng.random_range(-3.0..3.0)),
            tau: rng.random_range(0.01..10.0),
            d: rng.random_range(1..6),
            delta: rng.random_range(0.001..0.5),
            constants: Constants::from_c0(10f64.powf(rng.random_range(-2.0..1.0))),
        };
        let regime = Regime::Noiseless;
        let rr = rho(&p, regime);
        let n = rng.random_range(100..10_000_000u64);
        let m = mu(n, rr.value, p.d).unwrap();
        let k = choose_k(&p, m.value, regime);
        if k.k > n {
            continue;
        }
        let out = choose_r(&p, k.k, n, m.value, regime).unwrap();
        if out.gate_holds {
            gate_cases += 1;
            assert!(out.feasible, "gate held but r = {} > rho = {}", out.r, out.rho);
        }
    }
    assert!(gate_cases > 100, "gate exercised only {} times", gate_cases);
    assert!(start.elapsed().as_secs() < 10, "criterion 3 overran: {:?}", start.elapsed());
    pass(3, "parameter transcription", &format!("worked examples, round trips, gate coherence ({} gate cases)", gate_cases));
}

// ---------------------------------------------------------------------------
// 4. Uniform-convergence frequency
// ---------------------------------------------------------------------------

#[test]
fn criterion_4_uniform_convergence_frequency() {
    let _serial = serial();
    let start = std::time::Instant::now();
    let sphere = SphereSpec::axis_aligned(2, 1.0, 3, None).unwrap();
    let spec = ManifoldDensitySpec::uniform_sphere(sphere.clone()).unwrap();
    let n = 2000usize;
    let delta = 0.05;
    let c0 = 1.0;
    // k from choose_k at (sigma = 1, eps = 0.3, lambda = 1/(4 pi)).
    let p = SalienceParams {
        sigma: 1.0,
        epsilon: 0.3,
        lambda: 1.0 / (4.0 * std::f64::consts::PI),
        tau: 1.0,
        d: 2,
        delta,
        constants: Constants::from_c0(c0),
    };
    let rr = rho(&p, Regime::Noiseless);
    let m = mu(n as u64, rr.value, 2).unwrap();
    let k = choose_k(&p, m.value, Regime::Noiseless).k;
    let net = build_net(&sphere, 0.25, 4001).unwrap();
    // 16 radii, geometric from 0.05 to 2.0.
    let radii: Vec<f64> = (0..16).map(|i| 0.05 * (40.0f64).powf(i as f64 / 15.0)).collect();
    let trials = 200usize;
    let violating: usize = (0..trials)
        .into_par_iter()
        .map(|t| {
            let s = sample(&spec, &NoiseSpec::None, n, 50_000 + t as u64).unwrap();
            let rep = eval::verify_uniform_convergence(&s, &spec, &net, k, delta, c0, &radii).unwrap();
            usize::from(!rep.clean())
        })
        .sum();
    let freq = violating as f64 / trials as f64;
    let bound = 0.05 + 3.0 * (0.05f64 * 0.95 / trials as f64).sqrt();
    assert!(freq <= bound, "violation frequency {} > {}", freq, bound);
    assert!(start.elapsed().as_secs() < 600, "criterion 4 overran: {:?}", start.elapsed());
    pass(
        4,
        "uniform-convergence frequency",
        &format!("k = {}, freq = {:.4} <= {:.4} over {} samples, {:?}", k, freq, bound, trials, start.elapsed()),
    );
}

// ---------------------------------------------------------------------------
// 5. Hard-instance recovery at desk scale
// ---------------------------------------------------------------------------

/// Desk-scale constants for the glued instance (the default C0 = 1 puts
/// the feasible n past 1e7, which is the hard instance's whole point; the
/// report records the constants used).
const DESK_C0: f64 = 0.0745;

fn lower_bound_cell(name: &str, d: usize, tau: f64, eps: f64, n: usize, alg: Algorithm) -> CellSpec {
    CellSpec {
        name: name.into(),
        instance: InstanceSpec::LowerBound { d, tau, lambda: None, epsilon: eps, ambient_dim: d + 1 },
        noise: NoiseSpec::None,
        n,
        sigma: 0.5,
        epsilon: eps,
        delta: 0.05,
        c0: DESK_C0,
        lambda: None,
        k_override: None,
        r_override: None,
        rule: ConnectionRule::FixedR(0.15),
        algorithm: alg,
        verdict: VerdictKind::Pair,
        min_success: None,
        require_feasible: false,
    }
}

#[test]
fn criterion_5_hard_instance_recovery() {
    let _serial = serial();
    let start = std::time::Instant::now();
    // n from the sample-size guidance, capped at 20000 (the guidance at
    // default constants is astronomically larger, so the cap binds).
    let spec_params = SalienceParams {
        sigma: 0.5,
        epsilon: 0.4,
        lambda: 0.0908,
        tau: 0.2,
        d: 2,
        delta: 0.05,
        constants: Constants::default(),
    };
    let guidance = rsltree::params::sample_size_bound(&spec_params, Regime::Noiseless).unwrap();
    let n = (guidance.upper_estimate.min(20_000.0)) as usize;
    assert_eq!(n, 20_000, "guidance {} should cap at 20000", guidance.upper_estimate);
    let cell = lower_bound_cell("hard-instance", 2, 0.2, 0.4, n, Algorithm::Plain);
    let plan = plan_cell(&cell).unwrap();
    let report = experiment_sweep(&[cell], 50, 777).unwrap();
    let agg = &report.aggregates[0];
    assert!(
        agg.p_hat >= 0.9,
        "success frequency {:.3} < 0.9 ({}/{} trials)",
        agg.p_hat,
        agg.successes,
        agg.trials
    );
    assert!(start.elapsed().as_secs() < 600, "criterion 5 overran: {:?}", start.elapsed());
    pass(
        5,
        "hard-instance recovery at desk scale",
        &format!(
            "n = {}, k = {}, r = {:.4} (C0 = {}), success {:.3} >= 0.9 over {} trials, {:?}",
            n, plan.k, plan.r, DESK_C0, agg.p_hat, agg.trials, start.elapsed()
        ),
    );
}

// ---------------------------------------------------------------------------
// 6. Success-probability trends
// ---------------------------------------------------------------------------

fn mixture_clutter_cell(name: &str, ambient: usize, n: usize, c0: f64) -> CellSpec {
    CellSpec {
        name: name.into(),
        instance: InstanceSpec::Mixture { d: 2, tau: 1.0, ambient_dim: ambient, bump_chord: 0.22, centers_seed: 7 },
        noise: NoiseSpec::Clutter { pi: 0.8, box_halfwidth: 2.0 },
        n,
        sigma: 0.15,
        epsilon: 0.45,
        delta: 0.05,
        c0,
        lambda: None,
        k_override: None,
        r_override: None,
        rule: ConnectionRule::FixedR(0.25),
        algorithm: Algorithm::Plain,
        verdict: VerdictKind::Multiway,
        min_success: None,
        require_feasible: false,
    }
}

fn pooled_se(p1: f64, n1: usize, p2: f64, n2: usize) -> f64 {
    let pooled = (p1 * n1 as f64 + p2 * n2 as f64) / (n1 + n2) as f64;
    (pooled * (1.0 - pooled) * (1.0 / n1 as f64 + 1.0 / n2 as f64)).sqrt()
}

#[test]
fn criterion_6_success_probability_trends() {
    let _serial = serial();
    let start = std::time::Instant::now();
    // (a) D-invariance on the clutter mixture across five ambient dimensions.
    let cells: Vec<CellSpec> =
        [20usize, 40, 60, 80, 100].iter().map(|&dd| mixture_clutter_cell(&format!("D{}", dd), dd, 1200, 0.00745)).collect();
    let rep_a = experiment_sweep(&cells, 50, 606).unwrap();
    for i in 0..rep_a.aggregates.len() {
        for j in (i + 1)..rep_a.aggregates.len() {
            let (a, b) = (&rep_a.aggregates[i], &rep_a.aggregates[j]);
            let se = pooled_se(a.p_hat, a.trials, b.p_hat, b.trials);
            assert!(
                (a.p_hat - b.p_hat).abs() <= 3.0 * se,
                "D-invariance broken: {} = {:.3} vs {} = {:.3} (3 pooled se = {:.3})",
                a.cell,
                a.p_hat,
                b.cell,
                b.p_hat,
                3.0 * se
            );
        }
    }
    let detail_a: Vec<String> = rep_a.aggregates.iter().map(|a| format!("{}={:.2}", a.cell, a.p_hat)).collect();
    // (b) d-decay on the hard instance at matched (n, eps).
    let rep_b = experiment_sweep(
        &[
            lower_bound_cell("d2", 2, 0.2, 0.4, 20_000, Algorithm::Plain),
            lower_bound_cell("d4", 4, 0.2, 0.4, 20_000, Algorithm::Plain),
        ],
        50,
        909,
    )
    .unwrap();
    let p_d2 = rep_b.aggregates[0].p_hat;
    let p_d4 = rep_b.aggregates[1].p_hat;
    assert!(p_d2 >= p_d4, "d-decay violated: d2 {:.3} < d4 {:.3}", p_d2, p_d4);
    // (c) eps-growth at fixed (d, n), nondecreasing within 1 pooled SE.
    let rep_c = experiment_sweep(
        &[
            lower_bound_cell("eps0.2", 2, 0.2, 0.2, 6000, Algorithm::Plain),
            lower_bound_cell("eps0.4", 2, 0.2, 0.4, 6000, Algorithm::Plain),
            lower_bound_cell("eps0.6", 2, 0.2, 0.6, 6000, Algorithm::Plain),
        ],
        50,
        303,
    )
    .unwrap();
    for w in rep_c.aggregates.windows(2) {
        let se = pooled_se(w[0].p_hat, w[0].trials, w[1].p_hat, w[1].trials);
        assert!(
            w[1].p_hat >= w[0].p_hat - se,
            "eps-growth violated: {} = {:.3} then {} = {:.3} (1 pooled se = {:.3})",
            w[0].cell,
            w[0].p_hat,
            w[1].cell,
            w[1].p_hat,
            se
        );
    }
    let detail_c: Vec<String> = rep_c.aggregates.iter().map(|a| format!("{}={:.2}", a.cell, a.p_hat)).collect();
    assert!(start.elapsed().as_secs() < 1800, "criterion 6 overran: {:?}", start.elapsed());
    pass(
        6,
        "success-probability trends",
        &format!(
            "(a) {} | (b) d2 {:.2} >= d4 {:.2} | (c) {} | {:?}",
            detail_a.join(" "),
            p_d2,
            p_d4,
            detail_c.join(" "),
            start.elapsed()
        ),
    );
}

// ---------------------------------------------------------------------------
// 7. Noise robustness
// ---------------------------------------------------------------------------

#[test]
fn criterion_7_noise_robustness() {
    let _serial = serial();
    let start = std::time::Instant::now();
    // (a) Clutter at pi = 0.8, n = 20000: multiway success requires every
    // clutter-origin point absent from the verdict components.
    let clutter_cell = mixture_clutter_cell("clutter", 10, 20_000, 0.011);
    let rep_a = experiment_sweep(&[clutter_cell], 50, 1111).unwrap();
    let agg_a = &rep_a.aggregates[0];
    assert!(agg_a.p_hat >= 0.8, "clutter success {:.3} < 0.8", agg_a.p_hat);
    let clutter_clean = rep_a.trials.iter().filter(|t| t.clutter_free == Some(true)).count();
    assert!(
        rep_a.trials.iter().all(|t| !t.record.success || t.clutter_free == Some(true)),
        "a successful trial leaked clutter into a verdict component"
    );
    // (b) Additive noise at theta = theta_gate / 2 with latent membership.
    let p_add = SalienceParams {
        sigma: 0.15,
        epsilon: 0.45,
        lambda: 0.4843,
        tau: 1.0,
        d: 2,
        delta: 0.05,
        constants: Constants::from_c0(0.033),
    };
    let rho_add = rho(&p_add, Regime::Additive);
    let theta = theta_gate(&p_add, rho_add.value) / 2.0;
    let additive_cell = CellSpec {
        name: "additive".into(),
        instance: InstanceSpec::Mixture { d: 2, tau: 1.0, ambient_dim: 3, bump_chord: 0.22, centers_seed: 7 },
        noise: NoiseSpec::Additive { theta, profile: NoiseProfile::UniformBall },
        n: 20_000,
        sigma: 0.15,
        epsilon: 0.45,
        delta: 0.05,
        c0: 0.033,
        lambda: None,
        k_override: None,
        r_override: None,
        rule: ConnectionRule::FixedR(0.25),
        algorithm: Algorithm::Plain,
        verdict: VerdictKind::Multiway,
        min_success: None,
        require_feasible: false,
    };
    let rep_b = experiment_sweep(&[additive_cell], 50, 2222).unwrap();
    let agg_b = &rep_b.aggregates[0];
    assert!(agg_b.p_hat >= 0.8, "additive success {:.3} < 0.8", agg_b.p_hat);
    assert!(start.elapsed().as_secs() < 1200, "criterion 7 overran: {:?}", start.elapsed());
    pass(
        7,
        "noise robustness",
        &format!(
            "clutter {:.2} (clutter-free in {}/{} trials), additive {:.2} at theta = {:.2e}, {:?}",
            agg_a.p_hat, clutter_clean, agg_a.trials, agg_b.p_hat, theta, start.elapsed()
        ),
    );
}

// ---------------------------------------------------------------------------
// 8. Adaptive variant
// ---------------------------------------------------------------------------

#[test]
fn criterion_8_adaptive_variant() {
    let _serial = serial();
    let start = std::time::Instant::now();
    let trials = 50;
    // Matched-budget comparison on the glued instance.
    let easy = experiment_sweep(
        &[
            lower_bound_cell("easy-plain", 2, 0.2, 0.4, 8000, Algorithm::Plain),
            lower_bound_cell("easy-adaptive", 2, 0.2, 0.4, 8000, Algorithm::Adaptive),
        ],
        trials,
        404,
    )
    .unwrap();
    let (ep, ea) = (&easy.aggregates[0], &easy.aggregates[1]);
    let se_easy = pooled_se(ep.p_hat, ep.trials, ea.p_hat, ea.trials);
    assert!(
        ea.p_hat >= ep.p_hat - se_easy,
        "equality clause failed: adaptive {:.3} < plain {:.3} - 1 se {:.3}",
        ea.p_hat,
        ep.p_hat,
        se_easy
    );
    // Stressed cell: small tau, small eps.
    let stress = experiment_sweep(
        &[
            lower_bound_cell("stress-plain", 2, 0.12, 0.25, 8000, Algorithm::Plain),
            lower_bound_cell("stress-adaptive", 2, 0.12, 0.25, 8000, Algorithm::Adaptive),
        ],
        trials,
        505,
    )
    .unwrap();
    let (sp, sa) = (&stress.aggregates[0], &stress.aggregates[1]);
    let se_stress = pooled_se(sp.p_hat, sp.trials, sa.p_hat, sa.trials).max(1.0 / trials as f64);
    let strict = sa.p_hat - sp.p_hat >= 2.0 * se_stress;
    if !strict {
        // Documented negative result: the equality clause must still hold.
        println!(
            "ACCEPTANCE 8 NOTE: strict adaptive advantage NOT observed at the stressed cell \
             (adaptive {:.3} vs plain {:.3}, 2 pooled se = {:.3}); reporting as a negative result",
            sa.p_hat, sp.p_hat, 2.0 * se_stress
        );
        assert!(
            sa.p_hat >= sp.p_hat - se_stress,
            "stressed-cell equality clause failed: adaptive {:.3} < plain {:.3} - 1 se",
            sa.p_hat,
            sp.p_hat
        );
    }
    assert!(start.elapsed().as_secs() < 1200, "criterion 8 overran: {:?}", start.elapsed());
    pass(
        8,
        "adaptive variant",
        &format!(
            "easy: adaptive {:.2} vs plain {:.2}; stressed: adaptive {:.2} vs plain {:.2} ({}), {:?}",
            ea.p_hat,
            ep.p_hat,
            sa.p_hat,
            sp.p_hat,
            if strict { "strict advantage >= 2 pooled se" } else { "negative result documented" },
            start.elapsed()
        ),
    );
}

// ---------------------------------------------------------------------------
// 9. KDE deviation rate and gap property
// ---------------------------------------------------------------------------

#[test]
fn criterion_9_kde_deviation_rate() {
    let _serial = serial();
    let start = std::time::Instant::now();
    let sphere = SphereSpec::axis_aligned(2, 1.0, 3, None).unwrap();
    let spec = ManifoldDensitySpec::uniform_sphere(sphere.clone()).unwrap();
    let h = 0.3;
    let cfg = KDEConfig { h, mode: ExponentMode::Intrinsic(2) };
    let seeds = 20usize;
    let sizes = [2500usize, 5000, 10_000, 20_000];
    let net = build_net(&sphere, h / 2.0, 31).unwrap();
    // The tau/8 regime check must be live for this bandwidth on tau = 1.
    {
        let probe_sample = sample(&spec, &NoiseSpec::None, 500, 1).unwrap();
        let probes: Vec<Vec<f64>> = net.iter().take(32).cloned().collect();
        let devcheck = rsltree::kde::sup_deviation(&probe_sample.observed, &spec, &cfg, &probes).unwrap();
        assert!(devcheck.regime_warning, "h = 0.3 > tau/8 should trip the regime check");
    }
    let mut medians = Vec::new();
    for &n in &sizes {
        let mut devs: Vec<f64> = (0..seeds)
            .into_par_iter()
            .map(|s| {
                let data = sample(&spec, &NoiseSpec::None, n, 9000 + s as u64).unwrap();
                let mut probes: Vec<Vec<f64>> = data.observed.iter().map(|p| p.to_vec()).collect();
                probes.extend(net.iter().cloned());
                // Exact population value: the ball mass of a uniform sphere
                // depends only on h, so precompute it once.
                let fh = rsltree::kde::population_fh(&spec, &probes[0], &cfg, &Default::default())
                    .unwrap()
                    .value;
                let norm = n as f64 * std::f64::consts::PI * h * h;
                let mut max_dev = 0.0f64;
                for probe in &probes {
                    let count = data.observed.iter().filter(|p| dist(p, probe) <= h).count();
                    let est = count as f64 / norm;
                    max_dev = max_dev.max((est - fh).abs());
                }
                max_dev
            })
            .collect();
        devs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = 0.5 * (devs[seeds / 2 - 1] + devs[seeds / 2]);
        medians.push(median);
    }
    let target = 1.0 / std::f64::consts::SQRT_2;
    for (i, w) in medians.windows(2).enumerate() {
        let ratio = w[1] / w[0];
        assert!(
            ratio >= target / 1.5 && ratio <= target * 1.5,
            "rate ratio {} at step {} outside [{:.3}, {:.3}] (medians {:?})",
            ratio,
            i,
            target / 1.5,
            target * 1.5,
            medians
        );
    }
    // Gap property on a two-level sphere density.
    let centers = vec![sphere.embed_unit(&[0.0, 0.0, 1.0]), sphere.embed_unit(&[0.0, 0.0, -1.0])];
    let two_level = ManifoldDensitySpec::sphere_mixture(sphere.clone(), centers.clone(), 0.9, 0.8, 0.2).unwrap();
    let lambda = 0.4 / cap_volume_exact(2, 1.0, 0.9).unwrap() + 0.2 / (4.0 * std::f64::consts::PI);
    let eps = 0.45;
    let h_gap = 0.125; // tau/8; the epsilon-tau branch guards curvature,
                       // which is exactly zero for d = 2 caps.
    let cfg_gap = KDEConfig { h: h_gap, mode: ExponentMode::Intrinsic(2) };
    let n_gap = 10_000usize;
    let hits: usize = (0..seeds)
        .into_par_iter()
        .map(|s| {
            let data = sample(&two_level, &NoiseSpec::None, n_gap, 7000 + s as u64).unwrap();
            let mut min_cluster = f64::INFINITY;
            let mut max_sep = f64::NEG_INFINITY;
            for i in 0..data.len() {
                let x = data.observed.point(i);
                let d0 = dist(x, &centers[0]);
                let d1 = dist(x, &centers[1]);
                let est = kde_at(&data.observed, x, &cfg_gap).unwrap();
                if d0 <= 0.6 || d1 <= 0.6 {
                    min_cluster = min_cluster.min(est);
                } else if d0 >= 1.35 && d1 >= 1.35 {
                    max_sep = max_sep.max(est);
                }
            }
            usize::from(min_cluster - max_sep >= lambda * eps / 4.0)
        })
        .sum();
    let gap_freq = hits as f64 / seeds as f64;
    assert!(gap_freq >= 0.9, "gap property frequency {:.2} < 0.9", gap_freq);
    assert!(start.elapsed().as_secs() < 600, "criterion 9 overran: {:?}", start.elapsed());
    pass(
        9,
        "kde deviation rate",
        &format!(
            "median sup-deviations {:?} (target ratio {:.3}), gap freq {:.2}, {:?}",
            medians.iter().map(|m| format!("{:.4}", m)).collect::<Vec<_>>(),
            target,
            gap_freq,
            start.elapsed()
        ),
    );
}

// ---------------------------------------------------------------------------
// 10. Determinism
// ---------------------------------------------------------------------------

#[test]
fn criterion_10_determinism() {
    let _serial = serial();
    let start = std::time::Instant::now();
    // Library level: the same grid and seed reproduce identical CSVs.
    let grid = vec![mixture_clutter_cell("det", 20, 600, 0.00745)];
    let rep1 = experiment_sweep(&grid, 5, 1234).unwrap();
    let rep2 = experiment_sweep(&grid, 5, 1234).unwrap();
    assert_eq!(rep1.trials_csv(), rep2.trials_csv());
    assert_eq!(rep1.aggregate_csv(), rep2.aggregate_csv());
    // Sample level: bitwise-identical draws.
    let spec = ManifoldDensitySpec::lower_bound(2, 0.2, None, 0.4, 3).unwrap();
    let a = sample(&spec, &NoiseSpec::Clutter { pi: 0.8, box_halfwidth: 2.0 }, 2000, 99).unwrap();
    let b = sample(&spec, &NoiseSpec::Clutter { pi: 0.8, box_halfwidth: 2.0 }, 2000, 99).unwrap();
    assert_eq!(a.observed, b.observed);
    assert_eq!(a.origin, b.origin);
    assert!(a.origin.contains(&PointOrigin::Clutter));
    // Series consistency regression bound: |series - exact| / (v_d r^d)
    // below the frozen quartic coefficient for r/tau <= 0.1.
    let mut rng = rsltree::seed::rng(10, "acceptance/series");
    for _ in 0..500 {
        let d = rng.random_range(1..=5);
        let tau = rng.random_range(0.2..2.0);
        // Lower end keeps the quartic bound above quadrature rounding noise.
        let r = rng.random_range(0.02..0.1) * tau;
        let series = cap_volume_series(d, tau, r).unwrap();
        let exact = cap_volume_exact(d, tau, r).unwrap();
        let vd = unit_ball_volume(d).unwrap();
        let normalized = (series - exact).abs() / (vd * r.powi(d as i32));
        let k_d = 2.0; // frozen quartic regression bound
        assert!(
            normalized <= k_d * (r / tau).powi(4),
            "series deviation {} above {} at d={} tau={} r={}",
            normalized,
            k_d * (r / tau).powi(4),
            d,
            tau,
            r
        );
    }
    assert!(start.elapsed().as_secs() < 120, "criterion 10 overran: {:?}", start.elapsed());
    pass(10, "determinism", &format!("identical CSVs and draws across reruns, {:?}", start.elapsed()));
}
