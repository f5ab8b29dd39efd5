//! Command-line front end: `generate`, `params`, `cluster`, `kde`,
//! `evaluate`, `experiment`, `volumes`, plus `rerun` for replaying a
//! manifest.
//!
//! Every run resolves its configuration through four layers (flags over
//! environment over config file over defaults), materializes all defaults,
//! and writes a manifest sufficient to reproduce the output byte for byte.
//! Environment keys look like `RSLTREE_GENERATE_N`; config files are flat
//! `key = value` text with one `[section]` per subcommand. One global seed
//! feeds every randomized step through the derivation in [`crate::seed`].

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::eval::{self, Algorithm, CellSpec, InstanceSpec, VerdictKind};
use crate::geometry::{self, SphereSpec};
use crate::kde::{self, ExponentMode, KDEConfig};
use crate::params::{self, Constants, Regime, SalienceParams};
use crate::points::{fmt_f64, PointFile};
use crate::rsl::{self, ConnectionRule, Dendrogram, RSLConfig};
use crate::samplers::{self, NoiseProfile, NoiseSpec, OracleOptions};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser, Debug)]
#[command(name = "rsltree", version, about = "Robust single linkage cluster trees on manifolds")]
struct Cli {
    /// Global seed; per-step seeds derive from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Flat key=value config file with per-subcommand [sections].
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for parallel trials (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a labeled synthetic dataset to a point file.
    Generate(GenerateArgs),
    /// Print the theorem parameter table as CSV.
    Params(ParamsArgs),
    /// Run the sweep on a point file and write the dendrogram.
    Cluster(ClusterArgs),
    /// Kernel density estimates, deviations and level clusters.
    Kde(KdeArgs),
    /// Consistency verdict of a dendrogram against ground truth.
    Evaluate(EvaluateArgs),
    /// Success-probability sweep over a cell grid.
    Experiment(ExperimentArgs),
    /// Volume bound/exact/series table as CSV.
    Volumes(VolumesArgs),
    /// Re-run a recorded manifest.
    Rerun(RerunArgs),
}

#[derive(Args, Debug, Default)]
struct InstanceArgs {
    /// uniform | mixture | lowerbound
    #[arg(long)]
    instance: Option<String>,
    #[arg(long)]
    d: Option<usize>,
    /// Ambient dimension.
    #[arg(long = "D")]
    ambient: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    /// Density level for the lower-bound instance; omit for normalized.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    bump_chord: Option<f64>,
    #[arg(long)]
    centers_seed: Option<u64>,
}

#[derive(Args, Debug, Default)]
struct NoiseArgs {
    /// none | clutter | additive
    #[arg(long)]
    noise: Option<String>,
    #[arg(long)]
    pi: Option<f64>,
    #[arg(long)]
    box_halfwidth: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    /// ball | shell
    #[arg(long)]
    profile: Option<String>,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    #[command(flatten)]
    noise: NoiseArgs,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ParamsArgs {
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    c0: Option<f64>,
    #[arg(long)]
    n: Option<u64>,
    /// noiseless | clutter | additive | kde
    #[arg(long)]
    regime: Option<String>,
    #[arg(long)]
    pi: Option<f64>,
    /// Density exponent A for the polynomial-mu variant.
    #[arg(long)]
    a_poly: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ClusterArgs {
    /// Input point file.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    /// Fixed connection radius R.
    #[arg(long = "R")]
    radius: Option<f64>,
    /// Proportional rule multiplier (R = c * r).
    #[arg(long = "R-mult")]
    radius_mult: Option<f64>,
    /// Use the spatially adaptive sweep (requires --sphere d,tau).
    #[arg(long)]
    adaptive: bool,
    /// Known manifold for adaptive mode, as "d,tau".
    #[arg(long)]
    sphere: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct KdeArgs {
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[command(flatten)]
    instance: InstanceArgs,
    #[arg(long)]
    h: Option<f64>,
    /// intrinsic | ambient
    #[arg(long)]
    mode: Option<String>,
    /// Density threshold for the heuristic level clusters.
    #[arg(long)]
    level: Option<f64>,
    #[arg(long = "linkage-R")]
    linkage_r: Option<f64>,
    /// samples | net | both
    #[arg(long)]
    probes: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Partition output for the level clusters.
    #[arg(long)]
    partition_out: Option<PathBuf>,
    /// Bandwidth schedule file with "n,h" lines: checks the regularity
    /// conditions instead of running estimates.
    #[arg(long)]
    check_schedule: Option<PathBuf>,
    #[arg(long)]
    br_m: Option<usize>,
    #[arg(long)]
    br_c: Option<f64>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long)]
    dendro: Option<PathBuf>,
    #[command(flatten)]
    instance: InstanceArgs,
    #[arg(long)]
    sigma: Option<f64>,
    /// Read-out radius; omit with --scan to sweep all event radii.
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    scan: bool,
    /// pair | multiway
    #[arg(long)]
    verdict: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// Cell grid file.
    #[arg(long)]
    grid: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    out_prefix: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VolumesArgs {
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    /// Comma-separated list of chord radii.
    #[arg(long)]
    r_list: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RerunArgs {
    #[arg(long)]
    manifest: PathBuf,
}

/// Fully resolved key-value configuration of one run.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub subcommand: String,
    pub map: BTreeMap<String, String>,
}

impl Resolved {
    fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|s| s.as_str())
    }

    fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| Error::invalid(format!("missing required option --{}", key.replace('_', "-"))))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.require(key)?;
        raw.parse::<T>().map_err(|_| Error::invalid(format!("bad value {:?} for --{}", raw, key)))
    }

    fn parse_opt<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None | Some("") => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|_| Error::invalid(format!("bad value {:?} for --{}", raw, key))),
        }
    }

    fn set_default(&mut self, key: &str, value: impl ToString) {
        self.map.entry(key.to_string()).or_insert_with(|| value.to_string());
    }
}

/// flags > env > config file > defaults (defaults are set by the runners).
fn resolve(
    subcommand: &str,
    flags: Vec<(&str, Option<String>)>,
    config: Option<&Path>,
) -> Result<Resolved> {
    let mut map = BTreeMap::new();
    let file_section = match config {
        Some(path) => parse_sectioned(path)?.remove(subcommand).unwrap_or_default(),
        None => BTreeMap::new(),
    };
    for (key, flag_value) in flags {
        let env_key = format!("RSLTREE_{}_{}", subcommand.to_uppercase(), key.to_uppercase());
        let value = flag_value
            .or_else(|| std::env::var(&env_key).ok())
            .or_else(|| file_section.get(key).cloned());
        if let Some(v) = value {
            map.insert(key.to_string(), v);
        }
    }
    Ok(Resolved { subcommand: subcommand.to_string(), map })
}

/// Parses `[section]` / `key = value` text.
fn parse_sectioned(path: &Path) -> Result<BTreeMap<String, BTreeMap<String, String>>> {
    let text = std::fs::read_to_string(path)?;
    let mut out: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
    let mut section = String::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            section = name.trim().to_string();
            out.entry(section.clone()).or_default();
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Format {
            path: path.display().to_string(),
            what: format!("line {}: expected key = value", lineno + 1),
        })?;
        out.entry(section.clone())
            .or_default()
            .insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(out)
}

const MANIFEST_HEADER: &str = "# rsltree-manifest v1";

fn write_manifest(path: &Path, res: &Resolved, wallclock_ms: u128) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "{}", MANIFEST_HEADER);
    let _ = writeln!(out, "subcommand = {}", res.subcommand);
    let _ = writeln!(out, "artifact_version = {}", ARTIFACT_VERSION);
    for (k, v) in &res.map {
        let _ = writeln!(out, "{} = {}", k, v);
    }
    let _ = writeln!(out, "wallclock_ms = {}", wallclock_ms);
    std::fs::write(path, out)?;
    Ok(())
}

fn read_manifest(path: &Path) -> Result<Resolved> {
    let sections = {
        let text = std::fs::read_to_string(path)?;
        if !text.starts_with(MANIFEST_HEADER) {
            return Err(Error::Format { path: path.display().to_string(), what: "missing manifest header".into() });
        }
        text
    };
    let mut map = BTreeMap::new();
    let mut sub = String::new();
    for line in sections.lines().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Format {
            path: path.display().to_string(),
            what: "expected key = value".into(),
        })?;
        let (k, v) = (k.trim(), v.trim());
        match k {
            "subcommand" => sub = v.to_string(),
            "artifact_version" | "wallclock_ms" => {}
            _ => {
                map.insert(k.to_string(), v.to_string());
            }
        }
    }
    if sub.is_empty() {
        return Err(Error::Format { path: path.display().to_string(), what: "manifest missing subcommand".into() });
    }
    Ok(Resolved { subcommand: sub, map })
}

/// Entry point: parses argv, dispatches, maps errors to exit codes
/// (0 success, 1 assertion/acceptance failure, 2 invalid arguments).
pub fn dispatch(argv: &[String]) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Some(jobs) = cli.jobs {
        // Ignore failure: the global pool can only be set once per process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    match run(cli) {
        Ok(code) => code,
        Err(Error::InvalidArgument(msg)) => {
            eprintln!("error: {}", msg);
            2
        }
        Err(e) => {
            eprintln!("error: {}", e);
            1
        }
    }
}

fn run(cli: Cli) -> Result<i32> {
    let config = cli.config.as_deref();
    let seed = cli.seed;
    match cli.command {
        Command::Generate(a) => {
            let res = resolve_generate(a, seed, config)?;
            run_with_manifest(res, run_generate)
        }
        Command::Params(a) => {
            let res = resolve_params(a, config)?;
            run_with_manifest(res, run_params)
        }
        Command::Cluster(a) => {
            let res = resolve_cluster(a, config)?;
            run_with_manifest(res, run_cluster)
        }
        Command::Kde(a) => {
            let res = resolve_kde(a, seed, config)?;
            run_with_manifest(res, run_kde)
        }
        Command::Evaluate(a) => {
            let res = resolve_evaluate(a, config)?;
            run_with_manifest(res, run_evaluate)
        }
        Command::Experiment(a) => {
            let res = resolve_experiment(a, seed, config)?;
            run_with_manifest(res, run_experiment)
        }
        Command::Volumes(a) => {
            let res = resolve_volumes(a, config)?;
            run_with_manifest(res, run_volumes)
        }
        Command::Rerun(a) => {
            let res = read_manifest(&a.manifest)?;
            run_with_manifest(res, rerun_by_name)
        }
    }
}

fn run_with_manifest(mut res: Resolved, f: fn(&mut Resolved) -> Result<i32>) -> Result<i32> {
    let start = Instant::now();
    let code = f(&mut res)?;
    if let Some(out) = res.get("out").or_else(|| res.get("out_prefix")) {
        let manifest_path = PathBuf::from(format!("{}.manifest", out));
        write_manifest(&manifest_path, &res, start.elapsed().as_millis())?;
    }
    Ok(code)
}

fn rerun_by_name(res: &mut Resolved) -> Result<i32> {
    match res.subcommand.as_str() {
        "generate" => run_generate(res),
        "params" => run_params(res),
        "cluster" => run_cluster(res),
        "kde" => run_kde(res),
        "evaluate" => run_evaluate(res),
        "experiment" => run_experiment(res),
        "volumes" => run_volumes(res),
        other => Err(Error::invalid(format!("manifest names unknown subcommand {:?}", other))),
    }
}

fn opt_string<T: ToString>(v: Option<T>) -> Option<String> {
    v.map(|x| x.to_string())
}

fn instance_flag_pairs(a: InstanceArgs) -> Vec<(&'static str, Option<String>)> {
    vec![
        ("instance", a.instance),
        ("d", opt_string(a.d)),
        ("ambient_dim", opt_string(a.ambient)),
        ("tau", opt_string(a.tau)),
        ("lambda", opt_string(a.lambda)),
        ("epsilon", opt_string(a.epsilon)),
        ("bump_chord", opt_string(a.bump_chord)),
        ("centers_seed", opt_string(a.centers_seed)),
    ]
}

fn noise_flag_pairs(a: NoiseArgs) -> Vec<(&'static str, Option<String>)> {
    vec![
        ("noise", a.noise),
        ("pi", opt_string(a.pi)),
        ("box_halfwidth", opt_string(a.box_halfwidth)),
        ("theta", opt_string(a.theta)),
        ("profile", a.profile),
    ]
}

fn instance_defaults(res: &mut Resolved) {
    res.set_default("instance", "uniform");
    res.set_default("d", 2);
    res.set_default("tau", 1.0);
    let d: usize = res.parse("d").unwrap_or(2);
    res.set_default("ambient_dim", d + 1);
    res.set_default("epsilon", 0.4);
    res.set_default("bump_chord", 0.22);
    res.set_default("centers_seed", 7);
}

fn instance_from(res: &Resolved) -> Result<InstanceSpec> {
    let d: usize = res.parse("d")?;
    let tau: f64 = res.parse("tau")?;
    let ambient_dim: usize = res.parse("ambient_dim")?;
    match res.require("instance")? {
        "uniform" | "uniform-sphere" => Ok(InstanceSpec::UniformSphere { d, tau, ambient_dim }),
        "mixture" => Ok(InstanceSpec::Mixture {
            d,
            tau,
            ambient_dim,
            bump_chord: res.parse("bump_chord")?,
            centers_seed: res.parse("centers_seed")?,
        }),
        "lowerbound" | "lower-bound" => Ok(InstanceSpec::LowerBound {
            d,
            tau,
            lambda: res.parse_opt("lambda")?,
            epsilon: res.parse("epsilon")?,
            ambient_dim,
        }),
        other => Err(Error::invalid(format!("unknown instance {:?}", other))),
    }
}

fn noise_defaults(res: &mut Resolved) {
    res.set_default("noise", "none");
    res.set_default("pi", 0.8);
    res.set_default("box_halfwidth", 2.0);
    res.set_default("theta", 0.0);
    res.set_default("profile", "ball");
}

fn noise_from(res: &Resolved) -> Result<NoiseSpec> {
    match res.require("noise")? {
        "none" => Ok(NoiseSpec::None),
        "clutter" => Ok(NoiseSpec::Clutter {
            pi: res.parse("pi")?,
            box_halfwidth: res.parse("box_halfwidth")?,
        }),
        "additive" => Ok(NoiseSpec::Additive {
            theta: res.parse("theta")?,
            profile: match res.require("profile")? {
                "ball" => NoiseProfile::UniformBall,
                "shell" => NoiseProfile::Shell,
                other => return Err(Error::invalid(format!("unknown noise profile {:?}", other))),
            },
        }),
        other => Err(Error::invalid(format!("unknown noise {:?}", other))),
    }
}

fn resolve_generate(a: GenerateArgs, seed: Option<u64>, config: Option<&Path>) -> Result<Resolved> {
    let mut flags = instance_flag_pairs(a.instance);
    flags.extend(noise_flag_pairs(a.noise));
    flags.push(("n", opt_string(a.n)));
    flags.push(("out", a.out.map(|p| p.display().to_string())));
    flags.push(("seed", opt_string(seed)));
    resolve("generate", flags, config)
}

fn run_generate(res: &mut Resolved) -> Result<i32> {
    instance_defaults(res);
    noise_defaults(res);
    res.set_default("n", 1000);
    res.set_default("seed", 0);
    let spec = instance_from(res)?.build()?;
    let noise = noise_from(res)?;
    let n: usize = res.parse("n")?;
    let seed: u64 = res.parse("seed")?;
    let out = PathBuf::from(res.require("out")?);
    let s = samplers::sample(&spec, &noise, n, seed)?;
    let file = PointFile {
        fingerprint: s.fingerprint.clone(),
        observed: s.observed.clone(),
        latent: s.latent.clone(),
        origin: s.origin.iter().map(|o| o.tag()).collect(),
    };
    file.write_to(&out)?;
    println!("wrote {} points to {} (fingerprint {})", n, out.display(), s.fingerprint);
    Ok(0)
}

fn resolve_params(a: ParamsArgs, config: Option<&Path>) -> Result<Resolved> {
    let flags = vec![
        ("sigma", opt_string(a.sigma)),
        ("epsilon", opt_string(a.epsilon)),
        ("lambda", opt_string(a.lambda)),
        ("tau", opt_string(a.tau)),
        ("d", opt_string(a.d)),
        ("delta", opt_string(a.delta)),
        ("c0", opt_string(a.c0)),
        ("n", opt_string(a.n)),
        ("regime", a.regime),
        ("pi", opt_string(a.pi)),
        ("a_poly", opt_string(a.a_poly)),
        ("out", a.out.map(|p| p.display().to_string())),
    ];
    resolve("params", flags, config)
}

fn regime_from(res: &Resolved) -> Result<Regime> {
    match res.require("regime")? {
        "noiseless" => Ok(Regime::Noiseless),
        "clutter" => Ok(Regime::Clutter { pi: res.parse("pi")? }),
        "additive" => Ok(Regime::Additive),
        "kde" => Ok(Regime::Kde),
        other => Err(Error::invalid(format!("unknown regime {:?}", other))),
    }
}

fn run_params(res: &mut Resolved) -> Result<i32> {
    res.set_default("delta", 0.05);
    res.set_default("c0", 1.0);
    res.set_default("n", 10_000u64);
    res.set_default("regime", "noiseless");
    res.set_default("pi", 0.8);
    res.set_default("lambda", 1.0);
    let p = SalienceParams {
        sigma: res.parse("sigma")?,
        epsilon: res.parse("epsilon")?,
        lambda: res.parse("lambda")?,
        tau: res.parse("tau")?,
        d: res.parse("d")?,
        delta: res.parse("delta")?,
        constants: Constants::from_c0(res.parse("c0")?),
    };
    let regime = regime_from(res)?;
    let n: u64 = res.parse("n")?;
    let rho_res = params::rho(&p, regime);
    let mu_res = match res.parse_opt::<f64>("a_poly")? {
        Some(a) => params::MuResult { value: params::mu_poly(a, n)?, negative_log_term: false },
        None => params::mu(n, rho_res.value, p.d)?,
    };
    let k_res = params::choose_k(&p, mu_res.value, regime);
    let mut csv = String::from(
        "regime,rho,rho_branch,mu,k,r,r_feasible,gate_holds,min_feasible_n,theta_gate,n_upper_estimate,n_lower_estimate,c0,c_delta\n",
    );
    let (r_str, feas, gate, min_n) = if k_res.k <= n {
        let pick = params::choose_r(&p, k_res.k, n, mu_res.value, regime)?;
        (
            fmt_f64(pick.r),
            pick.feasible.to_string(),
            pick.gate_holds.to_string(),
            pick.min_feasible_n.map(|v| v.to_string()).unwrap_or_default(),
        )
    } else {
        (String::from("nan"), String::from("false"), String::from("false"), String::new())
    };
    let bounds = params::sample_size_bound(&p, regime)?;
    let _ = writeln!(
        csv,
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        regime.name(),
        fmt_f64(rho_res.value),
        rho_res.branch.name(),
        fmt_f64(mu_res.value),
        k_res.k,
        r_str,
        feas,
        gate,
        min_n,
        fmt_f64(params::theta_gate(&p, rho_res.value)),
        fmt_f64(bounds.upper_estimate),
        fmt_f64(bounds.lower_estimate),
        fmt_f64(p.constants.c0),
        fmt_f64(k_res.c_delta),
    );
    emit(res, &csv)?;
    Ok(0)
}

fn resolve_cluster(a: ClusterArgs, config: Option<&Path>) -> Result<Resolved> {
    let flags = vec![
        ("in", a.input.map(|p| p.display().to_string())),
        ("k", opt_string(a.k)),
        ("r_fixed", opt_string(a.radius)),
        ("r_mult", opt_string(a.radius_mult)),
        ("adaptive", if a.adaptive { Some("true".into()) } else { None }),
        ("sphere", a.sphere),
        ("out", a.out.map(|p| p.display().to_string())),
    ];
    resolve("cluster", flags, config)
}

fn connection_rule(res: &Resolved) -> Result<ConnectionRule> {
    match (res.parse_opt::<f64>("r_fixed")?, res.parse_opt::<f64>("r_mult")?) {
        (Some(r), None) => Ok(ConnectionRule::FixedR(r)),
        (None, Some(c)) => Ok(ConnectionRule::Proportional(c)),
        (None, None) => Ok(ConnectionRule::Proportional(4.0)),
        (Some(_), Some(_)) => Err(Error::invalid("--R and --R-mult are mutually exclusive")),
    }
}

fn run_cluster(res: &mut Resolved) -> Result<i32> {
    res.set_default("k", 10);
    res.set_default("adaptive", "false");
    let input = PathBuf::from(res.require("in")?);
    let out = PathBuf::from(res.require("out")?);
    let file = PointFile::read_from(&input)?;
    let cfg = RSLConfig { k: res.parse("k")?, rule: connection_rule(res)? };
    let adaptive: bool = res.parse("adaptive")?;
    let dendro: Dendrogram = if adaptive {
        let spec = res.require("sphere")?;
        let (d_str, tau_str) = spec
            .split_once(',')
            .ok_or_else(|| Error::invalid("--sphere expects \"d,tau\""))?;
        let d: usize = d_str.trim().parse().map_err(|_| Error::invalid("bad sphere d"))?;
        let tau: f64 = tau_str.trim().parse().map_err(|_| Error::invalid("bad sphere tau"))?;
        let sphere = SphereSpec::axis_aligned(d, tau, file.observed.dim(), None)?;
        rsl::adaptive_rsl(&file.observed, &cfg, &sphere)?
    } else {
        rsl::rsl_sweep(&file.observed, &cfg)?
    };
    dendro.write_to(&out)?;
    println!(
        "clustered {} points: {} merges, {} terminal components",
        file.observed.len(),
        dendro.merges().len(),
        dendro.components_at(f64::MAX).len()
    );
    Ok(0)
}

fn resolve_kde(a: KdeArgs, seed: Option<u64>, config: Option<&Path>) -> Result<Resolved> {
    let mut flags = instance_flag_pairs(a.instance);
    flags.extend([
        ("in", a.input.map(|p| p.display().to_string())),
        ("h", opt_string(a.h)),
        ("mode", a.mode),
        ("level", opt_string(a.level)),
        ("linkage_r", opt_string(a.linkage_r)),
        ("probes", a.probes),
        ("out", a.out.map(|p| p.display().to_string())),
        ("partition_out", a.partition_out.map(|p| p.display().to_string())),
        ("check_schedule", a.check_schedule.map(|p| p.display().to_string())),
        ("br_m", opt_string(a.br_m)),
        ("br_c", opt_string(a.br_c)),
        ("seed", opt_string(seed)),
    ]);
    resolve("kde", flags, config)
}

fn run_kde(res: &mut Resolved) -> Result<i32> {
    if let Some(schedule_path) = res.get("check_schedule").map(PathBuf::from) {
        res.set_default("br_m", 2);
        res.set_default("br_c", 2.0);
        let text = std::fs::read_to_string(&schedule_path)?;
        let mut schedule = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (n, h) = line.split_once(',').ok_or_else(|| Error::Format {
                path: schedule_path.display().to_string(),
                what: "expected n,h".into(),
            })?;
            schedule.push((
                n.trim().parse::<u64>().map_err(|_| Error::invalid("bad n"))?,
                h.trim().parse::<f64>().map_err(|_| Error::invalid("bad h"))?,
            ));
        }
        let rep = kde::check_bandwidth_schedule(&schedule, res.parse("br_m")?, res.parse("br_c")?)?;
        println!(
            "decreasing={} volume_growth={} log_growth={} doubling={} all={}",
            rep.decreasing, rep.volume_growth, rep.log_growth, rep.doubling, rep.all_hold()
        );
        for note in &rep.notes {
            println!("note: {}", note);
        }
        return Ok(if rep.all_hold() { 0 } else { 1 });
    }
    instance_defaults(res);
    res.set_default("h", 0.3);
    res.set_default("mode", "intrinsic");
    res.set_default("probes", "samples");
    res.set_default("seed", 0);
    let input = PathBuf::from(res.require("in")?);
    let file = PointFile::read_from(&input)?;
    let spec = instance_from(res)?.build()?;
    let d: usize = res.parse("d")?;
    let cfg = KDEConfig {
        h: res.parse("h")?,
        mode: match res.require("mode")? {
            "intrinsic" => ExponentMode::Intrinsic(d),
            "ambient" => ExponentMode::Ambient,
            other => return Err(Error::invalid(format!("unknown mode {:?}", other))),
        },
    };
    let seed: u64 = res.parse("seed")?;
    let mut probes: Vec<Vec<f64>> = Vec::new();
    let which = res.require("probes")?;
    if which == "samples" || which == "both" {
        probes.extend(file.observed.iter().map(|p| p.to_vec()));
    }
    if which == "net" || which == "both" {
        let tau: f64 = res.parse("tau")?;
        let sphere = SphereSpec::axis_aligned(d, tau, file.observed.dim(), None)?;
        probes.extend(geometry::build_net(&sphere, cfg.h / 2.0, crate::seed::derive(seed, "kde/net"))?);
    }
    if probes.is_empty() {
        return Err(Error::invalid("empty probe set"));
    }
    let opts = OracleOptions::default();
    let mut csv = String::from("fhat,fh,deviation,mc,coords\n");
    let mut max_dev = 0.0f64;
    for probe in &probes {
        let est = kde::kde_at(&file.observed, probe, &cfg)?;
        let pop = kde::population_fh(&spec, probe, &cfg, &opts)?;
        let dev = (est - pop.value).abs();
        max_dev = max_dev.max(dev);
        let coords = probe.iter().map(|&c| fmt_f64(c)).collect::<Vec<_>>().join(";");
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            fmt_f64(est),
            fmt_f64(pop.value),
            fmt_f64(dev),
            !pop.is_exact(),
            coords
        );
    }
    emit(res, &csv)?;
    eprintln!("max deviation over {} probes: {}", probes.len(), max_dev);
    if let (Some(level), Some(link_r)) = (res.parse_opt::<f64>("level")?, res.parse_opt::<f64>("linkage_r")?) {
        let comps = kde::kde_level_clusters(&file.observed, &cfg, level, link_r)?;
        if let Some(path) = res.get("partition_out").map(PathBuf::from) {
            let mut out = format!("n {}\n", file.observed.len());
            for comp in &comps {
                let _ = writeln!(
                    out,
                    "C {}",
                    comp.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ")
                );
            }
            std::fs::write(path, out)?;
        }
        eprintln!("level clusters at lambda {}: {} components", level, comps.len());
    }
    Ok(0)
}

fn resolve_evaluate(a: EvaluateArgs, config: Option<&Path>) -> Result<Resolved> {
    let mut flags = instance_flag_pairs(a.instance);
    flags.extend([
        ("in", a.input.map(|p| p.display().to_string())),
        ("dendro", a.dendro.map(|p| p.display().to_string())),
        ("sigma", opt_string(a.sigma)),
        ("r", opt_string(a.r)),
        ("scan", if a.scan { Some("true".into()) } else { None }),
        ("verdict", a.verdict),
        ("out", a.out.map(|p| p.display().to_string())),
    ]);
    resolve("evaluate", flags, config)
}

fn run_evaluate(res: &mut Resolved) -> Result<i32> {
    instance_defaults(res);
    res.set_default("sigma", 0.5);
    res.set_default("scan", "false");
    res.set_default("verdict", "pair");
    let file = PointFile::read_from(&PathBuf::from(res.require("in")?))?;
    let dendro = Dendrogram::read_from(&PathBuf::from(res.require("dendro")?))?;
    let spec = instance_from(res)?.build()?;
    let origin: Result<Vec<samplers::PointOrigin>> =
        file.origin.iter().map(|t| samplers::PointOrigin::parse(t)).collect();
    let s = samplers::LabeledSample {
        observed: file.observed,
        latent: file.latent,
        origin: origin?,
        fingerprint: file.fingerprint,
    };
    let epsilon: f64 = res.parse("epsilon")?;
    let sigma: f64 = res.parse("sigma")?;
    let scan: bool = res.parse("scan")?;
    let mut csv = String::from("r,connected_a,connected_a_prime,separated,success,vacuous\n");
    let mut any_success = false;
    match res.require("verdict")? {
        "pair" => {
            let pair = eval::lower_bound_pair(&spec, &s, sigma, epsilon);
            let radii: Vec<f64> = if scan {
                dendro.event_radii()
            } else {
                vec![res.parse("r")?]
            };
            for r in radii {
                let rec = eval::check_consistency(&dendro, &s, &pair, r);
                any_success |= rec.success;
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{}",
                    fmt_f64(r),
                    rec.connected_a,
                    rec.connected_a_prime,
                    rec.separated,
                    rec.success,
                    rec.vacuous
                );
            }
        }
        "multiway" => {
            let clusters = eval::mixture_clusters(&spec, &s)?;
            let outcome = eval::multiway_success(&dendro, &clusters);
            any_success = outcome.success;
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{}",
                outcome.all_connected_at.map(fmt_f64).unwrap_or_else(|| "nan".into()),
                outcome.all_connected_at.is_some(),
                outcome.all_connected_at.is_some(),
                outcome
                    .first_mix_at
                    .map(|m| outcome.all_connected_at.map(|c| c < m).unwrap_or(false))
                    .unwrap_or(true),
                outcome.success,
                clusters.iter().any(|c| c.is_empty())
            );
        }
        other => return Err(Error::invalid(format!("unknown verdict {:?}", other))),
    }
    emit(res, &csv)?;
    Ok(if any_success { 0 } else { 1 })
}

fn resolve_experiment(a: ExperimentArgs, seed: Option<u64>, config: Option<&Path>) -> Result<Resolved> {
    let flags = vec![
        ("grid", a.grid.map(|p| p.display().to_string())),
        ("trials", opt_string(a.trials)),
        ("out_prefix", a.out_prefix.map(|p| p.display().to_string())),
        ("seed", opt_string(seed)),
    ];
    resolve("experiment", flags, config)
}

/// Parses the experiment grid file: top-level `trials` / `base_seed`, then
/// one `[cell.NAME]` section per cell.
pub fn parse_grid(path: &Path) -> Result<(Vec<CellSpec>, Option<usize>, Option<u64>)> {
    let sections = parse_sectioned(path)?;
    let top = sections.get("").cloned().unwrap_or_default();
    let trials = top.get("trials").map(|v| v.parse::<usize>()).transpose().map_err(|_| Error::invalid("bad trials"))?;
    let base_seed = top.get("base_seed").map(|v| v.parse::<u64>()).transpose().map_err(|_| Error::invalid("bad base_seed"))?;
    let mut cells = Vec::new();
    for (name, kv) in &sections {
        let Some(cell_name) = name.strip_prefix("cell.") else { continue };
        let get = |k: &str| kv.get(k).map(|s| s.as_str());
        let req = |k: &str| {
            get(k).ok_or_else(|| Error::invalid(format!("cell {}: missing {}", cell_name, k)))
        };
        let parse_f = |k: &str| -> Result<f64> {
            req(k)?.parse().map_err(|_| Error::invalid(format!("cell {}: bad {}", cell_name, k)))
        };
        let parse_u = |k: &str| -> Result<usize> {
            req(k)?.parse().map_err(|_| Error::invalid(format!("cell {}: bad {}", cell_name, k)))
        };
        let d = parse_u("d")?;
        let ambient_dim = get("D").map(|v| v.parse::<usize>()).transpose().map_err(|_| Error::invalid("bad D"))?.unwrap_or(d + 1);
        let tau = parse_f("tau")?;
        let epsilon = parse_f("epsilon")?;
        let instance = match req("instance")? {
            "uniform" => InstanceSpec::UniformSphere { d, tau, ambient_dim },
            "mixture" => InstanceSpec::Mixture {
                d,
                tau,
                ambient_dim,
                bump_chord: get("bump_chord").map(|v| v.parse::<f64>()).transpose().map_err(|_| Error::invalid("bad bump_chord"))?.unwrap_or(0.22),
                centers_seed: get("centers_seed").map(|v| v.parse::<u64>()).transpose().map_err(|_| Error::invalid("bad centers_seed"))?.unwrap_or(7),
            },
            "lowerbound" => InstanceSpec::LowerBound {
                d,
                tau,
                lambda: match get("lambda") {
                    None | Some("normalized") => None,
                    Some(v) => Some(v.parse().map_err(|_| Error::invalid("bad lambda"))?),
                },
                epsilon,
                ambient_dim,
            },
            other => return Err(Error::invalid(format!("cell {}: unknown instance {:?}", cell_name, other))),
        };
        let noise = match get("noise").unwrap_or("none") {
            "none" => NoiseSpec::None,
            "clutter" => NoiseSpec::Clutter {
                pi: get("pi").map(|v| v.parse::<f64>()).transpose().map_err(|_| Error::invalid("bad pi"))?.unwrap_or(0.8),
                box_halfwidth: get("box_halfwidth").map(|v| v.parse::<f64>()).transpose().map_err(|_| Error::invalid("bad box_halfwidth"))?.unwrap_or(2.0),
            },
            "additive" => NoiseSpec::Additive {
                theta: get("theta").map(|v| v.parse::<f64>()).transpose().map_err(|_| Error::invalid("bad theta"))?.unwrap_or(0.0),
                profile: match get("profile").unwrap_or("ball") {
                    "ball" => NoiseProfile::UniformBall,
                    "shell" => NoiseProfile::Shell,
                    other => return Err(Error::invalid(format!("unknown profile {:?}", other))),
                },
            },
            other => return Err(Error::invalid(format!("cell {}: unknown noise {:?}", cell_name, other))),
        };
        let rule = match get("rule") {
            None => ConnectionRule::Proportional(4.0),
            Some(spec) => {
                let (kind, value) = spec.split_once(':').ok_or_else(|| Error::invalid("rule expects kind:value"))?;
                let v: f64 = value.parse().map_err(|_| Error::invalid("bad rule value"))?;
                match kind {
                    "fixed" => ConnectionRule::FixedR(v),
                    "prop" => ConnectionRule::Proportional(v),
                    other => return Err(Error::invalid(format!("unknown rule {:?}", other))),
                }
            }
        };
        cells.push(CellSpec {
            name: cell_name.to_string(),
            instance,
            noise,
            n: parse_u("n")?,
            sigma: parse_f("sigma")?,
            epsilon,
            delta: get("delta").map(|v| v.parse::<f64>()).transpose().map_err(|_| Error::invalid("bad delta"))?.unwrap_or(0.05),
            c0: get("c0").map(|v| v.parse::<f64>()).transpose().map_err(|_| Error::invalid("bad c0"))?.unwrap_or(1.0),
            lambda: match get("params_lambda") {
                None => None,
                Some(v) => Some(v.parse().map_err(|_| Error::invalid("bad params_lambda"))?),
            },
            k_override: get("k").map(|v| v.parse::<usize>()).transpose().map_err(|_| Error::invalid("bad k"))?,
            r_override: get("r").map(|v| v.parse::<f64>()).transpose().map_err(|_| Error::invalid("bad r"))?,
            rule,
            algorithm: match get("algorithm").unwrap_or("plain") {
                "plain" => Algorithm::Plain,
                "adaptive" => Algorithm::Adaptive,
                other => return Err(Error::invalid(format!("unknown algorithm {:?}", other))),
            },
            verdict: match get("verdict").unwrap_or("pair") {
                "pair" => VerdictKind::Pair,
                "multiway" => VerdictKind::Multiway,
                other => return Err(Error::invalid(format!("unknown verdict {:?}", other))),
            },
            min_success: get("min_success").map(|v| v.parse::<f64>()).transpose().map_err(|_| Error::invalid("bad min_success"))?,
            require_feasible: get("require_feasible").map(|v| v == "true").unwrap_or(false),
        });
    }
    if cells.is_empty() {
        return Err(Error::invalid("grid file defines no [cell.*] sections"));
    }
    Ok((cells, trials, base_seed))
}

fn run_experiment(res: &mut Resolved) -> Result<i32> {
    let grid_path = PathBuf::from(res.require("grid")?);
    let (cells, file_trials, file_seed) = parse_grid(&grid_path)?;
    let trials = match res.parse_opt::<usize>("trials")? {
        Some(t) => t,
        None => file_trials.ok_or_else(|| Error::invalid("trials not given by flag or grid file"))?,
    };
    let base_seed = match res.parse_opt::<u64>("seed")? {
        Some(s) => s,
        None => file_seed.unwrap_or(0),
    };
    res.map.insert("trials".into(), trials.to_string());
    res.map.insert("seed".into(), base_seed.to_string());
    let prefix = PathBuf::from(res.require("out_prefix")?);
    let report = eval::experiment_sweep(&cells, trials, base_seed)?;
    let trial_path = PathBuf::from(format!("{}_trials.csv", prefix.display()));
    let agg_path = PathBuf::from(format!("{}_aggregate.csv", prefix.display()));
    std::fs::write(&trial_path, report.trials_csv())?;
    std::fs::write(&agg_path, report.aggregate_csv())?;
    for a in &report.aggregates {
        println!(
            "cell {}: p_hat = {:.3} ({}/{} trials){}",
            a.cell,
            a.p_hat,
            a.successes,
            a.trials,
            a.skipped.as_ref().map(|s| format!(" [skipped: {}]", s)).unwrap_or_default()
        );
    }
    Ok(if report.all_thresholds_met() { 0 } else { 1 })
}

fn resolve_volumes(a: VolumesArgs, config: Option<&Path>) -> Result<Resolved> {
    let flags = vec![
        ("d", opt_string(a.d)),
        ("tau", opt_string(a.tau)),
        ("r_list", a.r_list),
        ("out", a.out.map(|p| p.display().to_string())),
    ];
    resolve("volumes", flags, config)
}

fn run_volumes(res: &mut Resolved) -> Result<i32> {
    res.set_default("d", 2);
    res.set_default("tau", 1.0);
    res.set_default("r_list", "0.05,0.1,0.2,0.4");
    let d: usize = res.parse("d")?;
    let tau: f64 = res.parse("tau")?;
    let radii: Result<Vec<f64>> = res
        .require("r_list")?
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| Error::invalid("bad radius in r_list")))
        .collect();
    let mut csv = String::from("d,tau,r,lower,exact,series,upper\n");
    for r in radii? {
        let exact = geometry::cap_volume_exact(d, tau, r)?;
        let (lower, upper) = match geometry::ball_volume_bounds(d, tau, r) {
            Ok(b) => (fmt_f64(b.lower), fmt_f64(b.upper)),
            Err(_) => ("nan".into(), "nan".into()),
        };
        let series = match geometry::cap_volume_series(d, tau, r) {
            Ok(v) => fmt_f64(v),
            Err(_) => "nan".into(),
        };
        let _ = writeln!(csv, "{},{},{},{},{},{},{}", d, fmt_f64(tau), fmt_f64(r), lower, fmt_f64(exact), series, upper);
    }
    emit(res, &csv)?;
    Ok(0)
}

/// Writes CSV to --out or stdout.
fn emit(res: &Resolved, csv: &str) -> Result<()> {
    match res.get("out") {
        Some(path) if !path.is_empty() => {
            std::fs::write(path, csv)?;
            Ok(())
        }
        _ => {
            print!("{}", csv);
            Ok(())
        }
    }
}
