//! Batch front end: covariances, samples, membranes, tangent checks and the
//! acceptance suite, driven by flags or a JSON config.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use selfsim_core::kernels::{kernel_kh, Pulse};
use selfsim_core::membranes::{
    hard_membrane_covariance, soft_membrane_covariance_with, tangent_field_check, DomainSpec, HarmonicMethod,
};
use selfsim_core::montecarlo::{
    cholesky_sample, empirical_covariance, gram, hard_membrane_sample, matrix_csv, shotnoise_sample_family, validate,
    PathSample, SimConfig,
};
use selfsim_core::processes::{fbm_shape, preset, process_covariance, MeasureFamily};
use selfsim_core::suite::{run_suite, CRITERIA};
use selfsim_core::{Error, Result};

const EXIT_VALIDATION: u8 = 2;
const EXIT_ERROR: u8 = 1;

#[derive(Parser)]
#[command(name = "selfsim", version, about = "Self-similar Gaussian fields indexed by measures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Covariance matrix of a measure family on a grid.
    Cov(CovArgs),
    /// Sample paths by Cholesky factorization or shot-noise discretization.
    Sample(SampleArgs),
    /// Hard or soft membrane covariances and samples.
    Membrane(MembraneArgs),
    /// Tangent-field exponents of a hard membrane.
    Tangent(TangentArgs),
    /// Run acceptance criteria.
    Validate(ValidateArgs),
}

fn parse_json(s: &str) -> std::result::Result<Value, String> {
    serde_json::from_str(s).map_err(|e| e.to_string())
}

#[derive(Args, Clone, Debug, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct ModelArgs {
    /// Named family (bm, bb, zero-area-bb, fbm-takenaka, fbm-wb, fbm-mvn, fbm-riesz, frac-bridge, ou, alpha-bridge).
    #[arg(long)]
    preset: Option<String>,
    /// Inline family as JSON, e.g. '{"family":"takenaka_fbm","H":0.25,"d":1}'.
    #[arg(long, value_parser = parse_json)]
    family: Option<Value>,
    /// Overrides the Hurst index of the family.
    #[arg(long = "H")]
    #[serde(rename = "H")]
    h: Option<f64>,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct GridArgs {
    /// One-dimensional grid `start:stop:count`, both ends included.
    #[arg(long)]
    grid: Option<String>,
    /// Explicit points `x1,y1;x2,y2;...`.
    #[arg(long)]
    points: Option<String>,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SimArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10_000)]
    n_paths: usize,
    /// Smallest radius; defaults to 1e-3 times the grid diameter.
    #[arg(long)]
    u_min: Option<f64>,
    /// Largest radius; defaults to 1e3 times the grid diameter.
    #[arg(long)]
    u_max: Option<f64>,
    #[arg(long, default_value_t = 256)]
    cells_per_axis: usize,
    #[arg(long, default_value_t = 1.05)]
    u_ratio: f64,
    #[arg(long)]
    bias_tolerance: Option<f64>,
    /// Validate the sample against the exact covariance at this z threshold.
    #[arg(long)]
    z_max: Option<f64>,
    /// Fit one scale factor before computing z-scores.
    #[arg(long)]
    scale_fit: bool,
}

impl Default for SimArgs {
    fn default() -> Self {
        SimArgs {
            seed: 0,
            n_paths: 10_000,
            u_min: None,
            u_max: None,
            cells_per_axis: 256,
            u_ratio: 1.05,
            bias_tolerance: None,
            z_max: None,
            scale_fit: false,
        }
    }
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CovArgs {
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    grid: GridArgs,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// JSON file whose keys override the flags.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

impl Default for CovArgs {
    fn default() -> Self {
        CovArgs { model: ModelArgs::default(), grid: GridArgs::default(), out: "out".into(), config: None }
    }
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SampleArgs {
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    #[serde(flatten)]
    sim: SimArgs,
    /// `cholesky` or `shotnoise`.
    #[arg(long, default_value = "cholesky")]
    backend: String,
    /// Shot-noise exponent; Takenaka families default to `d - 2H`.
    #[arg(long)]
    beta: Option<f64>,
    /// `ball` or `gaussian:<scale>`.
    #[arg(long, default_value = "ball")]
    pulse: String,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

impl Default for SampleArgs {
    fn default() -> Self {
        SampleArgs {
            model: ModelArgs::default(),
            grid: GridArgs::default(),
            sim: SimArgs::default(),
            backend: "cholesky".into(),
            beta: None,
            pulse: "ball".into(),
            out: "out".into(),
            config: None,
        }
    }
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct MembraneArgs {
    /// `hard` or `soft`.
    #[arg(long, default_value = "hard")]
    mode: String,
    /// `interval:lo,hi`, `ball:c1,..,cd,r`, `box:lo1,..,lod,hi1,..,hid` or JSON.
    #[arg(long, default_value = "interval:0,1")]
    domain: String,
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<f64>,
    #[arg(long = "H")]
    #[serde(rename = "H")]
    h: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    grid: GridArgs,
    /// Write the exact covariance instead of sampling.
    #[arg(long)]
    exact: bool,
    /// Harmonic measure by walk on spheres with this many samples.
    #[arg(long)]
    wos_samples: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    sim: SimArgs,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

impl Default for MembraneArgs {
    fn default() -> Self {
        MembraneArgs {
            mode: "hard".into(),
            domain: "interval:0,1".into(),
            beta: None,
            h: None,
            grid: GridArgs::default(),
            exact: false,
            wos_samples: None,
            sim: SimArgs::default(),
            out: "out".into(),
            config: None,
        }
    }
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TangentArgs {
    #[arg(long, default_value = "interval:0,1")]
    domain: String,
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.5)]
    beta: f64,
    /// Base point, comma separated.
    #[arg(long, default_value = "0.5")]
    z: String,
    #[arg(long, allow_hyphen_values = true, default_value = "1")]
    s: String,
    #[arg(long, allow_hyphen_values = true, default_value = "-1")]
    t: String,
    /// Decreasing scales, comma separated; defaults to 2^-6, ..., 2^-12.
    #[arg(long)]
    eps: Option<String>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

impl Default for TangentArgs {
    fn default() -> Self {
        TangentArgs {
            domain: "interval:0,1".into(),
            beta: 0.5,
            z: "0.5".into(),
            s: "1".into(),
            t: "-1".into(),
            eps: None,
            out: "out".into(),
            config: None,
        }
    }
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ValidateArgs {
    /// Only `full` is defined.
    #[arg(long, default_value = "full")]
    suite: String,
    /// Subset of criteria, comma separated.
    #[arg(long)]
    criteria: Option<String>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

impl Default for ValidateArgs {
    fn default() -> Self {
        ValidateArgs { suite: "full".into(), criteria: None, out: "out".into(), config: None }
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}

/// Overlays the keys of a JSON config on the parsed flags.
fn merge_config<T: Serialize + DeserializeOwned>(flags: &T, config: Option<&Path>, command: &str) -> Result<T> {
    let Some(path) = config else {
        return Ok(serde_json::from_value(serde_json::to_value(flags)?)?);
    };
    let text = fs::read_to_string(path)?;
    let Value::Object(overrides) = serde_json::from_str::<Value>(&text)? else {
        return Err(invalid("config file must hold a JSON object"));
    };
    let mut base = serde_json::to_value(flags)?;
    let obj = base.as_object_mut().expect("arguments serialize to an object");
    for (k, v) in overrides {
        if k == "command" {
            if v.as_str() != Some(command) {
                return Err(invalid(format!("config is for command {v}, not {command}")));
            }
            continue;
        }
        obj.insert(k, v);
    }
    serde_json::from_value(base).map_err(|e| invalid(format!("config: {e}")))
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|_| invalid(format!("not a number: {x:?}"))))
        .collect()
}

fn parse_grid(g: &GridArgs) -> Result<Vec<Vec<f64>>> {
    let pts = match (&g.grid, &g.points) {
        (Some(spec), None) => {
            let parts: Vec<&str> = spec.split(':').collect();
            if parts.len() != 3 {
                return Err(invalid(format!("grid must be start:stop:count, got {spec:?}")));
            }
            let a = parts[0].parse::<f64>().map_err(|_| invalid("bad grid start"))?;
            let b = parts[1].parse::<f64>().map_err(|_| invalid("bad grid stop"))?;
            let n = parts[2].parse::<usize>().map_err(|_| invalid("bad grid count"))?;
            match n {
                0 => Vec::new(),
                1 => vec![vec![a]],
                _ => (0..n).map(|k| vec![a + (b - a) * k as f64 / (n - 1) as f64]).collect(),
            }
        }
        (None, Some(spec)) => spec.split(';').filter(|p| !p.trim().is_empty()).map(parse_list).collect::<Result<_>>()?,
        (Some(_), Some(_)) => return Err(invalid("give either grid or points, not both")),
        (None, None) => return Err(invalid("a grid or points is required")),
    };
    if pts.is_empty() {
        return Err(invalid("grid is empty"));
    }
    Ok(pts)
}

fn grid_diameter(grid: &[Vec<f64>]) -> f64 {
    let mut d: f64 = 0.0;
    for a in grid {
        for b in grid {
            d = d.max(a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt());
        }
        d = d.max(a.iter().map(|x| x * x).sum::<f64>().sqrt());
    }
    if d > 0.0 {
        d
    } else {
        1.0
    }
}

fn parse_domain(s: &str) -> Result<DomainSpec> {
    let s = s.trim();
    if s.starts_with('{') {
        return Ok(serde_json::from_str(s)?);
    }
    let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
    let v = if rest.is_empty() { Vec::new() } else { parse_list(rest)? };
    let d = match kind {
        "interval" if v.len() == 2 => DomainSpec::Interval { lo: v[0], hi: v[1] },
        "disk" if v.is_empty() => DomainSpec::unit_disk(),
        "ball" if v.len() >= 2 => DomainSpec::Ball { center: v[..v.len() - 1].to_vec(), radius: v[v.len() - 1] },
        "box" if v.len() >= 2 && v.len() % 2 == 0 => {
            let k = v.len() / 2;
            DomainSpec::Box { lo: v[..k].to_vec(), hi: v[k..].to_vec() }
        }
        _ => return Err(invalid(format!("cannot parse domain {s:?}"))),
    };
    d.validate()?;
    Ok(d)
}

fn parse_pulse(s: &str) -> Result<Pulse> {
    match s.split_once(':') {
        None if s == "ball" => Ok(Pulse::BallIndicator),
        Some(("gaussian", v)) => {
            let scale = v.parse::<f64>().map_err(|_| invalid("bad gaussian scale"))?;
            Ok(Pulse::RadialGaussian { scale })
        }
        _ => Err(invalid(format!("unknown pulse {s:?}"))),
    }
}

fn resolve_family(m: &ModelArgs) -> Result<MeasureFamily> {
    let mut fam = match (&m.preset, &m.family) {
        (Some(name), None) => preset(name)?,
        (None, Some(v)) => serde_json::from_value(v.clone())?,
        (Some(_), Some(_)) => return Err(invalid("give either a preset or a family, not both")),
        (None, None) => return Err(invalid("a preset or family is required")),
    };
    if let Some(h) = m.h {
        match &mut fam {
            MeasureFamily::TakenakaFbm { h: x, .. }
            | MeasureFamily::RieszFbm { h: x, .. }
            | MeasureFamily::WellBalancedFbm { h: x, .. }
            | MeasureFamily::MandelbrotVanNess { h: x }
            | MeasureFamily::FractionalBridge { h: x } => *x = h,
            _ => return Err(invalid("this family has no Hurst index")),
        }
    }
    fam.validate()?;
    Ok(fam)
}

fn worker_hint() -> Result<usize> {
    match std::env::var("SELFSIM_THREADS") {
        Ok(v) => v.trim().parse::<usize>().ok().filter(|n| *n > 0).ok_or_else(|| invalid("SELFSIM_THREADS must be a positive integer")),
        Err(_) => Ok(1),
    }
}

fn sim_config(a: &SimArgs, grid: &[Vec<f64>], u_max_floor: Option<f64>) -> Result<SimConfig> {
    let diam = grid_diameter(grid);
    let mut cfg = SimConfig::new(a.seed, a.n_paths, a.u_min.unwrap_or(1e-3 * diam), a.u_max.unwrap_or(1e3 * diam));
    if let (None, Some(floor)) = (a.u_max, u_max_floor) {
        cfg.u_max = cfg.u_max.max(floor);
    }
    cfg.cells_per_axis = a.cells_per_axis;
    cfg.u_ratio = a.u_ratio;
    cfg.bias_tolerance = a.bias_tolerance;
    cfg.worker_hint = worker_hint()?;
    cfg.validate()?;
    Ok(cfg)
}

/// Files written by a command, hashed into the manifest.
struct Artifacts {
    out: PathBuf,
    files: Vec<PathBuf>,
}

impl Artifacts {
    fn new(out: &Path) -> Result<Self> {
        fs::create_dir_all(out)?;
        Ok(Artifacts { out: out.to_path_buf(), files: Vec::new() })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let p = self.out.join(name);
        fs::write(&p, contents)?;
        self.files.push(p);
        Ok(())
    }

    fn paths(&mut self, p: &PathSample, stem: &str) -> Result<()> {
        let (a, b) = p.write(&self.out, stem)?;
        self.files.push(a);
        self.files.push(b);
        Ok(())
    }

    fn manifest(&self, command: &str, config: &impl Serialize, seeds: &[u64]) -> Result<()> {
        let mut files = Vec::new();
        for f in &self.files {
            let bytes = fs::read(f)?;
            let name = f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            files.push(json!({"path": name, "sha256": hex::encode(Sha256::digest(&bytes))}));
        }
        let m = json!({
            "command": command,
            "versions": {"selfsim-cli": env!("CARGO_PKG_VERSION"), "selfsim-core": selfsim_core::VERSION},
            "config": config,
            "seeds": seeds,
            "files": files,
        });
        fs::write(self.out.join("manifest.json"), serde_json::to_string_pretty(&m)? + "\n")?;
        Ok(())
    }
}

/// Outcome of a command: `true` when every requested validation passed.
type Outcome = Result<bool>;

fn run_cov(a: &CovArgs) -> Outcome {
    let fam = resolve_family(&a.model)?;
    let grid = parse_grid(&a.grid)?;
    let m = gram(|s, t| process_covariance(&fam, s, t), &grid)?;
    let mut art = Artifacts::new(&a.out)?;
    art.write("cov.csv", &matrix_csv(&m))?;
    art.manifest("cov", a, &[])?;
    Ok(true)
}

fn check_sample(p: &PathSample, exact: &[Vec<f64>], sim: &SimArgs, art: &mut Artifacts) -> Outcome {
    let emp = empirical_covariance(p)?;
    art.write("empirical_cov.csv", &matrix_csv(&emp.matrix))?;
    art.write("empirical_se.csv", &matrix_csv(&emp.standard_errors))?;
    art.write("exact_cov.csv", &matrix_csv(exact))?;
    let Some(z) = sim.z_max else {
        return Ok(true);
    };
    let r = validate(&emp, exact, z, sim.scale_fit)?;
    art.write("validation.json", &(serde_json::to_string_pretty(&r)? + "\n"))?;
    println!("max |z| = {:.3} (threshold {z}), scale {:.6}: {}", r.max_abs_z, r.scale, if r.pass { "pass" } else { "fail" });
    Ok(r.pass)
}

fn run_sample(a: &SampleArgs) -> Outcome {
    let fam = resolve_family(&a.model)?;
    let grid = parse_grid(&a.grid)?;
    let mut art = Artifacts::new(&a.out)?;
    let (p, exact) = match a.backend.as_str() {
        "cholesky" => {
            let exact = gram(|s, t| process_covariance(&fam, s, t), &grid)?;
            let p = cholesky_sample(|s, t| process_covariance(&fam, s, t), &grid, a.sim.n_paths, a.sim.seed, worker_hint()?)?;
            (p, exact)
        }
        "shotnoise" => {
            let d = fam.dim();
            let beta = match (a.beta, &fam) {
                (Some(b), _) => b,
                (None, MeasureFamily::TakenakaFbm { h, d }) => *d as f64 - 2.0 * h,
                _ => return Err(invalid("shot noise needs --beta for this family")),
            };
            let pulse = parse_pulse(&a.pulse)?;
            let cfg = sim_config(&a.sim, &grid, None)?;
            let p = shotnoise_sample_family(&pulse, beta, &fam, &grid, &cfg)?;
            // The exact field covariance is K_h times the kernel shape.
            let h = (d as f64 - beta) / 2.0;
            let e = vec![1.0].into_iter().chain(std::iter::repeat(0.0)).take(d).collect::<Vec<_>>();
            let kh = kernel_kh(&pulse, beta, d, &e)?.abs();
            let exact = grid.iter().map(|s| grid.iter().map(|t| kh * fbm_shape(h, s, t)).collect()).collect();
            (p, exact)
        }
        other => return Err(invalid(format!("unknown backend {other:?}"))),
    };
    art.paths(&p, "paths")?;
    let ok = check_sample(&p, &exact, &a.sim, &mut art)?;
    art.manifest("sample", a, &[a.sim.seed])?;
    Ok(ok)
}

fn run_membrane(a: &MembraneArgs) -> Outcome {
    let domain = parse_domain(&a.domain)?;
    let grid = parse_grid(&a.grid)?;
    let mut art = Artifacts::new(&a.out)?;
    let cov: Box<dyn Fn(&[f64], &[f64]) -> Result<f64>> = match a.mode.as_str() {
        "hard" => {
            let beta = a.beta.ok_or_else(|| invalid("hard membranes need --beta"))?;
            let d = domain.clone();
            Box::new(move |s, t| hard_membrane_covariance(&d, beta, s, t))
        }
        "soft" => {
            let h = a.h.ok_or_else(|| invalid("soft membranes need --H"))?;
            let method = match a.wos_samples {
                Some(n) => HarmonicMethod::WalkOnSpheres { n_samples: n, eps_shell: None, seed: a.sim.seed },
                None => match domain {
                    DomainSpec::Box { .. } => HarmonicMethod::WalkOnSpheres { n_samples: 20_000, eps_shell: None, seed: a.sim.seed },
                    _ => HarmonicMethod::ClosedForm,
                },
            };
            let d = domain.clone();
            Box::new(move |s, t| soft_membrane_covariance_with(&d, h, s, t, &method))
        }
        other => return Err(invalid(format!("unknown membrane mode {other:?}"))),
    };
    let exact = gram(&cov, &grid)?;
    art.write("membrane_cov.csv", &matrix_csv(&exact))?;
    let mut ok = true;
    if !a.exact {
        let p = if a.mode == "hard" {
            let cfg = sim_config(&a.sim, &grid, Some(domain.sup_inradius()))?;
            hard_membrane_sample(&domain, a.beta.unwrap_or_default(), &grid, &cfg)?
        } else {
            cholesky_sample(&cov, &grid, a.sim.n_paths, a.sim.seed, worker_hint()?)?
        };
        art.paths(&p, "paths")?;
        ok = check_sample(&p, &exact, &a.sim, &mut art)?;
    }
    art.manifest("membrane", a, if a.exact { &[] } else { std::slice::from_ref(&a.sim.seed) })?;
    Ok(ok)
}

fn run_tangent(a: &TangentArgs) -> Outcome {
    let domain = parse_domain(&a.domain)?;
    let eps = match &a.eps {
        Some(s) => parse_list(s)?,
        None => (6..=12).map(|k| 2f64.powi(-k)).collect(),
    };
    let r = tangent_field_check(&domain, a.beta, &parse_list(&a.z)?, &parse_list(&a.s)?, &parse_list(&a.t)?, &eps)?;
    let mut art = Artifacts::new(&a.out)?;
    art.write("tangent.json", &(serde_json::to_string_pretty(&r)? + "\n"))?;
    art.manifest("tangent", a, &[])?;
    println!("H_hat = {:.4} (theory {}), shape error {:.3e}", r.h_hat, r.h_theory, r.shape_error);
    Ok(true)
}

fn run_validate(a: &ValidateArgs) -> Outcome {
    if a.suite != "full" {
        return Err(invalid(format!("unknown suite {:?}", a.suite)));
    }
    let ids: Vec<u8> = match &a.criteria {
        Some(s) => s
            .split(',')
            .map(|x| x.trim().parse::<u8>().ok().filter(|i| CRITERIA.contains(i)).ok_or_else(|| invalid(format!("no criterion {x:?}"))))
            .collect::<Result<_>>()?,
        None => CRITERIA.to_vec(),
    };
    let mut art = Artifacts::new(&a.out)?;
    let results = run_suite(&ids, &a.out)?;
    for r in &results {
        println!("{}", r.line());
    }
    art.write("suite.json", &(serde_json::to_string_pretty(&results)? + "\n"))?;
    art.manifest("validate", a, &[selfsim_core::suite::SUITE_SEED])?;
    Ok(results.iter().all(|r| r.pass))
}

fn dispatch(cli: Cli) -> Outcome {
    match cli.command {
        Command::Cov(a) => run_cov(&merge_config(&a, a.config.as_deref(), "cov")?),
        Command::Sample(a) => run_sample(&merge_config(&a, a.config.as_deref(), "sample")?),
        Command::Membrane(a) => run_membrane(&merge_config(&a, a.config.as_deref(), "membrane")?),
        Command::Tangent(a) => run_tangent(&merge_config(&a, a.config.as_deref(), "tangent")?),
        Command::Validate(a) => run_validate(&merge_config(&a, a.config.as_deref(), "validate")?),
    }
}

fn report(kind: &str, message: &str) -> ExitCode {
    eprintln!("{}", json!({"error": kind, "message": message}));
    ExitCode::from(EXIT_ERROR)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return report("InvalidArguments", e.to_string().trim()),
    };
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_VALIDATION),
        Err(e) => report(e.kind(), &e.to_string()),
    }
}
