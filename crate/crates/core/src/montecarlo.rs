//! Sampling backends: white-noise discretization of the shot-noise and
//! hard-membrane integrals, and Cholesky sampling of exact covariances.
//!
//! Cells whose coefficient vectors over the evaluation grid coincide are
//! pooled: `Σ_i c √ν_i ξ_i` has the law of `c √(Σν_i) ξ`, so one normal
//! per pool is drawn. Normals come from a ChaCha8 stream keyed by
//! `(seed, path index)` and consumed in pool order, which makes every
//! path independent of the thread layout.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Cholesky, DMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kernels::{shot_range, Pulse, ShotRange};
use crate::measures::{unit_ball_volume, SignedMeasure, Support};
use crate::membranes::DomainSpec;
use crate::processes::MeasureFamily;
use crate::quadrature::{self, Singular, Tolerance};

/// Jitter ladder of the Cholesky backend, as multiples of the largest diagonal entry.
pub const JITTER_LADDER: [f64; 7] = [1e-12, 1e-11, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];
/// Default ratio between consecutive radius levels.
pub const DEFAULT_U_RATIO: f64 = 1.05;

fn default_cells() -> usize {
    256
}
fn default_ratio() -> f64 {
    DEFAULT_U_RATIO
}
fn default_workers() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    pub n_paths: usize,
    pub u_min: f64,
    pub u_max: f64,
    /// Spatial window; derived from the supports when absent.
    #[serde(default)]
    pub window: Option<Window>,
    /// Spatial cells per axis and radius level (ignored where the spatial
    /// integral is resolved exactly).
    #[serde(default = "default_cells")]
    pub cells_per_axis: usize,
    #[serde(default = "default_ratio")]
    pub u_ratio: f64,
    /// Thread count; never changes results.
    #[serde(default = "default_workers")]
    pub worker_hint: usize,
    /// Largest acceptable a-priori truncation bias on a variance.
    #[serde(default)]
    pub bias_tolerance: Option<f64>,
}

impl SimConfig {
    pub fn new(seed: u64, n_paths: usize, u_min: f64, u_max: f64) -> Self {
        SimConfig {
            seed,
            n_paths,
            u_min,
            u_max,
            window: None,
            cells_per_axis: default_cells(),
            u_ratio: DEFAULT_U_RATIO,
            worker_hint: 1,
            bias_tolerance: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::InvalidConfig("n_paths must be positive".into()));
        }
        if !(self.u_min > 0.0 && self.u_min < self.u_max && self.u_max.is_finite()) {
            return Err(Error::InvalidConfig(format!("need 0 < u_min < u_max, got {} and {}", self.u_min, self.u_max)));
        }
        if !(self.u_ratio > 1.0) || self.cells_per_axis == 0 || self.worker_hint == 0 {
            return Err(Error::InvalidConfig("u_ratio > 1, cells_per_axis and worker_hint positive".into()));
        }
        if let Some(w) = &self.window {
            if w.lo.len() != w.hi.len() || w.lo.iter().zip(&w.hi).any(|(a, b)| !(a < b)) {
                return Err(Error::InvalidConfig("window needs lo < hi on every axis".into()));
            }
        }
        Ok(())
    }

    /// SHA-256 of the configuration with `worker_hint` blanked out.
    pub fn hash_with(&self, extra: &str) -> String {
        let mut c = self.clone();
        c.worker_hint = 0;
        let mut h = Sha256::new();
        h.update(serde_json::to_string(&c).expect("config serializes"));
        h.update(extra.as_bytes());
        hex::encode(h.finalize())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PathSample {
    pub grid: Vec<Vec<f64>>,
    /// `n_paths × grid.len()`.
    pub values: Vec<Vec<f64>>,
    pub backend: String,
    pub config_hash: String,
    pub seed: u64,
    #[serde(default)]
    pub bias_bound: Option<f64>,
    #[serde(default)]
    pub jitter: Option<f64>,
}

impl PathSample {
    pub fn n_paths(&self) -> usize {
        self.values.len()
    }

    /// Rows with every float printed with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for row in &self.values {
            write_row(&mut s, row);
        }
        s
    }

    pub fn sidecar(&self) -> serde_json::Value {
        serde_json::json!({
            "backend": self.backend,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "n_paths": self.n_paths(),
            "grid": self.grid,
            "bias_bound": self.bias_bound,
            "jitter": self.jitter,
        })
    }

    /// Writes `<stem>.csv` and `<stem>.json`, returning both paths.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir)?;
        let csv = dir.join(format!("{stem}.csv"));
        let json = dir.join(format!("{stem}.json"));
        fs::write(&csv, self.to_csv())?;
        fs::write(&json, serde_json::to_string_pretty(&self.sidecar())?)?;
        Ok((csv, json))
    }
}

fn write_row(s: &mut String, row: &[f64]) {
    for (i, v) in row.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        write!(s, "{v:.16e}").expect("write to string");
    }
    s.push('\n');
}

/// Matrix as CSV with 17 significant digits.
pub fn matrix_csv(m: &[Vec<f64>]) -> String {
    let mut s = String::new();
    for row in m {
        write_row(&mut s, row);
    }
    s
}

/// Pooled discretization: coefficient vectors over the grid and the total
/// control mass carried by each.
#[derive(Clone, Debug)]
pub struct Design {
    pub pools: Vec<(Vec<f64>, f64)>,
    /// Sum of `ν(cell)` over all cells, including those with zero coefficients.
    pub total_nu: f64,
    pub bias_bound: f64,
}

impl Design {
    /// `Σ ν c cᵀ`: the covariance the sampler targets.
    pub fn covariance(&self) -> Vec<Vec<f64>> {
        let n = self.pools.first().map_or(0, |p| p.0.len());
        let mut m = vec![vec![0.0; n]; n];
        for (c, nu) in &self.pools {
            for i in 0..n {
                for j in 0..n {
                    m[i][j] += nu * c[i] * c[j];
                }
            }
        }
        m
    }
}

/// Geometric radius levels `(centroid, ∫ u^{-β-1} du)`.
pub fn radius_levels(u_min: f64, u_max: f64, ratio: f64, beta: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut lo = u_min;
    while lo < u_max {
        let hi = (lo * ratio).min(u_max);
        let nu = if beta == 0.0 { (hi / lo).ln() } else { (lo.powf(-beta) - hi.powf(-beta)) / beta };
        out.push((0.5 * (lo + hi), nu));
        lo = hi;
    }
    out
}

#[derive(Default)]
struct Pooler {
    map: BTreeMap<Vec<u64>, (Vec<f64>, f64)>,
    total: f64,
}

impl Pooler {
    fn add(&mut self, c: Vec<f64>, nu: f64) {
        self.total += nu;
        if nu == 0.0 || c.iter().all(|v| *v == 0.0) {
            return;
        }
        // Normalize -0.0 so equal vectors share a key.
        let c: Vec<f64> = c.into_iter().map(|v| v + 0.0).collect();
        let key = c.iter().map(|v| v.to_bits()).collect();
        self.map.entry(key).or_insert((c, 0.0)).1 += nu;
    }

    fn finish(self, bias_bound: f64) -> Design {
        Design { pools: self.map.into_values().collect(), total_nu: self.total, bias_bound }
    }
}

/// `⟨μ, τ_{(x,u)} h⟩ = ∫ h((y - x)/u) μ(dy)`.
fn pulse_pairing(mu: &SignedMeasure, h: &Pulse, x: &[f64], u: f64) -> Result<f64> {
    let mut v = 0.0;
    for a in &mu.atoms {
        let y: Vec<f64> = a.0.iter().zip(x).map(|(p, q)| (p - q) / u).collect();
        v += a.1 * h.eval(&y);
    }
    for dens in &mu.densities {
        if dens.dim() != 1 {
            return Err(Error::DimensionUnsupported("density coefficients need d=1".into()));
        }
        let r = h.support_radius();
        let extra: Vec<Singular> = if r.is_finite() {
            vec![Singular::breakpoint(x[0] - r * u), Singular::breakpoint(x[0] + r * u)]
        } else {
            Vec::new()
        };
        v += dens.integrate_1d(&|y| h.eval(&[(y - x[0]) / u]), &extra, 0.0, false, Tolerance::rel(1e-10))?;
    }
    Ok(v)
}

fn check_shot_admissible(h: &Pulse, beta: f64, d: usize, measures: &[SignedMeasure]) -> Result<ShotRange> {
    if matches!(h, Pulse::Singular { .. } | Pulse::OneSided { .. }) {
        return Err(Error::NonAdmissible("shot noise needs a square-integrable pulse".into()));
    }
    let range = shot_range(beta, d).map_err(|e| Error::NonAdmissible(e.to_string()))?;
    for mu in measures {
        if mu.dim != d {
            return Err(Error::DimensionMismatch { expected: d, found: mu.dim });
        }
        if !mu.is_bounded() {
            return Err(Error::NonAdmissible("measures must have bounded support".into()));
        }
        if range == ShotRange::Small && mu.total_mass()?.abs() > 1e-12 * mu.total_variation()?.max(1.0) {
            return Err(Error::NonAdmissible(format!("β={beta} < d needs zero-mass measures")));
        }
    }
    Ok(range)
}

/// Variance mass lost below `u_min` and above `u_max`, largest over the grid.
///
/// For atomic measures this is the exact tail integral of
/// `Σ w_j w_k u^d V_h((a_j - a_k)/u) u^{-β-1}`; with densities the
/// total-variation bound `‖μ‖² u^d V_h(0)` is used instead.
fn shot_bias_bound(h: &Pulse, beta: f64, d: usize, measures: &[SignedMeasure], cfg: &SimConfig) -> Result<f64> {
    let df = d as f64;
    let v0 = h.autocorrelation(&vec![0.0; d])?;
    let mut worst: f64 = 0.0;
    for mu in measures {
        if mu.is_zero() {
            continue;
        }
        let tv = mu.total_variation()?;
        let small_bound = tv * tv * v0 * cfg.u_min.powf(df - beta) / (df - beta);
        let (small, large) = if mu.is_atomic() {
            let atoms = &mu.atoms;
            let zero_mass = mu.total_mass()?.abs() <= 1e-12 * tv;
            // Subtracting V(0) is exact for zero-mass measures and avoids
            // cancellation at large radii.
            let g = |u: f64, subtract: bool| -> f64 {
                if u == 0.0 {
                    return 0.0;
                }
                let mut acc = 0.0;
                for a in atoms {
                    for b in atoms {
                        let y: Vec<f64> = a.0.iter().zip(&b.0).map(|(p, q)| (p - q) / u).collect();
                        let v = h.autocorrelation(&y).unwrap_or(f64::NAN);
                        acc += a.1 * b.1 * if subtract { v - v0 } else { v };
                    }
                }
                acc * u.powf(df - beta - 1.0)
            };
            let sing = [Singular::new(0.0, (beta + 1.0 - df).max(0.0))];
            let small = quadrature::integrate(|u| g(u, false), 0.0, cfg.u_min, &sing, f64::INFINITY, Tolerance::rel(1e-8))
                .unwrap_or(small_bound);
            let decay = if zero_mass { beta - df + 2.0 } else { beta - df + 1.0 };
            // A bound only needs its error bar, so a stalled quadrature
            // still yields |estimate| + error.
            let large = match quadrature::integrate(|u| g(u, zero_mass), cfg.u_max, f64::INFINITY, &[], decay, Tolerance::rel(1e-8)) {
                Ok(v) => v,
                Err(Error::QuadratureFailure { estimate, error, .. }) if (estimate.abs() + error).is_finite() => estimate.abs() + error,
                Err(_) => f64::INFINITY,
            };
            (small, large)
        } else {
            let large = if beta > df { tv * tv * v0 * cfg.u_max.powf(df - beta) / (beta - df) } else { f64::INFINITY };
            (small_bound, large)
        };
        worst = worst.max(small.abs() + large.abs());
    }
    Ok(worst)
}

fn check_bias(bound: f64, cfg: &SimConfig) -> Result<()> {
    match cfg.bias_tolerance {
        Some(tol) if !(bound <= tol) => Err(Error::TruncationTooCoarse { bound, tolerance: tol }),
        _ => Ok(()),
    }
}

fn support_box(measures: &[SignedMeasure], d: usize) -> (Vec<f64>, Vec<f64>) {
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    let mut extend = |p: &[f64], q: &[f64]| {
        for i in 0..d {
            lo[i] = lo[i].min(p[i]);
            hi[i] = hi[i].max(q[i]);
        }
    };
    for mu in measures {
        for a in &mu.atoms {
            extend(&a.0, &a.0);
        }
        for dens in &mu.densities {
            match dens.support() {
                Support::Box { lo, hi } => extend(&lo, &hi),
                Support::Ball { center, radius } => {
                    let l: Vec<f64> = center.iter().map(|c| c - radius).collect();
                    let h: Vec<f64> = center.iter().map(|c| c + radius).collect();
                    extend(&l, &h)
                }
                Support::Whole => extend(&vec![f64::NEG_INFINITY; d], &vec![f64::INFINITY; d]),
            }
        }
    }
    (lo, hi)
}

fn pulse_reach(h: &Pulse) -> f64 {
    match h {
        Pulse::RadialGaussian { scale } => 10.0 * scale,
        _ => h.support_radius(),
    }
}

/// Pooled discretization of `X_h(μ) = ∫ ⟨μ, τ_z h⟩ M_β(dz)`.
///
/// Radii follow a geometric grid. For atomic measures on the line under
/// the ball pulse the spatial integral at each radius is exact (the limit
/// of infinitely fine centroid cells); otherwise each radius level gets
/// `cells_per_axis` uniform cells per axis over the supports padded by the
/// pulse reach, evaluated at their centroids.
pub fn shotnoise_design(h: &Pulse, beta: f64, measures: &[SignedMeasure], cfg: &SimConfig) -> Result<Design> {
    cfg.validate()?;
    let d = measures.first().map_or(1, |m| m.dim);
    check_shot_admissible(h, beta, d, measures)?;
    let bias = shot_bias_bound(h, beta, d, measures, cfg)?;
    check_bias(bias, cfg)?;
    let (slo, shi) = support_box(measures, d);
    if measures.iter().all(|m| m.is_zero()) {
        return Ok(Design { pools: Vec::new(), total_nu: 0.0, bias_bound: 0.0 });
    }
    let reach = pulse_reach(h);
    if let Some(w) = &cfg.window {
        if w.lo.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: w.lo.len() });
        }
        let fits = (0..d).all(|i| w.lo[i] <= slo[i] - reach * cfg.u_max && w.hi[i] >= shi[i] + reach * cfg.u_max);
        if !fits {
            return Err(Error::InvalidConfig("window must contain the supports padded by u_max".into()));
        }
    }
    let levels = radius_levels(cfg.u_min, cfg.u_max, cfg.u_ratio, beta);
    let exact_x = d == 1 && matches!(h, Pulse::BallIndicator) && measures.iter().all(|m| m.is_atomic());
    let mut pool = Pooler::default();
    if exact_x {
        let locs: Vec<f64> = measures.iter().flat_map(|m| m.atoms.iter().map(|a| a.0[0])).collect();
        for &(u, nu) in &levels {
            let mut cuts: Vec<f64> = locs.iter().flat_map(|a| [a - u, a + u]).collect();
            cuts.sort_by(f64::total_cmp);
            cuts.dedup();
            for w in cuts.windows(2) {
                let (x, len) = (0.5 * (w[0] + w[1]), w[1] - w[0]);
                if len <= 0.0 {
                    continue;
                }
                let c = measures
                    .iter()
                    .map(|m| m.atoms.iter().filter(|a| (a.0[0] - x).abs() < u).map(|a| a.1).sum())
                    .collect();
                pool.add(c, len * nu);
            }
        }
    } else {
        let n = cfg.cells_per_axis;
        for &(u, nu) in &levels {
            let lo: Vec<f64> = slo.iter().map(|v| v - reach * u).collect();
            let hi: Vec<f64> = shi.iter().map(|v| v + reach * u).collect();
            let widths: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| (b - a) / n as f64).collect();
            let vol: f64 = widths.iter().product();
            let cells = n.pow(d as u32);
            let coeffs: Vec<Result<(Vec<f64>, f64)>> = (0..cells)
                .into_par_iter()
                .map(|idx| {
                    let mut rem = idx;
                    let x: Vec<f64> = (0..d)
                        .map(|i| {
                            let k = rem % n;
                            rem /= n;
                            lo[i] + (k as f64 + 0.5) * widths[i]
                        })
                        .collect();
                    let c = measures.iter().map(|m| pulse_pairing(m, h, &x, u)).collect::<Result<Vec<f64>>>()?;
                    Ok((c, vol * nu))
                })
                .collect();
            for r in coeffs {
                let (c, w) = r?;
                pool.add(c, w);
            }
        }
    }
    Ok(pool.finish(bias))
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))
}

/// Draws `Σ_pool c √ν ξ` for every path.
pub fn sample_design(design: &Design, n_grid: usize, cfg: &SimConfig) -> Result<Vec<Vec<f64>>> {
    let scales: Vec<f64> = design.pools.iter().map(|p| p.1.sqrt()).collect();
    let run = || {
        (0..cfg.n_paths as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(i);
                let mut row = vec![0.0; n_grid];
                for ((c, _), s) in design.pools.iter().zip(&scales) {
                    let xi: f64 = StandardNormal.sample(&mut rng);
                    let a = s * xi;
                    for k in 0..n_grid {
                        row[k] += a * c[k];
                    }
                }
                row
            })
            .collect()
    };
    Ok(thread_pool(cfg.worker_hint)?.install(run))
}

/// Shot-noise paths at `grid` for explicit measures (one per grid point).
pub fn shotnoise_sample(h: &Pulse, beta: f64, measures: &[SignedMeasure], grid: &[Vec<f64>], cfg: &SimConfig) -> Result<PathSample> {
    if measures.len() != grid.len() {
        return Err(Error::DimensionMismatch { expected: grid.len(), found: measures.len() });
    }
    let design = shotnoise_design(h, beta, measures, cfg)?;
    let values = sample_design(&design, grid.len(), cfg)?;
    let descriptor = format!("shotnoise|{h:?}|{beta}|{grid:?}|{}", serde_json::to_string(measures)?);
    Ok(PathSample {
        grid: grid.to_vec(),
        values,
        backend: "shotnoise".into(),
        config_hash: cfg.hash_with(&descriptor),
        seed: cfg.seed,
        bias_bound: Some(design.bias_bound),
        jitter: None,
    })
}

/// Shot-noise paths for a measure family; Takenaka families must satisfy `2H = d - β`.
pub fn shotnoise_sample_family(h: &Pulse, beta: f64, family: &MeasureFamily, grid: &[Vec<f64>], cfg: &SimConfig) -> Result<PathSample> {
    if let MeasureFamily::TakenakaFbm { h: hurst, d } = family {
        if (2.0 * hurst - (*d as f64 - beta)).abs() > 1e-12 {
            return Err(Error::NonAdmissible(format!("Takenaka H={hurst} needs β = d - 2H, got {beta}")));
        }
    }
    let measures = grid.iter().map(|t| family.measure(t)).collect::<Result<Vec<_>>>()?;
    shotnoise_sample(h, beta, &measures, grid, cfg)
}

/// Pooled discretization of the hard-membrane field `W_β(t) = M^D_β{(x,u): t ∈ B(x,u) ⊆ D}`.
pub fn hard_membrane_design(domain: &DomainSpec, beta: f64, grid: &[Vec<f64>], cfg: &SimConfig) -> Result<Design> {
    cfg.validate()?;
    domain.validate()?;
    let d = domain.dim();
    let df = d as f64;
    if !(beta < df) {
        return Err(Error::NonAdmissible(format!("β={beta} must be below d={d}")));
    }
    for t in grid {
        if t.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: t.len() });
        }
        if !domain.in_closure(t) {
            return Err(Error::ParameterOutOfRange(format!("grid point {t:?} outside the domain")));
        }
    }
    let rmax = domain.sup_inradius();
    let vd = unit_ball_volume(d);
    if cfg.u_max < rmax {
        let lost = vd * (rmax.powf(df - beta) - cfg.u_max.powf(df - beta)) / (df - beta);
        return Err(Error::TruncationTooCoarse { bound: lost, tolerance: cfg.bias_tolerance.unwrap_or(0.0) });
    }
    // Balls below u_min that cover t carry at most v_d u^d u^{-β-1}.
    let bias = vd * cfg.u_min.powf(df - beta) / (df - beta);
    check_bias(bias, cfg)?;
    let levels = radius_levels(cfg.u_min, rmax.min(cfg.u_max), cfg.u_ratio, beta);
    let mut pool = Pooler::default();
    match domain {
        DomainSpec::Interval { lo, hi } => {
            let pts: Vec<f64> = grid.iter().map(|t| t[0]).collect();
            for &(u, nu) in &levels {
                let (a, b) = (lo + u, hi - u);
                if !(a < b) {
                    continue;
                }
                let mut cuts: Vec<f64> = vec![a, b];
                cuts.extend(pts.iter().flat_map(|t| [t - u, t + u]).filter(|c| *c > a && *c < b));
                cuts.sort_by(f64::total_cmp);
                cuts.dedup();
                for w in cuts.windows(2) {
                    let x = 0.5 * (w[0] + w[1]);
                    let c = pts.iter().map(|t| if (t - x).abs() < u { 1.0 } else { 0.0 }).collect();
                    pool.add(c, (w[1] - w[0]) * nu);
                }
            }
        }
        _ => {
            let (blo, bhi) = match domain {
                DomainSpec::Ball { center, radius } => (
                    center.iter().map(|c| c - radius).collect::<Vec<_>>(),
                    center.iter().map(|c| c + radius).collect::<Vec<_>>(),
                ),
                DomainSpec::Box { lo, hi } => (lo.clone(), hi.clone()),
                DomainSpec::Interval { .. } => unreachable!(),
            };
            let n = cfg.cells_per_axis;
            let widths: Vec<f64> = blo.iter().zip(&bhi).map(|(a, b)| (b - a) / n as f64).collect();
            let vol: f64 = widths.iter().product();
            for &(u, nu) in &levels {
                for idx in 0..n.pow(d as u32) {
                    let mut rem = idx;
                    let x: Vec<f64> = (0..d)
                        .map(|i| {
                            let k = rem % n;
                            rem /= n;
                            blo[i] + (k as f64 + 0.5) * widths[i]
                        })
                        .collect();
                    if domain.inradius_at(&x) < u {
                        pool.total += vol * nu;
                        continue;
                    }
                    let c = grid
                        .iter()
                        .map(|t| if crate::measures::dist(t, &x) < u { 1.0 } else { 0.0 })
                        .collect();
                    pool.add(c, vol * nu);
                }
            }
        }
    }
    Ok(pool.finish(bias))
}

pub fn hard_membrane_sample(domain: &DomainSpec, beta: f64, grid: &[Vec<f64>], cfg: &SimConfig) -> Result<PathSample> {
    let design = hard_membrane_design(domain, beta, grid, cfg)?;
    let values = sample_design(&design, grid.len(), cfg)?;
    let descriptor = format!("hard|{}|{beta}|{grid:?}", serde_json::to_string(domain)?);
    Ok(PathSample {
        grid: grid.to_vec(),
        values,
        backend: "hard_membrane".into(),
        config_hash: cfg.hash_with(&descriptor),
        seed: cfg.seed,
        bias_bound: Some(design.bias_bound),
        jitter: None,
    })
}

/// Gram matrix of `cov` on `grid`.
pub fn gram<F>(cov: F, grid: &[Vec<f64>]) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&[f64], &[f64]) -> Result<f64>,
{
    let n = grid.len();
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let v = cov(&grid[i], &grid[j])?;
            m[i][j] = v;
            m[j][i] = v;
        }
    }
    Ok(m)
}

/// Exact Gaussian paths from a covariance builder via a jittered Cholesky factor.
pub fn cholesky_sample<F>(cov: F, grid: &[Vec<f64>], n_paths: usize, seed: u64, worker_hint: usize) -> Result<PathSample>
where
    F: Fn(&[f64], &[f64]) -> Result<f64>,
{
    if n_paths == 0 || worker_hint == 0 {
        return Err(Error::InvalidConfig("n_paths and worker_hint must be positive".into()));
    }
    let g = gram(cov, grid)?;
    let n = grid.len();
    let dmax = (0..n).map(|i| g[i][i]).fold(0.0, f64::max);
    let base = DMatrix::from_fn(n, n, |i, j| g[i][j]);
    let mut factor = None;
    for &delta in &JITTER_LADDER {
        if dmax == 0.0 && base.iter().all(|v| *v == 0.0) {
            factor = Some((DMatrix::zeros(n, n), delta));
            break;
        }
        let m = &base + DMatrix::identity(n, n) * (delta * dmax);
        if let Some(c) = Cholesky::new(m) {
            factor = Some((c.l(), delta));
            break;
        }
    }
    let (l, delta) = factor.ok_or(Error::NotPositiveSemidefinite { max_jitter: JITTER_LADDER[JITTER_LADDER.len() - 1] })?;
    let run = || {
        (0..n_paths as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i);
                let xi: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
                (0..n).map(|r| (0..=r).map(|c| l[(r, c)] * xi[c]).sum()).collect()
            })
            .collect()
    };
    let values = thread_pool(worker_hint)?.install(run);
    let mut h = Sha256::new();
    h.update(format!("cholesky|{seed}|{n_paths}|{grid:?}|{g:?}"));
    Ok(PathSample {
        grid: grid.to_vec(),
        values,
        backend: "cholesky".into(),
        config_hash: hex::encode(h.finalize()),
        seed,
        bias_bound: None,
        jitter: Some(delta),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EmpiricalCovariance {
    pub matrix: Vec<Vec<f64>>,
    pub standard_errors: Vec<Vec<f64>>,
    pub n: usize,
}

impl EmpiricalCovariance {
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir)?;
        let a = dir.join(format!("{stem}_cov.csv"));
        let b = dir.join(format!("{stem}_se.csv"));
        fs::write(&a, matrix_csv(&self.matrix))?;
        fs::write(&b, matrix_csv(&self.standard_errors))?;
        Ok((a, b))
    }
}

/// Second moments without mean subtraction (every field here is centred),
/// with Gaussian standard errors `√((C_ss C_tt + C_st²)/n)`.
pub fn empirical_covariance(p: &PathSample) -> Result<EmpiricalCovariance> {
    let n = p.n_paths();
    if n < 2 {
        return Err(Error::InvalidConfig("need at least two paths".into()));
    }
    let k = p.grid.len();
    let mut m = vec![vec![0.0; k]; k];
    for row in &p.values {
        for i in 0..k {
            for j in i..k {
                m[i][j] += row[i] * row[j];
            }
        }
    }
    for i in 0..k {
        for j in i..k {
            m[i][j] /= n as f64;
            m[j][i] = m[i][j];
        }
    }
    let se = (0..k)
        .map(|i| (0..k).map(|j| ((m[i][i] * m[j][j] + m[i][j] * m[i][j]) / n as f64).sqrt()).collect())
        .collect();
    Ok(EmpiricalCovariance { matrix: m, standard_errors: se, n })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValidationReport {
    pub pass: bool,
    pub scale: f64,
    pub max_abs_z: f64,
    pub z_max: f64,
    /// Up to five `(i, j, z)` entries with the largest `|z|`.
    pub worst: Vec<(usize, usize, f64)>,
}

/// z-scores of `emp` against `scale · exact` on the upper triangle.
pub fn validate(emp: &EmpiricalCovariance, exact: &[Vec<f64>], z_max: f64, allow_scale_fit: bool) -> Result<ValidationReport> {
    let k = emp.matrix.len();
    if exact.len() != k || exact.iter().any(|r| r.len() != k) {
        return Err(Error::DimensionMismatch { expected: k, found: exact.len() });
    }
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| (i..k).map(move |j| (i, j))).collect();
    let scale = if allow_scale_fit {
        let a: Vec<f64> = pairs.iter().map(|&(i, j)| emp.matrix[i][j]).collect();
        let b: Vec<f64> = pairs.iter().map(|&(i, j)| exact[i][j]).collect();
        crate::kernels::fit_constant(&a, &b)
    } else {
        1.0
    };
    let mut zs: Vec<(usize, usize, f64)> = pairs
        .iter()
        .map(|&(i, j)| {
            let diff = emp.matrix[i][j] - scale * exact[i][j];
            let se = emp.standard_errors[i][j];
            let z = if diff == 0.0 {
                0.0
            } else if se > 0.0 {
                diff / se
            } else {
                f64::INFINITY.copysign(diff)
            };
            (i, j, z)
        })
        .collect();
    zs.sort_by(|a, b| b.2.abs().total_cmp(&a.2.abs()));
    let max_abs_z = zs.first().map_or(0.0, |z| z.2.abs());
    zs.truncate(5);
    Ok(ValidationReport { pass: max_abs_z <= z_max, scale, max_abs_z, z_max, worst: zs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::kernel_kh;
    use crate::processes::fbm_shape;

    fn takenaka_exact(grid: &[Vec<f64>], beta: f64) -> Vec<Vec<f64>> {
        // Oracle: the kernel constant times the fBm shape.
        let kh = kernel_kh(&Pulse::BallIndicator, beta, 1, &[1.0]).unwrap().abs();
        let h = (1.0 - beta) / 2.0;
        grid.iter().map(|s| grid.iter().map(|t| kh * fbm_shape(h, s, t)).collect()).collect()
    }

    fn grid1(v: &[f64]) -> Vec<Vec<f64>> {
        v.iter().map(|x| vec![*x]).collect()
    }

    #[test]
    fn radius_levels_are_additive() {
        let lv = radius_levels(1e-3, 10.0, 1.05, 0.5);
        let total: f64 = lv.iter().map(|l| l.1).sum();
        let exact = (1e-3f64.powf(-0.5) - 10f64.powf(-0.5)) / 0.5;
        assert!((total - exact).abs() < 1e-12 * exact);
        let lv0 = radius_levels(1e-3, 10.0, 1.05, 0.0);
        assert!((lv0.iter().map(|l| l.1).sum::<f64>() - 1e4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn exact_design_matches_kernel_covariance() {
        let grid = grid1(&[0.4, 0.8, 1.2, 1.6, 2.0]);
        let fam = MeasureFamily::TakenakaFbm { h: 0.25, d: 1 };
        let ms: Vec<SignedMeasure> = grid.iter().map(|t| fam.measure(t).unwrap()).collect();
        let cfg = SimConfig::new(1, 10, 1e-7, 1e5);
        let design = shotnoise_design(&Pulse::BallIndicator, 0.5, &ms, &cfg).unwrap();
        let cov = design.covariance();
        let exact = takenaka_exact(&grid, 0.5);
        for i in 0..5 {
            for j in 0..5 {
                let r = (cov[i][j] - exact[i][j]).abs() / exact[i][j];
                assert!(r < 0.01, "({i},{j}) {r}");
            }
        }
        // Truncation loses at most the reported bias.
        let lost = exact[4][4] - cov[4][4];
        assert!(lost > 0.0 && lost < design.bias_bound + 0.005 * exact[4][4]);
    }

    #[test]
    fn ball_centroid_cells_converge_under_refinement() {
        let grid = grid1(&[0.5, 1.0]);
        let fam = MeasureFamily::TakenakaFbm { h: 0.25, d: 1 };
        let ms: Vec<SignedMeasure> = grid.iter().map(|t| fam.measure(t).unwrap()).collect();
        let mut cfg = SimConfig::new(1, 10, 1e-2, 1e2);
        let exact_design = shotnoise_design(&Pulse::BallIndicator, 0.5, &ms, &cfg).unwrap().covariance();
        // Force the generic cell path with a user pulse equal to the ball indicator.
        let user = Pulse::UserRadial(crate::kernels::UserPulse {
            label: "ball".into(),
            profile: std::sync::Arc::new(|r| if r < 1.0 { 1.0 } else { 0.0 }),
            support_radius: 1.0,
        });
        let mut errs = Vec::new();
        for n in [16, 32, 64, 128] {
            cfg.cells_per_axis = n;
            let d = shotnoise_design(&user, 0.5, &ms, &cfg).unwrap();
            let c = d.covariance();
            errs.push((c[1][1] - exact_design[1][1]).abs() / exact_design[1][1]);
        }
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
        assert!(errs[3] < 0.02);
    }

    #[test]
    fn refinement_preserves_control_mass() {
        let domain = DomainSpec::Box { lo: vec![0.0, 0.0], hi: vec![1.0, 1.0] };
        let grid = vec![vec![0.5, 0.5]];
        let mut cfg = SimConfig::new(0, 10, 0.05, 1.0);
        cfg.cells_per_axis = 8;
        let a = hard_membrane_design(&domain, 0.5, &grid, &cfg).unwrap().total_nu;
        cfg.cells_per_axis = 16;
        let b = hard_membrane_design(&domain, 0.5, &grid, &cfg).unwrap().total_nu;
        assert!((a - b).abs() < 1e-12 * a);
    }

    #[test]
    fn takenaka_variance_ratio() {
        let grid = grid1(&[1.0, 2.0]);
        let fam = MeasureFamily::TakenakaFbm { h: 0.25, d: 1 };
        let cfg = SimConfig::new(7, 100_000, 1e-7, 1e5);
        let p = shotnoise_sample_family(&Pulse::BallIndicator, 0.5, &fam, &grid, &cfg).unwrap();
        let e = empirical_covariance(&p).unwrap();
        let ratio = e.matrix[1][1] / e.matrix[0][0];
        let exact = takenaka_exact(&grid, 0.5);
        let oracle = exact[1][1] / exact[0][0];
        assert!((oracle - 2f64.sqrt()).abs() < 1e-9);
        // Delta-method SE of a ratio of correlated second moments.
        let (a, b, c) = (e.matrix[0][0], e.matrix[1][1], e.matrix[0][1]);
        let n = e.n as f64;
        let var_ln = (2.0 + 2.0 - 4.0 * (c * c) / (a * b)) / n;
        let se = ratio * var_ln.sqrt();
        assert!((ratio - oracle).abs() < 3.0 * se, "{ratio} vs {oracle} ± {se}");
    }

    #[test]
    fn zero_measures_give_zero_paths() {
        let cfg = SimConfig::new(3, 50, 1e-3, 10.0);
        let ms = vec![SignedMeasure::zero(1), SignedMeasure::zero(1)];
        let p = shotnoise_sample(&Pulse::BallIndicator, 0.5, &ms, &grid1(&[0.0, 0.0]), &cfg).unwrap();
        assert!(p.values.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn worker_hint_does_not_change_paths() {
        let grid = grid1(&[0.5, 1.0, 1.5]);
        let fam = MeasureFamily::TakenakaFbm { h: 0.25, d: 1 };
        let mut cfg = SimConfig::new(99, 2000, 1e-5, 1e3);
        let a = shotnoise_sample_family(&Pulse::BallIndicator, 0.5, &fam, &grid, &cfg).unwrap();
        cfg.worker_hint = 8;
        let b = shotnoise_sample_family(&Pulse::BallIndicator, 0.5, &fam, &grid, &cfg).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.config_hash, b.config_hash);
        cfg.seed = 100;
        let c = shotnoise_sample_family(&Pulse::BallIndicator, 0.5, &fam, &grid, &cfg).unwrap();
        assert_ne!(a.to_csv(), c.to_csv());
    }

    #[test]
    fn inadmissible_inputs() {
        let cfg = SimConfig::new(0, 10, 1e-3, 10.0);
        let ms = vec![SignedMeasure::dirac(vec![1.0], 1.0)];
        let g = grid1(&[1.0]);
        assert!(matches!(shotnoise_sample(&Pulse::BallIndicator, 0.5, &ms, &g, &cfg), Err(Error::NonAdmissible(_))));
        assert!(matches!(shotnoise_sample(&Pulse::Singular { beta: 0.5 }, 1.5, &ms, &g, &cfg), Err(Error::NonAdmissible(_))));
        let fam = MeasureFamily::TakenakaFbm { h: 0.25, d: 1 };
        assert!(matches!(shotnoise_sample_family(&Pulse::BallIndicator, 0.4, &fam, &g, &cfg), Err(Error::NonAdmissible(_))));
        let mut tight = cfg.clone();
        tight.bias_tolerance = Some(1e-6);
        assert!(matches!(
            shotnoise_sample_family(&Pulse::BallIndicator, 0.5, &fam, &g, &tight),
            Err(Error::TruncationTooCoarse { .. })
        ));
    }

    #[test]
    fn truncation_bound_is_sound() {
        let grid = grid1(&[1.0]);
        let fam = MeasureFamily::TakenakaFbm { h: 0.25, d: 1 };
        let ms = vec![fam.measure(&[1.0]).unwrap()];
        let cfg = SimConfig::new(0, 10, 1e-4, 1e3);
        let a = shotnoise_design(&Pulse::BallIndicator, 0.5, &ms, &cfg).unwrap();
        let mut half = cfg.clone();
        half.u_min /= 2.0;
        let b = shotnoise_design(&Pulse::BallIndicator, 0.5, &ms, &half).unwrap();
        let change = (b.covariance()[0][0] - a.covariance()[0][0]).abs();
        assert!(change < a.bias_bound, "{change} vs {}", a.bias_bound);
        let _ = grid;
    }

    #[test]
    fn hard_design_matches_bridge() {
        let domain = DomainSpec::unit_interval();
        let pts = [1.0 / 6.0, 2.0 / 6.0, 0.5, 4.0 / 6.0, 5.0 / 6.0];
        let grid = grid1(&pts);
        let cfg = SimConfig::new(0, 10, 1e-4, 1.0);
        let c = hard_membrane_design(&domain, -1.0, &grid, &cfg).unwrap().covariance();
        for (i, s) in pts.iter().enumerate() {
            for (j, t) in pts.iter().enumerate() {
                let exact = 0.5 * s.min(*t) * (1.0 - s.max(*t));
                assert!((c[i][j] - exact).abs() < 1e-3 * exact, "{} vs {exact}", c[i][j]);
            }
        }
    }

    #[test]
    fn hard_sample_boundary_point_is_zero() {
        let domain = DomainSpec::unit_interval();
        let cfg = SimConfig::new(0, 100, 1e-4, 1.0);
        let p = hard_membrane_sample(&domain, -1.0, &grid1(&[0.0, 0.5, 1.0]), &cfg).unwrap();
        assert!(p.values.iter().all(|r| r[0] == 0.0 && r[2] == 0.0 && r[1] != 0.0));
        let mut short = cfg.clone();
        short.u_max = 0.3;
        assert!(matches!(hard_membrane_sample(&domain, -1.0, &grid1(&[0.5]), &short), Err(Error::TruncationTooCoarse { .. })));
    }

    #[test]
    fn hard_sample_beta_half_variance() {
        let domain = DomainSpec::unit_interval();
        let cfg = SimConfig::new(5, 100_000, 1e-8, 1.0);
        let p = hard_membrane_sample(&domain, 0.5, &grid1(&[0.5]), &cfg).unwrap();
        let e = empirical_covariance(&p).unwrap();
        let exact = crate::membranes::hard_membrane_covariance(&domain, 0.5, &[0.5], &[0.5]).unwrap();
        assert!((e.matrix[0][0] - exact).abs() < 3.0 * e.standard_errors[0][0], "{} vs {exact}", e.matrix[0][0]);
    }

    #[test]
    fn hard_disk_design_approximates_covariance() {
        let domain = DomainSpec::unit_disk();
        let grid = vec![vec![0.1, 0.0], vec![-0.2, 0.3]];
        let mut cfg = SimConfig::new(0, 10, 1e-3, 1.0);
        cfg.cells_per_axis = 200;
        cfg.u_ratio = 1.02;
        let c = hard_membrane_design(&domain, -1.0, &grid, &cfg).unwrap().covariance();
        let exact = crate::membranes::hard_membrane_covariance(&domain, -1.0, &grid[0], &grid[1]).unwrap();
        assert!((c[0][1] - exact).abs() < 0.02 * exact, "{} vs {exact}", c[0][1]);
    }

    #[test]
    fn cholesky_brownian() {
        let grid = grid1(&[0.5, 1.0]);
        let p = cholesky_sample(|s, t| Ok(s[0].min(t[0])), &grid, 100_000, 1, 4).unwrap();
        assert_eq!(p.jitter, Some(1e-12));
        let e = empirical_covariance(&p).unwrap();
        let exact = vec![vec![0.5, 0.5], vec![0.5, 1.0]];
        let r = validate(&e, &exact, 3.0, false).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn cholesky_zero_builder() {
        let p = cholesky_sample(|_, _| Ok(0.0), &grid1(&[0.1, 0.2]), 10, 1, 1).unwrap();
        assert_eq!(p.jitter, Some(1e-12));
        assert!(p.values.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn cholesky_bridge_ten_points() {
        let pts: Vec<f64> = (1..=10).map(|k| k as f64 / 11.0).collect();
        let grid = grid1(&pts);
        let bridge = |s: &[f64], t: &[f64]| Ok(s[0].min(t[0]) - s[0] * t[0]);
        let p = cholesky_sample(bridge, &grid, 100_000, 2, 2).unwrap();
        let e = empirical_covariance(&p).unwrap();
        let exact = gram(bridge, &grid).unwrap();
        assert!(validate(&e, &exact, 3.0, false).unwrap().pass);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let g = grid1(&[0.0, 1.0]);
        let r = cholesky_sample(|s, t| Ok(if s == t { 1.0 } else { 2.0 }), &g, 10, 0, 1);
        assert!(matches!(r, Err(Error::NotPositiveSemidefinite { .. })));
    }

    #[test]
    fn empirical_constant_and_normals() {
        let p = PathSample {
            grid: grid1(&[0.0]),
            values: vec![vec![3.0]; 10],
            backend: "test".into(),
            config_hash: String::new(),
            seed: 0,
            bias_bound: None,
            jitter: None,
        };
        assert_eq!(empirical_covariance(&p).unwrap().matrix[0][0], 9.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let values: Vec<Vec<f64>> = (0..100_000).map(|_| (0..3).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
        let p = PathSample { values, grid: grid1(&[0.0, 1.0, 2.0]), ..p };
        let e = empirical_covariance(&p).unwrap();
        for i in 0..3 {
            assert!((e.matrix[i][i] - 1.0).abs() < 3.0 * e.standard_errors[i][i]);
            assert!(e.standard_errors[i][i] > 0.0);
        }
    }

    #[test]
    fn validate_scale_fit() {
        let exact = vec![vec![1.0, 0.5], vec![0.5, 2.0]];
        let se = vec![vec![0.01; 2]; 2];
        let e = EmpiricalCovariance { matrix: exact.clone(), standard_errors: se.clone(), n: 100 };
        let r = validate(&e, &exact, 0.0, false).unwrap();
        assert!(r.pass && r.scale == 1.0);
        let doubled: Vec<Vec<f64>> = exact.iter().map(|r| r.iter().map(|v| 2.0 * v).collect()).collect();
        let e2 = EmpiricalCovariance { matrix: doubled, standard_errors: se, n: 100 };
        let r = validate(&e2, &exact, 1e-9, true).unwrap();
        assert!(r.pass && (r.scale - 2.0).abs() < 1e-15);
        assert!(!validate(&e2, &exact, 3.0, false).unwrap().pass);
    }

    #[test]
    fn cholesky_and_shot_noise_agree() {
        let grid = grid1(&[0.4, 0.8, 1.2, 1.6, 2.0]);
        let fam = MeasureFamily::TakenakaFbm { h: 0.25, d: 1 };
        let cfg = SimConfig::new(21, 100_000, 1e-7, 1e5);
        let a = empirical_covariance(&shotnoise_sample_family(&Pulse::BallIndicator, 0.5, &fam, &grid, &cfg).unwrap()).unwrap();
        let exact = takenaka_exact(&grid, 0.5);
        let idx = |t: &[f64]| grid.iter().position(|g| g[0] == t[0]).unwrap();
        let b = empirical_covariance(&cholesky_sample(|s, t| Ok(exact[idx(s)][idx(t)]), &grid, 100_000, 22, 4).unwrap()).unwrap();
        for i in 0..5 {
            for j in i..5 {
                let se = (a.standard_errors[i][j].powi(2) + b.standard_errors[i][j].powi(2)).sqrt();
                assert!((a.matrix[i][j] - b.matrix[i][j]).abs() < 3.0 * se, "({i},{j})");
            }
        }
    }

    #[test]
    fn csv_and_sidecar() {
        let p = cholesky_sample(|s, t| Ok(s[0].min(t[0])), &grid1(&[1.0]), 3, 1, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (csv, json) = p.write(dir.path(), "paths").unwrap();
        let text = fs::read_to_string(csv).unwrap();
        assert_eq!(text.lines().count(), 3);
        let first: f64 = text.lines().next().unwrap().parse().unwrap();
        assert_eq!(first, p.values[0][0]);
        let side: serde_json::Value = serde_json::from_str(&fs::read_to_string(json).unwrap()).unwrap();
        assert_eq!(side["backend"], "cholesky");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(16))]

            #[test]
            fn paths_deterministic_under_threads(seed in any::<u64>(), workers in 1usize..8) {
                let grid = grid1(&[0.3, 0.9]);
                let fam = MeasureFamily::TakenakaFbm { h: 0.25, d: 1 };
                let mut cfg = SimConfig::new(seed, 64, 1e-3, 1e2);
                let a = shotnoise_sample_family(&Pulse::BallIndicator, 0.5, &fam, &grid, &cfg).unwrap();
                cfg.worker_hint = workers;
                let b = shotnoise_sample_family(&Pulse::BallIndicator, 0.5, &fam, &grid, &cfg).unwrap();
                prop_assert_eq!(a.to_csv(), b.to_csv());
            }

            #[test]
            fn empirical_covariance_is_symmetric(seed in any::<u64>()) {
                let grid = grid1(&[0.2, 0.5, 0.9]);
                let p = cholesky_sample(|s, t| Ok(s[0].min(t[0])), &grid, 50, seed, 1).unwrap();
                let e = empirical_covariance(&p).unwrap();
                for i in 0..3 {
                    for j in 0..3 {
                        prop_assert_eq!(e.matrix[i][j], e.matrix[j][i]);
                        prop_assert!(e.standard_errors[i][j] > 0.0);
                    }
                }
            }
        }
    }
}
