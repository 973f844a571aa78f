//! Acceptance criteria as runnable checks.

use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{covariance_functional, fit_constant, kernel_kh, KernelSpec, Pulse};
use crate::measures::{dilate, riesz_constant, riesz_transform, Density, SignedMeasure};
use crate::membranes::{
    c_beta, hard_membrane_covariance, soft_membrane_covariance, tangent_field_check, ybeta_covariance, DomainSpec,
};
use crate::montecarlo::{empirical_covariance, hard_membrane_sample, shotnoise_sample_family, validate, SimConfig};
use crate::processes::{fbm_shape, preset, process_covariance, BridgeWeight, ConditioningMeasure, MeasureFamily};
use crate::quadrature::{self, Singular, Tolerance};

pub const CRITERIA: [u8; 11] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11];

/// Seed shared by the Monte Carlo criteria.
pub const SUITE_SEED: u64 = 20_240_601;

#[derive(Clone, Debug, Serialize)]
pub struct CriterionResult {
    pub id: u8,
    pub title: String,
    pub pass: bool,
    pub detail: String,
    pub seconds: f64,
    pub budget_seconds: f64,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "{} criterion {:>2} ({}): {} [{:.2}s of {:.0}s]",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.detail,
            self.seconds,
            self.budget_seconds
        )
    }
}

fn interior_grid(n: usize) -> Vec<f64> {
    (1..=n).map(|k| k as f64 / (n + 1) as f64).collect()
}

fn bridge(s: f64, t: f64) -> f64 {
    0.5 * s.min(t) * (1.0 - s.max(t))
}

fn c1_hard_bridge() -> Result<(bool, String)> {
    let d = DomainSpec::unit_interval();
    let g = interior_grid(10);
    let mut worst: f64 = 0.0;
    for &s in &g {
        for &t in &g {
            let v = hard_membrane_covariance(&d, -1.0, &[s], &[t])?;
            worst = worst.max((v - bridge(s, t)).abs() / bridge(s, t));
        }
    }
    Ok((worst < 1e-10, format!("max rel err {worst:.3e} (< 1e-10)")))
}

fn c2_ybeta() -> Result<(bool, String)> {
    let d = DomainSpec::unit_interval();
    let g = interior_grid(10);
    let mut worst: f64 = 0.0;
    for beta in [0.25, 0.5, 0.75] {
        let k = 2f64.powf(beta) / (beta * (1.0 - beta));
        for &s in &g {
            for &t in &g {
                let lhs = hard_membrane_covariance(&d, beta, &[s], &[t])? + ybeta_covariance(beta, 1.0, s, t)?;
                worst = worst.max((lhs - k * c_beta(s, t, beta)).abs());
            }
        }
    }
    Ok((worst < 1e-10, format!("max abs err {worst:.3e} (< 1e-10)")))
}

fn c3_self_similarity() -> Result<(bool, String)> {
    let zero_mass = SignedMeasure::atoms_1d(&[(0.3, 1.0), (1.0, -0.5)]).with_density(Density::UniformBox {
        lo: vec![0.0],
        hi: vec![1.0],
        value: -0.5,
    });
    let diffuse = SignedMeasure::zero(1)
        .with_density(Density::UniformBox { lo: vec![0.0], hi: vec![1.0], value: 1.0 })
        .with_density(Density::UniformBox { lo: vec![2.0], hi: vec![3.0], value: -0.5 });
    let planar = SignedMeasure::new(
        2,
        vec![
            crate::measures::Atom(vec![0.0, 0.0], 1.0),
            crate::measures::Atom(vec![1.0, 0.5], -0.7),
            crate::measures::Atom(vec![-0.4, 1.2], -0.3),
        ],
        Vec::new(),
    )?;
    let cases = [(0.25, 1, &zero_mass), (-0.4, 1, &diffuse), (0.25, 2, &planar)];
    let mut worst: f64 = 0.0;
    for (h, d, mu) in cases {
        let k = KernelSpec::power_law(h, d)?;
        let base = covariance_functional(&k, mu, mu)?;
        for c in [0.5, 2.0, 10.0] {
            let mc = dilate(mu, c)?;
            let v = covariance_functional(&k, &mc, &mc)?;
            worst = worst.max((v - c.powf(2.0 * h) * base).abs() / (c.powf(2.0 * h) * base).abs());
        }
    }
    Ok((worst < 1e-8, format!("max rel err {worst:.3e} (< 1e-8)")))
}

fn c4_composition() -> Result<(bool, String)> {
    // Density of I_{0.4} I_{0.4} δ_0 at 1 against I_{0.8} δ_0 at 1, with the
    // convolution integral by quadrature as an independent check.
    let (m1, m2) = (0.4, 0.4);
    let once = riesz_transform(&SignedMeasure::dirac(vec![0.0], 1.0), m1, 1)?;
    let twice = riesz_transform(&once, m2, 1)?;
    let lib = twice.density_at(&[1.0]);
    let f = |y: f64| y.abs().powf(m1 - 1.0) * (1.0 - y).abs().powf(m2 - 1.0);
    let sing = [Singular::new(0.0, 1.0 - m1), Singular::new(1.0, 1.0 - m2)];
    let q = quadrature::integrate(f, f64::NEG_INFINITY, f64::INFINITY, &sing, 2.0 - m1 - m2, Tolerance::rel(1e-10))?;
    let conv = riesz_constant(m1, 1) * riesz_constant(m2, 1) * q;
    let rhs = riesz_constant(m1 + m2, 1);
    let err = ((lib - rhs).abs() / rhs.abs()).max((conv - rhs).abs() / rhs.abs());
    Ok((err < 1e-5, format!("nested transform {lib:.10}, target {rhs:.10}, max rel err {err:.3e} (< 1e-5)")))
}

fn c5_representations() -> Result<(bool, String)> {
    let tk = MeasureFamily::TakenakaFbm { h: 0.25, d: 1 };
    let wb = MeasureFamily::WellBalancedFbm { h: 0.25, d: 1 };
    let grid: Vec<f64> = (1..=6).map(|i| i as f64 / 3.0).collect();
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for &s in &grid {
        for &t in &grid {
            a.push(process_covariance(&wb, &[s], &[t])?);
            b.push(process_covariance(&tk, &[s], &[t])?);
        }
    }
    let c = fit_constant(&a, &b);
    let worst = a.iter().zip(&b).map(|(x, y)| (x - c * y).abs() / (c * y).abs()).fold(0.0, f64::max);
    Ok((worst < 1e-4, format!("constant {c:.6}, max rel err {worst:.3e} (< 1e-4)")))
}

/// Grid, family and configuration of the shot-noise criterion.
pub fn shotnoise_case(worker_hint: usize) -> (Vec<Vec<f64>>, MeasureFamily, SimConfig) {
    let grid = (1..=5).map(|k| vec![0.4 * k as f64]).collect();
    let mut cfg = SimConfig::new(SUITE_SEED, 100_000, 1e-7, 1e5);
    cfg.worker_hint = worker_hint;
    (grid, MeasureFamily::TakenakaFbm { h: 0.25, d: 1 }, cfg)
}

fn c6_shotnoise(out: &Path) -> Result<(bool, String)> {
    let (grid, fam, cfg) = shotnoise_case(1);
    let p = shotnoise_sample_family(&Pulse::BallIndicator, 0.5, &fam, &grid, &cfg)?;
    p.write(out, "criterion6_paths")?;
    let emp = empirical_covariance(&p)?;
    let kh = kernel_kh(&Pulse::BallIndicator, 0.5, 1, &[1.0])?.abs();
    let exact: Vec<Vec<f64>> = grid.iter().map(|s| grid.iter().map(|t| kh * fbm_shape(0.25, s, t)).collect()).collect();
    let r = validate(&emp, &exact, 4.0, true)?;
    Ok((r.pass, format!("max |z| {:.2} (≤ 4), fitted scale {:.4}", r.max_abs_z, r.scale)))
}

fn c7_hard_mc(out: &Path) -> Result<(bool, String)> {
    let pts = interior_grid(5);
    let grid: Vec<Vec<f64>> = pts.iter().map(|x| vec![*x]).collect();
    let cfg = SimConfig::new(SUITE_SEED + 7, 200_000, 1e-5, 1.0);
    let p = hard_membrane_sample(&DomainSpec::unit_interval(), -1.0, &grid, &cfg)?;
    p.write(out, "criterion7_paths")?;
    let emp = empirical_covariance(&p)?;
    let exact: Vec<Vec<f64>> = pts.iter().map(|s| pts.iter().map(|t| bridge(*s, *t)).collect()).collect();
    let r = validate(&emp, &exact, 4.0, false)?;
    Ok((r.max_abs_z < 4.0, format!("max |z| {:.2} (< 4), no scale fit", r.max_abs_z)))
}

fn c8_tangent() -> Result<(bool, String)> {
    let d = DomainSpec::unit_interval();
    let eps: Vec<f64> = (6..=12).map(|k| 2f64.powi(-k)).collect();
    let a = tangent_field_check(&d, 0.5, &[0.5], &[1.0], &[-1.0], &eps)?;
    let b = tangent_field_check(&d, -1.0, &[0.5], &[1.0], &[-1.0], &eps)?;
    let c = tangent_field_check(&d, 0.0, &[0.5], &[1.0], &[-1.0], &eps)?;
    let ok_a = (a.h_hat - 0.25).abs() <= 0.01;
    let ok_b = (b.h_hat - 0.5).abs() <= 0.01;
    let ok_c = c.ratio_error < 0.02;
    Ok((
        ok_a && ok_b && ok_c,
        format!(
            "Ĥ(β=0.5) {:.4}, Ĥ(β=-1) {:.4}, β=0 ratio err {:.3e} (< 0.02)",
            a.h_hat, b.h_hat, c.ratio_error
        ),
    ))
}

/// Soft-membrane variances at `(1 - 2^{-k}, 0)` for `k = 1..6`.
pub fn soft_disk_variances() -> Result<Vec<f64>> {
    let disk = DomainSpec::unit_disk();
    (1..=6)
        .map(|k| {
            let x = 1.0 - 2f64.powi(-k);
            soft_membrane_covariance(&disk, 0.25, &[x, 0.0], &[x, 0.0])
        })
        .collect()
}

fn c9_soft_boundary() -> Result<(bool, String)> {
    let v = soft_disk_variances()?;
    let decreasing = v.windows(2).all(|w| w[1] < w[0]);
    let ratio = v[5] / v[0];
    let shown: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    Ok((
        decreasing && ratio < 0.01,
        format!("variances [{}], decreasing {decreasing}, final/initial {ratio:.4} (< 0.01)", shown.join(", ")),
    ))
}

fn c10_bridges() -> Result<(bool, String)> {
    let gb = MeasureFamily::GeneralizedBridge {
        base: Box::new(MeasureFamily::BrownianMotion),
        a: ConditioningMeasure::endpoint(1.0),
        f: BridgeWeight::Linear,
    };
    let mut pin: f64 = process_covariance(&gb, &[1.0], &[1.0])?.abs();
    for h in [0.25, 0.75] {
        pin = pin.max(process_covariance(&MeasureFamily::FractionalBridge { h }, &[1.0], &[1.0])?.abs());
    }
    let za = preset("zero-area-bb")?;
    let mut area: f64 = 0.0;
    for i in 0..20 {
        let t = (i as f64 + 0.5) / 20.0;
        let f = |s: f64| process_covariance(&za, &[s], &[t]).unwrap_or(f64::NAN);
        let v = quadrature::integrate(f, 0.0, 1.0, &[Singular::breakpoint(t)], f64::INFINITY, Tolerance::rel(1e-10).with_abs(1e-12))?;
        area = area.max(v.abs());
    }
    Ok((pin < 1e-10 && area < 1e-6, format!("max Var(X_1) {pin:.3e} (< 1e-10), max |∫Cov ds| {area:.3e} (< 1e-6)")))
}

fn c11_determinism(out: &Path) -> Result<(bool, String)> {
    let mut bytes = Vec::new();
    for workers in [1, 8] {
        let (grid, fam, cfg) = shotnoise_case(workers);
        let p = shotnoise_sample_family(&Pulse::BallIndicator, 0.5, &fam, &grid, &cfg)?;
        let (csv, _) = p.write(out, &format!("criterion11_workers{workers}"))?;
        bytes.push(fs::read(csv)?);
    }
    let same = bytes[0] == bytes[1];
    Ok((same, format!("worker_hint 1 vs 8 path files identical: {same}")))
}

fn title(id: u8) -> &'static str {
    match id {
        1 => "hard bridge closed form",
        2 => "Y_beta complement",
        3 => "kernel self-similarity",
        4 => "Riesz composition",
        5 => "Takenaka vs well-balanced",
        6 => "shot noise Monte Carlo",
        7 => "hard membrane Monte Carlo",
        8 => "tangent exponents",
        9 => "soft membrane boundary decay",
        10 => "bridge pinning",
        11 => "determinism",
        _ => "unknown",
    }
}

fn budget(id: u8) -> f64 {
    match id {
        1 | 2 => 1.0,
        3 | 4 => 10.0,
        5 => 30.0,
        6 | 7 | 11 => 300.0,
        8 | 10 => 60.0,
        9 => 120.0,
        _ => 0.0,
    }
}

/// Runs one criterion, writing any path files under `out`. Errors become failures.
pub fn run_criterion(id: u8, out: &Path) -> Result<CriterionResult> {
    let start = Instant::now();
    let outcome = match id {
        1 => c1_hard_bridge(),
        2 => c2_ybeta(),
        3 => c3_self_similarity(),
        4 => c4_composition(),
        5 => c5_representations(),
        6 => c6_shotnoise(out),
        7 => c7_hard_mc(out),
        8 => c8_tangent(),
        9 => c9_soft_boundary(),
        10 => c10_bridges(),
        11 => c11_determinism(out),
        _ => return Err(Error::InvalidConfig(format!("no criterion {id}"))),
    };
    let seconds = start.elapsed().as_secs_f64();
    let (ok, detail) = match outcome {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    let budget_seconds = budget(id);
    let in_time = seconds <= budget_seconds;
    let detail = if in_time { detail } else { format!("{detail}; over time budget") };
    Ok(CriterionResult { id, title: title(id).into(), pass: ok && in_time, detail, seconds, budget_seconds })
}

pub fn run_suite(ids: &[u8], out: &Path) -> Result<Vec<CriterionResult>> {
    ids.iter().map(|&id| run_criterion(id, out)).collect()
}
