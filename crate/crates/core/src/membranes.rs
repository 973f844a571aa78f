//! Gaussian membranes on bounded domains.
//!
//! Soft membranes evaluate the field on `δ_t - ω_t` with `ω_t` the
//! harmonic measure. Hard membranes keep only the random balls that fit
//! inside the domain.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};
use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{covariance_functional, KernelSpec};
use crate::measures::{dist, unit_sphere_area, Atom, SignedMeasure};
use crate::quadrature::{self, gauss_legendre, Singular, Tolerance};

/// Relative tolerance of the numerical hard-membrane integral.
pub const HARD_REL_TOL: f64 = 1e-7;
/// Default walk-on-spheres shell as a fraction of the diameter.
pub const WOS_SHELL_FRACTION: f64 = 1e-6;
/// Default walk-on-spheres sample count for domains without a closed form.
pub const WOS_DEFAULT_SAMPLES: usize = 20_000;
/// Tolerance on the limit-shape check of the tangent field.
pub const TANGENT_SHAPE_TOL: f64 = 0.02;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainSpec {
    Interval { lo: f64, hi: f64 },
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

impl DomainSpec {
    pub fn unit_interval() -> Self {
        DomainSpec::Interval { lo: 0.0, hi: 1.0 }
    }

    pub fn unit_disk() -> Self {
        DomainSpec::Ball { center: vec![0.0, 0.0], radius: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            DomainSpec::Interval { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
            DomainSpec::Ball { center, radius } => {
                !center.is_empty() && center.iter().all(|c| c.is_finite()) && *radius > 0.0 && radius.is_finite()
            }
            DomainSpec::Box { lo, hi } => {
                !lo.is_empty() && lo.len() == hi.len() && lo.iter().zip(hi).all(|(a, b)| a.is_finite() && b.is_finite() && a < b)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::ParameterOutOfRange(format!("invalid domain {self:?}")))
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DomainSpec::Interval { .. } => 1,
            DomainSpec::Ball { center, .. } => center.len(),
            DomainSpec::Box { lo, .. } => lo.len(),
        }
    }

    /// Signed distance to the boundary, positive inside.
    fn signed_distance(&self, x: &[f64]) -> f64 {
        match self {
            DomainSpec::Interval { lo, hi } => (x[0] - lo).min(hi - x[0]),
            DomainSpec::Ball { center, radius } => radius - dist(x, center),
            DomainSpec::Box { lo, hi } => {
                x.iter().zip(lo.iter().zip(hi)).map(|(v, (a, b))| (v - a).min(b - v)).fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// Distance to `∂D` for points of the closure, 0 outside.
    pub fn boundary_distance(&self, x: &[f64]) -> f64 {
        self.signed_distance(x).max(0.0)
    }

    /// Largest `u` with `B(x, u) ⊆ D`; for these convex domains this is
    /// the boundary distance.
    pub fn inradius_at(&self, x: &[f64]) -> f64 {
        self.boundary_distance(x)
    }

    pub fn is_interior(&self, x: &[f64]) -> bool {
        self.signed_distance(x) > 0.0
    }

    pub fn in_closure(&self, x: &[f64]) -> bool {
        self.signed_distance(x) >= 0.0
    }

    pub fn diameter(&self) -> f64 {
        match self {
            DomainSpec::Interval { lo, hi } => hi - lo,
            DomainSpec::Ball { radius, .. } => 2.0 * radius,
            DomainSpec::Box { lo, hi } => dist(lo, hi),
        }
    }

    /// `sup_x inradius_at(x)`.
    pub fn sup_inradius(&self) -> f64 {
        match self {
            DomainSpec::Interval { lo, hi } => (hi - lo) / 2.0,
            DomainSpec::Ball { radius, .. } => *radius,
            DomainSpec::Box { lo, hi } => lo.iter().zip(hi).map(|(a, b)| (b - a) / 2.0).fold(f64::INFINITY, f64::min),
        }
    }

    pub fn nearest_boundary_point(&self, x: &[f64]) -> Vec<f64> {
        match self {
            DomainSpec::Interval { lo, hi } => vec![if x[0] - lo <= hi - x[0] { *lo } else { *hi }],
            DomainSpec::Ball { center, radius } => {
                let r = dist(x, center);
                if r == 0.0 {
                    let mut p = center.clone();
                    p[0] += radius;
                    return p;
                }
                x.iter().zip(center).map(|(v, c)| c + radius * (v - c) / r).collect()
            }
            DomainSpec::Box { lo, hi } => {
                let mut best = (f64::INFINITY, 0, 0.0);
                for i in 0..x.len() {
                    for face in [lo[i], hi[i]] {
                        let d = (x[i] - face).abs();
                        if d < best.0 {
                            best = (d, i, face);
                        }
                    }
                }
                let mut p = x.to_vec();
                p[best.1] = best.2;
                p
            }
        }
    }

    /// Parameter interval `[r0, r1]` (with `r0 ≥ 0`) of the ray `x + r e`
    /// inside the closure.
    fn ray_extent(&self, x: &[f64], e: &[f64]) -> f64 {
        match self {
            DomainSpec::Interval { lo, hi } => {
                if e[0] > 0.0 {
                    (hi - x[0]) / e[0]
                } else {
                    (lo - x[0]) / e[0]
                }
            }
            DomainSpec::Ball { center, radius } => {
                let w: Vec<f64> = x.iter().zip(center).map(|(a, b)| a - b).collect();
                let b: f64 = e.iter().zip(&w).map(|(a, b)| a * b).sum();
                let c: f64 = w.iter().map(|v| v * v).sum::<f64>() - radius * radius;
                -b + (b * b - c).max(0.0).sqrt()
            }
            DomainSpec::Box { lo, hi } => {
                let mut r = f64::INFINITY;
                for i in 0..x.len() {
                    if e[i] > 0.0 {
                        r = r.min((hi[i] - x[i]) / e[i]);
                    } else if e[i] < 0.0 {
                        r = r.min((lo[i] - x[i]) / e[i]);
                    }
                }
                r
            }
        }
    }
}

fn check_point(domain: &DomainSpec, x: &[f64]) -> Result<()> {
    if x.len() != domain.dim() {
        return Err(Error::DimensionMismatch { expected: domain.dim(), found: x.len() });
    }
    Ok(())
}

/// Discretized or sampled harmonic measure `ω_t`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HarmonicMeasureRep {
    /// `w0 δ_lo + w1 δ_hi`.
    TwoAtoms { lo: f64, hi: f64, w0: f64, w1: f64 },
    /// Poisson kernel of a ball sampled on sphere nodes, weights normalized to 1.
    PoissonKernelBall { t: Vec<f64>, center: Vec<f64>, radius: f64, nodes: Vec<Vec<f64>>, weights: Vec<f64> },
    /// Walk-on-spheres exit points with multiplicities.
    Empirical { points: Vec<Vec<f64>>, counts: Vec<u64> },
}

impl HarmonicMeasureRep {
    /// `(point, weight)` pairs.
    pub fn atoms(&self) -> Vec<(Vec<f64>, f64)> {
        match self {
            HarmonicMeasureRep::TwoAtoms { lo, hi, w0, w1 } => vec![(vec![*lo], *w0), (vec![*hi], *w1)],
            HarmonicMeasureRep::PoissonKernelBall { nodes, weights, .. } => {
                nodes.iter().cloned().zip(weights.iter().copied()).collect()
            }
            HarmonicMeasureRep::Empirical { points, counts } => {
                let n: u64 = counts.iter().sum();
                points.iter().cloned().zip(counts.iter().map(|&c| c as f64 / n as f64)).collect()
            }
        }
    }

    pub fn total_mass(&self) -> f64 {
        match self {
            HarmonicMeasureRep::Empirical { .. } => 1.0,
            _ => self.atoms().iter().map(|a| a.1).sum(),
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        let atoms = self.atoms();
        let d = atoms.first().map_or(0, |a| a.0.len());
        let mut m = vec![0.0; d];
        for (p, w) in &atoms {
            for i in 0..d {
                m[i] += w * p[i];
            }
        }
        m
    }

    pub fn to_measure(&self) -> SignedMeasure {
        let atoms = self.atoms();
        let d = atoms.first().map_or(1, |a| a.0.len());
        SignedMeasure { dim: d, atoms: atoms.into_iter().map(|(p, w)| Atom(p, w)).collect(), densities: Vec::new() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum HarmonicMethod {
    ClosedForm,
    WalkOnSpheres {
        n_samples: usize,
        #[serde(default)]
        eps_shell: Option<f64>,
        #[serde(default)]
        seed: u64,
    },
}

/// Node count making the periodic trapezoid rule resolve a Poisson kernel
/// (or a branch point) at relative distance `1 - ρ` from the sphere.
fn sphere_resolution(rho: f64, floor: usize) -> usize {
    let want = (64.0 / (1.0 - rho).max(1e-12)).ceil() as usize;
    floor.max(want.next_power_of_two())
}

fn ball_frame(t: &[f64], center: &[f64], radius: f64) -> (Vec<f64>, f64) {
    let tp: Vec<f64> = t.iter().zip(center).map(|(a, c)| (a - c) / radius).collect();
    let rho = tp.iter().map(|v| v * v).sum::<f64>().sqrt();
    (tp, rho)
}

/// Poisson kernel of the unit ball against normalized surface measure.
fn poisson_unit(tp: &[f64], y: &[f64]) -> f64 {
    let d = tp.len();
    let r2: f64 = tp.iter().map(|v| v * v).sum();
    (1.0 - r2) / (unit_sphere_area(d) * dist(tp, y).powi(d as i32))
}

/// Sphere nodes for the Poisson kernel of `t` in `B(center, radius)`.
/// Circles use `n` equal angles; in three dimensions the pole is aligned
/// with `t` and Gauss–Legendre nodes in `cos θ` are crossed with `2n`
/// equal azimuths.
fn poisson_nodes(t: &[f64], center: &[f64], radius: f64, n: usize) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let d = t.len();
    let (tp, rho) = ball_frame(t, center, radius);
    let (mut nodes, mut weights) = (Vec::new(), Vec::new());
    match d {
        2 => {
            for k in 0..n {
                let th = TAU * k as f64 / n as f64;
                let y = [th.cos(), th.sin()];
                nodes.push(vec![center[0] + radius * y[0], center[1] + radius * y[1]]);
                weights.push(poisson_unit(&tp, &y) * TAU / n as f64);
            }
        }
        3 => {
            let pole: Vec<f64> = if rho > 0.0 { tp.iter().map(|v| v / rho).collect() } else { vec![0.0, 0.0, 1.0] };
            let helper = if pole[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
            let dot: f64 = helper.iter().zip(&pole).map(|(a, b)| a * b).sum();
            let mut u: Vec<f64> = helper.iter().zip(&pole).map(|(a, b)| a - dot * b).collect();
            let un = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            u.iter_mut().for_each(|v| *v /= un);
            let v = [
                pole[1] * u[2] - pole[2] * u[1],
                pole[2] * u[0] - pole[0] * u[2],
                pole[0] * u[1] - pole[1] * u[0],
            ];
            let (xs, ws) = gauss_legendre(n);
            let nphi = 2 * n;
            for (c, wc) in xs.iter().zip(&ws) {
                let s = (1.0 - c * c).max(0.0).sqrt();
                for j in 0..nphi {
                    let ph = TAU * j as f64 / nphi as f64;
                    let y: Vec<f64> = (0..3).map(|i| c * pole[i] + s * (ph.cos() * u[i] + ph.sin() * v[i])).collect();
                    nodes.push(y.iter().zip(center).map(|(a, b)| b + radius * a).collect());
                    weights.push(poisson_unit(&tp, &y) * wc * TAU / nphi as f64);
                }
            }
        }
        _ => return Err(Error::DimensionUnsupported(format!("Poisson kernel nodes in d={d}"))),
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok((nodes, weights))
}

fn default_ball_nodes(d: usize, rho: f64) -> usize {
    match d {
        2 => sphere_resolution(rho, 256),
        _ => sphere_resolution(rho, 32).min(512) / 2,
    }
}

/// Harmonic measure of `t` in `domain`.
pub fn harmonic_measure(domain: &DomainSpec, t: &[f64], method: &HarmonicMethod) -> Result<HarmonicMeasureRep> {
    domain.validate()?;
    check_point(domain, t)?;
    if !domain.is_interior(t) {
        return Err(Error::BoundaryPoint(t.to_vec()));
    }
    match method {
        HarmonicMethod::ClosedForm => match domain {
            DomainSpec::Interval { lo, hi } => {
                let u = (t[0] - lo) / (hi - lo);
                Ok(HarmonicMeasureRep::TwoAtoms { lo: *lo, hi: *hi, w0: 1.0 - u, w1: u })
            }
            DomainSpec::Ball { center, radius } if center.len() == 1 => {
                let (lo, hi) = (center[0] - radius, center[0] + radius);
                let u = (t[0] - lo) / (hi - lo);
                Ok(HarmonicMeasureRep::TwoAtoms { lo, hi, w0: 1.0 - u, w1: u })
            }
            DomainSpec::Ball { center, radius } => {
                let (_, rho) = ball_frame(t, center, *radius);
                let (nodes, weights) = poisson_nodes(t, center, *radius, default_ball_nodes(t.len(), rho))?;
                Ok(HarmonicMeasureRep::PoissonKernelBall { t: t.to_vec(), center: center.clone(), radius: *radius, nodes, weights })
            }
            DomainSpec::Box { .. } => Err(Error::MethodUnsupported("closed-form harmonic measure of a box".into())),
        },
        HarmonicMethod::WalkOnSpheres { n_samples, eps_shell, seed } => {
            let eps = eps_shell.unwrap_or(WOS_SHELL_FRACTION * domain.diameter());
            walk_on_spheres(domain, t, *n_samples, eps, *seed)
        }
    }
}

/// Exit points of Brownian motion from `t`, one ChaCha stream per sample.
pub fn walk_on_spheres(domain: &DomainSpec, t: &[f64], n_samples: usize, eps_shell: f64, seed: u64) -> Result<HarmonicMeasureRep> {
    if n_samples == 0 || !(eps_shell > 0.0) {
        return Err(Error::ParameterOutOfRange("walk on spheres needs samples and a positive shell".into()));
    }
    let d = t.len();
    let exits: Vec<Vec<f64>> = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i);
            let mut x = t.to_vec();
            for _ in 0..100_000 {
                let r = domain.boundary_distance(&x);
                if r <= eps_shell {
                    break;
                }
                let g: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
                let n = g.iter().map(|v: &f64| v * v).sum::<f64>().sqrt();
                for k in 0..d {
                    x[k] += r * g[k] / n;
                }
            }
            domain.nearest_boundary_point(&x)
        })
        .collect();
    let mut tally: BTreeMap<Vec<u64>, (Vec<f64>, u64)> = BTreeMap::new();
    for p in exits {
        let key: Vec<u64> = p.iter().map(|v| v.to_bits()).collect();
        tally.entry(key).or_insert((p, 0)).1 += 1;
    }
    let (points, counts) = tally.into_values().unzip();
    Ok(HarmonicMeasureRep::Empirical { points, counts })
}

/// `φ₁ = ½ ∫_{ℝ^d} (|z|^{-δ} - |z - e|^{-δ})² dz` with `δ = (d-1)/2`.
///
/// By the symmetry `z ↦ e - z` this is the integral over the half-space
/// `z·e < 1/2`, taken in polar coordinates about the origin where the
/// `r^{d-1}` Jacobian cancels the `|z|^{-2δ}` singularity.
pub fn soft_brownian_constant(d: usize) -> Result<f64> {
    static CACHE: OnceLock<[f64; 2]> = OnceLock::new();
    if !(2..=3).contains(&d) {
        return Err(Error::DimensionUnsupported(format!("H=1/2 soft membrane in d={d}")));
    }
    let vals = CACHE.get_or_init(|| {
        let compute = |d: usize| -> f64 {
            let delta = (d as f64 - 1.0) / 2.0;
            let ang_weight = unit_sphere_area(d - 1);
            let radial = |th: f64| -> f64 {
                let c = th.cos();
                let f = |r: f64| -> f64 {
                    if r == 0.0 {
                        return if d == 1 { 0.0 } else { 1.0 };
                    }
                    // |z|^{-δ} - |z-e|^{-δ} = -r^{-δ} expm1(-δ ln(|z-e|/r)) without cancellation.
                    let l = 0.5 * ((1.0 - 2.0 * r * c) / (r * r)).ln_1p();
                    let diff = -r.powf(-delta) * (-delta * l).exp_m1();
                    r.powi(d as i32 - 1) * diff * diff
                };
                let (hi, decay) = if c > 0.0 { (0.5 / c, f64::INFINITY) } else { (f64::INFINITY, 2.0) };
                let sing = [Singular::breakpoint(1.0_f64.min(hi))];
                quadrature::integrate(f, 0.0, hi, &sing, decay, Tolerance::rel(1e-12)).unwrap_or(f64::NAN)
            };
            let outer = |th: f64| radial(th) * th.sin().powi(d as i32 - 2);
            let v = quadrature::integrate(outer, 0.0, PI, &[Singular::breakpoint(PI / 2.0)], f64::INFINITY, Tolerance::rel(1e-10))
                .unwrap_or(f64::NAN);
            ang_weight * v
        };
        [compute(2), compute(3)]
    });
    Ok(vals[d - 2])
}

/// `φ(y) = ∫ |y - y'|^p ω_t(dy')` on a circle, resolving the cusp at `y`.
fn circle_potential(p: f64, y: &[f64], t: &[f64], center: &[f64], radius: f64) -> f64 {
    let (tp, rho) = ball_frame(t, center, radius);
    let th_t = tp[1].atan2(tp[0]);
    let th_y = (y[1] - center[1]).atan2(y[0] - center[0]);
    let dens = |th: f64| {
        let yy = [center[0] + radius * th.cos(), center[1] + radius * th.sin()];
        let k = (1.0 - rho * rho) / (TAU * (1.0 - 2.0 * rho * (th - th_t).cos() + rho * rho));
        k * dist(y, &yy).powf(p)
    };
    let peak = th_y + (th_t - th_y).rem_euclid(TAU);
    let mut sing = vec![Singular::new(th_y, 0.0), Singular::new(th_y + TAU, 0.0)];
    if rho > 0.0 && peak > th_y && peak < th_y + TAU {
        sing.push(Singular::breakpoint(peak));
    }
    quadrature::integrate(dens, th_y, th_y + TAU, &sing, f64::INFINITY, Tolerance::rel(1e-12)).unwrap_or(f64::NAN)
}

/// `∫∫ |y - y'|^p (δ_s - ω_s)(dy) (δ_t - ω_t)(dy')`.
fn soft_functional(domain: &DomainSpec, p: f64, s: &[f64], t: &[f64], method: &HarmonicMethod) -> Result<f64> {
    let d = domain.dim();
    match (domain, method) {
        (DomainSpec::Ball { center, radius }, HarmonicMethod::ClosedForm) if d == 2 => {
            let (_, rs) = ball_frame(s, center, *radius);
            let (_, rt) = ball_frame(t, center, *radius);
            let n = sphere_resolution(rs.max(rt), 256);
            let (ns, ws) = poisson_nodes(s, center, *radius, n)?;
            let (nt, wt) = poisson_nodes(t, center, *radius, n)?;
            let k = |a: &[f64], b: &[f64]| dist(a, b).powf(p);
            let pot_t_at_s: f64 = nt.iter().zip(&wt).map(|(y, w)| w * k(s, y)).sum();
            let pot_s_at_t: f64 = ns.iter().zip(&ws).map(|(y, w)| w * k(t, y)).sum();
            let cross: f64 = ns
                .par_iter()
                .zip(ws.par_iter())
                .map(|(y, w)| w * circle_potential(p, y, t, center, *radius))
                .sum();
            Ok(k(s, t) - pot_t_at_s - pot_s_at_t + cross)
        }
        _ => {
            let mu = |x: &[f64]| -> Result<SignedMeasure> {
                let omega = harmonic_measure(domain, x, method)?.to_measure();
                Ok(SignedMeasure::dirac(x.to_vec(), 1.0).minus(&omega))
            };
            let k = KernelSpec::power_law(p / 2.0, d)?;
            covariance_functional(&k, &mu(s)?, &mu(t)?)
        }
    }
}

fn default_method(domain: &DomainSpec) -> HarmonicMethod {
    match domain {
        DomainSpec::Box { .. } => HarmonicMethod::WalkOnSpheres { n_samples: WOS_DEFAULT_SAMPLES, eps_shell: None, seed: 0 },
        _ => HarmonicMethod::ClosedForm,
    }
}

/// Soft-membrane covariance (closed-form harmonic measure where available).
pub fn soft_membrane_covariance(domain: &DomainSpec, h: f64, s: &[f64], t: &[f64]) -> Result<f64> {
    soft_membrane_covariance_with(domain, h, s, t, &default_method(domain))
}

/// Soft-membrane covariance, up to a positive constant:
/// `-C_{2H}(δ_s - ω_s, δ_t - ω_t)` for `H < 1/2` and
/// `-φ₁ C_1(δ_s - ω_s, δ_t - ω_t)` for `H = 1/2`.
pub fn soft_membrane_covariance_with(
    domain: &DomainSpec,
    h: f64,
    s: &[f64],
    t: &[f64],
    method: &HarmonicMethod,
) -> Result<f64> {
    domain.validate()?;
    check_point(domain, s)?;
    check_point(domain, t)?;
    if !(h > 0.0 && h <= 0.5) {
        return Err(Error::ParameterOutOfRange(format!("soft membranes need 0 < H ≤ 1/2, got {h}")));
    }
    for x in [s, t] {
        if !domain.in_closure(x) {
            return Err(Error::BoundaryPoint(x.to_vec()));
        }
    }
    let scale = if h == 0.5 { soft_brownian_constant(domain.dim())? } else { 1.0 };
    // On the boundary ω_t = δ_t and the indexing measure vanishes.
    if !domain.is_interior(s) || !domain.is_interior(t) {
        return Ok(0.0);
    }
    Ok(-scale * soft_functional(domain, 2.0 * h, s, t, method)?)
}

/// `f_β(x) = 2^β x^{1-β} / (β(1-β))`, and `-x ln x` at `β = 0`.
pub fn f_beta(x: f64, beta: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if beta == 0.0 {
        -x * x.ln()
    } else {
        2f64.powf(beta) * x.powf(1.0 - beta) / (beta * (1.0 - beta))
    }
}

/// `∫_a^b u^{-β-1} du`.
fn u_integral(a: f64, b: f64, beta: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    if beta == 0.0 {
        (b / a).ln()
    } else {
        (a.powf(-beta) - b.powf(-beta)) / beta
    }
}

fn check_hard(domain: &DomainSpec, beta: f64, s: &[f64], t: &[f64]) -> Result<bool> {
    domain.validate()?;
    let d = domain.dim();
    if !(beta < d as f64) || !beta.is_finite() {
        return Err(Error::ParameterOutOfRange(format!("β={beta} must be below d={d}")));
    }
    check_point(domain, s)?;
    check_point(domain, t)?;
    for x in [s, t] {
        if !domain.in_closure(x) {
            return Err(Error::ParameterOutOfRange(format!("point {x:?} outside the domain")));
        }
    }
    Ok(domain.is_interior(s) && domain.is_interior(t))
}

/// Hard-membrane covariance `∫∫ 1{s, t ∈ B(x,u) ⊆ D} u^{-β-1} du dx`.
pub fn hard_membrane_covariance(domain: &DomainSpec, beta: f64, s: &[f64], t: &[f64]) -> Result<f64> {
    if !check_hard(domain, beta, s, t)? {
        return Ok(0.0);
    }
    match domain {
        DomainSpec::Interval { lo, hi } => {
            let (a, b) = (s[0] - lo, t[0] - lo);
            let big_t = hi - lo;
            Ok(f_beta(a.max(b), beta) + f_beta(big_t - a.min(b), beta) - f_beta((a - b).abs(), beta) - f_beta(big_t, beta))
        }
        _ => hard_membrane_numeric(domain, beta, s, t, Tolerance::rel(HARD_REL_TOL)),
    }
}

/// Numerical hard-membrane integral for `d ≤ 2`.
///
/// The `u`-integral is analytic. The admissible centres
/// `{x : max(|x-s|, |x-t|) < inradius(x)}` form a convex set, so along each
/// ray from `s` they occupy one interval, located by a golden-section
/// search for the minimum of the convex gap followed by bisection.
pub fn hard_membrane_numeric(domain: &DomainSpec, beta: f64, s: &[f64], t: &[f64], tol: Tolerance) -> Result<f64> {
    if !check_hard(domain, beta, s, t)? {
        return Ok(0.0);
    }
    let d = domain.dim();
    if d > 2 {
        return Err(Error::DimensionUnsupported(format!("hard membrane integral in d={d}")));
    }
    let coincide = s == t;
    let inner_tol = Tolerance::rel(tol.rel * 1e-2).with_abs(0.0);
    let ray = |e: &[f64]| -> f64 {
        let point = |r: f64| -> Vec<f64> { s.iter().zip(e).map(|(a, b)| a + r * b).collect() };
        let gap = |r: f64| -> f64 {
            let x = point(r);
            dist(&x, s).max(dist(&x, t)) - domain.inradius_at(&x)
        };
        let r_exit = domain.ray_extent(s, e);
        // Golden-section search for the minimum of the convex gap.
        let (mut a, mut b) = (0.0, r_exit);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let (mut c, mut dd) = (b - g * (b - a), a + g * (b - a));
        let (mut fc, mut fd) = (gap(c), gap(dd));
        for _ in 0..100 {
            if fc < fd {
                b = dd;
                dd = c;
                fd = fc;
                c = b - g * (b - a);
                fc = gap(c);
            } else {
                a = c;
                c = dd;
                fc = fd;
                dd = a + g * (b - a);
                fd = gap(dd);
            }
        }
        let r_min = 0.5 * (a + b);
        if gap(r_min) >= 0.0 && gap(0.0) >= 0.0 {
            return 0.0;
        }
        let r_min = if gap(0.0) < gap(r_min) { 0.0 } else { r_min };
        let bisect = |mut inside: f64, mut outside: f64| {
            for _ in 0..200 {
                let m = 0.5 * (inside + outside);
                if m == inside || m == outside {
                    break;
                }
                if gap(m) < 0.0 {
                    inside = m;
                } else {
                    outside = m;
                }
            }
            0.5 * (inside + outside)
        };
        let r0 = if gap(0.0) < 0.0 { 0.0 } else { bisect(r_min, 0.0) };
        let r1 = bisect(r_min, r_exit);
        let jac = |r: f64| if d == 1 { 1.0 } else { r };
        let f = |r: f64| {
            let x = point(r);
            let a = dist(&x, s).max(dist(&x, t));
            let b = domain.inradius_at(&x);
            if a == 0.0 {
                return 0.0;
            }
            jac(r) * u_integral(a, b, beta)
        };
        let mut sing = Vec::new();
        if coincide && r0 == 0.0 {
            sing.push(Singular::new(0.0, (beta - (d as f64 - 1.0)).max(0.0)));
        }
        // Kink where the farther of s and t switches.
        let w: Vec<f64> = t.iter().zip(s).map(|(a, b)| a - b).collect();
        let ew: f64 = e.iter().zip(&w).map(|(a, b)| a * b).sum();
        if ew > 0.0 {
            let rk = w.iter().map(|v| v * v).sum::<f64>() / (2.0 * ew);
            if rk > r0 && rk < r1 {
                sing.push(Singular::breakpoint(rk));
            }
        }
        quadrature::integrate(f, r0, r1, &sing, f64::INFINITY, inner_tol).unwrap_or(f64::NAN)
    };
    let v = if d == 1 {
        ray(&[1.0]) + ray(&[-1.0])
    } else {
        let outer = |th: f64| ray(&[th.cos(), th.sin()]);
        quadrature::integrate(outer, 0.0, TAU, &[], f64::INFINITY, tol)?
    };
    if !v.is_finite() {
        return Err(Error::QuadratureFailure { estimate: v, error: f64::NAN, requested: tol.rel });
    }
    Ok(v)
}

/// Tangent scaling `τ(ε)` and index `H` for the hard membrane.
pub fn tangent_scaling(beta: f64, d: usize, eps: f64) -> Result<(f64, f64)> {
    let df = d as f64;
    if !(beta < df) || !(eps > 0.0 && eps < 1.0) {
        return Err(Error::ParameterOutOfRange(format!("β={beta}, d={d}, ε={eps}")));
    }
    Ok(if beta > df - 1.0 {
        (eps.powf((beta - df) / 2.0), (df - beta) / 2.0)
    } else if beta == df - 1.0 {
        ((-eps * eps.ln()).powf(-0.5), 0.5)
    } else {
        (eps.powf(-0.5), 0.5)
    })
}

/// Per-ε record of the tangent check.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TangentDiagnostic {
    pub eps: f64,
    pub tau: f64,
    /// Increment variances along `s` and `t`, and their covariance.
    pub var_s: f64,
    pub var_t: f64,
    pub cov_st: f64,
    /// `var_s(ε) / var_s(ε_prev)` against the ratio predicted by `τ(ε)^{-2}`.
    pub ratio: Option<f64>,
    pub predicted_ratio: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TangentReport {
    pub beta: f64,
    pub z: Vec<f64>,
    /// Slope of `log var_s` against `log ε`, halved.
    pub h_hat: f64,
    /// Index predicted by the scaling regime.
    pub h_theory: f64,
    /// Fitted constant `c` of `c(|s|^{2H} + |t|^{2H} - |s-t|^{2H})`.
    pub c: f64,
    /// Largest relative deviation from that shape at the smallest ε.
    pub shape_error: f64,
    pub shape_ok: bool,
    /// Relative error of the last variance ratio against the prediction.
    pub ratio_error: f64,
    pub diagnostics: Vec<TangentDiagnostic>,
}

/// Increments `X(z + ε s) - X(z)` of the hard membrane, rescaled by `τ(ε)`.
pub fn tangent_field_check(
    domain: &DomainSpec,
    beta: f64,
    z: &[f64],
    s: &[f64],
    t: &[f64],
    eps_seq: &[f64],
) -> Result<TangentReport> {
    domain.validate()?;
    check_point(domain, z)?;
    check_point(domain, s)?;
    check_point(domain, t)?;
    let d = domain.dim();
    if !domain.is_interior(z) {
        return Err(Error::BoundaryPoint(z.to_vec()));
    }
    let norm = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let reach = norm(s).max(norm(t));
    let limit = domain.boundary_distance(z) / (2.0 * reach);
    if eps_seq.len() < 2 || reach == 0.0 {
        return Err(Error::ScaleOutOfDomain("need two or more scales and nonzero directions".into()));
    }
    for w in eps_seq.windows(2) {
        if !(w[1] < w[0]) {
            return Err(Error::ScaleOutOfDomain("scales must decrease".into()));
        }
    }
    if !(eps_seq[0] < limit) || !(eps_seq[eps_seq.len() - 1] > 0.0) {
        return Err(Error::ScaleOutOfDomain(format!("scales must lie in (0, {limit})")));
    }
    let cov = |a: &[f64], b: &[f64]| hard_membrane_covariance(domain, beta, a, b);
    let shift = |e: f64, dir: &[f64]| -> Vec<f64> { z.iter().zip(dir).map(|(a, b)| a + e * b).collect() };
    let czz = cov(z, z)?;
    let mut diags: Vec<TangentDiagnostic> = Vec::new();
    for &e in eps_seq {
        let (zs, zt) = (shift(e, s), shift(e, t));
        let (czs, czt) = (cov(&zs, z)?, cov(&zt, z)?);
        let var_s = cov(&zs, &zs)? - 2.0 * czs + czz;
        let var_t = cov(&zt, &zt)? - 2.0 * czt + czz;
        let cov_st = cov(&zs, &zt)? - czs - czt + czz;
        let (tau, _) = tangent_scaling(beta, d, e)?;
        let (ratio, predicted_ratio) = match diags.last() {
            Some(prev) => (Some(var_s / prev.var_s), Some((prev.tau / tau).powi(2))),
            None => (None, None),
        };
        diags.push(TangentDiagnostic { eps: e, tau, var_s, var_t, cov_st, ratio, predicted_ratio });
    }
    // Ordinary least squares of log var_s on log ε.
    let xs: Vec<f64> = diags.iter().map(|g| g.eps.ln()).collect();
    let ys: Vec<f64> = diags.iter().map(|g| g.var_s.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let h_hat = sxy / sxx / 2.0;

    let last = diags.last().expect("at least two scales");
    let (_, h_theory) = tangent_scaling(beta, d, last.eps)?;
    let tau2 = last.tau * last.tau;
    let shape = |a: &[f64], b: &[f64]| {
        let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        norm(a).powf(2.0 * h_theory) + norm(b).powf(2.0 * h_theory) - norm(&diff).powf(2.0 * h_theory)
    };
    let observed = [tau2 * last.var_s, tau2 * last.var_t, tau2 * last.cov_st];
    let reference = [shape(s, s), shape(t, t), shape(s, t)];
    let c = crate::kernels::fit_constant(&observed, &reference);
    let shape_error = observed
        .iter()
        .zip(&reference)
        .map(|(o, r)| (o - c * r).abs() / (c * r).abs().max(c.abs() * reference[0].abs() * 1e-12))
        .fold(0.0, f64::max);
    let ratio_error = match (last.ratio, last.predicted_ratio) {
        (Some(r), Some(p)) => (r - p).abs() / p,
        _ => f64::NAN,
    };
    Ok(TangentReport {
        beta,
        z: z.to_vec(),
        h_hat,
        h_theory,
        c,
        shape_error,
        shape_ok: shape_error <= TANGENT_SHAPE_TOL,
        ratio_error,
        diagnostics: diags,
    })
}

/// `C_β(s, t) = s^{1-β} + t^{1-β} - |s - t|^{1-β}`.
pub fn c_beta(s: f64, t: f64, beta: f64) -> f64 {
    let p = 1.0 - beta;
    s.powf(p) + t.powf(p) - (s - t).abs().powf(p)
}

/// Covariance of the complement `Y_β`: `2^β/(β(1-β)) C_β(s ∧ t, T)`.
pub fn ybeta_covariance(beta: f64, horizon: f64, s: f64, t: f64) -> Result<f64> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::ParameterOutOfRange(format!("Y_β needs 0 < β < 1, got {beta}")));
    }
    if !(horizon > 0.0) || !(0.0..=horizon).contains(&s) || !(0.0..=horizon).contains(&t) {
        return Err(Error::ParameterOutOfRange(format!("s={s}, t={t} outside [0, {horizon}]")));
    }
    Ok(2f64.powf(beta) / (beta * (1.0 - beta)) * c_beta(s.min(t), horizon, beta))
}
