//! Double integrals `∫∫ g(|y - y'|) μ(dy) ν(dy')` for radial kernels.
//!
//! Atom pairs are summed exactly. A density is paired through its
//! potential `y ↦ ∫ g(|y - y'|) ρ(y') dy'`, which is closed form for
//! uniform boxes and balls and adaptive quadrature otherwise.

use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::measures::{dist, integrate_2d, Density, SignedMeasure, Support};
use crate::quadrature::{self, Singular, Tolerance};

/// Radial kernel `g(r)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Radial {
    /// `r^p`, with `g(0) = 0` for `p > 0`.
    Power(f64),
    /// `-ln r`.
    NegLog,
}

impl Radial {
    pub fn eval(&self, r: f64) -> f64 {
        match *self {
            Radial::Power(p) => {
                if r == 0.0 {
                    if p > 0.0 {
                        0.0
                    } else if p == 0.0 {
                        1.0
                    } else {
                        f64::INFINITY
                    }
                } else {
                    r.powf(p)
                }
            }
            Radial::NegLog => -r.ln(),
        }
    }

    pub fn is_singular(&self) -> bool {
        match *self {
            Radial::Power(p) => p < 0.0,
            Radial::NegLog => true,
        }
    }

    /// Exponent used by the endpoint substitution. A logarithm is treated
    /// as a mild power singularity, which the map handles comfortably.
    pub(crate) fn gamma(&self) -> f64 {
        match *self {
            Radial::Power(p) => (-p).max(0.0),
            Radial::NegLog => 0.25,
        }
    }

    /// Power growth at infinity (negative when the kernel decays).
    pub(crate) fn growth(&self) -> f64 {
        match *self {
            Radial::Power(p) => p,
            Radial::NegLog => 0.05,
        }
    }

    /// `∫_0^r g(u) du`.
    fn prim0(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        match *self {
            Radial::Power(p) => r.powf(p + 1.0) / (p + 1.0),
            Radial::NegLog => r - r * r.ln(),
        }
    }

    /// `∫_0^r g(u) u du`.
    fn prim1(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        match *self {
            Radial::Power(p) => r.powf(p + 2.0) / (p + 2.0),
            Radial::NegLog => 0.25 * r * r - 0.5 * r * r * r.ln(),
        }
    }

    /// `(a, b)` with `g(c r) = a g(r) + b`.
    fn dilation(&self, c: f64) -> (f64, f64) {
        match *self {
            Radial::Power(p) => (c.powf(p), 0.0),
            Radial::NegLog => (1.0, -c.ln()),
        }
    }
}

fn value_of(v: f64, abs: bool) -> f64 {
    if abs {
        v.abs()
    } else {
        v
    }
}

/// `∫_lo^hi g(|y - y'|) dy'`.
fn box_potential_1d(k: Radial, lo: f64, hi: f64, y: f64) -> f64 {
    if y <= lo {
        k.prim0(hi - y) - k.prim0(lo - y)
    } else if y >= hi {
        k.prim0(y - lo) - k.prim0(y - hi)
    } else {
        k.prim0(y - lo) + k.prim0(hi - y)
    }
}

/// Piecewise-constant pieces `(lo, hi, value)` of `x ↦ inner([x, ∞))`
/// when `inner` is atomic with zero mass.
pub(crate) fn step_pieces(inner: &SignedMeasure) -> Option<Vec<(f64, f64, f64)>> {
    if !inner.is_atomic() || inner.dim != 1 {
        return None;
    }
    let mut atoms: Vec<(f64, f64)> = inner.atoms.iter().map(|a| (a.0[0], a.1)).collect();
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = atoms.iter().map(|a| a.1).sum();
    let scale: f64 = atoms.iter().map(|a| a.1.abs()).sum();
    if total.abs() > 1e-12 * scale.max(1.0) {
        return None;
    }
    let mut pieces = Vec::new();
    let mut above: f64 = total;
    for w in atoms.windows(2) {
        above -= w[0].1;
        // On (a_i, a_{i+1}] the tail equals the mass strictly above a_i.
        if w[1].0 > w[0].0 && above != 0.0 {
            pieces.push((w[0].0, w[1].0, above));
        }
    }
    Some(pieces)
}

/// Singular exponent of `ρ` at `y` (0 when regular there).
fn density_gamma_at(rho: &Density, y: &[f64]) -> f64 {
    rho.singularities().iter().filter(|(p, _)| p.as_slice() == y).map(|(_, g)| *g).fold(0.0, f64::max)
}

/// `∫ g(|y - y'|) ρ(y') dy'` (against `|ρ|` when `abs`).
pub fn potential(k: Radial, rho: &Density, y: &[f64], abs: bool, tol: Tolerance) -> Result<f64> {
    match rho {
        Density::Transformed { weight, scale, shift, base } => {
            let z: Vec<f64> = y.iter().zip(shift).map(|(v, s)| (v - s) / scale).collect();
            let (a, b) = k.dilation(*scale);
            let mut v = a * potential(k, base, &z, abs, tol)?;
            if b != 0.0 {
                v += b * if abs { base.abs_mass()? } else { base.mass()? };
            }
            return Ok(value_of(*weight, abs) * v);
        }
        Density::UniformBox { lo, hi, value } if lo.len() == 1 => {
            return Ok(value_of(*value, abs) * box_potential_1d(k, lo[0], hi[0], y[0]));
        }
        Density::UpperTail { inner } => {
            if let Some(pieces) = step_pieces(inner) {
                return Ok(pieces
                    .iter()
                    .map(|&(lo, hi, v)| value_of(v, abs) * box_potential_1d(k, lo, hi, y[0]))
                    .sum());
            }
        }
        _ => {}
    }
    match rho.dim() {
        1 => {
            let gamma = k.gamma() + density_gamma_at(rho, y);
            let y0 = y[0];
            rho.integrate_1d(&|x| k.eval((x - y0).abs()), &[Singular::new(y0, gamma)], k.growth(), abs, tol)
        }
        2 => potential_2d(k, rho, y, abs, tol),
        d => Err(Error::DimensionUnsupported(format!("density potential in d={d}"))),
    }
}

/// Ray `y + r e` against a bounded support: `[r0, r1]` clipped to `r ≥ 0`.
fn ray_extent(support: &Support, y: &[f64], e: [f64; 2]) -> Option<(f64, f64)> {
    let (mut t0, mut t1) = (0.0_f64, f64::INFINITY);
    match support {
        Support::Box { lo, hi } => {
            for i in 0..2 {
                if e[i].abs() < 1e-300 {
                    if y[i] < lo[i] || y[i] > hi[i] {
                        return None;
                    }
                } else {
                    let a = (lo[i] - y[i]) / e[i];
                    let b = (hi[i] - y[i]) / e[i];
                    t0 = t0.max(a.min(b));
                    t1 = t1.min(a.max(b));
                }
            }
        }
        Support::Ball { center, radius } => {
            let w = [y[0] - center[0], y[1] - center[1]];
            let b = e[0] * w[0] + e[1] * w[1];
            let c = w[0] * w[0] + w[1] * w[1] - radius * radius;
            let disc = b * b - c;
            if disc <= 0.0 {
                return None;
            }
            let s = disc.sqrt();
            t0 = t0.max(-b - s);
            t1 = t1.min(-b + s);
        }
        Support::Whole => return None,
    }
    (t1 > t0).then_some((t0, t1))
}

/// Angles at which the ray extent changes smoothness.
fn angular_breaks(support: &Support, y: &[f64]) -> Vec<f64> {
    match support {
        Support::Box { lo, hi } => {
            let mut v = Vec::new();
            for &cx in &[lo[0], hi[0]] {
                for &cy in &[lo[1], hi[1]] {
                    if (cx, cy) != (y[0], y[1]) {
                        v.push((cy - y[1]).atan2(cx - y[0]));
                    }
                }
            }
            v
        }
        Support::Ball { center, radius } => {
            let d = dist(y, center);
            if d > *radius {
                let phi = (center[1] - y[1]).atan2(center[0] - y[0]);
                let h = (radius / d).asin();
                vec![phi - h, phi + h]
            } else {
                Vec::new()
            }
        }
        Support::Whole => Vec::new(),
    }
}

fn potential_2d(k: Radial, rho: &Density, y: &[f64], abs: bool, tol: Tolerance) -> Result<f64> {
    let support = rho.support();
    if !support.is_bounded() {
        return Err(Error::DimensionUnsupported("potential of an unbounded density in d=2".into()));
    }
    let constant = match rho {
        Density::UniformBox { value, .. } | Density::UniformBall { value, .. } => Some(value_of(*value, abs)),
        _ => None,
    };
    let inner_tol = Tolerance::rel(tol.rel * 1e-2);
    let radial = |theta: f64| -> f64 {
        let e = [theta.cos(), theta.sin()];
        let Some((r0, r1)) = ray_extent(&support, y, e) else {
            return 0.0;
        };
        match constant {
            Some(v) => v * (k.prim1(r1) - k.prim1(r0)),
            None => {
                let f = |r: f64| {
                    let x = [y[0] + r * e[0], y[1] + r * e[1]];
                    value_of(rho.eval(&x), abs) * k.eval(r) * r
                };
                let sing = [Singular::new(0.0, (k.gamma() - 1.0).max(0.0))];
                quadrature::integrate(f, r0, r1, &sing, f64::INFINITY, inner_tol).unwrap_or(f64::NAN)
            }
        }
    };
    let mut breaks = angular_breaks(&support, y);
    let start = breaks.first().copied().unwrap_or(0.0);
    for b in breaks.iter_mut() {
        *b = start + (*b - start).rem_euclid(TAU);
    }
    let sing: Vec<Singular> = breaks.iter().map(|&b| Singular::breakpoint(b)).collect();
    quadrature::integrate(radial, start, start + TAU, &sing, f64::INFINITY, tol)
}

fn check_atom_pair(k: Radial, a: &[f64], b: &[f64]) -> Result<()> {
    if k.is_singular() && a == b {
        return Err(Error::EnergyDivergent(format!("coincident atoms at {a:?} under a singular kernel")));
    }
    Ok(())
}

fn density_pair(k: Radial, rho: &Density, sigma: &Density, abs: bool, tol: Tolerance) -> Result<f64> {
    let inner_tol = Tolerance::rel(tol.rel * 1e-2);
    let pot = |y: &[f64]| potential(k, sigma, y, abs, inner_tol).unwrap_or(f64::NAN);
    match rho.dim() {
        1 => {
            // Potential of σ near its own singular points behaves like
            // |y - p|^{-(γ_σ + γ_k - 1)} when that exponent is positive.
            let kg = k.gamma();
            let pot_gamma = |p: &[f64]| (density_gamma_at(sigma, p) + kg - 1.0).max(0.0);
            let mut sing: Vec<Singular> = Vec::new();
            for (p, g) in rho.singularities() {
                sing.push(Singular::new(p[0], g + pot_gamma(&p)));
            }
            for (p, _) in sigma.singularities() {
                if !sing.iter().any(|s| s.at == p[0]) {
                    sing.push(Singular::new(p[0], pot_gamma(&p)));
                }
            }
            rho.integrate_1d(&|y| pot(&[y]), &sing, k.growth().max(0.0), abs, tol)
        }
        2 => {
            let support = rho.support();
            let f = |y: &[f64]| {
                let r = value_of(rho.eval(y), abs);
                if r == 0.0 {
                    0.0
                } else {
                    r * pot(y)
                }
            };
            integrate_2d(&support, &f, tol)
        }
        d => Err(Error::DimensionUnsupported(format!("density pairs in d={d}"))),
    }
}

/// `∫∫ g(|y - y'|) μ(dy) ν(dy')`, or against `|μ| ⊗ |ν|` when `abs`.
pub fn pair(k: Radial, mu: &SignedMeasure, nu: &SignedMeasure, abs: bool, tol: Tolerance) -> Result<f64> {
    if mu.dim != nu.dim {
        return Err(Error::DimensionMismatch { expected: mu.dim, found: nu.dim });
    }
    let mut total = 0.0;
    for a in &mu.atoms {
        for b in &nu.atoms {
            if a.1 == 0.0 || b.1 == 0.0 {
                continue;
            }
            check_atom_pair(k, &a.0, &b.0)?;
            total += value_of(a.1, abs) * value_of(b.1, abs) * k.eval(dist(&a.0, &b.0));
        }
    }
    let inner_tol = Tolerance::rel(tol.rel * 1e-1);
    for a in mu.atoms.iter().filter(|a| a.1 != 0.0) {
        for s in &nu.densities {
            total += value_of(a.1, abs) * potential(k, s, &a.0, abs, inner_tol).map_err(divergence)?;
        }
    }
    for b in nu.atoms.iter().filter(|b| b.1 != 0.0) {
        for r in &mu.densities {
            total += value_of(b.1, abs) * potential(k, r, &b.0, abs, inner_tol).map_err(divergence)?;
        }
    }
    for r in &mu.densities {
        for s in &nu.densities {
            total += density_pair(k, r, s, abs, tol).map_err(divergence)?;
        }
    }
    Ok(total)
}

fn divergence(e: Error) -> Error {
    match e {
        Error::NonIntegrable(msg) => Error::EnergyDivergent(msg),
        other => other,
    }
}
