//! Finite signed measures on ℝ^d: atoms plus density components that
//! carry their own support, singularity and decay metadata.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::pairing::{self, Radial};
use crate::quadrature::{self, Singular, Tolerance};

/// Moment-zero threshold for membership checks.
pub const MOMENT_ZERO_TOL: f64 = 1e-8;
/// Relative tolerance of density moments.
pub const MOMENT_REL_TOL: f64 = 1e-9;
/// Highest supported total moment order.
pub const MAX_MOMENT_ORDER: usize = 4;

/// Point mass `(location, weight)`; serializes as `[[x...], w]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom(pub Vec<f64>, pub f64);

impl Atom {
    pub fn loc(&self) -> &[f64] {
        &self.0
    }

    pub fn weight(&self) -> f64 {
        self.1
    }
}

/// Region outside of which a density vanishes. Box bounds may be infinite.
#[derive(Clone, Debug, PartialEq)]
pub enum Support {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    Whole,
}

impl Support {
    pub fn is_bounded(&self) -> bool {
        match self {
            Support::Box { lo, hi } => lo.iter().chain(hi).all(|v| v.is_finite()),
            Support::Ball { .. } => true,
            Support::Whole => false,
        }
    }

    /// Projection onto the first axis, used by the one-dimensional code paths.
    pub fn interval(&self) -> (f64, f64) {
        match self {
            Support::Box { lo, hi } => (lo[0], hi[0]),
            Support::Ball { center, radius } => (center[0] - radius, center[0] + radius),
            Support::Whole => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    fn transformed(&self, c: f64, b: &[f64]) -> Support {
        match self {
            Support::Box { lo, hi } => Support::Box {
                lo: lo.iter().zip(b).map(|(x, s)| c * x + s).collect(),
                hi: hi.iter().zip(b).map(|(x, s)| c * x + s).collect(),
            },
            Support::Ball { center, radius } => Support::Ball {
                center: center.iter().zip(b).map(|(x, s)| c * x + s).collect(),
                radius: c * radius,
            },
            Support::Whole => Support::Whole,
        }
    }
}

/// One term `weight · |x - center|^exponent`, optionally one-sided
/// (`Below` keeps x < center, `Above` keeps x > center; one-dimensional).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerTerm {
    pub center: Vec<f64>,
    pub weight: f64,
    pub exponent: f64,
    #[serde(default)]
    pub side: Side,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    #[default]
    Both,
    Below,
    Above,
}

impl PowerTerm {
    fn eval(&self, x: &[f64]) -> f64 {
        let r = match self.side {
            Side::Both => dist(x, &self.center),
            Side::Below if x[0] < self.center[0] => self.center[0] - x[0],
            Side::Above if x[0] > self.center[0] => x[0] - self.center[0],
            _ => return 0.0,
        };
        if r == 0.0 {
            return if self.exponent > 0.0 { 0.0 } else { f64::INFINITY * self.weight.signum() };
        }
        self.weight * r.powf(self.exponent)
    }
}

/// Caller-supplied density. Not serializable.
#[derive(Clone)]
pub struct CustomDensity {
    pub dim: usize,
    pub label: String,
    pub f: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    pub support: Support,
    pub singularities: Vec<(Vec<f64>, f64)>,
    pub decay: f64,
}

impl fmt::Debug for CustomDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomDensity")
            .field("dim", &self.dim)
            .field("label", &self.label)
            .field("support", &self.support)
            .field("singularities", &self.singularities)
            .field("decay", &self.decay)
            .finish()
    }
}

/// Built-in density components. One-dimensional variants read `x[0]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Density {
    /// Constant `value` on an axis-aligned box.
    UniformBox { lo: Vec<f64>, hi: Vec<f64>, value: f64 },
    /// Constant `value` on a ball.
    UniformBall { center: Vec<f64>, radius: f64, value: f64 },
    /// Finite sum of power terms; `decay` is declared because the terms
    /// usually cancel at infinity.
    PowerSum { dim: usize, terms: Vec<PowerTerm>, decay: f64 },
    /// `coef · exp(rate · x)` on `(lo, hi]`.
    Exponential { lo: f64, hi: f64, coef: f64, rate: f64 },
    /// `coef · |anchor - x|^exponent` on `(lo, hi]`, anchor outside the open interval.
    PowerLaw1d { lo: f64, hi: f64, coef: f64, anchor: f64, exponent: f64 },
    /// `x ↦ inner([x, ∞))`, the one-dimensional order-one Riesz potential.
    UpperTail { inner: Box<SignedMeasure> },
    /// `x ↦ C_{m,d} ∫ |x - y|^{-(d-m)} inner(dy)`.
    Riesz { inner: Box<SignedMeasure>, m: f64 },
    /// `x ↦ weight · scale^{-d} · base((x - shift) / scale)`.
    Transformed { weight: f64, scale: f64, shift: Vec<f64>, base: Box<Density> },
    #[serde(skip)]
    Custom(CustomDensity),
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Riesz constant `C_{m,d} = Γ((d-m)/2) / (π^{d/2} 2^m Γ(m/2))`.
pub fn riesz_constant(m: f64, d: usize) -> f64 {
    let d = d as f64;
    gamma((d - m) / 2.0) / (std::f64::consts::PI.powf(d / 2.0) * 2f64.powf(m) * gamma(m / 2.0))
}

/// Volume of the unit ball in ℝ^k.
pub fn unit_ball_volume(k: usize) -> f64 {
    let k = k as f64;
    std::f64::consts::PI.powf(k / 2.0) / gamma(k / 2.0 + 1.0)
}

/// Surface area of the unit sphere S^{k-1} ⊂ ℝ^k.
pub fn unit_sphere_area(k: usize) -> f64 {
    k as f64 * unit_ball_volume(k)
}

impl Density {
    pub fn dim(&self) -> usize {
        match self {
            Density::UniformBox { lo, .. } => lo.len(),
            Density::UniformBall { center, .. } => center.len(),
            Density::PowerSum { dim, .. } => *dim,
            Density::Exponential { .. } | Density::PowerLaw1d { .. } => 1,
            Density::UpperTail { .. } => 1,
            Density::Riesz { inner, .. } => inner.dim,
            Density::Transformed { base, .. } => base.dim(),
            Density::Custom(c) => c.dim,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Density::UniformBox { lo, hi, value } => {
                let inside = x.iter().zip(lo.iter().zip(hi)).all(|(v, (l, h))| v >= l && v <= h);
                if inside {
                    *value
                } else {
                    0.0
                }
            }
            Density::UniformBall { center, radius, value } => {
                if dist(x, center) <= *radius {
                    *value
                } else {
                    0.0
                }
            }
            Density::PowerSum { terms, .. } => terms.iter().map(|t| t.eval(x)).sum(),
            Density::Exponential { lo, hi, coef, rate } => {
                if x[0] > *lo && x[0] <= *hi {
                    coef * (rate * x[0]).exp()
                } else {
                    0.0
                }
            }
            Density::PowerLaw1d { lo, hi, coef, anchor, exponent } => {
                if x[0] > *lo && x[0] <= *hi {
                    coef * (anchor - x[0]).abs().powf(*exponent)
                } else {
                    0.0
                }
            }
            Density::UpperTail { inner } => inner.upper_tail(x[0]).unwrap_or(f64::NAN),
            Density::Riesz { inner, m } => riesz_eval(inner, *m, x).unwrap_or(f64::NAN),
            Density::Transformed { weight, scale, shift, base } => {
                let y: Vec<f64> = x.iter().zip(shift).map(|(v, s)| (v - s) / scale).collect();
                weight * scale.powi(-(x.len() as i32)) * base.eval(&y)
            }
            Density::Custom(c) => (c.f)(x),
        }
    }

    pub fn support(&self) -> Support {
        match self {
            Density::UniformBox { lo, hi, .. } => Support::Box { lo: lo.clone(), hi: hi.clone() },
            Density::UniformBall { center, radius, .. } => {
                Support::Ball { center: center.clone(), radius: *radius }
            }
            Density::PowerSum { dim, terms, .. } => {
                if *dim == 1 && !terms.is_empty() && terms.iter().all(|t| t.side == Side::Below) {
                    let hi = terms.iter().map(|t| t.center[0]).fold(f64::NEG_INFINITY, f64::max);
                    Support::Box { lo: vec![f64::NEG_INFINITY], hi: vec![hi] }
                } else if *dim == 1 && !terms.is_empty() && terms.iter().all(|t| t.side == Side::Above) {
                    let lo = terms.iter().map(|t| t.center[0]).fold(f64::INFINITY, f64::min);
                    Support::Box { lo: vec![lo], hi: vec![f64::INFINITY] }
                } else {
                    Support::Whole
                }
            }
            Density::Exponential { lo, hi, .. } | Density::PowerLaw1d { lo, hi, .. } => {
                Support::Box { lo: vec![*lo], hi: vec![*hi] }
            }
            Density::UpperTail { inner } => {
                let (lo, hi) = inner.hull_1d();
                if inner.total_mass().map(|m| m.abs() <= MOMENT_ZERO_TOL).unwrap_or(false) {
                    Support::Box { lo: vec![lo], hi: vec![hi] }
                } else {
                    Support::Box { lo: vec![f64::NEG_INFINITY], hi: vec![hi] }
                }
            }
            Density::Riesz { .. } => Support::Whole,
            Density::Transformed { scale, shift, base, .. } => base.support().transformed(*scale, shift),
            Density::Custom(c) => c.support.clone(),
        }
    }

    /// Points with their singularity exponent γ (0 marks a breakpoint).
    pub fn singularities(&self) -> Vec<(Vec<f64>, f64)> {
        match self {
            Density::UniformBox { lo, hi, .. } if lo.len() == 1 => {
                vec![(lo.clone(), 0.0), (hi.clone(), 0.0)]
            }
            Density::UniformBox { .. } | Density::UniformBall { .. } => Vec::new(),
            Density::PowerSum { terms, .. } => {
                terms.iter().map(|t| (t.center.clone(), (-t.exponent).max(0.0))).collect()
            }
            Density::Exponential { lo, hi, .. } => vec![(vec![*lo], 0.0), (vec![*hi], 0.0)],
            Density::PowerLaw1d { lo, hi, anchor, exponent, .. } => {
                let g = (-exponent).max(0.0);
                let mut v = vec![(vec![*lo], if *anchor == *lo { g } else { 0.0 })];
                v.push((vec![*hi], if *anchor == *hi { g } else { 0.0 }));
                v
            }
            Density::UpperTail { inner } => {
                let mut v: Vec<_> = inner.atoms.iter().map(|a| (a.0.clone(), 0.0)).collect();
                for d in &inner.densities {
                    v.extend(d.singularities().into_iter().map(|(p, _)| (p, 0.0)));
                }
                v
            }
            Density::Riesz { inner, m } => {
                let g = inner.dim as f64 - m;
                let mut v: Vec<_> = inner.atoms.iter().map(|a| (a.0.clone(), g)).collect();
                for d in &inner.densities {
                    v.extend(d.singularities().into_iter().map(|(p, _)| (p, 0.0)));
                }
                v
            }
            Density::Transformed { scale, shift, base, .. } => base
                .singularities()
                .into_iter()
                .map(|(p, g)| (p.iter().zip(shift).map(|(x, s)| scale * x + s).collect(), g))
                .collect(),
            Density::Custom(c) => c.singularities.clone(),
        }
    }

    /// Tail exponent η with `|ρ(x)| ≲ |x|^{-η}`; infinite for bounded support.
    pub fn decay(&self) -> f64 {
        if self.support().is_bounded() {
            return f64::INFINITY;
        }
        match self {
            Density::PowerSum { decay, .. } => *decay,
            Density::UpperTail { inner } => {
                if inner.total_mass().map(|m| m.abs() <= MOMENT_ZERO_TOL).unwrap_or(false) {
                    inner.densities.iter().map(|d| d.decay() - 1.0).fold(f64::INFINITY, f64::min)
                } else {
                    0.0
                }
            }
            Density::Riesz { inner, m } => {
                let base = inner.dim as f64 - m;
                let tight = inner.total_mass().map(|v| v.abs() <= MOMENT_ZERO_TOL).unwrap_or(false)
                    && inner.is_bounded();
                if tight {
                    base + 1.0
                } else {
                    base
                }
            }
            Density::Transformed { base, .. } => base.decay(),
            Density::Custom(c) => c.decay,
            _ => f64::INFINITY,
        }
    }

    /// True when the density alone is not integrable and only makes sense
    /// paired with a kernel that restores integrability.
    pub fn requires_kernel_pairing(&self) -> bool {
        !self.support().is_bounded() && self.decay() <= self.dim() as f64
    }

    /// Multiply by a scalar.
    pub fn scaled(self, f: f64) -> Density {
        match self {
            Density::UniformBox { lo, hi, value } => Density::UniformBox { lo, hi, value: value * f },
            Density::UniformBall { center, radius, value } => {
                Density::UniformBall { center, radius, value: value * f }
            }
            Density::Exponential { lo, hi, coef, rate } => Density::Exponential { lo, hi, coef: coef * f, rate },
            Density::PowerLaw1d { lo, hi, coef, anchor, exponent } => {
                Density::PowerLaw1d { lo, hi, coef: coef * f, anchor, exponent }
            }
            Density::PowerSum { dim, terms, decay } => Density::PowerSum {
                dim,
                terms: terms.into_iter().map(|t| PowerTerm { weight: t.weight * f, ..t }).collect(),
                decay,
            },
            Density::Transformed { weight, scale, shift, base } => {
                Density::Transformed { weight: weight * f, scale, shift, base }
            }
            other => {
                let d = other.dim();
                Density::Transformed { weight: f, scale: 1.0, shift: vec![0.0; d], base: Box::new(other) }
            }
        }
    }

    /// `x ↦ c^{-d} ρ((x - b)/c)` composed on top of any existing transform.
    pub fn transformed(self, c: f64, b: &[f64]) -> Density {
        match self {
            Density::Transformed { weight, scale, shift, base } => Density::Transformed {
                weight,
                scale: c * scale,
                shift: shift.iter().zip(b).map(|(s, t)| c * s + t).collect(),
                base,
            },
            other => Density::Transformed { weight: 1.0, scale: c, shift: b.to_vec(), base: Box::new(other) },
        }
    }

    fn quadrature_singulars(&self) -> Vec<Singular> {
        self.singularities().into_iter().map(|(p, g)| Singular::new(p[0], g)).collect()
    }

    /// `∫ g(x) ρ(x) dx` on the line (`abs` integrates against `|ρ|`).
    /// `g_growth` is the power growth of `g` at infinity.
    pub fn integrate_1d(
        &self,
        g: &dyn Fn(f64) -> f64,
        extra: &[Singular],
        g_growth: f64,
        abs: bool,
        tol: Tolerance,
    ) -> Result<f64> {
        if self.dim() != 1 {
            return Err(Error::DimensionMismatch { expected: 1, found: self.dim() });
        }
        let (lo, hi) = self.support().interval();
        let mut sing = self.quadrature_singulars();
        sing.extend_from_slice(extra);
        let decay = self.decay() - g_growth;
        let f = |x: f64| {
            let r = self.eval(&[x]);
            let r = if abs { r.abs() } else { r };
            if r == 0.0 {
                0.0
            } else {
                r * g(x)
            }
        };
        quadrature::integrate(f, lo, hi, &sing, decay, tol)
    }

    /// `∫ g ρ` over the support for d ≤ 2 (nested rules in two dimensions).
    pub fn integrate(&self, g: &dyn Fn(&[f64]) -> f64, abs: bool, tol: Tolerance) -> Result<f64> {
        match self.dim() {
            1 => self.integrate_1d(&|x| g(&[x]), &[], 0.0, abs, tol),
            2 => {
                let f = |x: &[f64]| {
                    let r = self.eval(x);
                    let r = if abs { r.abs() } else { r };
                    if r == 0.0 {
                        0.0
                    } else {
                        r * g(x)
                    }
                };
                integrate_2d(&self.support(), &f, tol)
            }
            d => Err(Error::DimensionUnsupported(format!("density quadrature in d={d}"))),
        }
    }

    /// `∫ρ` in closed form where available, quadrature otherwise.
    pub fn mass(&self) -> Result<f64> {
        match self {
            Density::UniformBox { lo, hi, value } => {
                Ok(value * lo.iter().zip(hi).map(|(l, h)| h - l).product::<f64>())
            }
            Density::UniformBall { radius, value, center } => {
                Ok(value * unit_ball_volume(center.len()) * radius.powi(center.len() as i32))
            }
            Density::Transformed { weight, base, .. } => Ok(weight * base.mass()?),
            _ => {
                self.check_integrable()?;
                self.integrate(&|_| 1.0, false, Tolerance::rel(1e-11))
            }
        }
    }

    /// `∫|ρ|`.
    pub fn abs_mass(&self) -> Result<f64> {
        match self {
            Density::UniformBox { value, .. } | Density::UniformBall { value, .. } => {
                Ok(self.mass()? * value.signum())
            }
            Density::Transformed { weight, base, .. } => Ok(weight.abs() * base.abs_mass()?),
            _ => {
                self.check_integrable()?;
                self.integrate(&|_| 1.0, true, Tolerance::rel(1e-11))
            }
        }
    }

    fn check_integrable(&self) -> Result<()> {
        if self.requires_kernel_pairing() {
            return Err(Error::NonIntegrable(format!(
                "density with decay exponent {} in d={} needs kernel pairing",
                self.decay(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// `∫_x^∞ ρ` (one-dimensional).
    pub fn upper_tail(&self, x: f64) -> Result<f64> {
        match self {
            Density::UniformBox { lo, hi, value } => Ok(value * (hi[0] - x.max(lo[0])).max(0.0)),
            Density::Exponential { lo, hi, coef, rate } => {
                let a = x.max(*lo);
                if a >= *hi {
                    return Ok(0.0);
                }
                if *rate == 0.0 {
                    return Ok(coef * (hi - a));
                }
                Ok(coef / rate * ((rate * hi).exp() - (rate * a).exp()))
            }
            Density::PowerLaw1d { lo, hi, coef, anchor, exponent } => {
                let a = x.max(*lo);
                if a >= *hi {
                    return Ok(0.0);
                }
                // Antiderivative of |anchor - x|^p with the sign of (x - anchor).
                let prim = |v: f64| {
                    let r = (anchor - v).abs();
                    let s = if v >= *anchor { 1.0 } else { -1.0 };
                    if (exponent + 1.0).abs() < 1e-15 {
                        s * r.ln()
                    } else {
                        s * r.powf(exponent + 1.0) / (exponent + 1.0)
                    }
                };
                Ok(coef * (prim(*hi) - prim(a)))
            }
            Density::Transformed { weight, scale, shift, base } => {
                Ok(weight * base.upper_tail((x - shift[0]) / scale)?)
            }
            _ => {
                let (lo, hi) = self.support().interval();
                if x >= hi {
                    return Ok(0.0);
                }
                let a = x.max(lo);
                let sing = self.quadrature_singulars();
                quadrature::integrate(|y| self.eval(&[y]), a, hi, &sing, self.decay(), Tolerance::rel(1e-12))
            }
        }
    }
}

/// Nested two-dimensional quadrature over a bounded box or ball.
pub(crate) fn integrate_2d(support: &Support, f: &dyn Fn(&[f64]) -> f64, tol: Tolerance) -> Result<f64> {
    let inner_tol = Tolerance::rel(tol.rel * 1e-2);
    match support {
        Support::Box { lo, hi } if support.is_bounded() => {
            let outer = |x: f64| {
                quadrature::integrate_finite(|y| f(&[x, y]), lo[1], hi[1], inner_tol).unwrap_or(f64::NAN)
            };
            quadrature::integrate_finite(outer, lo[0], hi[0], tol)
        }
        Support::Ball { center, radius } => {
            let (cx, cy, r0) = (center[0], center[1], *radius);
            let outer = |r: f64| {
                let ang = |t: f64| f(&[cx + r * t.cos(), cy + r * t.sin()]);
                r * quadrature::integrate_finite(ang, 0.0, std::f64::consts::TAU, inner_tol).unwrap_or(f64::NAN)
            };
            quadrature::integrate_finite(outer, 0.0, r0, tol)
        }
        _ => Err(Error::DimensionUnsupported("unbounded two-dimensional density".into())),
    }
}

fn riesz_eval(inner: &SignedMeasure, m: f64, x: &[f64]) -> Result<f64> {
    let d = inner.dim;
    let k = Radial::Power(-(d as f64 - m));
    let mut v = 0.0;
    for a in &inner.atoms {
        v += a.1 * k.eval(dist(x, &a.0));
    }
    for dens in &inner.densities {
        v += pairing::potential(k, dens, x, false, Tolerance::rel(1e-11))?;
    }
    Ok(riesz_constant(m, d) * v)
}

/// Outcome of [`check_membership`]: `member` plus the failed conditions.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MembershipReport {
    pub r: usize,
    pub member: bool,
    pub failures: Vec<String>,
}

/// Finite signed measure on ℝ^d.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SignedMeasure {
    pub dim: usize,
    #[serde(default)]
    pub atoms: Vec<Atom>,
    #[serde(default)]
    pub densities: Vec<Density>,
}

impl SignedMeasure {
    pub fn new(dim: usize, atoms: Vec<Atom>, densities: Vec<Density>) -> Result<Self> {
        let m = SignedMeasure { dim, atoms, densities };
        m.validate()?;
        Ok(m)
    }

    pub fn zero(dim: usize) -> Self {
        SignedMeasure { dim, atoms: Vec::new(), densities: Vec::new() }
    }

    pub fn dirac(loc: Vec<f64>, weight: f64) -> Self {
        SignedMeasure { dim: loc.len(), atoms: vec![Atom(loc, weight)], densities: Vec::new() }
    }

    /// Atomic measure on the line from `(x, w)` pairs (equal locations merged).
    pub fn atoms_1d(pairs: &[(f64, f64)]) -> Self {
        let mut m = SignedMeasure::zero(1);
        for &(x, w) in pairs {
            m.push_atom(vec![x], w);
        }
        m
    }

    /// `δ_t - δ_0`.
    pub fn increment(t: &[f64]) -> Self {
        let mut m = SignedMeasure::dirac(t.to_vec(), 1.0);
        m.push_atom(vec![0.0; t.len()], -1.0);
        m.prune()
    }

    /// Lebesgue measure on `[lo, hi]` times `value`.
    pub fn lebesgue_1d(lo: f64, hi: f64, value: f64) -> Self {
        SignedMeasure::zero(1).with_density(Density::UniformBox { lo: vec![lo], hi: vec![hi], value })
    }

    pub fn with_density(mut self, d: Density) -> Self {
        self.densities.push(d);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::ParameterOutOfRange("dimension must be positive".into()));
        }
        for a in &self.atoms {
            if a.0.len() != self.dim {
                return Err(Error::DimensionMismatch { expected: self.dim, found: a.0.len() });
            }
            if !a.1.is_finite() || a.0.iter().any(|x| !x.is_finite()) {
                return Err(Error::ParameterOutOfRange(format!("non-finite atom {a:?}")));
            }
        }
        for d in &self.densities {
            if d.dim() != self.dim {
                return Err(Error::DimensionMismatch { expected: self.dim, found: d.dim() });
            }
            for (p, g) in d.singularities() {
                if g >= self.dim as f64 {
                    return Err(Error::NonIntegrable(format!("singularity of order {g} at {p:?}")));
                }
            }
        }
        Ok(())
    }

    /// Add an atom, merging with an existing atom at the same location.
    pub fn push_atom(&mut self, loc: Vec<f64>, w: f64) {
        if let Some(a) = self.atoms.iter_mut().find(|a| a.0 == loc) {
            a.1 += w;
        } else {
            self.atoms.push(Atom(loc, w));
        }
    }

    /// Drop atoms whose weights cancelled exactly.
    pub fn prune(mut self) -> Self {
        self.atoms.retain(|a| a.1 != 0.0);
        self
    }

    pub fn is_atomic(&self) -> bool {
        self.densities.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.atoms.iter().all(|a| a.1 == 0.0) && self.densities.is_empty()
    }

    pub fn is_bounded(&self) -> bool {
        self.densities.iter().all(|d| d.support().is_bounded())
    }

    pub fn plus(&self, other: &SignedMeasure) -> Self {
        let mut out = self.clone();
        for a in &other.atoms {
            out.push_atom(a.0.clone(), a.1);
        }
        out.densities.extend(other.densities.iter().cloned());
        out.prune()
    }

    pub fn scaled(&self, c: f64) -> Self {
        SignedMeasure {
            dim: self.dim,
            atoms: self.atoms.iter().map(|a| Atom(a.0.clone(), a.1 * c)).collect(),
            densities: self.densities.iter().cloned().map(|d| d.scaled(c)).collect(),
        }
        .prune()
    }

    pub fn minus(&self, other: &SignedMeasure) -> Self {
        self.plus(&other.scaled(-1.0))
    }

    /// Smallest interval containing every atom and density support (d = 1).
    pub fn hull_1d(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for a in &self.atoms {
            lo = lo.min(a.0[0]);
            hi = hi.max(a.0[0]);
        }
        for d in &self.densities {
            let (l, h) = d.support().interval();
            lo = lo.min(l);
            hi = hi.max(h);
        }
        (lo, hi)
    }

    /// Radius of a ball about the origin containing the support.
    pub fn extent(&self) -> f64 {
        let mut r: f64 = 0.0;
        for a in &self.atoms {
            r = r.max(a.0.iter().map(|x| x * x).sum::<f64>().sqrt());
        }
        for d in &self.densities {
            r = r.max(match d.support() {
                Support::Box { lo, hi } => {
                    lo.iter().zip(&hi).map(|(l, h)| l.abs().max(h.abs()).powi(2)).sum::<f64>().sqrt()
                }
                Support::Ball { center, radius } => center.iter().map(|x| x * x).sum::<f64>().sqrt() + radius,
                Support::Whole => f64::INFINITY,
            });
        }
        r
    }

    pub fn total_mass(&self) -> Result<f64> {
        let mut m: f64 = self.atoms.iter().map(|a| a.1).sum();
        for d in &self.densities {
            m += d.mass()?;
        }
        Ok(m)
    }

    /// `‖μ‖ = Σ|w| + Σ∫|ρ|`.
    pub fn total_variation(&self) -> Result<f64> {
        let mut m: f64 = self.atoms.iter().map(|a| a.1.abs()).sum();
        for d in &self.densities {
            m += d.abs_mass()?;
        }
        Ok(m)
    }

    /// `μ([x, ∞))` on the line.
    pub fn upper_tail(&self, x: f64) -> Result<f64> {
        let mut v: f64 = self.atoms.iter().filter(|a| a.0[0] >= x).map(|a| a.1).sum();
        for d in &self.densities {
            v += d.upper_tail(x)?;
        }
        Ok(v)
    }

    /// Density of the absolutely continuous part at `x`.
    pub fn density_at(&self, x: &[f64]) -> f64 {
        self.densities.iter().map(|d| d.eval(x)).sum()
    }

    pub fn to_json(&self) -> Result<String> {
        if self.densities.iter().any(contains_custom) {
            return Err(Error::NotSerializable("user-defined density".into()));
        }
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: SignedMeasure = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }
}

fn contains_custom(d: &Density) -> bool {
    match d {
        Density::Custom(_) => true,
        Density::Transformed { base, .. } => contains_custom(base),
        Density::UpperTail { inner } | Density::Riesz { inner, .. } => inner.densities.iter().any(contains_custom),
        _ => false,
    }
}

/// `∫ x^j μ(dx)` for a multi-index with `|j| ≤ 4`.
pub fn moment(mu: &SignedMeasure, j: &[usize]) -> Result<f64> {
    if j.len() != mu.dim {
        return Err(Error::DimensionMismatch { expected: mu.dim, found: j.len() });
    }
    let order: usize = j.iter().sum();
    if order > MAX_MOMENT_ORDER {
        return Err(Error::ParameterOutOfRange(format!("moment order {order} > {MAX_MOMENT_ORDER}")));
    }
    let mono = |x: &[f64]| x.iter().zip(j).map(|(v, &e)| v.powi(e as i32)).product::<f64>();
    let mut v: f64 = mu.atoms.iter().map(|a| a.1 * mono(&a.0)).sum();
    for d in &mu.densities {
        let decay = d.decay();
        if decay <= (mu.dim + order) as f64 {
            return Err(Error::NonIntegrableMoment { order, decay });
        }
        v += match d {
            Density::UniformBox { lo, hi, value } => {
                value
                    * j.iter()
                        .enumerate()
                        .map(|(i, &e)| (hi[i].powi(e as i32 + 1) - lo[i].powi(e as i32 + 1)) / (e as f64 + 1.0))
                        .product::<f64>()
            }
            _ => d.integrate(&mono, false, Tolerance::rel(MOMENT_REL_TOL * 1e-2))?,
        };
    }
    Ok(v)
}

fn multi_indices(d: usize, order: usize) -> Vec<Vec<usize>> {
    if d == 1 {
        return vec![vec![order]];
    }
    let mut out = Vec::new();
    for first in 0..=order {
        for mut rest in multi_indices(d - 1, order - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Membership in ℳ_r: finite `∫|x|^{r-1}|μ|` and vanishing moments below `r`.
pub fn check_membership(mu: &SignedMeasure, r: usize) -> MembershipReport {
    let mut failures = Vec::new();
    if r > MAX_MOMENT_ORDER {
        failures.push(format!("r={r} exceeds the supported maximum {MAX_MOMENT_ORDER}"));
        return MembershipReport { r, member: false, failures };
    }
    if r >= 1 {
        for (k, d) in mu.densities.iter().enumerate() {
            let need = (mu.dim + r - 1) as f64;
            if d.decay() <= need {
                failures.push(format!(
                    "density {k}: decay exponent {} does not make |x|^{} integrable",
                    d.decay(),
                    r - 1
                ));
            }
        }
    }
    if failures.is_empty() {
        for order in 0..r {
            for j in multi_indices(mu.dim, order) {
                match moment(mu, &j) {
                    Ok(v) if v.abs() <= MOMENT_ZERO_TOL => {}
                    Ok(v) => failures.push(format!("moment {j:?} = {v:e}")),
                    Err(e) => failures.push(format!("moment {j:?}: {e}")),
                }
            }
        }
    }
    MembershipReport { r, member: failures.is_empty(), failures }
}

/// `μ_c(B) = μ(B/c)`.
pub fn dilate(mu: &SignedMeasure, c: f64) -> Result<SignedMeasure> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::ParameterOutOfRange(format!("dilation factor {c}")));
    }
    if c == 1.0 {
        return Ok(mu.clone());
    }
    let zero = vec![0.0; mu.dim];
    Ok(SignedMeasure {
        dim: mu.dim,
        atoms: mu.atoms.iter().map(|a| Atom(a.0.iter().map(|x| c * x).collect(), a.1)).collect(),
        densities: mu.densities.iter().cloned().map(|d| d.transformed(c, &zero)).collect(),
    })
}

/// `μ(· - s)`.
pub fn translate(mu: &SignedMeasure, s: &[f64]) -> Result<SignedMeasure> {
    if s.len() != mu.dim {
        return Err(Error::DimensionMismatch { expected: mu.dim, found: s.len() });
    }
    Ok(SignedMeasure {
        dim: mu.dim,
        atoms: mu.atoms.iter().map(|a| Atom(a.0.iter().zip(s).map(|(x, t)| x + t).collect(), a.1)).collect(),
        densities: mu.densities.iter().cloned().map(|d| d.transformed(1.0, s)).collect(),
    })
}

/// Riesz potential `(-Δ)^{-m/2} μ` as a single density component.
pub fn riesz_transform(mu: &SignedMeasure, m: f64, d: usize) -> Result<SignedMeasure> {
    if d != mu.dim {
        return Err(Error::DimensionMismatch { expected: d, found: mu.dim });
    }
    let unit = d == 1 && m == 1.0;
    if !unit && !(m > 0.0 && m < d as f64) {
        return Err(Error::ParameterOutOfRange(format!("Riesz order m={m} in d={d}")));
    }
    for dens in &mu.densities {
        let eta = dens.decay();
        if eta <= m {
            return Err(Error::RieszDivergence(format!("density decay {eta} does not beat |y|^{}", d as f64 - m)));
        }
        if d >= 2 {
            return Err(Error::DimensionUnsupported("Riesz potential of densities in d ≥ 2".into()));
        }
    }
    let inner = Box::new(mu.clone());
    let density = if unit { Density::UpperTail { inner } } else { Density::Riesz { inner, m } };
    Ok(SignedMeasure { dim: d, atoms: Vec::new(), densities: vec![density] })
}

/// `∫∫ |y - y'|^{d-α} |μ|(dy) |μ'|(dy')`.
pub fn pair_energy(mu: &SignedMeasure, nu: &SignedMeasure, alpha: f64) -> Result<f64> {
    if mu.dim != nu.dim {
        return Err(Error::DimensionMismatch { expected: mu.dim, found: nu.dim });
    }
    let p = mu.dim as f64 - alpha;
    if p <= -(mu.dim as f64) {
        return Err(Error::EnergyDivergent(format!("kernel exponent {p} not locally integrable")));
    }
    pairing::pair(Radial::Power(p), mu, nu, true, Tolerance::rel(1e-9))
}
