//! Measure families `t ↦ μ_t` whose covariance functionals give fBm in
//! several representations, Gaussian bridges and Volterra processes.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{covariance_functional, fit_constant, KernelSpec};
use crate::measures::{riesz_transform, CustomDensity, Density, PowerTerm, Side, SignedMeasure, Support};
use crate::pairing::step_pieces;
use crate::quadrature::{self, gauss_legendre_on, Singular, Tolerance};

/// Nodes per smooth piece when integrating `μ_s` against a density in `s`.
pub const BRIDGE_GL_NODES: usize = 64;
/// Relative tolerance of white-noise inner products.
pub const WHITENOISE_REL_TOL: f64 = 1e-10;
/// Pointwise tolerance of the Volterra round-trip probe.
pub const VOLTERRA_PROBE_TOL: f64 = 1e-9;

/// Caller-supplied bridge weight `f(t)`.
#[derive(Clone)]
pub struct CustomWeight {
    pub label: String,
    pub f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for CustomWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CustomWeight({})", self.label)
    }
}

/// The scalar `f^{(a)}(t)` of a generalized bridge.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "weight", rename_all = "snake_case")]
pub enum BridgeWeight {
    /// `t / T`, pinning at `T`.
    Linear,
    /// `6u(1-u)` with `u = t/T`, conditioning on zero area.
    ZeroArea,
    /// `(T^{2H} + t^{2H} - |T-t|^{2H}) / (2T^{2H})`, pinning fBm at `T`.
    Fractional {
        #[serde(rename = "H")]
        h: f64,
    },
    #[serde(skip)]
    Custom(CustomWeight),
}

impl BridgeWeight {
    pub fn eval(&self, t: f64, horizon: f64) -> f64 {
        match self {
            BridgeWeight::Linear => t / horizon,
            BridgeWeight::ZeroArea => {
                let u = t / horizon;
                6.0 * u * (1.0 - u)
            }
            BridgeWeight::Fractional { h } => {
                let p = 2.0 * h;
                (horizon.powf(p) + t.abs().powf(p) - (horizon - t).abs().powf(p)) / (2.0 * horizon.powf(p))
            }
            BridgeWeight::Custom(c) => (c.f)(t),
        }
    }
}

/// Conditioning functional `a(X) = ∫ X_s a(ds)` on `[0, T]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConditioningMeasure {
    pub a: SignedMeasure,
    #[serde(rename = "T")]
    pub horizon: f64,
}

impl ConditioningMeasure {
    pub fn new(a: SignedMeasure, horizon: f64) -> Result<Self> {
        let c = ConditioningMeasure { a, horizon };
        c.validate()?;
        Ok(c)
    }

    /// `δ_T`.
    pub fn endpoint(horizon: f64) -> Self {
        ConditioningMeasure { a: SignedMeasure::dirac(vec![horizon], 1.0), horizon }
    }

    /// Lebesgue measure on `[0, T]`.
    pub fn area(horizon: f64) -> Self {
        ConditioningMeasure { a: SignedMeasure::lebesgue_1d(0.0, horizon, 1.0), horizon }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::ParameterOutOfRange(format!("horizon {}", self.horizon)));
        }
        if self.a.dim != 1 {
            return Err(Error::DimensionMismatch { expected: 1, found: self.a.dim });
        }
        self.a.validate()?;
        let (lo, hi) = self.a.hull_1d();
        if !self.a.is_zero() && (lo < 0.0 || hi > self.horizon) {
            return Err(Error::ParameterOutOfRange(format!(
                "conditioning support [{lo}, {hi}] outside [0, {}]",
                self.horizon
            )));
        }
        let tv = self.a.total_variation()?;
        if !tv.is_finite() {
            return Err(Error::ParameterOutOfRange("conditioning measure has infinite variation".into()));
        }
        Ok(())
    }
}

type KernelFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
type EdgeFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Caller-supplied Volterra kernel with its derivative and edge values.
#[derive(Clone)]
pub struct CustomVolterra {
    pub label: String,
    pub k: KernelFn,
    pub dk_dx: KernelFn,
    pub right_limit_at_0: EdgeFn,
    pub diagonal: EdgeFn,
}

impl fmt::Debug for CustomVolterra {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CustomVolterra({})", self.label)
    }
}

/// Kernels `K(t, x)` supported on `0 < x ≤ t`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kernel", rename_all = "snake_case")]
pub enum VolterraKernel {
    /// `K = 1`.
    Brownian,
    /// `σ e^{α(x - t)}`.
    OrnsteinUhlenbeck { alpha: f64, sigma: f64 },
    /// `((1 - t)/(1 - x))^α` on `0 ≤ t ≤ 1`.
    AlphaBridge { alpha: f64 },
    #[serde(skip)]
    Custom(CustomVolterra),
}

impl VolterraKernel {
    pub fn validate(&self) -> Result<()> {
        match self {
            VolterraKernel::OrnsteinUhlenbeck { alpha, sigma } => {
                if !alpha.is_finite() || !(*sigma > 0.0 && sigma.is_finite()) {
                    return Err(Error::ParameterOutOfRange(format!("OU α={alpha} σ={sigma}")));
                }
            }
            VolterraKernel::AlphaBridge { alpha } => {
                if !(*alpha > 0.0 && alpha.is_finite()) {
                    return Err(Error::ParameterOutOfRange(format!("α-bridge α={alpha}")));
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn check_time(&self, t: f64) -> Result<()> {
        let ok = match self {
            VolterraKernel::AlphaBridge { .. } => (0.0..=1.0).contains(&t),
            _ => t >= 0.0 && t.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::ParameterOutOfRange(format!("time {t} outside the kernel's domain")))
        }
    }

    pub fn k(&self, t: f64, x: f64) -> f64 {
        if !(x > 0.0 && x <= t) {
            return 0.0;
        }
        match self {
            VolterraKernel::Brownian => 1.0,
            VolterraKernel::OrnsteinUhlenbeck { alpha, sigma } => sigma * (alpha * (x - t)).exp(),
            VolterraKernel::AlphaBridge { alpha } => ((1.0 - t) / (1.0 - x)).powf(*alpha),
            VolterraKernel::Custom(c) => (c.k)(t, x),
        }
    }

    pub fn dk_dx(&self, t: f64, x: f64) -> f64 {
        if !(x > 0.0 && x <= t) {
            return 0.0;
        }
        match self {
            VolterraKernel::Brownian => 0.0,
            VolterraKernel::OrnsteinUhlenbeck { alpha, sigma } => alpha * sigma * (alpha * (x - t)).exp(),
            VolterraKernel::AlphaBridge { alpha } => alpha * (1.0 - t).powf(*alpha) * (1.0 - x).powf(-alpha - 1.0),
            VolterraKernel::Custom(c) => (c.dk_dx)(t, x),
        }
    }

    pub fn right_limit_at_0(&self, t: f64) -> f64 {
        match self {
            VolterraKernel::Brownian => 1.0,
            VolterraKernel::OrnsteinUhlenbeck { alpha, sigma } => sigma * (-alpha * t).exp(),
            VolterraKernel::AlphaBridge { alpha } => (1.0 - t).powf(*alpha),
            VolterraKernel::Custom(c) => (c.right_limit_at_0)(t),
        }
    }

    pub fn diagonal(&self, t: f64) -> f64 {
        match self {
            VolterraKernel::Brownian => 1.0,
            VolterraKernel::OrnsteinUhlenbeck { sigma, .. } => *sigma,
            VolterraKernel::AlphaBridge { .. } => {
                if t < 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            VolterraKernel::Custom(c) => (c.diagonal)(t),
        }
    }

    /// `-∂_x K(t, ·)` on `(0, t]` as a density.
    fn minus_derivative(&self, t: f64) -> Option<Density> {
        match self {
            VolterraKernel::Brownian => None,
            VolterraKernel::OrnsteinUhlenbeck { alpha, sigma } => {
                (*alpha != 0.0).then(|| Density::Exponential {
                    lo: 0.0,
                    hi: t,
                    coef: -alpha * sigma * (-alpha * t).exp(),
                    rate: *alpha,
                })
            }
            VolterraKernel::AlphaBridge { alpha } => (t < 1.0).then(|| Density::PowerLaw1d {
                lo: 0.0,
                hi: t,
                coef: -alpha * (1.0 - t).powf(*alpha),
                anchor: 1.0,
                exponent: -alpha - 1.0,
            }),
            VolterraKernel::Custom(c) => {
                let dk = c.dk_dx.clone();
                Some(Density::Custom(CustomDensity {
                    dim: 1,
                    label: format!("-dK/dx[{}]({t})", c.label),
                    f: Arc::new(move |x: &[f64]| if x[0] > 0.0 && x[0] <= t { -dk(t, x[0]) } else { 0.0 }),
                    support: Support::Box { lo: vec![0.0], hi: vec![t] },
                    singularities: vec![(vec![0.0], 0.0), (vec![t], 0.0)],
                    decay: f64::INFINITY,
                }))
            }
        }
    }
}

/// `μ_t = K(t,t) δ_t - K(t,0+) δ_0 - ∂_x K(t,x) 1_{(0,t]}(x) dx`.
///
/// The tail `μ_t([x, ∞))` is checked against `K(t, x)` at 50 points.
pub fn volterra_to_measure(kernel: &VolterraKernel, t: f64) -> Result<SignedMeasure> {
    kernel.validate()?;
    kernel.check_time(t)?;
    if t == 0.0 {
        return Ok(SignedMeasure::zero(1));
    }
    let mut mu = SignedMeasure::zero(1);
    mu.push_atom(vec![t], kernel.diagonal(t));
    mu.push_atom(vec![0.0], -kernel.right_limit_at_0(t));
    if let Some(d) = kernel.minus_derivative(t) {
        mu.densities.push(d);
    }
    let mu = mu.prune();
    for i in 0..50 {
        let x = t * (i as f64 + 0.5) / 50.0;
        let tail = mu.upper_tail(x)?;
        let k = kernel.k(t, x);
        if !((tail - k).abs() <= VOLTERRA_PROBE_TOL * k.abs().max(1.0)) {
            return Err(Error::PreconditionViolation(format!(
                "Volterra round trip at x={x}: tail {tail} vs K {k}"
            )));
        }
    }
    Ok(mu)
}

/// How the measures of a family are paired into a covariance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Pairing {
    /// `sign · ∫∫ |y - y'|^{2H} μ_s(dy) μ_t(dy')`.
    PowerLaw { two_h: f64, sign: f64 },
    /// `∫ F_s F_t dx`, where `F` is the measure's density, or its order-one
    /// Riesz potential first when `pre_riesz`.
    WhiteNoise { pre_riesz: bool },
    /// Riesz-transformed increments paired through the composition rule:
    /// `-∫∫ |y - y'|^{2H} (δ_s - δ_0)(dy) (δ_t - δ_0)(dy')`.
    RieszReduced { two_h: f64 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum MeasureFamily {
    /// `δ_t - δ_0` under `|y - y'|^{2H}`, `0 < H < 1/2`.
    TakenakaFbm {
        #[serde(rename = "H")]
        h: f64,
        d: usize,
    },
    /// `(-Δ)^{-m/2}(δ_t - δ_0)`.
    RieszFbm {
        #[serde(rename = "H")]
        h: f64,
        m: f64,
        d: usize,
    },
    /// Density `|t - x|^{H-1/2} - |x|^{H-1/2}` under white noise.
    WellBalancedFbm {
        #[serde(rename = "H")]
        h: f64,
        d: usize,
    },
    /// Density `(t - x)_+^{H-1/2} - (-x)_+^{H-1/2}` under white noise.
    MandelbrotVanNess {
        #[serde(rename = "H")]
        h: f64,
    },
    BrownianMotion,
    BrownianBridge {
        #[serde(rename = "T")]
        horizon: f64,
    },
    GeneralizedBridge {
        base: Box<MeasureFamily>,
        a: ConditioningMeasure,
        f: BridgeWeight,
    },
    /// fBm pinned to zero at time 1.
    FractionalBridge {
        #[serde(rename = "H")]
        h: f64,
    },
    Volterra {
        kernel: VolterraKernel,
    },
}

fn hurst_open(h: f64, lo: f64, hi: f64) -> Result<()> {
    if h > lo && h < hi {
        Ok(())
    } else {
        Err(Error::ParameterOutOfRange(format!("H={h} outside ({lo}, {hi})")))
    }
}

impl MeasureFamily {
    pub fn validate(&self) -> Result<()> {
        match self {
            MeasureFamily::TakenakaFbm { h, d } => {
                if *d == 0 {
                    return Err(Error::ParameterOutOfRange("d must be positive".into()));
                }
                hurst_open(*h, 0.0, 0.5)
            }
            MeasureFamily::RieszFbm { h, m, d } => {
                if *d == 1 {
                    if *m != 1.0 {
                        return Err(Error::ParameterOutOfRange(format!("d=1 needs m=1, got {m}")));
                    }
                    if !(*h >= 0.5 && *h < 1.0) {
                        return Err(Error::ParameterOutOfRange(format!("d=1 Riesz fBm needs 1/2 ≤ H < 1, got {h}")));
                    }
                    return Ok(());
                }
                let df = *d as f64;
                let beta = df + 2.0 * m - 2.0 * h;
                let ok = *d >= 2 && 2.0 * m > 0.0 && 2.0 * m < df && beta > df && beta < 2.0 * df && *h > 0.0 && *h < 1.0;
                if ok {
                    Ok(())
                } else {
                    Err(Error::ParameterOutOfRange(format!("Riesz fBm H={h} m={m} d={d} (β={beta})")))
                }
            }
            MeasureFamily::WellBalancedFbm { h, d } => {
                if *d != 1 {
                    return Err(Error::DimensionUnsupported(format!("well-balanced densities need d=1, got {d}")));
                }
                hurst_open(*h, 0.0, 0.5)
            }
            MeasureFamily::MandelbrotVanNess { h } => hurst_open(*h, 0.0, 0.5),
            MeasureFamily::BrownianMotion => Ok(()),
            MeasureFamily::BrownianBridge { horizon } => {
                if *horizon > 0.0 && horizon.is_finite() {
                    Ok(())
                } else {
                    Err(Error::ParameterOutOfRange(format!("horizon {horizon}")))
                }
            }
            MeasureFamily::GeneralizedBridge { base, a, .. } => {
                base.validate()?;
                a.validate()?;
                if base.dim() != 1 {
                    return Err(Error::DimensionMismatch { expected: 1, found: base.dim() });
                }
                if matches!(base.pairing(), Pairing::RieszReduced { .. }) {
                    return Err(Error::MethodUnsupported("bridges over reduced Riesz families".into()));
                }
                Ok(())
            }
            MeasureFamily::FractionalBridge { h } => hurst_open(*h, 0.0, 1.0),
            MeasureFamily::Volterra { kernel } => kernel.validate(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            MeasureFamily::TakenakaFbm { d, .. } | MeasureFamily::RieszFbm { d, .. } => *d,
            _ => 1,
        }
    }

    /// Self-similarity index of the fBm variants.
    pub fn hurst(&self) -> Option<f64> {
        match self {
            MeasureFamily::TakenakaFbm { h, .. }
            | MeasureFamily::RieszFbm { h, .. }
            | MeasureFamily::WellBalancedFbm { h, .. }
            | MeasureFamily::MandelbrotVanNess { h } => Some(*h),
            MeasureFamily::BrownianMotion => Some(0.5),
            _ => None,
        }
    }

    pub fn is_fbm(&self) -> bool {
        self.hurst().is_some()
    }

    /// Moment order `r` with `μ_t ∈ ℳ_r`.
    pub fn declared_order(&self) -> usize {
        match self {
            MeasureFamily::RieszFbm { .. } | MeasureFamily::WellBalancedFbm { .. } | MeasureFamily::MandelbrotVanNess { .. } => 0,
            _ => 1,
        }
    }

    pub fn pairing(&self) -> Pairing {
        match self {
            MeasureFamily::TakenakaFbm { h, .. } => Pairing::PowerLaw { two_h: 2.0 * h, sign: -1.0 },
            MeasureFamily::RieszFbm { h, d, .. } => {
                if *d >= 2 {
                    Pairing::RieszReduced { two_h: 2.0 * h }
                } else if *h == 0.5 {
                    Pairing::WhiteNoise { pre_riesz: false }
                } else {
                    Pairing::PowerLaw { two_h: 2.0 * h - 2.0, sign: 1.0 }
                }
            }
            MeasureFamily::WellBalancedFbm { .. } | MeasureFamily::MandelbrotVanNess { .. } => {
                Pairing::WhiteNoise { pre_riesz: false }
            }
            MeasureFamily::BrownianMotion | MeasureFamily::BrownianBridge { .. } | MeasureFamily::Volterra { .. } => {
                Pairing::WhiteNoise { pre_riesz: true }
            }
            MeasureFamily::GeneralizedBridge { base, .. } => base.pairing(),
            MeasureFamily::FractionalBridge { h } => Pairing::PowerLaw { two_h: 2.0 * h, sign: -1.0 },
        }
    }

    fn scalar(&self, t: &[f64]) -> Result<f64> {
        if t.len() != 1 {
            return Err(Error::DimensionMismatch { expected: 1, found: t.len() });
        }
        if !t[0].is_finite() {
            return Err(Error::ParameterOutOfRange(format!("time {}", t[0])));
        }
        Ok(t[0])
    }

    /// `μ_t`.
    pub fn measure(&self, t: &[f64]) -> Result<SignedMeasure> {
        self.validate()?;
        match self {
            MeasureFamily::TakenakaFbm { d, .. } => {
                if t.len() != *d {
                    return Err(Error::DimensionMismatch { expected: *d, found: t.len() });
                }
                Ok(SignedMeasure::increment(t))
            }
            MeasureFamily::RieszFbm { m, d, .. } => {
                if t.len() != *d {
                    return Err(Error::DimensionMismatch { expected: *d, found: t.len() });
                }
                let inc = SignedMeasure::increment(t);
                if inc.is_zero() {
                    return Ok(SignedMeasure::zero(*d));
                }
                riesz_transform(&inc, *m, *d)
            }
            MeasureFamily::WellBalancedFbm { h, .. } => Ok(power_increment(self.scalar(t)?, *h, Side::Both)),
            MeasureFamily::MandelbrotVanNess { h } => Ok(power_increment(self.scalar(t)?, *h, Side::Below)),
            MeasureFamily::BrownianMotion => Ok(SignedMeasure::increment(&[self.scalar(t)?])),
            MeasureFamily::BrownianBridge { horizon } => {
                let t = self.scalar(t)?;
                if !(0.0..=*horizon).contains(&t) {
                    return Err(Error::ParameterOutOfRange(format!("time {t} outside [0, {horizon}]")));
                }
                let u = t / horizon;
                let mut m = SignedMeasure::dirac(vec![t], 1.0);
                m.push_atom(vec![0.0], -(1.0 - u));
                m.push_atom(vec![*horizon], -u);
                Ok(m.prune())
            }
            MeasureFamily::GeneralizedBridge { base, a, f } => generalized_bridge_measure(base, a, f, self.scalar(t)?),
            MeasureFamily::FractionalBridge { h } => {
                let t = self.scalar(t)?;
                if !(0.0..=1.0).contains(&t) {
                    return Err(Error::ParameterOutOfRange(format!("time {t} outside [0, 1]")));
                }
                let f = BridgeWeight::Fractional { h: *h }.eval(t, 1.0);
                Ok(SignedMeasure::increment(&[t]).minus(&SignedMeasure::increment(&[1.0]).scaled(f)))
            }
            MeasureFamily::Volterra { kernel } => volterra_to_measure(kernel, self.scalar(t)?),
        }
    }
}

/// `w(t - x)^{H-1/2} - w(-x)^{H-1/2}` with `w = |·|` or the positive part.
fn power_increment(t: f64, h: f64, side: Side) -> SignedMeasure {
    if t == 0.0 {
        return SignedMeasure::zero(1);
    }
    let e = h - 0.5;
    let terms = vec![
        PowerTerm { center: vec![t], weight: 1.0, exponent: e, side },
        PowerTerm { center: vec![0.0], weight: -1.0, exponent: e, side },
    ];
    SignedMeasure::zero(1).with_density(Density::PowerSum { dim: 1, terms, decay: 1.5 - h })
}

/// Measure representing an fBm variant at `t`.
pub fn fbm_measure(family: &MeasureFamily, t: &[f64]) -> Result<SignedMeasure> {
    match family {
        MeasureFamily::TakenakaFbm { .. }
        | MeasureFamily::RieszFbm { .. }
        | MeasureFamily::WellBalancedFbm { .. }
        | MeasureFamily::MandelbrotVanNess { .. } => family.measure(t),
        _ => Err(Error::ParameterOutOfRange("not a fractional Brownian family".into())),
    }
}

/// Concatenate all `PowerSum` components into one.
fn merge_power_sums(densities: Vec<Density>) -> Vec<Density> {
    let mut out = Vec::new();
    let mut merged: Option<(usize, Vec<PowerTerm>, f64)> = None;
    for d in densities {
        match d {
            Density::PowerSum { dim, terms, decay } => {
                let entry = merged.get_or_insert((dim, Vec::new(), f64::INFINITY));
                for t in terms {
                    let same = entry.1.iter_mut().find(|u| u.center == t.center && u.exponent == t.exponent && u.side == t.side);
                    match same {
                        Some(u) => u.weight += t.weight,
                        None => entry.1.push(t),
                    }
                }
                entry.2 = entry.2.min(decay);
            }
            other => out.push(other),
        }
    }
    if let Some((dim, mut terms, decay)) = merged {
        terms.retain(|t| t.weight != 0.0);
        if !terms.is_empty() {
            out.push(Density::PowerSum { dim, terms, decay });
        }
    }
    out
}

/// `∫_0^T μ_s a(ds)`.
///
/// Atoms of `a` are exact. Against a density `ρ` of `a`, the unit atom at
/// `s` that moves with `s` integrates exactly to `ρ` itself; the remaining
/// parts of `μ_s` are summed with Gauss–Legendre weights.
pub fn conditioning_integral(base: &MeasureFamily, a: &ConditioningMeasure) -> Result<SignedMeasure> {
    let mut out = SignedMeasure::zero(1);
    for atom in &a.a.atoms {
        out = out.plus(&base.measure(&atom.0)?.scaled(atom.1));
    }
    let mut extra = Vec::new();
    for rho in &a.a.densities {
        let (lo, hi) = rho.support().interval();
        let (lo, hi) = (lo.max(0.0), hi.min(a.horizon));
        if hi <= lo {
            continue;
        }
        let mut knots = vec![lo, hi];
        knots.extend(rho.singularities().into_iter().map(|(p, _)| p[0]).filter(|&p| p > lo && p < hi));
        knots.sort_by(f64::total_cmp);
        knots.dedup();
        let mut moving: Vec<f64> = Vec::new();
        for w in knots.windows(2) {
            for (s, wk) in gauss_legendre_on(BRIDGE_GL_NODES, w[0], w[1]) {
                let r = rho.eval(&[s]);
                let mu = base.measure(&[s])?;
                let mut c = 0.0;
                for atom in &mu.atoms {
                    if atom.0[0] == s {
                        c += atom.1;
                    } else {
                        out.push_atom(atom.0.clone(), wk * r * atom.1);
                    }
                }
                moving.push(c);
                extra.extend(mu.densities.into_iter().map(|d| d.scaled(wk * r)));
            }
        }
        let c0 = moving[0];
        if moving.iter().all(|&c| (c - c0).abs() <= 1e-14 * c0.abs().max(1.0)) {
            if c0 != 0.0 {
                out.densities.push(rho.clone().scaled(c0));
            }
        } else {
            let base = base.clone();
            let rho_c = rho.clone();
            let moving_weight = move |s: f64| -> f64 {
                base.measure(&[s]).map(|m| m.atoms.iter().filter(|a| a.0[0] == s).map(|a| a.1).sum()).unwrap_or(f64::NAN)
            };
            out.densities.push(Density::Custom(CustomDensity {
                dim: 1,
                label: "moving-atom weight × conditioning density".into(),
                f: Arc::new(move |x: &[f64]| {
                    let r = rho_c.eval(x);
                    if r == 0.0 {
                        0.0
                    } else {
                        r * moving_weight(x[0])
                    }
                }),
                support: Support::Box { lo: vec![lo], hi: vec![hi] },
                singularities: rho.singularities(),
                decay: f64::INFINITY,
            }));
        }
    }
    out.densities.extend(merge_power_sums(extra));
    Ok(out.prune())
}

/// `μ_t - f(t) ∫ μ_s a(ds)`.
pub fn generalized_bridge_measure(
    base: &MeasureFamily,
    a: &ConditioningMeasure,
    f: &BridgeWeight,
    t: f64,
) -> Result<SignedMeasure> {
    a.validate()?;
    if !(0.0..=a.horizon).contains(&t) {
        return Err(Error::ParameterOutOfRange(format!("time {t} outside [0, {}]", a.horizon)));
    }
    let mu_t = base.measure(&[t])?;
    let ft = f.eval(t, a.horizon);
    if ft == 0.0 {
        return Ok(mu_t);
    }
    let integral = conditioning_integral(base, a)?;
    let mut out = mu_t.minus(&integral.scaled(ft));
    out.densities = merge_power_sums(out.densities);
    Ok(out)
}

/// Piecewise-constant representation `(lo, hi, value)` when available.
fn steps(d: &Density) -> Option<Vec<(f64, f64, f64)>> {
    match d {
        Density::UniformBox { lo, hi, value } if lo.len() == 1 => Some(vec![(lo[0], hi[0], *value)]),
        Density::UpperTail { inner } => step_pieces(inner),
        Density::Transformed { weight, scale, shift, base } if shift.len() == 1 => steps(base).map(|v| {
            v.into_iter()
                .map(|(a, b, c)| (scale * a + shift[0], scale * b + shift[0], weight * c / scale))
                .collect()
        }),
        _ => None,
    }
}

fn check_square_integrable(d: &Density) -> Result<()> {
    if d.dim() != 1 {
        return Err(Error::DimensionUnsupported("white-noise inner products need d=1".into()));
    }
    for (p, g) in d.singularities() {
        if g >= 0.5 {
            return Err(Error::NotSquareIntegrable(format!("singularity of order {g} at {p:?}")));
        }
    }
    if d.decay() <= 0.5 {
        return Err(Error::NotSquareIntegrable(format!("tail decay {} too slow", d.decay())));
    }
    Ok(())
}

fn density_product(a: &Density, b: &Density) -> Result<f64> {
    if let (Some(sa), Some(sb)) = (steps(a), steps(b)) {
        let mut v = 0.0;
        for &(l1, h1, c1) in &sa {
            for &(l2, h2, c2) in &sb {
                let overlap = h1.min(h2) - l1.max(l2);
                if overlap > 0.0 {
                    v += c1 * c2 * overlap;
                }
            }
        }
        return Ok(v);
    }
    let (la, ha) = a.support().interval();
    let (lb, hb) = b.support().interval();
    let (lo, hi) = (la.max(lb), ha.min(hb));
    if hi <= lo {
        return Ok(0.0);
    }
    // Orders add across the two factors; within one factor the worst wins.
    let own = |d: &Density| {
        let mut v: Vec<Singular> = Vec::new();
        for (p, g) in d.singularities() {
            match v.iter_mut().find(|s| s.at == p[0]) {
                Some(s) => s.gamma = s.gamma.max(g),
                None => v.push(Singular::new(p[0], g)),
            }
        }
        v
    };
    let mut sing = own(a);
    for t in own(b) {
        match sing.iter_mut().find(|s| s.at == t.at) {
            Some(s) => s.gamma += t.gamma,
            None => sing.push(t),
        }
    }
    let f = |x: f64| {
        let u = a.eval(&[x]);
        if u == 0.0 {
            return 0.0;
        }
        let v = b.eval(&[x]);
        if v == 0.0 {
            0.0
        } else {
            u * v
        }
    };
    quadrature::integrate(f, lo, hi, &sing, a.decay() + b.decay(), Tolerance::rel(WHITENOISE_REL_TOL))
}

/// `∫ F_s(x) F_t(x) dx` for pure-density measures on the line.
pub fn whitenoise_inner(mu_s: &SignedMeasure, mu_t: &SignedMeasure) -> Result<f64> {
    for m in [mu_s, mu_t] {
        if m.atoms.iter().any(|a| a.1 != 0.0) {
            return Err(Error::NotSquareIntegrable("measure has atoms".into()));
        }
        for d in &m.densities {
            check_square_integrable(d)?;
        }
    }
    let mut v = 0.0;
    for a in &mu_s.densities {
        for b in &mu_t.densities {
            v += density_product(a, b)?;
        }
    }
    Ok(v)
}

/// Covariance of the extracted process at `(s, t)`, with the constant
/// implied by the family's pairing.
pub fn process_covariance(family: &MeasureFamily, s: &[f64], t: &[f64]) -> Result<f64> {
    family.validate()?;
    match family.pairing() {
        Pairing::PowerLaw { two_h, sign } => {
            let k = KernelSpec::power_law(two_h / 2.0, family.dim())?;
            let (ms, mt) = (family.measure(s)?, family.measure(t)?);
            if ms.is_zero() || mt.is_zero() {
                return Ok(0.0);
            }
            Ok(sign * covariance_functional(&k, &ms, &mt)?)
        }
        Pairing::WhiteNoise { pre_riesz } => {
            let lift = |m: SignedMeasure| -> Result<SignedMeasure> {
                if !pre_riesz || m.is_zero() {
                    Ok(m)
                } else {
                    riesz_transform(&m, 1.0, 1)
                }
            };
            let fs = lift(family.measure(s)?)?;
            let ft = lift(family.measure(t)?)?;
            whitenoise_inner(&fs, &ft)
        }
        Pairing::RieszReduced { two_h } => {
            let d = family.dim();
            for p in [s, t] {
                if p.len() != d {
                    return Err(Error::DimensionMismatch { expected: d, found: p.len() });
                }
            }
            let (ms, mt) = (SignedMeasure::increment(s), SignedMeasure::increment(t));
            if ms.is_zero() || mt.is_zero() {
                return Ok(0.0);
            }
            let k = KernelSpec::power_law(two_h / 2.0, d)?;
            Ok(-covariance_functional(&k, &ms, &mt)?)
        }
    }
}

/// `|s|^{2H} + |t|^{2H} - |s - t|^{2H}`.
pub fn fbm_shape(h: f64, s: &[f64], t: &[f64]) -> f64 {
    let n = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let diff: Vec<f64> = s.iter().zip(t).map(|(a, b)| a - b).collect();
    n(s).powf(2.0 * h) + n(t).powf(2.0 * h) - n(&diff).powf(2.0 * h)
}

/// Family together with the constant `c` in `Cov = c · fbm_shape`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CalibratedFamily {
    pub family: MeasureFamily,
    pub constant: f64,
}

/// Least-squares constant of an fBm family against the closed form on
/// `{0.5, 1, 1.5, 2}²` along the first axis.
pub fn calibrate(family: &MeasureFamily) -> Result<CalibratedFamily> {
    let h = family.hurst().ok_or_else(|| Error::ParameterOutOfRange("calibration needs an fBm family".into()))?;
    let d = family.dim();
    let pt = |x: f64| {
        let mut v = vec![0.0; d];
        v[0] = x;
        v
    };
    let grid = [0.5, 1.0, 1.5, 2.0];
    let (mut computed, mut reference) = (Vec::new(), Vec::new());
    for &a in &grid {
        for &b in &grid {
            computed.push(process_covariance(family, &pt(a), &pt(b))?);
            reference.push(fbm_shape(h, &pt(a), &pt(b)));
        }
    }
    Ok(CalibratedFamily { family: family.clone(), constant: fit_constant(&computed, &reference) })
}

pub const PRESET_NAMES: [&str; 10] = [
    "bm",
    "bb",
    "zero-area-bb",
    "fbm-takenaka",
    "fbm-wb",
    "fbm-mvn",
    "fbm-riesz",
    "frac-bridge",
    "ou",
    "alpha-bridge",
];

pub fn preset(name: &str) -> Result<MeasureFamily> {
    Ok(match name {
        "bm" => MeasureFamily::BrownianMotion,
        "bb" => MeasureFamily::BrownianBridge { horizon: 1.0 },
        "zero-area-bb" => MeasureFamily::GeneralizedBridge {
            base: Box::new(MeasureFamily::BrownianBridge { horizon: 1.0 }),
            a: ConditioningMeasure::area(1.0),
            f: BridgeWeight::ZeroArea,
        },
        "fbm-takenaka" => MeasureFamily::TakenakaFbm { h: 0.25, d: 1 },
        "fbm-wb" => MeasureFamily::WellBalancedFbm { h: 0.25, d: 1 },
        "fbm-mvn" => MeasureFamily::MandelbrotVanNess { h: 0.25 },
        "fbm-riesz" => MeasureFamily::RieszFbm { h: 0.75, m: 1.0, d: 1 },
        "frac-bridge" => MeasureFamily::FractionalBridge { h: 0.25 },
        "ou" => MeasureFamily::Volterra { kernel: VolterraKernel::OrnsteinUhlenbeck { alpha: 1.0, sigma: 1.0 } },
        "alpha-bridge" => MeasureFamily::Volterra { kernel: VolterraKernel::AlphaBridge { alpha: 1.0 } },
        other => return Err(Error::UnknownPreset(other.to_string())),
    })
}

/// Fitted fBm constant of a preset, computed once per process.
pub fn preset_constant(name: &str) -> Result<Option<f64>> {
    static CACHE: OnceLock<Mutex<HashMap<String, f64>>> = OnceLock::new();
    let family = preset(name)?;
    if !family.is_fbm() {
        return Ok(None);
    }
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(c) = cache.lock().expect("preset cache poisoned").get(name) {
        return Ok(Some(*c));
    }
    let c = calibrate(&family)?.constant;
    cache.lock().expect("preset cache poisoned").insert(name.to_string(), c);
    Ok(Some(c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{check_membership, Atom};

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    fn atom_weight(m: &SignedMeasure, x: f64) -> f64 {
        m.atoms.iter().filter(|a| a.0[0] == x).map(|a| a.1).sum()
    }

    #[test]
    fn takenaka_at_origin_is_zero() {
        for h in [0.1, 0.25, 0.4] {
            let m = fbm_measure(&MeasureFamily::TakenakaFbm { h, d: 1 }, &[0.0]).unwrap();
            assert!(m.is_zero());
        }
        assert!(MeasureFamily::TakenakaFbm { h: 0.5, d: 1 }.validate().is_err());
    }

    #[test]
    fn riesz_fbm_one_dim_is_indicator() {
        let m = fbm_measure(&MeasureFamily::RieszFbm { h: 0.5, m: 1.0, d: 1 }, &[0.5]).unwrap();
        assert!(m.atoms.is_empty());
        for (x, want) in [(-0.1, 0.0), (0.01, 1.0), (0.25, 1.0), (0.5, 1.0), (0.51, 0.0)] {
            assert_eq!(m.density_at(&[x]), want, "x={x}");
        }
    }

    #[test]
    fn well_balanced_variance_scaling() {
        let fam = MeasureFamily::WellBalancedFbm { h: 0.25, d: 1 };
        let v1 = process_covariance(&fam, &[1.0], &[1.0]).unwrap();
        let v2 = process_covariance(&fam, &[2.0], &[2.0]).unwrap();
        // Oracle: direct quadrature of (|t-x|^{-1/4} - |x|^{-1/4})².
        let direct = |t: f64| {
            let f = |x: f64| ((t - x).abs().powf(-0.25) - x.abs().powf(-0.25)).powi(2);
            let sing = [Singular::new(0.0, 0.5), Singular::new(t, 0.5)];
            quadrature::integrate(f, f64::NEG_INFINITY, f64::INFINITY, &sing, 2.5, Tolerance::rel(1e-11)).unwrap()
        };
        assert!(rel(v1, direct(1.0)) < 1e-8, "{v1} vs {}", direct(1.0));
        assert!(rel(v2 / v1, 2f64.sqrt()) < 1e-7);
    }

    #[test]
    fn whitenoise_examples() {
        let a = SignedMeasure::lebesgue_1d(0.0, 1.0, 1.0);
        let b = SignedMeasure::lebesgue_1d(0.0, 2.0, 1.0);
        assert_eq!(whitenoise_inner(&a, &b).unwrap(), 1.0);
        let t = 0.5;
        let bridge = SignedMeasure::lebesgue_1d(0.0, t, 1.0 - t).with_density(Density::UniformBox {
            lo: vec![t],
            hi: vec![1.0],
            value: -t,
        });
        assert!((whitenoise_inner(&bridge, &bridge).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(whitenoise_inner(&a, &SignedMeasure::zero(1)).unwrap(), 0.0);
        let atom = SignedMeasure::dirac(vec![0.3], 1.0);
        assert!(matches!(whitenoise_inner(&atom, &a), Err(Error::NotSquareIntegrable(_))));
        let sing = SignedMeasure::zero(1).with_density(Density::PowerLaw1d {
            lo: 0.0,
            hi: 1.0,
            coef: 1.0,
            anchor: 0.0,
            exponent: -0.6,
        });
        assert!(matches!(whitenoise_inner(&sing, &a), Err(Error::NotSquareIntegrable(_))));
    }

    #[test]
    fn whitenoise_general_path_matches_steps() {
        // A smooth density forces the quadrature branch.
        let a = SignedMeasure::zero(1).with_density(Density::Exponential { lo: 0.0, hi: 1.0, coef: 1.0, rate: 0.0 });
        let b = SignedMeasure::lebesgue_1d(0.5, 2.0, 3.0);
        assert!((whitenoise_inner(&a, &b).unwrap() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn bridge_from_brownian_motion() {
        for t in [0.0, 0.3, 0.5, 1.0] {
            let m = generalized_bridge_measure(
                &MeasureFamily::BrownianMotion,
                &ConditioningMeasure::endpoint(1.0),
                &BridgeWeight::Linear,
                t,
            )
            .unwrap();
            assert!(m.densities.is_empty());
            if t > 0.0 && t < 1.0 {
                assert!((atom_weight(&m, t) - 1.0).abs() < 1e-15);
                assert!((atom_weight(&m, 0.0) + (1.0 - t)).abs() < 1e-15);
                assert!((atom_weight(&m, 1.0) + t).abs() < 1e-15);
            } else {
                assert!(m.is_zero(), "t={t}: {m:?}");
            }
        }
    }

    #[test]
    fn zero_area_bridge_measure() {
        let fam = preset("zero-area-bb").unwrap();
        assert!(fam.measure(&[0.0]).unwrap().is_zero());
        let m = fam.measure(&[0.5]).unwrap();
        // Oracle: substitute t = 1/2 into the explicit four-term measure.
        assert!((atom_weight(&m, 0.5) - 1.0).abs() < 1e-13);
        assert!((atom_weight(&m, 0.0) - 0.25).abs() < 1e-13);
        assert!((atom_weight(&m, 1.0) - 0.25).abs() < 1e-13);
        for x in [0.1, 0.5, 0.9] {
            assert!((m.density_at(&[x]) + 1.5).abs() < 1e-13);
        }
        assert!(m.total_mass().unwrap().abs() < 1e-12);
        for t in [0.2, 0.7] {
            let m = fam.measure(&[t]).unwrap();
            assert!((atom_weight(&m, 0.0) + (1.0 - 4.0 * t + 3.0 * t * t)).abs() < 1e-13);
            assert!((atom_weight(&m, 1.0) - (2.0 * t - 3.0 * t * t)).abs() < 1e-13);
            assert!((m.density_at(&[0.4]) - 6.0 * (t * t - t)).abs() < 1e-13);
        }
    }

    #[test]
    fn fractional_bridge_collapses_to_linear() {
        for t in [0.1, 0.4, 0.8] {
            assert!((BridgeWeight::Fractional { h: 0.5 }.eval(t, 1.0) - t).abs() < 1e-15);
        }
        for h in [0.25, 0.75] {
            let fam = MeasureFamily::FractionalBridge { h };
            assert!(process_covariance(&fam, &[1.0], &[1.0]).unwrap().abs() < 1e-10);
        }
    }

    #[test]
    fn volterra_examples() {
        let bm = volterra_to_measure(&VolterraKernel::Brownian, 0.7).unwrap();
        assert_eq!(bm.atoms, vec![Atom(vec![0.7], 1.0), Atom(vec![0.0], -1.0)]);
        assert!(bm.densities.is_empty());

        let (alpha, sigma, t) = (1.3, 0.8, 0.9);
        let ou = volterra_to_measure(&VolterraKernel::OrnsteinUhlenbeck { alpha, sigma }, t).unwrap();
        assert_eq!(atom_weight(&ou, t), sigma);
        assert!((atom_weight(&ou, 0.0) + sigma * (-alpha * t).exp()).abs() < 1e-15);
        let x = 0.3;
        assert!((ou.density_at(&[x]) + alpha * sigma * (alpha * (x - t)).exp()).abs() < 1e-14);
        assert!(ou.total_mass().unwrap().abs() < 1e-14);

        let ab = volterra_to_measure(&VolterraKernel::AlphaBridge { alpha: 1.0 }, 0.5).unwrap();
        assert_eq!(atom_weight(&ab, 0.5), 1.0);
        assert_eq!(atom_weight(&ab, 0.0), -0.5);
        for x in [0.1, 0.3, 0.5] {
            // -∂_x (1-t)/(1-x) = -(1-t)(1-x)^{-2}
            assert!((ab.density_at(&[x]) + 0.5 / (1.0 - x).powi(2)).abs() < 1e-14);
        }
        let fam = MeasureFamily::Volterra { kernel: VolterraKernel::AlphaBridge { alpha: 1.0 } };
        assert!((process_covariance(&fam, &[0.5], &[0.5]).unwrap() - 0.25).abs() < 1e-10);
        assert!(process_covariance(&fam, &[1.0], &[1.0]).unwrap().abs() < 1e-10);
    }

    #[test]
    fn volterra_round_trip_and_ou_covariance() {
        let (alpha, sigma) = (0.7, 1.2);
        let k = VolterraKernel::OrnsteinUhlenbeck { alpha, sigma };
        let fam = MeasureFamily::Volterra { kernel: k.clone() };
        for t in [0.2, 1.0, 2.5] {
            let m = volterra_to_measure(&k, t).unwrap();
            let f = riesz_transform(&m, 1.0, 1).unwrap();
            for i in 1..=20 {
                let x = t * i as f64 / 20.0;
                assert!((f.density_at(&[x]) - k.k(t, x)).abs() < 1e-9);
            }
        }
        // Oracle: ∫_0^{s∧t} σ² e^{α(x-s)} e^{α(x-t)} dx in closed form.
        let (s, t) = (0.6, 1.4);
        let exact = sigma * sigma * ((2.0 * alpha * s).exp() - 1.0) / (2.0 * alpha) * (-alpha * (s + t)).exp();
        assert!(rel(process_covariance(&fam, &[s], &[t]).unwrap(), exact) < 1e-9);
    }

    #[test]
    fn custom_volterra_matches_builtin() {
        let custom = VolterraKernel::Custom(CustomVolterra {
            label: "ou".into(),
            k: Arc::new(|t, x| (x - t).exp()),
            dk_dx: Arc::new(|t, x| (x - t).exp()),
            right_limit_at_0: Arc::new(|t| (-t).exp()),
            diagonal: Arc::new(|_| 1.0),
        });
        let a = MeasureFamily::Volterra { kernel: custom };
        let b = preset("ou").unwrap();
        let (x, y) = (process_covariance(&a, &[0.4], &[0.9]).unwrap(), process_covariance(&b, &[0.4], &[0.9]).unwrap());
        assert!(rel(x, y) < 1e-9);
        let broken = VolterraKernel::Custom(CustomVolterra {
            label: "wrong derivative".into(),
            k: Arc::new(|t, x| (x - t).exp()),
            dk_dx: Arc::new(|_, _| 0.0),
            right_limit_at_0: Arc::new(|t| (-t).exp()),
            diagonal: Arc::new(|_| 1.0),
        });
        assert!(volterra_to_measure(&broken, 1.0).is_err());
    }

    #[test]
    fn process_covariance_examples() {
        let bb = preset("bb").unwrap();
        assert!((process_covariance(&bb, &[0.25], &[0.5]).unwrap() - 0.125).abs() < 1e-15);
        assert!(process_covariance(&bb, &[1.0], &[1.0]).unwrap().abs() < 1e-10);
        let tk = preset("fbm-takenaka").unwrap();
        let r = process_covariance(&tk, &[2.0], &[2.0]).unwrap() / process_covariance(&tk, &[1.0], &[1.0]).unwrap();
        assert!(rel(r, 2f64.sqrt()) < 1e-12);
        let bm = preset("bm").unwrap();
        assert!((process_covariance(&bm, &[1.0], &[2.0]).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn bridge_property_endpoint() {
        for base in [MeasureFamily::BrownianMotion, preset("fbm-wb").unwrap(), preset("ou").unwrap()] {
            let fam = MeasureFamily::GeneralizedBridge {
                base: Box::new(base),
                a: ConditioningMeasure::endpoint(1.0),
                f: BridgeWeight::Linear,
            };
            let v = process_covariance(&fam, &[1.0], &[1.0]).unwrap();
            assert!(v.abs() < 1e-10, "{v}");
        }
    }

    #[test]
    fn zero_area_covariance_integrates_to_zero() {
        let fam = preset("zero-area-bb").unwrap();
        for i in 0..20 {
            let t = (i as f64 + 0.5) / 20.0;
            // Cov(·, t) is piecewise polynomial with a kink at t.
            let f = |s: f64| process_covariance(&fam, &[s], &[t]).unwrap();
            let v = quadrature::integrate(f, 0.0, 1.0, &[Singular::breakpoint(t)], f64::INFINITY, Tolerance::rel(1e-10).with_abs(1e-12))
                .unwrap();
            assert!(v.abs() < 1e-6, "t={t}: {v}");
        }
        // Oracle for the variance: Var = t(1-t) - 3t²(1-t)² from the
        // conditioning formula applied to the Brownian bridge.
        let t = 0.3;
        let exact = t * (1.0 - t) - 3.0 * t * t * (1.0 - t) * (1.0 - t);
        assert!(rel(process_covariance(&fam, &[t], &[t]).unwrap(), exact) < 1e-9);
    }

    #[test]
    fn fbm_scaling_for_all_variants() {
        let fams = [
            MeasureFamily::TakenakaFbm { h: 0.3, d: 1 },
            MeasureFamily::TakenakaFbm { h: 0.2, d: 2 },
            MeasureFamily::RieszFbm { h: 0.75, m: 1.0, d: 1 },
            MeasureFamily::RieszFbm { h: 0.5, m: 1.0, d: 1 },
            MeasureFamily::RieszFbm { h: 0.6, m: 0.7, d: 2 },
            MeasureFamily::WellBalancedFbm { h: 0.25, d: 1 },
            MeasureFamily::MandelbrotVanNess { h: 0.35 },
        ];
        for fam in &fams {
            let h = fam.hurst().unwrap();
            let d = fam.dim();
            let (s, t) = if d == 1 { (vec![0.7], vec![1.3]) } else { (vec![0.7, 0.2], vec![-0.4, 1.1]) };
            let base = process_covariance(fam, &s, &t).unwrap();
            for c in [0.5, 2.0] {
                let cs: Vec<f64> = s.iter().map(|v| c * v).collect();
                let ct: Vec<f64> = t.iter().map(|v| c * v).collect();
                let v = process_covariance(fam, &cs, &ct).unwrap();
                assert!(rel(v, c.powf(2.0 * h) * base) < 1e-7, "{fam:?} c={c}: {v} vs {}", c.powf(2.0 * h) * base);
            }
        }
    }

    #[test]
    fn takenaka_and_well_balanced_are_proportional() {
        let tk = MeasureFamily::TakenakaFbm { h: 0.25, d: 1 };
        let wb = MeasureFamily::WellBalancedFbm { h: 0.25, d: 1 };
        let grid: Vec<f64> = (1..=6).map(|i| i as f64 / 3.0).collect();
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for &s in &grid {
            for &t in &grid {
                a.push(process_covariance(&wb, &[s], &[t]).unwrap());
                b.push(process_covariance(&tk, &[s], &[t]).unwrap());
            }
        }
        let c = fit_constant(&a, &b);
        for (x, y) in a.iter().zip(&b) {
            assert!(rel(*x, c * y) < 1e-4);
        }
    }

    #[test]
    fn mvn_matches_well_balanced_shape() {
        let fam = preset("fbm-mvn").unwrap();
        let cal = calibrate(&fam).unwrap();
        for (s, t) in [(0.3, 0.9), (1.7, 0.2), (1.0, 1.0)] {
            let v = process_covariance(&fam, &[s], &[t]).unwrap();
            assert!(rel(v, cal.constant * fbm_shape(0.25, &[s], &[t])) < 1e-6);
        }
    }

    #[test]
    fn preset_emissions_are_members() {
        for name in PRESET_NAMES {
            let fam = preset(name).unwrap();
            for t in [0.25, 0.5, 0.75] {
                let m = fam.measure(&[t]).unwrap();
                let report = check_membership(&m, fam.declared_order());
                assert!(report.member, "{name} at {t}: {:?}", report.failures);
            }
        }
        assert!(matches!(preset("nope"), Err(Error::UnknownPreset(_))));
    }

    #[test]
    fn preset_json_round_trip() {
        for name in PRESET_NAMES {
            let fam = preset(name).unwrap();
            let s = serde_json::to_string(&fam).unwrap();
            let back: MeasureFamily = serde_json::from_str(&s).unwrap();
            let p = process_covariance(&fam, &[0.4], &[0.6]).unwrap();
            let q = process_covariance(&back, &[0.4], &[0.6]).unwrap();
            assert_eq!(p, q, "{name}");
        }
        assert!(serde_json::to_string(&preset("fbm-takenaka").unwrap()).unwrap().contains(r#""H":0.25"#));
    }

    #[test]
    fn preset_constants_cached() {
        let a = preset_constant("fbm-takenaka").unwrap().unwrap();
        assert!((a - 1.0).abs() < 1e-12);
        assert_eq!(preset_constant("fbm-takenaka").unwrap(), Some(a));
        assert_eq!(preset_constant("bb").unwrap(), None);
        let riesz = preset_constant("fbm-riesz").unwrap().unwrap();
        // ∫∫_{[0,s]×[0,t]} |y-y'|^{2H-2} = shape / ((2H-1) 2H)
        assert!(rel(riesz, 1.0 / (0.5 * 1.5)) < 1e-8);
    }
}
