//! Covariance functionals `C(μ, μ') = ∫∫ k(y - y') μ(dy) μ'(dy')`, the
//! ball-intersection volume and the shot-noise kernel `K_h`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use statrs::function::beta::{beta, beta_reg};

use crate::error::{Error, Result};
use crate::measures::{unit_ball_volume, SignedMeasure, MOMENT_ZERO_TOL};
use crate::pairing::{self, Radial};
use crate::quadrature::{self, Singular, Tolerance};

/// Relative tolerance of quadrature inside covariance functionals.
pub const COVARIANCE_REL_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum KernelVariant {
    /// `|y - y'|^{2H}` on ℝ^d.
    PowerLaw {
        #[serde(rename = "H")]
        h: f64,
        d: usize,
    },
    /// `-ln|y - y'|` on ℝ^2.
    Log { d: usize },
    /// `Π_i |y_i - y'_i|^{e_i}` over coordinate blocks of sizes `dims`.
    Product { dims: Vec<usize>, exponents: Vec<f64> },
}

/// Kernel plus an optional explicit constant (`None` = unnormalized).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    #[serde(flatten)]
    pub variant: KernelVariant,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<f64>,
}

impl KernelSpec {
    pub fn power_law(h: f64, d: usize) -> Result<Self> {
        let k = KernelSpec { variant: KernelVariant::PowerLaw { h, d }, normalization: None };
        k.validate()?;
        Ok(k)
    }

    pub fn log() -> Self {
        KernelSpec { variant: KernelVariant::Log { d: 2 }, normalization: None }
    }

    pub fn product(dims: Vec<usize>, exponents: Vec<f64>) -> Result<Self> {
        let k = KernelSpec { variant: KernelVariant::Product { dims, exponents }, normalization: None };
        k.validate()?;
        Ok(k)
    }

    pub fn with_normalization(mut self, c: f64) -> Self {
        self.normalization = Some(c);
        self
    }

    pub fn dim(&self) -> usize {
        match &self.variant {
            KernelVariant::PowerLaw { d, .. } | KernelVariant::Log { d } => *d,
            KernelVariant::Product { dims, .. } => dims.iter().sum(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(c) = self.normalization {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::ParameterOutOfRange(format!("normalization {c} must be positive")));
            }
        }
        match &self.variant {
            KernelVariant::PowerLaw { h, d } => {
                let two_h = 2.0 * h;
                if *d == 0 || !(two_h > -(*d as f64) && two_h < 2.0) || two_h == 0.0 {
                    return Err(Error::ParameterOutOfRange(format!("2H={two_h} outside (-{d}, 2)\\{{0}}")));
                }
            }
            KernelVariant::Log { d } => {
                if *d != 2 {
                    return Err(Error::ParameterOutOfRange(format!("log kernel needs d=2, got {d}")));
                }
            }
            KernelVariant::Product { dims, exponents } => {
                if dims.is_empty() || dims.len() != exponents.len() {
                    return Err(Error::ParameterOutOfRange("product blocks and exponents differ".into()));
                }
                for (&di, &e) in dims.iter().zip(exponents) {
                    let ok = di > 0 && ((e > -(di as f64) && e < 0.0) || (e > 0.0 && e < 1.0));
                    if !ok {
                        return Err(Error::ParameterOutOfRange(format!(
                            "block exponent {e} outside (-{di},0)∪(0,1)"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    fn scale(&self) -> f64 {
        self.normalization.unwrap_or(1.0)
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.variant {
            KernelVariant::PowerLaw { h, d } => write!(f, "|y-y'|^{} on R^{d}", 2.0 * h),
            KernelVariant::Log { .. } => write!(f, "-log|y-y'| on R^2"),
            KernelVariant::Product { dims, exponents } => write!(f, "product {dims:?} {exponents:?}"),
        }
    }
}

/// Volume of `B(0,1) ∩ B(u e, 1)` in ℝ^d.
///
/// `2 v_{d-1} ∫_{u/2}^1 (1-s²)^{(d-1)/2} ds`, evaluated through the
/// regularized incomplete beta function after `s² = x`.
pub fn ball_intersection_volume(u: f64, d: usize) -> f64 {
    if u >= 2.0 {
        return 0.0;
    }
    let u = u.max(0.0);
    if d == 1 {
        return 2.0 - u;
    }
    let b = (d as f64 + 1.0) / 2.0;
    let tail = 1.0 - beta_reg(0.5, b, u * u / 4.0);
    unit_ball_volume(d - 1) * beta(0.5, b) * tail
}

fn check_zero_mass(mu: &SignedMeasure, what: &str) -> Result<()> {
    let m = mu.total_mass()?;
    if m.abs() > MOMENT_ZERO_TOL {
        return Err(Error::PreconditionViolation(format!("{what}: measure has mass {m:e}, needs ℳ_1")));
    }
    Ok(())
}

fn precondition(e: Error) -> Error {
    match e {
        Error::EnergyDivergent(m) => Error::PreconditionViolation(m),
        other => other,
    }
}

/// `C(μ, μ')` for power-law and logarithmic kernels.
pub fn covariance_functional(k: &KernelSpec, mu: &SignedMeasure, nu: &SignedMeasure) -> Result<f64> {
    k.validate()?;
    let d = k.dim();
    for m in [mu, nu] {
        if m.dim != d {
            return Err(Error::DimensionMismatch { expected: d, found: m.dim });
        }
    }
    let radial = match &k.variant {
        KernelVariant::PowerLaw { h, .. } => {
            if *h > 0.0 {
                check_zero_mass(mu, "power-law kernel with 2H > 0")?;
                check_zero_mass(nu, "power-law kernel with 2H > 0")?;
            }
            Radial::Power(2.0 * h)
        }
        KernelVariant::Log { .. } => {
            check_zero_mass(mu, "log kernel")?;
            check_zero_mass(nu, "log kernel")?;
            Radial::NegLog
        }
        KernelVariant::Product { .. } => return Err(Error::NonProductMeasure),
    };
    let v = pairing::pair(radial, mu, nu, false, Tolerance::rel(COVARIANCE_REL_TOL)).map_err(precondition)?;
    Ok(k.scale() * v)
}

/// `-C(δ_s - δ_0, δ_t - δ_0) = |s|^{2H} + |t|^{2H} - |s - t|^{2H}`,
/// twice the fractional Brownian covariance.
pub fn fbm_from_powerlaw(k: &KernelSpec, s: &[f64], t: &[f64]) -> Result<f64> {
    let h = match k.variant {
        KernelVariant::PowerLaw { h, .. } if h > 0.0 && h < 1.0 => h,
        _ => return Err(Error::ParameterOutOfRange("fbm_from_powerlaw needs a power law with 0<H<1".into())),
    };
    let c = covariance_functional(k, &SignedMeasure::increment(s), &SignedMeasure::increment(t))?;
    let norm = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let diff: Vec<f64> = s.iter().zip(t).map(|(a, b)| a - b).collect();
    let closed = k.scale() * (norm(s).powf(2.0 * h) + norm(t).powf(2.0 * h) - norm(&diff).powf(2.0 * h));
    if (-c - closed).abs() > 1e-12 * closed.abs().max(1.0) {
        return Err(Error::PreconditionViolation(format!("atom algebra mismatch: {} vs {closed}", -c)));
    }
    Ok(-c)
}

/// Measure given as a product over the coordinate blocks of a product kernel.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProductMeasure {
    pub blocks: Vec<SignedMeasure>,
}

impl ProductMeasure {
    /// `Leb[0, t_1] ⊗ ... ⊗ Leb[0, t_p]` with one-dimensional blocks.
    pub fn rectangle(t: &[f64]) -> Self {
        ProductMeasure {
            blocks: t
                .iter()
                .map(|&ti| if ti == 0.0 { SignedMeasure::zero(1) } else { SignedMeasure::lebesgue_1d(0.0, ti, 1.0) })
                .collect(),
        }
    }
}

/// `Π_i ∫∫ |y_i - y'_i|^{e_i} μ_i(dy_i) μ'_i(dy'_i)`.
pub fn product_covariance(k: &KernelSpec, mu: &ProductMeasure, nu: &ProductMeasure) -> Result<f64> {
    k.validate()?;
    let KernelVariant::Product { dims, exponents } = &k.variant else {
        return Err(Error::ParameterOutOfRange("product_covariance needs a product kernel".into()));
    };
    if mu.blocks.len() != dims.len() || nu.blocks.len() != dims.len() {
        return Err(Error::NonProductMeasure);
    }
    let mut v = k.scale();
    for ((&di, &e), (a, b)) in dims.iter().zip(exponents).zip(mu.blocks.iter().zip(&nu.blocks)) {
        if a.dim != di || b.dim != di {
            return Err(Error::NonProductMeasure);
        }
        if a.is_zero() || b.is_zero() {
            return Ok(0.0);
        }
        v *= pairing::pair(Radial::Power(e), a, b, false, Tolerance::rel(COVARIANCE_REL_TOL)).map_err(precondition)?;
    }
    Ok(v)
}

/// `|t|^{3-β} + |s|^{3-β} - |t - s|^{3-β}`, the block shape for
/// `Leb[0,t] × Leb[0,s]` under the exponent `1 - β`.
pub fn product_block_shape(t: f64, s: f64, beta: f64) -> f64 {
    let p = 3.0 - beta;
    t.abs().powf(p) + s.abs().powf(p) - (t - s).abs().powf(p)
}

/// Least-squares scalar `c` minimising `Σ (computed_i - c·reference_i)²`.
pub fn fit_constant(computed: &[f64], reference: &[f64]) -> f64 {
    let num: f64 = computed.iter().zip(reference).map(|(a, b)| a * b).sum();
    let den: f64 = reference.iter().map(|b| b * b).sum();
    if den == 0.0 {
        return 0.0;
    }
    num / den
}

/// Radial profile supplied by the caller, `h(x) = profile(|x|)`.
#[derive(Clone)]
pub struct UserPulse {
    pub label: String,
    pub profile: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub support_radius: f64,
}

impl fmt::Debug for UserPulse {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "UserPulse({}, R={})", self.label, self.support_radius)
    }
}

/// Pulse functions of the shot-noise construction.
#[derive(Clone, Debug)]
pub enum Pulse {
    BallIndicator,
    /// `exp(-|x|² / (2σ²))`.
    RadialGaussian { scale: f64 },
    /// `|x|^{-β/2}`.
    Singular { beta: f64 },
    /// `x_+^{-β/2}` on the line.
    OneSided { beta: f64 },
    UserRadial(UserPulse),
}

impl Pulse {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        match self {
            Pulse::BallIndicator => {
                if r < 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Pulse::RadialGaussian { scale } => (-r * r / (2.0 * scale * scale)).exp(),
            Pulse::Singular { beta } => r.powf(-beta / 2.0),
            Pulse::OneSided { beta } => {
                if x[0] > 0.0 {
                    x[0].powf(-beta / 2.0)
                } else {
                    0.0
                }
            }
            Pulse::UserRadial(u) => {
                if r <= u.support_radius {
                    (u.profile)(r)
                } else {
                    0.0
                }
            }
        }
    }

    pub fn is_radial(&self) -> bool {
        !matches!(self, Pulse::OneSided { .. })
    }

    /// Radius outside which the pulse vanishes (infinite if it does not).
    pub fn support_radius(&self) -> f64 {
        match self {
            Pulse::BallIndicator => 1.0,
            Pulse::UserRadial(u) => u.support_radius,
            _ => f64::INFINITY,
        }
    }

    /// `V_h(0) - V_h(y)` without the cancellation of subtracting two values.
    pub fn autocorrelation_drop(&self, y: &[f64]) -> Result<f64> {
        let d = y.len();
        let r = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        match self {
            Pulse::BallIndicator if d > 1 && r < 2.0 => {
                let b = (d as f64 + 1.0) / 2.0;
                Ok(unit_ball_volume(d - 1) * beta(0.5, b) * beta_reg(0.5, b, r * r / 4.0))
            }
            Pulse::BallIndicator => Ok(ball_intersection_volume(0.0, d) - ball_intersection_volume(r, d)),
            Pulse::RadialGaussian { scale } => {
                let s2 = scale * scale;
                Ok(-(std::f64::consts::PI * s2).powf(d as f64 / 2.0) * (-r * r / (4.0 * s2)).exp_m1())
            }
            _ => Ok(self.autocorrelation(&vec![0.0; d])? - self.autocorrelation(y)?),
        }
    }

    /// Autocorrelation `V_h(y) = ∫ h(x) h(x + y) dx` for radial pulses.
    pub fn autocorrelation(&self, y: &[f64]) -> Result<f64> {
        let d = y.len();
        let r = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        match self {
            Pulse::BallIndicator => Ok(ball_intersection_volume(r, d)),
            Pulse::RadialGaussian { scale } => {
                let s2 = scale * scale;
                Ok((std::f64::consts::PI * s2).powf(d as f64 / 2.0) * (-r * r / (4.0 * s2)).exp())
            }
            Pulse::UserRadial(u) if d == 1 => {
                let rad = u.support_radius;
                let f = |x: f64| self.eval(&[x]) * self.eval(&[x + r]);
                let sing = [Singular::breakpoint(rad - r), Singular::breakpoint(-rad - r)];
                quadrature::integrate(f, -rad, rad, &sing, f64::INFINITY, Tolerance::rel(1e-12))
            }
            Pulse::UserRadial(_) => Err(Error::DimensionUnsupported("user pulse autocorrelation needs d=1".into())),
            Pulse::Singular { .. } | Pulse::OneSided { .. } => Err(Error::NotSquareIntegrable(
                "singular pulses only enter through the Riesz-driven constructions".into(),
            )),
        }
    }
}

/// Which admissible range a shot-noise exponent falls in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShotRange {
    /// `d < β < 2d`: kernel `∫ r^{β-d-1} V_h(r e) dr`.
    Large,
    /// `d-1 < β < d`: increment form `∫ r^{β-d-1} (V_h(r e) - V_h(0)) dr`.
    Small,
}

pub fn shot_range(beta: f64, d: usize) -> Result<ShotRange> {
    let d = d as f64;
    if beta > d && beta < 2.0 * d {
        Ok(ShotRange::Large)
    } else if beta > d - 1.0 && beta < d {
        Ok(ShotRange::Small)
    } else {
        Err(Error::ParameterOutOfRange(format!("β={beta} outside (d-1,d)∪(d,2d) for d={d}")))
    }
}

/// Shot-noise kernel `K_h(e)` with `C_h = 1`, after `u = 1/r`.
pub fn kernel_kh(h: &Pulse, beta: f64, d: usize, e: &[f64]) -> Result<f64> {
    if e.len() != d {
        return Err(Error::DimensionMismatch { expected: d, found: e.len() });
    }
    let norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::ParameterOutOfRange(format!("direction has norm {norm}")));
    }
    let range = shot_range(beta, d)?;
    let w = |r: f64| -> f64 {
        let y: Vec<f64> = e.iter().map(|c| c * r).collect();
        match range {
            ShotRange::Large => h.autocorrelation(&y),
            ShotRange::Small => h.autocorrelation_drop(&y).map(|v| -v),
        }
        .unwrap_or(f64::NAN)
    };
    let g = |r: f64| if r == 0.0 { 0.0 } else { r.powf(beta - d as f64 - 1.0) * w(r) };
    // Probe the ℋ_β bounds: r·g(r) must shrink toward both ends.
    let probe = |r: f64| (r * g(r)).abs();
    let (small, small2) = (probe(1e-8), probe(1e-4));
    let (large, large2) = (probe(1e8), probe(1e4));
    if !(small.is_finite() && large.is_finite()) || small > small2 * (1.0 + 1e-9) || large > large2 * (1.0 + 1e-9) {
        return Err(Error::DivergentKernel(format!(
            "integrand does not decay: r·g(r) = {small:e} at 1e-8, {large:e} at 1e8"
        )));
    }
    let gamma0 = match range {
        ShotRange::Large => -(beta - d as f64 - 1.0),
        ShotRange::Small => -(beta - d as f64),
    };
    let rad = 2.0 * h.support_radius();
    let mut sing = vec![Singular::new(0.0, gamma0.max(0.0))];
    if rad.is_finite() {
        sing.push(Singular::breakpoint(rad));
    }
    let decay = match range {
        ShotRange::Large if rad.is_finite() => f64::INFINITY,
        ShotRange::Large => f64::INFINITY,
        ShotRange::Small => d as f64 + 1.0 - beta,
    };
    let hi = match range {
        ShotRange::Large if rad.is_finite() => rad,
        _ => f64::INFINITY,
    };
    quadrature::integrate(g, 0.0, hi, &sing, decay, Tolerance::rel(1e-11))
}

/// `∫_0^∞ u^d V(r/u) u^{-β-1} du` for the ball pulse (first range).
pub fn random_balls_profile(r: f64, d: usize, beta: f64) -> Result<f64> {
    if shot_range(beta, d)? != ShotRange::Large {
        return Err(Error::ParameterOutOfRange("random-balls profile needs d<β<2d".into()));
    }
    let f = |u: f64| if u == 0.0 { 0.0 } else { u.powf(d as f64 - beta - 1.0) * ball_intersection_volume(r / u, d) };
    // Ball overlap vanishes for u < r/2; the tail decays like u^{d-β-1}.
    quadrature::integrate(f, r / 2.0, f64::INFINITY, &[Singular::breakpoint(r / 2.0)], beta - d as f64 + 1.0, Tolerance::rel(1e-12))
}
