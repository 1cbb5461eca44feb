//! Closed-form comparators: Wright's generalized Bessel function, the
//! Muttalib–Borodin hard-edge (Laguerre) and Hermite limit kernels, the sine
//! and Bessel kernels, and the semicircle and Marchenko–Pastur densities.
//!
//! Series are summed in extended precision chosen from the size of the
//! largest term, so that cancellation in alternating sums is absorbed.

use std::f64::consts::PI;

use rug::Float;
use thiserror::Error;

use crate::kernel::{KernelError, TwoPointKernel};
use crate::precision::Precision;
use crate::quadrature::{integrate_with, Domain, QuadError, QuadOptions};
use crate::stats::{DensityCurve, Normalization, StatsError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReferenceError {
    #[error("invalid reference parameters: {0}")]
    Invalid(String),
    #[error("series for J_{{{a},{b}}}({x}) did not settle within {max_terms} terms")]
    Series {
        a: f64,
        b: f64,
        x: f64,
        max_terms: usize,
    },
    #[error(transparent)]
    Quadrature(#[from] QuadError),
    #[error("double-sum and integral forms disagree at ({x}, {y}): {series} vs {integral}")]
    Disagreement {
        x: f64,
        y: f64,
        series: f64,
        integral: f64,
    },
}

impl From<ReferenceError> for KernelError {
    fn from(e: ReferenceError) -> Self {
        KernelError::Other(e.to_string())
    }
}

/// Truncation control for the series.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeriesPolicy {
    /// Absolute size below which a decreasing term ends a series; also the
    /// tolerance of the integral representation.
    pub tol: f64,
    pub max_terms: usize,
}

impl Default for SeriesPolicy {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_terms: 4000,
        }
    }
}

/// Series terms are carried well past the policy tolerance.
const SERIES_TOL: f64 = 1e-24;

fn ln_abs_gamma(x: f64) -> f64 {
    Float::with_val(64, x).ln_abs_gamma().0.to_f64()
}

/// `1/Γ(z)`, zero at the poles.
fn recip_gamma(z: &Float) -> Float {
    if z.is_integer() && *z <= 0 {
        return Float::with_val(z.prec(), 0u32);
    }
    Float::with_val(z.prec(), z.gamma_ref()).recip()
}

/// Coefficients `c_m = 1/(m! Γ(a + b m))` of `J_{a,b}(z) = Σ c_m (−z)^m`,
/// truncated for arguments up to `z_max`.
#[derive(Clone, Debug)]
struct WrightSeries {
    coefs: Vec<Float>,
    bits: u32,
}

impl WrightSeries {
    fn new(a: f64, b: f64, z_max: f64, max_terms: usize) -> Result<Self, ReferenceError> {
        if !(b > 0.0 && a.is_finite() && z_max >= 0.0 && z_max.is_finite()) {
            return Err(ReferenceError::Invalid(format!(
                "Wright parameters a = {a}, b = {b}, x = {z_max}"
            )));
        }
        // ln of the term magnitudes at z_max, to size the working precision
        // and the truncation point.
        let ln_z = if z_max > 0.0 {
            z_max.ln()
        } else {
            f64::NEG_INFINITY
        };
        let ln_term = |m: usize| {
            let mf = m as f64;
            let g = a + b * mf;
            let ln_g = if g <= 0.0 && g.fract() == 0.0 {
                f64::INFINITY
            } else {
                ln_abs_gamma(g)
            };
            let zm = if m == 0 { 0.0 } else { mf * ln_z };
            zm - ln_abs_gamma(mf + 1.0) - ln_g
        };
        let ln_tol = SERIES_TOL.ln();
        let mut peak = f64::NEG_INFINITY;
        let mut count = None;
        let mut prev = f64::INFINITY;
        for m in 0..max_terms {
            let t = ln_term(m);
            peak = peak.max(t);
            // Stop once terms decrease and are negligible; the gamma
            // function grows monotonically beyond this point.
            if m > 2 && t < ln_tol && t <= prev && a + b * m as f64 > 2.0 {
                count = Some(m + 1);
                break;
            }
            prev = t;
        }
        let count = count.ok_or(ReferenceError::Series {
            a,
            b,
            x: z_max,
            max_terms,
        })?;
        let extra = (peak.max(0.0) / std::f64::consts::LN_2).ceil() as u32;
        let bits = Precision::digits(30).bits() + extra;
        let mut coefs = Vec::with_capacity(count);
        let mut factorial = Float::with_val(bits, 1u32);
        let fa = Float::with_val(bits, a);
        let fb = Float::with_val(bits, b);
        for m in 0..count {
            if m > 0 {
                factorial *= m as u32;
            }
            let g = Float::with_val(bits, &fb * m as u32) + &fa;
            coefs.push(recip_gamma(&g) / &factorial);
        }
        Ok(Self { coefs, bits })
    }

    /// `Σ c_m (−z)^m` by Horner's rule.
    fn eval(&self, z: &Float) -> Float {
        let mz = Float::with_val(self.bits, -z);
        let mut acc = Float::with_val(self.bits, 0u32);
        for c in self.coefs.iter().rev() {
            acc *= &mz;
            acc += c;
        }
        acc
    }

    /// Terms `c_m (−z)^m`.
    fn terms(&self, z: f64) -> Vec<Float> {
        let mz = Float::with_val(self.bits, -z);
        let mut p = Float::with_val(self.bits, 1u32);
        self.coefs
            .iter()
            .map(|c| {
                let t = Float::with_val(self.bits, c * &p);
                p *= &mz;
                t
            })
            .collect()
    }
}

/// Wright's generalized Bessel function `J_{a,b}(x) = Σ_m (−x)^m / (m! Γ(a + b m))`.
pub fn wright_bessel(a: f64, b: f64, x: f64, policy: SeriesPolicy) -> Result<f64, ReferenceError> {
    if !(a > 0.0 && b > 0.0 && x >= 0.0) {
        return Err(ReferenceError::Invalid(format!(
            "wright_bessel needs a, b > 0 and x ≥ 0 (got {a}, {b}, {x})"
        )));
    }
    let series = WrightSeries::new(a, b, x, policy.max_terms)?;
    Ok(series.eval(&Float::with_val(series.bits, x)).to_f64())
}

fn check_limit_params(alpha: f64, theta: f64, x: f64, y: f64) -> Result<(), ReferenceError> {
    if !(alpha > -1.0 && theta > 0.0 && x >= 0.0 && y >= 0.0 && x.is_finite() && y.is_finite()) {
        return Err(ReferenceError::Invalid(format!(
            "limit kernel needs α > −1, θ > 0 and x, y ≥ 0 (got α = {alpha}, θ = {theta}, x = {x}, y = {y})"
        )));
    }
    Ok(())
}

/// Double-sum form of the hard-edge limit kernel,
/// `θ Σ_{k,l} (−1)^{k+l} x^k y^{θl} / (k! Γ((α+1+k)/θ) l! Γ(α+1+θl) (α+1+k+θl))`.
pub fn laguerre_limit_kernel_series(
    alpha: f64,
    theta: f64,
    x: f64,
    y: f64,
    policy: SeriesPolicy,
) -> Result<f64, ReferenceError> {
    check_limit_params(alpha, theta, x, y)?;
    let yt = y.powf(theta);
    let left = WrightSeries::new((alpha + 1.0) / theta, 1.0 / theta, x, policy.max_terms)?;
    let right = WrightSeries::new(alpha + 1.0, theta, yt, policy.max_terms)?;
    let bits = left.bits.max(right.bits) + 32;
    let a = left.terms(x);
    let b = right.terms(yt);
    let mut sum = Float::with_val(bits, 0u32);
    for (k, ak) in a.iter().enumerate() {
        for (l, bl) in b.iter().enumerate() {
            let denom = Float::with_val(bits, alpha + 1.0 + k as f64)
                + Float::with_val(bits, theta) * l as u32;
            sum += Float::with_val(bits, ak * bl) / denom;
        }
    }
    Ok((sum * theta).to_f64())
}

/// Integral form of the hard-edge limit kernel,
/// `θ ∫_0^1 J_{(α+1)/θ, 1/θ}(x t) J_{α+1, θ}((y t)^θ) t^α dt`.
pub fn laguerre_limit_kernel_integral(
    alpha: f64,
    theta: f64,
    x: f64,
    y: f64,
    policy: SeriesPolicy,
) -> Result<f64, ReferenceError> {
    check_limit_params(alpha, theta, x, y)?;
    let left = WrightSeries::new((alpha + 1.0) / theta, 1.0 / theta, x, policy.max_terms)?;
    let right = WrightSeries::new(alpha + 1.0, theta, y.powf(theta), policy.max_terms)?;
    let bits = left.bits.max(right.bits);
    let precision = Precision::digits(30);
    let fx = Float::with_val(bits, x);
    let fy = Float::with_val(bits, y);
    let ftheta = Float::with_val(bits, theta);
    let falpha = Float::with_val(bits, alpha);
    let options = QuadOptions {
        singular_endpoints: alpha.fract() != 0.0 || theta.fract() != 0.0,
        breakpoints: vec![],
    };
    let r = integrate_with(
        |t: &Float| {
            let t = Float::with_val(bits, t);
            if t.is_zero() {
                return Ok(Float::with_val(bits, 0u32));
            }
            let u = Float::with_val(bits, &fx * &t);
            let v = Float::with_val(bits, &fy * &t).pow_ref_float(&ftheta);
            let weight = Float::with_val(bits, t.ln_ref()) * &falpha;
            Ok(left.eval(&u) * right.eval(&v) * weight.exp())
        },
        Domain::new(0.0, 1.0)?,
        precision,
        policy.tol * 1e-2,
        &options,
    )?;
    Ok(r.value * theta)
}

trait PowFloat {
    fn pow_ref_float(self, e: &Float) -> Float;
}

impl PowFloat for Float {
    fn pow_ref_float(self, e: &Float) -> Float {
        if self.is_zero() {
            return self;
        }
        let l = Float::with_val(self.prec(), self.ln_ref());
        (l * e).exp()
    }
}

/// Hard-edge limit kernel `K_L^{(α,θ)}(x, y)` from its integral form,
/// cross-checked against the double sum.
pub fn laguerre_limit_kernel(
    alpha: f64,
    theta: f64,
    x: f64,
    y: f64,
    policy: SeriesPolicy,
) -> Result<f64, ReferenceError> {
    let integral = laguerre_limit_kernel_integral(alpha, theta, x, y, policy)?;
    let series = laguerre_limit_kernel_series(alpha, theta, x, y, policy)?;
    let combined = policy.tol * integral.abs().max(1.0);
    if (integral - series).abs() > combined {
        return Err(ReferenceError::Disagreement {
            x,
            y,
            series,
            integral,
        });
    }
    Ok(integral)
}

/// `x^θ` extended to negative `x` for odd integer θ.
fn signed_power(x: f64, theta: f64) -> Result<f64, ReferenceError> {
    if x >= 0.0 {
        return Ok(x.powf(theta));
    }
    if theta.fract() == 0.0 && (theta as i64) % 2 != 0 {
        return Ok(-(-x).powf(theta));
    }
    Err(ReferenceError::Invalid(format!(
        "x^θ with x = {x} < 0 needs an odd integer θ (got {theta})"
    )))
}

/// Hermite limit kernel
/// `K_H^{(α,θ)}(x, y) = K_L^{((α−1)/2,θ)}(x², y²) + x^θ y K_L^{((α+θ)/2,θ)}(x², y²)`.
pub fn hermite_limit_kernel(
    alpha: f64,
    theta: f64,
    x: f64,
    y: f64,
    policy: SeriesPolicy,
) -> Result<f64, ReferenceError> {
    let (x2, y2) = (x * x, y * y);
    let even = laguerre_limit_kernel(0.5 * (alpha - 1.0), theta, x2, y2, policy)?;
    let odd = laguerre_limit_kernel(0.5 * (alpha + theta), theta, x2, y2, policy)?;
    Ok(even + signed_power(x, theta)? * y * odd)
}

/// `sin(π(x − y)) / (π(x − y))`, one on the diagonal.
pub fn sine_kernel(x: f64, y: f64) -> f64 {
    let d = PI * (x - y);
    if d.abs() < 1e-8 {
        1.0 - d * d / 6.0
    } else {
        d.sin() / d
    }
}

/// `J_ν(z)` for real order ν > −2 and z ≥ 0: integer orders through MPFR,
/// others through `J_ν(2√w) = w^{ν/2} J_{ν+1,1}(w)`.
fn bessel_j(nu: f64, z: f64) -> Result<f64, ReferenceError> {
    if nu.fract() == 0.0 && nu.abs() < 1e6 {
        return Ok(Float::with_val(128, z).jn(nu as i32).to_f64());
    }
    if z == 0.0 {
        return Ok(if nu > 0.0 { 0.0 } else { f64::INFINITY });
    }
    let w = 0.25 * z * z;
    let series = WrightSeries::new(nu + 1.0, 1.0, w, SeriesPolicy::default().max_terms)?;
    let v = series.eval(&Float::with_val(series.bits, w)).to_f64();
    Ok(w.powf(0.5 * nu) * v)
}

/// Hard-edge Bessel kernel
/// `[J_α(√x) √y J_α'(√y) − √x J_α'(√x) J_α(√y)] / (2(x − y))`,
/// with diagonal `¼ [J_α(√x)² − J_{α+1}(√x) J_{α−1}(√x)]`.
pub fn bessel_kernel(alpha: f64, x: f64, y: f64) -> Result<f64, ReferenceError> {
    if !(alpha > -1.0 && x >= 0.0 && y >= 0.0) {
        return Err(ReferenceError::Invalid(format!(
            "Bessel kernel needs α > −1 and x, y ≥ 0 (got {alpha}, {x}, {y})"
        )));
    }
    let (sx, sy) = (x.sqrt(), y.sqrt());
    let j = |z: f64| bessel_j(alpha, z);
    let jd = |z: f64| -> Result<f64, ReferenceError> {
        Ok(0.5 * (bessel_j(alpha - 1.0, z)? - bessel_j(alpha + 1.0, z)?))
    };
    if (x - y).abs() <= 1e-12 * x.max(y).max(1.0) {
        let jx = j(sx)?;
        return Ok(0.25 * (jx * jx - bessel_j(alpha + 1.0, sx)? * bessel_j(alpha - 1.0, sx)?));
    }
    Ok((j(sx)? * sy * jd(sy)? - sx * jd(sx)? * j(sy)?) / (2.0 * (x - y)))
}

/// The sine kernel as a [`TwoPointKernel`].
#[derive(Clone, Copy, Debug, Default)]
pub struct SineKernel;

impl TwoPointKernel for SineKernel {
    fn eval(&self, x: f64, y: f64) -> Result<f64, KernelError> {
        Ok(sine_kernel(x, y))
    }

    fn is_symmetric(&self) -> bool {
        true
    }
}

/// The hard-edge limit kernel as a [`TwoPointKernel`].
#[derive(Clone, Copy, Debug)]
pub struct LaguerreLimitKernel {
    pub alpha: f64,
    pub theta: f64,
    pub policy: SeriesPolicy,
}

impl TwoPointKernel for LaguerreLimitKernel {
    fn eval(&self, x: f64, y: f64) -> Result<f64, KernelError> {
        Ok(laguerre_limit_kernel(
            self.alpha,
            self.theta,
            x,
            y,
            self.policy,
        )?)
    }

    fn is_symmetric(&self) -> bool {
        self.theta == 1.0
    }
}

/// Closed-form global densities, normalized to one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ReferenceDensity {
    /// `2/(π R²) √(R² − x²)` on `[−R, R]`.
    Semicircle { radius: f64 },
    /// Marchenko–Pastur law with ratio `λ ∈ (0, 1]` and variance `σ²`, on
    /// `[σ²(1 − √λ)², σ²(1 + √λ)²]`.
    MarchenkoPastur { ratio: f64, variance: f64 },
}

impl ReferenceDensity {
    pub fn semicircle(radius: f64) -> Result<Self, ReferenceError> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(ReferenceError::Invalid(format!(
                "semicircle radius {radius} must be positive"
            )));
        }
        Ok(Self::Semicircle { radius })
    }

    pub fn marchenko_pastur(ratio: f64, variance: f64) -> Result<Self, ReferenceError> {
        if !(ratio > 0.0 && ratio <= 1.0 && variance > 0.0 && variance.is_finite()) {
            return Err(ReferenceError::Invalid(format!(
                "Marchenko–Pastur needs ratio in (0, 1] and variance > 0 (got {ratio}, {variance})"
            )));
        }
        Ok(Self::MarchenkoPastur { ratio, variance })
    }

    /// Semicircle with the same second moment `∫ x² ρ` as a unit-mass density.
    pub fn semicircle_matching(second_moment: f64) -> Result<Self, ReferenceError> {
        Self::semicircle(2.0 * second_moment.sqrt())
    }

    /// Square-case Marchenko–Pastur law with the same mean as a unit-mass density.
    pub fn marchenko_pastur_matching(mean: f64) -> Result<Self, ReferenceError> {
        Self::marchenko_pastur(1.0, mean)
    }

    pub fn support(&self) -> (f64, f64) {
        match *self {
            Self::Semicircle { radius } => (-radius, radius),
            Self::MarchenkoPastur { ratio, variance } => {
                let r = ratio.sqrt();
                (variance * (1.0 - r).powi(2), variance * (1.0 + r).powi(2))
            }
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let (a, b) = self.support();
        if x <= a || x >= b {
            return 0.0;
        }
        match *self {
            Self::Semicircle { radius } => {
                2.0 / (PI * radius * radius) * (radius * radius - x * x).sqrt()
            }
            Self::MarchenkoPastur { ratio, variance } => {
                ((b - x) * (x - a)).sqrt() / (2.0 * PI * variance * ratio * x)
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Semicircle { .. } => "semicircle",
            Self::MarchenkoPastur { .. } => "marchenko_pastur",
        }
    }

    pub fn curve(&self, grid: &[f64]) -> Result<DensityCurve, StatsError> {
        DensityCurve::new(
            grid.to_vec(),
            grid.iter().map(|&x| self.eval(x)).collect(),
            Normalization::Unit,
        )
    }

    /// The central `fraction` of the support.
    pub fn central(&self, fraction: f64) -> (f64, f64) {
        let (a, b) = self.support();
        let pad = 0.5 * (1.0 - fraction) * (b - a);
        (a + pad, b - pad)
    }
}
