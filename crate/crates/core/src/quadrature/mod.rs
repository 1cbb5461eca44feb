//! Extended-precision integration over finite, semi-infinite and infinite
//! intervals, and Gauss–Legendre rules for the Nyström method.
//!
//! Infinite ends are removed by rational substitutions
//! (`x = lo + t/(1-t)` on `[lo, ∞)`, `x = t/(1-t²)` on ℝ). Integrands with an
//! algebraic endpoint singularity additionally get a tanh-sinh substitution.
//! The transformed integral is computed by globally adaptive Gauss–Legendre
//! panels; each panel's error is the difference between its one-panel and
//! two-half-panel values.

mod adaptive;
mod gauss;

use rug::Float;
use thiserror::Error;

use crate::precision::Precision;

pub(crate) use adaptive::{integrate_batch, TolMode};
pub use gauss::{gauss_legendre, gauss_legendre_f64, QuadratureRule};

/// Hard cap on the number of panels in one adaptive integration.
pub const MAX_PANELS: usize = 1 << 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadError {
    #[error("invalid integration domain [{lo}, {hi}]")]
    InvalidDomain { lo: f64, hi: f64 },
    #[error("invalid quadrature argument: {0}")]
    Invalid(String),
    #[error("integrand is not finite at x = {x}")]
    NonFinite { x: f64 },
    #[error("integrand failed at x = {x}: {message}")]
    Integrand { x: f64, message: String },
    #[error(
        "no convergence within {panels} panels; worst subinterval [{lo:e}, {hi:e}] \
         with relative error {error:e}"
    )]
    Budget {
        panels: usize,
        lo: f64,
        hi: f64,
        error: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DomainKind {
    Finite,
    SemiInfinite,
    Infinite,
}

/// Integration interval with possibly infinite endpoints.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Domain {
    pub lo: f64,
    pub hi: f64,
}

impl Domain {
    pub fn new(lo: f64, hi: f64) -> Result<Self, QuadError> {
        if lo.is_nan()
            || hi.is_nan()
            || !(lo < hi)
            || lo == f64::INFINITY
            || hi == f64::NEG_INFINITY
        {
            return Err(QuadError::InvalidDomain { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    pub fn kind(&self) -> DomainKind {
        match (self.lo.is_finite(), self.hi.is_finite()) {
            (true, true) => DomainKind::Finite,
            (false, false) => DomainKind::Infinite,
            _ => DomainKind::SemiInfinite,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct QuadOptions {
    /// Apply the tanh-sinh substitution at finite endpoints.
    pub singular_endpoints: bool,
    /// Points in the open domain where the integrand is not smooth.
    pub breakpoints: Vec<f64>,
}

/// Result of a scalar integration.
#[derive(Clone, Debug)]
pub struct Integral {
    pub value: f64,
    pub err_est: f64,
    pub value_mp: Float,
    pub panels: usize,
}

/// `∫ f` over `domain` with absolute error estimate at most `tol`.
pub fn integrate<F>(
    f: F,
    domain: Domain,
    precision: Precision,
    tol: f64,
) -> Result<Integral, QuadError>
where
    F: Fn(&Float) -> Result<Float, QuadError> + Sync,
{
    integrate_with(f, domain, precision, tol, &QuadOptions::default())
}

pub fn integrate_with<F>(
    f: F,
    domain: Domain,
    precision: Precision,
    tol: f64,
    options: &QuadOptions,
) -> Result<Integral, QuadError>
where
    F: Fn(&Float) -> Result<Float, QuadError> + Sync,
{
    let batch = integrate_batch(
        |x: &Float, out: &mut [Float]| {
            out[0] = f(x)?;
            Ok(())
        },
        1,
        domain,
        precision,
        tol,
        TolMode::Absolute,
        options,
    )?;
    let value_mp = batch.values.into_iter().next().expect("one component");
    Ok(Integral {
        value: value_mp.to_f64(),
        err_est: batch.errors[0].to_f64(),
        value_mp,
        panels: batch.panels,
    })
}

/// Convenience wrapper for integrands written in double precision.
pub fn integrate_f64<F>(f: F, domain: Domain, tol: f64) -> Result<Integral, QuadError>
where
    F: Fn(f64) -> f64 + Sync,
{
    let precision = Precision::digits(20);
    let bits = precision.bits();
    integrate(
        |x: &Float| Ok(Float::with_val(bits, f(x.to_f64()))),
        domain,
        precision,
        tol,
    )
}
