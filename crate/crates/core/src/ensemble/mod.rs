//! Ensemble definitions: basic maps `r`, `s`, the weight `|x|^α e^{-V(x)}`
//! on its support, the two-body exponent γ and an optional coordinate scale.
//!
//! The joint density described by an [`EnsembleSpec`] is
//!
//! ```text
//! P(x_1..x_N) ∝ Π_{i<j} |r(x_i) - r(x_j)| |s(x_i) - s(x_j)|^γ  Π_i |x_i|^α e^{-V(x_i)}
//! ```

mod askey;
pub mod config;
mod tabulated;

use std::collections::BTreeMap;

use rug::Float;
use thiserror::Error;

use crate::expr::{ExprError, Expression};
use crate::precision::{Precision, Scalar};

pub use askey::askey_potential;
pub(crate) use askey::askey_weight_mp;
pub use config::EnsembleConfig;
pub use tabulated::TabulatedPotential;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnsembleError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("invalid ensemble: {0}")]
    Invalid(String),
    #[error("x = {x} lies outside the support [{lo}, {hi}]")]
    OutsideSupport { x: f64, lo: f64, hi: f64 },
    #[error("x = {x} lies outside the potential table range [{lo}, {hi}]")]
    TableRange { x: f64, lo: f64, hi: f64 },
    #[error("basic map {which} is not strictly increasing near x = {x}")]
    NonMonotoneMap { which: &'static str, x: f64 },
    #[error("weight is negative or non-finite at x = {x}")]
    BadWeight { x: f64 },
    #[error("moments diverge: {0}")]
    DivergentMoments(String),
    #[error("config field `{path}`: {message}")]
    Config { path: String, message: String },
}

/// Integration support with possibly infinite endpoints.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Support {
    pub lo: f64,
    pub hi: f64,
}

impl Support {
    pub fn new(lo: f64, hi: f64) -> Result<Self, EnsembleError> {
        if lo.is_nan() || hi.is_nan() || !(lo < hi) {
            return Err(EnsembleError::Invalid(format!(
                "support [{lo}, {hi}] is empty"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn real_line() -> Self {
        Self {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        }
    }

    pub fn half_line() -> Self {
        Self {
            lo: 0.0,
            hi: f64::INFINITY,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn check(&self, x: f64) -> Result<(), EnsembleError> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(EnsembleError::OutsideSupport {
                x,
                lo: self.lo,
                hi: self.hi,
            })
        }
    }

    pub fn is_compact(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Potential {
    Expr(Expression),
    /// Critical-ensemble weight; support is fixed to `[-1, 1]`.
    Askey {
        q: f64,
    },
    Tabulated(TabulatedPotential),
}

impl Potential {
    pub fn eval_f64(&self, x: f64) -> Result<f64, EnsembleError> {
        match self {
            Potential::Expr(e) => Ok(e.eval_f64(x)?),
            Potential::Askey { q } => askey_potential(x, *q, 1e-17),
            Potential::Tabulated(t) => t.eval(x),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightValue {
    pub value: f64,
    /// The exact weight is positive but below the smallest double.
    pub underflow: bool,
}

/// `w(x) = |x|^α e^{-V(x)}` on a support.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightSpec {
    pub alpha: f64,
    pub potential: Potential,
    pub support: Support,
}

impl WeightSpec {
    pub fn new(alpha: f64, potential: Potential, support: Support) -> Result<Self, EnsembleError> {
        if !(alpha > -1.0) || !alpha.is_finite() {
            return Err(EnsembleError::Invalid(format!(
                "alpha = {alpha} must exceed -1"
            )));
        }
        match &potential {
            Potential::Askey { q } => {
                if !(*q > 0.0 && *q < 1.0) {
                    return Err(EnsembleError::Invalid(format!(
                        "Askey q = {q} must lie in (0, 1)"
                    )));
                }
                if support != (Support { lo: -1.0, hi: 1.0 }) {
                    return Err(EnsembleError::Invalid(
                        "the Askey weight is defined on [-1, 1] only".into(),
                    ));
                }
            }
            Potential::Tabulated(t) => {
                let (lo, hi) = t.range();
                if support.lo < lo || support.hi > hi {
                    return Err(EnsembleError::Invalid(format!(
                        "support [{}, {}] exceeds potential table range [{lo}, {hi}]",
                        support.lo, support.hi
                    )));
                }
            }
            Potential::Expr(e) => {
                if !e.is_bound() {
                    return Err(ExprError::Unbound(e.parameters().into_iter().collect()).into());
                }
            }
        }
        Ok(Self {
            alpha,
            potential,
            support,
        })
    }

    /// Extended-precision weight. `x` must lie in the support.
    pub fn weight_mp(&self, x: &Float, bits: u32) -> Result<Float, EnsembleError> {
        self.support.check(x.to_f64())?;
        let mut w = match &self.potential {
            Potential::Expr(e) => {
                let v: Float = e.eval_unchecked(x, bits)?;
                if v.is_nan() || v == f64::NEG_INFINITY {
                    return Err(EnsembleError::BadWeight { x: x.to_f64() });
                }
                (-v).exp()
            }
            Potential::Askey { q } => askey_weight_mp(x, *q, bits),
            Potential::Tabulated(t) => (-t.eval_mp(x, bits)?).exp(),
        };
        if self.alpha != 0.0 {
            let ax = Float::with_val(bits, x.abs_ref());
            if ax.is_zero() {
                return Ok(Float::with_val(bits, 0u32));
            }
            w *= ax.powf(&Float::with_val(bits, self.alpha));
        }
        if w.is_nan() || w.is_sign_negative() && !w.is_zero() {
            return Err(EnsembleError::BadWeight { x: x.to_f64() });
        }
        Ok(w)
    }

    /// `|x|^α e^{-V(x)}` rounded to a double; exact zero on underflow is
    /// flagged rather than silently returned.
    pub fn eval_weight(&self, x: f64, precision: Precision) -> Result<WeightValue, EnsembleError> {
        let bits = precision.bits();
        let w = self.weight_mp(&Float::with_val(bits, x), bits)?;
        let value = w.to_f64();
        Ok(WeightValue {
            value,
            underflow: value == 0.0 && !w.is_zero(),
        })
    }

    /// `α ln|x| - V(x)` in double precision; `-∞` where the weight vanishes.
    pub fn log_weight(&self, x: f64) -> Result<f64, EnsembleError> {
        self.support.check(x)?;
        let v = match &self.potential {
            Potential::Expr(e) => {
                let v: f64 = e.eval_unchecked(&x, ())?;
                if v == f64::INFINITY {
                    return Ok(f64::NEG_INFINITY);
                }
                if !v.is_finite() {
                    return Err(EnsembleError::BadWeight { x });
                }
                v
            }
            other => other.eval_f64(x)?,
        };
        if self.alpha == 0.0 {
            Ok(-v)
        } else if x == 0.0 {
            Ok(f64::NEG_INFINITY)
        } else {
            Ok(self.alpha * x.abs().ln() - v)
        }
    }

    /// Does the integrand `|x|^α × (polynomials)` have a non-analytic point
    /// at a finite endpoint?
    pub(crate) fn has_endpoint_singularity(&self) -> bool {
        let at_zero_endpoint = self.support.lo == 0.0 || self.support.hi == 0.0;
        let alpha_singular = self.alpha.fract() != 0.0 && at_zero_endpoint;
        alpha_singular || matches!(self.potential, Potential::Askey { .. })
    }
}

/// The two basic maps of the two-body interaction.
#[derive(Clone, Debug, PartialEq)]
pub struct BasicMapPair {
    pub r: Expression,
    pub s: Expression,
}

impl BasicMapPair {
    pub fn new(r: Expression, s: Expression) -> Self {
        Self { r, s }
    }

    /// `r = x`, `s = x^θ`.
    pub fn muttalib_borodin(theta: f64) -> Self {
        Self {
            r: Expression::variable(),
            s: Expression::power_of_x(theta),
        }
    }

    /// `θ` when `r = x` and `s = x^θ`; enables moment reuse.
    pub fn monomial_theta(&self) -> Option<f64> {
        match (self.r.monomial_exponent(), self.s.monomial_exponent()) {
            (Some(1.0), Some(theta)) => Some(theta),
            _ => None,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.r == self.s
    }
}

/// Full description of a determinantal (γ = 1) or γ-ensemble.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleSpec {
    pub name: String,
    pub n: usize,
    pub maps: BasicMapPair,
    pub weight: WeightSpec,
    pub gamma: f64,
    /// Coordinate scale `c`: model coordinate `u` corresponds to `x = c·u`.
    /// `None` requests auto-normalization by the kernel builder.
    pub scale: Option<f64>,
    pub params: BTreeMap<String, f64>,
    /// True when the potential parameter `n` was defaulted to the particle count.
    pub n_param_defaulted: bool,
}

impl EnsembleSpec {
    /// Assemble and validate. Potentials and maps are bound against
    /// `params`; the parameter `n` defaults to the particle count.
    pub fn new(
        name: impl Into<String>,
        n: usize,
        maps: BasicMapPair,
        alpha: f64,
        potential: Potential,
        support: Support,
        params: BTreeMap<String, f64>,
    ) -> Result<Self, EnsembleError> {
        if n == 0 {
            return Err(EnsembleError::Invalid(
                "particle count must be positive".into(),
            ));
        }
        let mut params = params;
        let n_param_defaulted = !params.contains_key("n");
        if n_param_defaulted {
            params.insert("n".into(), n as f64);
        }
        let bind = |e: &Expression| -> Result<Expression, EnsembleError> { Ok(e.bind(&params)?) };
        let maps = BasicMapPair {
            r: bind(&maps.r)?,
            s: bind(&maps.s)?,
        };
        let potential = match potential {
            Potential::Expr(e) => Potential::Expr(bind(&e)?),
            other => other,
        };
        let weight = WeightSpec::new(alpha, potential, support)?;
        let spec = Self {
            name: name.into(),
            n,
            maps,
            weight,
            gamma: 1.0,
            scale: None,
            params,
            n_param_defaulted,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_gamma(mut self, gamma: f64) -> Result<Self, EnsembleError> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(EnsembleError::Invalid(format!(
                "gamma = {gamma} must lie in (0, 1]"
            )));
        }
        self.gamma = gamma;
        Ok(self)
    }

    pub fn with_scale(mut self, scale: Option<f64>) -> Result<Self, EnsembleError> {
        if let Some(c) = scale {
            if !(c > 0.0 && c.is_finite()) {
                return Err(EnsembleError::Invalid(format!(
                    "scale = {c} must be positive"
                )));
            }
        }
        self.scale = scale;
        Ok(self)
    }

    /// Gaussian unitary ensemble, `w = e^{-x²}` on the real line.
    pub fn gue(n: usize) -> Self {
        Self::new(
            "gue",
            n,
            BasicMapPair::muttalib_borodin(1.0),
            0.0,
            Potential::Expr(Expression::parse("x^2").unwrap()),
            Support::real_line(),
            BTreeMap::new(),
        )
        .expect("GUE spec is valid")
    }

    /// Muttalib–Borodin ensemble on the real line (odd integer θ).
    pub fn mb_hermite(n: usize, theta: f64, potential: &str) -> Result<Self, EnsembleError> {
        Self::new(
            format!("mb-hermite-theta{theta}"),
            n,
            BasicMapPair::muttalib_borodin(theta),
            0.0,
            Potential::Expr(Expression::parse(potential)?),
            Support::real_line(),
            BTreeMap::new(),
        )
    }

    /// Muttalib–Borodin ensemble on `[0, ∞)` with prefactor `x^α`.
    pub fn mb_laguerre(
        n: usize,
        theta: f64,
        alpha: f64,
        potential: &str,
    ) -> Result<Self, EnsembleError> {
        Self::new(
            format!("mb-laguerre-theta{theta}"),
            n,
            BasicMapPair::muttalib_borodin(theta),
            alpha,
            Potential::Expr(Expression::parse(potential)?),
            Support::half_line(),
            BTreeMap::new(),
        )
    }

    /// Unitary critical ensemble with the Askey weight on `[-1, 1]`.
    pub fn critical(n: usize, q: f64) -> Result<Self, EnsembleError> {
        Self::new(
            format!("critical-q{q}"),
            n,
            BasicMapPair::muttalib_borodin(1.0),
            0.0,
            Potential::Askey { q },
            Support::new(-1.0, 1.0)?,
            BTreeMap::new(),
        )
    }

    /// Jacobi-type ensemble with unit weight on `[lo, hi]`.
    pub fn uniform(n: usize, lo: f64, hi: f64) -> Result<Self, EnsembleError> {
        Self::new(
            "uniform",
            n,
            BasicMapPair::muttalib_borodin(1.0),
            0.0,
            Potential::Expr(Expression::parse("0").unwrap()),
            Support::new(lo, hi)?,
            BTreeMap::new(),
        )
    }

    pub fn support(&self) -> Support {
        self.weight.support
    }

    /// Largest combined exponent `i + θ j` entering the Gram matrix
    /// (for monomial maps), or `2(N-1)` as a generic probe order.
    fn max_moment_order(&self) -> f64 {
        let k = (self.n - 1) as f64;
        match self.maps.monomial_theta() {
            Some(theta) => k * (1.0 + theta),
            None => 2.0 * k,
        }
    }

    /// Eager invariant checks: support/θ compatibility, monotone basic maps,
    /// nonnegative weight and convergent moments.
    pub fn validate(&self) -> Result<(), EnsembleError> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(EnsembleError::Invalid(format!(
                "gamma = {} must lie in (0, 1]",
                self.gamma
            )));
        }
        if let Some(theta) = self.maps.monomial_theta() {
            if !(theta > 0.0) {
                return Err(EnsembleError::Invalid(format!(
                    "theta = {theta} must be positive"
                )));
            }
            if theta.fract() != 0.0 && self.support().lo < 0.0 {
                return Err(EnsembleError::Invalid(format!(
                    "s(x) = x^{theta} needs a support with lower bound ≥ 0"
                )));
            }
        }
        let (a, b) = self.probe_extent()?;
        self.check_monotone(a, b)?;
        self.check_weight(a, b)?;
        self.check_tails()?;
        Ok(())
    }

    /// Interval on which the weight is non-negligible (finite endpoints are kept).
    pub fn probe_extent(&self) -> Result<(f64, f64), EnsembleError> {
        let s = self.support();
        let base = if s.lo.is_finite() {
            s.lo
        } else if s.hi.is_finite() {
            s.hi
        } else {
            0.0
        };
        let reach = |dir: f64| -> Result<f64, EnsembleError> {
            let mut last = base;
            for k in -2..=40 {
                let x = base + dir * 2f64.powi(k);
                last = x;
                if self.weight.log_weight(x)? < -300.0 {
                    break;
                }
            }
            Ok(last)
        };
        let a = if s.lo.is_finite() { s.lo } else { reach(-1.0)? };
        let b = if s.hi.is_finite() { s.hi } else { reach(1.0)? };
        Ok((a, b))
    }

    fn check_monotone(&self, a: f64, b: f64) -> Result<(), EnsembleError> {
        const PROBES: usize = 2000;
        for (which, map) in [("r", &self.maps.r), ("s", &self.maps.s)] {
            let mut prev: Option<f64> = None;
            for k in 0..=PROBES {
                let x = a + (b - a) * k as f64 / PROBES as f64;
                let v = map.eval_f64(x)?;
                if let Some(p) = prev {
                    if !(v > p) {
                        return Err(EnsembleError::NonMonotoneMap { which, x });
                    }
                }
                prev = Some(v);
            }
        }
        Ok(())
    }

    fn check_weight(&self, a: f64, b: f64) -> Result<(), EnsembleError> {
        const PROBES: usize = 400;
        for k in 0..=PROBES {
            let x = a + (b - a) * k as f64 / PROBES as f64;
            let lw = self.weight.log_weight(x)?;
            if lw.is_nan() || lw == f64::INFINITY {
                return Err(EnsembleError::BadWeight { x });
            }
        }
        Ok(())
    }

    /// For each infinite end, `|x|^{p+2} w(x)` with `p` the top moment order
    /// must eventually decay; probed at `|x| = 2^k` in extended precision.
    fn check_tails(&self) -> Result<(), EnsembleError> {
        let s = self.support();
        let p = self.max_moment_order() + 2.0;
        let bits = 64;
        for (dir, infinite) in [
            (-1.0, s.lo == f64::NEG_INFINITY),
            (1.0, s.hi == f64::INFINITY),
        ] {
            if !infinite {
                continue;
            }
            let mut logs = Vec::new();
            for k in 0..=40 {
                let x = dir * 2f64.powi(k);
                let xm = Float::with_val(bits, x);
                let w = self.weight.weight_mp(&xm, bits)?;
                if w.is_zero() {
                    logs.push(f64::NEG_INFINITY);
                    continue;
                }
                let r = self.maps.r.eval(&xm, bits)?.abs();
                let sv = self.maps.s.eval(&xm, bits)?.abs();
                let poly = if self.maps.monomial_theta().is_some() {
                    x.abs().ln() * p
                } else {
                    let k1 = (self.n - 1) as f64;
                    k1 * (r.ln().to_f64() + sv.ln().to_f64()) + 2.0 * x.abs().ln()
                };
                logs.push(poly + w.ln().to_f64());
            }
            let peak = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let tail = &logs[logs.len() - 4..];
            let decaying = tail.windows(2).all(|w| w[1] <= w[0]) && tail[3] < peak - 100.0;
            if !decaying {
                return Err(EnsembleError::DivergentMoments(format!(
                    "integrand |x|^{p:.1}·w(x) does not decay toward {}",
                    if dir > 0.0 { "+inf" } else { "-inf" }
                )));
            }
        }
        Ok(())
    }

    /// `r(x)` and `s(x)` in extended precision.
    pub fn maps_mp(&self, x: &Float, bits: u32) -> Result<(Float, Float), EnsembleError> {
        Ok((self.maps.r.eval(x, bits)?, self.maps.s.eval(x, bits)?))
    }

    /// Canonical config form used for hashing and round trips.
    pub fn to_config(&self) -> EnsembleConfig {
        EnsembleConfig::from_spec(self)
    }

    /// SHA-256 over the canonical config JSON.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_string(&self.to_config()).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}
