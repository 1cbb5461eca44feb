//! Working-precision policy and the scalar abstraction shared by the
//! `f64` fast paths and the MPFR-backed extended-precision paths.

use rug::float::Constant;
use rug::ops::Pow;
use rug::Float;
use serde::{Deserialize, Serialize};

const LOG2_10: f64 = std::f64::consts::LOG2_10;

/// Guard bits added on top of the decimal request.
const GUARD_BITS: u32 = 16;

/// Working precision, expressed in decimal digits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Precision {
    digits: u32,
}

impl Precision {
    pub const MIN_DIGITS: u32 = 16;

    pub fn digits(digits: u32) -> Self {
        Self {
            digits: digits.max(Self::MIN_DIGITS),
        }
    }

    /// Default policy for an N-particle Gram build: `max(34, 12 + ceil(1.6 N))`.
    pub fn for_particles(n: usize) -> Self {
        let scaled = 12 + (1.6 * n as f64).ceil() as u32;
        Self::digits(scaled.max(34))
    }

    pub fn decimal_digits(self) -> u32 {
        self.digits
    }

    pub fn bits(self) -> u32 {
        (self.digits as f64 * LOG2_10).ceil() as u32 + GUARD_BITS
    }

    pub fn doubled(self) -> Self {
        Self::digits(self.digits * 2)
    }

    /// The smallest relative tolerance that is meaningful at this precision.
    pub fn epsilon(self) -> f64 {
        10f64.powi(-(self.digits as i32))
    }
}

impl std::fmt::Display for Precision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} digits", self.digits)
    }
}

pub fn mpf(bits: u32, value: f64) -> Float {
    Float::with_val(bits, value)
}

pub fn pi(bits: u32) -> Float {
    Float::with_val(bits, Constant::Pi)
}

/// Parse a decimal literal at the requested precision. Decimal text is
/// honoured exactly (so `0.1` is one tenth, not the nearest double).
pub fn parse_decimal(text: &str, bits: u32) -> Option<Float> {
    Float::parse(text).ok().map(|p| Float::with_val(bits, p))
}

/// Unary functions understood by the expression language.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Func {
    Exp,
    Log,
    Sqrt,
    Sinh,
    Cosh,
    Tanh,
    Sin,
    Cos,
    Asin,
    Asinh,
    Abs,
}

impl Func {
    pub const ALL: [Func; 11] = [
        Func::Exp,
        Func::Log,
        Func::Sqrt,
        Func::Sinh,
        Func::Cosh,
        Func::Tanh,
        Func::Sin,
        Func::Cos,
        Func::Asin,
        Func::Asinh,
        Func::Abs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
            Func::Tanh => "tanh",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Asin => "asin",
            Func::Asinh => "asinh",
            Func::Abs => "abs",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        match name {
            "ln" => Some(Func::Log),
            "arcsin" => Some(Func::Asin),
            "arcsinh" => Some(Func::Asinh),
            _ => Func::ALL.iter().copied().find(|f| f.name() == name),
        }
    }
}

/// Arithmetic needed by expression evaluation, implemented for `f64` and
/// for MPFR floats. The context carries the precision for the latter.
pub trait Scalar: Clone + std::fmt::Debug + Send + Sync {
    type Ctx: Copy + Send + Sync;

    fn from_f64(value: f64, ctx: Self::Ctx) -> Self;
    /// A decimal literal; `value` is its nearest double.
    fn literal(text: &str, value: f64, ctx: Self::Ctx) -> Self;
    fn pi(ctx: Self::Ctx) -> Self;
    fn add(&self, rhs: &Self) -> Self;
    fn sub(&self, rhs: &Self) -> Self;
    fn mul(&self, rhs: &Self) -> Self;
    fn div(&self, rhs: &Self) -> Self;
    fn neg(&self) -> Self;
    fn powi(&self, exp: i32) -> Self;
    fn powf(&self, exp: &Self) -> Self;
    fn apply(&self, func: Func) -> Self;
    fn to_f64(&self) -> f64;
    fn is_finite(&self) -> bool;
}

impl Scalar for f64 {
    type Ctx = ();

    fn from_f64(value: f64, _: ()) -> Self {
        value
    }
    fn literal(_: &str, value: f64, _: ()) -> Self {
        value
    }
    fn pi(_: ()) -> Self {
        std::f64::consts::PI
    }
    fn add(&self, rhs: &Self) -> Self {
        self + rhs
    }
    fn sub(&self, rhs: &Self) -> Self {
        self - rhs
    }
    fn mul(&self, rhs: &Self) -> Self {
        self * rhs
    }
    fn div(&self, rhs: &Self) -> Self {
        self / rhs
    }
    fn neg(&self) -> Self {
        -self
    }
    fn powi(&self, exp: i32) -> Self {
        f64::powi(*self, exp)
    }
    fn powf(&self, exp: &Self) -> Self {
        f64::powf(*self, *exp)
    }
    fn apply(&self, func: Func) -> Self {
        let x = *self;
        match func {
            Func::Exp => x.exp(),
            Func::Log => x.ln(),
            Func::Sqrt => x.sqrt(),
            Func::Sinh => x.sinh(),
            Func::Cosh => x.cosh(),
            Func::Tanh => x.tanh(),
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Asin => x.asin(),
            Func::Asinh => x.asinh(),
            Func::Abs => x.abs(),
        }
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }
}

impl Scalar for Float {
    type Ctx = u32;

    fn from_f64(value: f64, bits: u32) -> Self {
        Float::with_val(bits, value)
    }
    fn literal(text: &str, value: f64, bits: u32) -> Self {
        parse_decimal(text, bits).unwrap_or_else(|| Float::with_val(bits, value))
    }
    fn pi(bits: u32) -> Self {
        pi(bits)
    }
    fn add(&self, rhs: &Self) -> Self {
        Float::with_val(self.prec(), self + rhs)
    }
    fn sub(&self, rhs: &Self) -> Self {
        Float::with_val(self.prec(), self - rhs)
    }
    fn mul(&self, rhs: &Self) -> Self {
        Float::with_val(self.prec(), self * rhs)
    }
    fn div(&self, rhs: &Self) -> Self {
        Float::with_val(self.prec(), self / rhs)
    }
    fn neg(&self) -> Self {
        Float::with_val(self.prec(), -self)
    }
    fn powi(&self, exp: i32) -> Self {
        Float::with_val(self.prec(), self.pow(exp))
    }
    fn powf(&self, exp: &Self) -> Self {
        Float::with_val(self.prec(), self.pow(exp))
    }
    fn apply(&self, func: Func) -> Self {
        let x = self.clone();
        match func {
            Func::Exp => x.exp(),
            Func::Log => x.ln(),
            Func::Sqrt => x.sqrt(),
            Func::Sinh => x.sinh(),
            Func::Cosh => x.cosh(),
            Func::Tanh => x.tanh(),
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Asin => x.asin(),
            Func::Asinh => x.asinh(),
            Func::Abs => x.abs(),
        }
    }
    fn to_f64(&self) -> f64 {
        Float::to_f64(self)
    }
    fn is_finite(&self) -> bool {
        Float::is_finite(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_policy_matches_formula() {
        assert_eq!(Precision::for_particles(1).decimal_digits(), 34);
        assert_eq!(Precision::for_particles(30).decimal_digits(), 60);
        assert_eq!(Precision::for_particles(40).decimal_digits(), 76);
    }

    #[test]
    fn decimal_literals_are_exact_in_extended_precision() {
        let tenth = <Float as Scalar>::literal("0.1", 0.1, 256);
        let ten = Float::with_val(256, 10);
        let one = Float::with_val(256, &tenth * &ten);
        assert!((one - 1u32).abs() < 1e-70);
    }

    #[test]
    fn function_names_round_trip() {
        for f in Func::ALL {
            assert_eq!(Func::from_name(f.name()), Some(f));
        }
        assert_eq!(Func::from_name("ln"), Some(Func::Log));
        assert_eq!(Func::from_name("gamma"), None);
    }
}
