//! Gauss–Legendre rules computed by Newton refinement of Legendre roots at
//! the working precision. Canonical rules on `[-1, 1]` are cached per
//! `(order, bits)`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use once_cell::sync::Lazy;
use rug::Float;

use super::QuadError;
use crate::precision::Precision;

/// Nodes and positive weights of an `order`-point rule on `[lo, hi]`.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub order: usize,
    pub lo: f64,
    pub hi: f64,
    pub nodes: Vec<Float>,
    pub weights: Vec<Float>,
}

impl QuadratureRule {
    pub fn nodes_f64(&self) -> Vec<f64> {
        self.nodes.iter().map(Float::to_f64).collect()
    }

    pub fn weights_f64(&self) -> Vec<f64> {
        self.weights.iter().map(Float::to_f64).collect()
    }

    /// `Σ w_i f(x_i)` at the rule's precision.
    pub fn apply<F: Fn(&Float) -> Float>(&self, f: F) -> Float {
        let prec = self.nodes.first().map_or(64, Float::prec);
        let mut sum = Float::with_val(prec, 0u32);
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            sum += f(x) * w;
        }
        sum
    }
}

/// Canonical rule on `[-1, 1]`, nodes ascending.
#[derive(Debug)]
pub(crate) struct CanonicalRule {
    pub nodes: Vec<Float>,
    pub weights: Vec<Float>,
}

static CACHE: Lazy<Mutex<HashMap<(usize, u32), Arc<CanonicalRule>>>> =
    Lazy::new(|| Mutex::new(HashMap::new()));

pub(crate) fn canonical_rule(m: usize, bits: u32) -> Arc<CanonicalRule> {
    if let Some(rule) = CACHE.lock().unwrap().get(&(m, bits)) {
        return rule.clone();
    }
    let rule = Arc::new(compute_rule(m, bits));
    CACHE.lock().unwrap().insert((m, bits), rule.clone());
    rule
}

/// `(P_m(x), P_{m-1}(x))` by the three-term recurrence.
fn legendre_pair(m: usize, x: &Float) -> (Float, Float) {
    let bits = x.prec();
    let mut p_prev = Float::with_val(bits, 1u32);
    let mut p = x.clone();
    for k in 1..m {
        // (k+1) P_{k+1} = (2k+1) x P_k - k P_{k-1}
        let mut next = Float::with_val(bits, x * &p);
        next *= (2 * k + 1) as u32;
        next -= Float::with_val(bits, &p_prev * k as u32);
        next /= (k + 1) as u32;
        p_prev = std::mem::replace(&mut p, next);
    }
    (p, p_prev)
}

fn compute_rule(m: usize, bits: u32) -> CanonicalRule {
    let work = bits + 32;
    let mut nodes = vec![Float::new(bits); m];
    let mut weights = vec![Float::new(bits); m];
    let half = m / 2;
    for i in 0..half {
        // Tricomi's initial approximation of the i-th largest root.
        let mf = m as f64;
        let theta = std::f64::consts::PI * (4.0 * i as f64 + 3.0) / (4.0 * mf + 2.0);
        let guess = (1.0 - (mf - 1.0) / (8.0 * mf * mf * mf)) * theta.cos();
        let mut x = Float::with_val(work, guess);
        let tol = Float::with_val(work, 1u32) >> (work as i32 - 8);
        for _ in 0..200 {
            let (p, p_prev) = legendre_pair(m, &x);
            let dp = derivative(m, &x, &p, &p_prev);
            let dx = Float::with_val(work, &p / &dp);
            x -= &dx;
            if dx.abs() < tol {
                break;
            }
        }
        let (p, p_prev) = legendre_pair(m, &x);
        let dp = derivative(m, &x, &p, &p_prev);
        // w = 2 / ((1 - x^2) P'_m(x)^2)
        let one_minus = Float::with_val(work, 1u32) - Float::with_val(work, x.square_ref());
        let w = Float::with_val(work, 2u32) / (one_minus * dp.square());
        let j = m - 1 - i;
        nodes[j] = Float::with_val(bits, &x);
        nodes[i] = Float::with_val(bits, -&x);
        weights[j] = Float::with_val(bits, &w);
        weights[i] = Float::with_val(bits, &w);
    }
    if m % 2 == 1 {
        let zero = Float::with_val(work, 0u32);
        let (_, p_prev) = legendre_pair(m, &zero);
        // At x = 0, P'_m(0) = m P_{m-1}(0).
        let dp = Float::with_val(work, &p_prev * m as u32);
        nodes[half] = Float::with_val(bits, 0u32);
        weights[half] = Float::with_val(bits, 2u32 / dp.square());
    }
    CanonicalRule { nodes, weights }
}

/// `P'_m(x) = m (x P_m - P_{m-1}) / (x^2 - 1)`.
fn derivative(m: usize, x: &Float, p: &Float, p_prev: &Float) -> Float {
    let bits = x.prec();
    let num = Float::with_val(bits, x * p) - p_prev;
    let den = Float::with_val(bits, x.square_ref()) - 1u32;
    num * m as u32 / den
}

/// The `m`-point Gauss–Legendre rule mapped affinely to `[lo, hi]`.
pub fn gauss_legendre(
    m: usize,
    lo: f64,
    hi: f64,
    precision: Precision,
) -> Result<QuadratureRule, QuadError> {
    if m == 0 {
        return Err(QuadError::Invalid(
            "Gauss–Legendre order must be at least 1".into(),
        ));
    }
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(QuadError::InvalidDomain { lo, hi });
    }
    let bits = precision.bits();
    let rule = canonical_rule(m, bits);
    let a = Float::with_val(bits, lo);
    let b = Float::with_val(bits, hi);
    let half = Float::with_val(bits, &b - &a) / 2u32;
    let mid = Float::with_val(bits, &a + &b) / 2u32;
    let nodes = rule
        .nodes
        .iter()
        .map(|t| Float::with_val(bits, t * &half) + &mid)
        .collect();
    let weights = rule
        .weights
        .iter()
        .map(|w| Float::with_val(bits, w * &half))
        .collect();
    Ok(QuadratureRule {
        order: m,
        lo,
        hi,
        nodes,
        weights,
    })
}

/// Double-precision nodes and weights, the form used by the Nyström method.
pub fn gauss_legendre_f64(m: usize, lo: f64, hi: f64) -> Result<(Vec<f64>, Vec<f64>), QuadError> {
    let rule = gauss_legendre(m, lo, hi, Precision::digits(34))?;
    Ok((rule.nodes_f64(), rule.weights_f64()))
}
