//! Globally adaptive Gauss–Legendre integration of vector-valued integrands
//! after mapping the domain to a finite parameter interval.

use rayon::prelude::*;
use rug::Float;

use super::gauss::{canonical_rule, CanonicalRule};
use super::{Domain, QuadError, QuadOptions, MAX_PANELS};
use crate::precision::{pi, Precision};

/// How the per-component tolerance is interpreted.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TolMode {
    /// Error of each component at most `tol`.
    Absolute,
    /// Error of each component at most `tol · ∫|f_k|`.
    Relative,
}

#[derive(Clone, Debug)]
pub struct BatchIntegral {
    pub values: Vec<Float>,
    pub errors: Vec<Float>,
    pub panels: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Outer {
    Finite {
        lo: f64,
        hi: f64,
    },
    /// `[lo, ∞)`
    Upper {
        lo: f64,
    },
    /// `(-∞, hi]`
    Lower {
        hi: f64,
    },
    Whole,
}

/// Parameter-to-`x` substitution.
#[derive(Clone, Copy, Debug)]
struct Transform {
    outer: Outer,
    /// Half-width of the tanh-sinh parameter range, when enabled.
    de_range: Option<f64>,
}

impl Transform {
    fn new(domain: Domain, options: &QuadOptions, bits: u32) -> Self {
        let outer = match (domain.lo.is_finite(), domain.hi.is_finite()) {
            (true, true) => Outer::Finite {
                lo: domain.lo,
                hi: domain.hi,
            },
            (true, false) => Outer::Upper { lo: domain.lo },
            (false, true) => Outer::Lower { hi: domain.hi },
            (false, false) => Outer::Whole,
        };
        let de_range = (options.singular_endpoints && outer != Outer::Whole)
            .then(|| (2.0 * bits as f64).asinh());
        Self { outer, de_range }
    }

    fn param_range(&self) -> (f64, f64) {
        if let Some(u) = self.de_range {
            return (-u, u);
        }
        match self.outer {
            Outer::Finite { lo, hi } => (lo, hi),
            Outer::Upper { .. } | Outer::Lower { .. } => (0.0, 1.0),
            Outer::Whole => (-1.0, 1.0),
        }
    }

    /// Approximate inverse, used only to place breakpoints.
    fn param_of(&self, x: f64) -> f64 {
        let half_pi = std::f64::consts::FRAC_PI_2;
        match (self.outer, self.de_range) {
            (Outer::Finite { .. }, None) => x,
            (Outer::Finite { lo, hi }, Some(_)) => {
                let s = (x - lo) / (hi - lo);
                let v = 0.5 * (s / (1.0 - s)).ln();
                (v / half_pi).asinh()
            }
            (Outer::Upper { lo }, None) => (x - lo) / (1.0 + x - lo),
            (Outer::Upper { lo }, Some(_)) => (0.5 * (x - lo).ln() / half_pi).asinh(),
            (Outer::Lower { hi }, None) => 1.0 / (1.0 + hi - x),
            (Outer::Lower { hi }, Some(_)) => (-0.5 * (hi - x).ln() / half_pi).asinh(),
            (Outer::Whole, _) => 2.0 * x / (1.0 + (1.0 + 4.0 * x * x).sqrt()),
        }
    }

    /// `(x, dx/du)` at parameter `u`.
    fn apply(&self, u: &Float, bits: u32) -> (Float, Float) {
        let one = Float::with_val(bits, 1u32);
        match self.de_range {
            None => match self.outer {
                Outer::Finite { .. } => (u.clone(), one),
                Outer::Upper { lo } => {
                    let om = Float::with_val(bits, &one - u);
                    let x = Float::with_val(bits, u / &om) + lo;
                    (x, om.square().recip())
                }
                Outer::Lower { hi } => {
                    let om = Float::with_val(bits, &one - u);
                    let x = Float::with_val(bits, hi) - Float::with_val(bits, &om / u);
                    (x, Float::with_val(bits, u.square_ref()).recip())
                }
                Outer::Whole => {
                    let u2 = Float::with_val(bits, u.square_ref());
                    let om = Float::with_val(bits, &one - &u2);
                    let x = Float::with_val(bits, u / &om);
                    let jac = (u2 + 1u32) / om.square();
                    (x, jac)
                }
            },
            Some(_) => {
                // v = (π/2) sinh u, dv/du = (π/2) cosh u
                let half_pi = pi(bits) / 2u32;
                let v = Float::with_val(bits, u.sinh_ref()) * &half_pi;
                let dv = Float::with_val(bits, u.cosh_ref()) * &half_pi;
                match self.outer {
                    Outer::Upper { lo } => {
                        let e = Float::with_val(bits, &v * 2u32).exp();
                        let jac = Float::with_val(bits, &e * &dv) * 2u32;
                        (e + lo, jac)
                    }
                    Outer::Lower { hi } => {
                        let e = Float::with_val(bits, &v * -2i32).exp();
                        let jac = Float::with_val(bits, &e * &dv) * 2u32;
                        (Float::with_val(bits, hi) - e, jac)
                    }
                    Outer::Finite { lo, hi } => {
                        // σ = 1/(1+e^{-2v}); 1-σ = 1/(1+e^{2v})
                        let width = Float::with_val(bits, hi) - lo;
                        let sig = (Float::with_val(bits, &v * -2i32).exp() + 1u32).recip();
                        let comp = (Float::with_val(bits, &v * 2u32).exp() + 1u32).recip();
                        let jac = Float::with_val(bits, &width * &sig) * &comp * dv * 2u32;
                        let x = if v.is_sign_negative() {
                            Float::with_val(bits, &width * &sig) + lo
                        } else {
                            Float::with_val(bits, hi) - width * comp
                        };
                        (x, jac)
                    }
                    Outer::Whole => unreachable!("tanh-sinh is not used on the real line"),
                }
            }
        }
    }
}

/// A panel `[a, b]` in the parameter variable with its single-rule estimate
/// and, once refined, the two-half-panel estimate and error.
struct Panel {
    a: Float,
    b: Float,
    whole: Vec<Float>,
    refined: Option<Refined>,
}

struct Refined {
    left: Vec<Float>,
    right: Vec<Float>,
    value: Vec<Float>,
    abs: Vec<Float>,
    error: Vec<Float>,
}

struct Engine<'a, F> {
    f: &'a F,
    width: usize,
    transform: Transform,
    rule: &'a CanonicalRule,
    bits: u32,
}

impl<F> Engine<'_, F>
where
    F: Fn(&Float, &mut [Float]) -> Result<(), QuadError> + Sync,
{
    /// Gauss–Legendre sums of `f` and `|f|` on `[a, b]`.
    fn panel_sums(&self, a: &Float, b: &Float) -> Result<(Vec<Float>, Vec<Float>), QuadError> {
        let bits = self.bits;
        let half = Float::with_val(bits, b - a) / 2u32;
        let mid = Float::with_val(bits, a + b) / 2u32;
        let mut sum = vec![Float::with_val(bits, 0u32); self.width];
        let mut abs = vec![Float::with_val(bits, 0u32); self.width];
        let mut out = vec![Float::with_val(bits, 0u32); self.width];
        for (t, w) in self.rule.nodes.iter().zip(&self.rule.weights) {
            let u = Float::with_val(bits, t * &half) + &mid;
            let (x, jac) = self.transform.apply(&u, bits);
            let scale = Float::with_val(bits, &jac * w) * &half;
            if !jac.is_finite() {
                return Err(QuadError::NonFinite { x: x.to_f64() });
            }
            if scale.is_zero() {
                continue;
            }
            for o in out.iter_mut() {
                *o = Float::with_val(bits, 0u32);
            }
            (self.f)(&x, &mut out)?;
            for k in 0..self.width {
                if !out[k].is_finite() {
                    return Err(QuadError::NonFinite { x: x.to_f64() });
                }
                let term = Float::with_val(bits, &out[k] * &scale);
                abs[k] += Float::with_val(bits, term.abs_ref());
                sum[k] += term;
            }
        }
        Ok((sum, abs))
    }

    fn refine(&self, panel: &Panel) -> Result<Refined, QuadError> {
        let mid = Float::with_val(self.bits, &panel.a + &panel.b) / 2u32;
        let left = self.panel_sums(&panel.a, &mid)?;
        let right = self.panel_sums(&mid, &panel.b)?;
        let mut value = Vec::with_capacity(self.width);
        let mut abs = Vec::with_capacity(self.width);
        let mut error = Vec::with_capacity(self.width);
        for k in 0..self.width {
            let v = Float::with_val(self.bits, &left.0[k] + &right.0[k]);
            error.push(Float::with_val(self.bits, &v - &panel.whole[k]).abs());
            abs.push(Float::with_val(self.bits, &left.1[k] + &right.1[k]));
            value.push(v);
        }
        Ok(Refined {
            left: left.0,
            right: right.0,
            value,
            abs,
            error,
        })
    }
}

fn order_for(precision: Precision) -> usize {
    ((0.6 * precision.decimal_digits() as f64).ceil() as usize).clamp(16, 128)
}

/// Integrate `width` components at once. `f(x, out)` fills `out` with the
/// integrand values at `x`; `out` is zeroed before each call.
pub(crate) fn integrate_batch<F>(
    f: F,
    width: usize,
    domain: Domain,
    precision: Precision,
    tol: f64,
    mode: TolMode,
    options: &QuadOptions,
) -> Result<BatchIntegral, QuadError>
where
    F: Fn(&Float, &mut [Float]) -> Result<(), QuadError> + Sync,
{
    if !(tol > 0.0) {
        return Err(QuadError::Invalid(format!(
            "tolerance {tol} must be positive"
        )));
    }
    let bits = precision.bits() + 32;
    let transform = Transform::new(domain, options, bits);
    let rule = canonical_rule(order_for(precision), bits);
    let engine = Engine {
        f: &f,
        width,
        transform,
        rule: &rule,
        bits,
    };

    let (ua, ub) = transform.param_range();
    let mut cuts: Vec<f64> = (0..=8).map(|k| ua + (ub - ua) * k as f64 / 8.0).collect();
    for &x in &options.breakpoints {
        if x > domain.lo && x < domain.hi {
            let u = transform.param_of(x);
            if u.is_finite() && u > ua && u < ub {
                cuts.push(u);
            }
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (ub - ua));

    let initial: Vec<(Float, Float)> = cuts
        .windows(2)
        .map(|w| (Float::with_val(bits, w[0]), Float::with_val(bits, w[1])))
        .collect();
    let sums: Vec<_> = initial
        .par_iter()
        .map(|(a, b)| engine.panel_sums(a, b))
        .collect::<Result<_, _>>()?;
    let mut panels: Vec<Panel> = initial
        .into_iter()
        .zip(sums)
        .map(|((a, b), (whole, _))| Panel {
            a,
            b,
            whole,
            refined: None,
        })
        .collect();

    loop {
        let pending: Vec<usize> = (0..panels.len())
            .filter(|&i| panels[i].refined.is_none())
            .collect();
        let refined: Vec<Refined> = pending
            .par_iter()
            .map(|&i| engine.refine(&panels[i]))
            .collect::<Result<_, _>>()?;
        for (i, r) in pending.into_iter().zip(refined) {
            panels[i].refined = Some(r);
        }

        let mut values = vec![Float::with_val(bits, 0u32); width];
        let mut l1 = vec![Float::with_val(bits, 0u32); width];
        let mut errors = vec![Float::with_val(bits, 0u32); width];
        for p in &panels {
            let r = p.refined.as_ref().expect("all panels refined");
            for k in 0..width {
                values[k] += &r.value[k];
                l1[k] += &r.abs[k];
                errors[k] += &r.error[k];
            }
        }
        let scale: Vec<Float> = match mode {
            TolMode::Absolute => vec![Float::with_val(bits, 1u32); width],
            TolMode::Relative => l1.clone(),
        };
        // Normalized error of each panel: worst component relative to its scale.
        let panel_err: Vec<f64> = panels
            .iter()
            .map(|p| {
                let r = p.refined.as_ref().unwrap();
                (0..width)
                    .filter(|&k| !scale[k].is_zero())
                    .map(|k| Float::with_val(bits, &r.error[k] / &scale[k]).to_f64())
                    .fold(0.0, f64::max)
            })
            .collect();
        let total: f64 = panel_err.iter().sum();
        if total <= tol {
            let out = |v: Vec<Float>| -> Vec<Float> {
                v.into_iter()
                    .map(|x| Float::with_val(precision.bits(), x))
                    .collect()
            };
            return Ok(BatchIntegral {
                values: out(values),
                errors: out(errors),
                panels: panels.len(),
            });
        }

        let threshold = tol / panels.len() as f64;
        let n_split = panel_err.iter().filter(|&&e| e > threshold).count();
        if panels.len() + n_split > MAX_PANELS {
            let (worst, err) =
                panel_err.iter().enumerate().fold(
                    (0, 0.0),
                    |acc, (i, &e)| if e > acc.1 { (i, e) } else { acc },
                );
            let (lo, _) = transform.apply(&panels[worst].a, bits);
            let (hi, _) = transform.apply(&panels[worst].b, bits);
            return Err(QuadError::Budget {
                panels: panels.len(),
                lo: lo.to_f64(),
                hi: hi.to_f64(),
                error: err,
            });
        }
        let n_panels = panels.len();
        let mut next = Vec::with_capacity(n_panels + n_split);
        for (p, e) in panels.into_iter().zip(panel_err) {
            if e > threshold {
                let r = p.refined.expect("refined");
                let mid = Float::with_val(bits, &p.a + &p.b) / 2u32;
                if mid <= p.a || mid >= p.b {
                    let (lo, _) = transform.apply(&p.a, bits);
                    let (hi, _) = transform.apply(&p.b, bits);
                    return Err(QuadError::Budget {
                        panels: n_panels,
                        lo: lo.to_f64(),
                        hi: hi.to_f64(),
                        error: e,
                    });
                }
                next.push(Panel {
                    a: p.a,
                    b: mid.clone(),
                    whole: r.left,
                    refined: None,
                });
                next.push(Panel {
                    a: mid,
                    b: p.b,
                    whole: r.right,
                    refined: None,
                });
            } else {
                next.push(p);
            }
        }
        panels = next;
    }
}
