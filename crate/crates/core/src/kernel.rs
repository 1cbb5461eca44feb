//! The finite-N two-point kernel
//! `K_N(x, y) = √(w(x) w(y)) Σ_{k,l} c_kl r(x)^k s(y)^l` built from an
//! inverted Gram matrix, with `c_kl = (G⁻¹)_lk` so that `K` reproduces
//! itself under `∫ K(x, y) K(y, z) dy`.
//!
//! A kernel may be viewed in scaled coordinates `u = x / c`, in which it
//! reads `c·K(c u, c v)`; the density then still integrates to `N`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use rug::Float;
use thiserror::Error;

use crate::ensemble::{EnsembleError, EnsembleSpec, Support};
use crate::gram::{
    quad_options, solve_gram_cached, GramCache, GramError, GramMatrix, PrecisionPolicy,
};
use crate::precision::Precision;
use crate::quadrature::{integrate_batch, Domain, QuadError, TolMode};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Gram(#[from] GramError),
    #[error("point {x} lies outside the support [{lo}, {hi}]")]
    OutsideSupport { x: f64, lo: f64, hi: f64 },
    #[error("Gram matrix has not been inverted")]
    NotInverted,
    #[error("kernel is not finite at ({x}, {y})")]
    NonFinite { x: f64, y: f64 },
    #[error("auto-scaling failed: {0}")]
    Scale(String),
    #[error("{0}")]
    Other(String),
}

/// Any two-point kernel that can be sampled at node pairs.
pub trait TwoPointKernel: Sync {
    fn eval(&self, x: f64, y: f64) -> Result<f64, KernelError>;

    /// `K(x_i, x_j)` for all node pairs.
    fn matrix(&self, nodes: &[f64]) -> Result<DMatrix<f64>, KernelError> {
        let m = nodes.len();
        let values: Vec<f64> = (0..m * m)
            .into_par_iter()
            .map(|ij| self.eval(nodes[ij / m], nodes[ij % m]))
            .collect::<Result<_, _>>()?;
        Ok(DMatrix::from_row_slice(m, m, &values))
    }

    fn is_symmetric(&self) -> bool {
        false
    }
}

/// Per-point factors: `left_l(x) = Σ_k (G⁻¹)_lk r(x)^k`, `right_l(x) = s(x)^l`
/// and `√w(x)`, all at the Gram precision.
#[derive(Clone, Debug)]
pub struct NodeFactors {
    pub u: f64,
    left: Vec<Float>,
    right: Vec<Float>,
    sqrt_w: Float,
}

/// Kernel bound to an ensemble and its inverted Gram matrix.
#[derive(Clone, Debug)]
pub struct KernelEvaluator {
    spec: EnsembleSpec,
    gram: GramMatrix,
    scale: f64,
    bits: u32,
}

impl KernelEvaluator {
    /// Wrap an inverted Gram matrix. The coordinate scale is taken from the
    /// spec, or chosen automatically when the spec leaves it open.
    pub fn new(spec: EnsembleSpec, gram: GramMatrix) -> Result<Self, KernelError> {
        if gram.inverse.is_none() {
            return Err(KernelError::NotInverted);
        }
        if gram.n != spec.n {
            return Err(KernelError::Other(format!(
                "Gram matrix is {0}×{0} but the ensemble has N = {1}",
                gram.n, spec.n
            )));
        }
        let bits = gram.precision.bits();
        let mut k = Self {
            spec,
            gram,
            scale: 1.0,
            bits,
        };
        k.scale = match k.spec.scale {
            Some(c) => c,
            None => k.auto_scale()?,
        };
        Ok(k)
    }

    /// Solve the Gram system under `policy` (optionally cached) and wrap it.
    pub fn build(
        spec: &EnsembleSpec,
        policy: &PrecisionPolicy,
        cache: Option<&GramCache>,
    ) -> Result<Self, KernelError> {
        let gram = solve_gram_cached(spec, policy, cache)?;
        Self::new(spec.clone(), gram)
    }

    /// The same kernel viewed at coordinate scale `c`.
    pub fn with_scale(mut self, c: f64) -> Result<Self, KernelError> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(KernelError::Scale(format!("scale {c} must be positive")));
        }
        self.scale = c;
        Ok(self)
    }

    pub fn spec(&self) -> &EnsembleSpec {
        &self.spec
    }

    pub fn gram(&self) -> &GramMatrix {
        &self.gram
    }

    pub fn n(&self) -> usize {
        self.spec.n
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Support in scaled coordinates.
    pub fn support(&self) -> Support {
        let s = self.spec.support();
        Support {
            lo: s.lo / self.scale,
            hi: s.hi / self.scale,
        }
    }

    pub fn factors(&self, u: f64) -> Result<NodeFactors, KernelError> {
        let support = self.support();
        if !support.contains(u) {
            return Err(KernelError::OutsideSupport {
                x: u,
                lo: support.lo,
                hi: support.hi,
            });
        }
        self.raw_factors(u, u * self.scale)
    }

    fn raw_factors(&self, u: f64, x: f64) -> Result<NodeFactors, KernelError> {
        self.raw_factors_mp(u, &Float::with_val(self.bits, x))
    }

    /// Factors at a multiprecision point, so that quadrature nodes are not
    /// rounded to `f64` before evaluation.
    fn raw_factors_mp(&self, u: f64, x: &Float) -> Result<NodeFactors, KernelError> {
        let bits = self.bits;
        let n = self.gram.n;
        let xm = Float::with_val(bits, x);
        let w = self.spec.weight.weight_mp(&xm, bits)?;
        let (r, s) = self.spec.maps_mp(&xm, bits)?;
        let inv = self.gram.inverse.as_ref().expect("checked in new");
        let left = (0..n)
            .map(|l| {
                let mut acc = Float::with_val(bits, 0u32);
                for k in (0..n).rev() {
                    acc *= &r;
                    acc += &inv[l * n + k];
                }
                acc
            })
            .collect();
        let mut right = Vec::with_capacity(n);
        let mut p = Float::with_val(bits, 1u32);
        for _ in 0..n {
            right.push(p.clone());
            p *= &s;
        }
        Ok(NodeFactors {
            u,
            left,
            right,
            sqrt_w: w.sqrt(),
        })
    }

    /// `K` between two prepared points, accumulated at full precision and
    /// rounded once.
    pub fn pair(&self, a: &NodeFactors, b: &NodeFactors) -> f64 {
        self.pair_mp(a, b).to_f64()
    }

    fn pair_mp(&self, a: &NodeFactors, b: &NodeFactors) -> Float {
        self.pair_mp_raw(a, b) * self.scale
    }

    /// `K(u, v)` in scaled coordinates.
    pub fn eval_pair(&self, u: f64, v: f64) -> Result<f64, KernelError> {
        let a = self.factors(u)?;
        let b = self.factors(v)?;
        let k = self.pair(&a, &b);
        if !k.is_finite() {
            return Err(KernelError::NonFinite { x: u, y: v });
        }
        Ok(k)
    }

    /// Density `ρ(u) = K(u, u)`.
    pub fn density_at(&self, u: f64) -> Result<f64, KernelError> {
        self.eval_pair(u, u)
    }

    /// Density at full precision (used by unfolding).
    pub fn density_mp(&self, u: f64) -> Result<Float, KernelError> {
        let a = self.factors(u)?;
        Ok(self.pair_mp(&a, &a))
    }

    /// `K(xs[i], ys[j])`, row-major, computed in parallel.
    pub fn grid(&self, xs: &[f64], ys: &[f64]) -> Result<Vec<Vec<f64>>, KernelError> {
        let fx: Vec<NodeFactors> = xs
            .par_iter()
            .map(|&u| self.factors(u))
            .collect::<Result<_, _>>()?;
        let fy: Vec<NodeFactors> = ys
            .par_iter()
            .map(|&v| self.factors(v))
            .collect::<Result<_, _>>()?;
        Ok(fx
            .par_iter()
            .map(|a| fy.iter().map(|b| self.pair(a, b)).collect())
            .collect())
    }

    /// Density at scale 1, sampled at `x`.
    fn raw_density(&self, x: f64) -> Result<f64, KernelError> {
        let a = self.raw_factors(x, x)?;
        Ok(self.pair_mp_raw(&a, &a).to_f64())
    }

    /// Scale giving the density support unit half-width (two infinite ends)
    /// or unit right edge (finite left end), located by bisection on the
    /// `10⁻⁶ · max ρ` level set. Compact supports keep scale 1.
    fn auto_scale(&self) -> Result<f64, KernelError> {
        let support = self.spec.support();
        if support.is_compact() {
            return Ok(1.0);
        }
        let (left, right) = self.raw_level_set(1e-6)?;
        let c = if support.lo.is_finite() {
            right - support.lo.max(0.0)
        } else {
            left.abs().max(right.abs())
        };
        if !(c > 0.0 && c.is_finite()) {
            return Err(KernelError::Scale(format!(
                "degenerate density extent [{left}, {right}]"
            )));
        }
        Ok(c)
    }

    /// Interval (scaled coordinates) where the density exceeds `rel` times
    /// its maximum; the whole support when it is compact.
    pub fn extent(&self, rel: f64) -> Result<(f64, f64), KernelError> {
        let support = self.support();
        if support.is_compact() {
            return Ok((support.lo, support.hi));
        }
        let (left, right) = self.raw_level_set(rel)?;
        Ok((
            (left / self.scale).max(support.lo),
            (right / self.scale).min(support.hi),
        ))
    }

    /// Outermost raw points where the density crosses `rel · max ρ`, located
    /// on an 800-sample scan of the probe extent and refined by bisection.
    fn raw_level_set(&self, rel: f64) -> Result<(f64, f64), KernelError> {
        let (a, b) = self.spec.probe_extent()?;
        const SAMPLES: usize = 800;
        let xs: Vec<f64> = (0..=SAMPLES)
            .map(|k| a + (b - a) * k as f64 / SAMPLES as f64)
            .collect();
        let rho: Vec<f64> = xs
            .par_iter()
            .map(|&x| self.raw_density(x))
            .collect::<Result<_, _>>()?;
        let peak = rho.iter().cloned().fold(0.0, f64::max);
        if !(peak > 0.0 && peak.is_finite()) {
            return Err(KernelError::Scale("density has no positive maximum".into()));
        }
        let level = rel * peak;
        let first = rho.iter().position(|&r| r >= level).expect("peak exists");
        let last = rho.iter().rposition(|&r| r >= level).expect("peak exists");
        let bisect = |inside: f64, outside: f64| -> Result<f64, KernelError> {
            let (mut i, mut o) = (inside, outside);
            for _ in 0..60 {
                let mid = 0.5 * (i + o);
                if self.raw_density(mid)? >= level {
                    i = mid;
                } else {
                    o = mid;
                }
            }
            Ok(0.5 * (i + o))
        };
        let right = if last + 1 < xs.len() {
            bisect(xs[last], xs[last + 1])?
        } else {
            xs[last]
        };
        let left = if first > 0 {
            bisect(xs[first], xs[first - 1])?
        } else {
            xs[first]
        };
        Ok((left, right))
    }

    /// `∫ f(y) dy` over the support in unscaled coordinates, where `f` fills
    /// `width` components from the factors at `y`.
    fn integrate_raw<F>(&self, width: usize, f: F, tol: f64) -> Result<Vec<f64>, KernelError>
    where
        F: Fn(&NodeFactors, &mut [Float]) -> Result<(), KernelError> + Sync,
    {
        let support = self.spec.support();
        let domain =
            Domain::new(support.lo, support.hi).map_err(|e| KernelError::Other(e.to_string()))?;
        let options = quad_options(&self.spec);
        let batch = integrate_batch(
            |y: &Float, out: &mut [Float]| {
                let yf = y.to_f64();
                let fail = |e: KernelError| QuadError::Integrand {
                    x: yf,
                    message: e.to_string(),
                };
                let factors = self.raw_factors_mp(yf, y).map_err(fail)?;
                f(&factors, out).map_err(fail)
            },
            width,
            domain,
            Precision::digits(30),
            tol,
            TolMode::Absolute,
            &options,
        )
        .map_err(|e| KernelError::Other(format!("kernel integration failed: {e}")))?;
        Ok(batch.values.iter().map(Float::to_f64).collect())
    }

    /// `∫ K(x, x) dx`, which equals `N` for an exact kernel.
    pub fn trace(&self, tol: f64) -> Result<f64, KernelError> {
        let v = self.integrate_raw(
            1,
            |a, out| {
                out[0] = self.pair_mp_raw(a, a);
                Ok(())
            },
            tol,
        )?;
        Ok(v[0])
    }

    /// `|∫ K(u, w) K(w, v) dw − K(u, v)|` in scaled coordinates.
    pub fn projection_residual(&self, u: f64, v: f64, tol: f64) -> Result<f64, KernelError> {
        let a = self.factors(u)?;
        let b = self.factors(v)?;
        let direct = self.pair(&a, &b);
        // In unscaled coordinates ∫ K(x, y) K(y, z) dy = K(x, z); with the
        // scale c both sides pick up the same factor c.
        let v = self.integrate_raw(
            1,
            |m, out| {
                let left = self.pair_mp_raw(&a, m);
                let right = self.pair_mp_raw(m, &b);
                out[0] = left * right;
                Ok(())
            },
            tol / self.scale,
        )?;
        Ok((v[0] * self.scale - direct).abs())
    }

    /// `Σ_l left_l(a) right_l(b) √w(a) √w(b)` without the scale factor.
    fn pair_mp_raw(&self, a: &NodeFactors, b: &NodeFactors) -> Float {
        let bits = self.bits;
        if a.sqrt_w.is_zero() || b.sqrt_w.is_zero() {
            return Float::with_val(bits, 0u32);
        }
        let mut acc = Float::with_val(bits, 0u32);
        for (l, r) in a.left.iter().zip(&b.right) {
            acc += Float::with_val(bits, l * r);
        }
        acc * &a.sqrt_w * &b.sqrt_w
    }
}

impl TwoPointKernel for KernelEvaluator {
    fn eval(&self, x: f64, y: f64) -> Result<f64, KernelError> {
        self.eval_pair(x, y)
    }

    fn matrix(&self, nodes: &[f64]) -> Result<DMatrix<f64>, KernelError> {
        let f: Vec<NodeFactors> = nodes
            .par_iter()
            .map(|&u| self.factors(u))
            .collect::<Result<_, _>>()?;
        let m = nodes.len();
        let values: Vec<f64> = (0..m * m)
            .into_par_iter()
            .map(|ij| self.pair(&f[ij / m], &f[ij % m]))
            .collect();
        Ok(DMatrix::from_row_slice(m, m, &values))
    }

    fn is_symmetric(&self) -> bool {
        self.spec.maps.is_symmetric()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{BasicMapPair, Potential, Support};
    use crate::expr::Expression;
    use std::collections::BTreeMap;

    fn build(spec: EnsembleSpec) -> KernelEvaluator {
        KernelEvaluator::build(&spec, &PrecisionPolicy::default(), None).unwrap()
    }

    fn unit_scale(spec: EnsembleSpec) -> EnsembleSpec {
        spec.with_scale(Some(1.0)).unwrap()
    }

    /// Orthonormal Hermite functions for the weight `e^{-x²}`.
    fn hermite_functions(n: usize, x: f64) -> Vec<f64> {
        let mut phi = vec![0.0; n];
        phi[0] = std::f64::consts::PI.powf(-0.25) * (-x * x / 2.0).exp();
        if n > 1 {
            phi[1] = 2f64.sqrt() * x * phi[0];
        }
        for k in 1..n.saturating_sub(1) {
            let kf = k as f64;
            phi[k + 1] =
                (2.0 / (kf + 1.0)).sqrt() * x * phi[k] - (kf / (kf + 1.0)).sqrt() * phi[k - 1];
        }
        phi
    }

    fn hermite_cd(n: usize, x: f64, y: f64) -> f64 {
        hermite_functions(n, x)
            .iter()
            .zip(hermite_functions(n, y))
            .map(|(a, b)| a * b)
            .sum()
    }

    /// Orthonormal Laguerre functions for the weight `x^α e^{-x}`.
    fn laguerre_functions(n: usize, alpha: f64, x: f64) -> Vec<f64> {
        let mut l = vec![0.0; n];
        l[0] = 1.0;
        if n > 1 {
            l[1] = 1.0 + alpha - x;
        }
        for k in 1..n.saturating_sub(1) {
            let kf = k as f64;
            l[k + 1] = ((2.0 * kf + 1.0 + alpha - x) * l[k] - (kf + alpha) * l[k - 1]) / (kf + 1.0);
        }
        let sqrt_w = (x.powf(alpha) * (-x).exp()).sqrt();
        (0..n)
            .map(|k| {
                // ‖L_k‖² = Γ(k+α+1)/k!
                let ln_norm = ln_gamma(k as f64 + alpha + 1.0) - ln_gamma(k as f64 + 1.0);
                l[k] * sqrt_w * (-0.5 * ln_norm).exp()
            })
            .collect()
    }

    fn ln_gamma(x: f64) -> f64 {
        Float::with_val(64, x).ln_gamma().to_f64()
    }

    #[test]
    fn single_particle_uniform_kernel_is_one() {
        let k = build(EnsembleSpec::uniform(1, 0.0, 1.0).unwrap());
        assert_eq!(k.scale(), 1.0);
        for (x, y) in [(0.0, 0.0), (0.3, 0.9), (1.0, 0.2)] {
            assert!((k.eval(x, y).unwrap() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn gue_matches_hermite_christoffel_darboux() {
        let k = build(unit_scale(EnsembleSpec::gue(6)));
        let oracle = hermite_cd(6, 0.3, -0.7);
        let got = k.eval(0.3, -0.7).unwrap();
        assert!((got - oracle).abs() < 1e-13, "{got} vs {oracle}");
        for x in [-2.0, -0.4, 0.0, 1.1, 2.5] {
            let got = k.density_at(x).unwrap();
            assert!((got - hermite_cd(6, x, x)).abs() < 1e-13);
        }
    }

    #[test]
    fn symmetric_maps_give_symmetric_kernel() {
        let k = build(unit_scale(
            EnsembleSpec::mb_laguerre(7, 1.0, 0.5, "x^2").unwrap(),
        ));
        assert!(k.is_symmetric());
        for (x, y) in [(0.1, 0.9), (0.4, 2.2), (1.5, 0.05)] {
            let a = k.eval(x, y).unwrap();
            let b = k.eval(y, x).unwrap();
            assert!((a - b).abs() < 1e-14 * a.abs().max(1.0));
        }
    }

    #[test]
    fn two_particle_uniform_grid_matches_hand_expansion() {
        // On [0,1] with r = s = x: G = [[1, 1/2], [1/2, 1/3]], G⁻¹ = [[4, -6], [-6, 12]],
        // so K(x, y) = 4 - 6x - 6y + 12xy.
        let k = build(EnsembleSpec::uniform(2, 0.0, 1.0).unwrap());
        let xs = [0.0, 0.25, 0.8];
        let ys = [0.1, 0.5, 1.0];
        let grid = k.grid(&xs, &ys).unwrap();
        for (i, &x) in xs.iter().enumerate() {
            for (j, &y) in ys.iter().enumerate() {
                let hand = 4.0 - 6.0 * x - 6.0 * y + 12.0 * x * y;
                assert!((grid[i][j] - hand).abs() < 1e-14);
            }
        }
        let one = k.grid(&[0.3], &[0.6]).unwrap();
        assert_eq!(one[0][0], k.eval(0.3, 0.6).unwrap());
    }

    #[test]
    fn theta_one_matches_laguerre_kernel() {
        let alpha = 1.5;
        let n = 8;
        let k = build(unit_scale(
            EnsembleSpec::mb_laguerre(n, 1.0, alpha, "x").unwrap(),
        ));
        for (x, y) in [(0.2, 0.2), (0.5, 3.0), (4.0, 7.5), (10.0, 1.0)] {
            let oracle: f64 = laguerre_functions(n, alpha, x)
                .iter()
                .zip(laguerre_functions(n, alpha, y))
                .map(|(a, b)| a * b)
                .sum();
            let got = k.eval(x, y).unwrap();
            assert!((got - oracle).abs() < 1e-8, "({x}, {y}): {got} vs {oracle}");
        }
    }

    #[test]
    fn trace_and_reproducing_property() {
        let k = build(EnsembleSpec::mb_laguerre(5, 2.0, 0.0, "x").unwrap());
        assert!((k.trace(1e-12).unwrap() - 5.0).abs() < 1e-8 * 5.0);
        for (u, v) in [(0.1, 0.3), (0.5, 0.05), (0.7, 0.7)] {
            assert!(k.projection_residual(u, v, 1e-12).unwrap() < 1e-6);
        }
    }

    #[test]
    fn scaling_preserves_trace_and_rescales_values() {
        let base = build(unit_scale(EnsembleSpec::gue(4)));
        let scaled = base.clone().with_scale(2.0).unwrap();
        let direct = base.eval(0.6, -0.2).unwrap();
        assert!((scaled.eval(0.3, -0.1).unwrap() - 2.0 * direct).abs() < 1e-14);
        assert!((scaled.trace(1e-12).unwrap() - 4.0).abs() < 1e-10);
    }

    #[test]
    fn auto_scale_puts_gue_edge_near_one() {
        // The largest GUE eigenvalue sits near √(2N); the 10⁻⁶ level set lies
        // a little beyond it.
        let n = 10;
        let k = build(EnsembleSpec::gue(n));
        let edge = (2.0 * n as f64).sqrt();
        assert!(
            k.scale() > edge && k.scale() < 1.5 * edge,
            "scale {}",
            k.scale()
        );
        let rho_edge = k.density_at(1.0).unwrap();
        let rho_mid = k.density_at(0.0).unwrap();
        assert!((rho_edge / rho_mid - 1e-6).abs() < 1e-7);
    }

    #[test]
    fn laguerre_auto_scale_uses_right_edge() {
        let k = build(EnsembleSpec::mb_laguerre(6, 1.0, 0.0, "x").unwrap());
        // Marchenko–Pastur edge for this weight is ≈ 4N.
        assert!(k.scale() > 15.0 && k.scale() < 40.0, "scale {}", k.scale());
        assert!(k.support().lo == 0.0);
    }

    #[test]
    fn points_outside_support_are_rejected() {
        let k = build(EnsembleSpec::uniform(2, 0.0, 1.0).unwrap());
        assert!(matches!(
            k.eval(-0.1, 0.5),
            Err(KernelError::OutsideSupport { .. })
        ));
        assert!(k.grid(&[0.5], &[1.5]).is_err());
    }

    #[test]
    fn general_maps_are_biorthogonal() {
        // s(x) = e^{2x} on the real line with a quartic potential.
        let spec = EnsembleSpec::new(
            "exp-map",
            4,
            BasicMapPair::new(
                Expression::parse("x").unwrap(),
                Expression::parse("exp(2*x)").unwrap(),
            ),
            0.0,
            Potential::Expr(Expression::parse("x^4").unwrap()),
            Support::real_line(),
            BTreeMap::new(),
        )
        .unwrap()
        .with_scale(Some(1.0))
        .unwrap();
        let k = build(spec);
        assert!(!k.is_symmetric());
        assert!((k.trace(1e-12).unwrap() - 4.0).abs() < 1e-8);
        assert!(k.projection_residual(0.2, -0.4, 1e-12).unwrap() < 1e-6);
    }

    #[test]
    fn matrix_agrees_with_pointwise_eval() {
        let k = build(unit_scale(EnsembleSpec::mb_hermite(3, 3.0, "x^2").unwrap()));
        let nodes = [-0.8, 0.1, 0.9];
        let m = k.matrix(&nodes).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(m[(i, j)], k.eval(nodes[i], nodes[j]).unwrap());
            }
        }
    }
}
