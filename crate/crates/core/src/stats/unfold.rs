//! Unfolding: the change of variable `ξ = N(x) − N(x_c)` with
//! `N(x) = ∫^x ρ`, under which the density is identically one.
//!
//! `ρ` is replaced on a window around the center by a Chebyshev interpolant,
//! whose antiderivative is exact; the unfolded kernel uses the same
//! interpolant for its Jacobian, so `K̃(ξ, ξ) − 1` measures the
//! interpolation error directly.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::StatsError;
use crate::kernel::{KernelError, KernelEvaluator, NodeFactors, TwoPointKernel};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnfoldOptions {
    /// Unfolded half-width `ξ_max` that the window must cover.
    pub half_window: f64,
    /// The center density must be at least this fraction of the mean density
    /// `N / |extent|`, the extent being where ρ exceeds 10⁻⁶ of its maximum.
    pub bulk_fraction: f64,
    /// Largest Chebyshev degree tried for the density interpolant.
    pub max_degree: usize,
}

impl Default for UnfoldOptions {
    fn default() -> Self {
        Self {
            half_window: 2.0,
            bulk_fraction: 0.1,
            max_degree: 1024,
        }
    }
}

/// Chebyshev series on `[lo, hi]`.
#[derive(Clone, Debug)]
struct Chebyshev {
    lo: f64,
    hi: f64,
    coef: Vec<f64>,
}

impl Chebyshev {
    fn nodes(n: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..n)
            .map(|j| {
                let t = (std::f64::consts::PI * (j as f64 + 0.5) / n as f64).cos();
                0.5 * (lo + hi) + 0.5 * (hi - lo) * t
            })
            .collect()
    }

    fn from_values(values: &[f64], lo: f64, hi: f64) -> Self {
        let n = values.len();
        let coef = (0..n)
            .map(|k| {
                let sum: f64 = values
                    .iter()
                    .enumerate()
                    .map(|(j, v)| {
                        v * (std::f64::consts::PI * k as f64 * (j as f64 + 0.5) / n as f64).cos()
                    })
                    .sum();
                let c = 2.0 * sum / n as f64;
                if k == 0 {
                    0.5 * c
                } else {
                    c
                }
            })
            .collect();
        Self { lo, hi, coef }
    }

    fn t(&self, x: f64) -> f64 {
        (2.0 * x - self.lo - self.hi) / (self.hi - self.lo)
    }

    /// Clenshaw summation.
    fn eval(&self, x: f64) -> f64 {
        let t = self.t(x);
        let (mut b1, mut b2) = (0.0, 0.0);
        for &c in self.coef.iter().skip(1).rev() {
            let b0 = 2.0 * t * b1 - b2 + c;
            b2 = b1;
            b1 = b0;
        }
        t * b1 - b2 + self.coef[0]
    }

    /// Antiderivative vanishing at `x0`.
    fn integral(&self, x0: f64) -> Self {
        let n = self.coef.len();
        let half = 0.5 * (self.hi - self.lo);
        let c = |k: usize| if k < n { self.coef[k] } else { 0.0 };
        let mut out = vec![0.0; n + 1];
        for k in 1..=n {
            // ∫T_k = T_{k+1}/(2(k+1)) − T_{k−1}/(2(k−1)), ∫T_0 = T_1
            let prev = if k == 1 { 2.0 * c(0) } else { c(k - 1) };
            out[k] = half * (prev - c(k + 1)) / (2.0 * k as f64);
        }
        let mut s = Self {
            lo: self.lo,
            hi: self.hi,
            coef: out,
        };
        s.coef[0] = -s.eval(x0);
        s
    }

    fn tail_ratio(&self) -> f64 {
        let scale = self.coef.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        let tail = self.coef[self.coef.len() - 4..]
            .iter()
            .fold(0.0f64, |m, c| m.max(c.abs()));
        tail / scale
    }
}

/// A kernel expressed in unfolded coordinates around a bulk point.
#[derive(Clone, Debug)]
pub struct UnfoldedKernel {
    base: KernelEvaluator,
    center: f64,
    rho: Chebyshev,
    cumulative: Chebyshev,
    xi_range: (f64, f64),
}

impl UnfoldedKernel {
    pub fn new(
        base: KernelEvaluator,
        center: f64,
        options: UnfoldOptions,
    ) -> Result<Self, StatsError> {
        let support = base.support();
        // Compare with the mean density rather than the peak: at hard edges
        // and in critical ensembles the peak is an edge spike.
        let (ext_lo, ext_hi) = base.extent(1e-6)?;
        let mean = base.n() as f64 / (ext_hi - ext_lo);
        let rho_c = base.density_at(center)?;
        let threshold = options.bulk_fraction * mean;
        if !(rho_c >= threshold && rho_c > 0.0) {
            return Err(StatsError::NearEdge {
                center,
                density: rho_c,
                threshold,
            });
        }
        let need = options.half_window;
        let mut delta = (need + 1.0) / rho_c;
        for _ in 0..12 {
            let lo = (center - delta).max(support.lo);
            let hi = (center + delta).min(support.hi);
            let rho = Self::interpolate(&base, lo, hi, options.max_degree)?;
            let cumulative = rho.integral(center);
            let (f_lo, f_hi) = (cumulative.eval(lo), cumulative.eval(hi));
            if f_hi >= need && -f_lo >= need {
                Self::check_positive(&rho)?;
                return Ok(Self {
                    base,
                    center,
                    rho,
                    cumulative,
                    xi_range: (f_lo, f_hi),
                });
            }
            if lo == support.lo && hi == support.hi {
                break;
            }
            if (lo == support.lo && -f_lo < need) || (hi == support.hi && f_hi < need) {
                return Err(StatsError::NearEdge {
                    center,
                    density: rho_c,
                    threshold,
                });
            }
            delta *= 1.5;
        }
        Err(StatsError::NearEdge {
            center,
            density: rho_c,
            threshold,
        })
    }

    fn interpolate(
        base: &KernelEvaluator,
        lo: f64,
        hi: f64,
        max_degree: usize,
    ) -> Result<Chebyshev, StatsError> {
        let mut n = 32;
        loop {
            let nodes = Chebyshev::nodes(n, lo, hi);
            let values = nodes
                .par_iter()
                .map(|&x| base.density_at(x))
                .collect::<Result<Vec<_>, _>>()?;
            let cheb = Chebyshev::from_values(&values, lo, hi);
            if cheb.tail_ratio() < 1e-13 || 2 * n > max_degree {
                return Ok(cheb);
            }
            n *= 2;
        }
    }

    fn check_positive(rho: &Chebyshev) -> Result<(), StatsError> {
        let m = 20 * rho.coef.len();
        for k in 0..=m {
            let x = rho.lo + (rho.hi - rho.lo) * k as f64 / m as f64;
            let d = rho.eval(x);
            if !(d > 0.0) {
                return Err(StatsError::NonMonotone { x, density: d });
            }
        }
        Ok(())
    }

    pub fn base(&self) -> &KernelEvaluator {
        &self.base
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    /// Unfolded coordinates covered by the interpolation window.
    pub fn window(&self) -> (f64, f64) {
        self.xi_range
    }

    /// `ξ(x) = N(x) − N(x_c)`.
    pub fn to_xi(&self, x: f64) -> f64 {
        self.cumulative.eval(x)
    }

    /// Inverse map by Newton iteration safeguarded with bisection.
    pub fn to_x(&self, xi: f64) -> Result<f64, KernelError> {
        let (a, b) = self.xi_range;
        if !(xi >= a && xi <= b) {
            return Err(KernelError::OutsideSupport {
                x: xi,
                lo: a,
                hi: b,
            });
        }
        let (mut lo, mut hi) = (self.rho.lo, self.rho.hi);
        let mut x = self.center + xi / self.rho.eval(self.center);
        if !(x > lo && x < hi) {
            x = 0.5 * (lo + hi);
        }
        for _ in 0..200 {
            let f = self.cumulative.eval(x) - xi;
            if f > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let step = f / self.rho.eval(x);
            let mut next = x - step;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - x).abs() <= 1e-15 * (1.0 + x.abs()) || hi - lo <= 1e-15 * (1.0 + x.abs()) {
                return Ok(next);
            }
            x = next;
        }
        Ok(x)
    }

    /// Unfolded density `K̃(ξ, ξ)`, equal to one up to interpolation error.
    pub fn density(&self, xi: f64) -> Result<f64, KernelError> {
        self.eval(xi, xi)
    }

    /// `max |K̃(ξ, ξ) − 1|` over `samples + 1` equispaced points in `[−h, h]`.
    pub fn flatness(&self, half_width: f64, samples: usize) -> Result<f64, KernelError> {
        (0..=samples)
            .into_par_iter()
            .map(|k| {
                let xi = -half_width + 2.0 * half_width * k as f64 / samples as f64;
                self.density(xi).map(|d| (d - 1.0).abs())
            })
            .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
    }

    fn node(&self, xi: f64) -> Result<(NodeFactors, f64), KernelError> {
        let x = self.to_x(xi)?;
        Ok((self.base.factors(x)?, self.rho.eval(x)))
    }
}

impl TwoPointKernel for UnfoldedKernel {
    fn eval(&self, xi: f64, eta: f64) -> Result<f64, KernelError> {
        let (a, ra) = self.node(xi)?;
        let (b, rb) = self.node(eta)?;
        Ok(self.base.pair(&a, &b) / (ra * rb).sqrt())
    }

    fn matrix(&self, nodes: &[f64]) -> Result<DMatrix<f64>, KernelError> {
        let f: Vec<(NodeFactors, f64)> = nodes
            .par_iter()
            .map(|&u| self.node(u))
            .collect::<Result<_, _>>()?;
        let m = nodes.len();
        let values: Vec<f64> = (0..m * m)
            .into_par_iter()
            .map(|ij| {
                let (a, ra) = &f[ij / m];
                let (b, rb) = &f[ij % m];
                self.base.pair(a, b) / (ra * rb).sqrt()
            })
            .collect();
        Ok(DMatrix::from_row_slice(m, m, &values))
    }

    fn is_symmetric(&self) -> bool {
        self.base.is_symmetric()
    }
}
