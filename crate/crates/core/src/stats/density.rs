use rayon::prelude::*;

use super::StatsError;
use crate::kernel::KernelEvaluator;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Normalization {
    /// `∫ ρ = N`.
    ParticleCount,
    /// `∫ ρ = 1`.
    Unit,
}

impl Normalization {
    pub fn name(self) -> &'static str {
        match self {
            Normalization::ParticleCount => "particle_count",
            Normalization::Unit => "unit",
        }
    }
}

/// Density samples on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityCurve {
    pub xs: Vec<f64>,
    pub rho: Vec<f64>,
    pub normalization: Normalization,
}

impl DensityCurve {
    pub fn new(
        xs: Vec<f64>,
        rho: Vec<f64>,
        normalization: Normalization,
    ) -> Result<Self, StatsError> {
        if xs.len() != rho.len() || xs.is_empty() {
            return Err(StatsError::Invalid(
                "density grid and values must have equal, nonzero length".into(),
            ));
        }
        if xs.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(StatsError::Invalid(
                "density grid must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            xs,
            rho,
            normalization,
        })
    }

    /// Trapezoid integral over the grid.
    pub fn integral(&self) -> f64 {
        self.xs
            .windows(2)
            .zip(self.rho.windows(2))
            .map(|(x, r)| 0.5 * (x[1] - x[0]) * (r[0] + r[1]))
            .sum()
    }

    /// `∫ x^k ρ` by the trapezoid rule.
    pub fn moment(&self, k: i32) -> f64 {
        let f: Vec<f64> = self
            .xs
            .iter()
            .zip(&self.rho)
            .map(|(x, r)| x.powi(k) * r)
            .collect();
        self.xs
            .windows(2)
            .zip(f.windows(2))
            .map(|(x, v)| 0.5 * (x[1] - x[0]) * (v[0] + v[1]))
            .sum()
    }

    /// Linear interpolation; zero outside the grid.
    pub fn interpolate(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x < self.xs[0] || x > self.xs[n - 1] {
            return 0.0;
        }
        let i = self.xs.partition_point(|&v| v <= x).clamp(1, n - 1);
        let (x0, x1) = (self.xs[i - 1], self.xs[i]);
        let t = if x1 > x0 { (x - x0) / (x1 - x0) } else { 0.0 };
        self.rho[i - 1] * (1.0 - t) + self.rho[i] * t
    }

    /// `∫_lo^hi |ρ(x) − f(x)| dx`, with `ρ` interpolated linearly and the
    /// integral taken by a composite Simpson rule on `samples` intervals.
    pub fn l1_distance<F: Fn(f64) -> f64>(&self, f: F, lo: f64, hi: f64, samples: usize) -> f64 {
        let m = samples.max(2) & !1;
        let h = (hi - lo) / m as f64;
        (0..=m)
            .map(|k| {
                let x = lo + h * k as f64;
                let c = if k == 0 || k == m {
                    1.0
                } else if k % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                c * (self.interpolate(x) - f(x)).abs()
            })
            .sum::<f64>()
            * h
            / 3.0
    }
}

/// `ρ(x_i) = K(x_i, x_i)`, divided by `N` for unit normalization.
pub fn density(
    k: &KernelEvaluator,
    grid: &[f64],
    normalization: Normalization,
) -> Result<DensityCurve, StatsError> {
    let divisor = match normalization {
        Normalization::ParticleCount => 1.0,
        Normalization::Unit => k.n() as f64,
    };
    let rho = grid
        .par_iter()
        .map(|&x| k.density_at(x).map(|r| r / divisor))
        .collect::<Result<Vec<_>, _>>()?;
    DensityCurve::new(grid.to_vec(), rho, normalization)
}
