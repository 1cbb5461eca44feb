//! Kernel → gap table in one call, with the interval placement chosen by
//! the caller: unfolded around a bulk point, raw around a point, or from the
//! lower end of the support.

use super::{
    density, gap_table, GapMode, GapTable, Normalization, SGrid, StatsError, UnfoldOptions,
    UnfoldedKernel,
};
use crate::kernel::KernelEvaluator;

/// Where the gap intervals sit. A missing center means the median of ρ.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Placement {
    Unfolded { center: Option<f64> },
    Centered { center: Option<f64> },
    HardEdge,
}

#[derive(Clone, Debug)]
pub struct GapRun {
    pub table: GapTable,
    pub mode: &'static str,
    pub center: Option<f64>,
    pub origin: Option<f64>,
    /// `max |K̃(ξ, ξ) − 1|` over the s-range, for unfolded runs.
    pub flatness: Option<f64>,
}

/// Point splitting the mass of ρ in half (scaled coordinates).
pub fn density_median(k: &KernelEvaluator) -> Result<f64, StatsError> {
    density_quantile(k, 0.5)
}

/// Point below which a fraction `p` of the mass of ρ lies (scaled
/// coordinates), from a trapezoid rule on the density extent.
pub fn density_quantile(k: &KernelEvaluator, p: f64) -> Result<f64, StatsError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(StatsError::Invalid(format!(
            "quantile {p} must lie in (0, 1)"
        )));
    }
    let (lo, hi) = k.extent(1e-12)?;
    let xs: Vec<f64> = (0..=4000)
        .map(|i| lo + (hi - lo) * i as f64 / 4000.0)
        .collect();
    let d = density(k, &xs, Normalization::ParticleCount)?;
    let target = p * d.integral();
    let mut cum = 0.0;
    for i in 1..xs.len() {
        let step = 0.5 * (d.rho[i] + d.rho[i - 1]) * (xs[i] - xs[i - 1]);
        if cum + step >= target && step > 0.0 {
            return Ok(xs[i - 1] + (target - cum) / step * (xs[i] - xs[i - 1]));
        }
        cum += step;
    }
    Err(StatsError::Invalid(
        "density has no mass on its extent".into(),
    ))
}

/// Gap table of `k` with `n = 0..=n_max` on `grid`, Nyström order `m`.
pub fn gap_statistics(
    k: KernelEvaluator,
    placement: Placement,
    grid: SGrid,
    m: usize,
    n_max: usize,
) -> Result<GapRun, StatsError> {
    match placement {
        Placement::HardEdge => {
            let origin = k.support().lo;
            if !origin.is_finite() {
                return Err(StatsError::Invalid(
                    "hard-edge gaps need a finite lower support end".into(),
                ));
            }
            let table = gap_table(&k, GapMode::HardEdge { origin }, grid, m, n_max)?;
            Ok(GapRun {
                table,
                mode: "hard_edge",
                center: None,
                origin: Some(origin),
                flatness: None,
            })
        }
        Placement::Centered { center } => {
            let center = match center {
                Some(c) => c,
                None => density_median(&k)?,
            };
            let table = gap_table(&k, GapMode::Centered { center }, grid, m, n_max)?;
            Ok(GapRun {
                table,
                mode: "centered",
                center: Some(center),
                origin: None,
                flatness: None,
            })
        }
        Placement::Unfolded { center } => {
            let center = match center {
                Some(c) => c,
                None => density_median(&k)?,
            };
            let options = UnfoldOptions {
                half_window: UnfoldOptions::default().half_window.max(0.5 * grid.smax),
                ..UnfoldOptions::default()
            };
            let u = UnfoldedKernel::new(k, center, options)?;
            let flatness = u.flatness(0.5 * grid.smax, 200)?;
            let table = gap_table(&u, GapMode::Centered { center: 0.0 }, grid, m, n_max)?;
            Ok(GapRun {
                table,
                mode: "unfolded",
                center: Some(center),
                origin: None,
                flatness: Some(flatness),
            })
        }
    }
}
