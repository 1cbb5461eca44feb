//! Level statistics built on a two-point kernel: densities, unfolding,
//! Nyström discretization, gap functions and spacing distributions.

mod density;
mod nystrom;
mod pipeline;
mod spacing;
mod unfold;

use thiserror::Error;

use crate::kernel::KernelError;
use crate::quadrature::QuadError;

pub use density::{density, DensityCurve, Normalization};
pub use nystrom::{fredholm_det, gap_levels, nystrom, DiscreteKernel, GapLevels};
pub use pipeline::{density_median, density_quantile, gap_statistics, GapRun, Placement};
pub use spacing::{
    differentiate, gap_table, spacing_functions, GapMode, GapTable, SGrid, DEFAULT_DS, DEFAULT_SMAX,
};
pub use unfold::{UnfoldOptions, UnfoldedKernel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
    #[error("center {center} is too close to a spectral edge: density {density:e} is below {threshold:e}")]
    NearEdge {
        center: f64,
        density: f64,
        threshold: f64,
    },
    #[error("cumulative density is not monotone near x = {x} (density {density:e})")]
    NonMonotone { x: f64, density: f64 },
    #[error("eigenvalue {re} + {im}i has an imaginary part above {bound:e}")]
    ComplexEigenvalue { re: f64, im: f64, bound: f64 },
    #[error("s-grid too coarse at s = {s}: Richardson estimates differ by {disagreement:e}")]
    GridTooCoarse { s: f64, disagreement: f64 },
    #[error("{0}")]
    Invalid(String),
}
