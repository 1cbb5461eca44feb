//! Two-point kernels, densities, gap functions and spacing distributions for
//! determinantal log-gas and biorthogonal (Muttalib–Borodin) ensembles.
//!
//! The pipeline runs ensemble spec → Gram matrix (multiprecision) → kernel →
//! density / unfolded kernel → Nyström gap probabilities → spacing
//! distributions. Reference limit kernels and a Metropolis sampler provide
//! independent checks.

// `!(a < b)` is used on purpose so that NaN fails validation.
#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop,
    clippy::type_complexity
)]

pub mod cli;
pub mod ensemble;
pub mod expr;
pub mod gram;
pub mod io;
pub mod kernel;
pub mod mc;
pub mod precision;
pub mod quadrature;
pub mod reference;
pub mod stats;

use thiserror::Error;

use ensemble::EnsembleError;
use gram::GramError;
use kernel::KernelError;
use mc::McError;
use reference::ReferenceError;
use stats::StatsError;

/// Coarse failure class, used for process exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad input: config, flags or an ensemble the method cannot handle.
    Config,
    /// A computation failed to reach its tolerance or produced garbage.
    Numeric,
    /// Reading or writing files.
    Io,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 3,
            ErrorKind::Numeric => 4,
            ErrorKind::Io => 5,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("ensemble: {0}")]
    Ensemble(#[from] EnsembleError),
    #[error("gram: {0}")]
    Gram(#[from] GramError),
    #[error("kernel: {0}")]
    Kernel(#[from] KernelError),
    #[error("stats: {0}")]
    Stats(#[from] StatsError),
    #[error("reference: {0}")]
    Reference(#[from] ReferenceError),
    #[error("mc: {0}")]
    Mc(#[from] McError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Config(String),
}

fn gram_kind(e: &GramError) -> ErrorKind {
    match e {
        GramError::Ensemble(_) | GramError::GammaUnsupported(_) => ErrorKind::Config,
        GramError::Cache(_) => ErrorKind::Io,
        _ => ErrorKind::Numeric,
    }
}

fn kernel_kind(e: &KernelError) -> ErrorKind {
    match e {
        KernelError::Ensemble(_) | KernelError::OutsideSupport { .. } => ErrorKind::Config,
        KernelError::Gram(g) => gram_kind(g),
        _ => ErrorKind::Numeric,
    }
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Ensemble(_) | Error::Config(_) => ErrorKind::Config,
            Error::Gram(e) => gram_kind(e),
            Error::Kernel(e) => kernel_kind(e),
            Error::Stats(e) => match e {
                StatsError::Kernel(k) => kernel_kind(k),
                StatsError::Invalid(_) | StatsError::NearEdge { .. } => ErrorKind::Config,
                _ => ErrorKind::Numeric,
            },
            Error::Reference(e) => match e {
                ReferenceError::Invalid(_) => ErrorKind::Config,
                _ => ErrorKind::Numeric,
            },
            Error::Mc(e) => match e {
                McError::Ensemble(_) | McError::Invalid(_) => ErrorKind::Config,
                McError::EmptyChain => ErrorKind::Numeric,
            },
            Error::Io { .. } => ErrorKind::Io,
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.kind().exit_code()
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub use ensemble::{EnsembleConfig, EnsembleSpec};
pub use gram::{GramCache, GramMatrix, PrecisionPolicy};
pub use kernel::{KernelEvaluator, TwoPointKernel};
pub use precision::Precision;
