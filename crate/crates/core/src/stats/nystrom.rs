//! Nyström discretization of `∫_a^b K(x, y) f(y) dy = λ f(x)` and the gap
//! probabilities derived from its spectrum.

use nalgebra::DMatrix;

use super::StatsError;
use crate::kernel::TwoPointKernel;
use crate::quadrature::gauss_legendre_f64;

/// Imaginary parts below this multiple of `‖A‖` are treated as noise.
const IMAG_TOLERANCE: f64 = 1e-8;
/// Eigenvalues outside `[0, 1]` by more than this are flagged as clipped.
const CLIP_TOLERANCE: f64 = 1e-10;

/// `A_ij = K(x_i, x_j) w_j` on Gauss–Legendre nodes of `[a, b]`.
#[derive(Clone, Debug)]
pub struct DiscreteKernel {
    pub a: f64,
    pub b: f64,
    pub order: usize,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub matrix: DMatrix<f64>,
    pub symmetric: bool,
}

pub fn nystrom<K: TwoPointKernel + ?Sized>(
    kernel: &K,
    a: f64,
    b: f64,
    m: usize,
) -> Result<DiscreteKernel, StatsError> {
    if m < 4 {
        return Err(StatsError::Invalid(format!(
            "Nyström order {m} must be at least 4"
        )));
    }
    if !(a.is_finite() && b.is_finite() && a <= b) {
        return Err(StatsError::Invalid(format!(
            "invalid Nyström interval [{a}, {b}]"
        )));
    }
    if a == b {
        return Ok(DiscreteKernel {
            a,
            b,
            order: m,
            nodes: vec![a; m],
            weights: vec![0.0; m],
            matrix: DMatrix::zeros(m, m),
            symmetric: kernel.is_symmetric(),
        });
    }
    let (nodes, weights) = gauss_legendre_f64(m, a, b)?;
    let mut matrix = kernel.matrix(&nodes)?;
    for j in 0..m {
        for i in 0..m {
            matrix[(i, j)] *= weights[j];
        }
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::Invalid(format!(
            "kernel matrix on [{a}, {b}] is not finite"
        )));
    }
    Ok(DiscreteKernel {
        a,
        b,
        order: m,
        nodes,
        weights,
        matrix,
        symmetric: kernel.is_symmetric(),
    })
}

/// `det(I − A)` from an LU factorization, accumulated as a log-magnitude.
pub fn fredholm_det(d: &DiscreteKernel) -> f64 {
    let m = d.matrix.nrows();
    let lu = (DMatrix::identity(m, m) - &d.matrix).lu();
    let u = lu.u();
    let mut log_abs = 0.0;
    let mut sign = if lu.p().determinant::<f64>() < 0.0 {
        -1.0
    } else {
        1.0
    };
    for i in 0..m {
        let v = u[(i, i)];
        if v == 0.0 {
            return 0.0;
        }
        if v < 0.0 {
            sign = -sign;
        }
        log_abs += v.abs().ln();
    }
    sign * log_abs.exp()
}

/// Gap probabilities `E(n; J)` for `n = 0..=n_max` with the spectrum used.
#[derive(Clone, Debug)]
pub struct GapLevels {
    pub e: Vec<f64>,
    /// Real eigenvalues of `A`, descending.
    pub eigenvalues: Vec<f64>,
    /// Some eigenvalue fell outside `[0, 1]` beyond rounding and was clipped.
    pub clipped: bool,
}

impl DiscreteKernel {
    /// Real spectrum of `A`. Symmetric kernels are symmetrized as
    /// `√w_i K_ij √w_j`; otherwise a general eigensolver is used and small
    /// imaginary parts are dropped.
    pub fn eigenvalues(&self) -> Result<Vec<f64>, StatsError> {
        let m = self.matrix.nrows();
        if self.weights.iter().all(|&w| w == 0.0) {
            return Ok(vec![0.0; m]);
        }
        let mut values: Vec<f64> = if self.symmetric {
            let sw: Vec<f64> = self.weights.iter().map(|w| w.sqrt()).collect();
            let sym = DMatrix::from_fn(m, m, |i, j| {
                let a = self.matrix[(i, j)] / self.weights[j] * sw[i] * sw[j];
                let b = self.matrix[(j, i)] / self.weights[i] * sw[i] * sw[j];
                0.5 * (a + b)
            });
            sym.symmetric_eigenvalues().iter().cloned().collect()
        } else {
            let norm = self.matrix.norm();
            let bound = IMAG_TOLERANCE * norm.max(f64::MIN_POSITIVE);
            let mut out = Vec::with_capacity(m);
            for z in self.matrix.complex_eigenvalues().iter() {
                if z.im.abs() > bound {
                    return Err(StatsError::ComplexEigenvalue {
                        re: z.re,
                        im: z.im,
                        bound,
                    });
                }
                out.push(z.re);
            }
            out
        };
        values.sort_by(|a, b| b.partial_cmp(a).expect("finite eigenvalues"));
        Ok(values)
    }
}

/// `E(n; J)` from the generating function `Π_k (1 − λ_k + λ_k z) = Σ_n E(n) zⁿ`,
/// expanded one factor at a time. Every factor has nonnegative coefficients
/// when `λ_k ∈ [0, 1]`, so the expansion involves no cancellation.
pub fn gap_levels(d: &DiscreteKernel, n_max: usize) -> Result<GapLevels, StatsError> {
    let raw = d.eigenvalues()?;
    let mut clipped = false;
    let lambdas: Vec<f64> = raw
        .iter()
        .map(|&l| {
            if !(-CLIP_TOLERANCE..=1.0 + CLIP_TOLERANCE).contains(&l) {
                clipped = true;
            }
            l.clamp(0.0, 1.0)
        })
        .collect();
    let mut poly = vec![0.0; lambdas.len() + 1];
    poly[0] = 1.0;
    for (k, &l) in lambdas.iter().enumerate() {
        for n in (0..=k + 1).rev() {
            let stay = poly[n] * (1.0 - l);
            let add = if n > 0 { poly[n - 1] * l } else { 0.0 };
            poly[n] = stay + add;
        }
    }
    let e = (0..=n_max)
        .map(|n| poly.get(n).copied().unwrap_or(0.0))
        .collect();
    Ok(GapLevels {
        e,
        eigenvalues: raw,
        clipped,
    })
}
