//! Gap tables on a uniform s-grid and the spacing functions
//! `F(n; s) = −d/ds Σ_{j≤n} E(j; s)` and `p(n; s) = −d/ds Σ_{j≤n} F(j; s)`.

use rayon::prelude::*;

use super::nystrom::{gap_levels, nystrom};
use super::StatsError;
use crate::kernel::TwoPointKernel;

pub const DEFAULT_SMAX: f64 = 3.0;
pub const DEFAULT_DS: f64 = 0.02;

/// Richardson corrections larger than this fraction of `max |f'|` mean the
/// grid does not resolve the function.
const COARSE_TOLERANCE: f64 = 1e-2;

/// Uniform grid `s_k = k·ds`, `k = 0..=smax/ds`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SGrid {
    pub smax: f64,
    pub ds: f64,
}

impl Default for SGrid {
    fn default() -> Self {
        Self {
            smax: DEFAULT_SMAX,
            ds: DEFAULT_DS,
        }
    }
}

impl SGrid {
    pub fn new(smax: f64, ds: f64) -> Result<Self, StatsError> {
        if !(ds > 0.0 && smax > 0.0 && smax.is_finite()) {
            return Err(StatsError::Invalid(format!(
                "s-grid needs smax > 0 and ds > 0 (got {smax}, {ds})"
            )));
        }
        let g = Self { smax, ds };
        if g.len() < 5 {
            return Err(StatsError::Invalid("s-grid needs at least 5 points".into()));
        }
        Ok(g)
    }

    pub fn len(&self) -> usize {
        (self.smax / self.ds + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len()).map(|k| k as f64 * self.ds).collect()
    }
}

/// Where the interval of length `s` sits.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GapMode {
    /// `[c − s/2, c + s/2]`, used for unfolded bulk statistics.
    Centered { center: f64 },
    /// `[o, o + s]`, used at a hard edge without unfolding.
    HardEdge { origin: f64 },
}

impl GapMode {
    pub fn interval(self, s: f64) -> (f64, f64) {
        match self {
            GapMode::Centered { center } => (center - 0.5 * s, center + 0.5 * s),
            GapMode::HardEdge { origin } => (origin, origin + s),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GapMode::Centered { .. } => "centered",
            GapMode::HardEdge { .. } => "hard_edge",
        }
    }
}

/// `E(n; s)`, `F(n; s)`, `p(n; s)` for `n = 0..=n_max`, indexed `[n][k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GapTable {
    pub s: Vec<f64>,
    pub e: Vec<Vec<f64>>,
    pub f: Vec<Vec<f64>>,
    pub p: Vec<Vec<f64>>,
    pub n_max: usize,
    /// Nyström order, when the table came from a kernel.
    pub order: Option<usize>,
    /// Step used by the finite differences.
    pub h_diff: f64,
    /// Some Nyström spectrum needed clipping into `[0, 1]`.
    pub clipped: bool,
}

impl GapTable {
    /// `∫ p(0; s) ds` over the grid.
    pub fn p0_integral(&self) -> f64 {
        simpson(&self.p[0], self.h_diff)
    }

    /// `∫ s p(0; s) ds` over the grid.
    pub fn mean_spacing(&self) -> f64 {
        let sp: Vec<f64> = self.s.iter().zip(&self.p[0]).map(|(s, p)| s * p).collect();
        simpson(&sp, self.h_diff)
    }
}

/// Composite Simpson rule on uniform samples (3/8 rule on the last three
/// intervals when their count is odd).
pub(crate) fn simpson(y: &[f64], h: f64) -> f64 {
    let n = y.len() - 1;
    match n {
        0 => 0.0,
        1 => 0.5 * h * (y[0] + y[1]),
        2 => h / 3.0 * (y[0] + 4.0 * y[1] + y[2]),
        3 => 3.0 * h / 8.0 * (y[0] + 3.0 * y[1] + 3.0 * y[2] + y[3]),
        _ => {
            let even = if n.is_multiple_of(2) { n } else { n - 3 };
            let mut sum = y[0] + y[even];
            for (k, v) in y.iter().enumerate().take(even).skip(1) {
                sum += if k % 2 == 1 { 4.0 * v } else { 2.0 * v };
            }
            let mut total = h / 3.0 * sum;
            if even < n {
                let t = &y[even..];
                total += 3.0 * h / 8.0 * (t[0] + 3.0 * t[1] + 3.0 * t[2] + t[3]);
            }
            total
        }
    }
}

/// Derivative of uniformly sampled values: Richardson-extrapolated central
/// differences `(4 D_h − D_{2h}) / 3` inside, fourth-order one-sided stencils
/// at the two points nearest each end. Returns the derivative and the
/// largest Richardson correction `|R − D_h|` with its location.
pub fn differentiate(y: &[f64], h: f64) -> Result<(Vec<f64>, f64, usize), StatsError> {
    let n = y.len();
    if n < 5 {
        return Err(StatsError::Invalid(
            "differentiation needs at least 5 samples".into(),
        ));
    }
    let mut d = vec![0.0; n];
    let mut worst = (0.0, 0);
    for i in 2..n - 2 {
        let d1 = (y[i + 1] - y[i - 1]) / (2.0 * h);
        let d2 = (y[i + 2] - y[i - 2]) / (4.0 * h);
        d[i] = (4.0 * d1 - d2) / 3.0;
        let c = (d[i] - d1).abs();
        if c > worst.0 {
            worst = (c, i);
        }
    }
    let fwd0 = |f: &[f64]| {
        (-25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]) / (12.0 * h)
    };
    let fwd1 =
        |f: &[f64]| (-3.0 * f[0] - 10.0 * f[1] + 18.0 * f[2] - 6.0 * f[3] + f[4]) / (12.0 * h);
    d[0] = fwd0(&y[..5]);
    d[1] = fwd1(&y[..5]);
    let tail: Vec<f64> = y[n - 5..].iter().rev().cloned().collect();
    d[n - 1] = -fwd0(&tail);
    d[n - 2] = -fwd1(&tail);
    Ok((d, worst.0, worst.1))
}

/// Complete a table of `E(n; s)` with `F` and `p`.
pub fn spacing_functions(s: &[f64], e: Vec<Vec<f64>>) -> Result<GapTable, StatsError> {
    if e.is_empty() || e.iter().any(|row| row.len() != s.len()) {
        return Err(StatsError::Invalid(
            "gap table rows must match the s-grid".into(),
        ));
    }
    if s.len() < 5 {
        return Err(StatsError::Invalid(
            "gap table needs at least 5 grid points".into(),
        ));
    }
    let h = s[1] - s[0];
    if !(h > 0.0)
        || s.windows(2)
            .any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h.max(1.0))
    {
        return Err(StatsError::Invalid(
            "s-grid must be uniform and increasing".into(),
        ));
    }
    let derivative = |y: &[f64]| -> Result<Vec<f64>, StatsError> {
        let (d, worst, at) = differentiate(y, h)?;
        let scale = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if worst > COARSE_TOLERANCE * scale.max(1e-300) {
            return Err(StatsError::GridTooCoarse {
                s: s[at],
                disagreement: worst,
            });
        }
        Ok(d)
    };
    let n_max = e.len() - 1;
    let mut cum_e = vec![0.0; s.len()];
    let mut f = Vec::with_capacity(n_max + 1);
    for row in &e {
        for (c, v) in cum_e.iter_mut().zip(row) {
            *c += v;
        }
        f.push(
            derivative(&cum_e)?
                .into_iter()
                .map(|v| -v)
                .collect::<Vec<_>>(),
        );
    }
    let mut cum_f = vec![0.0; s.len()];
    let mut p = Vec::with_capacity(n_max + 1);
    for row in &f {
        for (c, v) in cum_f.iter_mut().zip(row) {
            *c += v;
        }
        p.push(
            derivative(&cum_f)?
                .into_iter()
                .map(|v| -v)
                .collect::<Vec<_>>(),
        );
    }
    Ok(GapTable {
        s: s.to_vec(),
        e,
        f,
        p,
        n_max,
        order: None,
        h_diff: h,
        clipped: false,
    })
}

/// `E(n; s)` by Nyström discretization of `kernel` on the interval of each
/// grid point (in parallel, assembled in grid order), then `F` and `p`.
pub fn gap_table<K: TwoPointKernel + ?Sized>(
    kernel: &K,
    mode: GapMode,
    grid: SGrid,
    m: usize,
    n_max: usize,
) -> Result<GapTable, StatsError> {
    let s = grid.points();
    let levels = s
        .par_iter()
        .map(|&sv| {
            let (a, b) = mode.interval(sv);
            let d = nystrom(kernel, a, b, m)?;
            gap_levels(&d, n_max)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let clipped = levels.iter().any(|l| l.clipped);
    let e = (0..=n_max)
        .map(|n| levels.iter().map(|l| l.e[n]).collect())
        .collect();
    let mut table = spacing_functions(&s, e)?;
    table.order = Some(m);
    table.clipped = clipped;
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelError;
    use proptest::prelude::*;

    struct Sine;

    impl TwoPointKernel for Sine {
        fn eval(&self, x: f64, y: f64) -> Result<f64, KernelError> {
            let d = std::f64::consts::PI * (x - y);
            Ok(if d == 0.0 { 1.0 } else { d.sin() / d })
        }
        fn is_symmetric(&self) -> bool {
            true
        }
    }

    #[test]
    fn poisson_table_gives_exponentials() {
        let g = SGrid::default();
        let s = g.points();
        let e0: Vec<f64> = s.iter().map(|s| (-s).exp()).collect();
        let t = spacing_functions(&s, vec![e0]).unwrap();
        for (k, &sv) in s.iter().enumerate() {
            assert!((t.f[0][k] - (-sv).exp()).abs() < 1e-6);
            if sv >= 0.1 {
                assert!((t.p[0][k] - (-sv).exp()).abs() < 1e-4);
            }
        }
        // ∫_0^3 e^{-s} ds = 1 − e^{-3}
        assert!((t.p0_integral() - (1.0 - (-3f64).exp())).abs() < 1e-6);
    }

    #[test]
    fn coarse_grids_are_rejected() {
        let s: Vec<f64> = (0..8).map(|k| k as f64 * 0.9).collect();
        let e0: Vec<f64> = s.iter().map(|s| (-3.0 * s * s).exp()).collect();
        assert!(matches!(
            spacing_functions(&s, vec![e0]),
            Err(StatsError::GridTooCoarse { .. })
        ));
    }

    #[test]
    fn simpson_is_exact_for_cubics() {
        for n in [4usize, 5, 6, 7, 10] {
            let h = 0.3;
            let y: Vec<f64> = (0..=n).map(|k| (k as f64 * h).powi(3)).collect();
            let exact = (n as f64 * h).powi(4) / 4.0;
            assert!((simpson(&y, h) - exact).abs() < 1e-12, "n = {n}");
        }
    }

    #[test]
    fn sine_kernel_nnsd_is_normalized() {
        let t = gap_table(
            &Sine,
            GapMode::Centered { center: 0.0 },
            SGrid::new(4.0, 0.02).unwrap(),
            40,
            2,
        )
        .unwrap();
        assert_eq!(t.e[0][0], 1.0);
        assert!((t.p0_integral() - 1.0).abs() < 1e-3, "{}", t.p0_integral());
        assert!((t.mean_spacing() - 1.0).abs() < 0.02);
        assert!(t.p[0][0].abs() < 1e-3);
        let peak = t.p[0].iter().cloned().fold(0.0, f64::max);
        let at = t.p[0].iter().position(|&v| v == peak).unwrap();
        assert!((t.s[at] - 0.9).abs() < 0.2);
        // Sine-kernel value E(0; 1) ≈ 0.1702.
        let k1 = t.s.iter().position(|&s| (s - 1.0).abs() < 1e-9).unwrap();
        assert!((t.e[0][k1] - 0.1702).abs() < 2e-3);
    }

    #[test]
    fn hard_edge_gap_is_decreasing() {
        let t = gap_table(
            &Sine,
            GapMode::HardEdge { origin: 0.0 },
            SGrid::new(2.0, 0.05).unwrap(),
            24,
            0,
        )
        .unwrap();
        assert_eq!(t.e[0][0], 1.0);
        assert!(t.e[0].windows(2).all(|w| w[1] <= w[0]));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn differentiation_is_exact_for_quartics(c in prop::collection::vec(-3.0f64..3.0, 5), h in 0.01f64..0.2) {
            let y: Vec<f64> = (0..30).map(|k| {
                let x = k as f64 * h;
                c[0] + x * (c[1] + x * (c[2] + x * (c[3] + x * c[4])))
            }).collect();
            let (d, _, _) = differentiate(&y, h).unwrap();
            for (k, v) in d.iter().enumerate() {
                let x = k as f64 * h;
                let exact = c[1] + x * (2.0 * c[2] + x * (3.0 * c[3] + x * 4.0 * c[4]));
                prop_assert!((v - exact).abs() < 1e-7 * (1.0 + exact.abs()) / h);
            }
        }
    }
}
