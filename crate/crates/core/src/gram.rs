//! Gram (mixed moment) matrices `g_ij = ∫ r^i s^j w dx`, their
//! extended-precision inverses, and an on-disk text cache.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use rug::Float;
use thiserror::Error;

use crate::ensemble::{EnsembleError, EnsembleSpec, Potential};
use crate::precision::{parse_decimal, Precision};
use crate::quadrature::{integrate_batch, Domain, QuadError, QuadOptions, TolMode};

/// Inversion gives up once the working precision would exceed this.
pub const DEFAULT_MAX_DIGITS: u32 = 1200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GramError {
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error("kernel methods need gamma = 1 (got {0}); use Monte Carlo for gamma < 1")]
    GammaUnsupported(f64),
    #[error("moment integration failed for entry ({i}, {j}): {source}")]
    Quadrature {
        i: usize,
        j: usize,
        #[source]
        source: QuadError,
    },
    #[error(
        "Gram matrix is numerically singular at {digits} digits \
         (condition estimate {condition:e}, residual {residual:e})"
    )]
    Singular {
        digits: u32,
        condition: f64,
        residual: f64,
    },
    #[error("invalid Gram matrix: {0}")]
    Invalid(String),
    #[error("Gram cache: {0}")]
    Cache(String),
}

/// Working precision, escalation cap and moment tolerance for one build.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrecisionPolicy {
    /// Starting precision; `None` selects `max(34, 12 + ceil(1.6 N))` digits.
    pub initial: Option<Precision>,
    pub max_digits: u32,
    /// Relative moment tolerance; `None` ties it to the working precision.
    pub tol: Option<f64>,
}

impl Default for PrecisionPolicy {
    fn default() -> Self {
        Self {
            initial: None,
            max_digits: DEFAULT_MAX_DIGITS,
            tol: None,
        }
    }
}

impl PrecisionPolicy {
    pub fn with_digits(digits: u32) -> Self {
        Self {
            initial: Some(Precision::digits(digits)),
            ..Self::default()
        }
    }

    fn start(&self, n: usize) -> Precision {
        self.initial.unwrap_or_else(|| Precision::for_particles(n))
    }

    fn tol_at(&self, precision: Precision) -> f64 {
        self.tol.unwrap_or_else(|| default_tol(precision))
    }
}

/// Moment tolerance used when none is requested: four digits short of the
/// working precision.
pub fn default_tol(precision: Precision) -> f64 {
    10f64.powi(-(precision.decimal_digits() as i32 - 4))
}

/// `N × N` Gram matrix (row-major) with its inverse and diagnostics.
#[derive(Clone, Debug)]
pub struct GramMatrix {
    pub n: usize,
    pub entries: Vec<Float>,
    pub inverse: Option<Vec<Float>>,
    /// `κ_∞` of the row/column-equilibrated matrix.
    pub condition_estimate: f64,
    /// `‖H·H⁻¹ − I‖_max` for the equilibrated matrix `H`.
    pub residual: f64,
    pub precision: Precision,
    /// Relative moment tolerance the entries were integrated to.
    pub tol: f64,
}

impl GramMatrix {
    pub fn from_entries(
        n: usize,
        entries: Vec<Float>,
        precision: Precision,
    ) -> Result<Self, GramError> {
        if n == 0 || entries.len() != n * n {
            return Err(GramError::Invalid(format!(
                "expected {} entries for n = {n}, got {}",
                n * n,
                entries.len()
            )));
        }
        if entries.iter().any(|e| !e.is_finite()) {
            return Err(GramError::Invalid("non-finite entry".into()));
        }
        let bits = precision.bits();
        Ok(Self {
            n,
            entries: entries
                .into_iter()
                .map(|e| Float::with_val(bits, e))
                .collect(),
            inverse: None,
            condition_estimate: f64::NAN,
            residual: f64::NAN,
            precision,
            tol: 0.0,
        })
    }

    pub fn from_f64(n: usize, entries: &[f64], precision: Precision) -> Result<Self, GramError> {
        let bits = precision.bits();
        Self::from_entries(
            n,
            entries.iter().map(|&v| Float::with_val(bits, v)).collect(),
            precision,
        )
    }

    pub fn entry(&self, i: usize, j: usize) -> &Float {
        &self.entries[i * self.n + j]
    }

    pub fn inverse_entry(&self, i: usize, j: usize) -> Option<&Float> {
        self.inverse.as_ref().map(|c| &c[i * self.n + j])
    }

    pub fn entries_f64(&self) -> Vec<f64> {
        self.entries.iter().map(Float::to_f64).collect()
    }

    pub fn inverse_f64(&self) -> Option<Vec<f64>> {
        self.inverse
            .as_ref()
            .map(|c| c.iter().map(Float::to_f64).collect())
    }
}

/// Exponent bookkeeping for monomial maps `r = x`, `s = x^θ`.
enum MomentPlan {
    /// θ = num/den: `g_ij = μ((i·den + j·num)/den)`, with `μ` sampled on the
    /// ladder `x^{k/den}`, `k = 0..=kmax`.
    Rational {
        den: u32,
        keys: Vec<usize>,
        distinct: Vec<usize>,
    },
    /// Irrational θ: one component per distinct exponent.
    Real {
        exponents: Vec<f64>,
        index: Vec<usize>,
    },
    /// General maps: all `N²` products.
    General,
}

fn rational_theta(theta: f64) -> Option<(u32, u32)> {
    (1..=64u32).find_map(|den| {
        let num = theta * den as f64;
        ((num - num.round()).abs() < 1e-12 && num.round() >= 0.0).then(|| (num.round() as u32, den))
    })
}

fn plan_for(spec: &EnsembleSpec) -> MomentPlan {
    let n = spec.n;
    match spec.maps.monomial_theta() {
        Some(theta) => match rational_theta(theta) {
            Some((num, den)) => {
                let keys: Vec<usize> = (0..n * n)
                    .map(|ij| (ij / n) * den as usize + (ij % n) * num as usize)
                    .collect();
                let mut distinct = keys.clone();
                distinct.sort_unstable();
                distinct.dedup();
                MomentPlan::Rational {
                    den,
                    keys,
                    distinct,
                }
            }
            None => {
                let mut exponents: Vec<f64> = Vec::new();
                let index = (0..n * n)
                    .map(|ij| {
                        let p = (ij / n) as f64 + theta * (ij % n) as f64;
                        match exponents.iter().position(|&e| e == p) {
                            Some(k) => k,
                            None => {
                                exponents.push(p);
                                exponents.len() - 1
                            }
                        }
                    })
                    .collect();
                MomentPlan::Real { exponents, index }
            }
        },
        None => MomentPlan::General,
    }
}

fn needs_endpoint_substitution(spec: &EnsembleSpec) -> bool {
    let support = spec.support();
    let zero_end = support.lo == 0.0 || support.hi == 0.0;
    let finite_end = support.lo.is_finite() || support.hi.is_finite();
    let map_singular = match spec.maps.monomial_theta() {
        Some(theta) => theta.fract() != 0.0 && zero_end,
        None => finite_end,
    };
    spec.weight.has_endpoint_singularity() || map_singular
}

/// Quadrature options for integrands of the form `w(x) × (products of r, s)`.
pub(crate) fn quad_options(spec: &EnsembleSpec) -> QuadOptions {
    QuadOptions {
        singular_endpoints: needs_endpoint_substitution(spec),
        breakpoints: match &spec.weight.potential {
            Potential::Tabulated(t) => t.xs().to_vec(),
            _ => Vec::new(),
        },
    }
}

/// Integrate all Gram entries of `spec` at `precision` to relative tolerance `tol`.
pub fn build_gram(
    spec: &EnsembleSpec,
    precision: Precision,
    tol: f64,
) -> Result<GramMatrix, GramError> {
    if spec.gamma != 1.0 {
        return Err(GramError::GammaUnsupported(spec.gamma));
    }
    let n = spec.n;
    let support = spec.support();
    let domain = Domain::new(support.lo, support.hi).map_err(|e| GramError::Quadrature {
        i: 0,
        j: 0,
        source: e,
    })?;
    let options = quad_options(spec);
    let plan = plan_for(spec);
    let width = match &plan {
        MomentPlan::Rational { distinct, .. } => distinct.len(),
        MomentPlan::Real { exponents, .. } => exponents.len(),
        MomentPlan::General => n * n,
    };
    let fail = |x: &Float, e: EnsembleError| QuadError::Integrand {
        x: x.to_f64(),
        message: e.to_string(),
    };

    let integrand = |x: &Float, out: &mut [Float]| -> Result<(), QuadError> {
        let bits = x.prec();
        let w = spec.weight.weight_mp(x, bits).map_err(|e| fail(x, e))?;
        if w.is_zero() {
            return Ok(());
        }
        match &plan {
            MomentPlan::Rational { den, distinct, .. } => {
                let base = if *den == 1 {
                    x.clone()
                } else {
                    Float::with_val(bits, x.root_ref(*den))
                };
                let mut power = w;
                let mut k = 0;
                for (slot, &key) in out.iter_mut().zip(distinct) {
                    while k < key {
                        power *= &base;
                        k += 1;
                    }
                    *slot = power.clone();
                }
            }
            MomentPlan::Real { exponents, .. } => {
                let ln_x = Float::with_val(bits, x.ln_ref());
                for (slot, &p) in out.iter_mut().zip(exponents) {
                    *slot = if p == 0.0 {
                        w.clone()
                    } else {
                        Float::with_val(bits, &ln_x * p).exp() * &w
                    };
                }
            }
            MomentPlan::General => {
                let (r, s) = spec.maps_mp(x, bits).map_err(|e| fail(x, e))?;
                let mut r_pow = Vec::with_capacity(n);
                let mut acc = w;
                for _ in 0..n {
                    r_pow.push(acc.clone());
                    acc *= &r;
                }
                for (i, ri) in r_pow.iter().enumerate() {
                    let mut acc = ri.clone();
                    for j in 0..n {
                        out[i * n + j] = acc.clone();
                        acc *= &s;
                    }
                }
            }
        }
        Ok(())
    };

    let batch = integrate_batch(
        integrand,
        width,
        domain,
        precision,
        tol,
        TolMode::Relative,
        &options,
    )
    // All entries share one integration; a failure is attributed to the
    // highest-order entry, whose integrand is the most demanding.
    .map_err(|e| GramError::Quadrature {
        i: n - 1,
        j: n - 1,
        source: e,
    })?;

    let entries = (0..n * n)
        .map(|ij| match &plan {
            MomentPlan::Rational { keys, distinct, .. } => {
                let k = distinct.binary_search(&keys[ij]).expect("key present");
                batch.values[k].clone()
            }
            MomentPlan::Real { index, .. } => batch.values[index[ij]].clone(),
            MomentPlan::General => batch.values[ij].clone(),
        })
        .collect();
    let mut g = GramMatrix::from_entries(n, entries, precision)?;
    g.tol = tol;
    Ok(g)
}

struct Inversion {
    inverse: Vec<Float>,
    residual: f64,
    condition: f64,
}

fn max_abs(v: &[Float]) -> Float {
    let prec = v.first().map_or(64, Float::prec);
    v.iter().fold(Float::with_val(prec, 0u32), |m, x| {
        let a = Float::with_val(prec, x.abs_ref());
        if a > m {
            a
        } else {
            m
        }
    })
}

fn matmul(a: &[Float], b: &[Float], n: usize, bits: u32) -> Vec<Float> {
    (0..n * n)
        .into_par_iter()
        .map(|ij| {
            let (i, j) = (ij / n, ij % n);
            let mut acc = Float::with_val(bits, 0u32);
            for k in 0..n {
                acc += Float::with_val(bits, &a[i * n + k] * &b[k * n + j]);
            }
            acc
        })
        .collect()
}

/// `‖A‖_∞`, the maximum absolute row sum.
fn norm_inf(a: &[Float], n: usize) -> f64 {
    (0..n)
        .map(|i| {
            a[i * n..(i + 1) * n]
                .iter()
                .map(|x| x.to_f64().abs())
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
}

/// LU with full pivoting at `bits`; returns `None` for an exactly singular matrix.
fn lu_inverse(h: &[Float], n: usize, bits: u32) -> Option<Vec<Float>> {
    let mut a: Vec<Float> = h.iter().map(|x| Float::with_val(bits, x)).collect();
    let mut row_perm: Vec<usize> = (0..n).collect();
    let mut col_perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let (mut pi, mut pj) = (k, k);
        let mut best = Float::with_val(bits, 0u32);
        for i in k..n {
            for j in k..n {
                let v = Float::with_val(bits, a[i * n + j].abs_ref());
                if v > best {
                    best = v;
                    pi = i;
                    pj = j;
                }
            }
        }
        if best.is_zero() {
            return None;
        }
        if pi != k {
            for j in 0..n {
                a.swap(k * n + j, pi * n + j);
            }
            row_perm.swap(k, pi);
        }
        if pj != k {
            for i in 0..n {
                a.swap(i * n + k, i * n + pj);
            }
            col_perm.swap(k, pj);
        }
        let pivot = a[k * n + k].clone();
        for i in k + 1..n {
            let factor = Float::with_val(bits, &a[i * n + k] / &pivot);
            for j in k + 1..n {
                let t = Float::with_val(bits, &factor * &a[k * n + j]);
                a[i * n + j] -= t;
            }
            a[i * n + k] = factor;
        }
    }
    // Solve P A Q = L U for each unit vector: A⁻¹ = Q U⁻¹ L⁻¹ P.
    let columns: Vec<Vec<Float>> = (0..n)
        .into_par_iter()
        .map(|c| {
            let mut y: Vec<Float> = (0..n)
                .map(|i| Float::with_val(bits, u32::from(row_perm[i] == c)))
                .collect();
            for i in 0..n {
                for k in 0..i {
                    let t = Float::with_val(bits, &a[i * n + k] * &y[k]);
                    y[i] -= t;
                }
            }
            for i in (0..n).rev() {
                for k in i + 1..n {
                    let t = Float::with_val(bits, &a[i * n + k] * &y[k]);
                    y[i] -= t;
                }
                y[i] /= &a[i * n + i];
            }
            let mut x = vec![Float::new(bits); n];
            for (i, v) in y.into_iter().enumerate() {
                x[col_perm[i]] = v;
            }
            x
        })
        .collect();
    let mut inv = vec![Float::new(bits); n * n];
    for (c, col) in columns.into_iter().enumerate() {
        for (r, v) in col.into_iter().enumerate() {
            inv[r * n + c] = v;
        }
    }
    Some(inv)
}

/// Equilibrate, invert by full-pivot LU, refine once, and measure.
fn invert_at(entries: &[Float], n: usize, precision: Precision) -> Option<Inversion> {
    let bits = precision.bits();
    // Row then column max-abs scaling: H = D_r G D_c.
    let mut h: Vec<Float> = entries.iter().map(|x| Float::with_val(bits, x)).collect();
    let mut dr = Vec::with_capacity(n);
    for i in 0..n {
        let m = max_abs(&h[i * n..(i + 1) * n]);
        if m.is_zero() {
            return None;
        }
        let d = m.recip();
        for j in 0..n {
            h[i * n + j] *= &d;
        }
        dr.push(d);
    }
    let mut dc = Vec::with_capacity(n);
    for j in 0..n {
        let col: Vec<Float> = (0..n).map(|i| h[i * n + j].clone()).collect();
        let d = max_abs(&col).recip();
        for i in 0..n {
            h[i * n + j] *= &d;
        }
        dc.push(d);
    }
    let mut c = lu_inverse(&h, n, bits)?;
    // One refinement step: C ← C + C (I − H C).
    let hc = matmul(&h, &c, n, bits);
    let mut r: Vec<Float> = hc.into_iter().map(|x| -x).collect();
    for i in 0..n {
        r[i * n + i] += 1u32;
    }
    let corr = matmul(&c, &r, n, bits);
    for (ci, di) in c.iter_mut().zip(corr) {
        *ci += di;
    }
    let hc = matmul(&h, &c, n, bits);
    let mut residual = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let mut d = hc[i * n + j].clone();
            if i == j {
                d -= 1u32;
            }
            residual = residual.max(d.to_f64().abs());
        }
    }
    let condition = norm_inf(&h, n) * norm_inf(&c, n);
    // G⁻¹ = D_c H⁻¹ D_r.
    let inverse = (0..n * n)
        .map(|ij| {
            let (i, j) = (ij / n, ij % n);
            Float::with_val(bits, &c[ij] * &dc[i]) * &dr[j]
        })
        .collect();
    Some(Inversion {
        inverse,
        residual,
        condition,
    })
}

/// `‖H C − I‖_max < 10^{−digits/2}`.
fn residual_target(precision: Precision) -> f64 {
    10f64.powf(-(precision.decimal_digits() as f64) / 2.0)
}

fn try_invert(g: &GramMatrix, precision: Precision) -> Result<GramMatrix, GramError> {
    let singular = |condition: f64, residual: f64| GramError::Singular {
        digits: precision.decimal_digits(),
        condition,
        residual,
    };
    let inv =
        invert_at(&g.entries, g.n, precision).ok_or_else(|| singular(f64::INFINITY, f64::NAN))?;
    if !(inv.residual < residual_target(precision)) {
        return Err(singular(inv.condition, inv.residual));
    }
    let mut out = g.clone();
    out.inverse = Some(inv.inverse);
    out.residual = inv.residual;
    out.condition_estimate = inv.condition;
    Ok(out)
}

/// Invert `g`, doubling the arithmetic precision (entries held fixed) until
/// the residual target is met or `DEFAULT_MAX_DIGITS` is exceeded.
pub fn invert_gram(g: &GramMatrix) -> Result<GramMatrix, GramError> {
    let mut precision = g.precision;
    loop {
        match try_invert(g, precision) {
            Ok(out) => return Ok(out),
            Err(err @ GramError::Singular { .. }) => {
                precision = precision.doubled();
                if precision.decimal_digits() > DEFAULT_MAX_DIGITS {
                    return Err(err);
                }
            }
            Err(e) => return Err(e),
        }
    }
}

/// Build and invert, rebuilding at doubled precision whenever the
/// inversion misses its residual target or the moment tolerance is too
/// loose for the measured conditioning.
pub fn solve_gram(spec: &EnsembleSpec, policy: &PrecisionPolicy) -> Result<GramMatrix, GramError> {
    let mut precision = policy.start(spec.n);
    loop {
        let tol = policy.tol_at(precision);
        let g = build_gram(spec, precision, tol)?;
        let err = match try_invert(&g, precision) {
            Ok(out) if out.condition_estimate * tol <= 1e-14 => return Ok(out),
            Ok(out) => GramError::Singular {
                digits: precision.decimal_digits(),
                condition: out.condition_estimate,
                residual: out.residual,
            },
            Err(e @ GramError::Singular { .. }) => e,
            Err(e) => return Err(e),
        };
        precision = precision.doubled();
        if precision.decimal_digits() > policy.max_digits {
            return Err(err);
        }
    }
}

/// Text cache of solved Gram matrices keyed by spec content and policy.
#[derive(Clone, Debug)]
pub struct GramCache {
    dir: PathBuf,
}

const CACHE_MAGIC: &str = "loggas-gram 1";

impl GramCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn key(spec: &EnsembleSpec, policy: &PrecisionPolicy) -> String {
        use sha2::{Digest, Sha256};
        let start = policy.start(spec.n);
        let text = format!(
            "{}|{}|{}|{:e}",
            spec.content_hash(),
            start.decimal_digits(),
            policy.max_digits,
            policy.tol.unwrap_or(-1.0)
        );
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.gram"))
    }

    pub fn load(&self, key: &str) -> Result<Option<GramMatrix>, GramError> {
        let path = self.path(key);
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(GramError::Cache(format!("{}: {e}", path.display()))),
        };
        parse_cache(&text, key)
            .map(Some)
            .map_err(|m| GramError::Cache(format!("{}: {m}", path.display())))
    }

    pub fn store(&self, key: &str, g: &GramMatrix) -> Result<(), GramError> {
        let io = |e: std::io::Error| GramError::Cache(e.to_string());
        std::fs::create_dir_all(&self.dir).map_err(io)?;
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(io)?;
        std::io::Write::write_all(&mut tmp, render_cache(g, key).as_bytes()).map_err(io)?;
        tmp.persist(self.path(key)).map_err(|e| io(e.error))?;
        Ok(())
    }
}

fn render_cache(g: &GramMatrix, key: &str) -> String {
    let mut out = String::new();
    out.push_str(CACHE_MAGIC);
    out.push('\n');
    out.push_str(&format!("key {key}\n"));
    out.push_str(&format!("n {}\n", g.n));
    out.push_str(&format!("digits {}\n", g.precision.decimal_digits()));
    out.push_str(&format!("tol {:e}\n", g.tol));
    out.push_str(&format!("condition {:e}\n", g.condition_estimate));
    out.push_str(&format!("residual {:e}\n", g.residual));
    out.push_str("entries\n");
    for e in &g.entries {
        out.push_str(&e.to_string_radix(10, None));
        out.push('\n');
    }
    if let Some(inv) = &g.inverse {
        out.push_str("inverse\n");
        for e in inv {
            out.push_str(&e.to_string_radix(10, None));
            out.push('\n');
        }
    }
    out
}

fn parse_cache(text: &str, key: &str) -> Result<GramMatrix, String> {
    let mut lines = text.lines();
    if lines.next() != Some(CACHE_MAGIC) {
        return Err("unrecognized header".into());
    }
    let mut field = |name: &str| -> Result<String, String> {
        let line = lines.next().ok_or_else(|| format!("missing {name}"))?;
        line.strip_prefix(name)
            .and_then(|rest| rest.strip_prefix(' '))
            .map(str::to_string)
            .ok_or_else(|| format!("expected `{name}`, found `{line}`"))
    };
    if field("key")? != key {
        return Err("key mismatch".into());
    }
    let num =
        |s: String| -> Result<f64, String> { s.parse().map_err(|_| format!("bad number {s}")) };
    let n: usize = field("n")?.parse().map_err(|_| "bad n".to_string())?;
    let digits: u32 = field("digits")?
        .parse()
        .map_err(|_| "bad digits".to_string())?;
    let tol = num(field("tol")?)?;
    let condition = num(field("condition")?)?;
    let residual = num(field("residual")?)?;
    let precision = Precision::digits(digits);
    let bits = precision.bits();
    let mut read_block = |name: &str| -> Result<Vec<Float>, String> {
        if lines.next() != Some(name) {
            return Err(format!("missing {name} block"));
        }
        (0..n * n)
            .map(|_| {
                let line = lines.next().ok_or("truncated matrix")?;
                parse_decimal(line, bits).ok_or_else(|| format!("bad decimal {line}"))
            })
            .collect()
    };
    let entries = read_block("entries")?;
    let inverse = read_block("inverse")?;
    Ok(GramMatrix {
        n,
        entries,
        inverse: Some(inverse),
        condition_estimate: condition,
        residual,
        precision,
        tol,
    })
}

/// `solve_gram` with an optional cache in front of it.
pub fn solve_gram_cached(
    spec: &EnsembleSpec,
    policy: &PrecisionPolicy,
    cache: Option<&GramCache>,
) -> Result<GramMatrix, GramError> {
    let Some(cache) = cache else {
        return solve_gram(spec, policy);
    };
    let key = GramCache::key(spec, policy);
    if let Some(g) = cache.load(&key)? {
        return Ok(g);
    }
    let g = solve_gram(spec, policy)?;
    cache.store(&key, &g)?;
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{BasicMapPair, Support};
    use crate::expr::Expression;
    use std::collections::BTreeMap;

    fn hilbert(n: usize, precision: Precision) -> GramMatrix {
        let bits = precision.bits();
        let entries = (0..n * n)
            .map(|ij| Float::with_val(bits, 1u32) / ((ij / n + ij % n + 1) as u32))
            .collect();
        GramMatrix::from_entries(n, entries, precision).unwrap()
    }

    fn close(a: &Float, b: f64, tol: f64) -> bool {
        (Float::with_val(a.prec(), a - b)).abs().to_f64() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn identity_inverts_to_identity() {
        let p = Precision::digits(30);
        let mut e = vec![0.0; 9];
        for i in 0..3 {
            e[i * 4] = 1.0;
        }
        let g = invert_gram(&GramMatrix::from_f64(3, &e, p).unwrap()).unwrap();
        assert_eq!(g.inverse_f64().unwrap(), e);
    }

    #[test]
    fn two_by_two_hilbert_inverse() {
        let g = invert_gram(&hilbert(2, Precision::digits(40))).unwrap();
        let expected = [4.0, -6.0, -6.0, 12.0];
        for (c, e) in g.inverse.as_ref().unwrap().iter().zip(expected) {
            assert!(close(c, e, 1e-35), "{c} vs {e}");
        }
    }

    /// κ_∞ of the 5×5 Hilbert matrix from its closed-form inverse.
    fn hilbert_condition_oracle(n: usize) -> f64 {
        let binom = |a: i64, b: i64| -> f64 {
            (0..b).fold(1.0, |acc, k| acc * (a - k) as f64 / (k + 1) as f64)
        };
        let inv = |i: i64, j: i64| -> f64 {
            let nn = n as i64;
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            sign * (i + j + 1) as f64
                * binom(nn + i, nn - j - 1)
                * binom(nn + j, nn - i - 1)
                * binom(i + j, i).powi(2)
        };
        let row_norm = |f: &dyn Fn(i64, i64) -> f64| {
            (0..n as i64)
                .map(|i| (0..n as i64).map(|j| f(i, j).abs()).sum::<f64>())
                .fold(0.0, f64::max)
        };
        row_norm(&|i, j| 1.0 / (i + j + 1) as f64) * row_norm(&inv)
    }

    #[test]
    fn hilbert_condition_estimate_within_factor_ten() {
        let oracle = hilbert_condition_oracle(5);
        assert!((oracle / 9.437e5 - 1.0).abs() < 1e-3);
        let g = invert_gram(&hilbert(5, Precision::digits(40))).unwrap();
        let ratio = g.condition_estimate / 4.8e5;
        assert!(ratio > 0.1 && ratio < 10.0, "{}", g.condition_estimate);
        assert!(g.residual < 1e-20);
    }

    #[test]
    fn ill_conditioned_hilbert_escalates_precision() {
        // κ(H_30) ≈ 10^44, beyond the 20-digit residual budget.
        let h20 = hilbert(30, Precision::digits(20));
        let g = invert_gram(&h20).unwrap();
        assert!(g.residual < 1e-10);
        let same_entries =
            GramMatrix::from_entries(30, h20.entries.clone(), Precision::digits(200));
        let reference = invert_gram(&same_entries.unwrap()).unwrap();
        let a = g.inverse_f64().unwrap();
        let b = reference.inverse_f64().unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-6 * y.abs().max(1.0));
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        let g = GramMatrix::from_f64(2, &[1.0, 2.0, 2.0, 4.0], Precision::digits(20)).unwrap();
        assert!(matches!(invert_gram(&g), Err(GramError::Singular { .. })));
    }

    #[test]
    fn uniform_weight_gives_hilbert_matrix() {
        let spec = EnsembleSpec::uniform(6, 0.0, 1.0).unwrap();
        let p = Precision::digits(40);
        let g = build_gram(&spec, p, 1e-34).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let exact = Float::with_val(p.bits(), 1u32) / (i + j + 1) as u32;
                assert!((exact - g.entry(i, j)).abs() < 1e-33);
            }
        }
    }

    #[test]
    fn exponential_weight_gives_factorials() {
        let spec = EnsembleSpec::mb_laguerre(6, 1.0, 0.0, "x").unwrap();
        let g = build_gram(&spec, Precision::digits(40), 1e-34).unwrap();
        let fact = |k: usize| (1..=k).map(|v| v as f64).product::<f64>();
        for i in 0..6 {
            for j in 0..6 {
                let e = fact(i + j);
                assert!(close(g.entry(i, j), e, 1e-30 * e), "({i},{j})");
            }
        }
    }

    #[test]
    fn single_particle_normalized_weight() {
        // w = e^{-x} on [0, ∞) integrates to 1.
        let spec = EnsembleSpec::mb_laguerre(1, 1.0, 0.0, "x").unwrap();
        let g = build_gram(&spec, Precision::digits(30), 1e-25).unwrap();
        assert!(close(g.entry(0, 0), 1.0, 1e-24));
    }

    #[test]
    fn fractional_theta_and_alpha_moments() {
        // g_ij = Γ(i + θj + α + 1) for w = x^α e^{-x}.
        let spec = EnsembleSpec::mb_laguerre(4, 3.5, 0.5, "x").unwrap();
        let p = Precision::digits(40);
        let g = build_gram(&spec, p, 1e-33).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let e = Float::with_val(p.bits(), i as f64 + 3.5 * j as f64 + 1.5).gamma();
                let rel = ((g.entry(i, j).clone() - &e) / &e).abs().to_f64();
                assert!(rel < 1e-30, "({i},{j}) rel {rel:e}");
            }
        }
    }

    #[test]
    fn general_maps_match_monomial_path() {
        // s = x^2 written so that it is not recognized as a monomial.
        let p = Precision::digits(34);
        let fast = EnsembleSpec::mb_laguerre(4, 2.0, 0.0, "x").unwrap();
        let slow = EnsembleSpec::new(
            "general",
            4,
            BasicMapPair::new(Expression::variable(), Expression::parse("x*x").unwrap()),
            0.0,
            Potential::Expr(Expression::parse("x").unwrap()),
            Support::half_line(),
            BTreeMap::new(),
        )
        .unwrap();
        let a = build_gram(&fast, p, 1e-28).unwrap();
        let b = build_gram(&slow, p, 1e-28).unwrap();
        for (x, y) in a.entries.iter().zip(&b.entries) {
            let rel = (Float::with_val(p.bits(), x - y) / x).abs().to_f64();
            assert!(rel < 1e-26);
        }
    }

    #[test]
    fn gamma_below_one_is_rejected() {
        let spec = EnsembleSpec::gue(3).with_gamma(0.5).unwrap();
        assert!(matches!(
            build_gram(&spec, Precision::digits(30), 1e-20),
            Err(GramError::GammaUnsupported(_))
        ));
    }

    #[test]
    fn solved_gue_meets_residual_target() {
        let spec = EnsembleSpec::gue(12);
        let g = solve_gram(&spec, &PrecisionPolicy::default()).unwrap();
        assert!(g.residual < residual_target(g.precision));
        assert!(g.inverse.is_some());
    }

    #[test]
    fn cache_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let cache = GramCache::new(dir.path());
        let spec = EnsembleSpec::mb_laguerre(5, 2.0, 1.0, "x").unwrap();
        let policy = PrecisionPolicy::default();
        let first = solve_gram_cached(&spec, &policy, Some(&cache)).unwrap();
        let key = GramCache::key(&spec, &policy);
        let loaded = cache.load(&key).unwrap().unwrap();
        assert_eq!(first.entries, loaded.entries);
        assert_eq!(first.inverse, loaded.inverse);
        assert_eq!(first.precision, loaded.precision);
        let again = solve_gram_cached(&spec, &policy, Some(&cache)).unwrap();
        assert_eq!(again.inverse, first.inverse);
    }
}
