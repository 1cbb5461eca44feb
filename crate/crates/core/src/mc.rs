//! Metropolis sampling of the joint density
//!
//! ```text
//! P(x_1..x_N) ∝ Π_{i<j} |r(x_i) − r(x_j)| |s(x_i) − s(x_j)|^γ  Π_i |x_i|^α e^{−V(x_i)}
//! ```
//!
//! at small N, as an oracle independent of the kernel pipeline and the only
//! route to γ < 1 without an effective potential.
//!
//! Chains use single-site Gaussian proposals cycled over the coordinates,
//! reflected at finite support ends. The generator is PCG64
//! (`Lcg128Xsl64`, seeded with `seed_from_u64`), so a seed fixes the chain.
//! Coordinates are model coordinates `u = x / c` with `c` the spec's scale
//! (one when the scale is left to auto-normalization).

use rand::{RngExt, SeedableRng};
use rand_distr::StandardNormal;
use rand_pcg::Pcg64;
use thiserror::Error;

use crate::ensemble::{EnsembleError, EnsembleSpec};
use crate::stats::Normalization;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum McError {
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error("invalid chain configuration: {0}")]
    Invalid(String),
    #[error("chain is empty")]
    EmptyChain,
}

/// Acceptance rates outside this band after burn-in are flagged.
pub const ACCEPTANCE_BAND: (f64, f64) = (0.05, 0.95);

#[derive(Clone, Debug)]
pub struct ChainConfig {
    pub spec: EnsembleSpec,
    pub n_sweeps: usize,
    pub burn_in: usize,
    /// Initial proposal standard deviation, in model coordinates.
    pub step_size: f64,
    pub seed: u64,
    /// Keep every `thinning`-th sweep after burn-in.
    pub thinning: usize,
}

impl ChainConfig {
    pub fn new(spec: EnsembleSpec, n_sweeps: usize, burn_in: usize, seed: u64) -> Self {
        Self {
            spec,
            n_sweeps,
            burn_in,
            step_size: 0.1,
            seed,
            thinning: 1,
        }
    }

    pub fn validate(&self) -> Result<(), McError> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(McError::Invalid(format!(
                "step size {} must be positive",
                self.step_size
            )));
        }
        if self.burn_in >= self.n_sweeps {
            return Err(McError::Invalid(format!(
                "burn-in {} must be shorter than the {} sweeps",
                self.burn_in, self.n_sweeps
            )));
        }
        if self.thinning == 0 {
            return Err(McError::Invalid("thinning must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SampleChain {
    /// Retained states, each sorted ascending.
    pub samples: Vec<Vec<f64>>,
    /// Fraction of accepted proposals after burn-in.
    pub acceptance_rate: f64,
    pub seed: u64,
    /// Per-coordinate proposal widths frozen at the end of burn-in.
    pub step_sizes: Vec<f64>,
    /// Set when the acceptance rate leaves [`ACCEPTANCE_BAND`].
    pub warning: Option<String>,
}

impl SampleChain {
    pub fn n_particles(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    /// All coordinates of all retained samples.
    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().flatten().copied()
    }
}

/// Single-particle terms of the log density at model coordinate `u`.
struct Site {
    r: f64,
    s: f64,
    log_w: f64,
}

struct Energy<'a> {
    spec: &'a EnsembleSpec,
    scale: f64,
}

impl Energy<'_> {
    fn site(&self, u: f64) -> Result<Site, EnsembleError> {
        let x = self.scale * u;
        Ok(Site {
            r: self.spec.maps.r.eval_f64(x)?,
            s: self.spec.maps.s.eval_f64(x)?,
            log_w: self.spec.weight.log_weight(x)?,
        })
    }

    fn pair(&self, a: &Site, b: &Site) -> f64 {
        (a.r - b.r).abs().ln() + self.spec.gamma * (a.s - b.s).abs().ln()
    }
}

fn model_scale(spec: &EnsembleSpec) -> f64 {
    spec.scale.unwrap_or(1.0)
}

/// `Σ_{i<j} [ln|r_i − r_j| + γ ln|s_i − s_j|] + Σ_i [α ln|x_i| − V(x_i)]`
/// at model coordinates; `−∞` for coincident points.
pub fn log_jpd(spec: &EnsembleSpec, xs: &[f64]) -> Result<f64, McError> {
    let energy = Energy {
        spec,
        scale: model_scale(spec),
    };
    let support = spec.support();
    for &u in xs {
        support.check(energy.scale * u).map_err(McError::Ensemble)?;
    }
    let sites = xs
        .iter()
        .map(|&u| energy.site(u))
        .collect::<Result<Vec<_>, _>>()?;
    let mut total: f64 = sites.iter().map(|s| s.log_w).sum();
    for i in 0..sites.len() {
        for j in i + 1..sites.len() {
            total += energy.pair(&sites[i], &sites[j]);
        }
    }
    Ok(if total.is_nan() {
        f64::NEG_INFINITY
    } else {
        total
    })
}

/// Reflect `y` into `[lo, hi]` (either end may be infinite).
fn reflect(mut y: f64, lo: f64, hi: f64) -> f64 {
    for _ in 0..64 {
        if y < lo {
            y = 2.0 * lo - y;
        } else if y > hi {
            y = 2.0 * hi - y;
        } else {
            return y;
        }
    }
    y.clamp(lo, hi)
}

/// Starting configuration: equally spaced points across the bulk of the
/// weight (its probe extent, clipped to the support).
fn initial_state(spec: &EnsembleSpec, scale: f64) -> Result<Vec<f64>, McError> {
    let (a, b) = spec.probe_extent()?;
    let n = spec.n;
    // Contract the probe interval toward the weight's maximum: the tails
    // reaching e^{-300} are far from where particles live.
    let grid: Vec<f64> = (0..=200).map(|k| a + (b - a) * k as f64 / 200.0).collect();
    let logs: Vec<f64> = grid
        .iter()
        .map(|&x| spec.weight.log_weight(x).unwrap_or(f64::NEG_INFINITY))
        .collect();
    let peak = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let inside: Vec<f64> = grid
        .iter()
        .zip(&logs)
        .filter(|(_, &l)| l > peak - 20.0)
        .map(|(&x, _)| x)
        .collect();
    let (lo, hi) = (inside[0], inside[inside.len() - 1]);
    let (lo, hi) = if hi > lo { (lo, hi) } else { (a, b) };
    Ok((0..n)
        .map(|i| (lo + (hi - lo) * (i as f64 + 0.5) / n as f64) / scale)
        .collect())
}

/// Run a Metropolis chain.
pub fn metropolis_run(cfg: &ChainConfig) -> Result<SampleChain, McError> {
    cfg.validate()?;
    let spec = &cfg.spec;
    let scale = model_scale(spec);
    let energy = Energy { spec, scale };
    let support = spec.support();
    let (lo, hi) = (support.lo / scale, support.hi / scale);
    let n = spec.n;

    let mut rng = Pcg64::seed_from_u64(cfg.seed);
    let mut xs = initial_state(spec, scale)?;
    let mut sites = xs
        .iter()
        .map(|&u| energy.site(u))
        .collect::<Result<Vec<_>, _>>()?;
    let mut steps = vec![cfg.step_size; n];
    let mut window_accepts = vec![0usize; n];
    const ADAPT_EVERY: usize = 50;

    let mut accepted = 0usize;
    let mut proposed = 0usize;
    let mut samples = Vec::with_capacity((cfg.n_sweeps - cfg.burn_in) / cfg.thinning + 1);

    for sweep in 0..cfg.n_sweeps {
        let burning = sweep < cfg.burn_in;
        for i in 0..n {
            let z: f64 = rng.sample(StandardNormal);
            let y = reflect(xs[i] + steps[i] * z, lo, hi);
            let u: f64 = rng.random();
            let site = match energy.site(y) {
                Ok(s) if s.log_w > f64::NEG_INFINITY => s,
                _ => continue,
            };
            let mut delta = site.log_w - sites[i].log_w;
            for (j, other) in sites.iter().enumerate() {
                if j != i {
                    delta += energy.pair(&site, other) - energy.pair(&sites[i], other);
                }
            }
            let accept = delta.is_finite() && (delta >= 0.0 || u.ln() < delta);
            if accept {
                xs[i] = y;
                sites[i] = site;
            }
            if burning {
                window_accepts[i] += accept as usize;
            } else {
                proposed += 1;
                accepted += accept as usize;
            }
        }
        if burning && (sweep + 1) % ADAPT_EVERY == 0 {
            for (step, acc) in steps.iter_mut().zip(window_accepts.iter_mut()) {
                let rate = *acc as f64 / ADAPT_EVERY as f64;
                if rate > 0.5 {
                    *step *= 1.25;
                } else if rate < 0.3 {
                    *step /= 1.25;
                }
                *acc = 0;
            }
        }
        if !burning && (sweep - cfg.burn_in).is_multiple_of(cfg.thinning) {
            let mut sorted = xs.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));
            samples.push(sorted);
        }
    }
    let acceptance_rate = accepted as f64 / proposed.max(1) as f64;
    let warning = if acceptance_rate < ACCEPTANCE_BAND.0 || acceptance_rate > ACCEPTANCE_BAND.1 {
        Some(format!(
            "acceptance rate {acceptance_rate:.3} outside [{}, {}]; adjust the step size",
            ACCEPTANCE_BAND.0, ACCEPTANCE_BAND.1
        ))
    } else {
        None
    };
    Ok(SampleChain {
        samples,
        acceptance_rate,
        seed: cfg.seed,
        step_sizes: steps,
        warning,
    })
}

/// Binned density with batch-means error bars.
#[derive(Clone, Debug)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub density: Vec<f64>,
    /// Standard error per bin from the spread of batch histograms.
    pub errors: Vec<f64>,
    pub normalization: Normalization,
}

impl Histogram {
    /// Histogram of `values`, grouped in consecutive records of `per_record`
    /// values (the particles of one sample). Counts are scaled so that the
    /// histogram integrates to `per_record` (particle count) or one. Errors
    /// come from `batches` contiguous batches of records.
    pub fn from_values(
        values: &[f64],
        per_record: usize,
        bins: usize,
        range: (f64, f64),
        normalization: Normalization,
        batches: usize,
    ) -> Result<Self, McError> {
        if values.is_empty() || per_record == 0 {
            return Err(McError::EmptyChain);
        }
        let (lo, hi) = range;
        if bins == 0 || !(lo < hi) {
            return Err(McError::Invalid(format!(
                "histogram needs bins > 0 and lo < hi (got {bins}, [{lo}, {hi}])"
            )));
        }
        let width = (hi - lo) / bins as f64;
        let mass = match normalization {
            Normalization::ParticleCount => per_record as f64,
            Normalization::Unit => 1.0,
        };
        let records = values.len() / per_record;
        let batches = batches.clamp(1, records.max(1));
        let bin_of = |v: f64| -> Option<usize> {
            if v < lo || v > hi {
                None
            } else {
                Some((((v - lo) / width) as usize).min(bins - 1))
            }
        };
        let hist = |chunk: &[f64]| -> Vec<f64> {
            let mut counts = vec![0.0; bins];
            let mut total = 0.0;
            for &v in chunk {
                if let Some(b) = bin_of(v) {
                    counts[b] += 1.0;
                }
                total += 1.0;
            }
            counts.iter().map(|c| c / (total * width) * mass).collect()
        };
        let density = hist(values);
        let per_batch = records / batches;
        let errors = if batches > 1 && per_batch > 0 {
            let hs: Vec<Vec<f64>> = (0..batches)
                .map(|b| {
                    hist(&values[b * per_batch * per_record..(b + 1) * per_batch * per_record])
                })
                .collect();
            (0..bins)
                .map(|k| {
                    let mean = hs.iter().map(|h| h[k]).sum::<f64>() / batches as f64;
                    let var = hs.iter().map(|h| (h[k] - mean).powi(2)).sum::<f64>()
                        / (batches - 1) as f64;
                    (var / batches as f64).sqrt()
                })
                .collect()
        } else {
            vec![f64::NAN; bins]
        };
        Ok(Self {
            edges: (0..=bins).map(|k| lo + width * k as f64).collect(),
            density,
            errors,
            normalization,
        })
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn integral(&self) -> f64 {
        self.edges
            .windows(2)
            .zip(&self.density)
            .map(|(w, d)| (w[1] - w[0]) * d)
            .sum()
    }

    /// Average of `f` over each bin (three-point Gauss–Legendre).
    pub fn bin_averages<F: Fn(f64) -> f64>(&self, f: F) -> Vec<f64> {
        let t = (0.6f64).sqrt();
        self.edges
            .windows(2)
            .map(|w| {
                let (m, h) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
                (5.0 * f(m - h * t) + 8.0 * f(m) + 5.0 * f(m + h * t)) / 18.0
            })
            .collect()
    }

    /// `Σ_b |h_b − ⟨f⟩_b| Δ`, the L1 distance on shared bins.
    pub fn l1_distance<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.bin_averages(f)
            .iter()
            .zip(&self.density)
            .zip(self.edges.windows(2))
            .map(|((a, d), w)| (a - d).abs() * (w[1] - w[0]))
            .sum()
    }
}

/// Density histogram of all particle coordinates in a chain.
pub fn histogram_density(
    chain: &SampleChain,
    bins: usize,
    range: Option<(f64, f64)>,
    normalization: Normalization,
) -> Result<Histogram, McError> {
    if chain.samples.is_empty() {
        return Err(McError::EmptyChain);
    }
    let values: Vec<f64> = chain.points().collect();
    let range = range.unwrap_or_else(|| {
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi.max(lo + f64::EPSILON))
    });
    Histogram::from_values(&values, chain.n_particles(), bins, range, normalization, 20)
}
