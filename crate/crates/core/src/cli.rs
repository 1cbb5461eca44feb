//! Command-line front end: load an ensemble, run one computation, write a
//! CSV with a sidecar manifest.
//!
//! Exit codes: 0 success, 2 usage, 3 config, 4 numeric, 5 io.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::ensemble::{EnsembleConfig, EnsembleSpec};
use crate::expr::Expression;
use crate::gram::{GramCache, PrecisionPolicy};
use crate::io::{RunManifest, Table};
use crate::kernel::KernelEvaluator;
use crate::mc::{histogram_density, metropolis_run, ChainConfig};
use crate::precision::Precision;
use crate::reference::{self, SeriesPolicy};
use crate::stats::{self, GapTable, Normalization, Placement, SGrid};
use crate::Error;

/// Environment variable naming the Gram cache directory.
pub const CACHE_ENV: &str = "LOGGAS_CACHE_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "loggas",
    version,
    about = "Kernels, densities, gap functions and spacing distributions of log-gas ensembles"
)]
pub struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// One-point density ρ(x) → density.csv (x,rho)
    Density(DensityArgs),
    /// Kernel on a grid → kernel.csv (x,y,K)
    Kernel(KernelArgs),
    /// Gap probabilities → gap.csv (s,E0..,F0..,p0..)
    Gap(GapArgs),
    /// Nearest-neighbour spacing distribution → nnsd.csv (s,p0)
    Nnsd(GapArgs),
    /// Metropolis samples of the joint density → samples.csv (x_1..x_N)
    Sample(SampleArgs),
    /// Reference limit kernel on a grid → kernel.csv (x,y,K)
    LimitKernel(LimitArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Gue,
    MbHermite,
    MbLaguerre,
    Critical,
}

#[derive(Debug, Clone, Args)]
pub struct EnsembleArgs {
    /// JSON ensemble config.
    #[arg(long, conflicts_with = "ensemble")]
    pub config: Option<PathBuf>,
    /// Built-in ensemble, used when no config is given.
    #[arg(long, value_enum)]
    pub ensemble: Option<Preset>,
    /// Number of particles N.
    #[arg(long = "n-terms")]
    pub n_terms: Option<usize>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Potential V(x) for the built-in Muttalib–Borodin ensembles.
    #[arg(long)]
    pub potential: Option<String>,
    /// Askey parameter of the critical ensemble.
    #[arg(long)]
    pub q: Option<f64>,
    /// Coordinate scale c (x = c·u); automatic when omitted.
    #[arg(long)]
    pub scale: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct NumericArgs {
    /// Starting working precision in decimal digits.
    #[arg(long)]
    pub precision: Option<u32>,
    /// Precision escalation cap in decimal digits.
    #[arg(long, default_value_t = crate::gram::DEFAULT_MAX_DIGITS)]
    pub max_digits: u32,
    /// Gram cache directory (overrides the LOGGAS_CACHE_DIR variable).
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DensityMethod {
    Kernel,
    Mc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum NormArg {
    Count,
    Unit,
}

impl From<NormArg> for Normalization {
    fn from(n: NormArg) -> Self {
        match n {
            NormArg::Count => Normalization::ParticleCount,
            NormArg::Unit => Normalization::Unit,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    /// Grid range in scaled coordinates; defaults to where ρ > 10⁻⁶ max ρ.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true)]
    pub range: Option<Vec<f64>>,
    /// Number of grid points.
    #[arg(long)]
    pub points: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct ChainArgs {
    #[arg(long, default_value_t = 100_000)]
    pub sweeps: usize,
    #[arg(long, default_value_t = 10_000)]
    pub burn_in: usize,
    #[arg(long, default_value_t = 0.1)]
    pub step: f64,
    #[arg(long, default_value_t = 1)]
    pub thinning: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct DensityArgs {
    #[command(flatten)]
    pub ensemble: EnsembleArgs,
    #[command(flatten)]
    pub numeric: NumericArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, value_enum, default_value_t = DensityMethod::Kernel)]
    pub method: DensityMethod,
    #[arg(long, value_enum, default_value_t = NormArg::Count)]
    pub normalize: NormArg,
    #[command(flatten)]
    pub chain: ChainArgs,
}

#[derive(Debug, Clone, Args)]
pub struct KernelArgs {
    #[command(flatten)]
    pub ensemble: EnsembleArgs,
    #[command(flatten)]
    pub numeric: NumericArgs,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Clone, Args)]
pub struct GapArgs {
    #[command(flatten)]
    pub ensemble: EnsembleArgs,
    #[command(flatten)]
    pub numeric: NumericArgs,
    /// Unfold to unit mean density around the center (default for nnsd).
    #[arg(long, conflicts_with = "hard_edge")]
    pub unfold: bool,
    /// Intervals [a, a + s] from the lower support end, without unfolding.
    #[arg(long)]
    pub hard_edge: bool,
    /// Bulk point (scaled coordinates); defaults to the median of ρ.
    #[arg(long, allow_negative_numbers = true)]
    pub center: Option<f64>,
    #[arg(long, default_value_t = stats::DEFAULT_SMAX)]
    pub smax: f64,
    #[arg(long, default_value_t = stats::DEFAULT_DS)]
    pub ds: f64,
    #[arg(long = "nystrom-order", default_value_t = 32)]
    pub nystrom_order: usize,
    /// Highest n in E(n; s) for `gap`.
    #[arg(long, default_value_t = 2)]
    pub levels: usize,
}

#[derive(Debug, Clone, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub ensemble: EnsembleArgs,
    #[command(flatten)]
    pub chain: ChainArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum LimitFamily {
    /// Hard-edge Muttalib–Borodin limit K^(α,θ)
    Laguerre,
    /// Symmetrized real-line limit for odd θ
    Hermite,
    Sine,
    /// Bessel kernel K_B^(α)
    Bessel,
}

#[derive(Debug, Clone, Args)]
pub struct LimitArgs {
    #[arg(long, value_enum)]
    pub family: LimitFamily,
    #[arg(long, default_value_t = 0.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub theta: f64,
    #[command(flatten)]
    pub grid: GridArgs,
}

/// Result of one command: written files and the manifest.
#[derive(Debug)]
pub struct RunOutput {
    pub files: Vec<PathBuf>,
    pub manifest: RunManifest,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl EnsembleArgs {
    /// The config after applying flag overrides.
    pub fn config(&self) -> Result<EnsembleConfig, Error> {
        let mut cfg = match (&self.config, self.ensemble) {
            (Some(path), _) => EnsembleConfig::load(path)?,
            (None, Some(preset)) => self.preset(preset)?.to_config(),
            (None, None) => return Err(config_err("either --config or --ensemble is required")),
        };
        if self.config.is_some() {
            if let Some(n) = self.n_terms {
                cfg.n = n;
            }
            if let Some(t) = self.theta {
                if let Some(s) = &cfg.s {
                    let monomial = Expression::parse(s)
                        .ok()
                        .and_then(|e| e.monomial_exponent());
                    if monomial.is_none() {
                        return Err(config_err(format!(
                            "--theta cannot override the non-monomial map s = {s}"
                        )));
                    }
                    cfg.s = None;
                }
                cfg.theta = t;
            }
            if let Some(a) = self.alpha {
                cfg.alpha = a;
            }
            if let Some(v) = &self.potential {
                cfg.potential = Some(v.clone());
                cfg.askey_q = None;
                cfg.potential_table = None;
            }
            if let Some(q) = self.q {
                cfg.askey_q = Some(q);
                cfg.potential = None;
                cfg.potential_table = None;
            }
        }
        if let Some(g) = self.gamma {
            cfg.gamma = g;
        }
        if self.scale.is_some() {
            cfg.scale = self.scale;
        }
        Ok(cfg)
    }

    fn preset(&self, preset: Preset) -> Result<EnsembleSpec, Error> {
        let n = self
            .n_terms
            .ok_or_else(|| config_err("--n-terms is required with --ensemble"))?;
        let theta = self.theta.unwrap_or(1.0);
        Ok(match preset {
            Preset::Gue => {
                if self.theta.is_some_and(|t| t != 1.0) {
                    return Err(config_err("GUE has theta = 1; use --ensemble mb-hermite"));
                }
                EnsembleSpec::gue(n)
            }
            Preset::MbHermite => {
                EnsembleSpec::mb_hermite(n, theta, self.potential.as_deref().unwrap_or("x^2"))?
            }
            Preset::MbLaguerre => EnsembleSpec::mb_laguerre(
                n,
                theta,
                self.alpha.unwrap_or(0.0),
                self.potential.as_deref().unwrap_or("x"),
            )?,
            Preset::Critical => EnsembleSpec::critical(
                n,
                self.q
                    .ok_or_else(|| config_err("--q is required for the critical ensemble"))?,
            )?,
        })
    }

    pub fn spec(&self) -> Result<(EnsembleSpec, EnsembleConfig), Error> {
        let cfg = self.config()?;
        Ok((cfg.to_spec()?, cfg))
    }
}

impl NumericArgs {
    pub fn policy(&self) -> PrecisionPolicy {
        PrecisionPolicy {
            initial: self.precision.map(Precision::digits),
            max_digits: self.max_digits,
            tol: None,
        }
    }

    pub fn cache(&self) -> Option<GramCache> {
        self.cache_dir
            .clone()
            .or_else(|| {
                std::env::var_os(CACHE_ENV)
                    .filter(|v| !v.is_empty())
                    .map(PathBuf::from)
            })
            .map(GramCache::new)
    }
}

fn build_kernel(
    spec: &EnsembleSpec,
    numeric: &NumericArgs,
    manifest: &mut RunManifest,
) -> Result<KernelEvaluator, Error> {
    if spec.gamma != 1.0 {
        return Err(config_err(format!(
            "kernel methods need gamma = 1 (got {}); use `density --method mc` or `sample`",
            spec.gamma
        )));
    }
    let cache = numeric.cache();
    let k = KernelEvaluator::build(spec, &numeric.policy(), cache.as_ref())?;
    manifest.set("precision_digits", k.gram().precision.decimal_digits());
    manifest.set("gram_condition", k.gram().condition_estimate);
    manifest.set("gram_residual", k.gram().residual);
    manifest.set("scale", k.scale());
    if let Some(c) = &cache {
        manifest.set("cache_dir", c.dir().display().to_string());
    }
    Ok(k)
}

fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..points)
        .map(|k| lo + (hi - lo) * k as f64 / (points - 1) as f64)
        .collect()
}

fn grid_range(
    grid: &GridArgs,
    default: impl FnOnce() -> Result<(f64, f64), Error>,
) -> Result<(f64, f64), Error> {
    let (lo, hi) = match &grid.range {
        Some(r) => (r[0], r[1]),
        None => default()?,
    };
    if !(lo < hi && lo.is_finite() && hi.is_finite()) {
        return Err(config_err(format!(
            "grid range [{lo}, {hi}] must be finite with lo < hi"
        )));
    }
    Ok((lo, hi))
}

fn finish(
    mut manifest: RunManifest,
    out: &Path,
    name: &str,
    table: &Table,
    started: Instant,
) -> Result<RunOutput, Error> {
    let path = out.join(name);
    table.write(&path)?;
    manifest.outputs.push(name.into());
    manifest.wall_time_s = started.elapsed().as_secs_f64();
    let side = manifest.write_for(&path)?;
    Ok(RunOutput {
        files: vec![path, side],
        manifest,
    })
}

fn start_manifest(command: &str, spec: &EnsembleSpec, cfg: &EnsembleConfig) -> RunManifest {
    let mut m = RunManifest::new(command);
    m.config_hash = Some(spec.content_hash());
    m.config = serde_json::to_value(cfg).ok();
    m.set("n", spec.n);
    m
}

fn run_density(a: &DensityArgs, out: &Path) -> Result<RunOutput, Error> {
    let started = Instant::now();
    let (spec, cfg) = a.ensemble.spec()?;
    let mut m = start_manifest("density", &spec, &cfg);
    let norm: Normalization = a.normalize.into();
    m.set("method", format!("{:?}", a.method).to_lowercase());
    m.set("normalization", norm.name());
    match a.method {
        DensityMethod::Kernel => {
            let k = build_kernel(&spec, &a.numeric, &mut m)?;
            let (lo, hi) = grid_range(&a.grid, || Ok(k.extent(1e-6)?))?;
            let xs = linspace(lo, hi, a.grid.points.unwrap_or(401));
            m.set("grid", [lo, hi]);
            m.set("points", xs.len());
            let d = stats::density(&k, &xs, norm)?;
            let mut t = Table::new(vec!["x".into(), "rho".into()]);
            for (x, r) in d.xs.iter().zip(&d.rho) {
                t.push(vec![*x, *r]);
            }
            finish(m, out, "density.csv", &t, started)
        }
        DensityMethod::Mc => {
            let chain = run_chain(&spec, &a.chain, &mut m)?;
            let bins = a.grid.points.unwrap_or(60);
            let range = a.grid.range.as_ref().map(|r| (r[0], r[1]));
            let h = histogram_density(&chain, bins, range, norm)?;
            m.set("bins", bins);
            m.set("grid", [h.edges[0], h.edges[bins]]);
            let mut t = Table::new(vec!["x".into(), "rho".into(), "rho_err".into()]);
            for ((x, r), e) in h.centers().iter().zip(&h.density).zip(&h.errors) {
                t.push(vec![*x, *r, *e]);
            }
            finish(m, out, "density.csv", &t, started)
        }
    }
}

fn run_chain(
    spec: &EnsembleSpec,
    c: &ChainArgs,
    m: &mut RunManifest,
) -> Result<crate::mc::SampleChain, Error> {
    let cfg = ChainConfig {
        spec: spec.clone(),
        n_sweeps: c.sweeps,
        burn_in: c.burn_in,
        step_size: c.step,
        seed: c.seed,
        thinning: c.thinning,
    };
    let chain = metropolis_run(&cfg)?;
    m.set("seed", c.seed);
    m.set("sweeps", c.sweeps);
    m.set("burn_in", c.burn_in);
    m.set("thinning", c.thinning);
    m.set("scale", spec.scale.unwrap_or(1.0));
    m.set("acceptance_rate", chain.acceptance_rate);
    m.set("step_sizes", &chain.step_sizes);
    if let Some(w) = &chain.warning {
        eprintln!("warning: {w}");
        m.warnings.push(w.clone());
    }
    Ok(chain)
}

fn run_kernel(a: &KernelArgs, out: &Path) -> Result<RunOutput, Error> {
    let started = Instant::now();
    let (spec, cfg) = a.ensemble.spec()?;
    let mut m = start_manifest("kernel", &spec, &cfg);
    let k = build_kernel(&spec, &a.numeric, &mut m)?;
    let (lo, hi) = grid_range(&a.grid, || Ok(k.extent(1e-6)?))?;
    let xs = linspace(lo, hi, a.grid.points.unwrap_or(101));
    m.set("grid", [lo, hi]);
    m.set("points", xs.len());
    let values = k.grid(&xs, &xs)?;
    finish(m, out, "kernel.csv", &kernel_table(&xs, &values), started)
}

fn kernel_table(xs: &[f64], values: &[Vec<f64>]) -> Table {
    let mut t = Table::new(vec!["x".into(), "y".into(), "K".into()]);
    for (i, x) in xs.iter().enumerate() {
        for (j, y) in xs.iter().enumerate() {
            t.push(vec![*x, *y, values[i][j]]);
        }
    }
    t
}

/// Gap table for the flags in `a`; `nnsd` selects unfolding by default.
pub fn compute_gap(a: &GapArgs, nnsd: bool, m: &mut RunManifest) -> Result<GapTable, Error> {
    let (spec, _) = a.ensemble.spec()?;
    let k = build_kernel(&spec, &a.numeric, m)?;
    let grid = SGrid::new(a.smax, a.ds)?;
    let n_max = if nnsd { 0 } else { a.levels };
    m.set("smax", a.smax);
    m.set("ds", a.ds);
    m.set("nystrom_order", a.nystrom_order);
    m.set("levels", n_max);
    let placement = if a.hard_edge {
        Placement::HardEdge
    } else if a.unfold || nnsd {
        Placement::Unfolded { center: a.center }
    } else {
        Placement::Centered { center: a.center }
    };
    let run = stats::gap_statistics(k, placement, grid, a.nystrom_order, n_max)?;
    m.set("mode", run.mode);
    if let Some(c) = run.center {
        m.set("center", c);
    }
    if let Some(o) = run.origin {
        m.set("origin", o);
    }
    if let Some(f) = run.flatness {
        m.set("unfold_flatness", f);
    }
    let table = run.table;
    m.set("p0_integral", table.p0_integral());
    m.set("mean_spacing", table.mean_spacing());
    if table.clipped {
        m.warnings
            .push("Nyström eigenvalues outside [0, 1] were clipped".into());
    }
    Ok(table)
}

fn run_gap(a: &GapArgs, nnsd: bool, out: &Path) -> Result<RunOutput, Error> {
    let started = Instant::now();
    let (spec, cfg) = a.ensemble.spec()?;
    let command = if nnsd { "nnsd" } else { "gap" };
    let mut m = start_manifest(command, &spec, &cfg);
    let g = compute_gap(a, nnsd, &mut m)?;
    let t = if nnsd {
        let mut t = Table::new(vec!["s".into(), "p0".into()]);
        for (k, s) in g.s.iter().enumerate() {
            t.push(vec![*s, g.p[0][k]]);
        }
        t
    } else {
        gap_csv(&g)
    };
    finish(
        m,
        out,
        if nnsd { "nnsd.csv" } else { "gap.csv" },
        &t,
        started,
    )
}

/// Columns `s, E0..En, F0..Fn, p0..pn`.
pub fn gap_csv(g: &GapTable) -> Table {
    let levels = 0..=g.n_max;
    let mut columns = vec!["s".to_string()];
    for prefix in ["E", "F", "p"] {
        columns.extend(levels.clone().map(|n| format!("{prefix}{n}")));
    }
    let mut t = Table::new(columns);
    for (k, s) in g.s.iter().enumerate() {
        let mut row = vec![*s];
        for block in [&g.e, &g.f, &g.p] {
            row.extend(block.iter().map(|col| col[k]));
        }
        t.push(row);
    }
    t
}

fn run_sample(a: &SampleArgs, out: &Path) -> Result<RunOutput, Error> {
    let started = Instant::now();
    let (spec, cfg) = a.ensemble.spec()?;
    let mut m = start_manifest("sample", &spec, &cfg);
    let chain = run_chain(&spec, &a.chain, &mut m)?;
    let mut t = Table::new((1..=spec.n).map(|i| format!("x_{i}")).collect());
    t.comments.push(format!(
        "config_hash={} seed={}",
        spec.content_hash(),
        chain.seed
    ));
    for s in &chain.samples {
        t.push(s.clone());
    }
    m.set("samples", chain.samples.len());
    finish(m, out, "samples.csv", &t, started)
}

fn run_limit(a: &LimitArgs, out: &Path) -> Result<RunOutput, Error> {
    let started = Instant::now();
    let mut m = RunManifest::new("limit-kernel");
    m.set("family", format!("{:?}", a.family).to_lowercase());
    m.set("alpha", a.alpha);
    m.set("theta", a.theta);
    let (lo, hi) = grid_range(&a.grid, || {
        Ok(match a.family {
            LimitFamily::Laguerre | LimitFamily::Bessel => (0.05, 5.0),
            LimitFamily::Hermite | LimitFamily::Sine => (-5.0, 5.0),
        })
    })?;
    let xs = linspace(lo, hi, a.grid.points.unwrap_or(51));
    m.set("grid", [lo, hi]);
    m.set("points", xs.len());
    let policy = SeriesPolicy::default();
    let (alpha, theta) = (a.alpha, a.theta);
    let eval = |x: f64, y: f64| -> Result<f64, Error> {
        Ok(match a.family {
            LimitFamily::Laguerre => reference::laguerre_limit_kernel(alpha, theta, x, y, policy)?,
            LimitFamily::Hermite => reference::hermite_limit_kernel(alpha, theta, x, y, policy)?,
            LimitFamily::Sine => reference::sine_kernel(x, y),
            LimitFamily::Bessel => reference::bessel_kernel(alpha, x, y)?,
        })
    };
    use rayon::prelude::*;
    let values = xs
        .par_iter()
        .map(|&x| {
            xs.iter()
                .map(|&y| eval(x, y))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    finish(m, out, "kernel.csv", &kernel_table(&xs, &values), started)
}

/// Run a parsed command line.
pub fn run(cli: &Cli) -> Result<RunOutput, Error> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(config_err("--threads must be at least 1"));
        }
        // A second initialization in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    let out = cli.out.as_path();
    match &cli.command {
        Command::Density(a) => run_density(a, out),
        Command::Kernel(a) => run_kernel(a, out),
        Command::Gap(a) => run_gap(a, false, out),
        Command::Nnsd(a) => run_gap(a, true, out),
        Command::Sample(a) => run_sample(a, out),
        Command::LimitKernel(a) => run_limit(a, out),
    }
}

/// Parse `args` (including the program name) and run.
pub fn run_from<I, T>(args: I) -> Result<RunOutput, Error>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| config_err(e.to_string()))?;
    run(&cli)
}
