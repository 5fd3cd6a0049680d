//! Run configuration: flags, TOML config files, and their resolution.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use genvtest::composite::{BinomialFit, FittableModel, FixedModel, MatClustFit, PoissonFit};
use genvtest::envelopes::alpha_count_is_integer;
use genvtest::pointproc::{MatClustSpec, StraussSpec};
use genvtest::summaries::{SummarySpec, DEFAULT_F_LATTICE};
use genvtest::{DeviationKind, Grid, Intensity, ModelSpec, OrderingKind, Scaling, TieStrategy};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Environment variable that overrides `--seed`.
pub const SEED_ENV: &str = "GENVTEST_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Test a precomputed bundle of curves.
    Curves,
    /// Simulate a null model for an observed point pattern.
    Pattern,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum TieArg {
    Interval,
    RankCount,
    Randomize,
}

impl From<TieArg> for TieStrategy {
    fn from(t: TieArg) -> Self {
        match t {
            TieArg::Interval => TieStrategy::Interval,
            TieArg::RankCount => TieStrategy::RankCount,
            TieArg::Randomize => TieStrategy::Randomize,
        }
    }
}

/// Composite-hypothesis correction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Adjust {
    None,
    /// Refit and resimulate `s` times per replicate.
    Exact,
    /// Rank-count approximation with `--nsim-inner` inner simulations.
    Approx,
}

/// Settings as given on the command line or in a config file. Every field
/// is optional; flags take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, clap::Args)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Pattern file (pattern mode) or curves CSV (curves mode).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// rank, rank_count, mhrd, mbd, mad, st_mad, qdir_mad, int, st_int, qdir_int
    #[arg(long)]
    pub test: Option<String>,
    #[arg(long, value_enum)]
    pub tie_strategy: Option<TieArg>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub nsim: Option<usize>,
    #[arg(long)]
    pub nsim_inner: Option<usize>,
    #[arg(long, value_enum)]
    pub adjust: Option<Adjust>,
    #[arg(long)]
    pub rmin: Option<f64>,
    #[arg(long)]
    pub rmax: Option<f64>,
    #[arg(long)]
    pub rsteps: Option<usize>,
    /// e.g. poisson, poisson:200, binomial, strauss:250,0.6,0.03, matclust, matclust:50,0.06,4
    #[arg(long)]
    pub model: Option<String>,
    /// L, F, G, J, markweighted_L
    #[arg(long)]
    pub summary: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub allow_nonconforming_alpha: Option<bool>,
}

impl Settings {
    pub fn from_toml_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Fields set in `self` win over `base`.
    pub fn over(self, base: Settings) -> Settings {
        Settings {
            mode: self.mode.or(base.mode),
            input: self.input.or(base.input),
            test: self.test.or(base.test),
            tie_strategy: self.tie_strategy.or(base.tie_strategy),
            alpha: self.alpha.or(base.alpha),
            nsim: self.nsim.or(base.nsim),
            nsim_inner: self.nsim_inner.or(base.nsim_inner),
            adjust: self.adjust.or(base.adjust),
            rmin: self.rmin.or(base.rmin),
            rmax: self.rmax.or(base.rmax),
            rsteps: self.rsteps.or(base.rsteps),
            model: self.model.or(base.model),
            summary: self.summary.or(base.summary),
            seed: self.seed.or(base.seed),
            workers: self.workers.or(base.workers),
            out_dir: self.out_dir.or(base.out_dir),
            allow_nonconforming_alpha: self.allow_nonconforming_alpha.or(base.allow_nonconforming_alpha),
        }
    }

    /// Apply the seed environment override, if set.
    pub fn with_env_seed(mut self, value: Option<String>) -> Result<Self, CliError> {
        if let Some(v) = value {
            let seed = v
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("{SEED_ENV}={v:?} is not a 64-bit unsigned integer")))?;
            self.seed = Some(seed);
        }
        Ok(self)
    }
}

/// Null model: fixed parameters or fitted to the data.
#[derive(Debug, Clone)]
pub enum ModelChoice {
    Fixed(ModelSpec),
    FitPoisson,
    FitBinomial,
    FitMatClust,
}

impl ModelChoice {
    pub fn fitter(&self, grid: &Grid) -> Box<dyn FittableModel> {
        match self {
            ModelChoice::Fixed(m) => Box::new(FixedModel(m.clone())),
            ModelChoice::FitPoisson => Box::new(PoissonFit),
            ModelChoice::FitBinomial => Box::new(BinomialFit),
            ModelChoice::FitMatClust => Box::new(MatClustFit { grid: grid.clone() }),
        }
    }

    pub fn has_free_parameters(&self) -> bool {
        !matches!(self, ModelChoice::Fixed(_))
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mode: Mode,
    pub input: PathBuf,
    pub test_name: String,
    pub ordering: OrderingKind,
    pub tie_strategy: TieStrategy,
    pub alpha: f64,
    pub nsim: usize,
    pub nsim_inner: Option<usize>,
    pub adjust: Adjust,
    pub rmin: Option<f64>,
    pub rmax: Option<f64>,
    pub rsteps: usize,
    pub model_name: String,
    pub model: ModelChoice,
    pub summary: SummarySpec,
    pub seed: u64,
    pub workers: Option<usize>,
    pub out_dir: PathBuf,
}

pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_NSIM: usize = 999;
pub const DEFAULT_RSTEPS: usize = 50;
pub const DEFAULT_SEED: u64 = 1;

fn config(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    pub fn resolve(s: Settings) -> Result<Self, CliError> {
        let mode = s.mode.ok_or_else(|| config("--mode is required (curves or pattern)"))?;
        let input = s.input.ok_or_else(|| config("--input is required"))?;
        let test_name = s.test.unwrap_or_else(|| "rank".into());
        let ordering = parse_ordering(&test_name)?;
        let alpha = s.alpha.unwrap_or(DEFAULT_ALPHA);
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(config(format!("alpha = {alpha} not in (0, 1)")));
        }
        let nsim = s.nsim.unwrap_or(DEFAULT_NSIM);
        if mode == Mode::Pattern && nsim < 1 {
            return Err(config("nsim must be positive"));
        }
        if mode == Mode::Pattern && !s.allow_nonconforming_alpha.unwrap_or(false) && !alpha_count_is_integer(alpha, nsim + 1) {
            return Err(config(format!(
                "alpha * (nsim + 1) = {} is not an integer; pass --allow-nonconforming-alpha to run anyway",
                alpha * (nsim + 1) as f64
            )));
        }
        let adjust = s.adjust.unwrap_or(Adjust::None);
        if adjust == Adjust::Approx && s.nsim_inner.is_none() {
            return Err(config("--adjust approx needs --nsim-inner"));
        }
        if let (Some(lo), Some(hi)) = (s.rmin, s.rmax) {
            if !(lo < hi) {
                return Err(config(format!("rmin = {lo} must be below rmax = {hi}")));
            }
        }
        if s.rmin.is_some_and(|r| r < 0.0) {
            return Err(config("rmin must be nonnegative"));
        }
        let rsteps = s.rsteps.unwrap_or(DEFAULT_RSTEPS);
        if rsteps < 2 {
            return Err(config("rsteps must be at least 2"));
        }
        let model_name = s.model.unwrap_or_else(|| "poisson".into());
        let model = parse_model(&model_name)?;
        if adjust != Adjust::None && !model.has_free_parameters() {
            return Err(config(format!("model {model_name:?} has no free parameters to adjust for")));
        }
        if s.workers == Some(0) {
            return Err(config("workers must be positive"));
        }
        Ok(Self {
            mode,
            input,
            test_name,
            ordering,
            tie_strategy: s.tie_strategy.map(Into::into).unwrap_or_default(),
            alpha,
            nsim,
            nsim_inner: s.nsim_inner,
            adjust,
            rmin: s.rmin,
            rmax: s.rmax,
            rsteps,
            model_name,
            model,
            summary: parse_summary(s.summary.as_deref().unwrap_or("L"))?,
            seed: s.seed.unwrap_or(DEFAULT_SEED),
            workers: s.workers,
            out_dir: s.out_dir.unwrap_or_else(|| PathBuf::from(".")),
        })
    }
}

pub fn parse_ordering(name: &str) -> Result<OrderingKind, CliError> {
    use DeviationKind::{Integral, Max};
    let dev = |kind, scaling| OrderingKind::Deviation { kind, scaling };
    Ok(match name.to_ascii_lowercase().as_str() {
        "rank" | "extreme_rank" | "erl" => OrderingKind::ExtremeRank,
        "rank_count" | "rcount" => OrderingKind::RankCount,
        "mhrd" => OrderingKind::Mhrd,
        "mbd" => OrderingKind::Mbd,
        "mad" => dev(Max, Scaling::None),
        "st_mad" | "st" => dev(Max, Scaling::Studentized),
        "qdir_mad" | "qdir" => dev(Max, Scaling::DirectionalQuantile),
        "int" | "integral" => dev(Integral, Scaling::None),
        "st_int" => dev(Integral, Scaling::Studentized),
        "qdir_int" => dev(Integral, Scaling::DirectionalQuantile),
        other => return Err(config(format!("unknown test {other:?}"))),
    })
}

pub fn parse_summary(name: &str) -> Result<SummarySpec, CliError> {
    Ok(match name.to_ascii_lowercase().as_str() {
        "l" | "centred_l" => SummarySpec::CentredL,
        "f" => SummarySpec::F { lattice: DEFAULT_F_LATTICE },
        "g" => SummarySpec::G,
        "j" => SummarySpec::J { lattice: DEFAULT_F_LATTICE },
        "markweighted_l" | "lmm" => SummarySpec::MarkWeightedCentredL,
        other => return Err(config(format!("unknown summary {other:?}"))),
    })
}

fn params(name: &str, text: &str, count: usize) -> Result<Vec<f64>, CliError> {
    let v: Vec<f64> = text
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| config(format!("model {name}: cannot parse parameters {text:?}")))?;
    if v.len() != count {
        return Err(config(format!("model {name} takes {count} parameters, got {}", v.len())));
    }
    Ok(v)
}

/// `name` for a fitted model, `name:p1,p2,...` for fixed parameters.
pub fn parse_model(text: &str) -> Result<ModelChoice, CliError> {
    let (name, args) = match text.split_once(':') {
        Some((n, a)) => (n.trim().to_ascii_lowercase(), Some(a)),
        None => (text.trim().to_ascii_lowercase(), None),
    };
    let fixed = ModelChoice::Fixed;
    let clust = |p: &[f64]| MatClustSpec::new(p[0], p[1], p[2]);
    Ok(match (name.as_str(), args) {
        ("poisson" | "csr", None) => ModelChoice::FitPoisson,
        ("poisson" | "csr", Some(a)) => fixed(ModelSpec::Poisson { intensity: params(&name, a, 1)?[0] }),
        ("binomial", None) => ModelChoice::FitBinomial,
        ("binomial", Some(a)) => {
            let n = params(&name, a, 1)?[0];
            if n < 0.0 || n.fract() != 0.0 {
                return Err(config(format!("binomial count {n} is not a nonnegative integer")));
            }
            fixed(ModelSpec::Binomial { n: n as usize })
        }
        ("inhompoisson", Some(a)) => {
            let p = params(&name, a, 3)?;
            fixed(ModelSpec::InhomPoisson {
                intensity: Intensity::LogLinear { intercept: p[0], slope_x: p[1], slope_y: p[2] },
            })
        }
        ("strauss", Some(a)) => {
            let p = params(&name, a, 3)?;
            fixed(ModelSpec::Strauss(StraussSpec::new(p[0], p[1], p[2])))
        }
        ("hardcore", Some(a)) => {
            let p = params(&name, a, 2)?;
            fixed(ModelSpec::Strauss(StraussSpec::hard_core(p[0], p[1])))
        }
        ("matclust", None) => ModelChoice::FitMatClust,
        ("matclust", Some(a)) => fixed(ModelSpec::MatClust(clust(&params(&name, a, 3)?))),
        ("noomatclust", Some(a)) => {
            let p = params(&name, a, 4)?;
            fixed(ModelSpec::NoOMatClust { cluster: clust(&p), hard_core: p[3] })
        }
        ("mixmatclust", Some(a)) => {
            let p = params(&name, a, 6)?;
            fixed(ModelSpec::MixMatClust(clust(&p[..3]), clust(&p[3..])))
        }
        _ => return Err(config(format!("unknown model {text:?}"))),
    })
}
