//! Executing a configured run and writing its artifacts.

use std::path::{Path, PathBuf};
use std::time::Instant;

use genvtest::composite::{adjusted_alpha, adjusted_rank_envelope, approx_adjusted_alpha, plug_in_test, AdjustedResult, CompositeConfig};
use genvtest::{test_sample, Envelope, EnvelopeDecision, Grid, OrderingKind, TestConfig, TestReport, TieStrategy};
use serde::Serialize;

use crate::config::{Adjust, Mode, RunConfig};
use crate::io::{emit_envelope, ingest_curves, ingest_pattern};
use crate::svg::{render, Plot};
use crate::CliError;

pub const FORMAT_VERSION: u32 = 1;

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub format_version: u32,
    pub mode: Mode,
    pub test: String,
    pub tie_strategy: TieStrategy,
    pub summary: Option<String>,
    pub model: Option<String>,
    pub fitted_model: Option<String>,
    pub adjust: Adjust,
    pub alpha: f64,
    pub n_sim: usize,
    pub n_sim_inner: Option<usize>,
    pub p: Option<f64>,
    pub p_lower: Option<f64>,
    pub p_upper: Option<f64>,
    pub p_rank_count: Option<f64>,
    pub alpha_star: Option<f64>,
    pub k_alpha: Option<usize>,
    pub k_alpha_star: Option<usize>,
    pub u_alpha: Option<f64>,
    pub u_alpha_star: Option<f64>,
    pub decision: EnvelopeDecision,
    pub plug_in_decision: Option<EnvelopeDecision>,
    pub replicates_failed: Option<usize>,
    pub seed: u64,
    pub warnings: Vec<String>,
    pub timing_ms: f64,
}

/// A finished run: the report plus what the envelope plot needs.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: Report,
    pub grid: Grid,
    pub observed: Vec<f64>,
    pub envelope: Option<Envelope>,
}

fn base_report(cfg: &RunConfig) -> Report {
    Report {
        format_version: FORMAT_VERSION,
        mode: cfg.mode,
        test: cfg.ordering.label(),
        tie_strategy: cfg.tie_strategy,
        summary: (cfg.mode == Mode::Pattern).then(|| cfg.summary.label().to_string()),
        model: (cfg.mode == Mode::Pattern).then(|| cfg.model_name.clone()),
        fitted_model: None,
        adjust: cfg.adjust,
        alpha: cfg.alpha,
        n_sim: cfg.nsim,
        n_sim_inner: cfg.nsim_inner,
        p: None,
        p_lower: None,
        p_upper: None,
        p_rank_count: None,
        alpha_star: None,
        k_alpha: None,
        k_alpha_star: None,
        u_alpha: None,
        u_alpha_star: None,
        decision: EnvelopeDecision::NoEvidence,
        plug_in_decision: None,
        replicates_failed: None,
        seed: cfg.seed,
        warnings: Vec::new(),
        timing_ms: 0.0,
    }
}

fn fill_from_test(report: &mut Report, t: &TestReport) {
    report.n_sim = t.n_sim;
    report.p = t.p;
    report.p_lower = t.p_interval.map(|pi| pi.lower());
    report.p_upper = t.p_interval.map(|pi| pi.upper());
    report.p_rank_count = t.p_rank_count;
    report.k_alpha = t.k_alpha;
    report.u_alpha = t.u_alpha;
    report.decision = t.decision;
    report.warnings = t.warnings.clone();
}

fn fill_from_adjusted(report: &mut Report, a: &AdjustedResult) {
    report.p = Some(a.p);
    report.p_lower = a.p_interval.map(|pi| pi.lower());
    report.p_upper = a.p_interval.map(|pi| pi.upper());
    report.p_rank_count = a.k_alpha.map(|_| a.p);
    report.alpha_star = Some(a.alpha_star);
    report.k_alpha = a.k_alpha;
    report.k_alpha_star = a.k_alpha_star;
    report.u_alpha = a.u_alpha;
    report.u_alpha_star = a.u_alpha_star;
    report.decision = a.decision;
    report.plug_in_decision = Some(a.plug_in_decision);
    report.replicates_failed = Some(a.diagnostics.failed);
    report.fitted_model = Some(format!("{:?}", a.fitted));
}

/// Run the configured test on the current rayon pool.
pub fn run(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let start = Instant::now();
    let test = TestConfig::new(cfg.ordering, cfg.alpha).with_tie_strategy(cfg.tie_strategy);
    let mut report = base_report(cfg);
    let mut outcome = match cfg.mode {
        Mode::Curves => {
            let sample = ingest_curves(&cfg.input)?;
            let t = test_sample(&sample, &test, cfg.seed)?;
            fill_from_test(&mut report, &t);
            Outcome { report, grid: sample.grid().clone(), observed: sample.observed().to_vec(), envelope: t.envelope }
        }
        Mode::Pattern => {
            let pattern = ingest_pattern(&cfg.input)?;
            let w = pattern.window();
            let rmin = cfg.rmin.unwrap_or(0.0);
            let rmax = cfg.rmax.unwrap_or(0.25 * w.width().min(w.height()));
            if !(rmin < rmax) {
                return Err(CliError::Config(format!("rmin = {rmin} must be below rmax = {rmax}")));
            }
            let grid = Grid::linspace(rmin, rmax, cfg.rsteps)?;
            let fitter = cfg.model.fitter(&grid);
            let composite = CompositeConfig { summary: cfg.summary, grid: grid.clone(), n_sim: cfg.nsim, alpha: cfg.alpha };
            let adjusted = match (cfg.adjust, cfg.ordering) {
                (Adjust::None, _) => None,
                (Adjust::Exact, OrderingKind::ExtremeRank | OrderingKind::RankCount) => {
                    Some(adjusted_rank_envelope(&pattern, fitter.as_ref(), &composite, cfg.seed)?)
                }
                (Adjust::Exact, OrderingKind::Deviation { kind, scaling }) => {
                    Some(adjusted_alpha(&pattern, fitter.as_ref(), &composite, kind, scaling, cfg.seed)?)
                }
                (Adjust::Approx, OrderingKind::ExtremeRank | OrderingKind::RankCount) => {
                    let inner = cfg.nsim_inner.expect("checked when resolving");
                    Some(approx_adjusted_alpha(&pattern, fitter.as_ref(), &composite, inner, cfg.seed)?)
                }
                (adj, ordering) => {
                    return Err(CliError::Config(format!(
                        "adjustment {adj:?} is not available for test {}",
                        ordering.label()
                    )))
                }
            };
            match adjusted {
                Some(a) => {
                    fill_from_adjusted(&mut report, &a);
                    Outcome { report, grid: a.grid.clone(), observed: a.observed.clone(), envelope: a.adjusted_envelope }
                }
                None => {
                    let (t, fitted) = plug_in_test(&pattern, fitter.as_ref(), &composite, &test, cfg.seed)?;
                    fill_from_test(&mut report, &t);
                    if cfg.model.has_free_parameters() {
                        report.fitted_model = Some(format!("{fitted:?}"));
                    }
                    let grid = t.envelope.as_ref().map_or_else(|| grid.clone(), |e| e.grid.clone());
                    let observed = cfg.summary.evaluate(&pattern, &grid)?;
                    Outcome { report, grid, observed, envelope: t.envelope }
                }
            }
        }
    };
    outcome.report.timing_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(outcome)
}

/// Run inside a pool of `cfg.workers` threads (default: rayon's choice).
pub fn run_with_workers(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.workers {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    pool.install(|| run(cfg))
}

fn write(path: PathBuf, contents: &str) -> Result<PathBuf, CliError> {
    std::fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

/// Write `report.json` and, when the test has an envelope, `envelope.csv`
/// and `envelope.svg` into `dir`. Returns the written paths.
pub fn write_artifacts(outcome: &Outcome, dir: &Path, y_label: &str) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut json = serde_json::to_string_pretty(&outcome.report).expect("report serializes");
    json.push('\n');
    let mut written = vec![write(dir.join("report.json"), &json)?];
    if let Some(env) = &outcome.envelope {
        let central = env.central.as_deref();
        let csv = emit_envelope(&outcome.grid, &env.lower, central, &env.upper, &outcome.observed);
        written.push(write(dir.join("envelope.csv"), &csv)?);
        let svg = render(&Plot {
            r: outcome.grid.values(),
            lower: &env.lower,
            upper: &env.upper,
            central,
            observed: &outcome.observed,
            y_label,
        });
        written.push(write(dir.join("envelope.svg"), &svg)?);
    }
    Ok(written)
}

/// Axis label for the plotted summary.
pub fn y_label(cfg: &RunConfig) -> String {
    match cfg.mode {
        Mode::Curves => "T(r)".into(),
        Mode::Pattern => match cfg.summary.label() {
            "centred_l" => "L(r) - r".into(),
            "markweighted_centred_l" => "L_mm(r) - r".into(),
            other => format!("{}(r)", other.to_uppercase()),
        },
    }
}
