//! Barnard Monte Carlo p-values, tie-breaking, and the end-to-end global
//! envelope test.

use std::cmp::Ordering;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::curves::{pointwise_ranks, FunctionalSample, TiePolicy};
use crate::envelopes::{
    alpha_count, alpha_count_is_integer, critical_rank, kth_envelope, p_interval,
    scaled_mad_envelope, Envelope, EnvelopeDecision, PInterval,
};
use crate::error::{Error, Result};
use crate::measures::{
    deviation, extreme_rank, mbd, mhrd, rank_counts, DeviationKind, DeviationSpec,
    ExtremeRanks, RankCountVector, Scaling,
};
use crate::rng::{self, StreamRng, TIE_BREAK_STREAM};

/// Below this many simulations the extreme-rank p-interval tends to be wide.
pub const RECOMMENDED_RANK_SIMS: usize = 2499;

/// `p = (1 + #{i >= 2 : Tᵢ ≺ T₁}) / (s + 1)` where `cmp(a, b) == Less`
/// means `a` is more extreme than `b`. Item 0 is the observed statistic.
///
/// Fails if any simulated item ties with the observed one.
pub fn barnard_p<T>(items: &[T], mut cmp: impl FnMut(&T, &T) -> Ordering) -> Result<f64> {
    let (obs, sims) = items
        .split_first()
        .ok_or_else(|| Error::InvalidInput("no statistics".into()))?;
    let mut more_extreme = 0usize;
    let mut ties = 0usize;
    for t in sims {
        match cmp(t, obs) {
            Ordering::Less => more_extreme += 1,
            Ordering::Equal => ties += 1,
            Ordering::Greater => {}
        }
    }
    if ties > 0 {
        return Err(Error::Ties { count: ties });
    }
    Ok((1 + more_extreme) as f64 / items.len() as f64)
}

/// Strict ranks (1 = most extreme) under the lexicographic order of
/// `(item, aux)`: ties in `cmp` are resolved by the smaller auxiliary value.
pub fn lex_ranks(n: usize, mut cmp: impl FnMut(usize, usize) -> Ordering, aux: &[f64]) -> Vec<usize> {
    assert_eq!(aux.len(), n, "one auxiliary value per item");
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| cmp(a, b).then_with(|| aux[a].total_cmp(&aux[b])));
    let mut ranks = vec![0; n];
    for (pos, i) in idx.into_iter().enumerate() {
        ranks[i] = pos + 1;
    }
    ranks
}

/// Break ties with i.i.d. uniform auxiliaries; returns strict ranks.
/// Comparisons that are not ties keep their order.
pub fn break_ties<T, R: Rng + ?Sized>(
    items: &[T],
    mut cmp: impl FnMut(&T, &T) -> Ordering,
    rng: &mut R,
) -> Vec<usize> {
    let aux: Vec<f64> = (0..items.len()).map(|_| rng.random()).collect();
    lex_ranks(items.len(), |a, b| cmp(&items[a], &items[b]), &aux)
}

/// Ordering of curves used by a test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum OrderingKind {
    ExtremeRank,
    RankCount,
    Mhrd,
    Mbd,
    Deviation { kind: DeviationKind, scaling: Scaling },
}

impl OrderingKind {
    /// Short label, e.g. `max|qdir`.
    pub fn label(&self) -> String {
        match self {
            OrderingKind::ExtremeRank => "rank".into(),
            OrderingKind::RankCount => "rank_count".into(),
            OrderingKind::Mhrd => "mhrd".into(),
            OrderingKind::Mbd => "mbd".into(),
            OrderingKind::Deviation { kind, scaling } => {
                let k = match kind {
                    DeviationKind::Max => "max",
                    DeviationKind::Integral => "int",
                };
                match scaling {
                    Scaling::None => k.into(),
                    Scaling::Studentized => format!("{k}|st"),
                    Scaling::DirectionalQuantile => format!("{k}|qdir"),
                }
            }
        }
    }
}

/// How ties in extreme ranks are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieStrategy {
    /// Report the p-interval and a three-way decision.
    #[default]
    Interval,
    /// Refine with rank counts; residual ties are randomized.
    RankCount,
    /// Randomize ties among the extreme ranks.
    Randomize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestConfig {
    pub ordering: OrderingKind,
    pub alpha: f64,
    pub tie_strategy: TieStrategy,
    /// Known expectation curve; estimated from the simulations otherwise.
    pub reference: Option<Vec<f64>>,
}

impl TestConfig {
    pub fn new(ordering: OrderingKind, alpha: f64) -> Self {
        Self {
            ordering,
            alpha,
            tie_strategy: TieStrategy::default(),
            reference: None,
        }
    }

    pub fn with_tie_strategy(mut self, tie_strategy: TieStrategy) -> Self {
        self.tie_strategy = tie_strategy;
        self
    }
}

/// Per-curve scores for one ordering, with a "more extreme" comparator.
#[derive(Debug, Clone)]
pub enum OrderingScores {
    ExtremeRank(ExtremeRanks),
    RankCount(Vec<RankCountVector>),
    /// Smaller is more extreme (depths).
    Depth(Vec<f64>),
    /// Larger is more extreme (deviations).
    Deviation(Vec<f64>),
}

impl OrderingScores {
    pub fn compute(sample: &FunctionalSample, ordering: OrderingKind, reference: Option<&[f64]>) -> Result<Self> {
        Ok(match ordering {
            OrderingKind::ExtremeRank => {
                Self::ExtremeRank(extreme_rank(&pointwise_ranks(sample, TiePolicy::MidRank)))
            }
            OrderingKind::RankCount => Self::RankCount(rank_counts(
                &pointwise_ranks(sample, TiePolicy::MidRank),
                sample.grid(),
            )),
            OrderingKind::Mhrd => Self::Depth(mhrd(
                &pointwise_ranks(sample, TiePolicy::MaxRank),
                sample.grid(),
            )),
            OrderingKind::Mbd => Self::Depth(mbd(sample)?),
            OrderingKind::Deviation { kind, scaling } => {
                let spec = deviation_spec(sample, kind, scaling, reference)?;
                Self::Deviation(deviation(sample, &spec)?)
            }
        })
    }

    pub fn len(&self) -> usize {
        match self {
            Self::ExtremeRank(r) => r.len(),
            Self::RankCount(n) => n.len(),
            Self::Depth(v) | Self::Deviation(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `Less` iff curve `i` is more extreme than curve `j`.
    pub fn compare(&self, i: usize, j: usize) -> Ordering {
        match self {
            Self::ExtremeRank(r) => r.0[i].cmp(&r.0[j]),
            Self::RankCount(n) => n[i].cmp_extremeness(&n[j]),
            Self::Depth(v) => v[i].total_cmp(&v[j]),
            Self::Deviation(v) => v[j].total_cmp(&v[i]),
        }
    }

    /// Barnard p-value of curve 0; errors on ties with it.
    pub fn p_value(&self) -> Result<f64> {
        let idx: Vec<usize> = (0..self.len()).collect();
        barnard_p(&idx, |&a, &b| self.compare(a, b))
    }

    /// p-value of curve 0 after lexicographic tie-breaking with `aux`.
    pub fn p_with_aux(&self, aux: &[f64]) -> f64 {
        let n = self.len();
        let more = (1..n)
            .filter(|&i| {
                self.compare(i, 0)
                    .then_with(|| aux[i].total_cmp(&aux[0]))
                    .is_lt()
            })
            .count();
        (1 + more) as f64 / n as f64
    }

    /// Conservative p-value counting ties with the observed curve as more
    /// extreme.
    pub fn p_conservative(&self) -> f64 {
        let n = self.len();
        let k = (0..n).filter(|&i| self.compare(i, 0).is_le()).count();
        k as f64 / n as f64
    }
}

pub(crate) fn deviation_spec(
    sample: &FunctionalSample,
    kind: DeviationKind,
    scaling: Scaling,
    reference: Option<&[f64]>,
) -> Result<DeviationSpec> {
    let spec = DeviationSpec::estimate(sample, kind, scaling)?;
    match reference {
        Some(t0) => spec.with_reference(t0.to_vec()),
        None => Ok(spec),
    }
}

/// Outcome of a global envelope test.
#[derive(Debug, Clone, PartialEq)]
pub struct TestReport {
    pub ordering: OrderingKind,
    pub tie_strategy: TieStrategy,
    pub alpha: f64,
    /// Number of simulations `s`.
    pub n_sim: usize,
    /// Single p-value, when the ordering (or tie strategy) gives one.
    pub p: Option<f64>,
    pub p_interval: Option<PInterval>,
    /// Rank-count p-value refining the p-interval.
    pub p_rank_count: Option<f64>,
    pub k_alpha: Option<usize>,
    pub u_alpha: Option<f64>,
    pub decision: EnvelopeDecision,
    pub envelope: Option<Envelope>,
    pub seed: u64,
    pub warnings: Vec<String>,
}

/// Simulated curves: precomputed, or produced by a generator called once per
/// replicate with that replicate's own random stream.
pub enum Simulated<'a> {
    Curves(Vec<Vec<f64>>),
    Generator {
        count: usize,
        generate: &'a (dyn Fn(usize, &mut StreamRng) -> Result<Vec<f64>> + Sync),
    },
}

/// Run generator replicates `1..=count` under `seed`.
pub fn simulate_curves(
    count: usize,
    seed: u64,
    generate: &(dyn Fn(usize, &mut StreamRng) -> Result<Vec<f64>> + Sync),
) -> Result<Vec<Vec<f64>>> {
    rng::replicate(count, seed, |i, r| generate(i + 1, r))
        .into_iter()
        .collect()
}

fn tie_aux(seed: u64, n: usize) -> Vec<f64> {
    let mut r = rng::stream(seed, TIE_BREAK_STREAM);
    (0..n).map(|_| r.random()).collect()
}

fn binary(reject: bool) -> EnvelopeDecision {
    if reject {
        EnvelopeDecision::Reject
    } else {
        EnvelopeDecision::NoEvidence
    }
}

/// Test the observed curve against simulated ones on a shared grid.
pub fn global_envelope_test(
    grid: &crate::curves::Grid,
    observed: &[f64],
    simulated: Simulated<'_>,
    config: &TestConfig,
    seed: u64,
) -> Result<TestReport> {
    if !(config.alpha > 0.0 && config.alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha = {} not in (0, 1)", config.alpha)));
    }
    let sims = match simulated {
        Simulated::Curves(c) => c,
        Simulated::Generator { count, generate } => simulate_curves(count, seed, generate)?,
    };
    let mut rows = Vec::with_capacity(sims.len() + 1);
    rows.push(observed.to_vec());
    rows.extend(sims);
    let sample = FunctionalSample::from_rows(grid.clone(), rows)?;
    test_sample(&sample, config, seed)
}

/// [`global_envelope_test`] on an assembled sample (row 0 observed).
pub fn test_sample(sample: &FunctionalSample, config: &TestConfig, seed: u64) -> Result<TestReport> {
    let alpha = config.alpha;
    let n = sample.n_curves();
    let s = sample.n_sim();
    let mut warnings = Vec::new();
    if !alpha_count_is_integer(alpha, n) {
        warnings.push(format!(
            "alpha * (s + 1) = {} is not an integer; the test is not exact",
            alpha * n as f64
        ));
    }
    let mut report = TestReport {
        ordering: config.ordering,
        tie_strategy: config.tie_strategy,
        alpha,
        n_sim: s,
        p: None,
        p_interval: None,
        p_rank_count: None,
        k_alpha: None,
        u_alpha: None,
        decision: EnvelopeDecision::NoEvidence,
        envelope: None,
        seed,
        warnings: Vec::new(),
    };
    let aux = tie_aux(seed, n);
    let budget = alpha_count(alpha, n);
    let reject = |p: f64| p * n as f64 <= budget + 1e-9;

    match config.ordering {
        OrderingKind::ExtremeRank | OrderingKind::RankCount => {
            if s < RECOMMENDED_RANK_SIMS {
                warnings.push(format!(
                    "s = {s} simulations; at least {RECOMMENDED_RANK_SIMS} are recommended for the rank envelope"
                ));
            }
            let tableau = pointwise_ranks(sample, TiePolicy::MidRank);
            let ranks = extreme_rank(&tableau);
            let pi = p_interval(&ranks);
            let k = critical_rank(&ranks, alpha);
            let mut env = kth_envelope(sample, k)?;
            if let Some(t0) = &config.reference {
                env = env.with_central(t0.clone())?;
            }
            report.p_interval = Some(pi);
            report.k_alpha = Some(k);
            report.envelope = Some(env);

            let strategy = match config.ordering {
                OrderingKind::RankCount => TieStrategy::RankCount,
                _ => config.tie_strategy,
            };
            match strategy {
                TieStrategy::Interval => report.decision = pi.decision(alpha),
                TieStrategy::RankCount => {
                    let counts = OrderingScores::RankCount(rank_counts(&tableau, sample.grid()));
                    let p_n = counts.p_with_aux(&aux);
                    report.p_rank_count = Some(p_n);
                    report.p = Some(p_n);
                    report.decision = binary(reject(p_n));
                }
                TieStrategy::Randomize => {
                    let p = OrderingScores::ExtremeRank(ranks).p_with_aux(&aux);
                    report.p = Some(p);
                    report.decision = binary(reject(p));
                }
            }
        }
        OrderingKind::Mhrd | OrderingKind::Mbd => {
            let scores = OrderingScores::compute(sample, config.ordering, None)?;
            let p = scores.p_with_aux(&aux);
            report.p = Some(p);
            report.decision = binary(reject(p));
        }
        OrderingKind::Deviation { kind, scaling } => {
            let spec = deviation_spec(sample, kind, scaling, config.reference.as_deref())?;
            let u = deviation(sample, &spec)?;
            let p = OrderingScores::Deviation(u).p_with_aux(&aux);
            report.p = Some(p);
            report.decision = binary(reject(p));
            if kind == DeviationKind::Max {
                let (env, u_alpha) = scaled_mad_envelope(sample, &spec, alpha)?;
                report.envelope = Some(env);
                report.u_alpha = Some(u_alpha);
            }
        }
    }
    report.warnings = warnings;
    Ok(report)
}
