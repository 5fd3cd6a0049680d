//! Global envelopes: k-th rank envelopes and scaled MAD envelopes, the
//! critical rank, p-intervals, and classification of the observed curve.

use serde::{Deserialize, Serialize};

use crate::curves::{FunctionalSample, Grid, HalfRank};
use crate::error::{Error, Result};
use crate::measures::{deviation, DeviationKind, DeviationSpec, ExtremeRanks, Scaling};

/// How an envelope was built.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvelopeKind {
    Rank { k: usize },
    ScaledMad { u: f64, scaling: Scaling },
    ClassicalMad { u: f64 },
}

/// Band `lower <= upper` on the grid of the source sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub grid: Grid,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Curve drawn inside the band (expectation when known).
    pub central: Option<Vec<f64>>,
    pub kind: EnvelopeKind,
    /// Per-point rounding slack used when classifying against bounds that
    /// were computed arithmetically; zero for rank envelopes.
    slack: Vec<f64>,
}

impl Envelope {
    pub fn with_central(mut self, central: Vec<f64>) -> Result<Self> {
        if central.len() != self.grid.len() {
            return Err(Error::GridMismatch {
                expected: self.grid.len(),
                got: central.len(),
            });
        }
        self.central = Some(central);
        Ok(self)
    }

    /// True if `self` contains `other` at every grid point.
    pub fn contains(&self, other: &Envelope) -> bool {
        self.lower.iter().zip(&other.lower).all(|(a, b)| a <= b)
            && self.upper.iter().zip(&other.upper).all(|(a, b)| a >= b)
    }
}

/// Position of the observed curve relative to an envelope.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeDecision {
    /// Strictly outside somewhere.
    Reject,
    /// Strictly inside everywhere.
    NoEvidence,
    /// Touches a bound but never leaves.
    Boundary,
}

/// Whether touching a bound counts as leaving the band.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strictness {
    /// Three-way: strictly outside, touching, strictly inside.
    Open,
    /// Closed band exit (`<=`/`>=`) rejects; never reports `Boundary`.
    Closed,
}

/// `alpha * n`, snapped to the nearest integer when within rounding distance.
pub fn alpha_count(alpha: f64, n: usize) -> f64 {
    let x = alpha * n as f64;
    let r = x.round();
    if (x - r).abs() <= 1e-9 * n.max(1) as f64 {
        r
    } else {
        x
    }
}

pub fn alpha_count_is_integer(alpha: f64, n: usize) -> bool {
    let x = alpha_count(alpha, n);
    x == x.round()
}

fn pointwise_mean(sample: &FunctionalSample) -> Vec<f64> {
    let s = sample.n_sim() as f64;
    (0..sample.n_points())
        .map(|j| sample.curves().skip(1).map(|c| c[j]).sum::<f64>() / s)
        .collect()
}

/// Largest `k` for which the k-th envelope is defined: `⌊(s+2)/2⌋`.
pub fn max_envelope_rank(n_curves: usize) -> usize {
    (n_curves + 1) / 2
}

/// k-th smallest and k-th largest value at each grid point, over all curves
/// including the observed one. The central curve defaults to the pointwise
/// mean of the simulations.
pub fn kth_envelope(sample: &FunctionalSample, k: usize) -> Result<Envelope> {
    let n = sample.n_curves();
    let max = max_envelope_rank(n);
    if k == 0 || k > max {
        return Err(Error::RankOutOfRange { k, max });
    }
    let m = sample.n_points();
    let mut lower = Vec::with_capacity(m);
    let mut upper = Vec::with_capacity(m);
    let mut col = vec![0.0; n];
    for j in 0..m {
        for (dst, c) in col.iter_mut().zip(sample.curves()) {
            *dst = c[j];
        }
        col.sort_unstable_by(f64::total_cmp);
        lower.push(col[k - 1]);
        upper.push(col[n - k]);
    }
    Ok(Envelope {
        grid: sample.grid().clone(),
        lower,
        upper,
        central: Some(pointwise_mean(sample)),
        kind: EnvelopeKind::Rank { k },
        slack: vec![0.0; m],
    })
}

/// Number of extreme ranks strictly below the integer `k`.
fn count_below(sorted: &[HalfRank], k: usize) -> usize {
    sorted.partition_point(|r| r.cmp_int(k).is_lt())
}

/// Critical rank: the largest `k` with `#{Rᵢ < k} <= alpha (s+1)`.
pub fn critical_rank(ranks: &ExtremeRanks, alpha: f64) -> usize {
    critical_rank_with_budget(ranks.as_slice(), alpha_count(alpha, ranks.len()))
}

/// Largest `k` with `#{rᵢ < k} <= budget`; always at least 1.
pub fn critical_rank_with_budget(ranks: &[HalfRank], budget: f64) -> usize {
    let mut sorted = ranks.to_vec();
    sorted.sort_unstable();
    let mut k = 1;
    // the count only grows, and reaches the full sample once k exceeds max R
    while (count_below(&sorted, k + 1) as f64) <= budget && count_below(&sorted, k) < sorted.len() {
        k += 1;
    }
    k
}

/// Liberal and conservative Monte Carlo p-values from extreme ranks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PInterval {
    /// `#{Rᵢ < R₁}`
    pub below: usize,
    /// `#{Rᵢ <= R₁}`
    pub at_or_below: usize,
    /// `s + 1`
    pub n: usize,
}

impl PInterval {
    pub fn lower(&self) -> f64 {
        self.below as f64 / self.n as f64
    }

    pub fn upper(&self) -> f64 {
        self.at_or_below as f64 / self.n as f64
    }

    pub fn width(&self) -> f64 {
        (self.at_or_below - self.below) as f64 / self.n as f64
    }

    /// `p+ <= alpha` rejects, `p- > alpha` gives no evidence, else boundary.
    pub fn decision(&self, alpha: f64) -> EnvelopeDecision {
        let budget = alpha_count(alpha, self.n);
        if self.at_or_below as f64 <= budget {
            EnvelopeDecision::Reject
        } else if self.below as f64 > budget {
            EnvelopeDecision::NoEvidence
        } else {
            EnvelopeDecision::Boundary
        }
    }
}

pub fn p_interval(ranks: &ExtremeRanks) -> PInterval {
    let r1 = ranks.observed();
    let r = ranks.as_slice();
    PInterval {
        below: r.iter().filter(|&&x| x < r1).count(),
        at_or_below: r.iter().filter(|&&x| x <= r1).count(),
        n: r.len(),
    }
}

/// Classify the observed curve against an envelope.
pub fn classify(observed: &[f64], envelope: &Envelope, strictness: Strictness) -> Result<EnvelopeDecision> {
    if observed.len() != envelope.grid.len() {
        return Err(Error::GridMismatch {
            expected: envelope.grid.len(),
            got: observed.len(),
        });
    }
    let mut touches = false;
    for (j, &t) in observed.iter().enumerate() {
        let (lo, hi, eps) = (envelope.lower[j], envelope.upper[j], envelope.slack[j]);
        if t < lo - eps || t > hi + eps {
            return Ok(EnvelopeDecision::Reject);
        }
        if t <= lo + eps || t >= hi - eps {
            touches = true;
        }
    }
    Ok(match (touches, strictness) {
        (false, _) => EnvelopeDecision::NoEvidence,
        (true, Strictness::Open) => EnvelopeDecision::Boundary,
        (true, Strictness::Closed) => EnvelopeDecision::Reject,
    })
}

/// The `rank`-th largest value (1-based).
pub fn kth_largest(values: &[f64], rank: usize) -> Result<f64> {
    if rank == 0 || rank > values.len() {
        return Err(Error::RankOutOfRange {
            k: rank,
            max: values.len(),
        });
    }
    let mut v = values.to_vec();
    v.sort_unstable_by(|a, b| b.total_cmp(a));
    Ok(v[rank - 1])
}

/// Band `T₀ - u·lo_scale`, `T₀ + u·hi_scale` for a maximum-deviation spec.
///
/// The printed form of these bounds carries a minus sign on both sides; the
/// upper bound must add, as the exit condition `T₁ >= T₀ + u·scale` shows.
pub fn mad_envelope(spec: &DeviationSpec, grid: &Grid, u: f64) -> Result<Envelope> {
    if spec.kind != DeviationKind::Max {
        return Err(Error::InvalidInput(
            "only maximum deviations have an envelope".into(),
        ));
    }
    if spec.reference.len() != grid.len() {
        return Err(Error::GridMismatch {
            expected: grid.len(),
            got: spec.reference.len(),
        });
    }
    let (lo, hi) = spec.scale_factors(grid)?;
    let t0 = &spec.reference;
    let lower: Vec<f64> = t0.iter().zip(&lo).map(|(t, s)| t - u * s).collect();
    let upper: Vec<f64> = t0.iter().zip(&hi).map(|(t, s)| t + u * s).collect();
    let slack = (0..grid.len())
        .map(|j| 8.0 * f64::EPSILON * (t0[j].abs() + u.abs() * lo[j].max(hi[j])))
        .collect();
    let kind = match spec.scaling() {
        Scaling::None => EnvelopeKind::ClassicalMad { u },
        scaling => EnvelopeKind::ScaledMad { u, scaling },
    };
    Ok(Envelope {
        grid: grid.clone(),
        lower,
        upper,
        central: Some(t0.clone()),
        kind,
        slack,
    })
}

/// Scaled MAD envelope at level `alpha`: `u_α` is the `α(s+1)`-th largest
/// deviation, observed curve included. Requires `α(s+1)` to be an integer.
pub fn scaled_mad_envelope(sample: &FunctionalSample, spec: &DeviationSpec, alpha: f64) -> Result<(Envelope, f64)> {
    let n = sample.n_curves();
    let count = alpha_count(alpha, n);
    if count != count.round() || count < 1.0 {
        return Err(Error::NonIntegerAlphaCount(alpha * n as f64));
    }
    let u = deviation(sample, spec)?;
    let u_alpha = kth_largest(&u, count as usize)?;
    Ok((mad_envelope(spec, sample.grid(), u_alpha)?, u_alpha))
}
