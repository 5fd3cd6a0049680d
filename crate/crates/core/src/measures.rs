//! Orderings of curves: extreme rank, rank counts, MHRD, MBD and deviation
//! measures.
//!
//! Every ordering here says which curves are "more extreme". Conventions differ
//! per measure and are spelled out on each function; [`crate::montecarlo`]
//! turns them into comparators.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::curves::{FunctionalSample, Grid, HalfRank, RankTableau};
use crate::error::{Error, Result};

/// Per-curve minimum of the two-sided pointwise rank. Smaller is more extreme.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtremeRanks(pub Vec<HalfRank>);

impl ExtremeRanks {
    pub fn as_slice(&self) -> &[HalfRank] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn observed(&self) -> HalfRank {
        self.0[0]
    }

    pub fn values(&self) -> Vec<f64> {
        self.0.iter().map(|r| r.value()).collect()
    }
}

pub fn extreme_rank(tableau: &RankTableau) -> ExtremeRanks {
    let ranks = (0..tableau.n_curves())
        .map(|i| {
            tableau
                .up_row(i)
                .iter()
                .zip(tableau.down_row(i))
                .map(|(u, d)| *u.min(d))
                .min()
                .expect("tableau has at least one grid point")
        })
        .collect();
    ExtremeRanks(ranks)
}

/// Sparse rank-length vector: (two-sided rank, accumulated grid weight),
/// ascending in rank, zero entries omitted.
///
/// On an equally spaced grid the weights are plain counts.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RankCountVector {
    entries: Vec<(HalfRank, f64)>,
}

impl RankCountVector {
    pub fn entries(&self) -> &[(HalfRank, f64)] {
        &self.entries
    }

    /// Weight accumulated at rank `k`.
    pub fn get(&self, k: HalfRank) -> f64 {
        self.entries
            .iter()
            .find(|(r, _)| *r == k)
            .map_or(0.0, |(_, w)| *w)
    }

    /// Dense vector over integer ranks `1..=k_max`.
    pub fn dense(&self, k_max: u32) -> Vec<f64> {
        (1..=k_max).map(|k| self.get(HalfRank::from_int(k))).collect()
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|(_, w)| w).sum()
    }

    /// Reverse lexical comparison: `Less` means `self` is more extreme, i.e.
    /// at the first rank where the weights differ `self` has more.
    pub fn cmp_extremeness(&self, other: &Self) -> Ordering {
        let (mut a, mut b) = (self.entries.iter().peekable(), other.entries.iter().peekable());
        loop {
            match (a.peek(), b.peek()) {
                (None, None) => return Ordering::Equal,
                // a has weight at a rank where b has none left
                (Some(_), None) => return Ordering::Less,
                (None, Some(_)) => return Ordering::Greater,
                (Some(&&(ra, wa)), Some(&&(rb, wb))) => match ra.cmp(&rb) {
                    Ordering::Less => return Ordering::Less,
                    Ordering::Greater => return Ordering::Greater,
                    Ordering::Equal => {
                        match wb.partial_cmp(&wa).expect("finite weights") {
                            Ordering::Equal => {
                                a.next();
                                b.next();
                            }
                            o => return o,
                        }
                    }
                },
            }
        }
    }
}

/// Rank counts (rank lengths on non-uniform grids) for every curve.
pub fn rank_counts(tableau: &RankTableau, grid: &Grid) -> Vec<RankCountVector> {
    let weights = grid.rank_weights();
    (0..tableau.n_curves())
        .map(|i| {
            let mut pairs: Vec<(HalfRank, f64)> = tableau
                .two_sided_row(i)
                .into_iter()
                .zip(weights.iter().copied())
                .collect();
            // stable sort keeps grid order within a rank, fixing the summation order
            pairs.sort_by_key(|p| p.0);
            let mut entries: Vec<(HalfRank, f64)> = Vec::new();
            for (r, w) in pairs {
                match entries.last_mut() {
                    Some((last, acc)) if *last == r => *acc += w,
                    _ => entries.push((r, w)),
                }
            }
            RankCountVector { entries }
        })
        .collect()
}

/// Modified half-region depth: min of the weighted sums of up- and
/// down-ranks. Smaller is more extreme. Build the tableau with
/// [`crate::curves::TiePolicy::MaxRank`] for the classical tie treatment.
pub fn mhrd(tableau: &RankTableau, grid: &Grid) -> Vec<f64> {
    let weights = grid.rank_weights();
    (0..tableau.n_curves())
        .map(|i| {
            let up: f64 = tableau
                .up_row(i)
                .iter()
                .zip(&weights)
                .map(|(r, w)| r.value() * w)
                .sum();
            let down: f64 = tableau
                .down_row(i)
                .iter()
                .zip(&weights)
                .map(|(r, w)| r.value() * w)
                .sum();
            up.min(down)
        })
        .collect()
}

/// Modified band depth with bands formed by pairs of curves. Smaller is more
/// extreme.
pub fn mbd(sample: &FunctionalSample) -> Result<Vec<f64>> {
    let n = sample.n_curves();
    if n < 3 {
        return Err(Error::InvalidInput(format!(
            "band depth needs at least 3 curves, got {n}"
        )));
    }
    let pairs = |k: usize| (k * k.saturating_sub(1) / 2) as f64;
    let total_pairs = pairs(n);
    let m = sample.n_points();
    let mut acc = vec![0.0; n];
    let mut sorted = vec![0.0; n];
    for j in 0..m {
        for (dst, c) in sorted.iter_mut().zip(sample.curves()) {
            *dst = c[j];
        }
        sorted.sort_unstable_by(f64::total_cmp);
        for (i, c) in sample.curves().enumerate() {
            let v = c[j];
            let below = sorted.partition_point(|&x| x < v);
            let above = n - sorted.partition_point(|&x| x <= v);
            acc[i] += total_pairs - pairs(below) - pairs(above);
        }
    }
    Ok(acc.into_iter().map(|a| a / (total_pairs * m as f64)).collect())
}

/// Maximum or integral deviation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DeviationKind {
    Max,
    Integral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scaling {
    None,
    Studentized,
    DirectionalQuantile,
}

/// Scale curves used by a scaled deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ScaleCurves {
    None,
    Variance(Vec<f64>),
    Quantiles { lower: Vec<f64>, upper: Vec<f64> },
}

/// Deviation measure together with its reference and scale curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationSpec {
    pub kind: DeviationKind,
    pub reference: Vec<f64>,
    pub scale: ScaleCurves,
}

/// Lower and upper pointwise quantile levels for directional scaling.
pub const QDIR_LEVELS: (f64, f64) = (0.025, 0.975);

impl DeviationSpec {
    pub fn new(kind: DeviationKind, reference: Vec<f64>, scale: ScaleCurves) -> Result<Self> {
        let m = reference.len();
        let bad_len = |v: &Vec<f64>| v.len() != m;
        match &scale {
            ScaleCurves::None => {}
            ScaleCurves::Variance(var) => {
                if bad_len(var) {
                    return Err(Error::InvalidInput("variance curve length mismatch".into()));
                }
                if var.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(Error::InvalidInput("variance must be finite and >= 0".into()));
                }
            }
            ScaleCurves::Quantiles { lower, upper } => {
                if bad_len(lower) || bad_len(upper) {
                    return Err(Error::InvalidInput("quantile curve length mismatch".into()));
                }
                if lower.iter().zip(upper).any(|(l, u)| !(l.is_finite() && u.is_finite() && l <= u)) {
                    return Err(Error::InvalidInput(
                        "quantile curves must be finite with lower <= upper".into(),
                    ));
                }
            }
        }
        if reference.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("reference curve must be finite".into()));
        }
        Ok(Self {
            kind,
            reference,
            scale,
        })
    }

    /// Estimate the reference and scale curves from the simulated rows
    /// (rows `1..=s`) only: mean, unbiased variance, and type-7 quantiles at
    /// [`QDIR_LEVELS`].
    pub fn estimate(sample: &FunctionalSample, kind: DeviationKind, scaling: Scaling) -> Result<Self> {
        let sims: Vec<&[f64]> = sample.curves().skip(1).collect();
        let s = sims.len();
        let m = sample.n_points();
        if scaling == Scaling::Studentized && s < 2 {
            return Err(Error::InvalidInput("variance needs at least 2 simulations".into()));
        }
        let mean: Vec<f64> = (0..m)
            .map(|j| sims.iter().map(|c| c[j]).sum::<f64>() / s as f64)
            .collect();
        let scale = match scaling {
            Scaling::None => ScaleCurves::None,
            Scaling::Studentized => ScaleCurves::Variance(
                (0..m)
                    .map(|j| {
                        sims.iter().map(|c| (c[j] - mean[j]).powi(2)).sum::<f64>() / (s - 1) as f64
                    })
                    .collect(),
            ),
            Scaling::DirectionalQuantile => {
                let mut lower = Vec::with_capacity(m);
                let mut upper = Vec::with_capacity(m);
                let mut col = vec![0.0; s];
                for j in 0..m {
                    for (dst, c) in col.iter_mut().zip(&sims) {
                        *dst = c[j];
                    }
                    col.sort_unstable_by(f64::total_cmp);
                    lower.push(quantile_sorted(&col, QDIR_LEVELS.0));
                    upper.push(quantile_sorted(&col, QDIR_LEVELS.1));
                }
                ScaleCurves::Quantiles { lower, upper }
            }
        };
        Self::new(kind, mean, scale)
    }

    /// Replace the estimated reference by a known expectation.
    pub fn with_reference(mut self, reference: Vec<f64>) -> Result<Self> {
        if reference.len() != self.reference.len() {
            return Err(Error::GridMismatch {
                expected: self.reference.len(),
                got: reference.len(),
            });
        }
        self.reference = reference;
        Self::new(self.kind, self.reference, self.scale)
    }

    pub fn scaling(&self) -> Scaling {
        match self.scale {
            ScaleCurves::None => Scaling::None,
            ScaleCurves::Variance(_) => Scaling::Studentized,
            ScaleCurves::Quantiles { .. } => Scaling::DirectionalQuantile,
        }
    }

    /// Lower and upper scale factors at each grid point: residuals below the
    /// reference are divided by the first, above by the second.
    pub fn scale_factors(&self, grid: &Grid) -> Result<(Vec<f64>, Vec<f64>)> {
        let m = self.reference.len();
        let r = grid.values();
        match &self.scale {
            ScaleCurves::None => Ok((vec![1.0; m], vec![1.0; m])),
            ScaleCurves::Variance(var) => {
                let sd: Vec<f64> = var.iter().map(|v| v.sqrt()).collect();
                if let Some(j) = sd.iter().position(|&v| v == 0.0) {
                    return Err(Error::DegenerateScale { r: r[j], what: "variance" });
                }
                Ok((sd.clone(), sd))
            }
            ScaleCurves::Quantiles { lower, upper } => {
                let lo: Vec<f64> = lower.iter().zip(&self.reference).map(|(l, t)| (l - t).abs()).collect();
                let hi: Vec<f64> = upper.iter().zip(&self.reference).map(|(u, t)| (u - t).abs()).collect();
                if let Some(j) = lo.iter().position(|&v| v == 0.0) {
                    return Err(Error::DegenerateScale { r: r[j], what: "lower quantile distance" });
                }
                if let Some(j) = hi.iter().position(|&v| v == 0.0) {
                    return Err(Error::DegenerateScale { r: r[j], what: "upper quantile distance" });
                }
                Ok((lo, hi))
            }
        }
    }
}

/// Type-7 (linear interpolation) quantile of an ascending slice.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Nonnegative scaled residual of one value; directional scaling picks the
/// lower or upper factor by the sign of the residual.
#[inline]
fn scaled_residual(t: f64, t0: f64, lo: f64, hi: f64) -> f64 {
    if t >= t0 {
        (t - t0) / hi
    } else {
        (t0 - t) / lo
    }
}

/// Deviation u for every curve. Larger is more extreme.
///
/// `Max` takes the largest scaled residual over the grid; `Integral` the
/// trapezoid integral of its square.
pub fn deviation(sample: &FunctionalSample, spec: &DeviationSpec) -> Result<Vec<f64>> {
    let m = sample.n_points();
    if spec.reference.len() != m {
        return Err(Error::GridMismatch {
            expected: m,
            got: spec.reference.len(),
        });
    }
    let (lo, hi) = spec.scale_factors(sample.grid())?;
    let t0 = &spec.reference;
    let weights = match spec.kind {
        DeviationKind::Max => Vec::new(),
        DeviationKind::Integral => sample.grid().trapezoid_weights(),
    };
    Ok(sample
        .curves()
        .map(|c| {
            let residuals = (0..m).map(|j| scaled_residual(c[j], t0[j], lo[j], hi[j]));
            match spec.kind {
                DeviationKind::Max => residuals.fold(f64::NEG_INFINITY, f64::max),
                DeviationKind::Integral => residuals.zip(&weights).map(|(e, w)| w * e * e).sum(),
            }
        })
        .collect())
}
