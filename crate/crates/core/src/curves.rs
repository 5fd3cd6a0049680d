//! Discretized curve bundles and pointwise ranks.
//!
//! A [`FunctionalSample`] holds `s + 1` curves on a shared [`Grid`]; row 0 is
//! the observed curve, rows `1..=s` the simulated ones. Ranks are stored
//! doubled ([`HalfRank`]) so that mid-ranks of tie groups stay exact.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used to decide whether a grid is equally spaced.
const UNIFORM_RTOL: f64 = 1e-9;

/// Strictly increasing distance arguments shared by all curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    values: Vec<f64>,
}

impl Grid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("grid is empty".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("grid value {v} is not finite")));
        }
        if let Some(w) = values.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(format!(
                "grid is not strictly increasing at {} -> {}",
                w[0], w[1]
            )));
        }
        Ok(Self { values })
    }

    /// `steps` equally spaced points from `lo` to `hi` inclusive.
    pub fn linspace(lo: f64, hi: f64, steps: usize) -> Result<Self> {
        match steps {
            0 => Err(Error::InvalidInput("grid needs at least one point".into())),
            1 => Self::new(vec![lo]),
            _ => {
                let h = (hi - lo) / (steps - 1) as f64;
                Self::new((0..steps).map(|i| lo + h * i as f64).collect())
            }
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn first(&self) -> f64 {
        self.values[0]
    }

    pub fn last(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn is_uniform(&self) -> bool {
        if self.values.len() < 3 {
            return true;
        }
        let h = (self.last() - self.first()) / (self.values.len() - 1) as f64;
        self.values
            .windows(2)
            .all(|w| ((w[1] - w[0]) - h).abs() <= UNIFORM_RTOL * h.abs())
    }

    /// Trapezoid quadrature weights. A single-point grid gets weight 1.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let n = self.values.len();
        if n == 1 {
            return vec![1.0];
        }
        let mut w = vec![0.0; n];
        for i in 0..n - 1 {
            let half = 0.5 * (self.values[i + 1] - self.values[i]);
            w[i] += half;
            w[i + 1] += half;
        }
        w
    }

    /// Weights for rank lengths and rank integrals: all ones on an equally
    /// spaced grid (plain counts), trapezoid weights divided by the mean
    /// step otherwise.
    pub fn rank_weights(&self) -> Vec<f64> {
        if self.is_uniform() {
            return vec![1.0; self.values.len()];
        }
        let mean_step = (self.last() - self.first()) / (self.values.len() - 1) as f64;
        self.trapezoid_weights()
            .into_iter()
            .map(|w| w / mean_step)
            .collect()
    }
}

/// `s + 1` curves evaluated on a shared grid; row 0 is the observed curve.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalSample {
    grid: Grid,
    data: Vec<f64>,
    n_curves: usize,
}

impl FunctionalSample {
    /// Build from rows; `rows[0]` is the observed curve.
    pub fn from_rows(grid: Grid, rows: Vec<Vec<f64>>) -> Result<Self> {
        let m = grid.len();
        let n_curves = rows.len();
        let mut data = Vec::with_capacity(n_curves * m);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != m {
                return Err(Error::InvalidInput(format!(
                    "curve {i} has {} values, grid has {m}",
                    row.len()
                )));
            }
            data.extend(row);
        }
        Self::from_flat(grid, data, n_curves)
    }

    /// Build from a row-major `n_curves × grid.len()` buffer.
    pub fn from_flat(grid: Grid, data: Vec<f64>, n_curves: usize) -> Result<Self> {
        if n_curves < 2 {
            return Err(Error::InvalidInput(format!(
                "need the observed curve and at least one simulation, got {n_curves} curves"
            )));
        }
        if data.len() != n_curves * grid.len() {
            return Err(Error::InvalidInput(format!(
                "buffer holds {} values, expected {}",
                data.len(),
                n_curves * grid.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            let m = grid.len();
            return Err(Error::InvalidInput(format!(
                "non-finite value in curve {} at r = {}",
                pos / m,
                grid.values()[pos % m]
            )));
        }
        Ok(Self {
            grid,
            data,
            n_curves,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Total number of curves, `s + 1`.
    pub fn n_curves(&self) -> usize {
        self.n_curves
    }

    /// Number of simulated curves, `s`.
    pub fn n_sim(&self) -> usize {
        self.n_curves - 1
    }

    pub fn n_points(&self) -> usize {
        self.grid.len()
    }

    pub fn curve(&self, i: usize) -> &[f64] {
        let m = self.grid.len();
        &self.data[i * m..(i + 1) * m]
    }

    pub fn observed(&self) -> &[f64] {
        self.curve(0)
    }

    pub fn curves(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.grid.len())
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.grid.len() + j]
    }

    /// Values of all curves at grid index `j`.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.curves().map(|c| c[j]).collect()
    }

    /// Same grid and curves, reordered so that `order[i]` becomes row `i`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.n_curves {
            return Err(Error::InvalidInput("permutation length mismatch".into()));
        }
        let mut data = Vec::with_capacity(self.data.len());
        for &i in order {
            data.extend_from_slice(self.curve(i));
        }
        Self::from_flat(self.grid.clone(), data, self.n_curves)
    }
}

/// A rank stored as twice its value, so mid-ranks like 2.5 are exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HalfRank(u32);

impl HalfRank {
    pub const fn from_doubled(doubled: u32) -> Self {
        HalfRank(doubled)
    }

    pub const fn from_int(k: u32) -> Self {
        HalfRank(2 * k)
    }

    pub const fn doubled(self) -> u32 {
        self.0
    }

    pub fn value(self) -> f64 {
        f64::from(self.0) / 2.0
    }

    /// Compare against an integer rank.
    pub fn cmp_int(self, k: usize) -> Ordering {
        u64::from(self.0).cmp(&(2 * k as u64))
    }
}

impl fmt::Display for HalfRank {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 % 2 == 0 {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}.5", self.0 / 2)
        }
    }
}

/// How pointwise ties are ranked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TiePolicy {
    #[default]
    MidRank,
    MaxRank,
}

/// Pointwise one-sided ranks R↑, R↓ for every curve and grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct RankTableau {
    up: Vec<HalfRank>,
    down: Vec<HalfRank>,
    n_curves: usize,
    n_points: usize,
    tie_policy: TiePolicy,
}

impl RankTableau {
    pub fn n_curves(&self) -> usize {
        self.n_curves
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn tie_policy(&self) -> TiePolicy {
        self.tie_policy
    }

    pub fn up(&self, i: usize, j: usize) -> HalfRank {
        self.up[i * self.n_points + j]
    }

    pub fn down(&self, i: usize, j: usize) -> HalfRank {
        self.down[i * self.n_points + j]
    }

    pub fn up_row(&self, i: usize) -> &[HalfRank] {
        &self.up[i * self.n_points..(i + 1) * self.n_points]
    }

    pub fn down_row(&self, i: usize) -> &[HalfRank] {
        &self.down[i * self.n_points..(i + 1) * self.n_points]
    }

    /// Two-sided rank R*ᵢ(r) = min(R↑ᵢ(r), R↓ᵢ(r)).
    pub fn two_sided(&self, i: usize, j: usize) -> HalfRank {
        self.up(i, j).min(self.down(i, j))
    }

    pub fn two_sided_row(&self, i: usize) -> Vec<HalfRank> {
        self.up_row(i)
            .iter()
            .zip(self.down_row(i))
            .map(|(u, d)| *u.min(d))
            .collect()
    }

    /// Full R* matrix, one row per curve.
    pub fn two_sided_ranks(&self) -> Vec<Vec<HalfRank>> {
        (0..self.n_curves).map(|i| self.two_sided_row(i)).collect()
    }
}

/// Rank every column of the sample, smallest value first for R↑ and largest
/// first for R↓. The same tie policy applies to both directions.
pub fn pointwise_ranks(sample: &FunctionalSample, tie_policy: TiePolicy) -> RankTableau {
    let n = sample.n_curves();
    let m = sample.n_points();
    let mut up = vec![HalfRank(0); n * m];
    let mut down = vec![HalfRank(0); n * m];
    let mut order: Vec<usize> = (0..n).collect();
    let total = 2 * (n as u32 + 1);

    for j in 0..m {
        order.sort_unstable_by(|&a, &b| sample.value(a, j).total_cmp(&sample.value(b, j)));
        let mut start = 0;
        while start < n {
            let v = sample.value(order[start], j);
            let mut end = start + 1;
            while end < n && sample.value(order[end], j) == v {
                end += 1;
            }
            // sorted positions start+1 ..= end (1-based)
            let (lo, hi) = (start as u32 + 1, end as u32);
            let (r_up, r_down) = match tie_policy {
                TiePolicy::MidRank => (lo + hi, total - (lo + hi)),
                TiePolicy::MaxRank => (2 * hi, 2 * (n as u32 + 1 - lo)),
            };
            for &i in &order[start..end] {
                up[i * m + j] = HalfRank(r_up);
                down[i * m + j] = HalfRank(r_down);
            }
            start = end;
        }
    }

    RankTableau {
        up,
        down,
        n_curves: n,
        n_points: m,
        tie_policy,
    }
}

/// R* as a matrix; see [`RankTableau::two_sided`].
pub fn two_sided_ranks(tableau: &RankTableau) -> Vec<Vec<HalfRank>> {
    tableau.two_sided_ranks()
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// Five curves on three grid points with hand-checkable ranks.
    pub fn five_curves() -> FunctionalSample {
        FunctionalSample::from_rows(
            Grid::new(vec![1.0, 2.0, 3.0]).unwrap(),
            vec![
                vec![1.0, 5.0, 3.0],
                vec![2.0, 4.0, 4.0],
                vec![3.0, 3.0, 5.0],
                vec![4.0, 2.0, 1.0],
                vec![5.0, 1.0, 2.0],
            ],
        )
        .unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::five_curves;
    use super::*;
    use proptest::prelude::*;

    fn ints(row: &[HalfRank]) -> Vec<f64> {
        row.iter().map(|r| r.value()).collect()
    }

    /// Brute force: count strictly smaller / equal values, mid-rank = less + (eq + 1) / 2.
    fn oracle_up(col: &[f64], i: usize) -> f64 {
        let less = col.iter().filter(|&&v| v < col[i]).count() as f64;
        let eq = col.iter().filter(|&&v| v == col[i]).count() as f64;
        less + (eq + 1.0) / 2.0
    }

    #[test]
    fn distinct_sorted_column() {
        let s = five_curves();
        let t = pointwise_ranks(&s, TiePolicy::MidRank);
        let up: Vec<f64> = (0..5).map(|i| t.up(i, 0).value()).collect();
        let down: Vec<f64> = (0..5).map(|i| t.down(i, 0).value()).collect();
        assert_eq!(up, vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(down, vec![5.0, 4.0, 3.0, 2.0, 1.0]);
    }

    #[test]
    fn full_tie_mid_rank() {
        let g = Grid::new(vec![0.5]).unwrap();
        let s = FunctionalSample::from_rows(g, vec![vec![7.0]; 5]).unwrap();
        let t = pointwise_ranks(&s, TiePolicy::MidRank);
        for i in 0..5 {
            assert_eq!(t.up(i, 0), HalfRank::from_int(3));
            assert_eq!(t.down(i, 0), HalfRank::from_int(3));
            assert_eq!(t.two_sided(i, 0), HalfRank::from_int(3));
        }
        let t = pointwise_ranks(&s, TiePolicy::MaxRank);
        assert_eq!(t.up(0, 0), HalfRank::from_int(5));
        assert_eq!(t.down(0, 0), HalfRank::from_int(5));
    }

    #[test]
    fn five_curve_two_sided() {
        let t = pointwise_ranks(&five_curves(), TiePolicy::MidRank);
        let expected = [
            [1.0, 1.0, 3.0],
            [2.0, 2.0, 2.0],
            [3.0, 3.0, 1.0],
            [2.0, 2.0, 1.0],
            [1.0, 1.0, 2.0],
        ];
        let rstar = two_sided_ranks(&t);
        for (row, exp) in rstar.iter().zip(expected) {
            assert_eq!(ints(row), exp.to_vec());
        }
        // brute-force oracle on the same sample
        let s = five_curves();
        for j in 0..3 {
            let col = s.column(j);
            for i in 0..5 {
                let u = oracle_up(&col, i);
                let d = 6.0 - u;
                assert_eq!(t.two_sided(i, j).value(), u.min(d));
            }
        }
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::new(vec![]).is_err());
        assert!(Grid::new(vec![1.0, 1.0]).is_err());
        assert!(Grid::new(vec![0.0, f64::NAN]).is_err());
        assert!(Grid::linspace(0.0, 1.0, 11).unwrap().is_uniform());
        assert!(!Grid::new(vec![0.0, 1.0, 3.0]).unwrap().is_uniform());
        let w = Grid::new(vec![0.0, 1.0, 2.0]).unwrap().trapezoid_weights();
        assert_eq!(w, vec![0.5, 1.0, 0.5]);
    }

    #[test]
    fn sample_rejects_bad_shapes() {
        let g = Grid::new(vec![0.0, 1.0]).unwrap();
        assert!(FunctionalSample::from_rows(g.clone(), vec![vec![1.0, 2.0]]).is_err());
        assert!(FunctionalSample::from_rows(g.clone(), vec![vec![1.0], vec![2.0, 3.0]]).is_err());
        assert!(
            FunctionalSample::from_rows(g, vec![vec![1.0, f64::INFINITY], vec![2.0, 3.0]])
                .is_err()
        );
    }

    fn sample_strategy() -> impl Strategy<Value = FunctionalSample> {
        (2usize..9, 1usize..6).prop_flat_map(|(n, m)| {
            proptest::collection::vec(-5i32..5, n * m).prop_map(move |v| {
                let data = v.into_iter().map(f64::from).collect();
                FunctionalSample::from_flat(Grid::linspace(0.0, 1.0, m).unwrap(), data, n)
                    .unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn mid_rank_sums_and_bounds(s in sample_strategy()) {
            let t = pointwise_ranks(&s, TiePolicy::MidRank);
            let n = s.n_curves() as u32;
            for j in 0..s.n_points() {
                let sum: u32 = (0..s.n_curves()).map(|i| t.up(i, j).doubled()).sum();
                prop_assert_eq!(sum, n * (n + 1));
                let col = s.column(j);
                for i in 0..s.n_curves() {
                    prop_assert_eq!(t.up(i, j).value(), oracle_up(&col, i));
                    prop_assert_eq!(t.up(i, j).doubled() + t.down(i, j).doubled(), 2 * (n + 1));
                    prop_assert!(t.two_sided(i, j).doubled() <= n + 1);
                }
            }
        }

        #[test]
        fn invariant_under_monotone_transform(s in sample_strategy()) {
            let t = pointwise_ranks(&s, TiePolicy::MidRank);
            let rows: Vec<Vec<f64>> = s.curves().map(|c| c.iter().map(|v| (v / 3.0).exp() * 2.0 - 1.0).collect()).collect();
            let s2 = FunctionalSample::from_rows(s.grid().clone(), rows).unwrap();
            prop_assert_eq!(pointwise_ranks(&s2, TiePolicy::MidRank), t);
        }

        #[test]
        fn tie_free_columns_are_permutations(vals in proptest::collection::hash_set(-1000i32..1000, 2..12)) {
            let v: Vec<f64> = vals.into_iter().map(f64::from).collect();
            let n = v.len();
            let s = FunctionalSample::from_flat(Grid::new(vec![0.0]).unwrap(), v.clone(), n).unwrap();
            let t = pointwise_ranks(&s, TiePolicy::MidRank);
            let mut ranks: Vec<u32> = (0..n).map(|i| t.up(i, 0).doubled() / 2).collect();
            for a in 0..n {
                for b in 0..n {
                    if v[a] < v[b] {
                        prop_assert!(ranks[a] < ranks[b]);
                    }
                }
            }
            ranks.sort_unstable();
            prop_assert_eq!(ranks, (1..=n as u32).collect::<Vec<_>>());
        }
    }
}
