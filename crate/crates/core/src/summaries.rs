//! Summary-function estimators for point patterns.

use serde::{Deserialize, Serialize};

use crate::curves::Grid;
use crate::error::{Error, Result};
use crate::pointproc::{Point, PointPattern};

/// Default test lattice side for the empty-space function.
pub const DEFAULT_F_LATTICE: usize = 128;
const MIN_F_LATTICE: usize = 32;

/// Which summary curve to compute for each pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum SummarySpec {
    /// `L(r) − r` with translational edge correction.
    CentredL,
    F { lattice: usize },
    G,
    J { lattice: usize },
    /// Mark-weighted `L_γ(r) − r`, no edge correction.
    MarkWeightedCentredL,
}

impl SummarySpec {
    pub fn label(&self) -> &'static str {
        match self {
            SummarySpec::CentredL => "centred_l",
            SummarySpec::F { .. } => "f",
            SummarySpec::G => "g",
            SummarySpec::J { .. } => "j",
            SummarySpec::MarkWeightedCentredL => "markweighted_centred_l",
        }
    }

    /// Curve on `grid`. `J` is `NaN` where `F̂ = 1`; see [`trim_undefined`].
    pub fn evaluate(&self, pattern: &PointPattern, grid: &Grid) -> Result<Vec<f64>> {
        match *self {
            SummarySpec::CentredL => estimate_centred_l(pattern, grid),
            SummarySpec::F { lattice } => Ok(estimate_f_g_j(pattern, grid, lattice)?.f),
            SummarySpec::G => Ok(estimate_f_g_j(pattern, grid, MIN_F_LATTICE)?.g),
            SummarySpec::J { lattice } => {
                let fgj = estimate_f_g_j(pattern, grid, lattice)?;
                Ok(fgj.j.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect())
            }
            SummarySpec::MarkWeightedCentredL => estimate_markweighted_centred_l(pattern, grid),
        }
    }
}

fn need_two(pattern: &PointPattern) -> Result<()> {
    if pattern.len() < 2 {
        return Err(Error::InsufficientPoints { got: pattern.len(), need: 2 });
    }
    Ok(())
}

/// Add `weight` to the first grid bin at or beyond `d`.
#[inline]
fn bin(grid: &[f64], d: f64, weight: f64, acc: &mut [f64]) {
    let k = grid.partition_point(|&r| r < d);
    if k < acc.len() {
        acc[k] += weight;
    }
}

fn cumulate(acc: &mut [f64]) {
    for k in 1..acc.len() {
        acc[k] += acc[k - 1];
    }
}

fn centre(k: &[f64], grid: &[f64]) -> Vec<f64> {
    k.iter()
        .zip(grid)
        .map(|(&k, &r)| (k.max(0.0) / std::f64::consts::PI).sqrt() - r)
        .collect()
}

/// Translation-corrected `K̂` on the grid.
pub fn estimate_k(pattern: &PointPattern, grid: &Grid) -> Result<Vec<f64>> {
    need_two(pattern)?;
    let w = pattern.window();
    let (a, b) = (w.width(), w.height());
    let r = grid.values();
    let r_max = grid.last();
    let pts = pattern.points();
    let mut acc = vec![0.0; r.len()];
    for (i, p) in pts.iter().enumerate() {
        for q in &pts[i + 1..] {
            let (dx, dy) = ((p.x - q.x).abs(), (p.y - q.y).abs());
            if dx > r_max || dy > r_max {
                continue;
            }
            let d = dx.hypot(dy);
            if d <= r_max {
                bin(r, d, 2.0 / ((a - dx) * (b - dy)), &mut acc);
            }
        }
    }
    cumulate(&mut acc);
    let n = pts.len() as f64;
    let scale = w.area() * w.area() / (n * (n - 1.0));
    Ok(acc.into_iter().map(|v| v * scale).collect())
}

/// `L̂(r) − r` from the translation-corrected `K̂`.
pub fn estimate_centred_l(pattern: &PointPattern, grid: &Grid) -> Result<Vec<f64>> {
    Ok(centre(&estimate_k(pattern, grid)?, grid.values()))
}

/// Uncorrected empty-space, nearest-neighbour and `J` estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct FgjCurves {
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    /// `None` where `F̂ = 1`.
    pub j: Vec<Option<f64>>,
}

fn nearest(points: &[Point], q: &Point, skip: Option<usize>) -> f64 {
    let mut best = f64::INFINITY;
    for (i, p) in points.iter().enumerate() {
        if Some(i) != skip {
            best = best.min(p.dist2(q));
        }
    }
    best.sqrt()
}

fn ecdf_on(mut d: Vec<f64>, grid: &[f64]) -> Vec<f64> {
    d.sort_by(f64::total_cmp);
    let n = d.len() as f64;
    grid.iter().map(|&r| d.partition_point(|&v| v <= r) as f64 / n).collect()
}

/// `F̂` on a fixed `lattice × lattice` set of cell centres, `Ĝ` from
/// nearest-neighbour distances, and `Ĵ = (1 − Ĝ)/(1 − F̂)`.
pub fn estimate_f_g_j(pattern: &PointPattern, grid: &Grid, lattice: usize) -> Result<FgjCurves> {
    need_two(pattern)?;
    if lattice < MIN_F_LATTICE {
        return Err(Error::InvalidInput(format!(
            "F lattice of {lattice} per side; at least {MIN_F_LATTICE} required"
        )));
    }
    let pts = pattern.points();
    let w = pattern.window();
    let r = grid.values();

    let nnd = (0..pts.len()).map(|i| nearest(pts, &pts[i], Some(i))).collect();
    let g = ecdf_on(nnd, r);

    let (hx, hy) = (w.width() / lattice as f64, w.height() / lattice as f64);
    let mut empty = Vec::with_capacity(lattice * lattice);
    for iy in 0..lattice {
        for ix in 0..lattice {
            let q = Point::new(w.x0 + (ix as f64 + 0.5) * hx, w.y0 + (iy as f64 + 0.5) * hy);
            empty.push(nearest(pts, &q, None));
        }
    }
    let f = ecdf_on(empty, r);

    let j = f
        .iter()
        .zip(&g)
        .map(|(&f, &g)| (f < 1.0).then(|| (1.0 - g) / (1.0 - f)))
        .collect();
    Ok(FgjCurves { f, g, j })
}

/// Mark-weighted `L̂_γ(r) − r` with `γ(m, m′) = ½(m − m′)²`, normalized by
/// the mean of `γ` over ordered pairs.
pub fn estimate_markweighted_centred_l(pattern: &PointPattern, grid: &Grid) -> Result<Vec<f64>> {
    need_two(pattern)?;
    let marks = pattern.marks().ok_or(Error::Unmarked)?;
    let n = marks.len() as f64;
    let mean = marks.iter().sum::<f64>() / n;
    // mean of ½(m − m′)² over ordered pairs equals the sample variance
    let gamma_bar = marks.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if !(gamma_bar > 0.0) {
        return Err(Error::DegenerateMarks);
    }
    let r = grid.values();
    let r_max = grid.last();
    let pts = pattern.points();
    let mut acc = vec![0.0; r.len()];
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let d2 = pts[i].dist2(&pts[j]);
            if d2 <= r_max * r_max {
                bin(r, d2.sqrt(), (marks[i] - marks[j]).powi(2), &mut acc);
            }
        }
    }
    cumulate(&mut acc);
    let scale = pattern.window().area() / (n * (n - 1.0) * gamma_bar);
    let k: Vec<f64> = acc.into_iter().map(|v| v * scale).collect();
    Ok(centre(&k, r))
}

/// Drop trailing grid points where any curve is `NaN` (undefined `Ĵ`).
pub fn trim_undefined(grid: &Grid, curves: &mut [Vec<f64>]) -> Result<Grid> {
    let keep = curves
        .iter()
        .map(|c| c.iter().position(|v| v.is_nan()).unwrap_or(c.len()))
        .min()
        .unwrap_or(grid.len());
    if keep == 0 {
        return Err(Error::EmptyJ);
    }
    for c in curves.iter_mut() {
        c.truncate(keep);
    }
    if curves.iter().flatten().any(|v| v.is_nan()) {
        return Err(Error::InvalidInput("undefined summary values inside the grid".into()));
    }
    Grid::new(grid.values()[..keep].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointproc::{simulate_binomial, Window};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fixture() -> PointPattern {
        let pts = vec![
            Point::new(0.1, 0.2),
            Point::new(0.35, 0.25),
            Point::new(0.3, 0.6),
            Point::new(0.8, 0.7),
        ];
        PointPattern::new(pts, Window::unit_square()).unwrap()
    }

    /// Direct double sum over ordered pairs.
    fn k_oracle(p: &PointPattern, r: f64) -> f64 {
        let w = p.window();
        let n = p.len() as f64;
        let mut s = 0.0;
        for (i, a) in p.points().iter().enumerate() {
            for (j, b) in p.points().iter().enumerate() {
                if i != j && a.dist2(b).sqrt() <= r {
                    let wt = (w.width() - (a.x - b.x).abs()) * (w.height() - (a.y - b.y).abs()) / w.area();
                    s += 1.0 / wt;
                }
            }
        }
        w.area() / (n * (n - 1.0)) * s
    }

    #[test]
    fn centred_l_matches_direct_sum() {
        let p = fixture();
        let grid = Grid::new(vec![0.1, 0.3, 0.5, 0.8]).unwrap();
        let k = estimate_k(&p, &grid).unwrap();
        for (j, &r) in grid.values().iter().enumerate() {
            assert!((k[j] - k_oracle(&p, r)).abs() < 1e-12, "r = {r}");
        }
        assert!(k[2] > 0.0);
    }

    #[test]
    fn single_pair_jumps_at_distance() {
        let p = PointPattern::new(vec![Point::new(0.25, 0.25), Point::new(0.5, 0.25)], Window::unit_square()).unwrap();
        let grid = Grid::new(vec![0.1, 0.2499, 0.25, 0.7]).unwrap();
        let l = estimate_centred_l(&p, &grid).unwrap();
        assert_eq!(l[0], -0.1);
        assert_eq!(l[1], -0.2499);
        // |W|^2 / (n(n-1)) * 2 / ((1 - 0.25)(1 - 0))
        let k = 1.0 / 0.75;
        assert!((l[2] - ((k / std::f64::consts::PI).sqrt() - 0.25)).abs() < 1e-12);
        assert!((l[3] - ((k / std::f64::consts::PI).sqrt() - 0.7)).abs() < 1e-12);
    }

    #[test]
    fn too_few_points() {
        let p = PointPattern::new(vec![Point::new(0.5, 0.5)], Window::unit_square()).unwrap();
        let grid = Grid::new(vec![0.1]).unwrap();
        assert_eq!(estimate_centred_l(&p, &grid), Err(Error::InsufficientPoints { got: 1, need: 2 }));
    }

    #[test]
    fn fgj_limits() {
        let p = fixture();
        let grid = Grid::new(vec![0.0, 0.2, 2.0]).unwrap();
        let e = estimate_f_g_j(&p, &grid, 64).unwrap();
        assert_eq!((e.f[0], e.g[0], e.j[0]), (0.0, 0.0, Some(1.0)));
        assert_eq!((e.f[2], e.g[2], e.j[2]), (1.0, 1.0, None));
        assert!(estimate_f_g_j(&p, &grid, 8).is_err());
    }

    #[test]
    fn g_matches_brute_force() {
        let p = fixture();
        let grid = Grid::new(vec![0.2, 0.26, 0.4, 0.6]).unwrap();
        let e = estimate_f_g_j(&p, &grid, 32).unwrap();
        // nearest-neighbour distances of the fixture
        let nnd = [0.25f64.hypot(0.05), 0.25f64.hypot(0.05), 0.05f64.hypot(0.35), 0.5f64.hypot(0.1)];
        for (k, &r) in grid.values().iter().enumerate() {
            let oracle = nnd.iter().filter(|&&d| d <= r).count() as f64 / 4.0;
            assert_eq!(e.g[k], oracle);
        }
    }

    #[test]
    fn trimming_undefined_j() {
        let grid = Grid::new(vec![0.1, 0.2, 0.3]).unwrap();
        let mut curves = vec![vec![1.0, 1.1, f64::NAN], vec![0.9, f64::NAN, f64::NAN]];
        let g = trim_undefined(&grid, &mut curves).unwrap();
        assert_eq!(g.values(), &[0.1]);
        assert_eq!(curves, vec![vec![1.0], vec![0.9]]);
        let mut none = vec![vec![f64::NAN]];
        assert_eq!(trim_undefined(&Grid::new(vec![0.1]).unwrap(), &mut none), Err(Error::EmptyJ));
    }

    #[test]
    fn markweighted_matches_direct_sum() {
        let pts = vec![Point::new(0.1, 0.1), Point::new(0.4, 0.2), Point::new(0.3, 0.5)];
        let marks = vec![1.0, 3.0, 6.0];
        let p = PointPattern::new(pts.clone(), Window::unit_square()).unwrap().with_marks(marks.clone()).unwrap();
        let grid = Grid::new(vec![0.2, 0.35, 0.5]).unwrap();
        let l = estimate_markweighted_centred_l(&p, &grid).unwrap();
        let mut gbar = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    gbar += 0.5 * (marks[i] - marks[j]) * (marks[i] - marks[j]) / 6.0;
                }
            }
        }
        for (k, &r) in grid.values().iter().enumerate() {
            let mut s = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    if i != j && pts[i].dist2(&pts[j]).sqrt() <= r {
                        s += 0.5 * (marks[i] - marks[j]) * (marks[i] - marks[j]);
                    }
                }
            }
            let kg = s / (6.0 * gbar);
            let oracle = (kg / std::f64::consts::PI).sqrt() - r;
            assert!((l[k] - oracle).abs() < 1e-12);
        }
        let flat = p.clone().with_marks(vec![2.0; 3]).unwrap();
        assert_eq!(estimate_markweighted_centred_l(&flat, &grid), Err(Error::DegenerateMarks));
        let bare = PointPattern::new(pts, Window::unit_square()).unwrap();
        assert_eq!(estimate_markweighted_centred_l(&bare, &grid), Err(Error::Unmarked));
    }

    #[test]
    fn translation_invariance_and_monotonicity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = simulate_binomial(80, &Window::unit_square(), &mut rng);
        let marks: Vec<f64> = (0..80).map(|i| (i % 7) as f64).collect();
        let p = p.with_marks(marks).unwrap();
        let q = p.translated(3.25, -1.5);
        let grid = Grid::linspace(0.0, 0.2, 41).unwrap();
        for spec in [
            SummarySpec::CentredL,
            SummarySpec::F { lattice: 64 },
            SummarySpec::G,
            SummarySpec::J { lattice: 64 },
            SummarySpec::MarkWeightedCentredL,
        ] {
            let a = spec.evaluate(&p, &grid).unwrap();
            let b = spec.evaluate(&q, &grid).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-12 || (x.is_nan() && y.is_nan()), "{spec:?}");
            }
        }
        let e = estimate_f_g_j(&p, &grid, 64).unwrap();
        for v in [&e.f, &e.g] {
            assert!(v.windows(2).all(|w| w[0] <= w[1]));
            assert!(v.iter().all(|x| (0.0..=1.0).contains(x)));
        }
    }
}
