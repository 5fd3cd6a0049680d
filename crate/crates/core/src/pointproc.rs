//! Planar point patterns and null-model simulators.
//!
//! Gibbs and cluster models are simulated on an enlarged region and clipped
//! to the observation window. Strauss processes use a birth–death
//! Metropolis–Hastings chain targeting the unnormalized density
//! `∏ β(xᵢ) · γ^{s_R(x)}`, where `s_R` counts pairs closer than `R`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn dist2(&self, other: &Point) -> f64 {
        let (dx, dy) = (self.x - other.x, self.y - other.y);
        dx * dx + dy * dy
    }
}

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Window {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Result<Self> {
        let finite = [x0, x1, y0, y1].iter().all(|v| v.is_finite());
        if !finite || x1 <= x0 || y1 <= y0 {
            return Err(Error::InvalidInput(format!(
                "window [{x0}, {x1}] x [{y0}, {y1}] is empty or not finite"
            )));
        }
        Ok(Self { x0, x1, y0, y1 })
    }

    pub fn unit_square() -> Self {
        Self { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0 }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn diameter(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.x >= self.x0 && p.x <= self.x1 && p.y >= self.y0 && p.y <= self.y1
    }

    /// Grown by `margin` on every side.
    pub fn extended(&self, margin: f64) -> Self {
        Self {
            x0: self.x0 - margin,
            x1: self.x1 + margin,
            y0: self.y0 - margin,
            y1: self.y1 + margin,
        }
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            x0: self.x0 + dx,
            x1: self.x1 + dx,
            y0: self.y0 + dy,
            y1: self.y1 + dy,
        }
    }

    pub fn uniform_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        Point::new(
            self.x0 + self.width() * rng.random::<f64>(),
            self.y0 + self.height() * rng.random::<f64>(),
        )
    }
}

/// Points in a window, optionally with one real mark per point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointPattern {
    points: Vec<Point>,
    marks: Option<Vec<f64>>,
    window: Window,
}

impl PointPattern {
    pub fn new(points: Vec<Point>, window: Window) -> Result<Self> {
        if let Some(p) = points.iter().find(|p| !window.contains(p)) {
            return Err(Error::InvalidInput(format!(
                "point ({}, {}) lies outside the window",
                p.x, p.y
            )));
        }
        Ok(Self { points, marks: None, window })
    }

    pub fn with_marks(mut self, marks: Vec<f64>) -> Result<Self> {
        if marks.len() != self.points.len() {
            return Err(Error::InvalidInput(format!(
                "{} marks for {} points",
                marks.len(),
                self.points.len()
            )));
        }
        if marks.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidInput("marks must be finite".into()));
        }
        self.marks = Some(marks);
        Ok(self)
    }

    pub fn empty(window: Window) -> Self {
        Self { points: Vec::new(), marks: None, window }
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn marks(&self) -> Option<&[f64]> {
        self.marks.as_deref()
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Shift points and window together.
    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            points: self.points.iter().map(|p| Point::new(p.x + dx, p.y + dy)).collect(),
            marks: self.marks.clone(),
            window: self.window.translated(dx, dy),
        }
    }

    /// Keep only points inside `window`.
    fn clipped(points: Vec<Point>, window: Window) -> Self {
        Self {
            points: points.into_iter().filter(|p| window.contains(p)).collect(),
            marks: None,
            window,
        }
    }

    /// Smallest distance between two distinct points; infinite below two points.
    pub fn min_pair_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for (i, a) in self.points.iter().enumerate() {
            for b in &self.points[i + 1..] {
                best = best.min(a.dist2(b));
            }
        }
        best.sqrt()
    }
}

/// User-supplied intensity function.
#[derive(Clone)]
pub struct CustomIntensity {
    pub f: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    /// Upper bound of `f` over the simulation region.
    pub max: f64,
}

impl fmt::Debug for CustomIntensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomIntensity").field("max", &self.max).finish_non_exhaustive()
    }
}

/// First-order intensity (or Strauss β term) as a function of location.
#[derive(Debug, Clone)]
pub enum Intensity {
    Constant(f64),
    /// `exp(intercept + slope_x·x + slope_y·y)`
    LogLinear { intercept: f64, slope_x: f64, slope_y: f64 },
    /// `exp(intercept + amplitude·(sin(freq·x) + sin(freq·y)))`
    Wavy { intercept: f64, amplitude: f64, frequency: f64 },
    Custom(CustomIntensity),
}

impl Intensity {
    #[inline]
    pub fn value(&self, p: &Point) -> f64 {
        match self {
            Intensity::Constant(c) => *c,
            Intensity::LogLinear { intercept, slope_x, slope_y } => {
                (intercept + slope_x * p.x + slope_y * p.y).exp()
            }
            Intensity::Wavy { intercept, amplitude, frequency } => {
                (intercept + amplitude * ((frequency * p.x).sin() + (frequency * p.y).sin())).exp()
            }
            Intensity::Custom(c) => (c.f)(p.x, p.y),
        }
    }

    /// Upper bound over `window`.
    pub fn upper_bound(&self, window: &Window) -> f64 {
        match self {
            Intensity::Constant(c) => *c,
            Intensity::LogLinear { intercept, slope_x, slope_y } => {
                let x = if *slope_x > 0.0 { window.x1 } else { window.x0 };
                let y = if *slope_y > 0.0 { window.y1 } else { window.y0 };
                (intercept + slope_x * x + slope_y * y).exp()
            }
            Intensity::Wavy { intercept, amplitude, .. } => (intercept + 2.0 * amplitude.abs()).exp(),
            Intensity::Custom(c) => c.max,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Intensity::Constant(_))
    }
}

/// Strauss process parameters; `gamma = 0` is the hard core process.
#[derive(Debug, Clone)]
pub struct StraussSpec {
    pub beta: Intensity,
    pub gamma: f64,
    pub radius: f64,
    /// Condition on this many points in the simulation region.
    pub fixed_n: Option<usize>,
    /// Simulation region is the window grown by this margin.
    pub margin: f64,
    /// Number of Metropolis–Hastings proposals.
    pub proposals: usize,
}

/// Default number of proposals for a Strauss chain.
pub const DEFAULT_STRAUSS_PROPOSALS: usize = 100_000;
/// Default growth of the simulation region for Gibbs models.
pub const DEFAULT_GIBBS_MARGIN: f64 = 0.25;

impl StraussSpec {
    pub fn new(beta: f64, gamma: f64, radius: f64) -> Self {
        Self {
            beta: Intensity::Constant(beta),
            gamma,
            radius,
            fixed_n: None,
            margin: DEFAULT_GIBBS_MARGIN,
            proposals: DEFAULT_STRAUSS_PROPOSALS,
        }
    }

    pub fn hard_core(beta: f64, radius: f64) -> Self {
        Self::new(beta, 0.0, radius)
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidModel(format!(
                "Strauss gamma = {} outside [0, 1]",
                self.gamma
            )));
        }
        if !(self.radius > 0.0) {
            return Err(Error::InvalidModel("Strauss radius must be positive".into()));
        }
        if let Intensity::Constant(b) = self.beta {
            if !(b > 0.0) {
                return Err(Error::InvalidModel("Strauss beta must be positive".into()));
            }
        }
        if !(self.margin >= 0.0) {
            return Err(Error::InvalidModel("margin must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Matérn cluster process: Poisson parents, Poisson(`mean_daughters`)
/// daughters uniform in a disc of `radius` around each parent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatClustSpec {
    pub parent_intensity: f64,
    pub radius: f64,
    pub mean_daughters: f64,
}

impl MatClustSpec {
    pub fn new(parent_intensity: f64, radius: f64, mean_daughters: f64) -> Self {
        Self { parent_intensity, radius, mean_daughters }
    }

    fn validate(&self) -> Result<()> {
        if !(self.parent_intensity > 0.0 && self.radius > 0.0 && self.mean_daughters > 0.0) {
            return Err(Error::InvalidModel(format!(
                "MatClust parameters must be positive: {self:?}"
            )));
        }
        Ok(())
    }

    /// Intensity of the daughter process.
    pub fn intensity(&self) -> f64 {
        self.parent_intensity * self.mean_daughters
    }
}

/// Null or alternative model for a point pattern.
#[derive(Debug, Clone)]
pub enum ModelSpec {
    Binomial { n: usize },
    Poisson { intensity: f64 },
    InhomPoisson { intensity: Intensity },
    Strauss(StraussSpec),
    MatClust(MatClustSpec),
    /// Matérn clusters whose parents form a hard core process.
    NoOMatClust { cluster: MatClustSpec, hard_core: f64 },
    /// Superposition of two independent Matérn cluster processes.
    MixMatClust(MatClustSpec, MatClustSpec),
}

impl ModelSpec {
    pub fn simulate<R: Rng + ?Sized>(&self, window: &Window, rng: &mut R) -> Result<PointPattern> {
        match self {
            ModelSpec::Binomial { n } => Ok(simulate_binomial(*n, window, rng)),
            ModelSpec::Poisson { intensity } => {
                simulate_poisson(&Intensity::Constant(*intensity), window, rng)
            }
            ModelSpec::InhomPoisson { intensity } => simulate_poisson(intensity, window, rng),
            ModelSpec::Strauss(spec) => simulate_strauss(spec, window, rng),
            ModelSpec::MatClust(spec) => simulate_matern_cluster(spec, window, rng),
            ModelSpec::NoOMatClust { cluster, hard_core } => {
                simulate_nonoverlapping_matern_cluster(cluster, *hard_core, window, rng)
            }
            ModelSpec::MixMatClust(a, b) => {
                let pa = simulate_matern_cluster(a, window, rng)?;
                let pb = simulate_matern_cluster(b, window, rng)?;
                let mut points = pa.points;
                points.extend(pb.points);
                Ok(PointPattern::clipped(points, *window))
            }
        }
    }
}

/// `n` independent uniform points.
pub fn simulate_binomial<R: Rng + ?Sized>(n: usize, window: &Window, rng: &mut R) -> PointPattern {
    let points = (0..n).map(|_| window.uniform_point(rng)).collect();
    PointPattern { points, marks: None, window: *window }
}

fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> Result<usize> {
    if mean == 0.0 {
        return Ok(0);
    }
    let d = Poisson::new(mean)
        .map_err(|e| Error::InvalidModel(format!("Poisson mean {mean}: {e}")))?;
    Ok(d.sample(rng) as usize)
}

fn poisson_points<R: Rng + ?Sized>(intensity: f64, region: &Window, rng: &mut R) -> Result<Vec<Point>> {
    let n = poisson_count(intensity * region.area(), rng)?;
    Ok((0..n).map(|_| region.uniform_point(rng)).collect())
}

/// Poisson process; inhomogeneous intensities are simulated by thinning a
/// homogeneous process at the intensity's upper bound.
pub fn simulate_poisson<R: Rng + ?Sized>(intensity: &Intensity, window: &Window, rng: &mut R) -> Result<PointPattern> {
    let lambda_max = intensity.upper_bound(window);
    if !(lambda_max >= 0.0 && lambda_max.is_finite()) {
        return Err(Error::InvalidModel(format!("intensity bound {lambda_max} is invalid")));
    }
    let proposals = poisson_points(lambda_max, window, rng)?;
    if intensity.is_constant() {
        return Ok(PointPattern { points: proposals, marks: None, window: *window });
    }
    let mut points = Vec::with_capacity(proposals.len());
    for p in proposals {
        let l = intensity.value(&p);
        if !(l >= 0.0) {
            return Err(Error::InvalidModel(format!(
                "negative intensity {l} at ({}, {})",
                p.x, p.y
            )));
        }
        if l > lambda_max * (1.0 + 1e-12) {
            return Err(Error::InvalidModel(format!(
                "intensity {l} exceeds bound {lambda_max}"
            )));
        }
        if rng.random::<f64>() * lambda_max < l {
            points.push(p);
        }
    }
    Ok(PointPattern { points, marks: None, window: *window })
}

/// Points on a region with a uniform cell grid for radius queries.
struct CellList {
    region: Window,
    cell: f64,
    nx: usize,
    ny: usize,
    cells: Vec<Vec<u32>>,
    points: Vec<Point>,
    cell_of: Vec<u32>,
}

impl CellList {
    fn new(region: Window, radius: f64) -> Self {
        const MAX_CELLS_PER_SIDE: usize = 256;
        let side = region.width().max(region.height());
        let cell = radius.max(side / MAX_CELLS_PER_SIDE as f64);
        let nx = ((region.width() / cell).ceil() as usize).max(1);
        let ny = ((region.height() / cell).ceil() as usize).max(1);
        Self {
            region,
            cell,
            nx,
            ny,
            cells: vec![Vec::new(); nx * ny],
            points: Vec::new(),
            cell_of: Vec::new(),
        }
    }

    #[inline]
    fn coords(&self, p: &Point) -> (usize, usize) {
        let cx = (((p.x - self.region.x0) / self.cell) as usize).min(self.nx - 1);
        let cy = (((p.y - self.region.y0) / self.cell) as usize).min(self.ny - 1);
        (cx, cy)
    }

    fn push(&mut self, p: Point) {
        let (cx, cy) = self.coords(&p);
        let c = cy * self.nx + cx;
        self.cells[c].push(self.points.len() as u32);
        self.cell_of.push(c as u32);
        self.points.push(p);
    }

    fn swap_remove(&mut self, i: usize) {
        let last = self.points.len() - 1;
        let c = self.cell_of[i] as usize;
        let pos = self.cells[c].iter().position(|&k| k as usize == i).expect("indexed");
        self.cells[c].swap_remove(pos);
        if i != last {
            let lc = self.cell_of[last] as usize;
            let lpos = self.cells[lc].iter().position(|&k| k as usize == last).expect("indexed");
            self.cells[lc][lpos] = i as u32;
        }
        self.points.swap_remove(i);
        self.cell_of.swap_remove(i);
    }

    /// Number of points within distance `< r` of `p`, skipping index `skip`.
    fn count_close(&self, p: &Point, r: f64, skip: Option<usize>) -> usize {
        let r2 = r * r;
        let (cx, cy) = self.coords(p);
        let reach = (r / self.cell).ceil() as usize;
        let mut count = 0;
        for y in cy.saturating_sub(reach)..=(cy + reach).min(self.ny - 1) {
            for x in cx.saturating_sub(reach)..=(cx + reach).min(self.nx - 1) {
                for &k in &self.cells[y * self.nx + x] {
                    if Some(k as usize) != skip && self.points[k as usize].dist2(p) < r2 {
                        count += 1;
                    }
                }
            }
        }
        count
    }
}

/// Birth–death (or fixed-count displacement) Metropolis–Hastings chain for a
/// Strauss process on an enlarged region.
pub struct StraussSampler {
    spec: StraussSpec,
    region: Window,
    state: CellList,
}

impl StraussSampler {
    pub fn new<R: Rng + ?Sized>(spec: &StraussSpec, window: &Window, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let region = window.extended(spec.margin);
        let mut state = CellList::new(region, spec.radius);
        if let Some(n) = spec.fixed_n {
            // sequential insertion keeps a hard-core start valid
            let max_tries = 1000 * (n + 1);
            let mut tries = 0;
            while state.points.len() < n {
                let p = region.uniform_point(rng);
                if spec.gamma > 0.0 || state.count_close(&p, spec.radius, None) == 0 {
                    state.push(p);
                }
                tries += 1;
                if tries > max_tries {
                    return Err(Error::InvalidModel(format!(
                        "cannot place {n} points with hard core distance {}",
                        spec.radius
                    )));
                }
            }
        }
        Ok(Self { spec: spec.clone(), region, state })
    }

    #[inline]
    fn interaction(&self, close: usize) -> f64 {
        self.spec.gamma.powi(close as i32)
    }

    /// Run `steps` proposals.
    pub fn run<R: Rng + ?Sized>(&mut self, steps: usize, rng: &mut R) {
        let area = self.region.area();
        let r = self.spec.radius;
        for _ in 0..steps {
            let n = self.state.points.len();
            if self.spec.fixed_n.is_some() {
                if n == 0 {
                    return;
                }
                let i = rng.random_range(0..n);
                let old = self.state.points[i];
                let new = self.region.uniform_point(rng);
                let t_new = self.state.count_close(&new, r, Some(i));
                let t_old = self.state.count_close(&old, r, Some(i));
                let ratio = self.spec.beta.value(&new) * self.interaction(t_new)
                    / (self.spec.beta.value(&old) * self.interaction(t_old));
                if rng.random::<f64>() < ratio {
                    self.state.swap_remove(i);
                    self.state.push(new);
                }
            } else if rng.random::<bool>() {
                let u = self.region.uniform_point(rng);
                let t = self.state.count_close(&u, r, None);
                let ratio = self.spec.beta.value(&u) * self.interaction(t) * area / (n + 1) as f64;
                if rng.random::<f64>() < ratio {
                    self.state.push(u);
                }
            } else if n > 0 {
                let i = rng.random_range(0..n);
                let p = self.state.points[i];
                let t = self.state.count_close(&p, r, Some(i));
                let ratio = n as f64 / (area * self.spec.beta.value(&p) * self.interaction(t));
                if rng.random::<f64>() < ratio {
                    self.state.swap_remove(i);
                }
            }
        }
    }

    /// Current state clipped to `window`.
    pub fn pattern_in(&self, window: &Window) -> PointPattern {
        PointPattern::clipped(self.state.points.clone(), *window)
    }

    pub fn len(&self) -> usize {
        self.state.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.state.points.is_empty()
    }
}

/// One Strauss realization: a fresh chain run for `spec.proposals` steps.
pub fn simulate_strauss<R: Rng + ?Sized>(spec: &StraussSpec, window: &Window, rng: &mut R) -> Result<PointPattern> {
    let mut sampler = StraussSampler::new(spec, window, rng)?;
    sampler.run(spec.proposals, rng);
    Ok(sampler.pattern_in(window))
}

fn daughters<R: Rng + ?Sized>(parents: &[Point], spec: &MatClustSpec, out: &mut Vec<Point>, rng: &mut R) -> Result<()> {
    for p in parents {
        for _ in 0..poisson_count(spec.mean_daughters, rng)? {
            let rho = spec.radius * rng.random::<f64>().sqrt();
            let theta = 2.0 * PI * rng.random::<f64>();
            out.push(Point::new(p.x + rho * theta.cos(), p.y + rho * theta.sin()));
        }
    }
    Ok(())
}

/// Matérn cluster process; parents live on the window grown by the cluster
/// radius.
pub fn simulate_matern_cluster<R: Rng + ?Sized>(spec: &MatClustSpec, window: &Window, rng: &mut R) -> Result<PointPattern> {
    spec.validate()?;
    let parents = poisson_points(spec.parent_intensity, &window.extended(spec.radius), rng)?;
    let mut points = Vec::new();
    daughters(&parents, spec, &mut points, rng)?;
    Ok(PointPattern::clipped(points, *window))
}

/// Matérn clusters around hard core parents.
pub fn simulate_nonoverlapping_matern_cluster<R: Rng + ?Sized>(
    spec: &MatClustSpec,
    hard_core: f64,
    window: &Window,
    rng: &mut R,
) -> Result<PointPattern> {
    spec.validate()?;
    let parent_region = window.extended(spec.radius);
    let hc = StraussSpec {
        margin: 0.0,
        ..StraussSpec::hard_core(spec.parent_intensity, hard_core)
    };
    let parents = simulate_strauss(&hc, &parent_region, rng)?;
    let mut points = Vec::new();
    daughters(parents.points(), spec, &mut points, rng)?;
    Ok(PointPattern::clipped(points, *window))
}

/// Uniformly random relabelling of the marks.
pub fn permute_marks<R: Rng + ?Sized>(pattern: &PointPattern, rng: &mut R) -> Result<PointPattern> {
    let mut marks = pattern.marks.clone().ok_or(Error::Unmarked)?;
    marks.shuffle(rng);
    Ok(PointPattern { marks: Some(marks), ..pattern.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn chi2_p(observed: &[f64], expected: &[f64]) -> f64 {
        let stat: f64 = observed.iter().zip(expected).map(|(o, e)| (o - e).powi(2) / e).sum();
        1.0 - ChiSquared::new((observed.len() - 1) as f64).unwrap().cdf(stat)
    }

    fn mean_var(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
    }

    #[test]
    fn binomial_basics() {
        let w = Window::unit_square();
        assert!(simulate_binomial(0, &w, &mut rng(1)).is_empty());
        let p = simulate_binomial(200, &w, &mut rng(2));
        assert_eq!(p.len(), 200);
        assert!(p.points().iter().all(|q| w.contains(q)));
    }

    #[test]
    fn binomial_quadrants_are_multinomial() {
        let w = Window::unit_square();
        let mut r = rng(3);
        let mut counts = [0.0; 4];
        let reps = 200;
        for _ in 0..reps {
            for q in simulate_binomial(200, &w, &mut r).points() {
                counts[usize::from(q.x > 0.5) + 2 * usize::from(q.y > 0.5)] += 1.0;
            }
        }
        let e = [reps as f64 * 50.0; 4];
        assert!(chi2_p(&counts, &e) > 0.001);
    }

    #[test]
    fn binomial_marginals_uniform() {
        let mut xs: Vec<f64> = simulate_binomial(5000, &Window::unit_square(), &mut rng(31))
            .points()
            .iter()
            .map(|p| p.x)
            .collect();
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        let d = xs
            .iter()
            .enumerate()
            .map(|(i, x)| ((i + 1) as f64 / n - x).abs().max((x - i as f64 / n).abs()))
            .fold(0.0, f64::max);
        // KS critical value at 0.1% is about 1.95 / sqrt(n)
        assert!(d < 1.95 / n.sqrt(), "D = {d}");
    }

    #[test]
    fn poisson_moments() {
        let w = Window::unit_square();
        let mut r = rng(4);
        assert!(simulate_poisson(&Intensity::Constant(0.0), &w, &mut r).unwrap().is_empty());
        let counts: Vec<f64> = (0..2000)
            .map(|_| simulate_poisson(&Intensity::Constant(200.0), &w, &mut r).unwrap().len() as f64)
            .collect();
        let (m, v) = mean_var(&counts);
        assert!((m - 200.0).abs() < 3.0 * (200.0f64 / 2000.0).sqrt(), "mean {m}");
        assert!((v - 200.0).abs() < 30.0, "var {v}");
    }

    #[test]
    fn inhomogeneous_poisson_total_matches_quadrature() {
        let intensity = Intensity::LogLinear { intercept: 5.0, slope_x: 0.5, slope_y: 0.5 };
        // midpoint quadrature oracle over the unit square
        let m = 400;
        let h = 1.0 / m as f64;
        let mut integral = 0.0;
        for i in 0..m {
            for j in 0..m {
                integral += intensity.value(&Point::new((i as f64 + 0.5) * h, (j as f64 + 0.5) * h)) * h * h;
            }
        }
        let closed = 5.0f64.exp() * (2.0 * (0.5f64.exp() - 1.0)).powi(2);
        assert!((integral - closed).abs() < 1e-3, "{integral} vs {closed}");
        let w = Window::unit_square();
        let mut r = rng(5);
        let reps = 1000;
        let counts: Vec<f64> = (0..reps)
            .map(|_| simulate_poisson(&intensity, &w, &mut r).unwrap().len() as f64)
            .collect();
        let (mean, _) = mean_var(&counts);
        assert!((mean - integral).abs() < 3.0 * (integral / reps as f64).sqrt(), "{mean}");
    }

    #[test]
    fn negative_intensity_is_rejected() {
        let bad = Intensity::Custom(CustomIntensity { f: Arc::new(|x, _| x - 0.5), max: 1.0 });
        let res = (0..20).map(|s| simulate_poisson(&bad, &Window::unit_square(), &mut rng(s))).find(|r| r.is_err());
        assert!(matches!(res, Some(Err(Error::InvalidModel(_)))));
    }

    #[test]
    fn strauss_rejects_gamma_above_one() {
        let spec = StraussSpec::new(100.0, 1.5, 0.05);
        assert!(simulate_strauss(&spec, &Window::unit_square(), &mut rng(1)).is_err());
    }

    #[test]
    fn hard_core_invariant() {
        let w = Window::unit_square();
        let mut r = rng(6);
        for seed in 0..5 {
            let spec = StraussSpec { proposals: 20_000, ..StraussSpec::hard_core(300.0, 0.04) };
            let p = simulate_strauss(&spec, &w, &mut rng(seed)).unwrap();
            assert!(p.len() > 50);
            assert!(p.min_pair_distance() >= 0.04);
        }
        let spec = StraussSpec { fixed_n: Some(100), margin: 0.0, proposals: 20_000, ..StraussSpec::hard_core(1.0, 0.05) };
        let p = simulate_strauss(&spec, &w, &mut r).unwrap();
        assert_eq!(p.len(), 100);
        assert!(p.min_pair_distance() >= 0.05);
    }

    #[test]
    fn strauss_gamma_one_is_poisson() {
        let w = Window::unit_square();
        let spec = StraussSpec { proposals: 20_000, ..StraussSpec::new(100.0, 1.0, 0.05) };
        let counts: Vec<f64> = (0..300)
            .map(|s| simulate_strauss(&spec, &w, &mut rng(100 + s)).unwrap().len() as f64)
            .collect();
        let (m, v) = mean_var(&counts);
        assert!((m - 100.0).abs() < 4.0 * (100.0f64 / 300.0).sqrt(), "mean {m}");
        assert!((v / 100.0 - 1.0).abs() < 0.3, "var {v}");
    }

    #[test]
    fn cell_list_counts_match_brute_force() {
        let region = Window::new(-0.25, 1.25, -0.25, 1.25).unwrap();
        let mut r = rng(7);
        let mut cl = CellList::new(region, 0.07);
        for _ in 0..400 {
            cl.push(region.uniform_point(&mut r));
        }
        for _ in 0..100 {
            let i = r.random_range(0..cl.points.len());
            cl.swap_remove(i);
        }
        for _ in 0..50 {
            let q = region.uniform_point(&mut r);
            let brute = cl.points.iter().filter(|p| p.dist2(&q) < 0.07 * 0.07).count();
            assert_eq!(cl.count_close(&q, 0.07, None), brute);
        }
    }

    #[test]
    fn matern_limits_and_mean() {
        let w = Window::unit_square();
        let tiny = MatClustSpec::new(50.0, 0.06, 1e-9);
        assert!(simulate_matern_cluster(&tiny, &w, &mut rng(8)).unwrap().is_empty());
        let spec = MatClustSpec::new(50.0, 0.06, 4.0);
        let mut r = rng(9);
        let counts: Vec<f64> = (0..1000)
            .map(|_| simulate_matern_cluster(&spec, &w, &mut r).unwrap().len() as f64)
            .collect();
        let (m, v) = mean_var(&counts);
        let se = (v / counts.len() as f64).sqrt();
        assert!((m - 200.0).abs() < 3.0 * se, "mean {m}, se {se}");
    }

    #[test]
    fn composite_cluster_models_stay_in_window() {
        let w = Window::unit_square();
        let mut r = rng(10);
        let noo = ModelSpec::NoOMatClust { cluster: MatClustSpec::new(250.0, 0.02, 4.0), hard_core: 0.06 };
        let mix = ModelSpec::MixMatClust(MatClustSpec::new(10.0, 0.06, 30.0), MatClustSpec::new(10.0, 0.03, 30.0));
        for m in [noo, mix] {
            let p = m.simulate(&w, &mut r).unwrap();
            assert!(!p.is_empty());
            assert!(p.points().iter().all(|q| w.contains(q)));
        }
    }

    #[test]
    fn permute_marks_preserves_multiset() {
        let w = Window::unit_square();
        let pts = vec![Point::new(0.1, 0.1), Point::new(0.2, 0.2), Point::new(0.3, 0.3), Point::new(0.4, 0.4)];
        let single = PointPattern::new(vec![pts[0]], w).unwrap().with_marks(vec![2.0]).unwrap();
        assert_eq!(permute_marks(&single, &mut rng(1)).unwrap(), single);
        assert_eq!(permute_marks(&PointPattern::new(pts.clone(), w).unwrap(), &mut rng(1)), Err(Error::Unmarked));

        let p = PointPattern::new(pts, w).unwrap().with_marks(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut r = rng(11);
        let mut freq = std::collections::HashMap::new();
        let reps = 24_000;
        for _ in 0..reps {
            let q = permute_marks(&p, &mut r).unwrap();
            assert_eq!(q.points(), p.points());
            let mut sorted = q.marks().unwrap().to_vec();
            sorted.sort_by(f64::total_cmp);
            assert_eq!(sorted, vec![1.0, 2.0, 3.0, 4.0]);
            let key: Vec<i64> = q.marks().unwrap().iter().map(|&m| m as i64).collect();
            *freq.entry(key).or_insert(0.0) += 1.0;
        }
        assert_eq!(freq.len(), 24);
        let obs: Vec<f64> = freq.values().copied().collect();
        assert!(chi2_p(&obs, &vec![reps as f64 / 24.0; 24]) > 0.001);
    }

    #[test]
    fn deterministic_under_seed() {
        let w = Window::unit_square();
        let m = ModelSpec::Strauss(StraussSpec { proposals: 5000, ..StraussSpec::new(200.0, 0.5, 0.03) });
        assert_eq!(m.simulate(&w, &mut rng(12)).unwrap(), m.simulate(&w, &mut rng(12)).unwrap());
    }
}
