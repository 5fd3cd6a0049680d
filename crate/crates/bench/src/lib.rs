//! Shared inputs for the benchmarks.

use genvtest::pointproc::simulate_binomial;
use genvtest::{FunctionalSample, Grid, PointPattern, Window};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n_curves` random-walk curves on a uniform grid of `n_points`.
pub fn random_sample(n_curves: usize, n_points: usize, seed: u64) -> FunctionalSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = Grid::linspace(0.0, 1.0, n_points).expect("valid grid");
    let rows = (0..n_curves)
        .map(|_| {
            let mut acc = 0.0;
            (0..n_points)
                .map(|_| {
                    acc += rng.random::<f64>() - 0.5;
                    acc
                })
                .collect()
        })
        .collect();
    FunctionalSample::from_rows(grid, rows).expect("valid sample")
}

pub fn binomial_pattern(n: usize, seed: u64) -> PointPattern {
    simulate_binomial(n, &Window::unit_square(), &mut ChaCha8Rng::seed_from_u64(seed))
}
