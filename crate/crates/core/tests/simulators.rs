use genvtest::pointproc::{simulate_strauss, StraussSampler, DEFAULT_STRAUSS_PROPOSALS};
use genvtest::summaries::estimate_k;
use genvtest::{Grid, MatClustSpec, ModelSpec, StraussSpec, Window};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
}

#[test]
fn strauss_count_matches_long_run_chain() {
    let w = Window::unit_square();
    let spec = StraussSpec::new(350.0, 0.4, 0.03);

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut chain = StraussSampler::new(&spec, &w, &mut rng).unwrap();
    chain.run(DEFAULT_STRAUSS_PROPOSALS, &mut rng);
    let mut long = Vec::new();
    for _ in 0..1000 {
        chain.run(1000, &mut rng);
        long.push(chain.pattern_in(&w).len() as f64);
    }
    let (reference, _) = mean_sd(&long);

    let counts: Vec<f64> = (0..200)
        .map(|s| simulate_strauss(&spec, &w, &mut ChaCha8Rng::seed_from_u64(1000 + s)).unwrap().len() as f64)
        .collect();
    let (mean, _) = mean_sd(&counts);
    assert!((mean / reference - 1.0).abs() < 0.02, "{mean} vs {reference}");
    // interaction thins the pattern below the Poisson(β) count
    assert!(mean < 300.0);
}

#[test]
fn strauss_without_interaction_has_poisson_k() {
    let w = Window::unit_square();
    let spec = StraussSpec { proposals: 30_000, ..StraussSpec::new(150.0, 1.0, 0.05) };
    let grid = Grid::new(vec![0.02, 0.05, 0.1]).unwrap();
    let reps = 200;
    let ks: Vec<Vec<f64>> = (0..reps)
        .map(|s| {
            let p = simulate_strauss(&spec, &w, &mut ChaCha8Rng::seed_from_u64(s)).unwrap();
            estimate_k(&p, &grid).unwrap()
        })
        .collect();
    for (j, &r) in grid.values().iter().enumerate() {
        let col: Vec<f64> = ks.iter().map(|k| k[j]).collect();
        let (m, sd) = mean_sd(&col);
        let poisson = PI * r * r;
        assert!((m - poisson).abs() < 4.0 * sd / (reps as f64).sqrt(), "r = {r}: {m} vs {poisson}");
    }
}

#[test]
fn hard_core_invariant_on_every_output() {
    let w = Window::unit_square();
    for s in 0..20 {
        let spec = StraussSpec { proposals: 20_000, ..StraussSpec::hard_core(400.0, 0.035) };
        let p = simulate_strauss(&spec, &w, &mut ChaCha8Rng::seed_from_u64(s)).unwrap();
        assert!(p.min_pair_distance() >= 0.035);
    }
}

#[test]
fn matern_cluster_k_exceeds_poisson_below_cluster_diameter() {
    let w = Window::unit_square();
    let model = ModelSpec::MatClust(MatClustSpec::new(50.0, 0.06, 4.0));
    let grid = Grid::new(vec![0.01, 0.03, 0.06, 0.09, 0.11]).unwrap();
    let reps = 200;
    let mut mean = vec![0.0; grid.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..reps {
        let k = estimate_k(&model.simulate(&w, &mut rng).unwrap(), &grid).unwrap();
        for (m, v) in mean.iter_mut().zip(k) {
            *m += v / reps as f64;
        }
    }
    for (m, &r) in mean.iter().zip(grid.values()) {
        assert!(*m > PI * r * r, "r = {r}");
    }
}

#[test]
fn inhomogeneous_strauss_follows_beta() {
    use genvtest::Intensity;
    let w = Window::unit_square();
    let spec = StraussSpec {
        beta: Intensity::LogLinear { intercept: 5.0, slope_x: 1.5, slope_y: 0.0 },
        margin: 0.0,
        proposals: 50_000,
        ..StraussSpec::new(1.0, 0.5, 0.02)
    };
    let (mut left, mut right) = (0.0, 0.0);
    for s in 0..50 {
        let p = simulate_strauss(&spec, &w, &mut ChaCha8Rng::seed_from_u64(s)).unwrap();
        for q in p.points() {
            if q.x < 0.5 {
                left += 1.0;
            } else {
                right += 1.0;
            }
        }
    }
    assert!(right > 1.5 * left, "{left} {right}");
}
