//! Seeded Monte-Carlo checks of estimators, sampler, bands and benchmark
//! statistics.

use pickands::bench::{run_mise, ExperimentConfig};
use pickands::bernstein::{simplex_grid, SimplexPoint};
use pickands::bootstrap::{bootstrap_with_projector, pointwise_band, simultaneous_band};
use pickands::madogram::{estimate_pickands_md, EstimatorKind, SampleMatrix};
use pickands::models::{derive_seed, sample, true_pickands, ModelSpec};
use pickands::projection::{default_grid_resolution, Projector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn sup_error(model: &ModelSpec, n: usize, seed: u64, grid: &[SimplexPoint]) -> f64 {
    let data = sample(model, n, seed).unwrap();
    let pilot = estimate_pickands_md(&data, grid).unwrap();
    grid.iter()
        .zip(&pilot.values)
        .map(|(w, v)| (v - true_pickands(model, w).unwrap()).abs())
        .fold(0.0, f64::max)
}

fn random_point(rng: &mut ChaCha8Rng, d: usize) -> SimplexPoint {
    let e: Vec<f64> = (0..d).map(|_| -rng.gen::<f64>().max(1e-300).ln()).collect();
    SimplexPoint::normalized(&e).unwrap()
}

#[test]
fn logistic_truth_is_convex_and_bounded() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (d, alpha) in [(2, 0.2), (3, 0.3), (3, 0.7), (5, 0.5), (3, 1.0)] {
        let model = ModelSpec::symmetric_logistic(d, alpha).unwrap();
        let a = |w: &SimplexPoint| true_pickands(&model, w).unwrap();
        for i in 0..d {
            assert_eq!(a(&SimplexPoint::vertex(d, i).unwrap()), 1.0);
        }
        for _ in 0..5000 {
            let (w, v) = (random_point(&mut rng, d), random_point(&mut rng, d));
            assert!(a(&w.midpoint(&v)) <= 0.5 * (a(&w) + a(&v)) + 1e-10);
            assert!(a(&w) >= w.max_coord() - 1e-15 && a(&w) <= 1.0 + 1e-15);
        }
    }
}

#[test]
fn sampler_matches_truth() {
    let grid = simplex_grid(3, 20).unwrap();
    for alpha in [0.3, 0.5, 0.7] {
        let model = ModelSpec::symmetric_logistic(3, alpha).unwrap();
        let errors = (0..10).map(|s| sup_error(&model, 20_000, derive_seed(31, s), &grid)).collect();
        let med = median(errors);
        assert!(med <= 0.02, "alpha' = {alpha}: median sup error {med}");
    }
}

#[test]
fn madogram_error_shrinks_with_n() {
    let grid = simplex_grid(3, 20).unwrap();
    for alpha in [0.3, 0.7] {
        let model = ModelSpec::symmetric_logistic(3, alpha).unwrap();
        let at = |n: usize| median((0..20).map(|s| sup_error(&model, n, derive_seed(n as u64, s), &grid)).collect());
        let (small, large) = (at(500), at(5000));
        assert!(large < small, "alpha' = {alpha}: {large} !< {small}");
    }
}

#[test]
fn comonotone_replicates_sit_on_the_lower_bound() {
    let n = 60;
    let columns: Vec<Vec<f64>> = vec![
        (0..n).map(|i| i as f64).collect(),
        (0..n).map(|i| (i as f64 / 10.0).exp()).collect(),
    ];
    let data = SampleMatrix::from_columns(&columns).unwrap();
    let k = 10;
    let projector = Projector::new(2, k, default_grid_resolution(2, k)).unwrap();
    let pilot = estimate_pickands_md(&data, projector.grid()).unwrap();
    assert!((pilot.center_value().unwrap() - 0.5).abs() < 1e-12);

    // Coefficients may not fall below max(j, k - j)/k, so the smallest
    // attainable A(1/2, 1/2) is sum_j max(j, k - j)/k * C(k, j)/2^k.
    let mut binom = 1.0;
    let mut floor = 0.0;
    for j in 0..=k {
        floor += (j.max(k - j) as f64 / k as f64) * binom / 2f64.powi(k as i32);
        binom = binom * (k - j) as f64 / (j + 1) as f64;
    }
    let center = [SimplexPoint::barycenter(2).unwrap()];
    let ensemble = bootstrap_with_projector(&data, EstimatorKind::Madogram, &projector, 25, 4).unwrap();
    assert_eq!(ensemble.skipped, 0);
    for values in ensemble.evaluate(&center).unwrap() {
        for v in values {
            assert!((2.0 * v - 2.0 * floor).abs() < 1e-6, "theta {} vs floor {}", 2.0 * v, 2.0 * floor);
        }
    }
}

fn band_width_at_center(n: usize, seed: u64, projector: &Projector) -> f64 {
    let model = ModelSpec::symmetric_logistic(3, 0.5).unwrap();
    let data = sample(&model, n, seed).unwrap();
    let ensemble = bootstrap_with_projector(&data, EstimatorKind::Madogram, projector, 40, seed).unwrap();
    let band = simultaneous_band(&ensemble, 0.05).unwrap();
    band.width(&SimplexPoint::barycenter(3).unwrap()).unwrap()
}

#[test]
fn band_narrows_as_n_grows() {
    let projector = Projector::new(3, 8, default_grid_resolution(3, 8)).unwrap();
    let widths = |n: usize| {
        median(
            (0..20)
                .map(|s| band_width_at_center(n, derive_seed(77 + n as u64, s), &projector))
                .collect(),
        )
    };
    let (w100, w400) = (widths(100), widths(400));
    assert!(w400 < w100, "median width {w400} at n=400, {w100} at n=100");
}

#[test]
fn simultaneous_band_covers_pointwise_intervals() {
    let model = ModelSpec::symmetric_logistic(3, 0.5).unwrap();
    let data = sample(&model, 100, 12).unwrap();
    let projector = Projector::new(3, 8, default_grid_resolution(3, 8)).unwrap();
    let ensemble = bootstrap_with_projector(&data, EstimatorKind::Madogram, &projector, 200, 13).unwrap();
    let band = simultaneous_band(&ensemble, 0.05).unwrap();
    let pointwise = pointwise_band(&ensemble, projector.grid(), 0.05).unwrap();
    let (lower, upper) = band.evaluate_grid(projector.grid()).unwrap();
    let tol = 1e-12;
    let covered = (0..lower.len())
        .filter(|&q| lower[q] <= pointwise.lower[q] + tol && upper[q] >= pointwise.upper[q] - tol)
        .count();
    let share = covered as f64 / lower.len() as f64;
    assert!(share >= 0.95, "simultaneous band contains the pointwise interval at {share} of points");
}

fn md_config(alpha: f64, n: usize, reps: usize, seed: u64) -> ExperimentConfig {
    let mut config = ExperimentConfig::symmetric_logistic(3, alpha, n).unwrap();
    config.reps = reps;
    config.seed = seed;
    config
}

fn md_mise(config: &ExperimentConfig) -> (f64, f64) {
    let r = run_mise(config).unwrap().into_iter().find(|r| !r.projected).unwrap();
    (r.mise, r.mc_std_error)
}

#[test]
fn mise_decreases_with_n() {
    for alpha in [0.3, 0.7] {
        let (small, _) = md_mise(&md_config(alpha, 50, 200, 8));
        let (large, _) = md_mise(&md_config(alpha, 200, 200, 8));
        assert!(large < small, "alpha' = {alpha}: MISE {large} at n=200, {small} at n=50");
    }
}

#[test]
fn standard_error_scales_like_inverse_root_reps() {
    let (_, se100) = md_mise(&md_config(0.5, 100, 100, 3));
    let (_, se400) = md_mise(&md_config(0.5, 100, 400, 3));
    let ratio = se100 / se400;
    assert!((1.5..=2.7).contains(&ratio), "se ratio {ratio}, expected about 2");
}
