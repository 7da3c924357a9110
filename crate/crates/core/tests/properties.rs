use pickands::bernstein::{
    bernstein_basis, dimension, enumerate_multi_indices, evaluate_polynomial, raise_degree, simplex_grid,
    BernsteinBasis, SimplexPoint,
};
use pickands::bootstrap::{order_statistic_ranks, simultaneous_band, CoefficientEnsemble};
use pickands::constraints::{build_constraints, check_feasible};
use pickands::madogram::{estimate_pickands_md, EstimatorKind, SampleMatrix};
use pickands::models::{true_pickands, ModelSpec};
use pickands::projection::{min_grid_resolution, Projector};
use pickands::qp::{objective, QpProblem};
use proptest::prelude::*;

fn point(d: usize) -> impl Strategy<Value = SimplexPoint> {
    prop::collection::vec(prop_oneof![1 => Just(0.0), 6 => 1e-6f64..1.0], d)
        .prop_filter("some positive weight", |w| w.iter().any(|x| *x > 0.0))
        .prop_map(|w| SimplexPoint::normalized(&w).unwrap())
}

fn dim_and_point() -> impl Strategy<Value = (usize, SimplexPoint)> {
    (2usize..=5).prop_flat_map(|d| (Just(d), point(d)))
}

/// Column-major sample with distinct values per column.
fn sample_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2usize..=4, 15usize..=60).prop_flat_map(|(d, n)| prop::collection::vec(prop::collection::vec(-1e3f64..1e3, n), d))
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn basis_is_a_partition_of_unity((d, w) in dim_and_point(), k in 1usize..=20) {
        let b = bernstein_basis(&w, k).unwrap();
        prop_assert!(b.values().iter().all(|v| *v >= 0.0));
        prop_assert!((b.values().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert_eq!(b.values().len(), dimension(d, k));
    }

    #[test]
    fn vertex_values_are_corner_coefficients(
        d in 2usize..=5,
        k in 1usize..=8,
        seed in prop::collection::vec(0.0f64..1.0, 1..200),
    ) {
        let basis = BernsteinBasis::new(d, k).unwrap();
        let beta: Vec<f64> = (0..basis.len()).map(|j| seed[j % seed.len()] + j as f64).collect();
        for i in 0..d {
            let v = evaluate_polynomial(&beta, &SimplexPoint::vertex(d, i).unwrap(), k).unwrap();
            prop_assert_eq!(v, beta[basis.vertex_index(i)]);
        }
    }

    #[test]
    fn raising_preserves_the_polynomial(
        (d, w) in (2usize..=4).prop_flat_map(|d| (Just(d), point(d))),
        k in 1usize..=10,
        coefs in prop::collection::vec(-2.0f64..2.0, 300),
    ) {
        let p = dimension(d, k);
        let beta = &coefs[..p];
        let raised = raise_degree(beta, d, k).unwrap();
        prop_assert_eq!(raised.len(), dimension(d, k + 1));
        let before = evaluate_polynomial(beta, &w, k).unwrap();
        let after = evaluate_polynomial(&raised, &w, k + 1).unwrap();
        prop_assert!((before - after).abs() <= 1e-12);
    }

    #[test]
    fn madogram_is_rank_invariant(columns in sample_strategy(), w in point(4)) {
        let d = columns.len();
        let w = SimplexPoint::normalized(&w.coords()[..d].iter().map(|x| x + 0.01).collect::<Vec<_>>()).unwrap();
        let grid = [w, SimplexPoint::barycenter(d).unwrap()];
        let transformed: Vec<Vec<f64>> = columns
            .iter()
            .enumerate()
            .map(|(i, col)| match i % 3 {
                0 => col.iter().map(|x| (x / 500.0).exp()).collect(),
                1 => col.iter().map(|x| x.powi(3) + x).collect(),
                _ => col.iter().map(|x| 7.5 * x - 3.0).collect(),
            })
            .collect();
        let a = estimate_pickands_md(&SampleMatrix::from_columns(&columns).unwrap(), &grid);
        let b = estimate_pickands_md(&SampleMatrix::from_columns(&transformed).unwrap(), &grid);
        match (a, b) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a.values, b.values),
            (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
        }
    }

    #[test]
    fn order_statistic_ranks_are_in_range(r in 1usize..2000, alpha in 0.001f64..0.999) {
        let (lo, hi) = order_statistic_ranks(r, alpha);
        prop_assert!(1 <= lo && lo <= hi && hi <= r);
    }

    #[test]
    fn larger_alpha_never_widens_the_band(
        reps in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 10), 40..120),
        a1 in 0.05f64..0.9,
        bump in 0.0f64..0.09,
    ) {
        let ensemble = CoefficientEnsemble::from_replicates(3, 3, reps).unwrap();
        let wide = simultaneous_band(&ensemble, a1).unwrap();
        let narrow = simultaneous_band(&ensemble, a1 + bump).unwrap();
        for j in 0..10 {
            prop_assert!(wide.lower_beta[j] <= narrow.lower_beta[j]);
            prop_assert!(narrow.upper_beta[j] <= wide.upper_beta[j]);
            prop_assert!(narrow.lower_beta[j] <= narrow.upper_beta[j]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn multi_index_count_matches_brute_force(d in 2usize..=6, k in 1usize..=12) {
        let all = enumerate_multi_indices(d, k).unwrap();
        let brute = (0..(k + 1).pow(d as u32))
            .filter(|code| {
                let mut c = *code;
                let mut sum = 0;
                for _ in 0..d {
                    sum += c % (k + 1);
                    c /= k + 1;
                }
                sum == k
            })
            .count();
        prop_assert_eq!(all.len(), brute);
        prop_assert_eq!(all.len(), binomial(k + d - 1, d - 1));
        let mut seen = std::collections::BTreeSet::new();
        for a in &all {
            prop_assert_eq!(a.alpha().iter().map(|x| *x as usize).sum::<usize>(), k);
            prop_assert!(seen.insert(a.alpha().to_vec()));
        }
    }
}

/// Noisy logistic pilot on the smallest admissible lattice.
fn noisy_pilot(d: usize, k: usize, alpha: f64, noise: &[f64]) -> (Projector, Vec<f64>) {
    let m = min_grid_resolution(d, k) + 2;
    let projector = Projector::new(d, k, m).unwrap();
    let model = ModelSpec::symmetric_logistic(d, alpha).unwrap();
    let values = projector
        .grid()
        .iter()
        .enumerate()
        .map(|(q, w)| true_pickands(&model, w).unwrap() + noise[q % noise.len()])
        .collect();
    (projector, values)
}

fn problem_of(projector: &Projector, targets: &[f64]) -> QpProblem {
    QpProblem {
        design: projector.basis().design_matrix(projector.grid()).unwrap(),
        targets: targets.to_vec(),
        constraints: projector.constraints().clone(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn projections_are_feasible_optimal_and_idempotent(
        d in 2usize..=3,
        k in 2usize..=6,
        alpha in 0.1f64..1.0,
        noise in prop::collection::vec(-0.15f64..0.15, 1..40),
        other_noise in prop::collection::vec(-0.3f64..0.3, 1..40),
    ) {
        let (projector, values) = noisy_pilot(d, k, alpha, &noise);
        let fit = projector.project_values(&values, EstimatorKind::Madogram).unwrap();
        let again = projector.project_values(&values, EstimatorKind::Madogram).unwrap();
        prop_assert_eq!(&fit.beta, &again.beta);

        let report = fit.feasibility(1e-9).unwrap();
        prop_assert!(report.satisfied, "{:?}", report);
        let theta = fit.extremal_coefficient().unwrap();
        prop_assert!((1.0 - 1e-9..=d as f64 + 1e-9).contains(&theta));
        for w in simplex_grid(d, 20).unwrap() {
            let v = fit.evaluate(&w).unwrap();
            prop_assert!(v >= w.max_coord() - 1e-8 && v <= 1.0 + 1e-10);
        }

        // any other feasible point, and the segment towards it, is no better
        let (_, other_values) = noisy_pilot(d, k, 1.0 - alpha * 0.5, &other_noise);
        let other = projector.project_values(&other_values, EstimatorKind::Madogram).unwrap();
        let problem = problem_of(&projector, &values);
        let best = objective(&problem, &fit.beta);
        for t in [1e-3, 0.05, 0.3, 1.0] {
            let mixed: Vec<f64> = fit.beta.iter().zip(&other.beta).map(|(a, b)| (1.0 - t) * a + t * b).collect();
            prop_assert!(check_feasible(&mixed, &problem.constraints, 1e-9).unwrap().satisfied);
            prop_assert!(best <= objective(&problem, &mixed) + 1e-12);
        }
        prop_assert!(best <= objective(&problem, &vec![1.0; fit.beta.len()]) + 1e-12);

        let refit = projector
            .project_values(&fit.evaluate_grid(projector.grid()).unwrap(), EstimatorKind::Madogram)
            .unwrap();
        for (a, b) in fit.beta.iter().zip(&refit.beta) {
            prop_assert!((a - b).abs() <= 1e-8);
        }
    }

    #[test]
    fn raising_feasible_coefficients_keeps_them_feasible(
        d in 2usize..=3,
        k in 2usize..=6,
        alpha in 0.1f64..1.0,
        noise in prop::collection::vec(-0.2f64..0.2, 1..40),
    ) {
        let (projector, values) = noisy_pilot(d, k, alpha, &noise);
        let fit = projector.project_values(&values, EstimatorKind::Madogram).unwrap();
        let raised = raise_degree(&fit.beta, d, k).unwrap();
        let report = check_feasible(&raised, &build_constraints(d, k + 1).unwrap(), 1e-9).unwrap();
        prop_assert!(report.satisfied, "{:?}", report);
    }
}
