//! Property tests for the algebraic invariants of the estimator stack.

use fd_sense_core::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn finite_vals(n: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(lo..hi, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn scalar_gaussian_score_agrees_with_finite_differences(
        l0 in -3.0..3.0f64,
        l1 in -3.0..-0.02f64,
        theta in -4.0..4.0f64,
    ) {
        let prior = ExpFamilyPrior::scalar_gaussian(l0, l1);
        let point = DVector::from_vec(vec![theta]);
        let score = expfam_prior_score(&prior, &point).unwrap()[0];
        let h = 1e-5;
        let logp = |t: f64| l0 * t + l1 * t * t;
        let fd = (logp(theta + h) - logp(theta - h)) / (2.0 * h);
        prop_assert!((score - fd).abs() <= 1e-5 * (1.0 + fd.abs()),
            "score {score} vs finite difference {fd}");
    }

    #[test]
    fn inverse_gamma_score_agrees_with_finite_differences(
        a in 0.5..6.0f64,
        b in 0.1..3.0f64,
        sigma in 0.2..4.0f64,
    ) {
        let prior = ExpFamilyPrior::inv_gamma(a, b).unwrap();
        let point = DVector::from_vec(vec![sigma]);
        let score = expfam_prior_score(&prior, &point).unwrap()[0];
        let h = 1e-6 * sigma;
        let logp = |s: f64| -(a + 1.0) * s.ln() - b / s;
        let fd = (logp(sigma + h) - logp(sigma - h)) / (2.0 * h);
        prop_assert!((score - fd).abs() <= 1e-5 * (1.0 + fd.abs()),
            "score {score} vs finite difference {fd}");
    }

    #[test]
    fn gaussian_natural_moment_round_trip(
        d in 1usize..=10,
        seedvals in finite_vals(110, -1.0, 1.0),
        meanvals in finite_vals(10, -5.0, 5.0),
    ) {
        let g = DMatrix::from_fn(d, d, |i, j| seedvals[i * 10 + j]);
        let cov = &g * g.transpose() + DMatrix::<f64>::identity(d, d);
        let mean = DVector::from_fn(d, |i, _| meanvals[i]);

        let flat = gaussian_natural_from_moment(&mean, &cov).unwrap();
        let (l0, l1) = split_gaussian_natural(&flat, d).unwrap();
        let (mean_back, cov_back) = gaussian_moment_from_natural(&l0, &l1).unwrap();

        for i in 0..d {
            prop_assert!((mean_back[i] - mean[i]).abs() <= 1e-12 * (1.0 + mean[i].abs()));
            for j in 0..d {
                prop_assert!(
                    (cov_back[(i, j)] - cov[(i, j)]).abs() <= 1e-12 * (1.0 + cov[(i, j)].abs()),
                    "cov mismatch at ({i},{j}): {} vs {}", cov_back[(i, j)], cov[(i, j)]
                );
            }
        }
    }

    #[test]
    fn copula_score_swaps_components_with_coordinates(
        lam in -0.95..0.95f64,
        ti in 0.01..0.99f64,
        tj in 0.01..0.99f64,
    ) {
        let c = GaussianCopulaScore::new(2, (0, 1), lam).unwrap();
        let fwd = copula_score(&c, &DVector::from_vec(vec![ti, tj])).unwrap();
        let rev = copula_score(&c, &DVector::from_vec(vec![tj, ti])).unwrap();
        prop_assert!((fwd[0] - rev[1]).abs() <= 1e-10 * (1.0 + fwd[0].abs()));
        prop_assert!((fwd[1] - rev[0]).abs() <= 1e-10 * (1.0 + fwd[1].abs()));
    }

    #[test]
    fn estimate_is_nonnegative_and_zero_only_on_identical_rows(
        rows in 1usize..=8,
        cols in 1usize..=4,
        vals in finite_vals(32, -10.0, 10.0),
        bump in prop::option::of((0usize..8, 0usize..4, 0.001..5.0f64)),
    ) {
        let a = DMatrix::from_fn(rows, cols, |i, j| vals[i * 4 + j]);
        let mut b = a.clone();
        let mut expect_zero = true;
        if let Some((bi, bj, delta)) = bump {
            let (bi, bj) = (bi % rows, bj % cols);
            b[(bi, bj)] += delta;
            expect_zero = false;
        }
        let pa = PrecomputedScores::new(a, "a").unwrap();
        let pb = PrecomputedScores::new(b, "b").unwrap();
        let est = estimate_fd(&pa, &pb).unwrap();
        prop_assert!(est.value >= 0.0);
        if expect_zero {
            prop_assert_eq!(est.value, 0.0);
        } else {
            prop_assert!(est.value > 0.0);
        }
    }

    #[test]
    fn decomposition_reconstructs_the_total(
        rows in 1usize..=12,
        cols in 1usize..=4,
        v1 in finite_vals(48, -4.0, 4.0),
        v2 in finite_vals(48, -4.0, 4.0),
        v3 in finite_vals(48, -4.0, 4.0),
        v4 in finite_vals(48, -4.0, 4.0),
    ) {
        let mk = |v: &Vec<f64>, label: &str| {
            PrecomputedScores::new(DMatrix::from_fn(rows, cols, |i, j| v[i * 4 + j]), label).unwrap()
        };
        let rl = mk(&v1, "rl");
        let cl = mk(&v2, "cl");
        let rp = mk(&v3, "rp");
        let cp = mk(&v4, "cp");
        let dec = decompose_fd(&rl, &cl, &rp, &cp).unwrap();

        let ref_post = PrecomputedScores::new(rp.values() - rl.values(), "ref post").unwrap();
        let cand_post = PrecomputedScores::new(cp.values() - cl.values(), "cand post").unwrap();
        let total = estimate_fd(&ref_post, &cand_post).unwrap().value;
        prop_assert!(
            (dec.total() - total).abs() <= 1e-10 * total.abs().max(1.0),
            "decomposition total {} vs direct {}", dec.total(), total
        );
        prop_assert!(dec.loss_term >= 0.0 && dec.prior_term >= 0.0);
    }

    #[test]
    fn per_dimension_contributions_sum_to_the_total(
        rows in 1usize..=10,
        cols in 2usize..=4,
        v1 in finite_vals(40, -4.0, 4.0),
        v2 in finite_vals(40, -4.0, 4.0),
    ) {
        let a = PrecomputedScores::new(DMatrix::from_fn(rows, cols, |i, j| v1[i * 4 + j]), "a").unwrap();
        let b = PrecomputedScores::new(DMatrix::from_fn(rows, cols, |i, j| v2[i * 4 + j]), "b").unwrap();
        let blocks: Vec<Vec<usize>> = (0..cols).map(|k| vec![k]).collect();
        let parts = per_dimension_fd(&a, &b, &blocks).unwrap();
        let total = estimate_fd(&a, &b).unwrap().value;
        let sum: f64 = parts.iter().sum();
        prop_assert!((sum - total).abs() <= 1e-12 * total.abs().max(1.0));
    }

    #[test]
    fn vertex_supremum_dominates_interior_points(
        avals in finite_vals(4, -1.0, 1.0),
        bvals in finite_vals(2, -2.0, 2.0),
        weights in finite_vals(4, 0.0, 1.0),
    ) {
        // PSD 2x2 via Gram of a random 2x2.
        let g = DMatrix::from_fn(2, 2, |i, j| avals[i * 2 + j]);
        let a = &g * g.transpose();
        let q = QuadraticObjective::from_parts(
            a,
            DVector::from_vec(bvals.clone()),
            0.4,
            BlockLayout { loss_dim: 0, prior_dim: 2 },
        ).unwrap();
        let b = BoxNeighborhood::new(
            DVector::from_vec(vec![-1.0, -0.5]),
            DVector::from_vec(vec![0.8, 1.2]),
        ).unwrap();
        let verts = box_vertices(&b).unwrap();
        let (_, sup) = sup_over_vertices(&q, &verts).unwrap();
        // Random interior point as a convex combination of the corners.
        let wsum: f64 = weights.iter().sum::<f64>().max(1e-12);
        let mut point = DVector::zeros(2);
        for k in 0..4 {
            point += verts.vertex(k) * (weights[k] / wsum);
        }
        prop_assert!(q.evaluate(&point).unwrap() <= sup + 1e-10);
    }

    #[test]
    fn learning_rate_sensitivity_is_exactly_squared_in_epsilon(
        norms in prop::collection::vec(0.0..50.0f64, 1..40),
        eps in 0.0..2.0f64,
    ) {
        let s1 = learning_rate_sensitivity(&norms, eps).unwrap();
        let s2 = learning_rate_sensitivity(&norms, 2.0 * eps).unwrap();
        prop_assert_eq!(s2, 4.0 * s1);
    }

    #[test]
    fn posterior_score_degenerate_identities(
        theta in finite_vals(3, -5.0, 5.0),
        scale in -2.0..2.0f64,
    ) {
        let point = DVector::from_vec(theta);
        let linear = FnScoreField::new(3, move |t| t * scale);
        let zero = ZeroScore(3);
        let via_prior = posterior_score(&linear, &zero, &point).unwrap();
        prop_assert_eq!(via_prior, linear.eval(&point).unwrap());
        let via_loss = posterior_score(&zero, &linear, &point).unwrap();
        prop_assert_eq!(via_loss, -linear.eval(&point).unwrap());
    }
}
