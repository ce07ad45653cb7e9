//! Built-in univariate conjugate Gaussian study.
//!
//! Regenerates a fully synthetic prior-sensitivity run from a seed: 100
//! observations from N(3, 2^2), reference prior N(2, 4^2), conjugate
//! posterior, 2000 independent posterior draws. Sensitivity is measured
//! over the polytope of Gaussian priors with mean in [-10, 10] and
//! standard deviation in [2, 5], whose natural-parameter vertices are
//! (-2.5, -0.125), (-0.4, -0.02), (2.5, -0.125), (0.4, 0.02). The report
//! carries the worst-case vertex and an objective surface over the
//! moment parametrisation for plotting.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use fd_sense_core::{
    build_prior_only, conjugate_posterior, eval_scores_over_samples, gaussian_moment_from_natural,
    grid_points, sup_over_vertices, unconstrained_min, ExpFamilyPrior, GaussianDist,
    PolytopeNeighborhood,
};

use crate::report::{Curve, ResultsSection, SensitivityReport};
use crate::{CliError, CliResult};

const N_OBS: usize = 100;
const THETA_TRUE: f64 = 3.0;
const NOISE_SD: f64 = 2.0;
const PRIOR_MEAN: f64 = 2.0;
const PRIOR_SD: f64 = 4.0;
const N_DRAWS: usize = 2000;

/// Natural-parameter vertices of the demo neighbourhood.
pub const DEMO_VERTICES: [[f64; 2]; 4] =
    [[-2.5, -0.125], [-0.4, -0.02], [2.5, -0.125], [0.4, 0.02]];

pub fn gaussian_demo(seed: u64) -> CliResult<SensitivityReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Synthetic dataset and its sufficient summary.
    let noise = GaussianDist::scalar(THETA_TRUE, NOISE_SD * NOISE_SD)
        .map_err(|e| CliError::numeric_in("demo data", e))?;
    let data = noise
        .sample_iid(&mut rng, N_OBS)
        .map_err(|e| CliError::numeric_in("demo data", e))?;
    let xbar = data.draws().column(0).sum() / N_OBS as f64;

    let lambda_0 = PRIOR_MEAN / (PRIOR_SD * PRIOR_SD);
    let lambda_1 = -0.5 / (PRIOR_SD * PRIOR_SD);
    let posterior = conjugate_posterior(
        &DVector::from_vec(vec![lambda_0]),
        &DMatrix::from_vec(1, 1, vec![lambda_1]),
        &DMatrix::from_vec(1, 1, vec![NOISE_SD * NOISE_SD]),
        &DVector::from_vec(vec![xbar]),
        N_OBS,
    )
    .map_err(|e| CliError::numeric_in("demo posterior", e))?;

    let samples = posterior
        .sample_iid(&mut rng, N_DRAWS)
        .map_err(|e| CliError::numeric_in("demo draws", e))?;

    let ref_prior = ExpFamilyPrior::scalar_gaussian(lambda_0, lambda_1);
    let ref_prior_scores = eval_scores_over_samples(&ref_prior, &samples)
        .map_err(|e| CliError::numeric_in("demo prior scores", e))?;
    let q = build_prior_only(&samples, &ref_prior, &ref_prior_scores)
        .map_err(|e| CliError::numeric_in("demo objective", e))?;

    let vertex_rows: Vec<Vec<f64>> = DEMO_VERTICES.iter().map(|v| v.to_vec()).collect();
    let polytope = PolytopeNeighborhood::from_rows(&vertex_rows)
        .map_err(|e| CliError::numeric_in("demo polytope", e))?;
    let (sup_arg, sup_value) =
        sup_over_vertices(&q, &polytope).map_err(|e| CliError::numeric_in("demo supremum", e))?;

    // The reference prior sits inside the neighbourhood, so the infimum is
    // the unconstrained minimum (which recovers the reference, value zero).
    let inf_arg = unconstrained_min(&q);
    let inf_value = q
        .evaluate(&inf_arg)
        .map_err(|e| CliError::numeric_in("demo infimum", e))?;

    let mut report = SensitivityReport::new("gaussian_demo");
    report.inputs.m = Some(N_DRAWS);
    report.inputs.d_theta = Some(1);
    report.inputs.d_lambda = Some(2);
    report.results = Some(ResultsSection {
        sup_value,
        inf_value,
        sensitivity: sup_value - inf_value,
        sup_arg: sup_arg.iter().copied().collect(),
        inf_arg: inf_arg.iter().copied().collect(),
        iterations: 0,
        converged: true,
        sup_evaluations: polytope.count(),
        per_block: None,
    });

    let margin = q.psd_margin();
    report.diagnostics.psd_min_eigenvalue = Some(margin.min_eigenvalue);
    report.diagnostics.psd_spectral_norm = Some(margin.spectral_norm);
    report.diagnostics.converged = Some(true);

    // Objective surface over the moment parametrisation: one curve in the
    // prior mean per prior standard deviation.
    for sigma in [2.0, 2.75, 3.5, 4.25, 5.0] {
        let var = sigma * sigma;
        let points = grid_points(-10.0, 10.0, 41)
            .into_iter()
            .map(|mu| {
                let lam = DVector::from_vec(vec![mu / var, -0.5 / var]);
                q.evaluate(&lam).map(|v| [mu, v])
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::numeric_in("demo surface", e))?;
        report.curves.push(Curve {
            name: format!("mu_sigma_{sigma}"),
            points,
        });
    }

    let sup_index = DEMO_VERTICES
        .iter()
        .position(|v| v[0] == sup_arg[0] && v[1] == sup_arg[1])
        .unwrap_or(usize::MAX);
    report
        .annotations
        .insert("sup_vertex_index".into(), sup_index.to_string());
    report
        .annotations
        .insert("sample_mean".into(), format!("{xbar}"));
    if let Ok((mean, cov)) = gaussian_moment_from_natural(
        &DVector::from_vec(vec![sup_arg[0]]),
        &DMatrix::from_vec(1, 1, vec![sup_arg[1]]),
    ) {
        report
            .annotations
            .insert("sup_prior_mean".into(), format!("{}", mean[0]));
        report
            .annotations
            .insert("sup_prior_sd".into(), format!("{}", cov[(0, 0)].sqrt()));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn demo_is_deterministic_per_seed() {
        let a = gaussian_demo(7).unwrap();
        let b = gaussian_demo(7).unwrap();
        assert_eq!(a, b);
        let c = gaussian_demo(8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn demo_selects_the_far_corner() {
        // The worst-case prior pushes the mean to -10 with the tightest
        // scale, which is the first listed vertex.
        let r = gaussian_demo(1).unwrap();
        let res = r.results.unwrap();
        assert_eq!(res.sup_arg, vec![-2.5, -0.125]);
        assert_eq!(r.annotations["sup_vertex_index"], "0");
        assert_eq!(r.annotations["sup_prior_mean"], "-10");
        assert_eq!(r.annotations["sup_prior_sd"], "2");
        assert!(res.inf_value.abs() < 1e-9, "{}", res.inf_value);
        assert!(res.sup_value > 1.0);
        assert_eq!(res.sup_evaluations, 4);
    }

    #[test]
    fn demo_surface_has_five_sigma_slices() {
        let r = gaussian_demo(1).unwrap();
        assert_eq!(r.curves.len(), 5);
        assert!(r.curves.iter().all(|c| c.points.len() == 41));
        // The slice at sigma = 2 attains the supremum at mu = -10.
        let slice = &r.curves[0];
        assert_eq!(slice.name, "mu_sigma_2");
        let at_minus_10 = slice.points[0];
        assert_eq!(at_minus_10[0], -10.0);
        assert!((at_minus_10[1] - r.results.unwrap().sup_value).abs() < 1e-12);
    }
}
