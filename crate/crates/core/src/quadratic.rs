//! The empirical divergence as an exact convex quadratic in the
//! hyperparameters.
//!
//! For a natural exponential-family prior and a loss that is linear in its
//! hyperparameters, the candidate posterior score is `J(theta) lambda +
//! grad log g(theta)` with the per-draw feature matrix
//! `J(theta) = [-grad_l(theta)^T, gradT(theta)^T]`. Substituting into the
//! empirical divergence and expanding the square gives
//!
//! ```text
//! rho(lambda) = lambda^T A lambda + b^T lambda + c
//! A = (1/m) sum_i J_i^T J_i
//! b = -(2/m) sum_i J_i^T (s_ref_i - grad log g_i)
//! c = (1/m) sum_i || s_ref_i - grad log g_i ||^2
//! ```
//!
//! `A` is a Gram matrix, hence positive semi-definite, so the objective is
//! convex. Building the form costs O(m d_lambda^2 d_theta); evaluating it
//! afterwards is O(d_lambda^2) per candidate, independent of m.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::samples::{PrecomputedScores, SampleSet};
use crate::scores::{ExpFamilyPrior, LinearLoss};
use crate::sum::CompensatedSum;

/// How the hyperparameter vector is laid out: loss coordinates first, then
/// prior natural-parameter coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockLayout {
    pub loss_dim: usize,
    pub prior_dim: usize,
}

impl BlockLayout {
    pub fn total(&self) -> usize {
        self.loss_dim + self.prior_dim
    }
}

/// Eigenvalue diagnostics of the quadratic's matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdMargin {
    pub min_eigenvalue: f64,
    pub spectral_norm: f64,
}

/// `lambda^T A lambda + b^T lambda + c` with `A` symmetric positive
/// semi-definite up to round-off. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticObjective {
    a: DMatrix<f64>,
    b: DVector<f64>,
    c: f64,
    layout: BlockLayout,
}

impl QuadraticObjective {
    /// Assembles an objective from parts, symmetrising `A`.
    pub fn from_parts(
        a: DMatrix<f64>,
        b: DVector<f64>,
        c: f64,
        layout: BlockLayout,
    ) -> Result<Self> {
        let d = b.len();
        if a.nrows() != d || a.ncols() != d {
            return Err(Error::DimensionMismatch(format!(
                "matrix is {}x{} but vector has length {d}",
                a.nrows(),
                a.ncols()
            )));
        }
        if layout.total() != d {
            return Err(Error::DimensionMismatch(format!(
                "block layout covers {} coordinates but the objective has {d}",
                layout.total()
            )));
        }
        let a = symmetrised(a);
        if a.iter().any(|x| !x.is_finite()) || b.iter().any(|x| !x.is_finite()) || !c.is_finite() {
            return Err(Error::NonFinite("quadratic objective coefficients".into()));
        }
        Ok(Self { a, b, c, layout })
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn layout(&self) -> BlockLayout {
        self.layout
    }

    /// Objective value at `lambda`. Values within round-off of zero are
    /// clamped to zero so downstream reports never show spurious negative
    /// divergences.
    pub fn evaluate(&self, lambda: &DVector<f64>) -> Result<f64> {
        if lambda.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "candidate has length {}, objective has dimension {}",
                lambda.len(),
                self.dim()
            )));
        }
        let raw = (lambda.transpose() * &self.a * lambda)[(0, 0)] + self.b.dot(lambda) + self.c;
        let guard = 1e-10 * (1.0 + self.c.abs());
        if raw < 0.0 && raw >= -guard {
            return Ok(0.0);
        }
        Ok(raw)
    }

    /// Gradient `2 A lambda + b`.
    pub fn gradient(&self, lambda: &DVector<f64>) -> Result<DVector<f64>> {
        if lambda.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "candidate has length {}, objective has dimension {}",
                lambda.len(),
                self.dim()
            )));
        }
        Ok(2.0 * &self.a * lambda + &self.b)
    }

    /// Extremal eigenvalues of `A`: dense symmetric solve for moderate
    /// dimensions, deterministic power iteration bounds above that.
    pub fn eigen_bounds(&self) -> (f64, f64) {
        symmetric_eigen_bounds(&self.a)
    }

    pub fn psd_margin(&self) -> PsdMargin {
        let (min, max) = self.eigen_bounds();
        PsdMargin {
            min_eigenvalue: min,
            spectral_norm: max.abs().max(min.abs()),
        }
    }
}

/// Joint objective over (lambda_L, lambda_pi) from reference-posterior
/// scores at the draws.
pub fn build_joint(
    samples: &SampleSet,
    prior: &ExpFamilyPrior,
    loss: &LinearLoss,
    ref_scores: &PrecomputedScores,
) -> Result<QuadraticObjective> {
    ref_scores.check_aligned(samples)?;
    check_dim(prior.dim_theta(), samples, "prior")?;
    check_dim(loss.dim_theta(), samples, "loss")?;
    let layout = BlockLayout {
        loss_dim: loss.dim_l(),
        prior_dim: prior.dim_t(),
    };
    accumulate(samples, ref_scores, layout, |theta, j| {
        let grads = loss.component_gradients(theta)?;
        let jac = prior.suff_stat_jacobian(theta)?;
        for col in 0..loss.dim_l() {
            for row in 0..samples.dim() {
                j[(row, col)] = -grads[(col, row)];
            }
        }
        for col in 0..prior.dim_t() {
            for row in 0..samples.dim() {
                j[(row, loss.dim_l() + col)] = jac[(col, row)];
            }
        }
        prior.base_log_grad(theta)
    })
}

/// Prior-only objective. `ref_prior_scores` must be reference *prior*
/// scores: with the loss held at its reference hyperparameters the loss
/// gradients cancel from the score difference, so only prior scores enter.
///
/// ```
/// use fd_sense_core::*;
/// use nalgebra::{DMatrix, DVector};
///
/// // Three posterior draws, reference prior N(0, 1) in natural form.
/// let samples = SampleSet::new(
///     DMatrix::from_vec(3, 1, vec![0.5, -0.2, 1.1]),
///     SampleOrigin::Iid,
/// )?;
/// let prior = ExpFamilyPrior::scalar_gaussian(0.0, -0.5);
/// let ref_scores = eval_scores_over_samples(&prior, &samples)?;
///
/// let objective = build_prior_only(&samples, &prior, &ref_scores)?;
/// // Zero divergence at the reference, positive away from it.
/// assert!(objective.evaluate(prior.natural())? < 1e-12);
/// assert!(objective.evaluate(&DVector::from_vec(vec![1.0, -0.25]))? > 0.0);
/// # Ok::<(), Error>(())
/// ```
pub fn build_prior_only(
    samples: &SampleSet,
    prior: &ExpFamilyPrior,
    ref_prior_scores: &PrecomputedScores,
) -> Result<QuadraticObjective> {
    ref_prior_scores.check_aligned(samples)?;
    check_dim(prior.dim_theta(), samples, "prior")?;
    let layout = BlockLayout {
        loss_dim: 0,
        prior_dim: prior.dim_t(),
    };
    accumulate(samples, ref_prior_scores, layout, |theta, j| {
        let jac = prior.suff_stat_jacobian(theta)?;
        for col in 0..prior.dim_t() {
            for row in 0..samples.dim() {
                j[(row, col)] = jac[(col, row)];
            }
        }
        prior.base_log_grad(theta)
    })
}

/// Loss-only objective, centred at the reference hyperparameters: its value
/// at `lambda` is `(lambda - lambda_ref)^T A_L (lambda - lambda_ref)`, zero
/// at the reference.
pub fn build_loss_only(
    samples: &SampleSet,
    loss: &LinearLoss,
    lambda_ref: &DVector<f64>,
) -> Result<QuadraticObjective> {
    check_dim(loss.dim_theta(), samples, "loss")?;
    if lambda_ref.len() != loss.dim_l() {
        return Err(Error::DimensionMismatch(format!(
            "reference hyperparameter has length {}, loss has {}",
            lambda_ref.len(),
            loss.dim_l()
        )));
    }
    let d_l = loss.dim_l();
    let m = samples.len();
    let mut a = DMatrix::zeros(d_l, d_l);
    for i in 0..m {
        let theta = samples.row(i);
        let grads = loss.component_gradients(&theta)?;
        if grads.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!(
                "loss gradients are not finite at sample row {i}"
            )));
        }
        a.gemm(1.0, &grads, &grads.transpose(), 1.0);
    }
    a /= m as f64;
    centred_objective(a, lambda_ref)
}

/// Loss-only objective for a scalar learning rate whose loss gradients were
/// computed externally: row i of `loss_grads` is the gradient of the scalar
/// loss component at draw i.
pub fn build_loss_only_precomputed(
    loss_grads: &PrecomputedScores,
    lambda_ref: f64,
) -> Result<QuadraticObjective> {
    let norms = loss_grads.row_norms_sq();
    let mut acc = CompensatedSum::new();
    for &n in &norms {
        acc.add(n);
    }
    let a = DMatrix::from_vec(1, 1, vec![acc.total() / norms.len() as f64]);
    centred_objective(a, &DVector::from_vec(vec![lambda_ref]))
}

fn centred_objective(a: DMatrix<f64>, lambda_ref: &DVector<f64>) -> Result<QuadraticObjective> {
    let b = -2.0 * &a * lambda_ref;
    let c = (lambda_ref.transpose() * &a * lambda_ref)[(0, 0)];
    QuadraticObjective::from_parts(
        a,
        b,
        c,
        BlockLayout {
            loss_dim: lambda_ref.len(),
            prior_dim: 0,
        },
    )
}

/// Shared Gram accumulation: `fill` writes J(theta) into the provided
/// buffer (d_theta x d_lambda) and returns grad log g(theta). Per-sample
/// contributions are added in draw order; `A` is symmetrised at the end to
/// remove round-off asymmetry from the rank updates.
fn accumulate(
    samples: &SampleSet,
    ref_scores: &PrecomputedScores,
    layout: BlockLayout,
    mut fill: impl FnMut(&DVector<f64>, &mut DMatrix<f64>) -> Result<DVector<f64>>,
) -> Result<QuadraticObjective> {
    let m = samples.len();
    let d_theta = samples.dim();
    let d_lambda = layout.total();
    let mut a = DMatrix::zeros(d_lambda, d_lambda);
    let mut b = DVector::zeros(d_lambda);
    let mut c_acc = CompensatedSum::new();
    let mut j = DMatrix::zeros(d_theta, d_lambda);
    for i in 0..m {
        let theta = samples.row(i);
        j.fill(0.0);
        let base_grad = fill(&theta, &mut j)?;
        if j.iter().any(|x| !x.is_finite()) || base_grad.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!(
                "score features are not finite at sample row {i}"
            )));
        }
        let residual = ref_scores.values().row(i).transpose() - base_grad;
        a.gemm_tr(1.0, &j, &j, 1.0);
        b.gemv_tr(1.0, &j, &residual, 1.0);
        c_acc.add(residual.norm_squared());
    }
    let mf = m as f64;
    a /= mf;
    b *= -2.0 / mf;
    let c = c_acc.total() / mf;
    QuadraticObjective::from_parts(a, b, c, layout)
}

fn check_dim(d: usize, samples: &SampleSet, what: &str) -> Result<()> {
    if d != samples.dim() {
        return Err(Error::DimensionMismatch(format!(
            "{what} is defined on dimension {d} but samples have dimension {}",
            samples.dim()
        )));
    }
    Ok(())
}

fn symmetrised(a: DMatrix<f64>) -> DMatrix<f64> {
    let at = a.transpose();
    (a + at) * 0.5
}

/// (min, max) eigenvalues of a symmetric matrix. Dense solve up to 256
/// dimensions; deterministic power iteration beyond that.
pub(crate) fn symmetric_eigen_bounds(a: &DMatrix<f64>) -> (f64, f64) {
    let n = a.nrows();
    if n == 0 {
        return (0.0, 0.0);
    }
    if n <= 256 {
        let eig = SymmetricEigen::new(a.clone());
        let min = eig
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        let max = eig
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        return (min, max);
    }
    // Power iteration from a fixed start vector bounds the extremes; the
    // shift-and-invert trick is avoided to keep this deterministic.
    let max = power_extreme(a, None);
    let min = max - power_extreme(&(DMatrix::identity(n, n) * max - a), None);
    (min, max)
}

fn power_extreme(a: &DMatrix<f64>, start: Option<DVector<f64>>) -> f64 {
    let n = a.nrows();
    let mut v = start.unwrap_or_else(|| DVector::from_element(n, 1.0 / (n as f64).sqrt()));
    let mut value = 0.0;
    for _ in 0..300 {
        let w = a * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v = w / norm;
        value = (v.transpose() * a * &v)[(0, 0)];
    }
    value
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samples::SampleOrigin;
    use crate::scores::eval_scores_over_samples;
    use nalgebra::{dmatrix, dvector};

    fn samples_1d(values: &[f64]) -> SampleSet {
        SampleSet::new(
            DMatrix::from_iterator(values.len(), 1, values.iter().copied()),
            SampleOrigin::Iid,
        )
        .unwrap()
    }

    #[test]
    fn evaluate_reference_cases() {
        let q = QuadraticObjective::from_parts(
            DMatrix::identity(2, 2),
            DVector::zeros(2),
            0.0,
            BlockLayout {
                loss_dim: 0,
                prior_dim: 2,
            },
        )
        .unwrap();
        assert_eq!(q.evaluate(&dvector![3.0, 4.0]).unwrap(), 25.0);
        assert_eq!(q.evaluate(&DVector::zeros(2)).unwrap(), 0.0);

        let q = QuadraticObjective::from_parts(
            DMatrix::zeros(1, 1),
            DVector::zeros(1),
            7.5,
            BlockLayout {
                loss_dim: 1,
                prior_dim: 0,
            },
        )
        .unwrap();
        assert_eq!(q.evaluate(&dvector![123.0]).unwrap(), 7.5);
    }

    #[test]
    fn evaluate_clamps_round_off_negatives() {
        let q = QuadraticObjective::from_parts(
            DMatrix::zeros(1, 1),
            DVector::zeros(1),
            -1e-12,
            BlockLayout {
                loss_dim: 1,
                prior_dim: 0,
            },
        )
        .unwrap();
        assert_eq!(q.evaluate(&dvector![0.0]).unwrap(), 0.0);

        let clearly_negative = QuadraticObjective::from_parts(
            DMatrix::zeros(1, 1),
            DVector::zeros(1),
            -0.5,
            BlockLayout {
                loss_dim: 1,
                prior_dim: 0,
            },
        )
        .unwrap();
        assert_eq!(clearly_negative.evaluate(&dvector![0.0]).unwrap(), -0.5);
    }

    #[test]
    fn prior_block_for_single_sample_at_origin() {
        let samples = samples_1d(&[0.0]);
        let prior = ExpFamilyPrior::scalar_gaussian(0.0, -0.5);
        let ref_scores = eval_scores_over_samples(&prior, &samples).unwrap();
        let q = build_prior_only(&samples, &prior, &ref_scores).unwrap();
        let expected = dmatrix![1.0, 0.0; 0.0, 0.0];
        assert!((q.a() - expected).norm() < 1e-14);
    }

    #[test]
    fn prior_gram_for_two_samples() {
        let samples = samples_1d(&[0.0, 1.0]);
        let prior = ExpFamilyPrior::scalar_gaussian(0.0, -0.5);
        let ref_scores = eval_scores_over_samples(&prior, &samples).unwrap();
        let q = build_prior_only(&samples, &prior, &ref_scores).unwrap();
        let expected = dmatrix![1.0, 1.0; 1.0, 2.0];
        assert!((q.a() - expected).norm() < 1e-14, "{}", q.a());
    }

    #[test]
    fn prior_only_objective_vanishes_at_reference() {
        let samples = samples_1d(&[0.3, -1.2, 2.4, 0.9]);
        let prior = ExpFamilyPrior::scalar_gaussian(0.125, -0.03125);
        let ref_scores = eval_scores_over_samples(&prior, &samples).unwrap();
        let q = build_prior_only(&samples, &prior, &ref_scores).unwrap();
        let at_ref = q.evaluate(prior.natural()).unwrap();
        assert!(at_ref.abs() < 1e-12, "{at_ref}");
    }

    #[test]
    fn loss_only_scalar_reference_case() {
        // grad l = 2 at every draw: A = 4, objective 4 (lambda - 1)^2.
        let samples = samples_1d(&[0.1, 0.2, 0.3]);
        let loss =
            LinearLoss::new(1, 1, |_t| DMatrix::from_vec(1, 1, vec![2.0]), dvector![1.0]).unwrap();
        let q = build_loss_only(&samples, &loss, &dvector![1.0]).unwrap();
        assert!((q.evaluate(&dvector![1.0]).unwrap()).abs() < 1e-14);
        assert!((q.evaluate(&dvector![3.0]).unwrap() - 16.0).abs() < 1e-12);
        assert!((q.evaluate(&dvector![0.5]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn loss_only_is_translation_centred() {
        let grads = PrecomputedScores::new(
            DMatrix::from_fn(20, 3, |i, j| ((i * 3 + j) % 7) as f64 * 0.3 - 0.8),
            "lg",
        )
        .unwrap();
        // Scalar case via precomputed rows.
        let q = build_loss_only_precomputed(&grads, 0.7).unwrap();
        for v in [0.05, 0.2, 1.3] {
            let plus = q.evaluate(&dvector![0.7 + v]).unwrap();
            let minus = q.evaluate(&dvector![0.7 - v]).unwrap();
            assert!(
                (plus - minus).abs() < 1e-10 * (1.0 + plus.abs()),
                "{plus} vs {minus}"
            );
        }
    }

    #[test]
    fn joint_matches_direct_path_on_small_gaussian_case() {
        let samples = samples_1d(&[0.5, -0.3, 1.7, 2.2, -1.1]);
        let prior = ExpFamilyPrior::scalar_gaussian(0.4, -0.2);
        let loss = LinearLoss::new(
            1,
            1,
            |t| DMatrix::from_vec(1, 1, vec![t[0] - 0.5]),
            dvector![1.0],
        )
        .unwrap();
        // Reference posterior scores: prior score minus loss gradient.
        let prior_scores = eval_scores_over_samples(&prior, &samples).unwrap();
        let loss_grads = eval_scores_over_samples(&loss, &samples).unwrap();
        let ref_post =
            PrecomputedScores::new(prior_scores.values() - loss_grads.values(), "ref posterior")
                .unwrap();
        let q = build_joint(&samples, &prior, &loss, &ref_post).unwrap();
        assert_eq!(q.dim(), 3);
        assert_eq!(
            q.layout(),
            BlockLayout {
                loss_dim: 1,
                prior_dim: 2
            }
        );

        // At the reference hyperparameters the divergence is zero.
        let lambda_ref = dvector![1.0, 0.4, -0.2];
        assert!(q.evaluate(&lambda_ref).unwrap().abs() < 1e-12);

        // At a perturbed candidate, compare against the direct estimator.
        for lambda in [dvector![1.5, 0.1, -0.4], dvector![0.2, -0.3, -0.05]] {
            let cand_prior = prior.with_natural(dvector![lambda[1], lambda[2]]).unwrap();
            let cand_loss = loss.with_lambda(dvector![lambda[0]]).unwrap();
            let cp = eval_scores_over_samples(&cand_prior, &samples).unwrap();
            let cl = eval_scores_over_samples(&cand_loss, &samples).unwrap();
            let cand_post =
                PrecomputedScores::new(cp.values() - cl.values(), "cand posterior").unwrap();
            let direct = crate::estimate::estimate_fd(&ref_post, &cand_post)
                .unwrap()
                .value;
            let viaq = q.evaluate(&lambda).unwrap();
            assert!(
                (viaq - direct).abs() <= 1e-10 * (1.0 + direct),
                "{viaq} vs {direct}"
            );
        }
    }

    #[test]
    fn constructed_matrices_are_psd_and_symmetric() {
        let samples = samples_1d(&[0.4, 1.9, -2.3, 0.0, 3.1, -0.7]);
        let prior = ExpFamilyPrior::scalar_gaussian(0.2, -0.1);
        let ref_scores = eval_scores_over_samples(&prior, &samples).unwrap();
        let q = build_prior_only(&samples, &prior, &ref_scores).unwrap();
        assert!((q.a() - q.a().transpose()).norm() < 1e-14);
        let margin = q.psd_margin();
        assert!(
            margin.min_eigenvalue >= -1e-10 * margin.spectral_norm,
            "{margin:?}"
        );
    }

    #[test]
    fn convexity_along_segments() {
        let samples = samples_1d(&[0.4, 1.9, -2.3, 0.0, 3.1, -0.7]);
        let prior = ExpFamilyPrior::scalar_gaussian(0.2, -0.1);
        let ref_scores = eval_scores_over_samples(&prior, &samples).unwrap();
        let q = build_prior_only(&samples, &prior, &ref_scores).unwrap();
        let l1 = dvector![0.9, -0.6];
        let l2 = dvector![-0.4, -0.02];
        for t in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let mid = &l1 * t + &l2 * (1.0 - t);
            let lhs = q.evaluate(&mid).unwrap();
            let rhs = t * q.evaluate(&l1).unwrap() + (1.0 - t) * q.evaluate(&l2).unwrap();
            assert!(lhs <= rhs + 1e-10, "t = {t}: {lhs} > {rhs}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let q = QuadraticObjective::from_parts(
            dmatrix![2.0, 0.3; 0.3, 1.0],
            dvector![0.5, -1.0],
            0.7,
            BlockLayout {
                loss_dim: 0,
                prior_dim: 2,
            },
        )
        .unwrap();
        let lambda = dvector![0.8, -0.4];
        let g = q.gradient(&lambda).unwrap();
        let h = 1e-6;
        for k in 0..2 {
            let mut up = lambda.clone();
            let mut dn = lambda.clone();
            up[k] += h;
            dn[k] -= h;
            let fd = (q.evaluate(&up).unwrap() - q.evaluate(&dn).unwrap()) / (2.0 * h);
            assert!((g[k] - fd).abs() < 1e-6, "component {k}");
        }
    }

    #[test]
    fn dimension_mismatches_are_rejected() {
        let samples = samples_1d(&[0.0, 1.0]);
        let prior = ExpFamilyPrior::scalar_gaussian(0.0, -0.5);
        let wrong = PrecomputedScores::new(DMatrix::zeros(3, 1), "wrong").unwrap();
        assert!(build_prior_only(&samples, &prior, &wrong).is_err());
        let q = build_prior_only(
            &samples,
            &prior,
            &eval_scores_over_samples(&prior, &samples).unwrap(),
        )
        .unwrap();
        assert!(q.evaluate(&dvector![0.0]).is_err());
    }
}
