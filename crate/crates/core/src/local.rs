//! Local (directional) sensitivity of the empirical divergence in
//! hyperparameter space.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::samples::{PrecomputedScores, SampleSet};
use crate::scores::ExpFamilyPrior;
use crate::sum::CompensatedSum;

type JacFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// Jacobian of the prior score with respect to the hyperparameters,
/// evaluated pointwise: theta -> d_theta x d_lambda matrix.
///
/// For exponential-family candidates the prior score is linear in the
/// natural parameters, so the Jacobian is `gradT(theta)^T` independent of
/// lambda.
#[derive(Clone)]
pub struct ScoreJacobianField {
    d_theta: usize,
    d_lambda: usize,
    eval: JacFn,
}

impl fmt::Debug for ScoreJacobianField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScoreJacobianField")
            .field("d_theta", &self.d_theta)
            .field("d_lambda", &self.d_lambda)
            .finish()
    }
}

impl ScoreJacobianField {
    pub fn new(
        d_theta: usize,
        d_lambda: usize,
        eval: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            d_theta,
            d_lambda,
            eval: Arc::new(eval),
        }
    }

    /// The score Jacobian of an exponential-family prior: `gradT(theta)^T`.
    pub fn from_expfam(prior: &ExpFamilyPrior) -> Self {
        let p = prior.clone();
        Self::new(prior.dim_theta(), prior.dim_t(), move |theta| {
            p.suff_stat_jacobian(theta)
                .expect("sufficient-statistic Jacobian evaluation")
                .transpose()
        })
    }

    pub fn dim_theta(&self) -> usize {
        self.d_theta
    }

    pub fn dim_lambda(&self) -> usize {
        self.d_lambda
    }

    pub fn eval(&self, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        let j = (self.eval)(theta);
        if j.nrows() != self.d_theta || j.ncols() != self.d_lambda {
            return Err(Error::DimensionMismatch(format!(
                "score Jacobian is {}x{}, expected {}x{}",
                j.nrows(),
                j.ncols(),
                self.d_theta,
                self.d_lambda
            )));
        }
        if j.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("score Jacobian entries".into()));
        }
        Ok(j)
    }
}

/// Directional derivative of the empirical divergence along the unit
/// direction `v` in hyperparameter space:
///
/// ```text
/// -(2/m) sum_i (s_ref(theta_i) - s_cand(theta_i))^T J_s(theta_i) v
/// ```
///
/// where `cand_scores` are the candidate posterior scores at the current
/// hyperparameters and `jac` is the prior-score Jacobian there.
pub fn directional_derivative(
    samples: &SampleSet,
    ref_scores: &PrecomputedScores,
    cand_scores: &PrecomputedScores,
    jac: &ScoreJacobianField,
    v: &DVector<f64>,
) -> Result<f64> {
    ref_scores.check_aligned(samples)?;
    cand_scores.check_aligned(samples)?;
    if jac.dim_theta() != samples.dim() {
        return Err(Error::DimensionMismatch(format!(
            "score Jacobian is defined on dimension {} but samples have dimension {}",
            jac.dim_theta(),
            samples.dim()
        )));
    }
    if v.len() != jac.dim_lambda() {
        return Err(Error::DimensionMismatch(format!(
            "direction has length {}, hyperparameter space has dimension {}",
            v.len(),
            jac.dim_lambda()
        )));
    }
    if (v.norm() - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidArgument(format!(
            "direction must be a unit vector, got norm {}",
            v.norm()
        )));
    }
    let m = samples.len();
    let mut acc = CompensatedSum::new();
    for i in 0..m {
        let theta = samples.row(i);
        let j = jac.eval(&theta)?;
        let dir = &j * v;
        let diff = ref_scores.values().row(i) - cand_scores.values().row(i);
        acc.add(diff.transpose().dot(&dir));
    }
    Ok(-2.0 * acc.total() / m as f64)
}
