//! Closed-form conjugate Gaussian machinery.
//!
//! Gaussian likelihood with known noise covariance plus Gaussian prior gives
//! a Gaussian posterior in closed form, and the Fisher divergence, KL
//! divergence, and 2-Wasserstein distance between two Gaussians are all
//! analytic. These serve as oracles for the Monte Carlo estimators and as
//! diagnostics in reports.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::samples::{SampleOrigin, SampleSet};
use crate::scores::{check_spd_shape, spd_inverse, ScoreField};

/// A Gaussian distribution with symmetric positive definite covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDist {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl GaussianDist {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::DimensionMismatch(format!(
                "covariance is {}x{} but mean has length {}",
                cov.nrows(),
                cov.ncols(),
                mean.len()
            )));
        }
        check_spd_shape(&cov, "covariance")?;
        if Cholesky::new(cov.clone()).is_none() {
            return Err(Error::Domain(
                "covariance matrix is not positive definite".into(),
            ));
        }
        Ok(Self { mean, cov })
    }

    pub fn scalar(mean: f64, var: f64) -> Result<Self> {
        Self::new(
            DVector::from_vec(vec![mean]),
            DMatrix::from_vec(1, 1, vec![var]),
        )
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// The score field of this Gaussian: theta -> -Sigma^{-1}(theta - mu).
    pub fn score_field(&self) -> GaussianScoreField {
        GaussianScoreField {
            mean: self.mean.clone(),
            precision: spd_inverse(&self.cov, "covariance").expect("validated SPD at construction"),
        }
    }

    /// m independent draws, deterministic given the generator state.
    pub fn sample_iid<R: Rng + ?Sized>(&self, rng: &mut R, m: usize) -> Result<SampleSet> {
        let d = self.dim();
        let chol = Cholesky::new(self.cov.clone())
            .ok_or_else(|| Error::Domain("covariance matrix is not positive definite".into()))?;
        let l = chol.l();
        let mut draws = DMatrix::zeros(m, d);
        let mut z = DVector::zeros(d);
        for i in 0..m {
            for k in 0..d {
                z[k] = rng.sample(StandardNormal);
            }
            let x = &self.mean + &l * &z;
            for j in 0..d {
                draws[(i, j)] = x[j];
            }
        }
        SampleSet::new(draws, SampleOrigin::Iid)
    }
}

/// Score field of a fixed Gaussian, with the precision matrix precomputed.
#[derive(Debug, Clone)]
pub struct GaussianScoreField {
    mean: DVector<f64>,
    precision: DMatrix<f64>,
}

impl ScoreField for GaussianScoreField {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn eval(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        if theta.len() != self.mean.len() {
            return Err(Error::DimensionMismatch(format!(
                "parameter point has length {}, expected {}",
                theta.len(),
                self.mean.len()
            )));
        }
        Ok(-(&self.precision * (theta - &self.mean)))
    }
}

/// Conjugate Gaussian posterior from prior natural parameters
/// (lambda_0, Lambda_1), likelihood noise covariance, sample mean, and
/// sample count: Sigma_n = (-2 Lambda_1 + n Sigma_l^{-1})^{-1} and
/// mu_n = Sigma_n (lambda_0 + n Sigma_l^{-1} xbar). With n = 0 this
/// recovers the prior in moment form.
pub fn conjugate_posterior(
    lambda_0: &DVector<f64>,
    lambda_1: &DMatrix<f64>,
    sigma_l: &DMatrix<f64>,
    xbar: &DVector<f64>,
    n: usize,
) -> Result<GaussianDist> {
    let d = lambda_0.len();
    if lambda_1.nrows() != d || lambda_1.ncols() != d || xbar.len() != d {
        return Err(Error::DimensionMismatch(
            "conjugate update inputs must share one dimension".into(),
        ));
    }
    let noise_prec = spd_inverse(sigma_l, "likelihood noise covariance")?;
    let posterior_prec = -2.0 * lambda_1 + n as f64 * &noise_prec;
    let cov = spd_inverse(&posterior_prec, "posterior precision")?;
    let mean = &cov * (lambda_0 + n as f64 * &noise_prec * xbar);
    GaussianDist::new(mean, cov)
}

/// Fisher divergence FD(p || q) between Gaussians, in closed form:
/// `|| Sigma_q^{-1} (mu_q - mu_p) ||^2 + tr((Sigma_q^{-1} - Sigma_p^{-1})^2 Sigma_p)`.
/// The expectation is under p, so this is not symmetric in (p, q).
pub fn fd_gaussian(p: &GaussianDist, q: &GaussianDist) -> Result<f64> {
    check_same_dim(p, q)?;
    let prec_p = spd_inverse(p.cov(), "p covariance")?;
    let prec_q = spd_inverse(q.cov(), "q covariance")?;
    let mean_term = (&prec_q * (q.mean() - p.mean())).norm_squared();
    let diff = &prec_q - &prec_p;
    let trace_term = (&diff * &diff * p.cov()).trace();
    Ok(mean_term + trace_term)
}

/// Kullback-Leibler divergence KL(p || q) between Gaussians.
pub fn kl_gaussian(p: &GaussianDist, q: &GaussianDist) -> Result<f64> {
    check_same_dim(p, q)?;
    let d = p.dim() as f64;
    let prec_q = spd_inverse(q.cov(), "q covariance")?;
    let dm = q.mean() - p.mean();
    let trace = (&prec_q * p.cov()).trace();
    let quad = (dm.transpose() * &prec_q * &dm)[(0, 0)];
    let logdet = spd_log_det(q.cov())? - spd_log_det(p.cov())?;
    Ok(0.5 * (trace + quad - d + logdet))
}

/// 2-Wasserstein distance W2(p, q) between Gaussians (the distance itself,
/// not its square). Symmetric in (p, q).
pub fn w2_gaussian(p: &GaussianDist, q: &GaussianDist) -> Result<f64> {
    check_same_dim(p, q)?;
    let mean_term = (p.mean() - q.mean()).norm_squared();
    let sq = spd_sqrt(q.cov())?;
    let inner = spd_sqrt(&(&sq * p.cov() * &sq))?;
    let trace_term = (p.cov() + q.cov() - 2.0 * inner).trace();
    // Round-off can push an exactly-zero trace term slightly negative.
    Ok((mean_term + trace_term).max(0.0).sqrt())
}

fn check_same_dim(p: &GaussianDist, q: &GaussianDist) -> Result<()> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch(format!(
            "distributions have dimensions {} and {}",
            p.dim(),
            q.dim()
        )));
    }
    Ok(())
}

fn spd_log_det(m: &DMatrix<f64>) -> Result<f64> {
    let chol = Cholesky::new(m.clone())
        .ok_or_else(|| Error::Domain("matrix is not positive definite".into()))?;
    Ok(2.0 * chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>())
}

/// Symmetric square root via eigendecomposition, clipping round-off
/// negatives to zero.
fn spd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(m.clone());
    let vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn std_normal() -> GaussianDist {
        GaussianDist::scalar(0.0, 1.0).unwrap()
    }

    #[test]
    fn conjugate_update_reference_cases() {
        // n = 0 recovers the prior in moment form.
        let prior = conjugate_posterior(
            &dvector![0.125],
            &dmatrix![-0.03125],
            &dmatrix![4.0],
            &dvector![0.0],
            0,
        )
        .unwrap();
        assert!((prior.mean()[0] - 2.0).abs() < 1e-12);
        assert!((prior.cov()[(0, 0)] - 16.0).abs() < 1e-12);

        // Standard normal prior, one unit-noise observation at 1.
        let post = conjugate_posterior(
            &dvector![0.0],
            &dmatrix![-0.5],
            &dmatrix![1.0],
            &dvector![1.0],
            1,
        )
        .unwrap();
        assert!((post.mean()[0] - 0.5).abs() < 1e-12);
        assert!((post.cov()[(0, 0)] - 0.5).abs() < 1e-12);

        // Reference prior N(2, 16), noise sd 2, n = 100: posterior variance
        // is (1/16 + 25)^{-1}.
        let post = conjugate_posterior(
            &dvector![0.125],
            &dmatrix![-0.03125],
            &dmatrix![4.0],
            &dvector![3.0],
            100,
        )
        .unwrap();
        assert!((post.cov()[(0, 0)] - 1.0 / (1.0 / 16.0 + 25.0)).abs() < 1e-12);
    }

    #[test]
    fn fd_reference_values() {
        let p = std_normal();
        assert_eq!(fd_gaussian(&p, &p).unwrap(), 0.0);

        let q = GaussianDist::scalar(1.0, 1.0).unwrap();
        assert!((fd_gaussian(&p, &q).unwrap() - 1.0).abs() < 1e-12);

        let wide = GaussianDist::scalar(0.0, 2.0).unwrap();
        assert!((fd_gaussian(&p, &wide).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn fd_specialises_to_equal_mean_and_equal_cov_forms() {
        let p = GaussianDist::new(dvector![1.0, 2.0], dmatrix![2.0, 0.3; 0.3, 1.5]).unwrap();
        let q_cov = GaussianDist::new(dvector![1.0, 2.0], dmatrix![1.0, 0.0; 0.0, 3.0]).unwrap();
        let prec_p = spd_inverse(p.cov(), "p").unwrap();
        let prec_q = spd_inverse(q_cov.cov(), "q").unwrap();
        let diff = &prec_q - &prec_p;
        let expected = (&diff * &diff * p.cov()).trace();
        assert!((fd_gaussian(&p, &q_cov).unwrap() - expected).abs() < 1e-12);

        let q_mean = GaussianDist::new(dvector![0.0, 4.0], p.cov().clone()).unwrap();
        let expected = (&prec_p * (q_mean.mean() - p.mean())).norm_squared();
        assert!((fd_gaussian(&p, &q_mean).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn kl_reference_values() {
        let p = std_normal();
        assert_eq!(kl_gaussian(&p, &p).unwrap(), 0.0);

        let q = GaussianDist::scalar(1.0, 1.0).unwrap();
        assert!((kl_gaussian(&p, &q).unwrap() - 0.5).abs() < 1e-12);

        // q variance e^2: KL = (e^{-2} - 1 + 2) / 2.
        let q = GaussianDist::scalar(0.0, std::f64::consts::E.powi(2)).unwrap();
        let expected = 0.5 * ((-2.0f64).exp() - 1.0 + 2.0);
        assert!((kl_gaussian(&p, &q).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn kl_nonnegative_and_zero_iff_equal() {
        let p = GaussianDist::new(dvector![0.5, -1.0], dmatrix![1.2, 0.2; 0.2, 0.8]).unwrap();
        let q = GaussianDist::new(dvector![0.4, -1.1], dmatrix![1.0, 0.1; 0.1, 0.9]).unwrap();
        assert!(kl_gaussian(&p, &q).unwrap() > 0.0);
        assert!(kl_gaussian(&p, &p).unwrap().abs() < 1e-14);
    }

    #[test]
    fn w2_reference_values() {
        let p = std_normal();
        assert_eq!(w2_gaussian(&p, &p).unwrap(), 0.0);

        let shifted = GaussianDist::scalar(3.0, 1.0).unwrap();
        assert!((w2_gaussian(&p, &shifted).unwrap() - 3.0).abs() < 1e-12);

        let wide = GaussianDist::scalar(0.0, 4.0).unwrap();
        assert!((w2_gaussian(&p, &wide).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn w2_is_symmetric() {
        let p = GaussianDist::new(dvector![0.0, 1.0], dmatrix![2.0, 0.4; 0.4, 1.0]).unwrap();
        let q = GaussianDist::new(dvector![1.0, -1.0], dmatrix![0.7, -0.1; -0.1, 1.3]).unwrap();
        let a = w2_gaussian(&p, &q).unwrap();
        let b = w2_gaussian(&q, &p).unwrap();
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }

    #[test]
    fn score_field_reference_values() {
        let p = std_normal();
        let f = p.score_field();
        assert_eq!(f.eval(&dvector![2.0]).unwrap()[0], -2.0);

        let g = GaussianDist::new(dvector![1.5, -0.5], dmatrix![2.0, 0.5; 0.5, 1.0]).unwrap();
        let at_mode = g.score_field().eval(&dvector![1.5, -0.5]).unwrap();
        assert!(at_mode.norm() < 1e-14);
    }

    #[test]
    fn score_field_matches_log_density_finite_differences() {
        let g = GaussianDist::new(dvector![0.3, -0.7], dmatrix![1.5, 0.4; 0.4, 0.9]).unwrap();
        let prec = spd_inverse(g.cov(), "cov").unwrap();
        let logp = |t: &DVector<f64>| {
            let d = t - g.mean();
            -0.5 * (d.transpose() * &prec * &d)[(0, 0)]
        };
        let theta = dvector![1.1, 0.2];
        let s = g.score_field().eval(&theta).unwrap();
        let h = 1e-6;
        for k in 0..2 {
            let mut up = theta.clone();
            let mut dn = theta.clone();
            up[k] += h;
            dn[k] -= h;
            let fd = (logp(&up) - logp(&dn)) / (2.0 * h);
            assert!((s[k] - fd).abs() < 1e-6, "component {k}");
        }
    }

    #[test]
    fn sampling_is_deterministic_given_seed() {
        let g = GaussianDist::new(dvector![1.0, 2.0], dmatrix![1.0, 0.2; 0.2, 2.0]).unwrap();
        let a = g.sample_iid(&mut ChaCha8Rng::seed_from_u64(7), 50).unwrap();
        let b = g.sample_iid(&mut ChaCha8Rng::seed_from_u64(7), 50).unwrap();
        assert_eq!(a.draws(), b.draws());
    }

    #[test]
    fn rejects_non_spd_covariance() {
        assert!(GaussianDist::scalar(0.0, -1.0).is_err());
        assert!(GaussianDist::new(dvector![0.0, 0.0], dmatrix![1.0, 2.0; 2.0, 1.0]).is_err());
    }
}
