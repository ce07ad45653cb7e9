//! Score-function building blocks.
//!
//! A score field maps a parameter point to the gradient of some log density
//! at that point. Posterior scores decompose as prior score minus loss
//! gradient, so the estimators downstream only ever need these two pieces,
//! evaluated at reference-posterior draws.
//!
//! Exponential-family priors get a dedicated type because their score is
//! linear in the natural parameters, which is what makes the divergence an
//! exact convex quadratic in the hyperparameters (see [`crate::quadratic`]).

use std::fmt;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::normal::{norm_pdf, norm_ppf};
use crate::samples::{PrecomputedScores, SampleSet};
use crate::sum::CompensatedSum;

type VecFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
type MatFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// A deterministic map from a parameter point to a score vector of fixed
/// dimension. Implementations must be pure: same input, same output.
pub trait ScoreField: Send + Sync {
    /// Parameter dimension d_theta.
    fn dim(&self) -> usize;

    /// Score at `theta`. Errors on points outside the field's support.
    fn eval(&self, theta: &DVector<f64>) -> Result<DVector<f64>>;
}

/// The identically-zero score (flat log density).
#[derive(Debug, Clone, Copy)]
pub struct ZeroScore(pub usize);

impl ScoreField for ZeroScore {
    fn dim(&self) -> usize {
        self.0
    }

    fn eval(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        check_point_dim(self.0, theta)?;
        Ok(DVector::zeros(self.0))
    }
}

/// A score field backed by an arbitrary closure. This is the escape hatch
/// for priors outside the exponential family (for instance a half-Cauchy
/// scale prior, whose score is -2*sigma/(1+sigma^2)).
#[derive(Clone)]
pub struct FnScoreField {
    dim: usize,
    f: VecFn,
}

impl FnScoreField {
    pub fn new(
        dim: usize,
        f: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            f: Arc::new(f),
        }
    }
}

impl fmt::Debug for FnScoreField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnScoreField")
            .field("dim", &self.dim)
            .finish()
    }
}

impl ScoreField for FnScoreField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        check_point_dim(self.dim, theta)?;
        let out = (self.f)(theta);
        if out.len() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "score closure returned length {}, expected {}",
                out.len(),
                self.dim
            )));
        }
        Ok(out)
    }
}

/// Generalised-posterior score: prior score minus loss gradient.
pub fn posterior_score(
    prior: &dyn ScoreField,
    loss_grad: &dyn ScoreField,
    theta: &DVector<f64>,
) -> Result<DVector<f64>> {
    if prior.dim() != loss_grad.dim() {
        return Err(Error::DimensionMismatch(format!(
            "prior score has dimension {} but loss gradient has dimension {}",
            prior.dim(),
            loss_grad.dim()
        )));
    }
    let s = prior.eval(theta)? - loss_grad.eval(theta)?;
    check_finite_vec(&s, || {
        format!("posterior score at theta = {}", fmt_point(theta))
    })?;
    Ok(s)
}

/// Natural exponential-family prior: density proportional to
/// `exp(lambda^T T(theta)) * g(theta)`.
///
/// Holds the sufficient statistic `T`, its Jacobian (row k is the gradient
/// of `T_k`), the gradient of `log g`, and the natural parameter vector.
/// The log-partition function never enters any score, so it is not stored.
#[derive(Clone)]
pub struct ExpFamilyPrior {
    d_theta: usize,
    d_t: usize,
    natural: DVector<f64>,
    suff_stat: VecFn,
    suff_stat_jac: MatFn,
    base_log_grad: VecFn,
}

impl fmt::Debug for ExpFamilyPrior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExpFamilyPrior")
            .field("d_theta", &self.d_theta)
            .field("d_t", &self.d_t)
            .field("natural", &self.natural)
            .finish()
    }
}

impl ExpFamilyPrior {
    pub fn new(
        d_theta: usize,
        d_t: usize,
        natural: DVector<f64>,
        suff_stat: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        suff_stat_jac: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
        base_log_grad: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Result<Self> {
        if natural.len() != d_t {
            return Err(Error::DimensionMismatch(format!(
                "natural parameter has length {}, expected d_t = {}",
                natural.len(),
                d_t
            )));
        }
        Ok(Self {
            d_theta,
            d_t,
            natural,
            suff_stat: Arc::new(suff_stat),
            suff_stat_jac: Arc::new(suff_stat_jac),
            base_log_grad: Arc::new(base_log_grad),
        })
    }

    /// Multivariate Gaussian family in moment parametrisation. The natural
    /// parameters are laid out as the lambda_0 block followed by Lambda_1 in
    /// row-major order; the sufficient statistic is (theta, vec(theta theta^T)).
    pub fn gaussian(mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<Self> {
        let natural = gaussian_natural_from_moment(mean, cov)?;
        Self::gaussian_from_natural(mean.len(), natural)
    }

    /// Multivariate Gaussian family given flattened natural parameters
    /// (lambda_0 block first, then Lambda_1 row-major).
    pub fn gaussian_from_natural(d: usize, natural: DVector<f64>) -> Result<Self> {
        if natural.len() != d + d * d {
            return Err(Error::DimensionMismatch(format!(
                "Gaussian natural vector for d = {d} must have length {}, got {}",
                d + d * d,
                natural.len()
            )));
        }
        Self::new(
            d,
            d + d * d,
            natural,
            move |theta| {
                let mut t = DVector::zeros(d + d * d);
                for i in 0..d {
                    t[i] = theta[i];
                }
                for i in 0..d {
                    for j in 0..d {
                        t[d + i * d + j] = theta[i] * theta[j];
                    }
                }
                t
            },
            move |theta| {
                let mut jac = DMatrix::zeros(d + d * d, d);
                for i in 0..d {
                    jac[(i, i)] = 1.0;
                }
                for i in 0..d {
                    for j in 0..d {
                        // d(theta_i theta_j)/d theta_k = delta_ki theta_j + delta_kj theta_i
                        jac[(d + i * d + j, i)] += theta[j];
                        jac[(d + i * d + j, j)] += theta[i];
                    }
                }
                jac
            },
            move |_| DVector::zeros(d),
        )
    }

    /// Scalar Gaussian family: sufficient statistic (theta, theta^2),
    /// natural parameters (mu/sigma^2, -1/(2 sigma^2)).
    pub fn scalar_gaussian(lambda_0: f64, lambda_1: f64) -> Self {
        Self::gaussian_from_natural(1, DVector::from_vec(vec![lambda_0, lambda_1]))
            .expect("length 2 is always valid for d = 1")
    }

    /// Inverse-gamma family on a single positive parameter: sufficient
    /// statistic (log sigma, 1/sigma), natural parameters (-(a+1), -b).
    pub fn inv_gamma(shape: f64, rate: f64) -> Result<Self> {
        let (l1, l2) = invgamma_natural_from_shape_rate(shape, rate)?;
        Ok(Self::inv_gamma_from_natural(l1, l2))
    }

    /// Inverse-gamma family given natural parameters directly. The support
    /// is the positive half-line; evaluations at sigma <= 0 surface as
    /// non-finite-output errors.
    pub fn inv_gamma_from_natural(lambda_1: f64, lambda_2: f64) -> Self {
        Self::new(
            1,
            2,
            DVector::from_vec(vec![lambda_1, lambda_2]),
            |theta| {
                if theta[0] > 0.0 {
                    DVector::from_vec(vec![theta[0].ln(), theta[0].recip()])
                } else {
                    DVector::from_element(2, f64::NAN)
                }
            },
            |theta| {
                if theta[0] > 0.0 {
                    DMatrix::from_vec(2, 1, vec![theta[0].recip(), -theta[0].recip().powi(2)])
                } else {
                    DMatrix::from_element(2, 1, f64::NAN)
                }
            },
            |_| DVector::zeros(1),
        )
        .expect("length 2 is always valid for d_t = 2")
    }

    /// Product of independent single-coordinate families. Block k acts on
    /// coordinate `coords[k]` of the full parameter vector; the natural
    /// vector, sufficient statistic, and Jacobian are concatenations in
    /// block order.
    pub fn product(d_theta: usize, blocks: Vec<(usize, ExpFamilyPrior)>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::InvalidArgument(
                "product prior needs at least one block".into(),
            ));
        }
        for (coord, block) in &blocks {
            if *coord >= d_theta {
                return Err(Error::InvalidArgument(format!(
                    "block coordinate {coord} out of range for d_theta = {d_theta}"
                )));
            }
            if block.d_theta != 1 {
                return Err(Error::InvalidArgument(
                    "product blocks must be single-coordinate families".into(),
                ));
            }
        }
        let d_t: usize = blocks.iter().map(|(_, b)| b.d_t).sum();
        let natural = DVector::from_iterator(
            d_t,
            blocks.iter().flat_map(|(_, b)| b.natural.iter().copied()),
        );
        let blocks = Arc::new(blocks);
        let b1 = Arc::clone(&blocks);
        let b2 = Arc::clone(&blocks);
        let b3 = Arc::clone(&blocks);
        Self::new(
            d_theta,
            d_t,
            natural,
            move |theta| {
                let mut out = DVector::zeros(d_t);
                let mut offset = 0;
                for (coord, block) in b1.iter() {
                    let sub = DVector::from_vec(vec![theta[*coord]]);
                    let t = (block.suff_stat)(&sub);
                    out.rows_mut(offset, block.d_t).copy_from(&t);
                    offset += block.d_t;
                }
                out
            },
            move |theta| {
                let mut jac = DMatrix::zeros(d_t, d_theta);
                let mut offset = 0;
                for (coord, block) in b2.iter() {
                    let sub = DVector::from_vec(vec![theta[*coord]]);
                    let j = (block.suff_stat_jac)(&sub);
                    for r in 0..block.d_t {
                        jac[(offset + r, *coord)] = j[(r, 0)];
                    }
                    offset += block.d_t;
                }
                jac
            },
            move |theta| {
                let mut g = DVector::zeros(d_theta);
                for (coord, block) in b3.iter() {
                    let sub = DVector::from_vec(vec![theta[*coord]]);
                    g[*coord] += (block.base_log_grad)(&sub)[0];
                }
                g
            },
        )
    }

    /// Same family with the natural parameter vector replaced.
    pub fn with_natural(&self, natural: DVector<f64>) -> Result<Self> {
        if natural.len() != self.d_t {
            return Err(Error::DimensionMismatch(format!(
                "natural parameter has length {}, expected d_t = {}",
                natural.len(),
                self.d_t
            )));
        }
        let mut out = self.clone();
        out.natural = natural;
        Ok(out)
    }

    /// Validation hook for user-supplied families: checks that the
    /// Jacobian closure agrees with central finite differences of the
    /// sufficient statistic at each given interior point, to `rel_tol`
    /// relative accuracy. Built-in families satisfy this by construction;
    /// hand-written closures should be run through it once in their tests.
    pub fn check_suff_stat_consistency(&self, points: &[DVector<f64>], rel_tol: f64) -> Result<()> {
        for theta in points {
            let jac = self.suff_stat_jacobian(theta)?;
            for coord in 0..self.d_theta {
                let h = 1e-6 * (1.0 + theta[coord].abs());
                let mut up = theta.clone();
                let mut dn = theta.clone();
                up[coord] += h;
                dn[coord] -= h;
                let fd = (self.suff_stat(&up)? - self.suff_stat(&dn)?) / (2.0 * h);
                for k in 0..self.d_t {
                    let diff = (jac[(k, coord)] - fd[k]).abs();
                    if diff > rel_tol * (1.0 + fd[k].abs()) {
                        return Err(Error::InvalidArgument(format!(
                            "sufficient-statistic Jacobian disagrees with finite differences \
                             at theta = {}, component {k}, coordinate {coord}: {} vs {}",
                            fmt_point(theta),
                            jac[(k, coord)],
                            fd[k]
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn dim_theta(&self) -> usize {
        self.d_theta
    }

    pub fn dim_t(&self) -> usize {
        self.d_t
    }

    pub fn natural(&self) -> &DVector<f64> {
        &self.natural
    }

    /// Sufficient statistic T(theta).
    pub fn suff_stat(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        check_point_dim(self.d_theta, theta)?;
        let t = (self.suff_stat)(theta);
        if t.len() != self.d_t {
            return Err(Error::DimensionMismatch(format!(
                "sufficient statistic returned length {}, expected {}",
                t.len(),
                self.d_t
            )));
        }
        Ok(t)
    }

    /// Jacobian of T at theta: row k is the gradient of T_k.
    pub fn suff_stat_jacobian(&self, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_point_dim(self.d_theta, theta)?;
        let j = (self.suff_stat_jac)(theta);
        if j.nrows() != self.d_t || j.ncols() != self.d_theta {
            return Err(Error::DimensionMismatch(format!(
                "sufficient-statistic Jacobian is {}x{}, expected {}x{}",
                j.nrows(),
                j.ncols(),
                self.d_t,
                self.d_theta
            )));
        }
        Ok(j)
    }

    /// Gradient of log g at theta.
    pub fn base_log_grad(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        check_point_dim(self.d_theta, theta)?;
        let g = (self.base_log_grad)(theta);
        if g.len() != self.d_theta {
            return Err(Error::DimensionMismatch(format!(
                "base-measure log gradient returned length {}, expected {}",
                g.len(),
                self.d_theta
            )));
        }
        Ok(g)
    }
}

impl ScoreField for ExpFamilyPrior {
    fn dim(&self) -> usize {
        self.d_theta
    }

    fn eval(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        expfam_prior_score(self, theta)
    }
}

/// Prior score of a natural exponential-family prior:
/// `gradT(theta)^T lambda + grad log g(theta)`.
pub fn expfam_prior_score(prior: &ExpFamilyPrior, theta: &DVector<f64>) -> Result<DVector<f64>> {
    let jac = prior.suff_stat_jacobian(theta)?;
    let score = jac.transpose() * &prior.natural + prior.base_log_grad(theta)?;
    check_finite_vec(&score, || {
        format!(
            "exponential-family prior score at theta = {}",
            fmt_point(theta)
        )
    })?;
    Ok(score)
}

/// Loss that is linear in its hyperparameters:
/// `L(theta; x, lambda) = lambda^T l(theta; x)`, so the loss gradient in
/// theta is `grad_l(theta)^T lambda` with `grad_l` the d_l x d_theta matrix
/// whose row k is the gradient of l_k.
#[derive(Clone)]
pub struct LinearLoss {
    d_theta: usize,
    d_l: usize,
    grad_l: MatFn,
    lambda_l: DVector<f64>,
}

impl fmt::Debug for LinearLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinearLoss")
            .field("d_theta", &self.d_theta)
            .field("d_l", &self.d_l)
            .field("lambda_l", &self.lambda_l)
            .finish()
    }
}

impl LinearLoss {
    pub fn new(
        d_theta: usize,
        d_l: usize,
        grad_l: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
        lambda_l: DVector<f64>,
    ) -> Result<Self> {
        if lambda_l.len() != d_l {
            return Err(Error::DimensionMismatch(format!(
                "loss hyperparameter has length {}, expected d_l = {}",
                lambda_l.len(),
                d_l
            )));
        }
        Ok(Self {
            d_theta,
            d_l,
            grad_l: Arc::new(grad_l),
            lambda_l,
        })
    }

    pub fn dim_theta(&self) -> usize {
        self.d_theta
    }

    pub fn dim_l(&self) -> usize {
        self.d_l
    }

    pub fn lambda(&self) -> &DVector<f64> {
        &self.lambda_l
    }

    pub fn with_lambda(&self, lambda_l: DVector<f64>) -> Result<Self> {
        if lambda_l.len() != self.d_l {
            return Err(Error::DimensionMismatch(format!(
                "loss hyperparameter has length {}, expected d_l = {}",
                lambda_l.len(),
                self.d_l
            )));
        }
        let mut out = self.clone();
        out.lambda_l = lambda_l;
        Ok(out)
    }

    /// The d_l x d_theta matrix of component gradients at theta.
    pub fn component_gradients(&self, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_point_dim(self.d_theta, theta)?;
        let g = (self.grad_l)(theta);
        if g.nrows() != self.d_l || g.ncols() != self.d_theta {
            return Err(Error::DimensionMismatch(format!(
                "loss gradient matrix is {}x{}, expected {}x{}",
                g.nrows(),
                g.ncols(),
                self.d_l,
                self.d_theta
            )));
        }
        Ok(g)
    }
}

impl ScoreField for LinearLoss {
    fn dim(&self) -> usize {
        self.d_theta
    }

    /// Evaluates the full loss gradient `grad_l(theta)^T lambda_L`.
    fn eval(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        let g = self.component_gradients(theta)?;
        Ok(g.transpose() * &self.lambda_l)
    }
}

/// Natural parameters of a Gaussian from moment parameters, flattened as
/// the lambda_0 = Sigma^{-1} mu block followed by Lambda_1 = -Sigma^{-1}/2
/// in row-major order.
pub fn gaussian_natural_from_moment(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    let d = mean.len();
    let prec = spd_inverse(cov, "covariance")?;
    let lambda_0 = &prec * mean;
    let mut out = DVector::zeros(d + d * d);
    for i in 0..d {
        out[i] = lambda_0[i];
    }
    for i in 0..d {
        for j in 0..d {
            out[d + i * d + j] = -0.5 * prec[(i, j)];
        }
    }
    Ok(out)
}

/// Moment parameters from Gaussian natural parameters. Requires -2 Lambda_1
/// symmetric positive definite; round-trips with
/// [`gaussian_natural_from_moment`] to 1e-12.
pub fn gaussian_moment_from_natural(
    lambda_0: &DVector<f64>,
    lambda_1: &DMatrix<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let d = lambda_0.len();
    if lambda_1.nrows() != d || lambda_1.ncols() != d {
        return Err(Error::DimensionMismatch(format!(
            "Lambda_1 is {}x{}, expected {d}x{d}",
            lambda_1.nrows(),
            lambda_1.ncols()
        )));
    }
    let prec = -2.0 * lambda_1;
    let cov = spd_inverse(&prec, "-2 Lambda_1")?;
    let mean = &cov * lambda_0;
    Ok((mean, cov))
}

/// Splits a flattened Gaussian natural vector into (lambda_0, Lambda_1).
pub fn split_gaussian_natural(
    flat: &DVector<f64>,
    d: usize,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if flat.len() != d + d * d {
        return Err(Error::DimensionMismatch(format!(
            "flattened Gaussian natural vector has length {}, expected {}",
            flat.len(),
            d + d * d
        )));
    }
    let lambda_0 = DVector::from_iterator(d, (0..d).map(|i| flat[i]));
    let lambda_1 = DMatrix::from_fn(d, d, |i, j| flat[d + i * d + j]);
    Ok((lambda_0, lambda_1))
}

/// Inverse-gamma natural parameters (-(a+1), -b) from shape and rate.
pub fn invgamma_natural_from_shape_rate(shape: f64, rate: f64) -> Result<(f64, f64)> {
    if !(shape > 0.0) || !(rate > 0.0) {
        return Err(Error::Domain(format!(
            "inverse-gamma shape and rate must be positive, got a = {shape}, b = {rate}"
        )));
    }
    Ok((-(shape + 1.0), -rate))
}

/// Gaussian copula perturbation on one coordinate pair: it injects
/// correlation `lambda_c` between coordinates `pair.0` and `pair.1` while
/// leaving all marginals untouched. Coordinates must live in (0, 1).
#[derive(Debug, Clone, Copy)]
pub struct GaussianCopulaScore {
    dim: usize,
    pair: (usize, usize),
    lambda_c: f64,
}

impl GaussianCopulaScore {
    pub fn new(dim: usize, pair: (usize, usize), lambda_c: f64) -> Result<Self> {
        if pair.0 == pair.1 || pair.0 >= dim || pair.1 >= dim {
            return Err(Error::InvalidArgument(format!(
                "copula pair ({}, {}) must be distinct indices below dim = {dim}",
                pair.0, pair.1
            )));
        }
        if !(lambda_c.abs() < 1.0) {
            return Err(Error::Domain(format!(
                "copula correlation must satisfy |lambda_c| < 1, got {lambda_c}"
            )));
        }
        Ok(Self {
            dim,
            pair,
            lambda_c,
        })
    }

    pub fn lambda_c(&self) -> f64 {
        self.lambda_c
    }

    pub fn pair(&self) -> (usize, usize) {
        self.pair
    }

    pub fn with_lambda(&self, lambda_c: f64) -> Result<Self> {
        Self::new(self.dim, self.pair, lambda_c)
    }
}

impl ScoreField for GaussianCopulaScore {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        copula_score(self, theta)
    }
}

/// Score of the Gaussian copula density: zero except at the paired
/// coordinates, where with z = Phi^{-1}(theta):
///
/// ```text
/// d/d theta_i log c = (lambda z_j - lambda^2 z_i) / ((1 - lambda^2) phi(z_i))
/// ```
///
/// and symmetrically for j.
pub fn copula_score(c: &GaussianCopulaScore, theta: &DVector<f64>) -> Result<DVector<f64>> {
    check_point_dim(c.dim, theta)?;
    let (i, j) = c.pair;
    let (ti, tj) = (theta[i], theta[j]);
    for (idx, t) in [(i, ti), (j, tj)] {
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::Domain(format!(
                "copula coordinate {idx} must lie in (0, 1), got {t}"
            )));
        }
    }
    let zi = norm_ppf(ti)?;
    let zj = norm_ppf(tj)?;
    let lam = c.lambda_c;
    let denom = 1.0 - lam * lam;
    let mut out = DVector::zeros(c.dim);
    out[i] = (lam * zj - lam * lam * zi) / (denom * norm_pdf(zi));
    out[j] = (lam * zi - lam * lam * zj) / (denom * norm_pdf(zj));
    check_finite_vec(&out, || {
        format!("copula score at theta = {}", fmt_point(theta))
    })?;
    Ok(out)
}

/// The empirical divergence objective of a copula perturbation as a
/// function of lambda_c, with the quantile transforms of the draws
/// precomputed once. The reference prior score cancels, so the objective
/// is the mean squared norm of the copula score itself.
#[derive(Debug, Clone)]
pub struct CopulaObjective {
    z_i: Vec<f64>,
    z_j: Vec<f64>,
    pdf_i: Vec<f64>,
    pdf_j: Vec<f64>,
}

impl CopulaObjective {
    pub fn new(samples: &SampleSet, pair: (usize, usize)) -> Result<Self> {
        if pair.0 == pair.1 || pair.0 >= samples.dim() || pair.1 >= samples.dim() {
            return Err(Error::InvalidArgument(format!(
                "copula pair ({}, {}) must be distinct indices below dim = {}",
                pair.0,
                pair.1,
                samples.dim()
            )));
        }
        let m = samples.len();
        let mut z_i = Vec::with_capacity(m);
        let mut z_j = Vec::with_capacity(m);
        for row in 0..m {
            for col in [pair.0, pair.1] {
                let t = samples.draws()[(row, col)];
                if !(t > 0.0 && t < 1.0) {
                    return Err(Error::Domain(format!(
                        "copula coordinate {col} must lie in (0, 1), got {t} at sample row {row}"
                    )));
                }
            }
            z_i.push(norm_ppf(samples.draws()[(row, pair.0)])?);
            z_j.push(norm_ppf(samples.draws()[(row, pair.1)])?);
        }
        let pdf_i = z_i.iter().map(|&z| norm_pdf(z)).collect();
        let pdf_j = z_j.iter().map(|&z| norm_pdf(z)).collect();
        Ok(Self {
            z_i,
            z_j,
            pdf_i,
            pdf_j,
        })
    }

    /// Mean squared norm of the copula score over the draws.
    pub fn value(&self, lambda_c: f64) -> Result<f64> {
        let per_sample = self.per_sample_values(lambda_c)?;
        let mut acc = CompensatedSum::new();
        for v in &per_sample {
            acc.add(*v);
        }
        Ok(acc.total() / per_sample.len() as f64)
    }

    /// Squared copula-score norm per draw, in draw order.
    pub fn per_sample_values(&self, lambda_c: f64) -> Result<Vec<f64>> {
        if !(lambda_c.abs() < 1.0) {
            return Err(Error::Domain(format!(
                "copula correlation must satisfy |lambda_c| < 1, got {lambda_c}"
            )));
        }
        let denom = 1.0 - lambda_c * lambda_c;
        let mut out = Vec::with_capacity(self.z_i.len());
        for k in 0..self.z_i.len() {
            let gi = (lambda_c * self.z_j[k] - lambda_c * lambda_c * self.z_i[k])
                / (denom * self.pdf_i[k]);
            let gj = (lambda_c * self.z_i[k] - lambda_c * lambda_c * self.z_j[k])
                / (denom * self.pdf_j[k]);
            out.push(gi * gi + gj * gj);
        }
        Ok(out)
    }
}

/// Evaluates a score field at every draw. Row i of the result is the score
/// at draw i; evaluation order never affects the values because rows are
/// independent.
pub fn eval_scores_over_samples(
    field: &dyn ScoreField,
    samples: &SampleSet,
) -> Result<PrecomputedScores> {
    if field.dim() != samples.dim() {
        return Err(Error::DimensionMismatch(format!(
            "score field has dimension {} but samples have dimension {}",
            field.dim(),
            samples.dim()
        )));
    }
    let m = samples.len();
    let d = samples.dim();
    let mut values = DMatrix::zeros(m, d);
    for i in 0..m {
        let theta = samples.row(i);
        let s = field.eval(&theta).map_err(|e| {
            Error::NonFinite(format!("score evaluation failed at sample row {i}: {e}"))
        })?;
        for j in 0..d {
            if !s[j].is_finite() {
                return Err(Error::NonFinite(format!(
                    "score evaluation produced a non-finite value at sample row {i}, column {j}"
                )));
            }
            values[(i, j)] = s[j];
        }
    }
    PrecomputedScores::new(values, "evaluated")
}

fn check_point_dim(dim: usize, theta: &DVector<f64>) -> Result<()> {
    if theta.len() != dim {
        return Err(Error::DimensionMismatch(format!(
            "parameter point has length {}, expected {}",
            theta.len(),
            dim
        )));
    }
    Ok(())
}

fn check_finite_vec(v: &DVector<f64>, ctx: impl Fn() -> String) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(ctx()));
    }
    Ok(())
}

fn fmt_point(theta: &DVector<f64>) -> String {
    let coords: Vec<String> = theta.iter().map(|x| format!("{x}")).collect();
    format!("({})", coords.join(", "))
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub(crate) fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    check_spd_shape(m, what)?;
    Cholesky::new(m.clone())
        .map(|ch| ch.inverse())
        .ok_or_else(|| Error::Domain(format!("{what} matrix is not positive definite")))
}

pub(crate) fn check_spd_shape(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{what} matrix is {}x{}, expected square",
            m.nrows(),
            m.ncols()
        )));
    }
    let scale = m.iter().fold(0.0f64, |a, &x| a.max(x.abs())).max(1.0);
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-10 * scale {
                return Err(Error::Domain(format!("{what} matrix is not symmetric")));
            }
        }
    }
    Ok(())
}
