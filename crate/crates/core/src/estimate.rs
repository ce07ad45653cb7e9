//! Empirical Fisher divergence: point estimates, loss/prior decomposition,
//! per-dimension contributions, and a finite-sample error diagnostic.

use crate::error::{Error, Result};
use crate::samples::{PrecomputedScores, SampleOrigin};
use crate::sum::{sum_with_mode, CompensatedSum, SummationMode};

/// The empirical divergence `(1/m) sum_i ||s_ref(theta_i) - s_cand(theta_i)||^2`
/// together with the per-draw terms it averaged.
#[derive(Debug, Clone, PartialEq)]
pub struct FdEstimate {
    /// Mean squared score difference; nonnegative.
    pub value: f64,
    /// Number of draws the mean ran over.
    pub m: usize,
    /// Per-draw squared score differences, in draw order.
    pub per_sample: Option<Vec<f64>>,
}

impl FdEstimate {
    /// Drops the per-draw terms, keeping only the summary.
    pub fn without_per_sample(mut self) -> Self {
        self.per_sample = None;
        self
    }
}

/// Which printed form the cross term follows. Only `WithFactor2` makes
/// `loss_term + prior_term + cross_term` reconstruct the total divergence;
/// `PaperLiteral` is the bare inner-product mean, reported alongside for
/// comparison with the literature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CrossConvention {
    #[default]
    WithFactor2,
    PaperLiteral,
}

/// Split of the divergence into a loss part, a prior part, and their
/// interaction.
#[derive(Debug, Clone, PartialEq)]
pub struct FdDecomposition {
    /// Mean squared loss-gradient difference; nonnegative.
    pub loss_term: f64,
    /// Mean squared prior-score difference; nonnegative.
    pub prior_term: f64,
    /// Interaction term under `cross_convention`; signed.
    pub cross_term: f64,
    pub cross_convention: CrossConvention,
}

impl FdDecomposition {
    /// The same decomposition expressed under another cross-term convention.
    /// The two conventions differ by a factor of -2: expanding the squared
    /// norm of `(prior diff) - (loss diff)` yields `-2 E[(loss diff)^T (prior diff)]`,
    /// while the literal form keeps the bare inner-product mean.
    pub fn to_convention(&self, convention: CrossConvention) -> Self {
        if convention == self.cross_convention {
            return self.clone();
        }
        let cross_term = match convention {
            CrossConvention::WithFactor2 => -2.0 * self.cross_term,
            CrossConvention::PaperLiteral => self.cross_term / -2.0,
        };
        Self {
            loss_term: self.loss_term,
            prior_term: self.prior_term,
            cross_term,
            cross_convention: convention,
        }
    }

    /// `loss + prior + cross`; equals the total divergence under
    /// [`CrossConvention::WithFactor2`].
    pub fn total(&self) -> f64 {
        self.loss_term + self.prior_term + self.cross_term
    }
}

/// Empirical Fisher divergence between two score matrices aligned to the
/// same draws. Row differences are squared and averaged in draw order with
/// compensated summation.
pub fn estimate_fd(
    ref_scores: &PrecomputedScores,
    cand_scores: &PrecomputedScores,
) -> Result<FdEstimate> {
    estimate_fd_with_mode(ref_scores, cand_scores, SummationMode::Compensated)
}

/// [`estimate_fd`] with an explicit summation mode.
pub fn estimate_fd_with_mode(
    ref_scores: &PrecomputedScores,
    cand_scores: &PrecomputedScores,
    mode: SummationMode,
) -> Result<FdEstimate> {
    check_same_shape(ref_scores, cand_scores)?;
    let m = ref_scores.len();
    let d = ref_scores.dim();
    let r = ref_scores.values();
    let c = cand_scores.values();
    let mut per_sample = Vec::with_capacity(m);
    for i in 0..m {
        let mut sq = 0.0;
        for j in 0..d {
            let diff = r[(i, j)] - c[(i, j)];
            sq += diff * diff;
        }
        per_sample.push(sq);
    }
    let value = sum_with_mode(per_sample.iter().copied(), mode) / m as f64;
    Ok(FdEstimate {
        value,
        m,
        per_sample: Some(per_sample),
    })
}

/// Decomposes the divergence into loss, prior, and interaction terms from
/// the four aligned score matrices. The `WithFactor2` cross term satisfies
/// `loss + prior + cross = total`.
pub fn decompose_fd(
    ref_loss_grads: &PrecomputedScores,
    cand_loss_grads: &PrecomputedScores,
    ref_prior_scores: &PrecomputedScores,
    cand_prior_scores: &PrecomputedScores,
) -> Result<FdDecomposition> {
    check_same_shape(ref_loss_grads, cand_loss_grads)?;
    check_same_shape(ref_loss_grads, ref_prior_scores)?;
    check_same_shape(ref_loss_grads, cand_prior_scores)?;
    let m = ref_loss_grads.len();
    let d = ref_loss_grads.dim();
    let (rl, cl) = (ref_loss_grads.values(), cand_loss_grads.values());
    let (rp, cp) = (ref_prior_scores.values(), cand_prior_scores.values());
    let mut loss_acc = CompensatedSum::new();
    let mut prior_acc = CompensatedSum::new();
    let mut dot_acc = CompensatedSum::new();
    for i in 0..m {
        let mut loss_sq = 0.0;
        let mut prior_sq = 0.0;
        let mut dot = 0.0;
        for j in 0..d {
            let a = rl[(i, j)] - cl[(i, j)];
            let b = rp[(i, j)] - cp[(i, j)];
            loss_sq += a * a;
            prior_sq += b * b;
            dot += a * b;
        }
        loss_acc.add(loss_sq);
        prior_acc.add(prior_sq);
        dot_acc.add(dot);
    }
    let mf = m as f64;
    Ok(FdDecomposition {
        loss_term: loss_acc.total() / mf,
        prior_term: prior_acc.total() / mf,
        cross_term: -2.0 * (dot_acc.total() / mf),
        cross_convention: CrossConvention::WithFactor2,
    })
}

/// Contribution of each dimension block to the divergence. `blocks` must
/// partition `0..d`; the contributions sum to the total divergence.
pub fn per_dimension_fd(
    ref_scores: &PrecomputedScores,
    cand_scores: &PrecomputedScores,
    blocks: &[Vec<usize>],
) -> Result<Vec<f64>> {
    check_same_shape(ref_scores, cand_scores)?;
    let d = ref_scores.dim();
    let mut seen = vec![false; d];
    for block in blocks {
        for &k in block {
            if k >= d {
                return Err(Error::InvalidArgument(format!(
                    "block index {k} out of range for dimension {d}"
                )));
            }
            if seen[k] {
                return Err(Error::InvalidArgument(format!(
                    "dimension {k} appears in more than one block"
                )));
            }
            seen[k] = true;
        }
    }
    if let Some(missing) = seen.iter().position(|&s| !s) {
        return Err(Error::InvalidArgument(format!(
            "dimension {missing} is not covered by any block"
        )));
    }
    let m = ref_scores.len();
    let r = ref_scores.values();
    let c = cand_scores.values();
    let mut out = Vec::with_capacity(blocks.len());
    for block in blocks {
        let mut acc = CompensatedSum::new();
        for i in 0..m {
            let mut sq = 0.0;
            for &k in block {
                let diff = r[(i, k)] - c[(i, k)];
                sq += diff * diff;
            }
            acc.add(sq);
        }
        out.push(acc.total() / m as f64);
    }
    Ok(out)
}

/// Heuristic finite-sample error bound `sqrt(C_hat) / (sqrt(m) delta)`.
///
/// `C_hat` is a plug-in estimate: the population variance of the per-draw
/// terms, inflated by an integrated-autocorrelation-time estimate when the
/// draws came from a Markov chain. This is a diagnostic, not a certified
/// constant: the true bound's constant is not computable from data.
pub fn chebyshev_error_bound(per_sample: &[f64], delta: f64, origin: SampleOrigin) -> Result<f64> {
    if per_sample.is_empty() {
        return Err(Error::InvalidArgument(
            "per-sample terms must be non-empty".into(),
        ));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    let m = per_sample.len();
    let mean = sum_with_mode(per_sample.iter().copied(), SummationMode::Compensated) / m as f64;
    let var = sum_with_mode(
        per_sample.iter().map(|&x| (x - mean) * (x - mean)),
        SummationMode::Compensated,
    ) / m as f64;
    let inflation = match origin {
        SampleOrigin::Iid => 1.0,
        SampleOrigin::Mcmc => integrated_autocorrelation_time(per_sample, mean, var),
    };
    Ok((var * inflation).sqrt() / ((m as f64).sqrt() * delta))
}

/// Truncated integrated autocorrelation time tau = 1 + 2 sum_k rho_k,
/// stopping at the first lag whose autocorrelation drops below 0.05.
fn integrated_autocorrelation_time(chain: &[f64], mean: f64, var: f64) -> f64 {
    let m = chain.len();
    if var <= 0.0 || m < 4 {
        return 1.0;
    }
    let max_lag = (m / 2).min(1000);
    let mut sum_rho = 0.0;
    for lag in 1..=max_lag {
        let cov: f64 = (0..m - lag)
            .map(|i| (chain[i] - mean) * (chain[i + lag] - mean))
            .sum::<f64>()
            / (m - lag) as f64;
        let rho = cov / var;
        if rho < 0.05 {
            break;
        }
        sum_rho += rho;
    }
    1.0 + 2.0 * sum_rho
}

fn check_same_shape(a: &PrecomputedScores, b: &PrecomputedScores) -> Result<()> {
    if a.len() != b.len() || a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(format!(
            "score matrices '{}' ({}x{}) and '{}' ({}x{}) are not aligned",
            a.label(),
            a.len(),
            a.dim(),
            b.label(),
            b.len(),
            b.dim()
        )));
    }
    Ok(())
}
