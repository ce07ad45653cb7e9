//! Posterior draws and score matrices aligned to them.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Provenance of the reference-posterior draws. Draws are weighted uniformly
/// either way; the origin only informs the error diagnostic, which inflates
/// its variance estimate by an autocorrelation factor for Markov chains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleOrigin {
    Iid,
    Mcmc,
}

/// An m x d_theta matrix of draws from the reference posterior: the sole
/// stochastic input to every estimator in this crate.
#[derive(Debug, Clone)]
pub struct SampleSet {
    draws: DMatrix<f64>,
    origin: SampleOrigin,
    chain_ids: Option<Vec<u32>>,
}

impl SampleSet {
    pub fn new(draws: DMatrix<f64>, origin: SampleOrigin) -> Result<Self> {
        Self::with_chains(draws, origin, None)
    }

    pub fn with_chains(
        draws: DMatrix<f64>,
        origin: SampleOrigin,
        chain_ids: Option<Vec<u32>>,
    ) -> Result<Self> {
        if draws.nrows() == 0 || draws.ncols() == 0 {
            return Err(Error::InvalidArgument(
                "sample set needs at least one draw and one parameter dimension".into(),
            ));
        }
        if let Some((i, j)) = first_non_finite(&draws) {
            return Err(Error::NonFinite(format!(
                "sample draw at row {i}, column {j} is not finite"
            )));
        }
        if let Some(ids) = &chain_ids {
            if ids.len() != draws.nrows() {
                return Err(Error::DimensionMismatch(format!(
                    "chain ids length {} does not match draw count {}",
                    ids.len(),
                    draws.nrows()
                )));
            }
        }
        Ok(Self {
            draws,
            origin,
            chain_ids,
        })
    }

    /// Number of draws m.
    pub fn len(&self) -> usize {
        self.draws.nrows()
    }

    /// Always false: construction requires m >= 1.
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Parameter dimension d_theta.
    pub fn dim(&self) -> usize {
        self.draws.ncols()
    }

    pub fn origin(&self) -> SampleOrigin {
        self.origin
    }

    pub fn chain_ids(&self) -> Option<&[u32]> {
        self.chain_ids.as_deref()
    }

    pub fn draws(&self) -> &DMatrix<f64> {
        &self.draws
    }

    /// Draw i as an owned parameter vector.
    pub fn row(&self, i: usize) -> nalgebra::DVector<f64> {
        self.draws.row(i).transpose()
    }
}

/// An m x d_theta matrix of score evaluations, row-aligned with a
/// [`SampleSet`]. Produced either by evaluating a score field over the
/// draws or ingested from files when gradients come from external model
/// code.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecomputedScores {
    values: DMatrix<f64>,
    label: String,
}

impl PrecomputedScores {
    pub fn new(values: DMatrix<f64>, label: impl Into<String>) -> Result<Self> {
        let label = label.into();
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::InvalidArgument(format!(
                "score matrix '{label}' must be non-empty"
            )));
        }
        if let Some((i, j)) = first_non_finite(&values) {
            return Err(Error::NonFinite(format!(
                "score matrix '{label}' has a non-finite entry at row {i}, column {j}"
            )));
        }
        Ok(Self { values, label })
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    /// Always false: construction requires at least one row.
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Checks row alignment against a sample set.
    pub fn check_aligned(&self, samples: &SampleSet) -> Result<()> {
        if self.len() != samples.len() || self.dim() != samples.dim() {
            return Err(Error::DimensionMismatch(format!(
                "score matrix '{}' is {}x{} but the sample set is {}x{}",
                self.label,
                self.len(),
                self.dim(),
                samples.len(),
                samples.dim()
            )));
        }
        Ok(())
    }

    /// Squared Euclidean norm of each row, in row order.
    pub fn row_norms_sq(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| self.values.row(i).iter().map(|v| v * v).sum())
            .collect()
    }
}

pub(crate) fn first_non_finite(m: &DMatrix<f64>) -> Option<(usize, usize)> {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if !m[(i, j)].is_finite() {
                return Some((i, j));
            }
        }
    }
    None
}
