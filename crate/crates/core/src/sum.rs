//! Compensated summation.
//!
//! Divergence estimates are means of up to millions of squared norms. Plain
//! left-to-right accumulation drifts with m and with the platform's FMA
//! behaviour; Neumaier's variant of Kahan summation keeps the error at one
//! or two ulps regardless of m, which is what keeps reports byte-identical
//! across runs and machines.

/// Running Neumaier-compensated sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// How reductions over samples are ordered and corrected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SummationMode {
    /// Neumaier-compensated accumulation in sample order.
    #[default]
    Compensated,
    /// Plain accumulation in sample order.
    Naive,
}

/// Sum of `values` in slice order under the given mode.
pub fn sum_with_mode(values: impl IntoIterator<Item = f64>, mode: SummationMode) -> f64 {
    match mode {
        SummationMode::Compensated => {
            let mut acc = CompensatedSum::new();
            for v in values {
                acc.add(v);
            }
            acc.total()
        }
        SummationMode::Naive => values.into_iter().sum(),
    }
}

/// Compensated sum in slice order.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    sum_with_mode(values, SummationMode::Compensated)
}
