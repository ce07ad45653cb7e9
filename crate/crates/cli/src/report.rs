//! The run report: a versioned, JSON-serialisable record of inputs,
//! results, and diagnostics. Serialisation is deterministic (struct field
//! order, sorted maps, shortest round-trip floats), so identical runs
//! produce byte-identical reports.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{CliError, CliResult};

pub const REPORT_SPEC_VERSION: &str = "1.0";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensitivityReport {
    pub spec_version: String,
    pub mode: String,
    pub inputs: InputsDigest,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub results: Option<ResultsSection>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub estimate: Option<EstimateSection>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub decomposition: Option<DecompositionSection>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub per_dimension: Option<Vec<BlockContribution>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub local: Option<LocalSection>,
    pub diagnostics: Diagnostics,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub curves: Vec<Curve>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub annotations: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct InputsDigest {
    /// SHA-256 of every input file, keyed by its role in the run.
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub file_sha256: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub d_theta: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub d_lambda: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultsSection {
    pub sup_value: f64,
    pub inf_value: f64,
    pub sensitivity: f64,
    pub sup_arg: Vec<f64>,
    pub inf_arg: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub sup_evaluations: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub per_block: Option<Vec<BlockResult>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockResult {
    pub block: usize,
    pub sup_value: f64,
    pub inf_value: f64,
    pub sensitivity: f64,
    /// This block's fraction of the total sensitivity.
    pub share: f64,
    pub sup_arg: Vec<f64>,
    pub inf_arg: Vec<f64>,
    pub sup_evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateSection {
    pub value: f64,
    pub m: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecompositionSection {
    pub loss_term: f64,
    pub prior_term: f64,
    /// Cross term that reconstructs the total: loss + prior + cross = total.
    pub cross_term_with_factor_2: f64,
    /// Bare inner-product mean, for comparison with printed decompositions.
    pub cross_term_paper_literal: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockContribution {
    pub dimensions: Vec<usize>,
    pub value: f64,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalSection {
    pub derivative: f64,
    pub direction: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Diagnostics {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub chebyshev_bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub psd_min_eigenvalue: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub psd_spectral_norm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub converged: Option<bool>,
}

/// One exported objective curve: `name` is the hyperparameter label,
/// `points` are (hyperparameter, objective value) pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Curve {
    pub name: String,
    pub points: Vec<[f64; 2]>,
}

impl SensitivityReport {
    pub fn new(mode: &str) -> Self {
        Self {
            spec_version: REPORT_SPEC_VERSION.to_string(),
            mode: mode.to_string(),
            inputs: InputsDigest::default(),
            results: None,
            estimate: None,
            decomposition: None,
            per_dimension: None,
            local: None,
            diagnostics: Diagnostics::default(),
            curves: Vec::new(),
            annotations: BTreeMap::new(),
        }
    }

    /// Serialises to pretty JSON with a trailing newline. Fails if any
    /// reported number is non-finite, since JSON cannot round-trip those
    /// and a NaN in a report means a bug upstream.
    pub fn to_json(&self) -> CliResult<String> {
        self.check_finite()?;
        let mut s = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::Numeric(format!("report serialisation: {e}")))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("report parse: {e}")))
    }

    fn check_finite(&self) -> CliResult<()> {
        let mut bad: Vec<&str> = Vec::new();
        let ck = |v: f64, name: &'static str, bad: &mut Vec<&str>| {
            if !v.is_finite() {
                bad.push(name);
            }
        };
        if let Some(r) = &self.results {
            ck(r.sup_value, "results.sup_value", &mut bad);
            ck(r.inf_value, "results.inf_value", &mut bad);
            ck(r.sensitivity, "results.sensitivity", &mut bad);
            if r.sup_arg
                .iter()
                .chain(r.inf_arg.iter())
                .any(|x| !x.is_finite())
            {
                bad.push("results.args");
            }
        }
        if let Some(e) = &self.estimate {
            ck(e.value, "estimate.value", &mut bad);
        }
        if let Some(d) = &self.decomposition {
            ck(d.loss_term, "decomposition.loss_term", &mut bad);
            ck(d.prior_term, "decomposition.prior_term", &mut bad);
            ck(d.cross_term_with_factor_2, "decomposition.cross", &mut bad);
            ck(d.total, "decomposition.total", &mut bad);
        }
        if let Some(l) = &self.local {
            ck(l.derivative, "local.derivative", &mut bad);
        }
        for c in &self.curves {
            if c.points.iter().flatten().any(|x| !x.is_finite()) {
                bad.push("curves");
                break;
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(CliError::Numeric(format!(
                "report contains non-finite values in: {}",
                bad.join(", ")
            )))
        }
    }
}

/// SHA-256 of a file's bytes, hex-encoded.
pub fn file_sha256(path: &Path) -> CliResult<String> {
    let bytes =
        std::fs::read(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_report() -> SensitivityReport {
        let mut r = SensitivityReport::new("sensitivity");
        r.inputs.m = Some(2000);
        r.inputs.d_theta = Some(1);
        r.inputs.d_lambda = Some(2);
        r.inputs
            .file_sha256
            .insert("samples".into(), "ab".repeat(32));
        r.results = Some(ResultsSection {
            sup_value: 10.25,
            inf_value: 0.0,
            sensitivity: 10.25,
            sup_arg: vec![-2.5, -0.125],
            inf_arg: vec![0.125, -0.03125],
            iterations: 0,
            converged: true,
            sup_evaluations: 4,
            per_block: None,
        });
        r.diagnostics.psd_min_eigenvalue = Some(1e-3);
        r.curves.push(Curve {
            name: "mu_sigma_2".into(),
            points: vec![[-10.0, 10.25], [0.0, 0.3]],
        });
        r.annotations.insert("sup_vertex_index".into(), "0".into());
        r
    }

    #[test]
    fn json_round_trip_is_lossless() {
        let r = sample_report();
        let text = r.to_json().unwrap();
        let back = SensitivityReport::from_json(&text).unwrap();
        assert_eq!(back, r);
        // And byte-identical on re-serialisation.
        assert_eq!(back.to_json().unwrap(), text);
    }

    #[test]
    fn non_finite_values_are_refused() {
        let mut r = sample_report();
        r.results.as_mut().unwrap().sup_value = f64::NAN;
        let err = r.to_json().unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(err.to_string().contains("sup_value"), "{err}");
    }

    #[test]
    fn unknown_report_fields_are_rejected_on_parse() {
        let text =
            r#"{"spec_version":"1.0","mode":"estimate","inputs":{},"diagnostics":{},"extra":1}"#;
        assert!(SensitivityReport::from_json(text).is_err());
    }

    #[test]
    fn file_hash_is_stable() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        std::fs::write(&p, "a,b\n1,2\n").unwrap();
        let h1 = file_sha256(&p).unwrap();
        let h2 = file_sha256(&p).unwrap();
        assert_eq!(h1, h2);
        assert_eq!(h1.len(), 64);
    }
}
