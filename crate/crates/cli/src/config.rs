//! Run configuration: one JSON document per run, parsed fail-closed.
//!
//! Unknown keys are rejected everywhere, so a misspelled neighbourhood
//! bound can never silently fall back to a default. Relative paths resolve
//! against the directory containing the config file.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::{CliError, CliResult};

/// What the run computes. Chosen by the CLI subcommand, not by the config
/// file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Estimate,
    Sensitivity,
    Local,
    GaussianDemo,
    Decompose,
}

impl Mode {
    pub fn parse(s: &str) -> CliResult<Self> {
        match s {
            "estimate" => Ok(Mode::Estimate),
            "sensitivity" => Ok(Mode::Sensitivity),
            "local" => Ok(Mode::Local),
            "gaussian_demo" => Ok(Mode::GaussianDemo),
            "decompose" => Ok(Mode::Decompose),
            other => Err(CliError::Config(format!(
                "unknown mode '{other}'; expected one of estimate, sensitivity, local, gaussian_demo, decompose"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Estimate => "estimate",
            Mode::Sensitivity => "sensitivity",
            Mode::Local => "local",
            Mode::GaussianDemo => "gaussian_demo",
            Mode::Decompose => "decompose",
        }
    }
}

/// The parsed config file plus the mode selected on the command line.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mode: Mode,
    pub file: ConfigFile,
    /// Directory against which relative paths in the file resolve.
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn load(mode: Mode, config_path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(config_path)
            .map_err(|e| CliError::Config(format!("config file {}: {e}", config_path.display())))?;
        let file: ConfigFile = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("config file {}: {e}", config_path.display())))?;
        let base_dir = config_path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(Self {
            mode,
            file,
            base_dir,
        })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    /// Draws from the reference posterior (not needed by gaussian_demo).
    pub samples: Option<PathBuf>,
    /// Named score-matrix files, all row-aligned with the samples.
    #[serde(default)]
    pub scores: ScorePaths,
    pub model: Option<ModelConfig>,
    pub neighbourhood: Option<NeighbourhoodConfig>,
    /// Unit direction in hyperparameter space (mode `local`).
    pub direction: Option<Vec<f64>>,
    /// Dimension blocks for per-dimension contributions (mode `decompose`).
    pub blocks: Option<Vec<Vec<usize>>>,
    #[serde(default)]
    pub options: Options,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScorePaths {
    pub reference_posterior: Option<PathBuf>,
    pub candidate_posterior: Option<PathBuf>,
    pub reference_prior: Option<PathBuf>,
    pub candidate_prior: Option<PathBuf>,
    pub reference_loss_gradients: Option<PathBuf>,
    pub candidate_loss_gradients: Option<PathBuf>,
    /// Gradients of the scalar loss component (learning-rate studies).
    pub loss_gradients: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", deny_unknown_fields)]
pub enum ModelConfig {
    /// Everything arrives as precomputed score matrices.
    #[serde(rename = "precomputed")]
    Precomputed,
    /// Factorised exponential-family prior: one single-coordinate block per
    /// entry, hyperparameters in natural parametrisation, two per block.
    #[serde(rename = "expfam_blocks")]
    ExpfamBlocks {
        blocks: Vec<BlockSpec>,
        /// Candidate natural parameters (required by mode `local`).
        lambda: Option<Vec<f64>>,
    },
    /// Scalar learning rate on a linear loss.
    #[serde(rename = "loss_only")]
    LossOnly { lambda_ref: f64 },
    /// Gaussian copula correlation between one coordinate pair.
    #[serde(rename = "copula")]
    Copula { pair: [usize; 2] },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSpec {
    /// Which parameter coordinate this block's prior acts on.
    pub coord: usize,
    pub family: BlockFamily,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum BlockFamily {
    #[serde(rename = "gaussian")]
    Gaussian,
    #[serde(rename = "inv_gamma")]
    InvGamma,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeighbourhoodConfig {
    /// Joint box over the full hyperparameter vector.
    pub r#box: Option<BoxSpec>,
    /// Per-block boxes, in block order (separable optimisation).
    pub boxes: Option<Vec<BoxSpec>>,
    /// Explicit polytope vertices.
    pub vertices: Option<Vec<Vec<f64>>>,
    /// Scalar interval `[center - epsilon, center + epsilon]`.
    pub interval: Option<IntervalSpec>,
}

impl NeighbourhoodConfig {
    /// Exactly one representation must be present.
    pub fn check_single(&self) -> CliResult<()> {
        let present = [
            self.r#box.is_some(),
            self.boxes.is_some(),
            self.vertices.is_some(),
            self.interval.is_some(),
        ]
        .iter()
        .filter(|&&p| p)
        .count();
        if present != 1 {
            return Err(CliError::Config(format!(
                "neighbourhood: exactly one of box, boxes, vertices, interval must be given, found {present}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntervalSpec {
    /// Defaults to the model's reference hyperparameter (loss_only) or to
    /// zero (copula).
    pub center: Option<f64>,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Options {
    /// Seed for the internally generated demo study.
    pub seed: Option<u64>,
    /// Grid size of the scalar non-convex search.
    pub grid_n: Option<usize>,
    /// Projected-gradient iteration cap.
    pub max_iter: Option<usize>,
    /// Projected-gradient step-norm tolerance.
    pub tol: Option<f64>,
    /// Reduction ordering: "compensated" (default) or "naive".
    pub summation: Option<String>,
    /// Confidence parameter of the error diagnostic.
    pub delta: Option<f64>,
    /// Points per exported objective curve.
    pub curve_points: Option<usize>,
}

impl Options {
    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(1)
    }

    pub fn grid_n(&self) -> usize {
        self.grid_n.unwrap_or(512)
    }

    pub fn max_iter(&self) -> usize {
        self.max_iter
            .unwrap_or(fd_sense_core::neighborhoods::DEFAULT_MAX_ITER)
    }

    pub fn tol(&self) -> f64 {
        self.tol
            .unwrap_or(fd_sense_core::neighborhoods::DEFAULT_TOL)
    }

    pub fn delta(&self) -> f64 {
        self.delta.unwrap_or(0.05)
    }

    pub fn curve_points(&self) -> usize {
        self.curve_points.unwrap_or(101)
    }

    pub fn summation(&self) -> CliResult<fd_sense_core::sum::SummationMode> {
        match self.summation.as_deref() {
            None | Some("compensated") => Ok(fd_sense_core::sum::SummationMode::Compensated),
            Some("naive") => Ok(fd_sense_core::sum::SummationMode::Naive),
            Some(other) => Err(CliError::Config(format!(
                "options.summation: expected 'compensated' or 'naive', got '{other}'"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unknown_keys() {
        let text = r#"{"samples": "s.csv", "typo_key": 1}"#;
        let err = serde_json::from_str::<ConfigFile>(text).unwrap_err();
        assert!(err.to_string().contains("typo_key"), "{err}");
    }

    #[test]
    fn rejects_unknown_nested_keys() {
        let text = r#"{"neighbourhood": {"box": {"lower": [0], "upper": [1], "middle": [0.5]}}}"#;
        assert!(serde_json::from_str::<ConfigFile>(text).is_err());
    }

    #[test]
    fn parses_a_full_sensitivity_config() {
        let text = r#"{
            "samples": "draws.csv",
            "scores": {"reference_prior": "prior_scores.csv"},
            "model": {"type": "expfam_blocks",
                      "blocks": [{"coord": 0, "family": "gaussian"},
                                 {"coord": 1, "family": "inv_gamma"}],
                      "lambda": null},
            "neighbourhood": {"boxes": [{"lower": [-8, -8], "upper": [8, -0.5]},
                                         {"lower": [-8, -2], "upper": [-3.5, -0.1667]}]},
            "options": {"seed": 3, "tol": 1e-13}
        }"#;
        let cfg: ConfigFile = serde_json::from_str(text).unwrap();
        assert_eq!(cfg.options.seed(), 3);
        match cfg.model.unwrap() {
            ModelConfig::ExpfamBlocks { blocks, .. } => {
                assert_eq!(blocks.len(), 2);
                assert_eq!(blocks[1].family, BlockFamily::InvGamma);
            }
            other => panic!("wrong model: {other:?}"),
        }
        cfg.neighbourhood.unwrap().check_single().unwrap();
    }

    #[test]
    fn neighbourhood_must_be_unambiguous() {
        let text = r#"{"neighbourhood": {"box": {"lower": [0], "upper": [1]},
                                          "interval": {"epsilon": 0.1}}}"#;
        let cfg: ConfigFile = serde_json::from_str(text).unwrap();
        assert!(cfg.neighbourhood.unwrap().check_single().is_err());
    }

    #[test]
    fn summation_option_parses_fail_closed() {
        let parse = |text: &str| serde_json::from_str::<ConfigFile>(text).unwrap();
        let cfg = parse(r#"{"options": {"summation": "compensated"}}"#);
        assert_eq!(
            cfg.options.summation().unwrap(),
            fd_sense_core::sum::SummationMode::Compensated
        );
        let cfg = parse(r#"{"options": {"summation": "naive"}}"#);
        assert_eq!(
            cfg.options.summation().unwrap(),
            fd_sense_core::sum::SummationMode::Naive
        );
        let cfg = parse(r#"{"options": {"summation": "fast"}}"#);
        assert!(cfg.options.summation().is_err());
        let cfg = parse(r#"{}"#);
        assert_eq!(
            cfg.options.summation().unwrap(),
            fd_sense_core::sum::SummationMode::Compensated
        );
    }

    #[test]
    fn mode_parsing_covers_all_modes() {
        for (name, mode) in [
            ("estimate", Mode::Estimate),
            ("sensitivity", Mode::Sensitivity),
            ("local", Mode::Local),
            ("gaussian_demo", Mode::GaussianDemo),
            ("decompose", Mode::Decompose),
        ] {
            assert_eq!(Mode::parse(name).unwrap(), mode);
            assert_eq!(mode.as_str(), name);
        }
        assert!(Mode::parse("explore").is_err());
    }
}
