//! Dispatches a run configuration to the numeric pipelines and assembles
//! the report.

use nalgebra::{DMatrix, DVector};

use fd_sense_core::scores::eval_scores_over_samples;
use fd_sense_core::{
    build_loss_only_precomputed, build_prior_only, chebyshev_error_bound, decompose_fd,
    directional_derivative, estimate_fd_with_mode, learning_rate_sensitivity, per_dimension_fd,
    sensitivity_box_with, sensitivity_scalar_search, sensitivity_separable, sup_over_vertices,
    unconstrained_min, BoxNeighborhood, CopulaObjective, CrossConvention, Error as CoreError,
    ExpFamilyPrior, PolytopeNeighborhood, PrecomputedScores, QuadraticObjective, SampleSet,
    ScoreJacobianField, SensitivityResult,
};

use crate::config::{BlockFamily, BlockSpec, Mode, ModelConfig, RunConfig};
use crate::demo;
use crate::io;
use crate::report::{
    file_sha256, BlockContribution, BlockResult, Curve, DecompositionSection, EstimateSection,
    LocalSection, ResultsSection, SensitivityReport,
};
use crate::{CliError, CliResult};

/// Runs one configured analysis end to end. Deterministic: identical
/// configuration and input files produce an identical report.
pub fn run(config: &RunConfig) -> CliResult<SensitivityReport> {
    match config.mode {
        Mode::GaussianDemo => demo::gaussian_demo(config.file.options.seed()),
        Mode::Estimate => run_estimate(config),
        Mode::Decompose => run_decompose(config),
        Mode::Sensitivity => run_sensitivity(config),
        Mode::Local => run_local(config),
    }
}

/// Domain violations and non-finite values are numerical failures; every
/// other core error traces back to inputs and counts as configuration.
fn cli_err(context: &str, e: CoreError) -> CliError {
    match e {
        CoreError::Domain(_) | CoreError::NonFinite(_) => {
            CliError::Numeric(format!("{context}: {e}"))
        }
        _ => CliError::Config(format!("{context}: {e}")),
    }
}

fn load_samples_into(config: &RunConfig, report: &mut SensitivityReport) -> CliResult<SampleSet> {
    let rel = config.file.samples.as_ref().ok_or_else(|| {
        CliError::Config(format!(
            "samples: required for mode {}",
            config.mode.as_str()
        ))
    })?;
    let path = config.resolve(rel);
    let samples = io::load_samples(&path)?;
    report
        .inputs
        .file_sha256
        .insert("samples".into(), file_sha256(&path)?);
    report.inputs.m = Some(samples.len());
    report.inputs.d_theta = Some(samples.dim());
    Ok(samples)
}

fn load_scores_into(
    config: &RunConfig,
    report: &mut SensitivityReport,
    role: &str,
    rel: Option<&std::path::PathBuf>,
    m: usize,
    d: usize,
) -> CliResult<PrecomputedScores> {
    let rel = rel.ok_or_else(|| {
        CliError::Config(format!(
            "scores.{role}: required for mode {}",
            config.mode.as_str()
        ))
    })?;
    let path = config.resolve(rel);
    let scores = io::load_score_matrix(&path, m, d)?;
    report
        .inputs
        .file_sha256
        .insert(format!("scores.{role}"), file_sha256(&path)?);
    Ok(scores)
}

fn results_section(r: &SensitivityResult) -> ResultsSection {
    let total = r.sensitivity;
    let per_block = r.per_block.as_ref().map(|blocks| {
        blocks
            .iter()
            .map(|(idx, br)| BlockResult {
                block: *idx,
                sup_value: br.sup_value,
                inf_value: br.inf_value,
                sensitivity: br.sensitivity,
                share: if total != 0.0 {
                    br.sensitivity / total
                } else {
                    0.0
                },
                sup_arg: br.sup_arg.iter().copied().collect(),
                inf_arg: br.inf_arg.iter().copied().collect(),
                sup_evaluations: br.sup_evaluations,
            })
            .collect()
    });
    ResultsSection {
        sup_value: r.sup_value,
        inf_value: r.inf_value,
        sensitivity: r.sensitivity,
        sup_arg: r.sup_arg.iter().copied().collect(),
        inf_arg: r.inf_arg.iter().copied().collect(),
        iterations: r.iterations,
        converged: r.converged,
        sup_evaluations: r.sup_evaluations,
        per_block,
    }
}

fn record_psd(report: &mut SensitivityReport, q: &QuadraticObjective) {
    let margin = q.psd_margin();
    report.diagnostics.psd_min_eigenvalue = Some(margin.min_eigenvalue);
    report.diagnostics.psd_spectral_norm = Some(margin.spectral_norm);
}

/// Attaches the finite-sample error diagnostic for the per-draw terms at
/// the worst-case hyperparameters: the reported supremum carries Monte
/// Carlo error even though the optimisation itself is exact.
fn record_sup_error_bound(
    report: &mut SensitivityReport,
    per_sample: &[f64],
    origin: fd_sense_core::SampleOrigin,
    delta: f64,
) -> CliResult<()> {
    let bound = chebyshev_error_bound(per_sample, delta, origin)
        .map_err(|e| cli_err("options.delta", e))?;
    report.diagnostics.chebyshev_bound = Some(bound);
    report.diagnostics.delta = Some(delta);
    Ok(())
}

/// Per-draw squared score differences at a candidate natural parameter of
/// an exponential-family prior, against reference prior scores.
fn expfam_per_sample_at(
    prior: &ExpFamilyPrior,
    lambda: &DVector<f64>,
    samples: &SampleSet,
    ref_scores: &PrecomputedScores,
) -> CliResult<Vec<f64>> {
    let cand = prior
        .with_natural(lambda.clone())
        .map_err(|e| cli_err("sensitivity diagnostics", e))?;
    let cand_scores = eval_scores_over_samples(&cand, samples)
        .map_err(|e| cli_err("sensitivity diagnostics", e))?;
    let est = fd_sense_core::estimate_fd(ref_scores, &cand_scores)
        .map_err(|e| cli_err("sensitivity diagnostics", e))?;
    Ok(est.per_sample.unwrap_or_default())
}

fn run_estimate(config: &RunConfig) -> CliResult<SensitivityReport> {
    if !matches!(config.file.model, None | Some(ModelConfig::Precomputed)) {
        return Err(CliError::Config(
            "model: mode estimate expects type 'precomputed' (or no model at all)".into(),
        ));
    }
    let mut report = SensitivityReport::new(config.mode.as_str());
    let samples = load_samples_into(config, &mut report)?;
    let (m, d) = (samples.len(), samples.dim());
    let scores = &config.file.scores;
    let reference = load_scores_into(
        config,
        &mut report,
        "reference_posterior",
        scores.reference_posterior.as_ref(),
        m,
        d,
    )?;
    let candidate = load_scores_into(
        config,
        &mut report,
        "candidate_posterior",
        scores.candidate_posterior.as_ref(),
        m,
        d,
    )?;
    let mode = config.file.options.summation()?;
    let est =
        estimate_fd_with_mode(&reference, &candidate, mode).map_err(|e| cli_err("estimate", e))?;
    let delta = config.file.options.delta();
    let per_sample = est.per_sample.as_deref().unwrap_or(&[]);
    let bound = chebyshev_error_bound(per_sample, delta, samples.origin())
        .map_err(|e| cli_err("options.delta", e))?;
    report.estimate = Some(EstimateSection {
        value: est.value,
        m,
    });
    report.diagnostics.chebyshev_bound = Some(bound);
    report.diagnostics.delta = Some(delta);
    Ok(report)
}

fn run_decompose(config: &RunConfig) -> CliResult<SensitivityReport> {
    let mut report = SensitivityReport::new(config.mode.as_str());
    let samples = load_samples_into(config, &mut report)?;
    let (m, d) = (samples.len(), samples.dim());
    let scores = &config.file.scores;
    let rl = load_scores_into(
        config,
        &mut report,
        "reference_loss_gradients",
        scores.reference_loss_gradients.as_ref(),
        m,
        d,
    )?;
    let cl = load_scores_into(
        config,
        &mut report,
        "candidate_loss_gradients",
        scores.candidate_loss_gradients.as_ref(),
        m,
        d,
    )?;
    let rp = load_scores_into(
        config,
        &mut report,
        "reference_prior",
        scores.reference_prior.as_ref(),
        m,
        d,
    )?;
    let cp = load_scores_into(
        config,
        &mut report,
        "candidate_prior",
        scores.candidate_prior.as_ref(),
        m,
        d,
    )?;

    let dec = decompose_fd(&rl, &cl, &rp, &cp).map_err(|e| cli_err("decompose", e))?;
    let literal = dec.to_convention(CrossConvention::PaperLiteral).cross_term;
    report.decomposition = Some(DecompositionSection {
        loss_term: dec.loss_term,
        prior_term: dec.prior_term,
        cross_term_with_factor_2: dec.cross_term,
        cross_term_paper_literal: literal,
        total: dec.total(),
    });

    if let Some(blocks) = &config.file.blocks {
        let ref_post = PrecomputedScores::new(rp.values() - rl.values(), "reference posterior")
            .map_err(|e| cli_err("decompose", e))?;
        let cand_post = PrecomputedScores::new(cp.values() - cl.values(), "candidate posterior")
            .map_err(|e| cli_err("decompose", e))?;
        let parts = per_dimension_fd(&ref_post, &cand_post, blocks)
            .map_err(|e| CliError::Config(format!("blocks: {e}")))?;
        let total: f64 = parts.iter().sum();
        report.per_dimension = Some(
            blocks
                .iter()
                .zip(parts.iter())
                .map(|(dims, &value)| BlockContribution {
                    dimensions: dims.clone(),
                    value,
                    share: if total != 0.0 { value / total } else { 0.0 },
                })
                .collect(),
        );
    }
    Ok(report)
}

/// Hyperparameter count per prior block: both supported families have a
/// two-dimensional natural parameter.
const BLOCK_DIM: usize = 2;

fn block_prior(family: BlockFamily) -> ExpFamilyPrior {
    match family {
        BlockFamily::Gaussian => ExpFamilyPrior::scalar_gaussian(0.0, 0.0),
        BlockFamily::InvGamma => ExpFamilyPrior::inv_gamma_from_natural(0.0, 0.0),
    }
}

/// Checks block specs and restricts samples and reference prior scores to
/// the covered coordinates, in block order. Coordinates outside any block
/// keep their reference prior, contribute a zero score difference, and
/// therefore drop out of the objective.
fn restrict_to_blocks(
    blocks: &[BlockSpec],
    samples: &SampleSet,
    ref_prior_scores: &PrecomputedScores,
) -> CliResult<(SampleSet, PrecomputedScores, ExpFamilyPrior)> {
    if blocks.is_empty() {
        return Err(CliError::Config(
            "model.blocks: at least one block is required".into(),
        ));
    }
    let d = samples.dim();
    let mut seen = vec![false; d];
    for b in blocks {
        if b.coord >= d {
            return Err(CliError::Config(format!(
                "model.blocks: coord {} out of range for d_theta = {d}",
                b.coord
            )));
        }
        if seen[b.coord] {
            return Err(CliError::Config(format!(
                "model.blocks: coord {} appears twice",
                b.coord
            )));
        }
        seen[b.coord] = true;
    }
    let coords: Vec<usize> = blocks.iter().map(|b| b.coord).collect();
    let m = samples.len();
    let sub_draws = DMatrix::from_fn(m, coords.len(), |i, j| samples.draws()[(i, coords[j])]);
    let sub_samples =
        SampleSet::new(sub_draws, samples.origin()).map_err(|e| cli_err("model.blocks", e))?;
    let sub_scores = DMatrix::from_fn(m, coords.len(), |i, j| {
        ref_prior_scores.values()[(i, coords[j])]
    });
    let sub_scores = PrecomputedScores::new(sub_scores, "reference prior (block coords)")
        .map_err(|e| cli_err("scores.reference_prior", e))?;
    let prior_blocks: Vec<(usize, ExpFamilyPrior)> = blocks
        .iter()
        .enumerate()
        .map(|(k, b)| (k, block_prior(b.family)))
        .collect();
    let prior = ExpFamilyPrior::product(coords.len(), prior_blocks)
        .map_err(|e| cli_err("model.blocks", e))?;
    Ok((sub_samples, sub_scores, prior))
}

fn box_from_spec(spec: &crate::config::BoxSpec, context: &str) -> CliResult<BoxNeighborhood> {
    BoxNeighborhood::new(
        DVector::from_vec(spec.lower.clone()),
        DVector::from_vec(spec.upper.clone()),
    )
    .map_err(|e| cli_err(context, e))
}

fn run_sensitivity(config: &RunConfig) -> CliResult<SensitivityReport> {
    let model = config
        .file
        .model
        .as_ref()
        .ok_or_else(|| CliError::Config("model: required for mode sensitivity".into()))?;
    match model {
        ModelConfig::ExpfamBlocks { blocks, .. } => expfam_sensitivity(config, blocks),
        ModelConfig::LossOnly { lambda_ref } => loss_only_sensitivity(config, *lambda_ref),
        ModelConfig::Copula { pair } => copula_sensitivity(config, *pair),
        ModelConfig::Precomputed => Err(CliError::Config(
            "model: mode sensitivity requires expfam_blocks, loss_only, or copula".into(),
        )),
    }
}

fn expfam_sensitivity(config: &RunConfig, blocks: &[BlockSpec]) -> CliResult<SensitivityReport> {
    let mut report = SensitivityReport::new(config.mode.as_str());
    let samples = load_samples_into(config, &mut report)?;
    let (m, d) = (samples.len(), samples.dim());
    let ref_prior = load_scores_into(
        config,
        &mut report,
        "reference_prior",
        config.file.scores.reference_prior.as_ref(),
        m,
        d,
    )?;
    let (sub_samples, sub_scores, prior) = restrict_to_blocks(blocks, &samples, &ref_prior)?;
    let d_lambda = BLOCK_DIM * blocks.len();
    report.inputs.d_lambda = Some(d_lambda);

    let nb =
        config.file.neighbourhood.as_ref().ok_or_else(|| {
            CliError::Config("neighbourhood: required for mode sensitivity".into())
        })?;
    nb.check_single()?;

    let max_iter = config.file.options.max_iter();
    let tol = config.file.options.tol();

    if let Some(spec) = &nb.r#box {
        if spec.lower.len() != d_lambda {
            return Err(CliError::Config(format!(
                "neighbourhood.box: expected {d_lambda} coordinates, found {}",
                spec.lower.len()
            )));
        }
        let b = box_from_spec(spec, "neighbourhood.box")?;
        let q = build_prior_only(&sub_samples, &prior, &sub_scores)
            .map_err(|e| cli_err("sensitivity objective", e))?;
        record_psd(&mut report, &q);
        let r = sensitivity_box_with(&q, &b, max_iter, tol)
            .map_err(|e| cli_err("sensitivity optimisation", e))?;
        let per_sample = expfam_per_sample_at(&prior, &r.sup_arg, &sub_samples, &sub_scores)?;
        record_sup_error_bound(
            &mut report,
            &per_sample,
            samples.origin(),
            config.file.options.delta(),
        )?;
        report.diagnostics.converged = Some(r.converged);
        report.results = Some(results_section(&r));
        return Ok(report);
    }

    if let Some(specs) = &nb.boxes {
        if specs.len() != blocks.len() {
            return Err(CliError::Config(format!(
                "neighbourhood.boxes: expected one box per block ({}), found {}",
                blocks.len(),
                specs.len()
            )));
        }
        let mut pairs = Vec::with_capacity(blocks.len());
        let mut min_eig = f64::INFINITY;
        let mut max_norm = 0.0f64;
        for (k, spec) in specs.iter().enumerate() {
            if spec.lower.len() != BLOCK_DIM {
                return Err(CliError::Config(format!(
                    "neighbourhood.boxes[{k}]: expected {BLOCK_DIM} coordinates, found {}",
                    spec.lower.len()
                )));
            }
            let b = box_from_spec(spec, &format!("neighbourhood.boxes[{k}]"))?;
            let block_draws = DMatrix::from_fn(m, 1, |i, _| sub_samples.draws()[(i, k)]);
            let block_samples = SampleSet::new(block_draws, samples.origin())
                .map_err(|e| cli_err("model.blocks", e))?;
            let block_scores = PrecomputedScores::new(
                DMatrix::from_fn(m, 1, |i, _| sub_scores.values()[(i, k)]),
                format!("reference prior (block {k})"),
            )
            .map_err(|e| cli_err("scores.reference_prior", e))?;
            let block = block_prior(blocks[k].family);
            let q = build_prior_only(&block_samples, &block, &block_scores)
                .map_err(|e| cli_err(&format!("sensitivity objective (block {k})"), e))?;
            let margin = q.psd_margin();
            min_eig = min_eig.min(margin.min_eigenvalue);
            max_norm = max_norm.max(margin.spectral_norm);
            pairs.push((q, b));
        }
        let r =
            sensitivity_separable(&pairs).map_err(|e| cli_err("sensitivity optimisation", e))?;
        let per_sample = expfam_per_sample_at(&prior, &r.sup_arg, &sub_samples, &sub_scores)?;
        record_sup_error_bound(
            &mut report,
            &per_sample,
            samples.origin(),
            config.file.options.delta(),
        )?;
        report.diagnostics.psd_min_eigenvalue = Some(min_eig);
        report.diagnostics.psd_spectral_norm = Some(max_norm);
        report.diagnostics.converged = Some(r.converged);
        report.results = Some(results_section(&r));
        return Ok(report);
    }

    if let Some(rows) = &nb.vertices {
        let polytope = PolytopeNeighborhood::from_rows(rows)
            .map_err(|e| cli_err("neighbourhood.vertices", e))?;
        if polytope.dim() != d_lambda {
            return Err(CliError::Config(format!(
                "neighbourhood.vertices: expected {d_lambda} coordinates, found {}",
                polytope.dim()
            )));
        }
        let q = build_prior_only(&sub_samples, &prior, &sub_scores)
            .map_err(|e| cli_err("sensitivity objective", e))?;
        record_psd(&mut report, &q);
        let (sup_arg, sup_value) =
            sup_over_vertices(&q, &polytope).map_err(|e| cli_err("sensitivity optimisation", e))?;
        // Without half-space data the hull cannot be tested for membership,
        // so the infimum is reported from the unconstrained minimiser: exact
        // whenever that point lies in the hull (e.g. the reference itself),
        // otherwise a lower bound making the sensitivity an upper bound.
        let inf_arg = unconstrained_min(&q);
        let inf_value = q
            .evaluate(&inf_arg)
            .map_err(|e| cli_err("sensitivity optimisation", e))?;
        let per_sample = expfam_per_sample_at(&prior, &sup_arg, &sub_samples, &sub_scores)?;
        record_sup_error_bound(
            &mut report,
            &per_sample,
            samples.origin(),
            config.file.options.delta(),
        )?;
        report
            .annotations
            .insert("inf_strategy".into(), "unconstrained".into());
        report.diagnostics.converged = Some(true);
        report.results = Some(results_section(&SensitivityResult {
            sup_value,
            inf_value,
            sensitivity: sup_value - inf_value,
            sup_arg,
            inf_arg,
            per_block: None,
            iterations: 0,
            converged: true,
            sup_evaluations: polytope.count(),
        }));
        return Ok(report);
    }

    Err(CliError::Config(
        "neighbourhood: expfam_blocks sensitivity needs box, boxes, or vertices".into(),
    ))
}

fn loss_only_sensitivity(config: &RunConfig, lambda_ref: f64) -> CliResult<SensitivityReport> {
    let mut report = SensitivityReport::new(config.mode.as_str());
    let samples = load_samples_into(config, &mut report)?;
    let (m, d) = (samples.len(), samples.dim());
    let grads = load_scores_into(
        config,
        &mut report,
        "loss_gradients",
        config.file.scores.loss_gradients.as_ref(),
        m,
        d,
    )?;
    report.inputs.d_lambda = Some(1);

    let nb =
        config.file.neighbourhood.as_ref().ok_or_else(|| {
            CliError::Config("neighbourhood: required for mode sensitivity".into())
        })?;
    nb.check_single()?;
    let (b, center, epsilon) = if let Some(iv) = &nb.interval {
        let center = iv.center.unwrap_or(lambda_ref);
        let b = BoxNeighborhood::interval(center, iv.epsilon)
            .map_err(|e| cli_err("neighbourhood.interval", e))?;
        (b, center, Some(iv.epsilon))
    } else if let Some(spec) = &nb.r#box {
        if spec.lower.len() != 1 {
            return Err(CliError::Config(format!(
                "neighbourhood.box: loss_only has one hyperparameter, found {}",
                spec.lower.len()
            )));
        }
        let b = box_from_spec(spec, "neighbourhood.box")?;
        (b, lambda_ref, None)
    } else {
        return Err(CliError::Config(
            "neighbourhood: loss_only sensitivity needs interval or box".into(),
        ));
    };

    let q = build_loss_only_precomputed(&grads, lambda_ref)
        .map_err(|e| cli_err("sensitivity objective", e))?;
    record_psd(&mut report, &q);
    let r = sensitivity_box_with(
        &q,
        &b,
        config.file.options.max_iter(),
        config.file.options.tol(),
    )
    .map_err(|e| cli_err("sensitivity optimisation", e))?;
    // Per-draw terms at the worst case: ((lambda_sup - lambda_ref) ||grad l_i||)^2.
    let shift = r.sup_arg[0] - lambda_ref;
    let per_sample: Vec<f64> = grads
        .row_norms_sq()
        .into_iter()
        .map(|n| shift * shift * n)
        .collect();
    record_sup_error_bound(
        &mut report,
        &per_sample,
        samples.origin(),
        config.file.options.delta(),
    )?;
    report.diagnostics.converged = Some(r.converged);

    // For the centred interval the worst case collapses to the closed form
    // epsilon^2 * mean ||grad l||^2; record it for cross-checking.
    if let Some(eps) = epsilon {
        if center == lambda_ref {
            let formula = learning_rate_sensitivity(&grads.row_norms_sq(), eps)
                .map_err(|e| cli_err("neighbourhood.interval", e))?;
            report
                .annotations
                .insert("learning_rate_formula".into(), format!("{formula}"));
        }
    }

    // Objective curve across the neighbourhood for plot export.
    let points = fd_sense_core::grid_points(
        b.lower()[0],
        b.upper()[0],
        config.file.options.curve_points(),
    )
    .into_iter()
    .map(|x| q.evaluate(&DVector::from_vec(vec![x])).map(|v| [x, v]))
    .collect::<Result<Vec<_>, _>>()
    .map_err(|e| cli_err("curve export", e))?;
    report.curves.push(Curve {
        name: "lambda_L".into(),
        points,
    });

    report.results = Some(results_section(&r));
    Ok(report)
}

fn copula_sensitivity(config: &RunConfig, pair: [usize; 2]) -> CliResult<SensitivityReport> {
    let mut report = SensitivityReport::new(config.mode.as_str());
    let samples = load_samples_into(config, &mut report)?;
    report.inputs.d_lambda = Some(1);

    let nb =
        config.file.neighbourhood.as_ref().ok_or_else(|| {
            CliError::Config("neighbourhood: required for mode sensitivity".into())
        })?;
    nb.check_single()?;
    let iv = nb.interval.as_ref().ok_or_else(|| {
        CliError::Config("neighbourhood: copula sensitivity needs an interval".into())
    })?;
    let center = iv.center.unwrap_or(0.0);
    let (lo, hi) = (center - iv.epsilon, center + iv.epsilon);
    if lo <= -1.0 || hi >= 1.0 {
        return Err(CliError::Config(format!(
            "neighbourhood.interval: copula correlation must stay inside (-1, 1), got [{lo}, {hi}]"
        )));
    }

    let objective =
        CopulaObjective::new(&samples, (pair[0], pair[1])).map_err(|e| cli_err("model.pair", e))?;
    let r = sensitivity_scalar_search(
        |lam| objective.value(lam),
        lo,
        hi,
        config.file.options.grid_n(),
    )
    .map_err(|e| cli_err("sensitivity optimisation", e))?;

    let points = fd_sense_core::grid_points(lo, hi, config.file.options.curve_points())
        .into_iter()
        .map(|x| objective.value(x).map(|v| [x, v]))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| cli_err("curve export", e))?;
    report.curves.push(Curve {
        name: "lambda_c".into(),
        points,
    });

    let per_sample = objective
        .per_sample_values(r.sup_arg[0])
        .map_err(|e| cli_err("sensitivity diagnostics", e))?;
    record_sup_error_bound(
        &mut report,
        &per_sample,
        samples.origin(),
        config.file.options.delta(),
    )?;
    report.diagnostics.converged = Some(r.converged);
    report.results = Some(results_section(&r));
    Ok(report)
}

fn run_local(config: &RunConfig) -> CliResult<SensitivityReport> {
    let mut report = SensitivityReport::new(config.mode.as_str());
    let (blocks, lambda) = match &config.file.model {
        Some(ModelConfig::ExpfamBlocks { blocks, lambda }) => {
            let lambda = lambda
                .as_ref()
                .ok_or_else(|| CliError::Config("model.lambda: required for mode local".into()))?;
            (blocks, lambda)
        }
        _ => {
            return Err(CliError::Config(
                "model: mode local requires expfam_blocks with candidate lambda".into(),
            ))
        }
    };
    let samples = load_samples_into(config, &mut report)?;
    let (m, d) = (samples.len(), samples.dim());
    let ref_prior = load_scores_into(
        config,
        &mut report,
        "reference_prior",
        config.file.scores.reference_prior.as_ref(),
        m,
        d,
    )?;
    let (sub_samples, sub_scores, prior) = restrict_to_blocks(blocks, &samples, &ref_prior)?;
    let d_lambda = BLOCK_DIM * blocks.len();
    report.inputs.d_lambda = Some(d_lambda);
    if lambda.len() != d_lambda {
        return Err(CliError::Config(format!(
            "model.lambda: expected {d_lambda} coordinates, found {}",
            lambda.len()
        )));
    }

    let direction = config
        .file
        .direction
        .as_ref()
        .ok_or_else(|| CliError::Config("direction: required for mode local".into()))?;
    if direction.len() != d_lambda {
        return Err(CliError::Config(format!(
            "direction: expected {d_lambda} coordinates, found {}",
            direction.len()
        )));
    }
    let v = DVector::from_vec(direction.clone());
    if (v.norm() - 1.0).abs() > 1e-10 {
        return Err(CliError::Config(format!(
            "direction: must be a unit vector, norm is {}",
            v.norm()
        )));
    }

    let candidate = prior
        .with_natural(DVector::from_vec(lambda.clone()))
        .map_err(|e| cli_err("model.lambda", e))?;
    let cand_scores = eval_scores_over_samples(&candidate, &sub_samples)
        .map_err(|e| cli_err("candidate scores", e))?;
    let jac = ScoreJacobianField::from_expfam(&candidate);
    let derivative = directional_derivative(&sub_samples, &sub_scores, &cand_scores, &jac, &v)
        .map_err(|e| cli_err("local sensitivity", e))?;
    report.local = Some(LocalSection {
        derivative,
        direction: direction.clone(),
    });
    Ok(report)
}
