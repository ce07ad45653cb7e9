//! Hyperparameter neighbourhoods and the sup/inf problems over them.
//!
//! For a convex quadratic objective the supremum over a bounded convex
//! polytope sits at a vertex (Bauer's maximum principle), so the sup is
//! solved by enumeration. The infimum is a convex programme: the
//! unconstrained minimiser `-A^+ b / 2` is taken when feasible, otherwise
//! projected gradient descent with step `1/L` runs on the box, where the
//! projection is coordinate-wise clipping. A deterministic grid plus
//! golden-section scheme covers scalar non-convex objectives such as the
//! copula correlation.
//!
//! Every optimiser here is deterministic: rerunning produces bitwise
//! identical arguments and values.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::quadratic::QuadraticObjective;
use crate::sum::CompensatedSum;

/// Hard cap on box-vertex enumeration: 2^20 corners is the most this will
/// materialise. Larger boxes should go through [`sensitivity_separable`].
pub const VERTEX_ENUM_LIMIT: usize = 20;

/// Default PGD iteration cap used by [`sensitivity_box`].
pub const DEFAULT_MAX_ITER: usize = 50_000;

/// Default PGD step-norm tolerance used by [`sensitivity_box`].
pub const DEFAULT_TOL: f64 = 1e-12;

/// Axis-aligned box `{lambda : lower <= lambda <= upper}`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxNeighborhood {
    lower: DVector<f64>,
    upper: DVector<f64>,
}

impl BoxNeighborhood {
    pub fn new(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch(format!(
                "box bounds have lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        if lower.is_empty() {
            return Err(Error::InvalidArgument(
                "box must have at least one coordinate".into(),
            ));
        }
        for k in 0..lower.len() {
            if !lower[k].is_finite() || !upper[k].is_finite() {
                return Err(Error::NonFinite(format!("box bound at coordinate {k}")));
            }
            if lower[k] > upper[k] {
                return Err(Error::InvalidArgument(format!(
                    "box is empty at coordinate {k}: lower {} > upper {}",
                    lower[k], upper[k]
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// Scalar interval `[center - epsilon, center + epsilon]`.
    pub fn interval(center: f64, epsilon: f64) -> Result<Self> {
        if epsilon < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "interval half-width must be nonnegative, got {epsilon}"
            )));
        }
        Self::new(
            DVector::from_vec(vec![center - epsilon]),
            DVector::from_vec(vec![center + epsilon]),
        )
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    pub fn center(&self) -> DVector<f64> {
        (&self.lower + &self.upper) * 0.5
    }

    pub fn contains(&self, lambda: &DVector<f64>, tol: f64) -> bool {
        lambda.len() == self.dim()
            && (0..self.dim())
                .all(|k| lambda[k] >= self.lower[k] - tol && lambda[k] <= self.upper[k] + tol)
    }

    pub fn clip(&self, lambda: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.dim(), |k, _| {
            lambda[k].clamp(self.lower[k], self.upper[k])
        })
    }
}

/// Explicit vertex list of a bounded convex polytope, one vertex per row.
#[derive(Debug, Clone, PartialEq)]
pub struct PolytopeNeighborhood {
    vertices: DMatrix<f64>,
}

impl PolytopeNeighborhood {
    pub fn new(vertices: DMatrix<f64>) -> Result<Self> {
        if vertices.nrows() == 0 || vertices.ncols() == 0 {
            return Err(Error::InvalidArgument(
                "polytope needs at least one vertex".into(),
            ));
        }
        if vertices.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("polytope vertex".into()));
        }
        Ok(Self { vertices })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidArgument(
                "polytope needs at least one vertex".into(),
            ));
        }
        let d = rows[0].len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::DimensionMismatch(
                "polytope vertices have ragged lengths".into(),
            ));
        }
        let mut m = DMatrix::zeros(rows.len(), d);
        for (i, r) in rows.iter().enumerate() {
            for (j, &v) in r.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        Self::new(m)
    }

    pub fn count(&self) -> usize {
        self.vertices.nrows()
    }

    pub fn dim(&self) -> usize {
        self.vertices.ncols()
    }

    pub fn vertex(&self, k: usize) -> DVector<f64> {
        self.vertices.row(k).transpose()
    }
}

/// Outcome of one sup/inf pair over a neighbourhood.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityResult {
    pub sup_value: f64,
    pub inf_value: f64,
    pub sup_arg: DVector<f64>,
    pub inf_arg: DVector<f64>,
    /// `sup_value - inf_value`; nonnegative up to round-off.
    pub sensitivity: f64,
    /// Per-block results when the problem decomposed into independent blocks.
    pub per_block: Option<Vec<(usize, SensitivityResult)>>,
    /// Projected-gradient iterations spent on the infimum.
    pub iterations: usize,
    pub converged: bool,
    /// Objective evaluations spent on the supremum (vertex or grid count).
    pub sup_evaluations: usize,
}

/// Supremum of a convex quadratic over an explicit vertex list. Ties go to
/// the lowest vertex index.
pub fn sup_over_vertices(
    q: &QuadraticObjective,
    polytope: &PolytopeNeighborhood,
) -> Result<(DVector<f64>, f64)> {
    if polytope.dim() != q.dim() {
        return Err(Error::DimensionMismatch(format!(
            "polytope dimension {} does not match objective dimension {}",
            polytope.dim(),
            q.dim()
        )));
    }
    let mut best_idx = 0usize;
    let mut best_val = f64::NEG_INFINITY;
    for k in 0..polytope.count() {
        let v = polytope.vertex(k);
        let val = q.evaluate(&v)?;
        if val > best_val {
            best_val = val;
            best_idx = k;
        }
    }
    Ok((polytope.vertex(best_idx), best_val))
}

/// All `2^d` corner points of a box, in lexicographic order of their
/// coordinate choices (coordinate 0 most significant, lower bound before
/// upper bound). Refuses boxes above [`VERTEX_ENUM_LIMIT`] dimensions;
/// factorised problems should use [`sensitivity_separable`] instead.
pub fn box_vertices(b: &BoxNeighborhood) -> Result<PolytopeNeighborhood> {
    let d = b.dim();
    if d > VERTEX_ENUM_LIMIT {
        return Err(Error::VertexLimit(format!(
            "box has {d} coordinates, so 2^{d} vertices exceed the enumeration limit of 2^{VERTEX_ENUM_LIMIT}; \
             split the problem into independent blocks and use separable sensitivity"
        )));
    }
    let count = 1usize << d;
    let mut vertices = DMatrix::zeros(count, d);
    for k in 0..count {
        for j in 0..d {
            // Bit (d-1-j) of k selects coordinate j, so increasing k walks
            // the corners in lexicographic coordinate order.
            let take_upper = (k >> (d - 1 - j)) & 1 == 1;
            vertices[(k, j)] = if take_upper {
                b.upper()[j]
            } else {
                b.lower()[j]
            };
        }
    }
    PolytopeNeighborhood::new(vertices)
}

/// Unconstrained minimiser `-A^+ b / 2` via spectral pseudo-inverse with
/// relative cutoff 1e-12. For rank-deficient `A` this is the minimum-norm
/// minimiser.
pub fn unconstrained_min(q: &QuadraticObjective) -> DVector<f64> {
    let eig = SymmetricEigen::new(q.a().clone());
    let max_ev = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let cutoff = 1e-12 * max_ev;
    let mut coeffs = DVector::zeros(q.dim());
    // Work in the eigenbasis: lambda = -1/2 V diag(1/ev) V^T b on the
    // significant spectrum, zero along null directions.
    let projected = eig.eigenvectors.transpose() * q.b();
    for k in 0..q.dim() {
        if eig.eigenvalues[k] > cutoff {
            coeffs[k] = -0.5 * projected[k] / eig.eigenvalues[k];
        }
    }
    &eig.eigenvectors * coeffs
}

/// Result of one projected-gradient run.
#[derive(Debug, Clone, PartialEq)]
pub struct PgdOutcome {
    pub arg: DVector<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimises a convex quadratic over a box.
///
/// If the unconstrained minimiser is feasible it is returned immediately.
/// Otherwise projected gradient descent runs from the box centre with step
/// `1/L` (`L` = largest eigenvalue of `A`), clipping coordinates after each
/// step, until the step norm drops to `tol` or `max_iter` is reached. When
/// `L` is zero every feasible point is optimal and the centre is returned.
pub fn pgd_min_box(
    q: &QuadraticObjective,
    b: &BoxNeighborhood,
    max_iter: usize,
    tol: f64,
) -> Result<PgdOutcome> {
    if b.dim() != q.dim() {
        return Err(Error::DimensionMismatch(format!(
            "box dimension {} does not match objective dimension {}",
            b.dim(),
            q.dim()
        )));
    }
    if max_iter < 1 {
        return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tol must be positive, got {tol}"
        )));
    }

    // The pseudo-inverse point is a genuine minimiser only when b lies in
    // the range of A (always the case for Gram-built objectives); the
    // stationarity check guards hand-assembled objectives where the
    // unconstrained problem is unbounded below along a null direction.
    let unc = unconstrained_min(q);
    let stationary = q.gradient(&unc)?.norm() <= 1e-8 * (1.0 + q.b().norm());
    if stationary && b.contains(&unc, 0.0) {
        let value = q.evaluate(&unc)?;
        return Ok(PgdOutcome {
            arg: unc,
            value,
            iterations: 0,
            converged: true,
        });
    }

    let (_, max_ev) = q.eigen_bounds();
    if max_ev <= 0.0 {
        // A = 0 within round-off: the objective is affine. Gram-built
        // objectives then have b = 0 too, but hand-assembled ones may not,
        // so minimise the linear part exactly by picking the sign-selected
        // corner coordinate-wise.
        let arg = DVector::from_fn(b.dim(), |k, _| {
            if q.b()[k] > 0.0 {
                b.lower()[k]
            } else if q.b()[k] < 0.0 {
                b.upper()[k]
            } else {
                b.center()[k]
            }
        });
        let value = q.evaluate(&arg)?;
        return Ok(PgdOutcome {
            arg,
            value,
            iterations: 0,
            converged: true,
        });
    }

    let step = 1.0 / max_ev;
    let mut current = b.center();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        let grad = q.gradient(&current)?;
        let next = b.clip(&(&current - step * grad));
        iterations += 1;
        let moved = (&next - &current).norm();
        current = next;
        if moved <= tol {
            converged = true;
            break;
        }
    }
    let value = q.evaluate(&current)?;
    Ok(PgdOutcome {
        arg: current,
        value,
        iterations,
        converged,
    })
}

/// Worst-case and best-case divergence over a box: supremum by corner
/// enumeration, infimum by the unconstrained shortcut or projected
/// gradient descent.
pub fn sensitivity_box(q: &QuadraticObjective, b: &BoxNeighborhood) -> Result<SensitivityResult> {
    sensitivity_box_with(q, b, DEFAULT_MAX_ITER, DEFAULT_TOL)
}

/// [`sensitivity_box`] with explicit PGD controls.
pub fn sensitivity_box_with(
    q: &QuadraticObjective,
    b: &BoxNeighborhood,
    max_iter: usize,
    tol: f64,
) -> Result<SensitivityResult> {
    let vertices = box_vertices(b)?;
    let sup_evaluations = vertices.count();
    let (sup_arg, sup_value) = sup_over_vertices(q, &vertices)?;
    let inf = pgd_min_box(q, b, max_iter, tol)?;
    Ok(SensitivityResult {
        sensitivity: sup_value - inf.value,
        sup_value,
        inf_value: inf.value,
        sup_arg,
        inf_arg: inf.arg,
        per_block: None,
        iterations: inf.iterations,
        converged: inf.converged,
        sup_evaluations,
    })
}

/// Sensitivity of a sum of independent blocks: each block's sup/inf is
/// solved on its own box and the results add. Arguments are concatenated
/// in block order, so the caller must pass blocks in the layout order of
/// the full hyperparameter vector.
pub fn sensitivity_separable(
    blocks: &[(QuadraticObjective, BoxNeighborhood)],
) -> Result<SensitivityResult> {
    if blocks.is_empty() {
        return Err(Error::InvalidArgument(
            "separable sensitivity needs at least one block".into(),
        ));
    }
    let total_dim: usize = blocks.iter().map(|(q, _)| q.dim()).sum();
    let mut sup_arg = DVector::zeros(total_dim);
    let mut inf_arg = DVector::zeros(total_dim);
    let mut sup_acc = CompensatedSum::new();
    let mut inf_acc = CompensatedSum::new();
    let mut sens_acc = CompensatedSum::new();
    let mut per_block = Vec::with_capacity(blocks.len());
    let mut iterations = 0;
    let mut converged = true;
    let mut sup_evaluations = 0;
    let mut offset = 0;
    for (idx, (q, b)) in blocks.iter().enumerate() {
        let r = sensitivity_box(q, b)?;
        sup_arg.rows_mut(offset, q.dim()).copy_from(&r.sup_arg);
        inf_arg.rows_mut(offset, q.dim()).copy_from(&r.inf_arg);
        sup_acc.add(r.sup_value);
        inf_acc.add(r.inf_value);
        sens_acc.add(r.sensitivity);
        iterations += r.iterations;
        converged &= r.converged;
        sup_evaluations += r.sup_evaluations;
        offset += q.dim();
        per_block.push((idx, r));
    }
    Ok(SensitivityResult {
        sup_value: sup_acc.total(),
        inf_value: inf_acc.total(),
        sup_arg,
        inf_arg,
        sensitivity: sens_acc.total(),
        per_block: Some(per_block),
        iterations,
        converged,
        sup_evaluations,
    })
}

/// Sup and inf of a scalar objective over `[lo, hi]`: a dense grid of
/// `grid_n` points followed by golden-section refinement around the best
/// and worst cells, refined to an interval width of `1e-10 * (hi - lo)`.
/// Deterministic; errors name the abscissa of any non-finite evaluation.
pub fn sensitivity_scalar_search(
    f: impl Fn(f64) -> Result<f64>,
    lo: f64,
    hi: f64,
    grid_n: usize,
) -> Result<SensitivityResult> {
    if grid_n < 3 {
        return Err(Error::InvalidArgument(format!(
            "grid must have at least 3 points, got {grid_n}"
        )));
    }
    if !(lo < hi) {
        return Err(Error::InvalidArgument(format!(
            "interval must satisfy lo < hi, got [{lo}, {hi}]"
        )));
    }
    let eval = |x: f64| -> Result<f64> {
        let v = f(x)?;
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("objective value at lambda = {x}")));
        }
        Ok(v)
    };
    let xs = grid_points(lo, hi, grid_n);
    let mut values = Vec::with_capacity(grid_n);
    for &x in &xs {
        values.push(eval(x)?);
    }
    let mut evaluations = grid_n;

    let (mut best_i, mut worst_i) = (0usize, 0usize);
    for (i, &v) in values.iter().enumerate() {
        if v > values[best_i] {
            best_i = i;
        }
        if v < values[worst_i] {
            worst_i = i;
        }
    }

    let width_tol = 1e-10 * (hi - lo);
    let refine = |idx: usize, maximise: bool, evals: &mut usize| -> Result<(f64, f64)> {
        let a = xs[idx.saturating_sub(1)];
        let b = xs[(idx + 1).min(grid_n - 1)];
        golden_section(&eval, a, b, maximise, width_tol, evals)
    };
    let (sup_x_ref, sup_v_ref) = refine(best_i, true, &mut evaluations)?;
    let (inf_x_ref, inf_v_ref) = refine(worst_i, false, &mut evaluations)?;

    // The grid value wins when refinement did not improve on it, so the
    // result never falls below what was already observed.
    let (sup_arg, sup_value) = if sup_v_ref > values[best_i] {
        (sup_x_ref, sup_v_ref)
    } else {
        (xs[best_i], values[best_i])
    };
    let (inf_arg, inf_value) = if inf_v_ref < values[worst_i] {
        (inf_x_ref, inf_v_ref)
    } else {
        (xs[worst_i], values[worst_i])
    };

    Ok(SensitivityResult {
        sup_value,
        inf_value,
        sup_arg: DVector::from_vec(vec![sup_arg]),
        inf_arg: DVector::from_vec(vec![inf_arg]),
        sensitivity: sup_value - inf_value,
        per_block: None,
        iterations: 0,
        converged: true,
        sup_evaluations: evaluations,
    })
}

/// Evenly spaced grid over `[lo, hi]` with the endpoints pinned exactly.
pub fn grid_points(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let mut xs = Vec::with_capacity(n);
    for k in 0..n {
        let x = if k == 0 {
            lo
        } else if k == n - 1 {
            hi
        } else {
            lo + (hi - lo) * k as f64 / (n - 1) as f64
        };
        xs.push(x);
    }
    xs
}

fn golden_section(
    eval: &impl Fn(f64) -> Result<f64>,
    mut a: f64,
    mut b: f64,
    maximise: bool,
    width_tol: f64,
    evals: &mut usize,
) -> Result<(f64, f64)> {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let sign = if maximise { 1.0 } else { -1.0 };
    let mut c = b - (b - a) * INV_PHI;
    let mut d = a + (b - a) * INV_PHI;
    let mut fc = sign * eval(c)?;
    let mut fd = sign * eval(d)?;
    *evals += 2;
    while (b - a) > width_tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - (b - a) * INV_PHI;
            fc = sign * eval(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + (b - a) * INV_PHI;
            fd = sign * eval(d)?;
        }
        *evals += 1;
    }
    let mid = 0.5 * (a + b);
    let fm = eval(mid)?;
    *evals += 1;
    Ok((mid, fm))
}

/// Worst-case divergence over a learning-rate interval of half-width
/// `epsilon`: `epsilon^2 * mean(grad_l_norms_sq)`. Exactly
/// `epsilon^2`-homogeneous, and equals the box sensitivity of the centred
/// loss-only quadratic.
pub fn learning_rate_sensitivity(grad_l_norms_sq: &[f64], epsilon: f64) -> Result<f64> {
    if grad_l_norms_sq.is_empty() {
        return Err(Error::InvalidArgument(
            "gradient norms must be non-empty".into(),
        ));
    }
    if epsilon < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "neighbourhood half-width must be nonnegative, got {epsilon}"
        )));
    }
    let mut acc = CompensatedSum::new();
    for &n in grad_l_norms_sq {
        acc.add(n);
    }
    let mean = acc.total() / grad_l_norms_sq.len() as f64;
    Ok(epsilon * epsilon * mean)
}
