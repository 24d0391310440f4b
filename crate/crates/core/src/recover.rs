//! Sparse recovery: per-column l1 minimization plus an exhaustive l0 oracle
//! for small instances.
//!
//! The solver minimizes `lambda*||x||_1 + 0.5*||Phi x - y||_2^2` with a
//! monotone accelerated proximal-gradient iteration, halving `lambda`
//! geometrically until the residual constraint `||Phi x - y|| <= eps` is met.
//! Equality-constrained decoding is the limit `eps -> 0`, approximated by the
//! relative floor [`EQUALITY_RESIDUAL_FACTOR`]. No external optimization
//! toolbox is involved, so decode results are reproducible bit-for-bit given
//! a key.

use crate::error::{Error, Result};
use crate::sense::{Ciphertext, MeasurementMatrix};
use crate::Signal2D;
use nalgebra::DVector;
use rayon::prelude::*;

/// Equality mode stops once `residual <= EQUALITY_RESIDUAL_FACTOR * ||y||`.
pub const EQUALITY_RESIDUAL_FACTOR: f64 = 1e-6;

/// Hard cap on continuation stages; `lambda` shrinks by 2^60 before giving up.
const MAX_STAGES: usize = 60;

/// Total inner-iteration budget, as a multiple of `max_iterations`.
const TOTAL_BUDGET_FACTOR: usize = 20;

/// Iterations of power method used to estimate the gradient Lipschitz
/// constant `||Phi||_2^2`; backtracking guards any underestimate.
const POWER_ITERATIONS: usize = 20;

/// Loose inner tolerance for early continuation stages, tightened
/// geometrically until it reaches the configured tolerance.
const STAGE_TOL_INITIAL: f64 = 1e-3;
const STAGE_TOL_DECAY: f64 = 0.1;

/// Exhaustive-search caps for the l0 oracle.
const ORACLE_MAX_SIGNAL_LEN: usize = 20;
const ORACLE_MAX_SUPPORT: usize = 4;

/// Constraint handling mode for [`l1_solve`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverMode {
    /// `Phi x = y`, approximated by the relative residual floor.
    Equality,
    /// `||Phi x - y||_2 <= noise_epsilon`.
    Noisy,
}

/// Solver parameters. `max_iterations` bounds each continuation stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub max_iterations: usize,
    pub convergence_tol: f64,
    pub noise_epsilon: f64,
    pub mode: SolverMode,
}

impl SolverConfig {
    /// Equality-constrained decoding with default tolerances.
    pub fn equality() -> Self {
        Self {
            max_iterations: 5000,
            convergence_tol: 1e-8,
            noise_epsilon: 0.0,
            mode: SolverMode::Equality,
        }
    }

    /// Noise-tolerant decoding with residual allowance `epsilon`.
    pub fn noisy(epsilon: f64) -> Self {
        Self {
            max_iterations: 5000,
            convergence_tol: 1e-8,
            noise_epsilon: epsilon,
            mode: SolverMode::Noisy,
        }
    }

    fn validate(&self) -> Result<()> {
        if !self.convergence_tol.is_finite() || self.convergence_tol <= 0.0 {
            return Err(Error::Domain {
                what: "convergence_tol",
                value: self.convergence_tol,
                expected: "positive",
            });
        }
        if self.noise_epsilon < 0.0 || !self.noise_epsilon.is_finite() {
            return Err(Error::Domain {
                what: "noise_epsilon",
                value: self.noise_epsilon,
                expected: "finite and nonnegative",
            });
        }
        if self.max_iterations == 0 {
            return Err(Error::Domain {
                what: "max_iterations",
                value: 0.0,
                expected: "positive",
            });
        }
        Ok(())
    }

    /// Epsilon actually in force: equality mode ignores `noise_epsilon`.
    fn effective_epsilon(&self, y_norm: f64) -> f64 {
        match self.mode {
            SolverMode::Equality => EQUALITY_RESIDUAL_FACTOR * y_norm,
            SolverMode::Noisy => self.noise_epsilon,
        }
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self::equality()
    }
}

/// Outcome of a single-column solve.
///
/// When `converged` is true, `residual_norm` is at or below the effective
/// epsilon: `noise_epsilon` in noisy mode, `EQUALITY_RESIDUAL_FACTOR * ||y||`
/// in equality mode. Non-convergence is reported here, never as an error.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryResult {
    pub solution: DVector<f64>,
    pub residual_norm: f64,
    pub iterations_used: usize,
    pub converged: bool,
}

/// Accepted objective values, one inner run per continuation stage.
///
/// Within each run the penalized objective is non-increasing by construction;
/// the trace lets tests assert that.
#[derive(Debug, Clone, Default)]
pub struct SolverTrace {
    pub stage_objectives: Vec<Vec<f64>>,
}

/// Approximate minimizer of `||x||_1` subject to the residual constraint.
pub fn l1_solve(
    phi: &MeasurementMatrix,
    y: &DVector<f64>,
    cfg: &SolverConfig,
) -> Result<RecoveryResult> {
    solve_inner(phi, y, cfg, None)
}

/// Same as [`l1_solve`] but records the accepted objective values per stage.
pub fn l1_solve_traced(
    phi: &MeasurementMatrix,
    y: &DVector<f64>,
    cfg: &SolverConfig,
) -> Result<(RecoveryResult, SolverTrace)> {
    let mut trace = SolverTrace::default();
    let result = solve_inner(phi, y, cfg, Some(&mut trace))?;
    Ok((result, trace))
}

fn solve_inner(
    phi: &MeasurementMatrix,
    y: &DVector<f64>,
    cfg: &SolverConfig,
    mut trace: Option<&mut SolverTrace>,
) -> Result<RecoveryResult> {
    cfg.validate()?;
    let k = phi.measurement_count();
    let m = phi.signal_len();
    if y.len() != k {
        return Err(Error::DimensionMismatch {
            context: "l1_solve measurement vector",
            expected: k,
            found: y.len(),
        });
    }

    let matrix = phi.entries();
    let y_norm = y.norm();
    let target = cfg.effective_epsilon(y_norm);

    // The zero vector is the l1 minimizer whenever it is already feasible.
    if y_norm <= target {
        return Ok(RecoveryResult {
            solution: DVector::zeros(m),
            residual_norm: y_norm,
            iterations_used: 0,
            converged: true,
        });
    }

    let mut lipschitz = estimate_lipschitz(matrix, m).max(f64::MIN_POSITIVE);

    // lambda_0 = ||Phi^T y||_inf / 2.
    let correlation = matrix.tr_mul(y);
    let lambda0 = correlation.amax() / 2.0;
    if lambda0 == 0.0 {
        // Phi^T y = 0: every scaled step keeps x = 0; report the honest state.
        return Ok(RecoveryResult {
            solution: DVector::zeros(m),
            residual_norm: y_norm,
            iterations_used: 0,
            converged: false,
        });
    }

    let budget = cfg.max_iterations.saturating_mul(TOTAL_BUDGET_FACTOR);
    let mut lambda = lambda0;
    let mut x = DVector::zeros(m);
    let mut total_iterations = 0usize;
    let mut stage = 0usize;
    let mut strict_pass = false;

    // Reused buffers for the hot loop.
    let mut scratch = Buffers::new(k, m);

    loop {
        let scheduled = STAGE_TOL_INITIAL * STAGE_TOL_DECAY.powi(stage as i32);
        let stage_tol = if strict_pass {
            cfg.convergence_tol
        } else {
            scheduled.max(cfg.convergence_tol)
        };
        let stage_trace = trace.as_deref_mut().map(|t| {
            t.stage_objectives.push(Vec::new());
            t.stage_objectives.last_mut().unwrap()
        });
        total_iterations += run_stage(
            matrix,
            y,
            lambda,
            &mut lipschitz,
            &mut x,
            stage_tol,
            cfg.max_iterations,
            budget.saturating_sub(total_iterations),
            &mut scratch,
            stage_trace,
        );

        let residual = residual_norm(matrix, &x, y, &mut scratch);
        if residual <= target {
            if stage_tol <= cfg.convergence_tol {
                break;
            }
            // Target met under a loose tolerance: polish at the same lambda.
            strict_pass = true;
            continue;
        }
        strict_pass = false;
        stage += 1;
        lambda /= 2.0;
        if stage >= MAX_STAGES || total_iterations >= budget {
            break;
        }
    }

    let residual = residual_norm(matrix, &x, y, &mut scratch);
    Ok(RecoveryResult {
        converged: residual <= target,
        solution: x,
        residual_norm: residual,
        iterations_used: total_iterations,
    })
}

struct Buffers {
    residual: DVector<f64>,
    gradient: DVector<f64>,
    candidate: DVector<f64>,
    extrapolated: DVector<f64>,
}

impl Buffers {
    fn new(k: usize, m: usize) -> Self {
        Self {
            residual: DVector::zeros(k),
            gradient: DVector::zeros(m),
            candidate: DVector::zeros(m),
            extrapolated: DVector::zeros(m),
        }
    }
}

/// One continuation stage: monotone accelerated proximal gradient on
/// `lambda*||x||_1 + 0.5*||Ax - y||^2`, warm-started at `x`.
///
/// Candidates that fail to decrease the objective are rejected (the previous
/// accepted iterate is kept) and momentum restarts; two consecutive
/// rejections mean the iterate is a proximal fixed point, so the stage stops.
/// Returns the number of inner iterations spent.
#[allow(clippy::too_many_arguments)]
fn run_stage(
    matrix: &Signal2D,
    y: &DVector<f64>,
    lambda: f64,
    lipschitz: &mut f64,
    x: &mut DVector<f64>,
    tol: f64,
    max_iterations: usize,
    remaining_budget: usize,
    buf: &mut Buffers,
    mut stage_trace: Option<&mut Vec<f64>>,
) -> usize {
    let cap = max_iterations.min(remaining_budget);
    if cap == 0 {
        return 0;
    }

    buf.extrapolated.copy_from(x);
    let mut t = 1.0f64;
    let mut objective = penalized_objective(matrix, x, y, lambda, buf);
    if let Some(trace) = stage_trace.as_deref_mut() {
        trace.push(objective);
    }
    let mut rejected_in_a_row = 0usize;

    for iteration in 1..=cap {
        // Gradient at the extrapolation point.
        buf.residual.gemv(1.0, matrix, &buf.extrapolated, 0.0);
        buf.residual -= y;
        let f_extra = 0.5 * buf.residual.norm_squared();
        buf.gradient.gemv_tr(1.0, matrix, &buf.residual, 0.0);

        // Backtracking proximal step from the extrapolation point.
        let mut f_candidate;
        loop {
            let step = 1.0 / *lipschitz;
            for i in 0..x.len() {
                let w = buf.extrapolated[i] - step * buf.gradient[i];
                buf.candidate[i] = soft_threshold(w, lambda * step);
            }
            buf.residual.gemv(1.0, matrix, &buf.candidate, 0.0);
            buf.residual -= y;
            f_candidate = 0.5 * buf.residual.norm_squared();
            let mut quadratic = f_extra;
            let mut dist = 0.0;
            for i in 0..x.len() {
                let delta = buf.candidate[i] - buf.extrapolated[i];
                quadratic += buf.gradient[i] * delta;
                dist += delta * delta;
            }
            quadratic += 0.5 * *lipschitz * dist;
            if f_candidate <= quadratic + 1e-12 * quadratic.abs() {
                break;
            }
            *lipschitz *= 2.0;
        }

        let candidate_objective = f_candidate + lambda * buf.candidate.lp_norm(1);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());

        if candidate_objective <= objective {
            // Accept; extrapolate past the new point before overwriting x.
            rejected_in_a_row = 0;
            let improvement = objective - candidate_objective;
            let momentum = (t - 1.0) / t_next;
            for i in 0..x.len() {
                let x_new = buf.candidate[i];
                buf.extrapolated[i] = x_new + momentum * (x_new - x[i]);
            }
            x.copy_from(&buf.candidate);
            objective = candidate_objective;
            t = t_next;
            if let Some(trace) = stage_trace.as_deref_mut() {
                trace.push(objective);
            }
            let relative = improvement / objective.abs().max(f64::MIN_POSITIVE);
            if relative < tol {
                return iteration;
            }
        } else {
            // Keep the current iterate and restart momentum at it. A plain
            // proximal step from x cannot fail the descent test, so a second
            // rejection in a row means x is a proximal fixed point.
            rejected_in_a_row += 1;
            buf.extrapolated.copy_from(x);
            t = 1.0;
            if rejected_in_a_row >= 2 {
                return iteration;
            }
        }
    }
    cap
}

#[inline]
fn soft_threshold(w: f64, threshold: f64) -> f64 {
    if w > threshold {
        w - threshold
    } else if w < -threshold {
        w + threshold
    } else {
        0.0
    }
}

fn penalized_objective(
    matrix: &Signal2D,
    x: &DVector<f64>,
    y: &DVector<f64>,
    lambda: f64,
    buf: &mut Buffers,
) -> f64 {
    buf.residual.gemv(1.0, matrix, x, 0.0);
    buf.residual -= y;
    0.5 * buf.residual.norm_squared() + lambda * x.lp_norm(1)
}

fn residual_norm(
    matrix: &Signal2D,
    x: &DVector<f64>,
    y: &DVector<f64>,
    buf: &mut Buffers,
) -> f64 {
    buf.residual.gemv(1.0, matrix, x, 0.0);
    buf.residual -= y;
    buf.residual.norm()
}

/// Power-method estimate of `||A||_2^2`, the gradient Lipschitz constant.
fn estimate_lipschitz(matrix: &Signal2D, m: usize) -> f64 {
    let mut v = DVector::from_element(m, 1.0 / (m as f64).sqrt());
    let mut estimate = 0.0;
    for _ in 0..POWER_ITERATIONS {
        let w = matrix.tr_mul(&(matrix * &v));
        estimate = w.norm();
        if estimate == 0.0 {
            return 0.0;
        }
        v = w / estimate;
    }
    estimate
}

/// An exact sparse solution found by exhaustive support search.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSolution {
    /// 0-based column indices, ascending.
    pub support: Vec<usize>,
    /// Least-squares coefficients matching `support`.
    pub coefficients: Vec<f64>,
}

/// Exhaustively searches supports of size `0..=s_max` (smallest first,
/// lexicographic within a size) for one whose least-squares fit brings the
/// residual within `tol`. Returns `None` when no such support exists.
///
/// Combinatorial, hence the caps `M <= 20` and `s_max <= 4`.
pub fn l0_oracle(
    phi: &MeasurementMatrix,
    y: &DVector<f64>,
    s_max: usize,
    tol: f64,
) -> Result<Option<SparseSolution>> {
    let m = phi.signal_len();
    let k = phi.measurement_count();
    if m > ORACLE_MAX_SIGNAL_LEN {
        return Err(Error::SizeLimit {
            what: "l0 oracle signal length",
            value: m,
            limit: ORACLE_MAX_SIGNAL_LEN,
        });
    }
    if s_max > ORACLE_MAX_SUPPORT {
        return Err(Error::SizeLimit {
            what: "l0 oracle support size",
            value: s_max,
            limit: ORACLE_MAX_SUPPORT,
        });
    }
    if y.len() != k {
        return Err(Error::DimensionMismatch {
            context: "l0_oracle measurement vector",
            expected: k,
            found: y.len(),
        });
    }
    if !tol.is_finite() || tol <= 0.0 {
        return Err(Error::Domain {
            what: "tol",
            value: tol,
            expected: "positive",
        });
    }

    if y.norm() <= tol {
        return Ok(Some(SparseSolution {
            support: Vec::new(),
            coefficients: Vec::new(),
        }));
    }

    let matrix = phi.entries();
    let mut found = None;
    for size in 1..=s_max.min(m) {
        let mut support_buf: Vec<usize> = (0..size).collect();
        loop {
            let mut sub = Signal2D::zeros(k, size);
            for (j, &col) in support_buf.iter().enumerate() {
                sub.set_column(j, &matrix.column(col));
            }
            let svd = sub.clone().svd(true, true);
            if let Ok(coeff) = svd.solve(y, 1e-14) {
                if (&sub * &coeff - y).norm() <= tol {
                    found = Some(SparseSolution {
                        support: support_buf.clone(),
                        coefficients: coeff.iter().copied().collect(),
                    });
                    break;
                }
            }
            if !advance_combination(&mut support_buf, m) {
                break;
            }
        }
        if found.is_some() {
            break;
        }
    }
    Ok(found)
}

/// Lexicographic successor of a combination; false once exhausted.
fn advance_combination(idx: &mut [usize], m: usize) -> bool {
    let s = idx.len();
    let mut i = s;
    loop {
        if i == 0 {
            return false;
        }
        i -= 1;
        if idx[i] != i + m - s {
            break;
        }
        if i == 0 {
            return false;
        }
    }
    idx[i] += 1;
    for j in i + 1..s {
        idx[j] = idx[j - 1] + 1;
    }
    true
}

/// Per-column outcome of a 2D reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnOutcome {
    pub converged: bool,
    pub iterations_used: usize,
    pub residual_norm: f64,
}

/// A reconstructed 2D signal with per-column solver outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub signal: Signal2D,
    pub columns: Vec<ColumnOutcome>,
}

impl Reconstruction {
    pub fn all_converged(&self) -> bool {
        self.columns.iter().all(|c| c.converged)
    }

    pub fn converged_fraction(&self) -> f64 {
        if self.columns.is_empty() {
            return 1.0;
        }
        self.columns.iter().filter(|c| c.converged).count() as f64 / self.columns.len() as f64
    }
}

/// Decodes every ciphertext column independently with [`l1_solve`].
///
/// Columns are solved in parallel; each column's arithmetic is fixed, so the
/// result does not depend on the thread count.
pub fn pcs_reconstruct(
    ct: &Ciphertext,
    phi: &MeasurementMatrix,
    cfg: &SolverConfig,
) -> Result<Reconstruction> {
    if ct.measurement_count() != phi.measurement_count() {
        return Err(Error::DimensionMismatch {
            context: "reconstruct measurement rows",
            expected: phi.measurement_count(),
            found: ct.measurement_count(),
        });
    }
    if ct.signal_len() != phi.signal_len() {
        return Err(Error::DimensionMismatch {
            context: "reconstruct signal length",
            expected: phi.signal_len(),
            found: ct.signal_len(),
        });
    }
    cfg.validate()?;

    let n = ct.column_count();
    let results: Result<Vec<RecoveryResult>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let column = DVector::from_column_slice(ct.measurements().column(j).as_slice());
            l1_solve(phi, &column, cfg)
        })
        .collect();
    let results = results?;

    let mut signal = Signal2D::zeros(phi.signal_len(), n);
    let mut columns = Vec::with_capacity(n);
    for (j, result) in results.into_iter().enumerate() {
        signal.set_column(j, &result.solution);
        columns.push(ColumnOutcome {
            converged: result.converged,
            iterations_used: result.iterations_used,
            residual_norm: result.residual_norm,
        });
    }
    Ok(Reconstruction { signal, columns })
}
