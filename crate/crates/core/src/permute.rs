//! Keyed permutation orders, their application to 2D signals, and
//! column-sparsity accounting.
//!
//! Two generators are provided: `order_by_sorting` ranks a chaotic sequence
//! (the classic O(n log n) sort with an O(n) rank pass), and `order_by_flags`
//! draws candidate slots directly from the orbit. They produce *different*
//! keyed permutations; only their statistical behaviour coincides.

use crate::chaos::{self, ChaoticKey};
use crate::error::{Error, Result};
use crate::Signal2D;
use std::fmt::Write as _;
use std::path::Path;

/// Default magnitude threshold when counting nonzero entries.
///
/// Exact-zero tests are fragile after transforms, so "nonzero" means
/// `|entry| > DEFAULT_SPARSITY_TOL` unless a caller says otherwise.
pub const DEFAULT_SPARSITY_TOL: f64 = 1e-12;

/// Iteration bound for the flag generator, per slot. The uniform invariant
/// density makes every slot reachable with probability one, so the bound only
/// guards against pathological keys; leftover slots are filled in ascending
/// order if it is ever hit.
const FLAG_ITERATION_BOUND_PER_SLOT: u64 = 1_000_000;

/// A bijection on `{1..n}`, stored as the list `Index(1)..Index(n)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermutationOrder {
    indices: Vec<usize>,
}

impl PermutationOrder {
    /// Builds an order from 1-based indices, verifying it is a bijection.
    pub fn new(indices: Vec<usize>) -> Result<Self> {
        let n = indices.len();
        let mut seen = vec![false; n];
        for &idx in &indices {
            if idx == 0 || idx > n {
                return Err(Error::Format {
                    what: "permutation order",
                    detail: format!("index {idx} outside 1..={n}"),
                });
            }
            if seen[idx - 1] {
                return Err(Error::Format {
                    what: "permutation order",
                    detail: format!("index {idx} appears twice"),
                });
            }
            seen[idx - 1] = true;
        }
        Ok(Self { indices })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            indices: (1..=n).collect(),
        }
    }

    /// The 1-based index list; `apply` maps slot `i` to input slot `indices[i-1]`.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.indices.iter().enumerate().all(|(i, &v)| v == i + 1)
    }
}

/// Per-column nonzero counts of a 2D signal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsityVector {
    per_column: Vec<usize>,
    total: usize,
    max: usize,
}

impl SparsityVector {
    pub fn per_column(&self) -> &[usize] {
        &self.per_column
    }

    /// Total sparsity, the l1 norm of the vector.
    pub fn total(&self) -> usize {
        self.total
    }

    /// Worst-column sparsity, the Chebyshev norm of the vector.
    pub fn max(&self) -> usize {
        self.max
    }
}

/// Generates a permutation by ranking `n` post-burn-in iterates.
///
/// `Index(i)` is the rank position of the `i`-th iterate within the sorted
/// sequence; ties (possible in floating point, vanishingly rare) break by
/// original position so the result is always a bijection.
pub fn order_by_sorting(key: &ChaoticKey, n: usize, burn_in: usize) -> PermutationOrder {
    let seq = chaos::iterate(key, burn_in, n);
    let values = seq.values();
    let mut by_value: Vec<usize> = (0..n).collect();
    by_value.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut indices = vec![0usize; n];
    for (rank, &original) in by_value.iter().enumerate() {
        indices[original] = rank + 1;
    }
    PermutationOrder { indices }
}

/// Generates a permutation by drawing candidate slots from the orbit.
///
/// Each iterate proposes slot `max(1, ceil(n * z))`; already-flagged slots
/// are skipped, and iteration continues until all `n` slots are assigned.
pub fn order_by_flags(key: &ChaoticKey, n: usize) -> PermutationOrder {
    let mu = key.mu();
    let mut z = key.z0();
    let mut flagged = vec![false; n];
    let mut indices = Vec::with_capacity(n);
    let bound = FLAG_ITERATION_BOUND_PER_SLOT.saturating_mul(n as u64);
    let mut steps: u64 = 0;
    while indices.len() < n && steps < bound {
        z = match chaos::tent_step(z, mu) {
            Ok(v) => v,
            // Unreachable for a validated key; restart from the escape value.
            Err(_) => chaos::ESCAPE_VALUE,
        };
        steps += 1;
        let slot = ((n as f64 * z).ceil() as usize).clamp(1, n);
        if !flagged[slot - 1] {
            flagged[slot - 1] = true;
            indices.push(slot);
        }
    }
    // Fallback: deterministic fill of whatever the bound left unassigned.
    for (i, done) in flagged.iter().enumerate() {
        if !done {
            indices.push(i + 1);
        }
    }
    PermutationOrder { indices }
}

/// The anti-diagonal zigzag scan of an M x N grid as an order on `{1..MN}`.
///
/// Cells are visited starting from the top-left corner, walking each
/// anti-diagonal alternately up-right (even diagonals) and down-left (odd
/// diagonals); `Index(i)` is the column-major position of the i-th visited
/// cell. A single-row grid therefore yields the identity order.
pub fn zigzag_order(m: usize, n: usize) -> PermutationOrder {
    let mut indices = Vec::with_capacity(m * n);
    for diag in 0..(m + n).saturating_sub(1) {
        let r_lo = diag.saturating_sub(n - 1);
        let r_hi = diag.min(m - 1);
        if diag % 2 == 1 {
            // Down-left: row increases.
            for r in r_lo..=r_hi {
                let c = diag - r;
                indices.push(c * m + r + 1);
            }
        } else {
            // Up-right: row decreases.
            for r in (r_lo..=r_hi).rev() {
                let c = diag - r;
                indices.push(c * m + r + 1);
            }
        }
    }
    PermutationOrder { indices }
}

/// Permutes a 2D signal: flatten column-major, set `x*(i) = x(Index(i))`,
/// reshape back. Pure relocation, no arithmetic on the values.
pub fn apply(x: &Signal2D, order: &PermutationOrder) -> Result<Signal2D> {
    let (m, n) = x.shape();
    if order.len() != m * n {
        return Err(Error::DimensionMismatch {
            context: "permutation apply",
            expected: m * n,
            found: order.len(),
        });
    }
    let input = x.as_slice();
    let mut out = Vec::with_capacity(m * n);
    for &idx in order.indices() {
        out.push(input[idx - 1]);
    }
    Ok(Signal2D::from_vec(m, n, out))
}

/// Undoes [`apply`] exactly: `invert_apply(apply(x, o), o) == x` bitwise.
pub fn invert_apply(x_star: &Signal2D, order: &PermutationOrder) -> Result<Signal2D> {
    let (m, n) = x_star.shape();
    if order.len() != m * n {
        return Err(Error::DimensionMismatch {
            context: "permutation invert",
            expected: m * n,
            found: order.len(),
        });
    }
    let input = x_star.as_slice();
    let mut out = vec![0.0; m * n];
    for (i, &idx) in order.indices().iter().enumerate() {
        out[idx - 1] = input[i];
    }
    Ok(Signal2D::from_vec(m, n, out))
}

/// Counts entries with `|entry| > tol` in each column.
pub fn sparsity_vector(x: &Signal2D, tol: f64) -> SparsityVector {
    let per_column: Vec<usize> = x
        .column_iter()
        .map(|col| col.iter().filter(|v| v.abs() > tol).count())
        .collect();
    let total = per_column.iter().sum();
    let max = per_column.iter().copied().max().unwrap_or(0);
    SparsityVector {
        per_column,
        total,
        max,
    }
}

/// True iff the permutation strictly reduces the worst-column sparsity of `x`.
pub fn is_acceptable(x: &Signal2D, order: &PermutationOrder, tol: f64) -> Result<bool> {
    let permuted = apply(x, order)?;
    Ok(sparsity_vector(&permuted, tol).max() < sparsity_vector(x, tol).max())
}

/// Which expression to evaluate for the acceptability probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AcceptabilityFormula {
    /// `1 - (N^(N+1-s_max) - 1) / ((N-1) * N^N)`, the exact balls-in-boxes count.
    Exact,
    /// `1 - 1 / N^ceil(s/N)`, the closed-form approximation.
    Approximate,
}

/// Probability that a uniformly random permutation is acceptable for a signal
/// with `s` nonzeros and worst-column sparsity `s_max`, spread over `n_cols`
/// columns.
///
/// Evaluated in the log domain so large `n_cols` cannot overflow. A single
/// column returns 0: its worst-column sparsity can never drop.
pub fn acceptability_probability(
    n_cols: usize,
    s: usize,
    s_max: usize,
    formula: AcceptabilityFormula,
) -> f64 {
    if n_cols <= 1 {
        return 0.0;
    }
    let n = n_cols as f64;
    match formula {
        AcceptabilityFormula::Approximate => {
            let exponent = (s as f64 / n).ceil();
            1.0 - (-exponent * n.ln()).exp()
        }
        AcceptabilityFormula::Exact => {
            // (N^(N+1-s_max) - 1) / ((N-1) N^N) split into two log-domain terms.
            let log_denom = (n - 1.0).ln() + n * n.ln();
            let leading = ((n_cols as i64 + 1 - s_max as i64) as f64 * n.ln() - log_denom).exp();
            let correction = (-log_denom).exp();
            (1.0 - (leading - correction)).clamp(0.0, 1.0)
        }
    }
}

/// Serializes an order as text: one 1-based index per line.
pub fn format_order(order: &PermutationOrder) -> String {
    let mut out = String::new();
    for idx in order.indices() {
        let _ = writeln!(out, "{idx}");
    }
    out
}

/// Parses the one-index-per-line format and validates the bijection.
pub fn parse_order(text: &str) -> Result<PermutationOrder> {
    let mut indices = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let idx = line.parse::<usize>().map_err(|_| Error::Format {
            what: "permutation order file",
            detail: format!("`{line}` is not a positive integer"),
        })?;
        indices.push(idx);
    }
    PermutationOrder::new(indices)
}

pub fn write_order_file<P: AsRef<Path>>(path: P, order: &PermutationOrder) -> Result<()> {
    std::fs::write(path, format_order(order))?;
    Ok(())
}

pub fn read_order_file<P: AsRef<Path>>(path: P) -> Result<PermutationOrder> {
    let text = std::fs::read_to_string(path)?;
    parse_order(&text)
}
