//! Iterative many-to-one matching solver and its exhaustive oracle.
//!
//! The relaxed assignment vector `p` holds one probability per slot, with the
//! slots of each instance forming a block that sums to 1. Each iteration
//! propagates consistency through the affinity matrix (`q = K·p`), normalizes
//! every block of `q` back onto its simplex, and refines the affinity by
//! scaling row `a` with the ratio of new to old probability of slot `a`, so
//! that rows of strengthening slots gain influence and rows of dying slots
//! lose it. Iteration stops when the ℓ₂ change of `p` drops below `delta` or
//! the iteration budget is spent; the final per-block argmax discretizes `p`
//! into one label per instance.
//!
//! Row scaling deliberately breaks the symmetry of the refined matrix — it is
//! only ever applied as an operator — so the working copy is a plain sparse
//! matrix and no post-refinement symmetry is asserted anywhere.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::affinity::{AffinityMatrix, AssignmentIndex};
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Iteration controls for [`solve`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// Hard cap on iterations.
    pub max_iterations: usize,
    /// Convergence threshold on `‖p⁽ᵗ⁺¹⁾ − p⁽ᵗ⁾‖₂`.
    pub delta: f64,
    /// Probabilities below this are treated as dead when forming the
    /// row-refinement ratio, preventing division blow-ups.
    pub epsilon_div: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iterations: 100,
            delta: 1e-6,
            epsilon_div: 1e-12,
        }
    }
}

impl SolverConfig {
    /// Checks that every field is positive (and the reals finite).
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter(
                "max_iterations must be positive".into(),
            ));
        }
        for (name, v) in [("delta", self.delta), ("epsilon_div", self.epsilon_div)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be a positive real, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Solver state: the relaxed probability vector, the refined working affinity
/// it evolves with, and progress counters.
#[derive(Debug, Clone)]
pub struct MatchState {
    probs: Vec<f64>,
    affinity: CsrMatrix,
    index: AssignmentIndex,
    iteration: usize,
    residual: f64,
}

impl MatchState {
    /// Slot probabilities, blocks summing to 1.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// The refined working affinity (row-scaled; not symmetric in general).
    pub fn affinity(&self) -> &CsrMatrix {
        &self.affinity
    }

    /// The slot index shared with the input matrix.
    pub fn index(&self) -> &AssignmentIndex {
        &self.index
    }

    /// Iterations performed so far.
    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Last `‖Δp‖₂`; infinity before the first step.
    pub fn residual(&self) -> f64 {
        self.residual
    }
}

/// Discretized matching result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    /// One label per instance, always a member of that instance's candidates.
    pub labels: Vec<usize>,
    /// Winning block probability per instance.
    pub confidence: Vec<f64>,
    /// Whether the residual dropped below `delta` within the budget.
    pub converged: bool,
    /// Iterations actually performed.
    pub iterations_used: usize,
}

/// One row of the optional per-iteration trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRecord {
    /// 1-based iteration number.
    pub iteration: usize,
    /// `‖Δp‖₂` of this iteration.
    pub residual: f64,
    /// Relaxed objective `pᵀKp` against the *original* (unrefined) matrix.
    pub objective: f64,
}

/// Writes trace records as CSV (`iteration,residual,objective`).
pub fn write_trace_csv<W: Write>(records: &[TraceRecord], mut sink: W) -> std::io::Result<()> {
    writeln!(sink, "iteration,residual,objective")?;
    for r in records {
        writeln!(sink, "{},{},{}", r.iteration, r.residual, r.objective)?;
    }
    Ok(())
}

/// Initializes the state: every slot of instance `i` starts at `1/|S_i|`.
pub fn init_state(k: &AffinityMatrix) -> MatchState {
    let index = k.index().clone();
    let mut probs = vec![0.0; index.len()];
    for i in 0..index.n_instances() {
        let block = index.block(i);
        let v = 1.0 / block.len() as f64;
        probs[block].fill(v);
    }
    MatchState {
        probs,
        affinity: k.entries().clone(),
        index,
        iteration: 0,
        residual: f64::INFINITY,
    }
}

/// Performs one propagate–normalize–refine iteration in place.
///
/// A block whose propagated mass sums to zero has no surviving consistency
/// with the rest of the problem; it keeps its previous probabilities (logged)
/// rather than dividing by zero.
pub fn step(state: &mut MatchState, cfg: &SolverConfig) {
    let q = state.affinity.mul_vec(&state.probs);
    let mut next = vec![0.0; q.len()];
    for i in 0..state.index.n_instances() {
        let block = state.index.block(i);
        let sum: f64 = q[block.clone()].iter().sum();
        if sum <= 0.0 {
            log::debug!(
                "instance {i}: propagated block mass is zero at iteration {}; keeping previous probabilities",
                state.iteration + 1
            );
            next[block.clone()].copy_from_slice(&state.probs[block]);
        } else {
            for s in block {
                next[s] = q[s] / sum;
            }
        }
    }

    let residual = state
        .probs
        .iter()
        .zip(&next)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();

    // Row refinement: slots that lost all probability keep their rows dead.
    let ratios: Vec<f64> = state
        .probs
        .iter()
        .zip(&next)
        .map(|(&old, &new)| if old < cfg.epsilon_div { 0.0 } else { new / old })
        .collect();
    state.affinity.scale_rows(&ratios);

    state.probs = next;
    state.iteration += 1;
    state.residual = residual;
}

/// Runs the solver to convergence (or budget), then discretizes each block by
/// argmax with ties to the lowest label id.
pub fn solve(k: &AffinityMatrix, cfg: &SolverConfig) -> Result<(MatchState, Resolution)> {
    let (state, resolution, _) = run(k, cfg, false)?;
    Ok((state, resolution))
}

/// Like [`solve`], additionally recording one [`TraceRecord`] per iteration.
pub fn solve_traced(
    k: &AffinityMatrix,
    cfg: &SolverConfig,
) -> Result<(MatchState, Resolution, Vec<TraceRecord>)> {
    run(k, cfg, true)
}

fn run(
    k: &AffinityMatrix,
    cfg: &SolverConfig,
    traced: bool,
) -> Result<(MatchState, Resolution, Vec<TraceRecord>)> {
    cfg.validate()?;
    let mut state = init_state(k);
    let mut trace = Vec::new();
    let mut converged = false;
    for _ in 0..cfg.max_iterations {
        step(&mut state, cfg);
        if traced {
            let q = k.entries().mul_vec(&state.probs);
            let objective: f64 = q.iter().zip(&state.probs).map(|(a, b)| a * b).sum();
            trace.push(TraceRecord {
                iteration: state.iteration,
                residual: state.residual,
                objective,
            });
        }
        if state.residual < cfg.delta {
            converged = true;
            break;
        }
    }

    let resolution = discretize(&state, converged);
    Ok((state, resolution, trace))
}

/// Collapses a relaxed state to one label per instance: per-block argmax of
/// the assignment probabilities, ties to the lowest label id. `converged` is
/// recorded verbatim in the resolution.
pub fn discretize(state: &MatchState, converged: bool) -> Resolution {
    let index = &state.index;
    let m = index.n_instances();
    let mut labels = Vec::with_capacity(m);
    let mut confidence = Vec::with_capacity(m);
    for i in 0..m {
        let block = index.block(i);
        // Strict `>` keeps the first maximum; slots are ordered by ascending
        // label, so ties break to the lowest label id.
        let mut best = block.start;
        for s in block.clone() {
            if state.probs[s] > state.probs[best] {
                best = s;
            }
        }
        labels.push(index.pair(best).1);
        confidence.push(state.probs[best]);
    }
    Resolution {
        labels,
        confidence,
        converged,
        iterations_used: state.iteration,
    }
}

/// The matching objective `pᵀKp` for the 0/1 indicator of `labels`.
///
/// # Errors
///
/// Fails when some `labels[i]` is not a candidate of instance `i`.
pub fn objective(k: &AffinityMatrix, labels: &[usize]) -> Result<f64> {
    let index = k.index();
    if labels.len() != index.n_instances() {
        return Err(Error::InvalidData(format!(
            "{} labels for {} instances",
            labels.len(),
            index.n_instances()
        )));
    }
    let mut slots = Vec::with_capacity(labels.len());
    for (i, &y) in labels.iter().enumerate() {
        let slot = index.slot_of(i, y).ok_or_else(|| {
            Error::InvalidData(format!("label {y} is not a candidate of instance {i}"))
        })?;
        slots.push(slot);
    }
    // `slots` is ascending (one slot per block, blocks are ordered), so each
    // row's chosen columns can be found by binary search.
    let entries = k.entries();
    let mut total = 0.0;
    for &s in &slots {
        let (cols, vals) = entries.row(s);
        for (&c, &v) in cols.iter().zip(vals) {
            if slots.binary_search(&c).is_ok() {
                total += v;
            }
        }
    }
    Ok(total)
}

/// Search-space cap for [`brute_force`].
const MAX_ASSIGNMENTS: u128 = 1_000_000;

/// Exhaustively maximizes `pᵀKp` over all one-candidate-per-instance 0/1
/// assignments. Ties break to the lexicographically smallest label vector.
/// Intended as a test oracle for small problems.
///
/// # Errors
///
/// Fails when the number of feasible assignments `Π|S_i|` exceeds 10⁶.
pub fn brute_force(k: &AffinityMatrix) -> Result<(Vec<usize>, f64)> {
    let index = k.index();
    let m = index.n_instances();
    let mut space: u128 = 1;
    for i in 0..m {
        space = space.saturating_mul(index.block(i).len() as u128);
        if space > MAX_ASSIGNMENTS {
            return Err(Error::SearchSpaceExceeded(space));
        }
    }

    let dense = k.entries().to_dense();
    // Odometer over per-block candidate positions; the leftmost block is the
    // most significant digit, so assignments enumerate in lexicographic label
    // order and strict improvement keeps the smallest maximizer.
    let mut pos = vec![0usize; m];
    let mut best_labels: Option<Vec<usize>> = None;
    let mut best_obj = f64::NEG_INFINITY;
    let mut slots = Vec::with_capacity(m);
    loop {
        slots.clear();
        slots.extend((0..m).map(|i| index.block(i).start + pos[i]));
        let mut obj = 0.0;
        for &a in &slots {
            for &b in &slots {
                obj += dense[[a, b]];
            }
        }
        if obj > best_obj {
            best_obj = obj;
            best_labels = Some(slots.iter().map(|&s| index.pair(s).1).collect());
        }

        // Advance the odometer, rightmost digit fastest.
        let mut i = m;
        loop {
            if i == 0 {
                return Ok((best_labels.expect("at least one assignment"), best_obj));
            }
            i -= 1;
            pos[i] += 1;
            if pos[i] < index.block(i).len() {
                break;
            }
            pos[i] = 0;
        }
    }
}
