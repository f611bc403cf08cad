//! Instance similarity, the flat assignment index, and the affinity matrix.
//!
//! Matching-based disambiguation works on assignment slots: one slot per
//! (instance, candidate-label) pair, `u = Σ|S_i|` slots in total. The affinity
//! matrix `K` scores every slot pair for consistency. Construction runs in
//! four stages:
//!
//! 1. **Base values.** Slots with the same label get the instance similarity
//!    `A(i, j)`; slots with different labels get the complement `1 − A(i, j)`.
//!    Two slots of the same instance with different labels are contradictory
//!    and score 0 (the complement of the unit self-similarity).
//! 2. **Imbalance bias.** Each nonzero entry `(a, b)` is multiplied by
//!    `1 + α·log₂(nnz(row a) + nnz(col b))`, counted on the base matrix, so
//!    that slots participating in many consistencies — typically those of
//!    well-populated classes — are not drowned out by sheer entry count.
//! 3. **Standardization.** Nonzero entries are rescaled to `[0, 1]` by a
//!    global min–max map, which gives the threshold a uniform meaning across
//!    datasets.
//! 4. **Sparsification.** Entries strictly below `β` are dropped.
//!
//! Every stage preserves symmetry, so the result is a symmetric sparse matrix
//! ready for the iterative matcher.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read as _, Write as _};
use std::path::Path;

use ndarray::{Array2, ArrayView1};
use serde::Serialize;

use crate::dataset::PartialLabelDataset;
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Dense symmetric `m × m` matrix of pairwise instance similarities in
/// `[0, 1]`, with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceSimilarity {
    values: Array2<f64>,
}

impl InstanceSimilarity {
    /// Wraps a precomputed similarity matrix, validating shape, symmetry,
    /// range, and unit diagonal.
    pub fn from_values(values: Array2<f64>) -> Result<Self> {
        let (r, c) = values.dim();
        if r != c || r == 0 {
            return Err(Error::InvalidData(format!(
                "similarity matrix must be square and non-empty, got {r} × {c}"
            )));
        }
        for i in 0..r {
            if (values[[i, i]] - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidData(format!(
                    "similarity diagonal entry {i} is {}, expected 1",
                    values[[i, i]]
                )));
            }
            for j in 0..i {
                let v = values[[i, j]];
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidData(format!(
                        "similarity ({i}, {j}) = {v} outside [0, 1]"
                    )));
                }
                if (v - values[[j, i]]).abs() > 1e-12 {
                    return Err(Error::InvalidData(format!(
                        "similarity matrix not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(InstanceSimilarity { values })
    }

    /// Number of instances.
    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    /// True when empty (never holds for a constructed value).
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Similarity of instances `i` and `j`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[[i, j]]
    }

    /// Full matrix view.
    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }
}

/// Cosine of two feature vectors mapped into `[0, 1]` by `(1 + cos)/2`.
///
/// The affine map preserves the similarity ordering and keeps the complement
/// `1 − sim` used by the affinity base values inside `[0, 1]`.
///
/// Returns `None` when either vector has zero norm (cosine undefined).
pub fn mapped_cosine(x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>) -> Option<f64> {
    let nx = x.dot(&x).sqrt();
    let ny = y.dot(&y).sqrt();
    if nx == 0.0 || ny == 0.0 {
        return None;
    }
    let cos = x.dot(&y) / (nx * ny);
    // Guard the [0, 1] range against floating-point overshoot of |cos| ≤ 1.
    Some((0.5 * (1.0 + cos)).clamp(0.0, 1.0))
}

/// Computes the pairwise mapped-cosine similarity matrix of a dataset.
///
/// # Errors
///
/// Fails when some instance has an all-zero feature vector, naming it.
pub fn instance_similarity(dataset: &PartialLabelDataset) -> Result<InstanceSimilarity> {
    let m = dataset.len();
    let feats = dataset.features();
    let mut norms = Vec::with_capacity(m);
    for i in 0..m {
        let row = feats.row(i);
        let n = row.dot(&row).sqrt();
        if n == 0.0 {
            return Err(Error::InvalidData(format!(
                "instance {i}: all-zero feature vector (cosine undefined)"
            )));
        }
        norms.push(n);
    }
    let mut values = Array2::zeros((m, m));
    for i in 0..m {
        values[[i, i]] = 1.0;
        for j in 0..i {
            let cos = feats.row(i).dot(&feats.row(j)) / (norms[i] * norms[j]);
            let v = (0.5 * (1.0 + cos)).clamp(0.0, 1.0);
            values[[i, j]] = v;
            values[[j, i]] = v;
        }
    }
    Ok(InstanceSimilarity { values })
}

/// Bijection between flat slot ids `0..u` and (instance, candidate-label)
/// pairs, ordered by instance and then by ascending candidate label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssignmentIndex {
    pairs: Vec<(usize, usize)>,
    offsets: Vec<usize>,
}

impl AssignmentIndex {
    /// Builds the index directly from candidate sets (each must be non-empty
    /// and sorted ascending, as produced by the dataset type).
    pub fn from_candidate_sets(candidates: &[Vec<usize>]) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::InvalidData("no candidate sets".into()));
        }
        let mut pairs = Vec::new();
        let mut offsets = Vec::with_capacity(candidates.len() + 1);
        offsets.push(0);
        for (i, set) in candidates.iter().enumerate() {
            if set.is_empty() {
                return Err(Error::InvalidData(format!(
                    "instance {i}: empty candidate set"
                )));
            }
            if set.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidData(format!(
                    "instance {i}: candidate set must be strictly ascending"
                )));
            }
            pairs.extend(set.iter().map(|&y| (i, y)));
            offsets.push(pairs.len());
        }
        Ok(AssignmentIndex { pairs, offsets })
    }

    /// Total number of slots `u = Σ|S_i|`.
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    /// True when there are no slots (never holds for a constructed index).
    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Number of instances.
    pub fn n_instances(&self) -> usize {
        self.offsets.len() - 1
    }

    /// The (instance, label) pair of slot `k`.
    pub fn pair(&self, k: usize) -> (usize, usize) {
        self.pairs[k]
    }

    /// All pairs in slot order.
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Slot range of instance `i`.
    pub fn block(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    /// Per-instance block boundaries (length `m + 1`).
    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    /// The slot id of `(instance, label)`, when that label is a candidate.
    pub fn slot_of(&self, instance: usize, label: usize) -> Option<usize> {
        let block = self.block(instance);
        self.pairs[block.clone()]
            .binary_search_by_key(&label, |&(_, y)| y)
            .ok()
            .map(|pos| block.start + pos)
    }
}

/// Builds the assignment index of a dataset.
pub fn build_index(dataset: &PartialLabelDataset) -> AssignmentIndex {
    AssignmentIndex::from_candidate_sets(dataset.candidates())
        .expect("dataset invariants guarantee valid candidate sets")
}

/// Sparse symmetric `u × u` affinity matrix over assignment slots, together
/// with the index describing those slots.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    entries: CsrMatrix,
    index: AssignmentIndex,
}

impl AffinityMatrix {
    /// Wraps a sparse matrix as an affinity matrix, validating dimensions,
    /// symmetry, non-negativity, and the same-instance/different-label zeros.
    pub fn new(entries: CsrMatrix, index: AssignmentIndex) -> Result<Self> {
        let u = index.len();
        if entries.rows() != u || entries.cols() != u {
            return Err(Error::InvalidData(format!(
                "affinity matrix is {} × {}, index has {u} slots",
                entries.rows(),
                entries.cols()
            )));
        }
        if !entries.is_symmetric(1e-9) {
            return Err(Error::InvalidData("affinity matrix not symmetric".into()));
        }
        for (a, b, v) in entries.iter() {
            if v.is_nan() || v < 0.0 {
                return Err(Error::InvalidData(format!(
                    "affinity entry ({a}, {b}) = {v} is negative or NaN"
                )));
            }
            let (ia, ya) = index.pair(a);
            let (ib, yb) = index.pair(b);
            if ia == ib && ya != yb && v != 0.0 {
                return Err(Error::InvalidData(format!(
                    "conflicting slots ({a}, {b}) of instance {ia} carry nonzero affinity"
                )));
            }
        }
        Ok(AffinityMatrix { entries, index })
    }

    /// The sparse entries.
    pub fn entries(&self) -> &CsrMatrix {
        &self.entries
    }

    /// The slot index the matrix was built over.
    pub fn index(&self) -> &AssignmentIndex {
        &self.index
    }

    /// Number of slots `u`.
    pub fn len(&self) -> usize {
        self.index.len()
    }

    /// True when there are no slots (never holds for a constructed matrix).
    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }
}

/// Dense intermediates are `u × u`; refuse sizes that would silently eat
/// gigabytes.
pub const MAX_SLOTS: usize = 20_000;

/// Builds the affinity matrix: base values from instance similarity, the
/// imbalance bias with coefficient `alpha`, global min–max standardization of
/// the nonzeros, and sparsification of entries strictly below `beta`.
///
/// `alpha = 0` makes the bias a no-op; `beta = 0` disables sparsification.
///
/// # Errors
///
/// Fails when `sim` and `index` disagree on the instance count, when `alpha`
/// is negative, `beta` is outside `[0, 1]`, or the slot count exceeds an
/// internal memory guard.
pub fn build_affinity(
    sim: &InstanceSimilarity,
    index: &AssignmentIndex,
    alpha: f64,
    beta: f64,
) -> Result<AffinityMatrix> {
    if sim.len() != index.n_instances() {
        return Err(Error::InvalidData(format!(
            "similarity over {} instances, index over {}",
            sim.len(),
            index.n_instances()
        )));
    }
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "alpha must be a non-negative real, got {alpha}"
        )));
    }
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::InvalidParameter(format!(
            "beta must be in [0, 1], got {beta}"
        )));
    }
    let u = index.len();
    if u > MAX_SLOTS {
        return Err(Error::InvalidParameter(format!(
            "{u} assignment slots exceed the supported maximum of {MAX_SLOTS}"
        )));
    }

    // Stage 1: base values.
    let mut k = Array2::zeros((u, u));
    for a in 0..u {
        let (ia, ya) = index.pair(a);
        for b in 0..=a {
            let (ib, yb) = index.pair(b);
            let v = if ya == yb {
                sim.get(ia, ib)
            } else {
                1.0 - sim.get(ia, ib)
            };
            k[[a, b]] = v;
            k[[b, a]] = v;
        }
    }

    // Stage 2: imbalance bias. Nonzero counts come from the base matrix; on a
    // symmetric matrix row and column counts coincide, so one count per slot
    // serves both roles, and any nonzero entry contributes to both its row and
    // its column, making the log argument at least 2.
    if alpha > 0.0 {
        let mut nnz = vec![0usize; u];
        for a in 0..u {
            nnz[a] = (0..u).filter(|&b| k[[a, b]] > 0.0).count();
        }
        for a in 0..u {
            for b in 0..u {
                if k[[a, b]] > 0.0 {
                    k[[a, b]] *= 1.0 + alpha * ((nnz[a] + nnz[b]) as f64).log2();
                }
            }
        }
    }

    // Stage 3: global min–max standardization of the nonzeros. When all
    // nonzeros share one value the map is degenerate; they standardize to 1.
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in k.iter() {
        if v > 0.0 {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if hi > lo {
        let span = hi - lo;
        k.mapv_inplace(|v| if v > 0.0 { (v - lo) / span } else { 0.0 });
    } else if hi.is_finite() {
        k.mapv_inplace(|v| if v > 0.0 { 1.0 } else { 0.0 });
    }

    // Stage 4: threshold sparsification, strict `<`.
    if beta > 0.0 {
        k.mapv_inplace(|v| if v < beta { 0.0 } else { v });
    }

    let entries = CsrMatrix::from_dense(&k);
    debug_assert!(entries.is_symmetric(1e-12));
    Ok(AffinityMatrix {
        entries,
        index: index.clone(),
    })
}

/// Summary statistics of an affinity matrix, serializable for inspection.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AffinityStats {
    /// Number of assignment slots `u`.
    pub slots: usize,
    /// Number of stored nonzero entries.
    pub nnz: usize,
    /// `nnz / u²`.
    pub density: f64,
    /// Smallest nonzero entry, absent when the matrix is empty.
    pub min_nonzero: Option<f64>,
    /// Largest nonzero entry, absent when the matrix is empty.
    pub max_nonzero: Option<f64>,
    /// Histogram: per-row nonzero count → number of rows with that count.
    pub row_nnz_histogram: BTreeMap<usize, usize>,
}

/// Computes [`AffinityStats`] for a matrix.
pub fn affinity_stats(k: &AffinityMatrix) -> AffinityStats {
    let entries = k.entries();
    let u = entries.rows();
    let mut min_nz = f64::INFINITY;
    let mut max_nz = f64::NEG_INFINITY;
    let mut histogram = BTreeMap::new();
    for r in 0..u {
        let (_, vals) = entries.row(r);
        let count = vals.iter().filter(|&&v| v != 0.0).count();
        *histogram.entry(count).or_insert(0) += 1;
        for &v in vals {
            if v != 0.0 {
                min_nz = min_nz.min(v);
                max_nz = max_nz.max(v);
            }
        }
    }
    let nnz = entries.nnz();
    AffinityStats {
        slots: u,
        nnz,
        density: nnz as f64 / (u as f64 * u as f64),
        min_nonzero: (nnz > 0).then_some(min_nz),
        max_nonzero: (nnz > 0).then_some(max_nz),
        row_nnz_histogram: histogram,
    }
}

const DUMP_MAGIC: &[u8; 4] = b"GMK1";

/// Writes the sparse entries of `k` as a binary dump: the magic `GMK1`, the
/// slot count and entry count as little-endian `u64`, then one
/// `(row: u64, col: u64, value: f64)` little-endian triple per stored entry
/// in `(row, col)` order. Used to cache matrices between CLI runs.
pub fn write_affinity_dump(k: &AffinityMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let entries = k.entries();
    let mut buf = Vec::with_capacity(4 + 16 + entries.nnz() * 24);
    buf.extend_from_slice(DUMP_MAGIC);
    buf.extend_from_slice(&(k.len() as u64).to_le_bytes());
    buf.extend_from_slice(&(entries.nnz() as u64).to_le_bytes());
    for (r, c, v) in entries.iter() {
        buf.extend_from_slice(&(r as u64).to_le_bytes());
        buf.extend_from_slice(&(c as u64).to_le_bytes());
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads a `GMK1` dump back into an affinity matrix over `index`.
///
/// # Errors
///
/// Fails on a bad magic, a slot count that does not match `index`, unsorted
/// or out-of-range triples, or entries violating affinity invariants.
pub fn read_affinity_dump(path: impl AsRef<Path>, index: &AssignmentIndex) -> Result<AffinityMatrix> {
    let path = path.as_ref();
    let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut buf = Vec::new();
    file.read_to_end(&mut buf).map_err(|e| Error::io(path, e))?;

    let bad = |msg: &str| Error::InvalidFormat(format!("{}: {msg}", path.display()));
    if buf.len() < 20 || &buf[..4] != DUMP_MAGIC {
        return Err(bad("missing GMK1 magic"));
    }
    let u = u64::from_le_bytes(buf[4..12].try_into().unwrap()) as usize;
    let nnz = u64::from_le_bytes(buf[12..20].try_into().unwrap()) as usize;
    if u != index.len() {
        return Err(bad(&format!(
            "dump has {u} slots, index has {}",
            index.len()
        )));
    }
    let expected = 20 + nnz.checked_mul(24).ok_or_else(|| bad("entry count overflow"))?;
    if buf.len() != expected {
        return Err(bad(&format!(
            "expected {expected} bytes for {nnz} entries, found {}",
            buf.len()
        )));
    }
    let mut triples = Vec::with_capacity(nnz);
    for e in 0..nnz {
        let at = 20 + e * 24;
        let r = u64::from_le_bytes(buf[at..at + 8].try_into().unwrap()) as usize;
        let c = u64::from_le_bytes(buf[at + 8..at + 16].try_into().unwrap()) as usize;
        let v = f64::from_le_bytes(buf[at + 16..at + 24].try_into().unwrap());
        triples.push((r, c, v));
    }
    let entries = CsrMatrix::from_sorted_triples(u, u, &triples)
        .ok_or_else(|| bad("triples unsorted, duplicated, or out of range"))?;
    AffinityMatrix::new(entries, index.clone())
}
