//! Training and prediction for unseen instances.
//!
//! Training disambiguates the candidate sets by one full matching solve and
//! retains the training features together with the resolved assignments.
//! Prediction then proceeds in two stages:
//!
//! 1. **Candidate assembly.** The query's `k` nearest training instances (by
//!    mapped cosine) are combined through simplex-constrained minimum-error
//!    reconstruction weights; summing each neighbor's weight onto its
//!    resolved label yields per-class confidences, and the `r` highest
//!    confidence labels become the query's working candidate set. `r` comes
//!    from the class statistics of the training data (see [`compute_r`])
//!    unless overridden.
//! 2. **Anchored matching.** A second matching problem is built over the
//!    training instances — each contributing exactly one slot, its resolved
//!    label — plus the query with its `r` candidate slots, using the same
//!    affinity pipeline and parameters as training. Because block
//!    normalization fixes singleton blocks at probability 1, the training
//!    assignments act as anchors that cannot drift; only the query block
//!    evolves, and its argmax is the prediction. Each query is matched
//!    independently against the anchors.

use std::fs;
use std::io::{Read as _, Write as _};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::affinity::{
    build_affinity, build_index, instance_similarity, mapped_cosine, AssignmentIndex,
    InstanceSimilarity,
};
use crate::dataset::PartialLabelDataset;
use crate::error::{Error, Result};
use crate::matcher::{solve, Resolution, SolverConfig};

/// End-to-end hyperparameters: affinity construction, neighborhood size, and
/// solver controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GmConfig {
    /// Imbalance-bias coefficient (`0` disables the bias).
    pub alpha: f64,
    /// Sparsification threshold in `[0, 1]` (`0` keeps every entry).
    pub beta: f64,
    /// Neighborhood size for the prediction stage.
    pub k: usize,
    /// Fixed working-candidate count for prediction; `None` derives it from
    /// the training candidate statistics.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predict_r: Option<usize>,
    /// Matching solver controls.
    pub solver: SolverConfig,
}

impl Default for GmConfig {
    fn default() -> Self {
        GmConfig {
            alpha: 0.1,
            beta: 0.5,
            k: 10,
            predict_r: None,
            solver: SolverConfig::default(),
        }
    }
}

impl GmConfig {
    /// Checks every field against its documented domain.
    pub fn validate(&self) -> Result<()> {
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "alpha must be a non-negative real, got {}",
                self.alpha
            )));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::InvalidParameter(format!(
                "beta must be in [0, 1], got {}",
                self.beta
            )));
        }
        if self.k == 0 {
            return Err(Error::InvalidParameter("k must be positive".into()));
        }
        if self.predict_r == Some(0) {
            return Err(Error::InvalidParameter(
                "predict_r must be positive when set".into(),
            ));
        }
        self.solver.validate()
    }
}

/// Resolved training assignments plus everything prediction needs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    features: Array2<f64>,
    resolved: Resolution,
    label_count: usize,
    avg_candidates: f64,
    config: GmConfig,
}

impl TrainedModel {
    /// Training feature matrix.
    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    /// The matching result on the training data.
    pub fn resolved(&self) -> &Resolution {
        &self.resolved
    }

    /// Number of classes `q`.
    pub fn label_count(&self) -> usize {
        self.label_count
    }

    /// Mean training candidate-set cardinality.
    pub fn avg_candidates(&self) -> f64 {
        self.avg_candidates
    }

    /// Hyperparameters the model was trained with.
    pub fn config(&self) -> &GmConfig {
        &self.config
    }

    /// Number of training instances.
    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    /// True when the model has no training instances (cannot occur for a
    /// trained model).
    pub fn is_empty(&self) -> bool {
        self.features.nrows() == 0
    }

    /// Feature dimensionality.
    pub fn dim(&self) -> usize {
        self.features.ncols()
    }
}

/// Disambiguates `dataset` by graph matching and packages the result for
/// prediction.
pub fn train(dataset: &PartialLabelDataset, config: &GmConfig) -> Result<TrainedModel> {
    config.validate()?;
    let sim = instance_similarity(dataset)?;
    let index = build_index(dataset);
    let k = build_affinity(&sim, &index, config.alpha, config.beta)?;
    let (_, resolved) = solve(&k, &config.solver)?;
    Ok(TrainedModel {
        features: dataset.features().to_owned(),
        resolved,
        label_count: dataset.label_count(),
        avg_candidates: dataset.avg_candidates(),
        config: *config,
    })
}

/// The `k` training instances most similar to `x_star` under mapped cosine,
/// ties broken by lower index.
///
/// # Errors
///
/// Fails when `k` is zero or exceeds the training size, when dimensions
/// mismatch, or when `x_star` (or a training row) has zero norm.
pub fn knn(model: &TrainedModel, x_star: ArrayView1<'_, f64>, k: usize) -> Result<Vec<usize>> {
    let sims = query_similarities(model.features(), x_star)?;
    if k == 0 || k > sims.len() {
        return Err(Error::InvalidParameter(format!(
            "k = {k} outside 1..={} training instances",
            sims.len()
        )));
    }
    Ok(top_k_by_similarity(&sims, k))
}

/// Mapped-cosine similarity of a query against every row of `features`.
pub(crate) fn query_similarities(
    features: ArrayView2<'_, f64>,
    x_star: ArrayView1<'_, f64>,
) -> Result<Vec<f64>> {
    if x_star.len() != features.ncols() {
        return Err(Error::InvalidData(format!(
            "query has {} features, model expects {}",
            x_star.len(),
            features.ncols()
        )));
    }
    let mut sims = Vec::with_capacity(features.nrows());
    for i in 0..features.nrows() {
        let s = mapped_cosine(x_star, features.row(i)).ok_or_else(|| {
            Error::InvalidData("query or training instance has an all-zero feature vector".into())
        })?;
        sims.push(s);
    }
    Ok(sims)
}

/// Indices of the `k` largest similarities, descending, ties to lower index.
pub(crate) fn top_k_by_similarity(sims: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..sims.len()).collect();
    order.sort_by(|&a, &b| {
        sims[b]
            .partial_cmp(&sims[a])
            .expect("similarities are finite")
            .then(a.cmp(&b))
    });
    order.truncate(k);
    order
}

/// Convex reconstruction weights over a neighborhood.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReconstructionWeights {
    /// Training indices of the neighborhood.
    pub neighbor_ids: Vec<usize>,
    /// Non-negative weights summing to 1, aligned with `neighbor_ids`.
    pub weights: Vec<f64>,
    /// False when the iteration budget ran out before reaching stationarity;
    /// the weights are then the best iterate found.
    pub converged: bool,
}

/// Stationarity tolerance of the projected-gradient reconstruction.
const RECONSTRUCT_TOL: f64 = 1e-8;
/// Iteration budget of the projected-gradient reconstruction.
const RECONSTRUCT_MAX_ITER: usize = 1000;

/// Finds simplex-constrained weights minimizing `‖x* − Σ w_c x_c‖²` over the
/// given neighbors by projected gradient descent from the uniform start.
///
/// The step size `1/L` uses the trace bound `L = 2·tr(NNᵀ) ≥ 2·λ_max`, which
/// makes every step a descent step, so the returned objective never exceeds
/// the uniform-weight objective. Iteration stops when successive iterates
/// move less than the stationarity tolerance or the budget runs out (the
/// latter flagged via `converged = false`).
///
/// # Errors
///
/// Fails on an empty or duplicated neighborhood, on out-of-range ids, or on
/// dimension mismatch.
pub fn reconstruct(
    model: &TrainedModel,
    x_star: ArrayView1<'_, f64>,
    neighbor_ids: &[usize],
) -> Result<ReconstructionWeights> {
    if neighbor_ids.is_empty() {
        return Err(Error::InvalidParameter("empty neighborhood".into()));
    }
    let mut sorted = neighbor_ids.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidParameter("duplicate neighbor id".into()));
    }
    if *sorted.last().unwrap() >= model.len() {
        return Err(Error::InvalidParameter(format!(
            "neighbor id {} out of range for {} training instances",
            sorted.last().unwrap(),
            model.len()
        )));
    }
    if x_star.len() != model.dim() {
        return Err(Error::InvalidData(format!(
            "query has {} features, model expects {}",
            x_star.len(),
            model.dim()
        )));
    }

    let k = neighbor_ids.len();
    // Gram matrix G = N·Nᵀ and linear term b = N·x* over neighbor rows.
    let mut gram = Array2::zeros((k, k));
    let mut b = Array1::zeros(k);
    for (r, &i) in neighbor_ids.iter().enumerate() {
        let xi = model.features.row(i);
        b[r] = xi.dot(&x_star);
        for (c, &j) in neighbor_ids.iter().enumerate().take(r + 1) {
            let v = xi.dot(&model.features.row(j));
            gram[[r, c]] = v;
            gram[[c, r]] = v;
        }
    }
    let trace: f64 = (0..k).map(|i| gram[[i, i]]).sum();
    let lip = (2.0 * trace).max(1e-12);

    let mut w = vec![1.0 / k as f64; k];
    let mut converged = false;
    for _ in 0..RECONSTRUCT_MAX_ITER {
        // Gradient of ‖x* − Nᵀw‖² is 2(Gw − b).
        let mut next = vec![0.0; k];
        for r in 0..k {
            let gw: f64 = (0..k).map(|c| gram[[r, c]] * w[c]).sum();
            next[r] = w[r] - 2.0 * (gw - b[r]) / lip;
        }
        project_onto_simplex(&mut next);
        let shift: f64 = w
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        w = next;
        if shift < RECONSTRUCT_TOL {
            converged = true;
            break;
        }
    }

    Ok(ReconstructionWeights {
        neighbor_ids: neighbor_ids.to_vec(),
        weights: w,
        converged,
    })
}

/// Euclidean projection onto the probability simplex (sort-based algorithm),
/// with a final renormalization that removes accumulated rounding so the
/// result sums to 1 to full precision.
fn project_onto_simplex(v: &mut [f64]) {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).expect("finite weights"));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumulative += uj;
        let candidate = (cumulative - 1.0) / (j + 1) as f64;
        if uj - candidate > 0.0 {
            theta = candidate;
        } else {
            break;
        }
    }
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
        sum += *x;
    }
    if sum > 0.0 {
        for x in v.iter_mut() {
            *x /= sum;
        }
    }
}

/// Squared reconstruction error `‖x* − Σ w_c x_c‖²` of a weight vector;
/// exposed for diagnostics and tests.
pub fn reconstruction_objective(
    model: &TrainedModel,
    x_star: ArrayView1<'_, f64>,
    weights: &ReconstructionWeights,
) -> f64 {
    let d = model.dim();
    let mut err = 0.0;
    for j in 0..d {
        let mut combo = 0.0;
        for (&i, &w) in weights.neighbor_ids.iter().zip(&weights.weights) {
            combo += w * model.features[[i, j]];
        }
        let diff = x_star[j] - combo;
        err += diff * diff;
    }
    err
}

/// Per-class confidences: each neighbor votes its resolved label with its
/// reconstruction weight. The result sums to 1.
pub fn candidate_confidences(model: &TrainedModel, weights: &ReconstructionWeights) -> Vec<f64> {
    let mut conf = vec![0.0; model.label_count];
    for (&i, &w) in weights.neighbor_ids.iter().zip(&weights.weights) {
        conf[model.resolved.labels[i]] += w;
    }
    conf
}

/// Size of the working candidate set assembled for a query:
/// `r = round(1 + avg_candidates / log₁₀(q))`, rounded half up and clamped to
/// `[1, q]`.
///
/// # Errors
///
/// Fails when `q < 2` or `avg_candidates < 1`.
pub fn compute_r(label_count: usize, avg_candidates: f64) -> Result<usize> {
    if label_count < 2 {
        return Err(Error::InvalidParameter(format!(
            "label count must be at least 2, got {label_count}"
        )));
    }
    if !avg_candidates.is_finite() || avg_candidates < 1.0 {
        return Err(Error::InvalidParameter(format!(
            "average candidate count must be at least 1, got {avg_candidates}"
        )));
    }
    let raw = 1.0 + avg_candidates / (label_count as f64).log10();
    let rounded = (raw + 0.5).floor();
    Ok((rounded as usize).clamp(1, label_count))
}

/// A single prediction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    /// Predicted label id.
    pub label: usize,
    /// Probability of the winning slot in the anchored matching (or the
    /// winning confidence when the fallback fired).
    pub confidence: f64,
    /// True when every assembled candidate had zero confidence and the
    /// global confidence argmax was returned instead.
    pub used_fallback: bool,
}

/// Reusable prediction context: caches the training-side similarity block so
/// consecutive queries only compute one new row each.
#[derive(Debug)]
pub struct Predictor<'a> {
    model: &'a TrainedModel,
    train_sim: Array2<f64>,
}

impl<'a> Predictor<'a> {
    /// Precomputes training-side similarities for `model`.
    ///
    /// # Errors
    ///
    /// Fails when some training instance has a zero feature vector.
    pub fn new(model: &'a TrainedModel) -> Result<Self> {
        let m = model.len();
        let feats = model.features();
        let mut train_sim = Array2::zeros((m, m));
        for i in 0..m {
            train_sim[[i, i]] = 1.0;
            for j in 0..i {
                let s = mapped_cosine(feats.row(i), feats.row(j)).ok_or_else(|| {
                    Error::InvalidData("training instance has zero feature vector".into())
                })?;
                train_sim[[i, j]] = s;
                train_sim[[j, i]] = s;
            }
        }
        Ok(Predictor { model, train_sim })
    }

    /// The model this predictor wraps.
    pub fn model(&self) -> &TrainedModel {
        self.model
    }

    /// Predicts a label for `x_star`.
    ///
    /// `k_override` replaces the model's neighborhood size for the candidate
    /// assembly; `r_override` replaces the working-candidate count. When
    /// neither `r_override` nor the model's `predict_r` is set, the count is
    /// derived from the training candidate statistics.
    pub fn predict(
        &self,
        x_star: ArrayView1<'_, f64>,
        k_override: Option<usize>,
        r_override: Option<usize>,
    ) -> Result<Prediction> {
        let model = self.model;
        let q = model.label_count;
        let k = k_override.unwrap_or(model.config.k);
        let sims = query_similarities(model.features(), x_star)?;
        if k == 0 || k > sims.len() {
            return Err(Error::InvalidParameter(format!(
                "k = {k} outside 1..={} training instances",
                sims.len()
            )));
        }
        let r = match r_override.or(model.config.predict_r) {
            Some(r) => {
                if r == 0 || r > q {
                    return Err(Error::InvalidParameter(format!(
                        "r = {r} outside 1..={q}"
                    )));
                }
                r
            }
            None => compute_r(q, model.avg_candidates)?,
        };

        // Stage 1: weighted-vote confidences over the k-neighborhood.
        let neighbor_ids = top_k_by_similarity(&sims, k);
        let weights = reconstruct(model, x_star, &neighbor_ids)?;
        let confidences = candidate_confidences(model, &weights);

        // Top-r labels by confidence, ties to lower id.
        let mut by_confidence: Vec<usize> = (0..q).collect();
        by_confidence.sort_by(|&a, &b| {
            confidences[b]
                .partial_cmp(&confidences[a])
                .expect("confidences are finite")
                .then(a.cmp(&b))
        });
        let mut candidate_set: Vec<usize> = by_confidence[..r].to_vec();
        candidate_set.sort_unstable();

        if candidate_set.iter().all(|&y| confidences[y] == 0.0) {
            // Defensive fallback; unreachable when weights sum to 1 because
            // the global maximum is always among the top r.
            let best = by_confidence[0];
            return Ok(Prediction {
                label: best,
                confidence: confidences[best],
                used_fallback: true,
            });
        }
        if r == 1 {
            // Degenerate case: the anchored matching over a single-slot query
            // block cannot move, so answer directly with the vote winner.
            let label = candidate_set[0];
            return Ok(Prediction {
                label,
                confidence: confidences[label],
                used_fallback: false,
            });
        }

        // Stage 2: anchored matching over m singleton anchor slots + r query
        // slots. Assemble the (m+1)-instance similarity from the cached
        // training block and the fresh query row.
        let m = model.len();
        let mut values = Array2::zeros((m + 1, m + 1));
        values
            .slice_mut(ndarray::s![..m, ..m])
            .assign(&self.train_sim);
        for i in 0..m {
            values[[m, i]] = sims[i];
            values[[i, m]] = sims[i];
        }
        values[[m, m]] = 1.0;
        let sim = InstanceSimilarity::from_values(values)?;

        let mut candidates: Vec<Vec<usize>> = model
            .resolved
            .labels
            .iter()
            .map(|&y| vec![y])
            .collect();
        candidates.push(candidate_set);
        let index = AssignmentIndex::from_candidate_sets(&candidates)?;
        let affinity = build_affinity(&sim, &index, model.config.alpha, model.config.beta)?;
        let (state, resolution) = solve(&affinity, &model.config.solver)?;
        debug_assert!(
            resolution.labels[..m] == model.resolved.labels[..],
            "anchored training slots must not drift"
        );
        let _ = state;
        Ok(Prediction {
            label: resolution.labels[m],
            confidence: resolution.confidence[m],
            used_fallback: false,
        })
    }
}

/// One-shot convenience wrapper around [`Predictor::predict`].
pub fn predict(
    model: &TrainedModel,
    x_star: ArrayView1<'_, f64>,
    k_override: Option<usize>,
    r_override: Option<usize>,
) -> Result<Prediction> {
    Predictor::new(model)?.predict(x_star, k_override, r_override)
}

/// Predicts every row of `dataset` against `model` (truth, when present, is
/// ignored). Queries are independent; results preserve row order.
pub fn predict_batch(
    model: &TrainedModel,
    dataset: &PartialLabelDataset,
    k_override: Option<usize>,
    r_override: Option<usize>,
) -> Result<Vec<Prediction>> {
    if dataset.dim() != model.dim() {
        return Err(Error::InvalidData(format!(
            "dataset has {} features, model expects {}",
            dataset.dim(),
            model.dim()
        )));
    }
    let predictor = Predictor::new(model)?;
    (0..dataset.len())
        .map(|i| predictor.predict(dataset.feature_row(i), k_override, r_override))
        .collect()
}

const MODEL_MAGIC: &[u8; 4] = b"GMM1";

#[derive(Serialize, Deserialize)]
struct ModelHeader {
    version: u32,
    instances: usize,
    features: usize,
    label_count: usize,
    avg_candidates: f64,
    config: GmConfig,
    resolved: Resolution,
}

/// Writes a model archive: the magic `GMM1`, a little-endian `u32` header
/// length, the JSON header, then the feature matrix as row-major
/// little-endian `f64`. Byte-deterministic for a given model.
pub fn save_model(model: &TrainedModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let header = ModelHeader {
        version: 1,
        instances: model.len(),
        features: model.dim(),
        label_count: model.label_count,
        avg_candidates: model.avg_candidates,
        config: model.config,
        resolved: model.resolved.clone(),
    };
    let header_json = serde_json::to_vec(&header)?;
    let mut buf =
        Vec::with_capacity(8 + header_json.len() + model.len() * model.dim() * 8);
    buf.extend_from_slice(MODEL_MAGIC);
    buf.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header_json);
    for &v in model.features.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads a model archive written by [`save_model`], validating structure and
/// invariants.
pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel> {
    let path = path.as_ref();
    let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut buf = Vec::new();
    file.read_to_end(&mut buf).map_err(|e| Error::io(path, e))?;

    let bad = |msg: String| Error::InvalidFormat(format!("{}: {msg}", path.display()));
    if buf.len() < 8 || &buf[..4] != MODEL_MAGIC {
        return Err(bad("missing GMM1 magic".into()));
    }
    let header_len = u32::from_le_bytes(buf[4..8].try_into().unwrap()) as usize;
    if buf.len() < 8 + header_len {
        return Err(bad("truncated header".into()));
    }
    let header: ModelHeader = serde_json::from_slice(&buf[8..8 + header_len])
        .map_err(|e| bad(format!("header: {e}")))?;
    if header.version != 1 {
        return Err(bad(format!("unsupported version {}", header.version)));
    }
    let m = header.instances;
    let d = header.features;
    if m == 0 || d == 0 || header.label_count < 2 {
        return Err(bad("degenerate dimensions".into()));
    }
    let expected = 8 + header_len + m * d * 8;
    if buf.len() != expected {
        return Err(bad(format!(
            "expected {expected} bytes for a {m} × {d} feature block, found {}",
            buf.len()
        )));
    }
    if header.resolved.labels.len() != m || header.resolved.confidence.len() != m {
        return Err(bad("resolution length mismatch".into()));
    }
    if header.resolved.labels.iter().any(|&y| y >= header.label_count) {
        return Err(bad("resolved label out of range".into()));
    }
    if header.avg_candidates.is_nan() || header.avg_candidates < 1.0 {
        return Err(bad("average candidate count below 1".into()));
    }
    header.config.validate()?;

    let mut values = Vec::with_capacity(m * d);
    let block = &buf[8 + header_len..];
    for e in 0..m * d {
        let at = e * 8;
        values.push(f64::from_le_bytes(block[at..at + 8].try_into().unwrap()));
    }
    let features = Array2::from_shape_vec((m, d), values).expect("length checked");
    Ok(TrainedModel {
        features,
        resolved: header.resolved,
        label_count: header.label_count,
        avg_candidates: header.avg_candidates,
        config: header.config,
    })
}
