//! Partial-label data model, on-disk format, and generators.
//!
//! A partial-label dataset couples an `m × d` feature matrix with one
//! candidate label set per instance; exactly one candidate is the (possibly
//! hidden) ground truth. This module defines the in-memory representation,
//! reads and writes the CSV + JSON-sidecar format, applies the controlled
//! corruption protocol used by the experiments, and generates synthetic
//! Gaussian-cluster fixtures.
//!
//! File format: a header line `f0,...,f{d-1},candidates,truth`, then one data
//! row per instance. `candidates` is a `|`-separated list of label ids; the
//! `truth` field may be empty only when it is empty on every row. A sidecar
//! `<name>.meta.json` records the label count and, optionally, human-readable
//! label names.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Feature matrix plus per-instance candidate label sets and optional hidden
/// ground truth.
///
/// Invariants enforced at construction:
/// - every candidate set is non-empty, sorted, duplicate-free, and all ids
///   are `< label_count`;
/// - when `truth` is present, `truth[i]` is a member of candidate set `i`;
/// - `m ≥ 1`, `d ≥ 1`, `label_count ≥ 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialLabelDataset {
    features: Array2<f64>,
    candidates: Vec<Vec<usize>>,
    truth: Option<Vec<usize>>,
    label_count: usize,
    label_names: Option<Vec<String>>,
}

impl PartialLabelDataset {
    /// Builds a dataset, validating every invariant.
    ///
    /// Candidate sets are sorted internally; duplicate ids within a set are
    /// rejected.
    pub fn new(
        features: Array2<f64>,
        candidates: Vec<Vec<usize>>,
        truth: Option<Vec<usize>>,
        label_count: usize,
    ) -> Result<Self> {
        let (m, d) = features.dim();
        if m == 0 || d == 0 {
            return Err(Error::InvalidData(format!(
                "feature matrix must be non-empty, got {m} × {d}"
            )));
        }
        if label_count < 2 {
            return Err(Error::InvalidData(format!(
                "label count must be at least 2, got {label_count}"
            )));
        }
        if candidates.len() != m {
            return Err(Error::InvalidData(format!(
                "{} candidate sets for {m} instances",
                candidates.len()
            )));
        }
        let mut candidates = candidates;
        for (i, set) in candidates.iter_mut().enumerate() {
            if set.is_empty() {
                return Err(Error::InvalidData(format!(
                    "instance {i}: empty candidate set"
                )));
            }
            set.sort_unstable();
            if set.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidData(format!(
                    "instance {i}: duplicate candidate label"
                )));
            }
            if *set.last().unwrap() >= label_count {
                return Err(Error::InvalidData(format!(
                    "instance {i}: candidate label {} out of range (label count {label_count})",
                    set.last().unwrap()
                )));
            }
        }
        if let Some(ref truth) = truth {
            if truth.len() != m {
                return Err(Error::InvalidData(format!(
                    "{} truth labels for {m} instances",
                    truth.len()
                )));
            }
            for (i, (&t, set)) in truth.iter().zip(&candidates).enumerate() {
                if set.binary_search(&t).is_err() {
                    return Err(Error::InvalidData(format!(
                        "instance {i}: truth label {t} not in candidate set"
                    )));
                }
            }
        }
        Ok(PartialLabelDataset {
            features,
            candidates,
            truth,
            label_count,
            label_names: None,
        })
    }

    /// Attaches human-readable label names. The list length must equal the
    /// label count.
    pub fn with_label_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.label_count {
            return Err(Error::InvalidData(format!(
                "{} label names for {} labels",
                names.len(),
                self.label_count
            )));
        }
        self.label_names = Some(names);
        Ok(self)
    }

    /// Number of instances `m`.
    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    /// True when the dataset has no instances (never holds for a constructed
    /// dataset; provided for idiom).
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Feature dimensionality `d`.
    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// Number of classes `q`.
    pub fn label_count(&self) -> usize {
        self.label_count
    }

    /// Full feature matrix view.
    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    /// Feature row of instance `i`.
    pub fn feature_row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    /// All candidate sets, each sorted ascending.
    pub fn candidates(&self) -> &[Vec<usize>] {
        &self.candidates
    }

    /// Candidate set of instance `i`, sorted ascending.
    pub fn candidate_set(&self, i: usize) -> &[usize] {
        &self.candidates[i]
    }

    /// Ground-truth labels, when present.
    pub fn truth(&self) -> Option<&[usize]> {
        self.truth.as_deref()
    }

    /// Label names, when attached.
    pub fn label_names(&self) -> Option<&[String]> {
        self.label_names.as_deref()
    }

    /// Mean candidate-set cardinality, `(Σ|S_i|)/m`.
    pub fn avg_candidates(&self) -> f64 {
        let total: usize = self.candidates.iter().map(Vec::len).sum();
        total as f64 / self.len() as f64
    }

    /// True when ground truth is present and every candidate set is exactly
    /// the singleton `{truth[i]}` — the precondition of [`corrupt`].
    pub fn is_fully_supervised(&self) -> bool {
        match &self.truth {
            None => false,
            Some(truth) => self
                .candidates
                .iter()
                .zip(truth)
                .all(|(set, &t)| set.len() == 1 && set[0] == t),
        }
    }

    /// Extracts the sub-dataset at `indices` (row order preserved, labels and
    /// names carried over). Fails on out-of-range or duplicate indices.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidData("empty subset".into()));
        }
        let mut seen = vec![false; self.len()];
        for &i in indices {
            if i >= self.len() {
                return Err(Error::InvalidData(format!(
                    "subset index {i} out of range for {} instances",
                    self.len()
                )));
            }
            if seen[i] {
                return Err(Error::InvalidData(format!("duplicate subset index {i}")));
            }
            seen[i] = true;
        }
        let d = self.dim();
        let mut features = Array2::zeros((indices.len(), d));
        for (r, &i) in indices.iter().enumerate() {
            features.row_mut(r).assign(&self.features.row(i));
        }
        let candidates = indices.iter().map(|&i| self.candidates[i].clone()).collect();
        let truth = self
            .truth
            .as_ref()
            .map(|t| indices.iter().map(|&i| t[i]).collect());
        let mut out = PartialLabelDataset::new(features, candidates, truth, self.label_count)?;
        out.label_names = self.label_names.clone();
        Ok(out)
    }
}

/// Controlled-corruption parameters: a fraction `proportion_p` of instances
/// receives `extra_labels_r` false candidate labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    /// Fraction of instances to corrupt, in `[0, 1]`.
    pub proportion_p: f64,
    /// Number of distinct false labels added to each corrupted instance.
    pub extra_labels_r: usize,
    /// RNG seed; output is a pure function of `(dataset, spec)`.
    pub seed: u64,
}

/// Applies controlled partial-label corruption to a fully supervised dataset.
///
/// Exactly `⌊p·m⌋` instances, chosen uniformly without replacement under the
/// seed, receive `r` additional labels drawn uniformly without replacement
/// from the labels other than their truth. All other instances keep their
/// singleton sets, and the truth stays a member of every candidate set.
///
/// # Errors
///
/// Fails when the dataset is not fully supervised (no truth, or a non-singleton
/// candidate set), when `p` is outside `[0, 1]`, or when `r > q − 1` so that
/// `r` distinct false labels cannot be drawn.
pub fn corrupt(dataset: &PartialLabelDataset, spec: &CorruptionSpec) -> Result<PartialLabelDataset> {
    if !dataset.is_fully_supervised() {
        return Err(Error::InvalidData(
            "corrupt requires ground truth and all-singleton candidate sets".into(),
        ));
    }
    if !(0.0..=1.0).contains(&spec.proportion_p) || !spec.proportion_p.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "corruption proportion must be in [0, 1], got {}",
            spec.proportion_p
        )));
    }
    if spec.extra_labels_r == 0 {
        return Err(Error::InvalidParameter(
            "number of extra labels must be positive".into(),
        ));
    }
    let q = dataset.label_count();
    if spec.extra_labels_r > q - 1 {
        return Err(Error::InvalidParameter(format!(
            "cannot draw {} distinct false labels from {} classes",
            spec.extra_labels_r, q
        )));
    }

    let m = dataset.len();
    let truth = dataset.truth().expect("checked above").to_vec();
    let n_corrupt = (spec.proportion_p * m as f64).floor() as usize;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut chosen: Vec<usize> = rand::seq::index::sample(&mut rng, m, n_corrupt).into_vec();
    chosen.sort_unstable();

    let mut candidates: Vec<Vec<usize>> = truth.iter().map(|&t| vec![t]).collect();
    // Labels other than truth[i], re-used as the draw pool for each instance.
    let mut pool: Vec<usize> = Vec::with_capacity(q - 1);
    for &i in &chosen {
        pool.clear();
        pool.extend((0..q).filter(|&y| y != truth[i]));
        let picks = rand::seq::index::sample(&mut rng, pool.len(), spec.extra_labels_r);
        let set = &mut candidates[i];
        set.extend(picks.iter().map(|j| pool[j]));
        set.sort_unstable();
    }

    let mut out = PartialLabelDataset::new(
        dataset.features.clone(),
        candidates,
        Some(truth),
        q,
    )?;
    out.label_names = dataset.label_names.clone();
    Ok(out)
}

/// Generates isotropic Gaussian blobs with the cluster index as ground truth
/// and singleton candidate sets.
///
/// Cluster centers sit at `separation` times orthogonal unit vectors when
/// `clusters ≤ dim`, otherwise at `separation` times seeded random unit
/// directions. Noise is standard normal per coordinate. Deterministic under
/// `seed`.
pub fn synth_clusters(
    clusters: usize,
    per_cluster: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> Result<PartialLabelDataset> {
    if clusters < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 clusters, got {clusters}"
        )));
    }
    if per_cluster == 0 || dim == 0 {
        return Err(Error::InvalidParameter(
            "per_cluster and dim must be positive".into(),
        ));
    }
    if !separation.is_finite() || separation <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "separation must be a positive real, got {separation}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = Array2::zeros((clusters, dim));
    if clusters <= dim {
        for c in 0..clusters {
            centers[[c, c]] = separation;
        }
    } else {
        for c in 0..clusters {
            loop {
                let v: Vec<f64> = (0..dim).map(|_| standard_normal(&mut rng)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 1e-9 {
                    for (j, x) in v.iter().enumerate() {
                        centers[[c, j]] = separation * x / norm;
                    }
                    break;
                }
            }
        }
    }

    let m = clusters * per_cluster;
    let mut features = Array2::zeros((m, dim));
    let mut truth = Vec::with_capacity(m);
    for c in 0..clusters {
        for i in 0..per_cluster {
            let row = c * per_cluster + i;
            for j in 0..dim {
                features[[row, j]] = centers[[c, j]] + standard_normal(&mut rng);
            }
            truth.push(c);
        }
    }
    let candidates = truth.iter().map(|&t| vec![t]).collect();
    PartialLabelDataset::new(features, candidates, Some(truth), clusters)
}

/// Standard normal draw via the Box–Muller transform. `rand`'s uniform source
/// is all this crate needs elsewhere, so the transform is inlined rather than
/// pulling in a distributions crate for one function.
fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let u1: f64 = rng.random();
        if u1 > 0.0 {
            let u2: f64 = rng.random();
            return (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        }
    }
}

/// Sidecar header stored next to each dataset CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    /// Format version; currently always 1.
    pub version: u32,
    /// Number of classes `q`.
    pub label_count: usize,
    /// Optional label dictionary, index = label id.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

/// Path of the JSON sidecar belonging to a dataset CSV
/// (`data/glass.csv → data/glass.meta.json`).
pub fn meta_path(dataset_path: &Path) -> PathBuf {
    dataset_path.with_extension("meta.json")
}

/// Reads a dataset from the CSV format, consulting the `<name>.meta.json`
/// sidecar for the label count and dictionary when present.
///
/// Without a sidecar the label count is inferred as the largest id seen plus
/// one. Malformed rows are reported with their 1-based data-row number.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<PartialLabelDataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let meta = read_meta(path)?;

    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::InvalidFormat(format!("{}: empty file", path.display())))?;
    let d = parse_header(path, header)?;

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut candidates: Vec<Vec<usize>> = Vec::new();
    let mut truths: Vec<Option<usize>> = Vec::new();
    for (idx, line) in lines.enumerate() {
        let row_no = idx + 1;
        if line.is_empty() {
            // Tolerate a trailing newline but nothing else.
            if rows.len() == idx {
                continue;
            }
            return Err(Error::parse(path, row_no, "empty line"));
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d + 2 {
            return Err(Error::parse(
                path,
                row_no,
                format!("expected {} fields, got {}", d + 2, fields.len()),
            ));
        }
        let mut feats = Vec::with_capacity(d);
        for (j, raw) in fields[..d].iter().enumerate() {
            let v: f64 = raw.parse().map_err(|_| {
                Error::parse(path, row_no, format!("invalid number {raw:?} in f{j}"))
            })?;
            feats.push(v);
        }
        let cand_field = fields[d];
        if cand_field.is_empty() {
            return Err(Error::parse(path, row_no, "empty candidate set"));
        }
        let mut set = Vec::new();
        for raw in cand_field.split('|') {
            let id: usize = raw.parse().map_err(|_| {
                Error::parse(path, row_no, format!("invalid candidate label {raw:?}"))
            })?;
            set.push(id);
        }
        set.sort_unstable();
        if set.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::parse(path, row_no, "duplicate candidate label"));
        }
        let truth_field = fields[d + 1];
        let truth = if truth_field.is_empty() {
            None
        } else {
            let id: usize = truth_field.parse().map_err(|_| {
                Error::parse(path, row_no, format!("invalid truth label {truth_field:?}"))
            })?;
            if set.binary_search(&id).is_err() {
                return Err(Error::parse(
                    path,
                    row_no,
                    format!("truth label {id} not in candidate set"),
                ));
            }
            Some(id)
        };
        rows.push(feats);
        candidates.push(set);
        truths.push(truth);
    }

    if rows.is_empty() {
        return Err(Error::InvalidFormat(format!(
            "{}: no data rows",
            path.display()
        )));
    }

    // The truth column is all-or-nothing: a row may leave it empty only when
    // every row does.
    let truth = if truths.iter().all(Option::is_none) {
        None
    } else if truths.iter().all(Option::is_some) {
        Some(truths.into_iter().map(Option::unwrap).collect())
    } else {
        let row_no = truths.iter().position(Option::is_none).unwrap() + 1;
        return Err(Error::parse(
            path,
            row_no,
            "row has empty truth while other rows provide one",
        ));
    };

    let max_id = candidates
        .iter()
        .flatten()
        .copied()
        .max()
        .expect("candidate sets are non-empty");
    let label_count = match &meta {
        Some(meta) => {
            if meta.label_count <= max_id {
                return Err(Error::InvalidData(format!(
                    "label id {max_id} out of range for sidecar label count {}",
                    meta.label_count
                )));
            }
            meta.label_count
        }
        None => (max_id + 1).max(2),
    };

    let m = rows.len();
    let features = Array2::from_shape_vec((m, d), rows.into_iter().flatten().collect())
        .expect("row lengths validated");
    let mut dataset = PartialLabelDataset::new(features, candidates, truth, label_count)?;
    if let Some(meta) = meta {
        if let Some(labels) = meta.labels {
            dataset = dataset.with_label_names(labels)?;
        }
    }
    Ok(dataset)
}

/// Writes a dataset in the CSV format plus its `<name>.meta.json` sidecar.
///
/// Floats are written in shortest round-trip form, so `save` followed by
/// `load` reproduces the dataset exactly.
pub fn save_dataset(dataset: &PartialLabelDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let d = dataset.dim();
    let mut out = String::new();
    for j in 0..d {
        out.push_str(&format!("f{j},"));
    }
    out.push_str("candidates,truth\n");
    for i in 0..dataset.len() {
        for v in dataset.feature_row(i) {
            out.push_str(&format!("{v},"));
        }
        let cand = dataset.candidate_set(i)
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join("|");
        out.push_str(&cand);
        out.push(',');
        if let Some(truth) = dataset.truth() {
            out.push_str(&truth[i].to_string());
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))?;

    let meta = DatasetMeta {
        version: 1,
        label_count: dataset.label_count(),
        labels: dataset.label_names().map(<[String]>::to_vec),
    };
    let meta_file = meta_path(path);
    let json = serde_json::to_string_pretty(&meta)?;
    fs::write(&meta_file, json + "\n").map_err(|e| Error::io(&meta_file, e))?;
    Ok(())
}

fn read_meta(dataset_path: &Path) -> Result<Option<DatasetMeta>> {
    let path = meta_path(dataset_path);
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let meta: DatasetMeta = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidFormat(format!("{}: {e}", path.display())))?;
    if meta.version != 1 {
        return Err(Error::InvalidFormat(format!(
            "{}: unsupported version {}",
            path.display(),
            meta.version
        )));
    }
    if meta.label_count < 2 {
        return Err(Error::InvalidFormat(format!(
            "{}: label count must be at least 2",
            path.display()
        )));
    }
    if let Some(labels) = &meta.labels {
        if labels.len() != meta.label_count {
            return Err(Error::InvalidFormat(format!(
                "{}: {} label names for {} labels",
                path.display(),
                labels.len(),
                meta.label_count
            )));
        }
    }
    Ok(Some(meta))
}

fn parse_header(path: &Path, header: &str) -> Result<usize> {
    let fields: Vec<&str> = header.split(',').collect();
    if fields.len() < 3 || fields[fields.len() - 2] != "candidates" || fields[fields.len() - 1] != "truth" {
        return Err(Error::InvalidFormat(format!(
            "{}: header must be f0,...,f{{d-1}},candidates,truth",
            path.display()
        )));
    }
    let d = fields.len() - 2;
    for (j, field) in fields[..d].iter().enumerate() {
        if *field != format!("f{j}") {
            return Err(Error::InvalidFormat(format!(
                "{}: expected column f{j}, found {field:?}",
                path.display()
            )));
        }
    }
    Ok(d)
}

/// Number of labels actually used by at least one candidate set; handy for
/// sanity checks in callers.
pub fn distinct_candidate_labels(dataset: &PartialLabelDataset) -> usize {
    dataset
        .candidates()
        .iter()
        .flatten()
        .copied()
        .collect::<BTreeSet<_>>()
        .len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use tempfile::tempdir;

    fn toy() -> PartialLabelDataset {
        PartialLabelDataset::new(
            array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]],
            vec![vec![2], vec![0, 1], vec![1]],
            Some(vec![2, 0, 1]),
            3,
        )
        .unwrap()
    }

    #[test]
    fn construction_validates_invariants() {
        // empty candidate set
        let err = PartialLabelDataset::new(
            array![[1.0]],
            vec![vec![]],
            None,
            2,
        )
        .unwrap_err();
        assert!(err.to_string().contains("empty candidate set"));
        // label out of range
        assert!(PartialLabelDataset::new(array![[1.0]], vec![vec![5]], None, 2).is_err());
        // truth outside candidates
        assert!(
            PartialLabelDataset::new(array![[1.0]], vec![vec![0]], Some(vec![1]), 2).is_err()
        );
        // duplicate candidate
        assert!(PartialLabelDataset::new(array![[1.0]], vec![vec![1, 1]], None, 2).is_err());
        // q too small
        assert!(PartialLabelDataset::new(array![[1.0]], vec![vec![0]], None, 1).is_err());
    }

    #[test]
    fn candidates_are_sorted_on_construction() {
        let ds = PartialLabelDataset::new(
            array![[0.0], [0.0]],
            vec![vec![2, 0], vec![1]],
            None,
            3,
        )
        .unwrap();
        assert_eq!(ds.candidate_set(0), &[0, 2]);
    }

    #[test]
    fn load_parses_the_three_row_example() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("toy.csv");
        fs::write(
            &path,
            "f0,f1,candidates,truth\n1,2,2,2\n3,4,0|1,0\n5,6,1,1\n",
        )
        .unwrap();
        let ds = load_dataset(&path).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.dim(), 2);
        assert_eq!(ds.candidate_set(0), &[2]);
        assert_eq!(ds.candidate_set(1), &[0, 1]);
        assert_eq!(ds.candidate_set(2), &[1]);
        assert_eq!(ds.truth(), Some(&[2, 0, 1][..]));
        // no sidecar: label count inferred from the largest id
        assert_eq!(ds.label_count(), 3);
    }

    #[test]
    fn load_reports_the_offending_row() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        // row 5 has an empty candidates field
        fs::write(
            &path,
            "f0,candidates,truth\n1,0,0\n2,0,0\n3,0,0\n4,0,0\n5,,\n",
        )
        .unwrap();
        let err = load_dataset(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 5"), "unexpected message: {msg}");
        assert!(msg.contains("empty candidate set"), "unexpected message: {msg}");
    }

    #[test]
    fn load_rejects_mixed_truth_column() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("mixed.csv");
        fs::write(&path, "f0,candidates,truth\n1,0,0\n2,1,\n").unwrap();
        let err = load_dataset(&path).unwrap_err();
        assert!(err.to_string().contains("row 2"));
    }

    #[test]
    fn round_trip_is_identity() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("rt.csv");
        let ds = toy()
            .with_label_names(vec!["a".into(), "b".into(), "c".into()])
            .unwrap();
        save_dataset(&ds, &path).unwrap();
        let back = load_dataset(&path).unwrap();
        assert_eq!(ds, back);
    }

    #[test]
    fn round_trip_without_truth() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("rt2.csv");
        let ds = PartialLabelDataset::new(
            array![[0.25, -1.5], [3.25, 0.125]],
            vec![vec![0, 1], vec![1]],
            None,
            2,
        )
        .unwrap();
        save_dataset(&ds, &path).unwrap();
        let back = load_dataset(&path).unwrap();
        assert_eq!(ds, back);
        assert!(back.truth().is_none());
    }

    #[test]
    fn saved_bytes_are_deterministic() {
        let dir = tempdir().unwrap();
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        let ds = toy();
        save_dataset(&ds, &a).unwrap();
        save_dataset(&ds, &b).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
        assert_eq!(
            fs::read(meta_path(&a)).unwrap(),
            fs::read(meta_path(&b)).unwrap()
        );
    }

    fn supervised(m: usize, q: usize) -> PartialLabelDataset {
        let features = Array2::from_shape_fn((m, 2), |(i, j)| (i * 2 + j) as f64 + 0.5);
        let truth: Vec<usize> = (0..m).map(|i| i % q).collect();
        let candidates = truth.iter().map(|&t| vec![t]).collect();
        PartialLabelDataset::new(features, candidates, Some(truth), q).unwrap()
    }

    #[test]
    fn corrupt_zero_proportion_is_identity() {
        let ds = supervised(10, 4);
        let out = corrupt(
            &ds,
            &CorruptionSpec {
                proportion_p: 0.0,
                extra_labels_r: 2,
                seed: 7,
            },
        )
        .unwrap();
        assert_eq!(ds, out);
    }

    #[test]
    fn corrupt_full_proportion_forces_cardinalities() {
        let ds = supervised(12, 7);
        let out = corrupt(
            &ds,
            &CorruptionSpec {
                proportion_p: 1.0,
                extra_labels_r: 2,
                seed: 3,
            },
        )
        .unwrap();
        let truth = out.truth().unwrap();
        for (i, &t) in truth.iter().enumerate() {
            assert_eq!(out.candidate_set(i).len(), 3);
            assert!(out.candidate_set(i).contains(&t));
        }
    }

    #[test]
    fn corrupt_count_is_floor_of_p_m() {
        let ds = supervised(10, 5);
        for (p, expect) in [(0.1, 1), (0.25, 2), (0.29, 2), (0.7, 7)] {
            let out = corrupt(
                &ds,
                &CorruptionSpec {
                    proportion_p: p,
                    extra_labels_r: 1,
                    seed: 11,
                },
            )
            .unwrap();
            let ambiguous = (0..out.len())
                .filter(|&i| out.candidate_set(i).len() > 1)
                .count();
            assert_eq!(ambiguous, expect, "p = {p}");
        }
    }

    #[test]
    fn corrupt_is_deterministic() {
        let ds = supervised(30, 6);
        let spec = CorruptionSpec {
            proportion_p: 0.5,
            extra_labels_r: 3,
            seed: 99,
        };
        assert_eq!(corrupt(&ds, &spec).unwrap(), corrupt(&ds, &spec).unwrap());
    }

    #[test]
    fn corrupt_rejects_bad_inputs() {
        let ds = supervised(5, 3);
        // r exceeds q − 1
        assert!(corrupt(
            &ds,
            &CorruptionSpec {
                proportion_p: 0.5,
                extra_labels_r: 3,
                seed: 0
            }
        )
        .is_err());
        // already ambiguous input
        let ambiguous = corrupt(
            &ds,
            &CorruptionSpec {
                proportion_p: 1.0,
                extra_labels_r: 1,
                seed: 0,
            },
        )
        .unwrap();
        assert!(corrupt(
            &ambiguous,
            &CorruptionSpec {
                proportion_p: 0.1,
                extra_labels_r: 1,
                seed: 0
            }
        )
        .is_err());
    }

    #[test]
    fn synth_clusters_shape_and_determinism() {
        let a = synth_clusters(3, 10, 4, 5.0, 42).unwrap();
        let b = synth_clusters(3, 10, 4, 5.0, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 30);
        assert_eq!(a.label_count(), 3);
        let truth = a.truth().unwrap();
        for c in 0..3 {
            assert_eq!(truth.iter().filter(|&&t| t == c).count(), 10);
        }
        assert!(a.is_fully_supervised());
    }

    #[test]
    fn synth_clusters_more_clusters_than_dims() {
        let ds = synth_clusters(5, 4, 2, 8.0, 1).unwrap();
        assert_eq!(ds.len(), 20);
        assert_eq!(ds.label_count(), 5);
    }

    #[test]
    fn synth_clusters_large_separation_is_nn_separable() {
        // With centers 100 noise-σ apart, 1-nearest-neighbor on the generated
        // sample must classify perfectly.
        let ds = synth_clusters(3, 15, 5, 100.0, 7).unwrap();
        let truth = ds.truth().unwrap();
        let feats = ds.features();
        for i in 0..ds.len() {
            let mut best = (f64::INFINITY, usize::MAX);
            for j in 0..ds.len() {
                if i == j {
                    continue;
                }
                let d2: f64 = feats
                    .row(i)
                    .iter()
                    .zip(feats.row(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                if d2 < best.0 {
                    best = (d2, j);
                }
            }
            assert_eq!(truth[best.1], truth[i], "instance {i}");
        }
    }

    #[test]
    fn subset_preserves_rows_and_labels() {
        let ds = toy();
        let sub = ds.subset(&[2, 0]).unwrap();
        assert_eq!(sub.len(), 2);
        assert_eq!(sub.feature_row(0).to_vec(), vec![5.0, 6.0]);
        assert_eq!(sub.candidate_set(1), &[2]);
        assert_eq!(sub.truth(), Some(&[1, 2][..]));
        assert_eq!(sub.label_count(), 3);
        assert!(ds.subset(&[0, 0]).is_err());
        assert!(ds.subset(&[9]).is_err());
    }
}
