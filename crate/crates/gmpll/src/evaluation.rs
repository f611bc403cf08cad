//! Baselines, metrics, cross-validation, and the controlled-corruption sweep.
//!
//! The experimental protocol takes a fully supervised dataset, corrupts a
//! fraction `p` of instances with `r` false candidate labels, and scores two
//! methods under stratified k-fold cross-validation:
//!
//! - **gm-pll** — the graph-matching pipeline of this crate (train +
//!   anchored prediction);
//! - **pl-knn** — the classic averaging baseline: each neighbor votes for
//!   every label in its candidate set, unweighted.
//!
//! Both methods see identical folds, so their per-fold accuracies pair up for
//! a two-sided paired t-test and а win/tie/loss verdict at a fixed
//! significance level. A sweep runs the Cartesian grid over
//! `(p, r, β, α)` cells; every cell derives its own seeds from the master
//! seed and its parameter values alone, making cell results independent of
//! grid enumeration order.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::{corrupt, CorruptionSpec, PartialLabelDataset};
use crate::error::{Error, Result};
use crate::matcher::Resolution;
use crate::predictor::{train, GmConfig, Predictor};
use crate::stats::t_two_sided_p;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Significance level of every win/tie/loss verdict in a sweep.
pub const SIGNIFICANCE: f64 = 0.05;

/// Algorithm under evaluation.
#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    /// Graph-matching pipeline with the given hyperparameters.
    GmPll(GmConfig),
    /// Unweighted candidate-vote baseline over `k` nearest neighbors.
    PlKnn {
        /// Neighborhood size.
        k: usize,
    },
}

impl Method {
    /// Stable identifier used in reports.
    pub fn name(&self) -> &'static str {
        match self {
            Method::GmPll(_) => "gm-pll",
            Method::PlKnn { .. } => "pl-knn",
        }
    }
}

/// Cross-validation result of one method on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Method identifier (`gm-pll` or `pl-knn`).
    pub method: String,
    /// Number of folds.
    pub folds: usize,
    /// Fold-split seed.
    pub seed: u64,
    /// Neighborhood size used by the method.
    pub k: usize,
    /// Fixed prediction-stage candidate count, when one was configured
    /// (graph-matching only).
    pub predict_r: Option<usize>,
    /// Affinity bias coefficient (graph-matching only).
    pub alpha: Option<f64>,
    /// Sparsification threshold (graph-matching only).
    pub beta: Option<f64>,
    /// Corruption proportion, echoed when the dataset came from a sweep cell.
    pub corruption_p: Option<f64>,
    /// False labels per corrupted instance, echoed like `corruption_p`.
    pub corruption_r: Option<usize>,
    /// Per-fold test-set accuracy.
    pub fold_inductive: Vec<f64>,
    /// Per-fold training-set disambiguation accuracy.
    pub fold_transductive: Vec<f64>,
    /// Mean of `fold_inductive`.
    pub inductive_mean: f64,
    /// Sample standard deviation of `fold_inductive`.
    pub inductive_std: f64,
    /// Mean of `fold_transductive`.
    pub transductive_mean: f64,
    /// Sample standard deviation of `fold_transductive`.
    pub transductive_std: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() < 2 {
        0.0
    } else {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
    };
    (mean, var.sqrt())
}

/// Fraction of instances whose resolved label equals the truth.
pub fn transductive_accuracy(resolution: &Resolution, truth: &[usize]) -> f64 {
    assert_eq!(resolution.labels.len(), truth.len(), "length mismatch");
    let hits = resolution
        .labels
        .iter()
        .zip(truth)
        .filter(|(a, b)| a == b)
        .count();
    hits as f64 / truth.len() as f64
}

/// Plain label-vector accuracy.
pub fn accuracy(predicted: &[usize], truth: &[usize]) -> f64 {
    assert_eq!(predicted.len(), truth.len(), "length mismatch");
    let hits = predicted.iter().zip(truth).filter(|(a, b)| a == b).count();
    hits as f64 / truth.len() as f64
}

/// Label for a query under the averaging baseline: every one of the `k`
/// nearest training instances votes for each label in its candidate set;
/// the highest count wins, ties to the lower label id.
pub fn pl_knn_predict(
    train: &PartialLabelDataset,
    x_star: ndarray::ArrayView1<'_, f64>,
    k: usize,
) -> Result<usize> {
    let sims = crate::predictor::query_similarities(train.features(), x_star)?;
    if k == 0 || k > sims.len() {
        return Err(Error::InvalidParameter(format!(
            "k = {k} outside 1..={} training instances",
            sims.len()
        )));
    }
    let neighbors = crate::predictor::top_k_by_similarity(&sims, k);
    let mut counts = vec![0usize; train.label_count()];
    for &n in &neighbors {
        for &y in train.candidate_set(n) {
            counts[y] += 1;
        }
    }
    let mut best = 0;
    for y in 1..counts.len() {
        if counts[y] > counts[best] {
            best = y;
        }
    }
    Ok(best)
}

/// Disambiguates training instance `i` under the averaging baseline: the `k`
/// nearest *other* training instances vote as in [`pl_knn_predict`], but the
/// argmax is restricted to the instance's own candidate set (disambiguation
/// picks among the candidates). Ties break to the lower label id.
pub fn pl_knn_disambiguate(train: &PartialLabelDataset, i: usize, k: usize) -> Result<usize> {
    let sims = crate::predictor::query_similarities(train.features(), train.feature_row(i))?;
    if k == 0 || k + 1 > sims.len() {
        return Err(Error::InvalidParameter(format!(
            "k = {k} needs at least k + 1 training instances, have {}",
            sims.len()
        )));
    }
    let mut order = crate::predictor::top_k_by_similarity(&sims, k + 1);
    order.retain(|&n| n != i);
    order.truncate(k);
    let mut counts = vec![0usize; train.label_count()];
    for &n in &order {
        for &y in train.candidate_set(n) {
            counts[y] += 1;
        }
    }
    let own = train.candidate_set(i);
    let mut best = own[0];
    for &y in &own[1..] {
        if counts[y] > counts[best] {
            best = y;
        }
    }
    Ok(best)
}

/// Stratified fold assignment: per-truth-class member lists are shuffled
/// under the seed, then dealt round-robin with one global cursor, keeping
/// fold sizes within one of each other even when class sizes do not divide
/// evenly. Classes smaller than the fold count cannot appear in every fold;
/// they are dealt the same way (logged) rather than rejected.
///
/// Returns one sorted index list per fold; the lists are disjoint and cover
/// `0..m`.
pub fn stratified_folds(
    dataset: &PartialLabelDataset,
    folds: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    let truth = dataset
        .truth()
        .ok_or_else(|| Error::InvalidData("fold stratification requires ground truth".into()))?;
    if folds < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 folds, got {folds}"
        )));
    }
    if folds > dataset.len() {
        return Err(Error::InvalidParameter(format!(
            "{folds} folds exceed {} instances",
            dataset.len()
        )));
    }

    let q = dataset.label_count();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); q];
    for (i, &t) in truth.iter().enumerate() {
        by_class[t].push(i);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![Vec::new(); folds];
    let mut cursor = 0usize;
    for (label, members) in by_class.iter_mut().enumerate() {
        if !members.is_empty() && members.len() < folds {
            log::warn!(
                "class {label} has {} members, fewer than {folds} folds; it cannot be stratified across all folds",
                members.len()
            );
        }
        members.shuffle(&mut rng);
        for &i in members.iter() {
            assignment[cursor % folds].push(i);
            cursor += 1;
        }
    }
    for fold in &mut assignment {
        fold.sort_unstable();
    }
    Ok(assignment)
}

/// Runs stratified k-fold cross-validation of one method.
///
/// Each fold trains on the complement and records both the training-set
/// disambiguation accuracy (transductive) and the held-out accuracy
/// (inductive). Deterministic for fixed `(dataset, method, folds, seed)`.
pub fn cross_validate(
    dataset: &PartialLabelDataset,
    method: &Method,
    folds: usize,
    seed: u64,
) -> Result<EvalReport> {
    let truth = dataset
        .truth()
        .ok_or_else(|| Error::InvalidData("cross-validation requires ground truth".into()))?;
    let fold_sets = stratified_folds(dataset, folds, seed)?;

    let mut fold_inductive = Vec::with_capacity(folds);
    let mut fold_transductive = Vec::with_capacity(folds);
    for test_idx in &fold_sets {
        let train_idx: Vec<usize> =
            (0..dataset.len()).filter(|i| test_idx.binary_search(i).is_err()).collect();
        let train_ds = dataset.subset(&train_idx)?;
        let train_truth: Vec<usize> = train_idx.iter().map(|&i| truth[i]).collect();
        let test_truth: Vec<usize> = test_idx.iter().map(|&i| truth[i]).collect();

        let (trans, predictions) = match method {
            Method::GmPll(cfg) => {
                let model = train(&train_ds, cfg)?;
                let trans = transductive_accuracy(model.resolved(), &train_truth);
                let predictor = Predictor::new(&model)?;
                let mut predictions = Vec::with_capacity(test_idx.len());
                for &i in test_idx {
                    predictions.push(predictor.predict(dataset.feature_row(i), None, None)?.label);
                }
                (trans, predictions)
            }
            Method::PlKnn { k } => {
                let mut resolved = Vec::with_capacity(train_idx.len());
                for t in 0..train_ds.len() {
                    resolved.push(pl_knn_disambiguate(&train_ds, t, *k)?);
                }
                let trans = accuracy(&resolved, &train_truth);
                let mut predictions = Vec::with_capacity(test_idx.len());
                for &i in test_idx {
                    predictions.push(pl_knn_predict(&train_ds, dataset.feature_row(i), *k)?);
                }
                (trans, predictions)
            }
        };
        fold_transductive.push(trans);
        fold_inductive.push(accuracy(&predictions, &test_truth));
    }

    let (inductive_mean, inductive_std) = mean_std(&fold_inductive);
    let (transductive_mean, transductive_std) = mean_std(&fold_transductive);
    let (k, predict_r, alpha, beta) = match method {
        Method::GmPll(cfg) => (cfg.k, cfg.predict_r, Some(cfg.alpha), Some(cfg.beta)),
        Method::PlKnn { k } => (*k, None, None, None),
    };
    Ok(EvalReport {
        method: method.name().to_string(),
        folds,
        seed,
        k,
        predict_r,
        alpha,
        beta,
        corruption_p: None,
        corruption_r: None,
        fold_inductive,
        fold_transductive,
        inductive_mean,
        inductive_std,
        transductive_mean,
        transductive_std,
    })
}

/// Outcome of a statistical comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    /// First method significantly better.
    Win,
    /// No significant difference.
    Tie,
    /// First method significantly worse.
    Loss,
}

/// Paired two-sided t-test between two accuracy vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// Name of the first method (the one a `win` favors).
    pub method_a: String,
    /// Name of the second method.
    pub method_b: String,
    /// Paired samples of the first method.
    pub samples_a: Vec<f64>,
    /// Paired samples of the second method.
    pub samples_b: Vec<f64>,
    /// Mean of the pairwise differences `a − b`.
    pub mean_diff: f64,
    /// t statistic; absent when the differences have zero variance and a
    /// nonzero mean (the statistic diverges).
    pub t_statistic: Option<f64>,
    /// Two-sided p-value.
    pub p_value: f64,
    /// Significance level the verdict was taken at.
    pub alpha_level: f64,
    /// Win/tie/loss from the first method's perspective.
    pub verdict: Verdict,
}

impl Comparison {
    /// Replaces the method names (the test itself is name-agnostic).
    pub fn with_names(mut self, a: impl Into<String>, b: impl Into<String>) -> Self {
        self.method_a = a.into();
        self.method_b = b.into();
        self
    }
}

/// Two-sided paired t-test on `a − b` at significance `alpha_level`.
///
/// Zero-variance differences short-circuit: all-zero differences are a tie
/// with `p = 1`; constant nonzero differences are a win/loss with `p = 0` and
/// no finite t statistic.
pub fn paired_t_test(a: &[f64], b: &[f64], alpha_level: f64) -> Result<Comparison> {
    if a.len() != b.len() {
        return Err(Error::InvalidParameter(format!(
            "paired vectors differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::InvalidParameter(
            "paired t-test needs at least 2 pairs".into(),
        ));
    }
    if !(0.0..1.0).contains(&alpha_level) || alpha_level == 0.0 {
        return Err(Error::InvalidParameter(format!(
            "significance level must be in (0, 1), got {alpha_level}"
        )));
    }

    let n = a.len() as f64;
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean_diff = diffs.iter().sum::<f64>() / n;
    let var = diffs
        .iter()
        .map(|d| (d - mean_diff) * (d - mean_diff))
        .sum::<f64>()
        / (n - 1.0);
    let sd = var.sqrt();

    let (t_statistic, p_value) = if sd == 0.0 {
        if mean_diff == 0.0 {
            (Some(0.0), 1.0)
        } else {
            (None, 0.0)
        }
    } else {
        let t = mean_diff / (sd / n.sqrt());
        (Some(t), t_two_sided_p(t, a.len() - 1))
    };

    let verdict = if p_value < alpha_level {
        if mean_diff > 0.0 {
            Verdict::Win
        } else {
            Verdict::Loss
        }
    } else {
        Verdict::Tie
    };

    Ok(Comparison {
        method_a: "a".into(),
        method_b: "b".into(),
        samples_a: a.to_vec(),
        samples_b: b.to_vec(),
        mean_diff,
        t_statistic,
        p_value,
        alpha_level,
        verdict,
    })
}

/// Parameter grid of a sweep; the Cartesian product of the four lists is the
/// set of cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    /// Corruption proportions.
    pub p_values: Vec<f64>,
    /// False-label counts.
    pub r_values: Vec<usize>,
    /// Sparsification thresholds.
    pub beta_values: Vec<f64>,
    /// Bias coefficients.
    pub alpha_values: Vec<f64>,
}

impl SweepGrid {
    /// Checks that every list is non-empty and every value is in domain.
    pub fn validate(&self) -> Result<()> {
        if self.p_values.is_empty()
            || self.r_values.is_empty()
            || self.beta_values.is_empty()
            || self.alpha_values.is_empty()
        {
            return Err(Error::InvalidParameter(
                "every grid dimension needs at least one value".into(),
            ));
        }
        for &p in &self.p_values {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidParameter(format!(
                    "corruption proportion {p} outside [0, 1]"
                )));
            }
        }
        for &r in &self.r_values {
            if r == 0 {
                return Err(Error::InvalidParameter(
                    "false-label count must be positive".into(),
                ));
            }
        }
        for &b in &self.beta_values {
            if !(0.0..=1.0).contains(&b) {
                return Err(Error::InvalidParameter(format!(
                    "beta {b} outside [0, 1]"
                )));
            }
        }
        for &a in &self.alpha_values {
            if !a.is_finite() || a < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "alpha {a} must be a non-negative real"
                )));
            }
        }
        Ok(())
    }
}

/// One point of the sweep grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    /// Corruption proportion.
    pub p: f64,
    /// False labels per corrupted instance.
    pub r: usize,
    /// Sparsification threshold.
    pub beta: f64,
    /// Bias coefficient.
    pub alpha: f64,
}

/// Expands a grid into cells in documented order: `p` outermost, then `r`,
/// then `beta`, then `alpha`.
pub fn expand_grid(grid: &SweepGrid) -> Vec<SweepCell> {
    let mut cells = Vec::new();
    for &p in &grid.p_values {
        for &r in &grid.r_values {
            for &beta in &grid.beta_values {
                for &alpha in &grid.alpha_values {
                    cells.push(SweepCell { p, r, beta, alpha });
                }
            }
        }
    }
    cells
}

/// SplitMix64 mixing step; used to derive independent per-cell seeds from the
/// master seed and the cell parameters.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of a cell: a splitmix64 fold over the master seed and the cell's
/// parameter bit patterns. Depends only on `(master_seed, cell)`, never on
/// the cell's position in the grid.
pub fn cell_seed(master_seed: u64, cell: &SweepCell) -> u64 {
    let mut s = splitmix64(master_seed);
    for v in [
        cell.p.to_bits(),
        cell.r as u64,
        cell.beta.to_bits(),
        cell.alpha.to_bits(),
    ] {
        s = splitmix64(s ^ v);
    }
    s
}

/// Results of one sweep cell: both methods on the same corrupted dataset and
/// folds, plus the paired comparison of their inductive accuracies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    /// Corruption proportion of this cell.
    pub p: f64,
    /// False labels per corrupted instance.
    pub r: usize,
    /// Sparsification threshold used by gm-pll.
    pub beta: f64,
    /// Bias coefficient used by gm-pll.
    pub alpha: f64,
    /// Derived cell seed (corruption and folds both descend from it).
    pub cell_seed: u64,
    /// Graph-matching result.
    pub gm_pll: EvalReport,
    /// Baseline result.
    pub pl_knn: EvalReport,
    /// Paired t-test on the per-fold inductive accuracies, gm-pll first.
    pub inductive_comparison: Comparison,
}

/// Runs one sweep cell: corrupt, cross-validate both methods on identical
/// folds, compare. The cell's `beta` and `alpha` replace the corresponding
/// fields of `gm`; everything else (`k`, `predict_r`, solver controls) comes
/// from `gm` and is shared across cells. Pure function of
/// `(base, cell, gm, folds, master_seed)`.
pub fn run_sweep_cell(
    base: &PartialLabelDataset,
    cell: &SweepCell,
    gm: &GmConfig,
    folds: usize,
    master_seed: u64,
) -> Result<CellReport> {
    let seed = cell_seed(master_seed, cell);
    let corrupt_seed = splitmix64(seed ^ 1);
    let cv_seed = splitmix64(seed ^ 2);

    let corrupted = corrupt(
        base,
        &CorruptionSpec {
            proportion_p: cell.p,
            extra_labels_r: cell.r,
            seed: corrupt_seed,
        },
    )?;

    let gm_method = Method::GmPll(GmConfig {
        alpha: cell.alpha,
        beta: cell.beta,
        ..*gm
    });
    let knn_method = Method::PlKnn { k: gm.k };

    let mut gm_pll = cross_validate(&corrupted, &gm_method, folds, cv_seed)?;
    let mut pl_knn = cross_validate(&corrupted, &knn_method, folds, cv_seed)?;
    for report in [&mut gm_pll, &mut pl_knn] {
        report.corruption_p = Some(cell.p);
        report.corruption_r = Some(cell.r);
    }

    let inductive_comparison =
        paired_t_test(&gm_pll.fold_inductive, &pl_knn.fold_inductive, SIGNIFICANCE)?
            .with_names("gm-pll", "pl-knn");

    Ok(CellReport {
        p: cell.p,
        r: cell.r,
        beta: cell.beta,
        alpha: cell.alpha,
        cell_seed: seed,
        gm_pll,
        pl_knn,
        inductive_comparison,
    })
}

/// Win/tie/loss counts of gm-pll against the baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct WinTieLoss {
    /// Cells where gm-pll won.
    pub wins: usize,
    /// Cells without a significant difference.
    pub ties: usize,
    /// Cells where gm-pll lost.
    pub losses: usize,
}

/// Full sweep output: one report per grid cell plus the aggregate tally.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    /// Report format version; currently always 1.
    pub version: u32,
    /// Instance count of the base dataset.
    pub dataset_instances: usize,
    /// Feature dimensionality of the base dataset.
    pub dataset_features: usize,
    /// Class count of the base dataset.
    pub label_count: usize,
    /// Folds per cell.
    pub folds: usize,
    /// Neighborhood size shared by both methods.
    pub k: usize,
    /// Fixed prediction-stage candidate count, when one was configured.
    pub predict_r: Option<usize>,
    /// Master seed the cell seeds derive from.
    pub seed: u64,
    /// Significance level of the verdicts.
    pub significance: f64,
    /// Per-cell results in grid order.
    pub cells: Vec<CellReport>,
    /// Aggregate verdicts of gm-pll vs. the baseline.
    pub tally: WinTieLoss,
}

/// Assembles a [`SweepReport`] from already-computed cells (callers that
/// parallelize cell execution use this to keep report bytes identical to the
/// sequential [`sweep`]).
pub fn assemble_sweep_report(
    base: &PartialLabelDataset,
    folds: usize,
    gm: &GmConfig,
    seed: u64,
    cells: Vec<CellReport>,
) -> SweepReport {
    let mut tally = WinTieLoss::default();
    for cell in &cells {
        match cell.inductive_comparison.verdict {
            Verdict::Win => tally.wins += 1,
            Verdict::Tie => tally.ties += 1,
            Verdict::Loss => tally.losses += 1,
        }
    }
    SweepReport {
        version: 1,
        dataset_instances: base.len(),
        dataset_features: base.dim(),
        label_count: base.label_count(),
        folds,
        k: gm.k,
        predict_r: gm.predict_r,
        seed,
        significance: SIGNIFICANCE,
        cells,
        tally,
    }
}

/// Runs the full corruption sweep sequentially in grid order. The grid
/// supplies per-cell `beta` and `alpha`; `gm` carries the remaining shared
/// hyperparameters as in [`run_sweep_cell`].
pub fn sweep(
    base: &PartialLabelDataset,
    grid: &SweepGrid,
    gm: &GmConfig,
    folds: usize,
    seed: u64,
) -> Result<SweepReport> {
    grid.validate()?;
    let cells = expand_grid(grid)
        .iter()
        .map(|cell| run_sweep_cell(base, cell, gm, folds, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble_sweep_report(base, folds, gm, seed, cells))
}

/// Writes accuracy-vs-p curve data as CSV (`p,mean_acc,std_acc,method`), one
/// gm-pll row and one pl-knn row per cell, in cell order. Means are
/// inductive.
pub fn write_curve_csv<W: Write>(report: &SweepReport, mut sink: W) -> std::io::Result<()> {
    writeln!(sink, "p,mean_acc,std_acc,method")?;
    for cell in &report.cells {
        writeln!(
            sink,
            "{},{},{},{}",
            cell.p, cell.gm_pll.inductive_mean, cell.gm_pll.inductive_std, cell.gm_pll.method
        )?;
        writeln!(
            sink,
            "{},{},{},{}",
            cell.p, cell.pl_knn.inductive_mean, cell.pl_knn.inductive_std, cell.pl_knn.method
        )?;
    }
    Ok(())
}
