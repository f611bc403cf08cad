//! Partial-label learning by probabilistic graph matching.
//!
//! In partial-label data every training instance carries a *set* of candidate
//! labels, exactly one of which is the (unobserved) ground truth. This crate
//! disambiguates such data by casting instance-to-label assignment as a
//! many-to-one graph matching problem: each (instance, candidate) pair is an
//! assignment slot, slots are connected by an affinity matrix that scores how
//! compatible two assignments are, and a relaxed matching solver iterates a
//! power-style update over the assignment probabilities until each instance's
//! candidate block stabilizes on its most supported label.
//!
//! The pipeline is split into five modules:
//!
//! - [`dataset`] — the [`PartialLabelDataset`] container, CSV/JSON loading,
//!   controlled corruption of supervised data, and synthetic cluster
//!   generation;
//! - [`affinity`] — instance similarity, the slot index, and the four-stage
//!   affinity construction (base scores, connectivity bias, standardization,
//!   sparsification);
//! - [`matcher`] — the iterative matching solver, its exhaustive reference
//!   counterpart, and the matching objective;
//! - [`predictor`] — inductive prediction for unseen instances: neighborhood
//!   reconstruction, candidate screening, and an anchored second matching
//!   pass against the resolved training set;
//! - [`evaluation`] — the pl-knn baseline, stratified cross-validation,
//!   paired significance testing, and the corruption sweep protocol.
//!
//! Everything is deterministic given explicit seeds: random choices go
//! through seeded ChaCha8 streams and reports serialize with stable field
//! order, so identical inputs produce byte-identical outputs.
//!
//! ```
//! use gmpll::{synth_clusters, corrupt, CorruptionSpec, train, GmConfig, Predictor};
//!
//! // Three Gaussian clusters, then hide the truth of half the instances
//! // behind one extra candidate each.
//! let clean = synth_clusters(3, 20, 5, 4.0, 7).unwrap();
//! let spec = CorruptionSpec { proportion_p: 0.5, extra_labels_r: 1, seed: 11 };
//! let data = corrupt(&clean, &spec).unwrap();
//!
//! let model = train(&data, &GmConfig::default()).unwrap();
//! let predictor = Predictor::new(&model).unwrap();
//! let p = predictor.predict(data.feature_row(0), None, None).unwrap();
//! assert!(p.label < data.label_count());
//! ```

pub mod affinity;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod matcher;
pub mod predictor;
pub mod sparse;
mod stats;

pub use affinity::{
    affinity_stats, build_affinity, build_index, instance_similarity, read_affinity_dump,
    write_affinity_dump, AffinityMatrix, AffinityStats, AssignmentIndex, InstanceSimilarity,
    MAX_SLOTS,
};
pub use dataset::{
    corrupt, load_dataset, save_dataset, synth_clusters, CorruptionSpec, DatasetMeta,
    PartialLabelDataset,
};
pub use error::{Error, Result};
pub use evaluation::{
    accuracy, assemble_sweep_report, cell_seed, cross_validate, expand_grid, paired_t_test,
    pl_knn_disambiguate, pl_knn_predict, run_sweep_cell, stratified_folds, sweep,
    transductive_accuracy, write_curve_csv, CellReport, Comparison, EvalReport, Method,
    SweepCell, SweepGrid, SweepReport, Verdict, WinTieLoss, SIGNIFICANCE,
};
pub use matcher::{
    brute_force, discretize, init_state, objective, solve, solve_traced, step, write_trace_csv,
    MatchState, Resolution, SolverConfig, TraceRecord,
};
pub use predictor::{
    candidate_confidences, compute_r, knn, load_model, predict, predict_batch, reconstruct,
    save_model, train, GmConfig, Prediction, Predictor, ReconstructionWeights, TrainedModel,
};
pub use sparse::CsrMatrix;
