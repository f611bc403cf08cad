//! End-to-end acceptance suite: seven numbered criteria covering solver
//! invariants, exhaustive-oracle equivalence, candidate-depth golden values,
//! reconstruction optimality, the synthetic and benchmark sweep protocols,
//! and report determinism.
//!
//! Every test prints exactly one `criterion N: PASS/FAIL — …` line before its
//! assertions fire, and pins its tolerances and wall-clock budget next to the
//! checks they guard. Criteria 5 and 6 each run a full corruption sweep;
//! criterion 7 re-runs both sweeps and requires byte-identical JSON reports.

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use gmpll::predictor::reconstruction_objective;
use gmpll::{
    brute_force, build_affinity, build_index, compute_r, corrupt, discretize, init_state,
    instance_similarity, load_dataset, objective, reconstruct, solve, step, sweep,
    synth_clusters, train, AffinityMatrix, CorruptionSpec, GmConfig, PartialLabelDataset,
    SolverConfig, SweepGrid, SweepReport,
};

/// Probability-block normalization tolerance.
const BLOCK_SUM_TOL: f64 = 1e-9;
/// Folds used by both sweep criteria.
const FOLDS: usize = 10;
/// Master seed of both sweep criteria.
const SWEEP_SEED: u64 = 0;
/// Cluster-center distance of the synthetic trend benchmark: far enough for
/// a learnable structure, close enough that corruption actually hurts.
const SYNTH_SEPARATION: f64 = 2.5;

fn verdict(n: usize, pass: bool, details: &str) {
    println!(
        "criterion {n}: {} — {details}",
        if pass { "PASS" } else { "FAIL" }
    );
}

fn uniform_features(rng: &mut ChaCha8Rng, m: usize, d: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((m, d), |_| rng.random_range(-scale..scale))
}

/// Random partial-label dataset: uniform features, uniform truth, and up to
/// `max_extras` distinct false candidates per instance.
fn random_partial_dataset(
    rng: &mut ChaCha8Rng,
    max_m: usize,
    max_q: usize,
    max_extras: usize,
) -> PartialLabelDataset {
    let m = rng.random_range(2..=max_m);
    let d = rng.random_range(1..=6);
    let q = rng.random_range(2..=max_q);
    let features = uniform_features(rng, m, d, 1.0);
    let mut candidates = Vec::with_capacity(m);
    let mut truth = Vec::with_capacity(m);
    for _ in 0..m {
        let t = rng.random_range(0..q);
        let extras = rng.random_range(0..=max_extras.min(q - 1));
        let mut others: Vec<usize> = (0..q).filter(|&y| y != t).collect();
        let (chosen, _) = others.partial_shuffle(rng, extras);
        let mut set = vec![t];
        set.extend_from_slice(chosen);
        candidates.push(set);
        truth.push(t);
    }
    PartialLabelDataset::new(features, candidates, Some(truth), q).unwrap()
}

/// Criterion 1: on 200 random small datasets every instance block of the
/// probability vector sums to 1 within 1e-9 after every solver iteration,
/// and the discretized labels stay inside their candidate sets (singletons
/// exactly). Budget 30 s.
#[test]
fn criterion_1_solver_constraints() {
    const BUDGET: Duration = Duration::from_secs(30);
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xAC51);
    let cfg = SolverConfig::default();

    let mut iterations_checked = 0usize;
    let mut worst_block_dev = 0.0f64;
    let mut label_violations = 0usize;
    let mut singleton_violations = 0usize;

    for _case in 0..200 {
        let ds = random_partial_dataset(&mut rng, 50, 8, 3);
        let alpha = [0.0, 0.1, 0.2][rng.random_range(0..3)];
        let beta = rng.random_range(0.3..=0.8);
        let sim = instance_similarity(&ds).unwrap();
        let index = build_index(&ds);
        let aff = build_affinity(&sim, &index, alpha, beta).unwrap();

        let mut state = init_state(&aff);
        for _ in 0..cfg.max_iterations {
            step(&mut state, &cfg);
            iterations_checked += 1;
            for i in 0..index.n_instances() {
                let s: f64 = state.probs()[index.block(i)].iter().sum();
                worst_block_dev = worst_block_dev.max((s - 1.0).abs());
            }
            if state.residual() < cfg.delta {
                break;
            }
        }
        let res = discretize(&state, state.residual() < cfg.delta);
        for i in 0..ds.len() {
            let set = ds.candidate_set(i);
            if !set.contains(&res.labels[i]) {
                label_violations += 1;
            }
            if set.len() == 1 && res.labels[i] != set[0] {
                singleton_violations += 1;
            }
        }
    }

    let elapsed = start.elapsed();
    let pass = worst_block_dev <= BLOCK_SUM_TOL
        && label_violations == 0
        && singleton_violations == 0
        && elapsed <= BUDGET;
    verdict(
        1,
        pass,
        &format!(
            "200 datasets, {iterations_checked} iterations, worst block deviation {worst_block_dev:.2e} \
             (tol 1e-9), {label_violations} out-of-candidate labels, {singleton_violations} singleton \
             violations, {elapsed:.1?} (budget 30s)"
        ),
    );
    assert!(elapsed <= BUDGET, "criterion 1 exceeded its budget: {elapsed:?}");
    assert!(
        worst_block_dev <= BLOCK_SUM_TOL,
        "a probability block drifted from 1 by {worst_block_dev:.3e}"
    );
    assert_eq!(label_violations, 0, "resolved labels left their candidate sets");
    assert_eq!(singleton_violations, 0, "singleton candidate sets were not respected");
}

/// True when `labels` is a dominant assignment of `aff`: for every ordered
/// instance pair (i, j), the chosen slot pair's affinity exceeds the affinity
/// of every competing slot in block i against the chosen slot of j by at
/// least `margin`.
fn is_dominant(aff: &AffinityMatrix, labels: &[usize], margin: f64) -> bool {
    let index = aff.index();
    let m = index.n_instances();
    let slots: Vec<usize> = (0..m)
        .map(|i| index.slot_of(i, labels[i]).expect("label must be a candidate"))
        .collect();
    let entries = aff.entries();
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            let chosen = entries.get(slots[i], slots[j]);
            for a in index.block(i) {
                if a != slots[i] && chosen - entries.get(a, slots[j]) < margin - 1e-12 {
                    return false;
                }
            }
        }
    }
    true
}

/// Criterion 2: on 100 seeded problems small enough for exhaustive search,
/// the solver's discretized objective reaches at least 0.9× the exhaustive
/// optimum in at least 95 cases, and recovers the optimum exactly whenever
/// the optimal assignment is dominant with margin 0.5. Budget 60 s.
#[test]
fn criterion_2_oracle_equivalence() {
    const BUDGET: Duration = Duration::from_secs(60);
    const RATIO: f64 = 0.9;
    const MARGIN: f64 = 0.5;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xAC52);
    let cfg = SolverConfig::default();

    let mut near_optimal = 0usize;
    let mut dominant_cases = 0usize;
    let mut dominant_misses: Vec<(usize, f64, f64)> = Vec::new();

    for case in 0..100 {
        let (ds, alpha, beta) = if case < 60 {
            let ds = random_partial_dataset(&mut rng, 8, 5, 2);
            let alpha = [0.0, 0.1, 0.2][rng.random_range(0..3)];
            let beta = rng.random_range(0.3..=0.8);
            (ds, alpha, beta)
        } else {
            // Two well-separated 1-D clusters, half the instances kept as
            // singleton anchors: similarities are exactly 0 or 1, so the
            // surviving affinity entries standardize to exactly 1 and the
            // true labelling (when the cluster directions oppose) is a
            // maximally dominant assignment.
            let per = rng.random_range(2..=4);
            let clean = synth_clusters(2, per, 1, 50.0, rng.random()).unwrap();
            let spec = CorruptionSpec {
                proportion_p: 0.5,
                extra_labels_r: 1,
                seed: rng.random(),
            };
            (corrupt(&clean, &spec).unwrap(), 0.0, 0.5)
        };

        let sim = instance_similarity(&ds).unwrap();
        let index = build_index(&ds);
        let aff = build_affinity(&sim, &index, alpha, beta).unwrap();
        let (_, resolution) = solve(&aff, &cfg).unwrap();
        let achieved = objective(&aff, &resolution.labels).unwrap();
        let (opt_labels, opt) = brute_force(&aff).unwrap();

        if achieved >= RATIO * opt - 1e-12 {
            near_optimal += 1;
        }
        if is_dominant(&aff, &opt_labels, MARGIN) {
            dominant_cases += 1;
            if achieved < opt - 1e-9 {
                dominant_misses.push((case, achieved, opt));
            }
        }
    }

    let elapsed = start.elapsed();
    let pass = near_optimal >= 95
        && dominant_cases >= 10
        && dominant_misses.is_empty()
        && elapsed <= BUDGET;
    verdict(
        2,
        pass,
        &format!(
            "{near_optimal}/100 within 0.9× of the exhaustive optimum, {dominant_cases} dominant \
             cases ({} recovered exactly), {elapsed:.1?} (budget 60s)",
            dominant_cases - dominant_misses.len()
        ),
    );
    assert!(elapsed <= BUDGET, "criterion 2 exceeded its budget: {elapsed:?}");
    assert!(
        near_optimal >= 95,
        "only {near_optimal}/100 solver objectives reached 0.9× the exhaustive optimum"
    );
    assert!(
        dominant_cases >= 10,
        "dominance check is vacuous: only {dominant_cases} dominant problems were generated"
    );
    assert!(
        dominant_misses.is_empty(),
        "dominant optimum missed in cases {dominant_misses:?}"
    );
}

/// Criterion 3: the candidate-depth formula reproduces the reference values
/// of the five public benchmark corpora from their class counts and mean
/// candidate counts. Budget 1 s.
#[test]
fn criterion_3_candidate_depth_goldens() {
    const BUDGET: Duration = Duration::from_secs(1);
    let start = Instant::now();

    let goldens: [(&str, usize, f64, usize); 4] = [
        ("Lost", 16, 2.33, 3),
        ("MSRCv2", 23, 3.16, 3),
        ("SoccerPlayer", 171, 2.09, 2),
        ("Yahoo! News", 219, 1.91, 2),
    ];
    let mut mismatches: Vec<(&str, usize, usize)> = Vec::new();
    for &(name, q, avg, expect) in &goldens {
        let got = compute_r(q, avg).unwrap();
        if got != expect {
            mismatches.push((name, expect, got));
        }
    }

    // Known difference: round-half-up(1 + 7.48/log10(99)) = round(4.754) = 5,
    // although 4 is sometimes quoted for this corpus. The formula's own value
    // is the one asserted.
    let fgnet = compute_r(99, 7.48).unwrap();

    let elapsed = start.elapsed();
    let pass = mismatches.is_empty() && fgnet == 5 && elapsed <= BUDGET;
    verdict(
        3,
        pass,
        &format!(
            "4/4 reference depths reproduced, FG-NET computes {fgnet} (documented difference from \
             the quoted 4), {elapsed:.1?} (budget 1s)"
        ),
    );
    assert!(elapsed <= BUDGET, "criterion 3 exceeded its budget: {elapsed:?}");
    assert!(mismatches.is_empty(), "depth mismatches (name, expected, got): {mismatches:?}");
    assert_eq!(fgnet, 5, "FG-NET known-difference value changed");
    assert_ne!(fgnet, 4, "FG-NET unexpectedly matches the quoted value; update the notes");
}

/// Exhaustive 0.01-step simplex grid search over five reconstruction weights;
/// returns the smallest squared error found.
fn grid_oracle(features: ndarray::ArrayView2<'_, f64>, x: ndarray::ArrayView1<'_, f64>) -> f64 {
    const STEPS: usize = 100;
    let inv = 1.0 / STEPS as f64;
    let f: Vec<[f64; 3]> = (0..5)
        .map(|c| [features[[c, 0]], features[[c, 1]], features[[c, 2]]])
        .collect();
    let x = [x[0], x[1], x[2]];

    let mut best = f64::INFINITY;
    for i0 in 0..=STEPS {
        let w0 = i0 as f64 * inv;
        let r0 = [x[0] - w0 * f[0][0], x[1] - w0 * f[0][1], x[2] - w0 * f[0][2]];
        for i1 in 0..=STEPS - i0 {
            let w1 = i1 as f64 * inv;
            let r1 = [r0[0] - w1 * f[1][0], r0[1] - w1 * f[1][1], r0[2] - w1 * f[1][2]];
            for i2 in 0..=STEPS - i0 - i1 {
                let w2 = i2 as f64 * inv;
                let r2 = [r1[0] - w2 * f[2][0], r1[1] - w2 * f[2][1], r1[2] - w2 * f[2][2]];
                let rem = STEPS - i0 - i1 - i2;
                // Walk the innermost axis incrementally: r3 tracks the
                // residual at weight i3, and the last weight is whatever
                // mass remains.
                let mut r3 = r2;
                for i3 in 0..=rem {
                    let w4 = (rem - i3) as f64 * inv;
                    let e0 = r3[0] - w4 * f[4][0];
                    let e1 = r3[1] - w4 * f[4][1];
                    let e2 = r3[2] - w4 * f[4][2];
                    let obj = e0 * e0 + e1 * e1 + e2 * e2;
                    if obj < best {
                        best = obj;
                    }
                    r3[0] -= inv * f[3][0];
                    r3[1] -= inv * f[3][1];
                    r3[2] -= inv * f[3][2];
                }
            }
        }
    }
    best
}

/// Criterion 4: on 50 random five-neighbor three-dimensional fixtures the
/// projected-gradient reconstruction matches an exhaustive 0.01-step simplex
/// grid search within 1e-3, and its weights satisfy the simplex constraints
/// within 1e-9. Budget 30 s.
#[test]
fn criterion_4_reconstruction_oracle() {
    const BUDGET: Duration = Duration::from_secs(30);
    const OBJ_TOL: f64 = 1e-3;
    const SIMPLEX_TOL: f64 = 1e-9;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xAC54);

    let mut worst_gap = 0.0f64;
    let mut simplex_violations = 0usize;
    for _case in 0..50 {
        // A small feature scale keeps the grid's discretization error well
        // inside the comparison tolerance.
        let features = uniform_features(&mut rng, 5, 3, 0.25);
        let candidates: Vec<Vec<usize>> = (0..5).map(|c| vec![c]).collect();
        let truth: Vec<usize> = (0..5).collect();
        let ds = PartialLabelDataset::new(features, candidates, Some(truth), 5).unwrap();
        let model = train(&ds, &GmConfig { k: 5, ..GmConfig::default() }).unwrap();

        let x_star = Array1::from_shape_fn(3, |_| rng.random_range(-0.3..0.3));
        let ids: Vec<usize> = (0..5).collect();
        let w = reconstruct(&model, x_star.view(), &ids).unwrap();

        let sum: f64 = w.weights.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL || w.weights.iter().any(|&v| v < -SIMPLEX_TOL) {
            simplex_violations += 1;
        }
        let obj = reconstruction_objective(&model, x_star.view(), &w);
        let oracle = grid_oracle(model.features(), x_star.view());
        worst_gap = worst_gap.max((obj - oracle).abs());
    }

    let elapsed = start.elapsed();
    let pass = worst_gap <= OBJ_TOL && simplex_violations == 0 && elapsed <= BUDGET;
    verdict(
        4,
        pass,
        &format!(
            "50 fixtures, worst objective gap {worst_gap:.2e} (tol 1e-3), {simplex_violations} \
             simplex violations (tol 1e-9), {elapsed:.1?} (budget 30s)"
        ),
    );
    assert!(elapsed <= BUDGET, "criterion 4 exceeded its budget: {elapsed:?}");
    assert!(
        worst_gap <= OBJ_TOL,
        "reconstruction objective diverged from the grid oracle by {worst_gap:.3e}"
    );
    assert_eq!(simplex_violations, 0, "reconstruction weights left the simplex");
}

static SYNTH_REPORT: OnceLock<Vec<u8>> = OnceLock::new();
static GLASS_REPORT: OnceLock<Vec<u8>> = OnceLock::new();

/// The synthetic trend sweep: three Gaussian clusters, seven corruption
/// levels, one extra label. Pure function of its constants.
fn synth_sweep_report() -> SweepReport {
    let base = synth_clusters(3, 100, 5, SYNTH_SEPARATION, 0).unwrap();
    let grid = SweepGrid {
        p_values: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7],
        r_values: vec![1],
        beta_values: vec![0.5],
        alpha_values: vec![0.1],
    };
    sweep(&base, &grid, &GmConfig::default(), FOLDS, SWEEP_SEED).unwrap()
}

/// The benchmark sweep: the glass dataset under the full 21-cell grid
/// (seven corruption levels × one, two, or three extra labels).
fn glass_sweep_report() -> SweepReport {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/glass.csv");
    let base = load_dataset(path).unwrap();
    let grid = SweepGrid {
        p_values: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7],
        r_values: vec![1, 2, 3],
        beta_values: vec![0.5],
        alpha_values: vec![0.1],
    };
    sweep(&base, &grid, &GmConfig::default(), FOLDS, SWEEP_SEED).unwrap()
}

/// Criterion 5: on the synthetic clusters the matcher's mean inductive
/// accuracy is at least the baseline's in at least 5 of 7 corruption levels,
/// and its transductive accuracy at p = 0.3 is at least 0.9. Budget 5 min.
#[test]
fn criterion_5_synthetic_trend() {
    const BUDGET: Duration = Duration::from_secs(300);
    let start = Instant::now();
    let report = synth_sweep_report();
    let elapsed = start.elapsed();
    let _ = SYNTH_REPORT.set(serde_json::to_vec_pretty(&report).unwrap());

    let mut at_least = 0usize;
    let mut trans_at_03 = None;
    for cell in &report.cells {
        if cell.gm_pll.inductive_mean >= cell.pl_knn.inductive_mean {
            at_least += 1;
        }
        if (cell.p - 0.3).abs() < 1e-12 {
            trans_at_03 = Some(cell.gm_pll.transductive_mean);
        }
    }
    let trans = trans_at_03.expect("the grid contains p = 0.3");

    let pass = at_least >= 5 && trans >= 0.9 && elapsed <= BUDGET;
    verdict(
        5,
        pass,
        &format!(
            "matcher mean ≥ baseline in {at_least}/7 corruption levels (needs ≥ 5), transductive \
             {trans:.3} at p=0.3 (needs ≥ 0.9), {elapsed:.1?} (budget 300s)"
        ),
    );
    assert!(elapsed <= BUDGET, "criterion 5 exceeded its budget: {elapsed:?}");
    assert!(
        at_least >= 5,
        "matcher mean accuracy reached the baseline in only {at_least}/7 corruption levels"
    );
    assert!(trans >= 0.9, "transductive accuracy at p=0.3 is {trans:.3}");
}

/// Criterion 6: on the glass benchmark under the 21-cell grid the matcher
/// must win at least 15 cells against the baseline under the paired t-test.
/// Budget 15 min.
#[test]
fn criterion_6_benchmark_tally() {
    const BUDGET: Duration = Duration::from_secs(900);
    const REQUIRED_WINS: usize = 15;
    let start = Instant::now();
    let report = glass_sweep_report();
    let elapsed = start.elapsed();
    let _ = GLASS_REPORT.set(serde_json::to_vec_pretty(&report).unwrap());

    let tally = &report.tally;
    let pass = tally.wins >= REQUIRED_WINS && elapsed <= BUDGET;
    verdict(
        6,
        pass,
        &format!(
            "matcher wins {}/{} cells against the baseline (ties {}, losses {}; needs ≥ \
             {REQUIRED_WINS}), {elapsed:.1?} (budget 900s)",
            tally.wins,
            report.cells.len(),
            tally.ties,
            tally.losses
        ),
    );
    assert!(elapsed <= BUDGET, "criterion 6 exceeded its budget: {elapsed:?}");
    assert!(
        tally.wins >= REQUIRED_WINS,
        "matcher won only {}/{} sweep cells (required ≥ {REQUIRED_WINS}); see the benchmark \
         notes in the README for the measured gap",
        tally.wins,
        report.cells.len()
    );
}

/// Criterion 7: re-running the two sweep criteria with the same seeds yields
/// byte-identical JSON reports.
#[test]
fn criterion_7_report_determinism() {
    let synth_first = SYNTH_REPORT
        .get_or_init(|| serde_json::to_vec_pretty(&synth_sweep_report()).unwrap())
        .clone();
    let synth_again = serde_json::to_vec_pretty(&synth_sweep_report()).unwrap();
    let glass_first = GLASS_REPORT
        .get_or_init(|| serde_json::to_vec_pretty(&glass_sweep_report()).unwrap())
        .clone();
    let glass_again = serde_json::to_vec_pretty(&glass_sweep_report()).unwrap();

    let pass = synth_first == synth_again && glass_first == glass_again;
    verdict(
        7,
        pass,
        &format!(
            "synthetic report {} bytes, benchmark report {} bytes, reruns byte-identical",
            synth_again.len(),
            glass_again.len()
        ),
    );
    assert!(synth_first == synth_again, "synthetic sweep reruns diverged");
    assert!(glass_first == glass_again, "benchmark sweep reruns diverged");
}
