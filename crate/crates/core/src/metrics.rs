//! Evaluation metrics: threshold-based success, convergence iteration,
//! sparsity error, and distribution-fitted confidence intervals.
//!
//! The success threshold is the simulated MSE of an "epsilon-perfect" model,
//! a reference solution whose selection weights are off the ideal discrete
//! values by epsilon. Thresholds use a dedicated fixed seed so that success
//! is a pure function of the run, not of threshold noise. Interval choices
//! (Wilson score for rates, moment fit plus parametric bootstrap for
//! convergence and sparsity) are recorded in output metadata so reports are
//! self-describing.

use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::stream;
use crate::stats::{inv_norm_cdf, mean, percentile_sorted, sample_variance};
use crate::tasks::{adt_target, AdtSpec, RangeUnion, TaskKind};
use crate::trainer::{RunRecord, ADT_INPUT_SIZE, ADT_OVERLAP_RATIO, ADT_SUBSET_RATIO};

/// Deviation used for the near-optimal reference model.
pub const THRESHOLD_EPSILON: f64 = 1e-5;
/// Monte Carlo sample count for the simulated threshold MSE.
pub const THRESHOLD_SIMS: usize = 1_000_000;
/// Fixed seed for threshold simulation; recorded next to each threshold.
pub const THRESHOLD_SEED: u64 = 1_000_003;
/// Fixed internal seed for parametric bootstrap resampling.
pub const BOOTSTRAP_SEED: u64 = 4_242_019;
/// Resample count for bootstrap confidence intervals.
pub const BOOTSTRAP_RESAMPLES: usize = 10_000;
/// Confidence level for all reported intervals.
pub const CONFIDENCE_LEVEL: f64 = 0.95;

/// Success threshold for one (task, extrapolation range) group.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub epsilon: f64,
    pub n_sim: usize,
    pub seed: u64,
    pub simulated_mse: f64,
}

/// Prediction of the epsilon-perfect model on the two-input multiplication
/// task: y (1-eps)^2, with the irrelevant-input product empty.
pub fn epsilon_perfect_prediction_smt(y: f64, epsilon: f64) -> f64 {
    y * (1.0 - epsilon) * (1.0 - epsilon)
}

/// Monte Carlo MSE of the epsilon-perfect model on the multiplication task,
/// sampling both inputs from `range`.
pub fn epsilon_perfect_mse_smt(
    range: &RangeUnion,
    epsilon: f64,
    n_sim: usize,
    rng: &mut impl Rng,
) -> f64 {
    assert!(epsilon >= 0.0, "epsilon must be nonnegative");
    let mut acc = 0.0;
    for _ in 0..n_sim {
        let y = range.sample(rng) * range.sample(rng);
        let diff = y - epsilon_perfect_prediction_smt(y, epsilon);
        acc += diff * diff;
    }
    acc / n_sim as f64
}

/// Selection weights of the epsilon-perfect model for a window placement:
/// entries that should be 1 become 1-eps, entries that should be 0 become
/// eps. Column o selects window o.
pub fn adt_selection_weights(spec: &AdtSpec, epsilon: f64) -> Matrix {
    let mut w = Matrix::zeros(spec.input_size, 2);
    for i in 0..spec.input_size {
        let in1 = spec.window1().contains(&i);
        let in2 = spec.window2().contains(&i);
        w.set(i, 0, if in1 { 1.0 - epsilon } else { epsilon });
        w.set(i, 1, if in2 { 1.0 - epsilon } else { epsilon });
    }
    w
}

/// Forward pass of a two-column selection layer followed by an exact product
/// (both product weights 1): (sum_i W_{i,0} x_i) * (sum_i W_{i,1} x_i).
pub fn selection_product(w: &Matrix, row: &[f64]) -> f64 {
    assert_eq!(w.rows(), row.len(), "selection rows must match input length");
    assert_eq!(w.cols(), 2, "selection layer has one column per window");
    let mut z = [0.0; 2];
    for (i, &x) in row.iter().enumerate() {
        z[0] += w.at(i, 0) * x;
        z[1] += w.at(i, 1) * x;
    }
    z[0] * z[1]
}

/// Monte Carlo MSE of the epsilon-perfect model on the subset task: the
/// perturbed optimal selection matrix feeds an exact product layer, compared
/// against true targets over `n_sim` rows sampled from `range`.
pub fn epsilon_perfect_mse_adt(
    spec: &AdtSpec,
    range: &RangeUnion,
    epsilon: f64,
    n_sim: usize,
    rng: &mut impl Rng,
) -> f64 {
    assert!(epsilon >= 0.0, "epsilon must be nonnegative");
    let w = adt_selection_weights(spec, epsilon);
    let mut row = vec![0.0; spec.input_size];
    let mut acc = 0.0;
    for _ in 0..n_sim {
        for v in row.iter_mut() {
            *v = range.sample(rng);
        }
        let diff = adt_target(spec, &row) - selection_product(&w, &row);
        acc += diff * diff;
    }
    acc / n_sim as f64
}

/// Window placement used for group-level thresholds: first window at the
/// left edge, second shifted right. The threshold must be shared by every
/// seed in a (task, range) group, so it cannot depend on a sampled placement.
pub fn canonical_adt_spec() -> AdtSpec {
    let (subset_len, overlap_len) =
        crate::tasks::adt_geometry(ADT_INPUT_SIZE, ADT_SUBSET_RATIO, ADT_OVERLAP_RATIO);
    AdtSpec {
        input_size: ADT_INPUT_SIZE,
        subset_len,
        overlap_len,
        s1: 0,
        s2: subset_len - overlap_len,
    }
}

/// Success threshold for a task over its extrapolation range, simulated with
/// the dedicated threshold seed.
pub fn task_threshold(
    task: TaskKind,
    test_range: &RangeUnion,
    epsilon: f64,
    n_sim: usize,
    seed: u64,
) -> Threshold {
    let simulated_mse = match task {
        TaskKind::Smt => {
            let mut rng = stream(seed, "threshold-smt");
            epsilon_perfect_mse_smt(test_range, epsilon, n_sim, &mut rng)
        }
        TaskKind::Adt => {
            let mut rng = stream(seed, "threshold-adt");
            epsilon_perfect_mse_adt(&canonical_adt_spec(), test_range, epsilon, n_sim, &mut rng)
        }
    };
    Threshold {
        epsilon,
        n_sim,
        seed,
        simulated_mse,
    }
}

/// Threshold with the default epsilon, sample count, and seed.
pub fn default_threshold(task: TaskKind, test_range: &RangeUnion) -> Threshold {
    task_threshold(
        task,
        test_range,
        THRESHOLD_EPSILON,
        THRESHOLD_SIMS,
        THRESHOLD_SEED,
    )
}

/// A run solves the task when its extrapolation MSE is strictly below the
/// threshold.
pub fn success(extrap_mse_at_best: f64, threshold: &Threshold) -> bool {
    extrap_mse_at_best < threshold.simulated_mse
}

/// Success of a whole run: judged at the best (lowest validation error)
/// checkpoint; aborted runs and runs without a checkpoint never succeed.
pub fn run_success(run: &RunRecord, threshold: &Threshold) -> bool {
    if run.failure.is_some() {
        return false;
    }
    match &run.best {
        Some(best) => success(best.extrap_mse, threshold),
        None => false,
    }
}

/// Earliest evaluation iteration at which a successful run beats the
/// threshold; absent for unsuccessful runs.
pub fn convergence_iteration(run: &RunRecord, threshold: &Threshold) -> Option<u64> {
    if !run_success(run, threshold) {
        return None;
    }
    run.eval
        .iter()
        .find(|p| p.extrap_mse < threshold.simulated_mse)
        .map(|p| p.iteration)
}

/// Distance of the single worst weight from the nearest acceptable discrete
/// value: max over all elements of min(|w|, |1 - |w||).
pub fn sparsity_error<'a>(weights: impl IntoIterator<Item = &'a Matrix>) -> f64 {
    let mut worst = 0.0f64;
    for w in weights {
        for &v in w.data() {
            worst = worst.max(v.abs().min((1.0 - v.abs()).abs()));
        }
    }
    worst
}

/// Wilson score interval for a binomial proportion.
pub fn binomial_ci(successes: usize, trials: usize, level: f64) -> (f64, f64) {
    assert!(trials >= 1, "need at least one trial");
    assert!(successes <= trials, "successes cannot exceed trials");
    assert!((0.0..1.0).contains(&level) && level > 0.0, "level in (0,1)");
    let z = inv_norm_cdf(0.5 + level / 2.0);
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    // At the extremes one endpoint is exactly 0 or 1; keep it free of
    // rounding residue.
    let lo = if successes == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if successes == trials { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

fn bootstrap_ci(
    point: f64,
    dist: impl Distribution<f64>,
    n: usize,
    level: f64,
    tag: &str,
) -> (f64, f64, f64) {
    let mut rng = stream(BOOTSTRAP_SEED, tag);
    let mut means = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    for _ in 0..BOOTSTRAP_RESAMPLES {
        let mut acc = 0.0;
        for _ in 0..n {
            acc += dist.sample(&mut rng);
        }
        means.push(acc / n as f64);
    }
    means.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    (
        point,
        percentile_sorted(&means, alpha),
        percentile_sorted(&means, 1.0 - alpha),
    )
}

/// Mean and bootstrap CI of positive samples under a moment-matched Gamma
/// fit. Degenerate inputs (fewer than two samples, zero variance, or an
/// unusable fit) collapse to (mean, mean, mean). Zeros are nudged to 1e-9.
pub fn gamma_ci(samples: &[f64], level: f64) -> (f64, f64, f64) {
    let nudged: Vec<f64> = samples.iter().map(|&v| v.max(1e-9)).collect();
    let m = mean(&nudged);
    if nudged.len() < 2 {
        return (m, m, m);
    }
    let var = sample_variance(&nudged);
    if !(var > 0.0) || !m.is_finite() {
        return (m, m, m);
    }
    let shape = m * m / var;
    let scale = var / m;
    match Gamma::new(shape, scale) {
        Ok(dist) => bootstrap_ci(m, dist, nudged.len(), level, "gamma-ci"),
        Err(_) => (m, m, m),
    }
}

/// Mean and bootstrap CI of samples in [0,1] under a moment-matched Beta
/// fit. Values of exactly 0 or 1 are nudged by 1e-9; degenerate inputs
/// collapse to (mean, mean, mean).
pub fn beta_ci(samples: &[f64], level: f64) -> (f64, f64, f64) {
    let nudged: Vec<f64> = samples
        .iter()
        .map(|&v| v.clamp(1e-9, 1.0 - 1e-9))
        .collect();
    let m = mean(&nudged);
    if nudged.len() < 2 {
        return (m, m, m);
    }
    let var = sample_variance(&nudged);
    if !(var > 0.0) || !m.is_finite() {
        return (m, m, m);
    }
    // Moment fit: alpha + beta = m(1-m)/v - 1.
    let c = m * (1.0 - m) / var - 1.0;
    if !(c > 0.0) {
        return (m, m, m);
    }
    match Beta::new(m * c, (1.0 - m) * c) {
        Ok(dist) => bootstrap_ci(m, dist, nudged.len(), level, "beta-ci"),
        Err(_) => (m, m, m),
    }
}

/// Aggregate over the seeds of one (model, task, range) group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub model: String,
    pub model_desc: String,
    pub task: TaskKind,
    pub range: String,
    pub seeds: Vec<u64>,
    pub n_seeds: usize,
    /// Runs aborted on non-finite values.
    pub aborted: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub success_lo: f64,
    pub success_hi: f64,
    /// Mean solved iteration over successful seeds; absent without successes.
    pub convergence_mean: Option<f64>,
    pub convergence_lo: Option<f64>,
    pub convergence_hi: Option<f64>,
    /// Mean sparsity error at the best checkpoint over completed runs with
    /// discrete-target weights.
    pub sparsity_mean: Option<f64>,
    pub sparsity_lo: Option<f64>,
    pub sparsity_hi: Option<f64>,
    pub threshold: Threshold,
}

/// Summarise the runs of one group. All runs must share model kind, task,
/// and range.
pub fn summarize_group(runs: &[&RunRecord], threshold: &Threshold) -> Result<SummaryRecord> {
    let first = *runs
        .first()
        .ok_or_else(|| Error::invalid("cannot summarise an empty run group"))?;
    for r in runs {
        if r.kind.id() != first.kind.id() || r.task != first.task || r.range != first.range {
            return Err(Error::invalid(format!(
                "mixed summary group: {} vs {}",
                r.run_id(),
                first.run_id()
            )));
        }
    }
    let n_seeds = runs.len();
    let successes = runs.iter().filter(|r| run_success(r, threshold)).count();
    let (success_lo, success_hi) = binomial_ci(successes, n_seeds, CONFIDENCE_LEVEL);

    let solved: Vec<f64> = runs
        .iter()
        .filter_map(|r| convergence_iteration(r, threshold))
        .map(|i| i as f64)
        .collect();
    let (convergence_mean, convergence_lo, convergence_hi) = if solved.is_empty() {
        (None, None, None)
    } else {
        let (m, lo, hi) = gamma_ci(&solved, CONFIDENCE_LEVEL);
        (Some(m), Some(lo), Some(hi))
    };

    let sparsity: Vec<f64> = runs
        .iter()
        .filter(|r| r.failure.is_none())
        .filter_map(|r| r.best.as_ref().and_then(|b| b.sparsity_error))
        .collect();
    let (sparsity_mean, sparsity_lo, sparsity_hi) = if sparsity.is_empty() {
        (None, None, None)
    } else {
        let (m, lo, hi) = beta_ci(&sparsity, CONFIDENCE_LEVEL);
        (Some(m), Some(lo), Some(hi))
    };

    Ok(SummaryRecord {
        model: first.kind.id(),
        model_desc: first.kind.to_string(),
        task: first.task,
        range: first.range.clone(),
        seeds: runs.iter().map(|r| r.seed).collect(),
        n_seeds,
        aborted: runs.iter().filter(|r| r.failure.is_some()).count(),
        successes,
        success_rate: successes as f64 / n_seeds as f64,
        success_lo,
        success_hi,
        convergence_mean,
        convergence_lo,
        convergence_hi,
        sparsity_mean,
        sparsity_lo,
        sparsity_hi,
        threshold: *threshold,
    })
}
