//! The run subcommand: execute the configured sweep with a worker pool,
//! resume past completed runs, and write per-run, per-series, and summary
//! files. All output is a pure function of the resolved config, so reruns
//! and different worker counts produce byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use nalm_lab::metrics::{
    default_threshold, summarize_group, SummaryRecord, Threshold, CONFIDENCE_LEVEL,
};
use nalm_lab::model::ModelKind;
use nalm_lab::tasks::{ExtrapolationPair, TaskKind};
use nalm_lab::trainer::{range_slug, train_run, RunRecord, TrainConfig};

use crate::config::Experiment;
use crate::io::{csv_line, fmt_f64, fmt_opt, write_json_pretty};
use crate::{CliError, CliResult};

/// Top-level summary file: provenance plus one row per (model, range).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SummaryFile {
    pub config_hash: String,
    pub task: TaskKind,
    pub train: TrainConfig,
    pub confidence_level: f64,
    pub methods: CiMethods,
    pub rows: Vec<SummaryRecord>,
}

/// Descriptions of how each reported interval is computed.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CiMethods {
    pub success: String,
    pub convergence: String,
    pub sparsity: String,
}

impl Default for CiMethods {
    fn default() -> Self {
        CiMethods {
            success: "Wilson score interval on the success count".to_string(),
            convergence:
                "percentile parametric bootstrap (gamma fit) over solved iterations of successful seeds"
                    .to_string(),
            sparsity:
                "percentile parametric bootstrap (beta fit) over best-checkpoint sparsity errors of completed runs"
                    .to_string(),
        }
    }
}

/// Guard written next to the results so a directory is never shared between
/// different configs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub task: TaskKind,
    pub models: Vec<String>,
    pub ranges: Vec<String>,
    pub seeds: Vec<u64>,
    pub train: TrainConfig,
}

/// What cmd_run did, for callers and tests.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub total: usize,
    pub reused: usize,
    pub trained: usize,
    pub aborted: usize,
    pub rows: Vec<SummaryRecord>,
    pub summary_json: PathBuf,
    pub summary_csv: PathBuf,
}

/// File stem of one run, matching `RunRecord::run_id`.
pub fn run_file_id(kind: &ModelKind, task: TaskKind, range_name: &str, seed: u64) -> String {
    format!("{}_{}_{}_s{}", kind.id(), task, range_slug(range_name), seed)
}

/// Worker count: env var beats the flag beats all cores.
pub fn worker_count(flag: Option<usize>) -> CliResult<usize> {
    if let Ok(raw) = std::env::var("NALM_LAB_WORKERS") {
        return raw
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| {
                CliError::Usage(format!(
                    "NALM_LAB_WORKERS must be a positive integer, got {raw:?}"
                ))
            });
    }
    if let Some(n) = flag {
        if n == 0 {
            return Err(CliError::Usage("--workers must be positive".to_string()));
        }
        return Ok(n);
    }
    Ok(std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1))
}

struct Job<'a> {
    kind: ModelKind,
    pair: &'a ExtrapolationPair,
    pair_ix: usize,
    seed: u64,
}

fn check_manifest(exp: &Experiment) -> CliResult<()> {
    let path = exp.output_dir.join("experiment.json");
    if path.exists() {
        let text = fs::read_to_string(&path)
            .map_err(|e| CliError::Output(format!("cannot read {}: {e}", path.display())))?;
        let m: Manifest = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("corrupt manifest {}: {e}", path.display())))?;
        if m.config_hash != exp.config_hash {
            return Err(CliError::Usage(format!(
                "output directory {} holds results for config {}, not this config ({}); use a fresh directory",
                exp.output_dir.display(),
                m.config_hash,
                exp.config_hash
            )));
        }
        return Ok(());
    }
    let manifest = Manifest {
        config_hash: exp.config_hash.clone(),
        task: exp.task,
        models: exp.models.iter().map(|m| m.id()).collect(),
        ranges: exp.pairs.iter().map(|p| p.name.clone()).collect(),
        seeds: exp.seeds.clone(),
        train: exp.train,
    };
    write_json_pretty(&path, &manifest)
}

/// A stored run is reusable when it belongs to this job and ran to the
/// configured budget. Aborted runs count as complete; the recorded failure
/// is part of the result.
fn load_reusable(runs_dir: &Path, job: &Job, task: TaskKind, cfg: &TrainConfig) -> Option<RunRecord> {
    let path = runs_dir.join(format!(
        "{}.json",
        run_file_id(&job.kind, task, &job.pair.name, job.seed)
    ));
    let text = fs::read_to_string(path).ok()?;
    let rec: RunRecord = serde_json::from_str(&text).ok()?;
    let matches = rec.kind.id() == job.kind.id()
        && rec.task == task
        && rec.range == job.pair.name
        && rec.seed == job.seed;
    let complete = rec.failure.is_some() || rec.iterations_run == cfg.iterations;
    (matches && complete).then_some(rec)
}

fn write_series(path: &Path, rec: &RunRecord) -> CliResult<()> {
    let mut text = String::from("iteration,train_loss,val_mse,extrap_mse,sparsity_error,lambda\n");
    for p in &rec.eval {
        text.push_str(&csv_line(&[
            p.iteration.to_string(),
            fmt_opt(p.train_loss),
            fmt_f64(p.val_mse),
            fmt_f64(p.extrap_mse),
            fmt_opt(p.sparsity_error),
            fmt_f64(p.lambda),
        ]));
        text.push('\n');
    }
    crate::io::write_atomic(path, text.as_bytes())
}

pub fn summary_csv_header() -> Vec<String> {
    [
        "config_hash",
        "model",
        "model_desc",
        "task",
        "range",
        "n_seeds",
        "seeds",
        "aborted",
        "successes",
        "success_rate",
        "success_lo",
        "success_hi",
        "convergence_mean",
        "convergence_lo",
        "convergence_hi",
        "sparsity_mean",
        "sparsity_lo",
        "sparsity_hi",
        "threshold_epsilon",
        "threshold_n_sim",
        "threshold_seed",
        "threshold_mse",
    ]
    .into_iter()
    .map(String::from)
    .collect()
}

pub fn summary_csv_row(config_hash: &str, row: &SummaryRecord) -> Vec<String> {
    let seeds = row
        .seeds
        .iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>()
        .join(" ");
    vec![
        config_hash.to_string(),
        row.model.clone(),
        row.model_desc.clone(),
        row.task.to_string(),
        row.range.clone(),
        row.n_seeds.to_string(),
        seeds,
        row.aborted.to_string(),
        row.successes.to_string(),
        fmt_f64(row.success_rate),
        fmt_f64(row.success_lo),
        fmt_f64(row.success_hi),
        fmt_opt(row.convergence_mean),
        fmt_opt(row.convergence_lo),
        fmt_opt(row.convergence_hi),
        fmt_opt(row.sparsity_mean),
        fmt_opt(row.sparsity_lo),
        fmt_opt(row.sparsity_hi),
        fmt_f64(row.threshold.epsilon),
        row.threshold.n_sim.to_string(),
        row.threshold.seed.to_string(),
        fmt_f64(row.threshold.simulated_mse),
    ]
}

fn summary_csv_text(config_hash: &str, rows: &[SummaryRecord]) -> String {
    let mut text = csv_line(&summary_csv_header());
    text.push('\n');
    for row in rows {
        text.push_str(&csv_line(&summary_csv_row(config_hash, row)));
        text.push('\n');
    }
    text
}

pub fn cmd_run(exp: &Experiment, workers: Option<usize>) -> CliResult<RunOutcome> {
    let runs_dir = exp.output_dir.join("runs");
    let series_dir = exp.output_dir.join("series");
    for dir in [&exp.output_dir, &runs_dir, &series_dir] {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::Output(format!("cannot create {}: {e}", dir.display())))?;
    }
    check_manifest(exp)?;

    let thresholds: Vec<Threshold> = exp
        .pairs
        .iter()
        .map(|p| default_threshold(exp.task, &p.test))
        .collect();

    // Jobs in model-major, range-next, seed-minor order; every later step
    // (training, files, summary rows) keeps this order.
    let jobs: Vec<Job> = exp
        .models
        .iter()
        .flat_map(|kind| {
            exp.pairs.iter().enumerate().flat_map(move |(pair_ix, pair)| {
                exp.seeds.iter().map(move |&seed| Job {
                    kind: *kind,
                    pair,
                    pair_ix,
                    seed,
                })
            })
        })
        .collect();
    let total = jobs.len();

    let mut records: Vec<Option<RunRecord>> = jobs
        .iter()
        .map(|j| load_reusable(&runs_dir, j, exp.task, &exp.train))
        .collect();
    let reused = records.iter().flatten().count();
    let todo: Vec<usize> = (0..total).filter(|&i| records[i].is_none()).collect();
    let trained = todo.len();

    if !todo.is_empty() {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(worker_count(workers)?)
            .build()
            .map_err(|e| CliError::Output(format!("cannot start worker pool: {e}")))?;
        let fresh: Vec<(usize, nalm_lab::Result<RunRecord>)> = pool.install(|| {
            todo.par_iter()
                .map(|&ix| {
                    let j = &jobs[ix];
                    (ix, train_run(j.kind, exp.task, j.pair, &exp.train, j.seed))
                })
                .collect()
        });
        for (ix, res) in fresh {
            let rec =
                res.map_err(|e| CliError::Usage(format!("run could not start: {e}")))?;
            records[ix] = Some(rec);
        }
    }
    let records: Vec<RunRecord> = records
        .into_iter()
        .map(|r| r.expect("every job trained or reused"))
        .collect();

    for rec in &records {
        let id = rec.run_id();
        write_json_pretty(&runs_dir.join(format!("{id}.json")), rec)?;
        write_series(&series_dir.join(format!("{id}.csv")), rec)?;
    }

    let n_seeds = exp.seeds.len();
    let mut rows: Vec<SummaryRecord> = Vec::new();
    for k_ix in 0..exp.models.len() {
        for p_ix in 0..exp.pairs.len() {
            let offset = (k_ix * exp.pairs.len() + p_ix) * n_seeds;
            let group: Vec<&RunRecord> = records[offset..offset + n_seeds].iter().collect();
            debug_assert!(group
                .iter()
                .all(|r| jobs[offset].kind.id() == r.kind.id() && jobs[offset].pair_ix == p_ix));
            let row = summarize_group(&group, &thresholds[p_ix])
                .map_err(|e| CliError::Usage(format!("cannot summarise: {e}")))?;
            rows.push(row);
        }
    }
    let aborted = rows.iter().map(|r| r.aborted).sum();

    let summary = SummaryFile {
        config_hash: exp.config_hash.clone(),
        task: exp.task,
        train: exp.train,
        confidence_level: CONFIDENCE_LEVEL,
        methods: CiMethods::default(),
        rows: rows.clone(),
    };
    let summary_json = exp.output_dir.join("summary.json");
    let summary_csv = exp.output_dir.join("summary.csv");
    write_json_pretty(&summary_json, &summary)?;
    crate::io::write_atomic(
        &summary_csv,
        summary_csv_text(&exp.config_hash, &rows).as_bytes(),
    )?;

    println!(
        "sweep {}: {} runs ({} reused, {} trained), {} aborted",
        exp.config_hash, total, reused, trained, aborted
    );
    for row in &rows {
        let conv = match row.convergence_mean {
            Some(m) => format!(", solved at {m:.0}"),
            None => String::new(),
        };
        println!(
            "  {:<24} {:<14} success {}/{}{}",
            row.model, row.range, row.successes, row.n_seeds, conv
        );
    }
    println!("wrote {}", summary_json.display());

    Ok(RunOutcome {
        total,
        reused,
        trained,
        aborted,
        rows,
        summary_json,
        summary_csv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalm_lab::tasks::builtin_range;

    #[test]
    fn run_file_id_matches_record_run_id() {
        let cfg = TrainConfig {
            iterations: 300,
            batch_size: 16,
            lr: 1e-3,
            lambda_hat: 0.0,
            lambda_start: 100,
            lambda_end: 200,
            eval_every: 100,
            val_samples: 64,
            test_samples: 64,
            grad_noise_eta: None,
        };
        let pair = builtin_range("[1,2)").unwrap();
        let rec = train_run(ModelKind::Nmu, TaskKind::Smt, &pair, &cfg, 3).unwrap();
        assert_eq!(
            rec.run_id(),
            run_file_id(&ModelKind::Nmu, TaskKind::Smt, "[1,2)", 3)
        );
    }

    #[test]
    fn summary_csv_keeps_a_fixed_column_count() {
        let cfg = TrainConfig {
            iterations: 200,
            batch_size: 16,
            lr: 1e-3,
            lambda_hat: 0.0,
            lambda_start: 50,
            lambda_end: 100,
            eval_every: 100,
            val_samples: 64,
            test_samples: 64,
            grad_noise_eta: None,
        };
        let pair = builtin_range("[1,2)").unwrap();
        let rec = train_run(ModelKind::Nmu, TaskKind::Smt, &pair, &cfg, 0).unwrap();
        let thr = Threshold {
            epsilon: 1e-5,
            n_sim: 10,
            seed: 1,
            simulated_mse: 1e-9,
        };
        let row = summarize_group(&[&rec], &thr).unwrap();
        let header = summary_csv_header();
        let cells = summary_csv_row("abc", &row);
        assert_eq!(header.len(), cells.len());
        let text = summary_csv_text("abc", &[row]);
        for line in text.lines() {
            assert_eq!(
                crate::io::csv_split(line).len(),
                header.len(),
                "line {line}"
            );
        }
    }
}
