//! The report subcommand: merge the summary files under a directory into one
//! success-rate table (ranges down, models across) plus a long-form CSV with
//! every interval.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalm_lab::metrics::SummaryRecord;
use nalm_lab::tasks::{builtin_ranges, TaskKind};

use crate::io::{csv_line, write_atomic};
use crate::runner::{summary_csv_header, summary_csv_row, SummaryFile};
use crate::{CliError, CliResult};

#[derive(Clone, Debug)]
pub struct ReportOutcome {
    pub sources: usize,
    pub rows: usize,
    pub csv_path: PathBuf,
    pub txt_path: PathBuf,
    pub text: String,
}

/// summary.json in the directory itself plus in its immediate
/// subdirectories, in name order.
fn find_summaries(dir: &Path) -> CliResult<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(CliError::Usage(format!(
            "{} is not a directory",
            dir.display()
        )));
    }
    let mut found = Vec::new();
    let direct = dir.join("summary.json");
    if direct.is_file() {
        found.push(direct);
    }
    let mut subdirs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subdirs.sort();
    for sub in subdirs {
        let candidate = sub.join("summary.json");
        if candidate.is_file() {
            found.push(candidate);
        }
    }
    Ok(found)
}

fn source_name(dir: &Path, path: &Path) -> String {
    path.strip_prefix(dir)
        .unwrap_or(path)
        .to_string_lossy()
        .into_owned()
}

/// Ranges in the built-in benchmark order first, then any custom names in
/// alphabetical order.
fn ordered_ranges(names: &[String]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let builtin: Vec<String> = builtin_ranges().into_iter().map(|p| p.name).collect();
    for name in &builtin {
        if names.contains(name) {
            out.push(name.clone());
        }
    }
    let mut extra: Vec<String> = names
        .iter()
        .filter(|n| !builtin.contains(n))
        .cloned()
        .collect();
    extra.sort();
    extra.dedup();
    out.extend(extra);
    out
}

fn pad(s: &str, width: usize) -> String {
    format!("{s:<width$}")
}

fn render_text(rows: &[(String, &SummaryFile, &SummaryRecord)], sources: usize) -> String {
    let mut text = String::new();
    let _ = writeln!(text, "combined report: {sources} summary files, {} rows", rows.len());
    for task in [TaskKind::Smt, TaskKind::Adt] {
        let task_rows: Vec<&(String, &SummaryFile, &SummaryRecord)> =
            rows.iter().filter(|(_, _, r)| r.task == task).collect();
        if task_rows.is_empty() {
            continue;
        }
        let mut models: Vec<String> = task_rows.iter().map(|(_, _, r)| r.model.clone()).collect();
        models.sort();
        models.dedup();
        let range_names: Vec<String> = task_rows.iter().map(|(_, _, r)| r.range.clone()).collect();
        let ranges = ordered_ranges(&range_names);

        // Later sources shadow earlier ones in the table; the CSV keeps all.
        let cell = |range: &str, model: &str| -> Option<String> {
            task_rows
                .iter()
                .rev()
                .find(|(_, _, r)| r.range == range && r.model == model)
                .map(|(_, _, r)| format!("{:.2} ({}/{})", r.success_rate, r.successes, r.n_seeds))
        };

        let _ = writeln!(text);
        let _ = writeln!(text, "task {task}: success rate (successes/seeds)");
        let range_width = ranges
            .iter()
            .map(|r| r.len())
            .chain(["range".len()])
            .max()
            .unwrap_or(5);
        let col_width = models.iter().map(|m| m.len().max(12)).max().unwrap_or(12);
        let mut header = pad("range", range_width);
        for m in &models {
            header.push_str("  ");
            header.push_str(&pad(m, col_width));
        }
        let _ = writeln!(text, "{}", header.trim_end());
        for range in &ranges {
            let mut line = pad(range, range_width);
            for m in &models {
                let c = cell(range, m).unwrap_or_else(|| "-".to_string());
                line.push_str("  ");
                line.push_str(&pad(&c, col_width));
            }
            let _ = writeln!(text, "{}", line.trim_end());
        }

        let _ = writeln!(text);
        let _ = writeln!(text, "task {task}: details");
        for range in &ranges {
            for m in &models {
                let Some((source, file, r)) = task_rows
                    .iter()
                    .rev()
                    .find(|(_, _, r)| &r.range == range && &r.model == m)
                else {
                    continue;
                };
                let conv = match (r.convergence_mean, r.convergence_lo, r.convergence_hi) {
                    (Some(m), Some(lo), Some(hi)) => {
                        format!(", solved iter {m:.0} [{lo:.0},{hi:.0}]")
                    }
                    _ => String::new(),
                };
                let sparsity = match (r.sparsity_mean, r.sparsity_lo, r.sparsity_hi) {
                    (Some(m), Some(lo), Some(hi)) => {
                        format!(", sparsity {m:.2e} [{lo:.2e},{hi:.2e}]")
                    }
                    _ => String::new(),
                };
                let aborted = if r.aborted > 0 {
                    format!(", {} aborted", r.aborted)
                } else {
                    String::new()
                };
                let _ = writeln!(
                    text,
                    "  {} {}: success {:.2} [{:.2},{:.2}]{conv}{sparsity}{aborted} (config {}, {source})",
                    r.model,
                    r.range,
                    r.success_rate,
                    r.success_lo,
                    r.success_hi,
                    file.config_hash,
                );
            }
        }
    }
    text
}

fn render_csv(rows: &[(String, &SummaryFile, &SummaryRecord)]) -> String {
    let mut header = vec!["source".to_string()];
    header.extend(summary_csv_header());
    let mut text = csv_line(&header);
    text.push('\n');
    for (source, file, row) in rows {
        let mut cells = vec![source.clone()];
        cells.extend(summary_csv_row(&file.config_hash, row));
        text.push_str(&csv_line(&cells));
        text.push('\n');
    }
    text
}

/// Merge every summary under `dir` and write report.csv / report.txt (into
/// `out`, default `dir`). Prints the text table.
pub fn cmd_report(dir: &Path, out: Option<&Path>) -> CliResult<ReportOutcome> {
    let files = find_summaries(dir)?;
    if files.is_empty() {
        return Err(CliError::Usage(format!(
            "no summary.json under {}",
            dir.display()
        )));
    }
    let mut parsed: Vec<(String, SummaryFile)> = Vec::new();
    for path in &files {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        let file: SummaryFile = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("corrupt summary {}: {e}", path.display())))?;
        parsed.push((source_name(dir, path), file));
    }
    let rows: Vec<(String, &SummaryFile, &SummaryRecord)> = parsed
        .iter()
        .flat_map(|(source, file)| {
            file.rows.iter().map(move |row| (source.clone(), file, row))
        })
        .collect();

    let text = render_text(&rows, parsed.len());
    let csv = render_csv(&rows);

    let out_dir = out.unwrap_or(dir);
    fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Output(format!("cannot create {}: {e}", out_dir.display())))?;
    let csv_path = out_dir.join("report.csv");
    let txt_path = out_dir.join("report.txt");
    write_atomic(&csv_path, csv.as_bytes())?;
    write_atomic(&txt_path, text.as_bytes())?;
    print!("{text}");

    Ok(ReportOutcome {
        sources: parsed.len(),
        rows: rows.len(),
        csv_path,
        txt_path,
        text,
    })
}
