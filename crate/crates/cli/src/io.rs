//! File plumbing shared by the subcommands: round-trip-exact float
//! formatting, atomic writes, and a minimal CSV encoder.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::{CliError, CliResult};

/// 17 significant digits; parses back to the identical f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{:.16e}", v)
}

/// Optional float for CSV cells; absent values become empty fields.
pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}

/// Write through a sibling temp file and rename. Interrupted runs leave
/// either the old file or the new one, never a truncated mix, which is what
/// makes resume-by-skipping-complete-files sound.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = tmp_path(path);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    atomic_write(path, bytes)
        .map_err(|e| CliError::Output(format!("cannot write {}: {e}", path.display())))
}

pub fn write_json_pretty<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Output(format!("cannot serialise {}: {e}", path.display())))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Quote a CSV field only when it needs it (comma, quote, or newline).
pub fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn csv_line(fields: &[String]) -> String {
    let quoted: Vec<String> = fields.iter().map(|f| csv_field(f)).collect();
    quoted.join(",")
}

/// Inverse of [`csv_line`] for a single record (no embedded newlines).
pub fn csv_split(line: &str) -> Vec<String> {
    let mut fields = vec![String::new()];
    let mut in_quotes = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '"' if in_quotes && chars.peek() == Some(&'"') => {
                chars.next();
                fields.last_mut().expect("non-empty").push('"');
            }
            '"' => in_quotes = !in_quotes,
            ',' if !in_quotes => fields.push(String::new()),
            other => fields.last_mut().expect("non-empty").push(other),
        }
    }
    fields
}
