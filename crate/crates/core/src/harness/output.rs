//! CSV and JSON writers. Every file starts with the run envelope.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::Result;

/// Bumped whenever a CSV column set or JSON layout changes.
pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL_NAME: &str = "anderson-kubo";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Provenance attached to every output.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunEnvelope {
    pub tool: &'static str,
    pub tool_version: &'static str,
    pub schema_version: u32,
    pub command: String,
    pub config_hash: String,
    pub config: BTreeMap<String, String>,
    pub workers: usize,
    /// `(index, seed)` pairs per realization block; `all` for a single
    /// ensemble, `nu=<value>` per frequency of a sweep.
    pub seeds: BTreeMap<String, Vec<(u64, u64)>>,
    pub warnings: Vec<String>,
}

/// One CSV table: header plus rows of preformatted cells.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Table { header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

pub fn cell(x: f64) -> String {
    super::config::fmt_f64(x)
}

/// Missing values (an undefined standard error) are written as empty cells.
pub fn opt_cell(x: Option<f64>) -> String {
    x.map(cell).unwrap_or_default()
}

fn envelope_comment(env: &RunEnvelope) -> String {
    format!(
        "# {} {} schema={} command={} config_hash={}\n",
        env.tool, env.tool_version, env.schema_version, env.command, env.config_hash
    )
}

pub fn write_csv(path: &Path, env: &RunEnvelope, table: &Table) -> Result<()> {
    let mut file = fs::File::create(path)?;
    file.write_all(envelope_comment(env).as_bytes())?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(&table.header)?;
    for row in &table.rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Document<'a, T: Serialize> {
    envelope: &'a RunEnvelope,
    result: &'a T,
}

pub fn write_json<T: Serialize>(path: &Path, env: &RunEnvelope, result: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(&Document { envelope: env, result })?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Wall-clock time goes to its own file so the result files stay
/// byte-reproducible.
pub fn write_timing(path: &Path, env: &RunEnvelope, seconds: f64) -> Result<()> {
    #[derive(Serialize)]
    struct Timing<'a> {
        command: &'a str,
        config_hash: &'a str,
        workers: usize,
        wall_clock_seconds: f64,
    }
    let t = Timing { command: &env.command, config_hash: &env.config_hash, workers: env.workers, wall_clock_seconds: seconds };
    fs::write(path, serde_json::to_string_pretty(&t)? + "\n")?;
    Ok(())
}

/// Reads a CSV written by [`write_csv`], skipping the envelope comment.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let header = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec?.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

pub fn output_paths(dir: &Path, command: &str) -> (PathBuf, PathBuf, PathBuf) {
    (
        dir.join(format!("{command}.csv")),
        dir.join(format!("{command}.json")),
        dir.join(format!("{command}.timing.json")),
    )
}
