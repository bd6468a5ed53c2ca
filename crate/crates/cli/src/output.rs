use std::fs;
use std::io::Write;
use std::path::Path;

use serde_json::Value;

/// A subcommand result in both output formats.
pub struct Report {
    pub name: &'static str,
    pub json: Value,
    pub table: Table,
}

/// Left-aligned text table with an optional preamble.
#[derive(Default)]
pub struct Table {
    pub preamble: Vec<String>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            preamble: vec![],
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: vec![],
        }
    }

    pub fn note(&mut self, line: impl Into<String>) {
        self.preamble.push(line.into());
    }

    pub fn row(&mut self, cells: Vec<String>) {
        self.rows.push(cells);
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for line in &self.preamble {
            out.push_str(line);
            out.push('\n');
        }
        if self.header.is_empty() {
            return out;
        }
        let cols = self.header.len();
        let mut width = vec![0; cols];
        for r in std::iter::once(&self.header).chain(&self.rows) {
            for (i, c) in r.iter().enumerate().take(cols) {
                width[i] = width[i].max(c.chars().count());
            }
        }
        for r in std::iter::once(&self.header).chain(&self.rows) {
            let line = r
                .iter()
                .enumerate()
                .take(cols)
                .map(|(i, c)| format!("{c:<w$}", w = width[i]))
                .collect::<Vec<_>>()
                .join("  ");
            out.push_str(line.trim_end());
            out.push('\n');
        }
        out
    }
}

pub fn num(v: f64) -> String {
    format!("{v:.12e}")
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Table,
}

pub fn emit(report: &Report, format: Format, out: Option<&Path>) -> std::io::Result<()> {
    let (text, ext) = match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&report.json).expect("JSON values serialize");
            s.push('\n');
            (s, "json")
        }
        Format::Table => (report.table.render(), "txt"),
    };
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(format!("{}.{ext}", report.name)), text)
        }
        None => std::io::stdout().lock().write_all(text.as_bytes()),
    }
}
