//! Numeric CSV tables with `# key=value` comment lines.
//!
//! Values are written with Rust's shortest round-trip formatting, so a
//! write/read cycle reproduces every `f64` bit-exactly. Comment lines before
//! the header row form the preamble; those after the last data row form the
//! footer.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub preamble: Vec<(String, String)>,
    pub footer: Vec<(String, String)>,
}

impl Table {
    pub fn new(header: Vec<String>) -> Self {
        Table {
            header,
            ..Table::default()
        }
    }

    pub fn push_row(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn preamble(mut self, key: &str, value: impl ToString) -> Self {
        self.preamble.push((key.to_string(), value.to_string()));
        self
    }

    pub fn footer(mut self, key: &str, value: impl ToString) -> Self {
        self.footer.push((key.to_string(), value.to_string()));
        self
    }

    /// Looks a key up in the preamble, then the footer.
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.preamble
            .iter()
            .chain(&self.footer)
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.header.iter().position(|h| h == name).ok_or_else(|| {
            Error::Format(format!(
                "missing column '{name}' (have: {})",
                self.header.join(", ")
            ))
        })
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let i = self.column_index(name)?;
        Ok(self.rows.iter().map(|r| r[i]).collect())
    }

    /// Columns whose names start with `prefix` followed by a 1-based index,
    /// in index order (`x1, x2, …`).
    pub fn indexed_columns(&self, prefix: &str) -> Vec<usize> {
        let mut found = Vec::new();
        for k in 1.. {
            match self
                .header
                .iter()
                .position(|h| *h == format!("{prefix}{k}"))
            {
                Some(i) => found.push(i),
                None => break,
            }
        }
        found
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        for (k, v) in &self.preamble {
            writeln!(out, "# {k}={v}")?;
        }
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        drop(w);
        for (k, v) in &self.footer {
            writeln!(out, "# {k}={v}")?;
        }
        Ok(())
    }

    pub fn read<R: Read>(input: R) -> Result<Table> {
        let mut table = Table::default();
        let mut body = String::new();
        let mut seen_header = false;
        for line in BufReader::new(input).lines() {
            let line = line?;
            if let Some(comment) = line.strip_prefix('#') {
                let (k, v) = comment
                    .trim()
                    .split_once('=')
                    .unwrap_or((comment.trim(), ""));
                let entry = (k.trim().to_string(), v.trim().to_string());
                if seen_header {
                    table.footer.push(entry);
                } else {
                    table.preamble.push(entry);
                }
            } else if !line.trim().is_empty() {
                seen_header = true;
                body.push_str(&line);
                body.push('\n');
            }
        }
        let mut r = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(body.as_bytes());
        table.header = r.headers()?.iter().map(|h| h.trim().to_string()).collect();
        if table.header.is_empty() {
            return Err(Error::Format("table has no header row".into()));
        }
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|f| {
                    f.trim().parse::<f64>().map_err(|_| {
                        Error::Format(format!("data row {}: '{f}' is not a number", line + 1))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            table.rows.push(row);
        }
        Ok(table)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write(&mut buf)?;
        std::fs::write(path, buf)
            .map_err(|e| Error::from(e).context(format!("writing {}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Table> {
        let f = std::fs::File::open(path)
            .map_err(|e| Error::from(e).context(format!("reading {}", path.display())))?;
        Table::read(f).map_err(|e| e.context(format!("parsing {}", path.display())))
    }
}
