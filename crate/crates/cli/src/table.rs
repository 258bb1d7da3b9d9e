//! CSV tables. Numbers are written in Rust's `{:e}` notation, which is the
//! shortest text that reads back to the same `f64`; missing values are empty
//! cells.

use std::path::Path;

use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

pub fn num(v: f64) -> String {
    format!("{v:e}")
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn flag(b: bool) -> String {
    u8::from(b).to_string()
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Parses CSV text with a header line.
    pub fn parse(name: &str, text: &str) -> Result<Self> {
        let bad = |msg: String| CliError::Csv { path: name.into(), msg };
        let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let columns = rd.headers().map_err(|e| bad(e.to_string()))?.iter().map(String::from).collect();
        let rows = rd
            .records()
            .map(|r| r.map(|rec| rec.iter().map(String::from).collect()).map_err(|e| bad(e.to_string())))
            .collect::<Result<Vec<Vec<String>>>>()?;
        Ok(Self { name: name.into(), columns, rows })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let name = path.file_stem().map_or_else(|| "table".into(), |s| s.to_string_lossy().into_owned());
        Self::parse(&name, &text)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
    }

    pub fn index(&self, column: &str) -> Result<usize> {
        self.columns.iter().position(|c| c == column).ok_or_else(|| CliError::Csv {
            path: self.name.clone(),
            msg: format!("no column {column:?} (columns: {})", self.columns.join(", ")),
        })
    }

    /// A column as numbers; empty or unparsable cells become NaN.
    pub fn numeric(&self, column: &str) -> Result<Vec<f64>> {
        let i = self.index(column)?;
        Ok(self.rows.iter().map(|r| r.get(i).and_then(|c| c.trim().parse().ok()).unwrap_or(f64::NAN)).collect())
    }

    /// The `flagged` column as booleans, if present.
    pub fn flags(&self) -> Option<Vec<bool>> {
        let i = self.columns.iter().position(|c| c == "flagged")?;
        Some(
            self.rows
                .iter()
                .map(|r| r.get(i).is_some_and(|c| !matches!(c.trim(), "" | "0" | "false")))
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut t = Table::new("t", &["r", "note", "flagged"]);
        t.push(vec![num(0.1), "a, b".into(), flag(true)]);
        t.push(vec![num(2.0), String::new(), flag(false)]);
        let back = Table::parse("t", &t.to_csv()).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.numeric("r").unwrap(), vec![0.1, 2.0]);
        assert_eq!(back.flags(), Some(vec![true, false]));
        assert!(back.numeric("missing").unwrap_err().to_string().contains("missing"));
        assert!(back.numeric("note").unwrap().iter().all(|v| v.is_nan()));
    }
}
