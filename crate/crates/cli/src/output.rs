//! CSV and JSON emission with self-describing headers.
//!
//! Every CSV starts with `#` lines:
//!
//! ```text
//! # swssb <version> (<git revision>)
//! # experiment: <kind>
//! # seed: <seed or none>
//! # spec: <spec as one-line JSON>
//! ```
//!
//! followed by a column header and the data rows. Floats use the shortest
//! representation that round-trips, so identical runs give identical bytes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::spec::ExperimentSpec;
use crate::CliError;

pub fn code_version() -> String {
    format!("{} ({})", env!("CARGO_PKG_VERSION"), env!("SWSSB_GIT_REVISION"))
}

/// Parsed `#` block of an output file.
#[derive(Debug, Clone, PartialEq)]
pub struct Header {
    pub version: String,
    pub experiment: String,
    pub seed: Option<u64>,
    pub spec: ExperimentSpec,
}

/// Data cell: shortest round-trip text for floats.
pub enum Cell {
    F(f64),
    U(u64),
    S(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::F(v)
    }
}
impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::U(v as u64)
    }
}
impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::U(v)
    }
}
impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::S(v.to_string())
    }
}
impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::S(v)
    }
}
impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::S(v.to_string())
    }
}

impl Cell {
    fn text(&self) -> String {
        match self {
            Cell::F(v) => format!("{v:?}"),
            Cell::U(v) => v.to_string(),
            Cell::S(s) => s.clone(),
        }
    }
}

#[macro_export]
macro_rules! row {
    ($($x:expr),* $(,)?) => { vec![$($crate::output::Cell::from($x)),*] };
}

/// One CSV table in memory.
pub struct Table {
    pub name: String,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&'static str]) -> Self {
        Self { name: name.into(), columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

pub struct Sink {
    pub dir: PathBuf,
    pub spec: ExperimentSpec,
    pub written: Vec<PathBuf>,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

impl Sink {
    pub fn new(dir: &Path, spec: ExperimentSpec) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        Ok(Self { dir: dir.to_path_buf(), spec, written: Vec::new() })
    }

    fn header_lines(&self) -> Result<String, CliError> {
        let spec = serde_json::to_string(&self.spec).map_err(|e| CliError::Io(e.to_string()))?;
        let seed = self.spec.seed.map_or("none".to_string(), |s| s.to_string());
        Ok(format!(
            "# swssb {}\n# experiment: {}\n# seed: {seed}\n# spec: {spec}\n",
            code_version(),
            self.spec.experiment.name()
        ))
    }

    pub fn csv(&mut self, table: &Table) -> Result<(), CliError> {
        let path = self.dir.join(format!("{}.csv", table.name));
        let mut buf = self.header_lines()?.into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(&table.columns).map_err(|e| io_err(&path, e))?;
            for r in &table.rows {
                w.write_record(r.iter().map(Cell::text)).map_err(|e| io_err(&path, e))?;
            }
            w.flush().map_err(|e| io_err(&path, e))?;
        }
        fs::write(&path, buf).map_err(|e| io_err(&path, e))?;
        self.written.push(path);
        Ok(())
    }

    /// JSON document wrapped with the same metadata as the CSV headers.
    pub fn json<T: Serialize>(&mut self, name: &str, data: &T) -> Result<(), CliError> {
        #[derive(Serialize)]
        struct Doc<'a, T> {
            version: String,
            experiment: &'static str,
            seed: Option<u64>,
            spec: &'a ExperimentSpec,
            data: &'a T,
        }
        let path = self.dir.join(format!("{name}.json"));
        let doc = Doc {
            version: code_version(),
            experiment: self.spec.experiment.name(),
            seed: self.spec.seed,
            spec: &self.spec,
            data,
        };
        let text = serde_json::to_string_pretty(&doc).map_err(|e| io_err(&path, e))?;
        fs::write(&path, text + "\n").map_err(|e| io_err(&path, e))?;
        self.written.push(path);
        Ok(())
    }
}

/// Reads the `#` block of a CSV written by [`Sink::csv`].
pub fn read_header(text: &str) -> Result<Header, CliError> {
    let bad = |m: &str| CliError::Usage(format!("malformed output header: {m}"));
    let mut lines = text.lines();
    let mut next = |prefix: &str| -> Result<String, CliError> {
        let l = lines.next().ok_or_else(|| bad("too short"))?;
        l.strip_prefix(prefix).map(str::to_string).ok_or_else(|| bad(prefix))
    };
    let version = next("# swssb ")?;
    let experiment = next("# experiment: ")?;
    let seed = match next("# seed: ")?.as_str() {
        "none" => None,
        s => Some(s.parse().map_err(|_| bad("seed"))?),
    };
    let spec: ExperimentSpec = serde_json::from_str(&next("# spec: ")?).map_err(|e| bad(&e.to_string()))?;
    Ok(Header { version, experiment, seed, spec })
}

/// Data rows of a CSV written by [`Sink::csv`], header line included.
pub fn body(text: &str) -> &str {
    let mut pos = 0;
    for l in text.split_inclusive('\n') {
        if !l.starts_with('#') {
            break;
        }
        pos += l.len();
    }
    &text[pos..]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSnapshot {
    pub time: f64,
    pub phi: Vec<f64>,
    pub n: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_print_shortest_round_trip() {
        for v in [0.1, 1.0, 1e-10, 2.0 / 3.0, -0.0] {
            let s = Cell::F(v).text();
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
        }
        assert_eq!(Cell::F(1.0).text(), "1.0");
    }

    #[test]
    fn body_skips_comment_block() {
        let text = "# a\n# b\nx,y\n1,2\n";
        assert_eq!(body(text), "x,y\n1,2\n");
        assert!(read_header(text).is_err());
    }
}
