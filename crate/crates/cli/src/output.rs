//! Tables and reports, stamped with the code version and the config hash, written atomically.

use std::io::Write;
use std::path::Path;

use serde_json::{json, Map, Value};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Bool(bool),
    Text(String),
    Empty,
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Empty, Into::into)
    }
}

impl Cell {
    /// Shortest round-trip decimal for floats, in exponent form when very small or large.
    fn csv(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => format!("{v:?}"),
            Cell::Bool(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Int(v) => json!(v),
            Cell::Float(v) => json!(v),
            Cell::Bool(v) => json!(v),
            Cell::Text(s) => json!(s),
            Cell::Empty => Value::Null,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Table { columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Table(Table),
    Report(Map<String, Value>),
}

/// Provenance written into every output.
#[derive(Debug, Clone, PartialEq)]
pub struct Stamp {
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
}

pub const VERSION: &str = concat!("sepmix ", env!("CARGO_PKG_VERSION"));

fn stamp_fields(stamp: &Stamp) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("version".into(), json!(VERSION));
    m.insert("command".into(), json!(stamp.command));
    m.insert("config_sha256".into(), json!(stamp.config_sha256));
    m.insert("seed".into(), json!(stamp.seed));
    m
}

pub fn render_csv(table: &Table, stamp: &Stamp) -> Vec<u8> {
    let mut out = Vec::new();
    // comment lines are skipped by gnuplot and most CSV readers with a comment option
    writeln!(out, "# {VERSION}").unwrap();
    writeln!(out, "# command: {}", stamp.command).unwrap();
    writeln!(out, "# config_sha256: {}", stamp.config_sha256).unwrap();
    writeln!(out, "# seed: {}", stamp.seed).unwrap();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&table.columns).unwrap();
    for row in &table.rows {
        w.write_record(row.iter().map(Cell::csv)).unwrap();
    }
    w.into_inner().expect("writing to memory")
}

pub fn render_json(payload: &Payload, stamp: &Stamp) -> Vec<u8> {
    let mut m = stamp_fields(stamp);
    match payload {
        Payload::Table(t) => {
            m.insert("columns".into(), json!(t.columns));
            let rows: Vec<Value> = t.rows.iter().map(|r| Value::Array(r.iter().map(Cell::json).collect())).collect();
            m.insert("rows".into(), Value::Array(rows));
        }
        Payload::Report(r) => {
            m.insert("report".into(), Value::Object(r.clone()));
        }
    }
    let mut out = serde_json::to_vec_pretty(&Value::Object(m)).expect("serializable");
    out.push(b'\n');
    out
}

/// Replaces `path` in one rename, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stamp() -> Stamp {
        Stamp { command: "env dump".into(), config_sha256: "ab".into(), seed: 3 }
    }

    #[test]
    fn csv_has_header_and_round_trip_floats() {
        let mut t = Table::new(&["site", "omega"]);
        t.push(vec![1usize.into(), 0.1f64.into()]);
        t.push(vec![2usize.into(), (1.0f64 / 3.0).into()]);
        t.push(vec![3usize.into(), Cell::Empty]);
        t.push(vec![4usize.into(), 2.9e-8f64.into()]);
        let text = String::from_utf8(render_csv(&t, &stamp())).unwrap();
        let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(body, ["site,omega", "1,0.1", "2,0.3333333333333333", "3,", "4,2.9e-8"]);
        assert!(text.contains("config_sha256: ab"));
        let back: f64 = body[2].split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(back, 1.0 / 3.0);
    }

    #[test]
    fn json_report_is_stamped() {
        let mut r = Map::new();
        r.insert("gap".into(), json!(0.6));
        r.insert("missing".into(), Cell::Float(f64::NAN).json());
        let v: Value = serde_json::from_slice(&render_json(&Payload::Report(r), &stamp())).unwrap();
        assert_eq!(v["report"]["gap"], json!(0.6));
        assert_eq!(v["report"]["missing"], Value::Null);
        assert_eq!(v["version"], json!(VERSION));
        assert_eq!(v["seed"], json!(3));
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.csv");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
