//! Result tables and their CSV / JSON renderings.

use serde::Serialize;
use serde_json::{json, Map, Value};

pub const ARTIFACT_VERSION: &str = concat!("xpdmimo ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Text(String),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Float(x) if x.is_finite() => serde_json::Number::from_f64(*x).expect("finite").to_string(),
            Cell::Float(x) => x.to_string(),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Float(x) if x.is_finite() => json!(x),
            Cell::Float(x) => json!(x.to_string()),
            Cell::Int(i) => json!(i),
            Cell::Text(s) => json!(s),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Float(x) => Some(*x),
            Cell::Int(i) => Some(*i as f64),
            Cell::Text(_) => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Cell::Text(s) => Some(s),
            _ => None,
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

/// A sweep's rows plus the provenance written alongside them.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub experiment: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub config_hash: String,
    pub seed: u64,
    /// Set when the sweep stopped early; rows hold what finished before it.
    pub error: Option<String>,
    /// Structured result emitted only in JSON (e.g. an optimizer trace).
    pub detail: Option<Value>,
}

impl Table {
    pub fn new(experiment: &str, columns: &[&str], config_hash: String, seed: u64) -> Self {
        Self {
            experiment: experiment.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            config_hash,
            seed,
            error: None,
            detail: None,
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width for {}", self.experiment);
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Numeric values of one column, in row order.
    pub fn floats(&self, name: &str) -> Vec<f64> {
        let j = self.column(name).unwrap_or_else(|| panic!("no column {name} in {}", self.experiment));
        self.rows.iter().map(|r| r[j].as_f64().unwrap_or(f64::NAN)).collect()
    }

    pub fn with_detail<T: Serialize>(mut self, detail: &T) -> Self {
        self.detail = serde_json::to_value(detail).ok();
        self
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# experiment: {}\n", self.experiment));
        out.push_str(&format!("# config_hash: {}\n", self.config_hash));
        out.push_str(&format!("# seed: {}\n", self.seed));
        out.push_str(&format!("# version: {ARTIFACT_VERSION}\n"));
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        let header = self.columns.iter().map(String::as_str).chain(["seed", "config_hash"]);
        w.write_record(header).expect("in-memory write");
        let seed = self.seed.to_string();
        for row in &self.rows {
            let cells = row.iter().map(Cell::csv).chain([seed.clone(), self.config_hash.clone()]);
            w.write_record(cells).expect("in-memory write");
        }
        out.push_str(&String::from_utf8(w.into_inner().expect("flush")).expect("utf-8"));
        if let Some(e) = &self.error {
            out.push_str(&format!("# error: {}\n", e.replace('\n', " ")));
        }
        out
    }

    pub fn to_json(&self) -> String {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|row| {
                let mut m = Map::new();
                for (c, v) in self.columns.iter().zip(row) {
                    m.insert(c.clone(), v.json());
                }
                m.insert("seed".into(), json!(self.seed));
                m.insert("config_hash".into(), json!(self.config_hash));
                Value::Object(m)
            })
            .collect();
        let mut doc = json!({
            "experiment": self.experiment,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "version": ARTIFACT_VERSION,
            "columns": self.columns,
            "rows": rows,
            "error": self.error,
        });
        if let Some(d) = &self.detail {
            doc["detail"] = d.clone();
        }
        let mut s = serde_json::to_string_pretty(&doc).expect("json");
        s.push('\n');
        s
    }
}
