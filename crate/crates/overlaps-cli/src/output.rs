//! Artifacts of one run: CSV tables, two/three-column plot data with axis
//! metadata, `summary.json` and `manifest.json`.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Map, Value};

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

/// Formats a float for CSV; non-finite values become empty cells.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:e}")
    } else {
        String::new()
    }
}

/// `<name>.dat` (whitespace-separated columns) plus `<name>.meta.json`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotData {
    pub name: String,
    pub title: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl PlotData {
    pub fn new(name: &str, title: &str, columns: &[&str]) -> Self {
        Self { name: name.into(), title: title.into(), columns: columns.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assertion {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Assertion {
    pub fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), pass, detail: detail.into() }
    }
}

/// Everything an experiment produces.
#[derive(Debug, Clone, Default)]
pub struct Report {
    pub tables: Vec<Table>,
    pub plots: Vec<PlotData>,
    pub values: Map<String, Value>,
    pub assertions: Vec<Assertion>,
    pub rejections: BTreeMap<String, usize>,
}

impl Report {
    pub fn value(&mut self, key: &str, v: impl Serialize) {
        self.values.insert(key.into(), serde_json::to_value(v).unwrap_or(Value::Null));
    }

    pub fn assert(&mut self, name: impl Into<String>, pass: bool, detail: impl Into<String>) {
        self.assertions.push(Assertion::new(name, pass, detail));
    }

    pub fn reject(&mut self, reason: &str, count: usize) {
        if count > 0 {
            *self.rejections.entry(reason.into()).or_default() += count;
        }
    }

    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.pass)
    }
}

pub fn write_table(dir: &Path, t: &Table) -> io::Result<PathBuf> {
    let path = dir.join(format!("{}.csv", t.name));
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(&t.header)?;
    for r in &t.rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(path)
}

pub fn write_plot(dir: &Path, p: &PlotData) -> io::Result<Vec<PathBuf>> {
    let dat = dir.join(format!("{}.dat", p.name));
    let mut text = format!("# {}\n", p.columns.join(" "));
    for r in &p.rows {
        let cells: Vec<String> = r.iter().map(|x| format!("{x:.10e}")).collect();
        text.push_str(&cells.join(" "));
        text.push('\n');
    }
    fs::write(&dat, text)?;
    let meta = dir.join(format!("{}.meta.json", p.name));
    let axes = json!({
        "title": p.title,
        "x": p.columns.first(),
        "y": p.columns.iter().skip(1).collect::<Vec<_>>(),
        "columns": p.columns,
        "rows": p.rows.len(),
    });
    fs::write(&meta, serde_json::to_string_pretty(&axes)?)?;
    Ok(vec![dat, meta])
}

pub fn write_json(path: &Path, v: &Value) -> io::Result<()> {
    fs::write(path, serde_json::to_string_pretty(v)? + "\n")
}

/// Writes every table and plot of `report`; returns the file names.
pub fn write_report(dir: &Path, report: &Report) -> io::Result<Vec<String>> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    for t in &report.tables {
        files.push(write_table(dir, t)?);
    }
    for p in &report.plots {
        files.extend(write_plot(dir, p)?);
    }
    Ok(files.iter().filter_map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned())).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_tables_and_plots() {
        let dir = std::env::temp_dir().join(format!("overlaps-output-{}", std::process::id()));
        let mut r = Report::default();
        let mut t = Table::new("stats", &["a", "b"]);
        t.push(vec![num(1.5), num(f64::NAN)]);
        r.tables.push(t);
        let mut p = PlotData::new("curve", "y against x", &["x", "y"]);
        p.push(vec![0.0, 1.0]);
        r.plots.push(p);
        let files = write_report(&dir, &r).unwrap();
        assert_eq!(files, vec!["stats.csv", "curve.dat", "curve.meta.json"]);
        let csv = fs::read_to_string(dir.join("stats.csv")).unwrap();
        assert_eq!(csv, "a,b\n1.5e0,\n");
        let meta: Value = serde_json::from_str(&fs::read_to_string(dir.join("curve.meta.json")).unwrap()).unwrap();
        assert_eq!(meta["x"], "x");
        fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn rejections_accumulate() {
        let mut r = Report::default();
        r.reject("gap", 2);
        r.reject("gap", 0);
        r.reject("gap", 1);
        assert_eq!(r.rejections["gap"], 3);
        assert!(r.passed());
        r.assert("x", false, "");
        assert!(!r.passed());
    }
}
