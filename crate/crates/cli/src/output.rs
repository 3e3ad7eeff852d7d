use anyhow::{Context, Result};
use serde_json::{json, Value};
use std::path::{Path, PathBuf};

/// Bumped whenever a summary field is renamed or removed.
pub const SCHEMA_VERSION: u32 = 1;

pub struct Table {
    pub name: &'static str,
    pub headers: Vec<&'static str>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: &'static str, headers: &[&'static str], rows: Vec<Vec<f64>>) -> Self {
        Self { name, headers: headers.to_vec(), rows }
    }
}

pub struct Artifacts {
    pub summary: Value,
    pub tables: Vec<Table>,
}

fn write_csv(path: &Path, table: &Table) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot create {}", path.display()))?;
    w.write_record(&table.headers)?;
    for row in &table.rows {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Write `<stem>.json` and one `<stem>_<table>.csv` per table; returns the
/// JSON document that was written.
pub fn write(out_dir: &Path, stem: &str, experiment: &str, parameters: Value, artifacts: &Artifacts) -> Result<Value> {
    std::fs::create_dir_all(out_dir).with_context(|| format!("cannot create output directory {}", out_dir.display()))?;
    let mut files: Vec<PathBuf> = Vec::new();
    for t in &artifacts.tables {
        let name = format!("{stem}_{}.csv", t.name);
        write_csv(&out_dir.join(&name), t)?;
        files.push(name.into());
    }
    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "experiment": experiment,
        "parameters": parameters,
        "results": artifacts.summary,
        "tables": files,
    });
    let path = out_dir.join(format!("{stem}.json"));
    std::fs::write(&path, serde_json::to_string_pretty(&doc)? + "\n").with_context(|| format!("cannot write {}", path.display()))?;
    Ok(doc)
}
