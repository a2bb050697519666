//! Report rendering: a JSON envelope echoing the run configuration, or CSV.

use std::path::Path;

use anyhow::{Context, Result};
use serde_json::Value;

use crate::{Format, RunConfig};

/// A finished report: pass flag, JSON payload and an optional dedicated CSV
/// table (otherwise the payload is flattened to `key,value` rows).
pub struct Report {
    pub name: &'static str,
    pub passed: bool,
    pub body: Value,
    pub table: Option<String>,
}

impl Report {
    pub fn new(name: &'static str, passed: bool, body: Value) -> Self {
        Report { name, passed, body, table: None }
    }

    pub fn with_table(mut self, table: String) -> Self {
        self.table = Some(table);
        self
    }

    fn envelope(&self, cfg: &RunConfig) -> Value {
        serde_json::json!({
            "command": self.name,
            "passed": self.passed,
            "config": cfg,
            "report": self.body,
        })
    }

    pub fn render(&self, cfg: &RunConfig) -> Result<String> {
        match cfg.format {
            Format::Json => Ok(serde_json::to_string_pretty(&self.envelope(cfg))? + "\n"),
            Format::Csv => match &self.table {
                Some(t) => Ok(t.clone()),
                None => flatten_csv(&self.envelope(cfg)),
            },
        }
    }

    /// Writes `<out>/<name>.<ext>` when an output directory is configured,
    /// stdout otherwise.
    pub fn emit(&self, cfg: &RunConfig) -> Result<()> {
        let text = self.render(cfg)?;
        match &cfg.out {
            Some(dir) => {
                let path = dir.join(format!("{}.{}", self.name, cfg.format.extension()));
                write_file(&path, text.as_bytes())
            }
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn leaves(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    let join = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(m) => m.iter().for_each(|(k, x)| leaves(&join(k), x, out)),
        Value::Array(a) => a.iter().enumerate().for_each(|(i, x)| leaves(&join(&i.to_string()), x, out)),
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

/// `key,value` rows with dotted paths into the document.
pub fn flatten_csv(v: &Value) -> Result<String> {
    let mut rows = Vec::new();
    leaves("", v, &mut rows);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["key", "value"])?;
    for (k, x) in rows {
        w.write_record([k, x])?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}
