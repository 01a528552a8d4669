//! Report rows and their JSON / CSV encodings.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub claim: String,
    pub case: String,
    pub values: BTreeMap<String, f64>,
    pub tolerance: String,
    pub pass: bool,
    pub seed: u64,
}

impl Row {
    pub fn new(claim: &str, case: impl Into<String>, seed: u64) -> Self {
        Row {
            claim: claim.to_string(),
            case: case.into(),
            values: BTreeMap::new(),
            tolerance: String::new(),
            pass: true,
            seed,
        }
    }

    pub fn value(mut self, key: &str, v: f64) -> Self {
        self.values.insert(key.to_string(), v);
        self
    }

    pub fn tolerance(mut self, t: impl Into<String>) -> Self {
        self.tolerance = t.into();
        self
    }

    pub fn pass(mut self, ok: bool) -> Self {
        self.pass = ok;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub experiment: String,
    pub seed: u64,
    pub parameters: BTreeMap<String, Value>,
    pub rows: Vec<Row>,
}

impl Report {
    pub fn new(experiment: &str, seed: u64) -> Self {
        Report {
            experiment: experiment.to_string(),
            seed,
            parameters: BTreeMap::new(),
            rows: Vec::new(),
        }
    }

    pub fn param(&mut self, key: &str, v: impl Serialize) {
        self.parameters
            .insert(key.to_string(), serde_json::to_value(v).expect("serialisable parameter"));
    }

    pub fn push(&mut self, row: Row) {
        self.rows.push(row);
    }

    pub fn extend(&mut self, other: Report) {
        self.rows.extend(other.rows);
    }

    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Row> {
        self.rows.iter().filter(|r| !r.pass)
    }

    pub fn rows_for<'a>(&'a self, claim: &'a str) -> impl Iterator<Item = &'a Row> + 'a {
        self.rows.iter().filter(move |r| r.claim == claim)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises") + "\n"
    }

    /// One line per row; values packed as `key=value` pairs.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["experiment", "claim", "case", "pass", "seed", "tolerance", "values"])?;
        for r in &self.rows {
            let packed: Vec<String> = r.values.iter().map(|(k, v)| format!("{k}={v}")).collect();
            w.write_record([
                self.experiment.as_str(),
                &r.claim,
                &r.case,
                if r.pass { "pass" } else { "fail" },
                &r.seed.to_string(),
                &r.tolerance,
                &packed.join(";"),
            ])?;
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf-8"))
    }

    /// Plot-ready long format: one line per (claim, case, key, value).
    pub fn to_long_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["experiment", "claim", "case", "key", "value"])?;
        for (k, v) in &self.parameters {
            w.write_record([self.experiment.as_str(), "parameter", "", k, &v.to_string()])?;
        }
        for r in &self.rows {
            for (k, v) in &r.values {
                w.write_record([self.experiment.as_str(), &r.claim, &r.case, k, &v.to_string()])?;
            }
            w.write_record([
                self.experiment.as_str(),
                &r.claim,
                &r.case,
                "pass",
                if r.pass { "1" } else { "0" },
            ])?;
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf-8"))
    }

    /// Writes `<stem>.json`, `<stem>.csv` and `<stem>_long.csv` under `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let files = [
            (dir.join(format!("{stem}.json")), self.to_json()),
            (dir.join(format!("{stem}.csv")), self.to_csv()?),
            (dir.join(format!("{stem}_long.csv")), self.to_long_csv()?),
        ];
        let mut out = Vec::new();
        for (path, text) in files {
            fs::write(&path, text)?;
            out.push(path);
        }
        Ok(out)
    }

    /// Short human-readable summary.
    pub fn summary(&self) -> String {
        let failed = self.failures().count();
        format!(
            "{}: {} rows, {} failed",
            self.experiment,
            self.rows.len(),
            failed
        )
    }
}
