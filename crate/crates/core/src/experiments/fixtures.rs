//! Recorded empirical constants: floors and fitted values that have no
//! closed form are captured once and then guarded as regressions.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::Result;

const BUILTIN: &str = include_str!("../../fixtures/recorded.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixtureKind {
    /// Later observations must stay at or above `(1 - slack) * value`.
    Floor,
    /// Later observations must stay within `slack * |value|` of `value`.
    Regression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fixture {
    pub value: f64,
    pub kind: FixtureKind,
    pub slack: f64,
    pub provenance: String,
}

impl Fixture {
    pub fn recorded(value: f64, kind: FixtureKind, slack: f64) -> Self {
        Fixture {
            value,
            kind,
            slack,
            provenance: "recorded".into(),
        }
    }

    pub fn admits(&self, observed: f64) -> bool {
        match self.kind {
            FixtureKind::Floor => observed >= (1.0 - self.slack) * self.value,
            FixtureKind::Regression => (observed - self.value).abs() <= self.slack * self.value.abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixtureCheck {
    pub reference: Option<f64>,
    pub pass: bool,
}

/// Stored fixtures plus everything observed during a run.
#[derive(Debug, Default)]
pub struct Fixtures {
    stored: BTreeMap<String, Fixture>,
    observed: Mutex<BTreeMap<String, Fixture>>,
}

impl Fixtures {
    pub fn empty() -> Self {
        Fixtures::default()
    }

    /// Fixtures shipped with the crate.
    pub fn builtin() -> Self {
        Fixtures::from_json(BUILTIN).expect("bundled fixtures parse")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(Fixtures {
            stored: serde_json::from_str(text)?,
            observed: Mutex::default(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Fixtures::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn get(&self, key: &str) -> Option<&Fixture> {
        self.stored.get(key)
    }

    pub fn len(&self) -> usize {
        self.stored.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stored.is_empty()
    }

    /// Compares `value` with the stored fixture, or notes it for recording
    /// when none exists (which passes).
    pub fn observe(&self, key: &str, value: f64, kind: FixtureKind, slack: f64) -> FixtureCheck {
        self.observed
            .lock()
            .expect("fixture lock")
            .insert(key.to_string(), Fixture::recorded(value, kind, slack));
        match self.stored.get(key) {
            Some(f) => FixtureCheck {
                reference: Some(f.value),
                pass: f.admits(value),
            },
            None => FixtureCheck {
                reference: None,
                pass: true,
            },
        }
    }

    /// Stored fixtures with every observation of this run added where no
    /// fixture existed yet.
    pub fn merged(&self) -> BTreeMap<String, Fixture> {
        let mut out = self.stored.clone();
        for (k, v) in self.observed.lock().expect("fixture lock").iter() {
            out.entry(k.clone()).or_insert_with(|| v.clone());
        }
        out
    }

    pub fn save_merged(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(&self.merged())? + "\n")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_then_check() {
        let f = Fixtures::empty();
        assert!(f.observe("floor", 0.5, FixtureKind::Floor, 0.1).pass);
        let text = serde_json::to_string(&f.merged()).unwrap();
        let g = Fixtures::from_json(&text).unwrap();
        assert_eq!(g.get("floor").unwrap().provenance, "recorded");
        assert!(g.observe("floor", 0.46, FixtureKind::Floor, 0.1).pass);
        assert!(!g.observe("floor", 0.44, FixtureKind::Floor, 0.1).pass);
        assert!(g.observe("fit", 1.0, FixtureKind::Regression, 0.02).pass);
        let h = Fixtures::from_json(r#"{"fit":{"value":1.0,"kind":"regression","slack":0.02,"provenance":"recorded"}}"#).unwrap();
        assert!(h.observe("fit", 1.015, FixtureKind::Regression, 0.02).pass);
        assert!(!h.observe("fit", 1.05, FixtureKind::Regression, 0.02).pass);
    }

    #[test]
    fn builtin_fixtures_parse() {
        let f = Fixtures::builtin();
        assert!(f.merged().values().all(|v| v.provenance == "recorded"));
    }
}
