//! Reproducible verification suite: experiment specifications, the default
//! suite, and report output.

mod checks;
pub mod fixtures;
pub mod report;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::closed_forms::HatKernelContext;
use crate::error::{precondition, Result};

pub use checks::{
    run_capacity_suite, run_closed_form_brackets, run_entrance_rate, run_green_validation, run_kernel_checks,
    run_lemma_checks, run_mc_battery, BatteryParams, CapacityParams, ClosedFormParams, EntranceParams,
    GreenParams, KernelParams, LemmaParams, CHECK_NAMES,
};
pub use fixtures::{Fixture, FixtureKind, Fixtures};
pub use report::{Report, Row};

/// Kernel window used by the suite's shared context.
pub const SUITE_WINDOW: i64 = 1024;

/// Experiment names understood by [`run_experiment`].
pub const EXPERIMENTS: [&str; 7] = [
    "kernel",
    "green",
    "closed_forms",
    "capacity",
    "entrance_rate",
    "lemma_checks",
    "mc_battery",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    #[serde(default)]
    pub parameters: BTreeMap<String, Value>,
    pub seed: u64,
    /// File stem, relative to the output directory.
    pub output_path: String,
}

impl ExperimentSpec {
    pub fn new(name: &str, seed: u64) -> Self {
        ExperimentSpec {
            name: name.to_string(),
            parameters: BTreeMap::new(),
            seed,
            output_path: name.to_string(),
        }
    }

    pub fn with(mut self, key: &str, v: Value) -> Self {
        self.parameters.insert(key.to_string(), v);
        self
    }

    fn params<T: for<'de> Deserialize<'de>>(&self) -> Result<T> {
        let map: serde_json::Map<String, Value> = self.parameters.clone().into_iter().collect();
        Ok(serde_json::from_value(Value::Object(map))?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Full-size experiments.
    Full,
    /// Reduced sample sizes and ladders, for smoke runs.
    Quick,
}

impl std::str::FromStr for Profile {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Profile::Full),
            "quick" => Ok(Profile::Quick),
            _ => Err(precondition(format!("unknown profile {s:?}"))),
        }
    }
}

/// The default suite; every experiment derives its randomness from `seed`.
pub fn default_suite(seed: u64, profile: Profile) -> Vec<ExperimentSpec> {
    let specs: Vec<ExperimentSpec> = EXPERIMENTS.iter().map(|n| ExperimentSpec::new(n, seed)).collect();
    if profile == Profile::Full {
        return specs;
    }
    specs
        .into_iter()
        .map(|s| match s.name.as_str() {
            "kernel" => s.with("window", json!(64)).with("oracle_radius", json!(3)).with("series_terms", json!(20_000)),
            "green" => s
                .with("random_pairs", json!(3))
                .with("max_norm", json!(10.0))
                .with("radius", json!(128.0))
                .with("replicas", json!(4000)),
            "closed_forms" => s.with("max_norm", json!(2.0)),
            "capacity" => s
                .with("sets", json!([[{"x1": 1, "x2": 0}]]))
                .with("random_sets", json!(2))
                .with("max_size", json!(2))
                .with("max_norm", json!(4.0))
                .with("tol", json!(1e-2)),
            "entrance_rate" => s.with("distances", json!([32.0, 64.0, 128.0])),
            "lemma_checks" => s
                .with("which", json!(["srw-exit", "green-envelope", "annulus", "disk-avoidance", "no-return"]))
                .with("replicas", json!(2000))
                .with("envelope_samples", json!(2500))
                .with("radii", json!([4, 8]))
                .with("stability_tol", json!(1.0)),
            "mc_battery" => s
                .with("targets", json!(12))
                .with("max_norm", json!(4))
                .with("replicas", json!(1000))
                .with("min_pass_fraction", json!(0.75)),
            _ => s,
        })
        .collect()
}

pub fn run_experiment(ctx: &HatKernelContext, spec: &ExperimentSpec, fixtures: &Fixtures) -> Result<Report> {
    let seed = spec.seed;
    match spec.name.as_str() {
        "kernel" => run_kernel_checks(&spec.params()?, seed),
        "green" => run_green_validation(ctx, &spec.params()?, seed),
        "closed_forms" => run_closed_form_brackets(ctx, &spec.params()?, seed),
        "capacity" => run_capacity_suite(ctx, &spec.params()?, seed),
        "entrance_rate" => run_entrance_rate(ctx, &spec.params()?, seed),
        "lemma_checks" => run_lemma_checks(ctx, &spec.params()?, fixtures, seed),
        "mc_battery" => run_mc_battery(ctx, &spec.params()?, seed),
        other => Err(precondition(format!(
            "unknown experiment {other:?}; expected one of {}",
            EXPERIMENTS.join(", ")
        ))),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteOutcome {
    pub reports: Vec<Report>,
    /// Wall-clock seconds per experiment; kept out of the reports so those
    /// stay byte-for-byte reproducible.
    pub timings: BTreeMap<String, f64>,
}

impl SuiteOutcome {
    pub fn passed(&self) -> bool {
        self.reports.iter().all(Report::passed)
    }
}

/// Runs `specs` concurrently and writes each report, a `summary.json` and a
/// separate `timings.json` under `out_dir`.
pub fn run_suite(
    ctx: &HatKernelContext,
    specs: &[ExperimentSpec],
    fixtures: &Fixtures,
    out_dir: &Path,
) -> Result<SuiteOutcome> {
    let results: Vec<(Report, f64)> = specs
        .par_iter()
        .map(|spec| {
            let t = Instant::now();
            let rep = run_experiment(ctx, spec, fixtures)?;
            Ok((rep, t.elapsed().as_secs_f64()))
        })
        .collect::<Result<_>>()?;
    let mut timings = BTreeMap::new();
    let mut summary = Vec::new();
    for (spec, (rep, secs)) in specs.iter().zip(&results) {
        rep.write(out_dir, &spec.output_path)?;
        timings.insert(spec.output_path.clone(), *secs);
        summary.push(json!({
            "experiment": rep.experiment,
            "output": spec.output_path,
            "seed": spec.seed,
            "rows": rep.rows.len(),
            "failed": rep.failures().count(),
            "pass": rep.passed(),
        }));
    }
    std::fs::write(out_dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    std::fs::write(out_dir.join("timings.json"), serde_json::to_string_pretty(&timings)? + "\n")?;
    Ok(SuiteOutcome {
        reports: results.into_iter().map(|r| r.0).collect(),
        timings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx() -> HatKernelContext {
        HatKernelContext::with_window(256).unwrap()
    }

    #[test]
    fn spec_parameters_override_defaults() {
        let s = ExperimentSpec::new("green", 1).with("replicas", json!(10));
        let p: GreenParams = s.params().unwrap();
        assert_eq!(p.replicas, 10);
        assert_eq!(p.radius, GreenParams::default().radius);
        let bad = ExperimentSpec::new("green", 1).with("replicas", json!("many"));
        assert!(bad.params::<GreenParams>().is_err());
    }

    #[test]
    fn unknown_names() {
        let c = ctx();
        let f = Fixtures::empty();
        assert!(run_experiment(&c, &ExperimentSpec::new("nope", 1), &f).is_err());
        let spec = ExperimentSpec::new("lemma_checks", 1).with("which", json!(["nope"]));
        let rep = run_experiment(&c, &spec, &f).unwrap();
        assert!(!rep.passed());
    }

    #[test]
    fn no_return_rows_are_exact() {
        let c = ctx();
        let spec = ExperimentSpec::new("lemma_checks", 3).with("which", json!(["no-return"]));
        let rep = run_experiment(&c, &spec, &Fixtures::empty()).unwrap();
        assert_eq!(rep.rows.len(), 22);
        assert!(rep.passed());
    }

    #[test]
    fn singleton_entrance_rate_is_zero() {
        let c = ctx();
        let p = EntranceParams {
            set: crate::lattice::SiteSet::singleton(crate::lattice::Site::new(2, 1)),
            distances: vec![32.0, 64.0],
            ..EntranceParams::default()
        };
        let rep = run_entrance_rate(&c, &p, 0).unwrap();
        for r in rep.rows_for("entrance.rate") {
            assert_eq!(r.values["eps_upper"], 0.0);
        }
        let near = EntranceParams {
            distances: vec![10.0],
            ..EntranceParams::default()
        };
        assert!(run_entrance_rate(&c, &near, 0).is_err());
    }
}
