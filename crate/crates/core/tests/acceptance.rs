//! Acceptance suite: one line per criterion, `[n] name: PASS|FAIL (details)`.
//!
//! Runs the full-size experiments; expect several minutes in an optimised build.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use serde_json::json;

use hatwalk::closed_forms::HatKernelContext;
use hatwalk::experiments::{default_suite, run_experiment, run_suite, ExperimentSpec, Fixtures, Profile, Report, SUITE_WINDOW};

const SEED: u64 = 2024;

struct Outcome {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn rows_pass(rep: &Report, prefixes: &[&str]) -> (bool, usize, Vec<String>) {
    let mut n = 0;
    let mut failed = Vec::new();
    for r in rep.rows.iter().filter(|r| prefixes.iter().any(|p| r.claim.starts_with(p))) {
        n += 1;
        if !r.pass {
            failed.push(format!("{} [{}]", r.claim, r.case));
        }
    }
    (n > 0 && failed.is_empty(), n, failed)
}

fn judge(id: usize, name: &'static str, rep: &Report, prefixes: &[&str], took: Duration, budget: Duration) -> Outcome {
    let (ok, n, failed) = rows_pass(rep, prefixes);
    let in_time = took <= budget;
    let mut detail = format!("{n} rows, {:.1}s of {}s", took.as_secs_f64(), budget.as_secs());
    if !failed.is_empty() {
        detail += &format!("; failed: {}", failed.join(", "));
    }
    if !in_time {
        detail += "; over time budget";
    }
    Outcome { id, name, pass: ok && in_time, detail }
}

fn timed(ctx: &HatKernelContext, spec: ExperimentSpec, fixtures: &Fixtures) -> (Report, Duration) {
    let t = Instant::now();
    let rep = run_experiment(ctx, &spec, fixtures).unwrap_or_else(|e| panic!("{}: {e}", spec.name));
    (rep, t.elapsed())
}

fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "timings.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

fn determinism(ctx: &HatKernelContext) -> Outcome {
    let specs = default_suite(SEED, Profile::Quick);
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        run_suite(ctx, &specs, &Fixtures::empty(), d.path()).unwrap();
    }
    let (a, b) = (read_tree(dirs[0].path()), read_tree(dirs[1].path()));
    let differing: Vec<&String> = a.keys().filter(|k| a.get(*k) != b.get(*k)).collect();
    let pass = !a.is_empty() && a.len() == b.len() && differing.is_empty();
    Outcome {
        id: 12,
        name: "determinism",
        pass,
        detail: format!("{} files compared; differing: {differing:?}", a.len()),
    }
}

#[test]
fn acceptance_criteria() {
    let ctx = HatKernelContext::with_window(SUITE_WINDOW).unwrap();
    let fx = Fixtures::builtin();
    let secs = Duration::from_secs;
    let mut out = Vec::new();

    let (kernel, t) = timed(&ctx, ExperimentSpec::new("kernel", SEED), &fx);
    out.push(judge(1, "potential kernel exactness", &kernel, &["kernel.integral_oracle", "kernel.series_oracle", "kernel.harmonicity"], t, secs(60)));
    out.push(judge(2, "kernel asymptotics", &kernel, &["kernel.asymptotics"], t, secs(60)));

    let (green, t) = timed(&ctx, ExperimentSpec::new("green", SEED), &fx);
    out.push(judge(3, "green function three-way agreement", &green, &["green."], t, secs(600)));

    let (cf, t) = timed(&ctx, ExperimentSpec::new("closed_forms", SEED), &fx);
    out.push(judge(4, "return and hit probability brackets", &cf, &["closed_forms."], t, secs(300)));

    let (cap, t) = timed(&ctx, ExperimentSpec::new("capacity", SEED), &fx);
    out.push(judge(5, "capacity identity", &cap, &["capacity.identity", "capacity.singleton", "capacity.harmonic_measure"], t, secs(300)));
    out.push(judge(6, "last-exit decomposition", &cap, &["capacity.decomposition"], t, secs(300)));

    let (ent, t) = timed(&ctx, ExperimentSpec::new("entrance_rate", SEED), &fx);
    out.push(judge(7, "entrance measure rate", &ent, &["entrance."], t, secs(600)));

    let lemma = |which: &[&str]| timed(&ctx, ExperimentSpec::new("lemma_checks", SEED).with("which", json!(which)), &fx);
    let (rep, t) = lemma(&["abs-continuity"]);
    out.push(judge(8, "absolute continuity", &rep, &["abs-continuity."], t, secs(300)));
    let (rep, t) = lemma(&["harmonicity"]);
    out.push(judge(9, "martingale harmonicity", &rep, &["harmonicity."], t, secs(60)));
    let (rep, t) = lemma(&["green-envelope", "gradient-envelope"]);
    out.push(judge(10, "green and gradient envelopes", &rep, &["green-envelope.", "gradient-envelope."], t, secs(120)));
    let (rep, t) = lemma(&["annulus", "disk-avoidance"]);
    out.push(judge(11, "positivity floors", &rep, &["annulus.", "disk-avoidance."], t, secs(600)));

    out.push(determinism(&ctx));

    // written past the test harness capture so the lines always show
    let mut stdout = std::io::stdout().lock();
    stdout.write_all(b"\n").unwrap();
    for o in &out {
        let line = format!("[{}] {}: {} ({})\n", o.id, o.name, if o.pass { "PASS" } else { "FAIL" }, o.detail);
        stdout.write_all(line.as_bytes()).unwrap();
    }
    stdout.flush().unwrap();
    let failed: Vec<usize> = out.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
