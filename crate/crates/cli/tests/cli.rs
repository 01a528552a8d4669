use std::process::{Command, Output};

fn hatwalk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hatwalk")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn capacity_of_a_singleton() {
    let o = hatwalk(&["capacity", "--set", "1,0"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let cap = &v["report"]["cap_hat"];
    let (lo, hi) = (cap["lower"].as_f64().unwrap(), cap["upper"].as_f64().unwrap());
    assert!(lo <= 0.5 && 0.5 <= hi, "{cap}");
    assert_eq!(v["identity"]["overlap"], true);
}

#[test]
fn solve_brackets_and_truncated_values() {
    let o = hatwalk(&["--tol", "1e-4", "solve", "--set", "2,1", "--x", "-3,4"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["bracket"]["upper"].as_f64().unwrap() - v["bracket"]["lower"].as_f64().unwrap() <= 1e-4);

    let o = hatwalk(&["solve", "--chain", "srw", "--set", "2,1;2,2", "--x", "0,0", "--radius", "20"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let p = v["value"].as_f64().unwrap();
    assert!(p > 0.0 && p < 1.0);
}

#[test]
fn kernel_table_and_mc_write_csv() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let o = hatwalk(&["--out-dir", d, "kernel-table", "--window", "16"]);
    assert!(o.status.success());
    let table = std::fs::read_to_string(dir.path().join("kernel_table.csv")).unwrap();
    assert!(table.starts_with("x1,x2,a\n"));
    assert_eq!(table.lines().count(), 1 + 17 * 18 / 2);

    let args = ["--out-dir", d, "--seed", "7", "mc", "--experiment", "green", "--x", "1,0", "--y", "1,0", "--radius", "64", "--reps", "2000"];
    let o = hatwalk(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("mc_green.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "experiment,x,y,radius,target,estimate,stderr,n,bias_bound,seed");
    assert!(lines.next().unwrap().ends_with(",7"));
    let again = hatwalk(&args);
    assert_eq!(std::fs::read_to_string(dir.path().join("mc_green.csv")).unwrap(), csv);
    assert!(again.status.success());
}

#[test]
fn lemma_checks_subset_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let o = hatwalk(&["--out-dir", dir.path().to_str().unwrap(), "lemma-checks", "--which", "no-return,srw-exit"]);
    assert!(o.status.success(), "{}", stdout(&o));
    for f in ["lemma_checks.json", "lemma_checks.csv", "lemma_checks_long.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn bad_input_is_reported() {
    let o = hatwalk(&["capacity", "--set", "0,0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
    let o = hatwalk(&["suite", "--only", "nope"]);
    assert_eq!(o.status.code(), Some(2));
    let o = hatwalk(&["lemma-checks", "--which", "nope"]);
    assert_eq!(o.status.code(), Some(1));
}
