use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::json;

use hatwalk::closed_forms::HatKernelContext;
use hatwalk::exact_solver::{
    bracket_infinite, entrance_measure, green_bracket, BracketConfig, Chain, DomainSolver, Quantity, SiteKind,
    SolverConfig, TruncatedDomain,
};
use hatwalk::experiments::{
    default_suite, run_entrance_rate, run_lemma_checks, run_suite, EntranceParams, Fixtures, LemmaParams, Profile,
    Report, EXPERIMENTS, SUITE_WINDOW,
};
use hatwalk::kernel::KernelTable;
use hatwalk::lattice::{Site, SiteSet};
use hatwalk::monte_carlo::{
    abs_continuity_check, annulus_exit_estimate, disk_avoidance_estimate, estimate_entrance, estimate_green_hat,
    Estimate, PathFunctional, WalkConfig,
};
use hatwalk::potential_theory::{capacity_config, capacity_report, verify_capacity_identity};

const DEFAULT_SEED: u64 = 2024;
const DEFAULT_TOL: f64 = 1e-3;

/// Potential kernel, conditioned random walk and verification experiments.
#[derive(Parser, Debug)]
#[command(name = "hatwalk", version)]
struct Cli {
    /// Base seed for every random choice.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory for reports.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Bracket width tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// JSON file with any of `seed`, `threads`, `out_dir`, `tol`; flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    threads: Option<usize>,
    out_dir: Option<PathBuf>,
    tol: Option<f64>,
}

struct Settings {
    seed: u64,
    out_dir: PathBuf,
    tol: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ChainArg {
    Srw,
    Hat,
}

impl From<ChainArg> for Chain {
    fn from(c: ChainArg) -> Chain {
        match c {
            ChainArg::Srw => Chain::Srw,
            ChainArg::Hat => Chain::Hat,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum QuantityArg {
    Hit,
    Escape,
    Entrance,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum McExperiment {
    Green,
    Entrance,
    Abscont,
    Annulus,
    Disk,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the exact potential kernel on one octant as CSV.
    KernelTable {
        #[arg(long, default_value_t = 256)]
        window: i64,
        /// Output file (defaults to `<out-dir>/kernel_table.csv`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Closed-form Green's function with its solver bracket.
    Green {
        #[arg(long, value_parser = parse_site, allow_hyphen_values = true)]
        x: Site,
        #[arg(long, value_parser = parse_site, allow_hyphen_values = true)]
        y: Site,
    },
    /// Bracket (conditioned walk) or truncated value (simple random walk) of
    /// a hitting-type quantity for a target set.
    Solve {
        #[arg(long, value_enum, default_value = "hat")]
        chain: ChainArg,
        /// Sites as `x1,x2;x1,x2;...` or `@file` with one `x1 x2` per line.
        #[arg(long, value_parser = parse_set, allow_hyphen_values = true)]
        set: SiteSet,
        #[arg(long, value_parser = parse_site, allow_hyphen_values = true)]
        x: Site,
        #[arg(long, value_enum, default_value = "hit")]
        quantity: QuantityArg,
        /// Entry site for `entrance`, escaping site for `escape`.
        #[arg(long, value_parser = parse_site, allow_hyphen_values = true)]
        y: Option<Site>,
        /// Starting radius (conditioned walk) or truncation radius (simple walk).
        #[arg(long, default_value_t = 32.0)]
        radius: f64,
    },
    /// Capacity, escape probabilities and harmonic measure of a set.
    Capacity {
        #[arg(long, value_parser = parse_set, allow_hyphen_values = true)]
        set: SiteSet,
    },
    /// Monte Carlo estimates; one CSV row per estimate.
    Mc {
        #[arg(long, value_enum, default_value = "hat")]
        chain: ChainArg,
        #[arg(long, value_enum)]
        experiment: McExperiment,
        #[arg(long, value_parser = parse_site, allow_hyphen_values = true)]
        x: Site,
        #[arg(long, value_parser = parse_site, allow_hyphen_values = true)]
        y: Option<Site>,
        #[arg(long, value_parser = parse_set, allow_hyphen_values = true)]
        set: Option<SiteSet>,
        /// Truncation radius, or the stopping radius for `abscont`.
        #[arg(long, default_value_t = 512.0)]
        radius: f64,
        /// Disk radius for `annulus` and `disk`.
        #[arg(long, default_value_t = 8.0)]
        r: f64,
        /// Outer factor for `annulus`.
        #[arg(long, default_value_t = 4.0)]
        c: f64,
        #[arg(long, default_value = "exit_octant")]
        functional: String,
        #[arg(long, default_value_t = 100_000)]
        reps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rate at which the entrance law from afar approaches harmonic measure.
    EntranceRate {
        #[arg(long, value_parser = parse_set, allow_hyphen_values = true)]
        set: Option<SiteSet>,
        /// Direction as `u1,u2`.
        #[arg(long, default_value = "1,0")]
        direction: String,
        #[arg(long, value_delimiter = ',', default_values_t = vec![32.0, 64.0, 128.0, 256.0])]
        distances: Vec<f64>,
    },
    /// Structural checks by name.
    LemmaChecks {
        /// Comma-separated subset of the check names (default: all).
        #[arg(long, value_delimiter = ',')]
        which: Vec<String>,
    },
    /// The full verification suite.
    Suite {
        #[arg(long, default_value = "full")]
        profile: String,
        /// Comma-separated subset of experiments.
        #[arg(long, value_delimiter = ',')]
        only: Vec<String>,
        /// Fixture file to check against (defaults to the bundled one for the
        /// full profile and to none for the quick one).
        #[arg(long)]
        fixtures: Option<PathBuf>,
        /// Write the fixtures merged with this run's observations here.
        #[arg(long)]
        record_fixtures: Option<PathBuf>,
    },
}

fn parse_site(s: &str) -> Result<Site, String> {
    s.trim_matches(|c| c == '(' || c == ')').parse::<Site>().map_err(|e| e.to_string())
}

fn parse_set(s: &str) -> Result<SiteSet, String> {
    if let Some(path) = s.strip_prefix('@') {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{path}: {e}"))?;
        return SiteSet::parse(&text).map_err(|e| e.to_string());
    }
    let sites = s
        .split(';')
        .filter(|p| !p.trim().is_empty())
        .map(parse_site)
        .collect::<Result<Vec<_>, _>>()?;
    SiteSet::new(sites).map_err(|e| e.to_string())
}

fn settings(cli: &Cli) -> Result<Settings, String> {
    let file: FileConfig = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
            serde_json::from_str(&text).map_err(|e| format!("{}: {e}", p.display()))?
        }
        None => FileConfig::default(),
    };
    if let Some(n) = cli.threads.or(file.threads) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    Ok(Settings {
        seed: cli.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
        out_dir: cli.out_dir.clone().or(file.out_dir).unwrap_or_else(|| PathBuf::from("out")),
        tol: cli.tol.or(file.tol).unwrap_or(DEFAULT_TOL),
    })
}

fn context() -> Result<HatKernelContext, String> {
    HatKernelContext::with_window(SUITE_WINDOW).map_err(|e| e.to_string())
}

fn print_json(v: &impl serde::Serialize) -> Result<(), String> {
    println!("{}", serde_json::to_string_pretty(v).map_err(|e| e.to_string())?);
    Ok(())
}

fn write_report(rep: &Report, s: &Settings) -> Result<bool, String> {
    let files = rep.write(&s.out_dir, &rep.experiment).map_err(|e| e.to_string())?;
    println!("{}", rep.summary());
    for r in rep.failures() {
        println!("  FAIL {} [{}] {:?}", r.claim, r.case, r.values);
    }
    for f in files {
        println!("  wrote {}", f.display());
    }
    Ok(rep.passed())
}

fn mc_csv(path: &Path, experiment: &str, params: &[(&str, String)], rows: &[(String, Estimate)], seed: u64) -> Result<(), String> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| e.to_string())?;
    let mut header = vec!["experiment".to_string()];
    header.extend(params.iter().map(|p| p.0.to_string()));
    header.extend(["target", "estimate", "stderr", "n", "bias_bound", "seed"].map(String::from));
    w.write_record(&header).map_err(|e| e.to_string())?;
    for (target, e) in rows {
        let mut rec = vec![experiment.to_string()];
        rec.extend(params.iter().map(|p| p.1.clone()));
        rec.extend([
            target.clone(),
            e.mean.to_string(),
            e.stderr.to_string(),
            e.n.to_string(),
            e.truncation_bias_bound.to_string(),
            seed.to_string(),
        ]);
        w.write_record(&rec).map_err(|e| e.to_string())?;
    }
    w.flush().map_err(|e| e.to_string())
}

fn run(cli: Cli) -> Result<bool, String> {
    let s = settings(&cli)?;
    let err = |e: hatwalk::Error| e.to_string();
    match cli.command {
        Command::KernelTable { window, out } => {
            let table = KernelTable::new(window).map_err(err)?;
            let path = out.unwrap_or_else(|| s.out_dir.join("kernel_table.csv"));
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;
            }
            let mut w = csv::Writer::from_path(&path).map_err(|e| e.to_string())?;
            w.write_record(["x1", "x2", "a"]).map_err(|e| e.to_string())?;
            for (x1, x2, a) in table.octant_entries() {
                w.write_record([x1.to_string(), x2.to_string(), format!("{a:.17e}")])
                    .map_err(|e| e.to_string())?;
            }
            w.flush().map_err(|e| e.to_string())?;
            println!("wrote {} (harmonicity residual {:e})", path.display(), table.harmonicity_residual());
        }
        Command::Green { x, y } => {
            let ctx = context()?;
            let cfg = BracketConfig {
                tol: s.tol,
                ..BracketConfig::default()
            };
            let b = green_bracket(&ctx, x, y, &cfg).map_err(err)?;
            print_json(&json!({
                "x": x, "y": y,
                "closed_form": ctx.green_hat(x, y).map_err(err)?,
                "g_hat": ctx.g_hat(x, y).map_err(err)?,
                "bracket": b,
            }))?;
        }
        Command::Solve { chain, set, x, quantity, y, radius } => {
            let ctx = context()?;
            let pick = |what: &str| y.or_else(|| set.iter().next()).ok_or_else(|| format!("{what} needs --y"));
            match Chain::from(chain) {
                Chain::Hat => {
                    let q = match quantity {
                        QuantityArg::Hit => Quantity::Hit,
                        QuantityArg::Escape => Quantity::Escape { y: pick("escape")? },
                        QuantityArg::Entrance => Quantity::EntranceAt { y: pick("entrance")? },
                    };
                    let cfg = BracketConfig {
                        radius,
                        tol: s.tol,
                        ..BracketConfig::default()
                    };
                    if let QuantityArg::Entrance = quantity {
                        if y.is_none() {
                            print_json(&entrance_measure(&ctx, x, &set, &cfg).map_err(err)?)?;
                            return Ok(true);
                        }
                    }
                    print_json(&json!({ "quantity": q, "x": x, "bracket": bracket_infinite(&ctx, q, x, &set, &cfg).map_err(err)? }))?;
                }
                Chain::Srw => {
                    if !matches!(quantity, QuantityArg::Hit) {
                        return Err("the simple random walk supports --quantity hit only".into());
                    }
                    let dom = TruncatedDomain::new(radius, vec![], vec![("A".into(), set.clone())]).map_err(err)?;
                    let solver = DomainSolver::new(Chain::Srw, dom, ctx.kernel(), SolverConfig::default()).map_err(err)?;
                    let sol = solver
                        .solve(|_, k| matches!(k, SiteKind::Absorbing(_)) as u8 as f64, None)
                        .map_err(err)?;
                    let v = if set.contains(x) { Some(1.0) } else { sol.value(x) };
                    print_json(&json!({
                        "quantity": "hit before leaving the ball",
                        "x": x, "radius": radius,
                        "value": v.ok_or("x must lie inside the ball")?,
                        "error_bound": sol.error_bound,
                    }))?;
                }
            }
        }
        Command::Capacity { set } => {
            let ctx = context()?;
            let cfg = capacity_config(s.tol);
            let report = capacity_report(&ctx, &set, &cfg).map_err(err)?;
            let identity = verify_capacity_identity(&ctx, &set, &cfg).map_err(err)?;
            print_json(&json!({ "report": report, "identity": identity }))?;
        }
        Command::Mc { chain, experiment, x, y, set, radius, r, c, functional, reps, out } => {
            let ctx = context()?;
            let chain = Chain::from(chain);
            if chain == Chain::Srw && !matches!(experiment, McExperiment::Abscont) {
                return Err("only `abscont` samples the simple random walk".into());
            }
            let cfg = WalkConfig::new(Chain::Hat, radius, s.seed, reps);
            let need_y = || y.ok_or_else(|| "this experiment needs --y".to_string());
            let (name, params, rows): (&str, Vec<(&str, String)>, Vec<(String, Estimate)>) = match experiment {
                McExperiment::Green => {
                    let y = need_y()?;
                    let e = estimate_green_hat(&ctx, x, y, &cfg).map_err(err)?;
                    ("green", vec![("x", x.to_string()), ("y", y.to_string()), ("radius", radius.to_string())], vec![(y.to_string(), e)])
                }
                McExperiment::Entrance => {
                    let set = set.ok_or("entrance needs --set")?;
                    let e = estimate_entrance(&ctx, x, &set, &cfg).map_err(err)?;
                    let rows = e.per_site.iter().map(|(s, est)| (s.to_string(), *est)).collect();
                    ("entrance", vec![("x", x.to_string()), ("radius", radius.to_string()), ("hits", e.hits.to_string())], rows)
                }
                McExperiment::Annulus => {
                    let y0 = need_y()?;
                    let e = annulus_exit_estimate(&ctx, x, y0, r, c, &cfg).map_err(err)?;
                    ("annulus", vec![("x0", x.to_string()), ("y0", y0.to_string()), ("r", r.to_string()), ("C", c.to_string())], vec![("exit".into(), e)])
                }
                McExperiment::Disk => {
                    let y0 = need_y()?;
                    let e = disk_avoidance_estimate(&ctx, x, y0, r, &cfg).map_err(err)?;
                    ("disk", vec![("x0", x.to_string()), ("y0", y0.to_string()), ("r", r.to_string()), ("radius", radius.to_string())], vec![("avoid".into(), e)])
                }
                McExperiment::Abscont => {
                    let f: PathFunctional = functional.parse().map_err(err)?;
                    let rep = abs_continuity_check(&ctx, x, radius, f, reps, s.seed, 200).map_err(err)?;
                    print_json(&rep)?;
                    return Ok(rep.pass);
                }
            };
            let path = out.unwrap_or_else(|| s.out_dir.join(format!("mc_{name}.csv")));
            mc_csv(&path, name, &params, &rows, s.seed)?;
            for (t, e) in &rows {
                println!("{name} {t}: {:.6} +- {:.6} (bias <= {:.3e}, n = {})", e.mean, e.stderr, e.truncation_bias_bound, e.n);
            }
            println!("wrote {}", path.display());
        }
        Command::EntranceRate { set, direction, distances } => {
            let ctx = context()?;
            let mut p = EntranceParams {
                distances,
                tol: s.tol.min(EntranceParams::default().tol),
                ..EntranceParams::default()
            };
            if let Some(set) = set {
                p.set = set;
            }
            let d = parse_direction(&direction)?;
            p.direction = d;
            let rep = run_entrance_rate(&ctx, &p, s.seed).map_err(err)?;
            return write_report(&rep, &s);
        }
        Command::LemmaChecks { which } => {
            let ctx = context()?;
            let mut p = LemmaParams::default();
            if !which.is_empty() {
                p.which = which;
            }
            let rep = run_lemma_checks(&ctx, &p, &Fixtures::builtin(), s.seed).map_err(err)?;
            return write_report(&rep, &s);
        }
        Command::Suite { profile, only, fixtures, record_fixtures } => {
            let ctx = context()?;
            let profile: Profile = profile.parse().map_err(err)?;
            if let Some(bad) = only.iter().find(|n| !EXPERIMENTS.contains(&n.as_str())) {
                return Err(format!("unknown experiment {bad:?}; expected one of {}", EXPERIMENTS.join(", ")));
            }
            let specs: Vec<_> = default_suite(s.seed, profile)
                .into_iter()
                .filter(|spec| only.is_empty() || only.contains(&spec.name))
                .collect();
            let fx = match fixtures {
                Some(p) => Fixtures::load(&p).map_err(err)?,
                None if profile == Profile::Full => Fixtures::builtin(),
                None => Fixtures::empty(),
            };
            let outcome = run_suite(&ctx, &specs, &fx, &s.out_dir).map_err(err)?;
            for rep in &outcome.reports {
                println!("{}", rep.summary());
                for r in rep.failures() {
                    println!("  FAIL {} [{}] {:?}", r.claim, r.case, r.values);
                }
            }
            if let Some(p) = record_fixtures {
                fx.save_merged(&p).map_err(err)?;
                println!("fixtures written to {}", p.display());
            }
            println!("reports in {}", s.out_dir.display());
            return Ok(outcome.passed());
        }
    }
    Ok(true)
}

fn parse_direction(s: &str) -> Result<(f64, f64), String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("direction {s:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match parts.as_slice() {
        [a, b] => Ok((*a, *b)),
        _ => Err(format!("direction {s:?} must be `u1,u2`")),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parsers() {
        assert_eq!(parse_site("(3,-1)").unwrap(), Site::new(3, -1));
        assert_eq!(parse_set("3,0;4,0; 3,1").unwrap().len(), 3);
        assert!(parse_set("3,0;3,0").is_err() || parse_set("3,0;3,0").unwrap().len() == 1);
        assert_eq!(parse_direction("1, 1").unwrap(), (1.0, 1.0));
        assert!(parse_direction("1").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        std::fs::write(&cfg, r#"{"seed": 5, "tol": 0.01, "out_dir": "elsewhere"}"#).unwrap();
        let cli = Cli::parse_from(["hatwalk", "--config", cfg.to_str().unwrap(), "--seed", "9", "lemma-checks"]);
        let s = settings(&cli).unwrap();
        assert_eq!(s.seed, 9);
        assert_eq!(s.tol, 0.01);
        assert_eq!(s.out_dir, PathBuf::from("elsewhere"));
        std::fs::write(&cfg, r#"{"sed": 5}"#).unwrap();
        assert!(settings(&cli).is_err());
    }
}
