//! Individual verification experiments. Each returns a [`Report`] whose rows
//! carry computed values, the tolerance applied and a verdict.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fixtures::{FixtureKind, Fixtures};
use super::report::{Report, Row};
use crate::closed_forms::HatKernelContext;
use crate::error::{precondition, Result};
use crate::exact_solver::{
    bracket_infinite, entrance_measure, green_bracket, green_truncated, no_return_check, Bracket,
    BracketConfig, BoundaryModel, Chain, DomainSolver, FiniteChain, Quantity, SetSolution, SiteKind,
    SolverConfig, SrwHarmonic, TruncatedDomain,
};
use crate::kernel::{oracle, KernelTable, ASYM_ERROR_COEFF};
use crate::lattice::{boundary, enumerate_ball, nearest_site, Ball, Site, SiteSet, DEFAULT_SITE_BUDGET};
use crate::monte_carlo::{
    abs_continuity_check, annulus_exit_estimate, closed_form_battery, derive_seed, disk_avoidance_estimate,
    estimate_green_hat, PathFunctional, WalkConfig,
};
use crate::potential_theory::{
    capacity_config, capacity_report, hit_prob_via_decomposition, hm_hat, verify_capacity_identity,
};

fn sites_within(max_norm: f64) -> Vec<Site> {
    let h = max_norm.floor() as i64;
    let mut out = Vec::new();
    for x1 in -h..=h {
        for x2 in -h..=h {
            let s = Site::new(x1, x2);
            if !s.is_origin() && s.norm() <= max_norm {
                out.push(s);
            }
        }
    }
    out
}

fn random_site(rng: &mut ChaCha8Rng, max_norm: f64) -> Site {
    let h = max_norm.floor() as i64;
    loop {
        let s = Site::new(rng.gen_range(-h..=h), rng.gen_range(-h..=h));
        if !s.is_origin() && s.norm() <= max_norm {
            return s;
        }
    }
}

fn random_set(rng: &mut ChaCha8Rng, size: usize, max_norm: f64) -> SiteSet {
    let mut sites = Vec::new();
    while sites.len() < size {
        let s = random_site(rng, max_norm);
        if !sites.contains(&s) {
            sites.push(s);
        }
    }
    SiteSet::new(sites).expect("nonempty")
}

fn set_label(set: &SiteSet) -> String {
    set.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" ")
}

fn relative_drift(a: f64, b: f64) -> f64 {
    (b - a).abs() / a.abs()
}

// ---------------------------------------------------------------------------
// potential kernel

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelParams {
    pub window: i64,
    pub oracle_radius: i64,
    pub series_terms: u64,
    pub drift_tol: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        KernelParams {
            window: 256,
            oracle_radius: 8,
            series_terms: 200_000,
            drift_tol: 0.1,
        }
    }
}

/// Table against both oracles, harmonicity, and the asymptotic constant on
/// the outer halves of the windows `N/2` and `N`.
pub fn run_kernel_checks(p: &KernelParams, seed: u64) -> Result<Report> {
    let mut rep = Report::new("kernel", seed);
    rep.param("params", p);
    let table = KernelTable::new(p.window)?;
    let h = p.oracle_radius;
    let sites: Vec<Site> = (-h..=h)
        .flat_map(|x1| (-h..=h).map(move |x2| Site::new(x1, x2)))
        .collect();

    let integral: Vec<f64> = sites
        .par_iter()
        .map(|&s| Ok((oracle::a_integral(s)? - table.a_exact(s)?).abs()))
        .collect::<Result<_>>()?;
    let worst = integral.iter().cloned().fold(0.0, f64::max);
    rep.push(
        Row::new("kernel.integral_oracle", format!("|x|_inf <= {h}"), seed)
            .value("max_abs_error", worst)
            .value("sites", sites.len() as f64)
            .tolerance("<= 1e-9")
            .pass(worst <= 1e-9),
    );

    let octant: Vec<Site> = (0..=h)
        .flat_map(|x1| (0..=x1).map(move |x2| Site::new(x1, x2)))
        .collect();
    let series: Vec<(f64, f64)> = octant
        .par_iter()
        .map(|&s| {
            let v = oracle::a_series(s, p.series_terms)?;
            Ok(((v.partial_sum - table.a_exact(s)?).abs(), v.tail_bound))
        })
        .collect::<Result<_>>()?;
    let ratio = series.iter().map(|(d, t)| d / t.max(f64::MIN_POSITIVE)).fold(0.0, f64::max);
    let tail = series.iter().map(|t| t.1).fold(0.0, f64::max);
    rep.push(
        Row::new("kernel.series_oracle", format!("octant |x|_inf <= {h}"), seed)
            .value("max_error_over_tail_bound", ratio)
            .value("max_tail_bound", tail)
            .value("terms", p.series_terms as f64)
            .tolerance("error <= tail bound")
            .pass(ratio <= 1.0),
    );

    let residual = table.harmonicity_residual();
    let defect = table.origin_defect();
    rep.push(
        Row::new("kernel.harmonicity", format!("window {}", p.window), seed)
            .value("residual", residual)
            .value("origin_defect_minus_one", defect - 1.0)
            .tolerance("residual <= 1e-12, |defect - 1| <= 1e-12")
            .pass(residual <= 1e-12 && (defect - 1.0).abs() <= 1e-12),
    );

    let n = p.window as f64;
    let c_half = table.asymptotic_constant(n / 4.0, n / 2.0);
    let c_full = table.asymptotic_constant(n / 2.0, n);
    rep.push(
        Row::new("kernel.asymptotics", format!("N = {} vs {}", n / 2.0, n), seed)
            .value("constant_half_window", c_half)
            .value("constant_full_window", c_full)
            .value("bound", ASYM_ERROR_COEFF)
            .tolerance(format!("full <= (1 + {}) half, both <= bound", p.drift_tol))
            .pass(c_full <= (1.0 + p.drift_tol) * c_half && c_full.max(c_half) <= ASYM_ERROR_COEFF),
    );
    Ok(rep)
}

// ---------------------------------------------------------------------------
// Green's function

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GreenParams {
    /// Fixed pairs checked before the random ones.
    pub pairs: Vec<(Site, Site)>,
    pub random_pairs: usize,
    pub max_norm: f64,
    pub radius: f64,
    pub replicas: usize,
    pub tol: f64,
}

impl Default for GreenParams {
    fn default() -> Self {
        GreenParams {
            pairs: vec![
                (Site::new(1, 0), Site::new(1, 0)),
                (Site::new(1, 0), Site::new(-1, 0)),
            ],
            random_pairs: 20,
            max_norm: 20.0,
            radius: 512.0,
            replicas: 100_000,
            tol: 1e-3,
        }
    }
}

/// Closed form against the solver bracket, the truncated solve at the Monte
/// Carlo radius, and Monte Carlo.
pub fn run_green_validation(ctx: &HatKernelContext, p: &GreenParams, seed: u64) -> Result<Report> {
    let mut rep = Report::new("green", seed);
    rep.param("params", p);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x67));
    let mut pairs = p.pairs.clone();
    for _ in 0..p.random_pairs {
        pairs.push((random_site(&mut rng, p.max_norm), random_site(&mut rng, p.max_norm)));
    }
    let bcfg = BracketConfig {
        tol: p.tol,
        ..BracketConfig::default()
    };
    let dom = TruncatedDomain::hat(p.radius, vec![])?;
    for (i, &(x, y)) in pairs.iter().enumerate() {
        let cf = ctx.green_hat(x, y)?;
        let bracket = green_bracket(ctx, x, y, &bcfg)?;
        let trunc = green_truncated(Chain::Hat, &dom, x, y, ctx.kernel(), SolverConfig::default())?;
        let tv = trunc.value(x).expect("interior");
        let wseed = derive_seed(seed, 1000 + i as u64);
        let est = estimate_green_hat(ctx, x, y, &WalkConfig::new(Chain::Hat, p.radius, wseed, p.replicas))?;
        let agrees_cf = est.agrees_with(cf, 3.0);
        let agrees_trunc = (est.mean - tv).abs() <= 4.0 * est.stderr + trunc.error_bound;
        rep.push(
            Row::new("green.three_way", format!("x={x} y={y}"), wseed)
                .value("closed_form", cf)
                .value("bracket_lower", bracket.lower)
                .value("bracket_upper", bracket.upper)
                .value("truncated", tv)
                .value("mc_mean", est.mean)
                .value("mc_stderr", est.stderr)
                .value("mc_bias_bound", est.truncation_bias_bound)
                .tolerance("bracket contains closed form; |mc - cf| <= 3se + bias; |mc - truncated| <= 4se")
                .pass(bracket.contains(cf) && agrees_cf && agrees_trunc),
        );
    }
    Ok(rep)
}

// ---------------------------------------------------------------------------
// return and hitting probabilities

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ClosedFormParams {
    pub max_norm: f64,
    pub tol: f64,
    pub max_radius: f64,
}

impl Default for ClosedFormParams {
    fn default() -> Self {
        ClosedFormParams {
            max_norm: 5.0,
            tol: 1e-3,
            max_radius: 1024.0,
        }
    }
}

/// Solver brackets for return and hitting probabilities against the closed
/// forms, for every pair of sites within `max_norm`.
pub fn run_closed_form_brackets(ctx: &HatKernelContext, p: &ClosedFormParams, seed: u64) -> Result<Report> {
    let mut rep = Report::new("closed_forms", seed);
    rep.param("params", p);
    let sites = sites_within(p.max_norm);
    let rows: Vec<Row> = sites
        .par_iter()
        .map(|&y| {
            let set = SiteSet::singleton(y);
            let mut r = 32.0f64.max(4.0 * p.max_norm).max(p.max_norm + 2.0);
            loop {
                let sol = SetSolution::solve(ctx, &set, r, BoundaryModel::Representation, SolverConfig::default(), false)?;
                let esc = sol.escape(y)?;
                let ret = Bracket::new(1.0 - esc.upper, 1.0 - esc.lower, "return probability");
                let mut width = ret.width();
                let mut misses = usize::from(!ret.contains(ctx.return_prob_hat(y)?));
                let mut worst_gap: f64 = 0.0;
                for &x in sites.iter().filter(|&&x| x != y) {
                    let b = sol.hit(x)?;
                    let cf = ctx.hit_prob_hat(x, y)?;
                    width = width.max(b.width());
                    if !b.contains(cf) {
                        misses += 1;
                        worst_gap = worst_gap.max((b.midpoint() - cf).abs());
                    }
                }
                if width <= p.tol || 2.0 * r > p.max_radius {
                    return Ok(Row::new("closed_forms.brackets", format!("y={y}"), seed)
                        .value("radius", r)
                        .value("max_width", width)
                        .value("misses", misses as f64)
                        .value("worst_gap", worst_gap)
                        .value("starts", sites.len() as f64)
                        .tolerance(format!("all contained, width <= {}", p.tol))
                        .pass(misses == 0 && width <= p.tol));
                }
                r *= 2.0;
            }
        })
        .collect::<Result<_>>()?;
    rep.rows = rows;
    Ok(rep)
}

// ---------------------------------------------------------------------------
// capacity

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CapacityParams {
    pub sets: Vec<SiteSet>,
    pub random_sets: usize,
    pub max_size: usize,
    pub max_norm: f64,
    pub tol: f64,
}

impl Default for CapacityParams {
    fn default() -> Self {
        CapacityParams {
            sets: [Site::new(1, 0), Site::new(2, 1), Site::new(0, 5), Site::new(-3, -4)]
                .into_iter()
                .map(SiteSet::singleton)
                .collect(),
            random_sets: 10,
            max_size: 5,
            max_norm: 10.0,
            tol: 1e-3,
        }
    }
}

fn capacity_rows(ctx: &HatKernelContext, set: &SiteSet, x: Site, tol: f64, seed: u64) -> Result<Vec<Row>> {
    let label = set_label(set);
    let cfg = capacity_config(tol);
    let report = capacity_report(ctx, set, &cfg)?;
    let id = verify_capacity_identity(ctx, set, &cfg)?;
    let mut rows = vec![Row::new("capacity.identity", &label, seed)
        .value("cap_hat_lower", id.cap_hat.lower)
        .value("cap_hat_upper", id.cap_hat.upper)
        .value("cap_srw_lower", id.cap_srw.lower)
        .value("cap_srw_upper", id.cap_srw.upper)
        .value("midpoint_gap", id.midpoint_gap)
        .tolerance("brackets overlap")
        .pass(id.overlap)];
    let hm_total = Bracket::sum(report.hm_hat.iter().map(|(_, b)| b), "total");
    rows.push(
        Row::new("capacity.harmonic_measure", &label, seed)
            .value("total_lower", hm_total.lower)
            .value("total_upper", hm_total.upper)
            .value("max_width", report.max_width())
            .tolerance("sum contains 1")
            .pass(hm_total.contains(1.0)),
    );
    if set.len() == 1 {
        let y = set.iter().next().expect("singleton");
        let half = ctx.a(y) / 2.0;
        let es = &report.es_hat[0].1;
        rows.push(
            Row::new("capacity.singleton", &label, seed)
                .value("closed_form", half)
                .value("cap_hat_lower", report.cap_hat.lower)
                .value("cap_hat_upper", report.cap_hat.upper)
                .value("escape_lower", es.lower)
                .value("escape_upper", es.upper)
                .tolerance("cap contains a(y)/2, escape contains 1/(2a(y)), hm = 1")
                .pass(
                    report.cap_hat.contains(half)
                        && es.contains(1.0 / (2.0 * ctx.a(y)))
                        && report.hm_hat[0].1.contains(1.0),
                ),
        );
    }
    let bcfg = BracketConfig {
        tol,
        ..BracketConfig::default()
    };
    let direct = bracket_infinite(ctx, Quantity::Hit, x, set, &bcfg)?;
    let decomposed = hit_prob_via_decomposition(ctx, x, set, &cfg)?;
    rows.push(
        Row::new("capacity.decomposition", format!("x={x} A={label}"), seed)
            .value("direct_lower", direct.lower)
            .value("direct_upper", direct.upper)
            .value("decomposed_lower", decomposed.lower)
            .value("decomposed_upper", decomposed.upper)
            .tolerance("brackets overlap")
            .pass(direct.overlaps(&decomposed)),
    );
    Ok(rows)
}

/// Capacity reports, the capacity identity and the last-exit decomposition
/// for fixed and random sets.
pub fn run_capacity_suite(ctx: &HatKernelContext, p: &CapacityParams, seed: u64) -> Result<Report> {
    let mut rep = Report::new("capacity", seed);
    rep.param("params", p);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x63));
    let mut cases: Vec<SiteSet> = p.sets.clone();
    for i in 0..p.random_sets {
        cases.push(random_set(&mut rng, 1 + i % p.max_size.max(1), p.max_norm));
    }
    let cases: Vec<(SiteSet, Site)> = cases
        .into_iter()
        .map(|set| {
            let x = loop {
                let x = random_site(&mut rng, 1.5 * p.max_norm);
                if !set.contains(x) {
                    break x;
                }
            };
            (set, x)
        })
        .collect();
    let rows: Vec<Vec<Row>> = cases
        .par_iter()
        .map(|(set, x)| capacity_rows(ctx, set, *x, p.tol, seed))
        .collect::<Result<_>>()?;
    rep.rows = rows.into_iter().flatten().collect();
    Ok(rep)
}

// ---------------------------------------------------------------------------
// entrance measure from afar

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EntranceParams {
    pub set: SiteSet,
    pub direction: (f64, f64),
    pub distances: Vec<f64>,
    pub tol: f64,
    pub growth_tol: f64,
}

impl Default for EntranceParams {
    fn default() -> Self {
        EntranceParams {
            set: SiteSet::new([Site::new(3, 0), Site::new(4, 0), Site::new(3, 1)]).expect("nonempty"),
            direction: (1.0, 0.0),
            distances: vec![32.0, 64.0, 128.0, 256.0],
            tol: 1e-5,
            growth_tol: 0.25,
        }
    }
}

/// Worst relative deviation of the conditional entrance law from `x` from
/// the conditioned harmonic measure, as `[lower, upper]` over the brackets.
fn entrance_deviation(cond: &[Bracket], hm: &[Bracket]) -> (f64, f64) {
    let (mut lo, mut hi): (f64, f64) = (0.0, 0.0);
    for (c, h) in cond.iter().zip(hm) {
        let (r_lo, r_hi) = (c.lower / h.upper, c.upper / h.lower);
        let below = if r_lo > 1.0 { r_lo - 1.0 } else if r_hi < 1.0 { 1.0 - r_hi } else { 0.0 };
        lo = lo.max(below);
        hi = hi.max((r_lo - 1.0).abs()).max((r_hi - 1.0).abs());
    }
    (lo, hi)
}

/// Rate at which the entrance law from distance `d` approaches the harmonic
/// measure: rows for `eps(d)` and `eps(d) d / diam`, plus boundedness and
/// halving checks along the ladder.
pub fn run_entrance_rate(ctx: &HatKernelContext, p: &EntranceParams, seed: u64) -> Result<Report> {
    let mut rep = Report::new("entrance_rate", seed);
    rep.param("params", p);
    let diam = p.set.diam();
    if let Some(d) = p.distances.iter().find(|&&d| d < 12.0 * (diam + 1.0)) {
        return Err(precondition(format!("distance {d} below 12 (diam + 1)")));
    }
    let norm = (p.direction.0.powi(2) + p.direction.1.powi(2)).sqrt();
    if !(norm > 0.0) {
        return Err(precondition("direction must be nonzero"));
    }
    let hm = hm_hat(ctx, &p.set, &capacity_config(p.tol))?;
    let mut ladder = Vec::new();
    for &d in &p.distances {
        let x = nearest_site(d * p.direction.0 / norm, d * p.direction.1 / norm);
        let cfg = BracketConfig {
            radius: 8.0,
            max_radius: (4.0 * d).max(1024.0),
            tol: p.tol,
            ..BracketConfig::default()
        };
        let m = entrance_measure(ctx, x, &p.set, &cfg)?;
        let (lo, hi) = entrance_deviation(&m.conditional, &hm);
        if hi > 0.0 && hi - lo > 0.5 * hi {
            return Err(precondition(format!(
                "bracket too wide to resolve the entrance deviation at distance {d}"
            )));
        }
        let normalised = if diam > 0.0 { hi * d / diam } else { 0.0 };
        rep.push(
            Row::new("entrance.rate", format!("d={d} x={x}"), seed)
                .value("distance", d)
                .value("eps_lower", lo)
                .value("eps_upper", hi)
                .value("normalised", normalised)
                .value("radius", m.radius)
                .tolerance("informational"),
        );
        ladder.push((d, lo, hi, normalised));
    }
    if let Some(&(_, _, _, first)) = ladder.first() {
        let worst = ladder.iter().map(|l| l.3).fold(0.0, f64::max);
        rep.push(
            Row::new("entrance.bounded", "ladder", seed)
                .value("first", first)
                .value("max", worst)
                .tolerance(format!("max <= (1 + {}) first", p.growth_tol))
                .pass(worst <= (1.0 + p.growth_tol) * first),
        );
    }
    for &(d, _, hi, _) in &ladder {
        if let Some(&(d4, lo4, _, _)) = ladder.iter().find(|l| l.0 == 4.0 * d) {
            rep.push(
                Row::new("entrance.halving", format!("d={d} vs {d4}"), seed)
                    .value("eps_upper_near", hi)
                    .value("eps_lower_far", lo4)
                    .tolerance("eps(4d) <= eps(d) / 2")
                    .pass(lo4 <= 0.5 * hi),
            );
        }
    }
    Ok(rep)
}

// ---------------------------------------------------------------------------
// lemma-level checks

/// Names accepted by [`run_lemma_checks`].
pub const CHECK_NAMES: [&str; 9] = [
    "srw-exit",
    "ball-escape",
    "abs-continuity",
    "harmonicity",
    "green-envelope",
    "gradient-envelope",
    "annulus",
    "disk-avoidance",
    "no-return",
];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LemmaParams {
    pub which: Vec<String>,
    pub replicas: usize,
    pub accepted: usize,
    pub bootstrap: usize,
    pub envelope_samples: usize,
    pub radii: Vec<i64>,
    pub truncation_factor: f64,
    pub stability_tol: f64,
    pub harmonicity_norm: f64,
}

impl Default for LemmaParams {
    fn default() -> Self {
        LemmaParams {
            which: CHECK_NAMES.iter().map(|s| s.to_string()).collect(),
            replicas: 100_000,
            accepted: 100_000,
            bootstrap: 200,
            envelope_samples: 10_000,
            radii: vec![8, 16, 32],
            truncation_factor: 16.0,
            stability_tol: 0.25,
            harmonicity_norm: 30.0,
        }
    }
}

fn srw_exit_rows(ctx: &HatKernelContext, seed: u64) -> Result<Vec<Row>> {
    let mut rows = Vec::new();
    for r in [64.0, 128.0, 256.0] {
        let dom = TruncatedDomain::new(r, vec![], vec![("origin".into(), SiteSet::singleton(Site::ORIGIN))])?;
        let solver = DomainSolver::new(Chain::Srw, dom, ctx.kernel(), SolverConfig::default())?;
        let sol = solver.solve(|_, k| (k == SiteKind::Exit) as u8 as f64, None)?;
        let half = (r / 2.0) as i64;
        for x in [Site::new(1, 0), Site::new(1, 1), Site::new(3, 2), Site::new(half, 0)] {
            let lead = ctx.srw_exit_before_origin(x, Site::ORIGIN, r)?;
            let v = sol.value(x).expect("interior");
            let err = (v - lead.value).abs();
            rows.push(
                Row::new("srw-exit.leading_order", format!("x={x} r={r}"), seed)
                    .value("solver", v)
                    .value("leading", lead.value)
                    .value("error", err)
                    .value("error_scale", lead.error_scale)
                    .tolerance("error <= scale + solver bound")
                    .pass(err <= lead.error_scale + sol.error_bound),
            );
        }
    }
    Ok(rows)
}

/// Escape probability from `B(r)` through the potential-kernel
/// representation of its inner boundary.
fn ball_escape_exact(ctx: &HatKernelContext, x: Site, r: f64) -> Result<f64> {
    let disk = enumerate_ball(&Ball::centered(r)?, DEFAULT_SITE_BUDGET)?;
    let rim = boundary(&disk);
    let k = ctx.kernel();
    let rep = SrwHarmonic::new(k, &rim)?;
    let hit: f64 = rim
        .iter()
        .zip(rep.hitting(k, x))
        .map(|(w, (h, _))| h * ctx.a(w))
        .sum();
    Ok(1.0 - hit / ctx.a(x))
}

fn ball_escape_rows(ctx: &HatKernelContext, seed: u64) -> Result<Vec<Row>> {
    let radii = [16.0, 32.0, 64.0, 128.0];
    let errs: Vec<(f64, f64, f64, f64)> = radii
        .par_iter()
        .map(|&r| {
            let x = Site::new(2 * r as i64, 0);
            let exact = ball_escape_exact(ctx, x, r)?;
            let lead = ctx.escape_ball_leading(x, r)?;
            Ok((exact, lead.value, (exact - lead.value).abs(), lead.error_scale))
        })
        .collect::<Result<_>>()?;
    let mut rows: Vec<Row> = radii
        .iter()
        .zip(&errs)
        .map(|(r, e)| {
            Row::new("ball-escape.leading_order", format!("x=({},0) r={r}", 2 * *r as i64), seed)
                .value("exact", e.0)
                .value("leading", e.1)
                .value("error", e.2)
                .value("error_scale", e.3)
                .tolerance("error <= scale")
                .pass(e.2 <= e.3)
        })
        .collect();
    let ratio = errs[3].2 / errs[2].2;
    rows.push(
        Row::new("ball-escape.rate", "r=128 vs r=64", seed)
            .value("ratio", ratio)
            .tolerance("<= 0.6")
            .pass(ratio <= 0.6),
    );
    Ok(rows)
}

fn abs_continuity_rows(ctx: &HatKernelContext, p: &LemmaParams, seed: u64) -> Result<Vec<Row>> {
    let x = Site::new(5, 5);
    let mut rows = Vec::new();
    let mut gaps = Vec::new();
    for r in [50.0, 100.0] {
        let s = derive_seed(seed, r as u64);
        let rep = abs_continuity_check(ctx, x, r, PathFunctional::ExitOctant, p.accepted, s, p.bootstrap)?;
        gaps.push((rep.detected_gap, rep.null_sd));
        rows.push(
            Row::new("abs-continuity.exit_octant", format!("x={x} R={r}"), s)
                .value("tv", rep.tv)
                .value("null_mean", rep.null_mean)
                .value("null_sd", rep.null_sd)
                .value("ci_low", rep.ci_low)
                .value("ci_high", rep.ci_high)
                .value("excess", rep.excess)
                .value("detected_gap", rep.detected_gap)
                .value("acceptance", rep.acceptance)
                .tolerance("tv - null mean <= 3 null sd")
                .pass(rep.pass),
        );
    }
    rows.push(
        Row::new("abs-continuity.gap_shrinks", "R=100 vs R=50", seed)
            .value("gap_50", gaps[0].0)
            .value("gap_100", gaps[1].0)
            .tolerance("gap(100) <= gap(50)")
            .pass(gaps[1].0 <= gaps[0].0),
    );
    Ok(rows)
}

fn harmonicity_rows(ctx: &HatKernelContext, max_norm: f64, seed: u64) -> Result<Vec<Row>> {
    let sites = sites_within(max_norm);
    type F = fn(&HatKernelContext, Site, Site) -> Result<f64>;
    let fns: [(&str, F); 3] = [
        ("green_hat", HatKernelContext::green_hat),
        ("g_hat", HatKernelContext::g_hat),
        ("ell_hat", HatKernelContext::ell_hat),
    ];
    let mut rows = Vec::new();
    for (name, f) in fns {
        let worst = sites
            .par_iter()
            .map(|&y| {
                let mut w: f64 = 0.0;
                for &x in &sites {
                    if x == y {
                        continue;
                    }
                    let mut mean = 0.0;
                    for z in x.neighbors() {
                        if !z.is_origin() {
                            mean += ctx.p_hat(x, z)? * f(ctx, z, y)?;
                        }
                    }
                    w = w.max((mean - f(ctx, x, y)?).abs());
                }
                Ok(w)
            })
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        rows.push(
            Row::new("harmonicity.one_step", format!("{name}, |x|,|y| <= {max_norm}"), seed)
                .value("max_residual", worst)
                .tolerance("<= 1e-10")
                .pass(worst <= 1e-10),
        );
    }
    Ok(rows)
}

fn envelope_rows(
    ctx: &HatKernelContext,
    name: &str,
    samples: usize,
    fixtures: &Fixtures,
    seed: u64,
) -> Vec<Row> {
    let fit = |n: usize| {
        if name == "green-envelope" {
            ctx.green_envelope(n, 1e3, seed)
        } else {
            ctx.gradient_envelope(n, 1e3, seed)
        }
    };
    let (small, large) = rayon::join(|| fit(samples), || fit(4 * samples));
    let two_sided = name == "green-envelope";
    let mut rows = Vec::new();
    for (label, f) in [("n", small), ("4n", large)] {
        rows.push(
            Row::new(&format!("{name}.fit"), format!("samples {label} = {}", f.samples), seed)
                .value("c_lower", f.c_lower)
                .value("c_upper", f.c_upper)
                .tolerance(if two_sided { "c_lower > 0, c_upper finite" } else { "0 < c_upper finite" })
                .pass(f.c_upper.is_finite() && if two_sided { f.c_lower > 0.0 } else { f.c_upper > 0.0 }),
        );
    }
    let keys: &[(&str, f64, f64)] = if two_sided {
        &[("c_lower", small.c_lower, large.c_lower), ("c_upper", small.c_upper, large.c_upper)]
    } else {
        &[("c_upper", small.c_upper, large.c_upper)]
    };
    for &(key, a, b) in keys {
        let drift = relative_drift(a, b);
        let check = fixtures.observe(&format!("{name}.{key}"), b, FixtureKind::Regression, 0.02);
        let mut row = Row::new(&format!("{name}.stability"), key, seed)
            .value("small_sample", a)
            .value("large_sample", b)
            .value("drift", drift);
        if let Some(r) = check.reference {
            row = row.value("recorded", r);
        }
        rows.push(
            row.tolerance("drift < 0.2; within 2% of the recorded value")
                .pass(drift < 0.2 && check.pass),
        );
    }
    rows
}

fn annulus_rows(ctx: &HatKernelContext, p: &LemmaParams, fixtures: &Fixtures, seed: u64) -> Result<Vec<Row>> {
    let mut rows = Vec::new();
    let mut floor_obs = f64::INFINITY;
    let mut per_r = Vec::new();
    for &r in &p.radii {
        let y0 = Site::new(12 * r, 0);
        let configs = [
            ("above", y0 + Site::new(0, 2 * r + 1)),
            ("towards origin", y0 - Site::new(2 * r + 1, 0)),
            ("adjacent", y0 + Site::new(r + 1, 0)),
        ];
        let mut lowest = f64::INFINITY;
        for (i, (label, x0)) in configs.iter().enumerate() {
            let s = derive_seed(seed, (r as u64) << 4 | i as u64);
            let cfg = WalkConfig::new(Chain::Hat, 1.0, s, p.replicas);
            let e = annulus_exit_estimate(ctx, *x0, y0, r as f64, 4.0, &cfg)?;
            let lower = e.mean - 1.645 * e.stderr;
            let adjacent = *label == "adjacent";
            if !adjacent {
                lowest = lowest.min(lower);
            }
            rows.push(
                Row::new("annulus.estimate", format!("r={r} y0={y0} x0={x0} ({label})"), s)
                    .value("mean", e.mean)
                    .value("stderr", e.stderr)
                    .value("lower95", lower)
                    .tolerance(if adjacent { "> 0" } else { "lower95 > 0.05" })
                    .pass(if adjacent { e.mean > 0.0 } else { lower > 0.05 }),
            );
        }
        if floor_obs.is_infinite() {
            floor_obs = lowest;
        }
        per_r.push((r, lowest));
    }
    let check = fixtures.observe("annulus.floor", floor_obs, FixtureKind::Floor, 0.1);
    let floor = check.reference.unwrap_or(floor_obs);
    for (r, lowest) in per_r {
        rows.push(
            Row::new("annulus.floor", format!("r={r}"), seed)
                .value("lowest_lower95", lowest)
                .value("floor", floor)
                .tolerance("lowest >= 0.9 floor")
                .pass(lowest >= 0.9 * floor),
        );
    }
    Ok(rows)
}

fn disk_rows(ctx: &HatKernelContext, p: &LemmaParams, fixtures: &Fixtures, seed: u64) -> Result<Vec<Row>> {
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    for &r in &p.radii {
        let y0 = Site::new(12 * r, 0);
        let log = (y0.norm() + r as f64).ln();
        let configs = [
            ("beside", y0 + Site::new(0, 2 * r + 1)),
            ("beyond", y0 + Site::new(4 * r, 0)),
            ("rotated", Site::new(0, 12 * r)),
        ];
        let trunc = p.truncation_factor * (y0.norm() + r as f64);
        let (mut c, mut c_rig) = (f64::INFINITY, f64::INFINITY);
        for (i, (label, x0)) in configs.iter().enumerate() {
            let s = derive_seed(seed, 0x100 | (r as u64) << 4 | i as u64);
            let cfg = WalkConfig::new(Chain::Hat, trunc, s, p.replicas);
            let e = disk_avoidance_estimate(ctx, *x0, y0, r as f64, &cfg)?;
            let rig = e.mean - e.truncation_bias_bound - 2.0 * e.stderr;
            c = c.min(e.mean * log);
            c_rig = c_rig.min(rig * log);
            rows.push(
                Row::new("disk-avoidance.estimate", format!("r={r} y0={y0} x0={x0} ({label})"), s)
                    .value("mean", e.mean)
                    .value("stderr", e.stderr)
                    .value("bias_bound", e.truncation_bias_bound)
                    .value("scaled", e.mean * log)
                    .value("scaled_rigorous_lower", rig * log)
                    .tolerance("rigorous lower bound > 0")
                    .pass(rig > 0.0),
            );
        }
        fits.push((r, c, c_rig));
    }
    let check_c = fixtures.observe("disk-avoidance.c", fits[0].1, FixtureKind::Regression, 0.02);
    let check_floor = fixtures.observe("disk-avoidance.floor", fits[0].2, FixtureKind::Floor, 0.1);
    let floor = check_floor.reference.unwrap_or(fits[0].2);
    for (i, &(r, c, c_rig)) in fits.iter().enumerate() {
        let mut row = Row::new("disk-avoidance.fit", format!("r={r}"), seed)
            .value("c", c)
            .value("c_rigorous", c_rig)
            .value("floor", floor);
        let mut ok = c > 0.0 && c_rig >= 0.9 * floor;
        if i == 0 {
            ok &= check_c.pass;
            if let Some(v) = check_c.reference {
                row = row.value("recorded_c", v);
            }
        }
        if i > 0 {
            let drift = relative_drift(fits[i - 1].1, c);
            row = row.value("drift", drift);
            ok &= drift <= p.stability_tol;
        }
        rows.push(
            row.tolerance(format!(
                "c > 0, rigorous c >= 0.9 floor, drift per doubling <= {}",
                p.stability_tol
            ))
            .pass(ok),
        );
    }
    Ok(rows)
}

fn no_return_rows(seed: u64) -> Result<Vec<Row>> {
    let mut cases = vec![
        ("ring(5)".to_string(), FiniteChain::ring(5), 1, vec![0], vec![3]),
        ("birth_death(5)".to_string(), FiniteChain::birth_death(5), 2, vec![0], vec![4]),
    ];
    for k in 0..20 {
        let s = derive_seed(seed, 0x300 + k);
        cases.push((format!("random(6, {s})"), FiniteChain::random(6, s), 0, vec![2], vec![4, 5]));
    }
    cases
        .into_iter()
        .map(|(label, chain, x, a, b)| {
            let r = no_return_check(&chain, x, &a, &b)?;
            Ok(Row::new("no-return.equality", label, seed)
                .value("unconditional", r.unconditional)
                .value("conditional", r.conditional)
                .value("gap", r.gap())
                .tolerance("<= 1e-10")
                .pass(r.gap() <= 1e-10))
        })
        .collect()
}

/// Named structural checks; an unknown name yields a failing row.
pub fn run_lemma_checks(
    ctx: &HatKernelContext,
    p: &LemmaParams,
    fixtures: &Fixtures,
    seed: u64,
) -> Result<Report> {
    let mut rep = Report::new("lemma_checks", seed);
    rep.param("params", p);
    for name in &p.which {
        let s = derive_seed(seed, CHECK_NAMES.iter().position(|n| n == name).unwrap_or(99) as u64);
        let rows = match name.as_str() {
            "srw-exit" => srw_exit_rows(ctx, s)?,
            "ball-escape" => ball_escape_rows(ctx, s)?,
            "abs-continuity" => abs_continuity_rows(ctx, p, s)?,
            "harmonicity" => harmonicity_rows(ctx, p.harmonicity_norm, s)?,
            "green-envelope" | "gradient-envelope" => envelope_rows(ctx, name, p.envelope_samples, fixtures, s),
            "annulus" => annulus_rows(ctx, p, fixtures, s)?,
            "disk-avoidance" => disk_rows(ctx, p, fixtures, s)?,
            "no-return" => no_return_rows(s)?,
            other => vec![Row::new("unknown", other, seed)
                .tolerance(format!("one of {}", CHECK_NAMES.join(", ")))
                .pass(false)],
        };
        rep.rows.extend(rows);
    }
    Ok(rep)
}

// ---------------------------------------------------------------------------
// Monte Carlo regression battery

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BatteryParams {
    pub targets: usize,
    pub max_norm: i64,
    pub replicas: usize,
    pub min_pass_fraction: f64,
}

impl Default for BatteryParams {
    fn default() -> Self {
        BatteryParams {
            targets: 100,
            max_norm: 10,
            replicas: 10_000,
            min_pass_fraction: 0.99,
        }
    }
}

pub fn run_mc_battery(ctx: &HatKernelContext, p: &BatteryParams, seed: u64) -> Result<Report> {
    let mut rep = Report::new("mc_battery", seed);
    rep.param("params", p);
    let rows = closed_form_battery(ctx, p.targets, p.max_norm, p.replicas, seed)?;
    let mut agree = 0usize;
    for (i, b) in rows.iter().enumerate() {
        agree += b.pass as usize;
        rep.push(
            Row::new("battery.target", format!("{:?} x={} y={}", b.kind, b.x, b.y), derive_seed(seed, 100 + i as u64))
                .value("closed_form", b.closed_form)
                .value("mean", b.estimate.mean)
                .value("stderr", b.estimate.stderr)
                .value("bias_bound", b.estimate.truncation_bias_bound)
                .value("within", b.pass as u8 as f64)
                .tolerance("informational; counted below"),
        );
    }
    let frac = agree as f64 / rows.len().max(1) as f64;
    rep.push(
        Row::new("battery.summary", format!("{} targets", rows.len()), seed)
            .value("agree", agree as f64)
            .value("fraction", frac)
            .tolerance(format!("fraction >= {}", p.min_pass_fraction))
            .pass(frac >= p.min_pass_fraction),
    );
    Ok(rep)
}
