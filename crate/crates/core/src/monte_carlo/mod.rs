//! Reproducible trajectory sampling for the simple random walk and the
//! conditioned walk.
//!
//! Replica `k` of a run with seed `s` draws from ChaCha8 seeded with `s` on
//! stream `k`, so results do not depend on thread count or scheduling; means
//! are merged by pairwise summation in replica order.

mod walker;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closed_forms::HatKernelContext;
use crate::error::{precondition, Error, Result};
use crate::exact_solver::Chain;
use crate::lattice::{Site, SiteSet};

pub use walker::{BoxTables, Geometry, Stop, Walker, DEFAULT_MAX_BOX};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkConfig {
    pub chain: Chain,
    /// Leaving `B(0, truncation_radius)` counts as escaping forever.
    pub truncation_radius: f64,
    pub max_steps: u64,
    pub seed: u64,
    pub replicas: usize,
    /// Largest box half-width for jumps; 0 walks every step.
    pub max_box: i64,
}

impl WalkConfig {
    pub fn new(chain: Chain, truncation_radius: f64, seed: u64, replicas: usize) -> Self {
        WalkConfig {
            chain,
            truncation_radius,
            max_steps: (16.0 * truncation_radius * truncation_radius).ceil() as u64,
            seed,
            replicas,
            max_box: DEFAULT_MAX_BOX,
        }
    }

    pub fn with_replicas(mut self, replicas: usize) -> Self {
        self.replicas = replicas;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self, interest: &[Site]) -> Result<()> {
        let far = interest.iter().map(|s| s.norm()).fold(0.0, f64::max);
        if self.truncation_radius < 8.0 * far {
            return Err(precondition(format!(
                "truncation radius {} below 8 x {far}",
                self.truncation_radius
            )));
        }
        if (self.max_steps as f64) < 16.0 * self.truncation_radius.powi(2) {
            return Err(precondition("max_steps below 16 R^2"));
        }
        if self.replicas == 0 {
            return Err(precondition("need at least one replica"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
    pub truncation_bias_bound: f64,
}

impl Estimate {
    pub fn from_values(values: &[f64], truncation_bias_bound: f64) -> Estimate {
        let n = values.len();
        let mean = pairwise_sum(values) / n as f64;
        let dev: Vec<f64> = values.iter().map(|v| (v - mean).powi(2)).collect();
        let var = if n > 1 { pairwise_sum(&dev) / (n - 1) as f64 } else { 0.0 };
        Estimate {
            mean,
            stderr: (var / n as f64).sqrt(),
            n,
            truncation_bias_bound,
        }
    }

    /// `|mean - target| <= k stderr + bias bound`
    pub fn agrees_with(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.stderr + self.truncation_bias_bound
    }

    pub fn lower_confidence(&self, z: f64) -> f64 {
        self.mean - z * self.stderr - self.truncation_bias_bound
    }
}

pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 16 {
        v.iter().sum()
    } else {
        let (a, b) = v.split_at(v.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

/// Independent seed for a named sub-experiment (splitmix64 finaliser).
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn replica_rng(seed: u64, k: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    rng
}

fn run_replicas<T: Send>(seed: u64, range: std::ops::Range<u64>, f: impl Fn(&mut ChaCha8Rng) -> T + Sync) -> Vec<T> {
    range
        .into_par_iter()
        .map(|k| f(&mut replica_rng(seed, k)))
        .collect()
}

fn tables(cfg: &WalkConfig) -> Result<Option<std::sync::Arc<BoxTables>>> {
    if cfg.max_box >= 2 {
        Ok(Some(BoxTables::shared(cfg.max_box)?))
    } else {
        Ok(None)
    }
}

/// One transition sampled exactly from the chain's kernel.
pub fn step(ctx: &HatKernelContext, chain: Chain, x: Site, rng: &mut ChaCha8Rng) -> Result<Site> {
    if chain == Chain::Hat && x.is_origin() {
        return Err(Error::OriginNotState);
    }
    let w = Walker {
        chain,
        kernel: ctx.kernel(),
        tables: None,
        max_steps: 1,
    };
    Ok(w.step(x, rng))
}

fn check_step_cap(failed: usize, replicas: usize) -> Result<()> {
    if failed * 1000 > replicas {
        Err(Error::StepCap { failed, replicas })
    } else {
        Ok(())
    }
}

/// Mean number of visits to `y` (time zero included) before leaving the
/// truncation ball. The bias bound covers visits after leaving:
/// from `z`, `G^(z, y) <= 2 a(y)^2 / a(z)`.
pub fn estimate_green_hat(ctx: &HatKernelContext, x: Site, y: Site, cfg: &WalkConfig) -> Result<Estimate> {
    if x.is_origin() || y.is_origin() {
        return Err(Error::OriginNotState);
    }
    cfg.validate(&[x, y])?;
    let t = tables(cfg)?;
    let walker = Walker {
        chain: Chain::Hat,
        kernel: ctx.kernel(),
        tables: t.as_deref(),
        max_steps: cfg.max_steps,
    };
    let geom = Geometry {
        outer: Some((Site::ORIGIN, cfg.truncation_radius)),
        disks: vec![],
        watched: vec![y],
    };
    let ay = ctx.a(y);
    let out = run_replicas(cfg.seed, 0..cfg.replicas as u64, |rng| {
        let mut visits = (x == y) as u64;
        let stop = walker.run(x, &geom, rng, |s| visits += (s == y) as u64);
        let (end, failed) = match stop {
            Stop::Exit(z) => (z, false),
            Stop::StepCap(z) => (z, true),
            Stop::Disk(..) => unreachable!("no disks"),
        };
        (visits as f64, 2.0 * ay * ay / ctx.a(end), failed)
    });
    check_step_cap(out.iter().filter(|o| o.2).count(), cfg.replicas)?;
    let values: Vec<f64> = out.iter().map(|o| o.0).collect();
    let bias: Vec<f64> = out.iter().map(|o| o.1).collect();
    Ok(Estimate::from_values(&values, pairwise_sum(&bias) / cfg.replicas as f64))
}

fn hit_set_runs(
    ctx: &HatKernelContext,
    x: Site,
    set: &SiteSet,
    cfg: &WalkConfig,
) -> Result<Vec<(Option<usize>, f64, bool)>> {
    set.require_no_origin()?;
    let mut interest: Vec<Site> = set.iter().collect();
    interest.push(x);
    cfg.validate(&interest)?;
    let t = tables(cfg)?;
    let walker = Walker {
        chain: Chain::Hat,
        kernel: ctx.kernel(),
        tables: t.as_deref(),
        max_steps: cfg.max_steps,
    };
    let geom = Geometry {
        outer: Some((Site::ORIGIN, cfg.truncation_radius)),
        disks: set.iter().map(|s| (s, 0.0)).collect(),
        watched: vec![],
    };
    let a_max = set.iter().map(|s| ctx.a(s)).fold(0.0, f64::max);
    let out = run_replicas(cfg.seed, 0..cfg.replicas as u64, |rng| match walker.run(x, &geom, rng, |_| {}) {
        Stop::Disk(i, _) => (Some(i), 0.0, false),
        Stop::Exit(z) => (None, (a_max / ctx.a(z)).min(1.0), false),
        Stop::StepCap(z) => (None, (a_max / ctx.a(z)).min(1.0), true),
    });
    check_step_cap(out.iter().filter(|o| o.2).count(), cfg.replicas)?;
    Ok(out)
}

/// Probability of hitting `set` before leaving the truncation ball; the
/// bias bound covers hits after leaving, `P^_z[hit A] <= max_A a / a(z)`.
pub fn estimate_hit_prob(ctx: &HatKernelContext, x: Site, set: &SiteSet, cfg: &WalkConfig) -> Result<Estimate> {
    if set.contains(x) {
        return Err(Error::UseReturnProb);
    }
    let out = hit_set_runs(ctx, x, set, cfg)?;
    let values: Vec<f64> = out.iter().map(|o| o.0.is_some() as u8 as f64).collect();
    let bias: Vec<f64> = out.iter().map(|o| o.1).collect();
    Ok(Estimate::from_values(&values, pairwise_sum(&bias) / cfg.replicas as f64))
}

/// Probability of returning to `x`, by unrolling the first step.
pub fn estimate_return_prob(ctx: &HatKernelContext, x: Site, cfg: &WalkConfig) -> Result<Estimate> {
    if x.is_origin() {
        return Err(Error::OriginNotState);
    }
    cfg.validate(&[x])?;
    let t = tables(cfg)?;
    let walker = Walker {
        chain: Chain::Hat,
        kernel: ctx.kernel(),
        tables: t.as_deref(),
        max_steps: cfg.max_steps,
    };
    let geom = Geometry {
        outer: Some((Site::ORIGIN, cfg.truncation_radius)),
        disks: vec![(x, 0.0)],
        watched: vec![],
    };
    let ax = ctx.a(x);
    let out = run_replicas(cfg.seed, 0..cfg.replicas as u64, |rng| {
        let first = walker.step(x, rng);
        match walker.run(first, &geom, rng, |_| {}) {
            Stop::Disk(..) => (1.0, 0.0, false),
            Stop::Exit(z) => (0.0, (ax / ctx.a(z)).min(1.0), false),
            Stop::StepCap(z) => (0.0, (ax / ctx.a(z)).min(1.0), true),
        }
    });
    check_step_cap(out.iter().filter(|o| o.2).count(), cfg.replicas)?;
    let values: Vec<f64> = out.iter().map(|o| o.0).collect();
    let bias: Vec<f64> = out.iter().map(|o| o.1).collect();
    Ok(Estimate::from_values(&values, pairwise_sum(&bias) / cfg.replicas as f64))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntranceEstimate {
    pub hits: usize,
    pub replicas: usize,
    pub per_site: Vec<(Site, Estimate)>,
}

/// Empirical entrance law conditioned on hitting `set` before leaving the
/// truncation ball. The bias bound is the chance of a later first hit,
/// relative to the observed hit frequency.
pub fn estimate_entrance(ctx: &HatKernelContext, x: Site, set: &SiteSet, cfg: &WalkConfig) -> Result<EntranceEstimate> {
    if set.contains(x) {
        return Err(precondition("start must lie outside the target set"));
    }
    let out = hit_set_runs(ctx, x, set, cfg)?;
    let hits = out.iter().filter(|o| o.0.is_some()).count();
    if hits < 100 {
        return Err(Error::InsufficientEvents { hits, needed: 100 });
    }
    let bias: Vec<f64> = out.iter().map(|o| o.1).collect();
    let late = pairwise_sum(&bias) / cfg.replicas as f64;
    let p_hit = hits as f64 / cfg.replicas as f64;
    let per_site = set
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let values: Vec<f64> = out
                .iter()
                .filter(|o| o.0.is_some())
                .map(|o| (o.0 == Some(i)) as u8 as f64)
                .collect();
            (s, Estimate::from_values(&values, (late / p_hit).min(1.0)))
        })
        .collect();
    Ok(EntranceEstimate {
        hits,
        replicas: cfg.replicas,
        per_site,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathFunctional {
    ExitOctant,
    ReturnsToStart,
    MaxNorm,
    Constant,
}

impl std::str::FromStr for PathFunctional {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exit_octant" | "octant" => Ok(PathFunctional::ExitOctant),
            "returns" | "returns_to_start" => Ok(PathFunctional::ReturnsToStart),
            "max_norm" => Ok(PathFunctional::MaxNorm),
            "constant" => Ok(PathFunctional::Constant),
            _ => Err(precondition(format!("unknown functional {s:?}"))),
        }
    }
}

const MAX_RETURN_CATEGORY: usize = 30;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AbsContReport {
    pub x: Site,
    pub radius: f64,
    pub functional: PathFunctional,
    pub accepted: usize,
    pub acceptance: f64,
    pub srw_distribution: Vec<f64>,
    pub hat_distribution: Vec<f64>,
    pub tv: f64,
    /// Mean and standard deviation of the distance under the pooled null.
    pub null_mean: f64,
    pub null_sd: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub excess: f64,
    pub detected_gap: f64,
    pub pass: bool,
}

fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

fn multinomial(rng: &mut ChaCha8Rng, n: u64, p: &[f64]) -> Vec<f64> {
    let mut left = n;
    let mut mass = 1.0;
    let mut out = vec![0.0; p.len()];
    for (i, &pi) in p.iter().enumerate() {
        if left == 0 || mass <= 0.0 {
            break;
        }
        let q = (pi / mass).clamp(0.0, 1.0);
        let k = if i + 1 == p.len() { left } else { Binomial::new(left, q).expect("valid").sample(rng) };
        out[i] = k as f64 / n as f64;
        left -= k;
        mass -= pi;
    }
    out
}

/// Compares the simple random walk conditioned (by rejection) to reach
/// distance `radius` before the origin with the conditioned walk stopped at
/// the same radius, through the law of a path functional.
pub fn abs_continuity_check(
    ctx: &HatKernelContext,
    x: Site,
    radius: f64,
    functional: PathFunctional,
    accepted: usize,
    seed: u64,
    bootstrap: usize,
) -> Result<AbsContReport> {
    if x.is_origin() || x.norm() >= radius {
        return Err(precondition("x must lie in B(0, R) minus the origin"));
    }
    let max_box = if functional == PathFunctional::MaxNorm { 0 } else { DEFAULT_MAX_BOX };
    let t = if max_box >= 2 { Some(BoxTables::shared(max_box)?) } else { None };
    let max_steps = (16.0 * radius * radius).ceil() as u64 * 16;
    let geom = Geometry {
        outer: Some((Site::ORIGIN, radius)),
        disks: vec![(Site::ORIGIN, 0.0)],
        watched: vec![x],
    };
    let categories = match functional {
        PathFunctional::ExitOctant => 8,
        PathFunctional::ReturnsToStart => MAX_RETURN_CATEGORY + 1,
        PathFunctional::MaxNorm => radius.floor() as usize + 2,
        PathFunctional::Constant => 1,
    };
    let sample = |chain: Chain, rng: &mut ChaCha8Rng| -> Option<Option<usize>> {
        let walker = Walker {
            chain,
            kernel: ctx.kernel(),
            tables: t.as_deref(),
            max_steps,
        };
        let mut returns = 0usize;
        let mut max_norm = x.norm();
        let stop = walker.run(x, &geom, rng, |s| {
            returns += (s == x) as usize;
            max_norm = max_norm.max(s.norm());
        });
        match stop {
            Stop::Disk(..) => Some(None),
            Stop::StepCap(_) => None,
            Stop::Exit(z) => Some(Some(match functional {
                PathFunctional::ExitOctant => z.angular_octant(),
                PathFunctional::ReturnsToStart => returns.min(MAX_RETURN_CATEGORY),
                PathFunctional::MaxNorm => (max_norm.floor() as usize).min(categories - 1),
                PathFunctional::Constant => 0,
            })),
        }
    };

    let hat_seed = derive_seed(seed, 1);
    let srw_seed = derive_seed(seed, 2);
    let hat: Vec<Option<Option<usize>>> =
        run_replicas(hat_seed, 0..accepted as u64, |rng| sample(Chain::Hat, rng));
    let hat_failed = hat.iter().filter(|o| o.is_none()).count();
    check_step_cap(hat_failed, accepted)?;
    let mut hat_counts = vec![0.0; categories];
    for c in hat.iter().flatten().flatten() {
        hat_counts[*c] += 1.0;
    }

    let mut srw_counts = vec![0.0; categories];
    let (mut got, mut attempts, mut failed) = (0usize, 0u64, 0usize);
    let batch = (accepted as u64).max(1024);
    while got < accepted {
        let res = run_replicas(srw_seed, attempts..attempts + batch, |rng| sample(Chain::Srw, rng));
        for r in res {
            attempts += 1;
            match r {
                None => failed += 1,
                Some(None) => {}
                Some(Some(c)) => {
                    srw_counts[c] += 1.0;
                    got += 1;
                    if got == accepted {
                        break;
                    }
                }
            }
        }
        if (got as f64) < 1e-3 * attempts as f64 {
            return Err(Error::LowAcceptance(got as f64 / attempts as f64));
        }
    }
    check_step_cap(failed, attempts as usize)?;

    let n_hat: f64 = hat_counts.iter().sum();
    let p: Vec<f64> = srw_counts.iter().map(|c| c / got as f64).collect();
    let q: Vec<f64> = hat_counts.iter().map(|c| c / n_hat).collect();
    let tv = total_variation(&p, &q);

    let pooled: Vec<f64> = srw_counts
        .iter()
        .zip(&hat_counts)
        .map(|(a, b)| (a + b) / (got as f64 + n_hat))
        .collect();
    let boot_seed = derive_seed(seed, 3);
    let null: Vec<f64> = run_replicas(boot_seed, 0..bootstrap as u64, |rng| {
        let a = multinomial(rng, got as u64, &pooled);
        let b = multinomial(rng, n_hat as u64, &pooled);
        total_variation(&a, &b)
    });
    let own: Vec<f64> = run_replicas(boot_seed, bootstrap as u64..2 * bootstrap as u64, |rng| {
        let a = multinomial(rng, got as u64, &p);
        let b = multinomial(rng, n_hat as u64, &q);
        total_variation(&a, &b)
    });
    let null_est = Estimate::from_values(&null, 0.0);
    let null_sd = null_est.stderr * (bootstrap as f64).sqrt();
    let mut sorted = own.clone();
    sorted.sort_by(f64::total_cmp);
    let pick = |f: f64| sorted[((f * (sorted.len() - 1) as f64).round() as usize).min(sorted.len() - 1)];
    let excess = tv - null_est.mean;
    Ok(AbsContReport {
        x,
        radius,
        functional,
        accepted: got,
        acceptance: got as f64 / attempts as f64,
        srw_distribution: p,
        hat_distribution: q,
        tv,
        null_mean: null_est.mean,
        null_sd,
        ci_low: pick(0.025),
        ci_high: pick(0.975),
        excess,
        detected_gap: (excess - 3.0 * null_sd).max(0.0),
        pass: excess <= 3.0 * null_sd,
    })
}

/// `P^_{x0}[leave B(y0, c r) before entering B(y0, r)]`; no truncation.
pub fn annulus_exit_estimate(
    ctx: &HatKernelContext,
    x0: Site,
    y0: Site,
    r: f64,
    c: f64,
    cfg: &WalkConfig,
) -> Result<Estimate> {
    if !(r > 0.0 && c > 1.0) {
        return Err(precondition("annulus needs r > 0 and C > 1"));
    }
    if x0.is_origin() {
        return Err(Error::OriginNotState);
    }
    if x0.dist(y0) <= r {
        return Err(precondition("x0 lies in the inner disk"));
    }
    let t = tables(cfg)?;
    let walker = Walker {
        chain: Chain::Hat,
        kernel: ctx.kernel(),
        tables: t.as_deref(),
        max_steps: cfg.max_steps.max((16.0 * (c * r).powi(2)) as u64),
    };
    let geom = Geometry {
        outer: Some((y0, c * r)),
        disks: vec![(y0, r)],
        watched: vec![],
    };
    let out = run_replicas(cfg.seed, 0..cfg.replicas as u64, |rng| match walker.run(x0, &geom, rng, |_| {}) {
        Stop::Exit(_) => (1.0, false),
        Stop::Disk(..) => (0.0, false),
        Stop::StepCap(_) => (0.0, true),
    });
    check_step_cap(out.iter().filter(|o| o.1).count(), cfg.replicas)?;
    let values: Vec<f64> = out.iter().map(|o| o.0).collect();
    Ok(Estimate::from_values(&values, 0.0))
}

/// `P^_{x0}[never enter B(y0, r)]`. Paths leaving the truncation ball at `z`
/// are credited with the midpoint of the bracket for `1 - P^_z[enter]`
/// obtained from the supermartingale `1 / a`, and the bias bound is the
/// average half-width of those brackets.
pub fn disk_avoidance_estimate(
    ctx: &HatKernelContext,
    x0: Site,
    y0: Site,
    r: f64,
    cfg: &WalkConfig,
) -> Result<Estimate> {
    if x0.is_origin() {
        return Err(Error::OriginNotState);
    }
    if x0.dist(y0) <= r {
        return Ok(Estimate {
            mean: 0.0,
            stderr: 0.0,
            n: cfg.replicas,
            truncation_bias_bound: 0.0,
        });
    }
    let reach = y0.norm() + r;
    if cfg.truncation_radius < 2.0 * reach.max(x0.norm()) {
        return Err(precondition("truncation radius must exceed twice the disk reach"));
    }
    let k = ctx.kernel();
    let t = tables(cfg)?;
    let walker = Walker {
        chain: Chain::Hat,
        kernel: k,
        tables: t.as_deref(),
        max_steps: cfg.max_steps,
    };
    let geom = Geometry {
        outer: Some((Site::ORIGIN, cfg.truncation_radius)),
        disks: vec![(y0, r)],
        watched: vec![],
    };
    let a_hi = k.a_upper_within(reach);
    // entry sites satisfy |w - y0| > r - 1; when the disk holds the origin
    // and its neighbours, 1/a is a martingale up to entry
    let a_lo = if y0.norm() + 1.0 <= r {
        Some(k.a_lower_beyond((r - 1.0 - y0.norm()).max(1.0)))
    } else {
        None
    };
    let out = run_replicas(cfg.seed, 0..cfg.replicas as u64, |rng| {
        let credit = |z: Site| {
            let az = k.a_eval(z);
            let q_hi = (a_hi / az).min(1.0);
            let q_lo = a_lo.map_or(0.0, |lo| (lo / az).min(q_hi));
            (1.0 - 0.5 * (q_lo + q_hi), 0.5 * (q_hi - q_lo))
        };
        match walker.run(x0, &geom, rng, |_| {}) {
            Stop::Disk(..) => (0.0, 0.0, false),
            Stop::Exit(z) => {
                let (v, b) = credit(z);
                (v, b, false)
            }
            Stop::StepCap(z) => {
                let (v, b) = credit(z);
                (v, b, true)
            }
        }
    });
    check_step_cap(out.iter().filter(|o| o.2).count(), cfg.replicas)?;
    let values: Vec<f64> = out.iter().map(|o| o.0).collect();
    let bias: Vec<f64> = out.iter().map(|o| o.1).collect();
    Ok(Estimate::from_values(&values, pairwise_sum(&bias) / cfg.replicas as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatteryKind {
    Green,
    Return,
    Hit,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatteryRow {
    pub kind: BatteryKind,
    pub x: Site,
    pub y: Site,
    pub closed_form: f64,
    pub estimate: Estimate,
    pub pass: bool,
}

/// Monte Carlo against closed forms for `targets` random targets with norms
/// up to `max_norm`, cycling through Green's function, return and hitting
/// probabilities.
pub fn closed_form_battery(
    ctx: &HatKernelContext,
    targets: usize,
    max_norm: i64,
    replicas: usize,
    seed: u64,
) -> Result<Vec<BatteryRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pick = || loop {
        let s = Site::new(rng.gen_range(-max_norm..=max_norm), rng.gen_range(-max_norm..=max_norm));
        if !s.is_origin() && s.norm() <= max_norm as f64 {
            return s;
        }
    };
    let mut plan = Vec::with_capacity(targets);
    for i in 0..targets {
        let kind = [BatteryKind::Green, BatteryKind::Return, BatteryKind::Hit][i % 3];
        let x = pick();
        let mut y = pick();
        while kind == BatteryKind::Hit && y == x {
            y = pick();
        }
        plan.push((kind, x, y));
    }
    let radius = 8.0 * max_norm as f64;
    plan.into_iter()
        .enumerate()
        .map(|(i, (kind, x, y))| {
            let cfg = WalkConfig::new(Chain::Hat, radius, derive_seed(seed, 100 + i as u64), replicas);
            let (closed_form, estimate) = match kind {
                BatteryKind::Green => (ctx.green_hat(x, y)?, estimate_green_hat(ctx, x, y, &cfg)?),
                BatteryKind::Return => (ctx.return_prob_hat(x)?, estimate_return_prob(ctx, x, &cfg)?),
                BatteryKind::Hit => (
                    ctx.hit_prob_hat(x, y)?,
                    estimate_hit_prob(ctx, x, &SiteSet::singleton(y), &cfg)?,
                ),
            };
            let y = if kind == BatteryKind::Return { x } else { y };
            Ok(BatteryRow {
                kind,
                x,
                y,
                closed_form,
                pass: estimate.agrees_with(closed_form, 3.0),
                estimate,
            })
        })
        .collect()
}
