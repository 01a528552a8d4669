//! Escape probabilities, capacity and harmonic measure of finite sets for the
//! conditioned walk, the simple random walk's harmonic measure and capacity
//! of sets containing the origin, and the identities linking them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closed_forms::HatKernelContext;
use crate::error::{precondition, Error, Result};
use crate::exact_solver::{
    Bracket, BracketConfig, Chain, DomainSolver, SetSolution, SiteKind, SolverConfig,
    TruncatedDomain,
};
use crate::kernel::KernelTable;
use crate::lattice::{Site, SiteSet};

/// Radius ladder start used by the capacity routines unless overridden.
pub const DEFAULT_CAPACITY_RADIUS: f64 = 256.0;

pub fn capacity_config(tol: f64) -> BracketConfig {
    BracketConfig {
        radius: DEFAULT_CAPACITY_RADIUS,
        max_radius: 1024.0,
        tol,
        ..BracketConfig::default()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CapacityReport {
    pub set: SiteSet,
    pub es_hat: Vec<(Site, Bracket)>,
    pub cap_hat: Bracket,
    pub hm_hat: Vec<(Site, Bracket)>,
    pub radius_used: f64,
}

impl CapacityReport {
    pub fn max_width(&self) -> f64 {
        self.es_hat
            .iter()
            .chain(&self.hm_hat)
            .map(|(_, b)| b.width())
            .fold(self.cap_hat.width(), f64::max)
    }
}

/// Escape brackets with the radius at which they met the tolerance.
pub fn es_hat(ctx: &HatKernelContext, set: &SiteSet, cfg: &BracketConfig) -> Result<(Vec<Bracket>, f64)> {
    set.require_no_origin()?;
    let mut r = cfg.radius.max(8.0);
    while r < 4.0 * set.max_norm() {
        r *= 2.0;
    }
    loop {
        let sol = SetSolution::solve(ctx, set, r, cfg.model, cfg.solver, false)?;
        let es: Vec<Bracket> = set.iter().map(|y| sol.escape(y)).collect::<Result<_>>()?;
        let width = es.iter().map(Bracket::width).fold(0.0, f64::max);
        if width <= cfg.tol {
            return Ok((es, r));
        }
        if 2.0 * r > cfg.max_radius {
            let best = es
                .into_iter()
                .max_by(|a, b| a.width().total_cmp(&b.width()))
                .expect("nonempty");
            return Err(Error::BracketBudget {
                best,
                width,
                tol: cfg.tol,
                radius: r,
            });
        }
        r *= 2.0;
    }
}

fn weighted_escapes(ctx: &HatKernelContext, set: &SiteSet, es: &[Bracket]) -> Vec<Bracket> {
    set.iter()
        .zip(es)
        .map(|(y, b)| b.scale(ctx.a(y).powi(2)))
        .collect()
}

pub fn cap_hat_from(ctx: &HatKernelContext, set: &SiteSet, es: &[Bracket]) -> Bracket {
    Bracket::sum(&weighted_escapes(ctx, set, es), "conditioned capacity")
}

/// Normalised weights `w_i / sum w` as intervals, each endpoint taken at
/// the extreme of the other weights.
pub fn normalise(weights: &[Bracket], meaning: &str) -> Vec<Bracket> {
    if weights.len() == 1 {
        return vec![Bracket::point(1.0, meaning)];
    }
    (0..weights.len())
        .map(|i| {
            let (mut lo_rest, mut hi_rest) = (0.0, 0.0);
            for (j, w) in weights.iter().enumerate() {
                if j != i {
                    lo_rest += w.lower;
                    hi_rest += w.upper;
                }
            }
            let w = &weights[i];
            let lo = if w.lower > 0.0 { w.lower / (w.lower + hi_rest) } else { 0.0 };
            let hi = if w.upper > 0.0 { w.upper / (w.upper + lo_rest) } else { 0.0 };
            Bracket::new(lo, hi, meaning)
        })
        .collect()
}

pub fn capacity_report(ctx: &HatKernelContext, set: &SiteSet, cfg: &BracketConfig) -> Result<CapacityReport> {
    let (es, radius) = es_hat(ctx, set, cfg)?;
    let cap = cap_hat_from(ctx, set, &es);
    let hm = normalise(&weighted_escapes(ctx, set, &es), "conditioned harmonic measure");
    let sites: Vec<Site> = set.iter().collect();
    Ok(CapacityReport {
        set: set.clone(),
        es_hat: sites.iter().copied().zip(es).collect(),
        cap_hat: cap,
        hm_hat: sites.into_iter().zip(hm).collect(),
        radius_used: radius,
    })
}

pub fn cap_hat(ctx: &HatKernelContext, set: &SiteSet, cfg: &BracketConfig) -> Result<Bracket> {
    let (es, _) = es_hat(ctx, set, cfg)?;
    Ok(cap_hat_from(ctx, set, &es))
}

pub fn hm_hat(ctx: &HatKernelContext, set: &SiteSet, cfg: &BracketConfig) -> Result<Vec<Bracket>> {
    if set.len() == 1 {
        set.require_no_origin()?;
        return Ok(vec![Bracket::point(1.0, "conditioned harmonic measure")]);
    }
    let (es, _) = es_hat(ctx, set, cfg)?;
    Ok(normalise(&weighted_escapes(ctx, set, &es), "conditioned harmonic measure"))
}

/// `P_x[hit A]` as `sum_y G^(x, y) es(y)`.
pub fn hit_prob_via_decomposition(
    ctx: &HatKernelContext,
    x: Site,
    set: &SiteSet,
    cfg: &BracketConfig,
) -> Result<Bracket> {
    if set.contains(x) {
        return Err(precondition("x must lie outside the target set"));
    }
    let (es, _) = es_hat(ctx, set, cfg)?;
    let terms: Vec<Bracket> = set
        .iter()
        .zip(&es)
        .map(|(y, b)| Ok(b.scale(ctx.green_hat(x, y)?)))
        .collect::<Result<_>>()?;
    Ok(Bracket::sum(&terms, "hit probability (last-exit decomposition)"))
}

/// Normalised truncated escape probabilities of the simple random walk from
/// the sites of `set` to the boundary of `B(r)`.
pub fn hm_srw_truncated(kernel: &KernelTable, set: &SiteSet, r: f64, cfg: SolverConfig) -> Result<Vec<f64>> {
    if set.len() == 1 {
        return Ok(vec![1.0]);
    }
    let dom = TruncatedDomain::new(r, vec![], vec![("A".into(), set.clone())])?;
    let solver = DomainSolver::new(Chain::Srw, dom, kernel, cfg)?;
    let f = solver.solve(|_, k| matches!(k, SiteKind::Absorbing(_)) as u8 as f64, None)?;
    let es: Vec<f64> = set
        .iter()
        .map(|y| {
            y.neighbors()
                .iter()
                .filter(|z| !set.contains(**z))
                .map(|z| 1.0 - f.value(*z).expect("adjacent to the interior"))
                .sum::<f64>()
                / 4.0
        })
        .collect();
    let total: f64 = es.iter().sum();
    Ok(es.into_iter().map(|e| e / total).collect())
}

/// Simple random walk harmonic measure of `set`: values at radii `r` and
/// `2r`, widened on both sides by their difference.
pub fn hm_srw(kernel: &KernelTable, set: &SiteSet, r: f64, cfg: SolverConfig) -> Result<Vec<Bracket>> {
    if r < 4.0 * set.max_norm() || r < 4.0 {
        return Err(precondition(format!("radius {r} too small for the set")));
    }
    let (a, b) = rayon::join(
        || hm_srw_truncated(kernel, set, r, cfg),
        || hm_srw_truncated(kernel, set, 2.0 * r, cfg),
    );
    let (a, b) = (a?, b?);
    Ok(a.iter()
        .zip(&b)
        .map(|(&p, &q)| {
            let d = (p - q).abs();
            Bracket::new(p.min(q) - d, p.max(q) + d, "harmonic measure")
        })
        .collect())
}

/// Capacity of a set containing the origin, `sum_y hm(y) a(y)`, with the
/// radius at which the width met `cfg.tol`.
pub fn cap_srw_with_origin(ctx: &HatKernelContext, set: &SiteSet, cfg: &BracketConfig) -> Result<(Bracket, f64)> {
    if !set.contains_origin() {
        return Err(precondition("set must contain the origin"));
    }
    if set.len() == 1 {
        return Ok((Bracket::point(0.0, "capacity"), 0.0));
    }
    let mut r = cfg.radius.max(8.0);
    while r < 4.0 * set.max_norm() {
        r *= 2.0;
    }
    loop {
        let hm = hm_srw(ctx.kernel(), set, r, cfg.solver)?;
        let terms: Vec<Bracket> = set.iter().zip(&hm).map(|(y, b)| b.scale(ctx.a(y))).collect();
        let cap = Bracket::sum(&terms, "capacity");
        if cap.width() <= cfg.tol {
            return Ok((cap, r));
        }
        if 4.0 * r > cfg.max_radius {
            let width = cap.width();
            return Err(Error::BracketBudget {
                best: cap,
                width,
                tol: cfg.tol,
                radius: r,
            });
        }
        r *= 2.0;
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentityReport {
    pub set: SiteSet,
    pub cap_hat: Bracket,
    pub cap_srw: Bracket,
    pub overlap: bool,
    pub midpoint_gap: f64,
    pub half_widths: f64,
}

/// Compares the conditioned capacity of `set` with the simple random walk
/// capacity of `set` plus the origin.
pub fn verify_capacity_identity(ctx: &HatKernelContext, set: &SiteSet, cfg: &BracketConfig) -> Result<IdentityReport> {
    let (hat, srw) = rayon::join(
        || cap_hat(ctx, set, cfg),
        || cap_srw_with_origin(ctx, &set.with(Site::ORIGIN), cfg),
    );
    let (hat, (srw, _)) = (hat?, srw?);
    Ok(IdentityReport {
        set: set.clone(),
        overlap: hat.overlaps(&srw),
        midpoint_gap: (hat.midpoint() - srw.midpoint()).abs(),
        half_widths: 0.5 * (hat.width() + srw.width()),
        cap_hat: hat,
        cap_srw: srw,
    })
}

/// Capacity reports for several sets, solved concurrently.
pub fn capacity_reports(ctx: &HatKernelContext, sets: &[SiteSet], cfg: &BracketConfig) -> Vec<Result<CapacityReport>> {
    sets.par_iter().map(|s| capacity_report(ctx, s, cfg)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn ctx() -> HatKernelContext {
        HatKernelContext::with_window(256).unwrap()
    }

    fn cfg() -> BracketConfig {
        BracketConfig {
            radius: 32.0,
            ..capacity_config(1e-3)
        }
    }

    #[test]
    fn singleton_escape_and_capacity() {
        let c = ctx();
        let (es, _) = es_hat(&c, &SiteSet::singleton(Site::new(1, 0)), &cfg()).unwrap();
        assert!(es[0].contains(0.5));
        let (es, _) = es_hat(&c, &SiteSet::singleton(Site::new(1, 1)), &cfg()).unwrap();
        assert!(es[0].contains(PI / 8.0), "{}", es[0]);
        let cap = cap_hat(&c, &SiteSet::singleton(Site::new(1, 1)), &cfg()).unwrap();
        assert!(cap.contains(2.0 / PI));
        let hm = hm_hat(&c, &SiteSet::singleton(Site::new(4, 4)), &cfg()).unwrap();
        assert_eq!(hm[0].lower, 1.0);
        assert_eq!(hm[0].upper, 1.0);
    }

    #[test]
    fn symmetric_pair() {
        let c = ctx();
        let set = SiteSet::new([Site::new(2, 0), Site::new(-2, 0)]).unwrap();
        let r = capacity_report(&c, &set, &cfg()).unwrap();
        assert!(r.es_hat[0].1.overlaps(&r.es_hat[1].1));
        assert!(r.hm_hat.iter().all(|(_, b)| b.contains(0.5)));
    }

    #[test]
    fn capacity_is_monotone() {
        let c = ctx();
        let a = SiteSet::new([Site::new(2, 1), Site::new(3, 1)]).unwrap();
        let small = cap_hat(&c, &a, &cfg()).unwrap();
        let big = cap_hat(&c, &a.with(Site::new(-1, 4)), &cfg()).unwrap();
        assert!(small.upper <= big.lower);
    }

    #[test]
    fn decomposition_singleton_reduces_to_closed_form() {
        let c = ctx();
        let y = Site::new(2, -1);
        let x = Site::new(-3, 5);
        let b = hit_prob_via_decomposition(&c, x, &SiteSet::singleton(y), &cfg()).unwrap();
        assert!(b.contains(c.hit_prob_hat(x, y).unwrap()));
        assert!(b.upper < 1.0);
    }

    #[test]
    fn srw_capacity_of_two_point_sets() {
        let c = ctx();
        let (z, _) = cap_srw_with_origin(&c, &SiteSet::singleton(Site::ORIGIN), &cfg()).unwrap();
        assert_eq!((z.lower, z.upper), (0.0, 0.0));
        for x in [Site::new(1, 0), Site::new(2, 3)] {
            let (b, _) = cap_srw_with_origin(&c, &SiteSet::new([Site::ORIGIN, x]).unwrap(), &cfg()).unwrap();
            assert!(b.contains(c.a(x) / 2.0), "{x}: {b}");
        }
    }

    #[test]
    fn hm_srw_brackets_contain_exact_harmonic_measure() {
        let c = ctx();
        let set = SiteSet::new([Site::new(0, 0), Site::new(1, 0), Site::new(0, 1)]).unwrap();
        let exact = crate::exact_solver::SrwHarmonic::new(c.kernel(), &set).unwrap();
        let hm = hm_srw(c.kernel(), &set, 32.0, SolverConfig::default()).unwrap();
        for (b, e) in hm.iter().zip(exact.harmonic_measure()) {
            assert!(b.contains(*e));
        }
        assert_eq!(hm_srw(c.kernel(), &SiteSet::singleton(Site::new(3, 3)), 32.0, SolverConfig::default()).unwrap()[0].lower, 1.0);
    }

    #[test]
    fn capacity_identity_small_sets() {
        let c = ctx();
        for set in [
            SiteSet::singleton(Site::new(1, 0)),
            SiteSet::singleton(Site::new(1, 1)),
            SiteSet::new([Site::new(2, 0), Site::new(0, 2)]).unwrap(),
        ] {
            let r = verify_capacity_identity(&c, &set, &cfg()).unwrap();
            assert!(r.overlap, "{r:?}");
            assert!(r.midpoint_gap < r.half_widths);
        }
    }
}
