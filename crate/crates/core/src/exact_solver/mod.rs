//! Finite-domain linear algebra for the simple random walk and the
//! conditioned walk: hitting probabilities, truncated Green's functions and
//! rigorous brackets for their infinite-horizon counterparts.
//!
//! Conditioned-walk problems are solved in the variable `v = a u`, in which
//! the transition operator becomes the simple random walk's with `v(0) = 0`;
//! both chains therefore share one symmetric positive definite solver.

pub(crate) mod laplacian;
pub mod finite_chain;
pub mod representation;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::closed_forms::HatKernelContext;
use crate::error::{precondition, Error, Result};
use crate::kernel::KernelTable;
use crate::lattice::{Ball, Site, SiteSet};

use laplacian::{Laplacian, NONE};
pub use finite_chain::{no_return_check, FiniteChain, ConditioningResult};
pub use representation::SrwHarmonic;

/// Label of the outer boundary in [`hit_partition`] results.
pub const EXIT_LABEL: &str = "exit";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Chain {
    Srw,
    Hat,
}

impl fmt::Display for Chain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Chain::Srw => "srw",
            Chain::Hat => "hat",
        })
    }
}

impl std::str::FromStr for Chain {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "srw" => Ok(Chain::Srw),
            "hat" => Ok(Chain::Hat),
            _ => Err(precondition(format!("unknown chain {s:?}, expected srw or hat"))),
        }
    }
}

/// Closed interval with a label saying what it encloses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub lower: f64,
    pub upper: f64,
    pub meaning: String,
}

impl Bracket {
    pub fn new(lower: f64, upper: f64, meaning: impl Into<String>) -> Self {
        debug_assert!(lower <= upper, "bracket [{lower}, {upper}]");
        Bracket {
            lower,
            upper,
            meaning: meaning.into(),
        }
    }

    pub fn point(v: f64, meaning: impl Into<String>) -> Self {
        Bracket::new(v, v, meaning)
    }

    pub fn around(center: f64, below: f64, above: f64, meaning: impl Into<String>) -> Self {
        Bracket::new(center - below, center + above, meaning)
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }

    pub fn overlaps(&self, other: &Bracket) -> bool {
        self.lower <= other.upper && other.lower <= self.upper
    }

    pub fn clamp_unit(mut self) -> Self {
        self.lower = self.lower.clamp(0.0, 1.0);
        self.upper = self.upper.clamp(0.0, 1.0);
        self
    }

    pub fn with_meaning(mut self, meaning: impl Into<String>) -> Self {
        self.meaning = meaning.into();
        self
    }

    /// Scales by a nonnegative factor.
    pub fn scale(&self, k: f64) -> Bracket {
        Bracket::new(self.lower * k, self.upper * k, self.meaning.clone())
    }

    pub fn add(&self, other: &Bracket) -> Bracket {
        Bracket::new(
            self.lower + other.lower,
            self.upper + other.upper,
            self.meaning.clone(),
        )
    }

    pub fn sum<'a>(items: impl IntoIterator<Item = &'a Bracket>, meaning: &str) -> Bracket {
        items
            .into_iter()
            .fold(Bracket::point(0.0, meaning), |acc, b| acc.add(b))
            .with_meaning(meaning)
    }

    /// Quotient of two nonnegative intervals, the denominator bounded away from zero.
    pub fn quotient(num: &Bracket, den: &Bracket, meaning: &str) -> Bracket {
        Bracket::new(num.lower / den.upper, num.upper / den.lower, meaning)
    }
}

impl fmt::Display for Bracket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:.12}, {:.12}]", self.lower, self.upper)
    }
}

/// Origin-centred ball with killed (`forbidden`) and labelled absorbing sites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncatedDomain {
    pub outer: Ball,
    pub forbidden: Vec<Site>,
    pub absorbing: Vec<(String, SiteSet)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiteKind {
    Interior,
    Forbidden,
    Absorbing(usize),
    Exit,
}

impl TruncatedDomain {
    pub fn new(
        radius: f64,
        mut forbidden: Vec<Site>,
        absorbing: Vec<(String, SiteSet)>,
    ) -> Result<Self> {
        let outer = Ball::centered(radius)?;
        forbidden.sort_unstable();
        forbidden.dedup();
        for (i, (label, set)) in absorbing.iter().enumerate() {
            if label == EXIT_LABEL {
                return Err(precondition("label `exit` is reserved for the outer boundary"));
            }
            for s in set.iter() {
                if !outer.contains(s) {
                    return Err(precondition(format!("absorbing site {s} outside the ball")));
                }
                if forbidden.binary_search(&s).is_ok() {
                    return Err(precondition(format!("site {s} both forbidden and absorbing")));
                }
                if absorbing[..i].iter().any(|(_, other)| other.contains(s)) {
                    return Err(precondition(format!("site {s} in two absorbing sets")));
                }
            }
        }
        Ok(TruncatedDomain {
            outer,
            forbidden,
            absorbing,
        })
    }

    /// Domain for the conditioned walk: the origin is forbidden.
    pub fn hat(radius: f64, absorbing: Vec<(String, SiteSet)>) -> Result<Self> {
        TruncatedDomain::new(radius, vec![Site::ORIGIN], absorbing)
    }

    pub fn radius(&self) -> f64 {
        self.outer.radius
    }

    pub fn classify(&self, s: Site) -> SiteKind {
        if !self.outer.contains(s) {
            return SiteKind::Exit;
        }
        if self.forbidden.binary_search(&s).is_ok() {
            return SiteKind::Forbidden;
        }
        for (i, (_, set)) in self.absorbing.iter().enumerate() {
            if set.contains(s) {
                return SiteKind::Absorbing(i);
            }
        }
        SiteKind::Interior
    }

    pub fn labels(&self) -> Vec<String> {
        self.absorbing
            .iter()
            .map(|(l, _)| l.clone())
            .chain(std::iter::once(EXIT_LABEL.to_string()))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Largest admissible defect of the harmonic equation, in probability units.
    pub tol: f64,
    pub max_iter: Option<usize>,
    pub omega: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-12,
            max_iter: None,
            omega: None,
        }
    }
}

#[derive(Debug)]
struct GridIndex {
    half: i64,
    side: usize,
    idx: Vec<u32>,
}

impl GridIndex {
    fn get(&self, s: Site) -> Option<usize> {
        if s.x1.abs() > self.half || s.x2.abs() > self.half {
            return None;
        }
        let k = (s.x1 + self.half) as usize * self.side + (s.x2 + self.half) as usize;
        match self.idx[k] {
            NONE => None,
            i => Some(i as usize),
        }
    }
}

/// Solution of one Dirichlet problem, in the chain's own (probability) units.
#[derive(Debug, Clone)]
pub struct SolveResult {
    index: Arc<GridIndex>,
    values: Vec<f64>,
    boundary: BTreeMap<Site, f64>,
    /// Largest defect of the harmonic equation over the interior.
    pub residual: f64,
    pub iterations: usize,
    /// Bound on the error of every value implied by the residual.
    pub error_bound: f64,
}

impl SolveResult {
    /// Value at an interior site or at a boundary site adjacent to the interior.
    pub fn value(&self, s: Site) -> Option<f64> {
        match self.index.get(s) {
            Some(i) => Some(self.values[i]),
            None => self.boundary.get(&s).copied(),
        }
    }

    pub fn interior_values(&self) -> &[f64] {
        &self.values
    }
}

/// A prepared domain that can be solved repeatedly with different data.
pub struct DomainSolver<'k> {
    pub chain: Chain,
    pub domain: TruncatedDomain,
    kernel: &'k KernelTable,
    cfg: SolverConfig,
    lap: Laplacian,
    index: Arc<GridIndex>,
    weight: Vec<f64>,
    boundary_sites: Vec<(Site, SiteKind)>,
}

impl<'k> DomainSolver<'k> {
    pub fn new(
        chain: Chain,
        domain: TruncatedDomain,
        kernel: &'k KernelTable,
        cfg: SolverConfig,
    ) -> Result<Self> {
        if chain == Chain::Hat
            && !matches!(domain.classify(Site::ORIGIN), SiteKind::Forbidden)
        {
            return Err(precondition("conditioned-walk domains must forbid the origin"));
        }
        let half = domain.outer.bounding_half_width();
        let side = (2 * half + 1) as usize;
        let mut idx = vec![NONE; side * side];
        let mut sites = Vec::new();
        for x1 in -half..=half {
            for x2 in -half..=half {
                let s = Site::new(x1, x2);
                if domain.classify(s) == SiteKind::Interior {
                    idx[(x1 + half) as usize * side + (x2 + half) as usize] = sites.len() as u32;
                    sites.push(s);
                }
            }
        }
        if sites.len() >= NONE as usize {
            return Err(Error::BudgetExceeded {
                what: "solver interior",
                needed: sites.len(),
                limit: NONE as usize - 1,
            });
        }
        let index = Arc::new(GridIndex { half, side, idx });
        let lap = Laplacian::new(sites, |s| index.get(s));
        let mut boundary = BTreeMap::new();
        for (s, nb) in lap.sites.iter().zip(&lap.nbr) {
            for (z, &j) in s.neighbors().iter().zip(nb) {
                if j == NONE {
                    boundary.insert(*z, domain.classify(*z));
                }
            }
        }
        let weight = match chain {
            Chain::Srw => vec![1.0; lap.len()],
            Chain::Hat => lap.sites.iter().map(|&s| kernel.a_eval(s)).collect(),
        };
        Ok(DomainSolver {
            chain,
            domain,
            kernel,
            cfg,
            lap,
            index,
            weight,
            boundary_sites: boundary.into_iter().collect(),
        })
    }

    pub fn interior_len(&self) -> usize {
        self.lap.len()
    }

    pub fn is_interior(&self, s: Site) -> bool {
        self.index.get(s).is_some()
    }

    /// Non-interior sites adjacent to the interior, with their classification.
    pub fn boundary_sites(&self) -> &[(Site, SiteKind)] {
        &self.boundary_sites
    }

    fn weight_at(&self, s: Site) -> f64 {
        match self.chain {
            Chain::Srw => 1.0,
            Chain::Hat => self.kernel.a_eval(s),
        }
    }

    /// Solves `u = P u + source` in the interior with `u = data` elsewhere.
    pub fn solve(
        &self,
        data: impl Fn(Site, SiteKind) -> f64,
        source: Option<(Site, f64)>,
    ) -> Result<SolveResult> {
        self.solve_weighted(|s, k| data(s, k) * self.weight_at(s), source)
    }

    /// As [`Self::solve`], with boundary data given as `a u` for the conditioned walk.
    pub fn solve_weighted(
        &self,
        data_v: impl Fn(Site, SiteKind) -> f64,
        source: Option<(Site, f64)>,
    ) -> Result<SolveResult> {
        let bdata: BTreeMap<Site, f64> = self
            .boundary_sites
            .iter()
            .map(|&(s, k)| {
                let v = if k == SiteKind::Forbidden { 0.0 } else { data_v(s, k) };
                (s, v)
            })
            .collect();
        let mut f = vec![0.0; self.lap.len()];
        for (i, (s, nb)) in self.lap.sites.iter().zip(&self.lap.nbr).enumerate() {
            for (z, &j) in s.neighbors().iter().zip(nb) {
                if j == NONE {
                    f[i] += bdata[z];
                }
            }
        }
        if let Some((y, w)) = source {
            let i = self
                .index
                .get(y)
                .ok_or_else(|| precondition(format!("source site {y} is not interior")))?;
            f[i] += 4.0 * w * self.weight[i];
        }
        let half = self.index.half as f64;
        let max_iter = self
            .cfg
            .max_iter
            .unwrap_or(40 * (2 * self.index.half as usize + 2) + 2000);
        let omega = self.cfg.omega.unwrap_or(2.0 / (1.0 + 2.5 / (half + 1.0)));
        let scale = f.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        let tol = self.cfg.tol * (scale / 4.0).max(1.0);
        let out = self.lap.solve(&f, tol, max_iter, omega)?;
        let values: Vec<f64> = out.v.iter().zip(&self.weight).map(|(v, w)| v / w).collect();
        let boundary = bdata
            .into_iter()
            .map(|(s, v)| {
                let w = self.weight_at(s);
                (s, if w == 0.0 { 0.0 } else { v / w })
            })
            .collect();
        let reach = (self.domain.radius() + 1.0).powi(2);
        Ok(SolveResult {
            index: self.index.clone(),
            values,
            boundary,
            residual: out.defect,
            iterations: out.iterations,
            error_bound: out.defect * reach + 16.0 * f64::EPSILON * scale,
        })
    }
}

fn require_interior(solver: &DomainSolver, s: Site) -> Result<()> {
    if solver.is_interior(s) {
        Ok(())
    } else {
        Err(precondition(format!("site {s} is not interior to the domain")))
    }
}

/// Probability of being absorbed in each labelled set (and at the outer
/// boundary, label [`EXIT_LABEL`]) before any other.
pub fn hit_partition(
    chain: Chain,
    dom: &TruncatedDomain,
    x: Site,
    kernel: &KernelTable,
    cfg: SolverConfig,
) -> Result<BTreeMap<String, f64>> {
    let labels = dom.labels();
    match dom.classify(x) {
        SiteKind::Absorbing(k) => {
            return Ok(labels
                .iter()
                .enumerate()
                .map(|(i, l)| (l.clone(), if i == k { 1.0 } else { 0.0 }))
                .collect())
        }
        SiteKind::Interior => {}
        _ => return Err(precondition(format!("start {x} is neither interior nor absorbing"))),
    }
    let solver = DomainSolver::new(chain, dom.clone(), kernel, cfg)?;
    let n_abs = dom.absorbing.len();
    let mut out = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        let r = solver.solve(
            |_, k| match k {
                SiteKind::Absorbing(j) if j == i => 1.0,
                SiteKind::Exit if i == n_abs => 1.0,
                _ => 0.0,
            },
            None,
        )?;
        out.insert(l.clone(), r.value(x).expect("interior"));
    }
    Ok(out)
}

/// Expected visits to `y`, counting time zero, before leaving the interior.
pub fn green_truncated(
    chain: Chain,
    dom: &TruncatedDomain,
    x: Site,
    y: Site,
    kernel: &KernelTable,
    cfg: SolverConfig,
) -> Result<SolveResult> {
    let solver = DomainSolver::new(chain, dom.clone(), kernel, cfg)?;
    require_interior(&solver, x)?;
    require_interior(&solver, y)?;
    solver.solve(|_, _| 0.0, Some((y, 1.0)))
}

/// How the value of an infinite-horizon quantity on the outer boundary is bounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundaryModel {
    /// Exact boundary values from the potential-kernel representation, with
    /// their propagated evaluation error.
    Representation,
    /// Boundary treated as escape, plus `safety` times the far-field
    /// leading-order hitting bound maximised over the boundary.
    LeadingOrder { safety: f64 },
}

impl Default for BoundaryModel {
    fn default() -> Self {
        BoundaryModel::Representation
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BracketConfig {
    pub radius: f64,
    pub max_radius: f64,
    pub tol: f64,
    pub model: BoundaryModel,
    pub solver: SolverConfig,
}

impl Default for BracketConfig {
    fn default() -> Self {
        BracketConfig {
            radius: 32.0,
            max_radius: 1024.0,
            tol: 1e-3,
            model: BoundaryModel::Representation,
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Quantity {
    /// `P_x[the walk ever hits A]`
    Hit,
    /// `P_x[the walk hits A, first at y]`
    EntranceAt { y: Site },
    /// `P_y[the walk started at y in A never returns to A]`
    Escape { y: Site },
}

/// A solved field with symmetric slack: the true value at `s` lies in
/// `[u(s) - below, u(s) + above]`.
#[derive(Debug, Clone)]
struct Field {
    sol: SolveResult,
    below: f64,
    above: f64,
}

impl Field {
    fn bracket(&self, s: Site, meaning: &str) -> Option<Bracket> {
        self.sol
            .value(s)
            .map(|u| Bracket::around(u, self.below, self.above, meaning).clamp_unit())
    }
}

/// Brackets for hitting and entrance probabilities of one target set at one radius.
pub struct SetSolution {
    pub set: SiteSet,
    pub radius: f64,
    pub model: BoundaryModel,
    total: Field,
    entrance: Vec<Field>,
    p_hat: Vec<[f64; 4]>,
}

fn smallest_radius(set: &SiteSet, start: f64, extra: &[Site]) -> f64 {
    let need = (4.0 * set.max_norm()).max(extra.iter().map(|s| s.norm() + 2.0).fold(0.0, f64::max));
    let mut r = start.max(8.0);
    while r < need {
        r *= 2.0;
    }
    r
}

impl SetSolution {
    pub fn solve(
        ctx: &HatKernelContext,
        set: &SiteSet,
        radius: f64,
        model: BoundaryModel,
        cfg: SolverConfig,
        with_entrance: bool,
    ) -> Result<Self> {
        set.require_no_origin()?;
        if 4.0 * set.max_norm() > radius {
            return Err(precondition(format!(
                "target set must lie in B(R/4), R = {radius}"
            )));
        }
        let kernel = ctx.kernel().as_ref();
        let dom = TruncatedDomain::hat(radius, vec![("A".into(), set.clone())])?;
        let solver = DomainSolver::new(Chain::Hat, dom, kernel, cfg)?;
        let sites: Vec<Site> = set.iter().collect();
        let n = sites.len();

        // boundary data per entry site, in `a u` units, with error bounds
        let exits: Vec<Site> = solver
            .boundary_sites()
            .iter()
            .filter(|(_, k)| *k == SiteKind::Exit)
            .map(|(s, _)| *s)
            .collect();
        let mut exit_data: BTreeMap<Site, Vec<(f64, f64)>> = BTreeMap::new();
        if model == BoundaryModel::Representation {
            let rep = SrwHarmonic::new(kernel, &set.with(Site::ORIGIN))?;
            let order: Vec<usize> = sites
                .iter()
                .map(|y| rep.sites().iter().position(|s| s == y).expect("member"))
                .collect();
            for &z in &exits {
                let h = rep.hitting(kernel, z);
                let row = order
                    .iter()
                    .zip(&sites)
                    .map(|(&j, &y)| {
                        let ay = kernel.a_eval(y);
                        (ay * h[j].0, ay * h[j].1 + h[j].0 * kernel.a_eval_error(y))
                    })
                    .collect();
                exit_data.insert(z, row);
            }
        }
        let exit_eta = |pick: &dyn Fn(&[(f64, f64)]) -> f64| -> f64 {
            exit_data.values().map(|row| pick(row)).fold(0.0, f64::max)
        };

        let solve_for = |which: Option<usize>| -> Result<(SolveResult, f64)> {
            let sol = solver.solve_weighted(
                |z, k| match k {
                    SiteKind::Absorbing(_) => {
                        let i = set.index_of(z).expect("member");
                        if which.map_or(true, |w| w == i) {
                            kernel.a_eval(z)
                        } else {
                            0.0
                        }
                    }
                    SiteKind::Exit => exit_data.get(&z).map_or(0.0, |row| match which {
                        Some(w) => row[w].0,
                        None => row.iter().map(|p| p.0).sum(),
                    }),
                    _ => 0.0,
                },
                None,
            )?;
            let eta = match which {
                Some(w) => exit_eta(&|row| row[w].1),
                None => exit_eta(&|row| row.iter().map(|p| p.1).sum()),
            };
            Ok((sol, eta))
        };

        let (total_sol, total_eta) = solve_for(None)?;
        let p_hat: Vec<[f64; 4]> = sites
            .iter()
            .map(|&y| {
                let mut row = [0.0; 4];
                for (k, z) in y.neighbors().iter().enumerate() {
                    row[k] = ctx.p_hat(y, *z).expect("y != 0");
                }
                row
            })
            .collect();

        let leading_bound = match model {
            BoundaryModel::Representation => 0.0,
            BoundaryModel::LeadingOrder { safety } => {
                // truncated escapes bound the true ones from above, hence the capacity
                let err = total_sol.error_bound;
                let cap_upper: f64 = sites
                    .iter()
                    .zip(&p_hat)
                    .map(|(&y, row)| {
                        let es: f64 = y
                            .neighbors()
                            .iter()
                            .zip(row)
                            .map(|(z, p)| {
                                let h = total_sol.value(*z).unwrap_or(0.0);
                                p * (1.0 - (h - err).max(0.0))
                            })
                            .sum();
                        kernel.a_eval(y).powi(2) * es.min(1.0)
                    })
                    .sum();
                let mut g_max: f64 = 0.0;
                for &z in &exits {
                    for &y in &sites {
                        g_max = g_max.max(ctx.g_hat(z, y)?);
                    }
                }
                safety * cap_upper * g_max
            }
        };
        let field = |sol: SolveResult, eta: f64| {
            let e = sol.error_bound + eta;
            Field {
                below: e,
                above: e + leading_bound,
                sol,
            }
        };
        let total = field(total_sol, total_eta);
        let mut entrance = Vec::new();
        if with_entrance {
            if n == 1 {
                entrance.push(total.clone());
            } else {
                for w in 0..n {
                    let (sol, eta) = solve_for(Some(w))?;
                    entrance.push(field(sol, eta));
                }
            }
        }
        Ok(SetSolution {
            set: set.clone(),
            radius,
            model,
            total,
            entrance,
            p_hat,
        })
    }

    pub fn hit(&self, x: Site) -> Result<Bracket> {
        if self.set.contains(x) {
            return Ok(Bracket::point(1.0, "hit probability"));
        }
        self.total
            .bracket(x, "hit probability")
            .ok_or_else(|| precondition(format!("{x} is not interior at R = {}", self.radius)))
    }

    pub fn entrance(&self, x: Site, y: Site) -> Result<Bracket> {
        let i = self
            .set
            .index_of(y)
            .ok_or_else(|| precondition(format!("{y} is not in the target set")))?;
        let field = self
            .entrance
            .get(i)
            .ok_or_else(|| precondition("entrance fields were not solved"))?;
        if self.set.contains(x) {
            let v = if x == y { 1.0 } else { 0.0 };
            return Ok(Bracket::point(v, "entrance probability"));
        }
        field
            .bracket(x, "entrance probability")
            .ok_or_else(|| precondition(format!("{x} is not interior at R = {}", self.radius)))
    }

    /// Escape probability from `y` in the set, by unrolling the first step.
    pub fn escape(&self, y: Site) -> Result<Bracket> {
        let i = self
            .set
            .index_of(y)
            .ok_or_else(|| precondition(format!("{y} is not in the target set")))?;
        let (mut lo, mut hi) = (0.0, 0.0);
        for (z, p) in y.neighbors().iter().zip(&self.p_hat[i]) {
            if *p == 0.0 || self.set.contains(*z) {
                continue;
            }
            let h = self.total.bracket(*z, "").expect("neighbour in domain");
            lo += p * (1.0 - h.upper);
            hi += p * (1.0 - h.lower);
        }
        Ok(Bracket::new(lo, hi, "escape probability").clamp_unit())
    }

    pub fn get(&self, q: Quantity, x: Site) -> Result<Bracket> {
        match q {
            Quantity::Hit => self.hit(x),
            Quantity::EntranceAt { y } => self.entrance(x, y),
            Quantity::Escape { y } => self.escape(y),
        }
    }
}

fn ladder<T>(
    cfg: &BracketConfig,
    start: f64,
    mut attempt: impl FnMut(f64) -> Result<(T, f64, Bracket)>,
) -> Result<T> {
    let mut r = start;
    loop {
        let (value, width, best) = attempt(r)?;
        if width <= cfg.tol {
            return Ok(value);
        }
        if 2.0 * r > cfg.max_radius {
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

/// Bracket for an infinite-horizon quantity of the conditioned walk, doubling
/// the radius until the width is below `cfg.tol`.
pub fn bracket_infinite(
    ctx: &HatKernelContext,
    quantity: Quantity,
    x: Site,
    set: &SiteSet,
    cfg: &BracketConfig,
) -> Result<Bracket> {
    let extra = match quantity {
        Quantity::Escape { .. } => vec![],
        _ => vec![x],
    };
    let start = smallest_radius(set, cfg.radius, &extra);
    let with_entrance = matches!(quantity, Quantity::EntranceAt { .. });
    ladder(cfg, start, |r| {
        let sol = SetSolution::solve(ctx, set, r, cfg.model, cfg.solver, with_entrance)?;
        let b = sol.get(quantity, x)?;
        Ok((b.clone(), b.width(), b))
    })
}

/// Brackets for the entrance law from `x`, unconditional and conditioned on hitting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntranceMeasure {
    pub radius: f64,
    pub sites: Vec<Site>,
    pub unconditional: Vec<Bracket>,
    pub conditional: Vec<Bracket>,
}

impl EntranceMeasure {
    pub fn max_width(&self) -> f64 {
        self.conditional
            .iter()
            .chain(&self.unconditional)
            .map(Bracket::width)
            .fold(0.0, f64::max)
    }
}

fn conditional_from(unc: &[Bracket]) -> Vec<Bracket> {
    (0..unc.len())
        .map(|i| {
            let others_lo: f64 = unc.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, b)| b.lower).sum();
            let others_hi: f64 = unc.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, b)| b.upper).sum();
            let b = &unc[i];
            let lo = if b.lower > 0.0 { b.lower / (b.lower + others_hi) } else { 0.0 };
            let hi = if b.upper > 0.0 { b.upper / (b.upper + others_lo) } else { 0.0 };
            Bracket::new(lo, hi, "conditional entrance probability")
        })
        .collect()
}

pub fn entrance_measure(
    ctx: &HatKernelContext,
    x: Site,
    set: &SiteSet,
    cfg: &BracketConfig,
) -> Result<EntranceMeasure> {
    if set.contains(x) {
        return Err(precondition("start must lie outside the target set"));
    }
    let start = smallest_radius(set, cfg.radius, &[x]);
    ladder(cfg, start, |r| {
        let sol = SetSolution::solve(ctx, set, r, cfg.model, cfg.solver, true)?;
        let unconditional: Vec<Bracket> = set
            .iter()
            .map(|y| sol.entrance(x, y))
            .collect::<Result<_>>()?;
        let conditional = if set.len() == 1 {
            vec![Bracket::point(1.0, "conditional entrance probability")]
        } else {
            conditional_from(&unconditional)
        };
        let m = EntranceMeasure {
            radius: r,
            sites: set.iter().collect(),
            unconditional,
            conditional,
        };
        let w = m.max_width();
        let worst = m
            .conditional
            .iter()
            .max_by(|a, b| a.width().total_cmp(&b.width()))
            .expect("nonempty")
            .clone();
        Ok((m, w, worst))
    })
}

/// Bracket for the conditioned walk's Green's function `G^(x, y)`.
pub fn green_bracket(
    ctx: &HatKernelContext,
    x: Site,
    y: Site,
    cfg: &BracketConfig,
) -> Result<Bracket> {
    if x.is_origin() || y.is_origin() {
        return Err(Error::OriginNotState);
    }
    let start = smallest_radius(&SiteSet::singleton(y), cfg.radius, &[x, y]);
    ladder(cfg, start, |r| {
        let b = green_bracket_at(ctx, x, y, r, cfg.model, cfg.solver)?;
        Ok((b.clone(), b.width(), b))
    })
}

pub fn green_bracket_at(
    ctx: &HatKernelContext,
    x: Site,
    y: Site,
    radius: f64,
    model: BoundaryModel,
    cfg: SolverConfig,
) -> Result<Bracket> {
    let kernel = ctx.kernel().as_ref();
    let dom = TruncatedDomain::hat(radius, vec![])?;
    let solver = DomainSolver::new(Chain::Hat, dom, kernel, cfg)?;
    require_interior(&solver, x)?;
    require_interior(&solver, y)?;
    let exits: Vec<Site> = solver
        .boundary_sites()
        .iter()
        .filter(|(_, k)| *k == SiteKind::Exit)
        .map(|(s, _)| *s)
        .collect();
    let meaning = "green function";
    match model {
        BoundaryModel::Representation => {
            let pair = SiteSet::new([Site::ORIGIN, y])?;
            let rep = SrwHarmonic::new(kernel, &pair)?;
            let iy = pair.index_of(y).expect("member");
            // G(y, y) = 1 / es(y), es(y) = 1 - (1/4) sum_{z ~ y} H(z, y)
            let (mut hsum, mut herr) = (0.0, 0.0);
            for z in y.neighbors() {
                let h = rep.hitting(kernel, z)[iy];
                hsum += h.0;
                herr += h.1;
            }
            let es = 1.0 - hsum / 4.0;
            let es_err = herr / 4.0;
            let gyy = 1.0 / es;
            let gyy_err = es_err / (es * (es - es_err));
            let ay = kernel.a_eval(y);
            let mut eta: f64 = 0.0;
            let data: BTreeMap<Site, f64> = exits
                .iter()
                .map(|&z| {
                    let h = rep.hitting(kernel, z)[iy];
                    eta = eta.max(ay * (h.1 * gyy + h.0 * gyy_err));
                    (z, ay * h.0 * gyy)
                })
                .collect();
            let sol = solver.solve_weighted(|z, _| data.get(&z).copied().unwrap_or(0.0), Some((y, 1.0)))?;
            let u = sol.value(x).expect("interior");
            let e = sol.error_bound + eta;
            Ok(Bracket::around(u, e, e, meaning))
        }
        BoundaryModel::LeadingOrder { safety } => {
            let sol = solver.solve(|_, _| 0.0, Some((y, 1.0)))?;
            let u = sol.value(x).expect("interior");
            let ay = kernel.a_eval(y);
            let mut g_max: f64 = 0.0;
            for &z in &exits {
                g_max = g_max.max(ctx.g_hat(z, y)?);
            }
            let e = sol.error_bound;
            Ok(Bracket::around(u, e, e + safety * ay * ay * g_max, meaning))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::a_real;
    use std::f64::consts::PI;

    fn ctx() -> HatKernelContext {
        HatKernelContext::with_window(128).unwrap()
    }

    fn single(s: Site) -> SiteSet {
        SiteSet::singleton(s)
    }

    #[test]
    fn bracket_arithmetic() {
        let a = Bracket::new(0.2, 0.3, "a");
        let b = Bracket::new(0.25, 0.5, "b");
        assert!(a.overlaps(&b));
        assert!((a.add(&b).width() - 0.35).abs() < 1e-15);
        let q = Bracket::quotient(&a, &b, "q");
        assert!((q.lower - 0.4).abs() < 1e-15 && (q.upper - 1.2).abs() < 1e-15);
        assert!(!Bracket::new(0.0, 0.1, "").overlaps(&Bracket::new(0.2, 0.3, "")));
    }

    #[test]
    fn domain_validation() {
        let a = ("a".to_string(), single(Site::new(1, 0)));
        let b = ("b".to_string(), SiteSet::new([Site::new(1, 0), Site::new(2, 0)]).unwrap());
        assert!(TruncatedDomain::new(10.0, vec![], vec![a.clone(), b]).is_err());
        assert!(TruncatedDomain::new(10.0, vec![Site::new(1, 0)], vec![a.clone()]).is_err());
        let far = ("f".to_string(), single(Site::new(20, 0)));
        assert!(TruncatedDomain::new(10.0, vec![], vec![far]).is_err());
        let dom = TruncatedDomain::hat(10.0, vec![a]).unwrap();
        assert_eq!(dom.classify(Site::ORIGIN), SiteKind::Forbidden);
        assert_eq!(dom.classify(Site::new(1, 0)), SiteKind::Absorbing(0));
        assert_eq!(dom.classify(Site::new(11, 0)), SiteKind::Exit);
        assert_eq!(dom.classify(Site::new(7, 7)), SiteKind::Interior);
        let srw = TruncatedDomain::new(10.0, vec![], vec![]).unwrap();
        let k = KernelTable::new(16).unwrap();
        assert!(DomainSolver::new(Chain::Hat, srw, &k, SolverConfig::default()).is_err());
    }

    #[test]
    fn partition_from_absorbing_start() {
        let c = ctx();
        let dom = TruncatedDomain::hat(20.0, vec![("t".into(), single(Site::new(2, 0)))]).unwrap();
        let p = hit_partition(Chain::Hat, &dom, Site::new(2, 0), c.kernel(), SolverConfig::default()).unwrap();
        assert_eq!(p["t"], 1.0);
        assert_eq!(p[EXIT_LABEL], 0.0);
    }

    #[test]
    fn srw_exit_before_origin_matches_leading_order() {
        let c = ctx();
        let dom = TruncatedDomain::new(100.0, vec![], vec![("origin".into(), single(Site::ORIGIN))]).unwrap();
        let p = hit_partition(Chain::Srw, &dom, Site::new(1, 0), c.kernel(), SolverConfig::default()).unwrap();
        assert!((p["origin"] + p[EXIT_LABEL] - 1.0).abs() < 1e-9);
        let lead = c.srw_exit_before_origin(Site::new(1, 0), Site::ORIGIN, 100.0).unwrap();
        assert!((p[EXIT_LABEL] - lead.value).abs() <= lead.error_scale);
        assert!((p[EXIT_LABEL] - 1.0 / a_real(100.0).unwrap()).abs() < 0.01);
    }

    #[test]
    fn symmetric_targets_split_evenly() {
        let c = ctx();
        let dom = TruncatedDomain::hat(
            40.0,
            vec![
                ("e".into(), single(Site::new(5, 0))),
                ("w".into(), single(Site::new(-5, 0))),
            ],
        )
        .unwrap();
        let p = hit_partition(Chain::Hat, &dom, Site::new(0, 5), c.kernel(), SolverConfig::default()).unwrap();
        assert!((p["e"] - p["w"]).abs() < 1e-9);
        let total: f64 = p.values().sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn srw_green_matches_kernel_identity() {
        // G(x, y) = E_x a(S_exit - y) - a(x - y) on B(R) minus the origin
        let c = HatKernelContext::with_window(256).unwrap();
        let k = c.kernel();
        let (x, y) = (Site::new(3, 0), Site::new(5, 1));
        let dom = TruncatedDomain::new(100.0, vec![], vec![("origin".into(), single(Site::ORIGIN))]).unwrap();
        let g = green_truncated(Chain::Srw, &dom, x, y, k, SolverConfig::default()).unwrap();
        let solver = DomainSolver::new(Chain::Srw, dom, k, SolverConfig::default()).unwrap();
        let ea = solver.solve(|z, _| k.a_eval(z - y), None).unwrap();
        let identity = ea.value(x).unwrap() - k.a_eval(x - y);
        assert!((g.value(x).unwrap() - identity).abs() < 1e-8);
    }

    #[test]
    fn hat_green_truncation_bounds() {
        let c = ctx();
        let x = Site::new(1, 0);
        let dom = TruncatedDomain::hat(200.0, vec![]).unwrap();
        let g = green_truncated(Chain::Hat, &dom, x, x, c.kernel(), SolverConfig::default()).unwrap();
        let v = g.value(x).unwrap();
        assert!(v <= c.green_hat(x, x).unwrap());
        assert!(v >= 2.0 - 4.0 / a_real(200.0).unwrap());
        let far = Site::new(199, 0);
        assert!(g.value(far).unwrap() < 0.1);
    }

    #[test]
    fn doob_transform_links_green_functions() {
        let c = ctx();
        let k = c.kernel();
        let (x, y) = (Site::new(4, -3), Site::new(2, 2));
        let hat = TruncatedDomain::hat(100.0, vec![]).unwrap();
        let srw = TruncatedDomain::new(100.0, vec![], vec![("origin".into(), single(Site::ORIGIN))]).unwrap();
        let gh = green_truncated(Chain::Hat, &hat, x, y, k, SolverConfig::default()).unwrap();
        let gs = green_truncated(Chain::Srw, &srw, x, y, k, SolverConfig::default()).unwrap();
        let ratio = k.a_eval(x) * gh.value(x).unwrap() / (k.a_eval(y) * gs.value(x).unwrap());
        assert!((ratio - 1.0).abs() < 1e-2);
        assert!((ratio - 1.0).abs() < 1e-9);
    }

    #[test]
    fn singleton_brackets_contain_closed_forms() {
        let c = ctx();
        let cfg = BracketConfig::default();
        let y = Site::new(1, 0);
        let b = bracket_infinite(&c, Quantity::Hit, Site::new(5, 0), &single(y), &cfg).unwrap();
        assert!(b.contains(c.hit_prob_hat(Site::new(5, 0), y).unwrap()), "{b}");
        assert!(b.width() <= 1e-3);
        let e = bracket_infinite(&c, Quantity::Escape { y }, y, &single(y), &cfg).unwrap();
        assert!(e.contains(0.5), "{e}");
    }

    #[test]
    fn leading_order_bracket_contains_and_narrows() {
        let c = HatKernelContext::with_window(256).unwrap();
        let y = Site::new(1, 0);
        let x = Site::new(5, 0);
        let exact = c.hit_prob_hat(x, y).unwrap();
        let model = BoundaryModel::LeadingOrder { safety: 2.0 };
        let at = |r: f64| {
            SetSolution::solve(&c, &single(y), r, model, SolverConfig::default(), false)
                .unwrap()
                .hit(x)
                .unwrap()
        };
        let small = at(8.0);
        // a(R) doubles between these radii
        let big_r = ((2.0 * a_real(8.0).unwrap() - crate::kernel::gamma_prime()) * PI / 2.0).exp();
        let big = at(big_r.round());
        assert!(small.contains(exact) && big.contains(exact));
        let ratio = big.width() / small.width();
        assert!(ratio > 0.5 / 1.5 && ratio < 0.5 * 1.5, "width ratio {ratio}");
    }

    #[test]
    fn leading_order_budget_error_carries_best_bracket() {
        let c = ctx();
        let cfg = BracketConfig {
            radius: 16.0,
            max_radius: 64.0,
            model: BoundaryModel::LeadingOrder { safety: 2.0 },
            ..BracketConfig::default()
        };
        match bracket_infinite(&c, Quantity::Hit, Site::new(5, 0), &single(Site::new(1, 0)), &cfg) {
            Err(Error::BracketBudget { best, width, .. }) => {
                assert!(best.width() == width && width > 1e-3);
            }
            other => panic!("expected budget error, got {other:?}"),
        }
    }

    #[test]
    fn truncated_hit_is_monotone_in_radius() {
        let c = ctx();
        let set = SiteSet::new([Site::new(2, 0), Site::new(2, 1)]).unwrap();
        let x = Site::new(-6, 3);
        let model = BoundaryModel::LeadingOrder { safety: 2.0 };
        let mut last = 0.0;
        for r in [16.0, 32.0, 64.0, 128.0] {
            let s = SetSolution::solve(&c, &set, r, model, SolverConfig::default(), false).unwrap();
            let lo = s.hit(x).unwrap().lower;
            assert!(lo >= last - 1e-9);
            last = lo;
        }
    }

    #[test]
    fn entrance_measure_singleton_and_symmetry() {
        let c = ctx();
        let cfg = BracketConfig::default();
        let m = entrance_measure(&c, Site::new(7, 3), &single(Site::new(1, 1)), &cfg).unwrap();
        assert_eq!(m.conditional[0], Bracket::point(1.0, "conditional entrance probability"));
        let pair = SiteSet::new([Site::new(3, 0), Site::new(-3, 0)]).unwrap();
        let m = entrance_measure(&c, Site::new(0, 9), &pair, &cfg).unwrap();
        assert!(m.conditional[0].overlaps(&m.conditional[1]));
        let lo: f64 = m.conditional.iter().map(|b| b.lower).sum();
        let hi: f64 = m.conditional.iter().map(|b| b.upper).sum();
        assert!(lo <= 1.0 && hi >= 1.0);
    }

    #[test]
    fn green_brackets_contain_closed_form() {
        let c = ctx();
        for model in [BoundaryModel::Representation, BoundaryModel::LeadingOrder { safety: 2.0 }] {
            for (x, y) in [
                (Site::new(1, 0), Site::new(1, 0)),
                (Site::new(1, 0), Site::new(-1, 0)),
                (Site::new(3, -4), Site::new(0, 2)),
            ] {
                let b = green_bracket_at(&c, x, y, 32.0, model, SolverConfig::default()).unwrap();
                let exact = c.green_hat(x, y).unwrap();
                assert!(b.contains(exact), "{model:?} {x} {y} {b} vs {exact}");
            }
        }
    }
}
