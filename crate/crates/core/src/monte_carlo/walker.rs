//! Exact path sampling with box jumps.
//!
//! Away from every site that matters, a run of single steps is replaced by
//! one draw from the simple random walk's exit law of a square box centred
//! at the current site. For the conditioned walk the exit point is accepted
//! with probability `a(w) / bound`, which reweights the box exit law by the
//! h-transform; the box never contains the origin, so the law is exact.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, WeightedAliasIndex};

use crate::error::{Error, Result};
use crate::exact_solver::laplacian::Laplacian;
use crate::exact_solver::Chain;
use crate::kernel::KernelTable;
use crate::lattice::Site;

/// Largest box half-width used for jumps unless configured otherwise.
pub const DEFAULT_MAX_BOX: i64 = 256;

struct BoxLevel {
    half: i64,
    offsets: Vec<Site>,
    alias: WeightedAliasIndex<f64>,
}

/// Exit laws of the simple random walk from the centre of `[-L, L]^2` for
/// `L = 2, 4, ..., max_half`.
pub struct BoxTables {
    levels: Vec<BoxLevel>,
}

impl BoxTables {
    pub fn new(max_half: i64) -> Result<Self> {
        let mut levels = Vec::new();
        let mut half = 2;
        while half <= max_half {
            levels.push(exit_law(half)?);
            half *= 2;
        }
        Ok(BoxTables { levels })
    }

    /// Process-wide cache keyed by `max_half`.
    pub fn shared(max_half: i64) -> Result<Arc<BoxTables>> {
        static CACHE: OnceLock<Mutex<HashMap<i64, Arc<BoxTables>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(t) = cache.lock().expect("cache lock").get(&max_half) {
            return Ok(t.clone());
        }
        let t = Arc::new(BoxTables::new(max_half)?);
        cache.lock().expect("cache lock").insert(max_half, t.clone());
        Ok(t)
    }

    /// Exit probabilities of the box with the given half-width, in the
    /// order of [`Self::offsets`].
    pub fn exit_probabilities(&self, half: i64) -> Option<(Vec<Site>, Vec<f64>)> {
        let lvl = self.levels.iter().find(|l| l.half == half)?;
        let h = exit_law_weights(half).ok()?;
        Some((lvl.offsets.clone(), h))
    }

    /// Largest tabulated half-width `L` with `L sqrt(2) < clearance`.
    fn level_for(&self, clearance: f64) -> Option<&BoxLevel> {
        self.levels
            .iter()
            .rev()
            .find(|l| (l.half as f64) * std::f64::consts::SQRT_2 < clearance)
    }
}

fn exit_law_weights(half: i64) -> Result<Vec<f64>> {
    let inner = half - 1;
    let side = 2 * inner + 1;
    let mut sites = Vec::with_capacity((side * side) as usize);
    for x1 in -inner..=inner {
        for x2 in -inner..=inner {
            sites.push(Site::new(x1, x2));
        }
    }
    let lookup = |s: Site| {
        if s.x1.abs() <= inner && s.x2.abs() <= inner {
            Some(((s.x1 + inner) * side + s.x2 + inner) as usize)
        } else {
            None
        }
    };
    let centre = lookup(Site::ORIGIN).expect("centre");
    let lap = Laplacian::new(sites, lookup);
    let mut f = vec![0.0; lap.len()];
    f[centre] = 4.0;
    let omega = 2.0 / (1.0 + 2.5 / (half as f64 + 1.0));
    let green = lap.solve(&f, 1e-14, 100_000, omega)?.v;
    Ok(boundary_offsets(half)
        .iter()
        .map(|&w| {
            let inside = Site::new(w.x1.clamp(-inner, inner), w.x2.clamp(-inner, inner));
            if (w - inside).norm2() == 1 {
                green[lookup(inside).expect("inner")] / 4.0
            } else {
                0.0
            }
        })
        .collect())
}

fn boundary_offsets(half: i64) -> Vec<Site> {
    let mut out = Vec::new();
    for x1 in -half..=half {
        for x2 in -half..=half {
            if x1.abs() == half || x2.abs() == half {
                out.push(Site::new(x1, x2));
            }
        }
    }
    out
}

fn exit_law(half: i64) -> Result<BoxLevel> {
    let weights = exit_law_weights(half)?;
    let offsets = boundary_offsets(half);
    let alias = WeightedAliasIndex::new(weights)
        .map_err(|e| Error::Precondition(format!("box exit law: {e}")))?;
    Ok(BoxLevel {
        half,
        offsets,
        alias,
    })
}

/// Sites whose neighbourhood must be walked step by step.
#[derive(Debug, Clone, Default)]
pub struct Geometry {
    /// Stop once `|s - centre| > radius`.
    pub outer: Option<(Site, f64)>,
    /// Stop once `|s - centre| <= radius`.
    pub disks: Vec<(Site, f64)>,
    /// Sites that are watched but do not stop the walk.
    pub watched: Vec<Site>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stop {
    Exit(Site),
    Disk(usize, Site),
    StepCap(Site),
}

impl Geometry {
    fn stop(&self, s: Site) -> Option<Stop> {
        if let Some((c, r)) = self.outer {
            if s.dist(c) > r {
                return Some(Stop::Exit(s));
            }
        }
        for (i, &(c, r)) in self.disks.iter().enumerate() {
            if s.dist(c) <= r {
                return Some(Stop::Disk(i, s));
            }
        }
        None
    }

    /// Euclidean room around `s` free of the origin, watched sites, disks
    /// and the outer boundary.
    fn clearance(&self, s: Site) -> f64 {
        let mut c = s.norm();
        if let Some((centre, r)) = self.outer {
            c = c.min(r - s.dist(centre));
        }
        for &(centre, r) in &self.disks {
            c = c.min(s.dist(centre) - r);
        }
        for &w in &self.watched {
            c = c.min(s.dist(w));
        }
        c
    }
}

pub struct Walker<'a> {
    pub chain: Chain,
    pub kernel: &'a KernelTable,
    pub tables: Option<&'a BoxTables>,
    pub max_steps: u64,
}

impl Walker<'_> {
    /// One transition of the chain from `x`.
    pub fn step(&self, x: Site, rng: &mut ChaCha8Rng) -> Site {
        let nb = x.neighbors();
        let u: f64 = rng.gen();
        match self.chain {
            Chain::Srw => nb[((u * 4.0) as usize).min(3)],
            Chain::Hat => {
                let w = nb.map(|z| self.kernel.a_eval(z));
                let total: f64 = w.iter().sum();
                let target = u * total;
                let mut cum = 0.0;
                let mut last = 0;
                for k in 0..4 {
                    if w[k] > 0.0 {
                        cum += w[k];
                        last = k;
                        if target < cum {
                            return nb[k];
                        }
                    }
                }
                nb[last]
            }
        }
    }

    fn jump(&self, x: Site, level: &BoxLevel, rng: &mut ChaCha8Rng) -> Site {
        match self.chain {
            Chain::Srw => x + level.offsets[level.alias.sample(rng)],
            Chain::Hat => {
                let bound = self
                    .kernel
                    .a_upper_within(x.norm() + level.half as f64 * std::f64::consts::SQRT_2 + 1.0);
                loop {
                    let w = x + level.offsets[level.alias.sample(rng)];
                    if rng.gen::<f64>() * bound < self.kernel.a_eval(w) {
                        return w;
                    }
                }
            }
        }
    }

    /// Runs from `start` until a stop, calling `visit` at every site the
    /// path lands on after time zero.
    pub fn run(
        &self,
        start: Site,
        geom: &Geometry,
        rng: &mut ChaCha8Rng,
        mut visit: impl FnMut(Site),
    ) -> Stop {
        if let Some(s) = geom.stop(start) {
            return s;
        }
        let mut x = start;
        let mut ops = 0u64;
        loop {
            if ops >= self.max_steps {
                return Stop::StepCap(x);
            }
            ops += 1;
            let level = self.tables.and_then(|t| t.level_for(geom.clearance(x)));
            x = match level {
                Some(l) => self.jump(x, l, rng),
                None => self.step(x, rng),
            };
            assert!(
                self.chain == Chain::Srw || !x.is_origin(),
                "conditioned walk reached the origin"
            );
            visit(x);
            if let Some(s) = geom.stop(x) {
                return s;
            }
        }
    }
}
