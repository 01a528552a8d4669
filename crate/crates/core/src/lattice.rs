//! Integer-lattice geometry on Z^2: sites, finite site sets, discrete balls
//! and their boundaries.
//!
//! Every membership test works on exact integer squared norms, so set
//! enumeration is bit-reproducible across platforms.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::{Add, Neg, Sub};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest coordinate magnitude supported anywhere in the crate.
pub const MAX_COORD: i64 = 1 << 20;

/// Default cap on the number of sites a ball enumeration may produce.
pub const DEFAULT_SITE_BUDGET: usize = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Site {
    pub x1: i64,
    pub x2: i64,
}

impl Site {
    pub const ORIGIN: Site = Site { x1: 0, x2: 0 };

    pub const fn new(x1: i64, x2: i64) -> Self {
        Site { x1, x2 }
    }

    pub fn norm2(self) -> i64 {
        self.x1 * self.x1 + self.x2 * self.x2
    }

    /// Euclidean norm, correctly rounded from the exact squared norm.
    pub fn norm(self) -> f64 {
        (self.norm2() as f64).sqrt()
    }

    pub fn norm_inf(self) -> i64 {
        self.x1.abs().max(self.x2.abs())
    }

    pub fn is_origin(self) -> bool {
        self.x1 == 0 && self.x2 == 0
    }

    pub fn dist(self, other: Site) -> f64 {
        (self - other).norm()
    }

    /// Nearest neighbours in the fixed order east, north, west, south.
    pub fn neighbors(self) -> [Site; 4] {
        let Site { x1, x2 } = self;
        [
            Site::new(x1 + 1, x2),
            Site::new(x1, x2 + 1),
            Site::new(x1 - 1, x2),
            Site::new(x1, x2 - 1),
        ]
    }

    pub fn is_adjacent(self, other: Site) -> bool {
        (self.x1 - other.x1).abs() + (self.x2 - other.x2).abs() == 1
    }

    /// Image under the `k`-th element (0..8) of the dihedral group of the square.
    pub fn dihedral(self, k: u8) -> Site {
        let Site { x1, x2 } = self;
        match k % 8 {
            0 => Site::new(x1, x2),
            1 => Site::new(-x2, x1),
            2 => Site::new(-x1, -x2),
            3 => Site::new(x2, -x1),
            4 => Site::new(x2, x1),
            5 => Site::new(-x1, x2),
            6 => Site::new(-x2, -x1),
            _ => Site::new(x1, -x2),
        }
    }

    /// Representative in the octant `0 <= x2 <= x1`.
    pub fn octant_rep(self) -> Site {
        let (a, b) = (self.x1.abs(), self.x2.abs());
        if a >= b {
            Site::new(a, b)
        } else {
            Site::new(b, a)
        }
    }

    /// Index 0..8 of the angular octant containing the site, counted
    /// counter-clockwise from the positive first axis.
    pub fn angular_octant(self) -> usize {
        let angle = (self.x2 as f64).atan2(self.x1 as f64);
        let turns = angle.rem_euclid(std::f64::consts::TAU) / std::f64::consts::FRAC_PI_4;
        (turns.floor() as usize).min(7)
    }
}

impl Add for Site {
    type Output = Site;
    fn add(self, rhs: Site) -> Site {
        Site::new(self.x1 + rhs.x1, self.x2 + rhs.x2)
    }
}

impl Sub for Site {
    type Output = Site;
    fn sub(self, rhs: Site) -> Site {
        Site::new(self.x1 - rhs.x1, self.x2 - rhs.x2)
    }
}

impl Neg for Site {
    type Output = Site;
    fn neg(self) -> Site {
        Site::new(-self.x1, -self.x2)
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x1, self.x2)
    }
}

impl FromStr for Site {
    type Err = Error;

    /// Accepts `x1,x2` or `x1 x2`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|p| !p.is_empty())
            .collect();
        let bad = || Error::Parse {
            line: 0,
            msg: format!("expected two integer coordinates, got {s:?}"),
        };
        if parts.len() != 2 {
            return Err(bad());
        }
        let x1 = parts[0].parse::<i64>().map_err(|_| bad())?;
        let x2 = parts[1].parse::<i64>().map_err(|_| bad())?;
        if x1.abs() > MAX_COORD || x2.abs() > MAX_COORD {
            return Err(bad());
        }
        Ok(Site::new(x1, x2))
    }
}

/// A nonempty finite set of distinct sites, stored in lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Site>", into = "Vec<Site>")]
pub struct SiteSet {
    sites: Vec<Site>,
    diam2: i64,
}

impl SiteSet {
    pub fn new(sites: impl IntoIterator<Item = Site>) -> Result<Self> {
        let mut sites: Vec<Site> = sites.into_iter().collect();
        sites.sort_unstable();
        sites.dedup();
        if sites.is_empty() {
            return Err(Error::EmptySet);
        }
        let mut diam2 = 0;
        for (i, a) in sites.iter().enumerate() {
            for b in &sites[i + 1..] {
                diam2 = diam2.max((*a - *b).norm2());
            }
        }
        Ok(SiteSet { sites, diam2 })
    }

    pub fn singleton(site: Site) -> Self {
        SiteSet {
            sites: vec![site],
            diam2: 0,
        }
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn iter(&self) -> impl Iterator<Item = Site> + '_ {
        self.sites.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, site: Site) -> bool {
        self.sites.binary_search(&site).is_ok()
    }

    pub fn index_of(&self, site: Site) -> Option<usize> {
        self.sites.binary_search(&site).ok()
    }

    pub fn diam(&self) -> f64 {
        (self.diam2 as f64).sqrt()
    }

    pub fn max_norm(&self) -> f64 {
        self.sites.iter().map(|s| s.norm()).fold(0.0, f64::max)
    }

    pub fn contains_origin(&self) -> bool {
        self.contains(Site::ORIGIN)
    }

    /// Rejects sets containing the origin, which is not a state of the
    /// conditioned walk.
    pub fn require_no_origin(&self) -> Result<()> {
        if self.contains_origin() {
            Err(Error::Precondition("target set contains the origin".into()))
        } else {
            Ok(())
        }
    }

    pub fn with(&self, site: Site) -> SiteSet {
        SiteSet::new(self.sites.iter().copied().chain(std::iter::once(site)))
            .expect("nonempty")
    }

    pub fn map(&self, f: impl Fn(Site) -> Site) -> SiteSet {
        SiteSet::new(self.sites.iter().map(|s| f(*s))).expect("nonempty")
    }

    /// Parses the `x1 x2` per line text format; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut sites = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let site = line.parse::<Site>().map_err(|_| Error::Parse {
                line: i + 1,
                msg: format!("expected `x1 x2`, got {line:?}"),
            })?;
            sites.push(site);
        }
        SiteSet::new(sites)
    }

    pub fn to_text(&self) -> String {
        self.sites
            .iter()
            .map(|s| format!("{} {}\n", s.x1, s.x2))
            .collect()
    }
}

impl TryFrom<Vec<Site>> for SiteSet {
    type Error = Error;
    fn try_from(v: Vec<Site>) -> Result<Self> {
        SiteSet::new(v)
    }
}

impl From<SiteSet> for Vec<Site> {
    fn from(s: SiteSet) -> Self {
        s.sites
    }
}

/// Closed Euclidean disk `{y : |y - center| <= radius}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Site,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Site, radius: f64) -> Result<Self> {
        if !(radius >= 0.0) || radius > MAX_COORD as f64 {
            return Err(Error::Precondition(format!("invalid radius {radius}")));
        }
        Ok(Ball { center, radius })
    }

    pub fn centered(radius: f64) -> Result<Self> {
        Ball::new(Site::ORIGIN, radius)
    }

    /// Largest integer `k` with `k <= radius^2`.
    pub fn radius2_floor(&self) -> i64 {
        let r2 = self.radius * self.radius;
        let mut k = r2.floor() as i64;
        while (k as f64) > r2 {
            k -= 1;
        }
        while ((k + 1) as f64) <= r2 {
            k += 1;
        }
        k
    }

    pub fn contains(&self, y: Site) -> bool {
        (y - self.center).norm2() <= self.radius2_floor()
    }

    pub fn bounding_half_width(&self) -> i64 {
        self.radius.floor() as i64
    }
}

pub fn dist(x: Site, set: &SiteSet) -> f64 {
    let d2 = set.iter().map(|y| (x - y).norm2()).min().expect("nonempty");
    (d2 as f64).sqrt()
}

pub fn diam(set: &SiteSet) -> f64 {
    set.diam()
}

/// Sites of `set` with at least one neighbour outside it.
pub fn boundary(set: &SiteSet) -> SiteSet {
    let inner = set
        .iter()
        .filter(|s| s.neighbors().iter().any(|n| !set.contains(*n)));
    SiteSet::new(inner).expect("a finite set always has boundary sites")
}

/// Sites outside `set` adjacent to it.
pub fn external_boundary(set: &SiteSet) -> SiteSet {
    let mut out = BTreeSet::new();
    for s in set.iter() {
        for n in s.neighbors() {
            if !set.contains(n) {
                out.insert(n);
            }
        }
    }
    SiteSet::new(out).expect("a finite set always has exterior neighbours")
}

pub fn enumerate_ball(ball: &Ball, budget: usize) -> Result<SiteSet> {
    let h = ball.bounding_half_width();
    let estimate = ((2 * h + 1) * (2 * h + 1)) as usize;
    if estimate > budget.saturating_mul(2) {
        return Err(Error::BudgetExceeded {
            what: "ball enumeration",
            needed: estimate,
            limit: budget,
        });
    }
    let r2 = ball.radius2_floor();
    let mut sites = Vec::new();
    for d1 in -h..=h {
        for d2 in -h..=h {
            if d1 * d1 + d2 * d2 <= r2 {
                sites.push(ball.center + Site::new(d1, d2));
            }
        }
    }
    if sites.len() > budget {
        return Err(Error::BudgetExceeded {
            what: "ball enumeration",
            needed: sites.len(),
            limit: budget,
        });
    }
    SiteSet::new(sites)
}

/// Lattice site nearest to a real point; ties broken towards the
/// lexicographically smaller site.
pub fn nearest_site(p1: f64, p2: f64) -> Site {
    let cands = [
        (p1.floor() as i64, p2.floor() as i64),
        (p1.floor() as i64, p2.ceil() as i64),
        (p1.ceil() as i64, p2.floor() as i64),
        (p1.ceil() as i64, p2.ceil() as i64),
    ];
    let mut best: Option<(f64, Site)> = None;
    for (a, b) in cands {
        let s = Site::new(a, b);
        let d = (a as f64 - p1).powi(2) + (b as f64 - p2).powi(2);
        match best {
            Some((bd, bs)) if d > bd || (d == bd && s >= bs) => {}
            _ => best = Some((d, s)),
        }
    }
    best.expect("four candidates").1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(v: &[(i64, i64)]) -> SiteSet {
        SiteSet::new(v.iter().map(|&(a, b)| Site::new(a, b))).unwrap()
    }

    #[test]
    fn dist_examples() {
        assert_eq!(dist(Site::new(0, 0), &set(&[(3, 4)])), 5.0);
        assert_eq!(dist(Site::new(1, 0), &set(&[(1, 0), (5, 5)])), 0.0);
        let d = dist(Site::new(0, 0), &set(&[(1, 1), (2, 0)]));
        assert_eq!(d, 2f64.sqrt());
    }

    #[test]
    fn diam_examples() {
        assert_eq!(set(&[(7, 7)]).diam(), 0.0);
        assert_eq!(set(&[(0, 1), (0, 3)]).diam(), 2.0);
        assert_eq!(set(&[(3, 0), (4, 0), (3, 1)]).diam(), 2f64.sqrt());
    }

    #[test]
    fn empty_set_is_an_error() {
        assert!(matches!(SiteSet::new(Vec::new()), Err(Error::EmptySet)));
        assert!(matches!(SiteSet::parse("# nothing\n"), Err(Error::EmptySet)));
    }

    #[test]
    fn singleton_boundaries() {
        let a = set(&[(1, 0)]);
        assert_eq!(boundary(&a), a);
        assert_eq!(
            external_boundary(&a),
            set(&[(0, 0), (2, 0), (1, 1), (1, -1)])
        );
    }

    #[test]
    fn unit_ball_boundaries_by_brute_force() {
        let a = enumerate_ball(&Ball::centered(1.0).unwrap(), DEFAULT_SITE_BUDGET).unwrap();
        assert_eq!(a.len(), 5);
        assert_eq!(boundary(&a), set(&[(1, 0), (0, 1), (-1, 0), (0, -1)]));
        // brute-force scan of a box for complement sites adjacent to the ball
        let mut expected = Vec::new();
        for x1 in -4..=4 {
            for x2 in -4..=4 {
                let s = Site::new(x1, x2);
                if !a.contains(s) && s.neighbors().iter().any(|n| a.contains(*n)) {
                    expected.push(s);
                }
            }
        }
        let ext = external_boundary(&a);
        assert_eq!(ext, SiteSet::new(expected).unwrap());
        assert_eq!(ext.len(), 8);
        assert!(ext.iter().all(|s| s.norm2() == 4 || s.norm2() == 2));
    }

    #[test]
    fn square_boundary_excludes_center() {
        let sq = SiteSet::new((-1..=1).flat_map(|a| (-1..=1).map(move |b| Site::new(a, b)))).unwrap();
        let b = boundary(&sq);
        assert_eq!(b.len(), 8);
        assert!(!b.contains(Site::ORIGIN));
    }

    #[test]
    fn ball_enumeration() {
        let b = |c: Site, r: f64| enumerate_ball(&Ball::new(c, r).unwrap(), DEFAULT_SITE_BUDGET).unwrap();
        assert_eq!(b(Site::ORIGIN, 1.0).len(), 5);
        assert_eq!(b(Site::ORIGIN, 2.0).len(), 13);
        assert_eq!(b(Site::new(5, 5), 0.0), set(&[(5, 5)]));
        let brute = |r: f64| {
            let h = r as i64 + 1;
            (-h..=h)
                .flat_map(|a| (-h..=h).map(move |b| (a, b)))
                .filter(|&(a, b)| ((a * a + b * b) as f64).sqrt() <= r)
                .count()
        };
        for r in [10.0, 100.0] {
            let n = b(Site::ORIGIN, r).len();
            assert_eq!(n, brute(r));
            let area = std::f64::consts::PI * r * r;
            assert!((n as f64 / area - 1.0).abs() < 4.0 / r);
        }
    }

    #[test]
    fn ball_budget() {
        let ball = Ball::centered(100.0).unwrap();
        assert!(matches!(
            enumerate_ball(&ball, 1000),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn text_format() {
        let s = SiteSet::parse("# target\n3 0\n4 0 # east\n\n3 1\n").unwrap();
        assert_eq!(s, set(&[(3, 0), (4, 0), (3, 1)]));
        assert_eq!(SiteSet::parse(&s.to_text()).unwrap(), s);
        assert!(matches!(
            SiteSet::parse("1 2\nfoo\n"),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn nearest_site_rounding() {
        assert_eq!(nearest_site(63.7, 0.2), Site::new(64, 0));
        assert_eq!(nearest_site(-0.5, 0.0), Site::new(-1, 0));
    }

    #[test]
    fn angular_octants() {
        assert_eq!(Site::new(5, 1).angular_octant(), 0);
        assert_eq!(Site::new(1, 5).angular_octant(), 1);
        assert_eq!(Site::new(-1, 5).angular_octant(), 2);
        assert_eq!(Site::new(5, -1).angular_octant(), 7);
    }
}
