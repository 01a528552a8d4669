//! Closed-form quantities of the conditioned walk, all expressed through the
//! potential kernel: transition kernel, Green's function and its symmetrised
//! and martingale variants, return/hitting probabilities and the leading
//! order expansions used for truncation bounds.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{precondition, Error, Result};
use crate::kernel::{a_real, AsymptoticParams, KernelTable};
use crate::lattice::{dist, nearest_site, Site, SiteSet};

/// Leading-order value paired with the scale of its unquantified error term.
/// Callers must not treat `value` as exact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeadingOrder {
    pub value: f64,
    pub error_scale: f64,
}

#[derive(Debug, Clone)]
pub struct HatKernelContext {
    kernel: Arc<KernelTable>,
    pub asym: AsymptoticParams,
}

impl HatKernelContext {
    pub fn new(kernel: Arc<KernelTable>) -> Result<Self> {
        if kernel.radius() < 16 {
            return Err(precondition("kernel window must be at least 16"));
        }
        Ok(HatKernelContext {
            kernel,
            asym: AsymptoticParams::default(),
        })
    }

    /// Context over a freshly built table of the given window radius.
    pub fn with_window(radius: i64) -> Result<Self> {
        HatKernelContext::new(Arc::new(KernelTable::new(radius)?))
    }

    pub fn kernel(&self) -> &Arc<KernelTable> {
        &self.kernel
    }

    #[inline]
    pub fn a(&self, x: Site) -> f64 {
        self.kernel.a_eval(x)
    }

    fn nonzero(x: Site) -> Result<()> {
        if x.is_origin() {
            Err(Error::OriginNotState)
        } else {
            Ok(())
        }
    }

    pub fn p_hat(&self, x: Site, y: Site) -> Result<f64> {
        Self::nonzero(x)?;
        if !x.is_adjacent(y) {
            return Ok(0.0);
        }
        Ok(self.a(y) / (4.0 * self.a(x)))
    }

    /// Expected number of visits to `y` started from `x`, counting time zero.
    pub fn green_hat(&self, x: Site, y: Site) -> Result<f64> {
        Self::nonzero(x)?;
        Self::nonzero(y)?;
        let (ax, ay) = (self.a(x), self.a(y));
        Ok(ay / ax * (ax + ay - self.a(x - y)))
    }

    /// `green_hat(x, y) / a(y)^2`, symmetric in its arguments.
    pub fn g_hat(&self, x: Site, y: Site) -> Result<f64> {
        Self::nonzero(x)?;
        Self::nonzero(y)?;
        let (ax, ay) = (self.a(x), self.a(y));
        Ok((ax + ay - self.a(x - y)) / (ax * ay))
    }

    /// `1 + (a(y) - a(x - y)) / a(x)`; a martingale along the walk stopped at `y`.
    pub fn ell_hat(&self, x: Site, y: Site) -> Result<f64> {
        Self::nonzero(x)?;
        Self::nonzero(y)?;
        Ok(1.0 + (self.a(y) - self.a(x - y)) / self.a(x))
    }

    pub fn return_prob_hat(&self, x: Site) -> Result<f64> {
        Self::nonzero(x)?;
        Ok(1.0 - 1.0 / (2.0 * self.a(x)))
    }

    /// Probability of ever hitting `y` from `x != y`.
    pub fn hit_prob_hat(&self, x: Site, y: Site) -> Result<f64> {
        Self::nonzero(x)?;
        Self::nonzero(y)?;
        if x == y {
            return Err(Error::UseReturnProb);
        }
        let (ax, ay) = (self.a(x), self.a(y));
        Ok((ax + ay - self.a(x - y)) / (2.0 * ax))
    }

    /// Leading order of the probability that the walk from `x` never enters
    /// the ball `B(r)`.
    pub fn escape_ball_leading(&self, x: Site, r: f64) -> Result<LeadingOrder> {
        if !(r >= 1.0) || x.norm() < r + 1.0 {
            return Err(precondition(format!(
                "escape_ball_leading needs r >= 1 and |x| >= r + 1 (r = {r}, x = {x})"
            )));
        }
        let ax = self.a(x);
        Ok(LeadingOrder {
            value: (1.0 - a_real(r)? / ax).clamp(0.0, 1.0),
            error_scale: 1.0 / (r * ax),
        })
    }

    /// Leading order of the probability that the simple random walk from `x`
    /// reaches the boundary of `B(y, r)` before returning to the origin.
    pub fn srw_exit_before_origin(&self, x: Site, y: Site, r: f64) -> Result<LeadingOrder> {
        if x.is_origin() || !(r >= 1.0) || r < y.norm() || x.dist(y) > r {
            return Err(precondition(format!(
                "srw_exit_before_origin needs x != 0, x in B(y, r), r >= |y| (x = {x}, y = {y}, r = {r})"
            )));
        }
        Ok(LeadingOrder {
            value: (self.a(x) / a_real(r)?).clamp(0.0, 1.0),
            error_scale: (y.norm() + 1.0) / r,
        })
    }

    /// Far-field hitting probability `cap_hat(A) * g_hat(x, y0)` with the
    /// scale of its error term.
    pub fn hit_set_far(
        &self,
        x: Site,
        set: &SiteSet,
        y0: Site,
        cap_hat: f64,
    ) -> Result<LeadingOrder> {
        set.require_no_origin()?;
        if !set.contains(y0) {
            return Err(precondition(format!("reference site {y0} not in the target set")));
        }
        let d = dist(x, set);
        let diam = set.diam();
        if d <= 5.0 * diam || d == 0.0 {
            return Err(precondition(format!(
                "hit_set_far needs dist(x, A) > 5 diam(A) (dist = {d}, diam = {diam})"
            )));
        }
        let inner = y0.norm() + diam;
        let error_scale =
            cap_hat * diam / (d * (1.0 + x.norm().max(inner)).ln() * (1.0 + inner).ln());
        Ok(LeadingOrder {
            value: (cap_hat * self.g_hat(x, y0)?).clamp(0.0, 1.0),
            error_scale,
        })
    }
}

/// Extremes of an envelope ratio over a seeded random sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeFit {
    pub c_lower: f64,
    pub c_upper: f64,
    pub samples: usize,
}

impl EnvelopeFit {
    fn from_values(values: impl Iterator<Item = f64>) -> Self {
        let mut fit = EnvelopeFit {
            c_lower: f64::INFINITY,
            c_upper: 0.0,
            samples: 0,
        };
        for v in values {
            fit.c_lower = fit.c_lower.min(v);
            fit.c_upper = fit.c_upper.max(v);
            fit.samples += 1;
        }
        fit
    }
}

/// Non-origin site of norm at most `max_norm`, near log-uniform radius in
/// `[1, max_norm]` and uniform angle.
fn sample_site(rng: &mut ChaCha8Rng, max_norm: f64) -> Site {
    loop {
        let r = max_norm.powf(rng.gen::<f64>());
        let t = rng.gen::<f64>() * std::f64::consts::TAU;
        let s = nearest_site(r * t.cos(), r * t.sin());
        if !s.is_origin() && s.norm() <= max_norm {
            return s;
        }
    }
}

impl HatKernelContext {
    /// Range of `g_hat(x, y) ln(1 + |x| v |y|)` over `samples` random pairs
    /// with norms up to `max_norm`, stratified in turn into independent
    /// pairs, `y` near `x`, `y = x`, and `y` on the ray through `x`.
    pub fn green_envelope(&self, samples: usize, max_norm: f64, seed: u64) -> EnvelopeFit {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pairs: Vec<(Site, Site)> = (0..samples)
            .map(|i| {
                let x = sample_site(&mut rng, max_norm);
                let y = loop {
                    let y = match i % 4 {
                        0 => sample_site(&mut rng, max_norm),
                        1 => x + sample_site(&mut rng, x.norm().max(2.0)),
                        2 => x,
                        _ => {
                            let t = max_norm.powf(rng.gen::<f64>()) / x.norm();
                            nearest_site(x.x1 as f64 * t, x.x2 as f64 * t)
                        }
                    };
                    if !y.is_origin() && y.norm() <= max_norm {
                        break y;
                    }
                };
                (x, y)
            })
            .collect();
        EnvelopeFit::from_values(pairs.into_iter().map(|(x, y)| {
            let g = self.g_hat(x, y).expect("non-origin sample");
            g * (1.0 + x.norm().max(y.norm())).ln()
        }))
    }

    /// Range of the normalised increment
    /// `|g_hat(x,y) - g_hat(x,z)| |x-y| ln(1+|x| v |y| v |z|) ln(1+|y| v |z|) / |y-z|`
    /// over random triples with `|x-y| ^ |x-z| >= 5 |y-z|`.
    pub fn gradient_envelope(&self, samples: usize, max_norm: f64, seed: u64) -> EnvelopeFit {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut triples = Vec::with_capacity(samples);
        while triples.len() < samples {
            let y = sample_site(&mut rng, max_norm);
            let x = sample_site(&mut rng, max_norm);
            let step = sample_site(&mut rng, (max_norm / 5.0).max(2.0));
            let z = y + step;
            if z.is_origin() || z == y {
                continue;
            }
            let d = y.dist(z);
            if x.dist(y).min(x.dist(z)) < 5.0 * d {
                continue;
            }
            triples.push((x, y, z));
        }
        EnvelopeFit::from_values(triples.into_iter().map(|(x, y, z)| {
            let diff = (self.g_hat(x, y).unwrap() - self.g_hat(x, z).unwrap()).abs();
            let outer = x.norm().max(y.norm()).max(z.norm());
            let inner = y.norm().max(z.norm());
            diff * x.dist(y) * (1.0 + outer).ln() * (1.0 + inner).ln() / y.dist(z)
        }))
    }
}
