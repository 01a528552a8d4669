//! Slow, independent evaluations of `a(x)` used to validate [`super::KernelTable`].
//!
//! Neither route shares code with the table recursion: the series works from
//! exact return probabilities, the integral from the lattice Fourier
//! representation reduced to one dimension.

use std::f64::consts::PI;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Site;

/// Largest number of series terms accepted by [`a_series`].
pub const MAX_SERIES_TERMS: u64 = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesValue {
    pub partial_sum: f64,
    pub tail_bound: f64,
}

/// Partial sum of `sum_{k<K} (P_0[S_k = 0] - P_x[S_k = 0])` with a tail bound.
///
/// The planar walk rotated by 45 degrees is a pair of independent lazy-free
/// one-dimensional walks, so `P_0[S_k = x] = b_k(x1+x2) b_k(x1-x2)` with
/// `b_k(m) = C(k, (k+m)/2) / 2^k`. The summands decay like `|x|^2 / k^2`;
/// the tail is estimated from the increment between `K` and `2K` terms and
/// doubled.
pub fn a_series(x: Site, terms: u64) -> Result<SeriesValue> {
    if terms < 1 {
        return Err(Error::Precondition("a_series needs K >= 1".into()));
    }
    let k_even = terms + terms % 2;
    if 2 * k_even > MAX_SERIES_TERMS {
        return Err(Error::BudgetExceeded {
            what: "potential kernel series",
            needed: (2 * k_even) as usize,
            limit: MAX_SERIES_TERMS as usize,
        });
    }
    if x.is_origin() {
        return Ok(SeriesValue {
            partial_sum: 0.0,
            tail_bound: 0.0,
        });
    }
    let u = (x.x1 + x.x2).unsigned_abs();
    let v = (x.x1 - x.x2).unsigned_abs();

    let mut sum = Neumaier::default();
    let mut at_k = 0.0;
    // b_{2n}(0) and b_{2n+1}(1) = b_{2n+2}(0)
    let mut central_even = 1.0;
    for k in 0..2 * k_even {
        if k == k_even {
            at_k = sum.value();
        }
        let central = if k % 2 == 0 {
            central_even
        } else {
            central_even * k as f64 / (k + 1) as f64
        };
        let p0 = if k % 2 == 0 { central * central } else { 0.0 };
        let px = if (k + u) % 2 == 0 && u <= k && v <= k {
            let base = k % 2;
            binom_shift(k, base, u, central) * binom_shift(k, base, v, central)
        } else {
            0.0
        };
        sum.add(p0 - px);
        if k % 2 == 1 {
            central_even = central;
        }
    }
    let at_2k = sum.value();
    let kf = k_even as f64;
    let tail = 2.0 * (2.0 * (at_2k - at_k)).abs() + 10.0 / (kf * kf);
    Ok(SeriesValue {
        partial_sum: at_k,
        tail_bound: tail,
    })
}

/// `b_k(m)` from `b_k(base)` by the ratio `C(k, j+1) / C(k, j) = (k-j)/(j+1)`.
fn binom_shift(k: u64, base: u64, m: u64, b_base: f64) -> f64 {
    let mut val = b_base;
    let mut cur = base;
    while cur < m {
        let j = (k + cur) / 2;
        val *= (k - j) as f64 / (j + 1) as f64;
        cur += 2;
    }
    val
}

#[derive(Default)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// `a(x)` from the Fourier representation
/// `(2pi)^-2 int (1 - cos(x.t)) / (1 - (cos t1 + cos t2)/2) dt`
/// with the inner integral done in closed form:
///
/// `a(x) = (2/pi) int_0^pi (1 - cos(x1 t) e^{-|x2| s(t)}) / sinh s(t) dt`,
/// `cosh s(t) = 2 - cos t`.
pub fn a_integral(x: Site) -> Result<f64> {
    if x.is_origin() {
        return Ok(0.0);
    }
    // put the larger coordinate in the damped exponent; the integral is
    // symmetric under swapping coordinates
    let r = x.octant_rep();
    let (osc, damp) = (r.x2 as f64, r.x1 as f64);
    let integrand = |t: f64| {
        let half = (t / 2.0).sin();
        let w = 2f64.sqrt() * half * (3.0 - t.cos()).sqrt();
        let s = w.asinh();
        let decay = (-damp * s).exp();
        let num = -(-damp * s).exp_m1() + 2.0 * decay * (osc * t / 2.0).sin().powi(2);
        num / w
    };
    let mut panels = 8;
    let mut prev = gauss_legendre(&integrand, 0.0, PI, panels);
    loop {
        panels *= 2;
        let cur = gauss_legendre(&integrand, 0.0, PI, panels);
        let diff = (cur - prev).abs();
        if diff < 1e-14 {
            return Ok(2.0 / PI * cur);
        }
        if panels > 1 << 14 {
            return Err(Error::Quadrature { achieved: diff });
        }
        prev = cur;
    }
}

const GL_ORDER: usize = 20;

fn gl_rule() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = GL_ORDER;
        let mut rule = Vec::with_capacity(n);
        for i in 0..n {
            let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, z);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
                let dz = p1 / dp;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            rule.push((z, 2.0 / ((1.0 - z * z) * dp * dp)));
        }
        rule
    })
}

fn gauss_legendre(f: &impl Fn(f64) -> f64, lo: f64, hi: f64, panels: usize) -> f64 {
    let h = (hi - lo) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let a = lo + p as f64 * h;
        let mid = a + h / 2.0;
        let mut s = 0.0;
        for &(z, w) in gl_rule() {
            s += w * f(mid + z * h / 2.0);
        }
        total += s * h / 2.0;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integral_oracle_values() {
        assert!((a_integral(Site::new(1, 0)).unwrap() - 1.0).abs() < 1e-10);
        assert!((a_integral(Site::new(0, 1)).unwrap() - 1.0).abs() < 1e-10);
        assert!((a_integral(Site::new(1, 1)).unwrap() - 4.0 / PI).abs() < 1e-10);
        let diag5 = 4.0 / PI * (1.0 + 1.0 / 3.0 + 0.2 + 1.0 / 7.0 + 1.0 / 9.0);
        assert!((a_integral(Site::new(5, 5)).unwrap() - diag5).abs() < 1e-10);
        assert_eq!(a_integral(Site::ORIGIN).unwrap(), 0.0);
    }

    #[test]
    fn series_oracle_values() {
        let s = a_series(Site::new(1, 0), 10_000).unwrap();
        assert!(s.tail_bound < 0.01);
        assert!((s.partial_sum - 1.0).abs() <= s.tail_bound);
        let s = a_series(Site::new(1, 1), 10_000).unwrap();
        assert!((s.partial_sum - 4.0 / PI).abs() <= s.tail_bound);
        let z = a_series(Site::ORIGIN, 123).unwrap();
        assert_eq!(z.partial_sum, 0.0);
    }

    #[test]
    fn series_budget() {
        assert!(matches!(
            a_series(Site::new(1, 0), MAX_SERIES_TERMS),
            Err(Error::BudgetExceeded { .. })
        ));
    }
}
