//! The potential kernel `a(x)` of the planar simple random walk.
//!
//! [`KernelTable`] holds exact values on the octant `0 <= x2 <= x1 <= N`.
//! The table is filled by the harmonicity recursion
//!
//! ```text
//! a(x1+1, x2) = 4 a(x1, x2) - a(x1-1, x2) - a(x1, x2+1) - a(x1, x2-1)
//! ```
//!
//! seeded with `a(0,0) = 0`, `a(1,0) = 1` and the diagonal values
//! `a(n,n) = (4/pi) (1 + 1/3 + ... + 1/(2n-1))`. The forward sweep amplifies
//! rounding errors by roughly `(3 + 2 sqrt 2)` per column, so it runs in
//! binary fixed point on big integers with enough guard bits that the final
//! rounding to `f64` is exact up to one ulp.

pub mod oracle;

use std::f64::consts::PI;

use num_bigint::BigInt;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Site;

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

pub const DEFAULT_WINDOW: i64 = 256;

/// Bound on `|x|^2 |a(x) - a_asym(x)|` used beyond the exact window. The true
/// leading coefficient is `1/(6 pi) ~ 0.0531`; tests check the table against it.
pub const ASYM_ERROR_COEFF: f64 = 0.06;

/// Upper bound on `a(x) - a_asym(x)` over all `x != 0` (attained near `(1,1)`).
pub const ASYM_EXCESS_MAX: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticParams {
    pub gamma: f64,
    pub gamma_prime: f64,
}

impl Default for AsymptoticParams {
    fn default() -> Self {
        AsymptoticParams {
            gamma: EULER_GAMMA,
            gamma_prime: gamma_prime(),
        }
    }
}

/// `(2 gamma + ln 8) / pi`.
pub fn gamma_prime() -> f64 {
    (2.0 * EULER_GAMMA + 8f64.ln()) / PI
}

/// `(2/pi) ln|x| + gamma'`.
pub fn a_asym(x: Site) -> Result<f64> {
    if x.is_origin() {
        return Err(Error::LogSingularity);
    }
    Ok(asym_unchecked(x))
}

fn asym_unchecked(x: Site) -> f64 {
    (1.0 / PI) * (x.norm2() as f64).ln() + gamma_prime()
}

/// `a(r) = (2/pi) ln r + gamma'` for real `r >= 1`.
pub fn a_real(r: f64) -> Result<f64> {
    if !(r >= 1.0) {
        return Err(Error::Precondition(format!("a_real needs r >= 1, got {r}")));
    }
    Ok((2.0 / PI) * r.ln() + gamma_prime())
}

#[derive(Debug, Clone)]
pub struct KernelTable {
    radius: i64,
    values: Vec<f64>,
}

fn octant_index(x1: i64, x2: i64) -> usize {
    (x1 * (x1 + 1) / 2 + x2) as usize
}

impl KernelTable {
    pub fn new(radius: i64) -> Result<Self> {
        if !(16..=4096).contains(&radius) {
            return Err(Error::Precondition(format!(
                "kernel window must lie in 16..=4096, got {radius}"
            )));
        }
        let bits = guard_bits(radius);
        Ok(KernelTable {
            radius,
            values: build_octant(radius, bits),
        })
    }

    /// Builds with an explicit fixed-point precision; used to check that the
    /// default precision is sufficient.
    pub fn with_precision(radius: i64, bits: u64) -> Self {
        KernelTable {
            radius,
            values: build_octant(radius, bits),
        }
    }

    pub fn radius(&self) -> i64 {
        self.radius
    }

    pub fn in_window(&self, x: Site) -> bool {
        x.norm_inf() <= self.radius
    }

    pub fn a_exact(&self, x: Site) -> Result<f64> {
        if !self.in_window(x) {
            return Err(Error::OutsideWindow(x, self.radius));
        }
        let r = x.octant_rep();
        Ok(self.values[octant_index(r.x1, r.x2)])
    }

    /// Exact value inside the window, asymptotic expansion outside it.
    pub fn a_eval(&self, x: Site) -> f64 {
        if self.in_window(x) {
            let r = x.octant_rep();
            self.values[octant_index(r.x1, r.x2)]
        } else {
            asym_unchecked(x)
        }
    }

    /// Worst-case error of [`Self::a_eval`] at `x`.
    pub fn a_eval_error(&self, x: Site) -> f64 {
        if self.in_window(x) {
            4.0 * f64::EPSILON * self.a_eval(x).max(1.0)
        } else {
            ASYM_ERROR_COEFF / x.norm2() as f64
        }
    }

    /// Rigorous upper bound on `a(y)` over all `y` with `|y| <= r`, `r >= 1`.
    pub fn a_upper_within(&self, r: f64) -> f64 {
        (2.0 / PI) * r.max(1.0).ln() + gamma_prime() + ASYM_EXCESS_MAX
    }

    /// Rigorous lower bound on `a(y)` over all `y` with `|y| >= r`, `r >= 1`.
    pub fn a_lower_beyond(&self, r: f64) -> f64 {
        (2.0 / PI) * r.max(1.0).ln() + gamma_prime() - ASYM_EXCESS_MAX
    }

    /// Octant entries `(x1, x2, a)` in lexicographic order.
    pub fn octant_entries(&self) -> impl Iterator<Item = (i64, i64, f64)> + '_ {
        (0..=self.radius).flat_map(move |x1| {
            (0..=x1).map(move |x2| (x1, x2, self.values[octant_index(x1, x2)]))
        })
    }

    /// Largest `|a(x) - (1/4) sum a(y)|` over non-origin sites whose
    /// neighbours all lie in the window.
    pub fn harmonicity_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for x1 in 1..self.radius {
            for x2 in 0..=x1 {
                let x = Site::new(x1, x2);
                let mean: f64 = x.neighbors().iter().map(|&y| self.a_eval(y)).sum::<f64>() / 4.0;
                worst = worst.max((self.a_eval(x) - mean).abs());
            }
        }
        worst
    }

    /// `(1/4) sum_{y ~ 0} a(y) - a(0)`, which must equal one.
    pub fn origin_defect(&self) -> f64 {
        Site::ORIGIN
            .neighbors()
            .iter()
            .map(|&y| self.a_eval(y))
            .sum::<f64>()
            / 4.0
            - self.a_eval(Site::ORIGIN)
    }

    /// `max |x|^2 |a(x) - a_asym(x)|` over table sites with `lo <= |x| <= hi`.
    pub fn asymptotic_constant(&self, lo: f64, hi: f64) -> f64 {
        let mut worst: f64 = 0.0;
        for (x1, x2, a) in self.octant_entries() {
            let x = Site::new(x1, x2);
            let n = x.norm();
            if n >= lo && n <= hi {
                worst = worst.max(x.norm2() as f64 * (a - asym_unchecked(x)).abs());
            }
        }
        worst
    }
}

/// Fixed-point bits needed for a window of radius `n`.
pub fn guard_bits(n: i64) -> u64 {
    let growth = (3.0 + 2.0 * 2f64.sqrt()).log2();
    128 + (growth * (n + 2) as f64).ceil() as u64
}

fn build_octant(n: i64, bits: u64) -> Vec<f64> {
    let one = BigInt::from(1) << bits;
    let pi = fixed_pi(bits);
    let four_over_pi: BigInt = (BigInt::from(4) << (2 * bits)) / &pi;

    // diagonal seeds a(k,k) for k = 0..=n+1
    let mut diag = Vec::with_capacity(n as usize + 2);
    let mut acc = BigInt::zero();
    diag.push(BigInt::zero());
    for k in 1..=n + 1 {
        acc += &four_over_pi / BigInt::from(2 * k - 1);
        diag.push(acc.clone());
    }

    let mut values = vec![0.0; octant_index(n, n) + 1];
    let store = |values: &mut Vec<f64>, x1: i64, col: &[BigInt]| {
        for (x2, v) in col.iter().enumerate() {
            values[octant_index(x1, x2 as i64)] = fixed_to_f64(v, bits);
        }
    };

    let mut prev: Vec<BigInt> = vec![BigInt::zero()];
    let mut cur: Vec<BigInt> = vec![one, diag[1].clone()];
    store(&mut values, 0, &prev);
    store(&mut values, 1, &cur);
    for c in 1..n {
        let cu = c as usize;
        let mut next = Vec::with_capacity(cu + 2);
        for x2 in 0..cu {
            let below = if x2 == 0 { &cur[1] } else { &cur[x2 - 1] };
            let v: BigInt = (&cur[x2] << 2u32) - &prev[x2] - &cur[x2 + 1] - below;
            next.push(v);
        }
        next.push((&cur[cu] << 1u32) - &cur[cu - 1]);
        next.push(diag[cu + 1].clone());
        store(&mut values, c + 1, &next);
        prev = std::mem::replace(&mut cur, next);
    }
    values
}

fn fixed_to_f64(v: &BigInt, bits: u64) -> f64 {
    let shift = bits.saturating_sub(64);
    let top = (v >> shift).to_f64().expect("finite");
    top * 2f64.powi(-((bits - shift) as i32))
}

/// `pi * 2^bits` by Machin's formula.
fn fixed_pi(bits: u64) -> BigInt {
    let guard = 32;
    let scale = bits + guard;
    let pi = BigInt::from(16) * arctan_inv(5, scale) - BigInt::from(4) * arctan_inv(239, scale);
    pi >> guard
}

/// `atan(1/k) * 2^scale`.
fn arctan_inv(k: i64, scale: u64) -> BigInt {
    let k2 = BigInt::from(k * k);
    let mut power = (BigInt::from(1) << scale) / BigInt::from(k);
    let mut sum = power.clone();
    let mut n: i64 = 1;
    loop {
        power /= &k2;
        if power.is_zero() {
            break;
        }
        let term = &power / BigInt::from(2 * n + 1);
        if n % 2 == 1 {
            sum -= term;
        } else {
            sum += term;
        }
        n += 1;
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> KernelTable {
        KernelTable::new(64).unwrap()
    }

    #[test]
    fn fixed_point_pi() {
        let pi = fixed_to_f64(&fixed_pi(200), 200);
        assert_eq!(pi, PI);
    }

    #[test]
    fn seeds_and_first_recursion_steps() {
        let t = table();
        let a = |x1, x2| t.a_exact(Site::new(x1, x2)).unwrap();
        assert_eq!(a(0, 0), 0.0);
        assert!((a(1, 0) - 1.0).abs() < 1e-15);
        assert!((a(1, 1) - 4.0 / PI).abs() < 1e-15);
        assert!((a(2, 0) - (4.0 - 8.0 / PI)).abs() < 1e-15);
        assert!((a(2, 1) - (8.0 / PI - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn dihedral_lookup() {
        let t = table();
        for x in [Site::new(5, 2), Site::new(-7, 3), Site::new(0, -9)] {
            let v = t.a_exact(x).unwrap();
            for k in 0..8 {
                assert_eq!(t.a_exact(x.dihedral(k)).unwrap(), v);
            }
        }
    }

    #[test]
    fn outside_window_errors() {
        let t = table();
        assert!(matches!(
            t.a_exact(Site::new(65, 0)),
            Err(Error::OutsideWindow(..))
        ));
        assert_eq!(t.a_eval(Site::new(100_000, 0)), a_asym(Site::new(100_000, 0)).unwrap());
    }

    #[test]
    fn seam_matches_asymptotics() {
        let t = table();
        let x = Site::new(64, 0);
        assert!((t.a_exact(x).unwrap() - a_asym(x).unwrap()).abs() <= 1e-3);
    }

    #[test]
    fn harmonic_and_origin_defect() {
        let t = table();
        assert!(t.harmonicity_residual() <= 1e-12);
        assert!((t.origin_defect() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn asym_examples() {
        assert!((gamma_prime() - 1.029_373_7).abs() < 1e-6);
        assert!((a_asym(Site::new(100, 0)).unwrap() - 3.961_116_1).abs() < 1e-6);
        assert!((a_asym(Site::new(1, 0)).unwrap() - 1.029_374).abs() < 1e-6);
        assert!((a_asym(Site::new(10, 10)).unwrap() - 2.715_880_5).abs() < 1e-6);
        assert!(matches!(a_asym(Site::ORIGIN), Err(Error::LogSingularity)));
    }

    #[test]
    fn a_real_examples() {
        assert!((a_real(1.0).unwrap() - 1.029_374).abs() < 1e-6);
        assert!((a_real((PI / 2.0).exp()).unwrap() - (1.0 + gamma_prime())).abs() < 1e-12);
        assert!((a_real(10.0).unwrap() - 2.495_244_9).abs() < 1e-6);
        assert!(a_real(0.5).is_err());
    }

    #[test]
    fn precision_is_sufficient() {
        let n = 48;
        let a = KernelTable::with_precision(n, guard_bits(n));
        let b = KernelTable::with_precision(n, guard_bits(n) + 256);
        assert_eq!(a.values, b.values);
        // too little precision visibly breaks the far columns
        let c = KernelTable::with_precision(n, 64);
        assert!(c.asymptotic_constant(24.0, 48.0) > 1.0);
    }

    #[test]
    fn excess_over_asymptotics_is_bounded() {
        let t = table();
        let worst = t
            .octant_entries()
            .filter(|&(x1, x2, _)| x1 + x2 > 0)
            .map(|(x1, x2, a)| a - asym_unchecked(Site::new(x1, x2)))
            .fold(f64::MIN, f64::max);
        assert!(worst <= ASYM_EXCESS_MAX, "{worst}");
        let deficit = t
            .octant_entries()
            .filter(|&(x1, x2, _)| x1 + x2 > 0)
            .map(|(x1, x2, a)| asym_unchecked(Site::new(x1, x2)) - a)
            .fold(f64::MIN, f64::max);
        assert!(deficit <= ASYM_EXCESS_MAX, "{deficit}");
        assert!(t.a_lower_beyond(1.0) <= 1.0 && t.a_upper_within(1.5) >= 4.0 / PI);
    }
}
