//! Hitting distributions of finite sets for the simple random walk, written
//! through the potential kernel.
//!
//! For a finite `B` the bounded harmonic function off `B` with boundary
//! values `delta_y` is `H_B(x, y) = c_y + sum_w a(x - w) M(w, y)` with
//! `sum_w M(w, y) = 0`; the `|B| + 1` unknowns solve a dense system and
//! `c_y = hm_B(y)`. Through the h-transform this also gives the conditioned
//! walk's entrance law: `P^_x[hit A first at y] = H_{A+0}(x, y) a(y) / a(x)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{precondition, Result};
use crate::kernel::KernelTable;
use crate::lattice::{Site, SiteSet};

#[derive(Debug, Clone)]
pub struct SrwHarmonic {
    sites: Vec<Site>,
    // m[(w, y)]
    m: DMatrix<f64>,
    hm: Vec<f64>,
    cap: f64,
    col_abs: Vec<f64>,
    system_error: f64,
}

impl SrwHarmonic {
    pub fn new(kernel: &KernelTable, set: &SiteSet) -> Result<Self> {
        let sites: Vec<Site> = set.iter().collect();
        let n = sites.len();
        let mut k = DMatrix::<f64>::zeros(n + 1, n + 1);
        let mut dk_row: f64 = 0.0;
        for (i, &u) in sites.iter().enumerate() {
            let mut row = 0.0;
            for (j, &w) in sites.iter().enumerate() {
                k[(i, j)] = kernel.a_eval(u - w);
                row += kernel.a_eval_error(u - w);
            }
            k[(i, n)] = 1.0;
            k[(n, i)] = 1.0;
            dk_row = dk_row.max(row);
        }
        let inv = k
            .clone()
            .try_inverse()
            .ok_or_else(|| precondition("singular potential-kernel system"))?;
        let inv_norm = (0..=n)
            .map(|i| (0..=n).map(|j| inv[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max);

        let lu = k.clone().lu();
        let mut m = DMatrix::<f64>::zeros(n, n);
        let mut hm = vec![0.0; n];
        let mut sol_norm: f64 = 0.0;
        let mut refine: f64 = 0.0;
        for y in 0..n {
            let mut rhs = DVector::<f64>::zeros(n + 1);
            rhs[y] = 1.0;
            let mut x = lu.solve(&rhs).expect("nonsingular");
            let r = &rhs - &k * &x;
            let dx = lu.solve(&r).expect("nonsingular");
            refine = refine.max(dx.amax());
            x += dx;
            for w in 0..n {
                m[(w, y)] = x[w];
            }
            hm[y] = x[n];
            sol_norm = sol_norm.max(x.amax());
        }
        let system_error = inv_norm * dk_row * sol_norm + 4.0 * refine + 64.0 * f64::EPSILON;

        // cap from `A h = cap 1`, `sum h = 1`
        let mut rhs = DVector::<f64>::zeros(n + 1);
        rhs[n] = 1.0;
        let h = lu.solve(&rhs).expect("nonsingular");
        let cap = -h[n];

        let col_abs = (0..n)
            .map(|y| (0..n).map(|w| m[(w, y)].abs()).sum())
            .collect();
        Ok(SrwHarmonic {
            sites,
            m,
            hm,
            cap,
            col_abs,
            system_error,
        })
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn harmonic_measure(&self) -> &[f64] {
        &self.hm
    }

    /// SRW capacity of the set: the common value of `sum_y hm(y) a(w - y)`, `w` in the set.
    pub fn capacity(&self) -> f64 {
        self.cap
    }

    /// `(H_B(x, y), error bound)` for every `y` in the set, in set order.
    pub fn hitting(&self, kernel: &KernelTable, x: Site) -> Vec<(f64, f64)> {
        if let Some(i) = self.sites.iter().position(|&s| s == x) {
            return (0..self.sites.len())
                .map(|j| (if i == j { 1.0 } else { 0.0 }, 0.0))
                .collect();
        }
        let reference = kernel.a_eval(x - self.sites[0]);
        let diffs: Vec<f64> = self
            .sites
            .iter()
            .map(|&w| kernel.a_eval(x - w) - reference)
            .collect();
        let eval_err: Vec<f64> = self
            .sites
            .iter()
            .map(|&w| kernel.a_eval_error(x - w) + 4.0 * f64::EPSILON * kernel.a_eval(x - w))
            .collect();
        (0..self.sites.len())
            .map(|y| {
                let mut v = self.hm[y];
                let mut err = self.system_error * (1.0 + reference.abs() * self.sites.len() as f64);
                for (w, d) in diffs.iter().enumerate() {
                    v += d * self.m[(w, y)];
                    err += self.m[(w, y)].abs() * eval_err[w];
                }
                err += self.col_abs[y] * eval_err[0];
                (v, err)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn kernel() -> KernelTable {
        KernelTable::new(64).unwrap()
    }

    #[test]
    fn two_point_set() {
        let k = kernel();
        let set = SiteSet::new([Site::ORIGIN, Site::new(1, 0)]).unwrap();
        let h = SrwHarmonic::new(&k, &set).unwrap();
        assert!((h.capacity() - 0.5).abs() < 1e-14);
        for &v in h.harmonic_measure() {
            assert!((v - 0.5).abs() < 1e-14);
        }
        let set = SiteSet::new([Site::ORIGIN, Site::new(1, 1)]).unwrap();
        let h = SrwHarmonic::new(&k, &set).unwrap();
        assert!((h.capacity() - 2.0 / PI).abs() < 1e-14);
    }

    #[test]
    fn hitting_is_a_distribution_and_harmonic() {
        let k = kernel();
        let set = SiteSet::new([Site::ORIGIN, Site::new(3, 0), Site::new(3, 1)]).unwrap();
        let h = SrwHarmonic::new(&k, &set).unwrap();
        let x = Site::new(-5, 7);
        let hx = h.hitting(&k, x);
        let total: f64 = hx.iter().map(|p| p.0).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(hx.iter().all(|p| p.0 > 0.0 && p.1 < 1e-12));
        for y in 0..3 {
            let mean: f64 = x.neighbors().iter().map(|&z| h.hitting(&k, z)[y].0).sum::<f64>() / 4.0;
            assert!((mean - hx[y].0).abs() < 1e-12);
        }
        let on = h.hitting(&k, Site::new(3, 0));
        assert_eq!(on[1].0, 1.0);
    }

    #[test]
    fn singleton_with_origin_matches_closed_form() {
        let k = kernel();
        let y = Site::new(2, -1);
        let set = SiteSet::new([Site::ORIGIN, y]).unwrap();
        let h = SrwHarmonic::new(&k, &set).unwrap();
        let iy = set.index_of(y).unwrap();
        let x = Site::new(10, 4);
        let conditioned = h.hitting(&k, x)[iy].0 * k.a_eval(y) / k.a_eval(x);
        let closed = (k.a_eval(x) + k.a_eval(y) - k.a_eval(x - y)) / (2.0 * k.a_eval(x));
        assert!((conditioned - closed).abs() < 1e-14);
    }
}
