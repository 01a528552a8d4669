//! Dirichlet problem for the five-point Laplacian `4 v(x) - sum_{z ~ x} v(z)`
//! on a finite set of interior sites, solved by conjugate gradients with a
//! symmetric SOR preconditioner. Interior sites are kept in lexicographic
//! order, which fixes the sweep order and makes every solve deterministic.

use crate::error::{Error, Result};
use crate::lattice::Site;

pub(crate) const NONE: u32 = u32::MAX;

#[derive(Debug, Clone)]
pub(crate) struct Laplacian {
    pub sites: Vec<Site>,
    pub nbr: Vec<[u32; 4]>,
}

#[derive(Debug, Clone)]
pub(crate) struct CgOutcome {
    pub v: Vec<f64>,
    /// `max |f - L v| / 4`
    pub defect: f64,
    pub iterations: usize,
}

impl Laplacian {
    /// `sites` must be sorted; `lookup` maps a site to its position in `sites`.
    pub fn new(sites: Vec<Site>, lookup: impl Fn(Site) -> Option<usize>) -> Self {
        let nbr = sites
            .iter()
            .map(|s| {
                let mut out = [NONE; 4];
                for (k, z) in s.neighbors().iter().enumerate() {
                    if let Some(j) = lookup(*z) {
                        out[k] = j as u32;
                    }
                }
                out
            })
            .collect();
        Laplacian { sites, nbr }
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        for (i, nb) in self.nbr.iter().enumerate() {
            let mut s = 4.0 * v[i];
            for &j in nb {
                if j != NONE {
                    s -= v[j as usize];
                }
            }
            out[i] = s;
        }
    }

    fn ssor(&self, omega: f64, r: &[f64], z: &mut [f64]) {
        let c = omega / 4.0;
        for i in 0..self.len() {
            let mut s = r[i];
            for &j in &self.nbr[i] {
                if j != NONE && (j as usize) < i {
                    s += z[j as usize];
                }
            }
            z[i] = s * c;
        }
        let scale = 4.0 / omega;
        for i in (0..self.len()).rev() {
            let mut s = z[i] * scale;
            for &j in &self.nbr[i] {
                if j != NONE && (j as usize) > i {
                    s += z[j as usize];
                }
            }
            z[i] = s * c;
        }
    }

    fn defect(&self, v: &[f64], f: &[f64], scratch: &mut [f64]) -> f64 {
        self.apply(v, scratch);
        scratch
            .iter()
            .zip(f)
            .map(|(lv, fi)| (fi - lv).abs())
            .fold(0.0, f64::max)
            / 4.0
    }

    /// Solves `L v = f` to `max |f - L v| / 4 <= tol`.
    pub fn solve(&self, f: &[f64], tol: f64, max_iter: usize, omega: f64) -> Result<CgOutcome> {
        let n = self.len();
        let mut v = vec![0.0; n];
        if n == 0 {
            return Ok(CgOutcome {
                v,
                defect: 0.0,
                iterations: 0,
            });
        }
        let mut r = f.to_vec();
        let mut z = vec![0.0; n];
        let mut q = vec![0.0; n];
        self.ssor(omega, &r, &mut z);
        let mut p = z.clone();
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let mut iterations = 0;
        loop {
            let inf = r.iter().fold(0.0f64, |m, x| m.max(x.abs())) / 4.0;
            if inf <= tol || rz == 0.0 {
                let defect = self.defect(&v, f, &mut q);
                if defect <= tol {
                    return Ok(CgOutcome {
                        v,
                        defect,
                        iterations,
                    });
                }
                // recursive residual drifted; restart from the true one
                self.apply(&v, &mut q);
                for i in 0..n {
                    r[i] = f[i] - q[i];
                }
                self.ssor(omega, &r, &mut z);
                p.copy_from_slice(&z);
                rz = r.iter().zip(&z).map(|(a, b)| a * b).sum();
                if rz == 0.0 {
                    return Err(Error::NonConvergence {
                        residual: defect,
                        iterations,
                    });
                }
            }
            if iterations >= max_iter {
                return Err(Error::NonConvergence {
                    residual: self.defect(&v, f, &mut q),
                    iterations,
                });
            }
            self.apply(&p, &mut q);
            let pq: f64 = p.iter().zip(&q).map(|(a, b)| a * b).sum();
            let alpha = rz / pq;
            for i in 0..n {
                v[i] += alpha * p[i];
                r[i] -= alpha * q[i];
            }
            self.ssor(omega, &r, &mut z);
            let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
            iterations += 1;
        }
    }
}
