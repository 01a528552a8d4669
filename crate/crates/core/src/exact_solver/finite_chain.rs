//! Exact check, on explicit finite chains, that conditioning on no return
//! to the start before absorption leaves the probability of reaching `A`
//! before `B` unchanged.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{precondition, Error, Result};

/// Row-stochastic transition matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteChain {
    p: DMatrix<f64>,
}

impl FiniteChain {
    pub fn new(p: DMatrix<f64>) -> Result<Self> {
        if p.nrows() != p.ncols() || p.nrows() == 0 {
            return Err(precondition("transition matrix must be square and nonempty"));
        }
        for i in 0..p.nrows() {
            let row = p.row(i);
            if row.iter().any(|&v| !(v >= 0.0)) || (row.sum() - 1.0).abs() > 1e-12 {
                return Err(precondition(format!("row {i} is not a probability vector")));
            }
        }
        Ok(FiniteChain { p })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn len(&self) -> usize {
        self.p.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_irreducible(&self) -> bool {
        let n = self.len();
        let reach = |forward: bool| {
            let mut seen = vec![false; n];
            let mut stack = vec![0];
            seen[0] = true;
            while let Some(i) = stack.pop() {
                for j in 0..n {
                    let w = if forward { self.p[(i, j)] } else { self.p[(j, i)] };
                    if w > 0.0 && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
            seen.into_iter().all(|s| s)
        };
        reach(true) && reach(false)
    }

    /// Cycle `0 -> 1 -> ... -> n-1 -> 0` moving each way with probability 1/2.
    pub fn ring(n: usize) -> Self {
        let mut p = DMatrix::zeros(n, n);
        for i in 0..n {
            p[(i, (i + 1) % n)] += 0.5;
            p[(i, (i + n - 1) % n)] += 0.5;
        }
        FiniteChain { p }
    }

    /// Symmetric birth-death chain on `0..n` with holding at the ends.
    pub fn birth_death(n: usize) -> Self {
        let mut p = DMatrix::zeros(n, n);
        for i in 0..n {
            p[(i, i.saturating_sub(1))] += 0.5;
            p[(i, (i + 1).min(n - 1))] += 0.5;
        }
        FiniteChain { p }
    }

    /// Random chain on `n` states: both ring directions plus random extra
    /// edges, all with random positive weights.
    pub fn random(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            p[(i, (i + 1) % n)] = rng.gen_range(0.1..1.0);
            p[(i, (i + n - 1) % n)] = rng.gen_range(0.1..1.0);
            for j in 0..n {
                if rng.gen_bool(0.3) {
                    p[(i, j)] += rng.gen_range(0.0..1.0);
                }
            }
            let s: f64 = p.row(i).sum();
            for j in 0..n {
                p[(i, j)] /= s;
            }
        }
        FiniteChain { p }
    }

    /// `P_i[reach target before stop]` for every state, with `target` and
    /// `stop` absorbing; states in `target` get 1, in `stop` 0.
    fn absorption(&self, target: &[usize], stop: &[usize]) -> Result<DVector<f64>> {
        let n = self.len();
        let fixed = |i: usize| target.contains(&i) || stop.contains(&i);
        let free: Vec<usize> = (0..n).filter(|&i| !fixed(i)).collect();
        let mut m = DMatrix::<f64>::identity(free.len(), free.len());
        let mut rhs = DVector::<f64>::zeros(free.len());
        for (a, &i) in free.iter().enumerate() {
            for (b, &j) in free.iter().enumerate() {
                m[(a, b)] -= self.p[(i, j)];
            }
            rhs[a] = target.iter().map(|&t| self.p[(i, t)]).sum();
        }
        let sol = m
            .lu()
            .solve(&rhs)
            .ok_or_else(|| precondition("singular absorption system"))?;
        let mut out = DVector::zeros(n);
        for &t in target {
            out[t] = 1.0;
        }
        for (a, &i) in free.iter().enumerate() {
            out[i] = sol[a];
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditioningResult {
    pub unconditional: f64,
    pub conditional: f64,
}

impl ConditioningResult {
    pub fn gap(&self) -> f64 {
        (self.unconditional - self.conditional).abs()
    }
}

/// `P_x[tau_A < tau_B]` and the same probability conditioned on no return to
/// `x` before `tau_{A u B}`.
pub fn no_return_check(chain: &FiniteChain, x: usize, a: &[usize], b: &[usize]) -> Result<ConditioningResult> {
    let n = chain.len();
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySet);
    }
    if x >= n || a.iter().chain(b).any(|&i| i >= n) {
        return Err(precondition("state index out of range"));
    }
    if a.iter().any(|i| b.contains(i)) || a.contains(&x) || b.contains(&x) {
        return Err(precondition("A, B and x must be disjoint"));
    }
    if !chain.is_irreducible() {
        return Err(Error::ReducibleChain);
    }
    let unconditional = chain.absorption(a, b)?[x];
    // with x absorbing (value 0 for both targets) the first step from x
    // splits excursions that end in A or B before returning
    let mut stop_a = b.to_vec();
    stop_a.push(x);
    let mut stop_b = a.to_vec();
    stop_b.push(x);
    let to_a = chain.absorption(a, &stop_a)?;
    let to_b = chain.absorption(b, &stop_b)?;
    let row = chain.p.row(x);
    let qa: f64 = (0..n).filter(|&j| j != x).map(|j| row[j] * to_a[j]).sum();
    let qb: f64 = (0..n).filter(|&j| j != x).map(|j| row[j] * to_b[j]).sum();
    Ok(ConditioningResult {
        unconditional,
        conditional: qa / (qa + qb),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_opposite_targets() {
        let r = no_return_check(&FiniteChain::ring(5), 1, &[0], &[3]).unwrap();
        assert!(r.gap() < 1e-12);
        assert!((r.unconditional - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn birth_death_is_symmetric() {
        let r = no_return_check(&FiniteChain::birth_death(5), 2, &[0], &[4]).unwrap();
        assert!((r.unconditional - 0.5).abs() < 1e-12);
        assert!((r.conditional - 0.5).abs() < 1e-12);
    }

    #[test]
    fn random_chains() {
        for seed in 0..20 {
            let c = FiniteChain::random(6, seed);
            assert!(FiniteChain::new(c.matrix().clone()).is_ok());
            let r = no_return_check(&c, 0, &[2], &[4, 5]).unwrap();
            assert!(r.gap() < 1e-10, "seed {seed}: {r:?}");
        }
    }

    #[test]
    fn reducible_and_invalid_inputs() {
        let mut p = DMatrix::<f64>::identity(3, 3);
        p[(0, 0)] = 0.5;
        p[(0, 1)] = 0.5;
        let c = FiniteChain::new(p).unwrap();
        assert!(matches!(no_return_check(&c, 0, &[1], &[2]), Err(Error::ReducibleChain)));
        let ring = FiniteChain::ring(4);
        assert!(no_return_check(&ring, 0, &[0], &[2]).is_err());
        assert!(FiniteChain::new(DMatrix::from_element(2, 2, 0.6)).is_err());
    }
}
