//! Banded LU with partial pivoting for the multiple-shooting Newton step.

/// Square matrix with `kl` sub- and `ku` super-diagonals. Rows keep room for
/// the `kl` extra super-diagonals that row swaps create.
#[derive(Clone, Debug)]
pub(crate) struct Banded {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl Banded {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
        }
    }

    fn slot(&self, r: usize, c: usize) -> usize {
        debug_assert!(
            c + self.kl >= r && c <= r + self.ku + self.kl,
            "({r}, {c}) outside band"
        );
        r * self.width + c + self.kl - r
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        let s = self.slot(r, c);
        self.data[s] = v;
    }

    fn get(&self, r: usize, c: usize) -> f64 {
        self.data[self.slot(r, c)]
    }

    /// Solve `A x = b` in place, destroying `A`. `None` on a zero pivot.
    pub fn solve(mut self, b: &mut [f64]) -> Option<()> {
        let (n, kl) = (self.n, self.kl);
        let reach = self.ku + kl;
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let p = (k..=last)
                .max_by(|&a, &c| self.get(a, k).abs().total_cmp(&self.get(c, k).abs()))?;
            if self.get(p, k) == 0.0 {
                return None;
            }
            let top = (k + reach).min(n - 1);
            if p != k {
                for c in k..=top {
                    let (a, d) = (self.slot(k, c), self.slot(p, c));
                    self.data.swap(a, d);
                }
                b.swap(k, p);
            }
            let piv = self.get(k, k);
            for r in k + 1..=last {
                let f = self.get(r, k) / piv;
                if f == 0.0 {
                    continue;
                }
                for c in k..=top {
                    let v = self.get(r, c) - f * self.get(k, c);
                    self.set(r, c, v);
                }
                b[r] -= f * b[k];
            }
        }
        for k in (0..n).rev() {
            let top = (k + reach).min(n - 1);
            let mut s = b[k];
            for c in k + 1..=top {
                s -= self.get(k, c) * b[c];
            }
            b[k] = s / self.get(k, k);
        }
        Some(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    proptest! {
        #[test]
        fn matches_dense_solve(seed in any::<u64>(), n in 2usize..60, kl in 0usize..8, ku in 0usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut band = Banded::zeros(n, kl, ku);
            let mut dense = DMatrix::zeros(n, n);
            for r in 0..n {
                for c in r.saturating_sub(kl)..=(r + ku).min(n - 1) {
                    // weak diagonal so pivoting is exercised
                    let v = rng.random_range(-1.0..1.0) * if r == c { 0.01 } else { 1.0 };
                    band.set(r, c, v);
                    dense[(r, c)] = v;
                }
            }
            let lu = dense.clone().lu();
            let rhs: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let want = lu.solve(&DVector::from_vec(rhs.clone()));
            // skip draws that are numerically singular
            let cond = dense.clone().svd(false, false).singular_values;
            prop_assume!(cond.min() > 1e-6 * cond.max());
            let want = want.unwrap();
            let mut got = rhs;
            prop_assert!(band.solve(&mut got).is_some());
            let scale = want.amax().max(1.0) * cond.max() / cond.min();
            for k in 0..n {
                prop_assert!((got[k] - want[k]).abs() < 1e-12 * scale, "{k}: {} vs {}", got[k], want[k]);
            }
        }
    }
}
