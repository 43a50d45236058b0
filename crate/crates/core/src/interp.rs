//! Tensor-product four-point Lagrange interpolation on a grid that is
//! periodic in the first coordinate.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

/// Grid over `[0, 2pi) x [lo, hi]`; the second axis includes both ends.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub n_phi: usize,
    pub n_i: usize,
    pub lo: f64,
    pub hi: f64,
}

/// Weights and derivative weights of the cubic through nodes 0..=3 at `t`.
fn lagrange4(t: f64) -> ([f64; 4], [f64; 4]) {
    let (a, b, c, d) = (t, t - 1.0, t - 2.0, t - 3.0);
    let w = [
        -b * c * d / 6.0,
        a * c * d / 2.0,
        -a * b * d / 2.0,
        a * b * c / 6.0,
    ];
    let dw = [
        -(c * d + b * d + b * c) / 6.0,
        (c * d + a * d + a * c) / 2.0,
        -(b * d + a * d + a * b) / 2.0,
        (b * c + a * c + a * b) / 6.0,
    ];
    (w, dw)
}

impl Grid {
    pub fn new(n_phi: usize, n_i: usize, lo: f64, hi: f64) -> Self {
        assert!(
            n_phi >= 4 && n_i >= 4,
            "grid needs at least 4 nodes per axis"
        );
        assert!(lo < hi, "empty band");
        Self { n_phi, n_i, lo, hi }
    }

    pub fn len(&self) -> usize {
        self.n_phi * self.n_i
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn h_phi(&self) -> f64 {
        TAU / self.n_phi as f64
    }

    pub fn h_i(&self) -> f64 {
        (self.hi - self.lo) / (self.n_i - 1) as f64
    }

    pub fn index(&self, j_phi: usize, i_i: usize) -> usize {
        i_i * self.n_phi + j_phi
    }

    /// Coordinates of the node with flat index `idx`.
    pub fn node(&self, idx: usize) -> (f64, f64) {
        let (i, j) = (idx / self.n_phi, idx % self.n_phi);
        (j as f64 * self.h_phi(), self.lo + i as f64 * self.h_i())
    }

    fn stencil(
        &self,
        phi: f64,
        action: f64,
    ) -> (
        [usize; 4],
        [usize; 4],
        [f64; 4],
        [f64; 4],
        [f64; 4],
        [f64; 4],
    ) {
        let u = phi.rem_euclid(TAU) / self.h_phi();
        let j0 = u.floor() as i64 - 1;
        let (wp, dwp) = lagrange4(u - j0 as f64);
        let n = self.n_phi as i64;
        let js = [0, 1, 2, 3].map(|k| (j0 + k).rem_euclid(n) as usize);

        let v = (action - self.lo) / self.h_i();
        // edge stencils extrapolate past the band ends
        let i0 = (v.floor() as i64 - 1).clamp(0, self.n_i as i64 - 4);
        let (wi, dwi) = lagrange4(v - i0 as f64);
        let is = [0, 1, 2, 3].map(|k| (i0 + k) as usize);
        (js, is, wp, dwp, wi, dwi)
    }

    /// Interpolated value.
    pub fn eval(&self, values: &[f64], phi: f64, action: f64) -> f64 {
        let (js, is, wp, _, wi, _) = self.stencil(phi, action);
        let mut s = 0.0;
        for (a, &i) in is.iter().enumerate() {
            let row = &values[i * self.n_phi..];
            let r: f64 = js.iter().zip(wp).map(|(&j, w)| w * row[j]).sum();
            s += wi[a] * r;
        }
        s
    }

    /// Interpolated value and its gradient `(d/dphi, d/dI)`.
    pub fn eval_grad(&self, values: &[f64], phi: f64, action: f64) -> (f64, f64, f64) {
        let (js, is, wp, dwp, wi, dwi) = self.stencil(phi, action);
        let (mut s, mut sp, mut si) = (0.0, 0.0, 0.0);
        for (a, &i) in is.iter().enumerate() {
            let row = &values[i * self.n_phi..];
            let (mut r, mut rp) = (0.0, 0.0);
            for (b, &j) in js.iter().enumerate() {
                r += wp[b] * row[j];
                rp += dwp[b] * row[j];
            }
            s += wi[a] * r;
            sp += wi[a] * rp;
            si += dwi[a] * r;
        }
        (s, sp / self.h_phi(), si / self.h_i())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(g: &Grid, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        (0..g.len())
            .map(|k| {
                let (p, i) = g.node(k);
                f(p, i)
            })
            .collect()
    }

    #[test]
    fn reproduces_nodes() {
        let g = Grid::new(16, 6, 0.0, 1.0);
        let v = sample(&g, |p, i| p.sin() + i * i);
        for k in 0..g.len() {
            let (p, i) = g.node(k);
            assert!((g.eval(&v, p, i) - v[k]).abs() < 1e-13);
        }
    }

    #[test]
    fn exact_for_cubics_in_action() {
        let g = Grid::new(8, 5, -1.0, 2.0);
        let f = |_: f64, i: f64| 1.0 - 2.0 * i + 0.5 * i * i * i;
        let v = sample(&g, f);
        for &i in &[-1.2, -0.3, 0.77, 2.1] {
            let (s, _, si) = g.eval_grad(&v, 1.0, i);
            assert!((s - f(0.0, i)).abs() < 1e-12);
            assert!((si - (-2.0 + 1.5 * i * i)).abs() < 1e-11);
        }
    }

    #[test]
    fn smooth_periodic_accuracy() {
        let g = Grid::new(128, 8, 0.0, 1.0);
        let v = sample(&g, |p, _| (p - 1.0).sin());
        let (s, sp, _) = g.eval_grad(&v, 6.2, 0.5);
        assert!((s - 5.2f64.sin()).abs() < 1e-7);
        assert!((sp - 5.2f64.cos()).abs() < 1e-5);
    }
}
