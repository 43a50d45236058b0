use std::collections::VecDeque;
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::{EssentialCurve, Ifs};

/// Cells of an `n_phi x n_i` grid over the band reachable from a start set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReachableSet {
    pub n_phi: usize,
    pub n_i: usize,
    pub band: (f64, f64),
    pub cells: Vec<bool>,
}

impl ReachableSet {
    pub fn index(&self, j: usize, i: usize) -> usize {
        i * self.n_phi + j
    }

    /// Cell containing `(phi, y)`, or `None` outside the band.
    pub fn cell_of(&self, phi: f64, y: f64) -> Option<usize> {
        let (lo, hi) = self.band;
        if !(lo..=hi).contains(&y) {
            return None;
        }
        let j = ((phi.rem_euclid(TAU) / TAU * self.n_phi as f64) as usize).min(self.n_phi - 1);
        let i = (((y - lo) / (hi - lo) * self.n_i as f64) as usize).min(self.n_i - 1);
        Some(self.index(j, i))
    }

    /// Cells crossed by the graph of `curve`.
    pub fn curve_cells(&self, curve: &EssentialCurve) -> Vec<usize> {
        let mut out: Vec<usize> = (0..4 * self.n_phi)
            .filter_map(|k| {
                let phi = TAU * (k as f64 + 0.5) / (4 * self.n_phi) as f64;
                self.cell_of(phi, curve.eval(phi))
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Whether any reachable cell meets or lies above `curve`.
    pub fn reaches(&self, curve: &EssentialCurve) -> bool {
        let (lo, hi) = self.band;
        let dy = (hi - lo) / self.n_i as f64;
        (0..self.cells.len()).any(|c| {
            if !self.cells[c] {
                return false;
            }
            let (j, i) = (c % self.n_phi, c / self.n_phi);
            let top = lo + (i + 1) as f64 * dy;
            let (a, b) = (
                TAU * j as f64 / self.n_phi as f64,
                TAU * (j + 1) as f64 / self.n_phi as f64,
            );
            top > curve
                .eval(a)
                .min(curve.eval(b))
                .min(curve.eval(0.5 * (a + b)))
        })
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    /// Highest reachable row.
    pub fn top_row(&self) -> Option<usize> {
        (0..self.cells.len())
            .filter(|&c| self.cells[c])
            .map(|c| c / self.n_phi)
            .max()
    }
}

/// Breadth-first closure of `start` cells under every map of `ifs`. Each
/// reached cell is probed at its four corners, pulled in by `cell_tol` of a
/// cell, and its centre; a cell is reached when some map sends a probe of a
/// reached cell into it.
pub fn brute_force_reachability(
    ifs: &Ifs,
    n_phi: usize,
    n_i: usize,
    start: &EssentialCurve,
    cell_tol: f64,
) -> ReachableSet {
    let mut set = ReachableSet {
        n_phi,
        n_i,
        band: ifs.band,
        cells: vec![false; n_phi * n_i],
    };
    let (lo, hi) = ifs.band;
    let (dp, dy) = (TAU / n_phi as f64, (hi - lo) / n_i as f64);
    let mut queue: VecDeque<usize> = VecDeque::new();
    for c in set.curve_cells(start) {
        set.cells[c] = true;
        queue.push_back(c);
    }
    let inset = cell_tol.clamp(1e-12, 0.49);
    let probes = [
        (inset, inset),
        (1.0 - inset, inset),
        (inset, 1.0 - inset),
        (1.0 - inset, 1.0 - inset),
        (0.5, 0.5),
    ];
    while let Some(c) = queue.pop_front() {
        let (j, i) = (c % n_phi, c / n_phi);
        for &(fp, fy) in &probes {
            let (phi, y) = ((j as f64 + fp) * dp, lo + (i as f64 + fy) * dy);
            for n in 0..ifs.len() {
                if let Ok((p, q)) = ifs.apply(n, phi, y) {
                    if let Some(t) = set.cell_of(p, q) {
                        if !set.cells[t] {
                            set.cells[t] = true;
                            queue.push_back(t);
                        }
                    }
                }
            }
        }
    }
    set
}
