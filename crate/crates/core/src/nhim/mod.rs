//! The invariant cylinder `A` as a graph `(x, y) = g(phi, I)`, its
//! restricted map, spectral gap and holonomy projections.

mod gap;
mod lambda;
mod projector;

pub use gap::{spectral_gap, spectral_gap_in, SpectralGapReport};
pub use lambda::{lambda_lemma_check, ConvergenceReport, SeedSurface};
pub use projector::{project_stable, project_unstable, Direction, HolonomyProjector, Projection};

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::homoclinic::{find_saddle, SaddleData};
use crate::interp::Grid;
use crate::maps::{angle_diff, wrap_angle, MapDef, PhasePoint};
use crate::par::*;

/// Base coordinates `(phi, I)` on the cylinder.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CylinderPoint {
    pub phi: f64,
    #[serde(rename = "I")]
    pub action: f64,
}

impl CylinderPoint {
    pub fn new(phi: f64, action: f64) -> Self {
        Self {
            phi: wrap_angle(phi),
            action,
        }
    }

    pub fn of(p: &PhasePoint) -> Self {
        Self::new(p.phi, p.action)
    }

    /// Max-norm distance with `phi` compared mod 2pi.
    pub fn distance(&self, other: &CylinderPoint) -> f64 {
        angle_diff(self.phi, other.phi)
            .abs()
            .max((self.action - other.action).abs())
    }

    pub fn diff(&self, other: &CylinderPoint) -> Vector2<f64> {
        Vector2::new(angle_diff(self.phi, other.phi), self.action - other.action)
    }
}

pub const INTERP_RULE: &str = "lagrange4_periodic_phi";

/// Sampled invariant cylinder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CylinderGraph {
    pub grid: Grid,
    /// `x` offsets, stored in `(-pi, pi]`.
    pub gx: Vec<f64>,
    pub gy: Vec<f64>,
    pub residual: f64,
    pub tol: f64,
    pub sweeps: usize,
    pub interp: String,
}

impl CylinderGraph {
    /// The graph `g = 0`.
    pub fn flat(grid: Grid) -> Self {
        Self {
            grid,
            gx: vec![0.0; grid.len()],
            gy: vec![0.0; grid.len()],
            residual: 0.0,
            tol: 0.0,
            sweeps: 0,
            interp: INTERP_RULE.to_string(),
        }
    }

    pub fn band(&self) -> (f64, f64) {
        (self.grid.lo, self.grid.hi)
    }

    pub fn in_band(&self, action: f64) -> bool {
        (self.grid.lo..=self.grid.hi).contains(&action)
    }

    pub fn eval(&self, phi: f64, action: f64) -> (f64, f64) {
        (
            self.grid.eval(&self.gx, phi, action),
            self.grid.eval(&self.gy, phi, action),
        )
    }

    /// `Dg = [[dx/dphi, dx/dI], [dy/dphi, dy/dI]]`.
    pub fn derivative(&self, phi: f64, action: f64) -> Matrix2<f64> {
        let (_, xp, xi) = self.grid.eval_grad(&self.gx, phi, action);
        let (_, yp, yi) = self.grid.eval_grad(&self.gy, phi, action);
        Matrix2::new(xp, xi, yp, yi)
    }

    /// The point of `A` over `v`. Its `x` is left in `(-pi, pi]` so small
    /// offsets keep full precision.
    pub fn point(&self, v: &CylinderPoint) -> PhasePoint {
        let (x, y) = self.eval(v.phi, v.action);
        PhasePoint::lifted(wrap_angle(v.phi), v.action, x, y)
    }

    /// Offset `(dx, dy)` of `p` from the graph over its own base point.
    pub fn normal_offset(&self, p: &PhasePoint) -> (f64, f64) {
        let (x, y) = self.eval(p.phi, p.action);
        (angle_diff(p.x, x), p.y - y)
    }

    pub fn normal_distance(&self, p: &PhasePoint) -> f64 {
        let (dx, dy) = self.normal_offset(p);
        dx.abs().max(dy.abs())
    }

    /// Point with base `v` and normal offset `(dx, dy)`.
    pub fn offset_point(&self, v: &CylinderPoint, dx: f64, dy: f64) -> PhasePoint {
        let (x, y) = self.eval(v.phi, v.action);
        PhasePoint::lifted(wrap_angle(v.phi), v.action, x + dx, y + dy)
    }

    pub fn sup_norm(&self) -> f64 {
        self.gx
            .iter()
            .chain(&self.gy)
            .fold(0.0, |m: f64, v| m.max(v.abs()))
    }

    /// Nodes as `(phi, I, x, y)` rows.
    pub fn rows(&self) -> Vec<[f64; 4]> {
        (0..self.grid.len())
            .map(|k| {
                let (p, i) = self.grid.node(k);
                [p, i, self.gx[k], self.gy[k]]
            })
            .collect()
    }

    /// Sup over nodes of the forward invariance defect.
    pub fn invariance_residual(&self, map: &MapDef) -> f64 {
        (0..self.grid.len())
            .into_par_iter()
            .map(|k| {
                let (p, i) = self.grid.node(k);
                let img = map.apply(&self.point(&CylinderPoint::new(p, i)));
                self.normal_distance(&img)
            })
            .reduce_max()
    }
}

/// Solve for the invariant cylinder over `band` starting from `g = 0`.
pub fn compute_cylinder(
    map: &MapDef,
    band: (f64, f64),
    n_phi: usize,
    n_i: usize,
    tol: f64,
    max_iter: usize,
) -> Result<CylinderGraph> {
    if !(band.0 < band.1) {
        return Err(Error::InvalidInput(format!("empty band {band:?}")));
    }
    if n_phi < 4 || n_i < 4 {
        return Err(Error::InvalidInput(
            "grid needs at least 4 nodes per axis".into(),
        ));
    }
    let seed = CylinderGraph::flat(Grid::new(n_phi, n_i, band.0, band.1));
    compute_cylinder_from(map, seed, tol, max_iter)
}

/// Jacobi graph transform: unstable components are corrected with the
/// forward map, stable components with the inverse.
pub fn compute_cylinder_from(
    map: &MapDef,
    seed: CylinderGraph,
    tol: f64,
    max_iter: usize,
) -> Result<CylinderGraph> {
    map.validate()?;
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("tol must be positive".into()));
    }
    let saddle = find_saddle(map.saddle_k())?;
    let e = saddle.basis();
    let e_inv = saddle.basis_inverse();
    let mut g = seed;
    g.tol = tol;
    let mut prev = f64::INFINITY;
    let mut stalled = 0;
    for sweep in 0..=max_iter {
        let updates: Vec<(f64, f64, f64)> = (0..g.grid.len())
            .into_par_iter()
            .map(|k| {
                let (p, i) = g.grid.node(k);
                let pt = g.point(&CylinderPoint::new(p, i));
                let (fx, fy) = g.normal_offset(&map.apply(&pt));
                let (bx, by) = g.normal_offset(&map.inverse(&pt));
                let xf = e_inv * Vector2::new(fx, fy);
                let xb = e_inv * Vector2::new(bx, by);
                let corr = e * Vector2::new(xf[0] / saddle.lambda_u, saddle.lambda_s * xb[1]);
                (fx.abs().max(fy.abs()), corr[0], corr[1])
            })
            .collect();
        let residual = updates.iter().fold(0.0, |m: f64, u| m.max(u.0));
        g.residual = residual;
        g.sweeps = sweep;
        if residual < tol {
            return Ok(g);
        }
        if sweep == max_iter {
            break;
        }
        if residual >= prev {
            stalled += 1;
            if stalled >= 10 {
                break;
            }
        } else {
            stalled = 0;
        }
        let blend = if residual > prev { 0.5 } else { 1.0 };
        prev = residual;
        for (k, &(_, cx, cy)) in updates.iter().enumerate() {
            g.gx[k] -= blend * cx;
            g.gy[k] -= blend * cy;
        }
    }
    Err(Error::NoConvergence {
        iterations: g.sweeps,
        residual: g.residual,
    })
}

fn band_check(cyl: &CylinderGraph, v: CylinderPoint) -> Result<CylinderPoint> {
    if cyl.in_band(v.action) {
        Ok(v)
    } else {
        Err(Error::OutOfBand {
            action: v.action,
            lo: cyl.grid.lo,
            hi: cyl.grid.hi,
        })
    }
}

/// `F_0 = Phi|_A` in base coordinates, without band checks.
pub fn restricted_raw(map: &MapDef, cyl: &CylinderGraph, v: &CylinderPoint) -> CylinderPoint {
    CylinderPoint::of(&map.apply(&cyl.point(v)))
}

pub fn restricted_inverse_raw(
    map: &MapDef,
    cyl: &CylinderGraph,
    v: &CylinderPoint,
) -> CylinderPoint {
    CylinderPoint::of(&map.inverse(&cyl.point(v)))
}

/// `F_0 = Phi|_A`.
pub fn restricted_map(
    map: &MapDef,
    cyl: &CylinderGraph,
    v: &CylinderPoint,
) -> Result<CylinderPoint> {
    band_check(cyl, *v)?;
    band_check(cyl, restricted_raw(map, cyl, v))
}

pub fn restricted_inverse(
    map: &MapDef,
    cyl: &CylinderGraph,
    v: &CylinderPoint,
) -> Result<CylinderPoint> {
    band_check(cyl, *v)?;
    band_check(cyl, restricted_inverse_raw(map, cyl, v))
}

/// `F_0^n`, negative `n` for the inverse.
pub fn restricted_iterate(
    map: &MapDef,
    cyl: &CylinderGraph,
    v: &CylinderPoint,
    n: i64,
) -> CylinderPoint {
    let mut w = *v;
    for _ in 0..n.unsigned_abs() {
        w = if n > 0 {
            restricted_raw(map, cyl, &w)
        } else {
            restricted_inverse_raw(map, cyl, &w)
        };
    }
    w
}

/// Derivative of `F_0` at `v` in `(phi, I)`.
pub fn restricted_derivative(map: &MapDef, cyl: &CylinderGraph, v: &CylinderPoint) -> Matrix2<f64> {
    let j = map.jacobian(&cyl.point(v));
    let dg = cyl.derivative(v.phi, v.action);
    j.fixed_view::<2, 2>(0, 0).into_owned() + j.fixed_view::<2, 2>(0, 2) * dg
}

pub(crate) fn saddle_for(map: &MapDef) -> Result<SaddleData> {
    find_saddle(map.saddle_k())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::{PerturbationStep, TrigTerm};

    fn perturbed(eps: f64) -> MapDef {
        MapDef::product(4.0).with_step(PerturbationStep::new(eps, vec![TrigTerm::sin(1, -1, 1.0)]))
    }

    #[test]
    fn unperturbed_is_flat() {
        let c = compute_cylinder(&MapDef::product(4.0), (0.05, 0.35), 32, 8, 1e-12, 50).unwrap();
        assert_eq!(c.sup_norm(), 0.0);
        assert_eq!(c.residual, 0.0);
    }

    #[test]
    fn restricted_unperturbed() {
        let m = MapDef::product(4.0);
        let c = CylinderGraph::flat(Grid::new(16, 4, 0.0, 0.4));
        let w = restricted_map(&m, &c, &CylinderPoint::new(0.0, 0.2)).unwrap();
        assert_eq!(w, CylinderPoint::new(0.2, 0.2));
        assert!(restricted_map(&m, &c, &CylinderPoint::new(0.0, 0.5)).is_err());
        let d = restricted_derivative(&m, &c, &CylinderPoint::new(1.0, 0.1));
        assert_eq!(d[(0, 1)], 1.0);
    }

    #[test]
    fn perturbed_converges() {
        let m = perturbed(1e-3);
        let c = compute_cylinder(&m, (0.05, 0.35), 128, 32, 1e-9, 100).unwrap();
        assert!(c.residual < 1e-9);
        assert!(c.sup_norm() > 0.0 && c.sup_norm() < 1e-2);
        assert!(c.invariance_residual(&m) <= 2.0 * c.residual + 1e-15);
    }

    #[test]
    fn noisy_seed_returns_to_flat() {
        let m = MapDef::product(4.0);
        let mut seed = CylinderGraph::flat(Grid::new(32, 8, 0.05, 0.35));
        for k in 0..seed.grid.len() {
            let (p, i) = seed.grid.node(k);
            seed.gx[k] = 1e-2 * (3.0 * p + 7.0 * i).sin();
            seed.gy[k] = 1e-2 * (2.0 * p - 5.0 * i).cos();
        }
        let c = compute_cylinder_from(&m, seed, 1e-12, 50).unwrap();
        assert!(c.sweeps <= 50);
        assert!(c.sup_norm() < 1e-11);
    }

    #[test]
    fn max_iter_reported() {
        let m = perturbed(1e-3);
        let err = compute_cylinder(&m, (0.05, 0.35), 32, 8, 1e-14, 2).unwrap_err();
        assert!(matches!(err, Error::NoConvergence { .. }));
    }
}
