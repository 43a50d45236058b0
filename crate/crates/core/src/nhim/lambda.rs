use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{restricted_iterate, saddle_for, spectral_gap, CylinderGraph, CylinderPoint};
use crate::error::{Error, Result};
use crate::homoclinic::SaddleData;
use crate::maps::{angle_diff, MapDef, PhasePoint};
use crate::par::*;

/// Seed surface `u = w(v, z)` in eigen-coordinates relative to the graph.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SeedSurface {
    /// `w = c`.
    Constant { offset: f64 },
    /// The local unstable manifold itself.
    Unstable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    /// Sup distance `|u - U(v, z)|` per iterate, starting at the seed.
    pub c0: Vec<f64>,
    /// Sup slope mismatch in `z` per iterate.
    pub c1: Vec<f64>,
    /// Successive `c0` ratios above roundoff.
    pub ratios: Vec<f64>,
    pub lambda: f64,
    pub rate_bound: f64,
    /// First iterate at which the surface stopped being a graph over `z`.
    pub fold_at: Option<usize>,
    pub passed: bool,
}

/// Distances below this are treated as zero.
const FLOOR: f64 = 1e-13;

struct Local<'a> {
    map: &'a MapDef,
    cyl: &'a CylinderGraph,
    saddle: SaddleData,
    delta: f64,
}

impl Local<'_> {
    /// `(v, z, u)` of a phase point.
    fn coords(&self, p: &PhasePoint) -> (CylinderPoint, f64, f64) {
        let (dx, dy) = self.cyl.normal_offset(p);
        let (z, u) = self.saddle.to_eigen(dx, dy);
        (CylinderPoint::of(p), z, u)
    }

    fn point(&self, v: &CylinderPoint, z: f64, u: f64) -> PhasePoint {
        let (dx, dy) = self.saddle.from_eigen(z, u);
        self.cyl.offset_point(v, dx, dy)
    }

    /// Local manifold graphs by shooting a tiny seed `n` steps.
    ///
    /// Unstable: returns `U(v, c)`, the `u` coordinate of `W^u` over `(v, z = c)`.
    /// Stable: returns `Z(v, c)`, the `z` coordinate of `W^s` over `(v, u = c)`.
    fn manifold_graph(&self, v: &CylinderPoint, c: f64, n: usize, unstable: bool) -> Result<f64> {
        let steps = if unstable { n as i64 } else { -(n as i64) };
        let gain = self.saddle.lambda_u.powi(n as i32);
        let mut w = restricted_iterate(self.map, self.cyl, v, -steps);
        let mut s = c / gain;
        let h_s = 1e-6 * self.delta / gain;
        let eval = |w: &CylinderPoint, s: f64| {
            let seed = if unstable {
                self.point(w, s, 0.0)
            } else {
                self.point(w, 0.0, s)
            };
            let q = self.map.iterate_lifted(&seed, steps);
            let (b, zq, uq) = self.coords(&q);
            let (hit, other) = if unstable { (zq, uq) } else { (uq, zq) };
            (
                Vector3::new(angle_diff(b.phi, v.phi), b.action - v.action, hit - c),
                other,
            )
        };
        for _ in 0..12 {
            let (r, out) = eval(&w, s);
            if r[0].abs() < 1e-14 && r[1].abs() < 1e-14 && r[2].abs() <= 1e-13 * c.abs().max(1e-9) {
                return Ok(out);
            }
            let h = 1e-7;
            let c0 = (eval(&CylinderPoint::new(w.phi + h, w.action), s).0 - r) / h;
            let c1 = (eval(&CylinderPoint::new(w.phi, w.action + h), s).0 - r) / h;
            let c2 = (eval(&w, s + h_s).0 - r) / h_s;
            let jac = Matrix3::from_columns(&[c0, c1, c2]);
            let step = jac.lu().solve(&r).ok_or_else(|| Error::NoConvergence {
                iterations: 0,
                residual: r.amax(),
            })?;
            w = CylinderPoint::new(w.phi - step[0], w.action - step[1]);
            s -= step[2];
        }
        // the seed offset is resolved only to an ulp of the base point, which
        // the shot amplifies by `gain`
        let (r, out) = eval(&w, s);
        if r[0].abs().max(r[1].abs()) < 1e-9 && r[2].abs() < 1e-12 + gain * 1e-15 {
            Ok(out)
        } else {
            Err(Error::NoConvergence {
                iterations: 12,
                residual: r.amax(),
            })
        }
    }
}

/// Iterate a seed surface `m_max` times and measure its distance to the
/// local unstable manifold of the cylinder.
pub fn lambda_lemma_check(
    map: &MapDef,
    cyl: &CylinderGraph,
    seed: &SeedSurface,
    m_max: usize,
    delta: f64,
) -> Result<ConvergenceReport> {
    if m_max == 0 || !(delta > 0.0) {
        return Err(Error::InvalidInput("need m_max >= 1 and delta > 0".into()));
    }
    let saddle = saddle_for(map)?;
    let gap = spectral_gap(map, cyl, [1.0, 0.1])?;
    let local = Local {
        map,
        cyl,
        saddle,
        delta,
    };
    let (lo, hi) = cyl.band();
    let n_z = 9;
    let window = delta * saddle.lambda_u.powi(-(m_max as i32));
    let bases: Vec<CylinderPoint> = (0..8)
        .flat_map(|j| {
            [0.25, 0.5, 0.75].map(|f| {
                CylinderPoint::new(j as f64 * std::f64::consts::TAU / 8.0, lo + f * (hi - lo))
            })
        })
        .collect();

    // per base row: the iterated samples, one Vec per iterate
    let rows: Vec<Result<Vec<Vec<(f64, f64, f64)>>>> = bases
        .par_iter()
        .map(|v0| {
            let mut pts = Vec::with_capacity(n_z);
            for j in 0..n_z {
                let zeta = window * (2.0 * j as f64 / (n_z - 1) as f64 - 1.0);
                // centre the window on the crossing with W^s
                let (z0, u0) = match seed {
                    SeedSurface::Constant { offset } => (
                        local.manifold_graph(v0, *offset, m_max + 2, false)? + zeta,
                        *offset,
                    ),
                    SeedSurface::Unstable => (zeta, local.manifold_graph(v0, zeta, 2, true)?),
                };
                pts.push(local.point(v0, z0, u0));
            }
            let mut per_iter = Vec::with_capacity(m_max + 1);
            for m in 0..=m_max {
                if m > 0 {
                    for p in pts.iter_mut() {
                        *p = map.apply_lifted(p);
                    }
                }
                let mut row = Vec::with_capacity(n_z);
                for p in &pts {
                    let (v, z, u) = local.coords(p);
                    let big_u = local.manifold_graph(&v, z, m + 2, true)?;
                    row.push((z, u, big_u));
                }
                per_iter.push(row);
            }
            Ok(per_iter)
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;

    let mut c0 = vec![0.0f64; m_max + 1];
    let mut c1 = vec![0.0f64; m_max + 1];
    let mut fold_at = None;
    for row in &rows {
        for (m, samples) in row.iter().enumerate() {
            for (j, &(z, u, big_u)) in samples.iter().enumerate() {
                c0[m] = c0[m].max((u - big_u).abs());
                if j > 0 {
                    let (zp, up, bp) = samples[j - 1];
                    let dz = z - zp;
                    if dz <= 0.0 {
                        fold_at = Some(fold_at.map_or(m, |f: usize| f.min(m)));
                        continue;
                    }
                    c1[m] = c1[m].max(((u - up) - (big_u - bp)).abs() / dz);
                }
            }
        }
    }
    let ratios: Vec<f64> = c0
        .windows(2)
        .take_while(|w| w[1] > FLOOR)
        .map(|w| w[1] / w[0])
        .collect();
    let rate_bound = gap.rate() + 0.1;
    let passed = fold_at.is_none() && ratios.iter().all(|&r| r <= rate_bound);
    Ok(ConvergenceReport {
        c0,
        c1,
        ratios,
        lambda: gap.lambda,
        rate_bound,
        fold_at,
        passed,
    })
}
