use nalgebra::{Matrix2, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use super::banded::Banded;
use super::code::{Code, ShadowOrbit};
use super::ShadowDynamics;
use crate::error::{Error, Result};
use crate::homoclinic::{HomoclinicCylinder, HomoclinicSolver, SaddleData};
use crate::maps::{MapDef, PhasePoint};
use crate::nhim::{
    restricted_iterate, spectral_gap, CylinderGraph, CylinderPoint, Direction, HolonomyProjector,
    SpectralGapReport,
};
use crate::par::*;

/// The invariant cylinder, its homoclinic cylinders and the channel width.
/// `cylinders[n - 1]` realizes map `n` of the IFS.
#[derive(Clone, Debug)]
pub struct Channel<'a> {
    pub map: &'a MapDef,
    pub cyl: &'a CylinderGraph,
    pub saddle: SaddleData,
    pub cylinders: &'a [HomoclinicCylinder],
    pub delta: f64,
    pub gap: SpectralGapReport,
}

impl<'a> Channel<'a> {
    pub fn new(
        map: &'a MapDef,
        cyl: &'a CylinderGraph,
        saddle: SaddleData,
        cylinders: &'a [HomoclinicCylinder],
        delta: f64,
    ) -> Result<Self> {
        let gap = spectral_gap(map, cyl, [1.0, 0.1])?;
        Ok(Self {
            map,
            cyl,
            saddle,
            cylinders,
            delta,
            gap,
        })
    }

    fn cylinder(&self, n: usize) -> Result<&'a HomoclinicCylinder> {
        n.checked_sub(1)
            .and_then(|i| self.cylinders.get(i))
            .ok_or_else(|| Error::InvalidInput(format!("no homoclinic cylinder for map {n}")))
    }

    pub fn solver(&self, n: usize) -> Result<HomoclinicSolver<'a>> {
        Ok(self.cylinder(n)?.solver(self.map, self.cyl, self.saddle))
    }

    /// Normal offset of `p` in the saddle eigenbasis: `(z, u)` with `z`
    /// along `e_u` and `u` along `e_s`.
    pub fn normal_coords(&self, p: &PhasePoint) -> (f64, f64) {
        let (dx, dy) = self.cyl.normal_offset(p);
        self.saddle.to_eigen(dx, dy)
    }

    /// `delta (alpha lambda)^(k / 2)`.
    pub fn bound(&self, k: usize) -> f64 {
        self.delta * self.gap.rate().powf(k as f64 / 2.0)
    }

    fn projector(&self, direction: Direction, max_iter: usize) -> HolonomyProjector<'a> {
        let mut p =
            HolonomyProjector::new(self.map, self.cyl, direction).with_delta(4.0 * self.delta);
        p.max_iter = max_iter;
        p
    }

    /// Base point of station `s`: stations that start a block are projected
    /// along strong stable fibers, those that end one along strong unstable
    /// fibers.
    pub fn station_base(&self, p: &PhasePoint, s: usize, block: usize) -> Result<CylinderPoint> {
        let dir = if s % 2 == 0 {
            Direction::Stable
        } else {
            Direction::Unstable
        };
        let proj = self.projector(dir, block + 100).project(p)?;
        Ok(proj.point)
    }

    /// Orbit indices of the stations `P_0 ... P_{2J+1}`.
    pub fn stations(&self, code: &Code) -> Result<Vec<usize>> {
        let mut out = vec![0usize];
        let mut t = code.k0;
        out.push(t);
        for &(n, k) in &code.steps {
            let (a, b) = self.margins(n);
            t += a + b;
            out.push(t);
            t += k;
            out.push(t);
        }
        Ok(out)
    }
}

impl ShadowDynamics for Channel<'_> {
    fn f0(&self, v: &CylinderPoint, n: i64) -> CylinderPoint {
        restricted_iterate(self.map, self.cyl, v, n)
    }

    fn fbar(&self, n: usize, v: &CylinderPoint) -> Result<CylinderPoint> {
        let c = self.cylinder(n)?;
        let solver = self.solver(n)?;
        let u = self.f0(v, c.m_minus as i64);
        if !(c.grid.lo..=c.grid.hi).contains(&u.action) {
            return Err(Error::DomainExceeded {
                phi: u.phi,
                action: u.action,
            });
        }
        let x = c.solve_at(&solver, &u)?;
        Ok(self.f0(&solver.stable_base(&x), c.m_plus as i64))
    }

    fn fbar_inverse(&self, n: usize, w: &CylinderPoint) -> Result<CylinderPoint> {
        let (a, b) = self.margins(n);
        let mut v = self.f0(w, -((a + b) as i64));
        let miss = |v: &CylinderPoint| -> Result<Vector2<f64>> { Ok(self.fbar(n, v)?.diff(w)) };
        let mut r = miss(&v)?;
        let h = 1e-6;
        for _ in 0..20 {
            if r.amax() < 1e-11 {
                return Ok(v);
            }
            let dp = (miss(&CylinderPoint::new(v.phi + h, v.action))? - r) / h;
            let di = (miss(&CylinderPoint::new(v.phi, v.action + h))? - r) / h;
            let jac = Matrix2::from_columns(&[dp, di]);
            let step = jac.lu().solve(&r).ok_or_else(|| Error::NoConvergence {
                iterations: 0,
                residual: r.amax(),
            })?;
            let next = CylinderPoint::new(v.phi - step[0], v.action - step[1]);
            let rn = miss(&next)?;
            if rn.amax() >= r.amax() && step.amax() < 1e-12 {
                break;
            }
            v = next;
            r = rn;
        }
        // the two-sided solves are accurate to about 1e-9
        if r.amax() < 1e-8 {
            Ok(v)
        } else {
            Err(Error::NoConvergence {
                iterations: 20,
                residual: r.amax(),
            })
        }
    }

    fn margins(&self, n: usize) -> (usize, usize) {
        self.cylinder(n)
            .map(|c| (c.m_minus, c.m_plus))
            .unwrap_or((0, 0))
    }
}

/// A true orbit of the 4D map through the channel, stored point by point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelOrbit {
    pub points: Vec<PhasePoint>,
    /// Orbit indices of `P_0 ... P_{2J+1}`.
    pub stations: Vec<usize>,
    /// `|v_s - v*_s|` per station.
    pub deviations: Vec<f64>,
    /// `delta (alpha lambda)^(k_J / 2)`.
    pub bound: f64,
    /// Offset of `P_0` along `e_u`.
    pub z_in: f64,
    pub max_defect: f64,
    pub code: Code,
}

impl ChannelOrbit {
    /// `|Phi(P_t) - P_{t+1}|` per step.
    pub fn defects(&self, map: &MapDef) -> Vec<f64> {
        self.points
            .par_iter()
            .zip(self.points[1..].par_iter())
            .map(|(p, q)| map.apply(p).distance(q))
            .collect()
    }

    pub fn action_change(&self) -> f64 {
        match (self.points.first(), self.points.last()) {
            (Some(a), Some(b)) => b.action - a.action,
            _ => 0.0,
        }
    }

    /// Rows `(step, phi, I, x, y, station, deviation)`.
    pub fn rows(&self) -> Vec<(usize, PhasePoint, bool, Option<f64>)> {
        self.points
            .iter()
            .enumerate()
            .map(|(t, p)| {
                let s = self.stations.iter().position(|&x| x == t);
                (t, *p, s.is_some(), s.map(|s| self.deviations[s]))
            })
            .collect()
    }
}

/// Piecewise guess: cylinder orbits with decaying normal offsets along the
/// blocks, the two-sided excursion orbits in between.
fn initial_guess(
    channel: &Channel,
    shadow: &ShadowOrbit,
    stations: &[usize],
) -> Result<Vec<PhasePoint>> {
    let code = &shadow.code;
    let blocks = code.blocks();
    let total = *stations.last().expect("at least two stations");
    let mut pts = vec![PhasePoint::new(0.0, 0.0, 0.0, 0.0); total + 1];
    let lam = channel.saddle.lambda_s;
    // excursion segments and the normal offsets they hand to the blocks
    let mut enter = vec![0.0; blocks.len()];
    let mut leave = vec![0.0; blocks.len()];
    for (j, &(n, _)) in code.steps.iter().enumerate() {
        let c = channel.cylinder(n)?;
        let solver = channel.solver(n)?;
        let v = channel.f0(&shadow.points[2 * j + 1], c.m_minus as i64);
        let x = c.solve_at(&solver, &v).map_err(|e| Error::ShootingFailed {
            excursion: j + 1,
            reason: e.to_string(),
        })?;
        let exc = solver.excursion(&x);
        let centre = solver.m_back() as usize;
        let seg = &exc[centre - c.m_minus..=centre + c.m_plus];
        let t0 = stations[2 * j + 1];
        pts[t0..=t0 + seg.len() - 1].copy_from_slice(seg);
        leave[j] = channel.normal_coords(&seg[0]).0;
        enter[j + 1] = channel.normal_coords(&seg[seg.len() - 1]).1;
    }
    for (j, &k) in blocks.iter().enumerate() {
        let t0 = stations[2 * j];
        let mut v = shadow.points[2 * j];
        for i in 0..=k {
            // keep the excursion's own end points
            if !((i == 0 && j > 0) || (i == k && j + 1 < blocks.len())) {
                let z = leave[j] * lam.powi((k - i) as i32);
                let u = enter[j] * lam.powi(i as i32);
                let (dx, dy) = channel.saddle.from_eigen(z, u);
                pts[t0 + i] = channel.cyl.offset_point(&v, dx, dy);
            }
            v = channel.f0(&v, 1);
        }
    }
    Ok(pts)
}

const KL: usize = 6;
const KU: usize = 4;

/// Defects `Phi(P_t) - P_{t+1}` and the end condition `z(P_T) = 0`.
fn residual(channel: &Channel, pts: &[PhasePoint]) -> Vec<f64> {
    let map = channel.map;
    let t = pts.len() - 1;
    let defects: Vec<Vector4<f64>> = (0..t)
        .into_par_iter()
        .map(|i| map.apply_lifted(&pts[i]).wrapped_diff(&pts[i + 1]))
        .collect();
    let mut out: Vec<f64> = defects
        .iter()
        .flat_map(|d| d.iter().copied().collect::<Vec<_>>())
        .collect();
    out.push(channel.normal_coords(&pts[t]).0);
    out
}

/// Newton matrix for the unknowns `(z_in, P_1, ..., P_T)`.
fn jacobian(channel: &Channel, pts: &[PhasePoint]) -> Banded {
    let map = channel.map;
    let t = pts.len() - 1;
    let n = 4 * t + 1;
    let col = |i: usize, c: usize| 4 * i - 3 + c;
    let jacs: Vec<_> = (0..t)
        .into_par_iter()
        .map(|i| map.jacobian(&pts[i]))
        .collect();
    let mut a = Banded::zeros(n, KL, KU);
    let e_u = Vector4::new(0.0, 0.0, channel.saddle.e_u[0], channel.saddle.e_u[1]);
    for (i, j) in jacs.iter().enumerate() {
        for r in 0..4 {
            if i == 0 {
                a.set(r, 0, (j * e_u)[r]);
            } else {
                for c in 0..4 {
                    a.set(4 * i + r, col(i, c), j[(r, c)]);
                }
            }
            a.set(4 * i + r, col(i + 1, r), -1.0);
        }
    }
    let b = channel.saddle.basis_inverse();
    let (b0, b1) = (b[(0, 0)], b[(0, 1)]);
    let p = &pts[t];
    let dg = channel.cyl.derivative(p.phi, p.action);
    a.set(4 * t, col(t, 0), -(b0 * dg[(0, 0)] + b1 * dg[(1, 0)]));
    a.set(4 * t, col(t, 1), -(b0 * dg[(0, 1)] + b1 * dg[(1, 1)]));
    a.set(4 * t, col(t, 2), b0);
    a.set(4 * t, col(t, 3), b1);
    a
}

fn amax(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn with_update(
    channel: &Channel,
    v0: &CylinderPoint,
    pts: &[PhasePoint],
    z: f64,
    dx: &[f64],
    s: f64,
) -> (f64, Vec<PhasePoint>) {
    let z = z + s * dx[0];
    let (ex, ey) = (channel.saddle.e_u[0], channel.saddle.e_u[1]);
    let mut out = Vec::with_capacity(pts.len());
    out.push(channel.cyl.offset_point(v0, z * ex, z * ey));
    for (i, p) in pts.iter().enumerate().skip(1) {
        let k = 4 * i - 3;
        out.push(PhasePoint::lifted(
            p.phi + s * dx[k],
            p.action + s * dx[k + 1],
            p.x + s * dx[k + 2],
            p.y + s * dx[k + 3],
        ));
    }
    (z, out)
}

/// Solve the multiple-shooting problem: `P_0` on the strong unstable fiber
/// of `v*_0`, every step an iterate of the map, `P_T` on `W^s(A)`.
fn solve_bvp(
    channel: &Channel,
    v0: &CylinderPoint,
    guess: Vec<PhasePoint>,
) -> Result<(f64, Vec<PhasePoint>, f64)> {
    let zero = vec![0.0; 4 * (guess.len() - 1) + 1];
    let (mut z, mut pts) = with_update(channel, v0, &guess, 0.0, &zero, 0.0);
    let mut r = residual(channel, &pts);
    let mut norm = amax(&r);
    for _ in 0..40 {
        if norm < 1e-13 {
            break;
        }
        let mut dx: Vec<f64> = r.iter().map(|x| -x).collect();
        jacobian(channel, &pts)
            .solve(&mut dx)
            .ok_or(Error::ShootingFailed {
                excursion: 0,
                reason: "singular multiple-shooting matrix".into(),
            })?;
        let mut s = 1.0;
        let mut accepted = false;
        for _ in 0..20 {
            let (zt, pt) = with_update(channel, v0, &pts, z, &dx, s);
            let rt = residual(channel, &pt);
            if amax(&rt) < norm {
                (z, pts, r) = (zt, pt, rt);
                norm = amax(&r);
                accepted = true;
                break;
            }
            s *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok((z, pts, norm))
}

/// True orbit of the map that follows `shadow` through the channel.
pub fn shoot_channel_orbit(channel: &Channel, shadow: &ShadowOrbit) -> Result<ChannelOrbit> {
    let code = &shadow.code;
    let stations = channel.stations(code)?;
    let guess = initial_guess(channel, shadow, &stations)?;
    let (z_in, pts, norm) = solve_bvp(channel, &shadow.points[0], guess)?;
    let points: Vec<PhasePoint> = pts.into_iter().map(PhasePoint::reduced).collect();
    let mut orbit = ChannelOrbit {
        points,
        stations,
        deviations: Vec::new(),
        bound: channel.bound(code.last_block()),
        z_in,
        max_defect: 0.0,
        code: code.clone(),
    };
    orbit.max_defect = amax(&orbit.defects(channel.map));
    if orbit.max_defect > 1e-10 || norm > 1e-10 {
        let worst = orbit
            .defects(channel.map)
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map_or(0, |(t, _)| t);
        let excursion = orbit.stations.iter().filter(|&&s| s <= worst).count() / 2;
        return Err(Error::ShootingFailed {
            excursion,
            reason: format!("step defect {:e} at t = {worst}", orbit.max_defect),
        });
    }
    orbit.deviations = station_deviations(channel, &orbit, shadow)?;
    let worst = amax(&orbit.deviations);
    if worst > 2.0 * orbit.bound {
        return Err(Error::BoundViolated {
            deviation: worst,
            bound: orbit.bound,
        });
    }
    Ok(orbit)
}

pub(crate) fn station_deviations(
    channel: &Channel,
    orbit: &ChannelOrbit,
    shadow: &ShadowOrbit,
) -> Result<Vec<f64>> {
    let blocks = orbit.code.blocks();
    (0..orbit.stations.len())
        .into_par_iter()
        .map(|s| {
            let p = &orbit.points[orbit.stations[s]];
            let v = channel.station_base(p, s, blocks[s / 2])?;
            Ok(v.distance(&shadow.points[s]))
        })
        .collect()
}
