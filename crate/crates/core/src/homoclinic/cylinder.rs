//! Homoclinic cylinders of the 4D map by two-sided shooting.
//!
//! A sample over `v` joins a point on the strong unstable fiber of
//! `F_0^{-M-}(v)` to a point on the strong stable fiber of some `w+`:
//! `Phi^{M-}(A(w-) + s e_u) = Phi^{-M+}(A(w+) - t e_s)`. Then `pi^u = v` and
//! `pi^s = F_0^{-M+}(w+)`.

use nalgebra::{Matrix4, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use super::saddle::SaddleData;
use super::separatrix::HomoclinicPoint;
use crate::error::{Error, Result};
use crate::interp::Grid;
use crate::maps::{angle_diff, MapDef, PhasePoint};
use crate::nhim::{restricted_iterate, CylinderGraph, CylinderPoint};
use crate::par::*;

/// Unknowns of one two-sided solve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoSided {
    pub v: CylinderPoint,
    pub s: f64,
    pub w_plus: CylinderPoint,
    pub t: f64,
    pub residual: f64,
}

/// Iterate `p` by `n` steps (negative for the inverse), carrying tangents.
pub fn push_tangents(map: &MapDef, p: &PhasePoint, vs: &mut [Vector4<f64>], n: i64) -> PhasePoint {
    let mut q = *p;
    for _ in 0..n.unsigned_abs() {
        if n > 0 {
            let j = map.jacobian(&q);
            vs.iter_mut().for_each(|v| *v = j * *v);
            q = map.apply_lifted(&q);
        } else {
            q = map.inverse_lifted(&q);
            let j_inv = map
                .jacobian(&q)
                .try_inverse()
                .unwrap_or_else(Matrix4::identity);
            vs.iter_mut().for_each(|v| *v = j_inv * *v);
        }
    }
    q
}

pub(crate) fn wrapped4(d: Vector4<f64>) -> Vector4<f64> {
    Vector4::new(angle_diff(d[0], 0.0), d[1], angle_diff(d[2], 0.0), d[3])
}

fn normal4(e: [f64; 2], scale: f64) -> Vector4<f64> {
    Vector4::new(0.0, 0.0, scale * e[0], scale * e[1])
}

/// Shooting context for one homoclinic orbit of the hyperbolic factor.
#[derive(Clone, Copy, Debug)]
pub struct HomoclinicSolver<'a> {
    pub map: &'a MapDef,
    pub cyl: &'a CylinderGraph,
    pub saddle: SaddleData,
    pub point: HomoclinicPoint,
}

impl<'a> HomoclinicSolver<'a> {
    pub fn m_back(&self) -> i64 {
        self.point.unstable.n
    }

    pub fn m_fwd(&self) -> i64 {
        self.point.stable.n
    }

    pub fn w_minus(&self, v: &CylinderPoint) -> CylinderPoint {
        restricted_iterate(self.map, self.cyl, v, -self.m_back())
    }

    /// Boundary point on the unstable side.
    pub fn q_minus(&self, w_minus: &CylinderPoint, s: f64) -> PhasePoint {
        let e = self.saddle.e_u;
        self.cyl.offset_point(w_minus, s * e[0], s * e[1])
    }

    /// Boundary point on the stable side.
    pub fn q_plus(&self, w_plus: &CylinderPoint, t: f64) -> PhasePoint {
        let e = self.saddle.e_s;
        self.cyl.offset_point(w_plus, -t * e[0], -t * e[1])
    }

    /// Product-map guess for the unknowns over `v`.
    pub fn guess(&self, v: &CylinderPoint) -> TwoSided {
        TwoSided {
            v: *v,
            s: self.point.unstable.s,
            w_plus: restricted_iterate(self.map, self.cyl, v, self.m_fwd()),
            t: self.point.stable.s,
            residual: f64::INFINITY,
        }
    }

    fn residual_and_jacobian(
        &self,
        w_minus: &CylinderPoint,
        x: &TwoSided,
    ) -> (Vector4<f64>, Matrix4<f64>) {
        let qm = self.q_minus(w_minus, x.s);
        let mut du = [normal4(self.saddle.e_u, 1.0)];
        let a = push_tangents(self.map, &qm, &mut du, self.m_back());

        let qp = self.q_plus(&x.w_plus, x.t);
        let dg = self.cyl.derivative(x.w_plus.phi, x.w_plus.action);
        let mut dv = [
            Vector4::new(1.0, 0.0, dg[(0, 0)], dg[(1, 0)]),
            Vector4::new(0.0, 1.0, dg[(0, 1)], dg[(1, 1)]),
            normal4(self.saddle.e_s, -1.0),
        ];
        let b = push_tangents(self.map, &qp, &mut dv, -self.m_fwd());
        let r = wrapped4(a.to_vector() - b.to_vector());
        let j = Matrix4::from_columns(&[du[0], -dv[0], -dv[1], -dv[2]]);
        (r, j)
    }

    /// Damped Newton from `start`.
    pub fn solve(&self, start: TwoSided) -> Result<TwoSided> {
        let w_minus = self.w_minus(&start.v);
        let mut x = start;
        let (mut r, mut j) = self.residual_and_jacobian(&w_minus, &x);
        let mut norm = r.amax();
        // relative size of the last Newton step
        let mut last_step = f64::INFINITY;
        for _ in 0..30 {
            if norm < 1e-13 {
                break;
            }
            let step = j
                .lu()
                .solve(&r)
                .ok_or_else(|| self.fail(&x, "singular jacobian"))?;
            last_step = (step[0] / x.s)
                .abs()
                .max((step[3] / x.t).abs())
                .max(step[1].abs())
                .max(step[2].abs());
            if last_step < 1e-12 {
                break;
            }
            let mut lam = 1.0;
            let mut accepted = false;
            for _ in 0..12 {
                let trial = TwoSided {
                    s: x.s - lam * step[0],
                    w_plus: CylinderPoint::new(
                        x.w_plus.phi - lam * step[1],
                        x.w_plus.action - lam * step[2],
                    ),
                    t: x.t - lam * step[3],
                    ..x
                };
                let (rt, jt) = self.residual_and_jacobian(&w_minus, &trial);
                if rt.amax() < norm || rt.amax() < 1e-13 {
                    x = trial;
                    r = rt;
                    j = jt;
                    norm = rt.amax();
                    accepted = true;
                    break;
                }
                lam *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        x.residual = norm;
        // base roundoff reaches the normal block through the coupling and is
        // amplified by lambda_u^M, so the residual floor can sit far above
        // 1e-13 while the unknowns no longer move
        if norm < 1e-8 || last_step < 1e-12 {
            Ok(x)
        } else {
            Err(self.fail(&x, &format!("residual {norm:e}")))
        }
    }

    fn fail(&self, x: &TwoSided, reason: &str) -> Error {
        Error::ContinuationFailed {
            phi: x.v.phi,
            action: x.v.action,
            reason: reason.to_string(),
        }
    }

    /// The homoclinic point `x_B(v)`.
    pub fn point_of(&self, x: &TwoSided) -> PhasePoint {
        self.map
            .iterate_lifted(&self.q_minus(&self.w_minus(&x.v), x.s), self.m_back())
            .reduced()
    }

    /// `pi^s(x_B(v))`.
    pub fn stable_base(&self, x: &TwoSided) -> CylinderPoint {
        restricted_iterate(self.map, self.cyl, &x.w_plus, -self.m_fwd())
    }

    /// The orbit `Phi^j(x_B)` for `j in -m_back..=m_fwd`, each point taken
    /// from the side where it is computed stably.
    pub fn excursion(&self, x: &TwoSided) -> Vec<PhasePoint> {
        let mut out = Vec::new();
        let mut p = self.q_minus(&self.w_minus(&x.v), x.s);
        out.push(p);
        for _ in 0..self.m_back() {
            p = self.map.apply_lifted(&p);
            out.push(p.reduced());
        }
        let mut back = Vec::new();
        let mut q = self.q_plus(&x.w_plus, x.t);
        back.push(q.reduced());
        for _ in 1..self.m_fwd() {
            q = self.map.inverse_lifted(&q);
            back.push(q.reduced());
        }
        back.reverse();
        out[0] = out[0].reduced();
        out.extend(back);
        out
    }

    /// Unit tangents of the strong unstable and strong stable fibers at `x_B`.
    pub fn fiber_tangents(&self, x: &TwoSided) -> (Vector4<f64>, Vector4<f64>) {
        let mut du = [normal4(self.saddle.e_u, 1.0)];
        push_tangents(
            self.map,
            &self.q_minus(&self.w_minus(&x.v), x.s),
            &mut du,
            self.m_back(),
        );
        (du[0].normalize(), self.stable_fiber(x, 0))
    }

    /// Strong stable fiber direction at `x_B`, seeded along `e_s` at a point
    /// `depth` iterates beyond the stable boundary point.
    pub fn stable_fiber(&self, x: &TwoSided, depth: i64) -> Vector4<f64> {
        let mut ds = [normal4(self.saddle.e_s, -1.0)];
        if depth > 0 {
            let w = restricted_iterate(self.map, self.cyl, &x.w_plus, depth);
            let q = self.q_plus(&w, x.t * self.saddle.lambda_s.powi(depth as i32));
            push_tangents(self.map, &q, &mut ds, -depth);
        }
        push_tangents(
            self.map,
            &self.q_plus(&x.w_plus, x.t),
            &mut ds,
            -self.m_fwd(),
        );
        ds[0].normalize()
    }
}

/// A sampled homoclinic cylinder, parametrized by its unstable projection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomoclinicCylinder {
    pub id: usize,
    pub grid: Grid,
    pub homoclinic: HomoclinicPoint,
    pub solutions: Vec<TwoSided>,
    /// `x_B` per grid node.
    pub points: Vec<PhasePoint>,
    /// `pi^s(x_B)` per grid node.
    pub stable_bases: Vec<CylinderPoint>,
    pub m_minus: usize,
    pub m_plus: usize,
    pub delta: f64,
}

impl HomoclinicCylinder {
    pub fn solver<'a>(
        &self,
        map: &'a MapDef,
        cyl: &'a CylinderGraph,
        saddle: SaddleData,
    ) -> HomoclinicSolver<'a> {
        HomoclinicSolver {
            map,
            cyl,
            saddle,
            point: self.homoclinic,
        }
    }

    /// Two-sided solution over an arbitrary base point, started from the
    /// nearest solved node shifted along `F_0^{M+}`.
    pub fn solve_at(&self, solver: &HomoclinicSolver, v: &CylinderPoint) -> Result<TwoSided> {
        let near = self
            .solutions
            .iter()
            .min_by(|a, b| a.v.distance(v).total_cmp(&b.v.distance(v)))
            .ok_or_else(|| Error::InvalidInput("empty homoclinic cylinder".into()))?;
        let d = restricted_iterate(solver.map, solver.cyl, v, solver.m_fwd()).diff(
            &restricted_iterate(solver.map, solver.cyl, &near.v, solver.m_fwd()),
        );
        let start = TwoSided {
            v: *v,
            w_plus: CylinderPoint::new(near.w_plus.phi + d[0], near.w_plus.action + d[1]),
            ..*near
        };
        solver
            .solve(start)
            .or_else(|_| solver.solve(solver.guess(v)))
    }

    /// Max displacement of the samples from the product cylinder `A x {p_h}`.
    pub fn product_displacement(&self) -> f64 {
        let ph = PhasePoint::new(0.0, 0.0, self.homoclinic.p_h[0], self.homoclinic.p_h[1]);
        self.points
            .iter()
            .zip(&self.solutions)
            .map(|(p, x)| {
                let q = PhasePoint::new(x.v.phi, x.v.action, ph.x, ph.y);
                p.distance(&q)
            })
            .fold(0.0, f64::max)
    }

    /// Rows `(phi, I, x, y)`.
    pub fn rows(&self) -> Vec<[f64; 4]> {
        self.solutions
            .iter()
            .zip(&self.points)
            .map(|(s, p)| [s.v.phi, s.v.action, p.x, p.y])
            .collect()
    }
}

/// Solve every node of `grid`, falling back to a solved neighbour's
/// unknowns where the product guess fails.
pub fn build_homoclinic_cylinder(
    map: &MapDef,
    cyl: &CylinderGraph,
    saddle: &SaddleData,
    point: &HomoclinicPoint,
    grid: Grid,
    delta: f64,
    id: usize,
) -> Result<HomoclinicCylinder> {
    let solver = HomoclinicSolver {
        map,
        cyl,
        saddle: *saddle,
        point: *point,
    };
    let nodes: Vec<CylinderPoint> = (0..grid.len())
        .map(|k| {
            let (p, i) = grid.node(k);
            CylinderPoint::new(p, i)
        })
        .collect();
    let mut sols: Vec<Result<TwoSided>> = nodes
        .par_iter()
        .map(|v| solver.solve(solver.guess(v)))
        .collect();
    // sweep failed nodes from solved neighbours along phi
    for _ in 0..grid.n_phi {
        let failed: Vec<usize> = (0..sols.len()).filter(|&k| sols[k].is_err()).collect();
        if failed.is_empty() {
            break;
        }
        let mut progress = false;
        for k in failed {
            let (j, i) = (k % grid.n_phi, k / grid.n_phi);
            let nbrs = [(j + grid.n_phi - 1) % grid.n_phi, (j + 1) % grid.n_phi];
            for nj in nbrs {
                if let Ok(n) = &sols[grid.index(nj, i)] {
                    let shift = nodes[k].diff(&n.v);
                    let start = TwoSided {
                        v: nodes[k],
                        w_plus: CylinderPoint::new(
                            n.w_plus.phi + shift[0],
                            n.w_plus.action + shift[1],
                        ),
                        ..*n
                    };
                    if let Ok(x) = solver.solve(start) {
                        sols[k] = Ok(x);
                        progress = true;
                        break;
                    }
                }
            }
        }
        if !progress {
            break;
        }
    }
    let solutions = sols.into_iter().collect::<Result<Vec<_>>>()?;
    let points: Vec<PhasePoint> = solutions.par_iter().map(|x| solver.point_of(x)).collect();
    let stable_bases: Vec<CylinderPoint> = solutions
        .par_iter()
        .map(|x| solver.stable_base(x))
        .collect();

    // smallest counts after which the orbit stays within delta of A
    let counts: Vec<(usize, usize)> = solutions
        .par_iter()
        .map(|x| {
            let orbit = solver.excursion(x);
            let far: Vec<bool> = orbit
                .iter()
                .map(|p| cyl.normal_distance(p) >= delta)
                .collect();
            let centre = solver.m_back() as usize;
            let m_plus = (centre..far.len())
                .rev()
                .find(|&j| far[j])
                .map_or(0, |j| j + 1 - centre);
            let m_minus = (0..=centre).find(|&j| far[j]).map_or(0, |j| centre + 1 - j);
            (m_minus, m_plus)
        })
        .collect();
    let m_minus = counts.iter().map(|c| c.0).max().unwrap_or(0);
    let m_plus = counts.iter().map(|c| c.1).max().unwrap_or(0);
    Ok(HomoclinicCylinder {
        id,
        grid,
        homoclinic: *point,
        solutions,
        points,
        stable_bases,
        m_minus,
        m_plus,
        delta,
    })
}

/// Scattering map `F_B = pi^s o (pi^u)^{-1}` sampled on the cylinder grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatteringMapSample {
    pub id: usize,
    pub grid: Grid,
    /// `Psi - phi`, wrapped.
    pub dpsi: Vec<f64>,
    /// `Y - I`.
    pub dy: Vec<f64>,
    pub exactness_residual: f64,
    pub interp: String,
}

impl ScatteringMapSample {
    pub fn from_cylinder(b: &HomoclinicCylinder, cyl: &CylinderGraph) -> Self {
        let (dpsi, dy) = b
            .solutions
            .iter()
            .zip(&b.stable_bases)
            .map(|(x, sb)| {
                let d = sb.diff(&x.v);
                (d[0], d[1])
            })
            .unzip();
        let mut f = Self {
            id: b.id,
            grid: b.grid,
            dpsi,
            dy,
            exactness_residual: 0.0,
            interp: crate::nhim::INTERP_RULE.to_string(),
        };
        f.exactness_residual = f.exactness(cyl, 5, 512);
        f
    }

    /// The identity map on `grid`.
    pub fn identity(id: usize, grid: Grid) -> Self {
        Self {
            id,
            grid,
            dpsi: vec![0.0; grid.len()],
            dy: vec![0.0; grid.len()],
            exactness_residual: 0.0,
            interp: crate::nhim::INTERP_RULE.to_string(),
        }
    }

    pub fn in_domain(&self, v: &CylinderPoint) -> bool {
        (self.grid.lo..=self.grid.hi).contains(&v.action)
    }

    /// Interpolated `F(v)`; the angle is returned unreduced.
    pub fn eval_lifted(&self, v: &CylinderPoint) -> (f64, f64) {
        (
            v.phi + self.grid.eval(&self.dpsi, v.phi, v.action),
            v.action + self.grid.eval(&self.dy, v.phi, v.action),
        )
    }

    pub fn eval(&self, v: &CylinderPoint) -> Result<CylinderPoint> {
        if !self.in_domain(v) {
            return Err(Error::DomainExceeded {
                phi: v.phi,
                action: v.action,
            });
        }
        let (p, i) = self.eval_lifted(v);
        Ok(CylinderPoint::new(p, i))
    }

    /// Derivative of the interpolant in `(phi, I)`.
    pub fn derivative(&self, v: &CylinderPoint) -> nalgebra::Matrix2<f64> {
        let (_, pp, pi) = self.grid.eval_grad(&self.dpsi, v.phi, v.action);
        let (_, yp, yi) = self.grid.eval_grad(&self.dy, v.phi, v.action);
        nalgebra::Matrix2::new(1.0 + pp, pi, yp, 1.0 + yi)
    }

    pub fn sup_displacement(&self) -> f64 {
        self.dpsi
            .iter()
            .chain(&self.dy)
            .fold(0.0, |m: f64, v| m.max(v.abs()))
    }

    /// Largest difference between the action integrals of the induced
    /// 1-form `I dphi + g_y dg_x` over `n_circles` horizontal circles and
    /// over their images.
    pub fn exactness(&self, cyl: &CylinderGraph, n_circles: usize, n: usize) -> f64 {
        let (lo, hi) = (self.grid.lo, self.grid.hi);
        let form = |p: Vector2<f64>, dp: Vector2<f64>| {
            let (_, gy) = cyl.eval(p[0], p[1]);
            let dg = cyl.derivative(p[0], p[1]);
            p[1] * dp[0] + gy * (dg[(0, 0)] * dp[0] + dg[(0, 1)] * dp[1])
        };
        (0..n_circles)
            .map(|c| {
                let action = lo + (hi - lo) * (c as f64 + 1.0) / (n_circles as f64 + 1.0);
                let (mut a, mut b) = (0.0, 0.0);
                for j in 0..n {
                    let phi = std::f64::consts::TAU * j as f64 / n as f64;
                    let v = CylinderPoint::new(phi, action);
                    a += form(Vector2::new(phi, action), Vector2::new(1.0, 0.0));
                    let (pp, ii) = self.eval_lifted(&v);
                    let d = self.derivative(&v) * Vector2::new(1.0, 0.0);
                    b += form(Vector2::new(pp, ii), d);
                }
                let h = std::f64::consts::TAU / n as f64;
                ((a - b) * h).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Rows `(phi, I, Psi, Y)`.
    pub fn rows(&self) -> Vec<[f64; 4]> {
        (0..self.grid.len())
            .map(|k| {
                let (p, i) = self.grid.node(k);
                [
                    p,
                    i,
                    crate::maps::wrap_angle(p + self.dpsi[k]),
                    i + self.dy[k],
                ]
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::homoclinic::{find_primary_homoclinic, find_saddle};
    use crate::maps::{PerturbationStep, TrigTerm};
    use crate::nhim::compute_cylinder;

    const BAND: (f64, f64) = (0.05, 0.35);

    fn perturbed(eps: f64) -> MapDef {
        MapDef::product(4.0).with_step(PerturbationStep::new(eps, vec![TrigTerm::sin(1, -1, 1.0)]))
    }

    fn scattering(map: &MapDef) -> (HomoclinicCylinder, ScatteringMapSample) {
        let cyl = compute_cylinder(map, BAND, 128, 32, 1e-9, 200).unwrap();
        let s = find_saddle(4.0).unwrap();
        let h = find_primary_homoclinic(&s, 1e-10).unwrap();
        let b = build_homoclinic_cylinder(
            map,
            &cyl,
            &s,
            &h,
            Grid::new(32, 16, BAND.0, BAND.1),
            0.05,
            0,
        )
        .map_err(|e| format!("{e:?}"))
        .unwrap();
        let f = ScatteringMapSample::from_cylinder(&b, &cyl);
        (b, f)
    }

    #[test]
    fn unperturbed_is_product() {
        let (b, f) = scattering(&MapDef::product(4.0));
        assert!(
            b.product_displacement() < 1e-12,
            "{}",
            b.product_displacement()
        );
        assert!(f.sup_displacement() < 1e-6, "{}", f.sup_displacement());
        assert!(f.exactness_residual < 1e-6);
        assert!(b.m_minus <= 30 && b.m_plus <= 30 && b.m_minus > 0 && b.m_plus > 0);
    }

    #[test]
    fn perturbed_scales_with_eps() {
        let (b1, f1) = scattering(&perturbed(1e-3));
        let (_, f2) = scattering(&perturbed(5e-4));
        let eps = 1e-3;
        assert!(b1.product_displacement() <= 10.0 * eps);
        let d1 = f1.sup_displacement();
        assert!(d1 >= eps / 10.0 && d1 <= 10.0 * eps, "{d1}");
        let ratio = d1 / f2.sup_displacement();
        assert!((ratio / 2.0 - 1.0).abs() < 0.2, "{ratio}");
        assert!(f1.exactness_residual < 1e-6, "{}", f1.exactness_residual);
    }
}
