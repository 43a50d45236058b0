//! Separatrices of the standard map as adaptive polylines, and homoclinic
//! points refined by two-sided Newton on the seed parameters.

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use super::saddle::SaddleData;
use crate::error::{Error, Result};
use crate::par::*;

/// Distance of the separatrix seeds from the saddle.
pub const SEED: f64 = 1e-8;

/// Standard map on the lifted plane with its derivative.
pub fn sm_step(k: f64, p: Vector2<f64>) -> Vector2<f64> {
    let y = p[1] + k * p[0].sin();
    Vector2::new(p[0] + y, y)
}

pub fn sm_step_inv(k: f64, p: Vector2<f64>) -> Vector2<f64> {
    let x = p[0] - p[1];
    Vector2::new(x, p[1] - k * x.sin())
}

fn sm_jac(k: f64, p: Vector2<f64>) -> Matrix2<f64> {
    let c = k * p[0].cos();
    Matrix2::new(1.0 + c, 1.0, c, 1.0)
}

/// `n`-step image of `p` (negative `n` for the inverse) and of the tangent `v`.
pub fn sm_orbit(
    k: f64,
    mut p: Vector2<f64>,
    mut v: Vector2<f64>,
    n: i64,
) -> (Vector2<f64>, Vector2<f64>) {
    for _ in 0..n.unsigned_abs() {
        if n > 0 {
            v = sm_jac(k, p) * v;
            p = sm_step(k, p);
        } else {
            p = sm_step_inv(k, p);
            v = sm_jac(k, p).try_inverse().expect("unit determinant") * v;
        }
    }
    (p, v)
}

/// Reversor `(x, y) -> (-x, y + k sin x)`.
pub fn reversor(k: f64, p: Vector2<f64>) -> Vector2<f64> {
    Vector2::new(-p[0], p[1] + k * p[0].sin())
}

/// Which half of a separatrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// Leaves `(0, 0)` along `+e_u`.
    Unstable,
    /// Enters `(2 pi, 0)` along `-e_s`.
    Stable,
}

/// A point of a branch given by its seed parameter `tau`: the seed
/// `SEED * lambda_u^frac(tau)` along the eigenvector, iterated `floor(tau)`
/// times.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchParam {
    pub branch: Branch,
    pub n: i64,
    /// Signed seed offset along the eigenvector.
    pub s: f64,
}

impl BranchParam {
    pub fn from_tau(branch: Branch, saddle: &SaddleData, tau: f64) -> Self {
        let n = tau.floor();
        let s = SEED * saddle.lambda_u.powf(tau - n);
        Self {
            branch,
            n: n as i64,
            s,
        }
    }

    /// Point, and derivative with respect to `s`.
    pub fn eval(&self, saddle: &SaddleData) -> (Vector2<f64>, Vector2<f64>) {
        match self.branch {
            Branch::Unstable => {
                let e = Vector2::from(saddle.e_u);
                sm_orbit(saddle.k, self.s * e, e, self.n)
            }
            Branch::Stable => {
                let e = -Vector2::from(saddle.e_s);
                let (p, v) = sm_orbit(saddle.k, self.s * e, e, -self.n);
                (p + Vector2::new(TAU, 0.0), v)
            }
        }
    }
}

/// A branch sampled as a polyline in the lifted plane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    pub branch: Branch,
    pub taus: Vec<f64>,
    pub points: Vec<[f64; 2]>,
}

fn turn(a: Vector2<f64>, b: Vector2<f64>, c: Vector2<f64>) -> f64 {
    let (u, v) = (b - a, c - b);
    let cross = u[0] * v[1] - u[1] * v[0];
    cross.atan2(u.dot(&v)).abs()
}

/// Grow a branch over `tau in [0, n_iter]`, refining until consecutive
/// segments turn by less than `max_turn` and no segment exceeds `max_len`.
pub fn grow_branch(
    saddle: &SaddleData,
    branch: Branch,
    n_iter: usize,
    max_turn: f64,
    max_len: f64,
) -> Polyline {
    let eval = |tau: f64| BranchParam::from_tau(branch, saddle, tau).eval(saddle).0;
    let mut taus: Vec<f64> = (0..=(8 * n_iter)).map(|i| i as f64 / 8.0).collect();
    let mut pts: Vec<Vector2<f64>> = taus.iter().map(|&t| eval(t)).collect();
    for _ in 0..40 {
        let mut insert = vec![false; taus.len()];
        for i in 0..taus.len() - 1 {
            let long = (pts[i + 1] - pts[i]).norm() > max_len;
            let bent = i + 2 < taus.len() && turn(pts[i], pts[i + 1], pts[i + 2]) > max_turn;
            if (long || bent) && taus[i + 1] - taus[i] > 1e-12 {
                insert[i] = true;
                if bent {
                    insert[i + 1] = true;
                }
            }
        }
        if !insert.iter().any(|&b| b) {
            break;
        }
        let mut nt = Vec::with_capacity(taus.len() * 2);
        let mut np = Vec::with_capacity(taus.len() * 2);
        for i in 0..taus.len() {
            nt.push(taus[i]);
            np.push(pts[i]);
            if i + 1 < taus.len() && insert[i] {
                let m = 0.5 * (taus[i] + taus[i + 1]);
                nt.push(m);
                np.push(eval(m));
            }
        }
        taus = nt;
        pts = np;
    }
    Polyline {
        branch,
        taus,
        points: pts.iter().map(|p| [p[0], p[1]]).collect(),
    }
}

/// Crossing of two segments on the cylinder `x mod 2pi`; returns the
/// fractions along each.
fn seg_cross(a0: [f64; 2], a1: [f64; 2], b0: [f64; 2], b1: [f64; 2]) -> Option<(f64, f64)> {
    // shift b so that its start lies within pi of a's start
    let shift = ((a0[0] - b0[0]) / TAU).round() * TAU;
    let (b0, b1) = ([b0[0] + shift, b0[1]], [b1[0] + shift, b1[1]]);
    let r = [a1[0] - a0[0], a1[1] - a0[1]];
    let s = [b1[0] - b0[0], b1[1] - b0[1]];
    let den = r[0] * s[1] - r[1] * s[0];
    if den.abs() < 1e-300 {
        return None;
    }
    let q = [b0[0] - a0[0], b0[1] - a0[1]];
    let t = (q[0] * s[1] - q[1] * s[0]) / den;
    let u = (q[0] * r[1] - q[1] * r[0]) / den;
    ((0.0..1.0).contains(&t) && (0.0..1.0).contains(&u)).then_some((t, u))
}

/// All crossings between two polylines, as approximate `(tau_a, tau_b)`,
/// in order along `a`. Segments are bucketed on a coarse grid in `(x mod
/// 2pi, y)`.
pub fn crossings(a: &Polyline, b: &Polyline, skip_near_saddle: f64) -> Vec<(f64, f64)> {
    let cell = 0.25;
    let key = |p: [f64; 2]| {
        (
            (p[0].rem_euclid(TAU) / cell) as i64,
            (p[1] / cell).floor() as i64,
        )
    };
    let near = |p: [f64; 2]| {
        let x = p[0].rem_euclid(TAU);
        x.min(TAU - x).hypot(p[1]) < skip_near_saddle
    };
    let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for j in 0..b.points.len() - 1 {
        let (p, q) = (b.points[j], b.points[j + 1]);
        if (p[0] - q[0]).abs() > PI {
            continue;
        }
        let (k0, k1) = (key(p), key(q));
        for kx in k0.0.min(k1.0)..=k0.0.max(k1.0) {
            for ky in k0.1.min(k1.1)..=k0.1.max(k1.1) {
                buckets.entry((kx, ky)).or_default().push(j);
            }
        }
    }
    let n_cols = (TAU / cell) as i64 + 1;
    let mut out = Vec::new();
    for i in 0..a.points.len() - 1 {
        let (p, q) = (a.points[i], a.points[i + 1]);
        if near(p) || near(q) {
            continue;
        }
        let (k0, k1) = (key(p), key(q));
        let mut cands: Vec<usize> = Vec::new();
        for kx in k0.0.min(k1.0)..=k0.0.max(k1.0) {
            for ky in k0.1.min(k1.1)..=k0.1.max(k1.1) {
                for wrap in [-n_cols, 0, n_cols] {
                    if let Some(v) = buckets.get(&(kx + wrap, ky)) {
                        cands.extend(v);
                    }
                }
            }
        }
        cands.sort_unstable();
        cands.dedup();
        for j in cands {
            if let Some((t, u)) = seg_cross(p, q, b.points[j], b.points[j + 1]) {
                let ta = a.taus[i] + t * (a.taus[i + 1] - a.taus[i]);
                let tb = b.taus[j] + u * (b.taus[j + 1] - b.taus[j]);
                out.push((ta, tb));
            }
        }
    }
    out.sort_by(|x, y| x.0.total_cmp(&y.0));
    out
}

/// A transverse homoclinic point of the standard map.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomoclinicPoint {
    /// Lifted `(x, y)`, with the unstable branch leaving `(0, 0)`.
    pub p_h: [f64; 2],
    pub residual: f64,
    pub angle: f64,
    pub unstable: BranchParam,
    pub stable: BranchParam,
}

impl HomoclinicPoint {
    /// Orbit point `T^i(p_h)` evaluated from whichever seed keeps it
    /// numerically stable.
    pub fn orbit_point(&self, saddle: &SaddleData, i: i64) -> Vector2<f64> {
        if i >= 0 {
            let mut b = self.stable;
            b.n -= i;
            if b.n >= 0 {
                return b.eval(saddle).0;
            }
            let e = -Vector2::from(saddle.e_s);
            return b.s * saddle.lambda_s.powi((-b.n) as i32) * e + Vector2::new(TAU, 0.0);
        }
        let mut b = self.unstable;
        b.n += i;
        if b.n >= 0 {
            return b.eval(saddle).0;
        }
        let e = Vector2::from(saddle.e_u);
        b.s * saddle.lambda_s.powi((-b.n) as i32) * e
    }

    /// Number of iterates on each side spent outside the `delta` disc
    /// around the saddle: `(m_minus, m_plus)`.
    pub fn channel_counts(&self, saddle: &SaddleData, delta: f64) -> (usize, usize) {
        let dist = |p: Vector2<f64>| {
            let x = p[0].rem_euclid(TAU);
            x.min(TAU - x).abs().max(p[1].abs())
        };
        let mut m_plus = 0;
        while dist(self.orbit_point(saddle, m_plus as i64)) >= delta {
            m_plus += 1;
        }
        let mut m_minus = 0;
        while dist(self.orbit_point(saddle, -(m_minus as i64))) >= delta {
            m_minus += 1;
        }
        (m_minus, m_plus)
    }

    /// The same orbit based at `T^j(p_h)`.
    pub fn shifted(&self, saddle: &SaddleData, j: i64) -> Self {
        let p = self.orbit_point(saddle, j);
        let mut out = *self;
        out.p_h = [p[0], p[1]];
        out.unstable.n += j;
        out.stable.n -= j;
        out
    }

    /// Start the stable seed `r` iterates deeper in the local manifold.
    pub fn with_stable_depth(&self, saddle: &SaddleData, r: i64) -> Self {
        let mut out = *self;
        out.stable.n += r;
        out.stable.s *= saddle.lambda_s.powi(r as i32);
        out
    }

    /// Transit time `m_minus + m_plus` for `delta`.
    pub fn transit(&self, saddle: &SaddleData, delta: f64) -> usize {
        let (a, b) = self.channel_counts(saddle, delta);
        a + b
    }
}

fn wrapped(d: Vector2<f64>) -> Vector2<f64> {
    Vector2::new(d[0] - (d[0] / TAU).round() * TAU, d[1])
}

/// Newton on the seed offsets so the two branches meet.
pub fn refine_intersection(
    saddle: &SaddleData,
    tau_u: f64,
    tau_s: f64,
    tol: f64,
) -> Result<HomoclinicPoint> {
    let mut u = BranchParam::from_tau(Branch::Unstable, saddle, tau_u);
    let mut s = BranchParam::from_tau(Branch::Stable, saddle, tau_s);
    let mut last = f64::INFINITY;
    for _ in 0..30 {
        let (pu, du) = u.eval(saddle);
        let (ps, ds) = s.eval(saddle);
        let r = wrapped(pu - ps);
        last = r.norm();
        if last < 1e-15 * pu.norm().max(1.0) {
            break;
        }
        let j = Matrix2::from_columns(&[du, -ds]);
        let step = j
            .lu()
            .solve(&r)
            .ok_or_else(|| Error::NotFound("singular intersection".into()))?;
        u.s -= step[0];
        s.s -= step[1];
    }
    let (pu, du) = u.eval(saddle);
    let (ps, ds) = s.eval(saddle);
    let residual = wrapped(pu - ps).norm();
    if !(residual < tol) {
        return Err(Error::NoConvergence {
            iterations: 30,
            residual: last,
        });
    }
    let cos = (du.dot(&ds) / (du.norm() * ds.norm())).abs().min(1.0);
    Ok(HomoclinicPoint {
        p_h: [pu[0], pu[1]],
        residual,
        angle: cos.acos(),
        unstable: u,
        stable: s,
    })
}

/// Orbit invariant `tau_u + tau_s`.
pub fn transit_time(h: &HomoclinicPoint, saddle: &SaddleData) -> f64 {
    let tau = |b: &BranchParam| b.n as f64 + (b.s.abs() / SEED).ln() / saddle.lambda_u.ln();
    tau(&h.unstable) + tau(&h.stable)
}

/// Whether `b` lies on the orbit of `a`, checked over `span` iterates each way.
pub fn same_orbit(
    a: &HomoclinicPoint,
    b: &HomoclinicPoint,
    saddle: &SaddleData,
    span: i64,
    tol: f64,
) -> bool {
    let target = Vector2::from(b.p_h);
    (-span..=span).any(|j| wrapped(a.orbit_point(saddle, j) - target).norm() < tol)
}

/// Distinct transverse homoclinic orbits in order of transit time, each
/// represented by its point with the most balanced seed parameters.
/// `extra` lengthens the branches beyond the primary lobes.
pub fn find_homoclinic_orbits(
    saddle: &SaddleData,
    count: usize,
    extra: usize,
    tol: f64,
) -> Result<Vec<HomoclinicPoint>> {
    let n = reach_iterations(saddle) + 3 + extra;
    let wu = grow_branch(saddle, Branch::Unstable, n, 0.05, 0.05);
    let ws = grow_branch(saddle, Branch::Stable, n, 0.05, 0.05);
    let mut hits: Vec<HomoclinicPoint> = crossings(&wu, &ws, 1e-3)
        .par_iter()
        .filter_map(|&(a, b)| refine_intersection(saddle, a, b, tol).ok())
        .filter(|h| h.angle > 1e-3)
        .collect();
    hits.sort_by(|a, b| transit_time(a, saddle).total_cmp(&transit_time(b, saddle)));
    let mut orbits: Vec<HomoclinicPoint> = Vec::new();
    let balance = |h: &HomoclinicPoint| (h.unstable.n - h.stable.n).abs();
    for h in hits {
        match orbits.iter_mut().find(|o| {
            (transit_time(o, saddle) - transit_time(&h, saddle)).abs() < 1e-6
                && same_orbit(o, &h, saddle, n as i64, 1e-7)
        }) {
            Some(o) => {
                if balance(&h) < balance(o) {
                    *o = h;
                }
            }
            None => orbits.push(h),
        }
    }
    if orbits.is_empty() {
        return Err(Error::NotFound("separatrices do not cross".into()));
    }
    orbits.truncate(count);
    Ok(orbits)
}

/// Iterations needed for a seed to reach distance `pi`.
pub fn reach_iterations(saddle: &SaddleData) -> usize {
    ((PI / SEED).ln() / saddle.lambda_u.ln()).ceil() as usize
}

/// A primary homoclinic point: among the orbits of least transit
/// `tau_u + tau_s` (an orbit invariant), the one symmetric under the
/// reversor is preferred, at its point on `x = pi`. Without such an orbit the
/// least-transit crossing with balanced seed parameters is returned.
pub fn find_primary_homoclinic(saddle: &SaddleData, tol: f64) -> Result<HomoclinicPoint> {
    let n = reach_iterations(saddle) + 3;
    let wu = grow_branch(saddle, Branch::Unstable, n, 0.05, 0.05);
    let ws = grow_branch(saddle, Branch::Stable, n, 0.05, 0.05);
    let hits = crossings(&wu, &ws, 1e-3);
    let min_transit = hits
        .iter()
        .map(|h| h.0 + h.1)
        .min_by(f64::total_cmp)
        .ok_or_else(|| Error::NotFound("separatrices do not cross".into()))?;
    let primary: Vec<(f64, f64)> = hits
        .into_iter()
        .filter(|h| h.0 + h.1 < min_transit + 1.0)
        .collect();
    let x_of = |h: &(f64, f64)| {
        BranchParam::from_tau(Branch::Unstable, saddle, h.0)
            .eval(saddle)
            .0[0]
    };
    let symmetric = primary
        .iter()
        .map(|h| (h, (x_of(h).rem_euclid(TAU) - PI).abs()))
        .filter(|(_, d)| *d < 0.05)
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(h, _)| *h);
    let (ta, tb) = match symmetric {
        Some(h) => h,
        None => *primary
            .iter()
            .filter(|h| h.0 + h.1 < min_transit + 0.25)
            .min_by(|a, b| (a.0 - a.1).abs().total_cmp(&(b.0 - b.1).abs()))
            .expect("least-transit crossing exists"),
    };
    refine_intersection(saddle, ta, tb, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::homoclinic::find_saddle;

    #[test]
    fn reversor_conjugates_inverse() {
        let k = 4.0;
        for &(x, y) in &[(0.3, 0.2), (2.0, -1.0), (5.0, 0.7)] {
            let p = Vector2::new(x, y);
            let a = reversor(k, sm_step(k, reversor(k, p)));
            let b = sm_step_inv(k, p);
            assert!((a - b).amax() < 1e-14);
        }
    }

    /// Bisect the unstable branch's first crossing of `x = pi`.
    fn symmetric_crossing(s: &SaddleData) -> Vector2<f64> {
        let eval = |tau: f64| BranchParam::from_tau(Branch::Unstable, s, tau).eval(s).0;
        let mut tau = 0.0;
        while eval(tau + 0.01)[0] < PI {
            tau += 0.01;
        }
        let (mut lo, mut hi) = (tau, tau + 0.01);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if eval(mid)[0] < PI {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        eval(0.5 * (lo + hi))
    }

    #[test]
    fn primary_k4_on_symmetry_line() {
        let s = find_saddle(4.0).unwrap();
        let h = find_primary_homoclinic(&s, 1e-8).unwrap();
        assert!(h.residual < 1e-8);
        assert!(h.angle > 1e-3);
        let oracle = symmetric_crossing(&s);
        assert!((h.p_h[0] - PI).abs() < 1e-9, "{:?}", h.p_h);
        assert!((h.p_h[1] - oracle[1]).abs() < 1e-9);
    }

    #[test]
    fn angle_positive_for_small_k() {
        let a4 = find_primary_homoclinic(&find_saddle(4.0).unwrap(), 1e-8)
            .unwrap()
            .angle;
        let a05 = find_primary_homoclinic(&find_saddle(0.5).unwrap(), 1e-8)
            .unwrap()
            .angle;
        assert!(a05 > 0.0 && a4 > a05);
    }

    #[test]
    fn forward_orbit_rate() {
        let s = find_saddle(4.0).unwrap();
        let h = find_primary_homoclinic(&s, 1e-8).unwrap();
        let d = |i: i64| {
            let p = h.orbit_point(&s, i);
            (p - Vector2::new(TAU, 0.0)).norm()
        };
        let r = d(11) / d(10);
        assert!((r / s.lambda_s - 1.0).abs() < 0.05, "{r}");
        let (mm, mp) = h.channel_counts(&s, 0.05);
        assert!(mm <= 30 && mp <= 30 && mm > 0 && mp > 0);
    }

    #[test]
    fn nine_distinct_orbits() {
        let s = find_saddle(4.0).unwrap();
        let orbits = find_homoclinic_orbits(&s, 9, 0, 1e-10).unwrap();
        assert_eq!(orbits.len(), 9);
        for (i, a) in orbits.iter().enumerate() {
            assert!(a.residual < 1e-8 && a.angle > 1e-3);
            for b in &orbits[i + 1..] {
                assert!(transit_time(a, &s) <= transit_time(b, &s) + 1e-9);
                assert!(!same_orbit(a, b, &s, 20, 1e-7));
            }
        }
    }
}
