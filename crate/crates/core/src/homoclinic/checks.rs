//! Simplicity of homoclinic cylinders and the symplectic checks on them.

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use super::cylinder::{HomoclinicCylinder, HomoclinicSolver, ScatteringMapSample, TwoSided};
use super::saddle::SaddleData;
use crate::error::Result;
use crate::interp::Grid;
use crate::maps::{angle_diff, omega_pairing, CheckReport, MapDef, PhasePoint};
use crate::nhim::{restricted_iterate, CylinderGraph, CylinderPoint};
use crate::par::*;

pub const S1_THRESHOLD: f64 = 1e6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimplicityReport {
    pub s1_condition: f64,
    pub s1: bool,
    pub s2: bool,
    pub s2_detail: String,
    pub s3: bool,
    /// Winding of `phi -> Psi(phi, I) - phi` per grid row.
    pub windings: Vec<i64>,
}

impl SimplicityReport {
    pub fn usable(&self) -> bool {
        self.s1 && self.s2 && self.s3
    }
}

/// Condition number of the matrix of unit columns.
pub fn span_condition(cols: &[Vector4<f64>; 4]) -> f64 {
    let m = Matrix4::from_columns(&cols.map(|c| c.normalize()));
    let sv = m.singular_values();
    let (hi, lo) = (sv.max(), sv.min());
    if lo > 0.0 {
        hi / lo
    } else {
        f64::INFINITY
    }
}

/// `d x_B / d phi` and `d x_B / d I` by central differences of re-solved samples.
pub fn cylinder_tangents(
    solver: &HomoclinicSolver,
    x: &TwoSided,
    h: f64,
) -> Result<[Vector4<f64>; 2]> {
    let base = restricted_iterate(solver.map, solver.cyl, &x.v, solver.m_fwd());
    let at = |dp: f64, di: f64| -> Result<PhasePoint> {
        let v = CylinderPoint::new(x.v.phi + dp, x.v.action + di);
        let d = restricted_iterate(solver.map, solver.cyl, &v, solver.m_fwd()).diff(&base);
        let w_plus = CylinderPoint::new(x.w_plus.phi + d[0], x.w_plus.action + d[1]);
        let start = TwoSided { v, w_plus, ..*x };
        Ok(solver.point_of(&solver.solve(start)?))
    };
    let d_phi = at(h, 0.0)?.wrapped_diff(&at(-h, 0.0)?) / (2.0 * h);
    let d_i = at(0.0, h)?.wrapped_diff(&at(0.0, -h)?) / (2.0 * h);
    Ok([d_phi, d_i])
}

/// Columns `[fiber_u, fiber_s, d_phi x_B, d_I x_B]` at one sample.
pub fn tangent_span(solver: &HomoclinicSolver, x: &TwoSided) -> Result<[Vector4<f64>; 4]> {
    let (du, ds) = solver.fiber_tangents(x);
    let [tp, ti] = cylinder_tangents(solver, x, 1e-5)?;
    Ok([du, ds, tp, ti])
}

fn winding(values: impl Iterator<Item = f64> + Clone) -> i64 {
    let first = values.clone().next().unwrap_or(0.0);
    let mut prev = first;
    let mut total = 0.0;
    for v in values.skip(1).chain(std::iter::once(first)) {
        total += angle_diff(v, prev);
        prev = v;
    }
    (total / std::f64::consts::TAU).round() as i64
}

fn rows_in<'g>(grid: &'g Grid, bar: (f64, f64)) -> impl Iterator<Item = usize> + 'g {
    (0..grid.n_i).filter(move |&i| {
        let a = grid.node(grid.index(0, i)).1;
        a >= bar.0 - 1e-12 && a <= bar.1 + 1e-12
    })
}

/// [S2] and [S3] from the sampled scattering map alone.
pub fn sampled_simplicity(
    f: &ScatteringMapSample,
    bar: (f64, f64),
) -> (bool, String, bool, Vec<i64>) {
    let g = f.grid;
    let image = |k: usize| {
        let (p, i) = g.node(k);
        (p + f.dpsi[k], i + f.dy[k])
    };
    let mut problems = Vec::new();
    // orientation of every image cell
    let mut flipped = 0;
    for i in 0..g.n_i - 1 {
        for j in 0..g.n_phi {
            let a = image(g.index(j, i));
            let mut b = image(g.index((j + 1) % g.n_phi, i));
            let c = image(g.index(j, i + 1));
            if j + 1 == g.n_phi {
                b.0 += std::f64::consts::TAU;
            }
            let cross = (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
            if !(cross > 0.0) {
                flipped += 1;
            }
        }
    }
    if flipped > 0 {
        problems.push(format!("{flipped} cells flip orientation"));
    }
    // collisions of distinct images
    let eps = 1e-3 * g.h_phi().min(g.h_i());
    let mut collisions = 0;
    for a in 0..g.len() {
        let pa = image(a);
        for b in a + 1..g.len() {
            let pb = image(b);
            if angle_diff(pa.0, pb.0).abs() < eps && (pa.1 - pb.1).abs() < eps {
                collisions += 1;
            }
        }
    }
    if collisions > 0 {
        problems.push(format!("{collisions} colliding images"));
    }
    // the image of the sampled domain must cover the sub-band
    let bottom = (0..g.n_phi)
        .map(|j| image(g.index(j, 0)).1)
        .fold(f64::MIN, f64::max);
    let top = (0..g.n_phi)
        .map(|j| image(g.index(j, g.n_i - 1)).1)
        .fold(f64::MAX, f64::min);
    if bottom >= bar.0 || top <= bar.1 {
        problems.push(format!("image covers [{bottom}, {top}] only"));
    }
    let windings: Vec<i64> = rows_in(&g, bar)
        .map(|i| winding((0..g.n_phi).map(move |j| f.dpsi[g.index(j, i)])))
        .collect();
    let s3 = windings.iter().all(|&w| w == 0);
    let s2 = problems.is_empty();
    (s2, problems.join("; "), s3, windings)
}

/// [S1]-[S3] on the sub-band `bar`.
pub fn check_simplicity(
    solver: &HomoclinicSolver,
    b: &HomoclinicCylinder,
    f: &ScatteringMapSample,
    bar: (f64, f64),
) -> Result<SimplicityReport> {
    let g = b.grid;
    let nodes: Vec<usize> = rows_in(&g, bar)
        .flat_map(|i| (0..g.n_phi).map(move |j| g.index(j, i)))
        .collect();
    let conds = nodes
        .par_iter()
        .map(|&k| tangent_span(solver, &b.solutions[k]).map(|c| span_condition(&c)))
        .collect::<Vec<Result<f64>>>()
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
    let s1_condition = conds.into_iter().fold(0.0, f64::max);
    let (s2, s2_detail, s3, windings) = sampled_simplicity(f, bar);
    Ok(SimplicityReport {
        s1_condition,
        s1: s1_condition < S1_THRESHOLD,
        s2,
        s2_detail,
        s3,
        windings,
    })
}

/// Compare the scattering map of `Phi(B)` with `F_0 o F_B o F_0^{-1}` at the
/// grid nodes of `f_shifted` whose preimage stays inside the grid of `f`.
pub fn conjugacy_error(
    map: &MapDef,
    cyl: &CylinderGraph,
    f: &ScatteringMapSample,
    f_shifted: &ScatteringMapSample,
) -> f64 {
    (0..f_shifted.grid.len())
        .into_par_iter()
        .filter_map(|k| {
            let (p, i) = f_shifted.grid.node(k);
            let v = CylinderPoint::new(p, i);
            let pre = restricted_iterate(map, cyl, &v, -1);
            let mid = f.eval(&pre).ok()?;
            let want = restricted_iterate(map, cyl, &mid, 1);
            let got = f_shifted.eval(&v).ok()?;
            Some(got.distance(&want))
        })
        .reduce_max()
}

/// Omega-pairing of the strong stable fiber with the tangents of `B`
/// (which lie in `T W^s`), with the fiber direction seeded `depth` iterates
/// deeper in the local stable manifold. Returns the largest normalized
/// pairing per depth.
pub fn orthogonality_by_depth(
    solver: &HomoclinicSolver,
    samples: &[TwoSided],
    depths: &[i64],
) -> Result<Vec<f64>> {
    let per_sample = samples
        .par_iter()
        .map(|x| {
            let [tp, ti] = cylinder_tangents(solver, x, 1e-5)?;
            let (tp, ti) = (tp.normalize(), ti.normalize());
            Ok(depths
                .iter()
                .map(|&r| {
                    let ds = solver.stable_fiber(x, r);
                    omega_pairing(&ds, &tp)
                        .abs()
                        .max(omega_pairing(&ds, &ti).abs())
                })
                .collect::<Vec<f64>>())
        })
        .collect::<Vec<Result<Vec<f64>>>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok((0..depths.len())
        .map(|d| per_sample.iter().map(|p| p[d]).fold(0.0, f64::max))
        .collect())
}

/// `|Omega(d_phi A, d_I A)|`, the density of the restricted form, minimized
/// over the cylinder nodes.
pub fn restricted_form_min(cyl: &CylinderGraph) -> f64 {
    (0..cyl.grid.len())
        .map(|k| {
            let (p, i) = cyl.grid.node(k);
            let dg = cyl.derivative(p, i);
            let a = Vector4::new(1.0, 0.0, dg[(0, 0)], dg[(1, 0)]);
            let b = Vector4::new(0.0, 1.0, dg[(0, 1)], dg[(1, 1)]);
            omega_pairing(&a, &b).abs()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Symplectic orthogonality of `T W^s(A)` and the strong stable fibers along
/// the samples of `b`, refined over increasing seed depth.
pub fn symplectic_orthogonality_check(
    map: &MapDef,
    cyl: &CylinderGraph,
    saddle: &SaddleData,
    b: &HomoclinicCylinder,
    n_samples: usize,
) -> Result<CheckReport> {
    let solver = b.solver(map, cyl, *saddle);
    let stride = (b.solutions.len() / n_samples.max(1)).max(1);
    let samples: Vec<TwoSided> = b.solutions.iter().step_by(stride).copied().collect();
    let depths = [0, 2, 4, 6, 8];
    let pairings = orthogonality_by_depth(&solver, &samples, &depths)?;
    let form = restricted_form_min(cyl);
    let last = *pairings.last().unwrap_or(&0.0);
    let passed = last < 1e-6 && form > 0.9;
    let mut r = CheckReport::new("symplectic_orthogonality", passed, last);
    r.detail = format!("pairing by depth {depths:?}: {pairings:?}; min |Omega|_A| = {form}");
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::homoclinic::{
        build_homoclinic_cylinder, find_primary_homoclinic, find_saddle, HomoclinicPoint,
    };
    use crate::maps::{PerturbationStep, TrigTerm};
    use crate::nhim::compute_cylinder;

    const BAND: (f64, f64) = (0.05, 0.35);
    const BAR: (f64, f64) = (0.1, 0.3);

    struct Setup {
        map: MapDef,
        cyl: CylinderGraph,
        saddle: SaddleData,
        h: HomoclinicPoint,
    }

    fn setup(eps: f64) -> Setup {
        let mut map = MapDef::product(4.0);
        if eps != 0.0 {
            map = map.with_step(PerturbationStep::new(eps, vec![TrigTerm::sin(1, -1, 1.0)]));
        }
        let cyl = compute_cylinder(&map, BAND, 128, 32, 1e-9, 200).unwrap();
        let saddle = find_saddle(4.0).unwrap();
        let h = find_primary_homoclinic(&saddle, 1e-10).unwrap();
        Setup {
            map,
            cyl,
            saddle,
            h,
        }
    }

    fn build(s: &Setup, h: &HomoclinicPoint) -> (HomoclinicCylinder, ScatteringMapSample) {
        let b = build_homoclinic_cylinder(
            &s.map,
            &s.cyl,
            &s.saddle,
            h,
            Grid::new(32, 16, BAND.0, BAND.1),
            0.05,
            0,
        )
        .unwrap();
        let f = ScatteringMapSample::from_cylinder(&b, &s.cyl);
        (b, f)
    }

    #[test]
    fn product_is_simple() {
        let s = setup(0.0);
        let (b, f) = build(&s, &s.h);
        let r = check_simplicity(&b.solver(&s.map, &s.cyl, s.saddle), &b, &f, BAR).unwrap();
        assert!(r.usable(), "{r:?}");
        assert!(r.s1_condition < 10.0);
    }

    #[test]
    fn perturbed_is_simple_with_similar_conditioning() {
        let s0 = setup(0.0);
        let (b0, f0) = build(&s0, &s0.h);
        let r0 = check_simplicity(&b0.solver(&s0.map, &s0.cyl, s0.saddle), &b0, &f0, BAR).unwrap();
        let s = setup(1e-3);
        let (b, f) = build(&s, &s.h);
        let r = check_simplicity(&b.solver(&s.map, &s.cyl, s.saddle), &b, &f, BAR).unwrap();
        assert!(r.usable(), "{r:?}");
        assert!(r.s1_condition < 2.0 * r0.s1_condition);
    }

    #[test]
    fn collapsed_fiber_fails_s1() {
        let s = setup(0.0);
        let (b, _) = build(&s, &s.h);
        let solver = b.solver(&s.map, &s.cyl, s.saddle);
        let mut cols = tangent_span(&solver, &b.solutions[40]).unwrap();
        cols[0] = cols[2];
        assert!(span_condition(&cols) > 1e8);
    }

    #[test]
    fn winding_of_shifted_row() {
        let mut f = ScatteringMapSample::identity(0, Grid::new(16, 4, 0.0, 1.0));
        for k in 0..f.grid.len() {
            let (p, _) = f.grid.node(k);
            f.dpsi[k] = angle_diff(p, 0.0);
        }
        let (_, _, s3, w) = sampled_simplicity(&f, (0.2, 0.8));
        assert!(!s3);
        assert!(w.iter().all(|&x| x == 1));
    }

    #[test]
    fn conjugacy_under_shift() {
        let s = setup(1e-3);
        let (_, f) = build(&s, &s.h);
        let (_, fs) = build(&s, &s.h.shifted(&s.saddle, 1));
        let err = conjugacy_error(&s.map, &s.cyl, &f, &fs);
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn orthogonality() {
        let s0 = setup(0.0);
        let (b0, _) = build(&s0, &s0.h);
        let r0 = symplectic_orthogonality_check(&s0.map, &s0.cyl, &s0.saddle, &b0, 8).unwrap();
        assert!(r0.passed && r0.max_residual < 1e-9, "{r0:?}");
        assert_eq!(restricted_form_min(&s0.cyl), 1.0);
        let s = setup(1e-3);
        let (b, _) = build(&s, &s.h);
        let r = symplectic_orthogonality_check(&s.map, &s.cyl, &s.saddle, &b, 8).unwrap();
        assert!(r.passed, "{r:?}");
    }
}
