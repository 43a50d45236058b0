use serde::{Deserialize, Serialize};

use super::{restricted_iterate, CylinderGraph, CylinderPoint};
use crate::error::{Error, Result};
use crate::maps::{MapDef, PhasePoint};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Stable,
    Unstable,
}

/// Asymptotic-phase projection along strong stable or unstable leaves.
#[derive(Clone, Copy, Debug)]
pub struct HolonomyProjector<'a> {
    pub map: &'a MapDef,
    pub cylinder: &'a CylinderGraph,
    pub direction: Direction,
    pub max_iter: usize,
    /// Iterates allowed outside the channel before escape is reported.
    pub n_burn: usize,
    pub delta: f64,
    pub tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub point: CylinderPoint,
    pub iterations: usize,
    /// `|v_n - v_(n-1)|` per iterate.
    pub convergence_log: Vec<f64>,
    /// Geometric mean of the last logged contraction ratios.
    pub rate: f64,
    /// Stopped at the closest approach to `A` rather than at `tol`.
    pub at_minimum: bool,
}

/// Increments below this are roundoff and carry no rate information.
const LOG_FLOOR: f64 = 1e-14;

fn tail_rate(log: &[f64]) -> f64 {
    let ratios: Vec<f64> = log
        .windows(2)
        .filter(|w| w[0] > LOG_FLOOR && w[1] > LOG_FLOOR)
        .map(|w| w[1] / w[0])
        .collect();
    let tail = &ratios[ratios.len().saturating_sub(5)..];
    if tail.is_empty() {
        return 0.0;
    }
    (tail.iter().map(|r| r.ln()).sum::<f64>() / tail.len() as f64).exp()
}

impl<'a> HolonomyProjector<'a> {
    pub fn new(map: &'a MapDef, cylinder: &'a CylinderGraph, direction: Direction) -> Self {
        Self {
            map,
            cylinder,
            direction,
            max_iter: 80,
            n_burn: 0,
            delta: 0.1,
            tol: 1e-13,
        }
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn with_burn(mut self, n_burn: usize) -> Self {
        self.n_burn = n_burn;
        self
    }

    fn step(&self, p: &PhasePoint) -> PhasePoint {
        match self.direction {
            Direction::Stable => self.map.apply_lifted(p),
            Direction::Unstable => self.map.inverse_lifted(p),
        }
    }

    fn pull_back(&self, v: &CylinderPoint, n: usize) -> CylinderPoint {
        let n = n as i64;
        match self.direction {
            Direction::Stable => restricted_iterate(self.map, self.cylinder, v, -n),
            Direction::Unstable => restricted_iterate(self.map, self.cylinder, v, n),
        }
    }

    pub fn project(&self, x: &PhasePoint) -> Result<Projection> {
        let mut v_prev = CylinderPoint::of(x);
        let mut d_prev = self.cylinder.normal_distance(x);
        let mut log = Vec::new();
        if d_prev == 0.0 {
            return Ok(Projection {
                point: v_prev,
                iterations: 0,
                convergence_log: log,
                rate: 0.0,
                at_minimum: false,
            });
        }
        let mut p = *x;
        for n in 1..=self.max_iter {
            p = self.step(&p);
            let d = self.cylinder.normal_distance(&p);
            if n >= self.n_burn && d > self.delta {
                return Err(Error::EscapedChannel {
                    iterations: n,
                    distance: d,
                });
            }
            let v = self.pull_back(&CylinderPoint::of(&p), n);
            let inc = v.distance(&v_prev);
            log.push(inc);
            if inc < self.tol {
                return Ok(self.done(v, n, log, false));
            }
            if d > d_prev && n > 1 {
                return Ok(self.done(v_prev, n - 1, log, true));
            }
            v_prev = v;
            d_prev = d;
        }
        Err(Error::NoConvergence {
            iterations: self.max_iter,
            residual: log.last().copied().unwrap_or(f64::NAN),
        })
    }

    fn done(
        &self,
        point: CylinderPoint,
        iterations: usize,
        log: Vec<f64>,
        at_minimum: bool,
    ) -> Projection {
        let rate = tail_rate(&log);
        Projection {
            point,
            iterations,
            convergence_log: log,
            rate,
            at_minimum,
        }
    }
}

/// `pi^s(x)`.
pub fn project_stable(x: &PhasePoint, proj: &HolonomyProjector) -> Result<CylinderPoint> {
    debug_assert_eq!(proj.direction, Direction::Stable);
    proj.project(x).map(|r| r.point)
}

/// `pi^u(x)`.
pub fn project_unstable(x: &PhasePoint, proj: &HolonomyProjector) -> Result<CylinderPoint> {
    debug_assert_eq!(proj.direction, Direction::Unstable);
    proj.project(x).map(|r| r.point)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::homoclinic::find_saddle;
    use crate::interp::Grid;

    #[test]
    fn on_cylinder_is_identity() {
        let m = MapDef::product(4.0);
        let c = CylinderGraph::flat(Grid::new(16, 4, 0.0, 0.5));
        let pr = HolonomyProjector::new(&m, &c, Direction::Stable);
        let r = pr.project(&PhasePoint::new(1.0, 0.2, 0.0, 0.0)).unwrap();
        assert_eq!(r.iterations, 0);
        assert_eq!(r.point, CylinderPoint::new(1.0, 0.2));
    }

    #[test]
    fn product_separatrix_keeps_base() {
        let m = MapDef::product(4.0);
        let c = CylinderGraph::flat(Grid::new(16, 4, 0.0, 0.5));
        let s = find_saddle(4.0).unwrap();
        // a point on the local stable separatrix, pulled out to distance ~0.03
        let seed = PhasePoint::new(0.0, 0.0, 1e-7 * s.e_s[0], 1e-7 * s.e_s[1]);
        let far = m.iterate(&seed, -5);
        let x = PhasePoint::new(2.0, 0.3, far.x, far.y);
        let pr = HolonomyProjector::new(&m, &c, Direction::Stable);
        let v = project_stable(&x, &pr).unwrap();
        assert!(v.distance(&CylinderPoint::new(2.0, 0.3)) < 1e-10);
    }

    #[test]
    fn escape_detected() {
        let m = MapDef::product(4.0);
        let c = CylinderGraph::flat(Grid::new(16, 4, 0.0, 0.5));
        let pr = HolonomyProjector::new(&m, &c, Direction::Stable).with_delta(0.05);
        let s = find_saddle(4.0).unwrap();
        let x = PhasePoint::new(0.0, 0.2, 0.04 * s.e_u[0], 0.04 * s.e_u[1]);
        assert!(matches!(pr.project(&x), Err(Error::EscapedChannel { .. })));
    }
}
