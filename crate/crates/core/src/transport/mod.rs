//! The iterated function system `{F_0, ..., F_N}` on the cylinder and the
//! curve-evolution algorithm that either connects two essential curves or
//! produces a common invariant curve between them.

mod birkhoff;
mod brute;
mod curve;
pub mod synthetic;

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::homoclinic::ScatteringMapSample;
use crate::maps::{angle_diff, MapDef};
use crate::nhim::{restricted_raw, CylinderGraph, CylinderPoint};

pub use birkhoff::{
    birkhoff_transport, birkhoff_transport_with, validate_certificate, ObstructionCurve, Outcome,
    Step, TransportCertificate, TransportOptions, Validation,
};
pub use brute::{brute_force_reachability, ReachableSet};
pub use curve::{curve_image, upper_boundary_op, upper_envelope, EssentialCurve, Provenance};

/// A map of the cylinder `(phi, y)`. The returned angle is lifted so that it
/// moves continuously with the argument.
pub trait CylinderMap: Send + Sync {
    fn apply(&self, phi: f64, y: f64) -> Result<(f64, f64)>;

    fn label(&self) -> String {
        "map".into()
    }
}

/// `F_0`: the restriction of the 4D map to its invariant cylinder.
#[derive(Clone, Debug)]
pub struct RestrictedMap {
    pub map: MapDef,
    pub cyl: CylinderGraph,
}

impl CylinderMap for RestrictedMap {
    fn apply(&self, phi: f64, y: f64) -> Result<(f64, f64)> {
        let out = restricted_raw(&self.map, &self.cyl, &CylinderPoint::new(phi, y));
        Ok((phi + angle_diff(out.phi, phi), out.action))
    }

    fn label(&self) -> String {
        "F0".into()
    }
}

impl CylinderMap for ScatteringMapSample {
    fn apply(&self, phi: f64, y: f64) -> Result<(f64, f64)> {
        let v = CylinderPoint { phi, action: y };
        if !self.in_domain(&v) {
            return Err(Error::DomainExceeded { phi, action: y });
        }
        Ok(self.eval_lifted(&v))
    }

    fn label(&self) -> String {
        format!("F_B{}", self.id)
    }
}

type PlaneFn = dyn Fn(f64, f64) -> (f64, f64) + Send + Sync;

/// A map given by a closure; used for synthetic systems.
#[derive(Clone)]
pub struct FnMap {
    f: Arc<PlaneFn>,
    label: String,
}

impl FnMap {
    pub fn new(label: &str, f: impl Fn(f64, f64) -> (f64, f64) + Send + Sync + 'static) -> Self {
        Self {
            f: Arc::new(f),
            label: label.into(),
        }
    }
}

impl std::fmt::Debug for FnMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "FnMap({})", self.label)
    }
}

impl CylinderMap for FnMap {
    fn apply(&self, phi: f64, y: f64) -> Result<(f64, f64)> {
        Ok((self.f)(phi, y))
    }

    fn label(&self) -> String {
        self.label.clone()
    }
}

/// `{F_0, F_1, ..., F_N}` on the annulus `band x [0, 2pi)`; `maps[0]` is `F_0`.
#[derive(Clone)]
pub struct Ifs {
    pub maps: Vec<Arc<dyn CylinderMap>>,
    pub band: (f64, f64),
}

impl std::fmt::Debug for Ifs {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let labels: Vec<String> = self.maps.iter().map(|m| m.label()).collect();
        f.debug_struct("Ifs")
            .field("maps", &labels)
            .field("band", &self.band)
            .finish()
    }
}

impl Ifs {
    pub fn new(maps: Vec<Arc<dyn CylinderMap>>, band: (f64, f64)) -> Result<Self> {
        if maps.is_empty() || !(band.0 < band.1) {
            return Err(Error::InvalidInput("need F0 and a band lo < hi".into()));
        }
        Ok(Self { maps, band })
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    /// Apply map `n` to a point of the band.
    pub fn apply(&self, n: usize, phi: f64, y: f64) -> Result<(f64, f64)> {
        if y < self.band.0 || y > self.band.1 {
            return Err(Error::DomainExceeded { phi, action: y });
        }
        let (p, q) = self.maps[n].apply(phi, y)?;
        if !(p.is_finite() && q.is_finite()) {
            return Err(Error::DomainExceeded { phi: p, action: q });
        }
        Ok((p, q))
    }

    /// `min |d phi_bar / d y|` of `F_0` on an `n x n` grid of the band.
    pub fn min_twist(&self, n: usize) -> Result<f64> {
        let mut m = f64::INFINITY;
        for (phi, y) in self.sample_grid(n) {
            let [_, dpy, _, _] = self.f0_partials(phi, y)?;
            m = m.min(dpy.abs());
        }
        Ok(m)
    }

    /// Lipschitz bound for essential invariant curves of the twist map `F_0`:
    /// `sup max(|dphi'/dphi|, |dy'/dy|) / |dphi'/dy|` over the band.
    pub fn lipschitz_bound(&self, n: usize) -> Result<f64> {
        let mut l = 0.0f64;
        for (phi, y) in self.sample_grid(n) {
            let [dpp, dpy, _, dyy] = self.f0_partials(phi, y)?;
            l = l.max(dpp.abs().max(dyy.abs()) / dpy.abs());
        }
        Ok(l)
    }

    fn sample_grid(&self, n: usize) -> Vec<(f64, f64)> {
        let (lo, hi) = self.band;
        let h = 1e-6;
        (0..n)
            .flat_map(|i| {
                (0..n).map(move |j| {
                    (
                        std::f64::consts::TAU * j as f64 / n as f64,
                        lo + h + (hi - lo - 2.0 * h) * i as f64 / (n - 1).max(1) as f64,
                    )
                })
            })
            .collect()
    }

    /// `[dphi'/dphi, dphi'/dy, dy'/dphi, dy'/dy]` of `F_0` by central differences.
    fn f0_partials(&self, phi: f64, y: f64) -> Result<[f64; 4]> {
        let h = 1e-6;
        let f = &self.maps[0];
        let (a, b) = (f.apply(phi + h, y)?, f.apply(phi - h, y)?);
        let (c, d) = (f.apply(phi, y + h)?, f.apply(phi, y - h)?);
        Ok([
            (a.0 - b.0) / (2.0 * h),
            (c.0 - d.0) / (2.0 * h),
            (a.1 - b.1) / (2.0 * h),
            (c.1 - d.1) / (2.0 * h),
        ])
    }
}
