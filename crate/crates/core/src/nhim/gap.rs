use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use super::{restricted_derivative, restricted_raw, CylinderGraph, CylinderPoint};
use crate::error::{Error, Result};
use crate::maps::MapDef;
use crate::par::*;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralGapReport {
    pub alpha: f64,
    pub lambda: f64,
    /// Smallest normal expansion multiplier seen.
    pub lambda_u: f64,
    pub product_check: f64,
    /// Weights on `(phi, I)`.
    pub norm_scaling: [f64; 2],
    pub nodes: usize,
}

impl SpectralGapReport {
    pub fn is_valid(&self) -> bool {
        self.alpha >= 1.0 && self.lambda > 0.0 && self.lambda < 1.0 && self.product_check < 1.0
    }

    /// `alpha * lambda`, the rate of the asymptotic-phase iteration.
    pub fn rate(&self) -> f64 {
        self.alpha * self.lambda
    }
}

fn spectral_norm(m: &Matrix2<f64>) -> f64 {
    m.singular_values().max()
}

/// Real eigenvalue moduli of a 2x2 matrix, sorted ascending. Complex pairs
/// report their common modulus.
fn eig_moduli(m: &Matrix2<f64>) -> (f64, f64) {
    let tr = m.trace();
    let det = m.determinant();
    let disc = tr * tr - 4.0 * det;
    if disc < 0.0 {
        let r = det.abs().sqrt();
        return (r, r);
    }
    let s = disc.sqrt();
    let big = 0.5 * (tr.abs() + s);
    let small = if big > 0.0 { det.abs() / big } else { 0.0 };
    (small, big)
}

/// Gap constants over every grid node.
pub fn spectral_gap(
    map: &MapDef,
    cyl: &CylinderGraph,
    scaling: [f64; 2],
) -> Result<SpectralGapReport> {
    spectral_gap_in(map, cyl, (cyl.grid.lo, cyl.grid.hi), scaling)
}

/// Gap constants over the grid nodes whose action lies in `sub_band`.
pub fn spectral_gap_in(
    map: &MapDef,
    cyl: &CylinderGraph,
    sub_band: (f64, f64),
    scaling: [f64; 2],
) -> Result<SpectralGapReport> {
    if !(scaling[0] > 0.0 && scaling[1] > 0.0) {
        return Err(Error::InvalidInput(
            "scaling weights must be positive".into(),
        ));
    }
    let w = Matrix2::new(scaling[0], 0.0, 0.0, scaling[1]);
    let w_inv = Matrix2::new(1.0 / scaling[0], 0.0, 0.0, 1.0 / scaling[1]);
    let nodes: Vec<CylinderPoint> = (0..cyl.grid.len())
        .map(|k| {
            let (p, i) = cyl.grid.node(k);
            CylinderPoint::new(p, i)
        })
        .filter(|v| v.action >= sub_band.0 - 1e-12 && v.action <= sub_band.1 + 1e-12)
        .collect();
    if nodes.is_empty() {
        return Err(Error::InvalidInput("no grid nodes in the sub-band".into()));
    }
    let per_node: Vec<(f64, f64, f64)> = nodes
        .par_iter()
        .map(|v| {
            let t = restricted_derivative(map, cyl, v);
            let scaled = w_inv * t * w;
            let a = spectral_norm(&scaled).max(
                scaled
                    .try_inverse()
                    .map(|m| spectral_norm(&m))
                    .unwrap_or(f64::INFINITY),
            );
            let p = cyl.point(v);
            let j = map.jacobian(&p);
            let image = restricted_raw(map, cyl, v);
            let dg = cyl.derivative(image.phi, image.action);
            let normal = j.fixed_view::<2, 2>(2, 2).into_owned() - dg * j.fixed_view::<2, 2>(2, 0);
            let (small, big) = eig_moduli(&normal);
            (a, small.max(1.0 / big), big)
        })
        .collect();
    let alpha = per_node.iter().fold(0.0, |m: f64, r| m.max(r.0));
    let lambda = per_node.iter().fold(0.0, |m: f64, r| m.max(r.1));
    let lambda_u = per_node.iter().fold(f64::INFINITY, |m: f64, r| m.min(r.2));
    let product_check = alpha * alpha * lambda;
    let report = SpectralGapReport {
        alpha,
        lambda,
        lambda_u,
        product_check,
        norm_scaling: scaling,
        nodes: nodes.len(),
    };
    if product_check >= 1.0 {
        return Err(Error::GapViolation {
            product: product_check,
        });
    }
    Ok(report)
}
