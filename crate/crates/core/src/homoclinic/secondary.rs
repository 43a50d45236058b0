//! Further homoclinic cylinders from distinct homoclinic orbits of the
//! hyperbolic factor.

use serde::{Deserialize, Serialize};

use super::checks::{check_simplicity, conjugacy_error, SimplicityReport};
use super::cylinder::{build_homoclinic_cylinder, HomoclinicCylinder, ScatteringMapSample};
use super::saddle::SaddleData;
use super::separatrix::{find_homoclinic_orbits, same_orbit, transit_time};
use crate::error::{Error, Result};
use crate::maps::MapDef;
use crate::nhim::CylinderGraph;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SecondaryCylinder {
    pub cylinder: HomoclinicCylinder,
    pub scattering: ScatteringMapSample,
    pub simplicity: SimplicityReport,
    /// Sup mismatch between the scattering map of `Phi(B)` and the
    /// conjugated one.
    pub conjugacy_error: f64,
    pub transit: f64,
}

/// Build, check and sample the cylinder over one homoclinic orbit.
pub fn assemble(
    map: &MapDef,
    cyl: &CylinderGraph,
    saddle: &SaddleData,
    point: &super::HomoclinicPoint,
    template: &HomoclinicCylinder,
    bar: (f64, f64),
    id: usize,
) -> Result<SecondaryCylinder> {
    let b = build_homoclinic_cylinder(map, cyl, saddle, point, template.grid, template.delta, id)?;
    let f = ScatteringMapSample::from_cylinder(&b, cyl);
    let simplicity = check_simplicity(&b.solver(map, cyl, *saddle), &b, &f, bar)?;
    let shifted = build_homoclinic_cylinder(
        map,
        cyl,
        saddle,
        &point.shifted(saddle, 1),
        b.grid,
        b.delta,
        id,
    )?;
    let fs = ScatteringMapSample::from_cylinder(&shifted, cyl);
    Ok(SecondaryCylinder {
        conjugacy_error: conjugacy_error(map, cyl, &f, &fs),
        transit: transit_time(point, saddle),
        cylinder: b,
        scattering: f,
        simplicity,
    })
}

/// Up to `count` simple cylinders over orbits other than that of `primary`,
/// in order of transit time.
pub fn generate_secondary(
    map: &MapDef,
    cyl: &CylinderGraph,
    saddle: &SaddleData,
    primary: &HomoclinicCylinder,
    count: usize,
    bar: (f64, f64),
) -> Result<Vec<SecondaryCylinder>> {
    let candidates = find_homoclinic_orbits(saddle, 4 * count + 4, 0, 1e-10)?;
    let mut out = Vec::with_capacity(count);
    for h in candidates {
        if out.len() == count {
            break;
        }
        if same_orbit(&primary.homoclinic, &h, saddle, 40, 1e-7) {
            continue;
        }
        let id = primary.id + out.len() + 1;
        match assemble(map, cyl, saddle, &h, primary, bar, id) {
            Ok(s) if s.simplicity.usable() && s.conjugacy_error < 1e-6 => out.push(s),
            _ => continue,
        }
    }
    if out.len() < count {
        return Err(Error::FewerFound {
            found: out.len(),
            requested: count,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::homoclinic::{find_primary_homoclinic, find_saddle};
    use crate::interp::Grid;
    use crate::maps::{PerturbationStep, TrigTerm};
    use crate::nhim::compute_cylinder;

    fn run(eps: f64) -> (HomoclinicCylinder, Vec<SecondaryCylinder>) {
        let mut map = MapDef::product(4.0);
        if eps != 0.0 {
            map = map.with_step(PerturbationStep::new(eps, vec![TrigTerm::sin(1, -1, 1.0)]));
        }
        let band = (0.05, 0.35);
        let cyl = compute_cylinder(&map, band, 128, 32, 1e-9, 200).unwrap();
        let saddle = find_saddle(4.0).unwrap();
        let h = find_primary_homoclinic(&saddle, 1e-10).unwrap();
        let b = build_homoclinic_cylinder(
            &map,
            &cyl,
            &saddle,
            &h,
            Grid::new(32, 16, band.0, band.1),
            0.05,
            0,
        )
        .unwrap();
        let sec = generate_secondary(&map, &cyl, &saddle, &b, 8, (0.1, 0.3)).unwrap();
        (b, sec)
    }

    #[test]
    fn eight_product_cylinders() {
        let (b, sec) = run(0.0);
        assert_eq!(sec.len(), 8);
        for s in &sec {
            assert!(s.cylinder.product_displacement() < 1e-12);
            assert!(s.scattering.sup_displacement() < 1e-6);
            assert!(
                s.transit >= super::transit_time(&b.homoclinic, &find_saddle(4.0).unwrap()) - 1.0
            );
        }
        let ids: std::collections::BTreeSet<usize> = sec.iter().map(|s| s.cylinder.id).collect();
        assert_eq!(ids.len(), 8);
    }

    #[test]
    fn perturbed_conjugacy() {
        let (_, sec) = run(1e-3);
        assert_eq!(sec.len(), 8);
        assert!(sec
            .iter()
            .all(|s| s.conjugacy_error < 1e-6 && s.simplicity.usable()));
        assert!(sec.iter().all(|s| s.scattering.exactness_residual < 1e-6));
    }
}
