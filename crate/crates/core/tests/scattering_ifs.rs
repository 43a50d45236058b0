//! Transport on the IFS built from the perturbed product map.

use std::sync::Arc;

use drift_core::homoclinic::{
    build_homoclinic_cylinder, find_primary_homoclinic, find_saddle, ScatteringMapSample,
};
use drift_core::interp::Grid;
use drift_core::maps::{MapDef, PerturbationStep, TrigTerm};
use drift_core::nhim::compute_cylinder;
use drift_core::transport::{
    birkhoff_transport, validate_certificate, CylinderMap, EssentialCurve, Ifs, Outcome,
    RestrictedMap, TransportOptions,
};

const BAND: (f64, f64) = (0.05, 0.35);

fn system(eps: f64) -> Ifs {
    let map =
        MapDef::product(4.0).with_step(PerturbationStep::new(eps, vec![TrigTerm::sin(1, -1, 1.0)]));
    let cyl = compute_cylinder(&map, BAND, 128, 32, 1e-9, 200).unwrap();
    let s = find_saddle(4.0).unwrap();
    let h = find_primary_homoclinic(&s, 1e-10).unwrap();
    let b = build_homoclinic_cylinder(
        &map,
        &cyl,
        &s,
        &h,
        Grid::new(32, 16, BAND.0, BAND.1),
        0.05,
        0,
    )
    .unwrap();
    let fb = ScatteringMapSample::from_cylinder(&b, &cyl);
    let maps: Vec<Arc<dyn CylinderMap>> = vec![Arc::new(RestrictedMap { map, cyl }), Arc::new(fb)];
    Ifs::new(maps, BAND).unwrap()
}

/// `F(gamma)` crosses `gamma`: the vertical offset of the image changes sign.
fn image_crosses(ifs: &Ifs, n: usize, g: &EssentialCurve) -> bool {
    let d: Vec<f64> = g
        .phis
        .iter()
        .zip(&g.ys)
        .map(|(&p, &y)| {
            let (q, z) = ifs.apply(n, p, y).unwrap();
            z - g.eval(q)
        })
        .collect();
    d.iter().any(|&x| x > 0.0) && d.iter().any(|&x| x < 0.0)
}

#[test]
fn scattering_ifs_properties() {
    let ifs = system(1e-3);
    // exactness: the scattering map cannot push an essential curve strictly up
    for g in [
        EssentialCurve::horizontal(256, 0.15),
        EssentialCurve::horizontal(256, 0.25),
        EssentialCurve::from_fn(256, |p| 0.2 + 0.03 * p.sin()),
        EssentialCurve::from_fn(256, |p| 0.2 + 0.02 * (2.0 * p + 1.0).cos()),
    ] {
        assert!(image_crosses(&ifs, 1, &g));
    }
    assert!(ifs.min_twist(16).unwrap() > 0.5);
    let l = ifs.lipschitz_bound(16).unwrap();
    assert!(l.is_finite() && l > 0.0 && l < 10.0, "{l}");

    let cert = birkhoff_transport(
        &ifs,
        &EssentialCurve::horizontal(256, 0.15),
        &EssentialCurve::horizontal(256, 0.25),
        &TransportOptions::default(),
    )
    .unwrap();
    let v = validate_certificate(&cert, &ifs, 1e-9);
    eprintln!(
        "{:?} after {} generations: {}",
        cert.outcome, cert.generations, v.diagnosis
    );
    assert!(v.valid, "{}", v.diagnosis);
    if cert.outcome == Outcome::Connecting {
        assert!(cert.steps.iter().any(|s| s.map_index == Some(1)));
    }
}
