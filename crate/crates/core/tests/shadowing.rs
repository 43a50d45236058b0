//! Shadowing of IFS orbits by true orbits of the perturbed product map.

use std::sync::Arc;

use drift_core::homoclinic::{
    build_homoclinic_cylinder, find_primary_homoclinic, find_saddle, HomoclinicCylinder,
    ScatteringMapSample,
};
use drift_core::interp::Grid;
use drift_core::maps::{MapDef, PerturbationStep, TrigTerm};
use drift_core::nhim::{compute_cylinder, CylinderGraph, CylinderPoint};
use drift_core::shadowing::{
    make_proper_code, shoot_channel_orbit, verify_shadowing, Channel, Code, PaddingOptions,
    ProperParams, RawCode, ShadowDynamics, ShadowOrbit,
};
use drift_core::transport::{CylinderMap, Ifs, RestrictedMap};

const BAND: (f64, f64) = (0.05, 0.35);
const DELTA: f64 = 0.05;

struct System {
    map: MapDef,
    cyl: CylinderGraph,
    cylinders: Vec<HomoclinicCylinder>,
    ifs: Ifs,
}

fn system(eps: f64) -> System {
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
        DELTA,
        0,
    )
    .unwrap();
    let fb = ScatteringMapSample::from_cylinder(&b, &cyl);
    let maps: Vec<Arc<dyn CylinderMap>> = vec![
        Arc::new(RestrictedMap {
            map: map.clone(),
            cyl: cyl.clone(),
        }),
        Arc::new(fb),
    ];
    let ifs = Ifs::new(maps, BAND).unwrap();
    System {
        map,
        cyl,
        cylinders: vec![b],
        ifs,
    }
}

/// IFS orbit with raw blocks `blocks` separated by single scattering steps.
fn raw_code(ifs: &Ifs, start: CylinderPoint, blocks: &[usize]) -> RawCode {
    let (mut phi, mut y) = (start.phi, start.action);
    let mut steps = Vec::new();
    for (j, &b) in blocks.iter().enumerate() {
        if j > 0 {
            (phi, y) = ifs.apply(1, phi, y).unwrap();
            steps.push((1, b));
        }
        for _ in 0..b {
            (phi, y) = ifs.apply(0, phi, y).unwrap();
        }
    }
    RawCode {
        start,
        end: CylinderPoint::new(phi, y),
        k0: blocks[0],
        steps,
    }
}

#[test]
fn single_block_is_its_own_shadow() {
    let sys = system(1e-3);
    let saddle = find_saddle(4.0).unwrap();
    let ch = Channel::new(&sys.map, &sys.cyl, saddle, &sys.cylinders, DELTA).unwrap();
    let start = CylinderPoint::new(1.0, 0.2);
    let code = Code {
        k0: 12,
        steps: vec![],
        properness: ProperParams::default(),
    };
    let shadow = ShadowOrbit {
        points: vec![start, ch.f0(&start, 12)],
        code,
    };
    let orbit = shoot_channel_orbit(&ch, &shadow).unwrap();
    assert!(orbit.max_defect < 1e-10);
    assert!(
        orbit.deviations.iter().all(|&d| d < 1e-7),
        "{:?}",
        orbit.deviations
    );
    let report = verify_shadowing(&ch, &orbit, &shadow, 1e-10);
    assert!(report.passed, "{:?}", report.problems);
}

#[test]
fn three_excursions_are_shadowed() {
    let sys = system(1e-3);
    let saddle = find_saddle(4.0).unwrap();
    let ch = Channel::new(&sys.map, &sys.cyl, saddle, &sys.cylinders, DELTA).unwrap();
    let raw = raw_code(&sys.ifs, CylinderPoint::new(1.0, 0.2), &[4, 3, 5, 2]);
    let (code, shadow) = make_proper_code(
        &raw,
        &ch,
        ProperParams::default(),
        &PaddingOptions::default(),
    )
    .unwrap();
    assert_eq!(code.last_block(), 10);
    assert!(code.is_proper());
    assert!(shadow.consistency(&ch).unwrap() < 1e-6);
    let orbit = shoot_channel_orbit(&ch, &shadow).unwrap();
    let report = verify_shadowing(&ch, &orbit, &shadow, 1e-10);
    assert!(report.passed, "{:?}", report.problems);
    let worst = report.deviations.iter().copied().fold(0.0, f64::max);
    assert!(worst <= 2.0 * report.bound);
    assert!(report.decay_ratios.iter().all(|&r| r <= report.decay_limit));

    // a station moved onto the cylinder is no longer on a true orbit
    let mut tampered = orbit.clone();
    let t = tampered.stations[2];
    tampered.points[t] = sys.cyl.point(&shadow.points[2]);
    let bad = verify_shadowing(&ch, &tampered, &shadow, 1e-10);
    assert!(!bad.passed);
    assert!(bad.max_defect > 1e-6, "{}", bad.max_defect);
}
