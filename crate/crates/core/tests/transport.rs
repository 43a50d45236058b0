use std::f64::consts::TAU;
use std::sync::Arc;

use drift_core::transport::synthetic::{bump_lift, random_instance, rotation, twist};
use drift_core::transport::{
    birkhoff_transport, birkhoff_transport_with, brute_force_reachability, curve_image,
    upper_boundary_op, validate_certificate, CylinderMap, EssentialCurve, FnMap, Ifs, Outcome,
    TransportOptions,
};

const N: usize = 256;

fn ifs(maps: Vec<FnMap>, band: (f64, f64)) -> Ifs {
    let maps: Vec<Arc<dyn CylinderMap>> = maps
        .into_iter()
        .map(|m| Arc::new(m) as Arc<dyn CylinderMap>)
        .collect();
    Ifs::new(maps, band).unwrap()
}

fn identity() -> FnMap {
    FnMap::new("id", |p, y| (p, y))
}

fn connecting_case() -> Ifs {
    ifs(
        vec![rotation(0.3 * TAU), bump_lift(0.05, 0.0, 1.0)],
        (0.0, 1.0),
    )
}

fn rotation_case() -> Ifs {
    let a = (5f64.sqrt() - 1.0) / 2.0 * TAU;
    ifs(vec![rotation(a), rotation(a)], (0.0, 1.0))
}

#[test]
fn identity_image_is_the_curve() {
    let f = ifs(vec![identity()], (0.0, 1.0));
    let g = EssentialCurve::from_fn(N, |p| 0.3 + 0.05 * p.cos());
    let img = curve_image(&f, 0, &g).unwrap();
    for ((p, y), (q, z)) in img.iter().zip(g.phis.iter().zip(&g.ys)) {
        assert_eq!((*p, *y), (*q, *z));
    }
}

#[test]
fn twist_keeps_horizontal_circles() {
    let f = ifs(vec![twist(0.0, 1.0)], (0.0, 1.0));
    let g = EssentialCurve::horizontal(N, 0.2);
    let img = curve_image(&f, 0, &g).unwrap();
    for (k, (p, y)) in img.iter().enumerate() {
        assert!((y - 0.2).abs() < 1e-15);
        assert!((p - g.phis[k] - 0.2).abs() < 1e-14);
    }
}

#[test]
fn sine_kick_image() {
    let f = ifs(
        vec![FnMap::new("kick", |p, y| (p, y + 0.01 * p.sin()))],
        (0.0, 1.0),
    );
    let g = EssentialCurve::horizontal(N, 0.2);
    let img = curve_image(&f, 0, &g).unwrap();
    for &(p, y) in &img {
        assert!((y - 0.2 - 0.01 * p.sin()).abs() < 1e-15);
    }
}

#[test]
fn image_leaving_band_is_rejected() {
    let f = ifs(vec![FnMap::new("up", |p, y| (p, y + 0.5))], (0.0, 1.0));
    assert!(curve_image(&f, 0, &EssentialCurve::horizontal(N, 0.7)).is_err());
}

#[test]
fn envelope_of_two_graphs() {
    let f = ifs(
        vec![FnMap::new("kick", |p, y| (p, y + 0.1 * p.sin()))],
        (0.0, 1.0),
    );
    let g = EssentialCurve::horizontal(N, 0.5);
    let env = upper_boundary_op(&f, 0, &g, 1).unwrap();
    for (p, y) in env.phis.iter().zip(&env.ys) {
        assert!((y - 0.5f64.max(0.5 + 0.1 * p.sin())).abs() < 1e-12);
    }
}

#[test]
fn envelope_under_identity() {
    let f = ifs(vec![identity()], (0.0, 1.0));
    let g = EssentialCurve::from_fn(N, |p| 0.4 + 0.1 * (2.0 * p).sin());
    assert_eq!(upper_boundary_op(&f, 0, &g, 1).unwrap().ys, g.ys);
}

#[test]
fn envelope_overflow() {
    let f = ifs(
        vec![FnMap::new("kick", |p, y| (p, y + 0.3 * p.sin()))],
        (0.0, 1.0),
    );
    let g = EssentialCurve::horizontal(N, 0.8);
    assert!(upper_boundary_op(&f, 0, &g, 1).is_err());
}

/// A shear in `phi` that folds the image back over itself.
fn fold() -> FnMap {
    FnMap::new("fold", |p, y| {
        (p + 1.5 * (p + 4.0 * (y - 0.5)).sin(), y + 0.1 * p.cos())
    })
}

#[test]
fn folded_envelope_matches_raster() {
    let f = ifs(vec![fold()], (0.0, 1.0));
    let g = EssentialCurve::horizontal(N, 0.5);
    let env = upper_boundary_op(&f, 0, &g, 1).unwrap();
    // dense samples of the image; for each column keep the highest point
    let m = 200_000;
    let cols = 64;
    let mut top = vec![f64::NEG_INFINITY; cols];
    for k in 0..m {
        let s = TAU * k as f64 / m as f64;
        let (p, y) = f.apply(0, s, 0.5).unwrap();
        let c = ((p.rem_euclid(TAU) / TAU * cols as f64) as usize).min(cols - 1);
        top[c] = top[c].max(y);
    }
    let slope = 0.1 * 2.5 + 0.1;
    let cell = TAU / cols as f64;
    for (c, &t) in top.iter().enumerate() {
        let mid = (c as f64 + 0.5) * cell;
        let e = env.eval(mid);
        assert!(
            (e - t.max(0.5)).abs() < slope * cell,
            "column {c}: {e} vs {t}"
        );
    }
    assert!(env.ys.iter().all(|&y| y >= 0.5));
}

#[test]
fn rotation_pair_is_obstructed() {
    let f = rotation_case();
    let cert = birkhoff_transport(
        &f,
        &EssentialCurve::horizontal(N, 0.1),
        &EssentialCurve::horizontal(N, 0.9),
        &TransportOptions::default(),
    )
    .unwrap();
    assert_eq!(cert.outcome, Outcome::Obstruction);
    let obs = cert.obstruction.as_ref().unwrap();
    assert!(
        obs.residuals.iter().all(|&r| r < 1e-9),
        "{:?}",
        obs.residuals
    );
    let v = validate_certificate(&cert, &f, 1e-9);
    assert!(v.valid, "{}", v.diagnosis);
    assert!(v.max_error < 1e-9);
    assert!(cert.steps.is_empty());
}

#[test]
fn bump_lift_connects() {
    let f = connecting_case();
    let cert = birkhoff_transport(
        &f,
        &EssentialCurve::horizontal(N, 0.1),
        &EssentialCurve::horizontal(N, 0.4),
        &TransportOptions::default(),
    )
    .unwrap();
    assert_eq!(cert.outcome, Outcome::Connecting);
    assert!(cert.obstruction.is_none());
    assert!(cert.steps.len() - 1 <= 60, "{} steps", cert.steps.len() - 1);
    let v = validate_certificate(&cert, &f, 1e-9);
    assert!(v.valid, "{}", v.diagnosis);
}

#[test]
fn tampered_certificate_fails() {
    let f = connecting_case();
    let mut cert = birkhoff_transport(
        &f,
        &EssentialCurve::horizontal(N, 0.1),
        &EssentialCurve::horizontal(N, 0.4),
        &TransportOptions::default(),
    )
    .unwrap();
    let k = cert.steps.len() / 2;
    cert.steps[k].action += 1e-2;
    let v = validate_certificate(&cert, &f, 1e-9);
    assert!(!v.valid);
    assert!(v.diagnosis.contains("step"), "{}", v.diagnosis);
}

#[test]
fn tampered_obstruction_fails() {
    let f = connecting_case();
    let mut cert = birkhoff_transport(
        &rotation_case(),
        &EssentialCurve::horizontal(N, 0.1),
        &EssentialCurve::horizontal(N, 0.9),
        &TransportOptions::default(),
    )
    .unwrap();
    // the rotation obstruction is not invariant under the bump lift
    assert!(!validate_certificate(&cert, &f, 1e-9).valid);
    cert.obstruction.as_mut().unwrap().ys[3] += 1e-2;
    assert!(!validate_certificate(&cert, &rotation_case(), 1e-9).valid);
}

#[test]
fn oracle_on_the_two_examples() {
    let start = EssentialCurve::horizontal(N, 0.1);
    let rot = brute_force_reachability(&rotation_case(), 200, 200, &start, 1e-3);
    let row = rot.cell_of(0.0, 0.1).unwrap() / 200;
    assert!(rot.top_row().unwrap() <= row + 1);
    assert!(!rot.reaches(&EssentialCurve::horizontal(N, 0.4)));

    let con = brute_force_reachability(&connecting_case(), 200, 200, &start, 1e-3);
    assert!(con.reaches(&EssentialCurve::horizontal(N, 0.4)));
}

#[test]
fn oracle_refinement_keeps_reachability() {
    let start = EssentialCurve::horizontal(N, 0.1);
    let goal = EssentialCurve::horizontal(N, 0.4);
    for f in [connecting_case(), rotation_case()] {
        let r: Vec<bool> = [50, 100, 200]
            .iter()
            .map(|&n| brute_force_reachability(&f, n, n, &start, 1e-3).reaches(&goal))
            .collect();
        assert!(r.windows(2).all(|w| w[0] <= w[1]), "{r:?}");
    }
}

#[test]
fn random_instances_agree_with_oracle() {
    for seed in 0..10u64 {
        let inst = random_instance(seed, 200);
        let mut prev: Option<EssentialCurve> = None;
        let mut generations = 0;
        let cert = birkhoff_transport_with(
            &inst.ifs,
            &inst.gamma_minus,
            &inst.gamma_plus,
            &TransportOptions::default(),
            |m, g| {
                if let Some(p) = &prev {
                    assert!(
                        g.ys.iter().zip(&p.ys).all(|(a, b)| a >= b),
                        "seed {seed} generation {m}"
                    );
                }
                prev = Some(g.clone());
                generations = m;
            },
        )
        .unwrap();
        let v = validate_certificate(&cert, &inst.ifs, 1e-9);
        assert!(v.valid, "seed {seed}: {}", v.diagnosis);
        let reach = brute_force_reachability(&inst.ifs, 200, 200, &inst.gamma_minus, 1e-3);
        let connects = cert.outcome == Outcome::Connecting;
        assert_eq!(
            connects,
            reach.reaches(&inst.gamma_plus),
            "seed {seed} strip {:?}",
            inst.strip
        );
        assert_eq!(connects, inst.strip.is_none(), "seed {seed}");
        eprintln!(
            "seed {seed}: {:?} after {generations} generations",
            cert.outcome
        );
    }
}
