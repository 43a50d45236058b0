use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use drift_core::maps::{
    angle_diff, check_exact, check_symplectic, wrap_angle, PerturbationStep, PhaseLoop, TrigTerm,
};
use drift_core::transport::synthetic::{bump_lift, twist};
use drift_core::transport::{upper_envelope, CylinderMap, EssentialCurve, Ifs};
use drift_core::{MapDef, PhasePoint};
use proptest::prelude::*;

fn term() -> impl Strategy<Value = TrigTerm> {
    (-3i32..=3, -3i32..=3, -1.0..1.0f64, any::<bool>()).prop_map(|(m, n, c, s)| {
        if s {
            TrigTerm::sin(m, n, c)
        } else {
            TrigTerm::cos(m, n, c)
        }
    })
}

fn map() -> impl Strategy<Value = MapDef> {
    (
        any::<bool>(),
        0.5..6.0f64,
        0.0..0.01f64,
        proptest::collection::vec(term(), 1..4),
    )
        .prop_map(|(double, k, eps, terms)| {
            let base = if double {
                MapDef::double_standard(0.7, k)
            } else {
                MapDef::product(k)
            };
            base.with_step(PerturbationStep::new(eps, terms))
        })
}

fn point() -> impl Strategy<Value = PhasePoint> {
    (0.0..TAU, -1.0..1.0f64, 0.0..TAU, -2.0..2.0f64)
        .prop_map(|(p, i, x, y)| PhasePoint::new(p, i, x, y))
}

proptest! {
    #[test]
    fn maps_are_symplectic(m in map(), p in point()) {
        let r = check_symplectic(&m, &[p], 1e-9).unwrap();
        prop_assert!(r.passed, "{:e}", r.max_residual);
    }

    #[test]
    fn inverse_undoes_the_map(m in map(), p in point()) {
        let q = m.inverse(&m.apply(&p));
        prop_assert!(q.distance(&p) < 1e-11, "{:e}", q.distance(&p));
    }

    #[test]
    fn horizontal_loops_are_exact(m in map(), i in -0.5..0.5f64, x in 0.0..TAU, y in -1.0..1.0f64) {
        let r = check_exact(&m, &PhaseLoop::horizontal(i, x, y), 512, 1e-8).unwrap();
        prop_assert!(r.passed, "{:e}", r.max_residual);
    }

    #[test]
    fn wrapped_angles(a in -1e4..1e4f64, b in -1e4..1e4f64) {
        let w = wrap_angle(a);
        prop_assert!((0.0..TAU).contains(&w));
        prop_assert!(angle_diff(w, a).abs() < 1e-9);
        let d = angle_diff(a, b);
        prop_assert!(d > -PI && d <= PI);
        prop_assert!(angle_diff(wrap_angle(b + d), a).abs() < 1e-9);
    }
}

fn lift_ifs(turn: f64, amount: f64) -> Ifs {
    let maps: Vec<Arc<dyn CylinderMap>> = vec![
        Arc::new(twist(turn, 1.0)),
        Arc::new(bump_lift(amount, 0.0, 1.0)),
    ];
    Ifs::new(maps, (0.0, 1.0)).unwrap()
}

fn wavy(base: f64, amp: f64, phase: f64) -> EssentialCurve {
    EssentialCurve::from_fn(128, move |p| base + amp * (p + phase).sin())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn envelope_never_lowers_a_curve(
        turn in 0.0..TAU, amount in 0.0..0.05f64,
        base in 0.2..0.6f64, amp in 0.0..0.05f64, phase in 0.0..TAU,
    ) {
        let ifs = lift_ifs(turn, amount);
        let g = wavy(base, amp, phase);
        let (up, winner) = upper_envelope(&ifs, &[0, 1], &g, 1).unwrap();
        for j in 0..g.len() {
            prop_assert!(up.ys[j] >= g.ys[j]);
            prop_assert_eq!(winner[j].is_none(), up.ys[j] == g.ys[j]);
        }
        let (same, _) = upper_envelope(&ifs, &[], &g, 1).unwrap();
        prop_assert_eq!(same.ys, g.ys);
    }

    #[test]
    fn envelope_preserves_order(
        turn in 0.0..TAU, amount in 0.0..0.05f64,
        base in 0.2..0.5f64, amp in 0.0..0.05f64, phase in 0.0..TAU, shift in 0.01..0.2f64,
    ) {
        let ifs = lift_ifs(turn, amount);
        let low = wavy(base, amp, phase);
        let high = wavy(base + shift, amp, phase);
        let (a, _) = upper_envelope(&ifs, &[0, 1], &low, 1).unwrap();
        let (b, _) = upper_envelope(&ifs, &[0, 1], &high, 1).unwrap();
        for j in 0..a.len() {
            prop_assert!(a.ys[j] <= b.ys[j] + 1e-12, "{j}: {} > {}", a.ys[j], b.ys[j]);
        }
    }
}
