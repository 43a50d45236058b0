//! Small hand-made cylinder maps for testing the transport machinery.

use std::f64::consts::TAU;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CylinderMap, EssentialCurve, FnMap, Ifs};

pub fn rotation(angle: f64) -> FnMap {
    FnMap::new("rotation", move |p, y| (p + angle, y))
}

/// `(phi + angle + slope y, y)`.
pub fn twist(angle: f64, slope: f64) -> FnMap {
    FnMap::new("twist", move |p, y| (p + angle + slope * y, y))
}

/// Smooth bump on `[lo, hi]` (angles mod 2pi) with peak 1.
pub fn bump(phi: f64, lo: f64, hi: f64) -> f64 {
    let p = phi.rem_euclid(TAU);
    if p <= lo || p >= hi {
        return 0.0;
    }
    let t = (2.0 * p - lo - hi) / (hi - lo);
    (1.0 - 1.0 / (1.0 - t * t)).exp()
}

/// Adds `amount * bump(phi)` to `y`.
pub fn bump_lift(amount: f64, lo: f64, hi: f64) -> FnMap {
    FnMap::new("bump_lift", move |p, y| (p, y + amount * bump(p, lo, hi)))
}

/// `y + amp sin(phi + phase) chi(y)` where `chi` vanishes on `strip` and
/// grows linearly to 1 over `ramp` on either side. With `ramp > amp` no
/// point crosses into the strip, so every circle in it is invariant.
pub fn barrier_kick(amp: f64, phase: f64, strip: Option<(f64, f64)>, ramp: f64) -> FnMap {
    FnMap::new("barrier_kick", move |p, y| {
        let chi = match strip {
            Some((a, b)) => {
                let d = if y < a {
                    a - y
                } else if y > b {
                    y - b
                } else {
                    0.0
                };
                (d / ramp).min(1.0)
            }
            None => 1.0,
        };
        (p, y + amp * (p + phase).sin() * chi)
    })
}

/// A randomized synthetic system on the band `[0, 1]` with `gamma_minus`
/// at `y = 0.1` and `gamma_plus` at `y = 0.9`.
#[derive(Clone, Debug)]
pub struct SyntheticInstance {
    pub ifs: Ifs,
    pub gamma_minus: EssentialCurve,
    pub gamma_plus: EssentialCurve,
    /// The strip of common invariant circles, when there is one.
    pub strip: Option<(f64, f64)>,
}

/// `F_0` a twist, `F_1..F_k` sine kicks; with probability one half the
/// kicks share a strip of invariant circles.
pub fn random_instance(seed: u64, n_samples: usize) -> SyntheticInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let angle = rng.random_range(0.0..TAU);
    let slope = rng.random_range(0.5..1.5);
    let strip = rng.random_bool(0.5).then(|| {
        let c = rng.random_range(0.3..0.6);
        (c, c + 0.05)
    });
    let k = rng.random_range(1..=3);
    let mut maps: Vec<Arc<dyn CylinderMap>> = vec![Arc::new(twist(angle, slope))];
    for _ in 0..k {
        let amp = rng.random_range(0.02..0.05);
        let phase = rng.random_range(0.0..TAU);
        maps.push(Arc::new(barrier_kick(amp, phase, strip, 0.1)));
    }
    SyntheticInstance {
        ifs: Ifs::new(maps, (0.0, 1.0)).expect("valid band"),
        gamma_minus: EssentialCurve::horizontal(n_samples, 0.1),
        gamma_plus: EssentialCurve::horizontal(n_samples, 0.9),
        strip,
    }
}
