use serde::{Deserialize, Serialize};

use super::channel::{station_deviations, Channel, ChannelOrbit};
use super::code::ShadowOrbit;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShadowReport {
    pub passed: bool,
    /// Largest `|Phi(P_t) - P_{t+1}|`.
    pub max_defect: f64,
    pub deviations: Vec<f64>,
    /// `delta (alpha lambda)^(k_J / 2)`.
    pub bound: f64,
    /// `2 delta (alpha lambda)^(k_bar / 2)`.
    pub coarse_bound: f64,
    /// Worst per-iterate contraction of the normal offsets in each block.
    pub decay_ratios: Vec<f64>,
    pub decay_limit: f64,
    /// `|u_{2J+1}|` and `|z_0|`, both to stay below `delta lambda^k_bar`.
    pub end_offsets: (f64, f64),
    pub proper: bool,
    pub problems: Vec<String>,
}

/// Offsets below this are dominated by the interpolation error of the
/// cylinder graph and carry no rate information.
const RATE_FLOOR: f64 = 1e-8;

/// Re-derive everything the shadowing lemma promises about `orbit` from the
/// map itself: step defects, station deviations by fresh projections, the
/// contraction of normal offsets along each block and the end offsets.
pub fn verify_shadowing(
    channel: &Channel,
    orbit: &ChannelOrbit,
    shadow: &ShadowOrbit,
    defect_tol: f64,
) -> ShadowReport {
    let mut problems = Vec::new();
    let code = &orbit.code;
    let proper = code.is_proper() && *code == shadow.code;
    if !proper {
        problems.push("code is not proper or differs from the shadow's".into());
    }
    let defects = orbit.defects(channel.map);
    let max_defect = defects.iter().copied().fold(0.0, f64::max);
    if let Some((t, d)) = defects.iter().enumerate().find(|(_, &d)| !(d < defect_tol)) {
        problems.push(format!("step {t} is not an iterate: defect {d:e}"));
    }
    let bound = channel.bound(code.last_block());
    let coarse_bound = 2.0 * channel.bound(code.properness.k_bar);
    let deviations = match station_deviations(channel, orbit, shadow) {
        Ok(d) => d,
        Err(e) => {
            problems.push(format!("projection failed: {e}"));
            Vec::new()
        }
    };
    for (s, &d) in deviations.iter().enumerate() {
        if d > 2.0 * bound {
            problems.push(format!("station {s} deviates by {d:e} > 2 x {bound:e}"));
        }
    }

    let lambda = channel.gap.lambda;
    let decay_limit = lambda + 0.05;
    let blocks = code.blocks();
    let mut decay_ratios = Vec::with_capacity(blocks.len());
    for (j, &k) in blocks.iter().enumerate() {
        let t0 = orbit.stations[2 * j];
        let coords: Vec<(f64, f64)> = orbit.points[t0..=t0 + k]
            .iter()
            .map(|p| channel.normal_coords(p))
            .collect();
        let mut worst = 0.0f64;
        for w in coords.windows(2) {
            // stable offset forward while it dominates
            let ((z0, u0), (z1, u1)) = (w[0], w[1]);
            if u0.abs() > RATE_FLOOR && u0.abs() > 1e3 * z0.abs() {
                worst = worst.max((u1 / u0).abs());
            }
            // unstable offset backward while it dominates
            if z1.abs() > RATE_FLOOR && z1.abs() > 1e3 * u1.abs() {
                worst = worst.max((z0 / z1).abs());
            }
        }
        if worst > decay_limit {
            problems.push(format!("block {j} contracts at {worst} > {decay_limit}"));
        }
        decay_ratios.push(worst);
    }

    let last = orbit
        .points
        .last()
        .map(|p| channel.normal_coords(p).1.abs())
        .unwrap_or(0.0);
    let end_offsets = (last, orbit.z_in.abs());
    let end_limit = channel.delta * lambda.powi(code.properness.k_bar as i32);
    if end_offsets.0 > end_limit || end_offsets.1 > end_limit {
        problems.push(format!("end offsets {end_offsets:?} exceed {end_limit:e}"));
    }
    ShadowReport {
        passed: problems.is_empty(),
        max_defect,
        deviations,
        bound,
        coarse_bound,
        decay_ratios,
        decay_limit,
        end_offsets,
        proper,
        problems,
    }
}
