use serde::{Deserialize, Serialize};

use super::curve::{
    check_overflow, image_hits, raw_image, upper_envelope, EssentialCurve, Provenance,
};
use super::Ifs;
use crate::error::{Error, Result};
use crate::maps::angle_diff;

#[derive(Clone, Debug, PartialEq)]
pub struct TransportOptions {
    /// Sup-norm step below which a generation counts as stalled.
    pub tol: f64,
    /// Consecutive stalled generations that certify an obstruction.
    pub stall: usize,
    /// `None`: ten times the band height over the first generation's step.
    pub max_gen: Option<usize>,
    /// Endpoint snapping in `y`; `None` uses one grid cell `2 pi / n`.
    pub snap: Option<f64>,
}

impl Default for TransportOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            stall: 5,
            max_gen: None,
            snap: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Connecting,
    Obstruction,
}

/// A point of a connecting orbit and the map applied to it (`None` at the end).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub phi: f64,
    #[serde(rename = "I")]
    pub action: f64,
    pub map_index: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObstructionCurve {
    pub phis: Vec<f64>,
    pub ys: Vec<f64>,
    /// Per-map distance between the curve and its image.
    pub residuals: Vec<f64>,
    #[serde(with = "super::curve::unbounded")]
    pub lipschitz: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportCertificate {
    pub outcome: Outcome,
    pub steps: Vec<Step>,
    pub obstruction: Option<ObstructionCurve>,
    pub generations: usize,
    pub snap: f64,
    pub gamma_minus: EssentialCurve,
    pub gamma_plus: EssentialCurve,
}

/// Vertical distances between a curve and its image under each map, both
/// ways: image samples against the curve, and the curve against the
/// highest image crossing of each grid line.
pub(crate) fn invariance_residuals(ifs: &Ifs, gamma: &EssentialCurve) -> Result<Vec<f64>> {
    (0..ifs.len())
        .map(|n| {
            let img = raw_image(ifs, n, gamma)?;
            let d1 = img
                .iter()
                .map(|&(p, y)| (y - gamma.eval(p)).abs())
                .fold(0.0, f64::max);
            let d2 = image_hits(ifs, n, gamma, &img)?
                .iter()
                .zip(&gamma.ys)
                .map(|(h, y)| h.map_or(0.0, |h| (h.y - y).abs()))
                .fold(0.0, f64::max);
            Ok(d1.max(d2))
        })
        .collect()
}

fn shoot(
    ifs: &Ifs,
    start: f64,
    gamma_minus: &EssentialCurve,
    chain: &[usize],
) -> Option<Vec<Step>> {
    let mut p = (start, gamma_minus.eval(start));
    let mut steps = Vec::with_capacity(chain.len() + 1);
    for &n in chain {
        steps.push(Step {
            phi: p.0,
            action: p.1,
            map_index: Some(n),
        });
        p = ifs.apply(n, p.0, p.1).ok()?;
    }
    steps.push(Step {
        phi: p.0,
        action: p.1,
        map_index: None,
    });
    Some(steps)
}

/// Map indices and starting angle on `gamma_minus` reached by following the
/// provenance of `prov` back through `history`.
fn backtrack(history: &[EssentialCurve], mut prov: Provenance) -> (f64, Vec<usize>) {
    let mut chain = Vec::new();
    let mut start = 0.0;
    while let Provenance::Image {
        generation,
        map,
        pre_phi,
    } = prov
    {
        chain.push(map);
        start = pre_phi;
        let curve = &history[generation - 1];
        prov = curve.provenance[curve.nearest(pre_phi)];
    }
    chain.reverse();
    (start, chain)
}

/// Evolve `gamma_minus` by the upper envelope of its images under all maps
/// until an image meets `gamma_plus` or the curves stop rising.
pub fn birkhoff_transport(
    ifs: &Ifs,
    gamma_minus: &EssentialCurve,
    gamma_plus: &EssentialCurve,
    opts: &TransportOptions,
) -> Result<TransportCertificate> {
    birkhoff_transport_with(ifs, gamma_minus, gamma_plus, opts, |_, _| {})
}

/// As [`birkhoff_transport`], calling `observe(m, gamma_m)` for every curve
/// of the sequence, starting with `gamma_0 = gamma_minus`.
pub fn birkhoff_transport_with(
    ifs: &Ifs,
    gamma_minus: &EssentialCurve,
    gamma_plus: &EssentialCurve,
    opts: &TransportOptions,
    mut observe: impl FnMut(usize, &EssentialCurve),
) -> Result<TransportCertificate> {
    let n = gamma_minus.len();
    if gamma_plus.len() != n {
        return Err(Error::InvalidInput(
            "curves must share the angle grid".into(),
        ));
    }
    if gamma_minus
        .ys
        .iter()
        .zip(&gamma_plus.ys)
        .any(|(a, b)| a >= b)
    {
        return Err(Error::InvalidInput(
            "gamma_minus must lie strictly below gamma_plus".into(),
        ));
    }
    if gamma_minus.min_y() < ifs.band.0 || gamma_plus.max_y() > ifs.band.1 {
        return Err(Error::InvalidInput("curves must lie in the band".into()));
    }
    let snap = opts.snap.unwrap_or(gamma_minus.h());
    let lipschitz = ifs.lipschitz_bound(16).unwrap_or(f64::INFINITY);
    let all: Vec<usize> = (0..ifs.len()).collect();
    let mut seed = gamma_minus.clone();
    seed.provenance = vec![Provenance::Seed; n];
    observe(0, &seed);
    let mut history = vec![seed];
    let mut max_gen = opts.max_gen.unwrap_or(usize::MAX);
    let mut stalled = 0;
    let mut m = 0;
    while m < max_gen {
        let gamma = &history[m];
        let (next, _) = upper_envelope(ifs, &all, gamma, m + 1)?;
        // an image meeting gamma_plus ends the search
        let hit = (0..n)
            .filter(|&j| matches!(next.provenance[j], Provenance::Image { generation, .. } if generation == m + 1))
            .map(|j| (j, next.ys[j] - gamma_plus.ys[j]))
            .filter(|&(_, margin)| margin >= 0.0)
            .max_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((j, _)) = hit {
            let (start, chain) = backtrack(&history, next.provenance[j]);
            let steps = best_shot(ifs, start, gamma_minus, gamma_plus, &chain);
            return Ok(TransportCertificate {
                outcome: Outcome::Connecting,
                steps,
                obstruction: None,
                generations: m + 1,
                snap,
                gamma_minus: gamma_minus.clone(),
                gamma_plus: gamma_plus.clone(),
            });
        }
        check_overflow(ifs, &next)?;
        let step = next.sup_distance(gamma);
        if m == 0 && opts.max_gen.is_none() {
            let height = ifs.band.1 - ifs.band.0;
            max_gen = ((10.0 * height / step.max(1e-12)).ceil() as usize).clamp(100, 100_000);
        }
        stalled = if step < opts.tol { stalled + 1 } else { 0 };
        observe(m + 1, &next);
        history.push(next);
        m += 1;
        if stalled >= opts.stall {
            let mut curve = history[m].clone();
            curve.lipschitz = lipschitz;
            let residuals = invariance_residuals(ifs, &curve)?;
            return Ok(TransportCertificate {
                outcome: Outcome::Obstruction,
                steps: Vec::new(),
                obstruction: Some(ObstructionCurve {
                    phis: curve.phis.clone(),
                    ys: curve.ys.clone(),
                    residuals,
                    lipschitz,
                }),
                generations: m,
                snap,
                gamma_minus: gamma_minus.clone(),
                gamma_plus: gamma_plus.clone(),
            });
        }
    }
    Err(Error::GenerationLimit(max_gen))
}

/// Forward orbit along `chain` from the start angle within two grid cells
/// of `start` that ends highest above `gamma_plus`.
fn best_shot(
    ifs: &Ifs,
    start: f64,
    gamma_minus: &EssentialCurve,
    gamma_plus: &EssentialCurve,
    chain: &[usize],
) -> Vec<Step> {
    let h = gamma_minus.h();
    let margin = |s: &Vec<Step>| {
        let last = s.last().expect("orbit has an end point");
        last.action - gamma_plus.eval(last.phi)
    };
    let mut best: Option<(f64, Vec<Step>)> = None;
    for k in -20..=20 {
        let s0 = start + k as f64 * h / 10.0;
        if let Some(steps) = shoot(ifs, s0, gamma_minus, chain) {
            let mg = margin(&steps);
            if best.as_ref().is_none_or(|b| mg > b.0) {
                best = Some((mg, steps));
            }
            if k == 0 && mg >= 0.0 {
                break;
            }
        }
    }
    best.map(|b| b.1).unwrap_or_default()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Validation {
    pub valid: bool,
    pub diagnosis: String,
    /// Connecting: largest step error. Obstruction: largest invariance residual.
    pub max_error: f64,
}

/// Re-check a certificate against the maps it was built from.
pub fn validate_certificate(cert: &TransportCertificate, ifs: &Ifs, tol: f64) -> Validation {
    match cert.outcome {
        Outcome::Connecting => validate_connecting(cert, ifs, tol),
        Outcome::Obstruction => validate_obstruction(cert, ifs, tol),
    }
}

fn validate_connecting(cert: &TransportCertificate, ifs: &Ifs, tol: f64) -> Validation {
    let fail = |diagnosis: String, max_error: f64| Validation {
        valid: false,
        diagnosis,
        max_error,
    };
    let steps = &cert.steps;
    if steps.len() < 2 {
        return fail("orbit has no steps".into(), f64::INFINITY);
    }
    let mut worst = 0.0f64;
    for (i, w) in steps.windows(2).enumerate() {
        let Some(n) = w[0].map_index.filter(|&n| n < ifs.len()) else {
            return fail(format!("step {i} has no valid map index"), f64::INFINITY);
        };
        let Ok((p, y)) = ifs.apply(n, w[0].phi, w[0].action) else {
            return fail(format!("step {i} leaves the domain"), f64::INFINITY);
        };
        let err = angle_diff(p, w[1].phi).abs().max((y - w[1].action).abs());
        worst = worst.max(err);
        if err >= tol {
            return fail(format!("step {i} error {err:e}"), worst);
        }
    }
    let first = steps[0];
    let last = steps[steps.len() - 1];
    let start_gap = (first.action - cert.gamma_minus.eval(first.phi)).abs();
    if start_gap > cert.snap + tol {
        return fail(format!("start is {start_gap:e} off gamma_minus"), worst);
    }
    let end_gap = cert.gamma_plus.eval(last.phi) - last.action;
    if end_gap > cert.snap + tol {
        return fail(format!("end is {end_gap:e} below gamma_plus"), worst);
    }
    Validation {
        valid: true,
        diagnosis: format!("{} steps, end margin {:e}", steps.len() - 1, -end_gap),
        max_error: worst,
    }
}

fn validate_obstruction(cert: &TransportCertificate, ifs: &Ifs, tol: f64) -> Validation {
    let Some(obs) = &cert.obstruction else {
        return Validation {
            valid: false,
            diagnosis: "no obstruction curve".into(),
            max_error: f64::INFINITY,
        };
    };
    let coarse = EssentialCurve {
        phis: obs.phis.clone(),
        ys: obs.ys.clone(),
        lipschitz: obs.lipschitz,
        provenance: vec![Provenance::Seed; obs.ys.len()],
    };
    let fine = EssentialCurve::from_fn(1024, |p| coarse.eval(p));
    let reported = obs.residuals.iter().copied().fold(0.0, f64::max);
    let bound = tol.max(reported);
    let residuals = match invariance_residuals(ifs, &fine) {
        Ok(r) => r,
        Err(e) => {
            return Validation {
                valid: false,
                diagnosis: format!("image failed: {e}"),
                max_error: f64::INFINITY,
            }
        }
    };
    let worst = residuals.iter().copied().fold(0.0, f64::max);
    let mut problems = Vec::new();
    // linear resampling adds up to h^2 |y''| / 8 on a curve of slope <= L
    let slack = fine.h() * fine.h();
    if worst > bound + slack {
        problems.push(format!("invariance residual {worst:e} exceeds {bound:e}"));
    }
    let slope = coarse.max_slope();
    if obs.lipschitz.is_finite() && slope > 1.1 * obs.lipschitz + 1e-9 {
        problems.push(format!(
            "slope {slope} exceeds Lipschitz bound {}",
            obs.lipschitz
        ));
    }
    Validation {
        valid: problems.is_empty(),
        diagnosis: if problems.is_empty() {
            format!("max residual {worst:e}")
        } else {
            problems.join("; ")
        },
        max_error: worst,
    }
}
