use serde::{Deserialize, Serialize};

use super::ShadowDynamics;
use crate::error::{Error, Result};
use crate::nhim::CylinderPoint;
use crate::transport::Step;

/// Constants of the properness condition `k_s >= k_bar`, `k_s >= gamma k_{s+1} + D`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProperParams {
    pub k_bar: usize,
    pub gamma_rate: f64,
    #[serde(rename = "D")]
    pub d: f64,
}

impl Default for ProperParams {
    fn default() -> Self {
        Self {
            k_bar: 10,
            gamma_rate: 2.0,
            d: 5.0,
        }
    }
}

impl ProperParams {
    /// Smallest admissible block length in front of a block of length `next`.
    pub fn required(&self, next: Option<usize>) -> usize {
        match next {
            None => self.k_bar,
            Some(k) => self
                .k_bar
                .max((self.gamma_rate * k as f64 + self.d).ceil() as usize),
        }
    }

    /// Lower bound on `gamma` for the deviations to shrink from block to
    /// block: `ln(1 / (alpha lambda)) / ln(alpha / lambda)`.
    pub fn gamma_threshold(alpha: f64, lambda: f64) -> f64 {
        (1.0 / (alpha * lambda)).ln() / (alpha / lambda).ln()
    }
}

/// `k_0, {(n_j, k_j)}`: `k_0` iterates of `F_0`, then for each `j` the
/// excursion `n_j` followed by `k_j` iterates of `F_0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Code {
    pub k0: usize,
    pub steps: Vec<(usize, usize)>,
    pub properness: ProperParams,
}

impl Code {
    /// `[k_0, k_1, ..., k_J]`.
    pub fn blocks(&self) -> Vec<usize> {
        std::iter::once(self.k0)
            .chain(self.steps.iter().map(|s| s.1))
            .collect()
    }

    pub fn excursions(&self) -> usize {
        self.steps.len()
    }

    pub fn is_proper(&self) -> bool {
        let k = self.blocks();
        k.iter()
            .enumerate()
            .all(|(s, &ks)| ks >= self.properness.required(k.get(s + 1).copied()))
    }

    pub fn last_block(&self) -> usize {
        *self.blocks().last().expect("k0 is always present")
    }
}

/// An IFS orbit read as blocks of `F_0` iterates between single applications
/// of the other maps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawCode {
    pub start: CylinderPoint,
    pub end: CylinderPoint,
    pub k0: usize,
    /// `(n_j, i_j)`: map `n_j >= 1`, then `i_j` iterates of `F_0`.
    pub steps: Vec<(usize, usize)>,
}

impl RawCode {
    pub fn from_steps(steps: &[Step]) -> Result<Self> {
        let (first, last) = match (steps.first(), steps.last()) {
            (Some(f), Some(l)) => (f, l),
            _ => return Err(Error::InvalidInput("empty orbit".into())),
        };
        let mut k0 = 0;
        let mut out: Vec<(usize, usize)> = Vec::new();
        for s in &steps[..steps.len() - 1] {
            match s.map_index {
                Some(0) => match out.last_mut() {
                    Some(b) => b.1 += 1,
                    None => k0 += 1,
                },
                Some(n) => out.push((n, 0)),
                None => return Err(Error::InvalidInput("step without a map index".into())),
            }
        }
        Ok(Self {
            start: CylinderPoint::new(first.phi, first.action),
            end: CylinderPoint::new(last.phi, last.action),
            k0,
            steps: out,
        })
    }

    pub fn blocks(&self) -> Vec<usize> {
        std::iter::once(self.k0)
            .chain(self.steps.iter().map(|s| s.1))
            .collect()
    }
}

/// Points `v*_0 ... v*_{2J+1}` of `{F_0, Fbar_n}` following a code.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShadowOrbit {
    pub points: Vec<CylinderPoint>,
    pub code: Code,
}

impl ShadowOrbit {
    /// Largest mismatch when the orbit is recomputed station by station.
    pub fn consistency(&self, dynamics: &impl ShadowDynamics) -> Result<f64> {
        let k = self.code.blocks();
        let mut worst = 0.0f64;
        for j in 0..k.len() {
            let b = dynamics.f0(&self.points[2 * j], k[j] as i64);
            worst = worst.max(b.distance(&self.points[2 * j + 1]));
            if j + 1 < k.len() {
                let n = self.code.steps[j].0;
                let e = dynamics.fbar(n, &self.points[2 * j + 1])?;
                worst = worst.max(e.distance(&self.points[2 * j + 2]));
            }
        }
        Ok(worst)
    }
}

/// Smallest `k` in `[k_min, k_max]` with `|F_0^{-k}(v) - v| < radius`.
pub fn find_return_time(
    f0_inverse: impl Fn(&CylinderPoint) -> CylinderPoint,
    v: &CylinderPoint,
    radius: f64,
    k_min: usize,
    k_max: usize,
) -> Result<usize> {
    if !(radius > 0.0) {
        return Err(Error::InvalidInput("return radius must be positive".into()));
    }
    if k_min == 0 {
        return Ok(0);
    }
    let mut w = *v;
    for k in 1..=k_max {
        w = f0_inverse(&w);
        if k >= k_min && w.distance(v) < radius {
            return Ok(k);
        }
    }
    Err(Error::NotFound(format!(
        "no return within {radius} up to k = {k_max}"
    )))
}

/// Options of [`make_proper_code`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PaddingOptions {
    /// Allowed distance of the shadow's first point from the raw start.
    pub u0: f64,
    pub k_max: usize,
    /// Number of times the return radius is quartered before giving up.
    pub attempts: usize,
}

impl Default for PaddingOptions {
    fn default() -> Self {
        Self {
            u0: 0.05,
            k_max: 200_000,
            attempts: 6,
        }
    }
}

/// Stretch the blocks of `raw` into a proper code by backward induction.
///
/// The last block is stretched forward to `k_bar` if it is too short, which
/// moves the end point along its `F_0` orbit. Going backwards, block `j`
/// gets `r_j` extra iterates where `F_0^{-r_j}` returns close to the block's
/// end point, so its start stays near the raw orbit while `k_j` meets the
/// properness bound. Excursions are undone with `Fbar^{-1}`; each `Fbar_n`
/// absorbs `m_-` and `m_+` iterates of the neighbouring raw blocks.
pub fn make_proper_code(
    raw: &RawCode,
    dynamics: &impl ShadowDynamics,
    params: ProperParams,
    opts: &PaddingOptions,
) -> Result<(Code, ShadowOrbit)> {
    let mut radius = 0.5 * opts.u0;
    let mut last_err = Error::PaddingFailed(raw.steps.len());
    for _ in 0..opts.attempts.max(1) {
        match pad(raw, dynamics, params, radius, opts.k_max) {
            Ok((code, shadow)) if shadow.points[0].distance(&raw.start) <= opts.u0 => {
                return Ok((code, shadow))
            }
            Ok(_) => last_err = Error::PaddingFailed(0),
            Err(e) => last_err = e,
        }
        radius *= 0.25;
    }
    Err(last_err)
}

fn pad(
    raw: &RawCode,
    dynamics: &impl ShadowDynamics,
    params: ProperParams,
    radius: f64,
    k_max: usize,
) -> Result<(Code, ShadowOrbit)> {
    let raw_k = raw.blocks();
    let big_j = raw.steps.len();
    let mut k = vec![0usize; big_j + 1];
    let mut pts = vec![raw.start; 2 * big_j + 2];
    let mut w = raw.end;
    for j in (0..=big_j).rev() {
        // F0 iterates left to block j once the excursions take their share
        let mut base = raw_k[j] as i64;
        if j >= 1 {
            base -= dynamics.margins(raw.steps[j - 1].0).1 as i64;
        }
        if j < big_j {
            base -= dynamics.margins(raw.steps[j].0).0 as i64;
        }
        let need = params.required(k.get(j + 1).copied().filter(|_| j < big_j)) as i64;
        if j == big_j {
            // nothing follows the last block, so it is stretched forward
            let head = dynamics.f0(&raw.end, -base);
            k[j] = base.max(need) as usize;
            pts[2 * j] = head;
            pts[2 * j + 1] = dynamics.f0(&head, k[j] as i64);
            if j >= 1 {
                w = dynamics
                    .fbar_inverse(raw.steps[j - 1].0, &head)
                    .map_err(|_| Error::PaddingFailed(j))?;
            }
            continue;
        }
        let r = if base >= need {
            0
        } else {
            let f0_inv = |v: &CylinderPoint| dynamics.f0(v, -1);
            find_return_time(f0_inv, &w, radius, (need - base) as usize, k_max)
                .map_err(|_| Error::PaddingFailed(j))?
        };
        k[j] = (base + r as i64) as usize;
        pts[2 * j + 1] = w;
        pts[2 * j] = dynamics.f0(&w, -(k[j] as i64));
        if j >= 1 {
            w = dynamics
                .fbar_inverse(raw.steps[j - 1].0, &pts[2 * j])
                .map_err(|_| Error::PaddingFailed(j))?;
        }
    }
    let code = Code {
        k0: k[0],
        steps: (1..=big_j).map(|j| (raw.steps[j - 1].0, k[j])).collect(),
        properness: params,
    };
    Ok((code.clone(), ShadowOrbit { points: pts, code }))
}
