use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::Ifs;
use crate::error::{Error, Result};
use crate::maps::angle_diff;
use crate::par::*;

/// Where a curve sample came from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Seed,
    /// Image under map `map` of the point of curve `generation - 1` over
    /// the (unreduced) angle `pre_phi`.
    Image {
        generation: usize,
        map: usize,
        pre_phi: f64,
    },
}

/// `f64` where `+inf` round-trips through JSON `null`.
pub(crate) mod unbounded {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// A periodic graph `y(phi)` on the uniform grid `phi_j = 2 pi j / n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EssentialCurve {
    pub phis: Vec<f64>,
    pub ys: Vec<f64>,
    /// Infinite when unknown; stored as `null`.
    #[serde(with = "unbounded")]
    pub lipschitz: f64,
    pub provenance: Vec<Provenance>,
}

impl EssentialCurve {
    pub fn from_fn(n: usize, f: impl Fn(f64) -> f64) -> Self {
        let phis: Vec<f64> = (0..n).map(|j| TAU * j as f64 / n as f64).collect();
        let ys = phis.iter().map(|&p| f(p)).collect();
        Self {
            phis,
            ys,
            lipschitz: f64::INFINITY,
            provenance: vec![Provenance::Seed; n],
        }
    }

    pub fn horizontal(n: usize, y: f64) -> Self {
        Self::from_fn(n, |_| y)
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn h(&self) -> f64 {
        TAU / self.len() as f64
    }

    /// Periodic linear interpolation.
    pub fn eval(&self, phi: f64) -> f64 {
        let n = self.len();
        let t = phi.rem_euclid(TAU) / self.h();
        let j = (t.floor() as usize).min(n - 1);
        let f = t - j as f64;
        self.ys[j] * (1.0 - f) + self.ys[(j + 1) % n] * f
    }

    /// Point of the polyline at unreduced parameter `phi`.
    pub fn point(&self, phi: f64) -> (f64, f64) {
        (phi, self.eval(phi))
    }

    /// Index of the sample nearest to `phi`.
    pub fn nearest(&self, phi: f64) -> usize {
        ((phi.rem_euclid(TAU) / self.h()).round() as usize) % self.len()
    }

    /// Largest slope between neighbouring samples.
    pub fn max_slope(&self) -> f64 {
        let n = self.len();
        (0..n)
            .map(|j| (self.ys[(j + 1) % n] - self.ys[j]).abs() / self.h())
            .fold(0.0, f64::max)
    }

    pub fn sup_distance(&self, other: &EssentialCurve) -> f64 {
        self.ys
            .iter()
            .zip(&other.ys)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn min_y(&self) -> f64 {
        self.ys.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_y(&self) -> f64 {
        self.ys.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Rows `(phi, y, gen, map_index, preimage_phi)`; seeds have empty fields.
    pub fn rows(&self) -> Vec<(f64, f64, Option<usize>, Option<usize>, Option<f64>)> {
        self.phis
            .iter()
            .zip(&self.ys)
            .zip(&self.provenance)
            .map(|((&p, &y), pr)| match *pr {
                Provenance::Seed => (p, y, None, None, None),
                Provenance::Image {
                    generation,
                    map,
                    pre_phi,
                } => (p, y, Some(generation), Some(map), Some(pre_phi)),
            })
            .collect()
    }
}

/// Image of every sample under map `n`, as a closed polyline with lifted
/// angles. The image must wind once around the cylinder and stay in the band.
pub fn curve_image(ifs: &Ifs, n: usize, gamma: &EssentialCurve) -> Result<Vec<(f64, f64)>> {
    let img = raw_image(ifs, n, gamma)?;
    if let Some(&(p, y)) = img.iter().find(|(_, y)| *y < ifs.band.0 || *y > ifs.band.1) {
        return Err(Error::DomainExceeded { phi: p, action: y });
    }
    Ok(img)
}

pub(crate) fn raw_image(ifs: &Ifs, n: usize, gamma: &EssentialCurve) -> Result<Vec<(f64, f64)>> {
    let img = gamma
        .phis
        .par_iter()
        .zip(gamma.ys.par_iter())
        .map(|(&p, &y)| ifs.apply(n, p, y))
        .collect::<Vec<Result<(f64, f64)>>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut turn = 0.0;
    for k in 0..img.len() {
        let next = if k + 1 < img.len() {
            img[k + 1].0
        } else {
            img[0].0 + TAU
        };
        turn += next - img[k].0;
    }
    let winding = (turn / TAU).round() as i64;
    if winding != 1 {
        return Err(Error::InvalidInput(format!(
            "image of map {n} winds {winding} times"
        )));
    }
    Ok(img)
}

/// One candidate crossing of a vertical line with an image polyline.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Hit {
    pub y: f64,
    pub map: usize,
    pub pre_phi: f64,
}

/// Highest crossing of each grid line `phi_j` with the image of `gamma`
/// under map `n`, refined so that it is the exact image of a point of the
/// polyline `gamma`.
pub(crate) fn image_hits(
    ifs: &Ifs,
    n: usize,
    gamma: &EssentialCurve,
    img: &[(f64, f64)],
) -> Result<Vec<Option<Hit>>> {
    let len = gamma.len();
    let h = gamma.h();
    let mut best: Vec<Option<Hit>> = vec![None; len];
    for i in 0..len {
        let (p0, y0) = img[i];
        let (p1, y1) = if i + 1 < len {
            img[i + 1]
        } else {
            (img[0].0 + TAU, img[0].1)
        };
        let (lo, hi) = (p0.min(p1), p0.max(p1));
        let first = (lo / h).ceil() as i64;
        let last = (hi / h).floor() as i64;
        for g in first..=last {
            let target = g as f64 * h;
            let t = if p1 == p0 {
                0.0
            } else {
                (target - p0) / (p1 - p0)
            };
            if !(0.0..=1.0).contains(&t) {
                continue;
            }
            let y = y0 + t * (y1 - y0);
            let j = g.rem_euclid(len as i64) as usize;
            if best[j].is_none_or(|b| y > b.y) {
                best[j] = Some(Hit {
                    y,
                    map: n,
                    pre_phi: gamma.phis[i] + t * h,
                });
            }
        }
    }
    // make each winner an exact image by secant on the preimage parameter
    best.par_iter()
        .enumerate()
        .map(|(j, b)| match *b {
            Some(mut hit) => refine_hit(ifs, n, gamma, &mut hit, gamma.phis[j]).map(|_| Some(hit)),
            None => Ok(None),
        })
        .collect::<Vec<Result<Option<Hit>>>>()
        .into_iter()
        .collect()
}

fn refine_hit(
    ifs: &Ifs,
    n: usize,
    gamma: &EssentialCurve,
    hit: &mut Hit,
    target: f64,
) -> Result<()> {
    let h = gamma.h();
    let miss = |s: f64| -> Result<(f64, f64)> {
        let (p, y) = gamma.point(s);
        let (q, z) = ifs.apply(n, p, y)?;
        Ok((angle_diff(q, target), z))
    };
    let (mut a, mut fa) = (hit.pre_phi, miss(hit.pre_phi)?);
    if fa.0.abs() < 1e-15 {
        hit.y = fa.1;
        return Ok(());
    }
    let mut b = a + 1e-3 * h;
    let mut fb = miss(b)?;
    for _ in 0..8 {
        if fb.0 == fa.0 {
            break;
        }
        let c = b - fb.0 * (b - a) / (fb.0 - fa.0);
        if (c - hit.pre_phi).abs() > 2.0 * h {
            break;
        }
        (a, fa) = (b, fb);
        b = c;
        fb = miss(b)?;
        if fb.0.abs() < 1e-14 {
            break;
        }
    }
    if fb.0.abs() < fa.0.abs().min(1e-9) {
        hit.pre_phi = b;
        hit.y = fb.1;
    }
    Ok(())
}

/// Upper envelope of `gamma` and its images under `maps` at generation `gen`.
/// Samples keep `gamma`'s value and provenance where no image rises above it.
/// Returns the new curve and, per sample, the index of the winning map.
pub fn upper_envelope(
    ifs: &Ifs,
    maps: &[usize],
    gamma: &EssentialCurve,
    generation: usize,
) -> Result<(EssentialCurve, Vec<Option<usize>>)> {
    let mut out = gamma.clone();
    let mut winner = vec![None; gamma.len()];
    for &n in maps {
        let img = raw_image(ifs, n, gamma)?;
        let hits = image_hits(ifs, n, gamma, &img)?;
        for (j, hit) in hits.into_iter().enumerate() {
            if let Some(hit) = hit {
                // ignore roundoff-level gains so fixed curves stay fixed
                if hit.y > out.ys[j] + 4.0 * f64::EPSILON * out.ys[j].abs().max(1.0) {
                    out.ys[j] = hit.y;
                    out.provenance[j] = Provenance::Image {
                        generation,
                        map: hit.map,
                        pre_phi: hit.pre_phi,
                    };
                    winner[j] = Some(n);
                }
            }
        }
    }
    Ok((out, winner))
}

pub(crate) fn check_overflow(ifs: &Ifs, gamma: &EssentialCurve) -> Result<()> {
    if gamma.max_y() >= ifs.band.1 {
        let j = (0..gamma.len())
            .max_by(|&a, &b| gamma.ys[a].total_cmp(&gamma.ys[b]))
            .unwrap_or(0);
        return Err(Error::BandOverflow { phi: gamma.phis[j] });
    }
    Ok(())
}

/// Upper boundary of the component of `A \ (gamma u F_n(gamma))` adjacent
/// to the top of the band.
pub fn upper_boundary_op(
    ifs: &Ifs,
    n: usize,
    gamma: &EssentialCurve,
    generation: usize,
) -> Result<EssentialCurve> {
    let (out, _) = upper_envelope(ifs, &[n], gamma, generation)?;
    check_overflow(ifs, &out)?;
    Ok(out)
}
