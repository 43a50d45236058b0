//! Exact symplectic maps on T x R x T x R, their derivatives and the
//! perturbation composer.
//!
//! Coordinates are ordered `(phi, I, x, y)` everywhere, including vectors and
//! Jacobians.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::*;

/// Reduce an angle into `[0, 2pi)`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    // rem_euclid can round up to TAU for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Signed angular difference `a - b` in `(-pi, pi]`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    if d > PI {
        d - TAU
    } else {
        d
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub phi: f64,
    #[serde(rename = "I")]
    pub action: f64,
    pub x: f64,
    pub y: f64,
}

impl PhasePoint {
    /// Build a point with both angles reduced.
    pub fn new(phi: f64, action: f64, x: f64, y: f64) -> Self {
        Self::lifted(phi, action, x, y).reduced()
    }

    /// Build a point without reducing the angles.
    pub const fn lifted(phi: f64, action: f64, x: f64, y: f64) -> Self {
        Self { phi, action, x, y }
    }

    pub fn reduced(self) -> Self {
        Self {
            phi: wrap_angle(self.phi),
            x: wrap_angle(self.x),
            ..self
        }
    }

    pub fn to_vector(self) -> Vector4<f64> {
        Vector4::new(self.phi, self.action, self.x, self.y)
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Self::lifted(v[0], v[1], v[2], v[3])
    }

    /// Componentwise difference with angles wrapped into `(-pi, pi]`.
    pub fn wrapped_diff(&self, other: &PhasePoint) -> Vector4<f64> {
        Vector4::new(
            angle_diff(self.phi, other.phi),
            self.action - other.action,
            angle_diff(self.x, other.x),
            self.y - other.y,
        )
    }

    /// Max-norm distance with angles compared mod 2pi.
    pub fn distance(&self, other: &PhasePoint) -> f64 {
        self.wrapped_diff(other).amax()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapKind {
    ProductTwistStandard,
    DoubleStandard,
    PerturbedComposite,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    Sin,
    Cos,
}

/// One term `coeff * basis(m phi + n x)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub m: i32,
    pub n: i32,
    pub coeff: f64,
    pub basis: Basis,
}

impl TrigTerm {
    pub fn sin(m: i32, n: i32, coeff: f64) -> Self {
        Self {
            m,
            n,
            coeff,
            basis: Basis::Sin,
        }
    }

    pub fn cos(m: i32, n: i32, coeff: f64) -> Self {
        Self {
            m,
            n,
            coeff,
            basis: Basis::Cos,
        }
    }
}

/// Values of the basis function and its first two derivatives in the
/// argument, scaled by the coefficient.
fn term_jet(t: &TrigTerm, phi: f64, x: f64) -> (f64, f64, f64) {
    let arg = f64::from(t.m) * phi + f64::from(t.n) * x;
    let (s, c) = arg.sin_cos();
    match t.basis {
        Basis::Sin => (t.coeff * s, t.coeff * c, -t.coeff * s),
        Basis::Cos => (t.coeff * c, -t.coeff * s, -t.coeff * c),
    }
}

/// Time-epsilon flow of the Hamiltonian `f(phi, x)`.
///
/// `phi` and `x` are frozen, `I -= eps df/dphi`, `y -= eps df/dx`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationStep {
    pub epsilon: f64,
    pub terms: Vec<TrigTerm>,
}

impl PerturbationStep {
    pub fn new(epsilon: f64, terms: Vec<TrigTerm>) -> Self {
        Self { epsilon, terms }
    }

    /// Gradient `(df/dphi, df/dx)`.
    pub fn gradient(&self, phi: f64, x: f64) -> (f64, f64) {
        self.terms.iter().fold((0.0, 0.0), |(gp, gx), t| {
            let (_, d1, _) = term_jet(t, phi, x);
            (gp + f64::from(t.m) * d1, gx + f64::from(t.n) * d1)
        })
    }

    /// Hessian entries `(f_pp, f_px, f_xx)`.
    pub fn hessian(&self, phi: f64, x: f64) -> (f64, f64, f64) {
        self.terms.iter().fold((0.0, 0.0, 0.0), |(a, b, c), t| {
            let (_, _, d2) = term_jet(t, phi, x);
            let (m, n) = (f64::from(t.m), f64::from(t.n));
            (a + m * m * d2, b + m * n * d2, c + n * n * d2)
        })
    }

    /// Upper bound on `max |grad f|` from the coefficients.
    pub fn gradient_bound(&self) -> f64 {
        let (bp, bx) = self.terms.iter().fold((0.0, 0.0), |(bp, bx), t| {
            (
                bp + (f64::from(t.m) * t.coeff).abs(),
                bx + (f64::from(t.n) * t.coeff).abs(),
            )
        });
        f64::max(bp, bx)
    }

    fn forward(&self, p: PhasePoint) -> PhasePoint {
        let (gp, gx) = self.gradient(p.phi, p.x);
        PhasePoint {
            action: p.action - self.epsilon * gp,
            y: p.y - self.epsilon * gx,
            ..p
        }
    }

    fn backward(&self, p: PhasePoint) -> PhasePoint {
        let (gp, gx) = self.gradient(p.phi, p.x);
        PhasePoint {
            action: p.action + self.epsilon * gp,
            y: p.y + self.epsilon * gx,
            ..p
        }
    }

    fn jacobian(&self, p: &PhasePoint) -> Matrix4<f64> {
        let (fpp, fpx, fxx) = self.hessian(p.phi, p.x);
        let e = self.epsilon;
        let mut j = Matrix4::identity();
        j[(1, 0)] = -e * fpp;
        j[(1, 2)] = -e * fpx;
        j[(3, 0)] = -e * fpx;
        j[(3, 2)] = -e * fxx;
        j
    }
}

/// Deliberate defects used as negative fixtures for the checkers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Defect {
    /// `y_bar = (1 + amount) y + k sin x`: breaks area preservation.
    YScale { amount: f64 },
    /// `I_bar = I + amount`: symplectic but not exact.
    ActionShift { amount: f64 },
}

fn default_k() -> f64 {
    4.0
}

fn default_omega() -> Vec<f64> {
    vec![0.0, 1.0]
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapDef {
    pub kind: MapKind,
    /// Underlying kind when `kind` is `PerturbedComposite`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<MapKind>,
    #[serde(default = "default_k")]
    pub k: f64,
    #[serde(default)]
    pub k1: f64,
    #[serde(default = "default_k")]
    pub k2: f64,
    /// Ascending coefficients of omega(I).
    #[serde(default = "default_omega")]
    pub omega_coeffs: Vec<f64>,
    /// Applied after the base map, last entry first.
    #[serde(default)]
    pub perturbations: Vec<PerturbationStep>,
    #[serde(default = "default_true")]
    pub has_analytic_jacobian: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub defect: Option<Defect>,
}

impl MapDef {
    /// Twist map times standard map, `omega(I) = I`.
    pub fn product(k: f64) -> Self {
        Self {
            kind: MapKind::ProductTwistStandard,
            base: None,
            k,
            k1: 0.0,
            k2: k,
            omega_coeffs: default_omega(),
            perturbations: Vec::new(),
            has_analytic_jacobian: true,
            defect: None,
        }
    }

    pub fn double_standard(k1: f64, k2: f64) -> Self {
        Self {
            kind: MapKind::DoubleStandard,
            k1,
            k2,
            k: k2,
            ..Self::product(k2)
        }
    }

    /// Compose `self` with a perturbation step applied after it.
    pub fn with_step(mut self, step: PerturbationStep) -> Self {
        if self.kind != MapKind::PerturbedComposite {
            self.base = Some(self.kind);
            self.kind = MapKind::PerturbedComposite;
        }
        self.perturbations.insert(0, step);
        self
    }

    pub fn with_defect(mut self, defect: Defect) -> Self {
        self.defect = Some(defect);
        self
    }

    pub fn base_kind(&self) -> MapKind {
        match self.kind {
            MapKind::PerturbedComposite => self.base.unwrap_or(MapKind::ProductTwistStandard),
            kind => kind,
        }
    }

    /// Strength of the hyperbolic standard-map factor.
    pub fn saddle_k(&self) -> f64 {
        match self.base_kind() {
            MapKind::DoubleStandard => self.k2,
            _ => self.k,
        }
    }

    pub fn is_perturbed(&self) -> bool {
        self.perturbations.iter().any(|s| s.epsilon != 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.k, self.k1, self.k2]
            .iter()
            .chain(self.omega_coeffs.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidInput("non-finite map parameter".into()));
        }
        if self.base == Some(MapKind::PerturbedComposite) {
            return Err(Error::InvalidInput("nested perturbed_composite".into()));
        }
        if self.saddle_k() <= 0.0 {
            return Err(Error::InvalidInput(
                "standard-map strength must be > 0".into(),
            ));
        }
        Ok(())
    }

    pub fn omega(&self, action: f64) -> f64 {
        self.omega_coeffs
            .iter()
            .rev()
            .fold(0.0, |acc, c| acc * action + c)
    }

    pub fn omega_prime(&self, action: f64) -> f64 {
        self.omega_coeffs
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (i, c)| acc * action + i as f64 * c)
    }

    fn y_scale(&self) -> f64 {
        match self.defect {
            Some(Defect::YScale { amount }) => 1.0 + amount,
            _ => 1.0,
        }
    }

    fn action_shift(&self) -> f64 {
        match self.defect {
            Some(Defect::ActionShift { amount }) => amount,
            _ => 0.0,
        }
    }

    fn base_forward(&self, p: PhasePoint) -> PhasePoint {
        let kx = self.saddle_k();
        let y = self.y_scale() * p.y + kx * p.x.sin();
        let x = p.x + y;
        let (phi, action) = match self.base_kind() {
            MapKind::DoubleStandard => {
                let action = p.action + self.k1 * p.phi.sin();
                (p.phi + action, action)
            }
            _ => (p.phi + self.omega(p.action), p.action),
        };
        PhasePoint::lifted(phi, action + self.action_shift(), x, y)
    }

    fn base_backward(&self, p: PhasePoint) -> PhasePoint {
        let kx = self.saddle_k();
        let action_img = p.action - self.action_shift();
        let x = p.x - p.y;
        let y = (p.y - kx * x.sin()) / self.y_scale();
        let (phi, action) = match self.base_kind() {
            MapKind::DoubleStandard => {
                let phi = p.phi - action_img;
                (phi, action_img - self.k1 * phi.sin())
            }
            // omega is only invertible in general through I itself, which
            // the twist map leaves unchanged
            _ => (p.phi - self.omega(action_img), action_img),
        };
        PhasePoint::lifted(phi, action, x, y)
    }

    fn base_jacobian(&self, p: &PhasePoint) -> Matrix4<f64> {
        let kc = self.saddle_k() * p.x.cos();
        let s = self.y_scale();
        let mut j = Matrix4::zeros();
        match self.base_kind() {
            MapKind::DoubleStandard => {
                let c = self.k1 * p.phi.cos();
                j[(0, 0)] = 1.0 + c;
                j[(0, 1)] = 1.0;
                j[(1, 0)] = c;
                j[(1, 1)] = 1.0;
            }
            _ => {
                j[(0, 0)] = 1.0;
                j[(0, 1)] = self.omega_prime(p.action);
                j[(1, 1)] = 1.0;
            }
        }
        j[(2, 2)] = 1.0 + kc;
        j[(2, 3)] = s;
        j[(3, 2)] = kc;
        j[(3, 3)] = s;
        j
    }

    /// Image without angle reduction.
    pub fn apply_lifted(&self, p: &PhasePoint) -> PhasePoint {
        self.perturbations
            .iter()
            .rev()
            .fold(self.base_forward(*p), |q, s| s.forward(q))
    }

    /// Preimage without angle reduction.
    pub fn inverse_lifted(&self, p: &PhasePoint) -> PhasePoint {
        let q = self.perturbations.iter().fold(*p, |q, s| s.backward(q));
        self.base_backward(q)
    }

    pub fn apply(&self, p: &PhasePoint) -> PhasePoint {
        self.apply_lifted(p).reduced()
    }

    pub fn inverse(&self, p: &PhasePoint) -> PhasePoint {
        self.inverse_lifted(p).reduced()
    }

    /// `n`-fold iterate; negative `n` iterates the inverse.
    pub fn iterate(&self, p: &PhasePoint, n: i64) -> PhasePoint {
        let mut q = *p;
        for _ in 0..n.unsigned_abs() {
            q = if n > 0 {
                self.apply(&q)
            } else {
                self.inverse(&q)
            };
        }
        q
    }

    /// `n`-fold iterate without angle reduction.
    pub fn iterate_lifted(&self, p: &PhasePoint, n: i64) -> PhasePoint {
        let mut q = *p;
        for _ in 0..n.unsigned_abs() {
            q = if n > 0 {
                self.apply_lifted(&q)
            } else {
                self.inverse_lifted(&q)
            };
        }
        q
    }

    /// Derivative at `p`: analytic when flagged, finite differences otherwise.
    pub fn jacobian(&self, p: &PhasePoint) -> Matrix4<f64> {
        if self.has_analytic_jacobian {
            self.jacobian_analytic(p)
        } else {
            self.jacobian_fd(p)
        }
    }

    pub fn jacobian_analytic(&self, p: &PhasePoint) -> Matrix4<f64> {
        let mut q = self.base_forward(*p);
        let mut j = self.base_jacobian(p);
        for s in self.perturbations.iter().rev() {
            j = s.jacobian(&q) * j;
            q = s.forward(q);
        }
        j
    }

    /// Central differences with relative step `1e-6`.
    pub fn jacobian_fd(&self, p: &PhasePoint) -> Matrix4<f64> {
        let base = p.to_vector();
        let mut j = Matrix4::zeros();
        for c in 0..4 {
            let h = 1e-6 * base[c].abs().max(1.0);
            let mut plus = base;
            let mut minus = base;
            plus[c] += h;
            minus[c] -= h;
            let fp = self
                .apply_lifted(&PhasePoint::from_vector(&plus))
                .to_vector();
            let fm = self
                .apply_lifted(&PhasePoint::from_vector(&minus))
                .to_vector();
            j.set_column(c, &((fp - fm) / (2.0 * h)));
        }
        j
    }

    /// Derivative of the inverse map at `p`.
    pub fn inverse_jacobian(&self, p: &PhasePoint) -> Matrix4<f64> {
        let pre = self.inverse_lifted(p);
        self.jacobian(&pre)
            .try_inverse()
            .unwrap_or_else(Matrix4::identity)
    }
}

/// The standard symplectic matrix pairing `(I, phi)` and `(y, x)`.
pub fn omega_matrix() -> Matrix4<f64> {
    #[rustfmt::skip]
    let m = Matrix4::new(
        0.0, -1.0, 0.0,  0.0,
        1.0,  0.0, 0.0,  0.0,
        0.0,  0.0, 0.0, -1.0,
        0.0,  0.0, 1.0,  0.0,
    );
    m
}

/// `Omega(u, v) = u^T Omega v`.
pub fn omega_pairing(u: &Vector4<f64>, v: &Vector4<f64>) -> f64 {
    (u.transpose() * omega_matrix() * v)[(0, 0)]
}

/// Outcome of a numerical invariant check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    pub max_residual: f64,
    pub worst_point: Option<PhasePoint>,
    pub detail: String,
}

impl CheckReport {
    pub fn new(name: &str, passed: bool, max_residual: f64) -> Self {
        Self {
            name: name.to_string(),
            passed,
            max_residual,
            worst_point: None,
            detail: String::new(),
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }
}

/// Verify `J^T Omega J = Omega` at every sample.
pub fn check_symplectic(map: &MapDef, points: &[PhasePoint], tol: f64) -> Result<CheckReport> {
    if tol <= 0.0 || !tol.is_finite() {
        return Err(Error::InvalidInput("tol must be positive".into()));
    }
    let om = omega_matrix();
    let residuals: Vec<f64> = points
        .par_iter()
        .map(|p| {
            let j = map.jacobian(p);
            (j.transpose() * om * j - om).amax()
        })
        .collect();
    let (worst, max) =
        residuals
            .iter()
            .copied()
            .enumerate()
            .fold((None, 0.0), |(wi, wm), (i, r)| {
                if r > wm || wi.is_none() {
                    (Some(i), r)
                } else {
                    (wi, wm)
                }
            });
    let mut report = CheckReport::new("symplectic", max <= tol, max)
        .with_detail(format!("{} points, tol {tol:e}", points.len()));
    report.worst_point = worst.map(|i| points[i]);
    Ok(report)
}

/// A closed loop `t in [0, 1) -> (point, d point / dt)` in lifted coordinates.
///
/// Over one period `phi` and `x` may advance by integer multiples of 2pi.
#[derive(Clone)]
pub struct PhaseLoop {
    f: Arc<dyn Fn(f64) -> (PhasePoint, Vector4<f64>) + Send + Sync>,
}

impl std::fmt::Debug for PhaseLoop {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("PhaseLoop")
    }
}

impl PhaseLoop {
    pub fn from_fn(f: impl Fn(f64) -> (PhasePoint, Vector4<f64>) + Send + Sync + 'static) -> Self {
        Self { f: Arc::new(f) }
    }

    /// `phi = 2 pi t`, everything else constant.
    pub fn horizontal(action: f64, x: f64, y: f64) -> Self {
        Self::from_fn(move |t| {
            (
                PhasePoint::lifted(TAU * t, action, x, y),
                Vector4::new(TAU, 0.0, 0.0, 0.0),
            )
        })
    }

    /// `phi = 2 pi t`, `x = 2 pi t`, with Fourier wobbles in the actions.
    pub fn wavy(action: f64, amp_i: f64, y: f64, amp_y: f64, winds_x: bool) -> Self {
        let wx = if winds_x { TAU } else { 0.0 };
        Self::from_fn(move |t| {
            let a = TAU * t;
            let x = if winds_x { a } else { 0.3 * a.sin() };
            let dx = if winds_x { wx } else { 0.3 * TAU * a.cos() };
            (
                PhasePoint::lifted(a, action + amp_i * (2.0 * a).sin(), x, y + amp_y * a.cos()),
                Vector4::new(
                    TAU,
                    2.0 * TAU * amp_i * (2.0 * a).cos(),
                    dx,
                    -TAU * amp_y * a.sin(),
                ),
            )
        })
    }

    pub fn eval(&self, t: f64) -> (PhasePoint, Vector4<f64>) {
        (self.f)(t)
    }
}

fn loop_action(samples: &[(PhasePoint, Vector4<f64>)]) -> f64 {
    let s: f64 = samples
        .iter()
        .map(|(p, d)| p.action * d[0] + p.y * d[2])
        .sum();
    s / samples.len() as f64
}

/// Action integral of the loop and of its image at `n` trapezoid nodes.
pub fn loop_actions(map: &MapDef, lp: &PhaseLoop, n: usize) -> (f64, f64) {
    let samples: Vec<(PhasePoint, Vector4<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| lp.eval(i as f64 / n as f64))
        .collect();
    let images: Vec<(PhasePoint, Vector4<f64>)> = samples
        .par_iter()
        .map(|(p, d)| (map.apply_lifted(p), map.jacobian(p) * d))
        .collect();
    (loop_action(&samples), loop_action(&images))
}

/// Compare the action integral of `lp` and of its image.
pub fn check_exact(
    map: &MapDef,
    lp: &PhaseLoop,
    quadrature_n: usize,
    tol: f64,
) -> Result<CheckReport> {
    if quadrature_n < 64 {
        return Err(Error::InvalidInput("quadrature_n must be >= 64".into()));
    }
    if tol <= 0.0 || !tol.is_finite() {
        return Err(Error::InvalidInput("tol must be positive".into()));
    }
    let (a_n, b_n) = loop_actions(map, lp, quadrature_n);
    let (a_2n, b_2n) = loop_actions(map, lp, 2 * quadrature_n);
    let err = (a_2n - a_n).abs().max((b_2n - b_n).abs());
    let diff = (b_2n - a_2n).abs();
    let converged = err <= tol;
    let passed = converged && diff < tol + err;
    let detail = if converged {
        format!("loop {a_2n:.12}, image {b_2n:.12}, quadrature error {err:e}")
    } else {
        format!("quadrature not converged: doubling changed the integral by {err:e}")
    };
    Ok(CheckReport::new("exact", passed, diff).with_detail(detail))
}

/// One- or two-parameter family `X_1 o X_2 o base`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapFamily {
    pub base: MapDef,
    /// Generators; each `epsilon` is a scale multiplying its parameter.
    pub steps: Vec<PerturbationStep>,
}

pub fn make_family(base: MapDef, steps: Vec<PerturbationStep>) -> Result<MapFamily> {
    if steps.is_empty() || steps.len() > 2 {
        return Err(Error::InvalidInput(format!(
            "a family takes 1 or 2 steps, got {}",
            steps.len()
        )));
    }
    base.validate()?;
    Ok(MapFamily { base, steps })
}

impl MapFamily {
    /// Evaluate at `mu`. Steps with zero parameter are omitted, so `mu = 0`
    /// reproduces the base map bit for bit.
    pub fn at(&self, mu: &[f64]) -> MapDef {
        let mut map = self.base.clone();
        for (step, &m) in self.steps.iter().zip(mu).rev() {
            let eps = m * step.epsilon;
            if eps != 0.0 {
                map = map.with_step(PerturbationStep::new(eps, step.terms.clone()));
            }
        }
        if map.kind != MapKind::PerturbedComposite {
            map.base = Some(map.kind);
            map.kind = MapKind::PerturbedComposite;
        }
        map
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sin_phi_minus_x(eps: f64) -> PerturbationStep {
        PerturbationStep::new(eps, vec![TrigTerm::sin(1, -1, 1.0)])
    }

    #[test]
    fn wrap_is_idempotent() {
        for a in [-7.0, -1e-300, 0.0, 3.0, TAU, 100.0] {
            let w = wrap_angle(a);
            assert!((0.0..TAU).contains(&w));
            assert_eq!(wrap_angle(w), w);
        }
    }

    #[test]
    fn product_examples() {
        let m = MapDef::product(4.0);
        let p = m.apply(&PhasePoint::new(0.0, 0.0, 0.0, 0.0));
        assert_eq!(p, PhasePoint::new(0.0, 0.0, 0.0, 0.0));
        let q = m.apply(&PhasePoint::new(0.0, 0.3, PI, 0.0));
        assert_abs_diff_eq!(q.phi, 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(q.action, 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(q.x, PI, epsilon = 1e-14);
        assert_abs_diff_eq!(q.y, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn double_standard_example() {
        let m = MapDef::double_standard(0.5, 4.0);
        let q = m.apply(&PhasePoint::new(PI / 2.0, 0.0, 0.0, 0.0));
        assert_abs_diff_eq!(q.phi, PI / 2.0 + 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(q.action, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn saddle_block() {
        let j = MapDef::product(4.0).jacobian(&PhasePoint::new(0.0, 0.0, 0.0, 0.0));
        assert_eq!(j[(2, 2)], 5.0);
        assert_eq!(j[(2, 3)], 1.0);
        assert_eq!(j[(3, 2)], 4.0);
        assert_eq!(j[(3, 3)], 1.0);
    }

    #[test]
    fn step_derivative_by_hand() {
        // I_bar = I - eps cos(phi - x) after the base map, so for the bare
        // step dI_bar/dphi = eps sin(phi - x).
        let s = sin_phi_minus_x(0.01);
        for &(phi, x) in &[(0.1, 0.7), (2.0, 5.5), (4.0, 1.0)] {
            let j = s.jacobian(&PhasePoint::new(phi, 0.2, x, 0.0));
            assert_abs_diff_eq!(j[(1, 0)], 0.01 * (phi - x).sin(), epsilon = 1e-15);
        }
    }

    #[test]
    fn fd_matches_analytic() {
        let m = MapDef::double_standard(0.3, 4.0)
            .with_step(sin_phi_minus_x(0.01))
            .with_step(PerturbationStep::new(0.02, vec![TrigTerm::cos(1, 1, 1.0)]));
        for &(a, b, c, d) in &[(0.1, 0.2, 0.3, 0.4), (5.0, -1.0, 2.0, 0.7)] {
            let p = PhasePoint::new(a, b, c, d);
            let diff = (m.jacobian_analytic(&p) - m.jacobian_fd(&p)).amax();
            assert!(diff < 1e-6, "{diff}");
        }
    }

    #[test]
    fn broken_fixture_fails() {
        let m = MapDef::product(4.0).with_defect(Defect::YScale { amount: 0.1 });
        let pts = [PhasePoint::new(0.3, 0.1, 1.0, 0.2)];
        let r = check_symplectic(&m, &pts, 1e-9).unwrap();
        assert!(!r.passed);
        assert_abs_diff_eq!(r.max_residual, 0.1, epsilon = 1e-12);
    }

    #[test]
    fn horizontal_loop_exact() {
        let m = MapDef::product(4.0);
        let r = check_exact(&m, &PhaseLoop::horizontal(0.2, 0.0, 0.0), 128, 1e-12).unwrap();
        assert!(r.passed);
        let (a, b) = loop_actions(&m, &PhaseLoop::horizontal(0.2, 0.0, 0.0), 128);
        assert_abs_diff_eq!(a, 0.4 * PI, epsilon = 1e-14);
        assert_abs_diff_eq!(b, 0.4 * PI, epsilon = 1e-14);
    }

    #[test]
    fn action_shift_not_exact() {
        let m = MapDef::product(4.0).with_defect(Defect::ActionShift { amount: 0.01 });
        let lp = PhaseLoop::horizontal(0.2, 0.0, 0.0);
        let r = check_exact(&m, &lp, 128, 1e-8).unwrap();
        assert!(!r.passed);
        assert_abs_diff_eq!(r.max_residual, 0.02 * PI, epsilon = 1e-12);
    }

    #[test]
    fn family_rejects_three_steps() {
        let s = sin_phi_minus_x(1.0);
        assert!(make_family(MapDef::product(4.0), vec![s.clone(), s.clone(), s]).is_err());
        assert!(make_family(MapDef::product(4.0), vec![]).is_err());
    }

    #[test]
    fn family_order() {
        let f1 = sin_phi_minus_x(1.0);
        let f2 = PerturbationStep::new(1.0, vec![TrigTerm::cos(1, 1, 1.0)]);
        let fam = make_family(MapDef::product(4.0), vec![f1.clone(), f2.clone()]).unwrap();
        let m = fam.at(&[1e-2, 2e-2]);
        let p = PhasePoint::new(0.4, 0.1, 2.0, -0.3);
        let mut scaled2 = f2.clone();
        scaled2.epsilon = 2e-2;
        let mut scaled1 = f1.clone();
        scaled1.epsilon = 1e-2;
        let expected = scaled1.forward(scaled2.forward(MapDef::product(4.0).apply_lifted(&p)));
        assert_eq!(m.apply_lifted(&p), expected);
    }

    #[test]
    fn config_round_trip() {
        let m = MapDef::product(4.0).with_step(sin_phi_minus_x(1e-3));
        let text = toml::to_string(&m).unwrap();
        let back: MapDef = toml::from_str(&text).unwrap();
        assert_eq!(m, back);
        let parsed: MapDef = toml::from_str(
            r#"
            kind = "product_twist_standard"
            k = 4.0
            omega_coeffs = [0.0, 1.0]
            [[perturbations]]
            epsilon = 0.001
            terms = [{ m = 1, n = -1, coeff = 1.0, basis = "sin" }]
            "#,
        )
        .unwrap();
        assert_eq!(parsed.perturbations.len(), 1);
    }
}
