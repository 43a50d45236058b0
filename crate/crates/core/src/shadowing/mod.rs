//! True orbits of the 4D map that follow a code of cylinder blocks and
//! homoclinic excursions, with the deviation bounds they must satisfy.
//!
//! A channel orbit is computed as one multiple-shooting problem: every step
//! `P_{t+1} = Phi(P_t)` is an equation, `P_0` sits on the strong unstable
//! fiber of the shadow's first point and the last point on `W^s(A)`. Blocks
//! of a hundred iterates near a saddle with multiplier 5.8 cannot be
//! reached by iterating a single initial condition forward.

mod banded;
mod channel;
mod code;
mod verify;

use crate::error::Result;
use crate::nhim::CylinderPoint;

pub use channel::{shoot_channel_orbit, Channel, ChannelOrbit};
pub use code::{
    find_return_time, make_proper_code, Code, PaddingOptions, ProperParams, RawCode, ShadowOrbit,
};
pub use verify::{verify_shadowing, ShadowReport};

/// The cylinder dynamics a shadow orbit lives in: `F_0` and the modified
/// scattering maps `Fbar_n = F_0^{m+} o F_n o F_0^{m-}`.
pub trait ShadowDynamics {
    /// `F_0^n`, negative `n` for the inverse.
    fn f0(&self, v: &CylinderPoint, n: i64) -> CylinderPoint;
    fn fbar(&self, n: usize, v: &CylinderPoint) -> Result<CylinderPoint>;
    fn fbar_inverse(&self, n: usize, v: &CylinderPoint) -> Result<CylinderPoint>;
    /// `(m_-, m_+)` of map `n`.
    fn margins(&self, n: usize) -> (usize, usize);
}
