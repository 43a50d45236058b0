//! Numerics for drift along a normally hyperbolic cylinder of a 4D exact
//! symplectic map: invariant cylinders, scattering maps, transport on the
//! cylinder and shadowing orbits.

pub mod error;
pub mod homoclinic;
pub mod interp;
pub mod maps;
pub mod nhim;
pub mod par;
pub mod shadowing;
pub mod transport;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub use maps::{MapDef, MapFamily, MapKind, PhasePoint};
