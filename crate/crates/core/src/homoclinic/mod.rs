//! Homoclinic points of the hyperbolic factor, homoclinic cylinders and
//! scattering maps.

pub mod checks;
pub mod cylinder;
mod saddle;
pub mod secondary;
pub mod separatrix;

pub use checks::{check_simplicity, symplectic_orthogonality_check, SimplicityReport};
pub use cylinder::{
    build_homoclinic_cylinder, HomoclinicCylinder, HomoclinicSolver, ScatteringMapSample, TwoSided,
};
pub use saddle::{find_saddle, SaddleData};
pub use secondary::{generate_secondary, SecondaryCylinder};
pub use separatrix::{find_homoclinic_orbits, find_primary_homoclinic, HomoclinicPoint};
