//! Homogeneous fermionic Uehling–Uhlenbeck equation on a discrete velocity grid.

mod field;
pub(crate) mod operator;
mod quadrature;
mod solver;

pub use field::{
    fermi_dirac, fermi_dirac_normalized, fermi_dirac_value, DensityField, Moments, VelocityGrid,
};
pub use operator::{collision_operator, conservative_projection, CollisionContext};
pub use quadrature::{SphereQuadrature, SPHERE_AREA};
pub use solver::{solve, step, Solution, SolverOptions, StepDiagnostics, StepReport};
