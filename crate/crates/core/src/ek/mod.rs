//! 1-D Euler-Korteweg system on an interval with Neumann boundary.

pub mod grid;
pub mod obstacle;
pub mod probe;
pub mod state;
pub mod system;
pub mod testfn;

pub use grid::{poincare_constant, Grid1D};
pub use obstacle::{dual_subdifferential, energy_balance_check, solve_obstacle, ObstacleSolution};
pub use probe::{ek_convexity_probe, ConvexityProbe, ConvexityWitness, ProbeWeight};
pub use state::{ek_energy, ek_eta, ek_operator, mass, EKState};
pub use system::{EkStepProblem, EkSystem};
pub use testfn::{ek_k, ek_ktilde, EKTestFunction, EkTestFamily};
