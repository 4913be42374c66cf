//! Energy-variational solutions of evolutionary PDEs: minimizing-movements
//! solver, per-step saddle certificates, inequality verifier, and selection.
//!
//! Shipped systems: a 1-D Euler-Korteweg fluid on an interval with Neumann
//! boundary, and binormal curvature flow over weighted closed polygons.
//!
//! Everything is generic over the scalar type through [`Scalar`]; the
//! concrete `f64` aliases at the crate root are the intended entry points.

pub mod bn;
pub mod defect;
pub mod ek;
pub mod framework;
pub mod linalg;
pub mod saddle;
pub mod scalar;
pub mod stepper;
pub mod verifier;

pub use scalar::Scalar;

/// Concrete `f64` aliases: the intended entry points for ordinary use.
pub type Trajectory64 = framework::Trajectory<f64>;
pub type TestPath64 = framework::TestPath<f64>;
pub type SolverConfig64 = saddle::SolverConfig<f64>;
pub type EkSystem64 = ek::EkSystem<f64>;
pub type BnSystem64 = bn::BnSystem<f64>;
pub type CurveMeasure64 = bn::CurveMeasure<f64>;
pub type SmoothCurve64 = bn::SmoothCurve<f64>;
pub type ResidualReport64 = verifier::ResidualReport<f64>;
pub type DefectCurve64 = defect::DefectCurve<f64>;
