//! Binormal curvature flow over polygonal divergence-free vector measures.

pub mod field;
pub mod hom;
pub mod measure;
pub mod strong;
pub mod system;

pub use field::{bn_k, bn_k_combined, SolenoidalField};
pub use hom::{hom_convexity_probe, hom_convexity_threshold};
pub use measure::{binormal_velocity, bn_energy, constant_density_check, CurveMeasure};
pub use strong::{
    gronwall_constant, relative_energy, tubular_field, weak_strong_monitor, SmoothCurve,
    WeakStrongReport,
};
pub use system::{bn_operator, weakform_residual, BnSystem};
