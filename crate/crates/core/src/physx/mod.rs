//! Deterministic toy physics.
//!
//! Two worlds share the same integrator conventions (semi-implicit Euler,
//! `g = 10 m/s²`, 25 ms substeps):
//!
//! * [`VerticalWorld`]: point masses that only move along z, resting on a floor.
//! * [`TowerWorld`]: translation-only rigid bodies built from unit blocks, with a
//!   ground plane, sphere-approximated contacts and an optional kinematic fist.

mod tower;
mod vec3;
mod vertical;

pub use tower::{Body3D, Fist, Member, TowerWorld, CONTACT_MAX_ITERS};
pub use vec3::Vec3;
pub use vertical::{VerticalBlock, VerticalWorld};

/// Gravitational acceleration magnitude, m/s².
pub const GRAVITY: f64 = 10.0;
/// Physics substep, seconds.
pub const PHYSICS_DT: f64 = 0.025;
/// Edge length of a primitive block, meters.
pub const BLOCK_EDGE: f64 = 1.0;
/// Mass of a primitive tower block, kg.
pub const BLOCK_MASS: f64 = 1.0;
/// Linear velocity damping for tower bodies, 1/s.
pub const DAMPING: f64 = 0.5;
/// Fist sphere radius, meters.
pub const FIST_RADIUS: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PhysicsError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("negative applied force {0} N")]
    NegativeForce(f64),
    #[error("time step must be positive, got {0}")]
    BadTimeStep(f64),
    #[error("expected {expected} forces, got {got}")]
    ForceCount { expected: usize, got: usize },
    #[error("unknown body id {0}")]
    UnknownBody(usize),
    #[error("fist velocity must be horizontal, got vz = {0}")]
    FistVerticalVelocity(f64),
    #[error("world has no fist")]
    NoFist,
}

pub(crate) fn check_dt(dt: f64) -> Result<(), PhysicsError> {
    if !dt.is_finite() {
        return Err(PhysicsError::NonFinite("time step"));
    }
    if dt <= 0.0 {
        return Err(PhysicsError::BadTimeStep(dt));
    }
    Ok(())
}
