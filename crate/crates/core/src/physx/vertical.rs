use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{check_dt, PhysicsError, GRAVITY, PHYSICS_DT};

/// A point mass constrained to the vertical axis, resting on the floor at z = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerticalBlock {
    pub mass: f64,
    pub z: f64,
    pub vz: f64,
}

impl VerticalBlock {
    pub fn at_rest(mass: f64) -> Self {
        Self { mass, z: 0.0, vz: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerticalWorld {
    pub blocks: Vec<VerticalBlock>,
    pub sim_time: f64,
    pub physics_dt: f64,
}

impl VerticalWorld {
    pub fn at_rest(masses: &[f64]) -> Self {
        Self {
            blocks: masses.iter().map(|&m| VerticalBlock::at_rest(m)).collect(),
            sim_time: 0.0,
            physics_dt: PHYSICS_DT,
        }
    }

    /// One semi-implicit Euler substep with upward forces (N) per block.
    ///
    /// `v += (F/m - g) dt; z = max(0, z + v dt)`, zeroing `v` whenever the
    /// floor clamps.
    pub fn step(&mut self, forces: &[f64], dt: f64) -> Result<(), PhysicsError> {
        check_dt(dt)?;
        if forces.len() != self.blocks.len() {
            return Err(PhysicsError::ForceCount { expected: self.blocks.len(), got: forces.len() });
        }
        for &f in forces {
            if !f.is_finite() {
                return Err(PhysicsError::NonFinite("applied force"));
            }
            if f < 0.0 {
                return Err(PhysicsError::NegativeForce(f));
            }
        }
        if self.blocks.iter().any(|b| !(b.mass.is_finite() && b.z.is_finite() && b.vz.is_finite())) {
            return Err(PhysicsError::NonFinite("vertical world state"));
        }
        for (b, &f) in self.blocks.iter_mut().zip(forces) {
            b.vz += (f / b.mass - GRAVITY) * dt;
            let z = b.z + b.vz * dt;
            if z <= 0.0 {
                b.z = 0.0;
                b.vz = 0.0;
            } else {
                b.z = z;
            }
        }
        self.sim_time += dt;
        Ok(())
    }

    pub fn heights(&self) -> Vec<f64> {
        self.blocks.iter().map(|b| b.z).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(mass: f64) -> VerticalWorld {
        VerticalWorld::at_rest(&[mass])
    }

    /// Closed-form apex above launch point for an upward speed `v` under `g`.
    fn ballistic_apex(v: f64) -> f64 {
        v * v / (2.0 * GRAVITY)
    }

    #[test]
    fn one_step_by_hand() {
        let mut w = single(1.0);
        w.step(&[20.0], 0.025).unwrap();
        assert!((w.blocks[0].vz - 0.25).abs() < 1e-15);
        assert!((w.blocks[0].z - 0.00625).abs() < 1e-15);
    }

    #[test]
    fn force_balancing_gravity_never_lifts() {
        let mut w = single(2.0);
        for _ in 0..40 {
            w.step(&[20.0], 0.025).unwrap();
            assert_eq!(w.blocks[0].z, 0.0);
            assert_eq!(w.blocks[0].vz, 0.0);
        }
    }

    #[test]
    fn unforced_block_stays_on_floor() {
        let mut w = VerticalWorld::at_rest(&[0.7, 1.1, 1.6, 1.9]);
        for _ in 0..40 {
            w.step(&[0.0; 4], 0.025).unwrap();
        }
        assert_eq!(w.heights(), alloc::vec![0.0; 4]);
    }

    fn simulated_apex(mass: f64) -> (f64, f64) {
        let mut w = single(mass);
        for _ in 0..4 {
            w.step(&[20.0], 0.025).unwrap();
        }
        let (z0, v0) = (w.blocks[0].z, w.blocks[0].vz);
        let mut apex = z0;
        for _ in 0..200 {
            w.step(&[0.0], 0.025).unwrap();
            apex = apex.max(w.blocks[0].z);
        }
        (apex, z0 + ballistic_apex(v0))
    }

    #[test]
    fn lighter_block_peaks_higher() {
        let (light, light_oracle) = simulated_apex(0.5);
        let (heavy, heavy_oracle) = simulated_apex(1.5);
        assert!(light_oracle > heavy_oracle);
        assert!(light > heavy);
        // discrete apex tracks the closed form to within one substep of travel
        assert!((light - light_oracle).abs() < 0.1);
        assert!((heavy - heavy_oracle).abs() < 0.05);
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut w = single(1.0);
        assert_eq!(w.step(&[-1.0], 0.025), Err(PhysicsError::NegativeForce(-1.0)));
        assert!(matches!(w.step(&[f64::NAN], 0.025), Err(PhysicsError::NonFinite(_))));
        assert!(matches!(w.step(&[1.0], 0.0), Err(PhysicsError::BadTimeStep(_))));
        assert!(matches!(w.step(&[1.0, 2.0], 0.025), Err(PhysicsError::ForceCount { .. })));
        w.blocks[0].vz = f64::INFINITY;
        assert!(matches!(w.step(&[0.0], 0.025), Err(PhysicsError::NonFinite(_))));
    }
}
