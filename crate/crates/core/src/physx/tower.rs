use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};

use super::{check_dt, PhysicsError, Vec3, BLOCK_EDGE, BLOCK_MASS, DAMPING, GRAVITY, PHYSICS_DT};

/// Upper bound on Gauss-Seidel sweeps in [`TowerWorld::resolve_contacts`].
pub const CONTACT_MAX_ITERS: usize = 400;
const CONTACT_TOLERANCE: f64 = 1e-13;

/// A primitive block bolted into a body at a fixed offset from the body's center of mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub block: usize,
    pub offset: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Body3D {
    pub id: usize,
    pub position: Vec3,
    pub velocity: Vec3,
    pub mass: f64,
    pub members: Vec<Member>,
}

impl Body3D {
    fn inv_mass(&self) -> f64 {
        1.0 / self.mass
    }
}

/// Kinematic sphere; moves at exactly its commanded velocity and ignores contacts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fist {
    pub position: Vec3,
    pub commanded_velocity: Vec3,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TowerWorld {
    pub bodies: Vec<Body3D>,
    pub fist: Option<Fist>,
    pub sim_time: f64,
    pub physics_dt: f64,
    pub block_edge: f64,
    pub damping: f64,
    /// `block_owner[b] = (body index, member index)` for primitive block `b`.
    block_owner: Vec<(usize, usize)>,
}

impl TowerWorld {
    /// A vertical stack of `n_blocks` unit blocks centred on the origin in xy,
    /// with block `i` at height `(i + 0.5) * edge`. Each range in `segments`
    /// becomes one rigid body.
    pub fn stacked(segments: &[Range<usize>], fist: Option<Fist>) -> Self {
        let edge = BLOCK_EDGE;
        let n_blocks = segments.iter().map(|s| s.end).max().unwrap_or(0);
        let mut bodies = Vec::with_capacity(segments.len());
        let mut block_owner = alloc::vec![(usize::MAX, 0); n_blocks];
        for (id, seg) in segments.iter().enumerate() {
            let count = seg.len();
            let com_z = seg.clone().map(|b| (b as f64 + 0.5) * edge).sum::<f64>() / count as f64;
            let members = seg
                .clone()
                .enumerate()
                .map(|(k, b)| {
                    block_owner[b] = (id, k);
                    Member { block: b, offset: Vec3::new(0.0, 0.0, (b as f64 + 0.5) * edge - com_z) }
                })
                .collect();
            bodies.push(Body3D {
                id,
                position: Vec3::new(0.0, 0.0, com_z),
                velocity: Vec3::ZERO,
                mass: BLOCK_MASS * count as f64,
                members,
            });
        }
        debug_assert!(block_owner.iter().all(|&(b, _)| b != usize::MAX), "segments must cover every block");
        Self { bodies, fist, sim_time: 0.0, physics_dt: PHYSICS_DT, block_edge: edge, damping: DAMPING, block_owner }
    }

    pub fn n_blocks(&self) -> usize {
        self.block_owner.len()
    }

    pub fn body_of_block(&self, block: usize) -> usize {
        self.block_owner[block].0
    }

    pub fn block_position(&self, block: usize) -> Vec3 {
        let (body, member) = self.block_owner[block];
        let b = &self.bodies[body];
        b.position + b.members[member].offset
    }

    pub fn block_positions(&self) -> Vec<Vec3> {
        (0..self.n_blocks()).map(|b| self.block_position(b)).collect()
    }

    fn radius(&self) -> f64 {
        0.5 * self.block_edge
    }

    /// Sets the fist's commanded planar velocity; it persists until the next call.
    pub fn set_fist_velocity(&mut self, v: Vec3) -> Result<(), PhysicsError> {
        if !v.is_finite() {
            return Err(PhysicsError::NonFinite("fist velocity"));
        }
        if v.z != 0.0 {
            return Err(PhysicsError::FistVerticalVelocity(v.z));
        }
        let fist = self.fist.as_mut().ok_or(PhysicsError::NoFist)?;
        fist.commanded_velocity = v;
        Ok(())
    }

    fn check_finite(&self) -> Result<(), PhysicsError> {
        let bodies_ok = self
            .bodies
            .iter()
            .all(|b| b.position.is_finite() && b.velocity.is_finite() && b.mass.is_finite());
        let fist_ok = self.fist.is_none_or(|f| f.position.is_finite() && f.commanded_velocity.is_finite());
        if bodies_ok && fist_ok {
            Ok(())
        } else {
            Err(PhysicsError::NonFinite("tower world state"))
        }
    }

    /// One substep: external forces and gravity, damping, position update,
    /// then contact resolution.
    ///
    /// `external_forces` pairs a body id with a force in newtons.
    pub fn step(&mut self, external_forces: &[(usize, Vec3)], dt: f64) -> Result<(), PhysicsError> {
        check_dt(dt)?;
        self.check_finite()?;
        for &(id, f) in external_forces {
            if id >= self.bodies.len() {
                return Err(PhysicsError::UnknownBody(id));
            }
            if !f.is_finite() {
                return Err(PhysicsError::NonFinite("external force"));
            }
        }
        let gravity = Vec3::new(0.0, 0.0, -GRAVITY);
        let damp = 1.0 - self.damping * dt;
        for body in &mut self.bodies {
            let force = external_forces
                .iter()
                .filter(|(id, _)| *id == body.id)
                .fold(Vec3::ZERO, |acc, &(_, f)| acc + f);
            body.velocity += (force * body.inv_mass() + gravity) * dt;
            body.velocity = body.velocity * damp;
            body.position += body.velocity * dt;
        }
        if let Some(fist) = self.fist.as_mut() {
            fist.position += fist.commanded_velocity * dt;
        }
        self.resolve_contacts();
        self.sim_time += dt;
        Ok(())
    }

    /// Projected Gauss-Seidel over all overlapping sphere pairs.
    ///
    /// Each primitive block is a sphere of radius `edge / 2` at its centre. Per
    /// overlapping pair: positional de-penetration split by inverse mass (the
    /// fist and the ground are immovable), then a restitution-free normal
    /// impulse if the pair is approaching. Ground contacts are processed last
    /// in every sweep so the floor constraint holds exactly on exit.
    pub fn resolve_contacts(&mut self) {
        let n = self.n_blocks();
        let r = self.radius();
        for _ in 0..CONTACT_MAX_ITERS {
            let mut worst = 0.0f64;
            for i in 0..n {
                for j in (i + 1)..n {
                    let (bi, bj) = (self.block_owner[i].0, self.block_owner[j].0);
                    if bi == bj {
                        continue;
                    }
                    worst = worst.max(self.solve_block_pair(i, j, 2.0 * r));
                }
            }
            if let Some(fist) = self.fist {
                for i in 0..n {
                    worst = worst.max(self.solve_fist_block(fist, i, fist.radius + r));
                }
            }
            for i in 0..n {
                worst = worst.max(self.solve_ground(i, r));
            }
            if worst < CONTACT_TOLERANCE {
                break;
            }
        }
    }

    fn solve_block_pair(&mut self, i: usize, j: usize, reach: f64) -> f64 {
        let (pi, pj) = (self.block_position(i), self.block_position(j));
        let (bi, bj) = (self.block_owner[i].0, self.block_owner[j].0);
        let d = pj - pi;
        let dist = d.norm();
        let overlap = reach - dist;
        if overlap <= 0.0 {
            return 0.0;
        }
        let normal = contact_normal(d, dist);
        let (wi, wj) = (self.bodies[bi].inv_mass(), self.bodies[bj].inv_mass());
        let w = wi + wj;
        self.bodies[bi].position -= normal * (overlap * wi / w);
        self.bodies[bj].position += normal * (overlap * wj / w);
        let approach = (self.bodies[bj].velocity - self.bodies[bi].velocity).dot(normal);
        let mut change = overlap;
        if approach < 0.0 {
            let impulse = -approach / w;
            self.bodies[bi].velocity -= normal * (impulse * wi);
            self.bodies[bj].velocity += normal * (impulse * wj);
            change = change.max(-approach);
        }
        change
    }

    fn solve_fist_block(&mut self, fist: Fist, i: usize, reach: f64) -> f64 {
        let p = self.block_position(i);
        let bi = self.block_owner[i].0;
        let d = p - fist.position;
        let dist = d.norm();
        let overlap = reach - dist;
        if overlap <= 0.0 {
            return 0.0;
        }
        let normal = contact_normal(d, dist);
        let body = &mut self.bodies[bi];
        body.position += normal * overlap;
        let approach = (body.velocity - fist.commanded_velocity).dot(normal);
        let mut change = overlap;
        if approach < 0.0 {
            body.velocity -= normal * approach;
            change = change.max(-approach);
        }
        change
    }

    fn solve_ground(&mut self, i: usize, rest_height: f64) -> f64 {
        let z = self.block_position(i).z;
        let pen = rest_height - z;
        if pen <= 0.0 {
            return 0.0;
        }
        let body = &mut self.bodies[self.block_owner[i].0];
        body.position.z += pen;
        let mut change = pen;
        if body.velocity.z < 0.0 {
            change = change.max(-body.velocity.z);
            body.velocity.z = 0.0;
        }
        change
    }
}

/// Unit vector along `d`; exactly coincident centres separate along +x.
fn contact_normal(d: Vec3, dist: f64) -> Vec3 {
    if dist > 0.0 {
        d / dist
    } else {
        Vec3::X
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physx::FIST_RADIUS;

    fn singles() -> Vec<Range<usize>> {
        (0..5).map(|i| i..i + 1).collect()
    }

    #[test]
    fn stacked_layout() {
        let w = TowerWorld::stacked(&[0..2, 2..5], None);
        assert_eq!(w.bodies.len(), 2);
        for b in 0..5 {
            let p = w.block_position(b);
            assert_eq!(p, Vec3::new(0.0, 0.0, b as f64 + 0.5));
        }
        assert_eq!(w.bodies[1].mass, 3.0);
        assert_eq!(w.body_of_block(3), 1);
    }

    #[test]
    fn static_tower_does_not_drift() {
        for segs in [singles(), alloc::vec![0..5], alloc::vec![0..1, 1..3, 3..5]] {
            let mut w = TowerWorld::stacked(&segs, None);
            let start = w.block_positions();
            for _ in 0..104 {
                w.step(&[], PHYSICS_DT).unwrap();
            }
            for (a, b) in start.iter().zip(w.block_positions()) {
                assert!((*a - b).norm() < 1e-6, "{a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn free_body_horizontal_force() {
        // lone body lifted off the ground so only the applied force and gravity act
        let mut w = TowerWorld::stacked(core::slice::from_ref(&(0..1)), None);
        w.damping = 0.0;
        w.bodies[0].position.z = 10.0;
        w.step(&[(0, Vec3::new(6.0, 0.0, 0.0))], 0.025).unwrap();
        assert!((w.bodies[0].velocity.x - 6.0 * 0.025).abs() < 1e-15);
    }

    #[test]
    fn head_on_equal_masses_is_perfectly_inelastic() {
        let mut w = TowerWorld::stacked(&[0..1, 1..2], None);
        w.bodies[0].position = Vec3::new(0.0, 0.0, 5.0);
        w.bodies[1].position = Vec3::new(0.99, 0.0, 5.0);
        w.bodies[0].velocity = Vec3::new(1.0, 0.0, 0.0);
        w.bodies[1].velocity = Vec3::new(-1.0, 0.0, 0.0);
        w.resolve_contacts();
        let rel = (w.bodies[1].velocity - w.bodies[0].velocity).x;
        assert!(rel.abs() < 1e-15);
        assert!((w.block_position(1) - w.block_position(0)).norm() >= 1.0 - 1e-12);
    }

    #[test]
    fn separated_spheres_untouched() {
        let mut w = TowerWorld::stacked(&[0..1, 1..2], None);
        w.bodies[1].position = Vec3::new(3.0, 0.0, 0.5);
        w.bodies[1].velocity = Vec3::new(-1.0, 0.0, 0.0);
        let before = w.clone();
        w.resolve_contacts();
        assert_eq!(w, before);
    }

    #[test]
    fn fist_imparts_its_velocity() {
        let fist = Fist { position: Vec3::new(-1.49, 0.0, 0.5), commanded_velocity: Vec3::new(2.0, 0.0, 0.0), radius: FIST_RADIUS };
        let mut w = TowerWorld::stacked(core::slice::from_ref(&(0..1)), Some(fist));
        w.resolve_contacts();
        assert!((w.bodies[0].velocity.x - 2.0).abs() < 1e-15);
        assert_eq!(w.fist.unwrap().commanded_velocity, Vec3::new(2.0, 0.0, 0.0));
        assert_eq!(w.fist.unwrap().position, Vec3::new(-1.49, 0.0, 0.5));
    }

    #[test]
    fn coincident_centres_split_along_x() {
        let mut w = TowerWorld::stacked(&[0..1, 1..2], None);
        w.bodies[0].position = Vec3::new(0.0, 0.0, 3.0);
        w.bodies[1].position = Vec3::new(0.0, 0.0, 3.0);
        w.resolve_contacts();
        assert!((w.bodies[1].position.x - 0.5).abs() < 1e-12);
        assert!((w.bodies[0].position.x + 0.5).abs() < 1e-12);
        assert_eq!(w.bodies[0].position.y, 0.0);
        assert_eq!(w.bodies[0].position.z, 3.0);
    }

    #[test]
    fn fist_velocity_contract() {
        let fist = Fist { position: Vec3::new(-3.0, 0.0, 1.0), commanded_velocity: Vec3::ZERO, radius: FIST_RADIUS };
        let mut w = TowerWorld::stacked(&singles(), Some(fist));
        assert_eq!(w.set_fist_velocity(Vec3::new(0.0, 0.0, 1.0)), Err(PhysicsError::FistVerticalVelocity(1.0)));
        w.set_fist_velocity(Vec3::new(1.0, 0.0, 0.0)).unwrap();
        let x0 = w.fist.unwrap().position.x;
        w.step(&[], PHYSICS_DT).unwrap();
        assert!((w.fist.unwrap().position.x - x0 - 0.025).abs() < 1e-15);

        let mut still = TowerWorld::stacked(&singles(), Some(fist));
        let start = still.block_positions();
        for _ in 0..104 {
            still.step(&[], PHYSICS_DT).unwrap();
        }
        assert_eq!(still.fist.unwrap().position, fist.position);
        for (a, b) in start.iter().zip(still.block_positions()) {
            assert!((*a - b).norm() < 1e-6);
        }

        let mut bare = TowerWorld::stacked(&singles(), None);
        assert_eq!(bare.set_fist_velocity(Vec3::X), Err(PhysicsError::NoFist));
    }

    #[test]
    fn compound_members_stay_rigid() {
        let mut w = TowerWorld::stacked(&[0..3, 3..5], None);
        w.step(&[(1, Vec3::new(30.0, 0.0, 0.0))], PHYSICS_DT).unwrap();
        for _ in 0..60 {
            w.step(&[(0, Vec3::new(0.0, 20.0, 0.0))], PHYSICS_DT).unwrap();
        }
        let p = w.block_positions();
        assert!((p[1] - p[0] - Vec3::new(0.0, 0.0, 1.0)).norm() < 1e-12);
        assert!((p[4] - p[3] - Vec3::new(0.0, 0.0, 1.0)).norm() < 1e-12);
    }
}
