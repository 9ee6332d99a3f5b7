//! Which is Heavier: four vertically constrained blocks whose masses are drawn
//! fresh each episode. The agent can poke any block upward with a fixed force
//! and must name the heaviest one.

use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envproto::{ActionSpace, EnvError, EpisodeConfig, Episodic, Instance, Scene};
use crate::physx::{PhysicsError, Vec3, VerticalWorld, PHYSICS_DT};
use crate::rng::{self, stream, SimRng};

pub const N_BLOCKS: usize = 4;
/// Lightest possible block, kg (draw u = 0).
pub const MASS_MIN: f64 = 0.5;
/// Width of the mass range, kg (draw u = 1 gives 2.0 kg).
pub const MASS_SPAN: f64 = 1.5;
pub const POKE_NOISE_MIN: f64 = 0.8;
pub const POKE_NOISE_MAX: f64 = 1.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeavierConfig {
    pub beta: f64,
    pub force_newtons: f64,
    pub poke_noise_sigma: f64,
    pub timeout_steps: usize,
    pub control_repeat: usize,
}

impl Default for HeavierConfig {
    fn default() -> Self {
        Self { beta: 10.0, force_newtons: 20.0, poke_noise_sigma: 0.05, timeout_steps: 100, control_repeat: 4 }
    }
}

impl HeavierConfig {
    pub fn with_beta(beta: f64) -> Self {
        Self { beta, ..Self::default() }
    }

    pub fn episode_config(&self) -> EpisodeConfig {
        EpisodeConfig::new(self.timeout_steps, self.control_repeat, PHYSICS_DT)
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if !(self.beta.is_finite() && self.beta >= 1.0) {
            return Err(EnvError::Config("beta must be >= 1"));
        }
        if !(self.force_newtons.is_finite() && self.force_newtons >= 0.0) {
            return Err(EnvError::Config("force_newtons must be non-negative"));
        }
        if !(self.poke_noise_sigma.is_finite() && self.poke_noise_sigma >= 0.0) {
            return Err(EnvError::Config("poke_noise_sigma must be non-negative"));
        }
        self.episode_config().validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassAssignment {
    pub masses: Vec<f64>,
    pub heavy_index_sampled: usize,
    pub u_values: Vec<f64>,
    pub beta: f64,
    /// `sorted(u)[3] - sorted(u)[2]`, on the [0, 1] draw scale.
    pub mass_gap: f64,
}

impl MassAssignment {
    /// Builds an assignment from raw draws on the [0, 1] scale.
    pub fn from_draws(u_values: Vec<f64>, heavy_index_sampled: usize, beta: f64) -> Self {
        let masses = u_values.iter().map(|&u| mass_from_draw(u)).collect();
        Self { mass_gap: top_gap(&u_values), masses, heavy_index_sampled, u_values, beta }
    }

    /// Index of the heaviest realized block; ties go to the lowest index.
    pub fn heaviest(&self) -> usize {
        argmax_first(&self.masses)
    }
}

pub fn mass_from_draw(u: f64) -> f64 {
    MASS_MIN + MASS_SPAN * u
}

fn top_gap(u: &[f64]) -> f64 {
    let mut sorted: Vec<f64> = u.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n < 2 {
        return 0.0;
    }
    sorted[n - 1] - sorted[n - 2]
}

fn argmax_first(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// One block is chosen as "heavy" and drawn from Beta(β, 1); the others come
/// from Beta(1, β). Uniforms are consumed in block order after the heavy index.
pub fn sample_masses<R: Rng + ?Sized>(beta: f64, rng: &mut R) -> MassAssignment {
    let heavy = rng::uniform_index(rng, N_BLOCKS);
    let u_values = (0..N_BLOCKS)
        .map(|i| {
            let u = rng::open01(rng);
            if i == heavy {
                rng::beta_high_from_uniform(beta, u)
            } else {
                rng::beta_low_from_uniform(beta, u)
            }
        })
        .collect();
    MassAssignment::from_draws(u_values, heavy, beta)
}

/// Multiplicative poke-strength noise: Normal(1, σ) clipped to [0.8, 1.2].
pub fn poke_noise<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> f64 {
    if sigma == 0.0 {
        return 1.0;
    }
    (1.0 + sigma * rng::standard_normal(rng)).clamp(POKE_NOISE_MIN, POKE_NOISE_MAX)
}

#[derive(Debug, Clone)]
pub struct HeavierScene {
    config: HeavierConfig,
    world: VerticalWorld,
    masses: MassAssignment,
    noise_rng: SimRng,
}

impl HeavierScene {
    pub fn new(config: HeavierConfig) -> Self {
        let masses = MassAssignment::from_draws(alloc::vec![0.0; N_BLOCKS], 0, config.beta);
        Self {
            world: VerticalWorld::at_rest(&masses.masses),
            masses,
            config,
            noise_rng: rng::stream_rng(0, stream::ACTUATOR_NOISE),
        }
    }

    pub fn config(&self) -> &HeavierConfig {
        &self.config
    }

    pub fn world(&self) -> &VerticalWorld {
        &self.world
    }

    pub fn masses(&self) -> &MassAssignment {
        &self.masses
    }

    /// Replaces the sampled instance; the world is put back at rest.
    pub fn set_masses(&mut self, masses: MassAssignment) {
        self.world = VerticalWorld::at_rest(&masses.masses);
        self.masses = masses;
    }

    pub fn set_poke_noise_sigma(&mut self, sigma: f64) {
        self.config.poke_noise_sigma = sigma;
    }
}

impl Scene for HeavierScene {
    fn name(&self) -> &'static str {
        "heavier"
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace { n_interact: N_BLOCKS, n_labels: N_BLOCKS }
    }

    fn observation_dim(&self) -> usize {
        N_BLOCKS
    }

    fn reset(&mut self, seed: u64) {
        let mut instance_rng = rng::stream_rng(seed, stream::INSTANCE);
        let masses = sample_masses(self.config.beta, &mut instance_rng);
        self.set_masses(masses);
        self.noise_rng = rng::stream_rng(seed, stream::ACTUATOR_NOISE);
    }

    fn interact(&mut self, index: usize, substeps: usize, dt: f64) -> Result<(), PhysicsError> {
        let eps = poke_noise(self.config.poke_noise_sigma, &mut self.noise_rng);
        let mut forces = [0.0; N_BLOCKS];
        forces[index] = self.config.force_newtons * eps;
        for _ in 0..substeps {
            self.world.step(&forces, dt)?;
        }
        Ok(())
    }

    fn observe(&self, out: &mut Vec<f64>) {
        out.extend(self.world.blocks.iter().map(|b| b.z));
    }

    fn answer(&self) -> usize {
        self.masses.heaviest()
    }

    /// Blocks sit one unit apart along x.
    fn positions(&self) -> Vec<Vec3> {
        self.world.blocks.iter().enumerate().map(|(i, b)| Vec3::new(i as f64, 0.0, b.z)).collect()
    }

    fn instance(&self) -> Instance {
        Instance::Heavier(self.masses.clone())
    }
}

pub type HeavierEnv = Episodic<HeavierScene>;

impl HeavierEnv {
    pub fn new(config: HeavierConfig) -> Result<Self, EnvError> {
        config.validate()?;
        Episodic::from_scene(HeavierScene::new(config), config.episode_config())
    }
}
