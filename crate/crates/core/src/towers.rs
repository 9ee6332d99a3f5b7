//! Towers: five stacked blocks secretly bolted into contiguous rigid bodies.
//! The agent knocks the tower over, either by pushing blocks directly or with a
//! kinematic fist, and reports how many bodies there are.

use alloc::vec::Vec;
use core::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envproto::{ActionSpace, EnvError, EpisodeConfig, Episodic, Instance, Scene};
use crate::physx::{Fist, PhysicsError, TowerWorld, Vec3, BLOCK_EDGE, FIST_RADIUS, PHYSICS_DT};
use crate::rng::{self, stream};

pub const N_BLOCKS: usize = 5;
/// Fist starting offset along -x from the tower axis, meters.
pub const FIST_START_OFFSET: f64 = 2.0;
/// Height of the fist centre above the ground, meters.
pub const FIST_HEIGHT: f64 = 1.5;
/// Single-linkage distance used to recover bodies from block positions.
pub const CLUSTER_THRESHOLD: f64 = 1.05 * BLOCK_EDGE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Actuator {
    Direct,
    Fist,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TowersConfig {
    pub actuator: Actuator,
    pub control_dt: f64,
    pub physics_dt: f64,
    pub timeout_steps: usize,
    pub force_newtons: f64,
    pub fist_speed: f64,
}

impl Default for TowersConfig {
    fn default() -> Self {
        Self {
            actuator: Actuator::Direct,
            control_dt: 0.1,
            physics_dt: PHYSICS_DT,
            timeout_steps: 26,
            force_newtons: 30.0,
            fist_speed: 2.0,
        }
    }
}

impl TowersConfig {
    pub fn with_actuator(actuator: Actuator) -> Self {
        Self { actuator, ..Self::default() }
    }

    /// Substep count and length realizing `control_dt`.
    ///
    /// The control step is split into `round(control_dt / physics_dt)` equal
    /// substeps; a control step shorter than one physics step becomes a single
    /// substep of length `control_dt`.
    pub fn substeps(&self) -> (usize, f64) {
        let n = libm::round(self.control_dt / self.physics_dt).max(1.0) as usize;
        (n, self.control_dt / n as f64)
    }

    pub fn episode_config(&self) -> EpisodeConfig {
        let (repeat, dt) = self.substeps();
        EpisodeConfig::new(self.timeout_steps, repeat, dt)
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if !(self.control_dt.is_finite() && self.control_dt > 0.0) {
            return Err(EnvError::Config("control_dt must be positive"));
        }
        if !(self.physics_dt.is_finite() && self.physics_dt > 0.0) {
            return Err(EnvError::Config("physics_dt must be positive"));
        }
        if !(self.force_newtons.is_finite() && self.force_newtons >= 0.0) {
            return Err(EnvError::Config("force_newtons must be non-negative"));
        }
        if !(self.fist_speed.is_finite() && self.fist_speed >= 0.0) {
            return Err(EnvError::Config("fist_speed must be non-negative"));
        }
        self.episode_config().validate()
    }
}

/// Hidden bolting pattern: contiguous block segments, one per rigid body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TowerPartition {
    pub k: usize,
    pub segments: Vec<Vec<usize>>,
}

impl TowerPartition {
    /// Builds the partition whose bodies end after each block in `cuts`
    /// (cut `c` separates block `c` from block `c + 1`).
    pub fn from_cuts(cuts: &[usize]) -> Self {
        let mut segments = Vec::new();
        let mut start = 0;
        for &c in cuts {
            segments.push((start..=c).collect::<Vec<_>>());
            start = c + 1;
        }
        segments.push((start..N_BLOCKS).collect());
        Self { k: segments.len(), segments }
    }

    pub fn ranges(&self) -> Vec<Range<usize>> {
        self.segments.iter().map(|s| s[0]..s[s.len() - 1] + 1).collect()
    }

    /// Bit `c` set when blocks `c` and `c + 1` are bolted together.
    pub fn bolt_mask(&self) -> u8 {
        let mut mask = 0;
        for seg in &self.segments {
            for w in seg.windows(2) {
                mask |= 1 << w[0];
            }
        }
        mask
    }
}

/// `k ~ Uniform{1..5}`, then the `k - 1` cut points are a uniform subset of the
/// four gaps between blocks.
pub fn sample_partition<R: Rng + ?Sized>(rng: &mut R) -> TowerPartition {
    let k = 1 + rng::uniform_index(rng, N_BLOCKS);
    let mut gaps = [0usize, 1, 2, 3];
    // partial Fisher-Yates for the first k-1 slots
    for i in 0..k - 1 {
        let j = i + rng::uniform_index(rng, gaps.len() - i);
        gaps.swap(i, j);
    }
    let mut cuts = gaps[..k - 1].to_vec();
    cuts.sort_unstable();
    TowerPartition::from_cuts(&cuts)
}

/// Number of single-linkage clusters among `points` at distance `threshold`.
pub fn count_clusters(points: &[Vec3], threshold: f64) -> usize {
    let n = points.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (points[i] - points[j]).norm() <= threshold {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    (0..n).filter(|&i| find(&mut parent, i) == i).count()
}

const DIRECTIONS: [Vec3; 4] =
    [Vec3::new(1.0, 0.0, 0.0), Vec3::new(-1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.0, -1.0, 0.0)];

/// Decodes a direct-actuation index into (block, unit direction): `i = 4·block + dir`
/// with directions ordered +x, -x, +y, -y.
pub fn decode_direct(index: usize) -> (usize, Vec3) {
    (index / 4, DIRECTIONS[index % 4])
}

/// Planar unit direction for fist action `index` (+x, -x, +y, -y).
pub fn fist_direction(index: usize) -> Vec3 {
    DIRECTIONS[index]
}

pub fn initial_fist() -> Fist {
    Fist { position: Vec3::new(-FIST_START_OFFSET, 0.0, FIST_HEIGHT), commanded_velocity: Vec3::ZERO, radius: FIST_RADIUS }
}

#[derive(Debug, Clone)]
pub struct TowersScene {
    config: TowersConfig,
    partition: TowerPartition,
    world: TowerWorld,
}

impl TowersScene {
    pub fn new(config: TowersConfig) -> Self {
        let partition = TowerPartition::from_cuts(&[]);
        let mut scene = Self { world: TowerWorld::stacked(&partition.ranges(), None), partition, config };
        scene.set_partition(scene.partition.clone());
        scene
    }

    pub fn config(&self) -> &TowersConfig {
        &self.config
    }

    pub fn world(&self) -> &TowerWorld {
        &self.world
    }

    pub fn partition(&self) -> &TowerPartition {
        &self.partition
    }

    /// Replaces the hidden partition and rebuilds the initial tower.
    pub fn set_partition(&mut self, partition: TowerPartition) {
        let fist = match self.config.actuator {
            Actuator::Fist => Some(initial_fist()),
            Actuator::Direct => None,
        };
        self.world = TowerWorld::stacked(&partition.ranges(), fist);
        self.partition = partition;
    }
}

impl Scene for TowersScene {
    fn name(&self) -> &'static str {
        "towers"
    }

    fn action_space(&self) -> ActionSpace {
        let n_interact = match self.config.actuator {
            Actuator::Direct => 4 * N_BLOCKS,
            Actuator::Fist => 4,
        };
        ActionSpace { n_interact, n_labels: N_BLOCKS }
    }

    fn observation_dim(&self) -> usize {
        match self.config.actuator {
            Actuator::Direct => 3 * N_BLOCKS,
            Actuator::Fist => 3 * N_BLOCKS + 2,
        }
    }

    fn reset(&mut self, seed: u64) {
        let mut r = rng::stream_rng(seed, stream::INSTANCE);
        let partition = sample_partition(&mut r);
        self.set_partition(partition);
    }

    fn interact(&mut self, index: usize, substeps: usize, dt: f64) -> Result<(), PhysicsError> {
        match self.config.actuator {
            Actuator::Direct => {
                let (block, dir) = decode_direct(index);
                let force = [(self.world.body_of_block(block), dir * self.config.force_newtons)];
                for _ in 0..substeps {
                    self.world.step(&force, dt)?;
                }
            }
            Actuator::Fist => {
                self.world.set_fist_velocity(fist_direction(index) * self.config.fist_speed)?;
                for _ in 0..substeps {
                    self.world.step(&[], dt)?;
                }
            }
        }
        Ok(())
    }

    fn observe(&self, out: &mut Vec<f64>) {
        for p in self.world.block_positions() {
            out.extend_from_slice(&p.to_array());
        }
        if let Some(f) = self.world.fist {
            out.push(f.position.x);
            out.push(f.position.y);
        }
    }

    fn answer(&self) -> usize {
        self.partition.k - 1
    }

    fn instance(&self) -> Instance {
        Instance::Towers(self.partition.clone())
    }

    /// Blocks in tower order, then the fist if present.
    fn positions(&self) -> Vec<Vec3> {
        let mut out = self.world.block_positions();
        out.extend(self.world.fist.map(|f| f.position));
        out
    }
}

pub type TowersEnv = Episodic<TowersScene>;

impl TowersEnv {
    pub fn new(config: TowersConfig) -> Result<Self, EnvError> {
        config.validate()?;
        Episodic::from_scene(TowersScene::new(config), config.episode_config())
    }
}
