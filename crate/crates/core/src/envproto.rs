//! The interact → label → reward episode protocol shared by every environment.
//!
//! At each step the agent emits either an interaction (forwarded to the scene's
//! actuator for `control_repeat` physics substeps) or a label, which ends the
//! episode with `reward_correct` / `reward_incorrect`. Running out of steps ends
//! it with `reward_timeout`. All other rewards are zero; any pressure to answer
//! early comes from the discount factor.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::heavier::MassAssignment;
use crate::physx::{PhysicsError, Vec3};
use crate::rng::{self, stream, SimRng};
use crate::towers::TowerPartition;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "index", rename_all = "snake_case")]
pub enum Action {
    Interact(usize),
    Label(usize),
}

/// Discrete action layout: interaction indices first, then labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSpace {
    pub n_interact: usize,
    pub n_labels: usize,
}

impl ActionSpace {
    pub fn size(&self) -> usize {
        self.n_interact + self.n_labels
    }

    pub fn decode(&self, flat: usize) -> Action {
        debug_assert!(flat < self.size());
        if flat < self.n_interact {
            Action::Interact(flat)
        } else {
            Action::Label(flat - self.n_interact)
        }
    }

    pub fn encode(&self, action: Action) -> usize {
        match action {
            Action::Interact(i) => i,
            Action::Label(j) => self.n_interact + j,
        }
    }

    pub fn contains(&self, action: Action) -> bool {
        match action {
            Action::Interact(i) => i < self.n_interact,
            Action::Label(j) => j < self.n_labels,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Labeled,
    Timeout,
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub termination: Termination,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub timeout_steps: usize,
    pub reward_correct: f64,
    pub reward_incorrect: f64,
    pub reward_timeout: f64,
    /// Physics substeps per agent action.
    pub control_repeat: usize,
    /// Length of one physics substep, seconds.
    pub physics_dt: f64,
}

impl EpisodeConfig {
    pub fn new(timeout_steps: usize, control_repeat: usize, physics_dt: f64) -> Self {
        Self {
            timeout_steps,
            reward_correct: 1.0,
            reward_incorrect: -1.0,
            reward_timeout: -1.0,
            control_repeat,
            physics_dt,
        }
    }

    /// Wall-clock duration of one agent action.
    pub fn control_dt(&self) -> f64 {
        self.control_repeat as f64 * self.physics_dt
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if self.timeout_steps == 0 {
            return Err(EnvError::Config("timeout_steps must be at least 1"));
        }
        if self.control_repeat == 0 {
            return Err(EnvError::Config("control_repeat must be at least 1"));
        }
        if !(self.physics_dt.is_finite() && self.physics_dt > 0.0) {
            return Err(EnvError::Config("physics_dt must be positive"));
        }
        Ok(())
    }
}

/// Hidden parameters of one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Instance {
    Heavier(MassAssignment),
    Towers(TowerPartition),
}

impl Instance {
    /// Normalized gap between the two heaviest draws, for Heavier instances.
    pub fn mass_gap(&self) -> Option<f64> {
        match self {
            Instance::Heavier(m) => Some(m.mass_gap),
            Instance::Towers(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub seed: u64,
    pub env: String,
    pub instance: Instance,
    pub actions: Vec<Action>,
    pub label: Option<usize>,
    pub correct: bool,
    pub steps: usize,
    pub sim_seconds: f64,
    pub termination: Termination,
    #[serde(default)]
    pub randomized: bool,
}

impl EpisodeRecord {
    pub fn interactions(&self) -> usize {
        self.actions.iter().filter(|a| matches!(a, Action::Interact(_))).count()
    }

    pub fn timed_out(&self) -> bool {
        self.termination == Termination::Timeout
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnvError {
    #[error("episode already finished")]
    EpisodeFinished,
    #[error("action {0:?} outside the action space")]
    InvalidAction(Action),
    #[error("invalid config: {0}")]
    Config(&'static str),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
}

/// The physical side of an environment: sampling, actuation and observation.
pub trait Scene {
    fn name(&self) -> &'static str;
    fn action_space(&self) -> ActionSpace;
    fn observation_dim(&self) -> usize;
    /// Samples a fresh instance and puts the world in its initial state.
    fn reset(&mut self, seed: u64);
    /// Applies interaction `index` for `substeps` physics substeps of `dt` each.
    fn interact(&mut self, index: usize, substeps: usize, dt: f64) -> Result<(), PhysicsError>;
    fn observe(&self, out: &mut Vec<f64>);
    /// Index of the correct label.
    fn answer(&self) -> usize;
    fn instance(&self) -> Instance;
    /// World-frame centre of every body the scene simulates, in a fixed order.
    fn positions(&self) -> Vec<Vec3>;
}

pub trait Environment {
    fn name(&self) -> &'static str;
    fn action_space(&self) -> ActionSpace;
    fn observation_dim(&self) -> usize;
    fn episode_config(&self) -> &EpisodeConfig;
    fn reset(&mut self, seed: u64) -> Vec<f64>;
    fn step(&mut self, action: Action) -> Result<StepResult, EnvError>;
    fn answer(&self) -> usize;
    fn instance(&self) -> Instance;
    fn steps_taken(&self) -> usize;
    fn positions(&self) -> Vec<Vec3>;
}

impl<E: Environment + ?Sized> Environment for Box<E> {
    fn name(&self) -> &'static str {
        (**self).name()
    }
    fn action_space(&self) -> ActionSpace {
        (**self).action_space()
    }
    fn observation_dim(&self) -> usize {
        (**self).observation_dim()
    }
    fn episode_config(&self) -> &EpisodeConfig {
        (**self).episode_config()
    }
    fn reset(&mut self, seed: u64) -> Vec<f64> {
        (**self).reset(seed)
    }
    fn step(&mut self, action: Action) -> Result<StepResult, EnvError> {
        (**self).step(action)
    }
    fn answer(&self) -> usize {
        (**self).answer()
    }
    fn instance(&self) -> Instance {
        (**self).instance()
    }
    fn steps_taken(&self) -> usize {
        (**self).steps_taken()
    }
    fn positions(&self) -> Vec<Vec3> {
        (**self).positions()
    }
}

/// Wraps a [`Scene`] with the episode protocol.
#[derive(Debug, Clone)]
pub struct Episodic<S> {
    scene: S,
    config: EpisodeConfig,
    steps: usize,
    done: bool,
}

impl<S: Scene> Episodic<S> {
    pub fn from_scene(scene: S, config: EpisodeConfig) -> Result<Self, EnvError> {
        config.validate()?;
        Ok(Self { scene, config, steps: 0, done: true })
    }

    pub fn scene(&self) -> &S {
        &self.scene
    }

    pub fn scene_mut(&mut self) -> &mut S {
        &mut self.scene
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    fn observation(&self) -> Vec<f64> {
        let mut obs = Vec::with_capacity(self.scene.observation_dim());
        self.scene.observe(&mut obs);
        obs
    }
}

impl<S: Scene> Environment for Episodic<S> {
    fn name(&self) -> &'static str {
        self.scene.name()
    }

    fn action_space(&self) -> ActionSpace {
        self.scene.action_space()
    }

    fn observation_dim(&self) -> usize {
        self.scene.observation_dim()
    }

    fn episode_config(&self) -> &EpisodeConfig {
        &self.config
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.scene.reset(seed);
        self.steps = 0;
        self.done = false;
        self.observation()
    }

    fn step(&mut self, action: Action) -> Result<StepResult, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeFinished);
        }
        if !self.scene.action_space().contains(action) {
            return Err(EnvError::InvalidAction(action));
        }
        self.steps += 1;
        match action {
            Action::Label(j) => {
                self.done = true;
                let reward = if j == self.scene.answer() {
                    self.config.reward_correct
                } else {
                    self.config.reward_incorrect
                };
                Ok(StepResult { observation: self.observation(), reward, done: true, termination: Termination::Labeled })
            }
            Action::Interact(i) => {
                self.scene.interact(i, self.config.control_repeat, self.config.physics_dt)?;
                let timed_out = self.steps >= self.config.timeout_steps;
                self.done = timed_out;
                let (reward, termination) =
                    if timed_out { (self.config.reward_timeout, Termination::Timeout) } else { (0.0, Termination::None) };
                Ok(StepResult { observation: self.observation(), reward, done: timed_out, termination })
            }
        }
    }

    fn answer(&self) -> usize {
        self.scene.answer()
    }

    fn instance(&self) -> Instance {
        self.scene.instance()
    }

    fn steps_taken(&self) -> usize {
        self.steps
    }

    fn positions(&self) -> Vec<Vec3> {
        self.scene.positions()
    }
}

/// What a policy emits each step. Scripted policies leave `logits` empty.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub action: Action,
    pub logits: Vec<f64>,
    pub value: f64,
}

impl Decision {
    pub fn scripted(action: Action) -> Self {
        Self { action, logits: Vec::new(), value: 0.0 }
    }
}

pub trait Policy {
    /// Clears per-episode state and reseeds any internal randomness.
    fn begin_episode(&mut self, seed: u64);
    fn act(&mut self, observation: &[f64]) -> Decision;
    fn is_randomized(&self) -> bool {
        false
    }
}

impl<P: Policy + ?Sized> Policy for &mut P {
    fn begin_episode(&mut self, seed: u64) {
        (**self).begin_episode(seed)
    }
    fn act(&mut self, observation: &[f64]) -> Decision {
        (**self).act(observation)
    }
    fn is_randomized(&self) -> bool {
        (**self).is_randomized()
    }
}

/// Randomized-interaction baseline: labels pass through untouched, every
/// interaction is swapped for one drawn uniformly from the interaction set.
#[derive(Debug, Clone)]
pub struct RandomizedInteractions<P> {
    inner: P,
    n_interact: usize,
    rng: SimRng,
}

impl<P: Policy> RandomizedInteractions<P> {
    pub fn new(inner: P, space: ActionSpace) -> Self {
        Self { inner, n_interact: space.n_interact, rng: rng::stream_rng(0, stream::RANDOMIZED_INTERACTION) }
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }

    pub fn into_inner(self) -> P {
        self.inner
    }

    pub fn replace(&mut self, candidate: Action) -> Action {
        match candidate {
            Action::Label(j) => Action::Label(j),
            Action::Interact(_) => Action::Interact(self.rng.random_range(0..self.n_interact)),
        }
    }
}

impl<P: Policy> Policy for RandomizedInteractions<P> {
    fn begin_episode(&mut self, seed: u64) {
        self.inner.begin_episode(seed);
        self.rng = rng::stream_rng(seed, stream::RANDOMIZED_INTERACTION);
    }

    fn act(&mut self, observation: &[f64]) -> Decision {
        let mut d = self.inner.act(observation);
        d.action = self.replace(d.action);
        d
    }

    fn is_randomized(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStep {
    pub observation: Vec<f64>,
    pub action: Action,
    pub reward: f64,
    pub logits: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub steps: Vec<TrajectoryStep>,
}

impl Trajectory {
    pub fn rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.reward).collect()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Resets `env` with `seed`, then alternates policy and environment until the
/// episode ends.
pub fn run_episode<E, P>(env: &mut E, policy: &mut P, seed: u64) -> Result<(EpisodeRecord, Trajectory), EnvError>
where
    E: Environment + ?Sized,
    P: Policy + ?Sized,
{
    let mut observation = env.reset(seed);
    policy.begin_episode(seed);
    let mut trajectory = Trajectory::default();
    let mut actions = Vec::new();
    let (label, termination) = loop {
        let decision = policy.act(&observation);
        let result = env.step(decision.action)?;
        actions.push(decision.action);
        trajectory.steps.push(TrajectoryStep {
            observation: core::mem::replace(&mut observation, result.observation),
            action: decision.action,
            reward: result.reward,
            logits: decision.logits,
            value: decision.value,
        });
        if result.done {
            let label = match decision.action {
                Action::Label(j) => Some(j),
                Action::Interact(_) => None,
            };
            break (label, result.termination);
        }
    };
    let cfg = env.episode_config();
    let steps = env.steps_taken();
    let record = EpisodeRecord {
        seed,
        env: String::from(env.name()),
        instance: env.instance(),
        correct: label == Some(env.answer()),
        label,
        actions,
        steps,
        sim_seconds: steps as f64 * cfg.control_repeat as f64 * cfg.physics_dt,
        termination,
        randomized: policy.is_randomized(),
    };
    Ok((record, trajectory))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heavier::{HeavierConfig, HeavierEnv};

    struct Always(Action);
    impl Policy for Always {
        fn begin_episode(&mut self, _seed: u64) {}
        fn act(&mut self, _obs: &[f64]) -> Decision {
            Decision::scripted(self.0)
        }
    }

    fn heavier() -> HeavierEnv {
        HeavierEnv::new(HeavierConfig::default()).unwrap()
    }

    #[test]
    fn action_space_round_trip() {
        let space = ActionSpace { n_interact: 4, n_labels: 4 };
        assert_eq!(space.size(), 8);
        for flat in 0..8 {
            assert_eq!(space.encode(space.decode(flat)), flat);
        }
        assert_eq!(space.decode(5), Action::Label(1));
        assert!(!space.contains(Action::Interact(4)));
    }

    #[test]
    fn correct_and_wrong_labels() {
        let mut env = heavier();
        env.reset(3);
        let answer = env.answer();
        let r = env.step(Action::Label(answer)).unwrap();
        assert_eq!((r.reward, r.done, r.termination), (1.0, true, Termination::Labeled));
        assert_eq!(env.step(Action::Label(0)), Err(EnvError::EpisodeFinished));

        env.reset(3);
        let r = env.step(Action::Label((answer + 1) % 4)).unwrap();
        assert_eq!((r.reward, r.done), (-1.0, true));
    }

    #[test]
    fn timeout_on_hundredth_interaction() {
        let mut env = heavier();
        env.reset(11);
        for step in 1..=100 {
            let r = env.step(Action::Interact(step % 4)).unwrap();
            if step < 100 {
                assert_eq!((r.reward, r.done, r.termination), (0.0, false, Termination::None));
            } else {
                assert_eq!((r.reward, r.done, r.termination), (-1.0, true, Termination::Timeout));
            }
        }
    }

    #[test]
    fn invalid_action_rejected() {
        let mut env = heavier();
        env.reset(0);
        assert_eq!(env.step(Action::Label(4)), Err(EnvError::InvalidAction(Action::Label(4))));
    }

    #[test]
    fn run_episode_lengths() {
        let mut env = heavier();
        let (rec, traj) = run_episode(&mut env, &mut Always(Action::Label(0)), 5).unwrap();
        assert_eq!((rec.steps, traj.len()), (1, 1));
        assert_eq!(rec.termination, Termination::Labeled);

        let (rec, traj) = run_episode(&mut env, &mut Always(Action::Interact(2)), 5).unwrap();
        assert_eq!(rec.steps, 100);
        assert_eq!(rec.termination, Termination::Timeout);
        assert_eq!(rec.label, None);
        assert!(!rec.correct);
        assert_eq!(traj.rewards().iter().sum::<f64>(), -1.0);
        assert!((rec.sim_seconds - 100.0 * 4.0 * 0.025).abs() < 1e-12);

        let again = run_episode(&mut env, &mut Always(Action::Interact(2)), 5).unwrap();
        assert_eq!(again.0, rec);
    }

    #[test]
    fn randomized_wrapper_passes_labels() {
        let space = ActionSpace { n_interact: 4, n_labels: 4 };
        let mut w = RandomizedInteractions::new(Always(Action::Label(2)), space);
        w.begin_episode(9);
        for _ in 0..100 {
            assert_eq!(w.act(&[]).action, Action::Label(2));
        }
    }

    #[test]
    fn randomized_wrapper_is_uniform() {
        let space = ActionSpace { n_interact: 4, n_labels: 4 };
        let mut w = RandomizedInteractions::new(Always(Action::Interact(1)), space);
        w.begin_episode(123);
        let n = 10_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            match w.act(&[]).action {
                Action::Interact(k) => counts[k] += 1,
                Action::Label(_) => panic!("label from interaction"),
            }
        }
        let p = 0.25;
        let sigma = libm::sqrt(n as f64 * p * (1.0 - p));
        for c in counts {
            assert!((c as f64 - n as f64 * p).abs() < 3.0 * sigma, "{counts:?}");
        }
    }
}
