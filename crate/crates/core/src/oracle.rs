//! Scripted baselines for Which is Heavier, viewed as best-arm identification:
//! each block is an arm, a poke is a pull, and the observed rise of the poked
//! block is a noisy, decreasing function of its mass.
//!
//! Both policies read only the observation stream, so they can be wrapped in
//! [`RandomizedInteractions`](crate::envproto::RandomizedInteractions) like any
//! learned agent.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envproto::{Action, Decision, Policy};
use crate::heavier::{self, HeavierConfig, N_BLOCKS};
use crate::math;
use crate::physx::{VerticalWorld, PHYSICS_DT};

/// Empirical distribution of the top-two mass gap for one β.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapDistribution {
    pub beta: f64,
    /// Sorted ascending.
    pub gaps: Vec<f64>,
}

impl GapDistribution {
    /// Fraction of sampled gaps `<= x`.
    pub fn cdf(&self, x: f64) -> f64 {
        if self.gaps.is_empty() {
            return 0.0;
        }
        self.gaps.partition_point(|&g| g <= x) as f64 / self.gaps.len() as f64
    }

    /// `(x, cdf(x))` on `n_points` evenly spaced x in [0, 1].
    pub fn table(&self, n_points: usize) -> Vec<(f64, f64)> {
        let last = n_points.saturating_sub(1).max(1) as f64;
        (0..n_points).map(|i| {
            let x = i as f64 / last;
            (x, self.cdf(x))
        }).collect()
    }
}

/// Samples `n` full four-block instances and records their mass gaps.
pub fn gap_cdf<R: Rng + ?Sized>(beta: f64, n: usize, rng: &mut R) -> GapDistribution {
    let mut gaps: Vec<f64> = (0..n).map(|_| heavier::sample_masses(beta, rng).mass_gap).collect();
    gaps.sort_by(f64::total_cmp);
    GapDistribution { beta, gaps }
}

/// Height reached by a block of draw `u` at the end of one poke action with
/// strength multiplier `eps`, starting from rest.
pub fn poke_rise(config: &HeavierConfig, u: f64, eps: f64) -> f64 {
    let mut world = VerticalWorld::at_rest(&[heavier::mass_from_draw(u)]);
    let force = [config.force_newtons * eps];
    for _ in 0..config.control_repeat {
        world.step(&force, PHYSICS_DT).expect("finite poke");
    }
    world.blocks[0].z
}

/// Rise of a mid-range block (u = 0.5) under a noiseless poke; anything lower
/// is read as "heavy".
pub fn heavy_threshold(config: &HeavierConfig) -> f64 {
    poke_rise(config, 0.5, 1.0)
}

/// Standard deviation of a single poke's rise around its noiseless value,
/// pooled over uniformly drawn masses under the default poke noise.
/// [`calibrate_rise_sigma`] reproduces it.
pub const RISE_SIGMA: f64 = 0.006_19;

/// Pooled rise noise from `n` calibration pokes with `u ~ U(0, 1)`.
pub fn calibrate_rise_sigma<R: Rng + ?Sized>(config: &HeavierConfig, n: usize, rng: &mut R) -> f64 {
    let mut ss = 0.0;
    for _ in 0..n {
        let u = crate::rng::open01(rng);
        let eps = heavier::poke_noise(config.poke_noise_sigma, rng);
        let d = poke_rise(config, u, eps) - poke_rise(config, u, 1.0);
        ss += d * d;
    }
    math::sqrt(ss / n as f64)
}

/// Pokes blocks in index order and labels the first one whose rise falls
/// below the threshold. After three light blocks the fourth is labeled
/// without a poke.
#[derive(Debug, Clone)]
pub struct ScanPolicy {
    threshold: f64,
    next: usize,
}

impl ScanPolicy {
    pub fn new(threshold: f64) -> Self {
        Self { threshold, next: 0 }
    }

    pub fn for_config(config: &HeavierConfig) -> Self {
        Self::new(heavy_threshold(config))
    }
}

impl Policy for ScanPolicy {
    fn begin_episode(&mut self, _seed: u64) {
        self.next = 0;
    }

    fn act(&mut self, observation: &[f64]) -> Decision {
        if self.next > 0 {
            let poked = self.next - 1;
            if observation[poked] < self.threshold {
                return Decision::scripted(Action::Label(poked));
            }
        }
        if self.next == N_BLOCKS - 1 {
            return Decision::scripted(Action::Label(N_BLOCKS - 1));
        }
        self.next += 1;
        Decision::scripted(Action::Interact(self.next - 1))
    }
}

/// Running rise statistics of one block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmEstimate {
    pub block: usize,
    pub pokes: usize,
    pub mean: f64,
    /// Infinite until the first measurement.
    pub radius: f64,
}

impl ArmEstimate {
    pub fn new(block: usize) -> Self {
        Self { block, pokes: 0, mean: 0.0, radius: f64::INFINITY }
    }

    pub fn record(&mut self, rise: f64, scale: f64) {
        self.pokes += 1;
        self.mean += (rise - self.mean) / self.pokes as f64;
        self.radius = scale / math::sqrt(self.pokes as f64);
    }

    pub fn lower(&self) -> f64 {
        self.mean - self.radius
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.radius
    }
}

/// Round-robin successive elimination on poke rises, with confidence radius
/// `c σ √(ln(1/δ) / n)`. A block is dropped once its rise is confidently
/// higher than another's. Only blocks resting on the floor are measured; when
/// every candidate is still airborne the policy pokes a resting eliminated
/// block as a wait.
#[derive(Debug, Clone)]
pub struct SuccessiveElimination {
    pub delta: f64,
    pub sigma: f64,
    pub c: f64,
    pub timeout_steps: usize,
    arms: Vec<ArmEstimate>,
    alive: Vec<bool>,
    cursor: usize,
    steps: usize,
    pending: Option<usize>,
}

impl SuccessiveElimination {
    pub fn new(delta: f64, sigma: f64, timeout_steps: usize) -> Self {
        assert!(delta > 0.0 && delta < 1.0, "delta must lie in (0, 1)");
        Self {
            delta,
            sigma,
            c: 1.0,
            timeout_steps,
            arms: (0..N_BLOCKS).map(ArmEstimate::new).collect(),
            alive: vec![true; N_BLOCKS],
            cursor: 0,
            steps: 0,
            pending: None,
        }
    }

    pub fn for_config(delta: f64, config: &HeavierConfig) -> Self {
        Self::new(delta, RISE_SIGMA * config.poke_noise_sigma / 0.05, config.timeout_steps)
    }

    pub fn arms(&self) -> &[ArmEstimate] {
        &self.arms
    }

    fn radius_scale(&self) -> f64 {
        self.c * self.sigma * math::sqrt(math::ln(1.0 / self.delta))
    }

    fn eliminate(&mut self) {
        let best_upper = (0..N_BLOCKS).filter(|&i| self.alive[i]).map(|i| self.arms[i].upper()).fold(f64::INFINITY, f64::min);
        for i in 0..N_BLOCKS {
            if self.alive[i] && self.arms[i].lower() > best_upper {
                self.alive[i] = false;
            }
        }
    }

    fn best(&self) -> usize {
        (0..N_BLOCKS)
            .filter(|&i| self.alive[i] && self.arms[i].pokes > 0)
            .min_by(|&a, &b| self.arms[a].mean.total_cmp(&self.arms[b].mean))
            .or_else(|| self.alive.iter().position(|&a| a))
            .unwrap_or(0)
    }

    fn act_inner(&mut self, observation: &[f64]) -> Action {
        if let Some(block) = self.pending.take() {
            let scale = self.radius_scale();
            self.arms[block].record(observation[block], scale);
            self.eliminate();
        }
        let survivors = self.alive.iter().filter(|&&a| a).count();
        if survivors == 1 || self.steps + 1 >= self.timeout_steps {
            return Action::Label(self.best());
        }
        let grounded = |i: usize| observation[i] == 0.0;
        for k in 0..N_BLOCKS {
            let i = (self.cursor + k) % N_BLOCKS;
            if self.alive[i] && grounded(i) {
                self.cursor = (i + 1) % N_BLOCKS;
                self.pending = Some(i);
                return Action::Interact(i);
            }
        }
        let wait = (0..N_BLOCKS)
            .find(|&i| !self.alive[i] && grounded(i))
            .unwrap_or_else(|| {
                (0..N_BLOCKS).min_by(|&a, &b| observation[a].total_cmp(&observation[b])).unwrap_or(0)
            });
        Action::Interact(wait)
    }
}

impl Policy for SuccessiveElimination {
    fn begin_episode(&mut self, _seed: u64) {
        self.arms = (0..N_BLOCKS).map(ArmEstimate::new).collect();
        self.alive = vec![true; N_BLOCKS];
        self.cursor = 0;
        self.steps = 0;
        self.pending = None;
    }

    fn act(&mut self, observation: &[f64]) -> Decision {
        let action = self.act_inner(observation);
        self.steps += 1;
        Decision::scripted(action)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envproto::{Environment, Termination};
    use crate::heavier::{HeavierEnv, MassAssignment};
    use crate::rng;

    #[test]
    fn gap_cdf_basics() {
        let mut r = rng::stream_rng(1, 0);
        let d3 = gap_cdf(3.0, 10_000, &mut r);
        let d10 = gap_cdf(10.0, 10_000, &mut r);
        assert!(d3.cdf(0.1) > d10.cdf(0.1));
        assert_eq!(d3.cdf(1.0), 1.0);
        assert!(d3.gaps.iter().all(|&g| (0.0..=1.0).contains(&g)));
        let t = d3.table(11);
        assert!(t.windows(2).all(|w| w[0].1 <= w[1].1));
        let big = gap_cdf(1000.0, 10_000, &mut r);
        assert!(big.cdf(0.95) < 0.01);
    }

    #[test]
    fn rise_decreases_with_mass() {
        let cfg = HeavierConfig::default();
        let mut prev = f64::INFINITY;
        for i in 0..=20 {
            let r = poke_rise(&cfg, i as f64 / 20.0, 1.0);
            assert!(r < prev || r == 0.0);
            prev = r;
        }
        // a 2 kg block exactly balances gravity under a 20 N push
        assert_eq!(poke_rise(&cfg, 1.0, 1.0), 0.0);
        assert!(heavy_threshold(&cfg) > 0.0);
    }

    fn env_with(masses: [f64; 4], sigma: f64) -> HeavierEnv {
        let cfg = HeavierConfig { poke_noise_sigma: sigma, ..HeavierConfig::default() };
        let mut env = HeavierEnv::new(cfg).unwrap();
        env.reset(0);
        env.scene_mut().set_masses(MassAssignment::from_draws(masses.to_vec(), 0, 10.0));
        env
    }

    fn run_fixed<P: Policy>(env: &mut HeavierEnv, policy: &mut P) -> (usize, bool, Termination) {
        // drive by hand so the injected instance is kept
        policy.begin_episode(0);
        let mut obs = env.scene().world().heights();
        loop {
            let d = policy.act(&obs);
            let r = env.step(d.action).unwrap();
            obs = r.observation;
            if r.done {
                return (env.steps_taken(), r.reward > 0.0, r.termination);
            }
        }
    }

    #[test]
    fn scan_labels_heavy_first_block_after_one_poke() {
        let cfg = HeavierConfig::default();
        for (heavy, expected_interactions) in [(0, 1), (1, 2), (2, 3), (3, 3)] {
            let mut u = [0.1; 4];
            u[heavy] = 0.95;
            let mut env = env_with(u, 0.0);
            let mut p = ScanPolicy::for_config(&cfg);
            let (steps, ok, _) = run_fixed(&mut env, &mut p);
            assert!(ok);
            assert_eq!(steps - 1, expected_interactions);
        }
    }

    #[test]
    fn elimination_noiseless_uses_four_pokes() {
        let mut r = rng::stream_rng(5, 0);
        for _ in 0..200 {
            let m = heavier::sample_masses(3.0, &mut r);
            let mut env = env_with([m.u_values[0], m.u_values[1], m.u_values[2], m.u_values[3]], 0.0);
            let mut p = SuccessiveElimination::new(0.05, 0.0, 100);
            let (steps, ok, _) = run_fixed(&mut env, &mut p);
            assert!(ok);
            assert_eq!(steps, 5);
        }
    }

    #[test]
    fn elimination_labels_before_timeout() {
        // two blocks too heavy to lift can never be told apart
        let mut env = env_with([1.0, 1.0, 0.1, 0.1], 0.05);
        let mut p = SuccessiveElimination::for_config(0.05, env.scene().config());
        let (steps, _, end) = run_fixed(&mut env, &mut p);
        assert!(steps <= 100);
        assert_eq!(end, Termination::Labeled);
    }

    #[test]
    fn arm_radius_shrinks() {
        let mut a = ArmEstimate::new(0);
        a.record(1.0, 0.5);
        let r1 = a.radius;
        for _ in 0..3 {
            a.record(1.0, 0.5);
        }
        assert!((a.radius - r1 / 2.0).abs() < 1e-15);
        assert_eq!(a.mean, 1.0);
    }

    #[test]
    fn stored_rise_sigma_matches_calibration() {
        let mut r = rng::stream_rng(2024, 0);
        let sigma = calibrate_rise_sigma(&HeavierConfig::default(), 10_000, &mut r);
        assert!((sigma - RISE_SIGMA).abs() < 0.03 * RISE_SIGMA, "calibrated {sigma}");
    }
}
