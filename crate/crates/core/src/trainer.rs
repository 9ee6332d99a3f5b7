//! Synchronous advantage actor-critic over whole-episode unrolls.
//!
//! Each update collects one complete episode from each of `n_envs`
//! environments with the current parameters, backpropagates every episode
//! through its full unroll, averages the gradients, clips them to a global norm
//! and applies one RMSProp step. Episodes always end inside the unroll, so
//! returns need no bootstrap.
//!
//! Per-episode gradients are summed in batch order, which makes the result
//! independent of how many worker threads collected them.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::envproto::{run_episode, ActionSpace, EnvError, Environment, Trajectory};
use crate::math;
use crate::nnet::{self, AgentParams, LstmPolicy, NetError, NetworkShape, OutputGrads};
use crate::rng::{self, stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub gamma: f64,
    pub n_envs: usize,
    pub lr: f64,
    pub rmsprop_decay: f64,
    pub rmsprop_eps: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub grad_clip_norm: f64,
    pub total_episodes: usize,
    pub seed: u64,
    /// Smoothing of the running success estimate.
    pub ema_smoothing: f64,
    /// LSTM input embedding width; 0 feeds raw features to the LSTM.
    pub embed_dim: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            n_envs: 16,
            lr: 7e-4,
            rmsprop_decay: 0.99,
            rmsprop_eps: 1e-5,
            entropy_coef: 0.01,
            value_coef: 0.5,
            grad_clip_norm: 40.0,
            total_episodes: 60_000,
            seed: 0,
            ema_smoothing: 0.99,
            embed_dim: nnet::EMBED_DIM,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |what| Err(TrainError::Config(what));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if self.n_envs == 0 {
            return bad("n_envs must be at least 1");
        }
        for (v, name) in [
            (self.lr, "lr must be non-negative"),
            (self.rmsprop_eps, "rmsprop_eps must be non-negative"),
            (self.entropy_coef, "entropy_coef must be non-negative"),
            (self.value_coef, "value_coef must be non-negative"),
            (self.grad_clip_norm, "grad_clip_norm must be non-negative"),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(name);
            }
        }
        if !(0.0..1.0).contains(&self.rmsprop_decay) {
            return bad("rmsprop_decay must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.ema_smoothing) {
            return bad("ema_smoothing must lie in [0, 1)");
        }
        Ok(())
    }

    pub fn network_shape(&self, obs_dim: usize, space: ActionSpace) -> NetworkShape {
        NetworkShape { embed_dim: self.embed_dim, ..NetworkShape::new(obs_dim, space.size()) }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("invalid train config: {0}")]
    Config(&'static str),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("training diverged at episode {episode}")]
    Diverged { episode: usize, last_good: AgentParams },
}

/// `R_t = Σ_{k≥t} γ^{k-t} r_k`.
pub fn compute_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (o, &r) in out.iter_mut().zip(rewards).rev() {
        acc = r + gamma * acc;
        *o = acc;
    }
    out
}

/// Policy entropy `-Σ π log π` of a logit vector.
pub fn entropy(logits: &[f64]) -> f64 {
    let lse = math::log_sum_exp(logits);
    -logits.iter().map(|&l| math::exp(l - lse) * (l - lse)).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq)]
pub struct A2cLoss {
    pub total: f64,
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub advantages: Vec<f64>,
    /// d(total)/d(outputs), ready for [`nnet::backward`].
    pub output_grads: OutputGrads,
}

/// `−Σ A_t log π(a_t) + c_v Σ (R_t − V_t)² − c_H Σ H(π_t)` with
/// `A_t = R_t − V_t` held constant in the policy term.
pub fn a2c_loss(trajectory: &Trajectory, returns: &[f64], space: ActionSpace, config: &TrainConfig) -> A2cLoss {
    let values: Vec<f64> = trajectory.steps.iter().map(|s| s.value).collect();
    let advantages: Vec<f64> = returns.iter().zip(&values).map(|(r, v)| r - v).collect();
    a2c_loss_with_advantages(trajectory, returns, &advantages, space, config)
}

/// Same loss with externally supplied advantages; used by gradient checks,
/// where the advantage must not move with the parameters.
pub fn a2c_loss_with_advantages(
    trajectory: &Trajectory,
    returns: &[f64],
    advantages: &[f64],
    space: ActionSpace,
    config: &TrainConfig,
) -> A2cLoss {
    let n = trajectory.steps.len();
    let mut policy = 0.0;
    let mut value = 0.0;
    let mut ent = 0.0;
    let mut dlogits = Vec::with_capacity(n);
    let mut dvalues = Vec::with_capacity(n);
    for (t, step) in trajectory.steps.iter().enumerate() {
        let a = space.encode(step.action);
        let lse = math::log_sum_exp(&step.logits);
        let logp: Vec<f64> = step.logits.iter().map(|&l| l - lse).collect();
        let probs: Vec<f64> = logp.iter().map(|&lp| math::exp(lp)).collect();
        let h = -probs.iter().zip(&logp).map(|(p, lp)| p * lp).sum::<f64>();
        let adv = advantages[t];
        policy -= adv * logp[a];
        let diff = returns[t] - step.value;
        value += config.value_coef * diff * diff;
        ent += h;
        let mut g: Vec<f64> = probs
            .iter()
            .zip(&logp)
            .map(|(&p, &lp)| adv * p + config.entropy_coef * p * (lp + h))
            .collect();
        g[a] -= adv;
        dlogits.push(g);
        dvalues.push(-2.0 * config.value_coef * diff);
    }
    A2cLoss {
        total: policy + value - config.entropy_coef * ent,
        policy,
        value,
        entropy: ent,
        advantages: advantages.to_vec(),
        output_grads: OutputGrads { logits: dlogits, values: dvalues },
    }
}

/// Per-coordinate RMSProp: `s ← ρs + (1−ρ)g²; θ ← θ − lr·g/(√s + ε)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsProp {
    pub lr: f64,
    pub decay: f64,
    pub eps: f64,
    square_avg: Vec<f64>,
}

impl RmsProp {
    pub fn new(n: usize, lr: f64, decay: f64, eps: f64) -> Self {
        Self { lr, decay, eps, square_avg: vec![0.0; n] }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        for ((p, &g), s) in params.iter_mut().zip(grad).zip(self.square_avg.iter_mut()) {
            *s = self.decay * *s + (1.0 - self.decay) * g * g;
            *p -= self.lr * g / (math::sqrt(*s) + self.eps);
        }
    }
}

/// Rescales `grad` so its global L2 norm is at most `max_norm`; returns the pre-clip norm.
pub fn clip_global_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = math::sqrt(grad.iter().map(|g| g * g).sum());
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

/// Bias-corrected exponential moving average.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ema {
    smoothing: f64,
    raw: f64,
    weight: f64,
}

impl Ema {
    pub fn new(smoothing: f64) -> Self {
        Self { smoothing, raw: 0.0, weight: 0.0 }
    }

    pub fn push(&mut self, x: f64) {
        self.raw = self.smoothing * self.raw + (1.0 - self.smoothing) * x;
        self.weight = self.smoothing * self.weight + (1.0 - self.smoothing);
    }

    pub fn value(&self) -> f64 {
        if self.weight == 0.0 {
            0.0
        } else {
            self.raw / self.weight
        }
    }
}

/// One learning-curve row, emitted after every update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Episodes completed so far.
    pub episode_index: usize,
    pub ema_success: f64,
    pub mean_episode_length: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: AgentParams,
    pub curve: Vec<CurvePoint>,
}

/// Everything one episode contributes to an update.
#[derive(Debug, Clone)]
pub struct EpisodeGradient {
    pub grad: AgentParams,
    pub loss: f64,
    pub correct: bool,
    pub steps: usize,
}

/// Rolls out one episode with `params` and backpropagates its A2C loss.
pub fn episode_gradient<E: Environment + ?Sized>(
    env: &mut E,
    params: &AgentParams,
    config: &TrainConfig,
    seed: u64,
) -> Result<EpisodeGradient, TrainError> {
    let space = env.action_space();
    let mut policy = LstmPolicy::new(params, space).recording();
    let (record, trajectory) = run_episode(env, &mut policy, seed)?;
    let trace = policy.take_trace();
    let returns = compute_returns(&trajectory.rewards(), config.gamma);
    let loss = a2c_loss(&trajectory, &returns, space, config);
    let grad = nnet::backward(params, &trace, &loss.output_grads)?;
    Ok(EpisodeGradient { grad, loss: loss.total, correct: record.correct, steps: record.steps })
}

/// Seed of the `index`-th training episode of a run.
pub fn episode_seed(run_seed: u64, index: usize) -> u64 {
    rng::derive_seed(rng::derive_seed(run_seed, stream::EPISODE), index as u64)
}

fn collect_batch<E>(envs: &mut [E], params: &AgentParams, config: &TrainConfig, first: usize, parallel: bool) -> Vec<Result<EpisodeGradient, TrainError>>
where
    E: Environment + Send,
{
    #[cfg(feature = "parallel")]
    if parallel {
        use rayon::prelude::*;
        return envs
            .par_iter_mut()
            .enumerate()
            .map(|(i, env)| episode_gradient(env, params, config, episode_seed(config.seed, first + i)))
            .collect();
    }
    let _ = parallel;
    envs.iter_mut()
        .enumerate()
        .map(|(i, env)| episode_gradient(env, params, config, episode_seed(config.seed, first + i)))
        .collect()
}

/// Trains from a fresh initialization. `make_env` is called `n_envs` times.
pub fn train<E, F>(make_env: F, config: &TrainConfig) -> Result<TrainOutcome, TrainError>
where
    E: Environment + Send,
    F: FnMut() -> E,
{
    train_with(make_env, config, false, |_, _| {})
}

/// [`train`] with an optional rayon fan-out for rollouts and a callback that sees
/// each curve point together with the freshly updated parameters.
///
/// Results are bit-identical with and without `parallel`.
pub fn train_with<E, F, C>(mut make_env: F, config: &TrainConfig, parallel: bool, mut on_update: C) -> Result<TrainOutcome, TrainError>
where
    E: Environment + Send,
    F: FnMut() -> E,
    C: FnMut(&CurvePoint, &AgentParams),
{
    config.validate()?;
    let mut envs: Vec<E> = (0..config.n_envs).map(|_| make_env()).collect();
    let shape = config.network_shape(envs[0].observation_dim(), envs[0].action_space());
    let mut params = AgentParams::init(shape, config.seed);
    let mut opt = RmsProp::new(shape.param_count(), config.lr, config.rmsprop_decay, config.rmsprop_eps);
    let mut ema = Ema::new(config.ema_smoothing);
    let mut curve = Vec::new();
    let mut done = 0;
    let mut grad = AgentParams::zeros(shape);
    while done < config.total_episodes {
        let batch = config.n_envs.min(config.total_episodes - done);
        let results = collect_batch(&mut envs[..batch], &params, config, done, parallel);
        grad.as_mut_slice().iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        let mut steps = 0;
        for r in results {
            let eg = r?;
            grad.add_assign(&eg.grad);
            loss += eg.loss;
            steps += eg.steps;
            ema.push(if eg.correct { 1.0 } else { 0.0 });
        }
        let inv = 1.0 / batch as f64;
        grad.scale(inv);
        loss *= inv;
        done += batch;
        if !loss.is_finite() || !grad.is_finite() {
            return Err(TrainError::Diverged { episode: done, last_good: params });
        }
        clip_global_norm(grad.as_mut_slice(), config.grad_clip_norm);
        let before = params.clone();
        opt.step(params.as_mut_slice(), grad.as_slice());
        if !params.is_finite() {
            return Err(TrainError::Diverged { episode: done, last_good: before });
        }
        let point = CurvePoint { episode_index: done, ema_success: ema.value(), mean_episode_length: steps as f64 * inv, loss };
        on_update(&point, &params);
        curve.push(point);
    }
    Ok(TrainOutcome { params, curve })
}
