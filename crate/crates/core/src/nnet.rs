//! Recurrent policy/value network: feature embedding → LSTM → softmax policy
//! head and scalar value head, with exact backpropagation through time.
//!
//! All weights live in one flat `f64` buffer ([`AgentParams`]); gradients use
//! the same layout so the optimizer can treat them as plain vectors.
//!
//! Per step, with `x` the embedded observation and `[x; h]` their concatenation:
//!
//! ```text
//! e      = tanh(W_e o + b_e)            (skipped when embed_dim == 0)
//! z      = W [e; h_prev] + b            gate blocks ordered i, f, g, o
//! c      = σ(z_f) ⊙ c_prev + σ(z_i) ⊙ tanh(z_g)
//! h      = σ(z_o) ⊙ tanh(c)
//! logits = W_π h + b_π
//! value  = w_v · h + b_v
//! ```

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envproto::{Action, ActionSpace, Decision, Policy};
use crate::math;
use crate::rng::{self, stream, SimRng};

pub const HIDDEN: usize = 100;
pub const EMBED_DIM: usize = 64;
pub const FORGET_BIAS: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkShape {
    pub obs_dim: usize,
    pub n_actions: usize,
    /// Width of the tanh embedding; 0 feeds observations straight into the LSTM.
    pub embed_dim: usize,
    pub hidden: usize,
}

impl NetworkShape {
    pub fn new(obs_dim: usize, n_actions: usize) -> Self {
        Self { obs_dim, n_actions, embed_dim: EMBED_DIM, hidden: HIDDEN }
    }

    pub fn identity_embedding(obs_dim: usize, n_actions: usize) -> Self {
        Self { obs_dim, n_actions, embed_dim: 0, hidden: HIDDEN }
    }

    /// Width of the LSTM input.
    pub fn lstm_input(&self) -> usize {
        if self.embed_dim == 0 {
            self.obs_dim
        } else {
            self.embed_dim
        }
    }

    fn layout(&self) -> Layout {
        let mut at = 0;
        let mut take = |n: usize| {
            let r = at..at + n;
            at += n;
            r
        };
        let h = self.hidden;
        let cat = self.lstm_input() + h;
        let embed_w = take(self.embed_dim * self.obs_dim);
        let embed_b = take(self.embed_dim);
        let gate_w = take(4 * h * cat);
        let gate_b = take(4 * h);
        let policy_w = take(self.n_actions * h);
        let policy_b = take(self.n_actions);
        let value_w = take(h);
        let value_b = take(1);
        Layout { embed_w, embed_b, gate_w, gate_b, policy_w, policy_b, value_w, value_b, total: at }
    }

    pub fn param_count(&self) -> usize {
        self.layout().total
    }
}

#[derive(Debug, Clone)]
struct Layout {
    embed_w: core::ops::Range<usize>,
    embed_b: core::ops::Range<usize>,
    gate_w: core::ops::Range<usize>,
    gate_b: core::ops::Range<usize>,
    policy_w: core::ops::Range<usize>,
    policy_b: core::ops::Range<usize>,
    value_w: core::ops::Range<usize>,
    value_b: core::ops::Range<usize>,
    total: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum NetError {
    #[error("parameter vector has {got} entries, shape needs {expected}")]
    ParamCount { expected: usize, got: usize },
    #[error("observation has {got} entries, network expects {expected}")]
    ObservationDim { expected: usize, got: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("empty observation sequence")]
    EmptySequence,
}

/// Every network weight in one flat buffer. Also used to hold gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentParams {
    shape: NetworkShape,
    data: Vec<f64>,
}

/// Named parameter blocks, used by gradient checks and diagnostics.
pub const PARAM_BLOCKS: [&str; 8] =
    ["embed_w", "embed_b", "gate_w", "gate_b", "policy_w", "policy_b", "value_w", "value_b"];

impl AgentParams {
    pub fn zeros(shape: NetworkShape) -> Self {
        Self { data: vec![0.0; shape.param_count()], shape }
    }

    /// Uniform(±1/√fan_in) weights, zero biases except forget gates at +1.
    pub fn init(shape: NetworkShape, seed: u64) -> Self {
        let mut rng = rng::stream_rng(seed, stream::INIT);
        let mut p = Self::zeros(shape);
        let l = shape.layout();
        let fill = |data: &mut [f64], fan_in: usize, rng: &mut SimRng| {
            let bound = 1.0 / math::sqrt(fan_in as f64);
            for w in data {
                *w = rng.random_range(-bound..bound);
            }
        };
        fill(&mut p.data[l.embed_w.clone()], shape.obs_dim, &mut rng);
        fill(&mut p.data[l.gate_w.clone()], shape.lstm_input() + shape.hidden, &mut rng);
        fill(&mut p.data[l.policy_w.clone()], shape.hidden, &mut rng);
        fill(&mut p.data[l.value_w.clone()], shape.hidden, &mut rng);
        let h = shape.hidden;
        for b in &mut p.data[l.gate_b.start + h..l.gate_b.start + 2 * h] {
            *b = FORGET_BIAS;
        }
        p
    }

    pub fn from_flat(shape: NetworkShape, data: Vec<f64>) -> Result<Self, NetError> {
        let expected = shape.param_count();
        if data.len() != expected {
            return Err(NetError::ParamCount { expected, got: data.len() });
        }
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> NetworkShape {
        self.shape
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Flat index range of the named block (see [`PARAM_BLOCKS`]).
    pub fn block_range(&self, name: &str) -> Option<core::ops::Range<usize>> {
        let l = self.shape.layout();
        Some(match name {
            "embed_w" => l.embed_w,
            "embed_b" => l.embed_b,
            "gate_w" => l.gate_w,
            "gate_b" => l.gate_b,
            "policy_w" => l.policy_w,
            "policy_b" => l.policy_b,
            "value_w" => l.value_w,
            "value_b" => l.value_b,
            _ => return None,
        })
    }

    pub fn norm(&self) -> f64 {
        math::sqrt(self.data.iter().map(|x| x * x).sum())
    }

    pub fn scale(&mut self, s: f64) {
        for x in &mut self.data {
            *x *= s;
        }
    }

    pub fn add_assign(&mut self, other: &AgentParams) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HiddenState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl HiddenState {
    pub fn zeros(hidden: usize) -> Self {
        Self { h: vec![0.0; hidden], c: vec![0.0; hidden] }
    }
}

/// Activations of one step, kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCache {
    obs: Vec<f64>,
    /// `[x; h_prev]`
    concat: Vec<f64>,
    /// post-nonlinearity gates, ordered i, f, g, o
    gates: Vec<f64>,
    c_prev: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
}

/// Forward activations for a whole episode.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ForwardTrace {
    pub steps: Vec<StepCache>,
}

impl ForwardTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub logits: Vec<f64>,
    pub value: f64,
}

/// Dot product with four independent partial sums.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let chunks = n / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..n {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// One recurrent step. Updates `state` in place and returns the step's cache.
pub fn forward_step(params: &AgentParams, state: &mut HiddenState, obs: &[f64]) -> Result<(StepOutput, StepCache), NetError> {
    let shape = params.shape;
    if obs.len() != shape.obs_dim {
        return Err(NetError::ObservationDim { expected: shape.obs_dim, got: obs.len() });
    }
    let l = shape.layout();
    let d = &params.data;
    let hdim = shape.hidden;
    let din = shape.lstm_input();
    let cat_len = din + hdim;

    let mut concat = Vec::with_capacity(cat_len);
    if shape.embed_dim == 0 {
        concat.extend_from_slice(obs);
    } else {
        let w = &d[l.embed_w.clone()];
        let b = &d[l.embed_b.clone()];
        for k in 0..shape.embed_dim {
            concat.push(math::tanh(dot(&w[k * shape.obs_dim..(k + 1) * shape.obs_dim], obs) + b[k]));
        }
    }
    concat.extend_from_slice(&state.h);

    let w = &d[l.gate_w.clone()];
    let b = &d[l.gate_b.clone()];
    let mut gates = vec![0.0; 4 * hdim];
    for (r, g) in gates.iter_mut().enumerate() {
        let z = dot(&w[r * cat_len..(r + 1) * cat_len], &concat) + b[r];
        *g = if (2 * hdim..3 * hdim).contains(&r) { math::tanh(z) } else { math::sigmoid(z) };
    }
    let c_prev = core::mem::take(&mut state.c);
    let mut c = vec![0.0; hdim];
    let mut tanh_c = vec![0.0; hdim];
    let mut h = vec![0.0; hdim];
    for j in 0..hdim {
        let (i, f, g, o) = (gates[j], gates[hdim + j], gates[2 * hdim + j], gates[3 * hdim + j]);
        c[j] = f * c_prev[j] + i * g;
        tanh_c[j] = math::tanh(c[j]);
        h[j] = o * tanh_c[j];
    }

    let pw = &d[l.policy_w.clone()];
    let pb = &d[l.policy_b.clone()];
    let logits: Vec<f64> = (0..shape.n_actions).map(|a| dot(&pw[a * hdim..(a + 1) * hdim], &h) + pb[a]).collect();
    let value = dot(&d[l.value_w.clone()], &h) + d[l.value_b.start];

    if !value.is_finite() || logits.iter().any(|x| !x.is_finite()) {
        return Err(NetError::NonFinite("network output"));
    }
    state.c = c;
    state.h = h.clone();
    let cache = StepCache { obs: obs.to_vec(), concat, gates, c_prev, tanh_c, h };
    Ok((StepOutput { logits, value }, cache))
}

/// Runs a whole observation sequence from a zero hidden state.
pub fn forward(params: &AgentParams, observations: &[Vec<f64>]) -> Result<(Vec<StepOutput>, ForwardTrace, HiddenState), NetError> {
    if observations.is_empty() {
        return Err(NetError::EmptySequence);
    }
    let mut state = HiddenState::zeros(params.shape.hidden);
    let mut outputs = Vec::with_capacity(observations.len());
    let mut trace = ForwardTrace::default();
    for obs in observations {
        let (out, cache) = forward_step(params, &mut state, obs)?;
        outputs.push(out);
        trace.steps.push(cache);
    }
    Ok((outputs, trace, state))
}

/// Loss gradients with respect to each step's network outputs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OutputGrads {
    pub logits: Vec<Vec<f64>>,
    pub values: Vec<f64>,
}

/// Exact BPTT through the full trace; accumulates into `grad` (same shape as `params`).
pub fn backward_into(params: &AgentParams, trace: &ForwardTrace, out_grads: &OutputGrads, grad: &mut AgentParams) -> Result<(), NetError> {
    let shape = params.shape;
    let l = shape.layout();
    let d = &params.data;
    let hdim = shape.hidden;
    let din = shape.lstm_input();
    let cat_len = din + hdim;
    let g = &mut grad.data;

    let mut dh_next = vec![0.0; hdim];
    let mut dc_next = vec![0.0; hdim];
    let mut dz = vec![0.0; 4 * hdim];
    let mut dcat = vec![0.0; cat_len];
    let mut dh = vec![0.0; hdim];

    for (t, cache) in trace.steps.iter().enumerate().rev() {
        let dlogits = &out_grads.logits[t];
        let dvalue = out_grads.values[t];

        dh.copy_from_slice(&dh_next);
        {
            let pw = &d[l.policy_w.clone()];
            for (a, &dl) in dlogits.iter().enumerate() {
                if dl != 0.0 {
                    axpy(&mut dh, dl, &pw[a * hdim..(a + 1) * hdim]);
                    axpy(&mut g[l.policy_w.start + a * hdim..l.policy_w.start + (a + 1) * hdim], dl, &cache.h);
                }
                g[l.policy_b.start + a] += dl;
            }
            axpy(&mut dh, dvalue, &d[l.value_w.clone()]);
            axpy(&mut g[l.value_w.clone()], dvalue, &cache.h);
            g[l.value_b.start] += dvalue;
        }

        for j in 0..hdim {
            let (i, f, gg, o) = (cache.gates[j], cache.gates[hdim + j], cache.gates[2 * hdim + j], cache.gates[3 * hdim + j]);
            let tc = cache.tanh_c[j];
            let d_o = dh[j] * tc;
            let dc = dh[j] * o * (1.0 - tc * tc) + dc_next[j];
            dz[j] = dc * gg * i * (1.0 - i);
            dz[hdim + j] = dc * cache.c_prev[j] * f * (1.0 - f);
            dz[2 * hdim + j] = dc * i * (1.0 - gg * gg);
            dz[3 * hdim + j] = d_o * o * (1.0 - o);
            dc_next[j] = dc * f;
        }

        dcat.iter_mut().for_each(|x| *x = 0.0);
        let w = &d[l.gate_w.clone()];
        for (r, &dzr) in dz.iter().enumerate() {
            if dzr == 0.0 {
                continue;
            }
            axpy(&mut dcat, dzr, &w[r * cat_len..(r + 1) * cat_len]);
            let row = l.gate_w.start + r * cat_len;
            axpy(&mut g[row..row + cat_len], dzr, &cache.concat);
            g[l.gate_b.start + r] += dzr;
        }
        dh_next.copy_from_slice(&dcat[din..]);

        if shape.embed_dim > 0 {
            for k in 0..shape.embed_dim {
                let e = cache.concat[k];
                let dpre = dcat[k] * (1.0 - e * e);
                if dpre == 0.0 {
                    continue;
                }
                let row = l.embed_w.start + k * shape.obs_dim;
                axpy(&mut g[row..row + shape.obs_dim], dpre, &cache.obs);
                g[l.embed_b.start + k] += dpre;
            }
        }
    }
    if g.iter().any(|x| !x.is_finite()) {
        return Err(NetError::NonFinite("gradient"));
    }
    Ok(())
}

pub fn backward(params: &AgentParams, trace: &ForwardTrace, out_grads: &OutputGrads) -> Result<AgentParams, NetError> {
    let mut grad = AgentParams::zeros(params.shape);
    backward_into(params, trace, out_grads, &mut grad)?;
    Ok(grad)
}

/// Samples an index from `softmax(logits)`.
pub fn sample_index<R: Rng + ?Sized>(logits: &[f64], rng: &mut R) -> usize {
    let probs = math::softmax(logits);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left u beyond the last partial sum
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

pub fn greedy_index(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in logits.iter().enumerate() {
        if x > logits[best] {
            best = i;
        }
    }
    best
}

pub fn sample_action<R: Rng + ?Sized>(logits: &[f64], space: ActionSpace, rng: &mut R) -> Action {
    space.decode(sample_index(logits, rng))
}

pub fn greedy_action(logits: &[f64], space: ActionSpace) -> Action {
    space.decode(greedy_index(logits))
}

/// Action selection rule used by [`LstmPolicy`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    Sample,
    Greedy,
}

/// The network acting as a [`Policy`]. Optionally records the forward trace
/// of the current episode for training.
#[derive(Debug, Clone)]
pub struct LstmPolicy<'a> {
    params: &'a AgentParams,
    space: ActionSpace,
    state: HiddenState,
    rng: SimRng,
    selection: Selection,
    record: bool,
    trace: ForwardTrace,
}

impl<'a> LstmPolicy<'a> {
    pub fn new(params: &'a AgentParams, space: ActionSpace) -> Self {
        debug_assert_eq!(params.shape.n_actions, space.size());
        Self {
            params,
            space,
            state: HiddenState::zeros(params.shape.hidden),
            rng: rng::stream_rng(0, stream::POLICY),
            selection: Selection::Sample,
            record: false,
            trace: ForwardTrace::default(),
        }
    }

    pub fn with_selection(mut self, selection: Selection) -> Self {
        self.selection = selection;
        self
    }

    pub fn recording(mut self) -> Self {
        self.record = true;
        self
    }

    pub fn take_trace(&mut self) -> ForwardTrace {
        core::mem::take(&mut self.trace)
    }
}

impl Policy for LstmPolicy<'_> {
    fn begin_episode(&mut self, seed: u64) {
        self.state = HiddenState::zeros(self.params.shape.hidden);
        self.rng = rng::stream_rng(seed, stream::POLICY);
        self.trace.steps.clear();
    }

    fn act(&mut self, observation: &[f64]) -> Decision {
        let (out, cache) = forward_step(self.params, &mut self.state, observation)
            .unwrap_or_else(|e| panic!("policy network fault: {e}"));
        if self.record {
            self.trace.steps.push(cache);
        }
        let action = match self.selection {
            Selection::Sample => sample_action(&out.logits, self.space, &mut self.rng),
            Selection::Greedy => greedy_action(&out.logits, self.space),
        };
        Decision { action, logits: out.logits, value: out.value }
    }
}
