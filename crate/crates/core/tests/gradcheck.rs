use physprobe_core::envproto::{Action, ActionSpace, Trajectory, TrajectoryStep};
use physprobe_core::nnet::{self, AgentParams, NetworkShape, PARAM_BLOCKS};
use physprobe_core::rng::{open01, stream_rng, uniform_index, SimRng};
use physprobe_core::trainer::{a2c_loss_with_advantages, TrainConfig};

const H: f64 = 1e-5;
const COORDS_PER_BLOCK: usize = 12;

struct Case {
    params: AgentParams,
    space: ActionSpace,
    observations: Vec<Vec<f64>>,
    actions: Vec<Action>,
    returns: Vec<f64>,
    advantages: Vec<f64>,
}

fn sym(r: &mut SimRng) -> f64 {
    2.0 * open01(r) - 1.0
}

fn make_case(index: u64) -> Case {
    // (obs_dim, n_interact, n_labels) of heavier, towers direct and towers fist
    let envs = [(4, 4, 4), (15, 20, 5), (17, 4, 5)];
    let (obs_dim, n_interact, n_labels) = envs[index as usize % envs.len()];
    let space = ActionSpace { n_interact, n_labels };
    let mut shape = NetworkShape::new(obs_dim, space.size());
    if index % 2 == 1 {
        shape = NetworkShape::identity_embedding(obs_dim, space.size());
    }
    let mut r = stream_rng(index, 77);
    let mut params = AgentParams::init(shape, index);
    for p in params.as_mut_slice() {
        *p += 0.1 * sym(&mut r);
    }
    let t = 6;
    let observations = (0..t).map(|_| (0..obs_dim).map(|_| 2.0 * sym(&mut r)).collect()).collect();
    let mut actions: Vec<Action> = (0..t - 1).map(|_| Action::Interact(uniform_index(&mut r, n_interact))).collect();
    actions.push(Action::Label(uniform_index(&mut r, n_labels)));
    let returns = (0..t).map(|_| sym(&mut r)).collect();
    let advantages = (0..t).map(|_| sym(&mut r)).collect();
    Case { params, space, observations, actions, returns, advantages }
}

fn loss_and_grad(case: &Case, params: &AgentParams, cfg: &TrainConfig) -> (f64, AgentParams) {
    let (outputs, trace, _) = nnet::forward(params, &case.observations).unwrap();
    let steps = outputs
        .into_iter()
        .zip(&case.observations)
        .zip(&case.actions)
        .map(|((o, obs), &a)| TrajectoryStep { observation: obs.clone(), action: a, reward: 0.0, logits: o.logits, value: o.value })
        .collect();
    let traj = Trajectory { steps };
    let loss = a2c_loss_with_advantages(&traj, &case.returns, &case.advantages, case.space, cfg);
    let grad = nnet::backward(params, &trace, &loss.output_grads).unwrap();
    (loss.total, grad)
}

#[test]
fn bptt_matches_central_differences() {
    let cfg = TrainConfig::default();
    let mut worst: f64 = 0.0;
    for index in 0..20 {
        let case = make_case(index);
        let (_, grad) = loss_and_grad(&case, &case.params, &cfg);
        let mut pick = stream_rng(index, 78);
        for name in PARAM_BLOCKS {
            let Some(range) = case.params.block_range(name) else { continue };
            if range.is_empty() {
                continue;
            }
            for _ in 0..COORDS_PER_BLOCK {
                let i = range.start + uniform_index(&mut pick, range.len());
                let mut plus = case.params.clone();
                plus.as_mut_slice()[i] += H;
                let mut minus = case.params.clone();
                minus.as_mut_slice()[i] -= H;
                let numeric = (loss_and_grad(&case, &plus, &cfg).0 - loss_and_grad(&case, &minus, &cfg).0) / (2.0 * H);
                let analytic = grad.as_slice()[i];
                let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
                assert!(rel < 1e-4, "case {index} block {name} coord {i}: analytic {analytic} numeric {numeric} rel {rel}");
                worst = worst.max(rel);
            }
        }
    }
    println!("max relative error {worst:.3e}");
}

#[test]
fn scaled_loss_scales_gradient() {
    let case = make_case(3);
    let base = TrainConfig::default();
    let (_, g1) = loss_and_grad(&case, &case.params, &base);
    let mut doubled = make_case(3);
    doubled.advantages.iter_mut().for_each(|a| *a *= 2.0);
    let cfg2 = TrainConfig { value_coef: 2.0 * base.value_coef, entropy_coef: 2.0 * base.entropy_coef, ..base };
    let (_, g2) = loss_and_grad(&doubled, &doubled.params, &cfg2);
    for (a, b) in g1.as_slice().iter().zip(g2.as_slice()) {
        assert!((2.0 * a - b).abs() <= 1e-12 * (1.0 + a.abs()));
    }
}
