use physprobe_core::envproto::{run_episode, Action, ActionSpace, Environment, Policy, RandomizedInteractions};
use physprobe_core::heavier::{self, HeavierConfig, HeavierEnv};
use physprobe_core::math::{log_sum_exp, softmax};
use physprobe_core::nnet::{AgentParams, LstmPolicy, NetworkShape};
use physprobe_core::physx::{TowerWorld, VerticalWorld, PHYSICS_DT};
use physprobe_core::rng::stream_rng;
use physprobe_core::towers::{self, Actuator, TowersConfig, TowersEnv};
use physprobe_core::trainer::{self, clip_global_norm, compute_returns, entropy, TrainConfig};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn softmax_is_a_distribution(logits in prop::collection::vec(-50.0f64..50.0, 1..30)) {
        let p = softmax(&logits);
        prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_ignores_logit_shift(logits in prop::collection::vec(-20.0f64..20.0, 1..30), c in -100.0f64..100.0) {
        let shifted: Vec<f64> = logits.iter().map(|l| l + c).collect();
        for (a, b) in softmax(&logits).iter().zip(softmax(&shifted)) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        prop_assert!((entropy(&logits) - entropy(&shifted)).abs() < 1e-9);
        prop_assert!((log_sum_exp(&shifted) - log_sum_exp(&logits) - c).abs() < 1e-9);
    }

    #[test]
    fn entropy_bounded_by_log_n(logits in prop::collection::vec(-20.0f64..20.0, 1..30)) {
        let h = entropy(&logits);
        prop_assert!(h >= -1e-12 && h <= (logits.len() as f64).ln() + 1e-12);
    }

    #[test]
    fn clipped_norm_never_exceeds_limit(g in prop::collection::vec(-1e3f64..1e3, 1..200), limit in 0.1f64..100.0) {
        let mut g = g;
        let before = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        let reported = clip_global_norm(&mut g, limit);
        let after = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!((reported - before).abs() <= 1e-9 * before.max(1.0));
        prop_assert!(after <= limit * (1.0 + 1e-12));
        if before <= limit {
            prop_assert!((after - before).abs() < 1e-12);
        }
    }

    #[test]
    fn returns_satisfy_bellman(rewards in prop::collection::vec(-1.0f64..1.0, 1..40), gamma in 0.0f64..1.0) {
        let r = compute_returns(&rewards, gamma);
        let n = rewards.len();
        prop_assert_eq!(r[n - 1], rewards[n - 1]);
        for t in 0..n - 1 {
            prop_assert!((r[t] - rewards[t] - gamma * r[t + 1]).abs() < 1e-12);
        }
    }

    #[test]
    fn vertical_blocks_never_sink(masses in prop::collection::vec(0.5f64..2.0, 1..6), pushes in prop::collection::vec(0usize..6, 0..40)) {
        let mut w = VerticalWorld::at_rest(&masses);
        for &p in &pushes {
            let mut f = vec![0.0; masses.len()];
            if p < masses.len() {
                f[p] = 20.0;
            }
            w.step(&f, PHYSICS_DT).unwrap();
            prop_assert!(w.heights().iter().all(|&z| z >= 0.0));
        }
    }

    #[test]
    fn partitions_cover_the_tower(seed in any::<u64>()) {
        let p = towers::sample_partition(&mut stream_rng(seed, 0));
        let ranges = p.ranges();
        prop_assert_eq!(ranges.len(), p.k);
        prop_assert_eq!(ranges[0].start, 0);
        prop_assert_eq!(ranges.last().unwrap().end, towers::N_BLOCKS);
        prop_assert!(ranges.windows(2).all(|w| w[0].end == w[1].start));
        let w = TowerWorld::stacked(&ranges, None);
        prop_assert_eq!(towers::count_clusters(&w.block_positions(), towers::CLUSTER_THRESHOLD), 1);
    }

    #[test]
    fn heavier_answer_is_the_heaviest(seed in any::<u64>(), beta in 1.0f64..12.0) {
        let m = heavier::sample_masses(beta, &mut stream_rng(seed, 0));
        let h = m.heaviest();
        prop_assert!(m.masses.iter().all(|&x| x <= m.masses[h]));
        prop_assert!(m.masses.iter().all(|&x| (heavier::MASS_MIN..=heavier::MASS_MIN + heavier::MASS_SPAN).contains(&x)));
        prop_assert!((0.0..=1.0).contains(&m.mass_gap));
    }

    #[test]
    fn randomized_wrapper_keeps_labels(j in 0usize..5, seed in any::<u64>()) {
        struct Label(usize);
        impl Policy for Label {
            fn begin_episode(&mut self, _: u64) {}
            fn act(&mut self, _: &[f64]) -> physprobe_core::envproto::Decision {
                physprobe_core::envproto::Decision::scripted(Action::Label(self.0))
            }
        }
        let mut w = RandomizedInteractions::new(Label(j), ActionSpace { n_interact: 20, n_labels: 5 });
        w.begin_episode(seed);
        prop_assert_eq!(w.act(&[]).action, Action::Label(j));
    }
}

fn run_many<E: Environment>(env: &mut E, params: &AgentParams, n: u64) -> (usize, usize) {
    let mut policy = LstmPolicy::new(params, env.action_space());
    let mut correct = 0;
    let mut labeled = 0;
    for seed in 0..n {
        let (rec, _) = run_episode(env, &mut policy, seed).unwrap();
        labeled += rec.label.is_some() as usize;
        correct += rec.correct as usize;
    }
    (correct, labeled)
}

#[test]
fn untrained_agents_are_at_chance() {
    let mut h = HeavierEnv::new(HeavierConfig::default()).unwrap();
    let params = AgentParams::init(NetworkShape::new(h.observation_dim(), h.action_space().size()), 3);
    let (c, n) = run_many(&mut h, &params, 1500);
    let p = c as f64 / n as f64;
    assert!((p - 0.25).abs() < 3.0 * (0.25 * 0.75 / n as f64).sqrt(), "heavier {p}");

    let mut t = TowersEnv::new(TowersConfig::with_actuator(Actuator::Direct)).unwrap();
    let params = AgentParams::init(NetworkShape::new(t.observation_dim(), t.action_space().size()), 3);
    let (c, n) = run_many(&mut t, &params, 1500);
    let p = c as f64 / n as f64;
    assert!((p - 0.2).abs() < 3.0 * (0.2 * 0.8 / n as f64).sqrt(), "towers {p}");
}

fn short_config() -> TrainConfig {
    TrainConfig { total_episodes: 64, seed: 5, ..TrainConfig::default() }
}

#[test]
fn training_is_deterministic() {
    let cfg = short_config();
    let make = || HeavierEnv::new(HeavierConfig::with_beta(3.0)).unwrap();
    let a = trainer::train(make, &cfg).unwrap();
    let b = trainer::train(make, &cfg).unwrap();
    assert_eq!(a.params.as_slice(), b.params.as_slice());
    assert_eq!(a.curve, b.curve);
}

#[cfg(feature = "parallel")]
#[test]
fn parallel_rollouts_match_serial() {
    let cfg = short_config();
    let make = || TowersEnv::new(TowersConfig::with_actuator(Actuator::Fist)).unwrap();
    let serial = trainer::train_with(make, &cfg, false, |_, _| {}).unwrap();
    let parallel = trainer::train_with(make, &cfg, true, |_, _| {}).unwrap();
    assert_eq!(serial.params.as_slice(), parallel.params.as_slice());
    assert_eq!(serial.curve, parallel.curve);
}
