//! Interactive physics-question environments and a recurrent actor-critic agent
//! that learns to gather information before answering.
//!
//! Two environments pose a question that can only be answered by interacting
//! with a small physical scene:
//!
//! * [`heavier`]: four vertically constrained blocks with hidden masses; which
//!   one is heaviest?
//! * [`towers`]: a five-block tower bolted into hidden rigid bodies; how many
//!   bodies are there?
//!
//! Episodes follow the interact/label/reward protocol in [`envproto`]. The agent
//! ([`nnet`]) is an LSTM policy/value network trained with synchronous advantage
//! actor-critic ([`trainer`]). [`oracle`] holds scripted bandit-style baselines
//! and [`evalkit`] the behavioral analyses.
//!
//! The crate is `no_std` with `alloc`; the `std` feature only adds
//! `std::error::Error` impls, and `parallel` fans rollouts out over rayon.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod envproto;
pub mod evalkit;
pub mod heavier;
pub mod math;
pub mod nnet;
pub mod oracle;
pub mod physx;
pub mod rng;
pub mod towers;
pub mod trainer;

pub use envproto::{Action, EpisodeConfig, EpisodeRecord, Environment, Policy, StepResult, Termination};
pub use heavier::{HeavierConfig, HeavierEnv};
pub use nnet::{AgentParams, NetworkShape};
pub use towers::{Actuator, TowersConfig, TowersEnv};
pub use trainer::TrainConfig;
