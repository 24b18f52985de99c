//! Intent-aware composition of generative service function chains.
//!
//! The crate is organised bottom-up:
//!
//! - [`qoe`]: the agent network, closed-form QoE factors and a queueing oracle.
//! - [`intent`]: synthetic intents, text embedding and preference dataset construction.
//! - [`nn`]: a small dense/GCN kernel with analytic gradients.
//! - [`distill`]: the student intent translator and weighted pairwise distillation.
//! - [`srl`]: the chain-composition MDP, graph-encoded actor-critic and baselines.
//! - [`harness`]: configuration, scenario generation, experiments and persistence.

pub mod distill;
pub mod error;
pub mod harness;
pub mod intent;
pub mod nn;
pub mod preference;
pub mod qoe;
pub mod seed;
pub mod srl;

pub use error::{Error, Result};
pub use preference::{angular_distance, PreferenceVector, OMEGA_MIN};
pub use qoe::{AgenticNetwork, GenSfc, QoeBreakdown, RequestTemplate};
