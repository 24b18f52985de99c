//! Agentic network model and closed-form QoE mathematics.

pub mod des;
mod model;
mod network;

pub use des::{mg1_des_oracle, mg1_des_run, DesRun};
pub use model::*;
pub use network::{AgentSpec, AgenticNetwork, GenSfc, LinkSpec, RequestTemplate, ScalingConstants};

#[cfg(test)]
pub(crate) use network::fixtures;
