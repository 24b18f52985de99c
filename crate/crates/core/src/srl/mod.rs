//! Chain composition as a Markov decision process, solved by a graph-encoded
//! actor-critic that is conditioned on the translated user intent.
//!
//! An episode picks an E-LAM (when more than one is offered), translates and
//! calibrates the prompt into a preference vector, then appends one agent
//! per step. Step rewards combine a type-match flag with preference-weighted
//! min-max desirabilities; the terminal bonus is the subjective QoE of the
//! finished chain minus the E-LAM fee.

pub mod elam;
pub mod env;
pub mod memory;
pub mod policy;
pub mod ppo;
pub mod train;

pub use elam::{default_market, ElamProfile, Translator};
pub use env::{Desirability, EnvConfig, EnvState, EpisodeOutcome, SrlEnv, StepOutcome, NODE_FEATURES};
pub use memory::{calibrate, Calibrated, CalibrationConfig, CalibrationMode, ContextMemory, MemoryConfig, MemoryEntry};
pub use policy::{ActOutput, Forward, Observation, PolicyNet, PolicyShape};
pub use ppo::{
    build_batch, gae, normalize_advantages, ppo_loss, ppo_update, reinforce_loss, reinforce_update, Algorithm, BatchItem,
    LossTerms, PpoConfig, Transition, UpdateStats,
};
pub use train::{
    decode_chain, evaluate_policy, format_chain, greedy_choice, parse_chain, policy_match_experiment, read_srl_log, run_baseline, tail_mean,
    train_srl, write_srl_log, write_srl_log_file, Decoded, EpisodeRecord, MatchStats, PolicyCheckpoint, PromptMix,
    SrlConfig, SrlLogRow, SrlRun, Variant, LOG_HEADER,
};
