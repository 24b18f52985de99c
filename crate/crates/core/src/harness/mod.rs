//! Scenario and dataset generation, experiment orchestration and the
//! exhaustive-search optimality oracle.

pub mod brute;
pub mod experiments;
pub mod intents;
pub mod run;
pub mod scenario;

pub use brute::{brute_force_optimum, feasible_chains, BruteForceResult, MAX_CHAINS};
pub use experiments::{
    calibration_ablation, distill_benchmark, farthest_application, matching_experiment, optimality_gap, AblationReport,
    DistillCell, GapReport, MatchReport,
};
pub use intents::{gen_intents, read_intent_set, write_intent_set, AppIntents, IntentConfig, IntentSet};
pub use run::{
    build_market, export_summary, git_blob_hash, load_records, run_baselines, run_distill, run_eval, run_experiment,
    run_train, save_records, summarize_dir, summarize_distill_rows, summarize_srl_rows, write_summary, ExperimentConfig,
    MarketConfig, RunKind, RunRecord, SummaryRow, VariantSelection, World, RECORDS_FILE, SUMMARY_HEADER,
};
pub use scenario::{gen_scenario, Scenario, ScenarioConfig, Topology};
