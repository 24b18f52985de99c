use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gensfc::harness::{
    brute_force_optimum, gen_intents, gen_scenario, run_baselines, run_distill, run_eval, run_train, save_records,
    summarize_dir, write_intent_set, ExperimentConfig, RunRecord, VariantSelection, World,
};
use gensfc::intent::Grammar;
use gensfc::{Error, PreferenceVector};

#[derive(Parser)]
#[command(name = "gensfc", version, about = "Intent-aware GenSFC composition experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment configuration (JSON); defaults apply to missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed: replaces the scenario, dataset and run seeds.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `out_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write `scenario.json`.
    GenScenario(Common),
    /// Write demo, training and test datasets under `intents/`.
    GenIntents(Common),
    /// Weighted and unweighted distillation against the even baseline.
    Distill(Common),
    /// Train the learned variants and save their checkpoints.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_variant)]
        variant: Option<VariantSelection>,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Replay saved checkpoints greedily.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_variant)]
        variant: Option<VariantSelection>,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Random and greedy baselines.
    Baselines {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_variant)]
        variant: Option<VariantSelection>,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Exhaustive optimum over chains and E-LAM fees for one preference.
    BruteForce {
        #[command(flatten)]
        common: Common,
        /// Comma-separated weights for capability, BER, latency, outage.
        #[arg(long, default_value = "0.25,0.25,0.25,0.25")]
        preference: String,
    },
    /// Check every record against its rows and write summary tables.
    Summarize(Common),
}

fn parse_variant(s: &str) -> Result<VariantSelection, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| format!("unknown variant {s:?}"))
}

fn load(common: &Common) -> gensfc::Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.scenario.seed = seed;
        cfg.intents.seed = seed;
        cfg.seeds = vec![seed];
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn overrides(cfg: &mut ExperimentConfig, variant: Option<VariantSelection>, episodes: Option<usize>) {
    if let Some(v) = variant {
        cfg.variant = v;
    }
    if let Some(e) = episodes {
        cfg.episodes = e;
    }
}

fn finish(cfg: &ExperimentConfig, records: &[RunRecord]) -> gensfc::Result<()> {
    save_records(&cfg.out_dir, records)?;
    for r in records {
        let headline = ["final_reward_episode", "test_mse"]
            .iter()
            .find_map(|k| r.summary.get(*k).map(|v| format!("{k}={v:.6}")))
            .unwrap_or_default();
        println!("{} {} seed={} {} {}", r.kind.as_str(), r.variant, r.seed, r.rows_file, headline);
    }
    Ok(())
}

fn write(path: &Path, text: &str) -> gensfc::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn run(cli: Cli) -> gensfc::Result<()> {
    match cli.command {
        Command::GenScenario(common) => {
            let cfg = load(&common)?;
            let scenario = gen_scenario(&cfg.scenario)?;
            let path = cfg.out_dir.join("scenario.json");
            write(&path, &scenario.to_json()?)?;
            println!("{}", path.display());
        }
        Command::GenIntents(common) => {
            let cfg = load(&common)?;
            let set = gen_intents(&Grammar::default(), &cfg.intents)?;
            let dir = cfg.out_dir.join("intents");
            write_intent_set(&dir, &set)?;
            println!("{}", dir.display());
        }
        Command::Distill(common) => {
            let cfg = load(&common)?;
            let world = World::build(&cfg)?;
            finish(&cfg, &run_distill(&cfg, &world)?)?;
        }
        Command::Train { common, variant, episodes } => {
            let mut cfg = load(&common)?;
            overrides(&mut cfg, variant, episodes);
            let world = World::build(&cfg)?;
            finish(&cfg, &run_train(&cfg, &world)?)?;
        }
        Command::Eval { common, variant, episodes } => {
            let mut cfg = load(&common)?;
            overrides(&mut cfg, variant, episodes);
            let world = World::build(&cfg)?;
            finish(&cfg, &run_eval(&cfg, &world)?)?;
        }
        Command::Baselines { common, variant, episodes } => {
            let mut cfg = load(&common)?;
            overrides(&mut cfg, variant, episodes);
            let world = World::build(&cfg)?;
            finish(&cfg, &run_baselines(&cfg, &world)?)?;
        }
        Command::BruteForce { common, preference } => {
            let cfg = load(&common)?;
            let parts: Vec<f64> = preference
                .split(',')
                .map(|p| p.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| Error::Config(format!("bad preference {preference:?}: {e}")))?;
            let weights: [f64; 4] = parts
                .try_into()
                .map_err(|_| Error::Config("preference needs exactly four weights".into()))?;
            let s = PreferenceVector::new(weights).map_err(|e| Error::Config(e.to_string()))?;
            let scenario = gen_scenario(&cfg.scenario)?;
            let best = brute_force_optimum(&scenario, &s, &cfg.market.fees())?;
            let text = serde_json::to_string_pretty(&best)?;
            write(&cfg.out_dir.join("brute_force.json"), &text)?;
            println!("{text}");
        }
        Command::Summarize(common) => {
            let cfg = load(&common)?;
            let rows = summarize_dir(&cfg.out_dir)?;
            println!("{} summary rows written to {}", rows.len(), cfg.out_dir.display());
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Json(_) => 2,
        Error::Training { .. } | Error::Domain(_) | Error::Stability { .. } => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
