//! Experiment protocols behind the headline comparisons: distillation
//! ordering, optimality gap, intent-policy matching and the calibration
//! ablation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distill::{evaluate, even_baseline_metrics, train_distill, DistillConfig};
use crate::error::{Error, Result};
use crate::intent::{Grammar, IntentSample};
use crate::preference::{angular_distance, PreferenceVector};
use crate::srl::{
    decode_chain, policy_match_experiment, train_srl, MatchStats, PolicyNet, PromptMix, SrlEnv, SrlLogRow, Variant,
};

use super::brute::brute_force_optimum;
use super::intents::{gen_intents, IntentConfig};
use super::run::{build_market, ExperimentConfig, World};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillCell {
    pub seed: u64,
    pub application: u32,
    pub weighted: f64,
    pub unweighted: f64,
    pub even: f64,
    /// Weighted-student test MSE per training-set size with every prompt
    /// decoded (`p_min = 0`); small sets rarely clear the confidence gate.
    pub by_size: Vec<(usize, f64)>,
    /// Failure rate at the configured `p_min` per training-set size.
    pub failures_by_size: Vec<(usize, f64)>,
}

/// Test MSE of the weighted and unweighted students and the even predictor
/// for every (seed, application); the intent datasets are regenerated per
/// seed. Each size in `sizes` trains on that prefix of the training set.
pub fn distill_benchmark(intents: &IntentConfig, distill: &DistillConfig, seeds: &[u64], sizes: &[usize]) -> Result<Vec<DistillCell>> {
    let grammar = Grammar::default();
    let mut cells = Vec::new();
    for &seed in seeds {
        let set = gen_intents(&grammar, &IntentConfig { seed, ..intents.clone() })?;
        let part: Vec<DistillCell> = set
            .apps
            .par_iter()
            .map(|app| -> Result<DistillCell> {
                let dc = DistillConfig {
                    seed,
                    ..distill.clone()
                };
                let test_mse = |train: &[_], scale_factor: f64| -> Result<f64> {
                    let run = train_distill(train, Some(&app.test), &DistillConfig { scale_factor, ..dc.clone() })?;
                    let last = run.log.iter().rev().find(|r| r.split == "test").expect("test split logged");
                    Ok(last.mse)
                };
                let mut by_size = Vec::with_capacity(sizes.len());
                let mut failures_by_size = Vec::with_capacity(sizes.len());
                for &n in sizes {
                    if n > app.train.len() {
                        return Err(Error::config(format!("size {n} exceeds the training set")));
                    }
                    let run = train_distill(app.train_prefix(n), None, &dc)?;
                    let p_min = dc.p_min_for(run.model.vocab().len());
                    by_size.push((n, evaluate(&run.model, &app.test, 0.0)?.mse));
                    failures_by_size.push((n, evaluate(&run.model, &app.test, p_min)?.failure_rate));
                }
                Ok(DistillCell {
                    seed,
                    application: app.application_id,
                    weighted: test_mse(&app.train, dc.scale_factor)?,
                    unweighted: test_mse(&app.train, 0.0)?,
                    even: even_baseline_metrics(&app.test)?.mse,
                    by_size,
                    failures_by_size,
                })
            })
            .collect::<Result<_>>()?;
        cells.extend(part);
    }
    Ok(cells)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub seed: u64,
    pub users: usize,
    /// Mean terminal reward of the decoded chains under the users' true
    /// preferences, with the fee of the decoded E-LAM.
    pub decoded: f64,
    pub optimum: f64,
    pub ratio: f64,
    pub dead_ends: usize,
    /// Feasible chains in the search space.
    pub chains: usize,
}

/// Trains the intent-conditioned policy on `world`, then decodes it for the
/// true preferences of up to `users` test prompts and compares with the
/// exhaustive optimum over chains and E-LAM fees.
pub fn optimality_gap(cfg: &ExperimentConfig, world: &World, seed: u64, users: usize) -> Result<GapReport> {
    let env = SrlEnv::new(&world.scenario, cfg.srl.env)?;
    let market = build_market(cfg, world, seed)?;
    let fees: Vec<f64> = market.iter().map(|e| e.fee).collect();
    let run = train_srl(&env, &world.requests(&cfg.request_apps)?, &market, &cfg.srl_for(seed), Variant::Srl)?;
    let prefs = interleaved_users(world, &cfg.request_apps, users)?;
    let (mut decoded, mut optimum, mut dead_ends, mut chains) = (0.0, 0.0, 0, 0);
    for s in &prefs {
        let d = decode_chain(&run.policy, &env, s)?;
        decoded += env.chain_bonus(s, &d.chain, fees[d.elam])?;
        dead_ends += usize::from(d.dead_end);
        let best = brute_force_optimum(&world.scenario, s, &fees)?;
        optimum += best.reward;
        chains = best.chains;
    }
    let n = prefs.len() as f64;
    Ok(GapReport {
        seed,
        users: prefs.len(),
        decoded: decoded / n,
        optimum: optimum / n,
        ratio: decoded / optimum,
        dead_ends,
        chains,
    })
}

/// True preferences of test prompts, round-robin over `apps`.
fn interleaved_users(world: &World, apps: &[u32], users: usize) -> Result<Vec<PreferenceVector>> {
    let sets: Vec<&[IntentSample]> = apps
        .iter()
        .map(|&a| world.intents.app(a).map(|x| x.test.as_slice()))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(users);
    let mut i = 0;
    while out.len() < users {
        let set = sets[i % sets.len()];
        let k = i / sets.len();
        if k >= set.len() {
            break;
        }
        out.push(set[k].preference);
        i += 1;
    }
    if out.is_empty() {
        return Err(Error::config("no users to evaluate"));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub seed: u64,
    pub stats: MatchStats,
    /// Mean true preference of each application's training prompts.
    pub app_means: Vec<(u32, PreferenceVector)>,
}

/// One policy per application, trained on that application's (translated)
/// training prompts; users are test prompts of the same applications.
pub fn matching_experiment(cfg: &ExperimentConfig, world: &World, seed: u64, apps: &[u32], users: usize) -> Result<MatchReport> {
    let env = SrlEnv::new(&world.scenario, cfg.srl.env)?;
    let market = build_market(cfg, world, seed)?;
    let fees: Vec<f64> = market.iter().map(|e| e.fee).collect();
    let trained: Vec<(u32, PreferenceVector, PolicyNet)> = apps
        .par_iter()
        .map(|&a| -> Result<_> {
            let samples = world.intents.app(a)?.train_samples();
            let mean = PreferenceVector::mean(samples.iter().map(|s| &s.preference))?;
            let run = train_srl(&env, &PromptMix::single(samples)?, &market, &cfg.srl_for(seed), Variant::Srl)?;
            Ok((a, mean, run.policy))
        })
        .collect::<Result<_>>()?;
    let policies: Vec<(PreferenceVector, &PolicyNet)> = trained.iter().map(|(_, m, p)| (*m, p)).collect();
    let prefs = interleaved_users(world, apps, users)?;
    let stats = policy_match_experiment(&env, &policies, &fees, &prefs, seed)?;
    Ok(MatchReport {
        seed,
        stats,
        app_means: trained.iter().map(|(a, m, _)| (*a, *m)).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub seed: u64,
    pub main: u32,
    pub contaminant: u32,
    pub fraction: f64,
    /// Mean capability of feasible chains over the final window.
    pub calibrated: f64,
    pub uncalibrated: f64,
}

/// The application whose mean preference is farthest (angular distance)
/// from `main`'s.
pub fn farthest_application(world: &World, main: u32) -> Result<u32> {
    let mean = |a: u32| -> Result<PreferenceVector> {
        let t = &world.intents.app(a)?.test;
        PreferenceVector::mean(t.iter().map(|s| &s.preference))
    };
    let m = mean(main)?;
    let mut best: Option<(f64, u32)> = None;
    for app in &world.intents.apps {
        let a = app.application_id;
        if a == main {
            continue;
        }
        let d = angular_distance(m, mean(a)?);
        if best.is_none_or(|(bd, _)| d > bd) {
            best = Some((d, a));
        }
    }
    best.map(|(_, a)| a).ok_or_else(|| Error::config("need a second application"))
}

fn final_capability(log: &[SrlLogRow], window: usize) -> f64 {
    let tail = &log[log.len().saturating_sub(window)..];
    let caps: Vec<f64> = tail.iter().filter_map(|r| r.capability).collect();
    if caps.is_empty() {
        return f64::NAN;
    }
    caps.iter().sum::<f64>() / caps.len() as f64
}

/// Trains on `main`'s request stream with `fraction` of the episodes drawn
/// from `contaminant`, once with calibration and once without.
pub fn calibration_ablation(
    cfg: &ExperimentConfig,
    world: &World,
    seed: u64,
    main: u32,
    contaminant: u32,
    fraction: f64,
    window: usize,
) -> Result<AblationReport> {
    let env = SrlEnv::new(&world.scenario, cfg.srl.env)?;
    let market = build_market(cfg, world, seed)?;
    let prompts = PromptMix::contaminated(
        world.intents.app(main)?.test.clone(),
        world.intents.app(contaminant)?.test.clone(),
        fraction,
    )?;
    let caps: Vec<f64> = [true, false]
        .par_iter()
        .map(|&enabled| -> Result<f64> {
            let mut srl = cfg.srl_for(seed);
            srl.calibration.enabled = enabled;
            let run = train_srl(&env, &prompts, &market, &srl, Variant::Srl)?;
            Ok(final_capability(&run.log, window))
        })
        .collect::<Result<_>>()?;
    Ok(AblationReport {
        seed,
        main,
        contaminant,
        fraction,
        calibrated: caps[0],
        uncalibrated: caps[1],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{IntentConfig, MarketConfig, ScenarioConfig, Topology};
    use crate::srl::PolicyShape;

    fn tiny() -> ExperimentConfig {
        let mut cfg = ExperimentConfig {
            scenario: ScenarioConfig {
                n_agents: 12,
                topology: Topology::ErdosRenyi { p: 0.5 },
                ..Default::default()
            },
            intents: IntentConfig {
                historical: 20,
                test: 20,
                train: 40,
                ..Default::default()
            },
            market: MarketConfig::Noisy { sigma: 0.0, fee: 0.0 },
            episodes: 40,
            ..Default::default()
        };
        cfg.srl.ppo.episodes_per_update = 8;
        cfg.srl.policy = PolicyShape {
            gcn_hidden: 8,
            embed_dim: 4,
            head_hidden: 8,
        };
        cfg
    }

    #[test]
    fn gap_never_exceeds_the_optimum() {
        let cfg = tiny();
        let world = World::build(&cfg).unwrap();
        let r = optimality_gap(&cfg, &world, 0, 12).unwrap();
        assert_eq!(r.users, 12);
        assert!(r.decoded <= r.optimum + 1e-12);
        assert!(r.chains > 0);
    }

    #[test]
    fn protocols_run_at_small_scale() {
        let cfg = tiny();
        let world = World::build(&cfg).unwrap();
        let m = matching_experiment(&cfg, &world, 0, &[1, 2], 10).unwrap();
        assert_eq!(m.stats.users, 10);
        assert_eq!(m.app_means.len(), 2);
        let far = farthest_application(&world, 1).unwrap();
        assert_ne!(far, 1);
        let a = calibration_ablation(&cfg, &world, 0, 1, far, 0.2, 20).unwrap();
        assert!(a.calibrated.is_finite() && a.uncalibrated.is_finite());
    }

    #[test]
    fn distill_cells_cover_seeds_and_sizes() {
        let intents = IntentConfig {
            historical: 20,
            test: 20,
            train: 40,
            ..Default::default()
        };
        let dc = DistillConfig {
            epochs: 1,
            size: crate::distill::StudentSize::Small,
            ..Default::default()
        };
        let cells = distill_benchmark(&intents, &dc, &[0, 1], &[20, 40]).unwrap();
        assert_eq!(cells.len(), 6);
        for c in &cells {
            assert_eq!(c.by_size.len(), 2);
            assert_eq!(c.failures_by_size.len(), 2);
            assert!(c.by_size.iter().all(|(_, mse)| mse.is_finite()), "{c:?}");
        }
        assert!(distill_benchmark(&intents, &dc, &[0], &[41]).is_err());
    }
}
