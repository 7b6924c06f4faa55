//! Multi-episode experiments built on [`run_episode`].

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use super::config::{ScenarioConfig, StartPolicy, TwapSide};
use super::episode::{run_episode, stream_rng, EpisodeOutput, EpisodeSetup, EpisodeStats};
use super::output;
use super::RunError;
use crate::hawkes::HawkesParams;
use crate::lob::Direction;
use crate::metrics::{fit_decay_beta, fit_impact_exponent, DecayFit, DecayPath, ImpactCurve, ImpactFit};
use crate::rl::{checkpoint, Architecture, ObsNorm, PolicyParams, RlError, RlMode, Trainer, UpdateLog, OBS_DIM};
use crate::stats::{mean, median, std_dev};

/// Per-seed outputs of one scenario, in seed order.
#[derive(Debug, Clone)]
pub struct ScenarioResult {
    pub config: ScenarioConfig,
    pub outputs: Vec<EpisodeOutput>,
    /// Seeds whose episode failed outright, with the reason.
    pub failures: Vec<(u64, String)>,
}

impl ScenarioResult {
    pub fn stats(&self) -> impl Iterator<Item = &EpisodeStats> {
        self.outputs.iter().map(|o| &o.stats)
    }

    pub fn twap_slippages(&self) -> Vec<f64> {
        self.stats().filter_map(|s| s.twap.as_ref()).map(|t| t.slippage_bps).filter(|x| x.is_finite()).collect()
    }

    pub fn rl_returns(&self) -> Vec<f64> {
        self.stats().filter_map(|s| s.rl.as_ref()).map(|r| r.episode_return).collect()
    }
}

pub fn architecture_for(cfg: &ScenarioConfig) -> Architecture {
    let hidden = cfg.rl.as_ref().map(|r| r.hidden.clone()).unwrap_or_else(|| vec![64, 64]);
    Architecture::new(OBS_DIM, hidden)
}

/// The configured checkpoint, or a freshly initialised policy.
pub fn policy_for(cfg: &ScenarioConfig) -> Result<Option<Arc<PolicyParams>>, RunError> {
    let Some(rl) = &cfg.rl else { return Ok(None) };
    let arch = architecture_for(cfg);
    let rho_aware = rl.agent.mode.rho_aware();
    let p = match &rl.checkpoint {
        Some(path) => checkpoint::load_expecting(path, &arch, rho_aware)?,
        None => {
            let mut rng = stream_rng(cfg.training.seed, 9);
            PolicyParams::init(arch, ObsNorm::default(), rho_aware, &mut rng)
        }
    };
    Ok(Some(Arc::new(p)))
}

fn run_seeds(
    cfg: &ScenarioConfig,
    params: &HawkesParams,
    seeds: &[(usize, u64)],
    policy: Option<Arc<PolicyParams>>,
    record: bool,
) -> Result<(Vec<EpisodeOutput>, Vec<(u64, String)>), RunError> {
    let results: Vec<(u64, Result<EpisodeOutput, RunError>)> = seeds
        .par_iter()
        .map(|&(ep, seed)| {
            let r = EpisodeSetup::prepare(cfg, ep, seed, policy.clone(), record).and_then(|s| run_episode(cfg, params, s));
            (seed, r)
        })
        .collect();
    let mut outs = Vec::new();
    let mut failures = Vec::new();
    for (seed, r) in results {
        match r {
            Ok(o) => {
                if let Some(msg) = &o.stats.aborted {
                    warn!(seed, %msg, "episode aborted");
                }
                outs.push(o);
            }
            Err(RunError::Config(m)) => return Err(RunError::Config(m)),
            Err(e) => {
                warn!(seed, error = %e, "episode failed");
                failures.push((seed, e.to_string()));
            }
        }
    }
    Ok((outs, failures))
}

/// Runs every configured seed in parallel. `policy` overrides the configured one.
pub fn run_scenario(cfg: &ScenarioConfig, policy: Option<Arc<PolicyParams>>) -> Result<ScenarioResult, RunError> {
    cfg.validate()?;
    let params = cfg.hawkes.load()?;
    let policy = match policy {
        Some(p) => Some(p),
        None => policy_for(cfg)?,
    };
    let seeds: Vec<(usize, u64)> = cfg.seeds.iter().copied().enumerate().collect();
    let (outputs, failures) = run_seeds(cfg, &params, &seeds, policy, false)?;
    info!(scenario = %cfg.name, episodes = outputs.len(), failed = failures.len(), "scenario finished");
    Ok(ScenarioResult { config: cfg.clone(), outputs, failures })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImpactStudy {
    pub episodes: usize,
    pub quantity: u64,
    pub horizon: f64,
    pub curve: ImpactCurve,
    pub fit: Option<ImpactFit>,
    pub decay: DecayPath,
    pub decay_fit: Option<DecayFit>,
    pub fit_error: Option<String>,
    pub decay_error: Option<String>,
}

/// Signed relative impact `side · (mid − arrival) / arrival`.
fn rel_impact(mid: f64, arrival: f64, side: Direction) -> f64 {
    side.sign() * (mid - arrival) / arrival
}

/// Square-root-law curve during execution and the averaged post-execution
/// decay, from a TWAP scenario's episodes.
pub fn impact_study(result: &ScenarioResult, bins: usize) -> Result<ImpactStudy, RunError> {
    let mut paths = Vec::new();
    let mut decay_sum: Vec<f64> = Vec::new();
    let mut decay_n: Vec<usize> = Vec::new();
    let mut quantity = 0;
    let mut horizon = 0.0;
    for st in result.stats() {
        let Some(tw) = &st.twap else { continue };
        let side = tw.side.unwrap_or(Direction::Buy);
        quantity = tw.quantity;
        horizon = tw.end - tw.start;
        let arrival = tw.arrival_mid;
        // mid_path is sampled once a second from the end of the warm-up
        let offset = tw.start - result.config.trading_start();
        let mid_at = |t_rel: f64| -> Option<f64> {
            let k = (offset + t_rel).round();
            (k >= 0.0).then(|| st.mid_path.get(k as usize).map(|m| m.1)).flatten()
        };
        let mut path = Vec::new();
        for &(t, q) in &tw.q_path {
            if t > 0.0 && t <= horizon + 1e-9 {
                if let Some(m) = mid_at(t) {
                    path.push((q as f64, rel_impact(m, arrival, side)));
                }
            }
        }
        paths.push(path);
        // decay: whole seconds from the end of execution onwards
        let mut k = 0usize;
        loop {
            let t = horizon + k as f64;
            let Some(m) = mid_at(t) else { break };
            if decay_sum.len() <= k {
                decay_sum.push(0.0);
                decay_n.push(0);
            }
            decay_sum[k] += rel_impact(m, arrival, side);
            decay_n[k] += 1;
            k += 1;
        }
    }
    if paths.is_empty() {
        return Err(RunError::Config("impact study needs a scenario with a TWAP agent".into()));
    }
    let curve = ImpactCurve::binned(&paths, bins, quantity as f64);
    let (fit, fit_error) = match fit_impact_exponent(&curve) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let avg: Vec<f64> = decay_sum.iter().zip(&decay_n).map(|(s, n)| s / *n as f64).collect();
    let decay = DecayPath {
        peak: avg.first().copied().unwrap_or(f64::NAN),
        points: avg.iter().enumerate().skip(1).map(|(k, v)| (1.0 + k as f64 / horizon, *v)).collect(),
    };
    let (decay_fit, decay_error) = match fit_decay_beta(&decay) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(ImpactStudy { episodes: paths.len(), quantity, horizon, curve, fit, decay, decay_fit, fit_error, decay_error })
}

/// Inventory distribution of the RL agent within one rho regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoInventory {
    pub rho: i8,
    pub samples: usize,
    pub median: f64,
    pub p25: f64,
    pub p75: f64,
    pub mean: f64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn inventory_by_rho<'a>(stats: impl Iterator<Item = &'a EpisodeStats>) -> Vec<RhoInventory> {
    let mut by: [Vec<f64>; 3] = Default::default();
    for s in stats {
        if let Some(rl) = &s.rl {
            for (inv, rho) in rl.inventory_path.iter().zip(&rl.rho_path) {
                by[(*rho + 1) as usize].push(*inv as f64);
            }
        }
    }
    by.iter_mut()
        .enumerate()
        .map(|(i, v)| {
            v.sort_by(f64::total_cmp);
            RhoInventory { rho: i as i8 - 1, samples: v.len(), median: median(v), p25: quantile(v, 0.25), p75: quantile(v, 0.75), mean: mean(v) }
        })
        .collect()
}

/// Count of RL inventory samples at one level within one rho regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InventoryBin {
    pub rho: i8,
    pub inventory: i64,
    pub count: usize,
}

/// Inventory histogram per rho regime, ordered by rho then inventory.
pub fn inventory_histogram<'a>(stats: impl Iterator<Item = &'a EpisodeStats>) -> Vec<InventoryBin> {
    let mut counts = std::collections::BTreeMap::new();
    for s in stats {
        if let Some(rl) = &s.rl {
            for (inv, rho) in rl.inventory_path.iter().zip(&rl.rho_path) {
                *counts.entry((*rho, *inv)).or_insert(0usize) += 1;
            }
        }
    }
    counts.into_iter().map(|((rho, inventory), count)| InventoryBin { rho, inventory, count }).collect()
}

#[derive(Debug, Clone)]
pub struct TrainingOutput {
    pub policy: PolicyParams,
    pub logs: Vec<UpdateLog>,
    pub checkpoints: Vec<PathBuf>,
    pub episode_returns: Vec<f64>,
    pub inventory_by_rho: Vec<RhoInventory>,
    pub inventory_hist: Vec<InventoryBin>,
    /// Set when a non-finite loss stopped training; `policy` is the last good one.
    pub diverged: Option<String>,
}

/// PPO + self-imitation training on `cfg` for `episodes` episodes. Rollouts
/// of one update run in parallel against a frozen policy snapshot.
pub fn train_policy(cfg: &ScenarioConfig, episodes: usize, out: Option<&Path>) -> Result<TrainingOutput, RunError> {
    cfg.validate()?;
    let rl = cfg.rl.as_ref().ok_or_else(|| RunError::Config("training needs an rl agent".into()))?;
    if episodes == 0 {
        return Err(RunError::Config("episodes must be positive".into()));
    }
    let params = cfg.hawkes.load()?;
    let mut rng = stream_rng(cfg.training.seed, 9);
    let init = PolicyParams::init(architecture_for(cfg), ObsNorm::default(), rl.agent.mode.rho_aware(), &mut rng);
    let mut ppo = cfg.training.ppo.clone();
    ppo.c_int = rl.agent.c_int;
    let mut trainer = Trainer::new(init, ppo, cfg.training.seed)?;
    let per_update = trainer.cfg.episodes_per_update;
    let mut logs = Vec::new();
    let mut checkpoints = Vec::new();
    let mut returns = Vec::new();
    let mut all_stats = Vec::new();
    let mut diverged = None;
    let mut done = 0usize;
    let every = cfg.training.checkpoint_every.max(1);
    while done < episodes {
        let n = per_update.min(episodes - done);
        let seeds: Vec<(usize, u64)> = (done..done + n).map(|e| (e, cfg.training.seed_base + e as u64)).collect();
        let snapshot = Arc::new(trainer.policy.clone());
        let (outs, failures) = run_seeds(cfg, &params, &seeds, Some(snapshot), true)?;
        if let Some((seed, msg)) = failures.first() {
            return Err(RunError::Agent(format!("training episode seed {seed} failed: {msg}")));
        }
        let trajectories: Vec<_> = outs.iter().filter_map(|o| o.trajectory.clone()).filter(|t| !t.steps.is_empty()).collect();
        for o in &outs {
            returns.push(o.stats.rl.as_ref().map(|r| r.episode_return).unwrap_or(0.0));
        }
        all_stats.extend(outs.into_iter().map(|o| o.stats));
        let before = done;
        done += n;
        if !trajectories.is_empty() {
            match trainer.update(&trajectories) {
                Ok(log) => {
                    info!(update = log.update, mean_return = log.mean_return, clip = log.clip_fraction, "update");
                    logs.push(log);
                }
                Err(RlError::NonFinite(what)) => {
                    warn!(what, "training diverged; keeping last good parameters");
                    diverged = Some(format!("non-finite {what} after {before} episodes"));
                    break;
                }
                Err(e) => return Err(e.into()),
            }
        }
        if let Some(dir) = out {
            if done / every > before / every || done == episodes {
                let path = dir.join("checkpoints").join(format!("policy_ep{done:05}.ckpt"));
                checkpoint::save(&trainer.policy, &path)?;
                checkpoints.push(path);
            }
        }
    }
    if let Some(dir) = out {
        let path = dir.join("policy.ckpt");
        checkpoint::save(&trainer.policy, &path)?;
        checkpoints.push(path);
    }
    let result = TrainingOutput {
        policy: trainer.policy,
        logs,
        checkpoints,
        episode_returns: returns,
        inventory_by_rho: inventory_by_rho(all_stats.iter()),
        inventory_hist: inventory_histogram(all_stats.iter()),
        diverged,
    };
    if let Some(dir) = out {
        output::write_training(dir, cfg, &result)?;
    }
    Ok(result)
}

/// [`train_policy`] restricted to rho-aware configurations.
pub fn train_frl(cfg: &ScenarioConfig, episodes: usize, out: Option<&Path>) -> Result<TrainingOutput, RunError> {
    match &cfg.rl {
        Some(r) if r.agent.mode == RlMode::Frl => train_policy(cfg, episodes, out),
        _ => Err(RunError::Config("train_frl needs an frl-mode configuration".into())),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Cell {
    pub fn of(xs: &[f64]) -> Self {
        let v: Vec<f64> = xs.iter().copied().filter(|x| x.is_finite()).collect();
        Self { mean: mean(&v), std: std_dev(&v), n: v.len() }
    }
}

/// Before/during × buy/sell.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SharpeTable {
    pub before_buy: Cell,
    pub before_sell: Cell,
    pub during_buy: Cell,
    pub during_sell: Cell,
}

/// TWAP slippage by side.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SlippageTable {
    pub buy: Cell,
    pub sell: Cell,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub episodes: usize,
    pub rho_aware: bool,
    pub sharpe: SharpeTable,
    pub slippage: SlippageTable,
    /// The same TWAP on the same seeds without the market maker.
    pub baseline_slippage: SlippageTable,
    pub return_during: SlippageTable,
    pub return_before: SlippageTable,
    pub per_episode_return_during_buy: Vec<f64>,
    pub per_episode_return_during_sell: Vec<f64>,
}

/// Buy and sell evaluations with the TWAP starting mid-session, plus the
/// TWAP-alone baseline on the same seeds.
pub fn evaluate_policy(policy: Arc<PolicyParams>, base: &ScenarioConfig, episodes: usize) -> Result<EvaluationReport, RunError> {
    if episodes == 0 {
        return Err(RunError::Config("evaluation needs at least one episode".into()));
    }
    let rl = base.rl.as_ref().ok_or_else(|| RunError::Config("evaluation needs an rl agent".into()))?;
    if rl.agent.mode.rho_aware() != policy.rho_aware {
        return Err(RunError::Config(format!(
            "checkpoint rho_aware={} does not match configured mode {:?}",
            policy.rho_aware, rl.agent.mode
        )));
    }
    let twap = base.twap.as_ref().ok_or_else(|| RunError::Config("evaluation needs a twap agent".into()))?;
    let first = base.seeds.first().copied().unwrap_or(0);
    let seeds: Vec<u64> = (0..episodes as u64).map(|i| first + i).collect();
    let start = StartPolicy::Fixed { at: (base.trading_seconds / 2.0).floor() };
    let run = |side: TwapSide, with_rl: bool| -> Result<ScenarioResult, RunError> {
        let mut c = base.clone();
        c.seeds = seeds.clone();
        c.twap = Some(twap.clone().with_start(start));
        c.twap.as_mut().expect("set above").side = side;
        if !with_rl {
            c.rl = None;
        }
        run_scenario(&c, with_rl.then(|| policy.clone()))
    };
    let buy = run(TwapSide::Buy, true)?;
    let sell = run(TwapSide::Sell, true)?;
    let base_buy = run(TwapSide::Buy, false)?;
    let base_sell = run(TwapSide::Sell, false)?;
    let col = |r: &ScenarioResult, f: &dyn Fn(&super::episode::RlStats) -> f64| -> Vec<f64> { r.stats().filter_map(|s| s.rl.as_ref()).map(f).collect() };
    let during_buy = col(&buy, &|r| r.return_during);
    let during_sell = col(&sell, &|r| r.return_during);
    Ok(EvaluationReport {
        episodes,
        rho_aware: policy.rho_aware,
        sharpe: SharpeTable {
            before_buy: Cell::of(&col(&buy, &|r| r.sharpe_before)),
            before_sell: Cell::of(&col(&sell, &|r| r.sharpe_before)),
            during_buy: Cell::of(&col(&buy, &|r| r.sharpe_during)),
            during_sell: Cell::of(&col(&sell, &|r| r.sharpe_during)),
        },
        slippage: SlippageTable { buy: Cell::of(&buy.twap_slippages()), sell: Cell::of(&sell.twap_slippages()) },
        baseline_slippage: SlippageTable { buy: Cell::of(&base_buy.twap_slippages()), sell: Cell::of(&base_sell.twap_slippages()) },
        return_during: SlippageTable { buy: Cell::of(&during_buy), sell: Cell::of(&during_sell) },
        return_before: SlippageTable { buy: Cell::of(&col(&buy, &|r| r.return_before)), sell: Cell::of(&col(&sell, &|r| r.return_before)) },
        per_episode_return_during_buy: during_buy,
        per_episode_return_during_sell: during_sell,
    })
}
