//! Files written by experiments. Every file goes through a `.partial`
//! sibling and a rename, so readers never see half-written output.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use super::experiments::{inventory_histogram, EvaluationReport, ImpactStudy, ScenarioResult, TrainingOutput};
use super::RunError;
use crate::eventlog::write_records;

/// Column order of `stats.csv`.
pub const STATS_COLUMNS: [&str; 16] = [
    "scenario",
    "episode",
    "seed",
    "agent",
    "side",
    "slippage_bps",
    "pov_pct",
    "mean_child_size",
    "executed",
    "complete",
    "sharpe_before",
    "sharpe_during",
    "pnl",
    "episode_return",
    "interventions",
    "infeasible",
];

/// One row of `stats.csv`: one agent in one episode. Fields that do not
/// apply to the agent are empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub scenario: String,
    pub episode: usize,
    pub seed: u64,
    pub agent: String,
    pub side: Option<String>,
    pub slippage_bps: Option<f64>,
    pub pov_pct: Option<f64>,
    pub mean_child_size: Option<f64>,
    pub executed: Option<u64>,
    pub complete: Option<bool>,
    pub sharpe_before: Option<f64>,
    pub sharpe_during: Option<f64>,
    pub pnl: Option<f64>,
    pub episode_return: Option<f64>,
    pub interventions: Option<u64>,
    pub infeasible: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub scenario: String,
    pub episode: usize,
    pub seed: u64,
    pub exogenous_events: u64,
    pub dropped_events: u64,
    pub seeded_orders: u64,
    pub exo_volume: u64,
    pub exo_volume_rate: f64,
    pub final_mid: f64,
    pub book_hash: String,
    pub aborted: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub scenario: String,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub failures: Vec<(u64, String)>,
    pub artifacts: Vec<String>,
    pub version: String,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Writes `bytes` to `path` atomically.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>, RunError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| RunError::Io(e.into_error()))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), RunError> {
    write_atomic(path, &csv_bytes(rows)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), RunError> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn stats_rows(result: &ScenarioResult) -> Vec<StatsRow> {
    let mut rows = Vec::new();
    for s in result.stats() {
        let base = |agent: &str| StatsRow {
            scenario: s.scenario.clone(),
            episode: s.episode,
            seed: s.seed,
            agent: agent.to_string(),
            side: None,
            slippage_bps: None,
            pov_pct: None,
            mean_child_size: None,
            executed: None,
            complete: None,
            sharpe_before: None,
            sharpe_during: None,
            pnl: None,
            episode_return: None,
            interventions: None,
            infeasible: 0,
        };
        if let Some(t) = &s.twap {
            rows.push(StatsRow {
                side: t.side.map(|d| format!("{d:?}").to_lowercase()),
                slippage_bps: finite(t.slippage_bps),
                pov_pct: finite(t.pov_pct),
                mean_child_size: finite(t.mean_child_size),
                executed: Some(t.executed),
                complete: Some(t.complete),
                infeasible: t.infeasible,
                ..base("twap")
            });
        }
        if let Some(r) = &s.rl {
            rows.push(StatsRow {
                sharpe_before: finite(r.sharpe_before),
                sharpe_during: finite(r.sharpe_during),
                pnl: Some(r.pnl),
                episode_return: Some(r.episode_return),
                interventions: Some(r.interventions),
                infeasible: r.infeasible,
                ..base("rl")
            });
        }
    }
    rows
}

pub fn episode_rows(result: &ScenarioResult) -> Vec<EpisodeRow> {
    result
        .stats()
        .map(|s| EpisodeRow {
            scenario: s.scenario.clone(),
            episode: s.episode,
            seed: s.seed,
            exogenous_events: s.exogenous_events,
            dropped_events: s.dropped_events,
            seeded_orders: s.seeded_orders,
            exo_volume: s.exo_volume,
            exo_volume_rate: s.exo_volume_rate,
            final_mid: s.mid_path.last().map(|m| m.1).unwrap_or(f64::NAN),
            book_hash: s.book_hash.clone(),
            aborted: s.aborted.clone().unwrap_or_default(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub metric: String,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub median: f64,
}

pub fn summary_rows(result: &ScenarioResult) -> Vec<SummaryRow> {
    use crate::stats::{mean, median, std_dev};
    let row = |name: &str, xs: Vec<f64>| {
        let xs: Vec<f64> = xs.into_iter().filter(|x| x.is_finite()).collect();
        SummaryRow { metric: name.into(), n: xs.len(), mean: mean(&xs), std: std_dev(&xs), median: median(&xs) }
    };
    let mut rows = vec![row("exo_volume_rate", result.stats().map(|s| s.exo_volume_rate).collect())];
    if result.stats().any(|s| s.twap.is_some()) {
        let tw: Vec<_> = result.stats().filter_map(|s| s.twap.as_ref()).collect();
        rows.push(row("slippage_bps", tw.iter().map(|t| t.slippage_bps).collect()));
        rows.push(row("pov_pct", tw.iter().map(|t| t.pov_pct).collect()));
        rows.push(row("mean_child_size", tw.iter().map(|t| t.mean_child_size).collect()));
        rows.push(row("completion", tw.iter().map(|t| t.complete as u8 as f64).collect()));
    }
    if result.stats().any(|s| s.rl.is_some()) {
        let rl: Vec<_> = result.stats().filter_map(|s| s.rl.as_ref()).collect();
        rows.push(row("episode_return", rl.iter().map(|r| r.episode_return).collect()));
        rows.push(row("pnl", rl.iter().map(|r| r.pnl).collect()));
        rows.push(row("sharpe_before", rl.iter().map(|r| r.sharpe_before).collect()));
        rows.push(row("sharpe_during", rl.iter().map(|r| r.sharpe_during).collect()));
        rows.push(row("interventions", rl.iter().map(|r| r.interventions as f64).collect()));
    }
    rows
}

/// Writes `stats.csv`, `episodes.csv`, `summary.csv`, the event logs when
/// recorded, and `manifest.json`. Returns the manifest.
pub fn write_scenario(dir: &Path, result: &ScenarioResult) -> Result<Manifest, RunError> {
    fs::create_dir_all(dir)?;
    let mut artifacts = vec!["stats.csv".to_string(), "episodes.csv".into(), "summary.csv".into()];
    write_csv(&dir.join("stats.csv"), &stats_rows(result))?;
    write_csv(&dir.join("episodes.csv"), &episode_rows(result))?;
    write_csv(&dir.join("summary.csv"), &summary_rows(result))?;
    if result.stats().any(|s| s.rl.is_some()) {
        write_csv(&dir.join("inventory_hist.csv"), &inventory_histogram(result.stats()))?;
        artifacts.push("inventory_hist.csv".into());
    }
    for o in &result.outputs {
        if let Some(log) = &o.log {
            let rel = format!("events/seed_{}.jsonl", o.stats.seed);
            let mut buf = Vec::new();
            write_records(&mut buf, log)?;
            write_atomic(&dir.join(&rel), &buf)?;
            artifacts.push(rel);
        }
    }
    let manifest = Manifest {
        scenario: result.config.name.clone(),
        config_hash: result.config.hash(),
        seeds: result.config.seeds.clone(),
        failures: result.failures.clone(),
        artifacts,
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    write_atomic(&dir.join("config.toml"), toml::to_string(&result.config).map_err(|e| RunError::Config(e.to_string()))?.as_bytes())?;
    Ok(manifest)
}

#[derive(Serialize)]
struct CurveRow {
    q: f64,
    impact: f64,
}

#[derive(Serialize)]
struct DecayRow {
    z: f64,
    impact: f64,
    normalized: f64,
}

/// `impact_curve.csv`, `decay.csv` and `impact_fit.json`.
pub fn write_impact(dir: &Path, study: &ImpactStudy) -> Result<(), RunError> {
    let curve: Vec<CurveRow> = study.curve.points.iter().map(|&(q, impact)| CurveRow { q, impact }).collect();
    write_csv(&dir.join("impact_curve.csv"), &curve)?;
    let decay: Vec<DecayRow> =
        study.decay.points.iter().map(|&(z, impact)| DecayRow { z, impact, normalized: impact / study.decay.peak }).collect();
    write_csv(&dir.join("decay.csv"), &decay)?;
    write_json(&dir.join("impact_fit.json"), study)
}

/// `training_log.csv`, `episode_returns.csv`, `inventory_by_rho.csv`,
/// `inventory_hist.csv` and `training.json`.
pub fn write_training(dir: &Path, cfg: &ScenarioConfig, out: &TrainingOutput) -> Result<(), RunError> {
    #[derive(Serialize)]
    struct ReturnRow {
        episode: usize,
        episode_return: f64,
    }
    #[derive(Serialize)]
    struct Summary<'a> {
        scenario: &'a str,
        config_hash: String,
        episodes: usize,
        updates: usize,
        checkpoints: Vec<String>,
        diverged: &'a Option<String>,
    }
    write_csv(&dir.join("training_log.csv"), &out.logs)?;
    let returns: Vec<ReturnRow> =
        out.episode_returns.iter().enumerate().map(|(episode, &episode_return)| ReturnRow { episode, episode_return }).collect();
    write_csv(&dir.join("episode_returns.csv"), &returns)?;
    write_csv(&dir.join("inventory_by_rho.csv"), &out.inventory_by_rho)?;
    write_csv(&dir.join("inventory_hist.csv"), &out.inventory_hist)?;
    write_json(
        &dir.join("training.json"),
        &Summary {
            scenario: &cfg.name,
            config_hash: cfg.hash(),
            episodes: out.episode_returns.len(),
            updates: out.logs.len(),
            checkpoints: out.checkpoints.iter().map(|p| p.display().to_string()).collect(),
            diverged: &out.diverged,
        },
    )
}

/// `evaluation.json`, `sharpe_table.csv` and `slippage_table.csv`.
pub fn write_evaluation(dir: &Path, report: &EvaluationReport) -> Result<(), RunError> {
    #[derive(Serialize)]
    struct Row<'a> {
        phase: &'a str,
        side: &'a str,
        mean: f64,
        std: f64,
        n: usize,
    }
    let s = &report.sharpe;
    let sharpe = [
        ("before", "buy", s.before_buy),
        ("before", "sell", s.before_sell),
        ("during", "buy", s.during_buy),
        ("during", "sell", s.during_sell),
    ];
    let rows: Vec<Row> = sharpe.iter().map(|(phase, side, c)| Row { phase, side, mean: c.mean, std: c.std, n: c.n }).collect();
    write_csv(&dir.join("sharpe_table.csv"), &rows)?;
    let slip = [
        ("with_rl", "buy", report.slippage.buy),
        ("with_rl", "sell", report.slippage.sell),
        ("twap_alone", "buy", report.baseline_slippage.buy),
        ("twap_alone", "sell", report.baseline_slippage.sell),
    ];
    let rows: Vec<Row> = slip.iter().map(|(phase, side, c)| Row { phase, side, mean: c.mean, std: c.std, n: c.n }).collect();
    write_csv(&dir.join("slippage_table.csv"), &rows)?;
    write_json(&dir.join("evaluation.json"), report)
}
