//! Scenario configuration and the built-in scenario registry.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::RunError;
use crate::hawkes::HawkesParams;
use crate::lob::{Direction, DEFAULT_INITIAL_MID, DEFAULT_TICK_SIZE};
use crate::rl::{PpoConfig, RlAgentConfig, RlMode};
use crate::twap::TwapConfig;

/// Where the TWAP starts, in seconds after the warm-up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum StartPolicy {
    Fixed { at: f64 },
    Normal { mean: f64, sd: f64 },
}

impl StartPolicy {
    /// Draws a start time, clamped to `[0, max]`.
    pub fn sample<R: Rng + ?Sized>(&self, max: f64, rng: &mut R) -> f64 {
        match *self {
            StartPolicy::Fixed { at } => at,
            StartPolicy::Normal { mean, sd } => {
                let x = if sd > 0.0 { Normal::new(mean, sd).expect("finite sd").sample(rng) } else { mean };
                x.clamp(0.0, max)
            }
        }
    }
}

/// Probabilities for the per-episode TWAP side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SideMix {
    pub buy: f64,
    pub sell: f64,
    pub none: f64,
}

impl Default for SideMix {
    fn default() -> Self {
        Self { buy: 0.4, sell: 0.4, none: 0.2 }
    }
}

impl SideMix {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<Direction> {
        let total = self.buy + self.sell + self.none;
        let u = rng.random::<f64>() * total;
        if u < self.buy {
            Some(Direction::Buy)
        } else if u < self.buy + self.sell {
            Some(Direction::Sell)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TwapSide {
    Buy,
    Sell,
    /// Drawn per episode from [`TwapSpec::mix`].
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwapSpec {
    pub side: TwapSide,
    #[serde(default)]
    pub mix: SideMix,
    pub quantity: u64,
    pub horizon: f64,
    pub window: f64,
    pub period: f64,
    pub start: StartPolicy,
    #[serde(default = "default_time_frac")]
    pub urgency_time_frac: f64,
    #[serde(default = "default_fill_frac")]
    pub urgency_fill_frac: f64,
}

fn default_time_frac() -> f64 {
    0.75
}

fn default_fill_frac() -> f64 {
    0.9
}

impl TwapSpec {
    pub fn new(side: TwapSide, quantity: u64, horizon: f64, window: f64, period: f64, start: StartPolicy) -> Self {
        Self {
            side,
            mix: SideMix::default(),
            quantity,
            horizon,
            window,
            period,
            start,
            urgency_time_frac: default_time_frac(),
            urgency_fill_frac: default_fill_frac(),
        }
    }

    /// Concrete executor configuration at an absolute start time.
    pub fn to_config(&self, side: Direction, start_abs: f64) -> TwapConfig {
        TwapConfig {
            urgency_time_frac: self.urgency_time_frac,
            urgency_fill_frac: self.urgency_fill_frac,
            ..TwapConfig::new(side, self.quantity, self.horizon, self.window, self.period, start_abs)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RlSpec {
    #[serde(flatten)]
    pub agent: RlAgentConfig,
    /// Policy to load; absent means a freshly initialised network.
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
    /// Activation, seconds after the warm-up.
    #[serde(default)]
    pub start: f64,
    /// Deactivation, seconds after the warm-up; defaults to the end of trading.
    #[serde(default)]
    pub stop: Option<f64>,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
}

fn default_hidden() -> Vec<usize> {
    vec![64, 64]
}

impl RlSpec {
    pub fn new(mode: RlMode, period: f64) -> Self {
        Self {
            agent: RlAgentConfig { mode, period, ..Default::default() },
            checkpoint: None,
            start: 0.0,
            stop: None,
            hidden: default_hidden(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingSpec {
    pub episodes: usize,
    pub checkpoint_every: usize,
    /// Seed of the network initialisation and the optimiser.
    pub seed: u64,
    /// Training episode `e` runs on seed `seed_base + e`, away from the
    /// evaluation seeds.
    pub seed_base: u64,
    pub ppo: PpoConfig,
}

impl Default for TrainingSpec {
    fn default() -> Self {
        Self { episodes: 100, checkpoint_every: 20, seed: 7, seed_base: 100_000, ppo: PpoConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HawkesSource {
    /// TOML parameter file; the bundled defaults when absent.
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default = "one")]
    pub volume_scale: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for HawkesSource {
    fn default() -> Self {
        Self { path: None, volume_scale: 1.0 }
    }
}

impl HawkesSource {
    pub fn load(&self) -> Result<HawkesParams, RunError> {
        let p = match &self.path {
            Some(path) => HawkesParams::load(path)?,
            None => HawkesParams::default(),
        };
        let p = p.with_volume_scale(self.volume_scale);
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_warmup")]
    pub warmup_seconds: f64,
    pub trading_seconds: f64,
    #[serde(default = "default_tick")]
    pub tick_size: f64,
    #[serde(default = "default_mid")]
    pub initial_mid: i64,
    /// Levels of seed liquidity placed on each side before the warm-up.
    #[serde(default = "default_depth")]
    pub initial_depth: u32,
    /// Size of seed orders (initial book and empty-side refills).
    #[serde(default = "default_seed_size")]
    pub seed_size: u64,
    #[serde(default)]
    pub hawkes: HawkesSource,
    #[serde(default)]
    pub twap: Option<TwapSpec>,
    #[serde(default)]
    pub rl: Option<RlSpec>,
    #[serde(default)]
    pub training: TrainingSpec,
    #[serde(default)]
    pub event_log: bool,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_seeds() -> Vec<u64> {
    (0..10).collect()
}

fn default_warmup() -> f64 {
    100.0
}

fn default_tick() -> f64 {
    DEFAULT_TICK_SIZE
}

fn default_mid() -> i64 {
    DEFAULT_INITIAL_MID
}

fn default_depth() -> u32 {
    5
}

fn default_seed_size() -> u64 {
    2
}

impl ScenarioConfig {
    pub fn new(name: &str, trading_seconds: f64) -> Self {
        Self {
            name: name.to_string(),
            seeds: default_seeds(),
            warmup_seconds: default_warmup(),
            trading_seconds,
            tick_size: default_tick(),
            initial_mid: default_mid(),
            initial_depth: default_depth(),
            seed_size: default_seed_size(),
            hawkes: HawkesSource::default(),
            twap: None,
            rl: None,
            training: TrainingSpec::default(),
            event_log: false,
            output_dir: None,
        }
    }

    pub fn with_seeds(mut self, seeds: impl IntoIterator<Item = u64>) -> Self {
        self.seeds = seeds.into_iter().collect();
        self
    }

    pub fn from_toml_str(s: &str) -> Result<Self, RunError> {
        let c: ScenarioConfig = toml::from_str(s).map_err(|e| RunError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    /// A registry name or a path to a TOML file.
    pub fn resolve(name_or_path: &str) -> Result<Self, RunError> {
        if let Some(c) = registry(name_or_path) {
            return Ok(c);
        }
        let path = Path::new(name_or_path);
        if !path.exists() {
            return Err(RunError::Config(format!(
                "'{name_or_path}' is neither a registered scenario ({}) nor an existing file",
                SCENARIOS.join(", ")
            )));
        }
        let mut c = Self::from_toml_str(&std::fs::read_to_string(path)?)?;
        // relative paths inside a config resolve against its directory
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [c.hawkes.path.as_mut(), c.rl.as_mut().and_then(|r| r.checkpoint.as_mut())].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |m: String| Err(RunError::Config(m));
        if !(self.warmup_seconds >= 0.0) {
            return bad("warmup_seconds must be >= 0".into());
        }
        if !(self.trading_seconds > 0.0) {
            return bad("trading_seconds must be > 0".into());
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if !(self.tick_size > 0.0) || self.initial_mid <= i64::from(self.initial_depth) {
            return bad("tick size must be positive and the initial mid above the seeded depth".into());
        }
        if !(self.hawkes.volume_scale > 0.0) {
            return bad("volume_scale must be positive".into());
        }
        if let Some(t) = &self.twap {
            t.to_config(Direction::Buy, 0.0).validate().map_err(|e| RunError::Config(format!("twap: {e}")))?;
            let m = t.mix;
            if t.side == TwapSide::Mixed && !(m.buy >= 0.0 && m.sell >= 0.0 && m.none >= 0.0 && m.buy + m.sell + m.none > 0.0) {
                return bad("twap side mix must be non-negative with a positive total".into());
            }
            if let StartPolicy::Normal { sd, .. } = t.start {
                if !(sd >= 0.0) {
                    return bad("start sd must be >= 0".into());
                }
            }
        }
        if let Some(r) = &self.rl {
            if !(r.agent.period > 0.0) || r.agent.order_size == 0 || r.agent.inventory_cap < 1 {
                return bad("rl period, order size and inventory cap must be positive".into());
            }
            if r.stop.is_some_and(|s| s <= r.start) {
                return bad("rl stop must come after start".into());
            }
            if r.agent.mode == RlMode::Frl && self.twap.is_none() {
                return bad("frl mode needs a twap to wire the rho signal to".into());
            }
        }
        self.training.ppo.validate().map_err(|e| RunError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn trading_start(&self) -> f64 {
        self.warmup_seconds
    }

    pub fn end_time(&self) -> f64 {
        self.warmup_seconds + self.trading_seconds
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("config serialises")))
    }
}

pub const SCENARIOS: [&str; 9] = [
    "twap_alone_hpov",
    "twap_alone_rpov1",
    "twap_impact",
    "url_solo",
    "url_vs_rpov2",
    "url_vs_hpov",
    "frl_train",
    "frl_eval_buy",
    "frl_eval_sell",
];

/// Volume multiplier of the high-volume regime.
pub const HIGH_VOLUME_SCALE: f64 = 40.0;

fn hpov_twap(side: TwapSide) -> TwapSpec {
    TwapSpec::new(side, 300, 300.0, 50.0, 1.0, StartPolicy::Fixed { at: 0.0 })
}

/// Built-in scenarios by name.
pub fn registry(name: &str) -> Option<ScenarioConfig> {
    let c = match name {
        "twap_alone_hpov" => ScenarioConfig { twap: Some(hpov_twap(TwapSide::Buy)), ..ScenarioConfig::new(name, 300.0) }.with_seeds(0..30),
        "twap_alone_rpov1" => ScenarioConfig {
            twap: Some(hpov_twap(TwapSide::Buy)),
            hawkes: HawkesSource { path: None, volume_scale: HIGH_VOLUME_SCALE },
            ..ScenarioConfig::new(name, 300.0)
        }
        .with_seeds(0..30),
        "twap_impact" => ScenarioConfig {
            // execution over 1200 s, then as long again to watch the decay
            twap: Some(TwapSpec::new(TwapSide::Buy, 1200, 1200.0, 50.0, 1.0, StartPolicy::Fixed { at: 0.0 })),
            ..ScenarioConfig::new(name, 2400.0)
        }
        .with_seeds(0..50),
        "url_solo" => ScenarioConfig { rl: Some(RlSpec::new(RlMode::Url, 0.213)), ..ScenarioConfig::new(name, 300.0) }.with_seeds(1000..1020),
        "url_vs_rpov2" => ScenarioConfig {
            rl: Some(RlSpec::new(RlMode::Url, 0.213)),
            twap: Some(TwapSpec::new(TwapSide::Buy, 8, 320.0, 160.0, 40.0, StartPolicy::Fixed { at: 0.0 })),
            ..ScenarioConfig::new(name, 320.0)
        }
        .with_seeds(1000..1020),
        "url_vs_hpov" => ScenarioConfig {
            rl: Some(RlSpec::new(RlMode::Url, 0.213)),
            twap: Some(hpov_twap(TwapSide::Buy)),
            ..ScenarioConfig::new(name, 300.0)
        }
        .with_seeds(1000..1020),
        "frl_train" => ScenarioConfig {
            rl: Some(RlSpec::new(RlMode::Frl, 0.213)),
            twap: Some(TwapSpec { mix: SideMix::default(), ..hpov_twap(TwapSide::Mixed) }.with_start(StartPolicy::Normal { mean: 150.0, sd: 30.0 })),
            hawkes: HawkesSource { path: None, volume_scale: HIGH_VOLUME_SCALE },
            ..ScenarioConfig::new(name, 300.0)
        }
        .with_seeds(0..1),
        "frl_eval_buy" | "frl_eval_sell" => {
            let side = if name.ends_with("buy") { TwapSide::Buy } else { TwapSide::Sell };
            ScenarioConfig {
                rl: Some(RlSpec::new(RlMode::Frl, 0.213)),
                twap: Some(hpov_twap(side).with_start(StartPolicy::Fixed { at: 150.0 })),
                hawkes: HawkesSource { path: None, volume_scale: HIGH_VOLUME_SCALE },
                ..ScenarioConfig::new(name, 300.0)
            }
            .with_seeds(5000..5020)
        }
        _ => return None,
    };
    Some(c)
}

impl TwapSpec {
    pub fn with_start(mut self, start: StartPolicy) -> Self {
        self.start = start;
        self
    }
}
