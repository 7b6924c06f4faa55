//! Reinforcement-learning market maker: networks, observations, PPO with
//! self-imitation, checkpoints and the agent itself.

pub mod agent;
pub mod checkpoint;
pub mod net;
pub mod obs;
pub mod policy;
pub mod ppo;
pub mod sil;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use agent::{RlAgent, RlAgentConfig, RlMode};
pub use obs::{ObsNorm, RhoSchedule, OBS_DIM};
pub use policy::{Architecture, PolicyParams, RlAction};
pub use ppo::{PpoConfig, Step, Trajectory};
pub use sil::SilBuffer;

use net::Adam;

#[derive(Debug, Error)]
pub enum RlError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Policy(#[from] policy::PolicyError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Default two-hidden-layer architecture.
pub fn default_architecture() -> Architecture {
    Architecture::new(OBS_DIM, vec![64, 64])
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateLog {
    pub update: usize,
    pub episodes: usize,
    pub mean_return: f64,
    pub samples: usize,
    pub mean_ratio: f64,
    pub clip_fraction: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub sil_admitted: usize,
    pub sil_contributing: usize,
    pub sil_size: usize,
}

/// Owns the learnable state. Rollouts read [`Trainer::policy`] snapshots;
/// only [`Trainer::update`] mutates it.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub policy: PolicyParams,
    pub cfg: PpoConfig,
    adam: Adam,
    pub sil: SilBuffer,
    rng: ChaCha8Rng,
    pub updates: usize,
}

impl Trainer {
    pub fn new(policy: PolicyParams, cfg: PpoConfig, seed: u64) -> Result<Self, RlError> {
        cfg.validate()?;
        let adam = Adam::new(policy.len(), cfg.learning_rate);
        let sil = SilBuffer::new(cfg.sil_capacity);
        Ok(Self { policy, cfg, adam, sil, rng: ChaCha8Rng::seed_from_u64(seed), updates: 0 })
    }

    /// PPO on the fresh rollouts, then self-imitation from the buffer.
    /// On a non-finite loss the parameters are rolled back.
    pub fn update(&mut self, trajectories: &[Trajectory]) -> Result<UpdateLog, RlError> {
        let snapshot = (self.policy.clone(), self.adam.clone());
        let result = self.update_inner(trajectories);
        if result.is_err() {
            (self.policy, self.adam) = snapshot;
        }
        result
    }

    fn update_inner(&mut self, trajectories: &[Trajectory]) -> Result<UpdateLog, RlError> {
        let stats = ppo::ppo_update(&mut self.policy, &mut self.adam, trajectories, &self.cfg, &mut self.rng)?;
        let admitted: usize = trajectories.iter().map(|t| self.sil.add_trajectory(t, self.cfg.gamma, self.cfg.reward_scale)).sum();
        let sil_stats = sil::sil_update(&mut self.policy, &mut self.adam, &self.sil, &self.cfg, &mut self.rng)?;
        self.updates += 1;
        let n = trajectories.len();
        Ok(UpdateLog {
            update: self.updates,
            episodes: n,
            mean_return: trajectories.iter().map(Trajectory::episode_return).sum::<f64>() / n.max(1) as f64,
            samples: stats.samples,
            mean_ratio: stats.mean_ratio,
            clip_fraction: stats.clip_fraction,
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
            sil_admitted: admitted,
            sil_contributing: sil_stats.contributing,
            sil_size: self.sil.len(),
        })
    }
}
