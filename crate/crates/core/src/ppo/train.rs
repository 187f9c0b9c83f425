//! Episode loop: draw a problem, roll out the sampling policy, update.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::env::{env_episode, RewardMode};
use super::policy::{ActionSpace, PolicyParameters, DEFAULT_HIDDEN};
use super::update::{PpoConfig, PpoTrainer};
use crate::error::{Error, Result};
use crate::fgmres::SolverConfig;
use crate::problem::black_scholes::{assemble_bs_system, terminal_values, BsParams};
use crate::problem::portfolio::{assemble_kkt, FactorModel};
use crate::problem::LinearSystem;

pub const TRAINING_LOG_HEADER: &str = "episode,total_reward,cycles,final_rel_residual";

/// Seeded source of training problems.
#[derive(Debug, Clone)]
pub enum ProblemFamily {
    /// KKT systems of factor-model portfolios of `n` assets.
    Kkt {
        n: usize,
        n_factors: usize,
        noise: f64,
    },
    /// First backward step of a call-pricing grid with the volatility drawn
    /// uniformly from `sigma_range`.
    BlackScholes {
        base: BsParams,
        sigma_range: (f64, f64),
    },
    /// Fixed systems, visited round-robin.
    Systems(Vec<LinearSystem>),
}

impl ProblemFamily {
    /// KKT family with the defaults used throughout the benchmarks.
    pub fn kkt(n: usize) -> Self {
        ProblemFamily::Kkt {
            n,
            n_factors: 5,
            noise: 0.1,
        }
    }

    /// Problem for one seed. The same seed always yields the same system.
    pub fn draw(&self, seed: u64, index: usize) -> Result<LinearSystem> {
        match self {
            ProblemFamily::Kkt { n, n_factors, noise } => {
                let p = FactorModel::new(*n, *n_factors, *noise, seed).generate()?;
                assemble_kkt(&p)
            }
            ProblemFamily::BlackScholes { base, sigma_range } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let (lo, hi) = *sigma_range;
                let sigma = if hi > lo { rng.random_range(lo..hi) } else { lo };
                let p = BsParams { sigma, ..base.clone() };
                assemble_bs_system(&p, &terminal_values(&p), p.n_steps - 1)
            }
            ProblemFamily::Systems(list) => {
                if list.is_empty() {
                    return Err(Error::InvalidParameter("empty system list".into()));
                }
                Ok(list[index % list.len()].clone())
            }
        }
    }
}

/// Problem seed for a training episode.
pub fn episode_seed(seed: u64, episode: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (episode as u64).wrapping_add(1)
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub ppo: PpoConfig,
    pub solver: SolverConfig,
    pub actions: ActionSpace,
    pub hidden: Vec<usize>,
    pub reward: RewardMode,
    /// Episodes whose transitions are pooled into one PPO update. With 1,
    /// every episode is updated on its own.
    pub episodes_per_update: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            ppo: PpoConfig::default(),
            solver: SolverConfig::default(),
            actions: ActionSpace::default(),
            hidden: DEFAULT_HIDDEN.to_vec(),
            reward: RewardMode::default(),
            episodes_per_update: 1,
        }
    }
}

impl TrainConfig {
    /// Settings that train reliably on the KKT family within a few hundred
    /// episodes: log-decrement reward, `γ = 0.9`, learning rate `3e-3`,
    /// eight episodes per update and block sizes 1 through 64.
    pub fn recommended(episodes: usize, seed: u64) -> Self {
        Self {
            ppo: PpoConfig {
                gamma: 0.9,
                learning_rate: 3e-3,
                episodes,
                seed,
                ..PpoConfig::default()
            },
            actions: ActionSpace::new(vec![1, 2, 4, 8, 16, 32, 64]).expect("valid action set"),
            reward: RewardMode::LogDecrement,
            episodes_per_update: 8,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub episode: usize,
    pub total_reward: f64,
    pub cycles: usize,
    pub final_rel_residual: f64,
}

pub fn training_log_csv(log: &[EpisodeLog]) -> String {
    let mut out = String::from(TRAINING_LOG_HEADER);
    out.push('\n');
    for e in log {
        let _ = writeln!(
            out,
            "{},{:e},{},{:e}",
            e.episode, e.total_reward, e.cycles, e.final_rel_residual
        );
    }
    out
}

pub fn write_training_log(log: &[EpisodeLog], path: &Path) -> Result<()> {
    std::fs::write(path, training_log_csv(log)).map_err(|e| Error::io(path, e))
}

/// Trains a policy from a seeded initialization. Fully deterministic in
/// `cfg.ppo.seed`.
pub fn train(family: &ProblemFamily, cfg: &TrainConfig) -> Result<(PolicyParameters, Vec<EpisodeLog>)> {
    train_with(family, cfg, |_| {})
}

/// [`train`] with a callback after every episode.
pub fn train_with(
    family: &ProblemFamily,
    cfg: &TrainConfig,
    mut on_episode: impl FnMut(&EpisodeLog),
) -> Result<(PolicyParameters, Vec<EpisodeLog>)> {
    cfg.ppo.validate()?;
    cfg.solver.validate()?;
    if cfg.episodes_per_update == 0 {
        return Err(Error::InvalidParameter("episodes_per_update must be at least 1".into()));
    }
    let params = PolicyParameters::init(cfg.actions.clone(), &cfg.hidden, cfg.ppo.seed);
    let mut trainer = PpoTrainer::new(params, cfg.ppo.clone())?;
    let mut rollout_rng = ChaCha8Rng::seed_from_u64(cfg.ppo.seed ^ 0x726f_6c6c_6f75_7473);
    let mut log = Vec::with_capacity(cfg.ppo.episodes);
    let mut buffer = Vec::new();

    for episode in 0..cfg.ppo.episodes {
        let system = family.draw(episode_seed(cfg.ppo.seed, episode), episode)?;
        let (transitions, trace) = env_episode(
            &system,
            &trainer.params,
            &cfg.solver,
            &cfg.actions,
            cfg.reward,
            &mut rollout_rng,
        )?;
        let entry = EpisodeLog {
            episode,
            total_reward: transitions.iter().map(|t| t.reward).sum(),
            cycles: trace.cycles(),
            final_rel_residual: trace.final_rel_residual(),
        };
        buffer.extend(transitions);
        if (episode + 1) % cfg.episodes_per_update == 0 || episode + 1 == cfg.ppo.episodes {
            trainer.update(&buffer).map_err(|e| match e {
                Error::NonFiniteLoss { diagnostics, .. } => Error::NonFiniteLoss {
                    episode: Some(episode),
                    diagnostics,
                },
                other => other,
            })?;
            buffer.clear();
        }
        on_episode(&entry);
        log.push(entry);
    }
    Ok((trainer.params, log))
}
