//! The solver as an RL environment: one step per FGMRES restart cycle.

use rand::Rng;

use super::policy::{sample_action, ActionSpace, PolicyParameters};
use super::update::Transition;
use crate::error::Result;
use crate::fgmres::{fgmres_solve, BlockSizeChooser, SolveTrace, SolverConfig, SolverObservation, OBS_DIM};
use crate::problem::LinearSystem;

/// Per-cycle reward signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RewardMode {
    /// `−rel_residual` after the cycle.
    #[default]
    NegativeResidual,
    /// `log10(rel_prev) − log10(rel)`: orders of magnitude gained.
    LogDecrement,
}

impl RewardMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "negative-residual" | "residual" => Some(Self::NegativeResidual),
            "log-decrement" => Some(Self::LogDecrement),
            _ => None,
        }
    }

    pub fn rewards(self, trace: &SolveTrace) -> Vec<f64> {
        let mut prev = 1.0f64;
        trace
            .records
            .iter()
            .map(|r| {
                let rel = r.rel_residual;
                let reward = match self {
                    RewardMode::NegativeResidual => -rel.min(1e6),
                    RewardMode::LogDecrement => {
                        let lg = |v: f64| if v > 0.0 { v.log10().clamp(-16.0, 6.0) } else { -16.0 };
                        lg(prev) - lg(rel)
                    }
                };
                prev = rel;
                if reward.is_finite() {
                    reward
                } else {
                    -1e6
                }
            })
            .collect()
    }
}

/// Greedy (argmax) decoding of a trained policy.
#[derive(Debug)]
pub struct PolicyChooser<'a> {
    params: &'a PolicyParameters,
    /// Block sizes chosen so far, in cycle order.
    pub choices: Vec<usize>,
}

impl<'a> PolicyChooser<'a> {
    pub fn new(params: &'a PolicyParameters) -> Self {
        Self {
            params,
            choices: Vec::new(),
        }
    }
}

impl BlockSizeChooser for PolicyChooser<'_> {
    fn choose(&mut self, obs: &SolverObservation) -> usize {
        let space = &self.params.actions;
        let features = obs.features(space.max());
        let k = space.block_size(self.params.greedy_action(&features), obs.n);
        self.choices.push(k);
        k
    }
}

/// Stochastic chooser used during rollouts; records what PPO needs.
struct SamplingChooser<'a, R: Rng> {
    params: &'a PolicyParameters,
    rng: &'a mut R,
    steps: Vec<([f64; OBS_DIM], usize, f64, f64)>,
}

impl<R: Rng> BlockSizeChooser for SamplingChooser<'_, R> {
    fn choose(&mut self, obs: &SolverObservation) -> usize {
        let space = &self.params.actions;
        let features = obs.features(space.max());
        let (probs, value) = self.params.forward(&features);
        let (idx, log_prob) = sample_action(&probs, self.rng);
        self.steps.push((features, idx, log_prob, value));
        space.block_size(idx, obs.n)
    }
}

/// Runs one sampled solve of `system`, returning one transition per cycle.
pub fn env_episode<R: Rng>(
    system: &LinearSystem,
    params: &PolicyParameters,
    cfg: &SolverConfig,
    space: &ActionSpace,
    reward: RewardMode,
    rng: &mut R,
) -> Result<(Vec<Transition>, SolveTrace)> {
    params.check_action_space(space)?;
    let mut chooser = SamplingChooser {
        params,
        rng,
        steps: Vec::new(),
    };
    let result = fgmres_solve(&system.a, &system.b, &mut chooser, cfg)?;
    let rewards = reward.rewards(&result.trace);
    debug_assert_eq!(rewards.len(), chooser.steps.len());
    let last = chooser.steps.len().saturating_sub(1);
    let transitions = chooser
        .steps
        .into_iter()
        .zip(rewards)
        .enumerate()
        .map(|(i, ((obs, action_index, log_prob, value), reward))| Transition {
            obs,
            action_index,
            log_prob,
            reward,
            value,
            done: i == last,
        })
        .collect();
    Ok((transitions, result.trace))
}

/// Greedy-policy solve of a system.
pub fn solve_with_policy(
    system: &LinearSystem,
    params: &PolicyParameters,
    cfg: &SolverConfig,
) -> Result<crate::fgmres::SolveResult> {
    let mut chooser = PolicyChooser::new(params);
    fgmres_solve(&system.a, &system.b, &mut chooser, cfg)
}
