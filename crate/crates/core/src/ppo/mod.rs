//! Policy-gradient tuning of the preconditioner block size.

pub mod env;
pub mod gae;
pub mod mlp;
pub mod policy;
pub mod train;
pub mod update;

pub use env::{env_episode, solve_with_policy, PolicyChooser, RewardMode};
pub use gae::gae;
pub use mlp::{Activation, Mlp};
pub use policy::{policy_forward, sample_action, softmax, ActionSpace, PolicyParameters};
pub use train::{train, train_with, EpisodeLog, ProblemFamily, TrainConfig};
pub use update::{ppo_update, PpoConfig, PpoTrainer, Transition, UpdateStats};
