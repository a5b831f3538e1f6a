//! Tree-structured group-relative policy optimization.
//!
//! Every judged node of every tree in a rollout group is one sample. Node
//! rewards combine a format term with length and action terms that only
//! count when the tree answered correctly; advantages are z-scores over the
//! pooled node rewards of the whole group.

pub mod objective;
pub mod reward;
pub mod rollout;
pub mod surrogate;
pub mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tree::TreeError;

pub use objective::{clipped_term, kl_penalty, objective, objective_with_grad, PolicySample};
pub use reward::{
    action_reward, format_reward, group_advantages, growth_rate, length_reward, total_reward, tree_reward,
    RewardBreakdown, RewardConfig,
};
pub use rollout::{rollout, QaEnvironment, RolloutGroup};
pub use surrogate::{Greedy, SurrogatePolicy};
pub use train::{train, IterationLog, TrainOutcome};

#[derive(Debug, Error)]
pub enum TgrpoError {
    #[error("continue reward must be positive to define a growth rate")]
    ZeroContinueReward,
    #[error("rollout group has no samples")]
    EmptyGroup,
    #[error("tree {0} of the rollout has no judged nodes")]
    EmptyTree(usize),
    #[error("node {node} of tree {tree} has no recorded action log-probability")]
    MissingLogprob { tree: usize, node: usize },
    #[error("non-finite gradient at iteration {iteration}: {detail}")]
    NonFiniteGradient { iteration: usize, detail: String },
    #[error("no training environments")]
    NoEnvironments,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Tree(#[from] TreeError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainerConfig {
    pub clip_eps: f64,
    pub kl_beta: f64,
    pub group_size: usize,
    pub learning_rate: f64,
    pub iterations: usize,
    pub inner_epochs: usize,
    pub seed: u64,
    pub std_floor: f64,
    /// Half-width of the uniform distribution used to initialize weights.
    pub init_scale: f64,
    pub questions_per_iteration: usize,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            clip_eps: 0.2,
            kl_beta: 0.04,
            group_size: 4,
            learning_rate: 0.05,
            iterations: 200,
            inner_epochs: 1,
            seed: 0,
            std_floor: 1e-8,
            init_scale: 0.1,
            questions_per_iteration: 1,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<(), &'static str> {
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return Err("clip_eps");
        }
        if !(self.kl_beta >= 0.0 && self.kl_beta.is_finite()) {
            return Err("kl_beta");
        }
        if self.group_size < 2 {
            return Err("group_size");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err("learning_rate");
        }
        if self.inner_epochs < 1 {
            return Err("inner_epochs");
        }
        if !(self.std_floor > 0.0) {
            return Err("std_floor");
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err("init_scale");
        }
        if self.questions_per_iteration < 1 {
            return Err("questions_per_iteration");
        }
        Ok(())
    }

    pub fn initial_policy(&self) -> SurrogatePolicy {
        SurrogatePolicy::random(self.init_scale, rollout::mix_seed(self.seed, 0x696e_6974))
    }
}
