use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::objective::PolicySample;
use super::reward::{group_advantages, node_reward, tree_reward, RewardBreakdown, RewardConfig};
use super::surrogate::{embedding_features, Features};
use super::{TgrpoError, TrainerConfig};
use crate::clients::{embed, Action, Answerer, Captioner, Clients, Embedder, Policy};
use crate::frames::FrameSequence;
use crate::tree::{build_tree, finish_tree, TreeError, TreeSettings, VideoTree};

/// A question about one video, with the model roles needed to answer it.
pub trait QaEnvironment: Sync {
    fn frames(&self) -> &FrameSequence;
    fn question(&self) -> &str;
    fn gold(&self) -> &str;
    fn captioner(&self) -> &dyn Captioner;
    fn answerer(&self) -> &dyn Answerer;
    /// Stable identifier mixed into per-instance seeds.
    fn seed_key(&self) -> u64 {
        0
    }
}

/// splitmix64 step; used to derive independent sub-seeds.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeRecord {
    pub tree: usize,
    pub node: usize,
    pub action: Action,
    #[serde(skip)]
    pub features: Option<Features>,
    /// Log-probability of the action under the sampling policy.
    pub old_logprob: Option<f64>,
    pub reward: RewardBreakdown,
    pub advantage: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutGroup {
    pub question: String,
    pub gold: String,
    pub trees: Vec<VideoTree>,
    pub tree_rewards: Vec<f64>,
    /// Every judged node of every tree, tree by tree in decision order.
    pub records: Vec<NodeRecord>,
}

impl RolloutGroup {
    pub fn rewards(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.reward.r_total).collect()
    }

    pub fn advantages(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.advantage).collect()
    }

    pub fn old_logprobs(&self) -> Vec<Option<f64>> {
        self.records.iter().map(|r| r.old_logprob).collect()
    }

    pub fn mean_reward(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().map(|r| r.reward.r_total).sum::<f64>() / self.records.len() as f64
    }

    pub fn mean_nodes(&self) -> f64 {
        self.trees.iter().map(|t| t.node_count() as f64).sum::<f64>() / self.trees.len().max(1) as f64
    }

    /// Frequencies of accept, continue and delete among judged nodes.
    pub fn action_frequencies(&self) -> [f64; 3] {
        let n = self.records.len().max(1) as f64;
        let mut out = [0.0; 3];
        for r in &self.records {
            if let Some(i) = r.action.decision_index() {
                out[i] += 1.0 / n;
            }
        }
        out
    }

    /// Optimizer view of the group; every node needs features and a
    /// recorded log-probability.
    pub fn samples(&self) -> Result<Vec<PolicySample>, TgrpoError> {
        self.records
            .iter()
            .map(|r| {
                let missing = || TgrpoError::MissingLogprob {
                    tree: r.tree,
                    node: r.node,
                };
                Ok(PolicySample {
                    features: r.features.ok_or_else(missing)?,
                    action: r.action.decision_index().ok_or_else(missing)?,
                    old_logprob: r.old_logprob.ok_or_else(missing)?,
                    advantage: r.advantage,
                })
            })
            .collect()
    }

    pub fn dump(&self) -> serde_json::Value {
        json!({
            "question": self.question,
            "gold": self.gold,
            "trees": self.trees,
            "tree_rewards": self.tree_rewards,
            "nodes": self.records,
            "rewards": self.rewards(),
            "advantages": self.advantages(),
        })
    }
}

/// Builds `group_size` trees with independent sampling seeds, answers each,
/// scores every judged node and normalizes rewards over the whole group.
pub fn rollout<E: QaEnvironment + ?Sized>(
    env: &E,
    policy: &dyn Policy,
    embedder: &dyn Embedder,
    settings: &TreeSettings,
    rewards: &RewardConfig,
    cfg: &TrainerConfig,
    seed: u64,
) -> Result<RolloutGroup, TgrpoError> {
    if cfg.group_size < 2 {
        return Err(TgrpoError::InvalidConfig("trainer.group_size must be >= 2".into()));
    }
    let clients = Clients {
        captioner: env.captioner(),
        embedder,
        policy,
        answerer: env.answerer(),
    };
    let question_embedding = embed(&[env.question().to_string()], embedder)
        .map_err(TreeError::from)?
        .remove(0);
    let max_depth = settings.exploration.max_depth;

    let built: Vec<(VideoTree, f64)> = (0..cfg.group_size)
        .into_par_iter()
        .map(|i| {
            let mut tree = build_tree(env.frames(), env.question(), clients, settings, mix_seed(seed, i as u64 + 1))?;
            let r_tree = match finish_tree(&mut tree, env.answerer(), &settings.exploration) {
                Ok(answer) => tree_reward(&answer, env.gold()),
                Err(TreeError::NoKeyframes) => 0.0,
                Err(e) => return Err(e),
            };
            Ok((tree, r_tree))
        })
        .collect::<Result<_, TreeError>>()?;

    let mut records = Vec::new();
    for (t, (tree, r_tree)) in built.iter().enumerate() {
        let before = records.len();
        for node in tree.decided_nodes() {
            let Some(out) = &node.output else { continue };
            let features = node
                .embedding
                .as_ref()
                .map(|e| embedding_features(e, &question_embedding, node.depth, max_depth, node.frame_count()));
            records.push(NodeRecord {
                tree: t,
                node: node.id,
                action: out.action,
                features,
                old_logprob: out.action_logprob,
                reward: node_reward(out.format, out.length, out.action, *r_tree, rewards),
                advantage: 0.0,
            });
        }
        if records.len() == before {
            return Err(TgrpoError::EmptyTree(t));
        }
    }
    let totals: Vec<f64> = records.iter().map(|r| r.reward.r_total).collect();
    for (r, a) in records.iter_mut().zip(group_advantages(&totals, cfg.std_floor)) {
        r.advantage = a;
    }
    let (trees, tree_rewards) = built.into_iter().unzip();
    Ok(RolloutGroup {
        question: env.question().to_string(),
        gold: env.gold().to_string(),
        trees,
        tree_rewards,
        records,
    })
}
