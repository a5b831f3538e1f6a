use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::objective::objective_with_grad;
use super::reward::{growth_rate, RewardConfig};
use super::rollout::{mix_seed, rollout, QaEnvironment};
use super::surrogate::SurrogatePolicy;
use super::{TgrpoError, TrainerConfig};
use crate::clients::Embedder;
use crate::tree::TreeSettings;

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iter: usize,
    #[serde(rename = "J")]
    pub j: f64,
    pub mean_reward: f64,
    pub p_accept: f64,
    pub p_continue: f64,
    pub p_delete: f64,
    pub mean_nodes: f64,
    pub lambda_auxin: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub policy: SurrogatePolicy,
    pub log: Vec<IterationLog>,
}

/// Gradient ascent on the clipped group objective. The reference policy is
/// the initial one; the sampling snapshot is refreshed every iteration.
pub fn train<E: QaEnvironment>(
    envs: &[E],
    initial: SurrogatePolicy,
    embedder: &dyn Embedder,
    settings: &TreeSettings,
    rewards: &RewardConfig,
    cfg: &TrainerConfig,
    mut on_iteration: impl FnMut(&IterationLog),
) -> Result<TrainOutcome, TgrpoError> {
    if envs.is_empty() {
        return Err(TgrpoError::NoEnvironments);
    }
    cfg.validate().map_err(|f| TgrpoError::InvalidConfig(format!("trainer.{f}")))?;
    let lambda_auxin = growth_rate(rewards)?;
    let reference = initial.clone();
    let mut policy = initial;
    let mut picker = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, 0x7472_6169_6e));
    let mut log = Vec::with_capacity(cfg.iterations);

    for iter in 0..cfg.iterations {
        let mut batch = Vec::with_capacity(cfg.questions_per_iteration);
        for q in 0..cfg.questions_per_iteration {
            let env = &envs[picker.gen_range(0..envs.len())];
            let seed = mix_seed(cfg.seed, ((iter as u64) << 16) | q as u64);
            batch.push(rollout(env, &policy, embedder, settings, rewards, cfg, seed)?);
        }
        let samples: Vec<Vec<_>> = batch.iter().map(|g| g.samples()).collect::<Result<_, _>>()?;

        let mut first_j = 0.0;
        for epoch in 0..cfg.inner_epochs {
            let mut j_sum = 0.0;
            let mut grad = [[0.0; 3]; 4];
            for s in &samples {
                let (j, g) = objective_with_grad(s, &policy, &reference, cfg)?;
                j_sum += j;
                for (acc, row) in grad.iter_mut().zip(&g) {
                    for (a, v) in acc.iter_mut().zip(row) {
                        *a += v / samples.len() as f64;
                    }
                }
            }
            if grad.iter().flatten().any(|g| !g.is_finite()) {
                return Err(TgrpoError::NonFiniteGradient {
                    iteration: iter,
                    detail: format!("grad={grad:?} weights={:?}", policy.weights),
                });
            }
            if epoch == 0 {
                first_j = j_sum / samples.len() as f64;
            }
            for (row, grow) in policy.weights.iter_mut().zip(&grad) {
                for (w, g) in row.iter_mut().zip(grow) {
                    *w -= cfg.learning_rate * g;
                }
            }
        }

        let n = batch.len() as f64;
        let freq = batch.iter().fold([0.0; 3], |mut acc, g| {
            for (a, f) in acc.iter_mut().zip(g.action_frequencies()) {
                *a += f / n;
            }
            acc
        });
        let entry = IterationLog {
            iter,
            j: first_j,
            mean_reward: batch.iter().map(|g| g.mean_reward()).sum::<f64>() / n,
            p_accept: freq[0],
            p_continue: freq[1],
            p_delete: freq[2],
            mean_nodes: batch.iter().map(|g| g.mean_nodes()).sum::<f64>() / n,
            lambda_auxin,
        };
        on_iteration(&entry);
        log.push(entry);
    }
    Ok(TrainOutcome { policy, log })
}
