//! Clipped group-relative objective with a k3 KL penalty, and its exact
//! gradient for the surrogate policy.

use super::surrogate::{Features, SurrogatePolicy, NUM_ACTIONS, NUM_FEATURES};
use super::{TgrpoError, TrainerConfig};

/// `min(ratio * A, clip(ratio, 1 - eps, 1 + eps) * A)`.
pub fn clipped_term(ratio: f64, advantage: f64, clip_eps: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps);
    (ratio * advantage).min(clipped * advantage)
}

/// k3 estimate `r - ln r - 1` with `r = pi_ref / pi_current`.
pub fn kl_penalty(logp_current: f64, logp_ref: f64) -> f64 {
    let log_r = logp_ref - logp_current;
    log_r.exp() - log_r - 1.0
}

/// One judged node as seen by the optimizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicySample {
    pub features: Features,
    /// Index into the accept/continue/delete action order.
    pub action: usize,
    pub old_logprob: f64,
    pub advantage: f64,
}

pub type WeightGrad = [[f64; NUM_ACTIONS]; NUM_FEATURES];

/// Mean over samples of the clipped term minus `beta` times the KL estimate.
pub fn objective(
    samples: &[PolicySample],
    policy: &SurrogatePolicy,
    reference: &SurrogatePolicy,
    cfg: &TrainerConfig,
) -> Result<f64, TgrpoError> {
    objective_with_grad(samples, policy, reference, cfg).map(|(j, _)| j)
}

/// Objective `J` together with the gradient of `-J` with respect to the
/// policy weights.
pub fn objective_with_grad(
    samples: &[PolicySample],
    policy: &SurrogatePolicy,
    reference: &SurrogatePolicy,
    cfg: &TrainerConfig,
) -> Result<(f64, WeightGrad), TgrpoError> {
    if samples.is_empty() {
        return Err(TgrpoError::EmptyGroup);
    }
    let scale = 1.0 / samples.len() as f64;
    let mut total = 0.0;
    let mut grad = [[0.0; NUM_ACTIONS]; NUM_FEATURES];
    for s in samples {
        let logp = policy.log_prob(&s.features, s.action);
        let logp_ref = reference.log_prob(&s.features, s.action);
        let ratio = (logp - s.old_logprob).exp();

        let unclipped = ratio * s.advantage;
        let clipped = ratio.clamp(1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * s.advantage;
        // The clipped branch is constant in the weights.
        let (term, d_term) = if unclipped <= clipped {
            (unclipped, unclipped)
        } else {
            (clipped, 0.0)
        };
        let ref_ratio = (logp_ref - logp).exp();
        let kl = ref_ratio - (logp_ref - logp) - 1.0;
        total += term - cfg.kl_beta * kl;

        // d/dlogp of (term - beta * kl).
        let d_logp = d_term + cfg.kl_beta * (ref_ratio - 1.0);
        let g = policy.log_prob_grad(&s.features, s.action);
        for (grow, srow) in grad.iter_mut().zip(&g) {
            for (gc, sc) in grow.iter_mut().zip(srow) {
                *gc -= scale * d_logp * sc;
            }
        }
    }
    Ok((total * scale, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn clipped_term_cases() {
        assert_eq!(clipped_term(1.0, 2.0, 0.2), 2.0);
        assert_abs_diff_eq!(clipped_term(1.5, 1.0, 0.2), 1.2, epsilon = 1e-12);
        assert_abs_diff_eq!(clipped_term(0.5, -1.0, 0.2), -0.8, epsilon = 1e-12);
    }

    #[test]
    fn kl_cases() {
        assert_eq!(kl_penalty(-0.3, -0.3), 0.0);
        // r = 2
        assert_abs_diff_eq!(kl_penalty(0.0, 2f64.ln()), 0.3068528194400547, epsilon = 1e-12);
        for (a, b) in [(-3.0, -0.1), (-0.1, -3.0), (-1.0, -1.0001)] {
            assert!(kl_penalty(a, b) >= 0.0);
        }
    }

    fn samples() -> Vec<PolicySample> {
        let p = SurrogatePolicy::random(0.5, 3);
        let xs = [[0.9, 0.25, 3.0, 1.0], [0.1, 0.5, 2.0, 1.0], [-0.2, 0.75, 1.5, 1.0]];
        let adv = [1.2247, -1.2247, 0.0];
        xs.iter()
            .zip(adv)
            .enumerate()
            .map(|(i, (x, a))| PolicySample {
                features: *x,
                action: i % 3,
                old_logprob: p.log_prob(x, i % 3),
                advantage: a,
            })
            .collect()
    }

    #[test]
    fn snapshot_objective_is_mean_advantage() {
        let p = SurrogatePolicy::random(0.5, 3);
        let s = samples();
        let mut cfg = TrainerConfig {
            kl_beta: 0.0,
            ..Default::default()
        };
        let mean_adv = s.iter().map(|x| x.advantage).sum::<f64>() / 3.0;
        assert_abs_diff_eq!(objective(&s, &p, &p, &cfg).unwrap(), mean_adv, epsilon = 1e-12);
        cfg.kl_beta = 0.5;
        assert_abs_diff_eq!(objective(&s, &p, &p, &cfg).unwrap(), mean_adv, epsilon = 1e-12);
    }

    #[test]
    fn empty_group_rejected() {
        let p = SurrogatePolicy::zeros();
        assert!(matches!(
            objective(&[], &p, &p, &TrainerConfig::default()),
            Err(TgrpoError::EmptyGroup)
        ));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let s = samples();
        let reference = SurrogatePolicy::random(0.5, 11);
        let policy = SurrogatePolicy::random(0.8, 5);
        let cfg = TrainerConfig::default();
        let (_, g) = objective_with_grad(&s, &policy, &reference, &cfg).unwrap();
        let h = 1e-5;
        for f in 0..NUM_FEATURES {
            for a in 0..NUM_ACTIONS {
                let mut plus = policy.clone();
                plus.weights[f][a] += h;
                let mut minus = policy.clone();
                minus.weights[f][a] -= h;
                let jp = objective(&s, &plus, &reference, &cfg).unwrap();
                let jm = objective(&s, &minus, &reference, &cfg).unwrap();
                let fd = -(jp - jm) / (2.0 * h);
                assert_abs_diff_eq!(g[f][a], fd, epsilon = 1e-7);
            }
        }
    }
}
