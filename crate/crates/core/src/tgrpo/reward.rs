//! Node- and tree-level rewards and group-relative advantages.

use serde::{Deserialize, Serialize};

use super::TgrpoError;
use crate::clients::{Action, FormatClass};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub delta_max: f64,
    pub delta_corr: f64,
    pub rho: f64,
    /// Length smoothness, in tokens.
    pub sigma: f64,
    /// Target completion length, in tokens.
    pub l_target: f64,
    pub delta_d: f64,
    pub delta_a: f64,
    pub delta_c: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            delta_max: 1.0,
            delta_corr: 0.5,
            rho: 1.0,
            sigma: 80.0,
            l_target: 320.0,
            delta_d: 1.0,
            delta_a: 0.8,
            delta_c: 0.3,
        }
    }
}

impl RewardConfig {
    /// Hard invariants. Returns the name of the offending field.
    pub fn validate(&self) -> Result<(), &'static str> {
        let finite = [
            self.delta_max,
            self.delta_corr,
            self.rho,
            self.sigma,
            self.l_target,
            self.delta_d,
            self.delta_a,
            self.delta_c,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err("rewards");
        }
        if !(self.delta_corr >= 0.0) {
            return Err("delta_corr");
        }
        if !(self.delta_max >= self.delta_corr) {
            return Err("delta_max");
        }
        if !(self.rho > 0.0) {
            return Err("rho");
        }
        if !(self.sigma > 0.0) {
            return Err("sigma");
        }
        if !(self.l_target >= 0.0) {
            return Err("l_target");
        }
        if !(self.delta_d >= 0.0) {
            return Err("delta_d");
        }
        if !(self.delta_a >= 0.0) {
            return Err("delta_a");
        }
        if !(self.delta_c > 0.0) {
            return Err("delta_c");
        }
        Ok(())
    }

    /// Whether the action rewards follow the usual delete > accept > continue
    /// ordering. Growth-rate sweeps deliberately break it.
    pub fn has_standard_ordering(&self) -> bool {
        self.delta_d >= self.delta_a && self.delta_a >= self.delta_c
    }

    /// Copy with `delta_c` chosen so that the growth rate equals `lambda`.
    pub fn with_growth_rate(&self, lambda: f64) -> Self {
        Self {
            delta_c: (self.delta_d + self.delta_a) / (2.0 * lambda),
            ..*self
        }
    }
}

pub fn format_reward(format: FormatClass, cfg: &RewardConfig) -> f64 {
    match format {
        FormatClass::Max => cfg.delta_max,
        FormatClass::Corr => cfg.delta_corr,
        FormatClass::None => 0.0,
    }
}

/// Gaussian bump around the target length.
pub fn length_reward(length: usize, cfg: &RewardConfig) -> f64 {
    let diff = length as f64 - cfg.l_target;
    cfg.rho * (-(diff * diff) / (2.0 * cfg.sigma * cfg.sigma)).exp()
}

pub fn action_reward(action: Action, cfg: &RewardConfig) -> f64 {
    match action {
        Action::Delete => cfg.delta_d,
        Action::Accept => cfg.delta_a,
        Action::Continue => cfg.delta_c,
        Action::Invalid => 0.0,
    }
}

/// Ratio of the mean early-stop reward to the exploration reward.
pub fn growth_rate(cfg: &RewardConfig) -> Result<f64, TgrpoError> {
    if !(cfg.delta_c > 0.0) {
        return Err(TgrpoError::ZeroContinueReward);
    }
    Ok((cfg.delta_d + cfg.delta_a) / (2.0 * cfg.delta_c))
}

/// First alphabetic character, uppercased.
pub fn option_letter(text: &str) -> Option<char> {
    text.chars().find(|c| c.is_alphabetic()).map(|c| c.to_ascii_uppercase())
}

/// 1.0 when the predicted and gold option letters agree, else 0.0.
pub fn tree_reward(predicted: &str, gold: &str) -> f64 {
    match (option_letter(predicted), option_letter(gold)) {
        (Some(p), Some(g)) if p == g => 1.0,
        _ => 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_format: f64,
    pub r_length: f64,
    pub r_action: f64,
    pub r_tree: f64,
    pub r_total: f64,
}

/// Format reward plus the length and action rewards gated by tree correctness.
pub fn total_reward(r_format: f64, r_length: f64, r_action: f64, r_tree: f64) -> RewardBreakdown {
    RewardBreakdown {
        r_format,
        r_length,
        r_action,
        r_tree,
        r_total: r_format + (r_length + r_action) * r_tree,
    }
}

pub fn node_reward(format: FormatClass, length: usize, action: Action, r_tree: f64, cfg: &RewardConfig) -> RewardBreakdown {
    total_reward(
        format_reward(format, cfg),
        length_reward(length, cfg),
        action_reward(action, cfg),
        r_tree,
    )
}

/// Z-scores over the pooled rewards of every node of every tree, using the
/// population standard deviation. All zeros when the spread is below `std_floor`.
pub fn group_advantages(rewards: &[f64], std_floor: f64) -> Vec<f64> {
    if rewards.is_empty() {
        return Vec::new();
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if !(std >= std_floor) {
        return vec![0.0; rewards.len()];
    }
    rewards.iter().map(|r| (r - mean) / std).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn format_rewards() {
        let cfg = RewardConfig::default();
        assert_eq!(format_reward(FormatClass::Max, &cfg), 1.0);
        assert_eq!(format_reward(FormatClass::Corr, &cfg), 0.5);
        assert_eq!(format_reward(FormatClass::None, &cfg), 0.0);
    }

    #[test]
    fn length_rewards() {
        let cfg = RewardConfig::default();
        assert_eq!(length_reward(320, &cfg), 1.0);
        assert_abs_diff_eq!(length_reward(400, &cfg), 0.6065306597126334, epsilon = 1e-12);
        assert_abs_diff_eq!(length_reward(0, &cfg), 3.354626279025119e-4, epsilon = 1e-15);
    }

    #[test]
    fn action_rewards() {
        let cfg = RewardConfig::default();
        assert_eq!(action_reward(Action::Delete, &cfg), 1.0);
        assert_eq!(action_reward(Action::Accept, &cfg), 0.8);
        assert_eq!(action_reward(Action::Continue, &cfg), 0.3);
        assert_eq!(action_reward(Action::Invalid, &cfg), 0.0);
    }

    #[test]
    fn growth_rates() {
        let sym = RewardConfig {
            delta_d: 1.0,
            delta_a: 1.0,
            delta_c: 1.0,
            ..Default::default()
        };
        assert_eq!(growth_rate(&sym).unwrap(), 1.0);
        assert_abs_diff_eq!(growth_rate(&RewardConfig::default()).unwrap(), 3.0, epsilon = 1e-12);
        let zero = RewardConfig {
            delta_c: 0.0,
            ..Default::default()
        };
        assert!(matches!(growth_rate(&zero), Err(TgrpoError::ZeroContinueReward)));
        let half = RewardConfig::default().with_growth_rate(0.5);
        assert_abs_diff_eq!(half.delta_c, 1.8, epsilon = 1e-12);
        assert_abs_diff_eq!(growth_rate(&half).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn tree_rewards() {
        assert_eq!(tree_reward("B", "B"), 1.0);
        assert_eq!(tree_reward("(b) the runner", "B"), 1.0);
        assert_eq!(tree_reward("C", "B"), 0.0);
        assert_eq!(tree_reward("", "B"), 0.0);
    }

    #[test]
    fn total_rewards() {
        assert_abs_diff_eq!(total_reward(1.0, 0.5, 0.8, 1.0).r_total, 2.3, epsilon = 1e-12);
        assert_eq!(total_reward(1.0, 0.5, 0.8, 0.0).r_total, 1.0);
        assert_abs_diff_eq!(total_reward(0.5, 1.0, 0.3, 1.0).r_total, 1.8, epsilon = 1e-12);
    }

    #[test]
    fn advantages() {
        assert_eq!(group_advantages(&[1.0, 1.0, 1.0], 1e-8), vec![0.0; 3]);
        let a = group_advantages(&[1.0, 2.0, 3.0], 1e-8);
        assert_abs_diff_eq!(a[0], -1.224744871391589, epsilon = 1e-12);
        assert_abs_diff_eq!(a[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(a[2], 1.224744871391589, epsilon = 1e-12);
        let shifted = group_advantages(&[11.0, 12.0, 13.0], 1e-8);
        for (x, y) in a.iter().zip(&shifted) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn validation_names_fields() {
        assert_eq!(RewardConfig::default().validate(), Ok(()));
        let bad = RewardConfig {
            sigma: 0.0,
            ..Default::default()
        };
        assert_eq!(bad.validate(), Err("sigma"));
        let swapped = RewardConfig {
            delta_corr: 2.0,
            ..Default::default()
        };
        assert_eq!(swapped.validate(), Err("delta_max"));
        assert!(RewardConfig::default().with_growth_rate(0.5).validate().is_ok());
        assert!(!RewardConfig::default().with_growth_rate(0.5).has_standard_ordering());
    }

    proptest! {
        #[test]
        fn advantage_moments(rewards in proptest::collection::vec(-10.0f64..10.0, 2..64), c in -5.0f64..5.0, alpha in 0.1f64..10.0) {
            let a = group_advantages(&rewards, 1e-8);
            let n = a.len() as f64;
            let mean = a.iter().sum::<f64>() / n;
            let std = (a.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
            prop_assert!(mean.abs() < 1e-9);
            prop_assert!((std - 1.0).abs() < 1e-9 || a.iter().all(|x| *x == 0.0));
            let moved: Vec<f64> = rewards.iter().map(|r| alpha * r + c).collect();
            let b = group_advantages(&moved, 1e-8);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-6);
            }
        }
    }
}
