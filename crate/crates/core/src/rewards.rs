//! Reward signals: GRPO group normalization, binary pairwise rewards, and the
//! scaling constant `C` relating the two.

use crate::error::{check_index, Error, Result};

/// Default variance guard for [`group_normalize`].
pub const DEFAULT_EPS_SIGMA: f64 = 1e-8;

/// `(state, preferred, rejected)`: `preferred` is strictly preferred over `rejected` in `state`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PreferencePair {
    pub state: usize,
    pub preferred: usize,
    pub rejected: usize,
}

impl PreferencePair {
    pub fn new(state: usize, preferred: usize, rejected: usize) -> Result<Self> {
        if preferred == rejected {
            return Err(Error::Argument(format!(
                "preferred and rejected action are both {preferred}"
            )));
        }
        Ok(Self {
            state,
            preferred,
            rejected,
        })
    }

    pub fn check_bounds(&self, states: usize, actions: usize) -> Result<()> {
        check_index("state", self.state, states)?;
        check_index("preferred action", self.preferred, actions)?;
        check_index("rejected action", self.rejected, actions)
    }
}

/// One prompt with `K` sampled responses and their scalar rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSample {
    pub state: usize,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
}

impl GroupSample {
    pub fn new(state: usize, actions: Vec<usize>, rewards: Vec<f64>) -> Result<Self> {
        if actions.len() < 2 {
            return Err(Error::Argument(format!(
                "group needs K >= 2 members, got {}",
                actions.len()
            )));
        }
        if actions.len() != rewards.len() {
            return Err(Error::Dimension(format!(
                "{} actions but {} rewards",
                actions.len(),
                rewards.len()
            )));
        }
        if rewards.iter().any(|r| !r.is_finite()) {
            return Err(Error::Argument("group rewards must be finite".into()));
        }
        Ok(Self {
            state,
            actions,
            rewards,
        })
    }

    pub fn size(&self) -> usize {
        self.actions.len()
    }

    pub fn check_bounds(&self, states: usize, actions: usize) -> Result<()> {
        check_index("state", self.state, states)?;
        for &a in &self.actions {
            check_index("group action", a, actions)?;
        }
        Ok(())
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard deviation with divisor `n`.
pub fn population_std(xs: &[f64]) -> f64 {
    let mu = mean(xs);
    (xs.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// `(R_i - mean) / max(sigma, eps_sigma)` with the population standard deviation.
///
/// All-equal groups map to zeros. With two distinct rewards the output is
/// exactly `{-1, +1}` up to rounding.
pub fn group_normalize(rewards: &[f64], eps_sigma: f64) -> Vec<f64> {
    if rewards.is_empty() {
        return Vec::new();
    }
    let mu = mean(rewards);
    let scale = population_std(rewards).max(eps_sigma);
    rewards.iter().map(|r| (r - mu) / scale).collect()
}

/// `+1` for the preferred action, `-1` for the rejected one.
pub fn soft_pair_reward(pair: &PreferencePair, action: usize) -> Result<f64> {
    if action == pair.preferred {
        Ok(1.0)
    } else if action == pair.rejected {
        Ok(-1.0)
    } else {
        Err(Error::Argument(format!(
            "action {action} is not part of pair ({}, {})",
            pair.preferred, pair.rejected
        )))
    }
}

/// Which reward statistics supply `sigma_R` inside the scaling constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SigmaScope {
    /// Each pair's own K=2 group.
    #[default]
    PerGroup,
    /// One population standard deviation over every reward in the batch.
    Batch,
}

impl std::str::FromStr for SigmaScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per_group" => Ok(Self::PerGroup),
            "batch" => Ok(Self::Batch),
            other => Err(Error::Argument(format!(
                "unknown sigma scope {other:?} (expected per_group or batch)"
            ))),
        }
    }
}

impl std::fmt::Display for SigmaScope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::PerGroup => "per_group",
            Self::Batch => "batch",
        })
    }
}

/// Reward-model scores attached to one preference pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairRewards {
    pub preferred: f64,
    pub rejected: f64,
    pub sigma: f64,
}

/// `sigma_R` for every `(R_p, R_r)` pair under the given scope.
pub fn pair_sigmas(rewards: &[(f64, f64)], scope: SigmaScope) -> Vec<f64> {
    match scope {
        SigmaScope::PerGroup => rewards
            .iter()
            .map(|&(p, r)| population_std(&[p, r]))
            .collect(),
        SigmaScope::Batch => {
            let all: Vec<f64> = rewards.iter().flat_map(|&(p, r)| [p, r]).collect();
            let sigma = if all.is_empty() { 0.0 } else { population_std(&all) };
            vec![sigma; rewards.len()]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingConstant {
    pub value: f64,
    /// Pairs where the reward model does not rank the preferred response strictly higher.
    pub sign_inconsistent: usize,
    pub pairs: usize,
}

impl ScalingConstant {
    pub fn sign_inconsistency_rate(&self) -> f64 {
        self.sign_inconsistent as f64 / self.pairs as f64
    }
}

/// `C = mean over pairs of (R_p - R_r) / (2 sigma_R)`.
///
/// Pairs with `R_p <= R_r` still enter the mean; they are counted in
/// `sign_inconsistent`.
pub fn scaling_constant(pairs: &[PairRewards]) -> Result<ScalingConstant> {
    if pairs.is_empty() {
        return Err(Error::Argument("scaling constant needs at least one pair".into()));
    }
    let mut total = 0.0;
    let mut inconsistent = 0;
    for (i, p) in pairs.iter().enumerate() {
        if p.sigma.is_nan() || p.sigma <= 0.0 {
            return Err(Error::Argument(format!(
                "pair {i} has sigma_R = {}, expected > 0",
                p.sigma
            )));
        }
        if p.preferred <= p.rejected {
            inconsistent += 1;
        }
        total += (p.preferred - p.rejected) / (2.0 * p.sigma);
    }
    Ok(ScalingConstant {
        value: total / pairs.len() as f64,
        sign_inconsistent: inconsistent,
        pairs: pairs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalize_examples() {
        let z = group_normalize(&[1.0, 3.0], DEFAULT_EPS_SIGMA);
        assert!((z[0] + 1.0).abs() < 1e-9 && (z[1] - 1.0).abs() < 1e-9);

        assert_eq!(group_normalize(&[5.0, 5.0, 5.0], DEFAULT_EPS_SIGMA), vec![0.0; 3]);

        // population sigma = sqrt(2/3)
        let z = group_normalize(&[1.0, 2.0, 3.0], DEFAULT_EPS_SIGMA);
        let expected = 1.0 / (2.0f64 / 3.0).sqrt();
        assert!((z[0] + expected).abs() < 1e-12);
        assert_eq!(z[1], 0.0);
        assert!((z[2] - 1.224745).abs() < 1e-6);
    }

    #[test]
    fn soft_reward_examples() {
        let pair = PreferencePair::new(0, 3, 1).unwrap();
        assert_eq!(soft_pair_reward(&pair, 3).unwrap(), 1.0);
        assert_eq!(soft_pair_reward(&pair, 1).unwrap(), -1.0);
        let delta = soft_pair_reward(&pair, 3).unwrap() - soft_pair_reward(&pair, 1).unwrap();
        assert_eq!(delta, 2.0);
        assert!(matches!(soft_pair_reward(&pair, 0), Err(Error::Argument(_))));
    }

    #[test]
    fn pair_requires_distinct_actions() {
        assert!(PreferencePair::new(0, 2, 2).is_err());
        let pair = PreferencePair::new(1, 0, 4).unwrap();
        assert!(pair.check_bounds(2, 5).is_ok());
        assert!(pair.check_bounds(1, 5).is_err());
        assert!(pair.check_bounds(2, 4).is_err());
    }

    #[test]
    fn group_sample_validation() {
        assert!(GroupSample::new(0, vec![1], vec![0.0]).is_err());
        assert!(GroupSample::new(0, vec![1, 2], vec![0.0]).is_err());
        assert!(GroupSample::new(0, vec![1, 2], vec![0.0, f64::INFINITY]).is_err());
        assert!(GroupSample::new(0, vec![1, 1, 2], vec![0.0, 1.0, 2.0]).is_ok());
    }

    #[test]
    fn scaling_constant_examples() {
        let c = scaling_constant(&[PairRewards {
            preferred: 3.0,
            rejected: 1.0,
            sigma: 1.0,
        }])
        .unwrap();
        assert_eq!(c.value, 1.0);
        assert_eq!(c.sign_inconsistent, 0);

        let tied = vec![
            PairRewards {
                preferred: 2.0,
                rejected: 2.0,
                sigma: 1.0,
            };
            4
        ];
        let c = scaling_constant(&tied).unwrap();
        assert_eq!(c.value, 0.0);
        assert_eq!(c.sign_inconsistency_rate(), 1.0);

        let bad = PairRewards {
            preferred: 2.0,
            rejected: 1.0,
            sigma: 0.0,
        };
        assert!(matches!(scaling_constant(&[bad]), Err(Error::Argument(_))));
        assert!(scaling_constant(&[]).is_err());
    }

    #[test]
    fn per_group_sigma_gives_unit_constant() {
        // 1000 random reward pairs with R_p > R_r: C = 1 for each pair.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let raw: Vec<(f64, f64)> = (0..1000)
            .map(|_| {
                let a: f64 = rng.random_range(-50.0..50.0);
                let b: f64 = rng.random_range(-50.0..50.0);
                (a.max(b), a.min(b))
            })
            .collect();
        let sigmas = pair_sigmas(&raw, SigmaScope::PerGroup);
        for (&(p, r), &s) in raw.iter().zip(&sigmas) {
            let one = scaling_constant(&[PairRewards {
                preferred: p,
                rejected: r,
                sigma: s,
            }])
            .unwrap();
            assert!((one.value - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn batch_sigma_is_shared() {
        let s = pair_sigmas(&[(1.0, 0.0), (3.0, 2.0)], SigmaScope::Batch);
        assert_eq!(s[0], s[1]);
        assert!((s[0] - population_std(&[1.0, 0.0, 3.0, 2.0])).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn normalize_is_affine_invariant(
            rewards in prop::collection::vec(-100.0f64..100.0, 2..12),
            scale in 1e-3f64..1e3,
            offset in -1e3f64..1e3,
        ) {
            prop_assume!(population_std(&rewards) > 1e-3);
            let base = group_normalize(&rewards, DEFAULT_EPS_SIGMA);
            let moved: Vec<f64> = rewards.iter().map(|r| scale * r + offset).collect();
            let z = group_normalize(&moved, DEFAULT_EPS_SIGMA);
            for (a, b) in base.iter().zip(&z) {
                prop_assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
            prop_assert!(mean(&z).abs() < 1e-12);
        }

        #[test]
        fn two_distinct_rewards_normalize_to_unit_signs(a in -1e3f64..1e3, b in -1e3f64..1e3) {
            prop_assume!((a - b).abs() > 1e-6);
            let z = group_normalize(&[a, b], DEFAULT_EPS_SIGMA);
            let sign = if a > b { 1.0 } else { -1.0 };
            prop_assert!((z[0] - sign).abs() < 1e-6);
            prop_assert!((z[1] + sign).abs() < 1e-6);
        }

        #[test]
        fn constant_is_positive_when_labels_agree(
            raw in prop::collection::vec((-10.0f64..10.0, 1e-3f64..10.0), 1..50)
        ) {
            let pairs: Vec<(f64, f64)> = raw.iter().map(|&(r, gap)| (r + gap, r)).collect();
            for scope in [SigmaScope::PerGroup, SigmaScope::Batch] {
                let sig = pair_sigmas(&pairs, scope);
                let items: Vec<PairRewards> = pairs
                    .iter()
                    .zip(&sig)
                    .map(|(&(p, r), &s)| PairRewards { preferred: p, rejected: r, sigma: s })
                    .collect();
                let c = scaling_constant(&items).unwrap();
                prop_assert!(c.value > 0.0);
                prop_assert_eq!(c.sign_inconsistent, 0);
            }
        }
    }
}
