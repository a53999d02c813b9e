//! Synthetic preference bandits.
//!
//! Each state is a prompt, each action a response. True utilities drive the
//! preference labels; a noisy affine copy of them plays the reward model that
//! GRPO consumes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{check_index, Error, Result};
use crate::policy::TabularPolicy;
use crate::rewards::{GroupSample, PreferencePair};

/// Give up on drawing two distinct actions after this many tries.
pub const MAX_PAIR_ATTEMPTS: usize = 1000;

/// What a random stream is used for. Occupies the top 16 bits of the stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Utilities = 1,
    Training = 2,
    Variance = 3,
    Equivalence = 4,
    Verify = 5,
}

/// Seed plus stream id. Identical states reproduce identical draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngState {
    pub seed: u64,
    pub stream: u64,
}

impl RngState {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    /// Stream `index` within the block reserved for `purpose`.
    pub fn for_purpose(seed: u64, purpose: Purpose, index: u64) -> Self {
        debug_assert!(index < 1 << 48);
        Self::new(seed, ((purpose as u64) << 48) | index)
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// Environment parameters as they appear in config files.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub states: usize,
    pub actions: usize,
    pub seed: u64,
    pub noise_std: f64,
    pub reward_scale: f64,
    pub reward_offset: f64,
    pub label_temperature: f64,
}

impl Default for EnvSpec {
    fn default() -> Self {
        Self {
            states: 8,
            actions: 10,
            seed: 42,
            noise_std: 0.5,
            reward_scale: 1.0,
            reward_offset: 0.0,
            label_temperature: 0.0,
        }
    }
}

impl EnvSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &'static str, reason: String| Err(Error::InvalidParam { field, reason });
        if self.states == 0 {
            return bad("env.S", "need at least one state".into());
        }
        if self.actions < 2 {
            return bad("env.A", format!("{} is below 2", self.actions));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad("env.noise_std", format!("{} is not >= 0", self.noise_std));
        }
        if !(self.reward_scale > 0.0 && self.reward_scale.is_finite()) {
            return bad("env.reward_scale", format!("{} is not > 0", self.reward_scale));
        }
        if !self.reward_offset.is_finite() {
            return bad("env.reward_offset", "must be finite".into());
        }
        if !(self.label_temperature >= 0.0 && self.label_temperature.is_finite()) {
            return bad(
                "env.label_temperature",
                format!("{} is not >= 0", self.label_temperature),
            );
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceBandit {
    states: usize,
    actions: usize,
    utilities: Vec<f64>,
    reward_scale: f64,
    reward_offset: f64,
    noise_std: f64,
    label_temperature: f64,
}

impl PreferenceBandit {
    /// Draws utilities from a standard normal on the utilities stream of `spec.seed`.
    pub fn from_spec(spec: &EnvSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = RngState::for_purpose(spec.seed, Purpose::Utilities, 0).rng();
        let utilities = (0..spec.states * spec.actions)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self::with_utilities(spec, utilities)
    }

    /// Uses the given state-major utility table instead of drawing one.
    pub fn with_utilities(spec: &EnvSpec, utilities: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if utilities.len() != spec.states * spec.actions {
            return Err(Error::Dimension(format!(
                "{} utilities for a {}x{} bandit",
                utilities.len(),
                spec.states,
                spec.actions
            )));
        }
        if utilities.iter().any(|u| !u.is_finite()) {
            return Err(Error::Argument("utilities must be finite".into()));
        }
        for (s, row) in utilities.chunks(spec.actions).enumerate() {
            if row.iter().all(|u| *u == row[0]) {
                return Err(Error::Argument(format!(
                    "all utilities of state {s} are equal"
                )));
            }
        }
        Ok(Self {
            states: spec.states,
            actions: spec.actions,
            utilities,
            reward_scale: spec.reward_scale,
            reward_offset: spec.reward_offset,
            noise_std: spec.noise_std,
            label_temperature: spec.label_temperature,
        })
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    pub fn utilities(&self) -> &[f64] {
        &self.utilities
    }

    pub fn utility(&self, state: usize, action: usize) -> Result<f64> {
        check_index("state", state, self.states)?;
        check_index("action", action, self.actions)?;
        Ok(self.utilities[state * self.actions + action])
    }

    /// Uniform policy of matching shape.
    pub fn initial_policy(&self) -> TabularPolicy {
        TabularPolicy::uniform(self.states, self.actions).expect("validated shape")
    }

    fn check_policy(&self, policy: &TabularPolicy) -> Result<()> {
        if policy.shape() == (self.states, self.actions) {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "policy shape {:?} vs bandit {}x{}",
                policy.shape(),
                self.states,
                self.actions
            )))
        }
    }
}

/// Uniform prompt.
pub fn sample_state<R: Rng + ?Sized>(env: &PreferenceBandit, rng: &mut R) -> usize {
    rng.random_range(0..env.states)
}

/// One draw from `pi(.|state)` by inverse CDF.
pub fn sample_action<R: Rng + ?Sized>(policy: &TabularPolicy, state: usize, rng: &mut R) -> Result<usize> {
    let probs = policy.action_probs(state)?;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (a, p) in probs.probs().iter().enumerate() {
        acc += p;
        if u < acc {
            return Ok(a);
        }
    }
    // u landed in the rounding gap above the final partial sum
    Ok(probs
        .probs()
        .iter()
        .rposition(|p| *p > 0.0)
        .unwrap_or(probs.len() - 1))
}

/// Two distinct actions from `policy`, labeled by the preference oracle.
pub fn sample_pair<R: Rng + ?Sized>(
    env: &PreferenceBandit,
    policy: &TabularPolicy,
    state: usize,
    rng: &mut R,
) -> Result<PreferencePair> {
    env.check_policy(policy)?;
    check_index("state", state, env.states)?;
    let first = sample_action(policy, state, rng)?;
    let mut second = None;
    for _ in 0..MAX_PAIR_ATTEMPTS {
        let b = sample_action(policy, state, rng)?;
        if b != first {
            second = Some(b);
            break;
        }
    }
    let second = second.ok_or_else(|| {
        Error::Sampling(format!(
            "no distinct second action in state {state} after {MAX_PAIR_ATTEMPTS} attempts"
        ))
    })?;
    let first_wins = label(env, state, first, second, rng)?;
    let (p, r) = if first_wins { (first, second) } else { (second, first) };
    PreferencePair::new(state, p, r)
}

/// Whether `a` is preferred over `b`.
fn label<R: Rng + ?Sized>(env: &PreferenceBandit, state: usize, a: usize, b: usize, rng: &mut R) -> Result<bool> {
    let gap = env.utility(state, a)? - env.utility(state, b)?;
    if env.label_temperature > 0.0 {
        let p_a = 1.0 / (1.0 + (-gap / env.label_temperature).exp());
        Ok(rng.random::<f64>() < p_a)
    } else if gap == 0.0 {
        Ok(rng.random::<bool>())
    } else {
        Ok(gap > 0.0)
    }
}

/// `reward_scale * u + reward_offset + N(0, noise_std^2)`.
///
/// The normal draw is consumed even when `noise_std == 0`, so streams stay
/// aligned across noise levels.
pub fn reward_model<R: Rng + ?Sized>(
    env: &PreferenceBandit,
    state: usize,
    action: usize,
    rng: &mut R,
) -> Result<f64> {
    let u = env.utility(state, action)?;
    let z: f64 = rng.sample(StandardNormal);
    Ok(env.reward_scale * u + env.reward_offset + env.noise_std * z)
}

/// `k` i.i.d. actions from `policy` with reward-model scores.
pub fn sample_group<R: Rng + ?Sized>(
    env: &PreferenceBandit,
    policy: &TabularPolicy,
    state: usize,
    k: usize,
    rng: &mut R,
) -> Result<GroupSample> {
    env.check_policy(policy)?;
    if k < 2 {
        return Err(Error::Argument(format!("group size must be >= 2, got {k}")));
    }
    let mut actions = Vec::with_capacity(k);
    for _ in 0..k {
        actions.push(sample_action(policy, state, rng)?);
    }
    let mut rewards = Vec::with_capacity(k);
    for &a in &actions {
        rewards.push(reward_model(env, state, a, rng)?);
    }
    GroupSample::new(state, actions, rewards)
}

/// A labeled pair and the K=2 group `[a_p, a_r]` scored by the reward model.
pub fn sample_pair_group<R: Rng + ?Sized>(
    env: &PreferenceBandit,
    policy: &TabularPolicy,
    state: usize,
    rng: &mut R,
) -> Result<(PreferencePair, GroupSample)> {
    let pair = sample_pair(env, policy, state, rng)?;
    let rp = reward_model(env, state, pair.preferred, rng)?;
    let rr = reward_model(env, state, pair.rejected, rng)?;
    let group = GroupSample::new(state, vec![pair.preferred, pair.rejected], vec![rp, rr])?;
    Ok((pair, group))
}

/// `J(pi)`: mean over states of the expected true utility.
pub fn expected_return(env: &PreferenceBandit, policy: &TabularPolicy) -> Result<f64> {
    env.check_policy(policy)?;
    let mut total = 0.0;
    for s in 0..env.states {
        let probs = policy.action_probs(s)?;
        let row = &env.utilities[s * env.actions..(s + 1) * env.actions];
        total += probs.probs().iter().zip(row).map(|(p, u)| p * u).sum::<f64>();
    }
    Ok(total / env.states as f64)
}
