//! Training loops for GRPO, soft-pair and hard-pair.
//!
//! Each epoch samples a batch from the frozen reference policy, takes
//! `n_inner` descent steps on the method's loss, records metrics, and then
//! syncs the reference to the current policy.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::envs::{
    expected_return, sample_group, sample_pair_group, sample_state, EnvSpec, PreferenceBandit,
    Purpose, RngState,
};
use crate::error::{Error, Result};
use crate::objectives::{grpo_loss, hard_pair_total_loss, soft_pair_loss, step_size, HyperParams, LossReport};
use crate::par::{map_range, Exec};
use crate::policy::{policy_kl, GradientVector, TabularPolicy};
use crate::rewards::{GroupSample, PreferencePair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Grpo,
    SoftPair,
    HardPair,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Grpo, Method::SoftPair, Method::HardPair];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Grpo => "grpo",
            Method::SoftPair => "soft_pair",
            Method::HardPair => "hard_pair",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grpo" => Ok(Method::Grpo),
            "soft_pair" | "soft" => Ok(Method::SoftPair),
            "hard_pair" | "hard" => Ok(Method::HardPair),
            other => Err(Error::Argument(format!(
                "unknown method {other:?} (expected grpo, soft_pair or hard_pair)"
            ))),
        }
    }
}

/// How hard-pair applies its updates within an epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HardUpdate {
    /// One descent step per pair, in sampling order.
    #[default]
    PerPair,
    /// One step on the batch-averaged loss.
    Batch,
}

impl FromStr for HardUpdate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per_pair" => Ok(Self::PerPair),
            "batch" => Ok(Self::Batch),
            other => Err(Error::Argument(format!(
                "unknown hard update {other:?} (expected per_pair or batch)"
            ))),
        }
    }
}

impl fmt::Display for HardUpdate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::PerPair => "per_pair",
            Self::Batch => "batch",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub method: Method,
    pub epochs: usize,
    pub pairs_per_epoch: usize,
    /// Descent steps per epoch on the same batch.
    pub n_inner: usize,
    /// Sync the reference every this many epochs.
    pub sync_every: usize,
    pub hp: HyperParams,
    pub env: EnvSpec,
    pub seed: u64,
    /// Hard-pair only: keep `delta_t = delta0` instead of decaying it.
    pub fixed_delta: bool,
    pub hard_update: HardUpdate,
    pub record_wall_clock: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: Method::SoftPair,
            epochs: 30,
            pairs_per_epoch: 64,
            n_inner: 1,
            sync_every: 1,
            hp: HyperParams::default(),
            env: EnvSpec::default(),
            seed: 0,
            fixed_delta: false,
            hard_update: HardUpdate::PerPair,
            record_wall_clock: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let at_least_one = |field: &'static str, v: usize| {
            if v >= 1 {
                Ok(())
            } else {
                Err(Error::InvalidParam {
                    field,
                    reason: "must be >= 1".into(),
                })
            }
        };
        at_least_one("train.epochs", self.epochs)?;
        at_least_one("train.pairs_per_epoch", self.pairs_per_epoch)?;
        at_least_one("train.n_inner", self.n_inner)?;
        at_least_one("train.sync_every", self.sync_every)?;
        self.hp.validate()?;
        self.env.validate()
    }

    /// `delta_t` used at epoch `t`, or `None` for the surrogate methods.
    pub fn delta_at(&self, t: usize) -> Option<f64> {
        (self.method == Method::HardPair).then(|| {
            if self.fixed_delta {
                self.hp.delta0
            } else {
                step_size(&self.hp, t as u32)
            }
        })
    }
}

/// Metrics for one epoch. `epoch` is 0-based.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Batch loss at the updated policy, relative to this epoch's reference.
    pub loss_total: f64,
    pub loss_fit_or_surrogate: f64,
    pub kl_term: f64,
    /// Norm of the mean gradient applied during the epoch.
    pub grad_norm: f64,
    /// `KL(pi || pi_ref)` over the batch states, after the update.
    pub policy_kl: f64,
    pub delta_t: Option<f64>,
    pub expected_return: f64,
    pub wall_ms: Option<f64>,
}

/// Policy being optimized and its frozen reference.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainerState {
    pub policy: TabularPolicy,
    pub reference: TabularPolicy,
}

impl TrainerState {
    pub fn new(policy: TabularPolicy) -> Self {
        Self {
            reference: policy.clone(),
            policy,
        }
    }

    /// `pi_ref <- pi`.
    pub fn sync_reference(&mut self) {
        self.reference = self.policy.clone();
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// `J` of the initial policy.
    pub initial_return: f64,
    pub records: Vec<EpochRecord>,
    pub policy: TabularPolicy,
}

/// A run that hit a numerical failure. `records` holds every completed epoch.
#[derive(Debug)]
pub struct TrainFailure {
    pub epoch: usize,
    pub records: Vec<EpochRecord>,
    pub source: Error,
}

impl fmt::Display for TrainFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "training failed at epoch {}: {}", self.epoch, self.source)
    }
}

impl std::error::Error for TrainFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

struct Batch {
    pairs: Vec<PreferencePair>,
    groups: Vec<GroupSample>,
    states: Vec<usize>,
}

fn sample_batch(
    config: &TrainConfig,
    env: &PreferenceBandit,
    reference: &TabularPolicy,
    epoch: usize,
) -> Result<Batch> {
    let mut rng = RngState::for_purpose(config.seed, Purpose::Training, epoch as u64).rng();
    let n = config.pairs_per_epoch;
    let mut batch = Batch {
        pairs: Vec::with_capacity(n),
        groups: Vec::with_capacity(n),
        states: Vec::with_capacity(n),
    };
    for _ in 0..n {
        let state = sample_state(env, &mut rng);
        if config.method == Method::Grpo && config.hp.group_size > 2 {
            batch
                .groups
                .push(sample_group(env, reference, state, config.hp.group_size, &mut rng)?);
        } else {
            let (pair, group) = sample_pair_group(env, reference, state, &mut rng)?;
            batch.pairs.push(pair);
            batch.groups.push(group);
        }
        batch.states.push(state);
    }
    Ok(batch)
}

fn batch_loss(
    config: &TrainConfig,
    state: &TrainerState,
    batch: &Batch,
    delta: Option<f64>,
) -> Result<LossReport> {
    let hp = &config.hp;
    match config.method {
        Method::Grpo => grpo_loss(&state.policy, &state.reference, &batch.groups, hp),
        Method::SoftPair => soft_pair_loss(&state.policy, &state.reference, &batch.pairs, hp),
        Method::HardPair => hard_pair_total_loss(
            &state.policy,
            &state.reference,
            &batch.pairs,
            delta.unwrap_or(0.0),
            hp,
        ),
    }
}

/// Runs the epoch's descent steps and returns the mean applied gradient.
fn update(
    config: &TrainConfig,
    state: &mut TrainerState,
    batch: &Batch,
    delta: Option<f64>,
) -> Result<GradientVector> {
    let eta = config.hp.eta;
    let mut applied = GradientVector::zeros(state.policy.num_params());
    let mut steps = 0usize;
    for _ in 0..config.n_inner {
        if config.method == Method::HardPair && config.hard_update == HardUpdate::PerPair {
            let delta = delta.unwrap_or(0.0);
            for pair in &batch.pairs {
                let rep = hard_pair_total_loss(
                    &state.policy,
                    &state.reference,
                    std::slice::from_ref(pair),
                    delta,
                    &config.hp,
                )?;
                state.policy.descend(&rep.gradient, eta)?;
                applied.add_scaled(&rep.gradient, 1.0);
                steps += 1;
            }
        } else {
            let rep = batch_loss(config, state, batch, delta)?;
            state.policy.descend(&rep.gradient, eta)?;
            applied.add_scaled(&rep.gradient, 1.0);
            steps += 1;
        }
    }
    applied.scale(1.0 / steps as f64);
    Ok(applied)
}

fn run_epoch(
    config: &TrainConfig,
    env: &PreferenceBandit,
    state: &mut TrainerState,
    epoch: usize,
) -> Result<EpochRecord> {
    let start = config.record_wall_clock.then(Instant::now);
    let delta = config.delta_at(epoch);
    let batch = sample_batch(config, env, &state.reference, epoch)?;
    let applied = update(config, state, &batch, delta)?;
    let after = batch_loss(config, state, &batch, delta)?;
    let kl = policy_kl(&state.policy, &state.reference, &batch.states)?;
    let j = expected_return(env, &state.policy)?;
    let record = EpochRecord {
        epoch,
        loss_total: after.total,
        loss_fit_or_surrogate: after.surrogate_or_fit,
        kl_term: after.kl_term,
        grad_norm: applied.norm(),
        policy_kl: kl,
        delta_t: delta,
        expected_return: j,
        wall_ms: start.map(|s| s.elapsed().as_secs_f64() * 1e3),
    };
    let values = [
        record.loss_total,
        record.loss_fit_or_surrogate,
        record.kl_term,
        record.grad_norm,
        record.policy_kl,
        record.expected_return,
    ];
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Evaluation(format!("non-finite metric at epoch {epoch}: {record:?}")));
    }
    if (epoch + 1).is_multiple_of(config.sync_every) {
        state.sync_reference();
    }
    Ok(record)
}

/// Trains from the uniform policy.
pub fn train(config: &TrainConfig) -> std::result::Result<TrainOutcome, TrainFailure> {
    train_with(config, |_, _| Ok(()))
}

/// Like [`train`], calling `observer(record, policy)` after every epoch.
/// An observer error aborts the run.
pub fn train_with<F>(config: &TrainConfig, mut observer: F) -> std::result::Result<TrainOutcome, TrainFailure>
where
    F: FnMut(&EpochRecord, &TabularPolicy) -> Result<()>,
{
    let fail = |epoch, records, source| TrainFailure {
        epoch,
        records,
        source,
    };
    if let Err(e) = config.validate() {
        return Err(fail(0, Vec::new(), e));
    }
    let env = PreferenceBandit::from_spec(&config.env).map_err(|e| fail(0, Vec::new(), e))?;
    let mut state = TrainerState::new(env.initial_policy());
    let initial_return = expected_return(&env, &state.policy).map_err(|e| fail(0, Vec::new(), e))?;
    let mut records = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let record = match run_epoch(config, &env, &mut state, epoch) {
            Ok(r) => r,
            Err(e) => return Err(fail(epoch, records, e)),
        };
        if let Err(e) = observer(&record, &state.policy) {
            records.push(record);
            return Err(fail(epoch, records, e));
        }
        records.push(record);
    }
    Ok(TrainOutcome {
        initial_return,
        records,
        policy: state.policy,
    })
}

/// Independent runs, possibly in parallel. Output order matches `configs`.
pub fn train_many(
    configs: &[TrainConfig],
    exec: Exec,
) -> Vec<std::result::Result<TrainOutcome, TrainFailure>> {
    map_range(configs.len(), exec, |i| train(&configs[i]))
}

/// Slack `2 eps gamma / (1 - gamma)^2 * beta` in the monotonic-improvement bound.
pub fn monotonic_bound(eps_clip: f64, gamma_discount: f64, beta: f64) -> Result<f64> {
    if !(gamma_discount > 0.0 && gamma_discount < 1.0) {
        return Err(Error::Argument(format!(
            "discount {gamma_discount} is not in (0, 1)"
        )));
    }
    Ok(2.0 * eps_clip * gamma_discount / (1.0 - gamma_discount).powi(2) * beta)
}

/// Sum over states of the L1 distance between the two policies' action distributions.
pub fn l1_distance(a: &TabularPolicy, b: &TabularPolicy) -> Result<f64> {
    a.check_same_shape(b)?;
    let mut total = 0.0;
    for s in 0..a.states() {
        let (p, q) = (a.action_probs(s)?, b.action_probs(s)?);
        total += p.probs().iter().zip(q.probs()).map(|(x, y)| (x - y).abs()).sum::<f64>();
    }
    Ok(total)
}
