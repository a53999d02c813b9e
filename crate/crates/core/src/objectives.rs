//! Loss functions with analytic gradients.
//!
//! Every loss is oriented for gradient *descent*: surrogates are negated and
//! the KL / hinge penalties enter with a positive sign.

use crate::error::{Error, Result};
use crate::policy::{
    policy_kl, policy_kl_grad, softmax_kl_block, Distribution, GradientVector,
    TabularPolicy,
};
use crate::rewards::{group_normalize, GroupSample, PreferencePair};

/// How the clipped surrogate bounds the update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClipMode {
    /// `min(rho * r, clip(rho, 1 - eps, 1 + eps) * r)`, as in PPO.
    #[default]
    Ratio,
    /// `min(rho * r, clip(rho * r, 1 - eps, 1 + eps))`: clips the product.
    /// For negative rewards this stops bounding the ratio at all.
    Product,
}

impl std::str::FromStr for ClipMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ratio" => Ok(Self::Ratio),
            "product" => Ok(Self::Product),
            other => Err(Error::Argument(format!(
                "unknown clip mode {other:?} (expected ratio or product)"
            ))),
        }
    }
}

impl std::fmt::Display for ClipMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Ratio => "ratio",
            Self::Product => "product",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperParams {
    pub eps_clip: f64,
    /// Trust-region radius on `KL(pi || pi_old)`, in nats.
    pub beta: f64,
    /// Hinge penalty weight.
    pub alpha: f64,
    /// Initial probability shift of the hard-pair target.
    pub delta0: f64,
    pub gamma_decay: f64,
    pub eta: f64,
    pub group_size: usize,
    pub p_min: f64,
    pub eps_sigma: f64,
    /// Discount used only by the monotonic-improvement diagnostic.
    pub gamma_discount: f64,
    pub clip_mode: ClipMode,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            eps_clip: 0.2,
            beta: 0.01,
            alpha: 0.5,
            delta0: 0.02,
            gamma_decay: 0.98,
            eta: 0.1,
            group_size: 2,
            p_min: 1e-8,
            eps_sigma: 1e-8,
            gamma_discount: 0.99,
            clip_mode: ClipMode::Ratio,
        }
    }
}

fn open_unit(field: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParam {
            field,
            reason: format!("{v} is not in (0, 1)"),
        })
    }
}

fn positive(field: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParam {
            field,
            reason: format!("{v} is not a finite positive number"),
        })
    }
}

impl HyperParams {
    /// Checks every field; the error names the offending config key.
    pub fn validate(&self) -> Result<()> {
        open_unit("hp.eps_clip", self.eps_clip)?;
        positive("hp.beta", self.beta)?;
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidParam {
                field: "hp.alpha",
                reason: format!("{} is not a finite non-negative number", self.alpha),
            });
        }
        open_unit("hp.delta0", self.delta0)?;
        open_unit("hp.gamma_decay", self.gamma_decay)?;
        positive("hp.eta", self.eta)?;
        if self.group_size < 2 {
            return Err(Error::InvalidParam {
                field: "hp.K",
                reason: format!("{} is below 2", self.group_size),
            });
        }
        if !(self.p_min > 0.0 && self.p_min <= 1e-6) {
            return Err(Error::InvalidParam {
                field: "hp.p_min",
                reason: format!("{} is not in (0, 1e-6]", self.p_min),
            });
        }
        positive("hp.eps_sigma", self.eps_sigma)?;
        open_unit("hp.gamma_discount", self.gamma_discount)
    }
}

/// A loss value, its pieces, and the gradient of `total`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub total: f64,
    /// Negated surrogate (GRPO / soft) or KL-fit loss (hard).
    pub surrogate_or_fit: f64,
    /// `beta * policy_kl` for the surrogate losses, the hinge penalty for hard.
    pub kl_term: f64,
    pub gradient: GradientVector,
}

impl LossReport {
    fn checked(self) -> Result<Self> {
        if self.total.is_finite() && self.gradient.is_finite() {
            Ok(self)
        } else {
            Err(Error::Evaluation(format!(
                "loss {} or its gradient is not finite",
                self.total
            )))
        }
    }
}

pub fn clip(value: f64, lo: f64, hi: f64) -> Result<f64> {
    if lo > hi {
        return Err(Error::Argument(format!("clip bounds {lo} > {hi}")));
    }
    Ok(value.max(lo).min(hi))
}

/// One surrogate term: advantage `adv` for `action` in `state`.
#[derive(Debug, Clone, Copy)]
struct Term {
    state: usize,
    action: usize,
    adv: f64,
}

/// Negated mean clipped surrogate and its gradient.
fn clipped_surrogate(
    policy: &TabularPolicy,
    reference: &TabularPolicy,
    terms: &[Term],
    hp: &HyperParams,
) -> Result<(f64, GradientVector)> {
    policy.check_same_shape(reference)?;
    let actions = policy.actions();
    let (lo, hi) = (1.0 - hp.eps_clip, 1.0 + hp.eps_clip);
    let n = terms.len() as f64;
    let mut value = 0.0;
    let mut grad = GradientVector::zeros(policy.num_params());
    for t in terms {
        let lp = policy.log_probs(t.state)?;
        crate::error::check_index("action", t.action, actions)?;
        let rho = (lp[t.action] - reference.log_prob(t.state, t.action)?).exp();
        let unclipped = rho * t.adv;
        let clipped = match hp.clip_mode {
            ClipMode::Ratio => clip(rho, lo, hi)? * t.adv,
            ClipMode::Product => clip(unclipped, lo, hi)?,
        };
        if unclipped <= clipped {
            value += unclipped;
            // d(rho * adv) = adv * rho * (e_a - pi)
            let w = -t.adv * rho / n;
            let block = &mut grad.as_mut_slice()[t.state * actions..(t.state + 1) * actions];
            for (g, l) in block.iter_mut().zip(&lp) {
                *g -= w * l.exp();
            }
            block[t.action] += w;
        } else {
            value += clipped;
        }
    }
    Ok((-value / n, grad))
}

fn with_kl_penalty(
    policy: &TabularPolicy,
    reference: &TabularPolicy,
    states: &[usize],
    surrogate: f64,
    mut gradient: GradientVector,
    beta: f64,
) -> Result<LossReport> {
    let kl_term = beta * policy_kl(policy, reference, states)?;
    if beta != 0.0 {
        gradient.add_scaled(&policy_kl_grad(policy, reference, states)?, beta);
    }
    LossReport {
        total: surrogate + kl_term,
        surrogate_or_fit: surrogate,
        kl_term,
        gradient,
    }
    .checked()
}

/// GRPO: group-normalized rewards in the clipped surrogate, plus `beta * policy_kl`.
pub fn grpo_loss(
    policy: &TabularPolicy,
    reference: &TabularPolicy,
    groups: &[GroupSample],
    hp: &HyperParams,
) -> Result<LossReport> {
    if groups.is_empty() {
        return Err(Error::Argument("grpo_loss needs at least one group".into()));
    }
    let mut terms = Vec::new();
    for g in groups {
        g.check_bounds(policy.states(), policy.actions())?;
        let adv = group_normalize(&g.rewards, hp.eps_sigma);
        terms.extend(g.actions.iter().zip(adv).map(|(&action, adv)| Term {
            state: g.state,
            action,
            adv,
        }));
    }
    let (surrogate, grad) = clipped_surrogate(policy, reference, &terms, hp)?;
    let states: Vec<usize> = groups.iter().map(|g| g.state).collect();
    with_kl_penalty(policy, reference, &states, surrogate, grad, hp.beta)
}

/// Soft-pair: the clipped surrogate with rewards `+1` for `a_p` and `-1` for `a_r`.
pub fn soft_pair_loss(
    policy: &TabularPolicy,
    reference: &TabularPolicy,
    pairs: &[PreferencePair],
    hp: &HyperParams,
) -> Result<LossReport> {
    if pairs.is_empty() {
        return Err(Error::Argument("soft_pair_loss needs at least one pair".into()));
    }
    let mut terms = Vec::with_capacity(2 * pairs.len());
    for p in pairs {
        p.check_bounds(policy.states(), policy.actions())?;
        terms.push(Term {
            state: p.state,
            action: p.preferred,
            adv: 1.0,
        });
        terms.push(Term {
            state: p.state,
            action: p.rejected,
            adv: -1.0,
        });
    }
    let (surrogate, grad) = clipped_surrogate(policy, reference, &terms, hp)?;
    let states: Vec<usize> = pairs.iter().map(|p| p.state).collect();
    with_kl_penalty(policy, reference, &states, surrogate, grad, hp.beta)
}

/// `delta0 * gamma_decay^t`.
pub fn step_size(hp: &HyperParams, t: u32) -> f64 {
    hp.delta0 * hp.gamma_decay.powi(t as i32)
}

/// Effective shift actually applied by [`build_target`].
pub fn effective_shift(ref_dist: &Distribution, pair: &PreferencePair, delta: f64, p_min: f64) -> f64 {
    let room_r = ref_dist[pair.rejected] - p_min;
    let room_p = 1.0 - p_min - ref_dist[pair.preferred];
    delta.min(room_r).min(room_p).max(0.0)
}

/// Moves up to `delta` probability from `a_r` to `a_p`; every other entry is copied.
pub fn build_target(
    ref_dist: &Distribution,
    pair: &PreferencePair,
    delta: f64,
    p_min: f64,
) -> Result<Distribution> {
    crate::error::check_index("preferred action", pair.preferred, ref_dist.len())?;
    crate::error::check_index("rejected action", pair.rejected, ref_dist.len())?;
    if delta.is_nan() || delta < 0.0 {
        return Err(Error::Argument(format!("shift must be >= 0, got {delta}")));
    }
    let shift = effective_shift(ref_dist, pair, delta, p_min);
    let mut probs = ref_dist.probs().to_vec();
    if shift > 0.0 {
        let r = probs[pair.rejected];
        probs[pair.preferred] += shift;
        // Rounding in `r - shift` must not dip below the floor.
        probs[pair.rejected] = (r - shift).max(p_min.min(r));
    }
    Ok(Distribution::from_raw(probs))
}

/// Mean over entries of `KL(pi(.|s) || target)`. No penalty term.
///
/// States may repeat; each entry counts once.
pub fn kl_fit_loss(policy: &TabularPolicy, targets: &[(usize, Distribution)]) -> Result<LossReport> {
    if targets.is_empty() {
        return Err(Error::Argument("kl_fit_loss needs at least one target".into()));
    }
    let actions = policy.actions();
    let weight = 1.0 / targets.len() as f64;
    let mut value = 0.0;
    let mut grad = GradientVector::zeros(policy.num_params());
    for (state, target) in targets {
        if target.len() != actions {
            return Err(Error::Dimension(format!(
                "target of length {} for {actions} actions",
                target.len()
            )));
        }
        let lp = policy.log_probs(*state)?;
        let mut lq = Vec::with_capacity(actions);
        for (i, &q) in target.probs().iter().enumerate() {
            if q <= 0.0 {
                return Err(Error::Divergence(format!(
                    "target[{i}] = {q} for state {state}; targets must be floored"
                )));
            }
            lq.push(q.ln());
        }
        let kl: f64 = lp.iter().zip(&lq).map(|(a, b)| a.exp() * (a - b)).sum();
        value += weight * kl.max(0.0);
        let block = &mut grad.as_mut_slice()[state * actions..(state + 1) * actions];
        softmax_kl_block(&lp, &lq, weight, block);
    }
    LossReport {
        total: value,
        surrogate_or_fit: value,
        kl_term: 0.0,
        gradient: grad,
    }
    .checked()
}

/// `alpha * max(d_kl - beta, 0)`.
pub fn hinge_penalty(d_kl: f64, hp: &HyperParams) -> f64 {
    hp.alpha * (d_kl - hp.beta).max(0.0)
}

/// One target per pair from the reference distribution, KL-fit, plus the hinge on
/// `policy_kl` over the batch states. The hinge subgradient at `d_kl == beta` is 0.
pub fn hard_pair_total_loss(
    policy: &TabularPolicy,
    reference: &TabularPolicy,
    pairs: &[PreferencePair],
    delta_t: f64,
    hp: &HyperParams,
) -> Result<LossReport> {
    if pairs.is_empty() {
        return Err(Error::Argument("hard_pair_total_loss needs at least one pair".into()));
    }
    policy.check_same_shape(reference)?;
    let mut targets = Vec::with_capacity(pairs.len());
    for p in pairs {
        p.check_bounds(policy.states(), policy.actions())?;
        let ref_dist = reference.action_probs(p.state)?;
        targets.push((p.state, build_target(&ref_dist, p, delta_t, hp.p_min)?));
    }
    let fit = kl_fit_loss(policy, &targets)?;
    let states: Vec<usize> = pairs.iter().map(|p| p.state).collect();
    let d_kl = policy_kl(policy, reference, &states)?;
    let hinge = hinge_penalty(d_kl, hp);
    let mut gradient = fit.gradient;
    if d_kl > hp.beta && hp.alpha != 0.0 {
        gradient.add_scaled(&policy_kl_grad(policy, reference, &states)?, hp.alpha);
    }
    LossReport {
        total: fit.total + hinge,
        surrogate_or_fit: fit.total,
        kl_term: hinge,
        gradient,
    }
    .checked()
}

/// True when `target` equals `ref_dist` everywhere except the pair's two coordinates.
pub fn target_is_local(ref_dist: &Distribution, target: &Distribution, pair: &PreferencePair) -> bool {
    ref_dist
        .probs()
        .iter()
        .zip(target.probs())
        .enumerate()
        .all(|(i, (r, t))| i == pair.preferred || i == pair.rejected || r == t)
}
