//! Gradient equivalence, gradient variance, and run stability.

use crate::envs::{sample_pair_group, sample_state, PreferenceBandit, Purpose, RngState};
use crate::error::{Error, Result};
use crate::objectives::{build_target, grpo_loss, soft_pair_loss, HyperParams};
use crate::par::{try_map_range, Exec};
use crate::policy::{GradientVector, TabularPolicy};
use crate::rewards::{group_normalize, pair_sigmas, scaling_constant, PairRewards, PreferencePair, SigmaScope};
use crate::trainer::{EpochRecord, Method};

/// Empirical moments of a per-sample gradient `g = g_p - g_r`.
///
/// `g_p` is the preferred-response contribution and `g_r` the rejected one,
/// so `trace_variance = var_p_trace + var_r_trace - 2 cov_pr_trace` up to rounding.
/// Variances use the `n - 1` divisor.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientStats {
    pub samples: usize,
    pub mean: GradientVector,
    pub per_coord_variance: GradientVector,
    pub trace_variance: f64,
    /// `trace_variance / ||mean||^2`; infinite when the mean is zero.
    pub relative_variance: f64,
    pub var_p_trace: f64,
    pub var_r_trace: f64,
    pub cov_pr_trace: f64,
}

impl GradientStats {
    /// Relative gap between `trace_variance` and its decomposition.
    pub fn decomposition_error(&self) -> f64 {
        let rebuilt = self.var_p_trace + self.var_r_trace - 2.0 * self.cov_pr_trace;
        (self.trace_variance - rebuilt).abs() / self.trace_variance.abs().max(f64::MIN_POSITIVE)
    }

    /// Moments of `g_p - g_r` from paired per-sample contributions.
    pub fn from_contributions(parts: &[(Vec<f64>, Vec<f64>)]) -> Result<Self> {
        let n = parts.len();
        if n < 2 {
            return Err(Error::Argument(format!("need at least 2 samples, got {n}")));
        }
        let dim = parts[0].0.len();
        let mut mean_p = vec![0.0; dim];
        let mut mean_r = vec![0.0; dim];
        for (p, r) in parts {
            if p.len() != dim || r.len() != dim {
                return Err(Error::Dimension("contributions of differing length".into()));
            }
            for j in 0..dim {
                mean_p[j] += p[j];
                mean_r[j] += r[j];
            }
        }
        mean_p.iter_mut().for_each(|v| *v /= n as f64);
        mean_r.iter_mut().for_each(|v| *v /= n as f64);
        let mean: Vec<f64> = mean_p.iter().zip(&mean_r).map(|(p, r)| p - r).collect();

        let mut var = vec![0.0; dim];
        let (mut vp, mut vr, mut cov) = (0.0, 0.0, 0.0);
        for (p, r) in parts {
            for j in 0..dim {
                let dp = p[j] - mean_p[j];
                let dr = r[j] - mean_r[j];
                let dg = dp - dr;
                var[j] += dg * dg;
                vp += dp * dp;
                vr += dr * dr;
                cov += dp * dr;
            }
        }
        let denom = (n - 1) as f64;
        var.iter_mut().for_each(|v| *v /= denom);
        let trace: f64 = var.iter().sum();
        let mean = GradientVector::from_vec(mean);
        let sq = mean.dot(&mean);
        Ok(Self {
            samples: n,
            relative_variance: if sq > 0.0 { trace / sq } else { f64::INFINITY },
            mean,
            per_coord_variance: GradientVector::from_vec(var),
            trace_variance: trace,
            var_p_trace: vp / denom,
            var_r_trace: vr / denom,
            cov_pr_trace: cov / denom,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceReport {
    pub cosine: f64,
    /// `||grad GRPO|| / ||grad soft||`.
    pub norm_ratio: f64,
    pub c_formula: f64,
    pub sign_inconsistency_rate: f64,
    pub pairs: usize,
}

/// Compares the GRPO and soft-pair batch gradients at `policy` used as its own reference.
///
/// Draws `n_pairs` labeled pairs, scores each with the reward model to form a
/// K=2 group, and evaluates both surrogate gradients without their KL terms.
pub fn gradient_equivalence_check(
    policy: &TabularPolicy,
    env: &PreferenceBandit,
    n_pairs: usize,
    rng: RngState,
    scope: SigmaScope,
    hp: &HyperParams,
) -> Result<EquivalenceReport> {
    if n_pairs == 0 {
        return Err(Error::Argument("equivalence check needs at least one pair".into()));
    }
    let mut rng = rng.rng();
    let mut pairs = Vec::with_capacity(n_pairs);
    let mut groups = Vec::with_capacity(n_pairs);
    for _ in 0..n_pairs {
        let s = sample_state(env, &mut rng);
        let (pair, group) = sample_pair_group(env, policy, s, &mut rng)?;
        pairs.push(pair);
        groups.push(group);
    }
    let hp = HyperParams {
        beta: 0.0,
        ..hp.clone()
    };
    let g_grpo = grpo_loss(policy, policy, &groups, &hp)?.gradient;
    let g_soft = soft_pair_loss(policy, policy, &pairs, &hp)?.gradient;
    let cosine = g_grpo.cosine(&g_soft).ok_or_else(|| {
        Error::Degenerate(format!(
            "zero gradient (|grpo| = {}, |soft| = {})",
            g_grpo.norm(),
            g_soft.norm()
        ))
    })?;
    let raw: Vec<(f64, f64)> = groups.iter().map(|g| (g.rewards[0], g.rewards[1])).collect();
    let sigmas = pair_sigmas(&raw, scope);
    let items: Vec<PairRewards> = raw
        .iter()
        .zip(&sigmas)
        .map(|(&(p, r), &sigma)| PairRewards {
            preferred: p,
            rejected: r,
            sigma,
        })
        .collect();
    let c = scaling_constant(&items)?;
    Ok(EquivalenceReport {
        cosine,
        norm_ratio: g_grpo.norm() / g_soft.norm(),
        c_formula: c.value,
        sign_inconsistency_rate: c.sign_inconsistency_rate(),
        pairs: n_pairs,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceOptions {
    pub n_samples: usize,
    /// Target shift for hard-pair.
    pub delta: f64,
    pub hp: HyperParams,
    pub seed: u64,
    /// Selects an independent block of sample streams.
    pub replicate: u64,
    pub exec: Exec,
}

impl Default for VarianceOptions {
    fn default() -> Self {
        let hp = HyperParams::default();
        Self {
            n_samples: 10_000,
            delta: hp.delta0,
            hp,
            seed: 0,
            replicate: 0,
            exec: Exec::Auto,
        }
    }
}

impl VarianceOptions {
    /// Stream for sample `i`. Every method sees the same stream for the same `i`.
    pub fn sample_stream(&self, i: usize) -> RngState {
        RngState::for_purpose(self.seed, Purpose::Variance, (self.replicate << 32) | i as u64)
    }
}

/// `(g_p, g_r)` for one pair at the reference point.
pub fn pair_contributions(
    method: Method,
    policy: &TabularPolicy,
    pair: &PreferencePair,
    rewards: (f64, f64),
    delta: f64,
    hp: &HyperParams,
) -> Result<(Vec<f64>, Vec<f64>)> {
    pair.check_bounds(policy.states(), policy.actions())?;
    let probs = policy.action_probs(pair.state)?;
    let pi = probs.probs();
    let a = policy.actions();
    let offset = pair.state * a;
    let mut gp = vec![0.0; policy.num_params()];
    let mut gr = vec![0.0; policy.num_params()];
    // c_p (e_p - pi) and c_r (e_r - pi)
    let (cp, cr) = match method {
        Method::SoftPair | Method::Grpo => {
            let (adv_p, adv_r) = if method == Method::SoftPair {
                (1.0, -1.0)
            } else {
                let z = group_normalize(&[rewards.0, rewards.1], hp.eps_sigma);
                (z[0], z[1])
            };
            (-0.5 * adv_p, 0.5 * adv_r)
        }
        Method::HardPair => {
            let target = build_target(&probs, pair, delta, hp.p_min)?;
            let d = |i: usize| pi[i].ln() - target[i].ln();
            let (dp, dr) = (d(pair.preferred), d(pair.rejected));
            (pi[pair.preferred] * dp, -pi[pair.rejected] * dr)
        }
    };
    for j in 0..a {
        gp[offset + j] = -cp * pi[j];
        gr[offset + j] = -cr * pi[j];
    }
    gp[offset + pair.preferred] += cp;
    gr[offset + pair.rejected] += cr;
    Ok((gp, gr))
}

/// Per-sample single-pair gradient moments of `method` at `policy` (used as its own reference).
pub fn variance_estimate(
    method: Method,
    policy: &TabularPolicy,
    env: &PreferenceBandit,
    opts: &VarianceOptions,
) -> Result<GradientStats> {
    if opts.n_samples < 2 {
        return Err(Error::Argument(format!(
            "variance estimate needs n_samples >= 2, got {}",
            opts.n_samples
        )));
    }
    let parts = try_map_range(opts.n_samples, opts.exec, |i| {
        let mut rng = opts.sample_stream(i).rng();
        let s = sample_state(env, &mut rng);
        let (pair, group) = sample_pair_group(env, policy, s, &mut rng)?;
        pair_contributions(
            method,
            policy,
            &pair,
            (group.rewards[0], group.rewards[1]),
            opts.delta,
            &opts.hp,
        )
    })?;
    GradientStats::from_contributions(&parts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyReport {
    pub grpo: GradientStats,
    pub soft: GradientStats,
    pub hard: GradientStats,
    pub soft_below_grpo: bool,
    pub hard_at_most_soft: bool,
    /// Human-readable description of every ordering that failed.
    pub violations: Vec<String>,
}

impl HierarchyReport {
    /// `hard < soft < grpo` in relative variance.
    pub fn strict(&self) -> bool {
        self.soft_below_grpo && self.hard.relative_variance < self.soft.relative_variance
    }
}

/// Relative-variance ordering of the three methods on common random numbers.
pub fn variance_hierarchy(
    policy: &TabularPolicy,
    env: &PreferenceBandit,
    opts: &VarianceOptions,
) -> Result<HierarchyReport> {
    let grpo = variance_estimate(Method::Grpo, policy, env, opts)?;
    let soft = variance_estimate(Method::SoftPair, policy, env, opts)?;
    let hard = variance_estimate(Method::HardPair, policy, env, opts)?;
    let soft_below_grpo = soft.relative_variance < grpo.relative_variance;
    let hard_at_most_soft = hard.relative_variance <= soft.relative_variance;
    let mut violations = Vec::new();
    if !soft_below_grpo {
        violations.push(format!(
            "relative variance soft {:.6} >= grpo {:.6}",
            soft.relative_variance, grpo.relative_variance
        ));
    }
    if !hard_at_most_soft {
        violations.push(format!(
            "relative variance hard {:.6} > soft {:.6}",
            hard.relative_variance, soft.relative_variance
        ));
    }
    Ok(HierarchyReport {
        grpo,
        soft,
        hard,
        soft_below_grpo,
        hard_at_most_soft,
        violations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityMetrics {
    /// Population variance of per-epoch gradient norms.
    pub grad_norm_variance: f64,
    /// Population standard deviation of per-epoch `policy_kl`.
    pub kl_std: f64,
    /// Population standard deviation of consecutive `loss_total` differences.
    pub oscillation: f64,
}

fn population_variance(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / xs.len() as f64
}

pub fn stability_metrics(records: &[EpochRecord]) -> Result<StabilityMetrics> {
    if records.len() < 2 {
        return Err(Error::Argument(format!(
            "stability metrics need at least 2 records, got {}",
            records.len()
        )));
    }
    let norms: Vec<f64> = records.iter().map(|r| r.grad_norm).collect();
    let kls: Vec<f64> = records.iter().map(|r| r.policy_kl).collect();
    let diffs: Vec<f64> = records
        .windows(2)
        .map(|w| w[1].loss_total - w[0].loss_total)
        .collect();
    Ok(StabilityMetrics {
        grad_norm_variance: population_variance(&norms),
        kl_std: population_variance(&kls).sqrt(),
        oscillation: population_variance(&diffs).sqrt(),
    })
}

/// Largest hard-pair gradient magnitude on logits outside the pair, at the reference.
///
/// The target freezes those responses' probabilities, but softmax coupling
/// still moves their logits.
pub fn irrelevant_leakage(
    policy: &TabularPolicy,
    pair: &PreferencePair,
    delta: f64,
    hp: &HyperParams,
) -> Result<f64> {
    let (gp, gr) = pair_contributions(Method::HardPair, policy, pair, (0.0, 0.0), delta, hp)?;
    let a = policy.actions();
    Ok((0..a)
        .filter(|&j| j != pair.preferred && j != pair.rejected)
        .map(|j| (gp[pair.state * a + j] - gr[pair.state * a + j]).abs())
        .fold(0.0, f64::max))
}
