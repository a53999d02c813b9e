//! Tabular softmax policies.
//!
//! A [`TabularPolicy`] stores one row of logits per state. Every probability
//! and log-probability is computed through a max-shifted log-sum-exp, so rows
//! with logits of magnitude up to ~1e300 stay finite. Gradients are taken with
//! respect to the flat, state-major logit vector and live in a
//! [`GradientVector`] of length `states * actions`.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{check_index, Error, Result};

/// Tolerance on `sum(p) == 1` accepted by [`Distribution::new`].
pub const SUM_TOLERANCE: f64 = 1e-12;

/// Default central-difference step for [`finite_diff_grad`].
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// A probability vector over actions.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution(Vec<f64>);

impl Distribution {
    /// Validates that entries are finite, non-negative, and sum to one within [`SUM_TOLERANCE`].
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Argument("distribution must be non-empty".into()));
        }
        if let Some(bad) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::Argument(format!(
                "distribution entry {bad} is not a finite non-negative number"
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::Argument(format!(
                "distribution sums to {total}, expected 1"
            )));
        }
        Ok(Self(probs))
    }

    pub(crate) fn from_raw(probs: Vec<f64>) -> Self {
        Self(probs)
    }

    pub fn uniform(len: usize) -> Self {
        Self(vec![1.0 / len as f64; len])
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Index<usize> for Distribution {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Flat gradient with respect to a policy's logits, ordered state-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector(Vec<f64>);

impl GradientVector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &Self, scale: f64) {
        debug_assert_eq!(self.0.len(), other.0.len());
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += scale * b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.0.iter_mut().for_each(|v| *v *= factor);
    }

    /// Cosine similarity, or `None` if either vector is zero.
    pub fn cosine(&self, other: &Self) -> Option<f64> {
        let denom = self.norm() * other.norm();
        (denom > 0.0).then(|| (self.dot(other) / denom).clamp(-1.0, 1.0))
    }

    /// Largest absolute coordinate-wise difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// `||self - other|| / max(||self||, ||other||)`, with a floor of 1e-12 on the denominator.
    pub fn relative_error(&self, other: &Self) -> f64 {
        let diff: f64 = self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        diff / self.norm().max(other.norm()).max(1e-12)
    }
}

/// Softmax policy with one logit row per state.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    states: usize,
    actions: usize,
    logits: Vec<f64>,
}

impl TabularPolicy {
    /// All-zero logits, i.e. the uniform policy.
    pub fn uniform(states: usize, actions: usize) -> Result<Self> {
        Self::from_logits(states, actions, vec![0.0; states * actions])
    }

    pub fn from_logits(states: usize, actions: usize, logits: Vec<f64>) -> Result<Self> {
        if states == 0 {
            return Err(Error::Argument("policy needs at least one state".into()));
        }
        if actions < 2 {
            return Err(Error::Argument(format!(
                "policy needs at least two actions, got {actions}"
            )));
        }
        if logits.len() != states * actions {
            return Err(Error::Dimension(format!(
                "{} logits for a {states}x{actions} policy",
                logits.len()
            )));
        }
        if let Some(i) = logits.iter().position(|v| !v.is_finite()) {
            return Err(Error::Argument(format!("logit {i} is not finite")));
        }
        Ok(Self {
            states,
            actions,
            logits,
        })
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.states, self.actions)
    }

    pub fn num_params(&self) -> usize {
        self.logits.len()
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn row(&self, state: usize) -> Result<&[f64]> {
        check_index("state", state, self.states)?;
        let start = state * self.actions;
        Ok(&self.logits[start..start + self.actions])
    }

    pub(crate) fn index_of(&self, state: usize, action: usize) -> usize {
        state * self.actions + action
    }

    /// `pi(. | state)`.
    pub fn action_probs(&self, state: usize) -> Result<Distribution> {
        let row = self.row(state)?;
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut probs: Vec<f64> = row.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= total);
        Ok(Distribution::from_raw(probs))
    }

    /// Log-softmax of one state's row.
    pub fn log_probs(&self, state: usize) -> Result<Vec<f64>> {
        let row = self.row(state)?;
        let lse = log_sum_exp(row);
        Ok(row.iter().map(|l| l - lse).collect())
    }

    pub fn log_prob(&self, state: usize, action: usize) -> Result<f64> {
        let row = self.row(state)?;
        check_index("action", action, self.actions)?;
        Ok(row[action] - log_sum_exp(row))
    }

    /// Gradient of `log pi(action | state)`: `1{a' = action} - pi(a' | state)` in the
    /// state's block, zero elsewhere.
    pub fn log_prob_grad(&self, state: usize, action: usize) -> Result<GradientVector> {
        check_index("action", action, self.actions)?;
        let probs = self.action_probs(state)?;
        let mut grad = GradientVector::zeros(self.num_params());
        let block = &mut grad.as_mut_slice()[state * self.actions..(state + 1) * self.actions];
        for (g, p) in block.iter_mut().zip(probs.probs()) {
            *g = -p;
        }
        block[action] += 1.0;
        Ok(grad)
    }

    pub fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape() == other.shape() {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "policy shapes {:?} and {:?} differ",
                self.shape(),
                other.shape()
            )))
        }
    }

    /// Gradient descent step `theta <- theta - lr * grad`.
    pub fn descend(&mut self, grad: &GradientVector, lr: f64) -> Result<()> {
        if grad.len() != self.logits.len() {
            return Err(Error::Dimension(format!(
                "gradient of length {} for {} logits",
                grad.len(),
                self.logits.len()
            )));
        }
        for (l, g) in self.logits.iter_mut().zip(grad.as_slice()) {
            *l -= lr * g;
        }
        if self.logits.iter().any(|l| !l.is_finite()) {
            return Err(Error::Evaluation("logits became non-finite".into()));
        }
        Ok(())
    }

    fn with_offset(&self, index: usize, delta: f64) -> Self {
        let mut out = self.clone();
        out.logits[index] += delta;
        out
    }

    /// Writes the checkpoint CSV (`state,action,logit`, 17 significant digits).
    pub fn write_checkpoint<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["state", "action", "logit"])?;
        for s in 0..self.states {
            for a in 0..self.actions {
                w.write_record([
                    s.to_string(),
                    a.to_string(),
                    format!("{:.16e}", self.logits[self.index_of(s, a)]),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a checkpoint CSV. Rows may come in any order but must cover every (state, action) once.
    pub fn read_checkpoint<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["state", "action", "logit"] {
            return Err(Error::Checkpoint(format!(
                "unexpected header {:?}",
                headers.iter().collect::<Vec<_>>()
            )));
        }
        let mut rows = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let field = |i: usize| record.get(i).unwrap_or("").trim();
            let parse_index = |i: usize| {
                field(i)
                    .parse::<usize>()
                    .map_err(|e| Error::Checkpoint(format!("bad index {:?}: {e}", field(i))))
            };
            let s = parse_index(0)?;
            let a = parse_index(1)?;
            let logit = field(2)
                .parse::<f64>()
                .map_err(|e| Error::Checkpoint(format!("bad logit {:?}: {e}", field(2))))?;
            rows.push((s, a, logit));
        }
        let states = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
        let actions = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0);
        if rows.len() != states * actions {
            return Err(Error::Checkpoint(format!(
                "{} rows do not cover a {states}x{actions} table",
                rows.len()
            )));
        }
        let mut logits = vec![f64::NAN; states * actions];
        for (s, a, logit) in rows {
            let slot = &mut logits[s * actions + a];
            if !slot.is_nan() {
                return Err(Error::Checkpoint(format!("duplicate row for ({s}, {a})")));
            }
            *slot = logit;
        }
        Self::from_logits(states, actions, logits)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_checkpoint(std::io::BufWriter::new(file))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_checkpoint(std::io::BufReader::new(file))
    }
}

pub(crate) fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
}

/// `pi(a|s) / pi_ref(a|s)`, evaluated in log space.
pub fn prob_ratio(
    policy: &TabularPolicy,
    reference: &TabularPolicy,
    state: usize,
    action: usize,
) -> Result<f64> {
    policy.check_same_shape(reference)?;
    Ok((policy.log_prob(state, action)? - reference.log_prob(state, action)?).exp())
}

/// `KL(p || q)` in nats. Terms with `p_i = 0` contribute nothing.
pub fn kl_divergence(p: &Distribution, q: &Distribution) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Dimension(format!(
            "distributions of length {} and {}",
            p.len(),
            q.len()
        )));
    }
    let mut total = 0.0;
    for (i, (&pi, &qi)) in p.probs().iter().zip(q.probs()).enumerate() {
        if pi == 0.0 {
            continue;
        }
        if qi <= 0.0 {
            return Err(Error::Divergence(format!(
                "q[{i}] = {qi} where p[{i}] = {pi}"
            )));
        }
        total += pi * (pi / qi).ln();
    }
    Ok(total.max(0.0))
}

fn distinct_states(states: &[usize], limit: usize) -> Result<Vec<usize>> {
    if states.is_empty() {
        return Err(Error::Argument("state set must be non-empty".into()));
    }
    let mut set = states.to_vec();
    set.sort_unstable();
    set.dedup();
    for &s in &set {
        check_index("state", s, limit)?;
    }
    Ok(set)
}

/// Mean over the distinct `states` of `KL(pi(.|s) || pi_ref(.|s))`.
pub fn policy_kl(policy: &TabularPolicy, reference: &TabularPolicy, states: &[usize]) -> Result<f64> {
    policy.check_same_shape(reference)?;
    let set = distinct_states(states, policy.states())?;
    let mut total = 0.0;
    for &s in &set {
        let lp = policy.log_probs(s)?;
        let lq = reference.log_probs(s)?;
        let kl: f64 = lp
            .iter()
            .zip(&lq)
            .map(|(a, b)| a.exp() * (a - b))
            .sum();
        total += kl.max(0.0);
    }
    Ok(total / set.len() as f64)
}

/// Gradient of [`policy_kl`] with respect to `policy`'s logits.
///
/// For one state with `d_i = log p_i - log q_i` the block is `p_j (d_j - sum_i p_i d_i)`.
pub fn policy_kl_grad(
    policy: &TabularPolicy,
    reference: &TabularPolicy,
    states: &[usize],
) -> Result<GradientVector> {
    policy.check_same_shape(reference)?;
    let set = distinct_states(states, policy.states())?;
    let weight = 1.0 / set.len() as f64;
    let mut grad = GradientVector::zeros(policy.num_params());
    let actions = policy.actions();
    for &s in &set {
        let lp = policy.log_probs(s)?;
        let lq = reference.log_probs(s)?;
        let block = &mut grad.as_mut_slice()[s * actions..(s + 1) * actions];
        softmax_kl_block(&lp, &lq, weight, block);
    }
    Ok(grad)
}

/// Adds `weight * d KL(softmax || q) / d logits` to `out`, given the log-probabilities of both sides.
pub(crate) fn softmax_kl_block(log_p: &[f64], log_q: &[f64], weight: f64, out: &mut [f64]) {
    let p: Vec<f64> = log_p.iter().map(|l| l.exp()).collect();
    let d: Vec<f64> = log_p.iter().zip(log_q).map(|(a, b)| a - b).collect();
    let mean_d: f64 = p.iter().zip(&d).map(|(pi, di)| pi * di).sum();
    for ((o, pi), di) in out.iter_mut().zip(&p).zip(&d) {
        *o += weight * pi * (di - mean_d);
    }
}

/// Central finite differences of `loss` with respect to every logit.
pub fn finite_diff_grad<F>(loss: F, policy: &TabularPolicy, h: f64) -> Result<GradientVector>
where
    F: Fn(&TabularPolicy) -> Result<f64>,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Argument(format!("finite-difference step must be > 0, got {h}")));
    }
    let eval = |p: &TabularPolicy| -> Result<f64> {
        let v = loss(p)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Evaluation(format!("loss returned {v}")))
        }
    };
    let mut grad = Vec::with_capacity(policy.num_params());
    for i in 0..policy.num_params() {
        let plus = eval(&policy.with_offset(i, h))?;
        let minus = eval(&policy.with_offset(i, -h))?;
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(GradientVector::from_vec(grad))
}
