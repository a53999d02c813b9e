//! Pair-GRPO on tabular softmax policies.
//!
//! Three policy-optimization methods trained on synthetic preference bandits:
//!
//! * `grpo`: clipped surrogate with group-normalized reward-model scores,
//! * `soft_pair`: the same surrogate with `+1/-1` rewards from preference labels,
//! * `hard_pair`: KL-fitting to a target that moves a shrinking amount of
//!   probability from the rejected to the preferred response, with a hinge
//!   penalty on the trust region.
//!
//! Alongside the trainers live the numerical checks used to study them:
//! gradient equivalence between GRPO and soft-pair, gradient variance
//! estimates, and stability metrics over training runs.

pub mod analysis;
pub mod envs;
pub mod error;
pub mod objectives;
pub mod par;
pub mod policy;
pub mod rewards;
pub mod trainer;

pub use error::{Error, Result};
pub use objectives::HyperParams;
pub use policy::{Distribution, GradientVector, TabularPolicy};
