//! Asynchronous advantage actor-critic training.
//!
//! Several worker threads roll the policy out in their own environment
//! copies, accumulate gradients over windows of at most `t_max` steps, and
//! apply them to a shared parameter block through a shared RMSprop state.
//! An evaluator thread freezes the parameters every `eval_every`
//! environment steps, scores them greedily on a fixed set of episode
//! seeds, appends one row to an evaluation log, and writes a checkpoint.
//!
//! This file holds the pure return and loss arithmetic; the submodules
//! hold parameter sharing, checkpoints, the rollout worker, and the
//! training orchestrator.

mod checkpoint;
mod shared;
mod train;
mod worker;

pub use checkpoint::{
    flat_from_tensors, load_checkpoint, save_checkpoint, tensors_from_flat, Checkpoint,
    CkptError, CkptTensor, MAGIC,
};
pub use shared::SharedParameters;
pub use train::{interim_evaluate, select_best, train, EvalRow, TrainOutcome};
pub use worker::{TrainConfig, WindowReport, Worker};

use crate::autodiff::AdError;
use crate::policy::PolicyError;
use crate::real::Real;
use crate::arena::EnvError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum A3cError {
    #[error("invalid training config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Autodiff(#[from] AdError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] checkpoint::CkptError),
    #[error("io on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("evaluation log is empty, nothing to select")]
    EmptyEvalLog,
    #[error("worker thread panicked")]
    WorkerPanic,
}

/// One-step temporal-difference error. The bootstrap term is dropped when
/// the transition ends the episode.
pub fn td_error<T: Real>(reward: T, value: T, next_value: T, terminal: bool, gamma: T) -> T {
    let boot = if terminal { T::ZERO } else { gamma * next_value };
    reward + boot - value
}

/// Generalized advantage estimates over one rollout window, computed
/// backward via A_t = delta_t + gamma * lambda * A_{t+1}.
///
/// `values[t]` is the critic value of the state the t-th reward was earned
/// from; `bootstrap_value` estimates the state after the last step and is
/// ignored when `terminal` is set.
pub fn compute_gae<T: Real>(
    rewards: &[T],
    values: &[T],
    bootstrap_value: T,
    terminal: bool,
    gamma: T,
    lambda: T,
) -> Vec<T> {
    assert_eq!(rewards.len(), values.len(), "one value per reward");
    let mut out = vec![T::ZERO; rewards.len()];
    let mut acc = T::ZERO;
    let mut next_value = if terminal { T::ZERO } else { bootstrap_value };
    let mut next_terminal = terminal;
    for t in (0..rewards.len()).rev() {
        let delta = td_error(rewards[t], values[t], next_value, next_terminal, gamma);
        acc = delta + gamma * lambda * acc;
        out[t] = acc;
        next_value = values[t];
        next_terminal = false;
    }
    out
}

/// Discounted n-step returns: R_t = r_t + gamma * R_{t+1}, seeded with the
/// bootstrap value (or zero on a terminal window).
pub fn n_step_returns<T: Real>(
    rewards: &[T],
    bootstrap_value: T,
    terminal: bool,
    gamma: T,
) -> Vec<T> {
    let mut out = vec![T::ZERO; rewards.len()];
    let mut acc = if terminal { T::ZERO } else { bootstrap_value };
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        out[t] = acc;
    }
    out
}

/// Policy loss over a window: the negated sum of log-probability times
/// advantage, with the entropy of each step charged as a penalty scaled by
/// `beta`. Minimizing it pushes probability onto high-advantage actions
/// while a positive `beta` keeps distributions from collapsing too fast.
pub fn policy_loss<T: Real>(log_probs: &[T], advantages: &[T], entropies: &[T], beta: T) -> T {
    assert!(
        log_probs.len() == advantages.len() && log_probs.len() == entropies.len(),
        "per-step slices must align"
    );
    let mut total = T::ZERO;
    for t in 0..log_probs.len() {
        total = total + log_probs[t] * advantages[t] - beta * entropies[t];
    }
    -total
}

/// Value loss over a window: half the summed squared return residuals.
pub fn value_loss<T: Real>(returns: &[T], values: &[T]) -> T {
    assert_eq!(returns.len(), values.len(), "per-step slices must align");
    let half = T::of(0.5);
    returns
        .iter()
        .zip(values)
        .map(|(&r, &v)| half * (r - v) * (r - v))
        .sum()
}
