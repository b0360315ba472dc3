//! Deep reinforcement learning for visual reaching with knowledge-graph
//! scene embeddings.
//!
//! The crate trains A3C agents whose convolutional features are concatenated
//! with a fixed-length embedding of a scene-relevant knowledge subgraph before
//! the recurrent layer, and provides the environment, training harness, and
//! evaluation statistics needed to compare the embedding-equipped agents with
//! a vision-only baseline.
//!
//! Modules, bottom-up:
//!
//! - [`autodiff`]: reverse-mode tensor tape with the conv/FC/LSTM/softmax
//!   layer set, RMSprop, and orthogonal initialization.
//! - [`kge`]: triple store, subgraph selection, linearization, and word-vector
//!   scene embeddings.
//! - [`policy`]: the recurrent actor-critic network and action sampling.
//! - [`arena`]: a deterministic software-rendered planar-arm reaching
//!   environment.
//! - [`a3c`]: advantage estimation, losses, shared parameters, worker loops,
//!   interim evaluation, and checkpoints.
//! - [`evalstats`]: post-training evaluation reports, joint-angle statistics,
//!   and one-way ANOVA comparisons.
//! - [`config`]: experiment configuration files tying everything together.

pub mod a3c;
pub mod arena;
pub mod autodiff;
pub mod config;
pub mod evalstats;
pub mod kge;
pub mod policy;
pub mod real;
pub mod rng;

pub use real::Real;
