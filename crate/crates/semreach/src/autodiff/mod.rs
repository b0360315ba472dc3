//! Reverse-mode differentiable tensors with exactly the layer set the agent
//! architecture needs: valid convolution, fully connected, ReLU, LSTM cell,
//! softmax/log-softmax, concatenation, and the elementwise glue for losses.
//!
//! The engine is a single-owner tape: a worker builds its rollout graph on a
//! [`Tape`], calls [`Tape::backward`] on a scalar loss, reads gradients off
//! leaf nodes, and truncates back to a watermark to reuse the parameter
//! leaves for the next window. Tapes are never shared between threads.

mod init;
mod rmsprop;
mod tape;

pub use init::orthogonal_init;
pub use rmsprop::{clip_global_norm, rmsprop_update, OptimizerState};
pub use tape::{AdError, LstmWeights, Tape, TensorId};
