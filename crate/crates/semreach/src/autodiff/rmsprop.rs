//! RMSprop parameter updates and global gradient clipping.

use crate::real::Real;

/// One RMSprop step over a flat parameter slice:
///
/// ```text
/// v   <- decay * v + (1 - decay) * g^2
/// p   <- p - lr * g / (sqrt(v) + eps)
/// ```
pub fn rmsprop_update<T: Real>(
    square_avg: &mut [T],
    params: &mut [T],
    grads: &[T],
    lr: T,
    decay: T,
    eps: T,
) {
    debug_assert_eq!(square_avg.len(), params.len());
    debug_assert_eq!(params.len(), grads.len());
    let one_minus = T::ONE - decay;
    for ((v, p), &g) in square_avg.iter_mut().zip(params.iter_mut()).zip(grads) {
        *v = decay * *v + one_minus * g * g;
        *p -= lr * g / (v.sqrt() + eps);
    }
}

/// Rescales `grads` in place so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm<T: Real>(grads: &mut [Vec<T>], max_norm: T) -> T {
    let mut sq = T::ZERO;
    for g in grads.iter() {
        for &x in g {
            sq += x * x;
        }
    }
    let norm = sq.sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            for x in g.iter_mut() {
                *x *= scale;
            }
        }
    }
    norm
}

/// RMSprop accumulator for one flat parameter vector.
#[derive(Debug, Clone)]
pub struct OptimizerState<T> {
    pub lr: T,
    pub decay: T,
    pub eps: T,
    square_avg: Vec<T>,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(len: usize, lr: T, decay: T, eps: T) -> Self {
        OptimizerState {
            lr,
            decay,
            eps,
            square_avg: vec![T::ZERO; len],
        }
    }

    /// Learning rate 1e-4, decay 0.99, epsilon 1e-8.
    pub fn with_defaults(len: usize) -> Self {
        Self::new(len, T::of(1e-4), T::of(0.99), T::of(1e-8))
    }

    pub fn step(&mut self, params: &mut [T], grads: &[T]) {
        rmsprop_update(
            &mut self.square_avg,
            params,
            grads,
            self.lr,
            self.decay,
            self.eps,
        );
    }

    pub fn square_avg(&self) -> &[T] {
        &self.square_avg
    }
}
