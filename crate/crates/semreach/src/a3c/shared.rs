//! Lock-light parameter block shared across worker threads.
//!
//! Values and the RMSprop second-moment accumulator live in atomic cells
//! holding f64 bit patterns, so readers never see torn floats. Updates are
//! serialized through a mutex by default; hogwild mode skips the lock and
//! accepts racy read-modify-write in exchange for zero contention.

use crate::real::Real;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

pub struct SharedParameters {
    values: Vec<AtomicU64>,
    square_avg: Vec<AtomicU64>,
    steps: AtomicU64,
    lock: Mutex<()>,
    hogwild: bool,
    lr: f64,
    decay: f64,
    eps: f64,
}

impl SharedParameters {
    pub fn new(init: &[f64], lr: f64, decay: f64, eps: f64, hogwild: bool) -> Self {
        SharedParameters {
            values: init.iter().map(|&v| AtomicU64::new(v.to_bits())).collect(),
            square_avg: init.iter().map(|_| AtomicU64::new(0)).collect(),
            steps: AtomicU64::new(0),
            lock: Mutex::new(()),
            hogwild,
            lr,
            decay,
            eps,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn snapshot(&self) -> Vec<f64> {
        self.values
            .iter()
            .map(|c| f64::from_bits(c.load(Ordering::Relaxed)))
            .collect()
    }

    pub fn snapshot_as<T: Real>(&self) -> Vec<T> {
        self.values
            .iter()
            .map(|c| T::of(f64::from_bits(c.load(Ordering::Relaxed))))
            .collect()
    }

    /// Overwrites the parameter values, e.g. when resuming from a
    /// checkpoint. The RMSprop accumulator restarts from zero.
    pub fn store(&self, values: &[f64]) {
        assert_eq!(values.len(), self.len(), "parameter count mismatch");
        let _guard = self.lock.lock().expect("shared parameter lock");
        for (cell, &v) in self.values.iter().zip(values) {
            cell.store(v.to_bits(), Ordering::Relaxed);
        }
        for cell in &self.square_avg {
            cell.store(0, Ordering::Relaxed);
        }
    }

    /// One shared RMSprop step over the whole block. Gradients are applied
    /// as given; clip before calling.
    pub fn apply_gradients(&self, grads: &[f64]) {
        assert_eq!(grads.len(), self.len(), "gradient count mismatch");
        let guard = if self.hogwild {
            None
        } else {
            Some(self.lock.lock().expect("shared parameter lock"))
        };
        for (i, &g) in grads.iter().enumerate() {
            let v_old = f64::from_bits(self.square_avg[i].load(Ordering::Relaxed));
            let v = self.decay * v_old + (1.0 - self.decay) * g * g;
            self.square_avg[i].store(v.to_bits(), Ordering::Relaxed);
            let p = f64::from_bits(self.values[i].load(Ordering::Relaxed));
            let p2 = p - self.lr * g / (v.sqrt() + self.eps);
            self.values[i].store(p2.to_bits(), Ordering::Relaxed);
        }
        drop(guard);
    }

    /// Adds environment steps to the global counter and returns the new
    /// total. The counter never decreases.
    pub fn add_steps(&self, n: u64) -> u64 {
        self.steps.fetch_add(n, Ordering::Relaxed) + n
    }

    pub fn steps(&self) -> u64 {
        self.steps.load(Ordering::Relaxed)
    }
}
