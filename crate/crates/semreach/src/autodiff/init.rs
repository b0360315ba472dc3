//! Orthogonal weight initialization.

use crate::real::Real;
use crate::rng::stream;
use rand::Rng;
use rand_distr::StandardNormal;

/// Fills a `rows x cols` row-major matrix with a (semi-)orthogonal draw,
/// scaled by `gain`.
///
/// A standard normal matrix is factored with Householder QR and the Q factor
/// is kept, with column signs fixed to the diagonal of R so the distribution
/// is uniform over the orthogonal group. For `rows >= cols` the columns come
/// out orthonormal; for wide matrices the transpose is factored instead so
/// the rows are orthonormal. All arithmetic runs in f64 regardless of the
/// output precision.
pub fn orthogonal_init<T: Real>(rows: usize, cols: usize, gain: f64, seed: u64, tag: u64) -> Vec<T> {
    assert!(rows > 0 && cols > 0, "orthogonal_init: empty shape");
    let mut rng = stream(seed, tag);
    let flip = rows < cols;
    let (r, c) = if flip { (cols, rows) } else { (rows, cols) };

    // Tall r x c standard normal draw, row-major.
    let mut a: Vec<f64> = (0..r * c).map(|_| rng.sample(StandardNormal)).collect();

    // Householder QR. Reflectors are stored below the diagonal, the
    // diagonal of R is kept separately for the sign fix.
    let mut diag = vec![0.0f64; c];
    let mut taus = vec![0.0f64; c];
    for k in 0..c {
        let mut norm2 = 0.0;
        for i in k..r {
            norm2 += a[i * c + k] * a[i * c + k];
        }
        let norm = norm2.sqrt();
        if norm == 0.0 {
            // Degenerate column: make it a unit vector so Q stays orthogonal.
            taus[k] = 0.0;
            diag[k] = 1.0;
            a[k * c + k] = 1.0;
            continue;
        }
        let alpha = a[k * c + k];
        let beta = if alpha >= 0.0 { -norm } else { norm };
        diag[k] = beta;
        let inv = 1.0 / (alpha - beta);
        a[k * c + k] = 1.0;
        for i in k + 1..r {
            a[i * c + k] *= inv;
        }
        taus[k] = (beta - alpha) / beta;
        // Apply the reflector to the trailing columns.
        for j in k + 1..c {
            let mut dot = 0.0;
            for i in k..r {
                dot += a[i * c + k] * a[i * c + j];
            }
            let t = taus[k] * dot;
            for i in k..r {
                a[i * c + j] -= t * a[i * c + k];
            }
        }
    }

    // Materialize the thin Q by applying reflectors to the first c columns
    // of the identity, back to front.
    let mut q = vec![0.0f64; r * c];
    for j in 0..c {
        q[j * c + j] = 1.0;
    }
    for k in (0..c).rev() {
        if taus[k] == 0.0 {
            continue;
        }
        for j in 0..c {
            let mut dot = 0.0;
            for i in k..r {
                dot += a[i * c + k] * q[i * c + j];
            }
            let t = taus[k] * dot;
            for i in k..r {
                q[i * c + j] -= t * a[i * c + k];
            }
        }
    }

    // Sign fix: scale each column by the sign of the matching R diagonal.
    for j in 0..c {
        if diag[j] < 0.0 {
            for i in 0..r {
                q[i * c + j] = -q[i * c + j];
            }
        }
    }

    let mut out = vec![T::ZERO; rows * cols];
    if flip {
        for i in 0..rows {
            for j in 0..cols {
                out[i * cols + j] = T::of(gain * q[j * rows + i]);
            }
        }
    } else {
        for (o, &v) in out.iter_mut().zip(&q) {
            *o = T::of(gain * v);
        }
    }
    out
}
