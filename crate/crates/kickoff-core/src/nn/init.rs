//! Orthogonal weight initialization via Householder QR.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::nn::tensor::Tensor;

/// Standard normal sample by Box-Muller, so initialization depends only on
/// the seeded stream and not on any distribution crate's internals.
fn normal(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let u1: f64 = rng.gen::<f64>();
        let u2: f64 = rng.gen::<f64>();
        if u1 > f64::MIN_POSITIVE {
            return (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        }
    }
}

/// Orthogonal [rows, cols] matrix scaled by `gain`: every singular value of
/// the result equals `gain`. Uses a Gaussian fill followed by Householder QR
/// with the R-diagonal sign fix that makes the factorization unique.
pub fn orthogonal(rows: usize, cols: usize, gain: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let transpose = rows < cols;
    let (m, n) = if transpose { (cols, rows) } else { (rows, cols) };

    let mut a = vec![0.0; m * n];
    for v in a.iter_mut() {
        *v = normal(rng);
    }

    // Householder vectors are kept in-place below the diagonal; the essential
    // part of each reflector is stored separately for the Q build-up.
    let mut vs: Vec<Vec<f64>> = Vec::with_capacity(n);
    for k in 0..n {
        let mut v: Vec<f64> = (k..m).map(|i| a[i * n + k]).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            vs.push(vec![0.0; m - k]);
            continue;
        }
        let alpha = if v[0] >= 0.0 { -norm } else { norm };
        v[0] -= alpha;
        let vnorm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if vnorm == 0.0 {
            vs.push(vec![0.0; m - k]);
            continue;
        }
        for x in v.iter_mut() {
            *x /= vnorm;
        }
        for col in k..n {
            let dot: f64 = (k..m).map(|i| v[i - k] * a[i * n + col]).sum();
            for i in k..m {
                a[i * n + col] -= 2.0 * v[i - k] * dot;
            }
        }
        vs.push(v);
    }

    // Build the thin Q by applying reflectors to I in reverse order.
    let mut q = vec![0.0; m * n];
    for j in 0..n {
        q[j * n + j] = 1.0;
    }
    for k in (0..n).rev() {
        let v = &vs[k];
        if v.iter().all(|&x| x == 0.0) {
            continue;
        }
        for col in 0..n {
            let dot: f64 = (k..m).map(|i| v[i - k] * q[i * n + col]).sum();
            for i in k..m {
                q[i * n + col] -= 2.0 * v[i - k] * dot;
            }
        }
    }

    // Sign fix: make diag(R) positive by flipping the matching Q column.
    for j in 0..n {
        if a[j * n + j] < 0.0 {
            for i in 0..m {
                q[i * n + j] = -q[i * n + j];
            }
        }
    }

    let data = if transpose {
        let mut out = vec![0.0; rows * cols];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = gain * q[i * n + j];
            }
        }
        out
    } else {
        q.iter().map(|&x| gain * x).collect()
    };

    Tensor::from_vec(&[rows, cols], data).expect("orthogonal init produced non-finite values")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;

    /// Gram matrix along the short side; for a gain-scaled orthogonal matrix
    /// it must equal gain^2 * I, which pins every singular value to gain.
    fn check_gram(t: &Tensor, gain: f64) {
        let (r, c) = (t.rows(), t.cols());
        let (short, long, row_major_short_first) = if r <= c { (r, c, true) } else { (c, r, false) };
        for i in 0..short {
            for j in 0..short {
                let mut dot = 0.0;
                for k in 0..long {
                    let (a, b) = if row_major_short_first {
                        (t.at2(i, k), t.at2(j, k))
                    } else {
                        (t.at2(k, i), t.at2(k, j))
                    };
                    dot += a * b;
                }
                let want = if i == j { gain * gain } else { 0.0 };
                assert_abs_diff_eq!(dot, want, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn square_tall_and_wide_matrices_are_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(r, c) in &[(8usize, 8usize), (12, 5), (5, 12), (256, 256), (101, 256)] {
            let t = orthogonal(r, c, 1.0, &mut rng);
            check_gram(&t, 1.0);
        }
    }

    #[test]
    fn gain_scales_every_singular_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let t = orthogonal(10, 6, std::f64::consts::SQRT_2, &mut rng);
        check_gram(&t, std::f64::consts::SQRT_2);
    }

    #[test]
    fn same_seed_same_matrix() {
        let a = orthogonal(9, 4, 1.0, &mut ChaCha8Rng::seed_from_u64(42));
        let b = orthogonal(9, 4, 1.0, &mut ChaCha8Rng::seed_from_u64(42));
        assert_eq!(a, b);
    }

    #[test]
    fn different_seeds_differ() {
        let a = orthogonal(9, 4, 1.0, &mut ChaCha8Rng::seed_from_u64(1));
        let b = orthogonal(9, 4, 1.0, &mut ChaCha8Rng::seed_from_u64(2));
        assert_ne!(a, b);
    }
}
