//! Flat-slice math kernels shared by the inference path and the autodiff
//! tape. All matrices are row-major.

/// C = A @ B where A is [m, k] and B is [k, n]. `out` must hold m * n values
/// and is overwritten.
///
/// The loop order accumulates into one output row while streaming rows of B,
/// which keeps the inner loop contiguous and lets it vectorize.
pub fn matmul(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    out.fill(0.0);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * n..(i + 1) * n];
        for (p, &a_ip) in a_row.iter().enumerate() {
            if a_ip == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += a_ip * bv;
            }
        }
    }
}

/// C = A^T @ B where A is [m, k] and B is [m, n]; result is [k, n].
pub fn matmul_at_b(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(out.len(), k * n);
    out.fill(0.0);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let b_row = &b[i * n..(i + 1) * n];
        for (p, &a_ip) in a_row.iter().enumerate() {
            if a_ip == 0.0 {
                continue;
            }
            let out_row = &mut out[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += a_ip * bv;
            }
        }
    }
}

/// C = A @ B^T where A is [m, k] and B is [n, k]; result is [m, n].
pub fn matmul_a_bt(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * n..(i + 1) * n];
        for (j, o) in out_row.iter_mut().enumerate() {
            let b_row = &b[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for (&av, &bv) in a_row.iter().zip(b_row) {
                acc += av * bv;
            }
            *o = acc;
        }
    }
}

/// out[r] += bias for every row r of a [rows, n] matrix.
pub fn add_row_bias(out: &mut [f64], bias: &[f64], rows: usize) {
    let n = bias.len();
    debug_assert_eq!(out.len(), rows * n);
    for r in 0..rows {
        for (o, &b) in out[r * n..(r + 1) * n].iter_mut().zip(bias) {
            *o += b;
        }
    }
}

pub fn relu_inplace(x: &mut [f64]) {
    for v in x {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Row-wise log-softmax of a [rows, n] matrix, written into `out`.
pub fn log_softmax_rows(x: &[f64], out: &mut [f64], rows: usize, n: usize) {
    debug_assert_eq!(x.len(), rows * n);
    debug_assert_eq!(out.len(), rows * n);
    for r in 0..rows {
        let row = &x[r * n..(r + 1) * n];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for &v in row {
            sum += (v - max).exp();
        }
        let log_z = max + sum.ln();
        for (o, &v) in out[r * n..(r + 1) * n].iter_mut().zip(row) {
            *o = v - log_z;
        }
    }
}

/// Row-wise softmax of a [rows, n] matrix, written into `out`.
pub fn softmax_rows(x: &[f64], out: &mut [f64], rows: usize, n: usize) {
    log_softmax_rows(x, out, rows, n);
    for v in out {
        *v = v.exp();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn naive_matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0;
                for p in 0..k {
                    acc += a[i * k + p] * b[p * n + j];
                }
                c[i * n + j] = acc;
            }
        }
        c
    }

    #[test]
    fn matmul_matches_naive_triple_loop() {
        let mut rng = 0x12345u64;
        let mut next = move || {
            rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((rng >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        for &(m, k, n) in &[(1usize, 1usize, 1usize), (2, 3, 4), (5, 7, 3), (16, 256, 19)] {
            let a: Vec<f64> = (0..m * k).map(|_| next()).collect();
            let b: Vec<f64> = (0..k * n).map(|_| next()).collect();
            let want = naive_matmul(&a, &b, m, k, n);

            let mut got = vec![0.0; m * n];
            matmul(&a, &b, &mut got, m, k, n);
            for (g, w) in got.iter().zip(&want) {
                assert_abs_diff_eq!(g, w, epsilon = 1e-12);
            }

            let mut got_bt = vec![0.0; m * n];
            let mut b_t = vec![0.0; k * n];
            for p in 0..k {
                for j in 0..n {
                    b_t[j * k + p] = b[p * n + j];
                }
            }
            matmul_a_bt(&a, &b_t, &mut got_bt, m, k, n);
            for (g, w) in got_bt.iter().zip(&want) {
                assert_abs_diff_eq!(g, w, epsilon = 1e-12);
            }

            let mut got_at = vec![0.0; m * n];
            let mut a_t = vec![0.0; m * k];
            for i in 0..m {
                for p in 0..k {
                    a_t[p * m + i] = a[i * k + p];
                }
            }
            matmul_at_b(&a_t, &b, &mut got_at, k, m, n);
            for (g, w) in got_at.iter().zip(&want) {
                assert_abs_diff_eq!(g, w, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn log_softmax_rows_is_normalized() {
        let x = vec![1.0, 2.0, 3.0, -1.0, 0.0, 1000.0];
        let mut out = vec![0.0; 6];
        log_softmax_rows(&x, &mut out, 2, 3);
        for r in 0..2 {
            let total: f64 = out[r * 3..(r + 1) * 3].iter().map(|v| v.exp()).sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        }
        assert!(out.iter().all(|v| v.is_finite()));
    }
}
