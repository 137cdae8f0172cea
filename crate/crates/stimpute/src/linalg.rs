//! Dense row-major matrix kernels used by the forward and backward passes.
//!
//! Everything in the crate computes in `f64`. Matrices are flat `&[f64]`
//! slices with explicit dimensions; the three multiply variants below cover
//! every product the model needs (forward, weight gradients, input
//! gradients).

/// out += a (m x k) * b (k x n)
pub fn matmul_nn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * n..(i + 1) * n];
        for (kk, &aik) in a_row.iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            let b_row = &b[kk * n..(kk + 1) * n];
            for j in 0..n {
                out_row[j] += aik * b_row[j];
            }
        }
    }
}

/// out += a^T (k x m)^T=(m x k) * b (m x n), i.e. out is k x n.
///
/// Used for weight gradients: dW = X^T * dY.
pub fn matmul_tn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(out.len(), k * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let b_row = &b[i * n..(i + 1) * n];
        for (kk, &aik) in a_row.iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            let out_row = &mut out[kk * n..(kk + 1) * n];
            for j in 0..n {
                out_row[j] += aik * b_row[j];
            }
        }
    }
}

/// out += a (m x n) * b^T (k x n)^T, i.e. out is m x k.
///
/// Used for input gradients: dX = dY * W^T.
pub fn matmul_nt(a: &[f64], b: &[f64], m: usize, n: usize, k: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * n);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * k);
    for i in 0..m {
        let a_row = &a[i * n..(i + 1) * n];
        let out_row = &mut out[i * k..(i + 1) * k];
        for j in 0..k {
            let b_row = &b[j * n..(j + 1) * n];
            let mut acc = 0.0;
            for c in 0..n {
                acc += a_row[c] * b_row[c];
            }
            out_row[j] += acc;
        }
    }
}

/// Numerically safe softmax over a slice, in place.
pub fn softmax_inplace(x: &mut [f64]) {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in x.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in x.iter_mut() {
        *v /= sum;
    }
}

/// Dot product of two equal-length slices.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_variants_agree_with_naive() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2x3
        let b = [7.0, 8.0, 9.0, 10.0, 11.0, 12.0]; // 3x2
        let mut out = [0.0; 4];
        matmul_nn(&a, &b, 2, 3, 2, &mut out);
        assert_eq!(out, [58.0, 64.0, 139.0, 154.0]);

        // a^T (3x2) * a (2x3) -> 3x3
        let mut tn = [0.0; 9];
        matmul_tn(&a, &a, 2, 3, 3, &mut tn);
        assert_eq!(tn[0], 1.0 * 1.0 + 4.0 * 4.0);
        assert_eq!(tn[4], 2.0 * 2.0 + 5.0 * 5.0);

        // a (2x3) * a^T -> 2x2
        let mut nt = [0.0; 4];
        matmul_nt(&a, &a, 2, 3, 2, &mut nt);
        assert_eq!(nt[0], 14.0);
        assert_eq!(nt[1], 32.0);
        assert_eq!(nt[3], 77.0);
    }

    #[test]
    fn softmax_sums_to_one() {
        let mut x = [1.0, 2.0, 3.0, -4.0];
        softmax_inplace(&mut x);
        let sum: f64 = x.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(x.iter().all(|&v| v > 0.0));
    }
}
