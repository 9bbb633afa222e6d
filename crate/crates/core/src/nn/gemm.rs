//! Deterministic matrix products.
//!
//! `c += a * b` with every output element reduced in a fixed sequential
//! order; parallelism splits output rows only. Bit-identical results for any
//! thread count.

use rayon::prelude::*;

/// c (m×n) += a (m×k) · b (k×n), all row-major.
pub fn gemm(m: usize, k: usize, n: usize, a: &[f32], b: &[f32], c: &mut [f32]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || k == 0 || n == 0 {
        return;
    }
    // Parallel only when the work amortizes the fork cost.
    if m * k * n >= 1 << 18 && m > 1 {
        c.par_chunks_mut(n)
            .enumerate()
            .for_each(|(i, crow)| gemm_row(k, n, &a[i * k..(i + 1) * k], b, crow));
    } else {
        for i in 0..m {
            gemm_row(k, n, &a[i * k..(i + 1) * k], b, &mut c[i * n..(i + 1) * n]);
        }
    }
}

#[inline]
fn gemm_row(k: usize, n: usize, arow: &[f32], b: &[f32], crow: &mut [f32]) {
    for (p, &aip) in arow.iter().enumerate().take(k) {
        if aip == 0.0 {
            continue;
        }
        let brow = &b[p * n..p * n + n];
        for (cv, &bv) in crow.iter_mut().zip(brow.iter()) {
            *cv += aip * bv;
        }
    }
}

/// c (m×n) += aᵀ · b where a is (k×m) and b is (k×n), all row-major.
///
/// Single-threaded: callers that need parallelism chunk over the k axis
/// themselves and combine partial results in a fixed order.
pub fn gemm_at_b(m: usize, k: usize, n: usize, a: &[f32], b: &[f32], c: &mut [f32]) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for p in 0..k {
        let arow = &a[p * m..(p + 1) * m];
        let brow = &b[p * n..(p + 1) * n];
        for (i, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let crow = &mut c[i * n..(i + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow.iter()) {
                *cv += av * bv;
            }
        }
    }
}

/// c (m×n) += a (m×k) · bᵀ where b is (n×k), all row-major.
pub fn gemm_a_bt(m: usize, k: usize, n: usize, a: &[f32], b: &[f32], c: &mut [f32]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || k == 0 || n == 0 {
        return;
    }
    let row = |i: usize, arow: &[f32], crow: &mut [f32]| {
        let _ = i;
        for (j, cv) in crow.iter_mut().enumerate() {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = 0.0f32;
            for (&av, &bv) in arow.iter().zip(brow.iter()) {
                acc += av * bv;
            }
            *cv += acc;
        }
    };
    if m * k * n >= 1 << 18 && m > 1 {
        c.par_chunks_mut(n)
            .enumerate()
            .for_each(|(i, crow)| row(i, &a[i * k..(i + 1) * k], crow));
    } else {
        for i in 0..m {
            row(i, &a[i * k..(i + 1) * k], &mut c[i * n..(i + 1) * n]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(m: usize, k: usize, n: usize, a: &[f32], b: &[f32]) -> Vec<f32> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    #[test]
    fn matches_naive() {
        let (m, k, n) = (7, 5, 9);
        let a: Vec<f32> = (0..m * k).map(|i| (i as f32 * 0.37).sin()).collect();
        let b: Vec<f32> = (0..k * n).map(|i| (i as f32 * 0.11).cos()).collect();
        let want = naive(m, k, n, &a, &b);

        let mut c = vec![0.0; m * n];
        gemm(m, k, n, &a, &b, &mut c);
        assert_eq!(c, want);

        // aᵀ stored as (k×m)
        let mut at = vec![0.0; k * m];
        for i in 0..m {
            for p in 0..k {
                at[p * m + i] = a[i * k + p];
            }
        }
        let mut c2 = vec![0.0; m * n];
        gemm_at_b(m, k, n, &at, &b, &mut c2);
        assert_eq!(c2, want);

        // bᵀ stored as (n×k)
        let mut bt = vec![0.0; n * k];
        for p in 0..k {
            for j in 0..n {
                bt[j * k + p] = b[p * n + j];
            }
        }
        let mut c3 = vec![0.0; m * n];
        gemm_a_bt(m, k, n, &a, &bt, &mut c3);
        for (x, y) in c3.iter().zip(want.iter()) {
            assert!((x - y).abs() < 1e-4);
        }
    }
}
