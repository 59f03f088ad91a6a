//! Row-major matrix kernels. Each output row depends only on the matching
//! input row, so results are independent of how many rows are batched.

use super::Real;

const LANES: usize = 8;

/// Dot product with a fixed eight-way split of the accumulator.
#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); LANES];
    let chunks = a.len() / LANES;
    for c in 0..chunks {
        let xa = &a[c * LANES..(c + 1) * LANES];
        let xb = &b[c * LANES..(c + 1) * LANES];
        for l in 0..LANES {
            acc[l] += xa[l] * xb[l];
        }
    }
    let mut tail = T::zero();
    for i in chunks * LANES..a.len() {
        tail += a[i] * b[i];
    }
    let mut s = T::zero();
    for v in acc {
        s += v;
    }
    s + tail
}

#[inline]
fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `c[m×n] = a[m×k] · b[k×n]`
pub fn matmul<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); m * n];
    for i in 0..m {
        let ci = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            axpy(a[i * k + p], &b[p * n..(p + 1) * n], ci);
        }
    }
    c
}

/// `c[m×k] = a[m×n] · bᵀ` where `b` is `[k×n]`.
pub fn matmul_a_bt<T: Real>(a: &[T], b: &[T], m: usize, n: usize, k: usize) -> Vec<T> {
    let mut c = vec![T::zero(); m * k];
    for i in 0..m {
        let ai = &a[i * n..(i + 1) * n];
        for p in 0..k {
            c[i * k + p] = dot(ai, &b[p * n..(p + 1) * n]);
        }
    }
    c
}

/// `c[k×n] += aᵀ · b` where `a` is `[m×k]` and `b` is `[m×n]`.
pub fn matmul_at_b_acc<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize, c: &mut [T]) {
    for i in 0..m {
        let bi = &b[i * n..(i + 1) * n];
        for p in 0..k {
            axpy(a[i * k + p], bi, &mut c[p * n..(p + 1) * n]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                c[i * n + j] = (0..k).map(|p| a[i * k + p] * b[p * n + j]).sum();
            }
        }
        c
    }

    fn transpose(x: &[f64], r: usize, c: usize) -> Vec<f64> {
        let mut t = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                t[j * r + i] = x[i * c + j];
            }
        }
        t
    }

    #[test]
    fn kernels_agree_with_naive_product() {
        let (m, k, n) = (5, 11, 7);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.11).cos()).collect();
        let want = naive(&a, &b, m, k, n);
        let close = |x: &[f64], y: &[f64]| x.iter().zip(y).all(|(p, q)| (p - q).abs() < 1e-12);
        assert!(close(&matmul(&a, &b, m, k, n), &want));
        // a · b = a · (bᵀ)ᵀ
        let bt = transpose(&b, k, n);
        assert!(close(&matmul_a_bt(&a, &bt, m, k, n), &want));
        // aᵀ · c for a = [k×m]
        let at = transpose(&a, m, k);
        let mut c = vec![0.0; m * n];
        matmul_at_b_acc(&at, &b, k, m, n, &mut c);
        assert!(close(&c, &naive(&a, &b, m, k, n)));
    }

    #[test]
    fn dot_handles_tails() {
        let a: Vec<f32> = (0..13).map(|i| i as f32).collect();
        assert_eq!(dot(&a, &a), (0..13).map(|i| (i * i) as f32).sum::<f32>());
    }
}
