//! Dense f64 tensors and the small matmul kernels the model runs on.
//!
//! Kernels are written in accumulate form (`out += ...`) with unit-stride
//! inner loops over independent accumulators, which lets the compiler
//! vectorize them without reassociating reductions. Summation order is fixed
//! at compile time, so results are run-to-run identical.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "shape mismatch");
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// out[m,n] += a[m,k] @ b[k,n]
///
/// Hot shapes dispatch to const-dimension instances so the output row lives
/// in registers across the k loop; the arithmetic order is identical in
/// every path, so results do not depend on which one runs.
pub fn gemm_nn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    match (k, n) {
        (64, 64) => gemm_nn_fixed::<64, 64>(m, a, b, out),
        (64, 128) => gemm_nn_fixed::<64, 128>(m, a, b, out),
        (128, 64) => gemm_nn_fixed::<128, 64>(m, a, b, out),
        (32, 32) => gemm_nn_fixed::<32, 32>(m, a, b, out),
        (32, 64) => gemm_nn_fixed::<32, 64>(m, a, b, out),
        (64, 32) => gemm_nn_fixed::<64, 32>(m, a, b, out),
        (16, 16) => gemm_nn_fixed::<16, 16>(m, a, b, out),
        _ => gemm_nn_generic(m, k, n, a, b, out),
    }
}

#[inline(always)]
fn gemm_nn_fixed<const K: usize, const N: usize>(m: usize, a: &[f64], b: &[f64], out: &mut [f64]) {
    // Accumulate each output row in a fixed-size buffer the compiler can
    // keep in vector registers across the whole k loop.
    for i in 0..m {
        let arow = &a[i * K..(i + 1) * K];
        let orow = &mut out[i * N..(i + 1) * N];
        let mut acc = [0.0f64; N];
        acc.copy_from_slice(orow);
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b[p * N..(p + 1) * N];
            for (o, &bv) in acc.iter_mut().zip(&brow[..N]) {
                *o += av * bv;
            }
        }
        orow.copy_from_slice(&acc);
    }
}

fn gemm_nn_generic(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], out: &mut [f64]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// out[m,k] += a[m,n] @ b[k,n]^T, via a scratch transpose of `b`.
pub fn gemm_nt(m: usize, n: usize, k: usize, a: &[f64], b: &[f64], out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * n);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * k);
    let mut bt = vec![0.0f64; n * k];
    for r in 0..k {
        for c in 0..n {
            bt[c * k + r] = b[r * n + c];
        }
    }
    gemm_nn(m, n, k, a, &bt, out);
}

/// out[k,n] += a[m,k]^T @ b[m,n]
pub fn gemm_tn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(out.len(), k * n);
    match (k, n) {
        (64, 64) => gemm_tn_fixed::<64, 64>(m, a, b, out),
        (64, 128) => gemm_tn_fixed::<64, 128>(m, a, b, out),
        (128, 64) => gemm_tn_fixed::<128, 64>(m, a, b, out),
        (32, 32) => gemm_tn_fixed::<32, 32>(m, a, b, out),
        (16, 16) => gemm_tn_fixed::<16, 16>(m, a, b, out),
        _ => gemm_tn_generic(m, k, n, a, b, out),
    }
}

#[inline(always)]
fn gemm_tn_fixed<const K: usize, const N: usize>(m: usize, a: &[f64], b: &[f64], out: &mut [f64]) {
    // The b row of the current sample position stays in registers while it
    // updates all K output rows.
    for t in 0..m {
        let arow = &a[t * K..(t + 1) * K];
        let mut brow = [0.0f64; N];
        brow.copy_from_slice(&b[t * N..(t + 1) * N]);
        for (p, &av) in arow.iter().enumerate() {
            let orow = &mut out[p * N..(p + 1) * N];
            for (o, &bv) in orow.iter_mut().zip(&brow) {
                *o += av * bv;
            }
        }
    }
}

fn gemm_tn_generic(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], out: &mut [f64]) {
    for t in 0..m {
        let arow = &a[t * k..(t + 1) * k];
        let brow = &b[t * n..(t + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// Dot product with a fixed four-way unrolled summation order.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let chunks = a.len() / 4;
    let (mut c0, mut c1, mut c2, mut c3) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..chunks {
        let o = i * 4;
        c0 += a[o] * b[o];
        c1 += a[o + 1] * b[o + 1];
        c2 += a[o + 2] * b[o + 2];
        c3 += a[o + 3] * b[o + 3];
    }
    let mut rest = 0.0;
    for i in chunks * 4..a.len() {
        rest += a[i] * b[i];
    }
    (c0 + c1) + (c2 + c3) + rest
}

/// y += alpha * x
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_matmul(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for p in 0..k {
                    s += a[i * k + p] * b[p * n + j];
                }
                out[i * n + j] = s;
            }
        }
        out
    }

    #[test]
    fn gemm_variants_agree_with_naive() {
        let (m, k, n) = (3, 5, 4);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64) * 0.37 - 2.0).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64) * -0.21 + 1.0).collect();
        let expect = naive_matmul(m, k, n, &a, &b);

        let mut out = vec![0.0; m * n];
        gemm_nn(m, k, n, &a, &b, &mut out);
        for (x, y) in out.iter().zip(&expect) {
            assert!((x - y).abs() < 1e-12);
        }

        // a @ b == a @ (b^T)^T
        let mut bt = vec![0.0; n * k];
        for r in 0..k {
            for c in 0..n {
                bt[c * k + r] = b[r * n + c];
            }
        }
        let mut out2 = vec![0.0; m * n];
        gemm_nt(m, k, n, &a, &bt, &mut out2);
        for (x, y) in out2.iter().zip(&expect) {
            assert!((x - y).abs() < 1e-12);
        }

        // (a^T)^T @ b via gemm_tn
        let mut at = vec![0.0; k * m];
        for r in 0..m {
            for c in 0..k {
                at[c * m + r] = a[r * k + c];
            }
        }
        let mut out3 = vec![0.0; m * n];
        gemm_tn(k, m, n, &at, &b, &mut out3);
        for (x, y) in out3.iter().zip(&expect) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn dot_matches_naive() {
        let a: Vec<f64> = (0..13).map(|i| i as f64 * 0.3).collect();
        let b: Vec<f64> = (0..13).map(|i| 1.0 - i as f64 * 0.1).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }
}
