//! Scalar-precision-generic numeric kernels.
//!
//! Everything the network needs is built from a handful of dense kernels.
//! `dot` carries the bulk of the flops; it is unrolled into independent
//! accumulator chains so the compiler can keep multiple FMAs in flight.

use num_traits::Float;

/// Floating-point scalar the engine is generic over. Production code runs
/// `f32`; the gradient-check suite instantiates `f64` so central differences
/// are not drowned by rounding noise.
pub trait Real:
    Float + Default + Send + Sync + std::fmt::Debug + std::fmt::Display + std::iter::Sum + 'static
{
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Real for f32 {
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
}

pub fn dot<R: Real>(a: &[R], b: &[R]) -> R {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [R::zero(); 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let i = c * 8;
        for j in 0..8 {
            acc[j] = acc[j] + a[i + j] * b[i + j];
        }
    }
    let mut tail = R::zero();
    for i in chunks * 8..a.len() {
        tail = tail + a[i] * b[i];
    }
    // fixed combine order keeps results reproducible
    (((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]))) + tail
}

/// y += a * x
pub fn axpy<R: Real>(y: &mut [R], a: R, x: &[R]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + a * xi;
    }
}

/// out[o] = w[o, :] . x   with w row-major [out_dim, in_dim]
pub fn matvec<R: Real>(w: &[R], x: &[R], out_dim: usize, in_dim: usize, out: &mut [R]) {
    debug_assert_eq!(w.len(), out_dim * in_dim);
    debug_assert_eq!(x.len(), in_dim);
    for o in 0..out_dim {
        out[o] = dot(&w[o * in_dim..(o + 1) * in_dim], x);
    }
}

/// dx[i] += sum_o dy[o] * w[o, i]
pub fn matvec_transpose_accum<R: Real>(
    w: &[R],
    dy: &[R],
    out_dim: usize,
    in_dim: usize,
    dx: &mut [R],
) {
    for o in 0..out_dim {
        axpy(dx, dy[o], &w[o * in_dim..(o + 1) * in_dim]);
    }
}

/// gw[o, i] += dy[o] * x[i]
pub fn outer_accum<R: Real>(gw: &mut [R], dy: &[R], x: &[R], out_dim: usize, in_dim: usize) {
    for o in 0..out_dim {
        axpy(&mut gw[o * in_dim..(o + 1) * in_dim], dy[o], x);
    }
}

/// In-place softmax with max subtraction.
pub fn softmax_in_place<R: Real>(x: &mut [R]) {
    let mut m = x[0];
    for &v in x.iter() {
        if v > m {
            m = v;
        }
    }
    let mut sum = R::zero();
    for v in x.iter_mut() {
        *v = (*v - m).exp();
        sum = sum + *v;
    }
    let inv = R::one() / sum;
    for v in x.iter_mut() {
        *v = *v * inv;
    }
}

/// log(sum(exp(x))) with max subtraction.
pub fn log_sum_exp<R: Real>(x: &[R]) -> R {
    let mut m = x[0];
    for &v in x.iter() {
        if v > m {
            m = v;
        }
    }
    let mut sum = R::zero();
    for &v in x.iter() {
        sum = sum + (v - m).exp();
    }
    m + sum.ln()
}

pub const RMS_EPS: f64 = 1e-5;

/// xn = x / rms(x); returns the reciprocal rms for the backward pass.
pub fn rmsnorm<R: Real>(x: &[R], xn: &mut [R]) -> R {
    let n = R::from_f64(x.len() as f64);
    let ms = dot(x, x) / n;
    let inv = (ms + R::from_f64(RMS_EPS)).sqrt().recip();
    for (o, &v) in xn.iter_mut().zip(x) {
        *o = v * inv;
    }
    inv
}

/// dx += backward of rmsnorm given upstream d(xn).
pub fn rmsnorm_backward_accum<R: Real>(dxn: &[R], x: &[R], inv_rms: R, dx: &mut [R]) {
    let n = R::from_f64(x.len() as f64);
    let proj = dot(dxn, x) * inv_rms * inv_rms * inv_rms / n;
    for i in 0..x.len() {
        dx[i] = dx[i] + inv_rms * dxn[i] - proj * x[i];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_matches_naive() {
        let a: Vec<f64> = (0..37).map(|i| (i as f64) * 0.3 - 2.0).collect();
        let b: Vec<f64> = (0..37).map(|i| 1.5 - (i as f64) * 0.11).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-9);
    }

    #[test]
    fn softmax_normalizes() {
        let mut x = vec![1.0f64, -2.0, 0.5, 3.0];
        softmax_in_place(&mut x);
        let s: f64 = x.iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rmsnorm_grad_matches_finite_difference() {
        let x = vec![0.4f64, -1.2, 2.0, 0.1];
        let dxn = vec![0.3f64, 0.7, -0.2, 1.1];
        let mut xn = vec![0.0; 4];
        let inv = rmsnorm(&x, &mut xn);
        let mut dx = vec![0.0; 4];
        rmsnorm_backward_accum(&dxn, &x, inv, &mut dx);
        // loss = dxn . xn as a linear probe
        let h = 1e-7;
        for i in 0..4 {
            let mut xp = x.clone();
            xp[i] += h;
            let mut xnp = vec![0.0; 4];
            rmsnorm(&xp, &mut xnp);
            let lp: f64 = dxn.iter().zip(&xnp).map(|(a, b)| a * b).sum();
            let mut xm = x.clone();
            xm[i] -= h;
            let mut xnm = vec![0.0; 4];
            rmsnorm(&xm, &mut xnm);
            let lm: f64 = dxn.iter().zip(&xnm).map(|(a, b)| a * b).sum();
            let fd = (lp - lm) / (2.0 * h);
            assert!((fd - dx[i]).abs() < 1e-6, "coord {i}: fd {fd} vs {}", dx[i]);
        }
    }
}
