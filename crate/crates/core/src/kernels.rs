//! Low-level dense kernels shared by the integrators. Dense matrices are
//! column-major flat slices of length dim².

use num_complex::Complex64 as C64;

use crate::hilbert::SparseOperator;

/// y += a * x with a real.
pub(crate) fn axpy(y: &mut [C64], a: f64, x: &[C64]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        yi.re += a * xi.re;
        yi.im += a * xi.im;
    }
}

/// dst = y + c * k.
pub(crate) fn lincomb(dst: &mut [C64], y: &[C64], c: f64, k: &[C64]) {
    debug_assert_eq!(dst.len(), y.len());
    debug_assert_eq!(dst.len(), k.len());
    for ((d, yi), ki) in dst.iter_mut().zip(y).zip(k) {
        d.re = yi.re + c * ki.re;
        d.im = yi.im + c * ki.im;
    }
}

/// out[:, j] = A · x[:, j] for every column j.
pub(crate) fn spmm_left(out: &mut [C64], a: &SparseOperator, x: &[C64]) {
    let dim = a.dim();
    debug_assert_eq!(out.len(), x.len());
    debug_assert_eq!(out.len() % dim, 0);
    for (oc, xc) in out.chunks_exact_mut(dim).zip(x.chunks_exact(dim)) {
        a.mul_vec_into(xc, oc);
    }
}

/// In place, z ← z + z†.
pub(crate) fn hermitianize(z: &mut [C64], dim: usize) {
    debug_assert_eq!(z.len(), dim * dim);
    for j in 0..dim {
        for i in 0..=j {
            let u = z[i + j * dim];
            let v = z[j + i * dim];
            let s = C64::new(u.re + v.re, u.im - v.im);
            z[i + j * dim] = s;
            z[j + i * dim] = s.conj();
        }
    }
}

/// Classic fixed-step RK4 on a flat state, with caller-provided buffers all
/// of the state's length. `apply` must write the generator action into its
/// first argument.
pub(crate) fn rk4_step<F>(
    apply: &mut F,
    y: &mut [C64],
    dt: f64,
    k: &mut [C64],
    tmp: &mut [C64],
    acc: &mut [C64],
) where
    F: FnMut(&mut [C64], &[C64]),
{
    apply(k, y);
    acc.copy_from_slice(k);
    lincomb(tmp, y, 0.5 * dt, k);
    apply(k, tmp);
    axpy(acc, 2.0, k);
    lincomb(tmp, y, 0.5 * dt, k);
    apply(k, tmp);
    axpy(acc, 2.0, k);
    lincomb(tmp, y, dt, k);
    apply(k, tmp);
    axpy(acc, 1.0, k);
    axpy(y, dt / 6.0, acc);
}
