//! Stride-1, same-padded 2-D convolution via chunked im2col and GEMM.
//!
//! Every output pixel is a dot product over the same `in * k * k` reduction
//! regardless of how rows are chunked, so results do not depend on the
//! spatial extent of the input. Tiled inference relies on this.

use crate::tensor::Real;

/// Target number of output pixels per im2col chunk.
const CHUNK_PIXELS: usize = 4096;

/// One convolution: `weight` is `out x (in * k * k)` row-major with
/// `(in, ky, kx)` ordering inside a row.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Conv<T> {
    pub fn zeros(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            weight: vec![T::ZERO; out_channels * in_channels * kernel * kernel],
            bias: vec![T::ZERO; out_channels],
        }
    }

    pub fn fan_in(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    fn pad(&self) -> usize {
        self.kernel / 2
    }

    fn rows_per_chunk(width: usize) -> usize {
        (CHUNK_PIXELS / width.max(1)).max(1)
    }

    /// Writes `out_channels` planes into `out` (length `out_channels * h * w`).
    pub fn forward(&self, input: &[T], h: usize, w: usize, out: &mut [T]) {
        let plane = h * w;
        debug_assert_eq!(input.len(), self.in_channels * plane);
        debug_assert_eq!(out.len(), self.out_channels * plane);
        let kk = self.fan_in();
        if self.kernel == 1 {
            unsafe {
                T::gemm(
                    self.out_channels,
                    kk,
                    plane,
                    T::ONE,
                    self.weight.as_ptr(),
                    kk as isize,
                    1,
                    input.as_ptr(),
                    plane as isize,
                    1,
                    T::ZERO,
                    out.as_mut_ptr(),
                    plane as isize,
                    1,
                );
            }
        } else {
            let rows = Self::rows_per_chunk(w).min(h);
            let mut col = vec![T::ZERO; kk * rows * w];
            let mut r0 = 0;
            while r0 < h {
                let r1 = (r0 + rows).min(h);
                let n = (r1 - r0) * w;
                im2col(
                    input,
                    self.in_channels,
                    h,
                    w,
                    self.kernel,
                    self.pad(),
                    r0,
                    r1,
                    &mut col[..kk * n],
                );
                unsafe {
                    T::gemm(
                        self.out_channels,
                        kk,
                        n,
                        T::ONE,
                        self.weight.as_ptr(),
                        kk as isize,
                        1,
                        col.as_ptr(),
                        n as isize,
                        1,
                        T::ZERO,
                        out.as_mut_ptr().add(r0 * w),
                        plane as isize,
                        1,
                    );
                }
                r0 = r1;
            }
        }
        for (o, &b) in self.bias.iter().enumerate() {
            for v in &mut out[o * plane..(o + 1) * plane] {
                *v += b;
            }
        }
    }

    /// Accumulates parameter gradients into `grads` and, when `grad_input` is
    /// given, adds the input gradient into it.
    pub fn backward(
        &self,
        input: &[T],
        h: usize,
        w: usize,
        grad_out: &[T],
        grads: &mut Conv<T>,
        grad_input: Option<&mut [T]>,
    ) {
        let plane = h * w;
        let kk = self.fan_in();
        for (o, gb) in grads.bias.iter_mut().enumerate() {
            let mut s = T::ZERO;
            for &g in &grad_out[o * plane..(o + 1) * plane] {
                s += g;
            }
            *gb += s;
        }
        if self.kernel == 1 {
            unsafe {
                // dW += dOut (O x P) * X^T (P x C)
                T::gemm(
                    self.out_channels,
                    plane,
                    kk,
                    T::ONE,
                    grad_out.as_ptr(),
                    plane as isize,
                    1,
                    input.as_ptr(),
                    1,
                    plane as isize,
                    T::ONE,
                    grads.weight.as_mut_ptr(),
                    kk as isize,
                    1,
                );
            }
            if let Some(gi) = grad_input {
                unsafe {
                    // dX += W^T (C x O) * dOut (O x P)
                    T::gemm(
                        kk,
                        self.out_channels,
                        plane,
                        T::ONE,
                        self.weight.as_ptr(),
                        1,
                        kk as isize,
                        grad_out.as_ptr(),
                        plane as isize,
                        1,
                        T::ONE,
                        gi.as_mut_ptr(),
                        plane as isize,
                        1,
                    );
                }
            }
            return;
        }
        let rows = Self::rows_per_chunk(w).min(h);
        let mut col = vec![T::ZERO; kk * rows * w];
        let mut dcol = if grad_input.is_some() {
            vec![T::ZERO; kk * rows * w]
        } else {
            Vec::new()
        };
        let mut grad_input = grad_input;
        let mut r0 = 0;
        while r0 < h {
            let r1 = (r0 + rows).min(h);
            let n = (r1 - r0) * w;
            im2col(
                input,
                self.in_channels,
                h,
                w,
                self.kernel,
                self.pad(),
                r0,
                r1,
                &mut col[..kk * n],
            );
            unsafe {
                // dW += dOut_chunk (O x n) * col^T (n x kk)
                T::gemm(
                    self.out_channels,
                    n,
                    kk,
                    T::ONE,
                    grad_out.as_ptr().add(r0 * w),
                    plane as isize,
                    1,
                    col.as_ptr(),
                    1,
                    n as isize,
                    T::ONE,
                    grads.weight.as_mut_ptr(),
                    kk as isize,
                    1,
                );
            }
            if let Some(gi) = grad_input.as_deref_mut() {
                unsafe {
                    // dcol = W^T (kk x O) * dOut_chunk (O x n)
                    T::gemm(
                        kk,
                        self.out_channels,
                        n,
                        T::ONE,
                        self.weight.as_ptr(),
                        1,
                        kk as isize,
                        grad_out.as_ptr().add(r0 * w),
                        plane as isize,
                        1,
                        T::ZERO,
                        dcol.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
                col2im_add(
                    &dcol[..kk * n],
                    self.in_channels,
                    h,
                    w,
                    self.kernel,
                    self.pad(),
                    r0,
                    r1,
                    gi,
                );
            }
            r0 = r1;
        }
    }
}

/// Unfolds output rows `r0..r1` into a `(c * k * k) x ((r1 - r0) * w)` matrix.
#[allow(clippy::too_many_arguments)]
fn im2col<T: Real>(
    input: &[T],
    channels: usize,
    h: usize,
    w: usize,
    k: usize,
    pad: usize,
    r0: usize,
    r1: usize,
    col: &mut [T],
) {
    let n = (r1 - r0) * w;
    let mut row = 0;
    for c in 0..channels {
        let src = &input[c * h * w..(c + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let dst = &mut col[row * n..(row + 1) * n];
                for (i, r) in (r0..r1).enumerate() {
                    let d = &mut dst[i * w..(i + 1) * w];
                    let sr = r as isize + ky as isize - pad as isize;
                    if sr < 0 || sr >= h as isize {
                        d.fill(T::ZERO);
                        continue;
                    }
                    let s = &src[sr as usize * w..(sr as usize + 1) * w];
                    let shift = kx as isize - pad as isize;
                    // d[x] = s[x + shift] where in range
                    let lo = (-shift).max(0) as usize;
                    let hi = (w as isize - shift).min(w as isize).max(0) as usize;
                    d[..lo.min(w)].fill(T::ZERO);
                    if lo < hi {
                        let s0 = (lo as isize + shift) as usize;
                        d[lo..hi].copy_from_slice(&s[s0..s0 + (hi - lo)]);
                    }
                    if hi < w {
                        d[hi..].fill(T::ZERO);
                    }
                }
                row += 1;
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn col2im_add<T: Real>(
    col: &[T],
    channels: usize,
    h: usize,
    w: usize,
    k: usize,
    pad: usize,
    r0: usize,
    r1: usize,
    grad: &mut [T],
) {
    let n = (r1 - r0) * w;
    let mut row = 0;
    for c in 0..channels {
        let dst = &mut grad[c * h * w..(c + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let src = &col[row * n..(row + 1) * n];
                for (i, r) in (r0..r1).enumerate() {
                    let sr = r as isize + ky as isize - pad as isize;
                    if sr < 0 || sr >= h as isize {
                        continue;
                    }
                    let s = &src[i * w..(i + 1) * w];
                    let d = &mut dst[sr as usize * w..(sr as usize + 1) * w];
                    let shift = kx as isize - pad as isize;
                    let lo = (-shift).max(0) as usize;
                    let hi = (w as isize - shift).min(w as isize).max(0) as usize;
                    for x in lo..hi {
                        d[(x as isize + shift) as usize] += s[x];
                    }
                }
                row += 1;
            }
        }
    }
}
