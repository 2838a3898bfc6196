//! Dense kernels: GEMM wrapper, im2col/col2im and convolution geometry.

use crate::error::{Error, Result};
use crate::Real;

/// Row-major `c (m×n) = op(a) · op(b) [+ c]`.
///
/// `a` is stored as `m×k` (or `k×m` when `trans_a`), `b` as `k×n` (or `n×k`).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm<T: Real>(
    trans_a: bool,
    trans_b: bool,
    m: usize,
    n: usize,
    k: usize,
    a: &[T],
    b: &[T],
    c: &mut [T],
    accumulate: bool,
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            c[..m * n].iter_mut().for_each(|v| *v = T::zero());
        }
        return;
    }
    let (rsa, csa) = if trans_a {
        (1, m as isize)
    } else {
        (k as isize, 1)
    };
    let (rsb, csb) = if trans_b {
        (1, k as isize)
    } else {
        (n as isize, 1)
    };
    let beta = if accumulate { T::one() } else { T::zero() };
    // SAFETY: the length assertions above bound every strided access.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            T::one(),
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Geometry of a 2-D convolution, always described in the conv2d direction:
/// the "wide" side has `c_in` channels over `h×w`, the "narrow" side `c_out`
/// channels over `oh×ow`. A transposed convolution maps narrow to wide.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

/// Split `[N,C,H,W]` or `[C,H,W]` into `(N, C, H, W)`.
pub(crate) fn batch_dims(shape: &[usize]) -> Result<(usize, usize, usize, usize)> {
    match *shape {
        [c, h, w] => Ok((1, c, h, w)),
        [n, c, h, w] => Ok((n, c, h, w)),
        _ => Err(Error::shape(format!(
            "expected [C,H,W] or [N,C,H,W], got {shape:?}"
        ))),
    }
}

impl ConvGeom {
    pub fn conv2d(input: &[usize], kernel: &[usize], stride: usize, pad: usize) -> Result<Self> {
        let (batch, c_in, h, w) = batch_dims(input)?;
        let [c_out, kc, kh, kw] = *kernel else {
            return Err(Error::shape(format!(
                "conv kernel must be 4-D, got {kernel:?}"
            )));
        };
        if kc != c_in {
            return Err(Error::shape(format!(
                "kernel expects {kc} input channels, input has {c_in}"
            )));
        }
        if stride == 0 {
            return Err(Error::shape("stride must be at least 1"));
        }
        if kh > h + 2 * pad || kw > w + 2 * pad {
            return Err(Error::shape(format!(
                "kernel {kh}x{kw} exceeds padded input {}x{}",
                h + 2 * pad,
                w + 2 * pad
            )));
        }
        Ok(Self {
            batch,
            c_in,
            h,
            w,
            c_out,
            kh,
            kw,
            stride,
            pad,
            oh: (h + 2 * pad - kh) / stride + 1,
            ow: (w + 2 * pad - kw) / stride + 1,
        })
    }

    /// Geometry for `conv_transpose2d(input, kernel)`; `kernel` is laid out
    /// `[input channels, output channels, kh, kw]`.
    pub fn transpose(input: &[usize], kernel: &[usize], stride: usize, pad: usize) -> Result<Self> {
        let (batch, c_small, oh, ow) = batch_dims(input)?;
        let [kc, c_big, kh, kw] = *kernel else {
            return Err(Error::shape(format!(
                "conv kernel must be 4-D, got {kernel:?}"
            )));
        };
        if kc != c_small {
            return Err(Error::shape(format!(
                "kernel expects {kc} input channels, input has {c_small}"
            )));
        }
        if stride == 0 {
            return Err(Error::shape("stride must be at least 1"));
        }
        let h = ((oh - 1) * stride + kh)
            .checked_sub(2 * pad)
            .filter(|&v| v > 0);
        let w = ((ow - 1) * stride + kw)
            .checked_sub(2 * pad)
            .filter(|&v| v > 0);
        let (Some(h), Some(w)) = (h, w) else {
            return Err(Error::shape(format!(
                "transposed conv of {oh}x{ow} with kernel {kh}x{kw}, stride {stride}, padding {pad} has empty output"
            )));
        };
        Ok(Self {
            batch,
            c_in: c_big,
            h,
            w,
            c_out: c_small,
            kh,
            kw,
            stride,
            pad,
            oh,
            ow,
        })
    }

    pub fn wide_len(&self) -> usize {
        self.c_in * self.h * self.w
    }

    pub fn narrow_len(&self) -> usize {
        self.c_out * self.oh * self.ow
    }

    pub fn col_rows(&self) -> usize {
        self.c_in * self.kh * self.kw
    }

    pub fn col_cols(&self) -> usize {
        self.oh * self.ow
    }

    pub fn wide_shape(&self, batched: bool) -> Vec<usize> {
        shape_of(batched, self.batch, self.c_in, self.h, self.w)
    }

    pub fn narrow_shape(&self, batched: bool) -> Vec<usize> {
        shape_of(batched, self.batch, self.c_out, self.oh, self.ow)
    }

    /// Unfold one wide-side sample into `[c_in·kh·kw, oh·ow]`.
    pub fn im2col<T: Real>(&self, x: &[T], cols: &mut [T]) {
        let ncol = self.col_cols();
        for c in 0..self.c_in {
            let plane = &x[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = (c * self.kh + ki) * self.kw + kj;
                    let dst = &mut cols[row * ncol..(row + 1) * ncol];
                    for oy in 0..self.oh {
                        let out = &mut dst[oy * self.ow..(oy + 1) * self.ow];
                        let iy = (oy * self.stride + ki) as isize - self.pad as isize;
                        if iy < 0 || iy as usize >= self.h {
                            out.iter_mut().for_each(|v| *v = T::zero());
                            continue;
                        }
                        let src = &plane[iy as usize * self.w..(iy as usize + 1) * self.w];
                        for (ox, o) in out.iter_mut().enumerate() {
                            let ix = (ox * self.stride + kj) as isize - self.pad as isize;
                            *o = if ix < 0 || ix as usize >= self.w {
                                T::zero()
                            } else {
                                src[ix as usize]
                            };
                        }
                    }
                }
            }
        }
    }

    /// Fold `[c_in·kh·kw, oh·ow]` back onto one wide-side sample, accumulating.
    pub fn col2im<T: Real>(&self, cols: &[T], x: &mut [T]) {
        let ncol = self.col_cols();
        for c in 0..self.c_in {
            let plane = &mut x[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = (c * self.kh + ki) * self.kw + kj;
                    let src = &cols[row * ncol..(row + 1) * ncol];
                    for oy in 0..self.oh {
                        let iy = (oy * self.stride + ki) as isize - self.pad as isize;
                        if iy < 0 || iy as usize >= self.h {
                            continue;
                        }
                        let dst = &mut plane[iy as usize * self.w..(iy as usize + 1) * self.w];
                        for ox in 0..self.ow {
                            let ix = (ox * self.stride + kj) as isize - self.pad as isize;
                            if ix >= 0 && (ix as usize) < self.w {
                                dst[ix as usize] += src[oy * self.ow + ox];
                            }
                        }
                    }
                }
            }
        }
    }

    /// conv2d forward. Returns the output and the unfolded columns.
    pub fn conv_forward<T: Real>(&self, x: &[T], kernel: &[T]) -> (Vec<T>, Vec<T>) {
        let (rows, ncol) = (self.col_rows(), self.col_cols());
        let mut cols = vec![T::zero(); self.batch * rows * ncol];
        let mut out = vec![T::zero(); self.batch * self.narrow_len()];
        for b in 0..self.batch {
            let cb = &mut cols[b * rows * ncol..(b + 1) * rows * ncol];
            self.im2col(&x[b * self.wide_len()..(b + 1) * self.wide_len()], cb);
            let ob = &mut out[b * self.narrow_len()..(b + 1) * self.narrow_len()];
            gemm(false, false, self.c_out, ncol, rows, kernel, cb, ob, false);
        }
        (out, cols)
    }

    /// conv2d backward: `(d input, d kernel)` given the saved columns.
    pub fn conv_backward<T: Real>(
        &self,
        dout: &[T],
        kernel: &[T],
        cols: &[T],
        need_input: bool,
        need_kernel: bool,
    ) -> (Option<Vec<T>>, Option<Vec<T>>) {
        let (rows, ncol) = (self.col_rows(), self.col_cols());
        let mut dk = need_kernel.then(|| vec![T::zero(); self.c_out * rows]);
        let mut dx = need_input.then(|| vec![T::zero(); self.batch * self.wide_len()]);
        let mut dcols = vec![T::zero(); if need_input { rows * ncol } else { 0 }];
        for b in 0..self.batch {
            let db = &dout[b * self.narrow_len()..(b + 1) * self.narrow_len()];
            if let Some(dk) = dk.as_mut() {
                let cb = &cols[b * rows * ncol..(b + 1) * rows * ncol];
                gemm(false, true, self.c_out, rows, ncol, db, cb, dk, true);
            }
            if let Some(dx) = dx.as_mut() {
                gemm(
                    true, false, rows, ncol, self.c_out, kernel, db, &mut dcols, false,
                );
                self.col2im(
                    &dcols,
                    &mut dx[b * self.wide_len()..(b + 1) * self.wide_len()],
                );
            }
        }
        (dx, dk)
    }

    /// Transposed-conv forward: narrow-side input to wide-side output.
    pub fn transpose_forward<T: Real>(&self, x: &[T], kernel: &[T]) -> Vec<T> {
        let (rows, ncol) = (self.col_rows(), self.col_cols());
        let mut cols = vec![T::zero(); rows * ncol];
        let mut out = vec![T::zero(); self.batch * self.wide_len()];
        for b in 0..self.batch {
            let xb = &x[b * self.narrow_len()..(b + 1) * self.narrow_len()];
            gemm(
                true, false, rows, ncol, self.c_out, kernel, xb, &mut cols, false,
            );
            self.col2im(
                &cols,
                &mut out[b * self.wide_len()..(b + 1) * self.wide_len()],
            );
        }
        out
    }

    pub fn transpose_backward<T: Real>(
        &self,
        dout: &[T],
        x: &[T],
        kernel: &[T],
        need_input: bool,
        need_kernel: bool,
    ) -> (Option<Vec<T>>, Option<Vec<T>>) {
        let (rows, ncol) = (self.col_rows(), self.col_cols());
        let mut cols = vec![T::zero(); rows * ncol];
        let mut dk = need_kernel.then(|| vec![T::zero(); self.c_out * rows]);
        let mut dx = need_input.then(|| vec![T::zero(); self.batch * self.narrow_len()]);
        for b in 0..self.batch {
            self.im2col(
                &dout[b * self.wide_len()..(b + 1) * self.wide_len()],
                &mut cols,
            );
            if let Some(dx) = dx.as_mut() {
                let dxb = &mut dx[b * self.narrow_len()..(b + 1) * self.narrow_len()];
                gemm(
                    false, false, self.c_out, ncol, rows, kernel, &cols, dxb, false,
                );
            }
            if let Some(dk) = dk.as_mut() {
                let xb = &x[b * self.narrow_len()..(b + 1) * self.narrow_len()];
                gemm(false, true, self.c_out, rows, ncol, xb, &cols, dk, true);
            }
        }
        (dx, dk)
    }
}

fn shape_of(batched: bool, n: usize, c: usize, h: usize, w: usize) -> Vec<usize> {
    if batched {
        vec![n, c, h, w]
    } else {
        vec![c, h, w]
    }
}
