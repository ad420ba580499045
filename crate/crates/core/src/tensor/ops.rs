//! Per-sample convolution kernels built on im2col + GEMM.

use super::{gemm, Padding, Scalar};

/// Geometry of a 2-D convolution mapping `[c, h, w]` to `[oc, oh, ow]`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: Padding,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    pub fn new(c: usize, h: usize, w: usize, kernel: [usize; 2], stride: usize, pad: Padding) -> Self {
        let oh = (h + pad.top + pad.bottom - kernel[0]) / stride + 1;
        let ow = (w + pad.left + pad.right - kernel[1]) / stride + 1;
        Self {
            c,
            h,
            w,
            kh: kernel[0],
            kw: kernel[1],
            stride,
            pad,
            oh,
            ow,
        }
    }

    /// Rows of the column matrix.
    pub fn k(&self) -> usize {
        self.c * self.kh * self.kw
    }

    /// Columns of the column matrix (output positions).
    pub fn p(&self) -> usize {
        self.oh * self.ow
    }

    /// Valid output range `[lo, hi)` along one axis for kernel offset `koff`.
    fn span(out: usize, inp: usize, koff: usize, pad: usize, stride: usize) -> (usize, usize) {
        // need 0 <= o*stride + koff - pad < inp
        let lo = if koff >= pad { 0 } else { (pad - koff).div_ceil(stride) };
        let hi = if inp + pad > koff {
            ((inp + pad - koff - 1) / stride + 1).min(out)
        } else {
            0
        };
        (lo, hi.max(lo))
    }
}

/// `x: [c, h, w]` into `cols: [c*kh*kw, oh*ow]`.
pub(crate) fn im2col<T: Scalar>(g: &ConvGeom, x: &[T], cols: &mut [T]) {
    let p = g.p();
    for c in 0..g.c {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            let (ylo, yhi) = ConvGeom::span(g.oh, g.h, ki, g.pad.top, g.stride);
            for kj in 0..g.kw {
                let (xlo, xhi) = ConvGeom::span(g.ow, g.w, kj, g.pad.left, g.stride);
                let row = (c * g.kh + ki) * g.kw + kj;
                let out = &mut cols[row * p..(row + 1) * p];
                out.fill(T::zero());
                for oy in ylo..yhi {
                    let iy = oy * g.stride + ki - g.pad.top;
                    let src = &plane[iy * g.w..(iy + 1) * g.w];
                    let dst = &mut out[oy * g.ow..(oy + 1) * g.ow];
                    if g.stride == 1 {
                        let ix0 = xlo + kj - g.pad.left;
                        dst[xlo..xhi].copy_from_slice(&src[ix0..ix0 + (xhi - xlo)]);
                    } else {
                        for ox in xlo..xhi {
                            dst[ox] = src[ox * g.stride + kj - g.pad.left];
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates `cols` into `x` (which is overwritten).
pub(crate) fn col2im<T: Scalar>(g: &ConvGeom, cols: &[T], x: &mut [T]) {
    x.fill(T::zero());
    let p = g.p();
    for c in 0..g.c {
        let plane = &mut x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            let (ylo, yhi) = ConvGeom::span(g.oh, g.h, ki, g.pad.top, g.stride);
            for kj in 0..g.kw {
                let (xlo, xhi) = ConvGeom::span(g.ow, g.w, kj, g.pad.left, g.stride);
                let row = (c * g.kh + ki) * g.kw + kj;
                let src_row = &cols[row * p..(row + 1) * p];
                for oy in ylo..yhi {
                    let iy = oy * g.stride + ki - g.pad.top;
                    let dst = &mut plane[iy * g.w..(iy + 1) * g.w];
                    let src = &src_row[oy * g.ow..(oy + 1) * g.ow];
                    for ox in xlo..xhi {
                        let ix = ox * g.stride + kj - g.pad.left;
                        dst[ix] = dst[ix] + src[ox];
                    }
                }
            }
        }
    }
}

/// Convolution over a batch. `x: [n, c, h, w]`, `weight: [oc, c, kh, kw]`.
pub(crate) fn conv_forward<T: Scalar>(
    g: &ConvGeom,
    n: usize,
    oc: usize,
    x: &[T],
    weight: &[T],
    bias: &[T],
    out: &mut [T],
) {
    let (k, p) = (g.k(), g.p());
    let in_len = g.c * g.h * g.w;
    let mut cols = vec![T::zero(); k * p];
    for b in 0..n {
        im2col(g, &x[b * in_len..(b + 1) * in_len], &mut cols);
        let y = &mut out[b * oc * p..(b + 1) * oc * p];
        for (o, row) in y.chunks_exact_mut(p).enumerate() {
            row.fill(bias[o]);
        }
        gemm(oc, k, p, weight, false, &cols, false, T::one(), y);
    }
}

/// Returns `(dx, dweight, dbias)` for [`conv_forward`].
pub(crate) fn conv_backward<T: Scalar>(
    g: &ConvGeom,
    n: usize,
    oc: usize,
    x: &[T],
    weight: &[T],
    dy: &[T],
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let (k, p) = (g.k(), g.p());
    let in_len = g.c * g.h * g.w;
    let mut cols = vec![T::zero(); k * p];
    let mut dcols = vec![T::zero(); k * p];
    let mut dx = vec![T::zero(); n * in_len];
    let mut dw = vec![T::zero(); oc * k];
    let mut db = vec![0f64; oc];
    for b in 0..n {
        let dyb = &dy[b * oc * p..(b + 1) * oc * p];
        for (o, row) in dyb.chunks_exact(p).enumerate() {
            db[o] += row.iter().map(|v| v.as_f64()).sum::<f64>();
        }
        im2col(g, &x[b * in_len..(b + 1) * in_len], &mut cols);
        gemm(oc, p, k, dyb, false, &cols, true, T::one(), &mut dw);
        gemm(k, oc, p, weight, true, dyb, false, T::zero(), &mut dcols);
        col2im(g, &dcols, &mut dx[b * in_len..(b + 1) * in_len]);
    }
    (dx, dw, db.into_iter().map(T::from_f64_lossy).collect())
}

/// Transposed convolution. `g` describes the *forward* convolution that maps
/// the output `[oc, g.h, g.w]` back to the input `[g.c' = ic, g.oh, g.ow]`;
/// here `g.c` is the output channel count. `weight: [ic, oc, kh, kw]`.
pub(crate) fn tconv_forward<T: Scalar>(
    g: &ConvGeom,
    n: usize,
    ic: usize,
    x: &[T],
    weight: &[T],
    bias: &[T],
    out: &mut [T],
) {
    let (k, p) = (g.k(), g.p());
    let out_len = g.c * g.h * g.w;
    let plane = g.h * g.w;
    let mut cols = vec![T::zero(); k * p];
    for b in 0..n {
        gemm(k, ic, p, weight, true, &x[b * ic * p..(b + 1) * ic * p], false, T::zero(), &mut cols);
        let y = &mut out[b * out_len..(b + 1) * out_len];
        col2im(g, &cols, y);
        for (o, ch) in y.chunks_exact_mut(plane).enumerate() {
            for v in ch {
                *v = *v + bias[o];
            }
        }
    }
}

pub(crate) fn tconv_backward<T: Scalar>(
    g: &ConvGeom,
    n: usize,
    ic: usize,
    x: &[T],
    weight: &[T],
    dy: &[T],
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let (k, p) = (g.k(), g.p());
    let out_len = g.c * g.h * g.w;
    let plane = g.h * g.w;
    let mut dcols = vec![T::zero(); k * p];
    let mut dx = vec![T::zero(); n * ic * p];
    let mut dw = vec![T::zero(); ic * k];
    let mut db = vec![0f64; g.c];
    for b in 0..n {
        let dyb = &dy[b * out_len..(b + 1) * out_len];
        for (o, ch) in dyb.chunks_exact(plane).enumerate() {
            db[o] += ch.iter().map(|v| v.as_f64()).sum::<f64>();
        }
        im2col(g, dyb, &mut dcols);
        let xb = &x[b * ic * p..(b + 1) * ic * p];
        gemm(ic, k, p, weight, false, &dcols, false, T::zero(), &mut dx[b * ic * p..(b + 1) * ic * p]);
        gemm(ic, p, k, xb, false, &dcols, true, T::one(), &mut dw);
    }
    (dx, dw, db.into_iter().map(T::from_f64_lossy).collect())
}

/// Max pooling without padding; records the flat input index of each winner.
pub(crate) fn maxpool_forward<T: Scalar>(
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    kernel: usize,
    stride: usize,
    x: &[T],
) -> (Vec<T>, Vec<u32>) {
    let oh = (h - kernel) / stride + 1;
    let ow = (w - kernel) / stride + 1;
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut arg = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + oy * stride * w + ox * stride;
                for ky in 0..kernel {
                    for kx in 0..kernel {
                        let idx = base + (oy * stride + ky) * w + ox * stride + kx;
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                }
                out.push(x[best]);
                arg.push(best as u32);
            }
        }
    }
    (out, arg)
}
