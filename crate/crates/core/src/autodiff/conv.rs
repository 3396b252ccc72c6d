//! Valid 2-D cross-correlation as a sum of shifted matrix products, one per
//! kernel tap. Output positions are computed on the input's full row width
//! and the columns that run past the right edge are dropped.

use alloc::vec;

use super::Real;

/// Strided view of a matrix inside a slice.
#[derive(Clone, Copy)]
struct View {
    offset: usize,
    rs: usize,
    cs: usize,
}

impl View {
    fn end(&self, rows: usize, cols: usize) -> usize {
        if rows == 0 || cols == 0 {
            return self.offset;
        }
        self.offset + (rows - 1) * self.rs + (cols - 1) * self.cs + 1
    }
}

/// `c += a * b` (or `c = a * b` when `overwrite`) with `a: m x k`,
/// `b: k x n`, `c: m x n`.
#[allow(clippy::too_many_arguments)]
fn gemm_view<T: Real>(m: usize, k: usize, n: usize, a: &[T], av: View, b: &[T], bv: View, c: &mut [T], cv: View, overwrite: bool) {
    assert!(av.end(m, k) <= a.len() && bv.end(k, n) <= b.len() && cv.end(m, n) <= c.len(), "strided view out of bounds");
    if m == 0 || n == 0 {
        return;
    }
    let beta = if overwrite { T::zero() } else { T::one() };
    // SAFETY: every view was bounds-checked above and `c` is exclusively
    // borrowed, so it cannot alias `a` or `b`.
    unsafe {
        T::gemm(
            m,
            k,
            n,
            T::one(),
            a.as_ptr().add(av.offset),
            av.rs as isize,
            av.cs as isize,
            b.as_ptr().add(bv.offset),
            bv.rs as isize,
            bv.cs as isize,
            beta,
            c.as_mut_ptr().add(cv.offset),
            cv.rs as isize,
            cv.cs as isize,
        );
    }
}

#[derive(Clone, Copy)]
pub(crate) struct ConvDims {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub kh: usize,
    pub kw: usize,
}

impl ConvDims {
    pub fn ho(&self) -> usize {
        self.h - self.kh + 1
    }

    pub fn wo(&self) -> usize {
        self.w - self.kw + 1
    }

    /// Output columns evaluated on the full-width grid.
    fn span(&self) -> usize {
        self.ho() * self.w - (self.kw - 1)
    }

    fn taps(&self) -> usize {
        self.kh * self.kw
    }

    fn kernel_tap(&self, i: usize, j: usize) -> View {
        View { offset: i * self.kw + j, rs: self.c * self.taps(), cs: self.taps() }
    }

    fn kernel_tap_t(&self, i: usize, j: usize) -> View {
        View { offset: i * self.kw + j, rs: self.taps(), cs: self.c * self.taps() }
    }

    fn input_shift(&self, i: usize, j: usize) -> View {
        View { offset: i * self.w + j, rs: self.h * self.w, cs: 1 }
    }

    fn full(&self) -> View {
        View { offset: 0, rs: self.ho() * self.w, cs: 1 }
    }
}

/// One sample: `x: [C, H, W]`, kernels `[K, C, kh, kw]` to `out: [K, Ho, Wo]`.
/// `scratch` must hold `K * Ho * W` values.
pub(crate) fn forward<T: Real>(d: &ConvDims, x: &[T], kernels: &[T], bias: &[T], scratch: &mut [T], out: &mut [T]) {
    let span = d.span();
    let mut first = true;
    for i in 0..d.kh {
        for j in 0..d.kw {
            gemm_view(d.k, d.c, span, kernels, d.kernel_tap(i, j), x, d.input_shift(i, j), scratch, d.full(), first);
            first = false;
        }
    }
    let (ho, wo) = (d.ho(), d.wo());
    for kk in 0..d.k {
        for oy in 0..ho {
            let src = &scratch[kk * ho * d.w + oy * d.w..][..wo];
            let dst = &mut out[(kk * ho + oy) * wo..][..wo];
            for (o, &s) in dst.iter_mut().zip(src) {
                *o = s + bias[kk];
            }
        }
    }
}

/// Spreads `g: [K, Ho, Wo]` onto the full-width grid, zeroing the dropped
/// columns.
pub(crate) fn expand_grad<T: Real>(d: &ConvDims, g: &[T], full: &mut [T]) {
    let (ho, wo) = (d.ho(), d.wo());
    for kk in 0..d.k {
        for oy in 0..ho {
            let row = &mut full[kk * ho * d.w + oy * d.w..][..d.w];
            row[..wo].copy_from_slice(&g[(kk * ho + oy) * wo..][..wo]);
            row[wo..].iter_mut().for_each(|v| *v = T::zero());
        }
    }
}

/// Adds the kernel gradient of one sample into `dw`.
pub(crate) fn backward_kernels<T: Real>(d: &ConvDims, x: &[T], gfull: &[T], dw: &mut [T]) {
    let span = d.span();
    for i in 0..d.kh {
        for j in 0..d.kw {
            let xs = d.input_shift(i, j);
            let xt = View { offset: xs.offset, rs: 1, cs: d.h * d.w };
            gemm_view(d.k, span, d.c, gfull, d.full(), x, xt, dw, d.kernel_tap(i, j), false);
        }
    }
}

/// Adds the input gradient of one sample into `dx: [C, H, W]`.
pub(crate) fn backward_input<T: Real>(d: &ConvDims, kernels: &[T], gfull: &[T], dx: &mut [T]) {
    let span = d.span();
    for i in 0..d.kh {
        for j in 0..d.kw {
            gemm_view(d.c, d.k, span, kernels, d.kernel_tap_t(i, j), gfull, d.full(), dx, d.input_shift(i, j), false);
        }
    }
}

pub(crate) fn scratch<T: Real>(d: &ConvDims) -> alloc::vec::Vec<T> {
    vec![T::zero(); d.k * d.ho() * d.w]
}
