//! Single-direction GRU recurrence and its backward pass.
//!
//! r = σ(W_ir x + b_ir + W_hr h + b_hr)
//! z = σ(W_iz x + b_iz + W_hz h + b_hz)
//! n = tanh(W_in x + b_in + r ⊙ (W_hn h + b_hn))
//! h' = (1 − z) ⊙ n + z ⊙ h

use alloc::vec;
use alloc::vec::Vec;

use super::{matmul, Real};

pub(crate) struct Dims {
    pub n: usize,
    pub l: usize,
    pub d: usize,
    pub h: usize,
}

/// Gate activations per processing step, each `[L][N * H]`.
pub(crate) struct GruCache<T> {
    r: Vec<T>,
    z: Vec<T>,
    cand: Vec<T>,
    hn: Vec<T>,
    h_prev: Vec<T>,
}

fn sigmoid<T: Real>(v: T) -> T {
    T::one() / (T::one() + (-v).libm_exp())
}

fn add_bias_rows<T: Real>(m: &mut [T], bias: &[T]) {
    for row in m.chunks_mut(bias.len()) {
        row.iter_mut().zip(bias).for_each(|(a, &b)| *a += b);
    }
}

fn column_sums<T: Real>(m: &[T], width: usize) -> Vec<T> {
    let mut out = vec![T::zero(); width];
    for row in m.chunks(width) {
        out.iter_mut().zip(row).for_each(|(o, &v)| *o += v);
    }
    out
}

/// Runs one direction over `x: [N, L, D]`, writing hidden states into
/// columns `offset..offset + H` of `out: [N, L, 2H]`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn forward<T: Real>(
    dims: &Dims,
    x: &[T],
    w_ih: &[T],
    w_hh: &[T],
    b_ih: &[T],
    b_hh: &[T],
    reverse: bool,
    out: &mut [T],
    offset: usize,
) -> GruCache<T> {
    let Dims { n, l, d, h } = *dims;
    let g3 = 3 * h;
    let mut xi = vec![T::zero(); n * l * g3];
    matmul(false, true, n * l, g3, d, x, w_ih, T::zero(), &mut xi);
    add_bias_rows(&mut xi, b_ih);

    let size = l * n * h;
    let mut cache = GruCache {
        r: vec![T::zero(); size],
        z: vec![T::zero(); size],
        cand: vec![T::zero(); size],
        hn: vec![T::zero(); size],
        h_prev: vec![T::zero(); size],
    };
    let mut hcur = vec![T::zero(); n * h];
    let mut hh = vec![T::zero(); n * g3];
    for s in 0..l {
        let t = if reverse { l - 1 - s } else { s };
        matmul(false, true, n, g3, h, &hcur, w_hh, T::zero(), &mut hh);
        add_bias_rows(&mut hh, b_hh);
        let base = s * n * h;
        cache.h_prev[base..base + n * h].copy_from_slice(&hcur);
        for b in 0..n {
            let xrow = &xi[(b * l + t) * g3..(b * l + t + 1) * g3];
            let hrow = &hh[b * g3..(b + 1) * g3];
            for j in 0..h {
                let r = sigmoid(xrow[j] + hrow[j]);
                let z = sigmoid(xrow[h + j] + hrow[h + j]);
                let hn = hrow[2 * h + j];
                let cand = (xrow[2 * h + j] + r * hn).libm_tanh();
                let k = b * h + j;
                let hnew = (T::one() - z) * cand + z * hcur[k];
                cache.r[base + k] = r;
                cache.z[base + k] = z;
                cache.cand[base + k] = cand;
                cache.hn[base + k] = hn;
                hcur[k] = hnew;
                out[(b * l + t) * 2 * h + offset + j] = hnew;
            }
        }
    }
    cache
}

/// Gradients `[w_ih, w_hh, b_ih, b_hh]` of one direction; adds the input
/// gradient into `dx`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn backward<T: Real>(
    dims: &Dims,
    x: &[T],
    w_ih: &[T],
    w_hh: &[T],
    cache: &GruCache<T>,
    reverse: bool,
    gout: &[T],
    offset: usize,
    dx: &mut [T],
) -> [Vec<T>; 4] {
    let Dims { n, l, d, h } = *dims;
    let g3 = 3 * h;
    let mut dxi = vec![T::zero(); n * l * g3];
    let mut dw_hh = vec![T::zero(); g3 * h];
    let mut db_hh = vec![T::zero(); g3];
    let mut dh = vec![T::zero(); n * h];
    let mut dhh = vec![T::zero(); n * g3];
    for s in (0..l).rev() {
        let t = if reverse { l - 1 - s } else { s };
        let base = s * n * h;
        for b in 0..n {
            for j in 0..h {
                let k = b * h + j;
                let total = dh[k] + gout[(b * l + t) * 2 * h + offset + j];
                let (r, z, cand, hn, hp) =
                    (cache.r[base + k], cache.z[base + k], cache.cand[base + k], cache.hn[base + k], cache.h_prev[base + k]);
                let dcand = total * (T::one() - z);
                let dz = total * (hp - cand);
                let da_n = dcand * (T::one() - cand * cand);
                let dr = da_n * hn;
                let da_z = dz * z * (T::one() - z);
                let da_r = dr * r * (T::one() - r);
                let xrow = (b * l + t) * g3;
                dxi[xrow + j] = da_r;
                dxi[xrow + h + j] = da_z;
                dxi[xrow + 2 * h + j] = da_n;
                dhh[b * g3 + j] = da_r;
                dhh[b * g3 + h + j] = da_z;
                dhh[b * g3 + 2 * h + j] = da_n * r;
                dh[k] = total * z;
            }
        }
        matmul(true, false, g3, h, n, &dhh, &cache.h_prev[base..base + n * h], T::one(), &mut dw_hh);
        column_sums(&dhh, g3).iter().zip(&mut db_hh).for_each(|(&v, o)| *o += v);
        matmul(false, false, n, h, g3, &dhh, w_hh, T::one(), &mut dh);
    }
    let mut dw_ih = vec![T::zero(); g3 * d];
    matmul(true, false, g3, d, n * l, &dxi, x, T::zero(), &mut dw_ih);
    let db_ih = column_sums(&dxi, g3);
    matmul(false, false, n * l, d, g3, &dxi, w_ih, T::one(), dx);
    [dw_ih, dw_hh, db_ih, db_hh]
}
