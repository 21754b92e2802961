//! Low-level dense kernels shared by forward and backward passes.
//!
//! Everything here is plain scalar code over contiguous slices; the ikj
//! loop order keeps the innermost loop free of reductions so it
//! autovectorizes.

use super::Scalar;

/// c[m,n] += a[m,k] * b[k,n]. Caller zeroes `c` when not accumulating.
pub fn gemm_nn<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let c_row = &mut c[i * n..(i + 1) * n];
        for (p, &av) in a_row.iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (cv, &bv) in c_row.iter_mut().zip(b_row.iter()) {
                *cv = *cv + av * bv;
            }
        }
    }
}

/// dst[c,r] = src[r,c].
pub fn transpose2d<T: Copy>(rows: usize, cols: usize, src: &[T], dst: &mut [T]) {
    debug_assert_eq!(src.len(), rows * cols);
    debug_assert_eq!(dst.len(), rows * cols);
    for i in 0..rows {
        let row = &src[i * cols..(i + 1) * cols];
        for (j, &v) in row.iter().enumerate() {
            dst[j * rows + i] = v;
        }
    }
}

/// Row-major strides of a shape.
pub fn strides_for(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

pub fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Numpy-style broadcast of two shapes; `None` when incompatible.
pub fn broadcast_shapes(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let nd = a.len().max(b.len());
    let mut out = vec![0usize; nd];
    for i in 0..nd {
        let av = if i < nd - a.len() { 1 } else { a[i - (nd - a.len())] };
        let bv = if i < nd - b.len() { 1 } else { b[i - (nd - b.len())] };
        out[i] = if av == bv {
            av
        } else if av == 1 {
            bv
        } else if bv == 1 {
            av
        } else {
            return None;
        };
    }
    Some(out)
}

/// Per-output-dim input strides for broadcasting `shape` into `out_shape`
/// (stride 0 on stretched dims).
pub fn broadcast_strides(shape: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let strides = strides_for(shape);
    let offset = out_shape.len() - shape.len();
    let mut out = vec![0usize; out_shape.len()];
    for i in 0..shape.len() {
        out[offset + i] = if shape[i] == 1 { 0 } else { strides[i] };
    }
    out
}

/// out[i] = f(a[sa·i], b[sb·i]) over a broadcast index space.
pub fn map2_broadcast<T: Scalar>(
    out_shape: &[usize],
    a: &[T],
    sa: &[usize],
    b: &[T],
    sb: &[usize],
    f: impl Fn(T, T) -> T,
) -> Vec<T> {
    let total = numel(out_shape);
    let nd = out_shape.len();
    let mut out = Vec::with_capacity(total);
    if nd == 0 {
        out.push(f(a[0], b[0]));
        return out;
    }
    let mut coords = vec![0usize; nd];
    let mut ao = 0usize;
    let mut bo = 0usize;
    for _ in 0..total {
        out.push(f(a[ao], b[bo]));
        // odometer increment, last axis fastest
        for d in (0..nd).rev() {
            coords[d] += 1;
            ao += sa[d];
            bo += sb[d];
            if coords[d] < out_shape[d] {
                break;
            }
            coords[d] = 0;
            ao -= sa[d] * out_shape[d];
            bo -= sb[d] * out_shape[d];
        }
    }
    out
}

/// Sum `grad` (shaped `from`) down to `to` (a broadcast-compatible shape).
pub fn reduce_to_shape<T: Scalar>(grad: &[T], from: &[usize], to: &[usize]) -> Vec<T> {
    if from == to {
        return grad.to_vec();
    }
    let nd = from.len();
    let to_strides = broadcast_strides(to, from);
    let mut out = vec![T::zero(); numel(to)];
    let mut coords = vec![0usize; nd];
    let mut to_off = 0usize;
    for &g in grad {
        out[to_off] = out[to_off] + g;
        for d in (0..nd).rev() {
            coords[d] += 1;
            to_off += to_strides[d];
            if coords[d] < from[d] {
                break;
            }
            coords[d] = 0;
            to_off -= to_strides[d] * from[d];
        }
    }
    out
}

/// Chamfer-L2 between two point sets, computed in f64.
///
/// Returns the distance together with the nearest-neighbor index from each
/// `a` point into `b` and vice versa (ties resolved to the lowest index);
/// the indices define the gradient routing of the differentiable op.
pub fn chamfer_l2_raw(a: &[[f64; 3]], b: &[[f64; 3]]) -> (f64, Vec<u32>, Vec<u32>) {
    assert!(!a.is_empty() && !b.is_empty(), "chamfer on empty cloud");
    let nn = |from: &[[f64; 3]], to: &[[f64; 3]]| -> (f64, Vec<u32>) {
        let mut total = 0.0f64;
        let mut args = Vec::with_capacity(from.len());
        for p in from {
            let mut best = f64::INFINITY;
            let mut arg = 0u32;
            for (j, g) in to.iter().enumerate() {
                let dx = p[0] - g[0];
                let dy = p[1] - g[1];
                let dz = p[2] - g[2];
                let d = dx * dx + dy * dy + dz * dz;
                if d < best {
                    best = d;
                    arg = j as u32;
                }
            }
            total += best;
            args.push(arg);
        }
        (total / from.len() as f64, args)
    };
    let (t_ab, nn_ab) = nn(a, b);
    let (t_ba, nn_ba) = nn(b, a);
    (t_ab + t_ba, nn_ab, nn_ba)
}
