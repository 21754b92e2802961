//! Gradient rules for every op. `apply` routes the output gradient of one
//! node into its parents' accumulators.



use super::kernels::{
    broadcast_strides, gemm_nn, numel, reduce_to_shape, strides_for, transpose2d,
};
use super::{Op, Scalar, Tensor};

pub(crate) fn apply<T: Scalar>(op: &Op<T>, out: &Tensor<T>, grad: &[T]) {
    match op {
        Op::Add(a, b) => {
            if a.requires_grad() {
                a.add_grad(&reduce_to_shape(grad, out.shape(), a.shape()));
            }
            if b.requires_grad() {
                b.add_grad(&reduce_to_shape(grad, out.shape(), b.shape()));
            }
        }
        Op::Sub(a, b) => {
            if a.requires_grad() {
                a.add_grad(&reduce_to_shape(grad, out.shape(), a.shape()));
            }
            if b.requires_grad() {
                let neg: Vec<T> = grad.iter().map(|&g| -g).collect();
                b.add_grad(&reduce_to_shape(&neg, out.shape(), b.shape()));
            }
        }
        Op::Mul(a, b) => {
            if a.requires_grad() {
                let tmp = mul_grad_side(grad, out.shape(), b);
                a.add_grad(&reduce_to_shape(&tmp, out.shape(), a.shape()));
            }
            if b.requires_grad() {
                let tmp = mul_grad_side(grad, out.shape(), a);
                b.add_grad(&reduce_to_shape(&tmp, out.shape(), b.shape()));
            }
        }
        Op::Scale(x, c) => {
            if x.requires_grad() {
                let g: Vec<T> = grad.iter().map(|&g| g * *c).collect();
                x.add_grad(&g);
            }
        }
        Op::AddScalar(x) => {
            if x.requires_grad() {
                x.add_grad(grad);
            }
        }
        Op::Matmul(a, b) => matmul_backward(a, b, out, grad),
        Op::Reshape(x) => {
            if x.requires_grad() {
                x.add_grad(grad);
            }
        }
        Op::TransposeLast(x) => {
            if x.requires_grad() {
                // transposing the gradient of the transpose restores layout
                let shape = out.shape();
                let (r, c) = (shape[shape.len() - 2], shape[shape.len() - 1]);
                let batch = numel(shape) / (r * c);
                let mut g = vec![T::zero(); grad.len()];
                for bi in 0..batch {
                    transpose2d(r, c, &grad[bi * r * c..(bi + 1) * r * c], &mut g[bi * r * c..(bi + 1) * r * c]);
                }
                x.add_grad(&g);
            }
        }
        Op::SwapAxes01(x) => {
            if x.requires_grad() {
                let shape = out.shape();
                let (d0, d1) = (shape[0], shape[1]);
                let block = numel(shape) / (d0 * d1);
                let mut g = vec![T::zero(); grad.len()];
                for i in 0..d0 {
                    for j in 0..d1 {
                        let src = &grad[(i * d1 + j) * block..(i * d1 + j + 1) * block];
                        let dst = &mut g[(j * d0 + i) * block..(j * d0 + i + 1) * block];
                        dst.copy_from_slice(src);
                    }
                }
                x.add_grad(&g);
            }
        }
        Op::Concat(xs, axis) => {
            let out_shape = out.shape();
            let outer: usize = out_shape[..*axis].iter().product();
            let inner: usize = out_shape[*axis + 1..].iter().product();
            let total_axis = out_shape[*axis];
            let mut offset = 0usize;
            for x in xs {
                let w = x.shape()[*axis];
                if x.requires_grad() {
                    let mut g = vec![T::zero(); x.numel()];
                    for o in 0..outer {
                        let src = &grad[(o * total_axis + offset) * inner..(o * total_axis + offset + w) * inner];
                        g[o * w * inner..(o + 1) * w * inner].copy_from_slice(src);
                    }
                    x.add_grad(&g);
                }
                offset += w;
            }
        }
        Op::Narrow { x, axis, start } => {
            if x.requires_grad() {
                let x_shape = x.shape();
                let outer: usize = x_shape[..*axis].iter().product();
                let inner: usize = x_shape[*axis + 1..].iter().product();
                let w_in = x_shape[*axis];
                let w_out = out.shape()[*axis];
                let mut g = vec![T::zero(); x.numel()];
                for o in 0..outer {
                    let dst = &mut g[(o * w_in + start) * inner..(o * w_in + start + w_out) * inner];
                    dst.copy_from_slice(&grad[o * w_out * inner..(o + 1) * w_out * inner]);
                }
                x.add_grad(&g);
            }
        }
        Op::Gelu(x) => {
            if x.requires_grad() {
                let c0 = T::from_f64(0.797_884_560_802_865_4); // sqrt(2/pi)
                let c1 = T::from_f64(0.044_715);
                let half = T::from_f64(0.5);
                let three = T::from_f64(3.0);
                let g: Vec<T> = x
                    .data()
                    .iter()
                    .zip(grad.iter())
                    .map(|(&v, &g)| {
                        let u = c0 * (v + c1 * v * v * v);
                        let t = u.tanh();
                        let du = c0 * (T::one() + three * c1 * v * v);
                        let d = half * (T::one() + t) + half * v * (T::one() - t * t) * du;
                        g * d
                    })
                    .collect();
                x.add_grad(&g);
            }
        }
        Op::Softmax(x) => {
            if x.requires_grad() {
                let y = out.data();
                let d = *out.shape().last().unwrap();
                let rows = y.len() / d;
                let mut g = vec![T::zero(); y.len()];
                for r in 0..rows {
                    let ys = &y[r * d..(r + 1) * d];
                    let gs = &grad[r * d..(r + 1) * d];
                    let dot = ys.iter().zip(gs.iter()).fold(T::zero(), |acc, (&yv, &gv)| acc + yv * gv);
                    for j in 0..d {
                        g[r * d + j] = ys[j] * (gs[j] - dot);
                    }
                }
                x.add_grad(&g);
            }
        }
        Op::LayerNorm { x, gamma, beta, mean, rstd } => {
            let d = *x.shape().last().unwrap();
            let rows = x.numel() / d;
            let xd = x.data();
            let gam = gamma.data();
            let inv_d = T::from_f64(1.0 / d as f64);
            if x.requires_grad() {
                let mut gx = vec![T::zero(); x.numel()];
                for r in 0..rows {
                    let xs = &xd[r * d..(r + 1) * d];
                    let gs = &grad[r * d..(r + 1) * d];
                    let mut m1 = T::zero();
                    let mut m2 = T::zero();
                    for j in 0..d {
                        let xhat = (xs[j] - mean[r]) * rstd[r];
                        let gg = gs[j] * gam[j];
                        m1 = m1 + gg;
                        m2 = m2 + gg * xhat;
                    }
                    m1 = m1 * inv_d;
                    m2 = m2 * inv_d;
                    for j in 0..d {
                        let xhat = (xs[j] - mean[r]) * rstd[r];
                        let gg = gs[j] * gam[j];
                        gx[r * d + j] = rstd[r] * (gg - m1 - xhat * m2);
                    }
                }
                x.add_grad(&gx);
            }
            if gamma.requires_grad() {
                let mut gg = vec![T::zero(); d];
                for r in 0..rows {
                    for j in 0..d {
                        let xhat = (xd[r * d + j] - mean[r]) * rstd[r];
                        gg[j] = gg[j] + grad[r * d + j] * xhat;
                    }
                }
                gamma.add_grad(&gg);
            }
            if beta.requires_grad() {
                let mut gb = vec![T::zero(); d];
                for r in 0..rows {
                    for j in 0..d {
                        gb[j] = gb[j] + grad[r * d + j];
                    }
                }
                beta.add_grad(&gb);
            }
        }
        Op::MaxAxis { x, axis, arg } | Op::MinAxis { x, axis, arg } => {
            if x.requires_grad() {
                let x_shape = x.shape();
                let width = x_shape[*axis];
                let inner: usize = x_shape[*axis + 1..].iter().product();
                let mut g = vec![T::zero(); x.numel()];
                for (oi, (&a, &gv)) in arg.iter().zip(grad.iter()).enumerate() {
                    let o = oi / inner;
                    let i = oi % inner;
                    g[(o * width + a as usize) * inner + i] = gv;
                }
                x.add_grad(&g);
            }
        }
        Op::SumAxis { x, axis } => {
            if x.requires_grad() {
                let x_shape = x.shape();
                let width = x_shape[*axis];
                let inner: usize = x_shape[*axis + 1..].iter().product();
                let outer: usize = x_shape[..*axis].iter().product();
                let mut g = vec![T::zero(); x.numel()];
                for o in 0..outer {
                    for a in 0..width {
                        let dst = &mut g[(o * width + a) * inner..(o * width + a + 1) * inner];
                        dst.copy_from_slice(&grad[o * inner..(o + 1) * inner]);
                    }
                }
                x.add_grad(&g);
            }
        }
        Op::SumAll(x) => {
            if x.requires_grad() {
                x.add_grad(&vec![grad[0]; x.numel()]);
            }
        }
        Op::ChamferL2 { pred, target, nn_ab, nn_ba } => {
            if pred.requires_grad() {
                let n = pred.numel() / 3;
                let m = target.len();
                let pd = pred.data();
                let g0 = grad[0].to_f64();
                let mut g = vec![0.0f64; pred.numel()];
                let wa = 2.0 / n as f64;
                let wb = 2.0 / m as f64;
                for (i, &j) in nn_ab.iter().enumerate() {
                    let t = &target[j as usize];
                    for c in 0..3 {
                        g[i * 3 + c] += wa * (pd[i * 3 + c].to_f64() - t[c]);
                    }
                }
                for (j, &i) in nn_ba.iter().enumerate() {
                    let t = &target[j];
                    let i = i as usize;
                    for c in 0..3 {
                        g[i * 3 + c] += wb * (pd[i * 3 + c].to_f64() - t[c]);
                    }
                }
                let g: Vec<T> = g.iter().map(|&v| T::from_f64(v * g0)).collect();
                pred.add_grad(&g);
            }
        }
    }
}

/// Elementwise grad · other, with `other` broadcast into the output shape.
fn mul_grad_side<T: Scalar>(grad: &[T], out_shape: &[usize], other: &Tensor<T>) -> Vec<T> {
    let so = broadcast_strides(other.shape(), out_shape);
    let sg = strides_for(out_shape);
    super::kernels::map2_broadcast(out_shape, grad, &sg, other.data(), &so, |g, o| g * o)
}

fn matmul_backward<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, out: &Tensor<T>, grad: &[T]) {
    let a_shape = a.shape();
    let b_shape = b.shape();
    let out_shape = out.shape();
    let nd = out_shape.len();
    let (m, n) = (out_shape[nd - 2], out_shape[nd - 1]);
    let k = a_shape[a_shape.len() - 1];
    let batch_shape = &out_shape[..nd - 2];
    let batch: usize = batch_shape.iter().product();

    // per-batch offsets honoring broadcast (stride 0 on stretched dims)
    let a_batch = &a_shape[..a_shape.len() - 2];
    let b_batch = &b_shape[..b_shape.len() - 2];
    let sa = batch_offsets(a_batch, batch_shape, m * k);
    let sb = batch_offsets(b_batch, batch_shape, k * n);

    if a.requires_grad() {
        // da = dc · b^T, then reduced over broadcast batch dims
        let mut da_full = vec![T::zero(); batch * m * k];
        let mut bt = vec![T::zero(); k * n];
        for bi in 0..batch {
            let bs = &b.data()[sb[bi]..sb[bi] + k * n];
            transpose2d(k, n, bs, &mut bt);
            gemm_nn(m, n, k, &grad[bi * m * n..(bi + 1) * m * n], &bt, &mut da_full[bi * m * k..(bi + 1) * m * k]);
        }
        let mut full_shape = batch_shape.to_vec();
        full_shape.extend_from_slice(&[m, k]);
        a.add_grad(&reduce_to_shape(&da_full, &full_shape, a_shape));
    }
    if b.requires_grad() {
        // db = a^T · dc
        let mut db_full = vec![T::zero(); batch * k * n];
        let mut at = vec![T::zero(); m * k];
        for bi in 0..batch {
            let asl = &a.data()[sa[bi]..sa[bi] + m * k];
            transpose2d(m, k, asl, &mut at);
            gemm_nn(k, m, n, &at, &grad[bi * m * n..(bi + 1) * m * n], &mut db_full[bi * k * n..(bi + 1) * k * n]);
        }
        let mut full_shape = batch_shape.to_vec();
        full_shape.extend_from_slice(&[k, n]);
        b.add_grad(&reduce_to_shape(&db_full, &full_shape, b_shape));
    }
}

/// Flat element offset of each broadcast batch index into an operand.
pub(crate) fn batch_offsets(operand_batch: &[usize], out_batch: &[usize], mat_size: usize) -> Vec<usize> {
    let total: usize = out_batch.iter().product();
    let mut out = Vec::with_capacity(total);
    if out_batch.is_empty() {
        out.push(0);
        return out;
    }
    let strides = broadcast_strides(operand_batch, out_batch);
    let nd = out_batch.len();
    let mut coords = vec![0usize; nd];
    let mut off = 0usize;
    for _ in 0..total {
        out.push(off * mat_size);
        for d in (0..nd).rev() {
            coords[d] += 1;
            off += strides[d];
            if coords[d] < out_batch[d] {
                break;
            }
            coords[d] = 0;
            off -= strides[d] * out_batch[d];
        }
    }
    out
}
