//! Forward ops. Each builder validates shapes, computes the output, checks
//! the no-NaN contract, and records the op for backward when needed.

use std::sync::Arc;

use super::kernels::{
    broadcast_shapes, broadcast_strides, chamfer_l2_raw, gemm_nn, map2_broadcast, numel,
    transpose2d,
};
use super::{Op, Result, Scalar, Tensor, TensorError};

fn mismatch(op: &'static str, details: String) -> TensorError {
    TensorError::ShapeMismatch { op, details }
}

impl<T: Scalar> Tensor<T> {
    fn binary(
        &self,
        other: &Tensor<T>,
        opname: &'static str,
        f: impl Fn(T, T) -> T,
        rec: impl FnOnce(Tensor<T>, Tensor<T>) -> Op<T>,
    ) -> Result<Tensor<T>> {
        let out_shape = broadcast_shapes(self.shape(), other.shape())
            .ok_or_else(|| mismatch(opname, format!("{:?} vs {:?}", self.shape(), other.shape())))?;
        let data = if self.shape() == other.shape() {
            self.data().iter().zip(other.data().iter()).map(|(&a, &b)| f(a, b)).collect()
        } else {
            let sa = broadcast_strides(self.shape(), &out_shape);
            let sb = broadcast_strides(other.shape(), &out_shape);
            map2_broadcast(&out_shape, self.data(), &sa, other.data(), &sb, f)
        };
        Tensor::from_op(out_shape, data, rec(self.clone(), other.clone()))
    }

    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary(other, "add", |a, b| a + b, Op::Add)
    }

    pub fn sub(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary(other, "sub", |a, b| a - b, Op::Sub)
    }

    pub fn mul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary(other, "mul", |a, b| a * b, Op::Mul)
    }

    pub fn scale(&self, c: T) -> Result<Tensor<T>> {
        let data = self.data().iter().map(|&v| v * c).collect();
        Tensor::from_op(self.shape().to_vec(), data, Op::Scale(self.clone(), c))
    }

    pub fn add_scalar(&self, c: T) -> Result<Tensor<T>> {
        let data = self.data().iter().map(|&v| v + c).collect();
        Tensor::from_op(self.shape().to_vec(), data, Op::AddScalar(self.clone()))
    }

    /// Batched matrix product `[.., m, k] x [.., k, n] -> [.., m, n]` with
    /// broadcastable leading dims.
    pub fn matmul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        let a_shape = self.shape();
        let b_shape = other.shape();
        if a_shape.len() < 2 || b_shape.len() < 2 {
            return Err(mismatch("matmul", format!("need >=2 dims, got {a_shape:?} x {b_shape:?}")));
        }
        let (m, k) = (a_shape[a_shape.len() - 2], a_shape[a_shape.len() - 1]);
        let (k2, n) = (b_shape[b_shape.len() - 2], b_shape[b_shape.len() - 1]);
        if k != k2 {
            return Err(mismatch("matmul", format!("inner dims {k} vs {k2} ({a_shape:?} x {b_shape:?})")));
        }
        let batch_shape = broadcast_shapes(&a_shape[..a_shape.len() - 2], &b_shape[..b_shape.len() - 2])
            .ok_or_else(|| mismatch("matmul", format!("batch dims of {a_shape:?} x {b_shape:?}")))?;
        let batch: usize = batch_shape.iter().product();
        let sa = super::backward::batch_offsets(&a_shape[..a_shape.len() - 2], &batch_shape, m * k);
        let sb = super::backward::batch_offsets(&b_shape[..b_shape.len() - 2], &batch_shape, k * n);
        let mut out = vec![T::zero(); batch * m * n];
        for bi in 0..batch {
            gemm_nn(
                m,
                k,
                n,
                &self.data()[sa[bi]..sa[bi] + m * k],
                &other.data()[sb[bi]..sb[bi] + k * n],
                &mut out[bi * m * n..(bi + 1) * m * n],
            );
        }
        let mut out_shape = batch_shape;
        out_shape.extend_from_slice(&[m, n]);
        Tensor::from_op(out_shape, out, Op::Matmul(self.clone(), other.clone()))
    }

    /// Same data, new shape (element count must match). Zero-copy.
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor<T>> {
        if numel(shape) != self.numel() {
            return Err(mismatch("reshape", format!("{:?} -> {:?}", self.shape(), shape)));
        }
        let requires_grad = self.requires_grad();
        let op = requires_grad.then(|| Op::Reshape(self.clone()));
        Ok(Tensor::make(shape.to_vec(), self.data_arc(), op, requires_grad))
    }

    /// Swap the last two axes.
    pub fn transpose_last(&self) -> Result<Tensor<T>> {
        let shape = self.shape();
        if shape.len() < 2 {
            return Err(mismatch("transpose_last", format!("{shape:?}")));
        }
        let (r, c) = (shape[shape.len() - 2], shape[shape.len() - 1]);
        let batch = self.numel() / (r * c);
        let mut out = vec![T::zero(); self.numel()];
        for bi in 0..batch {
            transpose2d(r, c, &self.data()[bi * r * c..(bi + 1) * r * c], &mut out[bi * r * c..(bi + 1) * r * c]);
        }
        let mut out_shape = shape.to_vec();
        let nd = out_shape.len();
        out_shape.swap(nd - 2, nd - 1);
        Tensor::from_op(out_shape, out, Op::TransposeLast(self.clone()))
    }

    /// Swap the first two axes.
    pub fn swap_axes01(&self) -> Result<Tensor<T>> {
        let shape = self.shape();
        if shape.len() < 2 {
            return Err(mismatch("swap_axes01", format!("{shape:?}")));
        }
        let (d0, d1) = (shape[0], shape[1]);
        let block = self.numel() / (d0 * d1);
        let mut out = vec![T::zero(); self.numel()];
        for i in 0..d0 {
            for j in 0..d1 {
                let src = &self.data()[(i * d1 + j) * block..(i * d1 + j + 1) * block];
                out[(j * d0 + i) * block..(j * d0 + i + 1) * block].copy_from_slice(src);
            }
        }
        let mut out_shape = shape.to_vec();
        out_shape.swap(0, 1);
        Tensor::from_op(out_shape, out, Op::SwapAxes01(self.clone()))
    }

    /// Concatenate along `axis`; all other dims must agree.
    pub fn concat(xs: &[Tensor<T>], axis: usize) -> Result<Tensor<T>> {
        let first = xs.first().ok_or_else(|| TensorError::Invalid("concat of zero tensors".into()))?;
        let nd = first.ndim();
        if axis >= nd {
            return Err(mismatch("concat", format!("axis {axis} for ndim {nd}")));
        }
        let mut axis_total = 0usize;
        for x in xs {
            if x.ndim() != nd {
                return Err(mismatch("concat", "rank mismatch".into()));
            }
            for d in 0..nd {
                if d != axis && x.shape()[d] != first.shape()[d] {
                    return Err(mismatch("concat", format!("{:?} vs {:?}", x.shape(), first.shape())));
                }
            }
            axis_total += x.shape()[axis];
        }
        let mut out_shape = first.shape().to_vec();
        out_shape[axis] = axis_total;
        let outer: usize = out_shape[..axis].iter().product();
        let inner: usize = out_shape[axis + 1..].iter().product();
        let mut out = vec![T::zero(); numel(&out_shape)];
        let mut offset = 0usize;
        for x in xs {
            let w = x.shape()[axis];
            for o in 0..outer {
                let src = &x.data()[o * w * inner..(o + 1) * w * inner];
                out[(o * axis_total + offset) * inner..(o * axis_total + offset + w) * inner]
                    .copy_from_slice(src);
            }
            offset += w;
        }
        Tensor::from_op(out_shape, out, Op::Concat(xs.to_vec(), axis))
    }

    /// Contiguous slice `[start, start+len)` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Tensor<T>> {
        let shape = self.shape();
        if axis >= shape.len() || start + len > shape[axis] || len == 0 {
            return Err(mismatch("narrow", format!("axis {axis} [{start}..{}] of {shape:?}", start + len)));
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let w = shape[axis];
        let mut out = vec![T::zero(); outer * len * inner];
        for o in 0..outer {
            let src = &self.data()[(o * w + start) * inner..(o * w + start + len) * inner];
            out[o * len * inner..(o + 1) * len * inner].copy_from_slice(src);
        }
        let mut out_shape = shape.to_vec();
        out_shape[axis] = len;
        Tensor::from_op(out_shape, out, Op::Narrow { x: self.clone(), axis, start })
    }

    /// Tanh-approximation GELU.
    pub fn gelu(&self) -> Result<Tensor<T>> {
        let c0 = T::from_f64(0.797_884_560_802_865_4); // sqrt(2/pi)
        let c1 = T::from_f64(0.044_715);
        let half = T::from_f64(0.5);
        let data = self
            .data()
            .iter()
            .map(|&v| {
                let u = c0 * (v + c1 * v * v * v);
                half * v * (T::one() + u.tanh())
            })
            .collect();
        Tensor::from_op(self.shape().to_vec(), data, Op::Gelu(self.clone()))
    }

    /// Numerically stable softmax over the last axis.
    pub fn softmax_last(&self) -> Result<Tensor<T>> {
        let d = *self
            .shape()
            .last()
            .ok_or_else(|| TensorError::Invalid("softmax on 0-d tensor".into()))?;
        let rows = self.numel() / d;
        let mut out = vec![T::zero(); self.numel()];
        for r in 0..rows {
            let xs = &self.data()[r * d..(r + 1) * d];
            let mx = xs.iter().fold(T::neg_infinity(), |a, &b| if b > a { b } else { a });
            let mut sum = T::zero();
            for (o, &v) in out[r * d..(r + 1) * d].iter_mut().zip(xs.iter()) {
                let e = (v - mx).exp();
                *o = e;
                sum = sum + e;
            }
            let inv = T::one() / sum;
            for o in out[r * d..(r + 1) * d].iter_mut() {
                *o = *o * inv;
            }
        }
        Tensor::from_op(self.shape().to_vec(), out, Op::Softmax(self.clone()))
    }

    /// Per-last-axis normalization to zero mean / unit variance followed by
    /// the affine map `gamma * xhat + beta`.
    pub fn layer_norm(&self, gamma: &Tensor<T>, beta: &Tensor<T>, eps: f64) -> Result<Tensor<T>> {
        let d = *self
            .shape()
            .last()
            .ok_or_else(|| TensorError::Invalid("layer_norm on 0-d tensor".into()))?;
        if gamma.shape() != [d] || beta.shape() != [d] {
            return Err(mismatch(
                "layer_norm",
                format!("gamma {:?} beta {:?} for last dim {d}", gamma.shape(), beta.shape()),
            ));
        }
        let rows = self.numel() / d;
        let inv_d = T::from_f64(1.0 / d as f64);
        let eps = T::from_f64(eps);
        let mut out = vec![T::zero(); self.numel()];
        let mut means = Vec::with_capacity(rows);
        let mut rstds = Vec::with_capacity(rows);
        let g = gamma.data();
        let b = beta.data();
        for r in 0..rows {
            let xs = &self.data()[r * d..(r + 1) * d];
            let mean = xs.iter().fold(T::zero(), |a, &v| a + v) * inv_d;
            let var = xs.iter().fold(T::zero(), |a, &v| a + (v - mean) * (v - mean)) * inv_d;
            let rstd = T::one() / (var + eps).sqrt();
            for j in 0..d {
                out[r * d + j] = (xs[j] - mean) * rstd * g[j] + b[j];
            }
            means.push(mean);
            rstds.push(rstd);
        }
        Tensor::from_op(
            self.shape().to_vec(),
            out,
            Op::LayerNorm {
                x: self.clone(),
                gamma: gamma.clone(),
                beta: beta.clone(),
                mean: means,
                rstd: rstds,
            },
        )
    }

    fn extremum_axis(&self, axis: usize, take_max: bool) -> Result<Tensor<T>> {
        let shape = self.shape();
        if axis >= shape.len() {
            return Err(mismatch("max/min_axis", format!("axis {axis} of {shape:?}")));
        }
        let width = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let outer: usize = shape[..axis].iter().product();
        let mut out = Vec::with_capacity(outer * inner);
        let mut arg = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            for i in 0..inner {
                let mut best = self.data()[o * width * inner + i];
                let mut best_a = 0u32;
                for a in 1..width {
                    let v = self.data()[(o * width + a) * inner + i];
                    // strict comparison keeps the lowest index on ties
                    if (take_max && v > best) || (!take_max && v < best) {
                        best = v;
                        best_a = a as u32;
                    }
                }
                out.push(best);
                arg.push(best_a);
            }
        }
        let mut out_shape = shape.to_vec();
        out_shape.remove(axis);
        let op = if take_max {
            Op::MaxAxis { x: self.clone(), axis, arg }
        } else {
            Op::MinAxis { x: self.clone(), axis, arg }
        };
        Tensor::from_op(out_shape, out, op)
    }

    /// Max over `axis`; gradient flows to the argmax (lowest index on ties).
    pub fn max_axis(&self, axis: usize) -> Result<Tensor<T>> {
        self.extremum_axis(axis, true)
    }

    /// Min over `axis`; gradient flows to the argmin (lowest index on ties).
    pub fn min_axis(&self, axis: usize) -> Result<Tensor<T>> {
        self.extremum_axis(axis, false)
    }

    pub fn sum_axis(&self, axis: usize) -> Result<Tensor<T>> {
        let shape = self.shape();
        if axis >= shape.len() {
            return Err(mismatch("sum_axis", format!("axis {axis} of {shape:?}")));
        }
        let width = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let outer: usize = shape[..axis].iter().product();
        let mut out = vec![T::zero(); outer * inner];
        for o in 0..outer {
            for a in 0..width {
                let src = &self.data()[(o * width + a) * inner..(o * width + a + 1) * inner];
                for (ov, &sv) in out[o * inner..(o + 1) * inner].iter_mut().zip(src.iter()) {
                    *ov = *ov + sv;
                }
            }
        }
        let mut out_shape = shape.to_vec();
        out_shape.remove(axis);
        Tensor::from_op(out_shape, out, Op::SumAxis { x: self.clone(), axis })
    }

    pub fn mean_axis(&self, axis: usize) -> Result<Tensor<T>> {
        let w = self.shape().get(axis).copied().unwrap_or(0).max(1);
        self.sum_axis(axis)?.scale(T::from_f64(1.0 / w as f64))
    }

    /// Sum of all elements as a `[1]` tensor.
    pub fn sum_all(&self) -> Result<Tensor<T>> {
        let s = self.data().iter().fold(T::zero(), |a, &v| a + v);
        Tensor::from_op(vec![1], vec![s], Op::SumAll(self.clone()))
    }

    pub fn mean_all(&self) -> Result<Tensor<T>> {
        self.sum_all()?.scale(T::from_f64(1.0 / self.numel() as f64))
    }

    /// Differentiable Chamfer-L2 of this `[n,3]` tensor against a fixed
    /// target point set. The value is computed by the same f64 kernel the
    /// geometry module uses; the gradient routes through nearest neighbors.
    pub fn chamfer_l2(&self, target: Arc<Vec<[f64; 3]>>) -> Result<Tensor<T>> {
        let shape = self.shape();
        if shape.len() != 2 || shape[1] != 3 || shape[0] == 0 {
            return Err(mismatch("chamfer_l2", format!("pred shape {shape:?}, want [n,3]")));
        }
        if target.is_empty() {
            return Err(TensorError::Invalid("chamfer_l2 against empty target".into()));
        }
        let pred: Vec<[f64; 3]> = self
            .data()
            .chunks_exact(3)
            .map(|c| [c[0].to_f64(), c[1].to_f64(), c[2].to_f64()])
            .collect();
        let (value, nn_ab, nn_ba) = chamfer_l2_raw(&pred, &target);
        Tensor::from_op(
            vec![1],
            vec![T::from_f64(value)],
            Op::ChamferL2 { pred: self.clone(), target, nn_ab, nn_ba },
        )
    }
}

/// Scaled dot-product attention over `[heads, n, head_dim]` tensors:
/// `softmax(q k^T / sqrt(head_dim)) v`, rows of the attention matrix sum to 1.
pub fn softmax_attention<T: Scalar>(q: &Tensor<T>, k: &Tensor<T>, v: &Tensor<T>) -> Result<Tensor<T>> {
    if q.shape() != k.shape() || k.shape() != v.shape() || q.ndim() != 3 {
        return Err(mismatch(
            "softmax_attention",
            format!("{:?} / {:?} / {:?}", q.shape(), k.shape(), v.shape()),
        ));
    }
    let dh = q.shape()[2];
    let scores = q.matmul(&k.transpose_last()?)?.scale(T::from_f64(1.0 / (dh as f64).sqrt()))?;
    scores.softmax_last()?.matmul(v)
}

/// The raw per-head attention weights (exposed for tests of the row-sum
/// invariant).
pub fn attention_weights<T: Scalar>(q: &Tensor<T>, k: &Tensor<T>) -> Result<Tensor<T>> {
    let dh = q.shape()[2];
    let scores = q.matmul(&k.transpose_last()?)?.scale(T::from_f64(1.0 / (dh as f64).sqrt()))?;
    scores.softmax_last()
}
