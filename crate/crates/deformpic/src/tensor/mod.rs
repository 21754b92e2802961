//! Dense tensors with reverse-mode automatic differentiation.
//!
//! The engine is define-by-run: every op builds a fresh node holding its
//! inputs and whatever the backward pass needs, so the tape is exactly the
//! Rc graph hanging off the loss scalar and is rebuilt each forward pass.
//! Training runs in f32; gradient-check tests instantiate the same code at
//! f64 through the [`Scalar`] parameter.
//!
//! Tensors are immutable after creation (gradients accumulate in a cell).
//! Graph construction and backward are single-threaded per sample; the
//! underlying buffers are `Arc`-shared so parameters can be read from many
//! sample threads at once.

mod backward;
pub mod gradcheck;
pub mod kernels;
mod ops;

pub use ops::{attention_weights, softmax_attention};

use std::cell::{Cell, RefCell};
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use thiserror::Error;

/// Element type of the engine: f32 for training, f64 for gradient checks.
pub trait Scalar: num_traits::Float + std::fmt::Debug + Send + Sync + 'static {
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
}

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {details}")]
    ShapeMismatch { op: &'static str, details: String },
    #[error("non-finite values produced by op `{op}`")]
    NonFinite { op: &'static str },
    #[error("backward root must be a scalar, got shape {shape:?}")]
    NonScalarRoot { shape: Vec<usize> },
    #[error("backward already ran on this graph")]
    BackwardConsumed,
    #[error("invalid tensor argument: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, TensorError>;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

/// Op record stored on a node; holds the parents and saved values.
pub(crate) enum Op<T: Scalar> {
    Add(Tensor<T>, Tensor<T>),
    Sub(Tensor<T>, Tensor<T>),
    Mul(Tensor<T>, Tensor<T>),
    Scale(Tensor<T>, T),
    AddScalar(Tensor<T>),
    Matmul(Tensor<T>, Tensor<T>),
    Reshape(Tensor<T>),
    TransposeLast(Tensor<T>),
    SwapAxes01(Tensor<T>),
    Concat(Vec<Tensor<T>>, usize),
    Narrow {
        x: Tensor<T>,
        axis: usize,
        start: usize,
    },
    Gelu(Tensor<T>),
    Softmax(Tensor<T>),
    LayerNorm {
        x: Tensor<T>,
        gamma: Tensor<T>,
        beta: Tensor<T>,
        mean: Vec<T>,
        rstd: Vec<T>,
    },
    MaxAxis {
        x: Tensor<T>,
        axis: usize,
        arg: Vec<u32>,
    },
    MinAxis {
        x: Tensor<T>,
        axis: usize,
        arg: Vec<u32>,
    },
    SumAxis {
        x: Tensor<T>,
        axis: usize,
    },
    SumAll(Tensor<T>),
    ChamferL2 {
        pred: Tensor<T>,
        target: Arc<Vec<[f64; 3]>>,
        nn_ab: Vec<u32>,
        nn_ba: Vec<u32>,
    },
}

impl<T: Scalar> Op<T> {
    pub(crate) fn name(&self) -> &'static str {
        match self {
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::Matmul(..) => "matmul",
            Op::Reshape(..) => "reshape",
            Op::TransposeLast(..) => "transpose_last",
            Op::SwapAxes01(..) => "swap_axes01",
            Op::Concat(..) => "concat",
            Op::Narrow { .. } => "narrow",
            Op::Gelu(..) => "gelu",
            Op::Softmax(..) => "softmax",
            Op::LayerNorm { .. } => "layer_norm",
            Op::MaxAxis { .. } => "max_axis",
            Op::MinAxis { .. } => "min_axis",
            Op::SumAxis { .. } => "sum_axis",
            Op::SumAll(..) => "sum_all",
            Op::ChamferL2 { .. } => "chamfer_l2",
        }
    }

    fn parents(&self) -> Vec<&Tensor<T>> {
        match self {
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Matmul(a, b) => vec![a, b],
            Op::Scale(x, _)
            | Op::AddScalar(x)
            | Op::Reshape(x)
            | Op::TransposeLast(x)
            | Op::SwapAxes01(x)
            | Op::Gelu(x)
            | Op::Softmax(x)
            | Op::SumAll(x) => vec![x],
            Op::Concat(xs, _) => xs.iter().collect(),
            Op::Narrow { x, .. }
            | Op::MaxAxis { x, .. }
            | Op::MinAxis { x, .. }
            | Op::SumAxis { x, .. } => vec![x],
            Op::LayerNorm { x, gamma, beta, .. } => vec![x, gamma, beta],
            Op::ChamferL2 { pred, .. } => vec![pred],
        }
    }
}

pub(crate) struct Node<T: Scalar> {
    id: u64,
    shape: Vec<usize>,
    data: Arc<Vec<T>>,
    requires_grad: bool,
    grad: RefCell<Option<Vec<T>>>,
    op: Option<Op<T>>,
    backward_done: Cell<bool>,
}

/// Handle to an immutable tensor node in the autodiff graph.
#[derive(Clone)]
pub struct Tensor<T: Scalar> {
    node: Rc<Node<T>>,
}

impl<T: Scalar> std::fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Tensor(shape={:?}, grad={})", self.shape(), self.requires_grad())
    }
}

fn check_finite<T: Scalar>(op: &'static str, data: &[T]) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(TensorError::NonFinite { op })
    }
}

impl<T: Scalar> Tensor<T> {
    pub(crate) fn make(
        shape: Vec<usize>,
        data: Arc<Vec<T>>,
        op: Option<Op<T>>,
        requires_grad: bool,
    ) -> Self {
        debug_assert_eq!(kernels::numel(&shape), data.len());
        Tensor {
            node: Rc::new(Node {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data,
                requires_grad,
                grad: RefCell::new(None),
                op,
                backward_done: Cell::new(false),
            }),
        }
    }

    pub(crate) fn from_op(shape: Vec<usize>, data: Vec<T>, op: Op<T>) -> Result<Self> {
        check_finite(op.name(), &data)?;
        let requires_grad = op.parents().iter().any(|p| p.requires_grad());
        let op = if requires_grad { Some(op) } else { None };
        Ok(Tensor::make(shape, Arc::new(data), op, requires_grad))
    }

    /// New leaf from owned data; rejects shape/length mismatch and non-finite values.
    pub fn from_vec(shape: &[usize], data: Vec<T>, requires_grad: bool) -> Result<Self> {
        if kernels::numel(shape) != data.len() {
            return Err(TensorError::ShapeMismatch {
                op: "from_vec",
                details: format!("shape {:?} wants {} values, got {}", shape, kernels::numel(shape), data.len()),
            });
        }
        check_finite("from_vec", &data)?;
        Ok(Tensor::make(shape.to_vec(), Arc::new(data), None, requires_grad))
    }

    /// Leaf sharing an existing buffer without copying (parameters).
    /// The buffer is trusted to be finite; the optimizer checks gradients.
    pub fn from_shared(shape: &[usize], data: Arc<Vec<T>>, requires_grad: bool) -> Result<Self> {
        if kernels::numel(shape) != data.len() {
            return Err(TensorError::ShapeMismatch {
                op: "from_shared",
                details: format!("shape {:?} wants {} values, got {}", shape, kernels::numel(shape), data.len()),
            });
        }
        Ok(Tensor::make(shape.to_vec(), data, None, requires_grad))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor::make(shape.to_vec(), Arc::new(vec![T::zero(); kernels::numel(shape)]), None, false)
    }

    pub fn scalar(v: T) -> Self {
        Tensor::make(vec![1], Arc::new(vec![v]), None, false)
    }

    pub fn shape(&self) -> &[usize] {
        &self.node.shape
    }

    pub fn ndim(&self) -> usize {
        self.node.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.node.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.node.data
    }

    pub fn data_arc(&self) -> Arc<Vec<T>> {
        Arc::clone(&self.node.data)
    }

    pub fn requires_grad(&self) -> bool {
        self.node.requires_grad
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> T {
        assert_eq!(self.numel(), 1, "item() on non-scalar tensor");
        self.node.data[0]
    }

    /// Copy of the accumulated gradient, if backward has reached this node.
    pub fn grad(&self) -> Option<Vec<T>> {
        self.node.grad.borrow().clone()
    }

    pub(crate) fn id(&self) -> u64 {
        self.node.id
    }

    pub(crate) fn op(&self) -> Option<&Op<T>> {
        self.node.op.as_ref()
    }

    pub(crate) fn add_grad(&self, g: &[T]) {
        debug_assert_eq!(g.len(), self.numel());
        let mut slot = self.node.grad.borrow_mut();
        match slot.as_mut() {
            Some(acc) => {
                for (a, &v) in acc.iter_mut().zip(g.iter()) {
                    *a = *a + v;
                }
            }
            None => *slot = Some(g.to_vec()),
        }
    }

    /// Reverse-mode pass from a scalar root. Every reachable tensor with
    /// `requires_grad` receives its gradient; fan-out accumulates additively.
    /// A graph can only be walked once.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(TensorError::NonScalarRoot { shape: self.shape().to_vec() });
        }
        if self.node.backward_done.get() {
            return Err(TensorError::BackwardConsumed);
        }
        self.node.backward_done.set(true);

        let order = self.topo_order();
        self.add_grad(&[T::one()]);
        for t in order.iter() {
            // Ids increase with creation order, so descending id order is a
            // valid reverse-topological order for a define-by-run graph.
            let grad = t.node.grad.borrow().clone();
            let Some(grad) = grad else { continue };
            if let Some(op) = t.op() {
                backward::apply(op, t, &grad);
            }
        }
        Ok(())
    }

    /// Reachable op nodes sorted by descending creation id (reverse topo).
    fn topo_order(&self) -> Vec<Tensor<T>> {
        let mut seen = std::collections::HashSet::new();
        let mut out: Vec<Tensor<T>> = Vec::new();
        let mut stack = vec![self.clone()];
        while let Some(t) = stack.pop() {
            if !seen.insert(t.id()) {
                continue;
            }
            if let Some(op) = t.op() {
                for p in op.parents() {
                    if p.requires_grad() {
                        stack.push(p.clone());
                    }
                }
            }
            out.push(t);
        }
        out.sort_by(|a, b| b.id().cmp(&a.id()));
        out
    }

    /// Op-kind/shape trace of the graph below this tensor, in topological
    /// order. Two forwards with identical structure produce identical traces.
    pub fn trace(&self) -> Vec<String> {
        let mut order = self.topo_order();
        order.reverse();
        order
            .iter()
            .filter_map(|t| t.op().map(|op| format!("{} -> {:?}", op.name(), t.shape())))
            .collect()
    }
}
