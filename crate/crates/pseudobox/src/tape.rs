//! Reverse-mode automatic differentiation on a Wengert tape.
//!
//! A [`Tape`] records every operation applied to its [`Value`]s; calling
//! [`Value::backward`] on a scalar sweeps the tape once in reverse and
//! returns a [`GradientStore`] with one gradient tensor per reachable
//! differentiable node. Graphs are built per forward pass and dropped with
//! the tape; nothing persists between passes.
//!
//! Tensors are dense row-major `f64` buffers. Binary ops broadcast over
//! singleton axes of same-rank operands, and a one-element tensor broadcasts
//! against anything. Gradient accumulation follows a fixed sweep order
//! (descending node id), so repeated backward passes over the same graph are
//! bitwise identical.
//!
//! ```
//! use pseudobox::tape::{Tape, Tensor};
//!
//! let tape = Tape::new();
//! let w = tape.param(Tensor::from_vec(vec![1], vec![3.0]));
//! let loss = w.square().sum_all();
//! let grads = loss.backward();
//! assert_eq!(grads.get(&w).unwrap().data()[0], 6.0);
//! ```
//!
//! Numeric edge rules, chosen once and used everywhere:
//! - `log` and `sqrt` clamp their input to at least `1e-12`; below the clamp
//!   the derivative is zero.
//! - `div` clamps the denominator magnitude to at least `1e-12` (sign of
//!   zero treated as positive); inside the clamp the denominator gradient is
//!   zero.
//! - binary `minimum`/`maximum` ties route the gradient to the first
//!   operand; axis reductions route to the first extremal index.
//! - `relu` has zero derivative at exactly zero.
//!
//! Shape mismatches and non-finite results are bugs in calling code, not
//! recoverable conditions, so the kernels panic with the offending shapes or
//! the op name and flat index.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fmt;
use std::rc::Rc;

/// Clamp floor shared by `log`, `sqrt`, and `div` stabilization.
pub const STABILITY_CLAMP: f64 = 1e-12;

// ── Tensor ──────────────────────────────────────────────────────────────────

/// Dense row-major `f64` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Tensor from a shape and matching flat buffer.
    pub fn from_vec(shape: Vec<usize>, data: Vec<f64>) -> Self {
        let numel: usize = shape.iter().product();
        assert!(
            shape.iter().all(|&d| d > 0),
            "tensor axes must be nonzero, got {shape:?}"
        );
        assert_eq!(
            numel,
            data.len(),
            "shape {shape:?} wants {numel} elements, buffer has {}",
            data.len()
        );
        debug_assert!(
            data.iter().all(|x| x.is_finite()),
            "tensor holds non-finite data"
        );
        Tensor { shape, data }
    }

    /// All-zeros tensor.
    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Tensor::from_vec(shape, vec![0.0; numel])
    }

    /// Constant-filled tensor.
    pub fn full(shape: Vec<usize>, v: f64) -> Self {
        let numel = shape.iter().product();
        Tensor::from_vec(shape, vec![v; numel])
    }

    /// One-element tensor of shape `[1]`.
    pub fn scalar(v: f64) -> Self {
        Tensor::from_vec(vec![1], vec![v])
    }

    /// Shape slice.
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Flat element count.
    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Flat read-only buffer.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Flat mutable buffer.
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Element of a rank-2 tensor.
    pub fn get2(&self, i: usize, j: usize) -> f64 {
        assert_eq!(self.shape.len(), 2, "get2 needs rank 2, got {:?}", self.shape);
        self.data[i * self.shape[1] + j]
    }
}

// ── Broadcasting helpers ────────────────────────────────────────────────────

/// Output shape of a broadcast binary op, or `None` if incompatible.
fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    if a == b {
        return Some(a.to_vec());
    }
    let na: usize = a.iter().product();
    let nb: usize = b.iter().product();
    if na == 1 {
        return Some(b.to_vec());
    }
    if nb == 1 {
        return Some(a.to_vec());
    }
    if a.len() != b.len() {
        return None;
    }
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            if x == y {
                Some(x)
            } else if x == 1 {
                Some(y)
            } else if y == 1 {
                Some(x)
            } else {
                None
            }
        })
        .collect()
}

/// Row-major strides of `shape`, with zero stride on axes broadcast up to
/// `out` so the same flat walker serves both operands.
fn broadcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    if shape.iter().product::<usize>() == 1 {
        return vec![0; out.len()];
    }
    let mut strides = vec![0usize; out.len()];
    let mut acc = 1usize;
    for k in (0..shape.len()).rev() {
        strides[k] = if shape[k] == 1 { 0 } else { acc };
        acc *= shape[k];
    }
    strides
}

/// Applies `f` elementwise over the broadcast of two buffers.
fn zip_broadcast(
    a: &Tensor,
    b: &Tensor,
    out_shape: &[usize],
    mut f: impl FnMut(f64, f64) -> f64,
) -> Vec<f64> {
    let numel: usize = out_shape.iter().product();
    let mut out = Vec::with_capacity(numel);
    if a.shape == b.shape {
        for (x, y) in a.data.iter().zip(&b.data) {
            out.push(f(*x, *y));
        }
        return out;
    }
    if b.numel() == 1 {
        let y = b.data[0];
        for &x in &a.data {
            out.push(f(x, y));
        }
        return out;
    }
    if a.numel() == 1 {
        let x = a.data[0];
        for &y in &b.data {
            out.push(f(x, y));
        }
        return out;
    }
    let sa = broadcast_strides(&a.shape, out_shape);
    let sb = broadcast_strides(&b.shape, out_shape);
    let mut idx = vec![0usize; out_shape.len()];
    let (mut ia, mut ib) = (0usize, 0usize);
    for _ in 0..numel {
        out.push(f(a.data[ia], b.data[ib]));
        for k in (0..out_shape.len()).rev() {
            idx[k] += 1;
            ia += sa[k];
            ib += sb[k];
            if idx[k] < out_shape[k] {
                break;
            }
            idx[k] = 0;
            ia -= sa[k] * out_shape[k];
            ib -= sb[k] * out_shape[k];
        }
    }
    out
}

/// Sums `grad` down to `target` shape, undoing broadcast expansion.
fn reduce_grad_to(grad: &Tensor, target: &[usize]) -> Tensor {
    if grad.shape() == target {
        return grad.clone();
    }
    let tn: usize = target.iter().product();
    if tn == 1 {
        return Tensor::from_vec(target.to_vec(), vec![grad.data.iter().sum()]);
    }
    let st = broadcast_strides(target, grad.shape());
    let mut out = Tensor::zeros(target.to_vec());
    let mut idx = vec![0usize; grad.shape.len()];
    let mut it = 0usize;
    for g in &grad.data {
        out.data[it] += g;
        for k in (0..grad.shape.len()).rev() {
            idx[k] += 1;
            it += st[k];
            if idx[k] < grad.shape[k] {
                break;
            }
            idx[k] = 0;
            it -= st[k] * grad.shape[k];
        }
    }
    out
}

// ── Matmul kernels ──────────────────────────────────────────────────────────

/// `C[m,n] = A[m,k] * B[k,n]`.
fn matmul_nn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for (p, &aip) in a[i * k..(i + 1) * k].iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for (cj, bj) in crow.iter_mut().zip(brow) {
                *cj += aip * bj;
            }
        }
    }
    c
}

/// `C[m,k] = A[m,n] * B[k,n]^T` (rows dotted with rows).
fn matmul_nt(a: &[f64], b: &[f64], m: usize, n: usize, k: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * k];
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            c[i * k + p] = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    c
}

/// `C[k,n] = A[m,k]^T * B[m,n]`.
fn matmul_tn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; k * n];
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for (p, &aip) in a[i * k..(i + 1) * k].iter().enumerate() {
            let crow = &mut c[p * n..(p + 1) * n];
            for (cj, bj) in crow.iter_mut().zip(brow) {
                *cj += aip * bj;
            }
        }
    }
    c
}

// ── Ops ─────────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq)]
enum UnaryKind {
    Neg,
    Exp,
    Log,
    Sqrt,
    Sigmoid,
    Relu,
    Square,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum ReduceKind {
    Sum,
    Mean,
    Max,
    Min,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Unary { kind: UnaryKind, src: usize },
    Binary { kind: BinaryKind, lhs: usize, rhs: usize },
    Affine { src: usize, mul: f64 },
    PowScalar { src: usize, exponent: f64 },
    Matmul { lhs: usize, rhs: usize },
    Reduce { kind: ReduceKind, src: usize, axis: Option<usize> },
    GatherRows { src: usize, indices: Vec<usize> },
    ConcatCols { srcs: Vec<usize> },
    SliceCols { src: usize, start: usize, len: usize },
    Reshape { src: usize },
}

fn unary_name(kind: UnaryKind) -> &'static str {
    match kind {
        UnaryKind::Neg => "neg",
        UnaryKind::Exp => "exp",
        UnaryKind::Log => "log",
        UnaryKind::Sqrt => "sqrt",
        UnaryKind::Sigmoid => "sigmoid",
        UnaryKind::Relu => "relu",
        UnaryKind::Square => "square",
    }
}

fn binary_name(kind: BinaryKind) -> &'static str {
    match kind {
        BinaryKind::Add => "add",
        BinaryKind::Sub => "sub",
        BinaryKind::Mul => "mul",
        BinaryKind::Div => "div",
        BinaryKind::Min => "minimum",
        BinaryKind::Max => "maximum",
    }
}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Denominator after the division clamp; zero counts as positive.
fn clamped_den(b: f64) -> f64 {
    if b.abs() >= STABILITY_CLAMP {
        b
    } else if b < 0.0 {
        -STABILITY_CLAMP
    } else {
        STABILITY_CLAMP
    }
}

// ── Tape and nodes ──────────────────────────────────────────────────────────

struct Node {
    tensor: Tensor,
    op: Op,
    requires_grad: bool,
}

struct TapeInner {
    nodes: Vec<Node>,
}

/// Recording tape. Cheap to clone (shared handle); confined to one thread.
#[derive(Clone)]
pub struct Tape {
    inner: Rc<RefCell<TapeInner>>,
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}

impl Tape {
    /// Empty tape.
    pub fn new() -> Self {
        Tape {
            inner: Rc::new(RefCell::new(TapeInner { nodes: Vec::new() })),
        }
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    /// True when no nodes have been recorded.
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Differentiable leaf.
    pub fn param(&self, tensor: Tensor) -> Value {
        self.push(tensor, Op::Leaf, true, "param")
    }

    /// Non-differentiable leaf.
    pub fn constant(&self, tensor: Tensor) -> Value {
        self.push(tensor, Op::Leaf, false, "constant")
    }

    /// Non-differentiable scalar of shape `[1]`.
    pub fn scalar(&self, v: f64) -> Value {
        self.constant(Tensor::scalar(v))
    }

    fn push(&self, tensor: Tensor, op: Op, requires_grad: bool, name: &str) -> Value {
        if let Some(i) = tensor.data.iter().position(|x| !x.is_finite()) {
            panic!("{name} produced non-finite value at flat index {i}");
        }
        let mut inner = self.inner.borrow_mut();
        let id = inner.nodes.len();
        inner.nodes.push(Node { tensor, op, requires_grad });
        Value { tape: self.clone(), id }
    }

    fn same_tape(&self, other: &Tape, op: &str) {
        assert!(
            Rc::ptr_eq(&self.inner, &other.inner),
            "{op}: operands live on different tapes"
        );
    }
}

/// Handle to one tape node.
#[derive(Clone)]
pub struct Value {
    tape: Tape,
    id: usize,
}

impl fmt::Debug for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Value(id={}, shape={:?})", self.id, self.shape())
    }
}

/// Gradients keyed by node id after a backward sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientStore {
    grads: BTreeMap<usize, Tensor>,
}

impl GradientStore {
    /// Gradient of `v`, if `v` was reachable and differentiable.
    pub fn get(&self, v: &Value) -> Option<&Tensor> {
        self.grads.get(&v.id)
    }

    /// Number of stored gradients.
    pub fn len(&self) -> usize {
        self.grads.len()
    }

    /// True when the sweep stored nothing.
    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

impl Value {
    /// Shape of this node's tensor.
    pub fn shape(&self) -> Vec<usize> {
        self.tape.inner.borrow().nodes[self.id].tensor.shape().to_vec()
    }

    /// Copy of this node's tensor.
    pub fn tensor(&self) -> Tensor {
        self.tape.inner.borrow().nodes[self.id].tensor.clone()
    }

    /// Sole element of a one-element tensor.
    pub fn item(&self) -> f64 {
        let inner = self.tape.inner.borrow();
        let t = &inner.nodes[self.id].tensor;
        assert_eq!(t.numel(), 1, "item() on shape {:?}", t.shape());
        t.data[0]
    }

    /// Whether gradients flow into this node.
    pub fn requires_grad(&self) -> bool {
        self.tape.inner.borrow().nodes[self.id].requires_grad
    }

    /// The tape this value lives on.
    pub fn tape(&self) -> Tape {
        self.tape.clone()
    }

    fn unary(&self, kind: UnaryKind) -> Value {
        let (data, shape, rg) = {
            let inner = self.tape.inner.borrow();
            let node = &inner.nodes[self.id];
            let data: Vec<f64> = node
                .tensor
                .data
                .iter()
                .map(|&x| match kind {
                    UnaryKind::Neg => -x,
                    UnaryKind::Exp => x.exp(),
                    UnaryKind::Log => x.max(STABILITY_CLAMP).ln(),
                    UnaryKind::Sqrt => x.max(STABILITY_CLAMP).sqrt(),
                    UnaryKind::Sigmoid => stable_sigmoid(x),
                    UnaryKind::Relu => x.max(0.0),
                    UnaryKind::Square => x * x,
                })
                .collect();
            (data, node.tensor.shape.clone(), node.requires_grad)
        };
        self.tape.push(
            Tensor::from_vec(shape, data),
            Op::Unary { kind, src: self.id },
            rg,
            unary_name(kind),
        )
    }

    fn binary(&self, rhs: &Value, kind: BinaryKind) -> Value {
        self.tape.same_tape(&rhs.tape, binary_name(kind));
        let (out, rg) = {
            let inner = self.tape.inner.borrow();
            let a = &inner.nodes[self.id];
            let b = &inner.nodes[rhs.id];
            let shape = broadcast_shape(a.tensor.shape(), b.tensor.shape()).unwrap_or_else(|| {
                panic!(
                    "{}: incompatible shapes {:?} vs {:?}",
                    binary_name(kind),
                    a.tensor.shape(),
                    b.tensor.shape()
                )
            });
            let data = zip_broadcast(&a.tensor, &b.tensor, &shape, |x, y| match kind {
                BinaryKind::Add => x + y,
                BinaryKind::Sub => x - y,
                BinaryKind::Mul => x * y,
                BinaryKind::Div => x / clamped_den(y),
                BinaryKind::Min => {
                    if x <= y {
                        x
                    } else {
                        y
                    }
                }
                BinaryKind::Max => {
                    if x >= y {
                        x
                    } else {
                        y
                    }
                }
            });
            (
                Tensor::from_vec(shape, data),
                a.requires_grad || b.requires_grad,
            )
        };
        self.tape.push(
            out,
            Op::Binary { kind, lhs: self.id, rhs: rhs.id },
            rg,
            binary_name(kind),
        )
    }

    /// Elementwise negation.
    pub fn neg(&self) -> Value {
        self.unary(UnaryKind::Neg)
    }

    /// Elementwise `e^x`.
    pub fn exp(&self) -> Value {
        self.unary(UnaryKind::Exp)
    }

    /// Elementwise `ln(max(x, 1e-12))`.
    pub fn log(&self) -> Value {
        self.unary(UnaryKind::Log)
    }

    /// Elementwise `sqrt(max(x, 1e-12))`.
    pub fn sqrt(&self) -> Value {
        self.unary(UnaryKind::Sqrt)
    }

    /// Elementwise logistic sigmoid.
    pub fn sigmoid(&self) -> Value {
        self.unary(UnaryKind::Sigmoid)
    }

    /// Elementwise `max(x, 0)`.
    pub fn relu(&self) -> Value {
        self.unary(UnaryKind::Relu)
    }

    /// Elementwise `x^2`.
    pub fn square(&self) -> Value {
        self.unary(UnaryKind::Square)
    }

    /// Elementwise sum with broadcasting.
    pub fn add(&self, rhs: &Value) -> Value {
        self.binary(rhs, BinaryKind::Add)
    }

    /// Elementwise difference with broadcasting.
    pub fn sub(&self, rhs: &Value) -> Value {
        self.binary(rhs, BinaryKind::Sub)
    }

    /// Elementwise product with broadcasting.
    pub fn mul(&self, rhs: &Value) -> Value {
        self.binary(rhs, BinaryKind::Mul)
    }

    /// Elementwise quotient; denominators are clamped away from zero.
    pub fn div(&self, rhs: &Value) -> Value {
        self.binary(rhs, BinaryKind::Div)
    }

    /// Elementwise minimum; ties favor `self`.
    pub fn minimum(&self, rhs: &Value) -> Value {
        self.binary(rhs, BinaryKind::Min)
    }

    /// Elementwise maximum; ties favor `self`.
    pub fn maximum(&self, rhs: &Value) -> Value {
        self.binary(rhs, BinaryKind::Max)
    }

    /// Fused `x * mul + add`.
    pub fn affine(&self, mul: f64, add: f64) -> Value {
        let (out, rg) = {
            let inner = self.tape.inner.borrow();
            let node = &inner.nodes[self.id];
            let data = node.tensor.data.iter().map(|&x| x * mul + add).collect();
            (
                Tensor::from_vec(node.tensor.shape.clone(), data),
                node.requires_grad,
            )
        };
        self.tape
            .push(out, Op::Affine { src: self.id, mul }, rg, "affine")
    }

    /// Scalar multiple.
    pub fn scale(&self, mul: f64) -> Value {
        self.affine(mul, 0.0)
    }

    /// Scalar offset.
    pub fn add_scalar(&self, add: f64) -> Value {
        self.affine(1.0, add)
    }

    /// Elementwise `x^p` for a fixed exponent.
    pub fn powf(&self, exponent: f64) -> Value {
        let (out, rg) = {
            let inner = self.tape.inner.borrow();
            let node = &inner.nodes[self.id];
            let data = node.tensor.data.iter().map(|&x| x.powf(exponent)).collect();
            (
                Tensor::from_vec(node.tensor.shape.clone(), data),
                node.requires_grad,
            )
        };
        self.tape.push(
            out,
            Op::PowScalar { src: self.id, exponent },
            rg,
            "powf",
        )
    }

    /// Clamp into `[lo, hi]` built from `maximum` then `minimum`, so the
    /// gradient passes through exactly on the boundary.
    pub fn clamp(&self, lo: f64, hi: f64) -> Value {
        assert!(lo <= hi, "clamp: lo {lo} > hi {hi}");
        let lo_v = self.tape.scalar(lo);
        let hi_v = self.tape.scalar(hi);
        self.maximum(&lo_v).minimum(&hi_v)
    }

    /// Matrix product of two rank-2 values.
    pub fn matmul(&self, rhs: &Value) -> Value {
        self.tape.same_tape(&rhs.tape, "matmul");
        let (out, rg) = {
            let inner = self.tape.inner.borrow();
            let a = &inner.nodes[self.id].tensor;
            let b = &inner.nodes[rhs.id].tensor;
            assert!(
                a.shape.len() == 2 && b.shape.len() == 2,
                "matmul needs rank 2, got {:?} and {:?}",
                a.shape,
                b.shape
            );
            let (m, k) = (a.shape[0], a.shape[1]);
            let (k2, n) = (b.shape[0], b.shape[1]);
            assert_eq!(
                k, k2,
                "matmul: inner dims differ, {:?} vs {:?}",
                a.shape, b.shape
            );
            let data = matmul_nn(&a.data, &b.data, m, k, n);
            (
                Tensor::from_vec(vec![m, n], data),
                inner.nodes[self.id].requires_grad || inner.nodes[rhs.id].requires_grad,
            )
        };
        self.tape.push(
            out,
            Op::Matmul { lhs: self.id, rhs: rhs.id },
            rg,
            "matmul",
        )
    }

    fn reduce(&self, kind: ReduceKind, axis: Option<usize>) -> Value {
        let (out, rg) = {
            let inner = self.tape.inner.borrow();
            let node = &inner.nodes[self.id];
            let t = &node.tensor;
            let (out_shape, outer, extent, inner_len) = reduce_dims(t.shape(), axis);
            let mut out = Tensor::zeros(out_shape);
            for o in 0..outer {
                for i in 0..inner_len {
                    // Extrema fold from the first element so no sentinel
                    // infinities ever touch a tensor.
                    out.data[o * inner_len + i] = match kind {
                        ReduceKind::Sum | ReduceKind::Mean => 0.0,
                        ReduceKind::Max | ReduceKind::Min => t.data[(o * extent) * inner_len + i],
                    };
                }
                for a in 0..extent {
                    for i in 0..inner_len {
                        let x = t.data[(o * extent + a) * inner_len + i];
                        let slot = &mut out.data[o * inner_len + i];
                        match kind {
                            ReduceKind::Sum | ReduceKind::Mean => *slot += x,
                            ReduceKind::Max => {
                                if x > *slot {
                                    *slot = x;
                                }
                            }
                            ReduceKind::Min => {
                                if x < *slot {
                                    *slot = x;
                                }
                            }
                        }
                    }
                }
            }
            if kind == ReduceKind::Mean {
                for v in &mut out.data {
                    *v /= extent as f64;
                }
            }
            (out, node.requires_grad)
        };
        let name = match kind {
            ReduceKind::Sum => "sum",
            ReduceKind::Mean => "mean",
            ReduceKind::Max => "reduce max",
            ReduceKind::Min => "reduce min",
        };
        self.tape
            .push(out, Op::Reduce { kind, src: self.id, axis }, rg, name)
    }

    /// Sum of all elements, shape `[1]`.
    pub fn sum_all(&self) -> Value {
        self.reduce(ReduceKind::Sum, None)
    }

    /// Mean of all elements, shape `[1]`.
    pub fn mean_all(&self) -> Value {
        self.reduce(ReduceKind::Mean, None)
    }

    /// Sum over one axis; the axis stays with extent 1.
    pub fn sum_axis(&self, axis: usize) -> Value {
        self.reduce(ReduceKind::Sum, Some(axis))
    }

    /// Mean over one axis; the axis stays with extent 1.
    pub fn mean_axis(&self, axis: usize) -> Value {
        self.reduce(ReduceKind::Mean, Some(axis))
    }

    /// Max over one axis; ties route gradient to the first extremal index.
    pub fn max_axis(&self, axis: usize) -> Value {
        self.reduce(ReduceKind::Max, Some(axis))
    }

    /// Min over one axis; ties route gradient to the first extremal index.
    pub fn min_axis(&self, axis: usize) -> Value {
        self.reduce(ReduceKind::Min, Some(axis))
    }

    /// Max of all elements, shape `[1]`.
    pub fn max_all(&self) -> Value {
        self.reduce(ReduceKind::Max, None)
    }

    /// Gradient barrier: same tensor, no parents, no gradient flow.
    pub fn detach(&self) -> Value {
        let t = self.tensor();
        self.tape.push(t, Op::Leaf, false, "detach")
    }

    /// New value whose row `r` is `self`'s row `indices[r]`; rank 2 only.
    /// Repeated indices are allowed and accumulate gradient.
    pub fn gather_rows(&self, indices: &[usize]) -> Value {
        assert!(!indices.is_empty(), "gather_rows: empty index list");
        let (out, rg) = {
            let inner = self.tape.inner.borrow();
            let node = &inner.nodes[self.id];
            let t = &node.tensor;
            assert_eq!(t.shape.len(), 2, "gather_rows needs rank 2, got {:?}", t.shape);
            let (rows, cols) = (t.shape[0], t.shape[1]);
            let mut data = Vec::with_capacity(indices.len() * cols);
            for &r in indices {
                assert!(r < rows, "gather_rows: row {r} out of {rows}");
                data.extend_from_slice(&t.data[r * cols..(r + 1) * cols]);
            }
            (
                Tensor::from_vec(vec![indices.len(), cols], data),
                node.requires_grad,
            )
        };
        self.tape.push(
            out,
            Op::GatherRows { src: self.id, indices: indices.to_vec() },
            rg,
            "gather_rows",
        )
    }

    /// Columns `[start, start+len)` of a rank-2 value.
    pub fn slice_cols(&self, start: usize, len: usize) -> Value {
        let (out, rg) = {
            let inner = self.tape.inner.borrow();
            let node = &inner.nodes[self.id];
            let t = &node.tensor;
            assert_eq!(t.shape.len(), 2, "slice_cols needs rank 2, got {:?}", t.shape);
            let (rows, cols) = (t.shape[0], t.shape[1]);
            assert!(
                start + len <= cols && len > 0,
                "slice_cols: [{start}, {}) out of {cols} columns",
                start + len
            );
            let mut data = Vec::with_capacity(rows * len);
            for r in 0..rows {
                data.extend_from_slice(&t.data[r * cols + start..r * cols + start + len]);
            }
            (Tensor::from_vec(vec![rows, len], data), node.requires_grad)
        };
        self.tape.push(
            out,
            Op::SliceCols { src: self.id, start, len },
            rg,
            "slice_cols",
        )
    }

    /// Same data under a new shape with equal element count.
    pub fn reshape(&self, shape: Vec<usize>) -> Value {
        let (out, rg) = {
            let inner = self.tape.inner.borrow();
            let node = &inner.nodes[self.id];
            assert_eq!(
                shape.iter().product::<usize>(),
                node.tensor.numel(),
                "reshape {:?} -> {:?} changes element count",
                node.tensor.shape,
                shape
            );
            (
                Tensor::from_vec(shape, node.tensor.data.clone()),
                node.requires_grad,
            )
        };
        self.tape
            .push(out, Op::Reshape { src: self.id }, rg, "reshape")
    }

    /// Reverse sweep from a scalar; returns gradients for every reachable
    /// differentiable node. Repeated calls are bitwise identical.
    pub fn backward(&self) -> GradientStore {
        let inner = self.tape.inner.borrow();
        let nodes = &inner.nodes;
        let loss = &nodes[self.id];
        assert_eq!(
            loss.tensor.numel(),
            1,
            "backward needs a scalar loss, got shape {:?}",
            loss.tensor.shape()
        );
        let mut store = GradientStore { grads: BTreeMap::new() };
        if !loss.requires_grad {
            return store;
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.id + 1];
        grads[self.id] = Some(Tensor::full(loss.tensor.shape().to_vec(), 1.0));
        for id in (0..=self.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            accumulate_parents(nodes, id, &g, &mut grads);
            if node.requires_grad {
                store.grads.insert(id, g);
            }
        }
        store
    }
}

/// Output shape and loop bounds of a reduction: `(shape, outer, extent, inner)`.
fn reduce_dims(shape: &[usize], axis: Option<usize>) -> (Vec<usize>, usize, usize, usize) {
    match axis {
        None => {
            let numel: usize = shape.iter().product();
            (vec![1], 1, numel, 1)
        }
        Some(k) => {
            assert!(k < shape.len(), "reduce axis {k} out of rank {}", shape.len());
            let mut out = shape.to_vec();
            out[k] = 1;
            let outer: usize = shape[..k].iter().product();
            let inner: usize = shape[k + 1..].iter().product();
            (out, outer, shape[k], inner)
        }
    }
}

fn add_into(slot: &mut Option<Tensor>, delta: Tensor) {
    match slot {
        None => *slot = Some(delta),
        Some(t) => {
            for (a, b) in t.data.iter_mut().zip(&delta.data) {
                *a += b;
            }
        }
    }
}

/// Pushes `g` through one node into its parents' gradient slots.
fn accumulate_parents(nodes: &[Node], id: usize, g: &Tensor, grads: &mut Vec<Option<Tensor>>) {
    let wants = |pid: usize| nodes[pid].requires_grad;
    match &nodes[id].op {
        Op::Leaf => {}
        Op::Unary { kind, src } => {
            if !wants(*src) {
                return;
            }
            let x = &nodes[*src].tensor;
            let y = &nodes[id].tensor;
            let data: Vec<f64> = match kind {
                UnaryKind::Neg => g.data.iter().map(|gi| -gi).collect(),
                UnaryKind::Exp => g.data.iter().zip(&y.data).map(|(gi, yi)| gi * yi).collect(),
                UnaryKind::Log => g
                    .data
                    .iter()
                    .zip(&x.data)
                    .map(|(gi, &xi)| if xi >= STABILITY_CLAMP { gi / xi } else { 0.0 })
                    .collect(),
                UnaryKind::Sqrt => g
                    .data
                    .iter()
                    .zip(x.data.iter().zip(&y.data))
                    .map(|(gi, (&xi, &yi))| {
                        if xi >= STABILITY_CLAMP {
                            gi / (2.0 * yi)
                        } else {
                            0.0
                        }
                    })
                    .collect(),
                UnaryKind::Sigmoid => g
                    .data
                    .iter()
                    .zip(&y.data)
                    .map(|(gi, &yi)| gi * yi * (1.0 - yi))
                    .collect(),
                UnaryKind::Relu => g
                    .data
                    .iter()
                    .zip(&x.data)
                    .map(|(gi, &xi)| if xi > 0.0 { *gi } else { 0.0 })
                    .collect(),
                UnaryKind::Square => g
                    .data
                    .iter()
                    .zip(&x.data)
                    .map(|(gi, &xi)| gi * 2.0 * xi)
                    .collect(),
            };
            add_into(
                &mut grads[*src],
                Tensor::from_vec(x.shape().to_vec(), data),
            );
        }
        Op::Affine { src, mul } => {
            if !wants(*src) {
                return;
            }
            let data: Vec<f64> = g.data.iter().map(|gi| gi * mul).collect();
            let shape = nodes[*src].tensor.shape().to_vec();
            add_into(&mut grads[*src], Tensor::from_vec(shape, data));
        }
        Op::PowScalar { src, exponent } => {
            if !wants(*src) {
                return;
            }
            let x = &nodes[*src].tensor;
            let data: Vec<f64> = g
                .data
                .iter()
                .zip(&x.data)
                .map(|(gi, &xi)| gi * exponent * xi.powf(exponent - 1.0))
                .collect();
            add_into(
                &mut grads[*src],
                Tensor::from_vec(x.shape().to_vec(), data),
            );
        }
        Op::Binary { kind, lhs, rhs } => {
            let a = &nodes[*lhs].tensor;
            let b = &nodes[*rhs].tensor;
            let out_shape = g.shape().to_vec();
            let mut da = None;
            let mut db = None;
            match kind {
                BinaryKind::Add => {
                    if wants(*lhs) {
                        da = Some(g.clone());
                    }
                    if wants(*rhs) {
                        db = Some(g.clone());
                    }
                }
                BinaryKind::Sub => {
                    if wants(*lhs) {
                        da = Some(g.clone());
                    }
                    if wants(*rhs) {
                        db = Some(Tensor::from_vec(
                            out_shape.clone(),
                            g.data.iter().map(|x| -x).collect(),
                        ));
                    }
                }
                BinaryKind::Mul => {
                    if wants(*lhs) {
                        let d = zip_broadcast(b, g, &out_shape, |bi, gi| bi * gi);
                        da = Some(Tensor::from_vec(out_shape.clone(), d));
                    }
                    if wants(*rhs) {
                        let d = zip_broadcast(a, g, &out_shape, |ai, gi| ai * gi);
                        db = Some(Tensor::from_vec(out_shape.clone(), d));
                    }
                }
                BinaryKind::Div => {
                    if wants(*lhs) {
                        let d = zip_broadcast(b, g, &out_shape, |bi, gi| gi / clamped_den(bi));
                        da = Some(Tensor::from_vec(out_shape.clone(), d));
                    }
                    if wants(*rhs) {
                        // d/db (a / clamp(b)) is zero inside the clamp band.
                        let quota = zip_broadcast(a, b, &out_shape, |ai, bi| {
                            if bi.abs() >= STABILITY_CLAMP {
                                -ai / (bi * bi)
                            } else {
                                0.0
                            }
                        });
                        let d: Vec<f64> = quota.iter().zip(&g.data).map(|(q, gi)| q * gi).collect();
                        db = Some(Tensor::from_vec(out_shape.clone(), d));
                    }
                }
                BinaryKind::Min | BinaryKind::Max => {
                    let pick_a = zip_broadcast(a, b, &out_shape, |ai, bi| {
                        let first = match kind {
                            BinaryKind::Min => ai <= bi,
                            _ => ai >= bi,
                        };
                        if first {
                            1.0
                        } else {
                            0.0
                        }
                    });
                    if wants(*lhs) {
                        let d: Vec<f64> =
                            pick_a.iter().zip(&g.data).map(|(p, gi)| p * gi).collect();
                        da = Some(Tensor::from_vec(out_shape.clone(), d));
                    }
                    if wants(*rhs) {
                        let d: Vec<f64> = pick_a
                            .iter()
                            .zip(&g.data)
                            .map(|(p, gi)| (1.0 - p) * gi)
                            .collect();
                        db = Some(Tensor::from_vec(out_shape.clone(), d));
                    }
                }
            }
            if let Some(d) = da {
                add_into(&mut grads[*lhs], reduce_grad_to(&d, a.shape()));
            }
            if let Some(d) = db {
                add_into(&mut grads[*rhs], reduce_grad_to(&d, b.shape()));
            }
        }
        Op::Matmul { lhs, rhs } => {
            let a = &nodes[*lhs].tensor;
            let b = &nodes[*rhs].tensor;
            let (m, k) = (a.shape[0], a.shape[1]);
            let n = b.shape[1];
            if wants(*lhs) {
                let d = matmul_nt(&g.data, &b.data, m, n, k);
                add_into(&mut grads[*lhs], Tensor::from_vec(vec![m, k], d));
            }
            if wants(*rhs) {
                let d = matmul_tn(&a.data, &g.data, m, k, n);
                add_into(&mut grads[*rhs], Tensor::from_vec(vec![k, n], d));
            }
        }
        Op::Reduce { kind, src, axis } => {
            if !wants(*src) {
                return;
            }
            let x = &nodes[*src].tensor;
            let (_, outer, extent, inner_len) = reduce_dims(x.shape(), *axis);
            let mut d = Tensor::zeros(x.shape().to_vec());
            match kind {
                ReduceKind::Sum | ReduceKind::Mean => {
                    let scale = if *kind == ReduceKind::Mean {
                        1.0 / extent as f64
                    } else {
                        1.0
                    };
                    for o in 0..outer {
                        for a in 0..extent {
                            for i in 0..inner_len {
                                d.data[(o * extent + a) * inner_len + i] =
                                    g.data[o * inner_len + i] * scale;
                            }
                        }
                    }
                }
                ReduceKind::Max | ReduceKind::Min => {
                    // Recompute the first extremal index per output slot with
                    // the same scan order as the forward pass.
                    for o in 0..outer {
                        for i in 0..inner_len {
                            let mut best_a = 0usize;
                            let mut best = x.data[(o * extent) * inner_len + i];
                            for a in 1..extent {
                                let v = x.data[(o * extent + a) * inner_len + i];
                                let better = match kind {
                                    ReduceKind::Max => v > best,
                                    _ => v < best,
                                };
                                if better {
                                    best = v;
                                    best_a = a;
                                }
                            }
                            d.data[(o * extent + best_a) * inner_len + i] =
                                g.data[o * inner_len + i];
                        }
                    }
                }
            }
            add_into(&mut grads[*src], d);
        }
        Op::GatherRows { src, indices } => {
            if !wants(*src) {
                return;
            }
            let x = &nodes[*src].tensor;
            let cols = x.shape[1];
            let mut d = Tensor::zeros(x.shape().to_vec());
            for (r, &sr) in indices.iter().enumerate() {
                for c in 0..cols {
                    d.data[sr * cols + c] += g.data[r * cols + c];
                }
            }
            add_into(&mut grads[*src], d);
        }
        Op::ConcatCols { srcs } => {
            let total_cols = nodes[id].tensor.shape[1];
            let rows = nodes[id].tensor.shape[0];
            let mut start = 0usize;
            for &sid in srcs {
                let cols = nodes[sid].tensor.shape[1];
                if wants(sid) {
                    let mut d = Tensor::zeros(nodes[sid].tensor.shape().to_vec());
                    for r in 0..rows {
                        for c in 0..cols {
                            d.data[r * cols + c] = g.data[r * total_cols + start + c];
                        }
                    }
                    add_into(&mut grads[sid], d);
                }
                start += cols;
            }
        }
        Op::SliceCols { src, start, len } => {
            if !wants(*src) {
                return;
            }
            let x = &nodes[*src].tensor;
            let (rows, cols) = (x.shape[0], x.shape[1]);
            let mut d = Tensor::zeros(x.shape().to_vec());
            for r in 0..rows {
                for c in 0..*len {
                    d.data[r * cols + start + c] = g.data[r * len + c];
                }
            }
            add_into(&mut grads[*src], d);
        }
        Op::Reshape { src } => {
            if !wants(*src) {
                return;
            }
            let shape = nodes[*src].tensor.shape().to_vec();
            add_into(
                &mut grads[*src],
                Tensor::from_vec(shape, g.data.clone()),
            );
        }
    }
}

/// Horizontal concatenation of rank-2 values with equal row counts.
pub fn concat_cols(parts: &[&Value]) -> Value {
    assert!(!parts.is_empty(), "concat_cols: empty part list");
    let tape = parts[0].tape.clone();
    for p in parts {
        tape.same_tape(&p.tape, "concat_cols");
    }
    let (out, rg) = {
        let inner = tape.inner.borrow();
        let rows = inner.nodes[parts[0].id].tensor.shape[0];
        let mut cols = 0usize;
        let mut rg = false;
        for p in parts {
            let t = &inner.nodes[p.id].tensor;
            assert_eq!(t.shape.len(), 2, "concat_cols needs rank 2, got {:?}", t.shape);
            assert_eq!(
                t.shape[0], rows,
                "concat_cols: row counts differ, {} vs {}",
                t.shape[0], rows
            );
            cols += t.shape[1];
            rg |= inner.nodes[p.id].requires_grad;
        }
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                let t = &inner.nodes[p.id].tensor;
                let c = t.shape[1];
                data.extend_from_slice(&t.data[r * c..(r + 1) * c]);
            }
        }
        (Tensor::from_vec(vec![rows, cols], data), rg)
    };
    tape.push(
        out,
        Op::ConcatCols { srcs: parts.iter().map(|p| p.id).collect() },
        rg,
        "concat_cols",
    )
}

impl std::ops::Add<&Value> for &Value {
    type Output = Value;
    fn add(self, rhs: &Value) -> Value {
        Value::add(self, rhs)
    }
}

impl std::ops::Sub<&Value> for &Value {
    type Output = Value;
    fn sub(self, rhs: &Value) -> Value {
        Value::sub(self, rhs)
    }
}

impl std::ops::Mul<&Value> for &Value {
    type Output = Value;
    fn mul(self, rhs: &Value) -> Value {
        Value::mul(self, rhs)
    }
}

impl std::ops::Div<&Value> for &Value {
    type Output = Value;
    fn div(self, rhs: &Value) -> Value {
        Value::div(self, rhs)
    }
}

impl std::ops::Neg for &Value {
    type Output = Value;
    fn neg(self) -> Value {
        Value::neg(self)
    }
}

// ── Finite-difference checking ──────────────────────────────────────────────

/// Outcome of [`grad_check`]: the worst relative error and where it occurred.
#[derive(Debug, Clone, Copy)]
pub struct GradCheckReport {
    /// Largest relative error across all parameter coordinates.
    pub max_rel_err: f64,
    /// Index into the parameter list of the worst coordinate.
    pub worst_param: usize,
    /// Flat coordinate within that parameter.
    pub worst_coord: usize,
    /// Analytic gradient at the worst coordinate.
    pub worst_analytic: f64,
    /// Central-difference gradient at the worst coordinate.
    pub worst_numeric: f64,
}

/// Compares analytic gradients of `f` against central finite differences.
///
/// `f` is re-evaluated on a fresh tape per probe, so it must be a pure
/// function of its inputs. Every coordinate of every parameter is perturbed
/// by `±h`; the relative error uses `max(|analytic|, |numeric|, 1e-8)` as
/// denominator. Inputs sitting within `h` of a tie or clamp boundary will
/// legitimately disagree; callers choose probe points away from those.
pub fn grad_check<F>(f: F, params: &[Tensor], h: f64) -> GradCheckReport
where
    F: Fn(&Tape, &[Value]) -> Value,
{
    assert!(h > 0.0, "grad_check needs h > 0");
    let eval = |tensors: &[Tensor]| -> f64 {
        let tape = Tape::new();
        let vals: Vec<Value> = tensors.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&tape, &vals);
        out.item()
    };
    let analytic: Vec<Tensor> = {
        let tape = Tape::new();
        let vals: Vec<Value> = params.iter().map(|t| tape.param(t.clone())).collect();
        let loss = f(&tape, &vals);
        assert_eq!(loss.shape().iter().product::<usize>(), 1, "grad_check loss must be scalar");
        let store = loss.backward();
        vals.iter()
            .zip(params)
            .map(|(v, t)| {
                store
                    .get(v)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(t.shape().to_vec()))
            })
            .collect()
    };
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_param: 0,
        worst_coord: 0,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
    };
    let mut probe: Vec<Tensor> = params.to_vec();
    for (pi, base) in params.iter().enumerate() {
        for ci in 0..base.numel() {
            let orig = base.data()[ci];
            probe[pi].data_mut()[ci] = orig + h;
            let up = eval(&probe);
            probe[pi].data_mut()[ci] = orig - h;
            let down = eval(&probe);
            probe[pi].data_mut()[ci] = orig;
            let numeric = (up - down) / (2.0 * h);
            let exact = analytic[pi].data()[ci];
            let rel = (exact - numeric).abs() / exact.abs().max(numeric.abs()).max(1e-8);
            if rel > report.max_rel_err {
                report = GradCheckReport {
                    max_rel_err: rel,
                    worst_param: pi,
                    worst_coord: ci,
                    worst_analytic: exact,
                    worst_numeric: numeric,
                };
            }
        }
    }
    report
}

// ── Tests ───────────────────────────────────────────────────────────────────
