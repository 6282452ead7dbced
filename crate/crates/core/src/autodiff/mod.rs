//! Tape-based reverse-mode automatic differentiation over dense
//! tensors.
//!
//! A [`Tape`] records every forward operation into an append-only
//! arena; record order is therefore already a topological order, and
//! [`Tape::backward`] walks it once in reverse, accumulating gradients
//! by the chain rule. Tensors are plain values (shape + shared data
//! buffer); a tensor produced by a tape op additionally carries the id
//! of its node on that tape.
//!
//! The op set is exactly what fully-connected encoder/decoder stacks
//! and their training objectives need: matrix product, bias broadcast,
//! elementwise arithmetic, the LReLU/Tanh/Sigmoid/exp/log
//! nonlinearities, reductions, squared-L2 reconstruction cost, column
//! slicing and an inverse-multiquadric MMD term. No convolution, no
//! higher-order derivatives.
//!
//! A tape and its tensors form one single-threaded unit; independent
//! tapes may run concurrently.

mod kernel;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::real::Real;

pub(crate) use kernel::{matmul_into, matmul_shape};

static TAPE_IDS: AtomicU64 = AtomicU64::new(1);

/// Dense real-valued tensor. Cheap to clone (data is shared).
///
/// `node` is `Some` when the tensor is attached to the tape that
/// produced it; [`Tensor::detach`] clears it, turning the value into a
/// constant for any later graph.
#[derive(Clone, Debug)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Arc<Vec<T>>,
    node: Option<NodeRef>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct NodeRef {
    tape: u64,
    index: usize,
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<T: Real> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if numel(&shape) != data.len() || shape.iter().any(|&d| d == 0) {
            return Err(Error::ShapeMismatch {
                op: "tensor_new",
                lhs: shape,
                rhs: vec![data.len()],
            });
        }
        Ok(Tensor {
            shape,
            data: Arc::new(data),
            node: None,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = numel(&shape);
        Tensor {
            shape,
            data: Arc::new(vec![T::ZERO; n]),
            node: None,
        }
    }

    pub fn scalar(v: T) -> Self {
        Tensor {
            shape: vec![1],
            data: Arc::new(vec![v]),
            node: None,
        }
    }

    /// 2-D tensor from row-major data.
    pub fn matrix(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    /// Mutable access to the underlying buffer (copy-on-write if the
    /// buffer is shared, e.g. still referenced by a live tape).
    pub fn data_mut(&mut self) -> &mut [T] {
        self.node = None;
        Arc::make_mut(&mut self.data).as_mut_slice()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Rows when 2-D, otherwise 1 (a vector is treated as one row).
    pub fn rows(&self) -> usize {
        if self.shape.len() == 2 {
            self.shape[0]
        } else {
            1
        }
    }

    pub fn cols(&self) -> usize {
        match self.shape.len() {
            2 => self.shape[1],
            1 => self.shape[0],
            _ => self.data.len(),
        }
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// Value of a scalar tensor.
    pub fn item(&self) -> T {
        debug_assert!(self.is_scalar());
        self.data[0]
    }

    /// Same value, no tape attachment.
    pub fn detach(&self) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: Arc::clone(&self.data),
            node: None,
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: Arc::new(self.data.iter().map(|&v| f(v)).collect()),
            node: None,
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// One recorded operation; indices refer to earlier tape nodes.
#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    Matmul { a: usize, b: usize },
    AddBias { a: usize, bias: usize },
    Add { a: usize, b: usize },
    Sub { a: usize, b: usize },
    Mul { a: usize, b: usize },
    Affine { a: usize, mul: T },
    Sum { a: usize },
    Mean { a: usize },
    LRelu { a: usize, slope: T },
    Tanh { a: usize },
    Sigmoid { a: usize },
    Exp { a: usize },
    LogEps { a: usize, eps: T },
    SqL2 { a: usize, b: usize },
    SliceCols { a: usize, start: usize, end: usize },
    MmdImq { a: usize, b: usize, c: T },
}

struct Node<T> {
    value: Arc<Vec<T>>,
    shape: Vec<usize>,
    op: Op<T>,
}

/// Recording tape. Forward ops append nodes; [`Tape::backward`] fills
/// per-node gradients which stay readable until the next backward call.
pub struct Tape<T> {
    id: u64,
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape {
            id: TAPE_IDS.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers a tensor as a leaf of this tape and returns the
    /// attached handle. Gradients accumulate into every leaf reachable
    /// from the backward root.
    pub fn leaf(&mut self, t: &Tensor<T>) -> Tensor<T> {
        self.push(t.shape.clone(), Arc::clone(&t.data), Op::Leaf)
    }

    fn push(&mut self, shape: Vec<usize>, value: Arc<Vec<T>>, op: Op<T>) -> Tensor<T> {
        let index = self.nodes.len();
        self.nodes.push(Node {
            value: Arc::clone(&value),
            shape: shape.clone(),
            op,
        });
        Tensor {
            shape,
            data: value,
            node: Some(NodeRef {
                tape: self.id,
                index,
            }),
        }
    }

    fn node_of(&self, t: &Tensor<T>, op: &'static str) -> Result<usize> {
        match t.node {
            Some(r) if r.tape == self.id => Ok(r.index),
            Some(_) => Err(Error::Tape(format!(
                "{op}: tensor belongs to a different tape"
            ))),
            None => Err(Error::Tape(format!(
                "{op}: tensor is detached; register it with Tape::leaf first"
            ))),
        }
    }

    // ---- forward operations -------------------------------------------------

    /// Matrix product of `a[m,k]` and `b[k,n]`.
    pub fn matmul(&mut self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        let (m, n) = matmul_shape(&a.shape, &b.shape)?;
        let ia = self.node_of(a, "matmul")?;
        let ib = self.node_of(b, "matmul")?;
        let mut out = vec![T::ZERO; m * n];
        matmul_into(&a.data, &a.shape, &b.data, &b.shape, &mut out);
        Ok(self.push(vec![m, n], Arc::new(out), Op::Matmul { a: ia, b: ib }))
    }

    /// Broadcast-adds a bias row to every row of `a[m,n]`.
    pub fn add_bias(&mut self, a: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
        let n = a.cols();
        if bias.len() != n || bias.shape.len() > 2 || (bias.shape.len() == 2 && bias.shape[0] != 1)
        {
            return Err(Error::ShapeMismatch {
                op: "add_bias",
                lhs: a.shape.clone(),
                rhs: bias.shape.clone(),
            });
        }
        let ia = self.node_of(a, "add_bias")?;
        let ib = self.node_of(bias, "add_bias")?;
        let mut out = Vec::with_capacity(a.len());
        for row in a.data.chunks_exact(n) {
            out.extend(row.iter().zip(bias.data.iter()).map(|(&x, &b)| x + b));
        }
        Ok(self.push(a.shape.clone(), Arc::new(out), Op::AddBias { a: ia, bias: ib }))
    }

    fn binary_elementwise(
        &mut self,
        a: &Tensor<T>,
        b: &Tensor<T>,
        op_name: &'static str,
        f: impl Fn(T, T) -> T,
        make_op: impl Fn(usize, usize) -> Op<T>,
    ) -> Result<Tensor<T>> {
        if a.shape != b.shape {
            return Err(Error::ShapeMismatch {
                op: op_name,
                lhs: a.shape.clone(),
                rhs: b.shape.clone(),
            });
        }
        let ia = self.node_of(a, op_name)?;
        let ib = self.node_of(b, op_name)?;
        let out: Vec<T> = a
            .data
            .iter()
            .zip(b.data.iter())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Ok(self.push(a.shape.clone(), Arc::new(out), make_op(ia, ib)))
    }

    pub fn add(&mut self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary_elementwise(a, b, "add", |x, y| x + y, |a, b| Op::Add { a, b })
    }

    pub fn sub(&mut self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary_elementwise(a, b, "sub", |x, y| x - y, |a, b| Op::Sub { a, b })
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary_elementwise(a, b, "mul", |x, y| x * y, |a, b| Op::Mul { a, b })
    }

    /// Elementwise `a * mul + add`.
    pub fn affine(&mut self, a: &Tensor<T>, mul: T, add: T) -> Result<Tensor<T>> {
        let ia = self.node_of(a, "affine")?;
        let out: Vec<T> = a.data.iter().map(|&x| x * mul + add).collect();
        Ok(self.push(a.shape.clone(), Arc::new(out), Op::Affine { a: ia, mul }))
    }

    pub fn scale(&mut self, a: &Tensor<T>, factor: T) -> Result<Tensor<T>> {
        self.affine(a, factor, T::ZERO)
    }

    /// Sum of all elements (scalar).
    pub fn sum(&mut self, a: &Tensor<T>) -> Result<Tensor<T>> {
        let ia = self.node_of(a, "sum")?;
        let s: T = a.data.iter().copied().sum();
        Ok(self.push(vec![1], Arc::new(vec![s]), Op::Sum { a: ia }))
    }

    /// Mean of all elements (scalar).
    pub fn mean(&mut self, a: &Tensor<T>) -> Result<Tensor<T>> {
        let ia = self.node_of(a, "mean")?;
        let s: T = a.data.iter().copied().sum();
        let m = s / T::from_f64(a.len() as f64);
        Ok(self.push(vec![1], Arc::new(vec![m]), Op::Mean { a: ia }))
    }

    /// Leaky ReLU. `slope` must lie in (0,1); the subgradient at 0 is 1.
    pub fn lrelu(&mut self, a: &Tensor<T>, slope: T) -> Result<Tensor<T>> {
        assert!(
            slope > T::ZERO && slope < T::ONE,
            "lrelu slope must lie in (0,1)"
        );
        let ia = self.node_of(a, "lrelu")?;
        let out: Vec<T> = a
            .data
            .iter()
            .map(|&x| if x >= T::ZERO { x } else { x * slope })
            .collect();
        Ok(self.push(a.shape.clone(), Arc::new(out), Op::LRelu { a: ia, slope }))
    }

    pub fn tanh(&mut self, a: &Tensor<T>) -> Result<Tensor<T>> {
        let ia = self.node_of(a, "tanh")?;
        let out: Vec<T> = a.data.iter().map(|&x| x.tanh()).collect();
        Ok(self.push(a.shape.clone(), Arc::new(out), Op::Tanh { a: ia }))
    }

    pub fn sigmoid(&mut self, a: &Tensor<T>) -> Result<Tensor<T>> {
        let ia = self.node_of(a, "sigmoid")?;
        let out: Vec<T> = a.data.iter().map(|&x| kernel::sigmoid(x)).collect();
        Ok(self.push(a.shape.clone(), Arc::new(out), Op::Sigmoid { a: ia }))
    }

    pub fn exp(&mut self, a: &Tensor<T>) -> Result<Tensor<T>> {
        let ia = self.node_of(a, "exp")?;
        let out: Vec<T> = a.data.iter().map(|&x| x.exp()).collect();
        Ok(self.push(a.shape.clone(), Arc::new(out), Op::Exp { a: ia }))
    }

    /// Natural log with the argument floored at `eps` to stay finite.
    /// Negative inputs are a domain error.
    pub fn log_eps(&mut self, a: &Tensor<T>, eps: T) -> Result<Tensor<T>> {
        if let Some(v) = a.data.iter().find(|v| **v < T::ZERO) {
            return Err(Error::domain("log", format!("negative input {v}")));
        }
        let ia = self.node_of(a, "log")?;
        let out: Vec<T> = a.data.iter().map(|&x| x.max(eps).ln()).collect();
        Ok(self.push(a.shape.clone(), Arc::new(out), Op::LogEps { a: ia, eps }))
    }

    /// Squared L2 distance, averaged over rows: `mean_i Σ_j (a_ij - b_ij)²`.
    /// Returns a scalar.
    pub fn sq_l2(&mut self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        if a.shape != b.shape {
            return Err(Error::ShapeMismatch {
                op: "sq_l2",
                lhs: a.shape.clone(),
                rhs: b.shape.clone(),
            });
        }
        let ia = self.node_of(a, "sq_l2")?;
        let ib = self.node_of(b, "sq_l2")?;
        let mut s = T::ZERO;
        for (&x, &y) in a.data.iter().zip(b.data.iter()) {
            let d = x - y;
            s += d * d;
        }
        let v = s / T::from_f64(a.rows() as f64);
        Ok(self.push(vec![1], Arc::new(vec![v]), Op::SqL2 { a: ia, b: ib }))
    }

    /// Columns `start..end` of a 2-D tensor.
    pub fn slice_cols(&mut self, a: &Tensor<T>, start: usize, end: usize) -> Result<Tensor<T>> {
        if a.shape.len() != 2 || end > a.shape[1] || start >= end {
            return Err(Error::ShapeMismatch {
                op: "slice_cols",
                lhs: a.shape.clone(),
                rhs: vec![start, end],
            });
        }
        let ia = self.node_of(a, "slice_cols")?;
        let (rows, cols) = (a.shape[0], a.shape[1]);
        let width = end - start;
        let mut out = Vec::with_capacity(rows * width);
        for r in 0..rows {
            out.extend_from_slice(&a.data[r * cols + start..r * cols + end]);
        }
        Ok(self.push(
            vec![rows, width],
            Arc::new(out),
            Op::SliceCols { a: ia, start, end },
        ))
    }

    /// Biased squared maximum mean discrepancy between the row sets of
    /// `a` and `b` under the inverse-multiquadric kernel
    /// `k(u,v) = c / (c + ‖u-v‖²)`. Returns a scalar.
    pub fn mmd_imq(&mut self, a: &Tensor<T>, b: &Tensor<T>, c: T) -> Result<Tensor<T>> {
        if a.shape.len() != 2 || b.shape.len() != 2 || a.shape != b.shape {
            return Err(Error::ShapeMismatch {
                op: "mmd_imq",
                lhs: a.shape.clone(),
                rhs: b.shape.clone(),
            });
        }
        let ia = self.node_of(a, "mmd_imq")?;
        let ib = self.node_of(b, "mmd_imq")?;
        let v = kernel::mmd_imq_value(&a.data, &b.data, a.shape[0], a.shape[1], c);
        Ok(self.push(vec![1], Arc::new(vec![v]), Op::MmdImq { a: ia, b: ib, c }))
    }

    // ---- backward -----------------------------------------------------------

    /// Reverse accumulation from a scalar root. Every node reachable
    /// from the root ends up with a gradient of its own shape;
    /// gradients from a previous backward call are discarded.
    pub fn backward(&mut self, root: &Tensor<T>) -> Result<()> {
        let ir = self.node_of(root, "backward")?;
        if !root.is_scalar() {
            return Err(Error::Tape(format!(
                "backward root must be scalar, got shape {:?}",
                root.shape
            )));
        }
        self.grads.clear();
        self.grads.resize(self.nodes.len(), None);
        self.grads[ir] = Some(vec![T::ONE]);

        for i in (0..self.nodes.len()).rev() {
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            self.propagate(i, &g);
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    fn grad_buf(&mut self, i: usize) -> &mut Vec<T> {
        let n = numel(&self.nodes[i].shape);
        self.grads[i].get_or_insert_with(|| vec![T::ZERO; n])
    }

    fn propagate(&mut self, i: usize, g: &[T]) {
        // Ops are matched by value to keep the borrow checker out of
        // the gradient buffers.
        let op = self.nodes[i].op.clone();
        match op {
            Op::Leaf => {}
            Op::Matmul { a, b } => {
                let (m, k) = (self.nodes[a].shape[0], self.nodes[a].shape[1]);
                let n = self.nodes[b].shape[1];
                // a_grad += g · bᵀ
                {
                    let bval = Arc::clone(&self.nodes[b].value);
                    let ga = self.grad_buf(a);
                    unsafe {
                        T::gemm(
                            m,
                            n,
                            k,
                            T::ONE,
                            g.as_ptr(),
                            n as isize,
                            1,
                            bval.as_ptr(),
                            1,
                            n as isize, // bᵀ view
                            T::ONE,
                            ga.as_mut_ptr(),
                            k as isize,
                            1,
                        );
                    }
                }
                // b_grad += aᵀ · g
                {
                    let aval = Arc::clone(&self.nodes[a].value);
                    let gb = self.grad_buf(b);
                    unsafe {
                        T::gemm(
                            k,
                            m,
                            n,
                            T::ONE,
                            aval.as_ptr(),
                            1,
                            k as isize, // aᵀ view
                            g.as_ptr(),
                            n as isize,
                            1,
                            T::ONE,
                            gb.as_mut_ptr(),
                            n as isize,
                            1,
                        );
                    }
                }
            }
            Op::AddBias { a, bias } => {
                let n = numel(&self.nodes[bias].shape);
                {
                    let ga = self.grad_buf(a);
                    for (gi, &gv) in ga.iter_mut().zip(g) {
                        *gi += gv;
                    }
                }
                {
                    let gb = self.grad_buf(bias);
                    for row in g.chunks_exact(n) {
                        for (gi, &gv) in gb.iter_mut().zip(row) {
                            *gi += gv;
                        }
                    }
                }
            }
            Op::Add { a, b } => {
                for idx in [a, b] {
                    let gx = self.grad_buf(idx);
                    for (gi, &gv) in gx.iter_mut().zip(g) {
                        *gi += gv;
                    }
                }
            }
            Op::Sub { a, b } => {
                {
                    let ga = self.grad_buf(a);
                    for (gi, &gv) in ga.iter_mut().zip(g) {
                        *gi += gv;
                    }
                }
                {
                    let gb = self.grad_buf(b);
                    for (gi, &gv) in gb.iter_mut().zip(g) {
                        *gi -= gv;
                    }
                }
            }
            Op::Mul { a, b } => {
                {
                    let bval = Arc::clone(&self.nodes[b].value);
                    let ga = self.grad_buf(a);
                    for ((gi, &gv), &bv) in ga.iter_mut().zip(g).zip(bval.iter()) {
                        *gi += gv * bv;
                    }
                }
                {
                    let aval = Arc::clone(&self.nodes[a].value);
                    let gb = self.grad_buf(b);
                    for ((gi, &gv), &av) in gb.iter_mut().zip(g).zip(aval.iter()) {
                        *gi += gv * av;
                    }
                }
            }
            Op::Affine { a, mul } => {
                let ga = self.grad_buf(a);
                for (gi, &gv) in ga.iter_mut().zip(g) {
                    *gi += gv * mul;
                }
            }
            Op::Sum { a } => {
                let g0 = g[0];
                let ga = self.grad_buf(a);
                for gi in ga.iter_mut() {
                    *gi += g0;
                }
            }
            Op::Mean { a } => {
                let n = numel(&self.nodes[a].shape);
                let g0 = g[0] / T::from_f64(n as f64);
                let ga = self.grad_buf(a);
                for gi in ga.iter_mut() {
                    *gi += g0;
                }
            }
            Op::LRelu { a, slope } => {
                let aval = Arc::clone(&self.nodes[a].value);
                let ga = self.grad_buf(a);
                for ((gi, &gv), &av) in ga.iter_mut().zip(g).zip(aval.iter()) {
                    *gi += if av >= T::ZERO { gv } else { gv * slope };
                }
            }
            Op::Tanh { a } => {
                let out = Arc::clone(&self.nodes[i].value);
                let ga = self.grad_buf(a);
                for ((gi, &gv), &t) in ga.iter_mut().zip(g).zip(out.iter()) {
                    *gi += gv * (T::ONE - t * t);
                }
            }
            Op::Sigmoid { a } => {
                let out = Arc::clone(&self.nodes[i].value);
                let ga = self.grad_buf(a);
                for ((gi, &gv), &s) in ga.iter_mut().zip(g).zip(out.iter()) {
                    *gi += gv * s * (T::ONE - s);
                }
            }
            Op::Exp { a } => {
                let out = Arc::clone(&self.nodes[i].value);
                let ga = self.grad_buf(a);
                for ((gi, &gv), &e) in ga.iter_mut().zip(g).zip(out.iter()) {
                    *gi += gv * e;
                }
            }
            Op::LogEps { a, eps } => {
                // Zero subgradient in the floored region.
                let aval = Arc::clone(&self.nodes[a].value);
                let ga = self.grad_buf(a);
                for ((gi, &gv), &av) in ga.iter_mut().zip(g).zip(aval.iter()) {
                    if av >= eps {
                        *gi += gv / av;
                    }
                }
            }
            Op::SqL2 { a, b } => {
                let rows = self.nodes[a].shape.first().copied().unwrap_or(1);
                let rows = if self.nodes[a].shape.len() == 2 { rows } else { 1 };
                let scale = g[0] * T::from_f64(2.0 / rows as f64);
                let aval = Arc::clone(&self.nodes[a].value);
                let bval = Arc::clone(&self.nodes[b].value);
                {
                    let ga = self.grad_buf(a);
                    for ((gi, &av), &bv) in ga.iter_mut().zip(aval.iter()).zip(bval.iter()) {
                        *gi += scale * (av - bv);
                    }
                }
                {
                    let gb = self.grad_buf(b);
                    for ((gi, &av), &bv) in gb.iter_mut().zip(aval.iter()).zip(bval.iter()) {
                        *gi -= scale * (av - bv);
                    }
                }
            }
            Op::SliceCols { a, start, end } => {
                let cols = self.nodes[a].shape[1];
                let width = end - start;
                let ga = self.grad_buf(a);
                for (r, row) in g.chunks_exact(width).enumerate() {
                    for (j, &gv) in row.iter().enumerate() {
                        ga[r * cols + start + j] += gv;
                    }
                }
            }
            Op::MmdImq { a, b, c } => {
                let aval = Arc::clone(&self.nodes[a].value);
                let bval = Arc::clone(&self.nodes[b].value);
                let rows = self.nodes[a].shape[0];
                let dim = self.nodes[a].shape[1];
                let (ga_add, gb_add) = kernel::mmd_imq_grads(&aval, &bval, rows, dim, c, g[0]);
                {
                    let ga = self.grad_buf(a);
                    for (gi, gv) in ga.iter_mut().zip(ga_add) {
                        *gi += gv;
                    }
                }
                {
                    let gb = self.grad_buf(b);
                    for (gi, gv) in gb.iter_mut().zip(gb_add) {
                        *gi += gv;
                    }
                }
            }
        }
    }

    /// Gradient accumulated on a node by the last [`Tape::backward`]
    /// call, as a detached tensor. Zero if the node was unreachable
    /// from the root.
    pub fn grad(&self, t: &Tensor<T>) -> Result<Tensor<T>> {
        let i = self.node_of(t, "grad")?;
        let data = match self.grads.get(i) {
            Some(Some(g)) => g.clone(),
            _ => vec![T::ZERO; t.len()],
        };
        Ok(Tensor {
            shape: t.shape.clone(),
            data: Arc::new(data),
            node: None,
        })
    }
}

#[cfg(test)]
mod tests;
