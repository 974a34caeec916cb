//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Tape`] is an append-only arena of nodes. Each node stores the forward
//! value and the operation that produced it; parents always precede children,
//! so a single reverse sweep over the arena visits the DAG in reverse
//! topological order and accumulates adjoints additively across paths.
//!
//! The primitive set is the minimum needed for MLP encoders/decoders and the
//! graph validity penalties: elementwise arithmetic, matrix product,
//! reshape/transpose, exp / guarded log / sqrt / square, a sharpened logistic
//! sigmoid, relu (the ramp), softmax over the last axis, fiber selection, and
//! the upper-triangle mirror that assembles symmetric edge tensors.

use std::cell::RefCell;
use std::rc::Rc;

use crate::tensor::{sigmoid, Tensor, TensorError, LOG_CLAMP};

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    AddScalar(usize),
    MulScalar(usize, f64),
    Matmul(usize, usize),
    Transpose(usize),
    Reshape(usize),
    SumAll(usize),
    Exp(usize),
    /// Natural log of inputs clamped to `LOG_CLAMP`; zero gradient in the
    /// clamped region.
    LogGuarded(usize),
    Sqrt(usize),
    Square(usize),
    /// `1 / (1 + exp(-gain * (x - center)))`; only the gain matters for the
    /// gradient, the centered value is baked into the stored output.
    SigmoidAffine {
        parent: usize,
        gain: f64,
    },
    Relu(usize),
    MaxScalar(usize, f64),
    SoftmaxLast(usize),
    /// Pick index `index` of the last axis: `[.., C] -> [..]`.
    SelectLast {
        parent: usize,
        index: usize,
    },
    /// Expand `n*(n-1)/2` upper-triangle fibers into a symmetric
    /// `[n, n, C]` tensor whose diagonal fibers are one-hot at channel 0.
    MirrorUpper {
        parent: usize,
        n: usize,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    trainable: bool,
}

/// Recording arena for one forward/backward pass. Cheap to clone (shared).
#[derive(Clone)]
pub struct Tape {
    nodes: Rc<RefCell<Vec<Node>>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Rc::new(RefCell::new(Vec::new())),
        }
    }

    fn push(&self, value: Tensor, op: Op, trainable: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            trainable,
        });
        Var {
            tape: self.clone(),
            index: nodes.len() - 1,
        }
    }

    /// Leaf whose gradient will be reported by [`backward`].
    pub fn leaf(&self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf treated as a constant input.
    pub fn constant(&self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn same_tape(&self, other: &Tape) -> bool {
        Rc::ptr_eq(&self.nodes, &other.nodes)
    }
}

/// Handle to one node on a [`Tape`].
#[derive(Clone)]
pub struct Var {
    tape: Tape,
    index: usize,
}

impl Var {
    pub fn value(&self) -> Tensor {
        self.tape.nodes.borrow()[self.index].value.clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.index].value.shape().to_vec()
    }

    pub fn numel(&self) -> usize {
        self.tape.nodes.borrow()[self.index].value.numel()
    }

    /// Forward value of a scalar node.
    pub fn item(&self) -> Result<f64, TensorError> {
        self.tape.nodes.borrow()[self.index].value.item()
    }

    fn binary(
        &self,
        other: &Var,
        op_name: &'static str,
        f: impl FnOnce(&Tensor, &Tensor) -> Result<Tensor, TensorError>,
        op: impl FnOnce(usize, usize) -> Op,
    ) -> Result<Var, TensorError> {
        if !self.tape.same_tape(&other.tape) {
            return Err(TensorError::TapeMismatch { op: op_name });
        }
        let value = {
            let nodes = self.tape.nodes.borrow();
            f(&nodes[self.index].value, &nodes[other.index].value)?
        };
        Ok(self.tape.push(value, op(self.index, other.index), false))
    }

    fn unary(&self, f: impl FnOnce(&Tensor) -> Tensor, op: Op) -> Var {
        let value = {
            let nodes = self.tape.nodes.borrow();
            f(&nodes[self.index].value)
        };
        self.tape.push(value, op, false)
    }

    pub fn add(&self, other: &Var) -> Result<Var, TensorError> {
        self.binary(other, "add", |a, b| a.add(b), Op::Add)
    }

    pub fn sub(&self, other: &Var) -> Result<Var, TensorError> {
        self.binary(other, "sub", |a, b| a.sub(b), Op::Sub)
    }

    pub fn mul(&self, other: &Var) -> Result<Var, TensorError> {
        self.binary(other, "mul", |a, b| a.mul(b), Op::Mul)
    }

    pub fn div(&self, other: &Var) -> Result<Var, TensorError> {
        self.binary(other, "div", |a, b| a.div(b), Op::Div)
    }

    pub fn matmul(&self, other: &Var) -> Result<Var, TensorError> {
        self.binary(other, "matmul", |a, b| a.matmul(b), Op::Matmul)
    }

    pub fn add_scalar(&self, c: f64) -> Var {
        self.unary(|v| v.add_scalar(c), Op::AddScalar(self.index))
    }

    pub fn mul_scalar(&self, c: f64) -> Var {
        self.unary(|v| v.scale(c), Op::MulScalar(self.index, c))
    }

    pub fn neg(&self) -> Var {
        self.mul_scalar(-1.0)
    }

    /// `1 - x`, elementwise.
    pub fn one_minus(&self) -> Var {
        self.mul_scalar(-1.0).add_scalar(1.0)
    }

    pub fn transpose(&self) -> Result<Var, TensorError> {
        let value = {
            let nodes = self.tape.nodes.borrow();
            nodes[self.index].value.transpose()?
        };
        Ok(self.tape.push(value, Op::Transpose(self.index), false))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Var, TensorError> {
        let value = {
            let nodes = self.tape.nodes.borrow();
            nodes[self.index].value.reshape(shape)?
        };
        Ok(self.tape.push(value, Op::Reshape(self.index), false))
    }

    /// Sum of all entries, as a `[1]`-shaped scalar node.
    pub fn sum_all(&self) -> Var {
        self.unary(|v| Tensor::scalar(v.sum()), Op::SumAll(self.index))
    }

    pub fn exp(&self) -> Var {
        self.unary(|v| v.map(f64::exp), Op::Exp(self.index))
    }

    /// Natural log with inputs clamped to `LOG_CLAMP`.
    pub fn log_guarded(&self) -> Var {
        self.unary(|v| v.log_guarded(), Op::LogGuarded(self.index))
    }

    pub fn sqrt(&self) -> Var {
        self.unary(|v| v.map(|x| x.max(0.0).sqrt()), Op::Sqrt(self.index))
    }

    pub fn square(&self) -> Var {
        self.unary(|v| v.map(|x| x * x), Op::Square(self.index))
    }

    /// `sigma(gain * (x - center))`, the sharpened logistic transform.
    pub fn sigmoid_affine(&self, gain: f64, center: f64) -> Var {
        self.unary(
            |v| v.map(|x| sigmoid(gain * (x - center))),
            Op::SigmoidAffine {
                parent: self.index,
                gain,
            },
        )
    }

    pub fn sigmoid(&self) -> Var {
        self.sigmoid_affine(1.0, 0.0)
    }

    pub fn relu(&self) -> Var {
        self.unary(|v| v.map(|x| x.max(0.0)), Op::Relu(self.index))
    }

    /// The ramp `max(g, 0)`; alias of [`Var::relu`] under its penalty name.
    pub fn ramp(&self) -> Var {
        self.relu()
    }

    pub fn max_scalar(&self, c: f64) -> Var {
        self.unary(|v| v.map(|x| x.max(c)), Op::MaxScalar(self.index, c))
    }

    pub fn softmax_last(&self) -> Var {
        self.unary(|v| v.softmax_last(), Op::SoftmaxLast(self.index))
    }

    /// Select one channel of the last axis, dropping that axis.
    pub fn select_last(&self, index: usize) -> Result<Var, TensorError> {
        let value = {
            let nodes = self.tape.nodes.borrow();
            let v = &nodes[self.index].value;
            let width = *v.shape().last().unwrap_or(&1);
            if v.shape().is_empty() || index >= width {
                return Err(TensorError::IndexOutOfRange {
                    op: "select_last",
                    index,
                    size: width,
                });
            }
            let out_shape: Vec<usize> = v.shape()[..v.shape().len() - 1].to_vec();
            let data: Vec<f64> = v
                .data()
                .chunks(width)
                .map(|chunk| chunk[index])
                .collect();
            Tensor::new(out_shape, data).expect("select_last shape")
        };
        Ok(self.tape.push(
            value,
            Op::SelectLast {
                parent: self.index,
                index,
            },
            false,
        ))
    }

    /// Assemble a symmetric `[n, n, C]` edge tensor from `n*(n-1)/2`
    /// upper-triangle fibers (row order `(0,1), (0,2), .., (n-2,n-1)`).
    /// Diagonal fibers are fixed to one-hot at channel 0 and carry no
    /// gradient.
    pub fn mirror_upper(&self, n: usize) -> Result<Var, TensorError> {
        let value = {
            let nodes = self.tape.nodes.borrow();
            let v = &nodes[self.index].value;
            let rows = n * (n - 1) / 2;
            if v.shape().len() != 2 || v.shape()[0] != rows {
                return Err(TensorError::ShapeMismatch {
                    op: "mirror_upper",
                    lhs: v.shape().to_vec(),
                    rhs: vec![rows, v.shape().last().copied().unwrap_or(0)],
                });
            }
            let channels = v.shape()[1];
            let mut out = Tensor::zeros(&[n, n, channels]);
            let mut row = 0;
            for i in 0..n {
                for j in (i + 1)..n {
                    for k in 0..channels {
                        let x = v.data()[row * channels + k];
                        out.set3(i, j, k, x);
                        out.set3(j, i, k, x);
                    }
                    row += 1;
                }
            }
            for i in 0..n {
                out.set3(i, i, 0, 1.0);
            }
            out
        };
        Ok(self.tape.push(
            value,
            Op::MirrorUpper {
                parent: self.index,
                n,
            },
            false,
        ))
    }

    pub fn tape(&self) -> &Tape {
        &self.tape
    }
}

/// Adjoints produced by [`backward`], indexed by tape position.
pub struct Gradients {
    adjoints: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the backward root with respect to `var`, if any path
    /// reached it.
    pub fn wrt(&self, var: &Var) -> Option<&Tensor> {
        self.adjoints.get(var.index).and_then(|a| a.as_ref())
    }

    /// Like [`Gradients::wrt`] but returns zeros of the variable's shape when
    /// no path reached it.
    pub fn wrt_or_zeros(&self, var: &Var) -> Tensor {
        match self.wrt(var) {
            Some(t) => t.clone(),
            None => Tensor::zeros(&var.shape()),
        }
    }
}

fn accumulate(slot: &mut Option<Tensor>, contribution: Tensor) {
    match slot {
        Some(existing) => {
            *existing = existing
                .add(&contribution)
                .expect("adjoint shapes agree by construction");
        }
        None => *slot = Some(contribution),
    }
}

/// Reverse sweep from a scalar root; gradients accumulate additively across
/// shared subexpressions.
pub fn backward(root: &Var) -> Result<Gradients, TensorError> {
    let nodes = root.tape.nodes.borrow();
    let root_value = &nodes[root.index].value;
    if root_value.numel() != 1 {
        return Err(TensorError::NotScalar {
            op: "backward",
            shape: root_value.shape().to_vec(),
        });
    }
    let mut adjoints: Vec<Option<Tensor>> = vec![None; root.index + 1];
    adjoints[root.index] = Some(Tensor::ones(root_value.shape()));

    for idx in (0..=root.index).rev() {
        let grad = match adjoints[idx].take() {
            Some(g) => g,
            None => continue,
        };
        let node = &nodes[idx];
        match node.op {
            Op::Leaf => {
                // Constants do not report gradients; drop their adjoints.
                if node.trainable {
                    adjoints[idx] = Some(grad);
                }
                continue;
            }
            Op::Add(a, b) => {
                accumulate(&mut adjoints[a], grad.clone());
                accumulate(&mut adjoints[b], grad);
            }
            Op::Sub(a, b) => {
                accumulate(&mut adjoints[a], grad.clone());
                accumulate(&mut adjoints[b], grad.scale(-1.0));
            }
            Op::Mul(a, b) => {
                let va = &nodes[a].value;
                let vb = &nodes[b].value;
                accumulate(&mut adjoints[a], grad.mul(vb)?);
                accumulate(&mut adjoints[b], grad.mul(va)?);
            }
            Op::Div(a, b) => {
                let vb = &nodes[b].value;
                let da = grad.div(vb)?;
                // d/db (a/b) = -a / b^2 = -(a/b) / b
                let db = grad.mul(&node.value)?.div(vb)?.scale(-1.0);
                accumulate(&mut adjoints[a], da);
                accumulate(&mut adjoints[b], db);
            }
            Op::AddScalar(a) => accumulate(&mut adjoints[a], grad),
            Op::MulScalar(a, c) => accumulate(&mut adjoints[a], grad.scale(c)),
            Op::Matmul(a, b) => {
                let va = &nodes[a].value;
                let vb = &nodes[b].value;
                accumulate(&mut adjoints[a], grad.matmul(&vb.transpose()?)?);
                accumulate(&mut adjoints[b], va.transpose()?.matmul(&grad)?);
            }
            Op::Transpose(a) => accumulate(&mut adjoints[a], grad.transpose()?),
            Op::Reshape(a) => {
                accumulate(&mut adjoints[a], grad.reshape(nodes[a].value.shape())?)
            }
            Op::SumAll(a) => {
                let g = grad.item()?;
                accumulate(&mut adjoints[a], Tensor::full(nodes[a].value.shape(), g));
            }
            Op::Exp(a) => accumulate(&mut adjoints[a], grad.mul(&node.value)?),
            Op::LogGuarded(a) => {
                let va = &nodes[a].value;
                let da = grad.zip_map(va, "log_backward", |g, x| {
                    if x > LOG_CLAMP {
                        g / x
                    } else {
                        0.0
                    }
                })?;
                accumulate(&mut adjoints[a], da);
            }
            Op::Sqrt(a) => {
                let da = grad.zip_map(&node.value, "sqrt_backward", |g, y| {
                    if y > 1e-150 {
                        0.5 * g / y
                    } else {
                        0.0
                    }
                })?;
                accumulate(&mut adjoints[a], da);
            }
            Op::Square(a) => {
                let va = &nodes[a].value;
                accumulate(&mut adjoints[a], grad.mul(va)?.scale(2.0));
            }
            Op::SigmoidAffine { parent, gain, .. } => {
                let da = grad.zip_map(&node.value, "sigmoid_backward", |g, y| {
                    g * gain * y * (1.0 - y)
                })?;
                accumulate(&mut adjoints[parent], da);
            }
            Op::Relu(a) => {
                let va = &nodes[a].value;
                let da = grad.zip_map(va, "relu_backward", |g, x| if x > 0.0 { g } else { 0.0 })?;
                accumulate(&mut adjoints[a], da);
            }
            Op::MaxScalar(a, c) => {
                let va = &nodes[a].value;
                let da = grad.zip_map(va, "max_scalar_backward", |g, x| {
                    if x > c {
                        g
                    } else {
                        0.0
                    }
                })?;
                accumulate(&mut adjoints[a], da);
            }
            Op::SoftmaxLast(a) => {
                let y = &node.value;
                let width = *y.shape().last().unwrap_or(&1);
                let mut da = vec![0.0; y.numel()];
                for (chunk_idx, (yc, gc)) in y
                    .data()
                    .chunks(width)
                    .zip(grad.data().chunks(width))
                    .enumerate()
                {
                    let dot: f64 = yc.iter().zip(gc).map(|(&yv, &gv)| yv * gv).sum();
                    for k in 0..width {
                        da[chunk_idx * width + k] = yc[k] * (gc[k] - dot);
                    }
                }
                accumulate(
                    &mut adjoints[a],
                    Tensor::new(y.shape().to_vec(), da).expect("softmax adjoint shape"),
                );
            }
            Op::SelectLast { parent, index } => {
                let va = &nodes[parent].value;
                let width = *va.shape().last().unwrap();
                let mut da = vec![0.0; va.numel()];
                for (chunk_idx, &g) in grad.data().iter().enumerate() {
                    da[chunk_idx * width + index] = g;
                }
                accumulate(
                    &mut adjoints[parent],
                    Tensor::new(va.shape().to_vec(), da).expect("select adjoint shape"),
                );
            }
            Op::MirrorUpper { parent, n } => {
                let va = &nodes[parent].value;
                let channels = va.shape()[1];
                let mut da = vec![0.0; va.numel()];
                let mut row = 0;
                for i in 0..n {
                    for j in (i + 1)..n {
                        for k in 0..channels {
                            let g_ij = grad.data()[(i * n + j) * channels + k];
                            let g_ji = grad.data()[(j * n + i) * channels + k];
                            da[row * channels + k] = g_ij + g_ji;
                        }
                        row += 1;
                    }
                }
                accumulate(
                    &mut adjoints[parent],
                    Tensor::new(va.shape().to_vec(), da).expect("mirror adjoint shape"),
                );
            }
        }
    }

    // Only leaves keep their adjoints; interior slots were drained above.
    for (idx, slot) in adjoints.iter_mut().enumerate() {
        if !matches!(nodes[idx].op, Op::Leaf) {
            *slot = None;
        }
    }
    let _ = nodes; // borrow ends before constructing the result
    Ok(Gradients { adjoints })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_gradient() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(3.0));
        let y = x.square();
        let grads = backward(&y).unwrap();
        assert_eq!(grads.wrt(&x).unwrap().data(), &[6.0]);
    }

    #[test]
    fn non_scalar_root_rejected() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(&[2, 2]));
        assert!(matches!(
            backward(&x),
            Err(TensorError::NotScalar { op: "backward", .. })
        ));
    }

    #[test]
    fn softmax_sum_has_zero_gradient() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::new(vec![4], vec![0.3, -1.2, 2.0, 0.0]).unwrap());
        let y = x.softmax_last().sum_all();
        assert!((y.item().unwrap() - 1.0).abs() < 1e-12);
        let grads = backward(&y).unwrap();
        for &g in grads.wrt(&x).unwrap().data() {
            assert!(g.abs() < 1e-12, "softmax sum gradient should vanish, got {g}");
        }
    }

    #[test]
    fn shared_subexpression_accumulates() {
        // f(x) = x*x + x*x written with a shared subexpression vs expanded.
        let tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(1.7));
        let sq = x.square();
        let shared = sq.add(&sq).unwrap().sum_all();
        let g_shared = backward(&shared).unwrap().wrt(&x).unwrap().data()[0];

        let tape2 = Tape::new();
        let x2 = tape2.leaf(Tensor::scalar(1.7));
        let expanded = x2.square().add(&x2.square()).unwrap().sum_all();
        let g_expanded = backward(&expanded).unwrap().wrt(&x2).unwrap().data()[0];

        assert!((g_shared - g_expanded).abs() < 1e-12);
        assert!((g_shared - 4.0 * 1.7).abs() < 1e-12);
    }

    #[test]
    fn ramp_examples() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::new(vec![2], vec![-2.5, 2.5]).unwrap());
        let y = x.ramp();
        assert_eq!(y.value().data(), &[0.0, 2.5]);
    }

    #[test]
    fn mixing_tapes_rejected() {
        let t1 = Tape::new();
        let t2 = Tape::new();
        let a = t1.leaf(Tensor::scalar(1.0));
        let b = t2.leaf(Tensor::scalar(2.0));
        assert!(matches!(
            a.add(&b),
            Err(TensorError::TapeMismatch { op: "add" })
        ));
    }

    #[test]
    fn mirror_upper_symmetry_and_diagonal() {
        let tape = Tape::new();
        // n = 3, channels = 2: rows (0,1), (0,2), (1,2)
        let upper = tape.leaf(
            Tensor::new(vec![3, 2], vec![0.1, 0.9, 0.4, 0.6, 0.8, 0.2]).unwrap(),
        );
        let full = upper.mirror_upper(3).unwrap();
        let v = full.value();
        assert_eq!(v.shape(), &[3, 3, 2]);
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..2 {
                    assert_eq!(v.get3(i, j, k), v.get3(j, i, k));
                }
            }
            assert_eq!(v.get3(i, i, 0), 1.0);
            assert_eq!(v.get3(i, i, 1), 0.0);
        }
        // Gradient flows to both mirrored positions.
        let s = full.select_last(1).unwrap().sum_all();
        let grads = backward(&s).unwrap();
        let g = grads.wrt(&upper).unwrap();
        assert_eq!(g.data(), &[0.0, 2.0, 0.0, 2.0, 0.0, 2.0]);
    }

    #[test]
    fn select_last_out_of_range() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(&[2, 3]));
        assert!(x.select_last(3).is_err());
        assert!(x.select_last(2).is_ok());
    }
}
