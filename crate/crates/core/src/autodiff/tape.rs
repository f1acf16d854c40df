use std::cell::RefCell;
use std::sync::Arc;

use super::{AutodiffError, Tensor};

type Result<T> = std::result::Result<T, AutodiffError>;

/// Primitive operation record. Inputs are node ids on the same tape.
#[derive(Clone, Debug)]
pub(crate) enum Op {
    Leaf,
    Constant,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Scale(usize, f64),
    AddScalar(usize, f64),
    MatMul(usize, usize),
    Transpose(usize),
    /// `r x c -> 1 x c`
    SumRows(usize),
    /// `r x c -> r x 1`
    SumCols(usize),
    /// `1 x c -> n x c`
    BroadcastRows(usize, usize),
    /// `r x 1 -> r x n`
    BroadcastCols(usize, usize),
    Gather(usize, Arc<[usize]>),
    SegmentSum(usize, Arc<[usize]>, usize),
    SliceCols(usize, usize, usize),
    PadCols(usize, usize, usize),
    ConcatCols(Arc<[usize]>),
    Reshape(usize, usize, usize),
    Exp(usize),
    Sin(usize),
    Cos(usize),
    Sigmoid(usize),
    Silu(usize),
    Powi(usize, i32),
    SoftmaxRows(usize),
    NormRows(usize, f64),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Constant => "constant",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::MatMul(..) => "matmul",
            Op::Transpose(..) => "transpose",
            Op::SumRows(..) => "sum_rows",
            Op::SumCols(..) => "sum_cols",
            Op::BroadcastRows(..) => "broadcast_rows",
            Op::BroadcastCols(..) => "broadcast_cols",
            Op::Gather(..) => "gather",
            Op::SegmentSum(..) => "segment_sum",
            Op::SliceCols(..) => "slice_cols",
            Op::PadCols(..) => "pad_cols",
            Op::ConcatCols(..) => "concat_cols",
            Op::Reshape(..) => "reshape",
            Op::Exp(..) => "exp",
            Op::Sin(..) => "sin",
            Op::Cos(..) => "cos",
            Op::Sigmoid(..) => "sigmoid",
            Op::Silu(..) => "silu",
            Op::Powi(..) => "powi",
            Op::SoftmaxRows(..) => "softmax_rows",
            Op::NormRows(..) => "norm_rows",
        }
    }

    fn inputs(&self) -> Vec<usize> {
        match self {
            Op::Leaf | Op::Constant => vec![],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) | Op::MatMul(a, b) => {
                vec![*a, *b]
            }
            Op::ConcatCols(ids) => ids.to_vec(),
            Op::Scale(a, _)
            | Op::AddScalar(a, _)
            | Op::Transpose(a)
            | Op::SumRows(a)
            | Op::SumCols(a)
            | Op::BroadcastRows(a, _)
            | Op::BroadcastCols(a, _)
            | Op::Gather(a, _)
            | Op::SegmentSum(a, _, _)
            | Op::SliceCols(a, _, _)
            | Op::PadCols(a, _, _)
            | Op::Reshape(a, _, _)
            | Op::Exp(a)
            | Op::Sin(a)
            | Op::Cos(a)
            | Op::Sigmoid(a)
            | Op::Silu(a)
            | Op::Powi(a, _)
            | Op::SoftmaxRows(a)
            | Op::NormRows(a, _) => vec![*a],
        }
    }
}

struct Node {
    op: Op,
    value: Arc<Tensor>,
    requires_grad: bool,
}

/// Define-by-run recording of primitive operations.
///
/// Values are computed eagerly when an op is recorded. Backward rules are
/// themselves recorded on the tape, so gradients can be differentiated again.
/// A tape is a single-threaded object; build one per evaluation.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> AutodiffError {
    AutodiffError::ShapeMismatch {
        op,
        lhs: a.shape(),
        rhs: b.shape(),
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() == b.shape() {
        Ok(())
    } else {
        Err(mismatch(op, a, b))
    }
}

/// Forward evaluation of one primitive given the values already on the tape.
fn eval(op: &Op, nodes: &[Node]) -> Result<Tensor> {
    let v = |id: usize| -> &Tensor { &nodes[id].value };
    let out = match op {
        Op::Leaf | Op::Constant => unreachable!("leaves are not evaluated"),
        Op::Add(a, b) => {
            same_shape("add", v(*a), v(*b))?;
            v(*a).zip_map(v(*b), |x, y| x + y)
        }
        Op::Sub(a, b) => {
            same_shape("sub", v(*a), v(*b))?;
            v(*a).zip_map(v(*b), |x, y| x - y)
        }
        Op::Mul(a, b) => {
            same_shape("mul", v(*a), v(*b))?;
            v(*a).zip_map(v(*b), |x, y| x * y)
        }
        Op::Div(a, b) => {
            same_shape("div", v(*a), v(*b))?;
            v(*a).zip_map(v(*b), |x, y| x / y)
        }
        Op::Scale(a, s) => v(*a).map(|x| x * s),
        Op::AddScalar(a, s) => v(*a).map(|x| x + s),
        Op::MatMul(a, b) => v(*a).matmul(v(*b))?,
        Op::Transpose(a) => v(*a).transpose(),
        Op::SumRows(a) => {
            let t = v(*a);
            let mut out = vec![0.0; t.cols()];
            for r in 0..t.rows() {
                for (o, x) in out.iter_mut().zip(t.row_slice(r)) {
                    *o += x;
                }
            }
            Tensor::row(&out)
        }
        Op::SumCols(a) => {
            let t = v(*a);
            let out: Vec<f64> = (0..t.rows()).map(|r| t.row_slice(r).iter().sum()).collect();
            Tensor::column(&out)
        }
        Op::BroadcastRows(a, n) => {
            let t = v(*a);
            if t.rows() != 1 {
                return Err(mismatch("broadcast_rows", t, &Tensor::zeros(1, t.cols())));
            }
            let mut data = Vec::with_capacity(n * t.cols());
            for _ in 0..*n {
                data.extend_from_slice(t.data());
            }
            Tensor::new(*n, t.cols(), data)?
        }
        Op::BroadcastCols(a, n) => {
            let t = v(*a);
            if t.cols() != 1 {
                return Err(mismatch("broadcast_cols", t, &Tensor::zeros(t.rows(), 1)));
            }
            let mut data = Vec::with_capacity(n * t.rows());
            for &x in t.data() {
                data.extend(std::iter::repeat_n(x, *n));
            }
            Tensor::new(t.rows(), *n, data)?
        }
        Op::Gather(a, idx) => {
            let t = v(*a);
            let mut data = Vec::with_capacity(idx.len() * t.cols());
            for &i in idx.iter() {
                if i >= t.rows() {
                    return Err(AutodiffError::IndexOutOfRange {
                        op: "gather",
                        index: i,
                        len: t.rows(),
                    });
                }
                data.extend_from_slice(t.row_slice(i));
            }
            Tensor::new(idx.len(), t.cols(), data)?
        }
        Op::SegmentSum(a, seg, n) => {
            let t = v(*a);
            if seg.len() != t.rows() {
                return Err(mismatch("segment_sum", t, &Tensor::zeros(seg.len(), t.cols())));
            }
            let c = t.cols();
            let mut out = Tensor::zeros(*n, c);
            for (r, &s) in seg.iter().enumerate() {
                if s >= *n {
                    return Err(AutodiffError::IndexOutOfRange {
                        op: "segment_sum",
                        index: s,
                        len: *n,
                    });
                }
                let src = t.row_slice(r);
                let dst = &mut out.data_mut()[s * c..(s + 1) * c];
                for (d, x) in dst.iter_mut().zip(src) {
                    *d += x;
                }
            }
            out
        }
        Op::SliceCols(a, start, len) => {
            let t = v(*a);
            if start + len > t.cols() {
                return Err(AutodiffError::IndexOutOfRange {
                    op: "slice_cols",
                    index: start + len,
                    len: t.cols(),
                });
            }
            let mut data = Vec::with_capacity(t.rows() * len);
            for r in 0..t.rows() {
                data.extend_from_slice(&t.row_slice(r)[*start..start + len]);
            }
            Tensor::new(t.rows(), *len, data)?
        }
        Op::PadCols(a, start, total) => {
            let t = v(*a);
            if start + t.cols() > *total {
                return Err(AutodiffError::IndexOutOfRange {
                    op: "pad_cols",
                    index: start + t.cols(),
                    len: *total,
                });
            }
            let mut out = Tensor::zeros(t.rows(), *total);
            for r in 0..t.rows() {
                out.data_mut()[r * total + start..r * total + start + t.cols()]
                    .copy_from_slice(t.row_slice(r));
            }
            out
        }
        Op::ConcatCols(ids) => {
            let rows = v(ids[0]).rows();
            let mut total = 0;
            for &id in ids.iter() {
                if v(id).rows() != rows {
                    return Err(mismatch("concat_cols", v(ids[0]), v(id)));
                }
                total += v(id).cols();
            }
            let mut data = Vec::with_capacity(rows * total);
            for r in 0..rows {
                for &id in ids.iter() {
                    data.extend_from_slice(v(id).row_slice(r));
                }
            }
            Tensor::new(rows, total, data)?
        }
        Op::Reshape(a, rows, cols) => {
            let t = v(*a);
            if rows * cols != t.len() {
                return Err(mismatch("reshape", t, &Tensor::zeros(*rows, *cols)));
            }
            Tensor::new(*rows, *cols, t.data().to_vec())?
        }
        Op::Exp(a) => v(*a).map(f64::exp),
        Op::Sin(a) => v(*a).map(f64::sin),
        Op::Cos(a) => v(*a).map(f64::cos),
        Op::Sigmoid(a) => v(*a).map(sigmoid),
        Op::Silu(a) => v(*a).map(|x| x * sigmoid(x)),
        Op::Powi(a, k) => v(*a).map(|x| x.powi(*k)),
        Op::SoftmaxRows(a) => {
            let t = v(*a);
            let mut out = t.clone();
            let c = t.cols();
            for r in 0..t.rows() {
                let row = &mut out.data_mut()[r * c..(r + 1) * c];
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for x in row.iter_mut() {
                    *x = (*x - max).exp();
                    total += *x;
                }
                for x in row.iter_mut() {
                    *x /= total;
                }
            }
            out
        }
        Op::NormRows(a, eps) => {
            let t = v(*a);
            let out: Vec<f64> = (0..t.rows())
                .map(|r| (t.row_slice(r).iter().map(|x| x * x).sum::<f64>() + eps).sqrt())
                .collect();
            Tensor::column(&out)
        }
    };
    if !out.is_finite() {
        return Err(AutodiffError::NonFinite { op: op.name() });
    }
    Ok(out)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push_leaf(&self, value: Arc<Tensor>, requires_grad: bool) -> Result<Var<'_>> {
        if !value.is_finite() {
            return Err(AutodiffError::NonFinite { op: "leaf" });
        }
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            op: if requires_grad { Op::Leaf } else { Op::Constant },
            value,
            requires_grad,
        });
        Ok(Var {
            tape: self,
            id: nodes.len() - 1,
        })
    }

    /// Differentiable input.
    pub fn leaf(&self, value: Tensor) -> Result<Var<'_>> {
        self.push_leaf(Arc::new(value), true)
    }

    /// Differentiable input sharing storage with the caller.
    pub fn leaf_shared(&self, value: Arc<Tensor>) -> Result<Var<'_>> {
        self.push_leaf(value, true)
    }

    /// Input excluded from differentiation.
    pub fn constant(&self, value: Tensor) -> Result<Var<'_>> {
        self.push_leaf(Arc::new(value), false)
    }

    pub fn constant_shared(&self, value: Arc<Tensor>) -> Result<Var<'_>> {
        self.push_leaf(value, false)
    }

    pub fn scalar(&self, value: f64) -> Result<Var<'_>> {
        self.constant(Tensor::scalar(value))
    }

    fn record(&self, op: Op) -> Result<Var<'_>> {
        let (value, requires_grad) = {
            let nodes = self.nodes.borrow();
            let value = eval(&op, &nodes)?;
            let rg = op.inputs().iter().any(|&i| nodes[i].requires_grad);
            (value, rg)
        };
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            op,
            value: Arc::new(value),
            requires_grad,
        });
        Ok(Var {
            tape: self,
            id: nodes.len() - 1,
        })
    }

    fn check_owner(&self, v: Var<'_>) -> Result<()> {
        if std::ptr::eq(self, v.tape) {
            Ok(())
        } else {
            Err(AutodiffError::ForeignNode)
        }
    }

    /// Replace the value of a leaf or constant. Call [`Tape::replay`] afterwards
    /// to propagate the change.
    pub fn set_value(&self, var: Var<'_>, value: Tensor) -> Result<()> {
        self.check_owner(var)?;
        let mut nodes = self.nodes.borrow_mut();
        let node = &mut nodes[var.id];
        match node.op {
            Op::Leaf | Op::Constant => {}
            _ => return Err(AutodiffError::NotALeaf),
        }
        if node.value.shape() != value.shape() {
            return Err(mismatch("set_value", &node.value, &value));
        }
        node.value = Arc::new(value);
        Ok(())
    }

    /// Re-executes every recorded operation in order from the current leaf
    /// values. Index lists and constants recorded with each op are reused.
    pub fn replay(&self) -> Result<()> {
        let mut nodes = self.nodes.borrow_mut();
        for id in 0..nodes.len() {
            if matches!(nodes[id].op, Op::Leaf | Op::Constant) {
                continue;
            }
            let value = eval(&nodes[id].op, &nodes[..id])?;
            nodes[id].value = Arc::new(value);
        }
        Ok(())
    }

    /// Gradients of a scalar `output` with respect to each of `wrt`.
    ///
    /// The returned vars live on this tape and can be differentiated again.
    /// Inputs that `output` does not depend on get a zero gradient.
    pub fn grad<'t>(&'t self, output: Var<'t>, wrt: &[Var<'t>]) -> Result<Vec<Var<'t>>> {
        self.check_owner(output)?;
        for w in wrt {
            self.check_owner(*w)?;
        }
        if output.shape() != [1, 1] {
            return Err(AutodiffError::NotScalar {
                shape: output.shape(),
            });
        }
        let n = output.id + 1;
        let mut grads: Vec<Option<Var<'t>>> = vec![None; n];
        grads[output.id] = Some(self.scalar(1.0)?);
        for id in (0..n).rev() {
            let Some(g) = grads[id] else { continue };
            let (op, requires_grad) = {
                let nodes = self.nodes.borrow();
                (nodes[id].op.clone(), nodes[id].requires_grad)
            };
            if !requires_grad || matches!(op, Op::Leaf | Op::Constant) {
                continue;
            }
            let out = Var { tape: self, id };
            for (input, contrib) in self.backward_rule(&op, out, g)? {
                grads[input] = Some(match grads[input] {
                    Some(existing) => existing.add(contrib)?,
                    None => contrib,
                });
            }
        }
        wrt.iter()
            .map(|w| match grads.get(w.id).copied().flatten() {
                Some(g) => Ok(g),
                None => {
                    let [r, c] = w.shape();
                    self.constant(Tensor::zeros(r, c))
                }
            })
            .collect()
    }

    fn requires_grad(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    fn var(&self, id: usize) -> Var<'_> {
        Var { tape: self, id }
    }

    /// Vector-Jacobian products of one primitive, expressed with primitives.
    fn backward_rule<'t>(&'t self, op: &Op, out: Var<'t>, g: Var<'t>) -> Result<Vec<(usize, Var<'t>)>> {
        let mut contribs = Vec::with_capacity(2);
        let needs = |id: usize| self.requires_grad(id);
        match op {
            Op::Leaf | Op::Constant => {}
            Op::Add(a, b) => {
                if needs(*a) {
                    contribs.push((*a, g));
                }
                if needs(*b) {
                    contribs.push((*b, g));
                }
            }
            Op::Sub(a, b) => {
                if needs(*a) {
                    contribs.push((*a, g));
                }
                if needs(*b) {
                    contribs.push((*b, g.scale(-1.0)?));
                }
            }
            Op::Mul(a, b) => {
                if needs(*a) {
                    contribs.push((*a, g.mul(self.var(*b))?));
                }
                if needs(*b) {
                    contribs.push((*b, g.mul(self.var(*a))?));
                }
            }
            Op::Div(a, b) => {
                let bv = self.var(*b);
                if needs(*a) {
                    contribs.push((*a, g.div(bv)?));
                }
                if needs(*b) {
                    contribs.push((*b, g.mul(out)?.div(bv)?.scale(-1.0)?));
                }
            }
            Op::Scale(a, s) => contribs.push((*a, g.scale(*s)?)),
            Op::AddScalar(a, _) => contribs.push((*a, g)),
            Op::MatMul(a, b) => {
                if needs(*a) {
                    contribs.push((*a, g.matmul(self.var(*b).transpose()?)?));
                }
                if needs(*b) {
                    contribs.push((*b, self.var(*a).transpose()?.matmul(g)?));
                }
            }
            Op::Transpose(a) => contribs.push((*a, g.transpose()?)),
            Op::SumRows(a) => {
                let r = self.var(*a).shape()[0];
                contribs.push((*a, g.broadcast_rows(r)?));
            }
            Op::SumCols(a) => {
                let c = self.var(*a).shape()[1];
                contribs.push((*a, g.broadcast_cols(c)?));
            }
            Op::BroadcastRows(a, _) => contribs.push((*a, g.sum_rows()?)),
            Op::BroadcastCols(a, _) => contribs.push((*a, g.sum_cols()?)),
            Op::Gather(a, idx) => {
                let n = self.var(*a).shape()[0];
                contribs.push((*a, g.segment_sum_shared(idx.clone(), n)?));
            }
            Op::SegmentSum(a, seg, _) => contribs.push((*a, g.gather_shared(seg.clone())?)),
            Op::SliceCols(a, start, _) => {
                let total = self.var(*a).shape()[1];
                contribs.push((*a, g.pad_cols(*start, total)?));
            }
            Op::PadCols(a, start, _) => {
                let len = self.var(*a).shape()[1];
                contribs.push((*a, g.slice_cols(*start, len)?));
            }
            Op::ConcatCols(ids) => {
                let mut start = 0;
                for &id in ids.iter() {
                    let len = self.var(id).shape()[1];
                    if needs(id) {
                        contribs.push((id, g.slice_cols(start, len)?));
                    }
                    start += len;
                }
            }
            Op::Reshape(a, _, _) => {
                let [r, c] = self.var(*a).shape();
                contribs.push((*a, g.reshape(r, c)?));
            }
            Op::Exp(_) => contribs.push((op.inputs()[0], g.mul(out)?)),
            Op::Sin(a) => contribs.push((*a, g.mul(self.var(*a).cos()?)?)),
            Op::Cos(a) => contribs.push((*a, g.mul(self.var(*a).sin()?)?.scale(-1.0)?)),
            Op::Sigmoid(a) => {
                // s (1 - s)
                let ds = out.mul(out.scale(-1.0)?.add_scalar(1.0)?)?;
                contribs.push((*a, g.mul(ds)?));
            }
            Op::Silu(a) => {
                let x = self.var(*a);
                let s = x.sigmoid()?;
                // s + x s (1 - s)
                let one_minus = s.scale(-1.0)?.add_scalar(1.0)?;
                let d = s.add(x.mul(s)?.mul(one_minus)?)?;
                contribs.push((*a, g.mul(d)?));
            }
            Op::Powi(a, k) => {
                if *k != 0 {
                    let d = self.var(*a).powi(k - 1)?.scale(*k as f64)?;
                    contribs.push((*a, g.mul(d)?));
                }
            }
            Op::SoftmaxRows(a) => {
                let c = out.shape()[1];
                let dot = g.mul(out)?.sum_cols()?.broadcast_cols(c)?;
                contribs.push((*a, out.mul(g.sub(dot)?)?));
            }
            Op::NormRows(a, _) => {
                let c = self.var(*a).shape()[1];
                let scaled = g.div(out)?.broadcast_cols(c)?;
                contribs.push((*a, scaled.mul(self.var(*a))?));
            }
        }
        Ok(contribs)
    }
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Arc<Tensor> {
        self.tape.nodes.borrow()[self.id].value.clone()
    }

    pub fn shape(&self) -> [usize; 2] {
        self.tape.nodes.borrow()[self.id].value.shape()
    }

    /// Value of a `1 x 1` node.
    pub fn item(&self) -> f64 {
        self.value().item()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.requires_grad(self.id)
    }

    fn binary(self, other: Var<'t>, make: fn(usize, usize) -> Op) -> Result<Var<'t>> {
        self.tape.check_owner(other)?;
        self.tape.record(make(self.id, other.id))
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, Op::Add)
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, Op::Sub)
    }

    /// Elementwise product.
    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, Op::Mul)
    }

    /// Elementwise quotient.
    pub fn div(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, Op::Div)
    }

    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, Op::MatMul)
    }

    pub fn scale(self, s: f64) -> Result<Var<'t>> {
        self.tape.record(Op::Scale(self.id, s))
    }

    pub fn neg(self) -> Result<Var<'t>> {
        self.scale(-1.0)
    }

    pub fn add_scalar(self, s: f64) -> Result<Var<'t>> {
        self.tape.record(Op::AddScalar(self.id, s))
    }

    pub fn transpose(self) -> Result<Var<'t>> {
        self.tape.record(Op::Transpose(self.id))
    }

    /// Column sums, `r x c -> 1 x c`.
    pub fn sum_rows(self) -> Result<Var<'t>> {
        self.tape.record(Op::SumRows(self.id))
    }

    /// Row sums, `r x c -> r x 1`.
    pub fn sum_cols(self) -> Result<Var<'t>> {
        self.tape.record(Op::SumCols(self.id))
    }

    /// Sum of every element as a `1 x 1` node.
    pub fn sum_all(self) -> Result<Var<'t>> {
        self.sum_rows()?.sum_cols()
    }

    pub fn broadcast_rows(self, n: usize) -> Result<Var<'t>> {
        self.tape.record(Op::BroadcastRows(self.id, n))
    }

    pub fn broadcast_cols(self, n: usize) -> Result<Var<'t>> {
        self.tape.record(Op::BroadcastCols(self.id, n))
    }

    /// Broadcast a `1 x 1` node to `rows x cols`.
    pub fn broadcast_scalar(self, rows: usize, cols: usize) -> Result<Var<'t>> {
        self.broadcast_rows(rows)?.broadcast_cols(cols)
    }

    /// Row gather: output row `k` is input row `index[k]`.
    pub fn gather(self, index: &[usize]) -> Result<Var<'t>> {
        self.gather_shared(Arc::from(index))
    }

    pub fn gather_shared(self, index: Arc<[usize]>) -> Result<Var<'t>> {
        self.tape.record(Op::Gather(self.id, index))
    }

    /// Scatter-add of rows: output row `s` sums input rows `k` with `segments[k] == s`.
    pub fn segment_sum(self, segments: &[usize], n: usize) -> Result<Var<'t>> {
        self.segment_sum_shared(Arc::from(segments), n)
    }

    pub fn segment_sum_shared(self, segments: Arc<[usize]>, n: usize) -> Result<Var<'t>> {
        self.tape.record(Op::SegmentSum(self.id, segments, n))
    }

    pub fn slice_cols(self, start: usize, len: usize) -> Result<Var<'t>> {
        self.tape.record(Op::SliceCols(self.id, start, len))
    }

    /// Zero-pad columns so that this node occupies `start..start+cols` of `total`.
    pub fn pad_cols(self, start: usize, total: usize) -> Result<Var<'t>> {
        self.tape.record(Op::PadCols(self.id, start, total))
    }

    pub fn reshape(self, rows: usize, cols: usize) -> Result<Var<'t>> {
        self.tape.record(Op::Reshape(self.id, rows, cols))
    }

    pub fn exp(self) -> Result<Var<'t>> {
        self.tape.record(Op::Exp(self.id))
    }

    pub fn sin(self) -> Result<Var<'t>> {
        self.tape.record(Op::Sin(self.id))
    }

    pub fn cos(self) -> Result<Var<'t>> {
        self.tape.record(Op::Cos(self.id))
    }

    pub fn sigmoid(self) -> Result<Var<'t>> {
        self.tape.record(Op::Sigmoid(self.id))
    }

    pub fn silu(self) -> Result<Var<'t>> {
        self.tape.record(Op::Silu(self.id))
    }

    pub fn powi(self, k: i32) -> Result<Var<'t>> {
        self.tape.record(Op::Powi(self.id, k))
    }

    pub fn softmax_rows(self) -> Result<Var<'t>> {
        self.tape.record(Op::SoftmaxRows(self.id))
    }

    /// Row-wise `sqrt(sum(x^2) + eps)`, `r x c -> r x 1`.
    pub fn norm_rows(self, eps: f64) -> Result<Var<'t>> {
        self.tape.record(Op::NormRows(self.id, eps))
    }

    /// Row-wise norm with the `SAFE_NORM_EPS` regulariser.
    pub fn safe_norm_rows(self) -> Result<Var<'t>> {
        self.norm_rows(super::SAFE_NORM_EPS)
    }
}

/// Concatenate along columns. All parts must share a row count.
pub fn concat_cols<'t>(parts: &[Var<'t>]) -> Result<Var<'t>> {
    let first = parts.first().ok_or(AutodiffError::Empty { op: "concat_cols" })?;
    let tape = first.tape;
    for p in parts {
        tape.check_owner(*p)?;
    }
    if parts.len() == 1 {
        return Ok(*first);
    }
    let ids: Arc<[usize]> = parts.iter().map(|p| p.id).collect();
    tape.record(Op::ConcatCols(ids))
}
