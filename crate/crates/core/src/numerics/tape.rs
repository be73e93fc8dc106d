//! Reverse-mode differentiation over whole tensors.
//!
//! Every operation on a [`Var`] appends a node to its [`Tape`]. Nodes are only
//! ever appended, so index order is a topological order and the reverse sweep in
//! [`Tape::backward`] simply walks the node list backwards, accumulating into
//! each input's gradient slot.

use std::cell::RefCell;

use crate::error::{shape_err, Error, Result};
use crate::numerics::tensor::{sigmoid, silu, Tensor};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    MatMul(usize, usize),
    Transpose(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    Scale(usize, T),
    ConcatCols(Vec<usize>),
    ConcatRows(Vec<usize>),
    GatherRows(usize, Vec<usize>),
    ScatterAddRows(usize, Vec<usize>),
    ScaleRows(usize, Vec<T>),
    Silu(usize),
    Sigmoid(usize),
    Exp(usize),
    Log(usize),
    Abs(usize),
    SoftmaxRows(usize),
    L2NormalizeRows(usize, Vec<T>),
    Bilinear {
        hi: usize,
        w: usize,
        hj: usize,
        b: usize,
    },
    CrossEntropy {
        logits: usize,
        targets: Vec<usize>,
        weights: Vec<T>,
        excluded: Vec<Option<usize>>,
        probs: Tensor<T>,
    },
    SumAll(usize),
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Transpose(..) => "transpose",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddRow(..) => "add_row",
            Op::Scale(..) => "scale",
            Op::ConcatCols(..) => "concat_cols",
            Op::ConcatRows(..) => "concat_rows",
            Op::GatherRows(..) => "gather_rows",
            Op::ScatterAddRows(..) => "scatter_add_rows",
            Op::ScaleRows(..) => "scale_rows",
            Op::Silu(..) => "silu",
            Op::Sigmoid(..) => "sigmoid",
            Op::Exp(..) => "exp",
            Op::Log(..) => "log",
            Op::Abs(..) => "abs",
            Op::SoftmaxRows(..) => "softmax_rows",
            Op::L2NormalizeRows(..) => "l2_normalize_rows",
            Op::Bilinear { .. } => "bilinear",
            Op::CrossEntropy { .. } => "cross_entropy",
            Op::SumAll(..) => "sum",
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Records operations for a single forward pass. Single-threaded; build one
/// tape per loss evaluation.
pub struct Tape<T> {
    nodes: RefCell<Vec<Node<T>>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Handle to a value recorded on a tape.
#[derive(Clone, Copy)]
pub struct Var<'t, T: Scalar> {
    tape: &'t Tape<T>,
    id: usize,
}

/// Gradients from one reverse sweep, indexed by the [`Var`] they belong to.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
    shapes: Vec<Vec<usize>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of the loss w.r.t. `var`; zeros if the loss does not depend on it.
    pub fn get(&self, var: Var<'_, T>) -> Tensor<T> {
        match &self.grads[var.id] {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[var.id]),
        }
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Leaf whose gradient is wanted.
    pub fn param(&self, value: Tensor<T>) -> Var<'_, T> {
        self.leaf(value, true)
    }

    /// Leaf treated as a constant: no gradient flows into it.
    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.leaf(value, false)
    }

    fn leaf(&self, value: Tensor<T>, needs_grad: bool) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn push(&self, value: Tensor<T>, op: Op<T>, inputs: &[usize]) -> Result<Var<'_, T>> {
        if !value.is_finite() {
            return Err(Error::Numerics(format!(
                "non-finite value produced by {}",
                op.name()
            )));
        }
        let mut nodes = self.nodes.borrow_mut();
        let needs_grad = inputs.iter().any(|&i| nodes[i].needs_grad);
        nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Ok(Var {
            tape: self,
            id: nodes.len() - 1,
        })
    }

    fn value_of(&self, id: usize) -> std::cell::Ref<'_, Tensor<T>> {
        std::cell::Ref::map(self.nodes.borrow(), |n| &n[id].value)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var<'_, T>) -> Result<Gradients<T>> {
        let nodes = self.nodes.borrow();
        let seed_shape = nodes[loss.id].value.shape().to_vec();
        if nodes[loss.id].value.len() != 1 {
            return Err(shape_err!(
                "backward needs a scalar loss, got {seed_shape:?}"
            ));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; nodes.len()];
        grads[loss.id] = Some(Tensor::filled(&seed_shape, T::one()));

        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if !node.needs_grad {
                grads[id] = Some(g);
                continue;
            }
            if !g.is_finite() {
                return Err(Error::Numerics(format!(
                    "non-finite gradient flowing into {}",
                    node.op.name()
                )));
            }
            let val = |i: usize| &nodes[i].value;
            let mut acc = |i: usize, contribution: Tensor<T>| -> Result<()> {
                if !nodes[i].needs_grad {
                    return Ok(());
                }
                match &mut grads[i] {
                    Some(existing) => existing.add_assign(&contribution),
                    slot @ None => {
                        *slot = Some(contribution);
                        Ok(())
                    }
                }
            };
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    acc(*a, g.matmul(&val(*b).transpose()?)?)?;
                    acc(*b, val(*a).transpose()?.matmul(&g)?)?;
                }
                Op::Transpose(a) => acc(*a, g.transpose()?)?,
                Op::Add(a, b) => {
                    acc(*a, g.clone())?;
                    acc(*b, g.clone())?;
                }
                Op::Sub(a, b) => {
                    acc(*a, g.clone())?;
                    acc(*b, g.scale(-T::one()))?;
                }
                Op::Mul(a, b) => {
                    acc(*a, g.mul(val(*b))?)?;
                    acc(*b, g.mul(val(*a))?)?;
                }
                Op::AddRow(a, b) => {
                    acc(*a, g.clone())?;
                    acc(*b, g.sum_rows()?)?;
                }
                Op::Scale(a, c) => acc(*a, g.scale(*c))?,
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let w = val(p).cols();
                        acc(p, g.slice_cols(start, w)?)?;
                        start += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let r = val(p).rows();
                        acc(p, g.slice_rows(start, r)?)?;
                        start += r;
                    }
                }
                Op::GatherRows(a, index) => {
                    acc(*a, g.scatter_add_rows(index, val(*a).rows())?)?;
                }
                Op::ScatterAddRows(a, index) => acc(*a, g.gather_rows(index)?)?,
                Op::ScaleRows(a, factors) => acc(*a, g.scale_rows(factors)?)?,
                Op::Silu(a) => {
                    let d = val(*a).map(|x| {
                        let s = sigmoid(x);
                        s * (T::one() + x * (T::one() - s))
                    });
                    acc(*a, g.mul(&d)?)?;
                }
                Op::Sigmoid(a) => {
                    let d = node.value.map(|s| s * (T::one() - s));
                    acc(*a, g.mul(&d)?)?;
                }
                Op::Exp(a) => acc(*a, g.mul(&node.value)?)?,
                Op::Log(a) => acc(*a, g.zip_map(val(*a), "log'", |gv, x| gv / x)?)?,
                Op::Abs(a) => acc(
                    *a,
                    g.zip_map(val(*a), "abs'", |gv, x| {
                        if x > T::zero() {
                            gv
                        } else if x < T::zero() {
                            -gv
                        } else {
                            T::zero()
                        }
                    })?,
                )?,
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let n = y.cols().max(1);
                    let mut dx = g.mul(y)?;
                    for (r, row) in dx.data_mut().chunks_mut(n).enumerate() {
                        let dot: T = row.iter().copied().sum();
                        for (c, v) in row.iter_mut().enumerate() {
                            *v -= y.data()[r * n + c] * dot;
                        }
                    }
                    acc(*a, dx)?;
                }
                Op::L2NormalizeRows(a, divisors) => {
                    let x = val(*a);
                    let y = &node.value;
                    let n = y.cols().max(1);
                    let eps_rows: Vec<bool> = {
                        let norms = x.row_divisors(T::zero())?;
                        norms.iter().zip(divisors).map(|(nr, d)| nr != d).collect()
                    };
                    let mut dx = g.clone();
                    for (r, row) in dx.data_mut().chunks_mut(n).enumerate() {
                        let d = divisors[r];
                        if eps_rows[r] {
                            for v in row.iter_mut() {
                                *v /= d;
                            }
                            continue;
                        }
                        let yr = &y.data()[r * n..(r + 1) * n];
                        let dot: T = row.iter().zip(yr).map(|(&gv, &yv)| gv * yv).sum();
                        for (v, &yv) in row.iter_mut().zip(yr) {
                            *v = (*v - yv * dot) / d;
                        }
                    }
                    acc(*a, dx)?;
                }
                Op::Bilinear { hi, w, hj, b } => {
                    let (hiv, wv, hjv) = (val(*hi), val(*w), val(*hj));
                    let (p, d) = hiv.dims2()?;
                    let d2 = hjv.cols();
                    let k = wv.shape()[1];
                    let mut dhi = vec![T::zero(); p * d];
                    let mut dhj = vec![T::zero(); p * d2];
                    let mut dw = vec![T::zero(); wv.len()];
                    for r in 0..p {
                        let x = &hiv.data()[r * d..(r + 1) * d];
                        let y = &hjv.data()[r * d2..(r + 1) * d2];
                        for c in 0..k {
                            let gk = g.data()[r * k + c];
                            if gk == T::zero() {
                                continue;
                            }
                            for a in 0..d {
                                let off = (a * k + c) * d2;
                                let wrow = &wv.data()[off..off + d2];
                                let mut inner = T::zero();
                                for bb in 0..d2 {
                                    inner += wrow[bb] * y[bb];
                                    dhj[r * d2 + bb] += gk * x[a] * wrow[bb];
                                    dw[off + bb] += gk * x[a] * y[bb];
                                }
                                dhi[r * d + a] += gk * inner;
                            }
                        }
                    }
                    acc(*hi, Tensor::matrix(p, d, dhi)?)?;
                    acc(*hj, Tensor::matrix(p, d2, dhj)?)?;
                    acc(*w, Tensor::new(wv.shape().to_vec(), dw)?)?;
                    acc(*b, g.sum_rows()?)?;
                }
                Op::CrossEntropy {
                    logits,
                    targets,
                    weights,
                    excluded,
                    probs,
                } => {
                    let upstream = g.item()?;
                    let total: T = weights.iter().copied().sum();
                    let n = probs.cols();
                    let mut dl = probs.clone();
                    for (r, row) in dl.data_mut().chunks_mut(n).enumerate() {
                        let coef = upstream * weights[r] / total;
                        row[targets[r]] -= T::one();
                        for v in row.iter_mut() {
                            *v *= coef;
                        }
                        if let Some(x) = excluded[r] {
                            row[x] = T::zero();
                        }
                    }
                    acc(*logits, dl)?;
                }
                Op::SumAll(a) => {
                    let s = g.item()?;
                    acc(*a, Tensor::filled(val(*a).shape(), s))?;
                }
            }
            grads[id] = Some(g);
        }

        let shapes = nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        // Constants never receive gradients.
        for (slot, node) in grads.iter_mut().zip(nodes.iter()) {
            if !node.needs_grad {
                *slot = None;
            }
        }
        Ok(Gradients { grads, shapes })
    }
}

impl<'t, T: Scalar> Var<'t, T> {
    pub fn value(&self) -> Tensor<T> {
        self.tape.value_of(self.id).clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.value_of(self.id).shape().to_vec()
    }

    /// Value of a one-element var.
    pub fn item(&self) -> Result<T> {
        self.tape.value_of(self.id).item()
    }

    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    fn unary(self, op: Op<T>, f: impl FnOnce(&Tensor<T>) -> Result<Tensor<T>>) -> Result<Self> {
        let out = f(&self.tape.value_of(self.id))?;
        self.tape.push(out, op, &[self.id])
    }

    fn binary(
        self,
        other: Self,
        op: Op<T>,
        f: impl FnOnce(&Tensor<T>, &Tensor<T>) -> Result<Tensor<T>>,
    ) -> Result<Self> {
        let out = {
            let a = self.tape.value_of(self.id);
            let b = self.tape.value_of(other.id);
            f(&a, &b)?
        };
        self.tape.push(out, op, &[self.id, other.id])
    }

    pub fn matmul(self, other: Self) -> Result<Self> {
        self.binary(other, Op::MatMul(self.id, other.id), |a, b| a.matmul(b))
    }

    pub fn transpose(self) -> Result<Self> {
        self.unary(Op::Transpose(self.id), |a| a.transpose())
    }

    #[allow(clippy::should_implement_trait)]
    pub fn add(self, other: Self) -> Result<Self> {
        self.binary(other, Op::Add(self.id, other.id), |a, b| a.add(b))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn sub(self, other: Self) -> Result<Self> {
        self.binary(other, Op::Sub(self.id, other.id), |a, b| a.sub(b))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn mul(self, other: Self) -> Result<Self> {
        self.binary(other, Op::Mul(self.id, other.id), |a, b| a.mul(b))
    }

    /// Adds a bias vector to every row.
    pub fn add_row(self, bias: Self) -> Result<Self> {
        self.binary(bias, Op::AddRow(self.id, bias.id), |a, b| a.add_row(b))
    }

    pub fn scale(self, c: T) -> Result<Self> {
        self.unary(Op::Scale(self.id, c), |a| Ok(a.scale(c)))
    }

    pub fn concat_cols(parts: &[Self]) -> Result<Self> {
        let Some(first) = parts.first() else {
            return Err(shape_err!("concat_cols of nothing"));
        };
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        let out = {
            let vals: Vec<_> = ids.iter().map(|&i| first.tape.value_of(i)).collect();
            let refs: Vec<&Tensor<T>> = vals.iter().map(|v| &**v).collect();
            Tensor::concat_cols(&refs)?
        };
        first.tape.push(out, Op::ConcatCols(ids.clone()), &ids)
    }

    pub fn concat_rows(parts: &[Self]) -> Result<Self> {
        let Some(first) = parts.first() else {
            return Err(shape_err!("concat_rows of nothing"));
        };
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        let out = {
            let vals: Vec<_> = ids.iter().map(|&i| first.tape.value_of(i)).collect();
            let refs: Vec<&Tensor<T>> = vals.iter().map(|v| &**v).collect();
            Tensor::concat_rows(&refs)?
        };
        first.tape.push(out, Op::ConcatRows(ids.clone()), &ids)
    }

    pub fn gather_rows(self, index: &[usize]) -> Result<Self> {
        self.unary(Op::GatherRows(self.id, index.to_vec()), |a| {
            a.gather_rows(index)
        })
    }

    pub fn scatter_add_rows(self, index: &[usize], out_rows: usize) -> Result<Self> {
        self.unary(Op::ScatterAddRows(self.id, index.to_vec()), |a| {
            a.scatter_add_rows(index, out_rows)
        })
    }

    /// Multiplies row `r` by the constant `factors[r]`.
    pub fn scale_rows(self, factors: &[T]) -> Result<Self> {
        self.unary(Op::ScaleRows(self.id, factors.to_vec()), |a| {
            a.scale_rows(factors)
        })
    }

    /// Mean of rows within each segment; `segment[r]` names the output row.
    pub fn segment_mean(self, segment: &[usize], segments: usize) -> Result<Self> {
        let mut counts = vec![0usize; segments];
        for &s in segment {
            if s >= segments {
                return Err(shape_err!("segment id {s} out of {segments}"));
            }
            counts[s] += 1;
        }
        if let Some(empty) = counts.iter().position(|&c| c == 0) {
            return Err(shape_err!("segment {empty} has no rows"));
        }
        let inv: Vec<T> = counts.iter().map(|&c| T::one() / T::of_usize(c)).collect();
        self.scatter_add_rows(segment, segments)?.scale_rows(&inv)
    }

    pub fn silu(self) -> Result<Self> {
        self.unary(Op::Silu(self.id), |a| Ok(a.map(silu)))
    }

    pub fn sigmoid(self) -> Result<Self> {
        self.unary(Op::Sigmoid(self.id), |a| Ok(a.map(sigmoid)))
    }

    pub fn exp(self) -> Result<Self> {
        self.unary(Op::Exp(self.id), |a| Ok(a.map(|x| x.exp())))
    }

    pub fn ln(self) -> Result<Self> {
        self.unary(Op::Log(self.id), |a| Ok(a.map(|x| x.ln())))
    }

    pub fn abs(self) -> Result<Self> {
        self.unary(Op::Abs(self.id), |a| Ok(a.map(|x| x.abs())))
    }

    pub fn softmax_rows(self) -> Result<Self> {
        self.unary(Op::SoftmaxRows(self.id), |a| a.softmax_rows())
    }

    /// Divides each row by its L2 norm, or by `eps` when the norm is below it.
    pub fn l2_normalize_rows(self, eps: T) -> Result<Self> {
        let divisors = self.tape.value_of(self.id).row_divisors(eps)?;
        self.unary(Op::L2NormalizeRows(self.id, divisors), |a| {
            a.l2_normalize_rows(eps)
        })
    }

    /// `out[p, k] = self[p]ᵀ W[:, k, :] other[p] + b[k]`.
    pub fn bilinear(self, w: Self, other: Self, b: Self) -> Result<Self> {
        let out = {
            let hi = self.tape.value_of(self.id);
            let wv = self.tape.value_of(w.id);
            let hj = self.tape.value_of(other.id);
            let bv = self.tape.value_of(b.id);
            Tensor::bilinear(&hi, &wv, &hj, &bv)?
        };
        self.tape.push(
            out,
            Op::Bilinear {
                hi: self.id,
                w: w.id,
                hj: other.id,
                b: b.id,
            },
            &[self.id, w.id, other.id, b.id],
        )
    }

    /// Weighted mean cross-entropy of row-wise softmax over logits:
    /// `Σ_r w_r · (−log softmax(row_r)[t_r]) / Σ_r w_r`.
    ///
    /// `excluded[r]`, when set, removes that column from row `r`'s softmax
    /// (used to drop the anchor itself from contrastive denominators).
    pub fn cross_entropy(
        self,
        targets: &[usize],
        weights: &[T],
        excluded: Option<&[Option<usize>]>,
    ) -> Result<Self> {
        let (value, probs) = {
            let logits = self.tape.value_of(self.id);
            let (m, n) = logits.dims2()?;
            if targets.len() != m || weights.len() != m {
                return Err(shape_err!(
                    "cross_entropy: {m} rows, {} targets, {} weights",
                    targets.len(),
                    weights.len()
                ));
            }
            if let Some(ex) = excluded {
                if ex.len() != m {
                    return Err(shape_err!(
                        "cross_entropy: {} exclusions for {m} rows",
                        ex.len()
                    ));
                }
            }
            let total: T = weights.iter().copied().sum();
            if m == 0 || total <= T::zero() {
                return Err(Error::Validation(
                    "cross_entropy needs at least one row with positive weight".into(),
                ));
            }
            let mut probs = logits.clone();
            let mut loss = T::zero();
            for (r, row) in probs.data_mut().chunks_mut(n.max(1)).enumerate() {
                let skip = excluded.and_then(|ex| ex[r]);
                let t = targets[r];
                if t >= n || skip == Some(t) {
                    return Err(shape_err!("cross_entropy: bad target {t} in row {r}"));
                }
                let max = row
                    .iter()
                    .enumerate()
                    .filter(|&(c, _)| Some(c) != skip)
                    .fold(T::neg_infinity(), |a, (_, &b)| a.max(b));
                let mut sum = T::zero();
                for (c, v) in row.iter_mut().enumerate() {
                    if Some(c) == skip {
                        *v = T::zero();
                    } else {
                        *v = (*v - max).exp();
                        sum += *v;
                    }
                }
                let target_logit = logits.data()[r * n + t];
                loss += weights[r] * (max + sum.ln() - target_logit);
                for v in row.iter_mut() {
                    *v /= sum;
                }
            }
            (loss / total, probs)
        };
        self.tape.push(
            Tensor::scalar(value),
            Op::CrossEntropy {
                logits: self.id,
                targets: targets.to_vec(),
                weights: weights.to_vec(),
                excluded: excluded
                    .map(|e| e.to_vec())
                    .unwrap_or_else(|| vec![None; targets.len()]),
                probs,
            },
            &[self.id],
        )
    }

    pub fn sum(self) -> Result<Self> {
        self.unary(Op::SumAll(self.id), |a| Ok(Tensor::scalar(a.sum())))
    }

    pub fn mean(self) -> Result<Self> {
        let n = self.tape.value_of(self.id).len();
        if n == 0 {
            return Err(shape_err!("mean of an empty tensor"));
        }
        self.sum()?.scale(T::one() / T::of_usize(n))
    }
}
