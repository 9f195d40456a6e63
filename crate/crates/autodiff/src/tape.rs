//! Define-by-run reverse-mode differentiation.
//!
//! Every operation appends a node to the [`Tape`] and returns a [`Var`]
//! handle. Nodes are stored in execution order, so the node list is already a
//! topological order of the forward graph; [`Tape::backward`] walks it in
//! reverse and pushes each node's gradient into its inputs exactly once.
//!
//! Shapes never broadcast implicitly. The few broadcasting forms that the
//! model needs ([`Tape::add_row`], [`Tape::scalar_mul`]) are separate ops.

use crate::{Result, Tensor, TensorError};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Unary {
    Sigmoid,
    Tanh,
    Exp,
    Log,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Binary {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatVec(Var, Var),
    Binary(Binary, Var, Var),
    Unary(Unary, Var),
    AddRow(Var, Var),
    ScalarMul(Var, Var),
    Affine { x: Var, scale: f64 },
    Softmax(Var),
    Concat { inputs: Vec<Var>, axis: usize },
    Slice { x: Var, start: usize },
    Row { table: Var, row: usize },
    Reshape(Var),
    Sum(Var),
    Mean(Var),
    Pick { x: Var, index: usize },
    ScatterAdd { x: Var, indices: Vec<usize> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Recording of one forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    backward_done: bool,
    backward_visits: usize,
}

fn mismatch(op: &'static str, left: &Tensor, right: &Tensor) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        left: left.shape().to_vec(),
        right: right.shape().to_vec(),
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, len: usize) -> &mut Vec<f64> {
    slot.get_or_insert_with(|| vec![0.0; len])
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Drops every recorded node so the tape can be reused for a new pass.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.grads.clear();
        self.backward_done = false;
        self.backward_visits = 0;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of ops whose backward rule ran during the last backward pass.
    pub fn backward_visits(&self) -> usize {
        self.backward_visits
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Records a leaf. Gradients are only propagated into leaves created with
    /// `requires_grad`.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn variable(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.node(v).value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.node(v).value.shape()
    }

    /// Gradient of the last backward root with respect to `v`, if any flowed.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// `[m×k]·[k×n] → [m×n]`
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (&self.node(a).value, &self.node(b).value);
        let (sa, sb) = (av.shape(), bv.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(mismatch("matmul", av, bv));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let (ad, bd) = (av.data(), bv.data());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let aip = ad[i * k + p];
                if aip == 0.0 {
                    continue;
                }
                let brow = &bd[p * n..(p + 1) * n];
                for (o, &b) in row.iter_mut().zip(brow) {
                    *o += aip * b;
                }
            }
        }
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b), rg))
    }

    /// `[m×k]·[k] → [m]`
    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var> {
        let (wv, xv) = (&self.node(w).value, &self.node(x).value);
        let (sw, sx) = (wv.shape(), xv.shape());
        if sw.len() != 2 || sx.len() != 1 || sw[1] != sx[0] {
            return Err(mismatch("matvec", wv, xv));
        }
        let (m, k) = (sw[0], sw[1]);
        let (wd, xd) = (wv.data(), xv.data());
        let out: Vec<f64> = (0..m)
            .map(|i| wd[i * k..(i + 1) * k].iter().zip(xd).map(|(a, b)| a * b).sum())
            .collect();
        let rg = self.rg(&[w, x]);
        Ok(self.push(Tensor::vector(out), Op::MatVec(w, x), rg))
    }

    pub fn binary(&mut self, op: Binary, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (&self.node(a).value, &self.node(b).value);
        if av.shape() != bv.shape() {
            let name = match op {
                Binary::Add => "add",
                Binary::Sub => "sub",
                Binary::Mul => "mul",
            };
            return Err(mismatch(name, av, bv));
        }
        let f: fn(f64, f64) -> f64 = match op {
            Binary::Add => |x, y| x + y,
            Binary::Sub => |x, y| x - y,
            Binary::Mul => |x, y| x * y,
        };
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::new(av.shape().to_vec(), data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, Op::Binary(op, a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Mul, a, b)
    }

    pub fn unary(&mut self, op: Unary, x: Var) -> Var {
        let xv = &self.node(x).value;
        let f: fn(f64) -> f64 = match op {
            Unary::Sigmoid => logistic,
            Unary::Tanh => f64::tanh,
            Unary::Exp => f64::exp,
            Unary::Log => f64::ln,
        };
        let data = xv.data().iter().map(|&v| f(v)).collect();
        let value = Tensor::new(xv.shape().to_vec(), data).expect("shape preserved");
        let rg = self.rg(&[x]);
        self.push(value, Op::Unary(op, x), rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(Unary::Sigmoid, x)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(Unary::Tanh, x)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(Unary::Exp, x)
    }

    pub fn ln(&mut self, x: Var) -> Var {
        self.unary(Unary::Log, x)
    }

    /// Adds the vector `v[n]` to every row of `m[r×n]`.
    pub fn add_row(&mut self, m: Var, v: Var) -> Result<Var> {
        let (mv, vv) = (&self.node(m).value, &self.node(v).value);
        let (sm, sv) = (mv.shape(), vv.shape());
        if sm.len() != 2 || sv.len() != 1 || sm[1] != sv[0] {
            return Err(mismatch("add_row", mv, vv));
        }
        let cols = sm[1];
        let vd = vv.data();
        let data = mv.data().iter().enumerate().map(|(i, &x)| x + vd[i % cols]).collect();
        let value = Tensor::new(sm.to_vec(), data)?;
        let rg = self.rg(&[m, v]);
        Ok(self.push(value, Op::AddRow(m, v), rg))
    }

    /// Multiplies every entry of `x` by the single-element tensor `s`.
    pub fn scalar_mul(&mut self, s: Var, x: Var) -> Result<Var> {
        let (sv, xv) = (&self.node(s).value, &self.node(x).value);
        if sv.len() != 1 {
            return Err(mismatch("scalar_mul", sv, xv));
        }
        let k = sv.data()[0];
        let data = xv.data().iter().map(|v| k * v).collect();
        let value = Tensor::new(xv.shape().to_vec(), data)?;
        let rg = self.rg(&[s, x]);
        Ok(self.push(value, Op::ScalarMul(s, x), rg))
    }

    /// `scale·x + shift` with constant coefficients.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let xv = &self.node(x).value;
        let data = xv.data().iter().map(|v| scale * v + shift).collect();
        let value = Tensor::new(xv.shape().to_vec(), data).expect("shape preserved");
        let rg = self.rg(&[x]);
        self.push(value, Op::Affine { x, scale }, rg)
    }

    /// Softmax over a vector, computed with max-subtraction.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let xv = &self.node(x).value;
        if xv.shape().len() != 1 {
            return Err(TensorError::InvalidShape {
                shape: xv.shape().to_vec(),
                len: xv.len(),
            });
        }
        let probs = softmax_values(xv.data())?;
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor::vector(probs), Op::Softmax(x), rg))
    }

    /// Concatenates along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = match inputs.first() {
            Some(v) => self.node(*v).value.shape().to_vec(),
            None => return Err(TensorError::Empty("concat")),
        };
        if axis >= first.len() {
            return Err(TensorError::InvalidAxis {
                axis,
                rank: first.len(),
            });
        }
        let mut out_shape = first.clone();
        out_shape[axis] = 0;
        for &v in inputs {
            let s = self.node(v).value.shape();
            let compatible =
                s.len() == first.len() && s.iter().zip(&first).enumerate().all(|(d, (a, b))| d == axis || a == b);
            if !compatible {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    left: first,
                    right: s.to_vec(),
                });
            }
            out_shape[axis] += s[axis];
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(out_shape.iter().product());
        for o in 0..outer {
            for &v in inputs {
                let t = &self.node(v).value;
                let chunk = t.shape()[axis] * inner;
                data.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let value = Tensor::new(out_shape, data)?;
        let rg = self.rg(inputs);
        Ok(self.push(
            value,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            rg,
        ))
    }

    /// Contiguous slice `x[start..start+len]` of a vector.
    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xv = &self.node(x).value;
        if xv.shape().len() != 1 || start + len > xv.len() {
            return Err(TensorError::IndexOutOfBounds {
                op: "slice",
                index: start + len,
                len: xv.len(),
            });
        }
        let value = Tensor::vector(xv.data()[start..start + len].to_vec());
        let rg = self.rg(&[x]);
        Ok(self.push(value, Op::Slice { x, start }, rg))
    }

    /// Row `row` of a matrix, as a vector. Used for embedding lookup.
    pub fn row(&mut self, table: Var, row: usize) -> Result<Var> {
        let tv = &self.node(table).value;
        if tv.shape().len() != 2 || row >= tv.shape()[0] {
            return Err(TensorError::IndexOutOfBounds {
                op: "row",
                index: row,
                len: tv.shape().first().copied().unwrap_or(0),
            });
        }
        let value = Tensor::vector(tv.row(row).to_vec());
        let rg = self.rg(&[table]);
        Ok(self.push(value, Op::Row { table, row }, rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let data = self.node(x).value.data().to_vec();
        let value = Tensor::new(shape.to_vec(), data)?;
        let rg = self.rg(&[x]);
        Ok(self.push(value, Op::Reshape(x), rg))
    }

    /// Stacks equally sized vectors into the rows of a matrix.
    pub fn stack(&mut self, rows: &[Var]) -> Result<Var> {
        let reshaped = rows
            .iter()
            .map(|&r| {
                let n = self.node(r).value.len();
                self.reshape(r, &[1, n])
            })
            .collect::<Result<Vec<_>>>()?;
        self.concat(&reshaped, 0)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.node(x).value.data().iter().sum();
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let xv = &self.node(x).value;
        if xv.is_empty() {
            return Err(TensorError::Empty("mean"));
        }
        let m = xv.data().iter().sum::<f64>() / xv.len() as f64;
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor::scalar(m), Op::Mean(x), rg))
    }

    /// Single entry `x[index]` of a flat tensor, as a scalar.
    pub fn pick(&mut self, x: Var, index: usize) -> Result<Var> {
        let xv = &self.node(x).value;
        let v = *xv.data().get(index).ok_or(TensorError::IndexOutOfBounds {
            op: "pick",
            index,
            len: xv.len(),
        })?;
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor::scalar(v), Op::Pick { x, index }, rg))
    }

    /// `out[indices[k]] += x[k]` into a zero vector of length `size`.
    /// Repeated indices accumulate.
    pub fn scatter_add(&mut self, x: Var, indices: &[usize], size: usize) -> Result<Var> {
        let xv = &self.node(x).value;
        if xv.shape().len() != 1 || xv.len() != indices.len() {
            return Err(TensorError::ShapeMismatch {
                op: "scatter_add",
                left: xv.shape().to_vec(),
                right: vec![indices.len()],
            });
        }
        let mut out = vec![0.0; size];
        for (&v, &i) in xv.data().iter().zip(indices) {
            if i >= size {
                return Err(TensorError::IndexOutOfBounds {
                    op: "scatter_add",
                    index: i,
                    len: size,
                });
            }
            out[i] += v;
        }
        let rg = self.rg(&[x]);
        Ok(self.push(
            Tensor::vector(out),
            Op::ScatterAdd {
                x,
                indices: indices.to_vec(),
            },
            rg,
        ))
    }

    /// Zero-extends a vector to length `size`.
    pub fn pad_to(&mut self, x: Var, size: usize) -> Result<Var> {
        let n = self.node(x).value.len();
        let indices: Vec<usize> = (0..n).collect();
        self.scatter_add(x, &indices, size)
    }

    /// Propagates d`root`/d`node` for every node on the tape. `root` must hold
    /// a single value. A tape may only be differentiated once between resets.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.backward_done {
            return Err(TensorError::BackwardTwice);
        }
        let root_value = &self.node(root).value;
        if root_value.len() != 1 {
            return Err(TensorError::NotScalar(root_value.shape().to_vec()));
        }
        self.backward_done = true;
        self.backward_visits = 0;
        self.grads = vec![None; self.nodes.len()];
        self.grads[root.0] = Some(vec![1.0]);

        for i in (0..=root.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            if !matches!(self.nodes[i].op, Op::Leaf) {
                self.backward_visits += 1;
                self.propagate(i, &g);
            }
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    fn propagate(&mut self, i: usize, g: &[f64]) {
        let nodes = &self.nodes;
        let grads = &mut self.grads;
        let val = |v: Var| &nodes[v.0].value;
        let wants = |v: Var| nodes[v.0].requires_grad;
        let out = &nodes[i].value;

        match &nodes[i].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                if wants(*a) {
                    let ga = accumulate(&mut grads[a.0], m * k);
                    let bd = bv.data();
                    for r in 0..m {
                        let grow = &g[r * n..(r + 1) * n];
                        for p in 0..k {
                            let brow = &bd[p * n..(p + 1) * n];
                            ga[r * k + p] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                        }
                    }
                }
                if wants(*b) {
                    let gb = accumulate(&mut grads[b.0], k * n);
                    let ad = av.data();
                    for r in 0..m {
                        let grow = &g[r * n..(r + 1) * n];
                        for p in 0..k {
                            let a = ad[r * k + p];
                            if a == 0.0 {
                                continue;
                            }
                            for (o, &gv) in gb[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                *o += a * gv;
                            }
                        }
                    }
                }
            }
            Op::MatVec(w, x) => {
                let (wv, xv) = (val(*w), val(*x));
                let (m, k) = (wv.shape()[0], wv.shape()[1]);
                if wants(*w) {
                    let gw = accumulate(&mut grads[w.0], m * k);
                    let xd = xv.data();
                    for (r, &gr) in g.iter().enumerate() {
                        if gr == 0.0 {
                            continue;
                        }
                        for (o, &xj) in gw[r * k..(r + 1) * k].iter_mut().zip(xd) {
                            *o += gr * xj;
                        }
                    }
                }
                if wants(*x) {
                    let gx = accumulate(&mut grads[x.0], k);
                    let wd = wv.data();
                    for (r, &gr) in g.iter().enumerate() {
                        if gr == 0.0 {
                            continue;
                        }
                        for (o, &wij) in gx.iter_mut().zip(&wd[r * k..(r + 1) * k]) {
                            *o += gr * wij;
                        }
                    }
                }
            }
            Op::Binary(op, a, b) => {
                let n = g.len();
                match op {
                    Binary::Add | Binary::Sub => {
                        if wants(*a) {
                            let ga = accumulate(&mut grads[a.0], n);
                            ga.iter_mut().zip(g).for_each(|(o, v)| *o += v);
                        }
                        if wants(*b) {
                            let sign = if *op == Binary::Add { 1.0 } else { -1.0 };
                            let gb = accumulate(&mut grads[b.0], n);
                            gb.iter_mut().zip(g).for_each(|(o, v)| *o += sign * v);
                        }
                    }
                    Binary::Mul => {
                        if wants(*a) {
                            let bd = val(*b).data();
                            let ga = accumulate(&mut grads[a.0], n);
                            for ((o, gv), y) in ga.iter_mut().zip(g).zip(bd) {
                                *o += gv * y;
                            }
                        }
                        if wants(*b) {
                            let ad = val(*a).data();
                            let gb = accumulate(&mut grads[b.0], n);
                            for ((o, gv), x) in gb.iter_mut().zip(g).zip(ad) {
                                *o += gv * x;
                            }
                        }
                    }
                }
            }
            Op::Unary(op, x) => {
                let xd = val(*x).data();
                let yd = out.data();
                let gx = accumulate(&mut grads[x.0], g.len());
                for k in 0..g.len() {
                    let local = match op {
                        Unary::Sigmoid => yd[k] * (1.0 - yd[k]),
                        Unary::Tanh => 1.0 - yd[k] * yd[k],
                        Unary::Exp => yd[k],
                        Unary::Log => 1.0 / xd[k],
                    };
                    gx[k] += g[k] * local;
                }
            }
            Op::AddRow(m, v) => {
                if wants(*m) {
                    let gm = accumulate(&mut grads[m.0], g.len());
                    gm.iter_mut().zip(g).for_each(|(o, x)| *o += x);
                }
                if wants(*v) {
                    let cols = val(*v).len();
                    let gv = accumulate(&mut grads[v.0], cols);
                    for (k, x) in g.iter().enumerate() {
                        gv[k % cols] += x;
                    }
                }
            }
            Op::ScalarMul(s, x) => {
                let k = val(*s).data()[0];
                if wants(*s) {
                    let dot: f64 = g.iter().zip(val(*x).data()).map(|(a, b)| a * b).sum();
                    accumulate(&mut grads[s.0], 1)[0] += dot;
                }
                if wants(*x) {
                    let gx = accumulate(&mut grads[x.0], g.len());
                    gx.iter_mut().zip(g).for_each(|(o, v)| *o += k * v);
                }
            }
            Op::Affine { x, scale } => {
                let gx = accumulate(&mut grads[x.0], g.len());
                gx.iter_mut().zip(g).for_each(|(o, v)| *o += scale * v);
            }
            Op::Softmax(x) => {
                let y = out.data();
                let dot: f64 = g.iter().zip(y).map(|(a, b)| a * b).sum();
                let gx = accumulate(&mut grads[x.0], g.len());
                for k in 0..g.len() {
                    gx[k] += y[k] * (g[k] - dot);
                }
            }
            Op::Concat { inputs, axis } => {
                let shape = out.shape();
                let outer: usize = shape[..*axis].iter().product();
                let inner: usize = shape[axis + 1..].iter().product();
                let row = shape[*axis] * inner;
                let mut offset = 0;
                for v in inputs {
                    let iv = val(*v);
                    let chunk = iv.shape()[*axis] * inner;
                    if wants(*v) {
                        let gv = accumulate(&mut grads[v.0], iv.len());
                        for o in 0..outer {
                            let src = &g[o * row + offset..o * row + offset + chunk];
                            for (d, s) in gv[o * chunk..(o + 1) * chunk].iter_mut().zip(src) {
                                *d += s;
                            }
                        }
                    }
                    offset += chunk;
                }
            }
            Op::Slice { x, start } => {
                let n = val(*x).len();
                let gx = accumulate(&mut grads[x.0], n);
                for (o, v) in gx[*start..*start + g.len()].iter_mut().zip(g) {
                    *o += v;
                }
            }
            Op::Row { table, row } => {
                let tv = val(*table);
                let cols = tv.shape()[1];
                let gt = accumulate(&mut grads[table.0], tv.len());
                for (o, v) in gt[row * cols..(row + 1) * cols].iter_mut().zip(g) {
                    *o += v;
                }
            }
            Op::Reshape(x) => {
                let gx = accumulate(&mut grads[x.0], g.len());
                gx.iter_mut().zip(g).for_each(|(o, v)| *o += v);
            }
            Op::Sum(x) => {
                let n = val(*x).len();
                accumulate(&mut grads[x.0], n).iter_mut().for_each(|o| *o += g[0]);
            }
            Op::Mean(x) => {
                let n = val(*x).len();
                let share = g[0] / n as f64;
                accumulate(&mut grads[x.0], n).iter_mut().for_each(|o| *o += share);
            }
            Op::Pick { x, index } => {
                let n = val(*x).len();
                accumulate(&mut grads[x.0], n)[*index] += g[0];
            }
            Op::ScatterAdd { x, indices } => {
                let gx = accumulate(&mut grads[x.0], indices.len());
                for (o, &i) in gx.iter_mut().zip(indices) {
                    *o += g[i];
                }
            }
        }
    }
}

/// Logistic function, evaluated so that large negative inputs do not overflow.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax of a non-empty slice.
pub fn softmax_values(x: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(TensorError::Empty("softmax"));
    }
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / z).collect())
}
