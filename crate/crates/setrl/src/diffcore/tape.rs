//! Arena-based reverse-mode tape.
//!
//! Values live in one flat `f64` buffer. Every node references only nodes
//! recorded before it, so the node list is already a topological order and
//! backward is a single reverse sweep. `reset` keeps the allocations, so a
//! training loop can rebuild its graph every minibatch without churn.

use super::tensor::Tensor;
use super::DiffError;

/// Shape of a tape value. Scalars are distinct from length-1 vectors so the
/// backward contract ("loss must be scalar") is checkable.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Shape {
    Scalar,
    Vector(usize),
    Matrix(usize, usize),
}

impl Shape {
    pub fn len(self) -> usize {
        match self {
            Shape::Scalar => 1,
            Shape::Vector(n) => n,
            Shape::Matrix(r, c) => r * c,
        }
    }

    pub fn rank(self) -> usize {
        match self {
            Shape::Scalar => 0,
            Shape::Vector(_) => 1,
            Shape::Matrix(..) => 2,
        }
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Shape::Scalar => write!(f, "scalar"),
            Shape::Vector(n) => write!(f, "vec({n})"),
            Shape::Matrix(r, c) => write!(f, "mat({r},{c})"),
        }
    }
}

/// Handle to a recorded value.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct ValueId(u32);

impl ValueId {
    fn idx(self) -> usize {
        self.0 as usize
    }
}

enum Op {
    Leaf,
    /// weights (r×c) · x (c) + bias (r)
    Affine {
        w: ValueId,
        b: ValueId,
        x: ValueId,
    },
    Tanh {
        x: ValueId,
    },
    /// Max-subtracted softmax over a vector.
    Softmax {
        x: ValueId,
    },
    ReduceSum {
        x: ValueId,
        axis: usize,
    },
    Concat {
        parts: Box<[ValueId]>,
    },
    StackRows {
        rows: Box<[ValueId]>,
    },
    /// Row i of x scaled by w[i].
    ScaleRows {
        x: ValueId,
        w: ValueId,
    },
    Add {
        a: ValueId,
        b: ValueId,
    },
    Sub {
        a: ValueId,
        b: ValueId,
    },
    Mul {
        a: ValueId,
        b: ValueId,
    },
    Div {
        a: ValueId,
        b: ValueId,
    },
    /// Elementwise min; gradient follows the smaller argument (a on ties).
    MinPair {
        a: ValueId,
        b: ValueId,
    },
    Exp {
        x: ValueId,
    },
    Scale {
        x: ValueId,
        c: f64,
    },
    /// Constant shift; the constant itself is not stored because its
    /// gradient contribution is identity.
    AddConst {
        x: ValueId,
    },
    /// Gradient passes only strictly inside (lo, hi).
    Clamp {
        x: ValueId,
        lo: f64,
        hi: f64,
    },
    SumAll {
        x: ValueId,
    },
    MeanAll {
        x: ValueId,
    },
    Pick {
        x: ValueId,
        idx: usize,
    },
}

struct Node {
    op: Op,
    shape: Shape,
    off: usize,
}

/// The recording arena. One `Tape` is a single-writer unit; rollouts that
/// only need values evaluate parameters directly without a tape.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    vals: Vec<f64>,
    grads: Vec<f64>,
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Clears the graph, keeping buffer capacity.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.vals.clear();
        self.grads.clear();
    }

    pub fn shape(&self, id: ValueId) -> Shape {
        self.nodes[id.idx()].shape
    }

    /// Value slice of a node.
    pub fn val(&self, id: ValueId) -> &[f64] {
        let n = &self.nodes[id.idx()];
        &self.vals[n.off..n.off + n.shape.len()]
    }

    /// Value of a scalar node.
    pub fn val_scalar(&self, id: ValueId) -> f64 {
        let n = &self.nodes[id.idx()];
        debug_assert_eq!(n.shape, Shape::Scalar);
        self.vals[n.off]
    }

    /// Gradient slice of a node. Valid after `backward`.
    pub fn grad(&self, id: ValueId) -> &[f64] {
        let n = &self.nodes[id.idx()];
        &self.grads[n.off..n.off + n.shape.len()]
    }

    fn push(&mut self, op: Op, shape: Shape) -> ValueId {
        let off = self.vals.len();
        self.vals.resize(off + shape.len(), 0.0);
        self.nodes.push(Node { op, shape, off });
        ValueId((self.nodes.len() - 1) as u32)
    }

    fn out(&mut self, id: ValueId) -> &mut [f64] {
        let n = &self.nodes[id.idx()];
        let (off, len) = (n.off, n.shape.len());
        &mut self.vals[off..off + len]
    }

    // ----- leaves -----

    /// Records a rank-1 or rank-2 tensor as a leaf.
    pub fn leaf(&mut self, t: &Tensor) -> ValueId {
        let shape = match t.shape() {
            [n] => Shape::Vector(*n),
            [r, c] => Shape::Matrix(*r, *c),
            s => panic!("tape leaves are rank 1 or 2, got {s:?}"),
        };
        let id = self.push(Op::Leaf, shape);
        self.out(id).copy_from_slice(t.values());
        id
    }

    pub fn leaf_slice(&mut self, v: &[f64]) -> ValueId {
        let id = self.push(Op::Leaf, Shape::Vector(v.len()));
        self.out(id).copy_from_slice(v);
        id
    }

    pub fn leaf_scalar(&mut self, v: f64) -> ValueId {
        let id = self.push(Op::Leaf, Shape::Scalar);
        self.out(id)[0] = v;
        id
    }

    // ----- primitive operations -----

    /// output[i] = Σ_j w[i][j]·x[j] + b[i]
    pub fn affine(&mut self, w: ValueId, b: ValueId, x: ValueId) -> Result<ValueId, DiffError> {
        let (ws, bs, xs) = (self.shape(w), self.shape(b), self.shape(x));
        let (r, c) = match ws {
            Shape::Matrix(r, c) => (r, c),
            other => {
                return Err(DiffError::ShapeMismatch {
                    op: "affine",
                    expected: "rank-2 weights".into(),
                    got: other.to_string(),
                })
            }
        };
        if bs != Shape::Vector(r) || xs != Shape::Vector(c) {
            return Err(DiffError::ShapeMismatch {
                op: "affine",
                expected: format!("weights {ws}, bias vec({r}), input vec({c})"),
                got: format!("bias {bs}, input {xs}"),
            });
        }
        let id = self.push(Op::Affine { w, b, x }, Shape::Vector(r));
        let (wo, bo, xo) = (
            self.nodes[w.idx()].off,
            self.nodes[b.idx()].off,
            self.nodes[x.idx()].off,
        );
        let oo = self.nodes[id.idx()].off;
        for i in 0..r {
            let row = &self.vals[wo + i * c..wo + (i + 1) * c];
            let mut acc = 0.0;
            for j in 0..c {
                acc += row[j] * self.vals[xo + j];
            }
            self.vals[oo + i] = acc + self.vals[bo + i];
        }
        Ok(id)
    }

    pub fn tanh(&mut self, x: ValueId) -> ValueId {
        let id = self.push(Op::Tanh { x }, self.shape(x));
        let (xo, oo, n) = self.unary_offsets(x, id);
        for i in 0..n {
            self.vals[oo + i] = self.vals[xo + i].tanh();
        }
        id
    }

    /// Max-subtracted softmax over a vector. The shift by the maximum keeps
    /// exp in range and is order-free, so permutation invariance survives.
    pub fn softmax(&mut self, x: ValueId) -> Result<ValueId, DiffError> {
        let n = match self.shape(x) {
            Shape::Vector(n) if n > 0 => n,
            Shape::Vector(_) => return Err(DiffError::EmptyInput { op: "softmax" }),
            other => {
                return Err(DiffError::ShapeMismatch {
                    op: "softmax",
                    expected: "vector".into(),
                    got: other.to_string(),
                })
            }
        };
        let id = self.push(Op::Softmax { x }, Shape::Vector(n));
        let (xo, oo, _) = self.unary_offsets(x, id);
        let max = self.vals[xo..xo + n]
            .iter()
            .fold(f64::NEG_INFINITY, |a, &v| a.max(v));
        let mut total = 0.0;
        for i in 0..n {
            let e = (self.vals[xo + i] - max).exp();
            self.vals[oo + i] = e;
            total += e;
        }
        for i in 0..n {
            self.vals[oo + i] /= total;
        }
        Ok(id)
    }

    /// Sums along `axis`. For a vector, axis 0 yields a scalar; for a
    /// matrix, axis 0 sums over rows (leaving columns) and axis 1 over
    /// columns (leaving rows).
    pub fn reduce_sum(&mut self, x: ValueId, axis: usize) -> Result<ValueId, DiffError> {
        let xs = self.shape(x);
        let out_shape = match (xs, axis) {
            (Shape::Vector(_), 0) => Shape::Scalar,
            (Shape::Matrix(_, c), 0) => Shape::Vector(c),
            (Shape::Matrix(r, _), 1) => Shape::Vector(r),
            _ => {
                return Err(DiffError::AxisOutOfRange {
                    axis,
                    rank: xs.rank(),
                })
            }
        };
        let id = self.push(Op::ReduceSum { x, axis }, out_shape);
        let xo = self.nodes[x.idx()].off;
        let oo = self.nodes[id.idx()].off;
        match (xs, axis) {
            (Shape::Vector(n), 0) => {
                self.vals[oo] = self.vals[xo..xo + n].iter().sum();
            }
            (Shape::Matrix(r, c), 0) => {
                for j in 0..c {
                    let mut acc = 0.0;
                    for i in 0..r {
                        acc += self.vals[xo + i * c + j];
                    }
                    self.vals[oo + j] = acc;
                }
            }
            (Shape::Matrix(r, c), 1) => {
                for i in 0..r {
                    self.vals[oo + i] = self.vals[xo + i * c..xo + (i + 1) * c].iter().sum();
                }
            }
            _ => unreachable!(),
        }
        Ok(id)
    }

    /// Concatenates scalars and vectors into one vector.
    pub fn concat(&mut self, parts: &[ValueId]) -> Result<ValueId, DiffError> {
        if parts.is_empty() {
            return Err(DiffError::EmptyInput { op: "concat" });
        }
        let mut total = 0;
        for &p in parts {
            match self.shape(p) {
                Shape::Scalar => total += 1,
                Shape::Vector(n) => total += n,
                other => {
                    return Err(DiffError::ShapeMismatch {
                        op: "concat",
                        expected: "scalars or vectors".into(),
                        got: other.to_string(),
                    })
                }
            }
        }
        let id = self.push(
            Op::Concat {
                parts: parts.to_vec().into_boxed_slice(),
            },
            Shape::Vector(total),
        );
        let oo = self.nodes[id.idx()].off;
        let mut at = oo;
        for &p in parts {
            let n = &self.nodes[p.idx()];
            let (po, pl) = (n.off, n.shape.len());
            for i in 0..pl {
                self.vals[at + i] = self.vals[po + i];
            }
            at += pl;
        }
        Ok(id)
    }

    /// Stacks equal-length vectors as the rows of a matrix.
    pub fn stack_rows(&mut self, rows: &[ValueId]) -> Result<ValueId, DiffError> {
        if rows.is_empty() {
            return Err(DiffError::EmptyInput { op: "stack_rows" });
        }
        let k = match self.shape(rows[0]) {
            Shape::Vector(k) => k,
            other => {
                return Err(DiffError::ShapeMismatch {
                    op: "stack_rows",
                    expected: "vector rows".into(),
                    got: other.to_string(),
                })
            }
        };
        for &r in rows {
            if self.shape(r) != Shape::Vector(k) {
                return Err(DiffError::ShapeMismatch {
                    op: "stack_rows",
                    expected: format!("vec({k})"),
                    got: self.shape(r).to_string(),
                });
            }
        }
        let id = self.push(
            Op::StackRows {
                rows: rows.to_vec().into_boxed_slice(),
            },
            Shape::Matrix(rows.len(), k),
        );
        let oo = self.nodes[id.idx()].off;
        for (i, &r) in rows.iter().enumerate() {
            let ro = self.nodes[r.idx()].off;
            for j in 0..k {
                self.vals[oo + i * k + j] = self.vals[ro + j];
            }
        }
        Ok(id)
    }

    /// Scales row i of `x` by `w[i]`.
    pub fn scale_rows(&mut self, x: ValueId, w: ValueId) -> Result<ValueId, DiffError> {
        let (r, c) = match self.shape(x) {
            Shape::Matrix(r, c) => (r, c),
            other => {
                return Err(DiffError::ShapeMismatch {
                    op: "scale_rows",
                    expected: "matrix".into(),
                    got: other.to_string(),
                })
            }
        };
        if self.shape(w) != Shape::Vector(r) {
            return Err(DiffError::ShapeMismatch {
                op: "scale_rows",
                expected: format!("vec({r}) weights"),
                got: self.shape(w).to_string(),
            });
        }
        let id = self.push(Op::ScaleRows { x, w }, Shape::Matrix(r, c));
        let xo = self.nodes[x.idx()].off;
        let wo = self.nodes[w.idx()].off;
        let oo = self.nodes[id.idx()].off;
        for i in 0..r {
            let wi = self.vals[wo + i];
            for j in 0..c {
                self.vals[oo + i * c + j] = wi * self.vals[xo + i * c + j];
            }
        }
        Ok(id)
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: ValueId,
        b: ValueId,
        make: impl FnOnce(ValueId, ValueId) -> Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<ValueId, DiffError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(DiffError::ShapeMismatch {
                op: name,
                expected: sa.to_string(),
                got: sb.to_string(),
            });
        }
        let id = self.push(make(a, b), sa);
        let ao = self.nodes[a.idx()].off;
        let bo = self.nodes[b.idx()].off;
        let oo = self.nodes[id.idx()].off;
        for i in 0..sa.len() {
            self.vals[oo + i] = f(self.vals[ao + i], self.vals[bo + i]);
        }
        Ok(id)
    }

    pub fn add(&mut self, a: ValueId, b: ValueId) -> Result<ValueId, DiffError> {
        self.binary("add", a, b, |a, b| Op::Add { a, b }, |x, y| x + y)
    }

    pub fn sub(&mut self, a: ValueId, b: ValueId) -> Result<ValueId, DiffError> {
        self.binary("sub", a, b, |a, b| Op::Sub { a, b }, |x, y| x - y)
    }

    pub fn mul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId, DiffError> {
        self.binary("mul", a, b, |a, b| Op::Mul { a, b }, |x, y| x * y)
    }

    pub fn div(&mut self, a: ValueId, b: ValueId) -> Result<ValueId, DiffError> {
        self.binary("div", a, b, |a, b| Op::Div { a, b }, |x, y| x / y)
    }

    pub fn min_pair(&mut self, a: ValueId, b: ValueId) -> Result<ValueId, DiffError> {
        self.binary("min_pair", a, b, |a, b| Op::MinPair { a, b }, f64::min)
    }

    pub fn exp(&mut self, x: ValueId) -> ValueId {
        let id = self.push(Op::Exp { x }, self.shape(x));
        let (xo, oo, n) = self.unary_offsets(x, id);
        for i in 0..n {
            self.vals[oo + i] = self.vals[xo + i].exp();
        }
        id
    }

    pub fn scale(&mut self, x: ValueId, c: f64) -> ValueId {
        let id = self.push(Op::Scale { x, c }, self.shape(x));
        let (xo, oo, n) = self.unary_offsets(x, id);
        for i in 0..n {
            self.vals[oo + i] = c * self.vals[xo + i];
        }
        id
    }

    pub fn add_const(&mut self, x: ValueId, c: f64) -> ValueId {
        let id = self.push(Op::AddConst { x }, self.shape(x));
        let (xo, oo, n) = self.unary_offsets(x, id);
        for i in 0..n {
            self.vals[oo + i] = self.vals[xo + i] + c;
        }
        id
    }

    pub fn clamp(&mut self, x: ValueId, lo: f64, hi: f64) -> ValueId {
        assert!(lo <= hi, "clamp bounds inverted");
        let id = self.push(Op::Clamp { x, lo, hi }, self.shape(x));
        let (xo, oo, n) = self.unary_offsets(x, id);
        for i in 0..n {
            self.vals[oo + i] = self.vals[xo + i].clamp(lo, hi);
        }
        id
    }

    pub fn sum_all(&mut self, x: ValueId) -> ValueId {
        let id = self.push(Op::SumAll { x }, Shape::Scalar);
        let xn = self.nodes[x.idx()].shape.len();
        let xo = self.nodes[x.idx()].off;
        let oo = self.nodes[id.idx()].off;
        self.vals[oo] = self.vals[xo..xo + xn].iter().sum();
        id
    }

    pub fn mean_all(&mut self, x: ValueId) -> ValueId {
        let id = self.push(Op::MeanAll { x }, Shape::Scalar);
        let xn = self.nodes[x.idx()].shape.len();
        let xo = self.nodes[x.idx()].off;
        let oo = self.nodes[id.idx()].off;
        self.vals[oo] = self.vals[xo..xo + xn].iter().sum::<f64>() / xn as f64;
        id
    }

    /// Element `idx` of a vector as a scalar.
    pub fn pick(&mut self, x: ValueId, idx: usize) -> Result<ValueId, DiffError> {
        let n = match self.shape(x) {
            Shape::Vector(n) => n,
            other => {
                return Err(DiffError::ShapeMismatch {
                    op: "pick",
                    expected: "vector".into(),
                    got: other.to_string(),
                })
            }
        };
        if idx >= n {
            return Err(DiffError::IndexOutOfRange { index: idx, len: n });
        }
        let id = self.push(Op::Pick { x, idx }, Shape::Scalar);
        let xo = self.nodes[x.idx()].off;
        let oo = self.nodes[id.idx()].off;
        self.vals[oo] = self.vals[xo + idx];
        Ok(id)
    }

    fn unary_offsets(&self, x: ValueId, out: ValueId) -> (usize, usize, usize) {
        let xn = &self.nodes[x.idx()];
        let on = &self.nodes[out.idx()];
        (xn.off, on.off, on.shape.len())
    }

    // ----- backward -----

    /// Accumulates d(loss)/d(node) for every node recorded before `loss`.
    /// Each node is visited exactly once; fan-out accumulates additively.
    pub fn backward(&mut self, loss: ValueId) -> Result<(), DiffError> {
        if self.shape(loss) != Shape::Scalar {
            return Err(DiffError::NonScalarLoss {
                got: self.shape(loss).to_string(),
            });
        }
        self.grads.clear();
        self.grads.resize(self.vals.len(), 0.0);
        self.grads[self.nodes[loss.idx()].off] = 1.0;

        let Tape { nodes, vals, grads } = self;
        for idx in (0..=loss.idx()).rev() {
            let node = &nodes[idx];
            let off = node.off;
            let len = node.shape.len();
            // Inputs are recorded strictly earlier, so their values and
            // gradients all live below `off`.
            let (gin, gtail) = grads.split_at_mut(off);
            let gout = &gtail[..len];
            let loc = |id: ValueId| {
                let n = &nodes[id.idx()];
                (n.off, n.shape.len())
            };
            match &node.op {
                Op::Leaf => {}
                Op::Affine { w, b, x } => {
                    let (wo, _) = loc(*w);
                    let (bo, _) = loc(*b);
                    let (xo, xl) = loc(*x);
                    let (r, c) = (len, xl);
                    for i in 0..r {
                        let g = gout[i];
                        if g == 0.0 {
                            continue;
                        }
                        gin[bo + i] += g;
                        for j in 0..c {
                            gin[wo + i * c + j] += g * vals[xo + j];
                            gin[xo + j] += g * vals[wo + i * c + j];
                        }
                    }
                }
                Op::Tanh { x } => {
                    let (xo, _) = loc(*x);
                    for i in 0..len {
                        let y = vals[off + i];
                        gin[xo + i] += gout[i] * (1.0 - y * y);
                    }
                }
                Op::Softmax { x } => {
                    let (xo, _) = loc(*x);
                    let w = &vals[off..off + len];
                    let dot: f64 = (0..len).map(|i| gout[i] * w[i]).sum();
                    for i in 0..len {
                        gin[xo + i] += w[i] * (gout[i] - dot);
                    }
                }
                Op::ReduceSum { x, axis } => {
                    let (xo, _) = loc(*x);
                    match (nodes[x.idx()].shape, axis) {
                        (Shape::Vector(n), 0) => {
                            for i in 0..n {
                                gin[xo + i] += gout[0];
                            }
                        }
                        (Shape::Matrix(r, c), 0) => {
                            for i in 0..r {
                                for j in 0..c {
                                    gin[xo + i * c + j] += gout[j];
                                }
                            }
                        }
                        (Shape::Matrix(r, c), 1) => {
                            for i in 0..r {
                                for j in 0..c {
                                    gin[xo + i * c + j] += gout[i];
                                }
                            }
                        }
                        _ => unreachable!(),
                    }
                }
                Op::Concat { parts } => {
                    let mut at = 0;
                    for &p in parts.iter() {
                        let (po, pl) = loc(p);
                        for i in 0..pl {
                            gin[po + i] += gout[at + i];
                        }
                        at += pl;
                    }
                }
                Op::StackRows { rows } => {
                    let k = len / rows.len();
                    for (i, &r) in rows.iter().enumerate() {
                        let (ro, _) = loc(r);
                        for j in 0..k {
                            gin[ro + j] += gout[i * k + j];
                        }
                    }
                }
                Op::ScaleRows { x, w } => {
                    let (xo, _) = loc(*x);
                    let (wo, wl) = loc(*w);
                    let c = len / wl;
                    for i in 0..wl {
                        let wi = vals[wo + i];
                        let mut acc = 0.0;
                        for j in 0..c {
                            let g = gout[i * c + j];
                            gin[xo + i * c + j] += g * wi;
                            acc += g * vals[xo + i * c + j];
                        }
                        gin[wo + i] += acc;
                    }
                }
                Op::Add { a, b } => {
                    let (ao, _) = loc(*a);
                    let (bo, _) = loc(*b);
                    for i in 0..len {
                        gin[ao + i] += gout[i];
                        gin[bo + i] += gout[i];
                    }
                }
                Op::Sub { a, b } => {
                    let (ao, _) = loc(*a);
                    let (bo, _) = loc(*b);
                    for i in 0..len {
                        gin[ao + i] += gout[i];
                        gin[bo + i] -= gout[i];
                    }
                }
                Op::Mul { a, b } => {
                    let (ao, _) = loc(*a);
                    let (bo, _) = loc(*b);
                    for i in 0..len {
                        gin[ao + i] += gout[i] * vals[bo + i];
                        gin[bo + i] += gout[i] * vals[ao + i];
                    }
                }
                Op::Div { a, b } => {
                    let (ao, _) = loc(*a);
                    let (bo, _) = loc(*b);
                    for i in 0..len {
                        let bv = vals[bo + i];
                        gin[ao + i] += gout[i] / bv;
                        gin[bo + i] -= gout[i] * vals[ao + i] / (bv * bv);
                    }
                }
                Op::MinPair { a, b } => {
                    let (ao, _) = loc(*a);
                    let (bo, _) = loc(*b);
                    for i in 0..len {
                        if vals[ao + i] <= vals[bo + i] {
                            gin[ao + i] += gout[i];
                        } else {
                            gin[bo + i] += gout[i];
                        }
                    }
                }
                Op::Exp { x } => {
                    let (xo, _) = loc(*x);
                    for i in 0..len {
                        gin[xo + i] += gout[i] * vals[off + i];
                    }
                }
                Op::Scale { x, c } => {
                    let (xo, _) = loc(*x);
                    for i in 0..len {
                        gin[xo + i] += gout[i] * c;
                    }
                }
                Op::AddConst { x } => {
                    let (xo, _) = loc(*x);
                    for i in 0..len {
                        gin[xo + i] += gout[i];
                    }
                }
                Op::Clamp { x, lo, hi } => {
                    let (xo, _) = loc(*x);
                    for i in 0..len {
                        let v = vals[xo + i];
                        if v > *lo && v < *hi {
                            gin[xo + i] += gout[i];
                        }
                    }
                }
                Op::SumAll { x } => {
                    let (xo, xl) = loc(*x);
                    for i in 0..xl {
                        gin[xo + i] += gout[0];
                    }
                }
                Op::MeanAll { x } => {
                    let (xo, xl) = loc(*x);
                    let g = gout[0] / xl as f64;
                    for i in 0..xl {
                        gin[xo + i] += g;
                    }
                }
                Op::Pick { x, idx } => {
                    let (xo, _) = loc(*x);
                    gin[xo + idx] += gout[0];
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn affine_identity_and_hand_sum() {
        let mut tape = Tape::new();
        let w = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let b = Tensor::vector(vec![0.0, 0.0]).unwrap();
        let (w, b) = (tape.leaf(&w), tape.leaf(&b));
        let x = tape.leaf_slice(&[3.0, -1.0]);
        let y = tape.affine(w, b, x).unwrap();
        assert_eq!(tape.val(y), &[3.0, -1.0]);

        let w = Tensor::matrix(1, 2, vec![1.0, 1.0]).unwrap();
        let b = Tensor::vector(vec![0.5]).unwrap();
        let (w, b) = (tape.leaf(&w), tape.leaf(&b));
        let x = tape.leaf_slice(&[2.0, 3.0]);
        let y = tape.affine(w, b, x).unwrap();
        assert_eq!(tape.val(y), &[5.5]);
    }

    #[test]
    fn affine_matches_double_loop() {
        let mut rng = crate::rng::stream_rng(11, 0);
        let wv: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let bv: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let xv: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut expect = vec![0.0; 4];
        for i in 0..4 {
            expect[i] = bv[i];
            for j in 0..3 {
                expect[i] += wv[i * 3 + j] * xv[j];
            }
        }
        let mut tape = Tape::new();
        let w = tape.leaf(&Tensor::matrix(4, 3, wv).unwrap());
        let b = tape.leaf(&Tensor::vector(bv).unwrap());
        let x = tape.leaf_slice(&xv);
        let y = tape.affine(w, b, x).unwrap();
        for (a, e) in tape.val(y).iter().zip(&expect) {
            close(*a, *e, 1e-12);
        }
    }

    #[test]
    fn affine_rejects_shape_mismatch() {
        let mut tape = Tape::new();
        let w = tape.leaf(&Tensor::zeros(&[2, 3]));
        let b = tape.leaf(&Tensor::zeros(&[2]));
        let x = tape.leaf_slice(&[1.0, 2.0]);
        let err = tape.affine(w, b, x).unwrap_err().to_string();
        assert!(err.contains("mat(2,3)") && err.contains("vec(2)"), "{err}");
    }

    #[test]
    fn tanh_basics() {
        let mut tape = Tape::new();
        let x = tape.leaf_slice(&[0.0, 20.0]);
        let y = tape.tanh(x);
        assert_eq!(tape.val(y)[0], 0.0);
        let sat = tape.val(y)[1];
        assert!(sat > 1.0 - 1e-8 && sat <= 1.0);
        let mut rng = crate::rng::stream_rng(12, 0);
        let xs: Vec<f64> = (0..32).map(|_| rng.random_range(-3.0..3.0)).collect();
        let x = tape.leaf_slice(&xs);
        let y = tape.tanh(x);
        for (a, e) in tape.val(y).iter().zip(xs.iter().map(|v| v.tanh())) {
            close(*a, e, 1e-15);
        }
    }

    #[test]
    fn softmax_values() {
        let mut tape = Tape::new();
        let x = tape.leaf_slice(&[0.0, 0.0]);
        let y = tape.softmax(x).unwrap();
        assert_eq!(tape.val(y), &[0.5, 0.5]);

        let x = tape.leaf_slice(&[3.7]);
        let y = tape.softmax(x).unwrap();
        assert_eq!(tape.val(y), &[1.0]);

        let x = tape.leaf_slice(&[2.0f64.ln(), 0.0]);
        let y = tape.softmax(x).unwrap();
        close(tape.val(y)[0], 2.0 / 3.0, 1e-12);
        close(tape.val(y)[1], 1.0 / 3.0, 1e-12);

        let x = tape.leaf_slice(&[]);
        assert!(matches!(
            tape.softmax(x),
            Err(DiffError::EmptyInput { op: "softmax" })
        ));
    }

    #[test]
    fn softmax_sums_to_one_and_shift_invariant() {
        let mut rng = crate::rng::stream_rng(13, 0);
        for _ in 0..200 {
            let n = rng.random_range(1..7);
            let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let c = rng.random_range(-100.0..100.0);
            let shifted: Vec<f64> = xs.iter().map(|v| v + c).collect();
            let mut tape = Tape::new();
            let a = tape.leaf_slice(&xs);
            let a = tape.softmax(a).unwrap();
            let b = tape.leaf_slice(&shifted);
            let b = tape.softmax(b).unwrap();
            let sum: f64 = tape.val(a).iter().sum();
            close(sum, 1.0, 1e-12);
            for (x, y) in tape.val(a).iter().zip(tape.val(b)) {
                assert!(*x >= 0.0);
                close(*x, *y, 1e-12);
            }
        }
        // With shifts that are exact in binary the max-subtraction cancels
        // bit-for-bit, so invariance is exact, not just within tolerance.
        let xs = [0.5, -1.25, 3.0];
        let shifted: Vec<f64> = xs.iter().map(|v| v + 16.0).collect();
        let mut tape = Tape::new();
        let a = tape.leaf_slice(&xs);
        let a = tape.softmax(a).unwrap();
        let b = tape.leaf_slice(&shifted);
        let b = tape.softmax(b).unwrap();
        assert_eq!(tape.val(a), tape.val(b));
    }

    #[test]
    fn reduce_sum_axes() {
        let mut tape = Tape::new();
        let m = tape.leaf(&Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let rows = tape.reduce_sum(m, 0).unwrap();
        assert_eq!(tape.val(rows), &[4.0, 6.0]);
        let cols = tape.reduce_sum(m, 1).unwrap();
        assert_eq!(tape.val(cols), &[3.0, 7.0]);

        let single = tape.leaf(&Tensor::matrix(1, 3, vec![5.0, 6.0, 7.0]).unwrap());
        let s = tape.reduce_sum(single, 0).unwrap();
        assert_eq!(tape.val(s), &[5.0, 6.0, 7.0]);

        assert!(matches!(
            tape.reduce_sum(m, 2),
            Err(DiffError::AxisOutOfRange { axis: 2, rank: 2 })
        ));

        let mut rng = crate::rng::stream_rng(14, 0);
        let xs: Vec<f64> = (0..15).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut expect = vec![0.0; 3];
        for i in 0..5 {
            for j in 0..3 {
                expect[j] += xs[i * 3 + j];
            }
        }
        let m = tape.leaf(&Tensor::matrix(5, 3, xs).unwrap());
        let s = tape.reduce_sum(m, 0).unwrap();
        for (a, e) in tape.val(s).iter().zip(&expect) {
            close(*a, *e, 1e-12);
        }
    }

    #[test]
    fn backward_square() {
        let mut tape = Tape::new();
        let x = tape.leaf_scalar(3.0);
        let y = tape.mul(x, x).unwrap();
        tape.backward(y).unwrap();
        assert_eq!(tape.grad(x), &[6.0]);
    }

    #[test]
    fn backward_softmax_pick() {
        let mut tape = Tape::new();
        let v = tape.leaf_slice(&[0.0, 0.0]);
        let w = tape.softmax(v).unwrap();
        let l = tape.pick(w, 0).unwrap();
        tape.backward(l).unwrap();
        let g = tape.grad(v);
        close(g[0], 0.25, 1e-12);
        close(g[1], -0.25, 1e-12);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut tape = Tape::new();
        let v = tape.leaf_slice(&[1.0, 2.0]);
        assert!(matches!(
            tape.backward(v),
            Err(DiffError::NonScalarLoss { .. })
        ));
    }

    #[test]
    fn backward_fan_out_accumulates() {
        // y = x·x + x used twice more via concat; d/dx (x² + 2x) = 2x + 2.
        let mut tape = Tape::new();
        let x = tape.leaf_scalar(1.5);
        let sq = tape.mul(x, x).unwrap();
        let two = tape.concat(&[x, x]).unwrap();
        let lin = tape.sum_all(two);
        let y = tape.add(sq, lin).unwrap();
        tape.backward(y).unwrap();
        close(tape.grad(x)[0], 2.0 * 1.5 + 2.0, 1e-12);
    }

    #[test]
    fn backward_min_clamp_div() {
        // min picks its smaller branch; clamp gates the pass-through.
        let mut tape = Tape::new();
        let a = tape.leaf_scalar(2.0);
        let b = tape.leaf_scalar(5.0);
        let m = tape.min_pair(a, b).unwrap();
        tape.backward(m).unwrap();
        assert_eq!(tape.grad(a), &[1.0]);
        assert_eq!(tape.grad(b), &[0.0]);

        let mut tape = Tape::new();
        let x = tape.leaf_scalar(3.0);
        let c = tape.clamp(x, -1.0, 2.0);
        tape.backward(c).unwrap();
        assert_eq!(tape.grad(x), &[0.0]);
        assert_eq!(tape.val_scalar(c), 2.0);

        let mut tape = Tape::new();
        let a = tape.leaf_scalar(1.0);
        let b = tape.leaf_scalar(4.0);
        let d = tape.div(a, b).unwrap();
        tape.backward(d).unwrap();
        close(tape.grad(a)[0], 0.25, 1e-12);
        close(tape.grad(b)[0], -1.0 / 16.0, 1e-12);
    }

    #[test]
    fn tape_replay_is_deterministic() {
        let build = || {
            let mut tape = Tape::new();
            let mut rng = crate::rng::stream_rng(99, 7);
            let xs: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
            let x = tape.leaf_slice(&xs);
            let t = tape.tanh(x);
            let s = tape.softmax(t).unwrap();
            let l = tape.pick(s, 3).unwrap();
            tape.backward(l).unwrap();
            (tape.val_scalar(l), tape.grad(x).to_vec())
        };
        let (l1, g1) = build();
        let (l2, g2) = build();
        assert_eq!(l1.to_bits(), l2.to_bits());
        for (a, b) in g1.iter().zip(&g2) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn reset_keeps_tape_usable() {
        let mut tape = Tape::new();
        let x = tape.leaf_scalar(1.0);
        let _ = tape.exp(x);
        tape.reset();
        assert!(tape.is_empty());
        let y = tape.leaf_scalar(2.0);
        let z = tape.mul(y, y).unwrap();
        assert_eq!(tape.val_scalar(z), 4.0);
    }
}
