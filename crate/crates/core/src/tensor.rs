//! Tape-based reverse-mode autodiff over dense f64 tensors.
//!
//! A [`Graph`] owns every tensor created through it; operations append nodes
//! in topological order and [`Graph::backward`] walks them in reverse,
//! accumulating adjoints. Tensor data is immutable once recorded; gradients
//! live in a parallel table so no interior mutability is needed and
//! independent graphs can run on separate threads.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

/// Handle to a tensor inside one [`Graph`]; ids are not portable across graphs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TensorId(u32);

impl TensorId {
    #[inline]
    fn idx(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(TensorId, TensorId),
    Sub(TensorId, TensorId),
    Mul(TensorId, TensorId),
    Scale(TensorId, f64),
    Tanh(TensorId),
    Relu(TensorId),
    Sin(TensorId),
    Exp(TensorId),
    Sigmoid(TensorId),
    MatMul(TensorId, TensorId),
    MatVec(TensorId, TensorId),
    Linear {
        x: TensorId,
        w: TensorId,
        b: TensorId,
    },
    Transpose(TensorId),
    Reshape(TensorId),
    Row {
        x: TensorId,
        index: usize,
    },
    StackRows(Vec<TensorId>),
    Slice {
        x: TensorId,
        start: usize,
    },
    SumAll(TensorId),
    MeanAll(TensorId),
    Conv2d {
        x: TensorId,
        k: TensorId,
        b: TensorId,
        stride: usize,
        padding: usize,
    },
}

#[derive(Debug)]
struct Node {
    data: Vec<f64>,
    shape: Vec<usize>,
    requires_grad: bool,
    op: Op,
}

/// LSTM step weights, passed by id so the step composes onto any graph.
///
/// `w_ih` is `[4H, input]`, `w_hh` is `[4H, H]`, `b` is `[4H]`; the four
/// blocks are the input, forget, cell and output gates in that order.
#[derive(Debug, Clone, Copy)]
pub struct LstmWeights {
    pub w_ih: TensorId,
    pub w_hh: TensorId,
    pub b: TensorId,
}

/// Recording tape plus gradient table.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    backward_done: bool,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    /// Number of recorded tensors.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: TensorId) -> &[f64] {
        &self.nodes[id.idx()].data
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        &self.nodes[id.idx()].shape
    }

    /// Gradient of the last `backward` pass, `None` before one ran.
    pub fn grad(&self, id: TensorId) -> Option<&[f64]> {
        self.grads[id.idx()].as_deref()
    }

    fn push(&mut self, data: Vec<f64>, shape: Vec<usize>, requires_grad: bool, op: Op) -> TensorId {
        debug_assert_eq!(data.len(), numel(&shape));
        let id = TensorId(self.nodes.len() as u32);
        self.nodes.push(Node {
            data,
            shape,
            requires_grad,
            op,
        });
        self.grads.push(None);
        id
    }

    fn requires(&self, id: TensorId) -> bool {
        self.nodes[id.idx()].requires_grad
    }

    /// Insert a leaf tensor. Shape entries must be positive and match `data`.
    pub fn leaf(&mut self, data: Vec<f64>, shape: &[usize], requires_grad: bool) -> Result<TensorId> {
        if shape.is_empty() || shape.iter().any(|&d| d == 0) {
            return Err(Error::Contract(alloc::format!(
                "leaf shape must have positive dimensions, got {shape:?}"
            )));
        }
        if data.len() != numel(shape) {
            return Err(Error::Dimension {
                op: "leaf",
                lhs: vec![data.len()],
                rhs: shape.to_vec(),
            });
        }
        Ok(self.push(data, shape.to_vec(), requires_grad, Op::Leaf))
    }

    /// A leaf that never receives gradients (inputs, targets, coordinates).
    pub fn constant(&mut self, data: Vec<f64>, shape: &[usize]) -> Result<TensorId> {
        self.leaf(data, shape, false)
    }

    pub fn scalar(&mut self, x: f64) -> TensorId {
        self.push(vec![x], vec![1], false, Op::Leaf)
    }

    fn binary_shapes(
        &self,
        op: &'static str,
        a: TensorId,
        b: TensorId,
    ) -> Result<(Vec<usize>, bool, bool)> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa == sb {
            return Ok((sa.to_vec(), false, false));
        }
        if numel(sb) == 1 {
            return Ok((sa.to_vec(), false, true));
        }
        if numel(sa) == 1 {
            return Ok((sb.to_vec(), true, false));
        }
        Err(Error::Dimension {
            op,
            lhs: sa.to_vec(),
            rhs: sb.to_vec(),
        })
    }

    /// Elementwise sum; one operand may be a scalar (numel 1) broadcast.
    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (shape, a_scalar, b_scalar) = self.binary_shapes("add", a, b)?;
        let (da, db) = (&self.nodes[a.idx()].data, &self.nodes[b.idx()].data);
        let data: Vec<f64> = if a_scalar {
            db.iter().map(|y| da[0] + y).collect()
        } else if b_scalar {
            da.iter().map(|x| x + db[0]).collect()
        } else {
            da.iter().zip(db).map(|(x, y)| x + y).collect()
        };
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(data, shape, rg, Op::Add(a, b)))
    }

    /// Elementwise difference; one operand may be a scalar broadcast.
    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (shape, a_scalar, b_scalar) = self.binary_shapes("sub", a, b)?;
        let (da, db) = (&self.nodes[a.idx()].data, &self.nodes[b.idx()].data);
        let data: Vec<f64> = if a_scalar {
            db.iter().map(|y| da[0] - y).collect()
        } else if b_scalar {
            da.iter().map(|x| x - db[0]).collect()
        } else {
            da.iter().zip(db).map(|(x, y)| x - y).collect()
        };
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(data, shape, rg, Op::Sub(a, b)))
    }

    /// Hadamard product; one operand may be a scalar broadcast.
    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (shape, a_scalar, b_scalar) = self.binary_shapes("mul", a, b)?;
        let (da, db) = (&self.nodes[a.idx()].data, &self.nodes[b.idx()].data);
        let data: Vec<f64> = if a_scalar {
            db.iter().map(|y| da[0] * y).collect()
        } else if b_scalar {
            da.iter().map(|x| x * db[0]).collect()
        } else {
            da.iter().zip(db).map(|(x, y)| x * y).collect()
        };
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(data, shape, rg, Op::Mul(a, b)))
    }

    /// Multiply by a compile-time constant (not a graph tensor).
    pub fn scale(&mut self, a: TensorId, c: f64) -> Result<TensorId> {
        let data = self.nodes[a.idx()].data.iter().map(|x| c * x).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.requires(a);
        Ok(self.push(data, shape, rg, Op::Scale(a, c)))
    }

    fn unary(
        &mut self,
        a: TensorId,
        f: impl Fn(f64) -> f64,
        op: impl Fn(TensorId) -> Op,
    ) -> TensorId {
        let data = self.nodes[a.idx()].data.iter().map(|&x| f(x)).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.requires(a);
        self.push(data, shape, rg, op(a))
    }

    pub fn tanh(&mut self, a: TensorId) -> TensorId {
        self.unary(a, math::tanh, Op::Tanh)
    }

    /// Rectifier; the derivative at the kink is taken as 0.
    pub fn relu(&mut self, a: TensorId) -> TensorId {
        self.unary(a, |x| if x > 0.0 { x } else { 0.0 }, Op::Relu)
    }

    pub fn sin(&mut self, a: TensorId) -> TensorId {
        self.unary(a, math::sin, Op::Sin)
    }

    pub fn exp(&mut self, a: TensorId) -> TensorId {
        self.unary(a, math::exp, Op::Exp)
    }

    pub fn sigmoid(&mut self, a: TensorId) -> TensorId {
        self.unary(a, math::sigmoid, Op::Sigmoid)
    }

    /// `[m,k] x [k,n] -> [m,n]`.
    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::Dimension {
                op: "matmul",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let (da, db) = (&self.nodes[a.idx()].data, &self.nodes[b.idx()].data);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for kk in 0..k {
                let aik = da[i * k + kk];
                let brow = &db[kk * n..kk * n + n];
                let orow = &mut out[i * n..i * n + n];
                for j in 0..n {
                    orow[j] += aik * brow[j];
                }
            }
        }
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(out, vec![m, n], rg, Op::MatMul(a, b)))
    }

    /// `[m,n] x [n] -> [m]`.
    pub fn matvec(&mut self, w: TensorId, v: TensorId) -> Result<TensorId> {
        let (sw, sv) = (self.shape(w), self.shape(v));
        if sw.len() != 2 || sv.len() != 1 || sw[1] != sv[0] {
            return Err(Error::Dimension {
                op: "matvec",
                lhs: sw.to_vec(),
                rhs: sv.to_vec(),
            });
        }
        let (m, n) = (sw[0], sw[1]);
        let (dw, dv) = (&self.nodes[w.idx()].data, &self.nodes[v.idx()].data);
        let mut out = vec![0.0; m];
        for i in 0..m {
            let row = &dw[i * n..i * n + n];
            let mut acc = 0.0;
            for j in 0..n {
                acc += row[j] * dv[j];
            }
            out[i] = acc;
        }
        let rg = self.requires(w) || self.requires(v);
        Ok(self.push(out, vec![m], rg, Op::MatVec(w, v)))
    }

    /// Batched affine map: `x [m,in] x w [out,in] + b [out] -> [m,out]`,
    /// each output element accumulated starting from its bias.
    pub fn linear(&mut self, x: TensorId, w: TensorId, b: TensorId) -> Result<TensorId> {
        let (sx, sw, sb) = (self.shape(x), self.shape(w), self.shape(b));
        if sx.len() != 2 || sw.len() != 2 || sx[1] != sw[1] {
            return Err(Error::Dimension {
                op: "linear",
                lhs: sx.to_vec(),
                rhs: sw.to_vec(),
            });
        }
        if sb.len() != 1 || sb[0] != sw[0] {
            return Err(Error::Dimension {
                op: "linear",
                lhs: sw.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let (m, nin, nout) = (sx[0], sx[1], sw[0]);
        let dx = &self.nodes[x.idx()].data;
        let dw = &self.nodes[w.idx()].data;
        let db = &self.nodes[b.idx()].data;
        let mut out = vec![0.0; m * nout];
        for r in 0..m {
            let xrow = &dx[r * nin..r * nin + nin];
            for o in 0..nout {
                let wrow = &dw[o * nin..o * nin + nin];
                let mut acc = db[o];
                for i in 0..nin {
                    acc += xrow[i] * wrow[i];
                }
                out[r * nout + o] = acc;
            }
        }
        let rg = self.requires(x) || self.requires(w) || self.requires(b);
        Ok(self.push(out, vec![m, nout], rg, Op::Linear { x, w, b }))
    }

    pub fn transpose(&mut self, a: TensorId) -> Result<TensorId> {
        let sa = self.shape(a);
        if sa.len() != 2 {
            return Err(Error::Dimension {
                op: "transpose",
                lhs: sa.to_vec(),
                rhs: vec![],
            });
        }
        let (m, n) = (sa[0], sa[1]);
        let da = &self.nodes[a.idx()].data;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = da[i * n + j];
            }
        }
        let rg = self.requires(a);
        Ok(self.push(out, vec![n, m], rg, Op::Transpose(a)))
    }

    /// Reinterpret under a new shape with the same element count.
    pub fn reshape(&mut self, a: TensorId, shape: &[usize]) -> Result<TensorId> {
        if numel(shape) != self.nodes[a.idx()].data.len() || shape.iter().any(|&d| d == 0) {
            return Err(Error::Dimension {
                op: "reshape",
                lhs: self.shape(a).to_vec(),
                rhs: shape.to_vec(),
            });
        }
        let data = self.nodes[a.idx()].data.clone();
        let rg = self.requires(a);
        Ok(self.push(data, shape.to_vec(), rg, Op::Reshape(a)))
    }

    /// Extract row `index` of a matrix as a vector.
    pub fn row(&mut self, x: TensorId, index: usize) -> Result<TensorId> {
        let sx = self.shape(x);
        if sx.len() != 2 || index >= sx[0] {
            return Err(Error::Contract(alloc::format!(
                "row {index} out of range for shape {sx:?}"
            )));
        }
        let n = sx[1];
        let data = self.nodes[x.idx()].data[index * n..(index + 1) * n].to_vec();
        let rg = self.requires(x);
        Ok(self.push(data, vec![n], rg, Op::Row { x, index }))
    }

    /// Stack equal-length vectors as the rows of a matrix.
    pub fn stack_rows(&mut self, rows: &[TensorId]) -> Result<TensorId> {
        if rows.is_empty() {
            return Err(Error::Contract("stack_rows of no rows".into()));
        }
        let n = {
            let s0 = self.shape(rows[0]);
            if s0.len() != 1 {
                return Err(Error::Dimension {
                    op: "stack_rows",
                    lhs: s0.to_vec(),
                    rhs: vec![],
                });
            }
            s0[0]
        };
        let mut data = Vec::with_capacity(rows.len() * n);
        let mut rg = false;
        for &r in rows {
            let sr = self.shape(r);
            if sr != [n] {
                return Err(Error::Dimension {
                    op: "stack_rows",
                    lhs: vec![n],
                    rhs: sr.to_vec(),
                });
            }
            data.extend_from_slice(&self.nodes[r.idx()].data);
            rg |= self.requires(r);
        }
        Ok(self.push(data, vec![rows.len(), n], rg, Op::StackRows(rows.to_vec())))
    }

    /// Contiguous sub-vector `[start, start+len)` of a vector.
    pub fn slice(&mut self, x: TensorId, start: usize, len: usize) -> Result<TensorId> {
        let sx = self.shape(x);
        if sx.len() != 1 || start + len > sx[0] || len == 0 {
            return Err(Error::Contract(alloc::format!(
                "slice [{start}, {start}+{len}) out of range for shape {sx:?}"
            )));
        }
        let data = self.nodes[x.idx()].data[start..start + len].to_vec();
        let rg = self.requires(x);
        Ok(self.push(data, vec![len], rg, Op::Slice { x, start }))
    }

    /// Sum of all elements, shape `[1]`.
    pub fn sum_all(&mut self, a: TensorId) -> TensorId {
        let s: f64 = self.nodes[a.idx()].data.iter().sum();
        let rg = self.requires(a);
        self.push(vec![s], vec![1], rg, Op::SumAll(a))
    }

    /// Mean of all elements, shape `[1]`.
    pub fn mean_all(&mut self, a: TensorId) -> TensorId {
        let n = self.nodes[a.idx()].data.len();
        let s: f64 = self.nodes[a.idx()].data.iter().sum();
        let rg = self.requires(a);
        self.push(vec![s / n as f64], vec![1], rg, Op::MeanAll(a))
    }

    /// 2D cross-correlation: `x [ci,h,w]`, `k [co,ci,ks,ks]`, `b [co]`,
    /// zero padding, output `[co, ho, wo]` with `ho = (h+2p-ks)/s + 1`.
    pub fn conv2d(
        &mut self,
        x: TensorId,
        k: TensorId,
        b: TensorId,
        stride: usize,
        padding: usize,
    ) -> Result<TensorId> {
        let (sx, sk, sb) = (self.shape(x), self.shape(k), self.shape(b));
        if sx.len() != 3 || sk.len() != 4 || sk[1] != sx[0] || sk[2] != sk[3] {
            return Err(Error::Dimension {
                op: "conv2d",
                lhs: sx.to_vec(),
                rhs: sk.to_vec(),
            });
        }
        if sb.len() != 1 || sb[0] != sk[0] {
            return Err(Error::Dimension {
                op: "conv2d",
                lhs: sk.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        if stride == 0 {
            return Err(Error::Contract("conv2d stride must be positive".into()));
        }
        let (ci, h, w) = (sx[0], sx[1], sx[2]);
        let (co, ks) = (sk[0], sk[2]);
        if h + 2 * padding < ks || w + 2 * padding < ks {
            return Err(Error::Contract(alloc::format!(
                "conv2d kernel {ks} exceeds padded input {h}x{w} (padding {padding})"
            )));
        }
        let ho = (h + 2 * padding - ks) / stride + 1;
        let wo = (w + 2 * padding - ks) / stride + 1;
        let dx = &self.nodes[x.idx()].data;
        let dk = &self.nodes[k.idx()].data;
        let db = &self.nodes[b.idx()].data;
        let mut out = vec![0.0; co * ho * wo];
        for oc in 0..co {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = db[oc];
                    for ic in 0..ci {
                        for ky in 0..ks {
                            let iy = oy * stride + ky;
                            if iy < padding || iy - padding >= h {
                                continue;
                            }
                            let iy = iy - padding;
                            for kx in 0..ks {
                                let ix = ox * stride + kx;
                                if ix < padding || ix - padding >= w {
                                    continue;
                                }
                                let ix = ix - padding;
                                acc += dx[(ic * h + iy) * w + ix]
                                    * dk[((oc * ci + ic) * ks + ky) * ks + kx];
                            }
                        }
                    }
                    out[(oc * ho + oy) * wo + ox] = acc;
                }
            }
        }
        let rg = self.requires(x) || self.requires(k) || self.requires(b);
        Ok(self.push(
            out,
            vec![co, ho, wo],
            rg,
            Op::Conv2d {
                x,
                k,
                b,
                stride,
                padding,
            },
        ))
    }

    /// One LSTM cell step composed from primitive ops.
    ///
    /// Gate preactivations are `w_ih x + w_hh h + b` split into input,
    /// forget, cell, output blocks; `c' = f*c + i*g`, `h' = o * tanh(c')`.
    /// Returns `(h', c')`.
    pub fn lstm_step(
        &mut self,
        x: TensorId,
        h: TensorId,
        c: TensorId,
        weights: LstmWeights,
    ) -> Result<(TensorId, TensorId)> {
        let sh = self.shape(h);
        if sh.len() != 1 {
            return Err(Error::Dimension {
                op: "lstm_step",
                lhs: sh.to_vec(),
                rhs: vec![],
            });
        }
        let hidden = sh[0];
        if self.shape(c) != [hidden] {
            return Err(Error::Dimension {
                op: "lstm_step",
                lhs: vec![hidden],
                rhs: self.shape(c).to_vec(),
            });
        }
        if self.shape(weights.b) != [4 * hidden] {
            return Err(Error::Dimension {
                op: "lstm_step",
                lhs: vec![4 * hidden],
                rhs: self.shape(weights.b).to_vec(),
            });
        }
        let from_x = self.matvec(weights.w_ih, x)?;
        let from_h = self.matvec(weights.w_hh, h)?;
        let pre = self.add(from_x, from_h)?;
        let pre = self.add(pre, weights.b)?;
        let i_gate = self.slice(pre, 0, hidden)?;
        let i_gate = self.sigmoid(i_gate);
        let f_gate = self.slice(pre, hidden, hidden)?;
        let f_gate = self.sigmoid(f_gate);
        let g_gate = self.slice(pre, 2 * hidden, hidden)?;
        let g_gate = self.tanh(g_gate);
        let o_gate = self.slice(pre, 3 * hidden, hidden)?;
        let o_gate = self.sigmoid(o_gate);
        let fc = self.mul(f_gate, c)?;
        let ig = self.mul(i_gate, g_gate)?;
        let c_next = self.add(fc, ig)?;
        let c_tanh = self.tanh(c_next);
        let h_next = self.mul(o_gate, c_tanh)?;
        Ok((h_next, c_next))
    }

    /// Clear gradients so another `backward` may run on the same tape.
    pub fn reset_grads(&mut self) {
        for g in &mut self.grads {
            *g = None;
        }
        self.backward_done = false;
    }

    /// Reverse pass from a scalar loss.
    ///
    /// Populates the gradient of every tensor with `requires_grad` (zeros
    /// for those the loss does not depend on). A second call without
    /// [`Graph::reset_grads`] is a state error.
    pub fn backward(&mut self, loss: TensorId) -> Result<()> {
        if self.backward_done {
            return Err(Error::State(
                "backward already ran on this graph; call reset_grads first".into(),
            ));
        }
        if loss.idx() >= self.nodes.len() {
            return Err(Error::Contract("backward: unknown tensor id".into()));
        }
        if self.nodes[loss.idx()].data.len() != 1 {
            return Err(Error::Contract(alloc::format!(
                "backward requires a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        self.grads[loss.idx()] = Some(vec![1.0]);
        for id in (0..=loss.idx()).rev() {
            let Some(g) = self.grads[id].take() else {
                continue;
            };
            self.propagate(id, &g);
            self.grads[id] = Some(g);
        }
        for id in 0..self.nodes.len() {
            if self.nodes[id].requires_grad && self.grads[id].is_none() {
                self.grads[id] = Some(vec![0.0; self.nodes[id].data.len()]);
            }
        }
        self.backward_done = true;
        Ok(())
    }

    fn propagate(&mut self, id: usize, g: &[f64]) {
        // Split borrows: node data is read-only here, adjoints accumulate
        // into the parallel grads table.
        let op = self.nodes[id].op.clone();
        match op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.acc_broadcast(a, g, 1.0);
                self.acc_broadcast(b, g, 1.0);
            }
            Op::Sub(a, b) => {
                self.acc_broadcast(a, g, 1.0);
                self.acc_broadcast(b, g, -1.0);
            }
            Op::Mul(a, b) => {
                if self.requires(a) {
                    let other = &self.nodes[b.idx()].data;
                    let contrib = Self::mul_contrib(g, other);
                    self.acc_broadcast_vec(a, &contrib);
                }
                if self.requires(b) {
                    let other = &self.nodes[a.idx()].data;
                    let contrib = Self::mul_contrib(g, other);
                    self.acc_broadcast_vec(b, &contrib);
                }
            }
            Op::Scale(a, c) => {
                if self.requires(a) {
                    let contrib: Vec<f64> = g.iter().map(|gi| c * gi).collect();
                    self.acc(a, &contrib);
                }
            }
            Op::Tanh(a) => {
                if self.requires(a) {
                    let y = &self.nodes[id].data;
                    let contrib: Vec<f64> =
                        g.iter().zip(y).map(|(gi, yi)| gi * (1.0 - yi * yi)).collect();
                    self.acc(a, &contrib);
                }
            }
            Op::Relu(a) => {
                if self.requires(a) {
                    let x = &self.nodes[a.idx()].data;
                    let contrib: Vec<f64> = g
                        .iter()
                        .zip(x)
                        .map(|(gi, xi)| if *xi > 0.0 { *gi } else { 0.0 })
                        .collect();
                    self.acc(a, &contrib);
                }
            }
            Op::Sin(a) => {
                if self.requires(a) {
                    let x = &self.nodes[a.idx()].data;
                    let contrib: Vec<f64> =
                        g.iter().zip(x).map(|(gi, xi)| gi * math::cos(*xi)).collect();
                    self.acc(a, &contrib);
                }
            }
            Op::Exp(a) => {
                if self.requires(a) {
                    let y = &self.nodes[id].data;
                    let contrib: Vec<f64> = g.iter().zip(y).map(|(gi, yi)| gi * yi).collect();
                    self.acc(a, &contrib);
                }
            }
            Op::Sigmoid(a) => {
                if self.requires(a) {
                    let y = &self.nodes[id].data;
                    let contrib: Vec<f64> = g
                        .iter()
                        .zip(y)
                        .map(|(gi, yi)| gi * yi * (1.0 - yi))
                        .collect();
                    self.acc(a, &contrib);
                }
            }
            Op::MatMul(a, b) => {
                let sa = self.nodes[a.idx()].shape.clone();
                let sb = self.nodes[b.idx()].shape.clone();
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                if self.requires(a) {
                    // dA = g . B^T
                    let db = &self.nodes[b.idx()].data;
                    let mut contrib = vec![0.0; m * k];
                    for i in 0..m {
                        for j in 0..n {
                            let gij = g[i * n + j];
                            for kk in 0..k {
                                contrib[i * k + kk] += gij * db[kk * n + j];
                            }
                        }
                    }
                    self.acc(a, &contrib);
                }
                if self.requires(b) {
                    // dB = A^T . g
                    let da = &self.nodes[a.idx()].data;
                    let mut contrib = vec![0.0; k * n];
                    for i in 0..m {
                        for kk in 0..k {
                            let aik = da[i * k + kk];
                            for j in 0..n {
                                contrib[kk * n + j] += aik * g[i * n + j];
                            }
                        }
                    }
                    self.acc(b, &contrib);
                }
            }
            Op::MatVec(w, v) => {
                let sw = self.nodes[w.idx()].shape.clone();
                let (m, n) = (sw[0], sw[1]);
                if self.requires(w) {
                    let dv = &self.nodes[v.idx()].data;
                    let mut contrib = vec![0.0; m * n];
                    for i in 0..m {
                        for j in 0..n {
                            contrib[i * n + j] = g[i] * dv[j];
                        }
                    }
                    self.acc(w, &contrib);
                }
                if self.requires(v) {
                    let dw = &self.nodes[w.idx()].data;
                    let mut contrib = vec![0.0; n];
                    for i in 0..m {
                        let gi = g[i];
                        for j in 0..n {
                            contrib[j] += gi * dw[i * n + j];
                        }
                    }
                    self.acc(v, &contrib);
                }
            }
            Op::Linear { x, w, b } => {
                let sx = self.nodes[x.idx()].shape.clone();
                let sw = self.nodes[w.idx()].shape.clone();
                let (m, nin, nout) = (sx[0], sx[1], sw[0]);
                if self.requires(x) {
                    let dw = &self.nodes[w.idx()].data;
                    let mut contrib = vec![0.0; m * nin];
                    for r in 0..m {
                        for o in 0..nout {
                            let gro = g[r * nout + o];
                            let wrow = &dw[o * nin..o * nin + nin];
                            let crow = &mut contrib[r * nin..r * nin + nin];
                            for i in 0..nin {
                                crow[i] += gro * wrow[i];
                            }
                        }
                    }
                    self.acc(x, &contrib);
                }
                if self.requires(w) {
                    let dx = &self.nodes[x.idx()].data;
                    let mut contrib = vec![0.0; nout * nin];
                    for r in 0..m {
                        let xrow = &dx[r * nin..r * nin + nin];
                        for o in 0..nout {
                            let gro = g[r * nout + o];
                            let crow = &mut contrib[o * nin..o * nin + nin];
                            for i in 0..nin {
                                crow[i] += gro * xrow[i];
                            }
                        }
                    }
                    self.acc(w, &contrib);
                }
                if self.requires(b) {
                    let mut contrib = vec![0.0; nout];
                    for r in 0..m {
                        for o in 0..nout {
                            contrib[o] += g[r * nout + o];
                        }
                    }
                    self.acc(b, &contrib);
                }
            }
            Op::Transpose(a) => {
                if self.requires(a) {
                    let s_out = self.nodes[id].shape.clone();
                    let (n, m) = (s_out[0], s_out[1]);
                    let mut contrib = vec![0.0; m * n];
                    for i in 0..n {
                        for j in 0..m {
                            contrib[j * n + i] = g[i * m + j];
                        }
                    }
                    self.acc(a, &contrib);
                }
            }
            Op::Reshape(a) => {
                if self.requires(a) {
                    self.acc(a, g);
                }
            }
            Op::Row { x, index } => {
                if self.requires(x) {
                    let n = g.len();
                    let sx = self.nodes[x.idx()].data.len();
                    let mut contrib = vec![0.0; sx];
                    contrib[index * n..(index + 1) * n].copy_from_slice(g);
                    self.acc(x, &contrib);
                }
            }
            Op::StackRows(rows) => {
                let n = self.nodes[id].shape[1];
                for (i, r) in rows.iter().enumerate() {
                    if self.requires(*r) {
                        self.acc(*r, &g[i * n..(i + 1) * n]);
                    }
                }
            }
            Op::Slice { x, start } => {
                if self.requires(x) {
                    let sx = self.nodes[x.idx()].data.len();
                    let mut contrib = vec![0.0; sx];
                    contrib[start..start + g.len()].copy_from_slice(g);
                    self.acc(x, &contrib);
                }
            }
            Op::SumAll(a) => {
                if self.requires(a) {
                    let n = self.nodes[a.idx()].data.len();
                    let contrib = vec![g[0]; n];
                    self.acc(a, &contrib);
                }
            }
            Op::MeanAll(a) => {
                if self.requires(a) {
                    let n = self.nodes[a.idx()].data.len();
                    let contrib = vec![g[0] / n as f64; n];
                    self.acc(a, &contrib);
                }
            }
            Op::Conv2d {
                x,
                k,
                b,
                stride,
                padding,
            } => {
                let sx = self.nodes[x.idx()].shape.clone();
                let sk = self.nodes[k.idx()].shape.clone();
                let so = self.nodes[id].shape.clone();
                let (ci, h, w) = (sx[0], sx[1], sx[2]);
                let (co, ks) = (sk[0], sk[2]);
                let (ho, wo) = (so[1], so[2]);
                let need_x = self.requires(x);
                let need_k = self.requires(k);
                let need_b = self.requires(b);
                let mut gx = if need_x { vec![0.0; ci * h * w] } else { Vec::new() };
                let mut gk = if need_k {
                    vec![0.0; co * ci * ks * ks]
                } else {
                    Vec::new()
                };
                let mut gb = if need_b { vec![0.0; co] } else { Vec::new() };
                let dx = &self.nodes[x.idx()].data;
                let dk = &self.nodes[k.idx()].data;
                for oc in 0..co {
                    for oy in 0..ho {
                        for ox in 0..wo {
                            let gv = g[(oc * ho + oy) * wo + ox];
                            if need_b {
                                gb[oc] += gv;
                            }
                            if !(need_x || need_k) {
                                continue;
                            }
                            for ic in 0..ci {
                                for ky in 0..ks {
                                    let iy = oy * stride + ky;
                                    if iy < padding || iy - padding >= h {
                                        continue;
                                    }
                                    let iy = iy - padding;
                                    for kx in 0..ks {
                                        let ix = ox * stride + kx;
                                        if ix < padding || ix - padding >= w {
                                            continue;
                                        }
                                        let ix = ix - padding;
                                        let xi = (ic * h + iy) * w + ix;
                                        let kidx = ((oc * ci + ic) * ks + ky) * ks + kx;
                                        if need_k {
                                            gk[kidx] += gv * dx[xi];
                                        }
                                        if need_x {
                                            gx[xi] += gv * dk[kidx];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                if need_x {
                    self.acc(x, &gx);
                }
                if need_k {
                    self.acc(k, &gk);
                }
                if need_b {
                    self.acc(b, &gb);
                }
            }
        }
    }

    /// g * other with scalar-broadcast on either side, sized like g's source.
    fn mul_contrib(g: &[f64], other: &[f64]) -> Vec<f64> {
        if other.len() == 1 {
            g.iter().map(|gi| gi * other[0]).collect()
        } else {
            g.iter().zip(other).map(|(gi, oi)| gi * oi).collect()
        }
    }

    /// Accumulate `contrib` into the grad of `target`, collapsing to a
    /// scalar sum when the target was broadcast.
    fn acc_broadcast_vec(&mut self, target: TensorId, contrib: &[f64]) {
        let n = self.nodes[target.idx()].data.len();
        if n == 1 && contrib.len() != 1 {
            let s: f64 = contrib.iter().sum();
            self.acc(target, &[s]);
        } else {
            self.acc(target, contrib);
        }
    }

    fn acc_broadcast(&mut self, target: TensorId, g: &[f64], sign: f64) {
        if !self.requires(target) {
            return;
        }
        let n = self.nodes[target.idx()].data.len();
        if n == 1 && g.len() != 1 {
            let s: f64 = g.iter().sum();
            self.acc(target, &[sign * s]);
        } else if sign == 1.0 {
            self.acc(target, g);
        } else {
            let contrib: Vec<f64> = g.iter().map(|gi| sign * gi).collect();
            self.acc(target, &contrib);
        }
    }

    fn acc(&mut self, target: TensorId, contrib: &[f64]) {
        if !self.requires(target) {
            return;
        }
        let n = self.nodes[target.idx()].data.len();
        debug_assert_eq!(contrib.len(), n);
        let slot = self.grads[target.idx()].get_or_insert_with(|| vec![0.0; n]);
        for (s, c) in slot.iter_mut().zip(contrib) {
            *s += c;
        }
    }
}
