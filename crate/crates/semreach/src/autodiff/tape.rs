//! The computation tape: nodes, forward ops, and backpropagation.

use crate::real::Real;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AdError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("index {index} out of bounds for length {len}")]
    Index { index: usize, len: usize },
}

/// Handle to a tensor on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorId(usize);

/// Parameter bundle for one LSTM cell: input weights, recurrent weights, and
/// gate biases, with gates packed `[input, forget, candidate, output]`.
#[derive(Debug, Clone, Copy)]
pub struct LstmWeights {
    pub w_x: TensorId,
    pub w_h: TensorId,
    pub bias: TensorId,
}

enum Op<T> {
    Leaf,
    Add(TensorId, TensorId),
    Sub(TensorId, TensorId),
    Mul(TensorId, TensorId),
    Neg(TensorId),
    Scale(TensorId, T),
    AddConst(TensorId, T),
    Relu(TensorId),
    Sigmoid(TensorId),
    Tanh(TensorId),
    MatVec {
        x: TensorId,
        w: TensorId,
        b: Option<TensorId>,
    },
    Conv2d {
        input: TensorId,
        kernel: TensorId,
        bias: TensorId,
        stride: usize,
    },
    Concat(TensorId, TensorId),
    Slice {
        src: TensorId,
        lo: usize,
    },
    Softmax(TensorId),
    LogSoftmax(TensorId),
    Gather {
        src: TensorId,
        index: usize,
    },
    Sum(TensorId),
}

struct Node<T> {
    op: Op<T>,
    shape: Vec<usize>,
    values: Vec<T>,
    grad: Option<Vec<T>>,
    requires: bool,
}

/// Single-owner computation graph. Values flow forward as ops are pushed;
/// [`Tape::backward`] walks the recorded nodes in reverse.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    fn push(&mut self, op: Op<T>, shape: Vec<usize>, values: Vec<T>, requires: bool) -> TensorId {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        self.nodes.push(Node {
            op,
            shape,
            values,
            grad: None,
            requires,
        });
        TensorId(self.nodes.len() - 1)
    }

    fn requires(&self, id: TensorId) -> bool {
        self.nodes[id.0].requires
    }

    /// Registers a leaf tensor. Leaves with `requires_grad` accumulate
    /// gradients across backward passes until [`Tape::zero_grad`].
    pub fn leaf(&mut self, shape: &[usize], values: Vec<T>, requires_grad: bool) -> TensorId {
        assert_eq!(
            shape.iter().product::<usize>(),
            values.len(),
            "leaf shape/value length mismatch"
        );
        self.push(Op::Leaf, shape.to_vec(), values, requires_grad)
    }

    /// Constant scalar leaf.
    pub fn scalar(&mut self, v: T) -> TensorId {
        self.leaf(&[1], vec![v], false)
    }

    pub fn values(&self, id: TensorId) -> &[T] {
        &self.nodes[id.0].values
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn len(&self, id: TensorId) -> usize {
        self.nodes[id.0].values.len()
    }

    /// Scalar value of a one-element tensor.
    pub fn item(&self, id: TensorId) -> T {
        debug_assert_eq!(self.len(id), 1);
        self.nodes[id.0].values[0]
    }

    /// Gradient accumulated on a tensor, if any backward pass reached it.
    pub fn grad(&self, id: TensorId) -> Option<&[T]> {
        self.nodes[id.0].grad.as_deref()
    }

    /// Overwrites a leaf's values in place (parameter refresh between
    /// rollout windows). The shape must be unchanged.
    pub fn set_values(&mut self, id: TensorId, values: &[T]) {
        let node = &mut self.nodes[id.0];
        assert_eq!(node.values.len(), values.len(), "set_values length mismatch");
        node.values.copy_from_slice(values);
    }

    pub fn zero_grad(&mut self, id: TensorId) {
        if let Some(g) = &mut self.nodes[id.0].grad {
            g.iter_mut().for_each(|x| *x = T::ZERO);
        }
    }

    /// Number of nodes currently on the tape; pairs with [`Tape::truncate`].
    pub fn watermark(&self) -> usize {
        self.nodes.len()
    }

    /// Drops every node pushed after `mark`, keeping earlier nodes (and
    /// their accumulated gradients) intact.
    pub fn truncate(&mut self, mark: usize) {
        self.nodes.truncate(mark);
    }

    // ---- elementwise ----

    fn check_same_len(&self, a: TensorId, b: TensorId, what: &str) -> Result<(), AdError> {
        if self.len(a) != self.len(b) {
            return Err(AdError::Shape(format!(
                "{what}: {} vs {}",
                self.len(a),
                self.len(b)
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, AdError> {
        self.check_same_len(a, b, "add")?;
        let values = self.nodes[a.0]
            .values
            .iter()
            .zip(&self.nodes[b.0].values)
            .map(|(&x, &y)| x + y)
            .collect();
        let shape = self.nodes[a.0].shape.clone();
        let req = self.requires(a) || self.requires(b);
        Ok(self.push(Op::Add(a, b), shape, values, req))
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, AdError> {
        self.check_same_len(a, b, "sub")?;
        let values = self.nodes[a.0]
            .values
            .iter()
            .zip(&self.nodes[b.0].values)
            .map(|(&x, &y)| x - y)
            .collect();
        let shape = self.nodes[a.0].shape.clone();
        let req = self.requires(a) || self.requires(b);
        Ok(self.push(Op::Sub(a, b), shape, values, req))
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, AdError> {
        self.check_same_len(a, b, "mul")?;
        let values = self.nodes[a.0]
            .values
            .iter()
            .zip(&self.nodes[b.0].values)
            .map(|(&x, &y)| x * y)
            .collect();
        let shape = self.nodes[a.0].shape.clone();
        let req = self.requires(a) || self.requires(b);
        Ok(self.push(Op::Mul(a, b), shape, values, req))
    }

    pub fn neg(&mut self, a: TensorId) -> TensorId {
        let values = self.nodes[a.0].values.iter().map(|&x| -x).collect();
        let shape = self.nodes[a.0].shape.clone();
        let req = self.requires(a);
        self.push(Op::Neg(a), shape, values, req)
    }

    pub fn scale(&mut self, a: TensorId, c: T) -> TensorId {
        let values = self.nodes[a.0].values.iter().map(|&x| x * c).collect();
        let shape = self.nodes[a.0].shape.clone();
        let req = self.requires(a);
        self.push(Op::Scale(a, c), shape, values, req)
    }

    pub fn add_const(&mut self, a: TensorId, c: T) -> TensorId {
        let values = self.nodes[a.0].values.iter().map(|&x| x + c).collect();
        let shape = self.nodes[a.0].shape.clone();
        let req = self.requires(a);
        self.push(Op::AddConst(a, c), shape, values, req)
    }

    /// Elementwise max(0, x). The subgradient at exactly 0 is 0.
    pub fn relu(&mut self, a: TensorId) -> TensorId {
        let values = self.nodes[a.0]
            .values
            .iter()
            .map(|&x| x.maxv(T::ZERO))
            .collect();
        let shape = self.nodes[a.0].shape.clone();
        let req = self.requires(a);
        self.push(Op::Relu(a), shape, values, req)
    }

    pub fn sigmoid(&mut self, a: TensorId) -> TensorId {
        let values = self.nodes[a.0].values.iter().map(|&x| sigmoid(x)).collect();
        let shape = self.nodes[a.0].shape.clone();
        let req = self.requires(a);
        self.push(Op::Sigmoid(a), shape, values, req)
    }

    pub fn tanh(&mut self, a: TensorId) -> TensorId {
        let values = self.nodes[a.0].values.iter().map(|&x| x.tanh()).collect();
        let shape = self.nodes[a.0].shape.clone();
        let req = self.requires(a);
        self.push(Op::Tanh(a), shape, values, req)
    }

    // ---- linear layers ----

    /// `x (n)` times `w (n x m, row-major)` plus `b (m)`.
    pub fn fully_connected(
        &mut self,
        x: TensorId,
        w: TensorId,
        b: TensorId,
    ) -> Result<TensorId, AdError> {
        self.matvec(x, w, Some(b))
    }

    pub fn matvec(
        &mut self,
        x: TensorId,
        w: TensorId,
        b: Option<TensorId>,
    ) -> Result<TensorId, AdError> {
        let n = self.len(x);
        let wshape = self.shape(w);
        if wshape.len() != 2 || wshape[0] != n {
            return Err(AdError::Shape(format!(
                "matvec: input length {n} does not match weight shape {wshape:?}"
            )));
        }
        let m = wshape[1];
        if let Some(b) = b {
            if self.len(b) != m {
                return Err(AdError::Shape(format!(
                    "matvec: bias length {} does not match output width {m}",
                    self.len(b)
                )));
            }
        }
        let mut out = match b {
            Some(b) => self.nodes[b.0].values.clone(),
            None => vec![T::ZERO; m],
        };
        {
            let xs = &self.nodes[x.0].values;
            let ws = &self.nodes[w.0].values;
            for (i, &xi) in xs.iter().enumerate() {
                let row = &ws[i * m..(i + 1) * m];
                for (o, &wij) in out.iter_mut().zip(row) {
                    *o += xi * wij;
                }
            }
        }
        let req =
            self.requires(x) || self.requires(w) || b.map(|b| self.requires(b)).unwrap_or(false);
        Ok(self.push(Op::MatVec { x, w, b }, vec![m], out, req))
    }

    /// Valid (unpadded) 2-D convolution with square kernel.
    ///
    /// `input` is `H x W x Cin` (row-major, channel fastest), `kernel` is
    /// `k x k x Cin x Cout`, `bias` is `Cout`. Output is `H' x W' x Cout`
    /// with `H' = (H - k) / stride + 1`.
    pub fn conv2d(
        &mut self,
        input: TensorId,
        kernel: TensorId,
        bias: TensorId,
        stride: usize,
    ) -> Result<TensorId, AdError> {
        let ishape = self.shape(input);
        let kshape = self.shape(kernel);
        if ishape.len() != 3 {
            return Err(AdError::Shape(format!(
                "conv2d: input must be H x W x C, got {ishape:?}"
            )));
        }
        if kshape.len() != 4 || kshape[0] != kshape[1] {
            return Err(AdError::Shape(format!(
                "conv2d: kernel must be k x k x Cin x Cout, got {kshape:?}"
            )));
        }
        let (h, w, cin) = (ishape[0], ishape[1], ishape[2]);
        let (k, kcin, cout) = (kshape[0], kshape[2], kshape[3]);
        if kcin != cin {
            return Err(AdError::Shape(format!(
                "conv2d: input has {cin} channels but kernel expects {kcin}"
            )));
        }
        if k > h || k > w {
            return Err(AdError::Shape(format!(
                "conv2d: kernel size {k} exceeds input {h}x{w}"
            )));
        }
        if self.len(bias) != cout {
            return Err(AdError::Shape(format!(
                "conv2d: bias length {} does not match {cout} output channels",
                self.len(bias)
            )));
        }
        if stride == 0 {
            return Err(AdError::Shape("conv2d: stride must be positive".into()));
        }
        let oh = (h - k) / stride + 1;
        let ow = (w - k) / stride + 1;
        let mut out = vec![T::ZERO; oh * ow * cout];
        {
            let xs = &self.nodes[input.0].values;
            let ks = &self.nodes[kernel.0].values;
            let bs = &self.nodes[bias.0].values;
            let mut acc = vec![T::ZERO; cout];
            for oy in 0..oh {
                for ox in 0..ow {
                    acc.copy_from_slice(bs);
                    for ky in 0..k {
                        let iy = oy * stride + ky;
                        for kx in 0..k {
                            let ix = ox * stride + kx;
                            let ibase = (iy * w + ix) * cin;
                            let kbase = (ky * k + kx) * cin * cout;
                            for ci in 0..cin {
                                let xv = xs[ibase + ci];
                                let krow = &ks[kbase + ci * cout..kbase + (ci + 1) * cout];
                                for (a, &kv) in acc.iter_mut().zip(krow) {
                                    *a += xv * kv;
                                }
                            }
                        }
                    }
                    out[(oy * ow + ox) * cout..(oy * ow + ox + 1) * cout].copy_from_slice(&acc);
                }
            }
        }
        let req = self.requires(input) || self.requires(kernel) || self.requires(bias);
        Ok(self.push(
            Op::Conv2d {
                input,
                kernel,
                bias,
                stride,
            },
            vec![oh, ow, cout],
            out,
            req,
        ))
    }

    /// One step of a standard four-gate LSTM.
    ///
    /// `x` is the input, `h`/`c` the previous hidden and cell state of width
    /// `d`. `w_x` is `len(x) x 4d`, `w_h` is `d x 4d`, `bias` is `4d`.
    /// Returns `(h', c')`.
    pub fn lstm_cell(
        &mut self,
        x: TensorId,
        h: TensorId,
        c: TensorId,
        weights: &LstmWeights,
    ) -> Result<(TensorId, TensorId), AdError> {
        let d = self.len(h);
        if self.len(c) != d {
            return Err(AdError::Shape(format!(
                "lstm_cell: hidden width {d} but cell width {}",
                self.len(c)
            )));
        }
        let wx_shape = self.shape(weights.w_x).to_vec();
        if wx_shape.len() != 2 || wx_shape[0] != self.len(x) || wx_shape[1] != 4 * d {
            return Err(AdError::Shape(format!(
                "lstm_cell: w_x shape {wx_shape:?} does not match input {} and width {d}",
                self.len(x)
            )));
        }
        let from_x = self.matvec(x, weights.w_x, Some(weights.bias))?;
        let from_h = self.matvec(h, weights.w_h, None)?;
        let gates = self.add(from_x, from_h)?;
        let i_gate = self.slice(gates, 0, d)?;
        let f_gate = self.slice(gates, d, 2 * d)?;
        let g_gate = self.slice(gates, 2 * d, 3 * d)?;
        let o_gate = self.slice(gates, 3 * d, 4 * d)?;
        let i_act = self.sigmoid(i_gate);
        let f_act = self.sigmoid(f_gate);
        let g_act = self.tanh(g_gate);
        let o_act = self.sigmoid(o_gate);
        let keep = self.mul(f_act, c)?;
        let write = self.mul(i_act, g_act)?;
        let c_next = self.add(keep, write)?;
        let c_tanh = self.tanh(c_next);
        let h_next = self.mul(o_act, c_tanh)?;
        Ok((h_next, c_next))
    }

    // ---- vector shaping ----

    pub fn concat(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let mut values = self.nodes[a.0].values.clone();
        values.extend_from_slice(&self.nodes[b.0].values);
        let len = values.len();
        let req = self.requires(a) || self.requires(b);
        self.push(Op::Concat(a, b), vec![len], values, req)
    }

    /// 1-D slice `[lo, hi)` of a tensor viewed flat.
    pub fn slice(&mut self, src: TensorId, lo: usize, hi: usize) -> Result<TensorId, AdError> {
        let len = self.len(src);
        if lo > hi || hi > len {
            return Err(AdError::Index { index: hi, len });
        }
        let values = self.nodes[src.0].values[lo..hi].to_vec();
        let req = self.requires(src);
        Ok(self.push(Op::Slice { src, lo }, vec![hi - lo], values, req))
    }

    /// Picks one element as a scalar.
    pub fn gather(&mut self, src: TensorId, index: usize) -> Result<TensorId, AdError> {
        let len = self.len(src);
        if index >= len {
            return Err(AdError::Index { index, len });
        }
        let v = self.nodes[src.0].values[index];
        let req = self.requires(src);
        Ok(self.push(Op::Gather { src, index }, vec![1], vec![v], req))
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, a: TensorId) -> TensorId {
        let total = self.nodes[a.0].values.iter().copied().sum();
        let req = self.requires(a);
        self.push(Op::Sum(a), vec![1], vec![total], req)
    }

    /// Numerically stable softmax over the whole (flat) tensor.
    pub fn softmax(&mut self, a: TensorId) -> TensorId {
        let xs = &self.nodes[a.0].values;
        let max = xs.iter().copied().fold(xs[0], Real::maxv);
        let mut values: Vec<T> = xs.iter().map(|&x| (x - max).exp()).collect();
        let total: T = values.iter().copied().sum();
        values.iter_mut().for_each(|v| *v = *v / total);
        let shape = self.nodes[a.0].shape.clone();
        let req = self.requires(a);
        self.push(Op::Softmax(a), shape, values, req)
    }

    /// Numerically stable log-softmax over the whole (flat) tensor.
    pub fn log_softmax(&mut self, a: TensorId) -> TensorId {
        let xs = &self.nodes[a.0].values;
        let max = xs.iter().copied().fold(xs[0], Real::maxv);
        let log_norm: T = xs
            .iter()
            .map(|&x| (x - max).exp())
            .sum::<T>()
            .ln();
        let values = xs.iter().map(|&x| x - max - log_norm).collect();
        let shape = self.nodes[a.0].shape.clone();
        let req = self.requires(a);
        self.push(Op::LogSoftmax(a), shape, values, req)
    }

    // ---- backward ----

    /// Backpropagates from a scalar loss, adding `d loss / d node` into every
    /// gradient-requiring node reachable from it. Contributions from repeated
    /// calls accumulate until [`Tape::zero_grad`].
    pub fn backward(&mut self, loss: TensorId) -> Result<(), AdError> {
        if self.len(loss) != 1 {
            return Err(AdError::NonScalarLoss(self.shape(loss).to_vec()));
        }
        if !self.requires(loss) {
            return Ok(());
        }
        // Per-call buffers keep repeated backward calls additive.
        let mut flowing: Vec<Option<Vec<T>>> = vec![None; loss.0 + 1];
        flowing[loss.0] = Some(vec![T::ONE]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = flowing[idx].take() else {
                continue;
            };
            if !self.nodes[idx].requires {
                continue;
            }
            self.propagate(idx, &g, &mut flowing);
            let node = &mut self.nodes[idx];
            let acc = node
                .grad
                .get_or_insert_with(|| vec![T::ZERO; node.values.len()]);
            for (a, &gi) in acc.iter_mut().zip(&g) {
                *a += gi;
            }
        }
        Ok(())
    }

    fn propagate(&self, idx: usize, g: &[T], flowing: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[idx];
        let mut send = |target: TensorId, f: &mut dyn FnMut(&mut [T])| {
            if !self.nodes[target.0].requires {
                return;
            }
            let buf = flowing[target.0]
                .get_or_insert_with(|| vec![T::ZERO; self.nodes[target.0].values.len()]);
            f(buf);
        };
        match node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                send(a, &mut |buf| add_into(buf, g));
                send(b, &mut |buf| add_into(buf, g));
            }
            Op::Sub(a, b) => {
                send(a, &mut |buf| add_into(buf, g));
                send(b, &mut |buf| {
                    for (o, &gi) in buf.iter_mut().zip(g) {
                        *o -= gi;
                    }
                });
            }
            Op::Mul(a, b) => {
                let av = &self.nodes[a.0].values;
                let bv = &self.nodes[b.0].values;
                send(a, &mut |buf| {
                    for ((o, &gi), &bi) in buf.iter_mut().zip(g).zip(bv) {
                        *o += gi * bi;
                    }
                });
                send(b, &mut |buf| {
                    for ((o, &gi), &ai) in buf.iter_mut().zip(g).zip(av) {
                        *o += gi * ai;
                    }
                });
            }
            Op::Neg(a) => send(a, &mut |buf| {
                for (o, &gi) in buf.iter_mut().zip(g) {
                    *o -= gi;
                }
            }),
            Op::Scale(a, c) => send(a, &mut |buf| {
                for (o, &gi) in buf.iter_mut().zip(g) {
                    *o += gi * c;
                }
            }),
            Op::AddConst(a, _) => send(a, &mut |buf| add_into(buf, g)),
            Op::Relu(a) => {
                let xs = &self.nodes[a.0].values;
                send(a, &mut |buf| {
                    for ((o, &gi), &x) in buf.iter_mut().zip(g).zip(xs) {
                        if x > T::ZERO {
                            *o += gi;
                        }
                    }
                });
            }
            Op::Sigmoid(a) => {
                let ys = &node.values;
                send(a, &mut |buf| {
                    for ((o, &gi), &y) in buf.iter_mut().zip(g).zip(ys) {
                        *o += gi * y * (T::ONE - y);
                    }
                });
            }
            Op::Tanh(a) => {
                let ys = &node.values;
                send(a, &mut |buf| {
                    for ((o, &gi), &y) in buf.iter_mut().zip(g).zip(ys) {
                        *o += gi * (T::ONE - y * y);
                    }
                });
            }
            Op::MatVec { x, w, b } => {
                let m = node.values.len();
                let xs = &self.nodes[x.0].values;
                let ws = &self.nodes[w.0].values;
                send(x, &mut |buf| {
                    for (i, o) in buf.iter_mut().enumerate() {
                        let row = &ws[i * m..(i + 1) * m];
                        let mut acc = T::ZERO;
                        for (&gi, &wij) in g.iter().zip(row) {
                            acc += gi * wij;
                        }
                        *o += acc;
                    }
                });
                send(w, &mut |buf| {
                    for (i, &xi) in xs.iter().enumerate() {
                        let row = &mut buf[i * m..(i + 1) * m];
                        for (o, &gi) in row.iter_mut().zip(g) {
                            *o += xi * gi;
                        }
                    }
                });
                if let Some(b) = b {
                    send(b, &mut |buf| add_into(buf, g));
                }
            }
            Op::Conv2d {
                input,
                kernel,
                bias,
                stride,
            } => {
                let ishape = &self.nodes[input.0].shape;
                let kshape = &self.nodes[kernel.0].shape;
                let (h, w, cin) = (ishape[0], ishape[1], ishape[2]);
                let (k, cout) = (kshape[0], kshape[3]);
                let oh = (h - k) / stride + 1;
                let ow = (w - k) / stride + 1;
                let xs = &self.nodes[input.0].values;
                let ks = &self.nodes[kernel.0].values;
                send(input, &mut |buf| {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let gout = &g[(oy * ow + ox) * cout..(oy * ow + ox + 1) * cout];
                            for ky in 0..k {
                                let iy = oy * stride + ky;
                                for kx in 0..k {
                                    let ix = ox * stride + kx;
                                    let ibase = (iy * w + ix) * cin;
                                    let kbase = (ky * k + kx) * cin * cout;
                                    for ci in 0..cin {
                                        let krow =
                                            &ks[kbase + ci * cout..kbase + (ci + 1) * cout];
                                        let mut acc = T::ZERO;
                                        for (&gv, &kv) in gout.iter().zip(krow) {
                                            acc += gv * kv;
                                        }
                                        buf[ibase + ci] += acc;
                                    }
                                }
                            }
                        }
                    }
                });
                send(kernel, &mut |buf| {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let gout = &g[(oy * ow + ox) * cout..(oy * ow + ox + 1) * cout];
                            for ky in 0..k {
                                let iy = oy * stride + ky;
                                for kx in 0..k {
                                    let ix = ox * stride + kx;
                                    let ibase = (iy * w + ix) * cin;
                                    let kbase = (ky * k + kx) * cin * cout;
                                    for ci in 0..cin {
                                        let xv = xs[ibase + ci];
                                        let krow =
                                            &mut buf[kbase + ci * cout..kbase + (ci + 1) * cout];
                                        for (o, &gv) in krow.iter_mut().zip(gout) {
                                            *o += xv * gv;
                                        }
                                    }
                                }
                            }
                        }
                    }
                });
                send(bias, &mut |buf| {
                    for cell in 0..oh * ow {
                        let gout = &g[cell * cout..(cell + 1) * cout];
                        add_into(buf, gout);
                    }
                });
            }
            Op::Concat(a, b) => {
                let alen = self.nodes[a.0].values.len();
                send(a, &mut |buf| add_into(buf, &g[..alen]));
                send(b, &mut |buf| add_into(buf, &g[alen..]));
            }
            Op::Slice { src, lo } => {
                let n = g.len();
                send(src, &mut |buf| add_into(&mut buf[lo..lo + n], g));
            }
            Op::Gather { src, index } => {
                send(src, &mut |buf| buf[index] += g[0]);
            }
            Op::Sum(a) => {
                send(a, &mut |buf| {
                    for o in buf.iter_mut() {
                        *o += g[0];
                    }
                });
            }
            Op::Softmax(a) => {
                let ys = &node.values;
                let dot: T = g.iter().zip(ys).map(|(&gi, &yi)| gi * yi).sum();
                send(a, &mut |buf| {
                    for ((o, &gi), &yi) in buf.iter_mut().zip(g).zip(ys) {
                        *o += yi * (gi - dot);
                    }
                });
            }
            Op::LogSoftmax(a) => {
                let ys = &node.values;
                let gsum: T = g.iter().copied().sum();
                send(a, &mut |buf| {
                    for ((o, &gi), &yi) in buf.iter_mut().zip(g).zip(ys) {
                        *o += gi - yi.exp() * gsum;
                    }
                });
            }
        }
    }
}

#[inline]
fn add_into<T: Real>(dst: &mut [T], src: &[T]) {
    for (o, &s) in dst.iter_mut().zip(src) {
        *o += s;
    }
}

#[inline]
fn sigmoid<T: Real>(x: T) -> T {
    // Split on sign so exp never overflows.
    if x >= T::ZERO {
        T::ONE / (T::ONE + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::ONE + e)
    }
}
