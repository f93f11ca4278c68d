//! Reverse-mode automatic differentiation over dense tensors.
//!
//! Operations append nodes to a [`Tape`] in evaluation order, which is a
//! valid topological order, so [`Tape::backward`] is a single reverse sweep.
//! Heavy ops (convolutions, the LSTM cell) are recorded as fused nodes with
//! hand-written adjoints rather than as scalar graphs.

use super::kernels::{self, ConvGeom};
use super::tensor::Tensor;
use crate::error::{ensure, Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Tape handles for the four parameter tensors of one LSTM layer, laid out
/// gate-major in `i, f, g, o` order: `w_ih` is `[4H × I]`, `w_hh` is `[4H × H]`.
#[derive(Debug, Clone, Copy)]
pub struct LstmVars {
    pub w_ih: Var,
    pub b_ih: Var,
    pub w_hh: Var,
    pub b_hh: Var,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv1d {
        input: Var,
        weight: Var,
        bias: Var,
        geom: ConvGeom,
    },
    Deconv1d {
        input: Var,
        weight: Var,
        bias: Var,
        geom: ConvGeom,
    },
    Linear {
        input: Var,
        weight: Var,
        bias: Var,
    },
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Add(Var, Var),
    Scale(Var, f64),
    Sum(Vec<Var>),
    Concat(Vec<Var>),
    Slice {
        src: Var,
        start: usize,
    },
    Column {
        src: Var,
        index: usize,
    },
    StackColumns(Vec<Var>),
    Lstm {
        input: Var,
        h_prev: Var,
        c_prev: Var,
        params: LstmVars,
        gates: Vec<f64>,
    },
    Mse(Var, Var),
    Bce {
        p: Var,
        target: f64,
    },
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
    needs_grad: bool,
}

/// Probabilities fed to [`Tape::bce`] are clamped to `[BCE_EPS, 1 - BCE_EPS]`.
pub const BCE_EPS: f64 = 1e-7;

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Per-node gradients produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Adds the gradient of `v` into `target`'s gradient buffer. Nodes that
    /// did not participate contribute nothing.
    pub fn accumulate_into(&self, v: Var, target: &mut Tensor) -> Result<()> {
        match self.get(v) {
            Some(g) => target.accumulate_grad(g),
            None => {
                if target.grad().is_none() {
                    target.accumulate_grad(&vec![0.0; target.len()])?;
                }
                Ok(())
            }
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op, needs_grad: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node {
            shape,
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    fn ng(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    /// Records a leaf. It participates in differentiation iff the tensor has
    /// `requires_grad` set.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), Op::Leaf, t.requires_grad())
    }

    /// Records a differentiable leaf regardless of the tensor's flag.
    pub fn param(&mut self, t: &Tensor) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), Op::Leaf, true)
    }

    pub fn constant(&mut self, shape: &[usize], value: Vec<f64>) -> Result<Var> {
        let t = Tensor::new(shape, value)?;
        Ok(self.push(t.shape().to_vec(), t.into_data(), Op::Leaf, false))
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.node(v).value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.node(v).shape
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.node(v).value[0]
    }

    pub fn to_tensor(&self, v: Var) -> Tensor {
        let n = self.node(v);
        Tensor::new(&n.shape, n.value.clone()).expect("tape nodes hold consistent shapes")
    }

    fn dims2(&self, v: Var, what: &str) -> Result<(usize, usize)> {
        let s = self.shape(v);
        ensure!(s.len() == 2, Dimension, "{what} must be rank 2, got {s:?}");
        Ok((s[0], s[1]))
    }

    fn conv_geom(&self, input: Var, weight: Var, bias: Var, stride: usize, padding: usize, transposed: bool) -> Result<(ConvGeom, usize)> {
        let (cin, len) = self.dims2(input, "convolution input")?;
        let ws = self.shape(weight);
        ensure!(ws.len() == 3, Dimension, "kernel must be rank 3, got {ws:?}");
        ensure!(stride >= 1, Contract, "stride must be at least 1");
        let (geom, bias_len) = if transposed {
            ensure!(
                ws[0] == cin,
                Dimension,
                "deconvolution kernel expects {} input channels, input has {cin}",
                ws[0]
            );
            (
                ConvGeom {
                    in_channels: cin,
                    out_channels: ws[1],
                    kernel: ws[2],
                    stride,
                    padding,
                },
                ws[1],
            )
        } else {
            ensure!(
                ws[1] == cin,
                Dimension,
                "convolution kernel expects {} input channels, input has {cin}",
                ws[1]
            );
            (
                ConvGeom {
                    in_channels: cin,
                    out_channels: ws[0],
                    kernel: ws[2],
                    stride,
                    padding,
                },
                ws[0],
            )
        };
        ensure!(
            self.shape(bias) == [bias_len],
            Dimension,
            "bias shape {:?} does not match {bias_len} output channels",
            self.shape(bias)
        );
        Ok((geom, len))
    }

    pub fn conv1d(&mut self, input: Var, weight: Var, bias: Var, stride: usize, padding: usize) -> Result<Var> {
        let (geom, len_in) = self.conv_geom(input, weight, bias, stride, padding, false)?;
        let len_out = kernels::conv_out_len(len_in, geom.kernel, stride, padding).ok_or_else(|| {
            Error::Dimension(format!(
                "kernel {} longer than padded input {}",
                geom.kernel,
                len_in + 2 * padding
            ))
        })?;
        let out = kernels::conv1d_forward(
            &geom,
            self.value(input),
            len_in,
            self.value(weight),
            self.value(bias),
            len_out,
        );
        let ng = self.ng(&[input, weight, bias]);
        Ok(self.push(
            vec![geom.out_channels, len_out],
            out,
            Op::Conv1d {
                input,
                weight,
                bias,
                geom,
            },
            ng,
        ))
    }

    /// Transposed convolution. The output has
    /// `(T - 1) * stride - 2 * padding + K + output_padding` columns.
    pub fn deconv1d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Var,
        stride: usize,
        padding: usize,
        output_padding: usize,
    ) -> Result<Var> {
        let (geom, len_in) = self.conv_geom(input, weight, bias, stride, padding, true)?;
        ensure!(
            output_padding < stride.max(1) || output_padding == 0,
            Contract,
            "output padding {output_padding} must be smaller than stride {stride}"
        );
        let len_out = kernels::deconv_natural_len(len_in, geom.kernel, stride, padding)
            .map(|n| n + output_padding)
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Dimension("deconvolution output would be empty".into()))?;
        let out = kernels::deconv1d_forward(
            &geom,
            self.value(input),
            len_in,
            self.value(weight),
            self.value(bias),
            len_out,
        );
        let ng = self.ng(&[input, weight, bias]);
        Ok(self.push(
            vec![geom.out_channels, len_out],
            out,
            Op::Deconv1d {
                input,
                weight,
                bias,
                geom,
            },
            ng,
        ))
    }

    pub fn linear(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let (rows, cols) = self.dims2(weight, "linear weight")?;
        let n = self.value(input).len();
        ensure!(
            n == cols,
            Dimension,
            "linear weight expects {cols} inputs, got {n}"
        );
        ensure!(
            self.value(bias).len() == rows,
            Dimension,
            "linear bias has {} entries, weight has {rows} rows",
            self.value(bias).len()
        );
        let out = kernels::matvec_bias(self.value(weight), self.value(input), self.value(bias), rows, cols);
        let ng = self.ng(&[input, weight, bias]);
        Ok(self.push(vec![rows], out, Op::Linear { input, weight, bias }, ng))
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let n = self.node(x);
        let shape = n.shape.clone();
        let value = n.value.iter().map(|&v| f(v)).collect();
        let ng = n.needs_grad;
        self.push(shape, value, op, ng)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, kernels::sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        self.unary(x, |v| v * k, Op::Scale(x, k))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        ensure!(
            self.shape(a) == self.shape(b),
            Dimension,
            "add of shapes {:?} and {:?}",
            self.shape(a),
            self.shape(b)
        );
        let value = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x + y)
            .collect();
        let ng = self.ng(&[a, b]);
        Ok(self.push(self.shape(a).to_vec(), value, Op::Add(a, b), ng))
    }

    /// Sum of scalar nodes.
    pub fn sum(&mut self, terms: &[Var]) -> Result<Var> {
        ensure!(!terms.is_empty(), Contract, "sum of no terms");
        for t in terms {
            ensure!(
                self.value(*t).len() == 1,
                Dimension,
                "sum expects scalars, got shape {:?}",
                self.shape(*t)
            );
        }
        let total = terms.iter().map(|t| self.scalar(*t)).sum();
        let ng = self.ng(terms);
        Ok(self.push(vec![1], vec![total], Op::Sum(terms.to_vec()), ng))
    }

    /// Flattened concatenation into a vector, in argument order.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        ensure!(!parts.is_empty(), Contract, "concat of no parts");
        let value: Vec<f64> = parts.iter().flat_map(|p| self.value(*p).iter().copied()).collect();
        let ng = self.ng(parts);
        Ok(self.push(vec![value.len()], value, Op::Concat(parts.to_vec()), ng))
    }

    pub fn slice(&mut self, src: Var, start: usize, len: usize) -> Result<Var> {
        let n = self.value(src).len();
        ensure!(
            len > 0 && start + len <= n,
            Dimension,
            "slice {start}..{} out of range for length {n}",
            start + len
        );
        let value = self.value(src)[start..start + len].to_vec();
        let ng = self.node(src).needs_grad;
        Ok(self.push(vec![len], value, Op::Slice { src, start }, ng))
    }

    /// Column `index` of a `[rows × cols]` node, as a vector.
    pub fn column(&mut self, src: Var, index: usize) -> Result<Var> {
        let (rows, cols) = self.dims2(src, "column source")?;
        ensure!(index < cols, Dimension, "column {index} out of range for {cols} columns");
        let v = self.value(src);
        let value = (0..rows).map(|r| v[r * cols + index]).collect();
        let ng = self.node(src).needs_grad;
        Ok(self.push(vec![rows], value, Op::Column { src, index }, ng))
    }

    /// Stacks equal-length vectors as the columns of a `[rows × n]` node.
    pub fn stack_columns(&mut self, cols: &[Var]) -> Result<Var> {
        ensure!(!cols.is_empty(), Contract, "stack of no columns");
        let rows = self.value(cols[0]).len();
        for c in cols {
            ensure!(
                self.value(*c).len() == rows,
                Dimension,
                "column lengths differ: {} vs {rows}",
                self.value(*c).len()
            );
        }
        let n = cols.len();
        let mut value = vec![0.0; rows * n];
        for (j, c) in cols.iter().enumerate() {
            for (r, x) in self.value(*c).iter().enumerate() {
                value[r * n + j] = *x;
            }
        }
        let ng = self.ng(cols);
        Ok(self.push(vec![rows, n], value, Op::StackColumns(cols.to_vec()), ng))
    }

    /// One LSTM step. Returns the new hidden and cell state.
    pub fn lstm_cell(&mut self, input: Var, h_prev: Var, c_prev: Var, p: &LstmVars) -> Result<(Var, Var)> {
        let hidden = self.value(h_prev).len();
        let n_in = self.value(input).len();
        ensure!(
            self.value(c_prev).len() == hidden,
            Dimension,
            "cell state length {} differs from hidden length {hidden}",
            self.value(c_prev).len()
        );
        ensure!(
            self.shape(p.w_ih) == [4 * hidden, n_in],
            Dimension,
            "input-hidden weight {:?} does not match [{}, {n_in}]",
            self.shape(p.w_ih),
            4 * hidden
        );
        ensure!(
            self.shape(p.w_hh) == [4 * hidden, hidden],
            Dimension,
            "hidden-hidden weight {:?} does not match [{}, {hidden}]",
            self.shape(p.w_hh),
            4 * hidden
        );
        ensure!(
            self.value(p.b_ih).len() == 4 * hidden && self.value(p.b_hh).len() == 4 * hidden,
            Dimension,
            "LSTM biases must have {} entries",
            4 * hidden
        );
        let step = kernels::lstm_forward(
            self.value(input),
            self.value(h_prev),
            self.value(c_prev),
            self.value(p.w_ih),
            self.value(p.b_ih),
            self.value(p.w_hh),
            self.value(p.b_hh),
            hidden,
        );
        let mut value = step.h;
        value.extend_from_slice(&step.c);
        let ng = self.ng(&[input, h_prev, c_prev, p.w_ih, p.b_ih, p.w_hh, p.b_hh]);
        let joint = self.push(
            vec![2 * hidden],
            value,
            Op::Lstm {
                input,
                h_prev,
                c_prev,
                params: *p,
                gates: step.gates,
            },
            ng,
        );
        let h = self.slice(joint, 0, hidden)?;
        let c = self.slice(joint, hidden, hidden)?;
        Ok((h, c))
    }

    /// Mean of squared elementwise differences.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        ensure!(
            self.shape(pred) == self.shape(target),
            Dimension,
            "mse of shapes {:?} and {:?}",
            self.shape(pred),
            self.shape(target)
        );
        let n = self.value(pred).len() as f64;
        let loss = self
            .value(pred)
            .iter()
            .zip(self.value(target))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / n;
        let ng = self.ng(&[pred, target]);
        Ok(self.push(vec![1], vec![loss], Op::Mse(pred, target), ng))
    }

    /// Binary cross-entropy of a scalar probability against a 0/1 target.
    pub fn bce(&mut self, p: Var, target: f64) -> Result<Var> {
        ensure!(
            self.value(p).len() == 1,
            Dimension,
            "bce expects a scalar probability"
        );
        let raw = self.scalar(p);
        ensure!(
            (0.0..=1.0).contains(&raw),
            Domain,
            "probability {raw} outside [0, 1]"
        );
        ensure!(
            target == 0.0 || target == 1.0,
            Domain,
            "bce target must be 0 or 1, got {target}"
        );
        let loss = bce_value(raw, target);
        let ng = self.node(p).needs_grad;
        Ok(self.push(vec![1], vec![loss], Op::Bce { p, target }, ng))
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        ensure!(
            self.value(loss).len() == 1,
            Contract,
            "backward requires a scalar loss, got shape {:?}",
            self.shape(loss)
        );
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        let mut contrib: Vec<(Var, Vec<f64>)> = Vec::new();
        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            contrib.clear();
            self.node_backward(node, &g, &mut contrib);
            grads[id] = Some(g);
            for (v, delta) in contrib.drain(..) {
                if !self.nodes[v.0].needs_grad {
                    continue;
                }
                match &mut grads[v.0] {
                    Some(acc) => acc.iter_mut().zip(&delta).for_each(|(a, d)| *a += d),
                    slot @ None => *slot = Some(delta),
                }
            }
        }
        Ok(Gradients { grads })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn zeros_for(&self, v: Var) -> Option<Vec<f64>> {
        self.wants(v).then(|| vec![0.0; self.nodes[v.0].value.len()])
    }

    fn node_backward(&self, node: &Node, g: &[f64], out: &mut Vec<(Var, Vec<f64>)>) {
        match &node.op {
            Op::Leaf => {}
            Op::Conv1d {
                input,
                weight,
                bias,
                geom,
            } => {
                let len_in = self.shape(*input)[1];
                let len_out = node.shape[1];
                let mut gx = self.zeros_for(*input);
                let mut gw = self.zeros_for(*weight);
                let mut gb = self.zeros_for(*bias);
                kernels::conv1d_backward(
                    geom,
                    self.value(*input),
                    len_in,
                    self.value(*weight),
                    g,
                    len_out,
                    gx.as_deref_mut(),
                    gw.as_deref_mut(),
                    gb.as_deref_mut(),
                );
                push_some(out, *input, gx);
                push_some(out, *weight, gw);
                push_some(out, *bias, gb);
            }
            Op::Deconv1d {
                input,
                weight,
                bias,
                geom,
            } => {
                let len_in = self.shape(*input)[1];
                let len_out = node.shape[1];
                let mut gx = self.zeros_for(*input);
                let mut gw = self.zeros_for(*weight);
                let mut gb = self.zeros_for(*bias);
                kernels::deconv1d_backward(
                    geom,
                    self.value(*input),
                    len_in,
                    self.value(*weight),
                    g,
                    len_out,
                    gx.as_deref_mut(),
                    gw.as_deref_mut(),
                    gb.as_deref_mut(),
                );
                push_some(out, *input, gx);
                push_some(out, *weight, gw);
                push_some(out, *bias, gb);
            }
            Op::Linear {
                input,
                weight,
                bias,
            } => {
                let x = self.value(*input);
                let w = self.value(*weight);
                let cols = x.len();
                if self.wants(*input) {
                    let mut gx = vec![0.0; cols];
                    for (r, gr) in g.iter().enumerate() {
                        for (gxi, wv) in gx.iter_mut().zip(&w[r * cols..(r + 1) * cols]) {
                            *gxi += gr * wv;
                        }
                    }
                    out.push((*input, gx));
                }
                if self.wants(*weight) {
                    let mut gw = vec![0.0; w.len()];
                    for (r, gr) in g.iter().enumerate() {
                        for (gwv, xv) in gw[r * cols..(r + 1) * cols].iter_mut().zip(x) {
                            *gwv = gr * xv;
                        }
                    }
                    out.push((*weight, gw));
                }
                if self.wants(*bias) {
                    out.push((*bias, g.to_vec()));
                }
            }
            Op::Relu(x) => {
                let gx = self
                    .value(*x)
                    .iter()
                    .zip(g)
                    .map(|(v, gv)| if *v > 0.0 { *gv } else { 0.0 })
                    .collect();
                out.push((*x, gx));
            }
            Op::Sigmoid(x) => {
                let gx = node
                    .value
                    .iter()
                    .zip(g)
                    .map(|(s, gv)| gv * s * (1.0 - s))
                    .collect();
                out.push((*x, gx));
            }
            Op::Tanh(x) => {
                let gx = node
                    .value
                    .iter()
                    .zip(g)
                    .map(|(t, gv)| gv * (1.0 - t * t))
                    .collect();
                out.push((*x, gx));
            }
            Op::Add(a, b) => {
                out.push((*a, g.to_vec()));
                out.push((*b, g.to_vec()));
            }
            Op::Scale(x, k) => out.push((*x, g.iter().map(|v| v * k).collect())),
            Op::Sum(terms) => {
                for t in terms {
                    out.push((*t, vec![g[0]]));
                }
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for p in parts {
                    let n = self.value(*p).len();
                    out.push((*p, g[off..off + n].to_vec()));
                    off += n;
                }
            }
            Op::Slice { src, start } => {
                if let Some(mut gs) = self.zeros_for(*src) {
                    gs[*start..*start + g.len()].copy_from_slice(g);
                    out.push((*src, gs));
                }
            }
            Op::Column { src, index } => {
                if let Some(mut gs) = self.zeros_for(*src) {
                    let cols = self.shape(*src)[1];
                    for (r, gv) in g.iter().enumerate() {
                        gs[r * cols + index] = *gv;
                    }
                    out.push((*src, gs));
                }
            }
            Op::StackColumns(cols) => {
                let n = cols.len();
                for (j, c) in cols.iter().enumerate() {
                    if self.wants(*c) {
                        let rows = self.value(*c).len();
                        out.push((*c, (0..rows).map(|r| g[r * n + j]).collect()));
                    }
                }
            }
            Op::Lstm {
                input,
                h_prev,
                c_prev,
                params,
                gates,
            } => {
                let hidden = node.value.len() / 2;
                let c_new = &node.value[hidden..];
                let cp = self.value(*c_prev);
                let mut gcp = self.zeros_for(*c_prev);
                let dpre = kernels::lstm_preact_grad(
                    gates,
                    cp,
                    c_new,
                    &g[..hidden],
                    &g[hidden..],
                    hidden,
                    gcp.as_deref_mut(),
                );
                push_some(out, *c_prev, gcp);
                let x = self.value(*input);
                let hp = self.value(*h_prev);
                let rows = 4 * hidden;
                if self.wants(*input) {
                    out.push((*input, mat_t_vec(self.value(params.w_ih), &dpre, rows, x.len())));
                }
                if self.wants(*h_prev) {
                    out.push((*h_prev, mat_t_vec(self.value(params.w_hh), &dpre, rows, hidden)));
                }
                if self.wants(params.w_ih) {
                    out.push((params.w_ih, outer(&dpre, x)));
                }
                if self.wants(params.w_hh) {
                    out.push((params.w_hh, outer(&dpre, hp)));
                }
                if self.wants(params.b_ih) {
                    out.push((params.b_ih, dpre.clone()));
                }
                if self.wants(params.b_hh) {
                    out.push((params.b_hh, dpre));
                }
            }
            Op::Mse(a, b) => {
                let n = self.value(*a).len() as f64;
                let d: Vec<f64> = self
                    .value(*a)
                    .iter()
                    .zip(self.value(*b))
                    .map(|(x, y)| 2.0 * (x - y) / n * g[0])
                    .collect();
                if self.wants(*b) {
                    out.push((*b, d.iter().map(|v| -v).collect()));
                }
                out.push((*a, d));
            }
            Op::Bce { p, target } => {
                let pc = self.scalar(*p).clamp(BCE_EPS, 1.0 - BCE_EPS);
                let d = -target / pc + (1.0 - target) / (1.0 - pc);
                out.push((*p, vec![d * g[0]]));
            }
        }
    }
}

fn push_some(out: &mut Vec<(Var, Vec<f64>)>, v: Var, g: Option<Vec<f64>>) {
    if let Some(g) = g {
        out.push((v, g));
    }
}

fn mat_t_vec(w: &[f64], v: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; cols];
    for r in 0..rows {
        let vr = v[r];
        if vr == 0.0 {
            continue;
        }
        for (o, wv) in out.iter_mut().zip(&w[r * cols..(r + 1) * cols]) {
            *o += vr * wv;
        }
    }
    out
}

fn outer(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for x in a {
        out.extend(b.iter().map(|y| x * y));
    }
    out
}

/// `-[y ln p + (1 - y) ln(1 - p)]` with `p` clamped away from 0 and 1.
pub fn bce_value(p: f64, target: f64) -> f64 {
    let pc = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
    -(target * pc.ln() + (1.0 - target) * (1.0 - pc).ln())
}
