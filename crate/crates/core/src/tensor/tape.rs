use super::kernels::{self, ConvGeom, ConvShape};
use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Element-wise nonlinearity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    LeakyRelu(f64),
    Relu,
    Tanh,
}

impl Activation {
    pub const LEAKY_SLOPE: f64 = 0.2;

    pub fn leaky() -> Self {
        Activation::LeakyRelu(Self::LEAKY_SLOPE)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormMode {
    Train,
    Eval,
}

/// Running statistics of one batch-norm layer.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormState<T = f32> {
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub initialized: bool,
    pub eps: f64,
    pub momentum: f64,
}

impl<T: Scalar> BatchNormState<T> {
    pub const EPS: f64 = 1e-5;
    pub const MOMENTUM: f64 = 0.1;

    /// Zero mean, unit variance, marked usable in eval mode.
    pub fn new(channels: usize) -> Self {
        Self {
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            initialized: true,
            eps: Self::EPS,
            momentum: Self::MOMENTUM,
        }
    }

    /// Statistics that must see a train-mode batch before eval mode may use them.
    pub fn uninitialized(channels: usize) -> Self {
        Self {
            initialized: false,
            ..Self::new(channels)
        }
    }

    pub fn channels(&self) -> usize {
        self.running_mean.len()
    }

    pub fn cast<U: Scalar>(&self) -> BatchNormState<U> {
        BatchNormState {
            running_mean: self
                .running_mean
                .iter()
                .map(|&v| U::of(v.as_f64()))
                .collect(),
            running_var: self
                .running_var
                .iter()
                .map(|&v| U::of(v.as_f64()))
                .collect(),
            initialized: self.initialized,
            eps: self.eps,
            momentum: self.momentum,
        }
    }
}

enum Op<T> {
    Leaf,
    Conv2d {
        input: usize,
        weight: usize,
        bias: Option<usize>,
        shape: ConvShape,
    },
    ConvTranspose2d {
        input: usize,
        weight: usize,
        bias: Option<usize>,
        shape: ConvShape,
    },
    BatchNorm {
        input: usize,
        gamma: usize,
        beta: usize,
        xhat: Vec<T>,
        inv_std: Vec<T>,
        batch_stats: bool,
    },
    Activation {
        input: usize,
        kind: Activation,
    },
    Linear {
        input: usize,
        weight: usize,
        bias: Option<usize>,
    },
    Mul {
        a: usize,
        b: usize,
    },
    Slice2d {
        input: usize,
        offset: (usize, usize),
    },
    Mae {
        pred: usize,
        target: usize,
    },
    Sum {
        input: usize,
    },
    Reshape {
        input: usize,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Records forward operations in topological order and replays them in
/// reverse to accumulate gradients.
///
/// A tape is single-use per forward pass: after [`Tape::backward`] it must be
/// cleared with [`Tape::clear_grads`] before another backward pass.
pub struct Tape<T: Scalar = f32> {
    nodes: Vec<Node<T>>,
    backward_done: bool,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            backward_done: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a leaf. Its `requires_grad` flag decides whether backward
    /// populates a gradient for it.
    pub fn leaf(&mut self, tensor: Tensor<T>) -> Var {
        let mut tensor = tensor;
        tensor.grad = None;
        self.push(tensor, Op::Leaf)
    }

    pub fn constant(&mut self, tensor: Tensor<T>) -> Var {
        self.leaf(tensor.with_requires_grad(false))
    }

    pub fn param(&mut self, tensor: &Tensor<T>) -> Var {
        self.leaf(tensor.clone().with_requires_grad(true))
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].value.grad()
    }

    /// Drops every gradient so that backward may run again.
    pub fn clear_grads(&mut self) {
        for node in &mut self.nodes {
            node.value.grad = None;
        }
        self.backward_done = false;
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn push_op(&mut self, shape: Vec<usize>, data: Vec<T>, inputs: &[usize], op: Op<T>) -> Var {
        let requires_grad = inputs.iter().any(|&i| self.nodes[i].value.requires_grad);
        let value = Tensor {
            shape,
            data,
            grad: None,
            requires_grad,
        };
        self.push(value, op)
    }

    fn data(&self, id: usize) -> &[T] {
        self.nodes[id].value.data()
    }

    fn check_bias(&self, bias: Option<Var>, channels: usize, what: &str) -> Result<()> {
        if let Some(b) = bias {
            if self.shape(b) != [channels] {
                return Err(Error::Dimension(format!(
                    "{what} bias has shape {:?}, expected [{channels}]",
                    self.shape(b)
                )));
            }
        }
        Ok(())
    }

    pub fn conv2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        geom: ConvGeom,
    ) -> Result<Var> {
        let shape = ConvShape::conv(self.shape(input), self.shape(weight), geom)?;
        self.check_bias(bias, shape.c_col, "conv2d")?;
        let y = kernels::conv_forward(
            &shape,
            self.data(input.0),
            self.data(weight.0),
            bias.map(|b| self.data(b.0)),
        );
        let mut inputs = vec![input.0, weight.0];
        inputs.extend(bias.map(|b| b.0));
        Ok(self.push_op(
            vec![shape.n, shape.c_col, shape.ho, shape.wo],
            y,
            &inputs,
            Op::Conv2d {
                input: input.0,
                weight: weight.0,
                bias: bias.map(|b| b.0),
                shape,
            },
        ))
    }

    pub fn conv_transpose2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        geom: ConvGeom,
    ) -> Result<Var> {
        let shape = ConvShape::conv_transpose(self.shape(input), self.shape(weight), geom)?;
        self.check_bias(bias, shape.c_img, "conv_transpose2d")?;
        let y = kernels::conv_transpose_forward(
            &shape,
            self.data(input.0),
            self.data(weight.0),
            bias.map(|b| self.data(b.0)),
        );
        let mut inputs = vec![input.0, weight.0];
        inputs.extend(bias.map(|b| b.0));
        Ok(self.push_op(
            vec![shape.n, shape.c_img, shape.h, shape.w],
            y,
            &inputs,
            Op::ConvTranspose2d {
                input: input.0,
                weight: weight.0,
                bias: bias.map(|b| b.0),
                shape,
            },
        ))
    }

    /// Per-channel batch normalization of an NCHW tensor.
    ///
    /// Train mode normalizes with the biased batch variance and folds the
    /// unbiased variance into the running estimate; eval mode reads the
    /// running estimate only.
    pub fn batch_norm2d(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
        state: &mut BatchNormState<T>,
        mode: NormMode,
    ) -> Result<Var> {
        let shape = self.shape(input).to_vec();
        if shape.len() != 4 {
            return Err(Error::Dimension(format!(
                "batch_norm2d expects NCHW input, got {shape:?}"
            )));
        }
        let (n, c, plane) = (shape[0], shape[1], shape[2] * shape[3]);
        if self.shape(gamma) != [c] || self.shape(beta) != [c] || state.channels() != c {
            return Err(Error::Dimension(format!(
                "batch_norm2d over {c} channels got gamma {:?}, beta {:?}, state {}",
                self.shape(gamma),
                self.shape(beta),
                state.channels()
            )));
        }
        let count = n * plane;
        let eps = T::of(state.eps);
        let x = self.data(input.0);
        let (mean, var) = match mode {
            NormMode::Train => {
                if count < 2 {
                    return Err(Error::Dimension(
                        "train-mode batch norm needs at least two values per channel".into(),
                    ));
                }
                let mut mean = vec![T::zero(); c];
                let mut var = vec![T::zero(); c];
                for ci in 0..c {
                    let mut acc = 0.0f64;
                    for b in 0..n {
                        let off = (b * c + ci) * plane;
                        acc += x[off..off + plane].iter().map(|v| v.as_f64()).sum::<f64>();
                    }
                    let m = acc / count as f64;
                    let mut sq = 0.0f64;
                    for b in 0..n {
                        let off = (b * c + ci) * plane;
                        sq += x[off..off + plane]
                            .iter()
                            .map(|v| (v.as_f64() - m).powi(2))
                            .sum::<f64>();
                    }
                    mean[ci] = T::of(m);
                    var[ci] = T::of(sq / count as f64);
                }
                let mom = T::of(state.momentum);
                let unbias = T::of(count as f64 / (count - 1) as f64);
                for ci in 0..c {
                    state.running_mean[ci] =
                        (T::one() - mom) * state.running_mean[ci] + mom * mean[ci];
                    state.running_var[ci] =
                        (T::one() - mom) * state.running_var[ci] + mom * var[ci] * unbias;
                }
                state.initialized = true;
                (mean, var)
            }
            NormMode::Eval => {
                if !state.initialized {
                    return Err(Error::State(
                        "eval-mode batch norm with uninitialized running statistics".into(),
                    ));
                }
                (state.running_mean.clone(), state.running_var.clone())
            }
        };
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let g = self.data(gamma.0);
        let bt = self.data(beta.0);
        let mut xhat = vec![T::zero(); x.len()];
        let mut y = vec![T::zero(); x.len()];
        for b in 0..n {
            for ci in 0..c {
                let off = (b * c + ci) * plane;
                for i in off..off + plane {
                    let xh = (x[i] - mean[ci]) * inv_std[ci];
                    xhat[i] = xh;
                    y[i] = g[ci] * xh + bt[ci];
                }
            }
        }
        Ok(self.push_op(
            shape,
            y,
            &[input.0, gamma.0, beta.0],
            Op::BatchNorm {
                input: input.0,
                gamma: gamma.0,
                beta: beta.0,
                xhat,
                inv_std,
                batch_stats: mode == NormMode::Train,
            },
        ))
    }

    pub fn activation(&mut self, kind: Activation, input: Var) -> Var {
        let x = self.data(input.0);
        let y: Vec<T> = match kind {
            Activation::LeakyRelu(slope) => {
                let s = T::of(slope);
                x.iter()
                    .map(|&v| if v > T::zero() { v } else { v * s })
                    .collect()
            }
            Activation::Relu => x.iter().map(|&v| v.max(T::zero())).collect(),
            Activation::Tanh => {
                // Largest float below one: keeps saturated outputs inside (-1, 1).
                let edge = T::one() - T::epsilon() / T::of(2.0);
                x.iter().map(|&v| v.tanh().max(-edge).min(edge)).collect()
            }
        };
        let shape = self.shape(input).to_vec();
        self.push_op(
            shape,
            y,
            &[input.0],
            Op::Activation {
                input: input.0,
                kind,
            },
        )
    }

    /// `y = x·Wᵀ + b` for `x[N,D_in]`, `W[D_out,D_in]`, `b[D_out]`.
    pub fn linear(&mut self, input: Var, weight: Var, bias: Option<Var>) -> Result<Var> {
        let (xs, ws) = (self.shape(input), self.shape(weight));
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] {
            return Err(Error::Dimension(format!(
                "linear: input {xs:?} incompatible with weight {ws:?}"
            )));
        }
        let (n, d_in, d_out) = (xs[0], xs[1], ws[0]);
        self.check_bias(bias, d_out, "linear")?;
        let mut y = vec![T::zero(); n * d_out];
        T::gemm(
            n,
            d_in,
            d_out,
            self.data(input.0),
            false,
            self.data(weight.0),
            true,
            &mut y,
            false,
        );
        if let Some(b) = bias {
            let bd = self.data(b.0);
            for row in y.chunks_mut(d_out) {
                row.iter_mut().zip(bd).for_each(|(v, &bb)| *v += bb);
            }
        }
        let mut inputs = vec![input.0, weight.0];
        inputs.extend(bias.map(|b| b.0));
        Ok(self.push_op(
            vec![n, d_out],
            y,
            &inputs,
            Op::Linear {
                input: input.0,
                weight: weight.0,
                bias: bias.map(|b| b.0),
            },
        ))
    }

    /// Hadamard product. Shapes must be equal, except that a `[N,C,1,1]`
    /// map may be paired with a `[N,C]` vector (trailing singleton axes).
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let squeeze = |s: &[usize]| -> Vec<usize> {
            let mut s = s.to_vec();
            while s.len() > 2 && s.last() == Some(&1) {
                s.pop();
            }
            s
        };
        if sa != sb && squeeze(&sa) != squeeze(&sb) {
            return Err(Error::Dimension(format!(
                "element-wise product of {sa:?} and {sb:?}"
            )));
        }
        let shape = if sa.len() >= sb.len() { sa } else { sb };
        let y = self
            .data(a.0)
            .iter()
            .zip(self.data(b.0))
            .map(|(&x, &y)| x * y)
            .collect();
        Ok(self.push_op(shape, y, &[a.0, b.0], Op::Mul { a: a.0, b: b.0 }))
    }

    /// Centered spatial crop of an NCHW tensor to `target = (h, w)`.
    pub fn slice2d(&mut self, input: Var, target: (usize, usize)) -> Result<Var> {
        let s = self.shape(input).to_vec();
        if s.len() != 4 || target.0 == 0 || target.1 == 0 || target.0 > s[2] || target.1 > s[3] {
            return Err(Error::Dimension(format!(
                "cannot slice {s:?} to {target:?}"
            )));
        }
        let offset = ((s[2] - target.0) / 2, (s[3] - target.1) / 2);
        let x = self.data(input.0);
        let mut y = Vec::with_capacity(s[0] * s[1] * target.0 * target.1);
        for plane in x.chunks(s[2] * s[3]) {
            for r in 0..target.0 {
                let start = (r + offset.0) * s[3] + offset.1;
                y.extend_from_slice(&plane[start..start + target.1]);
            }
        }
        Ok(self.push_op(
            vec![s[0], s[1], target.0, target.1],
            y,
            &[input.0],
            Op::Slice2d {
                input: input.0,
                offset,
            },
        ))
    }

    /// Mean absolute error, a `[1]` tensor.
    pub fn mae(&mut self, pred: Var, target: Var) -> Result<Var> {
        if self.shape(pred) != self.shape(target) {
            return Err(Error::Dimension(format!(
                "mae of {:?} against {:?}",
                self.shape(pred),
                self.shape(target)
            )));
        }
        let (p, t) = (self.data(pred.0), self.data(target.0));
        let total: f64 = p.iter().zip(t).map(|(&a, &b)| (a - b).abs().as_f64()).sum();
        let mean = T::of(total / p.len() as f64);
        Ok(self.push_op(
            vec![1],
            vec![mean],
            &[pred.0, target.0],
            Op::Mae {
                pred: pred.0,
                target: target.0,
            },
        ))
    }

    pub fn sum(&mut self, input: Var) -> Var {
        let total = self.data(input.0).iter().copied().sum();
        self.push_op(vec![1], vec![total], &[input.0], Op::Sum { input: input.0 })
    }

    pub fn reshape(&mut self, input: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let shape = shape.into();
        if shape.iter().product::<usize>() != self.value(input).numel() || shape.contains(&0) {
            return Err(Error::Dimension(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape(input)
            )));
        }
        let data = self.data(input.0).to_vec();
        Ok(self.push_op(shape, data, &[input.0], Op::Reshape { input: input.0 }))
    }

    /// Back-propagates from a scalar `loss`, leaving gradients on every node
    /// that requires one (leaves that did not contribute get zeros).
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::Graph(
                "backward already ran on this tape; clear gradients first".into(),
            ));
        }
        let root = &self.nodes[loss.0].value;
        if root.numel() != 1 {
            return Err(Error::Graph(format!(
                "backward needs a scalar loss, got shape {:?}",
                root.shape()
            )));
        }
        if !root.requires_grad {
            return Err(Error::Graph(
                "loss is detached: no input requires a gradient".into(),
            ));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else {
                continue;
            };
            self.propagate(id, &g, &mut grads);
            self.nodes[id].value.grad = Some(g);
        }
        for node in &mut self.nodes {
            if node.value.requires_grad && node.value.grad.is_none() && matches!(node.op, Op::Leaf)
            {
                node.value.grad = Some(vec![T::zero(); node.value.numel()]);
            }
        }
        self.backward_done = true;
        Ok(())
    }

    fn wants(&self, id: usize) -> bool {
        self.nodes[id].value.requires_grad
    }

    fn propagate(&self, id: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[id];
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                weight,
                bias,
                shape,
            } => {
                if self.wants(*input) {
                    let gx = kernels::conv_backward_input(shape, g, self.data(*weight));
                    accumulate(grads, *input, gx);
                }
                if self.wants(*weight) {
                    let gw = kernels::conv_backward_weight(shape, self.data(*input), g);
                    accumulate(grads, *weight, gw);
                }
                if let Some(b) = bias.filter(|&b| self.wants(b)) {
                    let gb = kernels::channel_sums(g, shape.n, shape.c_col, shape.ho * shape.wo);
                    accumulate(grads, b, gb);
                }
            }
            Op::ConvTranspose2d {
                input,
                weight,
                bias,
                shape,
            } => {
                if self.wants(*input) {
                    let gx = kernels::conv_transpose_backward_input(shape, g, self.data(*weight));
                    accumulate(grads, *input, gx);
                }
                if self.wants(*weight) {
                    let gw = kernels::conv_transpose_backward_weight(shape, self.data(*input), g);
                    accumulate(grads, *weight, gw);
                }
                if let Some(b) = bias.filter(|&b| self.wants(b)) {
                    let gb = kernels::channel_sums(g, shape.n, shape.c_img, shape.h * shape.w);
                    accumulate(grads, b, gb);
                }
            }
            Op::BatchNorm {
                input,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            } => {
                let s = node.value.shape();
                let (n, c, plane) = (s[0], s[1], s[2] * s[3]);
                let gm = self.data(*gamma);
                // Per-channel Σg and Σg·x̂.
                let mut sum_g = vec![T::zero(); c];
                let mut sum_gx = vec![T::zero(); c];
                for b in 0..n {
                    for ci in 0..c {
                        let off = (b * c + ci) * plane;
                        for i in off..off + plane {
                            sum_g[ci] += g[i];
                            sum_gx[ci] += g[i] * xhat[i];
                        }
                    }
                }
                if self.wants(*input) {
                    let mut gx = vec![T::zero(); g.len()];
                    let m = T::of((n * plane) as f64);
                    for b in 0..n {
                        for ci in 0..c {
                            let off = (b * c + ci) * plane;
                            let scale = gm[ci] * inv_std[ci];
                            for i in off..off + plane {
                                gx[i] = if *batch_stats {
                                    scale * (g[i] - sum_g[ci] / m - xhat[i] * sum_gx[ci] / m)
                                } else {
                                    scale * g[i]
                                };
                            }
                        }
                    }
                    accumulate(grads, *input, gx);
                }
                if self.wants(*gamma) {
                    accumulate(grads, *gamma, sum_gx);
                }
                if self.wants(*beta) {
                    accumulate(grads, *beta, sum_g);
                }
            }
            Op::Activation { input, kind } => {
                if self.wants(*input) {
                    let gx = match kind {
                        Activation::LeakyRelu(slope) => {
                            let s = T::of(*slope);
                            self.data(*input)
                                .iter()
                                .zip(g)
                                .map(|(&x, &gi)| if x > T::zero() { gi } else { gi * s })
                                .collect()
                        }
                        Activation::Relu => self
                            .data(*input)
                            .iter()
                            .zip(g)
                            .map(|(&x, &gi)| if x > T::zero() { gi } else { T::zero() })
                            .collect(),
                        Activation::Tanh => node
                            .value
                            .data()
                            .iter()
                            .zip(g)
                            .map(|(&y, &gi)| gi * (T::one() - y * y))
                            .collect(),
                    };
                    accumulate(grads, *input, gx);
                }
            }
            Op::Linear {
                input,
                weight,
                bias,
            } => {
                let xs = self.nodes[*input].value.shape();
                let (n, d_in) = (xs[0], xs[1]);
                let d_out = node.value.shape()[1];
                if self.wants(*input) {
                    let mut gx = vec![T::zero(); n * d_in];
                    T::gemm(
                        n,
                        d_out,
                        d_in,
                        g,
                        false,
                        self.data(*weight),
                        false,
                        &mut gx,
                        false,
                    );
                    accumulate(grads, *input, gx);
                }
                if self.wants(*weight) {
                    let mut gw = vec![T::zero(); d_out * d_in];
                    T::gemm(
                        d_out,
                        n,
                        d_in,
                        g,
                        true,
                        self.data(*input),
                        false,
                        &mut gw,
                        false,
                    );
                    accumulate(grads, *weight, gw);
                }
                if let Some(b) = bias.filter(|&b| self.wants(b)) {
                    let mut gb = vec![T::zero(); d_out];
                    for row in g.chunks(d_out) {
                        gb.iter_mut().zip(row).for_each(|(a, &v)| *a += v);
                    }
                    accumulate(grads, b, gb);
                }
            }
            Op::Mul { a, b } => {
                if self.wants(*a) {
                    let ga = g.iter().zip(self.data(*b)).map(|(&x, &y)| x * y).collect();
                    accumulate(grads, *a, ga);
                }
                if self.wants(*b) {
                    let gb = g.iter().zip(self.data(*a)).map(|(&x, &y)| x * y).collect();
                    accumulate(grads, *b, gb);
                }
            }
            Op::Slice2d { input, offset } => {
                if self.wants(*input) {
                    let s = self.nodes[*input].value.shape();
                    let (h, w) = (node.value.shape()[2], node.value.shape()[3]);
                    let mut gx = vec![T::zero(); self.nodes[*input].value.numel()];
                    for (dst, src) in gx.chunks_mut(s[2] * s[3]).zip(g.chunks(h * w)) {
                        for r in 0..h {
                            let start = (r + offset.0) * s[3] + offset.1;
                            dst[start..start + w].copy_from_slice(&src[r * w..(r + 1) * w]);
                        }
                    }
                    accumulate(grads, *input, gx);
                }
            }
            Op::Mae { pred, target } => {
                let (p, t) = (self.data(*pred), self.data(*target));
                let scale = g[0] / T::of(p.len() as f64);
                let sign: Vec<T> = p
                    .iter()
                    .zip(t)
                    .map(|(&a, &b)| {
                        if a > b {
                            scale
                        } else if a < b {
                            -scale
                        } else {
                            T::zero()
                        }
                    })
                    .collect();
                if self.wants(*target) {
                    accumulate(grads, *target, sign.iter().map(|&v| -v).collect());
                }
                if self.wants(*pred) {
                    accumulate(grads, *pred, sign);
                }
            }
            Op::Sum { input } => {
                if self.wants(*input) {
                    accumulate(grads, *input, vec![g[0]; self.nodes[*input].value.numel()]);
                }
            }
            Op::Reshape { input } => {
                if self.wants(*input) {
                    accumulate(grads, *input, g.to_vec());
                }
            }
        }
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Vec<T>>], id: usize, g: Vec<T>) {
    match &mut grads[id] {
        Some(existing) => existing.iter_mut().zip(g).for_each(|(a, b)| *a += b),
        slot @ None => *slot = Some(g),
    }
}
