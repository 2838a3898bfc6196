//! Reverse-mode automatic differentiation over a recorded tape.
//!
//! A [`Tape`] owns every value produced during one forward pass. Operations
//! append nodes in execution order, so the node list is topologically sorted
//! by construction; [`Tape::backward`] walks it once in reverse.
//!
//! There is no broadcasting: binary ops require identical shapes and bias
//! terms are materialized with [`Tape::expand_channels`].

use crate::error::{Error, Result};
use crate::linalg::{batch_dims, gemm, ConvGeom};
use crate::tensor::Tensor;
use crate::Real;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Conv2d {
        input: Var,
        kernel: Var,
        geom: ConvGeom,
        cols: Vec<T>,
    },
    ConvTranspose2d {
        input: Var,
        kernel: Var,
        geom: ConvGeom,
    },
    Relu(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulScalar(Var, T),
    AddScalar(Var),
    Square(Var),
    Exp(Var),
    Reshape(Var),
    Sum(Var),
    Mean(Var),
    ExpandChannels {
        bias: Var,
        batch: usize,
        channels: usize,
        plane: usize,
    },
    ChannelsToRows {
        input: Var,
        batch: usize,
        channels: usize,
        plane: usize,
    },
    RowsToChannels {
        input: Var,
        batch: usize,
        channels: usize,
        plane: usize,
    },
    GatherRows {
        table: Var,
        indices: Vec<usize>,
    },
    StraightThrough(Var),
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Recorded forward pass.
#[derive(Debug)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
    spent: bool,
    live_bytes: usize,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn same_shape(op: &str, a: &[usize], b: &[usize]) -> Result<()> {
    if a != b {
        return Err(Error::shape(format!("{op}: shapes {a:?} and {b:?} differ")));
    }
    Ok(())
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
            spent: false,
            live_bytes: 0,
        }
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.live_bytes += value.bytes();
        if let Op::Conv2d { cols, .. } = &op {
            self.live_bytes += cols.len() * std::mem::size_of::<T>();
        }
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Record a leaf. Gradients are tracked when `tensor.requires_grad()`.
    pub fn leaf(&mut self, tensor: Tensor<T>) -> Var {
        let needs = tensor.requires_grad();
        self.push(tensor, Op::Leaf, needs)
    }

    /// Record a leaf that never receives a gradient.
    pub fn constant(&mut self, tensor: Tensor<T>) -> Var {
        let t = tensor.with_requires_grad(false);
        self.push(t, Op::Leaf, false)
    }

    /// Stop-gradient: a copy of `v` that is a constant for differentiation.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.nodes[v.0].value.clone().with_requires_grad(false);
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Bytes held by recorded values and saved buffers.
    pub fn live_bytes(&self) -> usize {
        self.live_bytes
    }

    /// Gradient of the last `backward` loss with respect to `v`.
    ///
    /// Populated for every gradient-tracking leaf; intermediate gradients are
    /// released during the sweep.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.grads[v.0].as_deref()
    }

    /// Move the gradient out of the tape.
    pub fn take_grad(&mut self, v: Var) -> Option<Vec<T>> {
        self.grads[v.0].take()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let (&[m, k], &[k2, n]) = (sa, sb) else {
            return Err(Error::shape(format!(
                "matmul needs 2-D operands, got {sa:?} x {sb:?}"
            )));
        };
        if k != k2 {
            return Err(Error::shape(format!("matmul inner dims {sa:?} x {sb:?}")));
        }
        let mut out = vec![T::zero(); m * n];
        gemm(
            false,
            false,
            m,
            n,
            k,
            self.value(a).data(),
            self.value(b).data(),
            &mut out,
            false,
        );
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::raw(vec![m, n], out), Op::MatMul(a, b), needs))
    }

    /// 2-D convolution with zero padding. `input` is `[C,H,W]` or `[N,C,H,W]`,
    /// `kernel` is `[C_out, C_in, kh, kw]`.
    pub fn conv2d(
        &mut self,
        input: Var,
        kernel: Var,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let batched = self.shape(input).len() == 4;
        let geom = ConvGeom::conv2d(self.shape(input), self.shape(kernel), stride, padding)?;
        let (out, cols) = geom.conv_forward(self.value(input).data(), self.value(kernel).data());
        let needs = self.needs(input) || self.needs(kernel);
        let cols = if self.needs(kernel) { cols } else { Vec::new() };
        let value = Tensor::raw(geom.narrow_shape(batched), out);
        Ok(self.push(
            value,
            Op::Conv2d {
                input,
                kernel,
                geom,
                cols,
            },
            needs,
        ))
    }

    /// Transposed convolution, the adjoint of [`Tape::conv2d`] for the same
    /// kernel. `kernel` is `[C_in, C_out, kh, kw]`; output extent is
    /// `(h - 1)·stride - 2·padding + kh`.
    pub fn conv_transpose2d(
        &mut self,
        input: Var,
        kernel: Var,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let batched = self.shape(input).len() == 4;
        let geom = ConvGeom::transpose(self.shape(input), self.shape(kernel), stride, padding)?;
        let out = geom.transpose_forward(self.value(input).data(), self.value(kernel).data());
        let needs = self.needs(input) || self.needs(kernel);
        let value = Tensor::raw(geom.wide_shape(batched), out);
        Ok(self.push(
            value,
            Op::ConvTranspose2d {
                input,
                kernel,
                geom,
            },
            needs,
        ))
    }

    fn unary(&mut self, a: Var, op: Op<T>, f: impl Fn(T) -> T) -> Var {
        let value = self.value(a).map(f);
        let needs = self.needs(a);
        self.push(value, op, needs)
    }

    fn binary(
        &mut self,
        name: &str,
        a: Var,
        b: Var,
        op: Op<T>,
        f: impl Fn(T, T) -> T,
    ) -> Result<Var> {
        same_shape(name, self.shape(a), self.shape(b))?;
        let (va, vb) = (self.value(a), self.value(b));
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let value = Tensor::raw(va.shape().to_vec(), data);
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, op, needs))
    }

    /// Rectifier; the subgradient at exactly zero is taken as zero.
    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(
            a,
            Op::Relu(a),
            |x| if x > T::zero() { x } else { T::zero() },
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, Op::Sub(a, b), |x, y| x - y)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn mul_scalar(&mut self, a: Var, c: T) -> Var {
        self.unary(a, Op::MulScalar(a, c), |x| x * c)
    }

    pub fn add_scalar(&mut self, a: Var, c: T) -> Var {
        self.unary(a, Op::AddScalar(a), |x| x + c)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, Op::Square(a), |x| x * x)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp(a), |x| x.exp())
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).reshaped(shape)?;
        let needs = self.needs(a);
        Ok(self.push(value, Op::Reshape(a), needs))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().copied().sum();
        let needs = self.needs(a);
        self.push(Tensor::scalar(s), Op::Sum(a), needs)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let s: T = v.data().iter().copied().sum();
        let m = s / T::lit(v.numel() as f64);
        let needs = self.needs(a);
        self.push(Tensor::scalar(m), Op::Mean(a), needs)
    }

    /// Materialize a per-channel vector `[C]` to the full shape `[N,C,H,W]`
    /// (or `[C,H,W]`) given by `like`.
    pub fn expand_channels(&mut self, bias: Var, like: &[usize]) -> Result<Var> {
        let (batch, channels, h, w) = batch_dims(like)?;
        if self.shape(bias) != [channels] {
            return Err(Error::shape(format!(
                "bias {:?} does not match {channels} channels",
                self.shape(bias)
            )));
        }
        let plane = h * w;
        let b = self.value(bias).data();
        let mut data = Vec::with_capacity(batch * channels * plane);
        for _ in 0..batch {
            for &bc in b {
                data.extend(std::iter::repeat_n(bc, plane));
            }
        }
        let needs = self.needs(bias);
        let value = Tensor::raw(like.to_vec(), data);
        Ok(self.push(
            value,
            Op::ExpandChannels {
                bias,
                batch,
                channels,
                plane,
            },
            needs,
        ))
    }

    /// `[N,C,H,W]` → `[N·H·W, C]`: one row per spatial position.
    pub fn channels_to_rows(&mut self, input: Var) -> Result<Var> {
        let (batch, channels, h, w) = batch_dims(self.shape(input))?;
        let plane = h * w;
        let data = channels_to_rows(self.value(input).data(), batch, channels, plane);
        let needs = self.needs(input);
        let value = Tensor::raw(vec![batch * plane, channels], data);
        Ok(self.push(
            value,
            Op::ChannelsToRows {
                input,
                batch,
                channels,
                plane,
            },
            needs,
        ))
    }

    /// Inverse of [`Tape::channels_to_rows`] into `shape` (`[N,C,H,W]` or `[C,H,W]`).
    pub fn rows_to_channels(&mut self, input: Var, shape: &[usize]) -> Result<Var> {
        let (batch, channels, h, w) = batch_dims(shape)?;
        let plane = h * w;
        if self.shape(input) != [batch * plane, channels] {
            return Err(Error::shape(format!(
                "rows {:?} do not fill {shape:?}",
                self.shape(input)
            )));
        }
        let data = rows_to_channels(self.value(input).data(), batch, channels, plane);
        let needs = self.needs(input);
        let value = Tensor::raw(shape.to_vec(), data);
        Ok(self.push(
            value,
            Op::RowsToChannels {
                input,
                batch,
                channels,
                plane,
            },
            needs,
        ))
    }

    /// Select rows of a `[K, D]` table; gradients scatter-add back.
    pub fn gather_rows(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let &[k, d] = self.shape(table) else {
            return Err(Error::shape("gather_rows needs a 2-D table"));
        };
        if indices.is_empty() {
            return Err(Error::shape("gather_rows with no indices"));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= k) {
            return Err(Error::shape(format!("row {bad} out of range for {k} rows")));
        }
        let t = self.value(table).data();
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            data.extend_from_slice(&t[i * d..(i + 1) * d]);
        }
        let needs = self.needs(table);
        let value = Tensor::raw(vec![indices.len(), d], data);
        Ok(self.push(
            value,
            Op::GatherRows {
                table,
                indices: indices.to_vec(),
            },
            needs,
        ))
    }

    /// Straight-through estimator: the value is an exact copy of `quantized`,
    /// the gradient goes unchanged to `continuous` and nothing flows into
    /// `quantized` along this path.
    pub fn straight_through(&mut self, continuous: Var, quantized: Var) -> Result<Var> {
        same_shape(
            "straight_through",
            self.shape(continuous),
            self.shape(quantized),
        )?;
        let value = self.value(quantized).clone().with_requires_grad(false);
        let needs = self.needs(continuous);
        Ok(self.push(value, Op::StraightThrough(continuous), needs))
    }

    /// Reverse sweep from a scalar `loss`.
    ///
    /// Every gradient-tracking leaf ends with a gradient, zero-filled when the
    /// loss does not depend on it. A tape supports a single sweep.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.spent {
            return Err(Error::State("backward already ran on this tape".into()));
        }
        if self.value(loss).numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        self.spent = true;
        if self.needs(loss) {
            self.grads[loss.0] = Some(vec![T::one()]);
        }
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) || !node.needs_grad {
                continue;
            }
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            self.propagate(i, g);
        }
        for (node, grad) in self.nodes.iter().zip(self.grads.iter_mut()) {
            if matches!(node.op, Op::Leaf) && node.needs_grad && grad.is_none() {
                *grad = Some(vec![T::zero(); node.value.numel()]);
            }
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, g: Vec<T>) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut self.grads[v.0] {
            Some(existing) => existing.iter_mut().zip(g).for_each(|(e, x)| *e += x),
            slot => *slot = Some(g),
        }
    }

    fn propagate(&mut self, i: usize, g: Vec<T>) {
        let zero = T::zero();
        let node = &self.nodes[i];
        let mut out: Vec<(Var, Vec<T>)> = Vec::with_capacity(2);
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (va.shape()[0], va.shape()[1], vb.shape()[1]);
                if self.needs(*a) {
                    let mut da = vec![zero; m * k];
                    gemm(false, true, m, k, n, &g, vb.data(), &mut da, false);
                    out.push((*a, da));
                }
                if self.needs(*b) {
                    let mut db = vec![zero; k * n];
                    gemm(true, false, k, n, m, va.data(), &g, &mut db, false);
                    out.push((*b, db));
                }
            }
            Op::Conv2d {
                input,
                kernel,
                geom,
                cols,
            } => {
                let (dx, dk) = geom.conv_backward(
                    &g,
                    self.value(*kernel).data(),
                    cols,
                    self.needs(*input),
                    self.needs(*kernel),
                );
                out.extend(dx.map(|d| (*input, d)));
                out.extend(dk.map(|d| (*kernel, d)));
            }
            Op::ConvTranspose2d {
                input,
                kernel,
                geom,
            } => {
                let (dx, dk) = geom.transpose_backward(
                    &g,
                    self.value(*input).data(),
                    self.value(*kernel).data(),
                    self.needs(*input),
                    self.needs(*kernel),
                );
                out.extend(dx.map(|d| (*input, d)));
                out.extend(dk.map(|d| (*kernel, d)));
            }
            Op::Relu(a) => {
                let x = self.value(*a).data();
                let d = g
                    .iter()
                    .zip(x)
                    .map(|(&gi, &xi)| if xi > zero { gi } else { zero })
                    .collect();
                out.push((*a, d));
            }
            Op::Add(a, b) => {
                out.push((*a, g.clone()));
                out.push((*b, g));
            }
            Op::Sub(a, b) => {
                out.push((*b, g.iter().map(|&x| -x).collect()));
                out.push((*a, g));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                if self.needs(*a) {
                    out.push((*a, g.iter().zip(vb).map(|(&gi, &y)| gi * y).collect()));
                }
                if self.needs(*b) {
                    out.push((*b, g.iter().zip(va).map(|(&gi, &x)| gi * x).collect()));
                }
            }
            Op::MulScalar(a, c) => out.push((*a, g.iter().map(|&x| x * *c).collect())),
            Op::AddScalar(a) | Op::Reshape(a) | Op::StraightThrough(a) => out.push((*a, g)),
            Op::Square(a) => {
                let two = T::lit(2.0);
                let x = self.value(*a).data();
                out.push((
                    *a,
                    g.iter().zip(x).map(|(&gi, &xi)| two * xi * gi).collect(),
                ));
            }
            Op::Exp(a) => {
                let y = node.value.data();
                out.push((*a, g.iter().zip(y).map(|(&gi, &yi)| gi * yi).collect()));
            }
            Op::Sum(a) => out.push((*a, vec![g[0]; self.value(*a).numel()])),
            Op::Mean(a) => {
                let n = self.value(*a).numel();
                out.push((*a, vec![g[0] / T::lit(n as f64); n]));
            }
            Op::ExpandChannels {
                bias,
                batch,
                channels,
                plane,
            } => {
                let mut d = vec![zero; *channels];
                for b in 0..*batch {
                    for (c, dc) in d.iter_mut().enumerate() {
                        let off = (b * channels + c) * plane;
                        *dc += g[off..off + plane].iter().copied().sum::<T>();
                    }
                }
                out.push((*bias, d));
            }
            Op::ChannelsToRows {
                input,
                batch,
                channels,
                plane,
            } => out.push((*input, rows_to_channels(&g, *batch, *channels, *plane))),
            Op::RowsToChannels {
                input,
                batch,
                channels,
                plane,
            } => out.push((*input, channels_to_rows(&g, *batch, *channels, *plane))),
            Op::GatherRows { table, indices } => {
                let t = self.value(*table);
                let d = t.shape()[1];
                let mut dt = vec![zero; t.numel()];
                for (r, &idx) in indices.iter().enumerate() {
                    let dst = &mut dt[idx * d..(idx + 1) * d];
                    dst.iter_mut()
                        .zip(&g[r * d..(r + 1) * d])
                        .for_each(|(a, &b)| *a += b);
                }
                out.push((*table, dt));
            }
        }
        for (v, d) in out {
            self.accumulate(v, d);
        }
    }
}

pub(crate) fn channels_to_rows<T: Real>(
    x: &[T],
    batch: usize,
    channels: usize,
    plane: usize,
) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for b in 0..batch {
        for c in 0..channels {
            let src = &x[(b * channels + c) * plane..(b * channels + c + 1) * plane];
            for (p, &v) in src.iter().enumerate() {
                out[(b * plane + p) * channels + c] = v;
            }
        }
    }
    out
}

pub(crate) fn rows_to_channels<T: Real>(
    x: &[T],
    batch: usize,
    channels: usize,
    plane: usize,
) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for b in 0..batch {
        for p in 0..plane {
            let row = &x[(b * plane + p) * channels..(b * plane + p + 1) * channels];
            for (c, &v) in row.iter().enumerate() {
                out[(b * channels + c) * plane + p] = v;
            }
        }
    }
    out
}
