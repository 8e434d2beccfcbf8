//! Tape-based reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! Every differentiable operation is a method on [`Tape`] that computes its
//! output eagerly and records a node. [`Tape::backward`] consumes the tape,
//! walks the nodes in reverse recording order (a valid reverse topological
//! order, since a node can only reference earlier nodes) and returns the
//! gradients of every gradient-requiring leaf.
//!
//! ```
//! use gawno::autodiff::Tape;
//! use gawno::Tensor;
//!
//! let mut tape = Tape::new();
//! let x = tape.leaf(Tensor::new(&[3], vec![1.0, -2.0, 0.5]).unwrap());
//! let sq = tape.mul(x, x).unwrap();
//! let s = tape.sum(sq);
//! let loss = tape.scale(s, 0.5);
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.get(x).unwrap(), &[1.0, -2.0, 0.5]);
//! ```

use crate::error::{GawnoError, Result};
use crate::kernels;
use crate::tensor::Tensor;

/// Probability clamp used by [`Tape::bce`].
pub const BCE_EPS: f64 = 1e-7;

/// The BCE gradient is `(p − t) / max(p(1 − p), floor)` on the unclamped `p`,
/// so a saturated sigmoid upstream still receives a useful signal.
pub const BCE_GRAD_FLOOR: f64 = 1e-300;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sum(Var),
    MeanLast(Var),
    Gelu(Var),
    Sigmoid(Var),
    Concat(Var, Var),
    Reshape(Var),
    Bce {
        p: Var,
        target: Vec<f64>,
    },
    KernelMul {
        v: Var,
        r: Var,
    },
    Analysis {
        x: Var,
        filter: Vec<f64>,
    },
    Synthesis {
        approx: Var,
        detail: Option<Var>,
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    PoolMean {
        x: Var,
        factor: usize,
    },
    Repeat {
        x: Var,
        factor: usize,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Recorded operation sequence. Nodes only reference earlier nodes, so the
/// tape is acyclic by construction.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of the leaves reachable from a loss.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn tensor(&self, v: Var) -> Option<Tensor> {
        self.get(v)
            .map(|g| Tensor::new(&self.shapes[v.0], g.to_vec()).expect("gradient shape"))
    }
}

fn gelu_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

pub(crate) fn gelu_scalar(x: f64) -> f64 {
    x * gelu_cdf(x)
}

fn gelu_grad(x: f64) -> f64 {
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    gelu_cdf(x) + x * pdf
}

pub(crate) fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn add_into(acc: &mut Option<Vec<f64>>, g: &[f64]) {
    match acc {
        Some(a) => a.iter_mut().zip(g).for_each(|(a, b)| *a += b),
        None => *acc = Some(g.to_vec()),
    }
}

fn add_owned(acc: &mut Option<Vec<f64>>, g: Vec<f64>) {
    match acc {
        Some(a) => a.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
        None => *acc = Some(g),
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

    /// Trainable input: gradients are collected for it.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Non-trainable input.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Channel-mixing affine map (a 1×1 convolution) over `[B, F, n]`:
    /// `out[i,c,t] = Σ_f W[c,f]·x[i,f,t] + b[c]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (batch, fin, n) = self.value(x).dims3("linear")?;
        let ws = self.shape(w).to_vec();
        if ws.len() != 2 || ws[1] != fin {
            return Err(GawnoError::dim("linear", self.shape(x), &ws));
        }
        let fout = ws[0];
        if let Some(b) = b {
            if self.shape(b) != [fout] {
                return Err(GawnoError::dim("linear bias", &ws, self.shape(b)));
            }
        }
        let out = kernels::linear_forward(
            self.value(x).data(),
            (batch, fin, n),
            self.value(w).data(),
            fout,
            b.map(|b| self.value(b).data()),
        );
        let value = Tensor::new(&[batch, fout, n], out)?;
        let mut deps = vec![x, w];
        deps.extend(b);
        let rg = self.rg(&deps);
        Ok(self.push(value, Op::Linear { x, w, b }, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(GawnoError::dim("add", self.shape(a), self.shape(b)));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let value = Tensor::new(self.shape(a), data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(GawnoError::dim("mul", self.shape(a), self.shape(b)));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .collect();
        let value = Tensor::new(self.shape(a), data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, x: Var, alpha: f64) -> Var {
        let value = self.value(x).map(|v| alpha * v);
        let rg = self.rg(&[x]);
        self.push(value, Op::Scale(x, alpha), rg)
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    /// Mean over the last axis; drops that axis.
    pub fn mean_last(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let (&n, outer) = shape
            .split_last()
            .ok_or_else(|| GawnoError::Contract("mean_last on a scalar".into()))?;
        if n == 0 {
            return Err(GawnoError::dim("mean_last", &shape, &[1]));
        }
        let data = self
            .value(x)
            .data()
            .chunks(n)
            .map(|c| c.iter().sum::<f64>() / n as f64)
            .collect();
        let value = Tensor::new(outer, data)?;
        let rg = self.rg(&[x]);
        Ok(self.push(value, Op::MeanLast(x), rg))
    }

    /// Exact-erf GeLU, `x·Φ(x)`.
    pub fn gelu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(gelu_scalar);
        let rg = self.rg(&[x]);
        self.push(value, Op::Gelu(x), rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).map(sigmoid_scalar);
        let rg = self.rg(&[x]);
        self.push(value, Op::Sigmoid(x), rg)
    }

    /// Concatenates `[B, C1, n]` and `[B, C2, n]` along the channel axis.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ba, ca, na) = self.value(a).dims3("concat_channels")?;
        let (bb, cb, nb) = self.value(b).dims3("concat_channels")?;
        if ba != bb || na != nb {
            return Err(GawnoError::dim("concat_channels", self.shape(a), self.shape(b)));
        }
        let (va, vb) = (self.value(a).data(), self.value(b).data());
        let mut data = Vec::with_capacity(ba * (ca + cb) * na);
        for i in 0..ba {
            data.extend_from_slice(&va[i * ca * na..(i + 1) * ca * na]);
            data.extend_from_slice(&vb[i * cb * nb..(i + 1) * cb * nb]);
        }
        let value = Tensor::new(&[ba, ca + cb, na], data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, Op::Concat(a, b), rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        let rg = self.rg(&[x]);
        Ok(self.push(value, Op::Reshape(x), rg))
    }

    /// Mean binary cross-entropy between probabilities `p` and 0/1 (or
    /// smoothed) targets. Probabilities are clamped to `[ε, 1−ε]`.
    pub fn bce(&mut self, p: Var, target: &[f64]) -> Result<Var> {
        let pv = self.value(p).data();
        if pv.len() != target.len() || pv.is_empty() {
            return Err(GawnoError::dim("bce", self.shape(p), &[target.len()]));
        }
        let total: f64 = pv
            .iter()
            .zip(target)
            .map(|(&p, &t)| {
                let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
                -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
            })
            .sum();
        let value = Tensor::scalar(total / pv.len() as f64);
        let rg = self.rg(&[p]);
        Ok(self.push(
            value,
            Op::Bce {
                p,
                target: target.to_vec(),
            },
            rg,
        ))
    }

    /// Per-coefficient channel contraction in wavelet space:
    /// `out[b,o,t] = Σ_i R[i,o,t]·v[b,i,t]`.
    pub fn kernel_multiply(&mut self, v: Var, r: Var) -> Result<Var> {
        let (batch, din, k) = self.value(v).dims3("kernel_multiply")?;
        let rs = self.shape(r).to_vec();
        if rs.len() != 3 || rs[0] != din || rs[2] != k {
            return Err(GawnoError::dim("kernel_multiply", self.shape(v), &rs));
        }
        let dout = rs[1];
        let out = kernels::kernel_multiply(
            self.value(v).data(),
            (batch, din, k),
            self.value(r).data(),
            dout,
        );
        let value = Tensor::new(&[batch, dout, k], out)?;
        let rg = self.rg(&[v, r]);
        Ok(self.push(value, Op::KernelMul { v, r }, rg))
    }

    /// Periodic convolution with `filter` followed by keeping even samples.
    pub fn analysis(&mut self, x: Var, filter: &[f64]) -> Result<Var> {
        let (batch, c, n) = self.value(x).dims3("dwt")?;
        if n % 2 != 0 || n == 0 {
            return Err(GawnoError::length("dwt", format!("length {n} is not even")));
        }
        let out = kernels::analysis(self.value(x).data(), n, filter);
        let value = Tensor::new(&[batch, c, n / 2], out)?;
        let rg = self.rg(&[x]);
        Ok(self.push(
            value,
            Op::Analysis {
                x,
                filter: filter.to_vec(),
            },
            rg,
        ))
    }

    /// Inverse of a two-band analysis step; a missing detail band is zero.
    pub fn synthesis(
        &mut self,
        approx: Var,
        detail: Option<Var>,
        lo: &[f64],
        hi: &[f64],
    ) -> Result<Var> {
        let (batch, c, half) = self.value(approx).dims3("idwt")?;
        if let Some(d) = detail {
            if self.shape(d) != self.shape(approx) {
                return Err(GawnoError::dim("idwt", self.shape(approx), self.shape(d)));
            }
        }
        let n = 2 * half;
        let mut out = vec![0.0; batch * c * n];
        kernels::analysis_transpose_into(self.value(approx).data(), n, lo, &mut out);
        if let Some(d) = detail {
            kernels::analysis_transpose_into(self.value(d).data(), n, hi, &mut out);
        }
        let value = Tensor::new(&[batch, c, n], out)?;
        let mut deps = vec![approx];
        deps.extend(detail);
        let rg = self.rg(&deps);
        Ok(self.push(
            value,
            Op::Synthesis {
                approx,
                detail,
                lo: lo.to_vec(),
                hi: hi.to_vec(),
            },
            rg,
        ))
    }

    /// Averages consecutive groups of `factor` samples along the length axis.
    pub fn pool_mean(&mut self, x: Var, factor: usize) -> Result<Var> {
        let (batch, c, n) = self.value(x).dims3("pool_mean")?;
        if factor == 0 || n % factor != 0 {
            return Err(GawnoError::length(
                "pool_mean",
                format!("length {n} not divisible by {factor}"),
            ));
        }
        let data = self
            .value(x)
            .data()
            .chunks(factor)
            .map(|g| g.iter().sum::<f64>() / factor as f64)
            .collect();
        let value = Tensor::new(&[batch, c, n / factor], data)?;
        let rg = self.rg(&[x]);
        Ok(self.push(value, Op::PoolMean { x, factor }, rg))
    }

    /// Repeats every sample `factor` times along the length axis.
    pub fn repeat(&mut self, x: Var, factor: usize) -> Result<Var> {
        let (batch, c, n) = self.value(x).dims3("repeat")?;
        if factor == 0 {
            return Err(GawnoError::length("repeat", "factor must be positive"));
        }
        let data = self
            .value(x)
            .data()
            .iter()
            .flat_map(|&v| std::iter::repeat(v).take(factor))
            .collect();
        let value = Tensor::new(&[batch, c, n * factor], data)?;
        let rg = self.rg(&[x]);
        Ok(self.push(value, Op::Repeat { x, factor }, rg))
    }

    /// Reverse pass from a scalar `loss`. Consumes the tape.
    ///
    /// Leaves used by several consumers receive the sum of all branch
    /// gradients. Only gradient-requiring leaves appear in the result.
    pub fn backward(self, loss: Var) -> Result<Gradients> {
        let nodes = self.nodes;
        if nodes[loss.0].value.numel() != 1 {
            return Err(GawnoError::Contract(format!(
                "backward from non-scalar of shape {:?}",
                nodes[loss.0].value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let node = &nodes[i];
            if !node.requires_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let needs = |v: &Var| nodes[v.0].requires_grad;
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::Linear { x, w, b } => {
                    let (batch, fin, n) = nodes[x.0].value.dims3("linear")?;
                    let fout = nodes[w.0].value.dim(0);
                    if needs(x) {
                        let gx = kernels::linear_backward_input(
                            &g,
                            (batch, fin, n),
                            nodes[w.0].value.data(),
                            fout,
                        );
                        add_owned(&mut grads[x.0], gx);
                    }
                    if needs(w) {
                        let gw = kernels::linear_backward_weight(
                            &g,
                            nodes[x.0].value.data(),
                            (batch, fin, n),
                            fout,
                        );
                        add_owned(&mut grads[w.0], gw);
                    }
                    if let Some(b) = b.filter(needs) {
                        let gb = kernels::linear_backward_bias(&g, batch, fout, n);
                        add_owned(&mut grads[b.0], gb);
                    }
                }
                Op::Add(a, b) => {
                    if needs(a) {
                        add_into(&mut grads[a.0], &g);
                    }
                    if needs(b) {
                        add_into(&mut grads[b.0], &g);
                    }
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                    if needs(a) {
                        let ga = g.iter().zip(vb).map(|(g, y)| g * y).collect();
                        add_owned(&mut grads[a.0], ga);
                    }
                    if needs(b) {
                        let gb = g.iter().zip(va).map(|(g, x)| g * x).collect();
                        add_owned(&mut grads[b.0], gb);
                    }
                }
                Op::Scale(x, alpha) => {
                    let gx = g.iter().map(|g| alpha * g).collect();
                    add_owned(&mut grads[x.0], gx);
                }
                Op::Sum(x) => {
                    let gx = vec![g[0]; nodes[x.0].value.numel()];
                    add_owned(&mut grads[x.0], gx);
                }
                Op::MeanLast(x) => {
                    let n = *nodes[x.0].value.shape().last().expect("rank >= 1");
                    let gx = g
                        .iter()
                        .flat_map(|&gv| std::iter::repeat(gv / n as f64).take(n))
                        .collect();
                    add_owned(&mut grads[x.0], gx);
                }
                Op::Gelu(x) => {
                    let gx = g
                        .iter()
                        .zip(nodes[x.0].value.data())
                        .map(|(g, &xv)| g * gelu_grad(xv))
                        .collect();
                    add_owned(&mut grads[x.0], gx);
                }
                Op::Sigmoid(x) => {
                    let gx = g
                        .iter()
                        .zip(node.value.data())
                        .map(|(g, &s)| g * s * (1.0 - s))
                        .collect();
                    add_owned(&mut grads[x.0], gx);
                }
                Op::Concat(a, b) => {
                    let (batch, ca, n) = nodes[a.0].value.dims3("concat")?;
                    let cb = nodes[b.0].value.dim(1);
                    let row = (ca + cb) * n;
                    if needs(a) {
                        let ga = (0..batch)
                            .flat_map(|i| g[i * row..i * row + ca * n].iter().copied())
                            .collect();
                        add_owned(&mut grads[a.0], ga);
                    }
                    if needs(b) {
                        let gb = (0..batch)
                            .flat_map(|i| g[i * row + ca * n..(i + 1) * row].iter().copied())
                            .collect();
                        add_owned(&mut grads[b.0], gb);
                    }
                }
                Op::Reshape(x) => add_into(&mut grads[x.0], &g),
                Op::Bce { p, target } => {
                    let pv = nodes[p.0].value.data();
                    let scale = g[0] / pv.len() as f64;
                    let gp = pv
                        .iter()
                        .zip(target)
                        .map(|(&p, &t)| scale * (p - t) / (p * (1.0 - p)).max(BCE_GRAD_FLOOR))
                        .collect();
                    add_owned(&mut grads[p.0], gp);
                }
                Op::KernelMul { v, r } => {
                    let (batch, din, k) = nodes[v.0].value.dims3("kernel_multiply")?;
                    let dout = nodes[r.0].value.dim(1);
                    let (vv, rv) = (nodes[v.0].value.data(), nodes[r.0].value.data());
                    if needs(v) {
                        let mut gv = vec![0.0; batch * din * k];
                        for b in 0..batch {
                            for i in 0..din {
                                let dst = &mut gv[(b * din + i) * k..(b * din + i + 1) * k];
                                for o in 0..dout {
                                    let rr = &rv[(i * dout + o) * k..(i * dout + o + 1) * k];
                                    let gr = &g[(b * dout + o) * k..(b * dout + o + 1) * k];
                                    for ((d, &rw), &gw) in dst.iter_mut().zip(rr).zip(gr) {
                                        *d += rw * gw;
                                    }
                                }
                            }
                        }
                        add_owned(&mut grads[v.0], gv);
                    }
                    if needs(r) {
                        let mut gr = vec![0.0; din * dout * k];
                        for b in 0..batch {
                            for i in 0..din {
                                let vr = &vv[(b * din + i) * k..(b * din + i + 1) * k];
                                for o in 0..dout {
                                    let dst = &mut gr[(i * dout + o) * k..(i * dout + o + 1) * k];
                                    let gg = &g[(b * dout + o) * k..(b * dout + o + 1) * k];
                                    for ((d, &x), &gw) in dst.iter_mut().zip(vr).zip(gg) {
                                        *d += x * gw;
                                    }
                                }
                            }
                        }
                        add_owned(&mut grads[r.0], gr);
                    }
                }
                Op::Analysis { x, filter } => {
                    let n = nodes[x.0].value.shape()[2];
                    let mut gx = vec![0.0; nodes[x.0].value.numel()];
                    kernels::analysis_transpose_into(&g, n, filter, &mut gx);
                    add_owned(&mut grads[x.0], gx);
                }
                Op::Synthesis {
                    approx,
                    detail,
                    lo,
                    hi,
                } => {
                    let n = node.value.shape()[2];
                    if needs(approx) {
                        add_owned(&mut grads[approx.0], kernels::analysis(&g, n, lo));
                    }
                    if let Some(d) = detail.filter(needs) {
                        add_owned(&mut grads[d.0], kernels::analysis(&g, n, hi));
                    }
                }
                Op::PoolMean { x, factor } => {
                    let inv = 1.0 / *factor as f64;
                    let gx = g
                        .iter()
                        .flat_map(|&gv| std::iter::repeat(gv * inv).take(*factor))
                        .collect();
                    add_owned(&mut grads[x.0], gx);
                }
                Op::Repeat { x, factor } => {
                    let gx = g.chunks(*factor).map(|c| c.iter().sum()).collect();
                    add_owned(&mut grads[x.0], gx);
                }
            }
        }

        // Intermediate gradients were taken as they were consumed; what is
        // left belongs to leaves.
        for (i, node) in nodes.iter().enumerate() {
            if !(matches!(node.op, Op::Leaf) && node.requires_grad) {
                grads[i] = None;
            }
        }
        let shapes = nodes.into_iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }
}
