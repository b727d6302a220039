use super::kernels::{self, ConvGeom};
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// The closed set of op kinds the graph knows how to differentiate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    Leaf,
    Add,
    Sub,
    Mul,
    Scale,
    Square,
    Relu,
    MatMul,
    Conv2d,
    MaxPool2,
    GlobalAvgPool,
    Mean,
    Sum,
    SumLast,
    MeanLast,
    LogSumExp,
    Reshape,
    IndexSelect,
    PairwiseSqDist,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Square(Var),
    Relu(Var),
    MatMul(Var, Var),
    Conv2d {
        x: Var,
        w: Var,
        bias: Option<Var>,
        geom: ConvGeom,
        cols: Vec<f64>,
    },
    MaxPool2 {
        x: Var,
        argmax: Vec<usize>,
    },
    GlobalAvgPool(Var),
    Mean(Var),
    Sum(Var),
    SumLast(Var),
    MeanLast(Var),
    LogSumExp(Var),
    Reshape(Var),
    IndexSelect {
        x: Var,
        index: Vec<usize>,
    },
    PairwiseSqDist(Var, Var),
}

impl Op {
    fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::Add(..) => OpKind::Add,
            Op::Sub(..) => OpKind::Sub,
            Op::Mul(..) => OpKind::Mul,
            Op::Scale(..) => OpKind::Scale,
            Op::Square(_) => OpKind::Square,
            Op::Relu(_) => OpKind::Relu,
            Op::MatMul(..) => OpKind::MatMul,
            Op::Conv2d { .. } => OpKind::Conv2d,
            Op::MaxPool2 { .. } => OpKind::MaxPool2,
            Op::GlobalAvgPool(_) => OpKind::GlobalAvgPool,
            Op::Mean(_) => OpKind::Mean,
            Op::Sum(_) => OpKind::Sum,
            Op::SumLast(_) => OpKind::SumLast,
            Op::MeanLast(_) => OpKind::MeanLast,
            Op::LogSumExp(_) => OpKind::LogSumExp,
            Op::Reshape(_) => OpKind::Reshape,
            Op::IndexSelect { .. } => OpKind::IndexSelect,
            Op::PairwiseSqDist(..) => OpKind::PairwiseSqDist,
        }
    }

    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::MatMul(a, b) => vec![*a, *b],
            Op::PairwiseSqDist(a, b) => vec![*a, *b],
            Op::Conv2d { x, w, bias, .. } => {
                let mut v = vec![*x, *w];
                v.extend(bias);
                v
            }
            Op::Scale(a, _)
            | Op::Square(a)
            | Op::Relu(a)
            | Op::GlobalAvgPool(a)
            | Op::Mean(a)
            | Op::Sum(a)
            | Op::SumLast(a)
            | Op::MeanLast(a)
            | Op::LogSumExp(a)
            | Op::Reshape(a) => vec![*a],
            Op::MaxPool2 { x, .. } | Op::IndexSelect { x, .. } => vec![*x],
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// A computation tape for one forward/backward pass.
///
/// Nodes are appended in evaluation order, which is therefore a topological
/// order; [`Graph::backward`] walks it in exact reverse.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

fn is_suffix(small: &[usize], big: &[usize]) -> bool {
    small.len() <= big.len() && big[big.len() - small.len()..] == *small
}

fn accumulate<'a>(grads: &'a mut [Option<Vec<f64>>], nodes: &[Node], v: Var) -> Option<&'a mut Vec<f64>> {
    let node = &nodes[v.0];
    if !node.requires_grad {
        return None;
    }
    let n = node.value.numel();
    Some(grads[v.0].get_or_insert_with(|| vec![0.0; n]))
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A constant leaf: no gradient flows into it.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.leaf(t, false)
    }

    /// A leaf that receives a gradient on [`Graph::backward`].
    pub fn param(&mut self, t: Tensor) -> Var {
        self.leaf(t, true)
    }

    fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
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

    pub fn kind(&self, v: Var) -> OpKind {
        self.nodes[v.0].op.kind()
    }

    /// Gradient of the last backward pass with respect to `v`; zeros when
    /// `v` was not reached or does not require gradients.
    pub fn grad(&self, v: Var) -> Tensor {
        let shape = self.nodes[v.0].value.shape().to_vec();
        match &self.grads[v.0] {
            Some(g) => Tensor::from_parts(shape, g.clone()),
            None => Tensor::zeros(&shape),
        }
    }

    fn push(&mut self, name: &'static str, value: Tensor, op: Op) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::NonFinite { op: name });
        }
        let requires_grad = op.inputs().iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        self.grads.push(None);
        Ok(Var(self.nodes.len() - 1))
    }

    fn broadcast_binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if !is_suffix(tb.shape(), ta.shape()) {
            return Err(Error::dim(name, ta.shape(), tb.shape()));
        }
        let nb = tb.numel();
        let bd = tb.data();
        let data = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| f(x, bd[i % nb]))
            .collect();
        Ok(Tensor::from_parts(ta.shape().to_vec(), data))
    }

    /// `a + b`, where `b`'s shape is a suffix of `a`'s and is repeated over
    /// the leading dims.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.broadcast_binary("add", a, b, |x, y| x + y)?;
        self.push("add", t, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.broadcast_binary("sub", a, b, |x, y| x - y)?;
        self.push("sub", t, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.broadcast_binary("mul", a, b, |x, y| x * y)?;
        self.push("mul", t, Op::Mul(a, b))
    }

    /// Multiplication by a constant.
    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let ta = &self.nodes[a.0].value;
        let t = Tensor::from_parts(ta.shape().to_vec(), ta.data().iter().map(|x| x * c).collect());
        self.push("scale", t, Op::Scale(a, c))
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        let ta = &self.nodes[a.0].value;
        let t = Tensor::from_parts(ta.shape().to_vec(), ta.data().iter().map(|x| x * x).collect());
        self.push("square", t, Op::Square(a))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let ta = &self.nodes[a.0].value;
        let t = Tensor::from_parts(
            ta.shape().to_vec(),
            ta.data().iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect(),
        );
        self.push("relu", t, Op::Relu(a))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let (sa, sb) = (ta.shape(), tb.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::dim("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        kernels::gemm(m, k, n, ta.data(), false, tb.data(), false, &mut out, 0.0);
        self.push("matmul", Tensor::from_parts(vec![m, n], out), Op::MatMul(a, b))
    }

    /// 2-D cross-correlation with zero padding. `x`: (B, Cin, H, W),
    /// `w`: (Cout, Cin, kh, kw), optional `bias`: (Cout).
    pub fn conv2d(
        &mut self,
        x: Var,
        w: Var,
        bias: Option<Var>,
        stride: usize,
        pad: usize,
    ) -> Result<Var> {
        let (tx, tw) = (&self.nodes[x.0].value, &self.nodes[w.0].value);
        let (sx, sw) = (tx.shape(), tw.shape());
        if sx.len() != 4 || sw.len() != 4 || sx[1] != sw[1] {
            return Err(Error::dim("conv2d", sx, sw));
        }
        if stride == 0 {
            return Err(Error::config("conv2d stride must be positive"));
        }
        let (batch, cin, h, wd) = (sx[0], sx[1], sx[2], sx[3]);
        let (cout, kh, kw) = (sw[0], sw[2], sw[3]);
        let out_dim = |size: usize, k: usize| -> Result<usize> {
            let span = size + 2 * pad;
            if span < k || (span - k) % stride != 0 {
                return Err(Error::config(format!(
                    "conv2d output size ({size} + 2*{pad} - {k})/{stride} + 1 is not a positive integer"
                )));
            }
            Ok((span - k) / stride + 1)
        };
        let geom = ConvGeom {
            batch,
            cin,
            h,
            w: wd,
            cout,
            kh,
            kw,
            stride,
            pad,
            ho: out_dim(h, kh)?,
            wo: out_dim(wd, kw)?,
        };
        if let Some(b) = bias {
            let sb = self.nodes[b.0].value.shape();
            if sb != [cout] {
                return Err(Error::dim("conv2d bias", sb, &[cout]));
            }
        }
        let cols = kernels::im2col(tx.data(), &geom);
        let npos = geom.positions();
        let mut out_mat = vec![0.0; cout * npos];
        kernels::gemm(cout, geom.patch(), npos, tw.data(), false, &cols, false, &mut out_mat, 0.0);

        let plane = geom.ho * geom.wo;
        let bias_data = bias.map(|b| self.nodes[b.0].value.data());
        let mut out = vec![0.0; batch * cout * plane];
        for b in 0..batch {
            for co in 0..cout {
                let bv = bias_data.map_or(0.0, |d| d[co]);
                let src = &out_mat[co * npos + b * plane..co * npos + (b + 1) * plane];
                let dst = &mut out[(b * cout + co) * plane..(b * cout + co + 1) * plane];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d = s + bv;
                }
            }
        }
        let t = Tensor::from_parts(vec![batch, cout, geom.ho, geom.wo], out);
        self.push(
            "conv2d",
            t,
            Op::Conv2d {
                x,
                w,
                bias,
                geom,
                cols,
            },
        )
    }

    /// 2x2 max pooling with stride 2 over (B, C, H, W); odd trailing rows or
    /// columns are dropped.
    pub fn maxpool2(&mut self, x: Var) -> Result<Var> {
        let tx = &self.nodes[x.0].value;
        let s = tx.shape();
        if s.len() != 4 || s[2] < 2 || s[3] < 2 {
            return Err(Error::dim("maxpool2", s, &[2, 2]));
        }
        let (out, argmax) = kernels::maxpool2(tx.data(), s[0] * s[1], s[2], s[3]);
        let t = Tensor::from_parts(vec![s[0], s[1], s[2] / 2, s[3] / 2], out);
        self.push("maxpool2", t, Op::MaxPool2 { x, argmax })
    }

    /// Mean over the spatial dims: (B, C, H, W) -> (B, C).
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let tx = &self.nodes[x.0].value;
        let s = tx.shape();
        if s.len() != 4 {
            return Err(Error::dim("global_avg_pool", s, &[0, 0, 0, 0]));
        }
        let hw = s[2] * s[3];
        let data = tx
            .data()
            .chunks_exact(hw)
            .map(|c| c.iter().sum::<f64>() / hw as f64)
            .collect();
        let t = Tensor::from_parts(vec![s[0], s[1]], data);
        self.push("global_avg_pool", t, Op::GlobalAvgPool(x))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s: f64 = self.nodes[a.0].value.data().iter().sum();
        self.push("sum", Tensor::scalar(s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let ta = &self.nodes[a.0].value;
        let s = ta.data().iter().sum::<f64>() / ta.numel() as f64;
        self.push("mean", Tensor::scalar(s), Op::Mean(a))
    }

    fn last_axis_reduce(
        &mut self,
        name: &'static str,
        a: Var,
        f: impl Fn(&[f64]) -> f64,
    ) -> Result<Tensor> {
        let ta = &self.nodes[a.0].value;
        let s = ta.shape();
        if s.is_empty() {
            return Err(Error::dim(name, s, &[1]));
        }
        let n = s[s.len() - 1];
        let data = ta.data().chunks_exact(n).map(f).collect();
        Ok(Tensor::from_parts(s[..s.len() - 1].to_vec(), data))
    }

    /// Sum over the last axis.
    pub fn sum_last(&mut self, a: Var) -> Result<Var> {
        let t = self.last_axis_reduce("sum_last", a, |r| r.iter().sum())?;
        self.push("sum_last", t, Op::SumLast(a))
    }

    /// Mean over the last axis.
    pub fn mean_last(&mut self, a: Var) -> Result<Var> {
        let t = self.last_axis_reduce("mean_last", a, |r| r.iter().sum::<f64>() / r.len() as f64)?;
        self.push("mean_last", t, Op::MeanLast(a))
    }

    /// `log(sum(exp(x)))` over the last axis, shifted by the row maximum.
    pub fn logsumexp(&mut self, a: Var) -> Result<Var> {
        let t = self.last_axis_reduce("logsumexp", a, logsumexp_row)?;
        self.push("logsumexp", t, Op::LogSumExp(a))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.nodes[a.0].value.reshape(shape)?;
        self.push("reshape", t, Op::Reshape(a))
    }

    /// Gather flat elements: `out[i] = x.flat[index[i]]`, shaped `shape`.
    pub fn index_select(&mut self, x: Var, index: Vec<usize>, shape: &[usize]) -> Result<Var> {
        let tx = &self.nodes[x.0].value;
        if let Some(&bad) = index.iter().find(|&&i| i >= tx.numel()) {
            return Err(Error::contract(format!(
                "index {bad} out of range for {} elements",
                tx.numel()
            )));
        }
        let data: Vec<f64> = index.iter().map(|&i| tx.data()[i]).collect();
        let t = Tensor::new(shape.to_vec(), data)?;
        self.push("index_select", t, Op::IndexSelect { x, index })
    }

    /// Squared Euclidean distance between every row of `a` (B, d) and every
    /// row of `b` (K, d): (B, K).
    pub fn pairwise_sq_dist(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let (sa, sb) = (ta.shape(), tb.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[1] {
            return Err(Error::dim("pairwise_sq_dist", sa, sb));
        }
        let (rows, k) = (sa[0], sb[0]);
        let mut out = Vec::with_capacity(rows * k);
        for i in 0..rows {
            let ai = ta.row(i);
            for j in 0..k {
                let bj = tb.row(j);
                out.push(ai.iter().zip(bj).map(|(x, y)| (x - y) * (x - y)).sum());
            }
        }
        self.push(
            "pairwise_sq_dist",
            Tensor::from_parts(vec![rows, k], out),
            Op::PairwiseSqDist(a, b),
        )
    }

    /// Activation pattern of every piecewise op (relu masks, pool argmaxes).
    /// Two evaluations with equal signatures lie on the same smooth piece.
    pub fn kink_signature(&self) -> Vec<usize> {
        let mut sig = Vec::new();
        for node in &self.nodes {
            match &node.op {
                Op::Relu(a) => sig.extend(
                    self.nodes[a.0]
                        .value
                        .data()
                        .iter()
                        .map(|&x| usize::from(x > 0.0) + 2 * usize::from(x == 0.0)),
                ),
                Op::MaxPool2 { argmax, .. } => sig.extend(argmax.iter().copied()),
                _ => {}
            }
        }
        sig
    }

    /// Reverse-mode sweep from a scalar `loss`. Gradients from a previous
    /// call are discarded.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if !self.nodes[loss.0].value.is_scalar() {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, found shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        self.grads.iter_mut().for_each(|g| *g = None);
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.grads[loss.0] = Some(vec![1.0]);

        let nodes = &self.nodes;
        let grads = &mut self.grads;
        for i in (0..=loss.0).rev() {
            let node = &nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            backward_node(nodes, grads, node, &g);
            grads[i] = Some(g);
        }
        Ok(())
    }
}

/// Numerically stable `log(sum(exp(row)))`.
pub fn logsumexp_row(row: &[f64]) -> f64 {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn backward_node(nodes: &[Node], grads: &mut [Option<Vec<f64>>], node: &Node, g: &[f64]) {
    let val = |v: Var| nodes[v.0].value.data();
    match &node.op {
        Op::Leaf => {}
        Op::Add(a, b) | Op::Sub(a, b) => {
            let sign = if matches!(node.op, Op::Add(..)) { 1.0 } else { -1.0 };
            if let Some(ga) = accumulate(grads, nodes, *a) {
                ga.iter_mut().zip(g).for_each(|(x, y)| *x += y);
            }
            if let Some(gb) = accumulate(grads, nodes, *b) {
                let nb = gb.len();
                for (i, y) in g.iter().enumerate() {
                    gb[i % nb] += sign * y;
                }
            }
        }
        Op::Mul(a, b) => {
            let (va, vb) = (val(*a), val(*b));
            let nb = vb.len();
            if let Some(ga) = accumulate(grads, nodes, *a) {
                for (i, y) in g.iter().enumerate() {
                    ga[i] += y * vb[i % nb];
                }
            }
            if let Some(gb) = accumulate(grads, nodes, *b) {
                for (i, y) in g.iter().enumerate() {
                    gb[i % nb] += y * va[i];
                }
            }
        }
        Op::Scale(a, c) => {
            if let Some(ga) = accumulate(grads, nodes, *a) {
                ga.iter_mut().zip(g).for_each(|(x, y)| *x += c * y);
            }
        }
        Op::Square(a) => {
            let va = val(*a);
            if let Some(ga) = accumulate(grads, nodes, *a) {
                for i in 0..g.len() {
                    ga[i] += 2.0 * va[i] * g[i];
                }
            }
        }
        Op::Relu(a) => {
            let va = val(*a);
            if let Some(ga) = accumulate(grads, nodes, *a) {
                for i in 0..g.len() {
                    if va[i] > 0.0 {
                        ga[i] += g[i];
                    }
                }
            }
        }
        Op::MatMul(a, b) => {
            let (sa, sb) = (nodes[a.0].value.shape(), nodes[b.0].value.shape());
            let (m, k, n) = (sa[0], sa[1], sb[1]);
            let (va, vb) = (val(*a), val(*b));
            if let Some(ga) = accumulate(grads, nodes, *a) {
                kernels::gemm(m, n, k, g, false, vb, true, ga, 1.0);
            }
            if let Some(gb) = accumulate(grads, nodes, *b) {
                kernels::gemm(k, m, n, va, true, g, false, gb, 1.0);
            }
        }
        Op::Conv2d {
            x,
            w,
            bias,
            geom,
            cols,
        } => {
            let npos = geom.positions();
            let plane = geom.ho * geom.wo;
            let mut gmat = vec![0.0; geom.cout * npos];
            for b in 0..geom.batch {
                for co in 0..geom.cout {
                    let src = &g[(b * geom.cout + co) * plane..(b * geom.cout + co + 1) * plane];
                    gmat[co * npos + b * plane..co * npos + (b + 1) * plane].copy_from_slice(src);
                }
            }
            if let Some(gw) = accumulate(grads, nodes, *w) {
                kernels::gemm(geom.cout, npos, geom.patch(), &gmat, false, cols, true, gw, 1.0);
            }
            if let Some(bias) = bias {
                if let Some(gbias) = accumulate(grads, nodes, *bias) {
                    for (co, gb) in gbias.iter_mut().enumerate() {
                        *gb += gmat[co * npos..(co + 1) * npos].iter().sum::<f64>();
                    }
                }
            }
            if nodes[x.0].requires_grad {
                let vw = val(*w);
                let mut dcols = vec![0.0; geom.patch() * npos];
                kernels::gemm(geom.patch(), geom.cout, npos, vw, true, &gmat, false, &mut dcols, 0.0);
                if let Some(gx) = accumulate(grads, nodes, *x) {
                    kernels::col2im(&dcols, geom, gx);
                }
            }
        }
        Op::MaxPool2 { x, argmax } => {
            if let Some(gx) = accumulate(grads, nodes, *x) {
                for (i, &src) in argmax.iter().enumerate() {
                    gx[src] += g[i];
                }
            }
        }
        Op::GlobalAvgPool(x) => {
            let s = nodes[x.0].value.shape();
            let hw = s[2] * s[3];
            if let Some(gx) = accumulate(grads, nodes, *x) {
                for (i, chunk) in gx.chunks_exact_mut(hw).enumerate() {
                    let share = g[i] / hw as f64;
                    chunk.iter_mut().for_each(|v| *v += share);
                }
            }
        }
        Op::Sum(a) | Op::Mean(a) => {
            let n = nodes[a.0].value.numel();
            let share = if matches!(node.op, Op::Mean(_)) { g[0] / n as f64 } else { g[0] };
            if let Some(ga) = accumulate(grads, nodes, *a) {
                ga.iter_mut().for_each(|v| *v += share);
            }
        }
        Op::SumLast(a) | Op::MeanLast(a) => {
            let s = nodes[a.0].value.shape();
            let n = s[s.len() - 1];
            let div = if matches!(node.op, Op::MeanLast(_)) { n as f64 } else { 1.0 };
            if let Some(ga) = accumulate(grads, nodes, *a) {
                for (r, chunk) in ga.chunks_exact_mut(n).enumerate() {
                    let share = g[r] / div;
                    chunk.iter_mut().for_each(|v| *v += share);
                }
            }
        }
        Op::LogSumExp(a) => {
            let s = nodes[a.0].value.shape();
            let n = s[s.len() - 1];
            let va = val(*a);
            let out = node.value.data();
            if let Some(ga) = accumulate(grads, nodes, *a) {
                for (r, chunk) in ga.chunks_exact_mut(n).enumerate() {
                    for (j, v) in chunk.iter_mut().enumerate() {
                        *v += g[r] * (va[r * n + j] - out[r]).exp();
                    }
                }
            }
        }
        Op::Reshape(a) => {
            if let Some(ga) = accumulate(grads, nodes, *a) {
                ga.iter_mut().zip(g).for_each(|(x, y)| *x += y);
            }
        }
        Op::IndexSelect { x, index } => {
            if let Some(gx) = accumulate(grads, nodes, *x) {
                for (i, &src) in index.iter().enumerate() {
                    gx[src] += g[i];
                }
            }
        }
        Op::PairwiseSqDist(a, b) => {
            let (ta, tb) = (&nodes[a.0].value, &nodes[b.0].value);
            let (rows, d) = (ta.shape()[0], ta.shape()[1]);
            let k = tb.shape()[0];
            let mut da = vec![0.0; rows * d];
            let mut db = vec![0.0; k * d];
            for i in 0..rows {
                let ai = ta.row(i);
                for j in 0..k {
                    let coef = 2.0 * g[i * k + j];
                    if coef == 0.0 {
                        continue;
                    }
                    let bj = tb.row(j);
                    for t in 0..d {
                        let diff = coef * (ai[t] - bj[t]);
                        da[i * d + t] += diff;
                        db[j * d + t] -= diff;
                    }
                }
            }
            if let Some(ga) = accumulate(grads, nodes, *a) {
                ga.iter_mut().zip(&da).for_each(|(x, y)| *x += y);
            }
            if let Some(gb) = accumulate(grads, nodes, *b) {
                gb.iter_mut().zip(&db).for_each(|(x, y)| *x += y);
            }
        }
    }
}
