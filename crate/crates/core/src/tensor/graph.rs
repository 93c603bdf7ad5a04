//! Reverse-mode computation graph over [`Tensor`] values.
//!
//! Nodes are appended in topological order (an op may only reference
//! earlier nodes), so the backward sweep is a single reverse pass with a
//! deterministic accumulation order.

use std::rc::Rc;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

impl NodeId {
    /// Position in the graph's node list; indexes the gradient vector
    /// returned by [`Graph::backward`].
    pub fn index(&self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

enum Op {
    Leaf,
    EmbedLookup {
        table: NodeId,
        ids: Vec<usize>,
    },
    /// input L x D, kernels k x D x F, bias F -> (L-k+1) x F, valid cross-correlation.
    Conv1d {
        input: NodeId,
        kernels: NodeId,
        bias: NodeId,
    },
    /// input L x F -> F; per filter, first argmax position (lowest t).
    MaxOverTime {
        input: NodeId,
        argmax: Vec<usize>,
    },
    /// act(W x + b); relu/tanh derivatives are recovered from the output value.
    Dense {
        x: NodeId,
        w: NodeId,
        b: NodeId,
        act: Activation,
    },
    Relu {
        x: NodeId,
    },
    /// Row-wise concatenation of two rank-2 tensors with equal row count.
    HStack {
        left: NodeId,
        right: NodeId,
    },
    Concat {
        parts: Vec<NodeId>,
    },
    Subtract3 {
        a: NodeId,
        b: NodeId,
        c: NodeId,
    },
    Hadamard {
        a: NodeId,
        b: NodeId,
    },
    /// Elementwise multiply by a constant mask (inverted dropout).
    MulMask {
        x: NodeId,
        mask: Vec<f64>,
    },
    SoftmaxXent {
        logits: NodeId,
        gold: usize,
        probs: Vec<f64>,
    },
    MeanScalars {
        parts: Vec<NodeId>,
    },
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, ctx: &str) -> Result<NodeId> {
        value.check_finite(ctx)?;
        self.push_unchecked(Rc::new(value), op)
    }

    fn push_unchecked(&mut self, value: Rc<Tensor>, op: Op) -> Result<NodeId> {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { value, op });
        Ok(id)
    }

    /// Constant or parameter leaf; shares the tensor without copying.
    pub fn leaf(&mut self, value: Rc<Tensor>) -> Result<NodeId> {
        value.check_finite("leaf")?;
        self.push_unchecked(value, Op::Leaf)
    }

    pub fn leaf_owned(&mut self, value: Tensor) -> Result<NodeId> {
        self.leaf(Rc::new(value))
    }

    /// Row gather: table |V| x d, ids length L -> L x d.
    pub fn embed_lookup(&mut self, table: NodeId, ids: &[usize]) -> Result<NodeId> {
        let t = self.value(table);
        if t.shape().len() != 2 {
            return Err(Error::Shape("embed_lookup: table must be rank 2".into()));
        }
        let (v, d) = (t.shape()[0], t.shape()[1]);
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= v {
                return Err(Error::Shape(format!(
                    "embed_lookup: id {id} out of range for table with {v} rows"
                )));
            }
            out.extend_from_slice(&t.data()[id * d..(id + 1) * d]);
        }
        let value = Tensor::from_vec(&[ids.len(), d], out)?;
        self.push(
            value,
            Op::EmbedLookup {
                table,
                ids: ids.to_vec(),
            },
            "embed_lookup",
        )
    }

    pub fn conv1d(&mut self, input: NodeId, kernels: NodeId, bias: NodeId) -> Result<NodeId> {
        let (x, w, b) = (self.value(input), self.value(kernels), self.value(bias));
        if x.shape().len() != 2 || w.shape().len() != 3 || b.shape().len() != 1 {
            return Err(Error::Shape("conv1d: expected L x D input, k x D x F kernels, F bias".into()));
        }
        let (l, d) = (x.shape()[0], x.shape()[1]);
        let (k, dk, f) = (w.shape()[0], w.shape()[1], w.shape()[2]);
        if dk != d || b.shape()[0] != f {
            return Err(Error::Shape(format!(
                "conv1d: input D={d} kernels D={dk} F={f} bias {}",
                b.shape()[0]
            )));
        }
        if l < k {
            return Err(Error::Shape(format!("conv1d: input length {l} < kernel width {k}")));
        }
        let lo = l - k + 1;
        let mut out = vec![0.0; lo * f];
        for t in 0..lo {
            for a in 0..k {
                let xrow = &x.data()[(t + a) * d..(t + a + 1) * d];
                let wbase = a * d * f;
                for (c, &xv) in xrow.iter().enumerate() {
                    if xv == 0.0 {
                        continue;
                    }
                    let ws = &w.data()[wbase + c * f..wbase + (c + 1) * f];
                    let os = &mut out[t * f..(t + 1) * f];
                    for (o, &wv) in os.iter_mut().zip(ws) {
                        *o += xv * wv;
                    }
                }
            }
            for ff in 0..f {
                out[t * f + ff] += b.data()[ff];
            }
        }
        let value = Tensor::from_vec(&[lo, f], out)?;
        self.push(value, Op::Conv1d { input, kernels, bias }, "conv1d")
    }

    pub fn max_over_time(&mut self, input: NodeId) -> Result<NodeId> {
        let x = self.value(input);
        if x.shape().len() != 2 {
            return Err(Error::Shape("max_over_time: expected rank 2 input".into()));
        }
        let (l, f) = (x.shape()[0], x.shape()[1]);
        if l == 0 {
            return Err(Error::Shape("max_over_time: empty time axis".into()));
        }
        let mut best = x.data()[..f].to_vec();
        let mut argmax = vec![0usize; f];
        for t in 1..l {
            for ff in 0..f {
                let v = x.at2(t, ff);
                // strict > keeps the earliest position on ties
                if v > best[ff] {
                    best[ff] = v;
                    argmax[ff] = t;
                }
            }
        }
        let value = Tensor::from_vec(&[f], best)?;
        self.push(value, Op::MaxOverTime { input, argmax }, "max_over_time")
    }

    pub fn dense(
        &mut self,
        x: NodeId,
        w: NodeId,
        b: NodeId,
        act: Activation,
    ) -> Result<NodeId> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        if xv.shape().len() != 1 || wv.shape().len() != 2 || bv.shape().len() != 1 {
            return Err(Error::Shape("dense: expected vector x, matrix W, vector b".into()));
        }
        let (m, n) = (wv.shape()[0], wv.shape()[1]);
        if xv.shape()[0] != n || bv.shape()[0] != m {
            return Err(Error::Shape(format!(
                "dense: x {} vs W {m}x{n} vs b {}",
                xv.shape()[0],
                bv.shape()[0]
            )));
        }
        let mut out = bv.data().to_vec();
        for i in 0..m {
            let row = &wv.data()[i * n..(i + 1) * n];
            let mut acc = 0.0;
            for (wij, xj) in row.iter().zip(xv.data()) {
                acc += wij * xj;
            }
            out[i] += acc;
        }
        for v in out.iter_mut() {
            *v = match act {
                Activation::Identity => *v,
                Activation::Relu => v.max(0.0),
                Activation::Tanh => v.tanh(),
            };
        }
        let value = Tensor::from_vec(&[m], out)?;
        self.push(value, Op::Dense { x, w, b, act }, "dense")
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        let xv = self.value(x);
        let shape = xv.shape().to_vec();
        let data = xv.data().iter().map(|v| v.max(0.0)).collect();
        let value = Tensor::from_vec(&shape, data)?;
        self.push(value, Op::Relu { x }, "relu")
    }

    pub fn hstack(&mut self, left: NodeId, right: NodeId) -> Result<NodeId> {
        let (a, b) = (self.value(left), self.value(right));
        if a.shape().len() != 2 || b.shape().len() != 2 || a.shape()[0] != b.shape()[0] {
            return Err(Error::Shape("hstack: rank-2 inputs with equal row count required".into()));
        }
        let (l, da, db) = (a.shape()[0], a.shape()[1], b.shape()[1]);
        let mut out = Vec::with_capacity(l * (da + db));
        for i in 0..l {
            out.extend_from_slice(&a.data()[i * da..(i + 1) * da]);
            out.extend_from_slice(&b.data()[i * db..(i + 1) * db]);
        }
        let value = Tensor::from_vec(&[l, da + db], out)?;
        self.push(value, Op::HStack { left, right }, "hstack")
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::Shape("concat: no parts".into()));
        }
        let mut out = Vec::new();
        for &p in parts {
            let v = self.value(p);
            if v.shape().len() != 1 {
                return Err(Error::Shape("concat: rank-1 parts required".into()));
            }
            out.extend_from_slice(v.data());
        }
        let value = Tensor::from_vec(&[out.len()], out)?;
        self.push(
            value,
            Op::Concat {
                parts: parts.to_vec(),
            },
            "concat",
        )
    }

    /// a - b - c over equal-length vectors.
    pub fn subtract3(&mut self, a: NodeId, b: NodeId, c: NodeId) -> Result<NodeId> {
        let (av, bv, cv) = (self.value(a), self.value(b), self.value(c));
        if av.shape() != bv.shape() || av.shape() != cv.shape() || av.shape().len() != 1 {
            return Err(Error::Shape("subtract3: equal-length vectors required".into()));
        }
        let data = av
            .data()
            .iter()
            .zip(bv.data())
            .zip(cv.data())
            .map(|((x, y), z)| x - y - z)
            .collect();
        let value = Tensor::from_vec(av.shape(), data)?;
        self.push(value, Op::Subtract3 { a, b, c }, "subtract3")
    }

    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() || av.shape().len() != 1 {
            return Err(Error::Shape("hadamard: equal-length vectors required".into()));
        }
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
        let value = Tensor::from_vec(av.shape(), data)?;
        self.push(value, Op::Hadamard { a, b }, "hadamard")
    }

    pub fn mul_mask(&mut self, x: NodeId, mask: &[f64]) -> Result<NodeId> {
        let xv = self.value(x);
        if xv.len() != mask.len() {
            return Err(Error::Shape("mul_mask: mask length mismatch".into()));
        }
        let shape = xv.shape().to_vec();
        let data = xv.data().iter().zip(mask).map(|(v, m)| v * m).collect();
        let value = Tensor::from_vec(&shape, data)?;
        self.push(
            value,
            Op::MulMask {
                x,
                mask: mask.to_vec(),
            },
            "mul_mask",
        )
    }

    /// Numerically stabilized softmax cross-entropy against a gold class.
    /// Returns the scalar loss node and the probability vector.
    pub fn softmax_xent(&mut self, logits: NodeId, gold: usize) -> Result<(NodeId, Vec<f64>)> {
        let lv = self.value(logits);
        if lv.shape().len() != 1 {
            return Err(Error::Shape("softmax_xent: rank-1 logits required".into()));
        }
        let k = lv.shape()[0];
        if gold >= k {
            return Err(Error::Shape(format!("softmax_xent: gold {gold} >= K {k}")));
        }
        let max = lv.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = lv.data().iter().map(|v| (v - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let probs: Vec<f64> = exps.iter().map(|e| e / sum).collect();
        let loss = -(probs[gold].max(f64::MIN_POSITIVE)).ln();
        let id = self.push(
            Tensor::scalar(loss),
            Op::SoftmaxXent {
                logits,
                gold,
                probs: probs.clone(),
            },
            "softmax_xent",
        )?;
        Ok((id, probs))
    }

    pub fn mean_scalars(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::Shape("mean_scalars: no parts".into()));
        }
        let mut acc = 0.0;
        for &p in parts {
            let v = self.value(p);
            if v.len() != 1 {
                return Err(Error::Shape("mean_scalars: scalar parts required".into()));
            }
            acc += v.item();
        }
        let value = Tensor::scalar(acc / parts.len() as f64);
        self.push(
            value,
            Op::MeanScalars {
                parts: parts.to_vec(),
            },
            "mean_scalars",
        )
    }

    /// Reverse sweep from a scalar root. Returns one gradient slot per node;
    /// unreachable nodes stay `None`.
    pub fn backward(&mut self, root: NodeId) -> Result<Vec<Option<Tensor>>> {
        if self.value(root).len() != 1 {
            return Err(Error::Shape("backward: root must be scalar".into()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::scalar(1.0));

        for i in (0..=root.0).rev() {
            let Some(gout) = grads[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Leaf => {
                    // keep the gradient available for the caller
                    grads[i] = Some(gout);
                    continue;
                }
                Op::EmbedLookup { table, ids } => {
                    let d = self.nodes[table.0].value.shape()[1];
                    let g = Self::slot(&mut grads, *table, &self.nodes[table.0].value);
                    for (row, &id) in ids.iter().enumerate() {
                        let src = &gout.data()[row * d..(row + 1) * d];
                        let dst = &mut g.data_mut()[id * d..(id + 1) * d];
                        for (dv, sv) in dst.iter_mut().zip(src) {
                            *dv += sv;
                        }
                    }
                }
                Op::Conv1d { input, kernels, bias } => {
                    let (input, kernels, bias) = (*input, *kernels, *bias);
                    let x = Rc::clone(&self.nodes[input.0].value);
                    let w = Rc::clone(&self.nodes[kernels.0].value);
                    let (d, k, f) = (x.shape()[1], w.shape()[0], w.shape()[2]);
                    let lo = gout.shape()[0];
                    {
                        let gx = Self::slot(&mut grads, input, &x);
                        for t in 0..lo {
                            for a in 0..k {
                                for c in 0..d {
                                    let mut acc = 0.0;
                                    let ws = &w.data()[a * d * f + c * f..a * d * f + (c + 1) * f];
                                    let gs = &gout.data()[t * f..(t + 1) * f];
                                    for (wv, gv) in ws.iter().zip(gs) {
                                        acc += wv * gv;
                                    }
                                    gx.data_mut()[(t + a) * d + c] += acc;
                                }
                            }
                        }
                    }
                    {
                        let gw = Self::slot(&mut grads, kernels, &w);
                        for t in 0..lo {
                            let gs = &gout.data()[t * f..(t + 1) * f];
                            for a in 0..k {
                                let xrow = &x.data()[(t + a) * d..(t + a + 1) * d];
                                for (c, &xv) in xrow.iter().enumerate() {
                                    if xv == 0.0 {
                                        continue;
                                    }
                                    let dst = &mut gw.data_mut()
                                        [a * d * f + c * f..a * d * f + (c + 1) * f];
                                    for (dv, gv) in dst.iter_mut().zip(gs) {
                                        *dv += xv * gv;
                                    }
                                }
                            }
                        }
                    }
                    {
                        let bshape = Rc::clone(&self.nodes[bias.0].value);
                        let gb = Self::slot(&mut grads, bias, &bshape);
                        for t in 0..lo {
                            for ff in 0..f {
                                gb.data_mut()[ff] += gout.data()[t * f + ff];
                            }
                        }
                    }
                }
                Op::MaxOverTime { input, argmax } => {
                    let input = *input;
                    let argmax = argmax.clone();
                    let x = Rc::clone(&self.nodes[input.0].value);
                    let f = x.shape()[1];
                    let gx = Self::slot(&mut grads, input, &x);
                    for (ff, &t) in argmax.iter().enumerate() {
                        gx.data_mut()[t * f + ff] += gout.data()[ff];
                    }
                }
                Op::Dense { x, w, b, act } => {
                    let (x, w, b, act) = (*x, *w, *b, *act);
                    let out = Rc::clone(&self.nodes[i].value);
                    let xv = Rc::clone(&self.nodes[x.0].value);
                    let wv = Rc::clone(&self.nodes[w.0].value);
                    let (m, n) = (wv.shape()[0], wv.shape()[1]);
                    // dL/d(pre-activation)
                    let mut gpre = gout.data().to_vec();
                    match act {
                        Activation::Identity => {}
                        Activation::Relu => {
                            for (g, o) in gpre.iter_mut().zip(out.data()) {
                                if *o <= 0.0 {
                                    *g = 0.0;
                                }
                            }
                        }
                        Activation::Tanh => {
                            for (g, o) in gpre.iter_mut().zip(out.data()) {
                                *g *= 1.0 - o * o;
                            }
                        }
                    }
                    {
                        let gx = Self::slot(&mut grads, x, &xv);
                        for i2 in 0..m {
                            let row = &wv.data()[i2 * n..(i2 + 1) * n];
                            let g = gpre[i2];
                            for (dv, wv2) in gx.data_mut().iter_mut().zip(row) {
                                *dv += g * wv2;
                            }
                        }
                    }
                    {
                        let gw = Self::slot(&mut grads, w, &wv);
                        for i2 in 0..m {
                            let g = gpre[i2];
                            let dst = &mut gw.data_mut()[i2 * n..(i2 + 1) * n];
                            for (dv, xv2) in dst.iter_mut().zip(xv.data()) {
                                *dv += g * xv2;
                            }
                        }
                    }
                    {
                        let bv = Rc::clone(&self.nodes[b.0].value);
                        let gb = Self::slot(&mut grads, b, &bv);
                        for (dv, g) in gb.data_mut().iter_mut().zip(&gpre) {
                            *dv += g;
                        }
                    }
                }
                Op::Relu { x } => {
                    let x = *x;
                    let out = Rc::clone(&self.nodes[i].value);
                    let xv = Rc::clone(&self.nodes[x.0].value);
                    let gx = Self::slot(&mut grads, x, &xv);
                    for ((dv, g), o) in gx.data_mut().iter_mut().zip(gout.data()).zip(out.data()) {
                        if *o > 0.0 {
                            *dv += g;
                        }
                    }
                }
                Op::HStack { left, right } => {
                    let (left, right) = (*left, *right);
                    let lv = Rc::clone(&self.nodes[left.0].value);
                    let rv = Rc::clone(&self.nodes[right.0].value);
                    let (l, da, db) = (lv.shape()[0], lv.shape()[1], rv.shape()[1]);
                    {
                        let gl = Self::slot(&mut grads, left, &lv);
                        for r in 0..l {
                            let src = &gout.data()[r * (da + db)..r * (da + db) + da];
                            let dst = &mut gl.data_mut()[r * da..(r + 1) * da];
                            for (dv, sv) in dst.iter_mut().zip(src) {
                                *dv += sv;
                            }
                        }
                    }
                    {
                        let gr = Self::slot(&mut grads, right, &rv);
                        for r in 0..l {
                            let src = &gout.data()[r * (da + db) + da..(r + 1) * (da + db)];
                            let dst = &mut gr.data_mut()[r * db..(r + 1) * db];
                            for (dv, sv) in dst.iter_mut().zip(src) {
                                *dv += sv;
                            }
                        }
                    }
                }
                Op::Concat { parts } => {
                    let parts = parts.clone();
                    let mut off = 0;
                    for p in parts {
                        let pv = Rc::clone(&self.nodes[p.0].value);
                        let n = pv.len();
                        let gp = Self::slot(&mut grads, p, &pv);
                        for (dv, sv) in gp.data_mut().iter_mut().zip(&gout.data()[off..off + n]) {
                            *dv += sv;
                        }
                        off += n;
                    }
                }
                Op::Subtract3 { a, b, c } => {
                    let (a, b, c) = (*a, *b, *c);
                    for (node, sign) in [(a, 1.0), (b, -1.0), (c, -1.0)] {
                        let nv = Rc::clone(&self.nodes[node.0].value);
                        let gn = Self::slot(&mut grads, node, &nv);
                        for (dv, sv) in gn.data_mut().iter_mut().zip(gout.data()) {
                            *dv += sign * sv;
                        }
                    }
                }
                Op::Hadamard { a, b } => {
                    let (a, b) = (*a, *b);
                    let av = Rc::clone(&self.nodes[a.0].value);
                    let bv = Rc::clone(&self.nodes[b.0].value);
                    {
                        let ga = Self::slot(&mut grads, a, &av);
                        for ((dv, g), y) in ga.data_mut().iter_mut().zip(gout.data()).zip(bv.data())
                        {
                            *dv += g * y;
                        }
                    }
                    {
                        let gb = Self::slot(&mut grads, b, &bv);
                        for ((dv, g), x2) in
                            gb.data_mut().iter_mut().zip(gout.data()).zip(av.data())
                        {
                            *dv += g * x2;
                        }
                    }
                }
                Op::MulMask { x, mask } => {
                    let x = *x;
                    let mask = mask.clone();
                    let xv = Rc::clone(&self.nodes[x.0].value);
                    let gx = Self::slot(&mut grads, x, &xv);
                    for ((dv, g), m) in gx.data_mut().iter_mut().zip(gout.data()).zip(&mask) {
                        *dv += g * m;
                    }
                }
                Op::SoftmaxXent { logits, gold, probs } => {
                    let (logits, gold) = (*logits, *gold);
                    let probs = probs.clone();
                    let lv = Rc::clone(&self.nodes[logits.0].value);
                    let g = gout.item();
                    let gl = Self::slot(&mut grads, logits, &lv);
                    for (k2, (dv, p)) in gl.data_mut().iter_mut().zip(&probs).enumerate() {
                        let onehot = if k2 == gold { 1.0 } else { 0.0 };
                        *dv += g * (p - onehot);
                    }
                }
                Op::MeanScalars { parts } => {
                    let parts = parts.clone();
                    let g = gout.item() / parts.len() as f64;
                    for p in parts {
                        let pv = Rc::clone(&self.nodes[p.0].value);
                        let gp = Self::slot(&mut grads, p, &pv);
                        gp.data_mut()[0] += g;
                    }
                }
            }
        }
        Ok(grads)
    }

    fn slot<'a>(
        grads: &'a mut [Option<Tensor>],
        id: NodeId,
        like: &Tensor,
    ) -> &'a mut Tensor {
        grads[id.0].get_or_insert_with(|| Tensor::zeros(like.shape()))
    }
}
