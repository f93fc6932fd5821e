use rand::Rng;

use super::tensor::{dot, matmul, matmul_a_bt_acc, matmul_at_b_acc};
use super::{Tensor, TensorError};

/// Clamp applied to probabilities before taking logs in the binary
/// cross-entropy.
pub const PROB_CLAMP: f64 = 1e-7;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    Affine { x: Var, w: Var, b: Var },
    Add(Var, Var),
    ConcatCols(Var, Var),
    GatherRows { src: Var, idx: Vec<usize> },
    SegmentMean { src: Var, segments: Vec<Vec<usize>> },
    MeanPool(Var),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Dropout { x: Var, mask: Vec<f64> },
    StraightThrough { x: Var, scale: f64 },
    Scale(Var, f64),
    SumSquares(Var),
    GroupSqDist { x: Var, anchors: Tensor, group: usize },
    SoftmaxCrossEntropy { logits: Var, labels: Vec<usize>, probs: Tensor },
    Mse { pred: Var, target: Tensor },
    PairDot { x: Var, pairs: Vec<(usize, usize)> },
    WeightedBce { probs: Var, labels: Vec<f64>, weights: Vec<f64>, symmetric: bool },
    WeightedSum { parts: Vec<Var>, weights: Vec<f64> },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Records a forward computation and replays it backwards.
///
/// Nodes are appended in evaluation order, so a reverse sweep over the node
/// list visits every consumer before its inputs.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
}

fn shape_err(op: &str, detail: String) -> TensorError {
    TensorError::Shape(format!("{op}: {detail}"))
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

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Trainable leaf; receives a gradient on [`Tape::backward`].
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Constant leaf.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient accumulated for `v` by the last backward pass, if any reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// `x · w + b`, with `x: n × in`, `w: in × out`, `b: 1 × out`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var, TensorError> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        if xv.cols() != wv.rows() {
            return Err(shape_err(
                "affine",
                format!("input has {} columns, weight has {} rows", xv.cols(), wv.rows()),
            ));
        }
        if bv.rows() != 1 || bv.cols() != wv.cols() {
            return Err(shape_err(
                "affine",
                format!("bias is {:?}, expected [1, {}]", bv.shape(), wv.cols()),
            ));
        }
        let (n, k, m) = (xv.rows(), xv.cols(), wv.cols());
        let mut out = matmul(xv.data(), n, k, wv.data(), m);
        for r in 0..n {
            for (o, &bb) in out[r * m..(r + 1) * m].iter_mut().zip(bv.data()) {
                *o += bb;
            }
        }
        let needs = self.needs(x) || self.needs(w) || self.needs(b);
        Ok(self.push(Tensor::new(n, m, out)?, Op::Affine { x, w, b }, needs))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(shape_err("add", format!("{:?} vs {:?}", av.shape(), bv.shape())));
        }
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x + y).collect();
        let out = Tensor::new(av.rows(), av.cols(), data)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Add(a, b), needs))
    }

    /// Column-wise concatenation `[a | b]`.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rows() != bv.rows() {
            return Err(shape_err(
                "concat",
                format!("{} rows vs {} rows", av.rows(), bv.rows()),
            ));
        }
        let cols = av.cols() + bv.cols();
        let mut data = Vec::with_capacity(av.rows() * cols);
        for r in 0..av.rows() {
            data.extend_from_slice(av.row(r));
            data.extend_from_slice(bv.row(r));
        }
        let out = Tensor::new(av.rows(), cols, data)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::ConcatCols(a, b), needs))
    }

    pub fn gather_rows(&mut self, src: Var, idx: Vec<usize>) -> Result<Var, TensorError> {
        let sv = self.value(src);
        if let Some(&bad) = idx.iter().find(|&&i| i >= sv.rows()) {
            return Err(shape_err("gather", format!("row {bad} of {}", sv.rows())));
        }
        let out = sv.gather_rows(&idx);
        let needs = self.needs(src);
        Ok(self.push(out, Op::GatherRows { src, idx }, needs))
    }

    /// Row `r` of the output is the mean of the `src` rows listed in
    /// `segments[r]`; an empty segment yields a zero row.
    pub fn segment_mean(&mut self, src: Var, segments: Vec<Vec<usize>>) -> Result<Var, TensorError> {
        let sv = self.value(src);
        let cols = sv.cols();
        let mut out = Tensor::zeros(segments.len(), cols);
        for (r, seg) in segments.iter().enumerate() {
            if seg.is_empty() {
                continue;
            }
            let orow = out.row_mut(r);
            for &j in seg {
                if j >= sv.rows() {
                    return Err(shape_err("segment_mean", format!("row {j} of {}", sv.rows())));
                }
                for (o, v) in orow.iter_mut().zip(sv.row(j)) {
                    *o += v;
                }
            }
            let inv = 1.0 / seg.len() as f64;
            for o in orow.iter_mut() {
                *o *= inv;
            }
        }
        let needs = self.needs(src);
        Ok(self.push(out, Op::SegmentMean { src, segments }, needs))
    }

    /// Arithmetic mean over the rows of a `K × dim` tensor, giving `1 × dim`.
    pub fn mean_pool(&mut self, rows: Var) -> Result<Var, TensorError> {
        let rv = self.value(rows);
        if rv.rows() == 0 {
            return Err(TensorError::Empty("mean_pool over zero rows".into()));
        }
        let k = rv.rows() as f64;
        let mut acc = vec![0.0; rv.cols()];
        for r in 0..rv.rows() {
            for (a, v) in acc.iter_mut().zip(rv.row(r)) {
                *a += v;
            }
        }
        for a in &mut acc {
            *a /= k;
        }
        let needs = self.needs(rows);
        Ok(self.push(Tensor::row_vector(acc), Op::MeanPool(rows), needs))
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let xv = self.value(x);
        let data = xv.data().iter().map(|&v| f(v)).collect();
        let out = Tensor::new(xv.rows(), xv.cols(), data).expect("same shape");
        let needs = self.needs(x);
        self.push(out, op, needs)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        self.unary(x, |v| v * s, Op::Scale(x, s))
    }

    /// Inverted dropout: surviving entries are scaled by `1 / (1 - p)`.
    pub fn dropout<R: Rng>(&mut self, x: Var, p: f64, rng: &mut R) -> Result<Var, TensorError> {
        if !(0.0..1.0).contains(&p) {
            return Err(TensorError::Shape(format!("dropout rate {p} outside [0, 1)")));
        }
        let n = self.value(x).len();
        let mask: Vec<f64> = if p == 0.0 {
            vec![1.0; n]
        } else {
            let keep = 1.0 / (1.0 - p);
            (0..n)
                .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
                .collect()
        };
        let xv = self.value(x);
        let data = xv.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let out = Tensor::new(xv.rows(), xv.cols(), data)?;
        let needs = self.needs(x);
        Ok(self.push(out, Op::Dropout { x, mask }, needs))
    }

    /// Emits `forward` as the value while routing the upstream gradient to
    /// `x` multiplied by `scale` (the straight-through rule).
    pub fn straight_through(&mut self, x: Var, forward: Tensor, scale: f64) -> Result<Var, TensorError> {
        if self.value(x).shape() != forward.shape() {
            return Err(shape_err(
                "straight_through",
                format!("{:?} vs {:?}", self.value(x).shape(), forward.shape()),
            ));
        }
        let needs = self.needs(x);
        Ok(self.push(forward, Op::StraightThrough { x, scale }, needs))
    }

    /// `Σ x²` as a scalar.
    pub fn sum_squares(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().map(|v| v * v).sum();
        let needs = self.needs(x);
        self.push(Tensor::scalar(s), Op::SumSquares(x), needs)
    }

    /// Mean over rows `r` and group slots `k` of `‖x_r − anchors_{r·group+k}‖²`.
    /// The anchors are constants.
    pub fn group_sq_dist(&mut self, x: Var, anchors: Tensor, group: usize) -> Result<Var, TensorError> {
        let xv = self.value(x);
        if group == 0 || anchors.rows() != xv.rows() * group || anchors.cols() != xv.cols() {
            return Err(shape_err(
                "group_sq_dist",
                format!("x {:?}, anchors {:?}, group {group}", xv.shape(), anchors.shape()),
            ));
        }
        let count = anchors.rows();
        let mut total = 0.0;
        for r in 0..xv.rows() {
            let xr = xv.row(r);
            for k in 0..group {
                total += xr
                    .iter()
                    .zip(anchors.row(r * group + k))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>();
            }
        }
        let value = if count == 0 { 0.0 } else { total / count as f64 };
        let needs = self.needs(x);
        Ok(self.push(Tensor::scalar(value), Op::GroupSqDist { x, anchors, group }, needs))
    }

    /// Mean softmax cross-entropy of `logits` rows against class indices.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: Vec<usize>) -> Result<Var, TensorError> {
        let lv = self.value(logits);
        if labels.len() != lv.rows() || lv.rows() == 0 {
            return Err(shape_err(
                "cross_entropy",
                format!("{} labels for {} rows", labels.len(), lv.rows()),
            ));
        }
        let mut probs = Tensor::zeros(lv.rows(), lv.cols());
        let mut loss = 0.0;
        for (r, &y) in labels.iter().enumerate() {
            if y >= lv.cols() {
                return Err(shape_err("cross_entropy", format!("label {y} of {}", lv.cols())));
            }
            let p = softmax(lv.row(r));
            loss -= p[y].max(f64::MIN_POSITIVE).ln();
            probs.row_mut(r).copy_from_slice(&p);
        }
        loss /= labels.len() as f64;
        let needs = self.needs(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCrossEntropy {
                logits,
                labels,
                probs,
            },
            needs,
        ))
    }

    /// Mean over all entries of `(pred − target)²`.
    pub fn mse(&mut self, pred: Var, target: Tensor) -> Result<Var, TensorError> {
        let pv = self.value(pred);
        if pv.shape() != target.shape() || pv.is_empty() {
            return Err(shape_err("mse", format!("{:?} vs {:?}", pv.shape(), target.shape())));
        }
        let s: f64 = pv
            .data()
            .iter()
            .zip(target.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let value = s / pv.len() as f64;
        let needs = self.needs(pred);
        Ok(self.push(Tensor::scalar(value), Op::Mse { pred, target }, needs))
    }

    /// Inner products `x_u · x_v` for each pair, as an `N × 1` column.
    pub fn pair_dot(&mut self, x: Var, pairs: Vec<(usize, usize)>) -> Result<Var, TensorError> {
        let xv = self.value(x);
        let mut out = Vec::with_capacity(pairs.len());
        for &(u, v) in &pairs {
            if u >= xv.rows() || v >= xv.rows() {
                return Err(shape_err("pair_dot", format!("pair ({u}, {v}) of {}", xv.rows())));
            }
            out.push(dot(xv.row(u), xv.row(v)));
        }
        let t = Tensor::new(pairs.len(), 1, out)?;
        let needs = self.needs(x);
        Ok(self.push(t, Op::PairDot { x, pairs }, needs))
    }

    /// Weighted binary cross-entropy over an `N × 1` column of probabilities.
    ///
    /// `−(1/N) Σ [w·y·log ŷ + (1−y)·log(1−ŷ)]`; with `symmetric` the weight
    /// also multiplies the negative term. Probabilities are clamped to
    /// `[PROB_CLAMP, 1 − PROB_CLAMP]` and clamped entries pass no gradient.
    pub fn weighted_bce(
        &mut self,
        probs: Var,
        labels: Vec<f64>,
        weights: Vec<f64>,
        symmetric: bool,
    ) -> Result<Var, TensorError> {
        let pv = self.value(probs);
        if pv.len() != labels.len() || labels.len() != weights.len() || labels.is_empty() {
            return Err(shape_err(
                "weighted_bce",
                format!("{} scores, {} labels, {} weights", pv.len(), labels.len(), weights.len()),
            ));
        }
        let value = weighted_bce_value(pv.data(), &labels, &weights, symmetric);
        let needs = self.needs(probs);
        Ok(self.push(
            Tensor::scalar(value),
            Op::WeightedBce {
                probs,
                labels,
                weights,
                symmetric,
            },
            needs,
        ))
    }

    /// `Σ weights_i · parts_i` over scalar parts.
    pub fn weighted_sum(&mut self, parts: Vec<Var>, weights: Vec<f64>) -> Result<Var, TensorError> {
        if parts.len() != weights.len() {
            return Err(shape_err("weighted_sum", format!("{} parts, {} weights", parts.len(), weights.len())));
        }
        let mut s = 0.0;
        for (&p, &w) in parts.iter().zip(&weights) {
            let pv = self.value(p);
            if pv.len() != 1 {
                return Err(shape_err("weighted_sum", format!("part is {:?}", pv.shape())));
            }
            s += w * pv.item();
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(Tensor::scalar(s), Op::WeightedSum { parts, weights }, needs))
    }

    /// Reverse sweep from a scalar `loss`. Gradients from a previous sweep
    /// are discarded.
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(shape_err("backward", format!("loss is {:?}", lv.shape())));
        }
        if !lv.item().is_finite() {
            return Err(TensorError::NonFinite(format!("loss value {}", lv.item())));
        }
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        self.grads[loss.0] = Some(Tensor::scalar(1.0));
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(g) = self.grads[i].take() else { continue };
            self.propagate(i, &g);
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, g: Tensor) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut self.grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&mut self, i: usize, g: &Tensor) {
        // Borrow juggling: collect contributions first, then accumulate.
        let mut contrib: Vec<(Var, Tensor)> = Vec::new();
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::Affine { x, w, b } => {
                let (xv, wv) = (&self.nodes[x.0].value, &self.nodes[w.0].value);
                let (n, k, m) = (xv.rows(), xv.cols(), wv.cols());
                if self.nodes[x.0].needs_grad {
                    let mut gx = vec![0.0; n * k];
                    matmul_a_bt_acc(g.data(), n, m, wv.data(), k, &mut gx);
                    contrib.push((*x, Tensor::new(n, k, gx).expect("shape")));
                }
                if self.nodes[w.0].needs_grad {
                    let mut gw = vec![0.0; k * m];
                    matmul_at_b_acc(xv.data(), n, k, g.data(), m, &mut gw);
                    contrib.push((*w, Tensor::new(k, m, gw).expect("shape")));
                }
                if self.nodes[b.0].needs_grad {
                    let mut gb = vec![0.0; m];
                    for r in 0..n {
                        for (o, v) in gb.iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    contrib.push((*b, Tensor::row_vector(gb)));
                }
            }
            Op::Add(a, b) => {
                contrib.push((*a, g.clone()));
                contrib.push((*b, g.clone()));
            }
            Op::ConcatCols(a, b) => {
                let ac = self.nodes[a.0].value.cols();
                let bc = self.nodes[b.0].value.cols();
                let mut ga = Tensor::zeros(g.rows(), ac);
                let mut gb = Tensor::zeros(g.rows(), bc);
                for r in 0..g.rows() {
                    let row = g.row(r);
                    ga.row_mut(r).copy_from_slice(&row[..ac]);
                    gb.row_mut(r).copy_from_slice(&row[ac..]);
                }
                contrib.push((*a, ga));
                contrib.push((*b, gb));
            }
            Op::GatherRows { src, idx } => {
                let sv = &self.nodes[src.0].value;
                let mut gs = Tensor::zeros(sv.rows(), sv.cols());
                for (r, &j) in idx.iter().enumerate() {
                    for (o, v) in gs.row_mut(j).iter_mut().zip(g.row(r)) {
                        *o += v;
                    }
                }
                contrib.push((*src, gs));
            }
            Op::SegmentMean { src, segments } => {
                let sv = &self.nodes[src.0].value;
                let mut gs = Tensor::zeros(sv.rows(), sv.cols());
                for (r, seg) in segments.iter().enumerate() {
                    if seg.is_empty() {
                        continue;
                    }
                    let inv = 1.0 / seg.len() as f64;
                    for &j in seg {
                        for (o, v) in gs.row_mut(j).iter_mut().zip(g.row(r)) {
                            *o += v * inv;
                        }
                    }
                }
                contrib.push((*src, gs));
            }
            Op::MeanPool(x) => {
                let xv = &self.nodes[x.0].value;
                let inv = 1.0 / xv.rows() as f64;
                let mut gx = Tensor::zeros(xv.rows(), xv.cols());
                for r in 0..xv.rows() {
                    for (o, v) in gx.row_mut(r).iter_mut().zip(g.data()) {
                        *o = v * inv;
                    }
                }
                contrib.push((*x, gx));
            }
            Op::Relu(x) => {
                let xv = &self.nodes[x.0].value;
                let data = xv
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(&a, &gv)| if a > 0.0 { gv } else { 0.0 })
                    .collect();
                contrib.push((*x, Tensor::new(xv.rows(), xv.cols(), data).expect("shape")));
            }
            Op::Tanh(x) => {
                let data = node
                    .value
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(&y, &gv)| gv * (1.0 - y * y))
                    .collect();
                contrib.push((*x, Tensor::new(g.rows(), g.cols(), data).expect("shape")));
            }
            Op::Sigmoid(x) => {
                let data = node
                    .value
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(&y, &gv)| gv * y * (1.0 - y))
                    .collect();
                contrib.push((*x, Tensor::new(g.rows(), g.cols(), data).expect("shape")));
            }
            Op::Dropout { x, mask } => {
                let data = g.data().iter().zip(mask).map(|(gv, m)| gv * m).collect();
                contrib.push((*x, Tensor::new(g.rows(), g.cols(), data).expect("shape")));
            }
            Op::StraightThrough { x, scale } => {
                let data = g.data().iter().map(|gv| gv * scale).collect();
                contrib.push((*x, Tensor::new(g.rows(), g.cols(), data).expect("shape")));
            }
            Op::Scale(x, s) => {
                let data = g.data().iter().map(|gv| gv * s).collect();
                contrib.push((*x, Tensor::new(g.rows(), g.cols(), data).expect("shape")));
            }
            Op::SumSquares(x) => {
                let xv = &self.nodes[x.0].value;
                let gs = g.item();
                let data = xv.data().iter().map(|v| 2.0 * v * gs).collect();
                contrib.push((*x, Tensor::new(xv.rows(), xv.cols(), data).expect("shape")));
            }
            Op::GroupSqDist { x, anchors, group } => {
                let xv = &self.nodes[x.0].value;
                let count = anchors.rows();
                let mut gx = Tensor::zeros(xv.rows(), xv.cols());
                if count > 0 {
                    let c = 2.0 * g.item() / count as f64;
                    for r in 0..xv.rows() {
                        let xr = xv.row(r);
                        let grow = gx.row_mut(r);
                        for k in 0..*group {
                            for ((o, a), b) in grow.iter_mut().zip(xr).zip(anchors.row(r * group + k)) {
                                *o += c * (a - b);
                            }
                        }
                    }
                }
                contrib.push((*x, gx));
            }
            Op::SoftmaxCrossEntropy {
                logits,
                labels,
                probs,
            } => {
                let n = labels.len() as f64;
                let gs = g.item();
                let mut gl = probs.clone();
                for (r, &y) in labels.iter().enumerate() {
                    gl.row_mut(r)[y] -= 1.0;
                }
                for v in gl.data_mut() {
                    *v *= gs / n;
                }
                contrib.push((*logits, gl));
            }
            Op::Mse { pred, target } => {
                let pv = &self.nodes[pred.0].value;
                let c = 2.0 * g.item() / pv.len() as f64;
                let data = pv
                    .data()
                    .iter()
                    .zip(target.data())
                    .map(|(a, b)| c * (a - b))
                    .collect();
                contrib.push((*pred, Tensor::new(pv.rows(), pv.cols(), data).expect("shape")));
            }
            Op::PairDot { x, pairs } => {
                let xv = &self.nodes[x.0].value;
                let mut gx = Tensor::zeros(xv.rows(), xv.cols());
                for (i, &(u, v)) in pairs.iter().enumerate() {
                    let gi = g.data()[i];
                    for c in 0..xv.cols() {
                        let (xu, xvv) = (xv.row(u)[c], xv.row(v)[c]);
                        gx.row_mut(u)[c] += gi * xvv;
                        gx.row_mut(v)[c] += gi * xu;
                    }
                }
                contrib.push((*x, gx));
            }
            Op::WeightedBce {
                probs,
                labels,
                weights,
                symmetric,
            } => {
                let pv = &self.nodes[probs.0].value;
                let n = labels.len() as f64;
                let gs = g.item();
                let data = pv
                    .data()
                    .iter()
                    .zip(labels)
                    .zip(weights)
                    .map(|((&p, &y), &w)| {
                        if p <= PROB_CLAMP || p >= 1.0 - PROB_CLAMP {
                            return 0.0;
                        }
                        let wn = if *symmetric { w } else { 1.0 };
                        -gs / n * (w * y / p - wn * (1.0 - y) / (1.0 - p))
                    })
                    .collect();
                contrib.push((*probs, Tensor::new(pv.rows(), pv.cols(), data).expect("shape")));
            }
            Op::WeightedSum { parts, weights } => {
                for (&p, &w) in parts.iter().zip(weights) {
                    contrib.push((p, Tensor::scalar(w * g.item())));
                }
            }
        }
        for (v, t) in contrib {
            self.accumulate(v, t);
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

pub(crate) fn weighted_bce_value(probs: &[f64], labels: &[f64], weights: &[f64], symmetric: bool) -> f64 {
    let n = labels.len() as f64;
    let mut s = 0.0;
    for ((&p, &y), &w) in probs.iter().zip(labels).zip(weights) {
        let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        let wn = if symmetric { w } else { 1.0 };
        s += w * y * p.ln() + wn * (1.0 - y) * (1.0 - p).ln();
    }
    -s / n
}
