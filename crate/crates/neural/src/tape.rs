//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! Every operation appends a node holding its forward value and enough
//! cached state to run its adjoint. [`Tape::backward`] walks the nodes in
//! reverse insertion order, which is a valid reverse topological order
//! because a node can only reference nodes recorded before it.
//!
//! Parameters do not have to be leaves: when a parameter is itself the
//! output of recorded operations (for example a one-step SGD lookahead
//! `w - lr * g(theta)`), gradients flow through it back to whatever it was
//! computed from. That is the only "higher-order" capability needed here.

use crate::error::{shape_err, NeuralError, Result};
use crate::tensor::Tensor;

/// Probability clamp used before taking logarithms in [`Tape::bce`].
pub const PROB_EPS: f64 = 1e-12;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
struct GruCache {
    z: Vec<f64>,
    r: Vec<f64>,
    c: Vec<f64>,
    rh: Vec<f64>,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    ScaleBy(Var, Var),
    Sum(Var),
    Mean(Var),
    Row(Var, usize),
    Linear {
        x: Var,
        w: Var,
        b: Var,
    },
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Softmax(Var),
    Mse {
        pred: Var,
        target: Tensor,
    },
    Bce {
        pred: Var,
        target: Tensor,
    },
    GruStep {
        x: Var,
        h: Var,
        w: Var,
        u: Var,
        b: Var,
        cache: GruCache,
    },
    Conv1d {
        x: Var,
        w: Var,
        b: Var,
        width: usize,
    },
    MaxOverTime {
        x: Var,
        argmax: Vec<usize>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient for `v`, or zeros of the right shape when `v` does not
    /// influence the loss.
    pub fn wrt(&self, v: Var) -> Tensor {
        match self.get(v) {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[v.0]),
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `out[j] += sum_i x[i] * w[i * cols + j]`
fn vec_mat_acc(x: &[f64], w: &[f64], cols: usize, col0: usize, ncols: usize, out: &mut [f64]) {
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        let row = &w[i * cols + col0..i * cols + col0 + ncols];
        for (o, &wij) in out.iter_mut().zip(row) {
            *o += xi * wij;
        }
    }
}

/// `out[i] += sum_j dy[j] * w[i * cols + col0 + j]`
fn mat_vec_t_acc(dy: &[f64], w: &[f64], cols: usize, col0: usize, out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        let row = &w[i * cols + col0..i * cols + col0 + dy.len()];
        let mut s = 0.0;
        for (&d, &wij) in dy.iter().zip(row) {
            s += d * wij;
        }
        *o += s;
    }
}

/// `dw[i * cols + col0 + j] += x[i] * dy[j]`
fn outer_acc(x: &[f64], dy: &[f64], cols: usize, col0: usize, dw: &mut [f64]) {
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        let row = &mut dw[i * cols + col0..i * cols + col0 + dy.len()];
        for (g, &d) in row.iter_mut().zip(dy) {
            *g += xi * d;
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

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Differentiable leaf.
    pub fn var(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn check_same(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return shape_err(op, format!("{sa:?} vs {sb:?}"));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same("add", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same("sub", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same("mul", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let v = self.value(a).map(|x| x * factor);
        let rg = self.rg(a);
        self.push(v, Op::Scale(a, factor), rg)
    }

    /// Tensor `a` times the one-element tensor `s`.
    pub fn scale_by(&mut self, a: Var, s: Var) -> Result<Var> {
        if self.value(s).len() != 1 {
            return shape_err("scale_by", format!("scalar operand has shape {:?}", self.shape(s)));
        }
        let f = self.value(s).item();
        let v = self.value(a).map(|x| x * f);
        let rg = self.rg(a) || self.rg(s);
        Ok(self.push(v, Op::ScaleBy(a, s), rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).sum());
        let rg = self.rg(a);
        self.push(v, Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let v = Tensor::scalar(t.sum() / t.len() as f64);
        let rg = self.rg(a);
        self.push(v, Op::Mean(a), rg)
    }

    /// Sum of several same-shaped nodes.
    pub fn add_n(&mut self, xs: &[Var]) -> Result<Var> {
        let (&first, rest) = xs.split_first().ok_or_else(|| NeuralError::Shape {
            op: "add_n",
            detail: "no operands".into(),
        })?;
        let mut acc = first;
        for &x in rest {
            acc = self.add(acc, x)?;
        }
        Ok(acc)
    }

    /// Row `i` of a `[rows, cols]` matrix as a `[cols]` vector.
    pub fn row(&mut self, x: Var, i: usize) -> Result<Var> {
        let t = self.value(x);
        if t.shape().len() != 2 || i >= t.rows() {
            return shape_err("row", format!("row {i} of shape {:?}", t.shape()));
        }
        let v = Tensor::vector(t.row(i).to_vec());
        let rg = self.rg(x);
        Ok(self.push(v, Op::Row(x, i), rg))
    }

    /// `x · w + b` for a vector `x: [in]`, `w: [in, out]`, `b: [out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xt, wt, bt) = (self.value(x), self.value(w), self.value(b));
        if xt.shape().len() != 1 || wt.shape().len() != 2 || wt.rows() != xt.len() || bt.shape() != [wt.cols()] {
            return shape_err(
                "linear",
                format!("x {:?}, w {:?}, b {:?}", xt.shape(), wt.shape(), bt.shape()),
            );
        }
        let cols = wt.cols();
        let mut out = bt.data().to_vec();
        vec_mat_acc(xt.data(), wt.data(), cols, 0, cols, &mut out);
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        Ok(self.push(Tensor::vector(out), Op::Linear { x, w, b }, rg))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        let rg = self.rg(a);
        self.push(v, Op::Sigmoid(a), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        let rg = self.rg(a);
        self.push(v, Op::Tanh(a), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        let rg = self.rg(a);
        self.push(v, Op::Relu(a), rg)
    }

    /// Softmax over a vector.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.shape().len() != 1 || t.is_empty() {
            return shape_err("softmax", format!("expected a vector, got {:?}", t.shape()));
        }
        let m = t.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = t.data().iter().map(|&x| (x - m).exp()).collect();
        let s: f64 = e.iter().sum();
        let v = Tensor::vector(e.into_iter().map(|x| x / s).collect());
        let rg = self.rg(a);
        Ok(self.push(v, Op::Softmax(a), rg))
    }

    /// Mean of squared differences.
    pub fn mse(&mut self, pred: Var, target: &Tensor) -> Result<Var> {
        let p = self.value(pred);
        if p.shape() != target.shape() {
            return shape_err("mse", format!("{:?} vs {:?}", p.shape(), target.shape()));
        }
        let n = p.len() as f64;
        let s: f64 = p.data().iter().zip(target.data()).map(|(a, b)| (a - b) * (a - b)).sum();
        let rg = self.rg(pred);
        Ok(self.push(
            Tensor::scalar(s / n),
            Op::Mse {
                pred,
                target: target.clone(),
            },
            rg,
        ))
    }

    /// `-[t·ln p + (1-t)·ln(1-p)]` summed over the entries, with `p`
    /// clamped to `[PROB_EPS, 1 - PROB_EPS]`.
    pub fn bce(&mut self, pred: Var, target: &Tensor) -> Result<Var> {
        let p = self.value(pred);
        if p.shape() != target.shape() {
            return shape_err("bce", format!("{:?} vs {:?}", p.shape(), target.shape()));
        }
        let mut s = 0.0;
        for (&pi, &ti) in p.data().iter().zip(target.data()) {
            let q = pi.clamp(PROB_EPS, 1.0 - PROB_EPS);
            s -= ti * q.ln() + (1.0 - ti) * (1.0 - q).ln();
        }
        let rg = self.rg(pred);
        Ok(self.push(
            Tensor::scalar(s),
            Op::Bce {
                pred,
                target: target.clone(),
            },
            rg,
        ))
    }

    /// One GRU transition.
    ///
    /// Shapes: `x: [in]`, `h: [k]`, `w: [in, 3k]`, `u: [k, 3k]`, `b: [3k]`,
    /// gate blocks ordered (update, reset, candidate):
    ///
    /// ```text
    /// z  = σ(x W_z + h U_z + b_z)
    /// r  = σ(x W_r + h U_r + b_r)
    /// h~ = tanh(x W_h + (r ⊙ h) U_h + b_h)
    /// h' = (1 - z) ⊙ h + z ⊙ h~
    /// ```
    pub fn gru_step(&mut self, x: Var, h: Var, w: Var, u: Var, b: Var) -> Result<Var> {
        let (xt, ht, wt, ut, bt) = (
            self.value(x),
            self.value(h),
            self.value(w),
            self.value(u),
            self.value(b),
        );
        let k = ht.len();
        let g = 3 * k;
        if xt.shape().len() != 1
            || ht.shape().len() != 1
            || wt.shape() != [xt.len(), g]
            || ut.shape() != [k, g]
            || bt.shape() != [g]
        {
            return shape_err(
                "gru_step",
                format!(
                    "x {:?}, h {:?}, w {:?}, u {:?}, b {:?}",
                    xt.shape(),
                    ht.shape(),
                    wt.shape(),
                    ut.shape(),
                    bt.shape()
                ),
            );
        }
        let hd = ht.data();
        let mut pre = bt.data().to_vec();
        vec_mat_acc(xt.data(), wt.data(), g, 0, g, &mut pre);
        vec_mat_acc(hd, ut.data(), g, 0, 2 * k, &mut pre[..2 * k]);
        let z: Vec<f64> = pre[..k].iter().map(|&v| sigmoid(v)).collect();
        let r: Vec<f64> = pre[k..2 * k].iter().map(|&v| sigmoid(v)).collect();
        let rh: Vec<f64> = r.iter().zip(hd).map(|(a, b)| a * b).collect();
        vec_mat_acc(&rh, ut.data(), g, 2 * k, k, &mut pre[2 * k..]);
        let c: Vec<f64> = pre[2 * k..].iter().map(|v| v.tanh()).collect();
        let out: Vec<f64> = (0..k).map(|j| (1.0 - z[j]) * hd[j] + z[j] * c[j]).collect();
        let rg = self.rg(x) || self.rg(h) || self.rg(w) || self.rg(u) || self.rg(b);
        Ok(self.push(
            Tensor::vector(out),
            Op::GruStep {
                x,
                h,
                w,
                u,
                b,
                cache: GruCache { z, r, c, rh },
            },
            rg,
        ))
    }

    /// 1-D convolution over the time axis with zero "same" padding.
    ///
    /// `x: [L, c_in]`, `w: [width * c_in, c_out]` (tap-major), `b: [c_out]`;
    /// output `[L, c_out]`. Tap `j` reads input row `t + j - (width - 1) / 2`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, width: usize) -> Result<Var> {
        let (xt, wt, bt) = (self.value(x), self.value(w), self.value(b));
        if xt.shape().len() != 2 || xt.rows() == 0 || width == 0 {
            return shape_err("conv1d", format!("input {:?}, width {width}", xt.shape()));
        }
        let (len, cin) = (xt.rows(), xt.cols());
        if wt.shape() != [width * cin, bt.len()] || bt.shape().len() != 1 {
            return shape_err("conv1d", format!("w {:?}, b {:?}, c_in {cin}", wt.shape(), bt.shape()));
        }
        let cout = bt.len();
        let pad = (width - 1) / 2;
        let mut out = vec![0.0; len * cout];
        for t in 0..len {
            let o = &mut out[t * cout..(t + 1) * cout];
            o.copy_from_slice(bt.data());
            for j in 0..width {
                let src = t + j;
                if src < pad || src - pad >= len {
                    continue;
                }
                let xrow = xt.row(src - pad);
                let wblock = &wt.data()[j * cin * cout..(j + 1) * cin * cout];
                vec_mat_acc(xrow, wblock, cout, 0, cout, o);
            }
        }
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        Ok(self.push(Tensor::matrix(len, cout, out)?, Op::Conv1d { x, w, b, width }, rg))
    }

    /// Column-wise max of a `[L, c]` matrix.
    pub fn max_over_time(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        if t.shape().len() != 2 || t.rows() == 0 {
            return shape_err("max_over_time", format!("{:?}", t.shape()));
        }
        let c = t.cols();
        let mut argmax = vec![0usize; c];
        let mut best: Vec<f64> = t.row(0).to_vec();
        for i in 1..t.rows() {
            for (j, &v) in t.row(i).iter().enumerate() {
                if v > best[j] {
                    best[j] = v;
                    argmax[j] = i;
                }
            }
        }
        let rg = self.rg(x);
        Ok(self.push(Tensor::vector(best), Op::MaxOverTime { x, argmax }, rg))
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(NeuralError::NonScalarLoss(lv.shape().to_vec()));
        }
        let n = loss.0 + 1;
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(lv.shape(), 1.0));

        for i in (0..n).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(gout) = grads[i].take() else { continue };
            self.propagate(node, &gout, &mut grads);
            grads[i] = Some(gout);
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }

    fn propagate(&self, node: &Node, gout: &Tensor, grads: &mut [Option<Tensor>]) {
        let nodes = &self.nodes;
        let rg = |v: Var| nodes[v.0].requires_grad;
        let val = |v: Var| &nodes[v.0].value;
        let mut acc = |v: Var, g: Tensor| {
            if !nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(e) => e.add_assign(&g),
                slot => *slot = Some(g),
            }
        };

        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(*a, gout.clone());
                acc(*b, gout.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, gout.clone());
                acc(*b, gout.map(|g| -g));
            }
            Op::Mul(a, b) => {
                if rg(*a) {
                    acc(*a, gout.zip_map(val(*b), |g, y| g * y));
                }
                if rg(*b) {
                    acc(*b, gout.zip_map(val(*a), |g, x| g * x));
                }
            }
            Op::Scale(a, f) => acc(*a, gout.map(|g| g * f)),
            Op::ScaleBy(a, s) => {
                let f = val(*s).item();
                if rg(*a) {
                    acc(*a, gout.map(|g| g * f));
                }
                if rg(*s) {
                    let d = gout.dot(val(*a));
                    acc(*s, Tensor::full(val(*s).shape(), d));
                }
            }
            Op::Sum(a) => {
                let g = gout.item();
                acc(*a, Tensor::full(val(*a).shape(), g));
            }
            Op::Mean(a) => {
                let t = val(*a);
                let g = gout.item() / t.len() as f64;
                acc(*a, Tensor::full(t.shape(), g));
            }
            Op::Row(x, i) => {
                let t = val(*x);
                let mut g = Tensor::zeros(t.shape());
                let c = t.cols();
                g.data_mut()[i * c..(i + 1) * c].copy_from_slice(gout.data());
                acc(*x, g);
            }
            Op::Linear { x, w, b } => {
                let (xt, wt) = (val(*x), val(*w));
                let cols = wt.cols();
                if rg(*x) {
                    let mut dx = vec![0.0; xt.len()];
                    mat_vec_t_acc(gout.data(), wt.data(), cols, 0, &mut dx);
                    acc(*x, Tensor::vector(dx));
                }
                if rg(*w) {
                    let mut dw = Tensor::zeros(wt.shape());
                    outer_acc(xt.data(), gout.data(), cols, 0, dw.data_mut());
                    acc(*w, dw);
                }
                acc(*b, gout.clone());
            }
            Op::Sigmoid(a) => {
                acc(*a, gout.zip_map(&node.value, |g, y| g * y * (1.0 - y)));
            }
            Op::Tanh(a) => {
                acc(*a, gout.zip_map(&node.value, |g, y| g * (1.0 - y * y)));
            }
            Op::Relu(a) => {
                acc(*a, gout.zip_map(val(*a), |g, x| if x > 0.0 { g } else { 0.0 }));
            }
            Op::Softmax(a) => {
                let y = &node.value;
                let s = gout.dot(y);
                acc(*a, gout.zip_map(y, |g, yi| yi * (g - s)));
            }
            Op::Mse { pred, target } => {
                let p = val(*pred);
                let f = 2.0 * gout.item() / p.len() as f64;
                acc(*pred, p.zip_map(target, |a, b| f * (a - b)));
            }
            Op::Bce { pred, target } => {
                let g = gout.item();
                let d = val(*pred).zip_map(target, |p, t| {
                    if p <= PROB_EPS || p >= 1.0 - PROB_EPS {
                        0.0
                    } else {
                        g * (-t / p + (1.0 - t) / (1.0 - p))
                    }
                });
                acc(*pred, d);
            }
            Op::GruStep { x, h, w, u, b, cache } => {
                let (xt, ht, wt, ut) = (val(*x), val(*h), val(*w), val(*u));
                let k = ht.len();
                let g3 = 3 * k;
                let hd = ht.data();
                let dh_next = gout.data();
                let GruCache { z, r, c, rh } = cache;

                let mut dgate = vec![0.0; g3];
                let mut dh = vec![0.0; k];
                for j in 0..k {
                    dgate[j] = dh_next[j] * (c[j] - hd[j]) * z[j] * (1.0 - z[j]);
                    dgate[2 * k + j] = dh_next[j] * z[j] * (1.0 - c[j] * c[j]);
                    dh[j] = dh_next[j] * (1.0 - z[j]);
                }
                let mut drh = vec![0.0; k];
                mat_vec_t_acc(&dgate[2 * k..], ut.data(), g3, 2 * k, &mut drh);
                for i in 0..k {
                    dgate[k + i] = drh[i] * hd[i] * r[i] * (1.0 - r[i]);
                    dh[i] += drh[i] * r[i];
                }
                if rg(*h) {
                    mat_vec_t_acc(&dgate[..2 * k], ut.data(), g3, 0, &mut dh);
                    acc(*h, Tensor::vector(dh));
                }
                if rg(*u) {
                    let mut du = Tensor::zeros(ut.shape());
                    outer_acc(hd, &dgate[..2 * k], g3, 0, du.data_mut());
                    outer_acc(rh, &dgate[2 * k..], g3, 2 * k, du.data_mut());
                    acc(*u, du);
                }
                if rg(*w) {
                    let mut dw = Tensor::zeros(wt.shape());
                    outer_acc(xt.data(), &dgate, g3, 0, dw.data_mut());
                    acc(*w, dw);
                }
                if rg(*x) {
                    let mut dx = vec![0.0; xt.len()];
                    mat_vec_t_acc(&dgate, wt.data(), g3, 0, &mut dx);
                    acc(*x, Tensor::vector(dx));
                }
                acc(*b, Tensor::vector(dgate));
            }
            Op::Conv1d { x, w, b, width } => {
                let (xt, wt) = (val(*x), val(*w));
                let (len, cin) = (xt.rows(), xt.cols());
                let cout = gout.cols();
                let pad = (width - 1) / 2;
                let mut dx = Tensor::zeros(xt.shape());
                let mut dw = Tensor::zeros(wt.shape());
                let mut db = vec![0.0; cout];
                for t in 0..len {
                    let gy = gout.row(t);
                    for (d, &g) in db.iter_mut().zip(gy) {
                        *d += g;
                    }
                    for j in 0..*width {
                        let src = t + j;
                        if src < pad || src - pad >= len {
                            continue;
                        }
                        let s = src - pad;
                        let block = j * cin * cout..(j + 1) * cin * cout;
                        if rg(*w) {
                            outer_acc(xt.row(s), gy, cout, 0, &mut dw.data_mut()[block.clone()]);
                        }
                        if rg(*x) {
                            mat_vec_t_acc(
                                gy,
                                &wt.data()[block],
                                cout,
                                0,
                                &mut dx.data_mut()[s * cin..(s + 1) * cin],
                            );
                        }
                    }
                }
                if rg(*x) {
                    acc(*x, dx);
                }
                if rg(*w) {
                    acc(*w, dw);
                }
                acc(*b, Tensor::vector(db));
            }
            Op::MaxOverTime { x, argmax } => {
                let t = val(*x);
                let c = t.cols();
                let mut g = Tensor::zeros(t.shape());
                for (j, &i) in argmax.iter().enumerate() {
                    g.data_mut()[i * c + j] = gout.data()[j];
                }
                acc(*x, g);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_gradient() {
        let mut t = Tape::new();
        let w = t.var(Tensor::scalar(3.0));
        let y = t.mul(w, w).unwrap();
        let g = t.backward(y).unwrap();
        assert_eq!(g.wrt(w).item(), 6.0);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut t = Tape::new();
        let w = t.var(Tensor::vector(vec![1.0, 2.0]));
        let y = t.scale(w, 2.0);
        assert!(matches!(t.backward(y), Err(NeuralError::NonScalarLoss(_))));
    }

    #[test]
    fn disconnected_var_has_zero_gradient() {
        let mut t = Tape::new();
        let a = t.var(Tensor::vector(vec![1.0, 2.0]));
        let unused = t.var(Tensor::vector(vec![5.0, 6.0, 7.0]));
        let y = t.sum(a);
        let g = t.backward(y).unwrap();
        assert!(g.get(unused).is_none());
        assert_eq!(g.wrt(unused), Tensor::zeros(&[3]));
    }

    #[test]
    fn softmax_sums_to_one() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::vector(vec![700.0, -3.0, 0.5]));
        let s = t.softmax(a).unwrap();
        let v = t.value(s);
        assert!((v.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bce_at_half_is_two_ln_two() {
        let mut t = Tape::new();
        let p = t.constant(Tensor::vector(vec![0.5, 0.5]));
        let l = t.bce(p, &Tensor::vector(vec![1.0, 0.0])).unwrap();
        assert!((t.value(l).item() - 2.0 * 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn mse_one_hot_difference() {
        let mut t = Tape::new();
        let p = t.constant(Tensor::vector(vec![1.0, 0.0, 0.0, 0.0, 0.0]));
        let l = t.mse(p, &Tensor::zeros(&[5])).unwrap();
        assert!((t.value(l).item() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn conv_pads_short_sequences() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::matrix(2, 1, vec![1.0, 2.0]).unwrap());
        let w = t.constant(Tensor::matrix(3, 1, vec![1.0, 10.0, 100.0]).unwrap());
        let b = t.constant(Tensor::vector(vec![0.0]));
        let y = t.conv1d(x, w, b, 3).unwrap();
        // t=0: pad*1 + 1*10 + 2*100; t=1: 1*1 + 2*10 + pad*100
        assert_eq!(t.value(y).data(), &[210.0, 21.0]);
    }
}
