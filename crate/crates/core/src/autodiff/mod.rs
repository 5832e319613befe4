//! Minimal reverse-mode automatic differentiation over f64 matrices.
//!
//! A [`Graph`] is a tape: every operation appends a node holding its value
//! and a closure that routes the output gradient to the operation's inputs.
//! Node ids are topologically ordered by construction, so backpropagation
//! is a single reverse sweep. Everything is f64 and single-threaded, which
//! keeps training bitwise-reproducible for a fixed seed.

pub mod conv;

use std::rc::Rc;

use ndarray::{s, Array2, Axis};

pub use conv::ConvGeom;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TensorId(usize);

type BackwardFn = Box<dyn Fn(&Array2<f64>, &mut Gradients)>;

struct Node {
    value: Rc<Array2<f64>>,
    needs_grad: bool,
    backward: Option<BackwardFn>,
}

/// Per-node gradients produced by [`Graph::backward`].
pub struct Gradients {
    by_id: Vec<Option<Array2<f64>>>,
    needs_grad: Vec<bool>,
}

impl Gradients {
    pub fn get(&self, id: TensorId) -> Option<&Array2<f64>> {
        self.by_id[id.0].as_ref()
    }

    /// Gradient for a node that is known to participate in the loss.
    pub fn expect(&self, id: TensorId) -> &Array2<f64> {
        self.by_id[id.0]
            .as_ref()
            .expect("no gradient reached this node")
    }

    fn accumulate(&mut self, id: TensorId, g: Array2<f64>) {
        if !self.needs_grad[id.0] {
            return;
        }
        match &mut self.by_id[id.0] {
            Some(acc) => *acc += &g,
            slot @ None => *slot = Some(g),
        }
    }
}

/// Computation tape.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    poisoned: Option<String>,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    /// Number of nodes currently on the tape.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A differentiable leaf (parameter or input under attack).
    pub fn leaf(&mut self, value: Array2<f64>) -> TensorId {
        self.push_node(value, true, None)
    }

    /// A non-differentiable leaf (data, precomputed transform matrices).
    pub fn constant(&mut self, value: Array2<f64>) -> TensorId {
        self.push_node(value, false, None)
    }

    pub fn scalar(&mut self, value: f64) -> TensorId {
        self.constant(Array2::from_elem((1, 1), value))
    }

    pub fn value(&self, id: TensorId) -> &Array2<f64> {
        &self.nodes[id.0].value
    }

    /// Value of a (1, 1) node.
    pub fn scalar_value(&self, id: TensorId) -> f64 {
        let v = self.value(id);
        assert_eq!(v.dim(), (1, 1), "node is not a scalar");
        v[[0, 0]]
    }

    fn rc(&self, id: TensorId) -> Rc<Array2<f64>> {
        Rc::clone(&self.nodes[id.0].value)
    }

    fn needs(&self, id: TensorId) -> bool {
        self.nodes[id.0].needs_grad
    }

    /// First node that produced a non-finite value, if any. Training loops
    /// check this after the forward pass to abort cleanly on divergence.
    pub fn poisoned(&self) -> Option<&str> {
        self.poisoned.as_deref()
    }

    fn push_node(
        &mut self,
        value: Array2<f64>,
        needs_grad: bool,
        backward: Option<BackwardFn>,
    ) -> TensorId {
        if self.poisoned.is_none() && !value.iter().all(|v| v.is_finite()) {
            self.poisoned = Some(format!(
                "node {} produced a non-finite value",
                self.nodes.len()
            ));
        }
        self.nodes.push(Node {
            value: Rc::new(value),
            needs_grad,
            backward,
        });
        TensorId(self.nodes.len() - 1)
    }

    fn push_op(&mut self, parents: &[TensorId], value: Array2<f64>, backward: BackwardFn) -> TensorId {
        let needs = parents.iter().any(|&p| self.needs(p));
        self.push_node(value, needs, if needs { Some(backward) } else { None })
    }

    /// Reverse sweep from a scalar loss node. Returns per-node gradients.
    pub fn backward(&self, loss: TensorId) -> Gradients {
        assert_eq!(self.value(loss).dim(), (1, 1), "loss must be scalar");
        let mut grads = Gradients {
            by_id: vec![None; self.nodes.len()],
            needs_grad: self.nodes.iter().map(|n| n.needs_grad).collect(),
        };
        grads.needs_grad[loss.0] = true;
        grads.by_id[loss.0] = Some(Array2::ones((1, 1)));
        for id in (0..=loss.0).rev() {
            if grads.by_id[id].is_none() {
                continue;
            }
            if let Some(f) = &self.nodes[id].backward {
                let g = grads.by_id[id].take().expect("grad present");
                f(&g, &mut grads);
                grads.by_id[id] = Some(g);
            }
        }
        grads
    }

    // ---- elementwise binary ----

    pub fn add(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let (va, vb) = (self.rc(a), self.rc(b));
        assert_eq!(va.dim(), vb.dim());
        let out = &*va + &*vb;
        self.push_op(
            &[a, b],
            out,
            Box::new(move |dy, g| {
                g.accumulate(a, dy.clone());
                g.accumulate(b, dy.clone());
            }),
        )
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let (va, vb) = (self.rc(a), self.rc(b));
        assert_eq!(va.dim(), vb.dim());
        let out = &*va - &*vb;
        self.push_op(
            &[a, b],
            out,
            Box::new(move |dy, g| {
                g.accumulate(a, dy.clone());
                g.accumulate(b, -dy);
            }),
        )
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let (va, vb) = (self.rc(a), self.rc(b));
        assert_eq!(va.dim(), vb.dim());
        let out = &*va * &*vb;
        self.push_op(
            &[a, b],
            out,
            Box::new(move |dy, g| {
                g.accumulate(a, dy * &*vb);
                g.accumulate(b, dy * &*va);
            }),
        )
    }

    pub fn div(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let (va, vb) = (self.rc(a), self.rc(b));
        assert_eq!(va.dim(), vb.dim());
        let out = &*va / &*vb;
        self.push_op(
            &[a, b],
            out,
            Box::new(move |dy, g| {
                g.accumulate(a, dy / &*vb);
                g.accumulate(b, -(dy * &*va) / (&*vb * &*vb));
            }),
        )
    }

    // ---- scalar broadcast ----

    pub fn add_scalar(&mut self, a: TensorId, c: f64) -> TensorId {
        let va = self.rc(a);
        let out = &*va + c;
        self.push_op(&[a], out, Box::new(move |dy, g| g.accumulate(a, dy.clone())))
    }

    pub fn mul_scalar(&mut self, a: TensorId, c: f64) -> TensorId {
        let va = self.rc(a);
        let out = &*va * c;
        self.push_op(&[a], out, Box::new(move |dy, g| g.accumulate(a, dy * c)))
    }

    pub fn neg(&mut self, a: TensorId) -> TensorId {
        self.mul_scalar(a, -1.0)
    }

    // ---- elementwise unary ----

    pub fn abs(&mut self, a: TensorId) -> TensorId {
        let va = self.rc(a);
        let out = va.mapv(f64::abs);
        self.push_op(
            &[a],
            out,
            Box::new(move |dy, g| {
                g.accumulate(a, dy * &va.mapv(|v| if v > 0.0 { 1.0 } else if v < 0.0 { -1.0 } else { 0.0 }));
            }),
        )
    }

    pub fn square(&mut self, a: TensorId) -> TensorId {
        let va = self.rc(a);
        let out = va.mapv(|v| v * v);
        self.push_op(
            &[a],
            out,
            Box::new(move |dy, g| g.accumulate(a, dy * &(&*va * 2.0))),
        )
    }

    /// Square root; inputs must be strictly positive for a finite gradient.
    pub fn sqrt(&mut self, a: TensorId) -> TensorId {
        let va = self.rc(a);
        let out = va.mapv(f64::sqrt);
        let out_rc = Rc::new(out.clone());
        self.push_op(
            &[a],
            out,
            Box::new(move |dy, g| g.accumulate(a, dy * &out_rc.mapv(|v| 0.5 / v))),
        )
    }

    /// Natural log; inputs must be strictly positive.
    pub fn ln(&mut self, a: TensorId) -> TensorId {
        let va = self.rc(a);
        let out = va.mapv(f64::ln);
        self.push_op(&[a], out, Box::new(move |dy, g| g.accumulate(a, dy / &*va)))
    }

    pub fn exp(&mut self, a: TensorId) -> TensorId {
        let va = self.rc(a);
        let out = va.mapv(f64::exp);
        let out_rc = Rc::new(out.clone());
        self.push_op(
            &[a],
            out,
            Box::new(move |dy, g| g.accumulate(a, dy * &*out_rc)),
        )
    }

    pub fn tanh(&mut self, a: TensorId) -> TensorId {
        let va = self.rc(a);
        let out = va.mapv(f64::tanh);
        let out_rc = Rc::new(out.clone());
        self.push_op(
            &[a],
            out,
            Box::new(move |dy, g| g.accumulate(a, dy * &out_rc.mapv(|y| 1.0 - y * y))),
        )
    }

    pub fn sigmoid(&mut self, a: TensorId) -> TensorId {
        let va = self.rc(a);
        let out = va.mapv(|v| 1.0 / (1.0 + (-v).exp()));
        let out_rc = Rc::new(out.clone());
        self.push_op(
            &[a],
            out,
            Box::new(move |dy, g| g.accumulate(a, dy * &out_rc.mapv(|y| y * (1.0 - y)))),
        )
    }

    /// Leaky ReLU; `alpha = 0` is plain ReLU. Slope at exactly 0 is `alpha`.
    pub fn leaky_relu(&mut self, a: TensorId, alpha: f64) -> TensorId {
        let va = self.rc(a);
        let out = va.mapv(|v| if v > 0.0 { v } else { alpha * v });
        self.push_op(
            &[a],
            out,
            Box::new(move |dy, g| {
                g.accumulate(a, dy * &va.mapv(|v| if v > 0.0 { 1.0 } else { alpha }));
            }),
        )
    }

    // ---- reductions ----

    pub fn sum_all(&mut self, a: TensorId) -> TensorId {
        let va = self.rc(a);
        let dim = va.dim();
        let out = Array2::from_elem((1, 1), va.sum());
        self.push_op(
            &[a],
            out,
            Box::new(move |dy, g| g.accumulate(a, Array2::from_elem(dim, dy[[0, 0]]))),
        )
    }

    pub fn mean_all(&mut self, a: TensorId) -> TensorId {
        let n = self.value(a).len();
        assert!(n > 0, "mean of empty tensor");
        let s = self.sum_all(a);
        self.mul_scalar(s, 1.0 / n as f64)
    }

    /// Maximum over all elements. Ties route the gradient to the first
    /// maximal element in row-major order.
    pub fn max_all(&mut self, a: TensorId) -> TensorId {
        let va = self.rc(a);
        let dim = va.dim();
        let (mut best_idx, mut best) = ((0usize, 0usize), f64::NEG_INFINITY);
        for ((r, c), &v) in va.indexed_iter() {
            if v > best {
                best = v;
                best_idx = (r, c);
            }
        }
        let out = Array2::from_elem((1, 1), best);
        self.push_op(
            &[a],
            out,
            Box::new(move |dy, g| {
                let mut dx = Array2::zeros(dim);
                dx[[best_idx.0, best_idx.1]] = dy[[0, 0]];
                g.accumulate(a, dx);
            }),
        )
    }

    /// Minimum over all elements; same tie convention as [`Graph::max_all`].
    pub fn min_all(&mut self, a: TensorId) -> TensorId {
        let va = self.rc(a);
        let dim = va.dim();
        let (mut best_idx, mut best) = ((0usize, 0usize), f64::INFINITY);
        for ((r, c), &v) in va.indexed_iter() {
            if v < best {
                best = v;
                best_idx = (r, c);
            }
        }
        let out = Array2::from_elem((1, 1), best);
        self.push_op(
            &[a],
            out,
            Box::new(move |dy, g| {
                let mut dx = Array2::zeros(dim);
                dx[[best_idx.0, best_idx.1]] = dy[[0, 0]];
                g.accumulate(a, dx);
            }),
        )
    }

    /// Row sums: (R, C) -> (R, 1).
    pub fn sum_axis1(&mut self, a: TensorId) -> TensorId {
        let va = self.rc(a);
        let (r, c) = va.dim();
        let out = va.sum_axis(Axis(1)).insert_axis(Axis(1)).to_owned();
        self.push_op(
            &[a],
            out,
            Box::new(move |dy, g| {
                let mut dx = Array2::zeros((r, c));
                for i in 0..r {
                    let d = dy[[i, 0]];
                    dx.row_mut(i).fill(d);
                }
                g.accumulate(a, dx);
            }),
        )
    }

    /// Row means: (R, C) -> (R, 1).
    pub fn mean_axis1(&mut self, a: TensorId) -> TensorId {
        let c = self.value(a).dim().1;
        assert!(c > 0);
        let s = self.sum_axis1(a);
        self.mul_scalar(s, 1.0 / c as f64)
    }

    // ---- linear algebra ----

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let (va, vb) = (self.rc(a), self.rc(b));
        assert_eq!(va.dim().1, vb.dim().0, "inner dimensions must agree");
        let out = va.dot(&*vb);
        self.push_op(
            &[a, b],
            out,
            Box::new(move |dy, g| {
                g.accumulate(a, dy.dot(&vb.t()));
                g.accumulate(b, va.t().dot(dy));
            }),
        )
    }

    pub fn transpose(&mut self, a: TensorId) -> TensorId {
        let va = self.rc(a);
        let out = va.t().to_owned();
        self.push_op(
            &[a],
            out,
            Box::new(move |dy, g| g.accumulate(a, dy.t().to_owned())),
        )
    }

    // ---- row/column broadcasts ----

    /// Multiply each row of `a` (R, C) elementwise by the row vector `v` (1, C).
    pub fn mul_rowvec(&mut self, a: TensorId, v: TensorId) -> TensorId {
        let (va, vv) = (self.rc(a), self.rc(v));
        assert_eq!(vv.dim().0, 1);
        assert_eq!(va.dim().1, vv.dim().1);
        let out = &*va * &vv.row(0);
        self.push_op(
            &[a, v],
            out,
            Box::new(move |dy, g| {
                g.accumulate(a, dy * &vv.row(0));
                let dv = (dy * &*va).sum_axis(Axis(0)).insert_axis(Axis(0)).to_owned();
                g.accumulate(v, dv);
            }),
        )
    }

    /// Scale each row of `a` (R, C) by the column vector `s` (R, 1).
    pub fn scale_rows(&mut self, a: TensorId, scale: TensorId) -> TensorId {
        let (va, vs) = (self.rc(a), self.rc(scale));
        assert_eq!(vs.dim().1, 1);
        assert_eq!(va.dim().0, vs.dim().0);
        let out = &*va * &vs.column(0).insert_axis(Axis(1));
        self.push_op(
            &[a, scale],
            out,
            Box::new(move |dy, g| {
                g.accumulate(a, dy * &vs.column(0).insert_axis(Axis(1)));
                let ds = (dy * &*va).sum_axis(Axis(1)).insert_axis(Axis(1)).to_owned();
                g.accumulate(scale, ds);
            }),
        )
    }

    /// Add the column vector `b` (R, 1) to every column of `a` (R, C).
    pub fn add_colvec(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let (va, vb) = (self.rc(a), self.rc(b));
        assert_eq!(vb.dim().1, 1);
        assert_eq!(va.dim().0, vb.dim().0);
        let out = &*va + &vb.column(0).insert_axis(Axis(1));
        self.push_op(
            &[a, b],
            out,
            Box::new(move |dy, g| {
                g.accumulate(a, dy.clone());
                let db = dy.sum_axis(Axis(1)).insert_axis(Axis(1)).to_owned();
                g.accumulate(b, db);
            }),
        )
    }

    // ---- shape ----

    /// Slice a (1, T) signal into overlapping frames: (n_frames, frame_len).
    pub fn frame(&mut self, a: TensorId, frame_len: usize, hop: usize) -> TensorId {
        let va = self.rc(a);
        assert_eq!(va.dim().0, 1, "frame expects a (1, T) signal");
        assert!(frame_len > 0 && hop > 0);
        let t = va.dim().1;
        assert!(t >= frame_len, "signal shorter than one frame");
        let n_frames = (t - frame_len) / hop + 1;
        let mut out = Array2::zeros((n_frames, frame_len));
        for f in 0..n_frames {
            out.row_mut(f)
                .assign(&va.slice(s![0, f * hop..f * hop + frame_len]));
        }
        self.push_op(
            &[a],
            out,
            Box::new(move |dy, g| {
                let mut dx = Array2::zeros((1, t));
                for f in 0..n_frames {
                    for j in 0..frame_len {
                        dx[[0, f * hop + j]] += dy[[f, j]];
                    }
                }
                g.accumulate(a, dx);
            }),
        )
    }

    /// Zero-pad columns on the right up to `new_cols`.
    pub fn pad_cols(&mut self, a: TensorId, new_cols: usize) -> TensorId {
        let va = self.rc(a);
        let (r, c) = va.dim();
        assert!(new_cols >= c);
        let mut out = Array2::zeros((r, new_cols));
        out.slice_mut(s![.., ..c]).assign(&va);
        self.push_op(
            &[a],
            out,
            Box::new(move |dy, g| g.accumulate(a, dy.slice(s![.., ..c]).to_owned())),
        )
    }

    /// Keep only the first `new_cols` columns.
    pub fn trim_cols(&mut self, a: TensorId, new_cols: usize) -> TensorId {
        let va = self.rc(a);
        let (r, c) = va.dim();
        assert!(new_cols <= c);
        let out = va.slice(s![.., ..new_cols]).to_owned();
        self.push_op(
            &[a],
            out,
            Box::new(move |dy, g| {
                let mut dx = Array2::zeros((r, c));
                dx.slice_mut(s![.., ..new_cols]).assign(dy);
                g.accumulate(a, dx);
            }),
        )
    }

    /// Stack inputs vertically; all must share a column count.
    pub fn concat_rows(&mut self, parts: &[TensorId]) -> TensorId {
        assert!(!parts.is_empty());
        let values: Vec<Rc<Array2<f64>>> = parts.iter().map(|&p| self.rc(p)).collect();
        let cols = values[0].dim().1;
        assert!(values.iter().all(|v| v.dim().1 == cols));
        let total_rows: usize = values.iter().map(|v| v.dim().0).sum();
        let mut out = Array2::zeros((total_rows, cols));
        let mut row = 0;
        let mut spans = Vec::with_capacity(values.len());
        for v in &values {
            let r = v.dim().0;
            out.slice_mut(s![row..row + r, ..]).assign(&**v);
            spans.push((row, r));
            row += r;
        }
        let ids: Vec<TensorId> = parts.to_vec();
        self.push_op(
            &ids.clone(),
            out,
            Box::new(move |dy, g| {
                for (&id, &(start, r)) in ids.iter().zip(&spans) {
                    g.accumulate(id, dy.slice(s![start..start + r, ..]).to_owned());
                }
            }),
        )
    }

    // ---- convolution ----

    /// 1-D convolution: input (C_in, T), weight (C_out, C_in * K).
    pub fn conv1d(&mut self, x: TensorId, w: TensorId, geom: ConvGeom) -> TensorId {
        let (vx, vw) = (self.rc(x), self.rc(w));
        let t_in = vx.dim().1;
        let out = conv::conv_fwd(&vx, &vw, geom);
        self.push_op(
            &[x, w],
            out,
            Box::new(move |dy, g| {
                g.accumulate(x, conv::conv_dx(dy, &vw, geom, t_in));
                g.accumulate(w, conv::conv_dw(&vx, dy, geom));
            }),
        )
    }

    /// 1-D transposed convolution: input (C_in, T), weight (C_in, C_out * K).
    pub fn conv_transpose1d(&mut self, x: TensorId, w: TensorId, geom: ConvGeom) -> TensorId {
        let (vx, vw) = (self.rc(x), self.rc(w));
        let out = conv::convt_fwd(&vx, &vw, geom);
        self.push_op(
            &[x, w],
            out,
            Box::new(move |dy, g| {
                g.accumulate(x, conv::convt_dx(dy, &vw, geom));
                g.accumulate(w, conv::convt_dw(&vx, dy, geom));
            }),
        )
    }
}
