//! Tape-based reverse-mode automatic differentiation over `ndarray`.
//!
//! One [`Tape`] records a single forward computation; [`Tape::backward`]
//! walks the recorded nodes in reverse, accumulating gradients into every
//! node created with [`Tape::param`]. Intermediate gradients are freed as
//! soon as they have been propagated unless `retain_grads` is set.
//!
//! Backward closures read parent values straight from the tape rather than
//! capturing clones, so the memory high-water mark stays close to the
//! forward activations. Everything is generic over [`Element`] so training
//! runs in `f32` while gradient-check oracles run in `f64`.

use ndarray::{Array1, Array2, Array3, ArrayD, Axis, Ix1, Ix2, Ix3, IxDyn, ScalarOperand};
use num_traits::{Float, FromPrimitive};

/// Scalar element types usable on the tape.
pub trait Element:
    ndarray::LinalgScalar
    + Float
    + FromPrimitive
    + ScalarOperand
    + std::ops::AddAssign
    + std::fmt::Debug
    + std::fmt::Display
    + Send
    + Sync
    + 'static
{
    fn f(x: f64) -> Self {
        Self::from_f64(x).unwrap()
    }
}

impl Element for f32 {}
impl Element for f64 {}

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub usize);

type BackFn<F> = Box<dyn Fn(&ArrayD<F>, &Tape<F>) -> Vec<(Var, ArrayD<F>)>>;

struct Node<F: Element> {
    value: ArrayD<F>,
    grad: Option<ArrayD<F>>,
    needs_grad: bool,
    back: Option<BackFn<F>>,
}

/// Records one forward pass and replays it backwards.
pub struct Tape<F: Element> {
    nodes: Vec<Node<F>>,
    grad_enabled: bool,
    retain_grads: bool,
}

impl<F: Element> Default for Tape<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Element> Tape<F> {
    pub fn new() -> Self {
        Tape { nodes: Vec::with_capacity(128), grad_enabled: true, retain_grads: false }
    }

    /// A tape that records values only; backward closures are never built.
    pub fn inference() -> Self {
        Tape { nodes: Vec::with_capacity(128), grad_enabled: false, retain_grads: false }
    }

    /// Keep gradients of intermediate nodes after backward (for tests).
    pub fn retain_grads(mut self) -> Self {
        self.retain_grads = true;
        self
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Constant input; gradients stop here.
    pub fn leaf(&mut self, value: ArrayD<F>) -> Var {
        self.push_node(value, false, None)
    }

    /// Trainable input; gradients accumulate here.
    pub fn param(&mut self, value: ArrayD<F>) -> Var {
        let needs = self.grad_enabled;
        self.push_node(value, needs, None)
    }

    pub fn val(&self, x: Var) -> &ArrayD<F> {
        &self.nodes[x.0].value
    }

    pub fn grad(&self, x: Var) -> Option<&ArrayD<F>> {
        self.nodes[x.0].grad.as_ref()
    }

    /// Scalar value of a 0-d node.
    pub fn scalar(&self, x: Var) -> F {
        debug_assert_eq!(self.nodes[x.0].value.ndim(), 0);
        *self.nodes[x.0].value.first().unwrap()
    }

    fn push_node(&mut self, value: ArrayD<F>, needs_grad: bool, back: Option<BackFn<F>>) -> Var {
        self.nodes.push(Node { value, grad: None, needs_grad, back });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, parents: &[Var]) -> bool {
        self.grad_enabled && parents.iter().any(|p| self.nodes[p.0].needs_grad)
    }

    fn push_op(
        &mut self,
        value: ArrayD<F>,
        parents: &[Var],
        back: impl Fn(&ArrayD<F>, &Tape<F>) -> Vec<(Var, ArrayD<F>)> + 'static,
    ) -> Var {
        if self.needs(parents) {
            self.push_node(value, true, Some(Box::new(back)))
        } else {
            self.push_node(value, false, None)
        }
    }

    /// Seed `root` with gradient 1 and propagate to all parameters.
    pub fn backward(&mut self, root: Var) {
        assert_eq!(self.nodes[root.0].value.ndim(), 0, "backward root must be a scalar");
        assert!(self.nodes[root.0].needs_grad, "backward root does not require gradients");
        self.nodes[root.0].grad = Some(ArrayD::ones(IxDyn(&[])));
        for i in (0..=root.0).rev() {
            if self.nodes[i].back.is_none() || self.nodes[i].grad.is_none() {
                continue;
            }
            let back = self.nodes[i].back.take().unwrap();
            let g = if self.retain_grads {
                self.nodes[i].grad.clone().unwrap()
            } else {
                self.nodes[i].grad.take().unwrap()
            };
            let contribs = back(&g, self);
            if self.retain_grads {
                self.nodes[i].back = Some(back);
            }
            for (p, gp) in contribs {
                debug_assert_eq!(gp.shape(), self.nodes[p.0].value.shape(), "gradient shape mismatch");
                match &mut self.nodes[p.0].grad {
                    Some(acc) => *acc += &gp,
                    slot @ None => *slot = Some(gp),
                }
            }
        }
    }

    // ── elementwise and scalar ops ─────────────────────────────────────────

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.val(a).shape(), self.val(b).shape());
        let v = self.val(a) + self.val(b);
        self.push_op(v, &[a, b], move |g, _| vec![(a, g.clone()), (b, g.clone())])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.val(a).shape(), self.val(b).shape());
        let v = self.val(a) - self.val(b);
        self.push_op(v, &[a, b], move |g, _| vec![(a, g.clone()), (b, g.mapv(|x| -x))])
    }

    /// Elementwise product of same-shape arrays.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.val(a).shape(), self.val(b).shape());
        let v = self.val(a) * self.val(b);
        self.push_op(v, &[a, b], move |g, t| vec![(a, g * t.val(b)), (b, g * t.val(a))])
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let v = self.val(a).mapv(|x| -x);
        self.push_op(v, &[a], move |g, _| vec![(a, g.mapv(|x| -x))])
    }

    pub fn scale(&mut self, a: Var, c: F) -> Var {
        let v = self.val(a) * c;
        self.push_op(v, &[a], move |g, _| vec![(a, g * c)])
    }

    pub fn add_scalar(&mut self, a: Var, c: F) -> Var {
        let v = self.val(a) + c;
        self.push_op(v, &[a], move |g, _| vec![(a, g.clone())])
    }

    /// `1 - a`.
    pub fn one_minus(&mut self, a: Var) -> Var {
        let v = self.val(a).mapv(|x| F::one() - x);
        self.push_op(v, &[a], move |g, _| vec![(a, g.mapv(|x| -x))])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let z = F::zero();
        let v = self.val(a).mapv(|x| if x > z { x } else { z });
        self.push_op(v, &[a], move |g, t| {
            let mut gx = g.clone();
            gx.zip_mut_with(t.val(a), |gi, &xi| {
                if xi <= F::zero() {
                    *gi = F::zero();
                }
            });
            vec![(a, gx)]
        })
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.val(a).mapv(F::exp);
        let out = Var(self.nodes.len());
        self.push_op(v, &[a], move |g, t| vec![(a, g * t.val(out))])
    }

    /// Natural log; callers must guarantee positive inputs (use [`Tape::clamp`]).
    pub fn ln(&mut self, a: Var) -> Var {
        let v = self.val(a).mapv(F::ln);
        self.push_op(v, &[a], move |g, t| vec![(a, g / t.val(a))])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let one = F::one();
        let v = self.val(a).mapv(|x| one / (one + (-x).exp()));
        let out = Var(self.nodes.len());
        self.push_op(v, &[a], move |g, t| {
            let s = t.val(out);
            vec![(a, g * &s.mapv(|si| si * (F::one() - si)))]
        })
    }

    /// Clamp to `[lo, hi]`; gradient passes only where the input was strictly inside.
    pub fn clamp(&mut self, a: Var, lo: F, hi: F) -> Var {
        let v = self.val(a).mapv(|x| x.max(lo).min(hi));
        self.push_op(v, &[a], move |g, t| {
            let mut gx = g.clone();
            gx.zip_mut_with(t.val(a), |gi, &xi| {
                if xi <= lo || xi >= hi {
                    *gi = F::zero();
                }
            });
            vec![(a, gx)]
        })
    }

    // ── reductions ─────────────────────────────────────────────────────────

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.val(a).sum();
        let v = ArrayD::from_elem(IxDyn(&[]), s);
        self.push_op(v, &[a], move |g, t| {
            let g0 = *g.first().unwrap();
            vec![(a, ArrayD::from_elem(t.val(a).raw_dim(), g0))]
        })
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = F::f(self.val(a).len() as f64);
        let s = self.sum_all(a);
        self.scale(s, F::one() / n)
    }

    /// Column sums of a 2-d array: `[n, d] -> [d]`.
    pub fn sum_axis0(&mut self, a: Var) -> Var {
        let v = self.val2(a).sum_axis(Axis(0)).into_dyn();
        let n = self.val(a).shape()[0];
        self.push_op(v, &[a], move |g, t| {
            let d = t.val(a).shape()[1];
            let g1 = g.view().into_dimensionality::<Ix1>().unwrap();
            let mut out = Array2::<F>::zeros((n, d));
            for mut row in out.outer_iter_mut() {
                row.assign(&g1);
            }
            vec![(a, out.into_dyn())]
        })
    }

    /// Dot product with a constant weight vector: `[n] -> scalar`.
    pub fn dot_const(&mut self, a: Var, w: Vec<F>) -> Var {
        let a1 = self.val1(a);
        assert_eq!(a1.len(), w.len());
        let s = a1.iter().zip(&w).fold(F::zero(), |acc, (&x, &wi)| acc + x * wi);
        let v = ArrayD::from_elem(IxDyn(&[]), s);
        self.push_op(v, &[a], move |g, _| {
            let g0 = *g.first().unwrap();
            vec![(a, Array1::from_iter(w.iter().map(|&wi| wi * g0)).into_dyn())]
        })
    }

    // ── shape ops ──────────────────────────────────────────────────────────

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Var {
        let v = self
            .val(a)
            .clone()
            .into_shape_with_order(IxDyn(&shape))
            .expect("reshape: incompatible shape");
        self.push_op(v, &[a], move |g, t| {
            let back = g.clone().into_shape_with_order(t.val(a).raw_dim()).unwrap();
            vec![(a, back)]
        })
    }

    /// Transpose of a 2-d array.
    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.val2(a).t().as_standard_layout().to_owned().into_dyn();
        self.push_op(v, &[a], move |g, _| {
            let g2 = g.view().into_dimensionality::<Ix2>().unwrap();
            vec![(a, g2.t().as_standard_layout().to_owned().into_dyn())]
        })
    }

    /// Row-range slice of a 2-d array: `[n, d] -> [r1-r0, d]`.
    pub fn slice_rows(&mut self, a: Var, r0: usize, r1: usize) -> Var {
        let v = self.val2(a).slice(ndarray::s![r0..r1, ..]).to_owned().into_dyn();
        self.push_op(v, &[a], move |g, t| {
            let mut out = ArrayD::zeros(t.val(a).raw_dim());
            let g2 = g.view().into_dimensionality::<Ix2>().unwrap();
            out.view_mut()
                .into_dimensionality::<Ix2>()
                .unwrap()
                .slice_mut(ndarray::s![r0..r1, ..])
                .assign(&g2);
            vec![(a, out)]
        })
    }

    /// Sub-block of a 2-d array.
    pub fn block(&mut self, a: Var, r0: usize, r1: usize, c0: usize, c1: usize) -> Var {
        let v = self.val2(a).slice(ndarray::s![r0..r1, c0..c1]).to_owned().into_dyn();
        self.push_op(v, &[a], move |g, t| {
            let mut out = ArrayD::zeros(t.val(a).raw_dim());
            let g2 = g.view().into_dimensionality::<Ix2>().unwrap();
            out.view_mut()
                .into_dimensionality::<Ix2>()
                .unwrap()
                .slice_mut(ndarray::s![r0..r1, c0..c1])
                .assign(&g2);
            vec![(a, out)]
        })
    }

    /// Concatenate along axis 0. All inputs must share trailing dimensions.
    pub fn concat0(&mut self, xs: &[Var]) -> Var {
        assert!(!xs.is_empty());
        let views: Vec<_> = xs.iter().map(|&x| self.val(x).view()).collect();
        let v = ndarray::concatenate(Axis(0), &views).expect("concat0: incompatible shapes");
        let parents: Vec<Var> = xs.to_vec();
        let sizes: Vec<usize> = xs.iter().map(|&x| self.val(x).shape()[0]).collect();
        self.push_op(v, &parents.clone(), move |g, _| {
            let mut out = Vec::with_capacity(parents.len());
            let mut off = 0;
            for (&p, &sz) in parents.iter().zip(&sizes) {
                let gp = g.slice_axis(Axis(0), ndarray::Slice::from(off..off + sz)).to_owned();
                out.push((p, gp));
                off += sz;
            }
            out
        })
    }

    // ── linear algebra ─────────────────────────────────────────────────────

    fn val1(&self, a: Var) -> ndarray::ArrayView1<'_, F> {
        self.val(a).view().into_dimensionality::<Ix1>().expect("expected 1-d value")
    }

    fn val2(&self, a: Var) -> ndarray::ArrayView2<'_, F> {
        self.val(a).view().into_dimensionality::<Ix2>().expect("expected 2-d value")
    }

    fn val3(&self, a: Var) -> ndarray::ArrayView3<'_, F> {
        self.val(a).view().into_dimensionality::<Ix3>().expect("expected 3-d value")
    }

    /// `[n, k] x [k, m] -> [n, m]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.val2(a).dot(&self.val2(b)).into_dyn();
        self.push_op(v, &[a, b], move |g, t| {
            let g2 = g.view().into_dimensionality::<Ix2>().unwrap();
            let da = g2.dot(&t.val2(b).t()).into_dyn();
            let db = t.val2(a).t().dot(&g2).into_dyn();
            vec![(a, da), (b, db)]
        })
    }

    /// Add a bias row-vector to every row of `[n, d]`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Var {
        let v = (&self.val2(x) + &self.val1(b)).into_dyn();
        self.push_op(v, &[x, b], move |g, _| {
            let g2 = g.view().into_dimensionality::<Ix2>().unwrap();
            vec![(x, g.clone()), (b, g2.sum_axis(Axis(0)).into_dyn())]
        })
    }

    /// Add a per-channel bias to `[b, c, l]`.
    pub fn add_bias_channels(&mut self, x: Var, bias: Var) -> Var {
        let b1 = self.val1(bias).to_owned();
        let mut v = self.val3(x).to_owned();
        for mut sample in v.outer_iter_mut() {
            for (c, mut lane) in sample.outer_iter_mut().enumerate() {
                lane += b1[c];
            }
        }
        self.push_op(v.into_dyn(), &[x, bias], move |g, _| {
            let g3 = g.view().into_dimensionality::<Ix3>().unwrap();
            let db = g3.sum_axis(Axis(2)).sum_axis(Axis(0)).into_dyn();
            vec![(x, g.clone()), (bias, db)]
        })
    }

    // ── softmax family ─────────────────────────────────────────────────────

    /// Row-wise softmax of `[n, c]`.
    pub fn softmax(&mut self, a: Var) -> Var {
        let x = self.val2(a);
        let mut v = Array2::<F>::zeros(x.raw_dim());
        for (row, mut out) in x.outer_iter().zip(v.outer_iter_mut()) {
            let m = row.iter().cloned().fold(F::neg_infinity(), F::max);
            let mut s = F::zero();
            for (o, &xi) in out.iter_mut().zip(row.iter()) {
                *o = (xi - m).exp();
                s = s + *o;
            }
            out.mapv_inplace(|e| e / s);
        }
        let out_var = Var(self.nodes.len());
        self.push_op(v.into_dyn(), &[a], move |g, t| {
            let p = t.val2(out_var);
            let g2 = g.view().into_dimensionality::<Ix2>().unwrap();
            let mut gx = Array2::<F>::zeros(p.raw_dim());
            for ((prow, grow), mut orow) in p.outer_iter().zip(g2.outer_iter()).zip(gx.outer_iter_mut()) {
                let dot = prow.iter().zip(grow.iter()).fold(F::zero(), |acc, (&pi, &gi)| acc + pi * gi);
                for ((o, &pi), &gi) in orow.iter_mut().zip(prow.iter()).zip(grow.iter()) {
                    *o = pi * (gi - dot);
                }
            }
            vec![(a, gx.into_dyn())]
        })
    }

    /// Row-wise log-softmax of `[n, c]`.
    pub fn log_softmax(&mut self, a: Var) -> Var {
        let x = self.val2(a);
        let mut v = Array2::<F>::zeros(x.raw_dim());
        for (row, mut out) in x.outer_iter().zip(v.outer_iter_mut()) {
            let m = row.iter().cloned().fold(F::neg_infinity(), F::max);
            let lse = row.iter().fold(F::zero(), |acc, &xi| acc + (xi - m).exp()).ln() + m;
            for (o, &xi) in out.iter_mut().zip(row.iter()) {
                *o = xi - lse;
            }
        }
        let out_var = Var(self.nodes.len());
        self.push_op(v.into_dyn(), &[a], move |g, t| {
            let lp = t.val2(out_var);
            let g2 = g.view().into_dimensionality::<Ix2>().unwrap();
            let mut gx = Array2::<F>::zeros(lp.raw_dim());
            for ((lrow, grow), mut orow) in lp.outer_iter().zip(g2.outer_iter()).zip(gx.outer_iter_mut()) {
                let gsum = grow.sum();
                for ((o, &li), &gi) in orow.iter_mut().zip(lrow.iter()).zip(grow.iter()) {
                    *o = gi - li.exp() * gsum;
                }
            }
            vec![(a, gx.into_dyn())]
        })
    }

    /// Picks `x[i, idx[i]]` for every row: `[n, c] -> [n]`.
    pub fn gather(&mut self, a: Var, idx: Vec<usize>) -> Var {
        let x = self.val2(a);
        assert_eq!(x.nrows(), idx.len());
        let v = Array1::from_iter(idx.iter().enumerate().map(|(i, &j)| x[[i, j]]));
        self.push_op(v.into_dyn(), &[a], move |g, t| {
            let g1 = g.view().into_dimensionality::<Ix1>().unwrap();
            let mut gx = Array2::<F>::zeros(t.val2(a).raw_dim());
            for (i, &j) in idx.iter().enumerate() {
                gx[[i, j]] = g1[i];
            }
            vec![(a, gx.into_dyn())]
        })
    }

    /// One column of a 2-d array: `[n, c] -> [n]`.
    pub fn column(&mut self, a: Var, j: usize) -> Var {
        let n = self.val2(a).nrows();
        self.gather(a, vec![j; n])
    }

    // ── fused losses ───────────────────────────────────────────────────────

    /// Weighted negative log-likelihood from log-probabilities.
    ///
    /// `nll = -sum_i w[i] * logp[i, labels[i]] / divisor`
    pub fn nll(&mut self, logp: Var, labels: &[usize], weights: &[F], divisor: F) -> Var {
        assert_eq!(labels.len(), weights.len());
        let picked = self.gather(logp, labels.to_vec());
        let w: Vec<F> = weights.iter().map(|&wi| -wi / divisor).collect();
        self.dot_const(picked, w)
    }

    /// Weighted binary cross-entropy on logits: `[n] -> scalar`.
    ///
    /// `bce = sum_i w[i] * (t[i]*softplus(-z[i]) + (1-t[i])*softplus(z[i])) / divisor`
    pub fn bce_with_logits(&mut self, z: Var, targets: Vec<F>, weights: Vec<F>, divisor: F) -> Var {
        let z1 = self.val1(z);
        assert_eq!(z1.len(), targets.len());
        assert_eq!(z1.len(), weights.len());
        let softplus = |x: F| {
            // log(1 + e^x) without overflow
            if x > F::zero() {
                x + (-x).exp().ln_1p()
            } else {
                x.exp().ln_1p()
            }
        };
        let mut s = F::zero();
        for ((&zi, &ti), &wi) in z1.iter().zip(&targets).zip(&weights) {
            s = s + wi * (ti * softplus(-zi) + (F::one() - ti) * softplus(zi));
        }
        let v = ArrayD::from_elem(IxDyn(&[]), s / divisor);
        self.push_op(v, &[z], move |g, t| {
            let g0 = *g.first().unwrap();
            let zv = t.val1(z);
            let gx = Array1::from_iter(zv.iter().zip(&targets).zip(&weights).map(|((&zi, &ti), &wi)| {
                let sig = F::one() / (F::one() + (-zi).exp());
                wi * (sig - ti) * g0 / divisor
            }));
            vec![(z, gx.into_dyn())]
        })
    }

    // ── domain-adaptation primitives ───────────────────────────────────────

    /// Gradient reversal: identity forward, `-lambda * grad` backward.
    pub fn grl(&mut self, a: Var, lambda: F) -> Var {
        assert!(lambda >= F::zero(), "GRL coefficient must be nonnegative");
        let v = self.val(a).clone();
        self.push_op(v, &[a], move |g, _| vec![(a, g * (-lambda))])
    }

    /// Pairwise squared Euclidean distances: `[n, d] x [m, d] -> [n, m]`.
    pub fn pairwise_sqdist(&mut self, x: Var, y: Var) -> Var {
        let xv = self.val2(x);
        let yv = self.val2(y);
        assert_eq!(xv.ncols(), yv.ncols());
        let xn: Array1<F> = xv.outer_iter().map(|r| r.dot(&r)).collect();
        let yn: Array1<F> = yv.outer_iter().map(|r| r.dot(&r)).collect();
        let mut v = xv.dot(&yv.t());
        let z = F::zero();
        for (i, mut row) in v.outer_iter_mut().enumerate() {
            for (j, e) in row.iter_mut().enumerate() {
                let d = xn[i] + yn[j] - (*e + *e);
                *e = if d > z { d } else { z };
            }
        }
        self.push_op(v.into_dyn(), &[x, y], move |g, t| {
            // d D_ij / d x_i = 2 (x_i - y_j);  d D_ij / d y_j = -2 (x_i - y_j)
            let g2 = g.view().into_dimensionality::<Ix2>().unwrap();
            let xv = t.val2(x);
            let yv = t.val2(y);
            let two = F::f(2.0);
            let rs = g2.sum_axis(Axis(1)); // [n]
            let cs = g2.sum_axis(Axis(0)); // [m]
            let mut dx = g2.dot(&yv); // [n, d]
            for (i, mut row) in dx.outer_iter_mut().enumerate() {
                let xi = xv.row(i);
                for (e, &xid) in row.iter_mut().zip(xi.iter()) {
                    *e = two * (rs[i] * xid - *e);
                }
            }
            let mut dy = g2.t().dot(&xv); // [m, d]
            for (j, mut row) in dy.outer_iter_mut().enumerate() {
                let yj = yv.row(j);
                for (e, &yjd) in row.iter_mut().zip(yj.iter()) {
                    *e = two * (cs[j] * yjd - *e);
                }
            }
            vec![(x, dx.into_dyn()), (y, dy.into_dyn())]
        })
    }

    /// Row-wise outer product, flattened: `[b, d] x [b, c] -> [b, d*c]`.
    pub fn outer_rows(&mut self, f: Var, p: Var) -> Var {
        let fv = self.val2(f);
        let pv = self.val2(p);
        assert_eq!(fv.nrows(), pv.nrows());
        let (b, d) = fv.dim();
        let c = pv.ncols();
        let mut v = Array2::<F>::zeros((b, d * c));
        for i in 0..b {
            let fr = fv.row(i);
            let pr = pv.row(i);
            let mut out = v.row_mut(i);
            for u in 0..d {
                for t in 0..c {
                    out[u * c + t] = fr[u] * pr[t];
                }
            }
        }
        self.push_op(v.into_dyn(), &[f, p], move |g, tape| {
            let g2 = g.view().into_dimensionality::<Ix2>().unwrap();
            let fv = tape.val2(f);
            let pv = tape.val2(p);
            let mut df = Array2::<F>::zeros((b, d));
            let mut dp = Array2::<F>::zeros((b, c));
            for i in 0..b {
                let gr = g2.row(i);
                for u in 0..d {
                    let mut acc_f = F::zero();
                    for t in 0..c {
                        let ge = gr[u * c + t];
                        acc_f = acc_f + ge * pv[[i, t]];
                        dp[[i, t]] = dp[[i, t]] + ge * fv[[i, u]];
                    }
                    df[[i, u]] = acc_f;
                }
            }
            vec![(f, df.into_dyn()), (p, dp.into_dyn())]
        })
    }

    // ── convolution and pooling ────────────────────────────────────────────

    /// 1-d convolution, stride 1, no padding.
    ///
    /// `x: [b, c_in, l]`, `w: [c_out, c_in, k]` -> `[b, c_out, l-k+1]`.
    pub fn conv1d(&mut self, x: Var, w: Var) -> Var {
        let xv = self.val3(x);
        let wv = self.val3(w);
        let (b, cin, l) = xv.dim();
        let (cout, wcin, k) = wv.dim();
        assert_eq!(cin, wcin, "conv1d: channel mismatch");
        assert!(l >= k, "conv1d: input shorter than kernel");
        let lo = l - k + 1;
        let cols = im2col(&xv, k); // [b*lo, cin*k]
        let w2 = wv.to_shape((cout, cin * k)).unwrap().to_owned();
        let y2 = cols.dot(&w2.t()); // [b*lo, cout]
        let v = bl_to_bcl(&y2, b, lo, cout);
        self.push_op(v.into_dyn(), &[x, w], move |g, t| {
            let g3 = g.view().into_dimensionality::<Ix3>().unwrap();
            let g2 = bcl_to_bl(&g3); // [b*lo, cout]
            let xv = t.val3(x);
            let wv = t.val3(w);
            let w2 = wv.to_shape((cout, cin * k)).unwrap().to_owned();
            let cols = im2col(&xv, k);
            let dw2 = g2.t().dot(&cols); // [cout, cin*k]
            let dcols = g2.dot(&w2); // [b*lo, cin*k]
            let dx = col2im(&dcols, b, cin, l, k);
            vec![(x, dx.into_dyn()), (w, dw2.into_shape_with_order((cout, cin, k)).unwrap().into_dyn())]
        })
    }

    /// Max pooling over the last axis with window `k` and stride `k`.
    pub fn maxpool1d(&mut self, x: Var, k: usize) -> Var {
        let xv = self.val3(x);
        let (b, c, l) = xv.dim();
        let lo = l / k;
        assert!(lo > 0, "maxpool1d: input shorter than window");
        let mut v = Array3::<F>::zeros((b, c, lo));
        let mut arg = vec![0u32; b * c * lo];
        let mut slot = 0;
        for i in 0..b {
            for ch in 0..c {
                let lane = xv.index_axis(Axis(0), i);
                let lane = lane.index_axis(Axis(0), ch);
                for o in 0..lo {
                    let start = o * k;
                    let mut best = lane[start];
                    let mut bi = start;
                    for j in start + 1..start + k {
                        if lane[j] > best {
                            best = lane[j];
                            bi = j;
                        }
                    }
                    v[[i, ch, o]] = best;
                    arg[slot] = bi as u32;
                    slot += 1;
                }
            }
        }
        self.push_op(v.into_dyn(), &[x], move |g, _| {
            let g3 = g.view().into_dimensionality::<Ix3>().unwrap();
            let mut dx = Array3::<F>::zeros((b, c, l));
            let mut slot = 0;
            for i in 0..b {
                for ch in 0..c {
                    for o in 0..lo {
                        dx[[i, ch, arg[slot] as usize]] = dx[[i, ch, arg[slot] as usize]] + g3[[i, ch, o]];
                        slot += 1;
                    }
                }
            }
            vec![(x, dx.into_dyn())]
        })
    }

    /// Adaptive max pooling to a fixed output length.
    ///
    /// Window `o` covers `[floor(o*l/out), ceil((o+1)*l/out))`.
    pub fn adaptive_maxpool1d(&mut self, x: Var, out_len: usize) -> Var {
        let xv = self.val3(x);
        let (b, c, l) = xv.dim();
        assert!(l >= out_len, "adaptive_maxpool1d: input shorter than output");
        let bounds: Vec<(usize, usize)> = (0..out_len)
            .map(|o| (o * l / out_len, ((o + 1) * l).div_ceil(out_len)))
            .collect();
        let mut v = Array3::<F>::zeros((b, c, out_len));
        let mut arg = vec![0u32; b * c * out_len];
        let mut slot = 0;
        for i in 0..b {
            for ch in 0..c {
                let lane = xv.index_axis(Axis(0), i);
                let lane = lane.index_axis(Axis(0), ch);
                for (o, &(s, e)) in bounds.iter().enumerate() {
                    let mut best = lane[s];
                    let mut bi = s;
                    for j in s + 1..e {
                        if lane[j] > best {
                            best = lane[j];
                            bi = j;
                        }
                    }
                    v[[i, ch, o]] = best;
                    arg[slot] = bi as u32;
                    slot += 1;
                }
            }
        }
        self.push_op(v.into_dyn(), &[x], move |g, _| {
            let g3 = g.view().into_dimensionality::<Ix3>().unwrap();
            let mut dx = Array3::<F>::zeros((b, c, l));
            let mut slot = 0;
            for i in 0..b {
                for ch in 0..c {
                    for o in 0..out_len {
                        dx[[i, ch, arg[slot] as usize]] = dx[[i, ch, arg[slot] as usize]] + g3[[i, ch, o]];
                        slot += 1;
                    }
                }
            }
            vec![(x, dx.into_dyn())]
        })
    }

    /// Batch normalization over `[b, c, l]`, normalizing each channel across
    /// `(b, l)`. In train mode the batch statistics (population variance) are
    /// used and returned so the layer can update its running estimates; in
    /// eval mode the provided running statistics are used.
    pub fn batchnorm1d(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running: (&Array1<F>, &Array1<F>),
        eps: F,
        use_batch_stats: bool,
    ) -> (Var, Array1<F>, Array1<F>) {
        let xv = self.val3(x);
        let (b, c, l) = xv.dim();
        let n = F::f((b * l) as f64);
        let (mean, var) = if use_batch_stats {
            let mut mean = Array1::<F>::zeros(c);
            let mut var = Array1::<F>::zeros(c);
            for ch in 0..c {
                let mut s = F::zero();
                for i in 0..b {
                    for j in 0..l {
                        s = s + xv[[i, ch, j]];
                    }
                }
                let m = s / n;
                let mut sv = F::zero();
                for i in 0..b {
                    for j in 0..l {
                        let d = xv[[i, ch, j]] - m;
                        sv = sv + d * d;
                    }
                }
                mean[ch] = m;
                var[ch] = sv / n;
            }
            (mean, var)
        } else {
            (running.0.clone(), running.1.clone())
        };
        let inv_std = var.mapv(|v| F::one() / (v + eps).sqrt());
        let gv = self.val1(gamma).to_owned();
        let bv = self.val1(beta).to_owned();
        let mut y = Array3::<F>::zeros((b, c, l));
        for i in 0..b {
            for ch in 0..c {
                let (m, is, ga, be) = (mean[ch], inv_std[ch], gv[ch], bv[ch]);
                for j in 0..l {
                    y[[i, ch, j]] = (xv[[i, ch, j]] - m) * is * ga + be;
                }
            }
        }
        let mean_c = mean.clone();
        let var_c = var.clone();
        let out = self.push_op(y.into_dyn(), &[x, gamma, beta], move |g, t| {
            let g3 = g.view().into_dimensionality::<Ix3>().unwrap();
            let xv = t.val3(x);
            let gv = t.val1(gamma);
            let mut dgamma = Array1::<F>::zeros(c);
            let mut dbeta = Array1::<F>::zeros(c);
            let mut dx = Array3::<F>::zeros((b, c, l));
            for ch in 0..c {
                let (m, is) = (mean_c[ch], inv_std[ch]);
                let mut gsum = F::zero();
                let mut gxsum = F::zero();
                for i in 0..b {
                    for j in 0..l {
                        let gi = g3[[i, ch, j]];
                        let xh = (xv[[i, ch, j]] - m) * is;
                        gsum = gsum + gi;
                        gxsum = gxsum + gi * xh;
                    }
                }
                dbeta[ch] = gsum;
                dgamma[ch] = gxsum;
                let scale = gv[ch] * is;
                if use_batch_stats {
                    let gmean = gsum / n;
                    let gxmean = gxsum / n;
                    for i in 0..b {
                        for j in 0..l {
                            let gi = g3[[i, ch, j]];
                            let xh = (xv[[i, ch, j]] - m) * is;
                            dx[[i, ch, j]] = scale * (gi - gmean - xh * gxmean);
                        }
                    }
                } else {
                    for i in 0..b {
                        for j in 0..l {
                            dx[[i, ch, j]] = scale * g3[[i, ch, j]];
                        }
                    }
                }
            }
            vec![(x, dx.into_dyn()), (gamma, dgamma.into_dyn()), (beta, dbeta.into_dyn())]
        });
        (out, mean, var)
    }
}

/// `[b, c_in, l] -> [b*lo, c_in*k]` patch matrix for stride-1 convolution.
fn im2col<F: Element>(x: &ndarray::ArrayView3<'_, F>, k: usize) -> Array2<F> {
    let (b, cin, l) = x.dim();
    let lo = l - k + 1;
    let mut cols = Array2::<F>::zeros((b * lo, cin * k));
    for i in 0..b {
        for ch in 0..cin {
            let lane = x.index_axis(Axis(0), i);
            let lane = lane.index_axis(Axis(0), ch);
            let lane = lane.as_slice().expect("im2col: non-contiguous input");
            for o in 0..lo {
                let row = i * lo + o;
                let dst_off = ch * k;
                let dst = cols.row_mut(row);
                let dst = &mut dst.into_slice().unwrap()[dst_off..dst_off + k];
                dst.copy_from_slice(&lane[o..o + k]);
            }
        }
    }
    cols
}

/// Scatter-add the column gradient back to input positions.
fn col2im<F: Element>(dcols: &Array2<F>, b: usize, cin: usize, l: usize, k: usize) -> Array3<F> {
    let lo = l - k + 1;
    let mut dx = Array3::<F>::zeros((b, cin, l));
    for i in 0..b {
        for ch in 0..cin {
            let mut lane = dx.index_axis_mut(Axis(0), i);
            let mut lane = lane.index_axis_mut(Axis(0), ch);
            let lane = lane.as_slice_mut().unwrap();
            for o in 0..lo {
                let row = dcols.row(o + i * lo);
                let src = &row.as_slice().unwrap()[ch * k..(ch + 1) * k];
                for (j, &v) in src.iter().enumerate() {
                    lane[o + j] = lane[o + j] + v;
                }
            }
        }
    }
    dx
}

/// `[b*lo, c] -> [b, c, lo]`.
fn bl_to_bcl<F: Element>(y2: &Array2<F>, b: usize, lo: usize, c: usize) -> Array3<F> {
    let mut out = Array3::<F>::zeros((b, c, lo));
    for i in 0..b {
        for o in 0..lo {
            let row = y2.row(i * lo + o);
            for ch in 0..c {
                out[[i, ch, o]] = row[ch];
            }
        }
    }
    out
}

/// Central finite-difference oracle: checks the tape gradient of a scalar
/// function against `(f(x+h) - f(x-h)) / 2h` coordinate by coordinate.
///
/// `f` must rebuild the same computation on every call. Tolerance is
/// relative with a small absolute floor for near-zero gradients.
pub fn fd_check(input: &ArrayD<f64>, f: impl Fn(&mut Tape<f64>, Var) -> Var, tol: f64) {
    let mut tape = Tape::<f64>::new();
    let x = tape.param(input.clone());
    let loss = f(&mut tape, x);
    tape.backward(loss);
    let analytic = tape.grad(x).expect("missing gradient").clone();

    let h = 1e-5;
    for idx in 0..input.len() {
        let mut plus = input.clone();
        let mut minus = input.clone();
        plus.as_slice_mut().unwrap()[idx] += h;
        minus.as_slice_mut().unwrap()[idx] -= h;
        let mut tp = Tape::<f64>::new();
        let xp = tp.param(plus);
        let lossp = f(&mut tp, xp);
        let lp = tp.scalar(lossp);
        let mut tm = Tape::<f64>::new();
        let xm = tm.param(minus);
        let lossm = f(&mut tm, xm);
        let lm = tm.scalar(lossm);
        let fd = (lp - lm) / (2.0 * h);
        let an = analytic.as_slice().unwrap()[idx];
        let bound = tol * fd.abs().max(an.abs()) + 1e-7;
        assert!((fd - an).abs() < bound, "fd mismatch at {idx}: analytic {an}, fd {fd}");
    }
}

/// `[b, c, lo] -> [b*lo, c]`.
fn bcl_to_bl<F: Element>(y3: &ndarray::ArrayView3<'_, F>) -> Array2<F> {
    let (b, c, lo) = y3.dim();
    let mut out = Array2::<F>::zeros((b * lo, c));
    for i in 0..b {
        for o in 0..lo {
            let mut row = out.row_mut(i * lo + o);
            for ch in 0..c {
                row[ch] = y3[[i, ch, o]];
            }
        }
    }
    out
}
