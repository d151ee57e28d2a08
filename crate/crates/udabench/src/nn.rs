//! Neural-network building blocks on top of the [`crate::tensor`] tape:
//! parameters, linear/conv/batch-norm/dropout layers, and the Adam optimizer.

use crate::tensor::{Element, Tape, Var};
use ndarray::{Array1, ArrayD, IxDyn};
use rand::Rng;

/// Forward-pass mode.
///
/// `AdaBn` is the statistic re-estimation pass: batch normalization behaves
/// as in training (batch statistics, running-stat momentum updates) while
/// dropout stays inactive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
    AdaBn,
}

impl Mode {
    pub fn train(self) -> bool {
        matches!(self, Mode::Train)
    }
    fn batch_stats(self) -> bool {
        matches!(self, Mode::Train | Mode::AdaBn)
    }
}

/// A named trainable tensor with gradient and Adam state.
#[derive(Debug, Clone)]
pub struct Param<F: Element> {
    pub name: String,
    pub value: ArrayD<F>,
    grad: ArrayD<F>,
    m: ArrayD<F>,
    v: ArrayD<F>,
    bound: Option<Var>,
}

impl<F: Element> Param<F> {
    pub fn new(name: impl Into<String>, value: ArrayD<F>) -> Self {
        let z = ArrayD::zeros(value.raw_dim());
        Param { name: name.into(), grad: z.clone(), m: z.clone(), v: z, value, bound: None }
    }

    /// Register this parameter on the tape for the current step.
    pub fn push(&mut self, tape: &mut Tape<F>) -> Var {
        let var = tape.param(self.value.clone());
        self.bound = Some(var);
        var
    }

    /// Accumulate the gradient computed by the last backward pass.
    pub fn pull_grad(&mut self, tape: &Tape<F>) {
        if let Some(var) = self.bound.take() {
            if let Some(g) = tape.grad(var) {
                self.grad += g;
            }
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(F::zero());
    }

    pub fn grad(&self) -> &ArrayD<F> {
        &self.grad
    }
}

/// Adam with the standard bias correction (beta1 0.9, beta2 0.999, eps 1e-8).
#[derive(Debug, Clone)]
pub struct Adam<F: Element> {
    beta1: F,
    beta2: F,
    eps: F,
    t: i32,
}

impl<F: Element> Default for Adam<F> {
    fn default() -> Self {
        Adam { beta1: F::f(0.9), beta2: F::f(0.999), eps: F::f(1e-8), t: 0 }
    }
}

impl<F: Element> Adam<F> {
    /// One update over `params` with learning rate `lr`, then zero the grads.
    pub fn step(&mut self, params: Vec<&mut Param<F>>, lr: F) {
        self.t += 1;
        let bc1 = F::one() - self.beta1.powi(self.t);
        let bc2 = F::one() - self.beta2.powi(self.t);
        for p in params {
            ndarray::Zip::from(&mut p.m).and(&p.grad).for_each(|m, &g| {
                *m = self.beta1 * *m + (F::one() - self.beta1) * g;
            });
            ndarray::Zip::from(&mut p.v).and(&p.grad).for_each(|v, &g| {
                *v = self.beta2 * *v + (F::one() - self.beta2) * g * g;
            });
            ndarray::Zip::from(&mut p.value).and(&p.m).and(&p.v).for_each(|w, &m, &v| {
                let mhat = m / bc1;
                let vhat = v / bc2;
                *w = *w - lr * mhat / (vhat.sqrt() + self.eps);
            });
            p.zero_grad();
        }
    }
}

/// Uniform fan-in initialization: `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
fn fan_in_uniform<F: Element>(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> ArrayD<F> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    ArrayD::from_shape_simple_fn(IxDyn(shape), || F::f(rng.random_range(-bound..bound)))
}

/// Fully connected layer; weight stored `[in, out]` so forward is one matmul.
#[derive(Debug, Clone)]
pub struct Linear<F: Element> {
    pub w: Param<F>,
    pub b: Param<F>,
}

impl<F: Element> Linear<F> {
    pub fn new(name: &str, in_features: usize, out_features: usize, rng: &mut impl Rng) -> Self {
        Linear {
            w: Param::new(format!("{name}.weight"), fan_in_uniform(&[in_features, out_features], in_features, rng)),
            b: Param::new(format!("{name}.bias"), fan_in_uniform(&[out_features], in_features, rng)),
        }
    }

    pub fn forward(&mut self, tape: &mut Tape<F>, x: Var) -> Var {
        let w = self.w.push(tape);
        let b = self.b.push(tape);
        let y = tape.matmul(x, w);
        tape.add_bias(y, b)
    }

    pub fn params(&mut self) -> Vec<&mut Param<F>> {
        vec![&mut self.w, &mut self.b]
    }
}

/// 1-d convolution, stride 1, no padding.
#[derive(Debug, Clone)]
pub struct Conv1d<F: Element> {
    pub w: Param<F>,
    pub b: Param<F>,
}

impl<F: Element> Conv1d<F> {
    pub fn new(name: &str, in_ch: usize, out_ch: usize, kernel: usize, rng: &mut impl Rng) -> Self {
        let fan_in = in_ch * kernel;
        Conv1d {
            w: Param::new(format!("{name}.weight"), fan_in_uniform(&[out_ch, in_ch, kernel], fan_in, rng)),
            b: Param::new(format!("{name}.bias"), fan_in_uniform(&[out_ch], fan_in, rng)),
        }
    }

    pub fn forward(&mut self, tape: &mut Tape<F>, x: Var) -> Var {
        let w = self.w.push(tape);
        let b = self.b.push(tape);
        let y = tape.conv1d(x, w);
        tape.add_bias_channels(y, b)
    }

    pub fn params(&mut self) -> Vec<&mut Param<F>> {
        vec![&mut self.w, &mut self.b]
    }
}

/// Batch normalization over the channel axis of `[b, c, l]`.
///
/// Batch statistics use the population variance; running statistics follow
/// `running = (1 - momentum) * running + momentum * batch`.
#[derive(Debug, Clone)]
pub struct BatchNorm1d<F: Element> {
    pub gamma: Param<F>,
    pub beta: Param<F>,
    pub running_mean: Array1<F>,
    pub running_var: Array1<F>,
    pub momentum: F,
    pub eps: F,
}

impl<F: Element> BatchNorm1d<F> {
    pub fn new(name: &str, channels: usize) -> Self {
        BatchNorm1d {
            gamma: Param::new(format!("{name}.gamma"), ArrayD::ones(IxDyn(&[channels]))),
            beta: Param::new(format!("{name}.beta"), ArrayD::zeros(IxDyn(&[channels]))),
            running_mean: Array1::zeros(channels),
            running_var: Array1::ones(channels),
            momentum: F::f(0.1),
            eps: F::f(1e-5),
        }
    }

    pub fn forward(&mut self, tape: &mut Tape<F>, x: Var, mode: Mode) -> Var {
        let gamma = self.gamma.push(tape);
        let beta = self.beta.push(tape);
        let (y, batch_mean, batch_var) = tape.batchnorm1d(
            x,
            gamma,
            beta,
            (&self.running_mean, &self.running_var),
            self.eps,
            mode.batch_stats(),
        );
        if mode.batch_stats() {
            let m = self.momentum;
            ndarray::Zip::from(&mut self.running_mean).and(&batch_mean).for_each(|r, &b| {
                *r = (F::one() - m) * *r + m * b;
            });
            ndarray::Zip::from(&mut self.running_var).and(&batch_var).for_each(|r, &b| {
                *r = (F::one() - m) * *r + m * b;
            });
        }
        y
    }

    pub fn params(&mut self) -> Vec<&mut Param<F>> {
        vec![&mut self.gamma, &mut self.beta]
    }

    pub fn statistics(&self) -> (Array1<F>, Array1<F>) {
        (self.running_mean.clone(), self.running_var.clone())
    }

    pub fn set_statistics(&mut self, mean: Array1<F>, var: Array1<F>) -> crate::Result<()> {
        if mean.len() != self.running_mean.len() || var.len() != self.running_var.len() {
            return Err(crate::Error::Shape(format!(
                "batch-norm statistics for {} expect {} channels, got {}/{}",
                self.gamma.name,
                self.running_mean.len(),
                mean.len(),
                var.len()
            )));
        }
        self.running_mean = mean;
        self.running_var = var;
        Ok(())
    }
}

/// Inverted dropout; a no-op outside [`Mode::Train`].
#[derive(Debug, Clone)]
pub struct Dropout {
    pub p: f64,
}

impl Dropout {
    pub fn new(p: f64) -> Self {
        Dropout { p }
    }

    pub fn forward<F: Element>(&self, tape: &mut Tape<F>, x: Var, mode: Mode, rng: &mut impl Rng) -> Var {
        if !mode.train() || self.p == 0.0 {
            return x;
        }
        let keep = 1.0 - self.p;
        let scale = F::f(1.0 / keep);
        let mask = ArrayD::from_shape_simple_fn(tape.val(x).raw_dim(), || {
            if rng.random_range(0.0..1.0) < keep {
                scale
            } else {
                F::zero()
            }
        });
        let mask = tape.leaf(mask);
        tape.mul(x, mask)
    }
}
