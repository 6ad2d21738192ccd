//! The trainable predictor: a two-hidden-layer tanh MLP over the flattened
//! one-hot sequence and a sinusoidal time embedding, with a softmax head per
//! position. Gradients are computed by hand.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::kernel::Simplex;
use crate::predictor::{check_input, Predictor};
use crate::rng::{component, Rng};

/// `[sin(w_j t)..., cos(w_j t)...]` with `w_j` geometric from 1 to 100.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeEmbedding {
    dim: usize,
}

impl TimeEmbedding {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 || dim % 2 != 0 {
            return Err(Error::Shape("time embedding dimension must be even and positive"));
        }
        Ok(Self { dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frequency(&self, j: usize) -> f64 {
        let half = self.dim / 2;
        if half == 1 {
            1.0
        } else {
            libm::pow(100.0, j as f64 / (half - 1) as f64)
        }
    }

    pub fn embed_into(&self, t: f64, out: &mut [f64]) {
        let half = self.dim / 2;
        for j in 0..half {
            let arg = self.frequency(j) * t;
            out[j] = libm::sin(arg);
            out[half + j] = libm::cos(arg);
        }
    }
}

/// Parameters of the MLP, stored flat in the order
/// `w1 (H x D), b1 (H), w2 (H x H), b2 (H), w3 (LK x H), b3 (LK)` with
/// `D = L*K + time_dim`, matrices row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserParams {
    k: usize,
    l: usize,
    hidden: usize,
    embedding: TimeEmbedding,
    values: Vec<f64>,
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct Activations {
    emb: Vec<f64>,
    h1: Vec<f64>,
    h2: Vec<f64>,
    logits: Vec<f64>,
}

impl Activations {
    pub fn logits(&self) -> &[f64] {
        &self.logits
    }
}

struct Layout {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w3: usize,
    b3: usize,
    end: usize,
}

impl DenoiserParams {
    /// Hidden layers uniform in `+-1/sqrt(fan_in)`, output head zero, so the
    /// fresh model predicts the uniform distribution everywhere.
    pub fn init(seed: u64, k: usize, l: usize, hidden: usize, time_dim: usize) -> Result<Self> {
        let mut params = Self::zeros(k, l, hidden, time_dim)?;
        let lay = params.layout();
        let mut rng = Rng::derive(seed, component::INIT, 0, 0);
        let in_dim = params.input_dim();
        let b_in = 1.0 / libm::sqrt(in_dim as f64);
        let b_hid = 1.0 / libm::sqrt(hidden as f64);
        for v in &mut params.values[lay.w1..lay.w2] {
            *v = rng.uniform(-b_in, b_in);
        }
        for v in &mut params.values[lay.w2..lay.w3] {
            *v = rng.uniform(-b_hid, b_hid);
        }
        Ok(params)
    }

    pub fn zeros(k: usize, l: usize, hidden: usize, time_dim: usize) -> Result<Self> {
        if k == 0 || l == 0 || hidden == 0 {
            return Err(Error::Shape("K, L and hidden width must be positive"));
        }
        let embedding = TimeEmbedding::new(time_dim)?;
        let mut p = Self {
            k,
            l,
            hidden,
            embedding,
            values: Vec::new(),
        };
        p.values = vec![0.0; p.layout().end];
        Ok(p)
    }

    pub fn from_values(
        k: usize,
        l: usize,
        hidden: usize,
        time_dim: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        let mut p = Self::zeros(k, l, hidden, time_dim)?;
        if values.len() != p.values.len() {
            return Err(Error::Shape("parameter vector has the wrong length"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("parameter"));
        }
        p.values = values;
        Ok(p)
    }

    /// Replaces the output head with uniform noise in `+-scale`; gives
    /// non-trivial models for tests and gradient checks.
    pub fn randomize_head(&mut self, rng: &mut Rng, scale: f64) {
        let lay = self.layout();
        for v in &mut self.values[lay.w3..lay.end] {
            *v = rng.uniform(-scale, scale);
        }
    }

    fn layout(&self) -> Layout {
        let d = self.input_dim();
        let h = self.hidden;
        let o = self.k * self.l;
        let w1 = 0;
        let b1 = w1 + h * d;
        let w2 = b1 + h;
        let b2 = w2 + h * h;
        let w3 = b2 + h;
        let b3 = w3 + o * h;
        Layout {
            w1,
            b1,
            w2,
            b2,
            w3,
            b3,
            end: b3 + o,
        }
    }

    pub fn categories(&self) -> usize {
        self.k
    }

    pub fn positions(&self) -> usize {
        self.l
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn time_dim(&self) -> usize {
        self.embedding.dim()
    }

    pub fn input_dim(&self) -> usize {
        self.k * self.l + self.embedding.dim()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    fn check_sequence(&self, x_t: &[usize]) -> Result<()> {
        check_input(x_t, self.k, self.l, self.k * self.l)
    }

    /// Forward pass keeping the intermediate values needed by [`backward`](Self::backward).
    pub fn activations(&self, x_t: &[usize], t: f64) -> Result<Activations> {
        self.check_sequence(x_t)?;
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Domain("time must lie in [0, 1]"));
        }
        let lay = self.layout();
        let d = self.input_dim();
        let h = self.hidden;
        let o = self.k * self.l;
        let v = &self.values;

        let mut emb = vec![0.0; self.embedding.dim()];
        self.embedding.embed_into(t, &mut emb);
        let onehot_cols = o;

        let mut h1 = v[lay.b1..lay.b1 + h].to_vec();
        for (i, acc) in h1.iter_mut().enumerate() {
            let row = &v[lay.w1 + i * d..lay.w1 + (i + 1) * d];
            for (pos, &c) in x_t.iter().enumerate() {
                *acc += row[pos * self.k + c];
            }
            *acc += dot(&row[onehot_cols..], &emb);
            *acc = libm::tanh(*acc);
        }

        let mut h2 = v[lay.b2..lay.b2 + h].to_vec();
        for (i, acc) in h2.iter_mut().enumerate() {
            *acc = libm::tanh(*acc + dot(&v[lay.w2 + i * h..lay.w2 + (i + 1) * h], &h1));
        }

        let mut logits = v[lay.b3..lay.b3 + o].to_vec();
        for (i, acc) in logits.iter_mut().enumerate() {
            *acc += dot(&v[lay.w3 + i * h..lay.w3 + (i + 1) * h], &h2);
        }
        Ok(Activations {
            emb,
            h1,
            h2,
            logits,
        })
    }

    /// Per-position softmax of the logits, written position-major into `out`.
    pub fn probabilities_into(&self, acts: &Activations, out: &mut [f64]) {
        for (src, dst) in acts.logits.chunks(self.k).zip(out.chunks_mut(self.k)) {
            softmax_into(src, dst);
        }
    }

    /// One simplex per position.
    pub fn forward(&self, x_t: &[usize], t: f64) -> Result<Vec<Simplex>> {
        self.predict(x_t, t)
    }

    /// Gradient of a scalar loss with respect to every parameter, given the
    /// loss gradient `upstream` on the `L * K` output logits.
    pub fn backward(&self, x_t: &[usize], t: f64, upstream: &[f64]) -> Result<Vec<f64>> {
        let acts = self.activations(x_t, t)?;
        let mut grads = vec![0.0; self.values.len()];
        self.accumulate_backward(x_t, &acts, upstream, &mut grads)?;
        Ok(grads)
    }

    /// Adds the gradient for one example into `grads`.
    pub fn accumulate_backward(
        &self,
        x_t: &[usize],
        acts: &Activations,
        upstream: &[f64],
        grads: &mut [f64],
    ) -> Result<()> {
        let lay = self.layout();
        let d = self.input_dim();
        let h = self.hidden;
        let o = self.k * self.l;
        if upstream.len() != o {
            return Err(Error::Shape("upstream gradient must have L * K entries"));
        }
        if grads.len() != lay.end {
            return Err(Error::Shape("gradient buffer has the wrong length"));
        }
        self.check_sequence(x_t)?;
        let v = &self.values;

        // output layer
        let mut dh2 = vec![0.0; h];
        for (i, &g) in upstream.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grads[lay.b3 + i] += g;
            let row = &v[lay.w3 + i * h..lay.w3 + (i + 1) * h];
            let grow = &mut grads[lay.w3 + i * h..lay.w3 + (i + 1) * h];
            for j in 0..h {
                grow[j] += g * acts.h2[j];
                dh2[j] += g * row[j];
            }
        }

        // second hidden layer
        let mut dh1 = vec![0.0; h];
        for i in 0..h {
            let da = dh2[i] * (1.0 - acts.h2[i] * acts.h2[i]);
            if da == 0.0 {
                continue;
            }
            grads[lay.b2 + i] += da;
            let row = &v[lay.w2 + i * h..lay.w2 + (i + 1) * h];
            let grow = &mut grads[lay.w2 + i * h..lay.w2 + (i + 1) * h];
            for j in 0..h {
                grow[j] += da * acts.h1[j];
                dh1[j] += da * row[j];
            }
        }

        // first hidden layer; the one-hot input touches one column per position
        for i in 0..h {
            let da = dh1[i] * (1.0 - acts.h1[i] * acts.h1[i]);
            if da == 0.0 {
                continue;
            }
            grads[lay.b1 + i] += da;
            let grow = &mut grads[lay.w1 + i * d..lay.w1 + (i + 1) * d];
            for (pos, &c) in x_t.iter().enumerate() {
                grow[pos * self.k + c] += da;
            }
            for (g, e) in grow[o..].iter_mut().zip(&acts.emb) {
                *g += da * e;
            }
        }
        Ok(())
    }

    /// Plain gradient descent: `params - lr * grads`.
    pub fn sgd_step(&self, grads: &[f64], lr: f64) -> Result<Self> {
        let mut next = self.clone();
        Sgd::new(lr)?.step(&mut next, grads)?;
        Ok(next)
    }
}

impl Predictor for DenoiserParams {
    fn categories(&self) -> usize {
        self.k
    }

    fn positions(&self) -> usize {
        self.l
    }

    fn predict_into(&self, x_t: &[usize], t: f64, out: &mut [f64]) -> Result<()> {
        check_input(x_t, self.k, self.l, out.len())?;
        let acts = self.activations(x_t, t)?;
        self.probabilities_into(&acts, out);
        Ok(())
    }
}

// four interleaved partial sums in a fixed order
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = libm::exp(z - max);
        sum += *o;
    }
    out.iter_mut().for_each(|o| *o /= sum);
}

/// Applies a gradient to the parameters in place.
pub trait Optimizer {
    fn step(&mut self, params: &mut DenoiserParams, grads: &[f64]) -> Result<()>;
    fn learning_rate(&self) -> f64;
    /// Used by learning-rate schedules between steps.
    fn set_learning_rate(&mut self, lr: f64);
}

#[derive(Debug, Clone, Copy)]
pub struct Sgd {
    lr: f64,
}

impl Sgd {
    pub fn new(lr: f64) -> Result<Self> {
        if !(lr >= 0.0) || !lr.is_finite() {
            return Err(Error::Domain("learning rate must be finite and nonnegative"));
        }
        Ok(Self { lr })
    }
}

impl Optimizer for Sgd {
    fn learning_rate(&self) -> f64 {
        self.lr
    }

    fn set_learning_rate(&mut self, lr: f64) {
        self.lr = lr;
    }

    fn step(&mut self, params: &mut DenoiserParams, grads: &[f64]) -> Result<()> {
        if grads.len() != params.values.len() {
            return Err(Error::Shape("gradient length differs from parameter count"));
        }
        for (p, g) in params.values.iter_mut().zip(grads) {
            *p -= self.lr * g;
        }
        Ok(())
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    steps: i32,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64) -> Result<Self> {
        if !(lr > 0.0) || !lr.is_finite() {
            return Err(Error::Domain("learning rate must be finite and positive"));
        }
        if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) {
            return Err(Error::Domain("Adam betas must lie in [0, 1)"));
        }
        Ok(Self {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
            m: Vec::new(),
            v: Vec::new(),
            steps: 0,
        })
    }
}

impl Optimizer for Adam {
    fn learning_rate(&self) -> f64 {
        self.lr
    }

    fn set_learning_rate(&mut self, lr: f64) {
        self.lr = lr;
    }

    fn step(&mut self, params: &mut DenoiserParams, grads: &[f64]) -> Result<()> {
        let n = params.values.len();
        if grads.len() != n {
            return Err(Error::Shape("gradient length differs from parameter count"));
        }
        if self.m.len() != n {
            self.m = vec![0.0; n];
            self.v = vec![0.0; n];
            self.steps = 0;
        }
        self.steps += 1;
        let c1 = 1.0 - libm::pow(self.beta1, self.steps as f64);
        let c2 = 1.0 - libm::pow(self.beta2, self.steps as f64);
        for i in 0..n {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params.values[i] -= self.lr * m_hat / (libm::sqrt(v_hat) + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedding_bounds_and_shape() {
        assert!(TimeEmbedding::new(3).is_err());
        assert!(TimeEmbedding::new(0).is_err());
        let e = TimeEmbedding::new(8).unwrap();
        assert_eq!(e.frequency(0), 1.0);
        assert!((e.frequency(3) - 100.0).abs() < 1e-12);
        let mut out = [0.0; 8];
        for i in 0..=20 {
            e.embed_into(i as f64 / 20.0, &mut out);
            assert!(out.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn zero_head_predicts_uniform() {
        let p = DenoiserParams::init(1, 4, 3, 8, 4).unwrap();
        for s in p.forward(&[0, 3, 2], 0.3).unwrap() {
            assert!(s.probs().iter().all(|&v| v == 0.25));
        }
    }

    #[test]
    fn random_params_give_simplexes() {
        let mut p = DenoiserParams::init(2, 3, 2, 16, 4).unwrap();
        p.randomize_head(&mut Rng::new(5), 2.0);
        let out = p.forward(&[2, 1], 0.7).unwrap();
        for s in &out {
            assert!((s.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let again = p.forward(&[2, 1], 0.7).unwrap();
        for (a, b) in out.iter().zip(&again) {
            for (x, y) in a.probs().iter().zip(b.probs()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        assert!(matches!(p.forward(&[2], 0.7), Err(Error::Shape(_))));
        assert!(p.forward(&[2, 3], 0.7).is_err());
    }

    #[test]
    fn init_is_seeded() {
        let a = DenoiserParams::init(7, 3, 2, 8, 4).unwrap();
        let b = DenoiserParams::init(7, 3, 2, 8, 4).unwrap();
        let c = DenoiserParams::init(8, 3, 2, 8, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.values(), c.values());
        let bound = 1.0 / libm::sqrt(a.input_dim() as f64);
        assert!(a.values()[..8 * a.input_dim()].iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let mut p = DenoiserParams::init(3, 3, 2, 8, 4).unwrap();
        p.randomize_head(&mut Rng::new(1), 1.0);
        let g = p.backward(&[0, 1], 0.5, &[0.0; 6]).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_is_linear_in_upstream() {
        let mut p = DenoiserParams::init(3, 3, 2, 8, 4).unwrap();
        p.randomize_head(&mut Rng::new(1), 1.0);
        let up = [0.3, -0.2, 0.1, 0.05, -0.4, 0.7];
        let up2: Vec<f64> = up.iter().map(|v| 2.0 * v).collect();
        let g1 = p.backward(&[2, 0], 0.25, &up).unwrap();
        let g2 = p.backward(&[2, 0], 0.25, &up2).unwrap();
        for (a, b) in g1.iter().zip(&g2) {
            assert!((2.0 * a - b).abs() <= 1e-15 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn sgd_examples() {
        let p = DenoiserParams::from_values(1, 1, 1, 2, vec![1.0; 8]).unwrap();
        // loss |theta|^2 / 2 has gradient theta
        let grads = p.values().to_vec();
        let next = p.sgd_step(&grads, 0.1).unwrap();
        assert!(next.values().iter().all(|&v| v == 0.9));
        assert_eq!(p.sgd_step(&grads, 0.0).unwrap(), p);
        assert!(p.sgd_step(&grads[..3], 0.1).is_err());
        assert!(p.sgd_step(&grads, -1.0).is_err());
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = DenoiserParams::from_values(1, 1, 1, 2, vec![1.0; 8]).unwrap();
        let mut opt = Adam::new(0.01, 0.9, 0.999).unwrap();
        let grads = vec![0.5; 8];
        opt.step(&mut p, &grads).unwrap();
        for v in p.values() {
            assert!((v - 0.99).abs() < 1e-9);
        }
    }

    #[test]
    fn from_values_rejects_bad_input() {
        assert!(DenoiserParams::from_values(1, 1, 1, 2, vec![1.0; 7]).is_err());
        let mut v = vec![0.0; 8];
        v[3] = f64::NAN;
        assert!(matches!(
            DenoiserParams::from_values(1, 1, 1, 2, v),
            Err(Error::NonFinite(_))
        ));
    }
}
