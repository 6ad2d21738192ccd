//! Evidence lower bound and the training loss.
//!
//! For a clean sequence `x` on grid `0 = t(0) < ... < t(T) = 1`:
//!
//! ```text
//! ELBO = E[log p(x | x_{t(1)})]                      reconstruction
//!      - sum_{i=2..T} E_{x_{t(i)}}[KL(true reverse || model reverse)]
//!      - KL(p(x_{t(T)} | x) || q_1)                  prior term, 0 when gamma(1) = 0
//! ```
//!
//! Positions are treated independently given `x_t`, so each KL is a sum over
//! positions.

use alloc::vec;
use alloc::vec::Vec;

use crate::data::ToyDataset;
use crate::denoiser::DenoiserParams;
use crate::error::{Error, Result};
use crate::kernel::{check_index, sample_with_uniform, PosteriorWeights, Simplex};
use crate::predictor::Predictor;
use crate::rng::{component, Rng};
use crate::schedule::{GammaSchedule, LambdaSchedule, StepGrid};

/// Probabilities are floored here before taking logs.
pub const LOG_FLOOR: f64 = 1e-300;

/// Default Monte-Carlo draws per ELBO term.
pub const DEFAULT_MC: usize = 8;

#[inline]
fn ln_floor(p: f64) -> f64 {
    libm::log(p.max(LOG_FLOOR))
}

/// `KL(p || q)` on raw probability slices.
pub fn kl_slices(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Shape("KL between vectors of different length"));
    }
    let mut kl = 0.0;
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi > 0.0 {
            if qi <= 0.0 {
                return Err(Error::Support { category: i });
            }
            kl += pi * (ln_floor(pi) - ln_floor(qi));
        }
    }
    Ok(kl.max(0.0))
}

/// `KL(p || q) = sum_i p_i (log p_i - log q_i)`, in nats.
pub fn kl_categorical(p: &Simplex, q: &Simplex) -> Result<f64> {
    kl_slices(p.probs(), q.probs())
}

/// KL between the true and the model reverse transition for one token.
pub fn diffusion_loss_term(
    gamma_s: f64,
    gamma_t: f64,
    lambda: f64,
    x_t: usize,
    x: usize,
    prior: &Simplex,
    x_theta: &Simplex,
) -> Result<f64> {
    let weights = PosteriorWeights::new(gamma_s, gamma_t, lambda)?;
    token_kl(&weights, x_t, x, prior.probs(), x_theta.probs())
}

fn token_kl(
    weights: &PosteriorWeights,
    x_t: usize,
    x: usize,
    prior: &[f64],
    x_theta: &[f64],
) -> Result<f64> {
    let k = prior.len();
    if x_theta.len() != k {
        return Err(Error::Shape("prediction and prior have different K"));
    }
    check_index(x_t, k)?;
    check_index(x, k)?;
    let mut truth = vec![0.0; k];
    let mut model = vec![0.0; k];
    weights.posterior_into(x_t, prior, x, &mut truth);
    weights.mix_into(x_t, prior, x_theta, &mut model);
    kl_slices(&truth, &model)
}

/// Token KL and its gradient with respect to the softmax logits that
/// produced `x_theta`; the gradient times `scale` is written to `dlogits`.
fn token_kl_with_logit_grad(
    weights: &PosteriorWeights,
    x_t: usize,
    x: usize,
    prior: &[f64],
    x_theta: &[f64],
    scale: f64,
    dlogits: &mut [f64],
) -> Result<f64> {
    let k = prior.len();
    let mut truth = vec![0.0; k];
    let mut model = vec![0.0; k];
    weights.posterior_into(x_t, prior, x, &mut truth);
    weights.mix_into(x_t, prior, x_theta, &mut model);
    let loss = kl_slices(&truth, &model)?;

    // dL/dx_theta_j = -w_flip p_j / r_j, then through the softmax Jacobian
    let mut g = vec![0.0; k];
    for j in 0..k {
        if truth[j] > 0.0 {
            g[j] = -weights.w_flip() * truth[j] / model[j].max(LOG_FLOOR);
        }
    }
    let mean: f64 = g.iter().zip(x_theta).map(|(a, b)| a * b).sum();
    for j in 0..k {
        dlogits[j] = scale * x_theta[j] * (g[j] - mean);
    }
    Ok(loss)
}

/// One training example: clean `x`, its noisy version `x_t` at time `t`, and
/// the target time `s < t`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub x_t: Vec<usize>,
    pub x: Vec<usize>,
    pub s: f64,
    pub t: f64,
}

impl TrainingExample {
    /// Draws `t ~ U(dt, 1)`, `s = t - dt` and `x_t` from the marginal at `t`.
    pub fn draw(
        x: &[usize],
        dt: f64,
        schedule: GammaSchedule,
        prior: &Simplex,
        rng: &mut Rng,
    ) -> Result<Self> {
        Self::draw_warped(x, dt, 1.0, schedule, prior, rng)
    }

    /// As [`draw`](Self::draw) on the clock `u`, mapped to time by `t = u^rho`:
    /// `u ~ U(dt, 1)`, `t = u^rho`, `s = (u - dt)^rho`. Matches the spacing of a
    /// sampling grid built with the same `rho`; `rho = 1` is plain `draw`.
    pub fn draw_warped(
        x: &[usize],
        dt: f64,
        rho: f64,
        schedule: GammaSchedule,
        prior: &Simplex,
        rng: &mut Rng,
    ) -> Result<Self> {
        if !(dt > 0.0 && dt <= 1.0) {
            return Err(Error::Domain("dt must lie in (0, 1]"));
        }
        if !(rho >= 1.0 && rho.is_finite()) {
            return Err(Error::Domain("rho must be finite and at least 1"));
        }
        let u = if dt >= 1.0 { 1.0 } else { rng.uniform(dt, 1.0) };
        let lo = (u - dt).max(0.0);
        let (s, t) = if rho == 1.0 {
            (lo, u)
        } else {
            (libm::pow(lo, rho), libm::pow(u, rho))
        };
        let x_t = draw_marginal(x, schedule.gamma_at(t)?, prior, rng)?;
        Ok(Self {
            x_t,
            x: x.to_vec(),
            s,
            t,
        })
    }
}

/// Per-position draw from `(1 - gamma) prior + gamma e_{x^l}`.
pub fn draw_marginal(x: &[usize], gamma: f64, prior: &Simplex, rng: &mut Rng) -> Result<Vec<usize>> {
    let k = prior.len();
    let mut row = vec![0.0; k];
    x.iter()
        .map(|&c| {
            check_index(c, k)?;
            for (r, q) in row.iter_mut().zip(prior.probs()) {
                *r = (1.0 - gamma) * q;
            }
            row[c] += gamma;
            Ok(sample_with_uniform(&row, rng.next_f64()))
        })
        .collect()
}

fn example_weights(
    ex: &TrainingExample,
    schedule: GammaSchedule,
    lambda: f64,
) -> Result<PosteriorWeights> {
    PosteriorWeights::new(schedule.gamma_at(ex.s)?, schedule.gamma_at(ex.t)?, lambda)
}

/// Mean per-token diffusion KL of one example under `predictor`.
pub fn example_loss(
    ex: &TrainingExample,
    schedule: GammaSchedule,
    lambda: f64,
    prior: &Simplex,
    predictor: &dyn Predictor,
) -> Result<f64> {
    let k = prior.len();
    let l = ex.x.len();
    if ex.x_t.len() != l {
        return Err(Error::Shape("x and x_t differ in length"));
    }
    let weights = example_weights(ex, schedule, lambda)?;
    let mut pred = vec![0.0; k * l];
    predictor.predict_into(&ex.x_t, ex.t, &mut pred)?;
    let mut total = 0.0;
    for pos in 0..l {
        total += token_kl(
            &weights,
            ex.x_t[pos],
            ex.x[pos],
            prior.probs(),
            &pred[pos * k..(pos + 1) * k],
        )?;
    }
    Ok(total / l as f64)
}

/// Mean over the batch of [`example_loss`].
pub fn training_loss(
    batch: &[TrainingExample],
    schedule: GammaSchedule,
    lambda: f64,
    prior: &Simplex,
    predictor: &dyn Predictor,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Domain("empty batch"));
    }
    let mut sum = 0.0;
    for ex in batch {
        sum += example_loss(ex, schedule, lambda, prior, predictor)?;
    }
    Ok(sum / batch.len() as f64)
}

/// [`example_loss`] for the MLP, adding `scale` times its parameter gradient
/// into `grads`.
pub fn example_loss_and_grad(
    ex: &TrainingExample,
    schedule: GammaSchedule,
    lambda: f64,
    prior: &Simplex,
    params: &DenoiserParams,
    scale: f64,
    grads: &mut [f64],
) -> Result<f64> {
    let k = prior.len();
    let l = ex.x.len();
    if params.categories() != k || params.positions() != l || ex.x_t.len() != l {
        return Err(Error::Shape("example does not match the denoiser layout"));
    }
    let weights = example_weights(ex, schedule, lambda)?;
    let acts = params.activations(&ex.x_t, ex.t)?;
    let mut pred = vec![0.0; k * l];
    params.probabilities_into(&acts, &mut pred);
    let mut upstream = vec![0.0; k * l];
    let token_scale = scale / l as f64;
    let mut total = 0.0;
    for pos in 0..l {
        let range = pos * k..(pos + 1) * k;
        total += token_kl_with_logit_grad(
            &weights,
            ex.x_t[pos],
            ex.x[pos],
            prior.probs(),
            &pred[range.clone()],
            token_scale,
            &mut upstream[range],
        )?;
    }
    params.accumulate_backward(&ex.x_t, &acts, &upstream, grads)?;
    Ok(total / l as f64)
}

/// Batch loss and its gradient, accumulated in batch order.
pub fn training_loss_and_grad(
    batch: &[TrainingExample],
    schedule: GammaSchedule,
    lambda: f64,
    prior: &Simplex,
    params: &DenoiserParams,
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::Domain("empty batch"));
    }
    let scale = 1.0 / batch.len() as f64;
    let mut grads = vec![0.0; params.len()];
    let mut sum = 0.0;
    for ex in batch {
        sum += example_loss_and_grad(ex, schedule, lambda, prior, params, scale, &mut grads)?;
    }
    Ok((sum * scale, grads))
}

/// Monte-Carlo ELBO estimate for one sequence, in nats.
#[derive(Debug, Clone, PartialEq)]
pub struct ElboReport {
    /// `E[log p(x | x_{t(1)})]`.
    pub reconstruction: f64,
    /// `E[L_diff^(i)]` for `i = 2..=T`, in that order.
    pub diffusion_terms: Vec<f64>,
    pub prior_kl: f64,
    /// `reconstruction - sum(diffusion_terms) - prior_kl`.
    pub total: f64,
    /// Standard error of `total`; `None` with a single draw per term.
    pub std_error: Option<f64>,
}

struct Moments {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn new() -> Self {
        Self {
            n: 0,
            mean: 0.0,
            m2: 0.0,
        }
    }

    // Welford
    fn push(&mut self, v: f64) {
        self.n += 1;
        let d = v - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (v - self.mean);
    }

    fn variance_of_mean(&self) -> Option<f64> {
        (self.n > 1).then(|| self.m2 / (self.n - 1) as f64 / self.n as f64)
    }
}

/// ELBO of `x`. Term `i` draws `n_mc` independent `x_{t(i)}` from the
/// marginal using substream `rng.substream(i)`.
#[allow(clippy::too_many_arguments)]
pub fn elbo(
    x: &[usize],
    grid: &StepGrid,
    schedule: GammaSchedule,
    lambda: &LambdaSchedule,
    prior: &Simplex,
    predictor: &dyn Predictor,
    rng: &Rng,
    n_mc: usize,
) -> Result<ElboReport> {
    if n_mc == 0 {
        return Err(Error::Domain("n_mc must be at least 1"));
    }
    lambda.validate()?;
    let k = prior.len();
    let l = x.len();
    if predictor.categories() != k || predictor.positions() != l {
        return Err(Error::Shape("sequence does not match the predictor layout"));
    }
    for &c in x {
        check_index(c, k)?;
    }
    let steps = grid.steps();
    let mut pred = vec![0.0; k * l];
    let mut model = vec![0.0; k];
    let mut truth = vec![0.0; k];

    let mut reconstruction = 0.0;
    let mut diffusion_terms = Vec::with_capacity(steps.saturating_sub(1));
    let mut variance = Some(0.0);

    for i in 1..=steps {
        let (s, t) = grid.step_bounds(i);
        let gamma_t = schedule.gamma_at(t)?;
        let weights = PosteriorWeights::new(schedule.gamma_at(s)?, gamma_t, lambda.lambda_at(t))?;
        let mut step_rng = rng.substream(i as u64);
        let mut moments = Moments::new();
        for _ in 0..n_mc {
            let x_t = draw_marginal(x, gamma_t, prior, &mut step_rng)?;
            predictor.predict_into(&x_t, t, &mut pred)?;
            let mut value = 0.0;
            for pos in 0..l {
                let x_theta = &pred[pos * k..(pos + 1) * k];
                if i == 1 {
                    weights.mix_into(x_t[pos], prior.probs(), x_theta, &mut model);
                    value += ln_floor(model[x[pos]]);
                } else {
                    weights.posterior_into(x_t[pos], prior.probs(), x[pos], &mut truth);
                    weights.mix_into(x_t[pos], prior.probs(), x_theta, &mut model);
                    value += kl_slices(&truth, &model)?;
                }
            }
            moments.push(value);
        }
        variance = variance.and_then(|acc| moments.variance_of_mean().map(|v| acc + v));
        if i == 1 {
            reconstruction = moments.mean;
        } else {
            diffusion_terms.push(moments.mean.max(0.0));
        }
    }

    // KL(m_1(. | x) || q_1) per position, closed form
    let gamma_one = schedule.gamma_at(1.0)?;
    let mut prior_kl = 0.0;
    for &c in x {
        for (m, q) in model.iter_mut().zip(prior.probs()) {
            *m = (1.0 - gamma_one) * q;
        }
        model[c] += gamma_one;
        prior_kl += kl_slices(&model, prior.probs())?;
    }

    let total = reconstruction - diffusion_terms.iter().sum::<f64>() - prior_kl;
    if !total.is_finite() {
        return Err(Error::NonFinite("ELBO"));
    }
    Ok(ElboReport {
        reconstruction,
        diffusion_terms,
        prior_kl,
        total,
        std_error: variance.map(libm::sqrt),
    })
}

/// Negative ELBO per token, averaged over `dataset`. Sample `j` uses the
/// substream `(seed, ELBO, j)`; results are summed in dataset order.
#[allow(clippy::too_many_arguments)]
pub fn nll_metric(
    dataset: &ToyDataset,
    grid: &StepGrid,
    schedule: GammaSchedule,
    lambda: &LambdaSchedule,
    prior: &Simplex,
    predictor: &dyn Predictor,
    seed: u64,
    n_mc: usize,
) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::Domain("empty dataset"));
    }
    let mut sum = 0.0;
    for (j, x) in dataset.samples.iter().enumerate() {
        let rng = Rng::derive(seed, component::ELBO, j as u64, 0);
        sum += -elbo(x, grid, schedule, lambda, prior, predictor, &rng, n_mc)?.total;
    }
    Ok(sum / (dataset.len() * dataset.l) as f64)
}
