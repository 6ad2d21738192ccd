//! Training loop: draw clean samples, corrupt them to a random time, and take
//! an optimizer step on the diffusion loss.

use iddm_core::data::ToyDataset;
use iddm_core::denoiser::{Adam, DenoiserParams, Optimizer, Sgd};
use iddm_core::objective::{example_loss_and_grad, TrainingExample};
use iddm_core::rng::{component, Rng};
use iddm_core::Simplex;
use rayon::prelude::*;

use crate::config::{OptimizerKind, RunConfig};
use crate::error::{CliError, Result};

/// Examples per gradient work unit. Fixed so the reduction order does not
/// depend on the thread count.
pub const GRAD_CHUNK: usize = 8;

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: DenoiserParams,
    /// Batch loss before each update, in nats per token.
    pub losses: Vec<f64>,
}

/// Minibatch for `step`; example `j` uses substream `(train_seed, TRAIN, step, j)`.
pub fn draw_batch(
    cfg: &RunConfig,
    data: &ToyDataset,
    prior: &Simplex,
    step: usize,
) -> Result<Vec<TrainingExample>> {
    (0..cfg.batch)
        .map(|j| {
            let mut rng = Rng::derive(cfg.train_seed, component::TRAIN, step as u64, j as u64);
            let x = &data.samples[rng.below(data.len())];
            Ok(TrainingExample::draw_warped(
                x,
                cfg.dt(),
                cfg.time_warp(),
                cfg.gamma,
                prior,
                &mut rng,
            )?)
        })
        .collect()
}

/// Mean loss and gradient over `batch`, evaluated in parallel chunks and
/// summed in chunk order.
pub fn batch_loss_and_grad(
    batch: &[TrainingExample],
    cfg: &RunConfig,
    prior: &Simplex,
    params: &DenoiserParams,
) -> Result<(f64, Vec<f64>)> {
    let scale = 1.0 / batch.len() as f64;
    let parts: Vec<iddm_core::Result<(f64, Vec<f64>)>> = batch
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut grads = vec![0.0; params.len()];
            let mut loss = 0.0;
            for ex in chunk {
                loss += example_loss_and_grad(ex, cfg.gamma, cfg.lambda, prior, params, scale, &mut grads)?;
            }
            Ok((loss, grads))
        })
        .collect();
    let mut total = 0.0;
    let mut grads = vec![0.0; params.len()];
    for part in parts {
        let (loss, g) = part?;
        total += loss;
        for (a, b) in grads.iter_mut().zip(&g) {
            *a += b;
        }
    }
    Ok((total * scale, grads))
}

/// Runs `cfg.train_steps` updates from a fresh initialization. `log` is
/// called every `log_every` steps and after the last one.
pub fn train(cfg: &RunConfig, log: &mut dyn FnMut(usize, f64)) -> Result<TrainOutcome> {
    cfg.validate()?;
    let data = cfg.training_data()?;
    let prior = cfg.prior_simplex(&data)?;
    let mut params = DenoiserParams::init(
        cfg.train_seed,
        cfg.categories(),
        cfg.length(),
        cfg.hidden,
        cfg.time_dim,
    )?;
    let mut optimizer: Box<dyn Optimizer> = match cfg.optimizer {
        OptimizerKind::Sgd => Box::new(Sgd::new(cfg.lr)?),
        OptimizerKind::Adam => Box::new(Adam::new(cfg.lr, 0.9, 0.999)?),
    };
    let mut losses = Vec::with_capacity(cfg.train_steps);
    for step in 0..cfg.train_steps {
        let batch = draw_batch(cfg, &data, &prior, step)?;
        let (loss, grads) = batch_loss_and_grad(&batch, cfg, &prior, &params)?;
        if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            return Err(CliError::Diverged { step, loss });
        }
        losses.push(loss);
        if (cfg.log_every > 0 && step % cfg.log_every == 0) || step + 1 == cfg.train_steps {
            log(step, loss);
        }
        optimizer.set_learning_rate(cfg.lr_schedule.rate(cfg.lr, step, cfg.train_steps));
        optimizer.step(&mut params, &grads)?;
    }
    if !params.is_finite() {
        return Err(CliError::Diverged {
            step: cfg.train_steps,
            loss: f64::NAN,
        });
    }
    Ok(TrainOutcome { params, losses })
}
