//! Command implementations, independent of argument parsing.

use std::fmt::Write as _;

use iddm_core::data::{empirical_joint, generate, tv_distance, ToyDataset};
use iddm_core::denoiser::DenoiserParams;
use iddm_core::objective::elbo;
use iddm_core::oracle::{CheckReport, VerifyOptions, ALL_CHECKS};
use iddm_core::rng::{component, Rng};
use iddm_core::sampler::{sample_chain, SamplerConfig};
use iddm_core::schedule::{build_grid, LambdaSchedule, StepGrid};
use iddm_core::{Predictor, Simplex};
use rayon::prelude::*;

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::error::{CliError, Result};

/// Runs every oracle check, cases in parallel, and reports whether all passed.
pub fn verify(opts: &VerifyOptions) -> (Vec<CheckReport>, bool) {
    let reports: Vec<CheckReport> = ALL_CHECKS
        .iter()
        .map(|check| {
            let outcomes: Vec<_> = (0..check.cases(opts))
                .into_par_iter()
                .map(|i| check.run_case(opts, i))
                .collect();
            check.report(opts, &outcomes)
        })
        .collect();
    let ok = reports.iter().all(|r| r.passed);
    (reports, ok)
}

pub fn format_verify_report(reports: &[CheckReport]) -> String {
    let mut s = String::from("# check\tcases\trejected\tmax_deviation\tthreshold\tstatus\n");
    for r in reports {
        let _ = write!(
            s,
            "{}\t{}\t{}\t{:.3e}\t{:.0e}\t{}",
            r.name,
            r.cases,
            r.rejected,
            r.max_deviation,
            r.threshold,
            if r.passed { "PASS" } else { "FAIL" }
        );
        if let Some(e) = &r.error {
            let _ = write!(s, "\t{e}");
        }
        s.push('\n');
    }
    let ok = reports.iter().all(|r| r.passed);
    let _ = writeln!(s, "overall\t{}", if ok { "PASS" } else { "FAIL" });
    s
}

/// A trained denoiser with the prior it was trained against.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: RunConfig,
    pub params: DenoiserParams,
    pub prior: Simplex,
}

impl Model {
    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        let prior = match ckpt.config.prior {
            crate::config::PriorKind::Uniform => Simplex::uniform(ckpt.config.categories())?,
            crate::config::PriorKind::Marginal => {
                ckpt.config.prior_simplex(&ckpt.config.training_data()?)?
            }
        };
        Ok(Self {
            config: ckpt.config,
            params: ckpt.params,
            prior,
        })
    }

    pub fn categories(&self) -> usize {
        self.params.categories()
    }

    pub fn positions(&self) -> usize {
        self.params.positions()
    }

    fn check_data(&self, data: &ToyDataset) -> Result<()> {
        if (data.k, data.l) != (self.categories(), self.positions()) {
            return Err(CliError::Dims(format!(
                "data has (K, L) = ({}, {}), model expects ({}, {})",
                data.k,
                data.l,
                self.categories(),
                self.positions()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRun {
    pub samples: Vec<Vec<usize>>,
    pub transitions: Vec<usize>,
}

impl SampleRun {
    /// Mean state changes per chain; zero for an empty run.
    pub fn mean_transitions(&self) -> f64 {
        if self.transitions.is_empty() {
            0.0
        } else {
            self.transitions.iter().sum::<usize>() as f64 / self.transitions.len() as f64
        }
    }
}

/// Chains `0..n`, generated in parallel and returned in chain order.
pub fn sample_chains(
    prior: &Simplex,
    predictor: &(dyn Predictor + Sync),
    grid: &StepGrid,
    model_cfg: &RunConfig,
    lambda: f64,
    n: usize,
    seed: u64,
) -> Result<SampleRun> {
    let config = SamplerConfig::new(
        grid.clone(),
        model_cfg.gamma,
        LambdaSchedule::constant(lambda)?,
        prior.clone(),
        seed,
    )?;
    let chains: Vec<_> = (0..n as u64)
        .into_par_iter()
        .map(|c| sample_chain(&config, predictor, c, false))
        .collect::<iddm_core::Result<_>>()?;
    let (samples, transitions) = chains.into_iter().map(|c| (c.sample, c.transitions)).unzip();
    Ok(SampleRun {
        samples,
        transitions,
    })
}

pub fn sample(model: &Model, n: usize, lambda: f64, rho: f64, steps: usize, seed: u64) -> Result<SampleRun> {
    let grid = build_grid(steps, rho)?;
    sample_chains(&model.prior, &model.params, &grid, &model.config, lambda, n, seed)
}

/// Negative ELBO per token over `data`; sample `j` uses substream
/// `(seed, ELBO, j)` and the sum runs in dataset order.
#[allow(clippy::too_many_arguments)]
pub fn nats_per_token(
    prior: &Simplex,
    predictor: &(dyn Predictor + Sync),
    grid: &StepGrid,
    model_cfg: &RunConfig,
    lambda: f64,
    data: &ToyDataset,
    n_mc: usize,
    seed: u64,
) -> Result<f64> {
    if data.is_empty() {
        return Err(CliError::Invalid("ELBO of an empty dataset".into()));
    }
    let lam = LambdaSchedule::constant(lambda)?;
    let totals: Vec<f64> = data
        .samples
        .par_iter()
        .enumerate()
        .map(|(j, x)| {
            let rng = Rng::derive(seed, component::ELBO, j as u64, 0);
            elbo(x, grid, model_cfg.gamma, &lam, prior, predictor, &rng, n_mc).map(|r| -r.total)
        })
        .collect::<iddm_core::Result<_>>()?;
    let sum: f64 = totals.iter().sum();
    Ok(sum / (data.len() * data.l) as f64)
}

/// `(nats per token, perplexity)` of `data` under the model on the grid
/// `t(i) = (i / steps)^rho`.
pub fn elbo_metric(
    model: &Model,
    data: &ToyDataset,
    lambda: f64,
    rho: f64,
    steps: usize,
    n_mc: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    model.check_data(data)?;
    let grid = build_grid(steps, rho)?;
    let nats = nats_per_token(&model.prior, &model.params, &grid, &model.config, lambda, data, n_mc, seed)?;
    Ok((nats, nats.exp()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub lambda: f64,
    pub rho: f64,
    pub steps: usize,
    pub tv_to_data: f64,
    pub mean_transitions: f64,
    pub nats_per_token: f64,
}

pub const SWEEP_HEADER: &str = "# lambda\trho\tsteps\ttv_to_data\tmean_transitions\tnats_per_token";

/// One row per `(lambda, rho, steps)`, lambdas outermost. Each cell draws `n`
/// chains and scores `n` fresh data samples, all from `seed`.
pub fn sweep(
    model: &Model,
    lambdas: &[f64],
    rhos: &[f64],
    steps: &[usize],
    n: usize,
    n_mc: usize,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    if n == 0 {
        return Err(CliError::Invalid("sweep needs at least one sample per cell".into()));
    }
    let truth = model.config.dataset.joint_table()?;
    let eval = generate(&model.config.dataset, n, seed)?;
    model.check_data(&eval)?;
    let mut rows = Vec::new();
    for &lambda in lambdas {
        for &rho in rhos {
            for &t in steps {
                let grid = build_grid(t, rho)?;
                let run = sample_chains(&model.prior, &model.params, &grid, &model.config, lambda, n, seed)?;
                let joint = empirical_joint(&run.samples, model.categories(), model.positions())?;
                let nats = nats_per_token(
                    &model.prior,
                    &model.params,
                    &grid,
                    &model.config,
                    lambda,
                    &eval,
                    n_mc,
                    seed,
                )?;
                rows.push(SweepRow {
                    lambda,
                    rho,
                    steps: t,
                    tv_to_data: tv_distance(&joint, &truth)?,
                    mean_transitions: run.mean_transitions(),
                    nats_per_token: nats,
                });
            }
        }
    }
    Ok(rows)
}

pub fn format_sweep(rows: &[SweepRow]) -> String {
    let mut s = format!("{SWEEP_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}",
            r.lambda, r.rho, r.steps, r.tv_to_data, r.mean_transitions, r.nats_per_token
        );
    }
    s
}
