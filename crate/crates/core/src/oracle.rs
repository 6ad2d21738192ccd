//! Brute-force verification by exact enumeration.
//!
//! Everything here works on dense tables over all `K^L` joint states (or all
//! `K^(T+1)` single-token trajectories), so results are exact up to floating
//! point rounding. Checks are split into independent cases, each with its own
//! random substream, so they can be evaluated in any order or in parallel and
//! merged with a max-reduction.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::{decode_joint, encode_joint, joint_size};
use crate::error::{Error, Result};
use crate::kernel::{
    forward_kernel, marginal, posterior, PosteriorWeights, Simplex,
};
use crate::objective::{elbo, LOG_FLOOR};
use crate::predictor::{BayesPredictor, PerfectPredictor, Predictor};
use crate::rng::{component, Rng};
use crate::sampler::expected_transitions_exact;
use crate::schedule::{build_grid, GammaSchedule, LambdaSchedule, StepGrid};

/// Maximum deviation tolerated by every check.
pub const ORACLE_TOLERANCE: f64 = 1e-12;
/// Longest chain [`enumerate_reverse`] accepts.
pub const MAX_ENUMERATION_STEPS: usize = 64;

/// Exact distribution of the reverse chain at every grid time.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainDistribution {
    pub k: usize,
    pub l: usize,
    /// Grid times `t(0..=T)`.
    pub times: Vec<f64>,
    /// `tables[i]` is the joint distribution at `t(i)`.
    pub tables: Vec<Vec<f64>>,
}

impl ChainDistribution {
    /// Distribution of the generated sample (time 0).
    pub fn final_distribution(&self) -> &[f64] {
        &self.tables[0]
    }

    pub fn at(&self, i: usize) -> &[f64] {
        &self.tables[i]
    }

    pub fn steps(&self) -> usize {
        self.tables.len() - 1
    }
}

/// Propagates the product prior through the model reverse chain.
pub fn enumerate_reverse(
    grid: &StepGrid,
    schedule: GammaSchedule,
    lambda: &LambdaSchedule,
    prior: &Simplex,
    predictor: &dyn Predictor,
    k: usize,
    l: usize,
) -> Result<ChainDistribution> {
    enumerate_reverse_with(grid, schedule, lambda, prior, predictor, k, l, &PosteriorWeights::new)
}

type WeightsFn<'a> = dyn Fn(f64, f64, f64) -> Result<PosteriorWeights> + 'a;

#[allow(clippy::too_many_arguments)]
fn enumerate_reverse_with(
    grid: &StepGrid,
    schedule: GammaSchedule,
    lambda: &LambdaSchedule,
    prior: &Simplex,
    predictor: &dyn Predictor,
    k: usize,
    l: usize,
    weights_fn: &WeightsFn<'_>,
) -> Result<ChainDistribution> {
    let size = joint_size(k, l)?;
    let steps = grid.steps();
    if steps > MAX_ENUMERATION_STEPS {
        return Err(Error::Capacity {
            states: steps,
            limit: MAX_ENUMERATION_STEPS,
        });
    }
    if prior.len() != k || predictor.categories() != k || predictor.positions() != l {
        return Err(Error::Shape("prior, predictor and (K, L) disagree"));
    }
    let q = prior.probs();

    let mut seq = vec![0usize; l];
    let mut start = vec![0.0; size];
    for (idx, p) in start.iter_mut().enumerate() {
        decode_joint(idx, k, &mut seq);
        *p = seq.iter().map(|&c| q[c]).product();
    }

    let mut tables = vec![Vec::new(); steps + 1];
    tables[steps] = start;
    let mut pred = vec![0.0; k * l];
    let mut rows = vec![0.0; k * l];
    let mut spread = vec![0.0; size];
    let mut scratch = vec![0.0; size];

    for i in (1..=steps).rev() {
        let (s, t) = grid.step_bounds(i);
        let weights = weights_fn(schedule.gamma_at(s)?, schedule.gamma_at(t)?, lambda.lambda_at(t))?;
        let mut next = vec![0.0; size];
        for (src, &mass) in tables[i].iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            decode_joint(src, k, &mut seq);
            predictor.predict_into(&seq, t, &mut pred)?;
            for pos in 0..l {
                let r = pos * k..(pos + 1) * k;
                weights.mix_into(seq[pos], q, &pred[r.clone()], &mut rows[r]);
            }
            // product over positions, position 0 most significant
            spread[0] = mass;
            let mut len = 1;
            for pos in 0..l {
                let row = &rows[pos * k..(pos + 1) * k];
                for a in 0..len {
                    for (b, &p) in row.iter().enumerate() {
                        scratch[a * k + b] = spread[a] * p;
                    }
                }
                len *= k;
                spread[..len].copy_from_slice(&scratch[..len]);
            }
            for (n, v) in next.iter_mut().zip(&spread[..size]) {
                *n += v;
            }
        }
        tables[i - 1] = next;
    }
    Ok(ChainDistribution {
        k,
        l,
        times: grid.times().to_vec(),
        tables,
    })
}

/// `log p(x)` under the model reverse chain, summing over every latent
/// trajectory. Floored at `log(1e-300)` for impossible sequences.
pub fn exact_model_loglik(
    x: &[usize],
    grid: &StepGrid,
    schedule: GammaSchedule,
    lambda: &LambdaSchedule,
    prior: &Simplex,
    predictor: &dyn Predictor,
) -> Result<f64> {
    let k = prior.len();
    for &c in x {
        crate::kernel::check_index(c, k)?;
    }
    let chain = enumerate_reverse(grid, schedule, lambda, prior, predictor, k, x.len())?;
    let p = chain.final_distribution()[encode_joint(x, k)];
    Ok(libm::log(p.max(LOG_FLOOR)))
}

/// Expected number of state changes of one token, summed over every
/// trajectory of the reverse chain driven by a predictor returning `e_x`.
/// Cost is `K^(T+1)`.
pub fn enumerate_expected_transitions(
    grid: &StepGrid,
    lambda: f64,
    prior: &Simplex,
    x: usize,
    schedule: GammaSchedule,
) -> Result<f64> {
    enumerate_expected_transitions_with(grid, lambda, prior, x, schedule, &PosteriorWeights::new)
}

fn enumerate_expected_transitions_with(
    grid: &StepGrid,
    lambda: f64,
    prior: &Simplex,
    x: usize,
    schedule: GammaSchedule,
    weights_fn: &WeightsFn<'_>,
) -> Result<f64> {
    let k = prior.len();
    let steps = grid.steps();
    let trajectories = libm::pow(k as f64, steps as f64 + 1.0);
    if trajectories > 1e7 {
        return Err(Error::Capacity {
            states: trajectories as usize,
            limit: 10_000_000,
        });
    }
    // kernels[j] is the K x K transition of reverse step T - j
    let mut kernels = Vec::with_capacity(steps);
    for i in (1..=steps).rev() {
        let (s, t) = grid.step_bounds(i);
        let w = weights_fn(schedule.gamma_at(s)?, schedule.gamma_at(t)?, lambda)?;
        let mut m = vec![0.0; k * k];
        for from in 0..k {
            let row = posterior(&w, from, prior, x)?;
            m[from * k..(from + 1) * k].copy_from_slice(row.probs());
        }
        kernels.push(m);
    }

    fn walk(kernels: &[Vec<f64>], k: usize, state: usize, prob: f64, count: usize) -> f64 {
        match kernels.split_first() {
            None => prob * count as f64,
            Some((m, rest)) => {
                let mut acc = 0.0;
                for next in 0..k {
                    let p = m[state * k + next];
                    if p > 0.0 {
                        acc += walk(rest, k, next, prob * p, count + usize::from(next != state));
                    }
                }
                acc
            }
        }
    }

    let mut total = 0.0;
    for (start, &p) in prior.probs().iter().enumerate() {
        if p > 0.0 {
            total += walk(&kernels, k, start, p, 0);
        }
    }
    Ok(total)
}

/// Outcome of one verification check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub name: &'static str,
    /// Cases evaluated (including rejected ones).
    pub cases: usize,
    /// Cases refused with a documented domain/singularity error.
    pub rejected: usize,
    pub max_deviation: f64,
    pub threshold: f64,
    pub passed: bool,
    /// First unexpected error, if any.
    pub error: Option<String>,
}

/// Knobs shared by all checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    /// Random cases for the randomized checks.
    pub trials: usize,
    pub seed: u64,
    /// Largest alphabet drawn by the randomized checks.
    pub max_k: usize,
    /// Added to `w_stay` and removed from `w_flip` before use. Zero except
    /// when deliberately injecting a fault.
    pub weight_fault: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            trials: 10_000,
            seed: 0,
            max_k: 8,
            weight_fault: 0.0,
        }
    }
}

impl VerifyOptions {
    fn weights(&self, gamma_s: f64, gamma_t: f64, lambda: f64) -> Result<PosteriorWeights> {
        let w = PosteriorWeights::new(gamma_s, gamma_t, lambda)?;
        if self.weight_fault == 0.0 {
            return Ok(w);
        }
        Ok(PosteriorWeights::from_raw_unchecked(
            w.w_stay() + self.weight_fault,
            w.w_prior(),
            w.w_flip() - self.weight_fault,
            gamma_s,
            gamma_t,
        ))
    }
}

/// The verification checks, in the order they are reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Check {
    /// Sum-to-one and both marginal constraints on random weights.
    WeightConstraints,
    /// Composing the posterior with the marginal at `t` gives the marginal at `s`.
    MarginalConsistency,
    /// `posterior * m_t = forward * m_s`, plus the `lambda = 0, 1` closed forms.
    BayesForward,
    /// Closed-form transition count: linear in `lambda` and equal to trajectory enumeration.
    ExpectedTransitions,
    /// With an exact predictor the chain reproduces the data distribution at every step.
    FinalMarginal,
    /// With a perfect predictor every diffusion term vanishes for every `lambda`.
    ElboOptimum,
}

pub const ALL_CHECKS: [Check; 6] = [
    Check::WeightConstraints,
    Check::MarginalConsistency,
    Check::BayesForward,
    Check::ExpectedTransitions,
    Check::FinalMarginal,
    Check::ElboOptimum,
];

// Deterministic case grids for the structured checks.
const TRANSITION_KS: [usize; 2] = [2, 4];
const TRANSITION_STEPS: [usize; 2] = [2, 8];
const FINAL_KS: [usize; 3] = [2, 3, 4];
const FINAL_STEPS: usize = 6;
const FINAL_LAMBDAS: [f64; 3] = [0.0, 0.5, 1.0];
const OPTIMUM_LAMBDAS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

impl Check {
    pub fn name(&self) -> &'static str {
        match self {
            Check::WeightConstraints => "weight_constraints",
            Check::MarginalConsistency => "marginal_consistency",
            Check::BayesForward => "bayes_forward",
            Check::ExpectedTransitions => "expected_transitions",
            Check::FinalMarginal => "final_marginal",
            Check::ElboOptimum => "elbo_optimum",
        }
    }

    fn id(&self) -> u64 {
        *self as u64 + 1
    }

    /// Number of independent cases under `opts`.
    pub fn cases(&self, opts: &VerifyOptions) -> usize {
        match self {
            Check::WeightConstraints | Check::MarginalConsistency | Check::BayesForward => {
                opts.trials
            }
            // K, T, prior (uniform / skewed), rho (1 / 4); every x inside a case
            Check::ExpectedTransitions => TRANSITION_KS.len() * TRANSITION_STEPS.len() * 2 * 2,
            Check::FinalMarginal => FINAL_KS.len() * FINAL_STEPS * FINAL_LAMBDAS.len() * 2,
            Check::ElboOptimum => FINAL_KS.len() * FINAL_STEPS * OPTIMUM_LAMBDAS.len(),
        }
    }

    /// Deviation of case `index`; `Ok(None)` when the case was rejected by a
    /// documented precondition.
    pub fn run_case(&self, opts: &VerifyOptions, index: usize) -> Result<Option<f64>> {
        let mut rng = Rng::derive(opts.seed, component::ORACLE, self.id(), index as u64);
        let outcome = match self {
            Check::WeightConstraints => weight_case(opts, &mut rng),
            Check::MarginalConsistency => marginal_case(opts, index, None, &mut rng),
            Check::BayesForward => bayes_case(opts, index, None, &mut rng),
            Check::ExpectedTransitions => transitions_case(opts, index),
            Check::FinalMarginal => final_marginal_case(opts, index, &mut rng),
            Check::ElboOptimum => optimum_case(index, &mut rng),
        };
        match outcome {
            Ok(v) => Ok(Some(v)),
            Err(Error::Singularity(_)) | Err(Error::Ordering(_)) => Ok(None),
            Err(e) => Err(e),
        }
    }

    /// Runs every case in order.
    pub fn run(&self, opts: &VerifyOptions) -> CheckReport {
        let outcomes: Vec<Result<Option<f64>>> =
            (0..self.cases(opts)).map(|i| self.run_case(opts, i)).collect();
        self.report(opts, &outcomes)
    }

    /// Merges per-case outcomes into a report.
    pub fn report(&self, opts: &VerifyOptions, outcomes: &[Result<Option<f64>>]) -> CheckReport {
        let mut max_deviation: f64 = 0.0;
        let mut rejected = 0;
        let mut error = None;
        for o in outcomes {
            match o {
                Ok(Some(d)) => {
                    max_deviation = if d.is_nan() { f64::NAN } else { max_deviation.max(*d) }
                }
                Ok(None) => rejected += 1,
                Err(e) if error.is_none() => error = Some(alloc::format!("{e}")),
                Err(_) => {}
            }
        }
        let _ = opts;
        let passed = error.is_none()
            && max_deviation < ORACLE_TOLERANCE
            && rejected < outcomes.len().max(1);
        CheckReport {
            name: self.name(),
            cases: outcomes.len(),
            rejected,
            max_deviation,
            threshold: ORACLE_TOLERANCE,
            passed,
            error,
        }
    }
}

/// Runs all checks sequentially.
pub fn run_all(opts: &VerifyOptions) -> Vec<CheckReport> {
    ALL_CHECKS.iter().map(|c| c.run(opts)).collect()
}

/// Marginal consistency over `trials` random `(s, t, lambda, x)` tuples.
/// `prior = None` draws a random full-support prior (and `K <= max_k`) per trial.
pub fn check_marginal_consistency(
    prior: Option<&Simplex>,
    opts: &VerifyOptions,
) -> CheckReport {
    let c = Check::MarginalConsistency;
    let outcomes: Vec<_> = (0..opts.trials)
        .map(|i| {
            let mut rng = Rng::derive(opts.seed, component::ORACLE, c.id(), i as u64);
            match marginal_case(opts, i, prior, &mut rng) {
                Ok(v) => Ok(Some(v)),
                Err(Error::Singularity(_)) | Err(Error::Ordering(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();
    c.report(opts, &outcomes)
}

/// Forward/reverse joint-factorization identity over random tuples.
pub fn check_bayes_forward(prior: Option<&Simplex>, opts: &VerifyOptions) -> CheckReport {
    let c = Check::BayesForward;
    let outcomes: Vec<_> = (0..opts.trials)
        .map(|i| {
            let mut rng = Rng::derive(opts.seed, component::ORACLE, c.id(), i as u64);
            match bayes_case(opts, i, prior, &mut rng) {
                Ok(v) => Ok(Some(v)),
                Err(Error::Singularity(_)) | Err(Error::Ordering(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();
    c.report(opts, &outcomes)
}

fn random_prior(k: usize, rng: &mut Rng) -> Simplex {
    // entries in [0.02, 1.02) before normalization keep the support full
    let raw: Vec<f64> = (0..k).map(|_| 0.02 + rng.next_f64()).collect();
    let sum: f64 = raw.iter().sum();
    Simplex::new(raw.into_iter().map(|v| v / sum).collect()).expect("normalized")
}

struct Tuple {
    prior: Simplex,
    x: usize,
    s: f64,
    t: f64,
    lambda: f64,
}

fn random_tuple(opts: &VerifyOptions, index: usize, prior: Option<&Simplex>, rng: &mut Rng) -> Tuple {
    let prior = match prior {
        Some(p) => p.clone(),
        None => {
            let k = 2 + rng.below(opts.max_k.max(2) - 1);
            random_prior(k, rng)
        }
    };
    let x = rng.below(prior.len());
    // lambda endpoints appear explicitly, the rest uniform
    let lambda = match index % 4 {
        0 => 0.0,
        1 => 1.0,
        _ => rng.next_f64(),
    };
    let (s, t) = match index % 10 {
        // near-boundary times
        7 => {
            let t = 1.0 - 1e-9;
            (rng.uniform(0.0, t), t)
        }
        8 => {
            let t = 1e-9 + rng.next_f64() * 1e-6;
            (t * rng.next_f64(), t)
        }
        9 => {
            let t = rng.uniform(0.01, 1.0);
            (t - 1e-9, t)
        }
        _ => {
            let t = 1.0 - rng.next_f64(); // (0, 1]
            (t * rng.next_f64(), t)
        }
    };
    Tuple {
        prior,
        x,
        s,
        t,
        lambda,
    }
}

fn weight_case(opts: &VerifyOptions, rng: &mut Rng) -> Result<f64> {
    let gamma_t = rng.next_f64();
    let gamma_s = rng.uniform(gamma_t, 1.0);
    let w = opts.weights(gamma_s, gamma_t, rng.next_f64())?;
    let r = w.constraint_residuals();
    Ok(r[0].max(r[1]).max(r[2]))
}

fn marginal_case(
    opts: &VerifyOptions,
    index: usize,
    prior: Option<&Simplex>,
    rng: &mut Rng,
) -> Result<f64> {
    let tup = random_tuple(opts, index, prior, rng);
    let schedule = GammaSchedule::Linear;
    let gamma_s = schedule.gamma_at(tup.s)?;
    let gamma_t = schedule.gamma_at(tup.t)?;
    let w = opts.weights(gamma_s, gamma_t, tup.lambda)?;
    let k = tup.prior.len();
    let m_t = marginal(gamma_t, &tup.prior, tup.x)?;
    let m_s = marginal(gamma_s, &tup.prior, tup.x)?;
    let mut composed = vec![0.0; k];
    let mut row = vec![0.0; k];
    for x_t in 0..k {
        // raw mixture so corrupted weights are not renormalized away
        w.posterior_into(x_t, tup.prior.probs(), tup.x, &mut row);
        for (c, r) in composed.iter_mut().zip(&row) {
            *c += r * m_t.get(x_t);
        }
    }
    Ok(crate::kernel::max_abs_diff(&composed, m_s.probs()))
}

fn bayes_case(
    opts: &VerifyOptions,
    index: usize,
    prior: Option<&Simplex>,
    rng: &mut Rng,
) -> Result<f64> {
    let tup = random_tuple(opts, index, prior, rng);
    let schedule = GammaSchedule::Linear;
    let gamma_s = schedule.gamma_at(tup.s)?;
    let gamma_t = schedule.gamma_at(tup.t)?;
    let w = opts.weights(gamma_s, gamma_t, tup.lambda)?;
    let k = tup.prior.len();
    let m_t = marginal(gamma_t, &tup.prior, tup.x)?;
    let m_s = marginal(gamma_s, &tup.prior, tup.x)?;
    let fk = forward_kernel(&w, &tup.prior, tup.x, &m_t, &m_s)?;
    let mut row = vec![0.0; k];
    let mut dev: f64 = 0.0;
    for j in 0..k {
        w.posterior_into(j, tup.prior.probs(), tup.x, &mut row);
        for (i, &post) in row.iter().enumerate() {
            let lhs = post * m_t.get(j);
            let rhs = fk.prob(i, j) * m_s.get(i);
            dev = dev.max((lhs - rhs).abs());
        }
    }
    // closed forms at the endpoints
    if tup.lambda == 1.0 {
        for &a in fk.alpha() {
            dev = dev.max((a - 1.0).abs());
        }
    }
    if tup.lambda == 0.0 {
        let g = schedule.gamma_cond(tup.s, tup.t)?;
        let alpha_x = (1.0 - g) / ((1.0 - g) + g * m_t.get(tup.x));
        dev = dev.max((fk.alpha()[tup.x] - alpha_x).abs());
        for (i, &a) in fk.alpha().iter().enumerate() {
            if i != tup.x {
                dev = dev.max(a.abs());
            }
        }
    }
    Ok(dev)
}

fn skewed_prior(k: usize) -> Simplex {
    // q(i) proportional to 2^-i
    let raw: Vec<f64> = (0..k).map(|i| libm::pow(0.5, i as f64)).collect();
    let sum: f64 = raw.iter().sum();
    Simplex::new(raw.into_iter().map(|v| v / sum).collect()).expect("normalized")
}

fn transitions_case(opts: &VerifyOptions, index: usize) -> Result<f64> {
    let k = TRANSITION_KS[index % 2];
    let steps = TRANSITION_STEPS[(index / 2) % 2];
    let prior = if (index / 4) % 2 == 0 {
        Simplex::uniform(k)?
    } else {
        skewed_prior(k)
    };
    let rho = if (index / 8) % 2 == 0 { 1.0 } else { 4.0 };
    let grid = build_grid(steps, rho)?;
    let schedule = GammaSchedule::Linear;
    let weights_fn = |a, b, c| opts.weights(a, b, c);
    let mut dev: f64 = 0.0;
    for x in 0..k {
        let e0 = expected_transitions_exact(&grid, 0.0, &prior, x, schedule)?;
        let e1 = expected_transitions_exact(&grid, 1.0, &prior, x, schedule)?;
        let eh = expected_transitions_exact(&grid, 0.5, &prior, x, schedule)?;
        dev = dev.max((eh - 0.5 * (e0 + e1)).abs());
        for (lambda, exact) in [(0.0, e0), (0.5, eh), (1.0, e1)] {
            let brute =
                enumerate_expected_transitions_with(&grid, lambda, &prior, x, schedule, &weights_fn)?;
            dev = dev.max((brute - exact).abs());
        }
    }
    Ok(dev)
}

fn final_marginal_case(opts: &VerifyOptions, index: usize, rng: &mut Rng) -> Result<f64> {
    let k = FINAL_KS[index % FINAL_KS.len()];
    let rest = index / FINAL_KS.len();
    let steps = 1 + rest % FINAL_STEPS;
    let rest = rest / FINAL_STEPS;
    let lambda = FINAL_LAMBDAS[rest % FINAL_LAMBDAS.len()];
    let rho = if rest / FINAL_LAMBDAS.len() == 0 { 1.0 } else { 4.0 };
    let schedule = GammaSchedule::Linear;
    let grid = build_grid(steps, rho)?;
    let lam = LambdaSchedule::Constant(lambda);
    let weights_fn = |a, b, c| opts.weights(a, b, c);
    let mut dev: f64 = 0.0;

    // single token, random data distribution, Bayes-optimal predictor
    let prior = random_prior(k, rng);
    let data = random_prior(k, rng);
    let bayes = BayesPredictor::new(k, 1, data.probs().to_vec(), prior.clone(), schedule)?;
    let chain = enumerate_reverse_with(&grid, schedule, &lam, &prior, &bayes, k, 1, &weights_fn)?;
    for i in 0..=steps {
        let gamma = schedule.gamma_at(grid.time(i))?;
        let mut expected = vec![0.0; k];
        for (x, &px) in data.probs().iter().enumerate() {
            let m = marginal(gamma, &prior, x)?;
            for (e, v) in expected.iter_mut().zip(m.probs()) {
                *e += px * v;
            }
        }
        dev = dev.max(crate::kernel::max_abs_diff(chain.at(i), &expected));
    }

    // two tokens conditioned on a fixed clean pair: product of marginals at every step
    let target = vec![rng.below(k), rng.below(k)];
    let perfect = PerfectPredictor::new(k, target.clone())?;
    let chain = enumerate_reverse_with(&grid, schedule, &lam, &prior, &perfect, k, 2, &weights_fn)?;
    for i in 0..=steps {
        let gamma = schedule.gamma_at(grid.time(i))?;
        let m0 = marginal(gamma, &prior, target[0])?;
        let m1 = marginal(gamma, &prior, target[1])?;
        for a in 0..k {
            for b in 0..k {
                let p = chain.at(i)[encode_joint(&[a, b], k)];
                dev = dev.max((p - m0.get(a) * m1.get(b)).abs());
            }
        }
    }
    Ok(dev)
}

fn optimum_case(index: usize, rng: &mut Rng) -> Result<f64> {
    let k = FINAL_KS[index % FINAL_KS.len()];
    let rest = index / FINAL_KS.len();
    let steps = 1 + rest % FINAL_STEPS;
    let lambda = OPTIMUM_LAMBDAS[rest / FINAL_STEPS];
    let prior = random_prior(k, rng);
    let x = vec![rng.below(k), rng.below(k)];
    let perfect = PerfectPredictor::new(k, x.clone())?;
    let grid = build_grid(steps, 1.0)?;
    let report = elbo(
        &x,
        &grid,
        GammaSchedule::Linear,
        &LambdaSchedule::Constant(lambda),
        &prior,
        &perfect,
        &rng.substream(0),
        4,
    )?;
    let worst_term = report.diffusion_terms.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    Ok(worst_term.max(report.total.abs()))
}
