//! Ancestral generation with controllable resampling, transition counting, and
//! the closed-form expected number of transitions.
//!
//! Every position starts from the prior; reverse step `i = T..1` moves from
//! `t = t(i)` to `s = t(i-1)` and draws each position independently from
//! `w_stay e_{x_t} + w_prior q_1 + w_flip x_theta`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::kernel::{check_index, sample_with_uniform, PosteriorWeights, Simplex};
use crate::predictor::Predictor;
use crate::rng::{component, Rng};
use crate::schedule::{GammaSchedule, LambdaSchedule, StepGrid};

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub grid: StepGrid,
    pub schedule: GammaSchedule,
    pub lambda: LambdaSchedule,
    pub prior: Simplex,
    pub seed: u64,
}

impl SamplerConfig {
    pub fn new(
        grid: StepGrid,
        schedule: GammaSchedule,
        lambda: LambdaSchedule,
        prior: Simplex,
        seed: u64,
    ) -> Result<Self> {
        lambda.validate()?;
        Ok(Self {
            grid,
            schedule,
            lambda,
            prior,
            seed,
        })
    }

    /// Same configuration with a constant `lambda`.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        let mut c = self.clone();
        c.lambda = LambdaSchedule::constant(lambda)?;
        Ok(c)
    }

    /// Weights of reverse step `i` (from `t(i)` to `t(i-1)`).
    pub fn step_weights(&self, i: usize) -> Result<PosteriorWeights> {
        let (s, t) = self.grid.step_bounds(i);
        PosteriorWeights::new(
            self.schedule.gamma_at(s)?,
            self.schedule.gamma_at(t)?,
            self.lambda.lambda_at(t),
        )
    }
}

/// Recorded trajectory of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStats {
    /// `states[0]` is the prior draw at `t(T)`; `states[j]` follows reverse
    /// step `T + 1 - j`, so the last entry is the final sample.
    pub states: Vec<Vec<usize>>,
    /// Changed positions per reverse step, in generation order.
    pub transitions_per_step: Vec<usize>,
    /// Changes per position over the whole chain.
    pub transitions_per_position: Vec<usize>,
    pub total_transitions: usize,
}

/// Result of one generated chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    pub sample: Vec<usize>,
    /// Number of (step, position) pairs whose state changed.
    pub transitions: usize,
    pub stats: Option<TrajectoryStats>,
}

/// Generates chain `chain`. Step `i` draws from substream
/// `(seed, SAMPLE, chain, i)`; the initial prior draw uses step id 0.
pub fn sample_chain(
    config: &SamplerConfig,
    predictor: &dyn Predictor,
    chain: u64,
    record: bool,
) -> Result<ChainOutput> {
    let k = config.prior.len();
    let l = predictor.positions();
    if predictor.categories() != k {
        return Err(Error::Shape("predictor and prior have different K"));
    }
    let prior = config.prior.probs();
    let steps = config.grid.steps();

    let mut rng = Rng::derive(config.seed, component::SAMPLE, chain, 0);
    let mut x: Vec<usize> = (0..l)
        .map(|_| sample_with_uniform(prior, rng.next_f64()))
        .collect();

    let mut stats = record.then(|| TrajectoryStats {
        states: vec![x.clone()],
        transitions_per_step: Vec::with_capacity(steps),
        transitions_per_position: vec![0; l],
        total_transitions: 0,
    });

    let mut pred = vec![0.0; k * l];
    let mut row = vec![0.0; k];
    let mut next = vec![0usize; l];
    let mut transitions = 0;
    for i in (1..=steps).rev() {
        let t = config.grid.time(i);
        let weights = config.step_weights(i)?;
        predictor.predict_into(&x, t, &mut pred)?;
        let mut rng = Rng::derive(config.seed, component::SAMPLE, chain, i as u64);
        let mut changed = 0;
        for pos in 0..l {
            weights.mix_into(x[pos], prior, &pred[pos * k..(pos + 1) * k], &mut row);
            next[pos] = sample_with_uniform(&row, rng.next_f64());
            if next[pos] != x[pos] {
                changed += 1;
                if let Some(st) = stats.as_mut() {
                    st.transitions_per_position[pos] += 1;
                }
            }
        }
        core::mem::swap(&mut x, &mut next);
        transitions += changed;
        if let Some(st) = stats.as_mut() {
            st.states.push(x.clone());
            st.transitions_per_step.push(changed);
            st.total_transitions += changed;
        }
    }
    Ok(ChainOutput {
        sample: x,
        transitions,
        stats,
    })
}

/// Chain 0 of `config`.
pub fn sample(
    config: &SamplerConfig,
    predictor: &dyn Predictor,
    record: bool,
) -> Result<ChainOutput> {
    sample_chain(config, predictor, 0, record)
}

/// Chains `0..n`, in order.
pub fn sample_many(
    config: &SamplerConfig,
    predictor: &dyn Predictor,
    n: usize,
) -> Result<Vec<ChainOutput>> {
    (0..n as u64)
        .map(|c| sample_chain(config, predictor, c, false))
        .collect()
}

/// Total number of state changes in a recorded trajectory.
pub fn count_transitions(stats: &TrajectoryStats) -> usize {
    stats.transitions_per_step.iter().sum()
}

/// Closed-form `E[N_T]` for one token with clean value `x`, constant
/// `lambda`, and a predictor that returns `e_x`.
///
/// Per step, `x_t` is distributed as the marginal `m_t`, and
///
/// ```text
/// P(change | x_t = x)        = lambda (1 - gamma_s) (1 - q(x))
/// P(change | x_t = i != x)   = 1 - (1 - lambda) gamma_{s|t} - lambda (1 - gamma_s) q(i)
/// ```
///
/// The second branch depends on `q(i)`, so it is averaged over `m_t`
/// restricted to the states other than `x`.
pub fn expected_transitions_exact(
    grid: &StepGrid,
    lambda: f64,
    prior: &Simplex,
    x: usize,
    schedule: GammaSchedule,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Domain("lambda must lie in [0, 1]"));
    }
    let k = prior.len();
    check_index(x, k)?;
    let q = prior.probs();
    let mut total = 0.0;
    for i in 1..=grid.steps() {
        let (s, t) = grid.step_bounds(i);
        let gamma_s = schedule.gamma_at(s)?;
        let gamma_t = schedule.gamma_at(t)?;
        let gamma_cond = schedule.gamma_cond(s, t)?;

        let m_t_x = (1.0 - gamma_t) * q[x] + gamma_t;
        let p_change_at_x = lambda * (1.0 - gamma_s) * (1.0 - q[x]);

        // sum over i != x of m_t(i) P(change | x_t = i)
        let mut off = 0.0;
        for (j, &qj) in q.iter().enumerate() {
            if j == x {
                continue;
            }
            let m_t_j = (1.0 - gamma_t) * qj;
            let p_change = 1.0 - (1.0 - lambda) * gamma_cond - lambda * (1.0 - gamma_s) * qj;
            off += m_t_j * p_change;
        }
        total += p_change_at_x * m_t_x + off;
    }
    Ok(total)
}

/// One row of an empirical transition curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionPoint {
    pub lambda: f64,
    /// Mean transitions per chain (summed over positions).
    pub mean: f64,
    pub std_error: f64,
}

/// Mean transitions per chain for each `lambda`, over chains `0..n_chains`.
/// Chain seeds are shared across `lambda` values.
pub fn empirical_transition_curve(
    template: &SamplerConfig,
    predictor: &dyn Predictor,
    lambdas: &[f64],
    n_chains: usize,
) -> Result<Vec<TransitionPoint>> {
    if n_chains == 0 {
        return Err(Error::Domain("need at least one chain"));
    }
    lambdas
        .iter()
        .map(|&lambda| {
            let config = template.with_lambda(lambda)?;
            let counts = (0..n_chains as u64)
                .map(|c| sample_chain(&config, predictor, c, false).map(|o| o.transitions as f64))
                .collect::<Result<Vec<f64>>>()?;
            Ok(transition_point(lambda, &counts))
        })
        .collect()
}

/// Mean and standard error of per-chain transition counts.
pub fn transition_point(lambda: f64, counts: &[f64]) -> TransitionPoint {
    let n = counts.len() as f64;
    let mean = counts.iter().sum::<f64>() / n;
    let var = if counts.len() > 1 {
        counts.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    TransitionPoint {
        lambda,
        mean,
        std_error: libm::sqrt(var / n),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::{ConstantPredictor, PerfectPredictor};
    use crate::schedule::build_grid;

    fn config(steps: usize, rho: f64, lambda: f64, k: usize, seed: u64) -> SamplerConfig {
        SamplerConfig::new(
            build_grid(steps, rho).unwrap(),
            GammaSchedule::Linear,
            LambdaSchedule::constant(lambda).unwrap(),
            Simplex::uniform(k).unwrap(),
            seed,
        )
        .unwrap()
    }

    #[test]
    fn single_step_draws_from_prediction() {
        // T = 1: gamma_{0|1} = 0 so w_stay = 0 and, at lambda = 0, w_flip = 1
        let c = config(1, 1.0, 0.0, 3, 9);
        let w = c.step_weights(1).unwrap();
        assert_eq!((w.w_stay(), w.w_prior(), w.w_flip()), (0.0, 0.0, 1.0));
        let p = ConstantPredictor::new(Simplex::one_hot(3, 2).unwrap(), 4);
        let out = sample(&c, &p, false).unwrap();
        assert_eq!(out.sample, vec![2; 4]);
    }

    #[test]
    fn full_resampling_ends_at_prediction() {
        let c = config(5, 2.0, 1.0, 4, 1);
        let p = ConstantPredictor::new(Simplex::one_hot(4, 1).unwrap(), 3);
        for chain in 0..20 {
            assert_eq!(sample_chain(&c, &p, chain, false).unwrap().sample, vec![1; 3]);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let c = config(8, 4.0, 0.3, 3, 42);
        let p = ConstantPredictor::uniform(3, 5).unwrap();
        let a = sample_chain(&c, &p, 3, true).unwrap();
        let b = sample_chain(&c, &p, 3, true).unwrap();
        assert_eq!(a, b);
        let other = sample_chain(&c, &p, 4, true).unwrap();
        assert_ne!(a.stats.unwrap().states, other.stats.unwrap().states);
    }

    #[test]
    fn recorded_stats_are_consistent() {
        let c = config(10, 1.0, 0.7, 4, 5);
        let p = ConstantPredictor::uniform(4, 3).unwrap();
        for chain in 0..20 {
            let out = sample_chain(&c, &p, chain, true).unwrap();
            let st = out.stats.unwrap();
            assert_eq!(st.states.len(), 11);
            assert_eq!(st.states.last().unwrap(), &out.sample);
            assert_eq!(count_transitions(&st), st.total_transitions);
            assert_eq!(st.total_transitions, out.transitions);
            assert_eq!(st.transitions_per_position.iter().sum::<usize>(), out.transitions);
            assert!(st.transitions_per_step.iter().all(|&c| c <= 3));
            // independent recount from the snapshots
            let recount: usize = st
                .states
                .windows(2)
                .map(|w| w[0].iter().zip(&w[1]).filter(|(a, b)| a != b).count())
                .sum();
            assert_eq!(recount, st.total_transitions);
        }
    }

    #[test]
    fn count_transitions_examples() {
        let constant = TrajectoryStats {
            states: vec![vec![1], vec![1], vec![1]],
            transitions_per_step: vec![0, 0],
            transitions_per_position: vec![0],
            total_transitions: 0,
        };
        assert_eq!(count_transitions(&constant), 0);
        let flip = TrajectoryStats {
            states: vec![vec![0], vec![1], vec![0]],
            transitions_per_step: vec![1, 1],
            transitions_per_position: vec![2],
            total_transitions: 2,
        };
        assert_eq!(count_transitions(&flip), 2);
    }

    #[test]
    fn absorbing_chain_flips_at_most_once() {
        let c = config(6, 1.0, 0.0, 4, 77);
        let p = PerfectPredictor::new(4, vec![2]).unwrap();
        for chain in 0..200 {
            let out = sample_chain(&c, &p, chain, true).unwrap();
            let st = out.stats.unwrap();
            assert_eq!(out.sample, vec![2]);
            let expected = usize::from(st.states[0][0] != 2);
            assert_eq!(out.transitions, expected);
        }
    }

    #[test]
    fn expected_transitions_branches() {
        let prior = Simplex::uniform(3).unwrap();
        let grid = build_grid(4, 1.0).unwrap();
        // lambda = 0 with a one-hot prior at x: every x_t is x, nothing moves
        let point = Simplex::one_hot(3, 1).unwrap();
        assert_eq!(
            expected_transitions_exact(&grid, 0.0, &point, 1, GammaSchedule::Linear).unwrap(),
            0.0
        );
        let e0 = expected_transitions_exact(&grid, 0.0, &prior, 0, GammaSchedule::Linear).unwrap();
        let e1 = expected_transitions_exact(&grid, 1.0, &prior, 0, GammaSchedule::Linear).unwrap();
        let eh = expected_transitions_exact(&grid, 0.5, &prior, 0, GammaSchedule::Linear).unwrap();
        assert!((eh - 0.5 * (e0 + e1)).abs() < 1e-12);
        // at lambda = 0 the count is the probability the prior draw misses x
        assert!((e0 - 2.0 / 3.0).abs() < 1e-12);
        assert!(e1 > e0);
    }

    #[test]
    fn curve_has_one_row_per_lambda() {
        let c = config(4, 1.0, 0.0, 2, 0);
        let p = PerfectPredictor::new(2, vec![0]).unwrap();
        let curve = empirical_transition_curve(&c, &p, &[0.5], 10).unwrap();
        assert_eq!(curve.len(), 1);
        assert_eq!(curve[0].lambda, 0.5);
        assert!(empirical_transition_curve(&c, &p, &[0.5], 0).is_err());
    }
}
