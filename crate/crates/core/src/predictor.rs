//! Anything that maps a noisy sequence `x_t` and time `t` to one predicted
//! clean-token distribution per position.

use alloc::vec;
use alloc::vec::Vec;

use crate::data::{decode_joint, joint_size};
use crate::error::{Error, Result};
use crate::kernel::{check_index, Simplex};
use crate::schedule::GammaSchedule;

pub trait Predictor {
    /// Alphabet size `K`.
    fn categories(&self) -> usize;

    /// Sequence length `L`.
    fn positions(&self) -> usize;

    /// Writes `L * K` probabilities, position-major, into `out`.
    fn predict_into(&self, x_t: &[usize], t: f64, out: &mut [f64]) -> Result<()>;

    fn predict(&self, x_t: &[usize], t: f64) -> Result<Vec<Simplex>> {
        let k = self.categories();
        let mut out = vec![0.0; k * self.positions()];
        self.predict_into(x_t, t, &mut out)?;
        out.chunks(k).map(|c| Simplex::new(c.to_vec())).collect()
    }
}

pub(crate) fn check_input(x_t: &[usize], k: usize, l: usize, out_len: usize) -> Result<()> {
    if x_t.len() != l {
        return Err(Error::Shape("sequence length does not match the predictor"));
    }
    if out_len != k * l {
        return Err(Error::Shape("output buffer must hold L * K values"));
    }
    for &c in x_t {
        check_index(c, k)?;
    }
    Ok(())
}

/// Always predicts the one-hot of a fixed clean sequence: the optimum of the
/// objective for data consisting of that sequence.
#[derive(Debug, Clone)]
pub struct PerfectPredictor {
    k: usize,
    target: Vec<usize>,
}

impl PerfectPredictor {
    pub fn new(k: usize, target: Vec<usize>) -> Result<Self> {
        if target.is_empty() {
            return Err(Error::Shape("target sequence is empty"));
        }
        for &c in &target {
            check_index(c, k)?;
        }
        Ok(Self { k, target })
    }

    pub fn target(&self) -> &[usize] {
        &self.target
    }
}

impl Predictor for PerfectPredictor {
    fn categories(&self) -> usize {
        self.k
    }

    fn positions(&self) -> usize {
        self.target.len()
    }

    fn predict_into(&self, x_t: &[usize], _t: f64, out: &mut [f64]) -> Result<()> {
        check_input(x_t, self.k, self.target.len(), out.len())?;
        out.fill(0.0);
        for (l, &c) in self.target.iter().enumerate() {
            out[l * self.k + c] = 1.0;
        }
        Ok(())
    }
}

/// Predicts the same distribution at every position regardless of input.
#[derive(Debug, Clone)]
pub struct ConstantPredictor {
    dist: Simplex,
    l: usize,
}

impl ConstantPredictor {
    pub fn new(dist: Simplex, l: usize) -> Self {
        Self { dist, l }
    }

    /// The uniform predictor, i.e. an untrained model with a zero output head.
    pub fn uniform(k: usize, l: usize) -> Result<Self> {
        Ok(Self::new(Simplex::uniform(k)?, l))
    }
}

impl Predictor for ConstantPredictor {
    fn categories(&self) -> usize {
        self.dist.len()
    }

    fn positions(&self) -> usize {
        self.l
    }

    fn predict_into(&self, x_t: &[usize], _t: f64, out: &mut [f64]) -> Result<()> {
        let k = self.dist.len();
        check_input(x_t, k, self.l, out.len())?;
        for chunk in out.chunks_mut(k) {
            chunk.copy_from_slice(self.dist.probs());
        }
        Ok(())
    }
}

/// Bayes-optimal per-position prediction `p(x^l | x_t)` for a known joint data
/// distribution `q0` under the interpolating marginals. With `L = 1` the
/// reverse chain driven by this predictor reproduces `q0` exactly.
#[derive(Debug, Clone)]
pub struct BayesPredictor {
    k: usize,
    l: usize,
    data: Vec<f64>,
    prior: Simplex,
    schedule: GammaSchedule,
}

impl BayesPredictor {
    /// `data` is the joint table over `K^L` states in mixed-radix order.
    pub fn new(
        k: usize,
        l: usize,
        data: Vec<f64>,
        prior: Simplex,
        schedule: GammaSchedule,
    ) -> Result<Self> {
        let n = joint_size(k, l)?;
        if data.len() != n {
            return Err(Error::Shape("joint table must have K^L entries"));
        }
        if prior.len() != k {
            return Err(Error::Shape("prior must have K entries"));
        }
        Simplex::new(data.clone())?;
        Ok(Self {
            k,
            l,
            data,
            prior,
            schedule,
        })
    }
}

impl Predictor for BayesPredictor {
    fn categories(&self) -> usize {
        self.k
    }

    fn positions(&self) -> usize {
        self.l
    }

    fn predict_into(&self, x_t: &[usize], t: f64, out: &mut [f64]) -> Result<()> {
        check_input(x_t, self.k, self.l, out.len())?;
        let gamma = self.schedule.gamma_at(t)?;
        let q = self.prior.probs();
        out.fill(0.0);
        let mut seq = vec![0usize; self.l];
        let mut total = 0.0;
        for (idx, &p0) in self.data.iter().enumerate() {
            if p0 == 0.0 {
                continue;
            }
            decode_joint(idx, self.k, &mut seq);
            // likelihood of x_t under the marginal at t given clean sequence `seq`
            let mut w = p0;
            for (&xt, &x) in x_t.iter().zip(&seq) {
                w *= (1.0 - gamma) * q[xt] + if xt == x { gamma } else { 0.0 };
            }
            if w == 0.0 {
                continue;
            }
            total += w;
            for (pos, &x) in seq.iter().enumerate() {
                out[pos * self.k + x] += w;
            }
        }
        if total > 0.0 {
            out.iter_mut().for_each(|v| *v /= total);
        } else {
            // x_t is impossible under the data; fall back to the prior.
            for chunk in out.chunks_mut(self.k) {
                chunk.copy_from_slice(q);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictor_is_one_hot() {
        let p = PerfectPredictor::new(3, vec![2, 0]).unwrap();
        let out = p.predict(&[1, 1], 0.4).unwrap();
        assert_eq!(out[0].probs(), &[0.0, 0.0, 1.0]);
        assert_eq!(out[1].probs(), &[1.0, 0.0, 0.0]);
        assert!(p.predict(&[1], 0.4).is_err());
        assert!(p.predict(&[1, 3], 0.4).is_err());
    }

    #[test]
    fn bayes_predictor_limits() {
        let prior = Simplex::uniform(2).unwrap();
        let b = BayesPredictor::new(2, 1, vec![0.3, 0.7], prior, GammaSchedule::Linear).unwrap();
        // at t = 1 the noisy token carries no information
        let at_one = b.predict(&[0], 1.0).unwrap();
        assert!((at_one[0].get(0) - 0.3).abs() < 1e-15);
        // at t = 0 it is the clean token
        let at_zero = b.predict(&[1], 0.0).unwrap();
        assert_eq!(at_zero[0].probs(), &[0.0, 1.0]);
        // t = 0.5, x_t = 0: p(x=0) prop. 0.3 * 0.75, p(x=1) prop. 0.7 * 0.25
        let mid = b.predict(&[0], 0.5).unwrap();
        let expect = 0.3 * 0.75 / (0.3 * 0.75 + 0.7 * 0.25);
        assert!((mid[0].get(0) - expect).abs() < 1e-15);
    }
}
